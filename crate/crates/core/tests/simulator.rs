use std::sync::Arc;

use rssac::controller::RssacConfig;
use rssac::datasets::parse_trajectory_file;
use rssac::predictor::{PredictorConfig, PredictorKind};
use rssac::sim::*;
use rssac::Vec2;

fn rssac_controller(sigma: f64) -> RssacController {
    RssacController::new(RssacConfig {
        sigma,
        ..RssacConfig::default()
    })
    .unwrap()
}

fn zero_controller() -> ZeroController {
    let config = RssacConfig::default();
    ZeroController {
        grid: config.grid,
        replan: config.replan_cells(),
    }
}

fn fixture() -> Arc<rssac::datasets::TrajectoryDataset> {
    let text = std::fs::read_to_string(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/tests/data/crossing.txt"
    ))
    .unwrap();
    Arc::new(parse_trajectory_file(&text).unwrap())
}

#[test]
fn empty_scene_reaches_the_goal() {
    let scenario =
        static_field_from(Vec::new(), Vec2::new(0.0, 0.0), Vec2::new(0.0, 5.0), 10.0).unwrap();
    let e = run_episode(&scenario, &rssac_controller(0.0), 1).unwrap();
    assert!(e.failed.is_none());
    assert_eq!(e.min_distance, None);
    assert!(!e.collided);
    assert!(
        e.normalized_goal_distance < 0.1,
        "{}",
        e.normalized_goal_distance
    );
    let goal = scenario.goal;
    let at = |t: usize| (e.log[t].robot.position - goal).norm();
    assert!(at(100) < at(0) && at(250) < at(100) && at(400) < at(250));
}

#[test]
fn far_static_field_clearance_is_geometric() {
    let humans: Vec<HumanAgent> = [(3.0, -2.0), (-4.0, 1.0), (3.5, 4.0)]
        .iter()
        .enumerate()
        .map(|(i, &(x, y))| HumanAgent {
            id: i as u32,
            start: Vec2::new(x, y),
            goal: None,
            motion: HumanMotion::Static,
            velocity_known: false,
        })
        .collect();
    let scenario =
        static_field_from(humans, Vec2::new(0.0, -6.0), Vec2::new(0.0, 6.0), 14.0).unwrap();
    let e = run_episode(&scenario, &rssac_controller(0.0), 3).unwrap();
    // closest approach of the segment x = 0, y ∈ [−6, 6] to the field
    let clearance = 3.0;
    let d = e.min_distance.unwrap();
    assert!((d - clearance).abs() <= 0.1, "{d}");
}

#[test]
fn episodes_repeat_exactly() {
    let scenario = intersection_scenario(&IntersectionParams::default()).unwrap();
    let c = rssac_controller(0.5);
    let a = run_episode(&scenario, &c, 42).unwrap();
    let b = run_episode(&scenario, &c, 42).unwrap();
    assert_eq!(a, b);
    let c = run_episode(&scenario, &c, 43).unwrap();
    assert_ne!(a.log, c.log);
}

#[test]
fn noiseless_human_hits_a_passive_robot() {
    let params = IntersectionParams {
        human_covariance: [[0.0, 0.0], [0.0, 0.0]],
        ..IntersectionParams::default()
    };
    let scenario = intersection_scenario(&params).unwrap();
    let e = run_episode(&scenario, &zero_controller(), 0).unwrap();
    assert!(e.collided);
    assert!(e.min_distance.unwrap() < COLLISION_THRESHOLD);
    // at t = 5 s the robot is at the origin and the human, after 12 jumps,
    // 0.2 m short of it
    let log = &e.log[250];
    assert!(log.robot.position.norm() < 1e-9);
    assert!((log.humans[0].position - Vec2::new(-0.2, 0.0)).norm() < 1e-9);
}

#[test]
fn collision_flag_matches_the_threshold() {
    let scenario = intersection_scenario(&IntersectionParams::default()).unwrap();
    for seed in 0..4 {
        let e = run_episode(&scenario, &zero_controller(), seed).unwrap();
        let min = e
            .log
            .iter()
            .flat_map(|l| {
                l.humans
                    .iter()
                    .map(move |h| (l.robot.position - h.position).norm())
            })
            .fold(f64::INFINITY, f64::min);
        assert_eq!(e.min_distance, Some(min));
        assert_eq!(e.collided, min < COLLISION_THRESHOLD);
        assert!(e.normalized_goal_distance >= 0.0);
    }
}

#[test]
fn benchmark_matches_a_sequential_rerun() {
    let scenario = static_field_scenario(8).unwrap();
    let options = BenchmarkOptions {
        runs: 3,
        master_seed: 5,
        goal_radius: 1.0,
    };
    let nominal = RssacController::nominal_only(RssacConfig::default()).unwrap();
    let zero = zero_controller();
    let report = run_benchmark(&scenario, &[&nominal, &zero], &options).unwrap();
    let controllers: [&dyn Controller; 2] = [&nominal, &zero];
    for (c, controller) in controllers.iter().enumerate() {
        let episodes: Vec<EpisodeResult> = (0..options.runs)
            .map(|run| {
                let s = scenario.with_goal(options.run_goal(&scenario, run));
                run_episode(&s, *controller, options.run_seed(run)).unwrap()
            })
            .collect();
        assert_eq!(report.episodes[c], episodes);
        let mean = episodes
            .iter()
            .map(|e| e.normalized_goal_distance)
            .sum::<f64>()
            / 3.0;
        let stats = &report.stats[c];
        assert!((stats.normalized_goal_distance.mean - mean).abs() < 1e-12);
        for e in &episodes {
            assert!((e.goal - scenario.goal).norm() <= 1.0);
        }
    }
}

#[test]
fn single_run_has_zero_spread() {
    let scenario = intersection_scenario(&IntersectionParams::default()).unwrap();
    let options = BenchmarkOptions {
        runs: 1,
        master_seed: 0,
        goal_radius: 0.0,
    };
    let report = run_benchmark(&scenario, &[&zero_controller()], &options).unwrap();
    for (metric, stat) in report.stats[0].rows() {
        if metric != "cycle_time" {
            assert_eq!(stat.std, 0.0, "{metric}");
            assert_eq!(stat.n, 1);
        }
    }
}

#[test]
fn replay_with_a_fixed_goal_is_seed_independent() {
    let predictor = PredictorConfig {
        kind: PredictorKind::Replay,
        ..PredictorConfig::default()
    };
    let scenario = dataset_replay_scenario(
        fixture(),
        2,
        Vec2::new(0.0, -5.0),
        Vec2::new(0.0, 5.0),
        10.0,
        predictor,
    )
    .unwrap();
    let options = BenchmarkOptions {
        runs: 3,
        master_seed: 8,
        goal_radius: 0.0,
    };
    let c = rssac_controller(1.0);
    let report = run_benchmark(&scenario, &[&c], &options).unwrap();
    let runs = &report.episodes[0];
    for e in &runs[1..] {
        assert_eq!(e.log, runs[0].log);
        assert_eq!(e.min_distance, runs[0].min_distance);
    }
    let e = &runs[0];
    assert!(e.failed.is_none());
    assert!(e.yielded.is_none());
    assert!(
        e.normalized_goal_distance < 0.2,
        "{}",
        e.normalized_goal_distance
    );
    // pedestrian 3 enters the recording at frame 5 and is tracked once it
    // has two frames of history
    assert_eq!(e.log[0].humans.len(), 3);
    assert_eq!(e.log[60].humans.len(), 3);
    assert_eq!(e.log[80].humans.len(), 4);
}

#[test]
fn exhaustive_search_counts_and_runs() {
    let search = ExhaustiveTreeSearch::new(RssacConfig {
        samples: 4,
        ..RssacConfig::default()
    })
    .unwrap();
    assert_eq!(search.actions().len(), 9);
    assert_eq!(search.sequences_evaluated(), 6561);
    assert_eq!(search.replan_cells(), 20);
    let scenario = IntersectionParams {
        duration: 1.2,
        ..IntersectionParams::default()
    };
    let e = run_episode(&intersection_scenario(&scenario).unwrap(), &search, 0).unwrap();
    assert!(e.failed.is_none());
    assert_eq!(e.cycle_times.len(), 3);
}

#[test]
fn nominal_only_is_deterministic_and_idle_on_reference() {
    let c = RssacController::nominal_only(RssacConfig::default()).unwrap();
    let scenario = intersection_scenario(&IntersectionParams::default()).unwrap();
    assert_eq!(
        run_episode(&scenario, &c, 9).unwrap(),
        run_episode(&scenario, &c, 9).unwrap()
    );

    let params = IntersectionParams {
        robot_start: Vec2::new(0.0, 0.0),
        robot_velocity: Vec2::new(0.0, 1.0),
        robot_goal: Vec2::new(0.0, 20.0),
        duration: 2.0,
        ..IntersectionParams::default()
    };
    let empty = static_field_from(
        Vec::new(),
        params.robot_start,
        params.robot_goal,
        params.duration,
    )
    .unwrap();
    let empty = Scenario {
        robot: rssac::dynamics::RobotState::new(params.robot_start, params.robot_velocity),
        ..empty
    };
    let e = run_episode(&empty, &c, 0).unwrap();
    for l in &e.log {
        assert!(l.control.norm() < 1e-12, "{:?}", l.control);
    }
}
