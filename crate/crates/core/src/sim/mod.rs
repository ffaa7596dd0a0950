//! Closed-loop crowd navigation simulator.

mod bench;
mod controllers;
mod episode;
mod scenario;

pub use bench::{
    run_benchmark, run_sweep, BenchmarkOptions, BenchmarkReport, ControllerStats, Stat,
    SweepParameter, SweepPoint,
};
pub use controllers::{
    Controller, ExhaustiveTreeSearch, PlanContext, RssacController, ZeroController,
};
pub use episode::{run_episode, EpisodeResult, LogEntry};
pub use scenario::{
    dataset_replay_scenario, intersection_scenario, static_field_from, static_field_scenario,
    Crowd, HumanAgent, HumanMotion, IntersectionParams, Scenario, ScenarioKind,
    COLLISION_THRESHOLD,
};
