//! Pedestrian trajectory files and replayable scene windows.
//!
//! The text format is one observation per line, whitespace separated:
//!
//! ```text
//! # frame ped_id x y
//! 0 1 0.0 0.0
//! 1 1 0.4 0.0
//! ```
//!
//! Lines starting with `#` are comments, except `# frame_dt = <seconds>`,
//! which declares the frame interval. Only 0.4 s frames are accepted.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::predictor::HumanObservation;
use crate::{Error, Result, Vec2};

/// The only frame interval the planner's observation clock supports.
pub const FRAME_DT: f64 = 0.4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryRecord {
    pub frame: i64,
    pub ped_id: u32,
    pub position: Vec2,
}

/// Parsed pedestrian tracks, indexed by pedestrian and frame.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrajectoryDataset {
    tracks: BTreeMap<u32, BTreeMap<i64, Vec2>>,
}

impl TrajectoryDataset {
    pub fn from_records(records: impl IntoIterator<Item = TrajectoryRecord>) -> Result<Self> {
        let mut ds = Self::default();
        for (i, r) in records.into_iter().enumerate() {
            ds.insert(r, i + 1)?;
        }
        Ok(ds)
    }

    fn insert(&mut self, r: TrajectoryRecord, line: usize) -> Result<()> {
        if !(r.position.x.is_finite() && r.position.y.is_finite()) {
            return Err(Error::Parse {
                line,
                reason: "non-finite position".into(),
            });
        }
        let track = self.tracks.entry(r.ped_id).or_default();
        if track.insert(r.frame, r.position).is_some() {
            return Err(Error::Parse {
                line,
                reason: format!(
                    "duplicate record for frame {} pedestrian {}",
                    r.frame, r.ped_id
                ),
            });
        }
        Ok(())
    }

    pub fn frame_dt(&self) -> f64 {
        FRAME_DT
    }

    pub fn len(&self) -> usize {
        self.tracks.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.tracks.is_empty()
    }

    pub fn pedestrians(&self) -> impl Iterator<Item = u32> + '_ {
        self.tracks.keys().copied()
    }

    pub fn track(&self, ped_id: u32) -> Option<&BTreeMap<i64, Vec2>> {
        self.tracks.get(&ped_id)
    }

    pub fn position(&self, frame: i64, ped_id: u32) -> Option<Vec2> {
        self.tracks.get(&ped_id)?.get(&frame).copied()
    }

    /// Records ordered by frame, then pedestrian id.
    pub fn records(&self) -> Vec<TrajectoryRecord> {
        let mut out: Vec<_> = self
            .tracks
            .iter()
            .flat_map(|(&ped_id, track)| {
                track
                    .iter()
                    .map(move |(&frame, &position)| TrajectoryRecord {
                        frame,
                        ped_id,
                        position,
                    })
            })
            .collect();
        out.sort_by_key(|r| (r.frame, r.ped_id));
        out
    }

    /// First and last frame present, if any.
    pub fn frame_range(&self) -> Option<(i64, i64)> {
        let first = self.tracks.values().filter_map(|t| t.keys().next()).min()?;
        let last = self
            .tracks
            .values()
            .filter_map(|t| t.keys().next_back())
            .max()?;
        Some((*first, *last))
    }

    /// Axis-aligned bounding box `(min, max)` of all positions.
    pub fn bounds(&self) -> Option<(Vec2, Vec2)> {
        let mut it = self.tracks.values().flat_map(|t| t.values());
        let first = *it.next()?;
        Some(it.fold((first, first), |(lo, hi), p| (lo.inf(p), hi.sup(p))))
    }
}

fn parse_number<T: std::str::FromStr>(token: &str, what: &str, line: usize) -> Result<T> {
    token.parse().map_err(|_| Error::Parse {
        line,
        reason: format!("cannot parse {what} from `{token}`"),
    })
}

/// Integer column that may be written as an integral float (`780.0`).
fn parse_integral(token: &str, what: &str, line: usize) -> Result<f64> {
    let value: f64 = parse_number(token, what, line)?;
    if !value.is_finite() || value.fract() != 0.0 {
        return Err(Error::Parse {
            line,
            reason: format!("{what} must be an integer, got `{token}`"),
        });
    }
    Ok(value)
}

fn parse_directive(comment: &str, line: usize) -> Result<()> {
    let Some((key, value)) = comment.split_once('=') else {
        return Ok(());
    };
    if key.trim() != "frame_dt" {
        return Ok(());
    }
    let dt: f64 = parse_number(value.trim(), "frame_dt", line)?;
    if (dt - FRAME_DT).abs() > 1e-9 {
        return Err(Error::Parse {
            line,
            reason: format!("frame interval {dt} s is unsupported; resample to {FRAME_DT} s"),
        });
    }
    Ok(())
}

pub fn parse_trajectory_file(text: &str) -> Result<TrajectoryDataset> {
    let mut ds = TrajectoryDataset::default();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(comment) = trimmed.strip_prefix('#') {
            parse_directive(comment, line)?;
            continue;
        }
        let cols: Vec<&str> = trimmed.split_whitespace().collect();
        if cols.len() != 4 {
            return Err(Error::Parse {
                line,
                reason: format!(
                    "expected 4 columns (frame ped_id x y), found {}",
                    cols.len()
                ),
            });
        }
        let frame = parse_integral(cols[0], "frame", line)?;
        let ped = parse_integral(cols[1], "pedestrian id", line)?;
        if ped < 0.0 || ped > u32::MAX as f64 {
            return Err(Error::Parse {
                line,
                reason: format!("pedestrian id {ped} out of range"),
            });
        }
        let x: f64 = parse_number(cols[2], "x", line)?;
        let y: f64 = parse_number(cols[3], "y", line)?;
        ds.insert(
            TrajectoryRecord {
                frame: frame as i64,
                ped_id: ped as u32,
                position: Vec2::new(x, y),
            },
            line,
        )?;
    }
    Ok(ds)
}

/// Canonical text: the frame interval directive, then records ordered by
/// frame and pedestrian with shortest round-trip number formatting.
pub fn serialize(ds: &TrajectoryDataset) -> String {
    let mut out = format!("# frame_dt = {FRAME_DT}\n");
    for r in ds.records() {
        let _ = writeln!(
            out,
            "{} {} {} {}",
            r.frame, r.ped_id, r.position.x, r.position.y
        );
    }
    out
}

/// Pedestrians present at `frame` with at least two observations of
/// history. Histories hold up to `history_len` contiguous frames ending at
/// `frame`; futures hold exactly `future_len` positions for the following
/// frames, repeating the last known position once the track ends or skips
/// a frame.
pub fn scene_window(
    ds: &TrajectoryDataset,
    frame: i64,
    history_len: usize,
    future_len: usize,
) -> Vec<HumanObservation> {
    let mut out = Vec::new();
    for (&id, track) in &ds.tracks {
        if !track.contains_key(&frame) {
            continue;
        }
        let mut history: Vec<Vec2> = (0..history_len as i64)
            .map_while(|back| track.get(&(frame - back)).copied())
            .collect();
        if history.len() < 2 {
            continue;
        }
        history.reverse();
        let mut last = history[history.len() - 1];
        let mut ended = false;
        let future = (1..=future_len as i64)
            .map(|ahead| {
                if !ended {
                    match track.get(&(frame + ahead)) {
                        Some(p) => last = *p,
                        None => ended = true,
                    }
                }
                last
            })
            .collect();
        out.push(HumanObservation {
            id,
            history,
            mean_velocity: None,
            future: Some(future),
        });
    }
    out
}
