//! Episode traces: one file per episode, one JSON object per line. The first
//! line is a header carrying episode-level references (goals, start
//! geodesics); every following line is one tick. Traces carry enough to
//! rebuild the metric inputs exactly, which the harness uses as a
//! cross-check on reported numbers.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::env::{RewardTerms, StepResult, SUCCESS_REWARD};
use crate::error::{Result, SimError};
use crate::metrics::{EpisodeRecord, RobotEpisodeRecord};

pub const TRACE_SCHEMA: &str = "navtrace-v1";

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceHeader {
    pub schema: String,
    pub scene_seed: u64,
    pub episode_seed: u64,
    pub n_robots: usize,
    pub n_humans: usize,
    pub goals: Vec<(f64, f64)>,
    pub start_geodesics: Vec<f64>,
    /// (x, y, heading) per robot before the first tick; anchors path-length
    /// recovery when the opening action is a blocked Forward.
    pub spawn_poses: Vec<(f64, f64, f64)>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceStep {
    pub t: usize,
    /// (x, y, heading) per robot, after the tick.
    pub robot_poses: Vec<(f64, f64, f64)>,
    pub human_positions: Vec<(f64, f64)>,
    /// Action id per robot; None once a robot is done.
    pub actions: Vec<Option<u8>>,
    pub rewards: Vec<RewardTerms>,
    /// None when the scene has no humans (distance would be infinite,
    /// which JSON cannot carry).
    pub min_human_dist: Vec<Option<f64>>,
}

pub struct TraceWriter {
    out: BufWriter<File>,
}

impl TraceWriter {
    pub fn create(path: &Path, header: &TraceHeader) -> Result<TraceWriter> {
        let mut out = BufWriter::new(File::create(path)?);
        serde_json::to_writer(&mut out, header).map_err(|e| SimError::Trace(e.to_string()))?;
        out.write_all(b"\n")?;
        Ok(TraceWriter { out })
    }

    pub fn append(&mut self, step: &TraceStep) -> Result<()> {
        serde_json::to_writer(&mut self.out, step).map_err(|e| SimError::Trace(e.to_string()))?;
        self.out.write_all(b"\n")?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush()?;
        Ok(())
    }
}

/// Builds the step record for one env tick from its result.
pub fn trace_step(
    t: usize,
    poses: Vec<(f64, f64, f64)>,
    human_positions: Vec<(f64, f64)>,
    actions: &[Option<crate::env::Action>],
    result: &StepResult,
) -> TraceStep {
    TraceStep {
        t,
        robot_poses: poses,
        human_positions,
        actions: actions.iter().map(|a| a.map(|a| a.id())).collect(),
        rewards: result.rewards.clone(),
        min_human_dist: result
            .info
            .iter()
            .map(|i| i.min_human_dist.is_finite().then_some(i.min_human_dist))
            .collect(),
    }
}

pub fn read_trace(path: &Path) -> Result<(TraceHeader, Vec<TraceStep>)> {
    let file = BufReader::new(File::open(path)?);
    let mut lines = file.lines();
    let header_line = lines
        .next()
        .ok_or_else(|| SimError::Trace(format!("{}: empty trace", path.display())))??;
    let header: TraceHeader = serde_json::from_str(&header_line)
        .map_err(|e| SimError::Trace(format!("{}: bad header: {e}", path.display())))?;
    if header.schema != TRACE_SCHEMA {
        return Err(SimError::Trace(format!(
            "{}: schema {:?}, expected {TRACE_SCHEMA:?}",
            path.display(),
            header.schema
        )));
    }
    let mut steps = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let step: TraceStep = serde_json::from_str(&line)
            .map_err(|e| SimError::Trace(format!("{}: line {}: {e}", path.display(), i + 2)))?;
        if step.robot_poses.len() != header.n_robots
            || step.actions.len() != header.n_robots
            || step.rewards.len() != header.n_robots
        {
            return Err(SimError::Trace(format!(
                "{}: line {}: robot count mismatch",
                path.display(),
                i + 2
            )));
        }
        steps.push(step);
    }
    Ok((header, steps))
}

/// Rebuilds the per-robot metric inputs from a trace. Path length is
/// recovered by counting Forward ticks that actually moved the robot, so
/// the result matches the in-env accounting bit for bit.
pub fn episode_record_from_trace(
    header: &TraceHeader,
    steps: &[TraceStep],
) -> Result<EpisodeRecord> {
    let n = header.n_robots;
    if header.start_geodesics.len() != n || header.goals.len() != n || header.spawn_poses.len() != n
    {
        return Err(SimError::Trace("header arity mismatch".into()));
    }
    let mut robots = Vec::with_capacity(n);
    for i in 0..n {
        let mut forwards_moved = 0usize;
        let mut steps_total = 0usize;
        let mut steps_close = 0usize;
        let mut human_collided = false;
        let mut success = false;
        let mut prev_pos = (header.spawn_poses[i].0, header.spawn_poses[i].1);
        for step in steps {
            let pose = step.robot_poses[i];
            let pos = (pose.0, pose.1);
            if let Some(action) = step.actions[i] {
                steps_total += 1;
                if action == crate::env::Action::Forward.id() {
                    // A blocked forward leaves the coordinates bitwise
                    // unchanged; any real move changes them.
                    if prev_pos != pos {
                        forwards_moved += 1;
                    }
                }
                if let Some(d) = step.min_human_dist[i] {
                    if d < crate::env::PSC_RADIUS {
                        steps_close += 1;
                    }
                    if d < crate::env::HUMAN_COLLISION_DIST {
                        human_collided = true;
                    }
                }
                if step.rewards[i].r_succ == SUCCESS_REWARD {
                    success = true;
                }
            }
            prev_pos = pos;
        }
        robots.push(RobotEpisodeRecord {
            success,
            start_geodesic: header.start_geodesics[i],
            path_length: forwards_moved as f64 * crate::env::FORWARD_STEP,
            steps_total,
            steps_close,
            human_collided,
        });
    }
    Ok(EpisodeRecord { robots })
}
