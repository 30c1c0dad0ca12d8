//! Episode state machine: robot kinematics, step ordering, reward assembly,
//! observation rendering, and episode bookkeeping for the metric suite.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::geodesic::GeodesicField;
use crate::metrics::{EpisodeRecord, RobotEpisodeRecord};
use crate::raycast::{raycast_depth, AgentDisc, FOV, MAX_RANGE};
use crate::scene::{Scene, HUMAN_RADIUS, ROBOT_RADIUS};
use crate::seeding;
use crate::social::{social_force_step, HumanState};

pub const DT: f64 = 0.25;
pub const MAX_EPISODE_STEPS: usize = 200;
pub const FORWARD_STEP: f64 = 0.25;
pub const TURN_ANGLE: f64 = std::f64::consts::FRAC_PI_6;
pub const SUCCESS_RADIUS: f64 = 0.3;
pub const HUMAN_COLLISION_DIST: f64 = ROBOT_RADIUS + HUMAN_RADIUS;
pub const PSC_RADIUS: f64 = 1.0;
pub const SUCCESS_REWARD: f64 = 2.5;
pub const STATIC_COLLISION_PENALTY: f64 = 0.05;
pub const HUMAN_COLLISION_PENALTY: f64 = 0.3;
/// Sentinel observation value before the first action of an episode.
pub const PREV_ACTION_NONE: u8 = 4;

const GOAL_DIST_MIN: f64 = 3.0;
const GOAL_DIST_MAX: f64 = 15.0;
const SPAWN_SEPARATION: f64 = 1.0;
const SPAWN_ATTEMPTS: usize = 200;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Action {
    Forward,
    TurnLeft,
    TurnRight,
    Stop,
}

impl Action {
    pub const ALL: [Action; 4] = [Action::Forward, Action::TurnLeft, Action::TurnRight, Action::Stop];

    pub fn id(self) -> u8 {
        match self {
            Action::Forward => 0,
            Action::TurnLeft => 1,
            Action::TurnRight => 2,
            Action::Stop => 3,
        }
    }

    pub fn from_id(id: u8) -> Option<Action> {
        match id {
            0 => Some(Action::Forward),
            1 => Some(Action::TurnLeft),
            2 => Some(Action::TurnRight),
            3 => Some(Action::Stop),
            _ => None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct RobotState {
    pub position: (f64, f64),
    pub heading: f64,
    pub goal: (f64, f64),
    pub radius: f64,
    pub done: bool,
    pub succeeded: bool,
    pub path_length: f64,
}

#[derive(Clone, Debug)]
pub struct Observation {
    /// 64 normalized depth values in [0, 1].
    pub depth: Vec<f64>,
    /// Goal in the robot frame: (distance m, bearing rad).
    pub goal_polar: (f64, f64),
    /// World pose (x, y, heading).
    pub pose: (f64, f64, f64),
    /// Id of the action that produced this observation; PREV_ACTION_NONE at
    /// episode start.
    pub prev_action: u8,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct RewardTerms {
    pub r_goal: f64,
    pub r_succ: f64,
    pub r_coll: f64,
    pub r_traj: f64,
    pub total: f64,
}

impl RewardTerms {
    pub fn new(r_goal: f64, r_succ: f64, r_coll: f64) -> Self {
        RewardTerms { r_goal, r_succ, r_coll, r_traj: 0.0, total: r_goal + r_succ - r_coll }
    }

    pub fn zero() -> Self {
        RewardTerms::new(0.0, 0.0, 0.0)
    }

    /// Replaces the trajectory-shaping term, recomputing the total.
    pub fn with_traj(self, r_traj: f64) -> Self {
        RewardTerms {
            r_traj,
            total: self.r_goal + self.r_succ - self.r_coll - r_traj,
            ..self
        }
    }

    /// The reward unaffected by shaping (regression target for the world
    /// model's reward head).
    pub fn task_reward(&self) -> f64 {
        self.r_goal + self.r_succ - self.r_coll
    }
}

#[derive(Clone, Copy, Debug)]
pub struct StepInfo {
    pub human_collision: bool,
    pub static_collision: bool,
    pub min_human_dist: f64,
    pub geodesic_to_goal: f64,
}

pub struct StepResult {
    pub observations: Vec<Observation>,
    pub rewards: Vec<RewardTerms>,
    pub done: Vec<bool>,
    pub info: Vec<StepInfo>,
}

pub struct Env {
    scene: Scene,
    robots: Vec<RobotState>,
    humans: Vec<HumanState>,
    fields: Vec<GeodesicField>,
    start_geodesics: Vec<f64>,
    prev_actions: Vec<u8>,
    t: usize,
    // Episode accounting per robot.
    steps_active: Vec<usize>,
    steps_close: Vec<usize>,
    human_collided: Vec<bool>,
}

pub fn normalize_angle(a: f64) -> f64 {
    let mut x = a;
    while x >= std::f64::consts::PI {
        x -= 2.0 * std::f64::consts::PI;
    }
    while x < -std::f64::consts::PI {
        x += 2.0 * std::f64::consts::PI;
    }
    x
}

/// World point expressed in the frame of `pose` (x forward, y left).
pub fn to_robot_frame(pose: (f64, f64, f64), point: (f64, f64)) -> (f64, f64) {
    let dx = point.0 - pose.0;
    let dy = point.1 - pose.1;
    let (s, c) = pose.2.sin_cos();
    (c * dx + s * dy, -s * dx + c * dy)
}

fn dist(a: (f64, f64), b: (f64, f64)) -> f64 {
    ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()
}

/// Minimum distance from segment ab to point p.
fn segment_point_dist(a: (f64, f64), b: (f64, f64), p: (f64, f64)) -> f64 {
    let ab = (b.0 - a.0, b.1 - a.1);
    let ap = (p.0 - a.0, p.1 - a.1);
    let len2 = ab.0 * ab.0 + ab.1 * ab.1;
    if len2 < 1e-18 {
        return dist(a, p);
    }
    let t = ((ap.0 * ab.0 + ap.1 * ab.1) / len2).clamp(0.0, 1.0);
    dist((a.0 + t * ab.0, a.1 + t * ab.1), p)
}

impl Env {
    pub fn reset(scene: &Scene, n_robots: usize, n_humans: usize, seed: u64) -> Result<Env> {
        assert!(n_robots >= 1, "need at least one robot");
        let mut rng = seeding::rng_from(seed);
        let robot_cells = scene.robot_free_cells();
        let human_cells = scene.human_free_cells();
        if robot_cells.is_empty() || (n_humans > 0 && human_cells.is_empty()) {
            return Err(SimError::NoFreeSpace);
        }

        let mut spawns: Vec<(f64, f64)> = Vec::new();
        let mut goals: Vec<(f64, f64)> = Vec::new();
        let mut robots = Vec::with_capacity(n_robots);
        let mut fields = Vec::with_capacity(n_robots);

        for _ in 0..n_robots {
            let mut placed = false;
            for _ in 0..SPAWN_ATTEMPTS {
                let &(ix, iy) = &robot_cells[rng.gen_range(0..robot_cells.len())];
                let start = scene.cell_center(ix, iy);
                if spawns.iter().any(|&s| dist(s, start) < SPAWN_SEPARATION) {
                    continue;
                }
                // One field from the start prices every candidate goal.
                let from_start = GeodesicField::compute(scene, start)?;
                let mut goal = None;
                for _ in 0..SPAWN_ATTEMPTS {
                    let &(gx, gy) = &robot_cells[rng.gen_range(0..robot_cells.len())];
                    let g = scene.cell_center(gx, gy);
                    let d = from_start.at(g.0, g.1);
                    if !(GOAL_DIST_MIN..=GOAL_DIST_MAX).contains(&d) {
                        continue;
                    }
                    if goals.iter().any(|&og| dist(og, g) < SPAWN_SEPARATION) {
                        continue;
                    }
                    goal = Some(g);
                    break;
                }
                let Some(goal) = goal else { continue };
                let heading = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
                spawns.push(start);
                goals.push(goal);
                fields.push(GeodesicField::compute(scene, goal)?);
                robots.push(RobotState {
                    position: start,
                    heading,
                    goal,
                    radius: ROBOT_RADIUS,
                    done: false,
                    succeeded: false,
                    path_length: 0.0,
                });
                placed = true;
                break;
            }
            if !placed {
                return Err(SimError::SpawnSampling { seed, attempts: SPAWN_ATTEMPTS });
            }
        }

        let mut humans = Vec::with_capacity(n_humans);
        for _ in 0..n_humans {
            let mut placed = false;
            for _ in 0..SPAWN_ATTEMPTS {
                let &(ix, iy) = &human_cells[rng.gen_range(0..human_cells.len())];
                let pos = scene.cell_center(ix, iy);
                if spawns.iter().any(|&s| dist(s, pos) < SPAWN_SEPARATION) {
                    continue;
                }
                // Waypoints restricted to the human-reachable component of
                // the spawn cell, so pedestrians never chase through walls.
                let component = human_component(scene, (ix, iy));
                if component.len() < 8 {
                    continue;
                }
                let n_wp = rng.gen_range(2..=4usize);
                let waypoints: Vec<(f64, f64)> = (0..n_wp)
                    .map(|_| {
                        let &(wx, wy) = &component[rng.gen_range(0..component.len())];
                        scene.cell_center(wx, wy)
                    })
                    .collect();
                let preferred_speed = rng.gen_range(0.5..1.0);
                spawns.push(pos);
                humans.push(HumanState {
                    position: pos,
                    velocity: (0.0, 0.0),
                    waypoints,
                    current_waypoint: 0,
                    radius: HUMAN_RADIUS,
                    preferred_speed,
                });
                placed = true;
                break;
            }
            if !placed {
                return Err(SimError::SpawnSampling { seed, attempts: SPAWN_ATTEMPTS });
            }
        }

        let start_geodesics = robots
            .iter()
            .zip(&fields)
            .map(|(r, f)| f.at(r.position.0, r.position.1))
            .collect();
        Ok(Env {
            scene: scene.clone(),
            prev_actions: vec![PREV_ACTION_NONE; n_robots],
            steps_active: vec![0; n_robots],
            steps_close: vec![0; n_robots],
            human_collided: vec![false; n_robots],
            robots,
            humans,
            fields,
            start_geodesics,
            t: 0,
        })
    }

    pub fn scene(&self) -> &Scene {
        &self.scene
    }

    pub fn robots(&self) -> &[RobotState] {
        &self.robots
    }

    pub fn humans(&self) -> &[HumanState] {
        &self.humans
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn all_done(&self) -> bool {
        self.robots.iter().all(|r| r.done)
    }

    pub fn geodesic_to_goal(&self, robot: usize) -> f64 {
        self.fields[robot].at(self.robots[robot].position.0, self.robots[robot].position.1)
    }

    pub fn field(&self, robot: usize) -> &GeodesicField {
        &self.fields[robot]
    }

    pub fn start_geodesic(&self, robot: usize) -> f64 {
        self.start_geodesics[robot]
    }

    /// Humans currently inside the robot's sensing wedge (90 degree FOV,
    /// 5 m range), as (human index, distance), nearest first.
    pub fn humans_in_fov(&self, robot: usize) -> Vec<(usize, f64)> {
        let r = &self.robots[robot];
        let mut out: Vec<(usize, f64)> = self
            .humans
            .iter()
            .enumerate()
            .filter_map(|(i, h)| {
                let d = dist(r.position, h.position);
                if d > MAX_RANGE {
                    return None;
                }
                let bearing = normalize_angle(
                    (h.position.1 - r.position.1).atan2(h.position.0 - r.position.0) - r.heading,
                );
                if bearing.abs() <= FOV / 2.0 {
                    Some((i, d))
                } else {
                    None
                }
            })
            .collect();
        out.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
        out
    }

    fn agent_discs_excluding(&self, robot: usize) -> Vec<AgentDisc> {
        let mut discs: Vec<AgentDisc> = self
            .robots
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != robot)
            .map(|(_, r)| AgentDisc { center: r.position, radius: r.radius })
            .collect();
        discs.extend(
            self.humans.iter().map(|h| AgentDisc { center: h.position, radius: h.radius }),
        );
        discs
    }

    fn render_observation(&self, robot: usize) -> Observation {
        let r = &self.robots[robot];
        let pose = (r.position.0, r.position.1, r.heading);
        let depth = raycast_depth(&self.scene, pose, &self.agent_discs_excluding(robot));
        let rho = dist(r.position, r.goal);
        let phi = normalize_angle(
            (r.goal.1 - r.position.1).atan2(r.goal.0 - r.position.0) - r.heading,
        );
        Observation {
            depth,
            goal_polar: (rho, phi),
            pose,
            prev_action: self.prev_actions[robot],
        }
    }

    pub fn observations(&self) -> Vec<Observation> {
        (0..self.robots.len()).map(|i| self.render_observation(i)).collect()
    }

    /// Whether a Forward move from `from` to `to` is clear of walls and of
    /// every other agent along the swept segment.
    fn forward_clear(&self, robot: usize, from: (f64, f64), to: (f64, f64)) -> bool {
        if !self.scene.segment_robot_free(from, to) {
            return false;
        }
        let r = self.robots[robot].radius;
        for (i, other) in self.robots.iter().enumerate() {
            if i != robot
                && segment_point_dist(from, to, other.position) < r + other.radius
            {
                return false;
            }
        }
        for h in &self.humans {
            if segment_point_dist(from, to, h.position) < r + h.radius {
                return false;
            }
        }
        true
    }

    /// Advances one tick. `actions[i]` must be Some for active robots and
    /// None for done ones. Update order: robots move, humans move, collisions
    /// are evaluated, rewards assembled, observations rendered.
    pub fn step(&mut self, actions: &[Option<Action>]) -> Result<StepResult> {
        let n = self.robots.len();
        if actions.len() != n {
            return Err(SimError::ActionCount { expected: n, got: actions.len() });
        }
        for (i, (robot, action)) in self.robots.iter().zip(actions).enumerate() {
            match (robot.done, action) {
                (true, Some(_)) => return Err(SimError::ActionForDoneRobot { robot: i }),
                (false, None) => return Err(SimError::MissingAction { robot: i }),
                _ => {}
            }
        }
        self.t += 1;

        let acted: Vec<bool> = actions.iter().map(|a| a.is_some()).collect();
        let prev_geo: Vec<f64> =
            (0..n).map(|i| self.geodesic_to_goal(i)).collect();
        let mut static_coll = vec![false; n];
        let mut stopped = vec![false; n];

        for i in 0..n {
            let Some(action) = actions[i] else { continue };
            match action {
                Action::Forward => {
                    let (x, y) = self.robots[i].position;
                    let heading = self.robots[i].heading;
                    let to = (x + FORWARD_STEP * heading.cos(), y + FORWARD_STEP * heading.sin());
                    if self.forward_clear(i, (x, y), to) {
                        self.robots[i].position = to;
                        self.robots[i].path_length += FORWARD_STEP;
                    } else {
                        static_coll[i] = true;
                    }
                }
                Action::TurnLeft => {
                    self.robots[i].heading = normalize_angle(self.robots[i].heading + TURN_ANGLE);
                }
                Action::TurnRight => {
                    self.robots[i].heading = normalize_angle(self.robots[i].heading - TURN_ANGLE);
                }
                Action::Stop => {
                    let r = &mut self.robots[i];
                    r.done = true;
                    r.succeeded = dist(r.position, r.goal) <= SUCCESS_RADIUS;
                    stopped[i] = true;
                }
            }
            self.prev_actions[i] = action.id();
        }

        let robot_discs: Vec<AgentDisc> = self
            .robots
            .iter()
            .map(|r| AgentDisc { center: r.position, radius: r.radius })
            .collect();
        social_force_step(&mut self.humans, &self.scene, &robot_discs, DT);

        let mut rewards = vec![RewardTerms::zero(); n];
        let mut info = Vec::with_capacity(n);
        for i in 0..n {
            let min_human_dist = self
                .humans
                .iter()
                .map(|h| dist(self.robots[i].position, h.position))
                .fold(f64::INFINITY, f64::min);
            let human_collision = acted[i] && min_human_dist < HUMAN_COLLISION_DIST;
            let geodesic_to_goal = self.geodesic_to_goal(i);
            if acted[i] {
                let r_goal = prev_geo[i] - geodesic_to_goal;
                let r_succ = if stopped[i] && self.robots[i].succeeded {
                    SUCCESS_REWARD
                } else {
                    0.0
                };
                let r_coll = STATIC_COLLISION_PENALTY * (static_coll[i] as u8 as f64)
                    + HUMAN_COLLISION_PENALTY * (human_collision as u8 as f64);
                rewards[i] = RewardTerms::new(r_goal, r_succ, r_coll);
                self.steps_active[i] += 1;
                if min_human_dist < PSC_RADIUS {
                    self.steps_close[i] += 1;
                }
                if human_collision {
                    self.human_collided[i] = true;
                }
            }
            info.push(StepInfo {
                human_collision,
                static_collision: static_coll[i],
                min_human_dist,
                geodesic_to_goal,
            });
        }

        if self.t >= MAX_EPISODE_STEPS {
            for r in self.robots.iter_mut() {
                r.done = true;
            }
        }

        Ok(StepResult {
            observations: self.observations(),
            rewards,
            done: self.robots.iter().map(|r| r.done).collect(),
            info,
        })
    }

    /// Per-robot episode summary for the metric suite. Meaningful once the
    /// episode has ended.
    pub fn episode_record(&self) -> EpisodeRecord {
        EpisodeRecord {
            robots: self
                .robots
                .iter()
                .enumerate()
                .map(|(i, r)| RobotEpisodeRecord {
                    success: r.succeeded,
                    start_geodesic: self.start_geodesics[i],
                    path_length: r.path_length,
                    steps_total: self.steps_active[i],
                    steps_close: self.steps_close[i],
                    human_collided: self.human_collided[i],
                })
                .collect(),
        }
    }
}

/// 4-connected component of human-free cells containing `cell`.
fn human_component(scene: &Scene, cell: (usize, usize)) -> Vec<(usize, usize)> {
    let (nx, ny) = (scene.nx(), scene.ny());
    let mut seen = vec![false; nx * ny];
    let mut out = Vec::new();
    let mut stack = vec![cell];
    seen[cell.1 * nx + cell.0] = true;
    while let Some((ix, iy)) = stack.pop() {
        out.push((ix, iy));
        let neighbors =
            [(ix.wrapping_sub(1), iy), (ix + 1, iy), (ix, iy.wrapping_sub(1)), (ix, iy + 1)];
        for (jx, jy) in neighbors {
            if jx < nx && jy < ny && !seen[jy * nx + jx] && !scene.human_blocked_cell(jx as i64, jy as i64)
            {
                seen[jy * nx + jx] = true;
                stack.push((jx, jy));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{generate_scene, SceneConfig};

    fn open_scene() -> Scene {
        let config = SceneConfig { min_rooms: 1, max_rooms: 1, ..Default::default() };
        generate_scene(1, &config).unwrap()
    }

    #[test]
    fn reset_respects_separation_and_goal_range() {
        let scene = generate_scene(2, &SceneConfig::default()).unwrap();
        let env = Env::reset(&scene, 2, 4, 77).unwrap();
        let mut spawns: Vec<(f64, f64)> =
            env.robots().iter().map(|r| r.position).collect();
        spawns.extend(env.humans().iter().map(|h| h.position));
        for i in 0..spawns.len() {
            for j in i + 1..spawns.len() {
                assert!(dist(spawns[i], spawns[j]) >= SPAWN_SEPARATION - 1e-12);
            }
        }
        for i in 0..2 {
            let d = env.start_geodesic(i);
            assert!((GOAL_DIST_MIN..=GOAL_DIST_MAX).contains(&d), "start geodesic {d}");
        }
    }

    #[test]
    fn zero_humans_is_valid() {
        let scene = open_scene();
        let mut env = Env::reset(&scene, 1, 0, 5).unwrap();
        assert!(env.humans().is_empty());
        let result = env.step(&[Some(Action::Forward)]).unwrap();
        assert!(result.info[0].min_human_dist.is_infinite());
        assert_eq!(result.rewards[0].r_coll, 0.0);
    }

    #[test]
    fn same_seed_same_layout() {
        let scene = generate_scene(3, &SceneConfig::default()).unwrap();
        let a = Env::reset(&scene, 1, 3, 123).unwrap();
        let b = Env::reset(&scene, 1, 3, 123).unwrap();
        assert_eq!(a.robots()[0].position, b.robots()[0].position);
        assert_eq!(a.robots()[0].heading, b.robots()[0].heading);
        for (ha, hb) in a.humans().iter().zip(b.humans()) {
            assert_eq!(ha.position, hb.position);
            assert_eq!(ha.waypoints, hb.waypoints);
            assert_eq!(ha.preferred_speed, hb.preferred_speed);
        }
    }

    #[test]
    fn stop_near_goal_succeeds() {
        let scene = open_scene();
        let mut env = Env::reset(&scene, 1, 0, 5).unwrap();
        // Teleport the robot next to its goal for the check.
        let goal = env.robots()[0].goal;
        env.robots[0].position = (goal.0 + 0.2, goal.1);
        let result = env.step(&[Some(Action::Stop)]).unwrap();
        assert!(result.done[0]);
        assert_eq!(result.rewards[0].r_succ, SUCCESS_REWARD);
        assert!(env.robots()[0].succeeded);
    }

    #[test]
    fn stop_far_from_goal_fails() {
        let scene = open_scene();
        let mut env = Env::reset(&scene, 1, 0, 6).unwrap();
        let result = env.step(&[Some(Action::Stop)]).unwrap();
        assert!(result.done[0]);
        assert_eq!(result.rewards[0].r_succ, 0.0);
        assert!(!env.robots()[0].succeeded);
    }

    #[test]
    fn forward_into_wall_blocks_and_penalizes() {
        let scene = open_scene();
        let mut env = Env::reset(&scene, 1, 0, 5).unwrap();
        env.robots[0].position = (0.45, 6.05);
        env.robots[0].heading = std::f64::consts::PI; // facing the left wall
        let before = env.robots()[0].position;
        let result = env.step(&[Some(Action::Forward)]).unwrap();
        assert_eq!(env.robots()[0].position, before);
        assert!(result.info[0].static_collision);
        assert_eq!(result.rewards[0].r_coll, STATIC_COLLISION_PENALTY);
        assert_eq!(env.robots()[0].path_length, 0.0);
    }

    #[test]
    fn open_forward_gains_goal_progress() {
        let scene = open_scene();
        let mut env = Env::reset(&scene, 1, 0, 5).unwrap();
        // Point straight at the goal from a clear spot.
        env.robots[0].position = (3.05, 6.05);
        env.robots[0].goal = (9.05, 6.05);
        env.fields[0] = GeodesicField::compute(&scene, (9.05, 6.05)).unwrap();
        env.robots[0].heading = 0.0;
        let result = env.step(&[Some(Action::Forward)]).unwrap();
        assert!(
            (result.rewards[0].r_goal - FORWARD_STEP).abs() <= 0.05 + 1e-9,
            "r_goal {}",
            result.rewards[0].r_goal
        );
    }

    #[test]
    fn turn_changes_heading_only() {
        let scene = open_scene();
        let mut env = Env::reset(&scene, 1, 0, 5).unwrap();
        let before = env.robots()[0].position;
        let h0 = env.robots()[0].heading;
        env.step(&[Some(Action::TurnLeft)]).unwrap();
        assert_eq!(env.robots()[0].position, before);
        assert!((normalize_angle(env.robots()[0].heading - h0 - TURN_ANGLE)).abs() < 1e-12);
    }

    #[test]
    fn action_for_done_robot_rejected() {
        let scene = open_scene();
        let mut env = Env::reset(&scene, 1, 0, 5).unwrap();
        env.step(&[Some(Action::Stop)]).unwrap();
        let err = env.step(&[Some(Action::Forward)]);
        assert!(matches!(err, Err(SimError::ActionForDoneRobot { robot: 0 })));
    }

    #[test]
    fn episode_cap_forces_done() {
        let scene = open_scene();
        let mut env = Env::reset(&scene, 1, 0, 5).unwrap();
        for _ in 0..MAX_EPISODE_STEPS {
            env.step(&[Some(Action::TurnLeft)]).unwrap();
        }
        assert!(env.all_done());
        assert!(!env.robots()[0].succeeded);
        assert_eq!(env.t(), MAX_EPISODE_STEPS);
    }

    #[test]
    fn reward_total_invariant_holds() {
        let terms = RewardTerms::new(0.2, 0.0, 0.35).with_traj(0.04);
        assert_eq!(terms.total, 0.2 + 0.0 - 0.35 - 0.04);
        assert_eq!(terms.task_reward(), 0.2 - 0.35);
    }

    #[test]
    fn fov_filter_and_ordering() {
        let scene = open_scene();
        let mut env = Env::reset(&scene, 1, 0, 5).unwrap();
        env.robots[0].position = (6.0, 6.0);
        env.robots[0].heading = 0.0;
        let mk = |pos: (f64, f64)| HumanState {
            position: pos,
            velocity: (0.0, 0.0),
            waypoints: vec![pos],
            current_waypoint: 0,
            radius: HUMAN_RADIUS,
            preferred_speed: 0.7,
        };
        env.humans = vec![
            mk((8.0, 6.0)),  // ahead, 2 m
            mk((6.0, 8.5)),  // 90 degrees left: outside the half-FOV wedge
            mk((7.0, 6.1)),  // ahead, ~1 m
            mk((11.9, 6.0)), // ahead but beyond 5 m... 5.9 m away
        ];
        let in_fov = env.humans_in_fov(0);
        let ids: Vec<usize> = in_fov.iter().map(|(i, _)| *i).collect();
        assert_eq!(ids, vec![2, 0]);
    }

    #[test]
    fn robot_blocked_by_human_disc() {
        let scene = open_scene();
        let mut env = Env::reset(&scene, 1, 0, 5).unwrap();
        env.robots[0].position = (6.0, 6.0);
        env.robots[0].heading = 0.0;
        // Slow enough that fleeing the robot's repulsion in this same tick
        // cannot carry the human past the 0.5 m collision ring.
        env.humans = vec![HumanState {
            position: (6.35, 6.0),
            velocity: (0.0, 0.0),
            waypoints: vec![(6.35, 6.0)],
            current_waypoint: 0,
            radius: HUMAN_RADIUS,
            preferred_speed: 0.1,
        }];
        let result = env.step(&[Some(Action::Forward)]).unwrap();
        assert_eq!(env.robots()[0].position, (6.0, 6.0));
        assert!(result.info[0].static_collision);
        assert!(result.info[0].human_collision);
    }
}
