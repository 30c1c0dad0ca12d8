//! Procedural 2D social-navigation environment.
//!
//! A scene is an occupancy grid (0.1 m cells) with BSP-carved rooms. Robots
//! take discrete actions (forward / turn / stop) and sense the world through
//! a 64-ray planar depth scan; pedestrians follow a social-force model
//! between waypoints. Rewards decompose into goal progress, success bonus,
//! collision penalties, and an externally supplied trajectory-shaping term.

pub mod env;
pub mod error;
pub mod geodesic;
pub mod metrics;
pub mod raycast;
pub mod scene;
pub mod seeding;
pub mod social;
pub mod trace;

pub use env::{
    normalize_angle, to_robot_frame, Action, Env, Observation, RewardTerms, RobotState, StepInfo,
    StepResult, MAX_EPISODE_STEPS, PREV_ACTION_NONE,
};
pub use error::{Result, SimError};
pub use geodesic::{geodesic_distance, GeodesicField};
pub use metrics::{compute_metrics, EpisodeRecord, MetricsReport, RobotEpisodeRecord};
pub use raycast::{raycast_depth, AgentDisc};
pub use scene::{generate_scene, Scene, SceneConfig};
pub use social::HumanState;
pub use trace::{
    episode_record_from_trace, read_trace, trace_step, TraceHeader, TraceStep, TraceWriter,
};
