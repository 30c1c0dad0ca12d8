//! Social-force pedestrians: waypoint-seeking desired velocity, exponential
//! repulsion from agents and walls, synchronous integration.

use serde::{Deserialize, Serialize};

use crate::raycast::AgentDisc;
use crate::scene::Scene;

pub const SF_A: f64 = 2.0; // repulsion strength, m/s^2
pub const SF_B: f64 = 0.3; // repulsion falloff, m
pub const SF_TAU: f64 = 0.5; // relaxation time, s
pub const WAYPOINT_RADIUS: f64 = 0.3;
pub const SPEED_LIMIT_FACTOR: f64 = 1.2;
/// Beyond this separation the exponential repulsion is negligible.
const REPULSION_CUTOFF: f64 = 2.0;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HumanState {
    pub position: (f64, f64),
    pub velocity: (f64, f64),
    pub waypoints: Vec<(f64, f64)>,
    pub current_waypoint: usize,
    pub radius: f64,
    pub preferred_speed: f64,
}

impl HumanState {
    pub fn speed(&self) -> f64 {
        (self.velocity.0.powi(2) + self.velocity.1.powi(2)).sqrt()
    }
}

fn norm(v: (f64, f64)) -> f64 {
    (v.0 * v.0 + v.1 * v.1).sqrt()
}

/// One synchronous integration step: all forces are computed from the
/// positions at entry, then every human moves. Mirror-symmetric inputs stay
/// mirror-symmetric because only vector arithmetic is used.
pub fn social_force_step(
    humans: &mut [HumanState],
    scene: &Scene,
    robots: &[AgentDisc],
    dt: f64,
) {
    let snapshot: Vec<(f64, f64, f64)> =
        humans.iter().map(|h| (h.position.0, h.position.1, h.radius)).collect();

    let mut accelerations = Vec::with_capacity(humans.len());
    for (i, human) in humans.iter_mut().enumerate() {
        // Advance the waypoint before computing the desired velocity.
        if !human.waypoints.is_empty() {
            let wp = human.waypoints[human.current_waypoint];
            let to_wp = (wp.0 - human.position.0, wp.1 - human.position.1);
            if norm(to_wp) < WAYPOINT_RADIUS {
                human.current_waypoint = (human.current_waypoint + 1) % human.waypoints.len();
            }
        }
        let desired = if human.waypoints.is_empty() {
            (0.0, 0.0)
        } else {
            let wp = human.waypoints[human.current_waypoint];
            let to_wp = (wp.0 - human.position.0, wp.1 - human.position.1);
            let d = norm(to_wp);
            if d > 1e-9 {
                (to_wp.0 / d * human.preferred_speed, to_wp.1 / d * human.preferred_speed)
            } else {
                (0.0, 0.0)
            }
        };
        let mut ax = (desired.0 - human.velocity.0) / SF_TAU;
        let mut ay = (desired.1 - human.velocity.1) / SF_TAU;

        let mut repel = |other: (f64, f64), other_radius: f64| {
            let dx = human.position.0 - other.0;
            let dy = human.position.1 - other.1;
            let d = (dx * dx + dy * dy).sqrt();
            if d < 1e-9 || d > REPULSION_CUTOFF {
                return;
            }
            let mag = SF_A * ((human.radius + other_radius - d) / SF_B).exp();
            ax += mag * dx / d;
            ay += mag * dy / d;
        };
        for (j, &(ox, oy, orad)) in snapshot.iter().enumerate() {
            if j != i {
                repel((ox, oy), orad);
            }
        }
        for robot in robots {
            repel(robot.center, robot.radius);
        }
        if let Some((d, point)) = scene.nearest_wall(human.position, REPULSION_CUTOFF) {
            if d > 1e-9 {
                let mag = SF_A * ((human.radius - d) / SF_B).exp();
                ax += mag * (human.position.0 - point.0) / d;
                ay += mag * (human.position.1 - point.1) / d;
            }
        }
        accelerations.push((ax, ay));
    }

    for (human, (ax, ay)) in humans.iter_mut().zip(accelerations) {
        let mut vx = human.velocity.0 + ax * dt;
        let mut vy = human.velocity.1 + ay * dt;
        let max_speed = SPEED_LIMIT_FACTOR * human.preferred_speed;
        let speed = (vx * vx + vy * vy).sqrt();
        if speed > max_speed {
            vx *= max_speed / speed;
            vy *= max_speed / speed;
        }
        let target = (human.position.0 + vx * dt, human.position.1 + vy * dt);
        if !scene.disc_hits_wall(target, human.radius) {
            human.position = target;
            human.velocity = (vx, vy);
        } else if !scene.disc_hits_wall((target.0, human.position.1), human.radius) {
            human.position.0 = target.0;
            human.velocity = (vx, 0.0);
        } else if !scene.disc_hits_wall((human.position.0, target.1), human.radius) {
            human.position.1 = target.1;
            human.velocity = (0.0, vy);
        } else {
            human.velocity = (0.0, 0.0);
        }
    }
}
