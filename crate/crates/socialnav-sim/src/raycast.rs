//! Planar depth sensing: grid-wall hits by DDA traversal, agent discs by
//! analytic ray-circle intersection, clamped to max range.

use crate::scene::{Scene, RESOLUTION};

pub const N_RAYS: usize = 64;
pub const FOV: f64 = std::f64::consts::FRAC_PI_2;
pub const MAX_RANGE: f64 = 5.0;

#[derive(Clone, Copy, Debug)]
pub struct AgentDisc {
    pub center: (f64, f64),
    pub radius: f64,
}

/// Bearing of ray `i` relative to world frame for a sensor at `heading`.
pub fn ray_bearing(heading: f64, i: usize) -> f64 {
    heading - FOV / 2.0 + i as f64 * FOV / (N_RAYS - 1) as f64
}

/// 64 depth values in [0, 1]: nearest hit among walls and agent discs,
/// clamped to 5 m and normalized by 5 m.
pub fn raycast_depth(scene: &Scene, pose: (f64, f64, f64), agents: &[AgentDisc]) -> Vec<f64> {
    let origin = (pose.0, pose.1);
    let mut out = Vec::with_capacity(N_RAYS);
    for i in 0..N_RAYS {
        let bearing = ray_bearing(pose.2, i);
        let dir = (bearing.cos(), bearing.sin());
        let mut t = wall_distance(scene, origin, dir);
        for agent in agents {
            if let Some(ta) = ray_circle(origin, dir, agent.center, agent.radius) {
                if ta < t {
                    t = ta;
                }
            }
        }
        out.push(t.min(MAX_RANGE) / MAX_RANGE);
    }
    out
}

/// Distance along the ray to the first wall cell (DDA grid traversal).
fn wall_distance(scene: &Scene, origin: (f64, f64), dir: (f64, f64)) -> f64 {
    let (mut ix, mut iy) = scene.cell_of(origin.0, origin.1);
    if scene.wall(ix, iy) {
        return 0.0;
    }
    let step_x: i64 = if dir.0 > 0.0 { 1 } else { -1 };
    let step_y: i64 = if dir.1 > 0.0 { 1 } else { -1 };
    // Distance along the ray to the next cell boundary in each axis.
    let mut t_max_x = if dir.0 != 0.0 {
        let next = if dir.0 > 0.0 { (ix + 1) as f64 * RESOLUTION } else { ix as f64 * RESOLUTION };
        (next - origin.0) / dir.0
    } else {
        f64::INFINITY
    };
    let mut t_max_y = if dir.1 != 0.0 {
        let next = if dir.1 > 0.0 { (iy + 1) as f64 * RESOLUTION } else { iy as f64 * RESOLUTION };
        (next - origin.1) / dir.1
    } else {
        f64::INFINITY
    };
    let t_delta_x = if dir.0 != 0.0 { RESOLUTION / dir.0.abs() } else { f64::INFINITY };
    let t_delta_y = if dir.1 != 0.0 { RESOLUTION / dir.1.abs() } else { f64::INFINITY };
    loop {
        let t = if t_max_x < t_max_y {
            ix += step_x;
            let t = t_max_x;
            t_max_x += t_delta_x;
            t
        } else {
            iy += step_y;
            let t = t_max_y;
            t_max_y += t_delta_y;
            t
        };
        if t > MAX_RANGE {
            return f64::INFINITY;
        }
        if scene.wall(ix, iy) {
            return t;
        }
    }
}

/// Smallest non-negative ray parameter hitting the circle, if any. A ray
/// starting inside the circle reports 0.
fn ray_circle(origin: (f64, f64), dir: (f64, f64), center: (f64, f64), radius: f64) -> Option<f64> {
    let ox = origin.0 - center.0;
    let oy = origin.1 - center.1;
    let b = ox * dir.0 + oy * dir.1;
    let c = ox * ox + oy * oy - radius * radius;
    let disc = b * b - c;
    if disc < 0.0 {
        return None;
    }
    let sq = disc.sqrt();
    let t_enter = -b - sq;
    let t_exit = -b + sq;
    if t_exit < 0.0 {
        None
    } else {
        Some(t_enter.max(0.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{generate_scene, SceneConfig};

    fn open_scene() -> crate::scene::Scene {
        let config = SceneConfig { min_rooms: 1, max_rooms: 1, ..Default::default() };
        generate_scene(1, &config).unwrap()
    }

    #[test]
    fn open_center_all_rays_clamped() {
        let scene = open_scene();
        // 12x12 m, center pose: every wall is at least 5.9 m away.
        let depth = raycast_depth(&scene, (6.0, 6.0, 0.7), &[]);
        assert_eq!(depth.len(), N_RAYS);
        for &d in &depth {
            assert_eq!(d, 1.0);
        }
    }

    #[test]
    fn flat_wall_two_meters_ahead() {
        let scene = open_scene();
        // Facing +x from x = width - wall(0.1) - 2.0. The wall interior face
        // is at x = 11.9.
        let pose = (9.9, 6.0, 0.0);
        let depth = raycast_depth(&scene, pose, &[]);
        // Center rays 31/32 sit ±(FOV/126) off axis; cos correction is tiny.
        let mid = (depth[31] + depth[32]) / 2.0;
        assert!((mid - 0.4).abs() < 0.005, "mid {mid}");
    }

    #[test]
    fn agent_disc_at_bearing() {
        let scene = open_scene();
        let pose = (6.0, 6.0, 0.0);
        // Disc 30 degrees left, 1.5 m away, radius 0.3.
        let ang = 30f64.to_radians();
        let center = (6.0 + 1.5 * ang.cos(), 6.0 + 1.5 * ang.sin());
        let depth = raycast_depth(&scene, pose, &[AgentDisc { center, radius: 0.3 }]);
        // Ray index for +30 degrees: bearing = -45 + i*(90/63) => i = 52.5.
        let expect = (1.5 - 0.3) / MAX_RANGE;
        let hit = depth[52].min(depth[53]);
        assert!((hit - expect).abs() < 0.02, "hit {hit}, expect {expect}");
        // Rays far from the disc keep seeing the clamp.
        assert_eq!(depth[0], 1.0);
        assert_eq!(depth[63], 1.0);
    }

    #[test]
    fn adding_agent_never_increases_depth() {
        let scene = generate_scene(8, &SceneConfig::default()).unwrap();
        let cells = scene.robot_free_cells();
        let p = scene.cell_center(cells[cells.len() / 2].0, cells[cells.len() / 2].1);
        let base = raycast_depth(&scene, (p.0, p.1, 1.1), &[]);
        let with = raycast_depth(
            &scene,
            (p.0, p.1, 1.1),
            &[AgentDisc { center: (p.0 + 1.0, p.1 + 0.5), radius: 0.3 }],
        );
        for (a, b) in with.iter().zip(&base) {
            assert!(a <= b);
        }
    }

    #[test]
    fn ray_circle_from_inside_is_zero() {
        let t = ray_circle((0.0, 0.0), (1.0, 0.0), (0.1, 0.0), 0.5).unwrap();
        assert_eq!(t, 0.0);
    }

    #[test]
    fn ray_circle_miss() {
        assert!(ray_circle((0.0, 0.0), (1.0, 0.0), (2.0, 1.0), 0.5).is_none());
        // Behind the origin.
        assert!(ray_circle((0.0, 0.0), (1.0, 0.0), (-2.0, 0.0), 0.5).is_none());
    }
}
