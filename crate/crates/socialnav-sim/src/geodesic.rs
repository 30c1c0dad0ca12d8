//! Shortest-path distance fields on the robot-dilated occupancy grid.
//! 8-connected Dijkstra with integer edge weights so distances are exactly
//! symmetric and bitwise reproducible.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use crate::error::{Result, SimError};
use crate::scene::{Scene, RESOLUTION};

/// Edge weights in millionths of a cell length.
const STRAIGHT: u64 = 1_000_000;
const DIAG: u64 = 1_414_214; // round(sqrt(2) * 1e6)
const UNREACHED: u64 = u64::MAX;

pub struct GeodesicField {
    nx: usize,
    ny: usize,
    dist: Vec<u64>,
}

impl GeodesicField {
    /// Distance-to-`goal` field over all robot-free cells.
    pub fn compute(scene: &Scene, goal: (f64, f64)) -> Result<Self> {
        let (gx, gy) = scene.cell_of(goal.0, goal.1);
        if scene.robot_blocked_cell(gx, gy) {
            return Err(SimError::OccupiedPoint { x: goal.0, y: goal.1 });
        }
        let (nx, ny) = (scene.nx(), scene.ny());
        let mut dist = vec![UNREACHED; nx * ny];
        let start = gy as usize * nx + gx as usize;
        dist[start] = 0;
        let mut heap: BinaryHeap<Reverse<(u64, usize)>> = BinaryHeap::new();
        heap.push(Reverse((0, start)));
        while let Some(Reverse((d, i))) = heap.pop() {
            if d > dist[i] {
                continue;
            }
            let (ix, iy) = ((i % nx) as i64, (i / nx) as i64);
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    let (jx, jy) = (ix + dx, iy + dy);
                    // Plain 8-connectivity: any cell the robot's continuous
                    // motion can reach stays inside one component, so the
                    // field is finite wherever the robot can stand.
                    if scene.robot_blocked_cell(jx, jy) {
                        continue;
                    }
                    let cost = if dx != 0 && dy != 0 { DIAG } else { STRAIGHT };
                    let j = jy as usize * nx + jx as usize;
                    let nd = d + cost;
                    if nd < dist[j] {
                        dist[j] = nd;
                        heap.push(Reverse((nd, j)));
                    }
                }
            }
        }
        Ok(GeodesicField { nx, ny, dist })
    }

    pub fn at_cell(&self, ix: i64, iy: i64) -> f64 {
        if ix < 0 || iy < 0 || ix >= self.nx as i64 || iy >= self.ny as i64 {
            return f64::INFINITY;
        }
        let d = self.dist[iy as usize * self.nx + ix as usize];
        if d == UNREACHED {
            f64::INFINITY
        } else {
            d as f64 * (RESOLUTION / STRAIGHT as f64)
        }
    }

    /// Distance in meters from the cell under (x, y); +inf when unreachable.
    pub fn at(&self, x: f64, y: f64) -> f64 {
        let ix = (x / RESOLUTION).floor() as i64;
        let iy = (y / RESOLUTION).floor() as i64;
        self.at_cell(ix, iy)
    }

    /// Center of the 8-neighbor cell with the smallest field value, if any
    /// neighbor improves on the current cell. Ties break by scan order.
    pub fn descent_direction(&self, x: f64, y: f64) -> Option<(f64, f64)> {
        let ix = (x / RESOLUTION).floor() as i64;
        let iy = (y / RESOLUTION).floor() as i64;
        let here = self.at_cell(ix, iy);
        let mut best: Option<(f64, (f64, f64))> = None;
        for dy in -1i64..=1 {
            for dx in -1i64..=1 {
                if dx == 0 && dy == 0 {
                    continue;
                }
                let d = self.at_cell(ix + dx, iy + dy);
                if d < here && best.map_or(true, |(bd, _)| d < bd) {
                    let cx = ((ix + dx) as f64 + 0.5) * RESOLUTION;
                    let cy = ((iy + dy) as f64 + 0.5) * RESOLUTION;
                    best = Some((d, (cx, cy)));
                }
            }
        }
        best.map(|(_, p)| p)
    }
}

/// One-off distance query between two free points.
pub fn geodesic_distance(scene: &Scene, p: (f64, f64), q: (f64, f64)) -> Result<f64> {
    let (px, py) = scene.cell_of(p.0, p.1);
    if scene.robot_blocked_cell(px, py) {
        return Err(SimError::OccupiedPoint { x: p.0, y: p.1 });
    }
    let field = GeodesicField::compute(scene, q)?;
    Ok(field.at(p.0, p.1))
}
