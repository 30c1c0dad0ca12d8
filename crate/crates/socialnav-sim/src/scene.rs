//! Occupancy-grid scenes. Interior walls are carved by recursive splits with
//! door gaps; generation retries until the free space is one connected
//! component.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::seeding;

pub const RESOLUTION: f64 = 0.1;
pub const ROBOT_RADIUS: f64 = 0.2;
pub const HUMAN_RADIUS: f64 = 0.3;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneConfig {
    pub width: f64,
    pub height: f64,
    pub min_rooms: usize,
    pub max_rooms: usize,
    pub corridor_width: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            width: 12.0,
            height: 12.0,
            min_rooms: 2,
            max_rooms: 5,
            corridor_width: 1.0,
        }
    }
}

#[derive(Clone)]
pub struct Scene {
    nx: usize,
    ny: usize,
    /// Row-major, true = wall.
    cells: Vec<bool>,
    /// Cells no robot center may occupy (walls dilated by the robot radius).
    robot_blocked: Vec<bool>,
    /// Same, dilated by the human radius.
    human_blocked: Vec<bool>,
    pub width: f64,
    pub height: f64,
    pub seed: u64,
}

impl Scene {
    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn wall(&self, ix: i64, iy: i64) -> bool {
        if ix < 0 || iy < 0 || ix >= self.nx as i64 || iy >= self.ny as i64 {
            return true;
        }
        self.cells[iy as usize * self.nx + ix as usize]
    }

    pub fn cell_of(&self, x: f64, y: f64) -> (i64, i64) {
        ((x / RESOLUTION).floor() as i64, (y / RESOLUTION).floor() as i64)
    }

    pub fn cell_center(&self, ix: usize, iy: usize) -> (f64, f64) {
        ((ix as f64 + 0.5) * RESOLUTION, (iy as f64 + 0.5) * RESOLUTION)
    }

    fn blocked_at(&self, mask: &[bool], x: f64, y: f64) -> bool {
        let (ix, iy) = self.cell_of(x, y);
        if ix < 0 || iy < 0 || ix >= self.nx as i64 || iy >= self.ny as i64 {
            return true;
        }
        mask[iy as usize * self.nx + ix as usize]
    }

    /// Whether a robot center may sit at (x, y): the cell under it is free on
    /// the robot-radius-dilated grid. The same predicate drives movement,
    /// spawn sampling, and the geodesic field domain, so they never disagree.
    pub fn robot_free_at(&self, x: f64, y: f64) -> bool {
        !self.blocked_at(&self.robot_blocked, x, y)
    }

    pub fn human_free_at(&self, x: f64, y: f64) -> bool {
        !self.blocked_at(&self.human_blocked, x, y)
    }

    pub fn robot_blocked_cell(&self, ix: i64, iy: i64) -> bool {
        if ix < 0 || iy < 0 || ix >= self.nx as i64 || iy >= self.ny as i64 {
            return true;
        }
        self.robot_blocked[iy as usize * self.nx + ix as usize]
    }

    pub fn human_blocked_cell(&self, ix: i64, iy: i64) -> bool {
        if ix < 0 || iy < 0 || ix >= self.nx as i64 || iy >= self.ny as i64 {
            return true;
        }
        self.human_blocked[iy as usize * self.nx + ix as usize]
    }

    /// All cells where a robot may spawn, in row-major order.
    pub fn robot_free_cells(&self) -> Vec<(usize, usize)> {
        self.free_cells(&self.robot_blocked)
    }

    pub fn human_free_cells(&self) -> Vec<(usize, usize)> {
        self.free_cells(&self.human_blocked)
    }

    fn free_cells(&self, mask: &[bool]) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for iy in 0..self.ny {
            for ix in 0..self.nx {
                if !mask[iy * self.nx + ix] {
                    out.push((ix, iy));
                }
            }
        }
        out
    }

    /// Whether the straight segment is traversable by a robot: every sample
    /// point (spaced at most half a cell apart) passes `robot_free_at`.
    pub fn segment_robot_free(&self, from: (f64, f64), to: (f64, f64)) -> bool {
        let dx = to.0 - from.0;
        let dy = to.1 - from.1;
        let len = (dx * dx + dy * dy).sqrt();
        let steps = (len / (RESOLUTION * 0.5)).ceil().max(1.0) as usize;
        for s in 0..=steps {
            let f = s as f64 / steps as f64;
            if !self.robot_free_at(from.0 + f * dx, from.1 + f * dy) {
                return false;
            }
        }
        true
    }

    /// Whether a disc of radius `r` at `p` overlaps any wall cell.
    pub fn disc_hits_wall(&self, p: (f64, f64), r: f64) -> bool {
        let (cx, cy) = self.cell_of(p.0, p.1);
        let reach = (r / RESOLUTION).ceil() as i64 + 1;
        for iy in cy - reach..=cy + reach {
            for ix in cx - reach..=cx + reach {
                if self.wall(ix, iy) && point_rect_dist(p, ix, iy) < r {
                    return true;
                }
            }
        }
        false
    }

    /// Nearest wall point within `range` of `p`, if any: (distance, point).
    pub fn nearest_wall(&self, p: (f64, f64), range: f64) -> Option<(f64, (f64, f64))> {
        let (cx, cy) = self.cell_of(p.0, p.1);
        let reach = (range / RESOLUTION).ceil() as i64 + 1;
        let mut best: Option<(f64, (f64, f64))> = None;
        for iy in cy - reach..=cy + reach {
            for ix in cx - reach..=cx + reach {
                if !self.wall(ix, iy) {
                    continue;
                }
                let q = nearest_point_on_rect(p, ix, iy);
                let d = ((p.0 - q.0).powi(2) + (p.1 - q.1).powi(2)).sqrt();
                if d <= range && best.map_or(true, |(bd, _)| d < bd) {
                    best = Some((d, q));
                }
            }
        }
        best
    }

    /// Number of 4-connected free-space components.
    pub fn free_component_count(&self) -> usize {
        component_count(&self.cells, self.nx, self.ny)
    }
}

fn nearest_point_on_rect(p: (f64, f64), ix: i64, iy: i64) -> (f64, f64) {
    let x0 = ix as f64 * RESOLUTION;
    let y0 = iy as f64 * RESOLUTION;
    (p.0.clamp(x0, x0 + RESOLUTION), p.1.clamp(y0, y0 + RESOLUTION))
}

fn point_rect_dist(p: (f64, f64), ix: i64, iy: i64) -> f64 {
    let q = nearest_point_on_rect(p, ix, iy);
    ((p.0 - q.0).powi(2) + (p.1 - q.1).powi(2)).sqrt()
}

fn component_count(cells: &[bool], nx: usize, ny: usize) -> usize {
    let mut seen = vec![false; cells.len()];
    let mut count = 0;
    let mut stack = Vec::new();
    for start in 0..cells.len() {
        if cells[start] || seen[start] {
            continue;
        }
        count += 1;
        seen[start] = true;
        stack.push(start);
        while let Some(i) = stack.pop() {
            let (ix, iy) = (i % nx, i / nx);
            let mut visit = |jx: usize, jy: usize| {
                let j = jy * nx + jx;
                if !cells[j] && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            };
            if ix > 0 {
                visit(ix - 1, iy);
            }
            if ix + 1 < nx {
                visit(ix + 1, iy);
            }
            if iy > 0 {
                visit(ix, iy - 1);
            }
            if iy + 1 < ny {
                visit(ix, iy + 1);
            }
        }
    }
    count
}

fn dilate(cells: &[bool], nx: usize, ny: usize, radius: f64) -> Vec<bool> {
    let reach = (radius / RESOLUTION).ceil() as i64 + 1;
    let mut out = vec![false; cells.len()];
    for iy in 0..ny as i64 {
        for ix in 0..nx as i64 {
            let center =
                ((ix as f64 + 0.5) * RESOLUTION, (iy as f64 + 0.5) * RESOLUTION);
            let mut blocked = cells[iy as usize * nx + ix as usize];
            'scan: for jy in iy - reach..=iy + reach {
                if blocked {
                    break;
                }
                for jx in ix - reach..=ix + reach {
                    let wall = jx < 0
                        || jy < 0
                        || jx >= nx as i64
                        || jy >= ny as i64
                        || cells[jy as usize * nx + jx as usize];
                    if wall && point_rect_dist(center, jx, jy) < radius {
                        blocked = true;
                        break 'scan;
                    }
                }
            }
            out[iy as usize * nx + ix as usize] = blocked;
        }
    }
    out
}

struct Region {
    x0: usize,
    y0: usize,
    x1: usize, // exclusive
    y1: usize,
}

fn carve_grid<R: Rng>(rng: &mut R, nx: usize, ny: usize, config: &SceneConfig) -> Vec<bool> {
    let mut cells = vec![true; nx * ny];
    for iy in 1..ny - 1 {
        for ix in 1..nx - 1 {
            cells[iy * nx + ix] = false;
        }
    }
    let door = (config.corridor_width / RESOLUTION).ceil() as usize;
    // A room must fit a door plus a margin on each side of any future split.
    let min_room = door + 4;
    let rooms = rng.gen_range(config.min_rooms..=config.max_rooms);
    let mut regions = vec![Region { x0: 1, y0: 1, x1: nx - 1, y1: ny - 1 }];
    for _ in 1..rooms {
        // Split the largest region that still has room for two halves.
        let candidate = regions
            .iter()
            .enumerate()
            .filter(|(_, r)| {
                (r.x1 - r.x0) >= 2 * min_room + 1 || (r.y1 - r.y0) >= 2 * min_room + 1
            })
            .max_by_key(|(_, r)| (r.x1 - r.x0) * (r.y1 - r.y0));
        let Some((idx, _)) = candidate else { break };
        let region = regions.swap_remove(idx);
        let w = region.x1 - region.x0;
        let h = region.y1 - region.y0;
        let vertical = if w >= 2 * min_room + 1 && h >= 2 * min_room + 1 {
            w >= h
        } else {
            w >= 2 * min_room + 1
        };
        if vertical {
            let wall_x = rng.gen_range(region.x0 + min_room..region.x1 - min_room);
            let door_y = rng.gen_range(region.y0..region.y1 - door);
            for iy in region.y0..region.y1 {
                if iy < door_y || iy >= door_y + door {
                    cells[iy * nx + wall_x] = true;
                }
            }
            regions.push(Region { x0: region.x0, y0: region.y0, x1: wall_x, y1: region.y1 });
            regions.push(Region { x0: wall_x + 1, y0: region.y0, x1: region.x1, y1: region.y1 });
        } else {
            let wall_y = rng.gen_range(region.y0 + min_room..region.y1 - min_room);
            let door_x = rng.gen_range(region.x0..region.x1 - door);
            for ix in region.x0..region.x1 {
                if ix < door_x || ix >= door_x + door {
                    cells[wall_y * nx + ix] = true;
                }
            }
            regions.push(Region { x0: region.x0, y0: region.y0, x1: region.x1, y1: wall_y });
            regions.push(Region { x0: region.x0, y0: wall_y + 1, x1: region.x1, y1: region.y1 });
        }
    }
    cells
}

pub fn generate_scene(seed: u64, config: &SceneConfig) -> Result<Scene> {
    let nx = (config.width / RESOLUTION).round() as usize;
    let ny = (config.height / RESOLUTION).round() as usize;
    assert!(nx >= 20 && ny >= 20, "scene too small: {nx}x{ny} cells");
    for attempt in 0..100u64 {
        let mut rng = seeding::rng_from(seeding::indexed_seed(seed, attempt));
        let cells = carve_grid(&mut rng, nx, ny, config);
        if component_count(&cells, nx, ny) != 1 {
            continue;
        }
        let robot_blocked = dilate(&cells, nx, ny, ROBOT_RADIUS);
        let human_blocked = dilate(&cells, nx, ny, HUMAN_RADIUS);
        return Ok(Scene {
            nx,
            ny,
            cells,
            robot_blocked,
            human_blocked,
            width: config.width,
            height: config.height,
            seed,
        });
    }
    Err(SimError::SceneGeneration { seed })
}
