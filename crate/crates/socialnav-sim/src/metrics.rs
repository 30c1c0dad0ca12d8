//! Episode-level navigation metrics. All rates are reported on a 0..100
//! scale so tables read as percentages.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RobotEpisodeRecord {
    pub success: bool,
    /// Geodesic distance from spawn to goal, the shortest-path reference
    /// for SPL.
    pub start_geodesic: f64,
    /// Distance actually driven (turns contribute nothing).
    pub path_length: f64,
    /// Ticks the robot was active (pre-Stop, pre-cap).
    pub steps_total: usize,
    /// Active ticks spent within 1 m of some human.
    pub steps_close: usize,
    pub human_collided: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub robots: Vec<RobotEpisodeRecord>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MetricsReport {
    pub sr: f64,
    pub spl: f64,
    pub psc: f64,
    pub h_coll: f64,
    /// Fraction of multi-robot episodes where every robot succeeded; None
    /// when the set has no multi-robot episodes.
    pub t_sr: Option<f64>,
    pub t_spl: Option<f64>,
    pub episodes: usize,
    pub robot_episodes: usize,
}

/// Aggregates per-robot records into the reported metric suite. A driven
/// path meaningfully shorter than the geodesic reference means the inputs
/// are inconsistent and is rejected rather than clamped.
pub fn compute_metrics(records: &[EpisodeRecord]) -> Result<MetricsReport> {
    if records.is_empty() || records.iter().all(|e| e.robots.is_empty()) {
        return Err(SimError::EmptyRecords);
    }
    for episode in records {
        for r in &episode.robots {
            // The geodesic runs on an 8-connected grid, so a real path can
            // undercut it by the diagonal quantization plus a small slack.
            let floor = r.start_geodesic - (0.10 * r.start_geodesic + 0.5);
            if r.success && r.path_length < floor {
                return Err(SimError::CorruptEpisode {
                    path: r.path_length,
                    geodesic: r.start_geodesic,
                });
            }
        }
    }

    let robots: Vec<&RobotEpisodeRecord> =
        records.iter().flat_map(|e| e.robots.iter()).collect();
    let n = robots.len() as f64;

    let sr = robots.iter().filter(|r| r.success).count() as f64 / n;
    let spl = robots
        .iter()
        .map(|r| {
            if r.success {
                r.start_geodesic / r.path_length.max(r.start_geodesic)
            } else {
                0.0
            }
        })
        .sum::<f64>()
        / n;
    // PSC pools the episode's step counts across its robots, then averages
    // over episodes; H-Coll is episode-level (any robot colliding marks the
    // whole episode).
    let live: Vec<&EpisodeRecord> = records.iter().filter(|e| !e.robots.is_empty()).collect();
    let n_ep = live.len() as f64;
    let psc = live
        .iter()
        .map(|e| {
            let total: usize = e.robots.iter().map(|r| r.steps_total).sum();
            let close: usize = e.robots.iter().map(|r| r.steps_close).sum();
            if total == 0 {
                1.0
            } else {
                1.0 - close as f64 / total as f64
            }
        })
        .sum::<f64>()
        / n_ep;
    let h_coll = live
        .iter()
        .filter(|e| e.robots.iter().any(|r| r.human_collided))
        .count() as f64
        / n_ep;

    let multi: Vec<&EpisodeRecord> =
        records.iter().filter(|e| e.robots.len() >= 2).collect();
    let (t_sr, t_spl) = if multi.is_empty() {
        (None, None)
    } else {
        let m = multi.len() as f64;
        let t_sr = multi
            .iter()
            .filter(|e| e.robots.iter().all(|r| r.success))
            .count() as f64
            / m;
        let t_spl = multi
            .iter()
            .map(|e| {
                if e.robots.iter().all(|r| r.success) {
                    e.robots
                        .iter()
                        .map(|r| r.start_geodesic / r.path_length.max(r.start_geodesic))
                        .sum::<f64>()
                        / e.robots.len() as f64
                } else {
                    0.0
                }
            })
            .sum::<f64>()
            / m;
        (Some(t_sr * 100.0), Some(t_spl * 100.0))
    };

    Ok(MetricsReport {
        sr: sr * 100.0,
        spl: spl * 100.0,
        psc: psc * 100.0,
        h_coll: h_coll * 100.0,
        t_sr,
        t_spl,
        episodes: records.len(),
        robot_episodes: robots.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(
        success: bool,
        start_geodesic: f64,
        path_length: f64,
        steps_total: usize,
        steps_close: usize,
        human_collided: bool,
    ) -> RobotEpisodeRecord {
        RobotEpisodeRecord {
            success,
            start_geodesic,
            path_length,
            steps_total,
            steps_close,
            human_collided,
        }
    }

    #[test]
    fn hand_checked_single_robot_suite() {
        let records = vec![
            EpisodeRecord { robots: vec![rec(true, 4.0, 5.0, 40, 10, false)] },
            EpisodeRecord { robots: vec![rec(false, 6.0, 2.0, 20, 0, true)] },
        ];
        let m = compute_metrics(&records).unwrap();
        assert_eq!(m.sr, 50.0);
        // SPL: (4/5 + 0)/2 = 0.4
        assert!((m.spl - 40.0).abs() < 1e-12);
        // PSC: ((1 - 10/40) + 1)/2 = 0.875
        assert!((m.psc - 87.5).abs() < 1e-12);
        assert_eq!(m.h_coll, 50.0);
        assert!(m.t_sr.is_none());
        assert!(m.t_spl.is_none());
    }

    #[test]
    fn spl_caps_at_success_rate() {
        // Driving shorter than the reference must not push SPL above SR.
        let records = vec![EpisodeRecord {
            robots: vec![rec(true, 4.0, 3.8, 30, 0, false)],
        }];
        let m = compute_metrics(&records).unwrap();
        assert_eq!(m.sr, 100.0);
        assert_eq!(m.spl, 100.0);
    }

    #[test]
    fn team_metrics_only_from_multi_robot_episodes() {
        let records = vec![
            EpisodeRecord {
                robots: vec![rec(true, 4.0, 4.0, 30, 0, false), rec(true, 5.0, 10.0, 50, 0, false)],
            },
            EpisodeRecord {
                robots: vec![rec(true, 4.0, 4.0, 30, 0, false), rec(false, 5.0, 3.0, 20, 0, false)],
            },
            // Single-robot episode: counts for SR, ignored for T-SR.
            EpisodeRecord { robots: vec![rec(false, 4.0, 1.0, 10, 0, false)] },
        ];
        let m = compute_metrics(&records).unwrap();
        assert!((m.sr - 60.0).abs() < 1e-12);
        let t_sr = m.t_sr.unwrap();
        assert!((t_sr - 50.0).abs() < 1e-12, "t_sr {t_sr}");
        // Episode 1 team SPL: (1.0 + 0.5)/2 = 0.75; episode 2 contributes 0.
        let t_spl = m.t_spl.unwrap();
        assert!((t_spl - 37.5).abs() < 1e-12, "t_spl {t_spl}");
        // Team success is at most the weakest robot: T-SR <= per-robot SR.
        assert!(t_sr <= m.sr + 1e-12);
    }

    #[test]
    fn h_coll_and_psc_are_episode_level() {
        let records = vec![
            EpisodeRecord {
                robots: vec![rec(true, 4.0, 4.0, 30, 30, true), rec(true, 4.0, 4.0, 10, 0, false)],
            },
            EpisodeRecord { robots: vec![rec(true, 4.0, 4.0, 20, 0, false)] },
        ];
        let m = compute_metrics(&records).unwrap();
        // One of two episodes had a collision, regardless of robot count.
        assert_eq!(m.h_coll, 50.0);
        // Episode 1 pools steps: 1 - 30/40 = 0.25; episode 2 is clean.
        assert!((m.psc - 62.5).abs() < 1e-12, "psc {}", m.psc);
    }

    #[test]
    fn corrupt_short_path_rejected() {
        let records = vec![EpisodeRecord {
            robots: vec![rec(true, 10.0, 5.0, 30, 0, false)],
        }];
        assert!(matches!(
            compute_metrics(&records),
            Err(SimError::CorruptEpisode { .. })
        ));
    }

    #[test]
    fn diagonal_undercut_within_slack_accepted() {
        // 8-connected geodesics overshoot true shortest paths by up to
        // ~8.4 percent; a real drive may land under the reference.
        let records = vec![EpisodeRecord {
            robots: vec![rec(true, 10.0, 9.2, 60, 0, false)],
        }];
        let m = compute_metrics(&records).unwrap();
        assert_eq!(m.spl, 100.0);
    }

    #[test]
    fn empty_inputs_rejected() {
        assert!(matches!(compute_metrics(&[]), Err(SimError::EmptyRecords)));
        let hollow = vec![EpisodeRecord { robots: vec![] }];
        assert!(matches!(compute_metrics(&hollow), Err(SimError::EmptyRecords)));
    }

    #[test]
    fn zero_step_episode_counts_clean_for_psc() {
        let records = vec![EpisodeRecord {
            robots: vec![rec(false, 4.0, 0.0, 0, 0, false)],
        }];
        let m = compute_metrics(&records).unwrap();
        assert_eq!(m.psc, 100.0);
    }
}
