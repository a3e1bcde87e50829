//! Event-triggered behavior switching: obstacle classification, the
//! track-width trigger, and the support-polygon adjustment schedule.
//!
//! A run is a contiguous string of behavior segments. Only `widen-track`
//! segments carry the event flag (gamma = 1) and a changing track width;
//! everything else drives with the polygon frozen.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::RobotParams;
use crate::reference::RefPath;

/// An isolated obstacle standing on the path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Obstacle {
    /// Arc position of the obstacle along the path (m).
    pub arc_position: f64,
    /// Lateral width facing the robot (m).
    pub width: f64,
    /// Height above ground (m).
    pub height: f64,
}

impl Obstacle {
    pub fn validate(&self) -> Result<()> {
        if !(self.width > 0.0) || self.height < 0.0 || !self.arc_position.is_finite() {
            return Err(Error::Parse(format!(
                "obstacle must have positive width and non-negative height, got {self:?}"
            )));
        }
        Ok(())
    }
}

/// How the robot deals with one stretch of road.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BehaviorKind {
    /// Plain tracking at constant track width.
    Track,
    /// Track-width adjustment ramp in progress (widening or restoring).
    WidenTrack,
    /// Body raised over a narrow obstacle; no effect on the planar model.
    RaiseBody,
    /// Obstacle cannot be crossed; the reference path must already avoid it.
    Bypass,
}

/// One behavior segment of the schedule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Behavior {
    pub kind: BehaviorKind,
    /// Event flag: true exactly while the support polygon is adjusting.
    pub gamma: bool,
    pub t_start: f64,
    pub t_end: f64,
    /// Track width when the segment begins (m).
    pub d_from: f64,
    /// Track width the segment drives toward / holds (m).
    pub d_target: f64,
}

/// Tunables of the adjustment process. The platform datasheet gives none of
/// these; defaults are estimates recorded in the shipped parameter docs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BehaviorConfig {
    /// Duration of one track-width adjustment ramp (s).
    pub t_adjust: f64,
    /// The adjustment must be complete this far before the obstacle (m).
    pub lead_distance: f64,
    /// Extra track width beyond the obstacle width when straddling (m).
    pub width_margin: f64,
    /// Tallest obstacle the raised body can clear (m).
    pub clearance_max: f64,
}

impl Default for BehaviorConfig {
    fn default() -> Self {
        BehaviorConfig {
            t_adjust: 2.0,
            lead_distance: 3.0,
            width_margin: 0.1,
            clearance_max: 1.5,
        }
    }
}

/// Event trigger: true iff the obstacle width lies strictly inside the
/// stretchable range `(d0, d0 + stretch_max)`.
pub fn trigger(obstacle_width: f64, track_width0: f64, stretch_max: f64) -> bool {
    obstacle_width > track_width0 && obstacle_width < track_width0 + stretch_max
}

/// Decide how to deal with one obstacle.
pub fn classify_obstacle(
    obs: &Obstacle,
    params: &RobotParams,
    clearance_max: f64,
) -> BehaviorKind {
    let d0 = params.track_width0;
    let d_max = params.track_width_max();
    if obs.height > clearance_max {
        // Too tall to pass over at any body height; go around.
        BehaviorKind::Bypass
    } else if trigger(obs.width, d0, params.track_stretch_max) && obs.height < clearance_max {
        BehaviorKind::WidenTrack
    } else if obs.width <= d0 {
        BehaviorKind::RaiseBody
    } else if obs.width >= d_max {
        // Too wide to straddle; go around.
        BehaviorKind::Bypass
    } else {
        BehaviorKind::Track
    }
}

/// Track width during an adjustment segment: linear ramp from `d_from` to
/// the segment's target over `t_adjust` seconds, constant afterwards.
pub fn polygon_ramp(t: f64, behavior: &Behavior, t_adjust: f64, d_from: f64) -> f64 {
    let frac = if t_adjust > 0.0 {
        ((t - behavior.t_start) / t_adjust).clamp(0.0, 1.0)
    } else {
        1.0
    };
    d_from + frac * (behavior.d_target - d_from)
}

/// The time-contiguous behavior schedule of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct BehaviorSchedule {
    segments: Vec<Behavior>,
    total_time: f64,
}

impl BehaviorSchedule {
    /// Plain tracking for the whole run: the schedule before any obstacle
    /// is known.
    pub fn single_track(total_time: f64, track_width0: f64) -> Self {
        BehaviorSchedule {
            segments: vec![Behavior {
                kind: BehaviorKind::Track,
                gamma: false,
                t_start: 0.0,
                t_end: total_time,
                d_from: track_width0,
                d_target: track_width0,
            }],
            total_time,
        }
    }

    pub fn segments(&self) -> &[Behavior] {
        &self.segments
    }

    pub fn total_time(&self) -> f64 {
        self.total_time
    }

    fn segment_index_at(&self, t: f64) -> usize {
        // Segments are contiguous and sorted; pick the one containing t.
        match self
            .segments
            .binary_search_by(|b| b.t_start.partial_cmp(&t).unwrap())
        {
            Ok(i) => i,
            Err(0) => 0,
            Err(i) => i - 1,
        }
    }

    pub fn active_at(&self, t: f64) -> &Behavior {
        &self.segments[self.segment_index_at(t)]
    }

    pub fn track_width_at(&self, t: f64) -> f64 {
        let b = self.active_at(t);
        if t >= b.t_end {
            return b.d_target;
        }
        polygon_ramp(t, b, b.t_end - b.t_start, b.d_from)
    }

    pub fn gamma_at(&self, t: f64) -> bool {
        let b = self.active_at(t);
        t < b.t_end && b.gamma
    }

    /// Start time of the next behavior segment strictly after `t`.
    pub fn next_switch_after(&self, t: f64) -> Option<f64> {
        let i = self.segment_index_at(t);
        self.segments.get(i + 1).map(|b| b.t_start).filter(|s| *s > t)
    }

    /// All segment switch times inside `(t0, t1]`.
    pub fn switches_in(&self, t0: f64, t1: f64) -> Vec<f64> {
        self.segments
            .iter()
            .skip(1)
            .map(|b| b.t_start)
            .filter(|s| *s > t0 && *s <= t1)
            .collect()
    }

    /// Check contiguity, bounds, and the gamma/ramp correspondence.
    pub fn validate(&self, params: &RobotParams) -> Result<()> {
        if self.segments.is_empty() {
            return Err(Error::Schedule("schedule has no segments".into()));
        }
        if self.segments[0].t_start != 0.0 {
            return Err(Error::Schedule("first behavior must start at t=0".into()));
        }
        let mut prev_end = 0.0;
        let mut prev_d = self.segments[0].d_from;
        for (i, b) in self.segments.iter().enumerate() {
            if i > 0 && (b.t_start - prev_end).abs() > 1e-12 {
                return Err(Error::Schedule(format!(
                    "behavior {i} starts at {} but previous ends at {prev_end}",
                    b.t_start
                )));
            }
            if b.t_end <= b.t_start {
                return Err(Error::Schedule(format!(
                    "behavior {i} has non-positive duration [{}, {}]",
                    b.t_start, b.t_end
                )));
            }
            if (b.d_from - prev_d).abs() > 1e-12 {
                return Err(Error::Schedule(format!(
                    "behavior {i} starts at width {} but previous ended at {prev_d}",
                    b.d_from
                )));
            }
            let lo = params.track_width0 - 1e-12;
            let hi = params.track_width_max() + 1e-12;
            if b.d_from < lo || b.d_from > hi || b.d_target < lo || b.d_target > hi {
                return Err(Error::Schedule(format!(
                    "behavior {i} leaves the track width range: {} -> {}",
                    b.d_from, b.d_target
                )));
            }
            if b.gamma != (b.kind == BehaviorKind::WidenTrack) {
                return Err(Error::Schedule(format!(
                    "behavior {i}: gamma must mark exactly the widen-track segments"
                )));
            }
            if !b.gamma && b.d_from != b.d_target {
                return Err(Error::Schedule(format!(
                    "behavior {i} changes track width without the event flag"
                )));
            }
            prev_end = b.t_end;
            prev_d = b.d_target;
        }
        if (prev_end - self.total_time).abs() > 1e-9 {
            return Err(Error::Schedule(format!(
                "schedule ends at {prev_end}, run lasts {}",
                self.total_time
            )));
        }
        Ok(())
    }

    /// Schedule the behaviors for one classified obstacle.
    ///
    /// `now` is the time the obstacle became known; adjustment never starts
    /// in the past. Returns the affected time window.
    pub fn insert_obstacle(
        &mut self,
        obs: &Obstacle,
        kind: BehaviorKind,
        path: &RefPath,
        params: &RobotParams,
        cfg: &BehaviorConfig,
        now: f64,
    ) -> Result<(f64, f64)> {
        let window = match kind {
            BehaviorKind::Track => return Ok((now, now)),
            BehaviorKind::RaiseBody | BehaviorKind::Bypass => {
                let t_from = path
                    .time_at_arc(obs.arc_position - cfg.lead_distance)
                    .max(now);
                let t_to = path.time_at_arc(obs.arc_position + cfg.lead_distance);
                self.insert_segment(Behavior {
                    kind,
                    gamma: false,
                    t_start: t_from,
                    t_end: t_to,
                    d_from: f64::NAN, // resolved on rebuild
                    d_target: f64::NAN,
                })?;
                (t_from, t_to)
            }
            BehaviorKind::WidenTrack => {
                let d_target = (obs.width + cfg.width_margin).min(params.track_width_max());
                let t_widen_end = path.time_at_arc(obs.arc_position - cfg.lead_distance);
                let t_widen_start = (t_widen_end - cfg.t_adjust).max(now);
                let t_restore_start = path.time_at_arc(obs.arc_position + cfg.lead_distance);
                let widen = Behavior {
                    kind: BehaviorKind::WidenTrack,
                    gamma: true,
                    t_start: t_widen_start,
                    t_end: t_widen_start + cfg.t_adjust,
                    d_from: f64::NAN,
                    d_target,
                };
                let restore = Behavior {
                    kind: BehaviorKind::WidenTrack,
                    gamma: true,
                    t_start: t_restore_start,
                    t_end: t_restore_start + cfg.t_adjust,
                    d_from: f64::NAN,
                    d_target: params.track_width0,
                };
                if widen.t_end > restore.t_start {
                    return Err(Error::Schedule(format!(
                        "adjustment windows collide around the obstacle at arc {:.2} m",
                        obs.arc_position
                    )));
                }
                self.insert_segment(widen)?;
                self.insert_segment(restore)?;
                (t_widen_start, t_restore_start + cfg.t_adjust)
            }
        };
        self.rebuild(params.track_width0)?;
        Ok(window)
    }

    /// Insert one non-track segment, keeping segments sorted and rejecting
    /// overlap with other non-track segments.
    fn insert_segment(&mut self, seg: Behavior) -> Result<()> {
        if seg.t_end > self.total_time + 1e-9 {
            return Err(Error::Schedule(format!(
                "behavior [{:.3}, {:.3}] extends past the run end {:.3}",
                seg.t_start, seg.t_end, self.total_time
            )));
        }
        for b in &self.segments {
            if b.kind == BehaviorKind::Track {
                continue;
            }
            if seg.t_start < b.t_end && b.t_start < seg.t_end {
                return Err(Error::Schedule(format!(
                    "behavior windows overlap: [{:.3}, {:.3}] vs [{:.3}, {:.3}]",
                    seg.t_start, seg.t_end, b.t_start, b.t_end
                )));
            }
        }
        self.segments.push(seg);
        self.segments
            .sort_by(|a, b| a.t_start.partial_cmp(&b.t_start).unwrap());
        Ok(())
    }

    /// Recompute track fill segments and carry track widths through.
    fn rebuild(&mut self, track_width0: f64) -> Result<()> {
        let specials: Vec<Behavior> = self
            .segments
            .iter()
            .filter(|b| b.kind != BehaviorKind::Track)
            .copied()
            .collect();
        let mut out = Vec::with_capacity(2 * specials.len() + 1);
        let mut cursor = 0.0;
        let mut width = track_width0;
        for mut s in specials {
            if s.t_start > cursor + 1e-12 {
                out.push(Behavior {
                    kind: BehaviorKind::Track,
                    gamma: false,
                    t_start: cursor,
                    t_end: s.t_start,
                    d_from: width,
                    d_target: width,
                });
            } else if s.t_start < cursor - 1e-12 {
                return Err(Error::Schedule(format!(
                    "behavior at {:.3} starts inside the previous one",
                    s.t_start
                )));
            }
            s.d_from = width;
            if s.kind != BehaviorKind::WidenTrack {
                s.d_target = width;
            }
            width = s.d_target;
            cursor = s.t_end;
            out.push(s);
        }
        if cursor < self.total_time - 1e-12 {
            out.push(Behavior {
                kind: BehaviorKind::Track,
                gamma: false,
                t_start: cursor,
                t_end: self.total_time,
                d_from: width,
                d_target: width,
            });
        }
        self.segments = out;
        Ok(())
    }
}

/// Build the full schedule for a known obstacle list (sorted by arc
/// position). Each obstacle is scheduled no earlier than the moment it
/// first enters the perception range.
pub fn build_schedule(
    obstacles: &[Obstacle],
    path: &RefPath,
    lookahead: f64,
    params: &RobotParams,
    cfg: &BehaviorConfig,
    total_time: f64,
) -> Result<BehaviorSchedule> {
    let mut schedule = BehaviorSchedule::single_track(total_time, params.track_width0);
    let mut prev_arc = f64::NEG_INFINITY;
    for obs in obstacles {
        obs.validate()?;
        if obs.arc_position < prev_arc {
            return Err(Error::Schedule(
                "obstacles must be sorted by arc position".into(),
            ));
        }
        prev_arc = obs.arc_position;
        let kind = classify_obstacle(obs, params, cfg.clearance_max);
        let first_seen = path.time_at_arc(obs.arc_position - lookahead).max(0.0);
        schedule.insert_obstacle(obs, kind, path, params, cfg, first_seen)?;
    }
    schedule.validate(params)?;
    Ok(schedule)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reference::{line2_default, RefPath};

    fn params() -> RobotParams {
        RobotParams::default()
    }

    #[test]
    fn trigger_truth() {
        assert!(trigger(1.3, 1.2, 0.4));
        assert!(!trigger(0.5, 1.2, 0.4));
        // Open interval: both boundaries are outside.
        assert!(!trigger(1.2, 1.2, 0.4));
        assert!(!trigger(1.6, 1.2, 0.4));
    }

    #[test]
    fn classify_straddle_obstacle() {
        let p = params();
        let cfg = BehaviorConfig::default();
        let obs = Obstacle {
            arc_position: 10.0,
            width: 1.6,
            height: 0.4,
        };
        assert_eq!(classify_obstacle(&obs, &p, cfg.clearance_max), BehaviorKind::WidenTrack);
        // With less leg stretch the same obstacle cannot be straddled.
        let mut narrow = p.clone();
        narrow.track_stretch_max = 0.3;
        assert_eq!(
            classify_obstacle(&obs, &narrow, cfg.clearance_max),
            BehaviorKind::Bypass
        );
    }

    #[test]
    fn classify_tall_narrow_obstacle() {
        let p = params();
        let obs = Obstacle {
            arc_position: 10.0,
            width: 0.5,
            height: 1.45,
        };
        assert_eq!(classify_obstacle(&obs, &p, 1.5), BehaviorKind::RaiseBody);
    }

    #[test]
    fn classify_pedestrian_height() {
        let p = params();
        let obs = Obstacle {
            arc_position: 10.0,
            width: 0.5,
            height: 1.65,
        };
        assert_eq!(classify_obstacle(&obs, &p, 1.5), BehaviorKind::Bypass);
    }

    #[test]
    fn classify_boundary_widths() {
        let p = params();
        let at = |width: f64| {
            classify_obstacle(
                &Obstacle {
                    arc_position: 0.0,
                    width,
                    height: 0.3,
                },
                &p,
                1.5,
            )
        };
        assert_eq!(at(1.2), BehaviorKind::RaiseBody);
        assert_eq!(at(1.7), BehaviorKind::Bypass);
        assert_eq!(at(2.5), BehaviorKind::Bypass);
    }

    #[test]
    fn ramp_profile() {
        let b = Behavior {
            kind: BehaviorKind::WidenTrack,
            gamma: true,
            t_start: 4.0,
            t_end: 6.0,
            d_from: 1.2,
            d_target: 1.7,
        };
        assert_eq!(polygon_ramp(4.0, &b, 2.0, 1.2), 1.2);
        assert_eq!(polygon_ramp(6.0, &b, 2.0, 1.2), 1.7);
        assert_eq!(polygon_ramp(7.5, &b, 2.0, 1.2), 1.7);
        assert!((polygon_ramp(5.0, &b, 2.0, 1.2) - 1.45).abs() < 1e-15);
    }

    #[test]
    fn empty_schedule_is_one_track_segment() {
        let p = params();
        let path = RefPath::build(&line2_default()).unwrap();
        let s = build_schedule(&[], &path, 10.0, &p, &BehaviorConfig::default(), 26.0).unwrap();
        assert_eq!(s.segments().len(), 1);
        assert_eq!(s.segments()[0].kind, BehaviorKind::Track);
        assert!(!s.gamma_at(13.0));
        assert_eq!(s.track_width_at(13.0), 1.2);
    }

    #[test]
    fn single_straddle_schedule_hand_check() {
        // Straight 52 m at 2 m/s; obstacle at arc 15 m with 3 m lead and
        // 2 s ramps: widen over [4, 6], hold, restore over [9, 11].
        let p = params();
        let path = RefPath::build(&line2_default()).unwrap();
        let obs = Obstacle {
            arc_position: 15.0,
            width: 1.6,
            height: 0.4,
        };
        let s = build_schedule(&[obs], &path, 10.0, &p, &BehaviorConfig::default(), 26.0).unwrap();
        let kinds: Vec<BehaviorKind> = s.segments().iter().map(|b| b.kind).collect();
        assert_eq!(
            kinds,
            vec![
                BehaviorKind::Track,
                BehaviorKind::WidenTrack,
                BehaviorKind::Track,
                BehaviorKind::WidenTrack,
                BehaviorKind::Track,
            ]
        );
        let seg = s.segments();
        assert!((seg[1].t_start - 4.0).abs() < 1e-9);
        assert!((seg[1].t_end - 6.0).abs() < 1e-9);
        assert!((seg[1].d_target - 1.7).abs() < 1e-12);
        assert!((seg[3].t_start - 9.0).abs() < 1e-9);
        assert!((seg[3].t_end - 11.0).abs() < 1e-9);
        assert!((seg[3].d_target - 1.2).abs() < 1e-12);
        assert!(s.gamma_at(5.0));
        assert!(!s.gamma_at(7.0));
        assert!(s.gamma_at(10.0));
        assert!((s.track_width_at(5.0) - 1.45).abs() < 1e-12);
        assert!((s.track_width_at(7.5) - 1.7).abs() < 1e-12);
        assert!((s.track_width_at(12.0) - 1.2).abs() < 1e-12);
        s.validate(&p).unwrap();
    }

    #[test]
    fn two_obstacles_two_gamma_episodes() {
        let p = params();
        let path = RefPath::build(&line2_default()).unwrap();
        let obstacles = [
            Obstacle {
                arc_position: 15.0,
                width: 1.6,
                height: 0.4,
            },
            Obstacle {
                arc_position: 32.0,
                width: 0.5,
                height: 1.45,
            },
        ];
        let s =
            build_schedule(&obstacles, &path, 10.0, &p, &BehaviorConfig::default(), 26.0).unwrap();
        let gammas: Vec<&Behavior> = s.segments().iter().filter(|b| b.gamma).collect();
        assert_eq!(gammas.len(), 2);
        let raises: Vec<&Behavior> = s
            .segments()
            .iter()
            .filter(|b| b.kind == BehaviorKind::RaiseBody)
            .collect();
        assert_eq!(raises.len(), 1);
        assert!(!raises[0].gamma);
        assert!((raises[0].t_start - 14.5).abs() < 1e-9);
        assert!((raises[0].t_end - 17.5).abs() < 1e-9);
        s.validate(&p).unwrap();
    }

    #[test]
    fn colliding_windows_rejected() {
        let p = params();
        let path = RefPath::build(&line2_default()).unwrap();
        let obstacles = [
            Obstacle {
                arc_position: 15.0,
                width: 1.5,
                height: 0.4,
            },
            Obstacle {
                arc_position: 17.0,
                width: 1.5,
                height: 0.4,
            },
        ];
        let err = build_schedule(&obstacles, &path, 10.0, &p, &BehaviorConfig::default(), 26.0)
            .unwrap_err();
        assert!(matches!(err, Error::Schedule(_)), "{err}");
    }

    #[test]
    fn gamma_marks_exactly_the_changing_width() {
        let p = params();
        let path = RefPath::build(&line2_default()).unwrap();
        let obs = Obstacle {
            arc_position: 15.0,
            width: 1.6,
            height: 0.4,
        };
        let s = build_schedule(&[obs], &path, 10.0, &p, &BehaviorConfig::default(), 26.0).unwrap();
        let h = 1e-4;
        let mut t = 0.0;
        while t < 25.9 {
            let changing = (s.track_width_at(t + h) - s.track_width_at(t)).abs() > 1e-12;
            // Sample away from segment boundaries to avoid edge ambiguity.
            let near_boundary = s
                .segments()
                .iter()
                .any(|b| (t - b.t_start).abs() < 2.0 * h || (t - b.t_end).abs() < 2.0 * h);
            if !near_boundary {
                assert_eq!(s.gamma_at(t), changing, "t = {t}");
            }
            let d = s.track_width_at(t);
            assert!((1.2..=1.7 + 1e-12).contains(&d));
            t += 0.05;
        }
    }

    #[test]
    fn next_switch_lookup() {
        let p = params();
        let path = RefPath::build(&line2_default()).unwrap();
        let obs = Obstacle {
            arc_position: 15.0,
            width: 1.6,
            height: 0.4,
        };
        let s = build_schedule(&[obs], &path, 10.0, &p, &BehaviorConfig::default(), 26.0).unwrap();
        assert!((s.next_switch_after(0.0).unwrap() - 4.0).abs() < 1e-9);
        assert!((s.next_switch_after(4.5).unwrap() - 6.0).abs() < 1e-9);
        assert_eq!(s.next_switch_after(25.0), None);
        let sw = s.switches_in(0.0, 26.0);
        assert_eq!(sw.len(), 4);
    }
}
