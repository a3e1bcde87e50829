//! Reference trajectories: path geometry, arc-length parameterization,
//! curvature, and per-instant tracking targets.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::EPS_GUARD;

/// Tracking target at one instant along a path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferencePoint {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    /// Heading (rad), continuous along the path (not wrapped).
    pub heading: f64,
    /// Target speed along the path (m/s).
    pub speed: f64,
    /// Turning curvature magnitude (1/m).
    pub curvature: f64,
    /// Turning direction: +1 left, 0 straight, -1 right.
    pub direction: i8,
}

/// Target speed as a function of arc position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SpeedProfile {
    Constant(f64),
    /// Piecewise-linear `(arc position, speed)` rows, ascending in arc.
    Table(Vec<[f64; 2]>),
}

impl SpeedProfile {
    pub fn at(&self, s: f64) -> f64 {
        match self {
            SpeedProfile::Constant(v) => *v,
            SpeedProfile::Table(rows) => {
                if rows.is_empty() {
                    return 0.0;
                }
                if s <= rows[0][0] {
                    return rows[0][1];
                }
                for pair in rows.windows(2) {
                    let ([s0, v0], [s1, v1]) = (pair[0], pair[1]);
                    if s <= s1 {
                        let f = (s - s0) / (s1 - s0);
                        return v0 + f * (v1 - v0);
                    }
                }
                rows[rows.len() - 1][1]
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            SpeedProfile::Constant(v) => {
                if !(*v > 0.0) {
                    return Err(Error::Parse(format!("path speed must be positive, got {v}")));
                }
            }
            SpeedProfile::Table(rows) => {
                if rows.is_empty() {
                    return Err(Error::Parse("speed table must not be empty".into()));
                }
                for pair in rows.windows(2) {
                    if pair[1][0] <= pair[0][0] {
                        return Err(Error::Parse(
                            "speed table arc positions must be strictly ascending".into(),
                        ));
                    }
                }
                if rows.iter().any(|r| !(r[1] > 0.0)) {
                    return Err(Error::Parse("speed table speeds must be positive".into()));
                }
            }
        }
        Ok(())
    }
}

/// Path geometry kinds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PathKind {
    /// Straight run along +X of the given length (m).
    Straight { length: f64 },
    /// Single lane change: straight lead-in, a C2 sigmoid blend to the
    /// lateral offset over the transition length, straight lead-out.
    /// All distances in meters of forward travel.
    LaneChange {
        lead_in: f64,
        transition: f64,
        offset: f64,
        lead_out: f64,
    },
    /// Circular arc of the given radius and arc length; `direction` +1 for
    /// a left (counter-clockwise) turn, -1 for right.
    Circle {
        radius: f64,
        direction: i8,
        arc_length: f64,
    },
    /// Time-stamped waypoints `(t, x, y)` joined by natural cubic splines.
    /// The time column defines the speed; the path speed profile is ignored.
    Waypoints { points: Vec<[f64; 3]> },
}

/// A declarative path: geometry plus target speed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSpec {
    #[serde(flatten)]
    pub kind: PathKind,
    pub speed: SpeedProfile,
}

/// The "Line 1" preset: a single lane change, the standard tracking test.
pub fn line1_default() -> PathSpec {
    PathSpec {
        kind: PathKind::LaneChange {
            lead_in: 5.0,
            transition: 25.0,
            offset: 3.5,
            lead_out: 10.0,
        },
        speed: SpeedProfile::Constant(2.0),
    }
}

/// The "Line 2" preset: a longer straight run passing the obstacle stations
/// used by the obstacle-crossing scenarios.
pub fn line2_default() -> PathSpec {
    PathSpec {
        kind: PathKind::Straight { length: 52.0 },
        speed: SpeedProfile::Constant(2.0),
    }
}

/// Turning curvature magnitude and direction from path derivatives.
///
/// `K = |x' y'' - x'' y'| / (x'^2 + y'^2)^(3/2)`; the direction is the sign
/// of the planar cross product (left positive). Near-zero speed is
/// degenerate and reports straight driving.
pub fn curvature_direction(dx: f64, dy: f64, ddx: f64, ddy: f64) -> (f64, i8) {
    let speed_sq = dx * dx + dy * dy;
    if speed_sq.sqrt() < EPS_GUARD {
        return (0.0, 0);
    }
    let cross = dx * ddy - ddx * dy;
    let k = cross.abs() / speed_sq.powf(1.5);
    let dir = if cross > 0.0 {
        1
    } else if cross < 0.0 {
        -1
    } else {
        0
    };
    (k, dir)
}

/// Quintic blend: 0 to 1 with zero first and second derivatives at both
/// ends, so a lane change built on it is C2 and starts and ends straight.
fn blend(xi: f64) -> f64 {
    xi * xi * xi * (10.0 - 15.0 * xi + 6.0 * xi * xi)
}

fn blend_d1(xi: f64) -> f64 {
    30.0 * xi * xi * (1.0 - xi) * (1.0 - xi)
}

fn blend_d2(xi: f64) -> f64 {
    60.0 * xi * (1.0 - xi) * (1.0 - 2.0 * xi)
}

/// Lateral profile of a lane change as a function of forward position.
/// Returns `(y, dy/dx, d2y/dx2)`.
fn lane_profile(x: f64, lead_in: f64, transition: f64, offset: f64) -> (f64, f64, f64) {
    let xi = (x - lead_in) / transition;
    if xi <= 0.0 {
        (0.0, 0.0, 0.0)
    } else if xi >= 1.0 {
        (offset, 0.0, 0.0)
    } else {
        (
            offset * blend(xi),
            offset / transition * blend_d1(xi),
            offset / (transition * transition) * blend_d2(xi),
        )
    }
}

/// Natural cubic spline through `(t_i, v_i)` knots.
#[derive(Debug, Clone)]
struct Spline {
    t: Vec<f64>,
    a: Vec<f64>,
    b: Vec<f64>,
    c: Vec<f64>,
    d: Vec<f64>,
}

impl Spline {
    fn new(t: &[f64], v: &[f64]) -> Spline {
        let n = t.len();
        let a = v.to_vec();
        let mut b = vec![0.0; n];
        let mut c = vec![0.0; n];
        let mut d = vec![0.0; n];
        if n >= 3 {
            let h: Vec<f64> = (0..n - 1).map(|i| t[i + 1] - t[i]).collect();
            let mut alpha = vec![0.0; n];
            for i in 1..n - 1 {
                alpha[i] = 3.0 / h[i] * (a[i + 1] - a[i]) - 3.0 / h[i - 1] * (a[i] - a[i - 1]);
            }
            let mut l = vec![1.0; n];
            let mut mu = vec![0.0; n];
            let mut z = vec![0.0; n];
            for i in 1..n - 1 {
                l[i] = 2.0 * (t[i + 1] - t[i - 1]) - h[i - 1] * mu[i - 1];
                mu[i] = h[i] / l[i];
                z[i] = (alpha[i] - h[i - 1] * z[i - 1]) / l[i];
            }
            for j in (0..n - 1).rev() {
                c[j] = z[j] - mu[j] * c[j + 1];
                b[j] = (a[j + 1] - a[j]) / h[j] - h[j] * (c[j + 1] + 2.0 * c[j]) / 3.0;
                d[j] = (c[j + 1] - c[j]) / (3.0 * h[j]);
            }
        } else if n == 2 {
            b[0] = (a[1] - a[0]) / (t[1] - t[0]);
        }
        Spline {
            t: t.to_vec(),
            a,
            b,
            c,
            d,
        }
    }

    fn segment(&self, x: f64) -> usize {
        match self.t.binary_search_by(|v| v.partial_cmp(&x).unwrap()) {
            Ok(i) => i.min(self.t.len() - 2),
            Err(i) => i.saturating_sub(1).min(self.t.len() - 2),
        }
    }

    fn eval(&self, x: f64) -> (f64, f64, f64) {
        let i = self.segment(x);
        let dx = x - self.t[i];
        let v = self.a[i] + dx * (self.b[i] + dx * (self.c[i] + dx * self.d[i]));
        let d1 = self.b[i] + dx * (2.0 * self.c[i] + dx * 3.0 * self.d[i]);
        let d2 = 2.0 * self.c[i] + 6.0 * self.d[i] * dx;
        (v, d1, d2)
    }
}

/// Monotone lookup table pairing two ascending sequences.
#[derive(Debug, Clone)]
struct MonotoneMap {
    from: Vec<f64>,
    to: Vec<f64>,
}

impl MonotoneMap {
    fn lookup(&self, x: f64) -> f64 {
        let n = self.from.len();
        if x <= self.from[0] {
            return self.to[0];
        }
        if x >= self.from[n - 1] {
            return self.to[n - 1];
        }
        let i = match self
            .from
            .binary_search_by(|v| v.partial_cmp(&x).unwrap())
        {
            Ok(i) => return self.to[i],
            Err(i) => i - 1,
        };
        let f = (x - self.from[i]) / (self.from[i + 1] - self.from[i]);
        self.to[i] + f * (self.to[i + 1] - self.to[i])
    }
}

#[derive(Debug, Clone)]
enum Geometry {
    Straight {
        length: f64,
    },
    LaneChange {
        lead_in: f64,
        transition: f64,
        offset: f64,
        total_x: f64,
        /// Arc length at each node of a uniform x grid.
        arc_of_x: Vec<f64>,
        dx_grid: f64,
    },
    Circle {
        radius: f64,
        direction: i8,
    },
    Waypoints {
        sx: Spline,
        sy: Spline,
        arc_of_t: MonotoneMap,
    },
}

/// A compiled path: geometry with arc-length and timing tables.
#[derive(Debug, Clone)]
pub struct RefPath {
    geom: Geometry,
    speed: SpeedProfile,
    duration: f64,
    total_arc: f64,
    /// Time at uniformly spaced arc samples (for `time_at_arc`), and the
    /// inverse direction for `arc_at_time`.
    time_of_arc: MonotoneMap,
}

const LANE_GRID_STEP: f64 = 0.002;
const TIME_GRID_STEP: f64 = 0.001;

impl RefPath {
    pub fn build(spec: &PathSpec) -> Result<RefPath> {
        spec.speed.validate()?;
        match &spec.kind {
            PathKind::Straight { length } => {
                if !(*length > 0.0) {
                    return Err(Error::Parse("straight path length must be positive".into()));
                }
                Self::from_geometry(Geometry::Straight { length: *length }, *length, &spec.speed)
            }
            PathKind::LaneChange {
                lead_in,
                transition,
                offset,
                lead_out,
            } => {
                if !(*transition > 0.0) || *lead_in < 0.0 || *lead_out < 0.0 {
                    return Err(Error::Parse(
                        "lane change needs positive transition and non-negative leads".into(),
                    ));
                }
                let total_x = lead_in + transition + lead_out;
                let n = (total_x / LANE_GRID_STEP).ceil() as usize;
                let dx_grid = total_x / n as f64;
                let mut arc = Vec::with_capacity(n + 1);
                arc.push(0.0);
                let integrand = |x: f64| {
                    let (_, d1, _) = lane_profile(x, *lead_in, *transition, *offset);
                    (1.0 + d1 * d1).sqrt()
                };
                let mut acc = 0.0;
                for i in 0..n {
                    let x0 = i as f64 * dx_grid;
                    let x1 = x0 + dx_grid;
                    // Simpson on each grid cell.
                    acc += dx_grid / 6.0
                        * (integrand(x0) + 4.0 * integrand(0.5 * (x0 + x1)) + integrand(x1));
                    arc.push(acc);
                }
                let total_arc = acc;
                Self::from_geometry(
                    Geometry::LaneChange {
                        lead_in: *lead_in,
                        transition: *transition,
                        offset: *offset,
                        total_x,
                        arc_of_x: arc,
                        dx_grid,
                    },
                    total_arc,
                    &spec.speed,
                )
            }
            PathKind::Circle {
                radius,
                direction,
                arc_length,
            } => {
                if !(*radius > 0.0) || !(*arc_length > 0.0) {
                    return Err(Error::Parse(
                        "circle needs positive radius and arc length".into(),
                    ));
                }
                if !matches!(direction, -1 | 1) {
                    return Err(Error::Parse("circle direction must be 1 or -1".into()));
                }
                Self::from_geometry(
                    Geometry::Circle {
                        radius: *radius,
                        direction: *direction,
                    },
                    *arc_length,
                    &spec.speed,
                )
            }
            PathKind::Waypoints { points } => {
                if points.len() < 3 {
                    return Err(Error::Parse("waypoint path needs at least 3 points".into()));
                }
                for pair in points.windows(2) {
                    if pair[1][0] <= pair[0][0] {
                        return Err(Error::Parse(
                            "waypoint times must be strictly ascending".into(),
                        ));
                    }
                }
                let t0 = points[0][0];
                let t: Vec<f64> = points.iter().map(|p| p[0] - t0).collect();
                let xs: Vec<f64> = points.iter().map(|p| p[1]).collect();
                let ys: Vec<f64> = points.iter().map(|p| p[2]).collect();
                let sx = Spline::new(&t, &xs);
                let sy = Spline::new(&t, &ys);
                let t1 = *t.last().unwrap();
                // Cumulative arc over a fine time grid.
                let n = (t1 / TIME_GRID_STEP).ceil().max(8.0) as usize;
                let dt = t1 / n as f64;
                let speed_at = |tt: f64| {
                    let (_, dx, _) = sx.eval(tt);
                    let (_, dy, _) = sy.eval(tt);
                    (dx * dx + dy * dy).sqrt()
                };
                let mut ts = Vec::with_capacity(n + 1);
                let mut ss = Vec::with_capacity(n + 1);
                ts.push(0.0);
                ss.push(0.0);
                let mut acc = 0.0;
                for i in 0..n {
                    let a = i as f64 * dt;
                    let b = a + dt;
                    acc += dt / 6.0 * (speed_at(a) + 4.0 * speed_at(0.5 * (a + b)) + speed_at(b));
                    ts.push(b);
                    ss.push(acc);
                }
                let total_arc = acc;
                let arc_of_t = MonotoneMap {
                    from: ts.clone(),
                    to: ss.clone(),
                };
                let time_of_arc = MonotoneMap { from: ss, to: ts };
                Ok(RefPath {
                    geom: Geometry::Waypoints { sx, sy, arc_of_t },
                    speed: spec.speed.clone(),
                    duration: t1,
                    total_arc,
                    time_of_arc,
                })
            }
        }
    }

    /// Shared constructor for arc-parameterized geometries: builds the
    /// time/arc correspondence from the speed profile.
    fn from_geometry(geom: Geometry, total_arc: f64, speed: &SpeedProfile) -> Result<RefPath> {
        let (ts, ss, duration) = match speed {
            SpeedProfile::Constant(v) => {
                let duration = total_arc / v;
                (vec![0.0, duration], vec![0.0, total_arc], duration)
            }
            SpeedProfile::Table(_) => {
                // Integrate ds/dt = v(s) on a fine grid.
                let mut ts = vec![0.0];
                let mut ss = vec![0.0];
                let mut s = 0.0;
                let mut t = 0.0;
                let dt = TIME_GRID_STEP;
                while s < total_arc {
                    // RK4 on the scalar ODE.
                    let k1 = speed.at(s);
                    let k2 = speed.at(s + 0.5 * dt * k1);
                    let k3 = speed.at(s + 0.5 * dt * k2);
                    let k4 = speed.at(s + dt * k3);
                    s += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
                    t += dt;
                    ts.push(t);
                    ss.push(s.min(total_arc));
                    if ts.len() > 50_000_000 {
                        return Err(Error::Parse("speed profile never finishes the path".into()));
                    }
                }
                let duration = t;
                (ts, ss, duration)
            }
        };
        Ok(RefPath {
            geom,
            speed: speed.clone(),
            duration,
            total_arc,
            time_of_arc: MonotoneMap { from: ss, to: ts },
        })
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    pub fn total_arc(&self) -> f64 {
        self.total_arc
    }

    pub fn arc_at_time(&self, t: f64) -> f64 {
        match &self.geom {
            Geometry::Waypoints { arc_of_t, .. } => arc_of_t.lookup(t),
            _ => match &self.speed {
                SpeedProfile::Constant(v) => (v * t).clamp(0.0, self.total_arc),
                SpeedProfile::Table(_) => {
                    // Inverse of the time_of_arc table.
                    let m = MonotoneMap {
                        from: self.time_of_arc.to.clone(),
                        to: self.time_of_arc.from.clone(),
                    };
                    m.lookup(t)
                }
            },
        }
    }

    pub fn time_at_arc(&self, s: f64) -> f64 {
        self.time_of_arc.lookup(s)
    }

    /// Position, heading, signed curvature at arc position `s`.
    fn geometry_at_arc(&self, s: f64) -> (f64, f64, f64, f64) {
        match &self.geom {
            Geometry::Straight { .. } => (s, 0.0, 0.0, 0.0),
            Geometry::LaneChange {
                lead_in,
                transition,
                offset,
                total_x,
                arc_of_x,
                dx_grid,
            } => {
                let x = invert_arc(
                    arc_of_x,
                    *dx_grid,
                    *total_x,
                    s,
                    |x| {
                        let (_, d1, _) = lane_profile(x, *lead_in, *transition, *offset);
                        (1.0 + d1 * d1).sqrt()
                    },
                );
                let (y, d1, d2) = lane_profile(x, *lead_in, *transition, *offset);
                let heading = d1.atan();
                let curv = d2 / (1.0 + d1 * d1).powf(1.5);
                (x, y, heading, curv)
            }
            Geometry::Circle { radius, direction } => {
                let phi = s / radius;
                let dir = f64::from(*direction);
                (
                    radius * phi.sin(),
                    dir * radius * (1.0 - phi.cos()),
                    dir * phi,
                    dir / radius,
                )
            }
            Geometry::Waypoints { .. } => unreachable!("waypoints sample by time"),
        }
    }

    /// Sample the tracking target at time `t`. Errors outside the path's
    /// time range.
    pub fn sample(&self, t: f64) -> Result<ReferencePoint> {
        if t < -1e-9 || t > self.duration + 1e-9 {
            return Err(Error::Range(format!(
                "t={t:.6} outside path range [0, {:.6}]",
                self.duration
            )));
        }
        let t = t.clamp(0.0, self.duration);
        match &self.geom {
            Geometry::Waypoints { sx, sy, .. } => {
                let (x, dx, ddx) = sx.eval(t);
                let (y, dy, ddy) = sy.eval(t);
                let (curvature, direction) = curvature_direction(dx, dy, ddx, ddy);
                Ok(ReferencePoint {
                    t,
                    x,
                    y,
                    heading: dy.atan2(dx),
                    speed: (dx * dx + dy * dy).sqrt(),
                    curvature,
                    direction,
                })
            }
            _ => {
                let s = self.arc_at_time(t);
                let (x, y, heading, curv_signed) = self.geometry_at_arc(s);
                let direction = if curv_signed > 0.0 {
                    1
                } else if curv_signed < 0.0 {
                    -1
                } else {
                    0
                };
                Ok(ReferencePoint {
                    t,
                    x,
                    y,
                    heading,
                    speed: self.speed.at(s),
                    curvature: curv_signed.abs(),
                    direction,
                })
            }
        }
    }

    /// Arc position of the path point nearest to `(x, y)`.
    ///
    /// Coarse scan over ~0.05 m samples refined by parabolic interpolation;
    /// adequate for obstacle perception, not for survey-grade matching.
    pub fn project_arc(&self, x: f64, y: f64) -> f64 {
        let n = ((self.total_arc / 0.05).ceil() as usize).max(4);
        let ds = self.total_arc / n as f64;
        let dist_sq = |s: f64| {
            let t = self.time_at_arc(s);
            let p = self.sample(t).expect("in-range sample");
            (p.x - x) * (p.x - x) + (p.y - y) * (p.y - y)
        };
        let mut best_i = 0usize;
        let mut best = f64::INFINITY;
        for i in 0..=n {
            let v = dist_sq(i as f64 * ds);
            if v < best {
                best = v;
                best_i = i;
            }
        }
        let s0 = best_i as f64 * ds;
        if best_i == 0 || best_i == n {
            return s0;
        }
        // One parabolic refinement through the three neighboring samples.
        let (f_m, f_0, f_p) = (dist_sq(s0 - ds), best, dist_sq(s0 + ds));
        let denom = f_m - 2.0 * f_0 + f_p;
        if denom.abs() < 1e-18 {
            return s0;
        }
        (s0 + 0.5 * ds * (f_m - f_p) / denom).clamp(0.0, self.total_arc)
    }
}

/// Invert a tabulated arc function: find `x` with `arc(x) = s`, refining a
/// table bracket with Newton steps on locally integrated arc length.
fn invert_arc(
    arc_of_x: &[f64],
    dx_grid: f64,
    total_x: f64,
    s: f64,
    integrand: impl Fn(f64) -> f64,
) -> f64 {
    let n = arc_of_x.len() - 1;
    if s <= 0.0 {
        return 0.0;
    }
    if s >= arc_of_x[n] {
        return total_x;
    }
    let i = match arc_of_x.binary_search_by(|v| v.partial_cmp(&s).unwrap()) {
        Ok(i) => return (i as f64) * dx_grid,
        Err(i) => i - 1,
    };
    let x_node = i as f64 * dx_grid;
    let s_node = arc_of_x[i];
    // Newton on g(x) = s_node + simpson(x_node..x) - s.
    let mut x = x_node + (s - s_node) / integrand(x_node);
    for _ in 0..3 {
        let h = x - x_node;
        let seg = h / 6.0
            * (integrand(x_node) + 4.0 * integrand(x_node + 0.5 * h) + integrand(x));
        x -= (s_node + seg - s) / integrand(x);
        x = x.clamp(x_node, x_node + dx_grid);
    }
    x
}
