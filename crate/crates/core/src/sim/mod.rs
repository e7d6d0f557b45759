//! Filippov solutions of switched systems: fixed-step RK4 inside regions,
//! bisection event localisation on the cubic Hermite interpolant, and
//! first-order sliding along codimension-one boundaries.

mod output;

use std::collections::{BTreeMap, VecDeque};
use std::fmt;

use crate::error::{Error, Result};
use crate::poly::{PolyVector, Polynomial};
use crate::sampling::{rng, uniform_point};
use crate::system::{BoundaryVariety, BoxDomain, SwitchedSystem};

pub use output::write_csv;

/// Smallest `|<n, F_j - F_i>| / (|n| (|F_i| + |F_j|))` for which a sliding
/// weight is defined.
pub const TANGENCY_TOL: f64 = 1e-12;
/// Slack on `alpha in [0, 1]` before sliding is left.
pub const ALPHA_HYSTERESIS: f64 = 1e-9;

#[derive(Clone, Debug)]
pub struct SimConfig {
    pub step: f64,
    /// Localisation target for `|chi_ij|` at events.
    pub event_tol: f64,
    pub t_end: f64,
    /// Simplex weights per region; single-vertex regions may be omitted.
    pub theta: BTreeMap<usize, Vec<f64>>,
    /// Radius of the ball in which a trajectory counts as converged.
    pub ball_stop: f64,
    /// Escape is declared outside the system box scaled by this factor
    /// about its centre.
    pub escape_factor: f64,
    /// Crossings of one boundary within `chatter_window` steps that trigger
    /// the chattering guard.
    pub chatter_crossings: usize,
    pub chatter_window: usize,
    pub max_halvings: u32,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            step: 1e-3,
            event_tol: 1e-9,
            t_end: 50.0,
            theta: BTreeMap::new(),
            ball_stop: 1e-4,
            escape_factor: 2.0,
            chatter_crossings: 50,
            chatter_window: 100,
            max_halvings: 3,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopReason {
    Converged,
    Escaped,
    StratumStop,
    Underflow,
}

impl StopReason {
    pub fn as_str(self) -> &'static str {
        match self {
            StopReason::Converged => "converged",
            StopReason::Escaped => "escaped",
            StopReason::StratumStop => "stratum_stop",
            StopReason::Underflow => "underflow",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Smooth(usize),
    Sliding(usize, usize),
    Stopped(StopReason),
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mode::Smooth(i) => write!(f, "smooth:{i}"),
            Mode::Sliding(i, j) => write!(f, "sliding:{i}-{j}"),
            Mode::Stopped(r) => write!(f, "stopped:{}", r.as_str()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryPoint {
    pub t: f64,
    pub x: Vec<f64>,
    pub mode: Mode,
    pub alpha: Option<f64>,
    pub psi: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EventKind {
    Crossing,
    SlidingEntry,
    SlidingExit,
    Converged,
    Escaped,
    StratumStop,
    Tangency,
    StepHalved,
    Underflow,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Crossing => "crossing",
            EventKind::SlidingEntry => "sliding_entry",
            EventKind::SlidingExit => "sliding_exit",
            EventKind::Converged => "converged",
            EventKind::Escaped => "escaped",
            EventKind::StratumStop => "stratum_stop",
            EventKind::Tangency => "tangency",
            EventKind::StepHalved => "step_halved",
            EventKind::Underflow => "underflow",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Event {
    pub t: f64,
    pub kind: EventKind,
    pub x: Vec<f64>,
    pub detail: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trajectory {
    pub points: Vec<TrajectoryPoint>,
    pub events: Vec<Event>,
}

impl Trajectory {
    pub fn last(&self) -> &TrajectoryPoint {
        self.points.last().expect("trajectory has at least its initial point")
    }

    pub fn first_event(&self, kind: EventKind) -> Option<&Event> {
        self.events.iter().find(|e| e.kind == kind)
    }

    pub fn converged(&self) -> bool {
        self.first_event(EventKind::Converged).is_some()
    }

    /// State at time `t` by linear interpolation between recorded points.
    pub fn state_at(&self, t: f64) -> Option<Vec<f64>> {
        let k = self.points.partition_point(|p| p.t < t);
        if k == 0 {
            return (self.points.first()?.t == t).then(|| self.points[0].x.clone());
        }
        let b = self.points.get(k)?;
        let a = &self.points[k - 1];
        let s = (t - a.t) / (b.t - a.t);
        Some(a.x.iter().zip(&b.x).map(|(u, v)| u + s * (v - u)).collect())
    }
}

fn axpy(x: &[f64], a: f64, y: &[f64]) -> Vec<f64> {
    x.iter().zip(y).map(|(u, v)| u + a * v).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| u * v).sum()
}

fn norm(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

fn finite(x: &[f64]) -> bool {
    x.iter().all(|v| v.is_finite())
}

fn rk4(f: &impl Fn(&[f64]) -> Vec<f64>, x: &[f64], h: f64) -> Vec<f64> {
    let k1 = f(x);
    let k2 = f(&axpy(x, 0.5 * h, &k1));
    let k3 = f(&axpy(x, 0.5 * h, &k2));
    let k4 = f(&axpy(x, h, &k3));
    x.iter()
        .enumerate()
        .map(|(i, xi)| xi + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect()
}

/// One classical Runge-Kutta step of `x' = F_region(x, theta)`. `None` when
/// the step overflows.
pub fn step_smooth(
    sys: &SwitchedSystem,
    region: usize,
    x: &[f64],
    h: f64,
    theta: &[f64],
) -> Result<Option<Vec<f64>>> {
    let f = sys.field_at(region, theta)?;
    let next = rk4(&|y: &[f64]| f.eval(y), x, h);
    Ok(finite(&next).then_some(next))
}

/// Cubic Hermite interpolant on one step.
fn hermite(x0: &[f64], f0: &[f64], x1: &[f64], f1: &[f64], h: f64, s: f64) -> Vec<f64> {
    let s2 = s * s;
    let s3 = s2 * s;
    let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
    let h10 = s3 - 2.0 * s2 + s;
    let h01 = -2.0 * s3 + 3.0 * s2;
    let h11 = s3 - s2;
    (0..x0.len())
        .map(|i| h00 * x0[i] + h10 * h * f0[i] + h01 * x1[i] + h11 * h * f1[i])
        .collect()
}

/// Finds `s in [0, 1]` with `|g(s)| <= tol`, given `g(0) >= -tol` and
/// `g(1) < -tol`. Returns `None` if the bracket collapses first.
fn bisect(g: impl Fn(f64) -> f64, tol: f64) -> Option<f64> {
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    if g(0.0).abs() <= tol {
        return Some(0.0);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let v = g(mid);
        if v.abs() <= tol {
            return Some(mid);
        }
        if v < 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= f64::EPSILON * 4.0 {
            return None;
        }
    }
    None
}

/// A located boundary event.
#[derive(Clone, Debug, PartialEq)]
pub enum CrossingEvent {
    Boundary {
        pair: (usize, usize),
        fraction: f64,
        x: Vec<f64>,
    },
    /// Several boundaries change sign at one instant: a codimension-two stratum.
    Stratum {
        pairs: Vec<(usize, usize)>,
        fraction: f64,
        x: Vec<f64>,
    },
}

fn locate_on_path(
    boundaries: &[(usize, &BoundaryVariety, f64)],
    path: &impl Fn(f64) -> Vec<f64>,
    tol: f64,
) -> Result<Option<CrossingEvent>> {
    let mut hits: Vec<((usize, usize), f64, Vec<f64>)> = Vec::new();
    for &(_, b, sign) in boundaries {
        let grad = b.chi.gradient();
        // Signed distance estimate, so the tolerance is geometric even where
        // grad chi is small.
        let g = |s: f64| {
            let x = path(s);
            let v = b.chi.eval(&x);
            let gn = norm(&grad.eval(&x));
            sign * if gn > 0.0 { v / gn } else { v }
        };
        if g(1.0) < -tol && g(0.0) >= -tol {
            match bisect(g, tol) {
                Some(s) => hits.push((b.pair(), s, path(s))),
                None => {
                    return Err(Error::Configuration(format!(
                        "event localisation on boundary ({}, {}) underflowed",
                        b.i, b.j
                    )))
                }
            }
        }
    }
    if hits.is_empty() {
        return Ok(None);
    }
    hits.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (pair, s, x) = hits[0].clone();
    let simultaneous: Vec<(usize, usize)> = hits
        .iter()
        .filter(|h| {
            let p = &h.2;
            norm(&axpy(p, -1.0, &x)) <= tol.sqrt()
        })
        .map(|h| h.0)
        .collect();
    if simultaneous.len() > 1 {
        return Ok(Some(CrossingEvent::Stratum {
            pairs: simultaneous,
            fraction: s,
            x,
        }));
    }
    Ok(Some(CrossingEvent::Boundary { pair, fraction: s, x }))
}

/// Sign changes of any boundary polynomial along the straight segment from
/// `x_prev` to `x_next`, localised by bisection.
pub fn detect_crossing(
    sys: &SwitchedSystem,
    x_prev: &[f64],
    x_next: &[f64],
    event_tol: f64,
) -> Result<Option<CrossingEvent>> {
    if !finite(x_prev) || !finite(x_next) {
        return Err(Error::Configuration("crossing test on non-finite states".into()));
    }
    let signed: Vec<(usize, &BoundaryVariety, f64)> = sys
        .boundaries()
        .iter()
        .enumerate()
        .filter_map(|(k, b)| {
            let a = b.chi.eval(x_prev);
            let c = b.chi.eval(x_next);
            (a * c < 0.0 || (a != 0.0 && c.abs() <= event_tol && a.abs() > event_tol))
                .then_some((k, b, a.signum()))
        })
        .collect();
    let path = |s: f64| axpy(x_prev, s, &axpy(x_next, -1.0, x_prev));
    locate_on_path(&signed, &path, event_tol)
}

/// `alpha = <n, F_j> / <n, F_j - F_i>` with `n = grad chi_ij(x)`.
#[derive(Clone, Debug, PartialEq)]
pub enum SlidingWeight {
    Alpha(f64),
    /// Denominator below [`TANGENCY_TOL`] relative to `|n| (|F_i| + |F_j|)`.
    Tangency,
    /// `grad chi_ij(x) = 0`.
    Singular,
}

pub fn sliding_weight_vectors(n: &[f64], fi: &[f64], fj: &[f64]) -> SlidingWeight {
    if norm(n) == 0.0 {
        return SlidingWeight::Singular;
    }
    let b = dot(n, fj);
    let den = b - dot(n, fi);
    // Relative test: near the origin every normal component is tiny.
    let scale = norm(n) * (norm(fi) + norm(fj));
    if den.abs() <= TANGENCY_TOL * scale || den == 0.0 {
        return SlidingWeight::Tangency;
    }
    SlidingWeight::Alpha(b / den)
}

/// Sliding weight of the boundary between `pair.0` and `pair.1` at `x`.
pub fn sliding_weight(
    sys: &SwitchedSystem,
    pair: (usize, usize),
    x: &[f64],
    theta: &BTreeMap<usize, Vec<f64>>,
) -> Result<SlidingWeight> {
    let b = sys.boundary(pair.0, pair.1)?;
    let (i, j) = b.pair();
    let fi = sys.field_at(i, &theta_for(sys, theta, i)?)?.eval(x);
    let fj = sys.field_at(j, &theta_for(sys, theta, j)?)?.eval(x);
    let n = b.chi.gradient().eval(x);
    Ok(sliding_weight_vectors(&n, &fi, &fj))
}

fn theta_for(sys: &SwitchedSystem, theta: &BTreeMap<usize, Vec<f64>>, region: usize) -> Result<Vec<f64>> {
    match theta.get(&region) {
        Some(t) => Ok(t.clone()),
        None => {
            let l = sys.dynamics(region)?.len();
            if l == 1 {
                Ok(vec![1.0])
            } else {
                Err(Error::OffSimplex(format!(
                    "region {region} has {l} vertex fields; weights are required"
                )))
            }
        }
    }
}

/// Precomputed per-run data.
struct Setup<'a> {
    sys: &'a SwitchedSystem,
    fields: BTreeMap<usize, PolyVector>,
    grads: Vec<PolyVector>,
    /// Sign of `chi_ij` inside region `i` and inside region `j` per boundary.
    sides: Vec<(f64, f64)>,
    escape: BoxDomain,
    family: Option<&'a BTreeMap<usize, Polynomial>>,
}

fn side_sign(sys: &SwitchedSystem, b: &BoundaryVariety, region: usize) -> Result<f64> {
    let r = sys.region(region)?;
    for w in &r.witnesses {
        let v = b.chi.eval(w);
        if v != 0.0 {
            return Ok(v.signum());
        }
    }
    let mut g = rng(region as u64);
    for _ in 0..100_000 {
        let x = uniform_point(&mut g, sys.bounds());
        if r.contains(&x, 0.0) {
            let v = b.chi.eval(&x);
            if v.abs() > 1e-9 {
                return Ok(v.signum());
            }
        }
    }
    Err(Error::InvalidSystem(format!(
        "cannot tell on which side of boundary ({}, {}) region {region} lies",
        b.i, b.j
    )))
}

impl<'a> Setup<'a> {
    fn new(
        sys: &'a SwitchedSystem,
        cfg: &SimConfig,
        family: Option<&'a BTreeMap<usize, Polynomial>>,
    ) -> Result<Self> {
        let mut fields = BTreeMap::new();
        for id in sys.region_ids() {
            fields.insert(id, sys.field_at(id, &theta_for(sys, &cfg.theta, id)?)?);
        }
        let mut sides = Vec::new();
        for b in sys.boundaries() {
            let si = side_sign(sys, b, b.i)?;
            let sj = side_sign(sys, b, b.j).unwrap_or(-si);
            sides.push((si, sj));
        }
        Ok(Self {
            sys,
            fields,
            grads: sys.boundaries().iter().map(|b| b.chi.gradient()).collect(),
            sides,
            escape: sys.bounds().enlarged(cfg.escape_factor),
            family,
        })
    }

    fn field(&self, region: usize, x: &[f64]) -> Vec<f64> {
        self.fields[&region].eval(x)
    }

    fn boundary_index(&self, pair: (usize, usize)) -> usize {
        self.sys
            .boundaries()
            .iter()
            .position(|b| b.joins(pair.0, pair.1))
            .expect("pair comes from the system")
    }

    fn side(&self, k: usize, region: usize) -> f64 {
        let b = &self.sys.boundaries()[k];
        if region == b.i {
            self.sides[k].0
        } else {
            self.sides[k].1
        }
    }

    fn weight(&self, k: usize, x: &[f64]) -> SlidingWeight {
        let b = &self.sys.boundaries()[k];
        let n = self.grads[k].eval(x);
        sliding_weight_vectors(&n, &self.field(b.i, x), &self.field(b.j, x))
    }

    fn sliding_field(&self, k: usize, x: &[f64]) -> Vec<f64> {
        let b = &self.sys.boundaries()[k];
        let fi = self.field(b.i, x);
        let fj = self.field(b.j, x);
        let n = self.grads[k].eval(x);
        let a = match sliding_weight_vectors(&n, &fi, &fj) {
            SlidingWeight::Alpha(a) => a.clamp(0.0, 1.0),
            _ => 0.5,
        };
        let mut fs: Vec<f64> = fi.iter().zip(&fj).map(|(u, v)| a * u + (1.0 - a) * v).collect();
        // Remove the residual normal component left by clamping.
        let nn = dot(&n, &n);
        if nn > 0.0 {
            let c = dot(&n, &fs) / nn;
            fs = axpy(&fs, -c, &n);
        }
        fs
    }

    /// Newton projection onto `chi_k = 0`.
    fn project(&self, k: usize, x: &[f64], tol: f64) -> Vec<f64> {
        let chi = &self.sys.boundaries()[k].chi;
        let mut y = x.to_vec();
        // Newton to well below `tol` in distance: the sliding weight is
        // sensitive to the residual normal offset near singular points.
        for _ in 0..50 {
            let v = chi.eval(&y);
            let n = self.grads[k].eval(&y);
            let nn = dot(&n, &n);
            if nn == 0.0 || v.abs() <= 1e-6 * tol * nn.sqrt() {
                break;
            }
            let next = axpy(&y, -v / nn, &n);
            if next == y {
                break;
            }
            y = next;
        }
        y
    }

    fn psi(&self, mode: Mode, x: &[f64]) -> Option<f64> {
        let fam = self.family?;
        let r = match mode {
            Mode::Smooth(i) | Mode::Sliding(i, _) => i,
            Mode::Stopped(_) => return None,
        };
        fam.get(&r).map(|v| v.eval(x))
    }

    /// Boundaries adjacent to `region` with the sign making `chi` non-negative
    /// inside it.
    fn adjacent(&self, region: usize) -> Vec<(usize, &'a BoundaryVariety, f64)> {
        let sys = self.sys;
        sys.boundaries()
            .iter()
            .enumerate()
            .filter(|(_, b)| b.i == region || b.j == region)
            .map(|(k, b)| (k, b, self.side(k, region)))
            .collect()
    }
}

/// Result of arriving at (or starting on) a boundary.
enum Arrival {
    Slide(f64),
    Enter(usize),
    Stratum,
}

fn decide(setup: &Setup, k: usize, x: &[f64], from: Option<usize>) -> Arrival {
    let b = &setup.sys.boundaries()[k];
    let (i, j) = b.pair();
    let n = setup.grads[k].eval(x);
    if norm(&n) == 0.0 {
        return Arrival::Stratum;
    }
    let fi = setup.field(i, x);
    let fj = setup.field(j, x);
    // Positive when the region's own field points into the region.
    let into_i = setup.side(k, i) * dot(&n, &fi);
    let into_j = setup.side(k, j) * dot(&n, &fj);
    match sliding_weight_vectors(&n, &fi, &fj) {
        SlidingWeight::Alpha(a)
            if (-ALPHA_HYSTERESIS..=1.0 + ALPHA_HYSTERESIS).contains(&a)
                && into_i <= 0.0
                && into_j <= 0.0 =>
        {
            Arrival::Slide(a.clamp(0.0, 1.0))
        }
        _ => {
            let other = |r: usize| if r == i { j } else { i };
            let target = match from {
                Some(r) if (if r == i { into_j } else { into_i }) >= 0.0 => other(r),
                Some(r) => r,
                None if into_i > 0.0 => i,
                None if into_j > 0.0 => j,
                None => i.min(j),
            };
            Arrival::Enter(target)
        }
    }
}

struct Run<'a> {
    setup: Setup<'a>,
    cfg: &'a SimConfig,
    traj: Trajectory,
}

impl Run<'_> {
    fn push(&mut self, t: f64, x: Vec<f64>, mode: Mode, alpha: Option<f64>) {
        if let Some(last) = self.traj.points.last() {
            if t <= last.t {
                return;
            }
        }
        let psi = self.setup.psi(mode, &x);
        self.traj.points.push(TrajectoryPoint { t, x, mode, alpha, psi });
    }

    fn event(&mut self, t: f64, kind: EventKind, x: &[f64], detail: String) {
        self.traj.events.push(Event {
            t,
            kind,
            x: x.to_vec(),
            detail,
        });
    }

    fn stop(&mut self, t: f64, x: &[f64], reason: StopReason, kind: EventKind, detail: String) {
        self.event(t, kind, x, detail);
        if let Some(last) = self.traj.points.last_mut() {
            if last.t == t {
                last.mode = Mode::Stopped(reason);
                return;
            }
        }
        self.traj.points.push(TrajectoryPoint {
            t,
            x: x.to_vec(),
            mode: Mode::Stopped(reason),
            alpha: None,
            psi: None,
        });
    }

    /// Converged or escaped at `x`?
    fn terminal(&mut self, t: f64, x: &[f64]) -> bool {
        if !finite(x) || !self.setup.escape.contains(x, 0.0) {
            self.stop(t, x, StopReason::Escaped, EventKind::Escaped, "left the enlarged box".into());
            return true;
        }
        if norm(x) <= self.cfg.ball_stop {
            self.stop(
                t,
                x,
                StopReason::Converged,
                EventKind::Converged,
                format!("|x| <= {}", self.cfg.ball_stop),
            );
            return true;
        }
        false
    }
}

/// Integrates the Filippov solution from `x0`. With a Lyapunov `family`,
/// the switched function value of the current mode is recorded at every
/// accepted point.
pub fn simulate(
    sys: &SwitchedSystem,
    x0: &[f64],
    cfg: &SimConfig,
    family: Option<&BTreeMap<usize, Polynomial>>,
) -> Result<Trajectory> {
    if x0.len() != sys.dim() {
        return Err(Error::DimensionMismatch {
            expected: sys.dim(),
            found: x0.len(),
        });
    }
    if !(cfg.step > 0.0 && cfg.event_tol > 0.0 && cfg.t_end > 0.0) {
        return Err(Error::Configuration(
            "step, event_tol and t_end must be positive".into(),
        ));
    }
    if !sys.bounds().contains(x0, 1e-12) {
        return Err(Error::Configuration(format!(
            "initial state {x0:?} lies outside the system box"
        )));
    }
    if let Some(fam) = family {
        for id in sys.region_ids() {
            if !fam.contains_key(&id) {
                return Err(Error::Document(format!("no Lyapunov polynomial for region {id}")));
            }
        }
    }
    let setup = Setup::new(sys, cfg, family)?;
    let mut run = Run {
        setup,
        cfg,
        traj: Trajectory::default(),
    };

    let mut t = 0.0;
    let mut x = x0.to_vec();
    let regions = sys.locate(&x, cfg.event_tol)?;
    let mut mode = Mode::Smooth(*regions.iter().next().expect("locate is non-empty"));
    if regions.len() > 1 {
        let ids: Vec<usize> = regions.iter().copied().collect();
        if let Ok(b) = sys.boundary(ids[0], ids[1]) {
            let k = run.setup.boundary_index(b.pair());
            match decide(&run.setup, k, &x, None) {
                Arrival::Slide(_) => {
                    x = run.setup.project(k, &x, cfg.event_tol);
                    mode = Mode::Sliding(b.i, b.j);
                }
                Arrival::Enter(r) => mode = Mode::Smooth(r),
                Arrival::Stratum => {
                    run.push(t, x.clone(), mode, None);
                    run.stop(t, &x, StopReason::StratumStop, EventKind::StratumStop, "singular boundary point".into());
                    return Ok(run.traj);
                }
            }
        }
    }
    let alpha0 = match mode {
        Mode::Sliding(i, j) => match run.setup.weight(run.setup.boundary_index((i, j)), &x) {
            SlidingWeight::Alpha(a) => Some(a.clamp(0.0, 1.0)),
            _ => None,
        },
        _ => None,
    };
    run.push(t, x.clone(), mode, alpha0);
    if let Mode::Sliding(..) = mode {
        run.event(t, EventKind::SlidingEntry, &x, "started on an attractive boundary".into());
    }
    if run.terminal(t, &x) {
        return Ok(run.traj);
    }

    let mut h = cfg.step;
    let mut step_index = 0usize;
    let mut crossings: VecDeque<(usize, usize)> = VecDeque::new();
    let mut halvings = 0u32;
    let mut force_sliding = false;
    let t_eps = 1e-12 * cfg.t_end.max(1.0);

    while t < cfg.t_end - t_eps {
        step_index += 1;
        let dt = h.min(cfg.t_end - t);
        match mode {
            Mode::Smooth(i) => {
                let f = |y: &[f64]| run.setup.field(i, y);
                let x_next = rk4(&f, &x, dt);
                if !finite(&x_next) {
                    run.stop(t + dt, &x, StopReason::Escaped, EventKind::Escaped, "field evaluation overflowed".into());
                    break;
                }
                let f0 = f(&x);
                let f1 = f(&x_next);
                let path = |s: f64| hermite(&x, &f0, &x_next, &f1, dt, s);
                let adjacent = run.setup.adjacent(i);
                let located = match locate_on_path(&adjacent, &path, cfg.event_tol) {
                    Ok(v) => v,
                    Err(e) => {
                        run.stop(t, &x, StopReason::Underflow, EventKind::Underflow, e.to_string());
                        break;
                    }
                };
                match located {
                    None => {
                        t += dt;
                        x = x_next;
                        run.push(t, x.clone(), mode, None);
                        if run.terminal(t, &x) {
                            break;
                        }
                    }
                    Some(CrossingEvent::Stratum { pairs, fraction, x: xe }) => {
                        let te = t + fraction * dt;
                        run.push(te, xe.clone(), mode, None);
                        run.stop(te, &xe, StopReason::StratumStop, EventKind::StratumStop, format!("simultaneous boundaries {pairs:?}"));
                        break;
                    }
                    Some(CrossingEvent::Boundary { pair, fraction, x: xe }) => {
                        let te = t + fraction * dt;
                        let k = run.setup.boundary_index(pair);
                        t = te;
                        x = xe;
                        run.push(t, x.clone(), mode, None);
                        if run.terminal(t, &x) {
                            break;
                        }
                        let mut arrival = decide(&run.setup, k, &x, Some(i));
                        if force_sliding {
                            if let Arrival::Enter(_) = arrival {
                                if let SlidingWeight::Alpha(a) = run.setup.weight(k, &x) {
                                    arrival = Arrival::Slide(a.clamp(0.0, 1.0));
                                }
                            }
                        }
                        match arrival {
                            Arrival::Stratum => {
                                run.stop(t, &x, StopReason::StratumStop, EventKind::StratumStop, format!("grad chi {pair:?} vanishes"));
                                break;
                            }
                            Arrival::Slide(a) => {
                                x = run.setup.project(k, &x, cfg.event_tol);
                                mode = Mode::Sliding(pair.0, pair.1);
                                run.event(t, EventKind::SlidingEntry, &x, format!("alpha = {a}"));
                                if let Some(last) = run.traj.points.last_mut() {
                                    last.mode = mode;
                                    last.alpha = Some(a);
                                    last.x = x.clone();
                                }
                            }
                            Arrival::Enter(r) => {
                                if r != i {
                                    run.event(t, EventKind::Crossing, &x, format!("{i} -> {r}"));
                                    crossings.push_back((step_index, k));
                                }
                                mode = Mode::Smooth(r);
                                if r == i {
                                    // Grazing contact: nudge along the field to avoid re-detection.
                                    run.event(t, EventKind::Tangency, &x, format!("boundary {pair:?}"));
                                }
                            }
                        }
                        while crossings
                            .front()
                            .is_some_and(|&(s, _)| s + cfg.chatter_window < step_index)
                        {
                            crossings.pop_front();
                        }
                        let same = crossings.iter().filter(|c| c.1 == k).count();
                        if same > cfg.chatter_crossings {
                            crossings.clear();
                            if halvings < cfg.max_halvings {
                                halvings += 1;
                                h *= 0.5;
                                run.event(t, EventKind::StepHalved, &x, format!("step = {h}"));
                            } else {
                                force_sliding = true;
                            }
                        }
                    }
                }
            }
            Mode::Sliding(i, j) => {
                let k = run.setup.boundary_index((i, j));
                let setup = &run.setup;
                let slide_to = |s: f64| -> Vec<f64> {
                    let y = rk4(&|z: &[f64]| setup.sliding_field(k, z), &x, s * dt);
                    setup.project(k, &y, cfg.event_tol)
                };
                let x_next = slide_to(1.0);
                if !finite(&x_next) {
                    run.stop(t + dt, &x, StopReason::Escaped, EventKind::Escaped, "field evaluation overflowed".into());
                    break;
                }
                match setup.weight(k, &x_next) {
                    SlidingWeight::Singular => {
                        t += dt;
                        x = x_next;
                        run.push(t, x.clone(), mode, None);
                        run.stop(t, &x, StopReason::StratumStop, EventKind::StratumStop, "grad chi vanishes while sliding".into());
                        break;
                    }
                    SlidingWeight::Alpha(a)
                        if (-ALPHA_HYSTERESIS..=1.0 + ALPHA_HYSTERESIS).contains(&a) =>
                    {
                        t += dt;
                        x = x_next;
                        run.push(t, x.clone(), mode, Some(a.clamp(0.0, 1.0)));
                        if run.terminal(t, &x) {
                            break;
                        }
                    }
                    w => {
                        // alpha left [0, 1] (or the fields became tangent): localise the exit.
                        let target = match w {
                            SlidingWeight::Alpha(a) if a > 1.0 => 1.0,
                            _ => 0.0,
                        };
                        let g = |s: f64| -> f64 {
                            match setup.weight(k, &slide_to(s)) {
                                SlidingWeight::Alpha(a) if target == 1.0 => 1.0 - a,
                                SlidingWeight::Alpha(a) => a,
                                _ => -1.0,
                            }
                        };
                        let s = bisect(g, ALPHA_HYSTERESIS).unwrap_or(1.0);
                        let xe = slide_to(s);
                        let te = t + s * dt;
                        let exit = if target == 1.0 { i } else { j };
                        t = te;
                        x = xe;
                        run.push(t, x.clone(), mode, Some(target));
                        run.event(t, EventKind::SlidingExit, &x, format!("alpha -> {target}, into region {exit}"));
                        mode = Mode::Smooth(exit);
                        if run.terminal(t, &x) {
                            break;
                        }
                        if s == 0.0 {
                            // Exit at the current point: take a smooth step immediately.
                            continue;
                        }
                    }
                }
            }
            Mode::Stopped(_) => break,
        }
    }
    Ok(run.traj)
}

/// Runs every `(x0, theta)` combination, in parallel, in input order.
pub fn simulate_many(
    sys: &SwitchedSystem,
    starts: &[Vec<f64>],
    thetas: &[BTreeMap<usize, Vec<f64>>],
    cfg: &SimConfig,
    family: Option<&BTreeMap<usize, Polynomial>>,
) -> Vec<Result<Trajectory>> {
    use rayon::prelude::*;
    let jobs: Vec<(&Vec<f64>, &BTreeMap<usize, Vec<f64>>)> =
        thetas.iter().flat_map(|th| starts.iter().map(move |x| (x, th))).collect();
    jobs.par_iter()
        .map(|(x0, th)| {
            let c = SimConfig {
                theta: (*th).clone(),
                ..cfg.clone()
            };
            simulate(sys, x0, &c, family)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::library;

    #[test]
    fn rk4_scalar_decay() {
        let sys = library::scalar_linear(-1.0);
        let mut x = vec![1.0];
        for _ in 0..10 {
            x = step_smooth(&sys, 1, &x, 0.1, &[1.0]).unwrap().unwrap();
        }
        assert!((x[0] - (-1.0f64).exp()).abs() <= 1e-6);
    }

    #[test]
    fn zero_field_is_stationary() {
        let sys = library::half_planes([0.0, 0.0], [0.0, 0.0]);
        let x = step_smooth(&sys, 1, &[0.3, 0.7], 0.5, &[1.0]).unwrap().unwrap();
        assert_eq!(x, vec![0.3, 0.7]);
    }

    #[test]
    fn decoupled_first_component() {
        let sys = library::quadrant_system();
        let x = step_smooth(&sys, 1, &[1.0, 1.0], 0.01, &[1.0, 0.0]).unwrap().unwrap();
        assert!((x[0] - (-0.01f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn straight_line_crossing() {
        let sys = library::opposing_fields();
        let c = detect_crossing(&sys, &[0.0, 0.5], &[0.0, -0.5], 1e-9).unwrap();
        match c {
            Some(CrossingEvent::Boundary { pair, fraction, .. }) => {
                assert_eq!(pair, (1, 2));
                assert!((fraction - 0.5).abs() < 1e-9);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(detect_crossing(&sys, &[0.0, 0.5], &[1.0, 0.2], 1e-9).unwrap().is_none());
    }

    #[test]
    fn sliding_weight_examples() {
        let n = [0.0, 1.0];
        assert_eq!(sliding_weight_vectors(&n, &[1.0, -1.0], &[1.0, 1.0]), SlidingWeight::Alpha(0.5));
        match sliding_weight_vectors(&n, &[2.0, -1.0], &[1.0, 3.0]) {
            SlidingWeight::Alpha(a) => {
                assert!((a - 0.75).abs() < 1e-15);
                let fs = [a * 2.0 + (1.0 - a) * 1.0, a * -1.0 + (1.0 - a) * 3.0];
                assert!((fs[0] - 1.75).abs() < 1e-15 && fs[1].abs() <= 1e-9);
            }
            other => panic!("unexpected {other:?}"),
        }
        match sliding_weight_vectors(&n, &[1.0, -1.0], &[1.0, -3.0]) {
            SlidingWeight::Alpha(a) => assert!(!(0.0..=1.0).contains(&a)),
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(sliding_weight_vectors(&n, &[1.0, 1.0], &[2.0, 1.0]), SlidingWeight::Tangency);
        assert_eq!(sliding_weight_vectors(&[0.0, 0.0], &[1.0, 1.0], &[2.0, 1.0]), SlidingWeight::Singular);
    }

    #[test]
    fn scalar_convergence_time() {
        let sys = library::scalar_linear(-1.0);
        let cfg = SimConfig {
            t_end: 20.0,
            ..SimConfig::default()
        };
        let tr = simulate(&sys, &[1.0], &cfg, None).unwrap();
        let e = tr.first_event(EventKind::Converged).unwrap();
        let expected = (1.0f64 / 1e-4).ln();
        assert!((e.t - expected).abs() / expected < 0.01);
    }

    #[test]
    fn opposing_fields_slide() {
        let sys = library::opposing_fields();
        let cfg = SimConfig {
            t_end: 1.0,
            ..SimConfig::default()
        };
        let tr = simulate(&sys, &[0.0, 0.5], &cfg, None).unwrap();
        let entry = tr.first_event(EventKind::SlidingEntry).unwrap();
        assert!((entry.t - 0.5).abs() < 1e-6);
        let last = tr.last();
        assert!((last.t - 1.0).abs() < 1e-12);
        assert!((last.x[0] - 1.0).abs() < 1e-6 && last.x[1].abs() <= 1e-8);
        assert!(matches!(last.mode, Mode::Sliding(1, 2)));
        assert!(tr.points.windows(2).all(|w| w[0].t < w[1].t));
    }

    #[test]
    fn aligned_fields_cross() {
        let sys = library::aligned_fields();
        let cfg = SimConfig {
            t_end: 1.0,
            ..SimConfig::default()
        };
        let tr = simulate(&sys, &[1.0, -0.5], &cfg, None).unwrap();
        let c = tr.first_event(EventKind::Crossing).unwrap_or_else(|| panic!("{:?} {:?}", tr.events, tr.last()));
        assert!((c.t - 0.5).abs() < 1e-6);
        assert!(tr.first_event(EventKind::SlidingEntry).is_none());
        assert!(matches!(tr.last().mode, Mode::Smooth(1)));
    }

    #[test]
    fn start_outside_box_is_rejected() {
        let sys = library::quadrant_system();
        assert!(simulate(&sys, &[3.0, 0.0], &SimConfig::default(), None).is_err());
    }

    #[test]
    fn sliding_exit_when_field_turns() {
        // Below x2 = 0 the field pushes up only while x1 < 1.
        use crate::poly::parse;
        use crate::system::{SemiAlgebraicRegion, SubsystemDynamics};
        use std::collections::BTreeSet;
        let base = library::opposing_fields();
        let lower = PolyVector::new(vec![parse("1", 2).unwrap(), parse("1 - x1", 2).unwrap()]).unwrap();
        let mut dynamics = BTreeMap::new();
        dynamics.insert(1, base.dynamics(1).unwrap().clone());
        dynamics.insert(2, SubsystemDynamics::new(vec![lower]).unwrap());
        let regions: Vec<SemiAlgebraicRegion> = base.regions().to_vec();
        let sys = SwitchedSystem::new(
            "turning",
            base.bounds().clone(),
            regions,
            base.boundaries().to_vec(),
            dynamics,
            BTreeSet::new(),
        )
        .unwrap();
        let cfg = SimConfig {
            t_end: 2.0,
            ..SimConfig::default()
        };
        let tr = simulate(&sys, &[0.0, 0.5], &cfg, None).unwrap();
        let exit = tr.first_event(EventKind::SlidingExit).expect("exit");
        // alpha = (1 - x1) / (2 - x1) reaches 0 at x1 = 1, i.e. t = 1.
        assert!((exit.t - 1.0).abs() < 1e-6, "exit at {}", exit.t);
        for p in &tr.points {
            if let Mode::Sliding(..) = p.mode {
                let a = p.alpha.unwrap();
                assert!((0.0..=1.0).contains(&a));
                assert!(p.x[1].abs() <= 10.0 * cfg.event_tol);
            }
        }
        assert!(matches!(tr.last().mode, Mode::Smooth(2)));
    }
}
