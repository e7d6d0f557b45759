//! Solver-free refutation of candidate Lyapunov families by dense sampling.
//!
//! The oracle only ever reports "no violation found" or a concrete violating
//! point; passing is evidence, not proof.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::poly::{PolyVector, Polynomial};
use crate::sampling::{bisect_root, grid_points, rng, uniform_point, uniform_points};
use crate::system::{BoundaryVariety, BoxDomain, SemiAlgebraicRegion, SwitchedSystem};

#[derive(Clone, Debug)]
pub struct OracleConfig {
    pub grid_per_dim: usize,
    pub random_samples: usize,
    /// Radius of the ball around the origin excluded from strict conditions.
    pub exclusion_radius: f64,
    /// Largest scaled violation still accepted.
    pub tolerance: f64,
    pub seed: u64,
    /// Sampling box; the system box when `None`.
    pub bounds: Option<BoxDomain>,
    /// Membership tolerance for region samples.
    pub membership_tol: f64,
    pub boundary_samples: usize,
    /// Target `|chi_ij|` for refined boundary points.
    pub boundary_tol: f64,
    /// Segment draws per boundary point before giving up.
    pub boundary_attempts: usize,
    /// Minimum region survivors before a warning is issued.
    pub min_survivors: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            grid_per_dim: 101,
            random_samples: 100_000,
            exclusion_radius: 1e-3,
            tolerance: 1e-6,
            seed: 0,
            bounds: None,
            membership_tol: 1e-9,
            boundary_samples: 10_000,
            boundary_tol: 1e-12,
            boundary_attempts: 50,
            min_survivors: 100,
        }
    }
}

impl OracleConfig {
    fn grid_len(&self, dim: usize) -> usize {
        // Keep dense grids affordable in higher dimensions.
        let mut per = self.grid_per_dim;
        while per > 2 && (per as f64).powi(dim as i32) > 2e6 {
            per -= 1;
        }
        per
    }
}

/// Points of the sampling box (grid then random) that satisfy `region`
/// and lie outside the exclusion ball.
#[derive(Clone, Debug)]
pub struct SampleSet {
    pub points: Vec<Vec<f64>>,
    pub warnings: Vec<String>,
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn candidate_points(bounds: &BoxDomain, cfg: &OracleConfig) -> Vec<Vec<f64>> {
    let mut pts = grid_points(bounds, cfg.grid_len(bounds.dim()));
    pts.extend(uniform_points(cfg.seed, bounds, cfg.random_samples));
    pts
}

fn filter_region(
    region: &SemiAlgebraicRegion,
    candidates: &[Vec<f64>],
    cfg: &OracleConfig,
) -> SampleSet {
    let points: Vec<Vec<f64>> = candidates
        .par_iter()
        .filter(|x| norm(x) >= cfg.exclusion_radius && region.contains(x, cfg.membership_tol))
        .cloned()
        .collect();
    let mut warnings = Vec::new();
    if points.is_empty() {
        warnings.push(format!(
            "region {}: no sample survived the membership filter",
            region.id
        ));
    } else if points.len() < cfg.min_survivors {
        warnings.push(format!(
            "region {}: only {} samples survived the membership filter",
            region.id,
            points.len()
        ));
    }
    SampleSet { points, warnings }
}

pub fn sample_region(region: &SemiAlgebraicRegion, bounds: &BoxDomain, cfg: &OracleConfig) -> SampleSet {
    let b = cfg.bounds.as_ref().unwrap_or(bounds);
    filter_region(region, &candidate_points(b, cfg), cfg)
}

/// Points with `|chi| <= boundary_tol`, each refined by bisection along a
/// random segment whose endpoints straddle a sign change.
pub fn sample_boundary(boundary: &BoundaryVariety, bounds: &BoxDomain, cfg: &OracleConfig) -> SampleSet {
    let b = cfg.bounds.as_ref().unwrap_or(bounds);
    let seed = cfg.seed ^ 0x9e37_79b9_7f4a_7c15 ^ ((boundary.i as u64) << 32 | boundary.j as u64);
    let mut r = rng(seed);
    let mut points = Vec::with_capacity(cfg.boundary_samples);
    let mut failures = 0usize;
    'outer: for _ in 0..cfg.boundary_samples {
        for _ in 0..cfg.boundary_attempts {
            let a = uniform_point(&mut r, b);
            let c = uniform_point(&mut r, b);
            if let Some(x) = bisect_root(&boundary.chi, &a, &c, cfg.boundary_tol) {
                if norm(&x) >= cfg.exclusion_radius {
                    points.push(x);
                    continue 'outer;
                }
            }
        }
        failures += 1;
        if points.is_empty() && failures >= 3 {
            break;
        }
    }
    let mut warnings = Vec::new();
    if points.is_empty() {
        warnings.push(format!(
            "boundary ({}, {}): no point with chi = 0 found in the box",
            boundary.i, boundary.j
        ));
    } else if failures > 0 {
        warnings.push(format!(
            "boundary ({}, {}): {failures} of {} requested points could not be located",
            boundary.i, boundary.j, cfg.boundary_samples
        ));
    }
    SampleSet { points, warnings }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Condition {
    /// `V_i > 0` on the region.
    Positivity,
    /// `<grad V_i, f_il> < 0` on the region for every vertex.
    LieRegion,
    /// `<grad V_i, f_jl> < 0` on the boundary with region `j`.
    LieBoundary,
    /// `V_i = V_j` on the boundary.
    Continuity,
    /// `V_i(0) = 0` for regions containing the origin.
    OriginValue,
}

impl Condition {
    pub fn as_str(self) -> &'static str {
        match self {
            Condition::Positivity => "positivity",
            Condition::LieRegion => "lie_region",
            Condition::LieBoundary => "lie_boundary",
            Condition::Continuity => "continuity",
            Condition::OriginValue => "origin_value",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [
            Condition::Positivity,
            Condition::LieRegion,
            Condition::LieBoundary,
            Condition::Continuity,
            Condition::OriginValue,
        ]
        .into_iter()
        .find(|c| c.as_str() == s)
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Outcome of one condition on one region, vertex or boundary.
#[derive(Clone, Debug, PartialEq)]
pub struct ConditionRecord {
    pub condition: Condition,
    pub scope: String,
    pub samples: usize,
    /// Largest scaled violation; negative when the condition holds with room.
    pub worst_violation: f64,
    /// Unscaled value of the tested expression at the worst point.
    pub worst_value: f64,
    pub worst_point: Option<Vec<f64>>,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OracleReport {
    pub records: Vec<ConditionRecord>,
    pub warnings: Vec<String>,
    pub seed: u64,
    pub tolerance: f64,
    pub exclusion_radius: f64,
}

impl OracleReport {
    pub fn passed(&self) -> bool {
        self.records.iter().all(|r| r.passed)
    }

    pub fn condition_passed(&self, c: Condition) -> bool {
        self.records.iter().filter(|r| r.condition == c).all(|r| r.passed)
    }

    pub fn records_for(&self, c: Condition) -> impl Iterator<Item = &ConditionRecord> {
        self.records.iter().filter(move |r| r.condition == c)
    }

    /// First failing record in report order.
    pub fn first_failure(&self) -> Option<&ConditionRecord> {
        self.records.iter().find(|r| !r.passed)
    }

    pub fn verdict(&self) -> String {
        match self.first_failure() {
            None => "no-violation-found".into(),
            Some(r) => format!(
                "violated-at({})",
                r.worst_point
                    .as_ref()
                    .map(|p| format!("{p:?}"))
                    .unwrap_or_else(|| "no samples".into())
            ),
        }
    }
}

impl fmt::Display for OracleReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in &self.records {
            writeln!(
                f,
                "[{}] {} {}: {} samples, worst scaled violation {:.3e} (value {:.3e}){}",
                if r.passed { "pass" } else { "FAIL" },
                r.condition,
                r.scope,
                r.samples,
                r.worst_violation,
                r.worst_value,
                r.worst_point
                    .as_ref()
                    .map(|p| format!(" at {p:?}"))
                    .unwrap_or_default()
            )?;
        }
        for w in &self.warnings {
            writeln!(f, "warning: {w}")?;
        }
        writeln!(f, "verdict: {}", self.verdict())
    }
}

/// Which vertex combinations and cross-boundary pairs to test.
#[derive(Clone, Debug, Default)]
pub struct VerifyScope {
    /// Weight vectors per region; every vertex when absent.
    pub thetas: BTreeMap<usize, Vec<Vec<f64>>>,
    /// Ordered pairs `(i, j)` whose cross condition `<grad V_i, F_j>` is
    /// checked; every ordered boundary pair when `None`.
    pub cross_pairs: Option<BTreeSet<(usize, usize)>>,
}

#[derive(Clone, Copy)]
struct Worst {
    violation: f64,
    value: f64,
    index: usize,
}

fn pick(a: Option<Worst>, b: Option<Worst>) -> Option<Worst> {
    match (a, b) {
        (None, x) | (x, None) => x,
        (Some(a), Some(b)) => {
            // NaN never hides: it compares as the worst possible violation.
            let av = if a.violation.is_nan() { f64::INFINITY } else { a.violation };
            let bv = if b.violation.is_nan() { f64::INFINITY } else { b.violation };
            if av > bv || (av == bv && a.index < b.index) {
                Some(a)
            } else {
                Some(b)
            }
        }
    }
}

/// Max of `violation(x)` over `points`, ties broken by the lower index so the
/// parallel reduction is deterministic.
fn worst_over(points: &[Vec<f64>], violation: impl Fn(&[f64]) -> (f64, f64) + Sync) -> Option<Worst> {
    points
        .par_iter()
        .enumerate()
        .map(|(index, x)| {
            let (violation, value) = violation(x);
            Some(Worst {
                violation,
                value,
                index,
            })
        })
        .reduce(|| None, pick)
}

fn scale(x: &[f64], deg: u32) -> f64 {
    1.0 + norm(x).powi(deg as i32)
}

fn record(
    condition: Condition,
    scope: String,
    points: &[Vec<f64>],
    worst: Option<Worst>,
    tol: f64,
    empty_fails: bool,
) -> ConditionRecord {
    match worst {
        None => ConditionRecord {
            condition,
            scope,
            samples: 0,
            worst_violation: 0.0,
            worst_value: 0.0,
            worst_point: None,
            passed: !empty_fails,
        },
        Some(w) => ConditionRecord {
            condition,
            scope,
            samples: points.len(),
            worst_violation: w.violation,
            worst_value: w.value,
            worst_point: Some(points[w.index].clone()),
            passed: w.violation <= tol,
        },
    }
}

fn lie_records(
    condition: Condition,
    scope: &str,
    v: &Polynomial,
    fields: &[(String, PolyVector)],
    points: &[Vec<f64>],
    tol: f64,
    empty_fails: bool,
) -> Result<Vec<ConditionRecord>> {
    let mut out = Vec::new();
    for (name, f) in fields {
        let l = v.lie_derivative(f)?;
        let d = l.degree();
        let w = worst_over(points, |x| {
            let val = l.eval(x);
            (val / scale(x, d), val)
        });
        out.push(record(condition, format!("{scope}, {name}"), points, w, tol, empty_fails));
    }
    Ok(out)
}

/// Samples the Lyapunov conditions for one polynomial per region.
pub fn verify_certificate(
    sys: &SwitchedSystem,
    family: &BTreeMap<usize, Polynomial>,
    scope: &VerifyScope,
    cfg: &OracleConfig,
) -> Result<OracleReport> {
    let ids: BTreeSet<usize> = sys.region_ids().collect();
    let given: BTreeSet<usize> = family.keys().copied().collect();
    if ids != given {
        return Err(Error::Document(format!(
            "expected one Lyapunov polynomial for each of the regions {ids:?}, got {given:?}"
        )));
    }
    for v in family.values() {
        if v.dim() != sys.dim() {
            return Err(Error::DimensionMismatch {
                expected: sys.dim(),
                found: v.dim(),
            });
        }
    }
    let bounds = cfg.bounds.clone().unwrap_or_else(|| sys.bounds().clone());
    let candidates = candidate_points(&bounds, cfg);
    let tol = cfg.tolerance;
    let mut records = Vec::new();
    let mut warnings = Vec::new();

    let fields_of = |id: usize| -> Result<Vec<(String, PolyVector)>> {
        let dynamics = sys.dynamics(id)?;
        match scope.thetas.get(&id) {
            Some(thetas) => thetas
                .iter()
                .map(|t| Ok((format!("theta {t:?}"), dynamics.combine(t)?)))
                .collect(),
            None => Ok(dynamics
                .vertices()
                .iter()
                .enumerate()
                .map(|(l, f)| (format!("vertex {}", l + 1), f.clone()))
                .collect()),
        }
    };

    for region in sys.regions() {
        let v = &family[&region.id];
        let samples = filter_region(region, &candidates, cfg);
        warnings.extend(samples.warnings.iter().cloned());
        let pts = &samples.points;
        let scope_name = format!("region {}", region.id);

        let d = v.degree();
        let w = worst_over(pts, |x| {
            let val = v.eval(x);
            (-val / scale(x, d), val)
        });
        records.push(record(Condition::Positivity, scope_name.clone(), pts, w, tol, true));
        records.extend(lie_records(
            Condition::LieRegion,
            &scope_name,
            v,
            &fields_of(region.id)?,
            pts,
            tol,
            true,
        )?);
    }

    for b in sys.boundaries() {
        let samples = sample_boundary(b, &bounds, cfg);
        warnings.extend(samples.warnings.iter().cloned());
        let pts = &samples.points;
        let (vi, vj) = (&family[&b.i], &family[&b.j]);
        let diff = vi - vj;
        let d = vi.degree().max(vj.degree());
        let w = worst_over(pts, |x| {
            let val = diff.eval(x);
            (val.abs() / scale(x, d), val)
        });
        records.push(record(
            Condition::Continuity,
            format!("boundary ({}, {})", b.i, b.j),
            pts,
            w,
            tol,
            false,
        ));
        for (i, j) in [(b.i, b.j), (b.j, b.i)] {
            if let Some(pairs) = &scope.cross_pairs {
                if !pairs.contains(&(i, j)) {
                    continue;
                }
            }
            records.extend(lie_records(
                Condition::LieBoundary,
                &format!("V{i} along region {j}"),
                &family[&i],
                &fields_of(j)?,
                pts,
                tol,
                false,
            )?);
        }
    }

    let origin = vec![0.0; sys.dim()];
    for id in sys.origin_regions() {
        let val = family[id].eval(&origin);
        records.push(ConditionRecord {
            condition: Condition::OriginValue,
            scope: format!("region {id}"),
            samples: 1,
            worst_violation: val.abs(),
            worst_value: val,
            worst_point: Some(origin.clone()),
            passed: val.abs() <= tol,
        });
    }

    Ok(OracleReport {
        records,
        warnings,
        seed: cfg.seed,
        tolerance: tol,
        exclusion_radius: cfg.exclusion_radius,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::parse;
    use crate::system::library;

    fn small() -> OracleConfig {
        OracleConfig {
            grid_per_dim: 21,
            random_samples: 5_000,
            boundary_samples: 500,
            ..OracleConfig::default()
        }
    }

    #[test]
    fn quadrant_region_samples() {
        let sys = library::quadrant_system();
        let s = sample_region(sys.region(1).unwrap(), sys.bounds(), &small());
        assert!(s.points.len() > 100);
        assert!(s.points.iter().all(|x| x[0] * x[1] >= -1e-9));
        assert!(s.points.iter().any(|x| x[0] > 0.1 && x[1] > 0.1));
        assert!(s.points.iter().any(|x| x[0] < -0.1 && x[1] < -0.1));
        assert!(!s.points.iter().any(|x| x[0] * x[1] < -1e-6));
    }

    #[test]
    fn whole_box_region_keeps_everything_outside_ball() {
        let r = SemiAlgebraicRegion {
            id: 1,
            chi: Polynomial::zero(2),
            xi: vec![],
            witnesses: vec![],
        };
        let cfg = small();
        let b = BoxDomain::symmetric(2, 1.0);
        let all = candidate_points(&b, &cfg);
        let kept = all.iter().filter(|x| norm(x) >= cfg.exclusion_radius).count();
        assert_eq!(sample_region(&r, &b, &cfg).points.len(), kept);
    }

    #[test]
    fn degenerate_region_warns() {
        let r = SemiAlgebraicRegion {
            id: 3,
            chi: parse("x1^2 + x2^2", 2).unwrap(),
            xi: vec![],
            witnesses: vec![],
        };
        let s = sample_region(&r, &BoxDomain::symmetric(2, 1.0), &small());
        assert!(s.points.is_empty());
        assert_eq!(s.warnings.len(), 1);
    }

    #[test]
    fn boundary_samples_lie_on_axes() {
        let sys = library::quadrant_system();
        let s = sample_boundary(&sys.boundaries()[0], sys.bounds(), &small());
        assert_eq!(s.points.len(), 500);
        assert!(s.points.iter().all(|x| (x[0] * x[1]).abs() <= 1e-12));
        assert!(s.points.iter().any(|x| x[0].abs() < 1e-6));
        assert!(s.points.iter().any(|x| x[1].abs() < 1e-6));

        let line = BoundaryVariety {
            i: 1,
            j: 2,
            chi: parse("x2", 2).unwrap(),
            witnesses: vec![],
        };
        let s = sample_boundary(&line, sys.bounds(), &small());
        assert!(s.points.iter().all(|x| x[1].abs() <= 1e-12));

        let none = BoundaryVariety {
            chi: parse("x1^2 + 1", 2).unwrap(),
            ..line
        };
        let s = sample_boundary(&none, sys.bounds(), &small());
        assert!(s.points.is_empty());
        assert!(!s.warnings.is_empty());
    }

    fn family(s: &str, ids: &[usize]) -> BTreeMap<usize, Polynomial> {
        ids.iter().map(|&i| (i, parse(s, 2).unwrap())).collect()
    }

    #[test]
    fn radial_system_passes() {
        use crate::system::{SemiAlgebraicRegion, SubsystemDynamics, SwitchedSystem};
        let f = PolyVector::new(vec![parse("-x1", 2).unwrap(), parse("-x2", 2).unwrap()]).unwrap();
        let sys = SwitchedSystem::new(
            "radial",
            BoxDomain::symmetric(2, 1.0),
            vec![SemiAlgebraicRegion {
                id: 1,
                chi: Polynomial::zero(2),
                xi: vec![],
                witnesses: vec![],
            }],
            vec![],
            BTreeMap::from([(1, SubsystemDynamics::new(vec![f]).unwrap())]),
            BTreeSet::from([1]),
        )
        .unwrap();
        let report =
            verify_certificate(&sys, &family("x1^2 + x2^2", &[1]), &VerifyScope::default(), &small()).unwrap();
        assert!(report.passed(), "{report}");
        let report = verify_certificate(
            &sys,
            &family("-x1^2 - x2^2", &[1]),
            &VerifyScope::default(),
            &small(),
        )
        .unwrap();
        assert!(!report.condition_passed(Condition::Positivity));
        let rec = report.records_for(Condition::Positivity).next().unwrap();
        assert!(rec.worst_value < 0.0);
    }

    #[test]
    fn count_mismatch_is_an_error() {
        let sys = library::quadrant_system();
        let r = verify_certificate(&sys, &family("x1^2", &[1]), &VerifyScope::default(), &small());
        assert!(r.is_err());
    }

    #[test]
    fn reports_are_deterministic() {
        let sys = library::quadrant_system();
        let fam = family("x1^2 + x2^2", &[1, 2]);
        let a = verify_certificate(&sys, &fam, &VerifyScope::default(), &small()).unwrap();
        let b = verify_certificate(&sys, &fam, &VerifyScope::default(), &small()).unwrap();
        assert_eq!(a, b);
    }
}
