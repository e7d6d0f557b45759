use std::fmt;

use super::model::SwitchedSystem;
use crate::sampling::{bisect_root, rng, uniform_point};

/// Tolerance for stored witnesses and origin membership.
pub const WITNESS_TOL: f64 = 1e-9;
/// Tolerance for closure membership of boundary points.
pub const CLOSURE_TOL: f64 = 1e-6;
/// Random samples used when a witness has to be searched for.
pub const SEARCH_SAMPLES: usize = 100_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum CheckLevel {
    Pass,
    Warn,
    Fail,
}

impl fmt::Display for CheckLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CheckLevel::Pass => "pass",
            CheckLevel::Warn => "warn",
            CheckLevel::Fail => "fail",
        })
    }
}

#[derive(Clone, Debug)]
pub struct Check {
    pub name: String,
    pub level: CheckLevel,
    pub detail: String,
    /// True when the check samples instead of deciding.
    pub sampling_based: bool,
}

#[derive(Clone, Debug, Default)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
    pub caveats: Vec<String>,
}

impl ValidationReport {
    pub fn worst(&self) -> CheckLevel {
        self.checks.iter().map(|c| c.level).max().unwrap_or(CheckLevel::Pass)
    }

    pub fn has_failures(&self) -> bool {
        self.worst() == CheckLevel::Fail
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| c.level == CheckLevel::Fail)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    fn push(&mut self, name: String, level: CheckLevel, detail: String, sampling_based: bool) {
        self.checks.push(Check {
            name,
            level,
            detail,
            sampling_based,
        });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            let tag = if c.sampling_based { " (sampled)" } else { "" };
            writeln!(f, "[{}] {}{}: {}", c.level, c.name, tag, c.detail)?;
        }
        for c in &self.caveats {
            writeln!(f, "caveat: {c}")?;
        }
        Ok(())
    }
}

/// Well-formedness report. Geometric conditions of a nice covering are only
/// sampled, never proved.
pub fn validate(sys: &SwitchedSystem) -> ValidationReport {
    validate_with(sys, SEARCH_SAMPLES, 0)
}

pub fn validate_with(sys: &SwitchedSystem, samples: usize, seed: u64) -> ValidationReport {
    let mut report = ValidationReport::default();
    let bounds = sys.bounds();
    let mut r = rng(seed);

    for region in sys.regions() {
        let name = format!("region {} witness", region.id);
        if region.witnesses.is_empty() {
            let found = (0..samples)
                .map(|_| uniform_point(&mut r, bounds))
                .find(|x| region.contains(x, WITNESS_TOL));
            match found {
                Some(x) => report.push(
                    name,
                    CheckLevel::Pass,
                    format!("no stored witness; sample {x:?} lies in the region"),
                    true,
                ),
                None => report.push(
                    name,
                    CheckLevel::Warn,
                    format!("no region witness found among {samples} samples"),
                    true,
                ),
            }
        } else {
            let bad: Vec<_> = region
                .witnesses
                .iter()
                .filter(|w| !region.contains(w, WITNESS_TOL))
                .collect();
            if bad.is_empty() {
                report.push(
                    name,
                    CheckLevel::Pass,
                    format!("{} stored witness(es) satisfy the region", region.witnesses.len()),
                    false,
                );
            } else {
                report.push(
                    name,
                    CheckLevel::Fail,
                    format!("stored witness {:?} is not in the region", bad[0]),
                    false,
                );
            }
        }
    }

    for b in sys.boundaries() {
        let name = format!("boundary ({}, {}) witness", b.i, b.j);
        let mut points: Vec<Vec<f64>> = Vec::new();
        if b.witnesses.is_empty() {
            let mut prev = uniform_point(&mut r, bounds);
            let mut prev_v = b.chi.eval(&prev);
            for _ in 0..samples {
                let x = uniform_point(&mut r, bounds);
                let v = b.chi.eval(&x);
                if v == 0.0 || (prev_v != 0.0 && v.signum() != prev_v.signum()) {
                    match bisect_root(&b.chi, &prev, &x, WITNESS_TOL) {
                        Some(w) => {
                            points.push(w);
                            break;
                        }
                        None => {}
                    }
                }
                prev = x;
                prev_v = v;
            }
            match points.first() {
                Some(w) => report.push(
                    name,
                    CheckLevel::Pass,
                    format!("no stored witness; root {w:?} found by sampling"),
                    true,
                ),
                None => report.push(
                    name,
                    CheckLevel::Warn,
                    format!("no boundary witness found among {samples} samples"),
                    true,
                ),
            }
        } else {
            let bad: Vec<_> = b
                .witnesses
                .iter()
                .filter(|w| b.chi.eval(w).abs() > WITNESS_TOL)
                .collect();
            if bad.is_empty() {
                report.push(
                    name,
                    CheckLevel::Pass,
                    format!("{} stored witness(es) lie on the variety", b.witnesses.len()),
                    false,
                );
                points = b.witnesses.clone();
            } else {
                report.push(
                    name,
                    CheckLevel::Fail,
                    format!("stored witness {:?} has chi = {:e}", bad[0], b.chi.eval(bad[0])),
                    false,
                );
            }
        }

        if !points.is_empty() {
            let name = format!("boundary ({}, {}) closure", b.i, b.j);
            let outside: Vec<&Vec<f64>> = points
                .iter()
                .filter(|w| {
                    let ri = sys.region(b.i).map(|r| r.contains(w, CLOSURE_TOL));
                    let rj = sys.region(b.j).map(|r| r.contains(w, CLOSURE_TOL));
                    !(ri.unwrap_or(false) && rj.unwrap_or(false))
                })
                .collect();
            if outside.is_empty() {
                report.push(
                    name,
                    CheckLevel::Pass,
                    format!("boundary points lie in the closures of regions {} and {}", b.i, b.j),
                    true,
                );
            } else {
                report.push(
                    name,
                    CheckLevel::Fail,
                    format!(
                        "boundary point {:?} is not in both closures of regions {} and {}",
                        outside[0], b.i, b.j
                    ),
                    true,
                );
            }
        }
    }

    let origin = vec![0.0; sys.dim()];
    for id in sys.origin_regions() {
        let name = format!("origin in region {id}");
        let Ok(region) = sys.region(*id) else { continue };
        if region.contains(&origin, WITNESS_TOL) {
            report.push(name, CheckLevel::Pass, "0 satisfies the region".into(), false);
        } else {
            let worst = region
                .xi
                .iter()
                .map(|g| g.eval(&origin))
                .fold(f64::INFINITY, f64::min);
            report.push(
                name,
                CheckLevel::Fail,
                format!(
                    "0 is not in the region (chi(0) = {:e}, min xi(0) = {:e})",
                    region.chi.eval(&origin),
                    worst
                ),
                false,
            );
        }
        if let Ok(d) = sys.dynamics(*id) {
            let name = format!("origin equilibrium in region {id}");
            let moving = d.vertices().iter().enumerate().find_map(|(l, f)| {
                let v = f.eval(&origin);
                v.iter().any(|c| c.abs() > WITNESS_TOL).then_some((l, v))
            });
            match moving {
                None => report.push(name, CheckLevel::Pass, "every vertex field vanishes at 0".into(), false),
                Some((l, v)) => report.push(
                    name,
                    CheckLevel::Fail,
                    format!("vertex {} has f(0) = {v:?}", l + 1),
                    false,
                ),
            }
        }
    }
    if sys.origin_regions().is_empty() {
        report.push(
            "origin regions".into(),
            CheckLevel::Warn,
            "no region is declared to contain the origin".into(),
            false,
        );
    }
    if !bounds.contains(&origin, 0.0) {
        report.push(
            "origin in box".into(),
            CheckLevel::Fail,
            "the origin lies outside the state-space box".into(),
            false,
        );
    }

    let coverage_samples = samples.min(10_000);
    let uncovered = (0..coverage_samples)
        .map(|_| uniform_point(&mut r, bounds))
        .find(|x| sys.locate(x, CLOSURE_TOL).is_err());
    match uncovered {
        None => report.push(
            "covering".into(),
            CheckLevel::Pass,
            format!("{coverage_samples} box samples each lie in some region"),
            true,
        ),
        Some(x) => report.push(
            "covering".into(),
            CheckLevel::Warn,
            format!("sample {x:?} lies in no region"),
            true,
        ),
    }

    report.caveats = vec![
        "nice-covering conditions (closed regions, boundaries as pairwise intersections) are checked by sampling only and are not proved".into(),
        "the local straight-line escape condition of a nice covering has no finite test and is not checked".into(),
        "boundary varieties are taken as given; they are not derived from region intersections".into(),
    ];
    report
}
