//! Joint SOS search for a piecewise Lyapunov family with boundary gluing,
//! followed by the sampling gate.

mod attractivity;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::oracle::{verify_certificate, OracleConfig, OracleReport, VerifyScope};
use crate::poly::{coefficients_equal, monomial_basis, Monomial, Polynomial};
use crate::sos::{
    backend_by_name, solve, AffinePoly, AssembledProgram, ConstraintHandle, PositivityConstraint,
    SdpSolution, SolveStatus, SolverSettings, SosCertificate, SosProgram,
};
use crate::system::{validate, SwitchedSystem};

pub use attractivity::{
    check_attractivity, AttractivityReport, AttractivityStatus, VertexPairResult,
};

/// Largest coefficient mismatch tolerated in `V_i + p_ij chi_ij = V_j`.
pub const GLUING_TOL: f64 = 1e-7;

#[derive(Clone, Debug)]
pub struct CertificationConfig {
    pub lyapunov_degree: u32,
    /// Margin of the region Lie-derivative conditions.
    pub margin_mu: f64,
    /// Margin of the cross-boundary conditions.
    pub margin_nu: f64,
    /// Weight of the positive-definite floor subtracted from each `V_i`.
    pub pd_epsilon: f64,
    pub use_attractivity_filter: bool,
    /// Margin of the attractivity test.
    pub attractivity_kappa: f64,
    /// Multiplier degrees by generator name (`chi`, `xi1`, `box1`, ...).
    pub multiplier_degrees: BTreeMap<String, u32>,
    /// When set, degrees `2, 4, ..` up to this cap are tried in turn.
    pub escalate_to: Option<u32>,
    pub backend: String,
    pub solver: SolverSettings,
    pub oracle: OracleConfig,
}

impl Default for CertificationConfig {
    fn default() -> Self {
        Self {
            lyapunov_degree: 6,
            margin_mu: 1e-4,
            margin_nu: 1e-4,
            pd_epsilon: 1e-4,
            use_attractivity_filter: true,
            attractivity_kappa: 1e-4,
            multiplier_degrees: BTreeMap::new(),
            escalate_to: None,
            backend: "clarabel".into(),
            solver: SolverSettings::default(),
            oracle: OracleConfig::default(),
        }
    }
}

impl CertificationConfig {
    pub fn check(&self) -> Result<()> {
        let d = self.lyapunov_degree;
        if d < 2 || d % 2 == 1 {
            return Err(Error::Configuration(format!(
                "lyapunov degree must be even and at least 2, got {d}"
            )));
        }
        for (name, v) in [
            ("margin_mu", self.margin_mu),
            ("margin_nu", self.margin_nu),
            ("pd_epsilon", self.pd_epsilon),
            ("attractivity_kappa", self.attractivity_kappa),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Configuration(format!("{name} must be positive, got {v}")));
            }
        }
        if let Some(cap) = self.escalate_to {
            if cap < 2 || cap % 2 == 1 {
                return Err(Error::Configuration(format!(
                    "escalation cap must be even and at least 2, got {cap}"
                )));
            }
        }
        Ok(())
    }
}

/// `sum_k x_k^d`.
pub fn square_form(dim: usize, d: u32) -> Polynomial {
    let mut p = Polynomial::zero(dim);
    for k in 0..dim {
        let mut e = vec![0; dim];
        e[k] = d;
        p.add_term(Monomial::new(e), 1.0);
    }
    p
}

/// `(x_k - lo_k)(hi_k - x_k)` named `box1`, `box2`, ...
pub fn box_generators(sys: &SwitchedSystem) -> Vec<(String, Polynomial)> {
    sys.bounds()
        .generators()
        .into_iter()
        .enumerate()
        .map(|(k, g)| (format!("box{}", k + 1), g))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConstraintKind {
    Positivity,
    Lie,
    Cross,
}

#[derive(Clone, Debug)]
pub struct ConstraintInfo {
    pub label: String,
    pub kind: ConstraintKind,
    /// Region whose `V` is constrained.
    pub region: usize,
    /// Region whose field enters, and its 1-based vertex.
    pub field_region: Option<usize>,
    pub vertex: Option<usize>,
}

/// The assembled joint program and the handles needed to read it back.
pub struct FeasibilityProgram {
    pub program: AssembledProgram,
    pub handles: Vec<ConstraintHandle>,
    pub constraints: Vec<ConstraintInfo>,
    pub lyapunov: BTreeMap<usize, AffinePoly>,
    pub gluing: BTreeMap<(usize, usize), AffinePoly>,
    /// Ordered pairs `(i, j)` whose condition `-<grad V_i, F_j> > 0` is in the program.
    pub enforced_cross: BTreeSet<(usize, usize)>,
    pub attractivity: Vec<AttractivityReport>,
}

impl FeasibilityProgram {
    pub fn num_blocks(&self) -> usize {
        self.program.problem.blocks.len()
    }

    pub fn largest_block(&self) -> usize {
        self.program.problem.blocks.iter().map(|b| b.size).max().unwrap_or(0)
    }

    pub fn num_rows(&self) -> usize {
        self.program.problem.rows.len()
    }
}

fn apply_overrides(mut c: PositivityConstraint, cfg: &CertificationConfig) -> PositivityConstraint {
    for (name, d) in &cfg.multiplier_degrees {
        c = c.multiplier_degree(name, *d);
    }
    c
}

/// Builds one program in which every `V_i` is shared by its positivity,
/// Lie-derivative, cross-boundary and gluing conditions. Cross-boundary
/// conditions are kept for both orderings of a boundary unless the
/// attractivity test rules sliding out.
pub fn build_feasibility(sys: &SwitchedSystem, cfg: &CertificationConfig) -> Result<FeasibilityProgram> {
    cfg.check()?;
    let n = sys.dim();
    let d = cfg.lyapunov_degree;
    let backend = backend_by_name(&cfg.backend)?;
    let floor = square_form(n, d);
    let boxes = box_generators(sys);

    let mut attractivity = Vec::new();
    let mut enforced_cross = BTreeSet::new();
    for b in sys.boundaries() {
        let keep = if cfg.use_attractivity_filter {
            let report = check_attractivity(sys, b.pair(), 2, cfg.attractivity_kappa, backend.as_ref(), &cfg.solver)?;
            let keep = report.status != AttractivityStatus::NotAttractive;
            attractivity.push(report);
            keep
        } else {
            true
        };
        if keep {
            enforced_cross.insert((b.i, b.j));
            enforced_cross.insert((b.j, b.i));
        }
    }

    let mut program = SosProgram::new(n);
    let mut lyapunov = BTreeMap::new();
    for id in sys.region_ids() {
        let basis = monomial_basis(n, d, !sys.origin_regions().contains(&id));
        lyapunov.insert(id, program.free_poly(&format!("V{id}"), &basis));
    }

    let mut gluing = BTreeMap::new();
    for b in sys.boundaries() {
        let dc = b.chi.degree();
        if dc > d {
            return Err(Error::Degree {
                constraint: format!("glue[{},{}]", b.i, b.j),
                generator: "chi".into(),
                detail: format!("boundary degree {dc} exceeds the Lyapunov degree {d}"),
            });
        }
        let p = program.free_poly(&format!("p{}{}", b.i, b.j), &monomial_basis(n, d - dc, true));
        let mut e = lyapunov[&b.i].clone();
        e.add_scaled(&p.mul_poly(&b.chi), 1.0);
        e.add_scaled(&lyapunov[&b.j], -1.0);
        program.add_zero(&format!("glue[{},{}]", b.i, b.j), &e)?;
        gluing.insert(b.pair(), p);
    }

    let region_constraint = |label: String, target: AffinePoly, id: usize, margin: f64| -> Result<PositivityConstraint> {
        let r = sys.region(id)?;
        let mut c = PositivityConstraint::new(label, target)
            .equality("chi", r.chi.clone())
            .margin(margin)
            .margin_form(floor.clone());
        for (k, xi) in r.xi.iter().enumerate() {
            c = c.inequality(format!("xi{}", k + 1), xi.clone());
        }
        for (name, g) in &boxes {
            c = c.inequality(name.clone(), g.clone());
        }
        Ok(apply_overrides(c, cfg))
    };

    let mut handles = Vec::new();
    let mut constraints = Vec::new();
    for id in sys.region_ids() {
        let v = &lyapunov[&id];
        let label = format!("pos[{id}]");
        let c = region_constraint(label.clone(), v.clone(), id, cfg.pd_epsilon)?;
        handles.push(program.add_constraint(&c)?);
        constraints.push(ConstraintInfo {
            label,
            kind: ConstraintKind::Positivity,
            region: id,
            field_region: None,
            vertex: None,
        });
        for (l, f) in sys.dynamics(id)?.vertices().iter().enumerate() {
            let label = format!("lie[{id}][{}]", l + 1);
            let c = region_constraint(label.clone(), v.lie_derivative(f).scale(-1.0), id, cfg.margin_mu)?;
            handles.push(program.add_constraint(&c)?);
            constraints.push(ConstraintInfo {
                label,
                kind: ConstraintKind::Lie,
                region: id,
                field_region: Some(id),
                vertex: Some(l + 1),
            });
        }
    }
    for &(i, j) in &enforced_cross {
        let b = sys.boundary(i, j)?;
        for (l, f) in sys.dynamics(j)?.vertices().iter().enumerate() {
            let label = format!("cross[{i},{j}][{}]", l + 1);
            let mut c = PositivityConstraint::new(label.clone(), lyapunov[&i].lie_derivative(f).scale(-1.0))
                .equality("chi", b.chi.clone())
                .margin(cfg.margin_nu)
                .margin_form(floor.clone());
            for (name, g) in &boxes {
                c = c.inequality(name.clone(), g.clone());
            }
            let c = apply_overrides(c, cfg);
            handles.push(program.add_constraint(&c)?);
            constraints.push(ConstraintInfo {
                label,
                kind: ConstraintKind::Cross,
                region: i,
                field_region: Some(j),
                vertex: Some(l + 1),
            });
        }
    }

    Ok(FeasibilityProgram {
        program: program.finish(),
        handles,
        constraints,
        lyapunov,
        gluing,
        enforced_cross,
        attractivity,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Certified,
    NoCertificateAtDegree,
    NumericallySuspect,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Certified => "CERTIFIED",
            Verdict::NoCertificateAtDegree => "NO-CERTIFICATE-AT-DEGREE",
            Verdict::NumericallySuspect => "NUMERICALLY-SUSPECT",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "CERTIFIED" => Some(Self::Certified),
            "NO-CERTIFICATE-AT-DEGREE" => Some(Self::NoCertificateAtDegree),
            "NUMERICALLY-SUSPECT" => Some(Self::NumericallySuspect),
            _ => None,
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A piecewise Lyapunov family with its SOS evidence.
#[derive(Clone, Debug)]
pub struct Certificate {
    pub system: String,
    pub degree: u32,
    pub lyapunov: BTreeMap<usize, Polynomial>,
    pub gluing: BTreeMap<(usize, usize), Polynomial>,
    /// Every multiplier polynomial, keyed `{constraint}/r[..]` or `{constraint}/s[..]`.
    pub multipliers: BTreeMap<String, Polynomial>,
    pub sos_evidence: BTreeMap<String, SosCertificate>,
    /// Largest coefficient mismatch per boundary in the gluing identity.
    pub gluing_residuals: BTreeMap<(usize, usize), f64>,
    pub enforced_cross: BTreeSet<(usize, usize)>,
    pub oracle_report: Option<OracleReport>,
}

impl Certificate {
    pub fn max_gluing_residual(&self) -> f64 {
        self.gluing_residuals.values().copied().fold(0.0, f64::max)
    }

    /// The family multiplied by `c`.
    pub fn scaled_family(&self, c: f64) -> BTreeMap<usize, Polynomial> {
        self.lyapunov.iter().map(|(k, v)| (*k, v.scale(c))).collect()
    }
}

#[derive(Clone, Debug)]
pub struct CertificationResult {
    pub verdict: Verdict,
    pub degree: u32,
    pub solver_status: SolveStatus,
    pub detail: String,
    pub certificate: Option<Certificate>,
    pub attractivity: Vec<AttractivityReport>,
    pub enforced_cross: BTreeSet<(usize, usize)>,
    pub num_blocks: usize,
    pub largest_block: usize,
    pub num_rows: usize,
    /// Degrees tried in order, with their verdicts, when escalating.
    pub attempts: Vec<(u32, Verdict)>,
    /// Wall-clock seconds; excluded from reproducible outputs.
    pub solve_time: f64,
}

impl fmt::Display for CertificationResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.verdict {
            Verdict::NoCertificateAtDegree => {
                writeln!(f, "no certificate at degree {} ({})", self.degree, self.detail)?
            }
            v => writeln!(f, "{v} at degree {} ({})", self.degree, self.detail)?,
        }
        for a in &self.attractivity {
            write!(f, "{a}")?;
        }
        Ok(())
    }
}

fn extract(
    sys: &SwitchedSystem,
    fp: &FeasibilityProgram,
    sol: &SdpSolution,
    degree: u32,
) -> Certificate {
    let prog = &fp.program;
    let lyapunov: BTreeMap<usize, Polynomial> =
        fp.lyapunov.iter().map(|(k, v)| (*k, prog.evaluate(v, sol))).collect();
    let gluing: BTreeMap<(usize, usize), Polynomial> =
        fp.gluing.iter().map(|(k, p)| (*k, prog.evaluate(p, sol))).collect();
    let mut gluing_residuals = BTreeMap::new();
    for b in sys.boundaries() {
        let lhs = &lyapunov[&b.i] + &(&gluing[&b.pair()] * &b.chi);
        let r = coefficients_equal(&lhs, &lyapunov[&b.j])
            .into_iter()
            .map(|(_, c)| c.abs())
            .fold(0.0, f64::max);
        gluing_residuals.insert(b.pair(), r);
    }
    let mut multipliers = BTreeMap::new();
    let mut sos_evidence = BTreeMap::new();
    for h in &fp.handles {
        for m in &h.multipliers {
            let tag = match m.kind {
                crate::sos::MultiplierKind::Free => "r",
                crate::sos::MultiplierKind::Sos { .. } => "s",
            };
            multipliers.insert(format!("{}/{tag}[{}]", h.label, m.name), prog.evaluate(&m.poly, sol));
        }
        sos_evidence.insert(h.label.clone(), SosCertificate::from_solution(prog, &[h], sol));
    }
    Certificate {
        system: sys.name.clone(),
        degree,
        lyapunov,
        gluing,
        multipliers,
        sos_evidence,
        gluing_residuals,
        enforced_cross: fp.enforced_cross.clone(),
        oracle_report: None,
    }
}

/// Oracle scope used to gate a certificate: every vertex field, and the
/// cross conditions that were part of the program.
pub fn gate_scope(enforced_cross: &BTreeSet<(usize, usize)>) -> VerifyScope {
    VerifyScope {
        thetas: BTreeMap::new(),
        cross_pairs: Some(enforced_cross.clone()),
    }
}

fn certify_at(sys: &SwitchedSystem, cfg: &CertificationConfig) -> Result<CertificationResult> {
    let start = Instant::now();
    let fp = build_feasibility(sys, cfg)?;
    let backend = backend_by_name(&cfg.backend)?;
    let sol = solve(&fp.program.problem, backend.as_ref(), &cfg.solver)?;
    let mut result = CertificationResult {
        verdict: Verdict::NoCertificateAtDegree,
        degree: cfg.lyapunov_degree,
        solver_status: sol.status,
        detail: String::new(),
        certificate: None,
        attractivity: fp.attractivity.clone(),
        enforced_cross: fp.enforced_cross.clone(),
        num_blocks: fp.num_blocks(),
        largest_block: fp.largest_block(),
        num_rows: fp.num_rows(),
        attempts: Vec::new(),
        solve_time: 0.0,
    };
    match sol.status {
        SolveStatus::Feasible | SolveStatus::Marginal => {
            let mut cert = extract(sys, &fp, &sol, cfg.lyapunov_degree);
            let report = verify_certificate(sys, &cert.lyapunov, &gate_scope(&fp.enforced_cross), &cfg.oracle)?;
            let glued = cert.max_gluing_residual() <= GLUING_TOL;
            let passed = report.passed() && glued && sol.status == SolveStatus::Feasible;
            result.verdict = if passed {
                Verdict::Certified
            } else {
                Verdict::NumericallySuspect
            };
            result.detail = if passed {
                format!("solver residual {:.3e}, oracle {}", sol.residual, report.verdict())
            } else if !report.passed() {
                format!("SDP {} but oracle {}", sol.status, report.verdict())
            } else if !glued {
                format!("gluing residual {:.3e} above {GLUING_TOL:e}", cert.max_gluing_residual())
            } else {
                format!("solver status {} ({})", sol.status, sol.backend_status)
            };
            cert.oracle_report = Some(report);
            result.certificate = Some(cert);
        }
        status => {
            result.detail = format!(
                "solver status {status}, backend {} after {} iterations",
                sol.backend_status, sol.iterations
            );
        }
    }
    result.solve_time = start.elapsed().as_secs_f64();
    result.attempts.push((result.degree, result.verdict));
    Ok(result)
}

/// Runs the full pipeline. Never concludes instability: a failed search is
/// reported as no certificate at the tried degree.
pub fn certify(sys: &SwitchedSystem, cfg: &CertificationConfig) -> Result<CertificationResult> {
    cfg.check()?;
    let report = validate(sys);
    if report.has_failures() {
        let names: Vec<String> = report.failures().map(|c| format!("{}: {}", c.name, c.detail)).collect();
        return Err(Error::InvalidSystem(names.join("; ")));
    }
    let Some(cap) = cfg.escalate_to else {
        return certify_at(sys, cfg);
    };
    let mut attempts = Vec::new();
    let mut last = None;
    for degree in (2..=cap).step_by(2) {
        let c = CertificationConfig {
            lyapunov_degree: degree,
            ..cfg.clone()
        };
        let r = certify_at(sys, &c)?;
        attempts.push((degree, r.verdict));
        let done = r.verdict == Verdict::Certified;
        last = Some(r);
        if done {
            break;
        }
    }
    let mut r = last.expect("cap is at least 2");
    r.attempts = attempts;
    Ok(r)
}
