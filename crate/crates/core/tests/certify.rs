use std::sync::OnceLock;

use rand::Rng;
use switchsos::certify::{
    check_attractivity, certify, gate_scope, AttractivityStatus, CertificationConfig, CertificationResult, Verdict,
};
use switchsos::oracle::verify_certificate;
use switchsos::poly::{parse, Monomial};
use switchsos::sampling::rng;
use switchsos::sos::{backend_by_name, solve, PositivityConstraint, SolveStatus, SolverSettings, SosProgram};
use switchsos::system::library;

fn quadrant_degree6() -> &'static CertificationResult {
    static RESULT: OnceLock<CertificationResult> = OnceLock::new();
    RESULT.get_or_init(|| certify(&library::quadrant_system(), &CertificationConfig::default()).unwrap())
}

#[test]
fn quadrant_system_certifies_at_degree_six() {
    let r = quadrant_degree6();
    assert_eq!(r.verdict, Verdict::Certified, "{r}");
    let cert = r.certificate.as_ref().unwrap();
    assert!(cert.oracle_report.as_ref().unwrap().passed());
    assert!(cert.max_gluing_residual() <= 1e-7);
    for v in cert.lyapunov.values() {
        assert_eq!(v.coefficient(&Monomial::one(2)), 0.0);
        assert!(v.degree() <= 6);
    }
}

#[test]
fn scaled_certificate_still_passes_the_oracle() {
    let sys = library::quadrant_system();
    let r = quadrant_degree6();
    let cert = r.certificate.as_ref().unwrap();
    let cfg = CertificationConfig::default().oracle;
    for c in [0.25, 10.0] {
        let report = verify_certificate(&sys, &cert.scaled_family(c), &gate_scope(&r.enforced_cross), &cfg).unwrap();
        assert!(report.passed(), "c = {c}: {report}");
    }
}

#[test]
fn gluing_holds_on_sampled_boundary_points() {
    let cert = quadrant_degree6().certificate.as_ref().unwrap();
    let mut g = rng(1);
    for _ in 0..1000 {
        let t: f64 = g.random_range(-2.0..2.0);
        let x = if g.random::<bool>() { [t, 0.0] } else { [0.0, t] };
        let gap = (cert.lyapunov[&1].eval(&x) - cert.lyapunov[&2].eval(&x)).abs();
        assert!(gap <= 1e-6 * (1.0 + t.abs().powi(6)), "gap {gap:e} at {x:?}");
    }
}

#[test]
fn disabling_the_filter_keeps_the_certificate() {
    let cfg = CertificationConfig { use_attractivity_filter: false, ..Default::default() };
    let r = certify(&library::quadrant_system(), &cfg).unwrap();
    assert_eq!(quadrant_degree6().verdict, Verdict::Certified);
    assert_eq!(r.verdict, Verdict::Certified, "{r}");
    assert_eq!(r.enforced_cross.len(), 2);
}

#[test]
fn low_degrees_give_no_certificate_for_the_quadrant_system() {
    for d in [2, 4] {
        let cfg = CertificationConfig { lyapunov_degree: d, ..Default::default() };
        let r = certify(&library::quadrant_system(), &cfg).unwrap();
        assert_eq!(r.verdict, Verdict::NoCertificateAtDegree, "degree {d}: {r}");
    }
}

#[test]
fn escalation_stops_at_the_first_certified_degree() {
    let cfg = CertificationConfig { escalate_to: Some(6), ..Default::default() };
    let r = certify(&library::quadrant_system(), &cfg).unwrap();
    assert_eq!(r.verdict, Verdict::Certified);
    let tried: Vec<u32> = r.attempts.iter().map(|a| a.0).collect();
    assert_eq!(tried, vec![2, 4, 6]);
}

#[test]
fn stable_scalar_gets_a_quadratic() {
    let cfg = CertificationConfig { lyapunov_degree: 2, ..Default::default() };
    let r = certify(&library::scalar_linear(-1.0), &cfg).unwrap();
    assert_eq!(r.verdict, Verdict::Certified, "{r}");
    let v = &r.certificate.unwrap().lyapunov[&1];
    assert!(v.coefficient(&Monomial::new(vec![2])) > 0.0);
    assert!(v.coefficient(&Monomial::new(vec![1])).abs() <= 1e-6);
}

#[test]
fn unstable_scalar_never_certifies() {
    for d in [2, 4, 6] {
        let cfg = CertificationConfig { lyapunov_degree: d, ..Default::default() };
        let r = certify(&library::scalar_linear(1.0), &cfg).unwrap();
        assert_eq!(r.verdict, Verdict::NoCertificateAtDegree, "degree {d}");
    }
}

#[test]
fn odd_degree_is_rejected() {
    let cfg = CertificationConfig { lyapunov_degree: 3, ..Default::default() };
    assert!(certify(&library::scalar_linear(-1.0), &cfg).is_err());
}

#[test]
fn contradictory_gluing_is_infeasible() {
    // V1 >= x^2 and V2 <= -x^2, glued by V1 + p*x = V2 with p constant.
    let mut prog = SosProgram::new(1);
    let sq = [Monomial::new(vec![2])];
    let v1 = prog.free_poly("V1", &sq);
    let v2 = prog.free_poly("V2", &sq);
    let x = parse("x1", 1).unwrap();
    let x2 = parse("x1^2", 1).unwrap();
    let mut a = v1.clone();
    a.add_poly(&x2, -1.0);
    prog.add_constraint(&PositivityConstraint::new("a", a)).unwrap();
    let mut b = v2.scale(-1.0);
    b.add_poly(&x2, -1.0);
    prog.add_constraint(&PositivityConstraint::new("b", b)).unwrap();
    let p = prog.free_poly("p", &[Monomial::one(1)]);
    let mut glue = v1.clone();
    glue.add_scaled(&p.mul_poly(&x), 1.0);
    glue.add_scaled(&v2, -1.0);
    prog.add_zero("glue", &glue).unwrap();
    let assembled = prog.finish();
    let backend = backend_by_name("clarabel").unwrap();
    let sol = solve(&assembled.problem, backend.as_ref(), &SolverSettings::default()).unwrap();
    assert!(!sol.status.is_feasible(), "{:?}", sol.status);

    // Without the sign conflict the same gluing is satisfiable.
    let mut prog = SosProgram::new(1);
    let v1 = prog.free_poly("V1", &sq);
    let v2 = prog.free_poly("V2", &sq);
    let mut a = v1.clone();
    a.add_poly(&x2, -1.0);
    prog.add_constraint(&PositivityConstraint::new("a", a)).unwrap();
    let mut b = v2.clone();
    b.add_poly(&x2, -1.0);
    prog.add_constraint(&PositivityConstraint::new("b", b)).unwrap();
    let p = prog.free_poly("p", &[Monomial::one(1)]);
    let mut glue = v1;
    glue.add_scaled(&p.mul_poly(&x), 1.0);
    glue.add_scaled(&v2, -1.0);
    prog.add_zero("glue", &glue).unwrap();
    let sol = solve(&prog.finish().problem, backend.as_ref(), &SolverSettings::default()).unwrap();
    assert_eq!(sol.status, SolveStatus::Feasible);
}

#[test]
fn attractivity_of_toy_boundaries() {
    let backend = backend_by_name("clarabel").unwrap();
    let s = SolverSettings::default();
    let opp = check_attractivity(&library::opposing_fields(), (1, 2), 2, 1e-4, backend.as_ref(), &s).unwrap();
    assert_eq!(opp.status, AttractivityStatus::AttractivePossible);
    let ali = check_attractivity(&library::aligned_fields(), (1, 2), 2, 1e-4, backend.as_ref(), &s).unwrap();
    assert_eq!(ali.status, AttractivityStatus::NotAttractive);
    assert!(check_attractivity(&library::opposing_fields(), (1, 3), 2, 1e-4, backend.as_ref(), &s).is_err());
}

#[test]
fn vertex_lie_bound_transfers_to_combinations() {
    let sys = library::quadrant_system();
    let cert = quadrant_degree6().certificate.as_ref().unwrap();
    let grad = cert.lyapunov[&1].gradient();
    let vertices = sys.dynamics(1).unwrap().vertices();
    let mut g = rng(12);
    for _ in 0..1000 {
        let x = [g.random_range(-2.0..2.0), g.random_range(-2.0..2.0)];
        let t: f64 = g.random();
        let gx = grad.eval(&x);
        let dot = |f: &[f64]| gx[0] * f[0] + gx[1] * f[1];
        let lhs = dot(&sys.field_at(1, &[t, 1.0 - t]).unwrap().eval(&x));
        let rhs = t * dot(&vertices[0].eval(&x)) + (1.0 - t) * dot(&vertices[1].eval(&x));
        assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + rhs.abs()));
    }
}
