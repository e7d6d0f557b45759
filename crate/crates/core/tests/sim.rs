use std::collections::BTreeMap;

use switchsos::io::parse_lyapunov;
use switchsos::sim::{simulate, step_smooth, EventKind, Mode, SimConfig};
use switchsos::system::library;

fn endpoint_error(h: f64) -> f64 {
    let sys = library::scalar_linear(-1.0);
    let mut x = vec![1.0];
    for _ in 0..(1.0 / h).round() as usize {
        x = step_smooth(&sys, 1, &x, h, &[1.0]).unwrap().unwrap();
    }
    (x[0] - (-1.0f64).exp()).abs()
}

#[test]
fn rk4_is_fourth_order() {
    let e: Vec<f64> = [0.1, 0.05, 0.025].map(endpoint_error).to_vec();
    for w in e.windows(2) {
        let ratio = w[0] / w[1];
        assert!((12.0..=20.0).contains(&ratio), "ratio {ratio}");
    }
}

#[test]
fn opposing_fields_follow_the_exact_solution() {
    let sys = library::opposing_fields();
    let cfg = SimConfig { t_end: 2.0, ..Default::default() };
    let traj = simulate(&sys, &[0.0, 0.5], &cfg, None).unwrap();
    let entry = traj.first_event(EventKind::SlidingEntry).expect("slides");
    assert!((entry.t - 0.5).abs() <= 1e-3);
    assert!((entry.x[0] - 0.5).abs() <= 1e-3);
    let alpha = traj.points.iter().find_map(|p| matches!(p.mode, Mode::Sliding(..)).then_some(p.alpha).flatten()).unwrap();
    assert!((alpha - 0.5).abs() <= 1e-6);
    let x1 = traj.state_at(1.0).unwrap();
    assert!((x1[0] - 1.0).abs() <= 1e-3 && x1[1].abs() <= 1e-6, "{x1:?}");
    assert!(traj.first_event(EventKind::SlidingExit).is_none());
}

#[test]
fn sliding_points_stay_on_the_surface() {
    let sys = library::opposing_fields();
    let traj = simulate(&sys, &[0.0, 0.5], &SimConfig { t_end: 2.0, ..Default::default() }, None).unwrap();
    let chi = &sys.boundaries()[0].chi;
    let grad = chi.gradient();
    for p in traj.points.iter().filter(|p| matches!(p.mode, Mode::Sliding(..))) {
        let a = p.alpha.unwrap();
        assert!((0.0..=1.0).contains(&a));
        let n = grad.eval(&p.x);
        let fi = sys.field_at(1, &[1.0]).unwrap().eval(&p.x);
        let fj = sys.field_at(2, &[1.0]).unwrap().eval(&p.x);
        let normal: f64 = (0..2).map(|k| n[k] * (a * fi[k] + (1.0 - a) * fj[k])).sum();
        assert!(normal.abs() <= 1e-9);
    }
}

#[test]
fn certified_level_never_increases_along_a_switching_trajectory() {
    let sys = library::quadrant_system();
    let path = format!("{}/../../systems/paper-V.lyap", env!("CARGO_MANIFEST_DIR"));
    let fam = parse_lyapunov(&std::fs::read_to_string(&path).unwrap(), 2, &path).unwrap();
    let cfg = SimConfig { theta: BTreeMap::from([(1, vec![0.0, 1.0])]), ..Default::default() };
    let traj = simulate(&sys, &[2.0, -2.0], &cfg, Some(&fam)).unwrap();
    let psi: Vec<f64> = traj.points.iter().filter_map(|p| p.psi).collect();
    assert_eq!(psi.len(), traj.points.len());
    for w in psi.windows(2) {
        assert!(w[1] <= w[0] + 1e-6 * (1.0 + w[0]), "{} -> {}", w[0], w[1]);
    }
    for p in traj.points.iter().filter(|p| matches!(p.mode, Mode::Sliding(..))) {
        assert!((fam[&1].eval(&p.x) - fam[&2].eval(&p.x)).abs() <= 1e-6);
    }
}

#[test]
fn unstable_scalar_escapes() {
    let sys = library::scalar_linear(1.0);
    let traj = simulate(&sys, &[0.5], &SimConfig::default(), None).unwrap();
    assert!(traj.first_event(EventKind::Escaped).is_some());
}
