use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use switchsos::poly::{monomial_basis, parse, Polynomial};
use switchsos::sampling::rng;
use switchsos::sos::{
    extract_sos_split, sos_decompose, split_gram, GramRepresentation, SolveStatus, SosOutcome,
};

fn random_poly(g: &mut ChaCha8Rng, dim: usize, deg: u32) -> Polynomial {
    let basis = monomial_basis(dim, deg, true);
    Polynomial::from_terms(
        dim,
        basis.into_iter().map(|m| (m, g.random_range(-1.0..1.0))),
    )
}

fn sum_of_squares(parts: &[Polynomial], dim: usize) -> Polynomial {
    parts.iter().fold(Polynomial::zero(dim), |acc, q| acc + q * q)
}

#[test]
fn motzkin_is_nonnegative_but_not_sos() {
    let m = parse("x1^4*x2^2 + x1^2*x2^4 - 3*x1^2*x2^2 + 1", 2).unwrap();
    let mut g = rng(11);
    for _ in 0..10_000 {
        let x = [g.random_range(-2.0..2.0), g.random_range(-2.0..2.0)];
        assert!(m.eval(&x) >= -1e-12);
    }
    let out = sos_decompose(&m).unwrap();
    assert_ne!(out.status(), SolveStatus::Feasible, "Motzkin must not decompose");
}

#[test]
fn squares_of_known_polynomials_decompose() {
    let mut g = rng(2024);
    for case in 0..100 {
        let dim = g.random_range(1..=3);
        let k = g.random_range(1..=4);
        let deg = g.random_range(1..=3);
        let parts: Vec<_> = (0..k).map(|_| random_poly(&mut g, dim, deg)).collect();
        let p = sum_of_squares(&parts, dim);
        let out = sos_decompose(&p).unwrap();
        let SosOutcome::Certified(cert) = &out else {
            panic!("case {case}: {out:?}");
        };
        let split = extract_sos_split(cert, "p/s0").unwrap();
        let residual = (&sum_of_squares(&split, dim) - &p).coefficient_norm();
        assert!(residual <= 1e-6, "case {case}: residual {residual:e}");
    }
}

#[test]
fn split_reconstructs_rank_deficient_grams() {
    let mut g = rng(5);
    for _ in 0..50 {
        let dim = g.random_range(1..=3);
        let basis = monomial_basis(dim, g.random_range(1..=3), true);
        let n = basis.len();
        let rank = g.random_range(1..=n);
        let b = DMatrix::from_fn(n, rank, |_, _| g.random_range(-1.0..1.0));
        let rep = GramRepresentation { basis, gram: &b * b.transpose() };
        let split = split_gram(&rep, dim, "q").unwrap();
        let residual = (sum_of_squares(&split, dim) - rep.polynomial(dim)).coefficient_norm();
        assert!(residual <= 1e-8, "residual {residual:e}");
    }
}

#[test]
fn indefinite_gram_is_refused() {
    let basis = monomial_basis(1, 1, true);
    let rep = GramRepresentation { basis, gram: DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]) };
    assert!(split_gram(&rep, 1, "q").is_err());
}

#[test]
fn odd_and_zero_targets_are_rejected() {
    assert!(sos_decompose(&parse("x1^3", 1).unwrap()).is_err());
    assert!(sos_decompose(&Polynomial::zero(1)).is_err());
}
