use proptest::prelude::*;
use switchsos::poly::{coefficients_equal, monomial_basis, parse, Monomial, PolyVector, Polynomial};

fn poly_strategy(dim: usize) -> impl Strategy<Value = Polynomial> {
    prop::collection::vec((prop::collection::vec(0u32..4, dim), -3.0f64..3.0), 0..8)
        .prop_map(move |terms| Polynomial::from_terms(dim, terms.into_iter().map(|(e, c)| (Monomial::new(e), c))))
}

fn point(dim: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.5f64..1.5, dim)
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * (1.0 + a.abs().max(b.abs()))
}

proptest! {
    #[test]
    fn evaluation_is_a_ring_homomorphism(p in poly_strategy(3), q in poly_strategy(3), x in point(3)) {
        let (pv, qv) = (p.eval(&x), q.eval(&x));
        prop_assert!(close((&p + &q).eval(&x), pv + qv, 1e-10));
        prop_assert!(close((&p * &q).eval(&x), pv * qv, 1e-10));
        prop_assert!(close((&p - &q).eval(&x), pv - qv, 1e-10));
    }

    #[test]
    fn gradient_matches_central_differences(p in poly_strategy(2), x in point(2)) {
        let g = p.gradient();
        for k in 0..2 {
            let exact = g.component(k).eval(&x);
            let mut errs = Vec::new();
            for h in [1e-3, 1e-4] {
                let (mut a, mut b) = (x.clone(), x.clone());
                a[k] += h;
                b[k] -= h;
                let fd = (p.eval(&a) - p.eval(&b)) / (2.0 * h);
                errs.push((exact - fd).abs());
            }
            // Third derivatives of these polynomials stay below ~1e3 on the box.
            prop_assert!(errs[0] <= 1e3 * 1e-6 + 1e-8, "h=1e-3 error {}", errs[0]);
            // Quadratic shrinkage: ten times smaller h, a hundred times smaller error.
            prop_assert!(errs[1] <= errs[0] / 50.0 + 1e-8, "errors {errs:?}");
        }
    }

    #[test]
    fn lie_derivative_is_gradient_dot_field(v in poly_strategy(2), f1 in poly_strategy(2), f2 in poly_strategy(2), x in point(2)) {
        let f = PolyVector::new(vec![f1, f2]).unwrap();
        let lie = v.lie_derivative(&f).unwrap().eval(&x);
        let g = v.gradient().eval(&x);
        let fx = f.eval(&x);
        let dot = g[0] * fx[0] + g[1] * fx[1];
        prop_assert!((lie - dot).abs() <= 1e-12 * (1.0 + dot.abs()) * 10.0);
    }

    #[test]
    fn text_form_round_trips(p in poly_strategy(3)) {
        let back = parse(&p.to_string(), 3).unwrap();
        prop_assert!(coefficients_equal(&p, &back).iter().all(|(_, r)| r.abs() <= 1e-12 * (1.0 + p.max_abs_coefficient())));
    }
}

#[test]
fn residuals_name_the_differing_monomial() {
    let p = parse("x1^2", 2).unwrap();
    let q = parse("x1^2 + 0.001*x1^2*x2^2", 2).unwrap();
    let r = coefficients_equal(&p, &q);
    assert_eq!(r.len(), 1);
    assert_eq!(r[0].0, Monomial::new(vec![2, 2]));
    assert!((r[0].1.abs() - 0.001).abs() < 1e-15);
    assert!(coefficients_equal(&p, &p).is_empty());
    assert!(coefficients_equal(&Polynomial::zero(2), &Polynomial::zero(2)).is_empty());
}

#[test]
fn monomial_basis_is_deterministic_and_distinct() {
    for n in 1..=3 {
        for d in 0..=4 {
            let a = monomial_basis(n, d, true);
            let b = monomial_basis(n, d, true);
            assert_eq!(a, b);
            let set: std::collections::BTreeSet<_> = a.iter().cloned().collect();
            assert_eq!(set.len(), a.len());
            assert!(a.windows(2).all(|w| w[0].degree() <= w[1].degree()));
        }
    }
}
