//! Small reference systems used by tests and documentation.

use std::collections::{BTreeMap, BTreeSet};

use super::model::{BoundaryVariety, BoxDomain, SemiAlgebraicRegion, SubsystemDynamics, SwitchedSystem};
use crate::poly::{parse, PolyVector, Polynomial};

fn p(s: &str, n: usize) -> Polynomial {
    parse(s, n).expect("library polynomial")
}

fn field(parts: &[&str]) -> PolyVector {
    let n = parts.len();
    PolyVector::new(parts.iter().map(|s| p(s, n)).collect()).expect("library field")
}

/// Two regions split by the coordinate axes: region 1 where `x1*x2 >= 0`
/// with vertex fields `(-x1, -x2^3)` and `(-x2, x1^3)`, region 2 where
/// `x1*x2 <= 0` with the single field `(-0.5*x2, x1^3 - x2^3)`, on `[-2, 2]^2`.
pub fn quadrant_system() -> SwitchedSystem {
    let regions = vec![
        SemiAlgebraicRegion {
            id: 1,
            chi: Polynomial::zero(2),
            xi: vec![p("x1*x2", 2)],
            witnesses: vec![vec![1.0, 1.0]],
        },
        SemiAlgebraicRegion {
            id: 2,
            chi: Polynomial::zero(2),
            xi: vec![p("-x1*x2", 2)],
            witnesses: vec![vec![1.0, -1.0]],
        },
    ];
    let boundaries = vec![BoundaryVariety {
        i: 1,
        j: 2,
        chi: p("x1*x2", 2),
        witnesses: vec![vec![1.0, 0.0]],
    }];
    let mut dynamics = BTreeMap::new();
    dynamics.insert(
        1,
        SubsystemDynamics::new(vec![field(&["-x1", "-x2^3"]), field(&["-x2", "x1^3"])]).unwrap(),
    );
    dynamics.insert(
        2,
        SubsystemDynamics::new(vec![field(&["-0.5*x2", "x1^3 - x2^3"])]).unwrap(),
    );
    SwitchedSystem::new(
        "quadrant",
        BoxDomain::symmetric(2, 2.0),
        regions,
        boundaries,
        dynamics,
        BTreeSet::from([1, 2]),
    )
    .expect("library system")
}

/// `x' = a*x` on one region `[-1, 1]`.
pub fn scalar_linear(a: f64) -> SwitchedSystem {
    let mut dynamics = BTreeMap::new();
    dynamics.insert(
        1,
        SubsystemDynamics::new(vec![PolyVector::new(vec![Polynomial::var(1, 0).scale(a)]).unwrap()])
            .unwrap(),
    );
    SwitchedSystem::new(
        "scalar",
        BoxDomain::symmetric(1, 1.0),
        vec![SemiAlgebraicRegion {
            id: 1,
            chi: Polynomial::zero(1),
            xi: vec![],
            witnesses: vec![vec![0.5]],
        }],
        vec![],
        dynamics,
        BTreeSet::from([1]),
    )
    .expect("library system")
}

/// Constant fields on either side of `x2 = 0`; `upper` applies where
/// `x2 >= 0` and `lower` where `x2 <= 0`.
pub fn half_planes(upper: [f64; 2], lower: [f64; 2]) -> SwitchedSystem {
    let c = |v: [f64; 2]| {
        PolyVector::new(vec![Polynomial::constant(2, v[0]), Polynomial::constant(2, v[1])]).unwrap()
    };
    let mut dynamics = BTreeMap::new();
    dynamics.insert(1, SubsystemDynamics::new(vec![c(upper)]).unwrap());
    dynamics.insert(2, SubsystemDynamics::new(vec![c(lower)]).unwrap());
    SwitchedSystem::new(
        "half-planes",
        BoxDomain::symmetric(2, 2.0),
        vec![
            SemiAlgebraicRegion {
                id: 1,
                chi: Polynomial::zero(2),
                xi: vec![p("x2", 2)],
                witnesses: vec![vec![0.0, 1.0]],
            },
            SemiAlgebraicRegion {
                id: 2,
                chi: Polynomial::zero(2),
                xi: vec![p("-x2", 2)],
                witnesses: vec![vec![0.0, -1.0]],
            },
        ],
        vec![BoundaryVariety {
            i: 1,
            j: 2,
            chi: p("x2", 2),
            witnesses: vec![vec![0.0, 0.0]],
        }],
        dynamics,
        BTreeSet::new(),
    )
    .expect("library system")
}

/// Fields `(1, -1)` above and `(1, 1)` below `x2 = 0`: trajectories slide.
pub fn opposing_fields() -> SwitchedSystem {
    half_planes([1.0, -1.0], [1.0, 1.0])
}

/// Field `(0, 1)` on both sides of `x2 = 0`: trajectories cross.
pub fn aligned_fields() -> SwitchedSystem {
    half_planes([0.0, 1.0], [0.0, 1.0])
}
