//! Switched systems on semi-algebraic partitions and their validation.

pub mod library;
mod model;
mod validate;

pub use model::{
    check_simplex, BoundaryVariety, BoxDomain, SemiAlgebraicRegion, SubsystemDynamics,
    SwitchedSystem, SIMPLEX_TOL,
};
pub use validate::{
    validate, validate_with, Check, CheckLevel, ValidationReport, CLOSURE_TOL, SEARCH_SAMPLES,
    WITNESS_TOL,
};

#[cfg(test)]
mod tests {
    use std::collections::{BTreeMap, BTreeSet};

    use super::*;
    use crate::error::Error;
    use crate::poly::{parse, PolyVector, Polynomial};

    fn p(s: &str) -> Polynomial {
        parse(s, 2).unwrap()
    }

    #[test]
    fn locate_examples() {
        let sys = library::quadrant_system();
        assert_eq!(sys.locate(&[1.0, 1.0], 1e-9).unwrap(), BTreeSet::from([1]));
        assert_eq!(sys.locate(&[1.0, -1.0], 1e-9).unwrap(), BTreeSet::from([2]));
        assert_eq!(sys.locate(&[1.0, 0.0], 1e-9).unwrap(), BTreeSet::from([1, 2]));
    }

    #[test]
    fn locate_outside_is_reported() {
        let sys = library::opposing_fields();
        let mut regions = sys.regions().to_vec();
        regions[1].xi = vec![p("-x2 - 1")];
        let dyns: BTreeMap<usize, SubsystemDynamics> = [1, 2]
            .into_iter()
            .map(|id| (id, sys.dynamics(id).unwrap().clone()))
            .collect();
        let gap = SwitchedSystem::new(
            "gap",
            sys.bounds().clone(),
            regions,
            sys.boundaries().to_vec(),
            dyns,
            BTreeSet::new(),
        )
        .unwrap();
        assert!(matches!(
            gap.locate(&[0.0, -0.5], 1e-9),
            Err(Error::OutsideStateSpace(_))
        ));
    }

    #[test]
    fn field_at_examples() {
        let sys = library::quadrant_system();
        let f = sys.field_at(1, &[1.0, 0.0]).unwrap();
        assert_eq!(f, PolyVector::new(vec![p("-x1"), p("-x2^3")]).unwrap());
        let f = sys.field_at(1, &[0.0, 1.0]).unwrap();
        assert_eq!(f, PolyVector::new(vec![p("-x2"), p("x1^3")]).unwrap());
        let f = sys.field_at(1, &[0.5, 0.5]).unwrap();
        assert_eq!(
            f,
            PolyVector::new(vec![p("-0.5*x1 - 0.5*x2"), p("-0.5*x2^3 + 0.5*x1^3")]).unwrap()
        );
        assert!(matches!(sys.field_at(1, &[0.7, 0.7]), Err(Error::OffSimplex(_))));
        assert!(matches!(sys.field_at(1, &[1.2, -0.2]), Err(Error::OffSimplex(_))));
        assert!(matches!(sys.field_at(2, &[0.5, 0.5]), Err(Error::OffSimplex(_))));
    }

    #[test]
    fn quadrant_system_validates() {
        let report = validate(&library::quadrant_system());
        assert_eq!(report.worst(), CheckLevel::Pass, "{report}");
        assert!(!report.caveats.is_empty());
    }

    #[test]
    fn missing_boundary_root_warns() {
        let sys = library::quadrant_system();
        let mut boundaries = sys.boundaries().to_vec();
        boundaries[0].chi = p("x1^2 + x2^2 + 1");
        boundaries[0].witnesses.clear();
        let dyns = [1, 2]
            .into_iter()
            .map(|id| (id, sys.dynamics(id).unwrap().clone()))
            .collect();
        let bad = SwitchedSystem::new(
            "no-root",
            sys.bounds().clone(),
            sys.regions().to_vec(),
            boundaries,
            dyns,
            sys.origin_regions().clone(),
        )
        .unwrap();
        let report = validate(&bad);
        let c = report.check("boundary (1, 2) witness").unwrap();
        assert_eq!(c.level, CheckLevel::Warn);
        assert!(c.detail.contains("no boundary witness found"));
    }

    #[test]
    fn false_origin_claim_fails() {
        let sys = library::quadrant_system();
        let mut regions = sys.regions().to_vec();
        regions[0].xi = vec![p("x1*x2 - 1")];
        regions[0].witnesses = vec![vec![2.0, 2.0]];
        let dyns = [1, 2]
            .into_iter()
            .map(|id| (id, sys.dynamics(id).unwrap().clone()))
            .collect();
        let bad = SwitchedSystem::new(
            "bad-origin",
            sys.bounds().clone(),
            regions,
            sys.boundaries().to_vec(),
            dyns,
            sys.origin_regions().clone(),
        )
        .unwrap();
        let report = validate(&bad);
        assert_eq!(report.check("origin in region 1").unwrap().level, CheckLevel::Fail);
    }

    #[test]
    fn structural_errors() {
        let sys = library::quadrant_system();
        let mut boundaries = sys.boundaries().to_vec();
        boundaries[0].j = 7;
        let dyns: BTreeMap<_, _> = [1, 2]
            .into_iter()
            .map(|id| (id, sys.dynamics(id).unwrap().clone()))
            .collect();
        let err = SwitchedSystem::new(
            "x",
            sys.bounds().clone(),
            sys.regions().to_vec(),
            boundaries,
            dyns,
            BTreeSet::new(),
        );
        assert!(matches!(err, Err(Error::UnknownRegion(7))));
        assert!(SubsystemDynamics::new(vec![]).is_err());
    }
}
