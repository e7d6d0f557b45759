use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::poly::{PolyVector, Polynomial};

/// Tolerance on the simplex constraints of vertex weights.
pub const SIMPLEX_TOL: f64 = 1e-12;

/// Axis-aligned box bounding the compact state space.
#[derive(Clone, Debug, PartialEq)]
pub struct BoxDomain {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoxDomain {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::DimensionMismatch {
                expected: lo.len(),
                found: hi.len(),
            });
        }
        if lo.iter().zip(&hi).any(|(a, b)| !(a < b) || !a.is_finite() || !b.is_finite()) {
            return Err(Error::InvalidSystem(format!(
                "box bounds must be finite with lo < hi, got {lo:?} and {hi:?}"
            )));
        }
        Ok(Self { lo, hi })
    }

    pub fn symmetric(dim: usize, half_width: f64) -> Self {
        Self {
            lo: vec![-half_width; dim],
            hi: vec![half_width; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(v, (a, b))| *v >= a - tol && *v <= b + tol)
    }

    /// Box with the same centre and each half-width multiplied by `factor`.
    pub fn enlarged(&self, factor: f64) -> BoxDomain {
        let (lo, hi) = self
            .lo
            .iter()
            .zip(&self.hi)
            .map(|(a, b)| {
                let c = 0.5 * (a + b);
                let h = 0.5 * (b - a) * factor;
                (c - h, c + h)
            })
            .unzip();
        BoxDomain { lo, hi }
    }

    /// Generators `(x_k - lo_k)(hi_k - x_k) >= 0` describing the box.
    pub fn generators(&self) -> Vec<Polynomial> {
        let n = self.dim();
        (0..n)
            .map(|k| {
                let x = Polynomial::var(n, k);
                let a = &x - &Polynomial::constant(n, self.lo[k]);
                let b = &Polynomial::constant(n, self.hi[k]) - &x;
                &a * &b
            })
            .collect()
    }
}

/// `{ x : chi(x) = 0, xi_k(x) >= 0 }`.
#[derive(Clone, Debug)]
pub struct SemiAlgebraicRegion {
    pub id: usize,
    pub chi: Polynomial,
    pub xi: Vec<Polynomial>,
    pub witnesses: Vec<Vec<f64>>,
}

impl SemiAlgebraicRegion {
    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        self.chi.eval(x).abs() <= tol && self.xi.iter().all(|g| g.eval(x) >= -tol)
    }
}

/// The variety `chi_ij = 0` shared by regions `i` and `j`.
#[derive(Clone, Debug)]
pub struct BoundaryVariety {
    pub i: usize,
    pub j: usize,
    pub chi: Polynomial,
    pub witnesses: Vec<Vec<f64>>,
}

impl BoundaryVariety {
    pub fn pair(&self) -> (usize, usize) {
        (self.i, self.j)
    }

    pub fn joins(&self, a: usize, b: usize) -> bool {
        (self.i, self.j) == (a, b) || (self.i, self.j) == (b, a)
    }
}

/// Vertex vector fields of a simplex-uncertain subsystem; one vertex means
/// the dynamics are certain.
#[derive(Clone, Debug)]
pub struct SubsystemDynamics {
    vertices: Vec<PolyVector>,
}

impl SubsystemDynamics {
    pub fn new(vertices: Vec<PolyVector>) -> Result<Self> {
        let Some(first) = vertices.first() else {
            return Err(Error::InvalidSystem("a subsystem needs at least one vertex field".into()));
        };
        let n = first.dim();
        if let Some(v) = vertices.iter().find(|v| v.dim() != n) {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: v.dim(),
            });
        }
        Ok(Self { vertices })
    }

    pub fn vertices(&self) -> &[PolyVector] {
        &self.vertices
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    /// `sum theta_l f_l`.
    pub fn combine(&self, theta: &[f64]) -> Result<PolyVector> {
        check_simplex(theta, self.vertices.len())?;
        let mut out = PolyVector::zero(self.vertices[0].dim());
        for (w, f) in theta.iter().zip(&self.vertices) {
            if *w != 0.0 {
                out = out.add(&f.scale(*w));
            }
        }
        Ok(out)
    }

    /// Pointwise `sum theta_l f_l(x)` without the simplex check.
    pub fn eval_combined(&self, theta: &[f64], x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        let mut tmp = vec![0.0; out.len()];
        for (w, f) in theta.iter().zip(&self.vertices) {
            if *w == 0.0 {
                continue;
            }
            f.eval_into(x, &mut tmp);
            for (o, t) in out.iter_mut().zip(&tmp) {
                *o += w * t;
            }
        }
    }
}

pub fn check_simplex(theta: &[f64], len: usize) -> Result<()> {
    if theta.len() != len {
        return Err(Error::OffSimplex(format!(
            "expected {len} weights, got {}",
            theta.len()
        )));
    }
    if let Some(w) = theta.iter().find(|w| !(**w >= 0.0) || !w.is_finite()) {
        return Err(Error::OffSimplex(format!("weight {w} is negative or not finite")));
    }
    let s: f64 = theta.iter().sum();
    if (s - 1.0).abs() > SIMPLEX_TOL {
        return Err(Error::OffSimplex(format!("weights sum to {s}, not 1")));
    }
    Ok(())
}

/// A polynomial switched system on a semi-algebraic partition.
#[derive(Clone, Debug)]
pub struct SwitchedSystem {
    pub name: String,
    dim: usize,
    bounds: BoxDomain,
    regions: Vec<SemiAlgebraicRegion>,
    boundaries: Vec<BoundaryVariety>,
    dynamics: BTreeMap<usize, SubsystemDynamics>,
    origin_regions: BTreeSet<usize>,
}

impl SwitchedSystem {
    /// Checks structural consistency: dimensions, unique region ids, boundary
    /// references and one subsystem per region. Geometric claims such as
    /// witnesses and origin membership are left to [`validate`](super::validate).
    pub fn new(
        name: impl Into<String>,
        bounds: BoxDomain,
        regions: Vec<SemiAlgebraicRegion>,
        boundaries: Vec<BoundaryVariety>,
        dynamics: BTreeMap<usize, SubsystemDynamics>,
        origin_regions: BTreeSet<usize>,
    ) -> Result<Self> {
        let dim = bounds.dim();
        if dim == 0 {
            return Err(Error::InvalidSystem("dimension must be positive".into()));
        }
        let mismatch = |found: usize| Error::DimensionMismatch { expected: dim, found };
        let mut ids = BTreeSet::new();
        for r in &regions {
            if !ids.insert(r.id) {
                return Err(Error::InvalidSystem(format!("region {} declared twice", r.id)));
            }
            if r.chi.dim() != dim {
                return Err(mismatch(r.chi.dim()));
            }
            if let Some(g) = r.xi.iter().find(|g| g.dim() != dim) {
                return Err(mismatch(g.dim()));
            }
            if let Some(w) = r.witnesses.iter().find(|w| w.len() != dim) {
                return Err(mismatch(w.len()));
            }
        }
        for b in &boundaries {
            if b.i == b.j {
                return Err(Error::InvalidSystem(format!(
                    "boundary ({}, {}) joins a region to itself",
                    b.i, b.j
                )));
            }
            for r in [b.i, b.j] {
                if !ids.contains(&r) {
                    return Err(Error::UnknownRegion(r));
                }
            }
            if b.chi.dim() != dim {
                return Err(mismatch(b.chi.dim()));
            }
            if let Some(w) = b.witnesses.iter().find(|w| w.len() != dim) {
                return Err(mismatch(w.len()));
            }
        }
        for (k, b) in boundaries.iter().enumerate() {
            if boundaries[..k].iter().any(|o| o.joins(b.i, b.j)) {
                return Err(Error::InvalidSystem(format!(
                    "boundary ({}, {}) declared twice",
                    b.i, b.j
                )));
            }
        }
        for id in &ids {
            let d = dynamics
                .get(id)
                .ok_or_else(|| Error::InvalidSystem(format!("region {id} has no dynamics")))?;
            if let Some(v) = d.vertices().iter().find(|v| v.dim() != dim) {
                return Err(mismatch(v.dim()));
            }
        }
        if let Some(id) = dynamics.keys().find(|id| !ids.contains(id)) {
            return Err(Error::UnknownRegion(*id));
        }
        if let Some(id) = origin_regions.iter().find(|id| !ids.contains(id)) {
            return Err(Error::UnknownRegion(*id));
        }
        Ok(Self {
            name: name.into(),
            dim,
            bounds,
            regions,
            boundaries,
            dynamics,
            origin_regions,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn bounds(&self) -> &BoxDomain {
        &self.bounds
    }

    pub fn regions(&self) -> &[SemiAlgebraicRegion] {
        &self.regions
    }

    pub fn boundaries(&self) -> &[BoundaryVariety] {
        &self.boundaries
    }

    pub fn origin_regions(&self) -> &BTreeSet<usize> {
        &self.origin_regions
    }

    pub fn region_ids(&self) -> impl Iterator<Item = usize> + '_ {
        self.regions.iter().map(|r| r.id)
    }

    pub fn region(&self, id: usize) -> Result<&SemiAlgebraicRegion> {
        self.regions
            .iter()
            .find(|r| r.id == id)
            .ok_or(Error::UnknownRegion(id))
    }

    pub fn dynamics(&self, id: usize) -> Result<&SubsystemDynamics> {
        self.dynamics.get(&id).ok_or(Error::UnknownRegion(id))
    }

    /// The boundary joining `i` and `j`, in either orientation.
    pub fn boundary(&self, i: usize, j: usize) -> Result<&BoundaryVariety> {
        self.boundaries
            .iter()
            .find(|b| b.joins(i, j))
            .ok_or(Error::UnknownBoundary(i, j))
    }

    /// Every region whose closure contains `x` up to `tol`.
    pub fn locate(&self, x: &[f64], tol: f64) -> Result<BTreeSet<usize>> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: x.len(),
            });
        }
        let found: BTreeSet<usize> = self
            .regions
            .iter()
            .filter(|r| r.contains(x, tol))
            .map(|r| r.id)
            .collect();
        if found.is_empty() {
            return Err(Error::OutsideStateSpace(x.to_vec()));
        }
        Ok(found)
    }

    /// `F_i(., theta) = sum theta_l f_il`.
    pub fn field_at(&self, region: usize, theta: &[f64]) -> Result<PolyVector> {
        self.dynamics(region)?.combine(theta)
    }

    /// Weight vector selecting vertex `l` of `region`.
    pub fn vertex_theta(&self, region: usize, l: usize) -> Result<Vec<f64>> {
        let n = self.dynamics(region)?.len();
        let mut t = vec![0.0; n];
        t[l] = 1.0;
        Ok(t)
    }

    pub fn max_field_degree(&self) -> u32 {
        self.dynamics
            .values()
            .flat_map(|d| d.vertices().iter().map(PolyVector::degree))
            .max()
            .unwrap_or(0)
    }
}
