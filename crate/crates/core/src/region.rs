//! Axis-aligned box regions and unions of boxes.
//!
//! Regions describe the state space X, the initial set Xa and the unsafe
//! set Xb. Besides membership and sampling they provide the two pieces of
//! machinery the synthesis needs: the quadratic inequality rendering
//! `q_i(x) = (u_i - x_i)(x_i - l_i) >= 0` and exact extrema of `x' P x`
//! over boxes (vertex enumeration for the supremum of a convex quadratic,
//! face-wise active-set search for the infimum).

use crate::poly::Poly;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RegionError {
    #[error("box bounds must satisfy lower <= upper componentwise")]
    InvalidBounds,
    #[error("dimension mismatch: region has {expected} coordinates, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("face minimization failed: singular principal block")]
    SingularBlock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxRegion {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl BoxRegion {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self, RegionError> {
        if lower.len() != upper.len() || lower.iter().zip(&upper).any(|(l, u)| l > u) {
            return Err(RegionError::InvalidBounds);
        }
        Ok(BoxRegion { lower, upper })
    }

    /// Symmetric box [-c, c]^n.
    pub fn symmetric(n: usize, c: f64) -> Self {
        BoxRegion { lower: vec![-c; n], upper: vec![c; n] }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (l, u))| *v >= *l && *v <= *u)
    }

    pub fn sample(&self, rng: &mut impl Rng) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(&l, &u)| if l == u { l } else { rng.gen_range(l..u) })
            .collect()
    }

    pub fn vertices(&self) -> Vec<Vec<f64>> {
        let n = self.dim();
        (0..1usize << n)
            .map(|mask| {
                (0..n)
                    .map(|i| if mask >> i & 1 == 1 { self.upper[i] } else { self.lower[i] })
                    .collect()
            })
            .collect()
    }

    pub fn intersects(&self, other: &BoxRegion) -> bool {
        self.lower
            .iter()
            .zip(&self.upper)
            .zip(other.lower.iter().zip(&other.upper))
            .all(|((l1, u1), (l2, u2))| l1.max(*l2) <= u1.min(*u2))
    }

    pub fn contains_box(&self, inner: &BoxRegion) -> bool {
        self.lower
            .iter()
            .zip(&self.upper)
            .zip(inner.lower.iter().zip(&inner.upper))
            .all(|((l, u), (li, ui))| l <= li && ui <= u)
    }

    /// Max of x' P x over the box. For PSD P the maximum of a convex
    /// quadratic over a polytope is attained at a vertex.
    pub fn quad_sup(&self, p: &DMatrix<f64>) -> f64 {
        self.vertices()
            .iter()
            .map(|v| {
                let x = DVector::from_column_slice(v);
                (x.transpose() * p * &x)[(0, 0)]
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Exact min of x' P x over the box, for P positive definite.
    ///
    /// Enumerates all face assignments (each coordinate free, at its lower
    /// bound, or at its upper bound), solves the unconstrained minimum on
    /// each face, and keeps feasible candidates. 3^n cases; n <= 3 in the
    /// built-in studies.
    pub fn quad_inf(&self, p: &DMatrix<f64>) -> Result<f64, RegionError> {
        let n = self.dim();
        if p.nrows() != n {
            return Err(RegionError::DimensionMismatch { expected: n, got: p.nrows() });
        }
        let mut best = f64::INFINITY;
        let mut assign = vec![0u8; n]; // 0 = free, 1 = lower, 2 = upper
        loop {
            if let Some(val) = self.face_min(p, &assign)? {
                best = best.min(val);
            }
            // next assignment in base 3
            let mut k = 0;
            loop {
                if k == n {
                    return Ok(best);
                }
                assign[k] += 1;
                if assign[k] == 3 {
                    assign[k] = 0;
                    k += 1;
                } else {
                    break;
                }
            }
        }
    }

    fn face_min(&self, p: &DMatrix<f64>, assign: &[u8]) -> Result<Option<f64>, RegionError> {
        let n = self.dim();
        let free: Vec<usize> = (0..n).filter(|&i| assign[i] == 0).collect();
        let mut x = DVector::zeros(n);
        for i in 0..n {
            x[i] = match assign[i] {
                1 => self.lower[i],
                2 => self.upper[i],
                _ => 0.0,
            };
        }
        if !free.is_empty() {
            // minimize over free coordinates: P_ff x_f = -P_fb x_b
            let nf = free.len();
            let mut pff = DMatrix::zeros(nf, nf);
            let mut rhs = DVector::zeros(nf);
            for (a, &i) in free.iter().enumerate() {
                for (b, &j) in free.iter().enumerate() {
                    pff[(a, b)] = p[(i, j)];
                }
                let mut acc = 0.0;
                for j in 0..n {
                    if assign[j] != 0 {
                        acc += p[(i, j)] * x[j];
                    }
                }
                rhs[a] = -acc;
            }
            let sol = pff.lu().solve(&rhs).ok_or(RegionError::SingularBlock)?;
            for (a, &i) in free.iter().enumerate() {
                x[i] = sol[a];
            }
        }
        if !self.contains(x.as_slice()) {
            return Ok(None);
        }
        Ok(Some((x.transpose() * p * &x)[(0, 0)]))
    }

    /// Per-coordinate quadratic inequalities q_i(x) = (u_i - x_i)(x_i - l_i)
    /// embedded into a `total_vars`-variable space at `offset`.
    pub fn inequalities(&self, total_vars: usize, offset: usize) -> Vec<Poly> {
        let n = self.dim();
        (0..n)
            .map(|i| {
                let xi = Poly::var(total_vars, offset + i);
                let u = Poly::constant(total_vars, self.upper[i]);
                let l = Poly::constant(total_vars, self.lower[i]);
                u.sub(&xi).mul(&xi.sub(&l))
            })
            .collect()
    }
}

/// Box or union-of-boxes region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Region {
    Box { bounds: BoxRegion },
    BoxUnion { boxes: Vec<BoxRegion> },
}

impl Region {
    pub fn single(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self, RegionError> {
        Ok(Region::Box { bounds: BoxRegion::new(lower, upper)? })
    }

    pub fn union(boxes: Vec<BoxRegion>) -> Self {
        Region::BoxUnion { boxes }
    }

    pub fn boxes(&self) -> &[BoxRegion] {
        match self {
            Region::Box { bounds } => std::slice::from_ref(bounds),
            Region::BoxUnion { boxes } => boxes,
        }
    }

    pub fn dim(&self) -> usize {
        self.boxes().first().map(BoxRegion::dim).unwrap_or(0)
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.boxes().iter().any(|b| b.contains(x))
    }

    /// Uniform sample (boxes weighted equally, matching the replicated
    /// symmetric-box unions used by the case studies).
    pub fn sample(&self, rng: &mut impl Rng) -> Vec<f64> {
        let boxes = self.boxes();
        let k = if boxes.len() == 1 { 0 } else { rng.gen_range(0..boxes.len()) };
        boxes[k].sample(rng)
    }

    pub fn quad_sup(&self, p: &DMatrix<f64>) -> f64 {
        self.boxes().iter().map(|b| b.quad_sup(p)).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn quad_inf(&self, p: &DMatrix<f64>) -> Result<f64, RegionError> {
        let mut best = f64::INFINITY;
        for b in self.boxes() {
            best = best.min(b.quad_inf(p)?);
        }
        Ok(best)
    }

    pub fn is_disjoint(&self, other: &Region) -> bool {
        self.boxes()
            .iter()
            .all(|a| other.boxes().iter().all(|b| !a.intersects(b)))
    }

    pub fn contains_region(&self, inner: &Region) -> bool {
        inner
            .boxes()
            .iter()
            .all(|ib| self.boxes().iter().any(|ob| ob.contains_box(ib)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;

    #[test]
    fn sup_at_corner() {
        // P = I over [-1,1]^2: sup x'x = 2 at a corner
        let b = BoxRegion::symmetric(2, 1.0);
        let p = DMatrix::identity(2, 2);
        assert_relative_eq!(b.quad_sup(&p), 2.0);
    }

    #[test]
    fn inf_over_offset_box() {
        // P = I over [3,5]^2: inf x'x = 18 at (3,3)
        let b = BoxRegion::new(vec![3.0, 3.0], vec![5.0, 5.0]).unwrap();
        let p = DMatrix::identity(2, 2);
        assert_relative_eq!(b.quad_inf(&p).unwrap(), 18.0);
    }

    #[test]
    fn inf_with_cross_terms_lands_on_face() {
        // P with strong negative cross term pulls the minimizer inside a face
        let p = DMatrix::from_row_slice(2, 2, &[2.0, -1.5, -1.5, 2.0]);
        let b = BoxRegion::new(vec![1.0, -4.0], vec![4.0, 4.0]).unwrap();
        let exact = b.quad_inf(&p).unwrap();
        // brute force over a fine grid as an oracle
        let mut best = f64::INFINITY;
        let steps = 400;
        for i in 0..=steps {
            for j in 0..=steps {
                let x = 1.0 + 3.0 * i as f64 / steps as f64;
                let y = -4.0 + 8.0 * j as f64 / steps as f64;
                let v = 2.0 * x * x + 2.0 * y * y - 3.0 * x * y;
                best = best.min(v);
            }
        }
        assert!((exact - best).abs() < 1e-3, "exact {} grid {}", exact, best);
        assert!(exact <= best + 1e-12);
    }

    #[test]
    fn union_min_over_boxes() {
        let r = Region::union(vec![
            BoxRegion::new(vec![3.0, 3.0], vec![5.0, 5.0]).unwrap(),
            BoxRegion::new(vec![-5.0, -5.0], vec![-3.0, -3.0]).unwrap(),
        ]);
        let p = DMatrix::identity(2, 2);
        assert_relative_eq!(r.quad_inf(&p).unwrap(), 18.0);
        assert_relative_eq!(r.quad_sup(&p), 50.0);
    }

    #[test]
    fn inequalities_sign_characterizes_box() {
        let b = BoxRegion::new(vec![-5.0, -5.0], vec![5.0, 5.0]).unwrap();
        let qs = b.inequalities(4, 0);
        assert_eq!(qs.len(), 2);
        assert!(qs[0].eval(&[0.0, 0.0, 9.0, 9.0]).unwrap() > 0.0);
        assert!(qs[0].eval(&[6.0, 0.0, 9.0, 9.0]).unwrap() < 0.0);
        assert_eq!(qs[1].eval(&[0.0, 5.0, 9.0, 9.0]).unwrap(), 0.0);
        // delayed-slot embedding
        let qh = b.inequalities(4, 2);
        assert!(qh[0].eval(&[9.0, 9.0, 0.0, 0.0]).unwrap() > 0.0);
        assert!(qh[0].eval(&[9.0, 9.0, 6.0, 0.0]).unwrap() < 0.0);
    }

    #[test]
    fn sampling_stays_inside() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let r = Region::union(vec![
            BoxRegion::new(vec![3.0, 3.0], vec![5.0, 5.0]).unwrap(),
            BoxRegion::new(vec![-5.0, -5.0], vec![-3.0, -3.0]).unwrap(),
        ]);
        for _ in 0..500 {
            let x = r.sample(&mut rng);
            assert!(r.contains(&x));
        }
    }

    #[test]
    fn disjointness_and_containment() {
        let x = Region::single(vec![-5.0, -5.0], vec![5.0, 5.0]).unwrap();
        let xa = Region::single(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap();
        let xb = Region::union(vec![
            BoxRegion::new(vec![3.0, 3.0], vec![5.0, 5.0]).unwrap(),
            BoxRegion::new(vec![-5.0, -5.0], vec![-3.0, -3.0]).unwrap(),
        ]);
        assert!(x.contains_region(&xa));
        assert!(x.contains_region(&xb));
        assert!(xa.is_disjoint(&xb));
        assert!(!x.is_disjoint(&xb));
    }
}
