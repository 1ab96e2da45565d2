//! Multivariate polynomial and polynomial-matrix arithmetic over the
//! concatenated variable list `(x_1..x_n, xh_1..xh_n)`.
//!
//! Everything here is plain dense-exponent arithmetic over `f64`
//! coefficients in canonical form (no zero terms, deterministic monomial
//! order). The monomial order is graded (total degree first), then by
//! largest single exponent, then reverse lexicographic — chosen so that a
//! degree-2 state dictionary enumerates as `[x1, x2, x1*x2, x1^2, x2^2]`.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use thiserror::Error;

use nalgebra::DMatrix;

#[derive(Debug, Error, PartialEq)]
pub enum PolyError {
    #[error("dimension mismatch: expected {expected} variables, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("dictionary entry {index} has degree 0; state dictionaries require degree >= 1")]
    DegreeZeroEntry { index: usize },
    #[error("matrix shape mismatch: {0}")]
    ShapeMismatch(String),
}

/// A monomial as a dense exponent vector over a fixed variable list.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Monomial {
    pub exps: Vec<u8>,
}

impl Monomial {
    pub fn new(exps: Vec<u8>) -> Self {
        Monomial { exps }
    }

    pub fn one(nvars: usize) -> Self {
        Monomial { exps: vec![0; nvars] }
    }

    /// The single variable `x_i` (0-based index).
    pub fn var(nvars: usize, i: usize) -> Self {
        let mut exps = vec![0; nvars];
        exps[i] = 1;
        Monomial { exps }
    }

    pub fn nvars(&self) -> usize {
        self.exps.len()
    }

    pub fn degree(&self) -> u32 {
        self.exps.iter().map(|&e| e as u32).sum()
    }

    pub fn eval(&self, point: &[f64]) -> f64 {
        self.exps
            .iter()
            .zip(point)
            .fold(1.0, |acc, (&e, &x)| acc * x.powi(e as i32))
    }

    pub fn mul(&self, other: &Monomial) -> Monomial {
        debug_assert_eq!(self.exps.len(), other.exps.len());
        Monomial {
            exps: self
                .exps
                .iter()
                .zip(&other.exps)
                .map(|(&a, &b)| a + b)
                .collect(),
        }
    }

    /// Re-index into a larger variable space, shifting variables by `offset`.
    pub fn embed(&self, total_vars: usize, offset: usize) -> Monomial {
        let mut exps = vec![0; total_vars];
        for (i, &e) in self.exps.iter().enumerate() {
            exps[offset + i] = e;
        }
        Monomial { exps }
    }

    /// Lowest variable index with a positive exponent, if any.
    pub fn lowest_var(&self) -> Option<usize> {
        self.exps.iter().position(|&e| e > 0)
    }

    /// Divide by the variable at `i` (exponent must be positive).
    pub fn div_var(&self, i: usize) -> Monomial {
        let mut exps = self.exps.clone();
        assert!(exps[i] > 0, "division by a variable with zero exponent");
        exps[i] -= 1;
        Monomial { exps }
    }
}

impl Ord for Monomial {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        let key = |m: &Monomial| (m.degree(), m.exps.iter().copied().max().unwrap_or(0));
        key(self)
            .cmp(&key(other))
            // reverse lex: higher leading exponents sort earlier
            .then_with(|| other.exps.cmp(&self.exps))
    }
}

impl PartialOrd for Monomial {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Monomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.degree() == 0 {
            return write!(f, "1");
        }
        let n = self.exps.len();
        let mut first = true;
        for (i, &e) in self.exps.iter().enumerate() {
            if e == 0 {
                continue;
            }
            if !first {
                write!(f, "*")?;
            }
            first = false;
            // first half is x, second half (when even length) is the delayed copy
            if n % 2 == 0 && i >= n / 2 {
                write!(f, "xh{}", i - n / 2 + 1)?;
            } else {
                write!(f, "x{}", i + 1)?;
            }
            if e > 1 {
                write!(f, "^{}", e)?;
            }
        }
        Ok(())
    }
}

/// A polynomial in canonical form: a sorted term map with no zero
/// coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Poly {
    pub nvars: usize,
    pub terms: BTreeMap<Monomial, f64>,
}

impl Poly {
    pub fn zero(nvars: usize) -> Self {
        Poly { nvars, terms: BTreeMap::new() }
    }

    pub fn constant(nvars: usize, c: f64) -> Self {
        let mut p = Poly::zero(nvars);
        p.add_term(Monomial::one(nvars), c);
        p
    }

    pub fn var(nvars: usize, i: usize) -> Self {
        let mut p = Poly::zero(nvars);
        p.add_term(Monomial::var(nvars, i), 1.0);
        p
    }

    pub fn from_terms(nvars: usize, terms: impl IntoIterator<Item = (Monomial, f64)>) -> Self {
        let mut p = Poly::zero(nvars);
        for (m, c) in terms {
            p.add_term(m, c);
        }
        p
    }

    pub fn monomial(m: Monomial, c: f64) -> Self {
        let nvars = m.nvars();
        let mut p = Poly::zero(nvars);
        p.add_term(m, c);
        p
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn degree(&self) -> u32 {
        self.terms.keys().map(|m| m.degree()).max().unwrap_or(0)
    }

    /// Add `c` to the coefficient of `m`, pruning exact zeros.
    pub fn add_term(&mut self, m: Monomial, c: f64) {
        debug_assert_eq!(m.nvars(), self.nvars);
        if c == 0.0 {
            return;
        }
        let v = self.terms.entry(m.clone()).or_insert(0.0);
        *v += c;
        if *v == 0.0 {
            self.terms.remove(&m);
        }
    }

    pub fn coeff(&self, m: &Monomial) -> f64 {
        self.terms.get(m).copied().unwrap_or(0.0)
    }

    pub fn eval(&self, point: &[f64]) -> Result<f64, PolyError> {
        if point.len() != self.nvars {
            return Err(PolyError::DimensionMismatch { expected: self.nvars, got: point.len() });
        }
        Ok(self
            .terms
            .iter()
            .map(|(m, &c)| c * m.eval(point))
            .sum())
    }

    pub fn add(&self, other: &Poly) -> Poly {
        let mut out = self.clone();
        for (m, &c) in &other.terms {
            out.add_term(m.clone(), c);
        }
        out
    }

    pub fn sub(&self, other: &Poly) -> Poly {
        self.add(&other.scale(-1.0))
    }

    pub fn scale(&self, s: f64) -> Poly {
        if s == 0.0 {
            return Poly::zero(self.nvars);
        }
        Poly {
            nvars: self.nvars,
            terms: self.terms.iter().map(|(m, &c)| (m.clone(), c * s)).collect(),
        }
    }

    pub fn mul(&self, other: &Poly) -> Poly {
        let mut out = Poly::zero(self.nvars);
        for (ma, &ca) in &self.terms {
            for (mb, &cb) in &other.terms {
                out.add_term(ma.mul(mb), ca * cb);
            }
        }
        out
    }

    pub fn embed(&self, total_vars: usize, offset: usize) -> Poly {
        Poly {
            nvars: total_vars,
            terms: self
                .terms
                .iter()
                .map(|(m, &c)| (m.embed(total_vars, offset), c))
                .collect(),
        }
    }

    /// Drop terms with |coefficient| <= tol.
    pub fn prune(&self, tol: f64) -> Poly {
        Poly {
            nvars: self.nvars,
            terms: self
                .terms
                .iter()
                .filter(|(_, &c)| c.abs() > tol)
                .map(|(m, &c)| (m.clone(), c))
                .collect(),
        }
    }

    /// Structured-text form: list of (exponent-vector, coefficient) pairs.
    pub fn to_pairs(&self) -> Vec<(Vec<u8>, f64)> {
        self.terms.iter().map(|(m, &c)| (m.exps.clone(), c)).collect()
    }

    pub fn from_pairs(nvars: usize, pairs: &[(Vec<u8>, f64)]) -> Poly {
        Poly::from_terms(
            nvars,
            pairs.iter().map(|(e, c)| (Monomial::new(e.clone()), *c)),
        )
    }
}

impl fmt::Display for Poly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let mut first = true;
        for (m, c) in &self.terms {
            if first {
                write!(f, "{}", c)?;
                first = false;
            } else if *c >= 0.0 {
                write!(f, " + {}", c)?;
            } else {
                write!(f, " - {}", -c)?;
            }
            if m.degree() > 0 {
                write!(f, "*{}", m)?;
            }
        }
        Ok(())
    }
}

/// An ordered list of monomials spanning a function class up to a degree
/// bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dictionary {
    /// Number of underlying variables.
    pub arity: usize,
    pub entries: Vec<Monomial>,
}

impl Dictionary {
    pub fn new(arity: usize, entries: Vec<Monomial>) -> Self {
        debug_assert!(entries.iter().all(|m| m.nvars() == arity));
        Dictionary { arity, entries }
    }

    pub fn output_dim(&self) -> usize {
        self.entries.len()
    }

    pub fn eval(&self, point: &[f64]) -> Result<Vec<f64>, PolyError> {
        if point.len() != self.arity {
            return Err(PolyError::DimensionMismatch { expected: self.arity, got: point.len() });
        }
        Ok(self.entries.iter().map(|m| m.eval(point)).collect())
    }

    pub fn max_degree(&self) -> u32 {
        self.entries.iter().map(|m| m.degree()).max().unwrap_or(0)
    }

    pub fn to_exponent_lists(&self) -> Vec<Vec<u8>> {
        self.entries.iter().map(|m| m.exps.clone()).collect()
    }

    pub fn from_exponent_lists(arity: usize, lists: &[Vec<u8>]) -> Dictionary {
        Dictionary::new(arity, lists.iter().map(|e| Monomial::new(e.clone())).collect())
    }
}

/// Enumerate all monomials in `nvars` variables with total degree in
/// `[min_degree, max_degree]`, canonically ordered.
fn enumerate_monomials(nvars: usize, min_degree: u32, max_degree: u32) -> Vec<Monomial> {
    fn rec(nvars: usize, budget: u32, prefix: &mut Vec<u8>, out: &mut Vec<Monomial>) {
        if prefix.len() == nvars {
            out.push(Monomial::new(prefix.clone()));
            return;
        }
        for e in 0..=budget {
            prefix.push(e as u8);
            rec(nvars, budget - e, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    for d in min_degree..=max_degree {
        let mut at_degree = Vec::new();
        let mut prefix = Vec::new();
        rec(nvars, d, &mut prefix, &mut at_degree);
        at_degree.retain(|m| m.degree() == d);
        at_degree.sort();
        out.extend(at_degree);
    }
    out
}

/// All monomials in the state variables of total degree `1..=max_degree`.
///
/// Degree 0 is excluded so the dictionary vanishes at the origin; with the
/// binomial count the output has `C(n + max_degree, max_degree) - 1`
/// entries.
pub fn build_state_dictionary(n: usize, max_degree: u32) -> Result<Dictionary, PolyError> {
    if max_degree == 0 {
        return Err(PolyError::DegreeZeroEntry { index: 0 });
    }
    Ok(Dictionary::new(n, enumerate_monomials(n, 1, max_degree)))
}

/// All monomials in `nvars` variables of total degree `0..=half_degree`,
/// used as the basis of Gram parameterizations.
pub fn gram_basis(nvars: usize, half_degree: u32) -> Dictionary {
    Dictionary::new(nvars, enumerate_monomials(nvars, 0, half_degree))
}

/// A dense matrix of polynomials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolyMatrix {
    pub rows: usize,
    pub cols: usize,
    /// Row-major entries.
    pub entries: Vec<Poly>,
    /// Set by constructors that guarantee coefficient-wise symmetry.
    pub symmetric: bool,
}

impl PolyMatrix {
    pub fn zeros(nvars: usize, rows: usize, cols: usize) -> Self {
        PolyMatrix {
            rows,
            cols,
            entries: vec![Poly::zero(nvars); rows * cols],
            symmetric: false,
        }
    }

    pub fn from_entries(rows: usize, cols: usize, entries: Vec<Poly>) -> Self {
        assert_eq!(entries.len(), rows * cols);
        PolyMatrix { rows, cols, entries, symmetric: false }
    }

    /// Constant matrix lifted to polynomial entries.
    pub fn from_constant(nvars: usize, m: &DMatrix<f64>) -> Self {
        let mut out = PolyMatrix::zeros(nvars, m.nrows(), m.ncols());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                *out.entry_mut(i, j) = Poly::constant(nvars, m[(i, j)]);
            }
        }
        out.symmetric = m.nrows() == m.ncols() && (m - m.transpose()).abs().max() == 0.0;
        out
    }

    pub fn identity(nvars: usize, n: usize) -> Self {
        let mut out = PolyMatrix::zeros(nvars, n, n);
        for i in 0..n {
            *out.entry_mut(i, i) = Poly::constant(nvars, 1.0);
        }
        out.symmetric = true;
        out
    }

    pub fn nvars(&self) -> usize {
        self.entries.first().map(|p| p.nvars).unwrap_or(0)
    }

    pub fn entry(&self, i: usize, j: usize) -> &Poly {
        &self.entries[i * self.cols + j]
    }

    pub fn entry_mut(&mut self, i: usize, j: usize) -> &mut Poly {
        &mut self.entries[i * self.cols + j]
    }

    pub fn eval(&self, point: &[f64]) -> Result<DMatrix<f64>, PolyError> {
        let mut out = DMatrix::zeros(self.rows, self.cols);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[(i, j)] = self.entry(i, j).eval(point)?;
            }
        }
        Ok(out)
    }

    pub fn transpose(&self) -> PolyMatrix {
        let mut out = PolyMatrix::zeros(self.nvars(), self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                *out.entry_mut(j, i) = self.entry(i, j).clone();
            }
        }
        out.symmetric = self.symmetric;
        out
    }

    pub fn mul_poly(&self, other: &PolyMatrix) -> Result<PolyMatrix, PolyError> {
        if self.cols != other.rows {
            return Err(PolyError::ShapeMismatch(format!(
                "{}x{} * {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = PolyMatrix::zeros(self.nvars(), self.rows, other.cols);
        for i in 0..self.rows {
            for j in 0..other.cols {
                let mut acc = Poly::zero(self.nvars());
                for k in 0..self.cols {
                    acc = acc.add(&self.entry(i, k).mul(other.entry(k, j)));
                }
                *out.entry_mut(i, j) = acc;
            }
        }
        Ok(out)
    }

    /// Right-multiply by a constant matrix.
    pub fn mul_constant(&self, m: &DMatrix<f64>) -> Result<PolyMatrix, PolyError> {
        self.mul_poly(&PolyMatrix::from_constant(self.nvars(), m))
    }

    pub fn scale(&self, s: f64) -> PolyMatrix {
        PolyMatrix {
            rows: self.rows,
            cols: self.cols,
            entries: self.entries.iter().map(|p| p.scale(s)).collect(),
            symmetric: self.symmetric,
        }
    }

    pub fn add(&self, other: &PolyMatrix) -> Result<PolyMatrix, PolyError> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(PolyError::ShapeMismatch(format!(
                "{}x{} + {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let entries = self
            .entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| a.add(b))
            .collect();
        Ok(PolyMatrix {
            rows: self.rows,
            cols: self.cols,
            entries,
            symmetric: self.symmetric && other.symmetric,
        })
    }

    pub fn embed(&self, total_vars: usize, offset: usize) -> PolyMatrix {
        PolyMatrix {
            rows: self.rows,
            cols: self.cols,
            entries: self
                .entries
                .iter()
                .map(|p| p.embed(total_vars, offset))
                .collect(),
            symmetric: self.symmetric,
        }
    }

    pub fn max_degree(&self) -> u32 {
        self.entries.iter().map(|p| p.degree()).max().unwrap_or(0)
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        if self.rows != self.cols {
            return false;
        }
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                let d = self.entry(i, j).sub(self.entry(j, i));
                if d.terms.values().any(|c| c.abs() > tol) {
                    return false;
                }
            }
        }
        true
    }
}

/// The dictionary factorization `M(x) = L(x) x`.
///
/// Row `i` of the output has a single nonzero entry: entry `i` of the
/// dictionary divided by its lowest-index variable, placed in that
/// variable's column. The division rule makes the (non-unique)
/// factorization deterministic.
pub fn factor_dictionary(dict: &Dictionary) -> Result<PolyMatrix, PolyError> {
    let n = dict.arity;
    let mut out = PolyMatrix::zeros(n, dict.output_dim(), n);
    for (i, m) in dict.entries.iter().enumerate() {
        let j = m.lowest_var().ok_or(PolyError::DegreeZeroEntry { index: i })?;
        *out.entry_mut(i, j) = Poly::monomial(m.div_var(j), 1.0);
    }
    Ok(out)
}

/// Binomial coefficient used by the dictionary size checks.
pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: usize = 1;
    for i in 0..k {
        acc = acc * (n - i) / (i + 1);
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn mono(exps: &[u8]) -> Monomial {
        Monomial::new(exps.to_vec())
    }

    #[test]
    fn eval_direct_power() {
        // x1^2 at (2, 3) -> 4
        let p = Poly::monomial(mono(&[2, 0]), 1.0);
        assert_eq!(p.eval(&[2.0, 3.0]).unwrap(), 4.0);
    }

    #[test]
    fn eval_zero_poly() {
        let p = Poly::zero(2);
        assert_eq!(p.eval(&[10.0, -3.0]).unwrap(), 0.0);
        assert_eq!(p.eval(&[0.0, 0.0]).unwrap(), 0.0);
    }

    #[test]
    fn eval_two_terms() {
        // 0.1*x1 + 0.1*x1^2 at x1 = 1 -> 0.2
        let p = Poly::from_terms(2, [(mono(&[1, 0]), 0.1), (mono(&[2, 0]), 0.1)]);
        assert_relative_eq!(p.eval(&[1.0, 0.0]).unwrap(), 0.2, max_relative = 1e-15);
    }

    #[test]
    fn eval_dimension_mismatch() {
        let p = Poly::var(2, 0);
        assert!(matches!(
            p.eval(&[1.0]),
            Err(PolyError::DimensionMismatch { expected: 2, got: 1 })
        ));
    }

    #[test]
    fn state_dictionary_degree_two_order() {
        let d = build_state_dictionary(2, 2).unwrap();
        let expected = vec![
            mono(&[1, 0]), // x1
            mono(&[0, 1]), // x2
            mono(&[1, 1]), // x1*x2
            mono(&[2, 0]), // x1^2
            mono(&[0, 2]), // x2^2
        ];
        assert_eq!(d.entries, expected);
        assert_eq!(d.output_dim(), binomial(2 + 2, 2) - 1);
    }

    #[test]
    fn state_dictionary_single_var() {
        let d = build_state_dictionary(1, 1).unwrap();
        assert_eq!(d.entries, vec![mono(&[1])]);
    }

    #[test]
    fn state_dictionary_degree_three_count() {
        let d = build_state_dictionary(2, 3).unwrap();
        assert_eq!(d.output_dim(), 9);
        assert!(d.entries.contains(&mono(&[3, 0])));
    }

    #[test]
    fn state_dictionary_degree_zero_rejected() {
        assert!(build_state_dictionary(2, 0).is_err());
    }

    #[test]
    fn factor_simple_dictionary() {
        // M = [x1; x2; x1^2] -> L = [[1,0],[0,1],[x1,0]]
        let d = Dictionary::new(2, vec![mono(&[1, 0]), mono(&[0, 1]), mono(&[2, 0])]);
        let l = factor_dictionary(&d).unwrap();
        assert_eq!(l.entry(0, 0), &Poly::constant(2, 1.0));
        assert!(l.entry(0, 1).is_zero());
        assert_eq!(l.entry(1, 1), &Poly::constant(2, 1.0));
        assert_eq!(l.entry(2, 0), &Poly::var(2, 0));
        assert!(l.entry(2, 1).is_zero());
    }

    #[test]
    fn factor_cross_term_uses_lowest_index() {
        // M = [x1*x2] -> L = [[x2, 0]]
        let d = Dictionary::new(2, vec![mono(&[1, 1])]);
        let l = factor_dictionary(&d).unwrap();
        assert_eq!(l.entry(0, 0), &Poly::var(2, 1));
        assert!(l.entry(0, 1).is_zero());
    }

    #[test]
    fn factor_rejects_constant_entry() {
        let d = Dictionary::new(2, vec![mono(&[0, 0])]);
        assert!(matches!(
            factor_dictionary(&d),
            Err(PolyError::DegreeZeroEntry { index: 0 })
        ));
    }

    #[test]
    fn factorization_identity_random_points() {
        // ||M(x) - L(x) x|| <= 1e-12 over random points in [-5, 5]^2
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        let d = build_state_dictionary(2, 3).unwrap();
        let l = factor_dictionary(&d).unwrap();
        for _ in 0..200 {
            let x = [rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)];
            let m_val = d.eval(&x).unwrap();
            let l_val = l.eval(&x).unwrap();
            let xv = nalgebra::DVector::from_column_slice(&x);
            let lx = l_val * xv;
            for (a, b) in m_val.iter().zip(lx.iter()) {
                let scale = a.abs().max(1.0);
                assert!((a - b).abs() <= 1e-12 * scale, "{} vs {}", a, b);
            }
        }
    }

    #[test]
    fn gram_basis_one_var() {
        // n = 1 in delayed coordinates means two variables (x1, xh1)
        let g = gram_basis(2, 1);
        assert_eq!(g.entries, vec![mono(&[0, 0]), mono(&[1, 0]), mono(&[0, 1])]);
    }

    #[test]
    fn gram_basis_constants_only() {
        let g = gram_basis(4, 0);
        assert_eq!(g.entries, vec![mono(&[0, 0, 0, 0])]);
    }

    #[test]
    fn gram_basis_count() {
        let g = gram_basis(4, 2);
        assert_eq!(g.output_dim(), 15);
        assert_eq!(g.output_dim(), binomial(4 + 2, 2));
    }

    #[test]
    fn poly_matrix_eval_examples() {
        let d = Dictionary::new(2, vec![mono(&[1, 0]), mono(&[0, 1]), mono(&[2, 0])]);
        let l = factor_dictionary(&d).unwrap();
        let at = l.eval(&[2.0, 3.0]).unwrap();
        let expected = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 2.0, 0.0]);
        assert_eq!(at, expected);

        // L(x) * x at (2,3) reproduces the dictionary value (2, 3, 4)
        let lx = at * nalgebra::DVector::from_column_slice(&[2.0, 3.0]);
        assert_eq!(lx.as_slice(), &[2.0, 3.0, 4.0]);

        let z = PolyMatrix::zeros(2, 2, 2);
        assert_eq!(z.eval(&[7.0, -1.0]).unwrap(), DMatrix::zeros(2, 2));
    }

    #[test]
    fn add_negate_cancels() {
        let p = Poly::from_terms(3, [(mono(&[1, 0, 2]), 0.5), (mono(&[0, 1, 0]), -2.0)]);
        assert!(p.add(&p.scale(-1.0)).is_zero());
    }

    #[test]
    fn embed_shifts_variables() {
        let p = Poly::from_terms(2, [(mono(&[1, 1]), 3.0)]);
        let q = p.embed(4, 2);
        assert_eq!(q.coeff(&mono(&[0, 0, 1, 1])), 3.0);
        assert_eq!(
            p.eval(&[2.0, 5.0]).unwrap(),
            q.eval(&[9.0, 9.0, 2.0, 5.0]).unwrap()
        );
    }

    #[test]
    fn pairs_roundtrip_exact() {
        let p = Poly::from_terms(
            4,
            [
                (mono(&[1, 0, 2, 0]), 0.1 + 0.2), // not exactly 0.3
                (mono(&[0, 0, 0, 1]), -1.0 / 3.0),
            ],
        );
        let q = Poly::from_pairs(4, &p.to_pairs());
        assert_eq!(p, q);
    }

    #[test]
    fn mul_matches_eval() {
        let p = Poly::from_terms(2, [(mono(&[1, 0]), 2.0), (mono(&[0, 1]), -1.0)]);
        let q = Poly::from_terms(2, [(mono(&[1, 1]), 1.5), (mono(&[0, 0]), 0.5)]);
        let r = p.mul(&q);
        let pt = [1.3, -0.7];
        assert_relative_eq!(
            r.eval(&pt).unwrap(),
            p.eval(&pt).unwrap() * q.eval(&pt).unwrap(),
            max_relative = 1e-14
        );
    }
}
