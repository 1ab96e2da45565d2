//! Ground-truth model of the delayed input-affine polynomial plant,
//! trajectory simulation with delay buffers, and the built-in case
//! studies.
//!
//! The plant is
//!
//! ```text
//! x(k+1) = A1 M(x(k)) + A2 M(x(k-h)) + B G(x(k), x(k-h)) u(k) + w(k)
//! ```
//!
//! with `M` a state dictionary (vanishing at the origin), `G` a matrix of
//! monomials in the current and delayed state, and `||w||^2 <= delta`.
//! This module is used for data generation and verification only; the
//! synthesizer never reads `A1`, `A2`, `B`.

use crate::poly::{factor_dictionary, Dictionary, Monomial, Poly, PolyError, PolyMatrix};
use crate::region::Region;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SystemError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("state diverged (non-finite) at step {step}")]
    Divergence { step: usize },
    #[error("unknown case study `{0}`")]
    UnknownCase(String),
    #[error(transparent)]
    Poly(#[from] PolyError),
}

/// State history (x(k), x(k-1), ..., x(k-h)).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub states: Vec<Vec<f64>>,
}

impl History {
    pub fn new(states: Vec<Vec<f64>>) -> Self {
        History { states }
    }

    pub fn constant(x: Vec<f64>, h: usize) -> Self {
        History { states: vec![x; h + 1] }
    }

    pub fn zeros(n: usize, h: usize) -> Self {
        History::constant(vec![0.0; n], h)
    }

    pub fn delay(&self) -> usize {
        self.states.len() - 1
    }

    pub fn current(&self) -> &[f64] {
        &self.states[0]
    }

    pub fn oldest(&self) -> &[f64] {
        &self.states[self.states.len() - 1]
    }

    /// Successor buffer: prepend the new state, drop only the oldest entry.
    pub fn roll(&self, next: Vec<f64>) -> History {
        let mut states = Vec::with_capacity(self.states.len());
        states.push(next);
        states.extend(self.states[..self.states.len() - 1].iter().cloned());
        History { states }
    }
}

/// State-feedback contract (x, x_h) -> u.
pub trait Controller {
    fn control(&self, x: &[f64], xh: &[f64]) -> DVector<f64>;
    fn input_dim(&self) -> usize;
}

/// Open-loop zero input.
pub struct ZeroController {
    pub m: usize,
}

impl Controller for ZeroController {
    fn control(&self, _x: &[f64], _xh: &[f64]) -> DVector<f64> {
        DVector::zeros(self.m)
    }
    fn input_dim(&self) -> usize {
        self.m
    }
}

/// Polynomial state feedback u = F1(x,xh) x + F2(x,xh) xh.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PolyFeedback {
    /// m x n polynomial matrices over the 2n concatenated variables.
    pub f1: PolyMatrix,
    pub f2: PolyMatrix,
}

impl PolyFeedback {
    pub fn eval(&self, x: &[f64], xh: &[f64]) -> DVector<f64> {
        let mut point = Vec::with_capacity(x.len() + xh.len());
        point.extend_from_slice(x);
        point.extend_from_slice(xh);
        let f1 = self.f1.eval(&point).expect("feedback dimension");
        let f2 = self.f2.eval(&point).expect("feedback dimension");
        f1 * DVector::from_column_slice(x) + f2 * DVector::from_column_slice(xh)
    }
}

impl Controller for PolyFeedback {
    fn control(&self, x: &[f64], xh: &[f64]) -> DVector<f64> {
        self.eval(x, xh)
    }
    fn input_dim(&self) -> usize {
        self.f1.rows
    }
}

/// Ground-truth plant. `m_dict` is the declared dictionary (the prior the
/// synthesizer works with); `a1`, `a2` are expressed over it, zero-padded
/// where the true dynamics do not use an entry.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DelayedSystem {
    pub name: String,
    pub a1: DMatrix<f64>,
    pub a2: DMatrix<f64>,
    pub b: DMatrix<f64>,
    /// Declared state dictionary (arity n, output dim M).
    pub m_dict: Dictionary,
    /// Declared input dictionary, an N x m polynomial matrix over (x, xh).
    pub g_matrix: PolyMatrix,
    pub h: usize,
    pub delta: f64,
    pub state_region: Region,
    pub initial_region: Region,
    pub unsafe_region: Region,
}

impl DelayedSystem {
    pub fn n(&self) -> usize {
        self.a1.nrows()
    }

    /// Dictionary output dimension M.
    pub fn dict_dim(&self) -> usize {
        self.m_dict.output_dim()
    }

    /// Input-dictionary row count N.
    pub fn g_rows(&self) -> usize {
        self.g_matrix.rows
    }

    /// Input dimension m.
    pub fn input_dim(&self) -> usize {
        self.g_matrix.cols
    }

    pub fn validate(&self) -> Result<(), SystemError> {
        let n = self.n();
        let m_dim = self.dict_dim();
        if self.a1.ncols() != m_dim || self.a2.nrows() != n || self.a2.ncols() != m_dim {
            return Err(SystemError::Dimension("A1/A2 vs dictionary".into()));
        }
        if self.b.nrows() != n || self.b.ncols() != self.g_rows() {
            return Err(SystemError::Dimension("B vs G rows".into()));
        }
        if self.m_dict.arity != n || self.g_matrix.nvars() != 2 * n {
            return Err(SystemError::Dimension("dictionary arity".into()));
        }
        if self.h == 0 || self.delta < 0.0 {
            return Err(SystemError::Dimension("h >= 1 and delta >= 0 required".into()));
        }
        if self.m_dict.entries.iter().any(|e| e.degree() == 0) {
            return Err(SystemError::Dimension("state dictionary must vanish at 0".into()));
        }
        if !self.initial_region.is_disjoint(&self.unsafe_region) {
            return Err(SystemError::Dimension("Xa and Xb must be disjoint".into()));
        }
        if !self.state_region.contains_region(&self.initial_region)
            || !self.state_region.contains_region(&self.unsafe_region)
        {
            return Err(SystemError::Dimension("Xa and Xb must lie inside X".into()));
        }
        Ok(())
    }

    /// One step of the plant from the given history.
    pub fn step(
        &self,
        hist: &History,
        u: &DVector<f64>,
        w: &DVector<f64>,
    ) -> Result<DVector<f64>, SystemError> {
        let n = self.n();
        if hist.delay() != self.h || hist.current().len() != n {
            return Err(SystemError::Dimension("history shape".into()));
        }
        if u.len() != self.input_dim() || w.len() != n {
            return Err(SystemError::Dimension("input/disturbance shape".into()));
        }
        if w.norm_squared() > self.delta * (1.0 + 1e-9) + 1e-300 {
            log::warn!(
                "disturbance norm^2 {:.3e} exceeds bound delta = {:.3e}",
                w.norm_squared(),
                self.delta
            );
        }
        let x = hist.current();
        let xh = hist.oldest();
        let mx = DVector::from_vec(self.m_dict.eval(x)?);
        let mxh = DVector::from_vec(self.m_dict.eval(xh)?);
        let mut point = Vec::with_capacity(2 * n);
        point.extend_from_slice(x);
        point.extend_from_slice(xh);
        let g = self.g_matrix.eval(&point)?;
        Ok(&self.a1 * mx + &self.a2 * mxh + &self.b * g * u + w)
    }

    /// Transformation matrix L(x) with M(x) = L(x) x, over the 2n-variable
    /// space at `offset` (0 for the current state, n for the delayed one).
    pub fn factor(&self, offset: usize) -> Result<PolyMatrix, SystemError> {
        Ok(factor_dictionary(&self.m_dict)?.embed(2 * self.n(), offset))
    }

    /// С1 = [A1 B] pairing with the current-state lift.
    pub fn c1(&self) -> DMatrix<f64> {
        hcat(&self.a1, &self.b)
    }

    /// С2 = [A2 B] pairing with the delayed-state lift.
    pub fn c2(&self) -> DMatrix<f64> {
        hcat(&self.a2, &self.b)
    }
}

pub fn hcat(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    assert_eq!(a.nrows(), b.nrows());
    let mut out = DMatrix::zeros(a.nrows(), a.ncols() + b.ncols());
    out.view_mut((0, 0), (a.nrows(), a.ncols())).copy_from(a);
    out.view_mut((0, a.ncols()), (b.nrows(), b.ncols())).copy_from(b);
    out
}

/// Disturbance sampling mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DisturbanceMode {
    /// No disturbance.
    Zero,
    /// Uniform on the closed ball ||w||^2 <= delta.
    UniformBall,
    /// Radius exactly sqrt(delta), random direction (stress mode).
    BoundarySphere,
}

/// Draw one standard normal via Box-Muller (keeps the stream independent
/// of external crate internals).
fn std_normal(rng: &mut impl Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Sample w with ||w||^2 <= delta: uniform direction on the sphere, radius
/// sqrt(delta) * U^(1/n) for the uniform-ball mode.
pub fn sample_disturbance(
    n: usize,
    delta: f64,
    mode: DisturbanceMode,
    rng: &mut impl Rng,
) -> DVector<f64> {
    if delta == 0.0 || mode == DisturbanceMode::Zero {
        return DVector::zeros(n);
    }
    let mut dir = DVector::from_fn(n, |_, _| std_normal(rng));
    let norm = dir.norm();
    if norm == 0.0 {
        return DVector::zeros(n);
    }
    dir /= norm;
    let radius = match mode {
        DisturbanceMode::UniformBall => {
            let u: f64 = rng.gen_range(0.0..1.0);
            delta.sqrt() * u.powf(1.0 / n as f64)
        }
        DisturbanceMode::BoundarySphere => delta.sqrt(),
        DisturbanceMode::Zero => unreachable!(),
    };
    dir * radius
}

/// Input source for a simulation run.
pub enum InputPolicy<'a> {
    Zero,
    /// Pre-recorded open-loop inputs, one per step.
    OpenLoop(&'a [DVector<f64>]),
    Feedback(&'a dyn Controller),
}

pub enum DisturbancePolicy<'a> {
    Sampled(DisturbanceMode),
    Fixed(&'a [DVector<f64>]),
}

/// Full record of a simulation: states x(-h..=K), inputs and disturbances
/// for steps 0..K-1.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trajectory {
    pub h: usize,
    pub states: Vec<Vec<f64>>,
    pub inputs: Vec<Vec<f64>>,
    pub disturbances: Vec<Vec<f64>>,
}

impl Trajectory {
    /// State x(k) for k in -h ..= steps.
    pub fn state(&self, k: isize) -> &[f64] {
        &self.states[(k + self.h as isize) as usize]
    }

    pub fn steps(&self) -> usize {
        self.states.len() - self.h - 1
    }

    /// History buffer at time k >= 0.
    pub fn history_at(&self, k: usize) -> History {
        let states = (0..=self.h)
            .map(|i| self.state(k as isize - i as isize).to_vec())
            .collect();
        History::new(states)
    }
}

/// Iterate the plant for `steps` steps from `init`.
pub fn simulate(
    sys: &DelayedSystem,
    init: &History,
    inputs: InputPolicy,
    disturbances: DisturbancePolicy,
    steps: usize,
    rng: &mut impl Rng,
) -> Result<Trajectory, SystemError> {
    let n = sys.n();
    if init.delay() != sys.h {
        return Err(SystemError::Dimension("initial history length".into()));
    }
    for s in &init.states {
        if !sys.state_region.contains(s) {
            log::warn!("initial history state {:?} lies outside the state region", s);
            break;
        }
    }
    let mut states: Vec<Vec<f64>> = (0..=sys.h)
        .rev()
        .map(|i| init.states[i].clone())
        .collect();
    let mut us = Vec::with_capacity(steps);
    let mut ws = Vec::with_capacity(steps);
    let mut hist = init.clone();
    for k in 0..steps {
        let x = hist.current().to_vec();
        let xh = hist.oldest().to_vec();
        let u = match &inputs {
            InputPolicy::Zero => DVector::zeros(sys.input_dim()),
            InputPolicy::OpenLoop(list) => list[k].clone(),
            InputPolicy::Feedback(c) => c.control(&x, &xh),
        };
        let w = match &disturbances {
            DisturbancePolicy::Sampled(mode) => sample_disturbance(n, sys.delta, *mode, rng),
            DisturbancePolicy::Fixed(list) => list[k].clone(),
        };
        let next = sys.step(&hist, &u, &w)?;
        if next.iter().any(|v| !v.is_finite()) {
            return Err(SystemError::Divergence { step: k });
        }
        if !sys.state_region.contains(next.as_slice()) {
            log::warn!("state left the state region at step {}", k);
        }
        states.push(next.as_slice().to_vec());
        us.push(u.as_slice().to_vec());
        ws.push(w.as_slice().to_vec());
        hist = hist.roll(next.as_slice().to_vec());
    }
    Ok(Trajectory { h: sys.h, states, inputs: us, disturbances: ws })
}

/// Built-in case studies. The spacecraft takes its principal moments of
/// inertia as a parameter (they are configuration, not part of the model
/// class).
pub fn case_study(name: &str) -> Result<DelayedSystem, SystemError> {
    case_study_with(name, &[1.0, 1.0, 1.0])
}

pub fn case_study_with(name: &str, sigma: &[f64]) -> Result<DelayedSystem, SystemError> {
    let sys = match name {
        "academic" => academic_system(),
        "jet" => jet_system(),
        "spacecraft" => spacecraft_system(sigma),
        other => return Err(SystemError::UnknownCase(other.to_string())),
    };
    sys.validate()?;
    Ok(sys)
}

fn academic_system() -> DelayedSystem {
    // Declared dictionary: all state monomials up to degree 2.
    let m_dict = crate::poly::build_state_dictionary(2, 2).unwrap();
    // [x1, x2, x1*x2, x1^2, x2^2]
    let a1 = DMatrix::from_row_slice(2, 5, &[
        1.0, 0.1, 0.0, 0.0, 0.0, //
        0.1, 1.0, 0.0, 0.1, 0.0,
    ]);
    let a2 = DMatrix::from_row_slice(2, 5, &[
        0.05, 0.0, 0.0, 0.06, 0.0, //
        0.02, 0.01, 0.0, 0.04, 0.0,
    ]);
    // Declared G = [1; x1 * xh1]: the true input channel only uses the
    // constant row, so B is padded with a zero column.
    let b = DMatrix::from_row_slice(2, 2, &[0.1, 0.0, 0.1, 0.0]);
    let mut g = PolyMatrix::zeros(4, 2, 1);
    *g.entry_mut(0, 0) = Poly::constant(4, 1.0);
    *g.entry_mut(1, 0) = Poly::monomial(Monomial::new(vec![1, 0, 1, 0]), 1.0);
    DelayedSystem {
        name: "academic".into(),
        a1,
        a2,
        b,
        m_dict,
        g_matrix: g,
        h: 3,
        delta: 1.8e-3,
        state_region: Region::single(vec![-5.0, -5.0], vec![5.0, 5.0]).unwrap(),
        initial_region: Region::single(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap(),
        unsafe_region: Region::union(vec![
            crate::region::BoxRegion::new(vec![3.0, 3.0], vec![5.0, 5.0]).unwrap(),
            crate::region::BoxRegion::new(vec![-5.0, -5.0], vec![-3.0, -3.0]).unwrap(),
        ]),
    }
}

fn jet_system() -> DelayedSystem {
    // Declared dictionary (prior): [x1, x2, x1*x2, x1^2, x2^2, x1^3].
    let m_dict = Dictionary::new(2, vec![
        Monomial::new(vec![1, 0]),
        Monomial::new(vec![0, 1]),
        Monomial::new(vec![1, 1]),
        Monomial::new(vec![2, 0]),
        Monomial::new(vec![0, 2]),
        Monomial::new(vec![3, 0]),
    ]);
    let a1 = DMatrix::from_row_slice(2, 6, &[
        1.0, 0.0, 0.0, 0.0, 0.0, -0.05, //
        0.0, 1.0, 0.0, 0.0, 0.0, 0.0,
    ]);
    let a2 = DMatrix::from_row_slice(2, 6, &[
        0.0, -0.1, 0.0, -0.15, 0.0, 0.0, //
        0.1, 0.0, 0.0, 0.0, 0.0, 0.0,
    ]);
    let b = DMatrix::from_row_slice(2, 1, &[0.0, 0.1]);
    let g = PolyMatrix::identity(4, 1);
    DelayedSystem {
        name: "jet".into(),
        a1,
        a2,
        b,
        m_dict,
        g_matrix: g,
        h: 4,
        delta: 8e-4,
        state_region: Region::single(vec![-10.0, -10.0], vec![10.0, 10.0]).unwrap(),
        initial_region: Region::single(vec![-2.0, -2.0], vec![2.0, 2.0]).unwrap(),
        unsafe_region: Region::union(vec![
            crate::region::BoxRegion::new(vec![5.0, 5.0], vec![10.0, 10.0]).unwrap(),
            crate::region::BoxRegion::new(vec![-10.0, -10.0], vec![-5.0, -5.0]).unwrap(),
        ]),
    }
}

fn spacecraft_system(sigma: &[f64]) -> DelayedSystem {
    assert_eq!(sigma.len(), 3, "spacecraft needs three inertia values");
    let (s1, s2, s3) = (sigma[0], sigma[1], sigma[2]);
    // Declared dictionary: [x1, x2, x3, x2*x3, x1*x3, x1*x2, x2^2].
    let m_dict = Dictionary::new(3, vec![
        Monomial::new(vec![1, 0, 0]),
        Monomial::new(vec![0, 1, 0]),
        Monomial::new(vec![0, 0, 1]),
        Monomial::new(vec![0, 1, 1]),
        Monomial::new(vec![1, 0, 1]),
        Monomial::new(vec![1, 1, 0]),
        Monomial::new(vec![0, 2, 0]),
    ]);
    let mut a1 = DMatrix::zeros(3, 7);
    a1[(0, 0)] = 1.0;
    a1[(1, 1)] = 1.0;
    a1[(2, 2)] = 1.0;
    a1[(0, 3)] = (s2 - s3) / s1; // x2*x3 in the first row
    let mut a2 = DMatrix::zeros(3, 7);
    a2[(1, 4)] = (s3 - s1) / s2; // delayed x1*x3 in the second row
    a2[(2, 5)] = (s1 - s2) / s3; // delayed x1*x2 in the third row
    let b = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0 / s1, 1.0 / s2, 1.0 / s3]));
    let g = PolyMatrix::identity(6, 3);
    DelayedSystem {
        name: "spacecraft".into(),
        a1,
        a2,
        b,
        m_dict,
        g_matrix: g,
        h: 3,
        delta: 1.2e-3,
        state_region: Region::single(vec![-10.0; 3], vec![10.0; 3]).unwrap(),
        initial_region: Region::single(vec![-2.0; 3], vec![2.0; 3]).unwrap(),
        unsafe_region: Region::union(vec![
            crate::region::BoxRegion::new(vec![5.0; 3], vec![10.0; 3]).unwrap(),
            crate::region::BoxRegion::new(vec![-10.0; 3], vec![-5.0; 3]).unwrap(),
        ]),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::build_state_dictionary;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn academic_step_from_zero() {
        let sys = case_study("academic").unwrap();
        let hist = History::zeros(2, 3);
        let next = sys
            .step(&hist, &DVector::zeros(1), &DVector::zeros(2))
            .unwrap();
        assert_eq!(next.as_slice(), &[0.0, 0.0]);
    }

    #[test]
    fn academic_step_current_state_only() {
        let sys = case_study("academic").unwrap();
        let mut states = vec![vec![0.0, 0.0]; 4];
        states[0] = vec![1.0, 0.0];
        let hist = History::new(states);
        let next = sys
            .step(&hist, &DVector::zeros(1), &DVector::zeros(2))
            .unwrap();
        assert_relative_eq!(next[0], 1.0, epsilon = 1e-15);
        assert_relative_eq!(next[1], 0.2, epsilon = 1e-15);
    }

    #[test]
    fn academic_step_delayed_state_only() {
        let sys = case_study("academic").unwrap();
        let mut states = vec![vec![0.0, 0.0]; 4];
        states[3] = vec![1.0, 0.0];
        let hist = History::new(states);
        let next = sys
            .step(&hist, &DVector::zeros(1), &DVector::zeros(2))
            .unwrap();
        assert_relative_eq!(next[0], 0.11, epsilon = 1e-15);
        assert_relative_eq!(next[1], 0.06, epsilon = 1e-15);
    }

    #[test]
    fn case_study_parameters() {
        let a = case_study("academic").unwrap();
        assert_eq!((a.h, a.dict_dim(), a.g_rows(), a.input_dim()), (3, 5, 2, 1));
        assert_relative_eq!(a.delta, 1.8e-3);
        let j = case_study("jet").unwrap();
        assert_eq!((j.h, j.dict_dim(), j.g_rows(), j.input_dim()), (4, 6, 1, 1));
        assert_relative_eq!(j.delta, 8e-4);
        let s = case_study("spacecraft").unwrap();
        assert_eq!((s.h, s.n(), s.dict_dim(), s.g_rows(), s.input_dim()), (3, 3, 7, 3, 3));
        assert_relative_eq!(s.delta, 1.2e-3);
        assert!(case_study("rocket").is_err());
    }

    #[test]
    fn zero_trajectory_stays_zero() {
        let sys = case_study("academic").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let traj = simulate(
            &sys,
            &History::zeros(2, 3),
            InputPolicy::Zero,
            DisturbancePolicy::Sampled(DisturbanceMode::Zero),
            20,
            &mut rng,
        )
        .unwrap();
        assert!(traj.states.iter().all(|s| s.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn simulate_first_step_matches_step() {
        let sys = case_study("academic").unwrap();
        let init = History::constant(vec![1.0, 1.0], 3);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let traj = simulate(
            &sys,
            &init,
            InputPolicy::Zero,
            DisturbancePolicy::Sampled(DisturbanceMode::Zero),
            1,
            &mut rng,
        )
        .unwrap();
        let direct = sys
            .step(&init, &DVector::zeros(1), &DVector::zeros(2))
            .unwrap();
        assert_eq!(traj.state(1), direct.as_slice());
    }

    #[test]
    fn history_roll_drops_only_oldest() {
        let h = History::new(vec![vec![3.0], vec![2.0], vec![1.0]]);
        let r = h.roll(vec![4.0]);
        assert_eq!(r.states, vec![vec![4.0], vec![3.0], vec![2.0]]);
    }

    #[test]
    fn disturbance_bound_and_moment() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        assert_eq!(
            sample_disturbance(2, 0.0, DisturbanceMode::UniformBall, &mut rng),
            DVector::zeros(2)
        );
        let delta = 1.8e-3;
        for _ in 0..2000 {
            let w = sample_disturbance(2, delta, DisturbanceMode::UniformBall, &mut rng);
            assert!(w.norm_squared() <= delta * (1.0 + 1e-12));
        }
        // E[||w||^2] = delta * n / (n + 2) for the uniform ball
        let n_draws = 100_000;
        let mean = (0..n_draws)
            .map(|_| sample_disturbance(2, 1.0, DisturbanceMode::UniformBall, &mut rng).norm_squared())
            .sum::<f64>()
            / n_draws as f64;
        assert!((mean - 0.5).abs() < 0.01, "mean {}", mean);
        // boundary mode pins the radius
        let w = sample_disturbance(3, 0.04, DisturbanceMode::BoundarySphere, &mut rng);
        assert_relative_eq!(w.norm(), 0.2, epsilon = 1e-12);
    }

    /// Closed-loop parameterization: with u = F1 x + F2 xh,
    /// step() == C1 R1(x,xh) x + C2 R2(x,xh) xh + w.
    #[test]
    fn lemma_parameterization_equivalence() {
        use rand::Rng;
        let sys = case_study("academic").unwrap();
        let n = sys.n();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        // random degree-1 polynomial feedback
        let basis = crate::poly::gram_basis(2 * n, 1);
        let mut mk_f = |rng: &mut ChaCha8Rng| {
            let mut f = PolyMatrix::zeros(2 * n, 1, n);
            for c in 0..n {
                let poly = Poly::from_terms(
                    2 * n,
                    basis
                        .entries
                        .iter()
                        .map(|m| (m.clone(), rng.gen_range(-1.0..1.0))),
                );
                *f.entry_mut(0, c) = poly;
            }
            f
        };
        let f1 = mk_f(&mut rng);
        let f2 = mk_f(&mut rng);
        let l_x = sys.factor(0).unwrap();
        let l_xh = sys.factor(n).unwrap();
        let g = &sys.g_matrix;
        let c1 = sys.c1();
        let c2 = sys.c2();

        for _ in 0..1000 {
            let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let xh: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let w = sample_disturbance(n, sys.delta, DisturbanceMode::UniformBall, &mut rng);
            let mut point = x.clone();
            point.extend_from_slice(&xh);

            let fb = PolyFeedback { f1: f1.clone(), f2: f2.clone() };
            let u = fb.eval(&x, &xh);

            let mut states = vec![x.clone()];
            states.extend(vec![vec![0.0; n]; sys.h - 1]);
            states.push(xh.clone());
            let hist = History::new(states);
            let direct = sys.step(&hist, &u, &w).unwrap();

            // R1 = [L(x); G F1], R2 = [L(xh); G F2]
            let gf1 = g.mul_poly(&f1).unwrap();
            let gf2 = g.mul_poly(&f2).unwrap();
            let r1_top = l_x.eval(&point).unwrap();
            let r1_bot = gf1.eval(&point).unwrap();
            let r2_top = l_xh.eval(&point).unwrap();
            let r2_bot = gf2.eval(&point).unwrap();
            let r1 = stack_rows(&r1_top, &r1_bot);
            let r2 = stack_rows(&r2_top, &r2_bot);
            let xv = DVector::from_column_slice(&x);
            let xhv = DVector::from_column_slice(&xh);
            let param = &c1 * r1 * xv + &c2 * r2 * xhv + &w;
            for i in 0..n {
                assert!(
                    (direct[i] - param[i]).abs() <= 1e-10,
                    "row {}: {} vs {}",
                    i,
                    direct[i],
                    param[i]
                );
            }
        }
    }

    fn stack_rows(top: &DMatrix<f64>, bot: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(top.nrows() + bot.nrows(), top.ncols());
        out.view_mut((0, 0), (top.nrows(), top.ncols())).copy_from(top);
        out.view_mut((top.nrows(), 0), (bot.nrows(), bot.ncols())).copy_from(bot);
        out
    }

    #[test]
    fn declared_dictionaries_match_generated_where_applicable() {
        let sys = case_study("academic").unwrap();
        assert_eq!(sys.m_dict, build_state_dictionary(2, 2).unwrap());
    }
}
