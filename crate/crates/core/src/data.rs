//! Data objects built from a single collected trajectory: the raw
//! input/state matrices, the dictionary-lifted matrices, and the quadratic
//! data-consistency matrix that encodes every system explaining the
//! observations under the disturbance bound.
//!
//! Column conventions (T samples, delay h):
//!
//! ```text
//! U- = [u(0) .. u(T-1)]        X- = [x(0) .. x(T-1)]
//! X+ = [x(1) .. x(T)]          Xh = [x(-h) .. x(-h+T-1)]
//! M- = M(X-) columnwise        Mh = M(Xh) columnwise
//! G  = [G(x(k), x(k-h)) u(k)]  Xi1 = [M-; G/2]   Xi2 = [Mh; G/2]
//! ```
//!
//! The halving of `G` keeps the identity `X+ = C1 Xi1 + C2 Xi2 + W-` with
//! `C1 = [A1 B]`, `C2 = [A2 B]`.

use crate::poly::{Dictionary, PolyMatrix};
use crate::system::{DelayedSystem, DisturbanceMode, History, SystemError};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("need at least one sample (T >= 1)")]
    EmptyHorizon,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error(transparent)]
    System(#[from] SystemError),
    #[error(transparent)]
    Poly(#[from] crate::poly::PolyError),
    #[error("csv: {0}")]
    Csv(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Raw collected matrices. `w_minus` is retained only when the simulator
/// produced the data; it feeds test oracles and is never passed to
/// synthesis.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Dataset {
    pub u_minus: DMatrix<f64>,
    pub x_minus: DMatrix<f64>,
    pub x_plus: DMatrix<f64>,
    pub x_h: DMatrix<f64>,
    pub w_minus: Option<DMatrix<f64>>,
    pub samples: usize,
    pub h: usize,
    pub delta: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LiftedData {
    pub m_minus: DMatrix<f64>,
    pub m_h: DMatrix<f64>,
    pub g: DMatrix<f64>,
    pub xi1: DMatrix<f64>,
    pub xi2: DMatrix<f64>,
}

/// Symmetric data-consistency matrix of dimension q = n + 2(M + N).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConsistencyMatrix {
    pub s: DMatrix<f64>,
    pub q: usize,
    pub n: usize,
    /// M + N: width of each lifted block.
    pub phi: usize,
}

/// Excitation policy for data collection: i.i.d. uniform inputs over a box.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Excitation {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Excitation {
    pub fn unit_box(m: usize) -> Self {
        Excitation { lower: vec![-1.0; m], upper: vec![1.0; m] }
    }

    fn sample(&self, rng: &mut impl Rng) -> DVector<f64> {
        DVector::from_iterator(
            self.lower.len(),
            self.lower
                .iter()
                .zip(&self.upper)
                .map(|(&l, &u)| if l == u { l } else { rng.gen_range(l..u) }),
        )
    }
}

/// Collect an experiment of `samples` steps from `init`.
///
/// The shift structure is taken directly from the simulated trajectory:
/// `X-` starts at x(0), `X+` one step later, `Xh` h steps earlier.
pub fn collect(
    sys: &DelayedSystem,
    init: &History,
    excitation: &Excitation,
    disturbance_mode: DisturbanceMode,
    samples: usize,
    rng: &mut impl Rng,
) -> Result<Dataset, DataError> {
    if samples == 0 {
        return Err(DataError::EmptyHorizon);
    }
    let n = sys.n();
    for s in &init.states {
        if !sys.initial_region.contains(s) {
            log::warn!("data collection starts outside the initial region (state {:?})", s);
            break;
        }
    }
    let inputs: Vec<DVector<f64>> = (0..samples).map(|_| excitation.sample(rng)).collect();
    let traj = crate::system::simulate(
        sys,
        init,
        crate::system::InputPolicy::OpenLoop(&inputs),
        crate::system::DisturbancePolicy::Sampled(disturbance_mode),
        samples,
        rng,
    )?;
    for k in 0..=samples as isize {
        if !sys.state_region.contains(traj.state(k)) {
            log::warn!("collected state x({}) left the state region", k);
        }
    }
    let col = |k: isize| DVector::from_column_slice(traj.state(k));
    let x_minus = DMatrix::from_columns(&(0..samples).map(|k| col(k as isize)).collect::<Vec<_>>());
    let x_plus =
        DMatrix::from_columns(&(1..=samples).map(|k| col(k as isize)).collect::<Vec<_>>());
    let x_h = DMatrix::from_columns(
        &(0..samples)
            .map(|k| col(k as isize - sys.h as isize))
            .collect::<Vec<_>>(),
    );
    let u_minus = DMatrix::from_columns(
        &traj.inputs.iter().map(|u| DVector::from_column_slice(u)).collect::<Vec<_>>(),
    );
    let w_minus = DMatrix::from_columns(
        &traj
            .disturbances
            .iter()
            .map(|w| DVector::from_column_slice(w))
            .collect::<Vec<_>>(),
    );
    debug_assert_eq!(x_minus.nrows(), n);
    Ok(Dataset {
        u_minus,
        x_minus,
        x_plus,
        x_h,
        w_minus: Some(w_minus),
        samples,
        h: sys.h,
        delta: sys.delta,
    })
}

/// Lift the dataset through the declared dictionaries.
pub fn lift(
    ds: &Dataset,
    m_dict: &Dictionary,
    g_matrix: &PolyMatrix,
) -> Result<LiftedData, DataError> {
    let n = ds.x_minus.nrows();
    if m_dict.arity != n {
        return Err(DataError::Dimension(format!(
            "dictionary arity {} vs state dim {}",
            m_dict.arity, n
        )));
    }
    if g_matrix.nvars() != 2 * n {
        return Err(DataError::Dimension("input dictionary variable count".into()));
    }
    if g_matrix.cols != ds.u_minus.nrows() {
        return Err(DataError::Dimension(format!(
            "input dictionary has {} columns but inputs have dimension {}",
            g_matrix.cols,
            ds.u_minus.nrows()
        )));
    }
    let t = ds.samples;
    let m_dim = m_dict.output_dim();
    let n_dim = g_matrix.rows;
    let mut m_minus = DMatrix::zeros(m_dim, t);
    let mut m_h = DMatrix::zeros(m_dim, t);
    let mut g = DMatrix::zeros(n_dim, t);
    for j in 0..t {
        let x: Vec<f64> = ds.x_minus.column(j).iter().copied().collect();
        let xh: Vec<f64> = ds.x_h.column(j).iter().copied().collect();
        let mx = m_dict.eval(&x)?;
        let mxh = m_dict.eval(&xh)?;
        for i in 0..m_dim {
            m_minus[(i, j)] = mx[i];
            m_h[(i, j)] = mxh[i];
        }
        let mut point = x;
        point.extend_from_slice(&xh);
        let gm = g_matrix.eval(&point)?;
        let gu = gm * ds.u_minus.column(j);
        for i in 0..n_dim {
            g[(i, j)] = gu[i];
        }
    }
    let half_g = &g * 0.5;
    let xi1 = vcat(&m_minus, &half_g);
    let xi2 = vcat(&m_h, &half_g);
    Ok(LiftedData { m_minus, m_h, g, xi1, xi2 })
}

pub fn vcat(top: &DMatrix<f64>, bot: &DMatrix<f64>) -> DMatrix<f64> {
    assert_eq!(top.ncols(), bot.ncols());
    let mut out = DMatrix::zeros(top.nrows() + bot.nrows(), top.ncols());
    out.view_mut((0, 0), (top.nrows(), top.ncols())).copy_from(top);
    out.view_mut((top.nrows(), 0), (bot.nrows(), bot.ncols())).copy_from(bot);
    out
}

/// Build the consistency matrix
///
/// ```text
/// S = [ X+ X+' - T delta I   -X+ Xi1'    -X+ Xi2'
///       -Xi1 X+'              Xi1 Xi1'    Xi1 Xi2'
///       -Xi2 X+'              Xi2 Xi1'    Xi2 Xi2' ]
/// ```
///
/// so that `aleph' S aleph <= 0` with `aleph = [I; C1'; C2']` for every
/// system consistent with the data.
pub fn consistency_matrix(ds: &Dataset, lifted: &LiftedData, delta: f64) -> ConsistencyMatrix {
    let n = ds.x_plus.nrows();
    let phi = lifted.xi1.nrows();
    let t = ds.samples as f64;
    let q = n + 2 * phi;
    let mut s = DMatrix::zeros(q, q);
    let xp = &ds.x_plus;
    let xi1 = &lifted.xi1;
    let xi2 = &lifted.xi2;

    let mut set = |r0: usize, c0: usize, m: DMatrix<f64>| {
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                s[(r0 + i, c0 + j)] = m[(i, j)];
            }
        }
    };
    set(0, 0, xp * xp.transpose() - DMatrix::identity(n, n) * (t * delta));
    set(0, n, -(xp * xi1.transpose()));
    set(0, n + phi, -(xp * xi2.transpose()));
    set(n, 0, -(xi1 * xp.transpose()));
    set(n, n, xi1 * xi1.transpose());
    set(n, n + phi, xi1 * xi2.transpose());
    set(n + phi, 0, -(xi2 * xp.transpose()));
    set(n + phi, n, xi2 * xi1.transpose());
    set(n + phi, n + phi, xi2 * xi2.transpose());
    ConsistencyMatrix { s, q, n, phi }
}

impl ConsistencyMatrix {
    /// The stack aleph = [I_n; C1'; C2'] for a given system pair.
    pub fn aleph(c1: &DMatrix<f64>, c2: &DMatrix<f64>) -> DMatrix<f64> {
        let n = c1.nrows();
        vcat(
            &vcat(&DMatrix::identity(n, n), &c1.transpose()),
            &c2.transpose(),
        )
    }

    /// Psi = aleph' S aleph; consistency means Psi <= 0 (PSD order).
    pub fn psi(&self, c1: &DMatrix<f64>, c2: &DMatrix<f64>) -> DMatrix<f64> {
        let al = Self::aleph(c1, c2);
        al.transpose() * &self.s * al
    }
}

/// Rank/conditioning report for the lifted data.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExcitationReport {
    /// Rank and smallest singular value of the stacked [Xi1; Xi2].
    pub lifted_rank: usize,
    pub lifted_rows: usize,
    pub lifted_min_sv: f64,
    /// Rank and smallest singular value of the raw [X-; Xh; U-].
    pub raw_rank: usize,
    pub raw_rows: usize,
    pub raw_min_sv: f64,
    pub samples: usize,
    pub warnings: Vec<String>,
}

pub fn excitation_diagnostics(ds: &Dataset, lifted: &LiftedData) -> ExcitationReport {
    let stacked = vcat(&lifted.xi1, &lifted.xi2);
    let raw = vcat(&vcat(&ds.x_minus, &ds.x_h), &ds.u_minus);
    let t = ds.samples;
    let svd_rank = |m: &DMatrix<f64>| {
        let sv = m.clone().svd(false, false).singular_values;
        let max = sv.iter().copied().fold(0.0f64, f64::max);
        let tol = max * 1e-10 * (m.nrows().max(m.ncols()) as f64);
        let rank = sv.iter().filter(|&&v| v > tol).count();
        let min = sv.iter().copied().fold(f64::INFINITY, f64::min);
        (rank, min)
    };
    let (lifted_rank, lifted_min_sv) = svd_rank(&stacked);
    let (raw_rank, raw_min_sv) = svd_rank(&raw);
    let mut warnings = Vec::new();
    if t < stacked.nrows() {
        warnings.push(format!(
            "sample count T = {} is below the lifted row count {}; the lifted data cannot have full row rank",
            t,
            stacked.nrows()
        ));
    }
    if lifted_rank < stacked.nrows().min(t) {
        warnings.push(format!(
            "lifted data matrix is rank-deficient: rank {} of {} possible",
            lifted_rank,
            stacked.nrows().min(t)
        ));
    }
    if raw_rank < raw.nrows().min(t) {
        warnings.push(format!(
            "raw data matrix is rank-deficient: rank {} of {} possible",
            raw_rank,
            raw.nrows().min(t)
        ));
    }
    for w in &warnings {
        log::warn!("{}", w);
    }
    ExcitationReport {
        lifted_rank,
        lifted_rows: stacked.nrows(),
        lifted_min_sv,
        raw_rank,
        raw_rows: raw.nrows(),
        raw_min_sv,
        samples: t,
        warnings,
    }
}

/// Write the dataset as a single time-indexed CSV with header
/// `k,x1..xn,u1..um[,w1..wn]`. States cover k = -h ..= T; inputs (and
/// disturbances when known) are blank outside 0 .. T-1.
pub fn dataset_to_csv<W: Write>(ds: &Dataset, mut out: W) -> Result<(), DataError> {
    let n = ds.x_minus.nrows();
    let m = ds.u_minus.nrows();
    let t = ds.samples;
    let h = ds.h;
    let mut header = vec!["k".to_string()];
    header.extend((1..=n).map(|i| format!("x{}", i)));
    header.extend((1..=m).map(|i| format!("u{}", i)));
    if ds.w_minus.is_some() {
        header.extend((1..=n).map(|i| format!("w{}", i)));
    }
    writeln!(out, "{}", header.join(","))?;
    // reconstruct the full state sequence x(-h..=T)
    let state_at = |k: isize| -> Vec<f64> {
        if k < 0 {
            ds.x_h.column((k + h as isize) as usize).iter().copied().collect()
        } else if (k as usize) < t {
            ds.x_minus.column(k as usize).iter().copied().collect()
        } else {
            ds.x_plus.column(t - 1).iter().copied().collect()
        }
    };
    for k in -(h as isize)..=(t as isize) {
        let mut row = vec![k.to_string()];
        for v in state_at(k) {
            row.push(format!("{}", v));
        }
        let in_horizon = k >= 0 && (k as usize) < t;
        for i in 0..m {
            row.push(if in_horizon {
                format!("{}", ds.u_minus[(i, k as usize)])
            } else {
                String::new()
            });
        }
        if let Some(w) = &ds.w_minus {
            for i in 0..n {
                row.push(if in_horizon {
                    format!("{}", w[(i, k as usize)])
                } else {
                    String::new()
                });
            }
        }
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

/// Load a dataset from the time-indexed CSV given the declared delay and
/// disturbance bound. Disturbance columns, when present, are kept (the
/// loader also re-ingests simulator output); external data omits them and
/// the disturbance-dependent oracles are skipped.
pub fn dataset_from_csv<R: Read>(reader: R, h: usize, delta: f64) -> Result<Dataset, DataError> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let headers = rdr.headers().map_err(|e| DataError::Csv(e.to_string()))?.clone();
    let names: Vec<&str> = headers.iter().collect();
    if names.first() != Some(&"k") {
        return Err(DataError::Csv("first column must be k".into()));
    }
    let n = names.iter().filter(|c| c.starts_with('x')).count();
    let m = names.iter().filter(|c| c.starts_with('u')).count();
    let nw = names.iter().filter(|c| c.starts_with('w')).count();
    if n == 0 {
        return Err(DataError::Csv("no state columns".into()));
    }
    let mut rows: Vec<(isize, Vec<Option<f64>>)> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| DataError::Csv(e.to_string()))?;
        let k: isize = rec
            .get(0)
            .ok_or_else(|| DataError::Csv("missing k".into()))?
            .trim()
            .parse()
            .map_err(|_| DataError::Csv("bad k".into()))?;
        let vals: Vec<Option<f64>> = (1..rec.len())
            .map(|i| {
                let s = rec.get(i).unwrap_or("").trim();
                if s.is_empty() {
                    None
                } else {
                    s.parse::<f64>().ok()
                }
            })
            .collect();
        rows.push((k, vals));
    }
    rows.sort_by_key(|(k, _)| *k);
    let k_min = rows.first().map(|(k, _)| *k).ok_or(DataError::EmptyHorizon)?;
    let k_max = rows.last().map(|(k, _)| *k).unwrap();
    if k_min > -(h as isize) {
        return Err(DataError::Csv(format!(
            "need history back to k = -{} but data starts at k = {}",
            h, k_min
        )));
    }
    let t = k_max.max(0) as usize;
    if t == 0 {
        return Err(DataError::EmptyHorizon);
    }
    let state = |k: isize| -> Result<Vec<f64>, DataError> {
        let (_, vals) = rows
            .iter()
            .find(|(kk, _)| *kk == k)
            .ok_or_else(|| DataError::Csv(format!("missing row k = {}", k)))?;
        (0..n)
            .map(|i| {
                vals.get(i)
                    .copied()
                    .flatten()
                    .ok_or_else(|| DataError::Csv(format!("missing x at k = {}", k)))
            })
            .collect()
    };
    let input = |k: isize| -> Result<Vec<f64>, DataError> {
        let (_, vals) = rows.iter().find(|(kk, _)| *kk == k).unwrap();
        (0..m)
            .map(|i| {
                vals.get(n + i)
                    .copied()
                    .flatten()
                    .ok_or_else(|| DataError::Csv(format!("missing u at k = {}", k)))
            })
            .collect()
    };
    let mut xm = DMatrix::zeros(n, t);
    let mut xp = DMatrix::zeros(n, t);
    let mut xh = DMatrix::zeros(n, t);
    let mut um = DMatrix::zeros(m, t);
    for j in 0..t {
        let k = j as isize;
        xm.set_column(j, &DVector::from_vec(state(k)?));
        xp.set_column(j, &DVector::from_vec(state(k + 1)?));
        xh.set_column(j, &DVector::from_vec(state(k - h as isize)?));
        um.set_column(j, &DVector::from_vec(input(k)?));
    }
    let w_minus = if nw == n {
        let mut wm = DMatrix::zeros(n, t);
        let mut all = true;
        for j in 0..t {
            let (_, vals) = rows.iter().find(|(kk, _)| *kk == j as isize).unwrap();
            for i in 0..n {
                match vals.get(n + m + i).copied().flatten() {
                    Some(v) => wm[(i, j)] = v,
                    None => all = false,
                }
            }
        }
        all.then_some(wm)
    } else {
        None
    };
    Ok(Dataset {
        u_minus: um,
        x_minus: xm,
        x_plus: xp,
        x_h: xh,
        w_minus,
        samples: t,
        h,
        delta,
    })
}

pub fn save_dataset(ds: &Dataset, path: &Path) -> Result<(), DataError> {
    let mut buf = Vec::new();
    dataset_to_csv(ds, &mut buf)?;
    std::fs::write(path, buf)?;
    Ok(())
}

pub fn load_dataset(path: &Path, h: usize, delta: f64) -> Result<Dataset, DataError> {
    let f = std::fs::File::open(path)?;
    dataset_from_csv(f, h, delta)
}
