//! Bundled projection backend: relaxed Douglas–Rachford alternating
//! between the equality-affine subspace and the (shifted) PSD cone
//! product, followed by an exact affine polish.
//!
//! The affine projection exploits the structure of compiled
//! sum-of-squares problems: most unknowns (Gram entries) appear in exactly
//! one equality, so `A Aᵀ = D + C Cᵀ` with `D` diagonal and `C` holding
//! the few shared columns; the normal equations then solve through the
//! Woodbury identity at negligible cost. Problems without that structure
//! fall back to a dense Cholesky of `A Aᵀ`.
//!
//! Objectives are handled by bisection over the objective level added as
//! one extra equality with a nonnegative slack; only small models carry
//! objectives in this crate.

use super::{
    validate, Assignment, LinTerm, SdpProblem, SdpSolution, SolveStatus, VarRef,
};
use crate::linalg::{mat_to_svec, svec_index, svec_len, svec_to_mat, sym_eigen, SQRT2};
use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Profile {
    /// Aggressive relaxation, default interior shift.
    Balanced,
    /// Classic Douglas–Rachford step with a smaller shift; slower but
    /// stubborn. Doubles as the second backend profile for
    /// cross-checking feasibility statuses.
    Cautious,
}

#[derive(Debug, Clone)]
pub struct SolveOptions {
    pub feas_tol: f64,
    pub max_iter: usize,
    pub verbosity: u8,
    pub profile: Profile,
    /// Bisection gap for objectives.
    pub objective_tol: f64,
    /// Initial eigenvalue floor targeted during iterations.
    pub interior_shift: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            feas_tol: 1e-8,
            max_iter: 60_000,
            verbosity: 0,
            profile: Profile::Balanced,
            objective_tol: 1e-7,
            interior_shift: 1e-6,
        }
    }
}

impl SolveOptions {
    fn relaxation(&self) -> f64 {
        match self.profile {
            Profile::Balanced => 1.8,
            Profile::Cautious => 1.0,
        }
    }

    fn initial_shift(&self) -> f64 {
        match self.profile {
            Profile::Balanced => self.interior_shift,
            Profile::Cautious => self.interior_shift * 0.1,
        }
    }

    pub fn profile_name(&self) -> &'static str {
        match self.profile {
            Profile::Balanced => "balanced",
            Profile::Cautious => "cautious",
        }
    }
}

struct Block {
    side: usize,
    cone: bool,
    offset: usize,
    len: usize,
}

struct SparseRow {
    cols: Vec<u32>,
    coefs: Vec<f64>,
}

enum NormalSolver {
    Woodbury {
        d_inv: Vec<f64>,
        /// Multi-equality columns: (solver column, rows, coefs).
        c_cols: Vec<(u32, Vec<u32>, Vec<f64>)>,
        /// Cholesky factor of I + Cᵀ D⁻¹ C.
        chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    },
    Dense {
        chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    },
    /// Rank-deficient (or inconsistent) equalities: ridge-regularized
    /// normal equations; the projection then targets the least-squares
    /// affine set.
    Ridge {
        chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    },
}

struct Canon {
    blocks: Vec<Block>,
    nscalars: usize,
    scalar_offset: usize,
    dim: usize,
    rows: Vec<SparseRow>,
    rhs: Vec<f64>,
    normal: NormalSolver,
}

fn svec_coord(blocks: &[Block], var: usize, row: usize, col: usize) -> (usize, f64) {
    let (i, j) = if row <= col { (row, col) } else { (col, row) };
    let b = &blocks[var];
    let idx = b.offset + svec_index(b.side, i, j);
    // X_ij = s_ij / sqrt(2) on off-diagonals
    let scale = if i == j { 1.0 } else { 1.0 / SQRT2 };
    (idx, scale)
}

fn canonicalize(problem: &SdpProblem) -> Result<Canon, String> {
    let lowered = problem.lowered();
    lowered.check_well_formed().map_err(|e| e.to_string())?;
    let mut blocks = Vec::with_capacity(lowered.matrix_vars.len());
    let mut offset = 0usize;
    let coned: Vec<bool> = {
        let mut v = vec![false; lowered.matrix_vars.len()];
        for c in &lowered.psd_constraints {
            if let super::PsdConstraint::VarPsd { var } = c {
                v[*var] = true;
            }
        }
        v
    };
    for (k, mv) in lowered.matrix_vars.iter().enumerate() {
        let len = svec_len(mv.side);
        blocks.push(Block { side: mv.side, cone: coned[k], offset, len });
        offset += len;
    }
    let scalar_offset = offset;
    let dim = offset + lowered.scalar_vars.len();

    // assemble rows with row equilibration
    let mut rows = Vec::with_capacity(lowered.equalities.len());
    let mut rhs = Vec::with_capacity(lowered.equalities.len());
    for eq in &lowered.equalities {
        let mut acc: std::collections::BTreeMap<u32, f64> = std::collections::BTreeMap::new();
        for t in &eq.terms {
            let (idx, scale) = match t.var {
                VarRef::Mat { var, row, col } => svec_coord(&blocks, var, row, col),
                VarRef::Scalar(s) => (scalar_offset + s, 1.0),
            };
            *acc.entry(idx as u32).or_insert(0.0) += t.coeff * scale;
        }
        acc.retain(|_, v| *v != 0.0);
        let norm = acc.values().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            if eq.rhs.abs() > 0.0 {
                // structurally inconsistent row: keep it so the residual
                // reports the inconsistency instead of silently dropping it
                rows.push(SparseRow { cols: vec![], coefs: vec![] });
                rhs.push(eq.rhs);
            }
            continue;
        }
        let (cols, coefs): (Vec<u32>, Vec<f64>) =
            acc.into_iter().map(|(c, v)| (c, v / norm)).unzip();
        rows.push(SparseRow { cols, coefs });
        rhs.push(eq.rhs / norm);
    }

    let normal = build_normal_solver(&rows, dim)?;
    Ok(Canon {
        blocks,
        nscalars: lowered.scalar_vars.len(),
        scalar_offset,
        dim,
        rows,
        rhs,
        normal,
    })
}

fn build_normal_solver(rows: &[SparseRow], dim: usize) -> Result<NormalSolver, String> {
    let m = rows.len();
    if m == 0 {
        return Ok(NormalSolver::Dense {
            chol: nalgebra::Cholesky::new(DMatrix::identity(0, 0)).unwrap(),
        });
    }
    // count column appearances
    let mut count = vec![0u32; dim];
    for r in rows {
        for &c in &r.cols {
            count[c as usize] += 1;
        }
    }
    let empty_row = rows.iter().any(|r| r.cols.is_empty());
    let mut d = vec![0.0f64; m];
    let mut multi_cols: Vec<u32> = Vec::new();
    for (c, &k) in count.iter().enumerate() {
        if k >= 2 {
            multi_cols.push(c as u32);
        }
    }
    for (ri, r) in rows.iter().enumerate() {
        for (k, &c) in r.cols.iter().enumerate() {
            if count[c as usize] == 1 {
                d[ri] += r.coefs[k] * r.coefs[k];
            }
        }
    }
    let d_ok = !empty_row && d.iter().all(|&v| v > 1e-14);
    if d_ok && multi_cols.len() <= 6000 {
        // gather the multi columns
        let mut col_rows: std::collections::HashMap<u32, (Vec<u32>, Vec<f64>)> =
            multi_cols.iter().map(|&c| (c, (Vec::new(), Vec::new()))).collect();
        for (ri, r) in rows.iter().enumerate() {
            for (k, &c) in r.cols.iter().enumerate() {
                if let Some((rr, cc)) = col_rows.get_mut(&c) {
                    rr.push(ri as u32);
                    cc.push(r.coefs[k]);
                }
            }
        }
        let mut c_cols: Vec<(u32, Vec<u32>, Vec<f64>)> = multi_cols
            .iter()
            .map(|c| {
                let (rr, cc) = col_rows.remove(c).unwrap();
                (*c, rr, cc)
            })
            .collect();
        c_cols.sort_by_key(|(c, _, _)| *c);
        let k = c_cols.len();
        // K = I + Cᵀ D⁻¹ C, accumulated per row
        let mut kmat = DMatrix::identity(k, k);
        let col_pos: std::collections::HashMap<u32, usize> =
            c_cols.iter().enumerate().map(|(i, (c, _, _))| (*c, i)).collect();
        for (ri, r) in rows.iter().enumerate() {
            let mut present: Vec<(usize, f64)> = Vec::new();
            for (t, &c) in r.cols.iter().enumerate() {
                if let Some(&p) = col_pos.get(&c) {
                    present.push((p, r.coefs[t]));
                }
            }
            if present.len() < 1 {
                continue;
            }
            let w = 1.0 / d[ri];
            for &(pi, vi) in &present {
                for &(pj, vj) in &present {
                    kmat[(pi, pj)] += w * vi * vj;
                }
            }
        }
        let chol = nalgebra::Cholesky::new(kmat)
            .ok_or_else(|| "normal-equation factorization failed".to_string())?;
        return Ok(NormalSolver::Woodbury { d_inv: d.iter().map(|v| 1.0 / v).collect(), c_cols, chol });
    }
    // dense fallback
    if m > 20_000 {
        return Err(format!(
            "equality system too large for the dense fallback ({} rows) and lacks the single-appearance structure",
            m
        ));
    }
    let mut aat = DMatrix::zeros(m, m);
    // column-wise outer products
    let mut by_col: std::collections::HashMap<u32, Vec<(u32, f64)>> = std::collections::HashMap::new();
    for (ri, r) in rows.iter().enumerate() {
        for (k, &c) in r.cols.iter().enumerate() {
            by_col.entry(c).or_default().push((ri as u32, r.coefs[k]));
        }
    }
    for entries in by_col.values() {
        for &(ri, vi) in entries {
            for &(rj, vj) in entries {
                aat[(ri as usize, rj as usize)] += vi * vj;
            }
        }
    }
    if let Some(chol) = nalgebra::Cholesky::new(aat.clone()) {
        return Ok(NormalSolver::Dense { chol });
    }
    let scale = aat.diagonal().amax().max(1.0);
    for i in 0..m {
        aat[(i, i)] += 1e-12 * scale;
    }
    let chol = nalgebra::Cholesky::new(aat)
        .ok_or_else(|| "regularized normal equations still singular".to_string())?;
    Ok(NormalSolver::Ridge { chol })
}

impl Canon {
    fn apply_a(&self, x: &[f64], out: &mut [f64]) {
        for (ri, r) in self.rows.iter().enumerate() {
            let mut acc = 0.0;
            for (k, &c) in r.cols.iter().enumerate() {
                acc += r.coefs[k] * x[c as usize];
            }
            out[ri] = acc;
        }
    }

    fn apply_at(&self, y: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for (ri, r) in self.rows.iter().enumerate() {
            let w = y[ri];
            if w == 0.0 {
                continue;
            }
            for (k, &c) in r.cols.iter().enumerate() {
                out[c as usize] += r.coefs[k] * w;
            }
        }
    }

    fn solve_normal(&self, r: &[f64]) -> Vec<f64> {
        match &self.normal {
            NormalSolver::Woodbury { d_inv, c_cols, chol } => {
                let mut t: Vec<f64> = r.iter().zip(d_inv).map(|(v, d)| v * d).collect();
                let mut u = DVector::zeros(c_cols.len());
                for (k, (_, rr, cc)) in c_cols.iter().enumerate() {
                    let mut acc = 0.0;
                    for (i, &ri) in rr.iter().enumerate() {
                        acc += cc[i] * t[ri as usize];
                    }
                    u[k] = acc;
                }
                let v = chol.solve(&u);
                for (k, (_, rr, cc)) in c_cols.iter().enumerate() {
                    let w = v[k];
                    if w == 0.0 {
                        continue;
                    }
                    for (i, &ri) in rr.iter().enumerate() {
                        t[ri as usize] -= d_inv[ri as usize] * cc[i] * w;
                    }
                }
                t
            }
            NormalSolver::Dense { chol } | NormalSolver::Ridge { chol } => {
                let y = chol.solve(&DVector::from_column_slice(r));
                y.as_slice().to_vec()
            }
        }
    }

    /// Orthogonal projection onto { x : A x = b } (least-squares affine set
    /// in the rank-deficient case).
    fn project_affine(&self, x: &[f64], out: &mut [f64]) {
        if self.rows.is_empty() {
            out.copy_from_slice(x);
            return;
        }
        let mut res = vec![0.0; self.rows.len()];
        self.apply_a(x, &mut res);
        for (ri, v) in res.iter_mut().enumerate() {
            *v -= self.rhs[ri];
        }
        let y = self.solve_normal(&res);
        self.apply_at(&y, out);
        for i in 0..self.dim {
            out[i] = x[i] - out[i];
        }
    }

    /// Projection onto the product of shifted PSD cones (free blocks and
    /// scalars pass through).
    fn project_cone(&self, x: &[f64], floor: f64, out: &mut [f64]) {
        out.copy_from_slice(x);
        for b in &self.blocks {
            if !b.cone {
                continue;
            }
            let m = svec_to_mat(&x[b.offset..b.offset + b.len], b.side);
            let e = sym_eigen(&m);
            if e.values.iter().all(|&v| v >= floor) {
                continue;
            }
            let n = b.side;
            let mut proj = DMatrix::zeros(n, n);
            for k in 0..n {
                let lam = e.values[k].max(floor);
                if lam != 0.0 {
                    let v = e.vectors.column(k);
                    for j in 0..n {
                        let s = lam * v[j];
                        for i in 0..n {
                            proj[(i, j)] += s * v[i];
                        }
                    }
                }
            }
            mat_to_svec(&proj, &mut out[b.offset..b.offset + b.len]);
        }
    }

    fn residual_inf(&self, x: &[f64]) -> f64 {
        let mut res = vec![0.0; self.rows.len()];
        self.apply_a(x, &mut res);
        res.iter()
            .zip(&self.rhs)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    fn extract(&self, problem: &SdpProblem, x: &[f64]) -> Assignment {
        let matrices = problem
            .matrix_vars
            .iter()
            .enumerate()
            .map(|(k, _)| {
                let b = &self.blocks[k];
                svec_to_mat(&x[b.offset..b.offset + b.len], b.side)
            })
            .collect();
        let scalars = (0..problem.scalar_vars.len())
            .map(|s| x[self.scalar_offset + s])
            .collect();
        Assignment { matrices, scalars }
    }
}

struct FeasOutcome {
    status: SolveStatus,
    x: Option<Vec<f64>>,
    iterations: usize,
    message: String,
}

fn solve_feasibility(canon: &Canon, opts: &SolveOptions) -> FeasOutcome {
    let dim = canon.dim;
    if dim == 0 {
        return FeasOutcome {
            status: SolveStatus::Feasible,
            x: Some(vec![]),
            iterations: 0,
            message: "empty problem".into(),
        };
    }
    let relax = opts.relaxation();
    let mut shift = opts.initial_shift();
    let mut z = vec![0.0f64; dim];
    let mut pa = vec![0.0f64; dim];
    let mut refl = vec![0.0f64; dim];
    let mut pc = vec![0.0f64; dim];
    let mut polish = vec![0.0f64; dim];

    let mut best_dist = f64::INFINITY;
    let mut last_improve = 0usize;
    let stall_window = 2500usize;

    for it in 0..opts.max_iter {
        canon.project_affine(&z, &mut pa);
        for i in 0..dim {
            refl[i] = 2.0 * pa[i] - z[i];
        }
        canon.project_cone(&refl, shift, &mut pc);
        let mut dist2 = 0.0;
        for i in 0..dim {
            let d = pc[i] - pa[i];
            dist2 += d * d;
            z[i] += relax * 0.5 * d;
        }
        let dist = dist2.sqrt();
        if dist < best_dist * 0.9999 {
            best_dist = dist;
            last_improve = it;
        }

        let scale = pc.iter().map(|v| v.abs()).fold(1.0, f64::max);
        if dist <= (10.0 * opts.feas_tol).max(1e-12 * scale) * (1.0 + scale) || it % 25 == 24 {
            // polish attempt: pc is exactly in the shifted cone; project it
            // onto the affine subspace and let the margin absorb the move
            canon.project_affine(&pc, &mut polish);
            let mut disp2 = 0.0;
            for i in 0..dim {
                let d = polish[i] - pc[i];
                disp2 += d * d;
            }
            let disp = disp2.sqrt();
            if disp < shift * 0.5 || (shift == 0.0 && disp <= opts.feas_tol) {
                let res = canon.residual_inf(&polish);
                if res <= opts.feas_tol.max(1e-12 * scale) {
                    return FeasOutcome {
                        status: SolveStatus::Feasible,
                        x: Some(polish),
                        iterations: it + 1,
                        message: format!(
                            "converged: residual {:.3e}, cone margin displacement {:.3e}",
                            res, disp
                        ),
                    };
                }
            }
        }

        if it - last_improve > stall_window {
            if shift > 1e-9 {
                shift *= 0.1;
                if shift < 1e-9 {
                    shift = 0.0;
                }
                best_dist = f64::INFINITY;
                last_improve = it;
                if opts.verbosity > 0 {
                    log::info!("iter {}: reducing interior shift to {:.1e}", it, shift);
                }
            } else {
                let scale = pc.iter().map(|v| v.abs()).fold(1.0, f64::max);
                if best_dist > 1e3 * opts.feas_tol * (1.0 + scale) {
                    return FeasOutcome {
                        status: SolveStatus::Infeasible,
                        x: None,
                        iterations: it + 1,
                        message: format!(
                            "projection residual stalled at {:.3e}; the affine and cone sets appear disjoint",
                            best_dist
                        ),
                    };
                }
                return FeasOutcome {
                    status: SolveStatus::NumericalFailure,
                    x: None,
                    iterations: it + 1,
                    message: format!(
                        "stalled near the boundary (residual {:.3e}) without reaching tolerance",
                        best_dist
                    ),
                };
            }
        }
    }
    FeasOutcome {
        status: SolveStatus::NumericalFailure,
        x: None,
        iterations: opts.max_iter,
        message: format!("iteration budget exhausted (best residual {:.3e})", best_dist),
    }
}

/// Solve the problem. Feasible results are re-validated from the raw
/// problem data before being reported.
pub fn solve(problem: &SdpProblem, opts: &SolveOptions) -> SdpSolution {
    match &problem.objective {
        None => solve_feasibility_problem(problem, opts),
        Some(obj) => solve_with_objective(problem, obj.clone(), opts),
    }
}

fn finish(
    problem: &SdpProblem,
    canon: &Canon,
    outcome: FeasOutcome,
    opts: &SolveOptions,
) -> SdpSolution {
    match outcome.status {
        SolveStatus::Feasible => {
            let x = outcome.x.expect("feasible outcome carries a point");
            let assignment = canon.extract(problem, &x);
            let report = validate(problem, &assignment);
            // tolerate round-off amplification when reading entries back out
            let tol = opts.feas_tol * 100.0;
            let scale = 1.0 + x.iter().map(|v| v.abs()).fold(0.0, f64::max);
            if report.max_equality_residual <= tol * scale && report.min_psd_eig() >= -tol * scale {
                SdpSolution {
                    status: SolveStatus::Feasible,
                    assignment: Some(assignment),
                    validation: Some(report),
                    iterations: outcome.iterations,
                    profile: opts.profile_name().into(),
                    message: outcome.message,
                }
            } else {
                SdpSolution {
                    status: SolveStatus::NumericalFailure,
                    assignment: Some(assignment),
                    validation: Some(report),
                    iterations: outcome.iterations,
                    profile: opts.profile_name().into(),
                    message: format!(
                        "backend reported feasible but validation failed (residual {:.3e}, min eig {:.3e})",
                        report.max_equality_residual,
                        report.min_psd_eig()
                    ),
                }
            }
        }
        status => SdpSolution {
            status,
            assignment: None,
            validation: None,
            iterations: outcome.iterations,
            profile: opts.profile_name().into(),
            message: outcome.message,
        },
    }
}

fn solve_feasibility_problem(problem: &SdpProblem, opts: &SolveOptions) -> SdpSolution {
    let canon = match canonicalize(problem) {
        Ok(c) => c,
        Err(e) => {
            return SdpSolution {
                status: SolveStatus::NumericalFailure,
                assignment: None,
                validation: None,
                iterations: 0,
                profile: opts.profile_name().into(),
                message: e,
            }
        }
    };
    let outcome = solve_feasibility(&canon, opts);
    finish(problem, &canon, outcome, opts)
}

fn solve_with_objective(
    problem: &SdpProblem,
    objective: Vec<LinTerm>,
    opts: &SolveOptions,
) -> SdpSolution {
    // strip the objective and probe levels t: objective + slack = t, slack >= 0
    let mut base = problem.clone();
    base.objective = None;
    let feas = solve_feasibility_problem(&base, opts);
    if feas.status != SolveStatus::Feasible {
        return feas;
    }
    let assignment = feas.assignment.unwrap();
    let mut ub = assignment.eval_terms(&objective);
    let mut best = assignment;
    let mut best_iters = feas.iterations;

    let probe = |t: f64| -> SdpSolution {
        let mut p = base.clone();
        let slack = p.add_matrix_var("objective-slack", 1);
        p.require_var_psd(slack);
        let mut terms = objective.clone();
        terms.push(LinTerm { var: VarRef::Mat { var: slack, row: 0, col: 0 }, coeff: 1.0 });
        p.add_equality(terms, t);
        solve_feasibility_problem(&p, opts)
    };

    // find a lower bound by doubling the step
    let span = 1.0 + ub.abs();
    let mut width = 0.125 * span;
    let mut lb = None;
    for _ in 0..48 {
        let t = ub - width;
        let sol = probe(t);
        match sol.status {
            SolveStatus::Feasible => {
                let a = sol.assignment.unwrap();
                ub = a.eval_terms(&objective).min(t);
                best = a;
                best_iters = sol.iterations;
                width *= 2.0;
            }
            _ => {
                lb = Some(t);
                break;
            }
        }
    }
    let mut lb = match lb {
        Some(v) => v,
        None => {
            return SdpSolution {
                status: SolveStatus::NumericalFailure,
                assignment: Some(best),
                validation: None,
                iterations: best_iters,
                profile: opts.profile_name().into(),
                message: "objective appears unbounded below".into(),
            }
        }
    };
    while ub - lb > opts.objective_tol {
        let mid = 0.5 * (ub + lb);
        let sol = probe(mid);
        match sol.status {
            SolveStatus::Feasible => {
                let a = sol.assignment.unwrap();
                ub = a.eval_terms(&objective).min(mid);
                best = a;
                best_iters = sol.iterations;
            }
            _ => lb = mid,
        }
    }
    let report = validate(problem, &best);
    SdpSolution {
        status: SolveStatus::Feasible,
        assignment: Some(best),
        validation: Some(report),
        iterations: best_iters,
        profile: opts.profile_name().into(),
        message: format!("objective bisection closed to gap {:.3e}", ub - lb),
    }
}
