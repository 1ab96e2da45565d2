//! Solver-agnostic semidefinite feasibility model and the bundled backend.
//!
//! An [`SdpProblem`] is a list of symmetric matrix variables and scalar
//! variables, sparse linear equalities over their entries, PSD
//! requirements, and an optional linear objective. Equalities and affine
//! expressions reference a symmetric entry (i, j) as a single variable
//! (the (j, i) mirror is the same entry).
//!
//! The bundled backend is a relaxed Douglas–Rachford projection method on
//! the intersection of the equality-affine subspace and the PSD cone
//! product, with two twists:
//!
//! * the cone projection clips eigenvalues at a small positive shift, so
//!   the iteration targets a point in the cone interior;
//! * once the residual is small, the candidate is projected onto the
//!   affine subspace exactly; the interior margin absorbs the projection
//!   displacement, yielding equalities at machine precision and exact
//!   PSD-ness.
//!
//! Every solution reported feasible is re-validated from the raw problem
//! data by [`validate`]; the backend never returns an unvalidated
//! "feasible".

pub mod solve;
pub mod text;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SdpError {
    #[error("unknown variable reference {0:?}")]
    BadVarRef(VarRef),
    #[error("matrix entry ({row},{col}) out of range for variable of side {side}")]
    EntryOutOfRange { row: usize, col: usize, side: usize },
    #[error("problem is malformed: {0}")]
    Malformed(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Reference to one scalar unknown: an entry of a symmetric matrix
/// variable or a scalar variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VarRef {
    /// Entry (row, col) of matrix variable `var`; (i, j) and (j, i) are
    /// the same unknown.
    Mat { var: usize, row: usize, col: usize },
    Scalar(usize),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatrixVar {
    pub name: String,
    pub side: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScalarVar {
    pub name: String,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LinTerm {
    pub var: VarRef,
    pub coeff: f64,
}

/// Sparse linear equality: sum of terms = rhs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinearEq {
    pub terms: Vec<LinTerm>,
    pub rhs: f64,
}

/// One upper-triangle entry of an affine symmetric-matrix expression.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AffineEntry {
    pub row: usize,
    pub col: usize,
    pub terms: Vec<LinTerm>,
    pub constant: f64,
}

/// Affine symmetric-matrix expression, stored as sparse upper-triangle
/// entries (missing entries are zero).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AffineMatrixExpr {
    pub side: usize,
    pub entries: Vec<AffineEntry>,
}

/// A PSD requirement: either a matrix variable itself or an affine
/// expression of variables.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum PsdConstraint {
    VarPsd { var: usize },
    Expr(AffineMatrixExpr),
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SdpProblem {
    pub matrix_vars: Vec<MatrixVar>,
    pub scalar_vars: Vec<ScalarVar>,
    pub equalities: Vec<LinearEq>,
    pub psd_constraints: Vec<PsdConstraint>,
    /// Minimized when present; pure feasibility otherwise.
    pub objective: Option<Vec<LinTerm>>,
}

impl SdpProblem {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_matrix_var(&mut self, name: impl Into<String>, side: usize) -> usize {
        self.matrix_vars.push(MatrixVar { name: name.into(), side });
        self.matrix_vars.len() - 1
    }

    pub fn add_scalar_var(&mut self, name: impl Into<String>) -> usize {
        self.scalar_vars.push(ScalarVar { name: name.into() });
        self.scalar_vars.len() - 1
    }

    pub fn require_var_psd(&mut self, var: usize) {
        if !self.psd_constraints.iter().any(
            |c| matches!(c, PsdConstraint::VarPsd { var: v } if *v == var),
        ) {
            self.psd_constraints.push(PsdConstraint::VarPsd { var });
        }
    }

    pub fn add_equality(&mut self, terms: Vec<LinTerm>, rhs: f64) {
        self.equalities.push(LinearEq { terms, rhs });
    }

    pub fn check_well_formed(&self) -> Result<(), SdpError> {
        let check_ref = |r: &VarRef| -> Result<(), SdpError> {
            match *r {
                VarRef::Mat { var, row, col } => {
                    let mv = self
                        .matrix_vars
                        .get(var)
                        .ok_or(SdpError::BadVarRef(*r))?;
                    if row >= mv.side || col >= mv.side {
                        return Err(SdpError::EntryOutOfRange { row, col, side: mv.side });
                    }
                    Ok(())
                }
                VarRef::Scalar(s) => {
                    if s >= self.scalar_vars.len() {
                        return Err(SdpError::BadVarRef(*r));
                    }
                    Ok(())
                }
            }
        };
        for eq in &self.equalities {
            for t in &eq.terms {
                check_ref(&t.var)?;
            }
        }
        if let Some(obj) = &self.objective {
            for t in obj {
                check_ref(&t.var)?;
            }
        }
        for c in &self.psd_constraints {
            match c {
                PsdConstraint::VarPsd { var } => {
                    if *var >= self.matrix_vars.len() {
                        return Err(SdpError::Malformed(format!("psd var {} out of range", var)));
                    }
                }
                PsdConstraint::Expr(e) => {
                    for entry in &e.entries {
                        if entry.row > entry.col || entry.col >= e.side {
                            return Err(SdpError::Malformed(
                                "affine entries must be upper-triangle".into(),
                            ));
                        }
                        for t in &entry.terms {
                            check_ref(&t.var)?;
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Lower every `Expr` PSD constraint into a fresh cone-constrained
    /// slack matrix variable plus entrywise equalities. The result
    /// contains only `VarPsd` constraints, the form the backend and the
    /// text serialization work with.
    pub fn lowered(&self) -> SdpProblem {
        let mut out = self.clone();
        out.psd_constraints.clear();
        for c in &self.psd_constraints {
            match c {
                PsdConstraint::VarPsd { var } => out.require_var_psd(*var),
                PsdConstraint::Expr(e) => {
                    let slack = out.add_matrix_var(format!("slack{}", out.matrix_vars.len()), e.side);
                    out.require_var_psd(slack);
                    // slack_ij - expr_ij = const_ij, entrywise on the support;
                    // unreferenced entries of the slack are pinned to zero.
                    let mut touched = vec![false; e.side * e.side];
                    for entry in &e.entries {
                        touched[entry.row * e.side + entry.col] = true;
                        let mut terms = vec![LinTerm {
                            var: VarRef::Mat { var: slack, row: entry.row, col: entry.col },
                            coeff: 1.0,
                        }];
                        for t in &entry.terms {
                            terms.push(LinTerm { var: t.var, coeff: -t.coeff });
                        }
                        out.add_equality(terms, entry.constant);
                    }
                    for i in 0..e.side {
                        for j in i..e.side {
                            if !touched[i * e.side + j] {
                                out.add_equality(
                                    vec![LinTerm {
                                        var: VarRef::Mat { var: slack, row: i, col: j },
                                        coeff: 1.0,
                                    }],
                                    0.0,
                                );
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

/// Assignment of values to every variable of a problem.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Assignment {
    pub matrices: Vec<DMatrix<f64>>,
    pub scalars: Vec<f64>,
}

impl Assignment {
    pub fn value(&self, r: &VarRef) -> f64 {
        match *r {
            VarRef::Mat { var, row, col } => self.matrices[var][(row, col)],
            VarRef::Scalar(s) => self.scalars[s],
        }
    }

    pub fn eval_terms(&self, terms: &[LinTerm]) -> f64 {
        terms.iter().map(|t| t.coeff * self.value(&t.var)).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Feasible,
    Infeasible,
    NumericalFailure,
}

/// Residual recomputation, independent of backend internals.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValidationReport {
    /// Worst |equality residual|.
    pub max_equality_residual: f64,
    /// Minimum eigenvalue of each PSD constraint, in declaration order.
    pub psd_min_eigs: Vec<f64>,
    pub objective_value: Option<f64>,
}

impl ValidationReport {
    pub fn min_psd_eig(&self) -> f64 {
        self.psd_min_eigs.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn passes(&self, feas_tol: f64) -> bool {
        self.max_equality_residual <= feas_tol && self.min_psd_eig() >= -feas_tol
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SdpSolution {
    pub status: SolveStatus,
    pub assignment: Option<Assignment>,
    pub validation: Option<ValidationReport>,
    pub iterations: usize,
    pub profile: String,
    pub message: String,
}

/// Recompute every equality residual and PSD minimum eigenvalue from the
/// raw problem data.
pub fn validate(problem: &SdpProblem, assignment: &Assignment) -> ValidationReport {
    let mut max_res = 0.0f64;
    for eq in &problem.equalities {
        let r = (assignment.eval_terms(&eq.terms) - eq.rhs).abs();
        max_res = max_res.max(r);
    }
    let mut psd_min_eigs = Vec::new();
    for c in &problem.psd_constraints {
        let m = match c {
            PsdConstraint::VarPsd { var } => assignment.matrices[*var].clone(),
            PsdConstraint::Expr(e) => {
                let mut m = DMatrix::zeros(e.side, e.side);
                for entry in &e.entries {
                    let v = assignment.eval_terms(&entry.terms) + entry.constant;
                    m[(entry.row, entry.col)] = v;
                    m[(entry.col, entry.row)] = v;
                }
                m
            }
        };
        psd_min_eigs.push(crate::linalg::min_eigenvalue(&m));
    }
    let objective_value = problem.objective.as_ref().map(|o| assignment.eval_terms(o));
    ValidationReport { max_equality_residual: max_res, psd_min_eigs, objective_value }
}

#[cfg(test)]
mod tests {
    use super::solve::{solve, SolveOptions};
    use super::*;

    fn trace_one_problem() -> SdpProblem {
        let mut p = SdpProblem::new();
        let x = p.add_matrix_var("X", 2);
        p.require_var_psd(x);
        p.add_equality(
            vec![
                LinTerm { var: VarRef::Mat { var: x, row: 0, col: 0 }, coeff: 1.0 },
                LinTerm { var: VarRef::Mat { var: x, row: 1, col: 1 }, coeff: 1.0 },
            ],
            1.0,
        );
        p
    }

    #[test]
    fn empty_problem_is_feasible() {
        let p = SdpProblem::new();
        let sol = solve(&p, &SolveOptions::default());
        assert_eq!(sol.status, SolveStatus::Feasible);
        assert!(sol.assignment.unwrap().matrices.is_empty());
    }

    #[test]
    fn feasibility_with_trace_constraint() {
        let p = trace_one_problem();
        let sol = solve(&p, &SolveOptions::default());
        assert_eq!(sol.status, SolveStatus::Feasible);
        let v = sol.validation.unwrap();
        assert!(v.max_equality_residual <= 1e-8);
        assert!(v.min_psd_eig() >= -1e-8);
    }

    #[test]
    fn minimize_corner_entry() {
        // min X11 s.t. X >= 0, tr X = 1: optimum 0 at diag(0, 1)
        let mut p = trace_one_problem();
        p.objective = Some(vec![LinTerm {
            var: VarRef::Mat { var: 0, row: 0, col: 0 },
            coeff: 1.0,
        }]);
        let sol = solve(&p, &SolveOptions::default());
        assert_eq!(sol.status, SolveStatus::Feasible);
        let a = sol.assignment.unwrap();
        assert!(a.matrices[0][(0, 0)].abs() <= 1e-6, "X11 = {}", a.matrices[0][(0, 0)]);
        assert!((a.matrices[0][(1, 1)] - 1.0).abs() <= 1e-5);
    }

    #[test]
    fn contradictory_cones_reported_infeasible() {
        // X >= 0 and -X - I >= 0 cannot hold together
        let mut p = SdpProblem::new();
        let x = p.add_matrix_var("X", 2);
        p.require_var_psd(x);
        let mut entries = Vec::new();
        for i in 0..2 {
            for j in i..2 {
                entries.push(AffineEntry {
                    row: i,
                    col: j,
                    terms: vec![LinTerm {
                        var: VarRef::Mat { var: x, row: i, col: j },
                        coeff: -1.0,
                    }],
                    constant: if i == j { -1.0 } else { 0.0 },
                });
            }
        }
        p.psd_constraints.push(PsdConstraint::Expr(AffineMatrixExpr { side: 2, entries }));
        let sol = solve(&p, &SolveOptions::default());
        assert_eq!(sol.status, SolveStatus::Infeasible, "{}", sol.message);
    }

    #[test]
    fn validate_reports_perturbation() {
        let p = trace_one_problem();
        // hand-built exact solution
        let exact = Assignment {
            matrices: vec![DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 0.5])],
            scalars: vec![],
        };
        let rep = validate(&p, &exact);
        assert_eq!(rep.max_equality_residual, 0.0);
        assert!(rep.min_psd_eig() >= 0.5 - 1e-15);
        // perturb one entry by 1e-3
        let mut pert = exact.clone();
        pert.matrices[0][(0, 0)] += 1e-3;
        let rep = validate(&p, &pert);
        assert!((rep.max_equality_residual - 1e-3).abs() < 1e-12);
    }

    #[test]
    fn affine_psd_expression_shifted_cone() {
        // X - 2 I >= 0 with tr X = 5 -> feasible; X - 2I >= 0 with tr X = 3
        // is infeasible (trace of a PSD 2x2 shifted by 4).
        for (trace, expect) in [(5.0, SolveStatus::Feasible), (3.0, SolveStatus::Infeasible)] {
            let mut p = SdpProblem::new();
            let x = p.add_matrix_var("X", 2);
            let mut entries = Vec::new();
            for i in 0..2 {
                for j in i..2 {
                    entries.push(AffineEntry {
                        row: i,
                        col: j,
                        terms: vec![LinTerm {
                            var: VarRef::Mat { var: x, row: i, col: j },
                            coeff: 1.0,
                        }],
                        constant: if i == j { -2.0 } else { 0.0 },
                    });
                }
            }
            p.psd_constraints.push(PsdConstraint::Expr(AffineMatrixExpr { side: 2, entries }));
            p.add_equality(
                vec![
                    LinTerm { var: VarRef::Mat { var: x, row: 0, col: 0 }, coeff: 1.0 },
                    LinTerm { var: VarRef::Mat { var: x, row: 1, col: 1 }, coeff: 1.0 },
                ],
                trace,
            );
            let sol = solve(&p, &SolveOptions::default());
            assert_eq!(sol.status, expect, "trace {}: {}", trace, sol.message);
        }
    }

    #[test]
    fn scalar_variables_participate() {
        // s >= 0 (as 1x1 psd), s + X11 = 2, min s -> s = 0, X11 = 2
        let mut p = SdpProblem::new();
        let x = p.add_matrix_var("X", 1);
        p.require_var_psd(x);
        let s = p.add_scalar_var("s");
        let sm = p.add_matrix_var("S", 1);
        p.require_var_psd(sm);
        // tie scalar s to the 1x1 cone block
        p.add_equality(
            vec![
                LinTerm { var: VarRef::Scalar(s), coeff: 1.0 },
                LinTerm { var: VarRef::Mat { var: sm, row: 0, col: 0 }, coeff: -1.0 },
            ],
            0.0,
        );
        p.add_equality(
            vec![
                LinTerm { var: VarRef::Scalar(s), coeff: 1.0 },
                LinTerm { var: VarRef::Mat { var: x, row: 0, col: 0 }, coeff: 1.0 },
            ],
            2.0,
        );
        p.objective = Some(vec![LinTerm { var: VarRef::Scalar(s), coeff: 1.0 }]);
        let sol = solve(&p, &SolveOptions::default());
        assert_eq!(sol.status, SolveStatus::Feasible);
        let a = sol.assignment.unwrap();
        assert!(a.scalars[s].abs() <= 1e-6);
        assert!((a.matrices[x][(0, 0)] - 2.0).abs() <= 1e-5);
    }
}
