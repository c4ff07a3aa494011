//! Convex quadratic programming with dual multipliers.
//!
//! Problems have the form
//!
//! ```text
//!     minimize     ½ xᵀ P x + qᵀ x
//!     subject to   A_eq x  = b_eq
//!                  lower ≤ A_in x ≤ upper
//! ```
//!
//! and are solved by a primal-dual interior-point method (Mehrotra
//! predictor-corrector) followed by an active-set polish that recovers
//! vertex-exact primal values and multipliers.
//!
//! Multiplier conventions: `eq_duals[i]` is the marginal increase of the
//! optimal objective per unit increase of `b_eq[i]`; `ineq_duals[i]` is
//! positive when the upper side of row `i` binds and negative when the lower
//! side binds. Together they satisfy
//! `P x + q − A_eqᵀ eq_duals + A_inᵀ ineq_duals = 0`.

mod ipm;
pub(crate) mod ldl;
mod sparse;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
pub use sparse::CsrMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QpProblem {
    /// Symmetric positive semidefinite `n × n` matrix, both triangles stored.
    pub quadratic_cost: CsrMatrix,
    pub linear_cost: Vec<f64>,
    pub a_eq: CsrMatrix,
    pub b_eq: Vec<f64>,
    pub a_in: CsrMatrix,
    /// `-inf` marks an absent lower side.
    pub lower: Vec<f64>,
    /// `+inf` marks an absent upper side.
    pub upper: Vec<f64>,
}

impl QpProblem {
    /// A problem in `n` variables with no constraints and zero cost.
    pub fn new(n: usize) -> Self {
        Self {
            quadratic_cost: CsrMatrix::zeros(n, n),
            linear_cost: vec![0.0; n],
            a_eq: CsrMatrix::zeros(0, n),
            b_eq: Vec::new(),
            a_in: CsrMatrix::zeros(0, n),
            lower: Vec::new(),
            upper: Vec::new(),
        }
    }

    pub fn n(&self) -> usize {
        self.linear_cost.len()
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        let px = self.quadratic_cost.mul_vec(x);
        x.iter()
            .zip(&px)
            .zip(&self.linear_cost)
            .map(|((xi, pxi), qi)| 0.5 * xi * pxi + qi * xi)
            .sum()
    }

    /// Largest absolute violation of any constraint at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let eq = self
            .a_eq
            .mul_vec(x)
            .iter()
            .zip(&self.b_eq)
            .map(|(ax, b)| (ax - b).abs())
            .fold(0.0, f64::max);
        let ax = self.a_in.mul_vec(x);
        let ineq = ax
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(v, (l, u))| (l - v).max(v - u).max(0.0))
            .fold(0.0, f64::max);
        eq.max(ineq)
    }

    pub fn check(&self) -> Result<()> {
        let n = self.n();
        let fail = |m: String| Err(Error::Dimension(m));
        if self.quadratic_cost.nrows() != n || self.quadratic_cost.ncols() != n {
            return fail(format!("quadratic cost must be {n}x{n}"));
        }
        if !self.quadratic_cost.is_symmetric(1e-12) {
            return fail("quadratic cost is not symmetric".into());
        }
        if (0..n).any(|i| self.quadratic_cost.get(i, i) < 0.0) {
            return fail("quadratic cost has a negative diagonal entry".into());
        }
        if self.a_eq.ncols() != n || self.a_eq.nrows() != self.b_eq.len() {
            return fail("equality block dimensions disagree".into());
        }
        let m = self.a_in.nrows();
        if self.a_in.ncols() != n || self.lower.len() != m || self.upper.len() != m {
            return fail("inequality block dimensions disagree".into());
        }
        if self
            .lower
            .iter()
            .zip(&self.upper)
            .any(|(l, u)| l > u || l.is_nan() || u.is_nan())
        {
            return fail("inequality row with lower > upper".into());
        }
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        if !finite(&self.linear_cost) || !finite(&self.b_eq) {
            return fail("non-finite cost or right-hand side".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QpStatus {
    Optimal,
    Infeasible,
    MaxIterations,
}

/// Scaled residual norms at the returned point.
///
/// `primal` is the largest constraint violation divided by `1 + ‖rhs‖∞`,
/// `dual` the stationarity residual divided by `1 + ‖q‖∞`, and
/// `complementarity` the duality gap divided by `1 + |objective|`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct KktResiduals {
    pub primal: f64,
    pub dual: f64,
    pub complementarity: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.primal.max(self.dual).max(self.complementarity)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QpSolution {
    pub x: Vec<f64>,
    pub eq_duals: Vec<f64>,
    pub ineq_duals: Vec<f64>,
    pub status: QpStatus,
    pub kkt_residuals: KktResiduals,
    pub objective: f64,
    pub iterations: usize,
    /// Whether the active-set polish replaced the interior-point iterate.
    pub polished: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    pub tol: f64,
    pub max_iter: usize,
    pub polish: bool,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 10_000,
            polish: true,
        }
    }
}

/// Solves `p` to the given scaled KKT tolerance.
///
/// Errors only on malformed problems; infeasibility and iteration limits are
/// reported through [`QpSolution::status`].
pub fn solve_qp(p: &QpProblem, tol: f64, max_iter: usize) -> Result<QpSolution> {
    solve_qp_with(
        p,
        &SolverSettings {
            tol,
            max_iter,
            ..SolverSettings::default()
        },
    )
}

pub fn solve_qp_with(p: &QpProblem, settings: &SolverSettings) -> Result<QpSolution> {
    p.check()?;
    Ok(ipm::solve(p, settings))
}
