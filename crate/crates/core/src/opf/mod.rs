//! Polar AC optimal power flow and a primal-dual interior-point solver.

mod extension;
mod ipm;
mod model;
mod nlp;
mod report;

use thiserror::Error;

use crate::network::{Network, NetworkError};
use crate::powerflow::PfError;

pub use extension::{ExtRow, ExtVar, OpfExtension, VoltageSlack};
pub use ipm::{ipm_solve, kkt_residual, IpmOptions, KktNorms, OpfSolution, OpfStatus, OpfTiming, Scaling};
pub use model::{opf_build, BranchLimit, GenVars, OpfLayout, OpfProblem};
pub use nlp::{Nlp, NlpEval, Triplets};
pub use report::{apply_opf_solution, binding_constraints, opf_report};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OpfError {
    #[error("no slack bus in the island of node {0}")]
    MissingSlack(String),
    #[error("inconsistent bounds on {0}")]
    InconsistentBounds(String),
    #[error("point outside the domain: {0}")]
    DomainViolation(String),
    #[error("numerical breakdown: {0}")]
    NumericalBreakdown(String),
    #[error("extension {0}")]
    Extension(String),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    PowerFlow(#[from] PfError),
}

/// Builds and solves; the solution's timing includes the build.
pub fn opf_solve(
    net: &Network,
    extensions: Vec<Box<dyn OpfExtension>>,
    opts: &IpmOptions,
) -> Result<(OpfProblem, OpfSolution), OpfError> {
    let problem = opf_build(net, extensions)?;
    let mut sol = ipm_solve(&problem, opts)?;
    sol.timing.build_s = problem.build_s;
    Ok((problem, sol))
}

/// Evaluates the problem functions at `x` and the Lagrangian Hessian for
/// the given multipliers.
pub fn eval_all<P: Nlp + ?Sized>(
    p: &P,
    x: &[f64],
    lambda: &[f64],
    mu: &[f64],
) -> Result<(NlpEval, Triplets), OpfError> {
    Ok((p.eval(x)?, p.hessian(x, 1.0, lambda, mu)?))
}
