//! Current-injection AC power flow in rectangular coordinates.

mod flows;
mod model;
mod newton;
mod report;

pub use flows::{recover_flows, BranchFlow};
pub use model::{model_build, NodeType, PfError, PowerFlowModel, ZipTerm};
pub use newton::{apply_solution, nr_solve, nr_solve_from, solve_network, PfOptions, PfSolution, PfTiming, Start};
pub use report::pf_report;

#[cfg(test)]
mod tests;
