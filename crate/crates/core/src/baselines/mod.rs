//! Classical sparsity-promoting reconstructions: LASSO by ISTA, group
//! LASSO, iterative hard thresholding, and (group) dictionary learning.
//!
//! Batched solvers take signals as rows and iterate all of them in lockstep.

mod basis;
mod dictionary;
mod group_lasso;
mod iht;
mod lasso;
mod solver;

pub use basis::{
    group_svd_bases, svd_basis, Dictionary, GroupBases, GroupSvd, SparsitySet, Subspace,
    SynthesisBasis,
};
pub use dictionary::{
    dict_learn, dl_reconstruct, dl_reconstruct_batch, group_dl_reconstruct,
    group_dl_reconstruct_batch, sparse_code, DictLearnConfig, DictLearnOutcome,
};
pub use group_lasso::{
    group_lasso, group_lasso_batch, group_lasso_objective, prox_weighted_l2, GroupLassoConfig,
    GroupLassoMode,
};
pub use iht::{iht, iht_batch, project_sparse};
pub use lasso::{
    ista_lasso, ista_lasso_batch, lasso_objective, lasso_optimality_residual, soft_threshold,
};
pub use solver::{resolve_step, SolverConfig, SolverReport, POWER_ITERATIONS};
