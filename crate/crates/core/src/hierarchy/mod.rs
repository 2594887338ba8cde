//! Hierarchical decomposition of ALMDPs into first-exit subtasks.
//!
//! A partition of `S` induces one first-exit subtask per block, whose
//! terminals are the outside states reachable in one step. Subtasks that are
//! equal up to a relabeling share a class and one bank of base LMDPs. Values
//! are stored only on the exit set `E` and recovered everywhere else by
//! composition.

mod bank;
mod decomposition;
mod eigen;
mod exit;
mod partition;

pub use bank::{common_rho, empty_banks, solve_all_banks, solve_base_bank, BaseLmdpBank};
pub use decomposition::{BaseValues, Decomposition, RepresentationSize, Slot};
pub use eigen::{algorithm1_eigenvector, algorithm1_eigenvector_traced, EigenConfig, EigenStep, HierarchicalSolution};
pub use exit::{
    build_exit_matrix, reconstruct_all, reconstruct_value, solve_exit_system, solve_exit_system_dense, ExitMatrix,
    ExitSolution, ExitValueVector,
};
pub use partition::{
    block_terminals, induce_subtasks, induced_representative, verify_subtask, BlockRole, ClassDeclarations,
    PartitionSpec, SubtaskDescriptor, CLASS_MATCH_TOL,
};
