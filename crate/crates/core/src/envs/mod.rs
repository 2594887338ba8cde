//! Benchmark environments with their partitions and class declarations.

mod nroom;
pub mod random;
mod small;
mod taxi;

pub use nroom::{build_nroom, representative_room, NRoomSpec, TERMINAL_LABELS};
pub use small::{corridor_first_exit, ring, two_room_corridor};
pub use taxi::{build_taxi, TaxiSpec};

use crate::almdp::Almdp;
use crate::error::Result;
use crate::hierarchy::{ClassDeclarations, Decomposition, PartitionSpec};

/// An ALMDP bundled with a validated decomposition.
#[derive(Debug, Clone)]
pub struct EnvBundle {
    pub name: String,
    pub almdp: Almdp,
    pub partition: PartitionSpec,
    pub class_declarations: ClassDeclarations,
    /// Exit set `E`, sorted.
    pub exits: Vec<usize>,
    /// Start state of learners.
    pub restart_state: usize,
    /// `s*`: the smallest exit.
    pub oracle_reference_state: usize,
}

impl EnvBundle {
    /// Validates the decomposition and fills in `E` and `s*`.
    pub fn new(
        name: String,
        almdp: Almdp,
        partition: PartitionSpec,
        class_declarations: ClassDeclarations,
        restart_state: usize,
    ) -> Result<Self> {
        let d = Decomposition::new(almdp.clone(), partition.clone(), class_declarations.clone())?;
        Ok(EnvBundle {
            name,
            exits: d.exits().to_vec(),
            oracle_reference_state: d.reference_state(),
            almdp,
            partition,
            class_declarations,
            restart_state,
        })
    }

    pub fn decomposition(&self) -> Result<Decomposition> {
        Decomposition::new(
            self.almdp.clone(),
            self.partition.clone(),
            self.class_declarations.clone(),
        )
    }
}
