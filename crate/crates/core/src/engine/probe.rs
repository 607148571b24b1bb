use serde::{Deserialize, Serialize};

use crate::tree::NodeAddr;

/// Where a probe is in the pipeline. Progress is monotone through the
/// variants in declaration order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Location {
    Registers { level: u32 },
    /// Left the register layer, waiting for a buffer slot.
    Routed { subtree: usize },
    Buffered { subtree: usize },
    Partition { group: usize, level: u32 },
    Done,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProbeResult {
    Pending,
    Found { value: u32, cycle: u64 },
    NotFound { cycle: u64 },
}

/// One key in flight.
#[derive(Debug, Clone)]
pub struct SearchProbe {
    pub id: usize,
    pub key: u32,
    pub chunk_id: u64,
    pub chunk_index: usize,
    /// Replica for Dup, subtree for Hyb once routed, otherwise 0.
    pub group: usize,
    /// Node the probe compares against next.
    pub node: NodeAddr,
    pub location: Location,
    pub result: ProbeResult,
    pub admitted_cycle: u64,
    pub comparisons: u32,
}

/// Final per-key outcome of an engine run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyOutcome {
    pub key: u32,
    pub found: bool,
    pub value: Option<u32>,
    pub comparisons: u32,
    pub terminal_level: u32,
    pub admitted_cycle: u64,
    pub completion_cycle: u64,
}
