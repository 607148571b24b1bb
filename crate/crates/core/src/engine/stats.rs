use serde::{Deserialize, Serialize};

use super::config::EngineConfig;
use super::probe::KeyOutcome;
use crate::error::{Error, Result};
use crate::memory::Port;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CycleStats {
    pub cycle: u64,
    pub admitted: usize,
    pub completed: usize,
    pub stalled: bool,
    /// Grants per partition this cycle, indexed by flat partition id.
    pub port_grants: Vec<u8>,
    /// Occupancy of every buffer after this cycle's inserts.
    pub buffer_occupancy: Vec<usize>,
    pub in_flight: usize,
}

/// Audit trail of a run, recorded only when enabled on the engine.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Event {
    Admitted { cycle: u64, probe: usize, chunk_id: u64, chunk_index: usize },
    RegisterRead { cycle: u64, probe: usize, level: u32 },
    PartitionRead { cycle: u64, probe: usize, partition: usize, level: u32, port: Port },
    Routed { cycle: u64, probe: usize, subtree: usize },
    BufferInsert { cycle: u64, probe: usize, buffer: usize, slot: usize, chunk_index: usize },
    BufferReject { cycle: u64, probe: usize, buffer: usize },
    BufferDrain { cycle: u64, probe: usize, buffer: usize, slot: usize, port: Port },
    Completed { cycle: u64, probe: usize, found: bool },
}

impl Event {
    pub fn cycle(&self) -> u64 {
        match *self {
            Event::Admitted { cycle, .. }
            | Event::RegisterRead { cycle, .. }
            | Event::PartitionRead { cycle, .. }
            | Event::Routed { cycle, .. }
            | Event::BufferInsert { cycle, .. }
            | Event::BufferReject { cycle, .. }
            | Event::BufferDrain { cycle, .. }
            | Event::Completed { cycle, .. } => cycle,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunResult {
    pub config: EngineConfig,
    pub total_cycles: u64,
    pub keys_processed: usize,
    /// Keys per cycle.
    pub throughput: f64,
    pub stall_cycles: u64,
    pub results: Vec<KeyOutcome>,
    /// Nodes stored across all replicas, registers included.
    pub memory_nodes: usize,
    pub bram_blocks: usize,
    pub max_port_grants: u8,
    pub max_buffer_occupancy: usize,
    pub max_in_flight: usize,
    /// Identifies the (tree, key list) pair the run consumed.
    pub workload_id: u64,
    #[serde(skip)]
    pub cycle_log: Vec<CycleStats>,
    #[serde(skip)]
    pub events: Vec<Event>,
}

/// `baseline.total_cycles / result.total_cycles` for runs over the same tree
/// and key list.
pub fn speedup(result: &RunResult, baseline: &RunResult) -> Result<f64> {
    if result.workload_id != baseline.workload_id || result.keys_processed != baseline.keys_processed {
        return Err(Error::Mismatch(format!(
            "{} and {} ran different workloads",
            result.config.variant, baseline.config.variant
        )));
    }
    if result.total_cycles == 0 {
        return Err(Error::Mismatch("run has zero cycles".into()));
    }
    Ok(baseline.total_cycles as f64 / result.total_cycles as f64)
}
