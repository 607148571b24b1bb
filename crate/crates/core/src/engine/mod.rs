//! Cycle-accurate lookup pipeline.
//!
//! Every cycle runs these phases in order:
//!
//! 0. admission of up to one chunk of keys (skipped while stalled);
//!    admitted probes make their first comparison this same cycle
//! 1. probes in partitions compare and descend one level
//! 2. each subtree buffer drains up to two probes into its first partition
//! 3. probes in the register layer compare and descend; those leaving the
//!    last register level are routed to a subtree (frozen while stalled)
//! 4. routed probes are inserted into buffers; a rejection stalls admission
//!
//! A slot freed in phase 2 is therefore reusable by phase 4 of the same
//! cycle, while a probe inserted in phase 4 is drained at the earliest in
//! the following cycle.
//!
//! A queue stall is lifted once nothing is pending and every buffer had a
//! free slot after phase 2. A direct stall is lifted as soon as nothing is
//! pending.

mod config;
mod probe;
mod stats;

use std::cmp::Ordering;
use std::hash::{DefaultHasher, Hash, Hasher};

pub use config::{derive_chunk_size, EngineConfig, Variant};
pub use probe::{KeyOutcome, Location, ProbeResult, SearchProbe};
pub use stats::{speedup, CycleStats, Event, RunResult};

use crate::buffers::{queue_label, MappingPolicy, Placement, SubtreeBuffer};
use crate::error::{Error, Result};
use crate::memory::{
    layout_horizontal_with_registers, layout_hybrid, PartitionLayout, ReadOutcome,
};
use crate::tree::{CompleteTree, Direction, KeyValue, NodeAddr};

/// Subtree below the last register level that a missed probe continues in:
/// `2 * offset` to the left of the register node, `2 * offset + 1` to the right.
pub fn route_subtree(key: u32, last_register: KeyValue, addr: NodeAddr) -> Result<usize> {
    let o = addr.offset();
    match key.cmp(&last_register.key) {
        Ordering::Less => Ok(2 * o),
        Ordering::Greater => Ok(2 * o + 1),
        Ordering::Equal => Err(Error::Internal(format!(
            "key {key} matched register node {} and must complete instead of routing",
            addr.index()
        ))),
    }
}

/// Stable identifier of a (tree, key list) pair, used to refuse speedups
/// between different workloads.
pub fn workload_id(tree: &CompleteTree, keys: &[u32]) -> u64 {
    let mut h = DefaultHasher::new();
    tree.height().hash(&mut h);
    keys.hash(&mut h);
    h.finish()
}

enum RegisterStep {
    Descend,
    Exit,
    Done,
}

pub struct Engine<'t> {
    config: EngineConfig,
    tree: &'t CompleteTree,
    layouts: Vec<PartitionLayout>,
    partition_base: Vec<usize>,
    partition_count: usize,
    buffers: Vec<SubtreeBuffer<usize>>,
    chunk_size: usize,

    keys: Vec<u32>,
    next_key: usize,
    probes: Vec<SearchProbe>,
    cycle: u64,
    chunks: u64,
    register_stage: Vec<usize>,
    partition_stage: Vec<usize>,
    pending: Vec<usize>,
    stalled: bool,
    stall_cycles: u64,
    completed: usize,

    record: bool,
    events: Vec<Event>,
    cycle_log: Vec<CycleStats>,
    max_port_grants: u8,
    max_buffer_occupancy: usize,
    max_in_flight: usize,
}

impl<'t> Engine<'t> {
    /// Instantiates layouts, buffers and an empty pipeline.
    pub fn new(config: EngineConfig, tree: &'t CompleteTree) -> Result<Self> {
        config.validate()?;
        if config.tree_height != tree.height() {
            return Err(Error::config(format!(
                "config is for height {} but the tree has height {}",
                config.tree_height,
                tree.height()
            )));
        }
        let (layouts, buffers) = match config.variant {
            Variant::Hrz | Variant::Dup { .. } => {
                let layouts = (0..config.variant.replicas())
                    .map(|_| layout_horizontal_with_registers(tree, config.reg_levels))
                    .collect::<Result<Vec<_>>>()?;
                (layouts, Vec::new())
            }
            Variant::Hyb { subtrees, policy } => {
                let layout = layout_hybrid(tree, config.reg_levels, subtrees)?;
                let buffers = (0..subtrees)
                    .map(|s| SubtreeBuffer::new(s, policy, config.buffer_slots))
                    .collect::<Result<Vec<_>>>()?;
                (vec![layout], buffers)
            }
        };
        let mut partition_base = Vec::with_capacity(layouts.len());
        let mut partition_count = 0;
        for l in &layouts {
            partition_base.push(partition_count);
            partition_count += l.partitions.len();
        }
        Ok(Engine {
            chunk_size: config.chunk_size(),
            config,
            tree,
            layouts,
            partition_base,
            partition_count,
            buffers,
            keys: Vec::new(),
            next_key: 0,
            probes: Vec::new(),
            cycle: 0,
            chunks: 0,
            register_stage: Vec::new(),
            partition_stage: Vec::new(),
            pending: Vec::new(),
            stalled: false,
            stall_cycles: 0,
            completed: 0,
            record: false,
            events: Vec::new(),
            cycle_log: Vec::new(),
            max_port_grants: 0,
            max_buffer_occupancy: 0,
            max_in_flight: 0,
        })
    }

    /// Keep the per-cycle stats and the event log in the run result.
    pub fn with_recording(mut self, record: bool) -> Self {
        self.record = record;
        self
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn chunk_size(&self) -> usize {
        self.chunk_size
    }

    pub fn layouts(&self) -> &[PartitionLayout] {
        &self.layouts
    }

    pub fn partition_count(&self) -> usize {
        self.partition_count
    }

    pub fn buffers(&self) -> &[SubtreeBuffer<usize>] {
        &self.buffers
    }

    pub fn probes(&self) -> &[SearchProbe] {
        &self.probes
    }

    pub fn cycle(&self) -> u64 {
        self.cycle
    }

    pub fn is_stalled(&self) -> bool {
        self.stalled
    }

    pub fn stall_cycles(&self) -> u64 {
        self.stall_cycles
    }

    pub fn in_flight(&self) -> usize {
        self.probes.len() - self.completed
    }

    pub fn keys_pending(&self) -> usize {
        self.keys.len() - self.next_key
    }

    pub fn is_finished(&self) -> bool {
        self.completed == self.keys.len()
    }

    pub fn memory_nodes(&self) -> usize {
        self.layouts.iter().map(PartitionLayout::stored_nodes).sum()
    }

    pub fn bram_blocks(&self) -> usize {
        self.layouts.iter().map(PartitionLayout::bram_blocks).sum()
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    /// Clears pipeline state and queues `keys` for admission.
    pub fn load(&mut self, keys: &[u32]) {
        self.keys = keys.to_vec();
        self.next_key = 0;
        self.probes = Vec::with_capacity(keys.len());
        self.cycle = 0;
        self.chunks = 0;
        self.register_stage.clear();
        self.partition_stage.clear();
        self.pending.clear();
        self.stalled = false;
        self.stall_cycles = 0;
        self.completed = 0;
        self.events.clear();
        self.cycle_log.clear();
        self.max_port_grants = 0;
        self.max_buffer_occupancy = 0;
        self.max_in_flight = 0;
        self.buffers.iter_mut().for_each(SubtreeBuffer::clear);
        self.layouts.iter_mut().for_each(PartitionLayout::reset_ports);
    }

    /// Runs `keys` to completion.
    pub fn run(&mut self, keys: &[u32]) -> Result<RunResult> {
        if keys.is_empty() {
            return Err(Error::config("key list must be non-empty"));
        }
        self.load(keys);
        let budget = keys.len() as u64 * (self.tree.height() as u64 + 2) * 4;
        while !self.is_finished() {
            if self.cycle >= budget {
                return Err(Error::Livelock {
                    cycles: self.cycle,
                    pending: self.keys.len() - self.completed,
                });
            }
            let stats = self.step()?;
            if self.record {
                self.cycle_log.push(stats);
            }
        }
        Ok(self.finish())
    }

    fn finish(&mut self) -> RunResult {
        let results = self
            .probes
            .iter()
            .map(|p| {
                let (found, value, cycle) = match p.result {
                    ProbeResult::Found { value, cycle } => (true, Some(value), cycle),
                    ProbeResult::NotFound { cycle } => (false, None, cycle),
                    ProbeResult::Pending => unreachable!("finish called with probes in flight"),
                };
                KeyOutcome {
                    key: p.key,
                    found,
                    value,
                    comparisons: p.comparisons,
                    terminal_level: p.comparisons - 1,
                    admitted_cycle: p.admitted_cycle,
                    completion_cycle: cycle,
                }
            })
            .collect();
        let total_cycles = self.cycle;
        RunResult {
            config: self.config,
            total_cycles,
            keys_processed: self.keys.len(),
            throughput: self.keys.len() as f64 / total_cycles as f64,
            stall_cycles: self.stall_cycles,
            results,
            memory_nodes: self.memory_nodes(),
            bram_blocks: self.bram_blocks(),
            max_port_grants: self.max_port_grants,
            max_buffer_occupancy: self.max_buffer_occupancy,
            max_in_flight: self.max_in_flight,
            workload_id: workload_id(self.tree, &self.keys),
            cycle_log: std::mem::take(&mut self.cycle_log),
            events: std::mem::take(&mut self.events),
        }
    }

    /// Advances the pipeline by one clock cycle.
    pub fn step(&mut self) -> Result<CycleStats> {
        self.cycle += 1;
        let frozen = self.stalled;
        let mut stats = CycleStats {
            cycle: self.cycle,
            stalled: frozen,
            port_grants: vec![0; self.partition_count],
            ..CycleStats::default()
        };

        if frozen {
            self.stall_cycles += 1;
        } else {
            stats.admitted = self.admit();
        }

        let mut next_partition = Vec::with_capacity(self.partition_stage.len() + self.chunk_size);
        for pid in std::mem::take(&mut self.partition_stage) {
            if self.partition_compare(pid, &mut stats)? {
                next_partition.push(pid);
            }
        }

        let first_level = self.config.reg_levels;
        for b in 0..self.buffers.len() {
            for d in self.buffers[b].drain() {
                self.log(Event::BufferDrain {
                    cycle: self.cycle,
                    probe: d.item,
                    buffer: b,
                    slot: d.slot,
                    port: d.port,
                });
                self.probes[d.item].location = Location::Partition {
                    group: b,
                    level: first_level,
                };
                if self.partition_compare(d.item, &mut stats)? {
                    next_partition.push(d.item);
                }
            }
        }

        let mut routed = Vec::new();
        if !frozen {
            let mut next_register = Vec::with_capacity(self.register_stage.len());
            for pid in std::mem::take(&mut self.register_stage) {
                match self.register_compare(pid, &mut stats)? {
                    RegisterStep::Descend => next_register.push(pid),
                    RegisterStep::Exit if self.config.variant.is_hybrid() => routed.push(pid),
                    RegisterStep::Exit => next_partition.push(pid),
                    RegisterStep::Done => {}
                }
            }
            self.register_stage = next_register;
        }
        self.partition_stage = next_partition;

        // Queue stalls end once every buffer shows a free slot after draining.
        let room_after_drain = self.buffers.iter().all(|b| b.free_slots() > 0);
        if let Some(policy) = self.config.variant.policy() {
            self.insert(routed, policy)?;
            if !self.pending.is_empty() {
                self.stalled = true;
            } else if self.stalled {
                self.stalled = match policy {
                    MappingPolicy::Direct => false,
                    MappingPolicy::Queue => !room_after_drain,
                };
            }
        }

        stats.buffer_occupancy = self.buffers.iter().map(SubtreeBuffer::len).collect();
        // Probes that occupied a stage at some point during this cycle.
        stats.in_flight = self.in_flight() + stats.completed;
        self.max_in_flight = self.max_in_flight.max(stats.in_flight);
        if let Some(&m) = stats.port_grants.iter().max() {
            self.max_port_grants = self.max_port_grants.max(m);
        }
        if let Some(&m) = stats.buffer_occupancy.iter().max() {
            self.max_buffer_occupancy = self.max_buffer_occupancy.max(m);
        }
        Ok(stats)
    }

    fn log(&mut self, event: Event) {
        if self.record {
            self.events.push(event);
        }
    }

    /// Turns up to one chunk of pending keys into probes at the entry stage.
    fn admit(&mut self) -> usize {
        let n = self.chunk_size.min(self.keys.len() - self.next_key);
        if n == 0 {
            return 0;
        }
        let chunk_id = self.chunks;
        self.chunks += 1;
        let dup = matches!(self.config.variant, Variant::Dup { .. });
        for chunk_index in 0..n {
            let id = self.probes.len();
            let group = if dup { chunk_index / 2 } else { 0 };
            let location = if self.config.reg_levels > 0 {
                self.register_stage.push(id);
                Location::Registers { level: 0 }
            } else {
                self.partition_stage.push(id);
                Location::Partition { group, level: 0 }
            };
            self.probes.push(SearchProbe {
                id,
                key: self.keys[self.next_key + chunk_index],
                chunk_id,
                chunk_index,
                group,
                node: NodeAddr::ROOT,
                location,
                result: ProbeResult::Pending,
                admitted_cycle: self.cycle,
                comparisons: 0,
            });
            self.log(Event::Admitted {
                cycle: self.cycle,
                probe: id,
                chunk_id,
                chunk_index,
            });
        }
        self.next_key += n;
        n
    }

    /// Compares the probe against `node`. Returns the direction to descend,
    /// or `None` once the probe has completed.
    fn compare(&mut self, pid: usize, node: KeyValue, level: u32) -> Option<Direction> {
        let cycle = self.cycle;
        let height = self.tree.height();
        let probe = &mut self.probes[pid];
        probe.comparisons += 1;
        let dir = match probe.key.cmp(&node.key) {
            Ordering::Equal => {
                probe.result = ProbeResult::Found {
                    value: node.value,
                    cycle,
                };
                None
            }
            _ if level == height => {
                probe.result = ProbeResult::NotFound { cycle };
                None
            }
            Ordering::Less => Some(Direction::Left),
            Ordering::Greater => Some(Direction::Right),
        };
        if dir.is_none() {
            probe.location = Location::Done;
            let found = matches!(probe.result, ProbeResult::Found { .. });
            self.completed += 1;
            self.log(Event::Completed {
                cycle,
                probe: pid,
                found,
            });
        }
        dir
    }

    /// (layout, subtree within layout) holding a probe group's partitions.
    fn group_coords(&self, group: usize) -> (usize, usize) {
        if self.config.variant.is_hybrid() {
            (0, group)
        } else {
            (group, 0)
        }
    }

    /// One partition read and comparison. Returns true if the probe descends.
    fn partition_compare(&mut self, pid: usize, stats: &mut CycleStats) -> Result<bool> {
        let probe = &self.probes[pid];
        let Location::Partition { group, level } = probe.location else {
            return Err(Error::Internal(format!(
                "probe {pid} in partition stage at {:?}",
                probe.location
            )));
        };
        let node = probe.node;
        let (li, subtree) = self.group_coords(group);
        let layout = &mut self.layouts[li];
        let index = layout.partition_index(subtree, level);
        let flat = self.partition_base[li] + index;
        let port = match layout.partitions[index].issue_read(self.cycle, node)? {
            ReadOutcome::Granted(port) => port,
            ReadOutcome::Conflict => {
                return Err(Error::PortConflict {
                    partition: flat,
                    cycle: self.cycle,
                })
            }
        };
        stats.port_grants[flat] += 1;
        self.log(Event::PartitionRead {
            cycle: self.cycle,
            probe: pid,
            partition: flat,
            level,
            port,
        });
        let kv = self.tree.node(node);
        let completed_before = self.completed;
        match self.compare(pid, kv, level) {
            Some(dir) => {
                let probe = &mut self.probes[pid];
                probe.node = node.child_unchecked(dir);
                probe.location = Location::Partition {
                    group,
                    level: level + 1,
                };
                Ok(true)
            }
            None => {
                stats.completed += self.completed - completed_before;
                Ok(false)
            }
        }
    }

    fn register_compare(&mut self, pid: usize, stats: &mut CycleStats) -> Result<RegisterStep> {
        let probe = &self.probes[pid];
        let Location::Registers { level } = probe.location else {
            return Err(Error::Internal(format!(
                "probe {pid} in register stage at {:?}",
                probe.location
            )));
        };
        let (node, group, key) = (probe.node, probe.group, probe.key);
        let (li, _) = self.group_coords(group);
        let kv = self.layouts[li].registers.read_one(node)?;
        self.log(Event::RegisterRead {
            cycle: self.cycle,
            probe: pid,
            level,
        });
        let Some(dir) = self.compare(pid, kv, level) else {
            stats.completed += 1;
            return Ok(RegisterStep::Done);
        };
        let child = node.child_unchecked(dir);
        let next_level = level + 1;
        if next_level < self.config.reg_levels {
            let probe = &mut self.probes[pid];
            probe.node = child;
            probe.location = Location::Registers { level: next_level };
            return Ok(RegisterStep::Descend);
        }
        if self.config.variant.is_hybrid() {
            let subtree = route_subtree(key, kv, node)?;
            let probe = &mut self.probes[pid];
            probe.node = child;
            probe.group = subtree;
            probe.location = Location::Routed { subtree };
            self.log(Event::Routed {
                cycle: self.cycle,
                probe: pid,
                subtree,
            });
        } else {
            let probe = &mut self.probes[pid];
            probe.node = child;
            probe.location = Location::Partition {
                group,
                level: next_level,
            };
        }
        Ok(RegisterStep::Exit)
    }

    /// Inserts previously rejected probes, then this cycle's routed probes.
    fn insert(&mut self, routed: Vec<usize>, policy: MappingPolicy) -> Result<()> {
        let mut candidates = std::mem::take(&mut self.pending);
        candidates.extend(routed);
        if candidates.is_empty() {
            return Ok(());
        }
        match policy {
            MappingPolicy::Direct => {
                for pid in candidates {
                    let (buffer, chunk_index) = (self.probes[pid].group, self.probes[pid].chunk_index);
                    match self.buffers[buffer].direct_insert(chunk_index, pid)? {
                        Placement::Accepted { slot } => self.placed(pid, buffer, slot),
                        Placement::SlotOccupied(pid) | Placement::BufferFull(pid) => {
                            self.rejected(pid, buffer)
                        }
                    }
                }
            }
            MappingPolicy::Queue => {
                // Candidates are already in admission order, so their position
                // stands in for the chunk index when labelling.
                let targets: Vec<(usize, usize)> = candidates
                    .iter()
                    .enumerate()
                    .map(|(i, &pid)| (self.probes[pid].group, i))
                    .collect();
                let mut labels = queue_label(&targets);
                labels.sort_by_key(|l| (l.buffer, l.ordinal));
                let mut i = 0;
                while i < labels.len() {
                    let buffer = labels[i].buffer;
                    let mut accepted = 0;
                    let mut blocked = false;
                    while i < labels.len() && labels[i].buffer == buffer {
                        let label = labels[i];
                        let pid = candidates[label.index];
                        i += 1;
                        if blocked {
                            self.rejected(pid, buffer);
                            continue;
                        }
                        match self.buffers[buffer].queue_insert(pid, &label) {
                            Placement::Accepted { slot } => {
                                accepted += 1;
                                self.placed(pid, buffer, slot);
                            }
                            Placement::BufferFull(pid) | Placement::SlotOccupied(pid) => {
                                blocked = true;
                                self.rejected(pid, buffer);
                            }
                        }
                    }
                    self.buffers[buffer].advance_write(accepted);
                }
            }
        }
        Ok(())
    }

    fn placed(&mut self, pid: usize, buffer: usize, slot: usize) {
        let probe = &mut self.probes[pid];
        probe.location = Location::Buffered { subtree: buffer };
        let chunk_index = probe.chunk_index;
        self.log(Event::BufferInsert {
            cycle: self.cycle,
            probe: pid,
            buffer,
            slot,
            chunk_index,
        });
    }

    fn rejected(&mut self, pid: usize, buffer: usize) {
        self.pending.push(pid);
        self.log(Event::BufferReject {
            cycle: self.cycle,
            probe: pid,
            buffer,
        });
    }
}

/// Builds an engine for `config` over `tree`.
pub fn build_engine(config: EngineConfig, tree: &CompleteTree) -> Result<Engine<'_>> {
    Engine::new(config, tree)
}
