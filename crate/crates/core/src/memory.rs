//! On-chip memory model: dual-port BRAM partitions, the port-less register
//! layer, and the mapping of (subtree, level) onto partitions.

use std::ops::Range;

use crate::error::{Error, Result};
use crate::tree::{CompleteTree, KeyValue, NodeAddr};

/// Read ports per partition.
pub const PORTS_PER_PARTITION: u8 = 2;

/// Capacity of one BRAM block in bits (36 kbit).
pub const BRAM_BLOCK_BITS: usize = 36 * 1024;

/// Bytes per stored node: 32-bit key plus 32-bit value.
pub const NODE_BYTES: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Port {
    A,
    B,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReadOutcome {
    Granted(Port),
    Conflict,
}

/// A group of BRAMs storing one tree level of one subtree.
#[derive(Debug, Clone)]
pub struct BramPartition {
    pub id: usize,
    pub subtree: usize,
    pub level: u32,
    pub node_slice: Range<usize>,
    cycle: Option<u64>,
    granted: u8,
}

impl BramPartition {
    pub fn new(id: usize, subtree: usize, level: u32, node_slice: Range<usize>) -> Self {
        BramPartition {
            id,
            subtree,
            level,
            node_slice,
            cycle: None,
            granted: 0,
        }
    }

    pub fn ports(&self) -> u8 {
        PORTS_PER_PARTITION
    }

    pub fn len(&self) -> usize {
        self.node_slice.len()
    }

    pub fn is_empty(&self) -> bool {
        self.node_slice.is_empty()
    }

    pub fn contains(&self, addr: NodeAddr) -> bool {
        self.node_slice.contains(&addr.index())
    }

    /// 36-kbit blocks needed to hold this partition's nodes.
    pub fn bram_blocks(&self) -> usize {
        (self.len() * NODE_BYTES * 8).div_ceil(BRAM_BLOCK_BITS)
    }

    /// Requests a read port for `addr` in `cycle`. The first two requests of a
    /// cycle get ports A then B; the budget resets when the cycle changes.
    pub fn issue_read(&mut self, cycle: u64, addr: NodeAddr) -> Result<ReadOutcome> {
        if !self.contains(addr) {
            return Err(Error::Addressing {
                index: addr.index(),
                target: format!("partition {} (level {}, subtree {})", self.id, self.level, self.subtree),
            });
        }
        if self.cycle != Some(cycle) {
            self.cycle = Some(cycle);
            self.granted = 0;
        }
        let outcome = match self.granted {
            0 => ReadOutcome::Granted(Port::A),
            1 => ReadOutcome::Granted(Port::B),
            _ => return Ok(ReadOutcome::Conflict),
        };
        self.granted += 1;
        Ok(outcome)
    }

    /// Grants handed out in `cycle` so far.
    pub fn grants_in(&self, cycle: u64) -> u8 {
        if self.cycle == Some(cycle) {
            self.granted
        } else {
            0
        }
    }

    pub fn reset(&mut self) {
        self.cycle = None;
        self.granted = 0;
    }
}

/// Top tree levels held in registers. Any number of reads per cycle.
#[derive(Debug, Clone, Default)]
pub struct RegisterLayer {
    levels: u32,
    nodes: Vec<KeyValue>,
}

impl RegisterLayer {
    pub fn new(tree: &CompleteTree, levels: u32) -> Result<Self> {
        if levels > tree.levels() {
            return Err(Error::config(format!(
                "{levels} register levels exceed the {} levels of the tree",
                tree.levels()
            )));
        }
        let count = (1usize << levels) - 1;
        Ok(RegisterLayer {
            levels,
            nodes: tree.nodes()[..count].to_vec(),
        })
    }

    pub fn levels(&self) -> u32 {
        self.levels
    }

    pub fn nodes(&self) -> &[KeyValue] {
        &self.nodes
    }

    pub fn contains(&self, addr: NodeAddr) -> bool {
        addr.index() < self.nodes.len()
    }

    pub fn read_one(&self, addr: NodeAddr) -> Result<KeyValue> {
        self.nodes.get(addr.index()).copied().ok_or_else(|| Error::Addressing {
            index: addr.index(),
            target: format!("register layer ({} levels)", self.levels),
        })
    }

    /// Serves every read in the same cycle.
    pub fn register_read(&self, addrs: &[NodeAddr]) -> Result<Vec<KeyValue>> {
        addrs.iter().map(|&a| self.read_one(a)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayoutKind {
    Horizontal,
    Hybrid,
}

#[derive(Debug, Clone)]
pub struct PartitionLayout {
    pub kind: LayoutKind,
    pub height: u32,
    pub registers: RegisterLayer,
    pub num_subtrees: usize,
    /// Ordered subtree-major: `subtree * levels_per_subtree + (level - reg_levels)`.
    pub partitions: Vec<BramPartition>,
}

impl PartitionLayout {
    pub fn reg_levels(&self) -> u32 {
        self.registers.levels()
    }

    /// Partitions in each subtree's chain.
    pub fn levels_per_subtree(&self) -> usize {
        (self.height + 1 - self.reg_levels()) as usize
    }

    pub fn partition_index(&self, subtree: usize, level: u32) -> usize {
        debug_assert!(level >= self.reg_levels() && level <= self.height);
        subtree * self.levels_per_subtree() + (level - self.reg_levels()) as usize
    }

    pub fn partition(&self, subtree: usize, level: u32) -> &BramPartition {
        &self.partitions[self.partition_index(subtree, level)]
    }

    pub fn partition_mut(&mut self, subtree: usize, level: u32) -> &mut BramPartition {
        let i = self.partition_index(subtree, level);
        &mut self.partitions[i]
    }

    /// Nodes held in BRAM partitions plus registers.
    pub fn stored_nodes(&self) -> usize {
        self.registers.nodes().len() + self.partitions.iter().map(BramPartition::len).sum::<usize>()
    }

    pub fn bram_blocks(&self) -> usize {
        self.partitions.iter().map(BramPartition::bram_blocks).sum()
    }

    pub fn reset_ports(&mut self) {
        self.partitions.iter_mut().for_each(BramPartition::reset);
    }
}

/// One partition per level, partition `i` holding level `i`.
pub fn layout_horizontal(tree: &CompleteTree) -> PartitionLayout {
    layout_horizontal_with_registers(tree, 0).expect("zero register levels always fit")
}

/// Horizontal layout whose top `reg_levels` levels live in registers; every
/// remaining level is one partition.
pub fn layout_horizontal_with_registers(tree: &CompleteTree, reg_levels: u32) -> Result<PartitionLayout> {
    if reg_levels > tree.height() {
        return Err(Error::config(format!(
            "register levels {reg_levels} must not exceed tree height {}",
            tree.height()
        )));
    }
    let registers = RegisterLayer::new(tree, reg_levels)?;
    let partitions = (reg_levels..=tree.height())
        .enumerate()
        .map(|(id, level)| BramPartition::new(id, 0, level, tree.level_range(level)))
        .collect();
    Ok(PartitionLayout {
        kind: LayoutKind::Horizontal,
        height: tree.height(),
        registers,
        num_subtrees: 1,
        partitions,
    })
}

/// Registers for levels `0..reg_levels`; below them `num_subtrees` disjoint
/// subtrees, each with a private partition per remaining level.
pub fn layout_hybrid(tree: &CompleteTree, reg_levels: u32, num_subtrees: usize) -> Result<PartitionLayout> {
    if reg_levels < 1 || reg_levels > tree.height() {
        return Err(Error::config(format!(
            "hybrid layout needs 1 <= register levels <= height, got {reg_levels} for height {}",
            tree.height()
        )));
    }
    if num_subtrees != 1usize << reg_levels {
        return Err(Error::config(format!(
            "subtree count {num_subtrees} must equal 2^{reg_levels} = {}",
            1usize << reg_levels
        )));
    }
    let registers = RegisterLayer::new(tree, reg_levels)?;
    let mut partitions = Vec::with_capacity(num_subtrees * (tree.height() + 1 - reg_levels) as usize);
    for subtree in 0..num_subtrees {
        for level in reg_levels..=tree.height() {
            let width = 1usize << (level - reg_levels);
            let start = tree.level_range(level).start + subtree * width;
            partitions.push(BramPartition::new(partitions.len(), subtree, level, start..start + width));
        }
    }
    Ok(PartitionLayout {
        kind: LayoutKind::Hybrid,
        height: tree.height(),
        registers,
        num_subtrees,
        partitions,
    })
}

/// Subtree (below `reg_levels`) that contains `addr`.
pub fn subtree_of(addr: NodeAddr, reg_levels: u32) -> usize {
    debug_assert!(addr.level() >= reg_levels);
    addr.offset() >> (addr.level() - reg_levels)
}
