//! Complete binary search tree stored in level order, plus the functional
//! lookup used as the reference for every engine run.
//!
//! The node at in-order position `p` holds key `2p + 1` and value `p`, so
//! every odd key in `1..2 * node_count` is a hit and every even key is a
//! miss.

use std::cmp::Ordering;

use crate::error::{Error, Result};

/// Largest supported height (2^26 - 1 nodes).
pub const MAX_HEIGHT: u32 = 25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct KeyValue {
    pub key: u32,
    pub value: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    Left,
    Right,
}

/// Flat level-order index of a node; the root is 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeAddr(pub usize);

impl NodeAddr {
    pub const ROOT: NodeAddr = NodeAddr(0);

    pub fn index(self) -> usize {
        self.0
    }

    pub fn level(self) -> u32 {
        (self.0 + 1).ilog2()
    }

    /// Position of the node within its level, counted from the left.
    pub fn offset(self) -> usize {
        self.0 + 1 - (1usize << self.level())
    }

    pub fn from_level_offset(level: u32, offset: usize) -> Self {
        debug_assert!(offset < 1usize << level);
        NodeAddr((1usize << level) - 1 + offset)
    }

    /// Child index without a leaf check. Use [`CompleteTree::child`] when the
    /// tree height is known.
    pub fn child_unchecked(self, dir: Direction) -> Self {
        match dir {
            Direction::Left => NodeAddr(2 * self.0 + 1),
            Direction::Right => NodeAddr(2 * self.0 + 2),
        }
    }

    pub fn parent(self) -> Option<Self> {
        (self.0 > 0).then(|| NodeAddr((self.0 - 1) / 2))
    }
}

/// Result of the reference descent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LookupResult {
    pub found: bool,
    pub value: Option<u32>,
    /// Number of nodes visited, always `terminal_level + 1`.
    pub comparisons: u32,
    pub terminal_level: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompleteTree {
    height: u32,
    nodes: Vec<KeyValue>,
}

impl CompleteTree {
    /// Builds a complete tree of `height + 1` levels using the odd-key rule.
    pub fn build(height: u32) -> Result<Self> {
        if height > MAX_HEIGHT {
            return Err(Error::config(format!(
                "tree height {height} out of range 0..={MAX_HEIGHT}"
            )));
        }
        let count = (1usize << (height + 1)) - 1;
        let nodes = (0..count)
            .map(|i| {
                let p = in_order_position(height, NodeAddr(i));
                KeyValue {
                    key: 2 * p as u32 + 1,
                    value: p as u32,
                }
            })
            .collect();
        Ok(CompleteTree { height, nodes })
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn levels(&self) -> u32 {
        self.height + 1
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[KeyValue] {
        &self.nodes
    }

    pub fn node(&self, addr: NodeAddr) -> KeyValue {
        self.nodes[addr.0]
    }

    pub fn get(&self, addr: NodeAddr) -> Option<KeyValue> {
        self.nodes.get(addr.0).copied()
    }

    /// Flat index range of the nodes at `level`.
    pub fn level_range(&self, level: u32) -> std::ops::Range<usize> {
        debug_assert!(level <= self.height);
        (1usize << level) - 1..(1usize << (level + 1)) - 1
    }

    pub fn is_leaf(&self, addr: NodeAddr) -> bool {
        addr.level() == self.height
    }

    pub fn child(&self, addr: NodeAddr, dir: Direction) -> Result<NodeAddr> {
        if addr.0 >= self.nodes.len() || addr.level() >= self.height {
            return Err(Error::NoChild { index: addr.0 });
        }
        Ok(addr.child_unchecked(dir))
    }

    /// Key stored at in-order position `p`.
    pub fn key_at_rank(&self, p: usize) -> u32 {
        2 * p as u32 + 1
    }

    /// Largest key present in the tree.
    pub fn max_key(&self) -> u32 {
        2 * self.nodes.len() as u32 - 1
    }

    pub fn lookup(&self, key: u32) -> LookupResult {
        reference_lookup(self, key)
    }
}

/// In-order position of a level-order node in a complete tree of the given
/// height: `(2 * offset + 1) * 2^(height - level) - 1`.
pub fn in_order_position(height: u32, addr: NodeAddr) -> usize {
    let level = addr.level();
    ((2 * addr.offset() + 1) << (height - level)) - 1
}

/// Plain BST descent from the root.
pub fn reference_lookup(tree: &CompleteTree, key: u32) -> LookupResult {
    let mut addr = NodeAddr::ROOT;
    loop {
        let node = tree.node(addr);
        let level = addr.level();
        let dir = match key.cmp(&node.key) {
            Ordering::Equal => {
                return LookupResult {
                    found: true,
                    value: Some(node.value),
                    comparisons: level + 1,
                    terminal_level: level,
                }
            }
            Ordering::Less => Direction::Left,
            Ordering::Greater => Direction::Right,
        };
        if level == tree.height() {
            return LookupResult {
                found: false,
                value: None,
                comparisons: level + 1,
                terminal_level: level,
            };
        }
        addr = addr.child_unchecked(dir);
    }
}
