//! Key-set generators (Equal, Random, Split) and the binary key-set file.
//!
//! Random sets use `ChaCha8Rng` seeded with `seed_from_u64`, which produces
//! the same stream on every platform.
//!
//! File layout, all integers little-endian:
//!
//! ```text
//! 0..4    magic "BSTK"
//! 4..8    format version (1)
//! 8..12   kind code (0 equal, 1 random, 2 split, 3 custom)
//! 12..16  key count
//! 16..    keys, u32 each
//! ```

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::memory::subtree_of;
use crate::tree::{CompleteTree, NodeAddr};

/// Name of the generator used for random sets, reported in run metadata.
pub const PRNG_NAME: &str = "ChaCha8Rng (rand_chacha 0.3, seed_from_u64)";

pub const KEYFILE_MAGIC: &[u8; 4] = b"BSTK";
pub const KEYFILE_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KeySetKind {
    Equal,
    Random,
    Split,
    /// Loaded from a file whose origin is unknown.
    Custom,
}

impl KeySetKind {
    fn code(self) -> u32 {
        match self {
            KeySetKind::Equal => 0,
            KeySetKind::Random => 1,
            KeySetKind::Split => 2,
            KeySetKind::Custom => 3,
        }
    }

    fn from_code(code: u32) -> Result<Self> {
        Ok(match code {
            0 => KeySetKind::Equal,
            1 => KeySetKind::Random,
            2 => KeySetKind::Split,
            3 => KeySetKind::Custom,
            _ => return Err(Error::KeyFile(format!("unknown kind code {code}"))),
        })
    }
}

impl fmt::Display for KeySetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KeySetKind::Equal => "equal",
            KeySetKind::Random => "random",
            KeySetKind::Split => "split",
            KeySetKind::Custom => "custom",
        })
    }
}

impl FromStr for KeySetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "equal" => Ok(KeySetKind::Equal),
            "random" => Ok(KeySetKind::Random),
            "split" => Ok(KeySetKind::Split),
            "custom" => Ok(KeySetKind::Custom),
            other => Err(Error::config(format!(
                "unknown key set kind '{other}' (expected equal, random or split)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeySet {
    pub kind: KeySetKind,
    pub seed: Option<u64>,
    pub keys: Vec<u32>,
}

impl KeySet {
    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }
}

/// `size` copies of the key at in-order leaf position `leaf_rank`.
pub fn gen_equal(tree: &CompleteTree, size: usize, leaf_rank: usize) -> Result<KeySet> {
    let leaves = 1usize << tree.height();
    if leaf_rank >= leaves {
        return Err(Error::config(format!(
            "leaf rank {leaf_rank} out of range for {leaves} leaves"
        )));
    }
    let leaf = NodeAddr::from_level_offset(tree.height(), leaf_rank);
    Ok(KeySet {
        kind: KeySetKind::Equal,
        seed: None,
        keys: vec![tree.node(leaf).key; size],
    })
}

/// Keys drawn uniformly over the tree's nodes (hits only).
pub fn gen_random(tree: &CompleteTree, size: usize, seed: u64) -> KeySet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = tree.node_count();
    let keys = (0..size).map(|_| tree.key_at_rank(rng.gen_range(0..n))).collect();
    KeySet {
        kind: KeySetKind::Random,
        seed: Some(seed),
        keys,
    }
}

/// Uniform over `1..=2 * node_count`: odd draws hit, even draws miss.
pub fn gen_random_with_misses(tree: &CompleteTree, size: usize, seed: u64) -> KeySet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hi = 2 * tree.node_count() as u32;
    let keys = (0..size).map(|_| rng.gen_range(1..=hi)).collect();
    KeySet {
        kind: KeySetKind::Random,
        seed: Some(seed),
        keys,
    }
}

/// Key `i` lies below the register layer in subtree `i mod T`. Within a
/// subtree the keys cycle through its nodes leaves first (deepest level,
/// left to right, then the level above).
pub fn gen_split(tree: &CompleteTree, size: usize, num_subtrees: usize) -> Result<KeySet> {
    if num_subtrees == 0 || !num_subtrees.is_power_of_two() {
        return Err(Error::config(format!(
            "split subtree count {num_subtrees} must be a power of two"
        )));
    }
    let reg_levels = num_subtrees.trailing_zeros();
    if reg_levels > tree.height() {
        return Err(Error::config(format!(
            "{num_subtrees} subtrees need height >= {reg_levels}, tree has {}",
            tree.height()
        )));
    }
    let per_subtree = (1usize << (tree.height() - reg_levels + 1)) - 1;
    let keys = (0..size)
        .map(|i| {
            let subtree = i % num_subtrees;
            let j = (i / num_subtrees) % per_subtree;
            tree.node(split_node(tree.height(), reg_levels, subtree, j)).key
        })
        .collect();
    Ok(KeySet {
        kind: KeySetKind::Split,
        seed: None,
        keys,
    })
}

/// `j`-th node of the subtree in leaves-first order.
fn split_node(height: u32, reg_levels: u32, subtree: usize, mut j: usize) -> NodeAddr {
    let mut level = height;
    loop {
        let width = 1usize << (level - reg_levels);
        if j < width {
            let node = NodeAddr::from_level_offset(level, subtree * width + j);
            debug_assert_eq!(subtree_of(node, reg_levels), subtree);
            return node;
        }
        j -= width;
        level -= 1;
    }
}

pub fn write_keyset(w: &mut impl Write, set: &KeySet) -> std::io::Result<()> {
    let count = u32::try_from(set.keys.len())
        .map_err(|_| std::io::Error::new(std::io::ErrorKind::InvalidInput, "more than u32::MAX keys"))?;
    let mut buf = Vec::with_capacity(16 + 4 * set.keys.len());
    buf.extend_from_slice(KEYFILE_MAGIC);
    buf.extend_from_slice(&KEYFILE_VERSION.to_le_bytes());
    buf.extend_from_slice(&set.kind.code().to_le_bytes());
    buf.extend_from_slice(&count.to_le_bytes());
    for k in &set.keys {
        buf.extend_from_slice(&k.to_le_bytes());
    }
    w.write_all(&buf)
}

pub fn read_keyset(r: &mut impl Read) -> Result<KeySet> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)
        .map_err(|e| Error::KeyFile(e.to_string()))?;
    if bytes.len() < 16 {
        return Err(Error::KeyFile(format!("{} bytes is shorter than the header", bytes.len())));
    }
    if &bytes[..4] != KEYFILE_MAGIC {
        return Err(Error::KeyFile("bad magic".into()));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().expect("4-byte slice"));
    let version = word(4);
    if version != KEYFILE_VERSION {
        return Err(Error::KeyFile(format!("unsupported version {version}")));
    }
    let kind = KeySetKind::from_code(word(8))?;
    let count = word(12) as usize;
    let body = &bytes[16..];
    if body.len() != 4 * count {
        return Err(Error::KeyFile(format!(
            "header says {count} keys but body holds {} bytes",
            body.len()
        )));
    }
    let keys = body
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().expect("4-byte chunk")))
        .collect();
    Ok(KeySet {
        kind,
        seed: None,
        keys,
    })
}

pub fn save_keyset(path: &Path, set: &KeySet) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_keyset(&mut f, set).map_err(|e| Error::io(path, e))
}

pub fn load_keyset(path: &Path) -> Result<KeySet> {
    let mut f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_keyset(&mut f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::route_subtree;
    use proptest::prelude::*;

    /// Subtree a key is routed to after `reg_levels` register levels, or
    /// `None` if it hits inside the registers. Walks the tree independently
    /// of the engine.
    fn routed_subtree(tree: &CompleteTree, key: u32, reg_levels: u32) -> Option<usize> {
        let mut addr = NodeAddr::ROOT;
        for _ in 0..reg_levels {
            let kv = tree.node(addr);
            if kv.key == key {
                return None;
            }
            let sub = route_subtree(key, kv, addr).unwrap();
            addr = NodeAddr::from_level_offset(addr.level() + 1, sub);
        }
        Some(addr.offset())
    }

    #[test]
    fn equal_leftmost_leaf() {
        let t = CompleteTree::build(2).unwrap();
        assert_eq!(gen_equal(&t, 4, 0).unwrap().keys, vec![1, 1, 1, 1]);
        assert!(gen_equal(&t, 0, 0).unwrap().is_empty());
        assert!(gen_equal(&t, 1, 4).is_err());
        assert_eq!(gen_equal(&t, 1, 3).unwrap().keys, vec![13]);
    }

    #[test]
    fn equal_keys_resolve_at_leaf() {
        let t = CompleteTree::build(9).unwrap();
        for rank in [0, 17, 511] {
            let set = gen_equal(&t, 3, rank).unwrap();
            for k in set.keys {
                assert_eq!(t.lookup(k).terminal_level, 9);
            }
        }
    }

    #[test]
    fn random_is_deterministic_and_hits() {
        let t = CompleteTree::build(15).unwrap();
        let a = gen_random(&t, 65536, 1);
        let b = gen_random(&t, 65536, 1);
        assert_eq!(a, b);
        assert_ne!(a.keys, gen_random(&t, 65536, 2).keys);
        assert!(a.keys.iter().all(|&k| t.lookup(k).found));
    }

    #[test]
    fn random_subtree_histogram_is_flat() {
        let t = CompleteTree::build(15).unwrap();
        let set = gen_random(&t, 65536, 1);
        let mut counts = [0usize; 8];
        for &k in &set.keys {
            if let Some(s) = routed_subtree(&t, k, 3) {
                counts[s] += 1;
            }
        }
        let expected = 65536.0 / 8.0;
        for c in counts {
            assert!((c as f64 - expected).abs() / expected < 0.05, "{counts:?}");
        }
    }

    #[test]
    fn random_with_misses_mixes() {
        let t = CompleteTree::build(6).unwrap();
        let set = gen_random_with_misses(&t, 2000, 9);
        let hits = set.keys.iter().filter(|&&k| t.lookup(k).found).count();
        assert!(hits > 800 && hits < 1200, "{hits}");
    }

    #[test]
    fn split_round_robin_targets() {
        let t = CompleteTree::build(6).unwrap();
        let set = gen_split(&t, 8, 4).unwrap();
        let targets: Vec<usize> = set.keys.iter().map(|&k| routed_subtree(&t, k, 2).unwrap()).collect();
        assert_eq!(targets, vec![0, 1, 2, 3, 0, 1, 2, 3]);
    }

    #[test]
    fn split_single_subtree() {
        let t = CompleteTree::build(3).unwrap();
        let set = gen_split(&t, 20, 1).unwrap();
        // Every node of the tree, leaves first, then wrap around.
        let mut expected: Vec<u32> = Vec::new();
        for level in (0..=3).rev() {
            expected.extend(t.nodes()[t.level_range(level)].iter().map(|n| n.key));
        }
        expected.extend_from_slice(&expected.clone()[..5]);
        assert_eq!(set.keys, expected);
    }

    #[test]
    fn split_rejects_bad_subtrees() {
        let t = CompleteTree::build(3).unwrap();
        assert!(gen_split(&t, 8, 3).is_err());
        assert!(gen_split(&t, 8, 16).is_err());
        assert!(gen_split(&t, 8, 0).is_err());
    }

    #[test]
    fn split_chunks_have_distinct_targets() {
        let t = CompleteTree::build(10).unwrap();
        for ts in [2usize, 4, 8, 16] {
            let x = ts.trailing_zeros();
            let set = gen_split(&t, 2000, ts).unwrap();
            for (i, &k) in set.keys.iter().enumerate() {
                assert!(t.lookup(k).terminal_level >= x);
                assert_eq!(routed_subtree(&t, k, x), Some(i % ts));
            }
        }
    }

    #[test]
    fn keyfile_rejects_garbage() {
        assert!(read_keyset(&mut &b"BSTK"[..]).is_err());
        let mut bad = Vec::new();
        write_keyset(
            &mut bad,
            &KeySet {
                kind: KeySetKind::Equal,
                seed: None,
                keys: vec![1, 2],
            },
        )
        .unwrap();
        bad[0] = b'X';
        assert!(read_keyset(&mut &bad[..]).is_err());
        bad[0] = b'B';
        bad.pop();
        assert!(read_keyset(&mut &bad[..]).is_err());
    }

    #[test]
    fn keyfile_header_bytes() {
        let mut out = Vec::new();
        let set = KeySet {
            kind: KeySetKind::Split,
            seed: None,
            keys: vec![0x0102_0304],
        };
        write_keyset(&mut out, &set).unwrap();
        assert_eq!(
            out,
            vec![b'B', b'S', b'T', b'K', 1, 0, 0, 0, 2, 0, 0, 0, 1, 0, 0, 0, 4, 3, 2, 1]
        );
    }

    proptest! {
        #[test]
        fn keyfile_round_trip(keys in prop::collection::vec(any::<u32>(), 0..300), kind in 0u32..4) {
            let set = KeySet { kind: KeySetKind::from_code(kind).unwrap(), seed: None, keys };
            let mut buf = Vec::new();
            write_keyset(&mut buf, &set).unwrap();
            prop_assert_eq!(buf.len(), 16 + 4 * set.keys.len());
            prop_assert_eq!(read_keyset(&mut &buf[..]).unwrap(), set);
        }
    }
}
