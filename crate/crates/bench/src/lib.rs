//! Shared fixtures for the criterion benches.

use bstsim_core::harness::KeySetSpec;
use bstsim_core::{CompleteTree, EngineConfig, Variant};

/// Tree of `height` plus the keys of `set` (e.g. `random:16k:seed=1`),
/// with split sets built for `subtrees`.
pub fn fixture(height: u32, set: &str, subtrees: usize) -> (CompleteTree, Vec<u32>) {
    let tree = CompleteTree::build(height).expect("valid height");
    let spec: KeySetSpec = set.parse().expect("valid key set");
    let keys = spec.realize(&tree, 0, subtrees).expect("realizable key set").keys;
    (tree, keys)
}

pub fn config(variant: &str, height: u32) -> EngineConfig {
    EngineConfig::new(variant.parse::<Variant>().expect("valid variant"), height).expect("valid config")
}
