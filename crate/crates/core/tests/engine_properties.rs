use bstsim_core::workload::{gen_equal, gen_random, gen_random_with_misses, gen_split};
use bstsim_core::{CompleteTree, Engine, EngineConfig, RunResult, Variant};
use proptest::prelude::*;

fn run(tree: &CompleteTree, variant: &str, keys: &[u32]) -> RunResult {
    let config = EngineConfig::new(variant.parse().unwrap(), tree.height()).unwrap();
    Engine::new(config, tree).unwrap().run(keys).unwrap()
}

fn key_sets(tree: &CompleteTree, n: usize, t: usize, seed: u64) -> Vec<Vec<u32>> {
    vec![
        gen_equal(tree, n, seed as usize % (1 << tree.height())).unwrap().keys,
        gen_random(tree, n, seed).keys,
        gen_random_with_misses(tree, n, seed).keys,
        gen_split(tree, n, t).unwrap().keys,
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn queue_never_stalls_more_than_direct(h in 3u32..=9, xi in 0usize..3, n in 1usize..400, seed in any::<u64>()) {
        let t = 2usize << xi;
        prop_assume!(t <= 1 << h);
        let tree = CompleteTree::build(h).unwrap();
        for keys in key_sets(&tree, n, t, seed) {
            let d = run(&tree, &format!("hyb{t}"), &keys);
            let q = run(&tree, &format!("hyb{t}q"), &keys);
            prop_assert!(q.stall_cycles <= d.stall_cycles, "queue {} direct {}", q.stall_cycles, d.stall_cycles);
        }
    }

    #[test]
    fn no_stall_variants(h in 2u32..=9, n in 1usize..300, seed in any::<u64>(), replicas in 1usize..=4) {
        let tree = CompleteTree::build(h).unwrap();
        let name = if replicas == 1 { "hrz".to_string() } else { format!("dup{}", 1 << (replicas - 1)) };
        let mut cycles = Vec::new();
        for keys in key_sets(&tree, n, 2, seed) {
            let r = run(&tree, &name, &keys);
            prop_assert_eq!(r.stall_cycles, 0);
            prop_assert!(r.max_in_flight <= r.config.variant.replicas() * 2 * (h as usize + 1));
            cycles.push(r.total_cycles);
        }
        // Only sets whose last chunk reaches a leaf share the cycle count.
        let leafy = |keys: &[u32]| {
            let chunk = 2 * (1usize << (replicas - 1));
            let tail = (keys.len() - 1) / chunk * chunk;
            keys[tail..].iter().any(|&k| tree.lookup(k).terminal_level == h)
        };
        let sets = key_sets(&tree, n, 2, seed);
        let full: Vec<u64> = sets.iter().zip(&cycles).filter(|(k, _)| leafy(k)).map(|(_, &c)| c).collect();
        prop_assert!(full.windows(2).all(|w| w[0] == w[1]), "{:?}", full);
    }

    #[test]
    fn split_sets_never_stall(h in 2u32..=10, xi in 0usize..3, chunks in 1usize..200) {
        let t = 2usize << xi;
        prop_assume!(t <= 1 << h);
        let tree = CompleteTree::build(h).unwrap();
        let keys = gen_split(&tree, chunks * 2 * t, t).unwrap().keys;
        for v in [format!("hyb{t}"), format!("hyb{t}q")] {
            let r = run(&tree, &v, &keys);
            prop_assert_eq!(r.stall_cycles, 0, "{}", v);
            let hrz = run(&tree, "hrz", &keys);
            prop_assert!(r.total_cycles <= hrz.total_cycles);
        }
    }
}

#[test]
fn equal_keys_converge_to_two_per_cycle() {
    let tree = CompleteTree::build(12).unwrap();
    let keys = gen_equal(&tree, 20_000, 5).unwrap().keys;
    for v in ["hyb2", "hyb2q", "hyb4", "hyb4q", "hyb8", "hyb8q"] {
        let r = run(&tree, v, &keys);
        assert!((1.8..=2.0).contains(&r.throughput), "{v}: {}", r.throughput);
    }
}

#[test]
fn buffer_slots_above_chunk_reduce_direct_stalls() {
    let tree = CompleteTree::build(10).unwrap();
    let keys = gen_random(&tree, 5000, 9).keys;
    let base = EngineConfig::new("hyb4".parse::<Variant>().unwrap(), 10).unwrap();
    let small = Engine::new(base, &tree).unwrap().run(&keys).unwrap();
    let queue = EngineConfig::new("hyb4q".parse::<Variant>().unwrap(), 10)
        .unwrap()
        .with_buffer_slots(32)
        .unwrap();
    let big = Engine::new(queue, &tree).unwrap().run(&keys).unwrap();
    assert!(big.stall_cycles <= small.stall_cycles);
    assert!(big.max_buffer_occupancy <= 32);
}

#[test]
fn step_api_matches_run() {
    let tree = CompleteTree::build(7).unwrap();
    let keys = gen_random(&tree, 700, 4).keys;
    let config = EngineConfig::new("hyb8q".parse::<Variant>().unwrap(), 7).unwrap();
    let whole = Engine::new(config, &tree).unwrap().run(&keys).unwrap();
    let mut e = Engine::new(config, &tree).unwrap();
    e.load(&keys);
    let mut admitted = 0;
    while !e.is_finished() {
        admitted += e.step().unwrap().admitted;
    }
    assert_eq!(admitted, keys.len());
    assert_eq!(e.cycle(), whole.total_cycles);
    assert_eq!(e.stall_cycles(), whole.stall_cycles);
}
