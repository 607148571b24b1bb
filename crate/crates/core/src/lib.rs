//! Cycle-accurate simulator of a pipelined binary-search-tree lookup
//! accelerator with partitioned dual-port block RAM.
//!
//! Three memory organizations are modelled: a horizontal pipeline with one
//! partition per tree level (`hrz`), `n` independent replicas of it (`dupN`),
//! and a hybrid that keeps the top levels in registers and splits the rest
//! into per-subtree pipelines fed through small buffers (`hybT`, `hybTq`).
//!
//! ```
//! use bstsim_core::{CompleteTree, Engine, EngineConfig, Variant};
//!
//! let tree = CompleteTree::build(4).unwrap();
//! let config = EngineConfig::new("hyb4q".parse::<Variant>().unwrap(), 4).unwrap();
//! let result = Engine::new(config, &tree).unwrap().run(&[1, 9, 17, 25]).unwrap();
//! assert!(result.results.iter().all(|o| o.found));
//! ```

pub mod buffers;
pub mod engine;
pub mod error;
pub mod harness;
pub mod memory;
pub mod tree;
pub mod workload;

pub use buffers::{MappingPolicy, SubtreeBuffer};
pub use engine::{speedup, CycleStats, Engine, EngineConfig, Event, KeyOutcome, RunResult, Variant};
pub use error::{Error, Result};
pub use harness::{
    emit_report, execute_matrix, parse_report, KeySetSpec, OutputFormat, Report, ReportMetadata,
    ReportRow, RunSpec,
};
pub use memory::{BramPartition, PartitionLayout, RegisterLayer};
pub use tree::{CompleteTree, KeyValue, LookupResult, NodeAddr};
pub use workload::{KeySet, KeySetKind};
