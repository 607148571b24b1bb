//! Configuration-matrix runner and report I/O.
//!
//! Every (variant, key set) cell is simulated on the same tree and compared
//! with the Hrz baseline run on the identical key list. Cells are
//! independent and execute on the rayon pool; rows come out variant-major,
//! set-minor regardless of scheduling.
//!
//! Split sets are best-case only for the subtree count they were generated
//! for, so a split cell of `hyb<T>` uses a split set built for `T` subtrees,
//! and its Hrz baseline runs on that same list. Non-hybrid rows use the
//! largest hybrid subtree count of the run.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::PathBuf;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::{Engine, EngineConfig, RunResult, Variant};
use crate::error::{Error, Result};
use crate::tree::CompleteTree;
use crate::workload::{
    gen_equal, gen_random, gen_random_with_misses, gen_split, load_keyset, KeySet, KeySetKind,
    PRNG_NAME,
};

pub const TOOL_NAME: &str = "bstsim";
pub const KEY_RULE: &str = "in-order position p holds key 2p+1 and value p";

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum KeySetSource {
    Equal { leaf_rank: usize },
    Random { seed: u64, misses: bool },
    Split,
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct KeySetSpec {
    pub source: KeySetSource,
    /// Ignored for file sources.
    pub size: usize,
}

/// Parses `64k`, `256K`, `1m` or a plain count.
pub fn parse_size(s: &str) -> Result<usize> {
    let s = s.trim().to_ascii_lowercase();
    let (digits, mult) = match s.strip_suffix('k') {
        Some(d) => (d, 1024),
        None => match s.strip_suffix('m') {
            Some(d) => (d, 1024 * 1024),
            None => (s.as_str(), 1),
        },
    };
    digits
        .parse::<usize>()
        .map(|n| n * mult)
        .map_err(|_| Error::config(format!("bad key set size '{s}'")))
}

impl FromStr for KeySetSpec {
    type Err = Error;

    /// `equal:<size>[:leaf=<rank>]`, `random:<size>[:seed=<n>][:misses]`,
    /// `split:<size>` or `file:<path>`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some(path) = s.strip_prefix("file:") {
            return Ok(KeySetSpec {
                source: KeySetSource::File(PathBuf::from(path)),
                size: 0,
            });
        }
        let mut parts = s.split(':');
        let kind: KeySetKind = parts.next().unwrap_or_default().parse()?;
        let size = parse_size(
            parts
                .next()
                .ok_or_else(|| Error::config(format!("key set '{s}' is missing a size")))?,
        )?;
        let mut leaf_rank = 0;
        let mut seed = 1;
        let mut misses = false;
        for opt in parts {
            match opt.split_once('=') {
                Some(("leaf", v)) if kind == KeySetKind::Equal => {
                    leaf_rank = v
                        .parse()
                        .map_err(|_| Error::config(format!("bad leaf rank '{v}'")))?
                }
                Some(("seed", v)) if kind == KeySetKind::Random => {
                    seed = v.parse().map_err(|_| Error::config(format!("bad seed '{v}'")))?
                }
                None if opt == "misses" && kind == KeySetKind::Random => misses = true,
                _ => {
                    return Err(Error::config(format!(
                        "option '{opt}' is not valid for {kind} key sets"
                    )))
                }
            }
        }
        let source = match kind {
            KeySetKind::Equal => KeySetSource::Equal { leaf_rank },
            KeySetKind::Random => KeySetSource::Random { seed, misses },
            KeySetKind::Split => KeySetSource::Split,
            KeySetKind::Custom => {
                return Err(Error::config("custom key sets are loaded with file:<path>"))
            }
        };
        Ok(KeySetSpec { source, size })
    }
}

impl fmt::Display for KeySetSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.source {
            KeySetSource::Equal { leaf_rank: 0 } => write!(f, "equal:{}", self.size),
            KeySetSource::Equal { leaf_rank } => write!(f, "equal:{}:leaf={leaf_rank}", self.size),
            KeySetSource::Random { seed, misses } => {
                write!(f, "random:{}:seed={seed}", self.size)?;
                if *misses {
                    write!(f, ":misses")?;
                }
                Ok(())
            }
            KeySetSource::Split => write!(f, "split:{}", self.size),
            KeySetSource::File(p) => write!(f, "file:{}", p.display()),
        }
    }
}

impl KeySetSpec {
    pub fn kind(&self) -> KeySetKind {
        match self.source {
            KeySetSource::Equal { .. } => KeySetKind::Equal,
            KeySetSource::Random { .. } => KeySetKind::Random,
            KeySetSource::Split => KeySetKind::Split,
            KeySetSource::File(_) => KeySetKind::Custom,
        }
    }

    /// Generates the set. `repetition` offsets the seed of random sets;
    /// `split_subtrees` is only used by split sets.
    pub fn realize(&self, tree: &CompleteTree, repetition: u64, split_subtrees: usize) -> Result<KeySet> {
        match &self.source {
            KeySetSource::Equal { leaf_rank } => gen_equal(tree, self.size, *leaf_rank),
            KeySetSource::Random { seed, misses: false } => {
                Ok(gen_random(tree, self.size, seed.wrapping_add(repetition)))
            }
            KeySetSource::Random { seed, misses: true } => Ok(gen_random_with_misses(
                tree,
                self.size,
                seed.wrapping_add(repetition),
            )),
            KeySetSource::Split => gen_split(tree, self.size, split_subtrees),
            KeySetSource::File(path) => load_keyset(path),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Jsonl,
}

impl OutputFormat {
    pub fn extension(self) -> &'static str {
        match self {
            OutputFormat::Csv => "csv",
            OutputFormat::Jsonl => "jsonl",
        }
    }
}

impl FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "csv" => Ok(OutputFormat::Csv),
            "jsonl" | "json-lines" | "jsonlines" => Ok(OutputFormat::Jsonl),
            other => Err(Error::config(format!("unknown output format '{other}' (csv or jsonl)"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunSpec {
    pub tree_height: u32,
    pub variants: Vec<Variant>,
    pub key_sets: Vec<KeySetSpec>,
    /// Seeds averaged per random set; deterministic sets always run once.
    pub repetitions: usize,
    pub format: OutputFormat,
    /// Buffer slots for hybrid variants; `None` means one chunk.
    pub buffer_slots: Option<usize>,
}

impl RunSpec {
    /// Validates the matrix and puts Hrz first if it was not listed.
    pub fn new(
        tree_height: u32,
        mut variants: Vec<Variant>,
        key_sets: Vec<KeySetSpec>,
        repetitions: usize,
        format: OutputFormat,
    ) -> Result<Self> {
        if key_sets.is_empty() {
            return Err(Error::config("at least one key set is required"));
        }
        if repetitions == 0 {
            return Err(Error::config("repetitions must be >= 1"));
        }
        if !variants.contains(&Variant::Hrz) {
            variants.insert(0, Variant::Hrz);
        }
        let mut seen = Vec::new();
        variants.retain(|v| {
            let fresh = !seen.contains(v);
            seen.push(*v);
            fresh
        });
        let spec = RunSpec {
            tree_height,
            variants,
            key_sets,
            repetitions,
            format,
            buffer_slots: None,
        };
        for v in &spec.variants {
            spec.engine_config(*v)?;
        }
        for set in &spec.key_sets {
            if set.size == 0 && !matches!(set.source, KeySetSource::File(_)) {
                return Err(Error::config(format!("key set '{set}' is empty")));
            }
            if let KeySetSource::Equal { leaf_rank } = set.source {
                if leaf_rank >= 1usize << tree_height {
                    return Err(Error::config(format!(
                        "leaf rank {leaf_rank} exceeds the {} leaves of a height-{tree_height} tree",
                        1usize << tree_height
                    )));
                }
            }
        }
        Ok(spec)
    }

    pub fn with_buffer_slots(mut self, slots: Option<usize>) -> Result<Self> {
        self.buffer_slots = slots;
        for v in &self.variants {
            self.engine_config(*v)?;
        }
        Ok(self)
    }

    pub fn engine_config(&self, variant: Variant) -> Result<EngineConfig> {
        let config = EngineConfig::new(variant, self.tree_height)?;
        match (self.buffer_slots, variant.is_hybrid()) {
            (Some(slots), true) => config.with_buffer_slots(slots),
            _ => Ok(config),
        }
    }

    /// Subtree count used for split sets of non-hybrid rows.
    pub fn default_split_subtrees(&self) -> usize {
        self.variants
            .iter()
            .filter_map(Variant::subtrees)
            .max()
            .unwrap_or_else(|| 1usize << self.tree_height.min(3))
    }

    fn split_subtrees_for(&self, variant: Variant) -> usize {
        variant.subtrees().unwrap_or_else(|| self.default_split_subtrees())
    }

    fn repetitions_for(&self, set: &KeySetSpec) -> usize {
        match set.source {
            KeySetSource::Random { .. } => self.repetitions,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub variant: String,
    pub key_set_kind: KeySetKind,
    pub key_set_size: usize,
    pub total_cycles: f64,
    pub throughput: f64,
    pub stall_cycles: f64,
    pub speedup_vs_hrz: f64,
    pub memory_nodes: usize,
    pub bram_blocks: usize,
    pub seed: Option<u64>,
    pub prng_name: String,
    pub max_buffer_occupancy: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub tool: String,
    pub version: String,
    pub tree_height: u32,
    pub node_count: usize,
    pub key_rule: String,
    pub prng: String,
    pub repetitions: usize,
    pub split_subtrees: String,
    pub timestamp_unix: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub metadata: ReportMetadata,
    pub rows: Vec<ReportRow>,
}

impl Report {
    pub fn row(&self, variant: &str, kind: KeySetKind) -> Option<&ReportRow> {
        self.rows
            .iter()
            .find(|r| r.variant == variant && r.key_set_kind == kind)
    }
}

#[derive(Debug, Clone, Copy)]
struct CellSummary {
    total_cycles: u64,
    stall_cycles: u64,
    memory_nodes: usize,
    bram_blocks: usize,
    max_buffer_occupancy: usize,
}

/// Runs one engine and checks every key against the reference lookup.
pub fn run_verified(config: EngineConfig, tree: &CompleteTree, keys: &[u32]) -> Result<RunResult> {
    let result = Engine::new(config, tree)?.run(keys)?;
    for o in &result.results {
        let want = tree.lookup(o.key);
        if (o.found, o.value, o.terminal_level) != (want.found, want.value, want.terminal_level) {
            return Err(Error::Internal(format!(
                "{}: key {} diverged from the reference lookup",
                config.variant, o.key
            )));
        }
    }
    Ok(result)
}

type RealizationKey = (usize, usize);

/// Simulates every (variant, key set) cell and computes speedups against Hrz.
pub fn execute_matrix(spec: &RunSpec) -> Result<Report> {
    let tree = CompleteTree::build(spec.tree_height)?;

    // (set index, split subtree count or 0) -> one key set per repetition
    let mut realizations: BTreeMap<RealizationKey, Vec<KeySet>> = BTreeMap::new();
    let realization_of = |si: usize, v: Variant| -> RealizationKey {
        match spec.key_sets[si].source {
            KeySetSource::Split => (si, spec.split_subtrees_for(v)),
            _ => (si, 0),
        }
    };
    for (si, set) in spec.key_sets.iter().enumerate() {
        for &v in &spec.variants {
            let key = realization_of(si, v);
            if realizations.contains_key(&key) {
                continue;
            }
            let sets = (0..spec.repetitions_for(set) as u64)
                .map(|rep| set.realize(&tree, rep, key.1.max(1)))
                .collect::<Result<Vec<_>>>()
                .map_err(|e| Error::Cell {
                    cell: set.to_string(),
                    source: Box::new(e),
                })?;
            if sets.iter().any(KeySet::is_empty) {
                return Err(Error::config(format!("key set '{set}' is empty")));
            }
            realizations.insert(key, sets);
        }
    }

    let mut jobs: Vec<(Variant, RealizationKey, usize)> = Vec::new();
    for &v in &spec.variants {
        for si in 0..spec.key_sets.len() {
            let key = realization_of(si, v);
            for rep in 0..realizations[&key].len() {
                for job in [(v, key, rep), (Variant::Hrz, key, rep)] {
                    if !jobs.contains(&job) {
                        jobs.push(job);
                    }
                }
            }
        }
    }

    let outcomes: Vec<Result<CellSummary>> = jobs
        .par_iter()
        .map(|&(v, key, rep)| {
            let keys = &realizations[&key][rep].keys;
            let r = run_verified(spec.engine_config(v)?, &tree, keys).map_err(|e| Error::Cell {
                cell: format!("{v} x {}", spec.key_sets[key.0]),
                source: Box::new(e),
            })?;
            Ok(CellSummary {
                total_cycles: r.total_cycles,
                stall_cycles: r.stall_cycles,
                memory_nodes: r.memory_nodes,
                bram_blocks: r.bram_blocks,
                max_buffer_occupancy: r.max_buffer_occupancy,
            })
        })
        .collect();
    let mut summaries = BTreeMap::new();
    for (job, outcome) in jobs.iter().zip(outcomes) {
        summaries.insert(job_key(job), outcome?);
    }

    let mut rows = Vec::with_capacity(spec.variants.len() * spec.key_sets.len());
    for &v in &spec.variants {
        for (si, set) in spec.key_sets.iter().enumerate() {
            let key = realization_of(si, v);
            let sets = &realizations[&key];
            let reps = sets.len();
            let cell = |variant: Variant, rep: usize| summaries[&job_key(&(variant, key, rep))];
            let mean = |f: &dyn Fn(CellSummary) -> u64, variant: Variant| {
                (0..reps).map(|rep| f(cell(variant, rep)) as f64).sum::<f64>() / reps as f64
            };
            let cycles = mean(&|c| c.total_cycles, v);
            let hrz_cycles = mean(&|c| c.total_cycles, Variant::Hrz);
            let first = cell(v, 0);
            let size = sets[0].len();
            rows.push(ReportRow {
                variant: v.to_string(),
                key_set_kind: sets[0].kind,
                key_set_size: size,
                total_cycles: cycles,
                throughput: size as f64 / cycles,
                stall_cycles: mean(&|c| c.stall_cycles, v),
                speedup_vs_hrz: hrz_cycles / cycles,
                memory_nodes: first.memory_nodes,
                bram_blocks: first.bram_blocks,
                seed: match set.source {
                    KeySetSource::Random { seed, .. } => Some(seed),
                    _ => None,
                },
                prng_name: match set.source {
                    KeySetSource::Random { .. } => PRNG_NAME.to_string(),
                    _ => "none".to_string(),
                },
                max_buffer_occupancy: (0..reps)
                    .map(|rep| cell(v, rep).max_buffer_occupancy)
                    .max()
                    .unwrap_or(0),
            });
        }
    }

    Ok(Report {
        metadata: ReportMetadata {
            tool: TOOL_NAME.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            tree_height: spec.tree_height,
            node_count: tree.node_count(),
            key_rule: KEY_RULE.to_string(),
            prng: PRNG_NAME.to_string(),
            repetitions: spec.repetitions,
            split_subtrees: format!(
                "hyb<T> rows use T; other rows use {}",
                spec.default_split_subtrees()
            ),
            timestamp_unix: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        },
        rows,
    })
}

fn job_key(job: &(Variant, RealizationKey, usize)) -> (String, RealizationKey, usize) {
    (job.0.to_string(), job.1, job.2)
}

#[derive(Serialize, Deserialize)]
struct MetadataLine {
    metadata: ReportMetadata,
}

/// Writes the metadata prologue then one row per cell. CSV carries the
/// prologue as a `#`-prefixed JSON comment line.
pub fn emit_report(report: &Report, format: OutputFormat, w: &mut impl Write) -> Result<()> {
    let io = |e| Error::io("<report>", e);
    match format {
        OutputFormat::Csv => {
            writeln!(w, "# {}", serde_json::to_string(&report.metadata)?).map_err(io)?;
            let mut csv = csv::Writer::from_writer(&mut *w);
            for row in &report.rows {
                csv.serialize(row)?;
            }
            if report.rows.is_empty() {
                csv.write_record(CSV_HEADER)?;
            }
            csv.flush().map_err(io)?;
        }
        OutputFormat::Jsonl => {
            let meta = MetadataLine {
                metadata: report.metadata.clone(),
            };
            writeln!(w, "{}", serde_json::to_string(&meta)?).map_err(io)?;
            for row in &report.rows {
                writeln!(w, "{}", serde_json::to_string(row)?).map_err(io)?;
            }
        }
    }
    Ok(())
}

pub const CSV_HEADER: [&str; 12] = [
    "variant",
    "key_set_kind",
    "key_set_size",
    "total_cycles",
    "throughput",
    "stall_cycles",
    "speedup_vs_hrz",
    "memory_nodes",
    "bram_blocks",
    "seed",
    "prng_name",
    "max_buffer_occupancy",
];

/// Reads a report produced by [`emit_report`].
pub fn parse_report(r: impl Read, format: OutputFormat) -> Result<Report> {
    let mut reader = BufReader::new(r);
    let mut first = String::new();
    reader
        .read_line(&mut first)
        .map_err(|e| Error::io("<report>", e))?;
    match format {
        OutputFormat::Csv => {
            let json = first
                .strip_prefix("# ")
                .ok_or_else(|| Error::Report("missing metadata prologue".into()))?;
            let metadata: ReportMetadata = serde_json::from_str(json.trim_end())?;
            let mut csv = csv::Reader::from_reader(reader);
            let header = csv.headers()?.clone();
            if header.iter().ne(CSV_HEADER.iter().copied()) {
                return Err(Error::Report(format!("unexpected header {header:?}")));
            }
            let rows = csv.deserialize().collect::<std::result::Result<Vec<ReportRow>, _>>()?;
            Ok(Report { metadata, rows })
        }
        OutputFormat::Jsonl => {
            let meta: MetadataLine = serde_json::from_str(first.trim_end())?;
            let mut rows = Vec::new();
            for line in reader.lines() {
                let line = line.map_err(|e| Error::io("<report>", e))?;
                if !line.trim().is_empty() {
                    rows.push(serde_json::from_str(&line)?);
                }
            }
            Ok(Report {
                metadata: meta.metadata,
                rows,
            })
        }
    }
}
