use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use bstsim_core::harness::{emit_report, execute_matrix, parse_report, KeySetSource, KeySetSpec, OutputFormat, Report, RunSpec};
use bstsim_core::tree::in_order_position;
use bstsim_core::workload::{save_keyset, write_keyset};
use bstsim_core::{CompleteTree, Engine, EngineConfig, Error, NodeAddr, Variant};
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

const OUT_DIR_ENV: &str = "BSTSIM_OUT_DIR";

#[derive(Parser)]
#[command(name = "bstsim", version, about = "Cycle-accurate simulator of a pipelined BRAM binary-search-tree lookup accelerator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a tree and print its nodes and per-variant memory footprint
    GenTree(GenTreeArgs),
    /// Generate a key set and save it as a binary key file
    GenKeys(GenKeysArgs),
    /// Run the variant x key-set matrix and write a report
    Run(RunArgs),
    /// Pretty-print a report written by `run`
    Report(ReportArgs),
}

#[derive(Args)]
struct GenTreeArgs {
    #[arg(long)]
    height: u32,
    /// Node table destination (CSV); `-` for stdout
    #[arg(long)]
    out: Option<String>,
    /// Variants to summarize
    #[arg(long, value_delimiter = ',', default_value = "hrz,dup4,dup8,hyb4,hyb8")]
    variants: Vec<Variant>,
}

#[derive(Args)]
struct GenKeysArgs {
    #[arg(long)]
    height: u32,
    /// equal:<size>[:leaf=<rank>], random:<size>[:seed=<n>][:misses] or split:<size>
    #[arg(long)]
    set: KeySetSpec,
    /// Subtree count for split sets
    #[arg(long, default_value_t = 8)]
    subtrees: usize,
    /// Random set repetition index, added to the seed
    #[arg(long, default_value_t = 0)]
    repetition: u64,
    /// Key file destination; `-` for stdout
    #[arg(long)]
    out: Option<String>,
}

#[derive(Args)]
struct RunArgs {
    /// TOML file with any of: height, variants, sets, repetitions, format, buffer_slots, out
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    height: Option<u32>,
    /// hrz, dup<N>, hyb<T> (direct) or hyb<T>q (queue); hrz is added if missing
    #[arg(long, value_delimiter = ',')]
    variants: Option<Vec<Variant>>,
    /// Key sets, e.g. equal:64k,random:64k:seed=1,split:64k,file:keys.bstk
    #[arg(long, value_delimiter = ',')]
    sets: Option<Vec<KeySetSpec>>,
    /// Seeds averaged per random set
    #[arg(long)]
    repetitions: Option<usize>,
    /// csv or jsonl; inferred from --out when omitted
    #[arg(long)]
    format: Option<OutputFormat>,
    /// Slots per subtree buffer for hybrid variants (default: one chunk)
    #[arg(long)]
    buffer_slots: Option<usize>,
    /// Report destination; `-` for stdout
    #[arg(long)]
    out: Option<String>,
}

#[derive(Args)]
struct ReportArgs {
    path: PathBuf,
    /// csv or jsonl; inferred from the extension when omitted
    #[arg(long)]
    format: Option<OutputFormat>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    height: Option<u32>,
    variants: Option<Vec<String>>,
    sets: Option<Vec<String>>,
    repetitions: Option<usize>,
    format: Option<OutputFormat>,
    buffer_slots: Option<usize>,
    out: Option<String>,
}

enum Failure {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        match e.downcast_ref::<Error>() {
            Some(Error::Config(_)) => Failure::Usage(e),
            _ => Failure::Runtime(e),
        }
    }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(anyhow!(msg.into()))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp
                | ErrorKind::DisplayVersion
                | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let outcome = match cli.command {
        Command::GenTree(args) => gen_tree(args),
        Command::GenKeys(args) => gen_keys(args),
        Command::Run(args) => run(args),
        Command::Report(args) => report(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn default_out(file_name: &str) -> PathBuf {
    std::env::var_os(OUT_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("."))
        .join(file_name)
}

/// Opens `out` (or `default` when absent) for writing; `-` is stdout.
fn open_out(out: Option<&str>, default: &str) -> anyhow::Result<(Box<dyn Write>, Option<PathBuf>)> {
    match out {
        Some("-") => Ok((Box::new(BufWriter::new(io::stdout().lock())), None)),
        other => {
            let path = other.map(PathBuf::from).unwrap_or_else(|| default_out(default));
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            }
            let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
            Ok((Box::new(BufWriter::new(file)), Some(path)))
        }
    }
}

fn gen_tree(args: GenTreeArgs) -> Result<(), Failure> {
    let tree = CompleteTree::build(args.height).map_err(anyhow::Error::from)?;
    let (mut w, path) = open_out(args.out.as_deref(), &format!("tree-h{}.csv", args.height))?;
    let write = |w: &mut dyn Write| -> io::Result<()> {
        writeln!(w, "index,level,offset,in_order,key,value")?;
        for (i, kv) in tree.nodes().iter().enumerate() {
            let a = NodeAddr(i);
            writeln!(
                w,
                "{i},{},{},{},{},{}",
                a.level(),
                a.offset(),
                in_order_position(tree.height(), a),
                kv.key,
                kv.value
            )?;
        }
        w.flush()
    };
    write(&mut w).context("writing node table").map_err(Failure::Runtime)?;
    drop(w);

    eprintln!("height {} tree: {} nodes, keys 1..={}", tree.height(), tree.node_count(), tree.max_key());
    for v in args.variants {
        let engine = match EngineConfig::new(v, args.height).and_then(|c| Engine::new(c, &tree)) {
            Ok(e) => e,
            Err(e) => {
                eprintln!("  {:<8} {e}", v.to_string());
                continue;
            }
        };
        let registers = engine.layouts()[0].registers.nodes().len();
        eprintln!(
            "  {:<8} partitions {:>4}  register nodes {registers:>4}  memory_nodes {:>10}  bram_blocks {:>6}",
            v.to_string(),
            engine.partition_count(),
            engine.memory_nodes(),
            engine.bram_blocks()
        );
    }
    if let Some(p) = path {
        eprintln!("wrote {}", p.display());
    }
    Ok(())
}

fn gen_keys(args: GenKeysArgs) -> Result<(), Failure> {
    if let KeySetSource::File(_) = args.set.source {
        return Err(usage("gen-keys needs equal:, random: or split:"));
    }
    let tree = CompleteTree::build(args.height).map_err(anyhow::Error::from)?;
    let set = args
        .set
        .realize(&tree, args.repetition, args.subtrees)
        .map_err(anyhow::Error::from)?;
    let default = format!("{}-{}-h{}.bstk", set.kind, set.len(), args.height);
    match args.out.as_deref() {
        Some("-") => {
            let mut out = io::stdout().lock();
            write_keyset(&mut out, &set)
                .and_then(|()| out.flush())
                .context("writing key set to stdout")
                .map_err(Failure::Runtime)?;
        }
        other => {
            let path = other.map(PathBuf::from).unwrap_or_else(|| default_out(&default));
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)
                    .with_context(|| format!("creating {}", dir.display()))
                    .map_err(Failure::Runtime)?;
            }
            save_keyset(&path, &set).map_err(anyhow::Error::from)?;
            eprintln!("wrote {} {} keys to {}", set.len(), set.kind, path.display());
        }
    }
    Ok(())
}

fn load_config(path: &Path) -> Result<ConfigFile, Failure> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(Failure::Usage)?;
    toml::from_str(&text)
        .with_context(|| format!("parsing {}", path.display()))
        .map_err(Failure::Usage)
}

fn parse_list<T>(items: &[String], what: &str) -> Result<Vec<T>, Failure>
where
    T: std::str::FromStr<Err = Error>,
{
    items
        .iter()
        .map(|s| s.parse::<T>().map_err(|e| usage(format!("{what} '{s}': {e}"))))
        .collect()
}

fn format_for(path: Option<&str>) -> Option<OutputFormat> {
    let ext = Path::new(path?).extension()?.to_str()?;
    ext.parse().ok()
}

fn run(args: RunArgs) -> Result<(), Failure> {
    let file = match &args.config {
        Some(p) => load_config(p)?,
        None => ConfigFile::default(),
    };
    let height = args
        .height
        .or(file.height)
        .ok_or_else(|| usage("--height is required (or `height` in the config file)"))?;
    let variants = match (args.variants, &file.variants) {
        (Some(v), _) => v,
        (None, Some(v)) => parse_list(v, "variant")?,
        (None, None) => vec![Variant::Hrz],
    };
    let sets = match (args.sets, &file.sets) {
        (Some(s), _) => s,
        (None, Some(s)) => parse_list(s, "key set")?,
        (None, None) => return Err(usage("--sets is required (or `sets` in the config file)")),
    };
    let out = args.out.or(file.out);
    let format = args
        .format
        .or(file.format)
        .or_else(|| format_for(out.as_deref()))
        .unwrap_or_default();
    let spec = RunSpec::new(height, variants, sets, args.repetitions.or(file.repetitions).unwrap_or(1), format)
        .and_then(|s| s.with_buffer_slots(args.buffer_slots.or(file.buffer_slots)))
        .map_err(|e| Failure::Usage(e.into()))?;

    let report = execute_matrix(&spec).map_err(|e| Failure::Runtime(e.into()))?;
    let (mut w, path) = open_out(out.as_deref(), &format!("report.{}", format.extension()))?;
    emit_report(&report, format, &mut w)
        .map_err(anyhow::Error::from)
        .and_then(|()| w.flush().context("flushing report"))
        .map_err(Failure::Runtime)?;
    if let Some(p) = path {
        eprintln!("wrote {} rows to {}", report.rows.len(), p.display());
    }
    Ok(())
}

fn report(args: ReportArgs) -> Result<(), Failure> {
    let format = args
        .format
        .or_else(|| format_for(args.path.to_str()))
        .unwrap_or_default();
    let file = File::open(&args.path)
        .with_context(|| format!("opening {}", args.path.display()))
        .map_err(Failure::Runtime)?;
    let report = parse_report(file, format)
        .with_context(|| format!("reading {}", args.path.display()))
        .map_err(Failure::Runtime)?;
    print_table(&report, &mut io::stdout().lock())
        .context("writing table")
        .map_err(Failure::Runtime)
}

fn print_table(report: &Report, w: &mut impl Write) -> io::Result<()> {
    let m = &report.metadata;
    writeln!(
        w,
        "{} {}  height {} ({} nodes)  prng {}  repetitions {}",
        m.tool, m.version, m.tree_height, m.node_count, m.prng, m.repetitions
    )?;
    writeln!(
        w,
        "{:<8} {:<7} {:>8} {:>12} {:>10} {:>10} {:>8} {:>12} {:>6} {:>7}",
        "variant", "keys", "size", "cycles", "keys/cyc", "stalls", "speedup", "memory", "bram", "max_buf"
    )?;
    for r in &report.rows {
        writeln!(
            w,
            "{:<8} {:<7} {:>8} {:>12.1} {:>10.3} {:>10.1} {:>8.3} {:>12} {:>6} {:>7}",
            r.variant,
            r.key_set_kind.to_string(),
            r.key_set_size,
            r.total_cycles,
            r.throughput,
            r.stall_cycles,
            r.speedup_vs_hrz,
            r.memory_nodes,
            r.bram_blocks,
            r.max_buffer_occupancy
        )?;
    }
    w.flush()
}
