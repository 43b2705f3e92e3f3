use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use irmetro_core::export::{render_report, MetroMapExport};
use irmetro_core::ingest::{load_corpus, read_graph, CorpusManifest, IngestError};
use irmetro_core::localize::{LocalizeError, DEFAULT_TOP_K};
use irmetro_core::simplify::MergeMode;
use irmetro_core::synthgen::{generate_corpus, write_corpus, BugSpec, GenConfig};
use irmetro_core::{run_pipeline, PipelineError, PipelineOptions};

const EXIT_INPUT: u8 = 2;
const EXIT_EMPTY: u8 = 3;

#[derive(Parser)]
#[command(
    name = "irmetro",
    version,
    about = "Merge JIT IR dumps into a phase metro map and rank suspicious phases"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus with an optional injected bug.
    Gen(GenArgs),
    /// Run the pipeline over a corpus manifest.
    Analyze(AnalyzeArgs),
    /// Print the reduction table stored in an export.
    Stats(StatsArgs),
    /// Check dumps (or every dump in a manifest) against the graph invariants.
    Validate(ValidateArgs),
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Text,
}

#[derive(Args)]
struct GenArgs {
    /// JSON GenConfig; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    variants: Option<usize>,
    /// `Phase:mode`, e.g. `EarlyOptimization:missing-optimization`.
    #[arg(long)]
    bug: Option<BugSpec>,
    #[arg(long, default_value = "corpus")]
    out: PathBuf,
}

#[derive(Args)]
struct AnalyzeArgs {
    manifest: PathBuf,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Phase left out of the ranking; repeatable. Defaults to GraphBuilder.
    #[arg(long = "exclude-phase", value_name = "NAME")]
    exclude_phase: Vec<String>,
    /// One equivalent-node merge round instead of a fixpoint.
    #[arg(long)]
    single_pass: bool,
    #[arg(long, default_value_t = DEFAULT_TOP_K)]
    top_k: usize,
    /// What to print on stdout once the files are written.
    #[arg(long, value_enum, default_value = "text")]
    format: Format,
}

#[derive(Args)]
struct StatsArgs {
    export: PathBuf,
    #[arg(long, value_enum, default_value = "text")]
    format: Format,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(required = true)]
    paths: Vec<PathBuf>,
    #[arg(long, value_enum, default_value = "text")]
    format: Format,
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn input(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_INPUT,
            message: message.into(),
        }
    }
}

impl From<IngestError> for Failure {
    fn from(e: IngestError) -> Self {
        let mut message = e.to_string();
        if let IngestError::Invariant { violations, .. } = &e {
            for v in violations.iter().skip(1) {
                message.push_str(&format!("\n  {v}"));
            }
        }
        Failure::input(message)
    }
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        let code = match e {
            PipelineError::Localize(LocalizeError::EmptyHypergraph) => EXIT_EMPTY,
            _ => EXIT_INPUT,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure::input(format!("{}: {e}", path.display()))
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| io_failure(path, e))
}

fn cmd_gen(args: GenArgs) -> Result<(), Failure> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| io_failure(path, e))?;
            serde_json::from_str::<GenConfig>(&text)
                .map_err(|e| Failure::input(format!("config-error: {}: {e}", path.display())))?
        }
        None => GenConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(n) = args.variants {
        cfg.n_variants = n;
    }
    if let Some(bug) = args.bug {
        cfg.bug = Some(bug);
    }
    let corpus = generate_corpus(&cfg).map_err(|e| Failure::input(e.to_string()))?;
    let manifest = write_corpus(&args.out, &corpus).map_err(|e| io_failure(&args.out, e))?;
    println!("{}", manifest.display());
    Ok(())
}

fn cmd_analyze(args: AnalyzeArgs) -> Result<(), Failure> {
    let manifest = CorpusManifest::read(&args.manifest)?;
    let corpus = load_corpus(&manifest)?;
    let mut opts = PipelineOptions {
        merge_mode: if args.single_pass {
            MergeMode::SinglePass
        } else {
            MergeMode::Fixpoint
        },
        top_k: args.top_k,
        ..PipelineOptions::default()
    };
    if !args.exclude_phase.is_empty() {
        opts.exclude = args.exclude_phase;
    }
    let out = run_pipeline(&corpus.original, &corpus.variants, &opts)?;

    fs::create_dir_all(&args.out).map_err(|e| io_failure(&args.out, e))?;
    let report = render_report(&out.export);
    let stats_json = serde_json::to_string_pretty(&out.stats).expect("stats serialize") + "\n";
    write(&args.out.join("metromap.json"), &out.export.to_json())?;
    write(&args.out.join("stats.json"), &stats_json)?;
    write(&args.out.join("report.txt"), &report)?;
    match args.format {
        Format::Text => print!("{report}"),
        Format::Json => print!("{stats_json}"),
    }
    Ok(())
}

fn cmd_stats(args: StatsArgs) -> Result<(), Failure> {
    let text = fs::read_to_string(&args.export).map_err(|e| io_failure(&args.export, e))?;
    let export = MetroMapExport::from_json(&text)
        .map_err(|e| Failure::input(format!("parse-error: {}: {e}", args.export.display())))?;
    match args.format {
        Format::Text => print!("{}", export.stats),
        Format::Json => println!(
            "{}",
            serde_json::to_string_pretty(&export.stats).expect("stats serialize")
        ),
    }
    Ok(())
}

fn looks_like_manifest(path: &Path) -> bool {
    fs::read_to_string(path)
        .ok()
        .and_then(|t| serde_json::from_str::<serde_json::Value>(&t).ok())
        .is_some_and(|v| v.get("original").is_some_and(|o| o.is_string()))
}

fn cmd_validate(args: ValidateArgs) -> Result<(), Failure> {
    let mut results: Vec<(String, Option<String>)> = Vec::new();
    for path in &args.paths {
        let outcome = if looks_like_manifest(path) {
            CorpusManifest::read(path)
                .and_then(|m| load_corpus(&m))
                .map(|_| ())
        } else {
            read_graph(path).map(|_| ())
        };
        let err = outcome.err().map(|e| Failure::from(e).message);
        results.push((path.display().to_string(), err));
    }
    let failed = results.iter().filter(|(_, e)| e.is_some()).count();
    match args.format {
        Format::Text => {
            for (path, err) in &results {
                match err {
                    None => println!("ok    {path}"),
                    Some(m) => println!("FAIL  {path}\n  {}", m.replace('\n', "\n  ")),
                }
            }
        }
        Format::Json => {
            let rows: Vec<_> = results
                .iter()
                .map(|(path, err)| serde_json::json!({ "path": path, "ok": err.is_none(), "error": err }))
                .collect();
            println!("{}", serde_json::to_string_pretty(&rows).expect("json"));
        }
    }
    if failed > 0 {
        return Err(Failure::input(format!(
            "{failed} of {} inputs failed validation",
            results.len()
        )));
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("IRMETRO_LOG", "warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Analyze(a) => cmd_analyze(a),
        Command::Stats(a) => cmd_stats(a),
        Command::Validate(a) => cmd_validate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
