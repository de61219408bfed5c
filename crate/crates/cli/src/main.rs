use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use covlab_core::harness::{self, keys_help, ExperimentConfig, ExperimentKind};
use covlab_core::verify::{Verifier, VerifyOptions, CRITERIA};
use covlab_core::Error;

#[derive(Parser)]
#[command(name = "covlab", version, about = "Monte Carlo lab for disk cover times by planar random walk and Brownian motion")]
#[command(after_long_help = after_help())]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Flat key=value config file
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Master seed
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Worker threads (0 = all cores)
    #[arg(long, global = true, value_name = "N")]
    workers: Option<usize>,
    /// Output prefix: PREFIX.jsonl and PREFIX.csv
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Per-run cap on walk moves or driver calls
    #[arg(long = "budget-steps", global = true, value_name = "N")]
    budget_steps: Option<u64>,
    /// Any config key, for example --param srw.r=30,60
    #[arg(long = "param", short = 'p', global = true, value_name = "KEY=VALUE")]
    params: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Cover and coupling simulations
    Simulate {
        #[command(subcommand)]
        what: SimulateKind,
    },
    /// Monte Carlo estimates
    Estimate {
        #[command(subcommand)]
        what: EstimateKind,
    },
    /// Deterministic calculations
    Calc {
        #[command(subcommand)]
        what: CalcKind,
    },
    /// Reports over stored records
    Report {
        #[command(subcommand)]
        what: ReportKind,
    },
    /// Acceptance suite
    Verify {
        #[command(subcommand)]
        what: VerifyKind,
    },
}

#[derive(Subcommand)]
enum SimulateKind {
    SrwCover,
    SausageCover,
    IidCover,
    Coupling,
    TorusCover,
}

#[derive(Subcommand)]
enum EstimateKind {
    Hitting,
    ExitTime,
}

#[derive(Subcommand)]
enum CalcKind {
    SeriesScan,
}

#[derive(Subcommand)]
enum ReportKind {
    /// Running LIL statistic over srw-cover or sausage-cover records
    Lil {
        /// Record file; defaults to lil.input
        #[arg(long, value_name = "PATH")]
        input: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum VerifyKind {
    /// Runs the acceptance criteria; exits 2 if any fails
    All {
        /// Run only these criteria
        #[arg(long, value_delimiter = ',', value_name = "IDS")]
        only: Vec<u32>,
    },
}

fn after_help() -> String {
    format!("Config keys (file lines or --param KEY=VALUE):\n{}\nExit codes: 0 success, 1 config or fatal error, 2 acceptance failure.", keys_help())
}

enum Failure {
    Config(String),
    Acceptance,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Config(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("covlab: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Acceptance) => ExitCode::from(2),
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let kind = match &cli.command {
        Command::Simulate { what } => match what {
            SimulateKind::SrwCover => ExperimentKind::SrwCover,
            SimulateKind::SausageCover => ExperimentKind::SausageCover,
            SimulateKind::IidCover => ExperimentKind::IidCover,
            SimulateKind::Coupling => ExperimentKind::Coupling,
            SimulateKind::TorusCover => ExperimentKind::TorusCover,
        },
        Command::Estimate { what } => match what {
            EstimateKind::Hitting => ExperimentKind::Hitting,
            EstimateKind::ExitTime => ExperimentKind::ExitTime,
        },
        Command::Calc { what: CalcKind::SeriesScan } => ExperimentKind::SeriesScan,
        Command::Report { what: ReportKind::Lil { .. } } => ExperimentKind::LilStatistic,
        Command::Verify { what: VerifyKind::All { only } } => return verify(&cli.common, only),
    };
    let cfg = build_config(&cli.common, kind)?;
    if let Command::Report { what: ReportKind::Lil { input } } = &cli.command {
        return report_lil(&cfg, input.as_deref());
    }
    let prefix = cfg.out.clone().unwrap_or_else(|| PathBuf::from(kind.name()));
    let plan = harness::Plan::new(&cfg)?;
    eprintln!("covlab: {} runs of {kind}, records to {}", plan.total_runs(), with_ext(&prefix, "jsonl").display());
    let mut records = BufWriter::new(File::create(with_ext(&prefix, "jsonl"))?);
    let out = harness::run_plan(&plan, Some(&mut records))?;
    records.flush()?;
    let failed = out.records.iter().filter(|r| r.error.is_some()).count();
    let mut csv = BufWriter::new(File::create(with_ext(&prefix, "csv"))?);
    harness::write_summary(&mut csv, &out.summary)?;
    csv.flush()?;
    let stdout = std::io::stdout();
    harness::write_summary(&mut stdout.lock(), &out.summary)?;
    if failed > 0 {
        eprintln!("covlab: {failed} runs failed; see the error field of their records");
    }
    Ok(())
}

/// File values first, then flags, then `--param` entries.
fn build_config(c: &Common, kind: ExperimentKind) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match &c.config {
        Some(path) => {
            let cfg = ExperimentConfig::load(path)?;
            if cfg.experiment != kind {
                return Err(Failure::Config(format!("{} is a {} config, not {kind}", path.display(), cfg.experiment)));
            }
            cfg
        }
        None => ExperimentConfig::new(kind),
    };
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(w) = c.workers {
        cfg.workers = w;
    }
    if let Some(o) = &c.out {
        cfg.out = Some(o.clone());
    }
    if let Some(b) = c.budget_steps {
        cfg.budget_steps = Some(b);
    }
    for p in &c.params {
        let (k, v) = p.split_once('=').ok_or_else(|| Failure::Config(format!("--param expects KEY=VALUE, got {p:?}")))?;
        if k.trim() == "experiment" {
            return Err(Failure::Config("the experiment is set by the subcommand".into()));
        }
        cfg.set(k.trim(), v.trim())?;
    }
    Ok(cfg)
}

fn with_ext(prefix: &Path, ext: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

fn report_lil(cfg: &ExperimentConfig, input: Option<&Path>) -> Result<(), Failure> {
    let path = match input {
        Some(p) => p.to_path_buf(),
        None => cfg.get_opt::<String>("input")?.map(PathBuf::from).ok_or_else(|| Failure::Config("report lil needs --input or lil.input".into()))?,
    };
    let file = File::open(&path).map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))?;
    let records = harness::read_records(BufReader::new(file))?;
    let rows = harness::lil_statistic_report(&records)?;
    match &cfg.out {
        Some(prefix) => {
            let mut w = BufWriter::new(File::create(with_ext(prefix, "csv"))?);
            harness::write_lil(&mut w, &rows)?;
            w.flush()?;
        }
        None => harness::write_lil(&mut std::io::stdout().lock(), &rows)?,
    }
    eprintln!("covlab: trend exhibit only; the statistic's limit is an infinite-time statement");
    Ok(())
}

fn verify(c: &Common, only: &[u32]) -> Result<(), Failure> {
    if c.config.is_some() || !c.params.is_empty() || c.budget_steps.is_some() {
        return Err(Failure::Config("verify all takes only --seed, --workers and --out".into()));
    }
    if let Some(bad) = only.iter().find(|id| !CRITERIA.iter().any(|(i, _)| i == *id)) {
        return Err(Failure::Config(format!("no criterion {bad}")));
    }
    let mut opts = VerifyOptions::default();
    if let Some(s) = c.seed {
        opts.seed = s;
    }
    if let Some(w) = c.workers {
        opts.workers = w;
    }
    let mut v = Verifier::new(opts);
    let ids: Vec<u32> = if only.is_empty() { CRITERIA.iter().map(|(i, _)| *i).collect() } else { only.to_vec() };
    let mut results = Vec::new();
    for id in ids {
        let r = v.run(id);
        println!("{}", r.line());
        results.push(r);
    }
    let passed = results.iter().filter(|r| r.pass).count();
    println!("{passed}/{} criteria pass", results.len());
    if let Some(prefix) = &c.out {
        let mut w = BufWriter::new(File::create(with_ext(prefix, "jsonl"))?);
        for r in &results {
            serde_json::to_writer(&mut w, r).map_err(Error::from)?;
            writeln!(w)?;
        }
        w.flush()?;
    }
    if passed == results.len() {
        Ok(())
    } else {
        Err(Failure::Acceptance)
    }
}
