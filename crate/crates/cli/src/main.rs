//! `clproto`: run the two-phase tuning/evaluation protocol from a JSON
//! experiment config.
//!
//! Exit status: 0 on success, 1 on usage or configuration errors, 2 on any
//! other failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use clproto::config::ExperimentConfig;
use clproto::data::write_csv;
use clproto::protocol::{
    aggregate_tuning, evaluation_phase, select_best_row, tuning_phase, HyperparameterAssignment, PhaseReport,
    ProtocolSettings,
};
use clproto::records::{canonical_sort, read_records, write_records, Phase, RunRecord};
use clproto::report::{emit_curves, emit_results_table};
use clproto::{Error, Result, SplitPair};

const DEFAULT_OUT: &str = "clproto-out";

#[derive(Parser, Debug)]
#[command(name = "clproto", version, about = "Two-phase hyperparameter tuning and evaluation for class-incremental learners")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write the tuning and evaluation datasets as CSV with metadata sidecars.
    Split(Common),
    /// Run the tuning phase and write tuning.jsonl per algorithm.
    Tune(Common),
    /// Select the best assignment from persisted tuning records.
    Select(Common),
    /// Run the evaluation phase with the selected assignment.
    Eval(Common),
    /// Tune, select and evaluate, then write tables and curves.
    Run(Common),
    /// Rebuild tables and curves from output directories.
    Report(ReportArgs),
}

#[derive(Args, Debug)]
struct Common {
    /// Experiment config (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config's base seed (the split seed for `split`).
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Number of trials run concurrently.
    #[arg(long)]
    jobs: Option<usize>,
    /// Restrict to one configured algorithm.
    #[arg(long)]
    algo: Option<String>,
}

#[derive(Args, Debug)]
struct ReportArgs {
    /// Directory to write tables into.
    #[arg(long)]
    out: PathBuf,
    /// Run directories to collect (defaults to --out).
    inputs: Vec<PathBuf>,
}

struct Loaded {
    config: ExperimentConfig,
    base_dir: PathBuf,
    out: PathBuf,
    algos: Vec<String>,
}

impl Loaded {
    fn new(args: &Common) -> Result<Loaded> {
        let path = args
            .config
            .as_ref()
            .ok_or_else(|| Error::Config("--config is required".into()))?;
        let mut config = ExperimentConfig::load(path)?;
        if let Some(j) = args.jobs {
            config.jobs = j;
        }
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let out = args
            .out
            .clone()
            .or_else(|| config.out_dir.as_ref().map(|d| base_dir.join(d)))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
        let algos = match &args.algo {
            Some(a) if config.algorithm_names().contains(a) => vec![a.clone()],
            Some(a) => return Err(Error::Config(format!("algorithm '{a}' is not in the config"))),
            None => config.algorithm_names(),
        };
        config.validate()?;
        Ok(Loaded {
            config,
            base_dir,
            out,
            algos,
        })
    }

    fn settings(&self, seed: Option<u64>) -> Result<ProtocolSettings> {
        let mut s = self.config.protocol_settings()?;
        if let Some(seed) = seed {
            s.base_seed = seed;
        }
        Ok(s)
    }

    fn data(&self) -> Result<SplitPair> {
        self.config.data.load(&self.base_dir)
    }

    fn algo_dir(&self, algo: &str) -> Result<PathBuf> {
        let dir = self.out.join(algo);
        fs::create_dir_all(&dir)?;
        Ok(dir)
    }
}

fn write_json<T: serde::Serialize>(value: &T, path: &Path) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn cmd_split(args: &Common) -> Result<()> {
    let mut loaded = Loaded::new(args)?;
    if let (Some(seed), Some(plan)) = (args.seed, loaded.config.data.split.as_mut()) {
        plan.seed = seed;
    }
    let pair = loaded.data()?;
    fs::create_dir_all(&loaded.out)?;
    for (name, ds) in [("tuning", &pair.tuning), ("evaluation", &pair.evaluation)] {
        write_csv(ds, &loaded.out.join(format!("{name}.csv")))?;
        ds.metadata().write(&loaded.out.join(format!("{name}.meta.json")))?;
        println!("{name}: {} examples, {} classes", ds.len(), ds.class_set().len());
    }
    Ok(())
}

fn tune_one(loaded: &Loaded, algo: &str, settings: &ProtocolSettings, pair: &SplitPair) -> Result<Vec<RunRecord>> {
    let runner = loaded.config.runner(algo)?;
    let space = loaded.config.space()?;
    let records = tuning_phase(runner.as_ref(), &pair.tuning, &space, settings)?;
    write_records(&records, &loaded.algo_dir(algo)?.join("tuning.jsonl"))?;
    Ok(records)
}

fn select_one(records: &[RunRecord]) -> Result<HyperparameterAssignment> {
    let rows = aggregate_tuning(records)?;
    Ok(rows[select_best_row(&rows)?].assignment.clone())
}

fn eval_one(
    loaded: &Loaded,
    algo: &str,
    settings: &ProtocolSettings,
    pair: &SplitPair,
    tuning: Vec<RunRecord>,
    best: &HyperparameterAssignment,
) -> Result<PhaseReport> {
    let runner = loaded.config.runner(algo)?;
    let (_, eval) = evaluation_phase(runner.as_ref(), &pair.evaluation, best, settings)?;
    let dir = loaded.algo_dir(algo)?;
    write_records(&eval, &dir.join("evaluation.jsonl"))?;
    let mut all = tuning;
    all.extend(eval);
    canonical_sort(&mut all);
    let report = PhaseReport::from_records(&all, &loaded.config.condition, settings)?;
    report.write(&dir.join("report.json"))?;
    println!(
        "{algo}: {}",
        clproto::report::format_cell(&report.evaluation.metrics, report.diverged())
    );
    Ok(report)
}

fn cmd_tune(args: &Common) -> Result<()> {
    let loaded = Loaded::new(args)?;
    let settings = loaded.settings(args.seed)?;
    let pair = loaded.data()?;
    for algo in &loaded.algos {
        let recs = tune_one(&loaded, algo, &settings, &pair)?;
        println!("{algo}: {} tuning records", recs.len());
    }
    Ok(())
}

/// Reads `tuning.jsonl` under the output directory and writes `best.json`.
fn cmd_select(args: &Common) -> Result<()> {
    let loaded = Loaded::new(args)?;
    for algo in &loaded.algos {
        let dir = loaded.out.join(algo);
        let records = read_records(&dir.join("tuning.jsonl"))?;
        let best = select_one(&records)?;
        write_json(&best, &dir.join("best.json"))?;
        println!("{algo}: r={} {}", best.index, best.describe());
    }
    Ok(())
}

fn cmd_eval(args: &Common) -> Result<()> {
    let loaded = Loaded::new(args)?;
    let settings = loaded.settings(args.seed)?;
    let pair = loaded.data()?;
    for algo in &loaded.algos {
        let dir = loaded.out.join(algo);
        let tuning = read_records(&dir.join("tuning.jsonl"))?;
        let best: HyperparameterAssignment = serde_json::from_str(&fs::read_to_string(dir.join("best.json"))?)
            .map_err(|e| Error::Format(format!("best.json: {e}")))?;
        eval_one(&loaded, algo, &settings, &pair, tuning, &best)?;
    }
    Ok(())
}

fn cmd_run(args: &Common) -> Result<()> {
    let loaded = Loaded::new(args)?;
    let settings = loaded.settings(args.seed)?;
    let pair = loaded.data()?;
    for algo in &loaded.algos {
        let tuning = tune_one(&loaded, algo, &settings, &pair)?;
        let best = select_one(&tuning)?;
        write_json(&best, &loaded.algo_dir(algo)?.join("best.json"))?;
        eval_one(&loaded, algo, &settings, &pair, tuning, &best)?;
    }
    write_tables(&[loaded.out.clone()], &loaded.out)
}

/// Collects `*/report.json` and `*/evaluation.jsonl` under each input
/// directory and writes results and curve files into `out`.
fn write_tables(inputs: &[PathBuf], out: &Path) -> Result<()> {
    let mut reports = Vec::new();
    let mut records = Vec::new();
    for input in inputs {
        let mut dirs: Vec<PathBuf> = fs::read_dir(input)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.join("report.json").is_file())
            .collect();
        dirs.sort();
        for dir in dirs {
            reports.push(PhaseReport::read(&dir.join("report.json"))?);
            let eval = dir.join("evaluation.jsonl");
            if eval.is_file() {
                records.extend(read_records(&eval)?.into_iter().filter(|r| r.phase == Phase::Evaluation));
            }
        }
    }
    if reports.is_empty() {
        return Err(Error::Config(format!("no report.json found under {inputs:?}")));
    }
    fs::create_dir_all(out)?;
    let table = emit_results_table(&reports)?;
    fs::write(out.join("results.csv"), table.to_csv())?;
    fs::write(out.join("results.txt"), table.to_text())?;
    print!("{}", table.to_text());
    if !records.is_empty() {
        canonical_sort(&mut records);
        let curves = emit_curves(&records)?;
        fs::write(out.join("curves.csv"), curves.to_csv())?;
        fs::write(out.join("timing.csv"), curves.timing_csv())?;
    }
    Ok(())
}

fn cmd_report(args: &ReportArgs) -> Result<()> {
    let inputs = if args.inputs.is_empty() {
        vec![args.out.clone()]
    } else {
        args.inputs.clone()
    };
    write_tables(&inputs, &args.out)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match &cli.command {
        Command::Split(a) => cmd_split(a),
        Command::Tune(a) => cmd_tune(a),
        Command::Select(a) => cmd_select(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Run(a) => cmd_run(a),
        Command::Report(a) => cmd_report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("clproto: {e}");
            if e.is_config() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
