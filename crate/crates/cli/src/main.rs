//! `maxmin-svc`: train, predict, evaluate and benchmark the max-min SVC.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use maxmin_svc::data::{self, SplitSpec, StandardizationStats, TrainingSet};
use maxmin_svc::dual::AlphaState;
use maxmin_svc::kernel::{GramPack, GramPrecision, KernelParams};
use maxmin_svc::maxmin::{MaxMinConfig, StopReason};
use maxmin_svc::model::SvcModel;
use maxmin_svc::select::{fit, SelectorRegistry};
use maxmin_svc::solver::SolverKind;

#[derive(Parser)]
#[command(name = "maxmin-svc", version, about = "Gaussian-kernel SVC with gradient-based kernel width selection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model on a whole LIBSVM file.
    Train(TrainArgs),
    /// Write one predicted label per input line.
    Predict(PredictArgs),
    /// Repeated random train/test splits.
    Eval(EvalArgs),
    /// Compare PGA and SMO at a fixed γ.
    Bench(BenchArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum SolverArg {
    Pga,
    Smo,
}

impl From<SolverArg> for SolverKind {
    fn from(s: SolverArg) -> SolverKind {
        match s {
            SolverArg::Pga => SolverKind::Pga,
            SolverArg::Smo => SolverKind::Smo,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum PrecisionArg {
    F64,
    F32,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Baseline {
    None,
    Cv,
}

#[derive(Args)]
struct SolverOpts {
    /// Initial kernel width.
    #[arg(long, default_value_t = 0.004)]
    gamma0: f64,
    #[arg(long = "c", default_value_t = 1.0)]
    c_reg: f64,
    /// Inner KKT tolerance.
    #[arg(long, default_value_t = 1e-6)]
    eps1: f64,
    /// Outer |f′(γ)| tolerance.
    #[arg(long, default_value_t = 1e-3)]
    eps2: f64,
    #[arg(long, default_value_t = 500)]
    epoch_gamma: usize,
    #[arg(long, default_value_t = 2000)]
    epoch_alpha: usize,
    #[arg(long, value_enum, default_value = "pga")]
    solver: SolverArg,
    #[arg(long, value_enum, default_value = "f64")]
    gram_precision: PrecisionArg,
}

impl SolverOpts {
    fn config(&self) -> MaxMinConfig {
        MaxMinConfig {
            gamma0: self.gamma0,
            c_reg: self.c_reg,
            eps1: self.eps1,
            eps2: self.eps2,
            epoch_gamma: self.epoch_gamma,
            epoch_alpha: self.epoch_alpha,
            inner_solver: self.solver.into(),
            precision: match self.gram_precision {
                PrecisionArg::F64 => GramPrecision::F64,
                PrecisionArg::F32 => GramPrecision::F32,
            },
            ..MaxMinConfig::default()
        }
    }

    fn header(&self, command: &str) -> String {
        let c = self.config();
        format!(
            "maxmin-svc {command}: gamma0={} c={} eps1={:e} eps2={:e} epoch_gamma={} epoch_alpha={} solver={} gram_precision={}",
            c.gamma0,
            c.c_reg,
            c.eps1,
            c.eps2,
            c.epoch_gamma,
            c.epoch_alpha,
            c.inner_solver.name(),
            match c.precision {
                GramPrecision::F64 => "f64",
                GramPrecision::F32 => "f32",
            }
        )
    }
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    /// Model file to write.
    #[arg(long)]
    out: PathBuf,
    /// γ-trace CSV to write.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Accepted for symmetry with `eval`; training on the whole file uses no randomness.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    opts: SolverOpts,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 30, value_parser = clap::value_parser!(u64).range(1..))]
    repeats: u64,
    /// Base seed; repeat i uses seed + i.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Training share of each split.
    #[arg(long, default_value_t = 0.8)]
    fraction: f64,
    /// Per-split CSV.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "none")]
    baseline: Baseline,
    #[command(flatten)]
    opts: SolverOpts,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    data: PathBuf,
    /// Summary CSV.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    opts: SolverOpts,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(a) => train(&a),
        Command::Predict(a) => predict(&a),
        Command::Eval(a) => eval(&a),
        Command::Bench(a) => bench(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn load_set(path: &Path) -> Result<TrainingSet> {
    data::parse_sparse_dataset(&read_text(path)?).with_context(|| format!("parsing {}", path.display()))
}

fn train(a: &TrainArgs) -> Result<()> {
    let config = a.opts.config();
    config.validate()?;
    println!("{}", a.opts.header("train"));
    let set = load_set(&a.data)?;
    let registry = SelectorRegistry::with_defaults(config);
    let f = fit(registry.get("maxmin").expect("registered"), &set)?;
    let trace = f.selection.trace.as_ref().expect("maxmin records a trace");
    let stop = f.selection.stop.expect("maxmin reports a stop reason");

    write_text(&a.out, &f.model.serialize())?;
    if let Some(path) = &a.trace {
        write_text(path, &trace.to_csv())?;
    }
    let final_grad = trace.records.last().map_or(f64::NAN, |r| r.grad_gamma);
    let acc = f.model.accuracy(&set)?;
    println!("selected gamma: {}", f.model.gamma);
    println!("outer iterations: {}", trace.len());
    println!("final |f'(gamma)|: {:e}", final_grad.abs());
    println!("support vectors: {}", f.model.support.len());
    println!("train accuracy: {:.2}% ({}/{})", 100.0 * acc.accuracy, acc.n_correct, acc.n_total);
    println!("stop: {}", stop.as_str());
    if stop != StopReason::Converged {
        println!("WARN: outer loop ended {} with |f'(gamma)| = {:e} > eps2", stop.as_str(), final_grad.abs());
    }
    Ok(())
}

fn predict(a: &PredictArgs) -> Result<()> {
    let model = SvcModel::deserialize(&read_text(&a.model)?)
        .with_context(|| format!("loading model {}", a.model.display()))?;
    let (samples, _) = data::parse_unlabeled(&read_text(&a.data)?)
        .with_context(|| format!("parsing {}", a.data.display()))?;
    let labels = model.decide_batch(&samples)?;
    let mut out = String::new();
    for l in labels {
        out.push_str(l.as_str());
        out.push('\n');
    }
    write_text(&a.out, &out)
}

struct EvalRow {
    repeat: u64,
    seed: u64,
    accuracy: f64,
    gamma: f64,
    outer: usize,
    models: usize,
    stop: &'static str,
    cv: Option<(f64, f64, f64, usize)>,
}

fn eval(a: &EvalArgs) -> Result<()> {
    let config = a.opts.config();
    config.validate()?;
    println!("{}", a.opts.header("eval"));
    let set = load_set(&a.data)?;
    let registry = SelectorRegistry::with_defaults(config);

    let rows: Vec<EvalRow> = (0..a.repeats)
        .into_par_iter()
        .map(|i| -> Result<EvalRow> {
            let seed = a.seed.wrapping_add(i);
            let (tr, te) = data::split(&set, SplitSpec::new(a.fraction, seed))?;
            let f = fit(registry.get("maxmin").expect("registered"), &tr)?;
            let outer = f.selection.trace.as_ref().map_or(0, |t| t.len());
            let cv = if a.baseline == Baseline::Cv {
                let cv = maxmin_svc::select::CvSelector {
                    seed,
                    eps1: config.eps1,
                    epoch_alpha: config.epoch_alpha,
                    solver: config.inner_solver,
                    ..Default::default()
                };
                let g = fit(&cv, &tr)?;
                Some((
                    g.model.accuracy(&te)?.accuracy,
                    g.selection.gamma,
                    g.selection.c_reg,
                    g.selection.models_trained,
                ))
            } else {
                None
            };
            Ok(EvalRow {
                repeat: i,
                seed,
                accuracy: f.model.accuracy(&te)?.accuracy,
                gamma: f.selection.gamma,
                outer,
                models: f.selection.models_trained,
                stop: f.selection.stop.map_or("-", |s| s.as_str()),
                cv,
            })
        })
        .collect::<Result<_>>()?;

    let mut csv = String::from("repeat,seed,accuracy,gamma,outer_iterations,models_trained,stop");
    if a.baseline == Baseline::Cv {
        csv.push_str(",cv_accuracy,cv_gamma,cv_c,cv_models_trained");
    }
    csv.push('\n');
    for r in &rows {
        let _ = write!(
            csv,
            "{},{},{},{:e},{},{},{}",
            r.repeat, r.seed, r.accuracy, r.gamma, r.outer, r.models, r.stop
        );
        if let Some((acc, g, c, m)) = r.cv {
            let _ = write!(csv, ",{acc},{g:e},{c:e},{m}");
        }
        csv.push('\n');
        println!(
            "split {:>3} seed {:>4}: accuracy {:6.2}%  gamma {:.4e}  outer {:>3}  {}",
            r.repeat,
            r.seed,
            100.0 * r.accuracy,
            r.gamma,
            r.outer,
            r.stop
        );
    }
    if let Some(path) = &a.out {
        write_text(path, &csv)?;
    }

    let (m, s) = mean_std(rows.iter().map(|r| 100.0 * r.accuracy));
    let (outer, _) = mean_std(rows.iter().map(|r| r.outer as f64));
    let (solves, _) = mean_std(rows.iter().map(|r| r.models as f64));
    let converged = rows.iter().filter(|r| r.stop == StopReason::Converged.as_str()).count();
    println!("maxmin accuracy: {m:.2}±{s:.2} over {} splits", rows.len());
    println!("maxmin models (outer iterations): mean {outer:.2}; inner solves: mean {solves:.2}; converged {converged}/{}", rows.len());
    if a.baseline == Baseline::Cv {
        let (cm, cs) = mean_std(rows.iter().filter_map(|r| r.cv).map(|c| 100.0 * c.0));
        let count = rows.iter().filter_map(|r| r.cv).map(|c| c.3).max().unwrap_or(0);
        println!("cv accuracy: {cm:.2}±{cs:.2}");
        println!("cv models trained per split: {count}");
    }
    Ok(())
}

/// Population mean and standard deviation.
fn mean_std(xs: impl Iterator<Item = f64>) -> (f64, f64) {
    let v: Vec<f64> = xs.collect();
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n;
    (m, var.sqrt())
}

fn bench(a: &BenchArgs) -> Result<()> {
    let config = a.opts.config();
    println!("{}", a.opts.header("bench"));
    let set = load_set(&a.data)?;
    if set.pos_idx().is_empty() || set.neg_idx().is_empty() {
        bail!("bench needs both classes in {}", a.data.display());
    }
    let std_set = StandardizationStats::fit(&set).transform(&set);
    let pack = GramPack::build(&std_set, KernelParams::new(config.gamma0, config.c_reg)?, config.precision);

    let mut csv = String::from("solver,iterations,converged,seconds,objective\n");
    let mut objs = Vec::new();
    for kind in [SolverKind::Pga, SolverKind::Smo] {
        let start = Instant::now();
        let out = kind.solver().solve(&pack, AlphaState::uniform(&pack), config.eps1, config.epoch_alpha);
        let secs = start.elapsed().as_secs_f64();
        let obj = out.state.obj();
        println!(
            "{}: iterations {} converged {} time {:.4}s objective {:.12e}",
            kind.name(),
            out.iterations,
            out.converged,
            secs,
            obj
        );
        let _ = writeln!(csv, "{},{},{},{secs},{obj:e}", kind.name(), out.iterations, out.converged);
        objs.push(obj);
    }
    let delta = (objs[0] - objs[1]).abs();
    let tol = 1e-6 * (1.0 + objs[0].abs());
    println!("|delta objective|: {delta:e} (tolerance {tol:e})");
    if let Some(path) = &a.out {
        write_text(path, &csv)?;
    }
    Ok(())
}
