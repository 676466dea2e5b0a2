use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use piproute_core::eval::{
    aggregate, gap_reference, overlap, plot_rows, solve, write_plotdata, write_report_csv, write_report_json,
    EvalReport, Method, RefMode, SolutionSet,
};
use piproute_core::instances::{generate_set, normalize_tsptw, parse_dumas_raw, read_dataset, write_dataset, RHO};
use piproute_core::masking::{
    audit_masks, exact_mask, local_mask, pi_mask, solve_tsptw_labels, unvisited_mask, AuditConfig,
};
use piproute_core::policy::{rollout, Decode, RolloutOptions};
use piproute_core::training::{fine_tune, train_lagrangian, train_pip, train_pipd};
use piproute_core::{
    env::tour_metrics, Checkpoint, ConstructionState, Error, Hardness, Instance, MaskMode, TrainConfig, Variant,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEED_ENV: &str = "PIPROUTE_SEED";
/// Label budget for the benchmark solver.
const BENCH_LABELS: usize = 4_000_000;

#[derive(Parser)]
#[command(
    name = "piproute",
    version,
    about = "Constrained routing with lookahead feasibility masks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a dataset of random instances.
    Gen(GenArgs),
    /// Solve every instance of a dataset with one method.
    Solve(SolveArgs),
    /// Train a policy (and predictor) and save a checkpoint.
    Train(TrainArgs),
    /// Aggregate solution files into a metrics report.
    Eval(EvalArgs),
    /// Audit lookahead masks against the exact oracles.
    Oracle(OracleArgs),
    /// Solve Dumas benchmark files and compare with published optima.
    Bench(BenchArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    variant: Variant,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    hardness: Hardness,
    #[arg(long)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    GreedyL,
    GreedyC,
    Random,
    Policy,
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    method: MethodArg,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long, default_value = "pi0")]
    mask: MaskMode,
    #[arg(long = "ns", default_value_t = 1)]
    n_s: usize,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Decode the policy greedily instead of sampling.
    #[arg(long)]
    argmax: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum TrainMode {
    Lagrangian,
    Pip,
    Pipd,
    Finetune,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    mode: TrainMode,
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out_checkpoint: PathBuf,
    /// Pretrained checkpoint, required by `finetune`.
    #[arg(long)]
    init_checkpoint: Option<PathBuf>,
    /// Per-epoch log, one JSON object per line.
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, num_args = 1.., required = true)]
    solutions: Vec<PathBuf>,
    /// `exact`, `best`, or a JSON file of reference lengths.
    #[arg(long = "ref")]
    reference: Option<RefMode>,
    /// CSV report; a JSON copy is written next to it.
    #[arg(long)]
    report: PathBuf,
    /// Restrict objective and gap to instances feasible under every solution file.
    #[arg(long)]
    overlap: bool,
    /// Per-instance CSV for plotting.
    #[arg(long)]
    plotdata: Option<PathBuf>,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    check_masks: bool,
    #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
    steps: Vec<usize>,
    /// Minimum number of states to check.
    #[arg(long, default_value_t = 100_000)]
    samples: usize,
    #[arg(long, default_value_t = 12)]
    max_remaining: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write per-step masks of one random construction on the first instance.
    #[arg(long)]
    dump_masks: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Directory of benchmark files (or a single file).
    #[arg(long)]
    dumas: PathBuf,
    /// Also decode this checkpoint greedily under the depth-1 mask.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Core(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Core(e) => match e {
                Error::Io { .. } | Error::Csv(_) => 3,
                Error::InvalidConfig(_)
                | Error::UnsupportedDepth(_)
                | Error::NegativeMultiplier(_)
                | Error::TooLarge { .. } => 1,
                _ => 2,
            },
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Usage(m) => f.write_str(m),
            Failure::Core(e) => write!(f, "{e}"),
        }
    }
}

type CliResult<T = ()> = Result<T, Failure>;

/// Config-file problems are usage errors; read failures stay I/O errors.
fn as_config(e: Error) -> Failure {
    match e {
        Error::Io { .. } => Failure::Core(e),
        other => Failure::Usage(other.to_string()),
    }
}

fn effective_seed(seed: u64) -> CliResult<u64> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| Failure::Usage(format!("{SEED_ENV}=`{v}` is not an unsigned integer"))),
        Err(_) => Ok(seed),
    }
}

fn load_dataset(path: &Path) -> CliResult<Vec<Instance>> {
    let instances = read_dataset(path)?;
    if instances.is_empty() {
        return Err(Error::InvalidInstance(format!("{} holds no instances", path.display())).into());
    }
    Ok(instances)
}

fn check_variant(ckpt: &Checkpoint, instances: &[Instance]) -> CliResult {
    if instances.iter().any(|i| i.variant() != ckpt.variant) {
        return Err(Error::VariantMismatch("checkpoint and dataset variants differ").into());
    }
    Ok(())
}

fn cmd_gen(a: GenArgs) -> CliResult {
    let seed = effective_seed(a.seed)?;
    let instances = generate_set(a.variant, a.n, a.hardness, a.count, seed).map_err(as_config)?;
    write_dataset(&a.out, &instances)?;
    eprintln!("wrote {} instances to {}", instances.len(), a.out.display());
    Ok(())
}

fn cmd_solve(a: SolveArgs) -> CliResult {
    let seed = effective_seed(a.seed)?;
    let instances = load_dataset(&a.input)?;
    let method = match a.method {
        MethodArg::GreedyL => Method::GreedyL,
        MethodArg::GreedyC => Method::GreedyC,
        MethodArg::Random => {
            if a.mask == MaskMode::Predicted {
                return Err(Failure::Usage("`--mask predicted` needs a policy checkpoint".into()));
            }
            Method::Random { mask: a.mask }
        }
        MethodArg::Policy => {
            let path = a
                .checkpoint
                .as_ref()
                .ok_or_else(|| Failure::Usage("`--method policy` requires `--checkpoint`".into()))?;
            let ckpt = Checkpoint::load(path)?;
            check_variant(&ckpt, &instances)?;
            let predictor = ckpt.predictor()?;
            if a.mask == MaskMode::Predicted && predictor.is_none() {
                return Err(Failure::Usage(format!(
                    "{} has no predictor for `--mask predicted`",
                    path.display()
                )));
            }
            Method::Policy {
                params: ckpt.policy()?,
                predictor,
                mask: a.mask,
                decode: if a.argmax { Decode::Greedy } else { Decode::Sample },
            }
        }
    };
    let set = solve(&method, &instances, a.n_s, seed)?;
    set.save(&a.out)?;
    eprintln!(
        "{}: {} instances x {} solutions in {:.3}s",
        set.method,
        instances.len(),
        set.n_s,
        set.wall_s
    );
    Ok(())
}

fn cmd_train(a: TrainArgs) -> CliResult {
    let mut config = TrainConfig::load(&a.config).map_err(as_config)?;
    config.seed = effective_seed(config.seed)?;
    let outcome = match a.mode {
        TrainMode::Lagrangian => train_lagrangian(&config),
        TrainMode::Pip => train_pip(&config),
        TrainMode::Pipd => train_pipd(&config),
        TrainMode::Finetune => {
            let path = a
                .init_checkpoint
                .as_ref()
                .ok_or_else(|| Failure::Usage("`--mode finetune` requires `--init-checkpoint`".into()))?;
            let ckpt = Checkpoint::load(path)?;
            if ckpt.variant != config.variant {
                return Err(Error::VariantMismatch("checkpoint and config variants differ").into());
            }
            fine_tune(&ckpt.policy()?, &config)
        }
    }
    .map_err(|e| match e {
        Error::InvalidConfig(_) | Error::NegativeMultiplier(_) => as_config(e),
        other => Failure::Core(other),
    })?;
    let mut ckpt = Checkpoint::new(config.variant, &outcome.policy, outcome.predictor.as_ref());
    let mode = match a.mode {
        TrainMode::Lagrangian => "lagrangian",
        TrainMode::Pip => "pip",
        TrainMode::Pipd => "pipd",
        TrainMode::Finetune => "finetune",
    };
    ckpt.meta.insert("mode".into(), mode.into());
    ckpt.meta
        .insert("config".into(), serde_json::to_value(&config).map_err(Error::from)?);
    ckpt.save(&a.out_checkpoint)?;
    if let Some(log) = &a.log {
        outcome.write_log(log)?;
    }
    if let Some(last) = outcome.log.last() {
        eprintln!(
            "{mode}: {} epochs, last epoch sol_infsb {:.4}, mean reward {:.4}",
            outcome.log.len(),
            last.sol_infsb,
            last.mean_reward
        );
    }
    Ok(())
}

fn json_path(report: &Path) -> PathBuf {
    let mut p = report.to_path_buf();
    if p.extension().is_some_and(|e| e == "json") {
        p.set_extension("json.json");
    } else {
        p.set_extension("json");
    }
    p
}

fn cmd_eval(a: EvalArgs) -> CliResult {
    let instances = load_dataset(&a.input)?;
    let sets: Vec<SolutionSet> = a
        .solutions
        .iter()
        .map(|p| {
            let s = SolutionSet::load(p)?;
            s.verify(&instances)?;
            Ok(s)
        })
        .collect::<Result<_, Error>>()?;
    let refs = a
        .reference
        .as_ref()
        .map(|mode| gap_reference(&instances, mode, &sets))
        .transpose()?;
    let include = a.overlap.then(|| overlap(&sets));
    let dataset = a
        .input
        .file_stem()
        .map_or_else(|| a.input.display().to_string(), |s| s.to_string_lossy().into_owned());
    let mut reports = Vec::with_capacity(sets.len());
    let mut rows = Vec::new();
    for set in &sets {
        let metrics = aggregate(&set.outcomes(), refs.as_deref(), include.as_deref())?;
        reports.push(EvalReport::new(set, &dataset, &instances, &metrics));
        rows.extend(plot_rows(set, refs.as_deref()));
    }
    write_report_csv(&a.report, &reports)?;
    write_report_json(json_path(&a.report), &reports)?;
    if let Some(p) = &a.plotdata {
        write_plotdata(p, &rows)?;
    }
    for r in &reports {
        let fmt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.4}"));
        println!(
            "{}\tsol_infsb={:.4}\tinst_infsb={:.4}\tobj={}\tgap={}",
            r.method,
            r.sol_infsb,
            r.inst_infsb,
            fmt(r.mean_obj),
            fmt(r.mean_gap)
        );
    }
    Ok(())
}

fn dump_masks(instance: &Instance, depths: &[usize], seed: u64, path: &Path) -> CliResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = ConstructionState::new(instance);
    let mut out = String::new();
    let mut step = 0;
    while !state.is_complete() {
        out.push_str(&local_mask(&state).dump_line(step));
        out.push('\n');
        for &k in depths.iter().filter(|&&k| k > 0) {
            out.push_str(&pi_mask(&state, k)?.dump_line(step));
            out.push('\n');
        }
        if let Ok(exact) = exact_mask(&state) {
            out.push_str(&exact.dump_line(step));
            out.push('\n');
        }
        let local = local_mask(&state);
        let options = if local.is_empty() {
            unvisited_mask(&state)
        } else {
            local
        };
        let nodes: Vec<usize> = options.nodes().collect();
        state.step(nodes[rng.random_range(0..nodes.len())])?;
        step += 1;
    }
    fs::write(path, out).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(())
}

/// Exit status 2 when the audit finds an unsound or non-nested mask.
fn cmd_oracle(a: OracleArgs) -> CliResult {
    if !a.check_masks && a.dump_masks.is_none() {
        return Err(Failure::Usage(
            "nothing to do: pass `--check-masks` and/or `--dump-masks`".into(),
        ));
    }
    let seed = effective_seed(a.seed)?;
    let instances = load_dataset(&a.input)?;
    if let Some(path) = &a.dump_masks {
        dump_masks(&instances[0], &a.steps, seed, path)?;
    }
    if !a.check_masks {
        return Ok(());
    }
    let config = AuditConfig {
        depths: a.steps.clone(),
        min_states: a.samples,
        max_remaining: a.max_remaining,
        seed,
    };
    let report = audit_masks(&instances, &config)?;
    println!("{}", serde_json::to_string(&report).map_err(Error::from)?);
    if report.is_clean() {
        Ok(())
    } else {
        Err(Error::InvalidInstance(format!(
            "mask audit failed: unsound {:?}, {} nesting violations",
            report.unsound, report.nesting_violations
        ))
        .into())
    }
}

/// Published optima for the 20-customer, width-20 benchmark files.
fn known_optimum(name: &str) -> Option<f64> {
    let table = BTreeMap::from([
        ("n20w20.001", 378.0),
        ("n20w20.002", 286.0),
        ("n20w20.003", 394.0),
        ("n20w20.004", 396.0),
        ("n20w20.005", 352.0),
    ]);
    let stem = name.strip_suffix(".txt").unwrap_or(name);
    table.get(stem).copied()
}

fn bench_files(path: &Path) -> CliResult<Vec<PathBuf>> {
    if path.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let io = |e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    };
    let mut files = Vec::new();
    for entry in fs::read_dir(path).map_err(io)? {
        let p = entry.map_err(io)?.path();
        if p.is_file() {
            files.push(p);
        }
    }
    files.sort();
    if files.is_empty() {
        return Err(Error::Io {
            path: path.to_path_buf(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "no benchmark files"),
        }
        .into());
    }
    Ok(files)
}

fn cmd_bench(a: BenchArgs) -> CliResult {
    let policy = a
        .checkpoint
        .as_ref()
        .map(|p| -> CliResult<_> {
            let ckpt = Checkpoint::load(p)?;
            if ckpt.variant != Variant::Tsptw {
                return Err(Error::VariantMismatch("benchmark files are TSPTW").into());
            }
            Ok((ckpt.policy()?, ckpt.predictor()?))
        })
        .transpose()?;
    println!("file,n,optimum,listed,diff,policy_length,policy_feasible");
    for file in bench_files(&a.dumas)? {
        let name = file
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let text = fs::read_to_string(&file).map_err(|e| Error::Io {
            path: file.clone(),
            source: e,
        })?;
        let raw = parse_dumas_raw(&text)?;
        let inst = normalize_tsptw(&raw)?;
        let best = solve_tsptw_labels(&inst, BENCH_LABELS)?;
        let optimum = best.as_ref().map(|(_, len)| len * RHO);
        let listed = known_optimum(&name);
        let show = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.3}"));
        let diff = optimum.zip(listed).map(|(o, l)| o - l);
        let (plen, pfeas) = match &policy {
            Some((params, predictor)) => {
                let instance = Instance::Tsptw(inst.clone());
                let opts = RolloutOptions {
                    mask: MaskMode::Pi1,
                    predictor: predictor.as_ref(),
                    decode: Decode::Greedy,
                    ..Default::default()
                };
                let mut rng = ChaCha8Rng::seed_from_u64(0);
                let trace = rollout(params, &instance, &opts, &mut rng)?;
                let m = tour_metrics(&instance, &trace.tour)?;
                (format!("{:.3}", m.length * RHO), m.feasible.to_string())
            }
            None => (String::new(), String::new()),
        };
        println!(
            "{name},{},{},{},{},{plen},{pfeas}",
            inst.n(),
            show(optimum),
            show(listed),
            show(diff)
        );
    }
    Ok(())
}

fn run(cli: Cli) -> CliResult {
    match cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Solve(a) => cmd_solve(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Oracle(a) => cmd_oracle(a),
        Command::Bench(a) => cmd_bench(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("piproute: error: {f}");
            ExitCode::from(f.exit_code())
        }
    }
}
