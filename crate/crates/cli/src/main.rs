//! Experiment harness: runs the verification protocols, axiom checks, and
//! oracles, emitting one JSON record per line. Identical arguments and seed
//! produce byte-identical output; wall-clock timings are only included when
//! `--timing` is passed.

use std::collections::BTreeMap;
use std::io::Write;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use pdqma_core::encode::{line_test, ExtensionOracle, LineTestMode, ProofTable};
use pdqma_core::field::{choose_field_size, FieldSpec};
use pdqma_core::hv::run_axiom_suite;
use pdqma_core::pcp::{self, ConstraintGraphInstance};
use pdqma_core::protocol::{
    advice_retrieval, run_transcripts, AdviceError, AdviceMode, ProtocolMode, ProtocolParams, ProverKind, Stats,
    Transcript,
};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Parser)]
#[command(
    name = "pdqma-sim",
    about = "Desk-scale PDQMA/DQMA verification experiments",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Verification with non-collapsing sampling of the collapsed witness.
    Pdqma(ProtocolArgs),
    /// Verification collecting the support from a hidden-variable history.
    Dqma(ProtocolArgs),
    /// Single-point retrieval from an honest extension state.
    Advice(AdviceArgs),
    /// Marginalization / indifference / row-sum checks on random instances.
    Axioms(AxiomArgs),
    /// Lines-point low-degree tester.
    Ldt(LdtArgs),
    /// Brute-force soundness value of an instance.
    PcpOracle(PcpOracleArgs),
}

#[derive(Args)]
struct ProtocolArgs {
    /// Bundled instance name (tri16 | k4bin | path8) or a file path.
    #[arg(long)]
    instance: String,
    /// Witness strategy.
    #[arg(long, value_enum)]
    prover: ProverArg,
    #[arg(long, default_value_t = 300)]
    trials: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Field size override (default: smallest admissible prime).
    #[arg(long)]
    q: Option<u64>,
    /// Non-collapsing sample count override.
    #[arg(long)]
    samples: Option<usize>,
    /// Uniformity rejection threshold override.
    #[arg(long)]
    tau: Option<f64>,
    /// Juggle round trips per hash.
    #[arg(long)]
    inner_reps: Option<usize>,
    /// Juggle hash repetitions.
    #[arg(long)]
    outer_reps: Option<usize>,
    /// Use the conservative 2 l^2 inner repetition count.
    #[arg(long, conflicts_with = "inner_reps")]
    faithful_inner: bool,
    /// Doubled-value fraction for the multivalued prover.
    #[arg(long, default_value_t = 1.0)]
    epsilon: f64,
    /// Amplitude factor for the skewed prover.
    #[arg(long, default_value_t = 2.0)]
    gamma: f64,
    /// Corrupted fraction for the planted prover.
    #[arg(long, default_value_t = 0.05)]
    delta: f64,
    /// Seed for the random-function and planted provers.
    #[arg(long, default_value_t = 1)]
    prover_seed: u64,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Include per-trial elapsed milliseconds (breaks byte-determinism).
    #[arg(long)]
    timing: bool,
}

#[derive(Args)]
struct AdviceArgs {
    #[arg(long, default_value_t = 4)]
    n: usize,
    #[arg(long)]
    q: Option<u64>,
    #[arg(long, default_value_t = 3)]
    sigma: u64,
    #[arg(long, value_enum, default_value_t = AdviceModeArg::Noncollapsing)]
    mode: AdviceModeArg,
    #[arg(long, default_value_t = 200)]
    trials: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Non-collapsing sample budget override.
    #[arg(long)]
    budget: Option<usize>,
    /// Retrieve from this proof-table file instead of fresh random tables
    /// (one `<bitstring> <symbol-index>` line per point).
    #[arg(long)]
    table_file: Option<String>,
}

#[derive(Args)]
struct AxiomArgs {
    #[arg(long, default_value_t = 100)]
    instances: usize,
    #[arg(long, default_value_t = 16)]
    max_dim: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Args)]
struct LdtArgs {
    /// Which function the tester reads.
    #[arg(long, value_enum, default_value_t = TableArg::Honest)]
    table: TableArg,
    #[arg(long, default_value_t = 3)]
    n: usize,
    #[arg(long)]
    q: Option<u64>,
    #[arg(long, default_value_t = 3)]
    sigma: u64,
    /// Degree bound for the per-line fit (default: n).
    #[arg(long)]
    degree: Option<usize>,
    #[arg(long, default_value_t = 500)]
    lines: usize,
    #[arg(long, value_enum, default_value_t = PointModeArg::Full)]
    point_mode: PointModeArg,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Args)]
struct PcpOracleArgs {
    #[arg(long)]
    instance: String,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProverArg {
    Honest,
    Random,
    Multivalued,
    Skewed,
    Planted,
}

#[derive(Clone, Copy, ValueEnum)]
enum AdviceModeArg {
    Noncollapsing,
    HiddenVariable,
}

#[derive(Clone, Copy, ValueEnum)]
enum TableArg {
    /// The multilinear extension of a random proof table.
    Honest,
    /// A uniformly random value table over the whole domain.
    Random,
}

#[derive(Clone, Copy, ValueEnum)]
enum PointModeArg {
    Full,
    Sampled,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

const EXIT_USAGE: u8 = 2;
const EXIT_INSTANCE: u8 = 3;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Instance(message)) => {
            eprintln!("instance error: {message}");
            ExitCode::from(EXIT_INSTANCE)
        }
        Err(CliError::Other(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}

enum CliError {
    Instance(String),
    Other(String),
}

macro_rules! from_error {
    ($($ty:ty),*) => {
        $(impl From<$ty> for CliError {
            fn from(e: $ty) -> Self {
                CliError::Other(e.to_string())
            }
        })*
    };
}

from_error!(
    pdqma_core::field::FieldError,
    pdqma_core::encode::EncodeError,
    pdqma_core::protocol::ProtocolError
);

fn load_instance(name_or_path: &str) -> Result<ConstraintGraphInstance, CliError> {
    if let Some(instance) = pcp::builtin(name_or_path) {
        return Ok(instance);
    }
    let text = std::fs::read_to_string(name_or_path)
        .map_err(|e| CliError::Instance(format!("{name_or_path}: {e}")))?;
    ConstraintGraphInstance::parse(&text).map_err(|e| CliError::Instance(format!("{name_or_path}: {e}")))
}

fn emit(line: &serde_json::Value) {
    let mut out = std::io::stdout().lock();
    writeln!(out, "{line}").expect("stdout");
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Pdqma(args) => run_protocol(args, ProtocolMode::Pdqma),
        Command::Dqma(args) => run_protocol(args, ProtocolMode::Dqma),
        Command::Advice(args) => run_advice(args),
        Command::Axioms(args) => run_axioms(args),
        Command::Ldt(args) => run_ldt(args),
        Command::PcpOracle(args) => run_pcp_oracle(args),
    }
}

fn prover_kind(args: &ProtocolArgs) -> ProverKind {
    match args.prover {
        ProverArg::Honest => ProverKind::Honest { assignment: None },
        ProverArg::Random => ProverKind::RandomFunction { seed: args.prover_seed },
        ProverArg::Multivalued => ProverKind::MultiValued { fraction: args.epsilon },
        ProverArg::Skewed => ProverKind::SkewedAmplitude { factor: args.gamma },
        ProverArg::Planted => ProverKind::PlantedCorruption { fraction: args.delta, seed: args.prover_seed },
    }
}

fn prover_name(arg: ProverArg) -> &'static str {
    match arg {
        ProverArg::Honest => "honest",
        ProverArg::Random => "random",
        ProverArg::Multivalued => "multivalued",
        ProverArg::Skewed => "skewed",
        ProverArg::Planted => "planted",
    }
}

fn trial_record(t: &Transcript, timing: bool) -> serde_json::Value {
    let mut record = json!({
        "trial": t.trial,
        "verdict": if t.verdict { "accept" } else { "reject" },
        "reason": t.reason.as_str(),
        "seed": t.seed,
    });
    if let Some((pw, pw2)) = t.recovered {
        record["p_w"] = json!(pw);
        record["p_w2"] = json!(pw2);
    }
    if timing {
        record["elapsed_ms"] = json!(t.elapsed.as_millis() as u64);
    }
    record
}

fn trial_csv(t: &Transcript, timing: bool) -> String {
    let (pw, pw2) = match t.recovered {
        Some((a, b)) => (a.to_string(), b.to_string()),
        None => (String::new(), String::new()),
    };
    let mut row = format!(
        "{},{},{},{},{},{}",
        t.trial,
        if t.verdict { "accept" } else { "reject" },
        t.reason.as_str(),
        t.seed,
        pw,
        pw2
    );
    if timing {
        row.push_str(&format!(",{}", t.elapsed.as_millis()));
    }
    row
}

fn run_protocol(args: ProtocolArgs, mode: ProtocolMode) -> Result<(), CliError> {
    let instance = load_instance(&args.instance)?;
    let sigma = instance.sigma_size() as u64;
    let q = args.q.unwrap_or_else(|| choose_field_size(instance.n(), sigma, 1));
    let spec = FieldSpec::new(q, instance.n(), sigma)?;
    let mut params = ProtocolParams::defaults(spec, mode);
    if let Some(k) = args.samples {
        params.sample_count = k;
    }
    if let Some(tau) = args.tau {
        params.tvd_threshold = tau;
    }
    if let Some(inner) = args.inner_reps {
        params.juggle_inner = inner;
    }
    if args.faithful_inner {
        let bits = (128 - ((q as u128).pow(spec.n as u32 + 1) - 1).leading_zeros()) as usize;
        params.juggle_inner = 2 * bits * bits;
    }
    if let Some(outer) = args.outer_reps {
        params.juggle_outer = outer;
    }
    let kind = prover_kind(&args);
    let transcripts = run_transcripts(&instance, &kind, &params, args.trials, args.seed)?;

    match args.format {
        Format::Json => {
            for t in &transcripts {
                emit(&trial_record(t, args.timing));
            }
        }
        Format::Csv => {
            let mut header = String::from("trial,verdict,reason,seed,p_w,p_w2");
            if args.timing {
                header.push_str(",elapsed_ms");
            }
            let mut out = std::io::stdout().lock();
            writeln!(out, "{header}").expect("stdout");
            for t in &transcripts {
                writeln!(out, "{}", trial_csv(t, args.timing)).expect("stdout");
            }
        }
    }

    let stats = Stats::from_transcripts(&transcripts);
    let histogram: BTreeMap<&str, usize> = stats.reasons.iter().map(|(r, &c)| (r.as_str(), c)).collect();
    let mode_name = match mode {
        ProtocolMode::Pdqma => "pdqma",
        ProtocolMode::Dqma => "dqma",
    };
    emit(&json!({
        "summary": true,
        "command": mode_name,
        "instance": args.instance,
        "prover": prover_name(args.prover),
        "trials": stats.trials,
        "seed": args.seed,
        "acceptance": stats.acceptance,
        "wilson_lo": stats.wilson_lo,
        "wilson_hi": stats.wilson_hi,
        "reason_histogram": histogram,
        "params": {
            "mode": mode_name,
            "n": spec.n,
            "q": spec.q,
            "sigma_size": spec.sigma_size,
            "sample_count": params.sample_count,
            "tvd_threshold": params.tvd_threshold,
            "juggle_inner": params.juggle_inner,
            "juggle_outer": params.juggle_outer,
        },
    }));
    Ok(())
}

fn run_advice(args: AdviceArgs) -> Result<(), CliError> {
    let fixed_table = match &args.table_file {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Instance(format!("{path}: {e}")))?;
            let table =
                ProofTable::parse(&text).map_err(|e| CliError::Instance(format!("{path}: {e}")))?;
            if table.n() != args.n {
                return Err(CliError::Instance(format!("{path}: table is over {} bits, --n is {}", table.n(), args.n)));
            }
            Some(table)
        }
        None => None,
    };
    let q = args.q.unwrap_or_else(|| choose_field_size(args.n, args.sigma, 1));
    let spec = FieldSpec::new(q, args.n, args.sigma)?;
    let mode = match args.mode {
        AdviceModeArg::Noncollapsing => AdviceMode::NonCollapsing,
        AdviceModeArg::HiddenVariable => AdviceMode::HiddenVariable,
    };
    let mut table_rng = ChaCha8Rng::seed_from_u64(args.seed);
    let mut correct = 0usize;
    let mut failures = 0usize;
    for trial in 0..args.trials {
        let table = match &fixed_table {
            Some(t) => t.clone(),
            None => ProofTable::random(args.n, args.sigma, &mut table_rng)?,
        };
        let x: u32 = table_rng.random_range(0..1u32 << args.n);
        let bits = pcp::index_to_bits(x, args.n);
        let expected = table.value_at_index(x as usize);
        let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
        rng.set_stream(trial as u64 + 1);
        let record = match advice_retrieval(&table, &bits, mode, &spec, args.budget, &mut rng) {
            Ok(outcome) => {
                let ok = outcome.value == expected;
                if ok {
                    correct += 1;
                }
                json!({
                    "trial": trial,
                    "verdict": if ok { "correct" } else { "incorrect" },
                    "value": outcome.value,
                    "expected": expected,
                    "seed": args.seed,
                })
            }
            Err(e @ (AdviceError::IncompleteCollection { .. } | AdviceError::InterpolationFailed | AdviceError::OutOfAlphabet(_))) => {
                failures += 1;
                json!({
                    "trial": trial,
                    "verdict": "failure",
                    "error": e.to_string(),
                    "expected": expected,
                    "seed": args.seed,
                })
            }
            Err(AdviceError::Protocol(e)) => return Err(e.into()),
        };
        emit(&record);
    }
    emit(&json!({
        "summary": true,
        "command": "advice",
        "mode": match mode { AdviceMode::NonCollapsing => "noncollapsing", AdviceMode::HiddenVariable => "hidden_variable" },
        "trials": args.trials,
        "seed": args.seed,
        "correct": correct,
        "failures": failures,
        "correct_rate": if args.trials == 0 { 0.0 } else { correct as f64 / args.trials as f64 },
        "params": { "n": spec.n, "q": spec.q, "sigma_size": spec.sigma_size, "budget": args.budget },
    }));
    Ok(())
}

fn run_axioms(args: AxiomArgs) -> Result<(), CliError> {
    let records = run_axiom_suite(args.instances, args.max_dim, args.seed);
    let mut max_marg = 0.0f64;
    let mut max_row = 0.0f64;
    let mut all_ok = true;
    for r in &records {
        max_marg = max_marg.max(r.marginalization_residual);
        max_row = max_row.max(r.max_row_sum_error);
        all_ok &= r.indifference_ok;
        emit(&json!({
            "trial": r.instance,
            "dimension": r.dimension,
            "kind": r.kind,
            "marginalization_residual": r.marginalization_residual,
            "indifference_ok": r.indifference_ok,
            "max_row_sum_error": r.max_row_sum_error,
            "seed": args.seed,
        }));
    }
    emit(&json!({
        "summary": true,
        "command": "axioms",
        "instances": args.instances,
        "max_dim": args.max_dim,
        "seed": args.seed,
        "max_marginalization_residual": max_marg,
        "max_row_sum_error": max_row,
        "indifference_ok": all_ok,
    }));
    Ok(())
}

fn run_ldt(args: LdtArgs) -> Result<(), CliError> {
    let q = args.q.unwrap_or_else(|| choose_field_size(args.n, args.sigma, 1));
    let spec = FieldSpec::new(q, args.n, args.sigma)?;
    let degree = args.degree.unwrap_or(args.n);
    let mode = match args.point_mode {
        PointModeArg::Full => LineTestMode::FullLine,
        PointModeArg::Sampled => LineTestMode::SampledPoint,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let total_points = (q as u128).pow(args.n as u32);
    if total_points > 1 << 24 {
        return Err(CliError::Other(format!("q^n = {total_points} too large")));
    }
    let f: Box<dyn Fn(&pdqma_core::affine::Point) -> u64> = match args.table {
        TableArg::Honest => {
            let table = ProofTable::random(args.n, args.sigma, &mut rng)?;
            let oracle = ExtensionOracle::new(spec, table)?;
            Box::new(move |z| oracle.evaluate(z).expect("arity"))
        }
        TableArg::Random => {
            let values: Vec<u64> = (0..total_points).map(|_| rng.random_range(0..q)).collect();
            Box::new(move |z| values[z.coords().iter().fold(0usize, |acc, &c| acc * q as usize + c as usize)])
        }
    };
    let mut failures = 0usize;
    for trial in 0..args.lines {
        let rate = line_test(&f, &spec, degree, 1, mode, &mut rng);
        let failed = rate > 0.0;
        if failed {
            failures += 1;
        }
        emit(&json!({ "trial": trial, "low_degree": !failed, "seed": args.seed }));
    }
    emit(&json!({
        "summary": true,
        "command": "ldt",
        "lines": args.lines,
        "seed": args.seed,
        "delta_hat": failures as f64 / args.lines.max(1) as f64,
        "params": { "n": spec.n, "q": spec.q, "sigma_size": spec.sigma_size, "degree": degree,
                     "point_mode": match mode { LineTestMode::FullLine => "full", LineTestMode::SampledPoint => "sampled" } },
    }));
    Ok(())
}

fn run_pcp_oracle(args: PcpOracleArgs) -> Result<(), CliError> {
    let instance = load_instance(&args.instance)?;
    let soundness = instance
        .brute_force_soundness()
        .map_err(|e| CliError::Instance(format!("{}: {e}", args.instance)))?;
    emit(&json!({
        "command": "pcp-oracle",
        "instance": args.instance,
        "soundness": soundness,
        "edges": instance.edges().len(),
        "vertices": instance.vertices().len(),
    }));
    Ok(())
}
