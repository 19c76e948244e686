use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dpsyn_core::dataset::load_dataset;
use dpsyn_core::metrics::export_for_ml;
use dpsyn_core::pipeline::{self, PipelineConfig, WorkloadConfig};
use dpsyn_core::preprocess::{NumericalMethod, PreprocessArtifacts};
use dpsyn_core::selection::SelectionStrategy;
use dpsyn_core::synth::SynthesizerKind;
use dpsyn_core::theory::{kl_divergence, run_battery, BatteryConfig};
use dpsyn_core::{Error, Result};

const EXIT_USAGE: u8 = 1;
const EXIT_STAGE: u8 = 2;
const EXIT_CHAIN: u8 = 3;

#[derive(Parser)]
#[command(name = "dpsyn", version, about = "Differentially private synthetic tabular data from noisy marginals")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Preprocess, select, synthesize and evaluate.
    Run(PipelineArgs),
    /// Only preprocess; writes artifacts.json and encoded.csv.
    Preprocess(PipelineArgs),
    /// Score a synthetic CSV against a test CSV.
    Evaluate(EvaluateArgs),
    /// Run the KL lemma and inequality-chain batteries.
    VerifyTheory(TheoryArgs),
    /// Write decoded train/test CSVs and a manifest from a run directory.
    ExportMl(ExportArgs),
}

#[derive(Args)]
struct PipelineArgs {
    /// JSON config; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    domain: Option<PathBuf>,
    #[arg(long)]
    test_data: Option<PathBuf>,
    #[arg(long)]
    test_fraction: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    share_preprocess: Option<f64>,
    #[arg(long)]
    share_n_hat: Option<f64>,
    #[arg(long)]
    share_selection: Option<f64>,
    #[arg(long)]
    share_measurement: Option<f64>,
    /// uniform or privtree
    #[arg(long, value_parser = parse_numerical)]
    numerical: Option<NumericalMethod>,
    #[arg(long)]
    bins: Option<usize>,
    #[arg(long)]
    merge_theta: Option<f64>,
    #[arg(long)]
    privtree_theta: Option<f64>,
    /// non_adaptive (privsyn) or adaptive (aim)
    #[arg(long)]
    selection: Option<SelectionStrategy>,
    #[arg(long)]
    rounds: Option<usize>,
    /// gum, junction or gsd
    #[arg(long)]
    synthesizer: Option<SynthesizerKind>,
    #[arg(long)]
    gum_iterations: Option<usize>,
    #[arg(long)]
    generations: Option<usize>,
    #[arg(long)]
    n_synthetic: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    queries_per_clique: Option<usize>,
}

fn parse_numerical(s: &str) -> std::result::Result<NumericalMethod, String> {
    match s {
        "uniform" => Ok(NumericalMethod::Uniform),
        "privtree" => Ok(NumericalMethod::Privtree),
        other => Err(format!("unknown numerical method `{other}` (expected uniform or privtree)")),
    }
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    synthetic: PathBuf,
    #[arg(long)]
    test: PathBuf,
    /// Domain of the original (unprocessed) data.
    #[arg(long)]
    domain: PathBuf,
    /// Artifacts from a run; the synthetic file is then read over the encoded domain.
    #[arg(long)]
    artifacts: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    queries_per_clique: Option<usize>,
}

#[derive(Args)]
struct TheoryArgs {
    #[arg(long, default_value_t = 1000)]
    lemma_instances: usize,
    #[arg(long, default_value_t = 1000)]
    theorem_instances: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the report here as well as to stdout.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Swap in a deliberately wrong KL divergence (harness self-test).
    #[arg(long, hide = true)]
    fault_inject_kl: bool,
}

#[derive(Args)]
struct ExportArgs {
    /// Output directory of a previous `run`.
    #[arg(long)]
    run_dir: PathBuf,
    #[arg(long)]
    label: String,
    #[arg(long)]
    destination: PathBuf,
}

impl PipelineArgs {
    fn into_config(self) -> Result<PipelineConfig> {
        let mut c = match &self.config {
            Some(p) => PipelineConfig::from_json(&std::fs::read_to_string(p)?)?,
            None => PipelineConfig::default(),
        };
        macro_rules! set {
            ($($flag:ident => $($field:ident).+),* $(,)?) => {
                $(if let Some(v) = self.$flag { c.$($field).+ = v.into(); })*
            };
        }
        set! {
            data => data,
            domain => domain,
            test_data => test_data,
            test_fraction => test_fraction,
            epsilon => epsilon,
            delta => delta,
            share_preprocess => shares.preprocess,
            share_n_hat => shares.n_hat,
            share_selection => shares.selection,
            share_measurement => shares.measurement,
            numerical => preprocess.numerical,
            bins => preprocess.bins,
            merge_theta => preprocess.merge_theta,
            privtree_theta => preprocess.privtree_theta,
            selection => selection,
            rounds => adaptive.rounds,
            synthesizer => synthesizer,
            gum_iterations => gum.max_iterations,
            generations => ga.generations,
            n_synthetic => n_synthetic,
            seed => seed,
            output_dir => output_dir,
            queries_per_clique => workload.queries_per_clique,
        }
        Ok(c)
    }
}

fn print_json(value: &impl serde::Serialize) -> Result<()> {
    let body = serde_json::to_string_pretty(value)?;
    match writeln!(std::io::stdout().lock(), "{body}") {
        // a closed pipe (e.g. `| head`) is not a failure of the command
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        r => Ok(r?),
    }
}

fn bad_kl(p: &[f64], q: &[f64]) -> Result<f64> {
    Ok(2.0 * kl_divergence(p, q)? + 0.01)
}

fn export(args: &ExportArgs) -> Result<()> {
    let dir = &args.run_dir;
    let artifacts = PreprocessArtifacts::from_json(&std::fs::read_to_string(dir.join(pipeline::ARTIFACTS_FILE))?)?;
    let read = |name: &str| -> Result<_> {
        let file = std::fs::File::open(dir.join(name))?;
        artifacts.encode_decoded(&load_dataset(std::io::BufReader::new(file), &artifacts.encoded_domain)?)
    };
    let syn = read(pipeline::SYNTHETIC_FILE)?;
    let test = read(pipeline::TEST_FILE)?;
    print_json(&export_for_ml(&syn, &test, &artifacts, &args.label, &args.destination)?)
}

fn write_report(path: Option<&Path>, value: &impl serde::Serialize) -> Result<()> {
    if let Some(p) = path {
        std::fs::write(p, serde_json::to_string_pretty(value)?)?;
    }
    print_json(value)
}

fn execute(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Run(args) => {
            let config = args.into_config()?;
            print_json(&pipeline::run_pipeline(&config)?)?;
        }
        Command::Preprocess(args) => {
            let config = args.into_config()?;
            print_json(&pipeline::run_preprocess(&config)?)?;
        }
        Command::Evaluate(args) => {
            let mut workload = WorkloadConfig::default();
            if let Some(q) = args.queries_per_clique {
                workload.queries_per_clique = q;
            }
            let report = pipeline::evaluate_files(&args.synthetic, &args.test, &args.domain, args.artifacts.as_deref(), &workload, args.seed)?;
            print_json(&report)?;
        }
        Command::VerifyTheory(args) => {
            let cfg = BatteryConfig {
                lemma_instances: args.lemma_instances,
                theorem_instances: args.theorem_instances,
                seed: args.seed,
                ..BatteryConfig::default()
            };
            let kl = if args.fault_inject_kl { bad_kl } else { kl_divergence };
            let report = run_battery(&cfg, kl)?;
            write_report(args.output.as_deref(), &report)?;
            if !report.chain_ok() {
                eprintln!(
                    "inequality chain violated: {} lemma, {} chain violations",
                    report.lemma_violations, report.chain_violations
                );
                return Ok(EXIT_CHAIN);
            }
        }
        Command::ExportMl(args) => export(&args)?,
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            let code = match e {
                Error::InvalidParameter(_) => EXIT_USAGE,
                _ => EXIT_STAGE,
            };
            ExitCode::from(code)
        }
    }
}
