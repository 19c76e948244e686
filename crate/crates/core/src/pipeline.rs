//! End-to-end orchestration: budget conversion, preprocessing, selection,
//! synthesis, decoding and evaluation, with per-stage seeds and timings.

use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::accountant::{epsilon_to_rho, gaussian_perturb, rho_to_epsilon, sigma_for_rho, BudgetLedger, LedgerReport, LEDGER_TOLERANCE};
use crate::dataset::{decode_dataset, load_dataset, split_train_test, write_csv, Dataset, Domain};
use crate::error::{Error, Result};
use crate::marginal::{make_consistent, Marginal};
use crate::metrics::{fidelity_tvd, marginal_size_report, query_error, MarginalSizeReport, QueryWorkload, DEFAULT_MAX_QUERY_CLIQUES, DEFAULT_QUERIES_PER_CLIQUE};
use crate::preprocess::{apply_preprocess, PreprocessArtifacts, PreprocessConfig};
use crate::rng::substream;
use crate::selection::{adaptive_select, privsyn_select, AdaptiveConfig, JunctionEstimator, RoundLog, SelectionPlan, SelectionStrategy};
use crate::synth::{synthesize, GaConfig, GumConfig, SynthesizerKind};

/// Fractions of the total ρ given to each stage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BudgetShares {
    pub preprocess: f64,
    pub n_hat: f64,
    pub selection: f64,
    pub measurement: f64,
}

impl Default for BudgetShares {
    fn default() -> Self {
        BudgetShares {
            preprocess: 0.10,
            n_hat: 0.01,
            selection: 0.10,
            measurement: 0.79,
        }
    }
}

impl BudgetShares {
    pub fn validate(&self) -> Result<()> {
        let all = [self.preprocess, self.n_hat, self.selection, self.measurement];
        if all.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(Error::param("budget shares must all be positive"));
        }
        let sum: f64 = all.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::param(format!("budget shares sum to {sum}, expected 1")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorkloadConfig {
    pub queries_per_clique: usize,
    pub max_cliques: usize,
    /// Defaults to a value derived from the pipeline seed.
    pub seed: Option<u64>,
}

impl Default for WorkloadConfig {
    fn default() -> Self {
        WorkloadConfig {
            queries_per_clique: DEFAULT_QUERIES_PER_CLIQUE,
            max_cliques: DEFAULT_MAX_QUERY_CLIQUES,
            seed: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub data: Option<PathBuf>,
    pub domain: Option<PathBuf>,
    /// Held-out data; when absent a split of `data` is used.
    pub test_data: Option<PathBuf>,
    pub test_fraction: f64,
    pub epsilon: f64,
    pub delta: f64,
    pub shares: BudgetShares,
    pub preprocess: PreprocessConfig,
    pub selection: SelectionStrategy,
    pub adaptive: AdaptiveConfig,
    pub synthesizer: SynthesizerKind,
    pub gum: GumConfig,
    pub ga: GaConfig,
    /// Synthetic row count; defaults to the noisy training count.
    pub n_synthetic: Option<usize>,
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
    pub workload: WorkloadConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            data: None,
            domain: None,
            test_data: None,
            test_fraction: 0.2,
            epsilon: 1.0,
            delta: 1e-5,
            shares: BudgetShares::default(),
            preprocess: PreprocessConfig::default(),
            selection: SelectionStrategy::NonAdaptive,
            adaptive: AdaptiveConfig::default(),
            synthesizer: SynthesizerKind::Gum,
            gum: GumConfig::default(),
            ga: GaConfig::default(),
            n_synthetic: None,
            seed: 0,
            output_dir: None,
            workload: WorkloadConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return Err(Error::param(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::param(format!("delta must be in (0, 1), got {}", self.delta)));
        }
        if self.n_synthetic == Some(0) {
            return Err(Error::param("n_synthetic must be positive"));
        }
        if self.workload.queries_per_clique == 0 {
            return Err(Error::param("queries_per_clique must be at least 1"));
        }
        self.shares.validate()?;
        self.gum.validate()?;
        self.ga.validate()
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    fn workload_seed(&self) -> u64 {
        self.workload.seed.unwrap_or(self.seed ^ 0x5157_4c4f_4144)
    }
}

/// Everything that depends only on the config and seed; compared across runs
/// for determinism.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub fidelity_tvd: f64,
    pub fidelity_tvd_sum: f64,
    pub query_error: f64,
    pub queries: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub n_hat: f64,
    pub n_synthetic: usize,
    pub selected_cliques: Vec<Vec<usize>>,
}

/// Wall-clock seconds per stage. Synthesis and selection exclude
/// preprocessing, which is reported on its own.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub load: f64,
    pub preprocess: f64,
    pub selection: f64,
    pub synthesis: f64,
    pub evaluation: f64,
    pub selection_and_synthesis: f64,
    pub total: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub metrics: Metrics,
    pub timings: Timings,
    pub ledger: LedgerReport,
    pub rho_budget: f64,
    pub rounds: Vec<RoundLog>,
    pub size_before: MarginalSizeReport,
    pub size_after: MarginalSizeReport,
    pub config: PipelineConfig,
}

/// In-memory result of a run.
#[derive(Clone, Debug)]
pub struct PipelineOutput {
    pub report: RunReport,
    pub synthetic: Dataset,
    pub test_encoded: Dataset,
    pub artifacts: PreprocessArtifacts,
    pub plan: SelectionPlan,
}

fn secs(t: Instant) -> f64 {
    t.elapsed().as_secs_f64()
}

/// Run every stage on already-loaded train and test data (over the original
/// domain).
pub fn run_on_datasets(train: &Dataset, test: &Dataset, config: &PipelineConfig) -> Result<PipelineOutput> {
    run_inner(train, test, config, 0.0)
}

fn run_inner(train: &Dataset, test: &Dataset, config: &PipelineConfig, load_secs: f64) -> Result<PipelineOutput> {
    config.validate()?;
    if train.domain() != test.domain() {
        return Err(Error::DomainMismatch("train and test domains differ".into()));
    }
    if train.d() < 2 {
        return Err(Error::param("the pipeline needs at least two attributes"));
    }
    if train.n() == 0 || test.n() == 0 {
        return Err(Error::param("train and test data must be nonempty"));
    }
    let started = Instant::now();
    let rho_budget = epsilon_to_rho(config.epsilon, config.delta).map_err(|e| e.in_stage("budget"))?;
    let mut ledger = BudgetLedger::new(rho_budget)?;
    let share = |s: f64| s * rho_budget;

    let t = Instant::now();
    let (encoded, artifacts) = apply_preprocess(
        train,
        &config.preprocess,
        share(config.shares.preprocess),
        &mut ledger,
        &mut substream(config.seed, "preprocess"),
    )
    .map_err(|e| e.in_stage("preprocess"))?;
    let test_encoded = artifacts.encode(test).map_err(|e| e.in_stage("preprocess"))?;
    let t_pre = secs(t);

    let t = Instant::now();
    let n_hat = noisy_count(encoded.n(), share(config.shares.n_hat), &mut ledger, config.seed).map_err(|e| e.in_stage("count"))?;
    let rho_select = share(config.shares.selection);
    let mut rng = substream(config.seed, "select");
    let plan = match config.selection {
        SelectionStrategy::NonAdaptive => {
            let rho_measure = ledger.remaining() - rho_select;
            privsyn_select(&encoded, rho_select, rho_measure, &mut ledger, &mut rng)
        }
        SelectionStrategy::Adaptive => {
            let mut hook = JunctionEstimator::new(encoded.domain().sizes(), config.adaptive.model_cap);
            let total = ledger.remaining();
            adaptive_select(&encoded, total, &config.adaptive, &mut hook, &mut ledger, &mut rng)
        }
    }
    .map_err(|e| e.in_stage("select"))?;
    let t_sel = secs(t);

    let t = Instant::now();
    let n_syn = config.n_synthetic.unwrap_or_else(|| n_hat.round().max(1.0) as usize);
    let targets: Vec<Marginal> = make_consistent(&plan.marginals(), n_hat)
        .into_iter()
        .map(|m| m.scaled_to(n_syn as f64))
        .collect();
    let synthetic = synthesize(
        config.synthesizer,
        &targets,
        &artifacts.encoded_domain,
        n_syn,
        &config.gum,
        &config.ga,
        &mut substream(config.seed, "synthesize"),
    )
    .map_err(|e| e.in_stage("synthesize"))?;
    let t_syn = secs(t);

    let t = Instant::now();
    let (tvd, qe, queries) = evaluate(&synthetic, &test_encoded, &config.workload, config.workload_seed()).map_err(|e| e.in_stage("evaluate"))?;
    let t_eval = secs(t);

    if ledger.rho_spent() > rho_budget + LEDGER_TOLERANCE {
        return Err(Error::Overdraft {
            label: "end of run".into(),
            requested: ledger.rho_spent(),
            remaining: rho_budget,
        }
        .in_stage("budget"));
    }
    let ledger_report = ledger.report(config.delta)?;
    debug_assert!(ledger.rho_spent() == 0.0 || rho_to_epsilon(ledger.rho_spent(), config.delta)? <= config.epsilon * (1.0 + 1e-9));

    let report = RunReport {
        metrics: Metrics {
            fidelity_tvd: tvd.mean,
            fidelity_tvd_sum: tvd.sum,
            query_error: qe,
            queries,
            n_train: train.n(),
            n_test: test.n(),
            n_hat,
            n_synthetic: n_syn,
            selected_cliques: plan.cliques().iter().map(|c| c.attrs().to_vec()).collect(),
        },
        timings: Timings {
            load: load_secs,
            preprocess: t_pre,
            selection: t_sel,
            synthesis: t_syn,
            evaluation: t_eval,
            selection_and_synthesis: t_sel + t_syn,
            total: load_secs + secs(started),
        },
        ledger: ledger_report,
        rho_budget,
        rounds: plan.rounds.clone(),
        size_before: marginal_size_report(&artifacts.original_domain),
        size_after: marginal_size_report(&artifacts.encoded_domain),
        config: config.clone(),
    };
    Ok(PipelineOutput {
        report,
        synthetic,
        test_encoded,
        artifacts,
        plan,
    })
}

/// Noisy record count at the given ρ (sensitivity 1).
fn noisy_count(n: usize, rho: f64, ledger: &mut BudgetLedger, seed: u64) -> Result<f64> {
    let scale = sigma_for_rho(rho, 1.0)?;
    ledger.spend(rho, "n_hat")?;
    let noisy = gaussian_perturb(&[n as f64], scale, &mut substream(seed, "n_hat"))[0];
    Ok(noisy.max(1.0))
}

/// (TVD report, query error, number of queries) of `syn` against `test`.
pub fn evaluate(syn: &Dataset, test: &Dataset, workload: &WorkloadConfig, seed: u64) -> Result<(crate::metrics::TvdReport, f64, usize)> {
    let tvd = fidelity_tvd(syn, test)?;
    let wl = QueryWorkload::generate(test.domain(), workload.queries_per_clique, workload.max_cliques, seed)?;
    let qe = query_error(syn, test, &wl)?;
    Ok((tvd, qe, wl.queries.len()))
}

fn required<'a>(p: &'a Option<PathBuf>, what: &str) -> Result<&'a Path> {
    p.as_deref().ok_or_else(|| Error::param(format!("missing `{what}` path")))
}

pub fn load_domain(path: &Path) -> Result<Domain> {
    Domain::from_json(BufReader::new(File::open(path)?))
}

pub fn load_csv(path: &Path, domain: &Domain) -> Result<Dataset> {
    load_dataset(BufReader::new(File::open(path)?), domain)
}

/// Load train and test data as described by `config`.
pub fn load_inputs(config: &PipelineConfig) -> Result<(Dataset, Dataset)> {
    let domain = load_domain(required(&config.domain, "domain")?)?;
    let data = load_csv(required(&config.data, "data")?, &domain)?;
    match &config.test_data {
        Some(p) => Ok((data, load_csv(p, &domain)?)),
        None => split_train_test(&data, config.test_fraction, config.seed ^ 0x7370_6c69_74),
    }
}

pub const SYNTHETIC_FILE: &str = "synthetic.csv";
pub const ARTIFACTS_FILE: &str = "artifacts.json";
pub const PLAN_FILE: &str = "plan.json";
pub const REPORT_FILE: &str = "report.json";
pub const TEST_FILE: &str = "test_encoded.csv";

/// File-based run: load inputs, run, and write the synthetic CSV, artifacts,
/// plan and report into `output_dir`. On failure, files written by this run
/// are removed.
pub fn run_pipeline(config: &PipelineConfig) -> Result<RunReport> {
    let out_dir = required(&config.output_dir, "output_dir")?.to_path_buf();
    let t = Instant::now();
    let (train, test) = load_inputs(config).map_err(|e| e.in_stage("load"))?;
    let out = run_inner(&train, &test, config, secs(t))?;
    let mut written = Vec::new();
    let result = write_outputs(&out, &out_dir, &mut written);
    if let Err(e) = result {
        for p in written {
            let _ = std::fs::remove_file(p);
        }
        return Err(e.in_stage("write"));
    }
    Ok(out.report)
}

fn write_outputs(out: &PipelineOutput, dir: &Path, written: &mut Vec<PathBuf>) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let header: Vec<String> = out.artifacts.encoded_domain.attributes().iter().map(|a| a.name.clone()).collect();
    let put_csv = |name: &str, ds: &Dataset, written: &mut Vec<PathBuf>| -> Result<()> {
        let p = dir.join(name);
        written.push(p.clone());
        write_csv(File::create(&p)?, &header, &decode_dataset(ds, &out.artifacts)?)
    };
    put_csv(SYNTHETIC_FILE, &out.synthetic, written)?;
    put_csv(TEST_FILE, &out.test_encoded, written)?;
    let mut put = |name: &str, body: String| -> Result<()> {
        let p = dir.join(name);
        written.push(p.clone());
        std::fs::write(p, body)?;
        Ok(())
    };
    put(ARTIFACTS_FILE, out.artifacts.to_json()?)?;
    put(PLAN_FILE, serde_json::to_string_pretty(&out.plan)?)?;
    put(REPORT_FILE, serde_json::to_string_pretty(&out.report)?)?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreprocessReport {
    pub ledger: LedgerReport,
    pub size_before: MarginalSizeReport,
    pub size_after: MarginalSizeReport,
    pub seconds: f64,
}

/// Preprocess `data` with the config's preprocess share and write the
/// artifacts plus the encoded-and-decoded training data.
pub fn run_preprocess(config: &PipelineConfig) -> Result<PreprocessReport> {
    config.validate()?;
    let out_dir = required(&config.output_dir, "output_dir")?;
    let domain = load_domain(required(&config.domain, "domain")?).map_err(|e| e.in_stage("load"))?;
    let data = load_csv(required(&config.data, "data")?, &domain).map_err(|e| e.in_stage("load"))?;
    let rho = epsilon_to_rho(config.epsilon, config.delta)?;
    let rho_pre = rho * config.shares.preprocess;
    let mut ledger = BudgetLedger::new(rho_pre)?;
    let t = Instant::now();
    let (encoded, artifacts) = apply_preprocess(&data, &config.preprocess, rho_pre, &mut ledger, &mut substream(config.seed, "preprocess"))
        .map_err(|e| e.in_stage("preprocess"))?;
    let seconds = secs(t);
    let write = || -> Result<()> {
        std::fs::create_dir_all(out_dir)?;
        std::fs::write(out_dir.join(ARTIFACTS_FILE), artifacts.to_json()?)?;
        let header: Vec<String> = artifacts.encoded_domain.attributes().iter().map(|a| a.name.clone()).collect();
        write_csv(File::create(out_dir.join("encoded.csv"))?, &header, &decode_dataset(&encoded, &artifacts)?)
    };
    write().map_err(|e| e.in_stage("write"))?;
    Ok(PreprocessReport {
        ledger: ledger.report(config.delta)?,
        size_before: marginal_size_report(&artifacts.original_domain),
        size_after: marginal_size_report(&artifacts.encoded_domain),
        seconds,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub fidelity_tvd: f64,
    pub fidelity_tvd_sum: f64,
    pub query_error: f64,
    pub queries: usize,
}

/// Evaluate a synthetic CSV against a test CSV. Without artifacts both files
/// are read over `domain` and encoded with the identity transform. With
/// artifacts, the synthetic file is read over the encoded domain and the test
/// file over the original one. `workload.seed`, when set, takes precedence
/// over `seed`.
pub fn evaluate_files(synthetic: &Path, test: &Path, domain: &Path, artifacts: Option<&Path>, workload: &WorkloadConfig, seed: u64) -> Result<EvaluationReport> {
    let domain = load_domain(domain)?;
    let (syn, test) = match artifacts {
        Some(p) => {
            let art = PreprocessArtifacts::from_json(&std::fs::read_to_string(p)?)?;
            if art.original_domain != domain {
                return Err(Error::DomainMismatch("artifacts were built for a different domain".into()));
            }
            let syn = art.encode_decoded(&load_csv(synthetic, &art.encoded_domain)?)?;
            (syn, art.encode(&load_csv(test, &domain)?)?)
        }
        None => {
            let art = PreprocessArtifacts::identity(&domain)?;
            (art.encode(&load_csv(synthetic, &domain)?)?, art.encode(&load_csv(test, &domain)?)?)
        }
    };
    let (tvd, qe, queries) = evaluate(&syn, &test, workload, workload.seed.unwrap_or(seed))?;
    Ok(EvaluationReport {
        fidelity_tvd: tvd.mean,
        fidelity_tvd_sum: tvd.sum,
        query_error: qe,
        queries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::AttributeSpec;
    use crate::rng::seeded;
    use rand::Rng as _;

    fn toy(n: usize, seed: u64) -> Dataset {
        let dom = Domain::new(
            (0..4)
                .map(|j| AttributeSpec::categorical(&format!("a{j}"), ["x", "y", "z"]))
                .collect(),
        )
        .unwrap();
        let mut rng = seeded(seed);
        let a: Vec<u32> = (0..n).map(|_| rng.random_range(0..3)).collect();
        let cols = (0..4)
            .map(|j| a.iter().map(|&v| if rng.random_bool(0.8) { v } else { (v + j) % 3 }).collect())
            .collect();
        Dataset::from_codes(dom, cols).unwrap()
    }

    #[test]
    fn shares_must_sum_to_one() {
        let mut s = BudgetShares::default();
        assert!(s.validate().is_ok());
        s.measurement = 0.5;
        assert!(s.validate().is_err());
        s = BudgetShares {
            preprocess: 0.0,
            n_hat: 0.01,
            selection: 0.1,
            measurement: 0.89,
        };
        assert!(s.validate().is_err());
    }

    #[test]
    fn run_is_deterministic_and_within_budget() {
        let train = toy(2000, 1);
        let test = toy(500, 2);
        for strategy in [SelectionStrategy::NonAdaptive, SelectionStrategy::Adaptive] {
            let cfg = PipelineConfig {
                selection: strategy,
                synthesizer: SynthesizerKind::Junction,
                seed: 9,
                ..Default::default()
            };
            let a = run_on_datasets(&train, &test, &cfg).unwrap();
            let b = run_on_datasets(&train, &test, &cfg).unwrap();
            assert_eq!(
                serde_json::to_string(&a.report.metrics).unwrap(),
                serde_json::to_string(&b.report.metrics).unwrap()
            );
            assert!(a.report.ledger.rho_spent <= a.report.rho_budget + 1e-12);
            assert!(a.report.ledger.epsilon_spent <= 1.0 + 1e-9);
            let m = &a.report.metrics;
            assert!((0.0..=1.0).contains(&m.fidelity_tvd) && (0.0..=1.0).contains(&m.query_error));
        }
    }

    #[test]
    fn bad_config_rejected() {
        let ds = toy(100, 3);
        let cfg = PipelineConfig {
            epsilon: 0.0,
            ..Default::default()
        };
        assert!(run_on_datasets(&ds, &ds, &cfg).is_err());
    }

    #[test]
    fn config_json_defaults() {
        let cfg = PipelineConfig::from_json(r#"{"epsilon": 2.0, "synthesizer": "gsd"}"#).unwrap();
        assert_eq!(cfg.epsilon, 2.0);
        assert_eq!(cfg.synthesizer, SynthesizerKind::Gsd);
        assert_eq!(cfg.delta, 1e-5);
        assert_eq!(cfg.shares, BudgetShares::default());
    }
}
