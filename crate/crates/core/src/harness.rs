//! Experiment runner. Every grid cell of a sweep is repeated with independent
//! randomness and summarized by the mean and spread of the marginal MSE.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aggregation::{
    corr_rr_estimate, corr_rr_phase1_estimate, rsfd_estimate, rsrfd_estimate, spl_estimate, Phase, ReportBatch,
};
use crate::domain::{CategoricalDomain, Dataset, MarginalTable};
use crate::error::{Error, Result};
use crate::ingest::{read_coded_csv, true_marginals};
use crate::mechanisms::{CorrRrPerturber, Mechanism, PriorTable, SampledPerturber, SplPerturber};
use crate::pyopt::infer_py_matrix;
use crate::rng::{derive_key, RngStream};
use crate::synth::{gen_synthetic, SynthSpec};

/// Column order of the results CSV.
pub const CSV_HEADER: &str = "mechanism,epsilon,d,k,source,phase1_fraction,mse_mean,mse_std,runs,wall_ms";

fn default_fractions() -> Vec<f64> {
    vec![0.1]
}

fn default_repetitions() -> usize {
    200
}

fn default_prior_fraction() -> f64 {
    0.1
}

fn default_true() -> bool {
    true
}

/// Where the records of one sweep come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetSource {
    /// Hub-and-spoke synthetic data. Without an explicit seed the data seed
    /// is the master seed.
    Synth {
        n: usize,
        d: usize,
        k: usize,
        rho: f64,
        #[serde(default)]
        seed: Option<u64>,
    },
    /// A coded CSV as written by `synth` or `ingest`.
    File {
        path: PathBuf,
        #[serde(default)]
        name: Option<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub datasets: Vec<DatasetSource>,
    pub mechanisms: Vec<Mechanism>,
    pub epsilons: Vec<f64>,
    /// Only CORR_RR reads this grid; baseline rows are repeated per value.
    #[serde(default = "default_fractions")]
    pub phase1_fractions: Vec<f64>,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    #[serde(default)]
    pub seed: u64,
    /// Clamp and renormalize estimates before scoring them.
    #[serde(default)]
    pub clamp_before_mse: bool,
    /// Share of users spent on the RS+RFD prior.
    #[serde(default = "default_prior_fraction")]
    pub prior_fraction: f64,
    /// Regenerate synthetic data for every repetition instead of once per cell.
    #[serde(default)]
    pub redraw_data: bool,
    /// When false `wall_ms` is written as 0 so that output files are
    /// byte-for-byte reproducible.
    #[serde(default = "default_true")]
    pub record_timing: bool,
}

impl ExperimentConfig {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let cfg: Self = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |msg: &str| Err(Error::InvalidParameter(msg.into()));
        if self.datasets.is_empty() {
            return invalid("dataset list is empty");
        }
        if self.mechanisms.is_empty() {
            return invalid("mechanism list is empty");
        }
        if self.epsilons.is_empty() {
            return invalid("epsilon grid is empty");
        }
        if self.phase1_fractions.is_empty() {
            return invalid("phase1_fraction grid is empty");
        }
        if self.repetitions == 0 {
            return invalid("repetitions must be at least 1");
        }
        if let Some(&e) = self.epsilons.iter().find(|e| !(e.is_finite() && **e > 0.0)) {
            return Err(Error::InvalidBudget(e));
        }
        if self.mechanisms.contains(&Mechanism::CorrRr)
            && self.phase1_fractions.iter().any(|f| !(*f > 0.0 && *f < 1.0))
        {
            return invalid("phase1 fractions must lie in (0, 1)");
        }
        if !(self.prior_fraction > 0.0 && self.prior_fraction < 1.0) {
            return invalid("prior_fraction must lie in (0, 1)");
        }
        for src in &self.datasets {
            if let DatasetSource::Synth { n, d, k, rho, .. } = *src {
                SynthSpec { n, d, k, rho, seed: 0 }.validate()?;
            }
        }
        Ok(())
    }
}

/// One line of the results CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub mechanism: Mechanism,
    pub epsilon: f64,
    pub d: usize,
    pub k: usize,
    /// `rho=<value>` for synthetic data, the dataset name otherwise.
    pub source: String,
    pub phase1_fraction: f64,
    pub mse_mean: f64,
    pub mse_std: f64,
    pub runs: usize,
    pub wall_ms: u64,
}

/// `(1/d) Σ_j (1/|D_j|) Σ_v (f_j(v) - f̂_j(v))²`.
pub fn mse_metric(truth: &MarginalTable, estimate: &MarginalTable) -> Result<f64> {
    if truth.num_attributes() != estimate.num_attributes()
        || truth.rows().iter().zip(estimate.rows()).any(|(a, b)| a.len() != b.len())
    {
        return Err(Error::ShapeError("truth and estimate differ in shape".into()));
    }
    if truth.num_attributes() == 0 {
        return Err(Error::ShapeError("no attributes".into()));
    }
    let total: f64 = truth
        .rows()
        .iter()
        .zip(estimate.rows())
        .map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64)
        .sum();
    Ok(total / truth.num_attributes() as f64)
}

/// `ε' = ln(d (e^ε - 1) + 1)`, the budget seen by an attribute that is
/// reported with probability `1/d`. Informational only.
pub fn amplified_epsilon(epsilon: f64, d: usize) -> Result<f64> {
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(Error::InvalidBudget(epsilon));
    }
    if d == 0 {
        return Err(Error::InvalidParameter("d must be at least 1".into()));
    }
    Ok((d as f64 * epsilon.exp_m1()).ln_1p())
}

/// Per-run knobs that are not part of the grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    pub prior_fraction: f64,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            prior_fraction: default_prior_fraction(),
        }
    }
}

fn split_count(n: usize, fraction: f64) -> Result<usize> {
    let n1 = (fraction * n as f64).round() as usize;
    if n1 == 0 || n1 >= n {
        return Err(Error::SplitError { n, fraction });
    }
    Ok(n1)
}

fn perturb_all(
    dataset: &Dataset,
    users: &[usize],
    batch: &mut ReportBatch,
    mut perturb: impl FnMut(&[u32]) -> Result<Vec<u32>>,
) -> Result<()> {
    for &u in users {
        batch.push_values(&perturb(dataset.record(u))?)?;
    }
    Ok(())
}

/// One end-to-end collection round over `dataset`, returning the server's
/// marginal estimate. `phase1_fraction` is ignored by the baselines.
pub fn run_once<R: Rng + ?Sized>(
    dataset: &Dataset,
    mechanism: Mechanism,
    epsilon: f64,
    phase1_fraction: f64,
    options: &RunOptions,
    rng: &mut R,
) -> Result<MarginalTable> {
    let domains: &[CategoricalDomain] = dataset.domains();
    let n = dataset.n();
    let everyone: Vec<usize> = (0..n).collect();
    match mechanism {
        Mechanism::Spl => {
            let p = SplPerturber::new(epsilon, domains)?;
            let mut batch = ReportBatch::new(mechanism, None, epsilon, domains)?.with_capacity(n);
            perturb_all(dataset, &everyone, &mut batch, |r| Ok(p.perturb(r, rng)?.values))?;
            spl_estimate(&batch, epsilon, domains)
        }
        Mechanism::RsFd => {
            let p = SampledPerturber::uniform_fake(epsilon, domains)?;
            let mut batch = ReportBatch::new(mechanism, None, epsilon, domains)?.with_capacity(n);
            perturb_all(dataset, &everyone, &mut batch, |r| Ok(p.perturb(r, rng)?.values))?;
            rsfd_estimate(&batch, epsilon, domains)
        }
        Mechanism::RsRfd => {
            let n_prior = split_count(n, options.prior_fraction)?;
            let mut order = everyone;
            order.shuffle(rng);
            let (prior_users, rest) = order.split_at(n_prior);

            let spl = SplPerturber::new(epsilon, domains)?;
            let mut prior_batch = ReportBatch::new(Mechanism::Spl, None, epsilon, domains)?.with_capacity(n_prior);
            perturb_all(dataset, prior_users, &mut prior_batch, |r| Ok(spl.perturb(r, rng)?.values))?;
            let prior = PriorTable::new(spl_estimate(&prior_batch, epsilon, domains)?.clamp_normalize(), domains)?;

            let p = SampledPerturber::prior_fake(epsilon, domains, prior.clone())?;
            let mut batch = ReportBatch::new(mechanism, None, epsilon, domains)?.with_capacity(rest.len());
            perturb_all(dataset, rest, &mut batch, |r| Ok(p.perturb(r, rng)?.values))?;
            rsrfd_estimate(&batch, epsilon, domains, &prior)
        }
        Mechanism::CorrRr => {
            let n1 = split_count(n, phase1_fraction)?;
            let mut order = everyone;
            order.shuffle(rng);
            let (first, second) = order.split_at(n1);

            let spl = SplPerturber::new(epsilon, domains)?;
            let mut b1 = ReportBatch::new(mechanism, Some(Phase::I), epsilon, domains)?.with_capacity(n1);
            perturb_all(dataset, first, &mut b1, |r| Ok(spl.perturb(r, rng)?.values))?;
            let learned = corr_rr_phase1_estimate(&b1, epsilon, domains)?.clamp_normalize();
            let model = infer_py_matrix(&learned, epsilon, second.len())?;

            let p = CorrRrPerturber::new(epsilon, domains, model)?;
            let mut b2 = ReportBatch::new(mechanism, Some(Phase::II), epsilon, domains)?.with_capacity(second.len());
            perturb_all(dataset, second, &mut b2, |r| Ok(p.perturb(r, rng)?.values))?;
            corr_rr_estimate(&b1, &b2, epsilon, domains)
        }
    }
}

/// A dataset ready for a sweep.
#[derive(Debug, Clone)]
pub struct PreparedSource {
    pub label: String,
    pub dataset: Dataset,
    pub truth: MarginalTable,
    /// Present for synthetic sources; used when data is redrawn per repetition.
    pub synth: Option<SynthSpec>,
}

impl PreparedSource {
    pub fn d(&self) -> usize {
        self.dataset.d()
    }

    pub fn k(&self) -> usize {
        self.dataset.domains().iter().map(|d| d.size()).max().unwrap_or(0)
    }

    fn key(&self) -> u64 {
        let mut parts: Vec<u64> = self.label.bytes().map(u64::from).collect();
        parts.extend([self.dataset.n() as u64, self.d() as u64, self.k() as u64]);
        derive_key(&parts)
    }
}

pub fn prepare_source(source: &DatasetSource, master_seed: u64) -> Result<PreparedSource> {
    match source {
        &DatasetSource::Synth { n, d, k, rho, seed } => {
            let spec = SynthSpec {
                n,
                d,
                k,
                rho,
                seed: seed.unwrap_or(master_seed),
            };
            let dataset = gen_synthetic(&spec)?;
            Ok(PreparedSource {
                label: format!("rho={rho}"),
                truth: true_marginals(&dataset),
                dataset,
                synth: Some(spec),
            })
        }
        DatasetSource::File { path, name } => {
            let (dataset, meta) = read_coded_csv(path)?;
            let label = name
                .clone()
                .or_else(|| meta.map(|m| m.source))
                .unwrap_or_else(|| path.file_stem().map_or_else(|| "file".into(), |s| s.to_string_lossy().into()));
            Ok(PreparedSource {
                label,
                truth: true_marginals(&dataset),
                dataset,
                synth: None,
            })
        }
    }
}

fn mechanism_code(m: Mechanism) -> u64 {
    match m {
        Mechanism::Spl => 1,
        Mechanism::RsFd => 2,
        Mechanism::RsRfd => 3,
        Mechanism::CorrRr => 4,
    }
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

struct CellStats {
    mean: f64,
    std: f64,
    wall_ms: u64,
}

fn run_cell(
    config: &ExperimentConfig,
    source: &PreparedSource,
    mechanism: Mechanism,
    epsilon: f64,
    fraction: Option<f64>,
) -> Result<CellStats> {
    let options = RunOptions {
        prior_fraction: config.prior_fraction,
    };
    let cell_key = derive_key(&[
        source.key(),
        mechanism_code(mechanism),
        epsilon.to_bits(),
        fraction.map_or(0, f64::to_bits),
    ]);
    let start = Instant::now();
    let scores: Vec<f64> = (0..config.repetitions)
        .into_par_iter()
        .map(|rep| {
            let mut rng = RngStream::new(config.seed, derive_key(&[cell_key, rep as u64]), 0);
            let redrawn;
            let (dataset, truth) = match (&source.synth, config.redraw_data) {
                (Some(spec), true) => {
                    let spec = SynthSpec {
                        seed: derive_key(&[spec.seed, rep as u64]),
                        ..*spec
                    };
                    let ds = gen_synthetic(&spec)?;
                    redrawn = (true_marginals(&ds), ds);
                    (&redrawn.1, &redrawn.0)
                }
                _ => (&source.dataset, &source.truth),
            };
            let est = run_once(dataset, mechanism, epsilon, fraction.unwrap_or(0.0), &options, &mut rng)?;
            let est = if config.clamp_before_mse { est.clamp_normalize() } else { est };
            mse_metric(truth, &est)
        })
        .collect::<Result<_>>()?;
    let (mean, std) = mean_std(&scores);
    Ok(CellStats {
        mean,
        std,
        wall_ms: if config.record_timing { start.elapsed().as_millis() as u64 } else { 0 },
    })
}

/// Runs a sweep over already prepared sources. Rows come out ordered by
/// source, mechanism, epsilon and phase-I fraction, following the config.
/// Baselines are evaluated once per `(source, mechanism, epsilon)` and the
/// identical row is emitted for every fraction.
pub fn run_prepared(config: &ExperimentConfig, sources: &[PreparedSource]) -> Result<Vec<ResultRow>> {
    config.validate()?;
    let mut rows = Vec::new();
    for source in sources {
        for &mechanism in &config.mechanisms {
            for &epsilon in &config.epsilons {
                let shared = match mechanism {
                    Mechanism::CorrRr => None,
                    _ => Some(run_cell(config, source, mechanism, epsilon, None)?),
                };
                for &fraction in &config.phase1_fractions {
                    let owned;
                    let stats = match &shared {
                        Some(s) => s,
                        None => {
                            owned = run_cell(config, source, mechanism, epsilon, Some(fraction))?;
                            &owned
                        }
                    };
                    rows.push(ResultRow {
                        mechanism,
                        epsilon,
                        d: source.d(),
                        k: source.k(),
                        source: source.label.clone(),
                        phase1_fraction: fraction,
                        mse_mean: stats.mean,
                        mse_std: stats.std,
                        runs: config.repetitions,
                        wall_ms: stats.wall_ms,
                    });
                }
            }
        }
    }
    Ok(rows)
}

/// Runs the whole sweep on the current rayon pool.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    config.validate()?;
    let sources = config
        .datasets
        .iter()
        .map(|s| prepare_source(s, config.seed))
        .collect::<Result<Vec<_>>>()?;
    run_prepared(config, &sources)
}

/// [`run_experiment`] on a dedicated pool of `workers` threads.
pub fn run_experiment_with_workers(config: &ExperimentConfig, workers: usize) -> Result<Vec<ResultRow>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidParameter(format!("cannot start worker pool: {e}")))?;
    pool.install(|| run_experiment(config))
}

pub fn results_to_csv(rows: &[ResultRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row)?;
    }
    if rows.is_empty() {
        w.write_record(CSV_HEADER.split(','))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::InvalidParameter(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn write_results_csv(rows: &[ResultRow], path: &Path) -> Result<()> {
    fs::write(path, results_to_csv(rows)?).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_results_csv(path: &Path) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// Budget after amplification by attribute sampling, for each `(source, ε)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmplifiedBudget {
    pub source: String,
    pub d: usize,
    pub epsilon: f64,
    pub amplified_epsilon: f64,
}

/// Sidecar written next to a results CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub config: ExperimentConfig,
    pub amplified: Vec<AmplifiedBudget>,
}

impl RunMetadata {
    pub fn new(config: &ExperimentConfig, rows: &[ResultRow]) -> Result<Self> {
        let mut amplified: Vec<AmplifiedBudget> = Vec::new();
        for row in rows {
            if amplified.iter().any(|a| a.source == row.source && a.d == row.d && a.epsilon == row.epsilon) {
                continue;
            }
            amplified.push(AmplifiedBudget {
                source: row.source.clone(),
                d: row.d,
                epsilon: row.epsilon,
                amplified_epsilon: amplified_epsilon(row.epsilon, row.d)?,
            });
        }
        Ok(Self {
            config: config.clone(),
            amplified,
        })
    }
}
