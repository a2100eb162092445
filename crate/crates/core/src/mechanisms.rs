//! Client-side perturbation for the four compared mechanisms and exact
//! enumeration of their full-record channels.
//!
//! * SPL: every attribute through GRR at `ε / d`.
//! * RS+FD: one uniformly chosen attribute through GRR at `ε`, the rest
//!   replaced by uniform fake values.
//! * RS+RFD: as RS+FD, but fake values are drawn from a prior.
//! * Corr-RR phase II: one uniformly chosen attribute `j` through GRR at `ε`;
//!   every other attribute `m` copies the perturbed `y_j` with probability
//!   `p_{j<->m}` and otherwise takes a uniform value from `D \ {y_j}`.
//!   Phase I of Corr-RR is SPL.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{common_domain_size, CategoricalDomain, MarginalTable};
use crate::error::{Error, Result};
use crate::grr::{self, grr_params, ChannelMatrix, GrrParams};

/// Largest channel (`k^d`) that [`mechanism_channel`] will enumerate.
pub const CHANNEL_ENUMERATION_LIMIT: usize = 4096;

/// The mechanisms compared by the experiment harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Mechanism {
    #[serde(rename = "SPL")]
    Spl,
    #[serde(rename = "RSFD")]
    RsFd,
    #[serde(rename = "RSRFD")]
    RsRfd,
    #[serde(rename = "CORR_RR")]
    CorrRr,
}

impl Mechanism {
    pub const ALL: [Mechanism; 4] = [Self::Spl, Self::RsFd, Self::RsRfd, Self::CorrRr];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Spl => "SPL",
            Self::RsFd => "RSFD",
            Self::RsRfd => "RSRFD",
            Self::CorrRr => "CORR_RR",
        }
    }
}

impl fmt::Display for Mechanism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mechanism {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().replace(['-', '+'], "_").as_str() {
            "SPL" => Ok(Self::Spl),
            "RSFD" | "RS_FD" => Ok(Self::RsFd),
            "RSRFD" | "RS_RFD" => Ok(Self::RsRfd),
            "CORR_RR" | "CORRRR" => Ok(Self::CorrRr),
            _ => Err(Error::InvalidParameter(format!("unknown mechanism `{s}`"))),
        }
    }
}

/// Symmetric `d x d` matrix of copy probabilities `p_{j<->m}`; the diagonal is
/// unused.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwisePyModel {
    d: usize,
    values: Vec<f64>,
}

impl PairwisePyModel {
    /// Every pair shares the same copy probability.
    pub fn constant(d: usize, p_y: f64) -> Result<Self> {
        check_probability(p_y)?;
        Ok(Self {
            d,
            values: vec![p_y; d * d],
        })
    }

    pub fn from_matrix(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.len();
        let mut model = Self::constant(d, 0.0)?;
        for (j, row) in rows.iter().enumerate() {
            if row.len() != d {
                return Err(Error::ShapeError(format!("p_y row {j} has {} entries", row.len())));
            }
            for (m, &p) in row.iter().enumerate() {
                if j == m {
                    continue;
                }
                check_probability(p)?;
                if (p - rows[m][j]).abs() > 1e-12 {
                    return Err(Error::InvalidParameter(format!(
                        "p_y matrix is not symmetric at ({j}, {m})"
                    )));
                }
                model.values[j * d + m] = p;
            }
        }
        Ok(model)
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn get(&self, j: usize, m: usize) -> f64 {
        self.values[j * self.d + m]
    }

    /// Sets both `(j, m)` and `(m, j)`.
    pub fn set(&mut self, j: usize, m: usize, p_y: f64) -> Result<()> {
        check_probability(p_y)?;
        self.values[j * self.d + m] = p_y;
        self.values[m * self.d + j] = p_y;
        Ok(())
    }

    pub fn to_matrix(&self) -> Vec<Vec<f64>> {
        self.values.chunks(self.d.max(1)).map(<[f64]>::to_vec).collect()
    }
}

fn check_probability(p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("probability {p} outside [0, 1]")))
    }
}

/// Per-attribute distributions for RS+RFD fake values.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorTable {
    table: MarginalTable,
    cumulative: Vec<Vec<f64>>,
}

impl PriorTable {
    pub fn new(table: MarginalTable, domains: &[CategoricalDomain]) -> Result<Self> {
        if !table.matches(domains) {
            return Err(Error::PriorShapeError(format!(
                "prior has {} rows for {} attributes or mismatched row lengths",
                table.num_attributes(),
                domains.len()
            )));
        }
        if !table.is_normalized() {
            return Err(Error::PriorShapeError("prior rows must be probability vectors".into()));
        }
        let cumulative = table
            .rows()
            .iter()
            .map(|row| {
                row.iter()
                    .scan(0.0, |acc, &p| {
                        *acc += p;
                        Some(*acc)
                    })
                    .collect()
            })
            .collect();
        Ok(Self { table, cumulative })
    }

    pub fn uniform(domains: &[CategoricalDomain]) -> Self {
        Self::new(MarginalTable::uniform(domains), domains).expect("uniform prior is valid")
    }

    pub fn table(&self) -> &MarginalTable {
        &self.table
    }

    pub fn prob(&self, j: usize, v: u32) -> f64 {
        self.table.row(j)[v as usize]
    }

    fn sample<R: Rng + ?Sized>(&self, j: usize, rng: &mut R) -> u32 {
        let cdf = &self.cumulative[j];
        let u: f64 = rng.gen::<f64>() * cdf[cdf.len() - 1];
        // first index whose cumulative mass exceeds u, skipping zero-mass values
        let idx = cdf.partition_point(|&c| c <= u);
        idx.min(cdf.len() - 1) as u32
    }
}

/// One user's report. `selected_index` is white-box bookkeeping and is never
/// part of what a user sends.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PerturbedRecord {
    pub values: Vec<u32>,
    pub selected_index: Option<usize>,
}

fn check_record(record: &[u32], domains: &[CategoricalDomain]) -> Result<()> {
    if record.len() != domains.len() {
        return Err(Error::ShapeError(format!(
            "record has {} entries for {} attributes",
            record.len(),
            domains.len()
        )));
    }
    for (col, (&v, dom)) in record.iter().zip(domains).enumerate() {
        if !dom.contains(v) {
            return Err(Error::DomainViolation { row: 0, col });
        }
    }
    Ok(())
}

/// SPL with parameters fixed for a batch of users.
#[derive(Debug, Clone)]
pub struct SplPerturber {
    domains: Vec<CategoricalDomain>,
    params: Vec<GrrParams>,
}

impl SplPerturber {
    pub fn new(epsilon: f64, domains: &[CategoricalDomain]) -> Result<Self> {
        if domains.is_empty() {
            return Err(Error::ShapeError("no attributes".into()));
        }
        let share = epsilon / domains.len() as f64;
        let params = domains
            .iter()
            .map(|dom| grr_params(share, dom.size()))
            .collect::<Result<_>>()?;
        Ok(Self {
            domains: domains.to_vec(),
            params,
        })
    }

    pub fn perturb<R: Rng + ?Sized>(&self, record: &[u32], rng: &mut R) -> Result<PerturbedRecord> {
        check_record(record, &self.domains)?;
        let values = record
            .iter()
            .zip(&self.params)
            .map(|(&x, p)| grr::perturb_unchecked(x, p, rng))
            .collect();
        Ok(PerturbedRecord {
            values,
            selected_index: None,
        })
    }
}

/// Fill policy for attributes that were not selected.
#[derive(Debug, Clone)]
enum Fill {
    Uniform,
    Prior(PriorTable),
}

/// RS+FD / RS+RFD with parameters fixed for a batch of users.
#[derive(Debug, Clone)]
pub struct SampledPerturber {
    domains: Vec<CategoricalDomain>,
    params: Vec<GrrParams>,
    fill: Fill,
}

impl SampledPerturber {
    pub fn uniform_fake(epsilon: f64, domains: &[CategoricalDomain]) -> Result<Self> {
        Self::build(epsilon, domains, Fill::Uniform)
    }

    pub fn prior_fake(epsilon: f64, domains: &[CategoricalDomain], prior: PriorTable) -> Result<Self> {
        if !prior.table().matches(domains) {
            return Err(Error::PriorShapeError("prior does not match domains".into()));
        }
        Self::build(epsilon, domains, Fill::Prior(prior))
    }

    fn build(epsilon: f64, domains: &[CategoricalDomain], fill: Fill) -> Result<Self> {
        if domains.is_empty() {
            return Err(Error::ShapeError("no attributes".into()));
        }
        let params = domains
            .iter()
            .map(|dom| grr_params(epsilon, dom.size()))
            .collect::<Result<_>>()?;
        Ok(Self {
            domains: domains.to_vec(),
            params,
            fill,
        })
    }

    pub fn perturb<R: Rng + ?Sized>(&self, record: &[u32], rng: &mut R) -> Result<PerturbedRecord> {
        check_record(record, &self.domains)?;
        let d = self.domains.len();
        let j = rng.gen_range(0..d);
        let mut values = Vec::with_capacity(d);
        for m in 0..d {
            let y = if m == j {
                grr::perturb_unchecked(record[j], &self.params[j], rng)
            } else {
                match &self.fill {
                    Fill::Uniform => rng.gen_range(0..self.domains[m].size() as u32),
                    Fill::Prior(prior) => prior.sample(m, rng),
                }
            };
            values.push(y);
        }
        Ok(PerturbedRecord {
            values,
            selected_index: Some(j),
        })
    }
}

/// Corr-RR phase II with parameters fixed for a batch of users.
#[derive(Debug, Clone)]
pub struct CorrRrPerturber {
    domains: Vec<CategoricalDomain>,
    params: GrrParams,
    py_model: PairwisePyModel,
}

impl CorrRrPerturber {
    pub fn new(epsilon: f64, domains: &[CategoricalDomain], py_model: PairwisePyModel) -> Result<Self> {
        let k = common_domain_size(domains)?;
        if py_model.d() != domains.len() {
            return Err(Error::ShapeError(format!(
                "p_y model covers {} attributes, record has {}",
                py_model.d(),
                domains.len()
            )));
        }
        Ok(Self {
            domains: domains.to_vec(),
            params: grr_params(epsilon, k)?,
            py_model,
        })
    }

    pub fn py_model(&self) -> &PairwisePyModel {
        &self.py_model
    }

    pub fn perturb<R: Rng + ?Sized>(&self, record: &[u32], rng: &mut R) -> Result<PerturbedRecord> {
        check_record(record, &self.domains)?;
        let d = self.domains.len();
        let k = self.params.k;
        let j = rng.gen_range(0..d);
        let yj = grr::perturb_unchecked(record[j], &self.params, rng);
        let values = (0..d)
            .map(|m| {
                if m == j || rng.gen::<f64>() < self.py_model.get(j, m) {
                    yj
                } else {
                    grr::uniform_other(yj, k, rng)
                }
            })
            .collect();
        Ok(PerturbedRecord {
            values,
            selected_index: Some(j),
        })
    }
}

pub fn spl_perturb<R: Rng + ?Sized>(
    record: &[u32],
    epsilon: f64,
    domains: &[CategoricalDomain],
    rng: &mut R,
) -> Result<PerturbedRecord> {
    SplPerturber::new(epsilon, domains)?.perturb(record, rng)
}

pub fn rsfd_perturb<R: Rng + ?Sized>(
    record: &[u32],
    epsilon: f64,
    domains: &[CategoricalDomain],
    rng: &mut R,
) -> Result<PerturbedRecord> {
    SampledPerturber::uniform_fake(epsilon, domains)?.perturb(record, rng)
}

pub fn rsrfd_perturb<R: Rng + ?Sized>(
    record: &[u32],
    epsilon: f64,
    domains: &[CategoricalDomain],
    prior: &PriorTable,
    rng: &mut R,
) -> Result<PerturbedRecord> {
    SampledPerturber::prior_fake(epsilon, domains, prior.clone())?.perturb(record, rng)
}

pub fn corr_rr_phase2_perturb<R: Rng + ?Sized>(
    record: &[u32],
    epsilon: f64,
    domains: &[CategoricalDomain],
    py_model: &PairwisePyModel,
    rng: &mut R,
) -> Result<PerturbedRecord> {
    CorrRrPerturber::new(epsilon, domains, py_model.clone())?.perturb(record, rng)
}

/// Which full-record channel to enumerate.
#[derive(Debug, Clone, PartialEq)]
pub enum ChannelMechanism {
    Spl,
    RsFd,
    RsRfd(PriorTable),
    CorrRrPhase1,
    CorrRrPhase2(PairwisePyModel),
}

impl ChannelMechanism {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Spl => "SPL",
            Self::RsFd => "RSFD",
            Self::RsRfd(_) => "RSRFD",
            Self::CorrRrPhase1 => "CORR_RR_PHASE1",
            Self::CorrRrPhase2(_) => "CORR_RR_PHASE2",
        }
    }
}

/// Decodes tuple index `idx` into `out`, attribute 0 most significant.
fn decode(mut idx: usize, k: usize, out: &mut [u32]) {
    for slot in out.iter_mut().rev() {
        *slot = (idx % k) as u32;
        idx /= k;
    }
}

/// Tuple index of `values`, attribute 0 most significant.
pub fn encode_tuple(values: &[u32], k: usize) -> usize {
    values.iter().fold(0, |acc, &v| acc * k + v as usize)
}

/// Exact `k^d x k^d` channel `Pr[report = y | record = x]` of a full-record
/// mechanism, averaging analytically over the uniform attribute selection.
pub fn mechanism_channel(
    mechanism: &ChannelMechanism,
    epsilon: f64,
    d: usize,
    k: usize,
) -> Result<ChannelMatrix> {
    if d == 0 {
        return Err(Error::ShapeError("no attributes".into()));
    }
    let size = (k as u128)
        .checked_pow(d as u32)
        .filter(|&s| s <= CHANNEL_ENUMERATION_LIMIT as u128)
        .ok_or(Error::TooLarge {
            size: k.saturating_pow(d as u32),
            limit: CHANNEL_ENUMERATION_LIMIT,
        })? as usize;
    let full = grr_params(epsilon, k)?;
    let split = grr_params(epsilon / d as f64, k)?;
    match mechanism {
        ChannelMechanism::RsRfd(prior) => {
            let doms = crate::domain::uniform_domains(d, k)?;
            if !prior.table().matches(&doms) {
                return Err(Error::PriorShapeError("prior does not match (d, k)".into()));
            }
        }
        ChannelMechanism::CorrRrPhase2(model) if model.d() != d => {
            return Err(Error::ShapeError("p_y model dimension differs from d".into()));
        }
        _ => {}
    }
    let inv_d = 1.0 / d as f64;
    let inv_k = 1.0 / k as f64;
    let mut xs = vec![0u32; d];
    let mut ys = vec![0u32; d];
    let matrix = ChannelMatrix::from_fn(size, size, |y, x| {
        decode(x, k, &mut xs);
        decode(y, k, &mut ys);
        match mechanism {
            ChannelMechanism::Spl | ChannelMechanism::CorrRrPhase1 => xs
                .iter()
                .zip(&ys)
                .map(|(&xj, &yj)| split.prob(yj, xj))
                .product(),
            ChannelMechanism::RsFd => {
                (0..d).map(|j| full.prob(ys[j], xs[j])).sum::<f64>() * inv_d * inv_k.powi(d as i32 - 1)
            }
            ChannelMechanism::RsRfd(prior) => (0..d)
                .map(|j| {
                    let fake: f64 = (0..d)
                        .filter(|&m| m != j)
                        .map(|m| prior.prob(m, ys[m]))
                        .product();
                    full.prob(ys[j], xs[j]) * fake
                })
                .sum::<f64>()
                * inv_d,
            ChannelMechanism::CorrRrPhase2(model) => (0..d)
                .map(|j| {
                    let derived: f64 = (0..d)
                        .filter(|&m| m != j)
                        .map(|m| {
                            let p_y = model.get(j, m);
                            if ys[m] == ys[j] {
                                p_y
                            } else {
                                (1.0 - p_y) / (k - 1) as f64
                            }
                        })
                        .product();
                    full.prob(ys[j], xs[j]) * derived
                })
                .sum::<f64>()
                * inv_d,
        }
    });
    Ok(matrix)
}
