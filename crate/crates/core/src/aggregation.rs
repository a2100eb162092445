//! Server-side estimators.
//!
//! Each estimator inverts the per-attribute report law of its mechanism. With
//! `(p, q, Δ)` the GRR parameters of the perturbed attribute and `r_j(v)` the
//! observed report frequency:
//!
//! | mechanism | `E[r_j(v)]` |
//! |-----------|-------------|
//! | SPL       | `q₁ + Δ₁ f_j(v)` at budget `ε/d` |
//! | RS+FD     | `(q + Δ f_j(v))/d + (d-1)/(d k_j)` |
//! | RS+RFD    | `(q + Δ f_j(v))/d + (d-1) π_j(v)/d` |
//!
//! Corr-RR combines an SPL estimate over the phase-I cohort with the plain GRR
//! inversion of phase-II reports (which is biased, see [`crate::pyopt`]),
//! weighted by cohort size.

use crate::domain::{CategoricalDomain, MarginalTable};
use crate::error::{Error, Result};
use crate::grr::grr_params;
use crate::mechanisms::{Mechanism, PerturbedRecord, PriorTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    I,
    II,
}

/// Reports from one cohort. Only the value vectors are kept.
#[derive(Debug, Clone)]
pub struct ReportBatch {
    mechanism: Mechanism,
    phase: Option<Phase>,
    epsilon: f64,
    domains: Vec<CategoricalDomain>,
    values: Vec<u32>,
}

impl ReportBatch {
    pub fn new(
        mechanism: Mechanism,
        phase: Option<Phase>,
        epsilon: f64,
        domains: &[CategoricalDomain],
    ) -> Result<Self> {
        if phase.is_some() != (mechanism == Mechanism::CorrRr) {
            return Err(Error::InvalidParameter(
                "a phase tag is required for Corr-RR batches and forbidden otherwise".into(),
            ));
        }
        Ok(Self {
            mechanism,
            phase,
            epsilon,
            domains: domains.to_vec(),
            values: Vec::new(),
        })
    }

    pub fn with_capacity(mut self, n: usize) -> Self {
        self.values.reserve(n * self.domains.len());
        self
    }

    pub fn push(&mut self, report: &PerturbedRecord) -> Result<()> {
        self.push_values(&report.values)
    }

    pub fn push_values(&mut self, values: &[u32]) -> Result<()> {
        if values.len() != self.domains.len() {
            return Err(Error::ShapeError(format!(
                "report has {} entries, batch expects {}",
                values.len(),
                self.domains.len()
            )));
        }
        for (col, (&v, dom)) in values.iter().zip(&self.domains).enumerate() {
            if !dom.contains(v) {
                return Err(Error::DomainViolation { row: self.len(), col });
            }
        }
        self.values.extend_from_slice(values);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.domains.len().max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mechanism(&self) -> Mechanism {
        self.mechanism
    }

    pub fn phase(&self) -> Option<Phase> {
        self.phase
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn domains(&self) -> &[CategoricalDomain] {
        &self.domains
    }

    /// Per-attribute report tallies `I_j(v)`.
    pub fn counts(&self) -> Vec<Vec<usize>> {
        let mut counts: Vec<Vec<usize>> = self.domains.iter().map(|d| vec![0; d.size()]).collect();
        for rec in self.values.chunks_exact(self.domains.len().max(1)) {
            for (j, &v) in rec.iter().enumerate() {
                counts[j][v as usize] += 1;
            }
        }
        counts
    }

    /// Per-attribute report frequencies `I_j(v) / n`.
    pub fn frequencies(&self) -> Result<MarginalTable> {
        let n = self.len();
        if n == 0 {
            return Err(Error::ShapeError("empty batch".into()));
        }
        Ok(MarginalTable::new(
            self.counts()
                .into_iter()
                .map(|row| row.into_iter().map(|c| c as f64 / n as f64).collect())
                .collect(),
        ))
    }

    fn check(&self, expected: Mechanism, epsilon: f64, domains: &[CategoricalDomain]) -> Result<()> {
        if self.mechanism != expected {
            return Err(Error::ShapeError(format!(
                "batch was produced by {}, not {expected}",
                self.mechanism
            )));
        }
        if self.domains != domains {
            return Err(Error::ShapeError("batch domains differ from the requested domains".into()));
        }
        if (self.epsilon - epsilon).abs() > 1e-12 * epsilon.max(1.0) {
            return Err(Error::InvalidParameter(format!(
                "batch budget {} differs from requested {epsilon}",
                self.epsilon
            )));
        }
        Ok(())
    }
}

fn check_shape(freqs: &MarginalTable, domains: &[CategoricalDomain]) -> Result<()> {
    if freqs.matches(domains) {
        Ok(())
    } else {
        Err(Error::ShapeError("frequency table does not match domains".into()))
    }
}

/// SPL inversion from report frequencies.
pub fn spl_estimate_from_frequencies(
    freqs: &MarginalTable,
    epsilon: f64,
    domains: &[CategoricalDomain],
) -> Result<MarginalTable> {
    check_shape(freqs, domains)?;
    let share = epsilon / domains.len() as f64;
    let rows = freqs
        .rows()
        .iter()
        .zip(domains)
        .map(|(row, dom)| {
            let g = grr_params(share, dom.size())?;
            Ok(row.iter().map(|r| (r - g.q) / g.delta).collect())
        })
        .collect::<Result<_>>()?;
    Ok(MarginalTable::new(rows))
}

/// RS+FD / RS+RFD inversion: `f = d (r - (d-1) π / d - q / d) / Δ`, with `π`
/// the fake-value law (uniform for RS+FD).
fn sampled_estimate_from_frequencies(
    freqs: &MarginalTable,
    epsilon: f64,
    domains: &[CategoricalDomain],
    fake_law: impl Fn(usize, usize) -> f64,
) -> Result<MarginalTable> {
    check_shape(freqs, domains)?;
    let d = domains.len() as f64;
    let rows = freqs
        .rows()
        .iter()
        .zip(domains)
        .enumerate()
        .map(|(j, (row, dom))| {
            let g = grr_params(epsilon, dom.size())?;
            Ok(row
                .iter()
                .enumerate()
                .map(|(v, r)| d * (r - (d - 1.0) * fake_law(j, v) / d - g.q / d) / g.delta)
                .collect())
        })
        .collect::<Result<_>>()?;
    Ok(MarginalTable::new(rows))
}

pub fn rsfd_estimate_from_frequencies(
    freqs: &MarginalTable,
    epsilon: f64,
    domains: &[CategoricalDomain],
) -> Result<MarginalTable> {
    sampled_estimate_from_frequencies(freqs, epsilon, domains, |j, _| 1.0 / domains[j].size() as f64)
}

pub fn rsrfd_estimate_from_frequencies(
    freqs: &MarginalTable,
    epsilon: f64,
    domains: &[CategoricalDomain],
    prior: &PriorTable,
) -> Result<MarginalTable> {
    if !prior.table().matches(domains) {
        return Err(Error::PriorShapeError("prior does not match domains".into()));
    }
    sampled_estimate_from_frequencies(freqs, epsilon, domains, |j, v| prior.prob(j, v as u32))
}

/// Plain GRR inversion at full budget, as applied to phase-II reports.
pub fn phase2_estimate_from_frequencies(
    freqs: &MarginalTable,
    epsilon: f64,
    domains: &[CategoricalDomain],
) -> Result<MarginalTable> {
    check_shape(freqs, domains)?;
    let rows = freqs
        .rows()
        .iter()
        .zip(domains)
        .map(|(row, dom)| {
            let g = grr_params(epsilon, dom.size())?;
            Ok(row.iter().map(|r| (r - g.q) / g.delta).collect())
        })
        .collect::<Result<_>>()?;
    Ok(MarginalTable::new(rows))
}

pub fn spl_estimate(batch: &ReportBatch, epsilon: f64, domains: &[CategoricalDomain]) -> Result<MarginalTable> {
    batch.check(Mechanism::Spl, epsilon, domains)?;
    spl_estimate_from_frequencies(&batch.frequencies()?, epsilon, domains)
}

pub fn rsfd_estimate(batch: &ReportBatch, epsilon: f64, domains: &[CategoricalDomain]) -> Result<MarginalTable> {
    batch.check(Mechanism::RsFd, epsilon, domains)?;
    rsfd_estimate_from_frequencies(&batch.frequencies()?, epsilon, domains)
}

pub fn rsrfd_estimate(
    batch: &ReportBatch,
    epsilon: f64,
    domains: &[CategoricalDomain],
    prior: &PriorTable,
) -> Result<MarginalTable> {
    batch.check(Mechanism::RsRfd, epsilon, domains)?;
    rsrfd_estimate_from_frequencies(&batch.frequencies()?, epsilon, domains, prior)
}

/// Phase-I (SPL at `ε/d`) estimate `f̂^I` of a Corr-RR cohort.
pub fn corr_rr_phase1_estimate(
    batch: &ReportBatch,
    epsilon: f64,
    domains: &[CategoricalDomain],
) -> Result<MarginalTable> {
    batch.check(Mechanism::CorrRr, epsilon, domains)?;
    if batch.phase() != Some(Phase::I) {
        return Err(Error::InvalidParameter("expected a phase-I batch".into()));
    }
    spl_estimate_from_frequencies(&batch.frequencies()?, epsilon, domains)
}

/// Phase-II estimate `f̂^II` (biased; GRR inversion at full `ε`).
pub fn corr_rr_phase2_estimate(
    batch: &ReportBatch,
    epsilon: f64,
    domains: &[CategoricalDomain],
) -> Result<MarginalTable> {
    batch.check(Mechanism::CorrRr, epsilon, domains)?;
    if batch.phase() != Some(Phase::II) {
        return Err(Error::InvalidParameter("expected a phase-II batch".into()));
    }
    phase2_estimate_from_frequencies(&batch.frequencies()?, epsilon, domains)
}

/// `(n₁ f̂^I + n₂ f̂^II) / (n₁ + n₂)`, entrywise.
pub fn combine_phases(
    phase1: &MarginalTable,
    n1: usize,
    phase2: &MarginalTable,
    n2: usize,
) -> Result<MarginalTable> {
    let n = (n1 + n2) as f64;
    if n1 + n2 == 0 {
        return Err(Error::EmptyPhase("I and II"));
    }
    if phase1.num_attributes() != phase2.num_attributes()
        || phase1.rows().iter().zip(phase2.rows()).any(|(a, b)| a.len() != b.len())
    {
        return Err(Error::ShapeError("phase tables differ in shape".into()));
    }
    let (w1, w2) = (n1 as f64 / n, n2 as f64 / n);
    Ok(MarginalTable::new(
        phase1
            .rows()
            .iter()
            .zip(phase2.rows())
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| w1 * x + w2 * y).collect())
            .collect(),
    ))
}

/// The final Corr-RR estimate. An empty batch contributes with weight zero;
/// two empty batches are an error.
pub fn corr_rr_estimate(
    phase1: &ReportBatch,
    phase2: &ReportBatch,
    epsilon: f64,
    domains: &[CategoricalDomain],
) -> Result<MarginalTable> {
    let (n1, n2) = (phase1.len(), phase2.len());
    match (n1, n2) {
        (0, 0) => Err(Error::EmptyPhase("I and II")),
        (0, _) => corr_rr_phase2_estimate(phase2, epsilon, domains),
        (_, 0) => corr_rr_phase1_estimate(phase1, epsilon, domains),
        _ => {
            let f1 = corr_rr_phase1_estimate(phase1, epsilon, domains)?;
            let f2 = corr_rr_phase2_estimate(phase2, epsilon, domains)?;
            combine_phases(&f1, n1, &f2, n2)
        }
    }
}
