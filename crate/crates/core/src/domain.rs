//! Domain types shared by every module: categorical domains, coded datasets,
//! privacy budgets and per-attribute frequency tables.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on per-attribute sums for a normalized [`MarginalTable`].
pub const NORMALIZED_SUM_TOL: f64 = 1e-9;

/// A finite categorical domain `{0, .., size - 1}` with `size >= 2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "usize", into = "usize")]
pub struct CategoricalDomain(usize);

impl CategoricalDomain {
    pub fn new(size: usize) -> Result<Self> {
        if size < 2 {
            return Err(Error::InvalidDomain(size));
        }
        Ok(Self(size))
    }

    pub fn size(self) -> usize {
        self.0
    }

    pub fn contains(self, value: u32) -> bool {
        (value as usize) < self.0
    }
}

impl TryFrom<usize> for CategoricalDomain {
    type Error = Error;

    fn try_from(size: usize) -> Result<Self> {
        Self::new(size)
    }
}

impl From<CategoricalDomain> for usize {
    fn from(d: CategoricalDomain) -> usize {
        d.0
    }
}

/// Builds `d` copies of a size-`k` domain.
pub fn uniform_domains(d: usize, k: usize) -> Result<Vec<CategoricalDomain>> {
    let dom = CategoricalDomain::new(k)?;
    Ok(vec![dom; d])
}

/// Returns the common domain size, or `HeterogeneousDomains`.
pub fn common_domain_size(domains: &[CategoricalDomain]) -> Result<usize> {
    let first = domains
        .first()
        .ok_or_else(|| Error::ShapeError("empty domain list".into()))?;
    if domains.iter().any(|d| d != first) {
        return Err(Error::HeterogeneousDomains);
    }
    Ok(first.size())
}

/// The local privacy budget epsilon.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct PrivacyBudget(f64);

impl PrivacyBudget {
    pub fn new(epsilon: f64) -> Result<Self> {
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(Error::InvalidBudget(epsilon));
        }
        Ok(Self(epsilon))
    }

    pub fn epsilon(self) -> f64 {
        self.0
    }

    /// The per-attribute share when the budget is split evenly over `parts`.
    pub fn split(self, parts: usize) -> Self {
        Self(self.0 / parts.max(1) as f64)
    }
}

impl TryFrom<f64> for PrivacyBudget {
    type Error = Error;

    fn try_from(eps: f64) -> Result<Self> {
        Self::new(eps)
    }
}

impl From<PrivacyBudget> for f64 {
    fn from(b: PrivacyBudget) -> f64 {
        b.0
    }
}

/// `n` integer-coded records over `d` categorical attributes, stored row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    domains: Vec<CategoricalDomain>,
    values: Vec<u32>,
}

impl Dataset {
    /// Builds a dataset from explicit rows, checking every invariant.
    pub fn new(domains: Vec<CategoricalDomain>, records: &[Vec<u32>]) -> Result<Self> {
        let d = domains.len();
        if d == 0 {
            return Err(Error::ShapeError("dataset needs at least one attribute".into()));
        }
        if records.is_empty() {
            return Err(Error::ShapeError("dataset needs at least one record".into()));
        }
        let mut values = Vec::with_capacity(records.len() * d);
        for (row, rec) in records.iter().enumerate() {
            if rec.len() != d {
                return Err(Error::ShapeError(format!(
                    "record {row} has {} entries, expected {d}",
                    rec.len()
                )));
            }
            values.extend_from_slice(rec);
        }
        let ds = Self { domains, values };
        validate_dataset(&ds)?;
        Ok(ds)
    }

    /// Builds a dataset from a row-major buffer of `n * d` codes.
    pub fn from_flat(domains: Vec<CategoricalDomain>, values: Vec<u32>) -> Result<Self> {
        let ds = Self { domains, values };
        validate_dataset(&ds)?;
        Ok(ds)
    }

    pub fn n(&self) -> usize {
        if self.domains.is_empty() {
            0
        } else {
            self.values.len() / self.domains.len()
        }
    }

    pub fn d(&self) -> usize {
        self.domains.len()
    }

    pub fn domains(&self) -> &[CategoricalDomain] {
        &self.domains
    }

    pub fn record(&self, i: usize) -> &[u32] {
        let d = self.d();
        &self.values[i * d..(i + 1) * d]
    }

    pub fn records(&self) -> impl ExactSizeIterator<Item = &[u32]> + '_ {
        self.values.chunks_exact(self.d())
    }

    pub fn value(&self, i: usize, j: usize) -> u32 {
        self.values[i * self.d() + j]
    }

    /// Copies the records at `indices` (in that order) into a new dataset.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let mut values = Vec::with_capacity(indices.len() * self.d());
        for &i in indices {
            values.extend_from_slice(self.record(i));
        }
        Self::from_flat(self.domains.clone(), values)
    }

    /// Exact per-attribute value tallies.
    pub fn counts(&self) -> Vec<Vec<usize>> {
        let mut counts: Vec<Vec<usize>> =
            self.domains.iter().map(|dom| vec![0; dom.size()]).collect();
        for rec in self.records() {
            for (j, &v) in rec.iter().enumerate() {
                counts[j][v as usize] += 1;
            }
        }
        counts
    }
}

/// Checks every [`Dataset`] invariant.
pub fn validate_dataset(dataset: &Dataset) -> Result<()> {
    let d = dataset.domains.len();
    if d == 0 {
        return Err(Error::ShapeError("dataset needs at least one attribute".into()));
    }
    if dataset.values.is_empty() {
        return Err(Error::ShapeError("dataset needs at least one record".into()));
    }
    if !dataset.values.len().is_multiple_of(d) {
        return Err(Error::ShapeError(format!(
            "{} values do not form rows of length {d}",
            dataset.values.len()
        )));
    }
    for (row, rec) in dataset.values.chunks_exact(d).enumerate() {
        for (col, (&v, dom)) in rec.iter().zip(&dataset.domains).enumerate() {
            if !dom.contains(v) {
                return Err(Error::DomainViolation { row, col });
            }
        }
    }
    Ok(())
}

/// Per-attribute frequency vectors. Raw estimator output may leave `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalTable {
    rows: Vec<Vec<f64>>,
}

impl MarginalTable {
    pub fn new(rows: Vec<Vec<f64>>) -> Self {
        Self { rows }
    }

    pub fn zeros(domains: &[CategoricalDomain]) -> Self {
        Self {
            rows: domains.iter().map(|d| vec![0.0; d.size()]).collect(),
        }
    }

    pub fn uniform(domains: &[CategoricalDomain]) -> Self {
        Self {
            rows: domains
                .iter()
                .map(|d| vec![1.0 / d.size() as f64; d.size()])
                .collect(),
        }
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.rows[j]
    }

    pub fn row_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.rows[j]
    }

    pub fn into_rows(self) -> Vec<Vec<f64>> {
        self.rows
    }

    pub fn num_attributes(&self) -> usize {
        self.rows.len()
    }

    pub fn matches(&self, domains: &[CategoricalDomain]) -> bool {
        self.rows.len() == domains.len()
            && self.rows.iter().zip(domains).all(|(r, d)| r.len() == d.size())
    }

    /// True when every row is a probability vector.
    pub fn is_normalized(&self) -> bool {
        self.rows.iter().all(|r| {
            r.iter().all(|&x| (0.0..=1.0).contains(&x))
                && (r.iter().sum::<f64>() - 1.0).abs() <= NORMALIZED_SUM_TOL
        })
    }

    pub fn clamp_normalize(&self) -> Self {
        clamp_normalize(self)
    }
}

/// Clips every entry to `[0, 1]` and rescales each row to sum to one. A row
/// that clips to all zeros becomes uniform.
pub fn clamp_normalize(table: &MarginalTable) -> MarginalTable {
    let rows = table
        .rows
        .iter()
        .map(|row| {
            if !row.is_empty()
                && row.iter().all(|x| (0.0..=1.0).contains(x))
                && (row.iter().sum::<f64>() - 1.0).abs() <= NORMALIZED_SUM_TOL
            {
                return row.clone();
            }
            let clipped: Vec<f64> = row
                .iter()
                .map(|&x| if x.is_nan() { 0.0 } else { x.clamp(0.0, 1.0) })
                .collect();
            let total: f64 = clipped.iter().sum();
            if total <= 0.0 {
                vec![1.0 / row.len() as f64; row.len()]
            } else {
                clipped.iter().map(|x| x / total).collect()
            }
        })
        .collect();
    MarginalTable { rows }
}
