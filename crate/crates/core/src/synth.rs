//! Synthetic correlated categorical data.
//!
//! Attribute 0 is a hub drawn uniformly from `{0, .., k-1}`. Every other
//! attribute copies the hub with probability `rho` and otherwise draws a fresh
//! uniform value, so all attributes depend on each other only through the hub.
//! For binary data the Pearson correlation between the hub and any spoke is
//! exactly `rho`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{uniform_domains, Dataset};
use crate::error::{Error, Result};
use crate::rng::RngStream;

/// Run index reserved for data generation streams.
const SYNTH_STREAM: u64 = 0x5359_4E54;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n: usize,
    pub d: usize,
    pub k: usize,
    pub rho: f64,
    pub seed: u64,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.d == 0 {
            return Err(Error::InvalidParameter("n and d must be at least 1".into()));
        }
        if self.k < 2 {
            return Err(Error::InvalidDomain(self.k));
        }
        if !(0.0..=1.0).contains(&self.rho) {
            return Err(Error::InvalidParameter(format!("rho {} outside [0, 1]", self.rho)));
        }
        Ok(())
    }
}

pub fn gen_synthetic(spec: &SynthSpec) -> Result<Dataset> {
    spec.validate()?;
    let k = spec.k as u32;
    let mut values = Vec::with_capacity(spec.n * spec.d);
    for user in 0..spec.n {
        let mut rng = RngStream::new(spec.seed, SYNTH_STREAM, user as u64);
        let hub = rng.gen_range(0..k);
        values.push(hub);
        for _ in 1..spec.d {
            let v = if rng.gen::<f64>() < spec.rho {
                hub
            } else {
                rng.gen_range(0..k)
            };
            values.push(v);
        }
    }
    Dataset::from_flat(uniform_domains(spec.d, spec.k)?, values)
}

/// Pearson correlation of the integer codes for every attribute pair. The
/// diagonal is 1; pairs involving a constant column are 0.
pub fn measure_correlation(dataset: &Dataset) -> Vec<Vec<f64>> {
    let (n, d) = (dataset.n(), dataset.d());
    let nf = n as f64;
    let mut mean = vec![0.0; d];
    for rec in dataset.records() {
        for (m, &v) in mean.iter_mut().zip(rec) {
            *m += v as f64 / nf;
        }
    }
    let mut cov = vec![vec![0.0; d]; d];
    for rec in dataset.records() {
        for a in 0..d {
            let da = rec[a] as f64 - mean[a];
            for b in a..d {
                cov[a][b] += da * (rec[b] as f64 - mean[b]);
            }
        }
    }
    let mut corr = vec![vec![0.0; d]; d];
    for a in 0..d {
        corr[a][a] = 1.0;
        for b in a + 1..d {
            let denom = (cov[a][a] * cov[b][b]).sqrt();
            let r = if denom > 0.0 {
                (cov[a][b] / denom).clamp(-1.0, 1.0)
            } else {
                0.0
            };
            corr[a][b] = r;
            corr[b][a] = r;
        }
    }
    corr
}
