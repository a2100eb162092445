//! Generalized randomized response over a domain of size `k`: keep the true
//! value with probability `p = e^ε / (e^ε + k - 1)`, otherwise report one of
//! the other `k - 1` values uniformly (each with probability `q = p / e^ε`).

use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrrParams {
    pub epsilon: f64,
    pub k: usize,
    pub p: f64,
    pub q: f64,
    /// `p - q`, computed without cancellation.
    pub delta: f64,
}

pub fn grr_params(epsilon: f64, k: usize) -> Result<GrrParams> {
    if k < 2 {
        return Err(Error::InvalidDomain(k));
    }
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(Error::InvalidBudget(epsilon));
    }
    let km1 = (k - 1) as f64;
    // e^{-ε} form stays finite for any ε
    let t = (-epsilon).exp();
    let denom = 1.0 + km1 * t;
    let p = 1.0 / denom;
    let q = t / denom;
    let delta = -(-epsilon).exp_m1() / denom;
    Ok(GrrParams {
        epsilon,
        k,
        p,
        q,
        delta,
    })
}

impl GrrParams {
    /// `Pr[output = y | input = x]`.
    pub fn prob(&self, y: u32, x: u32) -> f64 {
        if y == x {
            self.p
        } else {
            self.q
        }
    }
}

pub fn grr_perturb<R: Rng + ?Sized>(v: u32, params: &GrrParams, rng: &mut R) -> Result<u32> {
    if v as usize >= params.k {
        return Err(Error::DomainViolation { row: 0, col: 0 });
    }
    Ok(perturb_unchecked(v, params, rng))
}

/// Two draws at most: the keep/flip coin and, on a flip, the replacement.
#[inline]
pub(crate) fn perturb_unchecked<R: Rng + ?Sized>(v: u32, params: &GrrParams, rng: &mut R) -> u32 {
    if rng.gen::<f64>() < params.p {
        v
    } else {
        uniform_other(v, params.k, rng)
    }
}

/// Uniform draw from `{0, .., k-1} \ {v}`.
#[inline]
pub(crate) fn uniform_other<R: Rng + ?Sized>(v: u32, k: usize, rng: &mut R) -> u32 {
    let r = rng.gen_range(0..(k - 1) as u32);
    if r >= v {
        r + 1
    } else {
        r
    }
}

/// Unbiased frequency estimate `(c_v / n - q) / (p - q)`, unclamped.
pub fn grr_estimate(counts: &[usize], n: usize, params: &GrrParams) -> Result<Vec<f64>> {
    if counts.len() != params.k {
        return Err(Error::ShapeError(format!(
            "{} tallies for a domain of size {}",
            counts.len(),
            params.k
        )));
    }
    let total: usize = counts.iter().sum();
    if total != n || n == 0 {
        return Err(Error::CountMismatch {
            expected: n,
            actual: total,
        });
    }
    let n = n as f64;
    let freqs: Vec<f64> = counts.iter().map(|&c| c as f64 / n).collect();
    Ok(grr_estimate_from_frequencies(&freqs, params))
}

/// The same inversion applied to observed report frequencies `c_v / n`.
pub fn grr_estimate_from_frequencies(freqs: &[f64], params: &GrrParams) -> Vec<f64> {
    freqs.iter().map(|&r| (r - params.q) / params.delta).collect()
}

/// Approximate estimator variance `(e^ε + k - 2) / (n (e^ε - 1)^2)`. This is
/// `q (1 - q) / (n Δ²)`, exact for a value with true frequency 0 and an
/// underestimate for frequent values.
pub fn grr_variance(epsilon: f64, k: usize, n: usize) -> Result<f64> {
    grr_params(epsilon, k)?;
    if n == 0 {
        return Err(Error::InvalidParameter("report count must be at least 1".into()));
    }
    let em1 = epsilon.exp_m1();
    Ok((em1 + (k - 1) as f64) / (n as f64 * em1 * em1))
}

/// Column-stochastic matrix `m[y][x] = Pr[output = y | input = x]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMatrix {
    outputs: usize,
    inputs: usize,
    data: Vec<f64>,
}

impl ChannelMatrix {
    pub fn from_fn(outputs: usize, inputs: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(outputs * inputs);
        for y in 0..outputs {
            for x in 0..inputs {
                data.push(f(y, x));
            }
        }
        Self {
            outputs,
            inputs,
            data,
        }
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn get(&self, y: usize, x: usize) -> f64 {
        self.data[y * self.inputs + x]
    }

    pub fn row(&self, y: usize) -> &[f64] {
        &self.data[y * self.inputs..(y + 1) * self.inputs]
    }

    pub fn column_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.inputs];
        for row in self.data.chunks_exact(self.inputs) {
            for (s, v) in sums.iter_mut().zip(row) {
                *s += v;
            }
        }
        sums
    }

    pub fn is_stochastic(&self, tol: f64) -> bool {
        self.data.iter().all(|&v| v >= 0.0)
            && self.column_sums().iter().all(|s| (s - 1.0).abs() <= tol)
    }
}

pub fn grr_channel(params: &GrrParams) -> ChannelMatrix {
    ChannelMatrix::from_fn(params.k, params.k, |y, x| params.prob(y as u32, x as u32))
}

/// Worst-case likelihood ratio `max_{y,x,x'} M[y][x] / M[y][x']`, with `0/0`
/// read as 1 and `positive/0` as infinity.
pub fn ldp_ratio(channel: &ChannelMatrix) -> f64 {
    let mut worst: f64 = 1.0;
    for y in 0..channel.outputs() {
        let row = channel.row(y);
        let hi = row.iter().copied().fold(0.0, f64::max);
        let lo = row.iter().copied().fold(f64::INFINITY, f64::min);
        if hi == 0.0 {
            continue;
        }
        if lo == 0.0 {
            return f64::INFINITY;
        }
        worst = worst.max(hi / lo);
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;
    use proptest::prelude::*;

    #[test]
    fn params_ln3_binary() {
        let p = grr_params(3f64.ln(), 2).unwrap();
        assert!((p.p - 0.75).abs() < 1e-15);
        assert!((p.q - 0.25).abs() < 1e-15);
        assert!((p.delta - 0.5).abs() < 1e-15);
    }

    #[test]
    fn params_eps1_k10() {
        // e / (e + 9) and 1 / (e + 9), evaluated with 20-digit e
        let p = grr_params(1.0, 10).unwrap();
        assert!((p.p - 0.231_969_316_9).abs() < 1e-9, "{}", p.p);
        assert!((p.q - 0.085_336_742_6).abs() < 1e-9, "{}", p.q);
    }

    #[test]
    fn params_reject_bad_inputs() {
        assert!(matches!(grr_params(1.0, 1), Err(Error::InvalidDomain(1))));
        assert!(matches!(grr_params(0.0, 2), Err(Error::InvalidBudget(_))));
        assert!(matches!(grr_params(-1.0, 2), Err(Error::InvalidBudget(_))));
    }

    #[test]
    fn params_stay_finite_for_huge_budget() {
        let p = grr_params(5000.0, 4).unwrap();
        assert_eq!(p.p, 1.0);
        assert_eq!(p.q, 0.0);
    }

    #[test]
    fn perturb_rejects_out_of_domain() {
        let p = grr_params(1.0, 3).unwrap();
        let mut rng = RngStream::from_seed(1);
        assert!(grr_perturb(3, &p, &mut rng).is_err());
    }

    #[test]
    fn perturb_keep_rate_in_binomial_band() {
        let p = grr_params(3f64.ln(), 2).unwrap();
        let mut rng = RngStream::from_seed(2024);
        let trials = 1_000_000;
        let kept = (0..trials)
            .filter(|_| grr_perturb(0, &p, &mut rng).unwrap() == 0)
            .count();
        let freq = kept as f64 / trials as f64;
        assert!((0.7485..=0.7515).contains(&freq), "{freq}");
    }

    #[test]
    fn perturb_near_deterministic_at_large_budget() {
        let p = grr_params(50.0, 2).unwrap();
        let mut rng = RngStream::from_seed(9);
        for i in 0..10_000u32 {
            let v = i % 2;
            assert_eq!(grr_perturb(v, &p, &mut rng).unwrap(), v);
        }
    }

    #[test]
    fn perturb_is_reproducible() {
        let p = grr_params(1.0, 7).unwrap();
        let draw = || {
            let mut rng = RngStream::new(5, 6, 7);
            (0..200).map(|i| grr_perturb(i % 7, &p, &mut rng).unwrap()).collect::<Vec<_>>()
        };
        assert_eq!(draw(), draw());
    }

    #[test]
    fn perturb_spreads_flips_uniformly() {
        let p = grr_params(0.5, 5).unwrap();
        let mut rng = RngStream::from_seed(77);
        let trials = 500_000;
        let mut counts = [0usize; 5];
        for _ in 0..trials {
            counts[grr_perturb(2, &p, &mut rng).unwrap() as usize] += 1;
        }
        for (y, &c) in counts.iter().enumerate() {
            let expect = p.prob(y as u32, 2);
            let sd = (expect * (1.0 - expect) / trials as f64).sqrt();
            assert!((c as f64 / trials as f64 - expect).abs() < 4.0 * sd, "value {y}");
        }
    }

    #[test]
    fn estimate_formula_cases() {
        let p = grr_params(1.0, 2).unwrap();
        // exact-expectation tallies, scaled by a large n so c/n hits q, p and their mean
        let n = 1usize << 40;
        let at = |frac: f64| (frac * n as f64).round() as usize;
        let est = grr_estimate(&[at(p.q), n - at(p.q)], n, &p).unwrap();
        assert!(est[0].abs() < 1e-9 && (est[1] - 1.0).abs() < 1e-9);
        let mid = at((p.p + p.q) / 2.0);
        let est = grr_estimate(&[mid, n - mid], n, &p).unwrap();
        assert!((est[0] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn estimate_rejects_count_mismatch() {
        let p = grr_params(1.0, 2).unwrap();
        assert!(matches!(
            grr_estimate(&[3, 4], 8, &p),
            Err(Error::CountMismatch { expected: 8, actual: 7 })
        ));
        assert!(grr_estimate(&[3, 4, 1], 8, &p).is_err());
    }

    #[test]
    fn variance_closed_form() {
        assert!((grr_variance(3f64.ln(), 2, 1).unwrap() - 0.75).abs() < 1e-12);
        let v1 = grr_variance(1.3, 6, 1000).unwrap();
        let v2 = grr_variance(1.3, 6, 2000).unwrap();
        assert!((v1 - 2.0 * v2).abs() < 1e-15);
        assert!(grr_variance(1.0, 1, 10).is_err());
    }

    /// Empirical variance of the estimates of value 0 and of value 9 over
    /// 2000 cohorts of 10^4 fixed users, 30% of whom hold value 0 and none
    /// value 9.
    fn simulated_variances(eps: f64, k: usize, n: usize, sims: usize) -> (f64, f64) {
        let p = grr_params(eps, k).unwrap();
        let holders = (0.3 * n as f64) as usize;
        let mut ests = [Vec::with_capacity(sims), Vec::with_capacity(sims)];
        for s in 0..sims {
            let mut rng = RngStream::new(31, s as u64, 0);
            let mut counts = vec![0usize; k];
            for u in 0..n {
                let v = if u < holders { 0 } else { 1 + (u % (k - 2)) as u32 };
                counts[grr_perturb(v, &p, &mut rng).unwrap() as usize] += 1;
            }
            let est = grr_estimate(&counts, n, &p).unwrap();
            ests[0].push(est[0]);
            ests[1].push(est[k - 1]);
        }
        let var = |xs: &[f64]| {
            let mean = xs.iter().sum::<f64>() / xs.len() as f64;
            xs.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
        };
        (var(&ests[0]), var(&ests[1]))
    }

    #[test]
    fn variance_matches_simulation() {
        let (eps, k, n) = (1.0, 10, 10_000usize);
        let p = grr_params(eps, k).unwrap();
        let (var_held, var_empty) = simulated_variances(eps, k, n, 2000);
        // the closed form is the variance for a value nobody holds
        let model = grr_variance(eps, k, n).unwrap();
        assert!((var_empty / model - 1.0).abs() < 0.10, "empirical {var_empty}, model {model}");
        // for f_v = 0.3 the exact variance adds the holders' Bernoulli terms
        let exact = (0.3 * p.p * (1.0 - p.p) + 0.7 * p.q * (1.0 - p.q)) / (n as f64 * p.delta * p.delta);
        assert!((var_held / exact - 1.0).abs() < 0.10, "empirical {var_held}, exact {exact}");
        assert!(var_held > 1.2 * model);
    }

    #[test]
    fn unbiased_at_fixed_seed() {
        let (eps, k, n) = (1.0, 4, 100_000usize);
        let p = grr_params(eps, k).unwrap();
        let truth = [0.4, 0.3, 0.2, 0.1];
        let mut counts = vec![0usize; k];
        let mut rng = RngStream::from_seed(4242);
        for u in 0..n {
            let v = match u * 10 / n { 0..=3 => 0, 4..=6 => 1, 7 | 8 => 2, _ => 3 };
            counts[grr_perturb(v, &p, &mut rng).unwrap() as usize] += 1;
        }
        let est = grr_estimate(&counts, n, &p).unwrap();
        let sd = grr_variance(eps, k, n).unwrap().sqrt();
        for (e, t) in est.iter().zip(truth) {
            assert!((e - t).abs() <= 4.0 * sd, "{e} vs {t}");
        }
    }

    #[test]
    fn channel_examples() {
        let p = grr_params(3f64.ln(), 2).unwrap();
        let m = grr_channel(&p);
        assert!((m.get(0, 0) - 0.75).abs() < 1e-15 && (m.get(0, 1) - 0.25).abs() < 1e-15);
        assert!(m.is_stochastic(1e-12));
        let r = ldp_ratio(&grr_channel(&grr_params(1.0, 5).unwrap()));
        assert!((r - 1f64.exp()).abs() < 1e-9);
    }

    #[test]
    fn ldp_ratio_edge_matrices() {
        let id = ChannelMatrix::from_fn(3, 3, |y, x| if y == x { 1.0 } else { 0.0 });
        assert_eq!(ldp_ratio(&id), f64::INFINITY);
        let uni = ChannelMatrix::from_fn(4, 4, |_, _| 0.25);
        assert_eq!(ldp_ratio(&uni), 1.0);
        let zero_row = ChannelMatrix::from_fn(3, 2, |y, _| if y == 2 { 0.0 } else { 0.5 });
        assert_eq!(ldp_ratio(&zero_row), 1.0);
    }

    proptest! {
        #[test]
        fn params_invariants(eps in 0.01f64..10.0, k in 2usize..=32) {
            let p = grr_params(eps, k).unwrap();
            prop_assert!((p.p + (k - 1) as f64 * p.q - 1.0).abs() < 1e-12);
            prop_assert!((p.p / p.q - eps.exp()).abs() < 1e-9 * eps.exp().max(1.0));
            prop_assert!(p.delta > 0.0 && (p.delta - (p.p - p.q)).abs() < 1e-15);
            let r = ldp_ratio(&grr_channel(&p));
            prop_assert!((r - eps.exp()).abs() < 1e-9 * eps.exp().max(1.0));
        }

        #[test]
        fn estimate_inverts_expected_counts(eps in 0.1f64..6.0, raw in prop::collection::vec(0.0f64..1.0, 2..12)) {
            let k = raw.len();
            let s: f64 = raw.iter().sum::<f64>() + 1e-9;
            let f: Vec<f64> = raw.iter().map(|x| x / s).collect();
            let p = grr_params(eps, k).unwrap();
            // forward expectation c_v/n = q + Δ f_v, fed straight into the inverse
            let freqs: Vec<f64> = f.iter().map(|fv| p.q + p.delta * fv).collect();
            let back = grr_estimate_from_frequencies(&freqs, &p);
            for (fv, b) in f.iter().zip(&back) {
                prop_assert!((b - fv).abs() < 1e-12);
            }
        }
    }
}
