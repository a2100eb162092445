//! Analytic error model of the Corr-RR phase-II estimator for a pair of
//! attributes, and the choice of the copy probability `p_y` that minimizes it.
//!
//! Two attributes `a` and `b` share a domain of size `k`. A phase-II user
//! perturbs one of them (fair coin) with GRR at full budget and derives the
//! other from the perturbed value: copy with probability `p_y`, otherwise a
//! uniform draw from the remaining `k - 1` values. The report frequency of
//! value `v` on attribute `a` is then Bernoulli with mean
//!
//! ```text
//! π_v = q + Δ·(f_a(v) + A(v)),   A(v) = ½·[g_b(v) − f_a(v) + p_y·(f_b(v) − g_b(v))]
//! ```
//!
//! where `g_b(v) = (1 − f_b(v)) / (k − 1)`. `A(v)` is the bias of the phase-II
//! estimate and the estimate's variance is `π_v (1 − π_v) / (n' Δ²)`. For
//! `k = 2`, `g_b = 1 − f_b` and `A(v) = ½·[d₀(v) + p_y·e(v)]` with
//! `d₀ = 1 − f_a − f_b`, `e = 2 f_b − 1`; the variance can then be written as
//! `(¼ − B(v)²)/(n' Δ²)` with `B(v) = ½Δ·[a₀(v) + p_y·e(v)]`, `a₀ = f_a − f_b`.
//!
//! Both the bias and `π_v` are affine in `p_y`, so the pair-averaged MSE is a
//! quadratic `c₀ + c₁ p_y + c₂ p_y²`; the minimizer over `[0, 1]` is either the
//! vertex `−c₁ / (2 c₂)` or an endpoint.

use serde::Serialize;

use crate::domain::{MarginalTable, NORMALIZED_SUM_TOL};
use crate::error::{Error, Result};
use crate::grr::grr_params;
use crate::mechanisms::PairwisePyModel;

/// Below this magnitude both quadratic coefficients count as zero.
pub const FLAT_TOL: f64 = 1e-12;

/// Returned when the objective does not depend on `p_y`.
pub const FLAT_PY: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct PairContext {
    f_a: Vec<f64>,
    f_b: Vec<f64>,
    epsilon: f64,
    k: usize,
    q: f64,
    delta: f64,
    n_prime: f64,
}

/// Per-value scalars of a [`PairContext`], from attribute `a`'s point of view.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ValueTerms {
    pub d0: f64,
    pub a0: f64,
    pub e: f64,
    /// `π_v` at `p_y = 0`.
    pub alpha: f64,
    /// Slope of `π_v` in `p_y`.
    pub beta: f64,
    /// Bias at `p_y = 0`.
    pub bias0: f64,
    /// Slope of the bias in `p_y`.
    pub bias1: f64,
}

fn check_distribution(f: &[f64], name: &str) -> Result<()> {
    if f.iter().any(|x| !(0.0..=1.0).contains(x))
        || (f.iter().sum::<f64>() - 1.0).abs() > NORMALIZED_SUM_TOL
    {
        return Err(Error::InvalidParameter(format!("{name} is not a probability vector")));
    }
    Ok(())
}

impl PairContext {
    pub fn new(f_a: &[f64], f_b: &[f64], epsilon: f64, n_prime: usize) -> Result<Self> {
        if f_a.len() != f_b.len() {
            return Err(Error::HeterogeneousDomains);
        }
        check_distribution(f_a, "f_a")?;
        check_distribution(f_b, "f_b")?;
        if n_prime == 0 {
            return Err(Error::InvalidParameter("phase-II cohort must be non-empty".into()));
        }
        let g = grr_params(epsilon, f_a.len())?;
        Ok(Self {
            f_a: f_a.to_vec(),
            f_b: f_b.to_vec(),
            epsilon,
            k: g.k,
            q: g.q,
            delta: g.delta,
            n_prime: n_prime as f64,
        })
    }

    /// Same context with the roles of the two attributes exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            f_a: self.f_b.clone(),
            f_b: self.f_a.clone(),
            ..self.clone()
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn n_prime(&self) -> f64 {
        self.n_prime
    }

    pub fn f_a(&self) -> &[f64] {
        &self.f_a
    }

    pub fn f_b(&self) -> &[f64] {
        &self.f_b
    }

    pub fn terms(&self, v: usize) -> ValueTerms {
        let (fa, fb) = (self.f_a[v], self.f_b[v]);
        let g_b = (1.0 - fb) / (self.k - 1) as f64;
        let bias0 = 0.5 * (g_b - fa);
        let bias1 = 0.5 * (fb - g_b);
        ValueTerms {
            d0: 1.0 - fa - fb,
            a0: fa - fb,
            e: 2.0 * fb - 1.0,
            alpha: self.q + self.delta * (fa + bias0),
            beta: self.delta * bias1,
            bias0,
            bias1,
        }
    }

    /// Bias `A(v)` of the phase-II estimate of `f_a(v)`.
    pub fn bias(&self, v: usize, p_y: f64) -> f64 {
        let t = self.terms(v);
        t.bias0 + t.bias1 * p_y
    }

    /// Report probability `π_v` for attribute `a`.
    pub fn report_prob(&self, v: usize, p_y: f64) -> f64 {
        let t = self.terms(v);
        t.alpha + t.beta * p_y
    }

    /// `B(v) = ½Δ·[a₀(v) + p_y e(v)]`; equals `π_v − ½` only when `k = 2`.
    pub fn binary_b(&self, v: usize, p_y: f64) -> f64 {
        let t = self.terms(v);
        0.5 * self.delta * (t.a0 + p_y * t.e)
    }
}

/// `A(v)² + π_v (1 − π_v) / (n' Δ²)`, valid for every `k`.
pub fn general_value_mse(ctx: &PairContext, v: usize, p_y: f64) -> f64 {
    let bias = ctx.bias(v, p_y);
    let pi = ctx.report_prob(v, p_y);
    bias * bias + pi * (1.0 - pi) / (ctx.n_prime * ctx.delta * ctx.delta)
}

/// `A(v)² + (¼ − B(v)²) / (n' Δ²)`, the binary-domain closed form.
pub fn binary_value_mse(ctx: &PairContext, v: usize, p_y: f64) -> f64 {
    let bias = ctx.bias(v, p_y);
    let b = ctx.binary_b(v, p_y);
    bias * bias + (0.25 - b * b) / (ctx.n_prime * ctx.delta * ctx.delta)
}

/// MSE of the phase-II estimate of `f_a(v)`.
pub fn phase2_value_mse(ctx: &PairContext, v: usize, p_y: f64) -> f64 {
    if ctx.k == 2 {
        binary_value_mse(ctx, v, p_y)
    } else {
        general_value_mse(ctx, v, p_y)
    }
}

/// Per-value MSE averaged over both attributes of the pair and all `k` values.
pub fn avg_mse(ctx: &PairContext, p_y: f64) -> f64 {
    let other = ctx.swapped();
    let total: f64 = (0..ctx.k)
        .map(|v| phase2_value_mse(ctx, v, p_y) + phase2_value_mse(&other, v, p_y))
        .sum();
    total / (2 * ctx.k) as f64
}

/// `avg_mse(p) = c0 + c1·p + c2·p²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Quadratic {
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
}

impl Quadratic {
    pub fn eval(&self, p: f64) -> f64 {
        self.c0 + p * (self.c1 + p * self.c2)
    }

    pub fn is_flat(&self) -> bool {
        self.c1.abs() < FLAT_TOL && self.c2.abs() < FLAT_TOL
    }

    /// Stationary point `−c1 / (2 c2)`, when the quadratic is strictly convex.
    pub fn vertex(&self) -> Option<f64> {
        (self.c2 > 0.0).then(|| -self.c1 / (2.0 * self.c2))
    }
}

/// Coefficients of [`avg_mse`] in `p_y`, accumulated per value and role.
pub fn avg_mse_quadratic(ctx: &PairContext) -> Quadratic {
    let scale = 1.0 / (ctx.n_prime * ctx.delta * ctx.delta);
    let mut acc = Quadratic { c0: 0.0, c1: 0.0, c2: 0.0 };
    for role in [ctx.clone(), ctx.swapped()] {
        for v in 0..ctx.k {
            let t = role.terms(v);
            // bias²
            acc.c0 += t.bias0 * t.bias0;
            acc.c1 += 2.0 * t.bias0 * t.bias1;
            acc.c2 += t.bias1 * t.bias1;
            // π(1 − π) with π = α + β p
            acc.c0 += scale * t.alpha * (1.0 - t.alpha);
            acc.c1 += scale * t.beta * (1.0 - 2.0 * t.alpha);
            acc.c2 -= scale * t.beta * t.beta;
        }
    }
    let norm = 1.0 / (2 * ctx.k) as f64;
    Quadratic {
        c0: acc.c0 * norm,
        c1: acc.c1 * norm,
        c2: acc.c2 * norm,
    }
}

/// Minimizer of [`avg_mse`] over `[0, 1]`: best of the clamped vertex and the
/// two endpoints, or [`FLAT_PY`] when the objective is flat.
pub fn optimal_py(ctx: &PairContext) -> f64 {
    let quad = avg_mse_quadratic(ctx);
    if quad.is_flat() {
        return FLAT_PY;
    }
    let mut best = (0.0, avg_mse(ctx, 0.0));
    let mut consider = |p: f64| {
        let m = avg_mse(ctx, p);
        if m < best.1 {
            best = (p, m);
        }
    };
    consider(1.0);
    if let Some(vx) = quad.vertex() {
        consider(vx.clamp(0.0, 1.0));
    }
    best.0
}

/// The simplified closed-form critical point
/// `Σ[d₀e/(2k) − a₀e/(2n'k)] / Σ[e²/(4k) − e²/(4n'k)]`, which leaves out some
/// Δ-dependent variance terms. Kept for side-by-side reporting only; `None`
/// when the denominator vanishes.
pub fn printed_closed_form_py(ctx: &PairContext) -> Option<f64> {
    let (k, n) = (ctx.k as f64, ctx.n_prime);
    let (mut num, mut den) = (0.0, 0.0);
    for v in 0..ctx.k {
        let t = ctx.terms(v);
        num += t.d0 * t.e / (2.0 * k) - t.a0 * t.e / (2.0 * n * k);
        den += t.e * t.e / (4.0 * k) - t.e * t.e / (4.0 * n * k);
    }
    (den.abs() > FLAT_TOL).then(|| num / den)
}

/// Optimal copy probability for every attribute pair, computed from
/// (clamped, normalized) phase-I marginals.
pub fn infer_py_matrix(
    phase1_marginals: &MarginalTable,
    epsilon: f64,
    n_prime: usize,
) -> Result<PairwisePyModel> {
    let d = phase1_marginals.num_attributes();
    let k = phase1_marginals.row(0).len();
    if phase1_marginals.rows().iter().any(|r| r.len() != k) {
        return Err(Error::HeterogeneousDomains);
    }
    if !phase1_marginals.is_normalized() {
        return Err(Error::InvalidParameter(
            "phase-I marginals must be clamped and normalized first".into(),
        ));
    }
    let mut model = PairwisePyModel::constant(d, FLAT_PY)?;
    for j in 0..d {
        for m in j + 1..d {
            let ctx = PairContext::new(phase1_marginals.row(j), phase1_marginals.row(m), epsilon, n_prime)?;
            model.set(j, m, optimal_py(&ctx))?;
        }
    }
    Ok(model)
}

/// Grid minimizer used as an independent check of [`optimal_py`]. Returns
/// `(argmin, min)` over `points` equally spaced values in `[0, 1]`.
pub fn grid_minimum(ctx: &PairContext, points: usize) -> (f64, f64) {
    let steps = (points.max(2) - 1) as f64;
    (0..points.max(2))
        .map(|i| {
            let p = i as f64 / steps;
            (p, avg_mse(ctx, p))
        })
        .fold((0.0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best })
}

/// Summary printed by the `pyopt` command.
#[derive(Debug, Clone, Serialize)]
pub struct PyReport {
    pub k: usize,
    pub epsilon: f64,
    pub n_prime: f64,
    pub p_y: f64,
    pub mse_at_0: f64,
    pub mse_at_opt: f64,
    pub mse_at_1: f64,
    pub quadratic: Quadratic,
    pub vertex: Option<f64>,
    pub printed_closed_form: Option<f64>,
}

pub fn py_report(ctx: &PairContext) -> PyReport {
    let p_y = optimal_py(ctx);
    let quadratic = avg_mse_quadratic(ctx);
    PyReport {
        k: ctx.k,
        epsilon: ctx.epsilon,
        n_prime: ctx.n_prime,
        p_y,
        mse_at_0: avg_mse(ctx, 0.0),
        mse_at_opt: avg_mse(ctx, p_y),
        mse_at_1: avg_mse(ctx, 1.0),
        quadratic,
        vertex: quadratic.vertex(),
        printed_closed_form: printed_closed_form_py(ctx),
    }
}
