//! WMMSE building blocks: MMSE equalizers, MSE weights and the convex precoder subproblem.
//!
//! For fixed equalizer `g` and weight `u`, the rate of a stream is lower bounded by
//!
//! ```text
//! r(P) = (1 - u * e(P) + ln u) / ln 2,      e(P) = g^2 (sum_{j in stage} (h^T p_j)^2 + sigma^2) - 2 g h^T p_s + 1
//! ```
//!
//! with equality at the point the pair was computed from. The subproblem
//! maximizes the weighted private bounds plus the common-rate weight times the
//! smallest common bound, over precoders whose LED rows lie in the L1 ball.

use std::f64::consts::LN_2;

use nalgebra::{DMatrix, SymmetricEigen};

use super::l1::project_rows;
use crate::channel::ChannelMatrix;
use crate::error::{Error, Result};
use crate::signal_model::{Precoder, RateEvaluator, StreamLayout, SINR_FLOOR};

/// One (user, stream) decoding event.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecodeTerm {
    pub user: usize,
    pub stream: usize,
    /// Streams present at the receiver in this SIC stage (including `stream`).
    pub stage: Vec<usize>,
    pub is_common: bool,
}

/// Every decoding event of the layout: each user decodes the common stream
/// (if any) and then its own private stream (if any).
pub fn decode_terms(layout: &StreamLayout) -> Vec<DecodeTerm> {
    let mut terms = Vec::new();
    for k in 0..layout.num_users {
        if let Some(c) = layout.common_index() {
            terms.push(DecodeTerm { user: k, stream: c, stage: layout.stage_streams(c), is_common: true });
        }
        if let Some(p) = layout.private_index(k) {
            terms.push(DecodeTerm { user: k, stream: p, stage: layout.stage_streams(p), is_common: false });
        }
    }
    terms
}

fn stage_power(channel: &ChannelMatrix, precoder: &Precoder, k: usize, stage: &[usize]) -> f64 {
    stage.iter().map(|&j| channel.project(k, precoder.column(j)).powi(2)).sum::<f64>() + channel.noise[k]
}

/// MMSE receive gain for stream `stream` at user `k`, given the streams of its SIC stage.
pub fn mmse_equalizer(channel: &ChannelMatrix, precoder: &Precoder, layout: &StreamLayout, k: usize, stream: usize) -> f64 {
    let stage = layout.stage_streams(stream);
    let signal = channel.project(k, precoder.column(stream));
    signal / stage_power(channel, precoder, k, &stage).max(SINR_FLOOR)
}

/// Mean-square error of `equalizer * y - s` and its WMMSE weight `1 / mse`.
pub fn mse_and_weight(
    channel: &ChannelMatrix,
    precoder: &Precoder,
    layout: &StreamLayout,
    equalizer: f64,
    k: usize,
    stream: usize,
) -> (f64, f64) {
    let stage = layout.stage_streams(stream);
    let total = stage_power(channel, precoder, k, &stage);
    let signal = channel.project(k, precoder.column(stream));
    let mse = (equalizer * equalizer * total - 2.0 * equalizer * signal + 1.0).max(f64::MIN_POSITIVE);
    (mse, 1.0 / mse)
}

/// Equalizers and weights for every decode term, evaluated at `precoder`.
pub fn update_receivers(
    channel: &ChannelMatrix,
    precoder: &Precoder,
    layout: &StreamLayout,
    terms: &[DecodeTerm],
) -> (Vec<f64>, Vec<f64>) {
    let mut g = Vec::with_capacity(terms.len());
    let mut u = Vec::with_capacity(terms.len());
    for t in terms {
        let gt = mmse_equalizer(channel, precoder, layout, t.user, t.stream);
        let (_, ut) = mse_and_weight(channel, precoder, layout, gt, t.user, t.stream);
        g.push(gt);
        u.push(ut);
    }
    (g, u)
}

/// Iteration caps for the inner projected-gradient solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubproblemConfig {
    pub max_iterations: usize,
    /// Stop once the objective improved by less than this over `stall_window` iterations.
    pub objective_tol: f64,
    pub stall_window: usize,
    /// Golden-section tolerance on the common-rate multiplier (two users).
    pub multiplier_tol: f64,
}

impl Default for SubproblemConfig {
    fn default() -> Self {
        Self { max_iterations: 3000, objective_tol: 1e-11, stall_window: 25, multiplier_tol: 1e-4 }
    }
}

/// Fixed-receiver surrogate of the WSR as a function of the precoder.
struct Surrogate<'a> {
    channel: &'a ChannelMatrix,
    terms: &'a [DecodeTerm],
    g: &'a [f64],
    u: &'a [f64],
    priorities: &'a [f64],
    common_weight: f64,
    leds: usize,
    streams: usize,
}

impl Surrogate<'_> {
    /// Lower bound (bits) on the rate of each term.
    fn term_rates(&self, p: &[f64], out: &mut [f64]) {
        for (i, t) in self.terms.iter().enumerate() {
            let k = t.user;
            let mut total = self.channel.noise[k];
            let mut signal = 0.0;
            for &j in &t.stage {
                let v = self.channel.project(k, &p[j * self.leds..(j + 1) * self.leds]);
                total += v * v;
                if j == t.stream {
                    signal = v;
                }
            }
            let e = self.g[i] * self.g[i] * total - 2.0 * self.g[i] * signal + 1.0;
            out[i] = (1.0 - self.u[i] * e + self.u[i].ln()) / LN_2;
        }
    }

    /// Private bounds weighted by priority plus the common weight times the smallest common bound.
    fn value(&self, p: &[f64], scratch: &mut [f64]) -> f64 {
        self.term_rates(p, scratch);
        let mut total = 0.0;
        let mut common = f64::INFINITY;
        for (t, r) in self.terms.iter().zip(scratch.iter()) {
            if t.is_common {
                common = common.min(*r);
            } else {
                total += self.priorities[t.user] * r;
            }
        }
        if common.is_finite() {
            total += self.common_weight * common;
        }
        total
    }
}

/// Column-separable quadratic `sum_j 0.5 p_j^T M_j p_j - b_j^T p_j` whose
/// minimization is equivalent to maximizing the multiplier-weighted surrogate.
struct Quadratic {
    hess: Vec<DMatrix<f64>>,
    lin: Vec<Vec<f64>>,
    lipschitz: f64,
    leds: usize,
}

impl Quadratic {
    fn new(s: &Surrogate<'_>, coef: &[f64]) -> Self {
        let l = s.leds;
        let mut hess = vec![DMatrix::zeros(l, l); s.streams];
        let mut lin = vec![vec![0.0; l]; s.streams];
        for (i, t) in s.terms.iter().enumerate() {
            let a = coef[i] * s.u[i];
            if a == 0.0 {
                continue;
            }
            let h = s.channel.gains.row(t.user).transpose();
            let outer = &h * h.transpose();
            for &j in &t.stage {
                hess[j] += &outer * (2.0 * a * s.g[i] * s.g[i]);
            }
            for (b, hv) in lin[t.stream].iter_mut().zip(h.iter()) {
                *b += 2.0 * a * s.g[i] * hv;
            }
        }
        let lipschitz = hess
            .iter()
            .map(|m| SymmetricEigen::new(m.clone()).eigenvalues.max())
            .fold(0.0, f64::max);
        Self { hess, lin, lipschitz, leds: l }
    }

    fn value(&self, p: &[f64]) -> f64 {
        let l = self.leds;
        let mut f = 0.0;
        for (j, (m, b)) in self.hess.iter().zip(&self.lin).enumerate() {
            let col = &p[j * l..(j + 1) * l];
            for r in 0..l {
                let mut mp = 0.0;
                for c in 0..l {
                    mp += m[(r, c)] * col[c];
                }
                f += 0.5 * col[r] * mp - b[r] * col[r];
            }
        }
        f
    }

    fn gradient(&self, p: &[f64], out: &mut [f64]) {
        let l = self.leds;
        for (j, (m, b)) in self.hess.iter().zip(&self.lin).enumerate() {
            let col = &p[j * l..(j + 1) * l];
            for r in 0..l {
                let mut mp = 0.0;
                for c in 0..l {
                    mp += m[(r, c)] * col[c];
                }
                out[j * l + r] = mp - b[r];
            }
        }
    }

    /// Monotone FISTA with adaptive restart over the product of per-row L1 balls.
    fn minimize(&self, start: &[f64], epsilon: f64, cfg: &SubproblemConfig) -> Result<Vec<f64>> {
        let n = start.len();
        let rows = self.leds;
        let cols = n / rows;
        let mut scratch = Vec::new();
        let mut x = start.to_vec();
        project_rows(&mut x, rows, cols, epsilon, &mut scratch);
        if !(self.lipschitz > 0.0) {
            return Ok(x);
        }
        let step = 1.0 / self.lipschitz;
        let mut fx = self.value(&x);
        let mut y = x.clone();
        let mut z = vec![0.0; n];
        let mut grad = vec![0.0; n];
        let mut x_prev = x.clone();
        let mut t = 1.0f64;
        let mut history_best = fx;
        let mut since_check = 0;

        for _ in 0..cfg.max_iterations {
            self.gradient(&y, &mut grad);
            if grad.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numerical(format!(
                    "non-finite gradient in precoder subproblem (lipschitz={}, epsilon={epsilon})",
                    self.lipschitz
                )));
            }
            for i in 0..n {
                z[i] = y[i] - step * grad[i];
            }
            project_rows(&mut z, rows, cols, epsilon, &mut scratch);
            let fz = self.value(&z);
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            x_prev.copy_from_slice(&x);
            if fz <= fx {
                x.copy_from_slice(&z);
                fx = fz;
                for i in 0..n {
                    y[i] = x[i] + (t - 1.0) / t_next * (x[i] - x_prev[i]);
                }
                t = t_next;
            } else {
                // Momentum overshot: restart from the incumbent.
                y.copy_from_slice(&x);
                t = 1.0;
            }
            since_check += 1;
            if since_check >= cfg.stall_window {
                if history_best - fx <= cfg.objective_tol * (1.0 + fx.abs()) {
                    break;
                }
                history_best = fx;
                since_check = 0;
            }
        }
        Ok(x)
    }
}

/// Solves the WMMSE precoder subproblem for fixed receivers.
///
/// Returns a feasible precoder whose surrogate value is at least that of
/// `warm_start` (projected), together with common-rate shares: the common
/// surrogate bound (clipped at zero) is granted to the carrier with the largest
/// priority weight.
#[allow(clippy::too_many_arguments)]
pub fn solve_subproblem(
    channel: &ChannelMatrix,
    layout: &StreamLayout,
    terms: &[DecodeTerm],
    equalizers: &[f64],
    weights: &[f64],
    priorities: &[f64],
    epsilon: f64,
    warm_start: &Precoder,
    cfg: &SubproblemConfig,
) -> Result<(Precoder, Vec<f64>)> {
    let leds = channel.num_leds();
    let streams = layout.num_streams();
    let evaluator = RateEvaluator::new(layout, priorities);
    let surrogate = Surrogate {
        channel,
        terms,
        g: equalizers,
        u: weights,
        priorities,
        common_weight: evaluator.common_weight(),
        leds,
        streams,
    };
    let mut scratch = vec![0.0; terms.len()];

    let mut best = warm_start.matrix.as_slice().to_vec();
    let mut proj_scratch = Vec::new();
    project_rows(&mut best, leds, streams, epsilon, &mut proj_scratch);
    if epsilon <= 0.0 {
        return Ok((Precoder::zeros(leds, streams), vec![0.0; layout.num_users]));
    }
    let mut best_value = surrogate.value(&best, &mut scratch);

    let common_terms: Vec<usize> = terms.iter().enumerate().filter(|(_, t)| t.is_common).map(|(i, _)| i).collect();
    let mut coef = vec![0.0; terms.len()];
    for (i, t) in terms.iter().enumerate() {
        if !t.is_common {
            coef[i] = priorities[t.user];
        }
    }

    // Solves for one multiplier vector over the common terms; keeps the best primal point.
    let mut warm = best.clone();
    let mut rates_scratch = vec![0.0; terms.len()];
    let mut solve_for = |lambda: &[f64], warm: &mut Vec<f64>| -> Result<(f64, Vec<f64>)> {
        let scratch = &mut rates_scratch;
        for (&i, &l) in common_terms.iter().zip(lambda) {
            coef[i] = surrogate.common_weight * l;
        }
        let q = Quadratic::new(&surrogate, &coef);
        let p = q.minimize(warm, epsilon, cfg)?;
        surrogate.term_rates(&p, scratch);
        let dual: f64 = coef.iter().zip(scratch.iter()).map(|(c, r)| c * r).sum();
        let common_rates: Vec<f64> = common_terms.iter().map(|&i| scratch[i]).collect();
        let primal = surrogate.value(&p, scratch);
        if primal > best_value {
            best_value = primal;
            best.copy_from_slice(&p);
        }
        warm.copy_from_slice(&p);
        Ok((dual, common_rates))
    };

    match common_terms.len() {
        0 => {
            solve_for(&[], &mut warm)?;
        }
        1 => {
            solve_for(&[1.0], &mut warm)?;
        }
        2 => {
            // The dual function is convex in the multiplier; golden-section search on [0, 1].
            let phi = 0.5 * (5f64.sqrt() - 1.0);
            let (mut a, mut b) = (0.0f64, 1.0f64);
            let mut c = b - phi * (b - a);
            let mut d = a + phi * (b - a);
            let mut fc = solve_for(&[c, 1.0 - c], &mut warm)?.0;
            let mut fd = solve_for(&[d, 1.0 - d], &mut warm)?.0;
            while b - a > cfg.multiplier_tol {
                if fc < fd {
                    b = d;
                    d = c;
                    fd = fc;
                    c = b - phi * (b - a);
                    fc = solve_for(&[c, 1.0 - c], &mut warm)?.0;
                } else {
                    a = c;
                    c = d;
                    fc = fd;
                    d = a + phi * (b - a);
                    fd = solve_for(&[d, 1.0 - d], &mut warm)?.0;
                }
            }
            for edge in [0.0, 1.0] {
                solve_for(&[edge, 1.0 - edge], &mut warm)?;
            }
        }
        n => {
            // Exponentiated-gradient descent of the dual over the simplex.
            let mut lambda = vec![1.0 / n as f64; n];
            for it in 0..60 {
                let (_, rates) = solve_for(&lambda, &mut warm)?;
                let spread = rates.iter().fold(0.0f64, |m, r| m.max(r.abs())).max(1e-12);
                let eta = 2.0 / (spread * (1.0 + it as f64).sqrt());
                for (l, r) in lambda.iter_mut().zip(&rates) {
                    *l *= (-eta * r).exp();
                }
                let sum: f64 = lambda.iter().sum();
                lambda.iter_mut().for_each(|l| *l /= sum);
            }
        }
    }

    let precoder = Precoder::new(DMatrix::from_column_slice(leds, streams, &best));
    surrogate.term_rates(&best, &mut scratch);
    let common_bound = common_terms.iter().map(|&i| scratch[i]).fold(f64::INFINITY, f64::min);
    let shares = if common_terms.is_empty() {
        vec![0.0; layout.num_users]
    } else {
        crate::signal_model::default_shares(layout, priorities, common_bound.max(0.0))
    };
    Ok((precoder, shares))
}

/// Surrogate value of `precoder` for the given receivers; equals the WSR when
/// the receivers were computed at `precoder`.
pub fn surrogate_value(
    channel: &ChannelMatrix,
    layout: &StreamLayout,
    terms: &[DecodeTerm],
    equalizers: &[f64],
    weights: &[f64],
    priorities: &[f64],
    precoder: &Precoder,
) -> f64 {
    let evaluator = RateEvaluator::new(layout, priorities);
    let s = Surrogate {
        channel,
        terms,
        g: equalizers,
        u: weights,
        priorities,
        common_weight: evaluator.common_weight(),
        leds: channel.num_leds(),
        streams: layout.num_streams(),
    };
    let mut scratch = vec![0.0; terms.len()];
    s.value(precoder.matrix.as_slice(), &mut scratch)
}
