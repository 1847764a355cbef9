//! Weighted-sum-rate precoder design by WMMSE alternating optimization.
//!
//! Each AO iteration recomputes the MMSE equalizers and MSE weights at the
//! current precoder, then solves the convex WMMSE subproblem. Because the
//! surrogate lower-bounds every rate and is tight at the current point, the
//! WSR never decreases from one iteration to the next.

pub mod l1;
pub mod oracle;
pub mod wmmse;
pub mod zf;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::ChannelMatrix;
use crate::error::{Error, Result};
use crate::signal_model::{assemble_report, build_layout, Precoder, RateReport, Scheme, StreamKind, StreamLayout};

pub use oracle::grid_oracle;
pub use wmmse::{
    decode_terms, mmse_equalizer, mse_and_weight, solve_subproblem, surrogate_value, update_receivers, DecodeTerm,
    SubproblemConfig,
};
pub use zf::zf_precoder;

/// Slack tolerated on the monotone-ascent property.
pub const ASCENT_SLACK: f64 = 1e-8;

/// How a per-LED SNR (dB) is turned into the amplitude budget `epsilon`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SnrMapping {
    /// Channel gain at which the SNR is referenced: a receiver with this gain to
    /// one LED driven at full swing sees exactly the nominal SNR.
    pub reference_gain: f64,
    /// Physical drive headroom `min(d_DC, P_max - d_DC)`, applied as an upper bound when set.
    pub drive_cap: Option<f64>,
}

impl Default for SnrMapping {
    fn default() -> Self {
        Self { reference_gain: 1.0, drive_cap: None }
    }
}

/// Amplitude budget for a per-LED SNR: `sigma * 10^(snr/20) / reference_gain`, optionally capped.
pub fn epsilon_from_snr(snr_db: f64, sigma: f64, mapping: &SnrMapping) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::Domain(format!("noise standard deviation must be positive, got {sigma}")));
    }
    if !(mapping.reference_gain > 0.0) {
        return Err(Error::Domain("SNR reference gain must be positive".into()));
    }
    let eps = sigma * 10f64.powf(snr_db / 20.0) / mapping.reference_gain;
    Ok(match mapping.drive_cap {
        Some(cap) => eps.min(cap),
        None => eps,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AoConfig {
    /// Stop when consecutive WSR values differ by at most this (bits/s/Hz).
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Random feasible starting points, on top of the structured ones.
    pub restarts: usize,
    pub seed: u64,
    #[serde(skip)]
    pub subproblem: SubproblemConfig,
    pub snr_db: f64,
    pub snr_mapping: SnrMapping,
}

impl Default for AoConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-4,
            max_iterations: 500,
            restarts: 4,
            seed: 0,
            subproblem: SubproblemConfig::default(),
            snr_db: 20.0,
            snr_mapping: SnrMapping::default(),
        }
    }
}

impl AoConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) {
            return Err(Error::Config("AO tolerance must be positive".into()));
        }
        if self.max_iterations == 0 {
            return Err(Error::Config("AO needs at least one iteration".into()));
        }
        if self.restarts == 0 {
            return Err(Error::Config("AO needs at least one restart".into()));
        }
        Ok(())
    }

    /// Amplitude budget for `channel`; the noise reference is the RMS noise over users.
    pub fn epsilon(&self, channel: &ChannelMatrix) -> Result<f64> {
        let sigma = channel.noise.mean().sqrt();
        epsilon_from_snr(self.snr_db, sigma, &self.snr_mapping)
    }
}

/// Alternating-optimization state of one restart.
#[derive(Debug, Clone, PartialEq)]
pub struct WmmseState {
    pub precoder: Precoder,
    /// Common-rate shares granted by the last subproblem.
    pub shares: Vec<f64>,
    /// Receive equalizers, one per decode term (see [`decode_terms`]).
    pub equalizers: Vec<f64>,
    /// MSE weights `1 / mse`, one per decode term.
    pub mse_weights: Vec<f64>,
    pub wsr_history: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub precoder: Precoder,
    pub shares: Vec<f64>,
    pub report: RateReport,
    pub iterations: usize,
    pub converged: bool,
    pub restart_index: usize,
    pub wsr_history: Vec<f64>,
    pub epsilon: f64,
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Deterministic seed derived from a base seed and a list of tags.
pub fn derive_seed(base: u64, tags: &[u64]) -> u64 {
    tags.iter().fold(splitmix(base), |acc, t| splitmix(acc ^ splitmix(*t)))
}

fn scheme_tag(scheme: Scheme) -> u64 {
    match scheme {
        Scheme::Rsma => 1,
        Scheme::Sdma => 2,
        Scheme::Noma => 3,
    }
}

/// Maximizes the WSR of `layout` over precoders and common-rate shares.
pub fn ao_solve(channel: &ChannelMatrix, layout: &StreamLayout, priorities: &[f64], config: &AoConfig) -> Result<Solution> {
    config.validate()?;
    let epsilon = config.epsilon(channel)?;
    ao_solve_with_budget(channel, layout, priorities, epsilon, config)
}

/// Same as [`ao_solve`] with an explicit amplitude budget.
pub fn ao_solve_with_budget(
    channel: &ChannelMatrix,
    layout: &StreamLayout,
    priorities: &[f64],
    epsilon: f64,
    config: &AoConfig,
) -> Result<Solution> {
    config.validate()?;
    if priorities.len() != layout.num_users || priorities.iter().any(|w| !(*w > 0.0)) {
        return Err(Error::Config("priority weights must be positive, one per user".into()));
    }
    if !(epsilon >= 0.0 && epsilon.is_finite()) {
        return Err(Error::Domain(format!("amplitude budget must be finite and nonnegative, got {epsilon}")));
    }
    let leds = channel.num_leds();
    let streams = layout.num_streams();
    if epsilon == 0.0 {
        let precoder = Precoder::zeros(leds, streams);
        let report = assemble_report(channel, &precoder, layout, None, priorities)?;
        return Ok(Solution {
            shares: report.common_shares.clone(),
            wsr_history: vec![report.wsr],
            precoder,
            report,
            iterations: 1,
            converged: true,
            restart_index: 0,
            epsilon,
        });
    }

    let starts = starting_points(channel, layout, priorities, epsilon, config)?;
    let mut best: Option<Solution> = None;
    for (idx, start) in starts.into_iter().enumerate() {
        let sol = run_restart(channel, layout, priorities, epsilon, start, idx, config, &mut |_| {})?;
        if best.as_ref().is_none_or(|b| sol.report.wsr > b.report.wsr) {
            best = Some(sol);
        }
    }
    best.ok_or_else(|| Error::Numerical("no starting point produced a solution".into()))
}

/// Runs the AO loop from one starting point, calling `observe` with the start
/// and with every precoder the subproblem returns (accepted or not).
pub fn ao_from_start(
    channel: &ChannelMatrix,
    layout: &StreamLayout,
    priorities: &[f64],
    epsilon: f64,
    start: Precoder,
    config: &AoConfig,
    observe: &mut dyn FnMut(&Precoder),
) -> Result<Solution> {
    config.validate()?;
    if start.matrix.shape() != (channel.num_leds(), layout.num_streams()) {
        return Err(Error::Config("starting precoder has the wrong shape".into()));
    }
    run_restart(channel, layout, priorities, epsilon, start, 0, config, observe)
}

#[allow(clippy::too_many_arguments)]
fn run_restart(
    channel: &ChannelMatrix,
    layout: &StreamLayout,
    priorities: &[f64],
    epsilon: f64,
    start: Precoder,
    restart_index: usize,
    config: &AoConfig,
    observe: &mut dyn FnMut(&Precoder),
) -> Result<Solution> {
    let terms = decode_terms(layout);
    let mut state = WmmseState {
        shares: vec![0.0; layout.num_users],
        equalizers: Vec::new(),
        mse_weights: Vec::new(),
        wsr_history: Vec::new(),
        precoder: start,
    };
    observe(&state.precoder);
    let mut report = assemble_report(channel, &state.precoder, layout, None, priorities)?;
    state.wsr_history.push(report.wsr);
    let mut converged = false;
    let mut iterations = 0;
    while iterations < config.max_iterations {
        iterations += 1;
        let (g, u) = update_receivers(channel, &state.precoder, layout, &terms);
        state.equalizers = g;
        state.mse_weights = u;
        let (candidate, shares) = solve_subproblem(
            channel,
            layout,
            &terms,
            &state.equalizers,
            &state.mse_weights,
            priorities,
            epsilon,
            &state.precoder,
            &config.subproblem,
        )?;
        observe(&candidate);
        let next = assemble_report(channel, &candidate, layout, None, priorities)?;
        let previous = report.wsr;
        if next.wsr >= previous {
            state.precoder = candidate;
            state.shares = shares;
            report = next;
        }
        state.wsr_history.push(report.wsr);
        if (report.wsr - previous).abs() <= config.tolerance {
            converged = true;
            break;
        }
    }
    Ok(Solution {
        shares: report.common_shares.clone(),
        precoder: state.precoder,
        report,
        iterations,
        converged,
        restart_index,
        wsr_history: state.wsr_history,
        epsilon,
    })
}

fn project_feasible(mut p: Precoder, epsilon: f64) -> Precoder {
    let (l, s) = p.matrix.shape();
    let mut scratch = Vec::new();
    l1::project_rows(p.matrix.as_mut_slice(), l, s, epsilon, &mut scratch);
    p
}

fn random_feasible(rng: &mut ChaCha8Rng, leds: usize, streams: usize, epsilon: f64) -> Precoder {
    let mut m = DMatrix::from_fn(leds, streams, |_, _| rng.random_range(-1.0..1.0));
    for mut row in m.row_iter_mut() {
        let l1: f64 = row.iter().map(|v: &f64| v.abs()).sum();
        let target = epsilon * rng.random_range(0.3..1.0);
        if l1 > 0.0 {
            row *= target / l1;
        }
    }
    Precoder::new(m)
}

/// Restart set: zero-forcing and one matched-filter start per user, then
/// `config.restarts` random feasible points.
///
/// RSMA additionally starts from the converged SDMA solution (zero common column)
/// and, for two users, from the converged NOMA solution mapped onto RSMA streams,
/// so its result is never below either special case.
fn starting_points(
    channel: &ChannelMatrix,
    layout: &StreamLayout,
    priorities: &[f64],
    epsilon: f64,
    config: &AoConfig,
) -> Result<Vec<Precoder>> {
    let leds = channel.num_leds();
    let streams = layout.num_streams();
    let users = layout.num_users;
    let zf = zf_precoder(channel, epsilon);
    let mut starts = Vec::new();

    let mut zf_start = DMatrix::zeros(leds, streams);
    match layout.scheme {
        Scheme::Sdma => {
            for k in 0..users {
                zf_start.set_column(layout.private_index(k).unwrap_or(k), &zf.matrix.column(k));
            }
        }
        Scheme::Rsma | Scheme::Noma => {
            let common = layout.common_index().unwrap_or(streams - 1);
            let private_share = if layout.scheme == Scheme::Rsma { 0.8 } else { 0.5 };
            for k in 0..users {
                if let Some(p) = layout.private_index(k) {
                    zf_start.set_column(p, &(zf.matrix.column(k) * private_share));
                }
            }
            zf_start.column_mut(common).fill(epsilon * (1.0 - private_share));
        }
    }
    starts.push(project_feasible(Precoder::new(zf_start), epsilon));

    // Single-user dominant starts: full-budget matched filter for one user, a
    // small zero-forcing remainder for the others.
    for k in 0..users {
        let Some(serving) = layout.private_index(k).or(layout.common_index()) else {
            continue;
        };
        let mut start = DMatrix::zeros(leds, streams);
        for (j, desc) in layout.streams.iter().enumerate() {
            if let StreamKind::Private(other) = desc.kind {
                if other != k {
                    start.set_column(j, &(zf.matrix.column(other) * 0.1));
                }
            }
        }
        for l in 0..leds {
            start[(l, serving)] = 0.9 * epsilon * channel.gains[(k, l)].signum();
        }
        starts.push(project_feasible(Precoder::new(start), epsilon));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, &[scheme_tag(layout.scheme)]));
    for _ in 0..config.restarts {
        starts.push(random_feasible(&mut rng, leds, streams, epsilon));
    }

    if layout.scheme == Scheme::Rsma {
        let common = layout.common_index().expect("RSMA layout has a common stream");
        let sdma_layout = build_layout(Scheme::Sdma, users, channel)?;
        let sdma = ao_solve_with_budget(channel, &sdma_layout, priorities, epsilon, config)?;
        let mut padded = DMatrix::zeros(leds, streams);
        for k in 0..users {
            let src = sdma_layout.private_index(k).expect("SDMA has a private stream per user");
            let dst = layout.private_index(k).expect("RSMA has a private stream per user");
            padded.set_column(dst, &sdma.precoder.matrix.column(src));
        }
        starts.push(Precoder::new(padded.clone()));
        // Same point with a small common column so the common stream can grow.
        let mut nudged = padded * 0.9;
        nudged.column_mut(common).fill(0.1 * epsilon);
        starts.push(project_feasible(Precoder::new(nudged), epsilon));

        if users == 2 {
            let noma_layout = build_layout(Scheme::Noma, users, channel)?;
            let noma = ao_solve_with_budget(channel, &noma_layout, priorities, epsilon, config)?;
            let mut mapped = DMatrix::zeros(leds, streams);
            for (j, s) in noma_layout.streams.iter().enumerate() {
                let dst = match s.kind {
                    StreamKind::Private(k) => layout.private_index(k).expect("RSMA has a private stream per user"),
                    StreamKind::Common(_) => common,
                };
                mapped.set_column(dst, &noma.precoder.matrix.column(j));
            }
            starts.push(Precoder::new(mapped));
        }
    }
    Ok(starts)
}
