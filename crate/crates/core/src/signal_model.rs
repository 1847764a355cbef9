//! Stream layouts, SINRs and rates of the RSMA downlink and its SDMA/NOMA special cases.
//!
//! Every user first decodes the common stream (if any) treating all private
//! streams as noise, removes it by SIC, then decodes its own private stream
//! treating the other private streams as noise.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::channel::ChannelMatrix;
use crate::error::{Error, Result};

/// Floor applied to SINR denominators.
pub const SINR_FLOOR: f64 = 1e-300;

/// Slack allowed on the per-LED amplitude constraint.
pub const FEASIBILITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Rsma,
    Sdma,
    Noma,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::Rsma, Scheme::Sdma, Scheme::Noma];

    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Rsma => "rsma",
            Scheme::Sdma => "sdma",
            Scheme::Noma => "noma",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "rsma" => Ok(Scheme::Rsma),
            "sdma" => Ok(Scheme::Sdma),
            "noma" => Ok(Scheme::Noma),
            other => Err(Error::Config(format!("unknown scheme `{other}` (expected rsma|sdma|noma)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StreamKind {
    /// Private stream of one user.
    Private(usize),
    /// Stream decoded by every user, carrying the messages of the listed users.
    Common(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StreamDesc {
    pub kind: StreamKind,
    /// SIC stage: 0 for the common stream, 1 for private streams.
    pub decode_order: usize,
}

/// Which streams exist and which precoder column carries each of them.
///
/// Private streams come first in user order, the common stream (if any) is last.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StreamLayout {
    pub scheme: Scheme,
    pub num_users: usize,
    pub streams: Vec<StreamDesc>,
}

impl StreamLayout {
    pub fn num_streams(&self) -> usize {
        self.streams.len()
    }

    pub fn common_index(&self) -> Option<usize> {
        self.streams.iter().position(|s| matches!(s.kind, StreamKind::Common(_)))
    }

    pub fn private_index(&self, user: usize) -> Option<usize> {
        self.streams.iter().position(|s| s.kind == StreamKind::Private(user))
    }

    /// Users whose messages ride on the common stream.
    pub fn common_carriers(&self) -> &[usize] {
        self.streams
            .iter()
            .find_map(|s| match &s.kind {
                StreamKind::Common(users) => Some(users.as_slice()),
                StreamKind::Private(_) => None,
            })
            .unwrap_or(&[])
    }

    pub fn private_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.streams
            .iter()
            .enumerate()
            .filter(|(_, s)| matches!(s.kind, StreamKind::Private(_)))
            .map(|(i, _)| i)
    }

    /// Streams seen by a receiver while decoding `stream`: everything for the
    /// common stage, private streams only after SIC.
    pub fn stage_streams(&self, stream: usize) -> Vec<usize> {
        match self.streams[stream].kind {
            StreamKind::Common(_) => (0..self.num_streams()).collect(),
            StreamKind::Private(_) => self.private_indices().collect(),
        }
    }
}

/// Builds the stream layout of `scheme` for `num_users` users.
pub fn build_layout(scheme: Scheme, num_users: usize, channel: &ChannelMatrix) -> Result<StreamLayout> {
    if num_users == 0 {
        return Err(Error::Config("at least one user is required".into()));
    }
    if channel.num_users() != num_users {
        return Err(Error::Config(format!(
            "layout for {num_users} users requested on a channel with {} users",
            channel.num_users()
        )));
    }
    let private = |k| StreamDesc { kind: StreamKind::Private(k), decode_order: 1 };
    let streams = match scheme {
        Scheme::Sdma => (0..num_users).map(private).collect(),
        Scheme::Rsma => {
            let mut s: Vec<_> = (0..num_users).map(private).collect();
            s.push(StreamDesc { kind: StreamKind::Common((0..num_users).collect()), decode_order: 0 });
            s
        }
        Scheme::Noma => {
            if num_users != 2 {
                return Err(Error::Unsupported(format!("NOMA is defined for two users, got {num_users}")));
            }
            let strong = strong_user(channel);
            let weak = 1 - strong;
            vec![private(strong), StreamDesc { kind: StreamKind::Common(vec![weak]), decode_order: 0 }]
        }
    };
    Ok(StreamLayout { scheme, num_users, streams })
}

/// User with the largest channel-row L2 norm; ties go to the lower index.
pub fn strong_user(channel: &ChannelMatrix) -> usize {
    let mut best = 0;
    for k in 1..channel.num_users() {
        if channel.row_norm(k) > channel.row_norm(best) {
            best = k;
        }
    }
    best
}

/// L x S precoding matrix (rows are LEDs, columns are streams) with the DC bias.
#[derive(Debug, Clone, PartialEq)]
pub struct Precoder {
    pub matrix: DMatrix<f64>,
    pub dc_bias: DVector<f64>,
}

impl Precoder {
    pub fn new(matrix: DMatrix<f64>) -> Self {
        let leds = matrix.nrows();
        Self { matrix, dc_bias: DVector::zeros(leds) }
    }

    pub fn zeros(num_leds: usize, num_streams: usize) -> Self {
        Self::new(DMatrix::zeros(num_leds, num_streams))
    }

    pub fn from_columns(columns: &[&[f64]]) -> Self {
        let rows = columns.first().map_or(0, |c| c.len());
        Self::new(DMatrix::from_fn(rows, columns.len(), |i, j| columns[j][i]))
    }

    pub fn with_dc_bias(mut self, dc_bias: DVector<f64>) -> Self {
        self.dc_bias = dc_bias;
        self
    }

    pub fn column(&self, j: usize) -> &[f64] {
        let n = self.matrix.nrows();
        &self.matrix.as_slice()[j * n..(j + 1) * n]
    }

    /// L1 norm of each LED's row.
    pub fn row_l1(&self) -> Vec<f64> {
        self.matrix.row_iter().map(|r| r.iter().map(|v| v.abs()).sum()).collect()
    }

    pub fn max_row_l1(&self) -> f64 {
        self.row_l1().into_iter().fold(0.0, f64::max)
    }

    pub fn is_feasible(&self, epsilon: f64) -> bool {
        self.max_row_l1() <= epsilon + FEASIBILITY_TOL
    }

    /// Transmitted LED drive for one symbol vector.
    pub fn transmit(&self, symbols: &[f64]) -> DVector<f64> {
        &self.matrix * DVector::from_column_slice(symbols) + &self.dc_bias
    }
}

/// Per-user rates and SINRs for a precoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub sinr_common: Vec<f64>,
    pub sinr_private: Vec<f64>,
    pub private_rate: Vec<f64>,
    /// Largest common rate decodable by every user, bits/s/Hz.
    pub common_cap: f64,
    pub common_shares: Vec<f64>,
    pub overall: Vec<f64>,
    pub wsr: f64,
}

fn check_dims(channel: &ChannelMatrix, precoder: &Precoder, layout: &StreamLayout) -> Result<()> {
    if precoder.matrix.nrows() != channel.num_leds() || precoder.matrix.ncols() != layout.num_streams() {
        return Err(Error::Config(format!(
            "precoder is {}x{}, expected {}x{}",
            precoder.matrix.nrows(),
            precoder.matrix.ncols(),
            channel.num_leds(),
            layout.num_streams()
        )));
    }
    if layout.num_users != channel.num_users() {
        return Err(Error::Config("layout and channel disagree on the number of users".into()));
    }
    Ok(())
}

/// Effective scalar gains `h_k^T p_s` for every user (rows) and stream (columns).
pub fn effective_gains(channel: &ChannelMatrix, precoder: &Precoder) -> DMatrix<f64> {
    &channel.gains * &precoder.matrix
}

fn stage_sinr(eff: &DMatrix<f64>, noise: f64, k: usize, stream: usize, stage: &[usize]) -> f64 {
    let signal = eff[(k, stream)].powi(2);
    let interference: f64 = stage.iter().filter(|&&j| j != stream).map(|&j| eff[(k, j)].powi(2)).sum();
    signal / (interference + noise).max(SINR_FLOOR)
}

/// SINR of the common stream at user `k`; zero when the layout has no common stream.
pub fn sinr_common(channel: &ChannelMatrix, precoder: &Precoder, layout: &StreamLayout, k: usize) -> f64 {
    let Some(c) = layout.common_index() else { return 0.0 };
    let eff = effective_gains(channel, precoder);
    stage_sinr(&eff, channel.noise[k], k, c, &layout.stage_streams(c))
}

/// SINR of user `k`'s private stream after the common stream is removed; zero if it has none.
pub fn sinr_private(channel: &ChannelMatrix, precoder: &Precoder, layout: &StreamLayout, k: usize) -> f64 {
    let Some(p) = layout.private_index(k) else { return 0.0 };
    let eff = effective_gains(channel, precoder);
    stage_sinr(&eff, channel.noise[k], k, p, &layout.stage_streams(p))
}

/// Achievable rate in bits/s/Hz.
#[inline]
pub fn rate(sinr: f64) -> f64 {
    (1.0 + sinr).log2()
}

/// Common rate decodable by every user.
pub fn common_cap(channel: &ChannelMatrix, precoder: &Precoder, layout: &StreamLayout) -> f64 {
    if layout.common_index().is_none() {
        return 0.0;
    }
    (0..layout.num_users)
        .map(|k| rate(sinr_common(channel, precoder, layout, k)))
        .fold(f64::INFINITY, f64::min)
}

/// Optimal split of `cap` among the common-stream carriers: everything to the
/// carrier with the largest priority weight, ties to the lower index.
pub fn default_shares(layout: &StreamLayout, weights: &[f64], cap: f64) -> Vec<f64> {
    let mut shares = vec![0.0; layout.num_users];
    let mut best: Option<usize> = None;
    for &k in layout.common_carriers() {
        if best.is_none_or(|b| weights[k] > weights[b]) {
            best = Some(k);
        }
    }
    if let Some(b) = best {
        shares[b] = cap.max(0.0);
    }
    shares
}

/// Evaluates SINRs, rates and the weighted sum rate. `shares = None` uses [`default_shares`].
pub fn assemble_report(
    channel: &ChannelMatrix,
    precoder: &Precoder,
    layout: &StreamLayout,
    shares: Option<&[f64]>,
    weights: &[f64],
) -> Result<RateReport> {
    check_dims(channel, precoder, layout)?;
    let k_users = layout.num_users;
    if weights.len() != k_users {
        return Err(Error::Config(format!("expected {k_users} priority weights, got {}", weights.len())));
    }
    let eff = effective_gains(channel, precoder);

    let mut sinr_common = vec![0.0; k_users];
    let mut common_cap = 0.0;
    if let Some(c) = layout.common_index() {
        let stage = layout.stage_streams(c);
        for (k, s) in sinr_common.iter_mut().enumerate() {
            *s = stage_sinr(&eff, channel.noise[k], k, c, &stage);
        }
        common_cap = sinr_common.iter().map(|&s| rate(s)).fold(f64::INFINITY, f64::min);
    }

    let mut sinr_private = vec![0.0; k_users];
    for (k, s) in sinr_private.iter_mut().enumerate() {
        if let Some(p) = layout.private_index(k) {
            *s = stage_sinr(&eff, channel.noise[k], k, p, &layout.stage_streams(p));
        }
    }
    let private_rate: Vec<f64> = sinr_private.iter().map(|&s| rate(s)).collect();

    let common_shares = match shares {
        None => default_shares(layout, weights, common_cap),
        Some(given) => {
            if given.len() != k_users {
                return Err(Error::Config(format!("expected {k_users} common shares, got {}", given.len())));
            }
            if given.iter().any(|c| !(*c >= 0.0)) {
                return Err(Error::ConstraintViolation("common-rate shares must be nonnegative".into()));
            }
            let carriers = layout.common_carriers();
            if given.iter().enumerate().any(|(k, c)| *c > 0.0 && !carriers.contains(&k)) {
                return Err(Error::ConstraintViolation(
                    "common-rate share assigned to a user whose message is not on the common stream".into(),
                ));
            }
            let total: f64 = given.iter().sum();
            if total > common_cap + FEASIBILITY_TOL {
                return Err(Error::ConstraintViolation(format!(
                    "common-rate shares sum to {total} but the common rate is only {common_cap}"
                )));
            }
            given.to_vec()
        }
    };

    let overall: Vec<f64> = common_shares.iter().zip(&private_rate).map(|(c, r)| c + r).collect();
    let wsr = weights.iter().zip(&overall).map(|(w, r)| w * r).sum();
    Ok(RateReport { sinr_common, sinr_private, private_rate, common_cap, common_shares, overall, wsr })
}

/// Allocation-free weighted-sum-rate evaluation for a fixed layout, used in
/// the optimizer and oracle inner loops.
#[derive(Debug, Clone)]
pub struct RateEvaluator {
    num_users: usize,
    num_streams: usize,
    common: Option<usize>,
    private: Vec<Option<usize>>,
    private_streams: Vec<usize>,
    weights: Vec<f64>,
    /// Priority weight earned by the common rate under the optimal share split.
    common_weight: f64,
}

impl RateEvaluator {
    pub fn new(layout: &StreamLayout, weights: &[f64]) -> Self {
        let common_weight = layout.common_carriers().iter().map(|&k| weights[k]).fold(0.0, f64::max);
        Self {
            num_users: layout.num_users,
            num_streams: layout.num_streams(),
            common: layout.common_index(),
            private: (0..layout.num_users).map(|k| layout.private_index(k)).collect(),
            private_streams: layout.private_indices().collect(),
            weights: weights.to_vec(),
            common_weight,
        }
    }

    pub fn common_weight(&self) -> f64 {
        self.common_weight
    }

    /// WSR from effective gains stored row-major (`eff[k * S + s] = h_k^T p_s`).
    pub fn wsr(&self, eff: &[f64], noise: &[f64]) -> f64 {
        let s_count = self.num_streams;
        let private_power = |k: usize| -> f64 {
            self.private_streams.iter().map(|&j| eff[k * s_count + j].powi(2)).sum()
        };
        let mut total = 0.0;
        let mut cap = f64::INFINITY;
        for k in 0..self.num_users {
            let priv_pow = private_power(k);
            if let Some(c) = self.common {
                let sig = eff[k * s_count + c].powi(2);
                cap = cap.min(rate(sig / (priv_pow + noise[k]).max(SINR_FLOOR)));
            }
            if let Some(p) = self.private[k] {
                let sig = eff[k * s_count + p].powi(2);
                let interference: f64 = self
                    .private_streams
                    .iter()
                    .filter(|&&j| j != p)
                    .map(|&j| eff[k * s_count + j].powi(2))
                    .sum();
                total += self.weights[k] * rate(sig / (interference + noise[k]).max(SINR_FLOOR));
            }
        }
        if self.common.is_some() {
            total += self.common_weight * cap;
        }
        total
    }
}

/// Unit-variance 4-PAM alphabet.
const PAM4: [f64; 4] = [-3.0, -1.0, 1.0, 3.0];
const PAM4_SCALE: f64 = 0.447_213_595_499_957_9; // 1 / sqrt(5)

/// Empirical SINR of `stream` at user `k`, from `num_symbols` transmitted symbol vectors.
///
/// Symbols are drawn from a unit-variance 4-PAM alphabet and noise from
/// `N(0, sigma_k^2)`. Interference is whatever remains at the SIC stage of
/// `stream`.
pub fn monte_carlo_sinr(
    channel: &ChannelMatrix,
    precoder: &Precoder,
    layout: &StreamLayout,
    k: usize,
    stream: usize,
    num_symbols: usize,
    seed: u64,
) -> Result<f64> {
    check_dims(channel, precoder, layout)?;
    if stream >= layout.num_streams() || k >= layout.num_users {
        return Err(Error::Config("user or stream index out of range".into()));
    }
    let eff = effective_gains(channel, precoder);
    let stage = layout.stage_streams(stream);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sigma = channel.noise[k].sqrt();
    let noise = Normal::new(0.0, sigma).map_err(|e| Error::Numerical(e.to_string()))?;

    let (mut signal_power, mut rest_power) = (0.0, 0.0);
    let mut symbols = vec![0.0; layout.num_streams()];
    for _ in 0..num_symbols {
        for s in symbols.iter_mut() {
            *s = PAM4[rng.random_range(0..4)] * PAM4_SCALE;
        }
        let signal = eff[(k, stream)] * symbols[stream];
        let rest: f64 = stage.iter().filter(|&&j| j != stream).map(|&j| eff[(k, j)] * symbols[j]).sum::<f64>()
            + noise.sample(&mut rng);
        signal_power += signal * signal;
        rest_power += rest * rest;
    }
    Ok(signal_power / rest_power.max(SINR_FLOOR))
}
