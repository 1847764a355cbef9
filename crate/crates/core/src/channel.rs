//! Indoor line-of-sight VLC channel model.
//!
//! DC gains follow the Lambertian emitter / non-imaging concentrator model:
//!
//! ```text
//! h = (A / d^2) * (m + 1) / (2 pi) * cos^m(tx) * T_s * g(rx) * cos(rx),   rx <= fov
//! ```
//!
//! A fixture of `Q` LEDs is treated as a single source whose gain is `Q` times
//! the gain of one LED at the fixture center. The exact per-LED sum over the
//! fixture grid is available through [`FixtureModel::PerLed`].

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Point or direction in the room frame (meters, origin at the floor center, z up).
pub type Vec3 = Vector3<f64>;

fn down() -> Vec3 {
    Vec3::new(0.0, 0.0, -1.0)
}

fn up() -> Vec3 {
    Vec3::new(0.0, 0.0, 1.0)
}

/// An LED luminaire made of `leds_per_fixture` identical emitters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fixture {
    pub position: Vec3,
    #[serde(default = "down")]
    pub orientation: Vec3,
    /// Half-power semi-angle, degrees.
    pub semi_angle_deg: f64,
    pub leds_per_fixture: u32,
    /// Electrical-to-optical conversion factor, W/A.
    #[serde(default = "one")]
    pub conversion_factor: f64,
    /// DC drive level.
    #[serde(default = "Fixture::default_dc_bias")]
    pub dc_bias: f64,
    /// Peak drive level.
    #[serde(default = "Fixture::default_max_drive")]
    pub max_drive: f64,
    /// Spacing between neighbouring LEDs of the fixture grid, meters.
    /// Only used by [`FixtureModel::PerLed`].
    #[serde(default = "Fixture::default_led_pitch")]
    pub led_pitch: f64,
}

fn one() -> f64 {
    1.0
}

impl Fixture {
    fn default_dc_bias() -> f64 {
        0.5
    }

    fn default_max_drive() -> f64 {
        1.0
    }

    fn default_led_pitch() -> f64 {
        0.01
    }

    /// Ceiling fixture facing straight down with the given device parameters.
    pub fn ceiling(position: Vec3, semi_angle_deg: f64, leds_per_fixture: u32) -> Self {
        Self {
            position,
            orientation: down(),
            semi_angle_deg,
            leds_per_fixture,
            conversion_factor: 1.0,
            dc_bias: Self::default_dc_bias(),
            max_drive: Self::default_max_drive(),
            led_pitch: Self::default_led_pitch(),
        }
    }

    pub fn lambertian_order(&self) -> Result<f64> {
        lambertian_order(self.semi_angle_deg)
    }

    /// Largest symmetric swing around the DC bias that keeps the LED in its dynamic range.
    pub fn drive_headroom(&self) -> f64 {
        self.dc_bias.min(self.max_drive - self.dc_bias)
    }

    pub fn validate(&self) -> Result<()> {
        check_finite(&self.position, "fixture position")?;
        check_unit(&self.orientation, "fixture orientation")?;
        if !(self.semi_angle_deg > 0.0 && self.semi_angle_deg < 90.0) {
            return Err(Error::Config(format!(
                "fixture semi-angle must lie in (0, 90) degrees, got {}",
                self.semi_angle_deg
            )));
        }
        if self.leds_per_fixture == 0 {
            return Err(Error::Config("fixture must contain at least one LED".into()));
        }
        if !(self.conversion_factor > 0.0) {
            return Err(Error::Config("conversion factor must be positive".into()));
        }
        if !(self.dc_bias > 0.0 && self.dc_bias < self.max_drive) {
            return Err(Error::Config(format!(
                "DC bias must satisfy 0 < d_DC < P_max (got d_DC={}, P_max={})",
                self.dc_bias, self.max_drive
            )));
        }
        if !(self.led_pitch >= 0.0) {
            return Err(Error::Config("LED pitch must be nonnegative".into()));
        }
        Ok(())
    }
}

/// A single-photodiode receiver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Receiver {
    pub position: Vec3,
    #[serde(default = "up")]
    pub normal: Vec3,
    /// Detector area, m^2.
    pub area: f64,
    /// Field of view, degrees.
    pub fov_deg: f64,
    pub refractive_index: f64,
    #[serde(default = "one")]
    pub filter_gain: f64,
    /// Responsivity, A/W.
    #[serde(default = "one")]
    pub responsivity: f64,
    /// Noise variance used in unit-noise mode is always 1; this is the
    /// fixed value used when the receiver is evaluated in isolation.
    #[serde(default = "one")]
    pub noise_variance: f64,
}

impl Receiver {
    /// Upward-facing photodiode with the given optics.
    pub fn upward(position: Vec3, area: f64, fov_deg: f64, refractive_index: f64) -> Self {
        Self {
            position,
            normal: up(),
            area,
            fov_deg,
            refractive_index,
            filter_gain: 1.0,
            responsivity: 1.0,
            noise_variance: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_finite(&self.position, "receiver position")?;
        check_unit(&self.normal, "receiver normal")?;
        if !(self.area > 0.0) {
            return Err(Error::Config(format!("receiver area must be positive, got {}", self.area)));
        }
        if !(self.fov_deg > 0.0 && self.fov_deg <= 90.0) {
            return Err(Error::Config(format!(
                "receiver field of view must lie in (0, 90] degrees, got {}",
                self.fov_deg
            )));
        }
        if !(self.refractive_index >= 1.0) {
            return Err(Error::Config("refractive index must be at least 1".into()));
        }
        if !(self.filter_gain > 0.0 && self.filter_gain <= 1.0) {
            return Err(Error::Config("optical filter gain must lie in (0, 1]".into()));
        }
        if !(self.responsivity > 0.0) {
            return Err(Error::Config("responsivity must be positive".into()));
        }
        if !(self.noise_variance > 0.0) {
            return Err(Error::Config("noise variance must be positive".into()));
        }
        Ok(())
    }
}

fn check_finite(v: &Vec3, what: &str) -> Result<()> {
    if v.iter().all(|c| c.is_finite()) {
        Ok(())
    } else {
        Err(Error::Config(format!("{what} has non-finite components")))
    }
}

fn check_unit(v: &Vec3, what: &str) -> Result<()> {
    check_finite(v, what)?;
    if (v.norm() - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!("{what} must have unit norm, got norm {}", v.norm())));
    }
    Ok(())
}

/// Receiver front-end constants for shot and thermal noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseParams {
    /// Electronic charge, C.
    pub electronic_charge: f64,
    /// Receiver bandwidth, Hz.
    pub bandwidth: f64,
    /// Background current, A.
    pub background_current: f64,
    /// Noise bandwidth factor I_2.
    pub noise_bw_factor: f64,
    /// Boltzmann constant, J/K.
    pub boltzmann: f64,
    /// Absolute temperature, K.
    pub temperature: f64,
    /// Open-loop voltage gain.
    pub open_loop_gain: f64,
    /// Fixed capacitance per unit area, F/m^2.
    pub capacitance_per_area: f64,
    /// FET channel noise factor.
    pub fet_noise_factor: f64,
    /// FET transconductance, S.
    pub fet_transconductance: f64,
    /// Noise bandwidth factor I_3.
    pub i3: f64,
}

impl NoiseParams {
    pub const I3: f64 = 0.0868;

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.electronic_charge,
            self.bandwidth,
            self.background_current,
            self.noise_bw_factor,
            self.boltzmann,
            self.temperature,
            self.open_loop_gain,
            self.capacitance_per_area,
            self.fet_noise_factor,
            self.fet_transconductance,
        ];
        if all.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::Config("noise parameters must be finite and strictly positive".into()));
        }
        if self.i3 != Self::I3 {
            return Err(Error::Config(format!("I_3 is fixed to {}", Self::I3)));
        }
        Ok(())
    }
}

impl Default for NoiseParams {
    fn default() -> Self {
        Self {
            electronic_charge: 1.6e-19,
            bandwidth: 1e6,
            background_current: 1e-4,
            noise_bw_factor: 0.562,
            boltzmann: 1.38e-23,
            temperature: 295.0,
            open_loop_gain: 10.0,
            capacitance_per_area: 1.12e-6,
            fet_noise_factor: 1.5,
            fet_transconductance: 0.03,
            i3: Self::I3,
        }
    }
}

/// How per-user noise variances are assigned when building a channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseMode {
    /// Unit noise power at every receiver.
    #[default]
    Unit,
    /// Shot plus thermal noise evaluated from [`NoiseParams`] at the DC operating point.
    Physical,
}

impl std::str::FromStr for NoiseMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "unit" => Ok(Self::Unit),
            "physical" => Ok(Self::Physical),
            other => Err(Error::Config(format!("unknown noise mode `{other}` (expected unit|physical)"))),
        }
    }
}

/// Fixture gain evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FixtureModel {
    /// `Q` times the gain of one LED at the fixture center.
    #[default]
    CenterPoint,
    /// Sum over every LED of a square grid centred on the fixture.
    PerLed,
}

/// K x L matrix of DC gains plus per-user noise variances.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMatrix {
    pub gains: DMatrix<f64>,
    pub noise: DVector<f64>,
}

impl ChannelMatrix {
    pub fn new(gains: DMatrix<f64>, noise: DVector<f64>) -> Result<Self> {
        if gains.nrows() == 0 || gains.ncols() == 0 {
            return Err(Error::Config("channel matrix must be non-empty".into()));
        }
        if gains.nrows() != noise.len() {
            return Err(Error::Config(format!(
                "channel has {} users but {} noise entries",
                gains.nrows(),
                noise.len()
            )));
        }
        if gains.iter().any(|g| !(*g >= 0.0 && g.is_finite())) {
            return Err(Error::Config("channel gains must be finite and nonnegative".into()));
        }
        if noise.iter().any(|n| !(*n > 0.0 && n.is_finite())) {
            return Err(Error::Config("noise variances must be finite and positive".into()));
        }
        Ok(Self { gains, noise })
    }

    /// Builds a channel from row slices; convenient for small hand-written instances.
    pub fn from_rows(rows: &[&[f64]], noise: &[f64]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Config("ragged channel rows".into()));
        }
        let gains = DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]);
        Self::new(gains, DVector::from_column_slice(noise))
    }

    pub fn num_users(&self) -> usize {
        self.gains.nrows()
    }

    pub fn num_leds(&self) -> usize {
        self.gains.ncols()
    }

    /// Inner product of user `k`'s channel row with a precoding column.
    #[inline]
    pub fn project(&self, k: usize, column: &[f64]) -> f64 {
        column.iter().enumerate().map(|(l, p)| self.gains[(k, l)] * p).sum()
    }

    pub fn row_norm(&self, k: usize) -> f64 {
        self.gains.row(k).norm()
    }
}

/// Lambertian order from the half-power semi-angle (degrees).
pub fn lambertian_order(semi_angle_deg: f64) -> Result<f64> {
    if !(semi_angle_deg > 0.0 && semi_angle_deg < 90.0) {
        return Err(Error::Domain(format!(
            "half-power semi-angle must lie in (0, 90) degrees, got {semi_angle_deg}"
        )));
    }
    Ok(-std::f64::consts::LN_2 / cos_deg(semi_angle_deg).ln())
}

/// Cosine of an angle in degrees, exact at multiples of 60 and 90 degrees.
pub fn cos_deg(deg: f64) -> f64 {
    let r = deg.rem_euclid(360.0);
    match r {
        0.0 => 1.0,
        60.0 | 300.0 => 0.5,
        90.0 | 270.0 => 0.0,
        120.0 | 240.0 => -0.5,
        180.0 => -1.0,
        _ => r.to_radians().cos(),
    }
}

/// Lambertian radiant intensity at `tx_angle` radians off the LED axis.
pub fn radiant_intensity(m: f64, tx_angle: f64) -> f64 {
    if !(0.0..=PI / 2.0).contains(&tx_angle) {
        return 0.0;
    }
    (m + 1.0) / (2.0 * PI) * tx_angle.cos().max(0.0).powf(m)
}

/// Optical concentrator gain for an incidence angle of `rx_angle` radians.
pub fn concentrator_gain(refractive_index: f64, fov_deg: f64, rx_angle: f64) -> f64 {
    let fov = fov_deg.to_radians();
    if (0.0..=fov).contains(&rx_angle) {
        let c = cos_deg(fov_deg);
        refractive_index * refractive_index / (1.0 - c * c)
    } else {
        0.0
    }
}

fn angle_between(a: &Vec3, b: &Vec3) -> f64 {
    (a.dot(b) / (a.norm() * b.norm())).clamp(-1.0, 1.0).acos()
}

/// DC gain of a single LED towards a receiver.
pub fn los_gain(led_position: &Vec3, led_orientation: &Vec3, m: f64, rx: &Receiver) -> Result<f64> {
    let ray = rx.position - led_position;
    let d2 = ray.norm_squared();
    if !(d2 > 0.0) {
        return Err(Error::Domain("LED and receiver positions coincide".into()));
    }
    let tx_angle = angle_between(led_orientation, &ray);
    let rx_angle = angle_between(&rx.normal, &(-ray));
    let fov = rx.fov_deg.to_radians();
    if rx_angle > fov || tx_angle > PI / 2.0 {
        return Ok(0.0);
    }
    let gain = rx.area / d2
        * radiant_intensity(m, tx_angle)
        * rx.filter_gain
        * concentrator_gain(rx.refractive_index, rx.fov_deg, rx_angle)
        * rx_angle.cos();
    Ok(gain.max(0.0))
}

/// Gain of a whole fixture towards a receiver.
pub fn fixture_gain(fixture: &Fixture, rx: &Receiver) -> Result<f64> {
    fixture_gain_with(fixture, rx, FixtureModel::CenterPoint)
}

pub fn fixture_gain_with(fixture: &Fixture, rx: &Receiver, model: FixtureModel) -> Result<f64> {
    let m = fixture.lambertian_order()?;
    match model {
        FixtureModel::CenterPoint => {
            Ok(f64::from(fixture.leds_per_fixture) * los_gain(&fixture.position, &fixture.orientation, m, rx)?)
        }
        FixtureModel::PerLed => {
            let (u, v) = plane_basis(&fixture.orientation);
            let q = fixture.leds_per_fixture as usize;
            let side = (q as f64).sqrt().ceil() as usize;
            let offset = (side as f64 - 1.0) / 2.0;
            let mut total = 0.0;
            for i in 0..q {
                let (r, c) = (i / side, i % side);
                let pos = fixture.position
                    + u * ((c as f64 - offset) * fixture.led_pitch)
                    + v * ((r as f64 - offset) * fixture.led_pitch);
                total += los_gain(&pos, &fixture.orientation, m, rx)?;
            }
            Ok(total)
        }
    }
}

/// Two orthonormal vectors spanning the plane normal to `n`.
fn plane_basis(n: &Vec3) -> (Vec3, Vec3) {
    let helper = if n.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
    let u = n.cross(&helper).normalize();
    let v = n.cross(&u);
    (u, v)
}

/// Shot-noise variance for a received optical power `received_signal` (W).
pub fn shot_noise_variance(params: &NoiseParams, responsivity: f64, received_signal: f64) -> f64 {
    2.0 * params.electronic_charge
        * params.bandwidth
        * (responsivity * received_signal + params.background_current * params.noise_bw_factor)
}

/// Thermal-noise variance of the transimpedance front end for a detector of `area` m^2.
pub fn thermal_noise_variance(params: &NoiseParams, area: f64) -> f64 {
    let p = params;
    let b = p.bandwidth;
    let feedback = 8.0 * PI * p.boltzmann * p.temperature / p.open_loop_gain
        * p.capacitance_per_area
        * area
        * p.noise_bw_factor
        * b
        * b;
    let fet = 16.0 * PI * PI * p.boltzmann * p.temperature * p.fet_noise_factor / p.fet_transconductance
        * p.capacitance_per_area
        * p.capacitance_per_area
        * area
        * area
        * p.i3
        * b
        * b
        * b;
    feedback + fet
}

pub fn noise_variance(params: &NoiseParams, responsivity: f64, received_signal: f64, area: f64) -> f64 {
    shot_noise_variance(params, responsivity, received_signal) + thermal_noise_variance(params, area)
}

/// Assembles the K x L channel for `users` served by `fixtures`.
pub fn build_channel(
    fixtures: &[Fixture],
    users: &[Receiver],
    noise_mode: NoiseMode,
    noise_params: &NoiseParams,
    model: FixtureModel,
) -> Result<ChannelMatrix> {
    if fixtures.is_empty() {
        return Err(Error::Config("scene has no fixtures".into()));
    }
    if users.is_empty() {
        return Err(Error::Config("scene has no users".into()));
    }
    fixtures.iter().try_for_each(Fixture::validate)?;
    users.iter().try_for_each(Receiver::validate)?;

    let mut gains = DMatrix::zeros(users.len(), fixtures.len());
    for (k, rx) in users.iter().enumerate() {
        for (j, fx) in fixtures.iter().enumerate() {
            gains[(k, j)] = fixture_gain_with(fx, rx, model)?;
        }
    }
    let noise = match noise_mode {
        NoiseMode::Unit => DVector::from_element(users.len(), 1.0),
        NoiseMode::Physical => {
            noise_params.validate()?;
            DVector::from_fn(users.len(), |k, _| {
                let rx = &users[k];
                // Optical power at the detector from the DC operating point of every fixture.
                let received: f64 = fixtures
                    .iter()
                    .enumerate()
                    .map(|(j, fx)| fx.conversion_factor * gains[(k, j)] * fx.dc_bias)
                    .sum();
                noise_variance(noise_params, rx.responsivity, received, rx.area)
            })
        }
    };
    ChannelMatrix::new(gains, noise)
}
