//! Declarative scenario catalog and the sweep runner.
//!
//! A [`ScenarioSpec`] describes a room, its ceiling fixtures, the users, the
//! schemes to compare and a sweep (SNR points, or user separation at a few SNR
//! points). [`run_sweep`] solves every (scheme, sweep point) pair, in parallel,
//! and returns the rows in a fixed order.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{build_channel, fixture_gain_with, ChannelMatrix, Fixture, FixtureModel, NoiseMode, NoiseParams, Receiver, Vec3};
use crate::error::{Error, Result};
use crate::optimizer::{ao_solve, derive_seed, AoConfig, SnrMapping};
use crate::signal_model::{build_layout, Scheme};

/// Channel gain the SNR axis is referenced to in the cataloged scenarios.
///
/// Calibrated once against the absolute WSR levels of the default layouts.
pub const DEFAULT_REFERENCE_GAIN: f64 = 0.0116;

/// Names accepted by [`scenario`], in catalog order.
pub const CATALOG_NAMES: [&str; 6] = [
    "scenario1_4led",
    "scenario2_4led",
    "scenario3_4led",
    "scenario1_2led",
    "scenario2_2led",
    "separation_sweep_2led",
];

/// CSV header of [`SweepResult::write_csv`].
pub const CSV_HEADER: [&str; 10] = [
    "scheme",
    "sweep_name",
    "sweep_value",
    "wsr_bps_hz",
    "r1_bps_hz",
    "r2_bps_hz",
    "r_common_cap",
    "iterations",
    "converged",
    "seed",
];

const GEOMETRY_TOL: f64 = 1e-9;

/// Box-shaped room, origin at the floor center, z up.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Room {
    /// Extent along x, meters.
    pub length: f64,
    /// Extent along y, meters.
    pub width: f64,
    pub height: f64,
}

impl Room {
    pub fn contains(&self, p: &Vec3) -> bool {
        p.x.abs() <= self.length / 2.0 + GEOMETRY_TOL
            && p.y.abs() <= self.width / 2.0 + GEOMETRY_TOL
            && p.z >= -GEOMETRY_TOL
            && p.z <= self.height + GEOMETRY_TOL
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Sweep {
    Snr {
        snr_db: Vec<f64>,
    },
    /// Two users moved symmetrically along x about the midpoint of their
    /// configured positions; each separation is solved at every SNR.
    Separation {
        separations_m: Vec<f64>,
        snr_db: Vec<f64>,
    },
}

impl Default for Sweep {
    fn default() -> Self {
        Sweep::Snr { snr_db: default_snr_grid() }
    }
}

/// 0 to 40 dB in 5 dB steps.
pub fn default_snr_grid() -> Vec<f64> {
    (0..=8).map(|i| 5.0 * i as f64).collect()
}

/// One solve point of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    /// Position in the flattened sweep; feeds the per-point seed.
    pub index: usize,
    pub name: String,
    pub value: f64,
    pub snr_db: f64,
    pub separation_m: Option<f64>,
}

impl Sweep {
    pub fn points(&self) -> Vec<SweepPoint> {
        match self {
            Sweep::Snr { snr_db } => snr_db
                .iter()
                .enumerate()
                .map(|(index, &snr)| SweepPoint {
                    index,
                    name: "snr_db".into(),
                    value: snr,
                    snr_db: snr,
                    separation_m: None,
                })
                .collect(),
            Sweep::Separation { separations_m, snr_db } => snr_db
                .iter()
                .flat_map(|&snr| separations_m.iter().map(move |&d| (snr, d)))
                .enumerate()
                .map(|(index, (snr, d))| SweepPoint {
                    index,
                    name: format!("separation_m@{}dB", snr),
                    value: d,
                    snr_db: snr,
                    separation_m: Some(d),
                })
                .collect(),
        }
    }

    fn snr_values(&self) -> &[f64] {
        match self {
            Sweep::Snr { snr_db } | Sweep::Separation { snr_db, .. } => snr_db,
        }
    }

    /// Replaces the SNR points, keeping the sweep kind.
    pub fn with_snr(&self, snr: Vec<f64>) -> Sweep {
        match self {
            Sweep::Snr { .. } => Sweep::Snr { snr_db: snr },
            Sweep::Separation { separations_m, .. } => Sweep::Separation {
                separations_m: separations_m.clone(),
                snr_db: snr,
            },
        }
    }
}

/// AO settings a scenario may override; the SNR and seed come from the sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSettings {
    pub tolerance: f64,
    pub max_iterations: usize,
    pub restarts: usize,
    pub snr_mapping: SnrMapping,
}

impl Default for SolverSettings {
    fn default() -> Self {
        let ao = AoConfig::default();
        Self {
            tolerance: ao.tolerance,
            max_iterations: ao.max_iterations,
            restarts: ao.restarts,
            snr_mapping: SnrMapping {
                reference_gain: DEFAULT_REFERENCE_GAIN,
                drive_cap: None,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub room: Room,
    pub fixtures: Vec<Fixture>,
    pub users: Vec<Receiver>,
    /// Priority weights; empty means equal weights.
    #[serde(default)]
    pub priorities: Vec<f64>,
    #[serde(default = "all_schemes")]
    pub schemes: Vec<Scheme>,
    #[serde(default)]
    pub sweep: Sweep,
    #[serde(default)]
    pub noise_mode: NoiseMode,
    #[serde(default)]
    pub fixture_model: FixtureModel,
    #[serde(default)]
    pub noise_params: NoiseParams,
    #[serde(default)]
    pub solver: SolverSettings,
    #[serde(default)]
    pub seed: u64,
}

fn all_schemes() -> Vec<Scheme> {
    Scheme::ALL.to_vec()
}

impl ScenarioSpec {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let spec: ScenarioSpec = toml::from_str(text).map_err(|e| Error::Config(format!("invalid scenario file: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("cannot serialize scenario: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    /// Priority weights with the equal-weight default resolved.
    pub fn priorities(&self) -> Vec<f64> {
        if self.priorities.is_empty() {
            vec![1.0 / self.users.len() as f64; self.users.len()]
        } else {
            self.priorities.clone()
        }
    }

    /// User positions for a sweep point.
    pub fn user_positions(&self, point: &SweepPoint) -> Vec<Vec3> {
        match point.separation_m {
            None => self.users.iter().map(|u| u.position).collect(),
            Some(d) => {
                let mid = self.users.iter().map(|u| u.position).sum::<Vec3>() / self.users.len() as f64;
                let half = Vec3::new(d / 2.0, 0.0, 0.0);
                vec![mid - half, mid + half]
            }
        }
    }

    pub fn channel_at(&self, point: &SweepPoint) -> Result<ChannelMatrix> {
        let users: Vec<Receiver> = self
            .users
            .iter()
            .zip(self.user_positions(point))
            .map(|(u, position)| Receiver { position, ..u.clone() })
            .collect();
        build_channel(&self.fixtures, &users, self.noise_mode, &self.noise_params, self.fixture_model)
    }

    /// AO configuration for one sweep point.
    ///
    /// In physical noise mode the amplitude budget is capped by the fixtures'
    /// drive headroom unless a cap is configured explicitly.
    pub fn ao_config(&self, point: &SweepPoint) -> AoConfig {
        let mut mapping = self.solver.snr_mapping;
        if self.noise_mode == NoiseMode::Physical && mapping.drive_cap.is_none() {
            mapping.drive_cap = Some(self.fixtures.iter().map(Fixture::drive_headroom).fold(f64::INFINITY, f64::min));
        }
        AoConfig {
            tolerance: self.solver.tolerance,
            max_iterations: self.solver.max_iterations,
            restarts: self.solver.restarts,
            seed: derive_seed(self.seed, &[point.index as u64]),
            snr_db: point.snr_db,
            snr_mapping: mapping,
            ..AoConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(format!("scenario '{}': {msg}", self.name)));
        if self.name.trim().is_empty() {
            return Err(Error::Config("scenario name must not be empty".into()));
        }
        let r = &self.room;
        if !(r.length > 0.0 && r.width > 0.0 && r.height > 0.0) {
            return bad("room dimensions must be positive".into());
        }
        if self.fixtures.is_empty() {
            return bad("no fixtures".into());
        }
        if self.users.is_empty() {
            return bad("no users".into());
        }
        for (j, fx) in self.fixtures.iter().enumerate() {
            fx.validate()?;
            if !r.contains(&fx.position) {
                return bad(format!("fixture {} lies outside the room", j + 1));
            }
        }
        for u in &self.users {
            u.validate()?;
        }
        let priorities = self.priorities();
        if priorities.len() != self.users.len() || priorities.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
            return bad("priorities must be positive, one per user".into());
        }
        for (i, s) in self.schemes.iter().enumerate() {
            if self.schemes[..i].contains(s) {
                return bad(format!("scheme {s} listed twice"));
            }
        }
        if self.schemes.contains(&Scheme::Noma) && self.users.len() != 2 {
            return bad("NOMA is defined for exactly two users".into());
        }
        if self.sweep.snr_values().is_empty() {
            return bad("sweep has no SNR points".into());
        }
        if self.sweep.snr_values().iter().any(|v| !v.is_finite()) {
            return bad("SNR points must be finite".into());
        }
        if let Sweep::Separation { separations_m, .. } = &self.sweep {
            if self.users.len() != 2 {
                return bad("a separation sweep needs exactly two users".into());
            }
            if separations_m.is_empty() {
                return bad("sweep has no separation points".into());
            }
            if separations_m.iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
                return bad("separations must be finite and nonnegative".into());
            }
        }
        self.ao_config(&self.sweep.points()[0]).validate()?;
        self.check_geometry()
    }

    /// Every user, at every sweep geometry, is inside the room and receives
    /// light from at least one fixture.
    fn check_geometry(&self) -> Result<()> {
        let mut points = self.sweep.points();
        points.dedup_by(|a, b| a.separation_m == b.separation_m);
        for point in &points {
            for (k, pos) in self.user_positions(point).iter().enumerate() {
                let where_ = match point.separation_m {
                    Some(d) => format!(" at separation {d} m"),
                    None => String::new(),
                };
                if !self.room.contains(pos) {
                    return Err(Error::Config(format!(
                        "scenario '{}': user {} lies outside the room{where_}",
                        self.name,
                        k + 1
                    )));
                }
                let rx = Receiver { position: *pos, ..self.users[k].clone() };
                let mut lit = false;
                for fx in &self.fixtures {
                    if fixture_gain_with(fx, &rx, self.fixture_model)? > 0.0 {
                        lit = true;
                        break;
                    }
                }
                if !lit {
                    return Err(Error::Config(format!(
                        "scenario '{}': user {} sees no fixture{where_}",
                        self.name,
                        k + 1
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Results of one (scheme, sweep point) solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointResult {
    pub wsr: f64,
    /// Overall rate per user, bits/s/Hz.
    pub rates: Vec<f64>,
    pub common_cap: f64,
    pub common_shares: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub epsilon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Solved(PointResult),
    Failed { message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub scheme: Scheme,
    pub sweep_name: String,
    pub sweep_value: f64,
    pub snr_db: f64,
    pub seed: u64,
    pub outcome: Outcome,
}

impl SweepRow {
    pub fn result(&self) -> Option<&PointResult> {
        match &self.outcome {
            Outcome::Solved(r) => Some(r),
            Outcome::Failed { .. } => None,
        }
    }

    pub fn wsr(&self) -> Option<f64> {
        self.result().map(|r| r.wsr)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub scenario: String,
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| r.result().is_none()).count()
    }

    /// Rows of one scheme and sweep name, in sweep order.
    pub fn series<'a>(&'a self, scheme: Scheme, sweep_name: &'a str) -> impl Iterator<Item = &'a SweepRow> + 'a {
        self.rows.iter().filter(move |r| r.scheme == scheme && r.sweep_name == sweep_name)
    }

    pub fn find(&self, scheme: Scheme, sweep_name: &str, sweep_value: f64) -> Option<&SweepRow> {
        self.rows
            .iter()
            .find(|r| r.scheme == scheme && r.sweep_name == sweep_name && r.sweep_value == sweep_value)
    }

    /// Writes the fixed-header CSV. Floats use shortest round-trip formatting;
    /// failed rows leave the numeric columns empty.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let csv_err = |e: csv::Error| Error::Io(std::io::Error::other(e));
        w.write_record(CSV_HEADER).map_err(csv_err)?;
        for row in &self.rows {
            let mut rec = vec![row.scheme.as_str().to_string(), row.sweep_name.clone(), row.sweep_value.to_string()];
            match row.result() {
                Some(r) => {
                    if r.rates.len() > 2 {
                        return Err(Error::Unsupported(format!(
                            "CSV output has two per-user rate columns, scenario has {} users",
                            r.rates.len()
                        )));
                    }
                    let rate = |k: usize| r.rates.get(k).map(|v| v.to_string()).unwrap_or_default();
                    rec.extend([
                        r.wsr.to_string(),
                        rate(0),
                        rate(1),
                        r.common_cap.to_string(),
                        r.iterations.to_string(),
                        r.converged.to_string(),
                    ]);
                }
                None => rec.extend(["", "", "", "", "", "false"].map(String::from)),
            }
            rec.push(row.seed.to_string());
            w.write_record(&rec).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("CSV output is UTF-8"))
    }

    pub fn to_json_string(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Io(std::io::Error::other(e)))
    }
}

/// Runs every (scheme, sweep point) of `spec` on the global thread pool.
pub fn run_sweep(spec: &ScenarioSpec) -> Result<SweepResult> {
    run_sweep_with_workers(spec, None)
}

/// Like [`run_sweep`], on a dedicated pool of `workers` threads when given.
///
/// Each point owns its seed, so the rows do not depend on the worker count.
pub fn run_sweep_with_workers(spec: &ScenarioSpec, workers: Option<usize>) -> Result<SweepResult> {
    spec.validate()?;
    let points = spec.sweep.points();
    let jobs: Vec<(Scheme, &SweepPoint)> = spec.schemes.iter().flat_map(|&s| points.iter().map(move |p| (s, p))).collect();
    let priorities = spec.priorities();
    let solve = |&(scheme, point): &(Scheme, &SweepPoint)| -> SweepRow {
        let config = spec.ao_config(point);
        let outcome = spec
            .channel_at(point)
            .and_then(|ch| {
                let layout = build_layout(scheme, ch.num_users(), &ch)?;
                ao_solve(&ch, &layout, &priorities, &config)
            })
            .map(|sol| {
                Outcome::Solved(PointResult {
                    wsr: sol.report.wsr,
                    rates: sol.report.overall.clone(),
                    common_cap: sol.report.common_cap,
                    common_shares: sol.report.common_shares.clone(),
                    iterations: sol.iterations,
                    converged: sol.converged,
                    epsilon: sol.epsilon,
                })
            })
            .unwrap_or_else(|e| Outcome::Failed { message: e.to_string() });
        SweepRow {
            scheme,
            sweep_name: point.name.clone(),
            sweep_value: point.value,
            snr_db: point.snr_db,
            seed: config.seed,
            outcome,
        }
    };
    let rows = match workers {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
            pool.install(|| jobs.par_iter().map(solve).collect())
        }
        None => jobs.par_iter().map(solve).collect(),
    };
    Ok(SweepResult { scenario: spec.name.clone(), rows })
}

fn table_iv_fixture(x: f64, y: f64) -> Fixture {
    Fixture::ceiling(Vec3::new(x, y, 4.0), 60.0, 3600)
}

fn table_iv_user(x: f64, y: f64) -> Receiver {
    Receiver::upward(Vec3::new(x, y, 0.8), 1e-4, 60.0, 1.5)
}

fn base_spec(name: &str, description: &str, fixtures: Vec<Fixture>, users: Vec<Receiver>) -> ScenarioSpec {
    ScenarioSpec {
        name: name.into(),
        description: description.into(),
        room: Room { length: 5.0, width: 5.0, height: 4.0 },
        fixtures,
        users,
        priorities: vec![0.5, 0.5],
        schemes: all_schemes(),
        sweep: Sweep::default(),
        noise_mode: NoiseMode::Unit,
        fixture_model: FixtureModel::CenterPoint,
        noise_params: NoiseParams::default(),
        solver: SolverSettings::default(),
        seed: 0,
    }
}

fn four_leds() -> Vec<Fixture> {
    [(-1.25, -1.25), (-1.25, 1.25), (1.25, -1.25), (1.25, 1.25)]
        .into_iter()
        .map(|(x, y)| table_iv_fixture(x, y))
        .collect()
}

fn two_leds() -> Vec<Fixture> {
    vec![table_iv_fixture(-1.25, 0.0), table_iv_fixture(1.25, 0.0)]
}

fn mid_room_users() -> Vec<Receiver> {
    vec![table_iv_user(-1.5, 0.0), table_iv_user(1.5, 0.0)]
}

fn north_wall_users() -> Vec<Receiver> {
    vec![table_iv_user(-0.2, 2.0), table_iv_user(0.2, 2.0)]
}

/// Fresh copies of every cataloged scenario, in [`CATALOG_NAMES`] order.
pub fn catalog() -> Vec<ScenarioSpec> {
    CATALOG_NAMES.iter().map(|n| scenario(n).expect("cataloged name")).collect()
}

pub fn scenario(name: &str) -> Result<ScenarioSpec> {
    let spec = match name {
        "scenario1_4led" => base_spec(name, "users mid-room, 3 m apart, 4 LEDs", four_leds(), mid_room_users()),
        "scenario2_4led" => base_spec(name, "users near the north wall, 0.4 m apart, 4 LEDs", four_leds(), north_wall_users()),
        "scenario3_4led" => base_spec(
            name,
            "users near the north wall, 0.94 m apart, 4 LEDs",
            four_leds(),
            vec![table_iv_user(-0.74, 2.0), table_iv_user(0.2, 2.0)],
        ),
        "scenario1_2led" => base_spec(name, "users mid-room, 3 m apart, 2 LEDs", two_leds(), mid_room_users()),
        "scenario2_2led" => base_spec(name, "users near the north wall, 0.4 m apart, 2 LEDs", two_leds(), north_wall_users()),
        "separation_sweep_2led" => {
            let mut spec = base_spec(
                name,
                "users move from the room center towards opposite walls, 2 LEDs",
                two_leds(),
                vec![table_iv_user(0.0, 0.0), table_iv_user(0.0, 0.0)],
            );
            let mut separations: Vec<f64> = (1..=12).map(|i| (i as f64 * 0.4 * 10.0).round() / 10.0).collect();
            separations.push(5.0);
            spec.schemes = vec![Scheme::Rsma];
            spec.sweep = Sweep::Separation {
                separations_m: separations,
                snr_db: vec![20.0, 30.0, 40.0],
            };
            spec
        }
        _ => {
            return Err(Error::Config(format!(
                "unknown scenario '{name}'; valid names: {}",
                CATALOG_NAMES.join(", ")
            )))
        }
    };
    Ok(spec)
}
