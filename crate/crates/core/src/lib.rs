//! Multi-user MISO visible-light downlink simulator with rate-splitting (RSMA),
//! SDMA and NOMA precoder design under per-LED amplitude constraints.

pub mod channel;
pub mod error;
pub mod optimizer;
pub mod scenarios;
pub mod signal_model;

pub use channel::{build_channel, ChannelMatrix, Fixture, FixtureModel, NoiseMode, NoiseParams, Receiver, Vec3};
pub use error::{Error, Result};
pub use optimizer::{ao_from_start, ao_solve, ao_solve_with_budget, derive_seed, epsilon_from_snr, AoConfig, SnrMapping, Solution};
pub use scenarios::{catalog, run_sweep, run_sweep_with_workers, scenario, ScenarioSpec, Sweep, SweepResult, SweepRow};
pub use signal_model::{assemble_report, build_layout, Precoder, RateReport, Scheme, StreamLayout};
