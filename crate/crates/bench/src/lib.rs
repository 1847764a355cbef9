//! Shared fixtures for the criterion benchmarks.

use rsma_vlc::scenarios::{scenario, SweepPoint};
use rsma_vlc::{AoConfig, ChannelMatrix, ScenarioSpec};

/// Channel and AO configuration of a cataloged scenario at one SNR.
pub fn instance(name: &str, snr_db: f64) -> (ScenarioSpec, ChannelMatrix, AoConfig) {
    let mut spec = scenario(name).expect("cataloged scenario");
    spec.sweep = spec.sweep.with_snr(vec![snr_db]);
    let point: SweepPoint = spec.sweep.points().remove(0);
    let channel = spec.channel_at(&point).expect("valid geometry");
    let config = spec.ao_config(&point);
    (spec, channel, config)
}
