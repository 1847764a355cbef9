//! `validate`: Monte-Carlo SINR agreement and grid-oracle cross-checks.

use std::process::ExitCode;

use clap::ValueEnum;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rsma_vlc::optimizer::grid_oracle;
use rsma_vlc::signal_model::{monte_carlo_sinr, sinr_common, sinr_private};
use rsma_vlc::{ao_solve_with_budget, build_layout, derive_seed, AoConfig, ChannelMatrix, Error, Precoder, Scheme};

use crate::{load_spec, ValidateArgs, EXIT_PARTIAL};

const MC_TOLERANCE: f64 = 0.02;
const ORACLE_TOLERANCE: f64 = 0.05;
const ORACLE_RESOLUTION: usize = 21;
/// Amplitude budget of the random instances (20 dB at unit noise and unit reference gain).
const CHECK_EPSILON: f64 = 10.0;

/// Defects that `--inject-fault` plants in the analytic side of the checks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Fault {
    /// Analytic SINR computed with half the true noise power.
    SinrNoise,
}

#[derive(Debug)]
enum Status {
    Pass,
    Fail,
    Skipped(String),
}

#[derive(Debug)]
struct Check {
    name: String,
    deviation: f64,
    tolerance: f64,
    status: Status,
}

impl Check {
    fn measured(name: String, deviation: f64, tolerance: f64) -> Self {
        let status = if deviation <= tolerance { Status::Pass } else { Status::Fail };
        Self { name, deviation, tolerance, status }
    }

    fn skipped(name: String, why: String) -> Self {
        Self { name, deviation: f64::NAN, tolerance: f64::NAN, status: Status::Skipped(why) }
    }
}

fn random_channel(rng: &mut ChaCha8Rng) -> ChannelMatrix {
    let gains = DMatrix::from_fn(2, 2, |_, _| rng.random_range(0.1..1.0));
    ChannelMatrix::new(gains, DVector::from_element(2, 1.0)).expect("valid random channel")
}

fn random_precoder(rng: &mut ChaCha8Rng, leds: usize, streams: usize, epsilon: f64) -> Precoder {
    let mut m = DMatrix::from_fn(leds, streams, |_, _| rng.random_range(-1.0..1.0));
    for mut row in m.row_iter_mut() {
        let l1 = row.abs().sum();
        row *= epsilon * rng.random_range(0.5..1.0) / l1;
    }
    Precoder::new(m)
}

/// Largest relative gap between analytic and simulated SINR over every decoded stream.
fn mc_check(
    channel: &ChannelMatrix,
    scheme: Scheme,
    epsilon: f64,
    precoder_seed: u64,
    symbols: usize,
    fault: Option<Fault>,
) -> Result<f64, Error> {
    let layout = build_layout(scheme, channel.num_users(), channel)?;
    let mut rng = ChaCha8Rng::seed_from_u64(precoder_seed);
    let precoder = random_precoder(&mut rng, channel.num_leds(), layout.num_streams(), epsilon);
    let analytic_channel = match fault {
        Some(Fault::SinrNoise) => ChannelMatrix::new(channel.gains.clone(), &channel.noise * 0.5)?,
        None => channel.clone(),
    };
    let mut worst: f64 = 0.0;
    for k in 0..layout.num_users {
        let mut decoded = Vec::new();
        if let Some(c) = layout.common_index() {
            decoded.push((c, sinr_common(&analytic_channel, &precoder, &layout, k)));
        }
        if let Some(p) = layout.private_index(k) {
            decoded.push((p, sinr_private(&analytic_channel, &precoder, &layout, k)));
        }
        for (stream, analytic) in decoded {
            let mc_seed = derive_seed(precoder_seed, &[k as u64, stream as u64]);
            let simulated = monte_carlo_sinr(channel, &precoder, &layout, k, stream, symbols, mc_seed)?;
            worst = worst.max((simulated - analytic).abs() / analytic);
        }
    }
    Ok(worst)
}

/// Shortfall of the AO below the grid optimum, relative to the grid optimum.
fn oracle_check(channel: &ChannelMatrix, scheme: Scheme, epsilon: f64, seed: u64) -> Result<f64, Error> {
    let layout = build_layout(scheme, channel.num_users(), channel)?;
    let priorities = vec![1.0 / channel.num_users() as f64; channel.num_users()];
    let oracle = grid_oracle(channel, &layout, &priorities, epsilon, ORACLE_RESOLUTION)?;
    let config = AoConfig { seed, ..AoConfig::default() };
    let ao = ao_solve_with_budget(channel, &layout, &priorities, epsilon, &config)?;
    Ok(if oracle > 0.0 { (oracle - ao.report.wsr) / oracle } else { 0.0 })
}

fn record(checks: &mut Vec<Check>, name: String, tolerance: f64, outcome: Result<f64, Error>) {
    match outcome {
        Ok(dev) => checks.push(Check::measured(name, dev, tolerance)),
        Err(Error::Unsupported(why)) => checks.push(Check::skipped(name, why)),
        Err(e) => {
            eprintln!("error in {name}: {e}");
            checks.push(Check { name, deviation: f64::NAN, tolerance, status: Status::Fail });
        }
    }
}

pub fn cmd_validate(args: ValidateArgs) -> Result<ExitCode, String> {
    let spec = match (&args.scenario, &args.scenario_file) {
        (None, None) => None,
        (name, file) => Some(load_spec(name.as_deref(), file.as_ref())?),
    };
    if args.seeds == 0 || args.instances == 0 || args.symbols == 0 {
        return Err("--seeds, --instances and --symbols must be positive".into());
    }

    let mut checks = Vec::new();
    for seed in args.seed..args.seed + args.seeds {
        for inst in 0..args.instances {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[inst as u64]));
            let channel = random_channel(&mut rng);
            for (tag, scheme) in Scheme::ALL.into_iter().enumerate() {
                let case_seed = derive_seed(seed, &[inst as u64, tag as u64]);
                record(
                    &mut checks,
                    format!("mc_sinr seed={seed} instance={inst} scheme={scheme}"),
                    MC_TOLERANCE,
                    mc_check(&channel, scheme, CHECK_EPSILON, case_seed, args.symbols, args.inject_fault),
                );
                record(
                    &mut checks,
                    format!("grid_oracle seed={seed} instance={inst} scheme={scheme}"),
                    ORACLE_TOLERANCE,
                    oracle_check(&channel, scheme, CHECK_EPSILON, case_seed),
                );
            }
        }
    }

    if let Some(spec) = &spec {
        let point = &spec.sweep.points()[0];
        let channel = spec.channel_at(point).map_err(|e| e.to_string())?;
        let epsilon = spec.ao_config(point).epsilon(&channel).map_err(|e| e.to_string())?;
        for (tag, scheme) in Scheme::ALL.into_iter().enumerate() {
            let case_seed = derive_seed(args.seed, &[u64::MAX, tag as u64]);
            record(
                &mut checks,
                format!("mc_sinr scenario={} scheme={scheme}", spec.name),
                MC_TOLERANCE,
                mc_check(&channel, scheme, epsilon, case_seed, args.symbols, args.inject_fault),
            );
            record(
                &mut checks,
                format!("grid_oracle scenario={} scheme={scheme}", spec.name),
                ORACLE_TOLERANCE,
                oracle_check(&channel, scheme, epsilon, case_seed),
            );
        }
    }

    let (mut passed, mut failed, mut skipped) = (0, 0, 0);
    for c in &checks {
        match &c.status {
            Status::Pass => {
                passed += 1;
                println!("PASS {:<52} deviation={:.3e} tol={}", c.name, c.deviation, c.tolerance);
            }
            Status::Fail => {
                failed += 1;
                println!("FAIL {:<52} deviation={:.3e} tol={}", c.name, c.deviation, c.tolerance);
            }
            Status::Skipped(why) => {
                skipped += 1;
                println!("SKIP {:<52} {why}", c.name);
                eprintln!("warning: skipped {}: {why}", c.name);
            }
        }
    }
    println!("{} checks: {passed} passed, {failed} failed, {skipped} skipped", checks.len());
    Ok(if failed > 0 { ExitCode::from(EXIT_PARTIAL) } else { ExitCode::SUCCESS })
}
