//! Exhaustive grid search over small precoders, used to cross-check the AO solver.

use crate::channel::ChannelMatrix;
use crate::error::{Error, Result};
use crate::signal_model::{RateEvaluator, StreamLayout};

pub const MAX_ORACLE_LEDS: usize = 2;
pub const MAX_ORACLE_STREAMS: usize = 3;
pub const MAX_ORACLE_RESOLUTION: usize = 21;

/// Best WSR over precoders whose entries lie on a uniform `resolution`-point grid
/// of `[-epsilon, epsilon]` with every LED row inside the L1 ball.
///
/// Flipping the sign of a whole precoder column leaves every SINR unchanged, so
/// the first LED row is restricted to nonnegative entries.
pub fn grid_oracle(
    channel: &ChannelMatrix,
    layout: &StreamLayout,
    priorities: &[f64],
    epsilon: f64,
    resolution: usize,
) -> Result<f64> {
    let leds = channel.num_leds();
    let streams = layout.num_streams();
    if leds > MAX_ORACLE_LEDS || streams > MAX_ORACLE_STREAMS || resolution > MAX_ORACLE_RESOLUTION {
        return Err(Error::Unsupported(format!(
            "grid oracle limited to {MAX_ORACLE_LEDS} LEDs, {MAX_ORACLE_STREAMS} streams and \
             {MAX_ORACLE_RESOLUTION} points per dimension (got {leds}, {streams}, {resolution})"
        )));
    }
    if resolution < 2 {
        return Err(Error::Config("grid resolution must be at least 2".into()));
    }
    if epsilon <= 0.0 {
        return Ok(0.0);
    }
    let step = 2.0 * epsilon / (resolution - 1) as f64;
    let levels: Vec<f64> = (0..resolution).map(|i| -epsilon + i as f64 * step).collect();
    let limit = epsilon * (1.0 + 1e-12);

    let mut all_rows = Vec::new();
    enumerate_rows(&levels, streams, limit, &mut vec![0.0; streams], 0, &mut all_rows);
    let first_rows: Vec<Vec<f64>> = all_rows.iter().filter(|r| r.iter().all(|v| *v >= 0.0)).cloned().collect();

    let users = channel.num_users();
    let noise: Vec<f64> = channel.noise.iter().copied().collect();
    let evaluator = RateEvaluator::new(layout, priorities);

    // Contribution of LED `l` with row `row` to the effective gains (row-major K x S).
    let contribution = |l: usize, row: &[f64]| -> Vec<f64> {
        let mut c = vec![0.0; users * streams];
        for k in 0..users {
            for (s, v) in row.iter().enumerate() {
                c[k * streams + s] = channel.gains[(k, l)] * v;
            }
        }
        c
    };

    let first: Vec<Vec<f64>> = first_rows.iter().map(|r| contribution(0, r)).collect();
    let mut best = 0.0f64;
    if leds == 1 {
        for c in &first {
            best = best.max(evaluator.wsr(c, &noise));
        }
        return Ok(best);
    }
    let second: Vec<Vec<f64>> = all_rows.iter().map(|r| contribution(1, r)).collect();
    let mut eff = vec![0.0; users * streams];
    for a in &first {
        for b in &second {
            for i in 0..eff.len() {
                eff[i] = a[i] + b[i];
            }
            best = best.max(evaluator.wsr(&eff, &noise));
        }
    }
    Ok(best)
}

fn enumerate_rows(levels: &[f64], len: usize, limit: f64, current: &mut Vec<f64>, depth: usize, out: &mut Vec<Vec<f64>>) {
    let used: f64 = current[..depth].iter().map(|v| v.abs()).sum();
    if depth == len {
        out.push(current.clone());
        return;
    }
    for &v in levels {
        if used + v.abs() <= limit {
            current[depth] = v;
            enumerate_rows(levels, len, limit, current, depth + 1, out);
        }
    }
}
