use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use clap::ValueEnum;
use rsma_vlc::{ChannelMatrix, SweepResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

/// Writes `bytes` to a temporary file next to `path` and renames it into place,
/// so `path` only ever holds a complete file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

pub fn summary(result: &SweepResult) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "scenario {}", result.scenario);
    let _ = writeln!(
        s,
        "{:<6} {:<22} {:>8} {:>10} {:>9} {:>9} {:>9} {:>6}  conv",
        "scheme", "sweep", "value", "wsr", "r1", "r2", "r_common", "iters"
    );
    for row in &result.rows {
        match row.result() {
            Some(r) => {
                let rate = |k: usize| r.rates.get(k).map(|v| format!("{v:.4}")).unwrap_or_default();
                let _ = writeln!(
                    s,
                    "{:<6} {:<22} {:>8} {:>10.4} {:>9} {:>9} {:>9.4} {:>6}  {}",
                    row.scheme.as_str(),
                    row.sweep_name,
                    row.sweep_value,
                    r.wsr,
                    rate(0),
                    rate(1),
                    r.common_cap,
                    r.iterations,
                    if r.converged { "yes" } else { "no" }
                );
            }
            None => {
                let _ = writeln!(s, "{:<6} {:<22} {:>8} failed", row.scheme.as_str(), row.sweep_name, row.sweep_value);
            }
        }
    }
    s
}

pub fn channel_table(ch: &ChannelMatrix) -> String {
    let mut s = String::from("user");
    for l in 0..ch.num_leds() {
        let _ = write!(s, ",led{}", l + 1);
    }
    s.push_str(",noise_variance\n");
    for k in 0..ch.num_users() {
        let _ = write!(s, "{}", k + 1);
        for l in 0..ch.num_leds() {
            let _ = write!(s, ",{}", ch.gains[(k, l)]);
        }
        let _ = writeln!(s, ",{}", ch.noise[k]);
    }
    s
}
