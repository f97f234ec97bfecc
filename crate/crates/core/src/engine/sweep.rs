//! Monte-Carlo BER over an Eb/N0 grid.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::SystemConfig;
use super::packet::{run_packet, PacketResult};
use crate::error::{Error, Result};

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "COOPSIM_THREADS";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BerPoint {
    pub ebn0_db: f64,
    pub ber: f64,
    pub bit_errors: u64,
    pub bits: u64,
    pub packets: u64,
    /// Mean number of forwarding relays per packet.
    pub mean_reliable: f64,
}

impl BerPoint {
    /// Binomial standard error of the BER estimate.
    pub fn std_error(&self) -> f64 {
        (self.ber * (1.0 - self.ber) / self.bits as f64).sqrt()
    }
}

pub const CSV_HEADER: &str = "ebn0_db,ber,bits,packets,mode,scheme,n_r";

/// CSV rows (with header) for one curve.
pub fn write_csv<W: Write>(mut out: W, cfg: &SystemConfig, points: &[BerPoint]) -> std::io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for p in points {
        writeln!(
            out,
            "{},{:.6e},{},{},{},{},{}",
            p.ebn0_db,
            p.ber,
            p.bits,
            p.packets,
            cfg.mode_label(),
            cfg.scheme.as_str(),
            cfg.n_relays
        )?;
    }
    Ok(())
}

fn thread_pool() -> Result<Option<rayon::ThreadPool>> {
    let Ok(v) = std::env::var(THREADS_ENV) else { return Ok(None) };
    let n: usize = v
        .trim()
        .parse()
        .map_err(|_| Error::InvalidConfig(format!("{THREADS_ENV} must be a positive integer, got `{v}`")))?;
    if n == 0 {
        return Err(Error::InvalidConfig(format!("{THREADS_ENV} must be at least 1")));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build()
        .map(Some)
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))
}

/// Runs `cfg.packets` packets at one noise level. Packets are independent,
/// so they run in parallel; totals are sums of counts and do not depend on
/// scheduling.
pub fn run_point(cfg: &SystemConfig, ebn0_db: f64) -> Result<BerPoint> {
    let mut cfg = cfg.clone();
    cfg.sigma2 = cfg.sigma2_at(ebn0_db);
    cfg.validate()?;
    let run = || -> Result<Vec<PacketResult>> { (0..cfg.packets).into_par_iter().map(|i| run_packet(&cfg, i)).collect() };
    let results = match thread_pool()? {
        Some(pool) => pool.install(run)?,
        None => run()?,
    };
    let bit_errors: u64 = results.iter().map(|r| r.bit_errors).sum();
    let bits: u64 = results.iter().map(|r| r.bits).sum();
    let reliable: usize = results.iter().map(|r| r.reliable_count).sum();
    Ok(BerPoint {
        ebn0_db,
        ber: bit_errors as f64 / bits as f64,
        bit_errors,
        bits,
        packets: cfg.packets,
        mean_reliable: reliable as f64 / cfg.packets as f64,
    })
}

/// BER at every Eb/N0 in ascending order. Every point reuses the same
/// packet streams (common random numbers across the grid).
pub fn sweep(cfg: &SystemConfig, ebn0_list: &[f64]) -> Result<Vec<BerPoint>> {
    if ebn0_list.is_empty() {
        return Err(Error::InvalidConfig("empty Eb/N0 list".into()));
    }
    let mut grid = ebn0_list.to_vec();
    grid.sort_by(f64::total_cmp);
    grid.into_iter().map(|e| run_point(cfg, e)).collect()
}
