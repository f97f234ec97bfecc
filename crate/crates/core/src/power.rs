//! Power-allocation parameters and the two sum-power constraints.
//!
//! Group 1 holds the broadcast-phase parameters (`alpha_sd` and every
//! `alpha_sr`), group 2 the per-slot relay parameters of the reliable
//! relays. Each group's squared magnitudes must sum to `P_T`.

use serde::{Deserialize, Serialize};

use crate::engine::SystemConfig;
use crate::error::{Error, Result};
use crate::linalg::C64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerAllocation {
    /// `alpha_sd[j]`: source to destination, per symbol.
    pub alpha_sd: Vec<C64>,
    /// `alpha_sr[k][j]`: source to relay `k`, per symbol.
    pub alpha_sr: Vec<Vec<C64>>,
    /// `alpha_rd[k][t]`: relay `k` to destination, per codeword slot.
    pub alpha_rd: Vec<Vec<C64>>,
    pub total_power: f64,
}

impl PowerAllocation {
    /// Equal split of `total_power` inside each group, assuming every relay
    /// is reliable.
    pub fn equal(n: usize, n_relays: usize, slots: usize, total_power: f64) -> Self {
        let g1 = (total_power / (n * (1 + n_relays)) as f64).sqrt();
        let g2 = if n_relays > 0 { (total_power / (n_relays * slots) as f64).sqrt() } else { 0.0 };
        Self {
            alpha_sd: vec![C64::new(g1, 0.0); n],
            alpha_sr: vec![vec![C64::new(g1, 0.0); n]; n_relays],
            alpha_rd: vec![vec![C64::new(g2, 0.0); slots]; n_relays],
            total_power,
        }
    }

    pub fn n_relays(&self) -> usize {
        self.alpha_sr.len()
    }

    pub fn group1(&self) -> Vec<C64> {
        let mut v = self.alpha_sd.clone();
        for row in &self.alpha_sr {
            v.extend_from_slice(row);
        }
        v
    }

    pub fn set_group1(&mut self, v: &[C64]) {
        let n = self.alpha_sd.len();
        assert_eq!(v.len(), n * (1 + self.alpha_sr.len()));
        self.alpha_sd.copy_from_slice(&v[..n]);
        for (k, row) in self.alpha_sr.iter_mut().enumerate() {
            row.copy_from_slice(&v[n * (k + 1)..n * (k + 2)]);
        }
    }

    pub fn group2(&self, relays: &[usize]) -> Vec<C64> {
        relays.iter().flat_map(|&k| self.alpha_rd[k].iter().copied()).collect()
    }

    pub fn set_group2(&mut self, relays: &[usize], v: &[C64]) {
        let t = self.alpha_rd.first().map_or(0, Vec::len);
        assert_eq!(v.len(), t * relays.len());
        for (q, &k) in relays.iter().enumerate() {
            self.alpha_rd[k].copy_from_slice(&v[q * t..(q + 1) * t]);
        }
    }

    /// Squared-magnitude sums of the two constraint groups.
    pub fn constraint_sums(&self, relays: &[usize]) -> (f64, f64) {
        let s1 = self.group1().iter().map(|a| a.norm_sqr()).sum();
        let s2 = self.group2(relays).iter().map(|a| a.norm_sqr()).sum();
        (s1, s2)
    }

    pub fn max_abs(&self) -> f64 {
        self.group1()
            .iter()
            .chain(self.alpha_rd.iter().flatten())
            .map(|a| a.norm())
            .fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.group1().iter().chain(self.alpha_rd.iter().flatten()).all(|a| a.re.is_finite() && a.im.is_finite())
    }
}

pub fn equal_power(cfg: &SystemConfig) -> PowerAllocation {
    PowerAllocation::equal(cfg.n_antennas, cfg.n_relays, cfg.slots, cfg.total_power)
}

fn rescale(v: &mut [C64], target: f64, name: &'static str) -> Result<()> {
    let s: f64 = v.iter().map(|a| a.norm_sqr()).sum();
    if !(s > 0.0) || !s.is_finite() {
        return Err(Error::DegenerateGroup(name));
    }
    let k = (target / s).sqrt();
    v.iter_mut().for_each(|a| *a *= k);
    Ok(())
}

/// Scales each constraint group by the positive factor that puts its sum of
/// squared magnitudes at `P_T`. Group 2 covers only `reliable`; it is left
/// alone when no relay is reliable.
pub fn project(p: &PowerAllocation, reliable: &[usize]) -> Result<PowerAllocation> {
    let mut out = p.clone();
    let mut g1 = out.group1();
    rescale(&mut g1, p.total_power, "broadcast")?;
    out.set_group1(&g1);
    if !reliable.is_empty() {
        let mut g2 = out.group2(reliable);
        rescale(&mut g2, p.total_power, "relay")?;
        out.set_group2(reliable, &g2);
    }
    Ok(out)
}
