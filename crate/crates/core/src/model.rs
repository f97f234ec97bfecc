//! Linear description of the stacked destination vector.
//!
//! Every quantity the destination sees is a linear map of the independent
//! random sources
//!
//! ```text
//! xi = [ s (N) | n_sd (N) | n_sr_1 .. n_sr_nr (N each) | n_rd_l for active l (N*T each) ]
//! ```
//!
//! so `r = Phi xi` for a source map `Phi` that depends on the channels, the
//! power parameters, the active relay set and (for soft forwarding) the relay
//! filters. Closed-form filters, MSE values and block-coordinate power
//! updates are all computed from `Phi` and the source covariance.

use crate::dstc::{build_effective_d, CodeScheme, EffectiveBlocks};
use crate::error::Result;
use crate::fading::ChannelSet;
use crate::linalg::{CMat, C64, ONE, ZERO};
use crate::power::PowerAllocation;

/// Channel knowledge used by a receiver: true channels or estimates.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelKnowledge {
    pub h: CMat,
    pub f: Vec<CMat>,
    /// Effective blocks for every relay (not only the active ones).
    pub d: Vec<EffectiveBlocks>,
}

impl ChannelKnowledge {
    pub fn genie(channels: &ChannelSet, schemes: &[CodeScheme]) -> Result<Self> {
        let d = channels
            .g
            .iter()
            .zip(schemes)
            .map(|(g, scheme)| build_effective_d(scheme, g))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { h: channels.h.clone(), f: channels.f.clone(), d })
    }

    pub fn n(&self) -> usize {
        self.h.rows()
    }

    pub fn n_relays(&self) -> usize {
        self.f.len()
    }

    pub fn slots(&self) -> usize {
        self.d.first().map_or(CodeScheme::T, EffectiveBlocks::n_slots)
    }
}

/// How active relays forward in the model.
#[derive(Clone, Copy, Debug)]
pub enum Forwarding<'a> {
    /// Relays forward the transmitted symbols exactly (reliable DF).
    Hard,
    /// Relays forward their filter outputs `w_{k,j}^H r_sr_k`; `filters[k][j]`.
    Soft(&'a [Vec<CMat>]),
}

/// Offsets of the source blocks inside `xi`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SourceLayout {
    pub n: usize,
    pub slots: usize,
    pub n_relays: usize,
    pub active: usize,
}

impl SourceLayout {
    pub fn symbols(&self) -> usize {
        0
    }
    pub fn noise_sd(&self) -> usize {
        self.n
    }
    pub fn noise_sr(&self, k: usize) -> usize {
        2 * self.n + k * self.n
    }
    pub fn noise_rd(&self, q: usize) -> usize {
        2 * self.n + self.n_relays * self.n + q * self.n * self.slots
    }
    pub fn len(&self) -> usize {
        self.noise_rd(self.active)
    }
    pub fn is_empty(&self) -> bool {
        false
    }
    /// Stacked destination dimension `N + L*N*T`.
    pub fn dim(&self) -> usize {
        self.n + self.active * self.n * self.slots
    }
}

pub struct LinkModel<'a> {
    pub csi: &'a ChannelKnowledge,
    /// Active (reliable) relays, in stacking order.
    pub relays: &'a [usize],
    pub sigma2: f64,
    pub forwarding: Forwarding<'a>,
}

impl<'a> LinkModel<'a> {
    pub fn layout(&self) -> SourceLayout {
        SourceLayout {
            n: self.csi.n(),
            slots: self.csi.slots(),
            n_relays: self.csi.n_relays(),
            active: self.relays.len(),
        }
    }

    pub fn dim(&self) -> usize {
        self.layout().dim()
    }

    /// Diagonal of the analytic source covariance (unit-energy symbols,
    /// noise variance `sigma2`).
    pub fn source_variances(&self) -> Vec<f64> {
        let lay = self.layout();
        (0..lay.len()).map(|i| if i < lay.n { 1.0 } else { self.sigma2 }).collect()
    }

    pub fn source_covariance(&self) -> CMat {
        let v = self.source_variances();
        let mut m = CMat::zeros(v.len(), v.len());
        for (i, x) in v.iter().enumerate() {
            m[(i, i)] = C64::new(*x, 0.0);
        }
        m
    }

    /// Source map `Phi` with `r = Phi xi`.
    pub fn source_map(&self, p: &PowerAllocation) -> CMat {
        let lay = self.layout();
        let (n, t) = (lay.n, lay.slots);
        let mut phi = CMat::zeros(lay.dim(), lay.len());

        for i in 0..n {
            for k in 0..n {
                phi[(i, k)] = self.csi.h[(i, k)] * p.alpha_sd[k];
            }
            phi[(i, lay.noise_sd() + i)] = ONE;
        }

        for (q, &l) in self.relays.iter().enumerate() {
            let base = n + q * n * t;
            // coef[j][src]: relay l's forwarded symbol j as a function of the sources
            let coef: Vec<Vec<(usize, C64)>> = match self.forwarding {
                Forwarding::Hard => (0..n).map(|j| vec![(lay.symbols() + j, ONE)]).collect(),
                Forwarding::Soft(filters) => (0..n)
                    .map(|j| {
                        let w = &filters[l][j];
                        let f = &self.csi.f[l];
                        let mut row = Vec::with_capacity(2 * n);
                        for k in 0..n {
                            let mut g = ZERO;
                            for a in 0..n {
                                g += w[(a, 0)].conj() * f[(a, k)];
                            }
                            row.push((lay.symbols() + k, g * p.alpha_sr[l][k]));
                        }
                        for a in 0..n {
                            row.push((lay.noise_sr(l) + a, w[(a, 0)].conj()));
                        }
                        row
                    })
                    .collect(),
            };
            for slot in 0..t {
                let gain = p.alpha_rd[l][slot];
                for j in 0..n {
                    let d = self.csi.d[l].block(j, slot);
                    for &(src, c) in &coef[j] {
                        let k = gain * c;
                        for i in 0..n {
                            phi[(base + slot * n + i, src)] += d[(i, 0)] * k;
                        }
                    }
                }
                for i in 0..n {
                    phi[(base + slot * n + i, lay.noise_rd(q) + slot * n + i)] = ONE;
                }
            }
        }
        phi
    }
}

/// `Phi Sigma Phi^H`.
pub fn covariance(phi: &CMat, sigma: &CMat) -> CMat {
    &(phi * sigma) * &phi.hermitian()
}

/// Mean-squared error `E|s_j - w^H r|^2` for `r = Phi xi`, `E[xi xi^H] = Sigma`.
pub fn mse(w: &CMat, j: usize, phi: &CMat, sigma: &CMat) -> f64 {
    let mut y = (&w.hermitian() * phi).scale_re(-1.0);
    y[(0, j)] += ONE;
    (&(&y * sigma) * &y.hermitian())[(0, 0)].re
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dstc::{draw_randomizer, encode};
    use crate::fading::{draw_channels, draw_noise, link, standard_cn, substream};

    /// Direct per-slot simulation of one symbol vector with explicit noise,
    /// stacked with the slot conjugation convention.
    fn brute_force(
        ch: &ChannelSet,
        schemes: &[CodeScheme],
        p: &PowerAllocation,
        relays: &[usize],
        s: &[C64],
        xi: &[C64],
        lay: SourceLayout,
    ) -> CMat {
        let n = lay.n;
        let a_sd: Vec<C64> = (0..n).map(|k| p.alpha_sd[k] * s[k]).collect();
        let mut r_sd = &ch.h * &CMat::col(&a_sd);
        r_sd += &CMat::col(&xi[lay.noise_sd()..lay.noise_sd() + n]);
        let mut parts = vec![r_sd];
        for (q, &l) in relays.iter().enumerate() {
            let cw = encode(&schemes[l], s).unwrap();
            for t in 0..lay.slots {
                let gain = if cw.conj_slots[t] { p.alpha_rd[l][t].conj() } else { p.alpha_rd[l][t] };
                let x = cw.matrix.column(t).scale(gain);
                let nz = &xi[lay.noise_rd(q) + t * n..lay.noise_rd(q) + (t + 1) * n];
                let mut y = &ch.g[l] * &x;
                if cw.conj_slots[t] {
                    y = y.conj();
                }
                y += &CMat::col(nz);
                parts.push(y);
            }
        }
        let refs: Vec<&CMat> = parts.iter().collect();
        CMat::vstack(&refs)
    }

    #[test]
    fn stacked_model_matches_direct_simulation() {
        for trial in 0..200u64 {
            let mut rng = substream(99, trial, 0);
            let n_r = (trial % 3) as usize;
            let ch = draw_channels(&mut rng, 2, n_r);
            let schemes: Vec<CodeScheme> = (0..n_r)
                .map(|_| CodeScheme::r_alamouti(draw_randomizer(&mut rng, 2)).unwrap())
                .collect();
            let mut p = PowerAllocation::equal(2, n_r, 2, 1.0);
            let g1: Vec<C64> = (0..p.group1().len()).map(|_| standard_cn(&mut rng)).collect();
            p.set_group1(&g1);
            let all: Vec<usize> = (0..n_r).collect();
            let g2: Vec<C64> = (0..2 * n_r).map(|_| standard_cn(&mut rng)).collect();
            p.set_group2(&all, &g2);

            let csi = ChannelKnowledge::genie(&ch, &schemes).unwrap();
            let model = LinkModel { csi: &csi, relays: &all, sigma2: 0.3, forwarding: Forwarding::Hard };
            let lay = model.layout();
            let xi_noise = draw_noise(&mut rng, lay.len(), 0.3);
            let mut xi = xi_noise.as_slice().to_vec();
            let s: Vec<C64> = (0..2).map(|_| standard_cn(&mut rng)).collect();
            xi[..2].copy_from_slice(&s);

            let r_model = &model.source_map(&p) * &CMat::col(&xi);
            let r_direct = brute_force(&ch, &schemes, &p, &all, &s, &xi, lay);
            let err = r_model.max_abs_diff(&r_direct);
            assert!(err < 1e-10, "trial {trial}: {err}");
        }
    }

    #[test]
    fn hard_columns_equal_b_times_a() {
        let mut rng = substream(4, 0, link::CHANNELS);
        let ch = draw_channels(&mut rng, 2, 1);
        let schemes = vec![CodeScheme::d_alamouti()];
        let csi = ChannelKnowledge::genie(&ch, &schemes).unwrap();
        let p = PowerAllocation::equal(2, 1, 2, 1.0);
        let model = LinkModel { csi: &csi, relays: &[0], sigma2: 1.0, forwarding: Forwarding::Hard };
        let phi = model.source_map(&p);
        let h_cols: Vec<CMat> = (0..2).map(|j| ch.h.column(j)).collect();
        let b = crate::dstc::build_b(&h_cols, &[&csi.d[0]]).unwrap();
        for j in 0..2 {
            let mut a = vec![p.alpha_sd[j]];
            a.extend_from_slice(&p.alpha_rd[0]);
            let bj = &b[j] * &CMat::col(&a);
            assert!(bj.max_abs_diff(&phi.column(j)) < 1e-14);
        }
    }

    #[test]
    fn mse_of_zero_filter_is_symbol_power() {
        let ch = ChannelSet::identity(2, 0);
        let csi = ChannelKnowledge::genie(&ch, &[]).unwrap();
        let model = LinkModel { csi: &csi, relays: &[], sigma2: 0.5, forwarding: Forwarding::Hard };
        let p = PowerAllocation::equal(2, 0, 2, 1.0);
        let phi = model.source_map(&p);
        let m = mse(&CMat::zeros(2, 1), 0, &phi, &model.source_covariance());
        assert!((m - 1.0).abs() < 1e-15);
    }
}
