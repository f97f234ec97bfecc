//! Pilot-driven SG estimation of `H`, `F_k` and the effective relay blocks.
//!
//! Each estimate follows a normalized LMS recursion on an instantaneous
//! squared residual. Gradients are `d cost / d conj(X)`, arranged as
//! `-(residual) (regressor)^H`.
//!
//! `F_k` is estimated twice: at the destination through the forwarded relay
//! outputs (only `w_sr^H F_k` is observable there), and locally at each
//! relay from its own pilots for relay-side detection.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::adapt::DIVERGENCE_LIMIT;
use crate::dstc::EffectiveBlocks;
use crate::error::{Error, Result};
use crate::linalg::{CMat, C64};
use crate::model::ChannelKnowledge;

const NORM_EPS: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelEstimate {
    pub h: CMat,
    /// Destination-side estimates of `F_k` through the relay chain
    /// (see [`chain_step`]).
    pub f: Vec<CMat>,
    /// Relay-side estimates of `F_k`.
    pub f_local: Vec<CMat>,
    pub d: Vec<EffectiveBlocks>,
    pub beta: f64,
}

impl ChannelEstimate {
    /// All-zero start.
    pub fn zeros(n: usize, n_relays: usize, slots: usize, beta: f64) -> Self {
        Self {
            h: CMat::zeros(n, n),
            f: vec![CMat::zeros(n, n); n_relays],
            f_local: vec![CMat::zeros(n, n); n_relays],
            d: vec![EffectiveBlocks::zeros(n, slots); n_relays],
            beta,
        }
    }

    /// Knowledge used by the destination. Relays forward hard decisions, so
    /// `F_k` is taken from the relays' own estimates (fed back error-free).
    pub fn knowledge(&self) -> ChannelKnowledge {
        ChannelKnowledge { h: self.h.clone(), f: self.f_local.clone(), d: self.d.clone() }
    }

    fn max_abs(&self) -> f64 {
        let d = self.d.iter().flat_map(|e| e.blocks.iter().flatten());
        std::iter::once(&self.h).chain(&self.f).chain(&self.f_local).chain(d).map(CMat::max_abs).fold(0.0, f64::max)
    }
}

fn scaled(alpha: &[C64], s: &[C64]) -> CMat {
    let v: Vec<C64> = alpha.iter().zip(s).map(|(a, s)| a * s).collect();
    CMat::col(&v)
}

/// `|r1 - H A s|^2`.
pub fn cost_h(r1: &CMat, h: &CMat, alpha: &[C64], s: &[C64]) -> f64 {
    (r1 - &(h * &scaled(alpha, s))).norm_sqr()
}

/// `-(r1 - H A s) (A s)^H`.
pub fn grad_h(r1: &CMat, h: &CMat, alpha: &[C64], s: &[C64]) -> CMat {
    let x = scaled(alpha, s);
    let res = r1 - &(h * &x);
    -&(&res * &x.hermitian())
}

/// Prediction of one relay's destination segment (`N*T x 1`, slots stacked)
/// from per-symbol relay outputs `u[j]`.
fn relay_prediction(d: &EffectiveBlocks, a_rd: &[C64], u: &[C64]) -> CMat {
    let n = d.n_symbols();
    let slots = d.n_slots();
    let mut out = CMat::zeros(n * slots, 1);
    for t in 0..slots {
        for (j, uj) in u.iter().enumerate() {
            let blk = d.block(j, t);
            for i in 0..n {
                out[(t * n + i, 0)] += blk[(i, 0)] * a_rd[t] * uj;
            }
        }
    }
    out
}

/// `c_j = D_j a`: the segment direction of relay output `j`.
fn relay_directions(d: &EffectiveBlocks, a_rd: &[C64]) -> Vec<CMat> {
    let n = d.n_symbols();
    (0..n)
        .map(|j| {
            let mut u = vec![C64::new(0.0, 0.0); n];
            u[j] = C64::new(1.0, 0.0);
            relay_prediction(d, a_rd, &u)
        })
        .collect()
}

/// Relay-chain cost `|r_l - sum_j D_j a w_sr_j^H F A_sr s|^2` (noise-free
/// prediction).
pub fn cost_f(r_l: &CMat, d: &EffectiveBlocks, a_rd: &[C64], w_sr: &[CMat], a_sr: &[C64], s: &[C64], f: &CMat) -> f64 {
    let x = f * &scaled(a_sr, s);
    let u: Vec<C64> = w_sr.iter().map(|w| w.dot_h(&x)).collect();
    (r_l - &relay_prediction(d, a_rd, &u)).norm_sqr()
}

/// `-sum_j (c_j^H res) w_sr_j (A_sr s)^H`.
pub fn grad_f(r_l: &CMat, d: &EffectiveBlocks, a_rd: &[C64], w_sr: &[CMat], a_sr: &[C64], s: &[C64], f: &CMat) -> CMat {
    let x = scaled(a_sr, s);
    let fx = f * &x;
    let u: Vec<C64> = w_sr.iter().map(|w| w.dot_h(&fx)).collect();
    let res = r_l - &relay_prediction(d, a_rd, &u);
    let n = f.rows();
    let mut g = CMat::zeros(n, n);
    for (c, w) in relay_directions(d, a_rd).iter().zip(w_sr) {
        g -= &(&w.scale(c.dot_h(&res)) * &x.hermitian());
    }
    g
}

/// `|r_l - sum_j D_j a s_hat_j|^2`.
pub fn cost_d(r_l: &CMat, d: &EffectiveBlocks, a_rd: &[C64], s_hat: &[C64]) -> f64 {
    (r_l - &relay_prediction(d, a_rd, s_hat)).norm_sqr()
}

/// Gradient with respect to every block: `-(res_t) conj(a_t s_hat_j)`.
pub fn grad_d(r_l: &CMat, d: &EffectiveBlocks, a_rd: &[C64], s_hat: &[C64]) -> EffectiveBlocks {
    let n = d.n_symbols();
    let res = r_l - &relay_prediction(d, a_rd, s_hat);
    let blocks = (0..n)
        .map(|j| {
            (0..d.n_slots())
                .map(|t| res.row_range(t * n, n).scale(-(a_rd[t] * s_hat[j]).conj()))
                .collect()
        })
        .collect();
    EffectiveBlocks { blocks }
}

/// One pilot vector's observations.
#[derive(Clone, Debug, PartialEq)]
pub struct PilotObservation {
    pub s: Vec<C64>,
    /// Direct-link vector.
    pub r_sd: CMat,
    /// Received vector at each relay.
    pub r_sr: Vec<CMat>,
    /// Destination segment of each forwarding relay, `(relay, N*T x 1)`.
    pub r_rd: Vec<(usize, CMat)>,
}

/// Powers and relay filters in effect while the pilots were sent.
#[derive(Clone, Copy, Debug)]
pub struct PilotSetup<'a> {
    pub alpha_sd: &'a [C64],
    pub alpha_sr: &'a [Vec<C64>],
    pub alpha_rd: &'a [Vec<C64>],
    pub w_sr: &'a [Vec<CMat>],
}

fn check(est: &ChannelEstimate) -> Result<()> {
    let m = est.max_abs();
    if !m.is_finite() || m > DIVERGENCE_LIMIT {
        return Err(Error::Diverged(format!("channel estimate magnitude {m:.3e}")));
    }
    Ok(())
}

/// Broadcast-phase update of `H` and the relay-local `F_k`.
pub fn broadcast_step(est: &ChannelEstimate, obs: &PilotObservation, setup: &PilotSetup<'_>) -> Result<ChannelEstimate> {
    let mut next = est.clone();
    let x = scaled(setup.alpha_sd, &obs.s);
    next.h -= &grad_h(&obs.r_sd, &est.h, setup.alpha_sd, &obs.s).scale_re(est.beta / (x.norm_sqr() + NORM_EPS));
    for (k, r) in obs.r_sr.iter().enumerate() {
        let x = scaled(&setup.alpha_sr[k], &obs.s);
        let g = grad_h(r, &est.f_local[k], &setup.alpha_sr[k], &obs.s);
        next.f_local[k] -= &g.scale_re(est.beta / (x.norm_sqr() + NORM_EPS));
    }
    check(&next)?;
    Ok(next)
}

/// Cooperation-phase update of the effective blocks, using the pilots as
/// the relays' detected symbols.
pub fn cooperation_step(
    est: &ChannelEstimate,
    obs: &PilotObservation,
    setup: &PilotSetup<'_>,
) -> Result<ChannelEstimate> {
    let mut next = est.clone();
    let s_energy: f64 = obs.s.iter().map(|x| x.norm_sqr()).sum();
    for (l, r) in &obs.r_rd {
        let a = &setup.alpha_rd[*l];
        let energy = a.iter().map(|x| x.norm_sqr()).sum::<f64>() * s_energy;
        let g = grad_d(r, &est.d[*l], a, &obs.s);
        let step = est.beta / (energy + NORM_EPS);
        for (blk, gb) in next.d[*l].blocks.iter_mut().flatten().zip(g.blocks.iter().flatten()) {
            *blk -= &gb.scale_re(step);
        }
    }
    check(&next)?;
    Ok(next)
}

/// Update of the destination-side `F_k` from a segment `r_l` in which relay
/// `l` forwarded its filter outputs `w_sr^H r_sr` (soft forwarding).
pub fn chain_step(
    est: &ChannelEstimate,
    l: usize,
    r_l: &CMat,
    s: &[C64],
    setup: &PilotSetup<'_>,
) -> Result<ChannelEstimate> {
    let mut next = est.clone();
    let a = &setup.alpha_rd[l];
    let x = scaled(&setup.alpha_sr[l], s);
    let dirs = relay_directions(&est.d[l], a);
    let energy: f64 =
        dirs.iter().zip(&setup.w_sr[l]).map(|(c, w)| c.norm_sqr() * w.norm_sqr()).sum::<f64>() * x.norm_sqr();
    let g = grad_f(r_l, &est.d[l], a, &setup.w_sr[l], &setup.alpha_sr[l], s, &est.f[l]);
    next.f[l] -= &g.scale_re(est.beta / (energy + NORM_EPS));
    check(&next)?;
    Ok(next)
}

/// `|X_hat - X|_F^2 / |X|_F^2`.
pub fn nmse(estimate: &CMat, truth: &CMat) -> f64 {
    (estimate - truth).norm_sqr() / truth.norm_sqr()
}

/// NMSE of the effective blocks of one relay.
pub fn nmse_blocks(estimate: &EffectiveBlocks, truth: &EffectiveBlocks) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for (a, b) in estimate.blocks.iter().flatten().zip(truth.blocks.iter().flatten()) {
        num += (a - b).norm_sqr();
        den += b.norm_sqr();
    }
    num / den
}

/// NMSE per iteration for `H`, the local `F_k` and the effective blocks.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct NmseTrace {
    pub rows: Vec<(usize, f64, Vec<f64>, Vec<f64>)>,
}

impl NmseTrace {
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let n_r = self.rows.first().map_or(0, |r| r.2.len());
        let mut header = String::from("iteration,nmse_h");
        for k in 0..n_r {
            header.push_str(&format!(",nmse_f{k}"));
        }
        for k in 0..n_r {
            header.push_str(&format!(",nmse_d{k}"));
        }
        writeln!(out, "{header}")?;
        for (it, h, f, d) in &self.rows {
            write!(out, "{it},{h:.9e}")?;
            for v in f.iter().chain(d) {
                write!(out, ",{v:.9e}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dstc::{build_effective_d, CodeScheme};
    use crate::fading::{draw_channels, draw_noise, gaussian_matrix, standard_cn, substream};
    use crate::modem::map_pair;
    use rand::Rng;

    #[test]
    fn cost_h_examples() {
        let mut rng = substream(1, 0, 0);
        let h = gaussian_matrix(&mut rng, 2, 2);
        let alpha = [C64::new(0.5, 0.0), C64::new(0.5, 0.0)];
        let s = [standard_cn(&mut rng), standard_cn(&mut rng)];
        let r1 = &h * &scaled(&alpha, &s);
        assert!(cost_h(&r1, &h, &alpha, &s) < 1e-28);
        assert!(grad_h(&r1, &h, &alpha, &s).max_abs() < 1e-14);
        assert!((cost_h(&r1, &CMat::zeros(2, 2), &alpha, &s) - r1.norm_sqr()).abs() < 1e-14);
        let zero = [C64::new(0.0, 0.0); 2];
        assert_eq!(grad_h(&r1, &CMat::zeros(2, 2), &alpha, &zero).max_abs(), 0.0);
    }

    #[test]
    fn silent_relay_gives_no_gradient() {
        let mut rng = substream(2, 0, 0);
        let d = build_effective_d(&CodeScheme::d_alamouti(), &gaussian_matrix(&mut rng, 2, 2)).unwrap();
        let r = gaussian_matrix(&mut rng, 4, 1);
        let w = vec![gaussian_matrix(&mut rng, 2, 1), gaussian_matrix(&mut rng, 2, 1)];
        let a_sr = [standard_cn(&mut rng), standard_cn(&mut rng)];
        let s = [standard_cn(&mut rng), standard_cn(&mut rng)];
        let zero = [C64::new(0.0, 0.0); 2];
        let f = gaussian_matrix(&mut rng, 2, 2);
        assert_eq!(grad_f(&r, &d, &zero, &w, &a_sr, &s, &f).max_abs(), 0.0);
        let g = grad_d(&r, &d, &[C64::new(1.0, 0.0); 2], &zero);
        assert_eq!(g.blocks.iter().flatten().map(CMat::max_abs).fold(0.0, f64::max), 0.0);
    }

    #[test]
    fn zero_step_is_identity_and_truth_is_fixed_point() {
        let mut rng = substream(3, 0, 0);
        let ch = draw_channels(&mut rng, 2, 1);
        let d = vec![build_effective_d(&CodeScheme::d_alamouti(), &ch.g[0]).unwrap()];
        let alpha_sd = vec![C64::new(0.5, 0.0); 2];
        let alpha_sr = vec![vec![C64::new(0.5, 0.0); 2]];
        let alpha_rd = vec![vec![C64::new(0.7, 0.0); 2]];
        let w_sr = vec![vec![gaussian_matrix(&mut rng, 2, 1), gaussian_matrix(&mut rng, 2, 1)]];
        let setup = PilotSetup { alpha_sd: &alpha_sd, alpha_sr: &alpha_sr, alpha_rd: &alpha_rd, w_sr: &w_sr };
        let s = vec![standard_cn(&mut rng), standard_cn(&mut rng)];
        let fx = &ch.f[0] * &scaled(&alpha_sr[0], &s);
        let u: Vec<C64> = w_sr[0].iter().map(|w| w.dot_h(&fx)).collect();
        let obs = PilotObservation {
            s: s.clone(),
            r_sd: &ch.h * &scaled(&alpha_sd, &s),
            r_sr: vec![fx.clone()],
            r_rd: vec![(0, relay_prediction(&d[0], &alpha_rd[0], &s))],
        };
        let truth = ChannelEstimate { h: ch.h.clone(), f: ch.f.clone(), f_local: ch.f.clone(), d: d.clone(), beta: 0.5 };
        let a = cooperation_step(&broadcast_step(&truth, &obs, &setup).unwrap(), &obs, &setup).unwrap();
        assert_eq!(a.h.max_abs_diff(&ch.h), 0.0);
        assert!(a.f_local[0].max_abs_diff(&ch.f[0]) < 1e-14);
        assert!(a.d[0].max_abs_diff(&d[0]) < 1e-14);
        let soft = relay_prediction(&d[0], &alpha_rd[0], &u);
        let c = chain_step(&truth, 0, &soft, &s, &setup).unwrap();
        assert!(c.f[0].max_abs_diff(&ch.f[0]) < 1e-14);
        let mut frozen = ChannelEstimate::zeros(2, 1, 2, 0.0);
        frozen.h = gaussian_matrix(&mut rng, 2, 2);
        let b = cooperation_step(&broadcast_step(&frozen, &obs, &setup).unwrap(), &obs, &setup).unwrap();
        assert_eq!(chain_step(&frozen, 0, &soft, &s, &setup).unwrap(), frozen);
        assert_eq!(b, frozen);
    }

    #[test]
    fn h_estimate_converges_at_20db() {
        let mut rng = substream(4, 0, 0);
        let ch = draw_channels(&mut rng, 2, 0);
        let alpha = vec![C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0); 2];
        let sigma2 = 0.5 / 100.0;
        let mut est = ChannelEstimate::zeros(2, 0, 2, 0.01);
        for _ in 0..2000 {
            let s: Vec<C64> = (0..2).map(|_| map_pair(rng.random_range(0..2), rng.random_range(0..2))).collect();
            let r = &(&ch.h * &scaled(&alpha, &s)) + &draw_noise(&mut rng, 2, sigma2);
            let setup = PilotSetup { alpha_sd: &alpha, alpha_sr: &[], alpha_rd: &[], w_sr: &[] };
            let obs = PilotObservation { s, r_sd: r, r_sr: vec![], r_rd: vec![] };
            est = broadcast_step(&est, &obs, &setup).unwrap();
        }
        assert!(nmse(&est.h, &ch.h) < 0.01);
    }

    #[test]
    fn nmse_csv_layout() {
        let tr = NmseTrace { rows: vec![(1, 0.5, vec![0.25], vec![0.125])] };
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), "iteration,nmse_h,nmse_f0,nmse_d0");
        assert_eq!(text.lines().count(), 2);
    }
}
