//! Stochastic-gradient adaptation of the destination filters, relay filters
//! and power parameters.
//!
//! Gradients are Wirtinger derivatives `dL/dz*` of the instantaneous cost
//! `|e_i|^2 + lambda (|z|^2 - ...)` with `e_i = s_i - w_i^H r`. Every power
//! parameter enters the stacked vector, and so every filter output, so the
//! power updates accumulate the contribution of each symbol's error.
//!
//! Source-to-relay powers only reach the destination through the relays'
//! filter outputs. Their gradients use the soft relay model
//! `s_hat_{l,j} = w_{sr,l,j}^H r_sr_l`, while the training symbols
//! actually forwarded are the known pilots.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{CMat, C64, ZERO};
use crate::mmse::ReceiverState;
use crate::model::ChannelKnowledge;
use crate::power::{project, PowerAllocation};

/// Magnitude above which an update is treated as divergence.
pub const DIVERGENCE_LIMIT: f64 = 1e6;

/// Guard added to every normalization energy.
const NORM_EPS: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SgConfig {
    /// Filter step size (normalized by the regressor energy).
    pub mu: f64,
    /// Power step size (normalized by the regressor energy).
    pub gamma: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    /// Add the destination-error term to the relay filter updates.
    pub relay_coupling: bool,
}

impl Default for SgConfig {
    fn default() -> Self {
        Self { mu: 0.05, gamma: 0.01, lambda1: 0.0, lambda2: 0.0, relay_coupling: false }
    }
}

impl SgConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu >= 0.0 && self.gamma >= 0.0 && self.lambda1 >= 0.0 && self.lambda2 >= 0.0) {
            return Err(Error::InvalidConfig(format!("SG parameters must be non-negative: {self:?}")));
        }
        Ok(())
    }
}

/// `e = s - w^H r`.
pub fn error_signal(s: C64, w: &CMat, r: &CMat) -> Result<C64> {
    if w.shape() != r.shape() || w.cols() != 1 {
        return Err(Error::UnsupportedDims(format!("filter {:?} vs received {:?}", w.shape(), r.shape())));
    }
    Ok(s - w.dot_h(r))
}

/// Filter gradient `-r e^*`.
pub fn grad_w(r: &CMat, e: C64) -> CMat {
    r.scale(-e.conj())
}

/// Gradient for `alpha_sd_j` with `w1` the direct-link segment of the filter
/// producing `e`: `-s_j^* h_j^H w1 e + lambda1 alpha`.
pub fn grad_alpha_sd(s_j: C64, h_j: &CMat, w1: &CMat, e: C64, lambda1: f64, alpha: C64) -> C64 {
    -s_j.conj() * h_j.dot_h(w1) * e + alpha * lambda1
}

/// Gradient for the slot-`t` power of one relay: `-sum_j s_j^* d_{j,t}^H w_lt e
/// + lambda2 alpha`, with `w_lt` the filter segment of that relay and slot.
pub fn grad_alpha_rd(s: &[C64], d_t: &[&CMat], w_lt: &CMat, e: C64, lambda2: f64, alpha: C64) -> C64 {
    let mut g = ZERO;
    for (sj, d) in s.iter().zip(d_t) {
        g -= sj.conj() * d.dot_h(w_lt);
    }
    g * e + alpha * lambda2
}

/// Gradient for `alpha_sr` of symbol `m` at relay `l`.
///
/// `g[j] = w_l^H D_{j,l} a_l` is the gain from relay symbol estimate `j` to
/// the filter output, `w_sr[j]` the relay filters and `f_m` column `m` of
/// the source-relay channel.
pub fn grad_alpha_sr(
    s_m: C64,
    g: &[C64],
    w_sr: &[CMat],
    f_m: &CMat,
    e: C64,
    lambda1: f64,
    alpha: C64,
) -> C64 {
    let mut chain = ZERO;
    for (gj, w) in g.iter().zip(w_sr) {
        chain += gj * w.dot_h(f_m);
    }
    -s_m.conj() * chain.conj() * e + alpha * lambda1
}

/// Relay filter gradient from the destination error:
/// `-(w_l^H D_{j,l} a_l) r_sr e^*`.
pub fn grad_w_relay(g_j: C64, r_sr: &CMat, e: C64) -> CMat {
    r_sr.scale(-g_j * e.conj())
}

/// One training vector as seen by the destination and by every relay.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingSample {
    /// Stacked destination vector over `relays` of the [`SgContext`].
    pub r: CMat,
    pub s: Vec<C64>,
    /// Received vector at every relay.
    pub r_sr: Vec<CMat>,
}

/// Channel knowledge and forwarding relays used to form the gradients.
#[derive(Clone, Copy, Debug)]
pub struct SgContext<'a> {
    pub csi: &'a ChannelKnowledge,
    pub relays: &'a [usize],
}

impl SgContext<'_> {
    pub fn n(&self) -> usize {
        self.csi.n()
    }

    pub fn slots(&self) -> usize {
        self.csi.slots()
    }

    pub fn dim(&self) -> usize {
        self.n() * (1 + self.relays.len() * self.slots())
    }

    /// Segment of a destination filter belonging to forwarding position `q`, slot `t`.
    pub fn segment(&self, w: &CMat, q: usize, t: usize) -> CMat {
        let n = self.n();
        w.row_range(n + (q * self.slots() + t) * n, n)
    }

    /// `g[i][q][j] = w_i^H D_{j,l} a_l` for forwarding position `q` (relay `l`).
    fn relay_gains(&self, state: &ReceiverState, p: &PowerAllocation) -> Vec<Vec<Vec<C64>>> {
        let n = self.n();
        state
            .w_dest
            .iter()
            .map(|w| {
                self.relays
                    .iter()
                    .enumerate()
                    .map(|(q, &l)| {
                        (0..n)
                            .map(|j| {
                                (0..self.slots())
                                    .map(|t| self.segment(w, q, t).dot_h(self.csi.d[l].block(j, t)) * p.alpha_rd[l][t])
                                    .sum()
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect()
    }
}

/// Matched-filter start: destination filters `B_j a_j / |B_j a_j|`, relay
/// filters `f_j alpha_sr_j / |f_j alpha_sr_j|`.
pub fn initial_state(ctx: &SgContext<'_>, p: &PowerAllocation) -> ReceiverState {
    let n = ctx.n();
    let unit = |v: CMat| {
        let k = v.norm();
        if k > 0.0 {
            v.scale_re(1.0 / k)
        } else {
            v
        }
    };
    let w_dest = (0..n)
        .map(|j| {
            let mut v = CMat::zeros(ctx.dim(), 1);
            v.set_row_range(0, &ctx.csi.h.column(j).scale(p.alpha_sd[j]));
            for (q, &l) in ctx.relays.iter().enumerate() {
                for t in 0..ctx.slots() {
                    let seg = ctx.csi.d[l].block(j, t).scale(p.alpha_rd[l][t]);
                    v.set_row_range(n + (q * ctx.slots() + t) * n, &seg);
                }
            }
            unit(v)
        })
        .collect();
    let w_relay = ctx
        .csi
        .f
        .iter()
        .enumerate()
        .map(|(k, f)| (0..n).map(|j| unit(f.column(j).scale(p.alpha_sr[k][j]))).collect())
        .collect();
    ReceiverState { w_dest, w_relay }
}

/// Errors of one step, evaluated before the update.
#[derive(Clone, Debug, PartialEq)]
pub struct StepInfo {
    pub errors: Vec<C64>,
    pub relay_errors: Vec<Vec<C64>>,
}

fn check(v: f64, what: &str) -> Result<()> {
    if !v.is_finite() || v > DIVERGENCE_LIMIT {
        return Err(Error::Diverged(format!("{what} magnitude {v:.3e}; reduce the step sizes")));
    }
    Ok(())
}

/// One SG update of every filter and power parameter. All gradients are
/// evaluated at the incoming state; powers are then projected onto both
/// constraints (group 2 over the forwarding relays).
pub fn sg_step(
    ctx: &SgContext<'_>,
    state: &ReceiverState,
    p: &PowerAllocation,
    sample: &TrainingSample,
    cfg: &SgConfig,
) -> Result<(ReceiverState, PowerAllocation, StepInfo)> {
    let n = ctx.n();
    let t_slots = ctx.slots();
    if sample.r.shape() != (ctx.dim(), 1) || sample.s.len() != n || state.w_dest.len() != n {
        return Err(Error::DimMismatch(format!(
            "training sample of dim {} with {} symbols for a {}-dim receiver",
            sample.r.rows(),
            sample.s.len(),
            ctx.dim()
        )));
    }
    let errors: Vec<C64> =
        state.w_dest.iter().zip(&sample.s).map(|(w, s)| error_signal(*s, w, &sample.r)).collect::<Result<_>>()?;
    let relay_errors: Vec<Vec<C64>> = state
        .w_relay
        .iter()
        .zip(&sample.r_sr)
        .map(|(ws, r)| ws.iter().zip(&sample.s).map(|(w, s)| error_signal(*s, w, r)).collect::<Result<_>>())
        .collect::<Result<_>>()?;
    let gains = ctx.relay_gains(state, p);

    let mut next = state.clone();
    let mu_dest = cfg.mu / (sample.r.norm_sqr() + NORM_EPS);
    for (w, e) in next.w_dest.iter_mut().zip(&errors) {
        *w -= &grad_w(&sample.r, *e).scale_re(mu_dest);
    }
    for (k, ws) in next.w_relay.iter_mut().enumerate() {
        let r = &sample.r_sr[k];
        let mu_relay = cfg.mu / (r.norm_sqr() + NORM_EPS);
        for (j, w) in ws.iter_mut().enumerate() {
            let mut g = grad_w(r, relay_errors[k][j]);
            if cfg.relay_coupling {
                if let Some(q) = ctx.relays.iter().position(|&l| l == k) {
                    for (i, e) in errors.iter().enumerate() {
                        g += &grad_w_relay(gains[i][q][j], r, *e);
                    }
                }
            }
            *w -= &g.scale_re(mu_relay);
        }
    }

    let mut out = p.clone();
    if cfg.gamma > 0.0 || cfg.lambda1 > 0.0 || cfg.lambda2 > 0.0 {
        // Group 1: alpha_sd, then alpha_sr per relay. psi holds de_i/dalpha
        // for the normalization.
        let mut grad1 = Vec::with_capacity(n * (1 + p.n_relays()));
        let mut energy1 = 0.0;
        for j in 0..n {
            let h_j = ctx.csi.h.column(j);
            let mut g = p.alpha_sd[j] * cfg.lambda1;
            for (i, e) in errors.iter().enumerate() {
                let w1 = state.w_dest[i].row_range(0, n);
                g += grad_alpha_sd(sample.s[j], &h_j, &w1, *e, 0.0, ZERO);
                energy1 += (w1.dot_h(&h_j) * sample.s[j]).norm_sqr();
            }
            grad1.push(g);
        }
        for k in 0..p.n_relays() {
            let q = ctx.relays.iter().position(|&l| l == k);
            for m in 0..n {
                let f_m = ctx.csi.f[k].column(m);
                let mut g = p.alpha_sr[k][m] * cfg.lambda1;
                if let Some(q) = q {
                    for (i, e) in errors.iter().enumerate() {
                        let gi = &gains[i][q];
                        g += grad_alpha_sr(sample.s[m], gi, &state.w_relay[k], &f_m, *e, 0.0, ZERO);
                        let chain: C64 = gi.iter().zip(&state.w_relay[k]).map(|(g, w)| g * w.dot_h(&f_m)).sum();
                        energy1 += (chain * sample.s[m]).norm_sqr();
                    }
                }
                grad1.push(g);
            }
        }
        let step1 = cfg.gamma / (energy1 + NORM_EPS);
        let g1: Vec<C64> = p.group1().iter().zip(&grad1).map(|(a, g)| a - g * step1).collect();
        out.set_group1(&g1);

        let mut grad2 = Vec::with_capacity(ctx.relays.len() * t_slots);
        let mut energy2 = 0.0;
        for (q, &l) in ctx.relays.iter().enumerate() {
            for t in 0..t_slots {
                let d_t: Vec<&CMat> = (0..n).map(|j| ctx.csi.d[l].block(j, t)).collect();
                let mut g = p.alpha_rd[l][t] * cfg.lambda2;
                for (i, e) in errors.iter().enumerate() {
                    let seg = ctx.segment(&state.w_dest[i], q, t);
                    g += grad_alpha_rd(&sample.s, &d_t, &seg, *e, 0.0, ZERO);
                    let psi: C64 = d_t.iter().zip(&sample.s).map(|(d, s)| seg.dot_h(d) * s).sum();
                    energy2 += psi.norm_sqr();
                }
                grad2.push(g);
            }
        }
        let step2 = cfg.gamma / (energy2 + NORM_EPS);
        let g2: Vec<C64> = p.group2(ctx.relays).iter().zip(&grad2).map(|(a, g)| a - g * step2).collect();
        out.set_group2(ctx.relays, &g2);
        check(out.max_abs(), "power parameter")?;
        out = project(&out, ctx.relays)?;
    }
    check(next.max_abs(), "filter coefficient")?;
    if !next.is_finite() {
        return Err(Error::Diverged("non-finite filter coefficient".into()));
    }
    Ok((next, out, StepInfo { errors, relay_errors }))
}

/// Per-iteration diagnostics of an SG run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SgTrace {
    pub rows: Vec<TraceRow>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceRow {
    pub iteration: usize,
    pub sq_errors: Vec<f64>,
    pub constraint1: f64,
    pub constraint2: f64,
}

impl SgTrace {
    pub fn push(&mut self, iteration: usize, info: &StepInfo, p: &PowerAllocation, relays: &[usize]) {
        let (c1, c2) = p.constraint_sums(relays);
        self.rows.push(TraceRow {
            iteration,
            sq_errors: info.errors.iter().map(|e| e.norm_sqr()).collect(),
            constraint1: c1,
            constraint2: c2,
        });
    }

    /// CSV with columns `iteration,err2_0,..,err2_{N-1},constraint1,constraint2`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let n = self.rows.first().map_or(0, |r| r.sq_errors.len());
        let mut header = String::from("iteration");
        for j in 0..n {
            header.push_str(&format!(",err2_{j}"));
        }
        writeln!(out, "{header},constraint1,constraint2")?;
        for row in &self.rows {
            write!(out, "{}", row.iteration)?;
            for e in &row.sq_errors {
                write!(out, ",{e:.9e}")?;
            }
            writeln!(out, ",{:.12},{:.12}", row.constraint1, row.constraint2)?;
        }
        Ok(())
    }
}
