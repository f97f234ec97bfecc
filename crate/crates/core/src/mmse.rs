//! Closed-form MMSE receive filters and power-allocation updates.
//!
//! Expectations are taken against a source covariance `Sigma` (see
//! [`crate::model`]): either the analytic one, which gives exact statistics
//! for the given channel knowledge, or a sample covariance over a training
//! block.
//!
//! Power updates solve the stationarity condition of the Lagrangian for one
//! constraint group at a time with the destination filters held fixed. The
//! received vector is affine in each group, so each update is a small
//! Hermitian linear system `(Q + lambda I) conj(theta) = c`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{solve, CMat, C64, ONE, ZERO};
use crate::model::{mse, ChannelKnowledge, Forwarding, LinkModel};
use crate::power::{project, PowerAllocation};

pub const DEFAULT_RIDGE: f64 = 1e-8;

/// Second-order statistics for one symbol's filter.
#[derive(Clone, Debug, PartialEq)]
pub struct WienerStats {
    /// `E[r r^H]`
    pub r: CMat,
    /// `E[r s_j^*]`
    pub p: CMat,
}

/// Destination filters `w_j` (one per symbol) and relay filters `w_relay[k][j]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReceiverState {
    pub w_dest: Vec<CMat>,
    pub w_relay: Vec<Vec<CMat>>,
}

impl ReceiverState {
    pub fn is_finite(&self) -> bool {
        self.w_dest.iter().chain(self.w_relay.iter().flatten()).all(CMat::is_finite)
    }

    pub fn max_abs(&self) -> f64 {
        self.w_dest.iter().chain(self.w_relay.iter().flatten()).map(CMat::max_abs).fold(0.0, f64::max)
    }
}

/// Sample averages of `r r^H` and `r s_j^*`.
pub fn estimate_stats(samples: &[(CMat, C64)]) -> Result<WienerStats> {
    let (first, _) = samples.first().ok_or(Error::Empty)?;
    let m = first.rows();
    let mut r = CMat::zeros(m, m);
    let mut p = CMat::zeros(m, 1);
    for (x, s) in samples {
        if x.shape() != (m, 1) {
            return Err(Error::DimMismatch(format!("sample of shape {:?}, expected {m}x1", x.shape())));
        }
        for i in 0..m {
            for k in 0..m {
                r[(i, k)] += x[(i, 0)] * x[(k, 0)].conj();
            }
            p[(i, 0)] += x[(i, 0)] * s.conj();
        }
    }
    let inv = 1.0 / samples.len() as f64;
    Ok(WienerStats { r: r.scale_re(inv), p: p.scale_re(inv) })
}

/// Statistics of `r = Phi xi` for symbol `j`.
pub fn model_stats(phi: &CMat, sigma: &CMat, j: usize) -> WienerStats {
    let ps = phi * sigma;
    WienerStats { r: &ps * &phi.hermitian(), p: ps.column(j) }
}

/// `(R + ridge I)^{-1} p`.
pub fn wiener_filter(stats: &WienerStats, ridge: f64) -> Result<CMat> {
    solve(&stats.r.add_diag(ridge), &stats.p)
}

/// Filter output `w^H r`.
pub fn detect(w: &CMat, r: &CMat) -> Result<C64> {
    if w.shape() != r.shape() || w.cols() != 1 {
        return Err(Error::DimMismatch(format!("filter {:?} vs received {:?}", w.shape(), r.shape())));
    }
    Ok(w.dot_h(r))
}

/// Wiener filters for every symbol of the model.
pub fn destination_filters(phi: &CMat, sigma: &CMat, n_symbols: usize, ridge: f64) -> Result<Vec<CMat>> {
    let ps = phi * sigma;
    let r = (&ps * &phi.hermitian()).add_diag(ridge);
    let mut rhs = CMat::zeros(phi.rows(), n_symbols);
    for j in 0..n_symbols {
        rhs.set_column(j, &ps.column(j));
    }
    let w = solve(&r, &rhs)?;
    Ok((0..n_symbols).map(|j| w.column(j)).collect())
}

/// Local MMSE filters at each relay, `w_{k,j} = (F A A^H F^H + sigma2 I)^{-1} f_j alpha_j`.
pub fn relay_mmse_filters(f: &[CMat], p: &PowerAllocation, sigma2: f64, ridge: f64) -> Result<Vec<Vec<CMat>>> {
    f.iter()
        .zip(&p.alpha_sr)
        .map(|(fk, alpha)| {
            let n = fk.rows();
            let mut fa = fk.clone();
            for i in 0..n {
                for j in 0..n {
                    fa[(i, j)] *= alpha[j];
                }
            }
            let r = (&fa * &fa.hermitian()).add_diag(sigma2 + ridge);
            let w = solve(&r, &fa)?;
            Ok((0..n).map(|j| w.column(j)).collect())
        })
        .collect()
}

/// Sum of per-symbol MSEs.
pub fn total_mse(w_dest: &[CMat], phi: &CMat, sigma: &CMat) -> f64 {
    w_dest.iter().enumerate().map(|(j, w)| mse(w, j, phi, sigma)).sum()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PowerGroup {
    /// `alpha_sd` and all `alpha_sr` (first constraint).
    Broadcast,
    /// `alpha_rd` of the active relays (second constraint).
    Relay,
}

/// How the Lagrange multiplier of a group is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Multiplier {
    /// Use the given multiplier, then rescale onto the constraint.
    Fixed(f64),
    /// Pick the multiplier for which the solution meets the constraint exactly.
    Constrained,
}

/// Normal equations `(Q, c)` of one power group: the group's MSE term is
/// `theta^T Q conj(theta) - 2 Re(theta^T conj(c)) + const` summed over
/// symbols, with the destination filters fixed.
pub fn power_normal_equations(
    model: &LinkModel<'_>,
    w_dest: &[CMat],
    p: &PowerAllocation,
    sigma: &CMat,
    group: PowerGroup,
) -> (CMat, CMat) {
    let get = |p: &PowerAllocation| match group {
        PowerGroup::Broadcast => p.group1(),
        PowerGroup::Relay => p.group2(model.relays),
    };
    let set = |p: &mut PowerAllocation, v: &[C64]| match group {
        PowerGroup::Broadcast => p.set_group1(v),
        PowerGroup::Relay => p.set_group2(model.relays, v),
    };
    let m = get(p).len();
    let mut probe = p.clone();
    set(&mut probe, &vec![C64::new(0.0, 0.0); m]);
    let phi0 = model.source_map(&probe);
    let partials: Vec<CMat> = (0..m)
        .map(|i| {
            let mut e = vec![C64::new(0.0, 0.0); m];
            e[i] = ONE;
            set(&mut probe, &e);
            &model.source_map(&probe) - &phi0
        })
        .collect();

    let mut q = CMat::zeros(m, m);
    let mut c = CMat::zeros(m, 1);
    for (j, w) in w_dest.iter().enumerate() {
        let wh = w.hermitian();
        let mut y = (&wh * &phi0).scale_re(-1.0);
        y[(0, j)] += ONE;
        let rows: Vec<CMat> = partials.iter().map(|d| &wh * d).collect();
        let refs: Vec<&CMat> = rows.iter().collect();
        let x = CMat::vstack(&refs);
        let xs = &x * sigma;
        q += &(&xs * &x.hermitian());
        c += &(&xs * &y.hermitian());
    }
    (q, c)
}

/// Solves `(Q + lambda I) conj(theta) = c` for the group parameters `theta`.
pub fn solve_power_group(q: &CMat, c: &CMat, lambda: f64) -> Result<Vec<C64>> {
    let a = q.add_diag(lambda);
    if q.rows() == 1 && a[(0, 0)].norm() < 1e-12 {
        return Err(Error::Singular { pivot: a[(0, 0)].norm(), tol: 1e-12 });
    }
    let x = solve(&a, c)?;
    Ok(x.as_slice().iter().map(|z| z.conj()).collect())
}

/// Exact minimizer of the group's MSE on the sphere `|theta|^2 = total`.
///
/// With `Q = V diag(q_i) V^H` and `b = V^H c`, the stationary point for
/// multiplier `lambda` has `|theta|^2 = sum |b_i|^2 / (q_i + lambda)^2`,
/// which decreases on `lambda > -q_min`; the root is found by bisection.
/// When `c` has no component along the smallest eigenvector and the root
/// would lie below `-q_min`, the remaining norm goes along that eigenvector.
fn constrained_group(q: &CMat, c: &CMat, total: f64) -> Result<Vec<C64>> {
    let m = q.rows();
    if c.norm() == 0.0 {
        return Err(Error::DegenerateGroup("normal equations"));
    }
    let qn = nalgebra::DMatrix::from_fn(m, m, |i, k| 0.5 * (q[(i, k)] + q[(k, i)].conj()));
    let eig = qn.symmetric_eigen();
    let vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    let vecs = &eig.eigenvectors;
    let b: Vec<C64> = (0..m).map(|i| (0..m).map(|r| vecs[(r, i)].conj() * c[(r, 0)]).sum()).collect();
    let q_min = vals.iter().copied().fold(f64::INFINITY, f64::min);
    let scale = vals.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1e-300);
    let near_min: Vec<bool> = vals.iter().map(|&v| v - q_min <= 1e-12 * scale).collect();
    let weight: Vec<f64> = b.iter().map(|x| x.norm_sqr()).collect();
    let c2 = c.norm_sqr();
    let hard = near_min.iter().zip(&weight).all(|(&nm, &w)| !nm || w <= 1e-24 * c2);
    let norm_at = |lambda: f64| -> f64 {
        vals.iter().zip(&weight).zip(&near_min).map(|((&v, &w), &nm)| if hard && nm { 0.0 } else { w / (v + lambda).powi(2) }).sum()
    };
    let assemble = |lambda: f64, extra: f64| -> Vec<C64> {
        let mut x = vec![C64::new(0.0, 0.0); m];
        let mut first_min = true;
        for i in 0..m {
            let coef = if hard && near_min[i] {
                if first_min {
                    first_min = false;
                    C64::new(extra, 0.0)
                } else {
                    C64::new(0.0, 0.0)
                }
            } else {
                b[i] / (vals[i] + lambda)
            };
            for r in 0..m {
                x[r] += vecs[(r, i)] * coef;
            }
        }
        x.iter().map(|z| z.conj()).collect()
    };
    if hard {
        let at_edge = norm_at(-q_min);
        if at_edge <= total {
            return Ok(assemble(-q_min, (total - at_edge).sqrt()));
        }
    }
    // norm_at(lo) > total >= norm_at(hi)
    let mut lo = -q_min;
    let mut hi = -q_min + (c2 / total).sqrt() + scale * 1e-12;
    while norm_at(hi) > total {
        hi += hi - lo;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if norm_at(mid) > total {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(assemble(hi, 0.0))
}

const PATH_TOL: f64 = 1e-12;

/// Per-parameter power update: every `alpha` is set to `P_alpha / R_alpha`,
/// the minimizer of its own path's error term `E|s_j - w^H (path) alpha s_j|^2`
/// plus its multiplier term, with the filters fixed. Both groups are then
/// projected onto their constraints.
///
/// For `lambda = 0` each path gets unit gain through the current filter,
/// `w_{j,1}^H h_j alpha_sd_j = 1`, so weak streams receive more power.
/// Slot powers of a relay are shared by all symbols, so their ratios sum
/// over `j`. Source-to-relay powers need soft forwarding in `model` and are
/// left unchanged for relays that do not forward.
pub fn fixed_point_power(
    model: &LinkModel<'_>,
    w_dest: &[CMat],
    p: &PowerAllocation,
    sigma: &CMat,
    lambda1: f64,
    lambda2: f64,
) -> Result<PowerAllocation> {
    let csi = model.csi;
    let n = csi.n();
    let t_slots = csi.slots();
    let var: Vec<f64> = (0..n).map(|j| sigma[(j, j)].re).collect();
    let seg = |w: &CMat, q: usize, t: usize| w.row_range(n + (q * t_slots + t) * n, n);
    let ratio = |num: C64, den: f64| -> Result<C64> {
        if den < PATH_TOL {
            return Err(Error::Singular { pivot: den, tol: PATH_TOL });
        }
        Ok(num / den)
    };

    let mut out = p.clone();
    for j in 0..n {
        let g = w_dest[j].row_range(0, n).dot_h(&csi.h.column(j));
        out.alpha_sd[j] = ratio(g.conj() * var[j], g.norm_sqr() * var[j] + lambda1)?;
    }
    for (q, &l) in model.relays.iter().enumerate() {
        for t in 0..t_slots {
            let mut num = ZERO;
            let mut den = lambda2;
            for j in 0..n {
                let g = seg(&w_dest[j], q, t).dot_h(csi.d[l].block(j, t));
                num += g.conj() * var[j];
                den += g.norm_sqr() * var[j];
            }
            out.alpha_rd[l][t] = ratio(num, den)?;
        }
        if let Forwarding::Soft(filters) = model.forwarding {
            for j in 0..n {
                let chain: C64 = (0..t_slots)
                    .map(|t| seg(&w_dest[j], q, t).dot_h(csi.d[l].block(j, t)) * p.alpha_rd[l][t])
                    .sum();
                let c = chain * filters[l][j].dot_h(&csi.f[l].column(j));
                out.alpha_sr[l][j] = ratio(c.conj() * var[j], c.norm_sqr() * var[j] + lambda1)?;
            }
        }
    }
    project(&out, model.relays)
}

/// One block-coordinate power update (broadcast group, then relay group),
/// followed by projection onto both constraints. Each group update is the
/// exact minimizer of the total MSE over that group with the filters fixed.
pub fn block_power_update(
    model: &LinkModel<'_>,
    w_dest: &[CMat],
    p: &PowerAllocation,
    sigma: &CMat,
    multipliers: [Multiplier; 2],
) -> Result<PowerAllocation> {
    let mut out = p.clone();
    let (q, c) = power_normal_equations(model, w_dest, &out, sigma, PowerGroup::Broadcast);
    let theta = match multipliers[0] {
        Multiplier::Fixed(l) => solve_power_group(&q, &c, l)?,
        Multiplier::Constrained => constrained_group(&q, &c, p.total_power)?,
    };
    out.set_group1(&theta);
    out = project(&out, &[])?;
    if !model.relays.is_empty() {
        let (q, c) = power_normal_equations(model, w_dest, &out, sigma, PowerGroup::Relay);
        let theta = match multipliers[1] {
            Multiplier::Fixed(l) => solve_power_group(&q, &c, l)?,
            Multiplier::Constrained => constrained_group(&q, &c, p.total_power)?,
        };
        out.set_group2(model.relays, &theta);
    }
    project(&out, model.relays)
}

/// Power update used between filter updates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum PowerRule {
    /// [`fixed_point_power`] with the given multipliers.
    PerParameter { lambda1: f64, lambda2: f64 },
    /// [`block_power_update`]; the total MSE never increases.
    Block([Multiplier; 2]),
}

impl Default for PowerRule {
    fn default() -> Self {
        PowerRule::PerParameter { lambda1: 0.0, lambda2: 0.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AlternationConfig {
    pub max_rounds: usize,
    pub rel_tol: f64,
    pub ridge: f64,
    pub rule: PowerRule,
}

impl Default for AlternationConfig {
    fn default() -> Self {
        Self { max_rounds: 20, rel_tol: 1e-4, ridge: DEFAULT_RIDGE, rule: PowerRule::default() }
    }
}

#[derive(Clone, Debug)]
pub struct Alternation {
    pub w_dest: Vec<CMat>,
    pub power: PowerAllocation,
    /// Total MSE after each filter update.
    pub mse_trace: Vec<f64>,
}

/// Alternates Wiener filters and power updates until the total MSE settles.
/// Relay filters (soft forwarding) stay fixed throughout.
pub fn alternate(
    csi: &ChannelKnowledge,
    relays: &[usize],
    sigma2: f64,
    relay_filters: Option<&[Vec<CMat>]>,
    sigma: Option<&CMat>,
    p0: &PowerAllocation,
    cfg: &AlternationConfig,
) -> Result<Alternation> {
    let forwarding = relay_filters.map_or(Forwarding::Hard, Forwarding::Soft);
    let model = LinkModel { csi, relays, sigma2, forwarding };
    let analytic;
    let sigma = match sigma {
        Some(s) => s,
        None => {
            analytic = model.source_covariance();
            &analytic
        }
    };
    let n = csi.n();
    let mut power = project(p0, relays)?;
    let mut trace = Vec::new();
    let mut w_dest;
    loop {
        let phi = model.source_map(&power);
        w_dest = destination_filters(&phi, sigma, n, cfg.ridge)?;
        let m = total_mse(&w_dest, &phi, sigma);
        let settled = trace.last().map_or(false, |&prev: &f64| (prev - m).abs() <= cfg.rel_tol * prev.abs());
        trace.push(m);
        if settled || trace.len() > cfg.max_rounds {
            break;
        }
        let next = match cfg.rule {
            PowerRule::PerParameter { lambda1, lambda2 } => {
                fixed_point_power(&model, &w_dest, &power, sigma, lambda1, lambda2)
            }
            PowerRule::Block(m) => block_power_update(&model, &w_dest, &power, sigma, m),
        };
        power = match next {
            Ok(p) => p,
            // a path the filters have switched off; the current pair stands
            Err(Error::Singular { .. }) => break,
            Err(e) => return Err(e),
        };
    }
    Ok(Alternation { w_dest, power, mse_trace: trace })
}
