#![allow(dead_code)]

use coopsim::chanest::{cost_d, cost_f, cost_h, grad_d, grad_f, grad_h};
use coopsim::dstc::{build_effective_d, draw_randomizer, CodeScheme, EffectiveBlocks};
use coopsim::engine::{broadcast_phase, relay_phase, stack, LinkRngs};
use coopsim::fading::{draw_channels, gaussian_matrix, standard_cn, substream, ChannelSet, SimRng};
use coopsim::modem::map_pair;
use coopsim::power::PowerAllocation;
use coopsim::{adapt, CMat, C64};
use rand::Rng;

pub const FD_STEP: f64 = 1e-5;

/// `dL/dz* = (dL/dx + i dL/dy) / 2` by central differences.
pub fn wirtinger_fd(f: impl Fn(&[C64]) -> f64, z: &[C64]) -> Vec<C64> {
    let mut z = z.to_vec();
    (0..z.len())
        .map(|k| {
            let z0 = z[k];
            let mut diff = |d: C64| {
                z[k] = z0 + d;
                let up = f(&z);
                z[k] = z0 - d;
                let down = f(&z);
                z[k] = z0;
                (up - down) / (2.0 * FD_STEP)
            };
            let dx = diff(C64::new(FD_STEP, 0.0));
            let dy = diff(C64::new(0.0, FD_STEP));
            C64::new(dx, dy) * 0.5
        })
        .collect()
}

pub fn rel_err(got: &[C64], want: &[C64]) -> f64 {
    let num: f64 = got.iter().zip(want).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
    let den: f64 = want.iter().map(|b| b.norm_sqr()).sum::<f64>().sqrt();
    num / den.max(1e-12)
}

pub fn mat_entries(m: &CMat) -> Vec<C64> {
    (0..m.rows()).flat_map(|i| (0..m.cols()).map(move |j| (i, j))).map(|ij| m[ij]).collect()
}

pub fn mat_from(rows: usize, cols: usize, v: &[C64]) -> CMat {
    CMat::from_vec(rows, cols, v.to_vec()).unwrap()
}

pub fn qpsk(rng: &mut SimRng, n: usize) -> Vec<C64> {
    (0..n).map(|_| map_pair(rng.random_range(0..2), rng.random_range(0..2))).collect()
}

pub fn cn_vec(rng: &mut SimRng, n: usize) -> Vec<C64> {
    (0..n).map(|_| standard_cn(rng)).collect()
}

/// A random two-relay instance with arbitrary filters and complex powers.
pub struct Instance {
    pub channels: ChannelSet,
    pub schemes: Vec<CodeScheme>,
    pub d: Vec<EffectiveBlocks>,
    pub p: PowerAllocation,
    pub w: Vec<CMat>,
    pub w_sr: Vec<Vec<CMat>>,
    pub s: Vec<C64>,
    pub sigma2: f64,
    pub seed: u64,
    pub lambda: f64,
}

pub const N: usize = 2;
pub const T: usize = 2;
pub const RELAYS: usize = 2;

impl Instance {
    pub fn draw(seed: u64) -> Self {
        let mut rng = substream(seed, 0, 99);
        let channels = draw_channels(&mut rng, N, RELAYS);
        let schemes = vec![CodeScheme::d_alamouti(), CodeScheme::r_alamouti(draw_randomizer(&mut rng, N)).unwrap()];
        let d = schemes.iter().zip(&channels.g).map(|(s, g)| build_effective_d(s, g).unwrap()).collect();
        let mut p = PowerAllocation::equal(N, RELAYS, T, 1.0);
        p.alpha_sd = cn_vec(&mut rng, N);
        p.alpha_sr = (0..RELAYS).map(|_| cn_vec(&mut rng, N)).collect();
        p.alpha_rd = (0..RELAYS).map(|_| cn_vec(&mut rng, T)).collect();
        let dim = N * (1 + RELAYS * T);
        let w = (0..N).map(|_| gaussian_matrix(&mut rng, dim, 1)).collect();
        let w_sr = (0..RELAYS).map(|_| (0..N).map(|_| gaussian_matrix(&mut rng, N, 1)).collect()).collect();
        let s = qpsk(&mut rng, N);
        let lambda = rng.random_range(0.0..2.0);
        Self { channels, schemes, d, p, w, w_sr, s, sigma2: 0.3, seed, lambda }
    }

    pub fn segment(&self, w: &CMat, q: usize, t: usize) -> CMat {
        w.row_range(N + (q * T + t) * N, N)
    }

    /// Destination vector produced by the transmission code with frozen
    /// noise. Relays forward their soft estimates `w_sr^H r_sr` when `soft`,
    /// the true symbols otherwise.
    pub fn received(&self, p: &PowerAllocation, w_sr: &[Vec<CMat>], soft: bool) -> CMat {
        let mut rngs = LinkRngs::new(self.seed, 0, RELAYS, |l| l);
        let (r_sd, r_sr) = broadcast_phase(&self.channels, p, &self.s, self.sigma2, &mut rngs);
        let forwarded: Vec<(usize, Vec<C64>)> = (0..RELAYS)
            .map(|l| {
                let sym = if soft { w_sr[l].iter().map(|w| w.dot_h(&r_sr[l])).collect() } else { self.s.clone() };
                (l, sym)
            })
            .collect();
        let segs = relay_phase(&self.channels, &self.schemes, p, &forwarded, self.sigma2, &mut rngs).unwrap();
        stack(&r_sd, &segs)
    }

    pub fn relay_inputs(&self, p: &PowerAllocation) -> Vec<CMat> {
        let mut rngs = LinkRngs::new(self.seed, 0, RELAYS, |l| l);
        broadcast_phase(&self.channels, p, &self.s, self.sigma2, &mut rngs).1
    }

    /// `w_i^H D_{j,l} a_l` for relay `l`.
    pub fn relay_gain(&self, i: usize, l: usize, j: usize) -> C64 {
        (0..T).map(|t| self.segment(&self.w[i], l, t).dot_h(self.d[l].block(j, t)) * self.p.alpha_rd[l][t]).sum()
    }

    pub fn error(&self, i: usize, r: &CMat) -> C64 {
        self.s[i] - self.w[i].dot_h(r)
    }
}

/// Worst relative error of each analytic gradient against finite
/// differences of its instantaneous cost, over `instances` random draws.
pub fn gradient_suite(instances: u64) -> Vec<(&'static str, f64)> {
    let mut worst = vec![
        ("w", 0.0),
        ("alpha_sd", 0.0),
        ("alpha_rd", 0.0),
        ("alpha_sr", 0.0),
        ("w_relay", 0.0),
        ("h", 0.0),
        ("f", 0.0),
        ("d", 0.0),
    ];
    let mut bump = |k: usize, e: f64| worst[k].1 = f64::max(worst[k].1, e);
    for seed in 0..instances {
        let x = Instance::draw(seed);
        let i = (seed % N as u64) as usize;
        let lam = x.lambda;

        // destination filter
        let r = x.received(&x.p, &x.w_sr, false);
        let e = x.error(i, &r);
        let fd = wirtinger_fd(|z| (x.s[i] - mat_from(z.len(), 1, z).dot_h(&r)).norm_sqr(), &mat_entries(&x.w[i]));
        bump(0, rel_err(&mat_entries(&adapt::grad_w(&r, e)), &fd));

        // direct-link power of symbol j
        let j = (seed / 2 % N as u64) as usize;
        let cost = |z: &[C64], field: &dyn Fn(&mut PowerAllocation, C64)| {
            let mut p = x.p.clone();
            field(&mut p, z[0]);
            x.error(i, &x.received(&p, &x.w_sr, false)).norm_sqr() + lam * z[0].norm_sqr()
        };
        let fd = wirtinger_fd(|z| cost(z, &|p, v| p.alpha_sd[j] = v), &[x.p.alpha_sd[j]]);
        let g = adapt::grad_alpha_sd(x.s[j], &x.channels.h.column(j), &x.w[i].row_range(0, N), e, lam, x.p.alpha_sd[j]);
        bump(1, rel_err(&[g], &fd));

        // relay slot power
        let (l, t) = ((seed % RELAYS as u64) as usize, (seed / 3 % T as u64) as usize);
        let fd = wirtinger_fd(|z| cost(z, &|p, v| p.alpha_rd[l][t] = v), &[x.p.alpha_rd[l][t]]);
        let d_t: Vec<&CMat> = (0..N).map(|jj| x.d[l].block(jj, t)).collect();
        let g = adapt::grad_alpha_rd(&x.s, &d_t, &x.segment(&x.w[i], l, t), e, lam, x.p.alpha_rd[l][t]);
        bump(2, rel_err(&[g], &fd));

        // source-to-relay power through soft forwarding
        let r_soft = x.received(&x.p, &x.w_sr, true);
        let e_soft = x.error(i, &r_soft);
        let fd = wirtinger_fd(
            |z| {
                let mut p = x.p.clone();
                p.alpha_sr[l][j] = z[0];
                x.error(i, &x.received(&p, &x.w_sr, true)).norm_sqr() + lam * z[0].norm_sqr()
            },
            &[x.p.alpha_sr[l][j]],
        );
        let gains: Vec<C64> = (0..N).map(|jj| x.relay_gain(i, l, jj)).collect();
        let g = adapt::grad_alpha_sr(x.s[j], &gains, &x.w_sr[l], &x.channels.f[l].column(j), e_soft, lam, x.p.alpha_sr[l][j]);
        bump(3, rel_err(&[g], &fd));

        // relay filter through soft forwarding
        let fd = wirtinger_fd(
            |z| {
                let mut w_sr = x.w_sr.clone();
                w_sr[l][j] = mat_from(N, 1, z);
                x.error(i, &x.received(&x.p, &w_sr, true)).norm_sqr()
            },
            &mat_entries(&x.w_sr[l][j]),
        );
        let r_sr = x.relay_inputs(&x.p);
        bump(4, rel_err(&mat_entries(&adapt::grad_w_relay(gains[j], &r_sr[l], e_soft)), &fd));

        // channel-estimation costs
        let mut rng = substream(seed, 1, 7);
        let r1 = gaussian_matrix(&mut rng, N, 1);
        let h = gaussian_matrix(&mut rng, N, N);
        let fd = wirtinger_fd(|z| cost_h(&r1, &mat_from(N, N, z), &x.p.alpha_sd, &x.s), &mat_entries(&h));
        bump(5, rel_err(&mat_entries(&grad_h(&r1, &h, &x.p.alpha_sd, &x.s)), &fd));

        let r_l = gaussian_matrix(&mut rng, N * T, 1);
        let f = gaussian_matrix(&mut rng, N, N);
        let (a_rd, a_sr) = (&x.p.alpha_rd[l], &x.p.alpha_sr[l]);
        let fd = wirtinger_fd(|z| cost_f(&r_l, &x.d[l], a_rd, &x.w_sr[l], a_sr, &x.s, &mat_from(N, N, z)), &mat_entries(&f));
        bump(6, rel_err(&mat_entries(&grad_f(&r_l, &x.d[l], a_rd, &x.w_sr[l], a_sr, &x.s, &f)), &fd));

        let s_hat = cn_vec(&mut rng, N);
        let flat: Vec<C64> = x.d[l].blocks.iter().flatten().flat_map(mat_entries).collect();
        let unflat = |z: &[C64]| EffectiveBlocks {
            blocks: (0..N).map(|jj| (0..T).map(|tt| mat_from(N, 1, &z[(jj * T + tt) * N..][..N])).collect()).collect(),
        };
        let fd = wirtinger_fd(|z| cost_d(&r_l, &unflat(z), a_rd, &s_hat), &flat);
        let g: Vec<C64> = grad_d(&r_l, &x.d[l], a_rd, &s_hat).blocks.iter().flatten().flat_map(mat_entries).collect();
        bump(7, rel_err(&g, &fd));
    }
    worst
}

pub const GRADIENT_TOL: f64 = 1e-4;

/// Alamouti codeword written out by hand, `U [[s1, -s2*], [s2, s1*]]`.
fn alamouti_by_hand(u: Option<&CMat>, s: &[C64]) -> CMat {
    let x = CMat::from_rows(&[vec![s[0], -s[1].conj()], vec![s[1], s[0].conj()]]).unwrap();
    match u {
        Some(u) => u * &x,
        None => x,
    }
}

/// Largest deviation between four constructions of the destination vector
/// over `instances` random draws: a slot-by-slot hand simulation, the
/// stacked `sum_j B_j a_j s_j + n` form, the source map `Phi xi`, and the
/// transmission code in the engine.
pub fn model_equivalence(instances: u64) -> f64 {
    use coopsim::dstc::build_b;
    use coopsim::fading::draw_noise;
    use coopsim::model::{ChannelKnowledge, Forwarding, LinkModel};

    let mut worst: f64 = 0.0;
    for seed in 0..instances {
        let mut rng = substream(seed, 2, 5);
        let n_r = rng.random_range(1..=3usize);
        let channels = draw_channels(&mut rng, N, n_r);
        let randomizers: Vec<Option<CMat>> =
            (0..n_r).map(|_| if rng.random_bool(0.5) { Some(draw_randomizer(&mut rng, N)) } else { None }).collect();
        let schemes: Vec<CodeScheme> = randomizers
            .iter()
            .map(|u| match u {
                Some(u) => CodeScheme::r_alamouti(u.clone()).unwrap(),
                None => CodeScheme::d_alamouti(),
            })
            .collect();
        let active: Vec<usize> = (0..n_r).filter(|_| rng.random_bool(0.7)).collect();
        let mut p = PowerAllocation::equal(N, n_r, T, 1.0);
        p.alpha_sd = cn_vec(&mut rng, N);
        p.alpha_rd = (0..n_r).map(|_| cn_vec(&mut rng, T)).collect();
        let s = if rng.random_bool(0.5) { qpsk(&mut rng, N) } else { cn_vec(&mut rng, N) };
        let sigma2 = rng.random_range(0.01..2.0);

        // slot-by-slot, noise drawn in the engine's stream order
        let mut rngs = LinkRngs::new(seed, 0, n_r, |l| l);
        let n_sd = draw_noise(&mut rngs.sd, N, sigma2);
        let mut hand = vec![&(&channels.h * &CMat::col(&[p.alpha_sd[0] * s[0], p.alpha_sd[1] * s[1]])) + &n_sd];
        let mut n_rd = Vec::new();
        for &l in &active {
            let x = alamouti_by_hand(randomizers[l].as_ref(), &s);
            let mut seg = Vec::new();
            for t in 0..T {
                let conj = t == 1;
                let gain = if conj { p.alpha_rd[l][t].conj() } else { p.alpha_rd[l][t] };
                let noise = draw_noise(&mut rngs.rd[l], N, sigma2);
                let y = &(&channels.g[l] * &x.column(t).scale(gain)) + &noise;
                seg.push(if conj { y.conj() } else { y });
                n_rd.push(if conj { noise.conj() } else { noise });
            }
            let refs: Vec<&CMat> = seg.iter().collect();
            hand.push(CMat::vstack(&refs));
        }
        let refs: Vec<&CMat> = hand.iter().collect();
        let hand = CMat::vstack(&refs);

        // stacked B_j form
        let d: Vec<EffectiveBlocks> =
            schemes.iter().zip(&channels.g).map(|(sc, g)| build_effective_d(sc, g).unwrap()).collect();
        let active_d: Vec<&EffectiveBlocks> = active.iter().map(|&l| &d[l]).collect();
        let h_cols: Vec<CMat> = (0..N).map(|j| channels.h.column(j)).collect();
        let b = build_b(&h_cols, &active_d).unwrap();
        let mut noise_parts = vec![&n_sd];
        noise_parts.extend(n_rd.iter());
        let stacked_noise = CMat::vstack(&noise_parts);
        let mut stacked = stacked_noise.clone();
        for j in 0..N {
            let mut a = vec![p.alpha_sd[j]];
            for &l in &active {
                a.extend_from_slice(&p.alpha_rd[l]);
            }
            stacked += &(&b[j] * &CMat::col(&a)).scale(s[j]);
        }

        // source map
        let csi = ChannelKnowledge::genie(&channels, &schemes).unwrap();
        let model = LinkModel { csi: &csi, relays: &active, sigma2, forwarding: Forwarding::Hard };
        let lay = model.layout();
        let mut xi = CMat::zeros(lay.len(), 1);
        for j in 0..N {
            xi[(j, 0)] = s[j];
            xi[(lay.noise_sd() + j, 0)] = n_sd[(j, 0)];
        }
        for q in 0..active.len() {
            for k in 0..N * T {
                xi[(lay.noise_rd(q) + k, 0)] = stacked_noise[(N + q * N * T + k, 0)];
            }
        }
        let mapped = &model.source_map(&p) * &xi;

        // engine transmission code
        let mut rngs = LinkRngs::new(seed, 0, n_r, |l| l);
        let (r_sd, _) = broadcast_phase(&channels, &p, &s, sigma2, &mut rngs);
        let forwarded: Vec<(usize, Vec<C64>)> = active.iter().map(|&l| (l, s.clone())).collect();
        let segs = relay_phase(&channels, &schemes, &p, &forwarded, sigma2, &mut rngs).unwrap();
        let engine = stack(&r_sd, &segs);

        for other in [&stacked, &mapped, &engine] {
            worst = worst.max(hand.max_abs_diff(other));
        }
    }
    worst
}

pub const EQUIVALENCE_TOL: f64 = 1e-10;
