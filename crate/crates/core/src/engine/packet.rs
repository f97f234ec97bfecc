//! One packet: channels, optional estimation, adaptation, data detection.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::{AllocationMode, CsiMode, PowerUpdate, RandomizerMode, ReceiverMode, SystemConfig};
use super::protocol::{broadcast_phase, relay_phase, reliable_set, stack, LinkRngs};
use crate::adapt::{initial_state, sg_step, grad_w, SgConfig, SgContext, TrainingSample};
use crate::chanest::{broadcast_step, cooperation_step, ChannelEstimate, PilotObservation, PilotSetup};
use crate::dstc::{draw_randomizer, encode, CodeScheme, SchemeKind};
use crate::error::Result;
use crate::fading::{draw_channels, link, substream, ChannelSet, SimRng};
use crate::linalg::{CMat, C64};
use crate::mmse::{alternate, ReceiverState, destination_filters, relay_mmse_filters, AlternationConfig, Multiplier, PowerRule};
use crate::model::{ChannelKnowledge, Forwarding, LinkModel};
use crate::modem::{demodulate, map_pair};
use crate::power::{equal_power, project, PowerAllocation};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PacketResult {
    pub bit_errors: u64,
    pub bits: u64,
    /// Number of relays that decoded the packet and forwarded it.
    pub reliable_count: usize,
    /// Data vectors sent.
    pub vectors: u64,
    /// Energy radiated by the source over the data block.
    pub energy_broadcast: f64,
    /// Energy radiated by the forwarding relays over the data block, per
    /// transmitted symbol (codeword energy divided by `N`).
    pub energy_relay: f64,
}

fn random_symbols(rng: &mut SimRng, n: usize) -> (Vec<u8>, Vec<C64>) {
    let bits: Vec<u8> = (0..2 * n).map(|_| rng.random_range(0..2u8)).collect();
    let s = bits.chunks(2).map(|b| map_pair(b[0], b[1])).collect();
    (bits, s)
}

/// Code schemes of every relay for this packet.
pub fn packet_schemes(cfg: &SystemConfig, packet: u64) -> Result<Vec<CodeScheme>> {
    match cfg.scheme {
        SchemeKind::DAlamouti => Ok(vec![CodeScheme::d_alamouti(); cfg.n_relays]),
        SchemeKind::RAlamouti => {
            let stream = match cfg.randomizer {
                RandomizerMode::PerPacket => packet,
                RandomizerMode::PerRun => u64::MAX,
            };
            let mut rng = substream(cfg.seed, stream, link::RANDOMIZER);
            (0..cfg.n_relays).map(|_| CodeScheme::r_alamouti(draw_randomizer(&mut rng, cfg.n_antennas))).collect()
        }
    }
}

pub fn packet_channels(cfg: &SystemConfig, packet: u64) -> ChannelSet {
    if cfg.awgn_only {
        ChannelSet::identity(cfg.n_antennas, cfg.n_relays)
    } else {
        draw_channels(&mut substream(cfg.seed, packet, link::CHANNELS), cfg.n_antennas, cfg.n_relays)
    }
}

/// Pilot-based channel estimation at equal power, every relay forwarding
/// the pilots.
pub fn estimate_channels(
    cfg: &SystemConfig,
    channels: &ChannelSet,
    schemes: &[CodeScheme],
    packet: u64,
) -> Result<ChannelEstimate> {
    let p = equal_power(cfg);
    let all: Vec<usize> = (0..cfg.n_relays).collect();
    let mut bits = substream(cfg.seed, packet, link::estimation(link::PILOT_BITS));
    let mut rngs = LinkRngs::new(cfg.seed, packet, cfg.n_relays, link::estimation);
    let setup = PilotSetup { alpha_sd: &p.alpha_sd, alpha_sr: &p.alpha_sr, alpha_rd: &p.alpha_rd, w_sr: &[] };
    let mut est = ChannelEstimate::zeros(cfg.n_antennas, cfg.n_relays, cfg.slots, cfg.beta);
    for _ in 0..cfg.train_len {
        let (_, s) = random_symbols(&mut bits, cfg.n_antennas);
        let (r_sd, r_sr) = broadcast_phase(channels, &p, &s, cfg.sigma2, &mut rngs);
        let forwarded: Vec<(usize, Vec<C64>)> = all.iter().map(|&l| (l, s.clone())).collect();
        let r_rd = relay_phase(channels, schemes, &p, &forwarded, cfg.sigma2, &mut rngs)?;
        let obs = PilotObservation { s, r_sd, r_sr, r_rd };
        est = broadcast_step(&est, &obs, &setup)?;
        est = cooperation_step(&est, &obs, &setup)?;
    }
    Ok(est)
}

/// Destination filters for the segments of `keep` out of a filter built for `all`.
fn restrict(w: &CMat, n: usize, seg_len: usize, all: &[usize], keep: &[usize]) -> CMat {
    let mut parts = vec![w.row_range(0, n)];
    for l in keep {
        let q = all.iter().position(|x| x == l).expect("reliable relay among forwarding relays");
        parts.push(w.row_range(n + q * seg_len, seg_len));
    }
    let refs: Vec<&CMat> = parts.iter().collect();
    CMat::vstack(&refs)
}

struct Adapted {
    power: PowerAllocation,
    relay_filters: Vec<Vec<CMat>>,
    /// SG destination filters over every relay, if trained.
    sg_dest: Option<Vec<CMat>>,
}

fn adapt_closed_form(cfg: &SystemConfig, csi: &ChannelKnowledge, relay_f: &[CMat]) -> Result<Adapted> {
    let mut p = equal_power(cfg);
    if cfg.allocation == AllocationMode::Jpa {
        let all: Vec<usize> = (0..cfg.n_relays).collect();
        let w_sr = relay_mmse_filters(relay_f, &p, cfg.sigma2, cfg.ridge)?;
        let acfg = AlternationConfig {
            max_rounds: cfg.max_rounds,
            rel_tol: cfg.rel_tol,
            ridge: cfg.ridge,
            rule: match cfg.power_rule {
                PowerUpdate::Block => PowerRule::Block([Multiplier::Constrained; 2]),
                PowerUpdate::PerParameter => PowerRule::PerParameter { lambda1: cfg.sg.lambda1, lambda2: cfg.sg.lambda2 },
            },
        };
        p = alternate(csi, &all, cfg.sigma2, Some(&w_sr), None, &p, &acfg)?.power;
    }
    let relay_filters = relay_mmse_filters(relay_f, &p, cfg.sigma2, cfg.ridge)?;
    Ok(Adapted { power: p, relay_filters, sg_dest: None })
}

fn adapt_sg(
    cfg: &SystemConfig,
    csi: &ChannelKnowledge,
    channels: &ChannelSet,
    schemes: &[CodeScheme],
    packet: u64,
) -> Result<Adapted> {
    let all: Vec<usize> = (0..cfg.n_relays).collect();
    let ctx = SgContext { csi, relays: &all };
    let mut p = equal_power(cfg);
    let mut state = initial_state(&ctx, &p);
    let sg = match cfg.allocation {
        AllocationMode::Jpa => cfg.sg,
        AllocationMode::Epa => SgConfig { gamma: 0.0, lambda1: 0.0, lambda2: 0.0, ..cfg.sg },
    };
    let mut bits = substream(cfg.seed, packet, link::training(link::PILOT_BITS));
    let mut rngs = LinkRngs::new(cfg.seed, packet, cfg.n_relays, link::training);
    for _ in 0..cfg.train_len {
        let (_, s) = random_symbols(&mut bits, cfg.n_antennas);
        let (r_sd, r_sr) = broadcast_phase(channels, &p, &s, cfg.sigma2, &mut rngs);
        let forwarded: Vec<(usize, Vec<C64>)> = all.iter().map(|&l| (l, s.clone())).collect();
        let segs = relay_phase(channels, schemes, &p, &forwarded, cfg.sigma2, &mut rngs)?;
        let sample = TrainingSample { r: stack(&r_sd, &segs), s, r_sr };
        let (st, np, _) = sg_step(&ctx, &state, &p, &sample, &sg)?;
        state = st;
        p = np;
    }
    Ok(Adapted { power: p, relay_filters: state.w_relay, sg_dest: Some(state.w_dest) })
}

/// Second SG pass once the reliable set is known: pilots are forwarded by
/// the reliable relays only, powers stay frozen, and the destination filters
/// start from the first-pass filters restricted to those relays.
fn retrain_sg(
    cfg: &SystemConfig,
    csi: &ChannelKnowledge,
    channels: &ChannelSet,
    schemes: &[CodeScheme],
    packet: u64,
    reliable: &[usize],
    p: &PowerAllocation,
    state: ReceiverState,
) -> Result<Vec<CMat>> {
    let ctx = SgContext { csi, relays: reliable };
    let sg = SgConfig { gamma: 0.0, lambda1: 0.0, lambda2: 0.0, ..cfg.sg };
    let mut state = state;
    let mut p = p.clone();
    let mut bits = substream(cfg.seed, packet, link::retraining(link::PILOT_BITS));
    let mut rngs = LinkRngs::new(cfg.seed, packet, cfg.n_relays, link::retraining);
    for _ in 0..cfg.train_len {
        let (_, s) = random_symbols(&mut bits, cfg.n_antennas);
        let (r_sd, r_sr) = broadcast_phase(channels, &p, &s, cfg.sigma2, &mut rngs);
        let forwarded: Vec<(usize, Vec<C64>)> = reliable.iter().map(|&l| (l, s.clone())).collect();
        let segs = relay_phase(channels, schemes, &p, &forwarded, cfg.sigma2, &mut rngs)?;
        let sample = TrainingSample { r: stack(&r_sd, &segs), s, r_sr };
        let (st, np, _) = sg_step(&ctx, &state, &p, &sample, &sg)?;
        state = st;
        p = np;
    }
    Ok(state.w_dest)
}

/// Runs packet `packet` of the configured scenario at `cfg.sigma2`.
pub fn run_packet(cfg: &SystemConfig, packet: u64) -> Result<PacketResult> {
    let n = cfg.n_antennas;
    let channels = packet_channels(cfg, packet);
    let schemes = packet_schemes(cfg, packet)?;

    let (csi, relay_f) = match cfg.csi {
        CsiMode::Genie => (ChannelKnowledge::genie(&channels, &schemes)?, channels.f.clone()),
        CsiMode::Estimated => {
            let est = estimate_channels(cfg, &channels, &schemes, packet)?;
            (est.knowledge(), est.f_local)
        }
    };

    let adapted = match cfg.receiver {
        ReceiverMode::ClosedForm => adapt_closed_form(cfg, &csi, &relay_f)?,
        ReceiverMode::Sg => adapt_sg(cfg, &csi, &channels, &schemes, packet)?,
    };
    let p = &adapted.power;

    // Broadcast the data block and let every relay decide.
    let mut bit_rng = substream(cfg.seed, packet, link::BITS);
    let mut rngs = LinkRngs::new(cfg.seed, packet, cfg.n_relays, |l| l);
    let mut tx_bits = Vec::with_capacity(cfg.data_len * 2 * n);
    let mut relay_bits = vec![Vec::with_capacity(cfg.data_len * 2 * n); cfg.n_relays];
    let mut relay_syms = vec![Vec::with_capacity(cfg.data_len); cfg.n_relays];
    let mut block = Vec::with_capacity(cfg.data_len);
    let mut result = PacketResult { vectors: cfg.data_len as u64, ..Default::default() };
    for _ in 0..cfg.data_len {
        let (bits, s) = random_symbols(&mut bit_rng, n);
        let (r_sd, r_sr) = broadcast_phase(&channels, p, &s, cfg.sigma2, &mut rngs);
        for (k, r) in r_sr.iter().enumerate() {
            let mut sym = Vec::with_capacity(n);
            for w in &adapted.relay_filters[k] {
                let b = demodulate(w.dot_h(r));
                relay_bits[k].extend_from_slice(&b);
                sym.push(map_pair(b[0], b[1]));
            }
            relay_syms[k].push(sym);
        }
        for (j, sj) in s.iter().enumerate() {
            let e = sj.norm_sqr();
            result.energy_broadcast += p.alpha_sd[j].norm_sqr() * e;
            result.energy_broadcast += p.alpha_sr.iter().map(|a| a[j].norm_sqr() * e).sum::<f64>();
        }
        tx_bits.extend_from_slice(&bits);
        block.push((bits, r_sd));
    }
    let reliable = reliable_set(&tx_bits, &relay_bits);
    result.reliable_count = reliable.len();
    let p_final = if reliable.is_empty() { p.clone() } else { project(p, &reliable)? };

    let seg_len = n * cfg.slots;
    let all: Vec<usize> = (0..cfg.n_relays).collect();
    let mut w_dest: Vec<CMat> = match &adapted.sg_dest {
        Some(ws) => {
            let w: Vec<CMat> = ws.iter().map(|w| restrict(w, n, seg_len, &all, &reliable)).collect();
            if reliable.len() == all.len() {
                w
            } else {
                let state = ReceiverState { w_dest: w, w_relay: adapted.relay_filters.clone() };
                retrain_sg(cfg, &csi, &channels, &schemes, packet, &reliable, &p_final, state)?
            }
        }
        None => {
            let model = LinkModel { csi: &csi, relays: &reliable, sigma2: cfg.sigma2, forwarding: Forwarding::Hard };
            destination_filters(&model.source_map(&p_final), &model.source_covariance(), n, cfg.ridge)?
        }
    };
    let dd = cfg.decision_directed && cfg.receiver == ReceiverMode::Sg;

    for (i, (bits, r_sd)) in block.iter().enumerate() {
        let forwarded: Vec<(usize, Vec<C64>)> = reliable.iter().map(|&l| (l, relay_syms[l][i].clone())).collect();
        let segs = relay_phase(&channels, &schemes, &p_final, &forwarded, cfg.sigma2, &mut rngs)?;
        for (l, sym) in &forwarded {
            let cw = encode(&schemes[*l], sym)?;
            for t in 0..cfg.slots {
                result.energy_relay += p_final.alpha_rd[*l][t].norm_sqr() * cw.matrix.column(t).norm_sqr() / n as f64;
            }
        }
        let r = stack(r_sd, &segs);
        let mut decided = Vec::with_capacity(n);
        for (j, w) in w_dest.iter().enumerate() {
            let b = demodulate(w.dot_h(&r));
            result.bit_errors += u64::from(b[0] != bits[2 * j]) + u64::from(b[1] != bits[2 * j + 1]);
            decided.push(map_pair(b[0], b[1]));
        }
        if dd {
            let mu = cfg.sg.mu / (r.norm_sqr() + 1e-9);
            for (w, sd) in w_dest.iter_mut().zip(&decided) {
                let e = sd - w.dot_h(&r);
                *w -= &grad_w(&r, e).scale_re(mu);
            }
        }
        result.bits += 2 * n as u64;
    }
    Ok(result)
}
