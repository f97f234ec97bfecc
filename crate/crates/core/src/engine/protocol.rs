//! The two transmission phases of one symbol vector.

use crate::dstc::{encode, CodeScheme};
use crate::error::Result;
use crate::fading::{draw_noise, link, substream, ChannelSet, SimRng};
use crate::linalg::{CMat, C64};
use crate::power::PowerAllocation;

/// Noise streams of every link for one packet phase.
pub struct LinkRngs {
    pub sd: SimRng,
    pub sr: Vec<SimRng>,
    pub rd: Vec<SimRng>,
}

impl LinkRngs {
    /// `phase` maps a base link id to the id used for this phase (data,
    /// training or estimation pilots).
    pub fn new(seed: u64, packet: u64, n_relays: usize, phase: fn(u64) -> u64) -> Self {
        Self {
            sd: substream(seed, packet, phase(link::SOURCE_DEST)),
            sr: (0..n_relays).map(|k| substream(seed, packet, phase(link::source_relay(k)))).collect(),
            rd: (0..n_relays).map(|k| substream(seed, packet, phase(link::relay_dest(k)))).collect(),
        }
    }
}

fn scaled(alpha: &[C64], s: &[C64]) -> CMat {
    let v: Vec<C64> = alpha.iter().zip(s).map(|(a, s)| a * s).collect();
    CMat::col(&v)
}

/// Source broadcast: `r_sd = H A_sd s + n_sd` and `r_sr_k = F_k A_sr_k s + n_sr_k`.
pub fn broadcast_phase(
    channels: &ChannelSet,
    p: &PowerAllocation,
    s: &[C64],
    sigma2: f64,
    rngs: &mut LinkRngs,
) -> (CMat, Vec<CMat>) {
    let n = s.len();
    let r_sd = &(&channels.h * &scaled(&p.alpha_sd, s)) + &draw_noise(&mut rngs.sd, n, sigma2);
    let r_sr = channels
        .f
        .iter()
        .zip(&p.alpha_sr)
        .zip(rngs.sr.iter_mut())
        .map(|((f, a), rng)| &(f * &scaled(a, s)) + &draw_noise(rng, n, sigma2))
        .collect();
    (r_sd, r_sr)
}

/// Cooperation phase. Each `(l, symbols)` entry is a forwarding relay and the
/// symbols it re-encodes. Returns each relay's `N*T` destination segment
/// with slot conjugation applied; silent relays draw no noise.
pub fn relay_phase(
    channels: &ChannelSet,
    schemes: &[CodeScheme],
    p: &PowerAllocation,
    forwarded: &[(usize, Vec<C64>)],
    sigma2: f64,
    rngs: &mut LinkRngs,
) -> Result<Vec<(usize, CMat)>> {
    forwarded
        .iter()
        .map(|(l, sym)| {
            let l = *l;
            let cw = encode(&schemes[l], sym)?;
            let n = sym.len();
            let slots = cw.conj_slots.len();
            let mut seg = CMat::zeros(n * slots, 1);
            for t in 0..slots {
                let conj = cw.conj_slots[t];
                let gain = if conj { p.alpha_rd[l][t].conj() } else { p.alpha_rd[l][t] };
                let mut y = &(&channels.g[l] * &cw.matrix.column(t).scale(gain)) + &draw_noise(&mut rngs.rd[l], n, sigma2);
                if conj {
                    y = y.conj();
                }
                seg.set_row_range(t * n, &y);
            }
            Ok((l, seg))
        })
        .collect()
}

/// Relays whose detected bits match the transmitted bits exactly.
pub fn reliable_set(tx_bits: &[u8], relay_bits: &[Vec<u8>]) -> Vec<usize> {
    relay_bits.iter().enumerate().filter(|(_, b)| b.as_slice() == tx_bits).map(|(k, _)| k).collect()
}

/// `[r_sd; r_R1; ...; r_RL]`.
pub fn stack(r_sd: &CMat, segments: &[(usize, CMat)]) -> CMat {
    let mut parts = vec![r_sd];
    parts.extend(segments.iter().map(|(_, s)| s));
    CMat::vstack(&parts)
}
