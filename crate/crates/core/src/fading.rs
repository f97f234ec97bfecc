//! Quasi-static Rayleigh block fading, AWGN, and seeded random substreams.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::linalg::{CMat, C64};

pub type SimRng = ChaCha8Rng;

/// Substream identifiers. Every (packet, link) pair gets its own ChaCha
/// stream so that runs differing only in the receiver algorithm consume
/// identical channel and noise samples.
pub mod link {
    pub const CHANNELS: u64 = 0;
    pub const RANDOMIZER: u64 = 1;
    pub const BITS: u64 = 2;
    pub const SOURCE_DEST: u64 = 3;
    pub const PILOT_BITS: u64 = 4;
    pub const SOURCE_RELAY_BASE: u64 = 1 << 8;
    pub const RELAY_DEST_BASE: u64 = 1 << 16;

    pub fn source_relay(k: usize) -> u64 {
        SOURCE_RELAY_BASE + k as u64
    }

    pub fn relay_dest(k: usize) -> u64 {
        RELAY_DEST_BASE + k as u64
    }

    /// Same link during SG pilot training.
    pub fn training(link: u64) -> u64 {
        link | 1 << 32
    }

    /// Same link during channel-estimation pilots.
    pub fn estimation(link: u64) -> u64 {
        link | 2 << 32
    }

    /// Same link while the destination retrains on the reliable relays.
    pub fn retraining(link: u64) -> u64 {
        link | 3 << 32
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent random stream for one (packet, link) pair of a seeded run.
pub fn substream(seed: u64, packet: u64, link: u64) -> SimRng {
    let mut rng = SimRng::seed_from_u64(splitmix64(seed ^ splitmix64(packet)));
    rng.set_stream(link);
    rng
}

/// One block-fading realization: `H` (source to destination), `F_k`
/// (source to relay k) and `G_k` (relay k to destination), all `N x N`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelSet {
    pub h: CMat,
    pub f: Vec<CMat>,
    pub g: Vec<CMat>,
}

impl ChannelSet {
    pub fn n_antennas(&self) -> usize {
        self.h.rows()
    }

    pub fn n_relays(&self) -> usize {
        self.f.len()
    }

    /// All links set to the identity (AWGN-only operation).
    pub fn identity(n: usize, n_relays: usize) -> Self {
        Self {
            h: CMat::identity(n),
            f: vec![CMat::identity(n); n_relays],
            g: vec![CMat::identity(n); n_relays],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseParams {
    pub sigma2: f64,
}

#[inline]
pub fn standard_cn<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let x: f64 = rng.sample(StandardNormal);
    let y: f64 = rng.sample(StandardNormal);
    C64::new(x, y) * std::f64::consts::FRAC_1_SQRT_2
}

pub fn gaussian_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> CMat {
    let data = (0..rows * cols).map(|_| standard_cn(rng)).collect();
    CMat::from_vec(rows, cols, data).expect("finite gaussian samples")
}

/// Draws `H`, then `F_1..F_nr`, then `G_1..G_nr`, each entry CN(0, 1).
pub fn draw_channels<R: Rng + ?Sized>(rng: &mut R, n: usize, n_relays: usize) -> ChannelSet {
    let h = gaussian_matrix(rng, n, n);
    let f = (0..n_relays).map(|_| gaussian_matrix(rng, n, n)).collect();
    let g = (0..n_relays).map(|_| gaussian_matrix(rng, n, n)).collect();
    ChannelSet { h, f, g }
}

/// `len` i.i.d. CN(0, sigma2) samples as a column vector.
pub fn draw_noise<R: Rng + ?Sized>(rng: &mut R, len: usize, sigma2: f64) -> CMat {
    let k = sigma2.sqrt();
    let data: Vec<C64> = (0..len).map(|_| standard_cn(rng) * k).collect();
    CMat::col(&data)
}

/// Noise variance for a given Eb/N0 with unit symbol energy:
/// `sigma2 = 1 / (bits_per_symbol * code_rate * 10^(ebn0_db / 10))`.
pub fn ebn0_to_sigma2(ebn0_db: f64, bits_per_symbol: u32, code_rate: f64) -> f64 {
    debug_assert!(bits_per_symbol >= 1 && code_rate > 0.0 && code_rate <= 1.0);
    1.0 / (f64::from(bits_per_symbol) * code_rate * 10f64.powf(ebn0_db / 10.0))
}
