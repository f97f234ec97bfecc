//! Distributed Alamouti coding at the relays and the per-symbol effective
//! channels seen by the destination.
//!
//! Slot 2 of an Alamouti codeword carries conjugated symbols. The destination
//! conjugates the slot-2 received vector, which makes the stacked model
//! linear in every symbol. Under that convention the power parameter of a
//! conjugated slot is applied on air as its conjugate, so the stacked model
//! is also linear in the power parameters. Noise statistics are unchanged by
//! the conjugation.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fading::gaussian_matrix;
use crate::linalg::{CMat, C64, ONE, ZERO};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SchemeKind {
    DAlamouti,
    RAlamouti,
}

impl SchemeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SchemeKind::DAlamouti => "dalamouti",
            SchemeKind::RAlamouti => "ralamouti",
        }
    }
}

impl std::str::FromStr for SchemeKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "dalamouti" | "d-alamouti" => Ok(SchemeKind::DAlamouti),
            "ralamouti" | "r-alamouti" => Ok(SchemeKind::RAlamouti),
            other => Err(format!("unknown scheme `{other}` (expected dalamouti or ralamouti)")),
        }
    }
}

/// Unitarity tolerance for R-Alamouti randomizers.
pub const UNITARY_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct CodeScheme {
    kind: SchemeKind,
    randomizer: Option<CMat>,
}

impl CodeScheme {
    pub const N: usize = 2;
    pub const T: usize = 2;

    pub fn d_alamouti() -> Self {
        Self { kind: SchemeKind::DAlamouti, randomizer: None }
    }

    pub fn r_alamouti(randomizer: CMat) -> Result<Self> {
        if randomizer.shape() != (Self::N, Self::N) {
            return Err(Error::UnsupportedDims(format!("randomizer must be 2x2, got {:?}", randomizer.shape())));
        }
        let defect = (&randomizer.hermitian() * &randomizer).max_abs_diff(&CMat::identity(Self::N));
        if defect >= UNITARY_TOL {
            return Err(Error::InvalidConfig(format!("randomizer not unitary (defect {defect:.2e})")));
        }
        Ok(Self { kind: SchemeKind::RAlamouti, randomizer: Some(randomizer) })
    }

    pub fn kind(&self) -> SchemeKind {
        self.kind
    }

    pub fn randomizer(&self) -> Option<&CMat> {
        self.randomizer.as_ref()
    }

    pub fn n(&self) -> usize {
        Self::N
    }

    pub fn t(&self) -> usize {
        Self::T
    }
}

/// `N x T` space-time codeword plus the slots that carry conjugated symbols.
#[derive(Clone, Debug, PartialEq)]
pub struct Codeword {
    pub matrix: CMat,
    pub conj_slots: Vec<bool>,
}

/// `[[s1, -s2*], [s2, s1*]]`, left-multiplied by the randomizer for R-Alamouti.
pub fn encode(scheme: &CodeScheme, s: &[C64]) -> Result<Codeword> {
    if s.len() != CodeScheme::N {
        return Err(Error::UnsupportedDims(format!("Alamouti needs 2 symbols, got {}", s.len())));
    }
    let base = CMat::from_vec(2, 2, vec![s[0], -s[1].conj(), s[1], s[0].conj()])?;
    let matrix = match scheme.randomizer() {
        Some(u) => u * &base,
        None => base,
    };
    Ok(Codeword { matrix, conj_slots: vec![false, true] })
}

/// Haar-like random unitary: Gram-Schmidt on a complex Gaussian matrix,
/// with a second orthogonalization pass for accuracy.
pub fn draw_randomizer<R: Rng + ?Sized>(rng: &mut R, n: usize) -> CMat {
    let g = gaussian_matrix(rng, n, n);
    let mut q: Vec<CMat> = Vec::with_capacity(n);
    for j in 0..n {
        let mut v = g.column(j);
        for _ in 0..2 {
            for u in &q {
                let proj = u.dot_h(&v);
                v -= &u.scale(proj);
            }
        }
        let norm = v.norm();
        q.push(v.scale_re(1.0 / norm));
    }
    let mut out = CMat::zeros(n, n);
    for (j, col) in q.iter().enumerate() {
        out.set_column(j, col);
    }
    out
}

/// Effective channel blocks `d_{j,t}` of one relay: `blocks[j][t]` is the
/// `N x 1` vector through which symbol `j` reaches the destination in slot
/// `t` (after the slot conjugation convention).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EffectiveBlocks {
    pub blocks: Vec<Vec<CMat>>,
}

impl EffectiveBlocks {
    pub fn n_symbols(&self) -> usize {
        self.blocks.len()
    }

    pub fn n_slots(&self) -> usize {
        self.blocks.first().map_or(0, Vec::len)
    }

    pub fn block(&self, j: usize, t: usize) -> &CMat {
        &self.blocks[j][t]
    }

    /// `D_j = diag[d_{j,1}, ..., d_{j,T}]`, shape `(N*T) x T`.
    pub fn d_matrix(&self, j: usize) -> CMat {
        let refs: Vec<&CMat> = self.blocks[j].iter().collect();
        CMat::block_diag(&refs)
    }

    pub fn zeros(n: usize, t: usize) -> Self {
        Self { blocks: vec![vec![CMat::zeros(n, 1); t]; n] }
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.blocks
            .iter()
            .flatten()
            .zip(other.blocks.iter().flatten())
            .map(|(a, b)| a.max_abs_diff(b))
            .fold(0.0, f64::max)
    }
}

/// Effective blocks for a relay transmitting through `g`.
pub fn build_effective_d(scheme: &CodeScheme, g: &CMat) -> Result<EffectiveBlocks> {
    let n = scheme.n();
    if g.shape() != (n, n) {
        return Err(Error::UnsupportedDims(format!("relay channel must be {n}x{n}, got {:?}", g.shape())));
    }
    let mut blocks = Vec::with_capacity(n);
    for j in 0..n {
        let mut basis = vec![ZERO; n];
        basis[j] = ONE;
        let cw = encode(scheme, &basis)?;
        let per_slot = (0..scheme.t())
            .map(|t| {
                let v = g * &cw.matrix.column(t);
                if cw.conj_slots[t] {
                    v.conj()
                } else {
                    v
                }
            })
            .collect();
        blocks.push(per_slot);
    }
    Ok(EffectiveBlocks { blocks })
}

/// `B_j = diag[h_j, D_{j,R_1}, ..., D_{j,R_L}]` for every symbol `j`, shape
/// `(N + L*N*T) x (1 + L*T)`.
pub fn build_b(h_cols: &[CMat], relays: &[&EffectiveBlocks]) -> Result<Vec<CMat>> {
    let n = h_cols.len();
    for (j, h) in h_cols.iter().enumerate() {
        if h.shape() != (n, 1) {
            return Err(Error::UnsupportedDims(format!("h_{j} must be {n}x1")));
        }
    }
    for eff in relays {
        if eff.n_symbols() != n || eff.blocks.iter().flatten().any(|b| b.shape() != (n, 1)) {
            return Err(Error::UnsupportedDims("effective blocks inconsistent with direct link".into()));
        }
    }
    Ok((0..n)
        .map(|j| {
            let ds: Vec<CMat> = relays.iter().map(|e| e.d_matrix(j)).collect();
            let mut parts: Vec<&CMat> = vec![&h_cols[j]];
            parts.extend(ds.iter());
            CMat::block_diag(&parts)
        })
        .collect())
}
