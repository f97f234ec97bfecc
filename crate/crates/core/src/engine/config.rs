use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::adapt::SgConfig;
use crate::dstc::SchemeKind;
use crate::error::{Error, Result};
use crate::fading::ebn0_to_sigma2;

macro_rules! string_enum {
    ($name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        impl $name {
            pub fn as_str(self) -> &'static str {
                match self {
                    $($name::$variant => $text,)+
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = String;
            fn from_str(s: &str) -> std::result::Result<Self, String> {
                match s.to_ascii_lowercase().as_str() {
                    $($text => Ok($name::$variant),)+
                    other => Err(format!(
                        "unknown {} `{other}` (expected one of: {})",
                        stringify!($name),
                        [$($text),+].join(", ")
                    )),
                }
            }
        }
    };
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ReceiverMode {
    /// Wiener filters and fixed-point power updates from channel knowledge.
    ClosedForm,
    /// Pilot-trained SG filters and powers.
    Sg,
}
string_enum!(ReceiverMode { ClosedForm => "closed", Sg => "sg" });

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CsiMode {
    Genie,
    Estimated,
}
string_enum!(CsiMode { Genie => "genie", Estimated => "estimated" });

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AllocationMode {
    /// Joint power allocation.
    Jpa,
    /// Equal power allocation.
    Epa,
}
string_enum!(AllocationMode { Jpa => "jpa", Epa => "epa" });

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RandomizerMode {
    /// Fresh R-Alamouti randomizers for every packet.
    PerPacket,
    /// One randomizer per relay for the whole run.
    PerRun,
}
string_enum!(RandomizerMode { PerPacket => "packet", PerRun => "run" });

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PowerUpdate {
    /// Exact constrained minimizer of the total MSE per constraint group.
    Block,
    /// Each power set from its own path's normal equation, then projected.
    PerParameter,
}
string_enum!(PowerUpdate { Block => "block", PerParameter => "per-parameter" });

/// Scenario constants of one simulated curve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    pub n_antennas: usize,
    pub slots: usize,
    pub n_relays: usize,
    pub total_power: f64,
    /// Noise variance used by [`crate::engine::run_packet`]; sweeps derive it from Eb/N0.
    pub sigma2: f64,
    /// Rate factor of the Eb/N0 convention.
    pub code_rate: f64,
    pub scheme: SchemeKind,
    pub randomizer: RandomizerMode,
    pub receiver: ReceiverMode,
    pub csi: CsiMode,
    pub allocation: AllocationMode,
    pub sg: SgConfig,
    pub beta: f64,
    pub ridge: f64,
    /// Power update of the closed-form JPA alternation.
    pub power_rule: PowerUpdate,
    pub max_rounds: usize,
    pub rel_tol: f64,
    /// Keep adapting destination filters on sliced data decisions (SG only).
    pub decision_directed: bool,
    /// Force every channel to the identity (AWGN-only links).
    pub awgn_only: bool,
    pub packets: u64,
    pub seed: u64,
    pub train_len: usize,
    pub data_len: usize,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            n_antennas: 2,
            slots: 2,
            n_relays: 1,
            total_power: 1.0,
            sigma2: 1.0,
            code_rate: 1.0,
            scheme: SchemeKind::DAlamouti,
            randomizer: RandomizerMode::PerPacket,
            receiver: ReceiverMode::Sg,
            csi: CsiMode::Genie,
            allocation: AllocationMode::Jpa,
            sg: SgConfig::default(),
            beta: 0.01,
            ridge: crate::mmse::DEFAULT_RIDGE,
            power_rule: PowerUpdate::Block,
            max_rounds: 20,
            rel_tol: 1e-4,
            decision_directed: false,
            awgn_only: false,
            packets: 1000,
            seed: 1,
            train_len: 500,
            data_len: 1000,
        }
    }
}

impl SystemConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.n_antennas != 2 || self.slots != 2 {
            return bad(format!(
                "only N = T = 2 (Alamouti) is supported, got N = {}, T = {}",
                self.n_antennas, self.slots
            ));
        }
        if !(self.total_power > 0.0 && self.total_power.is_finite()) {
            return bad(format!("total_power must be positive, got {}", self.total_power));
        }
        if !(self.sigma2 > 0.0 && self.sigma2.is_finite()) {
            return bad(format!("sigma2 must be positive, got {}", self.sigma2));
        }
        if !(self.code_rate > 0.0 && self.code_rate <= 1.0) {
            return bad(format!("code_rate must lie in (0, 1], got {}", self.code_rate));
        }
        if !(self.beta > 0.0) || !(self.ridge >= 0.0) || !(self.rel_tol >= 0.0) {
            return bad("beta must be positive, ridge and rel_tol non-negative".into());
        }
        if self.packets == 0 || self.data_len == 0 {
            return bad("packets and data_len must be at least 1".into());
        }
        let needs_training = self.receiver == ReceiverMode::Sg || self.csi == CsiMode::Estimated;
        if needs_training && self.train_len == 0 {
            return bad("train_len must be at least 1 for SG receivers or estimated CSI".into());
        }
        self.sg.validate()
    }

    /// Noise variance at `ebn0_db`. The per-stream reference energy is
    /// `P_T / N`, the energy each source antenna radiates with all power on
    /// the direct link, so a direct AWGN link follows the textbook QPSK
    /// curve.
    pub fn sigma2_at(&self, ebn0_db: f64) -> f64 {
        self.total_power / self.n_antennas as f64 * ebn0_to_sigma2(ebn0_db, 2, self.code_rate)
    }

    /// Curve label `alloc-receiver-csi`.
    pub fn mode_label(&self) -> String {
        format!("{}-{}-{}", self.allocation, self.receiver, self.csi)
    }

    /// Flat `key = value` text, one field per line.
    pub fn to_kv(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.kv_pairs() {
            out.push_str(&format!("{k} = {v}\n"));
        }
        out
    }

    fn kv_pairs(&self) -> Vec<(&'static str, String)> {
        vec![
            ("n_antennas", self.n_antennas.to_string()),
            ("slots", self.slots.to_string()),
            ("n_relays", self.n_relays.to_string()),
            ("total_power", self.total_power.to_string()),
            ("sigma2", self.sigma2.to_string()),
            ("code_rate", self.code_rate.to_string()),
            ("scheme", self.scheme.as_str().to_string()),
            ("randomizer", self.randomizer.to_string()),
            ("receiver", self.receiver.to_string()),
            ("csi", self.csi.to_string()),
            ("allocation", self.allocation.to_string()),
            ("mu", self.sg.mu.to_string()),
            ("gamma", self.sg.gamma.to_string()),
            ("lambda1", self.sg.lambda1.to_string()),
            ("lambda2", self.sg.lambda2.to_string()),
            ("relay_coupling", self.sg.relay_coupling.to_string()),
            ("beta", self.beta.to_string()),
            ("ridge", self.ridge.to_string()),
            ("power_rule", self.power_rule.to_string()),
            ("max_rounds", self.max_rounds.to_string()),
            ("rel_tol", self.rel_tol.to_string()),
            ("decision_directed", self.decision_directed.to_string()),
            ("awgn_only", self.awgn_only.to_string()),
            ("packets", self.packets.to_string()),
            ("seed", self.seed.to_string()),
            ("train_len", self.train_len.to_string()),
            ("data_len", self.data_len.to_string()),
        ]
    }

    /// Sets one field from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
        where
            T::Err: fmt::Display,
        {
            value.parse::<T>().map_err(|e| Error::InvalidConfig(format!("bad value `{value}` for `{key}`: {e}")))
        }
        match key {
            "n_antennas" => self.n_antennas = parse(key, value)?,
            "slots" => self.slots = parse(key, value)?,
            "n_relays" => self.n_relays = parse(key, value)?,
            "total_power" => self.total_power = parse(key, value)?,
            "sigma2" => self.sigma2 = parse(key, value)?,
            "code_rate" => self.code_rate = parse(key, value)?,
            "scheme" => self.scheme = parse(key, value)?,
            "randomizer" => self.randomizer = parse(key, value)?,
            "receiver" => self.receiver = parse(key, value)?,
            "csi" => self.csi = parse(key, value)?,
            "allocation" => self.allocation = parse(key, value)?,
            "mu" => self.sg.mu = parse(key, value)?,
            "gamma" => self.sg.gamma = parse(key, value)?,
            "lambda1" => self.sg.lambda1 = parse(key, value)?,
            "lambda2" => self.sg.lambda2 = parse(key, value)?,
            "relay_coupling" => self.sg.relay_coupling = parse(key, value)?,
            "beta" => self.beta = parse(key, value)?,
            "ridge" => self.ridge = parse(key, value)?,
            "power_rule" => self.power_rule = parse(key, value)?,
            "max_rounds" => self.max_rounds = parse(key, value)?,
            "rel_tol" => self.rel_tol = parse(key, value)?,
            "decision_directed" => self.decision_directed = parse(key, value)?,
            "awgn_only" => self.awgn_only = parse(key, value)?,
            "packets" => self.packets = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "train_len" => self.train_len = parse(key, value)?,
            "data_len" => self.data_len = parse(key, value)?,
            other => return Err(Error::InvalidConfig(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines on top of `self`. Blank lines and lines
    /// starting with `#` are skipped.
    pub fn apply_kv(&mut self, text: &str) -> Result<()> {
        for (no, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::InvalidConfig(format!("line {}: expected `key = value`", no + 1)))?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }
}
