//! Command-line front end: resolves a run from presets, a key=value config
//! file and flags, runs every curve and writes CSVs, a manifest and a
//! gnuplot script.

use std::ffi::OsString;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::Parser;
use serde::{Deserialize, Serialize};

use crate::dstc::SchemeKind;
use crate::engine::{sweep, write_csv, AllocationMode, BerPoint, CsiMode, ReceiverMode, SystemConfig};
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const PLOT_FILE: &str = "plot.gp";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// JPA and EPA with D-Alamouti, one and two relays.
    Fig2,
    /// One relay, D- and R-Alamouti, JPA and EPA.
    Fig3,
    /// A single curve described by the config and flags.
    Custom,
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Preset::Fig2 => "fig2",
            Preset::Fig3 => "fig3",
            Preset::Custom => "custom",
        })
    }
}

#[derive(Debug, Parser)]
#[command(name = "coopsim", version, about = "BER sweeps for cooperative DF MIMO with distributed Alamouti coding")]
pub struct Args {
    #[arg(long, value_enum, default_value_t = Preset::Custom)]
    pub preset: Preset,
    /// Eb/N0 grid in dB as `start:step:stop` (or a single value).
    #[arg(long, default_value = "0:2:20")]
    pub ebn0: String,
    #[arg(long)]
    pub packets: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub n_relays: Option<usize>,
    /// dalamouti or ralamouti
    #[arg(long)]
    pub scheme: Option<String>,
    /// jpa or epa
    #[arg(long)]
    pub alloc: Option<String>,
    /// closed or sg
    #[arg(long)]
    pub receiver: Option<String>,
    /// genie or estimated
    #[arg(long)]
    pub csi: Option<String>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Flat key=value file applied before the flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Rerun the spec recorded in a manifest.json.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

/// Fully resolved run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    pub preset: Preset,
    pub base: SystemConfig,
    pub ebn0: Vec<f64>,
    pub out: PathBuf,
}

impl RunSpec {
    /// One config per output curve.
    pub fn curves(&self) -> Vec<SystemConfig> {
        let with = |n_relays, scheme, allocation| SystemConfig { n_relays, scheme, allocation, ..self.base.clone() };
        let allocs = [AllocationMode::Jpa, AllocationMode::Epa];
        match self.preset {
            Preset::Custom => vec![self.base.clone()],
            Preset::Fig2 => [1, 2]
                .into_iter()
                .flat_map(|n| allocs.map(|a| with(n, SchemeKind::DAlamouti, a)))
                .collect(),
            Preset::Fig3 => [SchemeKind::DAlamouti, SchemeKind::RAlamouti]
                .into_iter()
                .flat_map(|s| allocs.map(|a| with(1, s, a)))
                .collect(),
        }
    }
}

/// CSV file name of a curve.
pub fn curve_file(cfg: &SystemConfig) -> String {
    format!("ber_{}_{}_nr{}.csv", cfg.mode_label(), cfg.scheme.as_str(), cfg.n_relays)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveRecord {
    pub file: String,
    pub config: SystemConfig,
    pub points: Vec<BerPoint>,
}

/// Contents of `manifest.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub spec: RunSpec,
    pub curves: Vec<CurveRecord>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Usage(format!("{}: bad manifest: {e}", path.display())))
    }
}

fn io_err(path: &Path, e: impl fmt::Display) -> Error {
    Error::Io { path: path.display().to_string(), message: e.to_string() }
}

/// Expands `start:step:stop` (inclusive) or a single number.
pub fn parse_ebn0(text: &str) -> Result<Vec<f64>> {
    let num = |s: &str| {
        f64::from_str(s.trim())
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| Error::Usage(format!("bad Eb/N0 value `{s}` in `{text}`")))
    };
    let parts: Vec<&str> = text.split(':').collect();
    match parts.as_slice() {
        [one] => Ok(vec![num(one)?]),
        [a, b, c] => {
            let (start, step, stop) = (num(a)?, num(b)?, num(c)?);
            if step <= 0.0 {
                return Err(Error::Usage(format!("Eb/N0 step must be positive in `{text}`")));
            }
            if stop < start {
                return Err(Error::Usage(format!("empty Eb/N0 list `{text}`")));
            }
            let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
            Ok((0..count).map(|i| start + i as f64 * step).collect())
        }
        _ => Err(Error::Usage(format!("expected `start:step:stop`, got `{text}`"))),
    }
}

fn flag<T: FromStr<Err = String>>(name: &str, v: &Option<String>) -> Result<Option<T>> {
    v.as_deref().map(|s| T::from_str(s).map_err(|e| Error::Usage(format!("--{name}: {e}")))).transpose()
}

/// Builds the run from parsed flags. Precedence: defaults, then the config
/// file, then flags.
pub fn resolve(args: Args) -> Result<RunSpec> {
    if let Some(path) = &args.manifest {
        let others = args.packets.is_some()
            || args.seed.is_some()
            || args.n_relays.is_some()
            || args.scheme.is_some()
            || args.alloc.is_some()
            || args.receiver.is_some()
            || args.csi.is_some()
            || args.config.is_some()
            || args.preset != Preset::Custom;
        if others {
            return Err(Error::Usage("--manifest only combines with --out".into()));
        }
        let mut spec = Manifest::load(path)?.spec;
        if let Some(out) = args.out {
            spec.out = out;
        }
        return Ok(spec);
    }
    let out = args.out.ok_or_else(|| Error::Usage("--out <dir> is required".into()))?;
    let mut base = SystemConfig::default();
    if let Some(path) = &args.config {
        let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        base.apply_kv(&text).map_err(|e| Error::Usage(format!("{}: {e}", path.display())))?;
    }
    if args.preset != Preset::Custom {
        let varied = [("n-relays", args.n_relays.is_some()), ("scheme", args.scheme.is_some()), ("alloc", args.alloc.is_some())];
        if let Some((name, _)) = varied.iter().find(|(_, given)| *given) {
            return Err(Error::Usage(format!("--{name} is set by --preset {}", args.preset)));
        }
        base.n_antennas = 2;
        base.slots = 2;
    }
    if let Some(v) = args.packets {
        base.packets = v;
    }
    if let Some(v) = args.seed {
        base.seed = v;
    }
    if let Some(v) = args.n_relays {
        base.n_relays = v;
    }
    if let Some(v) = flag::<SchemeKind>("scheme", &args.scheme)? {
        base.scheme = v;
    }
    if let Some(v) = flag::<AllocationMode>("alloc", &args.alloc)? {
        base.allocation = v;
    }
    if let Some(v) = flag::<ReceiverMode>("receiver", &args.receiver)? {
        base.receiver = v;
    }
    if let Some(v) = flag::<CsiMode>("csi", &args.csi)? {
        base.csi = v;
    }
    let spec = RunSpec { preset: args.preset, base, ebn0: parse_ebn0(&args.ebn0)?, out };
    for cfg in spec.curves() {
        cfg.validate().map_err(|e| Error::Usage(e.to_string()))?;
    }
    Ok(spec)
}

/// Parses an argv (program name first) into a run.
pub fn parse_args<I, T>(argv: I) -> Result<RunSpec>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = Args::try_parse_from(argv).map_err(|e| Error::Usage(e.to_string()))?;
    resolve(args)
}

/// Writes `bytes` to `path` through a temp file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| io_err(dir, e))?;
    tmp.write_all(bytes).map_err(|e| io_err(path, e))?;
    tmp.persist(path).map_err(|e| io_err(path, e.error))?;
    Ok(())
}

/// gnuplot script drawing every curve on log axes.
pub fn plot_script(curves: &[CurveRecord]) -> String {
    let mut s = String::from(
        "# gnuplot -p plot.gp\n\
         set datafile separator ','\n\
         set logscale y\n\
         set format y '10^{%L}'\n\
         set xlabel 'Eb/N0 (dB)'\n\
         set ylabel 'BER'\n\
         set grid\n\
         set key bottom left\n\
         plot ",
    );
    let lines: Vec<String> = curves
        .iter()
        .map(|c| {
            let title = format!("{} {} n_r={}", c.config.mode_label(), c.config.scheme.as_str(), c.config.n_relays);
            format!("'{}' using 1:2 skip 1 with linespoints title '{title}'", c.file)
        })
        .collect();
    s.push_str(&lines.join(", \\\n     "));
    s.push('\n');
    s
}

/// Runs every curve of `spec` and writes its outputs. Returns the manifest.
pub fn run(spec: &RunSpec) -> Result<Manifest> {
    if spec.ebn0.is_empty() {
        return Err(Error::Usage("empty Eb/N0 list".into()));
    }
    std::fs::create_dir_all(&spec.out).map_err(|e| io_err(&spec.out, e))?;
    let mut curves = Vec::new();
    for cfg in spec.curves() {
        let file = curve_file(&cfg);
        let named = |e: Error| Error::Curve { curve: file.clone(), source: Box::new(e) };
        let points = sweep(&cfg, &spec.ebn0).map_err(named)?;
        let mut csv = Vec::new();
        write_csv(&mut csv, &cfg, &points).map_err(|e| named(io_err(Path::new(&file), e)))?;
        write_atomic(&spec.out.join(&file), &csv)?;
        eprintln!("wrote {file}");
        curves.push(CurveRecord { file, config: cfg, points });
    }
    let manifest = Manifest { version: env!("CARGO_PKG_VERSION").into(), spec: spec.clone(), curves };
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| io_err(Path::new(MANIFEST_FILE), e))?;
    write_atomic(&spec.out.join(MANIFEST_FILE), json.as_bytes())?;
    write_atomic(&spec.out.join(PLOT_FILE), plot_script(&manifest.curves).as_bytes())?;
    Ok(manifest)
}

/// Entry point of the binary; returns the process exit code.
pub fn main_with<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = match Args::try_parse_from(argv) {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match resolve(args).and_then(|spec| run(&spec)) {
        Ok(_) => 0,
        Err(e @ Error::Usage(_)) => {
            eprintln!("coopsim: {e}");
            2
        }
        Err(e) => {
            eprintln!("coopsim: {e}");
            1
        }
    }
}
