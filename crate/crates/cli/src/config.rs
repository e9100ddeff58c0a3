//! Run configuration: a TOML document with one table per concern.
//!
//! ```toml
//! kind = "scan"                 # optional; must match the subcommand
//! initial = "g,5"
//!
//! [model]                       # or [ion], never both
//! omega0 = 2.2
//! omega = 1.0
//! gamma = -0.4
//! g = 0.1
//!
//! [scan]
//! parameter = "omega0"          # omega0 | gamma | g | detuning_ratio
//! start = 2.2
//! stop = 2.45
//! step = 0.001
//! observable = "P_e_8"          # n_mean | sigma_pp | parity | P_<label>_<n>
//! time = { channel = { k = 3, n = 5, branch = "plus" }, at = 2.317 }
//!
//! [numerics]
//! tol = 1e-9                    # n_max, workers, convergence_check
//! ```
//!
//! Model units are arbitrary (ω = 1 in all shipped examples). Ion
//! frequencies are ordinary frequencies in kHz and times are in ms.

use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use rabi_stark::effective::Branch;
use rabi_stark::experiments::{InitialState, Observable, PeakPolarity, SweptParameter};
use rabi_stark::models::ModelParams;

use crate::error::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    Scan,
    Trace,
    IonCompare,
    Channels,
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Kind::Scan => "scan",
            Kind::Trace => "trace",
            Kind::IonCompare => "ion-compare",
            Kind::Channels => "channels",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub kind: Option<Kind>,
    pub initial: Option<InitialState>,
    pub model: Option<ModelBlock>,
    pub ion: Option<IonBlock>,
    pub scan: Option<ScanBlock>,
    pub trace: Option<TraceBlock>,
    pub compare: Option<CompareBlock>,
    pub channels: Option<ChannelsBlock>,
    pub dissipation: Option<DissipationBlock>,
    #[serde(default)]
    pub numerics: Numerics,
    #[serde(default)]
    pub output: OutputBlock,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelBlock {
    pub omega0: f64,
    #[serde(default = "one")]
    pub omega: f64,
    pub gamma: f64,
    pub g: f64,
}

impl ModelBlock {
    pub fn params(&self) -> rabi_stark::Result<ModelParams> {
        ModelParams::new(self.omega0, self.omega, self.gamma, self.g)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IonBlock {
    pub nu_khz: f64,
    pub eta: f64,
    pub omega_s_khz: f64,
    /// Largest accepted |Ω_b/Ω_r − required ratio| for explicit drives.
    #[serde(default = "default_balance")]
    pub balance_tolerance: f64,
    /// Design the drives from target model ratios.
    pub target: Option<IonTargetBlock>,
    /// Or give the drives explicitly.
    pub drives: Option<DrivesBlock>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IonTargetBlock {
    pub gamma_ratio: f64,
    pub g_ratio: f64,
    pub omega0_ratio: f64,
}

/// Phases are in units of π.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DrivesBlock {
    pub omega_r_khz: f64,
    pub omega_b_khz: f64,
    pub delta_r_khz: f64,
    pub delta_b_khz: f64,
    #[serde(default = "minus_one")]
    pub phi_r: f64,
    #[serde(default = "minus_one")]
    pub phi_b: f64,
    pub phi_s: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelBlock {
    pub k: usize,
    pub n: usize,
    pub branch: Branch,
}

/// Evolution time of each scan point: `fixed`, or a channel's transfer
/// time, evaluated per point or once at swept value `at`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeBlock {
    pub fixed: Option<f64>,
    pub channel: Option<ChannelBlock>,
    pub at: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanBlock {
    pub parameter: SweptParameter,
    pub start: f64,
    pub stop: f64,
    pub step: f64,
    pub observable: Observable,
    pub time: TimeBlock,
    #[serde(default)]
    pub polarity: PeakPolarity,
    #[serde(default = "default_prominence")]
    pub min_prominence: f64,
}

/// Time window `[t_start, t_end]`, or `transfers` multiples of a
/// channel's transfer time.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceBlock {
    #[serde(default)]
    pub t_start: f64,
    pub t_end: Option<f64>,
    pub transfers: Option<f64>,
    pub channel: Option<ChannelBlock>,
    pub samples: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareBlock {
    pub t_end_ms: f64,
    pub samples: usize,
    #[serde(default)]
    pub tracked: Vec<InitialState>,
    pub partner: Option<InitialState>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelsBlock {
    pub k: usize,
    #[serde(default)]
    pub n_from: usize,
    pub n_to: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DissipationBlock {
    pub kappa: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Numerics {
    /// Fock truncation; chosen from the initial state and channel when absent.
    pub n_max: Option<usize>,
    #[serde(default = "default_tol")]
    pub tol: f64,
    pub workers: Option<usize>,
    #[serde(default = "yes")]
    pub convergence_check: bool,
}

impl Default for Numerics {
    fn default() -> Self {
        Self {
            n_max: None,
            tol: default_tol(),
            workers: None,
            convergence_check: true,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    pub dir: Option<PathBuf>,
}

fn one() -> f64 {
    1.0
}

fn minus_one() -> f64 {
    -1.0
}

fn yes() -> bool {
    true
}

fn default_tol() -> f64 {
    rabi_stark::dynamics::DEFAULT_TOL
}

fn default_prominence() -> f64 {
    rabi_stark::experiments::DEFAULT_PROMINENCE
}

fn default_balance() -> f64 {
    rabi_stark::models::BALANCE_TOLERANCE
}

/// Applies `path.to.key=value` overrides; the value is read as a TOML
/// value and falls back to a bare string.
pub fn apply_overrides(doc: &mut toml::Table, overrides: &[String]) -> Result<(), CliError> {
    for o in overrides {
        let (path, raw) = o
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("--set expects key=value, got `{o}`")))?;
        let value = format!("v = {raw}")
            .parse::<toml::Table>()
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(raw.trim().to_string()));
        let keys: Vec<&str> = path.trim().split('.').collect();
        let (last, parents) = keys.split_last().expect("split yields at least one key");
        let mut table = &mut *doc;
        for (i, k) in parents.iter().enumerate() {
            let entry = table
                .entry(k.to_string())
                .or_insert_with(|| toml::Value::Table(toml::Table::new()));
            table = entry.as_table_mut().ok_or_else(|| {
                CliError::Config(format!("--set {path}: `{}` is not a table", keys[..=i].join(".")))
            })?;
        }
        table.insert(last.to_string(), value);
    }
    Ok(())
}

/// Parses a configuration, applies overrides and checks it against the
/// requested kind. Defaults are filled in.
pub fn parse_config(text: &str, overrides: &[String], kind: Kind) -> Result<RunConfig, CliError> {
    let mut doc: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| CliError::Config(format!("syntax error: {e}")))?;
    apply_overrides(&mut doc, overrides)?;
    let mut cfg: RunConfig = serde_path_to_error::deserialize(toml::Value::Table(doc))
        .map_err(|e| CliError::Config(format!("at `{}`: {}", e.path(), e.inner())))?;
    match cfg.kind {
        Some(k) if k != kind => {
            return Err(CliError::Config(format!(
                "`kind` is \"{k}\" but the {kind} subcommand was used"
            )))
        }
        _ => cfg.kind = Some(kind),
    }
    cfg.validate(kind)?;
    Ok(cfg)
}

fn missing(path: &str, kind: Kind) -> CliError {
    CliError::Config(format!("`{path}` is required for a {kind} run"))
}

fn unused(path: &str, kind: Kind) -> CliError {
    CliError::Config(format!("`{path}` is not used by a {kind} run"))
}

impl RunConfig {
    pub fn kind(&self) -> Kind {
        self.kind.expect("set by parse_config")
    }

    fn validate(&self, kind: Kind) -> Result<(), CliError> {
        if self.model.is_some() && self.ion.is_some() {
            return Err(CliError::Config(
                "`model` and `ion` are mutually exclusive: give model-unit or ion-unit parameters, not both"
                    .into(),
            ));
        }
        let blocks = [
            ("scan", self.scan.is_some(), Kind::Scan),
            ("trace", self.trace.is_some(), Kind::Trace),
            ("compare", self.compare.is_some(), Kind::IonCompare),
            ("channels", self.channels.is_some(), Kind::Channels),
        ];
        for (name, present, owner) in blocks {
            match (present, owner == kind) {
                (false, true) => return Err(missing(name, kind)),
                (true, false) => return Err(unused(name, kind)),
                _ => {}
            }
        }
        if self.dissipation.is_some() && kind != Kind::Trace {
            return Err(unused("dissipation", kind));
        }
        if let Some(0) = self.numerics.workers {
            return Err(CliError::Config("`numerics.workers` must be at least 1".into()));
        }
        match kind {
            Kind::Scan | Kind::Trace => {
                if self.model.is_none() {
                    return Err(if self.ion.is_some() {
                        unused("ion", kind)
                    } else {
                        missing("model", kind)
                    });
                }
                if self.initial.is_none() {
                    return Err(missing("initial", kind));
                }
            }
            Kind::IonCompare => {
                if self.ion.is_none() {
                    return Err(missing("ion", kind));
                }
                if self.initial.is_none() {
                    return Err(missing("initial", kind));
                }
            }
            Kind::Channels => {
                if self.model.is_none() && self.ion.is_none() {
                    return Err(missing("model", kind));
                }
                if self.initial.is_some() {
                    return Err(unused("initial", kind));
                }
            }
        }
        if let Some(ion) = &self.ion {
            match (ion.target.is_some(), ion.drives.is_some()) {
                (true, true) => {
                    return Err(CliError::Config(
                        "`ion.target` and `ion.drives` are mutually exclusive".into(),
                    ))
                }
                (false, false) => return Err(missing("ion.target", kind)),
                _ => {}
            }
        }
        if let Some(s) = &self.scan {
            match (s.time.fixed, s.time.channel) {
                (Some(_), Some(_)) => {
                    return Err(CliError::Config(
                        "`scan.time.fixed` and `scan.time.channel` are mutually exclusive".into(),
                    ))
                }
                (None, None) => return Err(missing("scan.time.channel", kind)),
                (Some(_), None) if s.time.at.is_some() => return Err(unused("scan.time.at", kind)),
                _ => {}
            }
        }
        if let Some(t) = &self.trace {
            match (t.t_end, t.transfers, t.channel) {
                (Some(_), None, None) | (None, Some(_), Some(_)) => {}
                (Some(_), _, _) => {
                    return Err(CliError::Config(
                        "`trace.t_end` excludes `trace.transfers` and `trace.channel`".into(),
                    ))
                }
                (None, None, None) => return Err(missing("trace.t_end", kind)),
                (None, Some(_), None) => return Err(missing("trace.channel", kind)),
                (None, None, Some(_)) => return Err(missing("trace.transfers", kind)),
            }
        }
        Ok(())
    }

    /// The effective configuration as TOML, suitable for re-running.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration is always representable as TOML")
    }
}
