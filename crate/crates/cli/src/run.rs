use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::{json, Value};

use rabi_stark::dynamics::{PropagationOptions, TimeGrid, Trajectory};
use rabi_stark::effective::KPhotonChannel;
use rabi_stark::experiments::{
    channel_table, compare_ion_model, default_n_max, run_scan, run_trace, trace_convergence,
    ChannelRef, ComparisonSpec, ConvergenceVerdict, RowOutcome, ScanSpec, TimeRule, TraceSpec,
};
use rabi_stark::models::{
    design_ion_drives, ion_calibration_with_tolerance, IonCalibration, IonDriveParams, IonTarget,
    ModelParams,
};

use crate::config::{ChannelBlock, IonBlock, Kind, RunConfig};
use crate::error::CliError;

/// Environment variable holding the default worker count.
pub const WORKERS_ENV: &str = "RABI_STARK_WORKERS";

const KHZ: f64 = 2.0 * PI;

/// A CSV table with every cell already rendered.
struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

/// Everything a run produces before anything touches the disk.
struct Artifacts {
    data: Table,
    peaks: Option<Table>,
    derived: Value,
    convergence: Option<ConvergenceVerdict>,
}

/// Shortest text that keeps 17 significant digits.
pub fn number(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else {
        format!("{x:.16e}")
    }
}

fn optional(x: Option<f64>) -> String {
    x.map(number).unwrap_or_default()
}

fn channel_ref(c: ChannelBlock) -> ChannelRef {
    ChannelRef {
        k: c.k,
        n: c.n,
        branch: c.branch,
    }
}

fn workers(cfg: &RunConfig) -> Result<Option<usize>, CliError> {
    if cfg.numerics.workers.is_some() {
        return Ok(cfg.numerics.workers);
    }
    match std::env::var(WORKERS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(CliError::Config(format!(
                "{WORKERS_ENV} must be a positive integer, got `{v}`"
            ))),
        },
        Err(_) => Ok(None),
    }
}

fn model_params(cfg: &RunConfig) -> Result<ModelParams, CliError> {
    Ok(cfg.model.as_ref().expect("validated").params()?)
}

pub fn ion_drives(ion: &IonBlock) -> Result<IonDriveParams, CliError> {
    let (nu, omega_s) = (KHZ * ion.nu_khz, KHZ * ion.omega_s_khz);
    if let Some(t) = ion.target {
        return Ok(design_ion_drives(&IonTarget {
            nu,
            eta: ion.eta,
            omega_s,
            gamma_ratio: t.gamma_ratio,
            g_ratio: t.g_ratio,
            omega0_ratio: t.omega0_ratio,
        })?);
    }
    let d = ion.drives.expect("validated");
    let drives = IonDriveParams {
        nu,
        eta: ion.eta,
        omega_r: KHZ * d.omega_r_khz,
        omega_b: KHZ * d.omega_b_khz,
        omega_s,
        delta_r: KHZ * d.delta_r_khz,
        delta_b: KHZ * d.delta_b_khz,
        phi_r: PI * d.phi_r,
        phi_b: PI * d.phi_b,
        phi_s: PI * d.phi_s,
    };
    drives.validate()?;
    Ok(drives)
}

/// Calibration outputs, with frequencies also quoted in kHz.
fn calibration_json(d: &IonDriveParams, cal: &IonCalibration) -> Value {
    let k = |x: f64| x / KHZ;
    json!({
        "drives": d,
        "carrier_phase": cal.carrier,
        "derived": cal.derived,
        "model": cal.model,
        "khz": {
            "gamma_eff": k(cal.derived.gamma_eff),
            "omega_dd": k(cal.derived.omega_dd),
            "omega_rot": k(cal.derived.omega_rot),
            "omega0_rot": k(cal.derived.omega0_rot),
            "g": k(cal.derived.g_eff),
            "omega_r": k(d.omega_r),
            "omega_b": k(d.omega_b),
            "balance_ratio": cal.derived.balance_ratio,
        },
        "basis_note": cal.basis_note,
    })
}

fn trajectory_table(t: &Trajectory) -> Table {
    let mut header = vec!["time".to_string()];
    header.extend(t.names().iter().cloned());
    let cols: Vec<&[f64]> = t.columns().map(|(_, c)| c).collect();
    let rows = (0..t.len())
        .map(|i| {
            std::iter::once(number(t.times[i]))
                .chain(cols.iter().map(|c| number(c[i])))
                .collect()
        })
        .collect();
    Table { header, rows }
}

fn run_scan_kind(cfg: &RunConfig) -> Result<Artifacts, CliError> {
    let s = cfg.scan.as_ref().expect("validated");
    let base = model_params(cfg)?;
    let initial = cfg.initial.expect("validated");
    let time = match (s.time.fixed, s.time.channel, s.time.at) {
        (Some(t), _, _) => TimeRule::Fixed { t },
        (None, Some(c), Some(at)) => TimeRule::PanelFixed {
            channel: channel_ref(c),
            at,
        },
        (None, Some(c), None) => TimeRule::PerPoint(channel_ref(c)),
        (None, None, _) => unreachable!("validated"),
    };
    let k = s.time.channel.map_or(1, |c| c.k);
    let reach = initial.n.max(s.observable.fock_reach());
    let spec = ScanSpec {
        parameter: s.parameter,
        start: s.start,
        stop: s.stop,
        step: s.step,
        base,
        initial,
        time,
        observable: s.observable,
        n_max: cfg.numerics.n_max.unwrap_or_else(|| default_n_max(reach, k)),
        min_prominence: s.min_prominence,
        polarity: s.polarity,
        convergence_check: cfg.numerics.convergence_check,
        workers: workers(cfg)?,
    };
    let r = run_scan(&spec)?;
    let data = Table {
        header: vec![
            r.parameter.name().to_string(),
            "time".into(),
            r.observable.to_string(),
        ],
        rows: (0..r.values.len())
            .map(|i| vec![number(r.values[i]), number(r.times[i]), number(r.observations[i])])
            .collect(),
    };
    let peaks = Table {
        header: ["location", "height", "prominence", "width"].map(String::from).to_vec(),
        rows: r
            .peaks
            .iter()
            .map(|p| vec![number(p.location), number(p.height), number(p.prominence), number(p.width)])
            .collect(),
    };
    let skipped: Vec<Value> = r
        .values
        .iter()
        .zip(&r.skipped)
        .filter_map(|(x, s)| s.as_ref().map(|why| json!({ "value": x, "reason": why })))
        .collect();
    let fixed_time = match spec.time {
        TimeRule::Fixed { t } => Some(t),
        TimeRule::PanelFixed { channel, at } => {
            Some(channel.transfer_time(&spec.parameter.apply(&spec.base, at))?)
        }
        TimeRule::PerPoint(_) => None,
    };
    Ok(Artifacts {
        data,
        peaks: Some(peaks),
        derived: json!({
            "n_max": spec.n_max,
            "points": r.values.len(),
            "panel_time": fixed_time,
            "skipped": skipped,
            "peaks": r.peaks,
        }),
        convergence: r.convergence,
    })
}

fn run_trace_kind(cfg: &RunConfig) -> Result<Artifacts, CliError> {
    let t = cfg.trace.expect("validated");
    let params = model_params(cfg)?;
    let initial = cfg.initial.expect("validated");
    let (t_end, transfer) = match (t.t_end, t.transfers, t.channel) {
        (Some(end), _, _) => (end, None),
        (None, Some(m), Some(c)) => {
            let tt = channel_ref(c).transfer_time(&params)?;
            (t.t_start + m * tt, Some(tt))
        }
        _ => unreachable!("validated"),
    };
    let k = t.channel.map_or(1, |c| c.k);
    let spec = TraceSpec {
        params,
        initial,
        grid: TimeGrid::new(t.t_start, t_end, t.samples)?,
        kappa: cfg.dissipation.map(|d| d.kappa),
        n_max: cfg.numerics.n_max.unwrap_or_else(|| default_n_max(initial.n, k)),
        options: PropagationOptions::with_tol(cfg.numerics.tol),
        convergence_check: cfg.numerics.convergence_check,
    };
    let traj = run_trace(&spec)?;
    let convergence = if spec.convergence_check {
        Some(trace_convergence(&spec, &traj)?)
    } else {
        None
    };
    let maxima: serde_json::Map<String, Value> = traj
        .names()
        .iter()
        .filter_map(|n| traj.max_of(n).map(|(at, v)| (n.clone(), json!({ "time": at, "value": v }))))
        .collect();
    Ok(Artifacts {
        data: trajectory_table(&traj),
        peaks: None,
        derived: json!({
            "n_max": spec.n_max,
            "t_end": t_end,
            "transfer_time": transfer,
            "max_drift": traj.max_drift,
            "steps": traj.stats,
            "maxima": maxima,
        }),
        convergence,
    })
}

fn run_compare_kind(cfg: &RunConfig) -> Result<Artifacts, CliError> {
    let c = cfg.compare.as_ref().expect("validated");
    let ion = cfg.ion.as_ref().expect("validated");
    let initial = cfg.initial.expect("validated");
    let drives = ion_drives(ion)?;
    let reach = std::iter::once(initial.n)
        .chain(c.tracked.iter().map(|s| s.n))
        .chain(c.partner.map(|s| s.n))
        .max()
        .unwrap_or(0);
    let spec = ComparisonSpec {
        drives,
        initial,
        grid: TimeGrid::new(0.0, c.t_end_ms, c.samples)?,
        n_max: cfg.numerics.n_max.unwrap_or(reach + 10),
        options: PropagationOptions::with_tol(cfg.numerics.tol),
        tracked: c.tracked.clone(),
        partner: c.partner,
        balance_tolerance: ion.balance_tolerance,
        convergence_check: cfg.numerics.convergence_check,
    };
    let r = compare_ion_model(&spec)?;

    let mut header = vec!["time".to_string()];
    let mut cols: Vec<&[f64]> = Vec::new();
    for (prefix, t) in [("model", &r.model), ("ion", &r.ion)] {
        for (name, col) in t.columns() {
            header.push(format!("{prefix}_{name}"));
            cols.push(col);
        }
    }
    header.push("deviation".into());
    cols.push(&r.deviation);
    let rows = (0..r.model.len())
        .map(|i| {
            std::iter::once(number(r.model.times[i]))
                .chain(cols.iter().map(|c| number(c[i])))
                .collect()
        })
        .collect();
    Ok(Artifacts {
        data: Table { header, rows },
        peaks: None,
        derived: json!({
            "n_max": spec.n_max,
            "calibration": calibration_json(&drives, &r.calibration),
            "max_deviation": r.max_deviation,
            "per_population": r.per_population,
            "model_period_ms": r.model_period,
            "ion_period_ms": r.ion_period,
            "lamb_dicke_warning": r.lamb_dicke_warning,
        }),
        convergence: r.convergence,
    })
}

#[derive(Serialize)]
struct ChannelJson {
    n: usize,
    branch: rabi_stark::effective::Branch,
    status: &'static str,
    channel: Option<KPhotonChannel>,
    transfer_time: Option<f64>,
    reason: Option<String>,
}

fn run_channels_kind(cfg: &RunConfig) -> Result<Artifacts, CliError> {
    let ch = cfg.channels.expect("validated");
    if ch.n_to < ch.n_from {
        return Err(CliError::Config(format!(
            "empty channel range: n_from = {} > n_to = {}",
            ch.n_from, ch.n_to
        )));
    }
    let (params, calibration) = match (&cfg.model, &cfg.ion) {
        (Some(m), _) => (m.params()?, None),
        (None, Some(ion)) => {
            let d = ion_drives(ion)?;
            let cal = ion_calibration_with_tolerance(&d, ion.balance_tolerance)?;
            (cal.model, Some(calibration_json(&d, &cal)))
        }
        (None, None) => unreachable!("validated"),
    };
    let table = channel_table(&params, ch.k, ch.n_from..=ch.n_to)?;
    let header = [
        "n",
        "branch",
        "status",
        "delta_k",
        "omega_k",
        "shifted_delta",
        "transfer_time",
        "near_resonant",
    ]
    .map(String::from)
    .to_vec();
    let mut rows = Vec::new();
    let mut json_rows = Vec::new();
    for row in &table {
        let (status, channel, reason) = match &row.outcome {
            RowOutcome::Allowed(c) => ("allowed", Some(*c), None),
            RowOutcome::Forbidden { reason } => ("forbidden", None, Some(reason.clone())),
            RowOutcome::Singular { reason } => ("singular", None, Some(reason.clone())),
        };
        let tt = channel.and_then(|c| c.transfer_time().ok());
        let mut cells = vec![row.n.to_string(), row.branch.to_string(), status.to_string()];
        match channel {
            Some(c) => cells.extend([
                number(c.delta_k),
                number(c.omega_k),
                optional(c.shifted_delta),
                optional(tt),
                c.near_resonant.to_string(),
            ]),
            None => cells.extend(std::iter::repeat_n(String::new(), 5)),
        }
        rows.push(cells);
        json_rows.push(ChannelJson {
            n: row.n,
            branch: row.branch,
            status,
            channel,
            transfer_time: tt,
            reason,
        });
    }
    Ok(Artifacts {
        data: Table { header, rows },
        peaks: None,
        derived: json!({
            "model": params,
            "calibration": calibration,
            "channel_table": json_rows,
        }),
        convergence: None,
    })
}

/// Files written so far; removed again unless the run completes.
struct Staging {
    dir: PathBuf,
    created_dir: bool,
    files: Vec<PathBuf>,
    done: bool,
}

impl Staging {
    fn new(dir: &Path) -> Result<Self, CliError> {
        let created_dir = !dir.exists();
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            created_dir,
            files: Vec::new(),
            done: false,
        })
    }

    fn path(&mut self, name: &str) -> PathBuf {
        let p = self.dir.join(name);
        self.files.push(p.clone());
        p
    }

    fn write_csv(&mut self, name: &str, t: &Table) -> Result<(), CliError> {
        let mut w = csv::Writer::from_path(self.path(name))?;
        w.write_record(&t.header)?;
        for r in &t.rows {
            w.write_record(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

impl Drop for Staging {
    fn drop(&mut self) {
        if self.done {
            return;
        }
        for f in &self.files {
            let _ = fs::remove_file(f);
        }
        if self.created_dir {
            let _ = fs::remove_dir(&self.dir);
        }
    }
}

/// Summary of a completed run.
pub struct RunSummary {
    pub files: Vec<PathBuf>,
}

/// Runs a validated configuration and writes `data.csv`, `peaks.csv`
/// (scans) and `manifest.json` into `out`. Nothing is left behind on
/// failure.
pub fn execute(cfg: &RunConfig, out: &Path) -> Result<RunSummary, CliError> {
    let started = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0);
    let clock = Instant::now();
    let kind = cfg.kind();
    let artifacts = match kind {
        Kind::Scan => run_scan_kind(cfg)?,
        Kind::Trace => run_trace_kind(cfg)?,
        Kind::IonCompare => run_compare_kind(cfg)?,
        Kind::Channels => run_channels_kind(cfg)?,
    };
    if let Some(v) = &artifacts.convergence {
        if !v.converged {
            return Err(CliError::Convergence(format!(
                "observables moved by {:e} between n_max = {} and {} (tolerance {:e})",
                v.max_difference, v.n_max, v.n_max_check, v.tolerance
            )));
        }
    }

    // echo the truncation actually used so the manifest reproduces the run
    let mut echo = cfg.clone();
    if let Some(n) = artifacts.derived.get("n_max").and_then(Value::as_u64) {
        echo.numerics.n_max = Some(n as usize);
    }
    echo.output.dir = Some(out.to_path_buf());

    let mut staging = Staging::new(out)?;
    staging.write_csv("data.csv", &artifacts.data)?;
    if let Some(p) = &artifacts.peaks {
        staging.write_csv("peaks.csv", p)?;
    }
    let manifest = json!({
        "tool": "rabi-stark",
        "versions": {
            "cli": env!("CARGO_PKG_VERSION"),
            "library": rabi_stark::VERSION,
        },
        "kind": kind,
        "config": echo,
        "config_toml": echo.to_toml(),
        "derived": artifacts.derived,
        "convergence": artifacts.convergence,
        "started_unix_s": started,
        "wall_clock_s": clock.elapsed().as_secs_f64(),
        "outputs": staging.files.iter().map(|f| f.file_name().unwrap().to_string_lossy().into_owned()).chain(["manifest.json".to_string()]).collect::<Vec<_>>(),
    });
    let path = staging.path("manifest.json");
    fs::write(path, serde_json::to_string_pretty(&manifest)?)?;
    staging.done = true;
    Ok(RunSummary {
        files: staging.files.clone(),
    })
}
