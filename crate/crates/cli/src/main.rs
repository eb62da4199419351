use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use kinkflow::config::RunConfig;
use kinkflow::duhamel;
use kinkflow::evolution::{self, Trajectory};
use kinkflow::functionals::Diagnostics;
use kinkflow::rates::{self, OdeParams, Variant};
use kinkflow::thresholds;
use kinkflow::Error;

/// Column order of `diagnostics.csv`.
const CSV_HEADER: [&str; 14] = [
    "t",
    "energy_gap",
    "dissipation",
    "hminus1_sq",
    "shift",
    "f_l2",
    "f_grad_l2",
    "f_sup",
    "gn_ratio",
    "mass",
    "alg_ratio_c",
    "alg_ratio_E",
    "f0_l2",
    "f0_grad_l2",
];

const MANIFEST: &str = "run-manifest.json";

/// Largest allowed max/min ratio of the scaled kernel norms.
const KERNEL_FLATNESS: f64 = 1.1;

#[derive(Parser)]
#[command(name = "kinkflow", version, about = "Cahn-Hilliard relaxation to planar kinks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate a configuration and write diagnostics.csv and run-manifest.json.
    Run(RunArgs),
    /// Fit decay rates to a diagnostics.csv and write rates.json and plotdata/.
    Analyze(AnalyzeArgs),
    /// Integrate the saturated ODE system and check its conclusion ratios.
    Odecheck(OdeArgs),
    /// Tabulate scaled L1 norms of kernel derivatives.
    Kernel(KernelArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML configuration, or a run-manifest.json from an earlier run.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Override one key, e.g. `--set init.epsilon=0.02`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// RNG seed; TOML integers are signed, so it must fit in an i64.
    #[arg(long, value_parser = clap::value_parser!(u64).range(..=i64::MAX as u64))]
    seed: Option<u64>,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// diagnostics.csv from `run`.
    csv: PathBuf,
    /// Fit window `t1:t2`.
    #[arg(long, default_value = "10:500")]
    window: String,
    /// Output directory; defaults to the directory of the CSV.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Dimension of the run; read from a neighbouring run-manifest.json if absent.
    #[arg(long)]
    dim: Option<usize>,
}

#[derive(Args)]
struct OdeArgs {
    /// Run the standard 162-point sweep: three values each of E0, H0 and c*, every d', both variants.
    #[arg(long)]
    sweep: bool,
    /// JSON array of parameter objects `{e0, h0, c_star, d_prime, variant}`.
    #[arg(long)]
    sweep_file: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    e0: f64,
    #[arg(long, default_value_t = 1.0)]
    h0: f64,
    #[arg(long, default_value_t = 1.0)]
    c_star: f64,
    #[arg(long, default_value_t = 3)]
    d_prime: usize,
    /// `max-H`, `max-D` or `both`.
    #[arg(long, default_value = "both")]
    variant: String,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct KernelArgs {
    /// Comma-separated times.
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.316,1,3.16,10")]
    t: Vec<f64>,
    /// Comma-separated derivative orders.
    #[arg(long, value_delimiter = ',', default_value = "0,1,2,3")]
    j: Vec<usize>,
    #[arg(long, default_value_t = 2)]
    dim: usize,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

/// Failure with its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure {
            code: 1,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = if matches!(e, Error::Abort { .. }) { 2 } else { 1 };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::usage(e.to_string())
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure::usage(format!("csv: {e}"))
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::usage(format!("json: {e}"))
    }
}

type Outcome = std::result::Result<bool, Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Run(a) => run(a),
        Command::Analyze(a) => analyze(a),
        Command::Odecheck(a) => odecheck(a),
        Command::Kernel(a) => kernel(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(3),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir)
        .map_err(|e| Failure::usage(format!("cannot create {}: {e}", dir.display())))
}

fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    fs::write(path, contents).map_err(|e| Failure::usage(format!("cannot write {}: {e}", path.display())))
}

fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

fn diagnostics_row(r: &Diagnostics) -> [String; 14] {
    [
        r.t,
        r.energy_gap,
        r.dissipation,
        r.hminus1_sq,
        r.shift,
        r.f_l2,
        r.f_grad_l2,
        r.f_sup,
        r.gn_ratio,
        r.mass,
        r.alg_ratio_c,
        r.alg_ratio_e,
        r.f0_l2,
        r.f0_grad_l2,
    ]
    .map(fmt)
}

/// Reads a TOML config or the config echoed in a run manifest.
fn load_config(path: Option<&Path>, overrides: &[String]) -> Result<RunConfig, Failure> {
    let text = match path {
        None => String::new(),
        Some(p) => fs::read_to_string(p)
            .map_err(|e| Failure::usage(format!("cannot read config {}: {e}", p.display())))?,
    };
    let toml_text = match serde_json::from_str::<serde_json::Value>(&text) {
        Ok(v) => v
            .get("config_toml")
            .and_then(|c| c.as_str())
            .ok_or_else(|| Failure::usage("manifest has no config_toml entry"))?
            .to_string(),
        Err(_) => text,
    };
    Ok(RunConfig::from_toml(&toml_text, overrides)?)
}

fn run(a: RunArgs) -> Outcome {
    let mut overrides = a.set.clone();
    if let Some(seed) = a.seed {
        overrides.push(format!("init.seed={seed}"));
    }
    let cfg = load_config(a.config.as_deref(), &overrides)?;
    create_dir(&a.out)?;
    let csv_path = a.out.join("diagnostics.csv");
    let mut writer = csv::Writer::from_path(&csv_path)?;
    writer.write_record(CSV_HEADER)?;
    let mut observe = |r: &Diagnostics| -> kinkflow::Result<()> {
        writer
            .write_record(diagnostics_row(r))
            .and_then(|_| writer.flush().map_err(csv::Error::from))
            .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
    };
    let result = evolution::run_observed(&cfg, Some(&a.out), &mut observe);
    drop(observe);
    writer.flush()?;
    let status = match &result {
        Ok(_) => "completed".to_string(),
        Err(e) => format!("failed: {e}"),
    };
    write_manifest(&a.out, &cfg, result.as_ref().ok(), &status)?;
    let traj = result?;
    write_balance(&a.out, &traj)?;
    let worst = traj
        .balance
        .iter()
        .map(|b| b.residual() / b.bound())
        .fold(0.0, f64::max);
    println!(
        "{} records, {} steps ({} rejected), worst balance ratio {worst:.3e}, mass drift {:.3e}",
        traj.records.len(),
        traj.steps,
        traj.rejected_steps,
        traj.mass_drift
    );
    Ok(true)
}

fn write_manifest(
    dir: &Path,
    cfg: &RunConfig,
    traj: Option<&Trajectory>,
    status: &str,
) -> Result<(), Failure> {
    let manifest = json!({
        "program": "kinkflow",
        "version": env!("CARGO_PKG_VERSION"),
        "config_hash": cfg.content_hash(),
        "config_toml": cfg.to_toml(),
        "config": cfg,
        "status": status,
        "records": traj.map(|t| t.records.len()),
        "steps": traj.map(|t| t.steps),
        "rejected_steps": traj.map(|t| t.rejected_steps),
        "mass_drift": traj.map(|t| t.mass_drift),
        "checkpoints": traj.map(|t| t.checkpoints.iter().map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned())).collect::<Vec<_>>()),
    });
    write_file(&dir.join(MANIFEST), &serde_json::to_string_pretty(&manifest)?)
}

fn write_balance(dir: &Path, traj: &Trajectory) -> Result<(), Failure> {
    let mut w = csv::Writer::from_path(dir.join("balance.csv"))?;
    w.write_record([
        "t1",
        "t2",
        "energy_start",
        "energy_end",
        "dissipation_integral",
        "dt",
        "residual_over_bound",
    ])?;
    for b in &traj.balance {
        w.write_record(
            [
                b.t1,
                b.t2,
                b.energy_start,
                b.energy_end,
                b.dissipation_integral,
                b.dt,
                b.residual() / b.bound(),
            ]
            .map(fmt),
        )?;
    }
    w.flush()?;
    Ok(())
}

fn parse_window(s: &str) -> Result<(f64, f64), Failure> {
    let bad = || Failure::usage(format!("window '{s}' must look like t1:t2"));
    let (a, b) = s.split_once(':').ok_or_else(bad)?;
    let t1: f64 = a.trim().parse().map_err(|_| bad())?;
    let t2: f64 = b.trim().parse().map_err(|_| bad())?;
    if !(t1 > 0.0 && t2 >= 10.0 * t1) {
        return Err(Failure::usage(format!(
            "window [{t1}, {t2}] must start above 0 and span at least one decade"
        )));
    }
    Ok((t1, t2))
}

fn read_diagnostics(path: &Path) -> Result<Vec<Diagnostics>, Failure> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| Failure::usage(format!("cannot read {}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, row) in reader.deserialize::<Diagnostics>().enumerate() {
        let r = row.map_err(|e| Failure::usage(format!("{} row {}: {e}", path.display(), i + 1)))?;
        if let Some(prev) = out.last().map(|p: &Diagnostics| p.t) {
            if !(r.t > prev) {
                return Err(Failure::usage(format!(
                    "{} row {}: times must increase",
                    path.display(),
                    i + 1
                )));
            }
        }
        out.push(r);
    }
    if out.is_empty() {
        return Err(Failure::usage(format!("{} has no rows", path.display())));
    }
    Ok(out)
}

fn analyze(a: AnalyzeArgs) -> Outcome {
    let window = parse_window(&a.window)?;
    let records = read_diagnostics(&a.csv)?;
    let dir = a
        .out
        .clone()
        .unwrap_or_else(|| a.csv.parent().map(Path::to_path_buf).unwrap_or_default());
    let manifest: Option<serde_json::Value> = a
        .csv
        .parent()
        .map(|p| p.join(MANIFEST))
        .and_then(|p| fs::read_to_string(p).ok())
        .and_then(|s| serde_json::from_str(&s).ok());
    let dim = a
        .dim
        .or_else(|| manifest.as_ref()?.pointer("/config/grid/d")?.as_u64().map(|d| d as usize))
        .unwrap_or(2);
    if !(2..=5).contains(&dim) {
        return Err(Failure::usage(format!("dimension {dim} outside 2..=5")));
    }
    let hash = manifest
        .as_ref()
        .and_then(|m| m.get("config_hash")?.as_str().map(String::from));
    let report = rates::rate_report(&records, window, dim.max(3), hash)?;

    create_dir(&dir)?;
    write_file(&dir.join("rates.json"), &serde_json::to_string_pretty(&report)?)?;
    let plot = dir.join("plotdata");
    create_dir(&plot)?;
    for name in rates::RATE_QUANTITIES {
        let mut f = fs::File::create(plot.join(format!("{name}.dat")))?;
        writeln!(f, "# t {name}")?;
        for (t, y) in rates::series(&records, name)? {
            if t > 0.0 && y > 0.0 {
                writeln!(f, "{} {}", fmt(t), fmt(y))?;
            }
        }
    }
    for (name, check) in &report.checks {
        let slope = check.slope.map_or("n/a".to_string(), |s| format!("{s:+.4}"));
        println!(
            "{} {name:<12} slope {slope} expected {:+.2} +- {:.2}",
            if check.pass { "PASS" } else { "FAIL" },
            check.expected,
            check.tolerance
        );
    }
    Ok(report.slopes_pass())
}

fn ode_params(a: &OdeArgs) -> Result<Vec<OdeParams>, Failure> {
    if let Some(path) = &a.sweep_file {
        let text = fs::read_to_string(path)
            .map_err(|e| Failure::usage(format!("cannot read {}: {e}", path.display())))?;
        let items: Vec<serde_json::Value> = serde_json::from_str(&text)?;
        return items
            .iter()
            .map(|v| {
                let num = |k: &str| {
                    v.get(k)
                        .and_then(|x| x.as_f64())
                        .ok_or_else(|| Failure::usage(format!("sweep entry lacks '{k}'")))
                };
                let variant: Variant = v
                    .get("variant")
                    .and_then(|x| x.as_str())
                    .unwrap_or("max-H")
                    .parse()?;
                Ok(OdeParams::new(
                    num("e0")?,
                    num("h0")?,
                    num("c_star")?,
                    num("d_prime")? as usize,
                    variant,
                ))
            })
            .collect();
    }
    if a.sweep {
        return Ok(rates::standard_sweep());
    }
    let variants = match a.variant.as_str() {
        "both" => vec![Variant::MaxH, Variant::MaxD],
        v => vec![v.parse::<Variant>()?],
    };
    Ok(variants
        .into_iter()
        .map(|v| OdeParams::new(a.e0, a.h0, a.c_star, a.d_prime, v))
        .collect())
}

fn odecheck(a: OdeArgs) -> Outcome {
    let params = ode_params(&a)?;
    for p in &params {
        p.validate()?;
    }
    let mut reports = Vec::with_capacity(params.len());
    for p in &params {
        reports.push(rates::check_ode_bounds(&rates::ode_solve(p)?));
    }
    let pass = reports.iter().all(|r| r.pass());
    let limits: serde_json::Map<String, serde_json::Value> = thresholds::ODE_RATIO_LIMITS
        .iter()
        .map(|(n, v)| (n.to_string(), json!(v)))
        .collect();
    let report = json!({ "pass": pass, "thresholds": limits, "runs": reports });
    create_dir(&a.out)?;
    write_file(&a.out.join("ode-report.json"), &serde_json::to_string_pretty(&report)?)?;
    let failed = reports.iter().filter(|r| !r.pass()).count();
    println!("{} of {} parameter points within thresholds", reports.len() - failed, reports.len());
    Ok(pass)
}

fn kernel(a: KernelArgs) -> Outcome {
    if a.t.is_empty() || a.j.is_empty() {
        return Err(Failure::usage("need at least one time and one derivative order"));
    }
    let mut rows = Vec::new();
    let mut pass = true;
    for &j in &a.j {
        let s = duhamel::kernel_scaling(a.dim, j, &a.t)?;
        pass &= s.flatness <= KERNEL_FLATNESS;
        println!(
            "{} j = {j}: flatness {:.4}",
            if s.flatness <= KERNEL_FLATNESS { "PASS" } else { "FAIL" },
            s.flatness
        );
        rows.push(s);
    }
    create_dir(&a.out)?;
    let mut w = csv::Writer::from_path(a.out.join("kernel-scaling.csv"))?;
    w.write_record(["t", "j", "l1norm", "scaled_l1norm"])?;
    for s in &rows {
        for ((t, n), sc) in s.times.iter().zip(&s.norms).zip(&s.scaled) {
            w.write_record([fmt(*t), s.j.to_string(), fmt(*n), fmt(*sc)])?;
        }
    }
    w.flush()?;
    Ok(pass)
}
