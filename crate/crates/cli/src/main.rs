use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use khop_core::report::{gain_report, verify, Status, VerificationReport};
use khop_core::scenario::Scenario;
use khop_core::sim::{run_partial, Telemetry};
use khop_core::sweep::{self, SweepGrid};
use khop_core::Error;

const EXIT_OK: u8 = 0;
const EXIT_USAGE: u8 = 1;
const EXIT_INFEASIBLE: u8 = 2;
const EXIT_DIVERGED: u8 = 3;
const EXIT_CHECK_FAILED: u8 = 4;

#[derive(Parser)]
#[command(name = "khop", version, about = "Distributed k-hop observers: tuning, simulation and verification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Tune observer gains and write the gain report.
    Tune(Common),
    /// Simulate a scenario; writes telemetry CSV and a verification report.
    Simulate(Common),
    /// Re-check telemetry from a previous simulation.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Telemetry CSV written by `simulate`.
        #[arg(long)]
        csv: PathBuf,
    },
    /// Run a parameter grid in parallel.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Step sizes (comma separated); the scenario's own when omitted.
        #[arg(long, value_delimiter = ',')]
        dt: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        theta_scale: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        pi_scale: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        k: Vec<usize>,
    },
    /// Run the built-in four-agent reproduction scenario.
    ReproducePaper(Common),
}

#[derive(Args, Clone, Default)]
struct Common {
    /// Scenario JSON file.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Overrides the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Keep every n-th step in the telemetry.
    #[arg(long)]
    decimate: Option<usize>,
    /// Slack added to the strict gain bounds.
    #[arg(long)]
    slack: Option<f64>,
    /// Boundary-layer width for the sign function, or `off`.
    #[arg(long, value_parser = parse_layer)]
    boundary_layer: Option<Layer>,
}

#[derive(Clone, Copy)]
struct Layer(Option<f64>);

fn parse_layer(s: &str) -> std::result::Result<Layer, String> {
    if s == "off" {
        return Ok(Layer(None));
    }
    match s.parse::<f64>() {
        Ok(w) if w > 0.0 => Ok(Layer(Some(w))),
        _ => Err(format!("expected a positive width or `off`, got {s:?}")),
    }
}

impl Common {
    fn scenario(&self, builtin: Option<Scenario>) -> Result<Scenario> {
        let mut s = match (&self.scenario, builtin) {
            (Some(path), _) => Scenario::load(path).with_context(|| format!("loading {}", path.display()))?,
            (None, Some(s)) => s,
            (None, None) => anyhow::bail!(Usage("--scenario <path> is required".into())),
        };
        if let Some(seed) = self.seed {
            s.sim.seed = seed;
        }
        if let Some(d) = self.decimate {
            s.outputs.decimate = d;
        }
        if let Some(slack) = self.slack {
            s.gains.slack = slack;
        }
        if let Some(Layer(w)) = self.boundary_layer {
            s.sim.boundary_layer = w;
        }
        Ok(s)
    }

    fn out_dir(&self) -> Result<&Path> {
        fs::create_dir_all(&self.out).with_context(|| format!("creating {}", self.out.display()))?;
        Ok(&self.out)
    }
}

#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

fn output_name(configured: &Option<PathBuf>, default: &str) -> PathBuf {
    configured.clone().unwrap_or_else(|| default.into())
}

fn print_criteria(r: &VerificationReport) {
    for c in &r.criteria {
        let status = serde_json::to_value(c.status).unwrap_or_default();
        let margin = c.margin.map_or("-".to_string(), |m| format!("{m:.6e}"));
        println!("{:<18} {:<15} margin {:<14} {}", c.name, status.as_str().unwrap_or("?"), margin, c.detail);
    }
}

fn verdict(r: &VerificationReport) -> u8 {
    if r.criteria.iter().any(|c| c.status == Status::Fail) {
        EXIT_CHECK_FAILED
    } else if !r.gains.certified {
        EXIT_INFEASIBLE
    } else {
        EXIT_OK
    }
}

fn cmd_tune(common: &Common) -> Result<u8> {
    let s = common.scenario(None)?;
    let p = s.prepare()?;
    let report = gain_report(&p)?;
    let path = common.out_dir()?.join("gain_report.json");
    write_json(&path, &report)?;
    for a in &report.agents {
        match (a.omega, a.theta, a.pi) {
            (Some(w), Some(t), Some(pi)) => println!(
                "agent {}: eta {} omega {w:.6} theta {t:.6} pi {pi:.6}",
                a.agent, a.eta
            ),
            _ => println!("agent {}: not estimated by anyone", a.agent),
        }
    }
    for note in &report.notes {
        println!("note: {note}");
    }
    println!("wrote {}", path.display());
    Ok(if report.certified { EXIT_OK } else { EXIT_INFEASIBLE })
}

fn simulate(s: &Scenario, out: &Path) -> Result<u8> {
    let p = s.prepare()?;
    let (tel, failure) = run_partial(&p.sim);
    let csv_path = out.join(output_name(&s.outputs.csv, "telemetry.csv"));
    tel.write_csv(BufWriter::new(File::create(&csv_path).with_context(|| format!("creating {}", csv_path.display()))?))?;
    println!("wrote {} ({} rows)", csv_path.display(), tel.samples.len());
    if let Some(e) = failure {
        return Err(e).context("simulation aborted; partial telemetry kept");
    }
    let report = verify(&p, &tel)?;
    let report_path = out.join(output_name(&s.outputs.report, "report.json"));
    write_json(&report_path, &report)?;
    print_criteria(&report);
    println!("wrote {}", report_path.display());
    Ok(verdict(&report))
}

fn cmd_verify(common: &Common, csv: &Path) -> Result<u8> {
    let s = common.scenario(None)?;
    let p = s.prepare()?;
    let file = File::open(csv).with_context(|| format!("opening {}", csv.display()))?;
    let tel = Telemetry::read_csv(file, p.network.n(), p.state_dim())?;
    let report = verify(&p, &tel)?;
    let path = common.out_dir()?.join("verify_report.json");
    write_json(&path, &report)?;
    print_criteria(&report);
    println!("wrote {}", path.display());
    Ok(verdict(&report))
}

fn cmd_sweep(common: &Common, dt: &[f64], theta: &[f64], pi: &[f64], k: &[usize]) -> Result<u8> {
    let s = common.scenario(None)?;
    let mut grid = SweepGrid::identity(&s);
    if !dt.is_empty() {
        grid.dt = dt.to_vec();
    }
    if !theta.is_empty() {
        grid.theta_scale = theta.to_vec();
    }
    if !pi.is_empty() {
        grid.pi_scale = pi.to_vec();
    }
    if !k.is_empty() {
        grid.k = k.to_vec();
    }
    let rows = sweep::sweep(&s, &grid);
    let path = common.out_dir()?.join("sweep.csv");
    sweep::write_csv(&rows, BufWriter::new(File::create(&path)?))?;
    let fmt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.4}"));
    println!("{:>9} {:>7} {:>7} {:>3} {:>9} {:>9} {:>9} {:>11}  status", "dt", "theta", "pi", "k", "T_x_obs", "T_u_obs", "consdist", "max_err");
    for r in &rows {
        let status = match (&r.error, r.all_pass) {
            (Some(e), _) => format!("error: {e}"),
            (None, Some(true)) => "PASS".into(),
            (None, _) if r.certified == Some(false) => "NOT_CERTIFIED".into(),
            _ => "FAIL".into(),
        };
        println!(
            "{:>9} {:>7} {:>7} {:>3} {:>9} {:>9} {:>9} {:>11}  {status}",
            r.cell.dt,
            r.cell.theta_scale,
            r.cell.pi_scale,
            r.cell.k,
            fmt(r.t_x_obs),
            fmt(r.t_u_obs),
            r.final_consensus_distance.map_or("-".into(), |v| format!("{v:.2e}")),
            r.max_state_error.map_or("-".into(), |v| format!("{v:.3e}")),
        );
    }
    println!("wrote {}", path.display());
    Ok(EXIT_OK)
}

fn cmd_reproduce(common: &Common) -> Result<u8> {
    let s = common.scenario(Some(Scenario::reproduction()))?;
    let out = common.out_dir()?;
    let scenario_path = out.join("scenario.json");
    fs::write(&scenario_path, s.to_json() + "\n")?;
    println!("wrote {}", scenario_path.display());
    let p = s.prepare()?;
    write_json(&out.join("gain_report.json"), &gain_report(&p)?)?;
    simulate(&s, out)
}

fn exit_code(e: &anyhow::Error) -> u8 {
    if e.downcast_ref::<Usage>().is_some() {
        return EXIT_USAGE;
    }
    match e.downcast_ref::<Error>() {
        Some(Error::CertificateInfeasible { .. } | Error::GainConditionViolated { .. } | Error::CouplingNotPd { .. }) => {
            EXIT_INFEASIBLE
        }
        Some(Error::DivergenceDetected { .. } | Error::StateBoxExited { .. }) => EXIT_DIVERGED,
        _ => EXIT_USAGE,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { EXIT_OK });
        }
    };
    let result = match &cli.command {
        Command::Tune(c) => cmd_tune(c),
        Command::Simulate(c) => c.scenario(None).and_then(|s| simulate(&s, c.out_dir()?)),
        Command::Verify { common, csv } => cmd_verify(common, csv),
        Command::Sweep {
            common,
            dt,
            theta_scale,
            pi_scale,
            k,
        } => cmd_sweep(common, dt, theta_scale, pi_scale, k),
        Command::ReproducePaper(c) => cmd_reproduce(c),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
