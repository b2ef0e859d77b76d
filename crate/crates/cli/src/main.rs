//! `molgate` command-line front end.
//!
//! Exit codes: 0 success, 2 configuration or usage error, 3 numerical
//! failure (including a failed `certify`).

mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use molgate::config::{RunConfig, Tier};
use molgate::experiments::{
    adiabatic_report, certify, evaluate_composite, evaluate_internal, fig1_scan, fig2_scan,
    internal_window_average, phase_tunability_scan, table1_run, ScanOutput,
};
use molgate::fidelity::FidelityConstruction;
use molgate::{Error, Result};
use serde_json::json;

use manifest::Manifest;

const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

#[derive(Parser)]
#[command(
    name = "molgate",
    version,
    about = "Microwave controlled-phase gate for trapped polar molecules"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one gate and report F, 1-F, t_d and the unitarity residual.
    Propagate(Common),
    /// Internal-tier scan of the infidelity and t_d over J/Omega.
    Fig1(Common),
    /// Composite-tier scan over J0/Omega for every tabulated l/L and input.
    Fig2(Common),
    /// J0-averaged composite fidelities under both constructions.
    Table1(Common),
    /// Best-fit controlled phase against the pulse-2 relative phase.
    PhaseScan(Common),
    /// Dressed energies, adiabatic phase and t_d for one coupling.
    AdiabaticReport(Common),
    /// Step-halving certification plus the invariant suite.
    Certify(Common),
}

#[derive(Args, Clone, Debug, Default)]
struct Common {
    /// TOML configuration file; flags override its values.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory (default: $MOLGATE_OUT, else ./results).
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Worker threads (default: available parallelism).
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    tier: Option<Tier>,
    /// Coupling J/Omega (internal) or J0/Omega (composite).
    #[arg(long = "J", allow_negative_numbers = true)]
    coupling: Option<f64>,
    /// Pulse-2 relative phase (radians).
    #[arg(long, allow_negative_numbers = true)]
    theta: Option<f64>,
    /// Target controlled phase (radians).
    #[arg(long, allow_negative_numbers = true)]
    phi: Option<f64>,
    /// Pulse width t_w/T.
    #[arg(long = "t-w")]
    pulse_width: Option<f64>,
    #[arg(long = "n-max")]
    n_max: Option<usize>,
    #[arg(long = "ell-over-L")]
    ell_over_l: Option<f64>,
    #[arg(long = "omega-over-Omega")]
    omega_over_omega: Option<f64>,
    /// vac, one, plus, fock(n) or thermal(mean).
    #[arg(long = "motional-state")]
    motional_state: Option<String>,
    #[arg(long)]
    construction: Option<FidelityConstruction>,
    #[arg(long = "steps-per-pulse")]
    steps_per_pulse: Option<usize>,
    #[arg(long = "window-samples")]
    window_samples: Option<usize>,
    /// Drop the trap term from the composite Hamiltonian.
    #[arg(long)]
    no_trap: bool,
    /// Fit the best controlled phase and report it.
    #[arg(long)]
    fit_phase: bool,
    /// Allow J = 0 (no interaction; the gate cannot entangle).
    #[arg(long)]
    no_ddi_check: bool,
}

impl Common {
    fn resolve(&self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($field:ident, $value:expr) => {
                if let Some(v) = $value.clone() {
                    c.$field = v;
                }
            };
        }
        set!(tier, self.tier);
        set!(coupling, self.coupling);
        set!(relative_phase, self.theta);
        set!(target_phase, self.phi);
        set!(pulse_width, self.pulse_width);
        set!(n_max, self.n_max);
        set!(ell_over_l, self.ell_over_l);
        set!(omega_over_rabi, self.omega_over_omega);
        set!(motional_state, self.motional_state);
        set!(construction, self.construction);
        set!(window_samples, self.window_samples);
        if self.steps_per_pulse.is_some() {
            c.steps_per_pulse = self.steps_per_pulse;
        }
        if self.threads.is_some() {
            c.threads = self.threads;
        }
        if self.out.is_some() {
            c.out_dir = self.out.clone();
        }
        if self.no_trap {
            c.include_trap = false;
        }
        if self.fit_phase {
            c.fit_phase = true;
        }
        c.validate()?;
        Ok(c)
    }

    fn require_ddi(&self, config: &RunConfig) -> Result<()> {
        if config.coupling == 0.0 && !self.no_ddi_check {
            return Err(Error::InvalidParameter {
                name: "J",
                reason: "J = 0 switches the interaction off and the gate cannot entangle; \
                         pass --no-ddi-check to run anyway"
                    .into(),
            });
        }
        Ok(())
    }
}

struct Session {
    config: RunConfig,
    dir: PathBuf,
    manifest: Manifest,
    started: Instant,
}

impl Session {
    fn new(command: &str, config: RunConfig) -> Result<Self> {
        let dir = config.output_dir();
        std::fs::create_dir_all(&dir)
            .map_err(|e| Error::Config(format!("output directory {}: {e}", dir.display())))?;
        Ok(Session {
            manifest: Manifest::new(command, &config),
            config,
            dir,
            started: Instant::now(),
        })
    }

    fn record(&mut self, paths: Vec<PathBuf>) -> Result<()> {
        for p in paths {
            println!("wrote {}", p.display());
            self.manifest.add(p)?;
        }
        Ok(())
    }

    fn scan(&mut self, output: &ScanOutput) -> Result<()> {
        let paths = output.write(&self.dir)?;
        self.record(paths)
    }

    fn json(&mut self, name: &str, value: &impl serde::Serialize) -> Result<()> {
        let path = self.dir.join(format!("{name}_{}.json", self.config.hash()));
        std::fs::write(&path, serde_json::to_string_pretty(value)?)?;
        self.record(vec![path])
    }

    fn text(&mut self, name: &str, body: &str) -> Result<()> {
        let path = self.dir.join(format!("{name}_{}.txt", self.config.hash()));
        std::fs::write(&path, body)?;
        self.record(vec![path])
    }

    fn finish(mut self, summary: serde_json::Value) -> Result<()> {
        self.manifest.summary = summary;
        self.manifest.elapsed_seconds = self.started.elapsed().as_secs_f64();
        let path = self.manifest.write(&self.dir)?;
        println!("manifest {}", path.display());
        Ok(())
    }
}

fn propagate_cmd(common: &Common) -> Result<ExitCode> {
    let config = common.resolve()?;
    common.require_ddi(&config)?;
    let mut session = Session::new("propagate", config.clone())?;
    let summary = config.install(|| -> Result<serde_json::Value> {
        match config.tier {
            Tier::Internal => {
                let p = evaluate_internal(&config, config.coupling)?;
                println!("tier internal, J/Omega = {}", p.coupling);
                println!("F = {:.12}", p.report.fidelity);
                println!("1-F = {:.6e}", p.report.infidelity);
                if let Some(phi) = p.report.fitted_phase {
                    println!("fitted phase = {phi:.12}");
                }
                println!(
                    "t_d(ud) = {:.9e}, t_d(du) = {:.9e}",
                    p.ddi_time[1], p.ddi_time[2]
                );
                println!("unitarity residual = {:.3e}", p.unitarity_residual);
                session.json("propagate", &p)?;
                Ok(json!({
                    "fidelity": p.report.fidelity,
                    "infidelity": p.report.infidelity,
                    "ddi_time": p.ddi_time,
                    "unitarity_residual": p.unitarity_residual,
                }))
            }
            Tier::Composite => {
                let input = config.motional()?;
                let p = evaluate_composite(
                    &config,
                    config.coupling,
                    config.ell_over_l,
                    config.n_max,
                    &[input.clone()],
                    &[config.construction],
                )?;
                let f = p.entries[0].2;
                println!(
                    "tier composite, J0/Omega = {}, l/L = {}, n_max = {}, input {input}, {}",
                    p.coupling, p.ell_over_l, p.n_max, config.construction
                );
                println!("F = {f:.12}");
                println!("1-F = {:.6e}", 1.0 - f);
                println!("unitarity residual = {:.3e}", p.unitarity_residual);
                session.json("propagate", &p)?;
                Ok(json!({
                    "fidelity": f,
                    "infidelity": 1.0 - f,
                    "unitarity_residual": p.unitarity_residual,
                }))
            }
        }
    })??;
    session.finish(summary)?;
    Ok(ExitCode::SUCCESS)
}

fn fig1_cmd(common: &Common) -> Result<ExitCode> {
    let config = common.resolve()?;
    let mut session = Session::new("fig1", config.clone())?;
    let (scan, window) = config
        .install(|| Ok::<_, Error>((fig1_scan(&config)?, internal_window_average(&config)?)))??;
    session.scan(&scan.output(&config))?;
    let minima = scan.interior_minima();
    println!("interior local minima: {}", minima.len());
    println!(
        "mean F over J/Omega in [{}, {}] ({} samples): {:.8}",
        config.window_start, config.window_end, config.window_samples, window.mean_fidelity
    );
    session.finish(json!({
        "interior_minima": minima.iter().map(|&i| scan.points[i].coupling).collect::<Vec<_>>(),
        "window_mean_fidelity": window.mean_fidelity,
    }))?;
    Ok(ExitCode::SUCCESS)
}

fn fig2_cmd(common: &Common) -> Result<ExitCode> {
    let config = common.resolve()?;
    let mut session = Session::new("fig2", config.clone())?;
    let scan = config.install(|| fig2_scan(&config))??;
    session.scan(&scan.output(&config))?;
    let worst = scan
        .points
        .iter()
        .flat_map(|p| p.entries.iter().map(|e| e.2))
        .fold(1.0, f64::min);
    println!("points: {}, lowest F: {worst:.8}", scan.points.len());
    session.finish(json!({ "points": scan.points.len(), "lowest_fidelity": worst }))?;
    Ok(ExitCode::SUCCESS)
}

fn table1_cmd(common: &Common) -> Result<ExitCode> {
    let config = common.resolve()?;
    let mut session = Session::new("table1", config.clone())?;
    let table = config.install(|| table1_run(&config))??;
    session.scan(&table.output(&config))?;
    let mut text = String::new();
    for c in [
        FidelityConstruction::TraceOut,
        FidelityConstruction::Projection,
    ] {
        text.push_str(&table.formatted(c));
        text.push('\n');
    }
    let better = table.better_construction();
    text.push_str(&format!("better-matching construction: {better}\n"));
    print!("{text}");
    session.text("table1", &text)?;
    session.finish(json!({
        "better_construction": better,
        "max_deviation_trace_out": table.max_deviation(FidelityConstruction::TraceOut),
        "max_deviation_projection": table.max_deviation(FidelityConstruction::Projection),
        "cells": table.cells,
    }))?;
    Ok(ExitCode::SUCCESS)
}

fn phase_scan_cmd(common: &Common) -> Result<ExitCode> {
    let config = common.resolve()?;
    common.require_ddi(&config)?;
    let mut session = Session::new("phase-scan", config.clone())?;
    let scan = config.install(|| phase_tunability_scan(&config))??;
    session.scan(&scan.output(&config))?;
    println!("min F at fitted phase: {:.8}", scan.min_fidelity());
    println!(
        "max circular gap of fitted phases: {:.6}",
        scan.max_circular_gap()
    );
    println!(
        "max discrepancy against theta = -(pi + phi)/2: {:.3e}",
        scan.max_discrepancy()
    );
    session.finish(json!({
        "min_fidelity": scan.min_fidelity(),
        "max_circular_gap": scan.max_circular_gap(),
        "max_discrepancy": scan.max_discrepancy(),
        "rows": scan.rows,
    }))?;
    Ok(ExitCode::SUCCESS)
}

fn adiabatic_cmd(common: &Common) -> Result<ExitCode> {
    let config = common.resolve()?;
    common.require_ddi(&config)?;
    let mut session = Session::new("adiabatic-report", config.clone())?;
    let output = config.install(|| adiabatic_report(&config, 401))??;
    session.scan(&output)?;
    for line in output
        .table
        .header
        .iter()
        .filter(|l| l.starts_with("adiabatic") || l.starts_with("t_d"))
    {
        println!("{line}");
    }
    session.finish(json!({ "header": output.table.header }))?;
    Ok(ExitCode::SUCCESS)
}

fn certify_cmd(common: &Common) -> Result<ExitCode> {
    let config = common.resolve()?;
    common.require_ddi(&config)?;
    let mut session = Session::new("certify", config.clone())?;
    let report = config.install(|| certify(&config))??;
    for c in &report.checks {
        println!(
            "{} {}: {:.3e} (threshold {:.1e}) {}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.value,
            c.threshold,
            c.detail
        );
    }
    session.json("certify", &report)?;
    let passed = report.passed();
    session.finish(json!({ "passed": passed }))?;
    Ok(if passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_NUMERICAL)
    })
}

fn run(cli: &Cli) -> Result<ExitCode> {
    match &cli.command {
        Command::Propagate(c) => propagate_cmd(c),
        Command::Fig1(c) => fig1_cmd(c),
        Command::Fig2(c) => fig2_cmd(c),
        Command::Table1(c) => table1_cmd(c),
        Command::PhaseScan(c) => phase_scan_cmd(c),
        Command::AdiabaticReport(c) => adiabatic_cmd(c),
        Command::Certify(c) => certify_cmd(c),
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io(_) => EXIT_CONFIG,
        Error::Context { source, .. } => exit_code(source),
        e if e.is_config() => EXIT_CONFIG,
        _ => EXIT_NUMERICAL,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
