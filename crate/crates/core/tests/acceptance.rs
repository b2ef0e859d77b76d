//! Acceptance report: one PASS/FAIL line per criterion. Failing criteria are
//! reported, not asserted, so the process exits 0 either way.

use std::f64::consts::PI;
use std::time::Instant;

use molgate::config::RunConfig;
use molgate::experiments::{
    certify, evaluate_composite, fig1_scan, internal_window_average, phase_tunability_scan,
    table1_run, Table1, TABLE_INPUTS,
};
use molgate::fidelity::FidelityConstruction;
use molgate::motion::MotionalState;
use molgate::Result;

const WINDOW_REFERENCE: f64 = 0.99996;
const WINDOW_TOL: f64 = 3e-5;
const TABLE_TOL: f64 = 1e-4;
const BOUND_WIDE: f64 = 5e-3;
const BOUND_NARROW: f64 = 5e-4;
const TRUNCATION_TOL: f64 = 1e-6;
const PHASE_MIN_FIDELITY: f64 = 0.9999;
const MIN_INTERIOR_MINIMA: usize = 2;

struct Outcome {
    passed: bool,
    detail: String,
}

fn report(id: usize, name: &str, run: impl FnOnce() -> Result<Outcome>) -> bool {
    let start = Instant::now();
    let (passed, detail) = match run() {
        Ok(o) => (o.passed, o.detail),
        Err(e) => (false, format!("error: {e}")),
    };
    println!(
        "{} criterion {id} ({name}): {detail} [{:.1} s]",
        if passed { "PASS" } else { "FAIL" },
        start.elapsed().as_secs_f64()
    );
    passed
}

fn window_average() -> Result<Outcome> {
    let c = RunConfig::default();
    let mean = internal_window_average(&c)?.mean_fidelity;
    let dev = mean - WINDOW_REFERENCE;
    let identity_pulse = RunConfig {
        relative_phase: PI / 2.0,
        ..RunConfig::default()
    };
    let alt = internal_window_average(&identity_pulse)?.mean_fidelity;
    println!("INFO criterion 1: theta = pi/2 gives mean F = {alt:.8} against CZ");
    Ok(Outcome {
        passed: dev.abs() <= WINDOW_TOL,
        detail: format!(
            "theta = pi, {} samples: mean F = {mean:.8}, deviation {dev:+.2e} (tol {WINDOW_TOL:.0e})",
            c.window_samples
        ),
    })
}

fn table_reproduction(table: &Table1) -> Result<Outcome> {
    for c in [
        FidelityConstruction::TraceOut,
        FidelityConstruction::Projection,
    ] {
        for line in table.formatted(c).lines() {
            println!("INFO criterion 2: {line}");
        }
    }
    let better = table.better_construction();
    let misses: Vec<String> = table
        .cells_for(better)
        .filter(|cell| cell.deviation.abs() > TABLE_TOL)
        .map(|cell| {
            format!(
                "{} at l/L = {}: {:+.1e}",
                cell.input, cell.ell_over_l, cell.deviation
            )
        })
        .collect();
    Ok(Outcome {
        passed: misses.is_empty(),
        detail: format!(
            "better construction {better}, max |dF| = {:.2e} (trace-out {:.2e}, projection {:.2e}); {} of 12 outside {TABLE_TOL:.0e}{}",
            table.max_deviation(better),
            table.max_deviation(FidelityConstruction::TraceOut),
            table.max_deviation(FidelityConstruction::Projection),
            misses.len(),
            if misses.is_empty() { String::new() } else { format!(": {}", misses.join("; ")) }
        ),
    })
}

fn pure_input_bound(table: &Table1) -> Result<Outcome> {
    let mut passed = true;
    let mut parts = Vec::new();
    for (ratio, bound) in [(0.1, BOUND_WIDE), (0.04, BOUND_NARROW)] {
        let point = table
            .points
            .iter()
            .find(|p| (p.coupling - 4.0).abs() < 1e-9 && (p.ell_over_l - ratio).abs() < 1e-12)
            .ok_or_else(|| molgate::Error::Config(format!("no J0 = 4 point at l/L = {ratio}")))?;
        let worst = ["one", "plus", "vac"]
            .iter()
            .filter_map(|input| point.fidelity(input, FidelityConstruction::TraceOut))
            .map(|f| 1.0 - f)
            .fold(0.0, f64::max);
        passed &= worst <= bound;
        parts.push(format!(
            "l/L = {ratio}: max 1-F = {worst:.2e} (bound {bound:.0e})"
        ));
    }
    Ok(Outcome {
        passed,
        detail: parts.join(", "),
    })
}

fn truncation() -> Result<Outcome> {
    let c = RunConfig::default();
    let inputs: Vec<MotionalState> = TABLE_INPUTS
        .iter()
        .map(|s| s.parse())
        .collect::<Result<_>>()?;
    let constructions = [FidelityConstruction::TraceOut];
    let low = evaluate_composite(&c, 4.0, 0.1, 40, &inputs, &constructions)?;
    let high = evaluate_composite(&c, 4.0, 0.1, 100, &inputs, &constructions)?;
    let diff = low
        .entries
        .iter()
        .zip(&high.entries)
        .map(|(a, b)| (a.2 - b.2).abs())
        .fold(0.0, f64::max);
    Ok(Outcome {
        passed: diff < TRUNCATION_TOL,
        detail: format!("J0 = 4, l/L = 0.1, all table inputs: max |F(100) - F(40)| = {diff:.2e} (tol {TRUNCATION_TOL:.0e})"),
    })
}

fn phase_tunability() -> Result<Outcome> {
    let c = RunConfig::default();
    let scan = phase_tunability_scan(&c)?;
    let spacing = 2.0 * PI / c.phase_scan_points as f64;
    let gap_bound = 2.0 * spacing * 1.2;
    let min_f = scan.min_fidelity();
    let gap = scan.max_circular_gap();
    Ok(Outcome {
        passed: min_f > PHASE_MIN_FIDELITY && gap <= gap_bound,
        detail: format!(
            "{} theta values: min F = {min_f:.8} (> {PHASE_MIN_FIDELITY}), max phase gap = {gap:.4} (<= {gap_bound:.4})",
            scan.rows.len()
        ),
    })
}

fn invariants() -> Result<Outcome> {
    let r = certify(&RunConfig::default())?;
    for check in &r.checks {
        println!(
            "INFO criterion 6: {} {}: {:.2e} (threshold {:.0e})",
            if check.passed { "ok" } else { "failed" },
            check.name,
            check.value,
            check.threshold
        );
    }
    let failed: Vec<&str> = r
        .checks
        .iter()
        .filter(|c| !c.passed)
        .map(|c| c.name.as_str())
        .collect();
    Ok(Outcome {
        passed: r.passed(),
        detail: if failed.is_empty() {
            format!("all {} checks passed", r.checks.len())
        } else {
            format!("failed: {}", failed.join(", "))
        },
    })
}

fn oscillations() -> Result<Outcome> {
    let c = RunConfig::default();
    let scan = fig1_scan(&c)?;
    let minima: Vec<String> = scan
        .interior_minima()
        .iter()
        .map(|&i| format!("{:.2}", scan.points[i].coupling))
        .collect();
    Ok(Outcome {
        passed: minima.len() >= MIN_INTERIOR_MINIMA,
        detail: format!(
            "{} points: {} interior minima at J/Omega = [{}]",
            scan.points.len(),
            minima.len(),
            minima.join(", ")
        ),
    })
}

fn main() {
    let mut passed = 0;
    let total = 7;
    passed += report(1, "window average", window_average) as usize;
    let start = Instant::now();
    let table = table1_run(&RunConfig::default());
    println!(
        "INFO criteria 2-3: table run took {:.1} s",
        start.elapsed().as_secs_f64()
    );
    match &table {
        Ok(t) => {
            passed += report(2, "table reproduction", || table_reproduction(t)) as usize;
            passed += report(3, "pure-input bound", || pure_input_bound(t)) as usize;
        }
        Err(e) => {
            println!("FAIL criterion 2 (table reproduction): error: {e}");
            println!("FAIL criterion 3 (pure-input bound): error: {e}");
        }
    }
    passed += report(4, "truncation", truncation) as usize;
    passed += report(5, "phase tunability", phase_tunability) as usize;
    passed += report(6, "invariant suite", invariants) as usize;
    passed += report(7, "oscillations", oscillations) as usize;
    println!("acceptance: {passed}/{total} criteria passed");
}
