//! Canned sweeps: the internal-tier J scan, motional scans, the J0-averaged
//! table, the pulse-phase scan, the dressed-state report and the
//! certification suite. Every sweep is deterministic; grid order is kept
//! regardless of thread count.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::adiabatic::{adiabatic_phase, ddi_coupled_rows, dressed_trace, eigensystem_defect};
use crate::config::{RunConfig, Tier};
use crate::error::{Error, Result};
use crate::fidelity::{
    average_over_parameter, controlled_phase_target, fit_controlled_phase, gate_fidelity,
    gate_fidelity_with_motion, linspace, AveragedReport, ComputationalImages, FidelityConstruction,
    FidelityReport, ReportParameters,
};
use crate::linalg::{kron, max_abs, CMatrix, C64};
use crate::model::{InternalBasis, COMPUTATIONAL_DIM, INTERNAL_DIM};
use crate::motion::{
    composite_hamiltonian, evolve_computational_block, MotionalSpace, MotionalState,
};
use crate::propagator::{
    convergence_certify, propagate, ConvergenceReport, EvolutionResult, PropagationOptions,
};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// `ℓ/L` values of the motional table.
pub const TABLE_RATIOS: [f64; 3] = [0.04, 0.07, 0.1];

/// Motional inputs of the motional table, in row order.
pub const TABLE_INPUTS: [&str; 4] = ["one", "plus", "vac", "thermal(2)"];

/// Published J0-averaged fidelities, rows as [`TABLE_INPUTS`], columns as
/// [`TABLE_RATIOS`].
pub const TABLE_REFERENCE: [[f64; 3]; 4] = [
    [0.99995, 0.99983, 0.99906],
    [0.99995, 0.99988, 0.99940],
    [0.99996, 0.99993, 0.99974],
    [0.99995, 0.99957, 0.99830],
];

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

/// Description of one sweep, echoed into the CSV header.
#[derive(Clone, Debug, Serialize)]
pub struct SweepSpec {
    pub name: String,
    pub parameter: String,
    pub grid: Vec<f64>,
    pub tier: Tier,
    pub fixed: Vec<(String, String)>,
    pub output_dir: PathBuf,
}

impl SweepSpec {
    pub fn new(
        name: &str,
        parameter: &str,
        grid: Vec<f64>,
        tier: Tier,
        config: &RunConfig,
    ) -> Result<Self> {
        if grid.is_empty() {
            return Err(Error::InvalidParameter {
                name: "grid",
                reason: format!("sweep `{name}` has an empty grid"),
            });
        }
        if grid.windows(2).any(|w| !(w[0] <= w[1])) {
            return Err(Error::InvalidParameter {
                name: "grid",
                reason: format!("sweep `{name}` grid is not sorted"),
            });
        }
        Ok(SweepSpec {
            name: name.into(),
            parameter: parameter.into(),
            grid,
            tier,
            fixed: Vec::new(),
            output_dir: config.output_dir(),
        })
    }

    pub fn fix(mut self, key: &str, value: impl ToString) -> Self {
        self.fixed.push((key.into(), value.to_string()));
        self
    }
}

/// CSV document: `#` header block, column row, data rows.
#[derive(Clone, Debug)]
pub struct CsvTable {
    pub scan: String,
    pub header: Vec<String>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
    hash: String,
}

impl CsvTable {
    pub fn new(sweep: &SweepSpec, config: &RunConfig, columns: &[&str]) -> Self {
        let echo = config.physics().to_toml();
        let mut header = vec![
            format!("molgate {VERSION}"),
            format!("scan = {}", sweep.name),
            format!("tier = {}", sweep.tier),
            format!(
                "sweep {} over {} points [{}, {}]",
                sweep.parameter,
                sweep.grid.len(),
                sweep.grid[0],
                sweep.grid[sweep.grid.len() - 1]
            ),
        ];
        header.extend(sweep.fixed.iter().map(|(k, v)| format!("fixed {k} = {v}")));
        header.push("config:".into());
        header.extend(
            echo.lines()
                .filter(|l| !l.is_empty())
                .map(|l| format!("  {l}")),
        );
        let mut hasher = Sha256::new();
        hasher.update(sweep.name.as_bytes());
        hasher.update(b"\n");
        hasher.update(echo.as_bytes());
        for (k, v) in &sweep.fixed {
            hasher.update(format!("{k}={v}\n").as_bytes());
        }
        let hash = hasher
            .finalize()
            .iter()
            .take(6)
            .map(|b| format!("{b:02x}"))
            .collect();
        CsvTable {
            scan: sweep.name.clone(),
            header,
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
            hash,
        }
    }

    pub fn note(&mut self, line: impl Into<String>) {
        self.header.push(line.into());
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn file_stem(&self) -> String {
        format!("{}_{}", self.scan, self.hash)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for line in &self.header {
            let _ = writeln!(out, "# {line}");
        }
        let _ = writeln!(out, "{}", self.columns.join(","));
        for row in &self.rows {
            let _ = writeln!(out, "{}", row.join(","));
        }
        out
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }
}

/// One plotted curve: 1-based x/y columns and an optional row filter
/// `(column, value)` in gnuplot syntax.
#[derive(Clone, Debug)]
pub struct PlotSeries {
    pub x: usize,
    pub y: usize,
    pub filter: Vec<(usize, String)>,
    pub title: String,
}

/// gnuplot script rendering `csv` to an SVG next to it.
pub fn plot_script(
    csv: &str,
    stem: &str,
    xlabel: &str,
    ylabel: &str,
    series: &[PlotSeries],
) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "set datafile separator ','");
    let _ = writeln!(s, "set datafile commentschars '#'");
    let _ = writeln!(s, "set terminal svg size 800,560");
    let _ = writeln!(s, "set output '{stem}.svg'");
    let _ = writeln!(s, "set xlabel '{xlabel}'");
    let _ = writeln!(s, "set ylabel '{ylabel}'");
    let _ = writeln!(s, "set key outside");
    let parts: Vec<String> = series
        .iter()
        .map(|p| {
            let y = if p.filter.is_empty() {
                format!("{}", p.y)
            } else {
                let cond: Vec<String> = p
                    .filter
                    .iter()
                    .map(|(c, v)| format!("strcol({c}) eq '{v}'"))
                    .collect();
                format!("({} ? column({}) : 1/0)", cond.join(" && "), p.y)
            };
            format!(
                "'{csv}' every ::1 using {}:{y} with linespoints title '{}'",
                p.x, p.title
            )
        })
        .collect();
    let _ = writeln!(s, "plot {}", parts.join(", \\\n     "));
    s
}

/// A CSV table with its optional plot script.
#[derive(Clone, Debug)]
pub struct ScanOutput {
    pub table: CsvTable,
    pub plot: Option<String>,
}

impl ScanOutput {
    /// Writes `<scan>_<hash>.csv` (and `.gp`) into `dir`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let stem = self.table.file_stem();
        let csv = dir.join(format!("{stem}.csv"));
        std::fs::write(&csv, self.table.render())?;
        let mut paths = vec![csv];
        if let Some(plot) = &self.plot {
            let gp = dir.join(format!("{stem}.gp"));
            std::fs::write(&gp, plot)?;
            paths.push(gp);
        }
        Ok(paths)
    }
}

/// Internal-tier gate at one `J/Ω`.
#[derive(Clone, Debug, Serialize)]
pub struct InternalPoint {
    pub coupling: f64,
    pub report: FidelityReport,
    /// `t_d` for `uu, ud, du, dd`, in units of `T`.
    pub ddi_time: [f64; 4],
    pub unitarity_residual: f64,
    #[serde(skip)]
    pub evolution: EvolutionResult,
}

fn computational_columns() -> CMatrix {
    CMatrix::identity(INTERNAL_DIM, COMPUTATIONAL_DIM)
}

/// Runs the internal-tier gate at `J = coupling · Ω` with `relative_phase`
/// and `target_phase` from `config`.
pub fn evaluate_internal(config: &RunConfig, coupling: f64) -> Result<InternalPoint> {
    let model = config.internal_model(coupling)?;
    let h = model.driven_hamiltonian()?;
    let opts = PropagationOptions {
        tracked_rows: ddi_coupled_rows(),
        ..config.propagation_options(Tier::Internal)
    };
    let evolution = propagate(&h, &model.gate_schedule(), &computational_columns(), &opts)
        .map_err(|e| e.context(format!("internal gate at J/Omega = {coupling}")))?;
    let target = controlled_phase_target(config.target_phase);
    let fidelity = gate_fidelity(&evolution.state, &target)?;
    let mut report = FidelityReport::new(
        fidelity,
        config.target_phase,
        ReportParameters::internal(coupling, config.relative_phase),
    )?;
    if config.fit_phase {
        report = report.with_fitted_phase(fit_controlled_phase(&evolution.state)?.0);
    }
    let t = &evolution.occupation_time;
    Ok(InternalPoint {
        coupling,
        report,
        ddi_time: [t[0], t[1], t[2], t[3]],
        unitarity_residual: evolution.unitarity_residual,
        evolution,
    })
}

/// Mean internal-tier fidelity over the configured `J/Ω` window.
pub fn internal_window_average(config: &RunConfig) -> Result<AveragedReport> {
    let samples = linspace(
        config.window_start,
        config.window_end,
        config.window_samples,
    );
    average_over_parameter(&samples, |j| Ok(evaluate_internal(config, j)?.report))
}

/// Indices `i` (excluding the ends) with `v[i]` below both neighbours.
pub fn interior_local_minima(values: &[f64]) -> Vec<usize> {
    (1..values.len().saturating_sub(1))
        .filter(|&i| values[i] < values[i - 1] && values[i] < values[i + 1])
        .collect()
}

#[derive(Clone, Debug)]
pub struct Fig1Scan {
    pub sweep: SweepSpec,
    pub points: Vec<InternalPoint>,
}

impl Fig1Scan {
    pub fn log10_infidelity(&self) -> Vec<f64> {
        self.points
            .iter()
            .map(|p| p.report.infidelity.log10())
            .collect()
    }

    pub fn interior_minima(&self) -> Vec<usize> {
        interior_local_minima(&self.log10_infidelity())
    }

    pub fn output(&self, config: &RunConfig) -> ScanOutput {
        let mut table = CsvTable::new(
            &self.sweep,
            config,
            &[
                "J_over_Omega",
                "fidelity",
                "infidelity",
                "log10_infidelity",
                "td_uu",
                "td_ud",
                "td_du",
                "td_dd",
                "unitarity_residual",
            ],
        );
        table.note(format!(
            "interior local minima of log10_infidelity: {}",
            self.interior_minima().len()
        ));
        for p in &self.points {
            let mut row = vec![
                num(p.coupling),
                num(p.report.fidelity),
                num(p.report.infidelity),
                num(p.report.infidelity.log10()),
            ];
            row.extend(p.ddi_time.iter().map(|&t| num(t)));
            row.push(num(p.unitarity_residual));
            table.push(row);
        }
        let csv = format!("{}.csv", table.file_stem());
        let plot = plot_script(
            &csv,
            &table.file_stem(),
            "J / Omega",
            "log10(1 - F),  t_d / T",
            &[
                PlotSeries {
                    x: 1,
                    y: 4,
                    filter: vec![],
                    title: "log10 infidelity".into(),
                },
                PlotSeries {
                    x: 1,
                    y: 6,
                    filter: vec![],
                    title: "t_d(ud)".into(),
                },
                PlotSeries {
                    x: 1,
                    y: 8,
                    filter: vec![],
                    title: "t_d(dd)".into(),
                },
            ],
        );
        ScanOutput {
            table,
            plot: Some(plot),
        }
    }
}

/// Internal-tier `J/Ω` scan with `t_d` columns.
pub fn fig1_scan(config: &RunConfig) -> Result<Fig1Scan> {
    let grid = linspace(config.fig1_start, config.fig1_end, config.fig1_points);
    let sweep = SweepSpec::new("fig1", "J_over_Omega", grid, Tier::Internal, config)?
        .fix("relative_phase", config.relative_phase)
        .fix("target_phase", config.target_phase);
    let points = sweep
        .grid
        .par_iter()
        .map(|&j| evaluate_internal(config, j))
        .collect::<Result<Vec<_>>>()?;
    Ok(Fig1Scan { sweep, points })
}

/// Composite-tier fidelities for several inputs from a single propagation.
#[derive(Clone, Debug, Serialize)]
pub struct CompositePoint {
    pub coupling: f64,
    pub ell_over_l: f64,
    pub n_max: usize,
    /// `(input label, construction, F)`.
    pub entries: Vec<(String, FidelityConstruction, f64)>,
    pub unitarity_residual: f64,
}

impl CompositePoint {
    pub fn fidelity(&self, input: &str, construction: FidelityConstruction) -> Option<f64> {
        self.entries
            .iter()
            .find(|(i, c, _)| i == input && *c == construction)
            .map(|e| e.2)
    }
}

/// Propagates all `|c, m>` once at `J0 = coupling · Ω` and evaluates each
/// input under each construction.
pub fn evaluate_composite(
    config: &RunConfig,
    coupling: f64,
    ell_over_l: f64,
    n_max: usize,
    inputs: &[MotionalState],
    constructions: &[FidelityConstruction],
) -> Result<CompositePoint> {
    let (model, space) = config.composite_model(coupling, ell_over_l, n_max)?;
    let context = || {
        format!("composite gate at J0/Omega = {coupling}, ell/L = {ell_over_l}, n_max = {n_max}")
    };
    let evolution =
        evolve_computational_block(&model, &space, &config.propagation_options(Tier::Composite))
            .map_err(|e| e.context(context()))?;
    let unitarity_residual = evolution.unitarity_residual;
    let images = ComputationalImages::new(evolution.state, space.dim())?;
    let target = controlled_phase_target(config.target_phase);
    let mut entries = Vec::with_capacity(inputs.len() * constructions.len());
    for input in inputs {
        for &construction in constructions {
            let f = gate_fidelity_with_motion(&images, &target, input, construction)
                .map_err(|e| e.context(context()))?;
            entries.push((input.to_string(), construction, f));
        }
    }
    Ok(CompositePoint {
        coupling,
        ell_over_l,
        n_max,
        entries,
        unitarity_residual,
    })
}

fn table_inputs() -> Vec<MotionalState> {
    TABLE_INPUTS
        .iter()
        .map(|s| s.parse().expect("built-in labels parse"))
        .collect()
}

fn composite_grid(
    config: &RunConfig,
    couplings: &[f64],
    constructions: &[FidelityConstruction],
) -> Result<Vec<CompositePoint>> {
    let inputs = table_inputs();
    let jobs: Vec<(f64, f64)> = TABLE_RATIOS
        .iter()
        .flat_map(|&r| couplings.iter().map(move |&j| (r, j)))
        .collect();
    jobs.par_iter()
        .map(|&(r, j)| evaluate_composite(config, j, r, config.n_max, &inputs, constructions))
        .collect()
}

#[derive(Clone, Debug)]
pub struct Fig2Scan {
    pub sweep: SweepSpec,
    pub points: Vec<CompositePoint>,
    pub construction: FidelityConstruction,
}

impl Fig2Scan {
    pub fn output(&self, config: &RunConfig) -> ScanOutput {
        let mut table = CsvTable::new(
            &self.sweep,
            config,
            &[
                "ell_over_L",
                "J0_over_Omega",
                "input",
                "construction",
                "fidelity",
                "infidelity",
                "log10_infidelity",
            ],
        );
        for p in &self.points {
            for (input, construction, f) in &p.entries {
                table.push(vec![
                    num(p.ell_over_l),
                    num(p.coupling),
                    input.clone(),
                    construction.to_string(),
                    num(*f),
                    num(1.0 - f),
                    num((1.0 - f).log10()),
                ]);
            }
        }
        let csv = format!("{}.csv", table.file_stem());
        let series: Vec<PlotSeries> = TABLE_INPUTS
            .iter()
            .flat_map(|input| {
                TABLE_RATIOS.iter().map(move |r| PlotSeries {
                    x: 2,
                    y: 7,
                    filter: vec![(1, num(*r)), (3, input.to_string())],
                    title: format!("{input}, l/L = {r}"),
                })
            })
            .collect();
        let plot = plot_script(
            &csv,
            &table.file_stem(),
            "J0 / Omega",
            "log10(1 - F)",
            &series,
        );
        ScanOutput {
            table,
            plot: Some(plot),
        }
    }
}

/// Composite-tier `J0/Ω` scan for every tabulated `ℓ/L` and input.
pub fn fig2_scan(config: &RunConfig) -> Result<Fig2Scan> {
    let grid = linspace(config.fig2_start, config.fig2_end, config.fig2_points);
    let sweep = SweepSpec::new("fig2", "J0_over_Omega", grid, Tier::Composite, config)?
        .fix("ell_over_L", format!("{TABLE_RATIOS:?}"))
        .fix("inputs", TABLE_INPUTS.join(" "))
        .fix("n_max", config.n_max);
    let points = composite_grid(config, &sweep.grid, &[config.construction])?;
    Ok(Fig2Scan {
        sweep,
        points,
        construction: config.construction,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct TableCell {
    pub input: String,
    pub ell_over_l: f64,
    pub construction: FidelityConstruction,
    pub mean_fidelity: f64,
    pub reference: f64,
    pub deviation: f64,
}

#[derive(Clone, Debug)]
pub struct Table1 {
    pub sweep: SweepSpec,
    pub cells: Vec<TableCell>,
    pub points: Vec<CompositePoint>,
}

impl Table1 {
    pub fn cells_for(
        &self,
        construction: FidelityConstruction,
    ) -> impl Iterator<Item = &TableCell> {
        self.cells
            .iter()
            .filter(move |c| c.construction == construction)
    }

    pub fn max_deviation(&self, construction: FidelityConstruction) -> f64 {
        self.cells_for(construction)
            .map(|c| c.deviation.abs())
            .fold(0.0, f64::max)
    }

    /// Construction whose worst cell is closest to the reference values.
    pub fn better_construction(&self) -> FidelityConstruction {
        let constructions: Vec<FidelityConstruction> = {
            let mut v: Vec<_> = self.cells.iter().map(|c| c.construction).collect();
            v.dedup();
            v
        };
        constructions
            .into_iter()
            .min_by(|a, b| self.max_deviation(*a).total_cmp(&self.max_deviation(*b)))
            .unwrap_or(FidelityConstruction::TraceOut)
    }

    pub fn formatted(&self, construction: FidelityConstruction) -> String {
        let mut s = format!("{:<12}", format!("[{construction}]"));
        for r in TABLE_RATIOS {
            let _ = write!(s, "  l/L={r:<16}");
        }
        s.push('\n');
        for input in TABLE_INPUTS {
            let _ = write!(s, "{input:<12}");
            for cell in self.cells_for(construction).filter(|c| c.input == input) {
                let _ = write!(s, "  {:.5} ({:+.1e})", cell.mean_fidelity, cell.deviation);
            }
            s.push('\n');
        }
        s
    }

    pub fn output(&self, config: &RunConfig) -> ScanOutput {
        let mut table = CsvTable::new(
            &self.sweep,
            config,
            &[
                "input",
                "ell_over_L",
                "construction",
                "mean_fidelity",
                "reference",
                "deviation",
            ],
        );
        table.note(format!(
            "better-matching construction: {}",
            self.better_construction()
        ));
        for c in &self.cells {
            table.push(vec![
                c.input.clone(),
                num(c.ell_over_l),
                c.construction.to_string(),
                num(c.mean_fidelity),
                num(c.reference),
                num(c.deviation),
            ]);
        }
        ScanOutput { table, plot: None }
    }
}

/// J0-averaged composite fidelities over the configured window for every
/// tabulated `ℓ/L` and input, under both constructions.
pub fn table1_run(config: &RunConfig) -> Result<Table1> {
    let grid = linspace(
        config.window_start,
        config.window_end,
        config.window_samples,
    );
    let sweep = SweepSpec::new("table1", "J0_over_Omega", grid, Tier::Composite, config)?
        .fix("ell_over_L", format!("{TABLE_RATIOS:?}"))
        .fix("inputs", TABLE_INPUTS.join(" "))
        .fix("n_max", config.n_max);
    let constructions = [
        FidelityConstruction::TraceOut,
        FidelityConstruction::Projection,
    ];
    let points = composite_grid(config, &sweep.grid, &constructions)?;
    let mut cells = Vec::new();
    for construction in constructions {
        for (row, input) in TABLE_INPUTS.iter().enumerate() {
            for (col, &ratio) in TABLE_RATIOS.iter().enumerate() {
                let values: Vec<f64> = points
                    .iter()
                    .filter(|p| p.ell_over_l == ratio)
                    .map(|p| {
                        p.fidelity(input, construction)
                            .expect("every input evaluated")
                    })
                    .collect();
                let mean = values.iter().sum::<f64>() / values.len() as f64;
                let reference = TABLE_REFERENCE[row][col];
                cells.push(TableCell {
                    input: input.to_string(),
                    ell_over_l: ratio,
                    construction,
                    mean_fidelity: mean,
                    reference,
                    deviation: mean - reference,
                });
            }
        }
    }
    Ok(Table1 {
        sweep,
        cells,
        points,
    })
}

/// Wraps an angle into `[0, 2π)`.
pub fn wrap_angle(x: f64) -> f64 {
    let y = x.rem_euclid(2.0 * PI);
    if y >= 2.0 * PI {
        0.0
    } else {
        y
    }
}

/// Distance on the circle.
pub fn circular_distance(a: f64, b: f64) -> f64 {
    let d = wrap_angle(a - b);
    d.min(2.0 * PI - d)
}

/// Controlled phase predicted from the pulse phase by `θ = -(π + φ)/2`.
pub fn text_mapping_phase(theta: f64) -> f64 {
    wrap_angle(-2.0 * theta - PI)
}

#[derive(Clone, Debug, Serialize)]
pub struct PhaseRow {
    pub relative_phase: f64,
    pub fitted_phase: f64,
    pub fidelity: f64,
    pub predicted_phase: f64,
    pub discrepancy: f64,
}

#[derive(Clone, Debug)]
pub struct PhaseScan {
    pub sweep: SweepSpec,
    pub coupling: f64,
    pub rows: Vec<PhaseRow>,
}

impl PhaseScan {
    pub fn min_fidelity(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| r.fidelity)
            .fold(f64::INFINITY, f64::min)
    }

    /// Largest gap between consecutive fitted phases around the circle.
    pub fn max_circular_gap(&self) -> f64 {
        let mut phases: Vec<f64> = self.rows.iter().map(|r| r.fitted_phase).collect();
        phases.sort_by(f64::total_cmp);
        let mut gap: f64 = 2.0 * PI - phases[phases.len() - 1] + phases[0];
        for w in phases.windows(2) {
            gap = gap.max(w[1] - w[0]);
        }
        gap
    }

    pub fn max_discrepancy(&self) -> f64 {
        self.rows.iter().map(|r| r.discrepancy).fold(0.0, f64::max)
    }

    /// Largest `|Δφ*|` between neighbouring grid points (circularly).
    pub fn max_adjacent_step(&self) -> f64 {
        self.rows
            .windows(2)
            .map(|w| circular_distance(w[1].fitted_phase, w[0].fitted_phase))
            .fold(0.0, f64::max)
    }

    pub fn output(&self, config: &RunConfig) -> ScanOutput {
        let mut table = CsvTable::new(
            &self.sweep,
            config,
            &[
                "relative_phase",
                "fitted_phase",
                "fidelity",
                "predicted_phase",
                "discrepancy",
            ],
        );
        table.note(format!("J/Omega = {}", self.coupling));
        table.note(format!(
            "min fidelity at fitted phase = {}",
            num(self.min_fidelity())
        ));
        table.note(format!(
            "max circular gap of fitted phases = {}",
            num(self.max_circular_gap())
        ));
        table.note(format!(
            "max discrepancy against theta = -(pi + phi)/2 = {}",
            num(self.max_discrepancy())
        ));
        for r in &self.rows {
            table.push(vec![
                num(r.relative_phase),
                num(r.fitted_phase),
                num(r.fidelity),
                num(r.predicted_phase),
                num(r.discrepancy),
            ]);
        }
        let csv = format!("{}.csv", table.file_stem());
        let plot = plot_script(
            &csv,
            &table.file_stem(),
            "theta",
            "phi",
            &[
                PlotSeries {
                    x: 1,
                    y: 2,
                    filter: vec![],
                    title: "fitted".into(),
                },
                PlotSeries {
                    x: 1,
                    y: 4,
                    filter: vec![],
                    title: "theta = -(pi + phi)/2".into(),
                },
            ],
        );
        ScanOutput {
            table,
            plot: Some(plot),
        }
    }
}

/// Fits the controlled phase for `phase_scan_points` values of `θ` evenly
/// spaced on `[0, 2π)` at `J/Ω = coupling`.
pub fn phase_tunability_scan(config: &RunConfig) -> Result<PhaseScan> {
    let n = config.phase_scan_points;
    let grid: Vec<f64> = (0..n).map(|k| 2.0 * PI * k as f64 / n as f64).collect();
    let sweep = SweepSpec::new("phase_scan", "relative_phase", grid, Tier::Internal, config)?
        .fix("J_over_Omega", config.coupling);
    let rows = sweep
        .grid
        .par_iter()
        .map(|&theta| {
            let c = RunConfig {
                relative_phase: theta,
                fit_phase: false,
                ..config.clone()
            };
            let point = evaluate_internal(&c, config.coupling)?;
            let (phi, fidelity) = fit_controlled_phase(&point.evolution.state)?;
            let predicted = text_mapping_phase(theta);
            Ok(PhaseRow {
                relative_phase: theta,
                fitted_phase: phi,
                fidelity,
                predicted_phase: predicted,
                discrepancy: circular_distance(phi, predicted),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PhaseScan {
        sweep,
        coupling: config.coupling,
        rows,
    })
}

/// Dressed energies along the pulse pair, with the adiabatic phase and
/// `t_d` for each computational input in the header.
pub fn adiabatic_report(config: &RunConfig, samples: usize) -> Result<ScanOutput> {
    let model = config.internal_model(config.coupling)?;
    let trace = dressed_trace(&model, samples)?;
    let grid: Vec<f64> = trace.iter().map(|s| s.time).collect();
    let sweep = SweepSpec::new("adiabatic", "time", grid, Tier::Internal, config)?
        .fix("J_over_Omega", config.coupling);
    let mut table = CsvTable::new(
        &sweep,
        config,
        &[
            "time",
            "drive_re",
            "drive_im",
            "xi_plus_plus",
            "xi_plus_minus",
            "xi_minus_plus",
            "xi_minus_minus",
        ],
    );
    let phase = adiabatic_phase(&model)?;
    table.note(format!("adiabatic phase over one pulse = {}", num(phase)));
    let point = evaluate_internal(config, config.coupling)?;
    let basis = InternalBasis;
    for (c, t) in point.ddi_time.iter().enumerate() {
        table.note(format!("t_d({}) = {}", basis.label(c), num(*t)));
    }
    table.note(format!("gate fidelity = {}", num(point.report.fidelity)));
    for s in &trace {
        table.push(vec![
            num(s.time),
            num(s.drive_re),
            num(s.drive_im),
            num(s.xi_plus_plus),
            num(s.xi_plus_minus),
            num(s.xi_minus_plus),
            num(s.xi_minus_minus),
        ]);
    }
    let csv = format!("{}.csv", table.file_stem());
    let plot = plot_script(
        &csv,
        &table.file_stem(),
        "t / T",
        "dressed energy",
        &(4..=7)
            .map(|y| PlotSeries {
                x: 1,
                y,
                filter: vec![],
                title: table.columns[y - 1].clone(),
            })
            .collect::<Vec<_>>(),
    );
    Ok(ScanOutput {
        table,
        plot: Some(plot),
    })
}

/// Outcome of one certification check.
#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub threshold: f64,
    pub detail: String,
}

impl Check {
    fn below(name: &str, value: f64, threshold: f64, detail: impl Into<String>) -> Self {
        Check {
            name: name.into(),
            passed: value < threshold,
            value,
            threshold,
            detail: detail.into(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CertifyReport {
    pub checks: Vec<Check>,
    pub internal_convergence: ConvergenceReport,
    pub composite_convergence: ConvergenceReport,
}

impl CertifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// Seed of the certification suite's random draws.
pub const CERTIFY_SEED: u64 = 0x6d6f_6c67_6174_65;

/// Step-halving certification of both tiers plus the invariant suite.
pub fn certify(config: &RunConfig) -> Result<CertifyReport> {
    let mut checks = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(CERTIFY_SEED);
    let target = controlled_phase_target(config.target_phase);
    let mut residuals: Vec<f64> = Vec::new();

    let internal_steps = config.steps_for(Tier::Internal);
    let internal_convergence =
        convergence_certify(internal_steps, config.convergence_tol, |steps| {
            let c = RunConfig {
                steps_per_pulse: Some(steps),
                ..config.clone()
            };
            let p = evaluate_internal(&c, config.coupling)?;
            Ok((p.evolution.state, p.report.fidelity))
        })?;
    checks.push(Check {
        name: "internal step halving".into(),
        passed: internal_convergence.passed,
        value: internal_convergence.state_differences[0]
            .max(internal_convergence.metric_differences[0]),
        threshold: config.convergence_tol,
        detail: format!("steps {:?}", internal_convergence.steps),
    });

    let composite_ratio = TABLE_RATIOS[TABLE_RATIOS.len() - 1];
    let composite_convergence = convergence_certify(
        config.steps_for(Tier::Composite),
        config.convergence_tol,
        |steps| {
            let c = RunConfig {
                steps_per_pulse: Some(steps),
                ..config.clone()
            };
            let (model, space) =
                c.composite_model(config.coupling, composite_ratio, config.n_max)?;
            let r = evolve_computational_block(
                &model,
                &space,
                &c.propagation_options(Tier::Composite),
            )?;
            let images = ComputationalImages::new(r.state.clone(), space.dim())?;
            let f = gate_fidelity_with_motion(
                &images,
                &target,
                &MotionalState::thermal(2.0),
                FidelityConstruction::TraceOut,
            )?;
            Ok((r.state, f))
        },
    )?;
    checks.push(Check {
        name: "composite step halving".into(),
        passed: composite_convergence.passed,
        value: composite_convergence.state_differences[0]
            .max(composite_convergence.metric_differences[0]),
        threshold: config.convergence_tol,
        detail: format!(
            "steps {:?}, ell/L = {composite_ratio}",
            composite_convergence.steps
        ),
    });

    // Eigensystem against a numerical eigensolver.
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let j = rng.random_range(-10.0..10.0);
        let drive = C64::from_polar(rng.random_range(0.0..10.0), rng.random_range(0.0..2.0 * PI));
        worst = worst.max(eigensystem_defect(j, drive)?);
    }
    checks.push(Check::below(
        "dressed eigensystem",
        worst,
        1e-12,
        "1000 random (J, Omega)",
    ));

    // Parity selection rule of the operator-valued coupling.
    let (_, space) = config.composite_model(config.coupling, composite_ratio, config.n_max)?;
    let j_op = space.ddi_operator()?;
    let odd: f64 = j_op
        .iter()
        .filter(|(r, c, _)| (r + c) % 2 == 1)
        .map(|(_, _, v)| v.norm())
        .sum();
    let parity = space.parity().to_dense();
    let jd = j_op.to_dense();
    let commutator = max_abs(&(&jd * &parity - &parity * &jd));
    checks.push(Check {
        name: "coupling parity".into(),
        passed: odd == 0.0 && commutator == 0.0,
        value: odd.max(commutator),
        threshold: 0.0,
        detail: "odd-parity entries and [J, P] must vanish exactly".into(),
    });

    // Scalar limit of the composite tier.
    let small_n = crate::motion::MIN_FOCK_LEVEL;
    let (zero_model, zero_space) = config.composite_model(config.coupling, 0.0, small_n)?;
    let composite = evolve_computational_block(
        &zero_model,
        &zero_space,
        &config.propagation_options(Tier::Internal),
    )?;
    residuals.push(composite.unitarity_residual);
    let images = ComputationalImages::new(composite.state, zero_space.dim())?;
    let internal_equiv = evaluate_internal(config, -config.coupling)?;
    residuals.push(internal_equiv.unitarity_residual);
    let mut scalar_gap: f64 = 0.0;
    for input in [
        MotionalState::vacuum(),
        MotionalState::fock(1),
        MotionalState::plus(),
    ] {
        let f =
            gate_fidelity_with_motion(&images, &target, &input, FidelityConstruction::TraceOut)?;
        scalar_gap = scalar_gap.max((f - internal_equiv.report.fidelity).abs());
    }
    let h_gap = {
        let hc = composite_hamiltonian(
            &zero_model,
            &MotionalSpace {
                include_trap: false,
                ..zero_space
            },
        )?;
        let internal_model = config.internal_model(-config.coupling)?;
        let hi = internal_model.driven_hamiltonian()?;
        let id = CMatrix::identity(zero_space.dim(), zero_space.dim());
        [0.13, 0.5, 1.37, 1.9]
            .iter()
            .map(|&t| max_abs(&(hc.dense_at(t) - kron(&hi.dense_at(t), &id))))
            .fold(0.0, f64::max)
    };
    checks.push(Check::below(
        "scalar limit",
        scalar_gap.max(h_gap),
        1e-12,
        format!("ell/L = 0, n_max = {small_n}, composite vs internal tier at J = -J0"),
    ));

    // Factorised evolution reaches F = 1.
    let nf = 6;
    let mot_h = CMatrix::from_fn(nf, nf, |_, _| {
        C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    });
    let mot_u = ((&mot_h + mot_h.adjoint()) * C64::new(0.0, -0.5)).exp();
    let mut internal_u = CMatrix::identity(INTERNAL_DIM, INTERNAL_DIM);
    internal_u.view_mut((0, 0), (4, 4)).copy_from(&target);
    let full = kron(&internal_u, &mot_u);
    let cols = CMatrix::from_fn(INTERNAL_DIM * nf, COMPUTATIONAL_DIM * nf, |r, c| {
        full[(r, c)]
    });
    let images = ComputationalImages::new(cols, nf)?;
    let mut fact_gap: f64 = 0.0;
    for input in [
        MotionalState::vacuum(),
        MotionalState::plus(),
        MotionalState::fock(3),
    ] {
        let f =
            gate_fidelity_with_motion(&images, &target, &input, FidelityConstruction::TraceOut)?;
        fact_gap = fact_gap.max((f - 1.0).abs());
    }
    checks.push(Check::below(
        "factorised evolution",
        fact_gap,
        1e-10,
        "U = target ⊗ U_motion",
    ));

    // Global phase.
    let point = evaluate_internal(config, config.coupling)?;
    residuals.push(point.unitarity_residual);
    let mut phase_gap: f64 = 0.0;
    for _ in 0..16 {
        let gamma = rng.random_range(0.0..2.0 * PI);
        let rotated = &point.evolution.state * C64::from_polar(1.0, gamma);
        phase_gap =
            phase_gap.max((gate_fidelity(&rotated, &target)? - point.report.fidelity).abs());
    }
    checks.push(Check::below(
        "global phase",
        phase_gap,
        1e-12,
        "16 random phases",
    ));

    // DDI-superposition time. The ud/du symmetry is exact only for
    // θ ≡ π/2 (mod π); other phases are reported in the detail.
    let symmetric = evaluate_internal(
        &RunConfig {
            relative_phase: FRAC_PI_2,
            ..config.clone()
        },
        config.coupling,
    )?;
    residuals.push(symmetric.unitarity_residual);
    let [_, sym_ud, sym_du, _] = symmetric.ddi_time;
    let [uu, ud, du, _] = point.ddi_time;
    checks.push(Check::below(
        "t_d symmetry",
        (sym_ud - sym_du).abs(),
        config.convergence_tol,
        format!(
            "theta = pi/2: t_d(ud) = {sym_ud}, t_d(du) = {sym_du}; configured theta = {}: t_d(ud) - t_d(du) = {:e}",
            config.relative_phase,
            ud - du
        ),
    ));
    checks.push(Check {
        name: "t_d dark state".into(),
        passed: uu == 0.0,
        value: uu,
        threshold: 0.0,
        detail: "t_d(uu) must vanish exactly".into(),
    });

    let worst_residual = residuals.iter().copied().fold(0.0, f64::max);
    checks.push(Check::below(
        "unitarity",
        worst_residual,
        1e-9,
        "Frobenius residual of every run above",
    ));

    Ok(CertifyReport {
        checks,
        internal_convergence,
        composite_convergence,
    })
}
