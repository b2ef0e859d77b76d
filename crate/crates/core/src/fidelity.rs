//! Average gate fidelity against controlled-phase targets.
//!
//! For a 4×4 block `M = P target† U P` the fidelity is
//! `F = [Tr(M M†) + |Tr M|²] / 20`. Leakage out of the computational block
//! lowers `Tr(M M†)` below 4.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{CMatrix, C64, ONE, ZERO};
use crate::model::{COMPUTATIONAL_DIM, INTERNAL_DIM};
use crate::motion::MotionalState;

const N: usize = COMPUTATIONAL_DIM;
const NORMALIZATION: f64 = (N * (N + 1)) as f64;

/// Upper slack allowed on `F` from rounding.
pub const FIDELITY_SLACK: f64 = 1e-9;

/// `diag(1, 1, 1, e^{iφ})` on `{uu, ud, du, dd}`.
pub fn controlled_phase_target(phase: f64) -> CMatrix {
    let mut m = CMatrix::identity(N, N);
    m[(3, 3)] = C64::from_polar(1.0, phase);
    m
}

/// `[Tr(M M†) + |Tr M|²] / 20` for a 4×4 block.
pub fn block_fidelity(m: &CMatrix) -> f64 {
    let frob: f64 = m.iter().map(|z| z.norm_sqr()).sum();
    (frob + m.trace().norm_sqr()) / NORMALIZATION
}

fn check_target(target: &CMatrix) -> Result<()> {
    if target.shape() != (N, N) {
        return Err(Error::Dimension {
            expected: format!("{N}x{N} target"),
            found: format!("{}x{}", target.nrows(), target.ncols()),
        });
    }
    Ok(())
}

/// Fidelity of an internal-space evolution. `u` has 9 rows and either 9
/// columns (full propagator) or 4 (images of the computational states).
pub fn gate_fidelity(u: &CMatrix, target: &CMatrix) -> Result<f64> {
    check_target(target)?;
    if u.nrows() != INTERNAL_DIM || !(u.ncols() == INTERNAL_DIM || u.ncols() == N) {
        return Err(Error::Dimension {
            expected: "9x9 or 9x4 evolution".into(),
            found: format!("{}x{}", u.nrows(), u.ncols()),
        });
    }
    let block = u.view((0, 0), (N, N));
    Ok(block_fidelity(&(target.adjoint() * block)))
}

/// How motional degrees of freedom are removed before comparing with the
/// internal target.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FidelityConstruction {
    /// Kraus sum over final Fock states.
    TraceOut,
    /// Block of `<χ|U|χ>` for the initial motional state.
    Projection,
}

impl fmt::Display for FidelityConstruction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FidelityConstruction::TraceOut => "trace-out",
            FidelityConstruction::Projection => "projection",
        })
    }
}

impl FromStr for FidelityConstruction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "trace-out" | "trace_out" => Ok(FidelityConstruction::TraceOut),
            "projection" => Ok(FidelityConstruction::Projection),
            other => Err(Error::Config(format!(
                "unknown fidelity construction `{other}` (expected trace-out or projection)"
            ))),
        }
    }
}

/// Images of the computational states tensored with every Fock level,
/// i.e. `U (P ⊗ 1)`: rows `9·nf`, column `c·nf + m` is `U|c, m>`.
#[derive(Clone, Debug)]
pub struct ComputationalImages {
    pub columns: CMatrix,
    pub fock_dim: usize,
}

impl ComputationalImages {
    pub fn new(columns: CMatrix, fock_dim: usize) -> Result<Self> {
        if fock_dim == 0
            || columns.nrows() != INTERNAL_DIM * fock_dim
            || columns.ncols() != N * fock_dim
        {
            return Err(Error::Dimension {
                expected: format!("{}x{}", INTERNAL_DIM * fock_dim, N * fock_dim),
                found: format!("{}x{}", columns.nrows(), columns.ncols()),
            });
        }
        Ok(ComputationalImages { columns, fock_dim })
    }

    /// `U|c, χ>` for each computational `c`, as a `9·nf × 4` matrix.
    pub fn images_of(&self, chi: &[C64]) -> Result<CMatrix> {
        let nf = self.fock_dim;
        if chi.len() != nf {
            return Err(Error::Dimension {
                expected: format!("{nf} motional amplitudes"),
                found: chi.len().to_string(),
            });
        }
        let mut out = CMatrix::zeros(INTERNAL_DIM * nf, N);
        for c in 0..N {
            for (m, &a) in chi.iter().enumerate() {
                if a != ZERO {
                    out.column_mut(c)
                        .axpy(a, &self.columns.column(c * nf + m), ONE);
                }
            }
        }
        Ok(out)
    }
}

/// Per-final-Fock-state blocks `M_k[c', c] = <c', k| target† U |c, χ>`.
fn kraus_blocks(images: &CMatrix, fock_dim: usize, target: &CMatrix) -> Vec<CMatrix> {
    let td = target.adjoint();
    (0..fock_dim)
        .map(|k| {
            let block = CMatrix::from_fn(N, N, |r, c| images[(r * fock_dim + k, c)]);
            &td * block
        })
        .collect()
}

/// Fidelity of a pure motional input given `U|c, χ>` (see
/// [`ComputationalImages::images_of`]).
pub fn pure_motional_fidelity(
    images: &CMatrix,
    fock_dim: usize,
    chi: &[C64],
    target: &CMatrix,
    construction: FidelityConstruction,
) -> Result<f64> {
    check_target(target)?;
    if images.shape() != (INTERNAL_DIM * fock_dim, N) || chi.len() != fock_dim {
        return Err(Error::Dimension {
            expected: format!(
                "{}x{N} images and {fock_dim} amplitudes",
                INTERNAL_DIM * fock_dim
            ),
            found: format!("{}x{} and {}", images.nrows(), images.ncols(), chi.len()),
        });
    }
    let norm: f64 = chi.iter().map(|z| z.norm_sqr()).sum();
    if (norm - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidParameter {
            name: "motional_state",
            reason: format!("input has squared norm {norm}"),
        });
    }
    let blocks = kraus_blocks(images, fock_dim, target);
    Ok(match construction {
        FidelityConstruction::TraceOut => blocks.iter().map(block_fidelity).sum(),
        FidelityConstruction::Projection => {
            let mut m = CMatrix::zeros(N, N);
            for (b, a) in blocks.iter().zip(chi) {
                m += b * a.conj();
            }
            block_fidelity(&m)
        }
    })
}

/// Fidelity of a composite evolution for a pure or thermal motional input.
/// Thermal inputs are the Bose–Einstein-weighted mean of Fock-input values.
pub fn gate_fidelity_with_motion(
    images: &ComputationalImages,
    target: &CMatrix,
    input: &MotionalState,
    construction: FidelityConstruction,
) -> Result<f64> {
    let mut total = 0.0;
    for (weight, chi) in input.ensemble(images.fock_dim - 1)? {
        let evolved = images.images_of(&chi)?;
        total +=
            weight * pure_motional_fidelity(&evolved, images.fock_dim, &chi, target, construction)?;
    }
    Ok(total)
}

/// Parameters echoed with each fidelity value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportParameters {
    /// `J/Ω` on the internal tier, `J0/Ω` on the composite tier.
    pub coupling_ratio: f64,
    pub relative_phase: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub length_ratio: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub motional_state: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_max: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub construction: Option<FidelityConstruction>,
}

impl ReportParameters {
    pub fn internal(coupling_ratio: f64, relative_phase: f64) -> Self {
        ReportParameters {
            coupling_ratio,
            relative_phase,
            length_ratio: None,
            motional_state: None,
            n_max: None,
            construction: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FidelityReport {
    pub fidelity: f64,
    pub infidelity: f64,
    pub target_phase: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fitted_phase: Option<f64>,
    pub parameters: ReportParameters,
}

impl FidelityReport {
    pub fn new(fidelity: f64, target_phase: f64, parameters: ReportParameters) -> Result<Self> {
        if !(fidelity >= 0.0 && fidelity <= 1.0 + FIDELITY_SLACK) {
            return Err(Error::FidelityRange(fidelity));
        }
        Ok(FidelityReport {
            fidelity,
            infidelity: 1.0 - fidelity,
            target_phase,
            fitted_phase: None,
            parameters,
        })
    }

    pub fn with_fitted_phase(mut self, phase: f64) -> Self {
        self.fitted_phase = Some(phase);
        self
    }

    pub const CSV_COLUMNS: [&'static str; 9] = [
        "coupling_ratio",
        "relative_phase",
        "length_ratio",
        "motional_state",
        "n_max",
        "target_phase",
        "fitted_phase",
        "fidelity",
        "infidelity",
    ];

    /// One CSV row in [`Self::CSV_COLUMNS`] order; absent fields are empty.
    pub fn csv_row(&self) -> String {
        let num = |x: f64| format!("{x:.16e}");
        let opt = |x: Option<f64>| x.map(num).unwrap_or_default();
        let p = &self.parameters;
        [
            num(p.coupling_ratio),
            num(p.relative_phase),
            opt(p.length_ratio),
            p.motional_state.clone().unwrap_or_default(),
            p.n_max.map(|n| n.to_string()).unwrap_or_default(),
            num(self.target_phase),
            opt(self.fitted_phase),
            num(self.fidelity),
            num(self.infidelity),
        ]
        .join(",")
    }
}

/// Mean over a sampled parameter with per-sample detail.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AveragedReport {
    pub mean_fidelity: f64,
    pub mean_infidelity: f64,
    pub samples: Vec<(f64, FidelityReport)>,
}

/// Evaluates `runner` at every sample (in parallel on the current rayon
/// pool) and averages in sample order.
pub fn average_over_parameter<F>(samples: &[f64], runner: F) -> Result<AveragedReport>
where
    F: Fn(f64) -> Result<FidelityReport> + Sync,
{
    if samples.is_empty() {
        return Err(Error::InvalidParameter {
            name: "samples",
            reason: "need at least one sample".into(),
        });
    }
    let reports: Vec<FidelityReport> = samples
        .par_iter()
        .map(|&x| runner(x).map_err(|e| e.context(format!("sample {x}"))))
        .collect::<Result<_>>()?;
    let mut sum = 0.0;
    for r in &reports {
        sum += r.fidelity;
    }
    let mean = sum / samples.len() as f64;
    Ok(AveragedReport {
        mean_fidelity: mean,
        mean_infidelity: 1.0 - mean,
        samples: samples.iter().copied().zip(reports).collect(),
    })
}

/// `n` equally spaced points from `start` to `end` inclusive.
pub fn linspace(start: f64, end: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![start],
        _ => (0..n)
            .map(|k| start + (end - start) * k as f64 / (n - 1) as f64)
            .collect(),
    }
}

fn wrap_phase(x: f64) -> f64 {
    let y = x.rem_euclid(2.0 * PI);
    if y >= 2.0 * PI {
        0.0
    } else {
        y
    }
}

const GOLDEN: f64 = 0.618_033_988_749_894_9;

/// Maximises a 2π-periodic `f` on `[0, 2π)`: coarse grid of `grid`
/// points, then golden-section search around the best one.
pub fn maximize_periodic<F>(f: F, grid: usize, tol: f64) -> Result<(f64, f64)>
where
    F: Fn(f64) -> Result<f64>,
{
    if grid < 3 {
        return Err(Error::InvalidParameter {
            name: "grid",
            reason: "need at least three grid points".into(),
        });
    }
    let h = 2.0 * PI / grid as f64;
    let mut best = (0.0, f64::NEG_INFINITY);
    for k in 0..grid {
        let x = k as f64 * h;
        let v = f(x)?;
        if v > best.1 {
            best = (x, v);
        }
    }
    let (mut a, mut b) = (best.0 - h, best.0 + h);
    let mut c = b - GOLDEN * (b - a);
    let mut d = a + GOLDEN * (b - a);
    let (mut fc, mut fd) = (f(c)?, f(d)?);
    let mut iterations = 0;
    while b - a > tol {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - GOLDEN * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + GOLDEN * (b - a);
            fd = f(d)?;
        }
        iterations += 1;
        if iterations > 200 {
            return Err(Error::Convergence {
                refinements: iterations,
                difference: b - a,
            });
        }
    }
    let x = 0.5 * (a + b);
    let v = f(x)?;
    let (x, v) = if v >= best.1 { (x, v) } else { best };
    Ok((wrap_phase(x), v))
}

/// Best controlled phase `φ*` for an internal evolution and `F` against
/// `diag(1, 1, 1, e^{iφ*})`.
pub fn fit_controlled_phase(u: &CMatrix) -> Result<(f64, f64)> {
    maximize_periodic(
        |phi| gate_fidelity(u, &controlled_phase_target(phi)),
        64,
        1e-10,
    )
}

/// Single-qubit `Z` phases `(α on molecule i, β on molecule ii)` and
/// controlled phase `φ` such that `diag(1, e^{iβ}, e^{iα}, e^{i(α+β+φ)})`
/// best matches the block of `u`, with the resulting fidelity. Diagnostic
/// only; the default comparison uses no local correction.
pub fn fit_with_local_phases(u: &CMatrix) -> Result<(f64, f64, f64, f64)> {
    gate_fidelity(u, &CMatrix::identity(N, N))?;
    let d: Vec<C64> = (0..N).map(|k| u[(k, k)]).collect();
    let g = d[0].arg();
    let beta = d[1].arg() - g;
    let alpha = d[2].arg() - g;
    let phi = d[3].arg() - g - alpha - beta;
    let target = CMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
        ONE,
        C64::from_polar(1.0, beta),
        C64::from_polar(1.0, alpha),
        C64::from_polar(1.0, alpha + beta + phi),
    ]));
    let f = gate_fidelity(u, &target)?;
    Ok((wrap_phase(alpha), wrap_phase(beta), wrap_phase(phi), f))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::I;

    fn embed(block: &CMatrix) -> CMatrix {
        let mut u = CMatrix::identity(INTERNAL_DIM, INTERNAL_DIM);
        u.view_mut((0, 0), (N, N)).copy_from(block);
        u
    }

    #[test]
    fn targets() {
        let cz = controlled_phase_target(PI);
        assert!((cz[(3, 3)] + ONE).norm() < 1e-15);
        assert_eq!(controlled_phase_target(0.0), CMatrix::identity(4, 4));
        assert!((controlled_phase_target(PI / 2.0)[(3, 3)] - I).norm() < 1e-15);
    }

    #[test]
    fn exact_target_and_identity() {
        let cz = controlled_phase_target(PI);
        assert!((gate_fidelity(&embed(&cz), &cz).unwrap() - 1.0).abs() < 1e-15);
        let f = gate_fidelity(&CMatrix::identity(9, 9), &cz).unwrap();
        assert!((f - 0.4).abs() < 1e-15);
    }

    #[test]
    fn dimension_errors() {
        let cz = controlled_phase_target(PI);
        assert!(gate_fidelity(&CMatrix::identity(4, 4), &cz).is_err());
        assert!(gate_fidelity(&CMatrix::identity(9, 9), &CMatrix::identity(3, 3)).is_err());
    }

    #[test]
    fn leakage_lowers_fidelity() {
        let cz = controlled_phase_target(PI);
        let mut u = embed(&cz);
        u.swap_columns(3, 8);
        let f = gate_fidelity(&u, &cz).unwrap();
        assert!((f - (3.0 + 9.0) / 20.0).abs() < 1e-15);
    }

    #[test]
    fn fitted_phase_matches_closed_form() {
        let block = CMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
            C64::from_polar(1.0, 0.1),
            C64::from_polar(0.99, -0.05),
            C64::from_polar(1.0, 0.02),
            C64::from_polar(0.98, 2.3),
        ]));
        let u = embed(&block);
        let (phi, f) = fit_controlled_phase(&u).unwrap();
        let rest = block[(0, 0)] + block[(1, 1)] + block[(2, 2)];
        let expected = wrap_phase(block[(3, 3)].arg() - rest.arg());
        assert!((phi - expected).abs() < 1e-8, "{phi} vs {expected}");
        let best = (block.iter().map(|z| z.norm_sqr()).sum::<f64>()
            + (rest.norm() + block[(3, 3)].norm()).powi(2))
            / 20.0;
        assert!((f - best).abs() < 1e-14);
    }

    #[test]
    fn local_phase_fit_recovers_phases() {
        let (a, b, phi) = (0.7, 5.9, 1.1);
        let block = CMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
            C64::from_polar(1.0, 0.3),
            C64::from_polar(1.0, 0.3 + b),
            C64::from_polar(1.0, 0.3 + a),
            C64::from_polar(1.0, 0.3 + a + b + phi),
        ]));
        let (fa, fb, fphi, f) = fit_with_local_phases(&embed(&block)).unwrap();
        assert!((fa - a).abs() < 1e-12 && (fb - b).abs() < 1e-12 && (fphi - phi).abs() < 1e-12);
        assert!((f - 1.0).abs() < 1e-14);
    }

    #[test]
    fn averaging() {
        let runner = |x: f64| FidelityReport::new(x, PI, ReportParameters::internal(x, PI));
        let r = average_over_parameter(&[0.9], runner).unwrap();
        assert_eq!(r.mean_fidelity, 0.9);
        let r = average_over_parameter(&[0.9, 0.8, 1.0], runner).unwrap();
        assert!((r.mean_fidelity - 0.9).abs() < 1e-15);
        assert_eq!(r.samples[1].0, 0.8);
        assert!(average_over_parameter(&[], runner).is_err());
        assert!(average_over_parameter(&[0.5, 2.0], runner).is_err());
    }

    #[test]
    fn linspace_endpoints() {
        let g = linspace(3.0, 5.0, 21);
        assert_eq!(g.len(), 21);
        assert_eq!(g[0], 3.0);
        assert_eq!(g[20], 5.0);
        assert!((g[1] - 3.1).abs() < 1e-15);
    }

    #[test]
    fn csv_row_has_all_columns() {
        let r = FidelityReport::new(0.99, PI, ReportParameters::internal(4.0, PI)).unwrap();
        assert_eq!(
            r.csv_row().split(',').count(),
            FidelityReport::CSV_COLUMNS.len()
        );
    }

    #[test]
    fn construction_parsing() {
        assert_eq!(
            "trace-out".parse::<FidelityConstruction>().unwrap(),
            FidelityConstruction::TraceOut
        );
        assert_eq!(
            "projection".parse::<FidelityConstruction>().unwrap(),
            FidelityConstruction::Projection
        );
        assert!("both".parse::<FidelityConstruction>().is_err());
    }
}
