//! Internal states of two three-level molecules, the two-pulse microwave
//! drive, the exchange-type dipole-dipole coupling and the single-site
//! phase gates that sit between the pulses.
//!
//! Units: ħ = 1 and the single-pulse duration `T` sets the time unit, so
//! every rate is in units of `1/T`.

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{CMatrix, SparseMatrix, C64, I, ONE, ZERO};
use crate::propagator::{DiagonalUnitary, DrivenHamiltonian, Schedule, Segment};
use crate::quadrature::{self, QuadratureOptions};

/// Per-molecule level. `Up` and `Down` are the qubit states, `Excited` is
/// the ancillary state reached from `Down` by the microwave.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Level {
    Up,
    Down,
    Excited,
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Level::Up => "u",
            Level::Down => "d",
            Level::Excited => "e",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Molecule {
    First,
    Second,
}

impl Molecule {
    pub fn from_index(index: usize) -> Result<Self> {
        match index {
            0 => Ok(Molecule::First),
            1 => Ok(Molecule::Second),
            _ => Err(Error::InvalidParameter {
                name: "molecule",
                reason: format!("index {index} is not 0 (i) or 1 (ii)"),
            }),
        }
    }
}

pub type ProductState = (Level, Level);

/// Canonical ordering of the nine two-molecule product states; the four
/// computational states come first.
pub const BASIS_STATES: [ProductState; 9] = [
    (Level::Up, Level::Up),
    (Level::Up, Level::Down),
    (Level::Down, Level::Up),
    (Level::Down, Level::Down),
    (Level::Up, Level::Excited),
    (Level::Excited, Level::Up),
    (Level::Down, Level::Excited),
    (Level::Excited, Level::Down),
    (Level::Excited, Level::Excited),
];

pub const INTERNAL_DIM: usize = 9;
pub const COMPUTATIONAL_DIM: usize = 4;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct InternalBasis;

impl InternalBasis {
    pub fn dim(&self) -> usize {
        INTERNAL_DIM
    }

    pub fn states(&self) -> &'static [ProductState; 9] {
        &BASIS_STATES
    }

    pub fn state(&self, index: usize) -> ProductState {
        BASIS_STATES[index]
    }

    pub fn index_of(&self, state: ProductState) -> usize {
        BASIS_STATES
            .iter()
            .position(|&s| s == state)
            .expect("every product state is in the basis")
    }

    pub fn is_computational(&self, index: usize) -> bool {
        index < COMPUTATIONAL_DIM
    }

    /// Projector onto the computational subspace.
    pub fn computational_projector(&self) -> CMatrix {
        CMatrix::from_fn(INTERNAL_DIM, INTERNAL_DIM, |r, c| {
            if r == c && self.is_computational(r) {
                ONE
            } else {
                ZERO
            }
        })
    }

    pub fn ket(&self, state: ProductState) -> CMatrix {
        let mut v = CMatrix::zeros(INTERNAL_DIM, 1);
        v[self.index_of(state)] = ONE;
        v
    }

    pub fn label(&self, index: usize) -> String {
        let (a, b) = BASIS_STATES[index];
        format!("{a}{b}")
    }
}

/// Two identical Gaussian-minus-offset pulses of duration `duration`, the
/// second carrying an extra phase `relative_phase`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PulseSequence {
    pub peak_rabi: f64,
    pub width: f64,
    pub duration: f64,
    pub relative_phase: f64,
}

impl PulseSequence {
    /// Builds a sequence whose pulses each have area π.
    pub fn calibrated(width: f64, duration: f64, relative_phase: f64) -> Result<Self> {
        let peak_rabi = calibrate_pulse_area(width, duration)?;
        Ok(PulseSequence {
            peak_rabi,
            width,
            duration,
            relative_phase,
        })
    }

    pub fn with_relative_phase(self, relative_phase: f64) -> Self {
        PulseSequence {
            relative_phase,
            ..self
        }
    }

    pub fn total_duration(&self) -> f64 {
        2.0 * self.duration
    }

    /// Real envelope of the first pulse; `t` relative to its start.
    pub fn single_pulse(&self, t: f64) -> f64 {
        self.peak_rabi * unit_envelope(t, self.width, self.duration)
    }

    /// Complex Rabi frequency at time `t` in `[0, 2T]`.
    pub fn envelope(&self, t: f64) -> Result<C64> {
        let end = self.total_duration();
        if !(0.0..=end).contains(&t) {
            return Err(Error::Domain { t, start: 0.0, end });
        }
        Ok(self.envelope_unchecked(t))
    }

    pub(crate) fn envelope_unchecked(&self, t: f64) -> C64 {
        if t <= self.duration {
            C64::new(self.single_pulse(t), 0.0)
        } else {
            C64::from_polar(self.single_pulse(t - self.duration), self.relative_phase)
        }
    }

    pub fn peak_value(&self) -> f64 {
        self.single_pulse(0.5 * self.duration)
    }

    /// Area of one pulse by adaptive quadrature.
    pub fn area(&self) -> Result<f64> {
        Ok(self.peak_rabi * unit_area(self.width, self.duration)?)
    }
}

fn unit_envelope(t: f64, width: f64, duration: f64) -> f64 {
    let offset = (-duration * duration / (8.0 * width * width)).exp();
    (-(t - 0.5 * duration).powi(2) / (2.0 * width * width)).exp() - offset
}

fn unit_area(width: f64, duration: f64) -> Result<f64> {
    let center = 0.5 * duration;
    // Breakpoints around the peak keep narrow pulses resolved.
    let mut points = vec![0.0, duration];
    for k in [-8.0, -2.0, 0.0, 2.0, 8.0] {
        let p = center + k * width;
        if p > 0.0 && p < duration {
            points.push(p);
        }
    }
    points.sort_by(f64::total_cmp);
    points.dedup();
    let opts = QuadratureOptions {
        abs_tol: 1e-14,
        rel_tol: 1e-14,
        max_intervals: 4000,
    };
    let r = quadrature::integrate_with_breakpoints(
        |t| unit_envelope(t, width, duration),
        &points,
        opts,
    )?;
    Ok(r.value)
}

/// Peak Rabi frequency that gives one pulse an area of exactly π.
///
/// The area is linear in the peak value, so the root of
/// `area(Ω) - π` is `π / area(1)`; the result is checked by re-integrating.
pub fn calibrate_pulse_area(width: f64, duration: f64) -> Result<f64> {
    if !(duration > 0.0 && duration.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "duration",
            reason: format!("must be positive and finite, got {duration}"),
        });
    }
    if !(width > 0.0 && width < duration) {
        return Err(Error::InvalidParameter {
            name: "width",
            reason: format!("must lie in (0, T) with T = {duration}, got {width}"),
        });
    }
    let unit = unit_area(width, duration).map_err(|e| Error::Calibration(e.to_string()))?;
    if !(unit.is_finite() && unit > f64::MIN_POSITIVE) {
        return Err(Error::Calibration(format!(
            "unit-amplitude area {unit:e} is too small to reach π"
        )));
    }
    let peak = PI / unit;
    if !peak.is_finite() {
        return Err(Error::Calibration("peak Rabi frequency overflowed".into()));
    }
    let residual = (peak * unit_area(width, duration)? - PI).abs();
    if residual > 1e-10 {
        return Err(Error::Calibration(format!(
            "area residual {residual:e} above 1e-10"
        )));
    }
    Ok(peak)
}

/// Molecule-swap-symmetric microwave coupling `|e><d| ⊗ 1 + 1 ⊗ |e><d|`
/// (raising part only).
pub fn raising_operator() -> SparseMatrix {
    let basis = InternalBasis;
    let mut triplets = Vec::new();
    for (col, &(a, b)) in BASIS_STATES.iter().enumerate() {
        if a == Level::Down {
            triplets.push((basis.index_of((Level::Excited, b)), col, ONE));
        }
        if b == Level::Down {
            triplets.push((basis.index_of((a, Level::Excited)), col, ONE));
        }
    }
    SparseMatrix::from_triplets(INTERNAL_DIM, INTERNAL_DIM, triplets)
}

/// Exchange coupling `|u,e><e,u| + |e,u><u,e|` with unit strength.
pub fn exchange_operator() -> SparseMatrix {
    let basis = InternalBasis;
    let ue = basis.index_of((Level::Up, Level::Excited));
    let eu = basis.index_of((Level::Excited, Level::Up));
    SparseMatrix::from_triplets(INTERNAL_DIM, INTERNAL_DIM, [(ue, eu, ONE), (eu, ue, ONE)])
}

/// Hermitian quadratures of the drive: `Ω/2 R + Ω*/2 R† = Re Ω · X + Im Ω · Y`
/// with `X = (R + R†)/2` and `Y = i(R - R†)/2`.
pub fn drive_quadratures() -> (SparseMatrix, SparseMatrix) {
    let raise = raising_operator();
    let lower = raise.adjoint();
    let x = raise
        .add(&lower)
        .expect("same shape")
        .scale(C64::new(0.5, 0.0));
    let y = raise
        .add(&lower.scale(-ONE))
        .expect("same shape")
        .scale(0.5 * I);
    (x, y)
}

/// The no-motion gate: nine internal states, scalar DDI strength `coupling`
/// (absolute units, i.e. already multiplied by the peak Rabi frequency),
/// the pulse pair and the controlled phase the sequence should realise.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateModel {
    pub coupling: f64,
    pub pulses: PulseSequence,
    pub target_phase: f64,
}

impl GateModel {
    pub fn new(coupling: f64, pulses: PulseSequence, target_phase: f64) -> Self {
        GateModel {
            coupling,
            pulses,
            target_phase,
        }
    }

    /// Model with `J` given in units of the peak Rabi frequency.
    pub fn with_coupling_ratio(ratio: f64, pulses: PulseSequence, target_phase: f64) -> Self {
        Self::new(ratio * pulses.peak_rabi, pulses, target_phase)
    }

    pub fn basis(&self) -> InternalBasis {
        InternalBasis
    }

    pub fn coupling_ratio(&self) -> f64 {
        self.coupling / self.pulses.peak_rabi
    }

    /// Dense 9×9 Hamiltonian at time `t`.
    pub fn hamiltonian_at(&self, t: f64) -> Result<CMatrix> {
        let omega = self.pulses.envelope(t)?;
        let raise = raising_operator().to_dense();
        let drive = &raise * (omega * 0.5) + raise.adjoint() * (omega.conj() * 0.5);
        Ok(drive + exchange_operator().to_dense() * C64::new(self.coupling, 0.0))
    }

    /// Term decomposition consumed by the propagator.
    pub fn driven_hamiltonian(&self) -> Result<DrivenHamiltonian> {
        let (x, y) = drive_quadratures();
        let static_term = exchange_operator().scale(C64::new(self.coupling, 0.0));
        let pulses = self.pulses;
        DrivenHamiltonian::new(vec![static_term, x, y], move |t, out| {
            let w = pulses.envelope_unchecked(t);
            out[0] = 1.0;
            out[1] = w.re;
            out[2] = w.im;
        })
    }

    /// Pulse 1, phase gate on molecule ii, pulse 2, phase gate on molecule ii.
    pub fn gate_schedule(&self) -> Schedule {
        gate_schedule(&self.pulses, &single_qubit_phase_gate(Molecule::Second, PI))
    }
}

/// Two-segment schedule with `kick` applied after each pulse.
pub fn gate_schedule(pulses: &PulseSequence, kick: &DiagonalUnitary) -> Schedule {
    let t = pulses.duration;
    Schedule::new(vec![
        Segment::new(0.0, t).then(kick.clone()),
        Segment::new(t, 2.0 * t).then(kick.clone()),
    ])
}

/// Instantaneous phase gate multiplying every basis state whose `target`
/// component is `Down` by `exp(i phase)`.
pub fn single_qubit_phase_gate(target: Molecule, phase: f64) -> DiagonalUnitary {
    let factor = C64::from_polar(1.0, phase);
    DiagonalUnitary::new(
        BASIS_STATES
            .iter()
            .map(|&(a, b)| {
                let level = match target {
                    Molecule::First => a,
                    Molecule::Second => b,
                };
                if level == Level::Down {
                    factor
                } else {
                    ONE
                }
            })
            .collect(),
    )
}
