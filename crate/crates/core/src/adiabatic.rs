//! Bell-basis picture of the driven gate: the `|D±>`/`|B±>` sectors, their
//! closed-form dressed eigensystem, the adiabatic phase picked up by the
//! qubit Bell states, and the time spent in the DDI-coupled states.

use std::f64::consts::FRAC_1_SQRT_2;

use nalgebra::{Matrix2, SymmetricEigen, Vector2};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{CMatrix, C64, ZERO};
use crate::model::{GateModel, InternalBasis, Level, ProductState};
use crate::propagator::{propagate, PropagationOptions};
use crate::quadrature::{self, QuadratureOptions};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }

    pub fn of(x: f64) -> Sign {
        if x < 0.0 {
            Sign::Minus
        } else {
            Sign::Plus
        }
    }

    fn flip(self) -> Sign {
        match self {
            Sign::Plus => Sign::Minus,
            Sign::Minus => Sign::Plus,
        }
    }

    fn index(self) -> usize {
        match self {
            Sign::Plus => 0,
            Sign::Minus => 1,
        }
    }
}

/// `|D±> = (|u,e> ± |e,u>)/√2` and `|B±> = (|u,d> ± |d,u>)/√2` as vectors in
/// the nine-state basis.
#[derive(Clone, Debug)]
pub struct BellBasis {
    pub d_plus: CMatrix,
    pub d_minus: CMatrix,
    pub b_plus: CMatrix,
    pub b_minus: CMatrix,
}

impl Default for BellBasis {
    fn default() -> Self {
        Self::new()
    }
}

impl BellBasis {
    pub fn new() -> Self {
        let basis = InternalBasis;
        let pair = |a: ProductState, b: ProductState, sign: f64| {
            (basis.ket(a) + basis.ket(b) * C64::new(sign, 0.0)) * C64::new(FRAC_1_SQRT_2, 0.0)
        };
        let (u, d, e) = (Level::Up, Level::Down, Level::Excited);
        BellBasis {
            d_plus: pair((u, e), (e, u), 1.0),
            d_minus: pair((u, e), (e, u), -1.0),
            b_plus: pair((u, d), (d, u), 1.0),
            b_minus: pair((u, d), (d, u), -1.0),
        }
    }

    pub fn d(&self, sector: Sign) -> &CMatrix {
        match sector {
            Sign::Plus => &self.d_plus,
            Sign::Minus => &self.d_minus,
        }
    }

    pub fn b(&self, sector: Sign) -> &CMatrix {
        match sector {
            Sign::Plus => &self.b_plus,
            Sign::Minus => &self.b_minus,
        }
    }

    pub fn all(&self) -> [&CMatrix; 4] {
        [&self.d_plus, &self.d_minus, &self.b_plus, &self.b_minus]
    }

    /// Restriction of a nine-state operator to span{|D_α>, |B_α>}.
    pub fn project(&self, op: &CMatrix, sector: Sign) -> Matrix2<C64> {
        let vs = [self.d(sector), self.b(sector)];
        Matrix2::from_fn(|r, c| (vs[r].adjoint() * op * vs[c])[(0, 0)])
    }

    /// Lifts a two-component sector vector (in the order `D`, `B`) back to
    /// nine states.
    pub fn embed(&self, v: &Vector2<C64>, sector: Sign) -> CMatrix {
        self.d(sector) * v[0] + self.b(sector) * v[1]
    }
}

/// `H_α` in the ordered basis `(|D_α>, |B_α>)`: `α J |D><D| + (Ω/2 |D><B| + h.c.)`.
pub fn sector_hamiltonian(coupling: f64, drive: C64, sector: Sign) -> Matrix2<C64> {
    Matrix2::new(
        C64::new(sector.value() * coupling, 0.0),
        drive * 0.5,
        drive.conj() * 0.5,
        ZERO,
    )
}

pub fn sector_hamiltonians(coupling: f64, drive: C64) -> (Matrix2<C64>, Matrix2<C64>) {
    (
        sector_hamiltonian(coupling, drive, Sign::Plus),
        sector_hamiltonian(coupling, drive, Sign::Minus),
    )
}

#[derive(Clone, Copy, Debug)]
pub struct DressedState {
    pub energy: f64,
    /// Unit vector in the `(D, B)` basis of its sector.
    pub vector: Vector2<C64>,
    pub normalization: f64,
}

/// Closed-form eigensystem of both sectors at one instant.
#[derive(Clone, Copy, Debug)]
pub struct DressedEigensystem {
    pub coupling: f64,
    pub drive: C64,
    pub generalized_rabi: f64,
    states: [[DressedState; 2]; 2],
}

impl DressedEigensystem {
    pub fn state(&self, sector: Sign, branch: Sign) -> &DressedState {
        &self.states[sector.index()][branch.index()]
    }

    pub fn energy(&self, sector: Sign, branch: Sign) -> f64 {
        self.state(sector, branch).energy
    }

    /// `Σ_η ξ_η |v_η><v_η|` for one sector.
    pub fn reconstruct(&self, sector: Sign) -> Matrix2<C64> {
        [Sign::Plus, Sign::Minus]
            .iter()
            .map(|&b| {
                let s = self.state(sector, b);
                s.vector * s.vector.adjoint() * C64::new(s.energy, 0.0)
            })
            .sum()
    }
}

/// Eigenvalues `ξ_η^(α) = (αJ + η Ω̄)/2` with `Ω̄ = √(J² + |Ω|²)` and
/// eigenvectors `∝ ξ |D> + Ω*/2 |B>`.
///
/// When that vector vanishes (zero drive on the branch with `ξ = 0`) the
/// equivalent form `Ω/2 |D> + (ξ - αJ) |B>` is used instead.
pub fn dressed_eigensystem(coupling: f64, drive: C64) -> Result<DressedEigensystem> {
    if coupling == 0.0 && drive == ZERO {
        return Err(Error::DegenerateBranch);
    }
    let generalized_rabi = coupling.hypot(drive.norm());
    let state = |sector: Sign, branch: Sign| {
        let alpha_j = sector.value() * coupling;
        let energy = 0.5 * (alpha_j + branch.value() * generalized_rabi);
        let primary = Vector2::new(C64::new(energy, 0.0), drive.conj() * 0.5);
        let alternate = Vector2::new(drive * 0.5, C64::new(energy - alpha_j, 0.0));
        let raw = if primary.norm() >= alternate.norm() {
            primary
        } else {
            alternate
        };
        let normalization = raw.norm().recip();
        DressedState {
            energy,
            vector: raw * C64::new(normalization, 0.0),
            normalization,
        }
    };
    Ok(DressedEigensystem {
        coupling,
        drive,
        generalized_rabi,
        states: [
            [
                state(Sign::Plus, Sign::Plus),
                state(Sign::Plus, Sign::Minus),
            ],
            [
                state(Sign::Minus, Sign::Plus),
                state(Sign::Minus, Sign::Minus),
            ],
        ],
    })
}

/// Largest discrepancy between [`dressed_eigensystem`] and a numerical
/// eigensolver over both sectors: eigenvalues, reconstruction of the sector
/// Hamiltonian, and orthogonality of the two branches.
pub fn eigensystem_defect(coupling: f64, drive: C64) -> Result<f64> {
    let eig = dressed_eigensystem(coupling, drive)?;
    let mut worst: f64 = 0.0;
    for sector in [Sign::Plus, Sign::Minus] {
        let h = sector_hamiltonian(coupling, drive, sector);
        let mut numeric: Vec<f64> = SymmetricEigen::new(h).eigenvalues.iter().copied().collect();
        numeric.sort_by(f64::total_cmp);
        worst = worst
            .max((numeric[0] - eig.energy(sector, Sign::Minus)).abs())
            .max((numeric[1] - eig.energy(sector, Sign::Plus)).abs());
        let rebuilt = eig.reconstruct(sector) - h;
        worst = worst.max(rebuilt.iter().map(|z| z.norm()).fold(0.0, f64::max));
        let (vp, vm) = (
            eig.state(sector, Sign::Plus).vector,
            eig.state(sector, Sign::Minus).vector,
        );
        worst = worst.max(vp.dotc(&vm).norm());
    }
    Ok(worst)
}

/// Branch of sector `α` that reduces to `|B_α>` when the drive is off:
/// the one with `ξ = 0` there, i.e. `η = -sign(αJ)`.
pub fn b_connected_branch(coupling: f64, sector: Sign) -> Result<Sign> {
    if coupling == 0.0 {
        return Err(Error::DegenerateBranch);
    }
    Ok(Sign::of(sector.value() * coupling).flip())
}

/// Follows the `|B_+>`-connected dressed state through pulse 1 by maximal
/// eigenvector overlap between consecutive samples, returning the branch
/// label at each sample time.
pub fn track_b_branch(model: &GateModel, samples: usize) -> Result<Vec<Sign>> {
    let pulses = &model.pulses;
    let mut labels = Vec::with_capacity(samples + 1);
    let mut previous = Vector2::new(ZERO, C64::new(1.0, 0.0));
    for k in 0..=samples {
        let t = pulses.duration * k as f64 / samples as f64;
        let eig = dressed_eigensystem(model.coupling, pulses.envelope(t)?)?;
        let overlap = |b: Sign| eig.state(Sign::Plus, b).vector.dotc(&previous).norm();
        let branch = if overlap(Sign::Plus) >= overlap(Sign::Minus) {
            Sign::Plus
        } else {
            Sign::Minus
        };
        previous = eig.state(Sign::Plus, branch).vector;
        labels.push(branch);
    }
    Ok(labels)
}

/// `φ = ∫₀ᵀ ξ(t) dt` along pulse 1 for the `|B_+>`-connected branch; `|B_±>`
/// then pick up `exp(∓iφ)`. For `J < 0` this is the `ξ_+^(+)` branch.
pub fn adiabatic_phase(model: &GateModel) -> Result<f64> {
    let branch =
        b_connected_branch(model.coupling, Sign::Plus).map_err(|_| Error::InvalidParameter {
            name: "coupling",
            reason: "the adiabatic phase needs J != 0".into(),
        })?;
    let pulses = model.pulses;
    let coupling = model.coupling;
    let energy = move |t: f64| {
        let drive = pulses.single_pulse(t);
        0.5 * (coupling + branch.value() * coupling.hypot(drive))
    };
    let opts = QuadratureOptions {
        abs_tol: 1e-10,
        rel_tol: 1e-13,
        max_intervals: 4000,
    };
    let r = quadrature::integrate(energy, 0.0, pulses.duration, opts)?;
    Ok(r.value)
}

/// Dressed energies along the full two-pulse drive, for reports.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct DressedSample {
    pub time: f64,
    pub drive_re: f64,
    pub drive_im: f64,
    pub xi_plus_plus: f64,
    pub xi_plus_minus: f64,
    pub xi_minus_plus: f64,
    pub xi_minus_minus: f64,
}

pub fn dressed_trace(model: &GateModel, samples: usize) -> Result<Vec<DressedSample>> {
    let total = model.pulses.total_duration();
    (0..=samples)
        .map(|k| {
            let time = total * k as f64 / samples as f64;
            let drive = model.pulses.envelope(time)?;
            let eig = dressed_eigensystem(model.coupling, drive)?;
            Ok(DressedSample {
                time,
                drive_re: drive.re,
                drive_im: drive.im,
                xi_plus_plus: eig.energy(Sign::Plus, Sign::Plus),
                xi_plus_minus: eig.energy(Sign::Plus, Sign::Minus),
                xi_minus_plus: eig.energy(Sign::Minus, Sign::Plus),
                xi_minus_minus: eig.energy(Sign::Minus, Sign::Minus),
            })
        })
        .collect()
}

/// Rows of the DDI-coupled states `|u,e>` and `|e,u>`.
pub fn ddi_coupled_rows() -> Vec<usize> {
    let basis = InternalBasis;
    vec![
        basis.index_of((Level::Up, Level::Excited)),
        basis.index_of((Level::Excited, Level::Up)),
    ]
}

/// Total time the state started in `initial` spends in `|u,e>` and `|e,u>`
/// over the whole gate, `Σ_η ∫₀^{2T} |<η|U(τ)|initial>|² dτ`.
pub fn ddi_superposition_time(
    model: &GateModel,
    initial: ProductState,
    steps_per_pulse: usize,
) -> Result<f64> {
    let basis = InternalBasis;
    let index = basis.index_of(initial);
    if !basis.is_computational(index) {
        return Err(Error::InvalidParameter {
            name: "initial",
            reason: format!("{} is not a computational state", basis.label(index)),
        });
    }
    let h = model.driven_hamiltonian()?;
    let opts = PropagationOptions {
        steps_per_segment: steps_per_pulse,
        tracked_rows: ddi_coupled_rows(),
        ..Default::default()
    };
    let r = propagate(&h, &model.gate_schedule(), &basis.ket(initial), &opts)?;
    Ok(r.occupation_time[0])
}
