//! Relative motional mode of the two trapped molecules.
//!
//! Only the relative mode `a₋` enters the DDI, so the composite space is
//! `internal (9) ⊗ Fock(a₋, 0..=n_max)`; the centre-of-mass mode is not
//! represented. Composite indices are `internal * (n_max + 1) + fock`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{CMatrix, SparseMatrix, C64, ONE, ZERO};
use crate::model::COMPUTATIONAL_DIM;
use crate::model::{drive_quadratures, exchange_operator, GateModel, INTERNAL_DIM};
use crate::propagator::{
    propagate, DrivenHamiltonian, EvolutionResult, PropagationOptions, Schedule,
};

/// Lowest truncation that leaves room for the quartic term.
pub const MIN_FOCK_LEVEL: usize = 4;

/// Truncated Fock space of `a₋` plus the parameters of the
/// position-dependent DDI.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MotionalSpace {
    pub n_max: usize,
    /// Trap angular frequency (absolute units, `1/T`).
    pub trap_frequency: f64,
    /// Oscillator length over trap separation, `ℓ/L`.
    pub length_ratio: f64,
    /// Bare DDI scale `J0` (absolute units).
    pub bare_coupling: f64,
    /// Include `ω a₋†a₋` in the composite Hamiltonian.
    pub include_trap: bool,
}

impl MotionalSpace {
    pub fn dim(&self) -> usize {
        self.n_max + 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_max < MIN_FOCK_LEVEL {
            return Err(Error::InvalidParameter {
                name: "n_max",
                reason: format!("must be at least {MIN_FOCK_LEVEL}, got {}", self.n_max),
            });
        }
        if !(self.length_ratio >= 0.0 && self.length_ratio.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "ell_over_L",
                reason: format!("must be finite and non-negative, got {}", self.length_ratio),
            });
        }
        if !self.trap_frequency.is_finite() || !self.bare_coupling.is_finite() {
            return Err(Error::InvalidParameter {
                name: "trap_frequency",
                reason: "trap frequency and J0 must be finite".into(),
            });
        }
        Ok(())
    }

    pub fn annihilation(&self) -> SparseMatrix {
        let n = self.dim();
        SparseMatrix::from_triplets(
            n,
            n,
            (1..n).map(|k| (k - 1, k, C64::new((k as f64).sqrt(), 0.0))),
        )
    }

    pub fn number(&self) -> SparseMatrix {
        SparseMatrix::from_diagonal(
            &(0..self.dim())
                .map(|k| C64::new(k as f64, 0.0))
                .collect::<Vec<_>>(),
        )
    }

    /// `a₋ + a₋†`.
    pub fn quadrature(&self) -> CMatrix {
        let a = self.annihilation().to_dense();
        &a + a.adjoint()
    }

    /// `Ĵ = J0 [3 r² X² - (45/8) r⁴ X⁴ - 1]`, `X = a₋ + a₋†`, `r = ℓ/L`,
    /// using plain powers of the truncated `X`.
    pub fn ddi_operator(&self) -> Result<SparseMatrix> {
        self.validate()?;
        let x = self.quadrature();
        let x2 = &x * &x;
        let x4 = &x2 * &x2;
        let r2 = self.length_ratio * self.length_ratio;
        let n = self.dim();
        let j = (x2 * C64::new(3.0 * r2, 0.0)
            - x4 * C64::new(45.0 / 8.0 * r2 * r2, 0.0)
            - CMatrix::identity(n, n))
            * C64::new(self.bare_coupling, 0.0);
        Ok(SparseMatrix::from_dense(&j))
    }

    /// Fock-parity operator `(-1)^n`.
    pub fn parity(&self) -> SparseMatrix {
        SparseMatrix::from_diagonal(
            &(0..self.dim())
                .map(|k| if k % 2 == 0 { ONE } else { -ONE })
                .collect::<Vec<_>>(),
        )
    }
}

/// Initial state of the `a₋` mode.
#[derive(Clone, Debug, PartialEq)]
pub enum MotionalState {
    /// Amplitudes over Fock levels (shorter vectors are zero-padded).
    Pure(Vec<C64>),
    /// Bose–Einstein ensemble with mean occupation `mean`.
    Thermal { mean: f64 },
}

impl MotionalState {
    pub fn vacuum() -> Self {
        MotionalState::Pure(vec![ONE])
    }

    pub fn fock(n: usize) -> Self {
        let mut v = vec![ZERO; n + 1];
        v[n] = ONE;
        MotionalState::Pure(v)
    }

    /// `(|0> + |1>)/√2`.
    pub fn plus() -> Self {
        let s = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        MotionalState::Pure(vec![s, s])
    }

    pub fn thermal(mean: f64) -> Self {
        MotionalState::Thermal { mean }
    }

    /// Decomposition into weighted pure inputs on `n_max + 1` levels.
    pub fn ensemble(&self, n_max: usize) -> Result<Vec<(f64, Vec<C64>)>> {
        let dim = n_max + 1;
        match self {
            MotionalState::Pure(amplitudes) => {
                if amplitudes.len() > dim && amplitudes[dim..].iter().any(|z| *z != ZERO) {
                    return Err(Error::Dimension {
                        expected: format!("at most {dim} Fock levels"),
                        found: amplitudes.len().to_string(),
                    });
                }
                let norm: f64 = amplitudes.iter().map(|z| z.norm_sqr()).sum();
                if (norm - 1.0).abs() > 1e-12 {
                    return Err(Error::InvalidParameter {
                        name: "motional_state",
                        reason: format!("pure state has squared norm {norm}"),
                    });
                }
                let mut v = vec![ZERO; dim];
                v[..amplitudes.len().min(dim)]
                    .copy_from_slice(&amplitudes[..amplitudes.len().min(dim)]);
                Ok(vec![(1.0, v)])
            }
            MotionalState::Thermal { mean } => {
                let kept = kept_thermal_mass(*mean, n_max)?;
                if kept < 1.0 - 1e-6 {
                    return Err(Error::InvalidParameter {
                        name: "n_max",
                        reason: format!(
                            "truncation keeps only {kept} of the thermal weight at mean occupation {mean}"
                        ),
                    });
                }
                let weights = thermal_weights(*mean, n_max)?;
                Ok(weights
                    .into_iter()
                    .enumerate()
                    .map(|(n, p)| {
                        let mut v = vec![ZERO; dim];
                        v[n] = ONE;
                        (p, v)
                    })
                    .collect())
            }
        }
    }
}

impl fmt::Display for MotionalState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MotionalState::Thermal { mean } => write!(f, "thermal({mean})"),
            MotionalState::Pure(v) => {
                let nonzero: Vec<usize> = (0..v.len()).filter(|&k| v[k] != ZERO).collect();
                if *self == MotionalState::plus() {
                    f.write_str("plus")
                } else if nonzero.len() == 1 && v[nonzero[0]] == ONE {
                    match nonzero[0] {
                        0 => f.write_str("vac"),
                        1 => f.write_str("one"),
                        n => write!(f, "fock({n})"),
                    }
                } else {
                    f.write_str("pure")
                }
            }
        }
    }
}

impl FromStr for MotionalState {
    type Err = Error;

    /// Accepts `vac`, `one`, `plus`, `fock(n)` and `thermal(n̄)`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || {
            Error::Config(format!(
                "unknown motional state `{s}` (expected vac, one, plus, fock(n) or thermal(mean))"
            ))
        };
        let argument = |prefix: &str| -> Option<&str> { s.strip_prefix(prefix)?.strip_suffix(')') };
        match s {
            "vac" => Ok(Self::vacuum()),
            "one" => Ok(Self::fock(1)),
            "plus" => Ok(Self::plus()),
            _ => {
                if let Some(arg) = argument("thermal(") {
                    let mean: f64 = arg.trim().parse().map_err(|_| bad())?;
                    check_mean(mean)?;
                    Ok(Self::thermal(mean))
                } else if let Some(arg) = argument("fock(") {
                    Ok(Self::fock(arg.trim().parse().map_err(|_| bad())?))
                } else {
                    Err(bad())
                }
            }
        }
    }
}

fn raw_thermal_weight(mean: f64, n: usize) -> f64 {
    if mean == 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    // p_n = n̄ⁿ / (n̄+1)^{n+1}, in logs to avoid overflow.
    (n as f64 * mean.ln() - (n as f64 + 1.0) * (mean + 1.0).ln()).exp()
}

fn check_mean(mean: f64) -> Result<()> {
    if !(mean >= 0.0 && mean.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "mean_occupation",
            reason: format!("must be finite and non-negative, got {mean}"),
        });
    }
    Ok(())
}

/// Unnormalised Bose–Einstein mass on levels `0..=n_max`.
pub fn kept_thermal_mass(mean: f64, n_max: usize) -> Result<f64> {
    check_mean(mean)?;
    Ok((0..=n_max).map(|n| raw_thermal_weight(mean, n)).sum())
}

/// Bose–Einstein weights on `0..=n_max`, renormalised to sum to one.
pub fn thermal_weights(mean: f64, n_max: usize) -> Result<Vec<f64>> {
    check_mean(mean)?;
    let raw: Vec<f64> = (0..=n_max).map(|n| raw_thermal_weight(mean, n)).collect();
    let total: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|p| p / total).collect())
}

/// `H(t) = H_drive(t) ⊗ 1 + V ⊗ Ĵ + 1 ⊗ ω a₋†a₋`; the scalar coupling of
/// `model` is ignored (replaced by `Ĵ`).
pub fn composite_hamiltonian(
    model: &GateModel,
    space: &MotionalSpace,
) -> Result<DrivenHamiltonian> {
    space.validate()?;
    let n = space.dim();
    let id_motion = SparseMatrix::identity(n);
    let (x, y) = drive_quadratures();
    let mut static_term = exchange_operator().kron(&space.ddi_operator()?);
    if space.include_trap {
        let trap = SparseMatrix::identity(INTERNAL_DIM)
            .kron(&space.number().scale(C64::new(space.trap_frequency, 0.0)));
        static_term = static_term.add(&trap)?;
    }
    let pulses = model.pulses;
    DrivenHamiltonian::new(
        vec![static_term, x.kron(&id_motion), y.kron(&id_motion)],
        move |t, out| {
            let w = pulses.envelope_unchecked(t);
            out[0] = 1.0;
            out[1] = w.re;
            out[2] = w.im;
        },
    )
}

/// Dense composite Hamiltonian at time `t`.
pub fn composite_hamiltonian_at(
    model: &GateModel,
    space: &MotionalSpace,
    t: f64,
) -> Result<CMatrix> {
    model.pulses.envelope(t)?;
    Ok(composite_hamiltonian(model, space)?.dense_at(t))
}

/// The gate schedule with each phase gate lifted to `gate ⊗ 1_motion`.
pub fn composite_schedule(model: &GateModel, space: &MotionalSpace) -> Schedule {
    let n = space.dim();
    model.gate_schedule().map_kicks(|k| k.tensor_identity(n))
}

/// Propagates every `|c, m>` (computational `c`, Fock `m`) through the
/// composite gate. Column `c·(n_max+1) + m` of the result holds `U|c, m>`.
pub fn evolve_computational_block(
    model: &GateModel,
    space: &MotionalSpace,
    opts: &PropagationOptions,
) -> Result<EvolutionResult> {
    let h = composite_hamiltonian(model, space)?;
    let nf = space.dim();
    let mut initial = CMatrix::zeros(INTERNAL_DIM * nf, COMPUTATIONAL_DIM * nf);
    for c in 0..COMPUTATIONAL_DIM {
        for m in 0..nf {
            initial[(c * nf + m, c * nf + m)] = ONE;
        }
    }
    propagate(&h, &composite_schedule(model, space), &initial, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs;
    use crate::model::PulseSequence;
    use std::f64::consts::PI;

    fn space(ratio: f64) -> MotionalSpace {
        MotionalSpace {
            n_max: 12,
            trap_frequency: 6.75,
            length_ratio: ratio,
            bare_coupling: 2.0,
            include_trap: true,
        }
    }

    #[test]
    fn ladder_operators() {
        let s = space(0.1);
        let a = s.annihilation();
        for n in 1..=s.n_max {
            assert_eq!(a.get(n - 1, n), C64::new((n as f64).sqrt(), 0.0));
        }
        assert_eq!(a.nnz(), s.n_max);
        let ad = a.adjoint().to_dense();
        let num = ad * a.to_dense();
        assert!(max_abs(&(num - s.number().to_dense())) < 1e-14);
        assert_eq!(s.dim(), 13);
    }

    #[test]
    fn zero_ratio_gives_scalar_coupling() {
        let j = space(0.0).ddi_operator().unwrap().to_dense();
        assert!(max_abs(&(j + CMatrix::identity(13, 13) * C64::new(2.0, 0.0))) < 1e-15);
    }

    #[test]
    fn vacuum_expectation_of_ddi_operator() {
        let mut s = space(0.1);
        s.bare_coupling = 1.0;
        let j = s.ddi_operator().unwrap();
        let expected = 0.03 - 0.001_687_5 - 1.0;
        assert!((j.get(0, 0).re - expected).abs() < 1e-15);
    }

    #[test]
    fn parity_selection_rule() {
        let s = space(0.1);
        let j = s.ddi_operator().unwrap();
        for (r, c, _) in j.iter() {
            assert_eq!((r + c) % 2, 0, "({r}, {c})");
        }
        let jd = j.to_dense();
        let p = s.parity().to_dense();
        assert_eq!(&jd * &p, &p * &jd);
    }

    #[test]
    fn truncation_too_small() {
        let mut s = space(0.1);
        s.n_max = 3;
        assert!(s.ddi_operator().is_err());
    }

    #[test]
    fn thermal_weight_values() {
        let w = thermal_weights(2.0, 40).unwrap();
        assert!((w[0] - 1.0 / 3.0).abs() < 1e-7);
        assert!((w[1] - 2.0 / 9.0).abs() < 1e-7);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        let cold = thermal_weights(0.0, 5).unwrap();
        assert_eq!(cold, vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert!(thermal_weights(-0.1, 5).is_err());
    }

    #[test]
    fn thermal_tail_beyond_forty_is_negligible() {
        let tail = 1.0 - kept_thermal_mass(2.0, 40).unwrap();
        let geometric = (2.0f64 / 3.0).powi(41);
        assert!((tail - geometric).abs() < 1e-12);
        assert!(tail < 1e-6);
        assert!(MotionalState::thermal(2.0).ensemble(10).is_err());
    }

    #[test]
    fn pure_states_must_be_normalised() {
        let bad = MotionalState::Pure(vec![ONE, ONE]);
        assert!(bad.ensemble(10).is_err());
        let ok = MotionalState::plus().ensemble(10).unwrap();
        assert_eq!(ok.len(), 1);
        assert_eq!(ok[0].1.len(), 11);
        assert!(MotionalState::fock(12).ensemble(10).is_err());
    }

    #[test]
    fn state_labels_round_trip() {
        for label in ["vac", "one", "plus", "fock(3)", "thermal(2)"] {
            let s: MotionalState = label.parse().unwrap();
            assert_eq!(s.to_string(), label);
        }
        assert!("thermal(-1)".parse::<MotionalState>().is_err());
        assert!("squeezed".parse::<MotionalState>().is_err());
    }

    #[test]
    fn composite_is_hermitian_and_has_no_centre_of_mass_register() {
        let pulses = PulseSequence::calibrated(0.234, 1.0, 0.4).unwrap();
        let model = GateModel::with_coupling_ratio(0.0, pulses, PI);
        let s = space(0.1);
        let h = composite_hamiltonian(&model, &s).unwrap();
        assert_eq!(h.dim(), 9 * 13);
        for &t in &[0.0, 0.37, 1.0, 1.61, 2.0] {
            let m = h.dense_at(t);
            assert_eq!(max_abs(&(&m - m.adjoint())), 0.0);
        }
        assert!(composite_hamiltonian_at(&model, &s, 2.5).is_err());
    }

    #[test]
    fn zero_ratio_composite_is_internal_tensor_identity_plus_trap() {
        let pulses = PulseSequence::calibrated(0.234, 1.0, PI).unwrap();
        let s = MotionalSpace {
            include_trap: false,
            ..space(0.0)
        };
        let model = GateModel::new(-s.bare_coupling, pulses, PI);
        let n = s.dim();
        for &t in &[0.2, 1.4] {
            let composite = composite_hamiltonian_at(&model, &s, t).unwrap();
            let internal = model.hamiltonian_at(t).unwrap();
            let expected = internal.kronecker(&CMatrix::identity(n, n));
            assert!(max_abs(&(composite - expected)) < 1e-14);
        }
    }
}
