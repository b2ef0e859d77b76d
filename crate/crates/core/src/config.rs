//! Flat run configuration shared by the experiments and the CLI.

use std::f64::consts::PI;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::fidelity::FidelityConstruction;
use crate::model::{GateModel, PulseSequence};
use crate::motion::{MotionalSpace, MotionalState, MIN_FOCK_LEVEL};
use crate::propagator::PropagationOptions;

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "MOLGATE_OUT";

pub const INTERNAL_STEPS: usize = 4000;
pub const COMPOSITE_STEPS: usize = 500;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Tier {
    /// 9-dimensional internal space with scalar `J`.
    Internal,
    /// Internal space ⊗ truncated relative motional mode.
    Composite,
}

impl fmt::Display for Tier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Tier::Internal => "internal",
            Tier::Composite => "composite",
        })
    }
}

impl FromStr for Tier {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "internal" => Ok(Tier::Internal),
            "composite" => Ok(Tier::Composite),
            other => Err(Error::Config(format!(
                "unknown tier `{other}` (expected internal or composite)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub tier: Tier,
    /// Pulse width `t_w/T`.
    pub pulse_width: f64,
    /// Pulse-2 relative phase `θ` (radians).
    pub relative_phase: f64,
    /// Controlled phase of the target gate (radians).
    pub target_phase: f64,
    /// `J/Ω` (internal tier) or `J0/Ω` (composite tier) for single runs.
    pub coupling: f64,
    pub window_start: f64,
    pub window_end: f64,
    pub window_samples: usize,
    pub n_max: usize,
    #[serde(rename = "ell_over_L")]
    pub ell_over_l: f64,
    #[serde(rename = "omega_over_Omega")]
    pub omega_over_rabi: f64,
    pub motional_state: String,
    pub include_trap: bool,
    pub construction: FidelityConstruction,
    /// Per-pulse step count; the tier default when absent.
    pub steps_per_pulse: Option<usize>,
    pub unitarity_tol: f64,
    pub convergence_tol: f64,
    pub store_trajectory: bool,
    pub fit_phase: bool,
    pub fig1_start: f64,
    pub fig1_end: f64,
    pub fig1_points: usize,
    pub fig2_start: f64,
    pub fig2_end: f64,
    pub fig2_points: usize,
    pub phase_scan_points: usize,
    pub threads: Option<usize>,
    pub out_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            tier: Tier::Internal,
            pulse_width: 0.234,
            relative_phase: PI,
            target_phase: PI,
            coupling: 4.0,
            window_start: 3.0,
            window_end: 5.0,
            window_samples: 21,
            n_max: 40,
            ell_over_l: 0.04,
            omega_over_rabi: 1.0,
            motional_state: "vac".into(),
            include_trap: true,
            construction: FidelityConstruction::TraceOut,
            steps_per_pulse: None,
            unitarity_tol: 1e-9,
            convergence_tol: 1e-8,
            store_trajectory: false,
            fit_phase: false,
            fig1_start: 0.5,
            fig1_end: 8.0,
            fig1_points: 151,
            fig2_start: 0.5,
            fig2_end: 8.0,
            fig2_points: 31,
            phase_scan_points: 16,
            threads: None,
            out_dir: None,
        }
    }
}

fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text).map_err(|e| e.context(path.display().to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    /// Copy with the execution-only fields (`threads`, `out_dir`) cleared.
    pub fn physics(&self) -> RunConfig {
        RunConfig {
            threads: None,
            out_dir: None,
            ..self.clone()
        }
    }

    /// First 12 hex digits of the SHA-256 of the TOML echo of
    /// [`Self::physics`].
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.physics().to_toml().as_bytes());
        digest.iter().take(6).map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.pulse_width > 0.0 && self.pulse_width < 1.0) {
            return Err(invalid(
                "pulse_width",
                format!("t_w/T must lie in (0, 1), got {}", self.pulse_width),
            ));
        }
        for (name, v) in [
            ("relative_phase", self.relative_phase),
            ("target_phase", self.target_phase),
            ("coupling", self.coupling),
            ("window_start", self.window_start),
            ("window_end", self.window_end),
            ("fig1_start", self.fig1_start),
            ("fig1_end", self.fig1_end),
            ("fig2_start", self.fig2_start),
            ("fig2_end", self.fig2_end),
        ] {
            if !v.is_finite() {
                return Err(invalid(name, format!("must be finite, got {v}")));
            }
        }
        if self.window_samples == 0 || self.window_end < self.window_start {
            return Err(invalid(
                "window_samples",
                "averaging window needs window_start <= window_end and at least one sample",
            ));
        }
        if self.fig1_points < 3 || self.fig1_end <= self.fig1_start {
            return Err(invalid(
                "fig1_points",
                "fig1 grid needs at least 3 points on a non-empty range",
            ));
        }
        if self.fig2_points == 0 || self.fig2_end < self.fig2_start {
            return Err(invalid(
                "fig2_points",
                "fig2 grid needs at least 1 point and fig2_start <= fig2_end",
            ));
        }
        if self.phase_scan_points < 2 {
            return Err(invalid(
                "phase_scan_points",
                "need at least 2 phase-scan points",
            ));
        }
        if self.n_max < MIN_FOCK_LEVEL {
            return Err(invalid(
                "n_max",
                format!("must be at least {MIN_FOCK_LEVEL}, got {}", self.n_max),
            ));
        }
        if !(self.ell_over_l >= 0.0 && self.ell_over_l < 1.0) {
            return Err(invalid(
                "ell_over_L",
                format!("must lie in [0, 1), got {}", self.ell_over_l),
            ));
        }
        if !(self.omega_over_rabi >= 0.0 && self.omega_over_rabi.is_finite()) {
            return Err(invalid(
                "omega_over_Omega",
                format!(
                    "must be finite and non-negative, got {}",
                    self.omega_over_rabi
                ),
            ));
        }
        self.motional()?;
        if self.steps_per_pulse == Some(0) {
            return Err(invalid("steps_per_pulse", "must be positive"));
        }
        for (name, v) in [
            ("unitarity_tol", self.unitarity_tol),
            ("convergence_tol", self.convergence_tol),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(name, format!("must be positive, got {v}")));
            }
        }
        if self.threads == Some(0) {
            return Err(invalid("threads", "must be positive"));
        }
        Ok(())
    }

    pub fn motional(&self) -> Result<MotionalState> {
        self.motional_state.parse()
    }

    /// `steps_per_pulse`, else the default of `tier`.
    pub fn steps_for(&self, tier: Tier) -> usize {
        self.steps_per_pulse.unwrap_or(match tier {
            Tier::Internal => INTERNAL_STEPS,
            Tier::Composite => COMPOSITE_STEPS,
        })
    }

    pub fn steps(&self) -> usize {
        self.steps_for(self.tier)
    }

    pub fn propagation_options(&self, tier: Tier) -> PropagationOptions {
        PropagationOptions {
            steps_per_segment: self.steps_for(tier),
            unitarity_tol: self.unitarity_tol,
            store_trajectory: self.store_trajectory,
            tracked_rows: Vec::new(),
        }
    }

    pub fn pulses(&self) -> Result<PulseSequence> {
        PulseSequence::calibrated(self.pulse_width, 1.0, self.relative_phase)
    }

    /// Internal-tier model with `J = coupling · Ω`.
    pub fn internal_model(&self, coupling: f64) -> Result<GateModel> {
        Ok(GateModel::with_coupling_ratio(
            coupling,
            self.pulses()?,
            self.target_phase,
        ))
    }

    /// Composite-tier model and motional space with `J0 = coupling · Ω`.
    pub fn composite_model(
        &self,
        coupling: f64,
        ell_over_l: f64,
        n_max: usize,
    ) -> Result<(GateModel, MotionalSpace)> {
        let pulses = self.pulses()?;
        let model = GateModel::new(0.0, pulses, self.target_phase);
        let space = MotionalSpace {
            n_max,
            trap_frequency: self.omega_over_rabi * pulses.peak_rabi,
            length_ratio: ell_over_l,
            bare_coupling: coupling * pulses.peak_rabi,
            include_trap: self.include_trap,
        };
        space.validate()?;
        Ok((model, space))
    }

    /// `out_dir`, else `$MOLGATE_OUT`, else `results`.
    pub fn output_dir(&self) -> PathBuf {
        self.out_dir
            .clone()
            .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("results"))
    }

    /// Runs `f` on a rayon pool capped at `threads` workers.
    pub fn install<R: Send>(&self, f: impl FnOnce() -> R + Send) -> Result<R> {
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Some(n) = self.threads {
            builder = builder.num_threads(n);
        }
        let pool = builder
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        Ok(pool.install(f))
    }
}
