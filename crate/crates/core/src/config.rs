//! Run configuration shared by the command-line subcommands.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kt::{ConstraintSet, KtOptions};
use crate::optimizer::SolverConfig;
use crate::quadrature::QuadratureConfig;
use crate::special::{ChannelModel, ChannelSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConstraintKind {
    Moment4,
    Peak,
    AvgPower,
}

impl FromStr for ConstraintKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "moment4" => Ok(Self::Moment4),
            "peak" => Ok(Self::Peak),
            "avg-power" => Ok(Self::AvgPower),
            _ => Err(Error::Parse(format!(
                "unknown constraint {s:?}, expected moment4, peak or avg-power"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
}

impl FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            _ => Err(Error::Parse(format!(
                "unknown format {s:?}, expected csv or json"
            ))),
        }
    }
}

/// Everything a subcommand needs. Loaded from a JSON file and/or flags,
/// validated before any computation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ChannelModel,
    pub constraint: ConstraintKind,
    pub rician_k: f64,
    /// Normalized SNR for single solves and checks.
    pub snr: Option<f64>,
    /// Strictly increasing normalized SNRs for sweeps.
    pub snr_grid: Vec<f64>,
    /// Kurtosis bounds; sweeps accept several, everything else exactly one.
    pub kappa: Vec<f64>,
    /// Drives both the solver restarts and the Monte Carlo streams.
    pub seed: u64,
    /// Defaults to JSON for single solves and CSV for sweeps.
    pub format: Option<OutputFormat>,
    pub kt_tol: f64,
    pub warm_start: bool,
    /// Report capacities in bits in the human-readable summary.
    pub bits: bool,
    pub mc_samples: u64,
    pub quadrature: QuadratureConfig,
    /// Its `seed` field must be left at 0 or equal the top-level `seed`.
    pub solver: SolverConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: ChannelModel::ClassicalRician,
            constraint: ConstraintKind::Moment4,
            rician_k: 1.0,
            snr: None,
            snr_grid: Vec::new(),
            kappa: Vec::new(),
            seed: 0,
            format: None,
            kt_tol: KtOptions::default().kt_tol,
            warm_start: true,
            bits: false,
            mc_samples: 1_000_000,
            quadrature: QuadratureConfig::default(),
            solver: SolverConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(format!("config: {e}")))
    }

    /// Checks shared by all subcommands. Presence of the SNR and kappa is
    /// checked where they are used.
    pub fn validate(&self) -> Result<()> {
        self.channel()?;
        self.quadrature.validate()?;
        self.solver.validate()?;
        if self.solver.seed != 0 && self.solver.seed != self.seed {
            return Err(Error::Domain(format!(
                "solver.seed {} conflicts with seed {}",
                self.solver.seed, self.seed
            )));
        }
        if !self.kt_tol.is_finite() || self.kt_tol <= 0.0 {
            return Err(Error::Domain(format!(
                "kt_tol must be positive, got {}",
                self.kt_tol
            )));
        }
        if self.constraint != ConstraintKind::Moment4 && !self.kappa.is_empty() {
            return Err(Error::Domain(
                "--kappa only applies to the moment4 constraint".into(),
            ));
        }
        for &kappa in &self.kappa {
            ConstraintSet::moment4(1.0, kappa)?;
        }
        if let Some(snr) = self.snr {
            ConstraintSet::peak(snr)?;
        }
        for &a in &self.snr_grid {
            ConstraintSet::peak(a)?;
        }
        if self.snr_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Domain(
                "--snr-grid must be strictly increasing".into(),
            ));
        }
        Ok(())
    }

    pub fn channel(&self) -> Result<ChannelSpec> {
        ChannelSpec::new(self.model, self.rician_k)
    }

    pub fn snr(&self) -> Result<f64> {
        self.snr
            .ok_or_else(|| Error::Domain("--snr is required".into()))
    }

    pub fn grid(&self) -> Result<&[f64]> {
        if self.snr_grid.is_empty() {
            return Err(Error::Domain(
                "--snr-grid is required and must be nonempty".into(),
            ));
        }
        Ok(&self.snr_grid)
    }

    /// The single kappa of a non-sweep command, if the constraint has one.
    pub fn single_kappa(&self) -> Result<Option<f64>> {
        match self.kappa.as_slice() {
            [] => Ok(None),
            [k] => Ok(Some(*k)),
            _ => Err(Error::Domain(
                "only sweeps accept several kappa values".into(),
            )),
        }
    }

    pub fn constraint_set(&self, alpha: f64, kappa: Option<f64>) -> Result<ConstraintSet> {
        match (self.constraint, kappa) {
            (ConstraintKind::Moment4, Some(k)) => ConstraintSet::moment4(alpha, k),
            (ConstraintKind::Moment4, None) => Err(Error::Domain("moment4 needs --kappa".into())),
            (ConstraintKind::Peak, _) => ConstraintSet::peak(alpha),
            (ConstraintKind::AvgPower, _) => ConstraintSet::average_power(alpha),
        }
    }

    pub fn solver_config(&self) -> SolverConfig {
        SolverConfig {
            seed: self.seed,
            ..self.solver
        }
    }

    pub fn kt_options(&self) -> KtOptions {
        KtOptions {
            kt_tol: self.kt_tol,
            ..KtOptions::default()
        }
    }
}
