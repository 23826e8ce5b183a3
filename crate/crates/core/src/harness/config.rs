//! JSON experiment configurations.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::laws::{LawSpec, MatrixSpec, RadialLaw};
use crate::limit::CltKind;
use crate::linalg::Field;
use crate::orbit::GroupEngine;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    WalkGroup,
    WalkBessel,
    Convolve,
    Kappa,
    CltCheck,
    BerryEsseenScan,
    Axioms,
    MomentIdentity,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 8] = [
        ExperimentKind::WalkGroup,
        ExperimentKind::WalkBessel,
        ExperimentKind::Convolve,
        ExperimentKind::Kappa,
        ExperimentKind::CltCheck,
        ExperimentKind::BerryEsseenScan,
        ExperimentKind::Axioms,
        ExperimentKind::MomentIdentity,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::WalkGroup => "walk-group",
            ExperimentKind::WalkBessel => "walk-bessel",
            ExperimentKind::Convolve => "convolve",
            ExperimentKind::Kappa => "kappa",
            ExperimentKind::CltCheck => "clt-check",
            ExperimentKind::BerryEsseenScan => "berry-esseen-scan",
            ExperimentKind::Axioms => "axioms",
            ExperimentKind::MomentIdentity => "moment-identity",
        }
    }
}

impl std::fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Which walk feeds a `clt-check`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WalkFamily {
    #[default]
    Group,
    Bessel,
}

/// Named property checks for the `axioms` experiment.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AxiomCheck {
    /// `‖t‖ ≤ ‖r‖ + ‖s‖` for every convolution draw over `support_grid`.
    SupportBound,
    /// Distributional commutativity of `convolve_points` over `support_grid`.
    Commutativity,
    /// `m₁` of one convolution step is at most `m₁(r) + m₁(s)`, over `support_grid`.
    M1Subadditivity,
    /// Character multiplicativity for q = 1 with the `character` parameters.
    Character,
    /// Bessel walk at μ = pd/2 against the radial part of the group walk in dimension p.
    GroupOracle,
    /// Ratio of Bessel/semigroup gaps between consecutive entries of `mu_grid`.
    LipschitzGap,
    /// KS distance of q = 1 contraction draws `v²` to Beta(d/2, μ−ρ+1).
    ContractionKs,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CharacterSpec {
    pub mu: f64,
    pub r1: f64,
    pub r2: f64,
    pub s: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SupportCase {
    pub q: usize,
    #[serde(default)]
    pub field: Field,
    pub mu: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointPair {
    pub r: MatrixSpec,
    pub s: MatrixSpec,
}

/// Clipped quadratic `min(tr(D x²), cap)`; the cap defaults to `tr(D·nσ²)`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestFunctionSpec {
    #[serde(default)]
    pub direction: Option<MatrixSpec>,
    #[serde(default)]
    pub cap: Option<f64>,
}

/// Pass/fail thresholds; every field has a default.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    /// Allowed deviation in standard errors for mean and covariance checks.
    pub se_multiplier: f64,
    /// Largest acceptable one-sample KS distance.
    pub ks_max: f64,
    /// Smallest acceptable p-value for two-sample and normality tests.
    pub p_value_min: f64,
    /// Largest acceptable fitted log-log slope in rate scans.
    pub slope_max: f64,
    pub gap_ratio_min: f64,
    pub gap_ratio_max: f64,
    /// Slack allowed in the support bound.
    pub support_slack: f64,
    /// Ratio above which a regime hypothesis counts as violated.
    pub regime_ratio: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            se_multiplier: 4.0,
            ks_max: 0.02,
            p_value_min: 1e-3,
            slope_max: -0.35,
            gap_ratio_min: 1.0,
            gap_ratio_max: 4.0,
            support_slack: 1e-8,
            regime_ratio: 0.1,
        }
    }
}

/// One experiment, as read from a JSON file. Fields not used by an experiment are
/// rejected by [`ExperimentConfig::validate`] only when they would be silently ignored
/// in a misleading way; otherwise they default to empty.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub law: Option<LawSpec>,
    #[serde(default)]
    pub field: Field,
    /// Cone size for experiments without a law.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub p_grid: Vec<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub mu_grid: Vec<f64>,
    /// `(n, p)` pairs for `moment-identity`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub np_grid: Vec<(usize, usize)>,
    /// Walk lengths for `berry-esseen-scan`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub n_grid: Vec<usize>,
    #[serde(default)]
    pub n_steps: usize,
    /// Recorded steps; defaults to `[n_steps]`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub checkpoints: Vec<usize>,
    pub replicates: usize,
    pub master_seed: u64,
    #[serde(default)]
    pub walk: WalkFamily,
    #[serde(default)]
    pub engine: GroupEngine,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<CltKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<PointPair>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub checks: Vec<AxiomCheck>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub character: Option<CharacterSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub support_grid: Vec<SupportCase>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_function: Option<TestFunctionSpec>,
    /// Also write one CSV row per replicate (walk experiments and `convolve`).
    #[serde(default)]
    pub record_replicates: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
    #[serde(default)]
    pub thresholds: Thresholds,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| Error::config("<json>", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config { field, message } if field == "<json>" => Error::config(path.display().to_string(), message),
            other => other,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(serde_json::to_vec(self).expect("config serializes"));
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn build_law(&self) -> Result<RadialLaw> {
        let spec = self.law.as_ref().ok_or_else(|| Error::config("law", "this experiment needs a law"))?;
        spec.build().map_err(|e| Error::config("law", e.to_string()))
    }

    /// Recorded steps, defaulting to the final step.
    pub fn checkpoints(&self) -> Vec<usize> {
        if self.checkpoints.is_empty() {
            vec![self.n_steps]
        } else {
            self.checkpoints.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        use ExperimentKind::*;
        if self.name.is_empty()
            || !self.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-' || c == '.')
        {
            return Err(Error::config("name", "must be a nonempty file-name-safe string"));
        }
        if self.replicates == 0 {
            return Err(Error::config("replicates", "must be at least 1"));
        }
        let needs_law = matches!(self.experiment, WalkGroup | WalkBessel | CltCheck | BerryEsseenScan | MomentIdentity)
            || self.checks.iter().any(|c| matches!(c, AxiomCheck::GroupOracle | AxiomCheck::LipschitzGap));
        if needs_law {
            let law = self.build_law()?;
            if law.field() == Field::Complex && self.field == Field::Real {
                return Err(Error::config("field", "a complex law needs field = \"complex\""));
            }
        }
        let needs_steps = matches!(self.experiment, WalkGroup | WalkBessel | CltCheck)
            || self.checks.iter().any(|c| matches!(c, AxiomCheck::GroupOracle | AxiomCheck::LipschitzGap));
        if needs_steps {
            if self.n_steps == 0 {
                return Err(Error::config("n_steps", "must be at least 1"));
            }
            let cps = self.checkpoints();
            if cps[0] == 0 || cps.windows(2).any(|w| w[0] >= w[1]) || *cps.last().unwrap() > self.n_steps {
                return Err(Error::config("checkpoints", format!("must increase strictly within 1..={}", self.n_steps)));
            }
        }
        if self.mu_grid.iter().any(|m| !m.is_finite()) {
            return Err(Error::config("mu_grid", "entries must be finite"));
        }
        match self.experiment {
            WalkGroup => nonempty(&self.p_grid, "p_grid")?,
            WalkBessel | Kappa => nonempty(&self.mu_grid, "mu_grid")?,
            Convolve => {
                nonempty(&self.mu_grid, "mu_grid")?;
                if self.points.is_none() {
                    return Err(Error::config("points", "convolve needs points r and s"));
                }
            }
            CltCheck => {
                if self.kind.is_none() {
                    return Err(Error::config("kind", "clt-check needs kind CLT1..CLT4"));
                }
                match self.walk {
                    WalkFamily::Group => nonempty(&self.p_grid, "p_grid")?,
                    WalkFamily::Bessel => {
                        nonempty(&self.mu_grid, "mu_grid")?;
                        if self.kind != Some(CltKind::Clt4) && self.kind != Some(CltKind::Clt2) {
                            return Err(Error::config("kind", "Bessel walks support CLT2 and CLT4 only"));
                        }
                    }
                }
                if self.replicates < 2 {
                    return Err(Error::config("replicates", "clt-check needs at least 2 replicates"));
                }
            }
            BerryEsseenScan => {
                nonempty(&self.p_grid, "p_grid")?;
                if self.n_grid.len() < 4 {
                    return Err(Error::config("n_grid", "needs at least 4 walk lengths"));
                }
            }
            MomentIdentity => {
                nonempty(&self.np_grid, "np_grid")?;
                if self.np_grid.iter().any(|&(n, p)| n == 0 || p == 0) {
                    return Err(Error::config("np_grid", "n and p must be positive"));
                }
            }
            Axioms => {
                nonempty(&self.checks, "checks")?;
                for check in &self.checks {
                    match check {
                        AxiomCheck::SupportBound | AxiomCheck::Commutativity | AxiomCheck::M1Subadditivity => {
                            nonempty(&self.support_grid, "support_grid")?
                        }
                        AxiomCheck::Character => {
                            if self.character.is_none() {
                                return Err(Error::config("character", "character check needs mu, r1, r2, s"));
                            }
                        }
                        AxiomCheck::GroupOracle | AxiomCheck::ContractionKs => nonempty(&self.mu_grid, "mu_grid")?,
                        AxiomCheck::LipschitzGap => {
                            if self.mu_grid.len() < 2 {
                                return Err(Error::config("mu_grid", "lipschitz-gap needs at least two indices"));
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

fn nonempty<T>(v: &[T], field: &str) -> Result<()> {
    if v.is_empty() {
        Err(Error::config(field, "must not be empty"))
    } else {
        Ok(())
    }
}
