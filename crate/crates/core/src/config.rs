//! Knobs of one pretraining-plus-acquisition run.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::TrainConfig;
use crate::utility_model::{EncoderConfig, EpochConfig, LossConfig, Objective, OtLossWeights};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("k - k1 = {remaining} is not a multiple of b = {b}")]
    PretrainArithmetic { remaining: usize, b: usize },
    #[error("k1 = {k1} exceeds k = {k}")]
    K1TooLarge { k1: usize, k: usize },
    #[error("{0} must be positive")]
    Zero(&'static str),
    #[error("candidate pool size M = {m} is smaller than b = {b}")]
    CandidatesBelowBatch { m: usize, b: usize },
    #[error("invalid value for {name}: {value}")]
    Invalid { name: &'static str, value: String },
}

/// The three method components that can be switched off for ablations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Toggles {
    pub bilevel: bool,
    pub ot: bool,
    pub ranknet: bool,
}

impl Default for Toggles {
    fn default() -> Self {
        Self::all(true)
    }
}

impl Toggles {
    pub fn all(on: bool) -> Self {
        Self {
            bilevel: on,
            ot: on,
            ranknet: on,
        }
    }

    /// All eight combinations, full method first.
    pub fn grid() -> Vec<Toggles> {
        let mut out = Vec::with_capacity(8);
        for bilevel in [true, false] {
            for ot in [true, false] {
                for ranknet in [true, false] {
                    out.push(Toggles {
                        bilevel,
                        ot,
                        ranknet,
                    });
                }
            }
        }
        out
    }
}

/// How the utility model starts before pretraining.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum InitMode {
    Random,
    /// Load a checkpoint trained elsewhere (on disjoint data).
    WarmStart {
        path: PathBuf,
    },
}

/// Ground-truth OT distance settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OtTargetConfig {
    /// Validation points used as the OT target cloud; `0` means all.
    pub reference_size: usize,
    /// Entropic regularization relative to the median ground cost.
    pub epsilon_scale: f64,
    pub max_iterations: usize,
    pub tolerance: f64,
}

impl Default for OtTargetConfig {
    fn default() -> Self {
        Self {
            reference_size: 100,
            epsilon_scale: crate::ot::DEFAULT_EPSILON_SCALE,
            max_iterations: crate::ot::DEFAULT_MAX_ITERATIONS,
            tolerance: crate::ot::DEFAULT_TOLERANCE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RamboConfig {
    /// Size of the initial labeled pool.
    pub k: usize,
    /// Size of the first pretraining prefix.
    pub k1: usize,
    /// Batch size of both stages.
    pub b: usize,
    /// Acquisition budget.
    pub budget: usize,
    /// Interpolated pairs collected per pretraining iteration.
    pub n: usize,
    /// Margin-filtered candidates per acquisition step; `None` means `4 * b`.
    pub m: Option<usize>,
    pub lambda_ot: f64,
    pub ot_weights: OtLossWeights,
    pub bilevel_grid: Vec<f64>,
    /// Inner Adam epochs per fit.
    pub inner_epochs: usize,
    /// Cap on pairs drawn from each partition per fit.
    pub max_pairs: usize,
    pub utility_lr: f64,
    pub utility_batch_size: usize,
    pub encoder: EncoderConfig,
    pub toggles: Toggles,
    pub ot_target: OtTargetConfig,
    pub init: InitMode,
    pub classifier: TrainConfig,
    /// Use one classifier trained on the initial pool for every margin filter
    /// instead of retraining before each step.
    pub frozen_classifier: bool,
    /// Fraction of interpolated samples whose true utility is also computed,
    /// for diagnostics only.
    pub audit_fraction: f64,
}

impl Default for RamboConfig {
    fn default() -> Self {
        Self {
            k: 200,
            k1: 50,
            b: 50,
            budget: 500,
            n: 50,
            m: None,
            lambda_ot: 1.0,
            ot_weights: OtLossWeights::default(),
            bilevel_grid: vec![0.0, 1e-4, 1e-3, 1e-2, 1e-1],
            inner_epochs: 20,
            max_pairs: 256,
            utility_lr: 1e-3,
            utility_batch_size: 16,
            encoder: EncoderConfig::default(),
            toggles: Toggles::default(),
            ot_target: OtTargetConfig::default(),
            init: InitMode::Random,
            classifier: TrainConfig::default(),
            frozen_classifier: false,
            audit_fraction: 0.0,
        }
    }
}

impl RamboConfig {
    /// Number of pretraining iterations, `(k - k1) / b`.
    pub fn tau1(&self) -> Result<usize, ConfigError> {
        if self.b == 0 {
            return Err(ConfigError::Zero("b"));
        }
        if self.k1 > self.k {
            return Err(ConfigError::K1TooLarge {
                k1: self.k1,
                k: self.k,
            });
        }
        let remaining = self.k - self.k1;
        if !remaining.is_multiple_of(self.b) {
            return Err(ConfigError::PretrainArithmetic {
                remaining,
                b: self.b,
            });
        }
        Ok(remaining / self.b)
    }

    /// Number of acquisition steps, `ceil(B / b)`.
    pub fn tau2(&self) -> usize {
        if self.b == 0 {
            0
        } else {
            self.budget.div_ceil(self.b)
        }
    }

    pub fn candidates(&self) -> usize {
        self.m.unwrap_or(4 * self.b)
    }

    /// `lambda_ot`, or zero when the OT component is switched off.
    pub fn effective_lambda_ot(&self) -> f64 {
        if self.toggles.ot {
            self.lambda_ot
        } else {
            0.0
        }
    }

    /// The outer grid, or `{0}` when bilevel selection is switched off.
    pub fn effective_grid(&self) -> Vec<f64> {
        if self.toggles.bilevel {
            self.bilevel_grid.clone()
        } else {
            vec![0.0]
        }
    }

    pub fn encoder_config(&self) -> EncoderConfig {
        EncoderConfig {
            objective: if self.toggles.ranknet {
                Objective::RankNet
            } else {
                Objective::Regression
            },
            ..self.encoder.clone()
        }
    }

    pub fn epoch_config(&self, weight_decay: f64) -> EpochConfig {
        EpochConfig {
            batch_size: self.utility_batch_size,
            loss: LossConfig {
                lambda_ot: self.effective_lambda_ot(),
                ot_weights: self.ot_weights,
                weight_decay,
            },
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.tau1()?;
        for (name, v) in [
            ("b", self.b),
            ("budget", self.budget),
            ("inner_epochs", self.inner_epochs),
            ("max_pairs", self.max_pairs),
            ("utility_batch_size", self.utility_batch_size),
        ] {
            if v == 0 {
                return Err(ConfigError::Zero(name));
            }
        }
        if self.candidates() < self.b {
            return Err(ConfigError::CandidatesBelowBatch {
                m: self.candidates(),
                b: self.b,
            });
        }
        if self.bilevel_grid.is_empty()
            || self
                .bilevel_grid
                .iter()
                .any(|l| !(*l >= 0.0) || !l.is_finite())
        {
            return Err(ConfigError::Invalid {
                name: "bilevel_grid",
                value: format!("{:?}", self.bilevel_grid),
            });
        }
        let w = &self.ot_weights;
        for (name, v) in [
            ("lambda_ot", self.lambda_ot),
            ("lambda1", w.lambda1),
            ("lambda2", w.lambda2),
            ("lambda3", w.lambda3),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(ConfigError::Invalid {
                    name,
                    value: v.to_string(),
                });
            }
        }
        if !(self.utility_lr > 0.0) {
            return Err(ConfigError::Invalid {
                name: "utility_lr",
                value: self.utility_lr.to_string(),
            });
        }
        if !(0.0..=1.0).contains(&self.audit_fraction) {
            return Err(ConfigError::Invalid {
                name: "audit_fraction",
                value: self.audit_fraction.to_string(),
            });
        }
        if !(self.ot_target.epsilon_scale > 0.0) {
            return Err(ConfigError::Invalid {
                name: "ot_target.epsilon_scale",
                value: self.ot_target.epsilon_scale.to_string(),
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_schedule_counts() {
        let c = RamboConfig::default();
        assert_eq!(c.tau1().unwrap(), 3);
        assert_eq!(c.tau2(), 10);
        assert_eq!(c.candidates(), 200);
        c.validate().unwrap();
    }

    #[test]
    fn larger_scale_schedule() {
        let c = RamboConfig {
            k: 2500,
            k1: 500,
            b: 1000,
            budget: 5000,
            n: 30,
            ..RamboConfig::default()
        };
        assert_eq!(c.tau1().unwrap(), 2);
        assert_eq!(c.tau2(), 5);
    }

    #[test]
    fn bad_arithmetic_is_rejected() {
        let c = RamboConfig {
            k: 210,
            ..RamboConfig::default()
        };
        assert_eq!(
            c.tau1(),
            Err(ConfigError::PretrainArithmetic {
                remaining: 160,
                b: 50
            })
        );
    }

    #[test]
    fn toggles_map_to_effective_settings() {
        let c = RamboConfig {
            toggles: Toggles::all(false),
            ..RamboConfig::default()
        };
        assert_eq!(c.effective_lambda_ot(), 0.0);
        assert_eq!(c.effective_grid(), vec![0.0]);
        assert_eq!(c.encoder_config().objective, Objective::Regression);
        assert_eq!(Toggles::grid().len(), 8);
        assert_eq!(Toggles::grid()[0], Toggles::all(true));
    }

    #[test]
    fn json_round_trip_with_defaults() {
        let c: RamboConfig = serde_json::from_str(r#"{"k": 100, "k1": 50}"#).unwrap();
        assert_eq!(c.k, 100);
        assert_eq!(c.b, 50);
        let back: RamboConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
    }
}
