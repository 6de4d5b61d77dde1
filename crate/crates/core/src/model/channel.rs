use serde::{Deserialize, Serialize};

use crate::error::ModelError;

/// Slack allowed when validating probabilities read from configs.
pub const PROB_SLACK: f64 = 1e-12;

/// Channel under the operator's control; its state is observed exactly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct T1Channel {
    #[serde(alias = "pi1")]
    pub idle_prob: f64,
}

/// Channel that must be sensed before use.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct T2Channel {
    #[serde(alias = "pi2")]
    pub idle_prob: f64,
    #[serde(alias = "pf")]
    pub false_alarm: f64,
    #[serde(alias = "pm")]
    pub misdetection: f64,
}

/// Statistics derived from a [`T2Channel`] and the collision penalty.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelStats {
    /// Probability the channel is sensed idle.
    pub sensed_idle: f64,
    /// Probability the channel is truly idle given it was sensed idle.
    /// `None` when the channel is never sensed idle.
    pub idle_given_sensed: Option<f64>,
    /// Expected collision cost per served request, `Q(1-p0)/p0`.
    /// Infinite when the channel can never serve a request at positive penalty.
    pub cost: f64,
}

impl ChannelStats {
    /// `p0`, or zero for a channel that is never sensed idle.
    pub fn p0(&self) -> f64 {
        self.idle_given_sensed.unwrap_or(0.0)
    }
}

pub(crate) fn check_prob(name: &'static str, value: f64) -> Result<f64, ModelError> {
    if !value.is_finite() || !(-PROB_SLACK..=1.0 + PROB_SLACK).contains(&value) {
        return Err(ModelError::Probability { name, value });
    }
    Ok(value.clamp(0.0, 1.0))
}

impl T1Channel {
    pub fn new(idle_prob: f64) -> Result<Self, ModelError> {
        Ok(Self { idle_prob: check_prob("pi1", idle_prob)? })
    }
}

impl T2Channel {
    pub fn new(idle_prob: f64, false_alarm: f64, misdetection: f64) -> Result<Self, ModelError> {
        Ok(Self {
            idle_prob: check_prob("pi2", idle_prob)?,
            false_alarm: check_prob("pf", false_alarm)?,
            misdetection: check_prob("pm", misdetection)?,
        })
    }

    pub(crate) fn validated(self) -> Result<Self, ModelError> {
        Self::new(self.idle_prob, self.false_alarm, self.misdetection)
    }

    /// Probability of (truly idle, sensed idle).
    pub fn idle_and_sensed_idle(&self) -> f64 {
        self.idle_prob * (1.0 - self.false_alarm)
    }
}

/// Sensed-idle probability, idle-given-sensed-idle probability and expected
/// cost per service of a sense-before-use channel.
pub fn derive_stats(ch: &T2Channel, penalty: f64) -> ChannelStats {
    let joint = ch.idle_and_sensed_idle();
    let sensed_idle = joint + (1.0 - ch.idle_prob) * ch.misdetection;
    if sensed_idle <= 0.0 {
        return ChannelStats { sensed_idle: 0.0, idle_given_sensed: None, cost: f64::INFINITY };
    }
    let p0 = (joint / sensed_idle).clamp(0.0, 1.0);
    let cost = if penalty == 0.0 {
        0.0
    } else if p0 == 0.0 {
        f64::INFINITY
    } else {
        penalty * (1.0 - p0) / p0
    };
    ChannelStats { sensed_idle, idle_given_sensed: Some(p0), cost }
}
