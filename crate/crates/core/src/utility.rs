//! Staircase utility for layered media.
//!
//! A user's bandwidth utility is a step function over the layers of the
//! encoding schedule. Attaining layer `i` adds a step of height
//! `layer_utility(r_i, a_i) * decay_factor(r_i, w_i)` where `r_i` is the layer's
//! threshold rate. Steps are evaluated at thresholds, so utility is flat
//! between them. The cost side is linear in the rate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::LayerSchedule;
use crate::scalar::Scalar;

/// Default sigmoid steepness for a layer when a scenario omits it.
pub const DEFAULT_STEEPNESS: f64 = 1.0;
/// Default decay coefficient for a layer when a scenario omits it.
pub const DEFAULT_DECAY: f64 = 0.2;

/// Per-layer shape parameters of the staircase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilityParams<T> {
    pub sigmoid_steepness: Vec<T>,
    pub decay_coeff: Vec<T>,
}

impl<T: Scalar> UtilityParams<T> {
    /// Same steepness and decay for every one of `layers` layers.
    pub fn uniform(layers: usize, steepness: T, decay: T) -> Self {
        Self {
            sigmoid_steepness: vec![steepness; layers],
            decay_coeff: vec![decay; layers],
        }
    }

    pub fn defaults(layers: usize) -> Self {
        Self::uniform(layers, T::of(DEFAULT_STEEPNESS), T::of(DEFAULT_DECAY))
    }

    pub fn validate(&self, layers: usize) -> Result<()> {
        if self.sigmoid_steepness.len() != layers {
            return Err(Error::invalid(
                "sigmoid_steepness",
                format!("expected {layers} entries, got {}", self.sigmoid_steepness.len()),
            ));
        }
        if self.decay_coeff.len() != layers {
            return Err(Error::invalid(
                "decay_coeff",
                format!("expected {layers} entries, got {}", self.decay_coeff.len()),
            ));
        }
        if let Some(a) = self
            .sigmoid_steepness
            .iter()
            .find(|a| !(**a > T::zero() && a.is_finite()))
        {
            return Err(Error::invalid(
                "sigmoid_steepness",
                format!("must be positive, got {a}"),
            ));
        }
        if let Some(w) = self.decay_coeff.iter().find(|w| !(**w > T::zero() && w.is_finite())) {
            return Err(Error::invalid("decay_coeff", format!("must be positive, got {w}")));
        }
        Ok(())
    }
}

/// Bandwidth and cost components of a user's utility.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UtilityValue<T> {
    pub bandwidth: T,
    pub cost: T,
}

impl<T: Scalar> UtilityValue<T> {
    pub fn value(&self) -> T {
        self.bandwidth + self.cost
    }
}

/// Largest layer `y` (1-based) whose threshold is at most `x`; 0 when none is.
pub fn attained_layer<T: Scalar>(x: T, layers: &LayerSchedule<T>) -> usize {
    // thresholds are strictly increasing, so the attained set is a prefix
    layers.rates().partition_point(|r| *r <= x)
}

/// Sigmoid rescaled so that it is 0 at 0 and saturates at 1.
pub fn layer_utility<T: Scalar>(x: T, steepness: T) -> T {
    let two = T::of(2.0);
    two / (T::one() + (-steepness * x).exp()) - T::one()
}

pub fn decay_factor<T: Scalar>(x: T, coeff: T) -> T {
    (-coeff * x).exp()
}

/// Height of the step contributed by layer `layer` (1-based).
pub fn step_height<T: Scalar>(layers: &LayerSchedule<T>, params: &UtilityParams<T>, layer: usize) -> T {
    let i = layer - 1;
    let rate = layers.rates()[i];
    layer_utility(rate, params.sigmoid_steepness[i]) * decay_factor(rate, params.decay_coeff[i])
}

/// All step heights, in layer order.
pub fn step_heights<T: Scalar>(layers: &LayerSchedule<T>, params: &UtilityParams<T>) -> Vec<T> {
    (1..=layers.len()).map(|y| step_height(layers, params, y)).collect()
}

/// Staircase utility accumulated through layer `layer` (the `U^y` term);
/// 0 for `layer == 0`.
pub fn layer_partial_sum<T: Scalar>(layers: &LayerSchedule<T>, params: &UtilityParams<T>, layer: usize) -> T {
    (1..=layer).map(|y| step_height(layers, params, y)).sum()
}

pub fn staircase_utility<T: Scalar>(x: T, layers: &LayerSchedule<T>, params: &UtilityParams<T>) -> T {
    layer_partial_sum(layers, params, attained_layer(x, layers))
}

/// Satisfaction with the price paid: `1 - x * price / budget`.
///
/// Negative once the spend exceeds the budget.
pub fn cost_utility<T: Scalar>(x: T, price: T, budget: T) -> Result<T> {
    if !(budget > T::zero()) {
        return Err(Error::InvalidArgument(format!("budget must be positive, got {budget}")));
    }
    Ok(T::one() - x * price / budget)
}

pub fn total_utility<T: Scalar>(
    x: T,
    layers: &LayerSchedule<T>,
    params: &UtilityParams<T>,
    price: T,
    budget: T,
) -> Result<UtilityValue<T>> {
    Ok(UtilityValue {
        bandwidth: staircase_utility(x, layers, params),
        cost: cost_utility(x, price, budget)?,
    })
}

/// True when every step is strictly lower than the one before it.
pub fn has_diminishing_returns<T: Scalar>(layers: &LayerSchedule<T>, params: &UtilityParams<T>) -> bool {
    step_heights(layers, params).windows(2).all(|w| w[1] < w[0])
}

/// Rate beyond which `layer_utility(r, a) * decay_factor(r, w)` is strictly
/// decreasing in `r`; schedules whose thresholds all lie above it have
/// diminishing step heights when parameters are shared across layers.
pub fn peak_step_rate<T: Scalar>(steepness: T, decay: T) -> T {
    (steepness / decay).asinh() / steepness
}
