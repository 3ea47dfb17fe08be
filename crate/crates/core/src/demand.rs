//! Adaptive demand of layered users: the desire-for-quality ratio, the
//! upgrade condition, the extra price a user offers, and the switching rule.

use crate::error::{Error, Result};
use crate::model::{DemandPolicy, UserMode, UserProfile};
use crate::scalar::Scalar;
use crate::utility::{attained_layer, layer_partial_sum};

/// Per-user demand bookkeeping owned by the simulation engine.
#[derive(Debug, Clone, PartialEq)]
pub struct DemandState<T> {
    pub current_rate: T,
    /// `attained_layer(current_rate)`.
    pub current_layer: usize,
    /// Layer the user is reaching for; never beyond the schedule.
    pub target_layer: usize,
    /// Extra price offered on top of the network price.
    pub price_increment: T,
    /// Whether the active demand policy is running.
    pub active: bool,
    /// Target fixed by a demand-change event rather than `current + k`.
    pub pinned: bool,
}

impl<T: Scalar> DemandState<T> {
    pub fn new(user: &UserProfile<T>) -> Self {
        let mut s = Self {
            current_rate: user.x_min,
            current_layer: 0,
            target_layer: 0,
            price_increment: user.price_increment.unwrap_or_else(T::zero),
            active: user.mode == UserMode::Active,
            pinned: false,
        };
        s.observe(user, user.x_min);
        s
    }

    /// Records a new rate and refreshes the derived layer fields.
    pub fn observe(&mut self, user: &UserProfile<T>, rate: T) {
        self.current_rate = rate;
        self.current_layer = attained_layer(rate, &user.layers);
        if !self.pinned {
            self.target_layer = (self.current_layer + user.upgrade_step).min(user.layers.len());
        }
    }

    /// Arms the active policy towards a fixed layer.
    pub fn pin(&mut self, target_layer: usize) {
        self.active = true;
        self.pinned = true;
        self.target_layer = target_layer;
    }
}

fn check_target<T: Scalar>(user: &UserProfile<T>, layer: usize, step: usize) -> Result<usize> {
    let target = layer + step;
    if target > user.layers.len() {
        return Err(Error::LayerOutOfRange {
            target,
            layers: user.layers.len(),
        });
    }
    Ok(target)
}

/// Utility gained by moving from `layer` to `layer + step`, per unit spent at
/// the offered price `path_price + increment`.
pub fn desire<T: Scalar>(user: &UserProfile<T>, layer: usize, step: usize, path_price: T, increment: T) -> Result<T> {
    let target = check_target(user, layer, step)?;
    let rate = user.layers.rate(target).unwrap_or(user.x_min);
    let denom = rate * (path_price + increment);
    if !(denom > T::zero()) {
        return Err(Error::InvalidArgument("desire has a zero denominator".into()));
    }
    let gain =
        layer_partial_sum(&user.layers, &user.utility, target) - layer_partial_sum(&user.layers, &user.utility, layer);
    Ok(gain / denom)
}

/// Whether the spending aversion `beta * x * price / budget` is within the
/// user's desire for the higher layer.
pub fn upgrade_condition<T: Scalar>(
    user: &UserProfile<T>,
    layer: usize,
    step: usize,
    path_price: T,
    increment: T,
) -> Result<bool> {
    let b = desire(user, layer, step, path_price, increment)?;
    let rate = user.layers.rate(layer + step).unwrap_or(user.x_min);
    let aversion = user.beta * rate * path_price / user.budget;
    // equality must survive rounding when the increment sits exactly on its bound
    let slack = T::epsilon() * T::of(64.0) * aversion.abs().max(b.abs());
    Ok(aversion <= b + slack)
}

/// Price increment bound for the jump, clamped at zero:
/// `budget * dU / (beta * price * x^2) - price`.
///
/// Read as the least a user must offer for the jump. Solving
/// [`upgrade_condition`] for the increment gives the same expression as an
/// upper limit instead: any offer up to it keeps the condition true, and
/// offering exactly it meets the condition with equality.
pub fn min_price_increment<T: Scalar>(user: &UserProfile<T>, layer: usize, step: usize, path_price: T) -> Result<T> {
    let target = check_target(user, layer, step)?;
    if !(path_price > T::zero()) {
        return Err(Error::ZeroPrice);
    }
    if !(user.beta > T::zero()) {
        return Err(Error::InvalidArgument("beta must be positive".into()));
    }
    Ok(raw_price_increment(user, layer, target, path_price).max(T::zero()))
}

fn raw_price_increment<T: Scalar>(user: &UserProfile<T>, layer: usize, target: usize, path_price: T) -> T {
    let rate = user.layers.rate(target).unwrap_or(user.x_min);
    let gain =
        layer_partial_sum(&user.layers, &user.utility, target) - layer_partial_sum(&user.layers, &user.utility, layer);
    user.budget * gain / (user.beta * path_price * rate * rate) - path_price
}

/// Extra price the user offers right now.
///
/// An explicit `price_increment` wins. Otherwise active users offer what their
/// policy implies: the minimum increment for a b-function user, the distance
/// up to the threshold for a threshold user. Passive users offer nothing.
pub fn offered_increment<T: Scalar>(user: &UserProfile<T>, state: &DemandState<T>, path_price: T) -> T {
    if let Some(inc) = user.price_increment {
        return inc;
    }
    if !state.active {
        return T::zero();
    }
    match user.demand_policy {
        DemandPolicy::PriceThreshold { threshold } => (threshold - path_price).max(T::zero()),
        DemandPolicy::BFunction => {
            if state.target_layer > state.current_layer && path_price > T::zero() {
                min_price_increment(
                    user,
                    state.current_layer,
                    state.target_layer - state.current_layer,
                    path_price,
                )
                .unwrap_or_else(|_| T::zero())
            } else {
                T::zero()
            }
        }
    }
}

/// Rate the user sends after its demand policy has looked at `path_price`.
///
/// Returns the target layer's rate when the policy fires, the current rate
/// otherwise. Passive users always keep the network-allocated rate.
pub fn next_demand<T: Scalar>(user: &UserProfile<T>, state: &DemandState<T>, path_price: T) -> Result<T> {
    if !state.active || state.target_layer <= state.current_layer {
        return Ok(state.current_rate);
    }
    let fires = match user.demand_policy {
        DemandPolicy::PriceThreshold { threshold } => path_price < threshold,
        DemandPolicy::BFunction => {
            let inc = offered_increment(user, state, path_price);
            if path_price + inc > T::zero() {
                upgrade_condition(
                    user,
                    state.current_layer,
                    state.target_layer - state.current_layer,
                    path_price,
                    inc,
                )?
            } else {
                // free bandwidth
                true
            }
        }
    };
    Ok(if fires {
        user.layers.rate(state.target_layer).unwrap_or(state.current_rate)
    } else {
        state.current_rate
    })
}

/// Smallest price above which the upgrade condition fails, found by
/// bisection with the user offering exactly the minimum increment.
///
/// `None` if the condition still holds at `2^60`.
pub fn upgrade_price_limit<T: Scalar>(user: &UserProfile<T>, layer: usize, step: usize) -> Result<Option<T>> {
    let holds = |p: T| -> Result<bool> {
        let inc = min_price_increment(user, layer, step, p)?;
        upgrade_condition(user, layer, step, p, inc)
    };
    let mut hi = T::one();
    let mut doublings = 0;
    while holds(hi)? {
        hi = hi * T::of(2.0);
        doublings += 1;
        if doublings > 60 {
            return Ok(None);
        }
    }
    let mut lo = T::zero();
    for _ in 0..200 {
        let mid = (lo + hi) / T::of(2.0);
        if mid <= lo || mid >= hi {
            break;
        }
        if holds(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Some(hi))
}
