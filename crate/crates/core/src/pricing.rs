//! Dual decomposition: path prices, user best responses and the projected
//! subgradient update of link prices.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::UserProfile;
use crate::scalar::Scalar;
use crate::utility::total_utility;

/// Per-link prices, indexed like `Scenario::links`.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceVector<T>(pub Vec<T>);

impl<T: Scalar> PriceVector<T> {
    pub fn uniform(links: usize, price: T) -> Self {
        Self(vec![price; links])
    }

    pub fn as_slice(&self) -> &[T] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepRule {
    /// `step / (t + 1)`
    #[default]
    Harmonic,
    /// `step / sqrt(t + 1)`
    InverseSqrt,
}

/// Diminishing step sizes: they vanish but their sum diverges.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSchedule<T> {
    pub initial: T,
    pub rule: StepRule,
}

impl<T: Scalar> StepSchedule<T> {
    pub fn harmonic(initial: T) -> Self {
        Self {
            initial,
            rule: StepRule::Harmonic,
        }
    }
}

pub fn step_size<T: Scalar>(t: usize, schedule: &StepSchedule<T>) -> T {
    let n = T::of((t + 1) as f64);
    match schedule.rule {
        StepRule::Harmonic => schedule.initial / n,
        StepRule::InverseSqrt => schedule.initial / n.sqrt(),
    }
}

/// Sum of the prices of the links on a route.
pub fn path_price<T: Scalar>(route: &[usize], prices: &PriceVector<T>) -> Result<T> {
    route
        .iter()
        .map(|&l| {
            prices
                .0
                .get(l)
                .copied()
                .ok_or_else(|| Error::InvalidArgument(format!("no price for link index {l}")))
        })
        .sum()
}

/// Projected subgradient step `[price - step * (capacity - load)]^+`,
/// additionally held at `floor` when one is active.
pub fn update_link_price<T: Scalar>(price: T, step: T, capacity: T, load: T, floor: Option<T>) -> T {
    let next = price - step * (capacity - load);
    let lower = floor.unwrap_or_else(T::zero).max(T::zero());
    if next > lower {
        next
    } else {
        lower
    }
}

/// Best response of a staircase user to path price `path_price`.
///
/// Utility is flat between thresholds while cost grows, so the maximum lies
/// on `{x_min} ∪ layer rates`; ties go to the smaller rate.
pub fn user_rate<T: Scalar>(user: &UserProfile<T>, path_price: T) -> Result<T> {
    if !(path_price >= T::zero()) {
        return Err(Error::InvalidArgument(format!(
            "path price must be non-negative, got {path_price}"
        )));
    }
    let mut best: Option<(T, T)> = None;
    for x in user.candidate_rates() {
        let v = total_utility(x, &user.layers, &user.utility, path_price, user.budget)?.value();
        match best {
            Some((bv, _)) if !(v > bv) => {}
            _ => best = Some((v, x)),
        }
    }
    best.map(|(_, x)| x)
        .ok_or_else(|| Error::InvalidArgument("empty candidate set".into()))
}

/// Anything that answers a path price with a sending rate.
pub trait RateResponse<T: Scalar> {
    fn rate(&self, path_price: T) -> Result<T>;
}

impl<T: Scalar> RateResponse<T> for UserProfile<T> {
    fn rate(&self, path_price: T) -> Result<T> {
        user_rate(self, path_price)
    }
}

/// Single-layer concave utility `weight * ln(x)` capped at `max_rate`.
///
/// Its best response `weight / price` gives the proportional-fair allocation
/// a reference point for the price loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogUtility<T> {
    pub weight: T,
    pub max_rate: T,
}

impl<T: Scalar> RateResponse<T> for LogUtility<T> {
    fn rate(&self, path_price: T) -> Result<T> {
        if path_price > T::zero() {
            Ok((self.weight / path_price).min(self.max_rate))
        } else {
            Ok(self.max_rate)
        }
    }
}

/// A flow in a plain price loop: a route and its rate response.
pub struct Flow<'a, T> {
    pub route: Vec<usize>,
    pub response: &'a dyn RateResponse<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualOutcome<T> {
    pub prices: PriceVector<T>,
    pub rates: Vec<T>,
    /// Link prices after every iteration.
    pub price_history: Vec<Vec<T>>,
}

/// Runs the synchronous price loop: all rates at the current prices, then
/// every link price from the aggregate of those rates.
pub fn dual_decomposition<T: Scalar>(
    capacities: &[T],
    flows: &[Flow<'_, T>],
    schedule: &StepSchedule<T>,
    iterations: usize,
) -> Result<DualOutcome<T>> {
    let mut prices = PriceVector::uniform(capacities.len(), T::zero());
    let mut rates = vec![T::zero(); flows.len()];
    let mut history = Vec::with_capacity(iterations);
    let mut loads = vec![T::zero(); capacities.len()];
    for t in 0..iterations {
        for (rate, flow) in rates.iter_mut().zip(flows) {
            *rate = flow.response.rate(path_price(&flow.route, &prices)?)?;
        }
        loads.iter_mut().for_each(|l| *l = T::zero());
        for (rate, flow) in rates.iter().zip(flows) {
            for &l in &flow.route {
                loads[l] = loads[l] + *rate;
            }
        }
        let step = step_size(t, schedule);
        for (l, price) in prices.0.iter_mut().enumerate() {
            *price = update_link_price(*price, step, capacities[l], loads[l], None);
        }
        history.push(prices.0.clone());
    }
    Ok(DualOutcome {
        prices,
        rates,
        price_history: history,
    })
}
