//! Admission control: bids, scores, the greedy user selection and an
//! exhaustive knapsack oracle to measure it against.

use std::collections::BTreeSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{UserId, UserProfile};
use crate::pricing::PriceVector;
use crate::scalar::Scalar;
use crate::utility::{attained_layer, layer_partial_sum, staircase_utility};

/// Largest bid set the exhaustive oracle accepts.
pub const ORACLE_LIMIT: usize = 20;

/// A user's request: one layer rate and the price it is willing to pay.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bid<T> {
    pub user: UserId,
    pub requested_rate: T,
    /// Network price plus the user's increment.
    pub offered_price: T,
    /// Layer reached by `requested_rate` (0 for an `x_min` fallback below the first layer).
    pub layer: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct AdmissionWeights<T> {
    /// Emphasis on the offered/network price ratio.
    #[serde(default = "one")]
    pub delta_lambda: T,
    /// Emphasis on utility per unit cost.
    #[serde(default = "one")]
    pub delta_u: T,
}

fn one<T: Scalar>() -> T {
    T::one()
}

impl<T: Scalar> Default for AdmissionWeights<T> {
    fn default() -> Self {
        Self {
            delta_lambda: T::one(),
            delta_u: T::one(),
        }
    }
}

impl<T: Scalar> AdmissionWeights<T> {
    pub fn new(delta_lambda: T, delta_u: T) -> Result<Self> {
        let w = Self { delta_lambda, delta_u };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta_lambda >= T::zero() && self.delta_lambda.is_finite()) {
            return Err(Error::invalid("admission.delta_lambda", "must be non-negative"));
        }
        if !(self.delta_u >= T::zero() && self.delta_u.is_finite()) {
            return Err(Error::invalid("admission.delta_u", "must be non-negative"));
        }
        Ok(())
    }
}

/// A bid with its score and the link indices it would occupy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredBid<T> {
    pub bid: Bid<T>,
    pub score: T,
    pub route: Vec<usize>,
}

impl<T: Scalar> ScoredBid<T> {
    /// A bare entry for selection-only experiments.
    pub fn new(user: u32, score: T, rate: T, route: Vec<usize>) -> Self {
        Self {
            bid: Bid {
                user: UserId(user),
                requested_rate: rate,
                offered_price: T::zero(),
                layer: 0,
            },
            score,
            route,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmissionResult<T> {
    pub admitted: BTreeSet<UserId>,
    pub rejected: BTreeSet<UserId>,
    /// Capacity left on each link after the admitted reservations.
    pub residual: Vec<T>,
    /// Sum of admitted scores.
    pub objective: T,
    /// Per-link capacity comparisons performed.
    pub link_checks: usize,
}

/// Bid over every layer of the schedule.
pub fn user_bid<T: Scalar>(user: &UserProfile<T>, path_price: T, increment: T) -> Result<Bid<T>> {
    user_bid_from(user, path_price, increment, 1)
}

/// Bid for the layer in `lowest_layer..=|Y|` with the best utility per unit
/// cost `U^y / (x^y * price)`. Layers the budget cannot pay for are skipped;
/// when none is affordable the bid falls back to `x_min`. Ties go to the
/// lower layer.
pub fn user_bid_from<T: Scalar>(
    user: &UserProfile<T>,
    path_price: T,
    increment: T,
    lowest_layer: usize,
) -> Result<Bid<T>> {
    if !(path_price > T::zero()) {
        return Err(Error::ZeroPrice);
    }
    if !(increment >= T::zero()) {
        return Err(Error::InvalidArgument("price increment must be non-negative".into()));
    }
    let n = user.layers.len();
    if lowest_layer == 0 || lowest_layer > n {
        return Err(Error::LayerOutOfRange {
            target: lowest_layer,
            layers: n,
        });
    }
    let mut best: Option<(T, usize)> = None;
    for y in lowest_layer..=n {
        let x = user.layers.rates()[y - 1];
        if x * path_price >= user.budget {
            continue;
        }
        let ratio = layer_partial_sum(&user.layers, &user.utility, y) / (x * path_price);
        if best.is_none_or(|(b, _)| ratio > b) {
            best = Some((ratio, y));
        }
    }
    let (rate, layer) = match best {
        Some((_, y)) => (user.layers.rates()[y - 1], y),
        None => (user.x_min, attained_layer(user.x_min, &user.layers)),
    };
    Ok(Bid {
        user: user.id,
        requested_rate: rate,
        offered_price: path_price + increment,
        layer,
    })
}

/// `x (offered/price)^dl + du * U(x) / (price * x)`.
pub fn admission_score<T: Scalar>(
    bid: &Bid<T>,
    path_price: T,
    user: &UserProfile<T>,
    weights: &AdmissionWeights<T>,
) -> Result<T> {
    let u = staircase_utility(bid.requested_rate, &user.layers, &user.utility);
    score_terms(bid.requested_rate, bid.offered_price, path_price, u, weights)
}

/// The score from its raw ingredients.
pub fn score_terms<T: Scalar>(
    rate: T,
    offered_price: T,
    path_price: T,
    utility: T,
    weights: &AdmissionWeights<T>,
) -> Result<T> {
    if !(path_price > T::zero()) {
        return Err(Error::ZeroPrice);
    }
    if !(rate > T::zero()) {
        return Err(Error::InvalidArgument("requested rate must be positive".into()));
    }
    Ok(
        rate * (offered_price / path_price).powf(weights.delta_lambda)
            + weights.delta_u * utility / (path_price * rate),
    )
}

/// Raises every price to at least its floor.
pub fn price_floor_apply<T: Scalar>(prices: &PriceVector<T>, floors: &[T]) -> Result<PriceVector<T>> {
    if prices.len() != floors.len() {
        return Err(Error::InvalidArgument(format!(
            "{} prices but {} floors",
            prices.len(),
            floors.len()
        )));
    }
    if floors.iter().any(|f| !(*f >= T::zero())) {
        return Err(Error::InvalidArgument("price floors must be non-negative".into()));
    }
    Ok(PriceVector(
        prices.as_slice().iter().zip(floors).map(|(p, f)| p.max(*f)).collect(),
    ))
}

fn check_routes<T: Scalar>(bids: &[ScoredBid<T>], links: usize) -> Result<()> {
    for b in bids {
        if let Some(&l) = b.route.iter().find(|&&l| l >= links) {
            return Err(Error::InvalidArgument(format!(
                "bid of user {} uses link index {l} of {links}",
                b.bid.user
            )));
        }
    }
    Ok(())
}

fn fits<T: Scalar>(rate: T, residual: T) -> bool {
    // reservations that fill a link exactly must still fit after rounding
    rate <= residual + T::epsilon() * T::of(16.0) * rate.max(T::one())
}

fn objective_of<T: Scalar>(bids: &[ScoredBid<T>], chosen: &[bool]) -> T {
    bids.iter()
        .zip(chosen)
        .filter(|(_, c)| **c)
        .map(|(b, _)| b.score)
        .fold(T::zero(), |a, s| a + s)
}

/// Processes bids by descending score (ties to the lower user id), admitting
/// each one that fits on every link of its route and reserving its rate.
pub fn greedy_select<T: Scalar>(bids: &[ScoredBid<T>], capacities: &[T]) -> Result<AdmissionResult<T>> {
    check_routes(bids, capacities.len())?;
    let mut order: Vec<usize> = (0..bids.len()).collect();
    order.sort_by(|&i, &j| {
        bids[j]
            .score
            .partial_cmp(&bids[i].score)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(bids[i].bid.user.cmp(&bids[j].bid.user))
    });
    let mut residual = capacities.to_vec();
    let mut chosen = vec![false; bids.len()];
    let mut admitted = BTreeSet::new();
    let mut rejected = BTreeSet::new();
    let mut link_checks = 0;
    for i in order {
        let b = &bids[i];
        if admitted.contains(&b.bid.user) {
            continue;
        }
        let mut ok = true;
        for &l in &b.route {
            link_checks += 1;
            if !fits(b.bid.requested_rate, residual[l]) {
                ok = false;
                break;
            }
        }
        if ok {
            for &l in &b.route {
                residual[l] = (residual[l] - b.bid.requested_rate).max(T::zero());
            }
            chosen[i] = true;
            admitted.insert(b.bid.user);
            rejected.remove(&b.bid.user);
        } else {
            rejected.insert(b.bid.user);
        }
    }
    Ok(AdmissionResult {
        objective: objective_of(bids, &chosen),
        admitted,
        rejected,
        residual,
        link_checks,
    })
}

/// Best feasible subset by exhaustive search. Among equal objectives the
/// lexicographically smallest set of user ids wins.
pub fn knapsack_oracle<T: Scalar>(bids: &[ScoredBid<T>], capacities: &[T]) -> Result<AdmissionResult<T>> {
    if bids.len() > ORACLE_LIMIT {
        return Err(Error::InstanceTooLarge(bids.len()));
    }
    check_routes(bids, capacities.len())?;
    let ids: BTreeSet<UserId> = bids.iter().map(|b| b.bid.user).collect();
    if ids.len() != bids.len() {
        return Err(Error::InvalidArgument("oracle needs one bid per user".into()));
    }
    let n = bids.len();
    let mut best: Option<(T, Vec<UserId>, u32)> = None;
    let mut link_checks = 0;
    let mut load = vec![T::zero(); capacities.len()];
    for mask in 0u32..(1u32 << n) {
        load.iter_mut().for_each(|v| *v = T::zero());
        let chosen: Vec<bool> = (0..n).map(|i| mask & (1 << i) != 0).collect();
        for (b, _) in bids.iter().zip(&chosen).filter(|(_, c)| **c) {
            for &l in &b.route {
                load[l] = load[l] + b.bid.requested_rate;
            }
        }
        link_checks += capacities.len();
        if !load.iter().zip(capacities).all(|(x, c)| fits(*x, *c)) {
            continue;
        }
        let value = objective_of(bids, &chosen);
        let mut set: Vec<UserId> = bids
            .iter()
            .zip(&chosen)
            .filter(|(_, c)| **c)
            .map(|(b, _)| b.bid.user)
            .collect();
        set.sort();
        let better = match &best {
            None => true,
            Some((v, s, _)) => value > *v || (value == *v && set < *s),
        };
        if better {
            best = Some((value, set, mask));
        }
    }
    let (objective, set, mask) = best.unwrap_or((T::zero(), Vec::new(), 0));
    let mut residual = capacities.to_vec();
    for (i, b) in bids.iter().enumerate() {
        if mask & (1 << i) != 0 {
            for &l in &b.route {
                residual[l] = (residual[l] - b.bid.requested_rate).max(T::zero());
            }
        }
    }
    let admitted: BTreeSet<UserId> = set.into_iter().collect();
    Ok(AdmissionResult {
        rejected: ids.difference(&admitted).copied().collect(),
        admitted,
        residual,
        objective,
        link_checks,
    })
}

/// A selection instance: scored bids over links with the given capacities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmissionInstance<T> {
    pub capacities: Vec<T>,
    pub bids: Vec<ScoredBid<T>>,
}

/// Random instance with one bid per user. Rates lie in `[1, 6)`, scores in
/// `[0.5, 10)`, capacities in `[4, 14)`, and each route is a non-empty
/// random subset of the links.
pub fn random_instance<T: Scalar, R: Rng + ?Sized>(rng: &mut R, users: usize, links: usize) -> AdmissionInstance<T> {
    let links = links.max(1);
    let capacities = (0..links).map(|_| T::of(rng.gen_range(4.0..14.0))).collect();
    let bids = (0..users)
        .map(|u| {
            let mut route: Vec<usize> = (0..links).filter(|_| rng.gen_bool(0.5)).collect();
            if route.is_empty() {
                route.push(rng.gen_range(0..links));
            }
            let score = T::of(rng.gen_range(0.5..10.0));
            let rate = T::of(rng.gen_range(1.0..6.0));
            ScoredBid::new(u as u32, score, rate, route)
        })
        .collect();
    AdmissionInstance { capacities, bids }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{LayerSchedule, Route};
    use crate::utility::UtilityParams;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ids(v: &[u32]) -> BTreeSet<UserId> {
        v.iter().map(|&i| UserId(i)).collect()
    }

    fn single_link(entries: &[(f64, f64)]) -> Vec<ScoredBid<f64>> {
        entries
            .iter()
            .enumerate()
            .map(|(i, &(s, r))| ScoredBid::new(i as u32, s, r, vec![0]))
            .collect()
    }

    fn user(rates: &[f64]) -> UserProfile<f64> {
        UserProfile::passive(
            0,
            Route::from_nodes("AB").unwrap(),
            50.0,
            LayerSchedule::new(rates.to_vec()).unwrap(),
        )
    }

    #[test]
    fn score_examples() {
        let w0 = AdmissionWeights {
            delta_lambda: 0.0,
            delta_u: 0.0,
        };
        assert_eq!(score_terms(5.0, 3.0, 2.0, 0.7, &w0).unwrap(), 5.0);
        let w1 = AdmissionWeights::default();
        assert_abs_diff_eq!(
            score_terms(5.0, 2.0, 2.0, 0.7, &w1).unwrap(),
            5.0 + 0.7 / 10.0,
            epsilon = 1e-15
        );
        let w2 = AdmissionWeights {
            delta_lambda: 2.0,
            delta_u: 1.0,
        };
        // U picked so that U / (price * rate) = 0.04
        let s = score_terms(5.0, 3.0, 2.0, 0.04 * 2.0 * 5.0, &w2).unwrap();
        assert_abs_diff_eq!(s, 11.29, epsilon = 1e-12);
        assert!(score_terms(5.0, 3.0, 0.0, 0.1, &w2).is_err());
    }

    #[test]
    fn score_grows_with_offer_and_exponent() {
        let w = AdmissionWeights::default();
        let mut last = f64::NEG_INFINITY;
        for k in 0..50 {
            let s = score_terms(2.0, 1.0 + k as f64 * 0.1, 1.0, 0.5, &w).unwrap();
            assert!(s > last);
            last = s;
        }
        // a generous bidder overtakes a larger plain one as the exponent grows
        let generous = |d: f64| {
            score_terms(
                2.0,
                1.5,
                1.0,
                0.0,
                &AdmissionWeights {
                    delta_lambda: d,
                    delta_u: 0.0,
                },
            )
            .unwrap()
        };
        let plain = |d: f64| {
            score_terms(
                3.0,
                1.0,
                1.0,
                0.0,
                &AdmissionWeights {
                    delta_lambda: d,
                    delta_u: 0.0,
                },
            )
            .unwrap()
        };
        assert!(generous(0.0) < plain(0.0));
        assert!(generous(5.0) > plain(5.0));
    }

    #[test]
    fn zero_weights_order_by_rate() {
        let w = AdmissionWeights {
            delta_lambda: 0.0,
            delta_u: 0.0,
        };
        let u = user(&[1.0, 2.0, 4.0]);
        let rates = [4.0, 1.0, 2.0];
        let bids: Vec<ScoredBid<f64>> = rates
            .iter()
            .enumerate()
            .map(|(i, &r)| {
                let bid = Bid {
                    user: UserId(i as u32),
                    requested_rate: r,
                    offered_price: 3.0,
                    layer: 0,
                };
                ScoredBid {
                    score: admission_score(&bid, 1.0, &u, &w).unwrap(),
                    bid,
                    route: vec![0],
                }
            })
            .collect();
        let res = greedy_select(&bids, &[4.5]).unwrap();
        assert_eq!(res.admitted, ids(&[0]));
    }

    #[test]
    fn bids() {
        let single = user(&[3.0]);
        assert_eq!(user_bid(&single, 1.0, 0.0).unwrap().requested_rate, 3.0);
        // per-cost ratio: layer 1 = s1/2, layer 2 = (s1+s2)/8, layer 1 wins
        let mut two = user(&[2.0, 8.0]);
        two.utility = UtilityParams::uniform(2, 1.0, 0.2);
        let b = user_bid(&two, 1.0, 0.0).unwrap();
        assert_eq!((b.requested_rate, b.layer, b.offered_price), (2.0, 1, 1.0));
        assert_eq!(user_bid(&two, 1.0, 0.5).unwrap().offered_price, 1.5);
        assert_eq!(user_bid_from(&two, 1.0, 0.0, 2).unwrap().requested_rate, 8.0);
        // budget 50 cannot afford either layer at price 30
        let broke = user_bid(&two, 30.0, 0.0).unwrap();
        assert_eq!((broke.requested_rate, broke.layer), (2.0, 1));
        assert!(user_bid(&two, 0.0, 0.0).is_err());
        assert!(user_bid_from(&two, 1.0, 0.0, 3).is_err());
    }

    #[test]
    fn floors() {
        let p = PriceVector(vec![1.0, 0.0, 0.3]);
        assert_eq!(price_floor_apply(&p, &[0.5, 0.5, 0.5]).unwrap().0, vec![1.0, 0.5, 0.5]);
        assert_eq!(price_floor_apply(&p, &[0.0, 0.0, 0.0]).unwrap(), p);
        assert!(price_floor_apply(&p, &[0.0]).is_err());
        assert!(price_floor_apply(&p, &[0.0, -1.0, 0.0]).is_err());
    }

    #[test]
    fn greedy_examples() {
        let empty = greedy_select::<f64>(&[], &[7.0]).unwrap();
        assert!(empty.admitted.is_empty());
        assert_eq!(empty.objective, 0.0);

        let one = greedy_select(&[ScoredBid::new(4, 1.0, 3.0, vec![0, 2])], &[5.0, 5.0, 5.0]).unwrap();
        assert_eq!(one.admitted, ids(&[4]));
        assert_eq!(one.residual, vec![2.0, 5.0, 2.0]);

        let res = greedy_select(&single_link(&[(9.0, 5.0), (8.0, 4.0), (7.0, 2.0)]), &[7.0]).unwrap();
        assert_eq!(res.admitted, ids(&[0, 2]));
        assert_eq!(res.rejected, ids(&[1]));
        assert_eq!(res.residual, vec![0.0]);
        assert_eq!(res.objective, 16.0);
    }

    #[test]
    fn greedy_ties_go_to_lower_id() {
        let bids = vec![
            ScoredBid::new(5, 3.0, 4.0, vec![0]),
            ScoredBid::new(2, 3.0, 4.0, vec![0]),
        ];
        assert_eq!(greedy_select(&bids, &[6.0]).unwrap().admitted, ids(&[2]));
    }

    #[test]
    fn greedy_skips_admitted_user() {
        let bids = vec![
            ScoredBid::new(1, 3.0, 4.0, vec![0]),
            ScoredBid::new(1, 2.0, 1.0, vec![0]),
        ];
        let res = greedy_select(&bids, &[10.0]).unwrap();
        assert_eq!(res.admitted, ids(&[1]));
        assert_eq!(res.residual, vec![6.0]);
        assert!(res.rejected.is_empty());
    }

    #[test]
    fn oracle_beats_greedy_on_crafted_instance() {
        let bids = single_link(&[(10.0, 6.0), (7.0, 4.0), (7.0, 3.0)]);
        let g = greedy_select(&bids, &[7.0]).unwrap();
        let o = knapsack_oracle(&bids, &[7.0]).unwrap();
        assert_eq!((g.admitted, g.objective), (ids(&[0]), 10.0));
        assert_eq!((o.admitted, o.objective), (ids(&[1, 2]), 14.0));
    }

    #[test]
    fn oracle_matches_greedy_when_greedy_is_optimal() {
        let bids = single_link(&[(9.0, 5.0), (8.0, 4.0), (7.0, 2.0)]);
        let g = greedy_select(&bids, &[7.0]).unwrap();
        let o = knapsack_oracle(&bids, &[7.0]).unwrap();
        assert_eq!(
            g,
            AdmissionResult {
                link_checks: g.link_checks,
                ..o
            }
        );
    }

    #[test]
    fn oracle_edge_cases() {
        let o = knapsack_oracle::<f64>(&[], &[1.0]).unwrap();
        assert!(o.admitted.is_empty());
        assert_eq!(o.objective, 0.0);
        let many: Vec<_> = (0..21).map(|i| ScoredBid::new(i, 1.0, 1.0, vec![0])).collect();
        assert!(matches!(
            knapsack_oracle(&many, &[5.0]),
            Err(Error::InstanceTooLarge(21))
        ));
        // equal value: {0} beats {1}
        let tie = single_link(&[(2.0, 5.0), (2.0, 5.0)]);
        assert_eq!(knapsack_oracle(&tie, &[5.0]).unwrap().admitted, ids(&[0]));
    }

    #[test]
    fn greedy_steps_linear_in_users() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in [50usize, 100, 200, 400] {
            let inst: AdmissionInstance<f64> = random_instance(&mut rng, n, 4);
            let r = greedy_select(&inst.bids, &inst.capacities).unwrap();
            assert!(r.link_checks <= n * 4);
        }
    }

    #[test]
    fn random_instance_shape() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let inst: AdmissionInstance<f64> = random_instance(&mut rng, 7, 3);
        assert_eq!(inst.capacities.len(), 3);
        assert_eq!(inst.bids.len(), 7);
        assert!(inst
            .bids
            .iter()
            .all(|b| !b.route.is_empty() && b.route.iter().all(|&l| l < 3)));
    }
}
