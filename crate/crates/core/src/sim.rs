//! The iteration loop. Each step, in order:
//!
//! 1. path prices from the current link prices;
//! 2. every admitted user's best response, then its demand policy;
//! 3. every link price from the aggregate of the step-2 rates;
//! 4. events scheduled for this iteration (and the oscillation trigger);
//! 5. one trace sample per link and user.

use log::{debug, info};

use crate::admission::{admission_score, greedy_select, price_floor_apply, user_bid_from, ScoredBid};
use crate::demand::{next_demand, offered_increment, DemandState};
use crate::error::{Error, Result};
use crate::metrics::detect_oscillation_relative;
use crate::model::{EventKind, Scenario};
use crate::pricing::{path_price, step_size, update_link_price, user_rate, PriceVector, StepSchedule};
use crate::scalar::Scalar;
use crate::trace::{AdmissionRecord, EventMarker, LinkSample, Step, Trace, UserSample};
use crate::utility::attained_layer;

#[derive(Debug, Clone, PartialEq)]
pub struct SimState<T> {
    /// Next iteration to execute.
    pub iteration: usize,
    pub prices: PriceVector<T>,
    pub rates: Vec<T>,
    pub demand: Vec<DemandState<T>>,
    pub admitted: Vec<bool>,
    /// Per-link floor values and whether each is enforced.
    pub floors: Vec<T>,
    pub floors_active: Vec<bool>,
    /// Index of the next scheduled event.
    pub event_cursor: usize,
}

pub struct Simulation<'a, T> {
    scenario: &'a Scenario<T>,
    routes: Vec<Vec<usize>>,
    capacities: Vec<T>,
    schedule: StepSchedule<T>,
    state: SimState<T>,
    trace: Trace<T>,
    trigger_link: Option<usize>,
    trigger_fired: bool,
}

impl<'a, T: Scalar> Simulation<'a, T> {
    pub fn new(scenario: &'a Scenario<T>) -> Result<Self> {
        scenario.validate()?;
        let routes = scenario
            .users
            .iter()
            .map(|u| scenario.route_indices(&u.route))
            .collect::<Result<Vec<_>>>()?;
        let trigger_link = match &scenario.admission.trigger {
            Some(t) => Some(
                scenario
                    .link_index(&t.link)
                    .ok_or_else(|| Error::UnknownLink(t.link.0.clone()))?,
            ),
            None => None,
        };
        let n_links = scenario.links.len();
        let state = SimState {
            iteration: 0,
            prices: PriceVector::uniform(n_links, scenario.solver.initial_price),
            rates: vec![T::zero(); scenario.users.len()],
            demand: scenario.users.iter().map(DemandState::new).collect(),
            admitted: vec![true; scenario.users.len()],
            floors: scenario.links.iter().map(|l| l.price_floor).collect(),
            floors_active: vec![false; n_links],
            event_cursor: 0,
        };
        Ok(Self {
            scenario,
            routes,
            capacities: scenario.capacities(),
            schedule: StepSchedule {
                initial: scenario.solver.step_size,
                rule: scenario.solver.step_rule,
            },
            state,
            trace: Trace::new(
                scenario.links.iter().map(|l| l.id.clone()).collect(),
                scenario.users.iter().map(|u| u.id).collect(),
            ),
            trigger_link,
            trigger_fired: false,
        })
    }

    pub fn state(&self) -> &SimState<T> {
        &self.state
    }

    pub fn trace(&self) -> &Trace<T> {
        &self.trace
    }

    pub fn into_trace(self) -> Trace<T> {
        self.trace
    }

    /// Runs the remaining iterations up to `max_iterations`.
    pub fn run_to_end(mut self) -> Result<Trace<T>> {
        while self.state.iteration < self.scenario.solver.max_iterations {
            self.step()?;
        }
        Ok(self.trace)
    }

    fn loads(&self) -> Vec<T> {
        let mut loads = vec![T::zero(); self.capacities.len()];
        for (s, route) in self.routes.iter().enumerate() {
            if self.state.admitted[s] {
                for &l in route {
                    loads[l] = loads[l] + self.state.rates[s];
                }
            }
        }
        loads
    }

    fn non_finite(&self, entity: String, quantity: &'static str) -> Error {
        Error::NonFinite {
            iteration: self.state.iteration,
            entity,
            quantity,
        }
    }

    /// Executes one iteration.
    pub fn step(&mut self) -> Result<()> {
        let t = self.state.iteration;
        let users = &self.scenario.users;

        let path_prices = self
            .routes
            .iter()
            .map(|r| path_price(r, &self.state.prices))
            .collect::<Result<Vec<_>>>()?;

        for (s, user) in users.iter().enumerate() {
            if !self.state.admitted[s] {
                self.state.rates[s] = T::zero();
                continue;
            }
            let p = path_prices[s];
            let x = user_rate(user, p)?;
            let d = &mut self.state.demand[s];
            d.observe(user, x);
            d.price_increment = offered_increment(user, d, p);
            let x = next_demand(user, d, p)?;
            if !x.is_finite() {
                return Err(self.non_finite(format!("user {}", user.id), "rate"));
            }
            self.state.rates[s] = x;
        }

        let loads = self.loads();
        let sigma = step_size(t, &self.schedule);
        for (l, &load) in loads.iter().enumerate() {
            let floor = self.state.floors_active[l].then_some(self.state.floors[l]);
            let p = update_link_price(self.state.prices.0[l], sigma, self.capacities[l], load, floor);
            if !p.is_finite() {
                return Err(self.non_finite(format!("link {}", self.scenario.links[l].id), "price"));
            }
            self.state.prices.0[l] = p;
        }

        let events = &self.scenario.events;
        while let Some(e) = events.get(self.state.event_cursor) {
            if e.iteration > t {
                break;
            }
            self.state.event_cursor += 1;
            if e.iteration == t {
                self.apply_event(&e.kind)?;
            }
        }
        self.check_trigger()?;

        let loads = self.loads();
        let step = Step {
            iteration: t,
            links: self
                .state
                .prices
                .as_slice()
                .iter()
                .zip(&loads)
                .map(|(&price, &load)| LinkSample { price, load })
                .collect(),
            users: users
                .iter()
                .enumerate()
                .map(|(s, u)| {
                    let rate = if self.state.admitted[s] {
                        self.state.rates[s]
                    } else {
                        T::zero()
                    };
                    UserSample {
                        path_price: path_prices[s],
                        rate,
                        layer: attained_layer(rate, &u.layers),
                        admitted: self.state.admitted[s],
                    }
                })
                .collect(),
        };
        self.trace.steps.push(step);
        self.state.iteration += 1;
        Ok(())
    }

    fn check_trigger(&mut self) -> Result<()> {
        let (Some(l), Some(cfg)) = (self.trigger_link, &self.scenario.admission.trigger) else {
            return Ok(());
        };
        let t = self.state.iteration;
        if self.trigger_fired || t < cfg.not_before || self.trace.steps.len() + 1 < cfg.window {
            return Ok(());
        }
        let mut series: Vec<T> = self.trace.steps[self.trace.steps.len() + 1 - cfg.window..]
            .iter()
            .map(|s| s.links[l].price)
            .collect();
        series.push(self.state.prices.0[l]);
        if detect_oscillation_relative(&series, cfg.window, cfg.relative_threshold)?.flag {
            self.trigger_fired = true;
            info!("oscillation on link {} at iteration {t}, invoking admission", cfg.link);
            self.admit("oscillation trigger")?;
        }
        Ok(())
    }

    /// Applies one event at the current iteration.
    pub fn apply_event(&mut self, event: &EventKind<T>) -> Result<()> {
        let t = self.state.iteration;
        match event {
            EventKind::DemandChange { user, target_layer } => {
                let s = self.scenario.user_index(*user).ok_or(Error::UnknownUser(user.0))?;
                let layers = self.scenario.users[s].layers.len();
                if *target_layer == 0 || *target_layer > layers {
                    return Err(Error::LayerOutOfRange {
                        target: *target_layer,
                        layers,
                    });
                }
                self.state.demand[s].pin(*target_layer);
                debug!("iteration {t}: user {user} targets layer {target_layer}");
                self.trace.events.push(EventMarker {
                    iteration: t,
                    subject: user.to_string(),
                    description: event.to_string(),
                });
            }
            EventKind::SetPriceFloor { link, value } => {
                let l = self
                    .scenario
                    .link_index(link)
                    .ok_or_else(|| Error::UnknownLink(link.0.clone()))?;
                if !(*value >= T::zero()) {
                    return Err(Error::invalid("set_price_floor.value", "must be non-negative"));
                }
                self.state.floors[l] = *value;
                self.state.floors_active[l] = true;
                self.state.prices.0[l] = self.state.prices.0[l].max(*value);
                self.trace.events.push(EventMarker {
                    iteration: t,
                    subject: link.to_string(),
                    description: event.to_string(),
                });
            }
            EventKind::InvokeAdmission => self.admit("scheduled")?,
        }
        Ok(())
    }

    /// Floors on, bids at the floored prices, greedy selection, dismissal.
    fn admit(&mut self, cause: &str) -> Result<()> {
        let t = self.state.iteration;
        self.state.floors_active.iter_mut().for_each(|a| *a = true);
        self.state.prices = price_floor_apply(&self.state.prices, &self.state.floors)?;

        let weights = &self.scenario.admission.weights;
        let mut bids = Vec::new();
        for (s, user) in self.scenario.users.iter().enumerate() {
            if !self.state.admitted[s] {
                continue;
            }
            // a free path is scored as if it cost the smallest representable step
            let p = path_price(&self.routes[s], &self.state.prices)?.max(T::epsilon());
            let d = &self.state.demand[s];
            let lowest = if d.active && d.pinned { d.target_layer } else { 1 };
            let bid = user_bid_from(user, p, offered_increment(user, d, p), lowest)?;
            let score = admission_score(&bid, p, user, weights)?;
            if !score.is_finite() {
                return Err(self.non_finite(format!("user {}", user.id), "admission score"));
            }
            bids.push(ScoredBid {
                bid,
                score,
                route: self.routes[s].clone(),
            });
        }
        let result = greedy_select(&bids, &self.capacities)?;
        for (s, user) in self.scenario.users.iter().enumerate() {
            if result.rejected.contains(&user.id) {
                self.state.admitted[s] = false;
                self.state.rates[s] = T::zero();
            }
        }
        let list = |set: &std::collections::BTreeSet<crate::model::UserId>| {
            set.iter().map(|u| u.to_string()).collect::<Vec<_>>().join(" ")
        };
        let description = format!(
            "invoke_admission ({cause}) admitted=[{}] dismissed=[{}]",
            list(&result.admitted),
            list(&result.rejected)
        );
        info!("iteration {t}: {description}");
        self.trace.events.push(EventMarker {
            iteration: t,
            subject: String::new(),
            description,
        });
        self.trace.admissions.push(AdmissionRecord {
            iteration: t,
            bids,
            result,
        });
        Ok(())
    }
}

/// Runs a scenario from scratch for `solver.max_iterations` iterations.
pub fn run<T: Scalar>(scenario: &Scenario<T>) -> Result<Trace<T>> {
    Simulation::new(scenario)?.run_to_end()
}
