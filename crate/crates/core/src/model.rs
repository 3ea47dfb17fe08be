//! Domain types for topologies, users and scenarios, plus scenario loading.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::admission::AdmissionWeights;
use crate::error::{Error, Result};
use crate::pricing::StepRule;
use crate::scalar::Scalar;
use crate::utility::{self, UtilityParams};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LinkId(pub String);

impl fmt::Display for LinkId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for LinkId {
    fn from(s: &str) -> Self {
        LinkId(s.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct UserId(pub u32);

impl fmt::Display for UserId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Link<T> {
    pub id: LinkId,
    pub capacity: T,
    #[serde(default)]
    pub price_floor: T,
}

/// Ordered list of the links a flow traverses.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Route {
    links: Vec<LinkId>,
}

impl Route {
    /// Builds a route from explicit link ids; rejects empty and repeating routes.
    pub fn new(links: Vec<LinkId>) -> Result<Self> {
        if links.is_empty() {
            return Err(Error::invalid("route", "route has no links"));
        }
        let mut seen = BTreeSet::new();
        for l in &links {
            if !seen.insert(l) {
                return Err(Error::invalid("route", format!("link `{l}` repeated")));
            }
        }
        Ok(Self { links })
    }

    /// Expands a node string such as `"ABCD"` into the links between
    /// consecutive nodes: `AB`, `BC`, `CD`.
    pub fn from_nodes(nodes: &str) -> Result<Self> {
        let nodes: Vec<char> = nodes.chars().collect();
        let links = nodes.windows(2).map(|w| LinkId(w.iter().collect())).collect();
        Self::new(links)
    }

    pub fn links(&self) -> &[LinkId] {
        &self.links
    }

    pub fn contains(&self, link: &LinkId) -> bool {
        self.links.contains(link)
    }
}

/// Bandwidth thresholds of the encoding layers, strictly increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerSchedule<T> {
    rates: Vec<T>,
}

impl<T: Scalar> LayerSchedule<T> {
    pub fn new(rates: Vec<T>) -> Result<Self> {
        if rates.is_empty() {
            return Err(Error::invalid("layers", "at least one layer is required"));
        }
        if let Some(r) = rates.iter().find(|r| !(**r > T::zero() && r.is_finite())) {
            return Err(Error::invalid("layers", format!("rates must be positive, got {r}")));
        }
        if rates.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::NonIncreasingLayers { field: "layers".into() });
        }
        Ok(Self { rates })
    }

    pub fn rates(&self) -> &[T] {
        &self.rates
    }

    pub fn len(&self) -> usize {
        self.rates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rates.is_empty()
    }

    /// Threshold of layer `layer` (1-based).
    pub fn rate(&self, layer: usize) -> Option<T> {
        layer.checked_sub(1).and_then(|i| self.rates.get(i)).copied()
    }

    /// 1-based index of the layer whose threshold equals `rate`.
    pub fn layer_of(&self, rate: T) -> Option<usize> {
        self.rates.iter().position(|r| *r == rate).map(|i| i + 1)
    }

    pub fn top(&self) -> T {
        self.rates[self.rates.len() - 1]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UserMode {
    /// Accepts whatever rate the network's prices induce.
    Passive,
    /// Keeps asking for higher layers when its demand policy fires.
    Active,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DemandPolicy<T> {
    /// Upgrade when the desire-for-quality condition holds.
    BFunction,
    /// Upgrade while the path price is strictly below `threshold`.
    PriceThreshold { threshold: T },
}

#[derive(Debug, Clone, PartialEq)]
pub struct UserProfile<T> {
    pub id: UserId,
    pub route: Route,
    pub budget: T,
    pub beta: T,
    pub layers: LayerSchedule<T>,
    pub x_min: T,
    pub mode: UserMode,
    pub upgrade_step: usize,
    pub utility: UtilityParams<T>,
    pub demand_policy: DemandPolicy<T>,
    /// Fixed extra price the user offers on top of the network price.
    pub price_increment: Option<T>,
}

impl<T: Scalar> UserProfile<T> {
    /// A passive single-route user with default utility parameters.
    pub fn passive(id: u32, route: Route, budget: T, layers: LayerSchedule<T>) -> Self {
        let n = layers.len();
        Self {
            id: UserId(id),
            route,
            budget,
            beta: T::one(),
            x_min: layers.rates()[0],
            layers,
            mode: UserMode::Passive,
            upgrade_step: 1,
            utility: UtilityParams::defaults(n),
            demand_policy: DemandPolicy::BFunction,
            price_increment: None,
        }
    }

    /// Candidate rates for the best response: `x_min` plus every threshold.
    pub fn candidate_rates(&self) -> Vec<T> {
        let mut c = Vec::with_capacity(self.layers.len() + 1);
        if self.x_min < self.layers.rates()[0] {
            c.push(self.x_min);
        }
        c.extend_from_slice(self.layers.rates());
        c
    }

    fn validate(&self) -> Result<()> {
        let f = |name: &str| format!("users[{}].{name}", self.id);
        if !(self.budget > T::zero() && self.budget.is_finite()) {
            return Err(Error::invalid(f("budget"), "must be positive"));
        }
        if !(self.beta > T::zero() && self.beta.is_finite()) {
            return Err(Error::invalid(f("beta"), "must be positive"));
        }
        if !(self.x_min > T::zero()) || self.x_min > self.layers.rates()[0] {
            return Err(Error::invalid(
                f("x_min"),
                "must be positive and at most the first layer rate",
            ));
        }
        if self.upgrade_step < 1 {
            return Err(Error::invalid(f("upgrade_step"), "must be at least 1"));
        }
        self.utility.validate(self.layers.len()).map_err(|e| match e {
            Error::Invalid { field, message } => Error::invalid(f(&field), message),
            other => other,
        })?;
        if !utility::has_diminishing_returns(&self.layers, &self.utility) {
            return Err(Error::invalid(
                f("layers"),
                "utility step heights must strictly decrease",
            ));
        }
        if let DemandPolicy::PriceThreshold { threshold } = self.demand_policy {
            if !(threshold > T::zero()) {
                return Err(Error::invalid(f("demand_policy.threshold"), "must be positive"));
            }
        }
        if let Some(inc) = self.price_increment {
            if !(inc >= T::zero()) {
                return Err(Error::invalid(f("price_increment"), "must be non-negative"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum EventKind<T> {
    /// Arms the user's active demand policy with a fixed target layer (1-based).
    DemandChange {
        user: UserId,
        target_layer: usize,
    },
    InvokeAdmission,
    SetPriceFloor {
        link: LinkId,
        value: T,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Event<T> {
    pub iteration: usize,
    pub kind: EventKind<T>,
}

impl<T: Scalar> fmt::Display for EventKind<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EventKind::DemandChange { user, target_layer } => {
                write!(f, "demand_change user={user} target_layer={target_layer}")
            }
            EventKind::InvokeAdmission => f.write_str("invoke_admission"),
            EventKind::SetPriceFloor { link, value } => write!(f, "set_price_floor link={link} value={value}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct SolverConfig<T> {
    /// Initial step size of the price update.
    pub step_size: T,
    #[serde(default)]
    pub step_rule: StepRule,
    pub max_iterations: usize,
    /// Convergence tolerance as a fraction of the series mean.
    #[serde(default = "default_tolerance")]
    pub convergence_tolerance: T,
    #[serde(default = "default_window")]
    pub convergence_window: usize,
    #[serde(default)]
    pub initial_price: T,
}

fn default_tolerance<T: Scalar>() -> T {
    T::of(0.01)
}

fn default_window() -> usize {
    100
}

impl<T: Scalar> Default for SolverConfig<T> {
    fn default() -> Self {
        Self {
            step_size: T::one(),
            step_rule: StepRule::Harmonic,
            max_iterations: 1000,
            convergence_tolerance: default_tolerance(),
            convergence_window: default_window(),
            initial_price: T::zero(),
        }
    }
}

/// Invokes admission once when a link's price starts oscillating.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct OscillationTrigger<T> {
    pub link: LinkId,
    pub window: usize,
    /// Amplitude threshold as a fraction of the window mean.
    pub relative_threshold: T,
    #[serde(default)]
    pub not_before: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct AdmissionConfig<T> {
    #[serde(flatten)]
    pub weights: AdmissionWeights<T>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trigger: Option<OscillationTrigger<T>>,
}

impl<T: Scalar> Default for AdmissionConfig<T> {
    fn default() -> Self {
        Self {
            weights: AdmissionWeights::default(),
            trigger: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario<T = f64> {
    pub links: Vec<Link<T>>,
    pub users: Vec<UserProfile<T>>,
    pub events: Vec<Event<T>>,
    pub solver: SolverConfig<T>,
    pub admission: AdmissionConfig<T>,
}

impl<T: Scalar> Scenario<T> {
    /// Parses and validates a JSON scenario document.
    pub fn from_json(document: &str) -> Result<Self> {
        let doc: ScenarioDoc<T> = serde_json::from_str(document).map_err(|e| Error::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        doc.into_scenario()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&ScenarioDoc::from_scenario(self)).expect("scenario serializes")
    }

    pub fn link_index(&self, id: &LinkId) -> Option<usize> {
        self.links.iter().position(|l| &l.id == id)
    }

    pub fn user_index(&self, id: UserId) -> Option<usize> {
        self.users.iter().position(|u| u.id == id)
    }

    pub fn link(&self, id: &LinkId) -> Result<&Link<T>> {
        self.link_index(id)
            .map(|i| &self.links[i])
            .ok_or_else(|| Error::UnknownLink(id.0.clone()))
    }

    /// Link indices along a route, in route order.
    pub fn route_indices(&self, route: &Route) -> Result<Vec<usize>> {
        route
            .links()
            .iter()
            .map(|id| self.link_index(id).ok_or_else(|| Error::UnknownLink(id.0.clone())))
            .collect()
    }

    pub fn capacities(&self) -> Vec<T> {
        self.links.iter().map(|l| l.capacity).collect()
    }

    /// Checks every invariant; `from_json` already does this.
    pub fn validate(&self) -> Result<()> {
        let mut ids = BTreeSet::new();
        for (i, l) in self.links.iter().enumerate() {
            if !ids.insert(&l.id) {
                return Err(Error::invalid(
                    format!("links[{i}].id"),
                    format!("duplicate link `{}`", l.id),
                ));
            }
            if !(l.capacity > T::zero() && l.capacity.is_finite()) {
                return Err(Error::invalid(format!("links[{i}].capacity"), "must be positive"));
            }
            if !(l.price_floor >= T::zero() && l.price_floor.is_finite()) {
                return Err(Error::invalid(
                    format!("links[{i}].price_floor"),
                    "must be non-negative",
                ));
            }
        }
        let mut users = BTreeSet::new();
        for u in &self.users {
            if !users.insert(u.id) {
                return Err(Error::invalid("users", format!("duplicate user {}", u.id)));
            }
            self.route_indices(&u.route)?;
            u.validate()?;
        }
        if self.events.windows(2).any(|w| w[0].iteration > w[1].iteration) {
            return Err(Error::invalid("events", "events must be sorted by iteration"));
        }
        for (i, e) in self.events.iter().enumerate() {
            match &e.kind {
                EventKind::DemandChange { user, target_layer } => {
                    let u = self.user_index(*user).ok_or(Error::UnknownUser(user.0))?;
                    let n = self.users[u].layers.len();
                    if *target_layer < 1 || *target_layer > n {
                        return Err(Error::LayerOutOfRange {
                            target: *target_layer,
                            layers: n,
                        });
                    }
                }
                EventKind::SetPriceFloor { link, value } => {
                    self.link(link)?;
                    if !(*value >= T::zero()) {
                        return Err(Error::invalid(format!("events[{i}].value"), "must be non-negative"));
                    }
                }
                EventKind::InvokeAdmission => {}
            }
        }
        let s = &self.solver;
        if !(s.step_size > T::zero() && s.step_size.is_finite()) {
            return Err(Error::invalid("solver.step_size", "must be positive"));
        }
        if !(s.convergence_tolerance > T::zero()) {
            return Err(Error::invalid("solver.convergence_tolerance", "must be positive"));
        }
        if s.convergence_window < 2 {
            return Err(Error::invalid("solver.convergence_window", "must be at least 2"));
        }
        if !(s.initial_price >= T::zero()) {
            return Err(Error::invalid("solver.initial_price", "must be non-negative"));
        }
        self.admission.weights.validate()?;
        if let Some(t) = &self.admission.trigger {
            self.link(&t.link)?;
            if t.window < 2 {
                return Err(Error::invalid("admission.trigger.window", "must be at least 2"));
            }
        }
        Ok(())
    }
}

/// Links in route order for `user`.
pub fn route_links<'a, T: Scalar>(user: &UserProfile<T>, scenario: &'a Scenario<T>) -> Result<Vec<&'a Link<T>>> {
    user.route.links().iter().map(|id| scenario.link(id)).collect()
}

/// Ids of the users whose route crosses `link`.
pub fn users_on_link<T: Scalar>(link: &LinkId, scenario: &Scenario<T>) -> Result<BTreeSet<UserId>> {
    scenario.link(link)?;
    Ok(scenario
        .users
        .iter()
        .filter(|u| u.route.contains(link))
        .map(|u| u.id)
        .collect())
}

/// Parses a scenario document using `f64` scalars.
pub fn load_scenario(document: &str) -> Result<Scenario<f64>> {
    Scenario::from_json(document)
}

// ---------------------------------------------------------------------------
// Wire format

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[serde(bound = "T: Scalar")]
struct ScenarioDoc<T> {
    links: Vec<Link<T>>,
    #[serde(default)]
    users: Vec<UserDoc<T>>,
    #[serde(default)]
    events: Vec<EventDoc<T>>,
    #[serde(default)]
    solver: SolverConfig<T>,
    #[serde(default)]
    admission: AdmissionConfig<T>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum RouteDoc {
    Nodes(String),
    Links(Vec<LinkId>),
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[serde(bound = "T: Scalar")]
struct UserDoc<T> {
    id: UserId,
    route: RouteDoc,
    budget: T,
    #[serde(default = "one")]
    beta: T,
    layers: Vec<T>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    x_min: Option<T>,
    #[serde(default = "passive")]
    mode: UserMode,
    #[serde(default = "one_usize")]
    upgrade_step: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sigmoid_steepness: Option<Vec<T>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    decay_coeff: Option<Vec<T>>,
    #[serde(default = "b_function")]
    demand_policy: DemandPolicy<T>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    price_increment: Option<T>,
}

fn one<T: Scalar>() -> T {
    T::one()
}
fn one_usize() -> usize {
    1
}
fn passive() -> UserMode {
    UserMode::Passive
}
fn b_function<T>() -> DemandPolicy<T> {
    DemandPolicy::BFunction
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
#[serde(bound = "T: Scalar")]
enum EventKindDoc<T> {
    DemandChange {
        user: UserId,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        target_layer: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        target_rate: Option<T>,
    },
    InvokeAdmission,
    SetPriceFloor {
        link: LinkId,
        value: T,
    },
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
struct EventDoc<T> {
    iteration: usize,
    #[serde(flatten)]
    kind: EventKindDoc<T>,
}

impl<T: Scalar> ScenarioDoc<T> {
    fn into_scenario(self) -> Result<Scenario<T>> {
        let mut users = Vec::with_capacity(self.users.len());
        for (i, u) in self.users.into_iter().enumerate() {
            let field = |name: &str| format!("users[{i}].{name}");
            let route = match u.route {
                RouteDoc::Nodes(s) => Route::from_nodes(&s),
                RouteDoc::Links(l) => Route::new(l),
            }
            .map_err(|e| relabel(e, &field("route")))?;
            let layers = LayerSchedule::new(u.layers).map_err(|e| match e {
                Error::NonIncreasingLayers { .. } => Error::NonIncreasingLayers { field: field("layers") },
                other => relabel(other, &field("layers")),
            })?;
            let n = layers.len();
            let defaults = UtilityParams::<T>::defaults(n);
            users.push(UserProfile {
                id: u.id,
                route,
                budget: u.budget,
                beta: u.beta,
                x_min: u.x_min.unwrap_or(layers.rates()[0]),
                layers,
                mode: u.mode,
                upgrade_step: u.upgrade_step,
                utility: UtilityParams {
                    sigmoid_steepness: u.sigmoid_steepness.unwrap_or(defaults.sigmoid_steepness),
                    decay_coeff: u.decay_coeff.unwrap_or(defaults.decay_coeff),
                },
                demand_policy: u.demand_policy,
                price_increment: u.price_increment,
            });
        }
        let by_id: BTreeMap<UserId, &UserProfile<T>> = users.iter().map(|u| (u.id, u)).collect();
        let mut events = Vec::with_capacity(self.events.len());
        for (i, e) in self.events.into_iter().enumerate() {
            let kind = match e.kind {
                EventKindDoc::DemandChange {
                    user,
                    target_layer,
                    target_rate,
                } => {
                    let profile = by_id.get(&user).ok_or(Error::UnknownUser(user.0))?;
                    let target_layer = match (target_layer, target_rate) {
                        (Some(l), None) => l,
                        (None, Some(r)) => profile.layers.layer_of(r).ok_or_else(|| {
                            Error::invalid(
                                format!("events[{i}].target_rate"),
                                format!("{r} is not a layer rate of user {user}"),
                            )
                        })?,
                        _ => {
                            return Err(Error::invalid(
                                format!("events[{i}]"),
                                "exactly one of target_layer and target_rate is required",
                            ))
                        }
                    };
                    EventKind::DemandChange { user, target_layer }
                }
                EventKindDoc::InvokeAdmission => EventKind::InvokeAdmission,
                EventKindDoc::SetPriceFloor { link, value } => EventKind::SetPriceFloor { link, value },
            };
            events.push(Event {
                iteration: e.iteration,
                kind,
            });
        }
        events.sort_by_key(|e| e.iteration);
        let scenario = Scenario {
            links: self.links,
            users,
            events,
            solver: self.solver,
            admission: self.admission,
        };
        scenario.validate()?;
        Ok(scenario)
    }

    fn from_scenario(s: &Scenario<T>) -> Self {
        ScenarioDoc {
            links: s.links.clone(),
            users: s
                .users
                .iter()
                .map(|u| UserDoc {
                    id: u.id,
                    route: RouteDoc::Links(u.route.links().to_vec()),
                    budget: u.budget,
                    beta: u.beta,
                    layers: u.layers.rates().to_vec(),
                    x_min: Some(u.x_min),
                    mode: u.mode,
                    upgrade_step: u.upgrade_step,
                    sigmoid_steepness: Some(u.utility.sigmoid_steepness.clone()),
                    decay_coeff: Some(u.utility.decay_coeff.clone()),
                    demand_policy: u.demand_policy,
                    price_increment: u.price_increment,
                })
                .collect(),
            events: s
                .events
                .iter()
                .map(|e| EventDoc {
                    iteration: e.iteration,
                    kind: match &e.kind {
                        EventKind::DemandChange { user, target_layer } => EventKindDoc::DemandChange {
                            user: *user,
                            target_layer: Some(*target_layer),
                            target_rate: None,
                        },
                        EventKind::InvokeAdmission => EventKindDoc::InvokeAdmission,
                        EventKind::SetPriceFloor { link, value } => EventKindDoc::SetPriceFloor {
                            link: link.clone(),
                            value: *value,
                        },
                    },
                })
                .collect(),
            solver: s.solver.clone(),
            admission: s.admission.clone(),
        }
    }
}

fn relabel(e: Error, field: &str) -> Error {
    match e {
        Error::Invalid { message, .. } => Error::invalid(field, message),
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "links": [{"id": "AB", "capacity": 10, "price_floor": 0.5}, {"id": "BC", "capacity": 4}],
        "users": [
            {"id": 0, "route": "ABC", "budget": 40, "layers": [2, 4]},
            {"id": 1, "route": ["BC"], "budget": 20, "layers": [1]}
        ],
        "solver": {"step_size": 1, "max_iterations": 10}
    }"#;

    #[test]
    fn loads_minimal_document() {
        let s = load_scenario(MINIMAL).unwrap();
        assert_eq!(s.users.len(), 2);
        assert_eq!(s.users[0].route.links(), &[LinkId::from("AB"), LinkId::from("BC")]);
        assert_eq!(s.users[0].x_min, 2.0);
        assert_eq!(s.users[0].utility, UtilityParams::defaults(2));
        assert_eq!(s.links[1].price_floor, 0.0);
        assert_eq!(s.solver.convergence_window, 100);
    }

    #[test]
    fn zero_users_is_valid() {
        let s = load_scenario(r#"{"links": [{"id": "AB", "capacity": 1}], "users": []}"#).unwrap();
        assert!(s.users.is_empty());
    }

    #[test]
    fn rejects_non_increasing_layers() {
        let doc = MINIMAL.replace("[2, 4]", "[5, 2]");
        let err = load_scenario(&doc).unwrap_err();
        assert!(
            matches!(err, Error::NonIncreasingLayers { ref field } if field == "users[0].layers"),
            "{err}"
        );
        assert!(err.to_string().contains("non-increasing layer schedule"));
    }

    #[test]
    fn rejects_unknown_link() {
        let doc = MINIMAL.replace("\"ABC\"", "\"ABX\"");
        assert!(matches!(load_scenario(&doc), Err(Error::UnknownLink(l)) if l == "BX"));
    }

    #[test]
    fn parse_errors_carry_position() {
        let err = load_scenario("{\n  \"links\": [\n    {\"id\": \"AB\", \"capacity\": }\n  ]\n}").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other}"),
        }
        let err = load_scenario(r#"{"links": [], "users": [{"id": 0, "route": "AB", "budget": 1}]}"#).unwrap_err();
        assert!(err.to_string().contains("layers"), "{err}");
    }

    #[test]
    fn route_expansion() {
        let r = Route::from_nodes("ABCDE").unwrap();
        let ids: Vec<&str> = r.links().iter().map(|l| l.0.as_str()).collect();
        assert_eq!(ids, ["AB", "BC", "CD", "DE"]);
        assert_eq!(Route::from_nodes("AB").unwrap().links().len(), 1);
        assert!(Route::from_nodes("A").is_err());
        assert!(Route::from_nodes("").is_err());
        assert!(Route::new(vec!["AB".into(), "AB".into()]).is_err());
    }

    #[test]
    fn route_expansion_length() {
        for n in 2..12 {
            let nodes: String = (0..n).map(|i| char::from(b'A' + i as u8)).collect();
            assert_eq!(Route::from_nodes(&nodes).unwrap().links().len(), n - 1);
        }
    }

    #[test]
    fn other_validation_errors() {
        for (from, to) in [
            ("\"budget\": 40", "\"budget\": 0"),
            ("\"layers\": [1]", "\"layers\": [1], \"x_min\": 2"),
            ("\"layers\": [1]", "\"layers\": [1], \"upgrade_step\": 0"),
            ("\"layers\": [1]", "\"layers\": [1], \"beta\": -1"),
            ("\"capacity\": 4", "\"capacity\": 0"),
            ("\"price_floor\": 0.5", "\"price_floor\": -0.5"),
            ("\"layers\": [2, 4]", "\"layers\": [2, 4], \"decay_coeff\": [0.2]"),
            // steps rise along the sigmoid's steep part
            ("\"layers\": [2, 4]", "\"layers\": [0.1, 0.2]"),
            ("\"ABC\"", "\"A\""),
        ] {
            assert!(MINIMAL.contains(from), "{from}");
            let doc = MINIMAL.replacen(from, to, 1);
            assert!(load_scenario(&doc).is_err(), "{to} should be rejected");
        }
    }

    #[test]
    fn events_resolve_and_sort() {
        let doc = MINIMAL.replace(
            "\"solver\"",
            r#""events": [
                {"iteration": 9, "kind": "invoke_admission"},
                {"iteration": 3, "kind": "demand_change", "user": 0, "target_rate": 4},
                {"iteration": 5, "kind": "set_price_floor", "link": "BC", "value": 1.5}
            ], "solver""#,
        );
        let s = load_scenario(&doc).unwrap();
        let its: Vec<usize> = s.events.iter().map(|e| e.iteration).collect();
        assert_eq!(its, [3, 5, 9]);
        assert_eq!(
            s.events[0].kind,
            EventKind::DemandChange {
                user: UserId(0),
                target_layer: 2
            }
        );
        let bad = doc.replace("\"target_rate\": 4", "\"target_rate\": 3");
        assert!(load_scenario(&bad).is_err());
        let bad = doc.replace("\"user\": 0", "\"user\": 7");
        assert!(matches!(load_scenario(&bad), Err(Error::UnknownUser(7))));
        let bad = doc.replace("\"link\": \"BC\"", "\"link\": \"ZZ\"");
        assert!(matches!(load_scenario(&bad), Err(Error::UnknownLink(_))));
    }

    #[test]
    fn users_on_link_enumerates_routes() {
        let s = load_scenario(MINIMAL).unwrap();
        assert_eq!(users_on_link(&"AB".into(), &s).unwrap(), BTreeSet::from([UserId(0)]));
        assert_eq!(
            users_on_link(&"BC".into(), &s).unwrap(),
            BTreeSet::from([UserId(0), UserId(1)])
        );
        assert!(users_on_link(&"XY".into(), &s).is_err());
        let links = route_links(&s.users[0], &s).unwrap();
        assert_eq!(links.iter().map(|l| l.capacity).collect::<Vec<_>>(), [10.0, 4.0]);
    }

    #[test]
    fn round_trips() {
        let s = load_scenario(MINIMAL).unwrap();
        let back = load_scenario(&s.to_json()).unwrap();
        assert_eq!(s, back);
    }
}
