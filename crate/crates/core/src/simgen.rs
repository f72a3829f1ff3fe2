//! Deterministic synthetic fare marketplace.
//!
//! A [`World`] fixes airports, airlines, routes, users and all pricing
//! parameters; [`World::generate_day`] then produces one day of searches with a
//! complete set of leg and round-trip quotes for every airline. Each day draws
//! from its own RNG stream keyed by `(seed, day)`, so days can be generated in
//! any order or in parallel.
//!
//! Leg prices follow
//!
//! ```text
//! base(route) · airline_factor(airline, route, day) · asym(airline, dir)
//!     · (1 + c · κ(airline, dir) · exp(−horizon / τ)) · exp(σ · z)
//! ```
//!
//! where `κ` is the airline's per-direction surge sensitivity and `z` a
//! standard normal draw per quote. Budget round trips are the exact sum of the
//! two legs; traditional round trips are the discounted sum of the symmetric
//! (asymmetry-free) legs sharing the same noise draws.

use rand::distr::weighted::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Geometric, LogNormal, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{
    Airline, AirlineId, Airport, AirportId, Catalog, DomainError, LegDirection, LegQuote,
    PricingStrategy, QueryId, RoundTripQuote, SearchQuery, UserId,
};
use crate::rng::{mix_seed, stream};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("day {day} outside the simulated range 0..{n_days}")]
    InvalidDay { day: u32, n_days: u32 },
    #[error("unknown route {0:?} -> {1:?}")]
    UnknownRoute(AirportId, AirportId),
    #[error("unknown airline {0}")]
    UnknownAirline(AirlineId),
    #[error(transparent)]
    Domain(#[from] DomainError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub seed: u64,
    pub n_airports: usize,
    pub n_regions: usize,
    pub n_airlines: usize,
    pub budget_airline_fraction: f64,
    pub combo_prone_airline_fraction: f64,
    pub n_users: usize,
    pub queries_per_day: usize,
    pub n_days: u32,
    pub route_zipf_exponent: f64,
    pub horizon_geometric_p: f64,
    pub price_noise_sigma: f64,
    pub horizon_surge_scale: f64,
    pub horizon_surge_decay: f64,
    pub discount_range: (f64, f64),
    pub asymmetry_range: (f64, f64),
    /// Range of per-(airline, direction) multipliers on the surge term.
    pub surge_sensitivity_range: (f64, f64),
    /// Number of hub airports (within one region) where a combo-prone airline sells cheap one-way legs.
    pub hubs_per_airline: usize,
    /// Share of a user's searches that originate in their home region.
    pub home_region_bias: f64,
    pub trip_length_geometric_p: f64,
    pub max_horizon: u32,
    pub max_trip_length: u32,
    /// Log-scale spread of overall airline price levels.
    pub airline_level_sigma: f64,
    /// Log-scale spread of per-(airline, region) price effects.
    pub region_effect_sigma: f64,
    /// Log-scale spread of per-(airline, airport) price effects.
    pub station_effect_sigma: f64,
    /// Stationary spread of the drifting per-(airline, airport) effects.
    pub drift_sigma: f64,
    /// Day-over-day autocorrelation of the drifting effects.
    pub drift_persistence: f64,
    /// Log-scale spread of user activity levels.
    pub user_activity_sigma: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            n_airports: 40,
            n_regions: 5,
            n_airlines: 20,
            budget_airline_fraction: 0.3,
            combo_prone_airline_fraction: 0.3,
            n_users: 2000,
            queries_per_day: 2000,
            n_days: 21,
            route_zipf_exponent: 1.0,
            horizon_geometric_p: 0.08,
            price_noise_sigma: 0.05,
            horizon_surge_scale: 1.5,
            horizon_surge_decay: 10.0,
            discount_range: (0.70, 0.95),
            asymmetry_range: (0.55, 0.85),
            surge_sensitivity_range: (0.7, 1.3),
            hubs_per_airline: 2,
            home_region_bias: 0.8,
            trip_length_geometric_p: 0.25,
            max_horizon: 120,
            max_trip_length: 28,
            airline_level_sigma: 0.03,
            region_effect_sigma: 0.03,
            station_effect_sigma: 0.02,
            drift_sigma: 0.05,
            drift_persistence: 0.85,
            user_activity_sigma: 0.5,
        }
    }
}

impl SimConfig {
    /// Same world with time-invariant prices: no horizon surge and no drift.
    pub fn without_drift(mut self) -> Self {
        self.horizon_surge_scale = 0.0;
        self.drift_sigma = 0.0;
        self
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |msg: &str| Err(SimError::InvalidConfig(msg.to_string()));
        if self.n_airports < 2 {
            return bad("n_airports must be at least 2");
        }
        if self.n_regions == 0 || self.n_regions > self.n_airports {
            return bad("n_regions must lie in 1..=n_airports");
        }
        if self.n_airlines == 0 || self.n_users == 0 || self.queries_per_day == 0 || self.n_days == 0
        {
            return bad("all counts must be positive");
        }
        if self.n_airports > u16::MAX as usize || self.n_airlines > u16::MAX as usize {
            return bad("catalog too large");
        }
        for (name, f) in [
            ("budget_airline_fraction", self.budget_airline_fraction),
            ("combo_prone_airline_fraction", self.combo_prone_airline_fraction),
            ("home_region_bias", self.home_region_bias),
            ("drift_persistence", self.drift_persistence),
        ] {
            if !(0.0..=1.0).contains(&f) {
                return Err(SimError::InvalidConfig(format!("{name} must lie in [0, 1]")));
            }
        }
        let n_budget = (self.budget_airline_fraction * self.n_airlines as f64).floor() as usize;
        let n_prone = (self.combo_prone_airline_fraction * self.n_airlines as f64).floor() as usize;
        if n_budget + n_prone > self.n_airlines {
            return bad("budget and combo-prone airline subsets must be disjoint");
        }
        for (name, (lo, hi)) in [
            ("discount_range", self.discount_range),
            ("asymmetry_range", self.asymmetry_range),
        ] {
            if !(lo > 0.0 && lo <= hi && hi <= 1.0) {
                return Err(SimError::InvalidConfig(format!("{name} must lie within (0, 1]")));
            }
        }
        if self.discount_range.1 >= 1.0 {
            return bad("traditional discounts must stay below 1");
        }
        let (s_lo, s_hi) = self.surge_sensitivity_range;
        if !(s_lo >= 0.0 && s_lo <= s_hi && s_hi.is_finite()) {
            return bad("surge_sensitivity_range must be a non-negative interval");
        }
        for (name, p) in [
            ("horizon_geometric_p", self.horizon_geometric_p),
            ("trip_length_geometric_p", self.trip_length_geometric_p),
        ] {
            if !(p > 0.0 && p <= 1.0) {
                return Err(SimError::InvalidConfig(format!("{name} must lie in (0, 1]")));
            }
        }
        if !(self.horizon_surge_decay > 0.0) {
            return bad("horizon_surge_decay must be positive");
        }
        for (name, v) in [
            ("route_zipf_exponent", self.route_zipf_exponent),
            ("price_noise_sigma", self.price_noise_sigma),
            ("horizon_surge_scale", self.horizon_surge_scale),
            ("airline_level_sigma", self.airline_level_sigma),
            ("region_effect_sigma", self.region_effect_sigma),
            ("station_effect_sigma", self.station_effect_sigma),
            ("drift_sigma", self.drift_sigma),
            ("user_activity_sigma", self.user_activity_sigma),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(SimError::InvalidConfig(format!("{name} must be non-negative")));
            }
        }
        Ok(())
    }

    pub fn n_budget_airlines(&self) -> usize {
        (self.budget_airline_fraction * self.n_airlines as f64).floor() as usize
    }

    pub fn n_combo_prone_airlines(&self) -> usize {
        (self.combo_prone_airline_fraction * self.n_airlines as f64).floor() as usize
    }
}

/// Dense index of an ordered airport pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RouteId(pub u32);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Route {
    pub id: RouteId,
    pub origin: AirportId,
    pub destination: AirportId,
    /// Share of global search volume (Zipf over a random popularity ranking).
    pub popularity: f64,
    pub base_price: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct World {
    pub config: SimConfig,
    pub catalog: Catalog,
    pub routes: Vec<Route>,
    pub user_home_region: Vec<u32>,
    pub user_activity: Vec<f64>,
    /// Log price level per airline.
    airline_level: Vec<f64>,
    /// Static log effect per (airline, airport), row-major by airline.
    station_effect: Vec<f64>,
    /// Drifting log effect per (day, airline, airport).
    drift: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub query: SearchQuery,
    pub leg_quotes: Vec<LegQuote>,
    pub roundtrip_quotes: Vec<RoundTripQuote>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthDay {
    pub day: u32,
    pub records: Vec<QueryRecord>,
}

impl GroundTruthDay {
    pub fn queries(&self) -> impl Iterator<Item = &SearchQuery> {
        self.records.iter().map(|r| &r.query)
    }

    pub fn leg_quotes(&self) -> impl Iterator<Item = &LegQuote> {
        self.records.iter().flat_map(|r| r.leg_quotes.iter())
    }

    pub fn roundtrip_quotes(&self) -> impl Iterator<Item = &RoundTripQuote> {
        self.records.iter().flat_map(|r| r.roundtrip_quotes.iter())
    }
}

impl World {
    pub fn generate(config: SimConfig) -> Result<Self, SimError> {
        config.validate()?;
        let mut rng = stream(config.seed, 0x574f_524c_44);
        let n_ap = config.n_airports;
        let n_al = config.n_airlines;

        // Regions: round-robin over a shuffled order so each region is non-empty.
        let mut order: Vec<usize> = (0..n_ap).collect();
        order.shuffle(&mut rng);
        let mut region_of = vec![0u32; n_ap];
        for (slot, &ap) in order.iter().enumerate() {
            region_of[ap] = (slot % config.n_regions) as u32;
        }
        let airport_level: Vec<f64> = (0..n_ap).map(|_| rng.random_range(0.8..1.25)).collect();

        // Routes: every ordered pair, popularity Zipf over a random ranking.
        let n_routes = n_ap * (n_ap - 1);
        let mut ranks: Vec<usize> = (0..n_routes).collect();
        ranks.shuffle(&mut rng);
        let raw: Vec<f64> = ranks
            .iter()
            .map(|&r| 1.0 / ((r + 1) as f64).powf(config.route_zipf_exponent))
            .collect();
        let total: f64 = raw.iter().sum();
        let mut routes = Vec::with_capacity(n_routes);
        for o in 0..n_ap {
            for d in 0..n_ap {
                if o == d {
                    continue;
                }
                let id = routes.len();
                let cross = if region_of[o] == region_of[d] { 1.0 } else { 1.6 };
                routes.push(Route {
                    id: RouteId(id as u32),
                    origin: AirportId(o as u16),
                    destination: AirportId(d as u16),
                    popularity: raw[id] / total,
                    base_price: 50.0 * (airport_level[o] + airport_level[d]) * cross,
                });
            }
        }

        let mut origin_weight = vec![0.0; n_ap];
        for route in &routes {
            origin_weight[route.origin.index()] += route.popularity;
        }
        let airports: Vec<Airport> = (0..n_ap)
            .map(|i| Airport {
                id: AirportId(i as u16),
                code: airport_code(i),
                region_id: region_of[i],
                popularity_weight: origin_weight[i],
            })
            .collect();

        // Airlines: a Budget subset and a disjoint combo-prone subset.
        let mut airline_order: Vec<usize> = (0..n_al).collect();
        airline_order.shuffle(&mut rng);
        let n_budget = config.n_budget_airlines();
        let n_prone = config.n_combo_prone_airlines();
        let mut airlines = Vec::with_capacity(n_al);
        let mut kind = vec![0u8; n_al];
        for (slot, &a) in airline_order.iter().enumerate() {
            kind[a] = if slot < n_budget {
                1
            } else if slot < n_budget + n_prone {
                2
            } else {
                0
            };
        }
        let (d_lo, d_hi) = config.discount_range;
        let (a_lo, a_hi) = config.asymmetry_range;
        let (s_lo, s_hi) = config.surge_sensitivity_range;
        for (a, &k) in kind.iter().enumerate() {
            let (strategy, discount) = if k == 1 {
                (PricingStrategy::Budget, 1.0)
            } else {
                (PricingStrategy::Traditional, uniform(&mut rng, d_lo, d_hi))
            };
            let asymmetry = if k == 2 {
                (uniform(&mut rng, a_lo, a_hi), uniform(&mut rng, a_lo, a_hi))
            } else {
                (1.0, 1.0)
            };
            let surge = (uniform(&mut rng, s_lo, s_hi), uniform(&mut rng, s_lo, s_hi));
            let hub_airports = if k == 2 {
                let region = rng.random_range(0..config.n_regions as u32);
                let mut members: Vec<AirportId> = (0..n_ap)
                    .filter(|&ap| region_of[ap] == region)
                    .map(|ap| AirportId(ap as u16))
                    .collect();
                members.shuffle(&mut rng);
                members.truncate(config.hubs_per_airline.max(1));
                members.sort();
                members
            } else {
                Vec::new()
            };
            airlines.push(Airline {
                id: AirlineId(a as u16),
                code: airline_code(a),
                strategy,
                roundtrip_discount: discount,
                direction_asymmetry: asymmetry,
                surge_sensitivity: surge,
                hub_airports,
            });
        }
        let catalog = Catalog::new(airports, airlines)?;

        let normal = |rng: &mut ChaCha8Rng| -> f64 { rng.sample(StandardNormal) };
        let airline_level: Vec<f64> = (0..n_al)
            .map(|_| config.airline_level_sigma * normal(&mut rng))
            .collect();
        let region_effect: Vec<f64> = (0..n_al * config.n_regions)
            .map(|_| config.region_effect_sigma * normal(&mut rng))
            .collect();
        let mut station_effect = vec![0.0; n_al * n_ap];
        for a in 0..n_al {
            for ap in 0..n_ap {
                station_effect[a * n_ap + ap] = region_effect
                    [a * config.n_regions + region_of[ap] as usize]
                    + config.station_effect_sigma * normal(&mut rng);
            }
        }

        // Mean-reverting AR(1) per (airline, airport) with stationary sd `drift_sigma`.
        let n_days = config.n_days as usize;
        let per_day = n_al * n_ap;
        let rho = config.drift_persistence;
        let innovation = config.drift_sigma * (1.0 - rho * rho).sqrt();
        let mut drift = vec![0.0; n_days * per_day];
        for k in 0..per_day {
            drift[k] = config.drift_sigma * normal(&mut rng);
        }
        for day in 1..n_days {
            for k in 0..per_day {
                let step = innovation * normal(&mut rng);
                drift[day * per_day + k] = rho * drift[(day - 1) * per_day + k] + step;
            }
        }

        let user_home_region: Vec<u32> = (0..config.n_users)
            .map(|_| rng.random_range(0..config.n_regions as u32))
            .collect();
        let activity = LogNormal::new(0.0, config.user_activity_sigma)
            .map_err(|e| SimError::InvalidConfig(e.to_string()))?;
        let user_activity: Vec<f64> = (0..config.n_users).map(|_| activity.sample(&mut rng)).collect();

        Ok(Self {
            config,
            catalog,
            routes,
            user_home_region,
            user_activity,
            airline_level,
            station_effect,
            drift,
        })
    }

    pub fn route_id(&self, origin: AirportId, destination: AirportId) -> Result<RouteId, SimError> {
        let n = self.config.n_airports;
        let (o, d) = (origin.index(), destination.index());
        if o >= n || d >= n || o == d {
            return Err(SimError::UnknownRoute(origin, destination));
        }
        let col = if d < o { d } else { d - 1 };
        Ok(RouteId((o * (n - 1) + col) as u32))
    }

    pub fn route(&self, id: RouteId) -> Option<&Route> {
        self.routes.get(id.0 as usize)
    }

    pub fn route_popularity(&self, origin: AirportId, destination: AirportId) -> f64 {
        self.route_id(origin, destination)
            .ok()
            .and_then(|id| self.route(id))
            .map_or(0.0, |r| r.popularity)
    }

    fn airline_factor(&self, airline: AirlineId, route: &Route, day: u32) -> f64 {
        let n_ap = self.config.n_airports;
        let a = airline.index();
        let o = route.origin.index();
        let d = route.destination.index();
        let day = (day as usize).min(self.config.n_days as usize - 1);
        let drift = &self.drift[day * self.config.n_airlines * n_ap..];
        let log = self.airline_level[a]
            + self.station_effect[a * n_ap + o]
            + self.station_effect[a * n_ap + d]
            + drift[a * n_ap + o]
            + drift[a * n_ap + d];
        log.exp()
    }

    fn surge(&self, airline: &Airline, direction: LegDirection, horizon: u32) -> f64 {
        let c = self.config.horizon_surge_scale * airline.surge(direction);
        1.0 + c * (-(horizon as f64) / self.config.horizon_surge_decay).exp()
    }

    fn lookup(&self, route: RouteId, airline: AirlineId) -> Result<(&Route, &Airline), SimError> {
        let r = self.route(route).ok_or_else(|| {
            SimError::UnknownRoute(AirportId(u16::MAX), AirportId(u16::MAX))
        })?;
        let a = self
            .catalog
            .airline(airline)
            .ok_or(SimError::UnknownAirline(airline))?;
        Ok((r, a))
    }

    /// One-way leg price; `noise_z` is the standard-normal draw (0 disables noise).
    pub fn price_leg(
        &self,
        route: RouteId,
        airline: AirlineId,
        direction: LegDirection,
        horizon: u32,
        day: u32,
        noise_z: f64,
    ) -> Result<f64, SimError> {
        let (r, a) = self.lookup(route, airline)?;
        let departure = match direction {
            LegDirection::Outbound => r.origin,
            LegDirection::Inbound => r.destination,
        };
        Ok(self.symmetric_leg(r, a, direction, horizon, day, noise_z)
            * a.asymmetry_from(direction, departure))
    }

    fn symmetric_leg(
        &self,
        route: &Route,
        airline: &Airline,
        direction: LegDirection,
        horizon: u32,
        day: u32,
        noise_z: f64,
    ) -> f64 {
        route.base_price
            * self.airline_factor(airline.id, route, day)
            * self.surge(airline, direction, horizon)
            * (self.config.price_noise_sigma * noise_z).exp()
    }

    /// Round-trip price sharing the legs' noise draws.
    pub fn price_roundtrip(
        &self,
        route: RouteId,
        airline: AirlineId,
        horizon: u32,
        day: u32,
        noise_out: f64,
        noise_in: f64,
    ) -> Result<f64, SimError> {
        let (r, a) = self.lookup(route, airline)?;
        Ok(match a.strategy {
            PricingStrategy::Budget => {
                self.price_leg(route, airline, LegDirection::Outbound, horizon, day, noise_out)?
                    + self.price_leg(route, airline, LegDirection::Inbound, horizon, day, noise_in)?
            }
            PricingStrategy::Traditional => {
                (self.symmetric_leg(r, a, LegDirection::Outbound, horizon, day, noise_out)
                    + self.symmetric_leg(r, a, LegDirection::Inbound, horizon, day, noise_in))
                    * a.roundtrip_discount
            }
        })
    }

    pub fn generate_day(&self, day: u32) -> Result<GroundTruthDay, SimError> {
        if day >= self.config.n_days {
            return Err(SimError::InvalidDay {
                day,
                n_days: self.config.n_days,
            });
        }
        let cfg = &self.config;
        let mut rng = stream(cfg.seed, mix_seed(0x4441_59, day as u64));
        let users = WeightedIndex::new(&self.user_activity)
            .map_err(|e| SimError::InvalidConfig(e.to_string()))?;
        let global = WeightedIndex::new(self.routes.iter().map(|r| r.popularity))
            .map_err(|e| SimError::InvalidConfig(e.to_string()))?;
        let regional = self.regional_route_samplers()?;
        let horizon_dist = Geometric::new(cfg.horizon_geometric_p)
            .map_err(|e| SimError::InvalidConfig(e.to_string()))?;
        let trip_dist = Geometric::new(cfg.trip_length_geometric_p)
            .map_err(|e| SimError::InvalidConfig(e.to_string()))?;

        let n_al = cfg.n_airlines;
        let mut records = Vec::with_capacity(cfg.queries_per_day);
        for i in 0..cfg.queries_per_day {
            let user = users.sample(&mut rng);
            let route_idx = if rng.random_bool(cfg.home_region_bias) {
                let (sampler, ids) = &regional[self.user_home_region[user] as usize];
                ids[sampler.sample(&mut rng)]
            } else {
                global.sample(&mut rng)
            };
            let route = &self.routes[route_idx];
            let horizon = horizon_dist.sample(&mut rng).min(cfg.max_horizon as u64) as u32;
            let trip = 1 + trip_dist.sample(&mut rng).min(cfg.max_trip_length as u64 - 1) as u32;
            let query = SearchQuery::new(
                QueryId(((day as u64) << 32) | i as u64),
                UserId(user as u32),
                route.origin,
                route.destination,
                day,
                day + horizon,
                day + horizon + trip,
            )?;
            let mut leg_quotes = Vec::with_capacity(2 * n_al);
            let mut roundtrip_quotes = Vec::with_capacity(n_al);
            for a in 0..n_al {
                let airline = AirlineId(a as u16);
                let z_out: f64 = rng.sample(StandardNormal);
                let z_in: f64 = rng.sample(StandardNormal);
                for (direction, z) in [(LegDirection::Outbound, z_out), (LegDirection::Inbound, z_in)] {
                    leg_quotes.push(LegQuote {
                        query_id: query.query_id,
                        airline,
                        direction,
                        price: self.price_leg(route.id, airline, direction, horizon, day, z)?,
                    });
                }
                roundtrip_quotes.push(RoundTripQuote {
                    query_id: query.query_id,
                    airline,
                    price: self.price_roundtrip(route.id, airline, horizon, day, z_out, z_in)?,
                });
            }
            records.push(QueryRecord {
                query,
                leg_quotes,
                roundtrip_quotes,
            });
        }
        Ok(GroundTruthDay { day, records })
    }

    fn regional_route_samplers(&self) -> Result<Vec<(WeightedIndex<f64>, Vec<usize>)>, SimError> {
        let mut out = Vec::with_capacity(self.config.n_regions);
        for region in 0..self.config.n_regions as u32 {
            let ids: Vec<usize> = self
                .routes
                .iter()
                .filter(|r| self.catalog.airports()[r.origin.index()].region_id == region)
                .map(|r| r.id.0 as usize)
                .collect();
            let sampler = WeightedIndex::new(ids.iter().map(|&i| self.routes[i].popularity))
                .map_err(|e| SimError::InvalidConfig(e.to_string()))?;
            out.push((sampler, ids));
        }
        Ok(out)
    }
}

/// Shorthand for [`World::generate`].
pub fn generate_world(config: SimConfig) -> Result<World, SimError> {
    World::generate(config)
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}

fn airport_code(i: usize) -> String {
    let b = |k: usize| (b'A' + (k % 26) as u8) as char;
    [b(i / 676), b(i / 26), b(i)].iter().collect()
}

fn airline_code(i: usize) -> String {
    let b = |k: usize| (b'A' + (k % 26) as u8) as char;
    [b(i / 26), b(i)].iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(seed: u64) -> SimConfig {
        SimConfig {
            seed,
            n_airports: 8,
            n_regions: 2,
            n_airlines: 5,
            n_users: 50,
            queries_per_day: 40,
            n_days: 3,
            ..SimConfig::default()
        }
    }

    #[test]
    fn default_world_airline_split() {
        let world = World::generate(SimConfig::default()).unwrap();
        let airlines = world.catalog.airlines();
        assert_eq!(airlines.len(), 20);
        let budget = airlines
            .iter()
            .filter(|a| a.strategy == PricingStrategy::Budget)
            .count();
        let prone = airlines.iter().filter(|a| a.is_combo_prone()).count();
        assert_eq!((budget, prone), (6, 6));
        assert!(airlines
            .iter()
            .all(|a| !(a.is_combo_prone() && a.strategy == PricingStrategy::Budget)));
    }

    #[test]
    fn single_region_world() {
        let world = World::generate(SimConfig {
            n_regions: 1,
            ..small(3)
        })
        .unwrap();
        assert!(world.catalog.airports().iter().all(|a| a.region_id == 0));
    }

    #[test]
    fn world_is_deterministic() {
        let a = World::generate(small(11)).unwrap();
        let b = World::generate(small(11)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.generate_day(2).unwrap(), b.generate_day(2).unwrap());
        assert_ne!(a.generate_day(1).unwrap(), a.generate_day(2).unwrap());
    }

    #[test]
    fn invalid_configs_rejected() {
        for cfg in [
            SimConfig {
                n_airlines: 0,
                ..small(1)
            },
            SimConfig {
                budget_airline_fraction: 1.5,
                ..small(1)
            },
            SimConfig {
                discount_range: (0.7, 1.0),
                ..small(1)
            },
            SimConfig {
                n_regions: 20,
                ..small(1)
            },
        ] {
            assert!(matches!(
                World::generate(cfg),
                Err(SimError::InvalidConfig(_))
            ));
        }
    }

    #[test]
    fn route_ids_are_dense() {
        let world = World::generate(small(5)).unwrap();
        for route in &world.routes {
            assert_eq!(world.route_id(route.origin, route.destination).unwrap(), route.id);
        }
        assert!(world.route_id(AirportId(1), AirportId(1)).is_err());
    }

    #[test]
    fn surge_ratio_matches_closed_form() {
        let mut world = World::generate(small(2)).unwrap();
        world.config.horizon_surge_scale = 1.5;
        world.config.horizon_surge_decay = 10.0;
        let mut airline = world.catalog.airlines()[0].clone();
        airline.surge_sensitivity = (1.0, 1.0);
        let near = world.surge(&airline, LegDirection::Outbound, 0);
        let far = world.surge(&airline, LegDirection::Outbound, 30);
        // Independent evaluation: (1 + 1.5) / (1 + 1.5 e^-3).
        let expected = 2.5 / (1.0 + 1.5 * (-3.0f64).exp());
        assert!((near / far - expected).abs() < 1e-12);
        assert!((expected - 2.326).abs() < 1e-3);
        assert!((world.surge(&airline, LegDirection::Outbound, 10_000) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn asymmetry_scales_outbound_leg() {
        let mut world = World::generate(small(4)).unwrap();
        let id = AirlineId(0);
        let mut airlines = world.catalog.airlines().to_vec();
        airlines[0].direction_asymmetry = (0.55, 1.0);
        airlines[0].surge_sensitivity = (1.0, 1.0);
        airlines[0].hub_airports.clear();
        world.catalog = Catalog::new(world.catalog.airports().to_vec(), airlines).unwrap();
        let route = world.routes[0].id;
        let out = world.price_leg(route, id, LegDirection::Outbound, 5, 0, 0.0).unwrap();
        let inb = world.price_leg(route, id, LegDirection::Inbound, 5, 0, 0.0).unwrap();
        assert!((out - 0.55 * inb).abs() < 1e-9);
    }

    #[test]
    fn budget_roundtrip_is_exact_leg_sum() {
        let world = World::generate(SimConfig::default()).unwrap();
        let day = world.generate_day(0).unwrap();
        let budget: Vec<AirlineId> = world
            .catalog
            .airlines()
            .iter()
            .filter(|a| a.strategy == PricingStrategy::Budget)
            .map(|a| a.id)
            .collect();
        for rec in day.records.iter().take(100) {
            for &a in &budget {
                let legs: Vec<f64> = rec
                    .leg_quotes
                    .iter()
                    .filter(|q| q.airline == a)
                    .map(|q| q.price)
                    .collect();
                let rt = rec.roundtrip_quotes.iter().find(|q| q.airline == a).unwrap();
                assert_eq!(rt.price, legs[0] + legs[1]);
            }
        }
    }

    #[test]
    fn traditional_roundtrip_arithmetic() {
        // Symmetric legs 100 + 100 with discount 0.85.
        assert!(((100.0 + 100.0) * 0.85f64 - 170.0).abs() < 1e-12);
        let world = World::generate(small(9)).unwrap();
        let a = world
            .catalog
            .airlines()
            .iter()
            .find(|a| a.strategy == PricingStrategy::Traditional && !a.is_combo_prone())
            .unwrap();
        let route = world.routes[3].id;
        let out = world.price_leg(route, a.id, LegDirection::Outbound, 4, 1, 0.3).unwrap();
        let inb = world.price_leg(route, a.id, LegDirection::Inbound, 4, 1, -0.2).unwrap();
        let rt = world.price_roundtrip(route, a.id, 4, 1, 0.3, -0.2).unwrap();
        assert!((rt - (out + inb) * a.roundtrip_discount).abs() < 1e-9);
    }

    #[test]
    fn day_completeness_counts() {
        let world = World::generate(SimConfig::default()).unwrap();
        let day = world.generate_day(3).unwrap();
        assert_eq!(day.records.len(), 2000);
        assert_eq!(day.roundtrip_quotes().count(), 2000 * 20);
        assert_eq!(day.leg_quotes().count(), 2000 * 20 * 2);
        assert!(day.leg_quotes().all(|q| q.price > 0.0));
        assert!(matches!(world.generate_day(21), Err(SimError::InvalidDay { .. })));
    }

    #[test]
    fn zipf_routes_concentrate_traffic() {
        // 23 airports -> 506 routes; top quarter should carry at least ~70%.
        let world = World::generate(SimConfig {
            n_airports: 23,
            n_days: 1,
            queries_per_day: 20_000,
            n_airlines: 2,
            ..SimConfig::default()
        })
        .unwrap();
        let day = world.generate_day(0).unwrap();
        let mut counts = vec![0usize; world.routes.len()];
        for q in day.queries() {
            counts[world.route_id(q.origin, q.destination).unwrap().0 as usize] += 1;
        }
        counts.sort_unstable_by(|a, b| b.cmp(a));
        let top: usize = counts[..counts.len() / 4].iter().sum();
        let share = top as f64 / day.records.len() as f64;
        assert!(share >= 0.65, "top-quarter share {share}");
    }

    #[test]
    fn horizon_median_is_short() {
        let world = World::generate(SimConfig {
            n_days: 1,
            queries_per_day: 5000,
            n_airlines: 1,
            ..SimConfig::default()
        })
        .unwrap();
        let day = world.generate_day(0).unwrap();
        let mut h: Vec<u32> = day.queries().map(|q| q.horizon()).collect();
        h.sort_unstable();
        assert!(h[h.len() / 2] <= 10);
    }

    #[test]
    fn home_region_bias_holds() {
        let world = World::generate(SimConfig {
            n_days: 1,
            queries_per_day: 5000,
            n_airlines: 1,
            ..SimConfig::default()
        })
        .unwrap();
        let day = world.generate_day(0).unwrap();
        let home = day
            .queries()
            .filter(|q| {
                world.catalog.airports()[q.origin.index()].region_id
                    == world.user_home_region[q.user_id.0 as usize]
            })
            .count() as f64
            / 5000.0;
        // 0.8 directly plus ~0.2 / n_regions through the global draw.
        assert!(home > 0.78 && home < 0.9, "home share {home}");
    }
}
