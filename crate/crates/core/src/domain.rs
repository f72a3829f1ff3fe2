//! Core vocabulary: airports, airlines, searches, quotes and classifier instances.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DomainError {
    #[error("duplicate {kind} identifier: {value}")]
    DuplicateId { kind: &'static str, value: String },
    #[error("catalog must contain at least one airport and one airline")]
    EmptyCatalog,
    #[error("invalid airport {code}: {reason}")]
    InvalidAirport { code: String, reason: String },
    #[error("invalid airline {code}: {reason}")]
    InvalidAirline { code: String, reason: String },
    #[error("invalid dates: search {search_day}, departure {departure_day}, return {return_day}")]
    InvalidDates {
        search_day: u32,
        departure_day: u32,
        return_day: u32,
    },
    #[error("origin and destination are both {0}")]
    SameOriginDestination(AirportId),
    #[error("combination must use two distinct airlines, got {0} twice")]
    SameAirlineCombination(AirlineId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AirportId(pub u16);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AirlineId(pub u16);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct QueryId(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct UserId(pub u32);

impl AirportId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl AirlineId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for AirportId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "airport#{}", self.0)
    }
}

impl fmt::Display for AirlineId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "airline#{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Airport {
    pub id: AirportId,
    pub code: String,
    pub region_id: u32,
    pub popularity_weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PricingStrategy {
    /// Round trip priced as the plain sum of its legs.
    Budget,
    /// Round trip discounted relative to the legs.
    Traditional,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Airline {
    pub id: AirlineId,
    pub code: String,
    pub strategy: PricingStrategy,
    pub roundtrip_discount: f64,
    /// One-way price factors for (outbound, inbound) legs.
    pub direction_asymmetry: (f64, f64),
    /// Per-direction multiplier on the short-horizon price surge.
    pub surge_sensitivity: (f64, f64),
    /// Airports whose departing legs carry the direction asymmetry; empty means every airport.
    pub hub_airports: Vec<AirportId>,
}

impl Airline {
    pub fn asymmetry(&self, direction: LegDirection) -> f64 {
        match direction {
            LegDirection::Outbound => self.direction_asymmetry.0,
            LegDirection::Inbound => self.direction_asymmetry.1,
        }
    }

    pub fn surge(&self, direction: LegDirection) -> f64 {
        match direction {
            LegDirection::Outbound => self.surge_sensitivity.0,
            LegDirection::Inbound => self.surge_sensitivity.1,
        }
    }

    /// Asymmetry factor for a leg departing from `departure`.
    pub fn asymmetry_from(&self, direction: LegDirection, departure: AirportId) -> f64 {
        if self.hub_airports.is_empty() || self.hub_airports.contains(&departure) {
            self.asymmetry(direction)
        } else {
            1.0
        }
    }

    pub fn is_combo_prone(&self) -> bool {
        self.direction_asymmetry != (1.0, 1.0)
    }
}

/// Validated airports and airlines with code lookups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawCatalog", into = "RawCatalog")]
pub struct Catalog {
    airports: Vec<Airport>,
    airlines: Vec<Airline>,
    airport_codes: HashMap<String, AirportId>,
    airline_codes: HashMap<String, AirlineId>,
}

#[derive(Serialize, Deserialize)]
struct RawCatalog {
    airports: Vec<Airport>,
    airlines: Vec<Airline>,
}

impl TryFrom<RawCatalog> for Catalog {
    type Error = DomainError;

    fn try_from(raw: RawCatalog) -> Result<Self, Self::Error> {
        Catalog::new(raw.airports, raw.airlines)
    }
}

impl From<Catalog> for RawCatalog {
    fn from(catalog: Catalog) -> Self {
        RawCatalog {
            airports: catalog.airports,
            airlines: catalog.airlines,
        }
    }
}

impl Catalog {
    /// Ids must be dense (`0..len`) and in order so they double as indices.
    pub fn new(airports: Vec<Airport>, airlines: Vec<Airline>) -> Result<Self, DomainError> {
        if airports.is_empty() || airlines.is_empty() {
            return Err(DomainError::EmptyCatalog);
        }
        let mut airport_codes = HashMap::with_capacity(airports.len());
        for (i, airport) in airports.iter().enumerate() {
            if airport.id.index() != i {
                return Err(DomainError::DuplicateId {
                    kind: "airport id",
                    value: airport.id.0.to_string(),
                });
            }
            if !(airport.popularity_weight > 0.0) || !airport.popularity_weight.is_finite() {
                return Err(DomainError::InvalidAirport {
                    code: airport.code.clone(),
                    reason: "popularity weight must be positive".into(),
                });
            }
            if airport_codes.insert(airport.code.clone(), airport.id).is_some() {
                return Err(DomainError::DuplicateId {
                    kind: "airport code",
                    value: airport.code.clone(),
                });
            }
        }
        let mut airline_codes = HashMap::with_capacity(airlines.len());
        for (i, airline) in airlines.iter().enumerate() {
            if airline.id.index() != i {
                return Err(DomainError::DuplicateId {
                    kind: "airline id",
                    value: airline.id.0.to_string(),
                });
            }
            validate_airline(airline)?;
            if airline_codes.insert(airline.code.clone(), airline.id).is_some() {
                return Err(DomainError::DuplicateId {
                    kind: "airline code",
                    value: airline.code.clone(),
                });
            }
        }
        Ok(Self {
            airports,
            airlines,
            airport_codes,
            airline_codes,
        })
    }

    pub fn airports(&self) -> &[Airport] {
        &self.airports
    }

    pub fn airlines(&self) -> &[Airline] {
        &self.airlines
    }

    pub fn n_airports(&self) -> usize {
        self.airports.len()
    }

    pub fn n_airlines(&self) -> usize {
        self.airlines.len()
    }

    pub fn airport(&self, id: AirportId) -> Option<&Airport> {
        self.airports.get(id.index())
    }

    pub fn airline(&self, id: AirlineId) -> Option<&Airline> {
        self.airlines.get(id.index())
    }

    pub fn airport_by_code(&self, code: &str) -> Option<AirportId> {
        self.airport_codes.get(code).copied()
    }

    pub fn airline_by_code(&self, code: &str) -> Option<AirlineId> {
        self.airline_codes.get(code).copied()
    }
}

fn validate_airline(airline: &Airline) -> Result<(), DomainError> {
    let invalid = |reason: &str| DomainError::InvalidAirline {
        code: airline.code.clone(),
        reason: reason.to_string(),
    };
    match airline.strategy {
        PricingStrategy::Budget if airline.roundtrip_discount != 1.0 => {
            return Err(invalid("budget airlines must have a round-trip discount of exactly 1"))
        }
        PricingStrategy::Traditional
            if !(airline.roundtrip_discount > 0.0 && airline.roundtrip_discount < 1.0) =>
        {
            return Err(invalid("traditional round-trip discount must lie in (0, 1)"))
        }
        _ => {}
    }
    let (out, inb) = airline.direction_asymmetry;
    if !(out > 0.0 && inb > 0.0 && out.is_finite() && inb.is_finite()) {
        return Err(invalid("direction asymmetry factors must be positive"));
    }
    let (s_out, s_in) = airline.surge_sensitivity;
    if !(s_out >= 0.0 && s_in >= 0.0 && s_out.is_finite() && s_in.is_finite()) {
        return Err(invalid("surge sensitivity must be non-negative"));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum LegDirection {
    Outbound,
    Inbound,
}

impl LegDirection {
    pub const ALL: [LegDirection; 2] = [LegDirection::Outbound, LegDirection::Inbound];

    pub fn index(self) -> usize {
        match self {
            LegDirection::Outbound => 0,
            LegDirection::Inbound => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SearchQuery {
    pub query_id: QueryId,
    pub user_id: UserId,
    pub origin: AirportId,
    pub destination: AirportId,
    pub search_day: u32,
    pub departure_day: u32,
    pub return_day: u32,
}

impl SearchQuery {
    pub fn new(
        query_id: QueryId,
        user_id: UserId,
        origin: AirportId,
        destination: AirportId,
        search_day: u32,
        departure_day: u32,
        return_day: u32,
    ) -> Result<Self, DomainError> {
        if origin == destination {
            return Err(DomainError::SameOriginDestination(origin));
        }
        if !(search_day <= departure_day && departure_day <= return_day) {
            return Err(DomainError::InvalidDates {
                search_day,
                departure_day,
                return_day,
            });
        }
        Ok(Self {
            query_id,
            user_id,
            origin,
            destination,
            search_day,
            departure_day,
            return_day,
        })
    }

    /// Days between search and departure.
    pub fn horizon(&self) -> u32 {
        self.departure_day - self.search_day
    }

    pub fn trip_length(&self) -> u32 {
        self.return_day - self.departure_day
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LegQuote {
    pub query_id: QueryId,
    pub airline: AirlineId,
    pub direction: LegDirection,
    pub price: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoundTripQuote {
    pub query_id: QueryId,
    pub airline: AirlineId,
    pub price: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CombinationItinerary {
    pub query_id: QueryId,
    pub outbound_airline: AirlineId,
    pub inbound_airline: AirlineId,
    pub price: f64,
}

impl CombinationItinerary {
    pub fn from_legs(outbound: &LegQuote, inbound: &LegQuote) -> Result<Self, DomainError> {
        debug_assert_eq!(outbound.query_id, inbound.query_id);
        debug_assert_eq!(outbound.direction, LegDirection::Outbound);
        debug_assert_eq!(inbound.direction, LegDirection::Inbound);
        if outbound.airline == inbound.airline {
            return Err(DomainError::SameAirlineCombination(outbound.airline));
        }
        Ok(Self {
            query_id: outbound.query_id,
            outbound_airline: outbound.airline,
            inbound_airline: inbound.airline,
            price: outbound.price + inbound.price,
        })
    }
}

/// Classifier inputs for one (query, airline, direction).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub origin: AirportId,
    pub destination: AirportId,
    pub airline: AirlineId,
    pub direction: LegDirection,
    pub horizon: u32,
    pub trip_length: u32,
    pub search_day_of_week: u8,
    pub departure_day_of_week: u8,
    pub route_popularity: f64,
}

impl FeatureVector {
    pub fn for_query(
        query: &SearchQuery,
        airline: AirlineId,
        direction: LegDirection,
        route_popularity: f64,
    ) -> Self {
        Self {
            origin: query.origin,
            destination: query.destination,
            airline,
            direction,
            horizon: query.horizon(),
            trip_length: query.trip_length(),
            search_day_of_week: (query.search_day % 7) as u8,
            departure_day_of_week: (query.departure_day % 7) as u8,
            route_popularity,
        }
    }

    /// The (origin, destination, airline) rule key.
    pub fn triple(&self) -> RuleTriple {
        RuleTriple {
            origin: self.origin,
            destination: self.destination,
            airline: self.airline,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RuleTriple {
    pub origin: AirportId,
    pub destination: AirportId,
    pub airline: AirlineId,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub query_id: QueryId,
    pub airline: AirlineId,
    pub direction: LegDirection,
    pub label: bool,
    pub features: FeatureVector,
}

impl Instance {
    pub fn key(&self) -> InstanceKey {
        InstanceKey {
            query_id: self.query_id,
            airline: self.airline,
            direction: self.direction,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct InstanceKey {
    pub query_id: QueryId,
    pub airline: AirlineId,
    pub direction: LegDirection,
}
