//! Model parameterization: ring size, arrival and departure probabilities.
//!
//! Cells, queues and vehicle types are indexed from 0 in code. Type `j` is a
//! vehicle that entered the ring from queue `j`; it first occupies cell
//! `j + 1 (mod L)`. The JSON document uses the 1-based labels of the model
//! description, so `zero_rate_types: [3]` refers to code index 2.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSetting<T> {
    arrival: Vec<T>,
    /// `departure[cell][type]`
    departure: Vec<Vec<T>>,
    exempt: BTreeSet<usize>,
}

impl<T: Scalar> ParameterSetting<T> {
    pub fn new(arrival: Vec<T>, departure: Vec<Vec<T>>) -> Result<Self> {
        Self::with_exempt_types(arrival, departure, [])
    }

    /// Builds a setting in which the listed types never depart. Those types
    /// must have zero arrival probability.
    pub fn with_exempt_types(
        arrival: Vec<T>,
        departure: Vec<Vec<T>>,
        exempt: impl IntoIterator<Item = usize>,
    ) -> Result<Self> {
        let ring_size = arrival.len();
        if ring_size == 0 {
            return Err(Error::EmptyRing);
        }
        if departure.len() != ring_size {
            return Err(Error::Dimension {
                what: "departure rows".into(),
                expected: ring_size,
                found: departure.len(),
            });
        }
        for (cell, row) in departure.iter().enumerate() {
            if row.len() != ring_size {
                return Err(Error::Dimension {
                    what: format!("departure row {}", cell + 1),
                    expected: ring_size,
                    found: row.len(),
                });
            }
        }
        let zero = T::zero();
        let one = T::one();
        for (i, p) in arrival.iter().enumerate() {
            if !(*p >= zero && *p < one) {
                return Err(Error::ProbabilityOutOfRange {
                    what: format!("p[{}]", i + 1),
                    value: p.as_f64(),
                    range: "[0, 1)",
                });
            }
        }
        for (cell, row) in departure.iter().enumerate() {
            for (ty, q) in row.iter().enumerate() {
                if !(*q >= zero && *q <= one) {
                    return Err(Error::ProbabilityOutOfRange {
                        what: format!("q[{}][{}]", cell + 1, ty + 1),
                        value: q.as_f64(),
                        range: "[0, 1]",
                    });
                }
            }
        }
        let exempt: BTreeSet<usize> = exempt.into_iter().collect();
        for &ty in &exempt {
            if ty >= ring_size {
                return Err(Error::IndexOutOfRange {
                    what: "zero-rate type",
                    index: ty,
                    bound: ring_size,
                });
            }
            if arrival[ty] != zero {
                return Err(Error::ExemptTypeWithArrivals {
                    vehicle_type: ty + 1,
                    p: arrival[ty].as_f64(),
                });
            }
        }
        let setting = Self {
            arrival,
            departure,
            exempt,
        };
        for ty in 0..ring_size {
            if !setting.is_exempt(ty) && setting.cycle_survival(ty) >= one {
                return Err(Error::VehiclesNeverLeave {
                    vehicle_type: ty + 1,
                });
            }
        }
        Ok(setting)
    }

    /// Replaces the arrival vector, keeping departures and exemptions.
    pub fn with_arrivals(&self, arrival: Vec<T>) -> Result<Self> {
        Self::with_exempt_types(arrival, self.departure.clone(), self.exempt.iter().copied())
    }

    pub fn ring_size(&self) -> usize {
        self.arrival.len()
    }

    pub fn arrivals(&self) -> &[T] {
        &self.arrival
    }

    pub fn arrival(&self, queue: usize) -> &T {
        &self.arrival[queue]
    }

    pub fn departures(&self) -> &[Vec<T>] {
        &self.departure
    }

    /// Departure probability of a type-`ty` vehicle at `cell`, with the cell
    /// index taken modulo the ring size.
    pub fn departure(&self, cell: usize, ty: usize) -> &T {
        &self.departure[cell % self.ring_size()][ty]
    }

    pub fn is_exempt(&self, ty: usize) -> bool {
        self.exempt.contains(&ty)
    }

    pub fn exempt_types(&self) -> impl Iterator<Item = usize> + '_ {
        self.exempt.iter().copied()
    }

    /// Probability that a type-`ty` vehicle completes a full lap without
    /// departing.
    pub fn cycle_survival(&self, ty: usize) -> T {
        self.departure
            .iter()
            .fold(T::one(), |acc, row| acc * (T::one() - row[ty].clone()))
    }

    pub fn map<U: Scalar>(&self, f: impl Fn(&T) -> U) -> ParameterSetting<U> {
        ParameterSetting {
            arrival: self.arrival.iter().map(&f).collect(),
            departure: self
                .departure
                .iter()
                .map(|row| row.iter().map(&f).collect())
                .collect(),
            exempt: self.exempt.clone(),
        }
    }

    pub fn to_f64(&self) -> ParameterSetting<f64> {
        self.map(Scalar::as_f64)
    }
}

impl ParameterSetting<f64> {
    pub fn from_json_str(s: &str) -> std::result::Result<Self, ParameterError> {
        let doc: ParameterDocument = serde_json::from_str(s)?;
        Ok(Self::try_from(doc)?)
    }

    pub fn to_document(&self) -> ParameterDocument {
        ParameterDocument::from(self)
    }
}

/// Serialized form: `{"L": .., "p": [..], "q": [[..]], "zero_rate_types": [..]}`
/// with `q[i][j]` the departure probability of a type-`j` vehicle at cell `i`
/// and 1-based type labels in `zero_rate_types`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterDocument {
    #[serde(rename = "L")]
    pub ring_size: usize,
    pub p: Vec<f64>,
    pub q: Vec<Vec<f64>>,
    #[serde(default)]
    pub zero_rate_types: Vec<usize>,
}

#[derive(Debug, thiserror::Error)]
pub enum ParameterError {
    #[error("malformed parameter document: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Invalid(#[from] Error),
}

impl TryFrom<ParameterDocument> for ParameterSetting<f64> {
    type Error = Error;

    fn try_from(doc: ParameterDocument) -> Result<Self> {
        if doc.p.len() != doc.ring_size {
            return Err(Error::Dimension {
                what: "p".into(),
                expected: doc.ring_size,
                found: doc.p.len(),
            });
        }
        let mut exempt = Vec::with_capacity(doc.zero_rate_types.len());
        for label in doc.zero_rate_types {
            if label == 0 || label > doc.ring_size {
                return Err(Error::IndexOutOfRange {
                    what: "zero-rate type label",
                    index: label,
                    bound: doc.ring_size,
                });
            }
            exempt.push(label - 1);
        }
        ParameterSetting::with_exempt_types(doc.p, doc.q, exempt)
    }
}

impl<T: Scalar> From<&ParameterSetting<T>> for ParameterDocument {
    fn from(ps: &ParameterSetting<T>) -> Self {
        Self {
            ring_size: ps.ring_size(),
            p: ps.arrival.iter().map(Scalar::as_f64).collect(),
            q: ps
                .departure
                .iter()
                .map(|row| row.iter().map(Scalar::as_f64).collect())
                .collect(),
            zero_rate_types: ps.exempt.iter().map(|t| t + 1).collect(),
        }
    }
}
