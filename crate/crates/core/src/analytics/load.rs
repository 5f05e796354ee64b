use serde::Serialize;

use crate::analytics::visits::{visit_matrix, VisitMatrix};
use crate::error::{Error, Result};
use crate::network::{self, ClassSpace};
use crate::params::ParameterSetting;
use crate::scalar::Scalar;

/// Offered load of a parameter setting.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LoadProfile<T> {
    /// `pi[i][j]`, `j = 0..=L`: cell `i` empty (`j = 0`) or holding a vehicle
    /// of type `j - 1`.
    pub pi: Vec<Vec<T>>,
    /// Effective arrival rate per class, flat class index.
    pub lambda: Vec<T>,
    /// Station loads.
    pub rho: Vec<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrafficSolution<T> {
    pub lambda: Vec<T>,
    pub rho: Vec<T>,
}

/// `pi[i][j] = b[i][j] p_j` and `pi[i][0] = 1 - sum_j b[i][j] p_j`.
///
/// `pi[i][0]` is returned as computed, negative when the cell is overloaded.
pub fn marginal_distribution<T: Scalar>(ps: &ParameterSetting<T>) -> Result<Vec<Vec<T>>> {
    marginal_from_visits(ps, &visit_matrix(ps))
}

pub fn marginal_from_visits<T: Scalar>(
    ps: &ParameterSetting<T>,
    b: &VisitMatrix<T>,
) -> Result<Vec<Vec<T>>> {
    let l = ps.ring_size();
    let mut pi = Vec::with_capacity(l);
    for cell in 0..l {
        let mut row = Vec::with_capacity(l + 1);
        row.push(T::zero());
        for ty in 0..l {
            let p = ps.arrival(ty);
            let value = if p.is_zero() {
                T::zero()
            } else {
                b.finite(cell, ty)
                    .ok_or(Error::InfiniteLoad {
                        vehicle_type: ty + 1,
                    })?
                    .clone()
                    * p.clone()
            };
            row.push(value);
        }
        let occupied = row[1..].iter().cloned().fold(T::zero(), |a, v| a + v);
        row[0] = T::one() - occupied;
        pi.push(row);
    }
    Ok(pi)
}

/// Solves the traffic equations `(I - P^T) lambda = p` over the class space
/// and aggregates `rho = C lambda`.
pub fn traffic_solution<T: Scalar>(ps: &ParameterSetting<T>) -> Result<TrafficSolution<T>> {
    let space = ClassSpace::new(ps.ring_size());
    let mut exogenous = vec![T::zero(); space.len()];
    for station in 0..ps.ring_size() {
        exogenous[space.entry(station)] = ps.arrival(station).clone();
    }
    let lambda = network::solve_traffic(ps, &exogenous)?;
    let rho = network::station_totals(space, &lambda);
    Ok(TrafficSolution { lambda, rho })
}

/// `rho_i = p_i + sum_j b[i][j] p_j`, the closed-form route to the loads.
pub fn closed_form_load<T: Scalar>(ps: &ParameterSetting<T>, b: &VisitMatrix<T>) -> Result<Vec<T>> {
    (0..ps.ring_size())
        .map(|cell| {
            let ring = b.weighted_row_sum(cell, ps.arrivals()).ok_or_else(|| {
                let ty = (0..ps.ring_size())
                    .find(|&j| !b.is_finite_column(j) && !ps.arrival(j).is_zero())
                    .unwrap_or(0);
                Error::InfiniteLoad { vehicle_type: ty + 1 }
            })?;
            Ok(ps.arrival(cell).clone() + ring)
        })
        .collect()
}

pub fn load_profile<T: Scalar>(ps: &ParameterSetting<T>) -> Result<LoadProfile<T>> {
    let pi = marginal_distribution(ps)?;
    let TrafficSolution { lambda, rho } = traffic_solution(ps)?;
    Ok(LoadProfile { pi, lambda, rho })
}
