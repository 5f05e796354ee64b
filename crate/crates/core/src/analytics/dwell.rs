use crate::error::{Error, Result};
use crate::params::ParameterSetting;
use crate::scalar::Scalar;

/// Truncated law of the number of cells a vehicle occupies before leaving.
#[derive(Debug, Clone, PartialEq)]
pub struct DwellDistribution<T> {
    /// `probabilities[k - 1] = P(T = k)` for `k = 1..=k_max`.
    pub probabilities: Vec<T>,
    /// `P(T > k_max)`.
    pub tail: T,
}

/// `P(T_j = k) = prod_{s=1}^{k-1} (1 - q[j+s][j]) * q[j+k][j]`, cells taken
/// modulo the ring size. `P(T_j = 0) = 0`.
pub fn dwell_distribution<T: Scalar>(
    ps: &ParameterSetting<T>,
    ty: usize,
    k_max: usize,
) -> Result<DwellDistribution<T>> {
    if ty >= ps.ring_size() {
        return Err(Error::IndexOutOfRange {
            what: "vehicle type",
            index: ty,
            bound: ps.ring_size(),
        });
    }
    if ps.is_exempt(ty) {
        return Err(Error::InfiniteDwell {
            vehicle_type: ty + 1,
        });
    }
    if k_max == 0 {
        return Err(Error::InvalidArgument("k_max must be positive".into()));
    }
    let mut survival = T::one();
    let mut probabilities = Vec::with_capacity(k_max);
    for k in 1..=k_max {
        let q = ps.departure(ty + k, ty).clone();
        probabilities.push(survival.clone() * q.clone());
        survival = survival * (T::one() - q);
    }
    Ok(DwellDistribution {
        probabilities,
        tail: survival,
    })
}
