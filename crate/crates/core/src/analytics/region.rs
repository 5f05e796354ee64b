use serde::Serialize;

use crate::analytics::visits::visit_matrix;
use crate::params::ParameterSetting;
use crate::scalar::Scalar;

/// `sum_k coefficients[k] * p_k < bound`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Halfspace<T> {
    pub coefficients: Vec<T>,
    pub bound: T,
}

impl<T: Scalar> Halfspace<T> {
    pub fn contains(&self, p: &[T]) -> bool {
        let lhs = self
            .coefficients
            .iter()
            .zip(p)
            .fold(T::zero(), |acc, (a, x)| acc + a.clone() * x.clone());
        lhs < self.bound
    }
}

/// Stability region `(I + B) p < e` in arrival-probability space.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityRegion<T> {
    /// One inequality per cell.
    pub halfspaces: Vec<Halfspace<T>>,
    /// Coordinates forced to zero (exempt types).
    pub pinned_zero: Vec<usize>,
    /// Largest stable value along each axis, `min_i bound / a_ik`.
    pub intercepts: Vec<Option<T>>,
    /// Sampled outer boundary `(p1, p2)` for two-cell rings.
    pub boundary: Vec<[f64; 2]>,
}

impl<T: Scalar> StabilityRegion<T> {
    pub fn contains(&self, p: &[T]) -> bool {
        self.pinned_zero.iter().all(|&k| p[k].is_zero())
            && self.halfspaces.iter().all(|h| h.contains(p))
    }

    pub fn boundary_csv(&self) -> String {
        let mut out = String::from("p1,p2\n");
        for [x, y] in &self.boundary {
            out.push_str(&format!("{x},{y}\n"));
        }
        out
    }
}

/// Halfspace description of the stability region; for `L = 2` also samples
/// the boundary at `resolution + 1` evenly spaced `p1` values.
pub fn stability_region<T: Scalar>(ps: &ParameterSetting<T>, resolution: usize) -> StabilityRegion<T> {
    let l = ps.ring_size();
    let b = visit_matrix(ps);
    let pinned_zero: Vec<usize> = ps.exempt_types().collect();
    let halfspaces: Vec<Halfspace<T>> = (0..l)
        .map(|cell| {
            let coefficients = (0..l)
                .map(|k| {
                    let visits = b.finite(cell, k).cloned().unwrap_or_else(T::zero);
                    if k == cell {
                        T::one() + visits
                    } else {
                        visits
                    }
                })
                .collect();
            Halfspace {
                coefficients,
                bound: T::one(),
            }
        })
        .collect();
    let intercepts: Vec<Option<T>> = (0..l)
        .map(|k| {
            if ps.is_exempt(k) {
                return None;
            }
            halfspaces
                .iter()
                .filter(|h| h.coefficients[k] > T::zero())
                .map(|h| h.bound.clone() / h.coefficients[k].clone())
                .reduce(T::min_of)
        })
        .collect();

    let mut boundary = Vec::new();
    if l == 2 && pinned_zero.is_empty() && resolution > 0 {
        let rows: Vec<[f64; 2]> = halfspaces
            .iter()
            .map(|h| [h.coefficients[0].as_f64(), h.coefficients[1].as_f64()])
            .collect();
        let x_max = intercepts[0].as_ref().map_or(0.0, Scalar::as_f64);
        for step in 0..=resolution {
            let x = x_max * step as f64 / resolution as f64;
            let y = rows
                .iter()
                .filter(|r| r[1] > 0.0)
                .map(|r| (1.0 - r[0] * x) / r[1])
                .fold(f64::INFINITY, f64::min)
                .max(0.0);
            boundary.push([x, y]);
        }
    }
    StabilityRegion {
        halfspaces,
        pinned_zero,
        intercepts,
        boundary,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::{ratio, Exact};

    fn scaled(h: &Halfspace<Exact>, by: i64) -> Vec<Exact> {
        h.coefficients
            .iter()
            .chain(std::iter::once(&h.bound))
            .map(|c| c * ratio(by, 1))
            .collect()
    }

    #[test]
    fn figure_region() {
        let ps: ParameterSetting<Exact> = ParameterSetting::new(
            vec![ratio(0, 1), ratio(0, 1)],
            vec![vec![ratio(3, 4), ratio(3, 4)], vec![ratio(1, 2), ratio(1, 2)]],
        )
        .unwrap();
        let region = stability_region(&ps, 10);
        // 11 p1 + 8 p2 < 7 and 8 p1 + 9 p2 < 7
        assert_eq!(
            scaled(&region.halfspaces[0], 7),
            vec![ratio(11, 1), ratio(8, 1), ratio(7, 1)]
        );
        assert_eq!(
            scaled(&region.halfspaces[1], 7),
            vec![ratio(8, 1), ratio(9, 1), ratio(7, 1)]
        );
        assert_eq!(region.intercepts, vec![Some(ratio(7, 11)), Some(ratio(7, 9))]);
        assert_eq!(region.boundary.len(), 11);
        assert!((region.boundary[0][1] - 7.0 / 9.0).abs() < 1e-12);
        assert!((region.boundary[10][0] - 7.0 / 11.0).abs() < 1e-12);
        assert!(region.boundary[10][1].abs() < 1e-12);
        assert!(region.boundary_csv().starts_with("p1,p2\n0,"));
    }

    #[test]
    fn single_cell_region() {
        let ps = ParameterSetting::new(vec![ratio(0, 1)], vec![vec![ratio(3, 4)]]).unwrap();
        let region = stability_region(&ps, 5);
        assert_eq!(region.halfspaces.len(), 1);
        assert_eq!(region.intercepts, vec![Some(ratio(3, 7))]);
        assert!(region.boundary.is_empty());
        assert!(region.contains(&[ratio(2, 5)]));
        assert!(!region.contains(&[ratio(3, 7)]));
    }

    #[test]
    fn certain_departure_region_is_simplex() {
        let ps = ParameterSetting::new(vec![0.0, 0.0], vec![vec![1.0, 1.0], vec![1.0, 1.0]])
            .unwrap();
        let region = stability_region(&ps, 4);
        for h in &region.halfspaces {
            assert_eq!(h.coefficients, vec![1.0, 1.0]);
        }
        assert!(region.contains(&[0.4, 0.5]));
        assert!(!region.contains(&[0.5, 0.5]));
    }
}
