use serde::ser::{Serialize, SerializeSeq, Serializer};

use crate::params::ParameterSetting;
use crate::scalar::Scalar;

/// Expected number of visits of one vehicle type to one cell.
#[derive(Debug, Clone, PartialEq)]
pub enum Visits<T> {
    Finite(T),
    /// Exempt types circulate forever.
    Infinite,
}

impl<T> Visits<T> {
    pub fn finite(&self) -> Option<&T> {
        match self {
            Visits::Finite(v) => Some(v),
            Visits::Infinite => None,
        }
    }
}

/// `b[i][j]`: expected visits of a type-`j` vehicle to cell `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct VisitMatrix<T> {
    entries: Vec<Vec<Visits<T>>>,
}

impl<T: Scalar> VisitMatrix<T> {
    pub fn ring_size(&self) -> usize {
        self.entries.len()
    }

    pub fn get(&self, cell: usize, ty: usize) -> &Visits<T> {
        &self.entries[cell][ty]
    }

    pub fn finite(&self, cell: usize, ty: usize) -> Option<&T> {
        self.entries[cell][ty].finite()
    }

    /// Column `ty` is finite.
    pub fn is_finite_column(&self, ty: usize) -> bool {
        self.entries.iter().all(|row| row[ty].finite().is_some())
    }

    /// `B = max b[i][j]` over finite entries.
    pub fn max_finite(&self) -> T {
        self.entries
            .iter()
            .flatten()
            .filter_map(Visits::finite)
            .cloned()
            .fold(T::zero(), T::max_of)
    }

    /// Dense `f64` copy with `f64::INFINITY` for infinite entries.
    pub fn to_f64(&self) -> Vec<Vec<f64>> {
        self.entries
            .iter()
            .map(|row| {
                row.iter()
                    .map(|v| v.finite().map_or(f64::INFINITY, Scalar::as_f64))
                    .collect()
            })
            .collect()
    }

    /// `sum_j b[i][j] * x[j]` over types; infinite columns contribute only
    /// when `x[j]` is non-zero, in which case `None` is returned.
    pub fn weighted_row_sum(&self, cell: usize, x: &[T]) -> Option<T> {
        let mut acc = T::zero();
        for (ty, weight) in x.iter().enumerate() {
            if weight.is_zero() {
                continue;
            }
            acc = acc + self.finite(cell, ty)?.clone() * weight.clone();
        }
        Some(acc)
    }
}

// Rows of numbers, `null` for infinite entries.
impl<T: Scalar> Serialize for VisitMatrix<T> {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<Option<f64>>> = self
            .entries
            .iter()
            .map(|row| row.iter().map(|v| v.finite().map(Scalar::as_f64)).collect())
            .collect();
        let mut seq = serializer.serialize_seq(Some(rows.len()))?;
        for row in &rows {
            seq.serialize_element(row)?;
        }
        seq.end()
    }
}

/// Closed-form visit counts.
///
/// A type-`j` vehicle first reaches cell `i` after `d = ((i - j - 1) mod L) + 1`
/// steps, having survived the `d - 1` cells in between; each later visit
/// needs one more full lap. Summing the geometric series gives
/// `b[i][j] = prod_{s=1}^{d-1} (1 - q[j+s][j]) / (1 - prod_cells (1 - q[.][j]))`.
pub fn visit_matrix<T: Scalar>(ps: &ParameterSetting<T>) -> VisitMatrix<T> {
    let l = ps.ring_size();
    let mut entries = vec![Vec::with_capacity(l); l];
    for ty in 0..l {
        if ps.is_exempt(ty) {
            for row in entries.iter_mut() {
                row.push(Visits::Infinite);
            }
            continue;
        }
        let denominator = T::one() - ps.cycle_survival(ty);
        // survival[d - 1] = probability of reaching the d-th cell on the first lap
        let mut survival = T::one();
        let mut first_lap = vec![T::zero(); l];
        for d in 1..=l {
            let cell = (ty + d) % l;
            first_lap[cell] = survival.clone();
            survival = survival * (T::one() - ps.departure(cell, ty).clone());
        }
        for (cell, row) in entries.iter_mut().enumerate() {
            row.push(Visits::Finite(
                first_lap[cell].clone() / denominator.clone(),
            ));
        }
    }
    VisitMatrix { entries }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::{ratio, Exact};

    fn exact(p: [(i64, i64); 2], q: [[(i64, i64); 2]; 2]) -> ParameterSetting<Exact> {
        ParameterSetting::new(
            p.iter().map(|&(a, b)| ratio(a, b)).collect(),
            q.iter()
                .map(|row| row.iter().map(|&(a, b)| ratio(a, b)).collect())
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn single_cell_is_reciprocal_of_q() {
        let ps = ParameterSetting::new(vec![ratio(0, 1)], vec![vec![ratio(3, 4)]]).unwrap();
        assert_eq!(visit_matrix(&ps).finite(0, 0), Some(&ratio(4, 3)));
    }

    #[test]
    fn two_cell_figure_setting() {
        let ps = exact([(3, 10), (3, 10)], [[(3, 4), (3, 4)], [(1, 2), (1, 2)]]);
        let b = visit_matrix(&ps);
        assert_eq!(b.finite(0, 0), Some(&ratio(4, 7)));
        assert_eq!(b.finite(1, 0), Some(&ratio(8, 7)));
        assert_eq!(b.finite(0, 1), Some(&ratio(8, 7)));
        assert_eq!(b.finite(1, 1), Some(&ratio(2, 7)));
        assert_eq!(b.max_finite(), ratio(8, 7));
    }

    #[test]
    fn two_cell_worked_formulas_for_type_two() {
        // b12 = 1 / (1 - (1-q12)(1-q22)), b22 = (1-q12) b12
        let ps = exact([(0, 1), (0, 1)], [[(1, 3), (2, 5)], [(1, 2), (1, 7)]]);
        let b = visit_matrix(&ps);
        let q12 = ratio(2, 5);
        let q22 = ratio(1, 7);
        let one = ratio(1, 1);
        let b12 = one.clone() / (one.clone() - (one.clone() - &q12) * (one.clone() - &q22));
        assert_eq!(b.finite(0, 1), Some(&b12));
        assert_eq!(b.finite(1, 1), Some(&((one - q12) * b12)));
    }

    #[test]
    fn certain_departure_gives_swap() {
        let ps = exact([(0, 1), (0, 1)], [[(1, 1), (1, 1)], [(1, 1), (1, 1)]]);
        let b = visit_matrix(&ps);
        let got: Vec<Vec<Exact>> = (0..2)
            .map(|i| (0..2).map(|j| b.finite(i, j).unwrap().clone()).collect())
            .collect();
        assert_eq!(
            got,
            vec![vec![ratio(0, 1), ratio(1, 1)], vec![ratio(1, 1), ratio(0, 1)]]
        );
    }

    #[test]
    fn exempt_columns_are_infinite() {
        let ps = ParameterSetting::with_exempt_types(
            vec![0.0, 0.3],
            vec![vec![0.0, 1.0], vec![0.0, 1.0]],
            [0],
        )
        .unwrap();
        let b = visit_matrix(&ps);
        assert_eq!(b.get(1, 0), &Visits::Infinite);
        assert!(!b.is_finite_column(0));
        assert_eq!(b.weighted_row_sum(0, &[0.0, 0.3]), Some(0.3));
        assert_eq!(b.weighted_row_sum(0, &[0.1, 0.3]), None);
        assert_eq!(b.to_f64()[0][0], f64::INFINITY);
    }
}
