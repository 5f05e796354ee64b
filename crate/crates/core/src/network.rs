//! Customer classes and routing of the multiclass network formulation.
//!
//! Station `i` serves `L + 1` classes: the entry class `(i, 0)` fed by
//! exogenous arrivals, and one ring class per vehicle type. A flat class index
//! is `station * (L + 1) + column` where column 0 is the entry class and
//! column `ty + 1` the ring class of type `ty`.

use crate::error::{Error, Result};
use crate::linalg;
use crate::params::ParameterSetting;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClassSpace {
    ring_size: usize,
}

impl ClassSpace {
    pub fn new(ring_size: usize) -> Self {
        Self { ring_size }
    }

    pub fn ring_size(&self) -> usize {
        self.ring_size
    }

    pub fn len(&self) -> usize {
        self.ring_size * (self.ring_size + 1)
    }

    pub fn is_empty(&self) -> bool {
        self.ring_size == 0
    }

    pub fn columns(&self) -> usize {
        self.ring_size + 1
    }

    pub fn entry(&self, station: usize) -> usize {
        station * self.columns()
    }

    pub fn ring(&self, station: usize, ty: usize) -> usize {
        station * self.columns() + ty + 1
    }

    /// `(station, column)` of a flat index.
    pub fn decode(&self, class: usize) -> (usize, usize) {
        (class / self.columns(), class % self.columns())
    }

    pub fn next_station(&self, station: usize) -> usize {
        (station + 1) % self.ring_size
    }

    /// Where a served customer of `class` goes next, when it stays in the
    /// network.
    pub fn successor(&self, class: usize) -> usize {
        let (station, column) = self.decode(class);
        let next = self.next_station(station);
        if column == 0 {
            self.ring(next, station)
        } else {
            self.ring(next, column - 1)
        }
    }

    /// 1-based `(i,j)` label.
    pub fn label(&self, class: usize) -> String {
        let (station, column) = self.decode(class);
        format!("({},{})", station + 1, column)
    }
}

/// Dense routing matrix `P[(i,j)][(k,l)]`.
pub fn routing_matrix<T: Scalar>(ps: &ParameterSetting<T>) -> Vec<Vec<T>> {
    let space = ClassSpace::new(ps.ring_size());
    let n = space.len();
    let mut p = vec![vec![T::zero(); n]; n];
    for class in 0..n {
        let (station, column) = space.decode(class);
        let stay = if column == 0 {
            T::one()
        } else {
            T::one() - ps.departure(station, column - 1).clone()
        };
        p[class][space.successor(class)] = stay;
    }
    p
}

/// Classes that carry traffic: every entry class and the ring classes of
/// non-exempt types. Exempt types never leave, so their ring classes make
/// `I - P^T` singular and are excluded.
pub fn active_classes<T: Scalar>(ps: &ParameterSetting<T>) -> Vec<usize> {
    let space = ClassSpace::new(ps.ring_size());
    (0..space.len())
        .filter(|&c| {
            let (_, column) = space.decode(c);
            column == 0 || !ps.is_exempt(column - 1)
        })
        .collect()
}

/// Solves `(I - P^T) y = rhs` over the class space by a dense linear solve.
///
/// Entries of `rhs` on ring classes of exempt types, and on entry classes of
/// exempt types, must be zero.
pub fn solve_traffic<T: Scalar>(ps: &ParameterSetting<T>, rhs: &[T]) -> Result<Vec<T>> {
    let space = ClassSpace::new(ps.ring_size());
    if rhs.len() != space.len() {
        return Err(Error::Dimension {
            what: "class vector".into(),
            expected: space.len(),
            found: rhs.len(),
        });
    }
    let active = active_classes(ps);
    for (class, value) in rhs.iter().enumerate() {
        let (station, column) = space.decode(class);
        let exempt_type = if column == 0 {
            ps.is_exempt(station)
        } else {
            ps.is_exempt(column - 1)
        };
        if exempt_type && !value.is_zero() {
            return Err(Error::InfiniteLoad {
                vehicle_type: if column == 0 { station + 1 } else { column },
            });
        }
    }
    let routing = routing_matrix(ps);
    let m = active.len();
    let mut a = vec![vec![T::zero(); m]; m];
    for (r, &row_class) in active.iter().enumerate() {
        for (c, &col_class) in active.iter().enumerate() {
            let identity = if r == c { T::one() } else { T::zero() };
            // (I - P^T)[row][col] = I - P[col][row]
            a[r][c] = identity - routing[col_class][row_class].clone();
        }
    }
    let b: Vec<T> = active.iter().map(|&c| rhs[c].clone()).collect();
    let y = linalg::solve(a, b).ok_or(Error::SingularSystem)?;
    let mut out = vec![T::zero(); space.len()];
    for (value, &class) in y.into_iter().zip(&active) {
        out[class] = value;
    }
    Ok(out)
}

/// `C y`: per-station totals of a class vector.
pub fn station_totals<T: Scalar>(space: ClassSpace, classes: &[T]) -> Vec<T> {
    classes
        .chunks(space.columns())
        .map(|chunk| chunk.iter().cloned().fold(T::zero(), |a, b| a + b))
        .collect()
}
