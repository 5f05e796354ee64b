use crate::scalar::Scalar;

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
///
/// Returns `None` when a pivot vanishes (exactly, or below `1e-300` in
/// magnitude for floating point types).
pub fn solve<T: Scalar>(mut a: Vec<Vec<T>>, mut b: Vec<T>) -> Option<Vec<T>> {
    let n = b.len();
    debug_assert!(a.len() == n && a.iter().all(|row| row.len() == n));
    for col in 0..n {
        let pivot_row = (col..n).max_by(|&r, &s| {
            a[r][col]
                .abs()
                .partial_cmp(&a[s][col].abs())
                .unwrap_or(std::cmp::Ordering::Equal)
        })?;
        let pivot = a[pivot_row][col].clone();
        if pivot.is_zero() || pivot.abs().as_f64() < 1e-300 {
            return None;
        }
        a.swap(col, pivot_row);
        b.swap(col, pivot_row);
        for row in col + 1..n {
            if a[row][col].is_zero() {
                continue;
            }
            let factor = a[row][col].clone() / pivot.clone();
            for k in col..n {
                let delta = factor.clone() * a[col][k].clone();
                a[row][k] = a[row][k].clone() - delta;
            }
            let delta = factor * b[col].clone();
            b[row] = b[row].clone() - delta;
        }
    }
    let mut x = vec![T::zero(); n];
    for row in (0..n).rev() {
        let mut acc = b[row].clone();
        for k in row + 1..n {
            acc = acc - a[row][k].clone() * x[k].clone();
        }
        x[row] = acc / a[row][row].clone();
    }
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::{ratio, Exact};

    #[test]
    fn solves_small_system_exactly() {
        let a = vec![
            vec![ratio(2, 1), ratio(1, 1)],
            vec![ratio(1, 1), ratio(3, 1)],
        ];
        let x: Vec<Exact> = solve(a, vec![ratio(3, 1), ratio(5, 1)]).unwrap();
        assert_eq!(x, vec![ratio(4, 5), ratio(7, 5)]);
    }

    #[test]
    fn needs_pivoting() {
        let a = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
        assert_eq!(solve(a, vec![2.0, 3.0]).unwrap(), vec![3.0, 2.0]);
    }

    #[test]
    fn singular_is_none() {
        let a = vec![vec![1.0, 2.0], vec![2.0, 4.0]];
        assert!(solve(a, vec![1.0, 1.0]).is_none());
    }
}
