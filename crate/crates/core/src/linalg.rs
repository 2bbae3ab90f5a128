//! Dense Cholesky factorization on a packed lower triangle.
//!
//! Rows are stored contiguously (`row i` holds `L[i][0..=i]`), which keeps the
//! forward substitution used on every flow query a sequence of contiguous dot
//! products.

#[allow(unused_imports)]
use num_traits::Float;
use alloc::vec;
use alloc::vec::Vec;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("matrix is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },
    #[error("matrix is not positive definite after jitter escalation to {jitter:e}")]
    JitterExhausted { jitter: f64 },
}

/// Lower Cholesky factor `L` with `A = L L^T`.
#[derive(Debug, Clone, PartialEq)]
pub struct Cholesky {
    n: usize,
    packed: Vec<f64>,
}

#[inline]
fn row_start(i: usize) -> usize {
    i * (i + 1) / 2
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

impl Cholesky {
    /// Factor a symmetric matrix given by `entry(i, j)` for `j <= i`.
    pub fn factor(n: usize, entry: impl Fn(usize, usize) -> f64) -> Result<Self, LinalgError> {
        let mut packed = vec![0.0; row_start(n)];
        for i in 0..n {
            let ri = row_start(i);
            for j in 0..=i {
                let rj = row_start(j);
                let s = entry(i, j) - dot(&packed[ri..ri + j], &packed[rj..rj + j]);
                if i == j {
                    if s <= 0.0 || !s.is_finite() {
                        return Err(LinalgError::NotPositiveDefinite { pivot: i, value: s });
                    }
                    packed[ri + i] = s.sqrt();
                } else {
                    packed[ri + j] = s / packed[rj + j];
                }
            }
        }
        Ok(Self { n, packed })
    }

    /// Factor `A + jitter I`, multiplying the jitter by ten on failure.
    ///
    /// Returns the factor and the jitter that was finally used.
    pub fn factor_with_jitter(
        n: usize,
        entry: impl Fn(usize, usize) -> f64,
        initial_jitter: f64,
        max_tries: usize,
    ) -> Result<(Self, f64), LinalgError> {
        let mut jitter = initial_jitter;
        for _ in 0..max_tries.max(1) {
            let res = Self::factor(n, |i, j| {
                if i == j {
                    entry(i, j) + jitter
                } else {
                    entry(i, j)
                }
            });
            if let Ok(chol) = res {
                return Ok((chol, jitter));
            }
            jitter *= 10.0;
        }
        Err(LinalgError::JitterExhausted { jitter: jitter / 10.0 })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if j > i {
            0.0
        } else {
            self.packed[row_start(i) + j]
        }
    }

    /// Solve `L x = b` in place.
    pub fn solve_lower_in_place(&self, b: &mut [f64]) {
        debug_assert_eq!(b.len(), self.n);
        for i in 0..self.n {
            let ri = row_start(i);
            let s = b[i] - dot(&self.packed[ri..ri + i], &b[..i]);
            b[i] = s / self.packed[ri + i];
        }
    }

    /// Solve `L^T x = b` in place.
    pub fn solve_upper_in_place(&self, b: &mut [f64]) {
        debug_assert_eq!(b.len(), self.n);
        for i in (0..self.n).rev() {
            let xi = b[i] / self.packed[row_start(i) + i];
            b[i] = xi;
            for (j, bj) in b.iter_mut().enumerate().take(i) {
                *bj -= self.packed[row_start(i) + j] * xi;
            }
        }
    }

    /// Solve `A x = b` in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        self.solve_lower_in_place(b);
        self.solve_upper_in_place(b);
    }

    /// `ln det A = 2 sum ln L_ii`.
    pub fn log_det(&self) -> f64 {
        (0..self.n)
            .map(|i| self.packed[row_start(i) + i].ln())
            .fold(0.0, |a, b| a + b)
            * 2.0
    }
}
