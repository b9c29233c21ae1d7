//! Compensated summation for grid-wide reductions.
//!
//! Reductions over a lattice accumulate millions of terms with heavy
//! cancellation, so plain `f64` addition would leak rounding error into the
//! residual norms this crate exists to measure. All grid totals go through a
//! Neumaier accumulator in a fixed iteration order, which also keeps reports
//! byte-identical run to run.

/// Neumaier variant of Kahan summation.
#[derive(Debug, Clone, Copy, Default)]
pub struct Accumulator {
    sum: f64,
    compensation: f64,
}

impl Accumulator {
    #[must_use]
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, value: f64) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.compensation += (self.sum - t) + value;
        } else {
            self.compensation += (value - t) + self.sum;
        }
        self.sum = t;
    }

    #[must_use]
    pub fn total(&self) -> f64 {
        self.sum + self.compensation
    }
}

/// Compensated sum of an iterator in its own order.
#[must_use]
pub fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut acc = Accumulator::new();
    for v in values {
        acc.add(v);
    }
    acc.total()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_cancellation_that_naive_sum_loses() {
        let values = [1.0, 1e100, 1.0, -1e100];
        let naive: f64 = values.iter().sum();
        assert_eq!(naive, 0.0);
        assert_eq!(compensated_sum(values), 2.0);
    }

    #[test]
    fn matches_exact_sum_of_many_small_terms() {
        let n = 100_000;
        let total = compensated_sum((0..n).map(|_| 0.1));
        assert!((total - n as f64 * 0.1).abs() < 1e-9);
    }
}
