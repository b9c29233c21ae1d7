//! Periodic four-dimensional lattice: axis sizes, spacings, and point indexing.
//!
//! Points are stored in row-major order with axis 3 fastest. Every axis is
//! periodic. An axis of size 1 is degenerate: fields are constant along it and
//! derivatives along it are identically zero.

use thiserror::Error;

/// Spacetime dimension. Fixed at four throughout the crate.
pub const DIM: usize = 4;

#[derive(Debug, Error, PartialEq)]
pub enum GridError {
    #[error("axis {axis} has {size} points; an order-{order} stencil needs at least {min} (or exactly 1 for a degenerate axis)")]
    AxisTooSmall {
        axis: usize,
        size: usize,
        min: usize,
        order: usize,
    },
    #[error("axis {axis} has invalid spacing {spacing}; spacings must be positive and finite")]
    BadSpacing { axis: usize, spacing: f64 },
}

/// Truncation order of the centered first-derivative stencil.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StencilOrder {
    Two,
    Four,
}

impl StencilOrder {
    #[must_use]
    pub const fn order(self) -> usize {
        match self {
            Self::Two => 2,
            Self::Four => 4,
        }
    }

    /// Largest neighbor offset the stencil reads.
    #[must_use]
    pub const fn reach(self) -> usize {
        match self {
            Self::Two => 1,
            Self::Four => 2,
        }
    }

    /// Centered taps as (offset, weight) pairs; the application divides by the
    /// axis spacing once.
    #[must_use]
    pub fn taps(self) -> &'static [(isize, f64)] {
        match self {
            Self::Two => &[(-1, -0.5), (1, 0.5)],
            Self::Four => &[
                (-2, 1.0 / 12.0),
                (-1, -8.0 / 12.0),
                (1, 8.0 / 12.0),
                (2, -1.0 / 12.0),
            ],
        }
    }
}

/// A periodic lattice over `[0, L_i)` per axis with `L_i = size_i * spacing_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    sizes: [usize; DIM],
    spacings: [f64; DIM],
    order: StencilOrder,
    strides: [usize; DIM],
    n_points: usize,
}

impl Grid {
    pub fn new(
        sizes: [usize; DIM],
        spacings: [f64; DIM],
        order: StencilOrder,
    ) -> Result<Self, GridError> {
        let min = order.order() + 1;
        for axis in 0..DIM {
            if sizes[axis] != 1 && sizes[axis] < min {
                return Err(GridError::AxisTooSmall {
                    axis,
                    size: sizes[axis],
                    min,
                    order: order.order(),
                });
            }
            if !(spacings[axis] > 0.0 && spacings[axis].is_finite()) {
                return Err(GridError::BadSpacing {
                    axis,
                    spacing: spacings[axis],
                });
            }
        }
        let mut strides = [0usize; DIM];
        strides[DIM - 1] = 1;
        for axis in (0..DIM - 1).rev() {
            strides[axis] = strides[axis + 1] * sizes[axis + 1];
        }
        let n_points = sizes.iter().product();
        Ok(Self {
            sizes,
            spacings,
            order,
            strides,
            n_points,
        })
    }

    /// Lattice over `[0, 2*pi)` on every axis, with spacing `2*pi / size_i`.
    pub fn two_pi(sizes: [usize; DIM], order: StencilOrder) -> Result<Self, GridError> {
        let mut spacings = [0.0; DIM];
        for axis in 0..DIM {
            spacings[axis] = std::f64::consts::TAU / sizes[axis] as f64;
        }
        Self::new(sizes, spacings, order)
    }

    #[must_use]
    pub fn sizes(&self) -> [usize; DIM] {
        self.sizes
    }

    #[must_use]
    pub fn spacings(&self) -> [f64; DIM] {
        self.spacings
    }

    #[must_use]
    pub fn order(&self) -> StencilOrder {
        self.order
    }

    #[must_use]
    pub fn n_points(&self) -> usize {
        self.n_points
    }

    #[must_use]
    pub fn strides(&self) -> [usize; DIM] {
        self.strides
    }

    /// Axes with more than one point carry nontrivial derivatives.
    #[must_use]
    pub fn active_axes(&self) -> [bool; DIM] {
        [
            self.sizes[0] > 1,
            self.sizes[1] > 1,
            self.sizes[2] > 1,
            self.sizes[3] > 1,
        ]
    }

    /// Largest spacing among active axes. Falls back to the overall maximum on
    /// a fully degenerate grid.
    #[must_use]
    pub fn max_active_spacing(&self) -> f64 {
        let mut best = 0.0f64;
        for axis in 0..DIM {
            if self.sizes[axis] > 1 {
                best = best.max(self.spacings[axis]);
            }
        }
        if best == 0.0 {
            best = self.spacings.iter().cloned().fold(0.0, f64::max);
        }
        best
    }

    /// Volume of one lattice cell, the product of all four spacings.
    #[must_use]
    pub fn cell_volume(&self) -> f64 {
        self.spacings.iter().product()
    }

    #[must_use]
    pub fn index(&self, coords: [usize; DIM]) -> usize {
        debug_assert!((0..DIM).all(|a| coords[a] < self.sizes[a]));
        coords[0] * self.strides[0]
            + coords[1] * self.strides[1]
            + coords[2] * self.strides[2]
            + coords[3] * self.strides[3]
    }

    #[must_use]
    pub fn coords(&self, mut point: usize) -> [usize; DIM] {
        debug_assert!(point < self.n_points);
        let mut coords = [0usize; DIM];
        for axis in 0..DIM {
            coords[axis] = point / self.strides[axis];
            point %= self.strides[axis];
        }
        coords
    }

    /// Physical position of a lattice point.
    #[must_use]
    pub fn position(&self, point: usize) -> [f64; DIM] {
        let c = self.coords(point);
        [
            c[0] as f64 * self.spacings[0],
            c[1] as f64 * self.spacings[1],
            c[2] as f64 * self.spacings[2],
            c[3] as f64 * self.spacings[3],
        ]
    }

    /// Linear index of the point shifted by `offset` cells along `axis`, with
    /// periodic wraparound.
    #[must_use]
    pub fn shifted(&self, point: usize, axis: usize, offset: isize) -> usize {
        let n = self.sizes[axis] as isize;
        let coord = (point / self.strides[axis]) as isize % n;
        let wrapped = (coord + offset).rem_euclid(n);
        (point as isize + (wrapped - coord) * self.strides[axis] as isize) as usize
    }

    /// True when the two grids have identical shape, spacing, and order.
    #[must_use]
    pub fn same_shape(&self, other: &Self) -> bool {
        self == other
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_axis_below_stencil_support() {
        let err = Grid::two_pi([4, 4, 4, 4], StencilOrder::Four).unwrap_err();
        assert_eq!(
            err,
            GridError::AxisTooSmall {
                axis: 0,
                size: 4,
                min: 5,
                order: 4
            }
        );
    }

    #[test]
    fn accepts_degenerate_axes() {
        let g = Grid::two_pi([16, 16, 1, 1], StencilOrder::Two).unwrap();
        assert_eq!(g.n_points(), 256);
        assert_eq!(g.active_axes(), [true, true, false, false]);
    }

    #[test]
    fn rejects_bad_spacing() {
        let err = Grid::new([8, 8, 1, 1], [0.1, -0.5, 1.0, 1.0], StencilOrder::Two).unwrap_err();
        assert!(matches!(err, GridError::BadSpacing { axis: 1, .. }));
    }

    #[test]
    fn index_round_trip() {
        let g = Grid::two_pi([6, 4, 3, 5], StencilOrder::Two).unwrap();
        for p in 0..g.n_points() {
            assert_eq!(g.index(g.coords(p)), p);
        }
    }

    #[test]
    fn shift_wraps_periodically() {
        let g = Grid::two_pi([6, 4, 3, 5], StencilOrder::Two).unwrap();
        let p = g.index([5, 0, 2, 4]);
        assert_eq!(g.coords(g.shifted(p, 0, 1))[0], 0);
        assert_eq!(g.coords(g.shifted(p, 1, -1))[1], 3);
        assert_eq!(g.coords(g.shifted(p, 3, 2))[3], 1);
        for axis in 0..DIM {
            let n = g.sizes()[axis] as isize;
            assert_eq!(g.shifted(p, axis, n), p);
        }
    }

    #[test]
    fn cell_volume_covers_domain() {
        let g = Grid::two_pi([16, 16, 1, 1], StencilOrder::Two).unwrap();
        let total = g.cell_volume() * g.n_points() as f64;
        let expected = std::f64::consts::TAU.powi(4);
        assert!((total - expected).abs() < 1e-9 * expected);
    }
}
