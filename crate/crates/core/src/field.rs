//! Tensor fields over a lattice, stored component-major.
//!
//! A field of rank r holds one `f64` per lattice point per component, laid out
//! as `values[comp * n_points + point]` so per-component slices stay
//! contiguous for the stencil and contraction loops.
//!
//! Two layouts exist. `Dense` enumerates all `4^r` components with the first
//! slot most significant. `SymPair` stores a symmetric rank-2 field (both
//! slots the same variance) as its 10 upper-triangle components; lookups with
//! swapped indices transparently hit the mirrored entry.

use crate::grid::{Grid, DIM};
use crate::sum::Accumulator;
use thiserror::Error;

/// Index position of a tensor slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variance {
    Up,
    Down,
}

impl Variance {
    #[must_use]
    pub fn flipped(self) -> Self {
        match self {
            Self::Up => Self::Down,
            Self::Down => Self::Up,
        }
    }
}

/// Component storage scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layout {
    Dense,
    SymPair,
}

/// Upper-triangle pairs `(a, b)` with `a <= b`, in storage order.
pub const SYM_PAIRS: [(usize, usize); 10] = [
    (0, 0),
    (0, 1),
    (0, 2),
    (0, 3),
    (1, 1),
    (1, 2),
    (1, 3),
    (2, 2),
    (2, 3),
    (3, 3),
];

/// Packed index for an unordered pair, `SYM_PACK[a][b] == SYM_PACK[b][a]`.
pub const SYM_PACK: [[usize; 4]; 4] = [[0, 1, 2, 3], [1, 4, 5, 6], [2, 5, 7, 8], [3, 6, 8, 9]];

/// Number of full-range index pairs a packed component represents: 1 on the
/// diagonal, 2 off it. Sums over all 16 ordered pairs of a symmetric object
/// reduce to packed sums weighted by this factor.
#[must_use]
pub fn sym_multiplicity(comp: usize) -> f64 {
    let (a, b) = SYM_PAIRS[comp];
    if a == b {
        1.0
    } else {
        2.0
    }
}

/// Highest tensor rank the dense layout supports.
pub const MAX_RANK: usize = 6;

#[derive(Debug, Error)]
pub enum FieldError {
    #[error("operands live on different grids")]
    GridMismatch,
    #[error("rank {rank} exceeds the supported maximum {MAX_RANK}")]
    RankTooHigh { rank: usize },
    #[error("symmetric pair layout requires rank 2 with equal variances")]
    BadSymPair,
    #[error("slot {slot} out of range for a rank-{rank} field")]
    SlotOutOfRange { slot: usize, rank: usize },
    #[error("slots {a} and {b} must carry opposite variances to contract")]
    ContractionVariance { a: usize, b: usize },
    #[error("slots {a} and {b} must carry equal variances to symmetrize")]
    SymmetrizeVariance { a: usize, b: usize },
    #[error("operand shapes differ: {left:?} vs {right:?}")]
    ShapeMismatch {
        left: Vec<Variance>,
        right: Vec<Variance>,
    },
    #[error("expected a scalar field, found rank {rank}")]
    NotScalar { rank: usize },
    #[error("metric operand must be a packed symmetric rank-2 field")]
    NotAMetric,
    #[error("metric has variance {metric:?} but slot {slot} has {found:?}; raising needs an Up metric on a Down slot and lowering the reverse")]
    MetricVariance {
        slot: usize,
        metric: Variance,
        found: Variance,
    },
    #[error("{0:?} is not a permutation of 0..{1}")]
    BadPermutation(Vec<usize>, usize),
    #[error("packing requires a dense rank-2 field with equal variances")]
    PackShape,
}

/// A tensor field over a periodic lattice.
#[derive(Debug, Clone)]
pub struct TensorField {
    grid: Grid,
    variances: Vec<Variance>,
    layout: Layout,
    values: Vec<f64>,
}

fn dense_comp_count(rank: usize) -> usize {
    DIM.pow(rank as u32)
}

fn dense_multi(mut comp: usize, rank: usize) -> [usize; MAX_RANK] {
    let mut multi = [0usize; MAX_RANK];
    for slot in (0..rank).rev() {
        multi[slot] = comp % DIM;
        comp /= DIM;
    }
    multi
}

impl TensorField {
    pub fn zeros(grid: &Grid, variances: &[Variance], layout: Layout) -> Result<Self, FieldError> {
        if variances.len() > MAX_RANK {
            return Err(FieldError::RankTooHigh {
                rank: variances.len(),
            });
        }
        if layout == Layout::SymPair && !(variances.len() == 2 && variances[0] == variances[1]) {
            return Err(FieldError::BadSymPair);
        }
        let n_comps = match layout {
            Layout::Dense => dense_comp_count(variances.len()),
            Layout::SymPair => SYM_PAIRS.len(),
        };
        Ok(Self {
            grid: grid.clone(),
            variances: variances.to_vec(),
            layout,
            values: vec![0.0; n_comps * grid.n_points()],
        })
    }

    #[must_use]
    pub fn scalar(grid: &Grid) -> Self {
        Self::zeros(grid, &[], Layout::Dense).expect("rank-0 field is always valid")
    }

    /// Builds a field by evaluating `f(position, multi_index)` at every point.
    /// For the packed layout the multi-index runs over upper-triangle pairs.
    pub fn from_fn(
        grid: &Grid,
        variances: &[Variance],
        layout: Layout,
        mut f: impl FnMut(&[f64; DIM], &[usize]) -> f64,
    ) -> Result<Self, FieldError> {
        let mut field = Self::zeros(grid, variances, layout)?;
        let rank = field.rank();
        let n_points = grid.n_points();
        for comp in 0..field.n_comps() {
            let multi = field.comp_multi(comp);
            let slice = field.comp_mut(comp);
            for point in 0..n_points {
                slice[point] = f(&grid.position(point), &multi[..rank]);
            }
        }
        Ok(field)
    }

    /// Constant Minkowski metric `diag(1, -1, -1, -1)` in the packed layout.
    #[must_use]
    pub fn eta(grid: &Grid, variance: Variance) -> Self {
        let mut field = Self::zeros(grid, &[variance, variance], Layout::SymPair)
            .expect("packed rank-2 field is always valid");
        for comp in 0..SYM_PAIRS.len() {
            let (a, b) = SYM_PAIRS[comp];
            let value = if a != b {
                0.0
            } else if a == 0 {
                1.0
            } else {
                -1.0
            };
            field.comp_mut(comp).fill(value);
        }
        field
    }

    /// Constant identity tensor with slots `[Up, Down]`.
    #[must_use]
    pub fn kronecker(grid: &Grid) -> Self {
        let mut field = Self::zeros(grid, &[Variance::Up, Variance::Down], Layout::Dense)
            .expect("rank-2 dense field is always valid");
        for a in 0..DIM {
            field.comp_mut(a * DIM + a).fill(1.0);
        }
        field
    }

    #[must_use]
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    #[must_use]
    pub fn rank(&self) -> usize {
        self.variances.len()
    }

    #[must_use]
    pub fn variances(&self) -> &[Variance] {
        &self.variances
    }

    #[must_use]
    pub fn layout(&self) -> Layout {
        self.layout
    }

    #[must_use]
    pub fn n_comps(&self) -> usize {
        match self.layout {
            Layout::Dense => dense_comp_count(self.rank()),
            Layout::SymPair => SYM_PAIRS.len(),
        }
    }

    /// Multi-index of a stored component, padded with zeros past the rank.
    #[must_use]
    pub fn comp_multi(&self, comp: usize) -> [usize; MAX_RANK] {
        match self.layout {
            Layout::Dense => dense_multi(comp, self.rank()),
            Layout::SymPair => {
                let (a, b) = SYM_PAIRS[comp];
                let mut multi = [0usize; MAX_RANK];
                multi[0] = a;
                multi[1] = b;
                multi
            }
        }
    }

    /// Storage index for a full multi-index; symmetric layouts accept either
    /// slot order.
    #[must_use]
    pub fn comp_of(&self, multi: &[usize]) -> usize {
        debug_assert_eq!(multi.len(), self.rank());
        match self.layout {
            Layout::Dense => multi.iter().fold(0, |acc, &i| acc * DIM + i),
            Layout::SymPair => SYM_PACK[multi[0]][multi[1]],
        }
    }

    #[must_use]
    pub fn comp(&self, comp: usize) -> &[f64] {
        let n = self.grid.n_points();
        &self.values[comp * n..(comp + 1) * n]
    }

    pub fn comp_mut(&mut self, comp: usize) -> &mut [f64] {
        let n = self.grid.n_points();
        &mut self.values[comp * n..(comp + 1) * n]
    }

    /// Value at one point, resolving the layout.
    #[must_use]
    pub fn get(&self, multi: &[usize], point: usize) -> f64 {
        self.comp(self.comp_of(multi))[point]
    }

    fn check_same_shape(&self, other: &Self) -> Result<(), FieldError> {
        if !self.grid.same_shape(&other.grid) {
            return Err(FieldError::GridMismatch);
        }
        if self.variances != other.variances || self.layout != other.layout {
            return Err(FieldError::ShapeMismatch {
                left: self.variances.clone(),
                right: other.variances.clone(),
            });
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self, FieldError> {
        self.check_same_shape(other)?;
        let mut out = self.clone();
        for (o, v) in out.values.iter_mut().zip(&other.values) {
            *o += v;
        }
        Ok(out)
    }

    pub fn sub(&self, other: &Self) -> Result<Self, FieldError> {
        self.check_same_shape(other)?;
        let mut out = self.clone();
        for (o, v) in out.values.iter_mut().zip(&other.values) {
            *o -= v;
        }
        Ok(out)
    }

    /// `self + factor * other`, in place.
    pub fn axpy(&mut self, factor: f64, other: &Self) -> Result<(), FieldError> {
        self.check_same_shape(other)?;
        for (o, v) in self.values.iter_mut().zip(&other.values) {
            *o += factor * v;
        }
        Ok(())
    }

    #[must_use]
    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        for v in &mut out.values {
            *v *= factor;
        }
        out
    }

    /// Pointwise product with a scalar field.
    pub fn mul_scalar_field(&self, scalar: &Self) -> Result<Self, FieldError> {
        if scalar.rank() != 0 {
            return Err(FieldError::NotScalar {
                rank: scalar.rank(),
            });
        }
        if !self.grid.same_shape(&scalar.grid) {
            return Err(FieldError::GridMismatch);
        }
        let mut out = self.clone();
        let s = scalar.comp(0);
        for comp in 0..out.n_comps() {
            let slice = out.comp_mut(comp);
            for (o, w) in slice.iter_mut().zip(s) {
                *o *= w;
            }
        }
        Ok(out)
    }

    /// Tensor product; output slots are `self`'s followed by `other`'s.
    pub fn outer(&self, other: &Self) -> Result<Self, FieldError> {
        self.contract_between(other, &[])
    }

    /// Trace over two opposite-variance slots of this field.
    pub fn contract(&self, a: usize, b: usize) -> Result<Self, FieldError> {
        let rank = self.rank();
        for slot in [a, b] {
            if slot >= rank {
                return Err(FieldError::SlotOutOfRange { slot, rank });
            }
        }
        if a == b || self.variances[a] == self.variances[b] {
            return Err(FieldError::ContractionVariance { a, b });
        }
        let keep: Vec<usize> = (0..rank).filter(|&s| s != a && s != b).collect();
        let out_variances: Vec<Variance> = keep.iter().map(|&s| self.variances[s]).collect();
        let mut out = Self::zeros(&self.grid, &out_variances, Layout::Dense)?;
        let n_points = self.grid.n_points();
        for out_comp in 0..out.n_comps() {
            let out_multi = dense_multi(out_comp, keep.len());
            let mut multi = [0usize; MAX_RANK];
            for (i, &s) in keep.iter().enumerate() {
                multi[s] = out_multi[i];
            }
            let mut acc = vec![0.0f64; n_points];
            for k in 0..DIM {
                multi[a] = k;
                multi[b] = k;
                let src = self.comp(self.comp_of(&multi[..rank]));
                for (o, v) in acc.iter_mut().zip(src) {
                    *o += v;
                }
            }
            out.comp_mut(out_comp).copy_from_slice(&acc);
        }
        Ok(out)
    }

    /// Contracts paired slots between two fields. Each pair is
    /// `(slot_in_self, slot_in_other)` and must join opposite variances.
    /// Output slots are the uncontracted slots of `self` followed by those of
    /// `other`; an empty pair list is the tensor product.
    pub fn contract_between(
        &self,
        other: &Self,
        pairs: &[(usize, usize)],
    ) -> Result<Self, FieldError> {
        if !self.grid.same_shape(&other.grid) {
            return Err(FieldError::GridMismatch);
        }
        let (ra, rb) = (self.rank(), other.rank());
        let mut used_a = [false; MAX_RANK];
        let mut used_b = [false; MAX_RANK];
        for &(sa, sb) in pairs {
            if sa >= ra {
                return Err(FieldError::SlotOutOfRange { slot: sa, rank: ra });
            }
            if sb >= rb {
                return Err(FieldError::SlotOutOfRange { slot: sb, rank: rb });
            }
            if used_a[sa] || used_b[sb] || self.variances[sa] == other.variances[sb] {
                return Err(FieldError::ContractionVariance { a: sa, b: sb });
            }
            used_a[sa] = true;
            used_b[sb] = true;
        }
        let keep_a: Vec<usize> = (0..ra).filter(|&s| !used_a[s]).collect();
        let keep_b: Vec<usize> = (0..rb).filter(|&s| !used_b[s]).collect();
        let mut out_variances = Vec::with_capacity(keep_a.len() + keep_b.len());
        out_variances.extend(keep_a.iter().map(|&s| self.variances[s]));
        out_variances.extend(keep_b.iter().map(|&s| other.variances[s]));
        let mut out = Self::zeros(&self.grid, &out_variances, Layout::Dense)?;
        let out_rank = out_variances.len();
        let n_points = self.grid.n_points();
        let n_combos = dense_comp_count(pairs.len());
        for out_comp in 0..out.n_comps() {
            let out_multi = dense_multi(out_comp, out_rank);
            let mut multi_a = [0usize; MAX_RANK];
            let mut multi_b = [0usize; MAX_RANK];
            for (i, &s) in keep_a.iter().enumerate() {
                multi_a[s] = out_multi[i];
            }
            for (i, &s) in keep_b.iter().enumerate() {
                multi_b[s] = out_multi[keep_a.len() + i];
            }
            let mut acc = vec![0.0f64; n_points];
            for combo in 0..n_combos {
                let ks = dense_multi(combo, pairs.len());
                for (i, &(sa, sb)) in pairs.iter().enumerate() {
                    multi_a[sa] = ks[i];
                    multi_b[sb] = ks[i];
                }
                let lhs = self.comp(self.comp_of(&multi_a[..ra]));
                let rhs = other.comp(other.comp_of(&multi_b[..rb]));
                for p in 0..n_points {
                    acc[p] += lhs[p] * rhs[p];
                }
            }
            out.comp_mut(out_comp).copy_from_slice(&acc);
        }
        Ok(out)
    }

    /// Raises or lowers one slot with a packed symmetric metric, keeping the
    /// slot in place. The metric's variance must oppose the slot's; the result
    /// slot takes the metric's variance.
    pub fn apply_metric(&self, slot: usize, metric: &Self) -> Result<Self, FieldError> {
        let rank = self.rank();
        if slot >= rank {
            return Err(FieldError::SlotOutOfRange { slot, rank });
        }
        if metric.layout != Layout::SymPair {
            return Err(FieldError::NotAMetric);
        }
        if !self.grid.same_shape(&metric.grid) {
            return Err(FieldError::GridMismatch);
        }
        let mv = metric.variances[0];
        if mv == self.variances[slot] {
            return Err(FieldError::MetricVariance {
                slot,
                metric: mv,
                found: self.variances[slot],
            });
        }
        let mut out_variances = self.variances.clone();
        out_variances[slot] = mv;
        let mut out = Self::zeros(&self.grid, &out_variances, Layout::Dense)?;
        let n_points = self.grid.n_points();
        for out_comp in 0..out.n_comps() {
            let mut multi = dense_multi(out_comp, rank);
            let s = multi[slot];
            let mut acc = vec![0.0f64; n_points];
            for k in 0..DIM {
                multi[slot] = k;
                let src = self.comp(self.comp_of(&multi[..rank]));
                let m = metric.comp(SYM_PACK[s][k]);
                for p in 0..n_points {
                    acc[p] += m[p] * src[p];
                }
            }
            out.comp_mut(out_comp).copy_from_slice(&acc);
        }
        Ok(out)
    }

    /// Reorders slots; `perm[i]` names the slot of `self` that becomes output
    /// slot `i`.
    pub fn permute(&self, perm: &[usize]) -> Result<Self, FieldError> {
        let rank = self.rank();
        let mut seen = [false; MAX_RANK];
        if perm.len() != rank
            || perm
                .iter()
                .any(|&s| s >= rank || std::mem::replace(&mut seen[s], true))
        {
            return Err(FieldError::BadPermutation(perm.to_vec(), rank));
        }
        let out_variances: Vec<Variance> = perm.iter().map(|&s| self.variances[s]).collect();
        let mut out = Self::zeros(&self.grid, &out_variances, Layout::Dense)?;
        for out_comp in 0..out.n_comps() {
            let out_multi = dense_multi(out_comp, rank);
            let mut multi = [0usize; MAX_RANK];
            for i in 0..rank {
                multi[perm[i]] = out_multi[i];
            }
            out.comp_mut(out_comp)
                .copy_from_slice(self.comp(self.comp_of(&multi[..rank])));
        }
        Ok(out)
    }

    /// Symmetrizes over two equal-variance slots: `(f[..a..b..] + f[..b..a..]) / 2`.
    pub fn symmetrize_pair(&self, a: usize, b: usize) -> Result<Self, FieldError> {
        let rank = self.rank();
        for slot in [a, b] {
            if slot >= rank {
                return Err(FieldError::SlotOutOfRange { slot, rank });
            }
        }
        if a == b || self.variances[a] != self.variances[b] {
            return Err(FieldError::SymmetrizeVariance { a, b });
        }
        let mut out = Self::zeros(&self.grid, &self.variances, Layout::Dense)?;
        let n_points = self.grid.n_points();
        for out_comp in 0..out.n_comps() {
            let mut multi = dense_multi(out_comp, rank);
            let direct = self.comp(self.comp_of(&multi[..rank]));
            multi.swap(a, b);
            let swapped = self.comp(self.comp_of(&multi[..rank]));
            let dst = out.comp_mut(out_comp);
            for p in 0..n_points {
                dst[p] = 0.5 * (direct[p] + swapped[p]);
            }
        }
        Ok(out)
    }

    /// Packs a dense symmetric rank-2 field into the paired layout, keeping
    /// upper-triangle values.
    pub fn pack_sym(&self) -> Result<Self, FieldError> {
        if self.layout != Layout::Dense
            || self.rank() != 2
            || self.variances[0] != self.variances[1]
        {
            return Err(FieldError::PackShape);
        }
        let mut out = Self::zeros(&self.grid, &self.variances, Layout::SymPair)?;
        for comp in 0..SYM_PAIRS.len() {
            let (a, b) = SYM_PAIRS[comp];
            out.comp_mut(comp).copy_from_slice(self.comp(a * DIM + b));
        }
        Ok(out)
    }

    /// Expands a packed field to dense storage with mirrored components.
    #[must_use]
    pub fn expand_sym(&self) -> Self {
        if self.layout == Layout::Dense {
            return self.clone();
        }
        let mut out = Self::zeros(&self.grid, &self.variances, Layout::Dense)
            .expect("dense rank-2 field is always valid");
        for a in 0..DIM {
            for b in 0..DIM {
                out.comp_mut(a * DIM + b)
                    .copy_from_slice(self.comp(SYM_PACK[a][b]));
            }
        }
        out
    }

    /// Largest absolute entry.
    #[must_use]
    pub fn linf(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Discrete L2 norm, `sqrt(cell_volume * sum over points and full
    /// components of f^2)`. Packed off-diagonal components count twice so both
    /// layouts of the same tensor agree.
    #[must_use]
    pub fn l2(&self) -> f64 {
        let mut acc = Accumulator::new();
        for comp in 0..self.n_comps() {
            let weight = match self.layout {
                Layout::Dense => 1.0,
                Layout::SymPair => sym_multiplicity(comp),
            };
            for v in self.comp(comp) {
                acc.add(weight * v * v);
            }
        }
        (self.grid.cell_volume() * acc.total()).sqrt()
    }

    #[must_use]
    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Compensated integral of a scalar field over the lattice.
    pub fn total(&self) -> Result<f64, FieldError> {
        if self.rank() != 0 {
            return Err(FieldError::NotScalar { rank: self.rank() });
        }
        let mut acc = Accumulator::new();
        for v in self.comp(0) {
            acc.add(*v);
        }
        Ok(acc.total() * self.grid.cell_volume())
    }
}
