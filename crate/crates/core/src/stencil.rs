//! Centered finite-difference operators on periodic tensor fields.

use crate::field::{FieldError, Layout, TensorField, Variance};
use crate::grid::DIM;

/// Partial derivative along one axis. The output keeps the input's layout and
/// variances; degenerate axes yield an identically zero derivative.
#[must_use]
pub fn partial_axis(field: &TensorField, axis: usize) -> TensorField {
    let grid = field.grid().clone();
    let mut out = TensorField::zeros(&grid, field.variances(), field.layout())
        .expect("shape already validated by the input field");
    if grid.sizes()[axis] == 1 {
        return out;
    }
    let taps = grid.order().taps();
    let inv_h = 1.0 / grid.spacings()[axis];
    let n_points = grid.n_points();
    for comp in 0..field.n_comps() {
        let src = field.comp(comp);
        let dst = out.comp_mut(comp);
        for point in 0..n_points {
            let mut acc = 0.0;
            for &(offset, weight) in taps {
                acc += weight * src[grid.shifted(point, axis, offset)];
            }
            dst[point] = acc * inv_h;
        }
    }
    out
}

/// Full gradient: appends one Down slot (the derivative direction) after the
/// input slots. Packed inputs are expanded, so the output is always dense.
#[must_use]
pub fn gradient(field: &TensorField) -> TensorField {
    let dense = field.expand_sym();
    let mut variances = dense.variances().to_vec();
    variances.push(Variance::Down);
    let mut out = TensorField::zeros(field.grid(), &variances, Layout::Dense)
        .expect("gradient raises rank by one within the supported maximum");
    for axis in 0..DIM {
        let d = partial_axis(&dense, axis);
        for comp in 0..dense.n_comps() {
            out.comp_mut(comp * DIM + axis)
                .copy_from_slice(d.comp(comp));
        }
    }
    out
}

/// Divergence over one Up slot of a dense field: contracts the derivative
/// direction with `slot` and removes it.
pub fn divergence(field: &TensorField, slot: usize) -> Result<TensorField, FieldError> {
    let dense = field.expand_sym();
    let rank = dense.rank();
    if slot >= rank {
        return Err(FieldError::SlotOutOfRange { slot, rank });
    }
    if dense.variances()[slot] != Variance::Up {
        return Err(FieldError::ContractionVariance { a: slot, b: slot });
    }
    let keep: Vec<usize> = (0..rank).filter(|&s| s != slot).collect();
    let out_variances: Vec<Variance> = keep.iter().map(|&s| dense.variances()[s]).collect();
    let mut out = TensorField::zeros(dense.grid(), &out_variances, Layout::Dense)?;
    for axis in 0..DIM {
        let d = partial_axis(&dense, axis);
        for out_comp in 0..out.n_comps() {
            let out_multi = out.comp_multi(out_comp);
            let mut multi = [0usize; crate::field::MAX_RANK];
            for (i, &s) in keep.iter().enumerate() {
                multi[s] = out_multi[i];
            }
            multi[slot] = axis;
            let src = d.comp(d.comp_of(&multi[..rank]));
            let dst = out.comp_mut(out_comp);
            for p in 0..dst.len() {
                dst[p] += src[p];
            }
        }
    }
    Ok(out)
}
