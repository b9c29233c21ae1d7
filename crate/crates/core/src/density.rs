//! Scalar-density interface for the variational engine, with two flat
//! background densities used to validate the engine independently of the
//! heavier sectors.
//!
//! A density sees one lattice point at a time: the packed component values of
//! every dynamical field and their packed stencil gradients. Derivatives
//! returned by `d_value` and `d_grad` follow the symmetric-pair convention of
//! [`crate::point_metric`]: for packed symmetric fields they are the
//! symmetrized partials, and chain rules over the full index range weight
//! off-diagonal components by two.

use crate::field::{Layout, Variance};
use crate::grid::DIM;

/// Shape of one dynamical field a density depends on.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSpec {
    pub name: &'static str,
    pub variances: Vec<Variance>,
    pub layout: Layout,
}

impl FieldSpec {
    #[must_use]
    pub fn n_comps(&self) -> usize {
        match self.layout {
            Layout::Dense => DIM.pow(self.variances.len() as u32),
            Layout::SymPair => 10,
        }
    }
}

/// Values and gradients of every dynamical field at one lattice point.
/// `values[f]` has one entry per packed component of field `f`;
/// `grads[f][comp * 4 + axis]` holds its stencil derivatives.
pub struct PointArgs<'a> {
    pub values: &'a [Vec<f64>],
    pub grads: &'a [Vec<f64>],
}

/// A first-order scalar density `L(fields, gradients)` evaluated pointwise.
pub trait Density {
    fn fields(&self) -> &[FieldSpec];

    fn eval(&self, args: &PointArgs) -> f64;

    /// Partials with respect to the packed values of field `field`, written
    /// to `out` (one entry per packed component).
    fn d_value(&self, args: &PointArgs, field: usize, out: &mut [f64]);

    /// Partials with respect to the packed gradient entries of field `field`,
    /// written to `out[comp * 4 + axis]`.
    fn d_grad(&self, args: &PointArgs, field: usize, out: &mut [f64]);

    /// Rejects field values the density cannot evaluate (for instance a
    /// metric that stopped being invertible). Called once per lattice point
    /// when a system is built.
    fn validate(&self, _args: &PointArgs) -> Result<(), String> {
        Ok(())
    }
}

/// Splits one packed pair field's point arguments into fixed-size arrays:
/// the ten component values and their per-axis stencil derivatives.
#[must_use]
pub fn metric_args(args: &PointArgs, field: usize) -> ([f64; 10], [[f64; 4]; 10]) {
    let mut g = [0.0; 10];
    g.copy_from_slice(&args.values[field][..10]);
    let mut dg = [[0.0; 4]; 10];
    for c in 0..10 {
        for axis in 0..DIM {
            dg[c][axis] = args.grads[field][c * DIM + axis];
        }
    }
    (g, dg)
}

/// Worst absolute disagreement between the analytic partials of a density
/// and centered numeric differentiation of `eval`, over every value and
/// gradient argument of every field at one point. The numeric bump of a
/// packed symmetric component moves both mirrored entries at once, so it is
/// compared against the multiplicity times the symmetrized analytic partial.
#[must_use]
pub fn partial_consistency(
    density: &dyn Density,
    values: &[Vec<f64>],
    grads: &[Vec<f64>],
    step: f64,
) -> f64 {
    let mut vals = values.to_vec();
    let mut grds = grads.to_vec();
    let specs = density.fields().to_vec();
    let mut worst = 0.0f64;
    for (f, spec) in specs.iter().enumerate() {
        let nc = spec.n_comps();
        let mut dval = vec![0.0; nc];
        let mut dgrad = vec![0.0; nc * DIM];
        {
            let args = PointArgs {
                values: &vals,
                grads: &grds,
            };
            density.d_value(&args, f, &mut dval);
            density.d_grad(&args, f, &mut dgrad);
        }
        let eval_at = |vals: &[Vec<f64>], grds: &[Vec<f64>]| {
            density.eval(&PointArgs {
                values: vals,
                grads: grds,
            })
        };
        for c in 0..nc {
            let mult = match spec.layout {
                Layout::Dense => 1.0,
                Layout::SymPair => crate::field::sym_multiplicity(c),
            };
            let original = vals[f][c];
            let delta = step * original.abs().max(1.0);
            vals[f][c] = original + delta;
            let plus = eval_at(&vals, &grds);
            vals[f][c] = original - delta;
            let minus = eval_at(&vals, &grds);
            vals[f][c] = original;
            worst = worst.max(((plus - minus) / (2.0 * delta) - mult * dval[c]).abs());
            for axis in 0..DIM {
                let k = c * DIM + axis;
                let original = grds[f][k];
                let delta = step * original.abs().max(1.0);
                grds[f][k] = original + delta;
                let plus = eval_at(&vals, &grds);
                grds[f][k] = original - delta;
                let minus = eval_at(&vals, &grds);
                grds[f][k] = original;
                worst = worst.max(((plus - minus) / (2.0 * delta) - mult * dgrad[k]).abs());
            }
        }
    }
    worst
}

const ETA_DIAG: [f64; 4] = [1.0, -1.0, -1.0, -1.0];

/// Massless scalar on a flat background, `L = eta^{mn} d_m phi d_n phi / 2`.
/// The simplest density with a nonzero canonical energy tensor and no
/// auxiliary structure.
#[derive(Debug)]
pub struct ScalarWaveDensity {
    specs: Vec<FieldSpec>,
}

impl ScalarWaveDensity {
    #[must_use]
    pub fn new() -> Self {
        Self {
            specs: vec![FieldSpec {
                name: "phi",
                variances: Vec::new(),
                layout: Layout::Dense,
            }],
        }
    }
}

impl Default for ScalarWaveDensity {
    fn default() -> Self {
        Self::new()
    }
}

impl Density for ScalarWaveDensity {
    fn fields(&self) -> &[FieldSpec] {
        &self.specs
    }

    fn eval(&self, args: &PointArgs) -> f64 {
        let d = &args.grads[0];
        let mut acc = 0.0;
        for m in 0..4 {
            acc += ETA_DIAG[m] * d[m] * d[m];
        }
        0.5 * acc
    }

    fn d_value(&self, _args: &PointArgs, _field: usize, out: &mut [f64]) {
        out[0] = 0.0;
    }

    fn d_grad(&self, args: &PointArgs, _field: usize, out: &mut [f64]) {
        let d = &args.grads[0];
        for m in 0..4 {
            out[m] = ETA_DIAG[m] * d[m];
        }
    }
}

/// Massive covector on a flat background,
/// `L = eta^{ma} eta^{nb} d_m A_n d_a A_b / 2 - m2 eta^{ab} A_a A_b / 2`.
/// Its auxiliary tensor is nonzero, which exercises the covector spin
/// structure and both energy-momentum cases of the engine.
#[derive(Debug)]
pub struct CovectorWaveDensity {
    pub mass_sq: f64,
    specs: Vec<FieldSpec>,
}

impl CovectorWaveDensity {
    #[must_use]
    pub fn new(mass_sq: f64) -> Self {
        Self {
            mass_sq,
            specs: vec![FieldSpec {
                name: "a",
                variances: vec![Variance::Down],
                layout: Layout::Dense,
            }],
        }
    }
}

impl Density for CovectorWaveDensity {
    fn fields(&self) -> &[FieldSpec] {
        &self.specs
    }

    fn eval(&self, args: &PointArgs) -> f64 {
        let a = &args.values[0];
        let d = &args.grads[0];
        let mut kinetic = 0.0;
        for n in 0..4 {
            for m in 0..4 {
                let v = d[n * 4 + m];
                kinetic += ETA_DIAG[m] * ETA_DIAG[n] * v * v;
            }
        }
        let mut mass = 0.0;
        for b in 0..4 {
            mass += ETA_DIAG[b] * a[b] * a[b];
        }
        0.5 * kinetic - 0.5 * self.mass_sq * mass
    }

    fn d_value(&self, args: &PointArgs, _field: usize, out: &mut [f64]) {
        let a = &args.values[0];
        for b in 0..4 {
            out[b] = -self.mass_sq * ETA_DIAG[b] * a[b];
        }
    }

    fn d_grad(&self, args: &PointArgs, _field: usize, out: &mut [f64]) {
        let d = &args.grads[0];
        for n in 0..4 {
            for m in 0..4 {
                out[n * 4 + m] = ETA_DIAG[m] * ETA_DIAG[n] * d[n * 4 + m];
            }
        }
    }
}
