//! Independent numeric differentiation oracles: kernel partials probed with
//! centered bumps of the per-point arguments, Euler derivatives probed with
//! centered bumps of the action, and the boundary-partial arbitration.
//!
//! Sample locations are drawn from a counter RNG seeded separately from the
//! field generator, so reports stay byte-reproducible.

use gravitensor_core::density::{partial_consistency, Density};
use gravitensor_core::field::sym_multiplicity;
use gravitensor_core::grav::GravDensity;
use gravitensor_core::matter::VectorMatterDensity;
use gravitensor_core::variational::System;
use gravitensor_core::{TensorField, DIM};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::cases::{self, CaseSystems};
use crate::config::RunConfig;
use crate::suite::SuiteError;

/// Bump size for action probes, matching the kernel probes' square root of
/// the rounding scale.
const ACTION_BUMP: f64 = 1e-5;

/// Bump size for per-argument kernel probes.
const KERNEL_BUMP: f64 = 1e-6;

/// Gate on every oracle: worst disagreement over the probe set, relative to
/// the scale of the quantity probed.
const ORACLE_GATE: f64 = 1e-5;

/// One oracle comparison over the seeded sample set.
#[derive(Debug, Clone, Serialize)]
pub struct ProbeOutcome {
    pub name: &'static str,
    pub description: &'static str,
    pub samples: usize,
    pub worst: f64,
    pub tolerance: f64,
    pub pass: bool,
}

fn finish(
    name: &'static str,
    description: &'static str,
    samples: usize,
    worst: f64,
    tolerance: f64,
) -> Result<ProbeOutcome, SuiteError> {
    if !worst.is_finite() {
        return Err(SuiteError::NonFinite { check: name });
    }
    Ok(ProbeOutcome {
        name,
        description,
        samples,
        worst,
        tolerance,
        pass: worst <= tolerance,
    })
}

/// Packed values and gradients of one field at one point, in the argument
/// layout the densities read.
fn field_args(
    system: &System,
    gradient: &TensorField,
    field: usize,
    point: usize,
) -> (Vec<f64>, Vec<f64>) {
    let values_field = system.field(field);
    let n = values_field.n_comps();
    let mut values = vec![0.0; n];
    let mut grads = vec![0.0; n * DIM];
    for c in 0..n {
        values[c] = values_field.comp(c)[point];
        for axis in 0..DIM {
            grads[c * DIM + axis] = gradient.comp(c * DIM + axis)[point];
        }
    }
    (values, grads)
}

/// Worst kernel-partial disagreement over the sampled points, relative to
/// the largest analytic partial seen.
fn kernel_probe(density: &dyn Density, system: &System, points: &[usize]) -> f64 {
    let gradients: Vec<TensorField> = (0..system.n_fields())
        .map(|f| system.field_gradient(f))
        .collect();
    let mut worst = 0.0f64;
    let mut scale = 0.0f64;
    for &point in points {
        let mut values = Vec::new();
        let mut grads = Vec::new();
        for f in 0..system.n_fields() {
            let (v, g) = field_args(system, &gradients[f], f, point);
            values.push(v);
            grads.push(g);
        }
        worst = worst.max(partial_consistency(density, &values, &grads, KERNEL_BUMP));
        let args = gravitensor_core::density::PointArgs {
            values: &values,
            grads: &grads,
        };
        for (f, spec) in density.fields().iter().enumerate() {
            let n = spec.n_comps();
            let mut dval = vec![0.0; n];
            let mut dgrad = vec![0.0; n * DIM];
            density.d_value(&args, f, &mut dval);
            density.d_grad(&args, f, &mut dgrad);
            for v in dval.iter().chain(&dgrad) {
                scale = scale.max(v.abs());
            }
        }
    }
    worst / scale.max(1e-30)
}

/// Worst action-bump disagreement with the Euler derivative over sampled
/// (component, point) pairs, relative to the Euler field's scale.
fn euler_probe(system: &mut System, field: usize, points: &[usize], rng: &mut ChaCha8Rng) -> f64 {
    let euler = system.euler(field);
    let n_comps = system.field(field).n_comps();
    let packed = system.field(field).layout() == gravitensor_core::Layout::SymPair;
    let mut worst = 0.0f64;
    for &point in points {
        let comp = rng.gen_range(0..n_comps);
        let bump = system.functional_derivative(field, comp, point, ACTION_BUMP);
        let mult = if packed { sym_multiplicity(comp) } else { 1.0 };
        let analytic = mult * euler.comp(comp)[point];
        worst = worst.max((bump - analytic).abs());
    }
    worst / euler.linf().max(1e-30)
}

/// Runs every oracle the case supports at the seeded sample points.
pub fn run(cfg: &RunConfig) -> Result<Vec<ProbeOutcome>, SuiteError> {
    let mut systems = cases::build(cfg)?;
    probe(cfg, &mut systems)
}

/// The oracle battery over already-built systems.
pub fn probe(cfg: &RunConfig, systems: &mut CaseSystems) -> Result<Vec<ProbeOutcome>, SuiteError> {
    let n_points = systems.grid().n_points();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x6f7261636c65));
    let points: Vec<usize> = (0..cfg.samples)
        .map(|_| rng.gen_range(0..n_points))
        .collect();
    let tolerance = ORACLE_GATE * cfg.tolerance_scale;
    let mut probes = Vec::new();

    {
        let grav = systems.grav();
        let worst = kernel_probe(&GravDensity::new(), &grav.system, &points);
        probes.push(finish(
            "metric_kernel_partials",
            "metric kernel value and gradient partials against centered argument bumps",
            points.len(),
            worst,
            tolerance,
        )?);
    }
    if let Some(matter) = systems.matter() {
        let density =
            VectorMatterDensity::new(cfg.mass * cfg.mass).expect("mass validated at configuration");
        let worst = kernel_probe(&density, &matter.system, &points);
        probes.push(finish(
            "matter_kernel_partials",
            "matter kernel value and gradient partials against centered argument bumps",
            points.len(),
            worst,
            tolerance,
        )?);
    }

    {
        let grav = systems.grav_mut();
        let worst = euler_probe(&mut grav.system, 0, &points, &mut rng);
        probes.push(finish(
            "metric_euler_bump",
            "metric Euler derivative against centered action bumps",
            points.len(),
            worst,
            tolerance,
        )?);
    }
    if systems.matter().is_some() {
        let matter = systems.matter_mut().expect("matter present");
        let worst = euler_probe(&mut matter.system, 0, &points, &mut rng);
        probes.push(finish(
            "stress_bump",
            "matter stress tensor against centered action bumps of the metric",
            points.len(),
            worst,
            tolerance,
        )?);
        let worst = euler_probe(&mut matter.system, 1, &points, &mut rng);
        probes.push(finish(
            "field_euler_bump",
            "field Euler derivative against centered action bumps of the field",
            points.len(),
            worst,
            tolerance,
        )?);
    }

    {
        let grav = systems.grav();
        let oracle = grav
            .boundary_partial_oracle(cfg.samples, ACTION_BUMP)
            .map_err(|e| SuiteError::Check {
                check: "boundary_partial_bump",
                reason: e.to_string(),
            })?;
        probes.push(finish(
            "boundary_partial_bump",
            "boundary-vector gradient partials against centered kernel bumps, Kronecker trace reading",
            cfg.samples,
            oracle.kronecker_reading,
            tolerance,
        )?);
    }
    Ok(probes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::CaseName;

    fn cfg_for(case: CaseName, n: usize) -> RunConfig {
        let mut cfg = RunConfig::defaults(case);
        cfg.n = n;
        cfg
    }

    #[test]
    fn metric_case_probes_pass() {
        let probes = run(&cfg_for(CaseName::WeakField, 16)).unwrap();
        let names: Vec<_> = probes.iter().map(|p| p.name).collect();
        assert_eq!(
            names,
            [
                "metric_kernel_partials",
                "metric_euler_bump",
                "boundary_partial_bump"
            ]
        );
        for p in &probes {
            assert!(p.pass, "{}: worst {:.3e}", p.name, p.worst);
        }
    }

    #[test]
    fn matter_case_adds_its_probes_and_passes() {
        let probes = run(&cfg_for(CaseName::VectorMatter, 16)).unwrap();
        assert_eq!(probes.len(), 6);
        for p in &probes {
            assert!(p.pass, "{}: worst {:.3e}", p.name, p.worst);
        }
    }

    #[test]
    fn probes_are_deterministic() {
        let cfg = cfg_for(CaseName::RandomSmooth, 16);
        let a = run(&cfg).unwrap();
        let b = run(&cfg).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.worst.to_bits(), y.worst.to_bits(), "{}", x.name);
        }
    }

    #[test]
    fn flat_probes_are_exactly_zero_where_defined() {
        let probes = run(&cfg_for(CaseName::Flat, 16)).unwrap();
        for p in &probes {
            assert!(p.pass, "{}: worst {:.3e}", p.name, p.worst);
        }
    }
}
