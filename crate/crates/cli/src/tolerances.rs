//! The single tolerance table: every reported check is cataloged here with
//! its error regime, and gates are derived from the regime rather than
//! hard-coded at call sites.
//!
//! Checks come in two regimes. Rounding checks compare two arithmetic
//! routes through the same stencil derivatives, so their relative residual
//! sits near machine precision on any grid and the gate is a flat constant.
//! Truncation checks commute a stencil with a product, so their relative
//! residual shrinks as the stencil order and the gate is a calibrated
//! constant times (max active spacing)^order. Calibration constants were
//! measured on the shipped cases at sizes 16 through 64 and frozen with a
//! safety factor of four.

use gravitensor_core::Grid;

/// Error regime of one check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Regime {
    /// Pointwise re-arithmetic over shared derivatives; grid-independent
    /// gate.
    Rounding { gate: f64 },
    /// Stencil commuted with a product; gate scales as spacing^order.
    Truncation { calibration: f64 },
}

/// Catalog row: stable name, what the check measures, and its regime.
#[derive(Debug, Clone, Copy)]
pub struct CheckSpec {
    pub name: &'static str,
    pub description: &'static str,
    pub regime: Regime,
}

const ROUNDING: Regime = Regime::Rounding { gate: 1e-10 };

const fn trunc(calibration: f64) -> Regime {
    Regime::Truncation { calibration }
}

pub const CATALOG: &[CheckSpec] = &[
    CheckSpec {
        name: "connection_rebuild",
        description: "connection coefficients rebuilt from the densitized metric and its chain-rule gradient",
        regime: ROUNDING,
    },
    CheckSpec {
        name: "boundary_rebuild",
        description: "boundary vector rebuilt from the densitized metric and its chain-rule gradient",
        regime: ROUNDING,
    },
    CheckSpec {
        name: "density_rebuild",
        description: "scalar density gradient rebuilt from the densitized metric",
        regime: ROUNDING,
    },
    CheckSpec {
        name: "trace_consistency",
        description: "metric trace of the metric gradient against twice the connection trace",
        regime: ROUNDING,
    },
    CheckSpec {
        name: "trace_form_agreement",
        description: "agreement of the two trace-structure forms of the densitized metric gradient",
        regime: ROUNDING,
    },
    CheckSpec {
        name: "density_decomposition",
        description: "curvature density split into the quadratic density plus the boundary divergence",
        regime: trunc(0.1),
    },
    CheckSpec {
        name: "contracted_bianchi",
        description: "divergence identity of the densitized Einstein tensor against the metric-gradient contraction",
        regime: trunc(150.0),
    },
    CheckSpec {
        name: "trace_curl",
        description: "curl of the metric-trace gradient form",
        regime: trunc(0.1),
    },
    CheckSpec {
        name: "metric_momentum_rebuild",
        description: "metric momentum kernel against its closed form in connection fields",
        regime: ROUNDING,
    },
    CheckSpec {
        name: "metric_energy_rebuild",
        description: "metric energy tensor against its closed form",
        regime: ROUNDING,
    },
    CheckSpec {
        name: "metric_euler_curvature",
        description: "metric Euler derivative against the densitized Einstein tensor",
        regime: trunc(0.2),
    },
    CheckSpec {
        name: "metric_translation",
        description: "divergence of the metric energy tensor balanced by the Euler contraction with the metric gradient",
        regime: trunc(25.0),
    },
    CheckSpec {
        name: "aux_symmetrized_rebuild",
        description: "auxiliary divergence term against the divergence of its symmetrized bracket",
        regime: trunc(0.15),
    },
    CheckSpec {
        name: "aux_double_divergence",
        description: "double divergence of the auxiliary tensor shrinking at stencil order",
        regime: trunc(0.2),
    },
    CheckSpec {
        name: "metric_vanishing_em",
        description: "metric energy tensor plus twice the mixed Euler term plus the auxiliary divergence",
        regime: trunc(0.1),
    },
    CheckSpec {
        name: "metric_euler_divergence",
        description: "divergence identity of the densitized metric Euler derivative",
        regime: trunc(150.0),
    },
    CheckSpec {
        name: "bianchi_cross_agreement",
        description: "metric Euler divergence identity against the contracted curvature identity",
        regime: ROUNDING,
    },
    CheckSpec {
        name: "superpotential_rebuild",
        description: "improved tensor rebuilt through the superpotential bracket",
        regime: trunc(0.15),
    },
    CheckSpec {
        name: "superpotential_remainder_antisymmetry",
        description: "antisymmetry of the superpotential remainder bracket",
        regime: ROUNDING,
    },
    CheckSpec {
        name: "metric_symmetry",
        description: "symmetry of the raised improved tensor for the metric sector",
        regime: trunc(0.1),
    },
    CheckSpec {
        name: "metric_divergence_identity",
        description: "divergence of the improved tensor rebalanced through auxiliary terms for the metric sector",
        regime: trunc(25.0),
    },
    CheckSpec {
        name: "field_momentum_rebuild",
        description: "field momentum kernel against its covariant closed form",
        regime: ROUNDING,
    },
    CheckSpec {
        name: "matter_metric_momentum_rebuild",
        description: "matter metric momentum kernel against its covariant closed form",
        regime: ROUNDING,
    },
    CheckSpec {
        name: "stress_rebuild",
        description: "matter stress tensor against its covariant closed form with the volume factor inside the divergence",
        regime: ROUNDING,
    },
    CheckSpec {
        name: "field_euler_rebuild",
        description: "field Euler derivative against its covariant closed form",
        regime: ROUNDING,
    },
    CheckSpec {
        name: "matter_energy_split",
        description: "matter energy tensor split into the matter energy plus the metric momentum flux",
        regime: ROUNDING,
    },
    CheckSpec {
        name: "matter_translation",
        description: "divergence of the matter energy tensor balanced by the Euler contractions",
        regime: trunc(2.0),
    },
    CheckSpec {
        name: "matter_vanishing_em",
        description: "matter energy tensor plus its Euler terms plus the auxiliary divergence",
        regime: trunc(1.5),
    },
    CheckSpec {
        name: "matter_gauge_identity",
        description: "divergence of the mixed matter Euler terms against the gradient contractions",
        regime: trunc(7.0),
    },
    CheckSpec {
        name: "momentum_additivity",
        description: "coupled momentum kernel against the sector sum",
        regime: ROUNDING,
    },
    CheckSpec {
        name: "euler_additivity",
        description: "coupled metric Euler derivative against the sector sum",
        regime: ROUNDING,
    },
    CheckSpec {
        name: "energy_additivity",
        description: "coupled energy tensor against the sector sum",
        regime: ROUNDING,
    },
    CheckSpec {
        name: "total_translation",
        description: "divergence of the coupled energy tensor balanced by the Euler contractions",
        regime: trunc(2.0),
    },
    CheckSpec {
        name: "translation_split",
        description: "coupled translation residual against the sum of sector residuals",
        regime: ROUNDING,
    },
    CheckSpec {
        name: "total_vanishing_em",
        description: "coupled energy tensor plus its Euler terms plus the auxiliary divergence",
        regime: trunc(1.5),
    },
    CheckSpec {
        name: "total_gauge_identity",
        description: "divergence of the mixed coupled Euler terms against the gradient contractions",
        regime: trunc(7.0),
    },
    CheckSpec {
        name: "total_symmetry",
        description: "symmetry of the raised improved tensor for the coupled system",
        regime: trunc(0.15),
    },
    CheckSpec {
        name: "total_divergence_identity",
        description: "divergence of the improved tensor rebalanced through auxiliary terms for the coupled system",
        regime: trunc(2.0),
    },
    CheckSpec {
        name: "onshell_metric_energy_flux",
        description: "recombination defect of the metric energy flux against the matter stress contraction",
        regime: ROUNDING,
    },
    CheckSpec {
        name: "onshell_matter_energy_flux",
        description: "recombination defect of the matter energy flux against its compensating fluxes",
        regime: ROUNDING,
    },
    CheckSpec {
        name: "onshell_total_energy_aux",
        description: "recombination defect of the total energy plus the total auxiliary divergence",
        regime: ROUNDING,
    },
    CheckSpec {
        name: "onshell_metric_energy_balance",
        description: "recombination defect of the metric energy balance with the matter stress swapped in",
        regime: ROUNDING,
    },
    CheckSpec {
        name: "onshell_matter_energy_balance",
        description: "recombination defect of the matter energy balance with the field term dropped",
        regime: ROUNDING,
    },
    CheckSpec {
        name: "onshell_stress_divergence",
        description: "recombination defect of the mixed stress divergence against the stress contraction",
        regime: ROUNDING,
    },
];

/// Catalog row for a check name.
#[must_use]
pub fn find(name: &str) -> Option<&'static CheckSpec> {
    CATALOG.iter().find(|spec| spec.name == name)
}

/// Largest spacing among active axes.
#[must_use]
pub fn max_active_spacing(grid: &Grid) -> f64 {
    grid.spacings()
        .iter()
        .zip(grid.active_axes())
        .filter(|&(_, active)| active)
        .map(|(&s, _)| s)
        .fold(0.0, f64::max)
}

/// The gate a check must meet on a given grid, scaled by the run's global
/// tolerance multiplier.
#[must_use]
pub fn tolerance(spec: &CheckSpec, grid: &Grid, scale: f64) -> f64 {
    let base = match spec.regime {
        Regime::Rounding { gate } => gate,
        Regime::Truncation { calibration } => {
            calibration * max_active_spacing(grid).powi(grid.order().order() as i32)
        }
    };
    base * scale
}

#[cfg(test)]
mod tests {
    use super::*;
    use gravitensor_core::StencilOrder;

    #[test]
    fn names_are_unique() {
        for (i, spec) in CATALOG.iter().enumerate() {
            assert!(
                CATALOG[i + 1..].iter().all(|other| other.name != spec.name),
                "duplicate name {}",
                spec.name
            );
        }
    }

    #[test]
    fn truncation_gates_scale_with_spacing_and_order() {
        let spec = find("density_decomposition").unwrap();
        let coarse = Grid::two_pi([16, 16, 1, 1], StencilOrder::Two).unwrap();
        let fine = Grid::two_pi([32, 32, 1, 1], StencilOrder::Two).unwrap();
        let ratio = tolerance(spec, &coarse, 1.0) / tolerance(spec, &fine, 1.0);
        assert!((ratio - 4.0).abs() < 1e-12, "ratio {ratio}");

        let fourth = Grid::two_pi([16, 16, 1, 1], StencilOrder::Four).unwrap();
        let jump = tolerance(spec, &coarse, 1.0) / tolerance(spec, &fourth, 1.0);
        let h = coarse.spacings()[0];
        assert!((jump - 1.0 / (h * h)).abs() < 1e-9, "jump {jump}");
    }

    #[test]
    fn rounding_gates_ignore_the_grid() {
        let spec = find("connection_rebuild").unwrap();
        let a = Grid::two_pi([16, 16, 1, 1], StencilOrder::Two).unwrap();
        let b = Grid::two_pi([64, 64, 1, 1], StencilOrder::Four).unwrap();
        assert_eq!(tolerance(spec, &a, 1.0), tolerance(spec, &b, 1.0));
        assert_eq!(tolerance(spec, &a, 0.5), 0.5 * tolerance(spec, &a, 1.0));
    }

    #[test]
    fn degenerate_axes_do_not_set_the_spacing() {
        let spec = find("metric_translation").unwrap();
        let quasi = Grid::two_pi([16, 16, 1, 1], StencilOrder::Two).unwrap();
        let spacing = quasi.spacings()[0];
        let expected = match spec.regime {
            Regime::Truncation { calibration } => calibration * spacing * spacing,
            Regime::Rounding { .. } => unreachable!(),
        };
        assert!((tolerance(spec, &quasi, 1.0) - expected).abs() <= 1e-15 * expected);
    }
}
