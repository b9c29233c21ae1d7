//! Runs every identity check a case supports and folds the results into
//! gated outcomes plus ungated diagnostics.

use gravitensor_core::matter::DivergenceWeight;
use gravitensor_core::variational::EmCase;
use gravitensor_core::{Grid, Residual};
use serde::Serialize;
use thiserror::Error;

use crate::cases::{self, CaseError, CaseSystems};
use crate::config::{ConfigError, RunConfig};
use crate::tolerances::{self, CheckSpec};

#[derive(Debug, Error)]
pub enum SuiteError {
    #[error(transparent)]
    Case(#[from] CaseError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("check {check}: {reason}")]
    Check { check: &'static str, reason: String },
    #[error("check {check} produced a non-finite value")]
    NonFinite { check: &'static str },
    #[error("check {check} is missing from the tolerance catalog")]
    Uncataloged { check: &'static str },
}

fn named<E: std::fmt::Display>(check: &'static str) -> impl FnOnce(E) -> SuiteError {
    move |e| SuiteError::Check {
        check,
        reason: e.to_string(),
    }
}

/// One gated check: norms, the reference scale they are judged against,
/// and the verdict under the cataloged tolerance.
#[derive(Debug, Clone, Serialize)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub description: &'static str,
    pub linf: f64,
    pub l2: f64,
    pub reference: f64,
    pub relative: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// One ungated measurement reported for context.
#[derive(Debug, Clone, Serialize)]
pub struct Diagnostic {
    pub name: &'static str,
    pub description: &'static str,
    pub value: f64,
    pub note: String,
}

/// Everything one suite run produced.
#[derive(Debug, Default)]
pub struct SuiteOutcome {
    pub checks: Vec<CheckOutcome>,
    pub diagnostics: Vec<Diagnostic>,
}

impl SuiteOutcome {
    #[must_use]
    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    #[must_use]
    pub fn check(&self, name: &str) -> Option<&CheckOutcome> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Relative residual with the floor the report contract fixes.
#[must_use]
pub fn relative(linf: f64, reference: f64) -> f64 {
    linf / reference.max(1e-30)
}

/// Absolute residual below which a check counts as exact regardless of its
/// reference. All generated fields are order one, so anything this small is
/// rounding noise; without the floor, a case whose reference itself vanishes
/// (the conformal metric's gravitational density is identically zero on a
/// two-axis grid) would divide noise by noise and report an order-one ratio.
pub const EXACT_FLOOR: f64 = 1e-12;

fn outcome(
    cfg: &RunConfig,
    grid: &Grid,
    spec: &CheckSpec,
    residual: &Residual,
) -> Result<CheckOutcome, SuiteError> {
    let linf = residual.linf();
    let l2 = residual.l2();
    let reference = residual.reference;
    if !(linf.is_finite() && l2.is_finite() && reference.is_finite()) {
        return Err(SuiteError::NonFinite { check: spec.name });
    }
    let relative = relative(linf, reference);
    let tolerance = tolerances::tolerance(spec, grid, cfg.tolerance_scale);
    Ok(CheckOutcome {
        name: spec.name,
        description: spec.description,
        linf,
        l2,
        reference,
        relative,
        tolerance,
        pass: relative <= tolerance || linf <= EXACT_FLOOR,
    })
}

const ONSHELL_NAMES: [(&str, &str); 6] = [
    ("onshell_metric_energy_flux", "offshell_metric_energy_flux"),
    ("onshell_matter_energy_flux", "offshell_matter_energy_flux"),
    ("onshell_total_energy_aux", "offshell_total_energy_aux"),
    (
        "onshell_metric_energy_balance",
        "offshell_metric_energy_balance",
    ),
    (
        "onshell_matter_energy_balance",
        "offshell_matter_energy_balance",
    ),
    ("onshell_stress_divergence", "offshell_stress_divergence"),
];

fn em_note(case: EmCase, aux: f64, threshold: f64) -> String {
    let branch = match case {
        EmCase::AuxDivergenceFree => "divergence-free branch",
        EmCase::AuxCorrected => "corrected branch",
    };
    format!("{branch}; aux divergence {aux:.3e} vs threshold {threshold:.3e}")
}

/// Generates the case and runs its full check battery. Any non-finite
/// intermediate aborts the run naming the check that produced it.
pub fn run(cfg: &RunConfig) -> Result<SuiteOutcome, SuiteError> {
    let systems = cases::build(cfg)?;
    collect(cfg, &systems)
}

/// The check battery over already-built systems.
pub fn collect(cfg: &RunConfig, systems: &CaseSystems) -> Result<SuiteOutcome, SuiteError> {
    let grid = systems.grid().clone();
    let mut entries: Vec<(&'static str, Residual)> = Vec::new();
    let mut diagnostics: Vec<Diagnostic> = Vec::new();

    let bundle = &systems.grav().bundle;
    let repr = bundle
        .representation_residuals()
        .map_err(named("connection_rebuild"))?;
    entries.push(("connection_rebuild", repr.connection));
    entries.push(("boundary_rebuild", repr.boundary));
    entries.push(("density_rebuild", repr.density));
    entries.push(("trace_consistency", repr.trace));
    entries.push(("trace_form_agreement", repr.trace_forms));
    entries.push((
        "density_decomposition",
        bundle
            .density_decomposition()
            .map_err(named("density_decomposition"))?,
    ));
    entries.push((
        "contracted_bianchi",
        bundle
            .contracted_bianchi()
            .map_err(named("contracted_bianchi"))?,
    ));
    entries.push((
        "trace_curl",
        bundle.trace_curl().map_err(named("trace_curl"))?,
    ));

    let grav = systems.grav();
    entries.push((
        "metric_momentum_rebuild",
        grav.momentum_representation()
            .map_err(named("metric_momentum_rebuild"))?,
    ));
    entries.push((
        "metric_energy_rebuild",
        grav.energy_representation()
            .map_err(named("metric_energy_rebuild"))?,
    ));
    entries.push((
        "metric_euler_curvature",
        grav.euler_comparison()
            .map_err(named("metric_euler_curvature"))?,
    ));
    entries.push(("metric_translation", grav.translation_identity()));
    entries.push((
        "aux_symmetrized_rebuild",
        grav.symmetrized_aux_identity()
            .map_err(named("aux_symmetrized_rebuild"))?,
    ));
    entries.push((
        "aux_double_divergence",
        grav.aux_double_divergence()
            .map_err(named("aux_double_divergence"))?,
    ));
    let vanishing = grav
        .vanishing_energy_momentum()
        .map_err(named("metric_vanishing_em"))?;
    let metric_em_scale = vanishing.reference;
    entries.push(("metric_vanishing_em", vanishing));
    entries.push((
        "metric_euler_divergence",
        grav.euler_divergence_identity()
            .map_err(named("metric_euler_divergence"))?,
    ));
    entries.push((
        "bianchi_cross_agreement",
        grav.euler_divergence_cross()
            .map_err(named("bianchi_cross_agreement"))?,
    ));
    entries.push((
        "superpotential_rebuild",
        grav.superpotential_comparison()
            .map_err(named("superpotential_rebuild"))?,
    ));
    {
        let name = "superpotential_remainder_antisymmetry";
        let bracket = grav.remainder_bracket().map_err(named(name))?;
        let flipped = bracket.permute(&[1, 0]).map_err(named(name))?;
        let asym = bracket.sub(&flipped).map_err(named(name))?;
        entries.push((name, Residual::new(asym, bracket.linf())));
    }
    {
        // The raised metric tensor converges to zero, so its own magnitude
        // cannot serve as the scale; judge the asymmetry against the
        // constituent scale of the vanishing identity instead.
        let sym = grav.system.identity_symmetry();
        entries.push(("metric_symmetry", Residual::new(sym.field, metric_em_scale)));
    }
    entries.push((
        "metric_divergence_identity",
        grav.system.identity_divergence(),
    ));
    let em = grav.system.em_tensor();
    diagnostics.push(Diagnostic {
        name: "metric_em_branch",
        description: "which energy-momentum branch the auxiliary divergence selected",
        value: em.aux_divergence_linf,
        note: em_note(em.case, em.aux_divergence_linf, em.threshold),
    });

    if let Some(matter) = systems.matter() {
        entries.push((
            "field_momentum_rebuild",
            matter
                .phi_momentum_comparison()
                .map_err(named("field_momentum_rebuild"))?,
        ));
        entries.push((
            "matter_metric_momentum_rebuild",
            matter
                .metric_momentum_comparison()
                .map_err(named("matter_metric_momentum_rebuild"))?,
        ));
        entries.push((
            "stress_rebuild",
            matter
                .stress_comparison(DivergenceWeight::Inside)
                .map_err(named("stress_rebuild"))?,
        ));
        entries.push((
            "field_euler_rebuild",
            matter
                .phi_euler_comparison()
                .map_err(named("field_euler_rebuild"))?,
        ));
        entries.push((
            "matter_energy_split",
            matter
                .energy_decomposition()
                .map_err(named("matter_energy_split"))?,
        ));
        entries.push(("matter_translation", matter.translation_identity()));
        entries.push((
            "matter_vanishing_em",
            matter
                .vanishing_energy_momentum()
                .map_err(named("matter_vanishing_em"))?,
        ));
        entries.push((
            "matter_gauge_identity",
            matter
                .gauge_identity()
                .map_err(named("matter_gauge_identity"))?,
        ));
        let em = matter.system.em_tensor();
        diagnostics.push(Diagnostic {
            name: "matter_em_branch",
            description: "which energy-momentum branch the auxiliary divergence selected",
            value: em.aux_divergence_linf,
            note: em_note(em.case, em.aux_divergence_linf, em.threshold),
        });
    }

    if let Some(total) = systems.total() {
        let additivity = total.additivity().map_err(named("momentum_additivity"))?;
        entries.push(("momentum_additivity", additivity.momentum));
        entries.push(("euler_additivity", additivity.metric_euler));
        entries.push(("energy_additivity", additivity.energy));
        let translation = total.translation_identity();
        let translation_scale = translation.reference;
        entries.push(("total_translation", translation));
        {
            // The split's natural reference is the translation residual
            // itself, which shrinks at the stencil order and would turn this
            // rounding-level defect into a growing ratio; judge it against
            // the translation identity's constituent scale.
            let split = total
                .translation_decomposition()
                .map_err(named("translation_split"))?;
            entries.push((
                "translation_split",
                Residual::new(split.field, translation_scale),
            ));
        }
        let vanishing = total
            .vanishing_energy_momentum()
            .map_err(named("total_vanishing_em"))?;
        let total_em_scale = vanishing.reference;
        entries.push(("total_vanishing_em", vanishing));
        entries.push((
            "total_gauge_identity",
            total
                .gauge_identity()
                .map_err(named("total_gauge_identity"))?,
        ));
        {
            // Same scale substitution as the metric sector: the raised total
            // tensor converges to zero along with its asymmetry.
            let sym = total.system.identity_symmetry();
            entries.push(("total_symmetry", Residual::new(sym.field, total_em_scale)));
        }
        entries.push((
            "total_divergence_identity",
            total.system.identity_divergence(),
        ));

        let onshell = total
            .onshell_consequences()
            .map_err(named("onshell_metric_energy_flux"))?;
        if onshell.len() != ONSHELL_NAMES.len() {
            return Err(SuiteError::Check {
                check: "onshell_metric_energy_flux",
                reason: format!(
                    "expected {} statements, got {}",
                    ONSHELL_NAMES.len(),
                    onshell.len()
                ),
            });
        }
        for (check, (gated, direct)) in onshell.into_iter().zip(ONSHELL_NAMES) {
            let value = relative(check.direct.linf(), check.direct.reference);
            diagnostics.push(Diagnostic {
                name: direct,
                description: "direct residual without the Euler completion; order one off shell",
                value,
                note: String::new(),
            });
            entries.push((gated, check.defect));
        }

        let einstein = total
            .einstein_defect()
            .map_err(named("onshell_metric_energy_flux"))?;
        diagnostics.push(Diagnostic {
            name: "einstein_defect",
            description: "distance from the coupled field equations; order one off shell",
            value: relative(einstein.linf(), einstein.reference),
            note: String::new(),
        });
    }

    let mut checks = Vec::with_capacity(entries.len());
    for (name, residual) in &entries {
        let spec = tolerances::find(name).ok_or(SuiteError::Uncataloged { check: name })?;
        checks.push(outcome(cfg, &grid, spec, residual)?);
    }
    for diag in &diagnostics {
        if !diag.value.is_finite() {
            return Err(SuiteError::NonFinite { check: diag.name });
        }
    }
    Ok(SuiteOutcome {
        checks,
        diagnostics,
    })
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
    fn every_emitted_check_is_cataloged_once() {
        let outcome = run(&cfg_for(CaseName::VectorMatter, 16)).unwrap();
        assert_eq!(outcome.checks.len(), tolerances::CATALOG.len());
        for (check, spec) in outcome.checks.iter().zip(tolerances::CATALOG) {
            assert_eq!(check.name, spec.name, "catalog order drifted");
        }
    }

    #[test]
    fn flat_case_is_exactly_zero_everywhere() {
        let outcome = run(&cfg_for(CaseName::Flat, 16)).unwrap();
        assert!(!outcome.checks.is_empty());
        for check in &outcome.checks {
            assert_eq!(check.linf, 0.0, "{} is nonzero", check.name);
            assert!(check.pass, "{} failed", check.name);
        }
        for diag in &outcome.diagnostics {
            assert_eq!(diag.value, 0.0, "{} is nonzero", diag.name);
        }
    }

    #[test]
    fn weakfield_demo_passes_every_gate() {
        let outcome = run(&cfg_for(CaseName::WeakField, 32)).unwrap();
        assert!(outcome.pass(), "failures: {:?}", failing(&outcome));
        assert!(outcome.check("matter_translation").is_none());
    }

    #[test]
    fn matter_cases_pass_with_both_masses() {
        for mass in [0.0, 1.0] {
            let mut cfg = cfg_for(CaseName::VectorMatter, 16);
            cfg.mass = mass;
            let outcome = run(&cfg).unwrap();
            assert!(
                outcome.pass(),
                "mass {mass}: failures: {:?}",
                failing(&outcome)
            );
        }
    }

    fn failing(outcome: &SuiteOutcome) -> Vec<(&'static str, f64, f64)> {
        outcome
            .checks
            .iter()
            .filter(|c| !c.pass)
            .map(|c| (c.name, c.relative, c.tolerance))
            .collect()
    }
}
