//! Field generation for the named cases and construction of the sector
//! systems over them.
//!
//! Every generator is deterministic: the fixed-mode cases use constant wave
//! tables, and the seeded case draws its mode coefficients from a counter
//! RNG before any sampling, so the same seed reproduces the same continuum
//! field at every grid size.

use gravitensor_core::assembly::{AssemblyError, TotalSystem};
use gravitensor_core::field::SYM_PACK;
use gravitensor_core::grav::{GravError, GravSector};
use gravitensor_core::grid::GridError;
use gravitensor_core::matter::{MatterError, MatterSector};
use gravitensor_core::{Grid, Layout, TensorField, Variance, DIM};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::config::{CaseName, RunConfig};

#[derive(Debug, Error)]
pub enum CaseError {
    #[error("case {case}: {source}")]
    Grid {
        case: &'static str,
        source: GridError,
    },
    #[error("case {case}: generated metric rejected: {reason}")]
    Rejected { case: &'static str, reason: String },
}

/// The systems a case provides: every case carries the metric sector, and
/// the matter cases couple it to a covector field.
pub enum CaseSystems {
    Metric(GravSector),
    Coupled(TotalSystem),
}

impl CaseSystems {
    #[must_use]
    pub fn grav(&self) -> &GravSector {
        match self {
            Self::Metric(grav) => grav,
            Self::Coupled(total) => &total.grav,
        }
    }

    #[must_use]
    pub fn grav_mut(&mut self) -> &mut GravSector {
        match self {
            Self::Metric(grav) => grav,
            Self::Coupled(total) => &mut total.grav,
        }
    }

    #[must_use]
    pub fn matter(&self) -> Option<&MatterSector> {
        match self {
            Self::Metric(_) => None,
            Self::Coupled(total) => Some(&total.matter),
        }
    }

    #[must_use]
    pub fn matter_mut(&mut self) -> Option<&mut MatterSector> {
        match self {
            Self::Metric(_) => None,
            Self::Coupled(total) => Some(&mut total.matter),
        }
    }

    #[must_use]
    pub fn total(&self) -> Option<&TotalSystem> {
        match self {
            Self::Metric(_) => None,
            Self::Coupled(total) => Some(total),
        }
    }

    #[must_use]
    pub fn grid(&self) -> &Grid {
        &self.grav().bundle.grid
    }
}

const METRIC_AMPS: [f64; 10] = [0.31, 0.11, 0.19, 0.23, 0.25, 0.13, 0.21, 0.29, 0.09, 0.33];
const METRIC_MODES: [(f64, f64); 10] = [
    (1.0, 0.0),
    (1.0, 1.0),
    (2.0, 1.0),
    (0.0, 1.0),
    (1.0, 2.0),
    (2.0, 0.0),
    (0.0, 2.0),
    (1.0, -1.0),
    (2.0, -1.0),
    (1.0, -2.0),
];
const METRIC_PHASES: [f64; 10] = [0.2, 0.6, 1.0, 1.4, 1.8, 2.2, 2.6, 3.0, 3.4, 3.8];

const FIELD_AMPS: [f64; 4] = [0.45, 0.35, 0.55, 0.25];
const FIELD_MODES: [(f64, f64); 4] = [(1.0, 0.0), (0.0, 1.0), (1.0, 1.0), (1.0, -1.0)];
const FIELD_PHASES: [f64; 4] = [0.3, 0.8, 1.5, 2.4];

/// Number of random modes superposed per component of the seeded case.
const RANDOM_MODES: usize = 3;

/// The first two active axes, collapsed to one when only one axis is
/// active; fixed mode tables are laid out along these.
fn axis_pair(axes: [bool; DIM]) -> (usize, usize) {
    let active: Vec<usize> = (0..DIM).filter(|&a| axes[a]).collect();
    let a0 = active[0];
    let a1 = *active.get(1).unwrap_or(&a0);
    (a0, a1)
}

/// Phase of a fixed-table mode at a point. When both wave numbers land on
/// the same axis and cancel, the difference is used instead so no component
/// degenerates to a constant.
fn mode_at(k: (f64, f64), axes: (usize, usize), x: &[f64; DIM], phase: f64) -> f64 {
    if axes.0 == axes.1 {
        let sum = if k.0 + k.1 == 0.0 {
            k.0 - k.1
        } else {
            k.0 + k.1
        };
        sum * x[axes.0] + phase
    } else {
        k.0 * x[axes.0] + k.1 * x[axes.1] + phase
    }
}

fn eta_base(a: usize, b: usize) -> f64 {
    if a != b {
        0.0
    } else if a == 0 {
        1.0
    } else {
        -1.0
    }
}

fn weakfield_metric(grid: &Grid, eps: f64, axes: (usize, usize)) -> TensorField {
    TensorField::from_fn(
        grid,
        &[Variance::Down, Variance::Down],
        Layout::SymPair,
        |x, idx| {
            let comp = SYM_PACK[idx[0]][idx[1]];
            eta_base(idx[0], idx[1])
                + eps
                    * METRIC_AMPS[comp]
                    * mode_at(METRIC_MODES[comp], axes, &x, METRIC_PHASES[comp]).sin()
        },
    )
    .expect("metric shape is valid")
}

fn conformal_metric(grid: &Grid, eps: f64, axes: (usize, usize)) -> TensorField {
    TensorField::from_fn(
        grid,
        &[Variance::Down, Variance::Down],
        Layout::SymPair,
        |x, idx| {
            let factor = 1.0 + eps * mode_at((1.0, 1.0), axes, &x, 0.4).sin();
            eta_base(idx[0], idx[1]) * factor * factor
        },
    )
    .expect("metric shape is valid")
}

struct Wave {
    k: [f64; DIM],
    amp: f64,
    phase: f64,
}

/// Draws the full mode table before sampling anything, so the generated
/// continuum field depends only on the seed and the axes mask, not on the
/// grid size.
fn random_waves(seed: u64, eps: f64, active: [bool; DIM]) -> Vec<Vec<Wave>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..10)
        .map(|_| {
            (0..RANDOM_MODES)
                .map(|_| {
                    let mut k = [0.0; DIM];
                    for (k_axis, &on) in k.iter_mut().zip(&active) {
                        if on {
                            *k_axis = rng.gen_range(-2i32..=2) as f64;
                        }
                    }
                    Wave {
                        k,
                        amp: eps * rng.gen_range(0.2..1.0) / RANDOM_MODES as f64,
                        phase: rng.gen_range(0.0..std::f64::consts::TAU),
                    }
                })
                .collect()
        })
        .collect()
}

fn random_metric(grid: &Grid, waves: &[Vec<Wave>]) -> TensorField {
    TensorField::from_fn(
        grid,
        &[Variance::Down, Variance::Down],
        Layout::SymPair,
        |x, idx| {
            let comp = SYM_PACK[idx[0]][idx[1]];
            let ripple: f64 = waves[comp]
                .iter()
                .map(|w| {
                    let arg: f64 = w.k.iter().zip(x).map(|(k, xi)| k * xi).sum();
                    w.amp * (arg + w.phase).sin()
                })
                .sum();
            eta_base(idx[0], idx[1]) + ripple
        },
    )
    .expect("metric shape is valid")
}

fn covector_field(grid: &Grid, axes: (usize, usize)) -> TensorField {
    TensorField::from_fn(grid, &[Variance::Down], Layout::Dense, |x, idx| {
        let a = idx[0];
        FIELD_AMPS[a] * mode_at(FIELD_MODES[a], axes, &x, FIELD_PHASES[a]).sin()
    })
    .expect("covector shape is valid")
}

/// The metric sample a configuration describes.
#[must_use]
pub fn metric(cfg: &RunConfig, grid: &Grid) -> TensorField {
    let axes = axis_pair(cfg.axes);
    match cfg.case {
        CaseName::Flat => TensorField::eta(grid, Variance::Down),
        CaseName::WeakField | CaseName::VectorMatter | CaseName::GaugeExperiment => {
            weakfield_metric(grid, cfg.eps, axes)
        }
        CaseName::Conformal => conformal_metric(grid, cfg.eps, axes),
        CaseName::RandomSmooth => random_metric(grid, &random_waves(cfg.seed, cfg.eps, cfg.axes)),
    }
}

/// The covector matter sample for cases that carry one.
#[must_use]
pub fn matter_field(cfg: &RunConfig, grid: &Grid) -> Option<TensorField> {
    cfg.case
        .has_matter()
        .then(|| covector_field(grid, axis_pair(cfg.axes)))
}

fn rejected(case: CaseName, reason: String) -> CaseError {
    CaseError::Rejected {
        case: case.name(),
        reason,
    }
}

/// Generates the case fields and builds every sector system over them.
/// A metric whose signature fails anywhere on the grid is rejected here.
pub fn build(cfg: &RunConfig) -> Result<CaseSystems, CaseError> {
    let grid = Grid::two_pi(cfg.sizes(), cfg.order).map_err(|source| CaseError::Grid {
        case: cfg.case.name(),
        source,
    })?;
    let g = metric(cfg, &grid);
    let grav = GravSector::new(&g).map_err(|e: GravError| rejected(cfg.case, e.to_string()))?;
    let Some(phi) = matter_field(cfg, &grid) else {
        return Ok(CaseSystems::Metric(grav));
    };
    let matter = MatterSector::new(&g, &phi, cfg.mass * cfg.mass)
        .map_err(|e: MatterError| rejected(cfg.case, e.to_string()))?;
    let total = TotalSystem::new(grav, matter)
        .map_err(|e: AssemblyError| rejected(cfg.case, e.to_string()))?;
    Ok(CaseSystems::Coupled(total))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ConfigLayer;
    use gravitensor_core::StencilOrder;

    fn cfg_for(case: CaseName) -> RunConfig {
        let mut cfg = RunConfig::defaults(case);
        cfg.n = 16;
        cfg
    }

    #[test]
    fn flat_metric_is_the_lorentz_background() {
        let cfg = cfg_for(CaseName::Flat);
        let grid = Grid::two_pi(cfg.sizes(), cfg.order).unwrap();
        let g = metric(&cfg, &grid);
        let eta = TensorField::eta(&grid, Variance::Down);
        assert_eq!(g.sub(&eta).unwrap().linf(), 0.0);
        assert!(matter_field(&cfg, &grid).is_none());
    }

    #[test]
    fn generators_are_bit_reproducible() {
        for case in [
            CaseName::WeakField,
            CaseName::Conformal,
            CaseName::RandomSmooth,
            CaseName::VectorMatter,
        ] {
            let cfg = cfg_for(case);
            let grid = Grid::two_pi(cfg.sizes(), cfg.order).unwrap();
            let first = metric(&cfg, &grid);
            let second = metric(&cfg, &grid);
            assert_eq!(
                first.sub(&second).unwrap().linf(),
                0.0,
                "case {}",
                case.name()
            );
        }
    }

    #[test]
    fn random_case_depends_on_the_seed_but_not_the_size() {
        let cfg = cfg_for(CaseName::RandomSmooth);
        let grid = Grid::two_pi(cfg.sizes(), cfg.order).unwrap();
        let base = metric(&cfg, &grid);

        let mut reseeded = cfg.clone();
        reseeded.seed = 8;
        assert!(metric(&reseeded, &grid).sub(&base).unwrap().linf() > 0.0);

        let fine_grid = Grid::two_pi([32, 32, 1, 1], StencilOrder::Two).unwrap();
        let fine = metric(&cfg, &fine_grid);
        assert_eq!(
            base.comp(0)[0],
            fine.comp(0)[0],
            "origin value changed with grid size"
        );
    }

    #[test]
    fn oversized_amplitude_is_rejected_with_the_case_named() {
        let flags = ConfigLayer {
            case: Some(CaseName::WeakField),
            n: Some(16),
            eps: Some(10.0),
            ..ConfigLayer::default()
        };
        let cfg = RunConfig::resolve(ConfigLayer::default(), flags).unwrap();
        let err = match build(&cfg) {
            Ok(_) => panic!("oversized amplitude was accepted"),
            Err(e) => e,
        };
        assert!(matches!(
            err,
            CaseError::Rejected {
                case: "weakfield",
                ..
            }
        ));
    }

    #[test]
    fn matter_cases_couple_all_three_systems() {
        let systems = build(&cfg_for(CaseName::VectorMatter)).unwrap();
        assert!(systems.matter().is_some());
        assert!(systems.total().is_some());
        let metric_only = build(&cfg_for(CaseName::WeakField)).unwrap();
        assert!(metric_only.matter().is_none());
    }

    #[test]
    fn single_axis_masks_still_generate_varying_fields() {
        let mut cfg = cfg_for(CaseName::VectorMatter);
        cfg.axes = [true, false, false, false];
        let grid = Grid::two_pi(cfg.sizes(), cfg.order).unwrap();
        assert_eq!(cfg.sizes(), [16, 1, 1, 1]);
        let g = metric(&cfg, &grid);
        for comp in 0..10 {
            let col = g.comp(comp);
            let varies = col.iter().any(|&v| (v - col[0]).abs() > 0.0);
            assert!(varies, "component {comp} is constant along the only axis");
        }
        build(&cfg).unwrap();
    }
}
