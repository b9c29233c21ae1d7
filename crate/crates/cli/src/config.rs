//! Run configuration: named cases, grid and stencil parameters, seeds, and
//! tolerance scaling, resolved from built-in defaults, an optional TOML file,
//! and command-line overrides, in that order.

use gravitensor_core::{StencilOrder, DIM};
use serde::Deserialize;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("stencil order {0} is not supported; use 2 or 4")]
    BadOrder(usize),
    #[error("grid size {n} is too coarse for an order-{order} stencil; need at least {min} points per active axis")]
    TooCoarse { n: usize, order: usize, min: usize },
    #[error("amplitude {0} must be finite and non-negative")]
    BadAmplitude(f64),
    #[error("mass {0} must be finite and non-negative")]
    BadMass(f64),
    #[error("axes mask {0:?} leaves no active axis")]
    NoActiveAxis([bool; DIM]),
    #[error("axes mask `{0}` must be four characters, each 0 or 1")]
    BadAxesMask(String),
    #[error("oracle sampling needs at least one point")]
    NoSamples,
    #[error("tolerance scale {0} must be finite and positive")]
    BadToleranceScale(f64),
    #[error("gauge amplitude list {0:?} needs at least two finite, positive, strictly decreasing entries")]
    BadGaugeAmplitudes(Vec<f64>),
    #[error("level list {0:?} needs at least two sizes, each double the previous")]
    BadLevels(Vec<usize>),
}

/// The named field configurations the harness can generate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum CaseName {
    /// Flat metric, no matter; every residual is exactly zero.
    Flat,
    /// Flat metric plus a small single-mode trigonometric perturbation per
    /// component.
    #[value(name = "weakfield")]
    #[serde(rename = "weakfield")]
    WeakField,
    /// Flat metric rescaled by a squared single-mode conformal factor.
    Conformal,
    /// Seeded superposition of at most three low modes per component.
    #[value(name = "random_smooth")]
    RandomSmooth,
    /// Weak-field metric coupled to a smooth covector matter field.
    #[value(name = "vector_matter")]
    VectorMatter,
    /// Vector-matter fields probed under a finite coordinate drag.
    #[value(name = "gauge_experiment")]
    GaugeExperiment,
}

impl CaseName {
    #[must_use]
    pub fn name(self) -> &'static str {
        match self {
            Self::Flat => "flat",
            Self::WeakField => "weakfield",
            Self::Conformal => "conformal",
            Self::RandomSmooth => "random_smooth",
            Self::VectorMatter => "vector_matter",
            Self::GaugeExperiment => "gauge_experiment",
        }
    }

    /// Whether the case carries a matter field alongside the metric.
    #[must_use]
    pub fn has_matter(self) -> bool {
        matches!(self, Self::VectorMatter | Self::GaugeExperiment)
    }
}

/// One layer of optional settings; later layers override earlier ones,
/// field by field.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigLayer {
    pub case: Option<CaseName>,
    pub n: Option<usize>,
    pub order: Option<usize>,
    pub eps: Option<f64>,
    pub mass: Option<f64>,
    pub seed: Option<u64>,
    pub levels: Option<Vec<usize>>,
    pub axes: Option<[bool; DIM]>,
    pub samples: Option<usize>,
    pub gauge_eps: Option<Vec<f64>>,
    pub tolerance_scale: Option<f64>,
}

impl ConfigLayer {
    /// Parses the TOML schema documented in the README; unknown keys are
    /// rejected so typos do not silently fall back to defaults.
    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }
}

/// Parses a compact axes mask like `1100`: one character per axis, `1`
/// active, `0` degenerate.
pub fn parse_axes(mask: &str) -> Result<[bool; DIM], ConfigError> {
    let bad = || ConfigError::BadAxesMask(mask.to_string());
    if mask.chars().count() != DIM {
        return Err(bad());
    }
    let mut axes = [false; DIM];
    for (i, c) in mask.chars().enumerate() {
        axes[i] = match c {
            '1' => true,
            '0' => false,
            _ => return Err(bad()),
        };
    }
    Ok(axes)
}

/// Fully resolved settings for one run.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub case: CaseName,
    /// Points per active axis.
    pub n: usize,
    pub order: StencilOrder,
    /// Perturbation amplitude of the generated metric.
    pub eps: f64,
    /// Matter field mass; the Lagrangian uses its square.
    pub mass: f64,
    pub seed: u64,
    /// Grid sizes for convergence studies, each double the previous.
    pub levels: Vec<usize>,
    /// Active axes; degenerate axes keep one point.
    pub axes: [bool; DIM],
    /// Sample points for the pointwise derivative oracles.
    pub samples: usize,
    /// Drag amplitudes for the gauge experiment, strictly decreasing.
    pub gauge_eps: Vec<f64>,
    /// Global multiplier on every tolerance gate.
    pub tolerance_scale: f64,
}

impl RunConfig {
    /// Built-in defaults for a case: the quasi-2D demo grid, with the gauge
    /// experiment bumped to the finer stencil its amplitude scan needs.
    #[must_use]
    pub fn defaults(case: CaseName) -> Self {
        Self {
            case,
            n: 32,
            order: match case {
                CaseName::GaugeExperiment => StencilOrder::Four,
                _ => StencilOrder::Two,
            },
            eps: 1e-2,
            mass: 1.0,
            seed: 7,
            levels: vec![16, 32, 64],
            axes: [true, true, false, false],
            samples: 20,
            gauge_eps: vec![1e-2, 1e-3, 1e-4],
            tolerance_scale: 1.0,
        }
    }

    /// Resolves defaults, then the config file, then command-line flags.
    pub fn resolve(file: ConfigLayer, flags: ConfigLayer) -> Result<Self, ConfigError> {
        let case = flags.case.or(file.case).unwrap_or(CaseName::WeakField);
        let mut cfg = Self::defaults(case);
        cfg.apply(file)?;
        cfg.apply(flags)?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn apply(&mut self, layer: ConfigLayer) -> Result<(), ConfigError> {
        if let Some(case) = layer.case {
            self.case = case;
        }
        if let Some(n) = layer.n {
            self.n = n;
        }
        if let Some(order) = layer.order {
            self.order = match order {
                2 => StencilOrder::Two,
                4 => StencilOrder::Four,
                other => return Err(ConfigError::BadOrder(other)),
            };
        }
        if let Some(eps) = layer.eps {
            self.eps = eps;
        }
        if let Some(mass) = layer.mass {
            self.mass = mass;
        }
        if let Some(seed) = layer.seed {
            self.seed = seed;
        }
        if let Some(levels) = layer.levels {
            self.levels = levels;
        }
        if let Some(axes) = layer.axes {
            self.axes = axes;
        }
        if let Some(samples) = layer.samples {
            self.samples = samples;
        }
        if let Some(gauge_eps) = layer.gauge_eps {
            self.gauge_eps = gauge_eps;
        }
        if let Some(scale) = layer.tolerance_scale {
            self.tolerance_scale = scale;
        }
        Ok(())
    }

    fn validate(&self) -> Result<(), ConfigError> {
        let min = self.order.order() + 1;
        if self.n < min {
            return Err(ConfigError::TooCoarse {
                n: self.n,
                order: self.order.order(),
                min,
            });
        }
        if !(self.eps.is_finite() && self.eps >= 0.0) {
            return Err(ConfigError::BadAmplitude(self.eps));
        }
        if !(self.mass.is_finite() && self.mass >= 0.0) {
            return Err(ConfigError::BadMass(self.mass));
        }
        if !self.axes.iter().any(|&a| a) {
            return Err(ConfigError::NoActiveAxis(self.axes));
        }
        if self.samples == 0 {
            return Err(ConfigError::NoSamples);
        }
        if !(self.tolerance_scale.is_finite() && self.tolerance_scale > 0.0) {
            return Err(ConfigError::BadToleranceScale(self.tolerance_scale));
        }
        let ge = &self.gauge_eps;
        let decreasing = ge.windows(2).all(|w| w[0] > w[1]);
        if ge.len() < 2 || !decreasing || ge.iter().any(|&e| !(e.is_finite() && e > 0.0)) {
            return Err(ConfigError::BadGaugeAmplitudes(ge.clone()));
        }
        Ok(())
    }

    /// Grid sizes per axis: `n` on active axes, one point on degenerate
    /// axes.
    #[must_use]
    pub fn sizes(&self) -> [usize; DIM] {
        let mut sizes = [1usize; DIM];
        for (size, &active) in sizes.iter_mut().zip(&self.axes) {
            if active {
                *size = self.n;
            }
        }
        sizes
    }

    /// Level list for a convergence study, validated against the doubling
    /// requirement.
    pub fn convergence_levels(&self) -> Result<&[usize], ConfigError> {
        let bad = || ConfigError::BadLevels(self.levels.clone());
        if self.levels.len() < 2 {
            return Err(bad());
        }
        let min = self.order.order() + 1;
        for w in self.levels.windows(2) {
            if w[1] != 2 * w[0] {
                return Err(bad());
            }
        }
        if self.levels[0] < min {
            return Err(ConfigError::TooCoarse {
                n: self.levels[0],
                order: self.order.order(),
                min,
            });
        }
        Ok(&self.levels)
    }

    /// The run at a different grid size, for convergence levels.
    #[must_use]
    pub fn at_size(&self, n: usize) -> Self {
        let mut cfg = self.clone();
        cfg.n = n;
        cfg
    }
}
