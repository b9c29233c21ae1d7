//! Convergence studies: the truncation-regime checks rerun across doubling
//! grid sizes, with the measured order judged against the stencil order.

use serde::Serialize;

use crate::config::RunConfig;
use crate::suite::{self, SuiteError, EXACT_FLOOR};
use crate::tolerances::{self, Regime};

/// Relative residuals below this are treated as sitting on the rounding
/// floor, where no order can be measured.
const FLOOR: f64 = 1e-11;

/// One check followed across the level list.
#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceEntry {
    pub name: &'static str,
    pub description: &'static str,
    pub sizes: Vec<usize>,
    pub relatives: Vec<f64>,
    /// Measured order between the two finest levels; absent when the
    /// residuals are exactly zero or under the rounding floor.
    pub estimated_order: Option<f64>,
    pub expected_order: f64,
    pub verdict: &'static str,
    pub pass: bool,
}

/// Runs the suite at every level and measures per-check convergence.
pub fn study(cfg: &RunConfig) -> Result<Vec<ConvergenceEntry>, SuiteError> {
    let levels = cfg.convergence_levels()?.to_vec();
    let mut outcomes = Vec::with_capacity(levels.len());
    for &n in &levels {
        outcomes.push(suite::run(&cfg.at_size(n))?);
    }

    let expected = cfg.order.order() as f64;
    let mut entries = Vec::new();
    for (idx, check) in outcomes[0].checks.iter().enumerate() {
        let spec = tolerances::find(check.name).expect("suite checks are cataloged");
        if !matches!(spec.regime, Regime::Truncation { .. }) {
            continue;
        }
        let relatives: Vec<f64> = outcomes
            .iter()
            .map(|o| {
                let at_level = &o.checks[idx];
                debug_assert_eq!(at_level.name, check.name);
                at_level.relative
            })
            .collect();

        let last = *relatives.last().expect("at least two levels");
        let last_linf = outcomes.last().expect("at least two levels").checks[idx].linf;
        let (estimated, verdict, pass) = if relatives.iter().all(|&r| r == 0.0) {
            (None, "exact-zero, order undefined", true)
        } else if last <= FLOOR || last_linf <= EXACT_FLOOR {
            (None, "at rounding floor", true)
        } else {
            let monotone = relatives.windows(2).all(|w| w[1] < w[0]);
            let p = (relatives[relatives.len() - 2] / last).log2();
            let ok = monotone && (p - expected).abs() <= 0.5;
            (Some(p), if ok { "converged" } else { "failed" }, ok)
        };
        entries.push(ConvergenceEntry {
            name: check.name,
            description: check.description,
            sizes: levels.clone(),
            relatives,
            estimated_order: estimated,
            expected_order: expected,
            verdict,
            pass,
        });
    }
    Ok(entries)
}
