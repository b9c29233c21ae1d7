//! Maintenance tool, not part of the regular test run: prints measured
//! relative residuals for every suite check across grid refinements, the
//! fitted refinement rates, and the implied calibration constants at the
//! stencil order. The constants frozen into the tolerance catalog were read
//! off this table with a safety factor of four.
//!
//! Run with:
//! `cargo test -p gravitensor-cli --test calibration -- --ignored --nocapture`

use gravitensor_cli::config::{CaseName, RunConfig};
use gravitensor_cli::suite;
use gravitensor_cli::tolerances::max_active_spacing;
use gravitensor_core::{Grid, StencilOrder};

fn spacing(cfg: &RunConfig) -> f64 {
    let grid = Grid::two_pi(cfg.sizes(), cfg.order).expect("valid grid");
    max_active_spacing(&grid)
}

#[test]
#[ignore = "calibration table printer, run manually"]
fn print_calibration_table() {
    let cases = [
        CaseName::WeakField,
        CaseName::Conformal,
        CaseName::RandomSmooth,
        CaseName::VectorMatter,
        CaseName::GaugeExperiment,
    ];
    let levels = [16usize, 32, 64];
    for case in cases {
        for order in [2usize, 4] {
            let mut cfg = RunConfig::defaults(case);
            cfg.order = match order {
                2 => StencilOrder::Two,
                _ => StencilOrder::Four,
            };
            let p = order as f64;
            let runs: Vec<_> = levels
                .iter()
                .map(|&n| {
                    let at = cfg.at_size(n);
                    let h = spacing(&at);
                    (h, suite::run(&at).expect("suite runs"))
                })
                .collect();
            println!("\n== case {} order {} ==", case.name(), order);
            println!(
                "{:<38} {:>10} {:>10} {:>10} {:>6} {:>6} {:>9} {:>10} {:>10}",
                "check", "rel16", "rel32", "rel64", "r12", "r24", "C", "linf64", "ref64"
            );
            for (i, check) in runs[0].1.checks.iter().enumerate() {
                let rel: Vec<f64> = runs.iter().map(|(_, o)| o.checks[i].relative).collect();
                let r12 = (rel[0] / rel[1]).log2();
                let r24 = (rel[1] / rel[2]).log2();
                let c = runs
                    .iter()
                    .zip(&rel)
                    .map(|((h, _), r)| r / h.powf(p))
                    .fold(0.0f64, f64::max);
                let fine = &runs[2].1.checks[i];
                println!(
                    "{:<38} {:>10.3e} {:>10.3e} {:>10.3e} {:>6.2} {:>6.2} {:>9.2e} {:>10.3e} {:>10.3e}",
                    check.name, rel[0], rel[1], rel[2], r12, r24, c, fine.linf, fine.reference
                );
            }
            for (i, d) in runs[0].1.diagnostics.iter().enumerate() {
                let vals: Vec<f64> = runs.iter().map(|(_, o)| o.diagnostics[i].value).collect();
                println!(
                    "{:<38} {:>10.3e} {:>10.3e} {:>10.3e}  (diagnostic)",
                    d.name, vals[0], vals[1], vals[2]
                );
            }
        }
    }
}
