//! The report document: one serializable record of a run, rendered as
//! stable-keyed JSON or a plain text table. Field order is fixed by the
//! struct definitions, no timestamps are embedded unless the caller passes
//! one, and rerunning the same configuration reproduces the same bytes.

use std::fmt::Write as _;

use serde::Serialize;

use crate::config::RunConfig;
use crate::convergence::ConvergenceEntry;
use crate::gauge::GaugeSection;
use crate::oracle::ProbeOutcome;
use crate::suite::{CheckOutcome, Diagnostic};

pub const SCHEMA: &str = "gravitensor-report/1";

/// The resolved configuration echoed into the report.
#[derive(Debug, Clone, Serialize)]
pub struct ConfigEcho {
    pub case: &'static str,
    pub n: usize,
    pub order: usize,
    pub eps: f64,
    pub mass: f64,
    pub seed: u64,
    pub axes: [bool; 4],
    pub levels: Vec<usize>,
    pub samples: usize,
    pub gauge_eps: Vec<f64>,
    pub tolerance_scale: f64,
}

impl From<&RunConfig> for ConfigEcho {
    fn from(cfg: &RunConfig) -> Self {
        Self {
            case: cfg.case.name(),
            n: cfg.n,
            order: cfg.order.order(),
            eps: cfg.eps,
            mass: cfg.mass,
            seed: cfg.seed,
            axes: cfg.axes,
            levels: cfg.levels.clone(),
            samples: cfg.samples,
            gauge_eps: cfg.gauge_eps.clone(),
            tolerance_scale: cfg.tolerance_scale,
        }
    }
}

/// One full run: whichever sections the command produced, plus the overall
/// verdict that drives the exit code.
#[derive(Debug, Serialize)]
pub struct Document {
    pub schema: &'static str,
    pub command: &'static str,
    pub config: ConfigEcho,
    pub checks: Vec<CheckOutcome>,
    pub diagnostics: Vec<Diagnostic>,
    pub convergence: Vec<ConvergenceEntry>,
    pub probes: Vec<ProbeOutcome>,
    pub gauge: Option<GaugeSection>,
    pub pass: bool,
    pub stamp: Option<String>,
}

impl Document {
    #[must_use]
    pub fn new(command: &'static str, cfg: &RunConfig, stamp: Option<String>) -> Self {
        Self {
            schema: SCHEMA,
            command,
            config: ConfigEcho::from(cfg),
            checks: Vec::new(),
            diagnostics: Vec::new(),
            convergence: Vec::new(),
            probes: Vec::new(),
            gauge: None,
            pass: true,
            stamp,
        }
    }

    /// Recomputes the overall verdict from every gated section.
    pub fn seal(&mut self) {
        self.pass = self.checks.iter().all(|c| c.pass)
            && self.convergence.iter().all(|c| c.pass)
            && self.probes.iter().all(|p| p.pass)
            && self.gauge.as_ref().is_none_or(GaugeSection::pass);
    }

    #[must_use]
    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("document serializes");
        text.push('\n');
        text
    }

    #[must_use]
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let cfg = &self.config;
        let sizes: Vec<String> = cfg
            .axes
            .iter()
            .map(|&a| {
                if a {
                    cfg.n.to_string()
                } else {
                    "1".to_string()
                }
            })
            .collect();
        let _ = writeln!(
            out,
            "gravitensor {}: case {}, grid {}, stencil order {}, seed {}",
            self.command,
            cfg.case,
            sizes.join("x"),
            cfg.order,
            cfg.seed
        );

        if !self.checks.is_empty() {
            let _ = writeln!(out, "\nidentity checks");
            let _ = writeln!(
                out,
                "  {:<38} {:>12} {:>12}  {}",
                "name", "relative", "tolerance", "result"
            );
            for c in &self.checks {
                let _ = writeln!(
                    out,
                    "  {:<38} {:>12.3e} {:>12.3e}  {}",
                    c.name,
                    c.relative,
                    c.tolerance,
                    verdict(c.pass)
                );
            }
        }

        if !self.diagnostics.is_empty() {
            let _ = writeln!(out, "\ndiagnostics (ungated)");
            for d in &self.diagnostics {
                if d.note.is_empty() {
                    let _ = writeln!(out, "  {:<38} {:>12.3e}", d.name, d.value);
                } else {
                    let _ = writeln!(out, "  {:<38} {:>12.3e}  {}", d.name, d.value, d.note);
                }
            }
        }

        if !self.convergence.is_empty() {
            let _ = writeln!(out, "\nconvergence (expected order {})", cfg.order);
            let mut header = format!("  {:<38}", "name");
            if let Some(entry) = self.convergence.first() {
                for n in &entry.sizes {
                    let _ = write!(header, " {:>12}", format!("n={n}"));
                }
            }
            let _ = writeln!(out, "{header} {:>7}  {}", "order", "verdict");
            for entry in &self.convergence {
                let mut line = format!("  {:<38}", entry.name);
                for r in &entry.relatives {
                    let _ = write!(line, " {r:>12.3e}");
                }
                match entry.estimated_order {
                    Some(p) => {
                        let _ = write!(line, " {p:>7.2}");
                    }
                    None => {
                        let _ = write!(line, " {:>7}", "-");
                    }
                }
                let _ = writeln!(out, "{line}  {}", entry.verdict);
            }
        }

        if !self.probes.is_empty() {
            let _ = writeln!(out, "\noracle probes ({} samples)", cfg.samples);
            let _ = writeln!(
                out,
                "  {:<38} {:>12} {:>12}  {}",
                "name", "worst", "tolerance", "result"
            );
            for p in &self.probes {
                let _ = writeln!(
                    out,
                    "  {:<38} {:>12.3e} {:>12.3e}  {}",
                    p.name,
                    p.worst,
                    p.tolerance,
                    verdict(p.pass)
                );
            }
        }

        if let Some(gauge) = &self.gauge {
            let _ = writeln!(out, "\ngauge experiment");
            let _ = writeln!(
                out,
                "  {:>10} {:>13} {:>13} {:>12} {:>12} {:>12}",
                "eps", "action shift", "energy shift", "translation", "vanishing", "gauge"
            );
            for i in 0..gauge.epsilons.len() {
                let _ = writeln!(
                    out,
                    "  {:>10.3e} {:>13.3e} {:>13.3e} {:>12.3e} {:>12.3e} {:>12.3e}",
                    gauge.epsilons[i],
                    gauge.action_shifts[i],
                    gauge.energy_shifts[i],
                    gauge.translation_relatives[i],
                    gauge.vanishing_relatives[i],
                    gauge.gauge_relatives[i]
                );
            }
            let _ = writeln!(
                out,
                "  base residuals: translation {:.3e}, vanishing {:.3e}, gauge {:.3e}",
                gauge.base_translation, gauge.base_vanishing, gauge.base_gauge
            );
            for c in &gauge.checks {
                let _ = writeln!(
                    out,
                    "  {:<38} {:>12.3e}  ({} {:.3e})  {}",
                    c.name,
                    c.value,
                    c.sense,
                    c.bound,
                    verdict(c.pass)
                );
            }
        }

        let gated = self.checks.len()
            + self.convergence.len()
            + self.probes.len()
            + self.gauge.as_ref().map_or(0, |g| g.checks.len());
        let _ = writeln!(
            out,
            "\noverall: {} ({} gated checks)",
            if self.pass { "PASS" } else { "FAIL" },
            gated
        );
        out
    }
}

fn verdict(pass: bool) -> &'static str {
    if pass {
        "pass"
    } else {
        "FAIL"
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{CaseName, RunConfig};
    use crate::suite;

    #[test]
    fn empty_document_is_valid_json_with_zero_checks() {
        let cfg = RunConfig::defaults(CaseName::Flat);
        let mut doc = Document::new("verify", &cfg, None);
        doc.seal();
        let json = doc.to_json();
        let parsed: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(parsed["schema"], SCHEMA);
        assert_eq!(parsed["checks"].as_array().unwrap().len(), 0);
        assert_eq!(parsed["pass"], true);
        assert!(parsed["stamp"].is_null());
    }

    #[test]
    fn reruns_produce_identical_bytes() {
        let mut cfg = RunConfig::defaults(CaseName::RandomSmooth);
        cfg.n = 16;
        let render = || {
            let mut doc = Document::new("verify", &cfg, None);
            let outcome = suite::run(&cfg).unwrap();
            doc.checks = outcome.checks;
            doc.diagnostics = outcome.diagnostics;
            doc.seal();
            doc.to_json()
        };
        assert_eq!(render(), render());
    }

    #[test]
    fn stamp_is_embedded_verbatim() {
        let cfg = RunConfig::defaults(CaseName::Flat);
        let mut doc = Document::new("verify", &cfg, Some("fixed-run-42".to_string()));
        doc.seal();
        let parsed: serde_json::Value = serde_json::from_str(&doc.to_json()).unwrap();
        assert_eq!(parsed["stamp"], "fixed-run-42");
    }

    #[test]
    fn failures_flip_the_verdict_and_the_text_table() {
        let mut cfg = RunConfig::defaults(CaseName::WeakField);
        cfg.n = 16;
        cfg.tolerance_scale = 1e-12;
        let mut doc = Document::new("verify", &cfg, None);
        let outcome = suite::run(&cfg).unwrap();
        doc.checks = outcome.checks;
        doc.seal();
        assert!(!doc.pass);
        let text = doc.to_text();
        assert!(text.contains("overall: FAIL"));
        assert!(text.contains("FAIL"));
    }
}
