//! Offline re-check of a step trace from its raw `(x, y, c)` rows.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::run::collective_check;
use super::trace::Trace;
use crate::collective::realize_collective;
use crate::discretizer::{certify_step, check_bounds, potential, select, DiscretizerConfig, Search, CERTIFICATE_TOL};
use crate::error::{Error, Result};
use crate::metric::MetricSpace;
use crate::mts::{fractional_cost, CostSequence, CostVector, FractionalTrace};
use crate::transport::{self, Coupling, MassVector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassOutcome {
    pub name: String,
    pub checked: usize,
    pub failures: usize,
    /// Smallest slack seen, for the inequality classes.
    pub worst_slack: Option<f64>,
}

impl ClassOutcome {
    fn new(name: &str) -> Self {
        ClassOutcome {
            name: name.into(),
            checked: 0,
            failures: 0,
            worst_slack: None,
        }
    }

    fn record(&mut self, ok: bool) {
        self.checked += 1;
        if !ok {
            self.failures += 1;
        }
    }

    fn slack(&mut self, s: f64) {
        if s.is_finite() {
            self.worst_slack = Some(self.worst_slack.map_or(s, |w| w.min(s)));
        }
    }

    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub steps: usize,
    pub classes: Vec<ClassOutcome>,
    pub passed: bool,
}

impl VerifyReport {
    pub fn class(&self, name: &str) -> Option<&ClassOutcome> {
        self.classes.iter().find(|c| c.name == name)
    }
}

impl fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.classes {
            let status = if c.passed() { "pass" } else { "FAIL" };
            write!(f, "{status} {:<11} {}/{} ok", c.name, c.checked - c.failures, c.checked)?;
            if let Some(s) = c.worst_slack {
                write!(f, ", worst slack {s:.3e}")?;
            }
            writeln!(f)?;
        }
        write!(f, "{}", if self.passed { "all certificates pass" } else { "certificate failures found" })
    }
}

fn mass(units: u64, row: &[u64], what: &str, t: usize) -> Result<MassVector> {
    MassVector::new(units, row.to_vec()).map_err(|e| Error::Structural(format!("{what}({t}): {e}")))
}

/// Recomputes every certificate class. `force_necessary` runs the exhaustive
/// scan and reselection even when the trace was produced without them.
pub fn verify_trace(trace: &Trace, force_necessary: bool) -> Result<VerifyReport> {
    let h = &trace.header;
    let m = MetricSpace::parse(&h.metric, "trace header")?;
    if m.len() != h.n {
        return Err(Error::Structural("header metric size differs from n".into()));
    }
    let cfg = DiscretizerConfig {
        k: h.k,
        require_k_ge_n2: h.require_k_ge_n2,
        enumeration_cap: h.enumeration_cap.into(),
        search: h.search,
    };
    let mut ys = Vec::with_capacity(trace.steps.len());
    let mut xs = Vec::with_capacity(trace.steps.len());
    let mut cs = Vec::with_capacity(trace.steps.len());
    for s in &trace.steps {
        ys.push(mass(h.units_y, &s.y, "y", s.t)?);
        xs.push(mass(h.k, &s.x, "x", s.t)?);
        cs.push(CostVector::new(s.cost.clone())?);
    }
    let y = FractionalTrace::new(mass(h.units_y, &h.y0, "y", 0)?, ys)?;
    let x = FractionalTrace::new(mass(h.k, &h.x0, "x", 0)?, xs)?;
    let costs = CostSequence::new(h.n, cs)?;
    let necessary = h.necessary || force_necessary;
    let tol = CERTIFICATE_TOL * m.diameter();

    let mut plan = ClassOutcome::new("plan");
    let mut dominance = ClassOutcome::new("dominance");
    let mut descent = ClassOutcome::new("descent");
    let mut necessary_c = ClassOutcome::new("necessary");
    let mut selection = ClassOutcome::new("selection");
    let mut records = ClassOutcome::new("records");

    let p0 = potential(&m, x.initial(), y.initial())?;
    records.record((p0 - h.potential).abs() <= tol);
    for (i, s) in trace.steps.iter().enumerate() {
        let t = i + 1;
        let ok = match Coupling::from_triples(h.n, h.k, &s.plan) {
            Ok(c) => {
                c.is_feasible(x.at(t - 1), x.at(t))
                    && transport::is_optimal(&m, &c)
                    && (c.cost(&m) - transport::ot_cost(&m, x.at(t - 1), x.at(t))?).abs() <= tol
            }
            Err(_) => false,
        };
        plan.record(ok);
        let cert = certify_step(&m, &cfg, t, x.at(t - 1), y.at(t - 1), y.at(t), x.at(t), necessary)?;
        dominance.record(cert.dominance_ok);
        descent.record(cert.descent_ok);
        descent.slack(cert.descent_slack);
        if let (Some(slack), Some(ok)) = (cert.necessary_slack, cert.necessary_ok) {
            necessary_c.record(ok);
            necessary_c.slack(slack);
        }
        if necessary && cfg.search == Search::Exhaustive {
            selection.record(select(&m, &cfg, x.at(t - 1), y.at(t))?.x == *x.at(t));
        }
        records.record(
            (cert.potential_after - s.potential).abs() <= tol
                && (cert.movement - s.movement).abs() <= tol
                && (cert.target_movement - s.target_movement).abs() <= tol
                && cert.dominance_ok == s.dominance,
        );
    }

    let mut bounds = ClassOutcome::new("bounds");
    let b = check_bounds(&m, &y, &x, &costs, p0)?;
    bounds.record(b.passed());
    bounds.slack(2.0 * b.movement_y + b.initial_potential - b.movement_x);

    let mut collective = ClassOutcome::new("collective");
    let frac = fractional_cost(&m, &x, &costs)?;
    let run = realize_collective(&m, &x, &costs)?;
    collective.record(collective_check(&m, &x, &frac, &run).passed);

    if let Some(sum) = &trace.summary {
        let ttol = tol * trace.steps.len().max(1) as f64;
        let yc = fractional_cost(&m, &y, &costs)?;
        records.record(
            sum.steps == trace.steps.len()
                && (sum.movement_x - frac.movement).abs() <= ttol
                && (sum.service_x - frac.service).abs() <= ttol
                && (sum.movement_y - yc.movement).abs() <= ttol
                && (sum.service_y - yc.service).abs() <= ttol,
        );
    }

    let mut classes = vec![plan, dominance, descent];
    if necessary {
        classes.push(necessary_c);
        if cfg.search == Search::Exhaustive {
            classes.push(selection);
        }
    }
    classes.extend([bounds, collective, records]);
    let passed = classes.iter().all(ClassOutcome::passed);
    Ok(VerifyReport {
        steps: trace.steps.len(),
        classes,
        passed,
    })
}

pub fn verify_file(path: impl AsRef<std::path::Path>, force_necessary: bool) -> Result<VerifyReport> {
    verify_trace(&Trace::read(path)?, force_necessary)
}
