//! Task-system instances and cost accounting.
//!
//! A run starts at an explicit initial point; integral trajectories, fractional
//! traces and the offline optimum all share it.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric::MetricSpace;
use crate::transport::{self, MassVector};

/// Nonnegative service costs, one per point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CostVector(Vec<f64>);

impl CostVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::Domain(format!("cost entry {i} is {v}, expected finite and >= 0")));
        }
        Ok(CostVector(values))
    }

    pub fn zeros(n: usize) -> Self {
        CostVector(vec![0.0; n])
    }

    /// Unit vector scaled by `amount`.
    pub fn single(n: usize, at: usize, amount: f64) -> Result<Self> {
        let mut v = vec![0.0; n];
        v[at] = amount;
        Self::new(v)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, i: usize) -> f64 {
        self.0[i]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostSequence {
    n: usize,
    steps: Vec<CostVector>,
}

impl CostSequence {
    pub fn new(n: usize, steps: Vec<CostVector>) -> Result<Self> {
        if let Some((t, c)) = steps.iter().enumerate().find(|(_, c)| c.len() != n) {
            return Err(Error::Structural(format!(
                "cost vector at step {} has {} entries, expected {n}",
                t + 1,
                c.len()
            )));
        }
        Ok(CostSequence { n, steps })
    }

    pub fn empty(n: usize) -> Self {
        CostSequence { n, steps: Vec::new() }
    }

    pub fn points(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn steps(&self) -> &[CostVector] {
        &self.steps
    }

    /// Cost at time `t`, 1-based.
    pub fn at(&self, t: usize) -> &CostVector {
        &self.steps[t - 1]
    }

    pub fn push(&mut self, c: CostVector) -> Result<()> {
        if c.len() != self.n {
            return Err(Error::Structural(format!("cost vector of length {}, expected {}", c.len(), self.n)));
        }
        self.steps.push(c);
        Ok(())
    }

    pub fn prefix(&self, t: usize) -> CostSequence {
        CostSequence {
            n: self.n,
            steps: self.steps[..t].to_vec(),
        }
    }

    /// One line per step, `n` whitespace-separated nonnegative reals.
    pub fn parse(text: &str, n: usize, origin: &str) -> Result<Self> {
        let mut steps = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let values = line
                .split_whitespace()
                .map(|t| t.parse::<f64>().map_err(|_| Error::parse(origin, i + 1, format!("not a number: `{t}`"))))
                .collect::<Result<Vec<f64>>>()?;
            if values.len() != n {
                return Err(Error::parse(origin, i + 1, format!("{} entries, expected {n}", values.len())));
            }
            steps.push(CostVector::new(values).map_err(|e| Error::parse(origin, i + 1, e.to_string()))?);
        }
        Ok(CostSequence { n, steps })
    }

    pub fn read(path: impl AsRef<Path>, n: usize) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, n, &path.display().to_string())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for c in &self.steps {
            let row: Vec<String> = c.values().iter().map(|v| format!("{v}")).collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
        out
    }

    /// Per-point sums over all steps.
    pub fn column_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.n];
        for c in &self.steps {
            for (s, v) in sums.iter_mut().zip(c.values()) {
                *s += v;
            }
        }
        sums
    }
}

/// `ρ(0)` followed by `ρ(1..=T)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntegralTrajectory {
    pub initial: usize,
    pub states: Vec<usize>,
}

impl IntegralTrajectory {
    pub fn stationary(at: usize, steps: usize) -> Self {
        IntegralTrajectory {
            initial: at,
            states: vec![at; steps],
        }
    }

    /// State at time `t` (0 is the initial point).
    pub fn at(&self, t: usize) -> usize {
        if t == 0 {
            self.initial
        } else {
            self.states[t - 1]
        }
    }

    /// The point-mass trace following this trajectory.
    pub fn to_trace(&self, n: usize) -> FractionalTrace {
        FractionalTrace {
            initial: MassVector::point(n, self.initial, 1),
            states: self.states.iter().map(|&p| MassVector::point(n, p, 1)).collect(),
        }
    }
}

/// `x(0)` followed by `x(1..=T)`, all over the same unit count.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FractionalTrace {
    initial: MassVector,
    states: Vec<MassVector>,
}

impl FractionalTrace {
    pub fn new(initial: MassVector, states: Vec<MassVector>) -> Result<Self> {
        let (u, n) = (initial.units(), initial.len());
        if let Some((t, s)) = states.iter().enumerate().find(|(_, s)| s.units() != u || s.len() != n) {
            return Err(Error::Structural(format!(
                "state {} is over {} units and {} points, expected {u} and {n}",
                t + 1,
                s.units(),
                s.len()
            )));
        }
        Ok(FractionalTrace { initial, states })
    }

    pub fn units(&self) -> u64 {
        self.initial.units()
    }

    pub fn points(&self) -> usize {
        self.initial.len()
    }

    /// Number of steps `T`.
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn initial(&self) -> &MassVector {
        &self.initial
    }

    pub fn states(&self) -> &[MassVector] {
        &self.states
    }

    /// State at time `t` (0 is the initial distribution).
    pub fn at(&self, t: usize) -> &MassVector {
        if t == 0 {
            &self.initial
        } else {
            &self.states[t - 1]
        }
    }

    pub fn push(&mut self, s: MassVector) -> Result<()> {
        if s.units() != self.units() || s.len() != self.points() {
            return Err(Error::Structural("state does not match the trace's units".into()));
        }
        self.states.push(s);
        Ok(())
    }

    /// Every state rescaled to `units`.
    pub fn rescale(&self, units: u64) -> Result<Self> {
        Ok(FractionalTrace {
            initial: self.initial.rescale(units)?,
            states: self.states.iter().map(|s| s.rescale(units)).collect::<Result<_>>()?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub total: f64,
    pub movement: f64,
    pub service: f64,
}

impl CostBreakdown {
    fn from_parts(movement: f64, service: f64) -> Self {
        CostBreakdown {
            total: movement + service,
            movement,
            service,
        }
    }
}

fn check_lengths(m: &MetricSpace, steps: usize, costs: &CostSequence) -> Result<()> {
    if steps != costs.len() {
        return Err(Error::Structural(format!("{steps} states but {} cost vectors", costs.len())));
    }
    if costs.points() != m.len() {
        return Err(Error::Structural(format!(
            "cost vectors over {} points on a {}-point metric",
            costs.points(),
            m.len()
        )));
    }
    Ok(())
}

/// `Σ_t d(ρ(t−1), ρ(t)) + c_{ρ(t)}(t)`.
pub fn trajectory_cost(m: &MetricSpace, traj: &IntegralTrajectory, costs: &CostSequence) -> Result<CostBreakdown> {
    check_lengths(m, traj.states.len(), costs)?;
    let mut prev = traj.initial;
    let (mut movement, mut service) = (0.0, 0.0);
    for (&p, c) in traj.states.iter().zip(costs.steps()) {
        if p >= m.len() {
            return Err(Error::Domain(format!("state {p} out of range")));
        }
        movement += m.d(prev, p);
        service += c.get(p);
        prev = p;
    }
    Ok(CostBreakdown::from_parts(movement, service))
}

/// Per-step movement `OT(x(t−1), x(t))` and service `⟨x(t), c(t)⟩`.
pub fn fractional_step_costs(m: &MetricSpace, trace: &FractionalTrace, costs: &CostSequence) -> Result<Vec<(f64, f64)>> {
    check_lengths(m, trace.len(), costs)?;
    (1..=trace.len())
        .map(|t| {
            let mv = transport::ot_cost(m, trace.at(t - 1), trace.at(t))?;
            Ok((mv, trace.at(t).expectation(costs.at(t).values())))
        })
        .collect()
}

pub fn fractional_cost(m: &MetricSpace, trace: &FractionalTrace, costs: &CostSequence) -> Result<CostBreakdown> {
    let (movement, service) = fractional_step_costs(m, trace, costs)?
        .into_iter()
        .fold((0.0, 0.0), |(a, b), (mv, sv)| (a + mv, b + sv));
    Ok(CostBreakdown::from_parts(movement, service))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OfflineOptimum {
    pub value: f64,
    pub trajectory: IntegralTrajectory,
}

/// Exact offline optimum by dynamic programming over states.
///
/// `V_t(ρ) = min_ρ′ V_{t−1}(ρ′) + d(ρ′,ρ) + c_ρ(t)` with `V_0` zero at the
/// initial point and infinite elsewhere. Ties go to the smallest index, both
/// in the predecessor choice and the final state.
pub fn offline_opt(m: &MetricSpace, costs: &CostSequence, initial: usize) -> Result<OfflineOptimum> {
    let n = m.len();
    if initial >= n {
        return Err(Error::Domain(format!("initial point {initial} out of range")));
    }
    if costs.points() != n {
        return Err(Error::Structural("cost vectors do not match the metric".into()));
    }
    let big_t = costs.len();
    let mut value = vec![f64::INFINITY; n];
    value[initial] = 0.0;
    let mut back = vec![0usize; n * big_t];
    let mut next = vec![0.0; n];
    for (t, c) in costs.steps().iter().enumerate() {
        for rho in 0..n {
            let mut best = f64::INFINITY;
            let mut arg = 0;
            for from in 0..n {
                let v = value[from] + m.d(from, rho) + c.get(rho);
                if v < best {
                    best = v;
                    arg = from;
                }
            }
            next[rho] = best;
            back[t * n + rho] = arg;
        }
        std::mem::swap(&mut value, &mut next);
    }
    let mut end = 0;
    for rho in 1..n {
        if value[rho] < value[end] {
            end = rho;
        }
    }
    let mut states = vec![0; big_t];
    let mut cur = end;
    for t in (0..big_t).rev() {
        states[t] = cur;
        cur = back[t * n + cur];
    }
    Ok(OfflineOptimum {
        value: value[end],
        trajectory: IntegralTrajectory { initial, states },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FixedCosts {
    /// `Σ_t Σ flow·d / U` over the optimal integral plans.
    pub variable: f64,
    /// `τ · Σ_t Σ_{lanes with flow > 0, i ≠ j} d(i,j)`.
    pub fixed: f64,
}

/// Variable plus fixed transaction costs of a trace: every lane used by the
/// step's optimal integral plan pays `τ·d` on top of its transport cost.
pub fn fixed_cost_accounting(m: &MetricSpace, trace: &FractionalTrace, tau: f64) -> Result<FixedCosts> {
    if !(tau >= 0.0 && tau.is_finite()) {
        return Err(Error::Domain(format!("tau must be finite and >= 0, got {tau}")));
    }
    let mut out = FixedCosts::default();
    for t in 1..=trace.len() {
        let (cost, plan) = transport::ot(m, trace.at(t - 1), trace.at(t))?;
        out.variable += cost;
        for (i, j, _) in plan.triples() {
            if i != j {
                out.fixed += tau * m.d(i, j);
            }
        }
    }
    Ok(out)
}

/// `(raw, β-adjusted)` competitive ratios `alg/opt` and `(alg − β)/opt`;
/// `None` when `opt` is zero.
pub fn competitive_ratios(alg: f64, opt: f64, beta: f64) -> (Option<f64>, Option<f64>) {
    if opt > 0.0 {
        (Some(alg / opt), Some((alg - beta) / opt))
    } else {
        (None, None)
    }
}
