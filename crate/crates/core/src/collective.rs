//! A `k`-barely-fractional trace as a team of `k` deterministic agents.
//!
//! Agent `r` alone is the `r`-th branch of the equivalent barely-random
//! algorithm; the team's average cost equals the fractional cost.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric::MetricSpace;
use crate::mts::{trajectory_cost, CostBreakdown, CostSequence, FractionalTrace, IntegralTrajectory};
use crate::transport::{self, Coupling, MassVector};

/// Agent `i` sits at `positions[i]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentAssignment {
    positions: Vec<usize>,
}

impl AgentAssignment {
    pub fn new(positions: Vec<usize>) -> Self {
        AgentAssignment { positions }
    }

    pub fn positions(&self) -> &[usize] {
        &self.positions
    }

    pub fn agents(&self) -> usize {
        self.positions.len()
    }

    /// Number of agents at each of `n` points.
    pub fn counts(&self, n: usize) -> Vec<u64> {
        let mut c = vec![0; n];
        for &p in &self.positions {
            c[p] += 1;
        }
        c
    }

    /// Whether the counting vector over `k` units equals `x`.
    pub fn realizes(&self, x: &MassVector) -> bool {
        x.units() == self.agents() as u64
            && self.positions.iter().all(|&p| p < x.len())
            && self.counts(x.len()) == x.mass()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentMove {
    pub agent: usize,
    pub from: usize,
    pub to: usize,
}

/// Agents `0..k` placed in nondecreasing point order.
pub fn initial_assignment(x0: &MassVector) -> Result<AgentAssignment> {
    let k = x0.units();
    if x0.mass().iter().sum::<u64>() != k {
        return Err(Error::Domain("x(0) is not a configuration".into()));
    }
    let positions = x0
        .mass()
        .iter()
        .enumerate()
        .flat_map(|(p, &c)| std::iter::repeat_n(p, c as usize))
        .collect();
    Ok(AgentAssignment { positions })
}

/// Moves agents along an optimal integral plan from `x_prev` to `x_next`.
///
/// At every point the lowest-numbered agents leave first, to destinations in
/// increasing point order; the rest stay.
pub fn reassign(
    m: &MetricSpace,
    a: &AgentAssignment,
    x_prev: &MassVector,
    x_next: &MassVector,
) -> Result<(AgentAssignment, Vec<AgentMove>, Coupling)> {
    if !a.realizes(x_prev) {
        return Err(Error::Domain("assignment does not realize x(t-1)".into()));
    }
    if x_next.units() != x_prev.units() {
        return Err(Error::Domain("x(t) and x(t-1) differ in units".into()));
    }
    let plan = transport::solve(m, x_prev, x_next)?.plan;
    let moves = apply_plan(a, &plan);
    let mut positions = a.positions.clone();
    for mv in &moves {
        positions[mv.agent] = mv.to;
    }
    Ok((AgentAssignment { positions }, moves, plan))
}

fn apply_plan(a: &AgentAssignment, plan: &Coupling) -> Vec<AgentMove> {
    let n = plan.len();
    let mut moves = Vec::new();
    for from in 0..n {
        let mut residents = a.positions.iter().enumerate().filter(|(_, &p)| p == from).map(|(i, _)| i);
        for to in (0..n).filter(|&j| j != from) {
            for _ in 0..plan.get(from, to) {
                let agent = residents.next().expect("plan row matches occupancy");
                moves.push(AgentMove { agent, from, to });
            }
        }
    }
    moves.sort_by_key(|mv| mv.agent);
    moves
}

#[derive(Debug, Clone, PartialEq)]
pub struct CollectiveRun {
    /// One trajectory per agent.
    pub trajectories: Vec<IntegralTrajectory>,
    pub agent_costs: Vec<CostBreakdown>,
    /// `(1/k)·Σ` over agents.
    pub average: CostBreakdown,
    /// The plan used at each step `t = 1..=T`.
    pub plans: Vec<Coupling>,
}

impl CollectiveRun {
    pub fn agents(&self) -> usize {
        self.trajectories.len()
    }

    /// Positions of all agents at time `t`.
    pub fn assignment_at(&self, t: usize) -> AgentAssignment {
        AgentAssignment::new(self.trajectories.iter().map(|tr| tr.at(t)).collect())
    }
}

/// Realizes `x` (over `k` units) as `k` agents.
pub fn realize_collective(m: &MetricSpace, x: &FractionalTrace, costs: &CostSequence) -> Result<CollectiveRun> {
    let mut a = initial_assignment(x.initial())?;
    let k = a.agents();
    let mut paths: Vec<Vec<usize>> = vec![Vec::with_capacity(x.len()); k];
    let initial = a.positions.clone();
    let mut plans = Vec::with_capacity(x.len());
    for t in 1..=x.len() {
        let (next, _, plan) = reassign(m, &a, x.at(t - 1), x.at(t))?;
        for (path, &p) in paths.iter_mut().zip(&next.positions) {
            path.push(p);
        }
        plans.push(plan);
        a = next;
    }
    let trajectories: Vec<IntegralTrajectory> = initial
        .into_iter()
        .zip(paths)
        .map(|(initial, states)| IntegralTrajectory { initial, states })
        .collect();
    let agent_costs = trajectories
        .iter()
        .map(|tr| trajectory_cost(m, tr, costs))
        .collect::<Result<Vec<_>>>()?;
    let movement = agent_costs.iter().map(|c| c.movement).sum::<f64>() / k as f64;
    let service = agent_costs.iter().map(|c| c.service).sum::<f64>() / k as f64;
    Ok(CollectiveRun {
        trajectories,
        agent_costs,
        average: CostBreakdown {
            total: movement + service,
            movement,
            service,
        },
        plans,
    })
}

/// Branch `r ∈ 0..k` of the barely-random algorithm: agent `r`'s trajectory.
pub fn branch(run: &CollectiveRun, r: usize) -> Result<&IntegralTrajectory> {
    run.trajectories
        .get(r)
        .ok_or_else(|| Error::Domain(format!("branch {r} out of range for {} agents", run.agents())))
}

/// One random trajectory whose marginal at every `t` is `x(t)`: `ρ(0)` is
/// drawn from `x(0)` and each step follows the optimal plan row of the
/// current point, both by inversion sampling.
pub fn sample_trajectory(m: &MetricSpace, x: &FractionalTrace, seed: u64) -> Result<IntegralTrajectory> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let units = x.units();
    let draw = |weights: &[u64], total: u64, rng: &mut ChaCha8Rng| -> usize {
        let u = rng.gen_range(0..total);
        let mut acc = 0;
        for (i, &w) in weights.iter().enumerate() {
            acc += w;
            if u < acc {
                return i;
            }
        }
        unreachable!("weights sum to total")
    };
    let initial = draw(x.initial().mass(), units, &mut rng);
    let mut cur = initial;
    let mut states = Vec::with_capacity(x.len());
    for t in 1..=x.len() {
        let plan = transport::solve(m, x.at(t - 1), x.at(t))?.plan;
        let row: Vec<u64> = (0..m.len()).map(|j| plan.get(cur, j)).collect();
        cur = draw(&row, x.at(t - 1).get(cur), &mut rng);
        states.push(cur);
    }
    Ok(IntegralTrajectory { initial, states })
}

/// One line per step: `t`, agent positions, per-agent cumulative cost.
pub fn export_agents(m: &MetricSpace, run: &CollectiveRun, costs: &CostSequence) -> String {
    let k = run.agents();
    let steps = run.trajectories.first().map_or(0, |tr| tr.states.len());
    let mut cumulative = vec![0.0; k];
    let mut out = String::from("# t positions cumulative_cost\n");
    for t in 0..=steps {
        if t > 0 {
            for (acc, tr) in cumulative.iter_mut().zip(&run.trajectories) {
                *acc += m.d(tr.at(t - 1), tr.at(t)) + costs.at(t).get(tr.at(t));
            }
        }
        let pos: Vec<String> = run.trajectories.iter().map(|tr| tr.at(t).to_string()).collect();
        let cum: Vec<String> = cumulative.iter().map(|c| format!("{c}")).collect();
        let _ = writeln!(out, "{t} {} {}", pos.join(","), cum.join(","));
    }
    out
}
