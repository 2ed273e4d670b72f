//! Exact discrete optimal transport on integer mass grids.
//!
//! Every distribution is a [`MassVector`]: nonnegative integer masses that sum
//! to a common unit count `U`, so the fraction at a point is `mass / U`. Two
//! vectors over the same `U` are transported by an integral plan (a vertex of
//! the coupling polytope), found with successive shortest paths on the
//! surplus/deficit bipartite network.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric::MetricSpace;
use crate::numeric::lcm_u64;

/// A distribution over points in integer units of `1/units`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MassVector {
    units: u64,
    mass: Vec<u64>,
}

impl MassVector {
    pub fn new(units: u64, mass: Vec<u64>) -> Result<Self> {
        if units == 0 {
            return Err(Error::Domain("units per whole must be positive".into()));
        }
        if mass.is_empty() {
            return Err(Error::Domain("mass vector over zero points".into()));
        }
        let total: u64 = mass.iter().sum();
        if total != units {
            return Err(Error::Domain(format!("masses sum to {total}, expected {units}")));
        }
        Ok(MassVector { units, mass })
    }

    /// `e_at`: all mass on one point.
    pub fn point(n: usize, at: usize, units: u64) -> Self {
        assert!(at < n && units > 0, "point mass out of range");
        let mut mass = vec![0; n];
        mass[at] = units;
        MassVector { units, mass }
    }

    /// Uniform over `support`; `units` must be divisible by its size.
    pub fn uniform_over(n: usize, support: &[usize], units: u64) -> Result<Self> {
        if support.is_empty() || !units.is_multiple_of(support.len() as u64) {
            return Err(Error::Domain(format!(
                "cannot split {units} units evenly over {} points",
                support.len()
            )));
        }
        let share = units / support.len() as u64;
        let mut mass = vec![0; n];
        for &p in support {
            mass[p] += share;
        }
        Self::new(units, mass)
    }

    pub fn units(&self) -> u64 {
        self.units
    }

    pub fn mass(&self) -> &[u64] {
        &self.mass
    }

    pub fn len(&self) -> usize {
        self.mass.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mass.is_empty()
    }

    pub fn get(&self, i: usize) -> u64 {
        self.mass[i]
    }

    pub fn fraction(&self, i: usize) -> f64 {
        self.mass[i] as f64 / self.units as f64
    }

    pub fn fractions(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.fraction(i)).collect()
    }

    /// Same distribution over `new_units`, which must be a multiple of `units`.
    pub fn rescale(&self, new_units: u64) -> Result<Self> {
        if new_units == 0 || !new_units.is_multiple_of(self.units) {
            return Err(Error::Domain(format!(
                "{new_units} is not a multiple of {}",
                self.units
            )));
        }
        let f = new_units / self.units;
        Ok(MassVector {
            units: new_units,
            mass: self.mass.iter().map(|m| m * f).collect(),
        })
    }

    /// `Σ fraction(ρ) · c_ρ`.
    pub fn expectation(&self, c: &[f64]) -> f64 {
        self.mass
            .iter()
            .zip(c)
            .map(|(&m, &v)| m as f64 * v)
            .sum::<f64>()
            / self.units as f64
    }

    pub(crate) fn from_raw(units: u64, mass: Vec<u64>) -> Self {
        debug_assert_eq!(mass.iter().sum::<u64>(), units);
        MassVector { units, mass }
    }
}

/// Rescales both vectors to the lcm of their units.
pub fn align(a: &MassVector, b: &MassVector) -> Result<(MassVector, MassVector)> {
    let u = lcm_u64(a.units, b.units);
    Ok((a.rescale(u)?, b.rescale(u)?))
}

/// An integral transport plan: `flow[i][j]` units move from `i` to `j`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Coupling {
    units: u64,
    n: usize,
    flow: Vec<u64>,
}

impl Coupling {
    pub fn zeros(n: usize, units: u64) -> Self {
        Coupling {
            units,
            n,
            flow: vec![0; n * n],
        }
    }

    /// Rebuilds a plan from sparse `(from, to, units)` triples.
    pub fn from_triples(n: usize, units: u64, triples: &[(usize, usize, u64)]) -> Result<Self> {
        let mut c = Self::zeros(n, units);
        for &(i, j, f) in triples {
            if i >= n || j >= n {
                return Err(Error::Structural(format!("plan entry ({i},{j}) out of range")));
            }
            c.flow[i * n + j] += f;
        }
        Ok(c)
    }

    pub fn units(&self) -> u64 {
        self.units
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> u64 {
        self.flow[i * self.n + j]
    }

    fn add(&mut self, i: usize, j: usize, f: u64) {
        self.flow[i * self.n + j] += f;
    }

    pub fn row_sums(&self) -> Vec<u64> {
        (0..self.n).map(|i| (0..self.n).map(|j| self.get(i, j)).sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<u64> {
        (0..self.n).map(|j| (0..self.n).map(|i| self.get(i, j)).sum()).collect()
    }

    /// Nonzero entries in row-major order.
    pub fn triples(&self) -> Vec<(usize, usize, u64)> {
        let mut out = Vec::new();
        for i in 0..self.n {
            for j in 0..self.n {
                let f = self.get(i, j);
                if f > 0 {
                    out.push((i, j, f));
                }
            }
        }
        out
    }

    /// True when the marginals are exactly `a` and `b`.
    pub fn is_feasible(&self, a: &MassVector, b: &MassVector) -> bool {
        self.units == a.units
            && self.units == b.units
            && self.n == a.len()
            && self.n == b.len()
            && self.row_sums() == a.mass
            && self.col_sums() == b.mass
    }

    /// `Σ flow · lattice distance`, summed in row-major order.
    pub fn work(&self, m: &MetricSpace) -> f64 {
        let mut w = 0.0;
        for i in 0..self.n {
            for j in 0..self.n {
                let f = self.get(i, j);
                if f > 0 && i != j {
                    w += f as f64 * m.lattice(i, j);
                }
            }
        }
        w
    }

    /// `Σ flow · d / U` in real distance units.
    pub fn cost(&self, m: &MetricSpace) -> f64 {
        work_to_cost(m, self.work(m), self.units)
    }
}

/// Converts a lattice work sum at `units` into a real cost.
#[inline]
pub fn work_to_cost(m: &MetricSpace, work: f64, units: u64) -> f64 {
    work / (units as f64 * m.lattice_scale())
}

/// A solved transport problem.
#[derive(Debug, Clone, PartialEq)]
pub struct Transport {
    pub plan: Coupling,
    /// `Σ flow · lattice distance`; an exact integer on exact metrics.
    pub work: f64,
}

impl Transport {
    pub fn cost(&self, m: &MetricSpace) -> f64 {
        work_to_cost(m, self.work, self.plan.units)
    }
}

fn check_pair(m: &MetricSpace, a: &MassVector, b: &MassVector) -> Result<()> {
    if a.len() != m.len() || b.len() != m.len() {
        return Err(Error::Domain(format!(
            "mass vectors over {} and {} points on a {}-point metric",
            a.len(),
            b.len(),
            m.len()
        )));
    }
    if a.units != b.units {
        return Err(Error::Domain(format!(
            "unit mismatch: {} vs {} (rescale to a common unit first)",
            a.units, b.units
        )));
    }
    Ok(())
}

/// Minimum-cost integral plan from `a` to `b`.
///
/// Mass shared by both vectors stays in place; the remaining surplus is routed
/// to the deficit points by successive shortest augmenting paths, which keeps
/// the residual network free of negative cycles and yields an optimal vertex.
pub fn solve(m: &MetricSpace, a: &MassVector, b: &MassVector) -> Result<Transport> {
    check_pair(m, a, b)?;
    let n = m.len();
    let mut plan = Coupling::zeros(n, a.units);
    let mut sources = Vec::new();
    let mut supply = Vec::new();
    let mut sinks = Vec::new();
    let mut demand = Vec::new();
    for i in 0..n {
        let stay = a.mass[i].min(b.mass[i]);
        plan.add(i, i, stay);
        if a.mass[i] > b.mass[i] {
            sources.push(i);
            supply.push(a.mass[i] - b.mass[i]);
        } else if b.mass[i] > a.mass[i] {
            sinks.push(i);
            demand.push(b.mass[i] - a.mass[i]);
        }
    }
    if !sources.is_empty() {
        route_surplus(m, &sources, &mut supply, &sinks, &mut demand, &mut plan);
    }
    let work = plan.work(m);
    Ok(Transport { plan, work })
}

fn route_surplus(
    m: &MetricSpace,
    sources: &[usize],
    supply: &mut [u64],
    sinks: &[usize],
    demand: &mut [u64],
    plan: &mut Coupling,
) {
    let ns = sources.len();
    let nd = sinks.len();
    let nodes = ns + nd;
    let eps = if m.is_exact() { 0.0 } else { 1e-12 * m.diameter() * m.lattice_scale() };
    let cost = |s: usize, d: usize| m.lattice(sources[s], sinks[d]);
    // flow[s * nd + d] units on lane sources[s] -> sinks[d]
    let mut flow = vec![0u64; ns * nd];
    let mut dist = vec![f64::INFINITY; nodes];
    // predecessor of a node on the shortest path tree
    let mut pred = vec![usize::MAX; nodes];

    loop {
        dist.fill(f64::INFINITY);
        pred.fill(usize::MAX);
        let mut any = false;
        for s in 0..ns {
            if supply[s] > 0 {
                dist[s] = 0.0;
                any = true;
            }
        }
        if !any {
            break;
        }
        // Bellman-Ford over forward lanes (s -> d) and residual back lanes (d -> s).
        for _ in 0..nodes {
            let mut changed = false;
            for s in 0..ns {
                if dist[s].is_finite() {
                    for d in 0..nd {
                        let cand = dist[s] + cost(s, d);
                        if cand < dist[ns + d] - eps {
                            dist[ns + d] = cand;
                            pred[ns + d] = s;
                            changed = true;
                        }
                    }
                }
            }
            for d in 0..nd {
                if dist[ns + d].is_finite() {
                    for s in 0..ns {
                        if flow[s * nd + d] > 0 {
                            let cand = dist[ns + d] - cost(s, d);
                            if cand < dist[s] - eps {
                                dist[s] = cand;
                                pred[s] = ns + d;
                                changed = true;
                            }
                        }
                    }
                }
            }
            if !changed {
                break;
            }
        }
        let mut target = None;
        for d in 0..nd {
            if demand[d] > 0 && dist[ns + d].is_finite() {
                match target {
                    Some(t) if dist[ns + d] >= dist[ns + t] - eps => {}
                    _ => target = Some(d),
                }
            }
        }
        let Some(t) = target else { break };

        // Walk back to the originating source, collecting the bottleneck.
        let mut bottleneck = demand[t];
        let mut node = ns + t;
        let origin = loop {
            if node < ns && pred[node] == usize::MAX {
                break node;
            }
            let p = pred[node];
            if node < ns {
                // back lane p(sink) -> node(source) cancels flow
                bottleneck = bottleneck.min(flow[node * nd + (p - ns)]);
            }
            node = p;
        };
        bottleneck = bottleneck.min(supply[origin]);

        let mut node = ns + t;
        while !(node < ns && pred[node] == usize::MAX) {
            let p = pred[node];
            if node >= ns {
                flow[p * nd + (node - ns)] += bottleneck;
            } else {
                flow[node * nd + (p - ns)] -= bottleneck;
            }
            node = p;
        }
        supply[origin] -= bottleneck;
        demand[t] -= bottleneck;
    }

    for s in 0..ns {
        for d in 0..nd {
            let f = flow[s * nd + d];
            if f > 0 {
                plan.add(sources[s], sinks[d], f);
            }
        }
    }
}

/// `OT(a, b)` together with an optimal integral plan.
pub fn ot(m: &MetricSpace, a: &MassVector, b: &MassVector) -> Result<(f64, Coupling)> {
    let t = solve(m, a, b)?;
    Ok((t.cost(m), t.plan))
}

pub fn ot_cost(m: &MetricSpace, a: &MassVector, b: &MassVector) -> Result<f64> {
    Ok(solve(m, a, b)?.cost(m))
}

/// Optimality certificate for a plan: the residual bipartite network (rows to
/// columns at `+d`, columns back to rows at `-d` wherever flow is positive)
/// contains no negative cycle.
pub fn is_optimal(m: &MetricSpace, plan: &Coupling) -> bool {
    let n = plan.n;
    let tol = if m.is_exact() { 0.0 } else { 1e-9 * m.diameter() * m.lattice_scale() };
    let mut pot = vec![0.0f64; 2 * n];
    for round in 0..=2 * n {
        let mut changed = false;
        for i in 0..n {
            for j in 0..n {
                let c = m.lattice(i, j);
                if pot[i] + c < pot[n + j] - tol {
                    pot[n + j] = pot[i] + c;
                    changed = true;
                }
                if plan.get(i, j) > 0 && pot[n + j] - c < pot[i] - tol {
                    pot[i] = pot[n + j] - c;
                    changed = true;
                }
            }
        }
        if !changed {
            return true;
        }
        if round == 2 * n {
            return false;
        }
    }
    true
}

/// One lane of the drain identity: given `z_ρ ≥ y_ρ + n·α`, finds `ρ′ ≠ ρ` with
/// `π(ρ,ρ′) ≥ α` in an optimal plan `π` from `z` to `y`, and returns it with
/// `z′ = z + α(e_ρ′ − e_ρ)`. Then `OT(z,y) = α·d(ρ,ρ′) + OT(z′,y)`.
///
/// `alpha` is in the units of `z`. Among qualifying lanes the smallest `ρ′`
/// is taken.
pub fn drain_step(
    m: &MetricSpace,
    z: &MassVector,
    y: &MassVector,
    rho: usize,
    alpha: u64,
) -> Result<(usize, MassVector)> {
    check_pair(m, z, y)?;
    let n = m.len();
    if rho >= n {
        return Err(Error::Domain(format!("point {rho} out of range")));
    }
    if alpha == 0 {
        return Err(Error::Precondition("alpha must be positive".into()));
    }
    if z.mass[rho] < y.mass[rho] + n as u64 * alpha {
        return Err(Error::Precondition(format!(
            "z[{rho}] = {} < y[{rho}] + n·alpha = {}",
            z.mass[rho],
            y.mass[rho] + n as u64 * alpha
        )));
    }
    let plan = solve(m, z, y)?.plan;
    let target = (0..n)
        .find(|&j| j != rho && plan.get(rho, j) >= alpha)
        .ok_or_else(|| Error::Precondition(format!("no lane out of {rho} carries {alpha} units")))?;
    let mut mass = z.mass.clone();
    mass[rho] -= alpha;
    mass[target] += alpha;
    Ok((target, MassVector::from_raw(z.units, mass)))
}
