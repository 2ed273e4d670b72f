//! Discretization of a fractional strategy into a `k`-barely-fractional one.
//!
//! Given the fractional target `y(t)`, the discretized state is
//!
//! ```text
//! x(t) ∈ argmin_{x ∈ P_k}  D(x, y(t)) + OT(x(t−1), x)
//! D(x, y) = 2 · OT(x/2 + 𝟙/(2n), y)
//! ```
//!
//! with ties broken towards the largest `OT(x(t−1), x)` and then the
//! lexicographically smallest mass vector. `P_k` is enumerated exhaustively,
//! so every step can be certified exactly:
//!
//! * dominance `x_ρ(t) ≤ 2·y_ρ(t)` for every point (service cost at most twice),
//! * potential descent `P(t) − P(t−1) ≤ −OT(x(t−1),x(t)) + 2·OT(y(t−1),y(t))`,
//! * strictness `D(x(t),y(t)) < D(x′,y(t)) + OT(x(t),x′)` for every `x′ ≠ x(t)`.
//!
//! All masses live on integer grids. `x ∈ P_k` has `k` units; the potential
//! is evaluated at `lcm(2nk, U_y)` units, where both `x/2 + 𝟙/(2n)` and `y` are
//! integral.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric::MetricSpace;
use crate::mts::{CostSequence, FractionalTrace};
use crate::numeric::lcm_u64;
use crate::transport::{self, work_to_cost, MassVector};

/// Default cap on `|P_k|` for exhaustive selection.
pub const DEFAULT_ENUMERATION_CAP: u128 = 20_000;

/// Relative tolerance (times the diameter) for the real-valued certificates.
pub const CERTIFICATE_TOL: f64 = 1e-9;

/// Candidate counts above this are evaluated in parallel.
const PARALLEL_THRESHOLD: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Search {
    /// Exact argmin over all of `P_k`.
    Exhaustive,
    /// Single-unit improving moves from `x(t−1)`; not certified.
    Local,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscretizerConfig {
    pub k: u64,
    pub require_k_ge_n2: bool,
    pub enumeration_cap: u128,
    pub search: Search,
}

impl DiscretizerConfig {
    pub fn new(k: u64) -> Self {
        DiscretizerConfig {
            k,
            require_k_ge_n2: true,
            enumeration_cap: DEFAULT_ENUMERATION_CAP,
            search: Search::Exhaustive,
        }
    }

    /// `2·n·k`: the unit in which `x/2` and `𝟙/(2n)` are both integral.
    pub fn potential_units(&self, n: usize) -> u64 {
        2 * n as u64 * self.k
    }

    pub fn check(&self, n: usize) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Domain("k must be at least 1".into()));
        }
        if self.require_k_ge_n2 && self.k < (n * n) as u64 {
            return Err(Error::Domain(format!(
                "k = {} is below n² = {}; disable require_k_ge_n2 to run anyway",
                self.k,
                n * n
            )));
        }
        if self.search == Search::Exhaustive {
            let size = configuration_count(n, self.k);
            if size > self.enumeration_cap {
                return Err(Error::EnumerationCap {
                    size,
                    cap: self.enumeration_cap,
                });
            }
        }
        Ok(())
    }
}

/// `|P_k(X)| = C(k + n − 1, n − 1)`.
pub fn configuration_count(n: usize, k: u64) -> u128 {
    if n == 0 {
        return 0;
    }
    let r = (n - 1) as u128;
    let mut c: u128 = 1;
    for i in 1..=r {
        c = c.saturating_mul(k as u128 + i) / i;
    }
    c
}

/// All of `P_k` as mass vectors over `k` units, in increasing lexicographic order.
pub fn configurations(n: usize, k: u64) -> Vec<Vec<u64>> {
    fn fill(prefix: &mut Vec<u64>, left: u64, slots: usize, out: &mut Vec<Vec<u64>>) {
        if slots == 1 {
            prefix.push(left);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for v in 0..=left {
            prefix.push(v);
            fill(prefix, left - v, slots - 1, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if n > 0 {
        fill(&mut Vec::with_capacity(n), k, n, &mut out);
    }
    out
}

/// The potential evaluated against one fixed target `y`, in lattice work
/// units at `units` mass units.
struct Target<'a> {
    m: &'a MetricSpace,
    k: u64,
    units: u64,
    y: MassVector,
    x_scale: u64,
    shift: u64,
}

impl<'a> Target<'a> {
    fn new(m: &'a MetricSpace, k: u64, y: &MassVector) -> Result<Self> {
        let n = m.len();
        if y.len() != n {
            return Err(Error::Domain("target distribution does not match the metric".into()));
        }
        let units = lcm_u64(2 * n as u64 * k, y.units());
        Ok(Target {
            m,
            k,
            units,
            y: y.rescale(units)?,
            x_scale: units / (2 * k),
            shift: units / (2 * n as u64),
        })
    }

    /// `z = x/2 + 𝟙/(2n)` at `units`.
    fn shifted(&self, x: &[u64]) -> MassVector {
        MassVector::from_raw(self.units, x.iter().map(|&v| v * self.x_scale + self.shift).collect())
    }

    /// `D(x, y)` as lattice work at `units`.
    fn potential_work(&self, x: &[u64]) -> Result<f64> {
        Ok(2.0 * transport::solve(self.m, &self.shifted(x), &self.y)?.work)
    }

    /// `OT(a, b)` for `a, b ∈ P_k`, as lattice work at `units`.
    fn movement_work(&self, a: &[u64], b: &[u64]) -> Result<f64> {
        let a = MassVector::from_raw(self.k, a.to_vec());
        let b = MassVector::from_raw(self.k, b.to_vec());
        Ok(transport::solve(self.m, &a, &b)?.work * (self.units / self.k) as f64)
    }

    fn to_cost(&self, work: f64) -> f64 {
        work_to_cost(self.m, work, self.units)
    }

    fn tolerance(&self) -> f64 {
        self.m.work_tolerance(self.units)
    }
}

fn check_config_vector(x: &MassVector, n: usize) -> Result<()> {
    if x.len() != n {
        return Err(Error::Domain("configuration does not match the metric".into()));
    }
    Ok(())
}

/// `D(x, y) = 2·OT(x/2 + 𝟙/(2n), y)` for `x ∈ P_k` (`k = x.units()`).
pub fn potential(m: &MetricSpace, x: &MassVector, y: &MassVector) -> Result<f64> {
    check_config_vector(x, m.len())?;
    let target = Target::new(m, x.units(), y)?;
    Ok(target.to_cost(target.potential_work(x.mass())?))
}

/// Outcome of one selection step.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub x: MassVector,
    /// `D(x, y(t)) + OT(x(t−1), x)`.
    pub objective: f64,
    /// `D(x, y(t))`.
    pub potential: f64,
    /// `OT(x(t−1), x)`.
    pub movement: f64,
    /// Configurations attaining the minimum objective (before tie-breaking).
    pub minimizers: usize,
}

/// Exact minimizer of `D(x, y_t) + OT(x_prev, x)` over `P_k`, ties broken by
/// the largest `OT(x_prev, x)` and then the smallest mass vector.
pub fn select(m: &MetricSpace, cfg: &DiscretizerConfig, x_prev: &MassVector, y_t: &MassVector) -> Result<Selection> {
    let n = m.len();
    cfg.check(n)?;
    check_config_vector(x_prev, n)?;
    if x_prev.units() != cfg.k {
        return Err(Error::Domain(format!("x(t-1) has {} units, expected k = {}", x_prev.units(), cfg.k)));
    }
    let target = Target::new(m, cfg.k, y_t)?;
    match cfg.search {
        Search::Exhaustive => select_exhaustive(&target, x_prev),
        Search::Local => select_local(&target, x_prev),
    }
}

fn evaluate(target: &Target, x_prev: &[u64], x: &[u64]) -> Result<(f64, f64)> {
    let d = target.potential_work(x)?;
    let mv = target.movement_work(x_prev, x)?;
    Ok((d, mv))
}

fn select_exhaustive(target: &Target, x_prev: &MassVector) -> Result<Selection> {
    let candidates = configurations(target.m.len(), target.k);
    let prev = x_prev.mass();
    let scores: Vec<(f64, f64)> = if candidates.len() > PARALLEL_THRESHOLD {
        candidates
            .par_iter()
            .map(|x| evaluate(target, prev, x))
            .collect::<Result<_>>()?
    } else {
        candidates
            .iter()
            .map(|x| evaluate(target, prev, x))
            .collect::<Result<_>>()?
    };
    let tol = target.tolerance();
    let best = scores.iter().map(|(d, mv)| d + mv).fold(f64::INFINITY, f64::min);
    let tied: Vec<usize> = (0..scores.len())
        .filter(|&i| scores[i].0 + scores[i].1 <= best + tol)
        .collect();
    let max_move = tied.iter().map(|&i| scores[i].1).fold(f64::NEG_INFINITY, f64::max);
    // candidates are in lexicographic order, so the first survivor is the smallest
    let chosen = *tied
        .iter()
        .find(|&&i| scores[i].1 >= max_move - tol)
        .expect("nonempty tie set");
    let (d, mv) = scores[chosen];
    Ok(Selection {
        x: MassVector::from_raw(target.k, candidates[chosen].clone()),
        objective: target.to_cost(d + mv),
        potential: target.to_cost(d),
        movement: target.to_cost(mv),
        minimizers: tied.len(),
    })
}

fn select_local(target: &Target, x_prev: &MassVector) -> Result<Selection> {
    let n = target.m.len();
    let prev = x_prev.mass();
    let tol = target.tolerance();
    let mut cur = prev.to_vec();
    let (mut d, mut mv) = evaluate(target, prev, &cur)?;
    loop {
        let mut improved = None;
        for from in 0..n {
            if cur[from] == 0 {
                continue;
            }
            for to in 0..n {
                if to == from {
                    continue;
                }
                let mut cand = cur.clone();
                cand[from] -= 1;
                cand[to] += 1;
                let (cd, cmv) = evaluate(target, prev, &cand)?;
                let (bd, bmv) = improved.as_ref().map_or((d, mv), |(_, a, b)| (*a, *b));
                let better = cd + cmv < bd + bmv - tol || (cd + cmv <= bd + bmv + tol && cmv > bmv + tol);
                if better {
                    improved = Some((cand, cd, cmv));
                }
            }
        }
        match improved {
            Some((x, nd, nmv)) => {
                cur = x;
                d = nd;
                mv = nmv;
            }
            None => break,
        }
    }
    Ok(Selection {
        x: MassVector::from_raw(target.k, cur),
        objective: target.to_cost(d + mv),
        potential: target.to_cost(d),
        movement: target.to_cost(mv),
        minimizers: 1,
    })
}

/// `min_{x′ ∈ P_k, x′ ≠ x_t} D(x′,y_t) + OT(x_t,x′) − D(x_t,y_t)`.
///
/// Strictly positive whenever `x_t` was produced by [`select`]. Returns
/// `+∞` when `P_k` has a single element.
pub fn verify_necessary_condition(
    m: &MetricSpace,
    cfg: &DiscretizerConfig,
    x_t: &MassVector,
    y_t: &MassVector,
) -> Result<f64> {
    let n = m.len();
    let size = configuration_count(n, cfg.k);
    if size > cfg.enumeration_cap {
        return Err(Error::EnumerationCap {
            size,
            cap: cfg.enumeration_cap,
        });
    }
    check_config_vector(x_t, n)?;
    if x_t.units() != cfg.k {
        return Err(Error::Domain("x(t) is not over k units".into()));
    }
    let target = Target::new(m, cfg.k, y_t)?;
    let here = target.potential_work(x_t.mass())?;
    let candidates = configurations(n, cfg.k);
    let slack = |x: &Vec<u64>| -> Result<f64> {
        if x.as_slice() == x_t.mass() {
            return Ok(f64::INFINITY);
        }
        Ok(target.potential_work(x)? + target.movement_work(x_t.mass(), x)? - here)
    };
    let slacks: Vec<f64> = if candidates.len() > PARALLEL_THRESHOLD {
        candidates.par_iter().map(slack).collect::<Result<_>>()?
    } else {
        candidates.iter().map(slack).collect::<Result<_>>()?
    };
    let worst = slacks.into_iter().fold(f64::INFINITY, f64::min);
    Ok(if worst.is_finite() { target.to_cost(worst) } else { worst })
}

/// Per-step certificate, recomputable from `(x(t−1), y(t−1), y(t), x(t))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepCertificate {
    pub t: usize,
    pub objective: f64,
    pub potential_before: f64,
    pub potential_after: f64,
    /// `OT(x(t−1), x(t))`.
    pub movement: f64,
    /// `OT(y(t−1), y(t))`.
    pub target_movement: f64,
    pub dominance_ok: bool,
    /// `−OT(x(t−1),x(t)) + 2·OT(y(t−1),y(t)) − (P(t) − P(t−1))`; never below `−tol`.
    pub descent_slack: f64,
    pub descent_ok: bool,
    /// Worst strictness slack over `x′ ≠ x(t)`, when the scan was requested.
    pub necessary_slack: Option<f64>,
    pub necessary_ok: Option<bool>,
}

impl StepCertificate {
    pub fn passed(&self) -> bool {
        self.dominance_ok && self.descent_ok && self.necessary_ok.unwrap_or(true)
    }
}

/// `x_ρ ≤ 2·y_ρ` for every point, compared exactly on a common grid.
pub fn dominated(x: &MassVector, y: &MassVector) -> bool {
    let l = lcm_u64(x.units(), y.units());
    let (fx, fy) = (l / x.units(), l / y.units());
    x.mass()
        .iter()
        .zip(y.mass())
        .all(|(&a, &b)| a as u128 * fx as u128 <= 2 * b as u128 * fy as u128)
}

/// Recomputes every certificate field for step `t` from raw states.
#[allow(clippy::too_many_arguments)]
pub fn certify_step(
    m: &MetricSpace,
    cfg: &DiscretizerConfig,
    t: usize,
    x_prev: &MassVector,
    y_prev: &MassVector,
    y_new: &MassVector,
    x_new: &MassVector,
    check_necessary: bool,
) -> Result<StepCertificate> {
    let tol = CERTIFICATE_TOL * m.diameter();
    let before = potential(m, x_prev, y_prev)?;
    let after = potential(m, x_new, y_new)?;
    let movement = transport::ot_cost(m, x_prev, x_new)?;
    let target_movement = transport::ot_cost(m, y_prev, y_new)?;
    let descent_slack = (-movement + 2.0 * target_movement) - (after - before);
    let (necessary_slack, necessary_ok) = if check_necessary {
        let s = verify_necessary_condition(m, cfg, x_new, y_new)?;
        (Some(s), Some(s > -tol))
    } else {
        (None, None)
    };
    Ok(StepCertificate {
        t,
        objective: after + movement,
        potential_before: before,
        potential_after: after,
        movement,
        target_movement,
        dominance_ok: dominated(x_new, y_new),
        descent_slack,
        descent_ok: descent_slack >= -tol,
        necessary_slack,
        necessary_ok,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Discretization {
    pub x: FractionalTrace,
    pub certificates: Vec<StepCertificate>,
    /// `P(0) = D(x(0), y(0))`.
    pub initial_potential: f64,
}

impl Discretization {
    pub fn all_steps_pass(&self) -> bool {
        self.certificates.iter().all(StepCertificate::passed)
    }
}

/// Discretizes `y` step by step. `x(0)` minimizes `D(·, y(0))` (smallest
/// vector on ties), which is `k·e_ρ` when `y(0) = e_ρ`.
pub fn discretize(
    m: &MetricSpace,
    cfg: &DiscretizerConfig,
    y: &FractionalTrace,
    check_necessary: bool,
) -> Result<Discretization> {
    let n = m.len();
    cfg.check(n)?;
    if y.points() != n {
        return Err(Error::Domain("trace does not match the metric".into()));
    }
    let x0 = initial_configuration(m, cfg, y.initial())?;
    let initial_potential = potential(m, &x0, y.initial())?;
    let mut x = FractionalTrace::new(x0, Vec::with_capacity(y.len()))?;
    let mut certificates = Vec::with_capacity(y.len());
    for t in 1..=y.len() {
        let prev = x.at(t - 1).clone();
        let sel = select(m, cfg, &prev, y.at(t))?;
        let cert = certify_step(m, cfg, t, &prev, y.at(t - 1), y.at(t), &sel.x, check_necessary)?;
        x.push(sel.x)?;
        certificates.push(cert);
    }
    Ok(Discretization {
        x,
        certificates,
        initial_potential,
    })
}

fn initial_configuration(m: &MetricSpace, cfg: &DiscretizerConfig, y0: &MassVector) -> Result<MassVector> {
    if let Some(rho) = y0.mass().iter().position(|&v| v == y0.units()) {
        return Ok(MassVector::point(m.len(), rho, cfg.k));
    }
    let target = Target::new(m, cfg.k, y0)?;
    let candidates = configurations(m.len(), cfg.k);
    let mut best = 0;
    let mut best_w = f64::INFINITY;
    let tol = target.tolerance();
    for (i, x) in candidates.iter().enumerate() {
        let w = target.potential_work(x)?;
        if w < best_w - tol {
            best_w = w;
            best = i;
        }
    }
    Ok(MassVector::from_raw(cfg.k, candidates[best].clone()))
}

/// Aggregate bounds of the discretization against its target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscretizationBounds {
    pub initial_potential: f64,
    pub movement_x: f64,
    pub movement_y: f64,
    pub service_x: f64,
    pub service_y: f64,
    /// `Σ_t Σ_ρ c_ρ(t)·(2y_ρ(t) − x_ρ(t))`, each term formed on an exact grid.
    pub service_gap: f64,
    pub movement_ok: bool,
    pub service_ok: bool,
    pub total_ok: bool,
    pub initial_potential_within_diameter: bool,
    pub initial_potential_within_twice_diameter: bool,
}

impl DiscretizationBounds {
    pub fn passed(&self) -> bool {
        self.movement_ok && self.service_ok && self.total_ok && self.initial_potential_within_twice_diameter
    }
}

/// Checks `Mvt(x) ≤ P(0) + 2·Mvt(y) + T·tol`, `Service(x) ≤ 2·Service(y)` and
/// `Cost(x) ≤ 2·Cost(y) + P(0) + T·tol`.
pub fn check_bounds(
    m: &MetricSpace,
    y: &FractionalTrace,
    x: &FractionalTrace,
    costs: &CostSequence,
    initial_potential: f64,
) -> Result<DiscretizationBounds> {
    if y.len() != x.len() || y.len() != costs.len() {
        return Err(Error::Structural("traces and costs differ in length".into()));
    }
    let tol = CERTIFICATE_TOL * m.diameter() * y.len() as f64;
    let (mut movement_x, mut movement_y, mut service_x, mut service_y, mut gap) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for t in 1..=y.len() {
        movement_x += transport::ot_cost(m, x.at(t - 1), x.at(t))?;
        movement_y += transport::ot_cost(m, y.at(t - 1), y.at(t))?;
        let c = costs.at(t).values();
        service_x += x.at(t).expectation(c);
        service_y += y.at(t).expectation(c);
        let l = lcm_u64(x.units(), y.units());
        let (fx, fy) = (l / x.units(), l / y.units());
        for (p, &cp) in c.iter().enumerate() {
            let diff = 2 * y.at(t).get(p) as i128 * fy as i128 - x.at(t).get(p) as i128 * fx as i128;
            gap += cp * diff as f64 / l as f64;
        }
    }
    let diam = m.diameter();
    Ok(DiscretizationBounds {
        initial_potential,
        movement_x,
        movement_y,
        service_x,
        service_y,
        service_gap: gap,
        movement_ok: movement_x <= initial_potential + 2.0 * movement_y + tol,
        service_ok: gap >= 0.0,
        total_ok: movement_x + service_x <= 2.0 * (movement_y + service_y) + initial_potential + tol,
        initial_potential_within_diameter: initial_potential <= diam + CERTIFICATE_TOL * diam,
        initial_potential_within_twice_diameter: initial_potential <= 2.0 * diam + CERTIFICATE_TOL * diam,
    })
}
