//! Online strategies: fractional ones that emit a distribution per step and
//! deterministic ones that emit a single point.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::metric::MetricSpace;
use crate::mts::{CostSequence, CostVector, FractionalTrace};
use crate::numeric::{lcm_upto, parse_number};
use crate::transport::MassVector;

/// A point counts as saturated once its phase cost reaches `1 - SATURATION_TOL`.
pub const SATURATION_TOL: f64 = 1e-9;

/// Per-phase cost accumulator for uniform-metric phase algorithms.
///
/// A phase ends at the first step after which every point has accumulated at
/// least one unit of cost since the phase began; the ledger then resets.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseLedger {
    phase: usize,
    accumulated: Vec<f64>,
}

impl PhaseLedger {
    pub fn new(n: usize) -> Self {
        PhaseLedger {
            phase: 0,
            accumulated: vec![0.0; n],
        }
    }

    pub fn phase(&self) -> usize {
        self.phase
    }

    pub fn accumulated(&self) -> &[f64] {
        &self.accumulated
    }

    pub fn is_saturated(&self, p: usize) -> bool {
        self.accumulated[p] >= 1.0 - SATURATION_TOL
    }

    pub fn unsaturated(&self) -> Vec<usize> {
        (0..self.accumulated.len()).filter(|&p| !self.is_saturated(p)).collect()
    }

    /// Adds one cost vector. Returns true when this completes the phase, in
    /// which case the ledger has already been reset for the next one.
    pub fn absorb(&mut self, c: &[f64]) -> bool {
        for (a, v) in self.accumulated.iter_mut().zip(c) {
            *a += v;
        }
        if (0..self.accumulated.len()).all(|p| self.is_saturated(p)) {
            self.accumulated.fill(0.0);
            self.phase += 1;
            true
        } else {
            false
        }
    }
}

/// A causal fractional strategy: the distribution at `t` depends only on
/// `c(1..=t)`.
pub trait FractionalStrategy {
    fn initial(&self) -> MassVector;
    fn step(&mut self, c: &CostVector) -> Result<MassVector>;
}

/// Runs a fractional strategy over a whole sequence.
pub fn run_fractional<S: FractionalStrategy + ?Sized>(strategy: &mut S, costs: &CostSequence) -> Result<FractionalTrace> {
    let mut trace = FractionalTrace::new(strategy.initial(), Vec::with_capacity(costs.len()))?;
    for c in costs.steps() {
        trace.push(strategy.step(c)?)?;
    }
    Ok(trace)
}

fn require_uniform(m: &MetricSpace) -> Result<()> {
    if m.is_uniform() {
        Ok(())
    } else {
        Err(Error::Domain("strategy requires the uniform metric".into()))
    }
}

/// The classical uniform-metric phase algorithm: uniform over the points not
/// yet saturated in the current phase. Mass units are `lcm(1..=n)` so every
/// such distribution is exact.
#[derive(Debug, Clone)]
pub struct UniformFractional {
    n: usize,
    units: u64,
    initial: usize,
    ledger: PhaseLedger,
    completed: bool,
}

impl UniformFractional {
    pub fn new(m: &MetricSpace, initial: usize) -> Result<Self> {
        require_uniform(m)?;
        let n = m.len();
        if initial >= n {
            return Err(Error::Domain(format!("initial point {initial} out of range")));
        }
        Ok(UniformFractional {
            n,
            units: lcm_upto(n),
            initial,
            ledger: PhaseLedger::new(n),
            completed: false,
        })
    }

    pub fn units(&self) -> u64 {
        self.units
    }

    pub fn ledger(&self) -> &PhaseLedger {
        &self.ledger
    }

    /// Whether the most recent step completed a phase.
    pub fn completed_phase(&self) -> bool {
        self.completed
    }
}

impl FractionalStrategy for UniformFractional {
    fn initial(&self) -> MassVector {
        MassVector::point(self.n, self.initial, self.units)
    }

    fn step(&mut self, c: &CostVector) -> Result<MassVector> {
        if c.len() != self.n {
            return Err(Error::Structural("cost vector length does not match".into()));
        }
        self.completed = self.ledger.absorb(c.values());
        let support = self.ledger.unsaturated();
        MassVector::uniform_over(self.n, &support, self.units)
    }
}

/// The `n`-barely-fractional uniform-metric strategy: `n` balls of mass `1/n`
/// in `n` urns. Balls sitting in a saturated urn are relocated one at a time
/// to the least loaded unsaturated urn (smallest index on ties). When a phase
/// completes the balls return to one per urn.
#[derive(Debug, Clone)]
pub struct BallsAndUrns {
    loads: Vec<u64>,
    initial: usize,
    ledger: PhaseLedger,
    completed: bool,
    relocations: usize,
    phase_relocations: Vec<usize>,
}

impl BallsAndUrns {
    pub fn new(m: &MetricSpace, initial: usize) -> Result<Self> {
        require_uniform(m)?;
        let n = m.len();
        if initial >= n {
            return Err(Error::Domain(format!("initial point {initial} out of range")));
        }
        Ok(BallsAndUrns {
            loads: vec![1; n],
            initial,
            ledger: PhaseLedger::new(n),
            completed: false,
            relocations: 0,
            phase_relocations: Vec::new(),
        })
    }

    pub fn loads(&self) -> &[u64] {
        &self.loads
    }

    pub fn completed_phase(&self) -> bool {
        self.completed
    }

    /// Relocations so far in the current (unfinished) phase.
    pub fn current_relocations(&self) -> usize {
        self.relocations
    }

    /// Relocation counts of every completed phase, reset moves excluded.
    pub fn phase_relocations(&self) -> &[usize] {
        &self.phase_relocations
    }

    fn relocate(&mut self) {
        let n = self.loads.len();
        while let Some(from) = (0..n).find(|&p| self.loads[p] > 0 && self.ledger.is_saturated(p)) {
            let Some(to) = (0..n)
                .filter(|&p| !self.ledger.is_saturated(p))
                .min_by_key(|&p| (self.loads[p], p))
            else {
                break;
            };
            self.loads[from] -= 1;
            self.loads[to] += 1;
            self.relocations += 1;
        }
    }
}

impl FractionalStrategy for BallsAndUrns {
    /// The balls start one per urn only from `t = 1`; at `t = 0` the whole
    /// mass sits at the shared initial point.
    fn initial(&self) -> MassVector {
        MassVector::point(self.loads.len(), self.initial, self.loads.len() as u64)
    }

    fn step(&mut self, c: &CostVector) -> Result<MassVector> {
        let n = self.loads.len();
        if c.len() != n {
            return Err(Error::Structural("cost vector length does not match".into()));
        }
        self.completed = self.ledger.absorb(c.values());
        if self.completed {
            self.phase_relocations.push(self.relocations);
            self.relocations = 0;
            self.loads.fill(1);
        } else {
            self.relocate();
        }
        MassVector::new(n as u64, self.loads.clone())
    }
}

/// A deterministic online algorithm emitting one point per step.
pub trait DeterministicStrategy {
    fn position(&self) -> usize;
    fn step(&mut self, m: &MetricSpace, c: &CostVector) -> usize;
}

/// Moves to `argmin_ρ d(current, ρ) + c_ρ`, smallest index on ties.
#[derive(Debug, Clone)]
pub struct Greedy {
    position: usize,
}

impl Greedy {
    pub fn new(initial: usize) -> Self {
        Greedy { position: initial }
    }
}

impl DeterministicStrategy for Greedy {
    fn position(&self) -> usize {
        self.position
    }

    fn step(&mut self, m: &MetricSpace, c: &CostVector) -> usize {
        let cur = self.position;
        let mut best = 0;
        let mut best_v = f64::INFINITY;
        for p in 0..m.len() {
            let v = m.d(cur, p) + c.get(p);
            if v < best_v {
                best_v = v;
                best = p;
            }
        }
        self.position = best;
        best
    }
}

/// Replays a deterministic strategy and returns its point-mass trace.
pub fn run_deterministic<S: DeterministicStrategy + ?Sized>(
    strategy: &mut S,
    m: &MetricSpace,
    costs: &CostSequence,
) -> FractionalTrace {
    let n = m.len();
    let initial = MassVector::point(n, strategy.position(), 1);
    let states = costs
        .steps()
        .iter()
        .map(|c| MassVector::point(n, strategy.step(m, c), 1))
        .collect();
    FractionalTrace::new(initial, states).expect("point masses share one unit")
}

/// Parses a trace file.
///
/// ```text
/// units 4
/// 1 0 0        # y(0)
/// 1/2 1/4 1/4  # y(1)
/// ```
///
/// Entries are fractions of the whole (`p/q`, decimals, or reals that land on
/// the `1/U` grid within 1e-9). Every row must sum to exactly `U` units. The
/// first data row is the initial distribution.
pub fn parse_trace(text: &str, origin: &str) -> Result<FractionalTrace> {
    let mut units: Option<u64> = None;
    let mut rows: Vec<MassVector> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("units") {
            let u: u64 = rest
                .trim()
                .parse()
                .map_err(|_| Error::parse(origin, line_no, "bad units header"))?;
            if u == 0 || units.is_some() {
                return Err(Error::parse(origin, line_no, "units must be positive and declared once"));
            }
            units = Some(u);
            continue;
        }
        let u = units.ok_or_else(|| Error::parse(origin, line_no, "missing `units <U>` header"))?;
        let mut mass = Vec::new();
        for token in line.split_whitespace() {
            let value = parse_number(token).map_err(|m| Error::parse(origin, line_no, m))?;
            let scaled = match value {
                Ok(r) => {
                    let s = r * num_rational::Ratio::from_integer(u as i64);
                    if !s.is_integer() || s < num_rational::Ratio::from_integer(0) {
                        return Err(Error::parse(origin, line_no, format!("`{token}` is not a multiple of 1/{u}")));
                    }
                    s.to_integer() as u64
                }
                Err(v) => {
                    let s = v * u as f64;
                    if s < -1e-9 || (s - s.round()).abs() > 1e-9 {
                        return Err(Error::parse(origin, line_no, format!("`{token}` is not a multiple of 1/{u}")));
                    }
                    s.round() as u64
                }
            };
            mass.push(scaled);
        }
        if let Some(first) = rows.first() {
            if first.len() != mass.len() {
                return Err(Error::parse(origin, line_no, "row length differs from the first row"));
            }
        }
        let row = MassVector::new(u, mass).map_err(|e| Error::parse(origin, line_no, e.to_string()))?;
        rows.push(row);
    }
    let mut rows = rows.into_iter();
    let initial = rows
        .next()
        .ok_or_else(|| Error::parse(origin, 1, "trace has no initial row"))?;
    FractionalTrace::new(initial, rows.collect())
}

pub fn replay_trace(path: impl AsRef<Path>) -> Result<FractionalTrace> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_trace(&text, &path.display().to_string())
}

/// Writes the format read by [`parse_trace`], entries as reduced `p/q`.
pub fn trace_to_text(trace: &FractionalTrace) -> String {
    let u = trace.units() as i64;
    let mut out = format!("units {u}\n");
    for t in 0..=trace.len() {
        let row: Vec<String> = trace
            .at(t)
            .mass()
            .iter()
            .map(|&m| {
                let r = num_rational::Ratio::new(m as i64, u);
                if r.is_integer() {
                    r.to_integer().to_string()
                } else {
                    format!("{}/{}", r.numer(), r.denom())
                }
            })
            .collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    out
}

/// Point masses alternating between `a` (even `t`) and `b` (odd `t`).
pub fn oscillating_trace(n: usize, steps: usize, a: usize, b: usize) -> Result<FractionalTrace> {
    if a >= n || b >= n {
        return Err(Error::Domain("oscillation endpoints out of range".into()));
    }
    let states = (1..=steps)
        .map(|t| MassVector::point(n, if t % 2 == 1 { b } else { a }, 1))
        .collect();
    FractionalTrace::new(MassVector::point(n, a, 1), states)
}

/// A sticky random walk over distributions on the `1/units` grid: most steps
/// shift a few units between two points, some jump to a fresh random
/// distribution. Starts from the point mass at `initial`.
pub fn random_trace(n: usize, steps: usize, units: u64, initial: usize, seed: u64) -> Result<FractionalTrace> {
    if initial >= n || units == 0 {
        return Err(Error::Domain("bad random trace parameters".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cur = MassVector::point(n, initial, units);
    let mut states = Vec::with_capacity(steps);
    for _ in 0..steps {
        let next = if rng.gen_bool(0.2) {
            random_composition(&mut rng, n, units)
        } else {
            let mut mass = cur.mass().to_vec();
            let from = loop {
                let p = rng.gen_range(0..n);
                if mass[p] > 0 {
                    break p;
                }
            };
            let to = rng.gen_range(0..n);
            let amount = rng.gen_range(1..=mass[from].min((units / 4).max(1)));
            mass[from] -= amount;
            mass[to] += amount;
            mass
        };
        cur = MassVector::new(units, next)?;
        states.push(cur.clone());
    }
    FractionalTrace::new(MassVector::point(n, initial, units), states)
}

fn random_composition(rng: &mut impl Rng, n: usize, units: u64) -> Vec<u64> {
    let mut cuts: Vec<u64> = (0..n - 1).map(|_| rng.gen_range(0..=units)).collect();
    cuts.sort_unstable();
    let mut mass = Vec::with_capacity(n);
    let mut last = 0;
    for c in cuts {
        mass.push(c - last);
        last = c;
    }
    mass.push(units - last);
    mass
}
