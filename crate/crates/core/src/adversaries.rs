//! Cost-sequence generators and the saturation-splitting preprocessor.

use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric::MetricSpace;
use crate::mts::{CostSequence, CostVector};
use crate::strategies::{DeterministicStrategy, PhaseLedger};

/// Order in which a phase saturates the points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PhasePattern {
    /// Points `0, 1, ..., n-1`.
    RoundRobin,
    /// Points `n-1, ..., 1, 0`, so point 0 is the last one standing.
    WorstLast,
}

impl FromStr for PhasePattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "round-robin" => Ok(PhasePattern::RoundRobin),
            "worst-last" => Ok(PhasePattern::WorstLast),
            _ => Err(Error::Config(format!("unknown phase pattern `{s}`"))),
        }
    }
}

/// `phases` full phases on `n` points, each delivering one unit of cost to a
/// single point per step until every point is saturated.
pub fn phase_adversary(n: usize, phases: usize, pattern: PhasePattern) -> Result<CostSequence> {
    if n == 0 {
        return Err(Error::Domain("phase adversary needs n >= 1".into()));
    }
    let order: Vec<usize> = match pattern {
        PhasePattern::RoundRobin => (0..n).collect(),
        PhasePattern::WorstLast => (0..n).rev().collect(),
    };
    let mut steps = Vec::with_capacity(n * phases);
    for _ in 0..phases {
        for &p in &order {
            steps.push(CostVector::single(n, p, 1.0)?);
        }
    }
    CostSequence::new(n, steps)
}

/// Co-simulates `algorithm` and puts `magnitude` on the state it occupies
/// before each step (zero elsewhere); the algorithm then reacts.
pub fn cruel_adversary<A: DeterministicStrategy + ?Sized>(
    m: &MetricSpace,
    algorithm: &mut A,
    steps: usize,
    magnitude: f64,
) -> Result<CostSequence> {
    let n = m.len();
    let mut seq = CostSequence::empty(n);
    for _ in 0..steps {
        let c = CostVector::single(n, algorithm.position(), magnitude)?;
        algorithm.step(m, &c);
        seq.push(c)?;
    }
    Ok(seq)
}

/// Splits every vector that would push a point past saturation so that the
/// point saturates exactly at a step boundary; the remainder follows in the
/// next vector(s). Per-point totals are preserved.
pub fn split_at_saturation(costs: &CostSequence, mut ledger: PhaseLedger) -> CostSequence {
    let n = costs.points();
    let mut out = Vec::with_capacity(costs.len());
    for c in costs.steps() {
        let mut rest = c.values().to_vec();
        loop {
            let acc = ledger.accumulated();
            let mut lambda = 1.0;
            let mut hits: Vec<usize> = Vec::new();
            for p in 0..n {
                if ledger.is_saturated(p) || rest[p] <= 0.0 {
                    continue;
                }
                let need = 1.0 - acc[p];
                if rest[p] > need {
                    let l = need / rest[p];
                    if l < lambda {
                        lambda = l;
                        hits.clear();
                        hits.push(p);
                    } else if l == lambda {
                        hits.push(p);
                    }
                }
            }
            if hits.is_empty() {
                ledger.absorb(&rest);
                out.push(CostVector::new(rest).expect("split preserves nonnegativity"));
                break;
            }
            let mut first: Vec<f64> = rest.iter().map(|v| v * lambda).collect();
            for &p in &hits {
                first[p] = 1.0 - acc[p];
            }
            let remainder: Vec<f64> = rest.iter().zip(&first).map(|(r, f)| (r - f).max(0.0)).collect();
            ledger.absorb(&first);
            out.push(CostVector::new(first).expect("split preserves nonnegativity"));
            if remainder.iter().all(|&v| v == 0.0) {
                break;
            }
            rest = remainder;
        }
    }
    CostSequence::new(n, out).expect("lengths preserved")
}

/// I.i.d. entries `scale · j/8` with `j` uniform in `0..=16`. Dyadic values
/// keep every partial sum exact.
pub fn random_costs(n: usize, steps: usize, seed: u64, scale: f64) -> Result<CostSequence> {
    if !(scale >= 0.0 && scale.is_finite()) {
        return Err(Error::Domain(format!("scale must be finite and >= 0, got {scale}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = (0..steps)
        .map(|_| CostVector::new((0..n).map(|_| scale * rng.gen_range(0..=16) as f64 / 8.0).collect()))
        .collect::<Result<Vec<_>>>()?;
    CostSequence::new(n, rows)
}
