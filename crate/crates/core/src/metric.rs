//! Finite metric spaces.
//!
//! Points are indexed `0..n`. Distances are `f64`; when every distance is a
//! multiple of a common `1/q` (integers, `p/q` entries, short decimals) the
//! space also carries the integer-valued *lattice* distances `q·d`, which the
//! transport solver uses so that sums over integer flows are exact.

use std::fmt;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{lcm_u64, parse_number, Rational};

/// Relative tolerance for triangle-inequality checks.
pub const TRIANGLE_TOL: f64 = 1e-9;

/// Largest common denominator kept for exact lattice distances.
const MAX_DENOMINATOR: i64 = 1 << 20;

/// Largest lattice distance; keeps `flow · distance` sums far below 2^53.
const MAX_LATTICE: f64 = (1u64 << 30) as f64;

/// The first invariant a candidate distance matrix breaks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Violation {
    NotFinite { i: usize, j: usize },
    NonZeroDiagonal { i: usize },
    Asymmetric { i: usize, j: usize },
    NonPositive { i: usize, j: usize },
    /// `d(i,k) > d(i,j) + d(j,k) + tol`.
    Triangle { i: usize, j: usize, k: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NotFinite { i, j } => write!(f, "d({i},{j}) is not finite"),
            Violation::NonZeroDiagonal { i } => write!(f, "d({i},{i}) != 0"),
            Violation::Asymmetric { i, j } => write!(f, "d({i},{j}) != d({j},{i})"),
            Violation::NonPositive { i, j } => write!(f, "d({i},{j}) <= 0"),
            Violation::Triangle { i, j, k } => {
                write!(f, "d({i},{k}) > d({i},{j}) + d({j},{k})")
            }
        }
    }
}

/// Checks the metric axioms on a raw matrix.
///
/// Returns `Ok(None)` when every invariant holds and `Ok(Some(v))` with the
/// first violation otherwise (pairs before triples, in row-major order).
pub fn validate(rows: &[Vec<f64>]) -> Result<Option<Violation>> {
    let n = rows.len();
    if let Some((i, row)) = rows.iter().enumerate().find(|(_, r)| r.len() != n) {
        return Err(Error::Structural(format!(
            "distance matrix is not square: row {i} has {} entries, expected {n}",
            row.len()
        )));
    }
    for i in 0..n {
        for j in 0..n {
            if !rows[i][j].is_finite() {
                return Ok(Some(Violation::NotFinite { i, j }));
            }
        }
    }
    for i in 0..n {
        if rows[i][i] != 0.0 {
            return Ok(Some(Violation::NonZeroDiagonal { i }));
        }
        for j in i + 1..n {
            if rows[i][j] != rows[j][i] {
                return Ok(Some(Violation::Asymmetric { i, j }));
            }
            if rows[i][j] <= 0.0 {
                return Ok(Some(Violation::NonPositive { i, j }));
            }
        }
    }
    let diameter = rows.iter().flatten().fold(0.0f64, |a, &b| a.max(b));
    let tol = TRIANGLE_TOL * diameter;
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                if rows[i][k] > rows[i][j] + rows[j][k] + tol {
                    return Ok(Some(Violation::Triangle { i, j, k }));
                }
            }
        }
    }
    Ok(None)
}

/// Replaces every entry by the shortest-path distance through the complete
/// graph (Floyd–Warshall). Idempotent on valid metrics.
pub fn shortest_path_repair(rows: &mut [Vec<f64>]) {
    let n = rows.len();
    for via in 0..n {
        for i in 0..n {
            for j in 0..n {
                let through = rows[i][via] + rows[via][j];
                if through < rows[i][j] {
                    rows[i][j] = through;
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricSpace {
    n: usize,
    dist: Vec<f64>,
    lattice: Vec<f64>,
    denominator: Option<u64>,
    diameter: f64,
    labels: Option<Vec<String>>,
}

impl MetricSpace {
    /// Builds a metric from a real matrix. Integer-valued matrices are exact.
    pub fn from_matrix(rows: Vec<Vec<f64>>) -> Result<Self> {
        let exact = rows.iter().flatten().all(|v| v.fract() == 0.0 && v.abs() <= MAX_LATTICE);
        Self::build(rows, exact.then_some(1))
    }

    /// Builds a metric from exact rationals, keeping lattice distances over
    /// the lcm of the denominators when it is small enough.
    pub(crate) fn from_rational_matrix(rows: Vec<Vec<Rational>>) -> Result<Self> {
        let mut denom: i64 = 1;
        for v in rows.iter().flatten() {
            let next = lcm_u64(denom as u64, *v.denom() as u64);
            if next > MAX_DENOMINATOR as u64 {
                denom = 0;
                break;
            }
            denom = next as i64;
        }
        let reals: Vec<Vec<f64>> = rows
            .iter()
            .map(|r| r.iter().map(|v| *v.numer() as f64 / *v.denom() as f64).collect())
            .collect();
        let exact = denom > 0
            && rows.iter().flatten().all(|v| {
                let scaled = (*v * denom).to_integer();
                (scaled as f64).abs() <= MAX_LATTICE
            });
        if !exact {
            return Self::build(reals, None);
        }
        let mut space = Self::build(reals, Some(denom as u64))?;
        space.lattice = rows.iter().flatten().map(|v| (*v * denom).to_integer() as f64).collect();
        Ok(space)
    }

    fn build(rows: Vec<Vec<f64>>, denominator: Option<u64>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Domain("a metric space needs at least one point".into()));
        }
        if let Some(v) = validate(&rows)? {
            return Err(Error::InvalidMetric(v.to_string()));
        }
        let n = rows.len();
        let dist: Vec<f64> = rows.into_iter().flatten().collect();
        let diameter = dist.iter().fold(0.0f64, |a, &b| a.max(b));
        let lattice = match denominator {
            Some(q) => dist.iter().map(|d| d * q as f64).collect(),
            None => dist.clone(),
        };
        Ok(MetricSpace {
            n,
            dist,
            lattice,
            denominator,
            diameter,
            labels: None,
        })
    }

    /// `n` points pairwise at distance 1.
    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Domain("uniform metric needs n >= 1".into()));
        }
        let rows = (0..n)
            .map(|i| (0..n).map(|j| if i == j { 0.0 } else { 1.0 }).collect())
            .collect();
        Self::from_matrix(rows)
    }

    /// Random integer weights in `1..=9`, repaired to a metric by shortest
    /// paths. Deterministic per `(n, seed)` and always exact.
    pub fn random_metric(n: usize, seed: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::Domain("random metric needs n >= 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in i + 1..n {
                let w = rng.gen_range(1..=9) as f64;
                rows[i][j] = w;
                rows[j][i] = w;
            }
        }
        shortest_path_repair(&mut rows);
        Self::from_matrix(rows)
    }

    /// `uniform:<n>`, `random:<n>:<seed>`, or a path to a metric file.
    pub fn from_desc(desc: &str) -> Result<Self> {
        let parts: Vec<&str> = desc.split(':').collect();
        match parts.as_slice() {
            ["uniform", n] => Self::uniform(parse_count(n, desc)?),
            ["random", n, seed] => Self::random_metric(
                parse_count(n, desc)?,
                seed.parse().map_err(|_| Error::Config(format!("bad seed in `{desc}`")))?,
            ),
            _ => Self::read(desc),
        }
    }

    /// Text format: first line `n`, then `n` lines of `n` entries. Entries may
    /// be integers, decimals, or `p/q`. Blank lines and `#` comments are skipped.
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
            .filter(|(_, l)| !l.is_empty());
        let (first_no, first) = lines
            .next()
            .ok_or_else(|| Error::parse(origin, 1, "empty metric file"))?;
        let n: usize = first
            .parse()
            .map_err(|_| Error::parse(origin, first_no, "first line must be the point count"))?;
        let mut exact_rows: Vec<Vec<Rational>> = Vec::with_capacity(n);
        let mut real_rows: Vec<Vec<f64>> = Vec::with_capacity(n);
        let mut all_exact = true;
        for (line_no, line) in lines {
            let mut exact_row = Vec::new();
            let mut real_row = Vec::new();
            for token in line.split_whitespace() {
                match parse_number(token).map_err(|m| Error::parse(origin, line_no, m))? {
                    Ok(r) => {
                        real_row.push(*r.numer() as f64 / *r.denom() as f64);
                        exact_row.push(r);
                    }
                    Err(v) => {
                        all_exact = false;
                        real_row.push(v);
                    }
                }
            }
            exact_rows.push(exact_row);
            real_rows.push(real_row);
        }
        if real_rows.len() != n {
            return Err(Error::Structural(format!(
                "{origin}: declared {n} points but found {} rows",
                real_rows.len()
            )));
        }
        if all_exact && exact_rows.iter().all(|r| r.len() == n) {
            Self::from_rational_matrix(exact_rows)
        } else {
            Self::from_matrix(real_rows)
        }
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Writes the text format: `p/q` entries for exact rational metrics,
    /// shortest round-trip floats otherwise, so `parse` restores the metric.
    pub fn to_text(&self) -> String {
        let mut out = format!("{}\n", self.n);
        let entry = |i: usize, j: usize| match self.denominator {
            Some(q) if q > 1 => format!("{}/{q}", self.lattice(i, j)),
            _ => format!("{}", self.d(i, j)),
        };
        for i in 0..self.n {
            let row: Vec<String> = (0..self.n).map(|j| entry(i, j)).collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.n {
            return Err(Error::Structural(format!(
                "{} labels for {} points",
                labels.len(),
                self.n
            )));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn d(&self, i: usize, j: usize) -> f64 {
        self.dist[i * self.n + j]
    }

    /// `q · d(i,j)`: integer-valued when the space is exact.
    #[inline]
    pub fn lattice(&self, i: usize, j: usize) -> f64 {
        self.lattice[i * self.n + j]
    }

    /// The factor `q` relating lattice to real distances (1 when inexact).
    pub fn lattice_scale(&self) -> f64 {
        self.denominator.map_or(1.0, |q| q as f64)
    }

    /// True when lattice distances are integers, so sums of integer flows
    /// times lattice distances are computed without rounding.
    pub fn is_exact(&self) -> bool {
        self.denominator.is_some()
    }

    pub fn diameter(&self) -> f64 {
        self.diameter
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.dist.chunks(self.n.max(1)).map(<[f64]>::to_vec).collect()
    }

    /// All off-diagonal distances equal 1.
    pub fn is_uniform(&self) -> bool {
        (0..self.n).all(|i| (0..self.n).all(|j| i == j || self.d(i, j) == 1.0))
    }

    /// Tolerance for comparing sums of `flow · lattice` at `units` mass units:
    /// zero when exact, `1e-9 · diameter` (in lattice-work units) otherwise.
    pub fn work_tolerance(&self, units: u64) -> f64 {
        if self.is_exact() {
            0.0
        } else {
            TRIANGLE_TOL * self.diameter * units as f64
        }
    }
}

fn parse_count(token: &str, desc: &str) -> Result<usize> {
    token
        .parse()
        .map_err(|_| Error::Config(format!("bad point count in `{desc}`")))
}
