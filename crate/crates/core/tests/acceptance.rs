//! End-to-end acceptance checks. Each criterion prints one pass/fail line.

use collective_mts::adversaries::{cruel_adversary, phase_adversary, random_costs, PhasePattern};
use collective_mts::discretizer::{verify_necessary_condition, DiscretizerConfig, CERTIFICATE_TOL};
use collective_mts::harness::{run, run_pipeline, RunArtifacts, RunConfig};
use collective_mts::mts::{fractional_cost, fractional_step_costs, offline_opt, trajectory_cost, IntegralTrajectory};
use collective_mts::strategies::{run_deterministic, run_fractional, BallsAndUrns, FractionalStrategy, Greedy, UniformFractional};
use collective_mts::transport::{self, drain_step, ot_cost};
use collective_mts::{CostSequence, MassVector, MetricSpace};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn harmonic(n: usize) -> f64 {
    (1..=n).map(|i| 1.0 / i as f64).sum()
}

/// The mixed workload shared by criteria 1, 4 and 8.
fn workload_config(i: usize) -> RunConfig {
    let n = 2 + i % 3;
    let k = (n * n) as u64;
    let seed = 1000 + i as u64;
    let kind = (i / 3) % 5;
    let (metric, costs, strategy) = match kind {
        0 => (format!("random:{n}:{seed}"), format!("random:{n}:50:{seed}"), format!("random:{}:{seed}", [n, 2 * n, 12, 7][i % 4])),
        1 => (format!("uniform:{n}"), format!("random:{n}:50:{seed}"), format!("random:{}:{seed}", [6, 12, 5][i % 3])),
        2 => (format!("random:{n}:{seed}"), format!("random:{n}:50:{seed}"), "oscillate".to_string()),
        3 => (format!("uniform:{n}"), format!("random:{n}:50:{seed}:0.5"), "uniform_fractional".to_string()),
        _ => (format!("uniform:{n}"), format!("random:{n}:50:{seed}:0.5"), "balls_urns".to_string()),
    };
    let mut cfg = RunConfig::new(&metric, &costs, &strategy, k);
    cfg.initial = i % n;
    cfg.verify_necessary = Some(false);
    cfg
}

fn workload() -> Result<Vec<RunArtifacts>, String> {
    (0..200)
        .into_par_iter()
        .map(|i| run_pipeline(&workload_config(i)).map_err(|e| format!("run {i}: {e}")))
        .collect()
}

fn criterion_1(runs: &[RunArtifacts]) -> Outcome {
    let mut steps = 0;
    for (i, a) in runs.iter().enumerate() {
        let m = &a.metric;
        let d = &a.discretization;
        for c in &d.certificates {
            steps += 1;
            ensure(c.dominance_ok, || format!("run {i} step {}: dominance violated", c.t))?;
            ensure(c.descent_ok, || format!("run {i} step {}: descent slack {}", c.t, c.descent_slack))?;
        }
        let b = collective_mts::discretizer::check_bounds(m, &a.y, &d.x, &a.costs, d.initial_potential)
            .map_err(|e| e.to_string())?;
        let t = a.costs.len() as f64;
        ensure(b.movement_x <= b.initial_potential + 2.0 * b.movement_y + t * CERTIFICATE_TOL * m.diameter(), || {
            format!("run {i}: Mvt(x) = {} > P(0) + 2 Mvt(y) = {}", b.movement_x, b.initial_potential + 2.0 * b.movement_y)
        })?;
        ensure(b.service_ok, || format!("run {i}: service gap {} < 0", b.service_gap))?;
        ensure(b.initial_potential_within_twice_diameter, || format!("run {i}: P(0) = {}", b.initial_potential))?;
    }
    Ok(format!("{} runs, {steps} steps, zero violations", runs.len()))
}

fn criterion_2() -> Outcome {
    let cases: Vec<(usize, u64)> = (0..24).map(|i| (2 + i % 2, i as u64)).collect();
    let results: Vec<Result<(usize, f64), String>> = cases
        .par_iter()
        .map(|&(n, seed)| {
            let metric = if seed % 3 == 0 { format!("uniform:{n}") } else { format!("random:{n}:{seed}") };
            let strategy = match seed % 4 {
                0 | 1 => format!("random:{}:{seed}", 2 * n),
                2 => "oscillate".into(),
                _ => "greedy".into(),
            };
            let mut cfg = RunConfig::new(&metric, &format!("random:{n}:20:{seed}"), &strategy, (n * n) as u64);
            cfg.verify_necessary = Some(true);
            let a = run_pipeline(&cfg).map_err(|e| e.to_string())?;
            let m = &a.metric;
            let dcfg = DiscretizerConfig::new((n * n) as u64);
            let mut worst = f64::INFINITY;
            for t in 1..=a.costs.len() {
                let s = verify_necessary_condition(m, &dcfg, a.discretization.x.at(t), a.y.at(t)).map_err(|e| e.to_string())?;
                ensure(s > -CERTIFICATE_TOL * m.diameter(), || format!("{metric} step {t}: slack {s}"))?;
                if m.is_exact() {
                    ensure(s > 0.0, || format!("{metric} step {t}: exact slack {s} not positive"))?;
                }
                ensure(a.discretization.certificates[t - 1].necessary_slack == Some(s), || "stored slack differs".into())?;
                worst = worst.min(s);
            }
            Ok((a.costs.len(), worst))
        })
        .collect();
    let mut steps = 0;
    let mut worst = f64::INFINITY;
    for r in results {
        let (s, w) = r?;
        steps += s;
        worst = worst.min(w);
    }
    Ok(format!("{} runs, {steps} steps, worst slack {worst:.4}", cases.len()))
}

fn random_mass(rng: &mut ChaCha8Rng, n: usize, units: u64) -> MassVector {
    let mut mass = vec![0; n];
    for _ in 0..units {
        mass[rng.gen_range(0..n)] += 1;
    }
    MassVector::new(units, mass).unwrap()
}

/// Minimum over every integral coupling of `a` and `b`.
fn brute_force_ot(m: &MetricSpace, a: &MassVector, b: &MassVector) -> f64 {
    fn rec(m: &MetricSpace, a: &[u64], cols: &mut Vec<u64>, row: usize, acc: f64, best: &mut f64) {
        let n = a.len();
        if row == n {
            if cols.iter().all(|&c| c == 0) && acc < *best {
                *best = acc;
            }
            return;
        }
        #[allow(clippy::too_many_arguments)]
        fn fill(m: &MetricSpace, a: &[u64], cols: &mut Vec<u64>, row: usize, j: usize, left: u64, acc: f64, best: &mut f64) {
            let n = a.len();
            if j == n - 1 {
                if left <= cols[j] {
                    cols[j] -= left;
                    rec(m, a, cols, row + 1, acc + left as f64 * m.lattice(row, j), best);
                    cols[j] += left;
                }
                return;
            }
            for f in 0..=left.min(cols[j]) {
                cols[j] -= f;
                fill(m, a, cols, row, j + 1, left - f, acc + f as f64 * m.lattice(row, j), best);
                cols[j] += f;
            }
        }
        fill(m, a, cols, row, 0, a[row], acc, best);
    }
    let mut best = f64::INFINITY;
    let mut cols = b.mass().to_vec();
    rec(m, a.mass(), &mut cols, 0, 0.0, &mut best);
    best / (a.units() as f64 * m.lattice_scale())
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut drained = 0;
    while drained < 1000 {
        let n = rng.gen_range(2..=5);
        let m = if rng.gen_bool(0.3) { MetricSpace::uniform(n) } else { MetricSpace::random_metric(n, rng.gen()) }.unwrap();
        let units = rng.gen_range(2..=6) * n as u64 * 2;
        let z = random_mass(&mut rng, n, units);
        let y = random_mass(&mut rng, n, units);
        let Some(rho) = (0..n).find(|&p| z.get(p) >= y.get(p) + n as u64) else { continue };
        let alpha = rng.gen_range(1..=(z.get(rho) - y.get(rho)) / n as u64);
        let (to, z2) = drain_step(&m, &z, &y, rho, alpha).map_err(|e| e.to_string())?;
        let lhs = ot_cost(&m, &z, &y).unwrap();
        let rhs = alpha as f64 / units as f64 * m.d(rho, to) + ot_cost(&m, &z2, &y).unwrap();
        ensure((lhs - rhs).abs() <= CERTIFICATE_TOL * m.diameter(), || format!("drain identity {lhs} vs {rhs}"))?;
        drained += 1;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    for i in 0..200 {
        let n = rng.gen_range(2..=4);
        let m = if i % 4 == 0 { MetricSpace::uniform(n) } else { MetricSpace::random_metric(n, rng.gen()) }.unwrap();
        let units = rng.gen_range(1..=8);
        let a = random_mass(&mut rng, n, units);
        let b = random_mass(&mut rng, n, units);
        let fast = ot_cost(&m, &a, &b).unwrap();
        let slow = brute_force_ot(&m, &a, &b);
        ensure(fast == slow, || format!("instance {i}: ot {fast} vs brute force {slow}"))?;
    }
    Ok("1000 drain identities, 200 brute-force couplings exact".into())
}

fn criterion_4(runs: &[RunArtifacts]) -> Outcome {
    for (i, a) in runs.iter().enumerate() {
        let m = &a.metric;
        let x = &a.discretization.x;
        let k = x.units();
        let t_len = x.len();
        for t in 0..=t_len {
            ensure(a.collective.assignment_at(t).counts(m.len()) == x.at(t).mass(), || {
                format!("run {i} t {t}: agent counts differ from k·x(t)")
            })?;
        }
        for t in 1..=t_len {
            let agents_work: f64 = a
                .collective
                .trajectories
                .iter()
                .map(|tr| m.lattice(tr.at(t - 1), tr.at(t)))
                .sum();
            let ot_work = transport::solve(m, x.at(t - 1), x.at(t)).unwrap().work;
            if m.is_exact() {
                ensure(agents_work == ot_work, || format!("run {i} t {t}: agent work {agents_work} vs {ot_work}"))?;
            } else {
                ensure((agents_work - ot_work).abs() <= CERTIFICATE_TOL * m.diameter() * k as f64, || {
                    format!("run {i} t {t}: agent work {agents_work} vs {ot_work}")
                })?;
            }
        }
        let frac = fractional_cost(m, x, &a.costs).unwrap();
        let tol = CERTIFICATE_TOL * t_len as f64 * m.diameter();
        let per_agent: Vec<_> = a
            .collective
            .trajectories
            .iter()
            .map(|tr| trajectory_cost(m, tr, &a.costs).unwrap())
            .collect();
        let avg_mv = per_agent.iter().map(|c| c.movement).sum::<f64>() / k as f64;
        let avg_sv = per_agent.iter().map(|c| c.service).sum::<f64>() / k as f64;
        ensure((avg_mv - frac.movement).abs() <= tol, || format!("run {i}: movement {avg_mv} vs {}", frac.movement))?;
        ensure((avg_sv - frac.service).abs() <= tol, || format!("run {i}: service {avg_sv} vs {}", frac.service))?;
    }
    Ok(format!("{} runs: counts exact, movement exact per step, averages match", runs.len()))
}

fn criterion_5() -> Outcome {
    let mut notes = Vec::new();
    for &n in &[3usize, 5, 8] {
        let m = MetricSpace::uniform(n).unwrap();
        let h = harmonic(n);
        let costs = collective_mts::adversaries::split_at_saturation(
            &phase_adversary(n, 10, PhasePattern::WorstLast).unwrap(),
            collective_mts::strategies::PhaseLedger::new(n),
        );
        let opt = offline_opt(&m, &costs, 0).unwrap().value;

        let mut uf = UniformFractional::new(&m, 0).unwrap();
        let trace = run_fractional(&mut uf.clone(), &costs).unwrap();
        let steps = fractional_step_costs(&m, &trace, &costs).unwrap();
        let (mut mv, mut total, mut phases, mut worst_mv, mut worst_total) = (0.0, 0.0, 0, 0.0f64, 0.0f64);
        for (t, c) in costs.steps().iter().enumerate() {
            uf.step(c).unwrap();
            let (smv, ssv) = steps[t];
            if uf.completed_phase() {
                // the completing step's movement is the reset back to uniform
                total += ssv;
                ensure(mv <= h + 1e-9, || format!("n={n}: phase movement {mv} > H_n = {h}"))?;
                ensure(total <= 2.0 * h + 1e-9, || format!("n={n}: phase total {total} > 2H_n"))?;
                worst_mv = worst_mv.max(mv);
                worst_total = worst_total.max(total);
                phases += 1;
                mv = 0.0;
                total = 0.0;
            } else {
                mv += smv;
                total += smv + ssv;
            }
        }
        ensure(phases == 10, || format!("n={n}: {phases} phases completed"))?;

        let mut bu = BallsAndUrns::new(&m, 0).unwrap();
        let bt = run_fractional(&mut bu, &costs).unwrap();
        let cap = n as f64 * ((n as f64).ln() + 3.0);
        for (p, &r) in bu.phase_relocations().iter().enumerate() {
            ensure(r as f64 <= cap, || format!("n={n} phase {p}: {r} relocations > {cap}"))?;
        }
        let cost = fractional_cost(&m, &bt, &costs).unwrap().total;
        let bound = (2.0 * h + 6.0) * opt + m.diameter();
        ensure(cost <= bound, || format!("n={n}: balls-and-urns cost {cost} > {bound}"))?;
        notes.push(format!(
            "n={n}: UF phase mvt {worst_mv:.3}/{h:.3}, total {worst_total:.3}; B&U {cost:.2} <= {bound:.2}"
        ));
    }
    Ok(notes.join("; "))
}

fn enumerate_opt(m: &MetricSpace, costs: &CostSequence, initial: usize) -> f64 {
    let n = m.len();
    let t_len = costs.len();
    let mut best = f64::INFINITY;
    for code in 0..n.pow(t_len as u32) {
        let mut c = code;
        let states: Vec<usize> = (0..t_len)
            .map(|_| {
                let s = c % n;
                c /= n;
                s
            })
            .collect();
        let v = trajectory_cost(m, &IntegralTrajectory { initial, states }, costs).unwrap().total;
        best = best.min(v);
    }
    best
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for i in 0..50 {
        let n = rng.gen_range(1..=3);
        let t_len = rng.gen_range(0..=6);
        let m = if i % 3 == 0 { MetricSpace::uniform(n) } else { MetricSpace::random_metric(n, rng.gen()) }.unwrap();
        let costs = random_costs(n, t_len, rng.gen(), 1.0).unwrap();
        let initial = rng.gen_range(0..n);
        let dp = offline_opt(&m, &costs, initial).unwrap();
        let brute = enumerate_opt(&m, &costs, initial);
        ensure(dp.value == brute, || format!("instance {i}: DP {} vs enumeration {brute}", dp.value))?;
        let replay = trajectory_cost(&m, &dp.trajectory, &costs).unwrap().total;
        ensure(replay == dp.value, || format!("instance {i}: DP trajectory costs {replay}"))?;
    }
    Ok("50 instances, DP equals enumeration exactly".into())
}

fn criterion_7() -> Outcome {
    let mut ratios = Vec::new();
    for n in 2..=4 {
        let m = MetricSpace::uniform(n).unwrap();
        let costs = cruel_adversary(&m, &mut Greedy::new(0), 200, 1.5).unwrap();
        let trace = run_deterministic(&mut Greedy::new(0), &m, &costs);
        let alg = fractional_cost(&m, &trace, &costs).unwrap().total;
        let opt = offline_opt(&m, &costs, 0).unwrap().value;
        let ratio = (alg - m.diameter()) / opt;
        ensure(ratio >= n as f64 / 2.0, || format!("n={n}: ratio {ratio} < n/2"))?;
        if let Some(&prev) = ratios.last() {
            ensure(ratio >= prev, || format!("n={n}: ratio {ratio} below {prev}"))?;
        }
        ratios.push(ratio);
    }
    Ok(format!("β-adjusted ratios {:?}", ratios.iter().map(|r| format!("{r:.3}")).collect::<Vec<_>>()))
}

fn criterion_8(runs: &[RunArtifacts]) -> Outcome {
    let mut worst: f64 = 0.0;
    for (i, a) in runs.iter().enumerate() {
        let n = a.metric.len();
        let tau = 1.0 / (n * n) as f64;
        let f = collective_mts::mts::fixed_cost_accounting(&a.metric, &a.discretization.x, tau).unwrap();
        ensure(f.fixed <= f.variable + 1e-12, || format!("run {i}: fixed {} > variable {}", f.fixed, f.variable))?;
        ensure(f.fixed + f.variable <= 2.0 * f.variable + 1e-12, || format!("run {i}: total exceeds twice variable"))?;
        if f.variable > 0.0 {
            worst = worst.max(f.fixed / f.variable);
        }
    }
    Ok(format!("{} runs, worst fixed/variable {worst:.3}", runs.len()))
}

fn criterion_9() -> Outcome {
    let configs = [
        RunConfig::new("uniform:3", "phase:3:5", "uniform_fractional", 9),
        RunConfig::new("random:4:7", "random:4:30:7", "random:12:7", 16),
        RunConfig::new("uniform:2", "cruel:greedy:20", "greedy", 4),
    ];
    for cfg in &configs {
        let a = run(cfg).map_err(|e| e.to_string())?;
        let b = run(cfg).map_err(|e| e.to_string())?;
        ensure(a.trace == b.trace, || format!("{}: traces differ", cfg.metric))?;
        ensure(a.report_json == b.report_json, || format!("{}: reports differ", cfg.metric))?;
    }
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut bytes = Vec::new();
    for _ in 0..2 {
        let mut cfg = configs[1].clone();
        cfg.output.trace = Some(dir.path().join("t.jsonl"));
        cfg.output.report = Some(dir.path().join("r.json"));
        collective_mts::harness::run_and_write(&cfg).map_err(|e| e.to_string())?;
        bytes.push((
            std::fs::read(dir.path().join("t.jsonl")).unwrap(),
            std::fs::read(dir.path().join("r.json")).unwrap(),
        ));
    }
    ensure(bytes[0] == bytes[1], || "written files differ".into())?;
    Ok(format!("{} configs byte-identical across repeats", configs.len()))
}

#[test]
fn acceptance() {
    let runs = workload();
    let shared = |f: fn(&[RunArtifacts]) -> Outcome| match &runs {
        Ok(r) => f(r),
        Err(e) => Err(e.clone()),
    };
    let results = vec![
        ("1 discretizer certificates", shared(criterion_1)),
        ("2 exhaustive necessary condition", criterion_2()),
        ("3 drain identity and OT oracle", criterion_3()),
        ("4 collective equivalence", shared(criterion_4)),
        ("5 uniform metric phases", criterion_5()),
        ("6 offline optimum oracle", criterion_6()),
        ("7 lower-bound pressure", criterion_7()),
        ("8 fixed transaction costs", shared(criterion_8)),
        ("9 determinism", criterion_9()),
    ];
    let mut failed = 0;
    for (name, r) in &results {
        match r {
            Ok(msg) => println!("criterion {name}: PASS ({msg})"),
            Err(msg) => {
                failed += 1;
                println!("criterion {name}: FAIL ({msg})");
            }
        }
    }
    assert_eq!(failed, 0, "{failed} acceptance criteria failed");
}

