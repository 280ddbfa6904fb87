//! Acceptance criteria 1-8. Runs as a plain binary (`harness = false`) so
//! that every criterion prints exactly one PASS/FAIL line, in order.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use polycube::cubature_ct::check_ct_matrices;
use polycube::simulate::{Reference, Target, Z_CRIT};
use polycube::{
    asymptotic, build_g, build_h, check_a1, check_ct, compare_moments, discrete_rule, expm,
    gauss_for_spec, gauss_points_1d, lift, multi_time_moment, polygon_order, rank,
    simulate_ctmc, simulate_dtmc, simulate_sde, to_signed_measures, two_time_expectation,
    verify_dt, weights_matrix, GeneratorMatrix, Matrix, Polynomial, ProcessSpec, SimConfig,
    SimReport, Tolerances, Vector,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome, Duration);

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn inf(m: &Matrix) -> f64 {
    m.row_iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
}

fn ou(n: usize) -> GeneratorMatrix {
    build_g(&ProcessSpec::pearson(1.0, 0.5, 1.0, 0.0, 0.0), n).unwrap()
}

fn gauss3(tol: &Tolerances) -> Vec<Vec<f64>> {
    gauss_for_spec(&ProcessSpec::pearson(1.0, 0.5, 1.0, 0.0, 0.0), 2, 3, tol)
        .unwrap()
        .points
}

/// Two-point OU rules: feasibility iff x1 <= theta <= x2, and the closed-form L.
fn criterion_1() -> Outcome {
    let tol = Tolerances::default();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut feasible = 0;
    for k in 0..200 {
        let kappa = rng.random_range(0.1..5.0);
        let theta = rng.random_range(-3.0..3.0);
        let (a, b): (f64, f64) = (rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
        let (x1, x2) = (a.min(b), a.max(b));
        let g = build_g(&ProcessSpec::pearson(kappa, theta, 1.0, 0.0, 0.0), 1).unwrap();
        let check = check_ct(&g, &[vec![x1], vec![x2]], &tol).unwrap();
        let expected = x1 <= theta && theta <= x2;
        ensure(check.feasible() == expected, || {
            format!("case {k}: kappa={kappa} theta={theta} x=({x1},{x2}) feasible={}", check.feasible())
        })?;
        if let Some(rule) = check.rule {
            feasible += 1;
            let up = kappa * (theta - x1) / (x2 - x1);
            let down = kappa * (x2 - theta) / (x2 - x1);
            let want = Matrix::from_row_slice(2, 2, &[-up, up, down, -down]);
            let err = (&rule.l - &want).amax();
            ensure(err <= 1e-9, || format!("case {k}: L differs from the closed form by {err:e}"))?;
        }
    }
    Ok(format!("200 triples, {feasible} feasible, all match"))
}

/// Pearson counterexample: no three points carry a rule.
fn criterion_2() -> Outcome {
    let tol = Tolerances::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut tested = 0;
    for a in [1.42, 1.5, 1.9] {
        let g = build_g(&ProcessSpec::pearson(1.0, 0.0, 1.0, a, 1.0), 2).unwrap();
        for _ in 0..1000 {
            let mut x: Vec<f64> = (0..3).map(|_| rng.random_range(-5.0..5.0)).collect();
            x.sort_by(f64::total_cmp);
            let pts: Vec<Vec<f64>> = x.iter().map(|&v| vec![v]).collect();
            let check = check_ct(&g, &pts, &tol).unwrap();
            ensure(!check.feasible(), || format!("a={a}: false feasibility at {x:?}"))?;
            tested += 1;
        }
    }
    Ok(format!("{tested} triples, 0 feasible"))
}

fn poly(d: usize, terms: &[(Vec<u32>, f64)]) -> Polynomial {
    Polynomial::from_terms(d, terms.iter().cloned()).unwrap()
}

fn random_spec(rng: &mut ChaCha8Rng, d: usize) -> ProcessSpec {
    if d == 1 {
        let kappa = rng.random_range(0.3..2.0);
        let theta = rng.random_range(-1.0..1.0);
        let alpha = rng.random_range(0.2..1.5);
        let a = rng.random_range(-0.5..0.5);
        let big_a = rng.random_range(0.0..0.5);
        return ProcessSpec::pearson(kappa, theta, alpha, a, big_a);
    }
    // dX = (c + B X) dt with B stable (optionally rotating), and
    // a(x) = S + s x x^T with S positive definite.
    let decay = [rng.random_range(0.3..1.5), rng.random_range(0.3..1.5)];
    let spin = if rng.random_bool(0.5) { rng.random_range(0.2..1.5) } else { 0.0 };
    let shear = rng.random_range(-0.3..0.3);
    let b = [[-decay[0], spin + shear], [-spin, -decay[1]]];
    let c = [rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5)];
    let l = [rng.random_range(0.3..1.0), rng.random_range(-0.3..0.3), rng.random_range(0.3..1.0)];
    let sig = [[l[0] * l[0], l[0] * l[1]], [l[0] * l[1], l[1] * l[1] + l[2] * l[2]]];
    let s = rng.random_range(0.0..0.2);
    let drift = (0..2)
        .map(|i| {
            poly(2, &[(vec![0, 0], c[i]), (vec![1, 0], b[i][0]), (vec![0, 1], b[i][1])])
        })
        .collect();
    let unit = |i: usize, j: usize| {
        let mut e = vec![0u32, 0];
        e[i] += 1;
        e[j] += 1;
        e
    };
    let diffusion = (0..2)
        .map(|i| (0..2).map(|j| poly(2, &[(vec![0, 0], sig[i][j]), (unit(i, j), s)])).collect())
        .collect();
    ProcessSpec::new(drift, diffusion).unwrap()
}

/// Lifted rules for random specs satisfying A1.
fn criterion_3() -> Outcome {
    let tol = Tolerances::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut done = 0;
    let mut polygons = 0;
    let mut worst_residual: f64 = 0.0;
    let mut worst_moment: f64 = 0.0;
    while done < 20 {
        let d = 1 + done % 2;
        let n = 2 + (done / 2) % 2;
        let spec = random_spec(&mut rng, d);
        let g = build_g(&spec, n).unwrap();
        if !check_a1(&g, &tol).unwrap() {
            continue;
        }
        let rule = lift(&g, &tol).map_err(|e| format!("spec {done} (d={d}, n={n}): {e}"))?;
        let bound = 1e-7 * (1.0 + inf(&g.g));
        let residual = inf(&(&rule.s * &g.g - &rule.l * &rule.s));
        ensure(residual <= bound, || format!("spec {done}: ||SG - LS|| = {residual:e} > {bound:e}"))?;
        worst_residual = worst_residual.max(residual / bound);
        let r = rank(&rule.s, tol.rank);
        ensure(r == g.len(), || format!("spec {done}: rank S = {r}, need {}", g.len()))?;
        for i in 0..rule.l.nrows() {
            let row = rule.l.row(i);
            let off_ok = (0..row.len()).all(|j| j == i || row[j] >= 0.0);
            ensure(off_ok && row.sum().abs() <= 1e-10 * (1.0 + row[i].abs()), || {
                format!("spec {done}: row {i} of L is not a rate row")
            })?;
        }
        for t in [0.25, 1.0, 4.0] {
            let lhs = expm(&(&rule.l * t)).unwrap() * &rule.s;
            let rhs = &rule.s * expm(&(&g.g * t)).unwrap();
            let err = (lhs - rhs).row_iter().map(|r| r.amax()).fold(0.0, f64::max);
            worst_moment = worst_moment.max(err);
            ensure(err <= 1e-6, || format!("spec {done}: moment identity off by {err:e} at t={t}"))?;
        }
        if rule.provenance.iter().any(|p| p.construction != "canonical" && p.construction != "hypercube") {
            polygons += 1;
        }
        done += 1;
    }
    Ok(format!(
        "20 specs ({polygons} with polygon blocks), worst residual/bound {worst_residual:.1e}, worst moment error {worst_moment:.1e}"
    ))
}

/// Signed-measure weights on three Gauss points.
fn criterion_4() -> Outcome {
    let tol = Tolerances::default();
    let g = ou(2);
    let rule = lift(&g, &tol).map_err(|e| e.to_string())?;
    let smr = to_signed_measures(&rule, &gauss3(&tol), &tol).map_err(|e| e.to_string())?;
    let mut mins = Vec::new();
    for t in [0.5, 1.0, 2.0] {
        let w = weights_matrix(&smr, &rule.l, t).unwrap();
        for (i, r) in w.row_iter().enumerate() {
            let s = r.sum();
            ensure((s - 1.0).abs() <= 1e-9, || format!("t={t}: row {i} of W sums to {s}"))?;
        }
        let err = (&w * &smr.h - &smr.h * expm(&(&g.g * t)).unwrap()).amax();
        ensure(err <= 1e-7, || format!("t={t}: ||WH - He^(tG)|| = {err:e}"))?;
        mins.push((t, w.min()));
    }
    ensure(mins[0].1 < 0.0, || format!("W(0.5) has no negative entry: {mins:?}"))?;
    let x = Polynomial::var(1, 0);
    let mut worst: f64 = 0.0;
    for i in 0..3 {
        for (s, t) in [(0.5, 1.0), (0.25, 2.0), (1.0, 1.5)] {
            let got = two_time_expectation(&smr, &rule.l, &x, &x, s, t, i).unwrap();
            let want =
                multi_time_moment(&g, &smr.points[i], &[(s, x.clone()), (t, x.clone())]).unwrap();
            worst = worst.max((got - want).abs());
        }
    }
    ensure(worst <= 1e-6, || format!("two-time formula off by {worst:e}"))?;
    Ok(format!(
        "min W entries {}; two-time error {worst:.1e}",
        mins.iter().map(|(t, m)| format!("t={t}: {m:.4}")).collect::<Vec<_>>().join(", ")
    ))
}

fn discrete_ou(tol: &Tolerances) -> Result<polycube::DtRule, String> {
    discrete_rule(&ou(2), &gauss3(tol), 0.01, tol).map_err(|e| e.to_string())
}

/// Discrete rule with strictly positive Q.
fn criterion_5() -> Outcome {
    let tol = Tolerances::default();
    let g = ou(2);
    let rule = discrete_ou(&tol)?;
    let min = rule.q.min();
    ensure(min >= 1e-6, || format!("min Q entry {min:e}"))?;
    let residual = inf(&(&rule.h * expm(&(&g.g * rule.delta)).unwrap() - &rule.q * &rule.h));
    ensure(residual <= 1e-8, || format!("||He^(dG) - QH|| = {residual:e}"))?;
    let report = verify_dt(&rule, &g, 10, &tol).unwrap();
    let worst = report.residuals.iter().copied().fold(0.0, f64::max);
    ensure(worst <= 1e-7 && report.passed, || format!("verify_dt failed: {report:?}"))?;
    Ok(format!("delta = {:.5}, min Q = {min:.2e}, worst power residual {worst:.1e}", rule.delta))
}

/// Long-run moments, and the martingale example without A2.
fn criterion_6() -> Outcome {
    let tol = Tolerances::default();
    let a = asymptotic(&ou(2), &tol).unwrap();
    ensure(a.a2_holds, || "A2 fails for OU".into())?;
    let mu = a.mu.unwrap();
    let err = (&mu - Vector::from_vec(vec![1.0, 0.5, 0.75])).amax();
    ensure(err <= 1e-8, || format!("mu = {mu:?}"))?;

    // Gf = -x f' + x^2 f'': x^2 is a martingale.
    let g = build_g(&ProcessSpec::pearson(1.0, 0.0, 0.0, 0.0, 2.0), 2).unwrap();
    let m = asymptotic(&g, &tol).unwrap();
    ensure(!m.a2_holds && m.a1_holds, || format!("martingale example: {}", m.check.describe()))?;
    let mut worst: f64 = 0.0;
    for x in [-2.0, -0.3, 0.0, 0.7, 1.5] {
        let lim = m.limit_at(&g, &[x]).unwrap().unwrap();
        worst = worst.max((lim[2] - x * x).abs());
    }
    ensure(worst <= 1e-8, || format!("limit of E_x[X^2] off by {worst:e}"))?;

    // Read literally (Gf = -x f' + x f''), 0 is simple and A2 holds.
    let literal = build_g(&ProcessSpec::pearson(1.0, 0.0, 0.0, 2.0, 0.0), 2).unwrap();
    let l = asymptotic(&literal, &tol).unwrap();
    ensure(l.a2_holds, || "literal martingale example should satisfy A2".into())?;
    Ok(format!("mu error {err:.1e}; martingale limit error {worst:.1e}; literal reading has A2"))
}

fn z_summary(reports: &[&SimReport]) -> String {
    let worst = reports
        .iter()
        .flat_map(|r| r.rows.iter())
        .map(|r| r.z_score.abs())
        .fold(0.0, f64::max);
    let rows: usize = reports.iter().map(|r| r.rows.len()).sum();
    format!("{rows} targets, max |z| = {worst:.2}")
}

/// Closed-form moments of OU started at `x`, for all basis monomials past
/// the constant, at each time.
fn ou_exact(g: &GeneratorMatrix, x: f64, times: &[f64]) -> (Vec<Target>, Vec<f64>) {
    let mut targets = Vec::new();
    let mut exact = Vec::new();
    let h = polycube::eval_basis(&[x], &g.basis).unwrap();
    for &t in times {
        let m = expm(&(&g.g * t)).unwrap().tr_mul(&h);
        for j in 1..g.len() {
            targets.push(Target::new(g.basis.monomial(j), t));
            exact.push(m[j]);
        }
    }
    (targets, exact)
}

/// Monte Carlo cross-checks of the diffusion and of both chains.
fn criterion_7() -> Outcome {
    let tol = Tolerances::default();
    let times = [0.5, 1.0];
    let g2 = ou(2);
    let spec = ProcessSpec::pearson(1.0, 0.5, 1.0, 0.0, 0.0);
    let cfg = SimConfig::new(100_000, 1e-3, 1.0, 71).recording(&times);
    let ens = simulate_sde(&spec, &[1.0], &cfg).unwrap();
    let (targets, exact) = ou_exact(&g2, 1.0, &times);
    let sde = compare_moments(&ens, Reference::ClosedForm(&exact), &targets, Z_CRIT).unwrap();

    // Two-point OU rule: chain moments against rows of e^{tL} H.
    let g1 = ou(1);
    let pts = vec![vec![0.0], vec![1.0]];
    let rule = check_ct(&g1, &pts, &tol).unwrap().rule.unwrap();
    let mut ctmc = Vec::new();
    for start in 0..2 {
        let cfg = SimConfig::new(100_000, 1e-3, 1.0, 72 + start as u64).recording(&times);
        let ens = simulate_ctmc(&rule.l, &pts, start, &cfg).unwrap();
        let mut targets = Vec::new();
        let mut exact = Vec::new();
        for &t in &times {
            let row = expm(&(&rule.l * t)).unwrap() * &rule.h;
            targets.push(Target::new(Polynomial::var(1, 0), t));
            exact.push(row[(start, 1)]);
        }
        ctmc.push(compare_moments(&ens, Reference::ClosedForm(&exact), &targets, Z_CRIT).unwrap());
    }

    // Criterion 5's rule over five steps against rows of Q^l H.
    let dt = discrete_ou(&tol)?;
    let start = 0;
    let cfg = SimConfig::new(100_000, 1.0, 1.0, 74);
    let ens = simulate_dtmc(&dt.q, &dt.points, start, 5, &cfg).unwrap();
    let mut targets = Vec::new();
    let mut exact = Vec::new();
    let mut ql = Matrix::identity(3, 3);
    for l in 1..=5 {
        ql = &ql * &dt.q;
        let m = &ql * &dt.h;
        for j in 1..3 {
            targets.push(Target::new(g2.basis.monomial(j), l as f64));
            exact.push(m[(start, j)]);
        }
    }
    let dtmc = compare_moments(&ens, Reference::ClosedForm(&exact), &targets, Z_CRIT).unwrap();

    let all = [&sde, &ctmc[0], &ctmc[1], &dtmc];
    for (name, r) in ["sde", "ctmc start 0", "ctmc start 1", "dtmc"].iter().zip(all) {
        ensure(r.passed && r.excluded == 0, || {
            let bad: Vec<_> = r.rows.iter().filter(|x| !x.pass).collect();
            format!("{name}: {bad:?}")
        })?;
    }
    Ok(z_summary(&all))
}

/// Property suites.
fn criterion_8() -> Outcome {
    let tol = Tolerances::default();
    let mut rng = ChaCha8Rng::seed_from_u64(8);

    // Feasibility of HG = LH does not depend on the basis of Pol_n:
    // H' = HT, G' = T^-1 G T.
    let cases = [
        (ou(1), vec![vec![0.0], vec![1.0]], true),
        (ou(1), vec![vec![0.6], vec![1.0]], false),
        (ou(2), vec![vec![-1.0], vec![0.5], vec![2.0]], false),
    ];
    for (g, pts, feasible) in &cases {
        let h = build_h(pts, &g.basis).unwrap();
        let (base_l, _) = check_ct_matrices(&h, &(&h * &g.g), &tol);
        ensure(base_l.is_some() == *feasible, || "basis-invariance base case".into())?;
        for _ in 0..10 {
            let n = g.len();
            let t = Matrix::identity(n, n) + Matrix::from_fn(n, n, |_, _| rng.random_range(-0.3..0.3));
            let t_inv = t.clone().try_inverse().unwrap();
            let h2 = &h * &t;
            let g2 = &t_inv * &g.g * &t;
            let (l, _) = check_ct_matrices(&h2, &(&h2 * g2), &tol);
            ensure(l.is_some() == *feasible, || "feasibility changed under a basis change".into())?;
            if let (Some(a), Some(b)) = (&l, &base_l) {
                ensure((a - b).amax() <= 1e-8, || "L changed under a basis change".into())?;
            }
        }
    }

    // Semigroup law.
    for k in 0..10 {
        let n = 2 + k % 5;
        let a = Matrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let (s, t) = (rng.random_range(0.0..2.0), rng.random_range(0.0..2.0));
        let lhs = expm(&(&a * (s + t))).unwrap();
        let rhs = expm(&(&a * s)).unwrap() * expm(&(&a * t)).unwrap();
        let err = (&lhs - &rhs).amax() / (1.0 + lhs.amax());
        ensure(err <= 1e-10, || format!("semigroup law off by {err:e}"))?;
    }

    // Gauss rules match moments up to order 2M - 1.
    for _ in 0..20 {
        let mean = rng.random_range(-1.0..1.0);
        let var = rng.random_range(0.1..2.0);
        let m = rng.random_range(1..6usize);
        let mut mu = vec![1.0, mean];
        for k in 2..2 * m {
            mu.push(mean * mu[k - 1] + (k - 1) as f64 * var * mu[k - 2]);
        }
        mu.truncate(2 * m);
        let rule = gauss_points_1d(&mu, m, &tol).unwrap();
        for (k, &target) in mu.iter().enumerate() {
            let got: f64 = rule
                .points
                .iter()
                .zip(&rule.weights)
                .map(|(x, w)| w * x[0].powi(k as i32))
                .sum();
            ensure((got - target).abs() <= 1e-9 * (1.0 + target.abs()), || {
                format!("Gauss M={m}: moment {k} is {got}, want {target}")
            })?;
        }
    }

    // polygon_order against direct enumeration.
    for _ in 0..100 {
        let phi = rng.random_range(PI / 2.0 + 1e-3..=PI);
        let m = polygon_order(phi).unwrap();
        let brute = (3..100_000)
            .find(|&k| PI * (k as f64 + 2.0) / (2.0 * k as f64) <= phi)
            .unwrap();
        ensure(m == brute, || format!("polygon_order({phi}) = {m}, enumeration gives {brute}"))?;
    }

    // Determinism of every simulator, also across thread counts.
    let spec = ProcessSpec::pearson(1.0, 0.5, 1.0, 0.0, 0.0);
    let dt = discrete_ou(&tol)?;
    let g1 = ou(1);
    let pts = vec![vec![0.0], vec![1.0]];
    let l = check_ct(&g1, &pts, &tol).unwrap().rule.unwrap().l;
    let x = Polynomial::var(1, 0);
    let run = || {
        let cfg = SimConfig::new(2000, 1e-2, 1.0, 5).recording(&[0.5, 1.0]);
        let a = simulate_sde(&spec, &[0.2], &cfg).unwrap();
        let b = simulate_ctmc(&l, &pts, 0, &cfg).unwrap();
        let c = simulate_dtmc(&dt.q, &dt.points, 1, 3, &cfg).unwrap();
        let targets = [Target::new(x.clone(), 0.5), Target::new(x.clone(), 1.0)];
        let ra = compare_moments(&a, Reference::ClosedForm(&[0.0, 0.0]), &targets, Z_CRIT).unwrap();
        let rb = compare_moments(&b, Reference::ClosedForm(&[0.0, 0.0]), &targets, Z_CRIT).unwrap();
        let steps = [Target::new(x.clone(), 1.0), Target::new(x.clone(), 3.0)];
        let rc = compare_moments(&c, Reference::ClosedForm(&[0.0, 0.0]), &steps, Z_CRIT).unwrap();
        (a, b, c, ra, rb, rc)
    };
    let first = run();
    let second = run();
    let single = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap()
        .install(run);
    ensure(first == second && first == single, || "simulations are not reproducible".into())?;
    Ok("basis invariance x30, semigroup x10, Gauss x20, polygon_order x100, determinism x3".into())
}

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("two-point OU rules", criterion_1, Duration::from_secs(5)),
        ("three-point counterexample", criterion_2, Duration::from_secs(30)),
        ("lifted rule soundness", criterion_3, Duration::from_secs(60)),
        ("negative-probability weights", criterion_4, Duration::MAX),
        ("discrete rule", criterion_5, Duration::from_secs(10)),
        ("asymptotic moments", criterion_6, Duration::MAX),
        ("Monte Carlo cross-validation", criterion_7, Duration::from_secs(180)),
        ("property suites", criterion_8, Duration::MAX),
    ];
    let mut failures = 0;
    for (k, (name, f, budget)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let elapsed = start.elapsed();
        let outcome = match outcome {
            Ok(_) if elapsed > *budget => Err(format!("took {elapsed:.1?}, budget {budget:.0?}")),
            o => o,
        };
        match outcome {
            Ok(detail) => println!("criterion {}: PASS ({:.2}s) {name}: {detail}", k + 1, elapsed.as_secs_f64()),
            Err(why) => {
                failures += 1;
                println!("criterion {}: FAIL ({:.2}s) {name}: {why}", k + 1, elapsed.as_secs_f64());
            }
        }
    }
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
