use std::fs;
use std::path::PathBuf;

use polycube::cubature_lifted::lift_with_spectral;
use polycube::io::{self, DtRuleFile, LiftedRuleFile, RuleFile, SignedMeasureRuleFile, SpectralView};
use polycube::linalg::{expm, to_rows};
use polycube::simulate::{Reference, SimReport, Target, Z_CRIT};
use polycube::{
    asymptotic, build_g, check_assumptions, check_ct, discrete_rule, eval_basis, gauss_for_spec,
    lift, multi_time_moment, simulate_ctmc, simulate_dtmc, simulate_sde, tchakaloff_select,
    to_signed_measures, verify_ct, verify_dt, Complex64, GeneratorMatrix, Polynomial, SimConfig,
    Tolerances,
};
use serde_json::{json, Map, Value};

use crate::config::RunConfig;
use crate::{Command, Common, Failure};

type Outcome = Result<(Value, u8), Failure>;

fn apply_common(cfg: &mut RunConfig, c: &Common) {
    if let Some(o) = &c.output {
        cfg.output = Some(o.clone());
    }
    if let Some(n) = c.n {
        cfg.n = Some(n);
    }
    if let Some(s) = c.seed {
        cfg.seed = Some(s);
    }
    if let Some(p) = &c.points {
        cfg.points = Some(p.0.clone());
    }
    for (k, v) in &c.tol {
        cfg.tolerances.insert(k.clone(), *v);
    }
}

fn load(c: &Common) -> Result<RunConfig, Failure> {
    let mut cfg = RunConfig::load(c.config.as_deref())?;
    apply_common(&mut cfg, c);
    Ok(cfg)
}

pub fn run(cmd: Command) -> Result<u8, Failure> {
    let (cfg, result) = match cmd {
        Command::Generator(c) => {
            let cfg = load(&c)?;
            let r = generator(&cfg);
            (cfg, r)
        }
        Command::Moments { common, x, t } => {
            let mut cfg = load(&common)?;
            if x.is_some() {
                cfg.moments.x = x;
            }
            if t.is_some() {
                cfg.moments.t = t;
            }
            let r = moments(&cfg);
            (cfg, r)
        }
        Command::Asymptotic(c) => {
            let cfg = load(&c)?;
            let r = asymptotic_cmd(&cfg);
            (cfg, r)
        }
        Command::CheckCt(c) => {
            let cfg = load(&c)?;
            let r = check_ct_cmd(&cfg);
            (cfg, r)
        }
        Command::Lift { common, base_points } => {
            let mut cfg = load(&common)?;
            if let Some(b) = base_points {
                cfg.lift.base_points = Some(b.0);
            }
            let r = lift_cmd(&cfg);
            (cfg, r)
        }
        Command::Discrete {
            common,
            gauss,
            delta_init,
            l_max,
        } => {
            let mut cfg = load(&common)?;
            let d = &mut cfg.discrete;
            d.gauss = gauss.or(d.gauss);
            d.delta_init = delta_init.or(d.delta_init);
            d.l_max = l_max.or(d.l_max);
            let r = discrete_cmd(&cfg);
            (cfg, r)
        }
        Command::Validate {
            common,
            rule,
            paths,
            dt,
            times,
            steps,
            start,
            z_crit,
            sde,
            csv,
        } => {
            let mut cfg = load(&common)?;
            let v = &mut cfg.validate;
            v.rule = rule.or(v.rule.take());
            v.paths = paths.or(v.paths);
            v.dt = dt.or(v.dt);
            v.times = times.or(v.times.take());
            v.steps = steps.or(v.steps);
            v.start = start.or(v.start);
            v.z_crit = z_crit.or(v.z_crit);
            v.sde = Some(sde || v.sde.unwrap_or(false));
            v.csv = csv.or(v.csv.take());
            let r = validate_cmd(&cfg);
            (cfg, r)
        }
    };
    match result {
        Ok((value, code)) => {
            emit(&cfg.output, &value)?;
            Ok(code)
        }
        Err(f) => {
            if let Some(p) = &f.payload {
                emit(&cfg.output, p)?;
            }
            Err(f)
        }
    }
}

fn emit(output: &Option<PathBuf>, value: &Value) -> Result<(), Failure> {
    let text = io::to_json(value)?;
    match output {
        Some(path) => fs::write(path, text)
            .map_err(|e| Failure::usage(format!("cannot write {}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn object(v: impl serde::Serialize) -> Result<Map<String, Value>, Failure> {
    match serde_json::to_value(v).map_err(polycube::Error::from)? {
        Value::Object(m) => Ok(m),
        _ => unreachable!("rule files serialize as objects"),
    }
}

fn generator_for(cfg: &RunConfig) -> Result<(GeneratorMatrix, Tolerances), Failure> {
    let tol = cfg.tolerances()?;
    let g = build_g(cfg.process()?, cfg.degree()?)?;
    Ok((g, tol))
}

fn basis_json(g: &GeneratorMatrix) -> Value {
    json!(g.basis.indices().iter().map(|a| a.exponents().to_vec()).collect::<Vec<_>>())
}

fn generator(cfg: &RunConfig) -> Outcome {
    let (g, _) = generator_for(cfg)?;
    Ok((
        json!({
            "d": g.dim(),
            "n": g.n,
            "basis": basis_json(&g),
            "G": to_rows(&g.g),
            "polynomial_property": true,
        }),
        0,
    ))
}

fn moments(cfg: &RunConfig) -> Outcome {
    let (g, _) = generator_for(cfg)?;
    let x = cfg
        .moments
        .x
        .as_ref()
        .ok_or_else(|| Failure::usage("moments need a starting point: set moments.x or pass --x"))?;
    if let Some(schedule) = &cfg.moments.schedule {
        let steps: Vec<(f64, Polynomial)> = schedule.iter().map(|s| (s.t, s.p.clone())).collect();
        let value = multi_time_moment(&g, x, &steps)?;
        return Ok((json!({ "x": x, "schedule": schedule.iter().map(|s| s.t).collect::<Vec<_>>(), "value": value }), 0));
    }
    let t = cfg
        .moments
        .t
        .ok_or_else(|| Failure::usage("moments need a time: set moments.t or pass --t"))?;
    if !(t.is_finite() && t >= 0.0) {
        return Err(Failure::usage(format!("time must be finite and >= 0, got {t}")));
    }
    let h = eval_basis(x, &g.basis)?;
    let values = expm(&(&g.g * t))?.tr_mul(&h);
    Ok((
        json!({
            "x": x,
            "t": t,
            "basis": basis_json(&g),
            "values": values.iter().copied().collect::<Vec<_>>(),
        }),
        0,
    ))
}

fn eigen_table(eigs: &[Complex64]) -> Value {
    json!(eigs.iter().map(|z| [z.re, z.im]).collect::<Vec<_>>())
}

fn asymptotic_cmd(cfg: &RunConfig) -> Outcome {
    let (g, tol) = generator_for(cfg)?;
    let a = asymptotic(&g, &tol)?;
    let value = json!({
        "a1": a.a1_holds,
        "a2": a.a2_holds,
        "eigenvalues": eigen_table(&a.check.eigenvalues),
        "zero_multiplicity": a.check.zero_multiplicity,
        "basis": basis_json(&g),
        "limit_matrix": a.limit_matrix.as_ref().map(to_rows),
        "mu": a.mu.as_ref().map(|m| m.iter().copied().collect::<Vec<_>>()),
        "spectral": a.spectral.as_ref().map(SpectralView::from),
        "diagnostic": a.diagnostic,
    });
    if !a.a1_holds {
        eprintln!("assumption A1 fails: {}", a.diagnostic);
    }
    Ok((value, if a.a1_holds { 0 } else { 1 }))
}

fn check_ct_cmd(cfg: &RunConfig) -> Outcome {
    let (g, tol) = generator_for(cfg)?;
    let points = cfg
        .points
        .as_ref()
        .ok_or_else(|| Failure::usage("check-ct needs points: set \"points\" or pass --points"))?;
    let check = check_ct(&g, points, &tol)?;
    let mut out = Map::new();
    out.insert("feasible".into(), json!(check.feasible()));
    out.insert("points".into(), json!(points));
    out.insert("n".into(), json!(g.n));
    out.insert("rank_h".into(), json!(check.rank_h));
    if let Some(rule) = &check.rule {
        out.insert("L".into(), json!(to_rows(&rule.l)));
        out.insert("residual".into(), json!(rule.residual));
    }
    out.insert("rows".into(), json!(check.rows));
    Ok((Value::Object(out), if check.feasible() { 0 } else { 1 }))
}

fn lift_cmd(cfg: &RunConfig) -> Outcome {
    let (g, tol) = generator_for(cfg)?;
    let rule = match &cfg.lift.jordan {
        None => lift(&g, &tol)?,
        Some(o) => {
            let check = check_assumptions(&g, &tol)?;
            if !check.a1 {
                return Err(polycube::Error::AssumptionViolated {
                    assumption: "A1",
                    detail: check.describe(),
                    eigenvalues: check.eigenvalues,
                }
                .into());
            }
            let info = o.apply(&g.g.transpose(), &tol)?;
            lift_with_spectral(&g, &info, &tol)?
        }
    };
    let mut out = object(LiftedRuleFile::from_rule(&rule))?;
    out.insert("R".into(), json!(rule.s.nrows()));
    if let Some(base) = &cfg.lift.base_points {
        let smr = to_signed_measures(&rule, base, &tol)?;
        out.insert("signed".into(), Value::Object(object(SignedMeasureRuleFile::from_rule(&smr))?));
    }
    Ok((Value::Object(out), 0))
}

fn discrete_cmd(cfg: &RunConfig) -> Outcome {
    let (g, tol) = generator_for(cfg)?;
    let spec = cfg.process()?;
    let (points, weights) = if let Some(p) = &cfg.points {
        (p.clone(), None)
    } else if let Some(candidates) = &cfg.discrete.candidates {
        let a = asymptotic(&g, &tol)?;
        let mu = a.mu.ok_or_else(|| polycube::Error::AssumptionViolated {
            assumption: "A2",
            detail: a.diagnostic.clone(),
            eigenvalues: a.check.eigenvalues.clone(),
        })?;
        let st = tchakaloff_select(&mu, candidates, &g.basis, &tol)?;
        (st.points, Some(st.weights))
    } else if spec.dim() == 1 {
        let m = cfg.discrete.gauss.unwrap_or(g.len());
        if m == 0 {
            return Err(Failure::usage("gauss must be at least 1"));
        }
        let st = gauss_for_spec(spec, g.n, m, &tol)?;
        (st.points, Some(st.weights))
    } else {
        return Err(Failure::usage(
            "discrete needs \"points\", discrete.candidates, or a one-dimensional process for Gauss points",
        ));
    };
    let delta_init = cfg.discrete.delta_init.unwrap_or(0.01);
    let rule = discrete_rule(&g, &points, delta_init, &tol)?;
    let report = verify_dt(&rule, &g, cfg.discrete.l_max.unwrap_or(10), &tol)?;
    let mut out = object(DtRuleFile::from_rule(&rule))?;
    if let Some(w) = weights {
        out.insert("weights".into(), json!(w));
    }
    out.insert("verify".into(), json!(report));
    Ok((Value::Object(out), if report.passed { 0 } else { 1 }))
}

/// Exact `E_x[h_j(X_t)]` for every basis monomial.
fn exact_moments(g: &GeneratorMatrix, x: &[f64], t: f64) -> Result<Vec<f64>, Failure> {
    let h = eval_basis(x, &g.basis)?;
    Ok(expm(&(&g.g * t))?.tr_mul(&h).iter().copied().collect())
}

fn monomial_targets(g: &GeneratorMatrix, times: &[f64]) -> Vec<Target> {
    times
        .iter()
        .flat_map(|&t| (1..g.len()).map(move |j| Target::new(g.basis.monomial(j), t)))
        .collect()
}

fn validate_cmd(cfg: &RunConfig) -> Outcome {
    let v = &cfg.validate;
    let path = v
        .rule
        .as_ref()
        .ok_or_else(|| Failure::usage("validate needs a rule file: pass --rule"))?;
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::usage(format!("cannot read {}: {e}", path.display())))?;
    let file = RuleFile::parse(&text).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
    let spec = cfg.process()?;
    let tol = cfg.tolerances()?;
    let n = match &file {
        RuleFile::Ct(f) => f.n,
        RuleFile::Lifted(f) => f.n,
        RuleFile::Signed(_) => {
            return Err(Failure::usage(
                "signed-measure rules carry no Markov chain to simulate; validate the lifted rule instead",
            ))
        }
        RuleFile::Dt(f) => f.n,
    };
    let g = build_g(spec, n)?;
    let kind = file.kind();

    let sim = |horizon: f64, record: &[f64]| SimConfig {
        n_paths: v.paths.unwrap_or(10_000),
        dt: v.dt.unwrap_or(1e-3),
        horizon,
        seed: cfg.seed.unwrap_or(0),
        record: record.to_vec(),
    };
    let z_crit = v.z_crit.unwrap_or(Z_CRIT);
    let start = v.start.unwrap_or(0);
    let times = v.times.clone().unwrap_or_else(|| vec![0.5, 1.0]);
    if times.is_empty() {
        return Err(Failure::usage("times must not be empty"));
    }
    let horizon = times.iter().copied().fold(0.0, f64::max);

    let reverify = |ok: Result<(), String>| -> Result<(), Failure> {
        ok.map_err(|msg| Failure {
            code: 1,
            payload: Some(json!({ "rule": kind, "reverified": false, "error": msg })),
            message: format!("rule failed re-verification: {msg}"),
        })
    };

    let mut start_point = None;
    let (chain, sde_times): (SimReport, Vec<f64>) = match file {
        RuleFile::Ct(f) => {
            let rule = f.into_rule()?;
            let report = verify_ct(&rule, &g, &[0.5, 1.0, 2.0])?;
            let bound = tol.lift_for(g.inf_norm());
            reverify(rule.validate_rates().map_err(|e| e.to_string()))?;
            reverify(if report.passed(bound) {
                Ok(())
            } else {
                Err(format!("||H e^(tG) - e^(tL) H|| = {:.3e} exceeds {bound:.3e}", report.max_residual))
            })?;
            let x = point_at(&rule.points, start)?;
            let ens = simulate_ctmc(&rule.l, &rule.points, start, &sim(horizon, &times))?;
            let targets = monomial_targets(&g, &times);
            let exact = flat_exact(&g, &x, &times)?;
            start_point = Some(x);
            (polycube::compare_moments(&ens, Reference::ClosedForm(&exact), &targets, z_crit)?, times.clone())
        }
        RuleFile::Lifted(f) => {
            let rule = f.into_rule()?;
            reverify(rule.verify(&g, &tol).map(|_| ()).map_err(|e| e.to_string()))?;
            if start >= rule.s.nrows() {
                return Err(Failure::usage(format!("start index {start} out of range")));
            }
            let points: Vec<Vec<f64>> = to_rows(&rule.s);
            let ens = simulate_ctmc(&rule.l, &points, start, &sim(horizon, &times))?;
            let n_coords = g.len();
            let mut targets = Vec::new();
            let mut exact = Vec::new();
            for &t in &times {
                let mean = &rule.s * expm(&(&g.g * t))?;
                for j in 1..n_coords {
                    targets.push(Target {
                        label: format!("S[{j}]"),
                        polynomial: Polynomial::var(n_coords, j),
                        time: t,
                    });
                    exact.push(mean[(start, j)]);
                }
            }
            (polycube::compare_moments(&ens, Reference::ClosedForm(&exact), &targets, z_crit)?, Vec::new())
        }
        RuleFile::Dt(f) => {
            let rule = f.into_rule()?;
            let report = verify_dt(&rule, &g, 10, &tol)?;
            reverify(if report.passed {
                Ok(())
            } else {
                Err(format!("discrete rule check failed: {report:?}"))
            })?;
            let steps = v.steps.unwrap_or(5);
            if steps == 0 {
                return Err(Failure::usage("steps must be at least 1"));
            }
            let x = point_at(&rule.points, start)?;
            let cfg_sim = sim(1.0, &[]);
            let ens = simulate_dtmc(&rule.q, &rule.points, start, steps, &cfg_sim)?;
            let step_times: Vec<f64> = (1..=steps).map(|l| l as f64).collect();
            let targets = monomial_targets(&g, &step_times);
            let real_times: Vec<f64> = step_times.iter().map(|l| l * rule.delta).collect();
            let exact = flat_exact(&g, &x, &real_times)?;
            let mut report = polycube::compare_moments(&ens, Reference::ClosedForm(&exact), &targets, z_crit)?;
            for row in &mut report.rows {
                row.time *= rule.delta;
            }
            start_point = Some(x);
            (report, real_times)
        }
        RuleFile::Signed(_) => unreachable!(),
    };

    let mut out = Map::new();
    out.insert("rule".into(), json!(kind));
    out.insert("reverified".into(), json!(true));
    out.insert("chain".into(), json!(chain));
    let mut passed = chain.passed;
    let mut csv_rows = chain.clone();

    if v.sde == Some(true) {
        let Some(x) = &start_point else {
            return Err(Failure::usage("--sde needs a rule whose points lie in the state space"));
        };
        let t_min = sde_times.iter().copied().fold(f64::INFINITY, f64::min);
        let dt = v.dt.unwrap_or(1e-3);
        // Refine the step so every comparison time is on the Euler grid.
        let dt = t_min / (t_min / dt).ceil();
        let mut c = sim(sde_times.iter().copied().fold(0.0, f64::max), &sde_times);
        c.dt = dt;
        let ens = simulate_sde(spec, x, &c)?;
        let targets = monomial_targets(&g, &sde_times);
        let exact = flat_exact(&g, x, &sde_times)?;
        let report = polycube::compare_moments(&ens, Reference::ClosedForm(&exact), &targets, z_crit)?;
        passed &= report.passed;
        csv_rows.rows.extend(report.rows.iter().cloned().map(|mut r| {
            r.target = format!("sde:{}", r.target);
            r
        }));
        out.insert("sde".into(), json!(report));
    }
    out.insert("passed".into(), json!(passed));

    if let Some(path) = &v.csv {
        let f = fs::File::create(path)
            .map_err(|e| Failure::usage(format!("cannot write {}: {e}", path.display())))?;
        csv_rows.write_csv(f)?;
    }
    Ok((Value::Object(out), if passed { 0 } else { 1 }))
}

fn point_at(points: &[Vec<f64>], i: usize) -> Result<Vec<f64>, Failure> {
    points
        .get(i)
        .cloned()
        .ok_or_else(|| Failure::usage(format!("start index {i} out of range")))
}

/// Exact moments in the order of [`monomial_targets`].
fn flat_exact(g: &GeneratorMatrix, x: &[f64], times: &[f64]) -> Result<Vec<f64>, Failure> {
    let mut out = Vec::new();
    for &t in times {
        out.extend(exact_moments(g, x, t)?.into_iter().skip(1));
    }
    Ok(out)
}
