//! Monte Carlo ensembles for the diffusion (Euler–Maruyama) and for the
//! cubature chains, and z-score comparisons of their moments.
//!
//! Every path draws from its own ChaCha8 stream (`seed`, stream = path
//! index), and reductions run sequentially in path order, so results do not
//! depend on the number of threads.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cubature_ct::validate_rate_matrix;
use crate::cubature_dt::validate_stochastic;
use crate::error::{Error, Result};
use crate::generator::ProcessSpec;
use crate::polynomials::Polynomial;
use crate::Matrix;

pub const Z_CRIT: f64 = 3.5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub n_paths: usize,
    /// Euler step; ignored by the chain simulators.
    #[serde(default = "default_dt")]
    pub dt: f64,
    pub horizon: f64,
    pub seed: u64,
    /// Times at which states are recorded; empty means `[horizon]`.
    #[serde(default)]
    pub record: Vec<f64>,
}

fn default_dt() -> f64 {
    1e-3
}

impl SimConfig {
    pub fn new(n_paths: usize, dt: f64, horizon: f64, seed: u64) -> Self {
        SimConfig {
            n_paths,
            dt,
            horizon,
            seed,
            record: Vec::new(),
        }
    }

    pub fn recording(mut self, times: &[f64]) -> Self {
        self.record = times.to_vec();
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_paths == 0 {
            return Err(Error::InvalidArgument("n_paths must be at least 1".into()));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::InvalidArgument(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "horizon must be positive, got {}",
                self.horizon
            )));
        }
        if let Some(t) = self.record.iter().find(|&&t| !(t >= 0.0 && t <= self.horizon)) {
            return Err(Error::InvalidArgument(format!(
                "record time {t} outside [0, {}]",
                self.horizon
            )));
        }
        Ok(())
    }

    fn record_times(&self) -> Vec<f64> {
        let mut t = if self.record.is_empty() {
            vec![self.horizon]
        } else {
            self.record.clone()
        };
        t.sort_by(f64::total_cmp);
        t.dedup();
        t
    }
}

/// States of every path at the recorded times. Paths that blew up are
/// `None`.
#[derive(Clone, Debug, PartialEq)]
pub struct Ensemble {
    pub dim: usize,
    pub times: Vec<f64>,
    /// `paths[k][r]` is the state of path `k` at `times[r]`.
    pub paths: Vec<Option<Vec<Vec<f64>>>>,
    /// Number of diffusion evaluations whose negative eigenvalues were
    /// clipped to zero.
    pub clip_events: u64,
}

impl Ensemble {
    pub fn excluded(&self) -> usize {
        self.paths.iter().filter(|p| p.is_none()).count()
    }

    fn time_index(&self, t: f64) -> Option<usize> {
        self.times
            .iter()
            .position(|&s| (s - t).abs() <= 1e-9 * (1.0 + t.abs()))
    }

    /// `p(X_t)` for each surviving path, in path order.
    pub fn values(&self, p: &Polynomial, t: f64) -> Result<Vec<f64>> {
        let r = self.time_index(t).ok_or_else(|| {
            Error::InvalidArgument(format!("time {t} was not recorded (have {:?})", self.times))
        })?;
        if p.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: p.dim(),
            });
        }
        Ok(self
            .paths
            .iter()
            .flatten()
            .map(|states| p.eval(&states[r]))
            .collect())
    }
}

fn path_rng(seed: u64, path: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path as u64);
    rng
}

/// Polynomial flattened for repeated evaluation.
struct Compiled {
    terms: Vec<(Vec<i32>, f64)>,
}

impl Compiled {
    fn new(p: &Polynomial) -> Self {
        Compiled {
            terms: p
                .terms()
                .map(|(a, c)| (a.exponents().iter().map(|&e| e as i32).collect(), c))
                .collect(),
        }
    }

    fn eval(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(a, c)| c * a.iter().zip(x).map(|(&e, xi)| xi.powi(e)).product::<f64>())
            .sum()
    }
}

fn step_count(t: f64, dt: f64) -> Result<usize> {
    let k = (t / dt).round();
    if (k * dt - t).abs() > 1e-9 * (1.0 + t) {
        return Err(Error::InvalidArgument(format!(
            "time {t} is not a multiple of dt = {dt}"
        )));
    }
    Ok(k as usize)
}

/// Euler–Maruyama with the symmetric PSD square root of `a(x)` (negative
/// eigenvalues clipped to zero).
pub fn simulate_sde(spec: &ProcessSpec, x0: &[f64], cfg: &SimConfig) -> Result<Ensemble> {
    cfg.validate()?;
    let d = spec.dim();
    if x0.len() != d {
        return Err(Error::DimensionMismatch { expected: d, got: x0.len() });
    }
    let times = cfg.record_times();
    let marks: Vec<usize> = times
        .iter()
        .map(|&t| step_count(t, cfg.dt))
        .collect::<Result<_>>()?;
    let total = *marks.last().unwrap();
    let drift: Vec<Compiled> = spec.drift().iter().map(Compiled::new).collect();
    let diffusion: Vec<Vec<Compiled>> = spec
        .diffusion()
        .iter()
        .map(|row| row.iter().map(Compiled::new).collect())
        .collect();
    let sqdt = cfg.dt.sqrt();

    let results: Vec<(Option<Vec<Vec<f64>>>, u64)> = (0..cfg.n_paths)
        .into_par_iter()
        .map(|k| {
            let mut rng = path_rng(cfg.seed, k);
            let mut x = x0.to_vec();
            let mut out = Vec::with_capacity(marks.len());
            let mut clips = 0u64;
            let mut next = 0;
            let mut z = vec![0.0; d];
            let mut b = vec![0.0; d];
            for step in 0..=total {
                while next < marks.len() && marks[next] == step {
                    out.push(x.clone());
                    next += 1;
                }
                if step == total {
                    break;
                }
                for (bi, p) in b.iter_mut().zip(&drift) {
                    *bi = p.eval(&x);
                }
                for zi in z.iter_mut() {
                    *zi = rng.sample(StandardNormal);
                }
                if d == 1 {
                    let a = diffusion[0][0].eval(&x);
                    if a < 0.0 {
                        clips += 1;
                    }
                    x[0] += b[0] * cfg.dt + a.max(0.0).sqrt() * sqdt * z[0];
                } else {
                    let a = Matrix::from_fn(d, d, |i, j| diffusion[i][j].eval(&x));
                    let eig = a.symmetric_eigen();
                    if eig.eigenvalues.iter().any(|&l| l < 0.0) {
                        clips += 1;
                    }
                    let root = &eig.eigenvectors
                        * Matrix::from_diagonal(&eig.eigenvalues.map(|l| l.max(0.0).sqrt()))
                        * eig.eigenvectors.transpose();
                    for i in 0..d {
                        let noise: f64 = (0..d).map(|j| root[(i, j)] * z[j]).sum();
                        x[i] += b[i] * cfg.dt + noise * sqdt;
                    }
                }
                if x.iter().any(|v| !v.is_finite()) {
                    return (None, clips);
                }
            }
            (Some(out), clips)
        })
        .collect();

    let clip_events = results.iter().map(|r| r.1).sum();
    Ok(Ensemble {
        dim: d,
        times,
        paths: results.into_iter().map(|r| r.0).collect(),
        clip_events,
    })
}

fn check_points(points: &[Vec<f64>], size: usize, start: usize) -> Result<usize> {
    if points.len() != size {
        return Err(Error::DimensionMismatch {
            expected: size,
            got: points.len(),
        });
    }
    if start >= size {
        return Err(Error::InvalidArgument(format!("start index {start} out of range")));
    }
    let d = points.first().map_or(0, |p| p.len());
    if points.iter().any(|p| p.len() != d) {
        return Err(Error::InvalidArgument("points have mixed dimensions".into()));
    }
    Ok(d)
}

fn pick(row: impl Iterator<Item = (usize, f64)>, total: f64, u: f64) -> usize {
    let target = u * total;
    let mut acc = 0.0;
    let mut last = None;
    for (j, w) in row {
        if w <= 0.0 {
            continue;
        }
        acc += w;
        last = Some(j);
        if target < acc {
            return j;
        }
    }
    last.expect("row has positive mass")
}

fn assemble(points: &[Vec<f64>], dim: usize, times: Vec<f64>, visits: Vec<Vec<usize>>) -> Ensemble {
    Ensemble {
        dim,
        times,
        paths: visits
            .into_iter()
            .map(|v| Some(v.into_iter().map(|i| points[i].clone()).collect()))
            .collect(),
        clip_events: 0,
    }
}

/// Chain with rate matrix `l` on `points`, started at `start`: exponential
/// holding times with rate `-L_ii`, jumps proportional to `L_ij`.
pub fn simulate_ctmc(l: &Matrix, points: &[Vec<f64>], start: usize, cfg: &SimConfig) -> Result<Ensemble> {
    cfg.validate()?;
    validate_rate_matrix(l)?;
    let d = check_points(points, l.nrows(), start)?;
    let times = cfg.record_times();
    let m = l.nrows();
    let visits: Vec<Vec<usize>> = (0..cfg.n_paths)
        .into_par_iter()
        .map(|k| {
            let mut rng = path_rng(cfg.seed, k);
            let mut state = start;
            let mut clock = 0.0;
            let mut out = Vec::with_capacity(times.len());
            for &t in &times {
                loop {
                    let rate: f64 = (0..m).filter(|&j| j != state).map(|j| l[(state, j)]).sum();
                    let hold = if rate > 0.0 {
                        -(1.0 - rng.random::<f64>()).ln() / rate
                    } else {
                        f64::INFINITY
                    };
                    if clock + hold > t {
                        // Memorylessness: the residual holding time at t is
                        // redrawn on the next call, so only the clock moves.
                        clock = t;
                        break;
                    }
                    clock += hold;
                    let u: f64 = rng.random();
                    state = pick((0..m).filter(|&j| j != state).map(|j| (j, l[(state, j)])), rate, u);
                }
                out.push(state);
            }
            out
        })
        .collect();
    Ok(assemble(points, d, times, visits))
}

/// Chain with transition matrix `q` on `points`, recorded after every step
/// `0..=steps` (times are step counts).
pub fn simulate_dtmc(
    q: &Matrix,
    points: &[Vec<f64>],
    start: usize,
    steps: usize,
    cfg: &SimConfig,
) -> Result<Ensemble> {
    if cfg.n_paths == 0 {
        return Err(Error::InvalidArgument("n_paths must be at least 1".into()));
    }
    validate_stochastic(q)?;
    let d = check_points(points, q.nrows(), start)?;
    let m = q.nrows();
    let visits: Vec<Vec<usize>> = (0..cfg.n_paths)
        .into_par_iter()
        .map(|k| {
            let mut rng = path_rng(cfg.seed, k);
            let mut state = start;
            let mut out = Vec::with_capacity(steps + 1);
            out.push(state);
            for _ in 0..steps {
                let total: f64 = q.row(state).sum();
                state = pick((0..m).map(|j| (j, q[(state, j)])), total, rng.random());
                out.push(state);
            }
            out
        })
        .collect();
    let times = (0..=steps).map(|s| s as f64).collect();
    Ok(assemble(points, d, times, visits))
}

/// Sum by recursive halving.
fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 32 {
        return v.iter().sum();
    }
    let (a, b) = v.split_at(v.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

fn mean_and_se(v: &[f64]) -> Result<(f64, f64)> {
    if v.is_empty() {
        return Err(Error::InvalidArgument("empty ensemble".into()));
    }
    let n = v.len() as f64;
    let mean = pairwise_sum(v) / n;
    if v.len() == 1 {
        return Ok((mean, 0.0));
    }
    let dev: Vec<f64> = v.iter().map(|x| (x - mean).powi(2)).collect();
    let var = pairwise_sum(&dev) / (n - 1.0);
    Ok((mean, (var / n).sqrt()))
}

/// What a Monte Carlo estimate is compared against.
pub enum Reference<'a> {
    /// One exact value per target.
    ClosedForm(&'a [f64]),
    /// Another ensemble; standard errors are combined.
    Ensemble(&'a Ensemble),
}

/// A moment target: polynomial and time.
#[derive(Clone, Debug)]
pub struct Target {
    pub label: String,
    pub polynomial: Polynomial,
    pub time: f64,
}

impl Target {
    pub fn new(polynomial: Polynomial, time: f64) -> Self {
        Target {
            label: polynomial.to_string(),
            polynomial,
            time,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimRow {
    pub target: String,
    pub time: f64,
    pub mc_estimate: f64,
    pub closed_form: f64,
    pub std_error: f64,
    pub z_score: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub rows: Vec<SimRow>,
    pub n_paths: usize,
    pub excluded: usize,
    pub clip_events: u64,
    pub z_crit: f64,
    pub passed: bool,
}

impl SimReport {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let io = |e: csv::Error| Error::InvalidArgument(format!("csv output failed: {e}"));
        out.write_record([
            "target", "time", "mc_estimate", "closed_form", "std_error", "z_score", "pass",
        ])
        .map_err(io)?;
        for r in &self.rows {
            out.write_record([
                r.target.clone(),
                format!("{:.16e}", r.time),
                format!("{:.16e}", r.mc_estimate),
                format!("{:.16e}", r.closed_form),
                format!("{:.16e}", r.std_error),
                format!("{:.16e}", r.z_score),
                r.pass.to_string(),
            ])
            .map_err(io)?;
        }
        out.flush()
            .map_err(|e| Error::InvalidArgument(format!("csv output failed: {e}")))
    }
}

fn z_score(estimate: f64, reference: f64, se: f64) -> f64 {
    let diff = estimate - reference;
    // Degenerate ensembles (absorbing starts) differ from exact values only
    // by rounding.
    if diff.abs() <= 1e-12 * (1.0 + reference.abs()) {
        0.0
    } else if se > 0.0 {
        diff / se
    } else {
        diff.signum() * f64::INFINITY
    }
}

/// z-scores of the ensemble's moments against the reference, passing at
/// `|z| <= z_crit`.
pub fn compare_moments(
    ensemble: &Ensemble,
    reference: Reference<'_>,
    targets: &[Target],
    z_crit: f64,
) -> Result<SimReport> {
    if let Reference::ClosedForm(v) = &reference {
        if v.len() != targets.len() {
            return Err(Error::DimensionMismatch {
                expected: targets.len(),
                got: v.len(),
            });
        }
    }
    let mut rows = Vec::with_capacity(targets.len());
    for (k, tg) in targets.iter().enumerate() {
        let (mean, se) = mean_and_se(&ensemble.values(&tg.polynomial, tg.time)?)?;
        let (reference_value, se) = match &reference {
            Reference::ClosedForm(v) => (v[k], se),
            Reference::Ensemble(other) => {
                let (m2, se2) = mean_and_se(&other.values(&tg.polynomial, tg.time)?)?;
                (m2, (se * se + se2 * se2).sqrt())
            }
        };
        let z = z_score(mean, reference_value, se);
        rows.push(SimRow {
            target: tg.label.clone(),
            time: tg.time,
            mc_estimate: mean,
            closed_form: reference_value,
            std_error: se,
            z_score: z,
            pass: z.abs() <= z_crit,
        });
    }
    Ok(SimReport {
        passed: rows.iter().all(|r| r.pass),
        rows,
        n_paths: ensemble.paths.len(),
        excluded: ensemble.excluded(),
        clip_events: ensemble.clip_events,
        z_crit,
    })
}
