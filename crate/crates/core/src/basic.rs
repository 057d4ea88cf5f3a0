//! Basic procedures: first-order schemes on the standard simplex that, for a projector `P`
//! and `eps in (0, 1)`, find `z >= 0, z != 0` with either `Pz > 0` or
//! `||(Pz)^+||_1 <= eps * ||z||_inf`.
//!
//! All four schemes keep `Pz` up to date through linear updates rather than a fresh
//! matrix-vector product per step. Whenever the running `Pz` triggers a stop condition it
//! is recomputed as `P * z` and the condition re-checked, so a returned outcome always
//! certifies itself against an exact product.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{dot, norm2_sq, norm_inf, positive_part_l1, DenseMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Perceptron,
    VonNeumann,
    VonNeumannAway,
    SmoothPerceptron,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [
        Scheme::Perceptron,
        Scheme::VonNeumann,
        Scheme::VonNeumannAway,
        Scheme::SmoothPerceptron,
    ];

    /// Short name used by the CLI and the CSV output.
    pub fn tag(self) -> &'static str {
        match self {
            Scheme::Perceptron => "perceptron",
            Scheme::VonNeumann => "vn",
            Scheme::VonNeumannAway => "vna",
            Scheme::SmoothPerceptron => "smooth",
        }
    }

    pub fn from_tag(s: &str) -> Option<Self> {
        Scheme::ALL.into_iter().find(|sc| sc.tag() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BpConfig {
    pub epsilon: f64,
    /// 0 means unlimited.
    pub max_iters: usize,
    pub scheme: Scheme,
}

impl BpConfig {
    /// Iteration cap for standalone runs.
    pub const STANDALONE_MAX_ITERS: usize = 10_000;
    /// Iteration cap inside the rescaling loop.
    pub const EPRA_MAX_ITERS: usize = 1_000_000;

    pub fn new(scheme: Scheme, epsilon: f64, max_iters: usize) -> Result<Self> {
        let cfg = Self {
            epsilon,
            max_iters,
            scheme,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::InvalidInput(format!(
                "epsilon must lie in (0, 1), got {}",
                self.epsilon
            )));
        }
        Ok(())
    }

    fn exhausted(&self, t: usize) -> bool {
        self.max_iters != 0 && t >= self.max_iters
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BpStatus {
    InteriorFound,
    RescaleReady,
    IterLimit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BpOutcome {
    pub status: BpStatus,
    pub z: Vec<f64>,
    pub pz: Vec<f64>,
    pub iterations: usize,
}

/// Which of the two stopping conditions `(Pz, z)` satisfies, if any.
/// Positivity is tested with an exact comparison against zero.
pub fn stop_check(pz: &[f64], z: &[f64], epsilon: f64) -> Option<BpStatus> {
    if !pz.is_empty() && pz.iter().all(|v| *v > 0.0) {
        Some(BpStatus::InteriorFound)
    } else if positive_part_l1(pz) <= epsilon * norm_inf(z) {
        Some(BpStatus::RescaleReady)
    } else {
        None
    }
}

/// Index of the smallest entry; lowest index on ties.
pub fn min_vertex(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate().skip(1) {
        if *x < v[best] {
            best = i;
        }
    }
    best
}

/// Index maximising `Pz` over the support of `z`; lowest index on ties.
pub fn away_vertex(z: &[f64], pz: &[f64]) -> Result<usize> {
    let mut best: Option<usize> = None;
    for i in 0..z.len() {
        if z[i] > 0.0 && best.is_none_or(|b| pz[i] > pz[b]) {
            best = Some(i);
        }
    }
    best.ok_or(Error::EmptySupport)
}

/// Euclidean projection of `y` onto the standard simplex (sort-and-threshold).
pub fn project_simplex(y: &[f64]) -> Vec<f64> {
    let mut s = y.to_vec();
    s.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut tau = 0.0;
    for (k, v) in s.iter().enumerate() {
        cum += v;
        let t = (cum - 1.0) / (k as f64 + 1.0);
        if *v - t > 0.0 {
            tau = t;
        } else {
            break;
        }
    }
    y.iter().map(|v| (v - tau).max(0.0)).collect()
}

/// `argmin_{u in simplex} <u, v> + (mu / 2) ||u - u_bar||^2`, i.e. the simplex projection
/// of `u_bar - v / mu`.
pub fn simplex_prox(v: &[f64], mu: f64, u_bar: &[f64]) -> Vec<f64> {
    let y: Vec<f64> = u_bar.iter().zip(v).map(|(u, g)| u - g / mu).collect();
    project_simplex(&y)
}

pub fn uniform(n: usize) -> Vec<f64> {
    vec![1.0 / n as f64; n]
}

/// Per-iteration hook for tests and diagnostics: receives `(t, z_t, Pz_t)` for every
/// iterate, including the initial one.
pub trait Observer {
    fn observe(&mut self, t: usize, z: &[f64], pz: &[f64]);
}

impl Observer for () {
    #[inline]
    fn observe(&mut self, _: usize, _: &[f64], _: &[f64]) {}
}

impl<F: FnMut(usize, &[f64], &[f64])> Observer for F {
    fn observe(&mut self, t: usize, z: &[f64], pz: &[f64]) {
        self(t, z, pz)
    }
}

/// Runs the scheme selected in `cfg` from `z0` (the prox centre for the smooth scheme).
pub fn run(p: &DenseMatrix, z0: &[f64], cfg: &BpConfig) -> Result<BpOutcome> {
    run_observed(p, z0, cfg, &mut ())
}

pub fn run_observed(
    p: &DenseMatrix,
    z0: &[f64],
    cfg: &BpConfig,
    obs: &mut impl Observer,
) -> Result<BpOutcome> {
    match cfg.scheme {
        Scheme::Perceptron => perceptron(p, z0, cfg, obs),
        Scheme::VonNeumann => von_neumann(p, z0, cfg, obs),
        Scheme::VonNeumannAway => von_neumann_away(p, z0, cfg, obs),
        Scheme::SmoothPerceptron => smooth(p, z0, cfg, obs),
    }
}

pub fn run_perceptron(p: &DenseMatrix, z0: &[f64], cfg: &BpConfig) -> Result<BpOutcome> {
    perceptron(p, z0, cfg, &mut ())
}

pub fn run_von_neumann(p: &DenseMatrix, z0: &[f64], cfg: &BpConfig) -> Result<BpOutcome> {
    von_neumann(p, z0, cfg, &mut ())
}

pub fn run_vna(p: &DenseMatrix, z0: &[f64], cfg: &BpConfig) -> Result<BpOutcome> {
    von_neumann_away(p, z0, cfg, &mut ())
}

pub fn run_smooth(p: &DenseMatrix, u_bar: &[f64], cfg: &BpConfig) -> Result<BpOutcome> {
    smooth(p, u_bar, cfg, &mut ())
}

fn check_inputs(p: &DenseMatrix, z0: &[f64], cfg: &BpConfig) -> Result<()> {
    cfg.validate()?;
    let n = p.rows();
    if p.cols() != n || z0.len() != n {
        return Err(Error::dims(
            format!("{n}x{n} projector and length-{n} start"),
            format!("{}x{} and {}", p.rows(), p.cols(), z0.len()),
        ));
    }
    if n == 0 {
        return Err(Error::InvalidInput("empty problem".into()));
    }
    let s: f64 = z0.iter().sum();
    if z0.iter().any(|v| !(*v >= 0.0)) || (s - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidInput("start point must lie on the simplex".into()));
    }
    Ok(())
}

/// Stop test with exact re-verification: when the running `pz` triggers a condition it is
/// replaced by `P z` and the condition checked again.
fn verified_stop(p: &DenseMatrix, z: &[f64], pz: &mut [f64], eps: f64) -> Option<BpStatus> {
    stop_check(pz, z, eps)?;
    p.mul_vec_into(z, pz);
    stop_check(pz, z, eps)
}

fn finish(p: &DenseMatrix, z: Vec<f64>, mut pz: Vec<f64>, status: BpStatus, t: usize) -> BpOutcome {
    if status == BpStatus::IterLimit {
        p.mul_vec_into(&z, &mut pz);
    }
    BpOutcome {
        status,
        z,
        pz,
        iterations: t,
    }
}

fn perceptron(p: &DenseMatrix, z0: &[f64], cfg: &BpConfig, obs: &mut impl Observer) -> Result<BpOutcome> {
    check_inputs(p, z0, cfg)?;
    let mut z = z0.to_vec();
    let mut pz = p.mul_vec(&z)?;
    let mut t = 0;
    loop {
        obs.observe(t, &z, &pz);
        if let Some(s) = verified_stop(p, &z, &mut pz, cfg.epsilon) {
            return Ok(finish(p, z, pz, s, t));
        }
        if cfg.exhausted(t) {
            return Ok(finish(p, z, pz, BpStatus::IterLimit, t));
        }
        let i = min_vertex(&pz);
        if pz[i] > 0.0 {
            return Err(Error::NoImprovingVertex { iteration: t });
        }
        let step = 1.0 / (t as f64 + 1.0);
        let keep = 1.0 - step;
        // P e_i is row i of the symmetric projector
        let col = p.row(i);
        for k in 0..z.len() {
            z[k] *= keep;
            pz[k] = keep * pz[k] + step * col[k];
        }
        z[i] += step;
        t += 1;
    }
}

fn von_neumann(p: &DenseMatrix, z0: &[f64], cfg: &BpConfig, obs: &mut impl Observer) -> Result<BpOutcome> {
    check_inputs(p, z0, cfg)?;
    let mut z = z0.to_vec();
    let mut pz = p.mul_vec(&z)?;
    let mut t = 0;
    loop {
        obs.observe(t, &z, &pz);
        if let Some(s) = verified_stop(p, &z, &mut pz, cfg.epsilon) {
            return Ok(finish(p, z, pz, s, t));
        }
        if cfg.exhausted(t) {
            return Ok(finish(p, z, pz, BpStatus::IterLimit, t));
        }
        let i = min_vertex(&pz);
        let col = p.row(i);
        let pz_sq = norm2_sq(&pz);
        let pu_sq = norm2_sq(col);
        let u_pz = pz[i];
        let denom = pz_sq + pu_sq - 2.0 * u_pz;
        if !(denom > 0.0) {
            return Err(Error::DegenerateStep {
                iteration: t,
                denominator: denom,
            });
        }
        let theta = ((pz_sq - u_pz) / denom).clamp(0.0, 1.0);
        let keep = 1.0 - theta;
        for k in 0..z.len() {
            z[k] *= keep;
            pz[k] = keep * pz[k] + theta * col[k];
        }
        z[i] += theta;
        t += 1;
    }
}

fn von_neumann_away(
    p: &DenseMatrix,
    z0: &[f64],
    cfg: &BpConfig,
    obs: &mut impl Observer,
) -> Result<BpOutcome> {
    check_inputs(p, z0, cfg)?;
    let n = z0.len();
    let mut z = z0.to_vec();
    let mut pz = p.mul_vec(&z)?;
    let mut pa = vec![0.0; n];
    let mut t = 0;
    loop {
        obs.observe(t, &z, &pz);
        if let Some(s) = verified_stop(p, &z, &mut pz, cfg.epsilon) {
            return Ok(finish(p, z, pz, s, t));
        }
        if cfg.exhausted(t) {
            return Ok(finish(p, z, pz, BpStatus::IterLimit, t));
        }
        let u = min_vertex(&pz);
        let v = away_vertex(&z, &pz)?;
        let pz_sq = norm2_sq(&pz);
        let regular = pz_sq - pz[u] > pz[v] - pz_sq;
        // z is the vertex e_v: an away step cannot move, so take the regular step.
        let away_singular = !regular && z[v] >= 1.0;
        let (theta_max, away) = if regular || away_singular {
            let pu = p.row(u);
            for k in 0..n {
                pa[k] = pu[k] - pz[k];
            }
            (1.0, false)
        } else {
            let pv = p.row(v);
            for k in 0..n {
                pa[k] = pz[k] - pv[k];
            }
            (z[v] / (1.0 - z[v]), true)
        };
        let pa_sq = norm2_sq(&pa);
        if !(pa_sq > 0.0) {
            return Err(Error::DegenerateStep {
                iteration: t,
                denominator: pa_sq,
            });
        }
        // <z, Pa> = <Pz, a> = <Pz, Pa> for symmetric idempotent P
        let theta = (-dot(&pz, &pa) / pa_sq).clamp(0.0, theta_max);
        if away {
            let grow = 1.0 + theta;
            for k in 0..n {
                z[k] *= grow;
            }
            z[v] -= theta;
            if theta == theta_max || z[v] < 0.0 {
                z[v] = 0.0;
            }
        } else {
            let keep = 1.0 - theta;
            for k in 0..n {
                z[k] *= keep;
            }
            z[u] += theta;
        }
        for k in 0..n {
            pz[k] += theta * pa[k];
        }
        t += 1;
    }
}

fn smooth(p: &DenseMatrix, u_bar: &[f64], cfg: &BpConfig, obs: &mut impl Observer) -> Result<BpOutcome> {
    check_inputs(p, u_bar, cfg)?;
    let n = u_bar.len();
    let mut mu = 2.0;
    let mut u = u_bar.to_vec();
    let mut pu = p.mul_vec(&u)?;
    // w_t = u_{mu_t}(P u_t) and its image; z_0 = w_0
    let mut w = simplex_prox(&pu, mu, u_bar);
    let mut pw = p.mul_vec(&w)?;
    let mut z = w.clone();
    let mut pz = pw.clone();
    let mut t = 0;
    loop {
        obs.observe(t, &z, &pz);
        if let Some(s) = verified_stop(p, &z, &mut pz, cfg.epsilon) {
            return Ok(finish(p, z, pz, s, t));
        }
        if cfg.exhausted(t) {
            return Ok(finish(p, z, pz, BpStatus::IterLimit, t));
        }
        let theta = 2.0 / (t as f64 + 3.0);
        let keep = 1.0 - theta;
        let th2 = theta * theta;
        // u_{t+1} = (1 - theta)(u_t + theta z_t) + theta^2 u_{mu_t}(P u_t); weights sum to 1
        for k in 0..n {
            u[k] = keep * (u[k] + theta * z[k]) + th2 * w[k];
            pu[k] = keep * (pu[k] + theta * pz[k]) + th2 * pw[k];
        }
        mu *= keep;
        w = simplex_prox(&pu, mu, u_bar);
        p.mul_vec_into(&w, &mut pw);
        for k in 0..n {
            z[k] = keep * z[k] + theta * w[k];
            pz[k] = keep * pz[k] + theta * pw[k];
        }
        t += 1;
    }
}
