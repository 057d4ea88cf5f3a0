//! Independent checks: Wendel's coverage formula, membership and relative-interior
//! certificates, and condition-measure oracles for small instances.
//!
//! Nothing here calls into the basic procedures or the rescaling loop except
//! [`monte_carlo_feasible_rate`], whose whole point is to sample the solver.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::epra::{self, EpraConfig, EpraResult, EpraStatus};
use crate::error::{Error, Result};
use crate::instances::{derive_seed, gen_naive, nullspace_basis};
use crate::matrix::{dot, norm_inf, solve_dense, DenseMatrix};
use crate::subspace::{orthonormal_basis, Instance, DEFAULT_RANK_TOL};

/// `P(L^perp ∩ R^n_{++} != ∅) = 2^(1-n) sum_{k<m} C(n-1, k)` for `L = ker(A)`, `A` an
/// `m x n` Gaussian matrix.
pub fn wendel_probability(m: usize, n: usize) -> f64 {
    assert!(1 <= m && m <= n, "need 1 <= m <= n");
    if n <= 64 {
        // exact: the partial sum is at most 2^(n-1) <= 2^63
        let mut c: u128 = 1;
        let mut sum: u128 = 0;
        for k in 0..m {
            sum += c;
            c = c * (n - 1 - k) as u128 / (k as u128 + 1);
        }
        sum as f64 / 2f64.powi(n as i32 - 1)
    } else {
        let mut log_c = 0.0f64;
        let mut terms = Vec::with_capacity(m);
        for k in 0..m {
            terms.push(log_c);
            if k + 1 < n {
                log_c += (((n - 1 - k) as f64) / (k as f64 + 1.0)).ln();
            }
        }
        let top = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let s: f64 = terms.iter().map(|t| (t - top).exp()).sum();
        (top + s.ln() - (n as f64 - 1.0) * std::f64::consts::LN_2)
            .exp()
            .min(1.0)
    }
}

/// Complementary probability `P(L ∩ R^n_{++} != ∅)`.
pub fn wendel_primal_probability(m: usize, n: usize) -> f64 {
    if m == n {
        0.0
    } else {
        wendel_probability(n - m, n)
    }
}

/// Fraction of naive `m x n` instances on which the solver certifies `L ∩ R^n_{++} != ∅`.
pub fn monte_carlo_feasible_rate(m: usize, n: usize, trials: usize, seed: u64) -> Result<f64> {
    if trials == 0 {
        return Err(Error::InvalidInput("trials must be positive".into()));
    }
    let cfg = EpraConfig::default();
    let hits = (0..trials)
        .into_par_iter()
        .map(|t| -> Result<usize> {
            let inst = gen_naive(m, n, derive_seed(seed, t as u64))?;
            let r = epra::solve(&inst, &cfg)?;
            Ok((r.status == EpraStatus::TrivialPrimal) as usize)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(hits.iter().sum::<usize>() as f64 / trials as f64)
}

/// `(||A x||_inf <= tol * max(1, ||x||_inf ||A||_max), ||A x||_inf)`.
pub fn verify_membership(a: &DenseMatrix, x: &[f64], tol: f64) -> Result<(bool, f64)> {
    let r = norm_inf(&a.mul_vec(x)?);
    Ok((r <= tol * f64::max(1.0, norm_inf(x) * a.max_abs()), r))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub membership_ok: bool,
    pub positivity_ok: bool,
    pub relint_ok: bool,
    pub partition_matches_ground_truth: Option<bool>,
    pub max_residual: f64,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.relint_ok && self.partition_matches_ground_truth != Some(false)
    }
}

/// Distance-type residual of `x_hat` from `Im(A^T)`: `||x_hat - Q^T Q x_hat||_inf`.
fn dual_residual(a: &DenseMatrix, x_hat: &[f64]) -> Result<f64> {
    let n = a.cols();
    if x_hat.len() != n {
        return Err(Error::dims(n, x_hat.len()));
    }
    let q = orthonormal_basis(n, &a.to_rows(), DEFAULT_RANK_TOL)?;
    let mut r = x_hat.to_vec();
    for i in 0..q.rows() {
        let c = dot(q.row(i), x_hat);
        for (rj, qj) in r.iter_mut().zip(q.row(i)) {
            *rj -= c * qj;
        }
    }
    Ok(norm_inf(&r))
}

/// Checks `(x, x_hat, B, N)` against the `U`-approximate relative-interior conditions:
/// `x in L`, `x_hat in L^perp`, `x_B > 0`, `||x_N|| <= ||x|| / U`, `x_hat_N > 0`,
/// `||x_hat_B|| <= ||x_hat|| / U`, with `(B, N)` a partition of the coordinates.
pub fn verify_relint_pair(inst: &Instance, res: &EpraResult, u_cap: f64, tol: f64) -> VerificationReport {
    let n = inst.n();
    let shapes_ok = res.x.len() == n && res.x_hat.len() == n;
    let bad = VerificationReport {
        membership_ok: false,
        positivity_ok: false,
        relint_ok: false,
        partition_matches_ground_truth: None,
        max_residual: f64::INFINITY,
    };
    if !shapes_ok || res.b.iter().chain(&res.n).any(|&i| i >= n) {
        return bad;
    }
    let (primal_ok, r_primal) = match verify_membership(&inst.a, &res.x, tol) {
        Ok(v) => v,
        Err(_) => return bad,
    };
    let r_dual = match dual_residual(&inst.a, &res.x_hat) {
        Ok(v) => v,
        Err(_) => return bad,
    };
    let dual_ok = r_dual <= tol * f64::max(1.0, norm_inf(&res.x_hat));
    let membership_ok = primal_ok && dual_ok;

    let positivity_ok = res.b.iter().all(|&i| res.x[i] > 0.0) && res.n.iter().all(|&i| res.x_hat[i] > 0.0);
    let sub_inf = |v: &[f64], idx: &[usize]| idx.iter().fold(0.0, |m, &i| f64::max(m, v[i].abs()));
    let small_ok = sub_inf(&res.x, &res.n) <= norm_inf(&res.x) / u_cap
        && sub_inf(&res.x_hat, &res.b) <= norm_inf(&res.x_hat) / u_cap;
    let partition = crate::subspace::Partition {
        b: res.b.clone(),
        n: res.n.clone(),
    };
    let relint_ok = membership_ok && positivity_ok && small_ok && partition.is_partition_of(n);

    let partition_matches_ground_truth = inst.meta.known_partition.as_ref().map(|truth| {
        let mut b = res.b.clone();
        let mut nn = res.n.clone();
        b.sort_unstable();
        nn.sort_unstable();
        let mut tb = truth.b.clone();
        let mut tn = truth.n.clone();
        tb.sort_unstable();
        tn.sort_unstable();
        b == tb && nn == tn
    });

    VerificationReport {
        membership_ok,
        positivity_ok,
        relint_ok,
        partition_matches_ground_truth,
        max_residual: f64::max(r_primal, r_dual),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Measure {
    Value(f64),
    Infeasible,
}

/// Condition measure of the ray spanned by `v`: `prod_j |v_j| / ||v||_inf` when `v` or `-v`
/// is strictly positive, otherwise infeasible.
pub fn condition_measure_1d(v: &[f64]) -> Result<Measure> {
    let top = norm_inf(v);
    if top == 0.0 {
        return Err(Error::ZeroVector);
    }
    let pos = v.iter().all(|x| *x > 0.0);
    let neg = v.iter().all(|x| *x < 0.0);
    if !(pos || neg) {
        return Ok(Measure::Infeasible);
    }
    Ok(Measure::Value(v.iter().map(|x| x.abs() / top).product()))
}

/// Maximises `c^T w + sum_i alpha_i ln(h_i + g_i^T w)` by damped Newton steps that keep every
/// log argument positive. Returns the number of Newton steps taken.
struct LogBarrier<'a> {
    g: &'a DenseMatrix,
    h: &'a [f64],
    alpha: &'a [f64],
    c: &'a [f64],
}

impl LogBarrier<'_> {
    fn slacks(&self, w: &[f64]) -> Vec<f64> {
        (0..self.g.rows())
            .map(|i| self.h[i] + dot(self.g.row(i), w))
            .collect()
    }

    fn value(&self, w: &[f64]) -> f64 {
        let s = self.slacks(w);
        if s.iter().any(|v| !(*v > 0.0)) {
            return f64::NEG_INFINITY;
        }
        dot(self.c, w) + s.iter().zip(self.alpha).map(|(si, a)| a * si.ln()).sum::<f64>()
    }

    fn maximize(&self, w: &mut [f64], max_steps: usize) -> usize {
        let k = w.len();
        for step in 0..max_steps {
            let s = self.slacks(w);
            let mut grad = self.c.to_vec();
            let mut hess = DenseMatrix::zeros(k, k);
            for i in 0..self.g.rows() {
                let gi = self.g.row(i);
                let a = self.alpha[i] / s[i];
                let b = self.alpha[i] / (s[i] * s[i]);
                for p in 0..k {
                    if gi[p] == 0.0 {
                        continue;
                    }
                    grad[p] += a * gi[p];
                    let bp = b * gi[p];
                    for q in 0..k {
                        let v = hess.get(p, q) + bp * gi[q];
                        hess.set(p, q, v);
                    }
                }
            }
            let Some(dir) = solve_dense(&hess, &grad) else {
                return step;
            };
            let decrement = dot(&grad, &dir);
            if !(decrement > 1e-14) {
                return step;
            }
            // largest step keeping slacks positive, then backtrack on the objective
            let mut t_max = f64::INFINITY;
            for i in 0..self.g.rows() {
                let ds = dot(self.g.row(i), &dir);
                if ds < 0.0 {
                    t_max = t_max.min(-s[i] / ds);
                }
            }
            let mut t = f64::min(1.0, 0.99 * t_max);
            let f0 = self.value(w);
            let trial = |t: f64| -> Vec<f64> { w.iter().zip(&dir).map(|(a, b)| a + t * b).collect() };
            loop {
                let cand = trial(t);
                if self.value(&cand) >= f0 + 0.25 * t * decrement {
                    w.copy_from_slice(&cand);
                    break;
                }
                t *= 0.5;
                if t < 1e-16 {
                    return step;
                }
            }
        }
        max_steps
    }
}

/// Lower bound on the condition measure of `ker(A) ∩ R^n_{++}` from a log-barrier search
/// for `max sum_j ln x_j` over `x in ker(A), 0 < x <= 1`.
///
/// The iterate is kept in the span of an orthonormal kernel basis, so the returned value
/// `prod_j x_j / ||x||_inf` is attained by an actual kernel point.
pub fn condition_measure_search(a: &DenseMatrix, iters: usize, seed: u64) -> Result<f64> {
    Ok(log_condition_measure_search(a, iters, seed)?.exp())
}

/// As [`condition_measure_search`], returning `ln` of the bound.
pub fn log_condition_measure_search(a: &DenseMatrix, iters: usize, seed: u64) -> Result<f64> {
    use rand::{Rng, SeedableRng};

    let n = a.cols();
    let basis = if a.rows() == 0 {
        DenseMatrix::identity(n)
    } else {
        nullspace_basis(a, DEFAULT_RANK_TOL)?
    };
    let k = basis.rows();
    // x = basis^T y; constraint rows are the basis columns
    let kt = basis.transpose();

    // Phase one: maximise -s subject to x + s > 0, 1 - x > 0 until s < 0.
    let mut g1 = DenseMatrix::zeros(2 * n, k + 1);
    let mut h1 = vec![0.0; 2 * n];
    for j in 0..n {
        g1.row_mut(j)[..k].copy_from_slice(kt.row(j));
        g1.set(j, k, 1.0);
        for (dst, src) in g1.row_mut(n + j)[..k].iter_mut().zip(kt.row(j)) {
            *dst = -src;
        }
        h1[n + j] = 1.0;
    }
    let ones = vec![1.0; 2 * n];
    let mut start: Option<Vec<f64>> = None;
    let mut budget = iters.max(1);
    'restarts: for attempt in 0..3u64 {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(derive_seed(seed, attempt));
        let mut w: Vec<f64> = (0..k).map(|_| rng.random_range(-1e-3..1e-3)).collect();
        let x0 = kt.mul_vec(&w)?;
        w.push(1.0 + norm_inf(&x0));
        let mut t = 1.0;
        while t <= 1e14 && budget > 0 {
            let mut c = vec![0.0; k + 1];
            c[k] = -t;
            let used = LogBarrier {
                g: &g1,
                h: &h1,
                alpha: &ones,
                c: &c,
            }
            .maximize(&mut w, budget.min(100));
            budget = budget.saturating_sub(used.max(1));
            let x = kt.mul_vec(&w[..k])?;
            if x.iter().all(|v| *v > 0.0) {
                w.truncate(k);
                start = Some(w);
                break 'restarts;
            }
            t *= 10.0;
        }
    }
    let mut y = start.ok_or(Error::NoFeasibleStart)?;

    // Phase two: maximise t * sum ln x_j + sum ln(1 - x_j), t increasing.
    let mut g2 = DenseMatrix::zeros(2 * n, k);
    let mut h2 = vec![0.0; 2 * n];
    for j in 0..n {
        g2.row_mut(j).copy_from_slice(kt.row(j));
        for (dst, src) in g2.row_mut(n + j).iter_mut().zip(kt.row(j)) {
            *dst = -src;
        }
        h2[n + j] = 1.0;
    }
    let zero = vec![0.0; k];
    let mut t = 1.0;
    let mut budget = iters.max(1);
    while budget > 0 {
        let mut alpha = vec![t; n];
        alpha.extend(std::iter::repeat_n(1.0, n));
        let used = LogBarrier {
            g: &g2,
            h: &h2,
            alpha: &alpha,
            c: &zero,
        }
        .maximize(&mut y, budget.min(100));
        budget = budget.saturating_sub(used.max(1));
        if (n as f64) / t < 1e-12 {
            break;
        }
        t *= 10.0;
    }
    let x = kt.mul_vec(&y)?;
    if x.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::NoFeasibleStart);
    }
    let top = norm_inf(&x);
    Ok(x.iter().map(|v| (v / top).ln()).sum())
}
