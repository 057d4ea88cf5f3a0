//! Random instance families: naive Gaussian kernels, kernels with a known most-interior
//! point (and hence a known condition measure), and block instances with a prescribed
//! non-trivial partition.
//!
//! All randomness comes from `ChaCha8Rng` seeded with a `u64`; a batch derives one seed
//! per instance with [`derive_seed`], so results never depend on scheduling.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{dot, DenseMatrix};
use crate::subspace::{complement_basis, Instance, KnownDelta, Meta, Partition, DEFAULT_RANK_TOL};

/// Fresh draws allowed when the interior point's maximum is not unique.
const MAX_DRAWS: usize = 16;

pub const DEFAULT_DELTA_CAP: f64 = 0.001;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Naive,
    Controlled,
    Partitioned,
}

impl Family {
    pub fn tag(self) -> &'static str {
        match self {
            Family::Naive => "naive",
            Family::Controlled => "controlled",
            Family::Partitioned => "partitioned",
        }
    }
}

/// Everything needed to regenerate one instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenSpec {
    pub family: Family,
    pub n: usize,
    /// Ignored by the partitioned family, which derives its row count.
    pub m: Option<usize>,
    pub seed: u64,
    /// Upper bound of the forced-small entries; 0.001 for the controlled family when absent.
    /// Partitioned blocks get no forced-small entries unless this or `frac_small` is set.
    pub delta_cap: Option<f64>,
    /// Fraction of forced-small entries; drawn from U[0.2, 0.8] per instance when absent.
    pub frac_small: Option<f64>,
    /// |B| for the partitioned family; drawn from [n/4, 3n/4] when absent.
    pub size_split: Option<usize>,
}

impl GenSpec {
    pub fn new(family: Family, n: usize, m: Option<usize>, seed: u64) -> Self {
        Self {
            family,
            n,
            m,
            seed,
            delta_cap: None,
            frac_small: None,
            size_split: None,
        }
    }

    pub fn generate(&self) -> Result<Instance> {
        let need_m = || {
            self.m
                .ok_or_else(|| Error::InvalidInput(format!("family {} needs m", self.family.tag())))
        };
        match self.family {
            Family::Naive => gen_naive(need_m()?, self.n, self.seed),
            Family::Controlled => gen_controlled(
                need_m()?,
                self.n,
                self.delta_cap.unwrap_or(DEFAULT_DELTA_CAP),
                self.frac_small,
                self.seed,
            ),
            Family::Partitioned => gen_partitioned(
                self.n,
                self.seed,
                self.size_split,
                self.delta_cap,
                self.frac_small,
            ),
        }
    }
}

/// SplitMix64 finaliser.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Per-instance seed: `splitmix64(base ^ splitmix64(index))`.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    splitmix64(base ^ splitmix64(index))
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn gaussian_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// Uniform on the open-closed interval (0, hi].
fn uniform_pos(rng: &mut ChaCha8Rng, hi: f64) -> f64 {
    // random::<f64>() is in [0, 1); 1 - r is in (0, 1]
    (1.0 - rng.random::<f64>()) * hi
}

/// `A` with i.i.d. standard normal entries.
pub fn gen_naive(m: usize, n: usize, seed: u64) -> Result<Instance> {
    if !(1 <= m && m < n) {
        return Err(Error::InvalidInput(format!(
            "naive family needs 1 <= m < n, got m={m}, n={n}"
        )));
    }
    let mut r = rng(seed);
    let data = gaussian_vec(&mut r, m * n);
    let a = DenseMatrix::from_row_major(m, n, data)?;
    let meta = Meta {
        generator: "naive".into(),
        seed,
        ..Meta::default()
    };
    Instance::new(n, a, meta)
}

/// Draws the most-interior point: `floor(frac * n)` scattered entries in (0, delta_cap],
/// the rest in (0, 1], scaled so the maximum is exactly 1 and attained once.
fn draw_interior_point(r: &mut ChaCha8Rng, n: usize, small: Option<(f64, Option<f64>)>) -> Result<Vec<f64>> {
    let (delta_cap, frac) = match small {
        Some((cap, Some(f))) => (cap, f),
        Some((cap, None)) => (cap, r.random_range(0.2..=0.8)),
        None => (1.0, 0.0),
    };
    let k = ((frac * n as f64).floor() as usize).min(n);
    for _ in 0..MAX_DRAWS {
        let mut x: Vec<f64> = (0..n).map(|_| uniform_pos(r, 1.0)).collect();
        for i in index::sample(r, n, k) {
            x[i] = uniform_pos(r, delta_cap);
        }
        let top = x.iter().cloned().fold(0.0, f64::max);
        x.iter_mut().for_each(|v| *v /= top);
        if x.iter().filter(|v| **v == 1.0).count() == 1 {
            return Ok(x);
        }
    }
    Err(Error::DegenerateMax { attempts: MAX_DRAWS })
}

/// Kernel rows making `x_bar` the most interior point of `ker(A) ∩ R^n_{++}`:
/// `a_1 = n e_k - 1 / x_bar` with `k` the argmax, and Gaussian rows orthogonal to `x_bar`.
fn rows_for_interior_point(r: &mut ChaCha8Rng, x_bar: &[f64], m: usize) -> Vec<Vec<f64>> {
    let n = x_bar.len();
    let k = x_bar.iter().position(|v| *v == 1.0).expect("normalised point");
    let mut rows = Vec::with_capacity(m);
    let mut a1: Vec<f64> = x_bar.iter().map(|v| -1.0 / v).collect();
    a1[k] += n as f64;
    rows.push(a1);
    let xx = dot(x_bar, x_bar);
    for _ in 1..m {
        let mut g = gaussian_vec(r, n);
        let c = dot(&g, x_bar) / xx;
        g.iter_mut().zip(x_bar).for_each(|(gi, xi)| *gi -= c * xi);
        rows.push(g);
    }
    rows
}

fn product(x: &[f64]) -> f64 {
    x.iter().product()
}

/// Instance with a known interior point `x_bar` and condition measure `prod_j x_bar_j`.
pub fn gen_controlled(
    m: usize,
    n: usize,
    delta_cap: f64,
    frac_small: Option<f64>,
    seed: u64,
) -> Result<Instance> {
    if !(2 <= m && m < n) {
        return Err(Error::InvalidInput(format!(
            "controlled family needs 2 <= m < n, got m={m}, n={n}"
        )));
    }
    check_controlled_params(delta_cap, frac_small)?;
    controlled_block(m, n, Some((delta_cap, frac_small)), seed)
}

fn check_controlled_params(delta_cap: f64, frac_small: Option<f64>) -> Result<()> {
    if !(delta_cap > 0.0 && delta_cap <= 1.0) {
        return Err(Error::InvalidInput(format!(
            "delta_cap must be in (0, 1], got {delta_cap}"
        )));
    }
    if let Some(f) = frac_small {
        if !(f > 0.0 && f < 1.0) {
            return Err(Error::InvalidInput(format!(
                "frac_small must be in (0, 1), got {f}"
            )));
        }
    }
    Ok(())
}

/// Same construction allowing a single row, as used for the blocks of partitioned instances.
/// `small` is `(delta_cap, frac_small)`; `None` draws every entry from (0, 1].
fn controlled_block(m: usize, n: usize, small: Option<(f64, Option<f64>)>, seed: u64) -> Result<Instance> {
    let mut r = rng(seed);
    let x_bar = draw_interior_point(&mut r, n, small)?;
    let rows = rows_for_interior_point(&mut r, &x_bar, m);
    let meta = Meta {
        generator: "controlled".into(),
        seed,
        known_delta: Some(KnownDelta::Value(product(&x_bar))),
        known_interior_point: Some(x_bar),
        known_partition: None,
    };
    Instance::new(n, DenseMatrix::from_rows(&rows)?, meta)
}

/// Controlled instance built around a caller-supplied interior point (max entry exactly 1,
/// attained once).
pub fn controlled_from_point(x_bar: &[f64], m: usize, seed: u64) -> Result<Instance> {
    let n = x_bar.len();
    if !(1 <= m && m < n) {
        return Err(Error::InvalidInput(format!("need 1 <= m < n, got m={m}, n={n}")));
    }
    if x_bar.iter().any(|v| !(*v > 0.0 && *v <= 1.0)) || x_bar.iter().filter(|v| **v == 1.0).count() != 1 {
        return Err(Error::InvalidInput(
            "point must be in (0, 1] with a unique entry 1".into(),
        ));
    }
    let mut r = rng(seed);
    let rows = rows_for_interior_point(&mut r, x_bar, m);
    let meta = Meta {
        generator: "controlled".into(),
        seed,
        known_delta: Some(KnownDelta::Value(product(x_bar))),
        known_interior_point: Some(x_bar.to_vec()),
        known_partition: None,
    };
    Instance::new(n, DenseMatrix::from_rows(&rows)?, meta)
}

/// Orthonormal rows spanning `ker(M)`.
pub fn nullspace_basis(m: &DenseMatrix, rank_tol: f64) -> Result<DenseMatrix> {
    if m.rows() >= m.cols() {
        return Err(Error::FullRankSquare {
            rows: m.rows(),
            cols: m.cols(),
        });
    }
    complement_basis(m.cols(), &m.to_rows(), rank_tol)
}

/// Block instance `A = [[A_BB, A_NB], [0, A_NN]]` whose Goldman-Tucker partition is
/// `B = {0..|B|}`, `N` the rest.
///
/// `ker(A_BB)` meets the open orthant of `R^B` by construction, and the rows of `A_NN`
/// are an orthonormal basis of `ker(M)` for a controlled `M` on `R^N`, so `Im(A_NN^T)`
/// meets the open orthant of `R^N`.
pub fn gen_partitioned(
    n: usize,
    seed: u64,
    size_split: Option<usize>,
    delta_cap: Option<f64>,
    frac_small: Option<f64>,
) -> Result<Instance> {
    if n < 4 {
        return Err(Error::InvalidInput(format!(
            "partitioned family needs n >= 4, got {n}"
        )));
    }
    let small = match (delta_cap, frac_small) {
        (None, None) => None,
        (cap, f) => Some((cap.unwrap_or(DEFAULT_DELTA_CAP), f)),
    };
    if let Some((cap, f)) = small {
        check_controlled_params(cap, f)?;
    }
    let mut r = rng(seed);
    let nb = match size_split {
        Some(s) if s >= 1 && s < n => s,
        Some(s) => {
            return Err(Error::InvalidInput(format!("|B| must be in 1..n, got {s}")));
        }
        None => r.random_range(n / 4..=(3 * n) / 4).clamp(1, n - 1),
    };
    let nn = n - nb;
    let seed_b = r.random::<u64>();
    let seed_n = r.random::<u64>();

    // A_BB: about |B|/2 rows with a positive kernel point (no rows when |B| = 1)
    let rows_b = if nb >= 2 { (nb / 2).max(1) } else { 0 };
    let a_bb = if rows_b > 0 {
        controlled_block(rows_b, nb, small, seed_b)?.a
    } else {
        DenseMatrix::zeros(0, nb)
    };

    // A_NN: orthonormal basis of ker(M), M with about |N|/2 rows and a positive kernel point
    let a_nn = if nn >= 2 {
        let rows_m = nn.div_ceil(2).min(nn - 1).max(1);
        let mm = controlled_block(rows_m, nn, small, seed_n)?;
        nullspace_basis(&mm.a, DEFAULT_RANK_TOL)?
    } else {
        DenseMatrix::identity(1)
    };
    let rows_n = a_nn.rows();

    let mut a = DenseMatrix::zeros(rows_b + rows_n, n);
    for i in 0..rows_b {
        let nb_part = gaussian_vec(&mut r, nn);
        let row = a.row_mut(i);
        row[..nb].copy_from_slice(a_bb.row(i));
        row[nb..].copy_from_slice(&nb_part);
    }
    for i in 0..rows_n {
        a.row_mut(rows_b + i)[nb..].copy_from_slice(a_nn.row(i));
    }
    let meta = Meta {
        generator: "partitioned".into(),
        seed,
        known_delta: None,
        known_interior_point: None,
        known_partition: Some(Partition {
            b: (0..nb).collect(),
            n: (nb..n).collect(),
        }),
    };
    Instance::new(n, a, meta)
}
