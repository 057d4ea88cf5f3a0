//! Kernel representations of subspaces and the orthogonal projectors built from them.
//!
//! A subspace `L = ker(A)` is carried by its kernel matrix `A` (m x n, full row rank).
//! Projectors come from a Householder factorisation of the (rescaled) transpose:
//! `Im(D^-1 A^T)` is the orthogonal complement of `D(L)`, and `Im(D_hat A^T)` is
//! `D_hat(L^perp)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::json;
use crate::matrix::{axpy, dot, norm2, norm_inf, DenseMatrix};

/// Default relative threshold on Householder diagonal factors.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

/// Ground-truth value of the condition measure, when a generator knows it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KnownDelta {
    Value(f64),
    Infeasible,
}

/// Goldman-Tucker split of the coordinates, 0-based in memory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    pub b: Vec<usize>,
    pub n: Vec<usize>,
}

impl Partition {
    /// True iff `b` and `n` are disjoint and together cover `0..dim`.
    pub fn is_partition_of(&self, dim: usize) -> bool {
        let mut seen = vec![false; dim];
        for &i in self.b.iter().chain(&self.n) {
            if i >= dim || seen[i] {
                return false;
            }
            seen[i] = true;
        }
        seen.into_iter().all(|s| s)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Meta {
    pub generator: String,
    pub seed: u64,
    pub known_delta: Option<KnownDelta>,
    pub known_interior_point: Option<Vec<f64>>,
    pub known_partition: Option<Partition>,
}

/// A feasibility instance `L = ker(A)` plus optional ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub a: DenseMatrix,
    n: usize,
    pub meta: Meta,
}

impl Instance {
    /// Wraps a kernel matrix; `n` is explicit so that `m = 0` (L = R^n) is representable.
    pub fn new(n: usize, a: DenseMatrix, meta: Meta) -> Result<Self> {
        if a.rows() > 0 && a.cols() != n {
            return Err(Error::dims(format!("{n} columns"), format!("{}", a.cols())));
        }
        let a = if a.rows() == 0 {
            DenseMatrix::zeros(0, n)
        } else {
            a
        };
        let inst = Self { a, n, meta };
        inst.validate()?;
        Ok(inst)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.a.rows()
    }

    /// Structural checks: shape, interior-point and partition metadata.
    /// Full row rank is checked when projectors are built.
    pub fn validate(&self) -> Result<()> {
        let (m, n) = (self.m(), self.n);
        if m > n {
            return Err(Error::InvalidInput(format!("m = {m} exceeds n = {n}")));
        }
        if let Some(x) = &self.meta.known_interior_point {
            if x.len() != n {
                return Err(Error::dims(n, x.len()));
            }
            if x.iter().any(|v| !(*v > 0.0)) {
                return Err(Error::InvalidInput("interior point is not positive".into()));
            }
            if norm_inf(x) != 1.0 {
                return Err(Error::InvalidInput("interior point must have max entry 1".into()));
            }
            let r = norm_inf(&self.a.mul_vec(x)?);
            if r > 1e-8 * self.a.max_abs().max(1.0) {
                return Err(Error::InvalidInput(format!(
                    "interior point is not in ker(A): residual {r:e}"
                )));
            }
        }
        if let Some(p) = &self.meta.known_partition {
            if !p.is_partition_of(n) {
                return Err(Error::InvalidInput("known partition does not split 1..n".into()));
            }
        }
        Ok(())
    }

    /// `sum_j ln x_j` of the known interior point; finite even when the product underflows.
    pub fn log_known_delta(&self) -> Option<f64> {
        self.meta
            .known_interior_point
            .as_ref()
            .map(|x| x.iter().map(|v| v.ln()).sum())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&InstanceFile::from(self))?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let f: InstanceFile = serde_json::from_str(s)?;
        f.try_into()
    }

    pub fn write(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn read(path: &std::path::Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

// ---- on-disk format ----

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum DeltaFile {
    #[serde(serialize_with = "json::f64")]
    Value(f64),
    Tag(String),
}

#[derive(Serialize, Deserialize)]
struct PartitionFile {
    #[serde(rename = "B")]
    b: Vec<usize>,
    #[serde(rename = "N")]
    n: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct MetaFile {
    #[serde(default)]
    generator: String,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    known_delta: Option<DeltaFile>,
    #[serde(default, serialize_with = "json::opt_vec")]
    known_interior_point: Option<Vec<f64>>,
    #[serde(default)]
    known_partition: Option<PartitionFile>,
}

#[derive(Serialize, Deserialize)]
struct InstanceFile {
    n: usize,
    m: usize,
    #[serde(rename = "A", serialize_with = "json::rows")]
    a: Vec<Vec<f64>>,
    #[serde(default)]
    meta: Option<MetaFile>,
}

fn to_one_based(v: &[usize]) -> Vec<usize> {
    v.iter().map(|i| i + 1).collect()
}

fn from_one_based(v: &[usize]) -> Result<Vec<usize>> {
    v.iter()
        .map(|&i| {
            i.checked_sub(1)
                .ok_or_else(|| Error::InvalidInput("indices are 1-based".into()))
        })
        .collect()
}

impl From<&Instance> for InstanceFile {
    fn from(inst: &Instance) -> Self {
        let meta = &inst.meta;
        InstanceFile {
            n: inst.n(),
            m: inst.m(),
            a: inst.a.to_rows(),
            meta: Some(MetaFile {
                generator: meta.generator.clone(),
                seed: meta.seed,
                known_delta: meta.known_delta.map(|d| match d {
                    KnownDelta::Value(v) => DeltaFile::Value(v),
                    KnownDelta::Infeasible => DeltaFile::Tag("infeasible".into()),
                }),
                known_interior_point: meta.known_interior_point.clone(),
                known_partition: meta.known_partition.as_ref().map(|p| PartitionFile {
                    b: to_one_based(&p.b),
                    n: to_one_based(&p.n),
                }),
            }),
        }
    }
}

impl TryFrom<InstanceFile> for Instance {
    type Error = Error;

    fn try_from(f: InstanceFile) -> Result<Self> {
        if f.a.len() != f.m {
            return Err(Error::dims(format!("{} rows", f.m), f.a.len()));
        }
        let a = if f.m == 0 {
            DenseMatrix::zeros(0, f.n)
        } else {
            DenseMatrix::from_rows(&f.a)?
        };
        let meta = match f.meta {
            None => Meta::default(),
            Some(mf) => Meta {
                generator: mf.generator,
                seed: mf.seed,
                known_delta: match mf.known_delta {
                    None => None,
                    Some(DeltaFile::Value(v)) => Some(KnownDelta::Value(v)),
                    Some(DeltaFile::Tag(t)) if t == "infeasible" => Some(KnownDelta::Infeasible),
                    Some(DeltaFile::Tag(t)) => {
                        return Err(Error::Format(format!("unknown known_delta tag {t:?}")))
                    }
                },
                known_interior_point: mf.known_interior_point,
                known_partition: match mf.known_partition {
                    None => None,
                    Some(p) => Some(Partition {
                        b: from_one_based(&p.b)?,
                        n: from_one_based(&p.n)?,
                    }),
                },
            },
        };
        Instance::new(f.n, a, meta)
    }
}

// ---- projectors ----

/// Orthogonal projectors onto the working primal and dual subspaces.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectorPair {
    pub p: DenseMatrix,
    pub p_hat: DenseMatrix,
}

/// Orthonormal basis of the span of `cols` (each of length `n`), as `k x n` rows.
///
/// Householder factorisation without pivoting. Column `j` is declared dependent when its
/// diagonal factor falls below `rank_tol` times the column's own norm, which keeps the test
/// invariant under the column scalings that diagonal rescaling produces.
pub fn orthonormal_basis(n: usize, cols: &[Vec<f64>], rank_tol: f64) -> Result<DenseMatrix> {
    let (reflectors, _) = householder(n, cols, rank_tol, false)?;
    let k = cols.len();
    let mut q = DenseMatrix::zeros(k, n);
    for c in 0..k {
        let row = q.row_mut(c);
        row[c] = 1.0;
        apply_reflectors_rev(&reflectors, row);
    }
    Ok(q)
}

/// Orthonormal basis of the orthogonal complement of `span(cols)`, as `(n - k) x n` rows.
pub fn complement_basis(n: usize, cols: &[Vec<f64>], rank_tol: f64) -> Result<DenseMatrix> {
    let (reflectors, _) = householder(n, cols, rank_tol, false)?;
    let k = cols.len();
    let mut q = DenseMatrix::zeros(n - k, n);
    for c in k..n {
        let row = q.row_mut(c - k);
        row[c] = 1.0;
        apply_reflectors_rev(&reflectors, row);
    }
    Ok(q)
}

/// Like [`complement_basis`], but columns that fail the rank test are dropped instead of
/// rejected, so any set of columns (including none, or more than `n`) is accepted.
pub fn complement_basis_lenient(n: usize, cols: &[Vec<f64>], rank_tol: f64) -> Result<DenseMatrix> {
    let (reflectors, _) = householder(n, cols, rank_tol, true)?;
    let r = reflectors.len();
    let mut q = DenseMatrix::zeros(n - r, n);
    for c in r..n {
        let row = q.row_mut(c - r);
        row[c] = 1.0;
        apply_reflectors_rev(&reflectors, row);
    }
    Ok(q)
}

/// Reflector `j` is `I - beta v v^T` acting on coordinates `j..n`. `v` is left unnormalised
/// (`v_0 = x_0 - alpha`) so that axis-aligned columns produce exact reflectors.
struct Reflector {
    v: Vec<f64>,
    beta: f64,
}

impl Reflector {
    fn apply(&self, seg: &mut [f64]) {
        let s = self.beta * dot(&self.v, seg);
        if s != 0.0 {
            axpy(-s, &self.v, seg);
        }
    }
}

fn householder(
    n: usize,
    cols: &[Vec<f64>],
    rank_tol: f64,
    skip_dependent: bool,
) -> Result<(Vec<Reflector>, Vec<f64>)> {
    let k = cols.len();
    if k > n && !skip_dependent {
        return Err(Error::FullRankSquare { rows: k, cols: n });
    }
    let mut work: Vec<Vec<f64>> = cols.to_vec();
    for c in &work {
        if c.len() != n {
            return Err(Error::dims(n, c.len()));
        }
        if c.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("factorised column"));
        }
    }
    let norms: Vec<f64> = work.iter().map(|c| norm2(c)).collect();
    let mut reflectors = Vec::with_capacity(k);
    let mut diag = Vec::with_capacity(k);
    for j in 0..k {
        // r: reflectors accepted so far, equal to j unless columns were skipped
        let r = reflectors.len();
        let (head, tail) = work.split_at_mut(j + 1);
        let x = &mut head[j][r..];
        let xnorm = norm2(x);
        let threshold = rank_tol * norms[j];
        if xnorm <= threshold || xnorm == 0.0 {
            if skip_dependent {
                continue;
            }
            return Err(Error::RankDeficient {
                column: j + 1,
                value: xnorm,
                threshold,
            });
        }
        let alpha = if x[0] >= 0.0 { -xnorm } else { xnorm };
        let mut v = x.to_vec();
        v[0] -= alpha;
        // v^T v = 2 xnorm (xnorm + |x_0|)
        let h = Reflector {
            beta: 1.0 / (xnorm * (xnorm + x[0].abs())),
            v,
        };
        diag.push(alpha);
        for c in tail.iter_mut() {
            h.apply(&mut c[r..]);
        }
        reflectors.push(h);
    }
    Ok((reflectors, diag))
}

/// `x := H_0 H_1 ... H_{k-1} x`.
fn apply_reflectors_rev(reflectors: &[Reflector], x: &mut [f64]) {
    for (j, h) in reflectors.iter().enumerate().rev() {
        h.apply(&mut x[j..]);
    }
}

/// `Q^T Q` for a basis stored as rows, i.e. the projector onto the row span. Exactly symmetric.
fn gram_projector(q: &DenseMatrix) -> DenseMatrix {
    let n = q.cols();
    let mut out = DenseMatrix::zeros(n, n);
    for r in 0..q.rows() {
        let qr = q.row(r);
        for i in 0..n {
            let a = qr[i];
            if a != 0.0 {
                axpy(a, &qr[i..], &mut out.row_mut(i)[i..]);
            }
        }
    }
    for i in 0..n {
        for j in 0..i {
            let v = out.get(j, i);
            out.set(i, j, v);
        }
    }
    out
}

fn complement_of(p: &DenseMatrix) -> DenseMatrix {
    let n = p.rows();
    let mut out = DenseMatrix::identity(n);
    for i in 0..n {
        for (o, v) in out.row_mut(i).iter_mut().zip(p.row(i)) {
            *o -= v;
        }
    }
    out
}

fn scaled_rows(a: &DenseMatrix, scale: impl Fn(usize) -> f64) -> Vec<Vec<f64>> {
    (0..a.rows())
        .map(|i| a.row(i).iter().enumerate().map(|(j, v)| v * scale(j)).collect())
        .collect()
}

fn check_diag(d: &[f64], n: usize) -> Result<()> {
    if d.len() != n {
        return Err(Error::dims(n, d.len()));
    }
    if d.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::InvalidInput("rescaling diagonal must be positive".into()));
    }
    Ok(())
}

/// Projector onto `D(L) = ker(A D^-1)`, as the complement of `Im(D^-1 A^T)`.
pub fn primal_projector(a: &DenseMatrix, d: &[f64], rank_tol: f64) -> Result<DenseMatrix> {
    let n = a.cols();
    check_diag(d, n)?;
    let q = orthonormal_basis(n, &scaled_rows(a, |j| 1.0 / d[j]), rank_tol)?;
    Ok(complement_of(&gram_projector(&q)))
}

/// Projector onto `D_hat(L^perp) = Im(D_hat A^T)`.
pub fn dual_projector(a: &DenseMatrix, d_hat: &[f64], rank_tol: f64) -> Result<DenseMatrix> {
    let n = a.cols();
    check_diag(d_hat, n)?;
    let q = orthonormal_basis(n, &scaled_rows(a, |j| d_hat[j]), rank_tol)?;
    Ok(gram_projector(&q))
}

/// Projectors onto `ker(A)` and `Im(A^T)` from one factorisation of `A^T`.
pub fn projector_from_kernel(a: &DenseMatrix, rank_tol: f64) -> Result<ProjectorPair> {
    let n = a.cols();
    let q = orthonormal_basis(n, &a.to_rows(), rank_tol)?;
    let p_hat = gram_projector(&q);
    let p = complement_of(&p_hat);
    Ok(ProjectorPair { p, p_hat })
}

/// Projectors onto `D(L)` and `D_hat(L^perp)`.
pub fn rescaled_projectors(
    a: &DenseMatrix,
    d: &[f64],
    d_hat: &[f64],
    rank_tol: f64,
) -> Result<ProjectorPair> {
    Ok(ProjectorPair {
        p: primal_projector(a, d, rank_tol)?,
        p_hat: dual_projector(a, d_hat, rank_tol)?,
    })
}

pub fn apply_projector(p: &DenseMatrix, z: &[f64]) -> Result<Vec<f64>> {
    if p.rows() != p.cols() {
        return Err(Error::dims(
            "square matrix".to_string(),
            format!("{}x{}", p.rows(), p.cols()),
        ));
    }
    p.mul_vec(z)
}
