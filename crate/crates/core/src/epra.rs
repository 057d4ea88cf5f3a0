//! The symmetric projection-and-rescaling loop.
//!
//! Each round runs a basic procedure on the working primal subspace `D(L)` and on the
//! working dual subspace `D_hat(L^perp)`, maps the results back through `D^-1` and
//! `D_hat^-1`, and stops once the small coordinates of the two points split `1..n`.
//! Otherwise every coordinate the basic procedure proved small is stretched, capped at `U`.
//!
//! When the split is found but `x` is not positive on `B` (or `x_hat` on `N`), each side is
//! re-solved on its restricted subspace to obtain sign-correct certificates; if that fails
//! the loop keeps rescaling.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::basic::{self, BpConfig, BpOutcome, BpStatus, Scheme};
use crate::error::{Error, Result};
use crate::json;
use crate::matrix::DenseMatrix;
use crate::matrix::{norm_inf, positive_part_l1};
use crate::subspace::{self, Instance, Meta, DEFAULT_RANK_TOL};

/// Floor for `||(Pz)^+||_1` before it is used as a divisor.
const ALPHA_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RescaleMode {
    /// Stretch every coordinate with `z_i > ||(Pz)^+||_1`.
    AllDirections,
    /// Double the single coordinate attaining `||z||_inf`.
    SingleDirection,
}

impl RescaleMode {
    pub fn tag(self) -> &'static str {
        match self {
            RescaleMode::AllDirections => "all",
            RescaleMode::SingleDirection => "single",
        }
    }

    pub fn from_tag(s: &str) -> Option<Self> {
        match s {
            "all" => Some(RescaleMode::AllDirections),
            "single" => Some(RescaleMode::SingleDirection),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpraConfig {
    /// Cap on the rescaling diagonals; also sets the partition threshold `1/U`.
    pub u_cap: f64,
    pub epsilon: f64,
    pub scheme: Scheme,
    pub max_rounds: usize,
    pub bp_max_iters: usize,
    pub rescale_mode: RescaleMode,
    pub membership_tol: f64,
    pub rank_tol: f64,
}

impl Default for EpraConfig {
    fn default() -> Self {
        Self {
            u_cap: 1e10,
            epsilon: 0.5,
            scheme: Scheme::SmoothPerceptron,
            max_rounds: 100,
            bp_max_iters: BpConfig::EPRA_MAX_ITERS,
            rescale_mode: RescaleMode::AllDirections,
            membership_tol: 1e-8,
            rank_tol: DEFAULT_RANK_TOL,
        }
    }
}

impl EpraConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.u_cap > 1.0 && self.u_cap.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "U must exceed 1, got {}",
                self.u_cap
            )));
        }
        if self.max_rounds < 1 {
            return Err(Error::InvalidInput("max_rounds must be at least 1".into()));
        }
        self.bp_config().validate()
    }

    pub fn bp_config(&self) -> BpConfig {
        BpConfig {
            epsilon: self.epsilon,
            max_iters: self.bp_max_iters,
            scheme: self.scheme,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EpraStatus {
    TrivialPrimal,
    TrivialDual,
    PartitionFound,
    RoundLimit,
    Stalled,
}

impl EpraStatus {
    /// True for the statuses that come with a `(B, N)` certificate.
    pub fn is_solved(self) -> bool {
        matches!(
            self,
            EpraStatus::TrivialPrimal | EpraStatus::TrivialDual | EpraStatus::PartitionFound
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpraResult {
    pub status: EpraStatus,
    /// Point of `L` (back in original coordinates).
    pub x: Vec<f64>,
    /// Point of `L^perp`.
    pub x_hat: Vec<f64>,
    /// 0-based index sets.
    pub b: Vec<usize>,
    pub n: Vec<usize>,
    pub d: Vec<f64>,
    pub d_hat: Vec<f64>,
    /// Number of rescaling steps performed.
    pub rounds: usize,
    pub bp_iters_primal: usize,
    pub bp_iters_dual: usize,
    pub wall_time: f64,
}

impl EpraResult {
    pub fn total_bp_iters(&self) -> usize {
        self.bp_iters_primal + self.bp_iters_dual
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ResultFile::from(self))?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let f: ResultFile = serde_json::from_str(s)?;
        let idx = |v: Vec<usize>| -> Result<Vec<usize>> {
            v.into_iter()
                .map(|i| {
                    i.checked_sub(1)
                        .ok_or_else(|| Error::InvalidInput("indices are 1-based".into()))
                })
                .collect()
        };
        Ok(Self {
            status: f.status,
            x: f.x,
            x_hat: f.x_hat,
            b: idx(f.b)?,
            n: idx(f.n)?,
            d: f.d,
            d_hat: f.d_hat,
            rounds: f.rounds,
            bp_iters_primal: f.bp_iters_primal,
            bp_iters_dual: f.bp_iters_dual,
            wall_time: f.wall_time,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct ResultFile {
    status: EpraStatus,
    #[serde(serialize_with = "json::vec")]
    x: Vec<f64>,
    #[serde(serialize_with = "json::vec")]
    x_hat: Vec<f64>,
    #[serde(rename = "B")]
    b: Vec<usize>,
    #[serde(rename = "N")]
    n: Vec<usize>,
    #[serde(serialize_with = "json::vec")]
    d: Vec<f64>,
    #[serde(serialize_with = "json::vec")]
    d_hat: Vec<f64>,
    rounds: usize,
    bp_iters_primal: usize,
    bp_iters_dual: usize,
    #[serde(serialize_with = "json::f64")]
    wall_time: f64,
}

impl From<&EpraResult> for ResultFile {
    fn from(r: &EpraResult) -> Self {
        Self {
            status: r.status,
            x: r.x.clone(),
            x_hat: r.x_hat.clone(),
            b: r.b.iter().map(|i| i + 1).collect(),
            n: r.n.iter().map(|i| i + 1).collect(),
            d: r.d.clone(),
            d_hat: r.d_hat.clone(),
            rounds: r.rounds,
            bp_iters_primal: r.bp_iters_primal,
            bp_iters_dual: r.bp_iters_dual,
            wall_time: r.wall_time,
        }
    }
}

/// `B = {i : |x_hat_i| < ||x_hat||_inf / U}`, `N = {i : |x_i| < ||x||_inf / U}`, and
/// whether they partition `0..n`.
pub fn identify_partition(x: &[f64], x_hat: &[f64], u_cap: f64) -> (Vec<usize>, Vec<usize>, bool) {
    assert_eq!(x.len(), x_hat.len());
    let small = |v: &[f64]| -> Vec<usize> {
        let thr = norm_inf(v) / u_cap;
        (0..v.len()).filter(|&i| v[i].abs() < thr).collect()
    };
    let b = small(x_hat);
    let nn = small(x);
    let mut hits = vec![0u8; x.len()];
    for &i in b.iter().chain(&nn) {
        hits[i] += 1;
    }
    let ok = hits.iter().all(|h| *h == 1);
    (b, nn, ok)
}

/// New rescaling diagonal after a basic procedure that stopped on the rescale condition.
pub fn rescale_update(z: &[f64], pz: &[f64], d: &[f64], u_cap: f64, mode: RescaleMode) -> Vec<f64> {
    assert_eq!(z.len(), d.len());
    match mode {
        RescaleMode::AllDirections => {
            let alpha = positive_part_l1(pz).max(ALPHA_FLOOR);
            z.iter()
                .zip(d)
                .map(|(zi, di)| {
                    let e = (zi / alpha - 1.0).max(0.0);
                    ((1.0 + e) * di).min(u_cap)
                })
                .collect()
        }
        RescaleMode::SingleDirection => {
            let top = norm_inf(z);
            let i = z.iter().position(|v| *v == top).unwrap_or(0);
            let mut out = d.to_vec();
            out[i] = (2.0 * d[i]).min(u_cap);
            out
        }
    }
}

/// Snapshot handed to [`solve_observed`] after the basic procedures of each round.
pub struct RoundEvent<'a> {
    pub round: usize,
    pub primal: &'a BpOutcome,
    pub dual: &'a BpOutcome,
    pub d: &'a [f64],
    pub d_hat: &'a [f64],
}

pub fn solve(inst: &Instance, cfg: &EpraConfig) -> Result<EpraResult> {
    solve_observed(inst, cfg, |_| {})
}

pub fn solve_observed(
    inst: &Instance,
    cfg: &EpraConfig,
    on_round: impl FnMut(&RoundEvent<'_>),
) -> Result<EpraResult> {
    run_loop(inst, cfg, true, on_round)
}

fn run_loop(
    inst: &Instance,
    cfg: &EpraConfig,
    certify: bool,
    mut on_round: impl FnMut(&RoundEvent<'_>),
) -> Result<EpraResult> {
    cfg.validate()?;
    let start = Instant::now();
    let n = inst.n();
    if n == 0 {
        return Err(Error::InvalidInput("empty problem".into()));
    }
    let a = &inst.a;
    let bp = cfg.bp_config();
    let pair = subspace::projector_from_kernel(a, cfg.rank_tol)?;
    let (mut p, mut p_hat) = (pair.p, pair.p_hat);
    let mut d = vec![1.0; n];
    let mut d_hat = vec![1.0; n];
    let z0 = basic::uniform(n);
    let (mut iters_p, mut iters_d) = (0, 0);
    let mut rounds = 0;

    loop {
        let primal = basic::run(&p, &z0, &bp)?;
        let dual = basic::run(&p_hat, &z0, &bp)?;
        iters_p += primal.iterations;
        iters_d += dual.iterations;
        on_round(&RoundEvent {
            round: rounds,
            primal: &primal,
            dual: &dual,
            d: &d,
            d_hat: &d_hat,
        });

        let x = unscale(&primal.pz, &d);
        let x_hat = unscale(&dual.pz, &d_hat);
        let done = |status, x, x_hat, b, nn| EpraResult {
            status,
            x,
            x_hat,
            b,
            n: nn,
            d: d.clone(),
            d_hat: d_hat.clone(),
            rounds,
            bp_iters_primal: iters_p,
            bp_iters_dual: iters_d,
            wall_time: start.elapsed().as_secs_f64(),
        };

        match (primal.status, dual.status) {
            (BpStatus::InteriorFound, BpStatus::InteriorFound) => return Err(Error::BothSidesInterior),
            (BpStatus::InteriorFound, _) => {
                return Ok(done(
                    EpraStatus::TrivialPrimal,
                    x,
                    vec![0.0; n],
                    (0..n).collect(),
                    vec![],
                ));
            }
            (_, BpStatus::InteriorFound) => {
                return Ok(done(
                    EpraStatus::TrivialDual,
                    vec![0.0; n],
                    x_hat,
                    vec![],
                    (0..n).collect(),
                ));
            }
            _ => {}
        }

        let (b, nn, is_partition) = identify_partition(&x, &x_hat, cfg.u_cap);
        if is_partition {
            let signs_ok = b.iter().all(|&i| x[i] > 0.0) && nn.iter().all(|&i| x_hat[i] > 0.0);
            if signs_ok {
                return Ok(done(EpraStatus::PartitionFound, x, x_hat, b, nn));
            }
            if certify {
                if let Some(c) = certify_partition(inst, &b, &nn, cfg)? {
                    let res = done(EpraStatus::PartitionFound, c.x, c.x_hat, b, nn);
                    return Ok(EpraResult {
                        bp_iters_primal: res.bp_iters_primal + c.iters_primal,
                        bp_iters_dual: res.bp_iters_dual + c.iters_dual,
                        ..res
                    });
                }
            }
        }
        if primal.status == BpStatus::IterLimit && dual.status == BpStatus::IterLimit {
            return Ok(done(EpraStatus::Stalled, x, x_hat, b, nn));
        }
        if rounds == cfg.max_rounds {
            return Ok(done(EpraStatus::RoundLimit, x, x_hat, b, nn));
        }

        let next_d = (primal.status == BpStatus::RescaleReady)
            .then(|| rescale_update(&primal.z, &primal.pz, &d, cfg.u_cap, cfg.rescale_mode))
            .filter(|next| *next != d);
        let next_d_hat = (dual.status == BpStatus::RescaleReady)
            .then(|| rescale_update(&dual.z, &dual.pz, &d_hat, cfg.u_cap, cfg.rescale_mode))
            .filter(|next| *next != d_hat);
        if next_d.is_none() && next_d_hat.is_none() {
            return Ok(done(EpraStatus::Stalled, x, x_hat, b, nn));
        }
        if let Some(next) = next_d {
            p = subspace::primal_projector(a, &next, cfg.rank_tol)?;
            d = next;
        }
        if let Some(next) = next_d_hat {
            p_hat = subspace::dual_projector(a, &next, cfg.rank_tol)?;
            d_hat = next;
        }
        rounds += 1;
    }
}

struct Certificate {
    x: Vec<f64>,
    x_hat: Vec<f64>,
    iters_primal: usize,
    iters_dual: usize,
}

/// Strictly positive points of `{x in L : x_N = 0}` on `B` and of `{x_hat in L^perp :
/// x_hat_B = 0}` on `N`, each found by a nested run that must end `TrivialPrimal`.
/// `None` when either side has no such point within the nested budget.
fn certify_partition(
    inst: &Instance,
    b: &[usize],
    nn: &[usize],
    cfg: &EpraConfig,
) -> Result<Option<Certificate>> {
    let n = inst.n();
    let restrict = |rows: &DenseMatrix, idx: &[usize]| -> Vec<Vec<f64>> {
        (0..rows.rows())
            .map(|r| idx.iter().map(|&i| rows.row(r)[i]).collect())
            .collect()
    };
    // ker(A[:, B]) for the primal side; for the dual side, (0, y) is in Im(A^T) exactly when
    // y is orthogonal to the projection of L onto N, i.e. y in ker(K[:, N]) for a basis K of L
    let kernel_rows = subspace::complement_basis(n, &inst.a.to_rows(), cfg.rank_tol)?;
    let mut out = Certificate {
        x: vec![0.0; n],
        x_hat: vec![0.0; n],
        iters_primal: 0,
        iters_dual: 0,
    };
    for (idx, rows, target, iters) in [
        (b, &inst.a, &mut out.x, &mut out.iters_primal),
        (nn, &kernel_rows, &mut out.x_hat, &mut out.iters_dual),
    ] {
        if idx.is_empty() {
            continue;
        }
        let k = idx.len();
        let ker = subspace::complement_basis_lenient(k, &restrict(rows, idx), cfg.rank_tol)?;
        if ker.rows() == 0 {
            return Ok(None);
        }
        let a_sub = subspace::complement_basis_lenient(k, &ker.to_rows(), cfg.rank_tol)?;
        let sub = Instance::new(k, a_sub, Meta::default())?;
        let res = match run_loop(&sub, cfg, false, |_| {}) {
            Ok(r) => r,
            Err(Error::BothSidesInterior) => return Ok(None),
            Err(e) => return Err(e),
        };
        *iters += res.total_bp_iters();
        if res.status != EpraStatus::TrivialPrimal || res.x.iter().any(|v| !(*v > 0.0)) {
            return Ok(None);
        }
        for (&i, v) in idx.iter().zip(res.x) {
            target[i] = v;
        }
    }
    Ok(Some(out))
}

fn unscale(v: &[f64], d: &[f64]) -> Vec<f64> {
    v.iter().zip(d).map(|(a, b)| a / b).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::gen_partitioned;
    use crate::matrix::norm_inf;

    #[test]
    fn partition_examples() {
        let (b, n, ok) = identify_partition(&[1.0, 3e-11], &[-2e-11, 0.5], 1e10);
        assert_eq!((b, n, ok), (vec![0], vec![1], true));
        let (b, n, ok) = identify_partition(&[1.0, 0.5], &[0.5, 1.0], 1e10);
        assert_eq!((b, n, ok), (vec![], vec![], false));
        let (b, _, ok) = identify_partition(&[1.0, 0.5], &[0.0, 0.0], 1e10);
        assert!(b.is_empty() && !ok);
        // zero x_hat with every x entry small-relative is impossible (the max is never small),
        // so a zero vector on one side never yields a partition
        let (b, n, ok) = identify_partition(&[0.0, 0.0], &[0.0, 0.0], 1e10);
        assert!(b.is_empty() && n.is_empty() && !ok);
    }

    #[test]
    fn overlapping_sets_are_not_a_partition() {
        let (b, n, ok) = identify_partition(&[1.0, 0.0, 1.0], &[0.0, 1.0, 0.0], 10.0);
        assert_eq!((b, n), (vec![0, 2], vec![1]));
        assert!(ok);
        let (_, _, ok) = identify_partition(&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0], 10.0);
        assert!(!ok);
    }

    #[test]
    fn rescale_examples() {
        // alpha = 0.2 via Pz = (0.2, -1, 0)
        let z = [0.6, 0.3, 0.1];
        let pz = [0.2, -1.0, 0.0];
        let d = rescale_update(&z, &pz, &[1.0; 3], 10.0, RescaleMode::AllDirections);
        let want = [3.0, 1.5, 1.0];
        for (a, b) in d.iter().zip(want) {
            assert!((a - b).abs() < 1e-12, "{d:?}");
        }
        let d = rescale_update(&z, &pz, &[8.0, 1.0, 1.0], 10.0, RescaleMode::AllDirections);
        assert_eq!(d[0], 10.0);
        assert!((d[1] - 1.5).abs() < 1e-12 && d[2] == 1.0);
        let d = rescale_update(&z, &pz, &[1.0; 3], 10.0, RescaleMode::SingleDirection);
        assert_eq!(d, vec![2.0, 1.0, 1.0]);
    }

    #[test]
    fn zero_alpha_is_guarded() {
        let d = rescale_update(
            &[0.5, 0.5],
            &[0.0, -1.0],
            &[1.0, 1.0],
            1e10,
            RescaleMode::AllDirections,
        );
        assert_eq!(d, vec![1e10, 1e10]);
    }

    #[test]
    fn whole_space_is_trivially_primal() {
        let inst = Instance::new(3, DenseMatrix::zeros(0, 3), Meta::default()).unwrap();
        let r = solve(&inst, &EpraConfig::default()).unwrap();
        assert_eq!(r.status, EpraStatus::TrivialPrimal);
        assert_eq!(r.rounds, 0);
        assert!(r.x.iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-15));
        assert_eq!(r.b, vec![0, 1, 2]);
    }

    #[test]
    fn zero_subspace_is_trivially_dual() {
        let inst = Instance::new(2, DenseMatrix::identity(2), Meta::default()).unwrap();
        let r = solve(&inst, &EpraConfig::default()).unwrap();
        assert_eq!(r.status, EpraStatus::TrivialDual);
        assert_eq!(r.n, vec![0, 1]);
    }

    #[test]
    fn certificates_for_the_true_partition() {
        let inst = gen_partitioned(16, 5, Some(7), None, None).unwrap();
        let (b, nn): (Vec<usize>, Vec<usize>) = ((0..7).collect(), (7..16).collect());
        let c = certify_partition(&inst, &b, &nn, &EpraConfig::default())
            .unwrap()
            .unwrap();
        assert!(b.iter().all(|&i| c.x[i] > 0.0 && c.x_hat[i] == 0.0));
        assert!(nn.iter().all(|&i| c.x_hat[i] > 0.0 && c.x[i] == 0.0));
        assert!(norm_inf(&inst.a.mul_vec(&c.x).unwrap()) < 1e-12 * norm_inf(&c.x));
        // x_hat is orthogonal to every kernel vector
        let k = subspace::complement_basis(16, &inst.a.to_rows(), DEFAULT_RANK_TOL).unwrap();
        let r = norm_inf(&k.mul_vec(&c.x_hat).unwrap());
        assert!(r < 1e-12 * norm_inf(&c.x_hat), "{r}");
    }

    #[test]
    fn wrong_partition_is_not_certified() {
        let inst = gen_partitioned(16, 5, Some(7), None, None).unwrap();
        let (b, nn): (Vec<usize>, Vec<usize>) = ((0..9).collect(), (9..16).collect());
        assert!(certify_partition(&inst, &b, &nn, &EpraConfig::default())
            .unwrap()
            .is_none());
    }

    #[test]
    fn config_validation() {
        let d = EpraConfig::default;
        assert!(EpraConfig { u_cap: 1.0, ..d() }.validate().is_err());
        assert!(EpraConfig { max_rounds: 0, ..d() }.validate().is_err());
        assert!(EpraConfig { epsilon: 0.0, ..d() }.validate().is_err());
    }

    #[test]
    fn result_json_round_trip() {
        let inst = Instance::new(2, DenseMatrix::from_rows(&[[0.0, 1.0]]).unwrap(), Meta::default()).unwrap();
        let r = solve(&inst, &EpraConfig::default()).unwrap();
        let s = r.to_json().unwrap();
        assert!(s.contains("\"B\": [\n    1\n  ]"), "{s}");
        assert_eq!(EpraResult::from_json(&s).unwrap(), r);
    }
}
