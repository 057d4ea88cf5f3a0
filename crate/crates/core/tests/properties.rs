use proptest::prelude::*;

use epra::basic::{self, project_simplex, simplex_prox, stop_check};
use epra::epra::{identify_partition, rescale_update, solve_observed};
use epra::instances::{controlled_from_point, gen_controlled, gen_naive};
use epra::matrix::{dot, norm2, norm2_sq, norm_inf};
use epra::oracle::{
    condition_measure_1d, verify_relint_pair, wendel_primal_probability, wendel_probability, Measure,
};
use epra::subspace::{dual_projector, primal_projector, DEFAULT_RANK_TOL};
use epra::{solve, BpConfig, BpStatus, DenseMatrix, EpraConfig, Instance, RescaleMode, Scheme};

fn config() -> ProptestConfig {
    ProptestConfig {
        failure_persistence: None,
        ..ProptestConfig::with_cases(48)
    }
}

/// Gaussian-ish `m x n` matrix (uniform entries are enough for full row rank a.s.).
fn matrix(m: usize, n: usize) -> impl Strategy<Value = DenseMatrix> {
    prop::collection::vec(-1.0f64..1.0, m * n)
        .prop_map(move |v| DenseMatrix::from_row_major(m, n, v).unwrap())
}

fn shape() -> impl Strategy<Value = (usize, usize)> {
    (2usize..12).prop_flat_map(|n| (1..n, Just(n)))
}

fn log_scale(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..6.0, n).prop_map(|v| v.into_iter().map(|e| 10f64.powf(e)).collect())
}

fn simplex_point(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(1e-6f64..1.0, n).prop_map(|v| {
        let s: f64 = v.iter().sum();
        v.into_iter().map(|x| x / s).collect()
    })
}

fn projector_case() -> impl Strategy<Value = (DenseMatrix, Vec<f64>, Vec<f64>)> {
    shape().prop_flat_map(|(m, n)| (matrix(m, n), log_scale(n), prop::collection::vec(-1.0f64..1.0, n)))
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn primal_projector_is_an_orthogonal_projection((a, d, v) in projector_case()) {
        let p = primal_projector(&a, &d, DEFAULT_RANK_TOL).unwrap();
        let n = a.cols();
        prop_assert!(p.max_abs_diff(&p.transpose()) == 0.0);
        prop_assert!(p.mul_mat(&p).unwrap().max_abs_diff(&p) < 1e-12);
        let pv = p.mul_vec(&v).unwrap();
        prop_assert!(norm2(&pv) <= norm2(&v) * (1.0 + 1e-12));
        // P v lies in ker(A D^-1)
        let back: Vec<f64> = (0..n).map(|i| pv[i] / d[i]).collect();
        let r = a.mul_vec(&back).unwrap();
        // componentwise bound: rounding in P v is of order ||v||, divided by d_j
        let vmax = norm_inf(&v);
        for (i, ri) in r.iter().enumerate() {
            let scale: f64 = (0..n).map(|j| a.get(i, j).abs() * (back[j].abs() + vmax / d[j])).sum();
            prop_assert!(ri.abs() <= 1e-12 * scale, "row {i}: residual {ri}, scale {scale}");
        }
    }

    #[test]
    fn dual_projector_fixes_its_range((a, d, w) in projector_case()) {
        let p_hat = dual_projector(&a, &d, DEFAULT_RANK_TOL).unwrap();
        let n = a.cols();
        // y = D_hat A^T w' for the first m entries of w
        let m = a.rows();
        let y: Vec<f64> = (0..n)
            .map(|j| d[j] * (0..m).map(|i| a.get(i, j) * w[i]).sum::<f64>())
            .collect();
        let py = p_hat.mul_vec(&y).unwrap();
        let err = y.iter().zip(&py).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        prop_assert!(err <= 1e-9 * norm_inf(&y).max(1e-300), "err {err}");
    }

    #[test]
    fn primal_and_dual_projectors_are_complementary((a, _d, v) in projector_case()) {
        let ones = vec![1.0; a.cols()];
        let p = primal_projector(&a, &ones, DEFAULT_RANK_TOL).unwrap();
        let p_hat = dual_projector(&a, &ones, DEFAULT_RANK_TOL).unwrap();
        let s: Vec<f64> = p.mul_vec(&v).unwrap().iter().zip(p_hat.mul_vec(&v).unwrap()).map(|(a, b)| a + b).collect();
        let err = s.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        prop_assert!(err < 1e-12, "err {err}");
    }

    #[test]
    fn simplex_projection_is_optimal(y in prop::collection::vec(-3.0f64..3.0, 1..10)) {
        let u = project_simplex(&y);
        prop_assert!(u.iter().all(|v| *v >= 0.0));
        prop_assert!((u.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        // optimality: <y - u, w - u> <= 0 at every vertex w
        let n = y.len();
        for k in 0..n {
            let s: f64 = (0..n).map(|i| (y[i] - u[i]) * ((i == k) as u8 as f64 - u[i])).sum();
            prop_assert!(s <= 1e-12, "vertex {k}: {s}");
        }
    }

    #[test]
    fn prox_beats_a_grid_on_three_points(
        v in prop::collection::vec(-2.0f64..2.0, 3),
        mu in 0.05f64..5.0,
        c in simplex_point(3),
    ) {
        let obj = |u: &[f64]| dot(u, &v) + 0.5 * mu * u.iter().zip(&c).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        let u = simplex_prox(&v, mu, &c);
        let best = obj(&u);
        let steps = 60;
        for i in 0..=steps {
            for j in 0..=(steps - i) {
                let g = [i as f64 / steps as f64, j as f64 / steps as f64, (steps - i - j) as f64 / steps as f64];
                prop_assert!(best <= obj(&g) + 1e-12, "grid point {g:?} beats prox {u:?}");
            }
        }
    }

    #[test]
    fn basic_procedures_stay_on_the_simplex(
        (a, _d, _v) in projector_case(),
        scheme in prop::sample::select(vec![Scheme::Perceptron, Scheme::VonNeumann, Scheme::VonNeumannAway, Scheme::SmoothPerceptron]),
    ) {
        let n = a.cols();
        let p = primal_projector(&a, &vec![1.0; n], DEFAULT_RANK_TOL).unwrap();
        let cfg = BpConfig::new(scheme, 0.1, 2000).unwrap();
        let mut worst = 0.0f64;
        let mut negative = false;
        let mut prev_norm = f64::INFINITY;
        let mut ascent = 0.0f64;
        let descent = matches!(scheme, Scheme::VonNeumann | Scheme::VonNeumannAway);
        let mut obs = |_t: usize, z: &[f64], pz: &[f64]| {
            worst = worst.max((z.iter().sum::<f64>() - 1.0).abs());
            negative |= z.iter().any(|v| *v < 0.0);
            let nn = norm2_sq(pz);
            ascent = ascent.max(nn - prev_norm);
            prev_norm = nn;
        };
        let out = basic::run_observed(&p, &basic::uniform(n), &cfg, &mut obs).unwrap();
        prop_assert!(worst < 1e-12 && !negative);
        if descent {
            prop_assert!(ascent <= 1e-12, "ascent {ascent}");
        }
        if out.status != BpStatus::IterLimit {
            let pz = p.mul_vec(&out.z).unwrap();
            prop_assert_eq!(stop_check(&pz, &out.z, 0.1), Some(out.status));
        }
    }

    #[test]
    fn rescaling_is_monotone_and_capped(
        z in simplex_point(8),
        pz in prop::collection::vec(-1.0f64..0.2, 8),
        d in prop::collection::vec(1.0f64..1e3, 8),
        u_cap in 10.0f64..1e4,
        single in any::<bool>(),
    ) {
        let d: Vec<f64> = d.into_iter().map(|v| v.min(u_cap)).collect();
        let mode = if single { RescaleMode::SingleDirection } else { RescaleMode::AllDirections };
        let next = rescale_update(&z, &pz, &d, u_cap, mode);
        for i in 0..8 {
            prop_assert!(next[i] >= d[i] && next[i] <= u_cap);
        }
        if single {
            prop_assert!((0..8).filter(|&i| next[i] != d[i]).count() <= 1);
        }
    }

    #[test]
    fn partition_sets_are_the_small_entries(
        x in prop::collection::vec(-1.0f64..1.0, 1..12),
        x_hat_seed in prop::collection::vec(-1.0f64..1.0, 12),
        u_cap in 1.5f64..1e3,
        k in -20i32..20,
    ) {
        let n = x.len();
        let x_hat = &x_hat_seed[..n];
        let (b, nn, ok) = identify_partition(&x, x_hat, u_cap);
        for i in 0..n {
            prop_assert_eq!(b.contains(&i), x_hat[i].abs() < norm_inf(x_hat) / u_cap);
            prop_assert_eq!(nn.contains(&i), x[i].abs() < norm_inf(&x) / u_cap);
        }
        prop_assert_eq!(ok, (0..n).all(|i| b.contains(&i) != nn.contains(&i)));
        // scaling by a power of two changes nothing
        let xs: Vec<f64> = x.iter().map(|v| v * 2f64.powi(k)).collect();
        let again = identify_partition(&xs, x_hat, u_cap);
        prop_assert_eq!(again.1, nn);
    }

    #[test]
    fn wendel_probabilities_are_complementary(n in 2usize..120, frac in 0.0f64..1.0) {
        let m = 1 + ((n - 2) as f64 * frac) as usize;
        let p = wendel_probability(m, n);
        let q = wendel_primal_probability(m, n);
        prop_assert!((0.0..=1.0).contains(&p) && (0.0..=1.0).contains(&q));
        prop_assert!((p + q - 1.0).abs() < 1e-12, "{p} + {q}");
    }

    #[test]
    fn doubling_a_small_entry_doubles_the_measure(
        v in prop::collection::vec(1e-3f64..1.0, 2..12),
        pick in any::<prop::sample::Index>(),
    ) {
        let i = pick.index(v.len());
        let mut v = v;
        let top = v.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, x)| *x).fold(0.0, f64::max);
        v[i] = v[i].min(0.5 * top);
        let mut w = v.clone();
        w[i] *= 2.0;
        let (Measure::Value(a), Measure::Value(b)) = (condition_measure_1d(&v).unwrap(), condition_measure_1d(&w).unwrap()) else {
            return Err(TestCaseError::fail("positive vector judged infeasible"));
        };
        prop_assert!((b / a - 2.0).abs() < 1e-12);
    }

    #[test]
    fn controlled_point_is_in_the_kernel(seed in any::<u64>(), n in 4usize..30) {
        let inst = gen_controlled(n / 2, n, 1e-3, None, seed).unwrap();
        let x = inst.meta.known_interior_point.clone().unwrap();
        prop_assert_eq!(norm_inf(&x), 1.0);
        prop_assert!(norm_inf(&inst.a.mul_vec(&x).unwrap()) < 1e-9 * inst.a.max_abs());
        let same = controlled_from_point(&x, n / 2, 1).unwrap();
        prop_assert!(norm_inf(&same.a.mul_vec(&x).unwrap()) < 1e-9 * same.a.max_abs());
    }

    #[test]
    fn solved_results_carry_valid_certificates(seed in any::<u64>(), n in 3usize..25, frac in 0.1f64..0.9) {
        let m = ((n as f64 * frac) as usize).clamp(1, n - 1);
        let inst = gen_naive(m, n, seed).unwrap();
        let cfg = EpraConfig::default();
        let res = solve(&inst, &cfg).unwrap();
        if res.status.is_solved() {
            let rep = verify_relint_pair(&inst, &res, cfg.u_cap, cfg.membership_tol);
            prop_assert!(rep.passed(), "{rep:?}");
        }
        prop_assert!(res.d.iter().chain(&res.d_hat).all(|v| *v >= 1.0 && *v <= cfg.u_cap));
    }

    #[test]
    fn instance_json_round_trips(seed in any::<u64>(), n in 2usize..10) {
        let inst = gen_naive(n / 2, n, seed).unwrap();
        let back = Instance::from_json(&inst.to_json().unwrap()).unwrap();
        prop_assert_eq!(back, inst);
    }

    #[test]
    fn stretched_coordinates_are_small_in_every_solution(seed in any::<u64>(), n in 6usize..30) {
        let inst = gen_controlled(n / 2, n, 0.05, None, seed).unwrap();
        let x_star = inst.meta.known_interior_point.clone().unwrap();
        let cfg = EpraConfig { rescale_mode: RescaleMode::SingleDirection, max_rounds: 1, ..EpraConfig::default() };
        let mut picked = None;
        solve_observed(&inst, &cfg, |ev| {
            if ev.round == 0 && ev.primal.status == BpStatus::RescaleReady {
                let top = norm_inf(&ev.primal.z);
                picked = ev.primal.z.iter().position(|v| *v == top);
            }
        })
        .unwrap();
        if let Some(i) = picked {
            prop_assert!(x_star[i] <= 0.5 * norm_inf(&x_star) + 1e-9, "x*_{i} = {}", x_star[i]);
        }
    }
}
