use std::ffi::{CStr, CString};
use std::ptr;

use epra_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(epra_last_error_message()) }
        .to_str()
        .unwrap()
        .to_owned()
}

#[test]
fn generate_solve_verify() {
    unsafe {
        let mut inst = ptr::null_mut();
        assert_eq!(
            epra_instance_generate(EpraFamily::Controlled, 30, 12, 4, &mut inst),
            EpraCode::Ok
        );
        let (mut m, mut n) = (0, 0);
        assert_eq!(epra_instance_dims(inst, &mut m, &mut n), EpraCode::Ok);
        assert_eq!((m, n), (12, 30));

        let mut sol = ptr::null_mut();
        assert_eq!(epra_solve(inst, ptr::null(), &mut sol), EpraCode::Ok);
        let mut outcome = EpraOutcome::Stalled;
        assert_eq!(epra_solution_outcome(sol, &mut outcome), EpraCode::Ok);
        assert_eq!(outcome, EpraOutcome::TrivialPrimal);

        let mut x = vec![0.0; n];
        assert_eq!(epra_solution_x(sol, x.as_mut_ptr(), x.len()), EpraCode::Ok);
        assert!(x.iter().all(|v| *v > 0.0));
        let mut parts = vec![9u8; n];
        assert_eq!(epra_solution_partition(sol, parts.as_mut_ptr(), n), EpraCode::Ok);
        assert!(parts.iter().all(|p| *p == 1));

        let mut rounds = usize::MAX;
        assert_eq!(
            epra_solution_counters(sol, &mut rounds, ptr::null_mut(), ptr::null_mut()),
            EpraCode::Ok
        );
        assert!(rounds < 100);

        let cfg = epra_config_default();
        let mut rep = EpraVerification::default();
        assert_eq!(
            epra_verify(inst, sol, cfg.u_cap, cfg.membership_tol, &mut rep),
            EpraCode::Ok
        );
        assert!(rep.membership_ok && rep.positivity_ok && rep.relint_ok && !rep.partition_known);

        let mut json = ptr::null_mut();
        assert_eq!(epra_solution_to_json(sol, &mut json), EpraCode::Ok);
        let v: serde_json::Value = serde_json::from_str(CStr::from_ptr(json).to_str().unwrap()).unwrap();
        assert_eq!(v["status"], "TrivialPrimal");
        epra_string_free(json);

        epra_solution_free(sol);
        epra_instance_free(inst);
    }
}

#[test]
fn partitioned_instance_through_json() {
    unsafe {
        let mut inst = ptr::null_mut();
        assert_eq!(
            epra_instance_generate(EpraFamily::Partitioned, 24, 0, 8, &mut inst),
            EpraCode::Ok
        );
        let mut json = ptr::null_mut();
        assert_eq!(epra_instance_to_json(inst, &mut json), EpraCode::Ok);
        let mut copy = ptr::null_mut();
        assert_eq!(epra_instance_from_json(json, &mut copy), EpraCode::Ok);
        epra_string_free(json);

        let mut cfg = epra_config_default();
        cfg.scheme = EpraScheme::Smooth;
        let mut sol = ptr::null_mut();
        assert_eq!(epra_solve(copy, &cfg, &mut sol), EpraCode::Ok);
        let mut outcome = EpraOutcome::Stalled;
        epra_solution_outcome(sol, &mut outcome);
        assert_eq!(outcome, EpraOutcome::PartitionFound);
        let mut rep = EpraVerification::default();
        assert_eq!(
            epra_verify(copy, sol, cfg.u_cap, cfg.membership_tol, &mut rep),
            EpraCode::Ok
        );
        assert!(
            rep.relint_ok && rep.partition_known && rep.partition_matches,
            "{rep:?}"
        );

        epra_solution_free(sol);
        epra_instance_free(copy);
        epra_instance_free(inst);
    }
}

#[test]
fn raw_matrix_instance() {
    unsafe {
        // L = span{e1}
        let a = [0.0, 1.0];
        let mut inst = ptr::null_mut();
        assert_eq!(
            epra_instance_from_matrix(1, 2, a.as_ptr(), &mut inst),
            EpraCode::Ok
        );
        let mut sol = ptr::null_mut();
        assert_eq!(epra_solve(inst, ptr::null(), &mut sol), EpraCode::Ok);
        let mut parts = [0u8; 2];
        assert_eq!(epra_solution_partition(sol, parts.as_mut_ptr(), 2), EpraCode::Ok);
        assert_eq!(parts, [1, 2]);
        let mut x_hat = [0.0; 2];
        assert_eq!(epra_solution_x_hat(sol, x_hat.as_mut_ptr(), 2), EpraCode::Ok);
        assert!(x_hat[0] == 0.0 && x_hat[1] > 0.0);
        epra_solution_free(sol);
        epra_instance_free(inst);

        let mut whole = ptr::null_mut();
        assert_eq!(
            epra_instance_from_matrix(0, 3, ptr::null(), &mut whole),
            EpraCode::Ok
        );
        epra_instance_free(whole);
    }
}

#[test]
fn errors_set_codes_and_messages() {
    unsafe {
        let mut inst = ptr::null_mut();
        assert_eq!(
            epra_instance_from_json(ptr::null(), &mut inst),
            EpraCode::NullPointer
        );
        assert!(last_error().contains("null"));

        let bad = CString::new("{not json").unwrap();
        assert_eq!(epra_instance_from_json(bad.as_ptr(), &mut inst), EpraCode::Format);
        assert!(!last_error().is_empty());

        let a = [f64::NAN, 1.0];
        assert_eq!(
            epra_instance_from_matrix(1, 2, a.as_ptr(), &mut inst),
            EpraCode::NonFinite
        );

        // dependent rows are reported when the projectors are built
        let dep = [1.0, 2.0, 3.0, 2.0, 4.0, 6.0];
        assert_eq!(
            epra_instance_from_matrix(2, 3, dep.as_ptr(), &mut inst),
            EpraCode::Ok
        );
        let mut sol = ptr::null_mut();
        assert_eq!(epra_solve(inst, ptr::null(), &mut sol), EpraCode::RankDeficient);
        assert!(sol.is_null());
        epra_instance_free(inst);

        assert_eq!(
            epra_instance_generate(EpraFamily::Naive, 5, 0, 1, &mut inst),
            EpraCode::InvalidInput
        );

        let mut cfg = epra_config_default();
        cfg.u_cap = 0.5;
        let mut ok = ptr::null_mut();
        assert_eq!(
            epra_instance_generate(EpraFamily::Naive, 6, 3, 1, &mut ok),
            EpraCode::Ok
        );
        assert_eq!(epra_solve(ok, &cfg, &mut sol), EpraCode::InvalidInput);
        assert!(last_error().contains("U"));

        let mut small = [0.0; 2];
        let mut good = ptr::null_mut();
        assert_eq!(epra_solve(ok, ptr::null(), &mut good), EpraCode::Ok);
        assert_eq!(
            epra_solution_x(good, small.as_mut_ptr(), 2),
            EpraCode::DimensionMismatch
        );
        assert_eq!(epra_solution_x(good, ptr::null_mut(), 6), EpraCode::NullPointer);
        epra_solution_free(good);
        epra_instance_free(ok);

        // a success clears the message
        let mut p = 0.0;
        assert_eq!(epra_wendel_probability(2, 4, &mut p), EpraCode::Ok);
        assert!(last_error().is_empty());
        assert!((p - 0.5).abs() < 1e-15);
        assert_eq!(epra_wendel_probability(5, 4, &mut p), EpraCode::InvalidInput);

        epra_instance_free(ptr::null_mut());
        epra_solution_free(ptr::null_mut());
        epra_string_free(ptr::null_mut());
    }
}

#[test]
fn errors_are_per_thread() {
    unsafe {
        let mut p = 0.0;
        assert_eq!(epra_wendel_probability(0, 4, &mut p), EpraCode::InvalidInput);
    }
    let other = std::thread::spawn(last_error).join().unwrap();
    assert!(other.is_empty());
    assert!(!last_error().is_empty());
}
