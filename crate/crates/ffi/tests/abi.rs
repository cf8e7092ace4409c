use std::ffi::{c_char, CStr, CString};
use std::process::Command;
use std::ptr;

use tsallis_merton_ffi::*;

const MARKET: TmMarket = TmMarket {
    r: 0.02,
    mu: 0.1,
    sigma: 0.25,
};

fn last_error() -> String {
    let mut buf = vec![0 as c_char; 256];
    unsafe {
        tm_last_error_message(buf.as_mut_ptr(), buf.len());
        CStr::from_ptr(buf.as_ptr()).to_string_lossy().into_owned()
    }
}

fn value_function(spec: TmSpec) -> *mut TmValueFunction {
    let mut vf = ptr::null_mut();
    let status = unsafe { tm_value_function_new(&MARKET, &spec, 1.0, 0.0, &mut vf) };
    assert_eq!(status, TmStatus::Ok, "{}", last_error());
    assert!(!vf.is_null());
    vf
}

#[test]
fn merton_strategy_matches_closed_form() {
    let mut u = 0.0;
    let status = unsafe { tm_merton_strategy(&MARKET, 0.5, &mut u) };
    assert_eq!(status, TmStatus::Ok);
    assert!((u - 0.08 / (0.0625 * 0.5)).abs() < 1e-12);
}

#[test]
fn null_pointers_are_rejected() {
    let status = unsafe { tm_merton_strategy(ptr::null(), 0.5, ptr::null_mut()) };
    assert_eq!(status, TmStatus::InvalidArgument);
    assert!(last_error().contains("null"));
    unsafe {
        tm_value_function_free(ptr::null_mut());
        tm_trainer_free(ptr::null_mut());
    }
}

#[test]
fn invalid_parameters_map_to_status() {
    let bad = TmMarket { sigma: -1.0, ..MARKET };
    let mut u = 0.0;
    assert_eq!(unsafe { tm_merton_strategy(&bad, 0.5, &mut u) }, TmStatus::InvalidParameter);
    assert!(last_error().contains("sigma"));

    let spec = TmSpec {
        p: 0.5,
        gamma: 0.1,
        beta: 2,
    };
    let mut vf = ptr::null_mut();
    assert_eq!(
        unsafe { tm_value_function_new(&MARKET, &spec, 1.0, 0.0, &mut vf) },
        TmStatus::InvalidParameter
    );
    assert!(vf.is_null());
}

#[test]
fn shannon_policy_and_cost() {
    let vf = value_function(TmSpec {
        p: 0.5,
        gamma: 0.1,
        beta: 1,
    });
    let mut verdict = TmVerdict {
        well_posed_everywhere: false,
        tau: 0.0,
        delta: 0.0,
    };
    let mut policy = TmPolicy {
        family: TmPolicyFamily::Semicircle,
        mean: 0.0,
        variance: 0.0,
        radius: -1.0,
    };
    let (mut f_end, mut cost_end, mut cost0) = (0.0, 1.0, 0.0);
    unsafe {
        assert_eq!(tm_value_function_verdict(vf, &mut verdict), TmStatus::Ok);
        assert_eq!(tm_value_function_policy(vf, 1.0, &mut policy), TmStatus::Ok);
        assert_eq!(tm_value_function_f(vf, 1.0, &mut f_end), TmStatus::Ok);
        assert_eq!(tm_value_function_cost(vf, 1.0, &mut cost_end), TmStatus::Ok);
        assert_eq!(tm_value_function_cost(vf, 0.0, &mut cost0), TmStatus::Ok);
        tm_value_function_free(vf);
    }
    assert!(verdict.well_posed_everywhere);
    assert!(verdict.tau.is_nan());
    assert_eq!(policy.family, TmPolicyFamily::Gaussian);
    assert!((policy.mean - 2.56).abs() < 1e-12);
    // f(T) = 1, variance gamma / (sigma^2 (1 - p))
    assert!((f_end - 1.0).abs() < 1e-14);
    assert!((policy.variance - 0.1 / (0.0625 * 0.5)).abs() < 1e-12);
    assert_eq!(policy.radius, 0.0);
    assert!(cost_end.abs() < 1e-14);
    assert!(cost0 > 0.0);
}

#[test]
fn semicircle_policy_and_unsupported_cost() {
    let vf = value_function(TmSpec {
        p: 0.5,
        gamma: 0.1,
        beta: 3,
    });
    let mut policy = TmPolicy {
        family: TmPolicyFamily::Gaussian,
        mean: 0.0,
        variance: 0.0,
        radius: 0.0,
    };
    let mut cost = 0.0;
    unsafe {
        assert_eq!(tm_value_function_policy(vf, 0.5, &mut policy), TmStatus::Ok);
        assert_eq!(tm_value_function_cost(vf, 0.5, &mut cost), TmStatus::Unsupported);
        tm_value_function_free(vf);
    }
    assert_eq!(policy.family, TmPolicyFamily::Semicircle);
    assert!((policy.variance - policy.radius * policy.radius / 4.0).abs() < 1e-12);
}

#[test]
fn ill_posed_queries_report_tau() {
    let vf = value_function(TmSpec {
        p: -2.0,
        gamma: 5.0,
        beta: 1,
    });
    let mut verdict = TmVerdict {
        well_posed_everywhere: true,
        tau: f64::NAN,
        delta: f64::NAN,
    };
    let mut f = 0.0;
    unsafe {
        assert_eq!(tm_value_function_verdict(vf, &mut verdict), TmStatus::Ok);
        assert!(!verdict.well_posed_everywhere);
        assert!(verdict.tau > 0.0 && verdict.tau < 1.0);
        assert!((verdict.tau + verdict.delta - 1.0).abs() < 1e-12);
        assert_eq!(tm_value_function_f(vf, 0.0, &mut f), TmStatus::IllPosed);
        assert!(last_error().contains("ill-posed"));
        assert_eq!(tm_value_function_f(vf, 1.0, &mut f), TmStatus::Ok);
        tm_value_function_free(vf);
    }
}

#[test]
fn error_message_truncates_and_reports_length() {
    let bad = TmMarket { sigma: 0.0, ..MARKET };
    let mut u = 0.0;
    unsafe {
        tm_merton_strategy(&bad, 0.5, &mut u);
        let full = tm_last_error_message(ptr::null_mut(), 0);
        let mut buf = [0 as c_char; 8];
        assert_eq!(tm_last_error_message(buf.as_mut_ptr(), buf.len()), full);
        assert_eq!(CStr::from_ptr(buf.as_ptr()).to_bytes().len(), 7);
    }
}

#[test]
fn trainer_steps_deterministically() {
    let cfg = CString::new(r#"{"episodes": 5, "seed": 11}"#).unwrap();
    let run = || unsafe {
        let mut tr = ptr::null_mut();
        assert_eq!(tm_trainer_new(cfg.as_ptr(), &mut tr), TmStatus::Ok, "{}", last_error());
        let mut it = TmIterate {
            iteration: 0,
            phi1: 0.0,
            phi2: 0.0,
            ml_loss: 0.0,
            reject_count: 0,
        };
        assert_eq!(tm_trainer_step(tr, &mut it), TmStatus::Ok);
        assert_eq!(it.iteration, 1);
        assert_eq!(tm_trainer_run(tr), TmStatus::Ok);
        let (mut phi1, mut phi2, mut n) = (0.0, 0.0, 0usize);
        let mut theta = [0.0; 4];
        assert_eq!(
            tm_trainer_params(tr, &mut phi1, &mut phi2, theta.as_mut_ptr(), theta.len(), &mut n),
            TmStatus::Ok
        );
        let mut iters = 0;
        assert_eq!(tm_trainer_iteration(tr, &mut iters), TmStatus::Ok);
        tm_trainer_free(tr);
        assert_eq!(iters, 5);
        assert_eq!(n, 2);
        (phi1, phi2, theta[0], theta[1])
    };
    assert_eq!(run(), run());
}

#[test]
fn trainer_rejects_bad_config() {
    let cfg = CString::new(r#"{"episodes": 5, "unknown": 1}"#).unwrap();
    let mut tr = ptr::null_mut();
    assert_eq!(unsafe { tm_trainer_new(cfg.as_ptr(), &mut tr) }, TmStatus::Config);
    assert!(tr.is_null());
    let bad_p = CString::new(r#"{"spec": {"p": 0.0, "gamma": 0.1, "beta": 1}}"#).unwrap();
    assert_eq!(unsafe { tm_trainer_new(bad_p.as_ptr(), &mut tr) }, TmStatus::Config);
}

#[test]
fn version_is_nul_terminated() {
    let v = unsafe { CStr::from_ptr(tm_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_compiles_as_c() {
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/tsallis_merton.h");
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    let Ok(out) = Command::new(&cc)
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-x", "c", header])
        .output()
    else {
        eprintln!("no C compiler `{cc}`; skipping");
        return;
    };
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for name in ["tm_value_function_new", "tm_trainer_step", "TM_STATUS_ILL_POSED", "TmValueFunction"] {
        assert!(std::fs::read_to_string(header).unwrap().contains(name), "{name} missing");
    }
}
