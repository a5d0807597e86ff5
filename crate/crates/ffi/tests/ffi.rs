use std::ffi::{c_char, CString};
use std::ptr;

use gpopt_ffi::*;

fn last_error() -> String {
    let len = unsafe { gpopt_last_error(ptr::null_mut(), 0) };
    let mut buf = vec![0 as c_char; len + 1];
    unsafe { gpopt_last_error(buf.as_mut_ptr(), buf.len()) };
    let bytes: Vec<u8> = buf[..len].iter().map(|&c| c as u8).collect();
    String::from_utf8(bytes).unwrap()
}

fn quadratic_model() -> *mut GpoptModel {
    let x: Vec<f64> = (0..9).map(|i| i as f64 / 8.0).collect();
    let y: Vec<f64> = x.iter().map(|v| (v - 0.3) * (v - 0.3)).collect();
    let mut m = ptr::null_mut();
    let st = unsafe {
        gpopt_model_train(x.as_ptr(), y.as_ptr(), 9, 1, [0.0].as_ptr(), [1.0].as_ptr(), GpoptKernel::Matern52, 3, 1, &mut m)
    };
    assert_eq!(st, GpoptStatus::Ok, "{}", last_error());
    assert!(!m.is_null());
    m
}

#[test]
fn train_predict_solve_free() {
    let m = quadratic_model();
    assert_eq!(unsafe { gpopt_model_dim(m) }, 1);
    let (mut mean, mut var) = (0.0, 0.0);
    assert_eq!(unsafe { gpopt_model_predict(m, [0.5].as_ptr(), &mut mean, &mut var) }, GpoptStatus::Ok);
    assert!((mean - 0.04).abs() < 1e-2 && var >= 0.0);

    let s = gpopt_settings_default();
    assert_eq!((s.abs_tol, s.rel_tol, s.feas_tol), (1e-3, 1e-3, 1e-6));
    let mut r = GpoptResult { status: GpoptSolveStatus::Infeasible, ub: 0.0, lb: 0.0, iterations: 0, wall_time_s: 0.0, has_incumbent: false };
    let mut x = [f64::NAN];
    for f in [GpoptFormulation::Reduced, GpoptFormulation::Full] {
        let st = unsafe { gpopt_solve_mean(m, f, false, &s, &mut r, x.as_mut_ptr(), 1) };
        assert_eq!(st, GpoptStatus::Ok, "{}", last_error());
        assert_eq!(r.status, GpoptSolveStatus::Optimal);
        assert!(r.has_incumbent && (x[0] - 0.3).abs() < 0.05 && r.lb <= r.ub);
    }
    let st = unsafe { gpopt_solve_acquisition(m, GpoptAcquisition::Lcb, 0.0, &s, &mut r, x.as_mut_ptr(), 1) };
    assert_eq!(st, GpoptStatus::Ok);
    assert!((x[0] - 0.3).abs() < 0.05);
    unsafe { gpopt_model_free(m) };
    unsafe { gpopt_model_free(ptr::null_mut()) };
}

#[test]
fn errors_are_reported() {
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { gpopt_model_load(ptr::null(), &mut m) }, GpoptStatus::NullPointer);
    assert!(last_error().contains("path"));
    let missing = CString::new("/nonexistent/model.json").unwrap();
    assert_eq!(unsafe { gpopt_model_load(missing.as_ptr(), &mut m) }, GpoptStatus::Io);
    let bad = CString::new("{\"nu\": \"5/2\"}").unwrap();
    assert_eq!(unsafe { gpopt_model_from_json(bad.as_ptr(), &mut m) }, GpoptStatus::Schema);
    assert!(m.is_null());

    let model = quadratic_model();
    let s = gpopt_settings_default();
    let mut r = GpoptResult { status: GpoptSolveStatus::Optimal, ub: 0.0, lb: 0.0, iterations: 0, wall_time_s: 0.0, has_incumbent: false };
    let st = unsafe { gpopt_solve_mean(model, GpoptFormulation::Reduced, false, &s, &mut r, ptr::null_mut(), 0) };
    assert_eq!(st, GpoptStatus::BufferTooSmall);
    let st = unsafe { gpopt_solve_acquisition(model, GpoptAcquisition::Ei, f64::NAN, &s, &mut r, [0.0].as_mut_ptr(), 1) };
    assert_eq!(st, GpoptStatus::InvalidInput);
    let bad_settings = GpoptSettings { abs_tol: 0.0, ..s };
    let st = unsafe { gpopt_solve_mean(model, GpoptFormulation::Reduced, false, &bad_settings, &mut r, [0.0].as_mut_ptr(), 1) };
    assert_eq!(st, GpoptStatus::InvalidInput);
    unsafe { gpopt_model_free(model) };
}

#[test]
fn save_load_round_trip() {
    let m = quadratic_model();
    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("m.json").to_str().unwrap()).unwrap();
    assert_eq!(unsafe { gpopt_model_save(m, path.as_ptr()) }, GpoptStatus::Ok);
    let mut back = ptr::null_mut();
    assert_eq!(unsafe { gpopt_model_load(path.as_ptr(), &mut back) }, GpoptStatus::Ok);
    let (mut a, mut va, mut b, mut vb) = (0.0, 0.0, 0.0, 0.0);
    unsafe {
        gpopt_model_predict(m, [0.37].as_ptr(), &mut a, &mut va);
        gpopt_model_predict(back, [0.37].as_ptr(), &mut b, &mut vb);
    }
    assert_eq!((a.to_bits(), va.to_bits()), (b.to_bits(), vb.to_bits()));
    unsafe {
        gpopt_model_free(m);
        gpopt_model_free(back);
    }
}

#[test]
fn peaks_through_c_abi() {
    assert!((gpopt_peaks(0.0, 0.0) - 8.0 / 3.0 * (-1.0f64).exp()).abs() < 1e-14);
}

#[test]
fn header_is_current_and_compiles() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR"));
    let header = std::fs::read_to_string(dir.join("include/gpopt.h")).unwrap();
    for name in [
        "gpopt_last_error",
        "gpopt_model_train",
        "gpopt_model_free",
        "gpopt_solve_mean",
        "gpopt_solve_acquisition",
        "gpopt_solve_chance",
        "typedef struct GpoptModel GpoptModel",
        "GPOPT_STATUS_OK = 0",
    ] {
        assert!(header.contains(name), "header lacks {name}");
    }
    let probe = tempfile::tempdir().unwrap();
    let src = probe.path().join("probe.c");
    std::fs::write(
        &src,
        "#include \"gpopt.h\"\nint main(void) { GpoptSettings s = gpopt_settings_default(); return s.use_envelopes ? 0 : 1; }\n",
    )
    .unwrap();
    match std::process::Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(dir.join("include"))
        .arg(&src)
        .output()
    {
        Ok(out) => assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr)),
        Err(_) => eprintln!("no C compiler found; syntax check skipped"),
    }
}
