use std::ffi::{CStr, CString};
use std::f64::consts::PI;
use std::ptr;

use pwduffing_ffi::*;

fn example() -> *mut PwdSystem {
    let a = [1.0, 2.0];
    let alpha = [1.0, 2.0, 3.0];
    let mut sys = ptr::null_mut();
    let st = unsafe {
        pwd_system_new(a.as_ptr(), 2, alpha.as_ptr(), 3, PwdShape::Linear as i32, ptr::null(), 0, true, &mut sys)
    };
    assert_eq!(st, PwdStatus::Ok);
    assert!(!sys.is_null());
    sys
}

fn last_error() -> String {
    let p = pwd_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn model_queries() {
    let sys = example();
    unsafe {
        let mut z = 99usize;
        assert_eq!(pwd_zone_index(sys, 1.0, &mut z), PwdStatus::Ok);
        assert_eq!(z, 0);
        assert_eq!(pwd_zone_index(sys, 2.5, &mut z), PwdStatus::Ok);
        assert_eq!(z, 2);
        assert_eq!(pwd_zone_index(sys, f64::NAN, &mut z), PwdStatus::InvalidInput);
        let mut g = 0.0;
        assert_eq!(pwd_eval_g(sys, 1.5, 0.0, 0.0, &mut g), PwdStatus::Ok);
        assert_eq!(g, 3.0);
        let mut f = [0.0; 2];
        assert_eq!(pwd_vector_field(sys, 1.5, 0.0, 0.1, f.as_mut_ptr()), PwdStatus::Ok);
        assert_eq!(f[0], 0.0);
        assert!((f[1] + 1.2).abs() < 1e-15);
        let mut n = 0usize;
        assert_eq!(pwd_breakpoint_count(sys, &mut n), PwdStatus::Ok);
        assert_eq!(n, 2);
        pwd_system_free(sys);
    }
}

#[test]
fn melnikov_and_displacement() {
    let sys = example();
    unsafe {
        let mut p = PwdMelnikovPieces::default();
        assert_eq!(pwd_m1_closed_form(sys, 1.5, &mut p), PwdStatus::Ok);
        assert_eq!((p.first_quarter, p.middle_half, p.last_quarter), (1.75, -0.625, -1.125));
        assert_eq!(p.total, 0.0);
        let mut v = 1.0;
        assert_eq!(pwd_m1_quadrature(sys, 2.5, 1e-10, &mut v), PwdStatus::Ok);
        assert!(v.abs() <= 2e-10);
        assert_eq!(pwd_m2_closed_form(1.5, &mut v), PwdStatus::Ok);
        assert_eq!(v, 2.25 * PI);
        assert_eq!(pwd_m2_quadrature(sys, 1.5, 1e-10, &mut v), PwdStatus::Ok);
        assert!((v / (2.25 * PI) - 1.0).abs() < 1e-8);
        let mut d = PwdDisplacement::default();
        assert_eq!(pwd_displacement(sys, 1.5, 0.01, &mut d), PwdStatus::Ok);
        assert!((d.d - 1e-4 * 2.25 * PI).abs() < 0.05 * 1e-4 * 2.25 * PI);
        assert_eq!(pwd_displacement(sys, 1.5, 20.0, &mut d), PwdStatus::NumericalFailure);
        assert!(last_error().contains("no return"));
        pwd_system_free(sys);
    }
}

#[test]
fn errors_and_handles() {
    unsafe {
        let a = [2.0, 1.0];
        let alpha = [1.0, 2.0, 3.0];
        let mut sys = ptr::null_mut();
        let st = pwd_system_new(a.as_ptr(), 2, alpha.as_ptr(), 3, 0, ptr::null(), 0, true, &mut sys);
        assert_eq!(st, PwdStatus::InvalidInput);
        assert!(sys.is_null());
        assert!(last_error().contains("breakpoints"));
        let st = pwd_system_new(a.as_ptr(), 2, alpha.as_ptr(), 3, 7, ptr::null(), 0, true, &mut sys);
        assert_eq!(st, PwdStatus::InvalidInput);
        let mut z = 0usize;
        assert_eq!(pwd_zone_index(ptr::null(), 1.0, &mut z), PwdStatus::NullPointer);
        pwd_system_free(ptr::null_mut());
        pwd_string_free(ptr::null_mut());

        let mut vdp = ptr::null_mut();
        assert_eq!(pwd_system_new_van_der_pol(&mut vdp), PwdStatus::Ok);
        assert_eq!(pwd_zone_index(vdp, 1.0, &mut z), PwdStatus::WrongSystemKind);
        pwd_system_free(vdp);
    }
}

#[test]
fn config_and_report() {
    let text = CString::new("breakpoints = [1.0]\nslopes = [0.5, 1.5]\nshape = \"cubic\"\n").unwrap();
    unsafe {
        let mut sys = ptr::null_mut();
        assert_eq!(pwd_system_from_config(text.as_ptr(), false, &mut sys), PwdStatus::Ok);
        let mut out = ptr::null_mut();
        assert_eq!(pwd_report_json(sys, 0.25, 3.0, 12, ptr::null(), 0, &mut out), PwdStatus::Ok);
        let json = CStr::from_ptr(out).to_str().unwrap().to_owned();
        pwd_string_free(out);
        assert!(json.contains("consistent with Conjecture"));
        pwd_system_free(sys);

        let mut vdp = ptr::null_mut();
        let text = CString::new(r#"{"harness": {"kind": "van_der_pol"}}"#).unwrap();
        assert_eq!(pwd_system_from_config(text.as_ptr(), true, &mut vdp), PwdStatus::Ok);
        assert_eq!(pwd_report_json(vdp, 0.5, 3.0, 11, ptr::null(), 0, &mut out), PwdStatus::Ok);
        let json = CStr::from_ptr(out).to_str().unwrap().to_owned();
        pwd_string_free(out);
        assert!(json.contains("limit cycle predicted near r=2.000000"));
        pwd_system_free(vdp);

        let bad = CString::new("slopes = [1.0]").unwrap();
        assert_eq!(pwd_system_from_config(bad.as_ptr(), false, &mut sys), PwdStatus::InvalidInput);
    }
}
