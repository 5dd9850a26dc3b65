use std::ffi::CStr;
use std::ptr;

use cvmdi::bounds::{key_rate, HolevoMode, ScenarioSpec};
use cvmdi::model::{ChannelParams, Direction, ProtocolParams};
use cvmdi_ffi::*;

fn last_error() -> String {
    let n = unsafe { cvmdi_last_error_message(ptr::null_mut(), 0) };
    let mut buf = vec![0 as std::ffi::c_char; n + 1];
    unsafe { cvmdi_last_error_message(buf.as_mut_ptr(), buf.len()) };
    unsafe { CStr::from_ptr(buf.as_ptr()) }.to_string_lossy().into_owned()
}

fn scenario(t1: f64, e1: f64, t2: f64, e2: f64, v: f64, beta: f64, dir: CvmdiDirection) -> *mut CvmdiScenario {
    let mut s = ptr::null_mut();
    let st = unsafe { cvmdi_scenario_new(t1, e1, t2, e2, v, beta, dir, &mut s) };
    assert_eq!(st, CvmdiStatus::Ok, "{}", last_error());
    s
}

const SYMMETRIC: CvmdiGeometry = CvmdiGeometry {
    kind: CvmdiGeometryKind::Symmetric,
    alice_share: 0.0,
    bob_share: 0.0,
};

const OPTIMAL: CvmdiPolicy = CvmdiPolicy {
    kind: CvmdiPolicyKind::Optimal,
    total_variance: 0.0,
};

#[test]
fn key_rate_matches_library() {
    let s = scenario(0.8, 0.01, 0.7, 0.02, 40.0, 0.95, CvmdiDirection::Reverse);
    let mut out = CvmdiKeyRate::default();
    assert_eq!(unsafe { cvmdi_key_rate(s, CvmdiHolevoMode::Exact, &mut out) }, CvmdiStatus::Ok);
    unsafe { cvmdi_scenario_free(s) };

    let spec = ScenarioSpec::new(
        ChannelParams::new(0.8, 0.01).unwrap(),
        ChannelParams::new(0.7, 0.02).unwrap(),
        ProtocolParams::with_total_variance(40.0, 0.95, Direction::Reverse).unwrap(),
    )
    .unwrap();
    let k = key_rate(&spec, HolevoMode::Exact).unwrap();
    assert_eq!(out.key_rate, k.key_rate);
    assert_eq!(out.eve_holevo, k.eve_holevo);
    assert_eq!(out.mutual_info_ab, k.mutual_info_ab);
}

#[test]
fn invalid_arguments_report_messages() {
    let mut s = ptr::null_mut();
    let st = unsafe { cvmdi_scenario_new(0.5, -0.1, 0.5, 0.0, 10.0, 0.95, CvmdiDirection::Direct, &mut s) };
    assert_eq!(st, CvmdiStatus::InvalidArgument);
    assert!(s.is_null());
    assert!(last_error().contains("excess noise"), "{}", last_error());

    let st = unsafe { cvmdi_key_rate(ptr::null(), CvmdiHolevoMode::Exact, ptr::null_mut()) };
    assert_eq!(st, CvmdiStatus::NullPointer);

    let s = scenario(1.0, 0.0, 1.0, 0.0, 10.0, 0.95, CvmdiDirection::Reverse);
    let mut out = CvmdiKeyRate::default();
    let st = unsafe { cvmdi_key_rate(s, CvmdiHolevoMode::Asymptotic, &mut out) };
    assert_eq!(st, CvmdiStatus::Domain);
    assert_eq!(out, CvmdiKeyRate::default());
    unsafe { cvmdi_scenario_free(s) };
}

#[test]
fn truncated_error_buffer_is_terminated() {
    let mut s = ptr::null_mut();
    unsafe { cvmdi_scenario_new(2.0, 0.0, 0.5, 0.0, 10.0, 0.95, CvmdiDirection::Direct, &mut s) };
    let full = last_error();
    let mut buf = [1 as std::ffi::c_char; 5];
    let n = unsafe { cvmdi_last_error_message(buf.as_mut_ptr(), buf.len()) };
    assert_eq!(n, full.len());
    assert_eq!(buf[4], 0);
    assert_eq!(unsafe { CStr::from_ptr(buf.as_ptr()) }.to_str().unwrap(), &full[..4]);
}

#[test]
fn detector_and_recaster_setters() {
    let s = scenario(0.8, 0.01, 0.7, 0.02, 40.0, 0.95, CvmdiDirection::Reverse);
    let mut ideal = CvmdiKeyRate::default();
    unsafe { cvmdi_key_rate(s, CvmdiHolevoMode::Exact, &mut ideal) };
    assert_eq!(unsafe { cvmdi_scenario_set_detector(s, 0.6, 0.05) }, CvmdiStatus::Ok);
    let mut lossy = CvmdiKeyRate::default();
    unsafe { cvmdi_key_rate(s, CvmdiHolevoMode::Exact, &mut lossy) };
    assert!(lossy.key_rate < ideal.key_rate);
    assert_eq!(unsafe { cvmdi_scenario_set_detector(s, 1.5, 0.0) }, CvmdiStatus::InvalidArgument);
    assert_eq!(unsafe { cvmdi_scenario_set_recaster(s, CvmdiRecaster::Alice) }, CvmdiStatus::Ok);
    let mut alice = CvmdiKeyRate::default();
    assert_eq!(unsafe { cvmdi_key_rate(s, CvmdiHolevoMode::Exact, &mut alice) }, CvmdiStatus::Ok);
    assert!(alice.key_rate.is_finite());
    unsafe { cvmdi_scenario_free(s) };
}

#[test]
fn optimize_matches_regression_anchor() {
    // 5 km total, 2.5 km per leg.
    let t = 10f64.powf(-0.2 * 2.5 / 10.0);
    let s = scenario(t, 0.005, t, 0.005, 10.0, 0.95, CvmdiDirection::Reverse);
    let (mut v, mut rate, mut flags) = (0.0, CvmdiKeyRate::default(), u32::MAX);
    assert_eq!(unsafe { cvmdi_optimize_modulation(s, &mut v, &mut rate, &mut flags) }, CvmdiStatus::Ok);
    unsafe { cvmdi_scenario_free(s) };
    assert!((v - 146.786).abs() / 146.786 < 1e-3, "{v}");
    assert!((rate.key_rate - 0.62412021).abs() < 1e-7, "{}", rate.key_rate);
    assert_eq!(flags, 0);
}

#[test]
fn scan_rows_round_trip() {
    let d = [0.0, 1.0, 2.0, 3.0];
    let eps = [0.0, 0.01];
    let mut scan = ptr::null_mut();
    let st = unsafe {
        cvmdi_scan_run(SYMMETRIC, d.as_ptr(), d.len(), eps.as_ptr(), eps.len(), 0.95, OPTIMAL, CvmdiDirection::Reverse, &mut scan)
    };
    assert_eq!(st, CvmdiStatus::Ok, "{}", last_error());
    assert_eq!(unsafe { cvmdi_scan_row_count(scan) }, 8);
    let mut row = CvmdiScanRow::default();
    for i in 0..8 {
        assert_eq!(unsafe { cvmdi_scan_row(scan, i, &mut row) }, CvmdiStatus::Ok);
        assert_eq!(row.total_km, d[i % 4]);
        assert_eq!(row.eps_a, eps[i / 4]);
        assert_eq!(row.d_a_km + row.d_b_km, row.total_km);
        assert_eq!(row.flags & CVMDI_FLAG_ERROR, 0);
        assert!(row.rate.key_rate.is_finite());
    }
    assert_eq!(unsafe { cvmdi_scan_row(scan, 8, &mut row) }, CvmdiStatus::OutOfRange);
    unsafe { cvmdi_scan_free(scan) };
    assert_eq!(unsafe { cvmdi_scan_row_count(ptr::null()) }, 0);
}

#[test]
fn scan_rejects_decreasing_grid() {
    let d = [3.0, 1.0];
    let eps = [0.0];
    let mut scan = ptr::null_mut();
    let st = unsafe {
        cvmdi_scan_run(SYMMETRIC, d.as_ptr(), d.len(), eps.as_ptr(), eps.len(), 0.95, OPTIMAL, CvmdiDirection::Reverse, &mut scan)
    };
    assert_ne!(st, CvmdiStatus::Ok);
    assert!(scan.is_null());
}

#[test]
fn cutoff_kinds() {
    let (mut kind, mut km) = (CvmdiCutoffKind::InsecureEverywhere, 0.0);
    let st = unsafe { cvmdi_find_cutoff(SYMMETRIC, 0.005, 0.95, OPTIMAL, CvmdiDirection::Direct, &mut kind, &mut km) };
    assert_eq!(st, CvmdiStatus::Ok, "{}", last_error());
    assert_eq!(kind, CvmdiCutoffKind::At);
    assert!(km > 0.0 && km < 10.0, "{km}");
}

#[test]
fn symplectic_eigenvalues_of_thermal_pair() {
    // diag(3, 3, 5, 5) has eigenvalues {3, 5}.
    let mut m = [0.0; 16];
    for (i, v) in [3.0, 3.0, 5.0, 5.0].into_iter().enumerate() {
        m[i * 5] = v;
    }
    let mut out = [0.0; 2];
    assert_eq!(unsafe { cvmdi_symplectic_eigenvalues(m.as_ptr(), 4, out.as_mut_ptr()) }, CvmdiStatus::Ok);
    assert!((out[0] - 3.0).abs() < 1e-12 && (out[1] - 5.0).abs() < 1e-12, "{out:?}");
    assert_eq!(unsafe { cvmdi_symplectic_eigenvalues(m.as_ptr(), 3, out.as_mut_ptr()) }, CvmdiStatus::InvalidMatrix);
}

#[test]
fn calibration_round_trip() {
    let (mut b1, mut b2, mut phase) = (0.0, 0.0, 0.0);
    assert_eq!(unsafe { cvmdi_lo_interference_outputs(1.9, 0.4, 2.0, &mut b1, &mut b2) }, CvmdiStatus::Ok);
    assert_eq!(unsafe { cvmdi_recover_phase_difference(b1, b2, 2.0, &mut phase) }, CvmdiStatus::Ok);
    assert!((phase - 1.5).abs() < 1e-12, "{phase}");
}

#[test]
fn version_is_crate_version() {
    let v = unsafe { CStr::from_ptr(cvmdi_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}
