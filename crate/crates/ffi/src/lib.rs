//! C ABI for `cvmdi`.
//!
//! Scenarios and scan results are opaque heap handles owned by the caller
//! and released with their `_free` function. Every fallible call returns a
//! [`CvmdiStatus`]; on failure the message is available from
//! [`cvmdi_last_error_message`] on the same thread. Output pointers are
//! written only on success.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use cvmdi::bounds::{key_rate, HolevoMode, RecastingParty, ScenarioSpec};
use cvmdi::model::{ChannelParams, Direction, KeyRatePoint, ProtocolParams};
use cvmdi::scan::{find_cutoff, optimize_modulation, run_scan, Cutoff, Flag, Geometry, LineSpec, ScanResult, ScanSpec, VariancePolicy};
use cvmdi::simulate::{lo_interference_outputs, recover_phase_difference};
use cvmdi::symplectic::{symplectic_eigenvalues_spectral, CovMatrix};
use cvmdi::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CvmdiStatus {
    Ok = 0,
    NullPointer = 1,
    /// Parameters violate a physical constraint.
    InvalidArgument = 2,
    /// Input outside an operation's domain.
    Domain = 3,
    /// Matrix input rejected or numerically unphysical.
    InvalidMatrix = 4,
    /// Information quantity diverges.
    Divergent = 5,
    InsufficientData = 6,
    IndeterminatePhase = 7,
    /// Index past the end of a result.
    OutOfRange = 8,
    /// A Rust panic was caught at the boundary.
    Internal = 9,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CvmdiDirection {
    Direct = 0,
    Reverse = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CvmdiRecaster {
    Bob = 0,
    Alice = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CvmdiHolevoMode {
    Exact = 0,
    Asymptotic = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CvmdiGeometryKind {
    Symmetric = 0,
    RelayNearAlice = 1,
    RelayNearBob = 2,
    /// Split in the ratio `alice_share : bob_share`.
    Custom = 3,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CvmdiGeometry {
    pub kind: CvmdiGeometryKind,
    pub alice_share: f64,
    pub bob_share: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CvmdiPolicyKind {
    Fixed = 0,
    Optimal = 1,
    Asymptotic = 2,
}

/// Variance policy; `total_variance` is read only for `Fixed`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CvmdiPolicy {
    pub kind: CvmdiPolicyKind,
    pub total_variance: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CvmdiKeyRate {
    pub reconciliation_efficiency: f64,
    pub mutual_info_ab: f64,
    pub eve_shannon: f64,
    pub eve_holevo: f64,
    pub key_rate: f64,
}

/// Row flag bits.
pub const CVMDI_FLAG_BOUNDARY_OPTIMAL: u32 = 1;
pub const CVMDI_FLAG_NO_POSITIVE_RATE: u32 = 2;
pub const CVMDI_FLAG_ASYMPTOTIC: u32 = 4;
pub const CVMDI_FLAG_ERROR: u32 = 8;

/// One scan row. With `CVMDI_FLAG_ERROR` set, variance and rate fields are NaN.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CvmdiScanRow {
    pub total_km: f64,
    pub d_a_km: f64,
    pub d_b_km: f64,
    pub eps_a: f64,
    pub eps_b: f64,
    pub total_variance: f64,
    pub rate: CvmdiKeyRate,
    pub flags: u32,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CvmdiCutoffKind {
    /// Zero crossing found.
    At = 0,
    SecureEverywhere = 1,
    InsecureEverywhere = 2,
}

/// Opaque scenario handle.
pub struct CvmdiScenario {
    spec: ScenarioSpec,
}

/// Opaque scan result handle.
pub struct CvmdiScan {
    result: ScanResult,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> CvmdiStatus {
    match e {
        Error::UnphysicalParameters(_) | Error::DegenerateChannel => CvmdiStatus::InvalidArgument,
        Error::Domain(_) => CvmdiStatus::Domain,
        Error::InvalidMatrix(_) | Error::InvalidForm(_) | Error::UnphysicalMatrix(_) => CvmdiStatus::InvalidMatrix,
        Error::DivergentInformation(_) => CvmdiStatus::Divergent,
        Error::InsufficientData { .. } => CvmdiStatus::InsufficientData,
        Error::IndeterminatePhase => CvmdiStatus::IndeterminatePhase,
    }
}

struct Failure(CvmdiStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(CvmdiStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, converting errors and panics into a status.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> CvmdiStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_last_error("");
            CvmdiStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(_) => {
            set_last_error("internal error: panic in cvmdi");
            CvmdiStatus::Internal
        }
    }
}

/// # Safety
/// `p` must be null or valid for writes of `T`.
unsafe fn write_out<T>(p: *mut T, value: T, what: &str) -> Result<(), Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    p.write(value);
    Ok(())
}

/// # Safety
/// `p` must be null or point to `len` readable values.
unsafe fn slice_in<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

impl From<CvmdiDirection> for Direction {
    fn from(d: CvmdiDirection) -> Self {
        match d {
            CvmdiDirection::Direct => Direction::Direct,
            CvmdiDirection::Reverse => Direction::Reverse,
        }
    }
}

impl From<CvmdiGeometry> for Geometry {
    fn from(g: CvmdiGeometry) -> Self {
        match g.kind {
            CvmdiGeometryKind::Symmetric => Geometry::Symmetric,
            CvmdiGeometryKind::RelayNearAlice => Geometry::RelayNearAlice,
            CvmdiGeometryKind::RelayNearBob => Geometry::RelayNearBob,
            CvmdiGeometryKind::Custom => Geometry::Custom {
                alice: g.alice_share,
                bob: g.bob_share,
            },
        }
    }
}

impl From<CvmdiPolicy> for VariancePolicy {
    fn from(p: CvmdiPolicy) -> Self {
        match p.kind {
            CvmdiPolicyKind::Fixed => VariancePolicy::Fixed(p.total_variance),
            CvmdiPolicyKind::Optimal => VariancePolicy::Optimal,
            CvmdiPolicyKind::Asymptotic => VariancePolicy::Asymptotic,
        }
    }
}

impl From<KeyRatePoint> for CvmdiKeyRate {
    fn from(k: KeyRatePoint) -> Self {
        Self {
            reconciliation_efficiency: k.reconciliation_efficiency,
            mutual_info_ab: k.mutual_info_ab,
            eve_shannon: k.eve_shannon,
            eve_holevo: k.eve_holevo,
            key_rate: k.key_rate,
        }
    }
}

fn flag_bits(flags: &[Flag]) -> u32 {
    flags.iter().fold(0, |acc, f| {
        acc | match f {
            Flag::BoundaryOptimal => CVMDI_FLAG_BOUNDARY_OPTIMAL,
            Flag::NoPositiveRate => CVMDI_FLAG_NO_POSITIVE_RATE,
            Flag::Asymptotic => CVMDI_FLAG_ASYMPTOTIC,
            Flag::Error(_) => CVMDI_FLAG_ERROR,
        }
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn cvmdi_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the calling thread's last error message into `buf` (NUL
/// terminated, truncated to `len − 1` bytes) and returns the full message
/// length. Pass a null `buf` to query the length.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes of writes.
#[no_mangle]
pub unsafe extern "C" fn cvmdi_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let bytes = e.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            std::ptr::copy_nonoverlapping(bytes.as_ptr().cast(), buf, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Creates a scenario with ideal detectors and Bob recasting.
///
/// # Safety
/// `out` must be valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn cvmdi_scenario_new(
    t1: f64,
    eps_a: f64,
    t2: f64,
    eps_b: f64,
    total_variance: f64,
    beta: f64,
    direction: CvmdiDirection,
    out: *mut *mut CvmdiScenario,
) -> CvmdiStatus {
    guard(|| {
        let spec = ScenarioSpec::new(
            ChannelParams::new(t1, eps_a)?,
            ChannelParams::new(t2, eps_b)?,
            ProtocolParams::with_total_variance(total_variance, beta, direction.into())?,
        )?;
        write_out(out, Box::into_raw(Box::new(CvmdiScenario { spec })), "out")
    })
}

/// Sets the relay detector efficiency and electronic noise.
///
/// # Safety
/// `s` must be a live handle from [`cvmdi_scenario_new`].
#[no_mangle]
pub unsafe extern "C" fn cvmdi_scenario_set_detector(s: *mut CvmdiScenario, eta: f64, v_el: f64) -> CvmdiStatus {
    guard(|| {
        let h = s.as_mut().ok_or_else(|| null("scenario"))?;
        let p = h.spec.protocol().with_detector(eta, v_el)?;
        h.spec = h.spec.with_protocol(p)?;
        Ok(())
    })
}

/// Chooses which party recasts its data.
///
/// # Safety
/// `s` must be a live handle from [`cvmdi_scenario_new`].
#[no_mangle]
pub unsafe extern "C" fn cvmdi_scenario_set_recaster(s: *mut CvmdiScenario, recaster: CvmdiRecaster) -> CvmdiStatus {
    guard(|| {
        let h = s.as_mut().ok_or_else(|| null("scenario"))?;
        let party = match recaster {
            CvmdiRecaster::Bob => RecastingParty::Bob,
            CvmdiRecaster::Alice => RecastingParty::Alice,
        };
        h.spec = ScenarioSpec::with_recaster(*h.spec.channel_a(), *h.spec.channel_b(), *h.spec.protocol(), party)?;
        Ok(())
    })
}

/// # Safety
/// `s` must be null or a live handle; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn cvmdi_scenario_free(s: *mut CvmdiScenario) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// Key rate in the scenario's direction. `mode` applies to reverse
/// reconciliation only.
///
/// # Safety
/// `s` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn cvmdi_key_rate(
    s: *const CvmdiScenario,
    mode: CvmdiHolevoMode,
    out: *mut CvmdiKeyRate,
) -> CvmdiStatus {
    guard(|| {
        let h = s.as_ref().ok_or_else(|| null("scenario"))?;
        let mode = match mode {
            CvmdiHolevoMode::Exact => HolevoMode::Exact,
            CvmdiHolevoMode::Asymptotic => HolevoMode::Asymptotic,
        };
        write_out(out, key_rate(&h.spec, mode)?.into(), "out")
    })
}

/// Maximises the key rate over the modulation variance. The scenario's own
/// variance is ignored.
///
/// # Safety
/// `s` must be a live handle; the out pointers must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn cvmdi_optimize_modulation(
    s: *const CvmdiScenario,
    out_total_variance: *mut f64,
    out_rate: *mut CvmdiKeyRate,
    out_flags: *mut u32,
) -> CvmdiStatus {
    guard(|| {
        let h = s.as_ref().ok_or_else(|| null("scenario"))?;
        if out_total_variance.is_null() || out_rate.is_null() || out_flags.is_null() {
            return Err(null("output pointer"));
        }
        let o = optimize_modulation(&h.spec, h.spec.protocol().direction())?;
        let mut flags = 0;
        if o.boundary_optimal {
            flags |= CVMDI_FLAG_BOUNDARY_OPTIMAL;
        }
        if o.no_positive_rate {
            flags |= CVMDI_FLAG_NO_POSITIVE_RATE;
        }
        write_out(out_total_variance, o.total_variance, "out_total_variance")?;
        write_out(out_rate, o.rate.into(), "out_rate")?;
        write_out(out_flags, flags, "out_flags")
    })
}

/// Runs a scan with ideal detectors, 0.2 dB/km fiber and Bob recasting.
///
/// # Safety
/// `distances` and `eps` must point to `n_distances` and `n_eps` values;
/// `out` must be valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn cvmdi_scan_run(
    geometry: CvmdiGeometry,
    distances: *const f64,
    n_distances: usize,
    eps: *const f64,
    n_eps: usize,
    beta: f64,
    policy: CvmdiPolicy,
    direction: CvmdiDirection,
    out: *mut *mut CvmdiScan,
) -> CvmdiStatus {
    guard(|| {
        let spec = ScanSpec::new(
            geometry.into(),
            slice_in(distances, n_distances, "distances")?.to_vec(),
            slice_in(eps, n_eps, "eps")?.to_vec(),
            beta,
            policy.into(),
            direction.into(),
        );
        let result = run_scan(&spec)?;
        write_out(out, Box::into_raw(Box::new(CvmdiScan { result })), "out")
    })
}

/// Number of rows, or 0 for a null handle.
///
/// # Safety
/// `scan` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cvmdi_scan_row_count(scan: *const CvmdiScan) -> usize {
    scan.as_ref().map_or(0, |s| s.result.rows.len())
}

/// Copies row `index` (noise-major, distance-minor order).
///
/// # Safety
/// `scan` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn cvmdi_scan_row(scan: *const CvmdiScan, index: usize, out: *mut CvmdiScanRow) -> CvmdiStatus {
    guard(|| {
        let s = scan.as_ref().ok_or_else(|| null("scan"))?;
        let r = s.result.rows.get(index).ok_or_else(|| {
            Failure(
                CvmdiStatus::OutOfRange,
                format!("row {index} out of range (scan has {} rows)", s.result.rows.len()),
            )
        })?;
        let nan = CvmdiKeyRate {
            reconciliation_efficiency: f64::NAN,
            mutual_info_ab: f64::NAN,
            eve_shannon: f64::NAN,
            eve_holevo: f64::NAN,
            key_rate: f64::NAN,
        };
        let row = CvmdiScanRow {
            total_km: r.total_km,
            d_a_km: r.d_a_km,
            d_b_km: r.d_b_km,
            eps_a: r.eps_a,
            eps_b: r.eps_b,
            total_variance: r.total_variance.unwrap_or(f64::NAN),
            rate: r.rate.map_or(nan, Into::into),
            flags: flag_bits(&r.flags),
        };
        write_out(out, row, "out")
    })
}

/// # Safety
/// `scan` must be null or a live handle; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn cvmdi_scan_free(scan: *mut CvmdiScan) {
    if !scan.is_null() {
        drop(Box::from_raw(scan));
    }
}

/// Cutoff distance of one line. `out_total_km` receives the crossing for
/// `At`, the search limit for `SecureEverywhere` and NaN otherwise.
///
/// # Safety
/// Out pointers must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn cvmdi_find_cutoff(
    geometry: CvmdiGeometry,
    eps: f64,
    beta: f64,
    policy: CvmdiPolicy,
    direction: CvmdiDirection,
    out_kind: *mut CvmdiCutoffKind,
    out_total_km: *mut f64,
) -> CvmdiStatus {
    guard(|| {
        if out_kind.is_null() || out_total_km.is_null() {
            return Err(null("output pointer"));
        }
        let line = LineSpec::new(geometry.into(), eps, beta, policy.into(), direction.into());
        let (kind, km) = match find_cutoff(&line)? {
            Cutoff::At { total_km, .. } => (CvmdiCutoffKind::At, total_km),
            Cutoff::SecureEverywhere { up_to_km } => (CvmdiCutoffKind::SecureEverywhere, up_to_km),
            Cutoff::InsecureEverywhere => (CvmdiCutoffKind::InsecureEverywhere, f64::NAN),
        };
        write_out(out_kind, kind, "out_kind")?;
        write_out(out_total_km, km, "out_total_km")
    })
}

/// Symplectic eigenvalues of a row-major `dim × dim` covariance matrix,
/// ascending, written to `out[0..dim/2]`.
///
/// # Safety
/// `data` must point to `dim * dim` values and `out` to `dim / 2` writable slots.
#[no_mangle]
pub unsafe extern "C" fn cvmdi_symplectic_eigenvalues(data: *const f64, dim: usize, out: *mut f64) -> CvmdiStatus {
    guard(|| {
        let entries = slice_in(data, dim * dim, "data")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let gamma = CovMatrix::from_row_slice(dim, entries)?;
        let spectrum = symplectic_eigenvalues_spectral(&gamma)?;
        std::ptr::copy_nonoverlapping(spectrum.values().as_ptr(), out, spectrum.values().len());
        Ok(())
    })
}

/// Calibration photodetector intensities for LO phases `theta_a`, `theta_b`.
///
/// # Safety
/// Out pointers must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn cvmdi_lo_interference_outputs(
    theta_a: f64,
    theta_b: f64,
    intensity: f64,
    out_beta1: *mut f64,
    out_beta2: *mut f64,
) -> CvmdiStatus {
    guard(|| {
        if out_beta1.is_null() || out_beta2.is_null() {
            return Err(null("output pointer"));
        }
        let (b1, b2) = lo_interference_outputs(theta_a, theta_b, intensity)?;
        write_out(out_beta1, b1, "out_beta1")?;
        write_out(out_beta2, b2, "out_beta2")
    })
}

/// Phase difference in `[0, 2π)` from the two calibration intensities.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn cvmdi_recover_phase_difference(
    beta1: f64,
    beta2: f64,
    intensity: f64,
    out: *mut f64,
) -> CvmdiStatus {
    guard(|| write_out(out, recover_phase_difference(beta1, beta2, intensity)?, "out"))
}
