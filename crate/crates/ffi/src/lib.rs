//! C ABI over the in-process simulator.
//!
//! Handles are opaque and owned by the caller until passed to the matching
//! `*_free`. Every fallible call returns a [`HybaggStatus`]; on failure the
//! message is available from [`hybagg_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use hybagg::protocol::{
    client_round, payload_accounting, server_round, setup, ClientKeyring, ClientUpload, ParamRequest, ParamSet,
    ProtocolError, PublicDirectory,
};
use hybagg::sampling::{NoiseSpec, Seed};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HybaggStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Protocol = 3,
    Wire = 4,
    BufferTooSmall = 5,
    Panic = 99,
}

/// Selected parameters.
pub struct HybaggParams(ParamSet);

/// A simulated cohort: the public directory plus every client's keyring.
pub struct HybaggCohort {
    dir: PublicDirectory,
    keys: Vec<ClientKeyring>,
}

/// Rust-allocated bytes; release with [`hybagg_bytes_free`].
#[repr(C)]
pub struct HybaggBytes {
    pub data: *mut u8,
    pub len: usize,
}

impl HybaggBytes {
    fn empty() -> Self {
        Self { data: ptr::null_mut(), len: 0 }
    }

    fn from_vec(v: Vec<u8>) -> Self {
        let boxed = v.into_boxed_slice();
        let len = boxed.len();
        Self { data: Box::into_raw(boxed).cast(), len }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = CString::new(msg.into().replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn fail(status: HybaggStatus, msg: impl Into<String>) -> HybaggStatus {
    set_error(msg);
    status
}

fn protocol_status(e: ProtocolError) -> HybaggStatus {
    let status = match e {
        ProtocolError::Wire(_) => HybaggStatus::Wire,
        ProtocolError::InvalidParams(_) | ProtocolError::Codec(_) | ProtocolError::ValueOutOfBound { .. } => {
            HybaggStatus::InvalidArgument
        }
        _ => HybaggStatus::Protocol,
    };
    fail(status, e.to_string())
}

fn guarded(f: impl FnOnce() -> HybaggStatus) -> HybaggStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => fail(HybaggStatus::Panic, "internal panic"),
    }
}

/// Copies the last error message of this thread into `buf` (NUL-terminated,
/// truncated to fit) and returns the full message length, or 0 when none.
///
/// # Safety
/// `buf` must be null or point to `cap` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn hybagg_last_error(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let Some(msg) = e.as_ref() else { return 0 };
        let bytes = msg.as_bytes();
        if !buf.is_null() && cap > 0 {
            let n = bytes.len().min(cap - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Static description of a status code.
#[no_mangle]
pub extern "C" fn hybagg_status_str(status: HybaggStatus) -> *const c_char {
    let s: &'static CStr = match status {
        HybaggStatus::Ok => c"ok",
        HybaggStatus::NullPointer => c"null pointer",
        HybaggStatus::InvalidArgument => c"invalid argument",
        HybaggStatus::Protocol => c"protocol error",
        HybaggStatus::Wire => c"malformed message",
        HybaggStatus::BufferTooSmall => c"buffer too small",
        HybaggStatus::Panic => c"internal panic",
    };
    s.as_ptr()
}

/// Selects the smallest secure ring for dimension `d`.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn hybagg_params_select(
    d: usize,
    max_cohort: usize,
    delta_bits: u32,
    smudge_bits: u32,
    value_bound: f64,
    out: *mut *mut HybaggParams,
) -> HybaggStatus {
    guarded(|| {
        if out.is_null() {
            return fail(HybaggStatus::NullPointer, "out is null");
        }
        let noise = match NoiseSpec::with_smudge_bits(smudge_bits) {
            Ok(n) => n,
            Err(e) => return fail(HybaggStatus::InvalidArgument, e.to_string()),
        };
        match ParamSet::select(ParamRequest { d, max_cohort, delta_bits, noise, value_bound }) {
            Ok(p) => {
                *out = Box::into_raw(Box::new(HybaggParams(p)));
                HybaggStatus::Ok
            }
            Err(e) => protocol_status(e),
        }
    })
}

/// # Safety
/// `params` must be null or a handle from [`hybagg_params_select`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn hybagg_params_free(params: *mut HybaggParams) {
    if !params.is_null() {
        drop(Box::from_raw(params));
    }
}

/// Ring degree `n`, or 0 for a null handle.
///
/// # Safety
/// `params` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn hybagg_params_ring_degree(params: *const HybaggParams) -> usize {
    params.as_ref().map_or(0, |p| p.0.n())
}

/// Serialized size of one client upload, or 0 for a null handle.
///
/// # Safety
/// `params` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn hybagg_params_upload_size(params: *const HybaggParams) -> usize {
    params.as_ref().map_or(0, |p| payload_accounting(&p.0, 2).client_uplink_bytes)
}

/// Runs setup for `clients` clients from a 64-bit seed.
///
/// # Safety
/// `params` must be a live handle and `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn hybagg_cohort_setup(
    params: *const HybaggParams,
    clients: usize,
    seed: u64,
    out: *mut *mut HybaggCohort,
) -> HybaggStatus {
    guarded(|| {
        let (Some(params), false) = (params.as_ref(), out.is_null()) else {
            return fail(HybaggStatus::NullPointer, "params or out is null");
        };
        match setup(&params.0, clients, &Seed::from_u64(seed)) {
            Ok((dir, keys)) => {
                *out = Box::into_raw(Box::new(HybaggCohort { dir, keys }));
                HybaggStatus::Ok
            }
            Err(e) => protocol_status(e),
        }
    })
}

/// # Safety
/// `cohort` must be null or a handle from [`hybagg_cohort_setup`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn hybagg_cohort_free(cohort: *mut HybaggCohort) {
    if !cohort.is_null() {
        drop(Box::from_raw(cohort));
    }
}

/// Serialized public directory.
///
/// # Safety
/// `cohort` must be a live handle and `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn hybagg_cohort_directory(cohort: *const HybaggCohort, out: *mut HybaggBytes) -> HybaggStatus {
    guarded(|| {
        let (Some(c), false) = (cohort.as_ref(), out.is_null()) else {
            return fail(HybaggStatus::NullPointer, "cohort or out is null");
        };
        *out = HybaggBytes::from_vec(c.dir.to_bytes());
        HybaggStatus::Ok
    })
}

/// Encodes, encrypts, and masks `x[0..len]` for client `id`, writing the
/// serialized upload to `out`.
///
/// # Safety
/// `cohort` must be a live handle, `x` must point to `len` doubles, and
/// `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn hybagg_client_round(
    cohort: *const HybaggCohort,
    id: u32,
    x: *const f64,
    len: usize,
    round: u32,
    out: *mut HybaggBytes,
) -> HybaggStatus {
    guarded(|| {
        let (Some(c), false, false) = (cohort.as_ref(), x.is_null() && len > 0, out.is_null()) else {
            return fail(HybaggStatus::NullPointer, "cohort, x, or out is null");
        };
        *out = HybaggBytes::empty();
        let Some(kr) = c.keys.get(id as usize) else {
            return fail(HybaggStatus::InvalidArgument, format!("no client {id}"));
        };
        let x = if len == 0 { &[][..] } else { slice::from_raw_parts(x, len) };
        match client_round(kr, &c.dir, x, round) {
            Ok(up) => {
                *out = HybaggBytes::from_vec(up.to_bytes());
                HybaggStatus::Ok
            }
            Err(e) => protocol_status(e),
        }
    })
}

/// Parses `count` serialized uploads and writes the decoded sum to
/// `sum[0..sum_len]`; `sum_len` must equal the configured dimension.
///
/// # Safety
/// `uploads` must point to `count` buffers, each valid for its `len` bytes,
/// and `sum` must point to `sum_len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn hybagg_server_aggregate(
    cohort: *const HybaggCohort,
    uploads: *const HybaggBytes,
    count: usize,
    sum: *mut f64,
    sum_len: usize,
) -> HybaggStatus {
    guarded(|| {
        let (Some(c), false, false) = (cohort.as_ref(), uploads.is_null(), sum.is_null()) else {
            return fail(HybaggStatus::NullPointer, "cohort, uploads, or sum is null");
        };
        let d = c.dir.params().d();
        if sum_len < d {
            return fail(HybaggStatus::BufferTooSmall, format!("sum holds {sum_len} values, need {d}"));
        }
        let ctx = c.dir.params().ring();
        let mut parsed = Vec::with_capacity(count);
        for b in slice::from_raw_parts(uploads, count) {
            if b.data.is_null() {
                return fail(HybaggStatus::NullPointer, "upload buffer is null");
            }
            match ClientUpload::from_bytes(slice::from_raw_parts(b.data, b.len), ctx) {
                Ok(u) => parsed.push(u),
                Err(e) => return protocol_status(e.into()),
            }
        }
        match server_round(&parsed, &c.dir) {
            Ok(res) => {
                slice::from_raw_parts_mut(sum, d).copy_from_slice(&res.sum);
                HybaggStatus::Ok
            }
            Err(e) => protocol_status(e),
        }
    })
}

/// # Safety
/// `bytes` must have come from this library and not been freed.
#[no_mangle]
pub unsafe extern "C" fn hybagg_bytes_free(bytes: HybaggBytes) {
    if !bytes.data.is_null() {
        drop(Box::from_raw(ptr::slice_from_raw_parts_mut(bytes.data, bytes.len)));
    }
}
