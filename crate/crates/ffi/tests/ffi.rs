use std::ffi::CStr;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use hybagg_ffi::*;

struct Fixture {
    params: *mut HybaggParams,
    cohort: *mut HybaggCohort,
}

impl Fixture {
    fn new(d: usize, clients: usize) -> Self {
        let mut params = ptr::null_mut();
        let mut cohort = ptr::null_mut();
        unsafe {
            assert_eq!(hybagg_params_select(d, 16, 40, 11, 1.0, &mut params), HybaggStatus::Ok);
            assert_eq!(hybagg_cohort_setup(params, clients, 5, &mut cohort), HybaggStatus::Ok);
        }
        Self { params, cohort }
    }

    fn upload(&self, id: u32, x: &[f64], round: u32) -> (HybaggStatus, HybaggBytes) {
        let mut out = HybaggBytes { data: ptr::null_mut(), len: 0 };
        let status = unsafe { hybagg_client_round(self.cohort, id, x.as_ptr(), x.len(), round, &mut out) };
        (status, out)
    }
}

impl Drop for Fixture {
    fn drop(&mut self) {
        unsafe {
            hybagg_cohort_free(self.cohort);
            hybagg_params_free(self.params);
        }
    }
}

fn last_error() -> String {
    let mut buf = [0 as std::ffi::c_char; 256];
    let len = unsafe { hybagg_last_error(buf.as_mut_ptr(), buf.len()) };
    assert!(len > 0);
    unsafe { CStr::from_ptr(buf.as_ptr()) }.to_string_lossy().into_owned()
}

#[test]
fn full_round_through_the_c_abi() {
    let f = Fixture::new(4, 3);
    let xs = [[0.5, -0.25, 0.0, 1.0], [0.25, 0.25, 0.0, -1.0], [0.0, 0.5, 0.0, 0.75]];
    let uploads: Vec<HybaggBytes> = xs
        .iter()
        .enumerate()
        .map(|(i, x)| {
            let (status, bytes) = f.upload(i as u32, x, 1);
            assert_eq!(status, HybaggStatus::Ok);
            assert_eq!(bytes.len, unsafe { hybagg_params_upload_size(f.params) });
            bytes
        })
        .collect();
    let mut sum = [0.0; 4];
    let status = unsafe { hybagg_server_aggregate(f.cohort, uploads.as_ptr(), 3, sum.as_mut_ptr(), 4) };
    assert_eq!(status, HybaggStatus::Ok);
    for (j, s) in sum.iter().enumerate() {
        let truth: f64 = xs.iter().map(|x| x[j]).sum();
        assert!((s - truth).abs() < 1e-6);
    }
    let status = unsafe { hybagg_server_aggregate(f.cohort, uploads.as_ptr(), 3, sum.as_mut_ptr(), 3) };
    assert_eq!(status, HybaggStatus::BufferTooSmall);
    for b in uploads {
        unsafe { hybagg_bytes_free(b) };
    }
}

#[test]
fn errors_map_to_status_codes() {
    let f = Fixture::new(4, 2);
    assert_eq!(f.upload(0, &[0.0; 3], 0).0, HybaggStatus::InvalidArgument);
    assert_eq!(f.upload(0, &[5.0, 0.0, 0.0, 0.0], 0).0, HybaggStatus::InvalidArgument);
    assert!(last_error().contains("bound"));
    assert_eq!(f.upload(9, &[0.0; 4], 0).0, HybaggStatus::InvalidArgument);
    assert!(last_error().contains("no client 9"));

    let (_, good) = f.upload(0, &[0.0; 4], 0);
    let mut corrupt = unsafe { std::slice::from_raw_parts(good.data, good.len) }.to_vec();
    corrupt[0] = b'X';
    let bad = HybaggBytes { data: corrupt.as_mut_ptr(), len: corrupt.len() };
    let mut sum = [0.0; 4];
    let status = unsafe { hybagg_server_aggregate(f.cohort, &bad, 1, sum.as_mut_ptr(), 4) };
    assert_eq!(status, HybaggStatus::Wire);
    assert!(last_error().contains("magic"));
    let status = unsafe { hybagg_server_aggregate(f.cohort, &good, 1, sum.as_mut_ptr(), 4) };
    assert_eq!(status, HybaggStatus::Protocol);
    unsafe { hybagg_bytes_free(good) };
}

#[test]
fn null_pointers_are_rejected() {
    unsafe {
        assert_eq!(hybagg_params_select(4, 16, 40, 11, 1.0, ptr::null_mut()), HybaggStatus::NullPointer);
        let mut cohort = ptr::null_mut();
        assert_eq!(hybagg_cohort_setup(ptr::null(), 3, 0, &mut cohort), HybaggStatus::NullPointer);
        assert_eq!(hybagg_params_ring_degree(ptr::null()), 0);
        hybagg_params_free(ptr::null_mut());
        hybagg_cohort_free(ptr::null_mut());
        hybagg_bytes_free(HybaggBytes { data: ptr::null_mut(), len: 0 });
        let mut params = ptr::null_mut();
        assert_eq!(hybagg_params_select(0, 16, 40, 11, 1.0, &mut params), HybaggStatus::InvalidArgument);
        assert!(params.is_null());
        let s = CStr::from_ptr(hybagg_status_str(HybaggStatus::Wire));
        assert_eq!(s.to_str().unwrap(), "malformed message");
    }
}

#[test]
fn directory_bytes_parse_back() {
    let f = Fixture::new(8, 2);
    let mut out = HybaggBytes { data: ptr::null_mut(), len: 0 };
    assert_eq!(unsafe { hybagg_cohort_directory(f.cohort, &mut out) }, HybaggStatus::Ok);
    let bytes = unsafe { std::slice::from_raw_parts(out.data, out.len) };
    let dir = hybagg::protocol::PublicDirectory::from_bytes(bytes).unwrap();
    assert_eq!(dir.clients(), 2);
    assert_eq!(dir.params().n(), unsafe { hybagg_params_ring_degree(f.params) });
    unsafe { hybagg_bytes_free(out) };
}

fn target_dir() -> PathBuf {
    // tests run from <target>/<profile>/deps
    let exe = std::env::current_exe().unwrap();
    exe.parent().and_then(Path::parent).unwrap().to_path_buf()
}

#[test]
fn c_program_links_against_the_static_library() {
    let crate_dir = Path::new(env!("CARGO_MANIFEST_DIR"));
    let header = crate_dir.join("include/hybagg.h");
    assert!(header.exists(), "build script should have written {}", header.display());
    let lib = target_dir().join("libhybagg_ffi.a");
    if !lib.exists() || Command::new("cc").arg("--version").output().is_err() {
        eprintln!("skipping: no C compiler or static library at {}", lib.display());
        return;
    }
    let out = tempfile::tempdir().unwrap();
    let exe = out.path().join("smoke");
    let status = Command::new("cc")
        .arg(crate_dir.join("tests/smoke.c"))
        .arg("-I")
        .arg(crate_dir.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success(), "C compile failed");
    let run = Command::new(&exe).output().unwrap();
    assert!(run.status.success(), "smoke exited with {:?}", run.status.code());
    assert!(String::from_utf8_lossy(&run.stdout).starts_with("sum = "));
}
