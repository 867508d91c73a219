//! Exercises the C surface the way an embedding would: raw pointers,
//! interleaved buffers, status codes, and the generated header.

use std::ffi::{CStr, CString};
use std::os::raw::c_char;
use std::ptr;

use desmoke_ffi::{
    dsm_config_default, dsm_config_free, dsm_config_from_json, dsm_config_to_json,
    dsm_last_error, dsm_pipeline_free, dsm_pipeline_new, dsm_pipeline_process,
    dsm_pipeline_reset, dsm_string_free, dsm_version, DsmConfig, DsmPipeline, DsmStatus,
};

fn last_error() -> String {
    unsafe { CStr::from_ptr(dsm_last_error()) }
        .to_str()
        .unwrap()
        .to_string()
}

/// Interleaved x, y, z, intensity buffer with labeled spans.
struct FrameFixture {
    data: Vec<f64>,
    plate: Vec<usize>,
    dim: Vec<usize>,
    far: Vec<usize>,
    close_bright: Vec<usize>,
}

fn fixture() -> FrameFixture {
    let mut data = Vec::new();
    let mut push = |x: f64, y: f64, z: f64, i: f64| {
        let idx = data.len() / 4;
        data.extend_from_slice(&[x, y, z, i]);
        idx
    };

    // A dense wall patch at 8 m: survives every stage.
    let mut plate = Vec::new();
    for i in 0..24 {
        for j in 0..12 {
            plate.push(push(8.0, -0.23 + 0.02 * i as f64, 0.02 * j as f64, 40.0));
        }
    }
    // Dim returns near the sensor: removed by the intensity screen.
    let mut dim = Vec::new();
    for k in 0..5 {
        dim.push(push(2.0 + 0.1 * k as f64, 0.5, 0.1, 0.5));
    }
    // Beyond the outer gate: dropped up front.
    let mut far = Vec::new();
    for k in 0..3 {
        far.push(push(40.0 + k as f64, 0.0, 0.0, 60.0));
    }
    // Bright, close, inside the activation range: untouched.
    let mut close_bright = Vec::new();
    for k in 0..4 {
        close_bright.push(push(1.5 + 0.3 * k as f64, -1.0, 0.2, 25.0));
    }
    FrameFixture {
        data,
        plate,
        dim,
        far,
        close_bright,
    }
}

fn make_pipeline() -> *mut DsmPipeline {
    let cfg = dsm_config_default();
    assert!(!cfg.is_null());
    let mut pipeline: *mut DsmPipeline = ptr::null_mut();
    let status = unsafe { dsm_pipeline_new(cfg, &mut pipeline) };
    assert_eq!(status, DsmStatus::Ok, "{}", last_error());
    unsafe { dsm_config_free(cfg) };
    pipeline
}

#[test]
fn version_is_a_static_string() {
    let v = unsafe { CStr::from_ptr(dsm_version()) };
    assert!(!v.to_bytes().is_empty());
}

#[test]
fn default_config_serializes_with_documented_values() {
    let cfg = dsm_config_default();
    let json = unsafe { dsm_config_to_json(cfg) };
    assert!(!json.is_null());
    let text = unsafe { CStr::from_ptr(json) }.to_str().unwrap().to_string();
    let doc: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(doc["r_max"], 30.0);
    assert_eq!(doc["r_min"], 5.0);
    assert_eq!(doc["I_th"], 2.0);
    assert_eq!(doc["K_nn"], 6);
    unsafe {
        dsm_string_free(json);
        dsm_config_free(cfg);
    }
}

#[test]
fn config_json_errors_carry_the_parameter_name() {
    let body = CString::new(r#"{"r_th": 0.7}"#).unwrap();
    let mut cfg: *mut DsmConfig = ptr::null_mut();
    let status = unsafe { dsm_config_from_json(body.as_ptr(), &mut cfg) };
    assert_eq!(status, DsmStatus::InvalidConfig);
    assert!(cfg.is_null());
    let msg = last_error();
    assert!(msg.contains("r_th"), "{msg}");
    assert!(msg.contains("[0.2, 0.6]"), "{msg}");

    let garbage = CString::new("not json").unwrap();
    let status = unsafe { dsm_config_from_json(garbage.as_ptr(), &mut cfg) };
    assert_eq!(status, DsmStatus::InvalidConfig);

    let unknown = CString::new(r#"{"r_maximum": 20}"#).unwrap();
    let status = unsafe { dsm_config_from_json(unknown.as_ptr(), &mut cfg) };
    assert_eq!(status, DsmStatus::InvalidConfig);
    assert!(last_error().contains("r_maximum"), "{}", last_error());

    let invalid_utf8 = CStr::from_bytes_with_nul(b"\xff\xfe\x00").unwrap();
    let status = unsafe { dsm_config_from_json(invalid_utf8.as_ptr(), &mut cfg) };
    assert_eq!(status, DsmStatus::InvalidArgument);
}

#[test]
fn null_arguments_are_reported_not_dereferenced() {
    let mut cfg: *mut DsmConfig = ptr::null_mut();
    assert_eq!(
        unsafe { dsm_config_from_json(ptr::null(), &mut cfg) },
        DsmStatus::NullPointer
    );
    let mut pipeline: *mut DsmPipeline = ptr::null_mut();
    assert_eq!(
        unsafe { dsm_pipeline_new(ptr::null(), &mut pipeline) },
        DsmStatus::NullPointer
    );
    assert_eq!(
        unsafe { dsm_pipeline_reset(ptr::null_mut()) },
        DsmStatus::NullPointer
    );
    assert_eq!(
        unsafe {
            dsm_pipeline_process(
                ptr::null_mut(),
                ptr::null(),
                0,
                f64::NAN,
                ptr::null_mut(),
                ptr::null_mut(),
            )
        },
        DsmStatus::NullPointer
    );
    // Freeing null is always a quiet no-op.
    unsafe {
        dsm_config_free(ptr::null_mut());
        dsm_pipeline_free(ptr::null_mut());
        dsm_string_free(ptr::null_mut());
    }
}

#[test]
fn process_fills_the_keep_mask_and_report() {
    let f = fixture();
    let n = f.data.len() / 4;
    let pipeline = make_pipeline();
    let mut mask = vec![9u8; n];
    let mut report: *mut c_char = ptr::null_mut();
    let status = unsafe {
        dsm_pipeline_process(
            pipeline,
            f.data.as_ptr(),
            n,
            0.0,
            mask.as_mut_ptr(),
            &mut report,
        )
    };
    assert_eq!(status, DsmStatus::Ok, "{}", last_error());
    assert!(!report.is_null());

    for &i in &f.plate {
        assert_eq!(mask[i], 1, "wall point {i} must survive");
    }
    for &i in &f.close_bright {
        assert_eq!(mask[i], 1, "bright close point {i} must survive");
    }
    for &i in &f.dim {
        assert_eq!(mask[i], 0, "dim point {i} must be rejected");
    }
    for &i in &f.far {
        assert_eq!(mask[i], 0, "far point {i} must be dropped");
    }

    let text = unsafe { CStr::from_ptr(report) }.to_str().unwrap();
    let doc: serde_json::Value = serde_json::from_str(text).unwrap();
    assert_eq!(doc["input_points"], n);
    let kept = mask.iter().filter(|&&m| m == 1).count();
    assert_eq!(doc["filtered_points"], kept);
    assert_eq!(doc["rejected_points"], n - kept);
    assert_eq!(doc["dropped_far"], f.far.len());
    assert_eq!(doc["adaptive"]["updated"], true, "t=0 fires the 1 Hz samplers");

    unsafe {
        dsm_string_free(report);
        dsm_pipeline_free(pipeline);
    }
}

#[test]
fn reset_restores_the_initial_adaptive_state() {
    let f = fixture();
    let n = f.data.len() / 4;
    let pipeline = make_pipeline();
    let mut mask = vec![0u8; n];
    let mut report: *mut c_char = ptr::null_mut();

    let run = |pipeline, ts: f64, mask: &mut [u8], report: &mut *mut c_char| {
        let status = unsafe {
            dsm_pipeline_process(pipeline, f.data.as_ptr(), n, ts, mask.as_mut_ptr(), report)
        };
        assert_eq!(status, DsmStatus::Ok, "{}", last_error());
        let text = unsafe { CStr::from_ptr(*report) }.to_str().unwrap();
        let doc: serde_json::Value = serde_json::from_str(text).unwrap();
        unsafe { dsm_string_free(*report) };
        *report = ptr::null_mut();
        doc["adaptive"]["updated"] == true
    };

    assert!(run(pipeline, 0.0, &mut mask, &mut report), "first frame samples");
    assert!(
        !run(pipeline, 0.1, &mut mask, &mut report),
        "0.1 s later is inside the 1 s cadence"
    );
    assert_eq!(unsafe { dsm_pipeline_reset(pipeline) }, DsmStatus::Ok);
    assert!(
        run(pipeline, 0.1, &mut mask, &mut report),
        "after reset the first frame samples again"
    );
    unsafe { dsm_pipeline_free(pipeline) };
}

#[test]
fn untimed_and_empty_frames_are_legal() {
    let f = fixture();
    let n = f.data.len() / 4;
    let pipeline = make_pipeline();
    let mut mask = vec![0u8; n];
    let mut report: *mut c_char = ptr::null_mut();

    // NaN timestamp: the frame is filtered but no adaptive sample fires.
    let status = unsafe {
        dsm_pipeline_process(
            pipeline,
            f.data.as_ptr(),
            n,
            f64::NAN,
            mask.as_mut_ptr(),
            &mut report,
        )
    };
    assert_eq!(status, DsmStatus::Ok, "{}", last_error());
    let doc: serde_json::Value =
        serde_json::from_str(unsafe { CStr::from_ptr(report) }.to_str().unwrap()).unwrap();
    assert_eq!(doc["adaptive"]["updated"], false);
    assert_eq!(doc["timestamp"], serde_json::Value::Null);
    unsafe { dsm_string_free(report) };

    // Empty frame with null buffers: fine, nothing to write.
    let mut report: *mut c_char = ptr::null_mut();
    let status = unsafe {
        dsm_pipeline_process(pipeline, ptr::null(), 0, 0.0, ptr::null_mut(), &mut report)
    };
    assert_eq!(status, DsmStatus::Ok, "{}", last_error());
    let doc: serde_json::Value =
        serde_json::from_str(unsafe { CStr::from_ptr(report) }.to_str().unwrap()).unwrap();
    assert_eq!(doc["input_points"], 0);
    assert_eq!(doc["filtered_points"], 0);
    unsafe {
        dsm_string_free(report);
        dsm_pipeline_free(pipeline);
    }
}

#[test]
fn generated_header_declares_the_surface() {
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/desmoke.h");
    let text = std::fs::read_to_string(header).expect("build script writes the header");
    for symbol in [
        "DSM_STATUS_OK",
        "typedef struct DsmConfig DsmConfig;",
        "typedef struct DsmPipeline DsmPipeline;",
        "dsm_config_from_json",
        "dsm_pipeline_process",
        "dsm_last_error",
        "dsm_string_free",
    ] {
        assert!(text.contains(symbol), "header lacks {symbol}");
    }
}
