use std::ffi::{CStr, CString};
use std::ptr;

use pronyif_ffi::*;

fn last_error() -> String {
    let p = pronyif_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn tone_round_trip_through_handles() {
    unsafe {
        let fs = 1024.0;
        let inter: Vec<f64> = (0..1024)
            .flat_map(|n| {
                let ph = 2.0 * std::f64::consts::PI * 220.5 * n as f64 / fs;
                [ph.cos(), ph.sin()]
            })
            .collect();
        let mut sig = ptr::null_mut();
        assert_eq!(pronyif_signal_from_samples(inter.as_ptr(), 1024, fs, &mut sig), PronyifStatus::Ok);
        assert_eq!(pronyif_signal_len(sig), 1024);

        let mut cfg = ptr::null_mut();
        assert_eq!(pronyif_config_new(&mut cfg), PronyifStatus::Ok);
        let m = CString::new("cad").unwrap();
        assert_eq!(pronyif_config_set_method(cfg, m.as_ptr()), PronyifStatus::Ok);

        let mut est = ptr::null_mut();
        assert_eq!(pronyif_estimate(sig, 1, cfg, &mut est), PronyifStatus::Ok);
        assert!(pronyif_last_error().is_null());
        let frames = pronyif_estimate_frames(est);
        assert_eq!(frames, 1024);
        assert_eq!(pronyif_estimate_modes(est), 1);
        let margin = pronyif_estimate_margin(est);
        let mut buf = vec![0.0; frames];
        assert_eq!(pronyif_estimate_copy_mode(est, 0, buf.as_mut_ptr(), frames), PronyifStatus::Ok);
        for v in &buf[margin..frames - margin] {
            assert!((v - 220.5).abs() < 1e-6 * fs);
        }

        assert_eq!(pronyif_estimate_copy_mode(est, 3, buf.as_mut_ptr(), frames), PronyifStatus::OutOfRange);
        assert!(last_error().contains("out of range"));
        assert_eq!(pronyif_estimate_copy_mode(est, 0, buf.as_mut_ptr(), 10), PronyifStatus::OutOfRange);

        pronyif_estimate_free(est);
        pronyif_config_free(cfg);
        pronyif_signal_free(sig);
    }
}

#[test]
fn errors_set_status_and_message() {
    unsafe {
        let mut cfg = ptr::null_mut();
        assert_eq!(pronyif_config_new(&mut cfg), PronyifStatus::Ok);
        let bad = CString::new("music").unwrap();
        assert_eq!(pronyif_config_set_method(cfg, bad.as_ptr()), PronyifStatus::InvalidArgument);
        assert!(last_error().contains("music"));
        assert_eq!(pronyif_config_set_sigma(cfg, -1.0), PronyifStatus::InvalidArgument);
        assert_eq!(pronyif_config_set_method(cfg, ptr::null()), PronyifStatus::NullPointer);
        pronyif_config_free(cfg);

        let toml = CString::new("schema_version = 9").unwrap();
        let mut c2 = ptr::null_mut();
        assert_eq!(pronyif_config_from_toml(toml.as_ptr(), &mut c2), PronyifStatus::InvalidArgument);
        assert!(c2.is_null());
        assert!(last_error().contains("schema_version"));

        let mut sig = ptr::null_mut();
        let name = CString::new("nope").unwrap();
        assert_eq!(pronyif_signal_scenario(name.as_ptr(), 1024, f64::INFINITY, 1, &mut sig), PronyifStatus::InvalidArgument);
        assert_eq!(pronyif_signal_from_samples(ptr::null(), 4, 1.0, &mut sig), PronyifStatus::NullPointer);
        assert_eq!(pronyif_estimate(ptr::null(), 1, ptr::null(), &mut ptr::null_mut()), PronyifStatus::NullPointer);

        pronyif_signal_free(ptr::null_mut());
        pronyif_config_free(ptr::null_mut());
        pronyif_estimate_free(ptr::null_mut());
        assert_eq!(pronyif_signal_len(ptr::null()), 0);
    }
}

#[test]
fn scenario_signal_is_seeded() {
    unsafe {
        let name = CString::new("tones").unwrap();
        let mut a = ptr::null_mut();
        let mut b = ptr::null_mut();
        assert_eq!(pronyif_signal_scenario(name.as_ptr(), 512, 10.0, 42, &mut a), PronyifStatus::Ok);
        assert_eq!(pronyif_signal_scenario(name.as_ptr(), 512, 10.0, 42, &mut b), PronyifStatus::Ok);
        let mut x = vec![0.0; 1024];
        let mut y = vec![0.0; 1024];
        let mut n = 0;
        assert_eq!(pronyif_signal_copy(a, x.as_mut_ptr(), 512, &mut n), PronyifStatus::Ok);
        assert_eq!(n, 512);
        assert_eq!(pronyif_signal_copy(b, y.as_mut_ptr(), 512, ptr::null_mut()), PronyifStatus::Ok);
        assert_eq!(x, y);
        pronyif_signal_free(a);
        pronyif_signal_free(b);
    }
}

#[test]
fn header_declares_the_api() {
    let h = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/pronyif.h")).unwrap();
    for name in [
        "pronyif_last_error",
        "pronyif_signal_from_samples",
        "pronyif_estimate_copy_mode",
        "PRONYIF_STATUS_NUMERICAL",
        "typedef struct PronyifEstimate PronyifEstimate",
    ] {
        assert!(h.contains(name), "{name} missing from header");
    }
    let v = unsafe { CStr::from_ptr(pronyif_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}
