use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::ptr;

use osp_core::data_io::{generate_synthetic, SyntheticSpec};
use osp_core::engine::{train_osp, ModelKind, OspMethod};
use osp_core::features::{extract_features, FEATURE_COUNT, FEATURE_NAMES};
use osp_core::forecasters::{forecast, ForecasterKind, ForecasterSpec};
use osp_core::gbdt::GbdtParams;
use osp_core::labeler::{LabelKind, Labeler};
use osp_core::series::{SegmentationConfig, TimeSeries};
use osp_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(osp_last_error_message()) }
        .to_string_lossy()
        .into_owned()
}

fn ramp(len: usize) -> Vec<f64> {
    (0..len)
        .map(|t| 10.0 + 0.5 * t as f64 + ((t * 7) % 5) as f64)
        .collect()
}

fn trained_json(kind: ModelKind) -> String {
    let corpus = generate_synthetic(&SyntheticSpec {
        count: 30,
        seed: 4,
        ..Default::default()
    })
    .unwrap();
    let config = SegmentationConfig::with_default_min_len(5, 4, 6, 1).unwrap();
    let set = Labeler::new(config, ForecasterSpec::new(ForecasterKind::Ses))
        .build_training_set(&corpus)
        .unwrap();
    let p = GbdtParams {
        rounds: 10,
        ..Default::default()
    };
    train_osp(&set.examples, OspMethod::new(LabelKind::Average, kind), &p)
        .unwrap()
        .to_json()
        .unwrap()
}

fn load(json: &str) -> *mut OspModel {
    let c = CString::new(json).unwrap();
    let mut model = ptr::null_mut();
    assert_eq!(
        unsafe { osp_model_from_json(c.as_ptr(), &mut model) },
        OspStatus::Ok
    );
    assert!(!model.is_null());
    model
}

#[test]
fn feature_names_match_core() {
    assert_eq!(osp_feature_count(), FEATURE_COUNT);
    for (i, name) in FEATURE_NAMES.iter().enumerate() {
        let got = unsafe { CStr::from_ptr(osp_feature_name(i)) };
        assert_eq!(got.to_str().unwrap(), *name);
    }
    assert!(osp_feature_name(FEATURE_COUNT).is_null());
}

#[test]
fn features_match_core() {
    let v = ramp(60);
    let mut out = vec![0.0; FEATURE_COUNT];
    let st = unsafe { osp_extract_features(v.as_ptr(), v.len(), 4, out.as_mut_ptr()) };
    assert_eq!(st, OspStatus::Ok);
    let expected = extract_features(&TimeSeries::new("x", v, 4).unwrap()).unwrap();
    assert_eq!(out, expected.as_slice());

    let short = [1.0, 2.0, 3.0];
    let st = unsafe { osp_extract_features(short.as_ptr(), 3, 1, out.as_mut_ptr()) };
    assert_eq!(st, OspStatus::TooShort);
    assert!(!last_error().is_empty());

    let st = unsafe { osp_extract_features(ptr::null(), 10, 1, out.as_mut_ptr()) };
    assert_eq!(st, OspStatus::NullPointer);
    assert!(last_error().contains("values"));

    let bad = [1.0, f64::NAN, 3.0, 4.0];
    let st = unsafe { osp_extract_features(bad.as_ptr(), 4, 1, out.as_mut_ptr()) };
    assert_eq!(st, OspStatus::InvalidArgument);
}

#[test]
fn metrics() {
    let train = [1.0, 2.0, 3.0, 4.0];
    let actual = [5.0, 6.0];
    let fc = [4.0, 4.0];
    let mut out = 0.0;
    assert_eq!(
        unsafe { osp_mase(train.as_ptr(), 4, actual.as_ptr(), fc.as_ptr(), 2, &mut out) },
        OspStatus::Ok
    );
    assert_eq!(out, 1.5);
    assert_eq!(
        unsafe { osp_mape(actual.as_ptr(), fc.as_ptr(), 2, &mut out) },
        OspStatus::Ok
    );
    assert!((out - (20.0 + 100.0 / 3.0) / 2.0).abs() < 1e-12);

    let flat = [2.0, 2.0, 2.0];
    assert_eq!(
        unsafe { osp_mase(flat.as_ptr(), 3, actual.as_ptr(), fc.as_ptr(), 2, &mut out) },
        OspStatus::Undefined
    );
    let zero = [0.0, 1.0];
    assert_eq!(
        unsafe { osp_mape(zero.as_ptr(), fc.as_ptr(), 2, &mut out) },
        OspStatus::Undefined
    );
    assert!(last_error().contains("MAPE"));
}

#[test]
fn base_forecast_matches_core() {
    let v = ramp(40);
    let mut out = vec![0.0; 5];
    let st = unsafe {
        osp_base_forecast(
            v.as_ptr(),
            v.len(),
            1,
            OspBaseModel::Holt,
            5,
            out.as_mut_ptr(),
        )
    };
    assert_eq!(st, OspStatus::Ok);
    let expected = forecast(
        &ForecasterSpec::new(ForecasterKind::Holt),
        &TimeSeries::new("x", v, 1).unwrap(),
        5,
    )
    .unwrap();
    assert_eq!(out, expected.values);
}

#[test]
fn cusum() {
    let mut v = vec![0.0; 100];
    for (t, x) in v.iter_mut().enumerate() {
        *x = if t < 50 { 0.0 } else { 5.0 } + ((t * 13) % 7) as f64 * 0.1;
    }
    let (mut found, mut idx) = (0, 0);
    let st = unsafe { osp_cusum_changepoint(v.as_ptr(), v.len(), 0.0, &mut found, &mut idx) };
    assert_eq!(st, OspStatus::Ok);
    assert_eq!((found, idx), (1, 50));

    let flat = [3.0; 20];
    let st = unsafe { osp_cusum_changepoint(flat.as_ptr(), 20, 0.0, &mut found, &mut idx) };
    assert_eq!((st, found), (OspStatus::Ok, 0));

    let st = unsafe { osp_cusum_changepoint(flat.as_ptr(), 5, 0.0, &mut found, &mut idx) };
    assert_eq!(st, OspStatus::TooShort);
}

#[test]
fn model_lifecycle_and_forecast() {
    for kind in [ModelKind::Classification, ModelKind::Regression] {
        let json = trained_json(kind);
        let model = load(&json);
        let mut classes = 0;
        assert_eq!(
            unsafe { osp_model_num_classes(model, &mut classes) },
            OspStatus::Ok
        );
        assert_eq!(
            classes,
            if kind == ModelKind::Classification {
                5
            } else {
                0
            }
        );

        let v = ramp(90);
        let mut features = vec![0.0; FEATURE_COUNT];
        unsafe { osp_extract_features(v.as_ptr(), v.len(), 1, features.as_mut_ptr()) };
        let mut interval = 0;
        let st = unsafe {
            osp_predict_interval(model, features.as_ptr(), FEATURE_COUNT, 5, &mut interval)
        };
        assert_eq!(st, OspStatus::Ok);
        assert!((1..=5).contains(&interval));

        let st = unsafe { osp_predict_interval(model, features.as_ptr(), 3, 5, &mut interval) };
        assert_ne!(st, OspStatus::Ok);

        let config = OspForecastConfig {
            m: 5,
            n: 4,
            horizon: 6,
            min_len: 0,
            base: OspBaseModel::Ses,
        };
        let mut out = vec![0.0; 6];
        let mut fc_interval = 0;
        let st = unsafe {
            osp_forecast(
                model,
                v.as_ptr(),
                v.len(),
                1,
                config,
                out.as_mut_ptr(),
                &mut fc_interval,
            )
        };
        assert_eq!(st, OspStatus::Ok, "{}", last_error());
        assert_eq!(fc_interval, interval);
        assert!(out.iter().all(|x| x.is_finite()));

        let short = ramp(12);
        let st = unsafe {
            osp_forecast(
                model,
                short.as_ptr(),
                12,
                1,
                config,
                out.as_mut_ptr(),
                ptr::null_mut(),
            )
        };
        assert_eq!(st, OspStatus::Ineligible);

        unsafe { osp_model_free(model) };
    }
    unsafe { osp_model_free(ptr::null_mut()) };
}

#[test]
fn model_errors() {
    let mut model = ptr::null_mut();
    let bad = CString::new("{\"format_version\": 1}").unwrap();
    assert_eq!(
        unsafe { osp_model_from_json(bad.as_ptr(), &mut model) },
        OspStatus::ModelError
    );
    assert!(model.is_null());
    let path = CString::new("/nonexistent/model.json").unwrap();
    assert_eq!(
        unsafe { osp_model_load(path.as_ptr(), &mut model) },
        OspStatus::IoError
    );
    assert_eq!(
        unsafe { osp_model_load(ptr::null(), &mut model) },
        OspStatus::NullPointer
    );

    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("m.json");
    std::fs::write(&file, trained_json(ModelKind::Classification)).unwrap();
    let c = CString::new(file.to_str().unwrap()).unwrap();
    assert_eq!(
        unsafe { osp_model_load(c.as_ptr(), &mut model) },
        OspStatus::Ok
    );
    unsafe { osp_model_free(model) };
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include/osp_tsp.h"),
    )
    .unwrap();
    for name in [
        "osp_last_error_message",
        "osp_feature_count",
        "osp_feature_name",
        "osp_extract_features",
        "osp_model_load",
        "osp_model_from_json",
        "osp_model_free",
        "osp_model_num_classes",
        "osp_predict_interval",
        "osp_forecast",
        "osp_base_forecast",
        "osp_mase",
        "osp_mape",
        "osp_cusum_changepoint",
        "typedef struct OspModel OspModel",
        "OSP_STATUS_OK = 0",
    ] {
        assert!(header.contains(name), "header lacks {name}");
    }
}

/// Compiles and runs a small C program against the static library.
#[test]
fn c_program_links_and_runs() {
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    if std::process::Command::new(&cc)
        .arg("--version")
        .output()
        .is_err()
    {
        eprintln!("no C compiler available; skipping");
        return;
    }
    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let exe = std::env::current_exe().unwrap();
    let profile_dir = exe.parent().unwrap().parent().unwrap();
    let lib = profile_dir.join("libosp_ffi.a");
    if !lib.exists() {
        eprintln!("{} not built; skipping", lib.display());
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("smoke.c");
    std::fs::write(
        &src,
        r#"
#include <stdio.h>
#include "osp_tsp.h"
int main(void) {
    double train[4] = {1, 2, 3, 4}, actual[2] = {5, 6}, fc[2] = {4, 4}, out = 0;
    if (osp_mase(train, 4, actual, fc, 2, &out) != OSP_STATUS_OK || out != 1.5) return 1;
    if (osp_mase(train, 4, actual, NULL, 2, &out) != OSP_STATUS_NULL_POINTER) return 2;
    if (osp_last_error_message()[0] == '\0') return 3;
    double series[40], feats[64];
    for (int t = 0; t < 40; t++) series[t] = 5.0 + t * 0.25 + (t % 3);
    if (osp_feature_count() > 64) return 4;
    if (osp_extract_features(series, 40, 1, feats) != OSP_STATUS_OK) return 5;
    OspModel *model = NULL;
    if (osp_model_from_json("not json", &model) != OSP_STATUS_MODEL_ERROR || model != NULL) return 6;
    osp_model_free(model);
    printf("%s %.6f\n", osp_feature_name(0), feats[0]);
    return 0;
}
"#,
    )
    .unwrap();
    let bin = dir.path().join("smoke");
    let status = std::process::Command::new(&cc)
        .arg(&src)
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .unwrap();
    assert!(status.success(), "C compilation failed");
    let out = std::process::Command::new(&bin).output().unwrap();
    assert!(
        out.status.success(),
        "smoke program exited with {:?}",
        out.status.code()
    );
    assert_eq!(
        String::from_utf8_lossy(&out.stdout).trim(),
        "length 40.000000"
    );
}
