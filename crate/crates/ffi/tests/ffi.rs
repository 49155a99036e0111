use std::ffi::{CStr, CString};
use std::ptr;

use debiasrank_ffi::*;

fn tiny_pairs() -> (Vec<u32>, Vec<u32>) {
    let mut us = Vec::new();
    let mut is = Vec::new();
    for u in 0..30u32 {
        for k in 0..6u32 {
            us.push(u);
            is.push((u * 3 + k * 7) % 40);
        }
    }
    (us, is)
}

unsafe fn dataset() -> *mut DrDataset {
    let (us, is) = tiny_pairs();
    let mut ds = ptr::null_mut();
    let rc = dr_dataset_from_pairs(30, 40, us.as_ptr(), is.as_ptr(), us.len(), 7, &mut ds);
    assert_eq!(rc, DR_OK);
    ds
}

unsafe fn last_error() -> String {
    let p = dr_last_error();
    assert!(!p.is_null());
    CStr::from_ptr(p).to_string_lossy().into_owned()
}

fn small_options(loss: u32) -> DrTrainOptions {
    let mut o = unsafe {
        let mut o = std::mem::zeroed();
        assert_eq!(dr_train_options_default(&mut o), DR_OK);
        o
    };
    o.loss = loss;
    o.dim = 8;
    o.epochs = 5;
    o.batch_size = 32;
    o.lr = 0.01;
    o
}

#[test]
fn dataset_round_trip_and_counts() {
    unsafe {
        let ds = dataset();
        assert_eq!(dr_dataset_num_users(ds), 30);
        assert_eq!(dr_dataset_num_items(ds), 40);
        // two held-out items per user
        assert_eq!(dr_dataset_num_train(ds), 30 * 4);
        dr_dataset_free(ds);
        assert_eq!(dr_dataset_num_users(ptr::null()), 0);
    }
}

#[test]
fn train_score_top_k_evaluate() {
    unsafe {
        let ds = dataset();
        let opts = small_options(DR_LOSS_DPR);
        let mut model = ptr::null_mut();
        assert_eq!(dr_train(ds, &opts, &mut model), DR_OK);
        assert!(dr_model_best_epoch(model) >= 1);

        let mut s = f64::NAN;
        assert_eq!(dr_model_score(model, 0, 0, &mut s), DR_OK);
        assert!(s.is_finite());

        let mut items = [u32::MAX; 10];
        let mut n = 0usize;
        assert_eq!(dr_model_top_k(model, ds, 0, 10, items.as_mut_ptr(), &mut n), DR_OK);
        assert_eq!(n, 10);
        let mut scores = Vec::new();
        for &i in &items[..n] {
            let mut v = 0.0;
            dr_model_score(model, 0, i, &mut v);
            scores.push(v);
        }
        assert!(scores.windows(2).all(|w| w[0] >= w[1]));

        let mut rep = DrReport::default();
        assert_eq!(dr_evaluate(model, ds, 10, DR_PROTOCOL_FULL_RANK, 0, 0, &mut rep), DR_OK);
        assert_eq!(rep.users_evaluated, 30);
        assert!((0.0..=1.0).contains(&rep.recall));
        assert!(rep.ndcg <= rep.recall + 1e-12);

        dr_model_free(model);
        dr_dataset_free(ds);
    }
}

#[test]
fn save_and_load_preserve_scores() {
    unsafe {
        let ds = dataset();
        let opts = small_options(DR_LOSS_BPR);
        let mut model = ptr::null_mut();
        assert_eq!(dr_train(ds, &opts, &mut model), DR_OK);
        let dir = tempfile::tempdir().unwrap();
        let path = CString::new(dir.path().join("m.json").to_str().unwrap()).unwrap();
        assert_eq!(dr_model_save(model, path.as_ptr()), DR_OK);
        let mut back = ptr::null_mut();
        assert_eq!(dr_model_load(path.as_ptr(), &mut back), DR_OK);
        for (u, i) in [(0, 0), (5, 17), (29, 39)] {
            let (mut a, mut b) = (0.0, 0.0);
            dr_model_score(model, u, i, &mut a);
            dr_model_score(back, u, i, &mut b);
            assert_eq!(a, b);
        }
        dr_model_free(back);
        dr_model_free(model);
        dr_dataset_free(ds);
    }
}

#[test]
fn errors_set_codes_and_messages() {
    unsafe {
        let mut ds = ptr::null_mut();
        assert_eq!(dr_dataset_load(ptr::null(), &mut ds), DR_ERR_NULL);
        assert!(last_error().contains("null"));

        let missing = CString::new("/nonexistent/split/dir").unwrap();
        assert_eq!(dr_dataset_load(missing.as_ptr(), &mut ds), DR_ERR_IO);
        assert!(ds.is_null());

        let us = [0u32, 5];
        let is = [0u32, 1];
        let rc = dr_dataset_from_pairs(2, 2, us.as_ptr(), is.as_ptr(), 2, 0, &mut ds);
        assert_eq!(rc, DR_ERR_INVALID_ARGUMENT);
        assert!(last_error().contains('5'));

        let good = dataset();
        let mut opts = small_options(99);
        let mut model = ptr::null_mut();
        assert_eq!(dr_train(good, &opts, &mut model), DR_ERR_INVALID_ARGUMENT);
        assert!(last_error().contains("loss"));
        opts.loss = DR_LOSS_BPR;
        assert_eq!(dr_train(good, &opts, &mut model), DR_OK);

        let mut s = 0.0;
        assert_eq!(dr_model_score(model, 1000, 0, &mut s), DR_ERR_INVALID_ARGUMENT);
        let mut rep = DrReport::default();
        assert_eq!(dr_evaluate(model, good, 10, 42, 0, 0, &mut rep), DR_ERR_INVALID_ARGUMENT);
        dr_model_free(model);
        dr_dataset_free(good);
    }
}

#[test]
fn version_is_package_version() {
    let v = unsafe { CStr::from_ptr(dr_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/debiasrank.h")).unwrap();
    for sym in [
        "dr_last_error",
        "dr_version",
        "dr_dataset_load",
        "dr_dataset_from_pairs",
        "dr_dataset_num_users",
        "dr_dataset_num_items",
        "dr_dataset_num_train",
        "dr_dataset_free",
        "dr_train_options_default",
        "dr_train",
        "dr_model_load",
        "dr_model_save",
        "dr_model_best_epoch",
        "dr_model_score",
        "dr_model_top_k",
        "dr_evaluate",
        "dr_model_free",
        "typedef struct DrDataset DrDataset",
        "typedef struct DrModel DrModel",
        "#define DR_ERR_PANIC",
        "#define DR_LOSS_MFDU",
    ] {
        assert!(header.contains(sym), "missing {sym}");
    }
}
