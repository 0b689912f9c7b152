use std::collections::BTreeMap;
use std::ffi::{CStr, CString};
use std::ptr;

use candle_core::{DType, Device};

use ccd::model::{save_checkpoint, AnticipationModel, ArchConfig, Modality, ModelConfig};
use ccd_ffi::*;

fn last_error() -> String {
    let p = ccd_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn version_is_a_c_string() {
    let v = unsafe { CStr::from_ptr(ccd_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn bleu_through_the_c_interface() {
    let cand = [5u32, 6, 7, 8, 9, 1, 2];
    let cand_lens = [5usize, 2];
    let refs = [5u32, 6, 7, 8, 9, 1, 2, 3];
    let ref_lens = [5usize, 3];
    let mut score = -1.0;
    let s = unsafe { ccd_bleu(cand.as_ptr(), cand_lens.as_ptr(), refs.as_ptr(), ref_lens.as_ptr(), 2, 4, &mut score) };
    assert_eq!(s, CcdStatus::CCD_OK);
    let want = ccd::eval::bleu(&[vec![5, 6, 7, 8, 9], vec![1, 2]], &[vec![5, 6, 7, 8, 9], vec![1, 2, 3]], 4).unwrap();
    assert_eq!(score, want);

    let s = unsafe { ccd_bleu(cand.as_ptr(), cand_lens.as_ptr(), refs.as_ptr(), ref_lens.as_ptr(), 2, 7, &mut score) };
    assert_eq!(s, CcdStatus::CCD_ERR_INPUT);
    assert!(last_error().contains("max_n"));
    let s = unsafe { ccd_bleu(ptr::null(), cand_lens.as_ptr(), refs.as_ptr(), ref_lens.as_ptr(), 2, 4, &mut score) };
    assert_eq!(s, CcdStatus::CCD_ERR_NULL);
}

#[test]
fn losses_through_the_c_interface() {
    let z = [1.0f64, 2.0, 1.0, 2.0];
    let mut loss = -1.0;
    assert_eq!(unsafe { ccd_ccd_loss(z.as_ptr(), z.as_ptr(), 2, 2, 0.2, &mut loss) }, CcdStatus::CCD_OK);
    assert!((loss - 0.8).abs() < 1e-12);
    let eye = [1.0f64, 0.0, 0.0, 1.0];
    assert_eq!(unsafe { ccd_ccd_loss(eye.as_ptr(), eye.as_ptr(), 2, 2, 0.5, &mut loss) }, CcdStatus::CCD_OK);
    assert_eq!(loss, 0.0);
    let zero = [0.0f64, 0.0, 1.0, 0.0];
    assert_eq!(unsafe { ccd_ccd_loss(zero.as_ptr(), eye.as_ptr(), 2, 2, 0.2, &mut loss) }, CcdStatus::CCD_ERR_INPUT);
    assert!(last_error().contains("zero norm"));
    assert_eq!(unsafe { ccd_ccd_loss(z.as_ptr(), z.as_ptr(), 0, 2, 0.2, &mut loss) }, CcdStatus::CCD_ERR_INPUT);

    assert_eq!(unsafe { ccd_feature_l2(z.as_ptr(), eye.as_ptr(), 2, 2, &mut loss) }, CcdStatus::CCD_OK);
    assert!((loss - (0.0 + 4.0 + 1.0 + 1.0) / 4.0).abs() < 1e-12);
}

#[test]
fn corpus_and_model_handles() {
    let mut corpus: *mut CcdCorpus = ptr::null_mut();
    assert_eq!(unsafe { ccd_corpus_generate(3, 40, &mut corpus) }, CcdStatus::CCD_OK);
    let mut n = 0usize;
    let mut total = 0;
    for split in [CCD_SPLIT_TRAIN, CCD_SPLIT_VAL, CCD_SPLIT_TEST] {
        assert_eq!(unsafe { ccd_corpus_num_samples(corpus, split, &mut n) }, CcdStatus::CCD_OK);
        total += n;
    }
    assert_eq!(total, 40);
    assert_eq!(unsafe { ccd_corpus_num_samples(corpus, 9, &mut n) }, CcdStatus::CCD_ERR_INPUT);

    // Build a checkpoint for this corpus with the Rust API, then load it through C.
    let generated = ccd::data::generate_corpus(3, 40, &Default::default()).unwrap();
    let arch = ArchConfig {
        d: 8,
        heads: 2,
        temporal_layers: 1,
        output_layers: 1,
        ffn_mult: 2,
        ..ArchConfig::default()
    };
    let cfg = ModelConfig::for_corpus(arch, Modality::Visual, &generated).unwrap();
    let model = AnticipationModel::new(cfg, 0, DType::F32, &Device::Cpu).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    save_checkpoint(&model, &generated.vocab.hash(), BTreeMap::new(), &path).unwrap();
    let cpath = CString::new(path.to_str().unwrap()).unwrap();

    let mut handle: *mut CcdModel = ptr::null_mut();
    assert_eq!(unsafe { ccd_model_load(cpath.as_ptr(), corpus, &mut handle) }, CcdStatus::CCD_OK);
    let (mut b1, mut b4) = (-1.0, -1.0);
    assert_eq!(
        unsafe { ccd_model_evaluate(handle, corpus, CCD_SPLIT_TEST, &mut b1, &mut b4) },
        CcdStatus::CCD_OK
    );
    let want = ccd::eval::evaluate_next_step(&model, &generated, ccd::data::Split::Test, 32).unwrap();
    assert_eq!((b1, b4), (want.bleu1, want.bleu4));
    unsafe { ccd_model_free(handle) };

    let mut other: *mut CcdCorpus = ptr::null_mut();
    assert_eq!(unsafe { ccd_corpus_generate(4, 20, &mut other) }, CcdStatus::CCD_OK);
    let mut h2: *mut CcdModel = ptr::null_mut();
    assert_eq!(unsafe { ccd_model_load(cpath.as_ptr(), other, &mut h2) }, CcdStatus::CCD_ERR_CONFIG);
    assert!(h2.is_null());

    let missing = CString::new(dir.path().join("nope.ckpt").to_str().unwrap()).unwrap();
    assert_eq!(unsafe { ccd_model_load(missing.as_ptr(), ptr::null(), &mut h2) }, CcdStatus::CCD_ERR_IO);
    assert_eq!(unsafe { ccd_corpus_load(missing.as_ptr(), &mut other) }, CcdStatus::CCD_ERR_IO);
    assert_eq!(unsafe { ccd_model_evaluate(ptr::null(), corpus, 0, &mut b1, &mut b4) }, CcdStatus::CCD_ERR_NULL);

    unsafe {
        ccd_corpus_free(corpus);
        ccd_corpus_free(other);
        ccd_corpus_free(ptr::null_mut());
    }
}

#[test]
fn header_declares_the_interface() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/ccd.h")).unwrap();
    for name in [
        "CCD_H",
        "typedef struct CcdCorpus CcdCorpus",
        "typedef struct CcdModel CcdModel",
        "CCD_ERR_PANIC",
        "ccd_last_error",
        "ccd_bleu",
        "ccd_ccd_loss",
        "ccd_model_evaluate",
        "CCD_SPLIT_TEST",
    ] {
        assert!(header.contains(name), "{name}");
    }
}
