use std::ffi::CStr;
use std::ptr;

use sinksort::sinkhorn::soft_rank_sort;
use sinksort::{DiscreteMeasure, SoftSortConfig, TargetDescriptor};
use sinksort_ffi::*;

fn batch() -> (Vec<f64>, usize, usize) {
    let x = vec![
        0.38, 4.0, -2.0, 6.0, -9.0, //
        1.0, 1.0, 1.0, 1.0, 1.0, //
        -0.5, 0.25, 3.0, 2.0, -1.5, //
        5.0, 4.0, 3.0, 2.0, 1.0,
    ];
    (x, 4, 5)
}

unsafe fn take(out: *mut SinksortArray) -> (usize, usize, Vec<f64>) {
    let rows = sinksort_array_rows(out);
    let cols = sinksort_array_cols(out);
    let data = std::slice::from_raw_parts(sinksort_array_data(out), rows * cols).to_vec();
    sinksort_array_free(out);
    (rows, cols, data)
}

#[test]
fn batched_matches_core() {
    let (x, b, n) = batch();
    let before = x.clone();
    let weights = [0.25, 0.1, 0.65];
    unsafe {
        let opts = sinksort_options_new();
        assert_eq!(sinksort_options_set_epsilon(opts, 1e-1), SinksortStatus::Ok);
        let mut out = ptr::null_mut();
        let st = sinksort_s_rank_batched(opts, x.as_ptr(), b, n, weights.as_ptr(), 3, &mut out);
        assert_eq!(st, SinksortStatus::Ok);
        let (rows, cols, ranks) = take(out);
        assert_eq!((rows, cols), (b, n));
        let st = sinksort_s_sort_batched(opts, x.as_ptr(), b, n, weights.as_ptr(), 3, &mut out);
        assert_eq!(st, SinksortStatus::Ok);
        let (rows, cols, sorts) = take(out);
        assert_eq!((rows, cols), (b, 3));
        sinksort_options_free(opts);

        let cfg = SoftSortConfig::default().with_epsilon(1e-1);
        let target = TargetDescriptor::grid_with_weights(weights.to_vec()).unwrap();
        for (s, row) in x.chunks(n).enumerate() {
            let r = soft_rank_sort(
                &DiscreteMeasure::uniform(row.to_vec()).unwrap(),
                &target,
                &cfg,
            )
            .unwrap();
            for (a, c) in ranks[s * n..(s + 1) * n].iter().zip(&r.s_ranks) {
                assert!((a - c).abs() <= 1e-12);
            }
            for (a, c) in sorts[s * 3..(s + 1) * 3].iter().zip(&r.s_sorts) {
                assert!((a - c).abs() <= 1e-12);
            }
        }
    }
    assert_eq!(x, before);
}

#[test]
fn default_options_and_square_target() {
    let (x, b, n) = batch();
    unsafe {
        let mut out = ptr::null_mut();
        let st = sinksort_s_rank_batched(ptr::null(), x.as_ptr(), b, n, ptr::null(), 0, &mut out);
        assert_eq!(st, SinksortStatus::Ok);
        let (_, cols, ranks) = take(out);
        assert_eq!(cols, n);
        // first row is the worked example
        let expected = [3.0, 4.0, 2.0, 5.0, 1.0];
        for (a, e) in ranks[..n].iter().zip(expected) {
            assert!((a - e).abs() < 0.2, "{a} vs {e}");
        }
    }
}

#[test]
fn empty_batch_is_a_shape_error() {
    let x: [f64; 0] = [];
    unsafe {
        let mut out = ptr::null_mut();
        let st = sinksort_s_sort_batched(ptr::null(), x.as_ptr(), 0, 5, ptr::null(), 0, &mut out);
        assert_eq!(st, SinksortStatus::Shape);
        assert!(out.is_null());
        let msg = CStr::from_ptr(sinksort_last_error()).to_str().unwrap();
        assert!(msg.contains("empty"), "{msg}");
    }
}

#[test]
fn error_codes() {
    let x = [1.0, 2.0, 3.0];
    let w = [0.2, 0.3, 0.5];
    unsafe {
        let opts = sinksort_options_new();
        assert_eq!(
            sinksort_options_set_epsilon(opts, -1.0),
            SinksortStatus::InvalidArgument
        );
        assert_eq!(
            sinksort_options_set_squash(opts, 7),
            SinksortStatus::InvalidArgument
        );
        assert_eq!(
            sinksort_options_set_mode(opts, SinksortMode::Multiplicative as i32),
            SinksortStatus::Ok
        );
        assert_eq!(sinksort_options_set_max_iters(opts, 1), SinksortStatus::Ok);
        assert_eq!(sinksort_options_set_epsilon(opts, 1e-3), SinksortStatus::Ok);
        let mut out = ptr::null_mut();
        let st = sinksort_s_rank_batched(opts, x.as_ptr(), 1, 3, w.as_ptr(), 3, &mut out);
        assert_eq!(st, SinksortStatus::NotConverged);
        assert_eq!(
            sinksort_options_set_require_convergence(opts, 0),
            SinksortStatus::Ok
        );
        let st = sinksort_s_rank_batched(opts, x.as_ptr(), 1, 3, w.as_ptr(), 3, &mut out);
        assert_eq!(st, SinksortStatus::Ok);
        sinksort_array_free(out);
        let st = sinksort_s_rank_batched(opts, ptr::null(), 1, 3, ptr::null(), 0, &mut out);
        assert_eq!(st, SinksortStatus::NullPointer);
        sinksort_options_free(opts);
        assert!(CStr::from_ptr(sinksort_last_error())
            .to_str()
            .unwrap()
            .contains("null"));
        assert_eq!(
            CStr::from_ptr(sinksort_version()).to_str().unwrap(),
            sinksort::VERSION
        );
    }
}

#[test]
fn quantile_and_topk() {
    let x = [0.38, 4.0, -2.0, 6.0, -9.0];
    let mut q = 0.0;
    unsafe {
        assert_eq!(
            sinksort_soft_quantile(ptr::null(), x.as_ptr(), 5, 0.3, 0.1, &mut q),
            SinksortStatus::Ok
        );
        let spec = sinksort::losses::QuantileSpec::new(0.3, 0.1, 1e-2).unwrap();
        assert!((q - sinksort::losses::soft_quantile(&x, &spec).unwrap()).abs() <= 1e-12);
        assert_eq!(
            sinksort_soft_quantile(ptr::null(), x.as_ptr(), 5, 0.3, 0.7, &mut q),
            SinksortStatus::InvalidArgument
        );
        let mut loss = -1.0;
        let opts = sinksort_options_new();
        assert_eq!(sinksort_options_set_epsilon(opts, 1e-3), SinksortStatus::Ok);
        assert_eq!(
            sinksort_soft_topk_loss(opts, x.as_ptr(), 5, 3, 1, &mut loss),
            SinksortStatus::Ok
        );
        sinksort_options_free(opts);
        assert!((0.0..0.05).contains(&loss), "{loss}");
        assert_eq!(
            sinksort_soft_topk_loss(ptr::null(), x.as_ptr(), 5, 5, 1, &mut loss),
            SinksortStatus::InvalidArgument
        );
    }
}

#[test]
fn header_declares_every_export() {
    let header =
        std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/sinksort.h"))
            .unwrap();
    let src = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/src/lib.rs")).unwrap();
    let exports: Vec<&str> = src
        .lines()
        .filter_map(|l| {
            l.trim()
                .strip_prefix("pub unsafe extern \"C\" fn ")
                .or(l.trim().strip_prefix("pub extern \"C\" fn "))
        })
        .map(|l| l.split('(').next().unwrap())
        .collect();
    assert!(exports.len() >= 15);
    for name in exports {
        assert!(
            header.contains(&format!("{name}(")),
            "{name} missing from header"
        );
    }
}
