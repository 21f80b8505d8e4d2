mod common;

use common::*;
use interflow::metrics::{epe, fl_all, psnr_f64, ssim, SsimConfig, PSNR_CAP_DB};
use interflow::{FlowField, Plane};
use rand::Rng;

#[test]
fn ssim_matches_sliding_window_reference() {
    let mut r = rng(11);
    for case in 0..20 {
        let (w, h) = (r.random_range(11..40), r.random_range(11..32));
        let a = random_plane(&mut r, w, h);
        let noise = random_plane(&mut r, w, h);
        let mix: f32 = r.random_range(0.0..1.0);
        let b = Plane::new(w, h, a.data.iter().zip(&noise.data).map(|(x, n)| (1.0 - mix) * x + mix * n).collect())
            .unwrap();
        let cfg = SsimConfig {
            window_size: [3, 5, 7, 11][case % 4],
            gaussian_sigma: r.random_range(0.8..2.0),
            ..SsimConfig::default()
        }
        .with_range(r.random_range(0.5..2.0));
        let got = ssim(&a, &b, &cfg).unwrap();
        let want = naive_ssim(&a, &b, &cfg);
        assert!((got - want).abs() < 1e-6, "case {case}: {got} vs {want}");
    }
}

#[test]
fn epe_and_fl_all_match_pixelwise_reference() {
    let mut r = rng(12);
    for case in 0..20 {
        let (w, h) = (r.random_range(1..30), r.random_range(1..30));
        let gt = random_flow(&mut r, w, h, 20.0);
        let pred = random_flow(&mut r, w, h, 20.0);
        let (e, f) = (epe(&pred, &gt).unwrap(), fl_all(&pred, &gt).unwrap());
        assert!((e - naive_epe(&pred, &gt)).abs() < 1e-6, "case {case}");
        assert!((f - naive_fl_all(&pred, &gt)).abs() < 1e-6, "case {case}");
    }
}

#[test]
fn fl_all_needs_both_thresholds() {
    let gt = FlowField::constant(3, 1, 100.0, 0.0);
    // 4 px off a 100 px vector: over 3 px but under 5 %
    let pred = FlowField::constant(3, 1, 104.0, 0.0);
    assert_eq!(fl_all(&pred, &gt).unwrap(), 0.0);
    let pred = FlowField::constant(3, 1, 106.0, 0.0);
    assert_eq!(fl_all(&pred, &gt).unwrap(), 100.0);
}

#[test]
fn psnr_of_uniform_tenth_error_is_twenty_db() {
    let target: Vec<f64> = (0..100).map(|i| 0.8 * i as f64 / 99.0).collect();
    let pred: Vec<f64> = target.iter().map(|t| t + 0.1).collect();
    let p = psnr_f64(&pred, &target, 1.0).unwrap();
    assert!((p.db - 20.0).abs() < 1e-9, "{}", p.db);
    assert!(!p.capped);
    assert_eq!(psnr_f64(&target, &target, 1.0).unwrap().db, PSNR_CAP_DB);
}
