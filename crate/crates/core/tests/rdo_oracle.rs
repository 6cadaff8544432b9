use msr_core::rdo::{
    argmin_cost, bitrate_saving_at_matched_quality, bitrate_saving_with_axis, emit, parse,
    quality_gain_at_matched_rate, QualityMetric, RDCurve, RateAxis, RatePoint, EmitFormat, RdoError,
};

fn curve(name: &str, pts: &[(u64, f64)]) -> RDCurve {
    RDCurve::from_points(name, pts.iter().map(|&(r, p)| RatePoint::synthetic(r, p, p / 50.0)).collect()).unwrap()
}

// Gain is 1 - (r-100)/100 on [100, 200] and (r-200)/100 on [200, 400].
// Sampled at r = 100 + 3k, k = 0..=100: the sum is 17.17 + 67.67 = 84.84,
// so the mean is 0.84 and the maximum is 2 at r = 400.
#[test]
fn three_point_gain_matches_hand_solution() {
    let reference = curve("ref", &[(100, 30.0), (200, 34.0), (400, 36.0)]);
    let test = curve("test", &[(100, 31.0), (200, 34.0), (400, 38.0)]);
    let g = quality_gain_at_matched_rate(&reference, &test, QualityMetric::Psnr).unwrap();
    assert!((g.mean - 0.84).abs() <= 1e-9, "{}", g.mean);
    assert!((g.max - 2.0).abs() <= 1e-9);
    assert_eq!((g.lo, g.hi, g.samples), (100.0, 400.0, 101));
}

// Reference rate r(Q) = 100 + 25 (Q - 30) on [30, 34]; test reaches the same
// quality with r(Q) - 50. Saving 50 / r(Q) averaged over the 101-point grid.
#[test]
fn three_point_saving_matches_hand_solution() {
    let reference = curve("ref", &[(100, 30.0), (150, 32.0), (200, 34.0)]);
    let test = curve("test", &[(50, 30.0), (100, 32.0), (150, 34.0)]);
    let s = bitrate_saving_at_matched_quality(&reference, &test, QualityMetric::Psnr).unwrap();
    let oracle: f64 = (0..=100).map(|k| 50.0 / (100.0 + k as f64) * 100.0).sum::<f64>() / 101.0;
    assert!((s.mean - oracle).abs() <= 1e-9);
    assert!((s.max - 50.0).abs() <= 1e-9);
}

#[test]
fn self_comparison_is_neutral() {
    let c = curve("c", &[(1000, 28.0), (2500, 31.5), (7000, 36.0), (9000, 36.2)]);
    for axis in [RateAxis::Linear, RateAxis::Log] {
        let s = bitrate_saving_with_axis(&c, &c, QualityMetric::Psnr, axis).unwrap();
        assert!(s.mean.abs() <= 1e-12 && s.max.abs() <= 1e-12);
    }
    let g = quality_gain_at_matched_rate(&c, &c, QualityMetric::Ssim).unwrap();
    assert_eq!(g.mean, 0.0);
}

#[test]
fn half_rate_and_plus_one_db() {
    let pts = [(1000, 28.0), (2400, 31.5), (7000, 36.0)];
    let reference = curve("ref", &pts);
    let half = curve("half", &pts.map(|(r, p)| (r / 2, p)));
    let s = bitrate_saving_at_matched_quality(&reference, &half, QualityMetric::Psnr).unwrap();
    assert_eq!((s.mean, s.max), (50.0, 50.0));
    let up = curve("up", &pts.map(|(r, p)| (r, p + 1.0)));
    let g = quality_gain_at_matched_rate(&reference, &up, QualityMetric::Psnr).unwrap();
    assert!((g.mean - 1.0).abs() <= 1e-12 && (g.max - 1.0).abs() <= 1e-12);
}

#[test]
fn disjoint_rates_report_no_overlap() {
    let a = curve("a", &[(100, 30.0), (200, 31.0)]);
    let b = curve("b", &[(300, 32.0), (400, 33.0)]);
    assert!(matches!(quality_gain_at_matched_rate(&a, &b, QualityMetric::Psnr), Err(RdoError::NoOverlap(_))));
}

#[test]
fn argmin_picks_lowest_cost() {
    // costs: 10 + 0.5*4 = 12, 6 + 0.5*10 = 11, 1 + 0.5*30 = 16
    assert_eq!(argmin_cost(&[(10.0, 4.0), (6.0, 10.0), (1.0, 30.0)], 0.5).unwrap(), Some(1));
    assert_eq!(argmin_cost(&[(10.0, 4.0), (6.0, 10.0), (1.0, 30.0)], 0.0).unwrap(), Some(2));
    assert_eq!(argmin_cost(&[], 1.0).unwrap(), None);
    assert!(argmin_cost(&[(1.0, 1.0)], -1.0).is_err());
}

#[test]
fn csv_and_json_round_trip() {
    let curves = vec![
        curve("a", &[(100, 30.125), (200, 31.0)]),
        curve("b", &[(150, 29.0), (500, 35.5)]),
    ];
    for fmt in [EmitFormat::Csv, EmitFormat::Json] {
        let bytes = emit(&curves, fmt).unwrap();
        let back = parse(&bytes, fmt).unwrap();
        assert_eq!(back, curves);
        assert_eq!(emit(&back, fmt).unwrap(), bytes);
    }
}
