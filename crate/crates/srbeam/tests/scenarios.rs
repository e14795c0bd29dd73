use srbeam::scenarios::{
    draw_channels, draw_channels_with_distances, pathloss_gain, Geometry, Placement, BS_ANTENNA_GAIN_DB,
    PATHLOSS_EXPONENT,
};

const DRAWS: u64 = 100_000;

#[test]
fn small_scale_fading_has_unit_power() {
    let geo = Geometry::default();
    let (mut sh, mut sg) = (0.0, 0.0);
    for seed in 0..DRAWS {
        let (ch, d) = draw_channels_with_distances(&geo, 1, 1, seed).unwrap();
        sh += ch.h[0][0].norm_sqr() / pathloss_gain(d[0].to_bs, PATHLOSS_EXPONENT, BS_ANTENNA_GAIN_DB).unwrap();
        sg += ch.g[0].norm_sqr() / pathloss_gain(d[0].to_sue, PATHLOSS_EXPONENT, 0.0).unwrap();
    }
    let (mh, mg) = (sh / DRAWS as f64, sg / DRAWS as f64);
    assert!((mh - 1.0).abs() < 0.02, "{mh}");
    assert!((mg - 1.0).abs() < 0.02, "{mg}");
}

#[test]
fn mean_gain_falls_with_cube_of_distance() {
    // log-spaced distance bins around the SUE, mean |g|² per bin
    let geo = Geometry::default();
    let edges: Vec<f64> = (0..=8).map(|k| 10f64 * 10f64.powf(k as f64 / 8.0)).collect();
    let mut sum = vec![0.0; 8];
    let mut logd = vec![0.0; 8];
    let mut cnt = vec![0usize; 8];
    for seed in 0..DRAWS {
        let (ch, d) = draw_channels_with_distances(&geo, 1, 1, seed).unwrap();
        let r = d[0].to_sue;
        if let Some(b) = edges.windows(2).position(|w| r >= w[0] && r < w[1]) {
            sum[b] += ch.g[0].norm_sqr();
            logd[b] += r.ln();
            cnt[b] += 1;
        }
    }
    let pts: Vec<(f64, f64)> =
        (0..8).filter(|&b| cnt[b] > 500).map(|b| (logd[b] / cnt[b] as f64, (sum[b] / cnt[b] as f64).ln())).collect();
    assert!(pts.len() >= 6);
    let n = pts.len() as f64;
    let (mx, my) = (pts.iter().map(|p| p.0).sum::<f64>() / n, pts.iter().map(|p| p.1).sum::<f64>() / n);
    let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
    assert!((slope + 3.0).abs() < 0.1, "slope {slope}");
}

#[test]
fn larger_draws_extend_smaller_ones() {
    let geo = Geometry::default();
    let small = draw_channels(&geo, 2, 3, 11).unwrap();
    let big = draw_channels(&geo, 4, 5, 11).unwrap();
    for i in 0..3 {
        assert_eq!(small.g[i], big.g[i]);
        assert_eq!(small.h[i][0], big.h[i][0]);
        assert_eq!(small.h[i][1], big.h[i][1]);
    }
}

#[test]
fn placements_order_distances() {
    let mean_bs = |p: Placement| {
        let geo = Geometry::new(200.0, p).unwrap();
        (0..2000).map(|s| draw_channels_with_distances(&geo, 1, 1, s).unwrap().1[0].to_bs).sum::<f64>() / 2000.0
    };
    let (a, b, c) = (mean_bs(Placement::NearBs), mean_bs(Placement::Mid), mean_bs(Placement::NearSue));
    assert!(a < b && b < c, "{a} {b} {c}");
}
