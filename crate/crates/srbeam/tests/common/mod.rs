#![allow(dead_code)]

use srbeam::model::{ChannelSet, NetworkInstance, ScheduleFrame};
use srbeam::model::{CVec, C64};

pub const ETA: f64 = 0.8;
pub const NOISE: f64 = 1e-3;
pub const K: f64 = 10.0;
pub const T: f64 = 10.0;

/// One antenna, one device, unit channels, one EHS and one MTI slot.
pub fn scalar_instance(c: f64) -> (NetworkInstance, ScheduleFrame) {
    let ch = ChannelSet::new(vec![CVec::from_element(1, C64::new(1.0, 0.0))], vec![C64::new(1.0, 0.0)]).unwrap();
    let mut inst = NetworkInstance::uniform(ch, vec![c], ETA, NOISE, K, T).unwrap();
    inst.slot_count = 2;
    (inst, ScheduleFrame::new(2, vec![vec![1]]).unwrap())
}

/// Rate of the scalar link with harvest energy `e0`, MTI energy `e1`, MTI time `t1`.
fn rate(t1: f64, e0: f64, e1: f64) -> f64 {
    let snr = ETA * K * e0 * e1 / (t1 * t1 * NOISE);
    t1 / K * snr.ln_1p() / std::f64::consts::LN_2
}

fn grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| lo + (hi - lo) * (k as f64 + 1.0) / n as f64).collect()
}

/// Exhaustive search over (τ0, τ1, E0, E1) followed by shrinking re-grids
/// centred on the incumbent.
///
/// Returns the least energy among feasible grid points, so it bounds the
/// optimum from above, and the number of grid points visited.
pub fn scalar_oracle(c: f64) -> (f64, u64) {
    let full = [T, T, 0.5, 0.5];
    let (mut lo, mut hi) = ([0.0; 4], full);
    let mut best = (f64::INFINITY, [0.0; 4]);
    let mut visited = 0u64;
    let mut half = [0.0; 4];
    for round in 0..200 {
        let n = if round == 0 { 200 } else { 25 };
        let g: Vec<Vec<f64>> = (0..4).map(|d| grid(lo[d], hi[d], n)).collect();
        visited += (n as u64).pow(4);
        for &t1 in &g[1] {
            let room = g[0].iter().copied().find(|t0| t0 + t1 <= T);
            let Some(t0) = room else { continue };
            for &e0 in &g[2] {
                for &e1 in &g[3] {
                    if e0 + e1 < best.0 && rate(t1, e0, e1) >= c {
                        best = (e0 + e1, [t0, t1, e0, e1]);
                    }
                }
            }
        }
        if !best.0.is_finite() {
            break;
        }
        // τ0 only enters through the frame constraint, so its range stays whole
        for d in 1..4 {
            half[d] = if round == 0 { 10.0 * full[d] / n as f64 } else { 0.7 * half[d] };
            lo[d] = (best.1[d] - half[d]).max(0.0);
            hi[d] = (best.1[d] + half[d]).min(full[d]);
        }
    }
    (best.0, visited)
}
