//! Fixtures shared by the benchmarks.

use srbeam::model::NetworkInstance;
use srbeam::scenarios::{build_instance, SceneParams};

/// Seeded scene with `n` antennas and `i` devices at rate target `c`.
pub fn scene(n: usize, i: usize, c: f64, seed: u64) -> NetworkInstance {
    let p = SceneParams { antennas: n, devices: i, ..SceneParams::default() };
    build_instance(&p, c, seed).expect("valid scene")
}
