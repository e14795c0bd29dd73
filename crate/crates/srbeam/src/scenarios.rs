//! Scene construction: geometry, pathloss, fading, schedules and the
//! protocol efficiency comparison.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::convexify::Method;
use crate::error::{Error, Result};
use crate::model::{CVec, ChannelSet, NetworkInstance, ScheduleFrame, SolutionReport, C64};
use crate::sca::{run_method, AlgorithmConfig, ConvergenceTrace};

/// Receiver noise, -114 dBm in watts.
pub const RECEIVER_NOISE_W: f64 = 3.981_071_705_534_969e-15;
pub const PATHLOSS_EXPONENT: f64 = 3.0;
pub const BS_ANTENNA_GAIN_DB: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Placement {
    NearBs,
    Mid,
    NearSue,
    UniformWithin100mOfSue,
}

impl Placement {
    pub const ALL: [Placement; 4] =
        [Placement::NearBs, Placement::Mid, Placement::NearSue, Placement::UniformWithin100mOfSue];

    pub fn name(self) -> &'static str {
        match self {
            Placement::NearBs => "near_bs",
            Placement::Mid => "mid",
            Placement::NearSue => "near_sue",
            Placement::UniformWithin100mOfSue => "uniform_within_100m_of_sue",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown placement {s:?}")))
    }
}

/// BS at the origin, SUE on the positive x axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Geometry {
    pub bs_sue_distance: f64,
    pub placement: Placement,
}

impl Default for Geometry {
    fn default() -> Self {
        Self { bs_sue_distance: 200.0, placement: Placement::UniformWithin100mOfSue }
    }
}

/// Distances of one device to the BS and to the SUE.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeviceDistances {
    pub to_bs: f64,
    pub to_sue: f64,
}

const MIN_DISTANCE: f64 = 5.0;

impl Geometry {
    pub fn new(bs_sue_distance: f64, placement: Placement) -> Result<Self> {
        if !(bs_sue_distance > 2.0 * MIN_DISTANCE) {
            return Err(Error::InvalidArgument("BS-SUE distance too small".into()));
        }
        Ok(Self { bs_sue_distance, placement })
    }

    /// Random device position from `rng`.
    pub fn sample(&self, rng: &mut impl Rng) -> DeviceDistances {
        let d = self.bs_sue_distance;
        let sue = (d, 0.0);
        let polar = |c: (f64, f64), r: f64, a: f64| (c.0 + r * a.cos(), c.1 + r * a.sin());
        let pos = match self.placement {
            Placement::NearBs => {
                let r = 15.0 * rng.gen::<f64>().sqrt();
                polar((0.175 * d, 0.0), r, rng.gen_range(0.0..std::f64::consts::TAU))
            }
            Placement::Mid => {
                let r = 10.0 * rng.gen::<f64>().sqrt();
                polar((0.5 * d, 0.0), r, rng.gen_range(0.0..std::f64::consts::TAU))
            }
            Placement::NearSue => {
                // beside or behind the SUE
                let r = rng.gen_range(50.0..70.0);
                polar(sue, r, rng.gen_range(-0.5..0.5) * std::f64::consts::PI)
            }
            Placement::UniformWithin100mOfSue => loop {
                let r = 100.0 * rng.gen::<f64>().sqrt();
                let p = polar(sue, r, rng.gen_range(0.0..std::f64::consts::TAU));
                let to_sue = r;
                let to_bs = p.0.hypot(p.1);
                if p.0 <= d && to_sue >= MIN_DISTANCE && to_bs >= MIN_DISTANCE {
                    break p;
                }
            },
        };
        DeviceDistances { to_bs: pos.0.hypot(pos.1), to_sue: (pos.0 - sue.0).hypot(pos.1) }
    }
}

/// Linear power gain `10^(G/10)·d^(−exponent)` with a 1 m reference.
pub fn pathloss_gain(d: f64, exponent: f64, antenna_gain_db: f64) -> Result<f64> {
    if !(d > 0.0) {
        return Err(Error::InvalidArgument(format!("distance must be positive, got {d}")));
    }
    Ok(10f64.powf(antenna_gain_db / 10.0) * d.powf(-exponent))
}

fn device_rng(seed: u64, device: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(device as u64 + 1);
    rng
}

fn complex_gaussian(rng: &mut ChaCha8Rng, variance: f64) -> C64 {
    let s = (variance / 2.0).sqrt();
    let (a, b): (f64, f64) = (StandardNormal.sample(rng), StandardNormal.sample(rng));
    C64::new(a * s, b * s)
}

/// Positions and Rayleigh channels, device by device.
///
/// Each device owns a random stream, so the first `n` antennas and the first
/// `i` devices coincide across draws with larger `N` or `I`.
pub fn draw_channels_with_distances(
    geometry: &Geometry,
    n: usize,
    i: usize,
    seed: u64,
) -> Result<(ChannelSet, Vec<DeviceDistances>)> {
    if n == 0 || i == 0 {
        return Err(Error::InvalidArgument("need at least one antenna and one device".into()));
    }
    let mut h = Vec::with_capacity(i);
    let mut g = Vec::with_capacity(i);
    let mut dist = Vec::with_capacity(i);
    for dev in 0..i {
        let mut rng = device_rng(seed, dev);
        let d = geometry.sample(&mut rng);
        let vh = pathloss_gain(d.to_bs, PATHLOSS_EXPONENT, BS_ANTENNA_GAIN_DB)?;
        let vg = pathloss_gain(d.to_sue, PATHLOSS_EXPONENT, 0.0)?;
        g.push(complex_gaussian(&mut rng, vg));
        h.push(CVec::from_fn(n, |_, _| complex_gaussian(&mut rng, vh)));
        dist.push(d);
    }
    Ok((ChannelSet::new(h, g)?, dist))
}

pub fn draw_channels(geometry: &Geometry, n: usize, i: usize, seed: u64) -> Result<ChannelSet> {
    draw_channels_with_distances(geometry, n, i, seed).map(|r| r.0)
}

/// Consecutive disjoint MTI runs in device order; every other slot is EHS.
pub fn tsr_schedule(slots_per_device: &[usize], slot_count: usize) -> Result<ScheduleFrame> {
    let used: usize = slots_per_device.iter().sum();
    if used > slot_count {
        return Err(Error::Schedule(format!("{used} MTI slots requested, J = {slot_count}")));
    }
    let mut next = 0;
    let mut sets = Vec::with_capacity(slots_per_device.len());
    for &k in slots_per_device {
        sets.push((next..next + k).collect());
        next += k;
    }
    ScheduleFrame::new(slot_count, sets)
}

/// Scene parameters shared by the experiments.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneParams {
    pub antennas: usize,
    pub devices: usize,
    pub spreading_factor: f64,
    pub frame_length: f64,
    pub eta: f64,
    pub receiver_noise: f64,
    pub geometry: Geometry,
}

impl Default for SceneParams {
    fn default() -> Self {
        Self {
            antennas: 4,
            devices: 4,
            spreading_factor: 100.0,
            frame_length: 10.0,
            eta: 0.8,
            receiver_noise: RECEIVER_NOISE_W,
            geometry: Geometry::default(),
        }
    }
}

/// Instance with `J = I` and a common target.
pub fn build_instance(p: &SceneParams, target: f64, seed: u64) -> Result<NetworkInstance> {
    let ch = draw_channels(&p.geometry, p.antennas, p.devices, seed)?;
    let mut inst = NetworkInstance::uniform(
        ch,
        vec![target; p.devices],
        p.eta,
        p.receiver_noise,
        p.spreading_factor,
        p.frame_length,
    )?;
    inst.receiver_noise = p.receiver_noise;
    Ok(inst)
}

/// Equal frozen slots, device `i` transmitting in slot `i`, powers optimized.
pub fn tdma_baseline(
    inst: &NetworkInstance,
    cfg: &AlgorithmConfig,
) -> Result<(SolutionReport, ConvergenceTrace)> {
    inst.validate()?;
    let mut inst = inst.clone();
    inst.slot_count = inst.device_count;
    let sched = ScheduleFrame::one_slot_each(inst.device_count);
    let tau = vec![inst.frame_length / inst.slot_count as f64; inst.slot_count];
    run_method(&inst, &sched, cfg, Method::Cqr, Some(&tau))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolSpec {
    pub name: String,
    pub carrier_hz: f64,
    pub bandwidth_hz: f64,
    pub power_w: f64,
}

const PROTOCOL_TABLE: &str = include_str!("../data/protocols.txt");

/// Parses whitespace-separated rows `name carrier_hz bandwidth_hz power_w`;
/// `#` starts a comment.
pub fn parse_protocols(text: &str) -> Result<Vec<ProtocolSpec>> {
    let mut out = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        let num = |s: &str| -> Result<f64> {
            s.parse().map_err(|_| Error::Config(format!("line {}: bad number {s:?}", k + 1)))
        };
        if f.len() != 4 {
            return Err(Error::Config(format!("line {}: expected 4 fields", k + 1)));
        }
        let spec = ProtocolSpec {
            name: f[0].to_string(),
            carrier_hz: num(f[1])?,
            bandwidth_hz: num(f[2])?,
            power_w: num(f[3])?,
        };
        if !(spec.power_w > 0.0) || !(spec.bandwidth_hz > 0.0) {
            return Err(Error::Config(format!("line {}: power and bandwidth must be positive", k + 1)));
        }
        out.push(spec);
    }
    Ok(out)
}

pub fn load_protocols(path: &Path) -> Result<Vec<ProtocolSpec>> {
    parse_protocols(&std::fs::read_to_string(path)?)
}

/// The shipped table.
pub fn default_protocols() -> Vec<ProtocolSpec> {
    parse_protocols(PROTOCOL_TABLE).expect("shipped protocol table parses")
}

/// Energy efficiency in bits per joule.
pub fn iot_ee_point(protocol: &ProtocolSpec, se: f64) -> Result<f64> {
    if !(se >= 0.0) {
        return Err(Error::InvalidArgument("spectral efficiency must be nonnegative".into()));
    }
    Ok(se * protocol.bandwidth_hz / protocol.power_w)
}
