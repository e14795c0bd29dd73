//! Network instance data and the closed-form link physics.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

/// Channels of every device: base station to device (`h`) and device to receiver (`g`).
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    pub h: Vec<CVec>,
    pub g: Vec<C64>,
}

impl ChannelSet {
    pub fn new(h: Vec<CVec>, g: Vec<C64>) -> Result<Self> {
        if h.len() != g.len() {
            return Err(Error::Dimension(format!(
                "{} downlink channels but {} backscatter gains",
                h.len(),
                g.len()
            )));
        }
        if let Some(n) = h.first().map(|v| v.len()) {
            if n == 0 || h.iter().any(|v| v.len() != n) {
                return Err(Error::Dimension("channel vectors differ in length".into()));
            }
        }
        Ok(Self { h, g })
    }

    pub fn device_count(&self) -> usize {
        self.h.len()
    }

    pub fn antenna_count(&self) -> usize {
        self.h.first().map_or(0, |v| v.len())
    }

    /// Gram matrix `h_i h_iᴴ`.
    pub fn gram(&self, i: usize) -> CMat {
        let h = &self.h[i];
        h * h.adjoint()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkInstance {
    pub antenna_count: usize,
    pub device_count: usize,
    pub slot_count: usize,
    pub spreading_factor: f64,
    pub frame_length: f64,
    /// Rate targets in bits/s/Hz.
    pub rate_targets: Vec<f64>,
    pub conversion_efficiency: Vec<f64>,
    pub device_noise: Vec<f64>,
    pub receiver_noise: f64,
    /// Informational only; the optimizer does not cap power.
    pub bs_power_budget: f64,
    pub channels: ChannelSet,
}

impl NetworkInstance {
    /// Instance with `J = I`, uniform efficiency and noise.
    pub fn uniform(
        channels: ChannelSet,
        rate_targets: Vec<f64>,
        eta: f64,
        noise: f64,
        k: f64,
        t: f64,
    ) -> Result<Self> {
        let i = channels.device_count();
        let inst = Self {
            antenna_count: channels.antenna_count(),
            device_count: i,
            slot_count: i,
            spreading_factor: k,
            frame_length: t,
            rate_targets,
            conversion_efficiency: vec![eta; i],
            device_noise: vec![noise; i],
            receiver_noise: noise,
            bs_power_budget: 1.0,
            channels,
        };
        inst.validate()?;
        Ok(inst)
    }

    pub fn validate(&self) -> Result<()> {
        let i = self.device_count;
        if self.antenna_count == 0 || i == 0 {
            return Err(Error::InvalidArgument("need at least one antenna and one device".into()));
        }
        if self.channels.device_count() != i || self.channels.antenna_count() != self.antenna_count {
            return Err(Error::Dimension("channel set does not match instance sizes".into()));
        }
        if self.rate_targets.len() != i
            || self.conversion_efficiency.len() != i
            || self.device_noise.len() != i
        {
            return Err(Error::Dimension("per-device vectors must have one entry per device".into()));
        }
        if self.slot_count == 0 {
            return Err(Error::InvalidArgument("J must be at least 1".into()));
        }
        if !(self.spreading_factor >= 1.0) {
            return Err(Error::InvalidArgument("K must be at least 1".into()));
        }
        if !(self.frame_length > 0.0) || !(self.receiver_noise > 0.0) {
            return Err(Error::InvalidArgument("T and receiver noise must be positive".into()));
        }
        if self.rate_targets.iter().any(|c| !(*c >= 0.0)) {
            return Err(Error::InvalidArgument("rate targets must be nonnegative".into()));
        }
        if self.conversion_efficiency.iter().any(|e| !(0.0..=1.0).contains(e)) {
            return Err(Error::InvalidArgument("conversion efficiency must lie in [0, 1]".into()));
        }
        if self.device_noise.iter().any(|s| !(*s >= 0.0)) || !(self.bs_power_budget >= 0.0) {
            return Err(Error::InvalidArgument("powers must be nonnegative".into()));
        }
        Ok(())
    }

    /// Rate target in nats per frame, `K·C·ln 2`.
    pub fn target_nats(&self, i: usize) -> f64 {
        self.spreading_factor * self.rate_targets[i] * std::f64::consts::LN_2
    }

    pub fn with_targets(&self, c: &[f64]) -> Self {
        let mut out = self.clone();
        out.rate_targets = c.to_vec();
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlotRole {
    /// Energy harvesting and environment sensing.
    Ehs,
    /// Modulation and transmission of information.
    Mti,
}

/// MTI slot sets per device; every other slot is EHS for that device.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScheduleFrame {
    pub slot_count: usize,
    pub mti_slots: Vec<Vec<usize>>,
}

impl ScheduleFrame {
    pub fn new(slot_count: usize, mti_slots: Vec<Vec<usize>>) -> Result<Self> {
        let mut mti_slots = mti_slots;
        for s in &mut mti_slots {
            s.sort_unstable();
            s.dedup();
            if s.iter().any(|&j| j >= slot_count) {
                return Err(Error::Schedule(format!("slot index out of range for J = {slot_count}")));
            }
        }
        Ok(Self { slot_count, mti_slots })
    }

    /// One MTI slot per device, device `i` in slot `i`.
    pub fn one_slot_each(devices: usize) -> Self {
        Self { slot_count: devices, mti_slots: (0..devices).map(|i| vec![i]).collect() }
    }

    pub fn role(&self, device: usize, slot: usize) -> SlotRole {
        if self.mti_slots[device].contains(&slot) {
            SlotRole::Mti
        } else {
            SlotRole::Ehs
        }
    }

    pub fn ehs_slots(&self, device: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.slot_count).filter(move |j| !self.mti_slots[device].contains(j))
    }

    /// True when MTI sets are disjoint and each is a consecutive run.
    pub fn is_tsr(&self) -> bool {
        let mut used = vec![false; self.slot_count];
        for s in &self.mti_slots {
            if s.windows(2).any(|w| w[1] != w[0] + 1) {
                return false;
            }
            for &j in s {
                if used[j] {
                    return false;
                }
                used[j] = true;
            }
        }
        true
    }

    pub fn check(&self, inst: &NetworkInstance) -> Result<()> {
        if self.mti_slots.len() != inst.device_count || self.slot_count != inst.slot_count {
            return Err(Error::Schedule("schedule does not match instance".into()));
        }
        for (i, s) in self.mti_slots.iter().enumerate() {
            if s.is_empty() && inst.rate_targets[i] > 0.0 {
                return Err(Error::Schedule(format!("device {i} has a rate target but no MTI slot")));
            }
        }
        Ok(())
    }
}

/// Result of one optimization run in physical units.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionReport {
    pub total_energy: f64,
    pub beamformers: Vec<CVec>,
    pub covariances: Vec<CMat>,
    pub durations: Vec<f64>,
    pub rates: Vec<f64>,
    /// `harvested[i][j]`, zero on MTI slots.
    pub harvested: Vec<Vec<f64>>,
    /// Effective reflected energy per device, the sum of its harvested energy.
    pub reflected_energy: Vec<f64>,
    pub rank_residuals: Vec<f64>,
    pub surrogate_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Relative energy added by beamformer extraction and restoration.
    pub extraction_inflation: f64,
}

fn check_square(a: &CMat, b: &CMat) -> Result<()> {
    if !a.is_square() || a.shape() != b.shape() {
        return Err(Error::Dimension(format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

/// Real part of `Tr(A·B)` without forming the product.
pub fn trace_product(a: &CMat, b: &CMat) -> f64 {
    let n = a.nrows();
    let mut s = 0.0;
    for k in 0..n {
        for l in 0..n {
            s += (a[(k, l)] * b[(l, k)]).re;
        }
    }
    s
}

pub fn harvested_energy(eta: f64, tau: f64, x: &CMat, h: &CMat) -> Result<f64> {
    check_square(x, h)?;
    if tau < 0.0 {
        return Err(Error::InvalidArgument("negative duration".into()));
    }
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::InvalidArgument("efficiency outside [0, 1]".into()));
    }
    Ok((eta * tau * trace_product(x, h)).max(0.0))
}

pub fn snr_at_receiver(
    k: f64,
    g: C64,
    x_mti: &CMat,
    h: &CMat,
    harvested_sum: f64,
    tau_mti: f64,
    noise: f64,
) -> Result<f64> {
    check_square(x_mti, h)?;
    if !(tau_mti > 0.0) {
        return Err(Error::InvalidArgument("MTI duration must be positive".into()));
    }
    if !(noise > 0.0) {
        return Err(Error::InvalidArgument("noise power must be positive".into()));
    }
    Ok(k * g.norm_sqr() * trace_product(x_mti, h) * harvested_sum / (tau_mti * noise))
}

pub fn achievable_rate(tau_mti: f64, k: f64, snr: f64) -> f64 {
    if tau_mti <= 0.0 {
        return 0.0;
    }
    tau_mti / k * snr.max(0.0).ln_1p() / std::f64::consts::LN_2
}

pub fn total_energy(tau: &[f64], x: &[CMat]) -> Result<f64> {
    if tau.len() != x.len() {
        return Err(Error::Dimension(format!("{} durations, {} covariances", tau.len(), x.len())));
    }
    Ok(tau.iter().zip(x).map(|(t, m)| t * m.trace().re).sum())
}

/// Per-device rate evaluated from covariances and harvested energies.
pub fn device_rates(
    inst: &NetworkInstance,
    sched: &ScheduleFrame,
    cov: &[CMat],
    tau: &[f64],
    harvested: &[Vec<f64>],
) -> Vec<f64> {
    (0..inst.device_count)
        .map(|i| {
            let slots = &sched.mti_slots[i];
            let Some(&first) = slots.first() else { return 0.0 };
            let tau_mti: f64 = slots.iter().map(|&j| tau[j]).sum();
            let sum: f64 = sched.ehs_slots(i).map(|j| harvested[i][j]).sum();
            let h = inst.channels.gram(i);
            match snr_at_receiver(
                inst.spreading_factor,
                inst.channels.g[i],
                &cov[first],
                &h,
                sum,
                tau_mti,
                inst.receiver_noise,
            ) {
                Ok(snr) => achievable_rate(tau_mti, inst.spreading_factor, snr),
                Err(_) => 0.0,
            }
        })
        .collect()
}

/// Maximum harvestable energy `η τ_j Tr(X_j H_i)` on every EHS slot.
pub fn max_harvest(
    inst: &NetworkInstance,
    sched: &ScheduleFrame,
    cov: &[CMat],
    tau: &[f64],
) -> Vec<Vec<f64>> {
    (0..inst.device_count)
        .map(|i| {
            let h = inst.channels.gram(i);
            (0..sched.slot_count)
                .map(|j| match sched.role(i, j) {
                    SlotRole::Mti => 0.0,
                    SlotRole::Ehs => {
                        harvested_energy(inst.conversion_efficiency[i], tau[j].max(0.0), &cov[j], &h)
                            .unwrap_or(0.0)
                    }
                })
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Absolute slack on rates, bits/s/Hz.
    pub rate: f64,
    /// Absolute slack on durations, seconds.
    pub time: f64,
    /// Relative slack on harvested energy.
    pub energy: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { rate: 1e-6, time: 1e-9, energy: 1e-9 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    Rate { device: usize, achieved: f64, target: f64 },
    NegativeDuration { slot: usize, value: f64 },
    FrameLength { total: f64, limit: f64 },
    Harvest { device: usize, slot: usize, claimed: f64, available: f64 },
}

/// Audits a report against the exact constraint set using its beamformers.
pub fn validate_solution(
    inst: &NetworkInstance,
    sched: &ScheduleFrame,
    report: &SolutionReport,
    tol: &Tolerances,
) -> Vec<Violation> {
    let mut out = Vec::new();
    let cov: Vec<CMat> = report.beamformers.iter().map(|x| x * x.adjoint()).collect();
    let tau = &report.durations;
    for (j, &t) in tau.iter().enumerate() {
        if t < -tol.time {
            out.push(Violation::NegativeDuration { slot: j, value: t });
        }
    }
    let total: f64 = tau.iter().sum();
    if total > inst.frame_length + tol.time {
        out.push(Violation::FrameLength { total, limit: inst.frame_length });
    }
    let avail = max_harvest(inst, sched, &cov, tau);
    for i in 0..inst.device_count {
        for j in sched.ehs_slots(i) {
            let claimed = report.harvested[i][j];
            let a = avail[i][j];
            if claimed > a + tol.energy * a.max(1e-300) + 1e-300 {
                out.push(Violation::Harvest { device: i, slot: j, claimed, available: a });
            }
        }
    }
    let rates = device_rates(inst, sched, &cov, tau, &report.harvested);
    for (i, r) in rates.into_iter().enumerate() {
        let c = inst.rate_targets[i];
        if r < c - tol.rate {
            out.push(Violation::Rate { device: i, achieved: r, target: c });
        }
    }
    out
}
