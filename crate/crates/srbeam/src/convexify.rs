//! Convex surrogates of the energy-minimization problem and the two
//! assembled programs built around an expansion point.
//!
//! Everything here works in normalized units: channel Gram matrices have unit
//! trace, powers are measured in a chosen power unit, and each device carries
//! one SNR coefficient `c_i = K|g_i|²‖h_i‖⁴P²/σ²` (see [`Model`]).

use nalgebra::{Matrix2, Vector2};

use crate::conic::{exp_soc_chain, max_eigpair, ConicProgram, HermVar, LinExpr};
use crate::error::{Error, Result};
use crate::model::{CMat, NetworkInstance, ScheduleFrame, SlotRole, C64};

/// Normalized problem data.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub antennas: usize,
    pub devices: usize,
    pub slots: usize,
    pub frame_length: f64,
    /// Unit-trace Gram matrices `h_i h_iᴴ / ‖h_i‖²`.
    pub gram: Vec<CMat>,
    /// SNR coefficient per device in normalized units.
    pub coupling: Vec<f64>,
    pub eta: Vec<f64>,
    /// Rate targets `K·C_i·ln 2` in nats.
    pub target: Vec<f64>,
    pub schedule: ScheduleFrame,
    /// Watts represented by one normalized power unit.
    pub power_unit: f64,
    pub h_norm2: Vec<f64>,
}

impl Model {
    pub fn new(inst: &NetworkInstance, sched: &ScheduleFrame, power_unit: f64) -> Result<Self> {
        inst.validate()?;
        sched.check(inst)?;
        if !(power_unit > 0.0) {
            return Err(Error::InvalidArgument("power unit must be positive".into()));
        }
        let i_count = inst.device_count;
        let mut gram = Vec::with_capacity(i_count);
        let mut coupling = Vec::with_capacity(i_count);
        let mut h_norm2 = Vec::with_capacity(i_count);
        for i in 0..i_count {
            let h2 = inst.channels.h[i].norm_squared();
            let g = if h2 > 0.0 { inst.channels.gram(i) / C64::new(h2, 0.0) } else { inst.channels.gram(i) };
            gram.push(g);
            h_norm2.push(h2);
            coupling.push(
                inst.spreading_factor * inst.channels.g[i].norm_sqr() * h2 * h2 * power_unit * power_unit
                    / inst.receiver_noise,
            );
        }
        Ok(Self {
            antennas: inst.antenna_count,
            devices: i_count,
            slots: inst.slot_count,
            frame_length: inst.frame_length,
            gram,
            coupling,
            eta: inst.conversion_efficiency.clone(),
            target: (0..i_count).map(|i| inst.target_nats(i)).collect(),
            schedule: sched.clone(),
            power_unit,
            h_norm2,
        })
    }

    /// Devices carrying a rate constraint.
    pub fn active(&self, i: usize) -> bool {
        self.target[i] > 0.0
    }

    pub fn mti_slot(&self, i: usize) -> Option<usize> {
        self.schedule.mti_slots[i].first().copied()
    }

    pub fn mti_duration(&self, i: usize, tau: &[f64]) -> f64 {
        self.schedule.mti_slots[i].iter().map(|&j| tau[j]).sum()
    }

    /// `Tr(X Ĥ_i)` on device `i`'s MTI covariance.
    pub fn mti_gain(&self, i: usize, x: &[CMat]) -> f64 {
        self.mti_slot(i).map_or(0.0, |j| crate::model::trace_product(&x[j], &self.gram[i]))
    }

    /// Normalized SNR `c·A·Σφ²/τ`.
    pub fn snr(&self, i: usize, x: &[CMat], tau: &[f64], phi: &[Vec<f64>]) -> f64 {
        let t = self.mti_duration(i, tau);
        if t <= 0.0 {
            return 0.0;
        }
        let b: f64 = self.schedule.ehs_slots(i).map(|j| phi[i][j] * phi[i][j]).sum();
        self.coupling[i] * self.mti_gain(i, x) * b / t
    }

    /// Largest harvest amplitudes `√(η τ_j Tr(X_j Ĥ_i))`.
    pub fn max_phi(&self, x: &[CMat], tau: &[f64]) -> Vec<Vec<f64>> {
        (0..self.devices)
            .map(|i| {
                (0..self.slots)
                    .map(|j| match self.schedule.role(i, j) {
                        SlotRole::Mti => 0.0,
                        SlotRole::Ehs => {
                            (self.eta[i] * tau[j].max(0.0) * crate::model::trace_product(&x[j], &self.gram[i]))
                                .max(0.0)
                                .sqrt()
                        }
                    })
                    .collect()
            })
            .collect()
    }
}

/// Linearization point, normalized units.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpansionPoint {
    pub x: Vec<CMat>,
    pub tau: Vec<f64>,
    pub gamma: Vec<f64>,
    /// `phi[i][j]`, zero on MTI slots.
    pub phi: Vec<Vec<f64>>,
    /// `c·A·B`, the SQ product variable.
    pub theta: Vec<f64>,
    /// Normalized SNR.
    pub xi: Vec<f64>,
    /// Rate exponent, used to center the exponential chain.
    pub z: Vec<f64>,
}

impl ExpansionPoint {
    /// Point with maximal harvest amplitudes and exact products.
    pub fn from_covariances(model: &Model, x: Vec<CMat>, tau: Vec<f64>) -> Self {
        let phi = model.max_phi(&x, &tau);
        Self::from_parts(model, x, tau, phi)
    }

    pub fn from_parts(model: &Model, x: Vec<CMat>, tau: Vec<f64>, phi: Vec<Vec<f64>>) -> Self {
        let gamma = x.iter().map(|m| m.trace().re).collect();
        let xi: Vec<f64> = (0..model.devices).map(|i| model.snr(i, &x, &tau, &phi)).collect();
        let theta = (0..model.devices).map(|i| xi[i] * model.mti_duration(i, &tau)).collect();
        let z = xi.iter().map(|s| s.ln_1p()).collect();
        Self { x, tau, gamma, phi, theta, xi, z }
    }

    /// True energy `Σ τ_j Tr(X_j)` in power units times seconds.
    pub fn energy(&self) -> f64 {
        self.tau.iter().zip(&self.x).map(|(t, m)| t * m.trace().re).sum()
    }

    pub fn check(&self, model: &Model) -> Result<()> {
        let j = model.slots;
        if self.x.len() != j || self.tau.len() != j || self.gamma.len() != j || self.phi.len() != model.devices {
            return Err(Error::Dimension("expansion point does not match model".into()));
        }
        if self.tau.iter().any(|t| !(*t >= 0.0)) {
            return Err(Error::InfeasiblePoint("negative duration".into()));
        }
        if self.phi.iter().flatten().any(|p| !(*p >= 0.0)) {
            return Err(Error::InfeasiblePoint("negative harvest amplitude".into()));
        }
        for m in &self.x {
            let (l, _) = max_eigpair(&(-m.clone()))?;
            if l > 1e-9 * (1.0 + m.trace().re.abs()) {
                return Err(Error::InfeasiblePoint("covariance is not PSD".into()));
            }
        }
        for i in (0..model.devices).filter(|&i| model.active(i)) {
            if !(model.mti_duration(i, &self.tau) > 0.0) {
                return Err(Error::InfeasiblePoint(format!("device {i} has no MTI time")));
            }
            if !(self.xi[i] > 0.0) || !(model.mti_gain(i, &self.x) > 0.0) {
                return Err(Error::InfeasiblePoint(format!("device {i} has zero SNR")));
            }
        }
        Ok(())
    }
}

/// How the bilinear SNR coupling is convexified.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CouplingModel {
    /// Concave tangent minorants; every solution stays feasible for the exact coupling.
    Minorant,
    /// First-order Taylor expansion of the product.
    Taylor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateConfig {
    pub penalty: f64,
    pub growth: f64,
    pub beta: f64,
    pub m: u32,
    pub coupling: CouplingModel,
    /// Per-slot balancing of the DC objective split.
    pub balanced_dc: bool,
    /// Centers the exponential chain at the expansion exponent.
    pub centered_chain: bool,
    /// Fixes all slot durations (TDMA).
    pub frozen_durations: Option<Vec<f64>>,
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        Self {
            penalty: 1e-3,
            growth: 10.0,
            beta: 2.0,
            m: 4,
            coupling: CouplingModel::Minorant,
            balanced_dc: true,
            centered_chain: true,
            frozen_durations: None,
        }
    }
}

impl SurrogateConfig {
    pub fn check(&self) -> Result<()> {
        if !(self.penalty > 0.0) || !(self.growth > 1.0) || !(self.beta > 1.0) || self.m < 1 {
            return Err(Error::InvalidArgument("need ℓ > 0, α > 1, β > 1, M ≥ 1".into()));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------- objective

fn balance(xh: f64, yh: f64) -> f64 {
    if xh > 0.0 && yh > 0.0 {
        (yh / xh).sqrt()
    } else {
        1.0
    }
}

/// Convex majorant of `τγ` tangent at `(τ̂, γ̂)`, after scaling `τ` by `s` and `γ` by `1/s`.
///
/// With `s = 1` this is `¼(τ+γ)² − ¼(τ̂−γ̂)² − ½(τ̂−γ̂)[(τ−γ)−(τ̂−γ̂)]`.
pub fn dc_surrogate_value(tau: f64, gamma: f64, tau_hat: f64, gamma_hat: f64, s: f64) -> f64 {
    let (t, g, th, gh) = (s * tau, gamma / s, s * tau_hat, gamma_hat / s);
    let d = th - gh;
    0.25 * (t + g).powi(2) - 0.25 * d * d - 0.5 * d * ((t - g) - d)
}

/// Balancing scale `√(γ̂/τ̂)` used by the assembled objective.
pub fn dc_balance(tau_hat: f64, gamma_hat: f64) -> f64 {
    balance(tau_hat, gamma_hat)
}

/// Adds the DC surrogate of `Σ τ_j γ_j` to the objective through one SOC epigraph.
pub fn dc_objective_surrogate(
    prog: &mut ConicProgram,
    tau: &[LinExpr],
    gamma: &[LinExpr],
    tau_hat: &[f64],
    gamma_hat: &[f64],
    balanced: bool,
) -> usize {
    let t = prog.add_var("dc_epigraph");
    let mut w = Vec::with_capacity(tau.len());
    let mut lin = LinExpr::var(t);
    for j in 0..tau.len() {
        let s = if balanced { balance(tau_hat[j], gamma_hat[j]) } else { 1.0 };
        let (th, gh) = (s * tau_hat[j], gamma_hat[j] / s);
        let d = th - gh;
        let tt = tau[j].clone() * s;
        let gg = gamma[j].clone() * (1.0 / s);
        w.push((tt.clone() + gg.clone()) * 0.5);
        lin += ((tt - gg) - d) * (-0.5 * d) - 0.25 * d * d;
    }
    prog.quad_le(w, LinExpr::var(t), "dc-objective");
    prog.add_objective(lin);
    t
}

/// `ℓ(Tr X − v̂ᴴ X v̂)` with `v̂` the top eigenvector of `X̂`.
pub fn rank_one_penalty(x: &HermVar, x_hat: &CMat, ell: f64) -> Result<LinExpr> {
    let (_, v) = max_eigpair(x_hat)?;
    let vv = &v * v.adjoint();
    Ok((x.trace() - x.trace_with(&vv)) * ell)
}

pub fn rank_penalty_value(x: &CMat, x_hat: &CMat, ell: f64) -> Result<f64> {
    let (_, v) = max_eigpair(x_hat)?;
    let q = (v.adjoint() * x * &v)[(0, 0)].re;
    Ok(ell * (x.trace().re - q))
}

// ---------------------------------------------------------------- constraints

/// `‖(φ, ½(η·tr − τ))‖ ≤ ½(η·tr + τ)`, i.e. `φ² ≤ η τ tr`.
pub fn harvest_rotated_cone(prog: &mut ConicProgram, eta: f64, tau: &LinExpr, trace_xh: &LinExpr, phi: &LinExpr) {
    let a = trace_xh.clone() * eta;
    prog.soc(
        (a.clone() + tau.clone()) * 0.5,
        vec![phi.clone(), (a - tau.clone()) * 0.5],
        "harvest",
    );
}

/// `γ ≥ Tr X`.
pub fn trace_bound(prog: &mut ConicProgram, gamma: &LinExpr, x: &HermVar) {
    prog.nonneg(gamma.clone() - x.trace(), "trace-bound");
}

/// Data of one device's coupling at the expansion point.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingPoint {
    /// SNR coefficient `c`.
    pub c: f64,
    /// `Â = Tr(X̂ Ĥ)`.
    pub a_hat: f64,
    /// `φ̂_ij` over EHS slots.
    pub phi_hat: Vec<f64>,
}

impl CouplingPoint {
    pub fn b_hat(&self) -> f64 {
        self.phi_hat.iter().map(|p| p * p).sum()
    }

    /// Tangent of `Σφ²`: `Σ(2φ̂φ − φ̂²)`, a lower bound.
    pub fn b_tangent(&self, phi: &[LinExpr]) -> LinExpr {
        LinExpr::sum(
            self.phi_hat
                .iter()
                .zip(phi)
                .map(|(&p, e)| e.clone() * (2.0 * p) - p * p),
        )
    }

    pub fn b_tangent_value(&self, phi: &[f64]) -> f64 {
        self.phi_hat.iter().zip(phi).map(|(&p, &f)| 2.0 * p * f - p * p).sum()
    }
}

/// `F = c·A·Σφ²`.
pub fn product_f(c: f64, a: f64, phi: &[f64]) -> f64 {
    c * a * phi.iter().map(|p| p * p).sum::<f64>()
}

/// `G = c·A·Σφ²/τ`.
pub fn product_g(c: f64, a: f64, phi: &[f64], tau: f64) -> f64 {
    product_f(c, a, phi) / tau
}

/// First-order Taylor bound on `F` at the point.
pub fn sq_theta_bound_value(cp: &CouplingPoint, a: f64, phi: &[f64]) -> f64 {
    let b = cp.b_hat();
    let db: f64 = cp.phi_hat.iter().zip(phi).map(|(&p, &f)| 2.0 * p * (f - p)).sum();
    cp.c * (cp.a_hat * b + b * (a - cp.a_hat) + cp.a_hat * db)
}

/// `θ ≤ F(X̂, φ̂) + ∇F·Δ`.
pub fn sq_theta_linearization(prog: &mut ConicProgram, cp: &CouplingPoint, theta: &LinExpr, a: &LinExpr, phi: &[LinExpr]) {
    let b = cp.b_hat();
    let lb = cp.b_tangent(phi);
    let bound = (a.clone() * b + lb * cp.a_hat - cp.a_hat * b) * cp.c;
    prog.nonneg(bound - theta.clone(), "theta-taylor");
}

/// Balanced concave minorant of `x·y` tangent at `(x̂, ŷ)`.
pub fn product_minorant_value(x: f64, y: f64, xh: f64, yh: f64) -> f64 {
    let s = balance(xh, yh);
    let (xx, yy, xxh, yyh) = (s * x, y / s, s * xh, yh / s);
    0.25 * (xxh + yyh).powi(2) + 0.5 * (xxh + yyh) * ((xx + yy) - (xxh + yyh)) - 0.25 * (xx - yy).powi(2)
}

/// Affine part and difference term of the product minorant.
fn minorant_parts(a: &LinExpr, lb: &LinExpr, xh: f64, yh: f64) -> (LinExpr, LinExpr) {
    let s = balance(xh, yh);
    let (xxh, yyh) = (s * xh, yh / s);
    let sum_h = xxh + yyh;
    let xx = a.clone() * s;
    let yy = lb.clone() * (1.0 / s);
    let aff = ((xx.clone() + yy.clone()) - sum_h) * (0.5 * sum_h) + 0.25 * sum_h * sum_h;
    (aff, (xx - yy) * 0.5)
}

/// `θ ≤ c·m(A, Σ(2φ̂φ − φ̂²))`, an inner bound of `θ ≤ F`.
pub fn sq_theta_minorant(prog: &mut ConicProgram, cp: &CouplingPoint, theta: &LinExpr, a: &LinExpr, phi: &[LinExpr]) {
    let lb = cp.b_tangent(phi);
    let (aff, diff) = minorant_parts(a, &lb, cp.a_hat, cp.b_hat());
    let mu = (cp.c * cp.a_hat * cp.b_hat()).max(1.0);
    prog.quad_le_scaled(vec![diff * cp.c.sqrt()], aff * cp.c - theta.clone(), mu, "theta-minorant");
}

/// `f₃(θ, τ) = KC̃ − τ ln(1 + θ/τ)`.
pub fn f3(theta: f64, tau: f64, kc: f64) -> f64 {
    kc - tau * (theta / tau).ln_1p()
}

pub fn f3_gradient(theta: f64, tau: f64) -> Vector2<f64> {
    Vector2::new(-tau / (tau + theta), -(theta / tau).ln_1p() + theta / (tau + theta))
}

/// Exact Hessian of `f₃` in `(θ, τ)`.
pub fn f3_hessian(theta: f64, tau: f64) -> Matrix2<f64> {
    let v = Vector2::new(tau, -theta);
    v * v.transpose() / (tau * (tau + theta).powi(2))
}

/// `[[9β, −β], [−β, 9β]] / (8τ̂)`.
pub fn hessian_upper_bound(tau_hat: f64, beta: f64) -> Result<Matrix2<f64>> {
    if !(tau_hat > 0.0) {
        return Err(Error::InvalidArgument("τ̂ must be positive".into()));
    }
    let k = beta / (8.0 * tau_hat);
    Ok(Matrix2::new(9.0 * k, -k, -k, 9.0 * k))
}

/// Quadratic upper model of `f₃` at `(θ̂, τ̂)`.
pub fn sq_rate_surrogate_value(theta: f64, tau: f64, theta_hat: f64, tau_hat: f64, kc: f64, hs: &Matrix2<f64>) -> f64 {
    let d = Vector2::new(theta - theta_hat, tau - tau_hat);
    f3(theta_hat, tau_hat, kc) + f3_gradient(theta_hat, tau_hat).dot(&d) + (d.transpose() * hs * d)[(0, 0)]
}

/// `f₃(p̂) + ∇f₃·Δ + Δᵀ H_s Δ ≤ 0` and the domain row `τ ≥ τ̂/β`.
pub fn sq_rate_quadratic(
    prog: &mut ConicProgram,
    theta: &LinExpr,
    tau: &LinExpr,
    kc: f64,
    theta_hat: f64,
    tau_hat: f64,
    beta: f64,
) -> Result<()> {
    let hs = hessian_upper_bound(tau_hat, beta)?;
    let l = hs.cholesky().ok_or_else(|| Error::InvalidArgument("H_s not positive definite".into()))?.l();
    let dth = theta.clone() - theta_hat;
    let dta = tau.clone() - tau_hat;
    // Δᵀ H_s Δ = ‖Lᵀ Δ‖²
    let w = vec![
        dth.clone() * l[(0, 0)] + dta.clone() * l[(1, 0)],
        dta.clone() * l[(1, 1)],
    ];
    let g = f3_gradient(theta_hat, tau_hat);
    let r = -(dth * g[0] + dta * g[1]) - f3(theta_hat, tau_hat, kc);
    prog.quad_le(w, r, "rate-quadratic");
    prog.nonneg(tau.clone() - tau_hat / beta, "domain");
    Ok(())
}

/// `(z + τ) ≥ ‖(2√KC̃, z − τ)‖` and `z ≥ 0`.
pub fn cqr_rate_soc(prog: &mut ConicProgram, z: &LinExpr, tau: &LinExpr, kc: f64) -> Result<()> {
    if !(kc >= 0.0) {
        return Err(Error::InvalidArgument("negative rate target".into()));
    }
    prog.soc(
        z.clone() + tau.clone(),
        vec![LinExpr::constant(2.0 * kc.sqrt()), z.clone() - tau.clone()],
        "rate-cone",
    );
    prog.nonneg(z.clone(), "rate-exponent");
    Ok(())
}

/// First-order Taylor bound on `G` at the point.
pub fn cqr_xi_bound_value(cp: &CouplingPoint, tau_hat: f64, a: f64, phi: &[f64], tau: f64) -> f64 {
    let g0 = cp.c * cp.a_hat * cp.b_hat() / tau_hat;
    g0 + (sq_theta_bound_value(cp, a, phi) - cp.c * cp.a_hat * cp.b_hat()) / tau_hat - g0 / tau_hat * (tau - tau_hat)
}

/// `Ξ ≤ G(X̂, τ̂, φ̂) + ∇G·Δ`.
pub fn cqr_xi_linearization(
    prog: &mut ConicProgram,
    cp: &CouplingPoint,
    tau_hat: f64,
    xi: &LinExpr,
    a: &LinExpr,
    phi: &[LinExpr],
    tau: &LinExpr,
) {
    let b = cp.b_hat();
    let g0 = cp.c * cp.a_hat * b / tau_hat;
    let lb = cp.b_tangent(phi);
    let df = (a.clone() * b + lb * cp.a_hat - 2.0 * cp.a_hat * b) * (cp.c / tau_hat);
    let bound = df - (tau.clone() - tau_hat) * (g0 / tau_hat) + g0;
    prog.nonneg(bound - xi.clone(), "xi-taylor");
}

/// Balanced convex majorant of `x·y` tangent at `(x̂, ŷ)`.
pub fn product_majorant_value(x: f64, y: f64, xh: f64, yh: f64) -> f64 {
    dc_surrogate_value(x, y, xh, yh, balance(xh, yh))
}

/// `M(Ξ, τ) ≤ c·m(A, Σ(2φ̂φ − φ̂²))` with `M ≥ Ξτ` and `m ≤ A·Σφ²`, an inner bound of `Ξ ≤ G`.
pub fn cqr_xi_minorant(
    prog: &mut ConicProgram,
    cp: &CouplingPoint,
    xi_hat: f64,
    tau_hat: f64,
    xi: &LinExpr,
    a: &LinExpr,
    phi: &[LinExpr],
    tau: &LinExpr,
) {
    let lb = cp.b_tangent(phi);
    let (aff_m, diff) = minorant_parts(a, &lb, cp.a_hat, cp.b_hat());
    let s = balance(xi_hat, tau_hat);
    let (xxh, tth) = (s * xi_hat, tau_hat / s);
    let d = xxh - tth;
    let xx = xi.clone() * s;
    let tt = tau.clone() * (1.0 / s);
    let aff_q = ((xx.clone() - tt.clone()) - d) * (-0.5 * d) - 0.25 * d * d;
    let w = vec![(xx + tt) * 0.5, diff * cp.c.sqrt()];
    let mu = (cp.c * cp.a_hat * cp.b_hat()).max(1.0);
    prog.quad_le_scaled(w, aff_m * cp.c - aff_q, mu, "xi-minorant");
}

// ---------------------------------------------------------------- assembly

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Sq,
    Cqr,
}

/// Variable handles of an assembled program.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub method: Method,
    pub x: Vec<HermVar>,
    pub tau: Vec<usize>,
    pub gamma: Vec<usize>,
    pub phi: Vec<Vec<Option<usize>>>,
    pub theta: Vec<Option<usize>>,
    pub z: Vec<Option<usize>>,
    pub xi: Vec<Option<usize>>,
    pub zeta: Vec<Vec<usize>>,
    pub dc_epigraph: usize,
    /// Unit of the `θ` or `Ξ` variable of each device.
    pub scale: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Assembled {
    pub program: ConicProgram,
    pub layout: Layout,
    /// Constant added to the program objective to obtain the surrogate value.
    pub objective_offset: f64,
}

/// Values read back from a solved program.
#[derive(Debug, Clone, PartialEq)]
pub struct Iterate {
    pub x: Vec<CMat>,
    pub tau: Vec<f64>,
    pub gamma: Vec<f64>,
    pub phi: Vec<Vec<f64>>,
    pub theta: Vec<f64>,
    pub z: Vec<f64>,
    pub xi: Vec<f64>,
    pub surrogate: f64,
}

impl Layout {
    pub fn read(&self, sol: &[f64], surrogate: f64) -> Iterate {
        let get = |v: &Option<usize>| v.map_or(0.0, |k| sol[k]);
        Iterate {
            x: self.x.iter().map(|h| h.value(sol)).collect(),
            tau: self.tau.iter().map(|&k| sol[k]).collect(),
            gamma: self.gamma.iter().map(|&k| sol[k]).collect(),
            phi: self.phi.iter().map(|r| r.iter().map(|v| get(v).max(0.0)).collect()).collect(),
            theta: self.theta.iter().zip(&self.scale).map(|(v, s)| get(v) * s).collect(),
            z: self.z.iter().map(get).collect(),
            xi: self.xi.iter().zip(&self.scale).map(|(v, s)| get(v) * s).collect(),
            surrogate,
        }
    }
}

fn assemble_common(model: &Model, point: &ExpansionPoint, cfg: &SurrogateConfig, method: Method) -> Result<Assembled> {
    cfg.check()?;
    point.check(model)?;
    let (j_count, i_count) = (model.slots, model.devices);
    let mut prog = ConicProgram::new();
    let x: Vec<HermVar> = (0..j_count).map(|j| HermVar::new(&mut prog, model.antennas, &format!("X{j}"))).collect();
    let tau = prog.add_vars(j_count, "tau");
    let gamma = prog.add_vars(j_count, "gamma");
    let tau_e: Vec<LinExpr> = tau.iter().map(|&k| LinExpr::var(k)).collect();
    let gamma_e: Vec<LinExpr> = gamma.iter().map(|&k| LinExpr::var(k)).collect();

    // objective: DC surrogate plus rank penalty
    let dc = dc_objective_surrogate(&mut prog, &tau_e, &gamma_e, &point.tau, &point.gamma, cfg.balanced_dc);
    for (xv, xh) in x.iter().zip(&point.x) {
        let pen = rank_one_penalty(xv, xh, cfg.penalty)?;
        prog.add_objective(pen);
    }

    for t in &tau_e {
        prog.nonneg(t.clone(), "duration");
    }
    prog.nonneg(LinExpr::constant(model.frame_length) - LinExpr::sum(tau_e.iter().cloned()), "frame");
    if let Some(fixed) = &cfg.frozen_durations {
        if fixed.len() != j_count {
            return Err(Error::Dimension("frozen durations".into()));
        }
        for (t, &v) in tau_e.iter().zip(fixed) {
            prog.equal(t.clone(), LinExpr::constant(v), "frozen-duration");
        }
    }
    for (j, xv) in x.iter().enumerate() {
        xv.add_psd(&mut prog, "psd");
        trace_bound(&mut prog, &gamma_e[j], xv);
    }
    // devices spanning several MTI slots share one covariance
    for slots in &model.schedule.mti_slots {
        for w in slots.windows(2) {
            let (a, b) = (&x[w[0]], &x[w[1]]);
            for (va, vb) in a.vars().zip(b.vars()) {
                prog.equal(LinExpr::var(va), LinExpr::var(vb), "shared-covariance");
            }
        }
    }

    let mut phi = vec![vec![None; j_count]; i_count];
    let mut theta = vec![None; i_count];
    let mut zv = vec![None; i_count];
    let mut xiv = vec![None; i_count];
    let mut zeta = vec![Vec::new(); i_count];
    let mut scale = vec![1.0; i_count];
    for i in (0..i_count).filter(|&i| model.active(i)) {
        let ehs: Vec<usize> = model.schedule.ehs_slots(i).collect();
        let mut phi_e = Vec::with_capacity(ehs.len());
        for &j in &ehs {
            let v = prog.add_var(format!("phi[{i},{j}]"));
            phi[i][j] = Some(v);
            let e = LinExpr::var(v);
            harvest_rotated_cone(&mut prog, model.eta[i], &tau_e[j], &x[j].trace_with(&model.gram[i]), &e);
            phi_e.push(e);
        }
        let mti = model.mti_slot(i).expect("active device has an MTI slot");
        let a = x[mti].trace_with(&model.gram[i]);
        let tau_mti = LinExpr::sum(model.schedule.mti_slots[i].iter().map(|&j| tau_e[j].clone()));
        let tau_mti_hat = model.mti_duration(i, &point.tau);
        let cp = CouplingPoint {
            c: model.coupling[i],
            a_hat: model.mti_gain(i, &point.x),
            phi_hat: ehs.iter().map(|&j| point.phi[i][j]).collect(),
        };
        match method {
            Method::Sq => {
                let th = prog.add_var(format!("theta[{i}]"));
                theta[i] = Some(th);
                scale[i] = point.theta[i].max(1.0);
                let th_e = LinExpr::term(th, scale[i]);
                match cfg.coupling {
                    CouplingModel::Taylor => sq_theta_linearization(&mut prog, &cp, &th_e, &a, &phi_e),
                    CouplingModel::Minorant => sq_theta_minorant(&mut prog, &cp, &th_e, &a, &phi_e),
                }
                sq_rate_quadratic(&mut prog, &th_e, &tau_mti, model.target[i], point.theta[i], tau_mti_hat, cfg.beta)?;
            }
            Method::Cqr => {
                let z = prog.add_var(format!("z[{i}]"));
                let xi = prog.add_var(format!("xi[{i}]"));
                zv[i] = Some(z);
                xiv[i] = Some(xi);
                scale[i] = point.xi[i].max(1.0);
                let (z_e, xi_e) = (LinExpr::var(z), LinExpr::term(xi, scale[i]));
                cqr_rate_soc(&mut prog, &z_e, &tau_mti, model.target[i])?;
                match cfg.coupling {
                    CouplingModel::Taylor => cqr_xi_linearization(&mut prog, &cp, tau_mti_hat, &xi_e, &a, &phi_e, &tau_mti),
                    CouplingModel::Minorant => {
                        cqr_xi_minorant(&mut prog, &cp, point.xi[i], tau_mti_hat, &xi_e, &a, &phi_e, &tau_mti)
                    }
                }
                let shift = if cfg.centered_chain { point.z[i] } else { 0.0 };
                let chain = exp_soc_chain(
                    &mut prog,
                    &(z_e.clone() - shift),
                    &((xi_e + 1.0) * (-shift).exp()),
                    cfg.m,
                )?;
                zeta[i] = chain.zeta;
            }
        }
    }
    let layout = Layout { method, x, tau, gamma, phi, theta, z: zv, xi: xiv, zeta, dc_epigraph: dc, scale };
    Ok(Assembled { program: prog, layout, objective_offset: 0.0 })
}

/// Convex program of the SQ track around `point`.
pub fn assemble_sq(model: &Model, point: &ExpansionPoint, cfg: &SurrogateConfig) -> Result<Assembled> {
    assemble_common(model, point, cfg, Method::Sq)
}

/// Convex program of the CQR track around `point`.
pub fn assemble_cqr(model: &Model, point: &ExpansionPoint, cfg: &SurrogateConfig) -> Result<Assembled> {
    assemble_common(model, point, cfg, Method::Cqr)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conic::{solve, ConeKind, SolveStatus};
    use crate::model::{ChannelSet, CVec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn scalar(c: f64) -> (NetworkInstance, ScheduleFrame) {
        let ch = ChannelSet::new(vec![CVec::from_element(1, C64::new(1.0, 0.0))], vec![C64::new(1.0, 0.0)]).unwrap();
        let mut inst = NetworkInstance::uniform(ch, vec![c], 0.8, 1e-3, 10.0, 10.0).unwrap();
        inst.slot_count = 2;
        (inst, ScheduleFrame::new(2, vec![vec![0]]).unwrap())
    }

    fn scalar_point(model: &Model, p: f64) -> ExpansionPoint {
        let x = vec![CMat::from_element(1, 1, C64::new(p, 0.0)); 2];
        ExpansionPoint::from_covariances(model, x, vec![5.0, 5.0])
    }

    #[test]
    fn dc_examples() {
        assert!((dc_surrogate_value(2.0, 3.0, 2.0, 3.0, 1.0) - 6.0).abs() < 1e-12);
        assert!((dc_surrogate_value(3.0, 3.0, 2.0, 3.0, 1.0) - 9.25).abs() < 1e-12);
        let s = dc_balance(2.0, 3.0);
        assert!((dc_surrogate_value(2.0, 3.0, 2.0, 3.0, s) - 6.0).abs() < 1e-12);
    }

    #[test]
    fn penalty_examples() {
        let d = |a: f64, b: f64| CMat::from_diagonal(&CVec::from_vec(vec![C64::new(a, 0.0), C64::new(b, 0.0)]));
        assert!(rank_penalty_value(&d(1.0, 0.0), &d(1.0, 0.0), 0.7).unwrap().abs() < 1e-15);
        assert!((rank_penalty_value(&CMat::identity(2, 2), &CMat::identity(2, 2), 0.7).unwrap() - 0.7).abs() < 1e-12);
        assert!((rank_penalty_value(&d(2.0, 1.0), &d(2.0, 1.0), 0.7).unwrap() - 0.7).abs() < 1e-12);
    }

    #[test]
    fn harvest_cone_examples() {
        let mut p = ConicProgram::new();
        let v = p.add_vars(3, "v"); // tau, trace, phi
        let e = |k: usize| LinExpr::var(v[k]);
        harvest_rotated_cone(&mut p, 1.0, &e(0), &e(1), &e(2));
        assert!(p.max_violation(&[1.0, 4.0, 2.0]) < 1e-12);
        assert!(p.max_violation(&[1.0, 4.0, 2.001]) > 0.0);
        assert!(p.max_violation(&[3.0, 0.5, 0.0]) == 0.0);
    }

    #[test]
    fn trace_bound_examples() {
        let mut p = ConicProgram::new();
        let x = HermVar::new(&mut p, 2, "X");
        let g = p.add_var("g");
        trace_bound(&mut p, &LinExpr::var(g), &x);
        let mut vals = vec![0.0; p.variable_count()];
        x.assign(&CMat::identity(2, 2), &mut vals);
        vals[g] = 2.0;
        assert!(p.max_violation(&vals) < 1e-15);
        vals[g] = 1.9;
        assert!(p.max_violation(&vals) > 0.0);
    }

    #[test]
    fn hessian_bound_example() {
        let hs = hessian_upper_bound(1.0, 1.0).unwrap();
        assert_eq!(hs, Matrix2::new(1.125, -0.125, -0.125, 1.125));
        let ev = hessian_upper_bound(0.5, 2.0).unwrap().symmetric_eigenvalues();
        let (lo, hi) = (ev.min(), ev.max());
        assert!((lo - 2.0 / 0.5).abs() < 1e-12 && (hi - 5.0 * 2.0 / (4.0 * 0.5)).abs() < 1e-12);
        assert!(hessian_upper_bound(0.0, 2.0).is_err());
    }

    #[test]
    fn gradient_example() {
        let g = f3_gradient(1.0, 1.0);
        assert!((g[0] + 0.5).abs() < 1e-15);
        assert!((g[1] - (0.5 - 2f64.ln())).abs() < 1e-15);
    }

    #[test]
    fn gradient_and_hessian_match_finite_differences() {
        let (th, ta, kc, h) = (2.3, 0.7, 1.1, 1e-5);
        let g = f3_gradient(th, ta);
        let fd0 = (f3(th + h, ta, kc) - f3(th - h, ta, kc)) / (2.0 * h);
        let fd1 = (f3(th, ta + h, kc) - f3(th, ta - h, kc)) / (2.0 * h);
        assert!((g[0] - fd0).abs() < 1e-8 && (g[1] - fd1).abs() < 1e-8);
        let hh = f3_hessian(th, ta);
        let d00 = (f3_gradient(th + h, ta)[0] - f3_gradient(th - h, ta)[0]) / (2.0 * h);
        let d01 = (f3_gradient(th, ta + h)[0] - f3_gradient(th, ta - h)[0]) / (2.0 * h);
        let d11 = (f3_gradient(th, ta + h)[1] - f3_gradient(th, ta - h)[1]) / (2.0 * h);
        assert!((hh[(0, 0)] - d00).abs() < 1e-7 && (hh[(0, 1)] - d01).abs() < 1e-7 && (hh[(1, 1)] - d11).abs() < 1e-7);
    }

    #[test]
    fn rate_quadratic_tangent() {
        let (th, ta) = (3.0f64, 2.0f64);
        let kc = ta * (th / ta).ln_1p();
        let hs = hessian_upper_bound(ta, 2.0).unwrap();
        assert!(sq_rate_surrogate_value(th, ta, th, ta, kc, &hs).abs() < 1e-12);
    }

    #[test]
    fn rate_quadratic_emitted_matches_value() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let (th_h, ta_h, kc) = (rng.gen_range(0.1..50.0), rng.gen_range(0.1..5.0), rng.gen_range(0.0..5.0));
            let (th, ta) = (rng.gen_range(0.0..60.0), rng.gen_range(ta_h / 2.0..6.0));
            let mut p = ConicProgram::new();
            let v = p.add_vars(2, "v");
            sq_rate_quadratic(&mut p, &LinExpr::var(v[0]), &LinExpr::var(v[1]), kc, th_h, ta_h, 2.0).unwrap();
            let hs = hessian_upper_bound(ta_h, 2.0).unwrap();
            let val = sq_rate_surrogate_value(th, ta, th_h, ta_h, kc, &hs);
            let viol = p.max_violation(&[th, ta]);
            if val < -1e-9 {
                assert!(viol < 1e-9);
            }
            if val > 1e-9 {
                assert!(viol > 0.0);
            }
        }
    }

    #[test]
    fn rate_soc_examples() {
        let mut p = ConicProgram::new();
        let v = p.add_vars(2, "v");
        cqr_rate_soc(&mut p, &LinExpr::var(v[0]), &LinExpr::var(v[1]), 4.0).unwrap();
        assert!(p.max_violation(&[2.0, 2.0]) < 1e-12);
        assert!(p.max_violation(&[2.0, 1.99]) > 0.0);
        let mut q = ConicProgram::new();
        let w = q.add_vars(2, "w");
        cqr_rate_soc(&mut q, &LinExpr::var(w[0]), &LinExpr::var(w[1]), 0.0).unwrap();
        assert!(q.max_violation(&[0.0, 3.0]) == 0.0 && q.max_violation(&[5.0, 0.0]) == 0.0);
        assert!(cqr_rate_soc(&mut q, &LinExpr::var(w[0]), &LinExpr::var(w[1]), -1.0).is_err());
    }

    #[test]
    fn theta_linearization_examples() {
        let cp = CouplingPoint { c: 7.0, a_hat: 0.4, phi_hat: vec![0.3, 0.5] };
        let f0 = product_f(7.0, 0.4, &[0.3, 0.5]);
        assert!((sq_theta_bound_value(&cp, 0.4, &[0.3, 0.5]) - f0).abs() < 1e-12);
        // frozen φ: exact in A
        assert!((sq_theta_bound_value(&cp, 0.9, &[0.3, 0.5]) - product_f(7.0, 0.9, &[0.3, 0.5])).abs() < 1e-12);
        // scalar reduction: c(p̂Σφ̂² + Σφ̂²(p−p̂) + 2p̂Σφ̂(φ−φ̂))
        let (p, phi) = (0.7, [0.1, 0.8]);
        let b: f64 = 0.34;
        let want = 7.0 * (0.4 * b + b * (p - 0.4) + 2.0 * 0.4 * (0.3 * (0.1 - 0.3) + 0.5 * (0.8 - 0.5)));
        assert!((sq_theta_bound_value(&cp, p, &phi) - want).abs() < 1e-12);
    }

    #[test]
    fn xi_linearization_examples() {
        let cp = CouplingPoint { c: 3.0, a_hat: 1.2, phi_hat: vec![0.6] };
        let th = 2.0;
        let g0 = product_g(3.0, 1.2, &[0.6], th);
        assert!((cqr_xi_bound_value(&cp, th, 1.2, &[0.6], th) - g0).abs() < 1e-12);
        for tau in [0.5, 1.0, 3.0, 4.0] {
            let line = cqr_xi_bound_value(&cp, th, 1.2, &[0.6], tau);
            assert!((line - g0 * (2.0 - tau / th)).abs() < 1e-12);
            assert!(line <= product_g(3.0, 1.2, &[0.6], tau) + 1e-12);
        }
        // gradient against finite differences
        let h = 1e-6;
        let num_a = (product_g(3.0, 1.2 + h, &[0.6], th) - product_g(3.0, 1.2 - h, &[0.6], th)) / (2.0 * h);
        let lin_a = (cqr_xi_bound_value(&cp, th, 1.2 + h, &[0.6], th) - g0) / h;
        assert!((num_a - lin_a).abs() < 1e-6);
        let num_p = (product_g(3.0, 1.2, &[0.6 + h], th) - product_g(3.0, 1.2, &[0.6 - h], th)) / (2.0 * h);
        let lin_p = (cqr_xi_bound_value(&cp, th, 1.2, &[0.6 + h], th) - g0) / h;
        assert!((num_p - lin_p).abs() < 1e-5);
    }

    #[test]
    fn emitted_linearizations_match_values() {
        let cp = CouplingPoint { c: 5.0, a_hat: 0.8, phi_hat: vec![0.2, 0.4] };
        let mut p = ConicProgram::new();
        let v = p.add_vars(5, "v"); // theta, a, phi0, phi1, tau
        let e = |k: usize| LinExpr::var(v[k]);
        sq_theta_linearization(&mut p, &cp, &e(0), &e(1), &[e(2), e(3)]);
        let bound = sq_theta_bound_value(&cp, 1.1, &[0.3, 0.1]);
        assert!(p.max_violation(&[bound, 1.1, 0.3, 0.1, 0.0]) < 1e-12);
        assert!(p.max_violation(&[bound + 1e-6, 1.1, 0.3, 0.1, 0.0]) > 0.0);
        let mut q = ConicProgram::new();
        let w = q.add_vars(5, "w");
        let f = |k: usize| LinExpr::var(w[k]);
        cqr_xi_linearization(&mut q, &cp, 1.5, &f(0), &f(1), &[f(2), f(3)], &f(4));
        let bound = cqr_xi_bound_value(&cp, 1.5, 1.1, &[0.3, 0.1], 2.0);
        assert!(q.max_violation(&[bound, 1.1, 0.3, 0.1, 2.0]) < 1e-12);
        assert!(q.max_violation(&[bound + 1e-6, 1.1, 0.3, 0.1, 2.0]) > 0.0);
    }

    #[test]
    fn minorants_are_inner_and_tangent() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..2000 {
            let (xh, yh) = (rng.gen_range(0.01..10.0), rng.gen_range(0.01..10.0));
            let (x, y) = (rng.gen_range(0.0..20.0), rng.gen_range(0.0..20.0));
            assert!(product_minorant_value(x, y, xh, yh) <= x * y + 1e-9);
            assert!(product_majorant_value(x, y, xh, yh) >= x * y - 1e-9);
            assert!((product_minorant_value(xh, yh, xh, yh) - xh * yh).abs() < 1e-10);
            assert!((product_majorant_value(xh, yh, xh, yh) - xh * yh).abs() < 1e-10);
        }
    }

    #[test]
    fn sq_structure_scalar() {
        let (inst, sched) = scalar(0.5);
        let model = Model::new(&inst, &sched, 1.0).unwrap();
        let pt = scalar_point(&model, 0.02);
        let asm = assemble_sq(&model, &pt, &SurrogateConfig::default()).unwrap();
        let p = &asm.program;
        assert_eq!(p.count(ConeKind::Psd(2)), 2);
        assert_eq!(p.count_labelled("harvest"), 1);
        assert_eq!(p.count_labelled("rate-quadratic"), 1);
        assert_eq!(p.count_labelled("domain"), 1);
        assert_eq!(p.count_labelled("trace-bound"), 2);
    }

    #[test]
    fn cqr_structure_scalar() {
        let (inst, sched) = scalar(0.5);
        let model = Model::new(&inst, &sched, 1.0).unwrap();
        let pt = scalar_point(&model, 0.02);
        let asm = assemble_cqr(&model, &pt, &SurrogateConfig::default()).unwrap();
        let p = &asm.program;
        assert_eq!(asm.layout.zeta[0].len(), 8);
        assert_eq!(p.count_labelled("exp-chain"), 7);
        assert_eq!(p.count_labelled("exp-combine"), 1);
        assert_eq!(p.count_labelled("rate-cone"), 1);
    }

    #[test]
    fn null_targets_give_zero() {
        let (inst, sched) = scalar(0.0);
        let model = Model::new(&inst, &sched, 1.0).unwrap();
        let pt = scalar_point(&model, 0.0);
        for method in [Method::Sq, Method::Cqr] {
            let asm = assemble_common(&model, &pt, &SurrogateConfig::default(), method).unwrap();
            let s = solve(&asm.program, 1e-9, 200).unwrap();
            assert_eq!(s.status, SolveStatus::Optimal);
            assert!(s.objective.abs() < 1e-6, "{}", s.objective);
        }
    }

    #[test]
    fn infeasible_point_rejected() {
        let (inst, sched) = scalar(0.5);
        let model = Model::new(&inst, &sched, 1.0).unwrap();
        let mut pt = scalar_point(&model, 0.02);
        pt.tau[0] = -1.0;
        assert!(assemble_sq(&model, &pt, &SurrogateConfig::default()).is_err());
        let zero = scalar_point(&model, 0.0);
        assert!(assemble_cqr(&model, &zero, &SurrogateConfig::default()).is_err());
    }

    #[test]
    fn solutions_satisfy_exact_coupling() {
        let (inst, sched) = scalar(0.5);
        let model = Model::new(&inst, &sched, 1.0).unwrap();
        let pt = scalar_point(&model, 0.03);
        for method in [Method::Sq, Method::Cqr] {
            let asm = assemble_common(&model, &pt, &SurrogateConfig::default(), method).unwrap();
            let s = solve(&asm.program, 1e-9, 200).unwrap();
            assert_eq!(s.status, SolveStatus::Optimal);
            let it = asm.layout.read(&s.x, s.objective);
            let snr = model.snr(0, &it.x, &it.tau, &it.phi);
            let rate = it.tau[0] * snr.ln_1p();
            assert!(rate >= model.target[0] * (1.0 - 1e-5), "{method:?} {rate} {}", model.target[0]);
            assert!(it.tau.iter().sum::<f64>() <= 10.0 + 1e-7);
        }
    }
}
