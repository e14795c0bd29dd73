//! Successive convex approximation loops, beamformer extraction and
//! closed-form complexity estimates.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::conic::{max_eigpair, rank_residual, solve, SolveStatus};
use crate::convexify::{
    assemble_cqr, assemble_sq, CouplingModel, ExpansionPoint, Iterate, Method, Model, SurrogateConfig,
};
use crate::error::{Error, Result};
use crate::model::{
    device_rates, max_harvest, CMat, CVec, NetworkInstance, ScheduleFrame, SolutionReport, C64,
};

#[derive(Debug, Clone, PartialEq)]
pub struct AlgorithmConfig {
    /// Displacement and rank tolerance ε.
    pub tolerance: f64,
    /// Cap on convex solves.
    pub counter_max: usize,
    /// Initial penalty as a fraction of the initial energy.
    pub penalty_scale: f64,
    pub growth: f64,
    pub beta: f64,
    pub m: u32,
    pub seed: u64,
    pub coupling: CouplingModel,
    /// Relative rate headroom of the initial point.
    pub init_margin: f64,
    pub restarts: usize,
    pub solver_tol: f64,
    pub solver_max_iter: u32,
    pub randomization_draws: usize,
}

impl Default for AlgorithmConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-6,
            counter_max: 30,
            penalty_scale: 1e-3,
            growth: 10.0,
            beta: 2.0,
            m: 4,
            seed: 0,
            coupling: CouplingModel::Minorant,
            init_margin: 0.05,
            restarts: 10,
            solver_tol: 1e-9,
            solver_max_iter: 200,
            randomization_draws: 100,
        }
    }
}

impl AlgorithmConfig {
    pub fn check(&self) -> Result<()> {
        if !(self.tolerance > 0.0) || self.counter_max < 1 || !(self.growth > 1.0) {
            return Err(Error::InvalidArgument("need ε > 0, counter_max ≥ 1, α > 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConvergenceTrace {
    pub surrogate: Vec<f64>,
    /// True energy in joules.
    pub energy: Vec<f64>,
    pub displacement: Vec<f64>,
    pub rank_residual: Vec<f64>,
    pub penalty: Vec<f64>,
}

impl ConvergenceTrace {
    pub fn len(&self) -> usize {
        self.energy.len()
    }

    pub fn is_empty(&self) -> bool {
        self.energy.is_empty()
    }
}

fn rel_change(new: &[f64], old: &[f64]) -> f64 {
    let d: f64 = new.iter().zip(old).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let s: f64 = old.iter().map(|a| a * a).sum::<f64>().sqrt();
    d / s.max(1.0)
}

/// Largest normalized change over the blocks `X`, `τ`, `γ`, `φ` and the
/// rate product.
fn displacement(old: &ExpansionPoint, new: &ExpansionPoint, method: Method) -> f64 {
    let flat = |xs: &[CMat]| -> Vec<f64> { xs.iter().flat_map(|m| m.iter().flat_map(|z| [z.re, z.im])).collect() };
    let phi = |p: &[Vec<f64>]| -> Vec<f64> { p.iter().flatten().copied().collect() };
    let prod = |p: &ExpansionPoint| match method {
        Method::Sq => p.theta.clone(),
        Method::Cqr => p.z.clone(),
    };
    [
        rel_change(&flat(&new.x), &flat(&old.x)),
        rel_change(&new.tau, &old.tau),
        rel_change(&new.gamma, &old.gamma),
        rel_change(&phi(&new.phi), &phi(&old.phi)),
        rel_change(&prod(new), &prod(old)),
    ]
    .into_iter()
    .fold(0.0, f64::max)
}

/// Largest rank residual over slots carrying power.
pub fn max_rank_residual(x: &[CMat]) -> f64 {
    let top = x.iter().map(|m| m.trace().re).fold(0.0, f64::max);
    x.iter()
        .filter(|m| m.trace().re > 1e-6 * top)
        .map(rank_residual)
        .fold(0.0, f64::max)
}

fn random_psd(rng: &mut ChaCha8Rng, n: usize) -> CMat {
    let g = CMat::from_fn(n, n, |_, _| {
        C64::new(StandardNormal.sample(rng), StandardNormal.sample(rng))
    });
    let w = &g * g.adjoint();
    let tr = w.trace().re;
    w / C64::new(tr, 0.0)
}

/// Smallest uniform power scale meeting every target with headroom.
fn uniform_start(
    inst: &NetworkInstance,
    sched: &ScheduleFrame,
    tau: &[f64],
    shape: &[CMat],
    margin: f64,
) -> Result<f64> {
    let unit = Model::new(inst, sched, 1.0)?;
    let mut p: f64 = 0.0;
    for i in (0..unit.devices).filter(|&i| unit.active(i)) {
        let snr1 = unit.snr(i, shape, tau, &unit.max_phi(shape, tau));
        let t = unit.mti_duration(i, tau);
        let need = (unit.target[i] * (1.0 + margin) / t).exp_m1();
        if !(snr1 > 0.0) || !need.is_finite() {
            return Err(Error::InfeasiblePoint(format!("device {i} cannot reach its target")));
        }
        // SNR grows with the square of the power scale
        p = p.max((need / snr1).sqrt());
    }
    Ok(p)
}

fn initial_point(
    inst: &NetworkInstance,
    sched: &ScheduleFrame,
    cfg: &AlgorithmConfig,
    frozen: Option<&[f64]>,
) -> Result<(Model, ExpansionPoint)> {
    let (n, j) = (inst.antenna_count, inst.slot_count);
    let tau: Vec<f64> = match frozen {
        Some(t) => t.to_vec(),
        None => vec![inst.frame_length / j as f64; j],
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let iso = CMat::identity(n, n) / C64::new(n as f64, 0.0);
    for attempt in 0..cfg.restarts.max(1) {
        let shape: Vec<CMat> = (0..j)
            .map(|_| {
                if attempt == 0 {
                    iso.clone()
                } else {
                    (&iso + random_psd(&mut rng, n)) * C64::new(0.5, 0.0)
                }
            })
            .collect();
        let Ok(p) = uniform_start(inst, sched, &tau, &shape, cfg.init_margin) else { continue };
        let unit = if p > 0.0 { p } else { 1.0 };
        let model = Model::new(inst, sched, unit)?;
        let scale = if p > 0.0 { 1.0 } else { 0.0 };
        let x: Vec<CMat> = shape.iter().map(|m| m * C64::new(scale, 0.0)).collect();
        let point = ExpansionPoint::from_covariances(&model, x, tau.clone());
        if point.check(&model).is_ok() {
            return Ok((model, point));
        }
    }
    Err(Error::NoInitialPoint(cfg.restarts.max(1)))
}

/// Nearest PSD matrix in Frobenius norm.
pub fn psd_projection(x: &CMat) -> CMat {
    let sym = (x + x.adjoint()) * C64::new(0.5, 0.0);
    let eig = nalgebra::SymmetricEigen::new(sym);
    let n = x.nrows();
    let mut out = CMat::zeros(n, n);
    for k in 0..n {
        let l = eig.eigenvalues[k];
        if l > 0.0 {
            let v = eig.eigenvectors.column(k);
            out += &v * v.adjoint() * C64::new(l, 0.0);
        }
    }
    (&out + out.adjoint()) * C64::new(0.5, 0.0)
}

fn next_point(model: &Model, it: &Iterate) -> ExpansionPoint {
    // exact products at the new covariances keep the point inside every surrogate
    let x = it.x.iter().map(psd_projection).collect();
    ExpansionPoint::from_covariances(model, x, it.tau.iter().map(|t| t.max(0.0)).collect())
}

/// Shared loop of both tracks; `frozen` fixes all durations.
pub fn run_method(
    inst: &NetworkInstance,
    sched: &ScheduleFrame,
    cfg: &AlgorithmConfig,
    method: Method,
    frozen: Option<&[f64]>,
) -> Result<(SolutionReport, ConvergenceTrace)> {
    cfg.check()?;
    inst.validate()?;
    sched.check(inst)?;
    let (model, mut point) = initial_point(inst, sched, cfg, frozen)?;
    let e0 = point.energy();
    let mut scfg = SurrogateConfig {
        penalty: (cfg.penalty_scale * e0).max(1e-12),
        growth: cfg.growth,
        beta: cfg.beta,
        m: cfg.m,
        coupling: cfg.coupling,
        frozen_durations: frozen.map(|t| t.to_vec()),
        ..SurrogateConfig::default()
    };
    let mut trace = ConvergenceTrace::default();
    let mut converged = false;
    let idle = (0..model.devices).all(|i| !model.active(i));
    for _ in 0..cfg.counter_max {
        let asm = match method {
            Method::Sq => assemble_sq(&model, &point, &scfg)?,
            Method::Cqr => assemble_cqr(&model, &point, &scfg)?,
        };
        let sol = solve(&asm.program, cfg.solver_tol, cfg.solver_max_iter)?;
        let usable = sol.status == SolveStatus::Optimal
            || (sol.status == SolveStatus::Inaccurate && sol.primal_residual <= 1e-6 * sol.scale);
        if !usable {
            if trace.is_empty() {
                return Err(Error::Solver(format!("first subproblem ended with {:?}", sol.status)));
            }
            break;
        }
        let it = asm.layout.read(&sol.x, sol.objective);
        let new_point = next_point(&model, &it);
        let disp = displacement(&point, &new_point, method);
        let rr = max_rank_residual(&new_point.x);
        trace.surrogate.push(sol.objective * model.power_unit);
        trace.energy.push(new_point.energy() * model.power_unit);
        trace.displacement.push(disp);
        trace.rank_residual.push(rr);
        trace.penalty.push(scfg.penalty);
        point = new_point;
        if idle {
            // without rate constraints the durations are arbitrary and X = 0 is optimal
            point.x.iter_mut().for_each(|m| m.fill(C64::new(0.0, 0.0)));
            point.gamma.iter_mut().for_each(|g| *g = 0.0);
            converged = true;
            break;
        }
        if disp < cfg.tolerance {
            if rr <= cfg.tolerance {
                converged = true;
                break;
            }
            scfg.penalty *= scfg.growth;
        }
    }
    let report = finish(inst, sched, &model, &point, cfg, trace.surrogate.clone(), converged)?;
    Ok((report, trace))
}

pub fn run_sq(inst: &NetworkInstance, sched: &ScheduleFrame, cfg: &AlgorithmConfig) -> Result<(SolutionReport, ConvergenceTrace)> {
    run_method(inst, sched, cfg, Method::Sq, None)
}

pub fn run_cqr(inst: &NetworkInstance, sched: &ScheduleFrame, cfg: &AlgorithmConfig) -> Result<(SolutionReport, ConvergenceTrace)> {
    run_method(inst, sched, cfg, Method::Cqr, None)
}

/// Physical rates with maximal harvesting.
fn rates_of(inst: &NetworkInstance, sched: &ScheduleFrame, cov: &[CMat], tau: &[f64]) -> Vec<f64> {
    let eps = max_harvest(inst, sched, cov, tau);
    device_rates(inst, sched, cov, tau, &eps)
}

fn meets(inst: &NetworkInstance, rates: &[f64]) -> bool {
    rates.iter().zip(&inst.rate_targets).all(|(r, c)| *r >= c - 1e-9)
}

/// Smallest `s ≥ 0` such that scaling `cov[slot]` by `s` meets every target,
/// or `None` above `s = 1e12`.
fn min_slot_scale(inst: &NetworkInstance, sched: &ScheduleFrame, cov: &[CMat], tau: &[f64], slot: usize) -> Option<f64> {
    let mut work = cov.to_vec();
    let base = cov[slot].clone();
    let ok = |s: f64, work: &mut Vec<CMat>| {
        work[slot] = &base * C64::new(s, 0.0);
        meets(inst, &rates_of(inst, sched, work, tau))
    };
    if ok(0.0, &mut work) {
        return Some(0.0);
    }
    let mut hi = 1.0;
    while !ok(hi, &mut work) {
        hi *= 2.0;
        if hi > 1e12 {
            return None;
        }
    }
    let mut lo = 0.0;
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if ok(mid, &mut work) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some(hi)
}

/// Beamformer from a covariance.
///
/// A numerically rank-one `X` gives `√λ_max·v_max`. Otherwise candidates are
/// drawn as `x = X^{1/2}ξ` with `ξ` standard complex Gaussian; `oracle`
/// returns the power factor that makes a candidate feasible, and the cheapest
/// feasible candidate wins.
pub fn extract_beamformer<F>(x: &CMat, draws: usize, seed: u64, mut oracle: F) -> Result<CVec>
where
    F: FnMut(&CVec) -> Option<f64>,
{
    let (lmax, v) = max_eigpair(x)?;
    if rank_residual(x) <= 1e-6 {
        return Ok(v * C64::new(lmax.max(0.0).sqrt(), 0.0));
    }
    let n = x.nrows();
    let eig = nalgebra::SymmetricEigen::new(x.clone());
    let root = CMat::from_fn(n, n, |r, c| eig.eigenvectors[(r, c)] * eig.eigenvalues[c].max(0.0).sqrt());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(f64, CVec)> = None;
    for _ in 0..draws {
        let xi = CVec::from_fn(n, |_, _| {
            let (a, b): (f64, f64) = (StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng));
            C64::new(a, b) * std::f64::consts::FRAC_1_SQRT_2
        });
        let cand = &root * xi;
        if let Some(s) = oracle(&cand) {
            let e = s * cand.norm_squared();
            if best.as_ref().is_none_or(|b| e < b.0) {
                best = Some((e, cand * C64::new(s.sqrt(), 0.0)));
            }
        }
    }
    best.map(|b| b.1).ok_or(Error::Extraction { draws, gap: f64::INFINITY })
}

fn finish(
    inst: &NetworkInstance,
    sched: &ScheduleFrame,
    model: &Model,
    point: &ExpansionPoint,
    cfg: &AlgorithmConfig,
    surrogate: Vec<f64>,
    converged: bool,
) -> Result<SolutionReport> {
    let p = model.power_unit;
    let tau = point.tau.clone();
    let mut cov: Vec<CMat> = point.x.iter().map(|m| m * C64::new(p, 0.0)).collect();
    let rank_residuals: Vec<f64> = cov.iter().map(rank_residual).collect();
    let cov_energy: f64 = tau.iter().zip(&cov).map(|(t, m)| t * m.trace().re).sum();

    // restoration: uniform power increase if the exact rates fall short
    if !meets(inst, &rates_of(inst, sched, &cov, &tau)) {
        let mut lo = 1.0;
        let mut hi = 1.0;
        let scaled = |s: f64| -> Vec<CMat> { cov.iter().map(|m| m * C64::new(s, 0.0)).collect() };
        while !meets(inst, &rates_of(inst, sched, &scaled(hi), &tau)) && hi < 1e6 {
            lo = hi;
            hi *= 1.5;
        }
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if meets(inst, &rates_of(inst, sched, &scaled(mid), &tau)) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        cov = scaled(hi);
    }

    // slot-by-slot extraction against the exact constraints
    let mut beams = Vec::with_capacity(cov.len());
    for j in 0..cov.len() {
        let n = cov[j].nrows();
        if cov[j].trace().re <= 0.0 {
            beams.push(CVec::zeros(n));
            continue;
        }
        let seed = cfg.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(j as u64);
        let current = cov.clone();
        let x = extract_beamformer(&cov[j], cfg.randomization_draws, seed, |cand| {
            let mut trial = current.clone();
            trial[j] = cand * cand.adjoint();
            min_slot_scale(inst, sched, &trial, &tau, j)
        })?;
        cov[j] = &x * x.adjoint();
        beams.push(x);
    }
    // rank-one truncation can leave a small shortfall
    if !meets(inst, &rates_of(inst, sched, &cov, &tau)) {
        for j in 0..cov.len() {
            if let Some(s) = min_slot_scale(inst, sched, &cov, &tau, j) {
                if s > 1.0 && meets(inst, &rates_of(inst, sched, &scale_slot(&cov, j, s), &tau)) {
                    cov = scale_slot(&cov, j, s);
                    beams[j] *= C64::new(s.sqrt(), 0.0);
                    break;
                }
            }
        }
    }
    let harvested = max_harvest(inst, sched, &cov, &tau);
    let rates = device_rates(inst, sched, &cov, &tau, &harvested);
    let total: f64 = tau.iter().zip(&beams).map(|(t, x)| t * x.norm_squared()).sum();
    Ok(SolutionReport {
        total_energy: total,
        reflected_energy: harvested.iter().map(|r| r.iter().sum()).collect(),
        beamformers: beams,
        covariances: cov,
        durations: tau,
        rates,
        harvested,
        rank_residuals,
        iterations: surrogate.len(),
        surrogate_trace: surrogate,
        converged,
        extraction_inflation: if cov_energy > 0.0 { total / cov_energy - 1.0 } else { 0.0 },
    })
}

fn scale_slot(cov: &[CMat], j: usize, s: f64) -> Vec<CMat> {
    let mut out = cov.to_vec();
    out[j] *= C64::new(s, 0.0);
    out
}

/// Closed-form interior-point cost estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Complexity {
    pub kappa: f64,
    pub size: f64,
    pub flops: f64,
}

pub fn complexity_sq(i: usize, n: usize, eps: f64) -> Complexity {
    let (i, n) = (i as f64, n as f64);
    let (b, v) = (5.0, 8.0);
    let kappa = i * (2.0 * n * n + i + 1.5);
    let size = (b + 1.0) * v * kappa * (kappa + 1.0) / 2.0 + v + b + 3.0;
    let flops = (1.0 + v * kappa).sqrt()
        * (b.powi(3) + b * b * v * kappa.powi(2) + b * v * kappa.powi(3))
        * (size / eps).ln();
    Complexity { kappa, size, flops }
}

pub fn complexity_cqr(i: usize, n: usize, m: u32, eps: f64) -> Complexity {
    let (i, n, m) = (i as f64, n as f64, m as f64);
    let (b, v) = (7.0, 13.0);
    let kappa = i * (3.0 * n * n + 0.5 * i * i + m + 7.0);
    let size = (v + v * kappa) * (b + 1.0) + v + b + 3.0;
    // the κ² sum runs over v = 0..V
    let flops = (v + 1.0).sqrt() * b * (b * b + v + (v + 1.0) * kappa * kappa) * (size / eps).ln();
    Complexity { kappa, size, flops }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{validate_solution, ChannelSet, Tolerances};

    fn scalar(c: f64) -> (NetworkInstance, ScheduleFrame) {
        let ch = ChannelSet::new(vec![CVec::from_element(1, C64::new(1.0, 0.0))], vec![C64::new(1.0, 0.0)]).unwrap();
        let mut inst = NetworkInstance::uniform(ch, vec![c], 0.8, 1e-3, 10.0, 10.0).unwrap();
        inst.slot_count = 2;
        (inst, ScheduleFrame::new(2, vec![vec![0]]).unwrap())
    }

    #[test]
    fn complexity_examples() {
        let s = complexity_sq(6, 4, 1e-6);
        assert_eq!(s.kappa, 237.0);
        assert_eq!(s.size, 1_353_760.0);
        assert_eq!(complexity_sq(1, 1, 1e-6).kappa, 4.5);
        let c = complexity_cqr(6, 4, 4, 1e-6);
        assert_eq!(c.kappa, 462.0);
        assert_eq!(c.size, 48_175.0);
        assert_eq!(complexity_cqr(1, 1, 1, 1e-6).kappa, 11.5);
    }

    #[test]
    fn complexity_monotone_and_ordered() {
        for i in 1..40 {
            assert!(complexity_sq(i + 1, 4, 1e-6).flops > complexity_sq(i, 4, 1e-6).flops);
            assert!(complexity_cqr(i + 1, 4, 4, 1e-6).flops > complexity_cqr(i, 4, 4, 1e-6).flops);
            assert!(complexity_cqr(i, 4, 4, 1e-6).flops < complexity_sq(i, 4, 1e-6).flops);
        }
        for n in 1..10 {
            assert!(complexity_sq(3, n + 1, 1e-6).flops > complexity_sq(3, n, 1e-6).flops);
            assert!(complexity_cqr(3, n + 1, 4, 1e-6).flops > complexity_cqr(3, n, 4, 1e-6).flops);
        }
    }

    #[test]
    fn zero_targets_give_zero_energy() {
        let (inst, sched) = scalar(0.0);
        for method in [Method::Sq, Method::Cqr] {
            let (rep, tr) = run_method(&inst, &sched, &AlgorithmConfig::default(), method, None).unwrap();
            assert_eq!(tr.len(), 1);
            assert!(rep.converged);
            assert!(rep.total_energy.abs() < 1e-8, "{}", rep.total_energy);
        }
    }

    #[test]
    fn extraction_rank_one() {
        let x = CVec::from_vec(vec![C64::new(0.5, 0.0), C64::new(0.3, -0.2)]);
        let got = extract_beamformer(&(&x * x.adjoint()), 100, 1, |_| Some(1.0)).unwrap();
        assert!((&got - &x).norm() < 1e-10);
    }

    #[test]
    fn extraction_randomized_energy_bound() {
        let x = CMat::identity(2, 2);
        let got = extract_beamformer(&x, 100, 3, |c| Some(1.0 / c.norm_squared())).unwrap();
        assert!((got.norm_squared() - 1.0).abs() < 1e-12);
        assert!(got.norm_squared() <= x.trace().re);
        let none = extract_beamformer(&x, 10, 3, |_| None);
        assert!(matches!(none, Err(Error::Extraction { draws: 10, .. })));
    }

    #[test]
    fn scalar_runs_are_feasible() {
        let (inst, sched) = scalar(0.5);
        for method in [Method::Sq, Method::Cqr] {
            let (rep, _) = run_method(&inst, &sched, &AlgorithmConfig::default(), method, None).unwrap();
            let v = validate_solution(&inst, &sched, &rep, &Tolerances::default());
            assert!(v.is_empty(), "{method:?}: {v:?}");
            assert!(rep.total_energy > 0.09 && rep.total_energy < 0.2, "{}", rep.total_energy);
        }
    }
}
