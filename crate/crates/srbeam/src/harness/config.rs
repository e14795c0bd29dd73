//! Experiment configuration read from TOML.
//!
//! Every key is optional; missing keys fall back to the defaults of the
//! chosen experiment. Unknown keys are an error.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::convexify::CouplingModel;
use crate::error::{Error, Result};
use crate::scenarios::{Geometry, Placement, SceneParams};
use crate::sca::AlgorithmConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ExperimentId {
    RateSweep,
    MSweep,
    AntennaSweep,
    Complexity,
    Convergence,
    TdmaCompare,
    IotEe,
    LocationStudy,
}

impl ExperimentId {
    pub const ALL: [ExperimentId; 8] = [
        ExperimentId::RateSweep,
        ExperimentId::MSweep,
        ExperimentId::AntennaSweep,
        ExperimentId::Complexity,
        ExperimentId::Convergence,
        ExperimentId::TdmaCompare,
        ExperimentId::IotEe,
        ExperimentId::LocationStudy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentId::RateSweep => "rate_sweep",
            ExperimentId::MSweep => "m_sweep",
            ExperimentId::AntennaSweep => "antenna_sweep",
            ExperimentId::Complexity => "complexity",
            ExperimentId::Convergence => "convergence",
            ExperimentId::TdmaCompare => "tdma_compare",
            ExperimentId::IotEe => "iot_ee",
            ExperimentId::LocationStudy => "location_study",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown experiment {s:?}")))
    }
}

impl std::fmt::Display for ExperimentId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MethodKind {
    Sq,
    Cqr,
    Tdma,
}

impl MethodKind {
    pub fn name(self) -> &'static str {
        match self {
            MethodKind::Sq => "SQ",
            MethodKind::Cqr => "CQR",
            MethodKind::Tdma => "TDMA",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "SQ" => Ok(MethodKind::Sq),
            "CQR" => Ok(MethodKind::Cqr),
            "TDMA" => Ok(MethodKind::Tdma),
            _ => Err(Error::Config(format!("unknown method {s:?}"))),
        }
    }
}

/// Resolved configuration of one experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: ExperimentId,
    pub trials: usize,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub svg: bool,
    /// Record wall time; off keeps CSV output byte-reproducible.
    pub timing: bool,
    pub scene: SceneParams,
    pub c_values: Vec<f64>,
    pub m_values: Vec<u32>,
    pub antenna_values: Vec<usize>,
    pub device_values: Vec<usize>,
    pub methods: Vec<MethodKind>,
    pub placements: Vec<Placement>,
    pub se_values: Vec<f64>,
    pub complexity_epsilon: f64,
    pub protocol_file: Option<PathBuf>,
    pub algorithm: AlgorithmConfig,
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| a + (b - a) * k as f64 / (n - 1) as f64).collect()
}

impl ExperimentConfig {
    /// Desk-scale defaults of an experiment.
    pub fn defaults(experiment: ExperimentId) -> Self {
        let mut c = Self {
            experiment,
            trials: 50,
            seed: 1,
            out_dir: PathBuf::from("results"),
            svg: false,
            timing: false,
            scene: SceneParams::default(),
            c_values: vec![0.05, 0.1, 0.15, 0.2, 0.25],
            m_values: vec![4],
            antenna_values: vec![4],
            device_values: vec![4],
            methods: vec![MethodKind::Cqr],
            placements: vec![Placement::UniformWithin100mOfSue],
            se_values: linspace(1.0, 10.0, 10),
            complexity_epsilon: 1e-6,
            protocol_file: None,
            algorithm: AlgorithmConfig::default(),
        };
        match experiment {
            ExperimentId::RateSweep => c.methods = vec![MethodKind::Sq, MethodKind::Cqr],
            ExperimentId::MSweep => {
                c.trials = 20;
                c.m_values = (1..=6).collect();
            }
            ExperimentId::AntennaSweep => c.antenna_values = vec![1, 4, 9],
            ExperimentId::Complexity => {
                c.trials = 1;
                c.device_values = (1..=40).collect();
                c.methods = vec![MethodKind::Sq, MethodKind::Cqr];
            }
            ExperimentId::Convergence => {
                c.trials = 5;
                c.c_values = vec![0.1];
                c.methods = vec![MethodKind::Sq, MethodKind::Cqr];
            }
            ExperimentId::TdmaCompare => {
                c.scene.antennas = 9;
                c.scene.devices = 8;
                c.c_values = vec![0.1];
                c.methods = vec![MethodKind::Cqr, MethodKind::Tdma];
            }
            ExperimentId::IotEe => c.trials = 1,
            ExperimentId::LocationStudy => {
                c.c_values = vec![0.1];
                c.placements = vec![Placement::NearBs, Placement::Mid, Placement::NearSue];
            }
        }
        c.antenna_values = match experiment {
            ExperimentId::AntennaSweep => c.antenna_values,
            _ => vec![c.scene.antennas],
        };
        c
    }

    pub fn from_toml(experiment: ExperimentId, text: &str) -> Result<Self> {
        let file: FileConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let mut c = Self::defaults(experiment);
        file.apply(&mut c)?;
        c.check()?;
        Ok(c)
    }

    pub fn load(experiment: ExperimentId, path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(experiment, &text)
    }

    pub fn check(&self) -> Result<()> {
        if self.trials < 1 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if self.c_values.is_empty() || self.c_values.iter().any(|c| !(*c >= 0.0)) {
            return Err(Error::Config("c_values must be nonempty and nonnegative".into()));
        }
        if self.c_values.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::Config("c_values must be nondecreasing".into()));
        }
        if self.m_values.iter().any(|&m| m < 1) || self.m_values.is_empty() {
            return Err(Error::Config("m_values must be at least 1".into()));
        }
        if self.antenna_values.iter().chain(&self.device_values).any(|&k| k < 1) {
            return Err(Error::Config("antenna and device counts must be at least 1".into()));
        }
        if self.methods.is_empty() || self.placements.is_empty() {
            return Err(Error::Config("methods and placements must be nonempty".into()));
        }
        if self.se_values.iter().any(|s| !(*s >= 0.0)) || !(self.complexity_epsilon > 0.0) {
            return Err(Error::Config("se_values must be nonnegative and epsilon positive".into()));
        }
        self.algorithm.check().map_err(|e| Error::Config(e.to_string()))
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    experiment: Option<String>,
    trials: Option<usize>,
    seed: Option<u64>,
    out: Option<PathBuf>,
    svg: Option<bool>,
    timing: Option<bool>,
    #[serde(default)]
    scene: SceneFile,
    #[serde(default)]
    sweep: SweepFile,
    #[serde(default)]
    algorithm: AlgorithmFile,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneFile {
    antennas: Option<usize>,
    devices: Option<usize>,
    frame_length: Option<f64>,
    spreading_factor: Option<f64>,
    eta: Option<f64>,
    noise_dbm: Option<f64>,
    bs_sue_distance: Option<f64>,
    placement: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepFile {
    c_values: Option<Vec<f64>>,
    m_values: Option<Vec<u32>>,
    antenna_values: Option<Vec<usize>>,
    device_values: Option<Vec<usize>>,
    methods: Option<Vec<String>>,
    placements: Option<Vec<String>>,
    se_values: Option<Vec<f64>>,
    complexity_epsilon: Option<f64>,
    protocol_file: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct AlgorithmFile {
    tolerance: Option<f64>,
    counter_max: Option<usize>,
    penalty_scale: Option<f64>,
    growth: Option<f64>,
    beta: Option<f64>,
    coupling: Option<String>,
    init_margin: Option<f64>,
    restarts: Option<usize>,
    solver_tol: Option<f64>,
    solver_max_iter: Option<u32>,
    randomization_draws: Option<usize>,
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

impl FileConfig {
    fn apply(self, c: &mut ExperimentConfig) -> Result<()> {
        if let Some(e) = &self.experiment {
            if ExperimentId::parse(e)? != c.experiment {
                return Err(Error::Config(format!("config is for {e}, not {}", c.experiment)));
            }
        }
        set(&mut c.trials, self.trials);
        set(&mut c.seed, self.seed);
        set(&mut c.out_dir, self.out);
        set(&mut c.svg, self.svg);
        set(&mut c.timing, self.timing);

        let s = self.scene;
        let antennas_given = s.antennas.is_some();
        set(&mut c.scene.antennas, s.antennas);
        set(&mut c.scene.devices, s.devices);
        set(&mut c.scene.frame_length, s.frame_length);
        set(&mut c.scene.spreading_factor, s.spreading_factor);
        set(&mut c.scene.eta, s.eta);
        if let Some(dbm) = s.noise_dbm {
            c.scene.receiver_noise = 10f64.powf((dbm - 30.0) / 10.0);
        }
        let placement = match s.placement {
            Some(p) => Placement::parse(&p)?,
            None => c.scene.geometry.placement,
        };
        let distance = s.bs_sue_distance.unwrap_or(c.scene.geometry.bs_sue_distance);
        c.scene.geometry = Geometry::new(distance, placement).map_err(|e| Error::Config(e.to_string()))?;

        let w = self.sweep;
        set(&mut c.c_values, w.c_values);
        set(&mut c.m_values, w.m_values);
        if c.experiment != ExperimentId::AntennaSweep && antennas_given {
            c.antenna_values = vec![c.scene.antennas];
        }
        set(&mut c.antenna_values, w.antenna_values);
        set(&mut c.device_values, w.device_values);
        if let Some(m) = w.methods {
            c.methods = m.iter().map(|s| MethodKind::parse(s)).collect::<Result<_>>()?;
        }
        if let Some(p) = w.placements {
            c.placements = p.iter().map(|s| Placement::parse(s)).collect::<Result<_>>()?;
        }
        set(&mut c.se_values, w.se_values);
        set(&mut c.complexity_epsilon, w.complexity_epsilon);
        c.protocol_file = w.protocol_file.or(c.protocol_file.take());

        let a = self.algorithm;
        let alg = &mut c.algorithm;
        set(&mut alg.tolerance, a.tolerance);
        set(&mut alg.counter_max, a.counter_max);
        set(&mut alg.penalty_scale, a.penalty_scale);
        set(&mut alg.growth, a.growth);
        set(&mut alg.beta, a.beta);
        set(&mut alg.init_margin, a.init_margin);
        set(&mut alg.restarts, a.restarts);
        set(&mut alg.solver_tol, a.solver_tol);
        set(&mut alg.solver_max_iter, a.solver_max_iter);
        set(&mut alg.randomization_draws, a.randomization_draws);
        if let Some(k) = a.coupling {
            alg.coupling = match k.as_str() {
                "minorant" => CouplingModel::Minorant,
                "taylor" => CouplingModel::Taylor,
                _ => return Err(Error::Config(format!("unknown coupling {k:?}"))),
            };
        }
        Ok(())
    }
}
