//! Run configuration: one TOML file, strict keys, flags layered on top.

use std::path::{Path, PathBuf};

use oscid_core::ident::Method;
use oscid_core::{IdentifyConfig, OscillatorModel, SimConfig, Theta};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Simulate,
    Identify,
    Sweep,
    Compare,
    Report,
}

/// Oscillator used by `simulate` and as the fixed point of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelBlock {
    pub epsilon: f64,
    pub alpha: f64,
    pub d: f64,
    pub omega: f64,
}

impl Default for ModelBlock {
    fn default() -> Self {
        ModelBlock { epsilon: 0.1, alpha: -0.1, d: 0.1, omega: std::f64::consts::TAU }
    }
}

impl ModelBlock {
    pub fn model(&self) -> oscid_core::Result<OscillatorModel> {
        OscillatorModel::new(Theta::new(self.epsilon, self.alpha, self.d)?, self.omega)
    }
}

/// Simulation settings; the seed comes from the run's seed list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimBlock {
    pub t_max: f64,
    pub fs: f64,
    pub substeps: usize,
    pub x0: f64,
    pub v0: f64,
    pub transient_cycles: f64,
}

impl Default for SimBlock {
    fn default() -> Self {
        let s = SimConfig::default();
        SimBlock {
            t_max: s.t_max,
            fs: s.fs,
            substeps: s.substeps,
            x0: s.x0,
            v0: s.v0,
            transient_cycles: s.transient_cycles,
        }
    }
}

impl SimBlock {
    pub fn with_seed(&self, seed: u64) -> SimConfig {
        SimConfig {
            t_max: self.t_max,
            fs: self.fs,
            substeps: self.substeps,
            seed,
            x0: self.x0,
            v0: self.v0,
            transient_cycles: self.transient_cycles,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    Epsilon,
    Alpha,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepBlock {
    pub axis: Axis,
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl Default for SweepBlock {
    fn default() -> Self {
        SweepBlock { axis: Axis::Epsilon, start: -0.1, stop: 0.1, step: 0.01 }
    }
}

impl SweepBlock {
    /// Inclusive grid `start, start + step, ..., stop`.
    pub fn values(&self) -> CliResult<Vec<f64>> {
        let span = self.stop - self.start;
        if !(self.step > 0.0 && self.step.is_finite() && span.is_finite() && span >= 0.0) {
            return Err(CliError::Config(format!(
                "sweep needs start <= stop and a positive step, got {}..{} step {}",
                self.start, self.stop, self.step
            )));
        }
        let n = (span / self.step + 1e-9).floor() as usize + 1;
        // round away accumulated binary noise so axis values print cleanly
        Ok((0..n).map(|k| ((self.start + k as f64 * self.step) * 1e12).round() / 1e12).collect())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReportBlock {
    /// Parameters to assess; identified per segment when absent.
    pub theta: Option<Theta>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Checked against the verb when given.
    pub mode: Option<Mode>,
    pub model: ModelBlock,
    pub sim: SimBlock,
    pub identify: IdentifyConfig,
    pub method: Method,
    /// Window length for segmenting the input record.
    pub segment: Option<f64>,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    /// Worker threads for sweeps.
    pub jobs: usize,
    pub sweep: SweepBlock,
    pub report: ReportBlock,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            mode: None,
            model: ModelBlock::default(),
            sim: SimBlock::default(),
            identify: IdentifyConfig::default(),
            method: Method::Prop,
            segment: None,
            seeds: vec![0],
            output_dir: PathBuf::from("out"),
            jobs: 1,
            sweep: SweepBlock::default(),
            report: ReportBlock::default(),
        }
    }
}

/// Flag values that override the file.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub seeds: Option<Vec<u64>>,
    pub method: Option<Method>,
    pub segment: Option<f64>,
    pub jobs: Option<usize>,
    pub theta: Option<Theta>,
}

impl RunConfig {
    pub fn parse(text: &str) -> CliResult<RunConfig> {
        toml::from_str(text).map_err(|e| CliError::Config(format!("config: {}", e.message().trim())))
    }

    pub fn load(path: &Path) -> CliResult<RunConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        RunConfig::parse(&text)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(p) = &o.out {
            self.output_dir = p.clone();
        }
        if let Some(s) = &o.seeds {
            self.seeds = s.clone();
        }
        if let Some(s) = o.seed {
            self.seeds = vec![s];
        }
        if let Some(m) = o.method {
            self.method = m;
        }
        if let Some(s) = o.segment {
            self.segment = Some(s);
        }
        if let Some(j) = o.jobs {
            self.jobs = j;
        }
        if let Some(t) = o.theta {
            self.report.theta = Some(t);
        }
    }

    pub fn validate(&self, mode: Mode) -> CliResult<()> {
        if let Some(m) = self.mode {
            if m != mode {
                return Err(CliError::Config(format!("config is for mode {m:?} but the command is {mode:?}")));
            }
        }
        if self.seeds.is_empty() {
            return Err(CliError::Config("seed list is empty".into()));
        }
        if self.jobs == 0 {
            return Err(CliError::Config("jobs must be at least 1".into()));
        }
        if let Some(s) = self.segment {
            if !(s > 0.0 && s.is_finite()) {
                return Err(CliError::Config(format!("segment length must be positive, got {s}")));
            }
        }
        self.identify.validate()?;
        match mode {
            Mode::Simulate => {
                let model = self.model.model()?;
                self.sim.with_seed(0).validate(model.omega)?;
            }
            Mode::Sweep => {
                self.sweep.values()?;
                self.model.model()?;
                self.sim.with_seed(0).validate(self.model.omega)?;
            }
            Mode::Report => {
                if let Some(t) = &self.report.theta {
                    t.validate()?;
                }
            }
            Mode::Identify | Mode::Compare => {}
        }
        Ok(())
    }
}

/// Seeds given on the command line, parsed as one value.
#[derive(Debug, Clone)]
pub struct SeedList(pub Vec<u64>);

/// `a..b` (end exclusive) or a comma-separated list.
pub fn parse_seeds(s: &str) -> Result<SeedList, String> {
    seed_values(s).map(SeedList)
}

fn seed_values(s: &str) -> Result<Vec<u64>, String> {
    let bad = |e: std::num::ParseIntError| format!("bad seed in '{s}': {e}");
    if let Some((a, b)) = s.split_once("..") {
        let (a, b): (u64, u64) = (a.trim().parse().map_err(bad)?, b.trim().parse().map_err(bad)?);
        if b <= a {
            return Err(format!("empty seed range '{s}'"));
        }
        return Ok((a..b).collect());
    }
    s.split(',').map(|v| v.trim().parse().map_err(bad)).collect()
}

/// `epsilon,alpha,d`.
pub fn parse_theta(s: &str) -> Result<Theta, String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|x| x.trim().parse::<f64>().map_err(|e| format!("bad number in '{s}': {e}")))
        .collect::<Result<_, _>>()?;
    match v[..] {
        [e, a, d] => Theta::new(e, a, d).map_err(|e| e.to_string()),
        _ => Err(format!("expected epsilon,alpha,d, got '{s}'")),
    }
}
