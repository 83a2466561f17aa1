//! Experiment configuration: schema, validation, canonical serialization.

use mkv_core::bsde::default_schedule;
use mkv_core::control_opt::{enumerate_step_controls, ControlCatalog, DEFAULT_CATALOG_CAP};
use mkv_core::problem::ProblemConfig;
use mkv_core::randomized::{InitialControl, MarkIntensity, RandomizedConfig};
use mkv_core::lattice::DEFAULT_STATE_CAP;
use mkv_core::{BenchmarkProblem, Error, Result, SimConfig, XiSampler};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;

pub const DEFAULT_REPEATS: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemConfig,
    #[serde(default)]
    pub t: f64,
    /// Start point of the representative particle; required by every route
    /// except `value-mkv`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x: Option<Vec<f64>>,
    /// Initial law π.
    pub pi: XiSampler,
    pub catalog: CatalogSection,
    pub sim: SimSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub randomized: Option<RandomizedSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verify: Option<VerifySection>,
    pub output: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CatalogSection {
    /// Intervals k.
    pub k: usize,
    /// History cells L.
    pub l: usize,
    #[serde(default = "default_catalog_cap")]
    pub cap: usize,
    /// Catalog entry simulated by `simulate`.
    #[serde(default)]
    pub control: usize,
}

fn default_catalog_cap() -> usize {
    DEFAULT_CATALOG_CAP
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    pub n_steps: usize,
    /// ξ-particles N.
    pub n_xi: usize,
    /// Inner x-particles M.
    pub n_x: usize,
    /// Base seed; repeat r uses `seed + r`.
    pub seed: u64,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
}

fn default_repeats() -> usize {
    DEFAULT_REPEATS
}

/// Jump rates λ over the catalog.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RatesSpec {
    /// The same rate on every catalog entry.
    Uniform { rate: f64 },
    /// Explicit marks (catalog indices) and rates.
    Explicit { marks: Vec<usize>, rates: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomizedSection {
    pub rates: RatesSpec,
    pub k_max: usize,
    pub nu_lo: f64,
    pub nu_hi: f64,
    #[serde(default)]
    pub initial: InitialControl,
    /// Penalty levels n for the BSDE route.
    #[serde(default = "default_schedule")]
    pub schedule: Vec<f64>,
    /// Stop once successive roots differ by less; 0 runs the full schedule.
    #[serde(default)]
    pub tol: f64,
    #[serde(default = "default_state_cap")]
    pub state_cap: usize,
}

fn default_state_cap() -> usize {
    DEFAULT_STATE_CAP
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySection {
    /// Restart times of the flow check as fractions of the horizon.
    #[serde(default = "default_flow_fractions")]
    pub flow_fractions: Vec<f64>,
    /// Intermediate time of the DPP check as a fraction of the horizon; none skips it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dpp_fraction: Option<f64>,
    /// Step counts for the residual-vs-Δt table.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub dt_levels: Vec<usize>,
}

fn default_flow_fractions() -> Vec<f64> {
    vec![0.25, 0.5, 0.75]
}

impl Default for VerifySection {
    fn default() -> Self {
        Self {
            flow_fractions: default_flow_fractions(),
            dpp_fraction: None,
            dt_levels: Vec::new(),
        }
    }
}

fn bad(pointer: &str, message: impl Into<String>) -> Error {
    Error::Config {
        pointer: pointer.into(),
        message: message.into(),
    }
}

impl ExperimentConfig {
    /// Parses and validates; schema errors carry the JSON pointer of the
    /// offending field.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let pointer = pointer_of(&e.path().to_string());
            Error::Config {
                pointer,
                message: e.into_inner().to_string(),
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Canonical bytes: pretty JSON with a trailing newline.
    pub fn to_canonical_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }

    /// SHA-256 of the canonical bytes, hex encoded.
    pub fn hash(&self) -> String {
        hash_bytes(self.to_canonical_json().as_bytes())
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.problem()?;
        let sim = &self.sim;
        if sim.n_steps == 0 {
            return Err(bad("/sim/n_steps", "must be at least 1"));
        }
        if sim.n_xi < 2 {
            return Err(bad("/sim/n_xi", "must be at least 2"));
        }
        if sim.n_x == 0 {
            return Err(bad("/sim/n_x", "must be at least 1"));
        }
        if sim.repeats == 0 {
            return Err(bad("/sim/repeats", "must be at least 1"));
        }
        if self.catalog.k == 0 {
            return Err(bad("/catalog/k", "must be at least 1"));
        }
        if self.catalog.l == 0 {
            return Err(bad("/catalog/l", "must be at least 1"));
        }
        if !sim.n_steps.is_multiple_of(self.catalog.k) {
            return Err(bad("/sim/n_steps", format!("must be a multiple of catalog.k = {} so interval boundaries are grid nodes", self.catalog.k)));
        }
        if !(self.t >= 0.0 && self.t < p.horizon) {
            return Err(bad("/t", format!("must lie in [0, {})", p.horizon)));
        }
        if let Some(x) = &self.x {
            if x.len() != p.state_dim() {
                return Err(bad("/x", format!("expected {} components, got {}", p.state_dim(), x.len())));
            }
        }
        if self.pi.dim() != p.state_dim() {
            return Err(bad("/pi", format!("law of dimension {} for a {}-dimensional state", self.pi.dim(), p.state_dim())));
        }
        if let Some(r) = &self.randomized {
            if r.k_max == 0 {
                return Err(bad("/randomized/k_max", "must be at least 1"));
            }
            if !(r.nu_lo > 0.0 && r.nu_lo <= r.nu_hi && r.nu_hi.is_finite()) {
                return Err(bad("/randomized/nu_lo", "need 0 < nu_lo <= nu_hi < inf"));
            }
            if r.schedule.is_empty() || r.schedule.windows(2).any(|w| w[1] <= w[0]) || r.schedule[0] < 0.0 {
                return Err(bad("/randomized/schedule", "must be non-empty, nonnegative and increasing"));
            }
        }
        if let Some(v) = &self.verify {
            if let Some(i) = v.flow_fractions.iter().position(|f| !(0.0..=1.0).contains(f)) {
                return Err(bad(&format!("/verify/flow_fractions/{i}"), "must lie in [0, 1]"));
            }
            if let Some(f) = v.dpp_fraction {
                if !(f > 0.0 && f < 1.0) {
                    return Err(bad("/verify/dpp_fraction", "must lie in (0, 1)"));
                }
            }
            if let Some(i) = v.dt_levels.iter().position(|n| *n == 0 || n % self.catalog.k != 0) {
                return Err(bad(&format!("/verify/dt_levels/{i}"), format!("must be a positive multiple of catalog.k = {}", self.catalog.k)));
            }
        }
        Ok(())
    }

    pub fn problem(&self) -> Result<BenchmarkProblem> {
        self.problem.build().map_err(|e| match e {
            Error::UnknownProblem(name) => bad("/problem/name", format!("unknown benchmark problem `{name}`")),
            other => other,
        })
    }

    pub fn x(&self) -> Result<&[f64]> {
        self.x.as_deref().ok_or_else(|| bad("/x", "this command needs a start point"))
    }

    pub fn catalog(&self, problem: &BenchmarkProblem) -> Result<ControlCatalog> {
        enumerate_step_controls(problem.actions.len(), problem.horizon, self.catalog.k, self.catalog.l, self.catalog.cap)
    }

    /// Simulation settings of repeat `r`.
    pub fn sim_config(&self, r: usize) -> SimConfig {
        SimConfig {
            n_steps: self.sim.n_steps,
            n_xi: self.sim.n_xi,
            n_x: self.sim.n_x,
            seed: self.sim.seed.wrapping_add(r as u64),
        }
    }

    pub fn randomized(&self) -> Result<&RandomizedSection> {
        self.randomized
            .as_ref()
            .ok_or_else(|| bad("/randomized", "this command needs a randomized section"))
    }

    pub fn lambda(&self, catalog: &ControlCatalog) -> Result<MarkIntensity> {
        match &self.randomized()?.rates {
            RatesSpec::Uniform { rate } => MarkIntensity::uniform(catalog.len(), *rate),
            RatesSpec::Explicit { marks, rates } => MarkIntensity::new(marks.clone(), rates.clone()),
        }
    }

    pub fn randomized_config(&self) -> Result<RandomizedConfig> {
        let r = self.randomized()?;
        Ok(RandomizedConfig {
            k_max: r.k_max,
            lo: r.nu_lo,
            hi: r.nu_hi,
            initial: r.initial,
            state_cap: r.state_cap,
        })
    }
}

/// Command-line overrides applied on top of the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<String>,
    pub nu_bounds: Option<(f64, f64)>,
    pub repeats: Option<usize>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut ExperimentConfig) -> Result<()> {
        if let Some(s) = self.seed {
            cfg.sim.seed = s;
        }
        if let Some(o) = &self.out {
            cfg.output = o.clone();
        }
        if let Some(r) = self.repeats {
            cfg.sim.repeats = r;
        }
        if let Some((lo, hi)) = self.nu_bounds {
            let r = cfg
                .randomized
                .as_mut()
                .ok_or_else(|| bad("/randomized", "--nu-bounds needs a randomized section"))?;
            r.nu_lo = lo;
            r.nu_hi = hi;
        }
        cfg.validate()
    }
}

/// Parses `lo,hi`.
pub fn parse_nu_bounds(s: &str) -> std::result::Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or("expected lo,hi")?;
    let lo: f64 = a.trim().parse().map_err(|e| format!("lo: {e}"))?;
    let hi: f64 = b.trim().parse().map_err(|e| format!("hi: {e}"))?;
    Ok((lo, hi))
}

pub fn hash_bytes(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// `serde_path_to_error` paths (`sim.n_xi`, `pi.mean[0]`) as JSON pointers.
fn pointer_of(path: &str) -> String {
    if path == "." || path.is_empty() {
        return String::new();
    }
    let mut out = String::new();
    for seg in path.split('.') {
        let (head, rest) = seg.split_once('[').map_or((seg, ""), |(h, r)| (h, r));
        if !head.is_empty() {
            out.push('/');
            out.push_str(&head.replace('~', "~0").replace('/', "~1"));
        }
        for idx in rest.split('[').filter(|s| !s.is_empty()) {
            out.push('/');
            out.push_str(idx.trim_end_matches(']'));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pointers_from_paths() {
        assert_eq!(pointer_of("sim.n_xi"), "/sim/n_xi");
        assert_eq!(pointer_of("pi.mean[0]"), "/pi/mean/0");
        assert_eq!(pointer_of("a[1][2].b"), "/a/1/2/b");
        assert_eq!(pointer_of("."), "");
    }

    #[test]
    fn nu_bounds_parse() {
        assert_eq!(parse_nu_bounds("0.1, 50").unwrap(), (0.1, 50.0));
        assert!(parse_nu_bounds("1").is_err());
        assert!(parse_nu_bounds("a,2").is_err());
    }
}
