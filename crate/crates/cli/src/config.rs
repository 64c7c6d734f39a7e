//! Flat `key = value` experiment configuration.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use bfpmg::experiments::{supported, FmgMode};
use bfpmg::fem::{Manufactured, Pde, ProblemSpec};
use bfpmg::multigrid::PrecEstParams;
use sha2::{Digest, Sha256};

/// Every accepted key with its default.
pub const DEFAULTS: &[(&str, &str)] = &[
    ("pde", "poisson"),
    ("dim", "1"),
    ("p", "1"),
    ("levels", "1..8"),
    ("mode", "fixed64,progressive-qcomp,progressive-nnqcomp"),
    ("schedule", "estimated"),
    ("n", "default"),
    ("w_add_cap", "inf"),
    ("caps", "0,2,4,inf"),
    ("saturation_fallback", "false"),
    ("widths", "5,10,15"),
    ("count", "8"),
    ("prec", "400"),
    ("eta_steps", "100"),
    ("j_c", "5"),
    ("q_max", "64"),
    ("rho_thresh", "1.05"),
    ("max_iters", "50"),
    ("ratio_bound", "1.5"),
    ("max_bits", "200"),
    ("solution", "default"),
    ("seed", "0"),
    ("out", "-"),
];

/// How the progressive schedule of `recompute-table` is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleMode {
    Estimated,
    Fixed(u32),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub pde: Pde,
    pub dim: usize,
    pub degrees: Vec<usize>,
    pub levels: RangeInclusive<u32>,
    pub modes: Vec<FmgMode>,
    pub schedule: ScheduleMode,
    pub iterations: Option<usize>,
    pub w_add_cap: Option<u32>,
    pub caps: Vec<Option<u32>>,
    pub saturation_fallback: bool,
    pub widths: Vec<u32>,
    pub count: usize,
    pub prec: u32,
    pub eta_steps: u32,
    pub params: PrecEstParams,
    pub max_iters: usize,
    pub ratio_bound: f64,
    pub max_bits: u32,
    pub solution: Option<String>,
    pub seed: u64,
    pub out: Option<PathBuf>,
    resolved: BTreeMap<String, String>,
}

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| anyhow!("line {}: expected key = value", n + 1))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

fn cap(s: &str) -> Result<Option<u32>> {
    match s {
        "inf" | "∞" | "none" => Ok(None),
        _ => Ok(Some(s.parse().with_context(|| format!("bad cap {s:?}"))?)),
    }
}

fn list<T>(s: &str, f: impl Fn(&str) -> Result<T>) -> Result<Vec<T>> {
    s.split(',').map(str::trim).filter(|x| !x.is_empty()).map(f).collect()
}

fn num<T: std::str::FromStr>(key: &str, s: &str) -> Result<T> {
    s.parse().map_err(|_| anyhow!("{key}: cannot parse {s:?}"))
}

pub fn parse_levels(s: &str) -> Result<RangeInclusive<u32>> {
    let (a, b) = match s.split_once("..") {
        Some((a, b)) => (num::<u32>("levels", a.trim())?, num::<u32>("levels", b.trim().trim_start_matches('='))?),
        None => {
            let j = num("levels", s)?;
            (j, j)
        }
    };
    if a == 0 || a > b {
        bail!("levels: need 1 <= a <= b, got {s:?}");
    }
    Ok(a..=b)
}

impl ExperimentConfig {
    /// Defaults, then the file, then the overrides, later entries winning.
    pub fn load(file: Option<&Path>, overrides: &[(String, String)]) -> Result<ExperimentConfig> {
        let mut map: BTreeMap<String, String> = DEFAULTS.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
        let mut pairs = Vec::new();
        if let Some(path) = file {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            pairs.extend(parse_pairs(&text)?);
        }
        pairs.extend(overrides.iter().cloned());
        for (k, v) in pairs {
            if !map.contains_key(&k) {
                bail!("unknown configuration key {k:?}");
            }
            map.insert(k, v);
        }
        ExperimentConfig::from_map(map)
    }

    fn from_map(map: BTreeMap<String, String>) -> Result<ExperimentConfig> {
        let get = |k: &str| map[k].as_str();
        let pde: Pde = get("pde").parse().map_err(|e| anyhow!("pde: {e}"))?;
        let dim = num("dim", get("dim"))?;
        let degrees = list(get("p"), |s| num("p", s))?;
        let levels = parse_levels(get("levels"))?;
        let modes = list(get("mode"), |s| FmgMode::from_name(s).ok_or_else(|| anyhow!("unknown mode {s:?}")))?;
        let schedule = match get("schedule") {
            "estimated" => ScheduleMode::Estimated,
            s => match s.strip_prefix("fixed:") {
                Some(w) => ScheduleMode::Fixed(num("schedule", w)?),
                None => bail!("schedule: expected estimated or fixed:<bits>, got {s:?}"),
            },
        };
        let iterations = match get("n") {
            "default" => None,
            s => Some(num("n", s)?),
        };
        let solution = match get("solution") {
            "default" => None,
            s => {
                Manufactured::by_name(s).ok_or_else(|| anyhow!("unknown manufactured solution {s:?}"))?;
                Some(s.to_string())
            }
        };
        let out = match get("out") {
            "-" | "" => None,
            s => Some(PathBuf::from(s)),
        };
        let cfg = ExperimentConfig {
            pde,
            dim,
            degrees,
            levels,
            modes,
            schedule,
            iterations,
            w_add_cap: cap(get("w_add_cap"))?,
            caps: list(get("caps"), cap)?,
            saturation_fallback: num("saturation_fallback", get("saturation_fallback"))?,
            widths: list(get("widths"), |s| num("widths", s))?,
            count: num("count", get("count"))?,
            prec: num("prec", get("prec"))?,
            eta_steps: num("eta_steps", get("eta_steps"))?,
            params: PrecEstParams {
                j_c: num("j_c", get("j_c"))?,
                q_max: num("q_max", get("q_max"))?,
                rho_thresh: num("rho_thresh", get("rho_thresh"))?,
            },
            max_iters: num("max_iters", get("max_iters"))?,
            ratio_bound: num("ratio_bound", get("ratio_bound"))?,
            max_bits: num("max_bits", get("max_bits"))?,
            solution,
            seed: num("seed", get("seed"))?,
            out,
            resolved: map,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        if self.degrees.is_empty() {
            bail!("p: empty list");
        }
        for &p in &self.degrees {
            if !supported(self.pde, p) {
                bail!("p = {p} is not supported for {}", self.pde);
            }
            self.spec(p, *self.levels.end())?;
        }
        if self.widths.iter().any(|&w| w < 2) {
            bail!("widths: need at least 2 bits");
        }
        if self.prec < 64 {
            bail!("prec: need at least 64 bits");
        }
        Ok(())
    }

    pub fn spec(&self, p: usize, level: u32) -> Result<ProblemSpec> {
        let mut spec = ProblemSpec::new(self.pde, self.dim, p, level)?;
        if let Some(name) = &self.solution {
            spec.solution = Manufactured::by_name(name).expect("validated");
        }
        Ok(spec)
    }

    /// Resolved `key=value` lines in key order, `out` excluded.
    pub fn canonical(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.resolved.iter().filter(|(k, _)| k.as_str() != "out") {
            let _ = writeln!(s, "{k}={v}");
        }
        s
    }

    pub fn hash(&self) -> String {
        Sha256::digest(self.canonical().as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    /// `#`-prefixed CSV preamble echoing the resolved configuration.
    pub fn header(&self, command: &str) -> String {
        let mut s = format!("# bfpmg {command}\n# config-sha256 {}\n", self.hash());
        for line in self.canonical().lines() {
            let _ = writeln!(s, "# {line}");
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ov(pairs: &[(&str, &str)]) -> Vec<(String, String)> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn defaults_load() {
        let c = ExperimentConfig::load(None, &[]).unwrap();
        assert_eq!(c.pde, Pde::Poisson);
        assert_eq!(c.levels, 1..=8);
        assert_eq!(c.caps, vec![Some(0), Some(2), Some(4), None]);
        assert_eq!(c.params, PrecEstParams::default());
    }

    #[test]
    fn file_then_overrides() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.cfg");
        std::fs::write(&path, "# comment\npde = biharmonic\np = 3, 4\nlevels = 2..6  # trailing\n").unwrap();
        let c = ExperimentConfig::load(Some(&path), &ov(&[("levels", "3")])).unwrap();
        assert_eq!(c.pde, Pde::Biharmonic);
        assert_eq!(c.degrees, vec![3, 4]);
        assert_eq!(c.levels, 3..=3);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(ExperimentConfig::load(None, &ov(&[("colour", "red")])).is_err());
        assert!(ExperimentConfig::load(None, &ov(&[("levels", "5..2")])).is_err());
        assert!(ExperimentConfig::load(None, &ov(&[("pde", "biharmonic"), ("p", "2")])).is_err());
        assert!(ExperimentConfig::load(None, &ov(&[("mode", "fast")])).is_err());
        assert!(parse_pairs("no equals sign").is_err());
    }

    #[test]
    fn hash_ignores_output_location() {
        let a = ExperimentConfig::load(None, &ov(&[("out", "/tmp/a")])).unwrap();
        let b = ExperimentConfig::load(None, &[]).unwrap();
        let c = ExperimentConfig::load(None, &ov(&[("p", "2")])).unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), c.hash());
        assert_eq!(a.hash().len(), 64);
    }
}
