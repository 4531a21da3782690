//! Flat `key = value` experiment configuration.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use tvreg_core::bernstein::ManufacturedField;
use tvreg_core::pde::{Parameterization, SolverConfig};
use tvreg_core::regularity::{GRADIENT_SLACK, TV_SLACK};
use tvreg_core::{DomainSpec, SourceKind, TheoremTag};

use crate::error::CliError;

/// Keys accepted besides the `source.*` and `mms.*` parameter families.
const KEYS: &[&str] = &[
    "domain",
    "n",
    "nx",
    "ny",
    "length",
    "lx",
    "ly",
    "source",
    "image",
    "seed",
    "sources",
    "mu",
    "lambda",
    "eps",
    "delta",
    "eps_schedule",
    "outer_tol",
    "inner_tol",
    "max_outer",
    "max_inner",
    "checks",
    "p",
    "slack.gradient",
    "slack.tv",
    "slack.boundary",
    "window.center",
    "window.radii",
    "window.rho",
    "mu_sweep",
    "sweep",
    "mms.field",
    "mms.levels",
    "mms.eps",
    "mms.delta",
    "mms.lambda",
    "mms.min_order",
    "run_id",
    "oracle",
];

fn source_params(kind: &str) -> &'static [&'static str] {
    match kind {
        "constant" => &["value"],
        "affine" => &["ax", "ay", "b"],
        "trig" => &["amp", "kx", "ky"],
        "smoothed_noise" => &["sigma", "amp"],
        "step" => &["pos", "height"],
        "step_trig" => &["pos", "height", "amp", "kx", "ky"],
        _ => &[],
    }
}

fn mms_params(field: &str) -> &'static [&'static str] {
    match field {
        "constant" => &["value"],
        "affine" => &["ax", "ay", "b"],
        "cos_product" => &["amp", "kx", "ky"],
        "neumann_cubic" => &["amp"],
        _ => &[],
    }
}

/// Raw settings in file order of precedence: later assignments win.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Settings {
    entries: BTreeMap<String, String>,
}

impl Settings {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut s = Settings::default();
        for (no, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            s.set_pair(line).map_err(|e| CliError::Config(format!("line {}: {e}", no + 1)))?;
        }
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        Self::parse(&text)
    }

    /// Applies one `key=value` override.
    pub fn set_pair(&mut self, pair: &str) -> Result<(), CliError> {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("expected key=value, got `{pair}`")))?;
        self.set(k.trim(), v.trim());
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.entries.insert(key.to_string(), value.into());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    /// Sorted `key = value` lines; parsing them back gives the same settings.
    pub fn echo(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    fn parsed<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, CliError> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| CliError::Config(format!("{key}: cannot parse `{v}`"))),
        }
    }

    fn or<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T, CliError> {
        Ok(self.parsed(key)?.unwrap_or(default))
    }

    fn list<T: std::str::FromStr>(&self, key: &str) -> Result<Option<Vec<T>>, CliError> {
        let Some(v) = self.get(key) else { return Ok(None) };
        v.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| s.parse().map_err(|_| CliError::Config(format!("{key}: cannot parse `{s}`"))))
            .collect::<Result<Vec<T>, _>>()
            .map(Some)
    }

    fn params(&self, prefix: &str) -> Result<BTreeMap<String, f64>, CliError> {
        let mut out = BTreeMap::new();
        for (k, v) in &self.entries {
            if let Some(name) = k.strip_prefix(prefix) {
                if KEYS.contains(&k.as_str()) {
                    continue;
                }
                let x = v
                    .parse()
                    .map_err(|_| CliError::Config(format!("{k}: cannot parse `{v}`")))?;
                out.insert(name.to_string(), x);
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SourceSpec {
    Synthetic { kind: SourceKind, seed: u64 },
    Image(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Slacks {
    pub gradient: f64,
    pub tv: f64,
    /// Boundary-derivative allowance in units of `h`.
    pub boundary: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowSpec {
    /// Defaults to the middle of the bounding box.
    pub center: Option<[f64; 2]>,
    /// Defaults to `{0.1, 0.2, 0.4}·L`, `L` the shorter side.
    pub radii: Option<Vec<f64>>,
    pub rho: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepKind {
    Mu,
    Radius,
    Both,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MmsSpec {
    pub field: ManufacturedField,
    pub levels: Vec<usize>,
    /// The configured domain at each level.
    pub domains: Vec<DomainSpec>,
    pub eps: f64,
    pub delta: f64,
    pub lambda: f64,
    pub min_order: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub settings: Settings,
    pub run_id: String,
    pub domain: DomainSpec,
    pub source: SourceSpec,
    /// Corpus size; source `i` uses seed `seed + i`.
    pub sources: usize,
    pub solver: SolverConfig,
    pub checks: Vec<TheoremTag>,
    /// `checks = all`: checks whose hypotheses the domain does not meet are
    /// skipped instead of raising an error.
    pub all_checks: bool,
    pub p_values: Vec<f64>,
    pub slack: Slacks,
    pub window: WindowSpec,
    pub mu_sweep: Vec<f64>,
    pub sweep: SweepKind,
    pub mms: MmsSpec,
    pub oracle: bool,
}

fn domain_spec(s: &Settings) -> Result<DomainSpec, CliError> {
    let n: usize = s.or("n", 64)?;
    let length: f64 = s.or("length", 1.0)?;
    let spec = match s.get("domain").unwrap_or("rectangle") {
        "interval" => DomainSpec::interval(n, length),
        "rectangle" => DomainSpec::rectangle(
            s.or("nx", n)?,
            s.or("ny", n)?,
            s.or("lx", length)?,
            s.or("ly", length)?,
        ),
        "lshape" | "l_shape" => DomainSpec::l_shape(n, length),
        "disc" => DomainSpec::disc(n, length),
        other => return Err(CliError::Config(format!("unknown domain `{other}`"))),
    };
    Ok(spec)
}

fn solver_config(s: &Settings) -> Result<SolverConfig, CliError> {
    let param = match (s.parsed::<f64>("mu")?, s.parsed::<f64>("lambda")?) {
        (Some(_), Some(_)) => return Err(CliError::Config("set either mu or lambda, not both".into())),
        (Some(m), None) => Parameterization::Mu(m),
        (None, Some(l)) => Parameterization::Lambda(l),
        (None, None) => Parameterization::Lambda(1.0),
    };
    let schedule: Option<Vec<f64>> = s.list("eps_schedule")?;
    let eps = match (&schedule, s.parsed::<f64>("eps")?) {
        (Some(_), Some(_)) => return Err(CliError::Config("set either eps or eps_schedule, not both".into())),
        (None, Some(e)) => e,
        (Some(sch), None) => *sch.last().ok_or_else(|| CliError::Config("eps_schedule is empty".into()))?,
        (None, None) => 1e-2,
    };
    let mut cfg = SolverConfig::new(eps, param);
    if let Some(d) = s.parsed("delta")? {
        cfg = cfg.with_delta(d);
    }
    if let Some(sch) = schedule {
        cfg = cfg.with_eps_schedule(&sch);
        if let Some(d) = cfg.delta {
            // an explicit δ applies to every stage
            for st in &mut cfg.schedule {
                st.delta = d;
            }
        }
    }
    cfg.outer_tol = s.or("outer_tol", cfg.outer_tol)?;
    cfg.inner_tol = s.or("inner_tol", cfg.inner_tol)?;
    cfg.max_outer = s.or("max_outer", cfg.max_outer)?;
    cfg.max_inner = s.or("max_inner", cfg.max_inner)?;
    cfg.validate().map_err(|e| CliError::Config(e.to_string()))?;
    Ok(cfg)
}

fn checks(s: &Settings) -> Result<Vec<TheoremTag>, CliError> {
    let raw = s.get("checks").unwrap_or("all").trim();
    if raw == "all" {
        return Ok(TheoremTag::ALL.iter().copied().filter(|&t| t != TheoremTag::EqwOrder).collect());
    }
    if raw.is_empty() || raw == "none" {
        return Ok(Vec::new());
    }
    let mut out: Vec<TheoremTag> = Vec::new();
    for name in raw.split(',').map(str::trim).filter(|n| !n.is_empty()) {
        let tag: TheoremTag = name
            .parse()
            .map_err(|_| CliError::Config(format!("unknown check `{name}`")))?;
        if tag == TheoremTag::EqwOrder {
            return Err(CliError::Config("eqw_order is produced by the mms subcommand".into()));
        }
        if !out.contains(&tag) {
            out.push(tag);
        }
    }
    Ok(out)
}

fn mms_spec(s: &Settings) -> Result<MmsSpec, CliError> {
    let name = s.get("mms.field").unwrap_or("cos_product").replace('-', "_");
    let params = s.params("mms.")?;
    for k in params.keys() {
        if !mms_params(&name).contains(&k.as_str()) {
            return Err(CliError::Config(format!("unknown parameter mms.{k} for field `{name}`")));
        }
    }
    let mut params = params;
    if name == "cos_product" {
        params.entry("amp".into()).or_insert(0.5);
    }
    let field = ManufacturedField::from_name(&name, &params).map_err(|e| CliError::Config(e.to_string()))?;
    let levels: Vec<usize> = s.list("mms.levels")?.unwrap_or_else(|| vec![32, 64, 128]);
    if levels.len() < 2 || levels.windows(2).any(|w| w[1] != 2 * w[0]) {
        return Err(CliError::Config("mms.levels must double at every step".into()));
    }
    let domains = levels
        .iter()
        .map(|&n| {
            let mut at = s.clone();
            at.set("n", n.to_string());
            // keep the aspect ratio of an explicit nx × ny rectangle
            if let (Some(nx), Some(ny)) = (s.parsed::<usize>("nx")?, s.parsed::<usize>("ny")?) {
                at.set("nx", n.to_string());
                at.set("ny", ((n * ny) as f64 / nx as f64).round().max(1.0).to_string());
            } else {
                at.entries.remove("nx");
                at.entries.remove("ny");
            }
            domain_spec(&at)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(MmsSpec {
        field,
        levels,
        domains,
        eps: s.or("mms.eps", 1.0)?,
        delta: s.or("mms.delta", 0.1)?,
        lambda: s.or("mms.lambda", 1.0)?,
        min_order: s.or("mms.min_order", 0.8)?,
    })
}

impl ExperimentConfig {
    pub fn from_settings(settings: Settings) -> Result<Self, CliError> {
        let s = &settings;
        for k in s.entries.keys() {
            let family = k.starts_with("source.") || (k.starts_with("mms.") && !KEYS.contains(&k.as_str()));
            if !KEYS.contains(&k.as_str()) && !family {
                return Err(CliError::Config(format!("unknown key `{k}`")));
            }
        }

        let seed: Option<u64> = s.parsed("seed")?;
        let source = match (s.get("image"), s.get("source")) {
            (Some(path), None | Some("image")) => SourceSpec::Image(PathBuf::from(path)),
            (Some(_), Some(_)) => return Err(CliError::Config("image is set but source is not `image`".into())),
            (None, Some("image")) => return Err(CliError::Config("source = image needs an image path".into())),
            (None, name) => {
                let name = name.unwrap_or("trig").replace('-', "_");
                let params = s.params("source.")?;
                for k in params.keys() {
                    if !source_params(&name).contains(&k.as_str()) {
                        return Err(CliError::Config(format!("unknown parameter source.{k} for source `{name}`")));
                    }
                }
                let kind = SourceKind::from_name(&name, &params).map_err(|e| CliError::Config(e.to_string()))?;
                let seed = match seed {
                    Some(v) => v,
                    None if kind.is_random() => {
                        return Err(CliError::Config(format!("source `{name}` is random and needs a seed")))
                    }
                    None => 0,
                };
                SourceSpec::Synthetic { kind, seed }
            }
        };
        let sources: usize = s.or("sources", 1)?;
        if sources == 0 || (sources > 1 && matches!(source, SourceSpec::Image(_))) {
            return Err(CliError::Config("sources must be 1 for an image and at least 1 otherwise".into()));
        }

        let p_values: Vec<f64> = s.list("p")?.unwrap_or_else(|| vec![2.0, 4.0, 8.0, f64::INFINITY]);
        let window = WindowSpec {
            center: match s.list::<f64>("window.center")? {
                None => None,
                Some(c) if c.len() == 1 => Some([c[0], 0.0]),
                Some(c) if c.len() == 2 => Some([c[0], c[1]]),
                Some(_) => return Err(CliError::Config("window.center takes one or two coordinates".into())),
            },
            radii: s.list("window.radii")?,
            rho: s.or("window.rho", 0.2)?,
        };
        let sweep = match s.get("sweep").unwrap_or("both") {
            "mu" => SweepKind::Mu,
            "r" | "radius" => SweepKind::Radius,
            "both" => SweepKind::Both,
            other => return Err(CliError::Config(format!("unknown sweep `{other}`"))),
        };
        let oracle = match s.get("oracle").unwrap_or("auto") {
            "auto" => true,
            "none" => false,
            other => return Err(CliError::Config(format!("oracle must be auto or none, got `{other}`"))),
        };

        Ok(ExperimentConfig {
            run_id: s.get("run_id").unwrap_or("run").to_string(),
            domain: domain_spec(s)?,
            source,
            sources,
            solver: solver_config(s)?,
            checks: checks(s)?,
            all_checks: s.get("checks").map_or(true, |v| v.trim() == "all"),
            p_values,
            slack: Slacks {
                gradient: s.or("slack.gradient", GRADIENT_SLACK)?,
                tv: s.or("slack.tv", TV_SLACK)?,
                boundary: s.or("slack.boundary", 10.0)?,
            },
            window,
            mu_sweep: s.list("mu_sweep")?.unwrap_or_else(|| vec![0.1, 1.0, 10.0]),
            sweep,
            mms: mms_spec(s)?,
            oracle,
            settings,
        })
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        Self::from_settings(Settings::parse(text)?)
    }
}
