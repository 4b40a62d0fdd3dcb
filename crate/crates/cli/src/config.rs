//! Strict line-based experiment configuration.
//!
//! ```text
//! # comment
//! [experiment]
//! kind = ladder
//! output_dir = out/ladder
//!
//! [params]
//! p = 1.8
//! mu = 0.5
//!
//! [sweep]
//! nu = 0.1, 0.01, 0
//! ```
//!
//! Every key belongs to exactly one section. Unknown sections or keys,
//! duplicates and malformed values are errors that name the key and line.

use std::collections::HashMap;
use std::fmt::{self, Write as _};
use std::path::PathBuf;

use plap_core::fields::alpha_threshold;
use plap_core::{Error as CoreError, SchemeConfig, SchemeMode, SimParams};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },

    #[error("line {line}: unknown key `{key}` in [{section}]")]
    UnknownKey { line: usize, section: String, key: String },

    #[error("line {line}: unknown section [{section}]")]
    UnknownSection { line: usize, section: String },

    #[error("duplicate key `{key}` on lines {first} and {second}")]
    Duplicate { key: String, first: usize, second: usize },

    #[error("line {line}: `{key}`: expected {expected}, got `{value}`")]
    Type { line: usize, key: String, expected: &'static str, value: String },

    #[error("{}`{key}`: {message}", line.map(|l| format!("line {l}: ")).unwrap_or_default())]
    Constraint { line: Option<usize>, key: String, message: String },

    #[error("experiment kind required")]
    MissingKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    Run,
    Ladder,
    ExtinctionSweep,
    DualCheck,
    GalerkinCompare,
    Gamma,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Run => "run",
            ExperimentKind::Ladder => "ladder",
            ExperimentKind::ExtinctionSweep => "extinction_sweep",
            ExperimentKind::DualCheck => "dual_check",
            ExperimentKind::GalerkinCompare => "galerkin_compare",
            ExperimentKind::Gamma => "gamma",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "run" => ExperimentKind::Run,
            "ladder" => ExperimentKind::Ladder,
            "extinction_sweep" => ExperimentKind::ExtinctionSweep,
            "dual_check" => ExperimentKind::DualCheck,
            "galerkin_compare" => ExperimentKind::GalerkinCompare,
            "gamma" => ExperimentKind::Gamma,
            _ => return None,
        })
    }
}

/// Which field snapshots are written as binary blobs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldOutput {
    None,
    /// Initial and final state.
    Ends,
    /// Every stored snapshot.
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitialKind {
    Zero,
    Sine,
    Indicator,
    /// Seeded random sine series.
    Random,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitialSpec {
    pub kind: InitialKind,
    /// Wavenumber of `sine`; highest wavenumber of `random`.
    pub wavenumber: usize,
    /// One value for every component, or one per component.
    pub amplitude: Vec<f64>,
    pub lower: f64,
    pub upper: f64,
}

impl Default for InitialSpec {
    fn default() -> Self {
        InitialSpec {
            kind: InitialKind::Sine,
            wavenumber: 1,
            amplitude: vec![1.0],
            lower: 0.25,
            upper: 0.75,
        }
    }
}

/// Sweep axes. Empty lists are unused.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SweepAxes {
    pub nu: Vec<f64>,
    pub mu: Vec<f64>,
    pub delta: Vec<f64>,
    pub p: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualSettings {
    /// Pairing time; defaults to `t_end`.
    pub horizon: Option<f64>,
    /// Mollification radii; defaults to `[eta]`.
    pub etas: Vec<f64>,
    /// Dual viscosity; defaults to the forward `nu`.
    pub nu_dual: Option<f64>,
    /// Centre of the smooth bump datum; defaults to the box centre.
    pub center: Vec<f64>,
    pub rho: f64,
}

impl Default for DualSettings {
    fn default() -> Self {
        DualSettings {
            horizon: None,
            etas: Vec::new(),
            nu_dual: None,
            center: Vec::new(),
            rho: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GalerkinSettings {
    pub modes: usize,
    pub quad_points: usize,
    pub dt: f64,
}

impl Default for GalerkinSettings {
    fn default() -> Self {
        GalerkinSettings {
            modes: 16,
            quad_points: 64,
            dt: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub output_dir: PathBuf,
    pub seed: u64,
    pub write_fields: FieldOutput,
    pub params: SimParams,
    pub scheme: SchemeConfig,
    pub initial: InitialSpec,
    pub sweep: SweepAxes,
    pub dual: DualSettings,
    pub galerkin: GalerkinSettings,
    pub gamma_seeds: Vec<u64>,
}

const SECTIONS: &[(&str, &[&str])] = &[
    ("experiment", &["kind", "output_dir", "seed", "write_fields"]),
    (
        "params",
        &["p", "mu", "nu", "delta", "alpha", "dim", "n_cells", "dt", "t_end", "eta"],
    ),
    (
        "scheme",
        &[
            "mode",
            "linear_solver_tol",
            "max_linear_iters",
            "cfl_safety",
            "snapshot_stride",
            "record_hessian",
        ],
    ),
    ("initial", &["kind", "wavenumber", "amplitude", "lower", "upper"]),
    ("sweep", &["nu", "mu", "delta", "p"]),
    ("dual", &["horizon", "etas", "nu_dual", "center", "rho"]),
    ("galerkin", &["modes", "quad_points", "dt"]),
    ("gamma", &["seeds"]),
];

struct Entry {
    value: String,
    line: usize,
}

/// Raw `section.key → value` table with line numbers.
struct Table {
    entries: HashMap<String, Entry>,
}

impl Table {
    fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut entries: HashMap<String, Entry> = HashMap::new();
        let mut section: Option<&str> = None;
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            if let Some(rest) = content.strip_prefix('[') {
                let name = rest.strip_suffix(']').ok_or_else(|| ConfigError::Syntax {
                    line,
                    message: format!("malformed section header `{content}`"),
                })?;
                let name = name.trim();
                let known = SECTIONS.iter().find(|(s, _)| *s == name).ok_or_else(|| {
                    ConfigError::UnknownSection {
                        line,
                        section: name.to_string(),
                    }
                })?;
                section = Some(known.0);
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line,
                message: format!("expected `key = value`, got `{content}`"),
            })?;
            let key = key.trim();
            let value = value.trim();
            let sec = section.ok_or_else(|| ConfigError::Syntax {
                line,
                message: format!("key `{key}` appears before any [section]"),
            })?;
            let allowed = SECTIONS.iter().find(|(s, _)| *s == sec).map(|(_, k)| *k).unwrap_or(&[]);
            if !allowed.contains(&key) {
                return Err(ConfigError::UnknownKey {
                    line,
                    section: sec.to_string(),
                    key: key.to_string(),
                });
            }
            if value.is_empty() {
                return Err(ConfigError::Syntax {
                    line,
                    message: format!("`{key}` has no value"),
                });
            }
            let full = format!("{sec}.{key}");
            if let Some(prev) = entries.get(&full) {
                return Err(ConfigError::Duplicate {
                    key: full,
                    first: prev.line,
                    second: line,
                });
            }
            entries.insert(
                full,
                Entry {
                    value: value.to_string(),
                    line,
                },
            );
        }
        Ok(Table { entries })
    }

    fn line(&self, key: &str) -> Option<usize> {
        self.entries.get(key).map(|e| e.line)
    }

    fn get<T>(&self, key: &str, expected: &'static str, conv: impl Fn(&str) -> Option<T>) -> Result<Option<T>, ConfigError> {
        match self.entries.get(key) {
            None => Ok(None),
            Some(e) => conv(&e.value).map(Some).ok_or_else(|| ConfigError::Type {
                line: e.line,
                key: key.to_string(),
                expected,
                value: e.value.clone(),
            }),
        }
    }

    fn float(&self, key: &str) -> Result<Option<f64>, ConfigError> {
        self.get(key, "a number", parse_float)
    }

    fn uint(&self, key: &str) -> Result<Option<usize>, ConfigError> {
        self.get(key, "a non-negative integer", |s| s.parse().ok())
    }

    fn floats(&self, key: &str) -> Result<Option<Vec<f64>>, ConfigError> {
        self.get(key, "a comma-separated list of numbers", |s| {
            s.split(',').map(|x| parse_float(x.trim())).collect()
        })
    }
}

fn parse_float(s: &str) -> Option<f64> {
    s.parse::<f64>().ok().filter(|v| v.is_finite())
}

fn parse_bool(s: &str) -> Option<bool> {
    match s {
        "true" => Some(true),
        "false" => Some(false),
        _ => None,
    }
}

fn constraint(table: &Table, key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Constraint {
        line: table.line(key),
        key: key.to_string(),
        message: message.into(),
    }
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let t = Table::parse(text)?;

    let kind = match t.entries.get("experiment.kind") {
        None => return Err(ConfigError::MissingKind),
        Some(e) => ExperimentKind::parse(&e.value).ok_or_else(|| ConfigError::Type {
            line: e.line,
            key: "experiment.kind".into(),
            expected: "one of run, ladder, extinction_sweep, dual_check, galerkin_compare, gamma",
            value: e.value.clone(),
        })?,
    };
    let output_dir = t
        .get("experiment.output_dir", "a path", |s| Some(PathBuf::from(s)))?
        .unwrap_or_else(|| PathBuf::from("plap_out"));
    let seed = t.get("experiment.seed", "a non-negative integer", |s| s.parse().ok())?.unwrap_or(0);
    let write_fields = t
        .get("experiment.write_fields", "one of none, ends, all", |s| match s {
            "none" => Some(FieldOutput::None),
            "ends" => Some(FieldOutput::Ends),
            "all" => Some(FieldOutput::All),
            _ => None,
        })?
        .unwrap_or(FieldOutput::Ends);

    let mut params = SimParams::default();
    let float_keys: [(&str, &mut f64); 7] = [
        ("params.p", &mut params.p),
        ("params.mu", &mut params.mu),
        ("params.nu", &mut params.nu),
        ("params.delta", &mut params.delta),
        ("params.dt", &mut params.dt),
        ("params.t_end", &mut params.t_end),
        ("params.eta", &mut params.eta),
    ];
    for (key, slot) in float_keys {
        if let Some(v) = t.float(key)? {
            *slot = v;
        }
    }
    params.alpha = t.float("params.alpha")?.unwrap_or(1.1 * alpha_threshold(params.p));
    if let Some(v) = t.uint("params.dim")? {
        params.dim = v;
    }
    if let Some(v) = t.uint("params.n_cells")? {
        params.n_cells = v;
    }
    params.validate().map_err(|e| match e {
        CoreError::InvalidParameter { name, reason } => constraint(&t, &format!("params.{name}"), reason),
        other => constraint(&t, "params", other.to_string()),
    })?;

    let mut scheme = SchemeConfig::default();
    if let Some(mode) = t.get("scheme.mode", "one of semi_implicit, explicit", |s| match s {
        "semi_implicit" => Some(SchemeMode::SemiImplicit),
        "explicit" => Some(SchemeMode::Explicit),
        _ => None,
    })? {
        scheme.mode = mode;
    }
    if let Some(v) = t.float("scheme.linear_solver_tol")? {
        scheme.linear_solver_tol = v;
    }
    if let Some(v) = t.uint("scheme.max_linear_iters")? {
        scheme.max_linear_iters = v;
    }
    if let Some(v) = t.float("scheme.cfl_safety")? {
        scheme.cfl_safety = v;
    }
    if let Some(v) = t.uint("scheme.snapshot_stride")? {
        scheme.snapshot_stride = v;
    }
    if let Some(v) = t.get("scheme.record_hessian", "true or false", parse_bool)? {
        scheme.record_hessian = v;
    }
    scheme.validate().map_err(|e| match e {
        CoreError::InvalidParameter { name, reason } => constraint(&t, &format!("scheme.{name}"), reason),
        other => constraint(&t, "scheme", other.to_string()),
    })?;

    let mut initial = InitialSpec::default();
    if let Some(k) = t.get("initial.kind", "one of zero, sine, indicator, random", |s| match s {
        "zero" => Some(InitialKind::Zero),
        "sine" => Some(InitialKind::Sine),
        "indicator" => Some(InitialKind::Indicator),
        "random" => Some(InitialKind::Random),
        _ => None,
    })? {
        initial.kind = k;
    }
    if let Some(v) = t.uint("initial.wavenumber")? {
        if v == 0 {
            return Err(constraint(&t, "initial.wavenumber", "must be >= 1"));
        }
        initial.wavenumber = v;
    }
    if let Some(v) = t.floats("initial.amplitude")? {
        if v.len() != 1 && v.len() != params.dim {
            return Err(constraint(
                &t,
                "initial.amplitude",
                format!("need 1 or {} values, got {}", params.dim, v.len()),
            ));
        }
        initial.amplitude = v;
    }
    if let Some(v) = t.float("initial.lower")? {
        initial.lower = v;
    }
    if let Some(v) = t.float("initial.upper")? {
        initial.upper = v;
    }
    if !(0.0 <= initial.lower && initial.lower < initial.upper && initial.upper <= 1.0) {
        return Err(constraint(&t, "initial.lower", "need 0 <= lower < upper <= 1"));
    }

    let sweep = SweepAxes {
        nu: t.floats("sweep.nu")?.unwrap_or_default(),
        mu: t.floats("sweep.mu")?.unwrap_or_default(),
        delta: t.floats("sweep.delta")?.unwrap_or_default(),
        p: t.floats("sweep.p")?.unwrap_or_default(),
    };
    if sweep.nu.iter().chain(&sweep.mu).any(|&v| v < 0.0) {
        let key = if sweep.nu.iter().any(|&v| v < 0.0) { "sweep.nu" } else { "sweep.mu" };
        return Err(constraint(&t, key, "values must be >= 0"));
    }
    if sweep.p.iter().any(|&p| !(p > 1.5 && p <= 2.0)) {
        return Err(constraint(&t, "sweep.p", "values must lie in (3/2, 2]"));
    }

    let mut dual = DualSettings::default();
    dual.horizon = t.float("dual.horizon")?;
    if let Some(h) = dual.horizon {
        if !(h > 0.0 && h <= params.t_end) {
            return Err(constraint(&t, "dual.horizon", format!("{h} must lie in (0, t_end]")));
        }
    }
    dual.etas = t.floats("dual.etas")?.unwrap_or_else(|| vec![params.eta]);
    if dual.etas.iter().any(|&e| !(e > 0.0)) {
        return Err(constraint(&t, "dual.etas", "values must be > 0"));
    }
    dual.nu_dual = t.float("dual.nu_dual")?;
    if dual.nu_dual.is_some_and(|v| v < 0.0) {
        return Err(constraint(&t, "dual.nu_dual", "must be >= 0"));
    }
    dual.center = t.floats("dual.center")?.unwrap_or_else(|| vec![0.5; params.dim]);
    if dual.center.len() != params.dim {
        return Err(constraint(&t, "dual.center", format!("need {} coordinates", params.dim)));
    }
    if let Some(v) = t.float("dual.rho")? {
        if !(v > 0.0) {
            return Err(constraint(&t, "dual.rho", "must be > 0"));
        }
        dual.rho = v;
    }

    let mut galerkin = GalerkinSettings::default();
    if let Some(v) = t.uint("galerkin.modes")? {
        galerkin.modes = v;
    }
    if let Some(v) = t.uint("galerkin.quad_points")? {
        galerkin.quad_points = v;
    }
    if let Some(v) = t.float("galerkin.dt")? {
        if !(v > 0.0) {
            return Err(constraint(&t, "galerkin.dt", "must be > 0"));
        }
        galerkin.dt = v;
    }
    if galerkin.modes == 0 {
        return Err(constraint(&t, "galerkin.modes", "must be >= 1"));
    }
    if galerkin.quad_points < 2 * galerkin.modes + 1 {
        return Err(constraint(
            &t,
            "galerkin.quad_points",
            format!("need at least {} to avoid aliasing", 2 * galerkin.modes + 1),
        ));
    }

    let gamma_seeds = t
        .get("gamma.seeds", "a comma-separated list of integers", |s| {
            s.split(',').map(|x| x.trim().parse().ok()).collect()
        })?
        .unwrap_or_else(|| vec![1, 2, 3]);
    if gamma_seeds.is_empty() {
        return Err(constraint(&t, "gamma.seeds", "need at least one seed"));
    }

    let cfg = ExperimentConfig {
        kind,
        output_dir,
        seed,
        write_fields,
        params,
        scheme,
        initial,
        sweep,
        dual,
        galerkin,
        gamma_seeds,
    };
    check_kind(&cfg, &t)?;
    Ok(cfg)
}

/// Requirements that depend on the experiment kind.
fn check_kind(cfg: &ExperimentConfig, t: &Table) -> Result<(), ConfigError> {
    match cfg.kind {
        ExperimentKind::Ladder if cfg.sweep.nu.len() + cfg.sweep.mu.len() < 2 => Err(constraint(
            t,
            "sweep.nu",
            "a ladder needs at least two values across sweep.nu and sweep.mu",
        )),
        ExperimentKind::ExtinctionSweep if cfg.sweep.delta.is_empty() && cfg.sweep.p.is_empty() => {
            Err(constraint(t, "sweep.delta", "an extinction sweep needs sweep.delta or sweep.p"))
        }
        ExperimentKind::DualCheck | ExperimentKind::GalerkinCompare if !(cfg.params.mu > 0.0) => {
            Err(constraint(t, "params.mu", "must be > 0 for this experiment"))
        }
        _ => Ok(()),
    }
}

fn list<T: fmt::Display>(values: &[T]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(", ")
}

impl ExperimentConfig {
    /// Effective configuration with every default spelled out; parses back to `self`.
    pub fn to_text(&self) -> String {
        let p = &self.params;
        let s = &self.scheme;
        let mut out = String::new();
        let w = &mut out;
        let _ = writeln!(w, "[experiment]");
        let _ = writeln!(w, "kind = {}", self.kind.name());
        let _ = writeln!(w, "output_dir = {}", self.output_dir.display());
        let _ = writeln!(w, "seed = {}", self.seed);
        let fields = match self.write_fields {
            FieldOutput::None => "none",
            FieldOutput::Ends => "ends",
            FieldOutput::All => "all",
        };
        let _ = writeln!(w, "write_fields = {fields}");
        let _ = writeln!(w, "\n[params]");
        for (k, v) in [
            ("p", p.p),
            ("mu", p.mu),
            ("nu", p.nu),
            ("delta", p.delta),
            ("alpha", p.alpha),
        ] {
            let _ = writeln!(w, "{k} = {v}");
        }
        let _ = writeln!(w, "dim = {}", p.dim);
        let _ = writeln!(w, "n_cells = {}", p.n_cells);
        let _ = writeln!(w, "dt = {}", p.dt);
        let _ = writeln!(w, "t_end = {}", p.t_end);
        let _ = writeln!(w, "eta = {}", p.eta);
        let _ = writeln!(w, "\n[scheme]");
        let mode = match s.mode {
            SchemeMode::SemiImplicit => "semi_implicit",
            SchemeMode::Explicit => "explicit",
        };
        let _ = writeln!(w, "mode = {mode}");
        let _ = writeln!(w, "linear_solver_tol = {}", s.linear_solver_tol);
        let _ = writeln!(w, "max_linear_iters = {}", s.max_linear_iters);
        let _ = writeln!(w, "cfl_safety = {}", s.cfl_safety);
        let _ = writeln!(w, "snapshot_stride = {}", s.snapshot_stride);
        let _ = writeln!(w, "record_hessian = {}", s.record_hessian);
        let _ = writeln!(w, "\n[initial]");
        let kind = match self.initial.kind {
            InitialKind::Zero => "zero",
            InitialKind::Sine => "sine",
            InitialKind::Indicator => "indicator",
            InitialKind::Random => "random",
        };
        let _ = writeln!(w, "kind = {kind}");
        let _ = writeln!(w, "wavenumber = {}", self.initial.wavenumber);
        let _ = writeln!(w, "amplitude = {}", list(&self.initial.amplitude));
        let _ = writeln!(w, "lower = {}", self.initial.lower);
        let _ = writeln!(w, "upper = {}", self.initial.upper);
        let axes = [
            ("nu", &self.sweep.nu),
            ("mu", &self.sweep.mu),
            ("delta", &self.sweep.delta),
            ("p", &self.sweep.p),
        ];
        if axes.iter().any(|(_, v)| !v.is_empty()) {
            let _ = writeln!(w, "\n[sweep]");
            for (k, v) in axes.iter().filter(|(_, v)| !v.is_empty()) {
                let _ = writeln!(w, "{k} = {}", list(v));
            }
        }
        let _ = writeln!(w, "\n[dual]");
        if let Some(h) = self.dual.horizon {
            let _ = writeln!(w, "horizon = {h}");
        }
        let _ = writeln!(w, "etas = {}", list(&self.dual.etas));
        if let Some(v) = self.dual.nu_dual {
            let _ = writeln!(w, "nu_dual = {v}");
        }
        let _ = writeln!(w, "center = {}", list(&self.dual.center));
        let _ = writeln!(w, "rho = {}", self.dual.rho);
        let _ = writeln!(w, "\n[galerkin]");
        let _ = writeln!(w, "modes = {}", self.galerkin.modes);
        let _ = writeln!(w, "quad_points = {}", self.galerkin.quad_points);
        let _ = writeln!(w, "dt = {}", self.galerkin.dt);
        let _ = writeln!(w, "\n[gamma]");
        let _ = writeln!(w, "seeds = {}", list(&self.gamma_seeds));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn with_kind(body: &str) -> String {
        format!("[experiment]\nkind = run\n{body}")
    }

    #[test]
    fn defaults_apply() {
        let cfg = parse_config("[experiment]\nkind = run\n").unwrap();
        assert_eq!(cfg.params, SimParams::default());
        assert_eq!(cfg.scheme, SchemeConfig::default());
        assert_eq!(cfg.kind, ExperimentKind::Run);
        assert_eq!(cfg.dual.etas, vec![cfg.params.eta]);
    }

    #[test]
    fn p_in_range_parses_and_out_of_range_names_interval() {
        let cfg = parse_config(&with_kind("[params]\np = 1.8\n")).unwrap();
        assert_eq!(cfg.params.p, 1.8);
        let err = parse_config(&with_kind("[params]\np = 2.5\n")).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("(3/2, 2]") && msg.contains("line 4") && msg.contains("params.p"), "{msg}");
    }

    #[test]
    fn alpha_default_follows_p() {
        let cfg = parse_config(&with_kind("[params]\np = 1.6\n")).unwrap();
        assert!((cfg.params.alpha - 1.1 * (4.0 - 1.6) / 1.6).abs() < 1e-15);
    }

    #[test]
    fn empty_experiment_section_requires_kind() {
        assert_eq!(parse_config("[experiment]\n").unwrap_err(), ConfigError::MissingKind);
        assert_eq!(parse_config("").unwrap_err().to_string(), "experiment kind required");
    }

    #[test]
    fn duplicate_key_reports_both_lines() {
        let err = parse_config("[experiment]\nkind = run\n[params]\nmu = 0.1\n\nmu = 0.2\n").unwrap_err();
        assert_eq!(
            err,
            ConfigError::Duplicate {
                key: "params.mu".into(),
                first: 4,
                second: 6
            }
        );
        assert!(err.to_string().contains("lines 4 and 6"));
    }

    #[test]
    fn unknown_keys_and_sections_are_rejected() {
        assert!(matches!(
            parse_config(&with_kind("[params]\nviscosity = 1\n")),
            Err(ConfigError::UnknownKey { line: 4, .. })
        ));
        assert!(matches!(
            parse_config(&with_kind("[solver]\n")),
            Err(ConfigError::UnknownSection { line: 3, .. })
        ));
        assert!(matches!(parse_config("p = 1.8\n"), Err(ConfigError::Syntax { line: 1, .. })));
    }

    #[test]
    fn type_mismatch_names_key_and_line() {
        let err = parse_config(&with_kind("[params]\nn_cells = many\n")).unwrap_err();
        assert!(matches!(err, ConfigError::Type { line: 4, .. }));
        assert!(err.to_string().contains("params.n_cells"));
        assert!(parse_config(&with_kind("[params]\ndt = nan\n")).is_err());
    }

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let cfg = parse_config("# header\n\n[experiment]   # trailing\nkind = gamma # inline\n").unwrap();
        assert_eq!(cfg.kind, ExperimentKind::Gamma);
    }

    #[test]
    fn echo_round_trips() {
        let text = "[experiment]\nkind = ladder\noutput_dir = out/x\nseed = 9\n[params]\np = 1.7\nmu = 0.5\nn_cells = 32\n\
                    dt = 0.0003\n[sweep]\nnu = 0.1, 0.01, 0\n[initial]\nkind = indicator\namplitude = 2\n";
        let cfg = parse_config(text).unwrap();
        let echo = cfg.to_text();
        assert_eq!(parse_config(&echo).unwrap(), cfg);
        assert_eq!(parse_config(&echo).unwrap().to_text(), echo);
    }

    #[test]
    fn kind_specific_requirements() {
        assert!(parse_config("[experiment]\nkind = ladder\n").is_err());
        let err = parse_config("[experiment]\nkind = dual_check\n[params]\nmu = 0\n").unwrap_err();
        assert!(err.to_string().contains("params.mu"));
        assert!(parse_config("[experiment]\nkind = galerkin_compare\n[galerkin]\nmodes = 8\nquad_points = 16\n").is_err());
    }
}
