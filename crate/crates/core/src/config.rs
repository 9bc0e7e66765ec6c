//! Plain-text `key = value` run configuration.
//!
//! One key per line, dotted namespaces, `#` starts a comment. Every key is
//! optional and falls back to the default listed in [`SimConfig::default`].
//! Parsing collects every violation before reporting.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::TorusDomain;
use crate::fixedpoint::WindowConfig;
use crate::material::LawShape;
use crate::mollifier::MIN_SUPPORT_CELLS;

/// Environment variable overriding `output.dir`.
pub const OUTPUT_ROOT_ENV: &str = "HALLMHD_OUTPUT_ROOT";

/// Named initial-data generators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// Constant density, no flow, no field.
    Zero,
    /// Constant density, no flow, ABC magnetic field.
    Beltrami,
    /// Seeded random smooth density, velocity and field.
    RandomSmooth,
    /// Discontinuous two-valued density (a centered cube of `rho_high`).
    TwoLevel,
    /// One Fourier mode in each of `ρ`, `u` and `B`.
    SingleMode,
    /// Fields read from snapshot files.
    File,
}

impl Preset {
    pub const ALL: [Preset; 6] = [
        Preset::Zero,
        Preset::Beltrami,
        Preset::RandomSmooth,
        Preset::TwoLevel,
        Preset::SingleMode,
        Preset::File,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Zero => "zero",
            Preset::Beltrami => "beltrami",
            Preset::RandomSmooth => "random_smooth",
            Preset::TwoLevel => "two_level",
            Preset::SingleMode => "single_mode",
            Preset::File => "file",
        }
    }
}

impl FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Preset::ALL.iter().map(|p| p.name()).collect();
                format!("expected one of {}", names.join(", "))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InitialSpec {
    pub preset: Preset,
    /// ABC amplitude for the `beltrami` preset.
    pub amplitude: f64,
    pub u_amplitude: f64,
    pub b_amplitude: f64,
    /// Wavenumber cutoff of `random_smooth` velocity and field (0: `modes.K`).
    pub band: usize,
    pub rho_mean: f64,
    pub rho_amplitude: f64,
    pub rho_low: f64,
    pub rho_high: f64,
    pub rho_file: Option<PathBuf>,
    pub u_file: Option<PathBuf>,
    pub b_file: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutputSpec {
    pub dir: PathBuf,
    /// Write a snapshot every this many windows (0: final state only).
    pub snapshot_interval: usize,
    pub histogram_bins: usize,
}

/// Fully validated run configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimConfig {
    pub length: f64,
    pub grid: usize,
    pub modes: usize,
    pub hall: f64,
    pub mu: LawShape,
    pub sigma: LawShape,
    pub initial: InitialSpec,
    pub mollify_eps: f64,
    pub t_final: f64,
    pub window: WindowConfig,
    pub output: OutputSpec,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            length: 2.0 * std::f64::consts::PI,
            grid: 16,
            modes: 1,
            hall: 1.0,
            mu: LawShape::Constant(1.0),
            sigma: LawShape::Constant(1.0),
            initial: InitialSpec {
                preset: Preset::Beltrami,
                amplitude: 1.0,
                u_amplitude: 1.0,
                band: 0,
                b_amplitude: 1.0,
                rho_mean: 1.0,
                rho_amplitude: 0.0,
                rho_low: 1.0,
                rho_high: 2.0,
                rho_file: None,
                u_file: None,
                b_file: None,
            },
            mollify_eps: 0.0,
            t_final: 1.0,
            window: WindowConfig::default(),
            output: OutputSpec {
                dir: PathBuf::from("out"),
                snapshot_interval: 0,
                histogram_bins: 32,
            },
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn domain(&self) -> Result<TorusDomain> {
        TorusDomain::new(self.length, self.grid)
    }

    /// Nominal density range of the initial data before it is generated.
    ///
    /// File presets are bounded only once the data is read.
    pub fn nominal_density_range(&self) -> Option<(f64, f64)> {
        let i = &self.initial;
        match i.preset {
            Preset::Zero | Preset::Beltrami => Some((i.rho_mean, i.rho_mean)),
            Preset::RandomSmooth | Preset::SingleMode => {
                Some((i.rho_mean - i.rho_amplitude, i.rho_mean + i.rho_amplitude))
            }
            Preset::TwoLevel => Some((i.rho_low, i.rho_high)),
            Preset::File => None,
        }
    }

    /// Check every cross-field constraint, collecting all violations.
    pub fn validate(&self) -> Result<()> {
        let mut v = Vec::new();
        self.collect_violations(&mut v);
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(v))
        }
    }

    fn collect_violations(&self, v: &mut Vec<String>) {
        if !(self.length > 0.0 && self.length.is_finite()) {
            v.push(format!("domain.L: expected a positive length, got {}", self.length));
        }
        if self.grid < 4 {
            v.push(format!("domain.M: expected an integer >= 4, got {}", self.grid));
        }
        if self.modes < 1 {
            v.push(format!("modes.K: expected an integer >= 1, got {}", self.modes));
        } else if self.grid < 4 * self.modes {
            v.push(format!(
                "domain.M: aliasing rule requires M >= 4*K = {}, got M = {}",
                4 * self.modes,
                self.grid
            ));
        }
        if !(self.hall >= 0.0 && self.hall.is_finite()) {
            v.push(format!("model.h: expected h >= 0, got {}", self.hall));
        }
        let i = &self.initial;
        let nonneg = [
            ("initial.amplitude", i.amplitude),
            ("initial.u_amplitude", i.u_amplitude),
            ("initial.b_amplitude", i.b_amplitude),
            ("initial.rho_amplitude", i.rho_amplitude),
        ];
        for (k, x) in nonneg {
            if !(x >= 0.0 && x.is_finite()) {
                v.push(format!("{k}: expected a value >= 0, got {x}"));
            }
        }
        if i.band > self.modes {
            v.push(format!("initial.band: expected band <= modes.K = {}, got {}", self.modes, i.band));
        }
        match i.preset {
            Preset::Zero | Preset::Beltrami | Preset::RandomSmooth | Preset::SingleMode => {
                if !(i.rho_mean - i.rho_amplitude > 0.0) {
                    v.push(format!(
                        "initial.rho_mean: expected rho_mean - rho_amplitude > 0, got {} - {}",
                        i.rho_mean, i.rho_amplitude
                    ));
                }
            }
            Preset::TwoLevel => {
                if !(i.rho_low > 0.0 && i.rho_high >= i.rho_low) {
                    v.push(format!(
                        "initial.rho_low: expected 0 < rho_low <= rho_high, got [{}, {}]",
                        i.rho_low, i.rho_high
                    ));
                }
            }
            Preset::File => {
                if i.rho_file.is_none() {
                    v.push("initial.rho_file: required by preset 'file'".into());
                }
            }
        }
        if let Some((lo, hi)) = self.nominal_density_range() {
            if lo > 0.0 && hi >= lo {
                for (key, shape) in [("laws.mu", self.mu), ("laws.sigma", self.sigma)] {
                    let (a, b) = (shape.eval(lo), shape.eval(hi));
                    let mut min = a.min(b);
                    if let LawShape::Quadratic { b: q1, c: q2, .. } = shape {
                        if q2 != 0.0 {
                            let vtx = -q1 / (2.0 * q2);
                            if vtx > lo && vtx < hi {
                                min = min.min(shape.eval(vtx));
                            }
                        }
                    }
                    if !(min > 0.0) {
                        v.push(format!(
                            "{key}: law {shape} must be positive on the density range [{lo}, {hi}] (min {min})"
                        ));
                    }
                }
            }
        }
        let eps = self.mollify_eps;
        if eps != 0.0 {
            if !(eps > 0.0 && eps < 1.0) {
                v.push(format!("mollify.eps: expected 0 or a value in (0, 1), got {eps}"));
            } else if self.grid > 0 && self.length > 0.0 {
                let cells = eps * self.grid as f64 / self.length;
                if cells < MIN_SUPPORT_CELLS {
                    v.push(format!(
                        "mollify.eps: support must span >= {MIN_SUPPORT_CELLS} cells (eps >= {}), got {cells:.3} cells",
                        MIN_SUPPORT_CELLS * self.length / self.grid as f64
                    ));
                }
            }
        }
        if !(self.t_final > 0.0 && self.t_final.is_finite()) {
            v.push(format!("time.T: expected a positive final time, got {}", self.t_final));
        }
        if let Err(Error::Config(w)) = self.window.validate() {
            let keys = [
                ("dt_window", "time.dt_window"),
                ("picard_tol", "tol.picard"),
                ("picard_max_iter", "tol.picard_max_iter"),
                ("relaxation", "tol.relaxation"),
                ("ode_tol", "tol.ode"),
            ];
            for msg in w {
                let key = keys.iter().find(|(f, _)| msg.starts_with(f)).map_or("tol", |(_, k)| k);
                v.push(format!("{key}: {msg}"));
            }
        }
        if self.output.histogram_bins == 0 {
            v.push("output.histogram_bins: expected an integer >= 1, got 0".into());
        }
    }

    /// Canonical document listing every key; `parse_config(echo)` reproduces `self`.
    pub fn echo(&self) -> String {
        let mut s = String::new();
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        let i = &self.initial;
        let w = &self.window;
        let rows: Vec<(&str, String)> = vec![
            ("domain.L", fmt_f(self.length)),
            ("domain.M", self.grid.to_string()),
            ("modes.K", self.modes.to_string()),
            ("model.h", fmt_f(self.hall)),
            ("laws.mu", self.mu.to_string()),
            ("laws.sigma", self.sigma.to_string()),
            ("initial.preset", i.preset.name().to_string()),
            ("initial.amplitude", fmt_f(i.amplitude)),
            ("initial.u_amplitude", fmt_f(i.u_amplitude)),
            ("initial.b_amplitude", fmt_f(i.b_amplitude)),
            ("initial.band", i.band.to_string()),
            ("initial.rho_mean", fmt_f(i.rho_mean)),
            ("initial.rho_amplitude", fmt_f(i.rho_amplitude)),
            ("initial.rho_low", fmt_f(i.rho_low)),
            ("initial.rho_high", fmt_f(i.rho_high)),
            ("initial.rho_file", path(&i.rho_file)),
            ("initial.u_file", path(&i.u_file)),
            ("initial.b_file", path(&i.b_file)),
            ("mollify.eps", fmt_f(self.mollify_eps)),
            ("time.T", fmt_f(self.t_final)),
            ("time.dt_window", fmt_f(w.dt_window)),
            ("tol.ode", fmt_f(w.ode_tol)),
            ("tol.picard", fmt_f(w.picard_tol)),
            ("tol.picard_max_iter", w.picard_max_iter.to_string()),
            ("tol.relaxation", fmt_f(w.relaxation)),
            ("tol.max_halving", w.max_halving.to_string()),
            ("output.dir", self.output.dir.display().to_string()),
            ("output.snapshot_interval", self.output.snapshot_interval.to_string()),
            ("output.histogram_bins", self.output.histogram_bins.to_string()),
            ("seed", self.seed.to_string()),
        ];
        for (k, val) in rows {
            let _ = writeln!(s, "{k} = {val}");
        }
        s
    }
}

/// Shortest round-trip decimal form.
fn fmt_f(x: f64) -> String {
    format!("{x:?}")
}

/// Every recognized key.
pub const KEYS: [&str; 30] = [
    "domain.L",
    "domain.M",
    "modes.K",
    "model.h",
    "laws.mu",
    "laws.sigma",
    "initial.preset",
    "initial.amplitude",
    "initial.u_amplitude",
    "initial.b_amplitude",
    "initial.band",
    "initial.rho_mean",
    "initial.rho_amplitude",
    "initial.rho_low",
    "initial.rho_high",
    "initial.rho_file",
    "initial.u_file",
    "initial.b_file",
    "mollify.eps",
    "time.T",
    "time.dt_window",
    "tol.ode",
    "tol.picard",
    "tol.picard_max_iter",
    "tol.relaxation",
    "tol.max_halving",
    "output.dir",
    "output.snapshot_interval",
    "output.histogram_bins",
    "seed",
];

/// Real number; `L` additionally accepts `2pi`, `pi` and `<c>pi`.
fn parse_real(s: &str) -> std::result::Result<f64, String> {
    let t = s.trim();
    if let Some(head) = t.strip_suffix("pi") {
        let c = if head.is_empty() {
            1.0
        } else {
            head.trim_end_matches('*').parse::<f64>().map_err(|_| "a real number".to_string())?
        };
        return Ok(c * std::f64::consts::PI);
    }
    t.parse::<f64>().map_err(|_| "a real number".to_string())
}

fn parse_uint<T: FromStr>(s: &str) -> std::result::Result<T, String> {
    s.trim().parse::<T>().map_err(|_| "a non-negative integer".to_string())
}

fn parse_path(s: &str) -> Option<PathBuf> {
    let t = s.trim();
    (!t.is_empty()).then(|| PathBuf::from(t))
}

/// Parse and validate a configuration document.
pub fn parse_config(text: &str) -> Result<SimConfig> {
    let mut cfg = SimConfig::default();
    let mut errors = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            errors.push(format!("line {}: expected 'key = value', got '{line}'", lineno + 1));
            continue;
        };
        let (key, value) = (key.trim(), value.trim());
        if !KEYS.contains(&key) {
            errors.push(format!("{key}: unknown key (line {})", lineno + 1));
            continue;
        }
        if !seen.insert(key.to_string()) {
            errors.push(format!("{key}: duplicate key (line {})", lineno + 1));
            continue;
        }
        if let Err(expected) = apply(&mut cfg, key, value) {
            errors.push(format!("{key}: expected {expected}, got '{value}'"));
        }
    }
    cfg.collect_violations(&mut errors);
    if errors.is_empty() {
        Ok(cfg)
    } else {
        Err(Error::Config(errors))
    }
}

fn apply(cfg: &mut SimConfig, key: &str, v: &str) -> std::result::Result<(), String> {
    let i = &mut cfg.initial;
    let w = &mut cfg.window;
    match key {
        "domain.L" => cfg.length = parse_real(v)?,
        "domain.M" => cfg.grid = parse_uint(v)?,
        "modes.K" => cfg.modes = parse_uint(v)?,
        "model.h" => cfg.hall = parse_real(v)?,
        "laws.mu" => cfg.mu = v.parse().map_err(|e: String| format!("a law spec ({e})"))?,
        "laws.sigma" => cfg.sigma = v.parse().map_err(|e: String| format!("a law spec ({e})"))?,
        "initial.preset" => i.preset = v.parse()?,
        "initial.amplitude" => i.amplitude = parse_real(v)?,
        "initial.u_amplitude" => i.u_amplitude = parse_real(v)?,
        "initial.b_amplitude" => i.b_amplitude = parse_real(v)?,
        "initial.band" => i.band = parse_uint(v)?,
        "initial.rho_mean" => i.rho_mean = parse_real(v)?,
        "initial.rho_amplitude" => i.rho_amplitude = parse_real(v)?,
        "initial.rho_low" => i.rho_low = parse_real(v)?,
        "initial.rho_high" => i.rho_high = parse_real(v)?,
        "initial.rho_file" => i.rho_file = parse_path(v),
        "initial.u_file" => i.u_file = parse_path(v),
        "initial.b_file" => i.b_file = parse_path(v),
        "mollify.eps" => cfg.mollify_eps = parse_real(v)?,
        "time.T" => cfg.t_final = parse_real(v)?,
        "time.dt_window" => w.dt_window = parse_real(v)?,
        "tol.ode" => w.ode_tol = parse_real(v)?,
        "tol.picard" => w.picard_tol = parse_real(v)?,
        "tol.picard_max_iter" => w.picard_max_iter = parse_uint(v)?,
        "tol.relaxation" => w.relaxation = parse_real(v)?,
        "tol.max_halving" => w.max_halving = parse_uint(v)?,
        "output.dir" => cfg.output.dir = PathBuf::from(v),
        "output.snapshot_interval" => cfg.output.snapshot_interval = parse_uint(v)?,
        "output.histogram_bins" => cfg.output.histogram_bins = parse_uint(v)?,
        "seed" => cfg.seed = parse_uint(v)?,
        _ => unreachable!("key list checked by caller"),
    }
    Ok(())
}
