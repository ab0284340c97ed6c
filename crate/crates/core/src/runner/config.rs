//! Experiment configuration: TOML sections of `key = value` lines, parsed
//! with unknown keys rejected and every problem reported with its line.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{BlochAxis, BosonState, InitialState, Polarization};
use crate::propagate::Generator;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Spectrum,
    LyapunovMap,
    Fotoc,
    Twa,
    Renyi,
    Thermalize,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Spectrum => "spectrum",
            ExperimentKind::LyapunovMap => "lyapunov-map",
            ExperimentKind::Fotoc => "fotoc",
            ExperimentKind::Twa => "twa",
            ExperimentKind::Renyi => "renyi",
            ExperimentKind::Thermalize => "thermalize",
        }
    }

    /// Kinds that build the truncated Hilbert space and need a cutoff.
    pub fn needs_cutoff(self) -> bool {
        !matches!(self, ExperimentKind::LyapunovMap | ExperimentKind::Twa)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentSection,
    pub model: ModelSection,
    #[serde(default)]
    pub state: StateSection,
    #[serde(default)]
    pub time: TimeSection,
    #[serde(default)]
    pub fotoc: FotocSection,
    #[serde(default)]
    pub twa: TwaSection,
    #[serde(default)]
    pub scan: ScanSection,
    #[serde(default)]
    pub spectrum: SpectrumSection,
    #[serde(default)]
    pub renyi: RenyiSection,
    #[serde(default)]
    pub thermalize: ThermalizeSection,
    #[serde(default)]
    pub decoherence: Option<DecoherenceSection>,
    #[serde(default)]
    pub limits: LimitsSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub kind: ExperimentKind,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

fn default_seed() -> u64 {
    1
}

/// Boson cutoff: a fixed n_max or `"auto"` for the convergence ladder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CutoffSpec {
    Fixed(usize),
    Named(AutoCutoff),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AutoCutoff {
    Auto,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub n_spins: usize,
    #[serde(default = "default_g")]
    pub g_khz: f64,
    #[serde(default = "default_delta")]
    pub delta_khz: f64,
    /// Transverse field in kHz; exclusive with `field_ratio`.
    #[serde(default)]
    pub b_khz: Option<f64>,
    /// B/B_c; exclusive with `b_khz`.
    #[serde(default)]
    pub field_ratio: Option<f64>,
    #[serde(default)]
    pub n_max: Option<CutoffSpec>,
}

fn default_g() -> f64 {
    0.66
}

fn default_delta() -> f64 {
    0.5
}

pub const DEFAULT_B_KHZ: f64 = 0.7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AxisSpec {
    Named(String),
    Angles([f64; 2]),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BosonSpec {
    Named(String),
    Fock { fock: usize },
    Coherent { coherent: [f64; 2] },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateSection {
    /// "x", "y", "z" or [θ, φ] in radians.
    pub axis: AxisSpec,
    /// "up" or "down".
    pub polarization: String,
    /// "vacuum", { fock = n } or { coherent = [re, im] }.
    pub boson: BosonSpec,
}

impl Default for StateSection {
    fn default() -> Self {
        StateSection {
            axis: AxisSpec::Named("x".into()),
            polarization: "down".into(),
            boson: BosonSpec::Named("vacuum".into()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimeSection {
    pub start_ms: f64,
    pub end_ms: f64,
    pub points: usize,
}

impl Default for TimeSection {
    fn default() -> Self {
        TimeSection {
            start_ms: 0.0,
            end_ms: 12.0,
            points: 600,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PropagatorChoice {
    Auto,
    Dense,
    Chebyshev,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FotocSection {
    pub generators: Vec<String>,
    /// Rotation angle; 10⁻²/N when absent.
    pub dphi: Option<f64>,
    pub tail_threshold: f64,
    pub propagator: PropagatorChoice,
}

impl Default for FotocSection {
    fn default() -> Self {
        FotocSection {
            generators: vec!["X".into(), "S_y".into()],
            dphi: None,
            tail_threshold: 1e-8,
            propagator: PropagatorChoice::Auto,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VariablesChoice {
    Auto,
    Bare,
    Rescaled,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TwaSection {
    pub trajectories: usize,
    pub blocks: usize,
    pub rtol: f64,
    pub atol: f64,
    pub variables: VariablesChoice,
}

impl Default for TwaSection {
    fn default() -> Self {
        TwaSection {
            trajectories: 10_000,
            blocks: 20,
            rtol: 1e-10,
            atol: 1e-12,
            variables: VariablesChoice::Auto,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScanSection {
    pub field_ratios: Vec<f64>,
    pub energy_min: f64,
    pub energy_max: f64,
    pub energy_step: f64,
    pub samples_per_field: usize,
    pub r_max: f64,
    pub t_end_ms: f64,
    pub renorm_interval_ms: f64,
}

impl Default for ScanSection {
    fn default() -> Self {
        ScanSection {
            field_ratios: vec![0.1, 0.2, 0.4, 0.6, 0.8, 1.2, 1.6, 2.5, 4.0],
            energy_min: -3.0,
            energy_max: 3.0,
            energy_step: 0.25,
            samples_per_field: 400,
            r_max: 1.5,
            t_end_ms: 50.0,
            renorm_interval_ms: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParityChoice {
    Resolved,
    Mixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectrumSection {
    /// Second cutoff the levels are checked against; 1.2·n_max when absent.
    pub fine_n_max: Option<usize>,
    /// Largest level shift between cutoffs, in units of the local spacing.
    pub converged_tolerance: f64,
    pub parity: ParityChoice,
    pub degree: usize,
    pub trim: f64,
    pub bins: usize,
    pub min_levels: usize,
    pub oracle_matrices: usize,
    pub oracle_dim: usize,
}

impl Default for SpectrumSection {
    fn default() -> Self {
        SpectrumSection {
            fine_n_max: None,
            converged_tolerance: 1e-3,
            parity: ParityChoice::Resolved,
            degree: 7,
            trim: 0.05,
            bins: 40,
            min_levels: 50,
            oracle_matrices: 200,
            oracle_dim: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RenyiSection {
    /// Field ratios to sweep; the model's field when empty.
    pub field_ratios: Vec<f64>,
    pub window_start_ms: f64,
    pub window_end_ms: f64,
    /// Subsystem sizes evaluated at the first field ratio.
    pub subsystem_sizes: Vec<usize>,
    pub axis_theta_points: usize,
    pub axis_phi_points: usize,
    /// Blocks for the standard error of a time average.
    pub average_blocks: usize,
}

impl Default for RenyiSection {
    fn default() -> Self {
        RenyiSection {
            field_ratios: Vec::new(),
            window_start_ms: 4.0,
            window_end_ms: 12.0,
            subsystem_sizes: Vec::new(),
            axis_theta_points: 24,
            axis_phi_points: 48,
            average_blocks: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ThermalizeSection {
    pub window_start_ms: f64,
    pub window_end_ms: f64,
    pub window_points: usize,
    /// 1..=N/2 when empty.
    pub subsystem_sizes: Vec<usize>,
}

impl Default for ThermalizeSection {
    fn default() -> Self {
        ThermalizeSection {
            window_start_ms: 6.0,
            window_end_ms: 12.0,
            window_points: 61,
            subsystem_sizes: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecoherenceSection {
    /// Dephasing rate Γ in s⁻¹.
    pub gamma_per_s: f64,
    /// Factor multiplying g, δ and B; Γ is not scaled.
    #[serde(default = "default_enhancement")]
    pub enhancement: f64,
}

fn default_enhancement() -> f64 {
    1.0
}

impl DecoherenceSection {
    pub fn gamma_per_ms(&self) -> f64 {
        self.gamma_per_s * 1e-3
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LimitsSection {
    /// Largest block handed to the dense eigensolver.
    pub max_dim: usize,
    /// Largest Hilbert space for the sparse propagator.
    pub max_sparse_dim: usize,
    pub max_trajectories: usize,
}

impl Default for LimitsSection {
    fn default() -> Self {
        LimitsSection {
            max_dim: 8192,
            max_sparse_dim: 200_000,
            max_trajectories: 1_000_000,
        }
    }
}

/// 1-based line of `key = …` inside `[section]`, if present.
pub fn line_of(text: &str, section: &str, key: &str) -> Option<usize> {
    let mut current = String::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            current = name.trim().to_string();
            if key.is_empty() && current == section {
                return Some(i + 1);
            }
            continue;
        }
        if current == section {
            if let Some((k, _)) = line.split_once('=') {
                if k.trim() == key {
                    return Some(i + 1);
                }
            }
        }
    }
    None
}

fn config_error(text: &str, section: &str, key: &str, message: impl Into<String>) -> Error {
    Error::Config {
        line: line_of(text, section, key).or_else(|| line_of(text, section, "")),
        key: Some(format!("{section}.{key}")),
        message: message.into(),
    }
}

/// Parses and validates a configuration file's text.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| {
        let line = e.span().map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1);
        let message = e.message().to_string();
        let key = message.split('`').nth(1).map(str::to_string);
        Error::Config { line, key, message }
    })?;
    cfg.validate(text)?;
    Ok(cfg)
}

pub fn load_config(path: &std::path::Path) -> Result<ExperimentConfig> {
    parse_config(&std::fs::read_to_string(path)?)
}

fn finite_positive(x: f64) -> bool {
    x.is_finite() && x > 0.0
}

impl ExperimentConfig {
    /// Checks every field the chosen experiment will read.
    pub fn validate(&self, text: &str) -> Result<()> {
        let err = |section: &str, key: &str, msg: String| Err(config_error(text, section, key, msg));
        let m = &self.model;
        if m.n_spins == 0 {
            return err("model", "n_spins", "must be at least 1".into());
        }
        for (key, v) in [("g_khz", m.g_khz), ("delta_khz", m.delta_khz)] {
            if !(v.is_finite() && v >= 0.0) {
                return err("model", key, format!("must be a non-negative frequency, got {v}"));
            }
        }
        match (m.b_khz, m.field_ratio) {
            (Some(_), Some(_)) => return err("model", "field_ratio", "give either b_khz or field_ratio, not both".into()),
            (Some(b), None) if !(b.is_finite() && b >= 0.0) => {
                return err("model", "b_khz", format!("must be a non-negative frequency, got {b}"))
            }
            (None, Some(r)) if !(r.is_finite() && r >= 0.0) => {
                return err("model", "field_ratio", format!("must be non-negative, got {r}"))
            }
            _ => {}
        }
        let uses_ratio = m.field_ratio.is_some()
            || (self.experiment.kind == ExperimentKind::Renyi && !self.renyi.field_ratios.is_empty())
            || self.experiment.kind == ExperimentKind::LyapunovMap;
        if uses_ratio && !(m.delta_khz > 0.0) {
            return err("model", "delta_khz", "field ratios need a positive detuning".into());
        }
        let kind = self.experiment.kind;
        if kind.needs_cutoff() {
            match m.n_max {
                None => {
                    return Err(Error::Config {
                        line: line_of(text, "model", ""),
                        key: Some("model.n_max".into()),
                        message: format!("missing boson cutoff, required by the {} experiment", kind.name()),
                    })
                }
                Some(CutoffSpec::Fixed(0)) => return err("model", "n_max", "must be at least 1".into()),
                _ => {}
            }
        }
        let t = &self.time;
        if !(t.start_ms.is_finite() && t.start_ms >= 0.0) {
            return err("time", "start_ms", "must be non-negative".into());
        }
        if !(t.end_ms.is_finite() && t.end_ms > t.start_ms) {
            return err("time", "end_ms", "must exceed start_ms".into());
        }
        if t.points < 2 {
            return err("time", "points", "need at least 2 grid points".into());
        }
        self.initial_state().map_err(|e| config_error(text, "state", "axis", e.to_string()))?;
        if let BosonSpec::Named(s) = &self.state.boson {
            if s != "vacuum" {
                return err("state", "boson", format!("unknown boson state `{s}`"));
            }
        }
        match kind {
            ExperimentKind::Fotoc => {
                if self.fotoc.generators.is_empty() {
                    return err("fotoc", "generators", "list at least one generator".into());
                }
                for g in &self.fotoc.generators {
                    parse_generator(g).map_err(|e| config_error(text, "fotoc", "generators", e.to_string()))?;
                }
                if let Some(d) = self.fotoc.dphi {
                    if !d.is_finite() {
                        return err("fotoc", "dphi", "must be finite".into());
                    }
                }
                if !finite_positive(self.fotoc.tail_threshold) {
                    return err("fotoc", "tail_threshold", "must be positive".into());
                }
            }
            ExperimentKind::Twa => {
                let w = &self.twa;
                if w.trajectories < 2 {
                    return err("twa", "trajectories", "need at least 2 trajectories".into());
                }
                if w.blocks < 2 || w.blocks > w.trajectories {
                    return err("twa", "blocks", "must lie in 2..=trajectories".into());
                }
                if !finite_positive(w.rtol) || !finite_positive(w.atol) {
                    return err("twa", "rtol", "tolerances must be positive".into());
                }
            }
            ExperimentKind::LyapunovMap => {
                let s = &self.scan;
                if s.field_ratios.is_empty() || s.field_ratios.iter().any(|r| !finite_positive(*r)) {
                    return err("scan", "field_ratios", "need positive field ratios".into());
                }
                if !(s.energy_max > s.energy_min) || !finite_positive(s.energy_step) {
                    return err("scan", "energy_step", "energy bins need energy_max > energy_min and a positive step".into());
                }
                if s.samples_per_field == 0 {
                    return err("scan", "samples_per_field", "must be at least 1".into());
                }
                if !finite_positive(s.t_end_ms) || !finite_positive(s.renorm_interval_ms) {
                    return err("scan", "t_end_ms", "times must be positive".into());
                }
            }
            ExperimentKind::Spectrum => {
                let s = &self.spectrum;
                if !(0.0..0.5).contains(&s.trim) {
                    return err("spectrum", "trim", "must lie in [0, 0.5)".into());
                }
                if s.degree == 0 || s.bins == 0 {
                    return err("spectrum", "degree", "degree and bins must be positive".into());
                }
                if s.oracle_matrices < 2 || s.oracle_dim < 8 {
                    return err("spectrum", "oracle_matrices", "oracle needs at least 2 matrices of dimension 8".into());
                }
                if !finite_positive(s.converged_tolerance) {
                    return err("spectrum", "converged_tolerance", "must be positive".into());
                }
            }
            ExperimentKind::Renyi => {
                let r = &self.renyi;
                if !(r.window_end_ms > r.window_start_ms) {
                    return err("renyi", "window_end_ms", "must exceed window_start_ms".into());
                }
                if r.window_start_ms < t.start_ms || r.window_end_ms > t.end_ms {
                    return err("renyi", "window_start_ms", "averaging window must lie inside the time grid".into());
                }
                if r.field_ratios.iter().any(|x| !finite_positive(*x)) {
                    return err("renyi", "field_ratios", "must be positive".into());
                }
                if let Some(&l) = r.subsystem_sizes.iter().find(|&&l| l == 0 || l > m.n_spins) {
                    return err("renyi", "subsystem_sizes", format!("size {l} outside 1..={}", m.n_spins));
                }
                if r.axis_theta_points == 0 || r.axis_phi_points == 0 {
                    return err("renyi", "axis_theta_points", "axis grid must be non-empty".into());
                }
                if r.average_blocks < 2 {
                    return err("renyi", "average_blocks", "need at least 2 blocks".into());
                }
            }
            ExperimentKind::Thermalize => {
                let h = &self.thermalize;
                if !(h.window_end_ms > h.window_start_ms && h.window_start_ms >= 0.0) {
                    return err("thermalize", "window_end_ms", "must exceed window_start_ms ≥ 0".into());
                }
                if h.window_points < 2 {
                    return err("thermalize", "window_points", "need at least 2 points".into());
                }
                if let Some(&l) = h.subsystem_sizes.iter().find(|&&l| l == 0 || l > m.n_spins) {
                    return err("thermalize", "subsystem_sizes", format!("size {l} outside 1..={}", m.n_spins));
                }
            }
        }
        if let Some(d) = &self.decoherence {
            if !(d.gamma_per_s.is_finite() && d.gamma_per_s >= 0.0) {
                return err("decoherence", "gamma_per_s", "must be non-negative".into());
            }
            if !finite_positive(d.enhancement) {
                return err("decoherence", "enhancement", "must be positive".into());
            }
        }
        Ok(())
    }

    pub fn initial_state(&self) -> Result<InitialState> {
        let s = &self.state;
        let axis = match &s.axis {
            AxisSpec::Named(n) => match n.as_str() {
                "x" => BlochAxis::X,
                "y" => BlochAxis::Y,
                "z" => BlochAxis::Z,
                other => return Err(Error::param("axis", format!("unknown axis `{other}` (x, y, z or [theta, phi])"))),
            },
            AxisSpec::Angles([t, p]) => BlochAxis::new(*t, *p),
        };
        let polarization = match s.polarization.as_str() {
            "up" => Polarization::Up,
            "down" => Polarization::Down,
            other => return Err(Error::param("polarization", format!("`{other}` is neither up nor down"))),
        };
        let boson = match &s.boson {
            BosonSpec::Named(_) => BosonState::Fock(0),
            BosonSpec::Fock { fock } => BosonState::Fock(*fock),
            BosonSpec::Coherent { coherent: [re, im] } => BosonState::Coherent { re: *re, im: *im },
        };
        Ok(InitialState {
            axis,
            polarization,
            boson,
        })
    }
}

/// "X", "S_x", "S_y", "S_z" or "n".
pub fn parse_generator(name: &str) -> Result<Generator> {
    Ok(match name {
        "X" => Generator::Quadrature,
        "S_y" => Generator::Sy,
        "S_x" => Generator::SpinAxis(BlochAxis::X),
        "S_z" => Generator::SpinAxis(BlochAxis::Z),
        "n" => Generator::Number,
        other => return Err(Error::UnsupportedGenerator(format!("`{other}` (use X, S_x, S_y, S_z or n)"))),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const FOTOC: &str = r#"
[experiment]
kind = "fotoc"
seed = 3

[model]
n_spins = 40
field_ratio = 0.2
n_max = 300

[time]
end_ms = 4.0
points = 81
"#;

    #[test]
    fn parses_a_complete_file() {
        let cfg = parse_config(FOTOC).unwrap();
        assert_eq!(cfg.experiment.kind, ExperimentKind::Fotoc);
        assert_eq!(cfg.model.n_max, Some(CutoffSpec::Fixed(300)));
        assert_eq!(cfg.fotoc.generators, vec!["X", "S_y"]);
        assert_eq!(cfg.initial_state().unwrap(), InitialState::critical());
    }

    #[test]
    fn missing_cutoff_names_the_key() {
        let text = FOTOC.replace("n_max = 300\n", "");
        match parse_config(&text) {
            Err(Error::Config { key, line, .. }) => {
                assert_eq!(key.as_deref(), Some("model.n_max"));
                assert_eq!(line, Some(6));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_keys_are_rejected_with_their_line() {
        let text = FOTOC.replace("points = 81", "points = 81\nstep_ms = 0.1");
        match parse_config(&text) {
            Err(Error::Config { key, line, .. }) => {
                assert_eq!(key.as_deref(), Some("step_ms"));
                assert_eq!(line, Some(14));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn semantic_errors_point_at_the_key() {
        let text = FOTOC.replace("field_ratio = 0.2", "field_ratio = -1.0");
        match parse_config(&text) {
            Err(e @ Error::Config { .. }) => {
                assert_eq!(e.exit_code(), 2);
                let msg = e.to_string();
                assert!(msg.contains("line 8") && msg.contains("model.field_ratio"), "{msg}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn auto_cutoff_and_state_variants() {
        let text = FOTOC
            .replace("n_max = 300", "n_max = \"auto\"")
            .replace("[time]", "[state]\naxis = [0.5, 1.0]\npolarization = \"up\"\nboson = { coherent = [0.1, 0.2] }\n\n[time]");
        let cfg = parse_config(&text).unwrap();
        assert_eq!(cfg.model.n_max, Some(CutoffSpec::Named(AutoCutoff::Auto)));
        let s = cfg.initial_state().unwrap();
        assert_eq!(s.boson, BosonState::Coherent { re: 0.1, im: 0.2 });
        assert_eq!(s.polarization, Polarization::Up);
    }

    #[test]
    fn twa_does_not_need_a_cutoff() {
        let text = FOTOC.replace("kind = \"fotoc\"", "kind = \"twa\"").replace("n_max = 300\n", "");
        assert!(parse_config(&text).is_ok());
    }

    #[test]
    fn bad_generator_is_reported() {
        let text = FOTOC.replace("[time]", "[fotoc]\ngenerators = [\"Q\"]\n\n[time]");
        assert!(matches!(parse_config(&text), Err(Error::Config { .. })));
    }
}
