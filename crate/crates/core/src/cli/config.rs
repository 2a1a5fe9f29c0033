//! Experiment configuration: a flat `key = value` text format with `#`
//! comments and dotted keys for grouping.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use crate::adapt::{AdaptationConfig, ShorteningMode};
use crate::closed_loop::StopRule;
use crate::estimate::EstimatorKind;
use crate::ocp::SolverOptions;

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    /// 1-based line number, when the problem comes from a file line.
    pub line: Option<usize>,
    pub key: Option<String>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (&self.line, &self.key) {
            (Some(l), Some(k)) => write!(f, "line {l}, key '{k}': {}", self.message),
            (Some(l), None) => write!(f, "line {l}: {}", self.message),
            (None, Some(k)) => write!(f, "key '{k}': {}", self.message),
            (None, None) => f.write_str(&self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

impl ConfigError {
    fn new(line: Option<usize>, key: Option<&str>, message: impl Into<String>) -> Self {
        ConfigError {
            line,
            key: key.map(str::to_owned),
            message: message.into(),
        }
    }
}

/// Raw key-value pairs, remembering the line each key came from.
#[derive(Debug, Clone, Default)]
pub struct KeyValues {
    entries: BTreeMap<String, (String, Option<usize>)>,
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut kv = KeyValues::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(ConfigError::new(
                    Some(i + 1),
                    None,
                    "expected 'key = value'",
                ));
            };
            let key = key.trim();
            if key.is_empty()
                || !key
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.')
            {
                return Err(ConfigError::new(Some(i + 1), Some(key), "malformed key"));
            }
            if kv.entries.contains_key(key) {
                return Err(ConfigError::new(Some(i + 1), Some(key), "duplicate key"));
            }
            kv.entries
                .insert(key.to_owned(), (value.trim().to_owned(), Some(i + 1)));
        }
        Ok(kv)
    }

    /// Applies a `key=value` override; later overrides win.
    pub fn set_override(&mut self, assignment: &str) -> Result<(), ConfigError> {
        let Some((key, value)) = assignment.split_once('=') else {
            return Err(ConfigError::new(
                None,
                None,
                format!("override '{assignment}' is not key=value"),
            ));
        };
        self.entries
            .insert(key.trim().to_owned(), (value.trim().to_owned(), None));
        Ok(())
    }

    fn take(&mut self, key: &str) -> Option<(String, Option<usize>)> {
        self.entries.remove(key)
    }

    fn take_parsed<T>(&mut self, key: &str) -> Result<Option<T>, ConfigError>
    where
        T: std::str::FromStr,
        T::Err: fmt::Display,
    {
        match self.take(key) {
            None => Ok(None),
            Some((v, line)) => v
                .parse()
                .map(Some)
                .map_err(|e| ConfigError::new(line, Some(key), format!("cannot parse '{v}': {e}"))),
        }
    }

    fn take_list<T>(&mut self, key: &str) -> Result<Option<Vec<T>>, ConfigError>
    where
        T: std::str::FromStr,
        T::Err: fmt::Display,
    {
        match self.take(key) {
            None => Ok(None),
            Some((v, line)) => parse_list(&v)
                .map(Some)
                .map_err(|e| ConfigError::new(line, Some(key), e)),
        }
    }

    fn take_matrix(&mut self, key: &str) -> Result<Option<Vec<Vec<f64>>>, ConfigError> {
        match self.take(key) {
            None => Ok(None),
            Some((v, line)) => parse_matrix(&v)
                .map(Some)
                .map_err(|e| ConfigError::new(line, Some(key), e)),
        }
    }

    fn finish(self) -> Result<(), ConfigError> {
        match self.entries.into_iter().next() {
            None => Ok(()),
            Some((k, (_, line))) => Err(ConfigError::new(line, Some(&k), "unknown key")),
        }
    }
}

fn parse_list<T>(v: &str) -> Result<Vec<T>, String>
where
    T: std::str::FromStr,
    T::Err: fmt::Display,
{
    v.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|e| format!("cannot parse '{s}': {e}")))
        .collect()
}

/// Rows separated by `;`, entries by commas or whitespace.
fn parse_matrix(v: &str) -> Result<Vec<Vec<f64>>, String> {
    let rows: Vec<Vec<f64>> = v.split(';').map(parse_list).collect::<Result<_, _>>()?;
    let cols = rows.first().map_or(0, Vec::len);
    if cols == 0 || rows.iter().any(|r| r.len() != cols) {
        return Err("matrix rows must be nonempty and of equal length".into());
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelSelector {
    Crane,
    Lq,
    Finite,
    /// A linear-quadratic system read from a separate key-value file.
    File(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunMode {
    Fixed,
    Adaptive,
}

/// `x⁺ = Ax + Bu`, `l = x'Qx + u'Ru` with optional control bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct LqSpec {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    pub q: Vec<Vec<f64>>,
    pub r: Vec<Vec<f64>>,
    pub u_lo: Option<Vec<f64>>,
    pub u_hi: Option<Vec<f64>>,
    pub x0: Option<Vec<f64>>,
}

impl Default for LqSpec {
    fn default() -> Self {
        LqSpec {
            a: vec![vec![1.0]],
            b: vec![vec![1.0]],
            q: vec![vec![1.0]],
            r: vec![vec![1.0]],
            u_lo: None,
            u_hi: None,
            x0: None,
        }
    }
}

impl LqSpec {
    fn take(kv: &mut KeyValues, prefix: &str) -> Result<Self, ConfigError> {
        let d = LqSpec::default();
        let key = |k: &str| format!("{prefix}{k}");
        Ok(LqSpec {
            a: kv.take_matrix(&key("a"))?.unwrap_or(d.a),
            b: kv.take_matrix(&key("b"))?.unwrap_or(d.b),
            q: kv.take_matrix(&key("q"))?.unwrap_or(d.q),
            r: kv.take_matrix(&key("r"))?.unwrap_or(d.r),
            u_lo: kv.take_list(&key("u_lo"))?,
            u_hi: kv.take_list(&key("u_hi"))?,
            x0: kv.take_list(&key("x0"))?,
        })
    }

    /// Reads a system file: keys `a`, `b`, `q`, `r` and optionally
    /// `u_lo`, `u_hi`, `x0`.
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            ConfigError::new(None, Some("model.path"), format!("{}: {e}", path.display()))
        })?;
        let mut kv = KeyValues::parse(&text).map_err(|mut e| {
            e.message = format!("{}: {}", path.display(), e.message);
            e
        })?;
        let spec = LqSpec::take(&mut kv, "")?;
        kv.finish()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FiniteSpec {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl Default for FiniteSpec {
    fn default() -> Self {
        FiniteSpec {
            lo: -1.0,
            hi: 1.0,
            points: 9,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub model: ModelSelector,
    pub mode: RunMode,
    /// Horizons of a fixed-mode sweep.
    pub horizons: Vec<usize>,
    /// `ᾱ` values of an adaptive sweep.
    pub alpha_bars: Vec<f64>,
    /// Shared adaptation settings; `alpha_bar` is replaced per run.
    pub adaptation: AdaptationConfig,
    pub initial_horizon: Option<usize>,
    pub solver: SolverOptions,
    pub integrator_tolerance: f64,
    pub sampling_period: f64,
    pub initial_state: Option<Vec<f64>>,
    pub stop: StopRule,
    pub lq: LqSpec,
    pub finite: FiniteSpec,
    pub output_dir: PathBuf,
    /// Accepted for reproducibility records; the solver is deterministic.
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            model: ModelSelector::Crane,
            mode: RunMode::Adaptive,
            horizons: vec![6],
            alpha_bars: vec![0.5],
            adaptation: AdaptationConfig::default(),
            initial_horizon: None,
            solver: SolverOptions::default(),
            integrator_tolerance: crate::bench::CRANE_ODE_TOLERANCE,
            sampling_period: crate::bench::CRANE_SAMPLING_PERIOD,
            initial_state: None,
            stop: StopRule::default(),
            lq: LqSpec::default(),
            finite: FiniteSpec::default(),
            output_dir: PathBuf::from("out"),
            seed: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn from_file(path: &Path, overrides: &[String]) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::new(None, None, format!("{}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text, overrides)?;
        if let ModelSelector::File(p) = &mut cfg.model {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn parse(text: &str, overrides: &[String]) -> Result<Self, ConfigError> {
        let mut kv = KeyValues::parse(text)?;
        for o in overrides {
            kv.set_override(o)?;
        }
        let d = ExperimentConfig::default();

        let model = match kv.take("model") {
            None => d.model.clone(),
            Some((v, line)) => match v.as_str() {
                "crane" => ModelSelector::Crane,
                "lq" => ModelSelector::Lq,
                "finite" => ModelSelector::Finite,
                "file" => match kv.take("model.path") {
                    Some((p, _)) => ModelSelector::File(PathBuf::from(p)),
                    None => {
                        return Err(ConfigError::new(
                            line,
                            Some("model.path"),
                            "required for model = file",
                        ))
                    }
                },
                other => {
                    return Err(ConfigError::new(
                        line,
                        Some("model"),
                        format!("unknown model '{other}' (crane | lq | finite | file)"),
                    ))
                }
            },
        };
        let mode = match kv.take("mode") {
            None => d.mode,
            Some((v, line)) => match v.as_str() {
                "fixed" => RunMode::Fixed,
                "adaptive" => RunMode::Adaptive,
                other => {
                    return Err(ConfigError::new(
                        line,
                        Some("mode"),
                        format!("unknown mode '{other}' (fixed | adaptive)"),
                    ))
                }
            },
        };

        let a = d.adaptation;
        let adaptation = AdaptationConfig {
            alpha_bar: a.alpha_bar,
            n_min: kv.take_parsed("adapt.n_min")?.unwrap_or(a.n_min),
            n_max: kv.take_parsed("adapt.n_max")?.unwrap_or(a.n_max),
            n0: kv.take_parsed("adapt.n0")?.unwrap_or(a.n0),
            n_hat: kv.take_parsed("adapt.n_hat")?.unwrap_or(a.n_hat),
            estimator: kv
                .take_parsed::<EstimatorKind>("adapt.estimator")?
                .unwrap_or(a.estimator),
            shortening: kv
                .take_parsed::<ShorteningMode>("adapt.shortening")?
                .unwrap_or(a.shortening),
            equilibrium_threshold: kv
                .take_parsed("adapt.equilibrium_threshold")?
                .unwrap_or(a.equilibrium_threshold),
        };
        let s = d.solver;
        let solver = SolverOptions {
            tolerance: kv.take_parsed("solver.tol")?.unwrap_or(s.tolerance),
            max_iterations: kv
                .take_parsed("solver.max_iterations")?
                .unwrap_or(s.max_iterations),
            penalty_weight: kv
                .take_parsed("solver.penalty")?
                .unwrap_or(s.penalty_weight),
            fd_step: kv.take_parsed("solver.fd_step")?.unwrap_or(s.fd_step),
            require_convergence: s.require_convergence,
        };
        let stop = StopRule {
            cost_threshold: kv
                .take_parsed("stop.cost_threshold")?
                .unwrap_or(d.stop.cost_threshold),
            max_steps: kv
                .take_parsed("stop.max_steps")?
                .unwrap_or(d.stop.max_steps),
        };
        let finite = FiniteSpec {
            lo: kv.take_parsed("finite.lo")?.unwrap_or(d.finite.lo),
            hi: kv.take_parsed("finite.hi")?.unwrap_or(d.finite.hi),
            points: kv.take_parsed("finite.points")?.unwrap_or(d.finite.points),
        };

        let alpha_line = kv.entries.get("adapt.alpha_bar").and_then(|e| e.1);
        let cfg = ExperimentConfig {
            model,
            mode,
            horizons: kv.take_list("fixed.horizon")?.unwrap_or(d.horizons),
            alpha_bars: kv.take_list("adapt.alpha_bar")?.unwrap_or(d.alpha_bars),
            adaptation,
            initial_horizon: kv.take_parsed("adapt.initial_horizon")?,
            solver,
            integrator_tolerance: kv
                .take_parsed("model.ode_tol")?
                .unwrap_or(d.integrator_tolerance),
            sampling_period: kv
                .take_parsed("model.sampling_period")?
                .unwrap_or(d.sampling_period),
            initial_state: kv.take_list("model.x0")?,
            stop,
            lq: LqSpec::take(&mut kv, "lq.")?,
            finite,
            output_dir: kv
                .take("output.dir")
                .map(|(v, _)| PathBuf::from(v))
                .unwrap_or(d.output_dir),
            seed: kv.take_parsed("seed")?.unwrap_or(d.seed),
        };
        kv.finish()?;
        cfg.validate(alpha_line)?;
        Ok(cfg)
    }

    fn validate(&self, alpha_line: Option<usize>) -> Result<(), ConfigError> {
        let err = |key: &str, msg: String| Err(ConfigError::new(None, Some(key), msg));
        for (key, v) in [
            ("solver.tol", self.solver.tolerance),
            ("solver.fd_step", self.solver.fd_step),
            ("model.ode_tol", self.integrator_tolerance),
            ("model.sampling_period", self.sampling_period),
            ("stop.cost_threshold", self.stop.cost_threshold),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return err(key, format!("must be positive, got {v}"));
            }
        }
        if !(self.solver.penalty_weight >= 0.0) {
            return err("solver.penalty", "must be nonnegative".into());
        }
        if self.solver.max_iterations == 0 {
            return err("solver.max_iterations", "must be at least 1".into());
        }
        match self.mode {
            RunMode::Adaptive => {
                if self.alpha_bars.is_empty() {
                    return err("adapt.alpha_bar", "needs at least one value".into());
                }
                for &ab in &self.alpha_bars {
                    if let Err(e) = self.adaptation.with_alpha_bar(ab).validate() {
                        return Err(ConfigError::new(
                            alpha_line,
                            Some("adapt.alpha_bar"),
                            e.to_string(),
                        ));
                    }
                }
                if self.model == ModelSelector::Finite {
                    return err("mode", "the finite model supports mode = fixed only".into());
                }
            }
            RunMode::Fixed => {
                if self.horizons.is_empty() || self.horizons.iter().any(|&n| n < 2) {
                    return err("fixed.horizon", "needs horizons of at least 2".into());
                }
            }
        }
        if !(self.finite.lo < self.finite.hi) || self.finite.points < 2 {
            return err(
                "finite.points",
                "grid needs lo < hi and at least two points".into(),
            );
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_dotted_keys() {
        let cfg = ExperimentConfig::parse(
            "# crane sweep\nmodel = crane\nadapt.alpha_bar = 0.2, 0.6  # two runs\nadapt.n_max = 30\n\nsolver.tol = 1e-7\n",
            &[],
        )
        .unwrap();
        assert_eq!(cfg.model, ModelSelector::Crane);
        assert_eq!(cfg.alpha_bars, vec![0.2, 0.6]);
        assert_eq!(cfg.adaptation.n_max, 30);
        assert_eq!(cfg.solver.tolerance, 1e-7);
    }

    #[test]
    fn overrides_win() {
        let cfg =
            ExperimentConfig::parse("adapt.n_max = 30\n", &["adapt.n_max=12".into()]).unwrap();
        assert_eq!(cfg.adaptation.n_max, 12);
    }

    #[test]
    fn errors_carry_line_and_key() {
        let e = ExperimentConfig::parse("model = lq\nadapt.alpha_bar = 1.5\n", &[]).unwrap_err();
        assert_eq!(e.line, Some(2));
        assert_eq!(e.key.as_deref(), Some("adapt.alpha_bar"));
        let e = ExperimentConfig::parse("model = lq\nsolver.tol = abc\n", &[]).unwrap_err();
        assert_eq!((e.line, e.key.as_deref()), (Some(2), Some("solver.tol")));
        let e = ExperimentConfig::parse("model = lq\nbogus = 1\n", &[]).unwrap_err();
        assert_eq!((e.line, e.key.as_deref()), (Some(2), Some("bogus")));
        let e = ExperimentConfig::parse("just words\n", &[]).unwrap_err();
        assert_eq!(e.line, Some(1));
    }

    #[test]
    fn lq_matrices() {
        let cfg = ExperimentConfig::parse(
            "model = lq\nmode = fixed\nlq.a = 1 0.1; 0 1\nlq.b = 0; 0.1\nlq.q = 1 0; 0 1\nlq.r = 0.1\nlq.x0 = 1, 0\n",
            &[],
        )
        .unwrap();
        assert_eq!(cfg.lq.a, vec![vec![1.0, 0.1], vec![0.0, 1.0]]);
        assert_eq!(cfg.lq.b, vec![vec![0.0], vec![0.1]]);
        assert!(ExperimentConfig::parse("lq.a = 1 2; 3\n", &[]).is_err());
    }
}
