//! The `kladapt-scenario-v1` format.
//!
//! ```text
//! schema = kladapt-scenario-v1
//! system = moore-greitzer          # or: model = path/to/file.model
//! controller = example-b
//! theta = -1.5, -0.5
//! t_end = 20
//! checks = lyapunov, ios, exp-envelope
//! design {
//!   mu = 1
//!   r = 2
//! }
//! run nominal {
//!   x0 = 0.4, -1
//!   csv = nominal.csv
//! }
//! plot norms {
//!   kind = state-norm
//!   svg = norms.svg
//! }
//! ```
//!
//! Top-level keys: `schema`, `name`, `system` or `model`, `controller`,
//! `theta`, `t_end`, `rtol`, `atol`, `report_points`, `checks`,
//! `expect_fail`, `tol`. Sections: `design`, `run <name>`, `plot <name>`,
//! `sweep`. A run may override `controller` and `t_end`. Model paths are
//! relative to the scenario file; output paths are relative to the output
//! directory.

use std::path::{Path, PathBuf};

use crate::model::{parse_design, DesignConstants, ModelFile};
use crate::moore_greitzer::{ExampleConfig, FigureKind};
use crate::sim::InitialSet;
use crate::textfmt::{parse_real, parse_reals, parse_usize, Block, Field, Section, TextError};
use crate::verify::DEFAULT_TOL;

pub const SCENARIO_SCHEMA: &str = "kladapt-scenario-v1";

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum ControllerKind {
    Standard,
    Damped,
    Backstep,
    ExampleA,
    ExampleB,
    OpenLoop,
    /// The `controller` section of the model file.
    File,
}

impl ControllerKind {
    pub fn parse(s: &str) -> Option<ControllerKind> {
        Some(match s {
            "standard" => ControllerKind::Standard,
            "damped" => ControllerKind::Damped,
            "backstep" => ControllerKind::Backstep,
            "example-a" => ControllerKind::ExampleA,
            "example-b" => ControllerKind::ExampleB,
            "open-loop" => ControllerKind::OpenLoop,
            "file" => ControllerKind::File,
            _ => return None,
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            ControllerKind::Standard => "standard",
            ControllerKind::Damped => "damped",
            ControllerKind::Backstep => "backstep",
            ControllerKind::ExampleA => "example-a",
            ControllerKind::ExampleB => "example-b",
            ControllerKind::OpenLoop => "open-loop",
            ControllerKind::File => "file",
        }
    }
}

#[derive(Debug, Clone)]
pub enum SystemRef {
    MooreGreitzer(ExampleConfig),
    Model { path: PathBuf, file: Box<ModelFile>, design: DesignConstants },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckKind {
    Lyapunov,
    Ios,
    ExpEnvelope,
    Comparison,
}

impl CheckKind {
    fn parse(s: &str) -> Option<CheckKind> {
        Some(match s {
            "lyapunov" => CheckKind::Lyapunov,
            "ios" => CheckKind::Ios,
            "exp-envelope" => CheckKind::ExpEnvelope,
            "comparison" => CheckKind::Comparison,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            CheckKind::Lyapunov => "lyapunov",
            CheckKind::Ios => "ios",
            CheckKind::ExpEnvelope => "exp-envelope",
            CheckKind::Comparison => "comparison",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheckSpec {
    pub kind: CheckKind,
    pub expect_fail: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub name: String,
    pub controller: ControllerKind,
    pub x0: Vec<f64>,
    pub theta_hat0: Vec<f64>,
    pub t_end: f64,
    pub csv: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlotSpec {
    pub name: String,
    pub kind: FigureKind,
    pub svg: String,
    pub title: String,
    /// Runs to draw, all runs when empty.
    pub runs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub controller: ControllerKind,
    pub set: InitialSet,
    pub radius: f64,
    pub theta_hat0: Vec<f64>,
    pub t_end: f64,
    pub eps: Vec<f64>,
    pub csv: Option<String>,
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub system: SystemRef,
    pub theta: Vec<f64>,
    pub t_end: f64,
    pub rtol: f64,
    pub atol: f64,
    pub report_points: usize,
    pub checks: Vec<CheckSpec>,
    pub tol: f64,
    pub runs: Vec<RunSpec>,
    pub plots: Vec<PlotSpec>,
    pub sweep: Option<SweepSpec>,
}

fn err(line: usize, message: impl Into<String>) -> TextError {
    TextError::new(line, message)
}

fn real_or(b: &Block, key: &str, default: f64) -> Result<f64, TextError> {
    b.get(key).map_or(Ok(default), |f| parse_real(&f.value, f.line))
}

fn reals_of_len(f: &Field, len: usize) -> Result<Vec<f64>, TextError> {
    let v = parse_reals(&f.value, f.line)?;
    if v.len() != len {
        return Err(err(f.line, format!("field `{}` needs {len} values, found {}", f.key, v.len())));
    }
    Ok(v)
}

fn controller_field(f: &Field) -> Result<ControllerKind, TextError> {
    ControllerKind::parse(&f.value).ok_or_else(|| {
        err(
            f.line,
            format!(
                "field `controller`: unknown controller `{}` (expected standard, damped, backstep, example-a, example-b, open-loop or file)",
                f.value
            ),
        )
    })
}

fn positive(b: &Block, key: &str, default: f64) -> Result<f64, TextError> {
    let v = real_or(b, key, default)?;
    if !(v > 0.0 && v.is_finite()) {
        let line = b.get(key).map_or(0, |f| f.line);
        return Err(err(line, format!("field `{key}` must be positive, got {v}")));
    }
    Ok(v)
}

fn example_config(design: Option<&Section>, theta: &[f64]) -> Result<ExampleConfig, TextError> {
    let mut cfg = ExampleConfig::default();
    if let Some(s) = design {
        let b = &s.body;
        b.check_known(&["q", "gamma", "mu", "epsilon", "r"], &[])?;
        cfg.q = real_or(b, "q", cfg.q)?;
        if let Some(f) = b.get("gamma") {
            let g = reals_of_len(f, 2)?;
            cfg.gamma1 = g[0];
            cfg.gamma2 = g[1];
        }
        cfg.mu = real_or(b, "mu", cfg.mu)?;
        cfg.epsilon = real_or(b, "epsilon", cfg.epsilon)?;
        cfg.r = real_or(b, "r", cfg.r)?;
    }
    cfg.theta = [theta[0], theta[1]];
    cfg.validate().map_err(|e| err(design.map_or(0, |s| s.line), format!("section `design`: {e}")))?;
    Ok(cfg)
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Scenario, TextError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| err(0, format!("cannot read scenario {}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("scenario");
        Scenario::parse(&text, &base, stem)
    }

    /// Parses a scenario; `base` resolves model paths and `default_name`
    /// names outputs when the file has no `name` field.
    pub fn parse(text: &str, base: &Path, default_name: &str) -> Result<Scenario, TextError> {
        let b = Block::parse(text)?;
        b.check_known(
            &[
                "schema", "name", "system", "model", "controller", "theta", "t_end", "rtol", "atol", "report_points",
                "checks", "expect_fail", "tol",
            ],
            &["design", "run", "plot", "sweep"],
        )?;
        let schema = b.require("schema", 1)?;
        if schema.value != SCENARIO_SCHEMA {
            return Err(err(schema.line, format!("field `schema`: unsupported schema `{}`", schema.value)));
        }
        let name = b.value("name").unwrap_or(default_name).to_string();

        let design_section = b.section("design");
        let (n, p, system_line) = match (b.get("system"), b.get("model")) {
            (Some(f), None) if f.value == "moore-greitzer" => (2, 2, f.line),
            (Some(f), None) => return Err(err(f.line, format!("field `system`: unknown builtin `{}`", f.value))),
            (None, Some(f)) => (0, 0, f.line),
            (Some(f), Some(_)) => return Err(err(f.line, "give either `system` or `model`, not both")),
            (None, None) => return Err(err(1, "missing field `system` or `model`")),
        };
        let model = match b.get("model") {
            Some(f) => {
                let path = base.join(&f.value);
                if !path.is_file() {
                    return Err(err(f.line, format!("field `model`: file {} does not exist", path.display())));
                }
                let file = ModelFile::load(&path).map_err(|e| err(f.line, format!("field `model`: {e}")))?;
                Some((path, file))
            }
            None => None,
        };
        let (n, p) = match &model {
            Some((_, m)) => (m.system.n(), m.system.p()),
            None => (n, p),
        };

        let theta_field = b.require("theta", 1)?;
        let theta = reals_of_len(theta_field, p)?;
        let system = match model {
            None => SystemRef::MooreGreitzer(example_config(design_section, &theta)?),
            Some((path, file)) => {
                let design = match (design_section, &file.design) {
                    (Some(s), _) => parse_design(s, p).map_err(|e| err(s.line, format!("section `design`: {e}")))?,
                    (None, Some(d)) => d.clone(),
                    (None, None) => DesignConstants::unit(p, 0.0),
                };
                SystemRef::Model { path, file: Box::new(file), design }
            }
        };

        let default_controller = b.get("controller").map(controller_field).transpose()?;
        let t_end = positive(&b, "t_end", 20.0)?;
        let rtol = positive(&b, "rtol", 1e-8)?;
        let atol = positive(&b, "atol", 1e-10)?;
        let report_points = match b.get("report_points") {
            Some(f) => parse_usize(&f.value, f.line)?,
            None => 2000,
        };
        let tol = real_or(&b, "tol", DEFAULT_TOL)?;
        if !(tol >= 0.0) {
            return Err(err(b.get("tol").map_or(0, |f| f.line), "field `tol` must be nonnegative"));
        }

        let list = |key: &str| -> Vec<(String, usize)> {
            b.get(key)
                .map(|f| {
                    f.value.split(',').map(str::trim).filter(|s| !s.is_empty()).map(|s| (s.to_string(), f.line)).collect()
                })
                .unwrap_or_default()
        };
        let expect_fail = list("expect_fail");
        let mut checks = Vec::new();
        for (c, line) in list("checks") {
            let kind = CheckKind::parse(&c).ok_or_else(|| {
                err(line, format!("field `checks`: unknown check `{c}` (expected lyapunov, ios, exp-envelope or comparison)"))
            })?;
            checks.push(CheckSpec { kind, expect_fail: expect_fail.iter().any(|(e, _)| *e == c) });
        }
        if let Some((c, line)) = expect_fail.iter().find(|(e, _)| !checks.iter().any(|k| k.kind.name() == e)) {
            return Err(err(*line, format!("field `expect_fail`: `{c}` is not among `checks`")));
        }

        let controller_for = |s: &Section| -> Result<ControllerKind, TextError> {
            match s.body.get("controller") {
                Some(f) => controller_field(f),
                None => default_controller
                    .clone()
                    .ok_or_else(|| err(s.line, "missing field `controller` (set it in the section or at top level)")),
            }
        };

        let mut runs = Vec::new();
        for s in b.sections("run") {
            let rb = &s.body;
            rb.check_known(&["controller", "x0", "theta_hat0", "t_end", "csv"], &[])?;
            let run_name = s.label.clone().unwrap_or_else(|| format!("run{}", runs.len() + 1));
            if runs.iter().any(|r: &RunSpec| r.name == run_name) {
                return Err(err(s.line, format!("duplicate run `{run_name}`")));
            }
            let x0 = reals_of_len(rb.require("x0", s.line)?, n)?;
            let theta_hat0 = match rb.get("theta_hat0") {
                Some(f) => reals_of_len(f, p)?,
                None => vec![0.0; p],
            };
            runs.push(RunSpec {
                name: run_name,
                controller: controller_for(s)?,
                x0,
                theta_hat0,
                t_end: positive(rb, "t_end", t_end)?,
                csv: rb.value("csv").map(str::to_string),
            });
        }

        let mut plots = Vec::new();
        for s in b.sections("plot") {
            let pb = &s.body;
            pb.check_known(&["kind", "svg", "title", "runs"], &[])?;
            let kind_f = pb.require("kind", s.line)?;
            let kind = match kind_f.value.as_str() {
                "phase-plane" => FigureKind::PhasePlane,
                "state-norm" => FigureKind::StateNorm,
                "estimate-error" => FigureKind::EstimateError,
                other => {
                    return Err(err(
                        kind_f.line,
                        format!("field `kind`: unknown plot `{other}` (expected phase-plane, state-norm or estimate-error)"),
                    ))
                }
            };
            let plot_name = s.label.clone().unwrap_or_else(|| format!("plot{}", plots.len() + 1));
            let run_list: Vec<String> = pb
                .value("runs")
                .map(|v| v.split(',').map(|r| r.trim().to_string()).filter(|r| !r.is_empty()).collect())
                .unwrap_or_default();
            if let Some(missing) = run_list.iter().find(|r| !runs.iter().any(|x| &x.name == *r)) {
                return Err(err(s.line, format!("field `runs`: no run named `{missing}`")));
            }
            plots.push(PlotSpec {
                svg: pb.require("svg", s.line)?.value.clone(),
                title: pb.value("title").unwrap_or(&plot_name).to_string(),
                name: plot_name,
                kind,
                runs: run_list,
            });
        }

        let sweep = match b.section("sweep") {
            None => None,
            Some(s) => {
                let sb = &s.body;
                sb.check_known(&["controller", "set", "radius", "count", "seed", "theta_hat0", "t_end", "eps", "csv"], &[])?;
                let radius = positive(sb, "radius", 1.0)?;
                let count = match sb.get("count") {
                    Some(f) => parse_usize(&f.value, f.line)?,
                    None => 32,
                };
                let seed = match sb.get("seed") {
                    Some(f) => f.value.trim().parse::<u64>().map_err(|_| err(f.line, "field `seed`: expected an integer"))?,
                    None => 0,
                };
                let set = match sb.value("set").unwrap_or("sphere") {
                    "circle" => InitialSet::Circle { radius, count },
                    "sphere" => InitialSet::Sphere { radius, count, seed },
                    "ball" => InitialSet::Ball { radius, count, seed },
                    other => {
                        return Err(err(s.line, format!("field `set`: unknown set `{other}` (expected circle, sphere or ball)")))
                    }
                };
                let eps = match sb.get("eps") {
                    Some(f) => parse_reals(&f.value, f.line)?,
                    None => vec![0.01],
                };
                Some(SweepSpec {
                    controller: controller_for(s)?,
                    set,
                    radius,
                    theta_hat0: match sb.get("theta_hat0") {
                        Some(f) => reals_of_len(f, p)?,
                        None => vec![0.0; p],
                    },
                    t_end: positive(sb, "t_end", t_end)?,
                    eps,
                    csv: sb.value("csv").map(str::to_string),
                })
            }
        };

        if runs.is_empty() && sweep.is_none() {
            return Err(err(system_line, "scenario has no `run` or `sweep` section"));
        }
        Ok(Scenario { name, system, theta, t_end, rtol, atol, report_points, checks, tol, runs, plots, sweep })
    }

    pub fn n(&self) -> usize {
        match &self.system {
            SystemRef::MooreGreitzer(_) => 2,
            SystemRef::Model { file, .. } => file.system.n(),
        }
    }

    /// Replaces the seed of a random sweep set.
    pub fn reseed(&mut self, seed: u64) {
        if let Some(s) = &mut self.sweep {
            match &mut s.set {
                InitialSet::Sphere { seed: old, .. } | InitialSet::Ball { seed: old, .. } => *old = seed,
                _ => {}
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASIC: &str = "\
schema = kladapt-scenario-v1
system = moore-greitzer
controller = example-b
theta = -1.5, -0.5
checks = lyapunov, ios
expect_fail = ios
design {
  r = 2
}
run a {
  x0 = 0.4, -1
  csv = a.csv
}
run b {
  controller = example-a
  x0 = 0.6, 0.5
  t_end = 5
}
plot both {
  kind = state-norm
  svg = both.svg
  runs = a, b
}
";

    #[test]
    fn parses_basic_scenario() {
        let s = Scenario::parse(BASIC, Path::new("."), "basic").unwrap();
        assert_eq!(s.name, "basic");
        assert_eq!(s.runs.len(), 2);
        assert_eq!(s.runs[0].controller, ControllerKind::ExampleB);
        assert_eq!(s.runs[1].controller, ControllerKind::ExampleA);
        assert_eq!(s.runs[1].t_end, 5.0);
        assert_eq!(s.runs[0].theta_hat0, vec![0.0, 0.0]);
        assert_eq!(s.checks[1], CheckSpec { kind: CheckKind::Ios, expect_fail: true });
        assert_eq!(s.plots[0].runs, vec!["a", "b"]);
        assert!(matches!(s.system, SystemRef::MooreGreitzer(ref c) if c.theta == [-1.5, -0.5]));
    }

    #[test]
    fn errors_name_the_field() {
        let cases = [
            (BASIC.replace("theta = -1.5, -0.5", "theta = 1"), "theta"),
            (BASIC.replace("system = moore-greitzer", "model = nowhere.model"), "model"),
            (BASIC.replace("controller = example-b", "controller = magic"), "controller"),
            (BASIC.replace("checks = lyapunov, ios", "checks = lyapunov, speed"), "checks"),
            (BASIC.replace("runs = a, b", "runs = a, c"), "runs"),
            (BASIC.replace("kind = state-norm", "kind = bars"), "kind"),
        ];
        for (text, field) in cases {
            let e = Scenario::parse(&text, Path::new("."), "x").unwrap_err();
            assert!(e.to_string().contains(&format!("`{field}`")), "{field}: {e}");
        }
    }

    #[test]
    fn design_is_validated() {
        let text = BASIC.replace("r = 2", "r = 2\n  mu = -1");
        assert!(Scenario::parse(&text, Path::new("."), "x").is_err());
    }
}
