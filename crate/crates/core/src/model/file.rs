//! The `kladapt-model-v1` text format.
//!
//! ```text
//! schema = kladapt-model-v1
//! class = strict-feedback        # or: matched
//! n = 2
//! p = 2
//! g[1] = 1
//! g[2] = 1
//! phi[1][1] = (^ x1 2)
//! phi[1][2] = (^ x1 3)
//! ```
//!
//! Strict-feedback models list `f[i]`, `g[i]` and `phi[i][j]`; absent `f` and
//! `phi` entries are zero, every `g[i]` is required. Matched models list
//! `f[i]`, `g[i]`, `phi[j]`, `P`, `Q`, `k0` and `mu`. Optional sections:
//! `constants { name = value }` binds named symbols, `design { ... }` holds
//! synthesis constants and `controller { ... }` a serialized controller.

use std::collections::BTreeMap;

use nalgebra::DMatrix;

use super::{DesignConstants, MatchedSystem, ModelError, StrictFeedbackSystem, System};
use crate::expr::Expr;
use crate::matched::{AdaptiveController, IosCertificate, LyapunovCertificate};
use crate::textfmt::{format_reals, parse_real, parse_reals, parse_usize, Block, Field, Section};

pub const MODEL_SCHEMA: &str = "kladapt-model-v1";

/// A parsed model file.
#[derive(Debug, Clone)]
pub struct ModelFile {
    pub system: System,
    pub design: Option<DesignConstants>,
    pub controller: Option<AdaptiveController>,
}

fn invalid(line: usize, message: impl Into<String>) -> ModelError {
    ModelError::Invalid { line, message: message.into() }
}

fn expr_field(f: &Field) -> Result<Expr, ModelError> {
    Expr::parse(&f.value).map_err(|e| invalid(f.line, format!("field `{}`: {e}", f.key)))
}

fn expr_or_zero(b: &Block, key: &str) -> Result<Expr, ModelError> {
    b.get(key).map_or(Ok(Expr::zero()), expr_field)
}

fn expr_required(b: &Block, key: &str) -> Result<Expr, ModelError> {
    expr_field(b.require(key, 0)?)
}

fn constants_of(b: &Block) -> Result<BTreeMap<String, f64>, ModelError> {
    let mut out = BTreeMap::new();
    if let Some(s) = b.section("constants") {
        for f in &s.body.fields {
            out.insert(f.key.clone(), parse_real(&f.value, f.line)?);
        }
    }
    Ok(out)
}

fn check_indices(b: &Block, n: usize, p: usize, matched: bool) -> Result<(), ModelError> {
    for f in &b.fields {
        let idx: Vec<usize> = f
            .key
            .split('[')
            .skip(1)
            .map(|s| s.trim_end_matches(']').parse::<usize>().unwrap_or(0))
            .collect();
        let base = f.key.split('[').next().unwrap_or("");
        let ok = match (base, idx.as_slice()) {
            ("f" | "g", [i]) => (1..=n).contains(i),
            ("phi", [j]) if matched => (1..=p).contains(j),
            ("phi", [i, j]) if !matched => (1..=n).contains(i) && (1..=p).contains(j),
            (_, []) => true,
            _ => false,
        };
        if !ok {
            return Err(invalid(f.line, format!("index out of range or malformed in `{}`", f.key)));
        }
    }
    Ok(())
}

pub(crate) fn parse_design(s: &Section, p: usize) -> Result<DesignConstants, ModelError> {
    let b = &s.body;
    b.check_known(&["r", "alpha", "omega", "epsilon", "gamma", "delta", "lambda", "gamma_matrix"], &[])?;
    let get = |k: &str, default: f64| -> Result<f64, ModelError> {
        b.get(k).map_or(Ok(default), |f| Ok(parse_real(&f.value, f.line)?))
    };
    let gamma = match b.get("gamma") {
        Some(f) => parse_reals(&f.value, f.line)?,
        None => vec![1.0; p],
    };
    if gamma.len() != p {
        return Err(invalid(s.line, format!("gamma needs {p} entries, found {}", gamma.len())));
    }
    let mut c = DesignConstants::new(get("r", 0.0)?, get("alpha", 1.0)?, get("omega", 1.0)?, get("epsilon", 1.0)?, gamma)?
        .with_matched(get("delta", 1.0)?, get("lambda", 0.5)?)?;
    if let Some(f) = b.get("gamma_matrix") {
        let v = parse_reals(&f.value, f.line)?;
        if v.len() != p * p {
            return Err(invalid(f.line, format!("gamma_matrix needs {} entries", p * p)));
        }
        c = c.with_gamma_matrix(DMatrix::from_row_slice(p, p, &v))?;
    }
    Ok(c)
}

fn parse_controller(s: &Section, n: usize, p: usize) -> Result<AdaptiveController, ModelError> {
    let b = &s.body;
    b.check_known(
        &["name", "u", "w", "V", "V_bound", "T", "omega", "epsilon", "r", "diag"],
        &["constants"],
    )?;
    let u = expr_field(b.require("u", s.line)?)?;
    let w = (1..=p)
        .map(|j| expr_field(b.require(&format!("w[{j}]"), s.line)?))
        .collect::<Result<Vec<_>, _>>()?;
    let mut diagnostics = BTreeMap::new();
    for f in &b.fields {
        if let Some(name) = f.key.strip_prefix("diag[").and_then(|r| r.strip_suffix(']')) {
            diagnostics.insert(name.to_string(), expr_field(f)?);
        }
    }
    let lyapunov = match (b.get("V"), b.get("V_bound")) {
        (Some(v), Some(bound)) => Some(LyapunovCertificate { function: expr_field(v)?, bound: expr_field(bound)? }),
        (None, None) => None,
        _ => return Err(invalid(s.line, "`V` and `V_bound` must be given together")),
    };
    let ios = if b.get("T[1]").is_some() {
        let output = (1..=n)
            .map(|i| expr_field(b.require(&format!("T[{i}]"), s.line)?))
            .collect::<Result<Vec<_>, _>>()?;
        let real = |k: &str| -> Result<f64, ModelError> {
            let f = b.require(k, s.line)?;
            Ok(parse_real(&f.value, f.line)?)
        };
        Some(IosCertificate { output, omega: real("omega")?, epsilon: real("epsilon")?, r: real("r")? })
    } else {
        None
    };
    if let Some(l) = &lyapunov {
        diagnostics.entry("V".to_string()).or_insert_with(|| l.function.clone());
    }
    Ok(AdaptiveController {
        name: b.value("name").unwrap_or("file").to_string(),
        n,
        p,
        u,
        w,
        diagnostics,
        lyapunov,
        ios,
        constants: constants_of(b)?,
    })
}

impl ModelFile {
    pub fn parse(text: &str) -> Result<ModelFile, ModelError> {
        let b = Block::parse(text)?;
        let schema = b.require("schema", 1)?;
        if schema.value != MODEL_SCHEMA {
            return Err(invalid(schema.line, format!("unsupported schema `{}`", schema.value)));
        }
        let class = b.require("class", 1)?;
        let n_field = b.require("n", 1)?;
        let p_field = b.require("p", 1)?;
        let n = parse_usize(&n_field.value, n_field.line)?;
        let p = parse_usize(&p_field.value, p_field.line)?;
        if n == 0 {
            return Err(invalid(n_field.line, "n must be at least 1"));
        }
        let constants = constants_of(&b)?;
        let sections = ["constants", "design", "controller"];
        let system = match class.value.as_str() {
            "strict-feedback" => {
                b.check_known(&["schema", "class", "n", "p", "f", "g", "phi"], &sections)?;
                check_indices(&b, n, p, false)?;
                let f = (1..=n).map(|i| expr_or_zero(&b, &format!("f[{i}]"))).collect::<Result<Vec<_>, _>>()?;
                let g = (1..=n)
                    .map(|i| expr_field(b.require(&format!("g[{i}]"), class.line)?))
                    .collect::<Result<Vec<_>, _>>()?;
                let phi = (1..=n)
                    .map(|i| (1..=p).map(|j| expr_or_zero(&b, &format!("phi[{i}][{j}]"))).collect())
                    .collect::<Result<Vec<Vec<_>>, _>>()?;
                System::StrictFeedback(StrictFeedbackSystem::new(f, g, phi)?.with_constants(constants))
            }
            "matched" => {
                b.check_known(
                    &["schema", "class", "n", "p", "f", "g", "phi", "P", "Q", "k0", "mu"],
                    &sections,
                )?;
                check_indices(&b, n, p, true)?;
                let f = (1..=n).map(|i| expr_or_zero(&b, &format!("f[{i}]"))).collect::<Result<Vec<_>, _>>()?;
                let g = (1..=n)
                    .map(|i| expr_field(b.require(&format!("g[{i}]"), class.line)?))
                    .collect::<Result<Vec<_>, _>>()?;
                let phi = (1..=p).map(|j| expr_or_zero(&b, &format!("phi[{j}]"))).collect::<Result<Vec<_>, _>>()?;
                let sys = MatchedSystem::new(
                    f,
                    g,
                    phi,
                    expr_required(&b, "P")?,
                    expr_required(&b, "Q")?,
                    expr_or_zero(&b, "k0")?,
                    expr_required(&b, "mu")?,
                )?;
                System::Matched(sys.with_constants(constants))
            }
            other => return Err(invalid(class.line, format!("unknown class `{other}`"))),
        };
        let design = b.section("design").map(|s| parse_design(s, p)).transpose()?;
        let controller = b.section("controller").map(|s| parse_controller(s, n, p)).transpose()?;
        Ok(ModelFile { system, design, controller })
    }

    pub fn load(path: &std::path::Path) -> Result<ModelFile, ModelError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| invalid(0, format!("cannot read {}: {e}", path.display())))?;
        ModelFile::parse(&text)
    }

    pub fn render(&self) -> String {
        let mut b = Block::default();
        b.push("schema", MODEL_SCHEMA);
        let n = self.system.n();
        let p = self.system.p();
        match &self.system {
            System::StrictFeedback(s) => {
                b.push("class", "strict-feedback");
                b.push("n", n.to_string());
                b.push("p", p.to_string());
                for i in 0..n {
                    b.push(format!("f[{}]", i + 1), s.f[i].to_string());
                    b.push(format!("g[{}]", i + 1), s.g[i].to_string());
                    for j in 0..p {
                        b.push(format!("phi[{}][{}]", i + 1, j + 1), s.phi[i][j].to_string());
                    }
                }
            }
            System::Matched(s) => {
                b.push("class", "matched");
                b.push("n", n.to_string());
                b.push("p", p.to_string());
                for i in 0..n {
                    b.push(format!("f[{}]", i + 1), s.f[i].to_string());
                    b.push(format!("g[{}]", i + 1), s.g[i].to_string());
                }
                for j in 0..p {
                    b.push(format!("phi[{}]", j + 1), s.phi[j].to_string());
                }
                b.push("P", s.p_clf.to_string());
                b.push("Q", s.q_rate.to_string());
                b.push("k0", s.k0.to_string());
                b.push("mu", s.mu.to_string());
            }
        }
        let constants_section = |c: &BTreeMap<String, f64>| {
            let mut body = Block::default();
            for (k, v) in c {
                body.push(k.clone(), format!("{v:?}"));
            }
            Section { kind: "constants".into(), label: None, line: 0, body }
        };
        if !self.system.constants().is_empty() {
            b.sections.push(constants_section(self.system.constants()));
        }
        if let Some(d) = &self.design {
            let mut body = Block::default();
            body.push("r", format!("{:?}", d.r));
            body.push("alpha", format!("{:?}", d.alpha));
            body.push("omega", format!("{:?}", d.omega));
            body.push("epsilon", format!("{:?}", d.epsilon));
            body.push("gamma", format_reals(&d.gamma));
            body.push("delta", format!("{:?}", d.delta));
            body.push("lambda", format!("{:?}", d.lambda));
            if let Some(m) = &d.gamma_matrix {
                let row_major: Vec<f64> = m.transpose().iter().copied().collect();
                body.push("gamma_matrix", format_reals(&row_major));
            }
            b.sections.push(Section { kind: "design".into(), label: None, line: 0, body });
        }
        if let Some(c) = &self.controller {
            b.sections.push(controller_section(c));
            if !c.constants.is_empty() {
                let last = b.sections.last_mut().unwrap();
                last.body.sections.push(constants_section(&c.constants));
            }
        }
        b.render()
    }
}

fn controller_section(c: &AdaptiveController) -> Section {
    let mut body = Block::default();
    body.push("name", c.name.clone());
    body.push("u", c.u.to_string());
    for (j, w) in c.w.iter().enumerate() {
        body.push(format!("w[{}]", j + 1), w.to_string());
    }
    if let Some(l) = &c.lyapunov {
        body.push("V", l.function.to_string());
        body.push("V_bound", l.bound.to_string());
    }
    if let Some(ios) = &c.ios {
        for (i, t) in ios.output.iter().enumerate() {
            body.push(format!("T[{}]", i + 1), t.to_string());
        }
        body.push("omega", format!("{:?}", ios.omega));
        body.push("epsilon", format!("{:?}", ios.epsilon));
        body.push("r", format!("{:?}", ios.r));
    }
    for (name, e) in &c.diagnostics {
        if name == "V" && c.lyapunov.is_some() {
            continue;
        }
        body.push(format!("diag[{name}]"), e.to_string());
    }
    Section { kind: "controller".into(), label: None, line: 0, body }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MG: &str = "\
schema = kladapt-model-v1
class = strict-feedback
n = 2
p = 2
g[1] = 1
g[2] = 1
phi[1][1] = (^ x1 2)
phi[1][2] = (^ x1 3)
design {
  r = 2
  gamma = 1, 1
}
";

    #[test]
    fn parses_strict_feedback_model() {
        let m = ModelFile::parse(MG).unwrap();
        let System::StrictFeedback(s) = &m.system else { panic!() };
        assert_eq!((s.n(), s.p()), (2, 2));
        assert!(s.f[0].is_zero() && s.phi[1][0].is_zero());
        assert_eq!(s.phi[0][1].to_string(), "(^ x1 3)");
        assert_eq!(m.design.unwrap().r, 2.0);
    }

    #[test]
    fn render_then_parse_is_stable() {
        let m = ModelFile::parse(MG).unwrap();
        let text = m.render();
        let again = ModelFile::parse(&text).unwrap();
        assert_eq!(again.render(), text);
    }

    #[test]
    fn rejects_bad_files() {
        assert!(ModelFile::parse("schema = other\n").is_err());
        let missing_g = MG.replace("g[2] = 1\n", "");
        assert!(ModelFile::parse(&missing_g).is_err());
        let bad_index = MG.replace("phi[1][2]", "phi[1][3]");
        assert!(ModelFile::parse(&bad_index).is_err());
        let bad_expr = MG.replace("(^ x1 3)", "(^ x1 y z)");
        let err = ModelFile::parse(&bad_expr).unwrap_err();
        assert!(err.to_string().contains("phi[1][2]"), "{err}");
    }

    #[test]
    fn matched_model_with_controller() {
        let text = "\
schema = kladapt-model-v1
class = matched
n = 1
p = 1
f[1] = (* -1 x1)
g[1] = 1
phi[1] = x1
P = (* 0.5 (^ x1 2))
Q = (^ x1 2)
mu = 1
controller {
  u = (* -1 x1 th1)
  w[1] = (^ x1 2)
  V = (* 0.5 (^ x1 2))
  V_bound = (* -1 (^ x1 2))
}
";
        let m = ModelFile::parse(text).unwrap();
        let c = m.controller.as_ref().unwrap();
        assert_eq!(c.u.to_string(), "(* -1 x1 th1)");
        assert!(c.lyapunov.is_some() && c.diagnostics.contains_key("V"));
        let again = ModelFile::parse(&m.render()).unwrap();
        assert_eq!(again.render(), m.render());
    }
}
