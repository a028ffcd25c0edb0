//! User-facing diffusion specifications and the `key = value` config format.

use std::fmt;

use serde::Serialize;

use super::ModelError;
use crate::expr::Expr;
use crate::numeric::{geomspace, linspace};

/// A killed diffusion `dX = σ(X)dW + b(X)dt` on `(left, right)` with killing
/// rate `κ`, boundary parameter `p0` at the left endpoint and, when the right
/// endpoint is finite, `pr` there.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionSpec {
    pub sigma: Expr,
    pub drift: Expr,
    pub kappa: Expr,
    pub left: f64,
    pub right: f64,
    pub p0: f64,
    pub pr: Option<f64>,
    /// Interior reference point in original coordinates.
    pub x0: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
struct SpecSummary<'a> {
    sigma: String,
    b: String,
    kappa: String,
    l: f64,
    #[serde(serialize_with = "crate::io::ser_extended")]
    r: &'a f64,
    p0: f64,
    pr: Option<f64>,
    x0: Option<f64>,
}

impl DiffusionSpec {
    /// Build and validate a spec from expression sources.
    pub fn new(sigma: &str, drift: &str, kappa: &str, right: f64, p0: f64, pr: Option<f64>) -> Result<Self, ModelError> {
        let spec = DiffusionSpec {
            sigma: Expr::parse(sigma)?,
            drift: Expr::parse(drift)?,
            kappa: Expr::parse(kappa)?,
            left: 0.0,
            right,
            p0,
            pr,
            x0: None,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_left(mut self, left: f64) -> Result<Self, ModelError> {
        self.left = left;
        self.validate()?;
        Ok(self)
    }

    pub fn with_pr(mut self, pr: f64) -> Result<Self, ModelError> {
        self.pr = Some(pr);
        self.validate()?;
        Ok(self)
    }

    pub fn with_x0(mut self, x0: f64) -> Result<Self, ModelError> {
        self.x0 = Some(x0);
        self.validate()?;
        Ok(self)
    }

    /// Interior points at which σ > 0 and κ ≥ 0 are enforced.
    pub fn validation_grid(&self) -> Vec<f64> {
        let (l, r) = (self.left, self.right);
        if r.is_finite() {
            let mut g = linspace(l, r, 259);
            g.remove(0);
            g.pop();
            g
        } else {
            geomspace(1e-6, 1e3, 257).into_iter().map(|d| l + d).collect()
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if !self.left.is_finite() {
            return Err(ModelError::Domain("left endpoint must be finite".into()));
        }
        if !(self.right > self.left) {
            return Err(ModelError::Domain(format!(
                "right endpoint {} must exceed left endpoint {}",
                self.right, self.left
            )));
        }
        if !(0.0..=1.0).contains(&self.p0) {
            return Err(ModelError::Boundary(format!("p0 = {} outside [0, 1]", self.p0)));
        }
        match (self.right.is_finite(), self.pr) {
            (true, None) => {
                return Err(ModelError::Boundary("finite right endpoint needs pr".into()));
            }
            (false, Some(_)) => {
                return Err(ModelError::Boundary("pr is only meaningful for a finite right endpoint".into()));
            }
            (true, Some(pr)) if !(0.0..=1.0).contains(&pr) => {
                return Err(ModelError::Boundary(format!("pr = {pr} outside [0, 1]")));
            }
            _ => {}
        }
        if let Some(x0) = self.x0 {
            if !(x0 >= self.left && x0 < self.right) {
                return Err(ModelError::Domain(format!("x0 = {x0} outside the domain")));
            }
        }
        for x in self.validation_grid() {
            let s = self.sigma.eval(x);
            if !(s > 0.0) {
                return Err(ModelError::Domain(format!("sigma({x}) = {s} is not positive")));
            }
            let k = self.kappa.eval(x);
            if !(k >= 0.0) {
                return Err(ModelError::Domain(format!("kappa({x}) = {k} is negative")));
            }
        }
        Ok(())
    }

    /// Canonical config text; parsing it yields an equal spec.
    pub fn to_config(&self) -> String {
        let mut out = format!(
            "sigma = \"{}\"\nb = \"{}\"\nkappa = \"{}\"\n",
            self.sigma, self.drift, self.kappa
        );
        if self.left != 0.0 {
            out.push_str(&format!("l = {:?}\n", self.left));
        }
        if self.right.is_finite() {
            out.push_str(&format!("r = {:?}\n", self.right));
        } else {
            out.push_str("r = inf\n");
        }
        out.push_str(&format!("p0 = {:?}\n", self.p0));
        if let Some(pr) = self.pr {
            out.push_str(&format!("pr = {pr:?}\n"));
        }
        if let Some(x0) = self.x0 {
            out.push_str(&format!("x0 = {x0:?}\n"));
        }
        out
    }

    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::to_value(SpecSummary {
            sigma: self.sigma.to_string(),
            b: self.drift.to_string(),
            kappa: self.kappa.to_string(),
            l: self.left,
            r: &self.right,
            p0: self.p0,
            pr: self.pr,
            x0: self.x0,
        })
        .expect("plain data serializes")
    }
}

impl fmt::Display for DiffusionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_config())
    }
}

const KEYS: [&str; 8] = ["sigma", "b", "kappa", "l", "r", "p0", "pr", "x0"];

/// Parse `key = value` lines. Expressions may be quoted; `#` starts a comment.
pub fn parse_model(text: &str) -> Result<DiffusionSpec, ModelError> {
    parse_model_with(text, &[])
}

/// As [`parse_model`], with `key=value` overrides applied after the file.
pub fn parse_model_with(text: &str, overrides: &[(String, String)]) -> Result<DiffusionSpec, ModelError> {
    let mut entries: Vec<(String, String, usize, usize)> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = strip_comment(raw);
        if line.trim().is_empty() {
            continue;
        }
        let Some(eq) = line.find('=') else {
            return Err(ModelError::Config {
                line: line_no,
                column: 1 + line.len() - line.trim_start().len(),
                message: "expected `key = value`".into(),
            });
        };
        let key = line[..eq].trim().to_string();
        if !KEYS.contains(&key.as_str()) {
            return Err(ModelError::Config {
                line: line_no,
                column: 1 + line.len() - line.trim_start().len(),
                message: format!("unknown key `{key}`"),
            });
        }
        let after = &line[eq + 1..];
        let lead = after.len() - after.trim_start().len();
        let mut value = after.trim().to_string();
        let mut column = eq + 2 + lead;
        if value.len() >= 2 && value.starts_with('"') && value.ends_with('"') {
            value = value[1..value.len() - 1].to_string();
            column += 1;
        }
        if entries.iter().any(|e| e.0 == key) {
            return Err(ModelError::Config {
                line: line_no,
                column: 1,
                message: format!("duplicate key `{key}`"),
            });
        }
        entries.push((key, value, line_no, column));
    }
    for (key, value) in overrides {
        if !KEYS.contains(&key.as_str()) {
            return Err(ModelError::Config { line: 0, column: 0, message: format!("unknown override key `{key}`") });
        }
        let value = value.trim().trim_matches('"').to_string();
        entries.retain(|e| &e.0 != key);
        entries.push((key.clone(), value, 0, 1));
    }

    let get = |k: &str| entries.iter().find(|e| e.0 == k);
    let expr = |k: &str, default: Option<&str>| -> Result<Expr, ModelError> {
        match get(k) {
            Some((_, v, line, col)) => Ok(Expr::parse_at(v, *line, *col)?),
            None => match default {
                Some(d) => Ok(Expr::parse(d)?),
                None => Err(ModelError::Config { line: 0, column: 0, message: format!("missing key `{k}`") }),
            },
        }
    };
    let number = |k: &str| -> Result<Option<f64>, ModelError> {
        match get(k) {
            None => Ok(None),
            Some((_, v, line, col)) => {
                let parsed = if v == "inf" || v == "infinity" { Some(f64::INFINITY) } else { v.parse::<f64>().ok() };
                match parsed {
                    Some(x) if !x.is_nan() => Ok(Some(x)),
                    _ => Err(ModelError::Config { line: *line, column: *col, message: format!("`{v}` is not a number") }),
                }
            }
        }
    };

    let spec = DiffusionSpec {
        sigma: expr("sigma", Some("1"))?,
        drift: expr("b", None)?,
        kappa: expr("kappa", Some("0"))?,
        left: number("l")?.unwrap_or(0.0),
        right: number("r")?.unwrap_or(f64::INFINITY),
        p0: number("p0")?.ok_or_else(|| ModelError::Config { line: 0, column: 0, message: "missing key `p0`".into() })?,
        pr: number("pr")?,
        x0: number("x0")?,
    };
    spec.validate()?;
    Ok(spec)
}

fn strip_comment(line: &str) -> &str {
    let mut in_quotes = false;
    for (i, c) in line.char_indices() {
        match c {
            '"' => in_quotes = !in_quotes,
            '#' if !in_quotes => return &line[..i],
            _ => {}
        }
    }
    line
}
