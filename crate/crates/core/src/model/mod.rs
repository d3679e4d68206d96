//! Model definitions: coefficient fields, presets and validation.

pub mod expr;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
pub use expr::{parse_coefficient, Arity, CoefficientExpr, ParseError};

/// Points per axis used when the caller does not ask for a specific density.
pub const DEFAULT_VALIDATION_POINTS: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PresetName {
    Voter,
    Exclusion,
    Bcpp,
}

impl PresetName {
    pub const ALL: [PresetName; 3] = [PresetName::Voter, PresetName::Exclusion, PresetName::Bcpp];

    pub fn as_str(self) -> &'static str {
        match self {
            PresetName::Voter => "voter",
            PresetName::Exclusion => "exclusion",
            PresetName::Bcpp => "bcpp",
        }
    }

    /// Pinned `(b, c, a1, a2, a3, a4)`; `b` is `None` when the caller supplies it.
    fn pinned(self) -> (Option<f64>, f64, [f64; 4]) {
        match self {
            PresetName::Voter => (Some(0.0), 1.0, [0.0, 1.0, 0.0, 1.0]),
            PresetName::Exclusion => (Some(0.0), 1.0, [0.0, 1.0, 1.0, 0.0]),
            PresetName::Bcpp => (None, 0.0, [1.0, 1.0, 0.0, 1.0]),
        }
    }
}

impl fmt::Display for PresetName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PresetName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "voter" => Ok(PresetName::Voter),
            "exclusion" => Ok(PresetName::Exclusion),
            "bcpp" => Ok(PresetName::Bcpp),
            _ => Err(Error::UnknownPreset(s.to_string())),
        }
    }
}

/// Complete model definition: seven rate/update coefficients plus the
/// initial occupation profile.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    /// Refresh rate b(u).
    pub b: CoefficientExpr,
    /// Refresh multiplier c(u).
    pub c: CoefficientExpr,
    /// Interaction intensity lambda(u, v).
    pub lambda: CoefficientExpr,
    pub a1: CoefficientExpr,
    pub a2: CoefficientExpr,
    pub a3: CoefficientExpr,
    pub a4: CoefficientExpr,
    /// Initial Bernoulli success probability phi(u).
    pub phi: CoefficientExpr,
    pub preset: Option<PresetName>,
}

fn field(name: &str, src: &str, arity: Arity) -> Result<CoefficientExpr> {
    CoefficientExpr::parse(src, arity).map_err(|source| Error::Parse {
        field: name.to_string(),
        source,
    })
}

impl ModelSpec {
    /// Build a model from source strings for every field.
    #[allow(clippy::too_many_arguments)]
    pub fn from_sources(
        b: &str,
        c: &str,
        lambda: &str,
        a1: &str,
        a2: &str,
        a3: &str,
        a4: &str,
        phi: &str,
    ) -> Result<Self> {
        Ok(ModelSpec {
            b: field("b", b, Arity::Unary)?,
            c: field("c", c, Arity::Unary)?,
            lambda: field("lambda", lambda, Arity::Binary)?,
            a1: field("a1", a1, Arity::Binary)?,
            a2: field("a2", a2, Arity::Binary)?,
            a3: field("a3", a3, Arity::Binary)?,
            a4: field("a4", a4, Arity::Binary)?,
            phi: field("phi", phi, Arity::Unary)?,
            preset: None,
        })
    }

    /// Preset from source strings; `b` is ignored unless the preset is bcpp.
    pub fn preset(name: PresetName, lambda: &str, b: &str, phi: &str) -> Result<Self> {
        build_preset(
            name,
            field("lambda", lambda, Arity::Binary)?,
            field("b", b, Arity::Unary)?,
            field("phi", phi, Arity::Unary)?,
        )
    }

    /// Resolve a model file: preset fields override the coefficients they pin.
    pub fn from_file(file: &ModelFile) -> Result<Self> {
        let get = |name: &str, value: &Option<String>| -> Result<String> {
            value
                .clone()
                .ok_or_else(|| Error::InvalidModel(format!("missing field `{name}`")))
        };
        match file.preset {
            Some(name) => {
                let lambda = get("lambda", &file.lambda)?;
                let phi = get("phi", &file.phi)?;
                let b = match name {
                    PresetName::Bcpp => get("b", &file.b)?,
                    _ => "0".to_string(),
                };
                ModelSpec::preset(name, &lambda, &b, &phi)
            }
            None => ModelSpec::from_sources(
                &get("b", &file.b)?,
                &get("c", &file.c)?,
                &get("lambda", &file.lambda)?,
                &get("a1", &file.a1)?,
                &get("a2", &file.a2)?,
                &get("a3", &file.a3)?,
                &get("a4", &file.a4)?,
                &get("phi", &file.phi)?,
            ),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text)?;
        ModelSpec::from_file(&file)
    }

    pub fn to_file(&self) -> ModelFile {
        ModelFile {
            preset: self.preset,
            b: Some(self.b.source().to_string()),
            c: Some(self.c.source().to_string()),
            lambda: Some(self.lambda.source().to_string()),
            a1: Some(self.a1.source().to_string()),
            a2: Some(self.a2.source().to_string()),
            a3: Some(self.a3.source().to_string()),
            a4: Some(self.a4.source().to_string()),
            phi: Some(self.phi.source().to_string()),
        }
    }

    /// The `a1..a4` fields in order.
    pub fn a(&self) -> [&CoefficientExpr; 4] {
        [&self.a1, &self.a2, &self.a3, &self.a4]
    }
}

/// On-disk JSON form of a model.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    #[serde(default)]
    pub preset: Option<PresetName>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a1: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a2: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a3: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a4: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi: Option<String>,
}

/// Expand a preset into a full model.
///
/// voter: b=0, c=1, a=(0,1,0,1); exclusion: b=0, c=1, a=(0,1,1,0);
/// bcpp: c=0, a=(1,1,0,1) with `b` as supplied.
pub fn build_preset(
    name: PresetName,
    lambda: CoefficientExpr,
    b: CoefficientExpr,
    phi: CoefficientExpr,
) -> Result<ModelSpec> {
    if lambda.arity() != Arity::Binary || b.arity() != Arity::Unary || phi.arity() != Arity::Unary {
        return Err(Error::InvalidModel("coefficient arity mismatch".into()));
    }
    let (b_pin, c, a) = name.pinned();
    let b = match b_pin {
        Some(v) => CoefficientExpr::constant(v, Arity::Unary),
        None => b,
    };
    let grid = unit_grid(DEFAULT_VALIDATION_POINTS);
    let lambda_min = min_binary(&lambda, &grid);
    if !(lambda_min >= 0.0) {
        return Err(Error::InvalidModel(format!(
            "lambda is negative or non-finite (min {lambda_min})"
        )));
    }
    let b_min = min_unary(&b, &grid);
    if !(b_min >= 0.0) {
        return Err(Error::InvalidModel(format!(
            "b is negative or non-finite (min {b_min})"
        )));
    }
    let bin = |x: f64| CoefficientExpr::constant(x, Arity::Binary);
    Ok(ModelSpec {
        b,
        c: CoefficientExpr::constant(c, Arity::Unary),
        lambda,
        a1: bin(a[0]),
        a2: bin(a[1]),
        a3: bin(a[2]),
        a4: bin(a[3]),
        phi,
        preset: Some(name),
    })
}

fn unit_grid(points: usize) -> Vec<f64> {
    let last = (points - 1) as f64;
    (0..points).map(|k| k as f64 / last).collect()
}

// NaN propagates as NaN so that non-finite values fail the `>= 0` checks.
fn fold_min(acc: f64, x: f64) -> f64 {
    if x.is_nan() || acc.is_nan() {
        f64::NAN
    } else {
        acc.min(x)
    }
}

fn min_unary(e: &CoefficientExpr, grid: &[f64]) -> f64 {
    grid.iter()
        .map(|&u| e.eval1(u))
        .fold(f64::INFINITY, fold_min)
}

fn min_binary(e: &CoefficientExpr, grid: &[f64]) -> f64 {
    grid.iter()
        .flat_map(|&u| grid.iter().map(move |&v| e.eval2(u, v)))
        .fold(f64::INFINITY, fold_min)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FieldSummary {
    pub name: String,
    pub min: f64,
    pub max: f64,
    pub finite: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub points: usize,
    pub fields: Vec<FieldSummary>,
    pub problems: Vec<String>,
    pub pass: bool,
}

impl ValidationReport {
    pub fn field(&self, name: &str) -> Option<&FieldSummary> {
        self.fields.iter().find(|f| f.name == name)
    }
}

/// Sample every coefficient on a uniform grid (Cartesian product for binary
/// fields) and check nonnegativity, finiteness and `phi` in `[0, 1]`.
pub fn validate_model(spec: &ModelSpec, validation_points: usize) -> Result<ValidationReport> {
    if validation_points < 2 {
        return Err(Error::invalid("validation_points must be at least 2"));
    }
    let grid = unit_grid(validation_points);
    let mut fields = Vec::new();
    let mut problems = Vec::new();

    let mut summarize = |name: &str, values: Vec<f64>| {
        let finite = values.iter().all(|x| x.is_finite());
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !finite {
            problems.push(format!("{name} is not finite on the validation grid"));
        }
        fields.push(FieldSummary {
            name: name.to_string(),
            min,
            max,
            finite,
        });
    };

    let unary = |e: &CoefficientExpr| grid.iter().map(|&u| e.eval1(u)).collect::<Vec<_>>();
    let binary = |e: &CoefficientExpr| {
        grid.iter()
            .flat_map(|&u| grid.iter().map(move |&v| e.eval2(u, v)))
            .collect::<Vec<_>>()
    };

    summarize("b", unary(&spec.b));
    summarize("c", unary(&spec.c));
    summarize("lambda", binary(&spec.lambda));
    summarize("a1", binary(&spec.a1));
    summarize("a2", binary(&spec.a2));
    summarize("a3", binary(&spec.a3));
    summarize("a4", binary(&spec.a4));
    summarize("phi", unary(&spec.phi));

    for f in &fields {
        if f.finite && f.min < 0.0 {
            problems.push(format!("{} is negative (min {})", f.name, f.min));
        }
        if f.name == "phi" && f.finite && f.max > 1.0 {
            problems.push(format!("phi exceeds 1 (max {})", f.max));
        }
    }
    let pass = problems.is_empty();
    Ok(ValidationReport {
        points: validation_points,
        fields,
        problems,
        pass,
    })
}

/// Validate with the default density and turn failures into an error.
pub fn ensure_valid(spec: &ModelSpec) -> Result<()> {
    let report = validate_model(spec, DEFAULT_VALIDATION_POINTS)?;
    if report.pass {
        Ok(())
    } else {
        Err(Error::InvalidModel(report.problems.join("; ")))
    }
}

/// Coefficients evaluated on the urn positions `i/N`, `i = 1..=N`
/// (stored 0-based: index `k` is urn `k + 1`).
#[derive(Debug, Clone)]
pub struct UrnCoefficients {
    pub n: usize,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    pub phi: Vec<f64>,
    /// Row-major `n x n`, entry `[i * n + j] = lambda(i/N, j/N)`.
    pub lambda: Vec<f64>,
    /// Row-major `n x n`, entry `[i * n + j] = [a1, a2, a3, a4](i/N, j/N)`.
    pub a: Vec<[f64; 4]>,
}

impl UrnCoefficients {
    pub fn new(spec: &ModelSpec, n: usize) -> Self {
        let pos = |k: usize| (k + 1) as f64 / n as f64;
        let b = (0..n).map(|k| spec.b.eval1(pos(k))).collect();
        let c = (0..n).map(|k| spec.c.eval1(pos(k))).collect();
        let phi = (0..n).map(|k| spec.phi.eval1(pos(k))).collect();
        let mut lambda = Vec::with_capacity(n * n);
        let mut a = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                let (u, v) = (pos(i), pos(j));
                lambda.push(spec.lambda.eval2(u, v));
                a.push([
                    spec.a1.eval2(u, v),
                    spec.a2.eval2(u, v),
                    spec.a3.eval2(u, v),
                    spec.a4.eval2(u, v),
                ]);
            }
        }
        UrnCoefficients {
            n,
            b,
            c,
            phi,
            lambda,
            a,
        }
    }

    /// Position of 0-based urn `k` on `[0, 1]`.
    #[inline]
    pub fn position(&self, k: usize) -> f64 {
        (k + 1) as f64 / self.n as f64
    }

    #[inline]
    pub fn lambda(&self, i: usize, j: usize) -> f64 {
        self.lambda[i * self.n + j]
    }

    #[inline]
    pub fn a(&self, i: usize, j: usize) -> [f64; 4] {
        self.a[i * self.n + j]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn custom(a1: &str, phi: &str) -> ModelSpec {
        ModelSpec::from_sources("0", "1", "1", a1, "1", "0", "1", phi).unwrap()
    }

    #[test]
    fn presets_pin_the_documented_constants() {
        let cases = [
            (
                PresetName::Voter,
                Some(0.0),
                Some(1.0),
                [0.0, 1.0, 0.0, 1.0],
            ),
            (
                PresetName::Exclusion,
                Some(0.0),
                Some(1.0),
                [0.0, 1.0, 1.0, 0.0],
            ),
            (PresetName::Bcpp, None, Some(0.0), [1.0, 1.0, 0.0, 1.0]),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for (name, b, c, a) in cases {
            let spec = ModelSpec::preset(name, "1 + u*v", "0.25", "0.5").unwrap();
            assert_eq!(spec.preset, Some(name));
            assert_eq!(spec.c.as_constant(), c);
            match b {
                Some(b) => assert_eq!(spec.b.as_constant(), Some(b)),
                None => assert_eq!(spec.b.as_constant(), Some(0.25)),
            }
            for _ in 0..100 {
                let (u, v) = (rng.random::<f64>(), rng.random::<f64>());
                let got = spec.a().map(|e| e.eval2(u, v));
                assert_eq!(got, a);
            }
        }
    }

    #[test]
    fn preset_rejects_negative_rates_and_unknown_names() {
        assert!(matches!(
            ModelSpec::preset(PresetName::Voter, "u - 0.5", "0", "0.5"),
            Err(Error::InvalidModel(_))
        ));
        assert!(matches!(
            ModelSpec::preset(PresetName::Bcpp, "1", "-1", "0.5"),
            Err(Error::InvalidModel(_))
        ));
        assert!(matches!(
            "contact".parse::<PresetName>(),
            Err(Error::UnknownPreset(_))
        ));
        assert_eq!("BCPP".parse::<PresetName>().unwrap(), PresetName::Bcpp);
    }

    #[test]
    fn validation_examples() {
        let voter = ModelSpec::preset(PresetName::Voter, "1", "0", "0.5").unwrap();
        assert!(validate_model(&voter, 64).unwrap().pass);

        let neg = custom("u-1", "0.5");
        let report = validate_model(&neg, 64).unwrap();
        assert!(!report.pass);
        assert_eq!(report.field("a1").unwrap().min, -1.0);

        let phi = custom("0", "1.5");
        let report = validate_model(&phi, 64).unwrap();
        assert!(!report.pass);
        assert!(report.problems.iter().any(|p| p.contains("phi")));

        let nan = custom("sqrt(u - 2)", "0.5");
        assert!(!validate_model(&nan, 8).unwrap().pass);

        assert!(validate_model(&voter, 1).is_err());
    }

    #[test]
    fn passing_models_are_nonnegative_on_the_grid() {
        let spec = ModelSpec::from_sources(
            "u",
            "2 - u",
            "1 + sin(3*u*v)",
            "u*v",
            "1",
            "abs(u - v)",
            "exp(-u)",
            "u*(1-u)",
        )
        .unwrap();
        let report = validate_model(&spec, 33).unwrap();
        assert!(report.pass);
        for f in &report.fields {
            assert!(f.min >= 0.0, "{} min {}", f.name, f.min);
        }
    }

    #[test]
    fn model_file_json() {
        let spec = ModelSpec::from_json(
            r#"{"preset": "bcpp", "b": "0.5", "lambda": "1", "phi": "0.5", "a1": "7"}"#,
        )
        .unwrap();
        assert_eq!(spec.a1.as_constant(), Some(1.0));
        assert_eq!(spec.b.as_constant(), Some(0.5));

        let spec =
            ModelSpec::from_json(r#"{"preset": "voter", "b": "3", "lambda": "1", "phi": "0.5"}"#)
                .unwrap();
        assert_eq!(spec.b.as_constant(), Some(0.0));

        let err = ModelSpec::from_json(r#"{"preset": null, "lambda": "1"}"#).unwrap_err();
        assert!(matches!(err, Error::InvalidModel(_)));

        let err = ModelSpec::from_json(
            r#"{"b":"0","c":"1","lambda":"1","a1":"0","a2":"1","a3":"0","a4":"1","phi":"u +"}"#,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Parse { ref field, .. } if field == "phi"));

        let custom = custom("0", "0.5");
        let round = ModelSpec::from_file(&custom.to_file()).unwrap();
        assert_eq!(round, custom);
    }

    #[test]
    fn urn_coefficients_use_right_endpoint_positions() {
        let spec = ModelSpec::from_sources("u", "1", "u + 2*v", "0", "1", "0", "1", "u").unwrap();
        let coef = UrnCoefficients::new(&spec, 4);
        assert_eq!(coef.b, vec![0.25, 0.5, 0.75, 1.0]);
        assert_eq!(coef.lambda(0, 3), 0.25 + 2.0);
        assert_eq!(coef.a(2, 1), [0.0, 1.0, 0.0, 1.0]);
    }
}
