use crate::error::{Error, Result};
use crate::model::CoefficientExpr;

use super::UrnState;

/// A test function sampled at the urn positions `i/N`, `i = 1..N`.
#[derive(Debug, Clone, PartialEq)]
pub struct UrnTestFunction {
    values: Vec<f64>,
}

impl UrnTestFunction {
    pub fn from_fn(n: usize, f: impl Fn(f64) -> f64) -> Self {
        let values = (1..=n).map(|i| f(i as f64 / n as f64)).collect();
        UrnTestFunction { values }
    }

    pub fn from_expr(expr: &CoefficientExpr, n: usize) -> Self {
        Self::from_fn(n, |u| expr.eval1(u))
    }

    pub fn from_values(values: Vec<f64>) -> Self {
        UrnTestFunction { values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }
}

/// Empirical fields of one configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observables {
    pub mu: f64,
    pub theta: f64,
    pub omega: Option<f64>,
    pub v: Option<f64>,
}

/// `mu`, `theta` for `f`; `omega` for the binary function `h` (row-major
/// `n x n` samples at `(i/N, j/N)`, diagonal included); `v` when exact means
/// are supplied.
pub fn observe(
    state: &UrnState,
    f: &UrnTestFunction,
    h: Option<&[f64]>,
    means: Option<&[f64]>,
) -> Result<Observables> {
    let n = state.n();
    if f.n() != n {
        return Err(Error::GridMismatch {
            expected: n,
            found: f.n(),
        });
    }
    let inv_n = 1.0 / n as f64;
    let x = &state.values;
    let fv = f.values();
    let mu = inv_n * x.iter().zip(fv).map(|(a, b)| a * b).sum::<f64>();
    let theta = inv_n * x.iter().zip(fv).map(|(a, b)| a * a * b).sum::<f64>();
    let omega = match h {
        Some(h) => {
            if h.len() != n * n {
                return Err(Error::GridMismatch {
                    expected: n * n,
                    found: h.len(),
                });
            }
            let mut total = 0.0;
            for (i, &xi) in x.iter().enumerate() {
                if xi == 0.0 {
                    continue;
                }
                let row = &h[i * n..(i + 1) * n];
                total += xi * x.iter().zip(row).map(|(a, b)| a * b).sum::<f64>();
            }
            Some(total * inv_n * inv_n)
        }
        None => None,
    };
    let v = means.map(|m| fluctuation_field(x, m, fv)).transpose()?;
    Ok(Observables {
        mu,
        theta,
        omega,
        v,
    })
}

/// `(1/sqrt N) sum_i (x(i) - means(i)) f(i/N)`.
pub fn fluctuation_field(values: &[f64], means: &[f64], f: &[f64]) -> Result<f64> {
    let n = values.len();
    if means.len() != n {
        return Err(Error::GridMismatch {
            expected: n,
            found: means.len(),
        });
    }
    if f.len() != n {
        return Err(Error::GridMismatch {
            expected: n,
            found: f.len(),
        });
    }
    let s: f64 = values
        .iter()
        .zip(means)
        .zip(f)
        .map(|((x, m), g)| (x - m) * g)
        .sum();
    Ok(s / (n as f64).sqrt())
}
