use std::ops::{Add, Mul, Sub};

use crate::error::{Error, Result};
use crate::model::CoefficientExpr;

pub const DEFAULT_GRID: usize = 256;

/// Midpoint node `(i + 1/2) / m` for 0-based `i`.
#[inline]
pub fn node(m: usize, i: usize) -> f64 {
    (i as f64 + 0.5) / m as f64
}

pub fn nodes(m: usize) -> Vec<f64> {
    (0..m).map(|i| node(m, i)).collect()
}

/// A function on `[0, 1]` sampled at the midpoint grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(values: Vec<f64>) -> Self {
        GridFunction { values }
    }

    pub fn from_fn(m: usize, f: impl Fn(f64) -> f64) -> Self {
        GridFunction::new((0..m).map(|i| f(node(m, i))).collect())
    }

    pub fn from_expr(expr: &CoefficientExpr, m: usize) -> Self {
        Self::from_fn(m, |u| expr.eval1(u))
    }

    pub fn constant(m: usize, value: f64) -> Self {
        GridFunction::new(vec![value; m])
    }

    pub fn zeros(m: usize) -> Self {
        Self::constant(m, 0.0)
    }

    pub fn m(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Midpoint quadrature of the function over `[0, 1]`.
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.m() as f64
    }

    /// Midpoint quadrature of the product with `other`.
    pub fn pairing(&self, other: &GridFunction) -> Result<f64> {
        same_grid(self.m(), other.m())?;
        let s: f64 = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum();
        Ok(s / self.m() as f64)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |acc, x| acc.max(x.abs()))
    }

    pub fn sup_distance(&self, other: &GridFunction) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0, |acc, (a, b)| acc.max((a - b).abs()))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> GridFunction {
        GridFunction::new(self.values.iter().map(|&x| f(x)).collect())
    }

    pub fn zip_with(&self, other: &GridFunction, f: impl Fn(f64, f64) -> f64) -> GridFunction {
        GridFunction::new(
            self.values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        )
    }
}

impl Add for &GridFunction {
    type Output = GridFunction;
    fn add(self, rhs: &GridFunction) -> GridFunction {
        self.zip_with(rhs, |a, b| a + b)
    }
}

impl Sub for &GridFunction {
    type Output = GridFunction;
    fn sub(self, rhs: &GridFunction) -> GridFunction {
        self.zip_with(rhs, |a, b| a - b)
    }
}

impl Mul<&GridFunction> for f64 {
    type Output = GridFunction;
    fn mul(self, rhs: &GridFunction) -> GridFunction {
        rhs.map(|x| self * x)
    }
}

/// A function on `[0, 1]^2` sampled on the midpoint product grid, row-major
/// in the first argument.
#[derive(Debug, Clone, PartialEq)]
pub struct GridBiFunction {
    m: usize,
    values: Vec<f64>,
}

impl GridBiFunction {
    pub fn new(m: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != m * m {
            return Err(Error::GridMismatch {
                expected: m * m,
                found: values.len(),
            });
        }
        Ok(GridBiFunction { m, values })
    }

    pub fn from_fn(m: usize, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(m * m);
        for i in 0..m {
            let u = node(m, i);
            for j in 0..m {
                values.push(f(u, node(m, j)));
            }
        }
        GridBiFunction { m, values }
    }

    pub fn from_expr(expr: &CoefficientExpr, m: usize) -> Self {
        Self::from_fn(m, |u, v| expr.eval2(u, v))
    }

    pub fn zeros(m: usize) -> Self {
        GridBiFunction {
            m,
            values: vec![0.0; m * m],
        }
    }

    pub fn m(&self) -> usize {
        self.m
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.m + j]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.m..(i + 1) * self.m]
    }

    pub fn integral(&self) -> f64 {
        let m = self.m as f64;
        self.values.iter().sum::<f64>() / (m * m)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |acc, x| acc.max(x.abs()))
    }
}

pub(crate) fn same_grid(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::GridMismatch { expected, found })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constants_integrate_to_one() {
        for m in [1, 3, 7, 100, 256, 1000] {
            assert_eq!(GridFunction::constant(m, 1.0).integral(), 1.0);
            assert_eq!(
                GridBiFunction::from_fn(m.min(50), |_, _| 1.0).integral(),
                1.0
            );
        }
    }

    #[test]
    fn midpoint_quadrature_is_second_order() {
        let err = |m: usize| (GridFunction::from_fn(m, |u| u.powi(3)).integral() - 0.25).abs();
        for m in [8, 16, 32, 64] {
            let ratio = err(m) / err(2 * m);
            assert!(ratio >= 3.5, "m = {m}: ratio {ratio}");
        }
    }

    #[test]
    fn pairing_and_norms() {
        let f = GridFunction::from_fn(4, |u| u);
        let g = GridFunction::constant(4, 2.0);
        assert!((f.pairing(&g).unwrap() - 1.0).abs() < 1e-15);
        assert!(f.pairing(&GridFunction::zeros(5)).is_err());
        assert_eq!(f.sup_norm(), 0.875);
        assert_eq!((&g - &f).values()[0], 1.875);
        assert_eq!((2.0 * &f).values()[3], 1.75);
    }

    #[test]
    fn bifunction_layout() {
        let h = GridBiFunction::from_fn(3, |u, v| u + 10.0 * v);
        assert_eq!(h.get(0, 2), node(3, 0) + 10.0 * node(3, 2));
        assert_eq!(h.row(1)[0], node(3, 1) + 10.0 * node(3, 0));
        assert!(GridBiFunction::new(2, vec![0.0; 3]).is_err());
    }
}
