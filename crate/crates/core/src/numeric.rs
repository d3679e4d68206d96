//! Small numerical building blocks shared by the solvers.

use crate::error::{Error, Result};

/// Neumaier (improved Kahan) compensated sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut acc = CompensatedSum::new();
    for x in values {
        acc.add(x);
    }
    acc.value()
}

/// Classical fourth-order Runge-Kutta stepper with reusable stage buffers.
pub struct Rk4 {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    stage: Vec<f64>,
}

impl Rk4 {
    pub fn new(dim: usize) -> Self {
        Rk4 {
            k1: vec![0.0; dim],
            k2: vec![0.0; dim],
            k3: vec![0.0; dim],
            k4: vec![0.0; dim],
            stage: vec![0.0; dim],
        }
    }

    /// Advance `y` in place from `t` to `t + dt`.
    ///
    /// `rhs(t, y, out)` writes the derivative. The stage times passed are
    /// `t`, `t + dt/2`, `t + dt/2`, `t + dt`.
    pub fn step<F>(&mut self, t: f64, dt: f64, y: &mut [f64], mut rhs: F)
    where
        F: FnMut(f64, &[f64], &mut [f64]),
    {
        let half = 0.5 * dt;
        rhs(t, y, &mut self.k1);
        for ((s, &yi), &k) in self.stage.iter_mut().zip(y.iter()).zip(&self.k1) {
            *s = yi + half * k;
        }
        rhs(t + half, &self.stage, &mut self.k2);
        for ((s, &yi), &k) in self.stage.iter_mut().zip(y.iter()).zip(&self.k2) {
            *s = yi + half * k;
        }
        rhs(t + half, &self.stage, &mut self.k3);
        for ((s, &yi), &k) in self.stage.iter_mut().zip(y.iter()).zip(&self.k3) {
            *s = yi + dt * k;
        }
        rhs(t + dt, &self.stage, &mut self.k4);
        let sixth = dt / 6.0;
        for (i, yi) in y.iter_mut().enumerate() {
            *yi += sixth * (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i]);
        }
    }
}

/// Number of steps of size `dt` that reach `horizon` exactly.
pub fn step_count(horizon: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::invalid(format!(
            "time step must be positive, got {dt}"
        )));
    }
    if !(horizon >= 0.0) || !horizon.is_finite() {
        return Err(Error::invalid(format!(
            "horizon must be nonnegative, got {horizon}"
        )));
    }
    let steps = (horizon / dt).round();
    if (steps * dt - horizon).abs() > 1e-9 * horizon.max(1.0) {
        return Err(Error::invalid(format!(
            "horizon {horizon} is not a multiple of dt {dt}"
        )));
    }
    Ok(steps as usize)
}

/// Index of `t` on the lattice `k * dt`, if it lies on it.
pub fn lattice_index(t: f64, dt: f64, len: usize) -> Result<usize> {
    let k = (t / dt).round();
    if k < 0.0 || (k * dt - t).abs() > 1e-9 * t.abs().max(1.0) || k as usize >= len {
        return Err(Error::invalid(format!(
            "time {t} is not on the stored step lattice (dt {dt}, {len} points)"
        )));
    }
    Ok(k as usize)
}

pub fn ensure_finite(values: &[f64], what: &str) -> Result<()> {
    if values.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numerical(format!(
            "{what} produced a non-finite value"
        )))
    }
}

/// Least-squares slope of `y` against `x`.
pub fn fitted_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}
