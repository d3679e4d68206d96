use std::io::Write;

use crate::error::{Error, Result};
use crate::model::{ensure_valid, ModelSpec, UrnCoefficients};
use crate::numeric::{ensure_finite, fitted_slope, lattice_index, step_count, Rk4};

use super::matrix::{build_m, build_mhat, check_size, MeanGenerator};

const SYMMETRY_TOL: f64 = 1e-10;
const CONSISTENCY_TOL: f64 = 1e-8;

/// Exact first and second moments of the `n`-urn chain at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentTable {
    pub n: usize,
    pub time: f64,
    pub mean: Vec<f64>,
    /// `mean(i) * mean(j)`, row-major.
    pub f: Vec<f64>,
    /// `E X(i) X(j)`, row-major.
    pub fhat: Vec<f64>,
}

impl MomentTable {
    pub fn f(&self, i: usize, j: usize) -> f64 {
        self.f[i * self.n + j]
    }

    pub fn fhat(&self, i: usize, j: usize) -> f64 {
        self.fhat[i * self.n + j]
    }

    /// `max_{i != j} |Fhat(i, j) - F(i, j)|`.
    pub fn sup_offdiag_diff(&self) -> f64 {
        let n = self.n;
        let mut sup: f64 = 0.0;
        for i in 0..n {
            for j in (0..n).filter(|&j| j != i) {
                sup = sup.max((self.fhat(i, j) - self.f(i, j)).abs());
            }
        }
        sup
    }
}

/// Moment tables at the requested times plus the largest deviations seen by
/// the internal consistency checks.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentTrajectory {
    pub tables: Vec<MomentTable>,
    pub max_product_gap: f64,
    pub max_mean_gap: f64,
}

fn initial_data(coef: &UrnCoefficients) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let n = coef.n;
    let phi = coef.phi.clone();
    let mut f = vec![0.0; n * n];
    let mut fhat = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            f[i * n + j] = phi[i] * phi[j];
            fhat[i * n + j] = if i == j { phi[i] } else { phi[i] * phi[j] };
        }
    }
    (phi, f, fhat)
}

fn product(mean: &[f64]) -> Vec<f64> {
    mean.iter()
        .flat_map(|a| mean.iter().map(move |b| a * b))
        .collect()
}

fn record_steps(times: &[f64], dt: f64, steps: usize) -> Result<Vec<usize>> {
    times
        .iter()
        .map(|&t| lattice_index(t, dt, steps + 1))
        .collect()
}

/// Exact means `E X_t(i)` at every step `k * dt` up to `horizon`.
pub fn evolve_means(spec: &ModelSpec, n: usize, horizon: f64, dt: f64) -> Result<Vec<Vec<f64>>> {
    if n < 2 {
        return Err(Error::invalid(format!("need at least 2 urns, got {n}")));
    }
    ensure_valid(spec)?;
    let steps = step_count(horizon, dt)?;
    let coef = UrnCoefficients::new(spec, n);
    let gen = MeanGenerator::new(&coef);
    let mut y = coef.phi.clone();
    let mut rk = Rk4::new(n);
    let mut out = Vec::with_capacity(steps + 1);
    out.push(y.clone());
    for k in 0..steps {
        rk.step(k as f64 * dt, dt, &mut y, |_, x, dx| gen.apply_into(x, dx));
        ensure_finite(&y, "mean equation")?;
        out.push(y.clone());
    }
    Ok(out)
}

/// Evolve means, products of means and second moments from independent
/// Bernoulli initial data, recording tables at `record_times`.
///
/// The products of means are also integrated through their own generator
/// and compared against `mean (x) mean`; the means reconstructed from the
/// off-diagonal products are compared against the evolved means; `Fhat` is
/// checked for symmetry after every step.
pub fn evolve_moments(
    spec: &ModelSpec,
    n: usize,
    horizon: f64,
    dt: f64,
    record_times: &[f64],
) -> Result<MomentTrajectory> {
    check_size(n)?;
    ensure_valid(spec)?;
    let steps = step_count(horizon, dt)?;
    let wanted = record_steps(record_times, dt, steps)?;
    let coef = UrnCoefficients::new(spec, n);
    let gen = MeanGenerator::new(&coef);
    let m = build_m(spec, n)?;
    let mhat = build_mhat(spec, n)?;
    let (mut mean, mut f, mut fhat) = initial_data(&coef);
    let (mut rk_mean, mut rk_pair) = (Rk4::new(n), Rk4::new(n * n));

    let mut max_product_gap: f64 = 0.0;
    let mut max_mean_gap: f64 = 0.0;
    let mut tables = vec![None; wanted.len()];
    let mut record = |k: usize, mean: &[f64], fhat: &[f64]| {
        for (slot, &w) in tables.iter_mut().zip(&wanted) {
            if w == k {
                *slot = Some(MomentTable {
                    n,
                    time: k as f64 * dt,
                    mean: mean.to_vec(),
                    f: product(mean),
                    fhat: fhat.to_vec(),
                });
            }
        }
    };
    record(0, &mean, &fhat);

    for k in 0..steps {
        let t = k as f64 * dt;
        rk_mean.step(t, dt, &mut mean, |_, x, dx| gen.apply_into(x, dx));
        rk_pair.step(t, dt, &mut f, |_, x, dx| m.apply_into(x, dx));
        rk_pair.step(t, dt, &mut fhat, |_, x, dx| mhat.apply_into(x, dx));
        ensure_finite(&mean, "mean equation")?;
        ensure_finite(&f, "product equation")?;
        ensure_finite(&fhat, "second-moment equation")?;

        let scale = f.iter().fold(1.0f64, |a, x| a.max(x.abs()));
        let gap = product(&mean)
            .iter()
            .zip(&f)
            .fold(0.0f64, |a, (p, q)| a.max((p - q).abs()));
        max_product_gap = max_product_gap.max(gap);
        if gap > CONSISTENCY_TOL * scale {
            return Err(Error::Consistency(format!(
                "products of means drift from the mean equation by {gap:e} at t = {}",
                t + dt
            )));
        }
        let mean_gap = reconstruction_gap(&mean, &f);
        max_mean_gap = max_mean_gap.max(mean_gap);
        if mean_gap > CONSISTENCY_TOL * scale {
            return Err(Error::Consistency(format!(
                "mean reconstructed from products differs by {mean_gap:e} at t = {}",
                t + dt
            )));
        }
        for i in 0..n {
            for j in i + 1..n {
                let d = (fhat[i * n + j] - fhat[j * n + i]).abs();
                if d > SYMMETRY_TOL * scale {
                    return Err(Error::Consistency(format!(
                        "second moments lost symmetry at ({i}, {j}) by {d:e}"
                    )));
                }
            }
        }
        record(k + 1, &mean, &fhat);
    }
    Ok(MomentTrajectory {
        tables: tables
            .into_iter()
            .map(|t| t.expect("every requested step is visited"))
            .collect(),
        max_product_gap,
        max_mean_gap,
    })
}

/// `max_i |mean(i) - sum_{j != i} F(i, j) / sum_{j != i} mean(j)|`, skipping
/// rows whose denominator vanishes.
fn reconstruction_gap(mean: &[f64], f: &[f64]) -> f64 {
    let n = mean.len();
    let total: f64 = mean.iter().sum();
    let mut gap: f64 = 0.0;
    for i in 0..n {
        let den = total - mean[i];
        if den.abs() < 1e-12 {
            continue;
        }
        let num: f64 = (0..n).filter(|&j| j != i).map(|j| f[i * n + j]).sum();
        gap = gap.max((num / den - mean[i]).abs());
    }
    gap
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecayRow {
    pub n: usize,
    pub sup_offdiag_diff: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecayReport {
    pub rows: Vec<DecayRow>,
    /// Least-squares slope of `log sup` against `log n`; absent when fewer
    /// than two sizes have a positive discrepancy.
    pub fitted_slope: Option<f64>,
}

/// Off-diagonal discrepancy between second moments and products of means at
/// `horizon` for each urn count.
pub fn covariance_decay(
    spec: &ModelSpec,
    n_list: &[usize],
    horizon: f64,
    dt: f64,
) -> Result<DecayReport> {
    let mut rows = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let traj = evolve_moments(spec, n, horizon, dt, &[horizon])?;
        rows.push(DecayRow {
            n,
            sup_offdiag_diff: traj.tables[0].sup_offdiag_diff(),
        });
    }
    let positive: Vec<_> = rows.iter().filter(|r| r.sup_offdiag_diff > 0.0).collect();
    let fitted_slope = (positive.len() >= 2).then(|| {
        let x: Vec<f64> = positive.iter().map(|r| (r.n as f64).ln()).collect();
        let y: Vec<f64> = positive.iter().map(|r| r.sup_offdiag_diff.ln()).collect();
        fitted_slope(&x, &y)
    });
    Ok(DecayReport { rows, fitted_slope })
}

/// CSV `time,i,j,F,Fhat,diff` with 1-based urn indices.
pub fn write_moments_csv<W: Write>(traj: &MomentTrajectory, mut out: W) -> Result<()> {
    writeln!(out, "time,i,j,F,Fhat,diff")?;
    for table in &traj.tables {
        for i in 0..table.n {
            for j in 0..table.n {
                let (f, fh) = (table.f(i, j), table.fhat(i, j));
                writeln!(
                    out,
                    "{},{},{},{f},{fh},{}",
                    table.time,
                    i + 1,
                    j + 1,
                    fh - f
                )?;
            }
        }
    }
    Ok(())
}

/// CSV `n,sup_offdiag_diff,fitted_slope`; the slope repeats on every row.
pub fn write_decay_csv<W: Write>(report: &DecayReport, mut out: W) -> Result<()> {
    writeln!(out, "n,sup_offdiag_diff,fitted_slope")?;
    let slope = report
        .fitted_slope
        .map(|s| s.to_string())
        .unwrap_or_default();
    for row in &report.rows {
        writeln!(out, "{},{},{slope}", row.n, row.sup_offdiag_diff)?;
    }
    Ok(())
}
