use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::hydro::{limit_variance, DensityTrajectory, GridBiFunction, GridFunction, GridModel};
use crate::model::ModelSpec;
use crate::sim::{Simulator, UrnState, UrnTestFunction};

use super::ensemble::{exact_means, run_ensemble, EnsembleStats, Quantity, TestFunctionSet};
use super::stats::{ks_normal, mse, zscore, KsResult, SampleSummary};

/// One line of the report CSV.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub n: usize,
    pub replicas: usize,
    pub time: f64,
    pub testfn: String,
    pub quantity: String,
    pub empirical: f64,
    pub reference: f64,
    pub stderr: f64,
    pub zscore: f64,
    pub pass: bool,
}

/// CSV `n,R,t,testfn,quantity,empirical,reference,stderr,zscore,pass`.
pub fn write_report_csv<W: Write>(rows: &[ReportRow], mut out: W) -> Result<()> {
    writeln!(
        out,
        "n,R,t,testfn,quantity,empirical,reference,stderr,zscore,pass"
    )?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.n,
            r.replicas,
            r.time,
            csv_field(&r.testfn),
            r.quantity,
            r.empirical,
            r.reference,
            r.stderr,
            r.zscore,
            r.pass
        )?;
    }
    Ok(())
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Mean-squared error of an ensemble observable against its deterministic
/// limit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LlnRow {
    pub n: usize,
    pub replicas: usize,
    pub time: f64,
    pub testfn: String,
    pub quantity: Quantity,
    pub reference: f64,
    pub mse: f64,
    pub stderr: f64,
}

/// References `int rho f`, `int vartheta f` and `iint rho(u) rho(v) H(u, v)`
/// for every `mu`, `theta` and `omega` record, with the empirical MSE.
pub fn lln_report(
    stats: &EnsembleStats,
    model: &GridModel,
    traj: &DensityTrajectory,
    functions: &TestFunctionSet,
) -> Result<Vec<LlnRow>> {
    let m = model.m();
    let mut rows = Vec::new();
    for rec in &stats.records {
        let rho = traj.rho_at(rec.time)?;
        let reference = match rec.quantity {
            Quantity::Mu | Quantity::Theta => {
                let expr = functions
                    .unary
                    .iter()
                    .find(|e| e.source() == rec.testfn)
                    .ok_or_else(|| {
                        Error::invalid(format!("unknown test function `{}`", rec.testfn))
                    })?;
                let f = GridFunction::from_expr(expr, m);
                if rec.quantity == Quantity::Mu {
                    rho.pairing(&f)?
                } else {
                    traj.vartheta_at(rec.time)?.pairing(&f)?
                }
            }
            Quantity::Omega => {
                let expr = functions
                    .binary
                    .iter()
                    .find(|e| e.source() == rec.testfn)
                    .ok_or_else(|| {
                        Error::invalid(format!("unknown test function `{}`", rec.testfn))
                    })?;
                let h = GridBiFunction::from_expr(expr, m);
                let r = rho.values();
                let mut total = 0.0;
                for i in 0..m {
                    total += r[i] * h.row(i).iter().zip(r).map(|(a, b)| a * b).sum::<f64>();
                }
                total / (m * m) as f64
            }
            Quantity::V => continue,
        };
        let (e, se) = mse(&rec.samples, reference);
        rows.push(LlnRow {
            n: stats.n,
            replicas: stats.replicas,
            time: rec.time,
            testfn: rec.testfn.clone(),
            quantity: rec.quantity,
            reference,
            mse: e,
            stderr: se,
        });
    }
    Ok(rows)
}

/// MSE of one observable along an increasing ladder of `n`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LadderRow {
    pub time: f64,
    pub testfn: String,
    pub quantity: Quantity,
    pub ns: Vec<usize>,
    pub mse: Vec<f64>,
    pub stderr: Vec<f64>,
    pub strictly_decreasing: bool,
}

/// Runs `lln_report` for each `n` (replica seed shared across rungs) and
/// collects the MSE of each observable along the ladder.
#[allow(clippy::too_many_arguments)]
pub fn lln_ladder(
    spec: &ModelSpec,
    ns: &[usize],
    replicas: usize,
    times: &[f64],
    functions: &TestFunctionSet,
    seed: u64,
    model: &GridModel,
    traj: &DensityTrajectory,
) -> Result<Vec<LadderRow>> {
    let mut ladder: Vec<LadderRow> = Vec::new();
    for &n in ns {
        let stats = run_ensemble(spec, n, replicas, times, functions, seed, None)?;
        let report = lln_report(&stats, model, traj, functions)?;
        if ladder.is_empty() {
            ladder = report
                .iter()
                .map(|r| LadderRow {
                    time: r.time,
                    testfn: r.testfn.clone(),
                    quantity: r.quantity,
                    ns: Vec::new(),
                    mse: Vec::new(),
                    stderr: Vec::new(),
                    strictly_decreasing: true,
                })
                .collect();
        }
        for (row, r) in ladder.iter_mut().zip(&report) {
            row.ns.push(n);
            row.mse.push(r.mse);
            row.stderr.push(r.stderr);
        }
    }
    for row in &mut ladder {
        row.strictly_decreasing = row.mse.windows(2).all(|w| w[1] < w[0]);
    }
    Ok(ladder)
}

impl LadderRow {
    pub fn report_rows(&self, replicas: usize) -> Vec<ReportRow> {
        self.ns
            .iter()
            .zip(self.mse.iter().zip(&self.stderr))
            .map(|(&n, (&e, &se))| ReportRow {
                n,
                replicas,
                time: self.time,
                testfn: self.testfn.clone(),
                quantity: format!("mse_{}", self.quantity.as_str()),
                empirical: e,
                reference: 0.0,
                stderr: se,
                zscore: zscore(e, 0.0, se),
                pass: self.strictly_decreasing,
            })
            .collect()
    }
}

/// Empirical law of `V_t^N(f)` against the limiting variance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VarianceCheck {
    pub n: usize,
    pub replicas: usize,
    pub time: f64,
    pub testfn: String,
    pub summary: SampleSummary,
    pub reference: f64,
    /// Standard error of the sample variance under normality.
    pub stderr: f64,
    pub zscore: f64,
    pub ks: KsResult,
    /// `|empirical - reference| <= 5% reference + 4 stderr`.
    pub pass: bool,
    /// Ensemble mean of `V` within 4 standard errors of 0.
    pub centered: bool,
}

impl VarianceCheck {
    pub fn report_row(&self) -> ReportRow {
        ReportRow {
            n: self.n,
            replicas: self.replicas,
            time: self.time,
            testfn: self.testfn.clone(),
            quantity: "var_v".into(),
            empirical: self.summary.variance,
            reference: self.reference,
            stderr: self.stderr,
            zscore: self.zscore,
            pass: self.pass,
        }
    }
}

/// Pass rule shared by every variance comparison.
pub fn variance_within(empirical: f64, reference: f64, stderr: f64) -> bool {
    (empirical - reference).abs() <= 0.05 * reference + 4.0 * stderr
}

/// Simulates `replicas` trajectories, centers `V_t^N(f)` with the exact
/// finite-`n` means and compares its variance with `limit_variance` for
/// each unary test function. Means and the limit variance use `traj.dt`.
#[allow(clippy::too_many_arguments)]
pub fn fluctuation_variance_check(
    spec: &ModelSpec,
    n: usize,
    replicas: usize,
    t: f64,
    functions: &TestFunctionSet,
    seed: u64,
    model: &GridModel,
    traj: &DensityTrajectory,
) -> Result<Vec<VarianceCheck>> {
    let means = exact_means(spec, n, &[t], traj.dt)?;
    let unary = TestFunctionSet {
        unary: functions.unary.clone(),
        binary: Vec::new(),
    };
    let stats = run_ensemble(spec, n, replicas, &[t], &unary, seed, Some(&means))?;
    functions
        .unary
        .iter()
        .map(|expr| {
            let rec = stats.find(t, expr.source(), Quantity::V).ok_or_else(|| {
                Error::Consistency(format!("missing V record for `{}`", expr.source()))
            })?;
            let summary = rec.summary();
            let reference = limit_variance(
                model,
                &GridFunction::from_expr(expr, model.m()),
                t,
                traj.dt,
                traj,
            )?;
            let stderr = summary.variance_stderr(reference);
            Ok(VarianceCheck {
                n,
                replicas,
                time: t,
                testfn: expr.source().to_string(),
                summary,
                reference,
                stderr,
                zscore: zscore(summary.variance, reference, stderr),
                ks: ks_normal(&rec.samples),
                pass: variance_within(summary.variance, reference, stderr),
                centered: summary.mean.abs() <= 4.0 * summary.stderr || summary.mean == 0.0,
            })
        })
        .collect()
}

/// `sum_i b_i (f_i (c_i - 1) X_i / sqrt N)^2 + (1/N) sum_{i != j} lambda_ij
/// [f_i ((a1 - 1) X_i + a2 X_j) / sqrt N + f_j (a3 X_i + (a4 - 1) X_j) / sqrt N]^2`.
pub fn z_form(sim: &Simulator, state: &UrnState, f: &UrnTestFunction) -> Result<f64> {
    let n = sim.n();
    if state.n() != n {
        return Err(Error::GridMismatch {
            expected: n,
            found: state.n(),
        });
    }
    if f.n() != n {
        return Err(Error::GridMismatch {
            expected: n,
            found: f.n(),
        });
    }
    let coef = sim.coefficients();
    let (x, fv) = (&state.values, f.values());
    let scale = 1.0 / (n as f64).sqrt();
    let refresh: f64 = (0..n)
        .map(|i| {
            let d = fv[i] * (coef.c[i] - 1.0) * x[i] * scale;
            coef.b[i] * d * d
        })
        .sum();
    let mut pairs = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let k = i * n + j;
            let [a1, a2, a3, a4] = coef.a[k];
            let d = fv[i] * ((a1 - 1.0) * x[i] + a2 * x[j]) * scale
                + fv[j] * (a3 * x[i] + (a4 - 1.0) * x[j]) * scale;
            pairs += coef.lambda[k] * d * d;
        }
    }
    Ok(refresh + pairs / n as f64)
}
