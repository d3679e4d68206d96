//! The acceptance suite: twelve numbered checks, each a set of measurements
//! with a runtime budget.

use std::fmt::Write as _;
use std::time::{Duration, Instant};

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fluct::{
    fluctuation_variance_check, lln_ladder, pair_moments, sample_limit_ou, TestFunctionSet,
};
use crate::hydro::{
    limit_variance, solve_densities, solve_rho, GridFunction, GridModel, DEFAULT_GRID,
};
use crate::model::{ModelSpec, PresetName};
use crate::moments::{build_m, build_mhat, covariance_decay, evolve_moments};
use crate::sim::{substream, Simulator};

/// One compared quantity.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Measurement {
    pub quantity: String,
    pub measured: f64,
    pub reference: f64,
    pub tolerance: f64,
    /// How `measured` is compared: `abs` for `|measured - reference| <=
    /// tolerance`, `max` for `measured <= reference + tolerance`, `min` for
    /// `measured >= reference - tolerance`.
    pub rule: &'static str,
    pub pass: bool,
}

impl Measurement {
    pub fn within(
        quantity: impl Into<String>,
        measured: f64,
        reference: f64,
        tolerance: f64,
    ) -> Self {
        let pass = (measured - reference).abs() <= tolerance;
        Self::new(quantity, measured, reference, tolerance, "abs", pass)
    }

    pub fn at_most(
        quantity: impl Into<String>,
        measured: f64,
        reference: f64,
        tolerance: f64,
    ) -> Self {
        let pass = measured <= reference + tolerance;
        Self::new(quantity, measured, reference, tolerance, "max", pass)
    }

    pub fn at_least(
        quantity: impl Into<String>,
        measured: f64,
        reference: f64,
        tolerance: f64,
    ) -> Self {
        let pass = measured >= reference - tolerance;
        Self::new(quantity, measured, reference, tolerance, "min", pass)
    }

    fn new(
        quantity: impl Into<String>,
        measured: f64,
        reference: f64,
        tolerance: f64,
        rule: &'static str,
        pass: bool,
    ) -> Self {
        Measurement {
            quantity: quantity.into(),
            measured,
            reference,
            tolerance,
            rule,
            pass: pass && measured.is_finite(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub id: u8,
    pub name: &'static str,
    pub measurements: Vec<Measurement>,
    pub runtime_secs: f64,
    pub runtime_limit_secs: f64,
    pub error: Option<String>,
    pub pass: bool,
}

impl Check {
    /// `PASS [ 6] name (12.3 s / 900 s)`.
    pub fn summary_line(&self) -> String {
        format!(
            "{} [{:>2}] {} ({:.2} s / {} s)",
            if self.pass { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.runtime_secs,
            self.runtime_limit_secs
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    pub checks: Vec<Check>,
    pub pass: bool,
}

impl VerificationReport {
    pub fn new(checks: Vec<Check>) -> Self {
        let pass = checks.iter().all(|c| c.pass);
        VerificationReport { checks, pass }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for c in &self.checks {
            let _ = writeln!(out, "{}", c.summary_line());
            for m in &c.measurements {
                let _ = writeln!(
                    out,
                    "    {} {}: measured {:e}, reference {:e}, tolerance {:e} ({})",
                    if m.pass { "ok  " } else { "FAIL" },
                    m.quantity,
                    m.measured,
                    m.reference,
                    m.tolerance,
                    m.rule
                );
            }
            if let Some(e) = &c.error {
                let _ = writeln!(out, "    error: {e}");
            }
        }
        let _ = writeln!(out, "overall: {}", if self.pass { "PASS" } else { "FAIL" });
        out
    }
}

type CheckFn = fn() -> Result<Vec<Measurement>>;

/// `(id, name, runtime budget in seconds, body)`.
pub const CRITERIA: [(u8, &str, u64, CheckFn); 12] = [
    (1, "hydrodynamic stationarity (voter)", 5, stationarity),
    (
        2,
        "closed-form exponential growth (bcpp)",
        5,
        bcpp_exponential,
    ),
    (
        3,
        "moment engine agrees with the simulator",
        120,
        moments_vs_simulator,
    ),
    (4, "covariance decay slope", 120, decay_slope),
    (5, "law of large numbers ladders", 600, lln_ladders),
    (6, "fluctuation variance", 900, clt_variance),
    (7, "quadratic form nonnegativity", 60, form_nonnegativity),
    (8, "operator identities", 10, operator_identities),
    (
        9,
        "two-urn moment matrices and null vectors",
        1,
        moment_matrices,
    ),
    (
        10,
        "exclusion conserves the total",
        30,
        exclusion_conservation,
    ),
    (11, "solver convergence orders", 10, solver_orders),
    (12, "OU sampler consistency", 120, ou_consistency),
];

/// Runs one criterion by number.
pub fn run_check(id: u8) -> Result<Check> {
    let (id, name, limit, body) = CRITERIA
        .iter()
        .copied()
        .find(|c| c.0 == id)
        .ok_or_else(|| Error::invalid(format!("no acceptance check numbered {id}")))?;
    let start = Instant::now();
    let outcome = body();
    let runtime = start.elapsed();
    let within_budget = runtime <= Duration::from_secs(limit);
    let (measurements, error) = match outcome {
        Ok(m) => (m, None),
        Err(e) => (Vec::new(), Some(e.to_string())),
    };
    let pass = error.is_none()
        && !measurements.is_empty()
        && measurements.iter().all(|m| m.pass)
        && within_budget;
    Ok(Check {
        id,
        name,
        measurements,
        runtime_secs: runtime.as_secs_f64(),
        runtime_limit_secs: limit as f64,
        error,
        pass,
    })
}

/// Runs the selected criteria (all when `ids` is empty) in order.
pub fn run_suite(ids: &[u8]) -> Result<VerificationReport> {
    let selected: Vec<u8> = if ids.is_empty() {
        CRITERIA.iter().map(|c| c.0).collect()
    } else {
        ids.to_vec()
    };
    let checks = selected.into_iter().map(run_check).collect::<Result<_>>()?;
    Ok(VerificationReport::new(checks))
}

fn voter() -> ModelSpec {
    ModelSpec::preset(PresetName::Voter, "1", "0", "0.5").expect("voter preset")
}

fn exclusion() -> ModelSpec {
    ModelSpec::preset(PresetName::Exclusion, "1", "0", "0.25 + 0.5*u").expect("exclusion preset")
}

fn bcpp() -> ModelSpec {
    ModelSpec::preset(PresetName::Bcpp, "1", "0.5", "0.5").expect("bcpp preset")
}

fn presets() -> [(&'static str, ModelSpec); 3] {
    [
        ("voter", voter()),
        ("exclusion", exclusion()),
        ("bcpp", bcpp()),
    ]
}

/// Presets with position-dependent coefficients for the algebraic checks.
fn varying_presets() -> [(&'static str, ModelSpec); 3] {
    let phi = "0.25 + 0.5*u";
    [
        (
            "voter",
            ModelSpec::preset(PresetName::Voter, "1 + u*v", "0", phi).expect("voter preset"),
        ),
        (
            "exclusion",
            ModelSpec::preset(PresetName::Exclusion, "1 + u*v", "0", phi)
                .expect("exclusion preset"),
        ),
        (
            "bcpp",
            ModelSpec::preset(PresetName::Bcpp, "1 + u*v", "0.5 + 0.5*u", phi)
                .expect("bcpp preset"),
        ),
    ]
}

fn random_grid_function(rng: &mut impl Rng, m: usize) -> GridFunction {
    GridFunction::new((0..m).map(|_| rng.random_range(-1.0..1.0)).collect())
}

const FINE_DT: f64 = 1e-3;

fn stationarity() -> Result<Vec<Measurement>> {
    let model = GridModel::new(&voter(), DEFAULT_GRID)?;
    let traj = solve_rho(&model, 2.0, FINE_DT)?;
    let half = GridFunction::constant(DEFAULT_GRID, 0.5);
    let sup = traj
        .rho
        .iter()
        .map(|r| r.sup_distance(&half))
        .fold(0.0, f64::max);
    Ok(vec![Measurement::at_most(
        "sup_{t<=2, u} |rho(t,u) - 0.5|",
        sup,
        0.0,
        1e-10,
    )])
}

fn bcpp_rho_error(dt: f64) -> Result<f64> {
    let model = GridModel::new(&bcpp(), DEFAULT_GRID)?;
    let traj = solve_rho(&model, 1.0, dt)?;
    let exact = GridFunction::constant(DEFAULT_GRID, 0.5 * 0.5f64.exp());
    Ok(traj.rho_at(1.0)?.sup_distance(&exact))
}

fn bcpp_exponential() -> Result<Vec<Measurement>> {
    Ok(vec![Measurement::at_most(
        "sup_u |rho(1,u) - 0.5 e^0.5|",
        bcpp_rho_error(FINE_DT)?,
        0.0,
        1e-6,
    )])
}

fn moments_vs_simulator() -> Result<Vec<Measurement>> {
    let (n, replicas) = (32, 10_000);
    let spec = voter();
    let est = pair_moments(&spec, n, replicas, 1.0, 3)?;
    let exact = &evolve_moments(&spec, n, 1.0, FINE_DT, &[1.0])?.tables[0];
    let mut z = Vec::with_capacity(n + n * n);
    for i in 0..n {
        z.push((est.mean[i] - exact.mean[i]).abs() / est.mean_stderr[i]);
    }
    for k in 0..n * n {
        z.push((est.second[k] - exact.fhat[k]).abs() / est.second_stderr[k]);
    }
    let max_z = z.iter().copied().fold(0.0, f64::max);
    let beyond3 = z.iter().filter(|&&x| x > 3.0).count() as f64 / z.len() as f64;
    Ok(vec![
        Measurement::at_most("max |estimate - exact| / stderr", max_z, 4.0, 0.0),
        Measurement::at_most("fraction beyond 3 stderr", beyond3, 0.01, 0.0),
    ])
}

fn decay_slope() -> Result<Vec<Measurement>> {
    let report = covariance_decay(&voter(), &[8, 16, 32, 64], 1.0, 1e-2)?;
    let slope = report
        .fitted_slope
        .ok_or_else(|| Error::Numerical("covariance discrepancy vanished".into()))?;
    Ok(vec![Measurement::within(
        "fitted log-log slope",
        slope,
        -1.0,
        0.3,
    )])
}

fn lln_ladders() -> Result<Vec<Measurement>> {
    let functions = TestFunctionSet::parse(&["u"], &["u*v"])?;
    let mut out = Vec::new();
    for (name, spec) in presets() {
        let model = GridModel::new(&spec, DEFAULT_GRID)?;
        let traj = solve_densities(&model, 1.0, FINE_DT)?;
        let ladder = lln_ladder(
            &spec,
            &[32, 64, 128],
            2000,
            &[1.0],
            &functions,
            5,
            &model,
            &traj,
        )?;
        for row in ladder {
            // Ratio of consecutive MSEs; strict decrease means every ratio is below 1.
            let worst = row.mse.windows(2).map(|w| w[1] / w[0]).fold(0.0, f64::max);
            let mut m = Measurement::at_most(
                format!(
                    "{name} {}({}) MSE ratio along n=32,64,128",
                    row.quantity.as_str(),
                    row.testfn
                ),
                worst,
                1.0,
                0.0,
            );
            m.pass &= row.strictly_decreasing;
            out.push(m);
        }
    }
    Ok(out)
}

fn clt_variance() -> Result<Vec<Measurement>> {
    let functions = TestFunctionSet::parse(&["1", "u", "u*u"], &[])?;
    let mut out = Vec::new();
    for (name, spec) in presets() {
        let model = GridModel::new(&spec, DEFAULT_GRID)?;
        let traj = solve_densities(&model, 1.0, FINE_DT)?;
        if name == "voter" {
            let lv = limit_variance(
                &model,
                &GridFunction::constant(DEFAULT_GRID, 1.0),
                1.0,
                FINE_DT,
                &traj,
            )?;
            out.push(Measurement::within(
                "voter limit_variance(1) against 0.75",
                lv,
                0.75,
                1e-3,
            ));
        }
        for c in fluctuation_variance_check(&spec, 256, 10_000, 1.0, &functions, 6, &model, &traj)?
        {
            out.push(Measurement::within(
                format!("{name} Var V_1({})", c.testfn),
                c.summary.variance,
                c.reference,
                0.05 * c.reference + 4.0 * c.stderr,
            ));
        }
    }
    Ok(out)
}

fn form_nonnegativity() -> Result<Vec<Measurement>> {
    let mut out = Vec::new();
    for (k, (name, spec)) in varying_presets().into_iter().enumerate() {
        let model = GridModel::new(&spec, DEFAULT_GRID)?;
        let traj = solve_densities(&model, 1.0, 1e-2)?;
        let th = traj.varthetas()?;
        let mut rng = substream(7, k as u64);
        let mut worst = f64::INFINITY;
        for _ in 0..100 {
            let f = random_grid_function(&mut rng, DEFAULT_GRID);
            let scale = f.sup_norm().powi(2);
            for s in 1..=10 {
                let idx = traj.index_of(s as f64 / 10.0)?;
                let q = model.quadratic_form(&f, &traj.rho[idx], &th[idx])?;
                worst = worst.min(q / scale);
            }
        }
        out.push(Measurement::at_least(
            format!("{name} min [f,f]_s / |f|^2"),
            worst,
            0.0,
            1e-10,
        ));
    }
    Ok(out)
}

fn operator_identities() -> Result<Vec<Measurement>> {
    let mut out = Vec::new();
    for (k, (name, spec)) in varying_presets().into_iter().enumerate() {
        let model = GridModel::new(&spec, DEFAULT_GRID)?;
        let mut rng = substream(8, k as u64);
        let (mut sum_gap, mut p1_gap) = (0.0f64, 0.0f64);
        for _ in 0..20 {
            let f = random_grid_function(&mut rng, DEFAULT_GRID);
            let p2 = model.p2(&f)?;
            let mut sum = model.pk(3, &f)?;
            for j in 4..=7 {
                sum = &sum + &model.pk(j, &f)?;
            }
            sum_gap = sum_gap.max(p2.sup_distance(&sum));
            p1_gap = p1_gap.max(p2.sup_distance(&model.p1(&f)?) / f.sup_norm());
        }
        out.push(Measurement::at_most(
            format!("{name} |P2 f - (P3+...+P7) f|"),
            sum_gap,
            0.0,
            0.0,
        ));
        out.push(Measurement::at_most(
            format!("{name} |P2 f - P1 f| / |f|"),
            p1_gap,
            0.0,
            1e-12,
        ));
    }
    Ok(out)
}

fn moment_matrices() -> Result<Vec<Measurement>> {
    let spec = voter();
    let mut out = Vec::new();
    for (label, mat) in [("M", build_m(&spec, 2)?), ("Mhat", build_mhat(&spec, 2)?)] {
        let row = mat.row(0, 1);
        let expected = [((0, 0), 0.5), ((1, 1), 0.5), ((0, 1), -1.0)];
        let mismatch = row.len() != expected.len()
            || expected.iter().any(|&(col, v)| mat.get((0, 1), col) != v);
        out.push(Measurement::at_most(
            format!("{label} row (1,2) entries differing from (1/2, 1/2, -1)"),
            if mismatch { 1.0 } else { 0.0 },
            0.0,
            0.0,
        ));
    }
    for n in [2, 3, 8] {
        let ones = vec![1.0; n * n];
        for (label, mat) in [("M", build_m(&spec, n)?), ("Mhat", build_mhat(&spec, n)?)] {
            let residual = mat.apply(&ones)?.iter().fold(0.0f64, |a, x| a.max(x.abs()));
            out.push(Measurement::at_most(
                format!("|{label} 1| at n={n}"),
                residual,
                0.0,
                1e-12,
            ));
        }
    }
    Ok(out)
}

fn exclusion_conservation() -> Result<Vec<Measurement>> {
    use rayon::prelude::*;
    let sim = Simulator::new(&exclusion(), 64)?;
    let times: Vec<f64> = (0..=20).map(|k| k as f64 / 10.0).collect();
    let violations: usize = (0..1000u64)
        .into_par_iter()
        .map(|r| -> Result<usize> {
            let mut rng = substream(10, r);
            let initial = sim.initial_state(&mut rng);
            let total = initial.total();
            let traj = sim.run_from(&mut rng, initial, 2.0, &times, |_, _| {})?;
            Ok(traj.snapshots.iter().filter(|s| s.total() != total).count())
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .sum();
    Ok(vec![Measurement::at_most(
        "snapshots whose total differs from the initial total",
        violations as f64,
        0.0,
        0.0,
    )])
}

fn solver_orders() -> Result<Vec<Measurement>> {
    let ratio = bcpp_rho_error(0.1)? / bcpp_rho_error(0.05)?;
    let quad = |m: usize| (GridFunction::from_fn(m, |u| u * u * u).integral() - 0.25).abs();
    Ok(vec![
        Measurement::at_least("RK4 error ratio under dt halving", ratio, 12.0, 0.0),
        Measurement::at_least(
            "midpoint error ratio under m doubling",
            quad(16) / quad(32),
            3.5,
            0.0,
        ),
    ])
}

fn ou_consistency() -> Result<Vec<Measurement>> {
    let mut out = Vec::new();
    let replicas = 10_000;
    for (k, (name, spec)) in presets().into_iter().enumerate() {
        let model = GridModel::new(&spec, DEFAULT_GRID)?;
        let traj = solve_densities(&model, 1.0, FINE_DT)?;
        let f = GridFunction::from_fn(DEFAULT_GRID, |u| u);
        let lv = limit_variance(&model, &f, 1.0, FINE_DT, &traj)?;
        let sample = sample_limit_ou(&model, &traj, &f, 1.0, FINE_DT, replicas, 12 + k as u64)?;
        let se = sample.summary.variance_stderr(lv);
        out.push(Measurement::within(
            format!("{name} OU Var V_1(u)"),
            sample.summary.variance,
            lv,
            4.0 * se,
        ));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn report_aggregates_pass_flags() {
        let ok = run_check(9).unwrap();
        assert!(ok.pass, "{ok:?}");
        let mut bad = ok.clone();
        bad.pass = false;
        assert!(!VerificationReport::new(vec![ok.clone(), bad]).pass);
        let report = VerificationReport::new(vec![ok]);
        assert!(report.to_text().starts_with("PASS [ 9]"));
        assert!(report.to_json().unwrap().contains("\"pass\": true"));
    }

    #[test]
    fn unknown_check_is_an_error() {
        assert!(run_check(13).is_err());
    }

    #[test]
    fn measurement_rules() {
        assert!(Measurement::within("x", 1.0, 1.1, 0.2).pass);
        assert!(!Measurement::at_most("x", 1.0, 0.5, 0.1).pass);
        assert!(Measurement::at_least("x", 1.0, 0.5, 0.0).pass);
        assert!(!Measurement::at_least("x", f64::NAN, 0.5, 0.0).pass);
    }
}
