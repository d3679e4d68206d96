use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::Context as _;
use rayon::prelude::*;
use urnflow::fluct::{
    fluctuation_variance_check, lln_ladder, sample_limit_ou, variance_within, write_report_csv,
    zscore, ReportRow, TestFunctionSet,
};
use urnflow::hydro::{
    initial_variance, limit_variance, solve_densities, write_density_csv, write_k1_csv,
    write_k2_csv, DensityTrajectory, GridFunction, GridModel,
};
use urnflow::model::ModelSpec;
use urnflow::moments::{covariance_decay, evolve_moments, write_decay_csv, write_moments_csv};
use urnflow::sim::{observe, substream, Simulator, UrnTestFunction};
use urnflow::verify::run_suite;

use crate::config::{ConfigError, ExperimentConfig};

pub struct Context {
    pub cfg: ExperimentConfig,
    pub spec: ModelSpec,
    pub deterministic: bool,
}

impl Context {
    /// Resolves the model, creates the output directory and writes
    /// `effective_config.json` into it.
    pub fn new(cfg: ExperimentConfig, deterministic: bool) -> anyhow::Result<Self> {
        let spec = cfg.model_spec()?;
        fs::create_dir_all(&cfg.out).with_context(|| format!("creating {}", cfg.out.display()))?;
        let mut json = serde_json::to_string_pretty(&cfg)?;
        json.push('\n');
        fs::write(cfg.out.join("effective_config.json"), json)?;
        Ok(Context {
            cfg,
            spec,
            deterministic,
        })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.cfg.out.join(name)
    }

    /// Writes a CSV, preceded by a `# generated_at=` line unless
    /// deterministic output was requested.
    fn write_csv(
        &self,
        name: &str,
        body: impl FnOnce(&mut Vec<u8>) -> urnflow::Result<()>,
    ) -> anyhow::Result<()> {
        let mut buf = Vec::new();
        if !self.deterministic {
            let secs = SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0);
            writeln!(buf, "# generated_at={secs}")?;
        }
        body(&mut buf)?;
        let path = self.path(name);
        fs::write(&path, buf).with_context(|| format!("writing {}", path.display()))?;
        println!("wrote {}", path.display());
        Ok(())
    }

    fn test_functions(&self) -> anyhow::Result<TestFunctionSet> {
        let unary: Vec<&str> = self.cfg.test_functions.iter().map(String::as_str).collect();
        let binary: Vec<&str> = self
            .cfg
            .binary_test_functions
            .iter()
            .map(String::as_str)
            .collect();
        TestFunctionSet::parse(&unary, &binary).map_err(|e| ConfigError(e.to_string()).into())
    }

    fn densities(&self) -> anyhow::Result<(GridModel, DensityTrajectory)> {
        let model = GridModel::new(&self.spec, self.cfg.grid)?;
        let traj = solve_densities(&model, self.cfg.horizon, self.cfg.dt)?;
        Ok((model, traj))
    }
}

pub fn simulate(ctx: &Context) -> anyhow::Result<()> {
    let cfg = &ctx.cfg;
    let times = cfg.snapshot_times();
    let functions = ctx.test_functions()?;
    for &n in &cfg.n_list {
        let sim = Simulator::new(&ctx.spec, n)?;
        let trajectories = (0..cfg.replicas)
            .into_par_iter()
            .map(|r| sim.run(&mut substream(cfg.seed, r as u64), cfg.horizon, &times))
            .collect::<urnflow::Result<Vec<_>>>()?;
        ctx.write_csv(&format!("simulate_n{n}_trajectories.csv"), |out| {
            writeln!(out, "replica,time,urn,value")?;
            for (r, traj) in trajectories.iter().enumerate() {
                for (t, state) in times.iter().zip(&traj.snapshots) {
                    for (i, x) in state.values.iter().enumerate() {
                        writeln!(out, "{r},{t},{},{x}", i + 1)?;
                    }
                }
            }
            Ok(())
        })?;
        let fs: Vec<UrnTestFunction> = functions
            .unary
            .iter()
            .map(|e| UrnTestFunction::from_expr(e, n))
            .collect();
        let unit = UrnTestFunction::from_values(vec![1.0; n]);
        let hs: Vec<Vec<f64>> = functions
            .binary
            .iter()
            .map(|e| {
                (0..n * n)
                    .map(|k| e.eval2((k / n + 1) as f64 / n as f64, (k % n + 1) as f64 / n as f64))
                    .collect()
            })
            .collect();
        ctx.write_csv(&format!("simulate_n{n}_observables.csv"), |out| {
            writeln!(out, "replica,time,observable,testfn,value")?;
            for (r, traj) in trajectories.iter().enumerate() {
                for (t, state) in times.iter().zip(&traj.snapshots) {
                    for (f, expr) in fs.iter().zip(&functions.unary) {
                        let o = observe(state, f, None, None)?;
                        writeln!(out, "{r},{t},mu,{},{}", csv_text(expr.source()), o.mu)?;
                        writeln!(out, "{r},{t},theta,{},{}", csv_text(expr.source()), o.theta)?;
                    }
                    for (h, expr) in hs.iter().zip(&functions.binary) {
                        let o = observe(state, &unit, Some(h), None)?;
                        let omega = o.omega.unwrap_or(f64::NAN);
                        writeln!(out, "{r},{t},omega,{},{omega}", csv_text(expr.source()))?;
                    }
                }
            }
            Ok(())
        })?;
    }
    Ok(())
}

pub fn hydro(ctx: &Context) -> anyhow::Result<()> {
    let times = ctx.cfg.snapshot_times();
    let functions = ctx.test_functions()?;
    let (model, traj) = ctx.densities()?;
    let varthetas = traj.varthetas()?;
    let mut selected = DensityTrajectory {
        dt: traj.dt,
        times: Vec::new(),
        rho: Vec::new(),
        vartheta: Some(Vec::new()),
    };
    for &t in &times {
        let k = traj.index_of(t)?;
        selected.times.push(t);
        selected.rho.push(traj.rho[k].clone());
        if let Some(v) = selected.vartheta.as_mut() {
            v.push(varthetas[k].clone());
        }
    }
    ctx.write_csv("density.csv", |out| write_density_csv(&selected, out))?;
    let last = traj.index_of(ctx.cfg.horizon)?;
    let (k1, k2) = model.k_fields(&traj.rho[last], &varthetas[last])?;
    ctx.write_csv("k1.csv", |out| write_k1_csv(&k1, out))?;
    ctx.write_csv("k2.csv", |out| write_k2_csv(&k2, out))?;
    let mut rows = Vec::new();
    for expr in &functions.unary {
        let f = GridFunction::from_expr(expr, model.m());
        let v0 = initial_variance(&model, &f)?;
        for &t in &times {
            rows.push((
                expr.source().to_string(),
                t,
                v0,
                limit_variance(&model, &f, t, ctx.cfg.dt, &traj)?,
            ));
        }
    }
    ctx.write_csv("variance.csv", |out| {
        writeln!(out, "testfn,time,initial_variance,limit_variance")?;
        for (name, t, v0, v) in &rows {
            writeln!(out, "{},{t},{v0},{v}", csv_text(name))?;
        }
        Ok(())
    })
}

pub fn moments(ctx: &Context) -> anyhow::Result<()> {
    let cfg = &ctx.cfg;
    let times = cfg.snapshot_times();
    for &n in &cfg.n_list {
        let traj = evolve_moments(&ctx.spec, n, cfg.horizon, cfg.dt, &times)?;
        ctx.write_csv(&format!("moments_n{n}.csv"), |out| {
            write_moments_csv(&traj, out)
        })?;
    }
    let report = covariance_decay(&ctx.spec, &cfg.n_list, cfg.horizon, cfg.dt)?;
    ctx.write_csv("decay.csv", |out| write_decay_csv(&report, out))
}

pub fn fluct(ctx: &Context) -> anyhow::Result<()> {
    let cfg = &ctx.cfg;
    if cfg.replicas < 2 {
        return Err(ConfigError("fluct needs at least 2 replicas".into()).into());
    }
    let times = cfg.snapshot_times();
    let functions = ctx.test_functions()?;
    let (model, traj) = ctx.densities()?;
    let mut rows: Vec<ReportRow> = Vec::new();
    let ladder = lln_ladder(
        &ctx.spec,
        &cfg.n_list,
        cfg.replicas,
        &times,
        &functions,
        cfg.seed,
        &model,
        &traj,
    )?;
    for row in &ladder {
        rows.extend(row.report_rows(cfg.replicas));
    }
    for &n in &cfg.n_list {
        let checks = fluctuation_variance_check(
            &ctx.spec,
            n,
            cfg.replicas,
            cfg.horizon,
            &functions,
            cfg.seed,
            &model,
            &traj,
        )?;
        for c in checks {
            rows.push(c.report_row());
            rows.push(ReportRow {
                quantity: "mean_v".into(),
                empirical: c.summary.mean,
                reference: 0.0,
                stderr: c.summary.stderr,
                zscore: zscore(c.summary.mean, 0.0, c.summary.stderr),
                pass: c.centered,
                ..c.report_row()
            });
        }
    }
    if model.preset().is_some() {
        for expr in &functions.unary {
            let f = GridFunction::from_expr(expr, model.m());
            let reference = limit_variance(&model, &f, cfg.horizon, cfg.dt, &traj)?;
            let sample = sample_limit_ou(
                &model,
                &traj,
                &f,
                cfg.horizon,
                cfg.dt,
                cfg.replicas,
                cfg.seed,
            )?;
            let stderr = sample.summary.variance_stderr(reference);
            rows.push(ReportRow {
                n: 0,
                replicas: cfg.replicas,
                time: cfg.horizon,
                testfn: expr.source().to_string(),
                quantity: "ou_var_v".into(),
                empirical: sample.summary.variance,
                reference,
                stderr,
                zscore: zscore(sample.summary.variance, reference, stderr),
                pass: variance_within(sample.summary.variance, reference, stderr),
            });
        }
    }
    ctx.write_csv("fluct_report.csv", |out| write_report_csv(&rows, out))
}

pub fn verify(ctx: &Context) -> anyhow::Result<ExitCode> {
    let report = run_suite(&ctx.cfg.checks)?;
    let text = report.to_text();
    print!("{text}");
    fs::write(ctx.path("verification.txt"), &text)?;
    fs::write(ctx.path("verification.json"), report.to_json()? + "\n")?;
    Ok(if report.pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(4)
    })
}

fn csv_text(s: &str) -> String {
    if s.contains([',', '"']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
