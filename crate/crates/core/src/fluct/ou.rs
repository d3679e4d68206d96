use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hydro::{initial_variance, semigroup_path, DensityTrajectory, GridFunction, GridModel};
use crate::model::PresetName;
use crate::numeric::step_count;
use crate::sim::substream;

use super::stats::SampleSummary;

/// Squared norm of the preset's noise operator applied to `g` at the state
/// `(rho, vartheta)`:
/// voter `int (int rho(u) l(u,v) + rho(v) l(u,v) - 2 l(u,v) rho(u) rho(v) dv) g(u)^2 du`,
/// exclusion `iint l(u,v) (rho(u) + rho(v) - 2 rho(u) rho(v)) (g(u) - g(v))^2`,
/// bcpp `int (vartheta(u) b(u) + int vartheta(v) l(u,v) dv) g(u)^2 du`.
pub fn preset_noise_norm(
    model: &GridModel,
    g: &GridFunction,
    rho: &GridFunction,
    vartheta: &GridFunction,
) -> Result<f64> {
    let preset = model
        .preset()
        .ok_or_else(|| Error::invalid("noise operators are only available for the presets"))?;
    let m = model.m();
    let inv_m = 1.0 / m as f64;
    let (g, r, th) = (g.values(), rho.values(), vartheta.values());
    let total = match preset {
        PresetName::Voter => (0..m)
            .map(|i| {
                let inner: f64 = (0..m)
                    .map(|j| {
                        let l = model.lambda(i, j);
                        r[i] * l + r[j] * l - 2.0 * l * r[j] * r[i]
                    })
                    .sum::<f64>()
                    * inv_m;
                inner * g[i] * g[i]
            })
            .sum::<f64>(),
        PresetName::Exclusion => (0..m)
            .map(|i| {
                (0..m)
                    .map(|j| {
                        let d = g[i] - g[j];
                        model.lambda(i, j) * (r[i] + r[j] - 2.0 * r[i] * r[j]) * d * d
                    })
                    .sum::<f64>()
                    * inv_m
            })
            .sum::<f64>(),
        PresetName::Bcpp => (0..m)
            .map(|i| {
                let inner: f64 = (0..m).map(|j| th[j] * model.lambda(i, j)).sum::<f64>() * inv_m;
                (th[i] * model.b()[i] + inner) * g[i] * g[i]
            })
            .sum::<f64>(),
    };
    Ok(total * inv_m)
}

/// Samples of the limiting fluctuation field paired with `f` at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct OuSample {
    pub samples: Vec<f64>,
    pub summary: SampleSummary,
    /// Variance the discretised sampler targets exactly.
    pub scheme_variance: f64,
}

/// Euler-Maruyama for the scalar pairing along the backward-evolved test
/// function `g(s) = e^{(t-s) P1} f`:
/// `V_t(f) = V_0(g(0)) + sum_k sqrt(q_k dt) Z_k`, with `q_k` the preset noise
/// norm of `g(s_k)` at `s_k = k dt` (left endpoints) and `V_0` the initial
/// Gaussian.
pub fn sample_limit_ou(
    model: &GridModel,
    traj: &DensityTrajectory,
    f: &GridFunction,
    t: f64,
    dt: f64,
    replicas: usize,
    seed: u64,
) -> Result<OuSample> {
    if replicas < 2 {
        return Err(Error::invalid(format!(
            "need at least 2 replicas, got {replicas}"
        )));
    }
    let steps = step_count(t, dt)?;
    let path = semigroup_path(model, f, t, dt)?;
    let varthetas = traj.varthetas()?;
    let v0 = initial_variance(model, &path[steps])?;
    let mut increments = Vec::with_capacity(steps);
    for k in 0..steps {
        let idx = traj.index_of(k as f64 * dt)?;
        let q = preset_noise_norm(model, &path[steps - k], &traj.rho[idx], &varthetas[idx])?;
        if q < -1e-12 {
            return Err(Error::Numerical(format!("negative noise rate {q:e}")));
        }
        increments.push((q.max(0.0) * dt).sqrt());
    }
    let sd0 = v0.sqrt();
    let samples: Vec<f64> = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let mut rng = substream(seed, r as u64);
            let z0: f64 = StandardNormal.sample(&mut rng);
            let mut v = sd0 * z0;
            for s in &increments {
                let z: f64 = StandardNormal.sample(&mut rng);
                v += s * z;
            }
            v
        })
        .collect();
    let scheme_variance = v0 + increments.iter().map(|s| s * s).sum::<f64>();
    Ok(OuSample {
        summary: SampleSummary::of(&samples),
        samples,
        scheme_variance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hydro::{limit_variance, solve_densities};
    use crate::model::ModelSpec;

    const M: usize = 32;

    fn setup(name: PresetName, lambda: &str, b: &str, phi: &str) -> (GridModel, DensityTrajectory) {
        let model = GridModel::new(&ModelSpec::preset(name, lambda, b, phi).unwrap(), M).unwrap();
        let traj = solve_densities(&model, 1.0, 1e-2).unwrap();
        (model, traj)
    }

    #[test]
    fn noise_norms_agree_with_the_quadratic_form() {
        let f = GridFunction::from_fn(M, |u| (2.0 * u).sin() + 0.3);
        for (name, lambda, b) in [
            (PresetName::Voter, "1 + u*v", "0"),
            (PresetName::Exclusion, "1 + 0.5*u", "0"),
            (PresetName::Bcpp, "1 + u - v", "0.5"),
        ] {
            let (model, traj) = setup(name, lambda, b, "0.3 + 0.4*u");
            let th = traj.varthetas().unwrap();
            for k in [0, 50, 100] {
                let q = preset_noise_norm(&model, &f, &traj.rho[k], &th[k]).unwrap();
                let form = model.quadratic_form(&f, &traj.rho[k], &th[k]).unwrap();
                assert!(
                    (q - form).abs() < 1e-9 * form.abs().max(1.0),
                    "{name}: {q} vs {form}"
                );
            }
        }
    }

    #[test]
    fn zero_test_function_gives_zero() {
        let (model, traj) = setup(PresetName::Voter, "1", "0", "0.5");
        let out =
            sample_limit_ou(&model, &traj, &GridFunction::zeros(M), 1.0, 1e-2, 10, 1).unwrap();
        assert!(out.samples.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn voter_variance_matches_hand_value() {
        let (model, traj) = setup(PresetName::Voter, "1", "0", "0.5");
        let out = sample_limit_ou(
            &model,
            &traj,
            &GridFunction::constant(M, 1.0),
            1.0,
            1e-2,
            10_000,
            2,
        )
        .unwrap();
        let se = out.summary.variance_stderr(0.75);
        assert!(
            (out.summary.variance - 0.75).abs() <= 4.0 * se,
            "{}",
            out.summary.variance
        );
        assert!((out.scheme_variance - 0.75).abs() < 1e-12);
    }

    #[test]
    fn exclusion_constant_function_keeps_initial_variance() {
        let (model, traj) = setup(PresetName::Exclusion, "1 + u*v", "0", "0.2 + 0.6*u");
        let f = GridFunction::constant(M, 1.0);
        let out = sample_limit_ou(&model, &traj, &f, 1.0, 1e-2, 100, 3).unwrap();
        let v0 = initial_variance(&model, &f).unwrap();
        assert!((out.scheme_variance - v0).abs() < 1e-12);
        let lv = limit_variance(&model, &f, 1.0, 1e-2, &traj).unwrap();
        assert!((lv - v0).abs() < 1e-12);
    }

    #[test]
    fn custom_models_are_rejected() {
        let spec = ModelSpec::from_sources("0", "1", "1", "0", "1", "0", "1", "0.5").unwrap();
        let model = GridModel::new(&spec, M).unwrap();
        let traj = solve_densities(&model, 1.0, 0.1).unwrap();
        assert!(sample_limit_ou(
            &model,
            &traj,
            &GridFunction::constant(M, 1.0),
            1.0,
            0.1,
            10,
            0
        )
        .is_err());
    }
}
