use crate::error::{Error, Result};
use crate::numeric::{ensure_finite, lattice_index, step_count, Rk4};

use super::grid::{same_grid, GridFunction};
use super::operators::GridModel;

/// Density `rho(t, .)` and, once solved, second-moment density
/// `vartheta(t, .)` at the times `k * dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityTrajectory {
    pub dt: f64,
    pub times: Vec<f64>,
    pub rho: Vec<GridFunction>,
    pub vartheta: Option<Vec<GridFunction>>,
}

impl DensityTrajectory {
    pub fn horizon(&self) -> f64 {
        *self.times.last().unwrap_or(&0.0)
    }

    pub fn index_of(&self, t: f64) -> Result<usize> {
        lattice_index(t, self.dt, self.times.len())
    }

    pub fn rho_at(&self, t: f64) -> Result<&GridFunction> {
        Ok(&self.rho[self.index_of(t)?])
    }

    pub fn vartheta_at(&self, t: f64) -> Result<&GridFunction> {
        let k = self.index_of(t)?;
        self.vartheta
            .as_ref()
            .map(|v| &v[k])
            .ok_or_else(|| Error::invalid("second-moment density has not been solved"))
    }

    pub fn varthetas(&self) -> Result<&[GridFunction]> {
        self.vartheta
            .as_deref()
            .ok_or_else(|| Error::invalid("second-moment density has not been solved"))
    }
}

fn lattice(steps: usize, dt: f64) -> Vec<f64> {
    (0..=steps).map(|k| k as f64 * dt).collect()
}

/// RK4 for `rho' = P8 rho`, `rho(0) = phi`.
pub fn solve_rho(model: &GridModel, horizon: f64, dt: f64) -> Result<DensityTrajectory> {
    let steps = step_count(horizon, dt)?;
    let op = model.p8_operator();
    let mut y = model.phi().values().to_vec();
    let mut rk = Rk4::new(model.m());
    let mut rho = Vec::with_capacity(steps + 1);
    rho.push(GridFunction::new(y.clone()));
    for k in 0..steps {
        rk.step(k as f64 * dt, dt, &mut y, |_, x, out| op.apply_into(x, out));
        ensure_finite(&y, "density solver")?;
        rho.push(GridFunction::new(y.clone()));
    }
    Ok(DensityTrajectory {
        dt,
        times: lattice(steps, dt),
        rho,
        vartheta: None,
    })
}

/// RK4 for `vartheta' = P9 vartheta + l1_hat(rho(t))`, `vartheta(0) = phi`,
/// with `rho` interpolated linearly at half steps.
pub fn solve_vartheta(
    model: &GridModel,
    rho: &DensityTrajectory,
    horizon: f64,
    dt: f64,
) -> Result<Vec<GridFunction>> {
    let steps = step_count(horizon, dt)?;
    if (rho.dt - dt).abs() > 1e-12 * dt || rho.times.len() < steps + 1 {
        return Err(Error::invalid(format!(
            "density trajectory (dt {}, {} points) does not cover [0, {horizon}] at step {dt}",
            rho.dt,
            rho.times.len()
        )));
    }
    if let Some(r) = rho.rho.first() {
        same_grid(model.m(), r.m())?;
    }
    let m = model.m();
    let op = model.p9_operator();
    let mut y = model.phi().values().to_vec();
    let mut rk = Rk4::new(m);
    let mut out = Vec::with_capacity(steps + 1);
    let mut rho_t = vec![0.0; m];
    let mut source = vec![0.0; m];
    out.push(GridFunction::new(y.clone()));
    for k in 0..steps {
        let t0 = k as f64 * dt;
        let (r0, r1) = (rho.rho[k].values(), rho.rho[k + 1].values());
        rk.step(t0, dt, &mut y, |t, x, dx| {
            let w = ((t - t0) / dt).clamp(0.0, 1.0);
            for ((r, a), b) in rho_t.iter_mut().zip(r0).zip(r1) {
                *r = (1.0 - w) * a + w * b;
            }
            op.apply_into(x, dx);
            model.l1_hat_into(&rho_t, &mut source);
            for (d, s) in dx.iter_mut().zip(&source) {
                *d += s;
            }
        });
        ensure_finite(&y, "second-moment solver")?;
        out.push(GridFunction::new(y.clone()));
    }
    Ok(out)
}

/// Solve both densities on `[0, horizon]`.
pub fn solve_densities(model: &GridModel, horizon: f64, dt: f64) -> Result<DensityTrajectory> {
    let mut traj = solve_rho(model, horizon, dt)?;
    traj.vartheta = Some(solve_vartheta(model, &traj, horizon, dt)?);
    Ok(traj)
}

/// `e^{t P1} f` via RK4.
pub fn semigroup_apply(
    model: &GridModel,
    f: &GridFunction,
    t: f64,
    dt: f64,
) -> Result<GridFunction> {
    let steps = step_count(t, dt)?;
    same_grid(model.m(), f.m())?;
    let op = model.p1_operator();
    let mut y = f.values().to_vec();
    let mut rk = Rk4::new(model.m());
    for k in 0..steps {
        rk.step(k as f64 * dt, dt, &mut y, |_, x, out| op.apply_into(x, out));
        ensure_finite(&y, "semigroup")?;
    }
    Ok(GridFunction::new(y))
}

/// `e^{tau P1} f` at every `tau = k * dt` up to `t`.
pub fn semigroup_path(
    model: &GridModel,
    f: &GridFunction,
    t: f64,
    dt: f64,
) -> Result<Vec<GridFunction>> {
    let steps = step_count(t, dt)?;
    same_grid(model.m(), f.m())?;
    let op = model.p1_operator();
    let mut y = f.values().to_vec();
    let mut rk = Rk4::new(model.m());
    let mut path = Vec::with_capacity(steps + 1);
    path.push(f.clone());
    for k in 0..steps {
        rk.step(k as f64 * dt, dt, &mut y, |_, x, out| op.apply_into(x, out));
        ensure_finite(&y, "semigroup")?;
        path.push(GridFunction::new(y.clone()));
    }
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelSpec, PresetName};

    const M: usize = 32;

    fn preset(name: PresetName, lambda: &str, b: &str, phi: &str) -> GridModel {
        GridModel::new(&ModelSpec::preset(name, lambda, b, phi).unwrap(), M).unwrap()
    }

    /// Fine-step scalar RK4 of `x' = g(t, x)`, independent of the grid code.
    fn scalar_rk4(x0: f64, t: f64, steps: usize, g: impl Fn(f64, f64) -> f64) -> f64 {
        let h = t / steps as f64;
        let mut x = x0;
        for k in 0..steps {
            let s = k as f64 * h;
            let k1 = g(s, x);
            let k2 = g(s + h / 2.0, x + h / 2.0 * k1);
            let k3 = g(s + h / 2.0, x + h / 2.0 * k2);
            let k4 = g(s + h, x + h * k3);
            x += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        x
    }

    #[test]
    fn voter_constant_profile_is_stationary() {
        let model = preset(PresetName::Voter, "1", "0", "0.3");
        let traj = solve_densities(&model, 1.0, 1e-2).unwrap();
        let th = traj.varthetas().unwrap();
        for (r, t) in traj.rho.iter().zip(th) {
            assert!(r.values().iter().all(|x| (x - 0.3).abs() < 1e-12));
            assert!(r.sup_distance(t) < 1e-12);
        }
    }

    #[test]
    fn voter_vartheta_tracks_rho_for_varying_data() {
        let model = preset(PresetName::Voter, "1 + u*v", "0", "0.2 + 0.6*u");
        let traj = solve_densities(&model, 1.0, 1e-3).unwrap();
        let th = traj.varthetas().unwrap();
        let d = traj
            .rho
            .iter()
            .zip(th)
            .map(|(r, t)| r.sup_distance(t))
            .fold(0.0, f64::max);
        assert!(d <= 1e-8, "{d}");
    }

    #[test]
    fn frozen_without_rates() {
        let spec = ModelSpec::from_sources("0", "1", "0", "0", "1", "0", "1", "u*(1-u)").unwrap();
        let model = GridModel::new(&spec, M).unwrap();
        let traj = solve_densities(&model, 0.5, 0.1).unwrap();
        for (r, t) in traj.rho.iter().zip(traj.varthetas().unwrap()) {
            assert_eq!(r, model.phi());
            assert_eq!(t, model.phi());
        }
    }

    #[test]
    fn bcpp_rho_is_exponential() {
        let model = preset(PresetName::Bcpp, "1.2", "0.5", "0.4");
        let traj = solve_rho(&model, 1.0, 1e-3).unwrap();
        let exact = 0.4 * 0.7f64.exp();
        let rel = traj
            .rho_at(1.0)
            .unwrap()
            .values()
            .iter()
            .map(|x| (x - exact).abs() / exact)
            .fold(0.0, f64::max);
        assert!(rel <= 1e-8, "{rel}");
    }

    #[test]
    fn bcpp_vartheta_matches_scalar_ode() {
        let (l0, b0, p) = (1.2, 0.5, 0.4);
        let model = preset(PresetName::Bcpp, "1.2", "0.5", "0.4");
        let traj = solve_densities(&model, 1.0, 1e-3).unwrap();
        let a = l0 - b0;
        let exact = scalar_rk4(p, 1.0, 100_000, |s, x| {
            let rho = p * (a * s).exp();
            a * x + 2.0 * l0 * rho * rho
        });
        let got = traj.vartheta_at(1.0).unwrap();
        assert!(
            got.values().iter().all(|x| (x - exact).abs() <= 1e-6),
            "{exact}"
        );
    }

    #[test]
    fn semigroup_examples() {
        let model = preset(PresetName::Bcpp, "1.5", "0.25", "0.5");
        let f = GridFunction::from_fn(M, |u| u);
        assert_eq!(semigroup_apply(&model, &f, 0.0, 0.1).unwrap(), f);
        let ones = GridFunction::constant(M, 1.0);
        let g = semigroup_apply(&model, &ones, 1.0, 1e-3).unwrap();
        let exact = 1.25f64.exp();
        assert!(g
            .values()
            .iter()
            .all(|x| ((x - exact) / exact).abs() <= 1e-8));
        let voter = preset(PresetName::Voter, "2", "0", "0.5");
        let g = semigroup_apply(&voter, &ones, 1.0, 1e-2).unwrap();
        assert!(g.values().iter().all(|x| (x - 1.0).abs() < 1e-13));
        let path = semigroup_path(&model, &ones, 1.0, 1e-3).unwrap();
        assert_eq!(path.len(), 1001);
        assert_eq!(
            path[1000],
            semigroup_apply(&model, &ones, 1.0, 1e-3).unwrap()
        );
    }

    #[test]
    fn rk4_is_fourth_order() {
        let model = preset(PresetName::Bcpp, "1", "0.5", "0.5");
        let exact = 0.5 * 0.5f64.exp();
        let err = |dt: f64| {
            (solve_rho(&model, 1.0, dt)
                .unwrap()
                .rho
                .last()
                .unwrap()
                .values()[0]
                - exact)
                .abs()
        };
        let ratio = err(0.1) / err(0.05);
        assert!(ratio >= 12.0, "{ratio}");
    }

    #[test]
    fn rejects_bad_steps_and_misaligned_trajectories() {
        let model = preset(PresetName::Voter, "1", "0", "0.5");
        assert!(solve_rho(&model, 1.0, 0.0).is_err());
        assert!(solve_rho(&model, 1.0, -0.1).is_err());
        let traj = solve_rho(&model, 1.0, 0.1).unwrap();
        assert!(solve_vartheta(&model, &traj, 1.0, 0.05).is_err());
        assert!(solve_vartheta(&model, &traj, 2.0, 0.1).is_err());
        assert!(traj.vartheta_at(0.5).is_err());
        assert!(traj.rho_at(0.55).is_err());
    }
}
