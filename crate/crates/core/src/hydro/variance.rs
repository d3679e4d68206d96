use crate::error::{Error, Result};
use crate::numeric::{step_count, CompensatedSum};

use super::grid::{same_grid, GridFunction};
use super::operators::GridModel;
use super::solve::{semigroup_path, DensityTrajectory};

/// Variance of the initial fluctuation field paired with `f`.
pub fn initial_variance(model: &GridModel, f: &GridFunction) -> Result<f64> {
    same_grid(model.m(), f.m())?;
    let phi = model.phi().values();
    let s: f64 = f
        .values()
        .iter()
        .zip(phi)
        .map(|(g, p)| g * g * p * (1.0 - p))
        .sum();
    Ok(s / model.m() as f64)
}

/// Variance of the limiting fluctuation field at time `t` paired with `f`:
/// the transported initial variance plus the accumulated noise
/// `int_0^t [g(t-s), g(t-s)]_s ds` with `g(tau) = e^{tau P1} f`, the time
/// integral taken by the composite trapezoid rule on the step lattice.
pub fn limit_variance(
    model: &GridModel,
    f: &GridFunction,
    t: f64,
    dt: f64,
    traj: &DensityTrajectory,
) -> Result<f64> {
    let steps = step_count(t, dt)?;
    let path = semigroup_path(model, f, t, dt)?;
    let varthetas = traj.varthetas()?;
    let mut noise = CompensatedSum::new();
    for k in (0..=steps).filter(|_| steps > 0) {
        let s = k as f64 * dt;
        let idx = traj.index_of(s)?;
        let g = &path[steps - k];
        let q =
            model.quadratic_form_raw(g.values(), traj.rho[idx].values(), varthetas[idx].values());
        let w = if k == 0 || k == steps { 0.5 } else { 1.0 };
        noise.add(w * q);
    }
    let total = initial_variance(model, &path[steps])? + dt * noise.value();
    if total < -1e-10 {
        return Err(Error::Numerical(format!(
            "limit variance is negative ({total:e})"
        )));
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hydro::solve_densities;
    use crate::model::{ModelSpec, PresetName};

    const M: usize = 32;

    fn setup(
        name: PresetName,
        lambda: &str,
        b: &str,
        phi: &str,
        t: f64,
        dt: f64,
    ) -> (GridModel, DensityTrajectory) {
        let model = GridModel::new(&ModelSpec::preset(name, lambda, b, phi).unwrap(), M).unwrap();
        let traj = solve_densities(&model, t, dt).unwrap();
        (model, traj)
    }

    #[test]
    fn time_zero_is_the_bernoulli_variance() {
        let (model, traj) = setup(PresetName::Voter, "1", "0", "0.3", 1.0, 0.1);
        let f = GridFunction::from_fn(M, |u| 1.0 + u);
        let ff = f.pairing(&f).unwrap();
        let v = limit_variance(&model, &f, 0.0, 0.1, &traj).unwrap();
        assert!((v - 0.3 * 0.7 * ff).abs() < 1e-14, "{v}");
        assert_eq!(
            limit_variance(&model, &GridFunction::zeros(M), 1.0, 0.1, &traj).unwrap(),
            0.0
        );
    }

    #[test]
    fn voter_hand_value() {
        let (model, traj) = setup(PresetName::Voter, "1", "0", "0.5", 1.0, 1e-3);
        let v = limit_variance(&model, &GridFunction::constant(M, 1.0), 1.0, 1e-3, &traj).unwrap();
        assert!((v - 0.75).abs() < 1e-10, "{v}");
    }

    #[test]
    fn bcpp_matches_scalar_oracle() {
        // With constant coefficients and f = 1 everything stays constant in
        // space: g(tau) = e^{a tau}, rho = p e^{a s}, and the form reduces to
        // (b0 + l0) vartheta(s) g^2.
        let (l0, b0, p) = (1.0, 0.5, 0.5);
        let a = l0 - b0;
        let (model, traj) = setup(PresetName::Bcpp, "1", "0.5", "0.5", 1.0, 1e-3);
        let got =
            limit_variance(&model, &GridFunction::constant(M, 1.0), 1.0, 1e-3, &traj).unwrap();

        let n = 200_000;
        let h = 1.0 / n as f64;
        let mut theta = p;
        let mut integral = 0.0;
        let rhs = |s: f64, x: f64| a * x + 2.0 * l0 * (p * (a * s).exp()).powi(2);
        let integrand = |s: f64, th: f64| (2.0 * a * (1.0 - s)).exp() * (b0 + l0) * th;
        for k in 0..n {
            let s = k as f64 * h;
            let k1 = rhs(s, theta);
            let k2 = rhs(s + h / 2.0, theta + h / 2.0 * k1);
            let k3 = rhs(s + h / 2.0, theta + h / 2.0 * k2);
            let k4 = rhs(s + h, theta + h * k3);
            let next = theta + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            integral += 0.5 * h * (integrand(s, theta) + integrand(s + h, next));
            theta = next;
        }
        let exact = (2.0 * a).exp() * p * (1.0 - p) + integral;
        assert!((got - exact).abs() < 1e-6 * exact, "{got} vs {exact}");
    }

    #[test]
    fn exclusion_constant_test_function_keeps_initial_variance() {
        let (model, traj) = setup(
            PresetName::Exclusion,
            "1 + u*v",
            "0",
            "0.2 + 0.6*u",
            1.0,
            1e-2,
        );
        let f = GridFunction::constant(M, 1.0);
        let v = limit_variance(&model, &f, 1.0, 1e-2, &traj).unwrap();
        let v0 = initial_variance(&model, &f).unwrap();
        assert!((v - v0).abs() < 1e-12, "{v} vs {v0}");
    }
}
