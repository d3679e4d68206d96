//! Grid calculus on `[0, 1]` for the deterministic limit: drift operators,
//! density ODEs, the noise quadratic form and the limit variance.

mod grid;
mod operators;
mod solve;
mod variance;

use std::io::Write;

use crate::error::Result;

pub use grid::{node, nodes, GridBiFunction, GridFunction, DEFAULT_GRID};
pub use operators::{GridModel, IntegralOperator};
pub use solve::{
    semigroup_apply, semigroup_path, solve_densities, solve_rho, solve_vartheta, DensityTrajectory,
};
pub use variance::{initial_variance, limit_variance};

/// CSV `time,node,rho,vartheta`; `vartheta` is empty when not solved.
pub fn write_density_csv<W: Write>(traj: &DensityTrajectory, mut out: W) -> Result<()> {
    writeln!(out, "time,node,rho,vartheta")?;
    for (k, (t, rho)) in traj.times.iter().zip(&traj.rho).enumerate() {
        let m = rho.m();
        for i in 0..m {
            let th = traj
                .vartheta
                .as_ref()
                .map(|v| v[k].values()[i].to_string())
                .unwrap_or_default();
            writeln!(out, "{t},{},{},{th}", node(m, i), rho.values()[i])?;
        }
    }
    Ok(())
}

/// CSV `node,K1`.
pub fn write_k1_csv<W: Write>(k1: &GridFunction, mut out: W) -> Result<()> {
    writeln!(out, "node,K1")?;
    for (i, k) in k1.values().iter().enumerate() {
        writeln!(out, "{},{k}", node(k1.m(), i))?;
    }
    Ok(())
}

/// CSV `node_u,node_v,K2`.
pub fn write_k2_csv<W: Write>(k2: &GridBiFunction, mut out: W) -> Result<()> {
    writeln!(out, "node_u,node_v,K2")?;
    let m = k2.m();
    for i in 0..m {
        for j in 0..m {
            writeln!(out, "{},{},{}", node(m, i), node(m, j), k2.get(i, j))?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelSpec, PresetName};

    #[test]
    fn csv_layouts() {
        let spec = ModelSpec::preset(PresetName::Voter, "1", "0", "0.5").unwrap();
        let model = GridModel::new(&spec, 2).unwrap();
        let traj = solve_densities(&model, 0.2, 0.1).unwrap();
        let mut buf = Vec::new();
        write_density_csv(&traj, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "time,node,rho,vartheta");
        assert_eq!(lines.len(), 1 + 3 * 2);
        assert_eq!(lines[1], "0,0.25,0.5,0.5");

        let (k1, k2) = model
            .k_fields(&traj.rho[0], &traj.varthetas().unwrap()[0])
            .unwrap();
        let mut buf = Vec::new();
        write_k1_csv(&k1, &mut buf).unwrap();
        assert!(String::from_utf8(buf)
            .unwrap()
            .starts_with("node,K1\n0.25,"));
        let mut buf = Vec::new();
        write_k2_csv(&k2, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 5);
        assert!(text.starts_with("node_u,node_v,K2\n0.25,0.25,"));
    }
}
