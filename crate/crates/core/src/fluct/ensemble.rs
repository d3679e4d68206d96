use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{CoefficientExpr, ModelSpec};
use crate::moments::evolve_means;
use crate::numeric::lattice_index;
use crate::sim::{fluctuation_field, observe, substream, Simulator, UrnTestFunction};

use super::stats::SampleSummary;

/// Named unary test functions `f(u)` and binary test functions `H(u, v)`.
#[derive(Debug, Clone)]
pub struct TestFunctionSet {
    pub unary: Vec<CoefficientExpr>,
    pub binary: Vec<CoefficientExpr>,
}

impl TestFunctionSet {
    pub fn parse(unary: &[&str], binary: &[&str]) -> Result<Self> {
        use crate::model::Arity;
        let parse = |src: &&str, arity| {
            CoefficientExpr::parse(src, arity).map_err(|e| Error::Parse {
                field: "test function".into(),
                source: e,
            })
        };
        Ok(TestFunctionSet {
            unary: unary
                .iter()
                .map(|s| parse(s, Arity::Unary))
                .collect::<Result<_>>()?,
            binary: binary
                .iter()
                .map(|s| parse(s, Arity::Binary))
                .collect::<Result<_>>()?,
        })
    }

    /// `1, u, ..., u^degree` and `H(u, v) = u v`.
    pub fn monomials(degree: usize) -> Self {
        let unary: Vec<String> = (0..=degree)
            .map(|k| match k {
                0 => "1".to_string(),
                1 => "u".to_string(),
                _ => vec!["u"; k].join("*"),
            })
            .collect();
        let refs: Vec<&str> = unary.iter().map(String::as_str).collect();
        Self::parse(&refs, &["u*v"]).expect("monomials parse")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Quantity {
    Mu,
    Theta,
    Omega,
    V,
}

impl Quantity {
    pub fn as_str(self) -> &'static str {
        match self {
            Quantity::Mu => "mu",
            Quantity::Theta => "theta",
            Quantity::Omega => "omega",
            Quantity::V => "v",
        }
    }
}

/// Per-replica values of one observable at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleRecord {
    pub time: f64,
    pub testfn: String,
    pub quantity: Quantity,
    pub samples: Vec<f64>,
}

impl EnsembleRecord {
    pub fn summary(&self) -> SampleSummary {
        SampleSummary::of(&self.samples)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleStats {
    pub n: usize,
    pub replicas: usize,
    pub records: Vec<EnsembleRecord>,
}

impl EnsembleStats {
    pub fn find(&self, time: f64, testfn: &str, quantity: Quantity) -> Option<&EnsembleRecord> {
        self.records.iter().find(|r| {
            (r.time - time).abs() <= 1e-12 * time.abs().max(1.0)
                && r.testfn == testfn
                && r.quantity == quantity
        })
    }
}

/// Exact means `E X_t(i)` at each requested time, on a step lattice `dt`.
pub fn exact_means(spec: &ModelSpec, n: usize, times: &[f64], dt: f64) -> Result<Vec<Vec<f64>>> {
    let horizon = times.iter().copied().fold(0.0, f64::max);
    let all = evolve_means(spec, n, horizon, dt)?;
    times
        .iter()
        .map(|&t| Ok(all[lattice_index(t, dt, all.len())?].clone()))
        .collect()
}

/// Simulate `replicas` independent trajectories and record `mu`, `theta`
/// for every unary test function, `omega` for every binary one, and the
/// fluctuation field `V` when exact `means` (one row per time) are given.
///
/// Replica `r` uses stream `r` of `seed`; records keep replica order.
pub fn run_ensemble(
    spec: &ModelSpec,
    n: usize,
    replicas: usize,
    times: &[f64],
    functions: &TestFunctionSet,
    seed: u64,
    means: Option<&[Vec<f64>]>,
) -> Result<EnsembleStats> {
    if replicas < 2 {
        return Err(Error::invalid(format!(
            "need at least 2 replicas, got {replicas}"
        )));
    }
    if let Some(m) = means {
        if m.len() != times.len() || m.iter().any(|row| row.len() != n) {
            return Err(Error::invalid(
                "mean table does not match the requested times and urns",
            ));
        }
    }
    let horizon = times.iter().copied().fold(0.0, f64::max);
    let sim = Simulator::new(spec, n)?;
    let fs: Vec<UrnTestFunction> = functions
        .unary
        .iter()
        .map(|e| UrnTestFunction::from_expr(e, n))
        .collect();
    let hs: Vec<Vec<f64>> = functions
        .binary
        .iter()
        .map(|e| {
            let mut h = Vec::with_capacity(n * n);
            for i in 1..=n {
                for j in 1..=n {
                    h.push(e.eval2(i as f64 / n as f64, j as f64 / n as f64));
                }
            }
            h
        })
        .collect();

    let unit = UrnTestFunction::from_values(vec![1.0; n]);

    let mut layout = Vec::new();
    for &t in times {
        for f in &functions.unary {
            layout.push((t, f.source().to_string(), Quantity::Mu));
            layout.push((t, f.source().to_string(), Quantity::Theta));
            if means.is_some() {
                layout.push((t, f.source().to_string(), Quantity::V));
            }
        }
        for h in &functions.binary {
            layout.push((t, h.source().to_string(), Quantity::Omega));
        }
    }

    let per_replica: Vec<Vec<f64>> = (0..replicas)
        .into_par_iter()
        .map(|r| -> Result<Vec<f64>> {
            let mut rng = substream(seed, r as u64);
            let traj = sim.run(&mut rng, horizon, times)?;
            let mut row = Vec::with_capacity(layout.len());
            for (k, state) in traj.snapshots.iter().enumerate() {
                for f in &fs {
                    let o = observe(state, f, None, None)?;
                    row.push(o.mu);
                    row.push(o.theta);
                    if let Some(m) = means {
                        row.push(fluctuation_field(&state.values, &m[k], f.values())?);
                    }
                }
                for h in &hs {
                    let o = observe(state, &unit, Some(h), None)?;
                    row.push(o.omega.expect("omega requested"));
                }
            }
            Ok(row)
        })
        .collect::<Result<_>>()?;

    let records = layout
        .into_iter()
        .enumerate()
        .map(|(k, (time, testfn, quantity))| EnsembleRecord {
            time,
            testfn,
            quantity,
            samples: per_replica.iter().map(|row| row[k]).collect(),
        })
        .collect();
    Ok(EnsembleStats {
        n,
        replicas,
        records,
    })
}

/// Ensemble estimates of `E X_t(i)` and `E X_t(i) X_t(j)` with standard
/// errors, row-major over pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct PairMoments {
    pub n: usize,
    pub replicas: usize,
    pub mean: Vec<f64>,
    pub mean_stderr: Vec<f64>,
    pub second: Vec<f64>,
    pub second_stderr: Vec<f64>,
}

#[derive(Clone)]
struct PairSums {
    x: Vec<f64>,
    x2: Vec<f64>,
    xx: Vec<f64>,
    xx2: Vec<f64>,
}

impl PairSums {
    fn new(n: usize) -> Self {
        PairSums {
            x: vec![0.0; n],
            x2: vec![0.0; n],
            xx: vec![0.0; n * n],
            xx2: vec![0.0; n * n],
        }
    }

    fn add_state(&mut self, v: &[f64]) {
        let n = v.len();
        for i in 0..n {
            self.x[i] += v[i];
            self.x2[i] += v[i] * v[i];
            for j in 0..n {
                let p = v[i] * v[j];
                self.xx[i * n + j] += p;
                self.xx2[i * n + j] += p * p;
            }
        }
    }

    fn merge(&mut self, other: &PairSums) {
        for (a, b) in [
            (&mut self.x, &other.x),
            (&mut self.x2, &other.x2),
            (&mut self.xx, &other.xx),
            (&mut self.xx2, &other.xx2),
        ] {
            for (p, q) in a.iter_mut().zip(b) {
                *p += q;
            }
        }
    }
}

const BLOCK: usize = 256;

/// Estimate first and second moments at time `t` from `replicas`
/// trajectories. Replicas are summed in fixed blocks that are merged in
/// block order.
pub fn pair_moments(
    spec: &ModelSpec,
    n: usize,
    replicas: usize,
    t: f64,
    seed: u64,
) -> Result<PairMoments> {
    if replicas < 2 {
        return Err(Error::invalid(format!(
            "need at least 2 replicas, got {replicas}"
        )));
    }
    let sim = Simulator::new(spec, n)?;
    let blocks: Vec<PairSums> = (0..replicas.div_ceil(BLOCK))
        .into_par_iter()
        .map(|b| -> Result<PairSums> {
            let mut sums = PairSums::new(n);
            for r in b * BLOCK..((b + 1) * BLOCK).min(replicas) {
                let mut rng = substream(seed, r as u64);
                let traj = sim.run(&mut rng, t, &[t])?;
                sums.add_state(&traj.snapshots[0].values);
            }
            Ok(sums)
        })
        .collect::<Result<_>>()?;
    let mut total = PairSums::new(n);
    for b in &blocks {
        total.merge(b);
    }
    let r = replicas as f64;
    let moments = |s: &[f64], s2: &[f64]| -> (Vec<f64>, Vec<f64>) {
        s.iter()
            .zip(s2)
            .map(|(a, b)| {
                let mean = a / r;
                let var = ((b - r * mean * mean) / (r - 1.0)).max(0.0);
                (mean, (var / r).sqrt())
            })
            .unzip()
    };
    let (mean, mean_stderr) = moments(&total.x, &total.x2);
    let (second, second_stderr) = moments(&total.xx, &total.xx2);
    Ok(PairMoments {
        n,
        replicas,
        mean,
        mean_stderr,
        second,
        second_stderr,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::PresetName;
    use crate::moments::evolve_moments;

    #[test]
    fn monomial_names() {
        let set = TestFunctionSet::monomials(2);
        let names: Vec<_> = set.unary.iter().map(|e| e.source()).collect();
        assert_eq!(names, ["1", "u", "u*u"]);
        assert_eq!(set.binary[0].source(), "u*v");
        assert!(TestFunctionSet::parse(&["v"], &[]).is_err());
    }

    #[test]
    fn frozen_chain_has_binomial_variance() {
        let spec =
            ModelSpec::from_sources("0", "1", "0", "0", "1", "0", "1", "0.2 + 0.6*u").unwrap();
        let n = 20;
        let set = TestFunctionSet::parse(&["1"], &[]).unwrap();
        let stats = run_ensemble(&spec, n, 4000, &[0.5], &set, 3, None).unwrap();
        let s = stats.find(0.5, "1", Quantity::Mu).unwrap().summary();
        let exact: f64 = (1..=n)
            .map(|i| {
                let p = 0.2 + 0.6 * i as f64 / n as f64;
                p * (1.0 - p)
            })
            .sum::<f64>()
            / (n * n) as f64;
        let se = s.variance_stderr(exact);
        assert!(
            (s.variance - exact).abs() <= 4.0 * se,
            "{} vs {exact}",
            s.variance
        );
    }

    #[test]
    fn deterministic_and_order_independent() {
        let spec = ModelSpec::preset(PresetName::Bcpp, "1", "0.5", "0.5").unwrap();
        let set = TestFunctionSet::monomials(1);
        let means = exact_means(&spec, 16, &[0.5, 1.0], 1e-2).unwrap();
        let a = run_ensemble(&spec, 16, 50, &[0.5, 1.0], &set, 9, Some(&means)).unwrap();
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let b = pool
            .install(|| run_ensemble(&spec, 16, 50, &[0.5, 1.0], &set, 9, Some(&means)))
            .unwrap();
        assert_eq!(a, b);
        let p = pair_moments(&spec, 8, 600, 1.0, 4).unwrap();
        let q = pool
            .install(|| pair_moments(&spec, 8, 600, 1.0, 4))
            .unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn voter_mean_is_conserved_in_expectation() {
        let spec = ModelSpec::preset(PresetName::Voter, "1", "0", "0.5").unwrap();
        let set = TestFunctionSet::parse(&["1"], &[]).unwrap();
        let stats = run_ensemble(&spec, 32, 2000, &[1.0], &set, 5, None).unwrap();
        let s = stats.find(1.0, "1", Quantity::Mu).unwrap().summary();
        assert!((s.mean - 0.5).abs() <= 4.0 * s.stderr);
    }

    #[test]
    fn pair_moments_match_moment_engine_on_small_system() {
        let spec = ModelSpec::preset(PresetName::Bcpp, "1", "0.5", "0.3 + 0.4*u").unwrap();
        let n = 6;
        let est = pair_moments(&spec, n, 20_000, 1.0, 11).unwrap();
        let exact = &evolve_moments(&spec, n, 1.0, 1e-3, &[1.0]).unwrap().tables[0];
        for i in 0..n {
            assert!((est.mean[i] - exact.mean[i]).abs() <= 4.0 * est.mean_stderr[i]);
            for j in 0..n {
                let k = i * n + j;
                assert!((est.second[k] - exact.fhat[k]).abs() <= 4.0 * est.second_stderr[k]);
            }
        }
    }

    #[test]
    fn v_requires_matching_means() {
        let spec = ModelSpec::preset(PresetName::Voter, "1", "0", "0.5").unwrap();
        let set = TestFunctionSet::monomials(0);
        let bad = vec![vec![0.5; 3]];
        assert!(run_ensemble(&spec, 4, 10, &[1.0], &set, 0, Some(&bad)).is_err());
        assert!(run_ensemble(&spec, 4, 1, &[1.0], &set, 0, None).is_err());
    }
}
