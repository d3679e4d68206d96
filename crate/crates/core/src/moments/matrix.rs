use crate::error::{Error, Result};
use crate::model::{ensure_valid, ModelSpec, UrnCoefficients};

pub const MAX_URNS: usize = 512;

/// Compressed-row matrix over the pair grid; pair `(i, j)` has flat index
/// `i * n + j` (0-based urns).
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMomentMatrix {
    n: usize,
    row_start: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl SparseMomentMatrix {
    fn from_rows(n: usize, rows: Vec<Vec<(usize, f64)>>) -> Self {
        let mut row_start = Vec::with_capacity(rows.len() + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_start.push(0);
        for mut row in rows {
            row.sort_by_key(|&(c, _)| c);
            let mut merged: Vec<(usize, f64)> = Vec::with_capacity(row.len());
            for (c, v) in row {
                match merged.last_mut() {
                    Some((lc, lv)) if *lc == c => *lv += v,
                    _ => merged.push((c, v)),
                }
            }
            for (c, v) in merged.into_iter().filter(|&(_, v)| v != 0.0) {
                cols.push(c);
                vals.push(v);
            }
            row_start.push(cols.len());
        }
        SparseMomentMatrix {
            n,
            row_start,
            cols,
            vals,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.n * self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// Nonzero entries of row `(i, j)` as `((l, k), value)`.
    pub fn row(&self, i: usize, j: usize) -> Vec<((usize, usize), f64)> {
        let r = i * self.n + j;
        (self.row_start[r]..self.row_start[r + 1])
            .map(|p| ((self.cols[p] / self.n, self.cols[p] % self.n), self.vals[p]))
            .collect()
    }

    pub fn get(&self, row: (usize, usize), col: (usize, usize)) -> f64 {
        let r = row.0 * self.n + row.1;
        let c = col.0 * self.n + col.1;
        let range = self.row_start[r]..self.row_start[r + 1];
        match self.cols[range.clone()].binary_search(&c) {
            Ok(p) => self.vals[range.start + p],
            Err(_) => 0.0,
        }
    }

    pub fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        for (r, o) in out.iter_mut().enumerate() {
            let mut s = 0.0;
            for p in self.row_start[r]..self.row_start[r + 1] {
                s += self.vals[p] * x[self.cols[p]];
            }
            *o = s;
        }
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(Error::GridMismatch {
                expected: self.dim(),
                found: x.len(),
            });
        }
        let mut out = vec![0.0; self.dim()];
        self.apply_into(x, &mut out);
        Ok(out)
    }

    pub fn max_row_nnz(&self) -> usize {
        self.row_start
            .windows(2)
            .map(|w| w[1] - w[0])
            .max()
            .unwrap_or(0)
    }
}

/// Mean generator: `d/dt E X(i) = sum_j A_ij E X(j)`.
#[derive(Debug, Clone)]
pub struct MeanGenerator {
    n: usize,
    a: Vec<f64>,
}

impl MeanGenerator {
    pub fn new(coef: &UrnCoefficients) -> Self {
        let n = coef.n;
        let inv_n = 1.0 / n as f64;
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            let mut diag = coef.b[i] * (coef.c[i] - 1.0);
            for j in (0..n).filter(|&j| j != i) {
                diag += inv_n * coef.lambda(j, i) * (coef.a(j, i)[3] - 1.0);
                diag += inv_n * coef.lambda(i, j) * (coef.a(i, j)[0] - 1.0);
                a[i * n + j] = inv_n
                    * (coef.lambda(i, j) * coef.a(i, j)[1] + coef.lambda(j, i) * coef.a(j, i)[2]);
            }
            a[i * n + i] = diag;
        }
        MeanGenerator { n, a }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.a[i * self.n + j]
    }

    pub fn apply_into(&self, mean: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.a[i * self.n..(i + 1) * self.n]
                .iter()
                .zip(mean)
                .map(|(a, m)| a * m)
                .sum();
        }
    }
}

pub(crate) fn check_size(n: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::invalid(format!("need at least 2 urns, got {n}")));
    }
    if n > MAX_URNS {
        return Err(Error::invalid(format!(
            "moment engine is limited to {MAX_URNS} urns, got {n}"
        )));
    }
    Ok(())
}

/// Right-hand side of the mean equation.
pub fn mean_ode_rhs(spec: &ModelSpec, n: usize, mean: &[f64]) -> Result<Vec<f64>> {
    if mean.len() != n {
        return Err(Error::GridMismatch {
            expected: n,
            found: mean.len(),
        });
    }
    let gen = MeanGenerator::new(&UrnCoefficients::new(spec, n));
    let mut out = vec![0.0; n];
    gen.apply_into(mean, &mut out);
    Ok(out)
}

/// Generator of the products of means `F(i, j) = E X(i) E X(j)`.
pub fn build_m(spec: &ModelSpec, n: usize) -> Result<SparseMomentMatrix> {
    check_size(n)?;
    ensure_valid(spec)?;
    Ok(assemble_m(&MeanGenerator::new(&UrnCoefficients::new(
        spec, n,
    ))))
}

fn assemble_m(gen: &MeanGenerator) -> SparseMomentMatrix {
    let n = gen.n;
    let idx = |i: usize, j: usize| i * n + j;
    let mut rows = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let mut row = Vec::with_capacity(2 * n);
            if i == j {
                for k in (0..n).filter(|&k| k != i) {
                    row.push((idx(i, k), 2.0 * gen.entry(i, k)));
                }
                row.push((idx(i, i), 2.0 * gen.entry(i, i)));
            } else {
                for k in (0..n).filter(|&k| k != j) {
                    row.push((idx(i, k), gen.entry(j, k)));
                }
                for l in (0..n).filter(|&l| l != i) {
                    row.push((idx(l, j), gen.entry(i, l)));
                }
                row.push((idx(i, j), gen.entry(i, i) + gen.entry(j, j)));
            }
            rows.push(row);
        }
    }
    SparseMomentMatrix::from_rows(n, rows)
}

/// Generator of the second moments `Fhat(i, j) = E X(i) X(j)`.
pub fn build_mhat(spec: &ModelSpec, n: usize) -> Result<SparseMomentMatrix> {
    check_size(n)?;
    ensure_valid(spec)?;
    let coef = UrnCoefficients::new(spec, n);
    let gen = MeanGenerator::new(&coef);
    let inv_n = 1.0 / n as f64;
    let idx = |i: usize, j: usize| i * n + j;
    let lam = |i: usize, j: usize| coef.lambda(i, j);
    let a = |i: usize, j: usize| coef.a(i, j);

    let mut rows = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let mut row = Vec::with_capacity(2 * n);
            if i == j {
                let mut diag = coef.b[i] * (coef.c[i] * coef.c[i] - 1.0);
                for k in (0..n).filter(|&k| k != i) {
                    let [a1, a2, _, _] = a(i, k);
                    let [_, _, a3, a4] = a(k, i);
                    diag += inv_n * lam(i, k) * (a1 * a1 - 1.0);
                    diag += inv_n * lam(k, i) * (a4 * a4 - 1.0);
                    row.push((
                        idx(i, k),
                        2.0 * inv_n * (lam(i, k) * a1 * a2 + lam(k, i) * a3 * a4),
                    ));
                    row.push((
                        idx(k, k),
                        inv_n * (lam(i, k) * a2 * a2 + lam(k, i) * a3 * a3),
                    ));
                }
                row.push((idx(i, i), diag));
            } else {
                let [b1, b2, b3, b4] = a(i, j);
                let [c1, c2, c3, c4] = a(j, i);
                for k in (0..n).filter(|&k| k != j && k != i) {
                    row.push((idx(i, k), gen.entry(j, k)));
                }
                for l in (0..n).filter(|&l| l != i && l != j) {
                    row.push((idx(l, j), gen.entry(i, l)));
                }
                let diag = gen.entry(i, i) + gen.entry(j, j)
                    - inv_n * lam(j, i) * (c4 - 1.0)
                    - inv_n * lam(i, j) * (b1 - 1.0)
                    - inv_n * lam(i, j) * (b4 - 1.0)
                    - inv_n * lam(j, i) * (c1 - 1.0)
                    + inv_n * lam(i, j) * (b1 * b4 + b2 * b3 - 1.0)
                    + inv_n * lam(j, i) * (c1 * c4 + c2 * c3 - 1.0);
                row.push((idx(i, j), diag));
                row.push((
                    idx(i, i),
                    inv_n * (lam(i, j) * b1 * b3 + lam(j, i) * c2 * c4),
                ));
                row.push((
                    idx(j, j),
                    inv_n * (lam(j, i) * c1 * c3 + lam(i, j) * b2 * b4),
                ));
            }
            rows.push(row);
        }
    }
    Ok(SparseMomentMatrix::from_rows(n, rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::PresetName;
    use rand::Rng;

    fn general() -> ModelSpec {
        ModelSpec::from_sources(
            "0.5 + u",
            "0.3 + 0.5*u",
            "1 + u*v + 0.5*sin(3*u - v)",
            "0.2 + 0.3*v",
            "0.7*u",
            "0.4 + 0.2*u*v",
            "0.9 - 0.3*v",
            "0.3 + 0.4*u",
        )
        .unwrap()
    }

    /// Generator applied to the monomial `x_p x_q`, assembled event by event
    /// from the linear update maps. Returns coefficients on `x_k x_l`.
    fn generator_on_product(coef: &UrnCoefficients, p: usize, q: usize) -> Vec<f64> {
        let n = coef.n;
        let mut out = vec![0.0; n * n];
        let mut add_event = |rate: f64, map: &dyn Fn(usize) -> Vec<(usize, f64)>| {
            for (k, s) in map(p) {
                for (l, t) in map(q) {
                    out[k * n + l] += rate * s * t;
                }
            }
            out[p * n + q] -= rate;
        };
        for i in 0..n {
            let c = coef.c[i];
            add_event(coef.b[i], &|r| {
                if r == i {
                    vec![(i, c)]
                } else {
                    vec![(r, 1.0)]
                }
            });
        }
        for i in 0..n {
            for j in (0..n).filter(|&j| j != i) {
                let [a1, a2, a3, a4] = coef.a(i, j);
                add_event(coef.lambda(i, j) / n as f64, &|r| {
                    if r == i {
                        vec![(i, a1), (j, a2)]
                    } else if r == j {
                        vec![(i, a3), (j, a4)]
                    } else {
                        vec![(r, 1.0)]
                    }
                });
            }
        }
        out
    }

    fn random_symmetric(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = crate::sim::substream(seed, 7);
        let mut s = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let v = rng.random_range(0.0..1.0);
                s[i * n + j] = v;
                s[j * n + i] = v;
            }
        }
        s
    }

    #[test]
    fn mhat_matches_generator_oracle() {
        let spec = general();
        for n in [2, 3, 5] {
            let coef = UrnCoefficients::new(&spec, n);
            let mhat = build_mhat(&spec, n).unwrap();
            let fhat = random_symmetric(n, n as u64);
            let got = mhat.apply(&fhat).unwrap();
            for p in 0..n {
                for q in 0..n {
                    let poly = generator_on_product(&coef, p, q);
                    let expected: f64 = poly.iter().zip(&fhat).map(|(c, x)| c * x).sum();
                    assert!((got[p * n + q] - expected).abs() < 1e-12, "n={n} ({p},{q})");
                }
            }
        }
    }

    #[test]
    fn m_matches_product_rule() {
        let spec = general();
        let n = 4;
        let gen = MeanGenerator::new(&UrnCoefficients::new(&spec, n));
        let m = build_m(&spec, n).unwrap();
        let mean = [0.2, 0.9, 0.4, 0.6];
        let mut dm = vec![0.0; n];
        gen.apply_into(&mean, &mut dm);
        let f: Vec<f64> = (0..n * n).map(|k| mean[k / n] * mean[k % n]).collect();
        let got = m.apply(&f).unwrap();
        for i in 0..n {
            for j in 0..n {
                let expected = dm[i] * mean[j] + mean[i] * dm[j];
                assert!((got[i * n + j] - expected).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn golden_two_urn_voter() {
        let spec = ModelSpec::preset(PresetName::Voter, "1", "0", "0.5").unwrap();
        for mat in [build_m(&spec, 2).unwrap(), build_mhat(&spec, 2).unwrap()] {
            assert_eq!(mat.get((0, 1), (0, 0)), 0.5);
            assert_eq!(mat.get((0, 1), (1, 1)), 0.5);
            assert_eq!(mat.get((0, 1), (0, 1)), -1.0);
            assert_eq!(mat.get((0, 1), (1, 0)), 0.0);
            assert_eq!(mat.row(0, 1).len(), 3);
        }
    }

    #[test]
    fn voter_null_vectors() {
        let spec = ModelSpec::preset(PresetName::Voter, "1.3", "0", "0.5").unwrap();
        for n in [2, 3, 8] {
            let ones = vec![1.0; n * n];
            for mat in [build_m(&spec, n).unwrap(), build_mhat(&spec, n).unwrap()] {
                assert!(mat.apply(&ones).unwrap().iter().all(|x| x.abs() <= 1e-12));
            }
        }
    }

    #[test]
    fn zero_dynamics_give_zero_matrices() {
        let spec = ModelSpec::from_sources("0", "2", "0", "0.3", "1", "0.5", "1", "0.5").unwrap();
        assert_eq!(build_m(&spec, 4).unwrap().nnz(), 0);
        assert_eq!(build_mhat(&spec, 4).unwrap().nnz(), 0);
    }

    #[test]
    fn structure_touches_the_row_pair() {
        let spec = general();
        let n = 7;
        for mat in [build_m(&spec, n).unwrap(), build_mhat(&spec, n).unwrap()] {
            assert!(mat.max_row_nnz() <= 4 * n + 4);
            for i in 0..n {
                for j in 0..n {
                    for ((l, k), _) in mat.row(i, j) {
                        // Second-moment diagonal rows also pick up X(k)^2.
                        let squared = i == j && l == k;
                        assert!(l == i || l == j || k == i || k == j || squared);
                    }
                }
            }
        }
    }

    #[test]
    fn mean_rhs_examples() {
        let voter = ModelSpec::preset(PresetName::Voter, "2", "0", "0.5").unwrap();
        assert!(mean_ode_rhs(&voter, 5, &[0.3; 5])
            .unwrap()
            .iter()
            .all(|x| x.abs() < 1e-15));

        let spec = ModelSpec::from_sources("1 + u", "0.5", "0", "0", "1", "0", "1", "0.5").unwrap();
        let mean = [0.2, 0.4, 0.8];
        let rhs = mean_ode_rhs(&spec, 3, &mean).unwrap();
        for (i, r) in rhs.iter().enumerate() {
            let u = (i + 1) as f64 / 3.0;
            assert!((r - (1.0 + u) * -0.5 * mean[i]).abs() < 1e-15);
        }

        let (l0, b0, p) = (1.5, 0.25, 0.6);
        let bcpp = ModelSpec::preset(PresetName::Bcpp, "1.5", "0.25", "0.5").unwrap();
        let rhs = mean_ode_rhs(&bcpp, 2, &[p, p]).unwrap();
        assert!(rhs.iter().all(|x| (x - p * (l0 / 2.0 - b0)).abs() < 1e-15));
    }

    #[test]
    fn size_limits() {
        let spec = general();
        assert!(build_m(&spec, 1).is_err());
        assert!(build_mhat(&spec, MAX_URNS + 1).is_err());
    }
}
