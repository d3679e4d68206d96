use crate::error::{Error, Result};
use crate::model::{ensure_valid, ModelSpec, PresetName};
use crate::numeric::CompensatedSum;

use super::grid::{node, same_grid, GridBiFunction, GridFunction};

/// `(Tf)(u_i) = diag_i f_i + (1/m) sum_j kernel_ij f_j`.
#[derive(Debug, Clone)]
pub struct IntegralOperator {
    m: usize,
    diag: Vec<f64>,
    kernel: Option<Vec<f64>>,
}

impl IntegralOperator {
    fn new(m: usize, diag: Vec<f64>, kernel: Option<Vec<f64>>) -> Self {
        IntegralOperator { m, diag, kernel }
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn kernel(&self) -> Option<&[f64]> {
        self.kernel.as_deref()
    }

    /// Sup-norm operator bound `max_i |diag_i| + (1/m) sum_j |kernel_ij|`.
    pub fn norm_bound(&self) -> f64 {
        let inv_m = 1.0 / self.m as f64;
        (0..self.m)
            .map(|i| {
                let row = self.kernel.as_ref().map_or(0.0, |k| {
                    k[i * self.m..(i + 1) * self.m]
                        .iter()
                        .map(|x| x.abs())
                        .sum::<f64>()
                });
                self.diag[i].abs() + inv_m * row
            })
            .fold(0.0, f64::max)
    }

    pub fn apply_into(&self, f: &[f64], out: &mut [f64]) {
        let inv_m = 1.0 / self.m as f64;
        for (i, o) in out.iter_mut().enumerate() {
            let mut v = self.diag[i] * f[i];
            if let Some(k) = &self.kernel {
                let mut acc = CompensatedSum::new();
                for (kij, fj) in k[i * self.m..(i + 1) * self.m].iter().zip(f) {
                    acc.add(kij * fj);
                }
                v += inv_m * acc.value();
            }
            *o = v;
        }
    }

    pub fn apply(&self, f: &GridFunction) -> Result<GridFunction> {
        same_grid(self.m, f.m())?;
        let mut out = vec![0.0; self.m];
        self.apply_into(f.values(), &mut out);
        Ok(GridFunction::new(out))
    }
}

/// Model coefficients sampled on the midpoint grid together with the linear
/// operators and kernel pieces built from them.
#[derive(Debug, Clone)]
pub struct GridModel {
    m: usize,
    preset: Option<PresetName>,
    b: Vec<f64>,
    c: Vec<f64>,
    phi: GridFunction,
    lambda: Vec<f64>,
    a: [Vec<f64>; 4],
    p1: IntegralOperator,
    pk: [IntegralOperator; 5],
    p8: IntegralOperator,
    p9: IntegralOperator,
    lhat_kernel: Vec<f64>,
    k1_theta_diag: Vec<f64>,
    k1_theta_kernel: Vec<f64>,
    k1_rho_kernel: Vec<f64>,
    k2_pieces: [Vec<f64>; 3],
}

impl GridModel {
    pub fn new(spec: &ModelSpec, m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::invalid("grid must have at least one node"));
        }
        ensure_valid(spec)?;
        let b: Vec<f64> = (0..m).map(|i| spec.b.eval1(node(m, i))).collect();
        let c: Vec<f64> = (0..m).map(|i| spec.c.eval1(node(m, i))).collect();
        let phi = GridFunction::from_expr(&spec.phi, m);
        let sample =
            |e: &crate::model::CoefficientExpr| GridBiFunction::from_expr(e, m).values().to_vec();
        let lambda = sample(&spec.lambda);
        let a = [
            sample(&spec.a1),
            sample(&spec.a2),
            sample(&spec.a3),
            sample(&spec.a4),
        ];
        Ok(Self::assemble(m, spec.preset, b, c, phi, lambda, a))
    }

    fn assemble(
        m: usize,
        preset: Option<PresetName>,
        b: Vec<f64>,
        c: Vec<f64>,
        phi: GridFunction,
        lambda: Vec<f64>,
        a: [Vec<f64>; 4],
    ) -> Self {
        let inv_m = 1.0 / m as f64;
        let at = |i: usize, j: usize| i * m + j;
        let lam = |i: usize, j: usize| lambda[at(i, j)];
        let coef = |k: usize, i: usize, j: usize| a[k][at(i, j)];

        // Row integral over v of g(u_i, v) and column integral of g(v, u_i).
        let row_int = |g: &dyn Fn(usize, usize) -> f64| -> Vec<f64> {
            (0..m)
                .map(|i| inv_m * (0..m).map(|j| g(i, j)).sum::<f64>())
                .collect()
        };
        let col_int = |g: &dyn Fn(usize, usize) -> f64| -> Vec<f64> {
            (0..m)
                .map(|i| inv_m * (0..m).map(|j| g(j, i)).sum::<f64>())
                .collect()
        };
        let table = |g: &dyn Fn(usize, usize) -> f64| -> Vec<f64> {
            let mut out = Vec::with_capacity(m * m);
            for i in 0..m {
                for j in 0..m {
                    out.push(g(i, j));
                }
            }
            out
        };

        let refresh: Vec<f64> = b.iter().zip(&c).map(|(b, c)| b * (c - 1.0)).collect();
        let out_a1 = row_int(&|i, j| lam(i, j) * (coef(0, i, j) - 1.0));
        let in_a4 = col_int(&|j, i| lam(j, i) * (coef(3, j, i) - 1.0));
        let drift_diag: Vec<f64> = (0..m).map(|i| refresh[i] + out_a1[i] + in_a4[i]).collect();

        let p1 = IntegralOperator::new(
            m,
            drift_diag.clone(),
            Some(table(&|i, j| {
                lam(i, j) * coef(2, i, j) + lam(j, i) * coef(1, j, i)
            })),
        );
        let p8 = IntegralOperator::new(
            m,
            (0..m).map(|i| refresh[i] + in_a4[i] + out_a1[i]).collect(),
            Some(table(&|i, j| {
                lam(i, j) * coef(1, i, j) + lam(j, i) * coef(2, j, i)
            })),
        );

        let sq = |x: f64| x * x;
        let p3 = IntegralOperator::new(
            m,
            b.iter().zip(&c).map(|(b, c)| (c * c - 1.0) * b).collect(),
            None,
        );
        let p4 = IntegralOperator::new(
            m,
            row_int(&|i, j| lam(i, j) * (sq(coef(0, i, j)) - 1.0)),
            None,
        );
        let p5 = IntegralOperator::new(
            m,
            vec![0.0; m],
            Some(table(&|i, j| lam(j, i) * sq(coef(1, j, i)))),
        );
        let p6 = IntegralOperator::new(
            m,
            vec![0.0; m],
            Some(table(&|i, j| lam(i, j) * sq(coef(2, i, j)))),
        );
        let p7 = IntegralOperator::new(
            m,
            col_int(&|j, i| lam(j, i) * (sq(coef(3, j, i)) - 1.0)),
            None,
        );
        let p9 = IntegralOperator::new(
            m,
            (0..m)
                .map(|i| p3.diag[i] + p4.diag[i] + p7.diag[i])
                .collect(),
            Some(table(&|i, j| {
                lam(i, j) * sq(coef(1, i, j)) + lam(j, i) * sq(coef(2, j, i))
            })),
        );

        let lhat_kernel = table(&|i, j| {
            coef(0, i, j) * coef(1, i, j) * lam(i, j) + lam(j, i) * coef(2, j, i) * coef(3, j, i)
        });

        let k1_out = row_int(&|i, j| lam(i, j) * sq(coef(0, i, j) - 1.0));
        let k1_in = col_int(&|j, i| lam(j, i) * sq(coef(3, j, i) - 1.0));
        let k1_theta_diag = (0..m)
            .map(|i| b[i] * sq(c[i] - 1.0) + k1_out[i] + k1_in[i])
            .collect();
        let k1_theta_kernel =
            table(&|i, j| lam(i, j) * sq(coef(1, i, j)) + lam(j, i) * sq(coef(2, j, i)));
        let k1_rho_kernel = table(&|i, j| {
            2.0 * lam(i, j) * (coef(0, i, j) - 1.0) * coef(1, i, j)
                + 2.0 * lam(j, i) * coef(2, j, i) * (coef(3, j, i) - 1.0)
        });
        let k2_pieces = [
            table(&|i, j| 2.0 * lam(i, j) * (coef(0, i, j) - 1.0) * coef(2, i, j)),
            table(&|i, j| 2.0 * lam(i, j) * coef(1, i, j) * (coef(3, i, j) - 1.0)),
            table(&|i, j| {
                2.0 * lam(i, j)
                    * ((coef(0, i, j) - 1.0) * (coef(3, i, j) - 1.0)
                        + coef(1, i, j) * coef(2, i, j))
            }),
        ];

        GridModel {
            m,
            preset,
            b,
            c,
            phi,
            lambda,
            a,
            p1,
            pk: [p3, p4, p5, p6, p7],
            p8,
            p9,
            lhat_kernel,
            k1_theta_diag,
            k1_theta_kernel,
            k1_rho_kernel,
            k2_pieces,
        }
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn preset(&self) -> Option<PresetName> {
        self.preset
    }

    pub fn phi(&self) -> &GridFunction {
        &self.phi
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn c(&self) -> &[f64] {
        &self.c
    }

    #[inline]
    pub fn lambda(&self, i: usize, j: usize) -> f64 {
        self.lambda[i * self.m + j]
    }

    #[inline]
    pub fn a(&self, i: usize, j: usize) -> [f64; 4] {
        let k = i * self.m + j;
        [self.a[0][k], self.a[1][k], self.a[2][k], self.a[3][k]]
    }

    pub fn p1_operator(&self) -> &IntegralOperator {
        &self.p1
    }

    pub fn p8_operator(&self) -> &IntegralOperator {
        &self.p8
    }

    pub fn p9_operator(&self) -> &IntegralOperator {
        &self.p9
    }

    /// Drift operator acting on test functions.
    pub fn p1(&self, f: &GridFunction) -> Result<GridFunction> {
        self.p1.apply(f)
    }

    /// Drift operator acting on densities; the discrete adjoint of `p1`.
    pub fn p8(&self, f: &GridFunction) -> Result<GridFunction> {
        self.p8.apply(f)
    }

    /// One of the second-moment pieces `P_3 .. P_7`.
    pub fn pk(&self, k: usize, f: &GridFunction) -> Result<GridFunction> {
        if !(3..=7).contains(&k) {
            return Err(Error::invalid(format!(
                "operator index must be in 3..=7, got {k}"
            )));
        }
        self.pk[k - 3].apply(f)
    }

    /// `P_3 f + P_4 f + P_5 f + P_6 f + P_7 f`, summed in that order.
    pub fn p2(&self, f: &GridFunction) -> Result<GridFunction> {
        let mut acc = self.pk(3, f)?;
        for k in 4..=7 {
            let term = self.pk(k, f)?;
            for (a, t) in acc.values_mut().iter_mut().zip(term.values()) {
                *a += t;
            }
        }
        Ok(acc)
    }

    /// Second-moment drift acting on densities; the discrete adjoint of `p2`.
    pub fn p9(&self, f: &GridFunction) -> Result<GridFunction> {
        self.p9.apply(f)
    }

    pub fn l1_hat(&self, rho: &GridFunction) -> Result<GridFunction> {
        same_grid(self.m, rho.m())?;
        let mut out = vec![0.0; self.m];
        self.l1_hat_into(rho.values(), &mut out);
        Ok(GridFunction::new(out))
    }

    pub(crate) fn l1_hat_into(&self, rho: &[f64], out: &mut [f64]) {
        let m = self.m;
        let inv_m = 1.0 / m as f64;
        for (i, o) in out.iter_mut().enumerate() {
            let row = &self.lhat_kernel[i * m..(i + 1) * m];
            let s: f64 = row.iter().zip(rho).map(|(k, r)| k * r).sum();
            *o = 2.0 * rho[i] * inv_m * s;
        }
    }

    /// The source functional of the second-moment equation, as a double sum.
    pub fn l1_functional(&self, rho: &GridFunction, f: &GridFunction) -> Result<f64> {
        same_grid(self.m, rho.m())?;
        same_grid(self.m, f.m())?;
        let m = self.m;
        let (r, fv) = (rho.values(), f.values());
        let mut first = CompensatedSum::new();
        let mut second = CompensatedSum::new();
        for i in 0..m {
            for j in 0..m {
                let [a1, a2, _, _] = self.a(i, j);
                first.add(r[i] * r[j] * a1 * a2 * self.lambda(i, j) * fv[i]);
                let [_, _, a3, a4] = self.a(j, i);
                second.add(self.lambda(j, i) * a3 * a4 * r[i] * r[j] * fv[i]);
            }
        }
        let w = 1.0 / (m as f64 * m as f64);
        Ok(2.0 * w * first.value() + 2.0 * w * second.value())
    }

    pub fn k_fields(
        &self,
        rho: &GridFunction,
        vartheta: &GridFunction,
    ) -> Result<(GridFunction, GridBiFunction)> {
        same_grid(self.m, rho.m())?;
        same_grid(self.m, vartheta.m())?;
        let m = self.m;
        let k1 = self.k1_values(rho.values(), vartheta.values());
        let (r, th) = (rho.values(), vartheta.values());
        let mut k2 = Vec::with_capacity(m * m);
        for i in 0..m {
            for j in 0..m {
                let k = i * m + j;
                k2.push(
                    self.k2_pieces[0][k] * th[i]
                        + self.k2_pieces[1][k] * th[j]
                        + self.k2_pieces[2][k] * r[i] * r[j],
                );
            }
        }
        Ok((GridFunction::new(k1), GridBiFunction::new(m, k2)?))
    }

    fn k1_values(&self, rho: &[f64], vartheta: &[f64]) -> Vec<f64> {
        let m = self.m;
        let inv_m = 1.0 / m as f64;
        (0..m)
            .map(|i| {
                let row = i * m..(i + 1) * m;
                let th: f64 = self.k1_theta_kernel[row.clone()]
                    .iter()
                    .zip(vartheta)
                    .map(|(k, t)| k * t)
                    .sum();
                let rr: f64 = self.k1_rho_kernel[row]
                    .iter()
                    .zip(rho)
                    .map(|(k, r)| k * r)
                    .sum();
                self.k1_theta_diag[i] * vartheta[i] + inv_m * th + rho[i] * inv_m * rr
            })
            .collect()
    }

    /// `[f, f]` at the state `(rho, vartheta)`.
    pub fn quadratic_form(
        &self,
        f: &GridFunction,
        rho: &GridFunction,
        vartheta: &GridFunction,
    ) -> Result<f64> {
        same_grid(self.m, f.m())?;
        same_grid(self.m, rho.m())?;
        same_grid(self.m, vartheta.m())?;
        Ok(self.quadratic_form_raw(f.values(), rho.values(), vartheta.values()))
    }

    pub(crate) fn quadratic_form_raw(&self, f: &[f64], rho: &[f64], vartheta: &[f64]) -> f64 {
        let m = self.m;
        let k1 = self.k1_values(rho, vartheta);
        let diag: f64 = k1.iter().zip(f).map(|(k, x)| k * x * x).sum::<f64>() / m as f64;
        let mut cross = CompensatedSum::new();
        for i in 0..m {
            if f[i] == 0.0 {
                continue;
            }
            let row = i * m..(i + 1) * m;
            let (q1, q2, q3) = (
                &self.k2_pieces[0][row.clone()],
                &self.k2_pieces[1][row.clone()],
                &self.k2_pieces[2][row],
            );
            let mut s = 0.0;
            for j in 0..m {
                s += (q1[j] * vartheta[i] + q2[j] * vartheta[j] + q3[j] * rho[i] * rho[j]) * f[j];
            }
            cross.add(f[i] * s);
        }
        diag + cross.value() / (m as f64 * m as f64)
    }

    /// `([f+g, f+g] - [f-g, f-g]) / 4`.
    pub fn polarized_form(
        &self,
        f: &GridFunction,
        g: &GridFunction,
        rho: &GridFunction,
        vartheta: &GridFunction,
    ) -> Result<f64> {
        same_grid(f.m(), g.m())?;
        let plus = self.quadratic_form(&(f + g), rho, vartheta)?;
        let minus = self.quadratic_form(&(f - g), rho, vartheta)?;
        Ok((plus - minus) / 4.0)
    }
}
