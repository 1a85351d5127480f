//! Epsilon-insensitive support vector regression.
//!
//! The dual is solved in the doubled-variable form
//!
//! ```text
//! min  1/2 a^T Q a + p^T a    s.t.  sum_t s_t a_t = 0,  0 <= a_t <= C
//! ```
//!
//! with `a = [alpha; alpha*]`, signs `s = [+1; -1]`, `p_i = eps - y_i`,
//! `p_{n+i} = eps + y_i` and `Q_st = s_s s_t K(x_s, x_t)`. Each step updates
//! the pair formed by the maximal KKT violator and the partner giving the
//! largest second-order decrease of the objective. The fitted function is
//! `f(x) = sum_i beta_i K(x_i, x) + b` with `beta_i = alpha_i - alpha*_i`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

const TAU: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Kernel {
    Linear,
    /// `(x . z + 1)^degree`
    Polynomial {
        degree: u32,
    },
    /// `exp(-gamma |x - z|^2)`
    Rbf {
        gamma: f64,
    },
}

impl Kernel {
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match *self {
            Kernel::Linear => dot(a, b),
            Kernel::Polynomial { degree } => (dot(a, b) + 1.0).powi(degree as i32),
            Kernel::Rbf { gamma } => {
                let d2: f64 = a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum();
                (-gamma * d2).exp()
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| u * v).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvrConfig {
    pub c: f64,
    pub epsilon: f64,
    pub kernel: Kernel,
    /// Stopping tolerance on the maximal KKT violation.
    pub tolerance: f64,
    /// Iteration budget, in units of `2n` pair updates.
    pub max_passes: usize,
}

impl Default for SvrConfig {
    fn default() -> Self {
        Self {
            c: 1.0,
            epsilon: 0.01,
            kernel: Kernel::Rbf { gamma: 1.0 },
            tolerance: 1e-3,
            max_passes: 200,
        }
    }
}

impl SvrConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::Config("C must be positive".into()));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Config("epsilon must be non-negative".into()));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::Config("tolerance must be positive".into()));
        }
        if self.max_passes == 0 {
            return Err(Error::Config("max_passes must be positive".into()));
        }
        match self.kernel {
            Kernel::Polynomial { degree: 0 } => Err(Error::Config("polynomial degree must be at least 1".into())),
            Kernel::Rbf { gamma } if !(gamma > 0.0 && gamma.is_finite()) => {
                Err(Error::Config("rbf gamma must be positive".into()))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Svr {
    kernel: Kernel,
    /// Training rows with non-zero coefficient, and their row indices.
    support: Vec<Vec<f64>>,
    support_index: Vec<usize>,
    coefficients: Vec<f64>,
    bias: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// KKT audit of a fitted model against its training data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktReport {
    /// Largest amount by which any condition is violated (0 when all hold).
    pub max_violation: f64,
    pub n_support: usize,
    pub n_bounded: usize,
}

impl Svr {
    pub fn fit(x: &Matrix, y: &[f64], cfg: &SvrConfig) -> Result<Self> {
        cfg.validate()?;
        if x.rows() != y.len() {
            return Err(Error::Shape(format!("{} rows but {} targets", x.rows(), y.len())));
        }
        if y.is_empty() {
            return Err(Error::Precondition("cannot fit on zero rows".into()));
        }
        let n = y.len();
        let mut k = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let v = cfg.kernel.eval(x.row(i), x.row(j));
                if !v.is_finite() {
                    return Err(Error::Numeric(format!("kernel value K({i}, {j}) = {v}")));
                }
                k[i * n + j] = v;
                k[j * n + i] = v;
            }
        }
        let solution = Solver::new(&k, y, cfg).solve();

        let mut support = Vec::new();
        let mut support_index = Vec::new();
        let mut coefficients = Vec::new();
        for i in 0..n {
            let beta = solution.alpha[i] - solution.alpha[n + i];
            if beta != 0.0 {
                support.push(x.row(i).to_vec());
                support_index.push(i);
                coefficients.push(beta);
            }
        }
        Ok(Self {
            kernel: cfg.kernel,
            support,
            support_index,
            coefficients,
            bias: solution.bias,
            converged: solution.converged,
            iterations: solution.iterations,
        })
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.support
            .iter()
            .zip(&self.coefficients)
            .map(|(s, beta)| beta * self.kernel.eval(s, row))
            .sum::<f64>()
            + self.bias
    }

    pub fn predict(&self, x: &Matrix) -> Vec<f64> {
        x.iter_rows().map(|r| self.predict_row(r)).collect()
    }

    /// `x` and `y` must be the training data.
    ///
    /// Check `|beta_i| <= C`, `beta_i = 0 => |r_i| <= eps + tol`,
    /// `|beta_i| = C => |r_i| >= eps - tol` and, for free coefficients,
    /// `|r_i| = eps` within `tol`, where `r_i = y_i - f(x_i)`.
    pub fn kkt_audit(&self, x: &Matrix, y: &[f64], cfg: &SvrConfig) -> KktReport {
        let mut beta = vec![0.0; y.len()];
        for (&i, &b) in self.support_index.iter().zip(&self.coefficients) {
            beta[i] = b;
        }
        let eps = cfg.epsilon;
        let tol = cfg.tolerance;
        let bound = cfg.c * (1.0 - 1e-12);
        let mut worst: f64 = 0.0;
        let mut n_bounded = 0;
        for i in 0..y.len() {
            let r = (y[i] - self.predict_row(x.row(i))).abs();
            let b = beta[i].abs();
            worst = worst.max(b - cfg.c);
            if b == 0.0 {
                worst = worst.max(r - (eps + tol));
            } else if b >= bound {
                n_bounded += 1;
                worst = worst.max((eps - tol) - r);
            } else {
                worst = worst.max((r - eps).abs() - tol);
            }
        }
        KktReport {
            max_violation: worst.max(0.0),
            n_support: self.support.len(),
            n_bounded,
        }
    }
}

struct Solution {
    alpha: Vec<f64>,
    bias: f64,
    converged: bool,
    iterations: usize,
}

struct Solver<'a> {
    k: &'a [f64],
    n: usize,
    c: f64,
    tol: f64,
    max_iter: usize,
    alpha: Vec<f64>,
    grad: Vec<f64>,
}

impl<'a> Solver<'a> {
    fn new(k: &'a [f64], y: &[f64], cfg: &SvrConfig) -> Self {
        let n = y.len();
        let mut grad = Vec::with_capacity(2 * n);
        grad.extend(y.iter().map(|yi| cfg.epsilon - yi));
        grad.extend(y.iter().map(|yi| cfg.epsilon + yi));
        Self {
            k,
            n,
            c: cfg.c,
            tol: cfg.tolerance,
            max_iter: cfg.max_passes.saturating_mul(2 * n).max(1),
            alpha: vec![0.0; 2 * n],
            grad,
        }
    }

    fn sign(&self, t: usize) -> f64 {
        if t < self.n {
            1.0
        } else {
            -1.0
        }
    }

    fn q(&self, s: usize, t: usize) -> f64 {
        self.sign(s) * self.sign(t) * self.k[(s % self.n) * self.n + t % self.n]
    }

    fn qd(&self, t: usize) -> f64 {
        let i = t % self.n;
        self.k[i * self.n + i]
    }

    fn at_upper(&self, t: usize) -> bool {
        self.alpha[t] >= self.c
    }

    fn at_lower(&self, t: usize) -> bool {
        self.alpha[t] <= 0.0
    }

    fn in_up(&self, t: usize) -> bool {
        if self.sign(t) > 0.0 {
            !self.at_upper(t)
        } else {
            !self.at_lower(t)
        }
    }

    fn in_low(&self, t: usize) -> bool {
        if self.sign(t) > 0.0 {
            !self.at_lower(t)
        } else {
            !self.at_upper(t)
        }
    }

    /// Returns `None` once the maximal violation is below tolerance.
    fn select(&self) -> Option<(usize, usize)> {
        let l = 2 * self.n;
        let mut gmax = f64::NEG_INFINITY;
        let mut i = None;
        for t in 0..l {
            if self.in_up(t) {
                let v = -self.sign(t) * self.grad[t];
                if v > gmax {
                    gmax = v;
                    i = Some(t);
                }
            }
        }
        let i = i?;
        let mut gmin = f64::INFINITY;
        let mut best_obj = f64::INFINITY;
        let mut j = None;
        for t in 0..l {
            if !self.in_low(t) {
                continue;
            }
            let v = -self.sign(t) * self.grad[t];
            gmin = gmin.min(v);
            let diff = gmax - v;
            if diff > 0.0 {
                let mut quad = self.qd(i) + self.qd(t) - 2.0 * self.sign(i) * self.sign(t) * self.q(i, t);
                if quad <= 0.0 {
                    quad = TAU;
                }
                let obj = -(diff * diff) / quad;
                if obj < best_obj {
                    best_obj = obj;
                    j = Some(t);
                }
            }
        }
        if gmax - gmin < self.tol {
            return None;
        }
        j.map(|j| (i, j))
    }

    fn update(&mut self, i: usize, j: usize) {
        let c = self.c;
        let (old_i, old_j) = (self.alpha[i], self.alpha[j]);
        let qij = self.q(i, j);
        if self.sign(i) != self.sign(j) {
            let mut quad = self.qd(i) + self.qd(j) + 2.0 * qij;
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (-self.grad[i] - self.grad[j]) / quad;
            let diff = old_i - old_j;
            let (mut ai, mut aj) = (old_i + delta, old_j + delta);
            if diff > 0.0 {
                if aj < 0.0 {
                    aj = 0.0;
                    ai = diff;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = -diff;
            }
            if diff > 0.0 {
                if ai > c {
                    ai = c;
                    aj = c - diff;
                }
            } else if aj > c {
                aj = c;
                ai = c + diff;
            }
            self.alpha[i] = ai;
            self.alpha[j] = aj;
        } else {
            let mut quad = self.qd(i) + self.qd(j) - 2.0 * qij;
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (self.grad[i] - self.grad[j]) / quad;
            let sum = old_i + old_j;
            let (mut ai, mut aj) = (old_i - delta, old_j + delta);
            if sum > c {
                if ai > c {
                    ai = c;
                    aj = sum - c;
                }
            } else if aj < 0.0 {
                aj = 0.0;
                ai = sum;
            }
            if sum > c {
                if aj > c {
                    aj = c;
                    ai = sum - c;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = sum;
            }
            self.alpha[i] = ai;
            self.alpha[j] = aj;
        }
        let di = self.alpha[i] - old_i;
        let dj = self.alpha[j] - old_j;
        for t in 0..2 * self.n {
            self.grad[t] += self.q(i, t) * di + self.q(j, t) * dj;
        }
    }

    /// Bias from free variables, or the midpoint of the feasible interval.
    fn bias(&self) -> f64 {
        let mut ub = f64::INFINITY;
        let mut lb = f64::NEG_INFINITY;
        let mut free_sum = 0.0;
        let mut n_free = 0usize;
        for t in 0..2 * self.n {
            let yg = self.sign(t) * self.grad[t];
            if self.at_upper(t) {
                if self.sign(t) < 0.0 {
                    ub = ub.min(yg);
                } else {
                    lb = lb.max(yg);
                }
            } else if self.at_lower(t) {
                if self.sign(t) > 0.0 {
                    ub = ub.min(yg);
                } else {
                    lb = lb.max(yg);
                }
            } else {
                n_free += 1;
                free_sum += yg;
            }
        }
        let rho = if n_free > 0 {
            free_sum / n_free as f64
        } else {
            (ub + lb) / 2.0
        };
        -rho
    }

    fn solve(mut self) -> Solution {
        let mut iterations = 0;
        let mut converged = false;
        while iterations < self.max_iter {
            match self.select() {
                None => {
                    converged = true;
                    break;
                }
                Some((i, j)) => self.update(i, j),
            }
            iterations += 1;
        }
        if !converged {
            converged = self.select().is_none();
        }
        let bias = self.bias();
        Solution {
            alpha: self.alpha,
            bias,
            converged,
            iterations,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_target_gives_zero_coefficients() {
        let x = Matrix::from_rows(&[[0.0], [0.5], [1.0], [2.0]]).unwrap();
        let y = vec![3.0; 4];
        for kernel in [
            Kernel::Linear,
            Kernel::Polynomial { degree: 2 },
            Kernel::Rbf { gamma: 0.5 },
        ] {
            let cfg = SvrConfig {
                kernel,
                ..Default::default()
            };
            let m = Svr::fit(&x, &y, &cfg).unwrap();
            assert!(m.coefficients().is_empty());
            assert!((m.bias() - 3.0).abs() < 1e-12);
            assert!(m.predict(&x).iter().all(|&p| p == m.bias()));
        }
    }

    #[test]
    fn single_point_inside_tube() {
        let x = Matrix::from_rows(&[[0.3, -1.0]]).unwrap();
        let cfg = SvrConfig {
            epsilon: 0.1,
            ..Default::default()
        };
        let m = Svr::fit(&x, &[5.0], &cfg).unwrap();
        assert!((m.predict_row(&[0.3, -1.0]) - 5.0).abs() <= 0.1);
    }

    #[test]
    fn kernels() {
        let a = [1.0, 2.0];
        let b = [3.0, -1.0];
        assert_eq!(Kernel::Linear.eval(&a, &b), 1.0);
        assert_eq!(Kernel::Polynomial { degree: 3 }.eval(&a, &b), 8.0);
        assert!((Kernel::Rbf { gamma: 0.1 }.eval(&a, &b) - (-1.3f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn non_finite_kernel_is_numeric_error() {
        let x = Matrix::from_rows(&[[1e200], [1e200]]).unwrap();
        let cfg = SvrConfig {
            kernel: Kernel::Linear,
            ..Default::default()
        };
        assert!(matches!(
            Svr::fit(&x, &[1.0, 2.0], &cfg).unwrap_err(),
            Error::Numeric(_)
        ));
    }

    #[test]
    fn rbf_fit_satisfies_kkt() {
        let rows: Vec<[f64; 1]> = (0..30).map(|i| [i as f64 / 29.0]).collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let y: Vec<f64> = rows.iter().map(|r| (6.0 * r[0]).sin()).collect();
        let cfg = SvrConfig {
            c: 10.0,
            epsilon: 0.05,
            kernel: Kernel::Rbf { gamma: 5.0 },
            ..Default::default()
        };
        let m = Svr::fit(&x, &y, &cfg).unwrap();
        assert!(m.converged);
        let kkt = m.kkt_audit(&x, &y, &cfg);
        assert!(kkt.max_violation <= 1e-9, "{kkt:?}");
        assert!(m.coefficients().iter().all(|b| b.abs() <= cfg.c));
        let s: f64 = m.coefficients().iter().sum();
        assert!(s.abs() < 1e-9);
    }

    #[test]
    fn rejects_bad_config() {
        let bad = [
            SvrConfig {
                c: 0.0,
                ..Default::default()
            },
            SvrConfig {
                epsilon: -1.0,
                ..Default::default()
            },
            SvrConfig {
                kernel: Kernel::Rbf { gamma: 0.0 },
                ..Default::default()
            },
            SvrConfig {
                kernel: Kernel::Polynomial { degree: 0 },
                ..Default::default()
            },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err());
        }
    }
}
