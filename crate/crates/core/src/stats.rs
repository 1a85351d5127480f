//! Correlation and least-squares regression with t-test p-values.

use serde::Serialize;
use statrs::function::beta::beta_reg;

use crate::error::{Error, Result};
use crate::features::{FeatureColumn, FeatureRow};
use crate::fsutil::format_number;
use crate::matrix::Matrix;

/// Two-sided tail probability `P(|T| >= |t|)` for Student's t with `df` degrees of freedom.
pub fn t_two_sided_p(t: f64, df: f64) -> f64 {
    if t.is_infinite() {
        return 0.0;
    }
    if t == 0.0 {
        return 1.0;
    }
    beta_reg(df / 2.0, 0.5, df / (df + t * t)).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CorrelationResult {
    pub r: f64,
    pub t_stat: f64,
    pub p_value: f64,
    pub n: usize,
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<CorrelationResult> {
    if x.len() != y.len() {
        return Err(Error::Shape(format!("{} x values but {} y values", x.len(), y.len())));
    }
    let n = x.len();
    if n < 3 {
        return Err(Error::Precondition(format!(
            "correlation needs at least 3 pairs, got {n}"
        )));
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Metric("correlation undefined for a constant input".into()));
    }
    let r = (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0);
    let df = (n - 2) as f64;
    let t_stat = if r.abs() == 1.0 {
        f64::INFINITY.copysign(r)
    } else {
        r * (df / (1.0 - r * r)).sqrt()
    };
    Ok(CorrelationResult {
        r,
        t_stat,
        p_value: t_two_sided_p(t_stat, df),
        n,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegressionFit {
    /// `intercept` first, then one term per design column (or per power).
    pub terms: Vec<String>,
    pub coefficients: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub t_stats: Vec<f64>,
    pub p_values: Vec<f64>,
    pub r2: f64,
    pub degree: usize,
    /// Value subtracted from the predictor before polynomial expansion.
    pub center: Option<f64>,
    /// Residuals vanish; standard errors are zero and p-values are reported as 0.
    pub perfect_fit: bool,
    pub residuals: Vec<f64>,
}

impl RegressionFit {
    /// Predict from raw (uncentred, unexpanded) design rows.
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut out = self.coefficients[0];
        match self.center {
            Some(c) => {
                let z = row[0] - c;
                let mut p = 1.0;
                for b in &self.coefficients[1..] {
                    p *= z;
                    out += b * p;
                }
            }
            None => {
                for (b, x) in self.coefficients[1..].iter().zip(row) {
                    out += b * x;
                }
            }
        }
        out
    }
}

/// Cholesky factor of a symmetric positive-definite matrix, or `None` when a
/// pivot falls below `tol` times the largest diagonal entry.
fn cholesky(a: &[Vec<f64>], tol: f64) -> Option<Vec<Vec<f64>>> {
    let p = a.len();
    let max_diag = (0..p).map(|i| a[i][i]).fold(0.0_f64, f64::max);
    let mut l = vec![vec![0.0; p]; p];
    for j in 0..p {
        let mut d = a[j][j];
        for k in 0..j {
            d -= l[j][k] * l[j][k];
        }
        if !(d > tol * max_diag) {
            return None;
        }
        let djj = d.sqrt();
        l[j][j] = djj;
        for i in j + 1..p {
            let mut s = a[i][j];
            for k in 0..j {
                s -= l[i][k] * l[j][k];
            }
            l[i][j] = s / djj;
        }
    }
    Some(l)
}

fn cholesky_solve(l: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let p = l.len();
    let mut z = vec![0.0; p];
    for i in 0..p {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i][k] * z[k];
        }
        z[i] = s / l[i][i];
    }
    let mut x = vec![0.0; p];
    for i in (0..p).rev() {
        let mut s = z[i];
        for k in i + 1..p {
            s -= l[k][i] * x[k];
        }
        x[i] = s / l[i][i];
    }
    x
}

/// Ordinary least squares of `y` on an intercept plus the columns of `design`.
///
/// With `degree >= 2` the design must have one column, which is centred and
/// expanded into powers `1..=degree`. `names` labels the design columns.
pub fn fit_regression(design: &Matrix, y: &[f64], degree: usize, names: &[String]) -> Result<RegressionFit> {
    let n = y.len();
    if design.rows() != n {
        return Err(Error::Shape(format!("{} design rows but {n} targets", design.rows())));
    }
    if names.len() != design.cols() {
        return Err(Error::Shape(format!(
            "{} names for {} columns",
            names.len(),
            design.cols()
        )));
    }
    if degree == 0 {
        return Err(Error::Config("degree must be at least 1".into()));
    }
    if degree > 1 && design.cols() != 1 {
        return Err(Error::Config("polynomial expansion needs exactly one predictor".into()));
    }

    let (x, terms, center) = if degree > 1 {
        let col = design.column(0);
        let c = col.iter().sum::<f64>() / n.max(1) as f64;
        let mut data = Vec::with_capacity(n * (degree + 1));
        for v in &col {
            let z = v - c;
            let mut p = 1.0;
            data.push(1.0);
            for _ in 0..degree {
                p *= z;
                data.push(p);
            }
        }
        let mut terms = vec!["intercept".to_string()];
        terms.extend((1..=degree).map(|d| format!("{}^{d}", names[0])));
        (Matrix::from_vec(n, degree + 1, data)?, terms, Some(c))
    } else {
        let mut data = Vec::with_capacity(n * (design.cols() + 1));
        for row in design.iter_rows() {
            data.push(1.0);
            data.extend_from_slice(row);
        }
        let mut terms = vec!["intercept".to_string()];
        terms.extend(names.iter().cloned());
        (Matrix::from_vec(n, design.cols() + 1, data)?, terms, None)
    };
    let p = x.cols();
    if n <= p {
        return Err(Error::Precondition(format!("{n} rows cannot fit {p} coefficients")));
    }

    let mut gram = vec![vec![0.0; p]; p];
    let mut xty = vec![0.0; p];
    for (row, &yi) in x.iter_rows().zip(y) {
        for i in 0..p {
            xty[i] += row[i] * yi;
            for j in 0..=i {
                gram[i][j] += row[i] * row[j];
            }
        }
    }
    for i in 0..p {
        for j in 0..i {
            gram[j][i] = gram[i][j];
        }
    }
    let l = cholesky(&gram, 1e-12).ok_or_else(|| Error::Collinear("design matrix is rank deficient".into()))?;
    let mut beta = cholesky_solve(&l, &xty);

    let residuals_for = |beta: &[f64]| -> Vec<f64> {
        x.iter_rows()
            .zip(y)
            .map(|(row, yi)| yi - row.iter().zip(beta).map(|(a, b)| a * b).sum::<f64>())
            .collect()
    };
    // Two rounds of iterative refinement on the normal equations.
    for _ in 0..2 {
        let r = residuals_for(&beta);
        let mut xtr = vec![0.0; p];
        for (row, ri) in x.iter_rows().zip(&r) {
            for i in 0..p {
                xtr[i] += row[i] * ri;
            }
        }
        let delta = cholesky_solve(&l, &xtr);
        for (b, d) in beta.iter_mut().zip(delta) {
            *b += d;
        }
    }
    let residuals = residuals_for(&beta);

    let rss: f64 = residuals.iter().map(|r| r * r).sum();
    let my = y.iter().sum::<f64>() / n as f64;
    let tss: f64 = y.iter().map(|v| (v - my) * (v - my)).sum();
    let r2 = if tss > 0.0 { 1.0 - rss / tss } else { 1.0 };
    let y_rms = (y.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt();
    let perfect_fit = (rss / n as f64).sqrt() <= 1e-10 * y_rms.max(f64::MIN_POSITIVE);

    let df = (n - p) as f64;
    let (std_errors, t_stats, p_values) = if perfect_fit {
        (vec![0.0; p], vec![f64::INFINITY; p], vec![0.0; p])
    } else {
        let s2 = rss / df;
        let mut se = Vec::with_capacity(p);
        for i in 0..p {
            let mut e = vec![0.0; p];
            e[i] = 1.0;
            se.push((s2 * cholesky_solve(&l, &e)[i]).sqrt());
        }
        let t: Vec<f64> = beta.iter().zip(&se).map(|(b, s)| b / s).collect();
        let pv = t.iter().map(|t| t_two_sided_p(*t, df)).collect();
        (se, t, pv)
    };

    Ok(RegressionFit {
        terms,
        coefficients: beta,
        std_errors,
        t_stats,
        p_values,
        r2,
        degree,
        center,
        perfect_fit,
        residuals,
    })
}

/// The age and weather analyses run on feature rows.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StatsSummary {
    pub age_weight: CorrelationResult,
    pub growth_curve: RegressionFit,
    pub weather: RegressionFit,
}

/// Pearson correlation of age with current weight, a quadratic growth curve
/// of current weight on age, and next-month weight regressed on current
/// rainfall and temperature.
pub fn analyze(rows: &[FeatureRow]) -> Result<StatsSummary> {
    let age: Vec<f64> = rows.iter().map(|r| r.value(FeatureColumn::AgeMonths)).collect();
    let weight: Vec<f64> = rows.iter().map(|r| r.current_month_weight).collect();
    let age_weight = pearson(&age, &weight)?;
    let growth_curve = fit_regression(
        &Matrix::column_vector(&age),
        &weight,
        2,
        &[FeatureColumn::AgeMonths.header().to_string()],
    )?;
    let cols = [FeatureColumn::Rainfall0, FeatureColumn::Temperature0];
    let data: Vec<f64> = rows.iter().flat_map(|r| cols.map(|c| r.value(c))).collect();
    let next: Vec<f64> = rows.iter().map(|r| r.next_month_weight).collect();
    let weather = fit_regression(
        &Matrix::from_vec(rows.len(), 2, data)?,
        &next,
        1,
        &cols.map(|c| c.header().to_string()),
    )?;
    Ok(StatsSummary {
        age_weight,
        growth_curve,
        weather,
    })
}

/// CSV with columns `term, coefficient, stderr, t, p`. Term names carry the
/// analysis as a prefix; the correlation reports `r` as its coefficient.
pub fn write_summary<W: std::io::Write>(out: W, s: &StatsSummary) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["term", "coefficient", "stderr", "t", "p"])?;
    let c = &s.age_weight;
    w.write_record([
        "correlation: age vs current weight (r)".to_string(),
        format_number(c.r),
        String::new(),
        format_number(c.t_stat),
        format_number(c.p_value),
    ])?;
    for (prefix, fit) in [("growth curve", &s.growth_curve), ("weather", &s.weather)] {
        for i in 0..fit.terms.len() {
            w.write_record([
                format!("{prefix}: {}", fit.terms[i]),
                format_number(fit.coefficients[i]),
                format_number(fit.std_errors[i]),
                format_number(fit.t_stats[i]),
                format_number(fit.p_values[i]),
            ])?;
        }
        w.write_record([
            format!("{prefix}: r2"),
            format_number(fit.r2),
            String::new(),
            String::new(),
            String::new(),
        ])?;
    }
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_computed_correlation() {
        let c = pearson(&[1.0, 2.0, 3.0, 4.0], &[2.0, 1.0, 4.0, 3.0]).unwrap();
        assert!((c.r - 0.6).abs() < 1e-12);
        // t = 0.6 * sqrt(2 / 0.64) = 1.0606601717798212
        assert!((c.t_stat - 1.060_660_171_779_821_2).abs() < 1e-12);
        assert!(c.p_value > 0.3 && c.p_value < 0.5);
    }

    #[test]
    fn t_tail_matches_closed_forms() {
        // df = 1 is Cauchy: P(|T| >= t) = 1 - 2 atan(t) / pi.
        for t in [0.1, 1.0, 3.0, 12.0] {
            let exact = 1.0 - 2.0 * f64::atan(t) / std::f64::consts::PI;
            assert!((t_two_sided_p(t, 1.0) - exact).abs() < 1e-12 * exact.max(1e-3));
        }
        // df = 2: P(|T| >= t) = 1 - t / sqrt(2 + t^2).
        for t in [0.5_f64, 2.0, 9.0] {
            let exact = 1.0 - t / (2.0 + t * t).sqrt();
            assert!((t_two_sided_p(t, 2.0) - exact).abs() <= 1e-10 * exact);
        }
    }

    #[test]
    fn constant_input_rejected() {
        assert!(pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn intercept_only() {
        let y = [2.0, 4.0, 9.0];
        let fit = fit_regression(&Matrix::zeros(3, 0), &y, 1, &[]).unwrap();
        assert!((fit.coefficients[0] - 5.0).abs() < 1e-12);
        assert_eq!(fit.r2, 0.0);
    }

    #[test]
    fn collinear_design_rejected() {
        let x = Matrix::from_rows(&[[1.0, 2.0], [2.0, 4.0], [3.0, 6.0], [4.0, 8.0]]).unwrap();
        let err = fit_regression(&x, &[1.0, 2.0, 3.0, 5.0], 1, &["a".into(), "b".into()]).unwrap_err();
        assert!(matches!(err, Error::Collinear(_)));
    }

    #[test]
    fn quadratic_recovered() {
        let xs: Vec<f64> = (0..12).map(|i| i as f64 + 3.0).collect();
        let y: Vec<f64> = xs.iter().map(|x| 4.0 - 1.5 * x + 0.25 * x * x).collect();
        let fit = fit_regression(&Matrix::column_vector(&xs), &y, 2, &["age".into()]).unwrap();
        assert!(fit.perfect_fit);
        assert!((fit.r2 - 1.0).abs() < 1e-12);
        for (x, t) in xs.iter().zip(&y) {
            assert!((fit.predict_row(&[*x]) - t).abs() < 1e-9);
        }
        assert_eq!(fit.terms, vec!["intercept", "age^1", "age^2"]);
    }
}
