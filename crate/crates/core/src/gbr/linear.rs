//! Linear baselines with an unpenalized intercept.
//!
//! OLS and ridge solve the centered normal equations by Cholesky
//! factorization; lasso and elastic net use cyclic coordinate descent on
//! (1/2n)‖y − b − Xw‖² + λ(α‖w‖₁ + ½(1 − α)‖w‖²).

use std::fmt;

use super::{check_rows, Dataset};
use crate::error::{Error, Result};

const CD_TOLERANCE: f64 = 1e-8;
const CD_MAX_SWEEPS: usize = 10_000;
/// Relative pivot below which a column counts as linearly dependent.
const PIVOT_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LinearKind {
    Ols,
    Ridge { lambda: f64 },
    Lasso { lambda: f64 },
    ElasticNet { lambda: f64, alpha: f64 },
}

impl fmt::Display for LinearKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            LinearKind::Ols => write!(f, "ols"),
            LinearKind::Ridge { lambda } => write!(f, "ridge(lambda={lambda})"),
            LinearKind::Lasso { lambda } => write!(f, "lasso(lambda={lambda})"),
            LinearKind::ElasticNet { lambda, alpha } => {
                write!(f, "elasticnet(lambda={lambda},alpha={alpha})")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub kind: LinearKind,
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    /// Coordinate-descent sweeps used; zero for closed-form fits.
    pub sweeps: usize,
}

impl LinearModel {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.intercept + row.iter().zip(&self.coefficients).map(|(x, w)| x * w).sum::<f64>()
    }

    pub fn predict(&self, rows: &[Vec<f64>]) -> Result<Vec<f64>> {
        check_rows(rows, self.coefficients.len())?;
        Ok(rows.iter().map(|r| self.predict_row(r)).collect())
    }
}

struct Centered {
    /// Column-major centered features.
    cols: Vec<Vec<f64>>,
    x_mean: Vec<f64>,
    y: Vec<f64>,
    y_mean: f64,
}

fn center(data: &Dataset) -> Centered {
    let n = data.len() as f64;
    let d = data.n_features();
    let x_mean: Vec<f64> = (0..d)
        .map(|j| data.rows().iter().map(|r| r[j]).sum::<f64>() / n)
        .collect();
    let cols = (0..d)
        .map(|j| data.rows().iter().map(|r| r[j] - x_mean[j]).collect())
        .collect();
    let y_mean = data.targets().iter().sum::<f64>() / n;
    let y = data.targets().iter().map(|v| v - y_mean).collect();
    Centered {
        cols,
        x_mean,
        y,
        y_mean,
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn fit_baseline(data: &Dataset, kind: LinearKind) -> Result<LinearModel> {
    let bad_lambda = |l: f64| !(l >= 0.0 && l.is_finite());
    match kind {
        LinearKind::Ridge { lambda } | LinearKind::Lasso { lambda } if bad_lambda(lambda) => {
            return Err(Error::InvalidInput(format!("lambda {lambda} must be >= 0")));
        }
        LinearKind::ElasticNet { lambda, alpha } if bad_lambda(lambda) || !(0.0..=1.0).contains(&alpha) => {
            return Err(Error::InvalidInput(format!(
                "elastic net needs lambda >= 0 and alpha in [0, 1], got {lambda}, {alpha}"
            )));
        }
        _ => {}
    }
    let c = center(data);
    let (coefficients, sweeps) = match kind {
        LinearKind::Ols => (normal_equations(&c, 0.0, data.feature_names())?, 0),
        LinearKind::Ridge { lambda } => (normal_equations(&c, lambda, data.feature_names())?, 0),
        LinearKind::Lasso { lambda } => coordinate_descent(&c, lambda, 1.0),
        LinearKind::ElasticNet { lambda, alpha } => coordinate_descent(&c, lambda, alpha),
    };
    let intercept = c.y_mean - dot(&c.x_mean, &coefficients);
    Ok(LinearModel {
        kind,
        intercept,
        coefficients,
        sweeps,
    })
}

/// Solves (XᵀX + λI)w = Xᵀy by incremental Cholesky, so a column whose
/// pivot vanishes can be reported together with the earlier columns that
/// reproduce it.
fn normal_equations(c: &Centered, lambda: f64, names: &[String]) -> Result<Vec<f64>> {
    let d = c.cols.len();
    let gram = |i: usize, j: usize| dot(&c.cols[i], &c.cols[j]) + if i == j { lambda } else { 0.0 };
    // rows of the lower-triangular factor, one per accepted column
    let mut factor: Vec<Vec<f64>> = Vec::with_capacity(d);
    let mut accepted: Vec<usize> = Vec::with_capacity(d);
    let mut collinear: Vec<String> = Vec::new();

    for j in 0..d {
        let g: Vec<f64> = accepted.iter().map(|&k| gram(k, j)).collect();
        let l = forward_substitute(&factor, &g);
        let diag = gram(j, j);
        let pivot = diag - dot(&l, &l);
        if pivot > PIVOT_TOLERANCE * diag && diag > 0.0 {
            let mut row = l;
            row.push(pivot.sqrt());
            factor.push(row);
            accepted.push(j);
            continue;
        }
        if diag <= 0.0 {
            collinear.push(format!("{} (constant)", names[j]));
            continue;
        }
        // x_j ≈ Σ a_k x_k over the accepted columns
        let a = back_substitute(&factor, &l);
        let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut group: Vec<String> = a
            .iter()
            .zip(&accepted)
            .filter(|(v, _)| v.abs() > 1e-8 * scale)
            .map(|(_, &k)| names[k].clone())
            .collect();
        group.push(names[j].clone());
        collinear.push(group.join(" ~ "));
    }
    if !collinear.is_empty() {
        return Err(Error::Singular(collinear));
    }
    let rhs: Vec<f64> = c.cols.iter().map(|col| dot(col, &c.y)).collect();
    let z = forward_substitute(&factor, &rhs);
    Ok(back_substitute(&factor, &z))
}

/// Solves L z = b for the leading rows of the factor.
fn forward_substitute(factor: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let mut z: Vec<f64> = Vec::with_capacity(b.len());
    for (i, &bi) in b.iter().enumerate() {
        let s: f64 = (0..i).map(|k| factor[i][k] * z[k]).sum();
        z.push((bi - s) / factor[i][i]);
    }
    z
}

/// Solves Lᵀ w = z.
fn back_substitute(factor: &[Vec<f64>], z: &[f64]) -> Vec<f64> {
    let m = z.len();
    let mut w = vec![0.0; m];
    for i in (0..m).rev() {
        let s: f64 = (i + 1..m).map(|k| factor[k][i] * w[k]).sum();
        w[i] = (z[i] - s) / factor[i][i];
    }
    w
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

fn coordinate_descent(c: &Centered, lambda: f64, alpha: f64) -> (Vec<f64>, usize) {
    let n = c.y.len() as f64;
    let d = c.cols.len();
    let l1 = lambda * alpha;
    let l2 = lambda * (1.0 - alpha);
    let sq: Vec<f64> = c.cols.iter().map(|col| dot(col, col) / n).collect();
    let mut w = vec![0.0; d];
    let mut resid = c.y.clone();

    for sweep in 1..=CD_MAX_SWEEPS {
        for j in 0..d {
            if sq[j] == 0.0 {
                continue;
            }
            let col = &c.cols[j];
            let rho = dot(col, &resid) / n + sq[j] * w[j];
            let new = soft_threshold(rho, l1) / (sq[j] + l2);
            let delta = new - w[j];
            if delta != 0.0 {
                for (r, x) in resid.iter_mut().zip(col) {
                    *r -= delta * x;
                }
                w[j] = new;
            }
        }
        // largest violation of the subgradient optimality conditions
        let violation = (0..d)
            .filter(|&j| sq[j] > 0.0)
            .map(|j| {
                let g = -dot(&c.cols[j], &resid) / n + l2 * w[j];
                if w[j] != 0.0 {
                    (g + l1 * w[j].signum()).abs()
                } else {
                    (g.abs() - l1).max(0.0)
                }
            })
            .fold(0.0, f64::max);
        if violation < CD_TOLERANCE {
            return (w, sweep);
        }
    }
    (w, CD_MAX_SWEEPS)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn two_col(rows: &[[f64; 2]], y: &[f64]) -> Dataset {
        Dataset::new(
            rows.iter().map(|r| r.to_vec()).collect(),
            y.to_vec(),
            vec!["a".into(), "b".into()],
        )
        .unwrap()
    }

    #[test]
    fn ols_recovers_exact_line() {
        let x: Vec<f64> = (0..10).map(|i| i as f64 * 0.7 - 2.0).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        let m = fit_baseline(&Dataset::from_column(&x, &y).unwrap(), LinearKind::Ols).unwrap();
        assert!((m.coefficients[0] - 2.0).abs() < 1e-10);
        assert!((m.intercept - 1.0).abs() < 1e-10);
    }

    #[test]
    fn lasso_full_shrinkage() {
        let x: Vec<f64> = (0..10).map(f64::from).collect();
        let y: Vec<f64> = x.iter().map(|v| 3.0 * v - 4.0 + (v * 1.3).sin()).collect();
        let mean = y.iter().sum::<f64>() / 10.0;
        for kind in [
            LinearKind::Lasso { lambda: 1e12 },
            LinearKind::ElasticNet { lambda: 1e12, alpha: 0.5 },
        ] {
            let m = fit_baseline(&Dataset::from_column(&x, &y).unwrap(), kind).unwrap();
            if let LinearKind::Lasso { .. } = kind {
                assert_eq!(m.coefficients, vec![0.0]);
                assert_eq!(m.intercept, mean);
            } else {
                assert!(m.coefficients[0].abs() < 1e-9);
            }
        }
    }

    #[test]
    fn ols_names_collinear_columns() {
        let rows = [[1.0, 2.0], [2.0, 4.0], [3.0, 6.0], [5.0, 10.0]];
        let err = fit_baseline(&two_col(&rows, &[1.0, 2.0, 3.0, 4.0]), LinearKind::Ols).unwrap_err();
        match err {
            Error::Singular(cols) => assert_eq!(cols, vec!["a ~ b".to_string()]),
            other => panic!("{other:?}"),
        }
        let constant = [[1.0, 7.0], [2.0, 7.0], [3.0, 7.0]];
        let err = fit_baseline(&two_col(&constant, &[1.0, 2.0, 3.0]), LinearKind::Ols).unwrap_err();
        assert!(err.to_string().contains("b (constant)"));
    }

    /// Independent closed-form route: Gauss-Jordan on the uncentered
    /// augmented system with an unpenalized intercept column.
    fn gauss_jordan_ridge(rows: &[Vec<f64>], y: &[f64], lambda: f64) -> Vec<f64> {
        let d = rows[0].len() + 1;
        let aug: Vec<Vec<f64>> = rows.iter().map(|r| std::iter::once(1.0).chain(r.iter().copied()).collect()).collect();
        let mut a = vec![vec![0.0; d + 1]; d];
        for i in 0..d {
            for j in 0..d {
                a[i][j] = aug.iter().map(|r| r[i] * r[j]).sum::<f64>() + if i == j && i > 0 { lambda } else { 0.0 };
            }
            a[i][d] = aug.iter().zip(y).map(|(r, yv)| r[i] * yv).sum();
        }
        for p in 0..d {
            let piv = (p..d).max_by(|&x, &z| a[x][p].abs().total_cmp(&a[z][p].abs())).unwrap();
            a.swap(p, piv);
            let div = a[p][p];
            for v in a[p].iter_mut() {
                *v /= div;
            }
            for r in 0..d {
                if r != p {
                    let f = a[r][p];
                    let src = a[p].clone();
                    for (v, s) in a[r].iter_mut().zip(&src) {
                        *v -= f * s;
                    }
                }
            }
        }
        a.iter().map(|r| r[d]).collect()
    }

    #[test]
    fn ridge_splits_duplicated_columns_equally() {
        let x = [0.5, 1.0, 2.0, 3.5, 4.0, 6.0];
        let y = [1.0, 2.5, 3.9, 7.2, 8.1, 12.5];
        let rows: Vec<[f64; 2]> = x.iter().map(|&v| [v, v]).collect();
        let m = fit_baseline(&two_col(&rows, &y), LinearKind::Ridge { lambda: 1.0 }).unwrap();
        assert!((m.coefficients[0] - m.coefficients[1]).abs() < 1e-12);
        let oracle = gauss_jordan_ridge(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>(), &y, 1.0);
        assert!((m.intercept - oracle[0]).abs() < 1e-9);
        assert!((m.coefficients[0] - oracle[1]).abs() < 1e-9);
        assert!((m.coefficients[1] - oracle[2]).abs() < 1e-9);
    }

    #[test]
    fn ols_matches_grid_refinement() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..5 {
            let n = rng.gen_range(4..=6);
            let rows: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)]).collect();
            let y: Vec<f64> = rows.iter().map(|r| 0.5 * r[0] - 1.5 * r[1] + 0.3 + rng.gen_range(-0.3..0.3)).collect();
            let d = Dataset::new(rows.clone(), y.clone(), vec!["a".into(), "b".into()]).unwrap();
            let m = fit_baseline(&d, LinearKind::Ols).unwrap();
            let sse = |p: &[f64; 3]| -> f64 {
                rows.iter().zip(&y).map(|(r, t)| (t - p[0] - p[1] * r[0] - p[2] * r[1]).powi(2)).sum()
            };
            // coordinate-wise grid refinement of the loss surface
            let mut best = [0.0f64; 3];
            let mut step = 4.0;
            while step > 1e-7 {
                let mut improved = true;
                while improved {
                    improved = false;
                    for k in 0..3 {
                        for s in [-step, step] {
                            let mut cand = best;
                            cand[k] += s;
                            if sse(&cand) < sse(&best) {
                                best = cand;
                                improved = true;
                            }
                        }
                    }
                }
                step /= 2.0;
            }
            assert!((m.intercept - best[0]).abs() < 1e-4, "{} vs {}", m.intercept, best[0]);
            assert!((m.coefficients[0] - best[1]).abs() < 1e-4);
            assert!((m.coefficients[1] - best[2]).abs() < 1e-4);
        }
    }

    #[test]
    fn elastic_net_converges_and_satisfies_kkt() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        let rows: Vec<Vec<f64>> = (0..50).map(|_| (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let y: Vec<f64> = rows.iter().map(|r| 2.0 * r[0] - r[2] + 0.1 * rng.gen_range(-1.0..1.0)).collect();
        let names = (0..4).map(|i| format!("x{i}")).collect();
        let d = Dataset::new(rows, y, names).unwrap();
        let m = fit_baseline(&d, LinearKind::ElasticNet { lambda: 0.05, alpha: 0.7 }).unwrap();
        assert!(m.sweeps < CD_MAX_SWEEPS);
        assert!(m.coefficients[0] > 1.5 && m.coefficients[2] < -0.5);
        let small = fit_baseline(&d, LinearKind::Lasso { lambda: 0.3 }).unwrap();
        assert!(small.coefficients.iter().filter(|w| **w == 0.0).count() >= 2);
    }

    #[test]
    fn parameter_validation() {
        let d = Dataset::from_column(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap();
        assert!(fit_baseline(&d, LinearKind::Ridge { lambda: -1.0 }).is_err());
        assert!(fit_baseline(&d, LinearKind::ElasticNet { lambda: 1.0, alpha: 1.5 }).is_err());
        let m = fit_baseline(&d, LinearKind::Ridge { lambda: 0.0 }).unwrap();
        assert!((m.coefficients[0] - 1.0).abs() < 1e-12);
        assert!(m.predict(&[vec![1.0, 2.0]]).is_err());
    }
}
