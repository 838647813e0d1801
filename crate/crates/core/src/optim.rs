//! Minimizers used by the estimator: a Nelder-Mead simplex search, a BFGS
//! quasi-Newton refinement with central-difference gradients, and a
//! finite-difference Hessian.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Relative change in the objective, `|df| <= ftol * (1 + |f|)`.
    pub ftol: f64,
    /// Change in parameters, `max |dx_j| <= xtol * (1 + |x_j|)`.
    pub xtol: f64,
    pub max_evals: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub evals: usize,
    pub converged: bool,
}

/// Counts objective evaluations and maps non-finite values to `+inf`
/// surrogates large enough to be rejected by every comparison.
struct Counted<F> {
    f: F,
    evals: usize,
}

impl<F: FnMut(&[f64]) -> f64> Counted<F> {
    fn call(&mut self, x: &[f64]) -> f64 {
        self.evals += 1;
        let v = (self.f)(x);
        if v.is_nan() {
            f64::MAX
        } else {
            v
        }
    }
}

/// Nelder-Mead with adaptive coefficients (Gao and Han) for higher
/// dimensions. `steps` sets the initial simplex edge per coordinate.
pub fn nelder_mead<F>(f: F, x0: &[f64], steps: &[f64], tol: Tolerances) -> Minimum
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x0.len();
    let mut obj = Counted { f, evals: 0 };
    if n == 0 {
        let fx = obj.call(x0);
        return Minimum {
            x: x0.to_vec(),
            f: fx,
            evals: obj.evals,
            converged: true,
        };
    }
    let nf = n as f64;
    let (alpha, gamma, rho, sigma) = (1.0, 1.0 + 2.0 / nf, 0.75 - 1.0 / (2.0 * nf), 1.0 - 1.0 / nf);

    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    simplex.push(x0.to_vec());
    for j in 0..n {
        let mut v = x0.to_vec();
        v[j] += steps[j];
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| obj.call(v)).collect();
    let mut converged = false;

    while obj.evals < tol.max_evals {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();

        let best = values[0];
        let worst = values[n];
        let f_spread = (worst - best).abs();
        let x_spread = (1..=n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .map(|(i, j)| (simplex[i][j] - simplex[0][j]).abs() / (1.0 + simplex[0][j].abs()))
            .fold(0.0, f64::max);
        if f_spread <= tol.ftol * (1.0 + best.abs()) && x_spread <= tol.xtol {
            converged = true;
            break;
        }

        let centroid: Vec<f64> = (0..n)
            .map(|j| simplex[..n].iter().map(|v| v[j]).sum::<f64>() / nf)
            .collect();
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[n])
                .map(|(c, w)| c + t * (c - w))
                .collect()
        };

        let xr = along(alpha);
        let fr = obj.call(&xr);
        if fr < values[0] {
            let xe = along(alpha * gamma);
            let fe = obj.call(&xe);
            if fe < fr {
                simplex[n] = xe;
                values[n] = fe;
            } else {
                simplex[n] = xr;
                values[n] = fr;
            }
            continue;
        }
        if fr < values[n - 1] {
            simplex[n] = xr;
            values[n] = fr;
            continue;
        }
        let (xc, fc) = if fr < values[n] {
            let xc = along(alpha * rho);
            let fc = obj.call(&xc);
            (xc, fc.min(f64::MAX))
        } else {
            let xc = along(-rho);
            let fc = obj.call(&xc);
            (xc, fc)
        };
        if fc < fr.min(values[n]) {
            simplex[n] = xc;
            values[n] = fc;
            continue;
        }
        // Shrink towards the best vertex.
        for i in 1..=n {
            for j in 0..n {
                simplex[i][j] = simplex[0][j] + sigma * (simplex[i][j] - simplex[0][j]);
            }
            values[i] = obj.call(&simplex[i]);
        }
    }

    let best = (0..=n)
        .min_by(|&a, &b| values[a].total_cmp(&values[b]))
        .unwrap_or(0);
    Minimum {
        x: simplex[best].clone(),
        f: values[best],
        evals: obj.evals,
        converged,
    }
}

fn fd_step(x: f64) -> f64 {
    1e-5 * (1.0 + x.abs())
}

fn central_gradient<F: FnMut(&[f64]) -> f64>(obj: &mut Counted<F>, x: &[f64]) -> Vec<f64> {
    let mut g = vec![0.0; x.len()];
    let mut probe = x.to_vec();
    for j in 0..x.len() {
        let h = fd_step(x[j]);
        probe[j] = x[j] + h;
        let up = obj.call(&probe);
        probe[j] = x[j] - h;
        let down = obj.call(&probe);
        probe[j] = x[j];
        g[j] = (up - down) / (2.0 * h);
    }
    g
}

/// BFGS with central-difference gradients and a backtracking Armijo line
/// search.
pub fn bfgs<F>(f: F, x0: &[f64], tol: Tolerances) -> Minimum
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x0.len();
    let mut obj = Counted { f, evals: 0 };
    let mut x = DVector::from_column_slice(x0);
    let mut fx = obj.call(x0);
    let mut g = DVector::from_vec(central_gradient(&mut obj, x.as_slice()));
    let mut hinv = DMatrix::<f64>::identity(n, n);
    let mut converged = false;
    let mut fresh_start = true;

    while obj.evals < tol.max_evals {
        if g.iter().any(|v| !v.is_finite()) {
            break;
        }
        let mut dir = -(&hinv * &g);
        let mut slope = g.dot(&dir);
        if slope >= 0.0 {
            hinv = DMatrix::identity(n, n);
            dir = -g.clone();
            slope = g.dot(&dir);
            if slope >= 0.0 {
                converged = true;
                break;
            }
        }
        // First steps of a fresh start are scaled to unit length.
        let mut step = if fresh_start {
            (1.0 / dir.norm()).min(1.0)
        } else {
            1.0
        };
        let mut accepted = None;
        for _ in 0..40 {
            let trial = &x + step * &dir;
            let ft = obj.call(trial.as_slice());
            if ft <= fx + 1e-4 * step * slope {
                accepted = Some((trial, ft));
                break;
            }
            step *= 0.5;
        }
        let Some((x_new, f_new)) = accepted else {
            // No descent along the quasi-Newton direction: gradient noise
            // dominates, so the point is stationary to working precision.
            converged = fresh_start;
            if !fresh_start {
                hinv = DMatrix::identity(n, n);
                fresh_start = true;
                continue;
            }
            break;
        };
        fresh_start = false;
        let dx = &x_new - &x;
        let df = fx - f_new;
        let g_new = DVector::from_vec(central_gradient(&mut obj, x_new.as_slice()));
        let small_f = df.abs() <= tol.ftol * (1.0 + f_new.abs());
        let small_x = dx
            .iter()
            .zip(x_new.iter())
            .all(|(d, xi)| d.abs() <= tol.xtol * (1.0 + xi.abs()));
        let dg = &g_new - &g;
        let sy = dx.dot(&dg);
        if sy > 1e-12 * dx.norm() * dg.norm() {
            let rho = 1.0 / sy;
            let eye = DMatrix::<f64>::identity(n, n);
            let left = &eye - rho * &dx * dg.transpose();
            let right = &eye - rho * &dg * dx.transpose();
            hinv = &left * &hinv * &right + rho * &dx * dx.transpose();
        }
        x = x_new;
        fx = f_new;
        g = g_new;
        if small_f && small_x {
            converged = true;
            break;
        }
    }
    Minimum {
        x: x.as_slice().to_vec(),
        f: fx,
        evals: obj.evals,
        converged,
    }
}

/// Hessian from central differences of central-difference gradients.
/// Returns the symmetrized matrix and the largest raw asymmetry
/// `max |H_ij - H_ji|`.
pub fn numerical_hessian<F>(mut f: F, x: &[f64], steps: &[f64]) -> (DMatrix<f64>, f64)
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x.len();
    let mut grad_at = |p: &[f64]| -> Vec<f64> {
        let mut g = vec![0.0; n];
        let mut probe = p.to_vec();
        for i in 0..n {
            let h = steps[i];
            probe[i] = p[i] + h;
            let up = f(&probe);
            probe[i] = p[i] - h;
            let down = f(&probe);
            probe[i] = p[i];
            g[i] = (up - down) / (2.0 * h);
        }
        g
    };
    let mut h = DMatrix::<f64>::zeros(n, n);
    let mut probe = x.to_vec();
    for j in 0..n {
        probe[j] = x[j] + steps[j];
        let up = grad_at(&probe);
        probe[j] = x[j] - steps[j];
        let down = grad_at(&probe);
        probe[j] = x[j];
        for i in 0..n {
            h[(i, j)] = (up[i] - down[i]) / (2.0 * steps[j]);
        }
    }
    let mut asym: f64 = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            asym = asym.max((h[(i, j)] - h[(j, i)]).abs());
        }
    }
    let sym = (&h + h.transpose()) * 0.5;
    (sym, asym)
}

/// Diagonal of the inverse of a symmetric matrix that should be positive
/// definite. Coordinates loading on a non-positive eigen-direction get
/// `None`.
pub fn inverse_diagonal(h: &DMatrix<f64>) -> Vec<Option<f64>> {
    let n = h.nrows();
    if let Some(chol) = h.clone().cholesky() {
        let inv = chol.inverse();
        return (0..n)
            .map(|i| {
                let v = inv[(i, i)];
                (v.is_finite() && v > 0.0).then_some(v)
            })
            .collect();
    }
    let eig = SymmetricEigen::new(h.clone());
    let scale = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let floor = 1e-12 * scale.max(f64::MIN_POSITIVE);
    let mut bad = vec![false; n];
    let mut diag = vec![0.0; n];
    for (e, lambda) in eig.eigenvalues.iter().enumerate() {
        let vec = eig.eigenvectors.column(e);
        if *lambda <= floor {
            for i in 0..n {
                if vec[i] * vec[i] > 1e-3 {
                    bad[i] = true;
                }
            }
        } else {
            for i in 0..n {
                diag[i] += vec[i] * vec[i] / lambda;
            }
        }
    }
    (0..n)
        .map(|i| (!bad[i] && diag[i] > 0.0).then_some(diag[i]))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOL: Tolerances = Tolerances {
        ftol: 1e-12,
        xtol: 1e-8,
        max_evals: 20_000,
    };

    fn rosenbrock(x: &[f64]) -> f64 {
        (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2)
    }

    #[test]
    fn nelder_mead_rosenbrock() {
        let m = nelder_mead(rosenbrock, &[-1.2, 1.0], &[0.5, 0.5], TOL);
        assert!(m.converged);
        assert!((m.x[0] - 1.0).abs() < 1e-4 && (m.x[1] - 1.0).abs() < 1e-4, "{:?}", m.x);
    }

    #[test]
    fn nelder_mead_quadratic_8d() {
        let f = |x: &[f64]| x.iter().enumerate().map(|(i, v)| (i + 1) as f64 * (v - 1.0).powi(2)).sum();
        let m = nelder_mead(f, &[0.0; 8], &[0.5; 8], TOL);
        assert!(m.x.iter().all(|v| (v - 1.0).abs() < 1e-3), "{:?}", m.x);
    }

    #[test]
    fn bfgs_rosenbrock() {
        let m = bfgs(rosenbrock, &[-1.2, 1.0], TOL);
        assert!((m.x[0] - 1.0).abs() < 1e-4 && (m.x[1] - 1.0).abs() < 1e-4, "{:?}", m.x);
    }

    #[test]
    fn bfgs_respects_eval_budget() {
        let tol = Tolerances { max_evals: 30, ..TOL };
        let m = bfgs(rosenbrock, &[-1.2, 1.0], tol);
        assert!(!m.converged);
        assert!(m.evals < 30 + 50);
    }

    #[test]
    fn hessian_of_quadratic() {
        let v = [0.5, 2.0, 9.0];
        let f = |x: &[f64]| 0.5 * x.iter().zip(&v).map(|(a, b)| a * a / b).sum::<f64>();
        let (h, asym) = numerical_hessian(f, &[0.1, -0.3, 2.0], &[1e-3; 3]);
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 1.0 / v[i] } else { 0.0 };
                assert!((h[(i, j)] - expect).abs() < 1e-6);
            }
        }
        assert!(asym < 1e-6);
        let d = inverse_diagonal(&h);
        for i in 0..3 {
            assert!((d[i].unwrap() - v[i]).abs() < 1e-4 * v[i]);
        }
    }

    #[test]
    fn indefinite_hessian_flags_coordinates() {
        let h = DMatrix::from_row_slice(3, 3, &[2.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, 4.0]);
        let d = inverse_diagonal(&h);
        assert!((d[0].unwrap() - 0.5).abs() < 1e-12);
        assert!(d[1].is_none());
        assert!((d[2].unwrap() - 0.25).abs() < 1e-12);
    }
}
