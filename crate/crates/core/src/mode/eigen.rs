//! Shift-invert Lanczos for the symmetric standard eigenproblem `M y = lambda y`.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, SymmetricEigen};

use super::banded::{BandLdlt, SymmetricBand};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct Eigenpair {
    pub value: f64,
    /// Unit-norm eigenvector.
    pub vector: Vec<f64>,
    /// `||M y - lambda y|| / (|lambda| ||y||)`.
    pub residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    libm::sqrt(dot(a, a))
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    y.iter_mut().zip(x).for_each(|(v, u)| *v += alpha * u);
}

pub(crate) fn relative_residual(m: &SymmetricBand, y: &[f64], lambda: f64) -> f64 {
    let mut my = vec![0.0; y.len()];
    m.matvec(y, &mut my);
    axpy(-lambda, y, &mut my);
    norm(&my) / (lambda.abs() * norm(y))
}

/// Lanczos on `(M - shift)^{-1}`; returns the `nev` Ritz pairs nearest to
/// `shift`, sorted by eigenvalue.
fn lanczos(
    m: &SymmetricBand,
    fact: &BandLdlt,
    shift: f64,
    nev: usize,
    max_steps: usize,
) -> Result<Vec<Eigenpair>> {
    let n = m.dim();
    let steps = max_steps.min(n).max(nev + 1);

    let mut q0: Vec<f64> = (0..n).map(|i| 1.0 + 0.5 * libm::sin(1.7 * i as f64 + 0.3)).collect();
    let s = norm(&q0);
    q0.iter_mut().for_each(|v| *v /= s);

    let mut basis: Vec<Vec<f64>> = vec![q0];
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut best: Option<(Vec<f64>, DMatrix<f64>, Vec<usize>)> = None;

    for k in 0..steps {
        let mut w = basis[k].clone();
        fact.solve_in_place(&mut w);
        let a = dot(&basis[k], &w);
        alpha.push(a);
        axpy(-a, &basis[k], &mut w);
        if k > 0 {
            axpy(-beta[k - 1], &basis[k - 1], &mut w);
        }
        // two passes of full reorthogonalization
        for _ in 0..2 {
            for q in &basis {
                let c = dot(q, &w);
                axpy(-c, q, &mut w);
            }
        }
        let b = norm(&w);

        let dim = k + 1;
        let check = dim >= nev && (dim % 5 == 0 || dim == steps || b < 1e-300);
        if check {
            let t = tridiagonal(&alpha, &beta);
            let eig = SymmetricEigen::new(t);
            // largest |theta| first: nearest to the shift
            let mut order: Vec<usize> = (0..dim).collect();
            order.sort_by(|&i, &j| eig.eigenvalues[j].abs().total_cmp(&eig.eigenvalues[i].abs()));
            let wanted: Vec<usize> = order.into_iter().take(nev).collect();
            let converged = wanted.iter().all(|&i| {
                let theta = eig.eigenvalues[i];
                (b * eig.eigenvectors[(dim - 1, i)]).abs() <= 1e-13 * theta.abs()
            });
            let vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
            best = Some((vals, eig.eigenvectors.clone(), wanted));
            if converged {
                break;
            }
        }
        if b < 1e-300 || k + 1 == steps {
            break;
        }
        beta.push(b);
        w.iter_mut().for_each(|v| *v /= b);
        basis.push(w);
    }

    let (vals, vecs, wanted) = best.ok_or(Error::NoConvergence { residual: f64::INFINITY })?;
    let dim = vals.len();
    let mut pairs = Vec::with_capacity(wanted.len());
    for &i in &wanted {
        let theta = vals[i];
        let lambda = shift + 1.0 / theta;
        let mut y = vec![0.0; n];
        for j in 0..dim {
            axpy(vecs[(j, i)], &basis[j], &mut y);
        }
        let s = norm(&y);
        y.iter_mut().for_each(|v| *v /= s);
        let residual = relative_residual(m, &y, lambda);
        pairs.push(Eigenpair { value: lambda, vector: y, residual });
    }
    pairs.sort_by(|a, b| a.value.total_cmp(&b.value));
    Ok(pairs)
}

fn tridiagonal(alpha: &[f64], beta: &[f64]) -> DMatrix<f64> {
    let d = alpha.len();
    let mut t = DMatrix::zeros(d, d);
    for i in 0..d {
        t[(i, i)] = alpha[i];
        if i + 1 < d {
            t[(i, i + 1)] = beta[i];
            t[(i + 1, i)] = beta[i];
        }
    }
    t
}

/// One step of Rayleigh quotient iteration with a fresh factorization.
pub(crate) fn refine(m: &SymmetricBand, pair: &mut Eigenpair) -> Result<()> {
    let fact: BandLdlt = match m.shifted(pair.value).ldlt() {
        Ok(f) => f,
        // the shift sits on the eigenvalue: nothing left to refine
        Err(Error::NoConvergence { .. }) => return Ok(()),
        Err(e) => return Err(e),
    };
    let mut y = pair.vector.clone();
    fact.solve_in_place(&mut y);
    let s = norm(&y);
    y.iter_mut().for_each(|v| *v /= s);
    let mut my = vec![0.0; y.len()];
    m.matvec(&y, &mut my);
    let lambda = dot(&y, &my);
    let residual = relative_residual(m, &y, lambda);
    if residual < pair.residual {
        *pair = Eigenpair { value: lambda, vector: y, residual };
    }
    Ok(())
}

/// The `count` smallest eigenpairs, using `guess` to place the first shift.
///
/// The shift is lowered until the Sylvester inertia confirms that every
/// eigenvalue below it was found.
pub fn lowest_eigenpairs(m: &SymmetricBand, guess: f64, count: usize) -> Result<Vec<Eigenpair>> {
    let mut shift = guess;
    for _ in 0..16 {
        let fact = match m.shifted(shift).ldlt() {
            Ok(f) => f,
            Err(Error::NoConvergence { .. }) => {
                // singular shift: nudge it
                shift *= 0.97;
                continue;
            }
            Err(e) => return Err(e),
        };
        let inertia = fact.negative_pivots();
        if inertia > 12 {
            shift *= 0.5;
            continue;
        }
        let pairs = lanczos(m, &fact, shift, inertia + count + 1, 150)?;
        let below = pairs.iter().filter(|p| p.value < shift).count();
        if below >= inertia && pairs.len() >= count {
            let mut out: Vec<Eigenpair> = pairs.into_iter().take(count).collect();
            for p in &mut out {
                for _ in 0..2 {
                    if p.residual <= 1e-10 {
                        break;
                    }
                    refine(m, p)?;
                }
                if !(p.residual <= 1e-8) {
                    return Err(Error::NoConvergence { residual: p.residual });
                }
            }
            return Ok(out);
        }
        shift *= 0.5;
    }
    Err(Error::NoConvergence { residual: f64::INFINITY })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lowest_of_laplacian() {
        let n = 200;
        let mut a = SymmetricBand::zeros(n, 1);
        for i in 0..n {
            a.add(i, i, 2.0);
            if i > 0 {
                a.add(i, i - 1, -1.0);
            }
        }
        let exact = |k: usize| 2.0 - 2.0 * libm::cos(k as f64 * core::f64::consts::PI / (n as f64 + 1.0));
        // guess deliberately above several eigenvalues
        let pairs = lowest_eigenpairs(&a, exact(6), 2).unwrap();
        assert!((pairs[0].value - exact(1)).abs() < 1e-12);
        assert!((pairs[1].value - exact(2)).abs() < 1e-12);
        assert!(pairs[0].residual < 1e-8);
    }
}
