use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;

use super::operators::SymmetricOperator;
use crate::error::{invalid, Error, Result};
use crate::registry::{Named, Registry};

pub const DEFAULT_ESTIMATOR: &str = "lanczos";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormOptions {
    /// Target relative accuracy of the returned norm.
    pub tol: f64,
    /// Iteration cap; `None` means `min(10 n, 5000)`.
    pub max_iter: Option<usize>,
}

impl Default for NormOptions {
    fn default() -> Self {
        Self { tol: 1e-6, max_iter: None }
    }
}

impl NormOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self { tol, ..Self::default() }
    }

    fn cap(&self, n: usize) -> usize {
        self.max_iter.unwrap_or_else(|| (10 * n).min(5000)).max(1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormEstimate {
    pub value: f64,
    pub iterations: usize,
}

/// An algorithm for `max(|lambda_min|, |lambda_max|)` of a symmetric operator.
///
/// Implementations must only ever report values attained as `|x^T B x|`-type
/// Rayleigh quotients or `||B x||` for unit `x`, so that the value carried by
/// [`Error::ConvergenceFailure`] is a valid lower bound on the norm.
pub trait NormEstimator: Named + Send + Sync {
    fn estimate(
        &self,
        op: &dyn SymmetricOperator,
        opts: &NormOptions,
        rng: &mut dyn rand::RngCore,
    ) -> Result<NormEstimate>;
}

fn random_unit(n: usize, rng: &mut dyn rand::RngCore) -> Vec<f64> {
    loop {
        let x: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let norm = dot(&x, &x).sqrt();
        if norm > 0.0 {
            return x.into_iter().map(|v| v / norm).collect();
        }
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_options(opts: &NormOptions) -> Result<()> {
    if opts.tol > 0.0 && opts.tol.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("tolerance {} must be positive", opts.tol)))
    }
}

/// Power iteration on `B^2`, two applications of `B` per step.
///
/// Stops when the eigen-residual of `B^2` at the current iterate is below
/// `tol` times its Rayleigh quotient.
pub struct PowerIteration;

impl Named for PowerIteration {
    fn name(&self) -> &'static str {
        "power"
    }
}

impl NormEstimator for PowerIteration {
    fn estimate(
        &self,
        op: &dyn SymmetricOperator,
        opts: &NormOptions,
        rng: &mut dyn rand::RngCore,
    ) -> Result<NormEstimate> {
        check_options(opts)?;
        let n = op.dim();
        if n == 0 {
            return Ok(NormEstimate { value: 0.0, iterations: 0 });
        }
        let max_iter = opts.cap(n);
        let mut x = random_unit(n, rng);
        let mut y = vec![0.0; n];
        let mut z = vec![0.0; n];
        let mut best = 0.0_f64;
        for k in 1..=max_iter {
            op.apply(&x, &mut y);
            let sigma = dot(&y, &y).sqrt();
            best = best.max(sigma);
            if sigma == 0.0 {
                return Ok(NormEstimate { value: 0.0, iterations: k });
            }
            op.apply(&y, &mut z);
            let mu = sigma * sigma;
            let residual = z.iter().zip(&x).map(|(zi, xi)| (zi - mu * xi).powi(2)).sum::<f64>().sqrt();
            if residual <= opts.tol * mu {
                return Ok(NormEstimate { value: best, iterations: k });
            }
            let zn = dot(&z, &z).sqrt();
            x.iter_mut().zip(&z).for_each(|(xi, zi)| *xi = zi / zn);
        }
        Err(Error::ConvergenceFailure { iterations: max_iter, lower_bound: best })
    }
}

/// Lanczos with full reorthogonalization; returns the Ritz value of largest
/// magnitude once its residual bound falls below `tol` relative to it.
pub struct Lanczos;

impl Named for Lanczos {
    fn name(&self) -> &'static str {
        "lanczos"
    }
}

impl NormEstimator for Lanczos {
    fn estimate(
        &self,
        op: &dyn SymmetricOperator,
        opts: &NormOptions,
        rng: &mut dyn rand::RngCore,
    ) -> Result<NormEstimate> {
        check_options(opts)?;
        let n = op.dim();
        if n == 0 {
            return Ok(NormEstimate { value: 0.0, iterations: 0 });
        }
        let max_iter = opts.cap(n).min(n);
        let mut basis: Vec<Vec<f64>> = vec![random_unit(n, rng)];
        let mut alpha: Vec<f64> = Vec::new();
        let mut beta: Vec<f64> = Vec::new();
        let mut w = vec![0.0; n];
        let mut best = 0.0_f64;
        let mut scale = 0.0_f64;

        for k in 0..max_iter {
            op.apply(&basis[k], &mut w);
            let a = dot(&basis[k], &w);
            alpha.push(a);
            // Two passes of classical Gram-Schmidt against the whole basis.
            for _ in 0..2 {
                for q in &basis {
                    let c = dot(q, &w);
                    w.iter_mut().zip(q).for_each(|(wi, qi)| *wi -= c * qi);
                }
            }
            let b = dot(&w, &w).sqrt();
            scale = scale.max(a.abs()).max(b);

            let steps = k + 1;
            let exhausted = steps == max_iter || b <= 1e-13 * scale.max(f64::MIN_POSITIVE);
            if !(exhausted || steps <= 40 || steps % 4 == 0) {
                beta.push(b);
                basis.push(w.iter().map(|x| x / b).collect());
                continue;
            }

            let mut t = DMatrix::<f64>::zeros(steps, steps);
            for i in 0..steps {
                t[(i, i)] = alpha[i];
                if i + 1 < steps {
                    t[(i, i + 1)] = beta[i];
                    t[(i + 1, i)] = beta[i];
                }
            }
            let eig = SymmetricEigen::new(t);
            let (idx, theta) = eig
                .eigenvalues
                .iter()
                .copied()
                .enumerate()
                .max_by(|x, y| x.1.abs().total_cmp(&y.1.abs()))
                .expect("non-empty tridiagonal");
            best = best.max(theta.abs());
            let residual = b * eig.eigenvectors[(steps - 1, idx)].abs();
            if b <= 1e-13 * scale.max(f64::MIN_POSITIVE) || residual <= opts.tol * theta.abs() {
                return Ok(NormEstimate { value: theta.abs(), iterations: steps });
            }
            if steps == n {
                // Full Krylov space: the Ritz values are the eigenvalues.
                return Ok(NormEstimate { value: theta.abs(), iterations: steps });
            }
            if steps == max_iter {
                break;
            }
            beta.push(b);
            basis.push(w.iter().map(|x| x / b).collect());
        }
        Err(Error::ConvergenceFailure { iterations: max_iter, lower_bound: best })
    }
}

pub fn estimator_registry() -> Registry<dyn NormEstimator> {
    let mut reg: Registry<dyn NormEstimator> = Registry::new("norm estimator");
    reg.register(Box::new(Lanczos)).register(Box::new(PowerIteration));
    reg
}

/// Spectral norm with the default estimator.
pub fn spectral_norm<R: rand::RngCore>(
    op: &dyn SymmetricOperator,
    opts: &NormOptions,
    rng: &mut R,
) -> Result<NormEstimate> {
    Lanczos.estimate(op, opts, rng)
}
