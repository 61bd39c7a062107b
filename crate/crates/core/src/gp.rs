//! Gaussian-process regression on a one-dimensional budget axis.
//!
//! The model is a zero-mean GP with a squared-exponential (RBF) kernel:
//!
//! ```text
//! k(a, b)   = σ_f² · exp(−(a − b)² / (2 l²))
//! μ(x*)     = k*ᵀ (K + σ_n² W)⁻¹ y
//! σ²(x*)    = k(x*, x*) − k*ᵀ (K + σ_n² W)⁻¹ k*
//! ```
//!
//! `W` is a diagonal of per-point noise inflation factors (all ones unless a
//! caller down-weights old observations). Kernel hyperparameters are fixed;
//! there is no marginal-likelihood optimization.
//!
//! The GP itself is unit-agnostic. Callers that want one length scale to mean
//! the same thing across campaigns of different size normalize inputs before
//! building a [`GpDataset`] (the allocation policies divide by the grid max).

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::Cholesky;

/// First jitter tried (relative to `σ_f²`) when the plain factorization fails.
const JITTER_START: f64 = 1e-8;
/// Largest jitter tried before giving up.
const JITTER_MAX: f64 = 1e-2;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RbfKernel {
    pub signal_variance: f64,
    pub length_scale: f64,
}

impl Default for RbfKernel {
    fn default() -> Self {
        RbfKernel {
            signal_variance: 1.0,
            length_scale: 1.0,
        }
    }
}

impl RbfKernel {
    pub fn new(signal_variance: f64, length_scale: f64) -> Result<Self> {
        let k = RbfKernel {
            signal_variance,
            length_scale,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.signal_variance > 0.0 && self.signal_variance.is_finite()) {
            return Err(Error::invalid(
                "kernel",
                format!("signal variance must be > 0, got {}", self.signal_variance),
            ));
        }
        if !(self.length_scale > 0.0 && self.length_scale.is_finite()) {
            return Err(Error::invalid(
                "kernel",
                format!("length scale must be > 0, got {}", self.length_scale),
            ));
        }
        Ok(())
    }

    #[inline]
    pub fn eval(&self, a: f64, b: f64) -> f64 {
        let d = a - b;
        self.signal_variance * (-(d * d) / (2.0 * self.length_scale * self.length_scale)).exp()
    }
}

/// Observations for one GP fit.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GpDataset {
    inputs: Vec<f64>,
    targets: Vec<f64>,
    noise_variance: f64,
    weights: Vec<f64>,
}

impl GpDataset {
    pub fn new(inputs: Vec<f64>, targets: Vec<f64>, noise_variance: f64) -> Result<Self> {
        let weights = vec![1.0; inputs.len()];
        Self::with_weights(inputs, targets, noise_variance, weights)
    }

    /// Dataset whose point `i` has noise variance `noise_variance * weights[i]`.
    pub fn with_weights(
        inputs: Vec<f64>,
        targets: Vec<f64>,
        noise_variance: f64,
        weights: Vec<f64>,
    ) -> Result<Self> {
        if inputs.len() != targets.len() || inputs.len() != weights.len() {
            return Err(Error::invalid(
                "dataset",
                format!(
                    "length mismatch: {} inputs, {} targets, {} weights",
                    inputs.len(),
                    targets.len(),
                    weights.len()
                ),
            ));
        }
        if !(noise_variance >= 0.0) || !noise_variance.is_finite() {
            return Err(Error::invalid(
                "dataset",
                format!("noise variance must be >= 0, got {noise_variance}"),
            ));
        }
        if let Some(w) = weights.iter().find(|w| !(**w > 0.0) || !w.is_finite()) {
            return Err(Error::invalid("dataset", format!("weight must be > 0, got {w}")));
        }
        if inputs.iter().chain(&targets).any(|v| !v.is_finite()) {
            return Err(Error::invalid("dataset", "non-finite input or target"));
        }
        Ok(GpDataset {
            inputs,
            targets,
            noise_variance,
            weights,
        })
    }

    pub fn empty(noise_variance: f64) -> Self {
        GpDataset {
            noise_variance,
            ..Default::default()
        }
    }

    pub fn inputs(&self) -> &[f64] {
        &self.inputs
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn noise_variance(&self) -> f64 {
        self.noise_variance
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

/// Predictive means and standard deviations, aligned with the query points.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

/// A fitted GP. Immutable once built.
#[derive(Debug, Clone)]
pub struct GpPosterior {
    kernel: RbfKernel,
    inputs: Vec<f64>,
    targets: Vec<f64>,
    factor: Option<Cholesky>,
    /// `(K + σ_n² W)⁻¹ y`
    alpha: Vec<f64>,
    jitter: f64,
}

impl GpPosterior {
    pub fn prior(kernel: RbfKernel) -> Self {
        GpPosterior {
            kernel,
            inputs: Vec::new(),
            targets: Vec::new(),
            factor: None,
            alpha: Vec::new(),
            jitter: 0.0,
        }
    }

    pub fn fit(data: &GpDataset, kernel: RbfKernel) -> Result<Self> {
        kernel.validate()?;
        if data.is_empty() {
            return Ok(Self::prior(kernel));
        }
        let n = data.len();
        let x = &data.inputs;
        let mut gram = vec![0.0; n * n];
        for i in 0..n {
            gram[i * n + i] = kernel.signal_variance + data.noise_variance * data.weights[i];
            for j in 0..i {
                let v = kernel.eval(x[i], x[j]);
                gram[i * n + j] = v;
                gram[j * n + i] = v;
            }
        }

        let (factor, jitter) = factor_with_jitter(&mut gram, n, kernel.signal_variance)
            .ok_or_else(|| {
                Error::NumericalInstability(format!(
                    "GP gram matrix of {n} points not positive definite after jitter {}",
                    JITTER_MAX * kernel.signal_variance
                ))
            })?;
        let alpha = factor.solve(&data.targets);
        Ok(GpPosterior {
            kernel,
            inputs: data.inputs.clone(),
            targets: data.targets.clone(),
            factor: Some(factor),
            alpha,
            jitter,
        })
    }

    pub fn kernel(&self) -> RbfKernel {
        self.kernel
    }

    pub fn inputs(&self) -> &[f64] {
        &self.inputs
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    /// Jitter that had to be added to the diagonal (0 when none was needed).
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    fn cross(&self, x: f64) -> Vec<f64> {
        self.inputs.iter().map(|&xi| self.kernel.eval(x, xi)).collect()
    }

    pub fn mean_at(&self, x: f64) -> f64 {
        self.inputs
            .iter()
            .zip(&self.alpha)
            .map(|(&xi, a)| self.kernel.eval(x, xi) * a)
            .sum()
    }

    /// Predictive variance, clamped at zero.
    pub fn variance_at(&self, x: f64) -> f64 {
        let prior = self.kernel.signal_variance;
        match &self.factor {
            None => prior,
            Some(f) => {
                let mut v = self.cross(x);
                f.solve_lower_in_place(&mut v);
                (prior - v.iter().map(|t| t * t).sum::<f64>()).max(0.0)
            }
        }
    }

    pub fn predict(&self, points: &[f64]) -> Prediction {
        let means = points.iter().map(|&x| self.mean_at(x)).collect();
        let stds = points.iter().map(|&x| self.variance_at(x).sqrt()).collect();
        Prediction { means, stds }
    }

    pub fn predict_means(&self, points: &[f64]) -> Vec<f64> {
        points.iter().map(|&x| self.mean_at(x)).collect()
    }

    /// Joint posterior covariance over `points`, row-major.
    pub fn covariance(&self, points: &[f64]) -> Vec<f64> {
        let h = points.len();
        let mut cov = vec![0.0; h * h];
        for i in 0..h {
            for j in 0..=i {
                let v = self.kernel.eval(points[i], points[j]);
                cov[i * h + j] = v;
                cov[j * h + i] = v;
            }
        }
        if let Some(f) = &self.factor {
            let solved: Vec<Vec<f64>> = points
                .iter()
                .map(|&x| {
                    let mut v = self.cross(x);
                    f.solve_lower_in_place(&mut v);
                    v
                })
                .collect();
            for i in 0..h {
                for j in 0..=i {
                    let dot: f64 = solved[i].iter().zip(&solved[j]).map(|(a, b)| a * b).sum();
                    cov[i * h + j] -= dot;
                    if i != j {
                        cov[j * h + i] -= dot;
                    }
                }
            }
        }
        cov
    }

    /// One joint draw from the posterior over `points`.
    ///
    /// The covariance is factored as positive semi-definite: directions with
    /// (numerically) zero variance contribute nothing, so the draw equals the
    /// mean wherever the posterior is certain.
    pub fn sample<R: Rng + ?Sized>(&self, points: &[f64], rng: &mut R) -> Result<Vec<f64>> {
        let h = points.len();
        let cov = self.covariance(points);
        let sf2 = self.kernel.signal_variance;
        // Rounding in the posterior covariance grows with the grid size, so the
        // pivot floor is raised until the factorization goes through.
        let factor = [1e-10, 1e-8, 1e-6, 1e-4]
            .iter()
            .find_map(|&rel| {
                Cholesky::factor_semidefinite(&cov, h, rel * sf2, (100.0 * rel).max(1e-6) * sf2)
            })
            .ok_or_else(|| {
                Error::NumericalInstability(format!(
                    "posterior covariance over {h} points is not positive semi-definite"
                ))
            })?;
        debug_assert_eq!(factor.dim(), h);
        let z: Vec<f64> = (0..h).map(|_| rng.sample(StandardNormal)).collect();
        let noise = factor.mul_lower(&z);
        Ok(points
            .iter()
            .zip(noise)
            .map(|(&x, e)| self.mean_at(x) + e)
            .collect())
    }
}

fn factor_with_jitter(gram: &mut [f64], n: usize, signal_variance: f64) -> Option<(Cholesky, f64)> {
    if let Some(f) = Cholesky::factor(gram, n) {
        return Some((f, 0.0));
    }
    let mut rel = JITTER_START;
    let mut applied = 0.0;
    while rel <= JITTER_MAX * (1.0 + 1e-9) {
        let jitter = rel * signal_variance;
        for i in 0..n {
            gram[i * n + i] += jitter - applied;
        }
        applied = jitter;
        if let Some(f) = Cholesky::factor(gram, n) {
            return Some((f, jitter));
        }
        rel *= 10.0;
    }
    None
}

/// Flattens the mean above the best observed budget.
///
/// Every entry whose budget exceeds `b_max` is replaced by `n_max`; entries at
/// or below `b_max` are left alone. `budgets` and `means` are aligned.
pub fn saturate_mean(means: &[f64], budgets: &[f64], b_max: f64, n_max: f64) -> Vec<f64> {
    debug_assert_eq!(means.len(), budgets.len());
    means
        .iter()
        .zip(budgets)
        .map(|(&m, &b)| if b > b_max { n_max } else { m })
        .collect()
}

/// The observed input with the largest posterior mean, and that mean.
///
/// Ties go to the smaller input. `None` for an empty posterior.
pub fn best_observed(post: &GpPosterior) -> Option<(f64, f64)> {
    let mut best: Option<(f64, f64)> = None;
    for &x in post.inputs() {
        let m = post.mean_at(x);
        best = match best {
            None => Some((x, m)),
            Some((bx, bm)) if m > bm || (m == bm && x < bx) => Some((x, m)),
            keep => keep,
        };
    }
    best
}
