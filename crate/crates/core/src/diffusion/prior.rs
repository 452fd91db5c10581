use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{Denoiser, Prediction};
use crate::{Error, Result};

/// One mixture component with covariance `B diag(s²) Bᵀ + τ² I`, where the
/// floor τ² is shared by the whole mixture.
#[derive(Debug, Clone)]
pub struct GaussianComponent {
    pub weight: f64,
    pub mean: DVector<f64>,
    /// d×r matrix with orthonormal columns.
    pub basis: DMatrix<f64>,
    /// Per-direction standard deviations s, one per basis column.
    pub scales: Vec<f64>,
}

/// Mixture of low-rank Gaussians; its posterior mean under the VP forward
/// process serves as the denoiser.
#[derive(Debug, Clone)]
pub struct GaussianMixturePrior {
    dim: usize,
    floor: f64,
    components: Vec<GaussianComponent>,
}

/// Parameters for [`GaussianMixturePrior::random_low_rank`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RandomPriorSpec {
    pub components: usize,
    pub rank: usize,
    /// Standard deviation along every basis direction.
    pub scale: f64,
    /// Per-coordinate standard deviation of the random component means (0 ⇒ zero means).
    pub mean_scale: f64,
    /// Isotropic variance floor τ².
    pub floor: f64,
}

/// Result of one posterior-mean evaluation.
#[derive(Debug, Clone)]
pub struct DenoiserEval {
    pub mean: Vec<f64>,
    pub noise: Vec<f64>,
    pub responsibilities: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum JacobianMode {
    Analytic,
    /// Central differences with the given step.
    FiniteDifference { step: f64 },
}

// Per-component quantities at one (x, α).
struct ComponentTerms {
    log_weight: f64,
    /// E[x₀ | x_t, k]
    cond_mean: DVector<f64>,
    /// P⁻¹(x − √α μ) with P = αΣ + (1−α)I
    whitened: DVector<f64>,
}

impl GaussianMixturePrior {
    pub fn new(dim: usize, floor: f64, components: Vec<GaussianComponent>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidPrior("dimension must be positive".into()));
        }
        if !(floor >= 0.0 && floor.is_finite()) {
            return Err(Error::InvalidPrior(format!("floor must be finite and >= 0, got {floor}")));
        }
        if components.is_empty() {
            return Err(Error::InvalidPrior("need at least one component".into()));
        }
        let total: f64 = components.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidPrior(format!("weights sum to {total}, not 1")));
        }
        for (k, c) in components.iter().enumerate() {
            if !(c.weight > 0.0) {
                return Err(Error::InvalidPrior(format!("component {k} has non-positive weight")));
            }
            if c.mean.len() != dim || c.basis.nrows() != dim {
                return Err(Error::InvalidPrior(format!("component {k} does not live in dimension {dim}")));
            }
            if c.basis.ncols() != c.scales.len() {
                return Err(Error::InvalidPrior(format!(
                    "component {k}: {} basis columns but {} scales",
                    c.basis.ncols(),
                    c.scales.len()
                )));
            }
            if c.scales.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
                return Err(Error::InvalidPrior(format!("component {k} has a non-positive scale")));
            }
            if c.mean.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidPrior(format!("component {k} has a non-finite mean")));
            }
            let gram = c.basis.transpose() * &c.basis;
            let r = c.basis.ncols();
            let off = (gram - DMatrix::<f64>::identity(r, r)).amax();
            if off > 1e-10 {
                return Err(Error::InvalidPrior(format!(
                    "component {k} basis is not orthonormal (max deviation {off:e})"
                )));
            }
        }
        Ok(GaussianMixturePrior {
            dim,
            floor,
            components,
        })
    }

    /// Single isotropic Gaussian N(mean, variance·I).
    pub fn isotropic(mean: Vec<f64>, variance: f64) -> Result<Self> {
        let dim = mean.len();
        Self::new(
            dim,
            variance,
            vec![GaussianComponent {
                weight: 1.0,
                mean: DVector::from_vec(mean),
                basis: DMatrix::zeros(dim, 0),
                scales: Vec::new(),
            }],
        )
    }

    /// Equal-weight mixture with random orthonormal bases.
    pub fn random_low_rank<R: Rng + ?Sized>(
        dim: usize,
        spec: &RandomPriorSpec,
        rng: &mut R,
    ) -> Result<Self> {
        if spec.components == 0 {
            return Err(Error::InvalidPrior("need at least one component".into()));
        }
        if spec.rank > dim {
            return Err(Error::InvalidPrior(format!("rank {} exceeds dimension {dim}", spec.rank)));
        }
        let weight = 1.0 / spec.components as f64;
        let mut components = Vec::with_capacity(spec.components);
        for _ in 0..spec.components {
            let gauss = DMatrix::from_fn(dim, spec.rank, |_, _| rng.sample::<f64, _>(StandardNormal));
            let basis = if spec.rank == 0 {
                DMatrix::zeros(dim, 0)
            } else {
                gauss.qr().q()
            };
            let mean = DVector::from_fn(dim, |_, _| {
                spec.mean_scale * rng.sample::<f64, _>(StandardNormal)
            });
            components.push(GaussianComponent {
                weight,
                mean,
                basis,
                scales: vec![spec.scale; spec.rank],
            });
        }
        // equal weights may not sum to exactly 1 in floating point
        let total: f64 = components.iter().map(|c| c.weight).sum();
        components[0].weight += 1.0 - total;
        Self::new(dim, spec.floor, components)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn floor(&self) -> f64 {
        self.floor
    }

    pub fn components(&self) -> &[GaussianComponent] {
        &self.components
    }

    /// Draws x₀ from the mixture.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut chosen = self.components.len() - 1;
        for (k, c) in self.components.iter().enumerate() {
            acc += c.weight;
            if u < acc {
                chosen = k;
                break;
            }
        }
        let c = &self.components[chosen];
        let coeffs = DVector::from_fn(c.scales.len(), |i, _| {
            c.scales[i] * rng.sample::<f64, _>(StandardNormal)
        });
        let mut x = &c.mean + &c.basis * coeffs;
        let tau = self.floor.sqrt();
        for v in x.iter_mut() {
            *v += tau * rng.sample::<f64, _>(StandardNormal);
        }
        x.data.into()
    }

    fn check_input(&self, x: &[f64], alpha: f64) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::ShapeMismatch {
                expected: format!("vector of length {}", self.dim),
                actual: format!("length {}", x.len()),
            });
        }
        if let Some(index) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::param("alpha", format!("must lie in (0, 1], got {alpha}")));
        }
        Ok(())
    }

    fn component_terms(&self, c: &GaussianComponent, x: &DVector<f64>, alpha: f64) -> ComponentTerms {
        let sa = alpha.sqrt();
        let tau2 = self.floor;
        let p_perp = alpha * tau2 + 1.0 - alpha;
        let y = x - sa * &c.mean;
        let z = c.basis.tr_mul(&y);
        let p: Vec<f64> = c
            .scales
            .iter()
            .map(|s| alpha * (s * s + tau2) + 1.0 - alpha)
            .collect();

        let quad = y.norm_squared() / p_perp
            + z.iter()
                .zip(&p)
                .map(|(zi, pi)| zi * zi * (1.0 / pi - 1.0 / p_perp))
                .sum::<f64>();
        let log_det = p.iter().map(|v| v.ln()).sum::<f64>()
            + (self.dim - p.len()) as f64 * p_perp.ln();
        let log_weight = c.weight.ln() - 0.5 * (quad + log_det);

        let whitened_coeffs = DVector::from_fn(z.len(), |i, _| z[i] * (1.0 / p[i] - 1.0 / p_perp));
        let whitened = &y / p_perp + &c.basis * whitened_coeffs;

        let a_perp = tau2 / p_perp;
        let shrink_coeffs = DVector::from_fn(z.len(), |i, _| {
            let s2 = c.scales[i] * c.scales[i];
            z[i] * ((s2 + tau2) / p[i] - a_perp)
        });
        let cond_mean = &c.mean + sa * (a_perp * &y + &c.basis * shrink_coeffs);

        ComponentTerms {
            log_weight,
            cond_mean,
            whitened,
        }
    }

    fn all_terms(&self, x: &DVector<f64>, alpha: f64) -> (Vec<ComponentTerms>, Vec<f64>) {
        let terms: Vec<ComponentTerms> = self
            .components
            .iter()
            .map(|c| self.component_terms(c, x, alpha))
            .collect();
        let responsibilities = softmax(terms.iter().map(|t| t.log_weight));
        (terms, responsibilities)
    }

    /// Exact E[x₀ | x_t] at signal level `alpha`, with the implied noise
    /// prediction ε = √(1−α)·Σ_k w_k P_k⁻¹(x − √α μ_k).
    pub fn posterior_mean(&self, x: &[f64], alpha: f64) -> Result<DenoiserEval> {
        self.check_input(x, alpha)?;
        let p_perp = alpha * self.floor + 1.0 - alpha;
        if p_perp == 0.0 {
            // α = 1 with a zero floor: the posterior is a point mass at x
            return Ok(DenoiserEval {
                mean: x.to_vec(),
                noise: vec![0.0; self.dim],
                responsibilities: self.components.iter().map(|c| c.weight).collect(),
            });
        }
        let xv = DVector::from_column_slice(x);
        let (terms, responsibilities) = self.all_terms(&xv, alpha);
        if alpha == 1.0 {
            return Ok(DenoiserEval {
                mean: x.to_vec(),
                noise: vec![0.0; self.dim],
                responsibilities,
            });
        }
        let mut mean = DVector::zeros(self.dim);
        let mut whitened = DVector::zeros(self.dim);
        for (t, w) in terms.iter().zip(&responsibilities) {
            mean.axpy(*w, &t.cond_mean, 1.0);
            whitened.axpy(*w, &t.whitened, 1.0);
        }
        let noise = whitened * (1.0 - alpha).sqrt();
        Ok(DenoiserEval {
            mean: mean.data.into(),
            noise: noise.data.into(),
            responsibilities,
        })
    }

    /// d×d Jacobian of the posterior mean with respect to x_t.
    pub fn jacobian(&self, x: &[f64], alpha: f64, mode: JacobianMode) -> Result<DMatrix<f64>> {
        self.check_input(x, alpha)?;
        match mode {
            JacobianMode::Analytic => Ok(self.analytic_jacobian(x, alpha)),
            JacobianMode::FiniteDifference { step } => {
                if !(step > 0.0 && step.is_finite()) {
                    return Err(Error::param("step", format!("must be positive, got {step}")));
                }
                let mut jac = DMatrix::zeros(self.dim, self.dim);
                let mut probe = x.to_vec();
                for j in 0..self.dim {
                    probe[j] = x[j] + step;
                    let plus = self.posterior_mean(&probe, alpha)?.mean;
                    probe[j] = x[j] - step;
                    let minus = self.posterior_mean(&probe, alpha)?.mean;
                    probe[j] = x[j];
                    for i in 0..self.dim {
                        jac[(i, j)] = (plus[i] - minus[i]) / (2.0 * step);
                    }
                }
                Ok(jac)
            }
        }
    }

    // J = Σ_k w_k A_k + Σ_k w_k (m_k − f) ∇ℓ_kᵀ with A_k = √α Σ_k P_k⁻¹ and ∇ℓ_k = −P_k⁻¹ y_k.
    fn analytic_jacobian(&self, x: &[f64], alpha: f64) -> DMatrix<f64> {
        let d = self.dim;
        let tau2 = self.floor;
        let p_perp = alpha * tau2 + 1.0 - alpha;
        if p_perp == 0.0 || alpha == 1.0 {
            return DMatrix::identity(d, d);
        }
        let sa = alpha.sqrt();
        let xv = DVector::from_column_slice(x);
        let (terms, resp) = self.all_terms(&xv, alpha);
        let mut f = DVector::zeros(d);
        for (t, w) in terms.iter().zip(&resp) {
            f.axpy(*w, &t.cond_mean, 1.0);
        }

        let mut jac = DMatrix::zeros(d, d);
        for ((c, t), &w) in self.components.iter().zip(&terms).zip(&resp) {
            if w == 0.0 {
                continue;
            }
            let a_perp = sa * tau2 / p_perp;
            for i in 0..d {
                jac[(i, i)] += w * a_perp;
            }
            let gains: Vec<f64> = c
                .scales
                .iter()
                .map(|s| {
                    let lam = s * s + tau2;
                    w * (sa * lam / (alpha * lam + 1.0 - alpha) - a_perp)
                })
                .collect();
            let scaled = DMatrix::from_fn(d, gains.len(), |i, k| c.basis[(i, k)] * gains[k]);
            jac.gemm(1.0, &scaled, &c.basis.transpose(), 1.0);
            let diff = &t.cond_mean - &f;
            // ∇ℓ_k = −whitened
            jac.ger(-w, &diff, &t.whitened, 1.0);
        }
        jac
    }
}

impl Denoiser for GaussianMixturePrior {
    fn dim(&self) -> usize {
        self.dim
    }

    fn predict(&self, x: &[f64], alpha: f64) -> Result<Prediction> {
        let eval = self.posterior_mean(x, alpha)?;
        Ok(Prediction {
            mean: eval.mean,
            noise: eval.noise,
        })
    }
}

/// x_t = √α·x₀ + √(1−α)·ε with fresh standard normal ε.
pub fn forward_noise<R: Rng + ?Sized>(x0: &[f64], alpha: f64, rng: &mut R) -> Vec<f64> {
    let (sa, sn) = (alpha.sqrt(), (1.0 - alpha).sqrt());
    x0.iter()
        .map(|v| sa * v + sn * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

// Ties resolve to the lower index because the max is taken left to right.
fn softmax(logits: impl Iterator<Item = f64>) -> Vec<f64> {
    let logits: Vec<f64> = logits.collect();
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}
