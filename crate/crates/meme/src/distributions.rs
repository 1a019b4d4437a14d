//! Probability primitives: diagonal Gaussian, Laplace and Categorical
//! likelihoods, and the closed-form 2-Wasserstein metric between diagonal
//! Gaussians. All densities are computed in log space.

use ndarray::Array1;

use crate::error::MemeError;

pub const LN_2PI: f64 = 1.8378770664093454835606594728112352797;

/// Mean/scale parameters of a diagonal-covariance Gaussian.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagGaussian {
    pub mean: Array1<f64>,
    pub scale: Array1<f64>,
}

impl DiagGaussian {
    pub fn new(mean: Array1<f64>, scale: Array1<f64>) -> Result<Self, MemeError> {
        if mean.len() != scale.len() {
            return Err(MemeError::shape(format!(
                "mean len {} != scale len {}",
                mean.len(),
                scale.len()
            )));
        }
        if scale.iter().any(|&s| !(s > 0.0)) {
            return Err(MemeError::Domain("scale must be strictly positive".into()));
        }
        Ok(Self { mean, scale })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn standard(dim: usize) -> Self {
        Self {
            mean: Array1::zeros(dim),
            scale: Array1::ones(dim),
        }
    }
}

/// Reparameterized sample: z = mean + scale ⊙ noise.
pub fn gauss_rsample(d: &DiagGaussian, noise: &Array1<f64>) -> Result<Array1<f64>, MemeError> {
    if noise.len() != d.dim() {
        return Err(MemeError::shape(format!(
            "noise len {} != dim {}",
            noise.len(),
            d.dim()
        )));
    }
    Ok(&d.mean + &(&d.scale * noise))
}

/// Exact diagonal-Gaussian log-density, summed over dimensions.
pub fn gauss_log_prob(d: &DiagGaussian, x: &Array1<f64>) -> Result<f64, MemeError> {
    if x.len() != d.dim() {
        return Err(MemeError::shape(format!(
            "x len {} != dim {}",
            x.len(),
            d.dim()
        )));
    }
    if d.scale.iter().any(|&s| !(s > 0.0)) {
        return Err(MemeError::Domain("scale must be strictly positive".into()));
    }
    let mut acc = 0.0;
    for i in 0..d.dim() {
        let r = (x[i] - d.mean[i]) / d.scale[i];
        acc += -d.scale[i].ln() - 0.5 * LN_2PI - 0.5 * r * r;
    }
    Ok(acc)
}

/// Squared 2-Wasserstein distance between diagonal Gaussians:
/// d² = ‖m₁ − m₂‖² + Σᵢ (σ₁ᵢ − σ₂ᵢ)².
pub fn w2_gaussian_diag(a: &DiagGaussian, b: &DiagGaussian) -> Result<f64, MemeError> {
    if a.dim() != b.dim() {
        return Err(MemeError::shape(format!(
            "dim {} != dim {}",
            a.dim(),
            b.dim()
        )));
    }
    let mut acc = 0.0;
    for i in 0..a.dim() {
        let dm = a.mean[i] - b.mean[i];
        let ds = a.scale[i] - b.scale[i];
        acc += dm * dm + ds * ds;
    }
    Ok(acc)
}

/// Laplace likelihood over a payload tensor with a shared positive scale.
#[derive(Debug, Clone)]
pub struct LaplaceLikelihood {
    pub loc: Array1<f64>,
    pub scale: f64,
}

impl LaplaceLikelihood {
    pub fn new(loc: Array1<f64>, scale: f64) -> Result<Self, MemeError> {
        if !(scale > 0.0) {
            return Err(MemeError::Domain("laplace scale must be > 0".into()));
        }
        Ok(Self { loc, scale })
    }

    pub fn log_prob(&self, x: &Array1<f64>) -> Result<f64, MemeError> {
        if x.len() != self.loc.len() {
            return Err(MemeError::shape("laplace payload shape mismatch"));
        }
        let d = self.loc.len() as f64;
        let l1: f64 = x
            .iter()
            .zip(self.loc.iter())
            .map(|(a, b)| (a - b).abs())
            .sum();
        Ok(-d * (2.0 * self.scale).ln() - l1 / self.scale)
    }

    /// Mode of the likelihood, used for generation.
    pub fn mode(&self) -> Array1<f64> {
        self.loc.clone()
    }
}

/// Categorical likelihood parameterized by unnormalized logits.
#[derive(Debug, Clone)]
pub struct CategoricalLikelihood {
    pub logits: Array1<f64>,
}

impl CategoricalLikelihood {
    pub fn new(logits: Array1<f64>) -> Result<Self, MemeError> {
        if logits.iter().any(|l| !l.is_finite()) {
            return Err(MemeError::Domain("categorical logits must be finite".into()));
        }
        Ok(Self { logits })
    }

    /// Log-probability of a one-hot payload.
    pub fn log_prob_onehot(&self, onehot: &Array1<f64>) -> Result<f64, MemeError> {
        if onehot.len() != self.logits.len() {
            return Err(MemeError::shape("categorical payload shape mismatch"));
        }
        let lse = crate::tape::logsumexp_slice(self.logits.as_slice().unwrap());
        let dot: f64 = onehot
            .iter()
            .zip(self.logits.iter())
            .map(|(o, l)| o * l)
            .sum();
        Ok(dot - lse)
    }

    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &l) in self.logits.iter().enumerate() {
            if l > self.logits[best] {
                best = i;
            }
        }
        best
    }

    /// One-hot vector at the mode, used for generation.
    pub fn mode(&self) -> Array1<f64> {
        let mut v = Array1::zeros(self.logits.len());
        v[self.argmax()] = 1.0;
        v
    }
}

/// Likelihood parameters for one modality, produced by a decoder head.
#[derive(Debug, Clone)]
pub enum Likelihood {
    Laplace(LaplaceLikelihood),
    Categorical(CategoricalLikelihood),
}

impl Likelihood {
    pub fn log_prob(&self, payload: &Array1<f64>) -> Result<f64, MemeError> {
        match self {
            Likelihood::Laplace(l) => l.log_prob(payload),
            Likelihood::Categorical(c) => c.log_prob_onehot(payload),
        }
    }

    pub fn mode(&self) -> Array1<f64> {
        match self {
            Likelihood::Laplace(l) => l.mode(),
            Likelihood::Categorical(c) => c.mode(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn rsample_identity_cases() {
        let d = DiagGaussian::new(array![1.0, -2.0], array![0.5, 2.0]).unwrap();
        let z = gauss_rsample(&d, &array![0.0, 0.0]).unwrap();
        assert_eq!(z, d.mean);
        let std = DiagGaussian::standard(3);
        let e = array![0.3, -0.7, 1.1];
        assert_eq!(gauss_rsample(&std, &e).unwrap(), e);
    }

    #[test]
    fn rsample_shape_mismatch_is_error() {
        let d = DiagGaussian::standard(2);
        assert!(gauss_rsample(&d, &array![0.0]).is_err());
    }

    #[test]
    fn rsample_monte_carlo_mean() {
        use rand::SeedableRng;
        use rand_distr::{Distribution, StandardNormal};
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(7);
        let d = DiagGaussian::new(array![0.7, -1.3], array![0.4, 1.5]).unwrap();
        let n = 100_000;
        let mut acc = Array1::<f64>::zeros(2);
        for _ in 0..n {
            let e = Array1::from_iter((0..2).map(|_| StandardNormal.sample(&mut rng)));
            acc += &gauss_rsample(&d, &e).unwrap();
        }
        acc /= n as f64;
        for i in 0..2 {
            let tol = 4.0 * d.scale[i] / (n as f64).sqrt();
            assert!((acc[i] - d.mean[i]).abs() < tol, "i={i}");
        }
    }

    #[test]
    fn std_normal_log_prob_analytic() {
        let d = DiagGaussian::standard(1);
        let at0 = gauss_log_prob(&d, &array![0.0]).unwrap();
        assert!((at0 - (-0.5 * LN_2PI)).abs() < 1e-12);
        assert!((at0 + 0.91894).abs() < 1e-5);
        let at1 = gauss_log_prob(&d, &array![1.0]).unwrap();
        assert!((at1 + 1.41894).abs() < 1e-5);
    }

    #[test]
    fn gauss_density_integrates_to_one() {
        let d = DiagGaussian::new(array![0.3], array![0.8]).unwrap();
        let (lo, hi, n) = (-10.0, 10.0, 40_000);
        let h = (hi - lo) / n as f64;
        let mut total = 0.0;
        for i in 0..=n {
            let x = lo + i as f64 * h;
            let w = if i == 0 || i == n { 0.5 } else { 1.0 };
            total += w * gauss_log_prob(&d, &array![x]).unwrap().exp();
        }
        assert!((total * h - 1.0).abs() < 1e-4);
    }

    #[test]
    fn laplace_density_integrates_to_one() {
        let l = LaplaceLikelihood::new(array![0.1], 0.4).unwrap();
        let (lo, hi, n) = (-20.0, 20.0, 80_000);
        let h = (hi - lo) / n as f64;
        let mut total = 0.0;
        for i in 0..=n {
            let x = lo + i as f64 * h;
            let w = if i == 0 || i == n { 0.5 } else { 1.0 };
            total += w * l.log_prob(&array![x]).unwrap().exp();
        }
        assert!((total * h - 1.0).abs() < 1e-4);
    }

    #[test]
    fn w2_trivial_cases() {
        let a = DiagGaussian::new(array![0.0], array![1.0]).unwrap();
        let b = DiagGaussian::new(array![3.0], array![1.0]).unwrap();
        assert_eq!(w2_gaussian_diag(&a, &a).unwrap(), 0.0);
        assert!((w2_gaussian_diag(&a, &b).unwrap() - 9.0).abs() < 1e-12);
    }

    #[test]
    fn categorical_log_prob_normalizes() {
        let c = CategoricalLikelihood::new(array![1.0, -0.5, 2.0]).unwrap();
        let total: f64 = (0..3)
            .map(|k| {
                let mut oh = Array1::zeros(3);
                oh[k] = 1.0;
                c.log_prob_onehot(&oh).unwrap().exp()
            })
            .sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert_eq!(c.argmax(), 2);
    }
}
