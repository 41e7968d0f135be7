use crate::error::{invalid, Result};

/// Variance schedule `β_1..β_T` with cached cumulative products.
#[derive(Clone, Debug, PartialEq)]
pub struct Schedule {
    betas: Vec<f64>,
    /// `ᾱ_0 = 1, ᾱ_1, …, ᾱ_T`.
    alpha_bars: Vec<f64>,
}

impl Schedule {
    pub fn new(betas: Vec<f64>) -> Result<Self> {
        if betas.is_empty() {
            return Err(invalid("schedule needs at least one step"));
        }
        for (i, b) in betas.iter().enumerate() {
            if !(*b > 0.0 && *b < 1.0) {
                return Err(invalid(format!("beta_{} = {b} outside (0, 1)", i + 1)));
            }
            if i > 0 && *b < betas[i - 1] {
                return Err(invalid(format!("beta_{} = {b} is smaller than beta_{}", i + 1, i)));
            }
        }
        let mut alpha_bars = Vec::with_capacity(betas.len() + 1);
        alpha_bars.push(1.0);
        for b in &betas {
            let prev = *alpha_bars.last().unwrap();
            alpha_bars.push(prev * (1.0 - b));
        }
        if alpha_bars.windows(2).any(|w| w[1] >= w[0]) {
            return Err(invalid("cumulative alpha must strictly decrease"));
        }
        Ok(Self { betas, alpha_bars })
    }

    /// Evenly spaced betas from `start` to `end`.
    pub fn linear(steps: usize, start: f64, end: f64) -> Result<Self> {
        if steps == 0 {
            return Err(invalid("schedule needs at least one step"));
        }
        if steps == 1 {
            return Self::new(vec![start]);
        }
        let d = (end - start) / (steps - 1) as f64;
        Self::new((0..steps).map(|i| start + d * i as f64).collect())
    }

    pub fn steps(&self) -> usize {
        self.betas.len()
    }

    fn check(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.steps() {
            return Err(invalid(format!("step {t} outside [1, {}]", self.steps())));
        }
        Ok(())
    }

    pub fn beta(&self, t: usize) -> Result<f64> {
        self.check(t)?;
        Ok(self.betas[t - 1])
    }

    pub fn alpha(&self, t: usize) -> Result<f64> {
        Ok(1.0 - self.beta(t)?)
    }

    /// `ᾱ_t`, with `ᾱ_0 = 1`.
    pub fn alpha_bar(&self, t: usize) -> Result<f64> {
        if t > self.steps() {
            return Err(invalid(format!("step {t} outside [0, {}]", self.steps())));
        }
        Ok(self.alpha_bars[t])
    }

    /// `β̃_t = (1 − ᾱ_{t−1}) / (1 − ᾱ_t) · β_t`.
    pub fn posterior_variance(&self, t: usize) -> Result<f64> {
        self.check(t)?;
        Ok((1.0 - self.alpha_bars[t - 1]) / (1.0 - self.alpha_bars[t]) * self.betas[t - 1])
    }

    /// Closed-form marginal `√ᾱ_t x0 + √(1 − ᾱ_t) ε`.
    pub fn forward_sample(&self, x0: &[f64], t: usize, eps: &[f64]) -> Result<Vec<f64>> {
        self.check(t)?;
        if x0.len() != eps.len() {
            return Err(invalid(format!("x0 has {} entries, noise {}", x0.len(), eps.len())));
        }
        let ab = self.alpha_bars[t];
        let (a, b) = (ab.sqrt(), (1.0 - ab).sqrt());
        Ok(x0.iter().zip(eps).map(|(x, e)| a * x + b * e).collect())
    }

    /// Reverse-process mean `(x_t − β_t/√(1 − ᾱ_t) ε̂) / √α_t`.
    pub fn posterior_mean(&self, xt: &[f64], t: usize, eps_hat: &[f64]) -> Result<Vec<f64>> {
        self.check(t)?;
        if xt.len() != eps_hat.len() {
            return Err(invalid(format!("x_t has {} entries, prediction {}", xt.len(), eps_hat.len())));
        }
        let beta = self.betas[t - 1];
        let c = beta / (1.0 - self.alpha_bars[t]).sqrt();
        let s = 1.0 / (1.0 - beta).sqrt();
        Ok(xt.iter().zip(eps_hat).map(|(x, e)| s * (x - c * e)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn rejects_bad_betas() {
        assert!(Schedule::new(vec![]).is_err());
        assert!(Schedule::new(vec![0.0, 0.1]).is_err());
        assert!(Schedule::new(vec![0.1, 1.0]).is_err());
        assert!(Schedule::new(vec![0.2, 0.1]).is_err());
        assert!(Schedule::linear(0, 0.1, 0.2).is_err());
    }

    #[test]
    fn alpha_bar_recursion_is_exact() {
        let s = Schedule::linear(100, 1e-3, 0.2).unwrap();
        for t in 1..=100 {
            assert_eq!(s.alpha_bar(t).unwrap(), s.alpha_bar(t - 1).unwrap() * s.alpha(t).unwrap());
        }
        assert!(s.alpha_bar(100).unwrap() < 1e-4);
        assert!(s.beta(0).is_err() && s.beta(101).is_err());
    }

    #[test]
    fn tiny_betas_leave_data_in_place() {
        let s = Schedule::new(vec![1e-15; 5]).unwrap();
        let x = s.forward_sample(&[1.0, -2.0], 5, &[3.0, 4.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-6 && (x[1] + 2.0).abs() < 1e-6);
    }

    #[test]
    fn large_noise_limit_is_the_noise() {
        let s = Schedule::new(vec![0.999; 10]).unwrap();
        let x = s.forward_sample(&[5.0], 10, &[0.7]).unwrap();
        assert!((x[0] - 0.7).abs() < 1e-10);
    }

    #[test]
    fn closed_form_matches_chaining() {
        let s = Schedule::linear(10, 1e-2, 0.3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x0: Vec<f64> = (0..13).map(|_| StandardNormal.sample(&mut rng)).collect();
        // Chain x_t = √α_t x_{t−1} + √β_t z_t and track the equivalent
        // single noise ε_t = (x_t − √ᾱ_t x0) / √(1 − ᾱ_t).
        let mut x = x0.clone();
        for t in 1..=10 {
            let a = s.alpha(t).unwrap();
            for v in x.iter_mut() {
                let z: f64 = StandardNormal.sample(&mut rng);
                *v = a.sqrt() * *v + (1.0 - a).sqrt() * z;
            }
            let ab = s.alpha_bar(t).unwrap();
            let eps: Vec<f64> = x.iter().zip(&x0).map(|(x, x0)| (x - ab.sqrt() * x0) / (1.0 - ab).sqrt()).collect();
            let closed = s.forward_sample(&x0, t, &eps).unwrap();
            let err = closed.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(err < 1e-10, "t={t}: {err}");
        }
    }

    #[test]
    fn chained_variance_matches_alpha_bar() {
        // Statistical check of the marginal variance from explicit chaining.
        let s = Schedule::linear(10, 1e-2, 0.3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 20000;
        let mut acc = 0.0;
        for _ in 0..n {
            let mut x = 0.0;
            for t in 1..=10 {
                let a = s.alpha(t).unwrap();
                let z: f64 = StandardNormal.sample(&mut rng);
                x = a.sqrt() * x + (1.0 - a).sqrt() * z;
            }
            acc += x * x;
        }
        let expected = 1.0 - s.alpha_bar(10).unwrap();
        assert!((acc / n as f64 - expected).abs() < 0.03);
    }
}
