//! DDPM noise schedule, forward corruption and reverse steps.

use crate::nn::Mat;

#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    pub betas: Vec<f64>,
    pub alphas: Vec<f64>,
    pub alpha_bar: Vec<f64>,
}

impl Schedule {
    /// Linear β from `beta_start` to `beta_end` over `steps` steps.
    pub fn linear(steps: usize, beta_start: f64, beta_end: f64) -> Self {
        assert!(steps >= 2, "at least two diffusion steps");
        let betas: Vec<f64> = (0..steps)
            .map(|t| beta_start + (beta_end - beta_start) * t as f64 / (steps - 1) as f64)
            .collect();
        let alphas: Vec<f64> = betas.iter().map(|b| 1.0 - b).collect();
        let mut alpha_bar = Vec::with_capacity(steps);
        let mut acc = 1.0;
        for a in &alphas {
            acc *= a;
            alpha_bar.push(acc);
        }
        Self { betas, alphas, alpha_bar }
    }

    pub fn steps(&self) -> usize {
        self.betas.len()
    }

    /// `x_t = sqrt(ᾱ_t) x_0 + sqrt(1 - ᾱ_t) ε`
    pub fn corrupt(&self, x0: &Mat, eps: &Mat, t: usize) -> Mat {
        let ab = self.alpha_bar[t];
        x0 * ab.sqrt() + eps * (1.0 - ab).sqrt()
    }

    /// One ancestral step from `x_t` given the predicted noise. The implied
    /// clean sample is clipped to `[-clip, clip]`. `z` is standard normal
    /// noise, ignored at `t = 0`.
    pub fn reverse_step(&self, x: &Mat, eps: &Mat, t: usize, z: &Mat, clip: f64) -> Mat {
        let ab = self.alpha_bar[t];
        let ab_prev = if t == 0 { 1.0 } else { self.alpha_bar[t - 1] };
        let beta = self.betas[t];
        let x0 = ((x - &(eps * (1.0 - ab).sqrt())) / ab.sqrt()).mapv(|v| v.clamp(-clip, clip));
        let c0 = ab_prev.sqrt() * beta / (1.0 - ab);
        let ct = self.alphas[t].sqrt() * (1.0 - ab_prev) / (1.0 - ab);
        let mean = x0 * c0 + x * ct;
        if t == 0 {
            mean
        } else {
            let var = beta * (1.0 - ab_prev) / (1.0 - ab);
            mean + z * var.sqrt()
        }
    }
}

/// Sinusoidal embedding of the step index.
pub fn time_embedding(t: usize, dim: usize) -> Vec<f64> {
    let half = dim / 2;
    let mut out = Vec::with_capacity(dim);
    for i in 0..half {
        let freq = 1.0 / 1000f64.powf(i as f64 / half as f64);
        out.push((t as f64 * freq).sin());
    }
    for i in 0..half {
        let freq = 1.0 / 1000f64.powf(i as f64 / half as f64);
        out.push((t as f64 * freq).cos());
    }
    out.resize(dim, 0.0);
    out
}
