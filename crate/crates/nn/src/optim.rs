//! Nadam with a decaying momentum schedule (Keras form).

use serde::{Deserialize, Serialize};

use crate::error::{NnError, Result};
use crate::params::{Grads, Params};
use crate::scalar::NnScalar;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NadamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub schedule_decay: f64,
}

impl Default for NadamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            schedule_decay: 0.004,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Nadam<T> {
    pub config: NadamConfig,
    step: u64,
    m_schedule: f64,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: NnScalar> Nadam<T> {
    pub fn new(params: &Params<T>, config: NadamConfig) -> Self {
        let zeros: Vec<Vec<T>> = params.values.iter().map(|v| vec![T::zero(); v.len()]).collect();
        Self {
            config,
            step: 0,
            m_schedule: 1.0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    fn momentum(&self, t: u64) -> f64 {
        self.config.beta1 * (1.0 - 0.5 * 0.96f64.powf(t as f64 * self.config.schedule_decay))
    }

    pub fn step(&mut self, params: &mut Params<T>, grads: &Grads<T>, lr: f64) -> Result<()> {
        for (info, g) in params.layout.blocks.iter().zip(&grads.values) {
            if g.iter().any(|x| !x.is_finite()) {
                return Err(NnError::NonFiniteGradient { name: info.name.clone() });
            }
        }
        let t = self.step + 1;
        let mu = self.momentum(t);
        let mu_next = self.momentum(t + 1);
        let sched_new = self.m_schedule * mu;
        let sched_next = sched_new * mu_next;
        let (b1, b2) = (self.config.beta1, self.config.beta2);
        let bias2 = 1.0 - b2.powf(t as f64);

        let lit = T::lit;
        let (b1t, b2t) = (lit(b1), lit(b2));
        let (one_m_b1, one_m_b2) = (lit(1.0 - b1), lit(1.0 - b2));
        let g_scale = lit(1.0 / (1.0 - sched_new));
        let m_scale = lit(1.0 / (1.0 - sched_next));
        let v_scale = lit(1.0 / bias2);
        let (c_g, c_m) = (lit(1.0 - mu), lit(mu_next));
        let (lr, eps) = (lit(lr), lit(self.config.eps));

        for ((p, g), (m, v)) in params
            .values
            .iter_mut()
            .zip(&grads.values)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            for i in 0..p.len() {
                let gi = g[i];
                m[i] = b1t * m[i] + one_m_b1 * gi;
                v[i] = b2t * v[i] + one_m_b2 * gi * gi;
                let m_bar = c_g * (gi * g_scale) + c_m * (m[i] * m_scale);
                let v_hat = v[i] * v_scale;
                p[i] -= lr * m_bar / (v_hat.sqrt() + eps);
            }
        }
        self.m_schedule = sched_new;
        self.step = t;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{ParamKind, ParamLayout};

    fn scalar_layout() -> ParamLayout {
        let mut l = ParamLayout::default();
        l.register("p", vec![1], ParamKind::Bias);
        l
    }

    #[test]
    fn hand_evaluated_first_step() {
        let layout = scalar_layout();
        let mut p = Params::<f64>::zeros(&layout);
        let mut opt = Nadam::new(&p, NadamConfig::default());
        let mut g = Grads::zeros(&layout);
        g.values[0][0] = 1.0;
        opt.step(&mut p, &g, 1e-3).unwrap();

        let mu1 = 0.9 * (1.0 - 0.5 * 0.96f64.powf(0.004));
        let mu2 = 0.9 * (1.0 - 0.5 * 0.96f64.powf(0.008));
        let g_hat = 1.0 / (1.0 - mu1);
        let m_hat = 0.1 / (1.0 - mu1 * mu2);
        let v_hat: f64 = 0.001 / 0.001;
        let expect = -1e-3 * ((1.0 - mu1) * g_hat + mu2 * m_hat) / (v_hat.sqrt() + 1e-8);
        assert!((p.values[0][0] - expect).abs() < 1e-15);
        assert!((expect + 1.05645e-3).abs() < 1e-8);
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let layout = scalar_layout();
        let mut p = Params::<f32>::zeros(&layout);
        p.values[0][0] = 0.7;
        let mut opt = Nadam::new(&p, NadamConfig::default());
        let g = Grads::zeros(&layout);
        for _ in 0..5 {
            opt.step(&mut p, &g, 1e-2).unwrap();
        }
        assert_eq!(p.values[0][0], 0.7);
    }

    #[test]
    fn minimizes_a_quadratic() {
        let layout = scalar_layout();
        let mut p = Params::<f64>::zeros(&layout);
        let mut opt = Nadam::new(&p, NadamConfig::default());
        let mut g = Grads::zeros(&layout);
        for _ in 0..5000 {
            g.values[0][0] = 2.0 * (p.values[0][0] - 3.0);
            opt.step(&mut p, &g, 1e-2).unwrap();
        }
        assert!((p.values[0][0] - 3.0).abs() <= 1e-3, "{}", p.values[0][0]);
    }

    #[test]
    fn non_finite_gradient_names_block() {
        let layout = scalar_layout();
        let mut p = Params::<f64>::zeros(&layout);
        let mut opt = Nadam::new(&p, NadamConfig::default());
        let mut g = Grads::zeros(&layout);
        g.values[0][0] = f64::NAN;
        match opt.step(&mut p, &g, 1e-3) {
            Err(NnError::NonFiniteGradient { name }) => assert_eq!(name, "p"),
            other => panic!("{other:?}"),
        }
        assert_eq!(opt.steps(), 0);
    }
}
