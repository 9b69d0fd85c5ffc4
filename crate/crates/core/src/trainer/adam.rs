/// Adam with bias-corrected moment estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n: usize, lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Adam {
            lr,
            beta1,
            beta2,
            eps,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    /// Number of steps taken so far.
    pub fn steps(&self) -> i32 {
        self.t
    }

    pub fn moments(&self) -> (&[f64], &[f64]) {
        (&self.m, &self.v)
    }

    /// Starts from given moments and step count instead of zeros.
    pub fn with_state(mut self, m: Vec<f64>, v: Vec<f64>, t: i32) -> Self {
        assert_eq!(m.len(), self.m.len());
        assert_eq!(v.len(), self.v.len());
        self.m = m;
        self.v = v;
        self.t = t;
        self
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grad.len(), self.m.len());
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        // With zero moments, m̂ = g and v̂ = g², so the step is lr·g/(|g|+eps).
        let mut opt = Adam::new(3, 0.1, 0.9, 0.999, 1e-8);
        let mut p = vec![1.0, -2.0, 0.5];
        let g = [4.0, -0.25, 0.0];
        opt.step(&mut p, &g);
        assert!((p[0] - (1.0 - 0.1 * 4.0 / (4.0 + 1e-8))).abs() < 1e-15);
        assert!((p[1] - (-2.0 + 0.1 * 0.25 / (0.25 + 1e-8))).abs() < 1e-15);
        assert_eq!(p[2], 0.5);
    }

    #[test]
    fn step_from_known_state_matches_closed_form() {
        let (b1, b2, eps, lr) = (0.9f64, 0.999f64, 1e-8, 1e-3);
        let (m0, v0, g, p0, t) = (0.3f64, 0.02f64, -0.7f64, 1.25f64, 4);
        let m = b1 * m0 + (1.0 - b1) * g;
        let v = b2 * v0 + (1.0 - b2) * g * g;
        let m_hat = m / (1.0 - b1.powi(t + 1));
        let v_hat = v / (1.0 - b2.powi(t + 1));
        let expect = p0 - lr * m_hat / (v_hat.sqrt() + eps);

        let mut opt = Adam::new(1, lr, b1, b2, eps).with_state(vec![m0], vec![v0], t);
        let mut p = vec![p0];
        opt.step(&mut p, &[g]);
        assert!(((p[0] - expect) / expect).abs() <= 1e-15, "{} vs {expect}", p[0]);
        assert_eq!(opt.steps(), t + 1);
        assert_eq!(opt.moments().0[0], m);
    }

    #[test]
    fn zero_lr_keeps_params() {
        let mut opt = Adam::new(2, 0.0, 0.9, 0.999, 1e-8);
        let mut p = vec![0.1, 0.2];
        for _ in 0..5 {
            opt.step(&mut p, &[1.0, -3.0]);
        }
        assert_eq!(p, vec![0.1, 0.2]);
    }
}
