/// Adam with per-parameter learning rates; a zero rate freezes a parameter.
#[derive(Clone, Debug)]
pub(crate) struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
    beta1: f64,
    beta2: f64,
}

const EPS: f64 = 1e-8;

impl Adam {
    pub(crate) fn new(n: usize, beta1: f64, beta2: f64) -> Adam {
        Adam {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
            beta1,
            beta2,
        }
    }

    pub(crate) fn step(&mut self, params: &mut [f64], grad: &[f64], lr: &[f64], scale: f64) {
        self.t += 1;
        let (beta1, beta2) = (self.beta1, self.beta2);
        let c1 = 1.0 - beta1.powi(self.t);
        let c2 = 1.0 - beta2.powi(self.t);
        for i in 0..params.len() {
            if lr[i] == 0.0 {
                continue;
            }
            self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * grad[i];
            self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * grad[i] * grad[i];
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            params[i] -= scale * lr[i] * mh / (vh.sqrt() + EPS);
        }
    }
}

/// Cosine decay from 1 to `final_factor` over `n` steps.
pub(crate) fn lr_factor(i: usize, n: usize, final_factor: f64) -> f64 {
    if n <= 1 {
        return 1.0;
    }
    let x = i as f64 / (n - 1) as f64;
    final_factor + (1.0 - final_factor) * 0.5 * (1.0 + (std::f64::consts::PI * x).cos())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimizes_quadratic_and_respects_frozen() {
        let mut p = vec![3.0, -2.0, 5.0];
        let lr = [0.1, 0.1, 0.0];
        let mut adam = Adam::new(3, 0.9, 0.999);
        for i in 0..500 {
            let g: Vec<f64> = p.iter().map(|x| 2.0 * x).collect();
            adam.step(&mut p, &g, &lr, lr_factor(i, 500, 0.01));
        }
        assert!(p[0].abs() < 1e-2 && p[1].abs() < 1e-2);
        assert_eq!(p[2], 5.0);
    }

    #[test]
    fn first_step_has_learning_rate_size() {
        let mut p = vec![0.0];
        Adam::new(1, 0.9, 0.999).step(&mut p, &[1e-3], &[0.01], 1.0);
        assert!((p[0] + 0.01).abs() < 1e-4);
    }

    #[test]
    fn schedule_endpoints() {
        assert_eq!(lr_factor(0, 100, 0.1), 1.0);
        assert!((lr_factor(99, 100, 0.1) - 0.1).abs() < 1e-12);
        assert_eq!(lr_factor(0, 1, 0.1), 1.0);
    }
}
