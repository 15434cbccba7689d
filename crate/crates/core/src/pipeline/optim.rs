use crate::nets::Tensor;

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

/// Adam with bias correction and a constant learning rate.
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    t: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Adam {
            lr,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps(&self) -> i32 {
        self.t
    }

    /// Apply one update. `params` and `grads` must keep the same order and
    /// shapes across calls.
    pub fn step<'a>(&mut self, params: impl Iterator<Item = &'a mut Tensor>, grads: &[Tensor]) {
        if self.m.is_empty() {
            self.m = grads.iter().map(|g| vec![0.0; g.len()]).collect();
            self.v = self.m.clone();
        }
        self.t += 1;
        let c1 = 1.0 - BETA1.powi(self.t);
        let c2 = 1.0 - BETA2.powi(self.t);
        let mut count = 0;
        for (i, p) in params.enumerate() {
            let g = &grads[i];
            assert_eq!(p.len(), g.len(), "parameter {i} changed shape");
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for j in 0..g.len() {
                let gj = g.data[j];
                m[j] = BETA1 * m[j] + (1.0 - BETA1) * gj;
                v[j] = BETA2 * v[j] + (1.0 - BETA2) * gj * gj;
                let mhat = m[j] / c1;
                let vhat = v[j] / c2;
                p.data[j] -= self.lr * mhat / (vhat.sqrt() + EPS);
            }
            count += 1;
        }
        assert_eq!(count, grads.len(), "parameter count mismatch");
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimizes_a_quadratic() {
        let mut x = Tensor::new(vec![2], vec![3.0, -2.0]).unwrap();
        let mut opt = Adam::new(0.1);
        for _ in 0..500 {
            let g = Tensor::new(vec![2], x.data.iter().map(|v| 2.0 * v).collect()).unwrap();
            opt.step(std::iter::once(&mut x), &[g]);
        }
        assert!(x.data.iter().all(|v| v.abs() < 1e-2), "{x:?}");
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut x = Tensor::new(vec![2], vec![1.0, 2.0]).unwrap();
        let mut opt = Adam::new(0.1);
        opt.step(std::iter::once(&mut x), &[Tensor::zeros(&[2])]);
        assert_eq!(x.data, vec![1.0, 2.0]);
    }
}
