use crate::error::{Error, Result};
use crate::yann::{Gradients, Network};

/// Adam over a network's trainable parameters (β₁ = 0.9, β₂ = 0.999, ε = 1e-8).
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

impl Adam {
    pub fn new(n: usize) -> Self {
        Adam {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn for_network(net: &Network) -> Self {
        Adam::new(net.param_count().trainable)
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::arg("optimizer state does not match the parameters"));
        }
        if grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::numeric("non-finite gradient"));
        }
        self.t += 1;
        let c1 = 1.0 - BETA1.powi(self.t as i32);
        let c2 = 1.0 - BETA2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = BETA1 * self.m[i] + (1.0 - BETA1) * g;
            self.v[i] = BETA2 * self.v[i] + (1.0 - BETA2) * g * g;
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            params[i] -= lr * mh / (vh.sqrt() + EPS);
        }
        Ok(())
    }

    /// One step on the network's trainable entries; masked entries are
    /// never touched.
    pub fn step_network(&mut self, net: &mut Network, grads: &Gradients, lr: f64) -> Result<()> {
        let mut p = net.trainable_params();
        self.step(&mut p, &grads.flatten(net), lr)?;
        net.set_trainable_params(&p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Matrix;
    use crate::yann::{Activation, Affine, NetworkBuilder};

    #[test]
    fn zero_gradient_leaves_params() {
        let mut a = Adam::new(3);
        let mut p = vec![1.0, -2.0, 0.5];
        a.step(&mut p, &[0.0; 3], 0.1).unwrap();
        assert_eq!(p, vec![1.0, -2.0, 0.5]);
    }

    #[test]
    fn converges_on_scalar_quadratic() {
        // (x − 3)²
        let mut a = Adam::new(1);
        let mut x = vec![0.0];
        for _ in 0..1000 {
            let g = 2.0 * (x[0] - 3.0);
            a.step(&mut x, &[g], 1e-2).unwrap();
        }
        assert!((x[0] - 3.0).abs() <= 1e-3, "{}", x[0]);
    }

    #[test]
    fn masked_entries_stay_put() {
        let mut b = NetworkBuilder::new(2);
        let mut l = Affine::trainable(
            Matrix::from_rows(&[[1.0, 2.0]]).unwrap(),
            Some(vec![0.5]),
            Activation::Identity,
        );
        l.weight_mask[1] = false;
        let id = b.affine("l", 0, l).unwrap();
        let mut net = b.finish(id).unwrap();
        let g = net.gradients(&[1.0, 1.0], &[1.0]).unwrap();
        let mut opt = Adam::for_network(&net);
        opt.step_network(&mut net, &g, 0.1).unwrap();
        let Some(node) = net.node("l") else { panic!() };
        let crate::yann::Op::Affine(a) = &node.op else {
            panic!()
        };
        assert_eq!(a.weight[(0, 1)], 2.0);
        assert!(a.weight[(0, 0)] < 1.0);
    }

    #[test]
    fn non_finite_gradient_is_an_error() {
        let mut a = Adam::new(1);
        assert!(a.step(&mut [0.0], &[f64::NAN], 0.1).is_err());
    }
}
