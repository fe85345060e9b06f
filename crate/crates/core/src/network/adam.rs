use super::MultiscaleNet;

/// Adam optimizer state over every parameter of a [`MultiscaleNet`].
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    pub steps: u64,
    pub rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(len: usize, rate: f64) -> Self {
        AdamState {
            m: vec![0.0; len],
            v: vec![0.0; len],
            steps: 0,
            rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn for_net(net: &MultiscaleNet, rate: f64) -> Self {
        AdamState::new(net.len(), rate)
    }

    /// One bias-corrected update; thresholds are clamped at 0 afterwards.
    pub fn step(&mut self, net: &mut MultiscaleNet, grads: &MultiscaleNet) {
        assert_eq!(
            self.m.len(),
            net.len(),
            "optimizer state does not match the network"
        );
        self.steps += 1;
        let t = self.steps as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, eps, rate) = (self.beta1, self.beta2, self.eps, self.rate);
        let mut k = 0;
        for (p, g) in net.slices_mut().into_iter().zip(grads.slices()) {
            for (x, &g) in p.iter_mut().zip(g) {
                let m = &mut self.m[k];
                let v = &mut self.v[k];
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                *x -= rate * (*m / c1) / ((*v / c2).sqrt() + eps);
                k += 1;
            }
        }
        net.clamp_thresholds();
    }
}

pub fn adam_step(net: &mut MultiscaleNet, grads: &MultiscaleNet, state: &mut AdamState) {
    state.step(net, grads);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut net = MultiscaleNet::seeded(0, 2, 3, 4, 5, 0.5, 1);
        let before = net.clone();
        let mut st = AdamState::for_net(&net, 1e-3);
        st.step(&mut net, &before.zeros_like());
        assert_eq!(net, before);
    }

    #[test]
    fn first_step_moves_rate_against_the_gradient() {
        let mut net = MultiscaleNet::seeded(0, 2, 3, 4, 5, 0.5, 2);
        net.scales[0].lambda = vec![1.0, 1.0];
        let before = net.clone();
        let mut g = net.zeros_like();
        for k in 0..g.len() {
            g.set(
                k,
                if k % 3 == 0 {
                    -(k as f64 + 1.0)
                } else {
                    0.01 * (k as f64 + 1.0)
                },
            );
        }
        let h = 1e-3;
        let mut st = AdamState::for_net(&net, h);
        st.step(&mut net, &g);
        for k in 0..net.len() {
            let delta = net.get(k) - before.get(k);
            assert_eq!(delta.signum(), -g.get(k).signum());
            // |m_hat| / sqrt(v_hat) = 1 on the first step, up to eps
            assert!((delta.abs() - h).abs() < 1e-5 * h, "{delta}");
        }
    }

    #[test]
    fn thresholds_stay_non_negative() {
        let mut net = MultiscaleNet::seeded(0, 2, 3, 4, 5, 0.5, 3);
        net.scales[0].lambda = vec![1e-4, 0.0];
        let mut g = net.zeros_like();
        g.scales[0].lambda = vec![10.0, 10.0];
        let mut st = AdamState::for_net(&net, 1e-2);
        adam_step(&mut net, &g, &mut st);
        assert_eq!(net.scales[0].lambda, vec![0.0, 0.0]);
    }
}
