use super::tensor::{Real, Tensor};
use super::NetError;

/// Bias-corrected Adam. Moment buffers are allocated per parameter slot on
/// first use.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Default for AdamState {
    fn default() -> Self {
        Self::new(Self::FROM_SCRATCH_LR)
    }
}

impl AdamState {
    pub const FROM_SCRATCH_LR: f64 = 1e-3;
    /// For fine-tuning externally supplied weights.
    pub const FINE_TUNE_LR: f64 = 1e-6;

    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn fine_tune() -> Self {
        Self::new(Self::FINE_TUNE_LR)
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn validate(&self) -> Result<(), NetError> {
        let ok = self.lr.is_finite()
            && self.lr >= 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0;
        if ok {
            Ok(())
        } else {
            Err(NetError::InvalidConfig(format!(
                "adam lr={} beta1={} beta2={} eps={}",
                self.lr, self.beta1, self.beta2, self.eps
            )))
        }
    }

    pub(crate) fn begin_step(&mut self) {
        self.step += 1;
    }

    pub(crate) fn update_slot<T: Real>(
        &mut self,
        slot: usize,
        param: &mut [T],
        grad: &[f64],
    ) -> Result<(), NetError> {
        if grad.len() != param.len() {
            return Err(NetError::Shape(format!(
                "adam slot {slot}: {} gradients for {} parameters",
                grad.len(),
                param.len()
            )));
        }
        while self.m.len() <= slot {
            self.m.push(Vec::new());
            self.v.push(Vec::new());
        }
        if self.m[slot].is_empty() {
            self.m[slot] = vec![0.0; param.len()];
            self.v[slot] = vec![0.0; param.len()];
        } else if self.m[slot].len() != param.len() {
            return Err(NetError::Shape(format!(
                "adam slot {slot}: moments hold {} values, parameter has {}",
                self.m[slot].len(),
                param.len()
            )));
        }
        let t = self.step.max(1) as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let (m, v) = (&mut self.m[slot], &mut self.v[slot]);
        for i in 0..param.len() {
            let g = grad[i];
            m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
            v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            param[i] = T::of(param[i].as_f64() - self.lr * m_hat / (v_hat.sqrt() + self.eps));
        }
        Ok(())
    }
}

/// One Adam step over `params` with matching `grads`.
pub fn adam_step<T: Real>(
    params: &mut [&mut Tensor<T>],
    grads: &[&[f64]],
    state: &mut AdamState,
) -> Result<(), NetError> {
    if params.len() != grads.len() {
        return Err(NetError::Shape(format!(
            "{} parameters but {} gradients",
            params.len(),
            grads.len()
        )));
    }
    state.begin_step();
    for (slot, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        state.update_slot(slot, p.data_mut(), g)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = Tensor::<f64>::from_f64(&[3], &[0.0, 1.0, -2.0]).unwrap();
        let mut s = AdamState::new(0.1);
        adam_step(&mut [&mut p], &[&[1.0, 1.0, 1.0]], &mut s).unwrap();
        let expected = -0.1 / (1.0 + 1e-8);
        for (a, b) in p.data().iter().zip([0.0, 1.0, -2.0]) {
            assert!((a - b - expected).abs() < 1e-15);
        }
        assert_eq!(s.step(), 1);
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = Tensor::<f32>::from_f64(&[2], &[0.5, -0.5]).unwrap();
        let before = p.clone();
        let mut s = AdamState::default();
        adam_step(&mut [&mut p], &[&[0.0, 0.0]], &mut s).unwrap();
        assert_eq!(p, before);
        assert_eq!(s.step(), 1);
    }

    #[test]
    fn deterministic_trajectory() {
        let run = || {
            let mut p = Tensor::<f32>::from_f64(&[2], &[0.1, 0.2]).unwrap();
            let mut s = AdamState::default();
            for k in 0..50 {
                let g = [(k as f64).sin(), (k as f64 * 0.3).cos()];
                adam_step(&mut [&mut p], &[&g], &mut s).unwrap();
            }
            (p, s)
        };
        let (a, sa) = run();
        let (b, sb) = run();
        assert_eq!(a.data(), b.data());
        assert_eq!(sa, sb);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut p = Tensor::<f64>::zeros(&[2]);
        let mut s = AdamState::default();
        assert!(adam_step(&mut [&mut p], &[&[1.0]], &mut s).is_err());
        assert!(adam_step(&mut [&mut p], &[], &mut s).is_err());
    }

    #[test]
    fn presets() {
        assert_eq!(AdamState::default().lr, 1e-3);
        assert_eq!(AdamState::fine_tune().lr, 1e-6);
        assert!(AdamState::new(f64::NAN).validate().is_err());
    }
}
