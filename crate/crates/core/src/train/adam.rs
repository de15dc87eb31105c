use crate::nn::{NnError, Scalar, Tensor};

use super::AdamConfig;

/// First and second moments for each parameter tensor, plus the step count.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub m: Vec<Tensor<T>>,
    pub v: Vec<Tensor<T>>,
    pub step: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new<'a>(params: impl IntoIterator<Item = &'a Tensor<T>>) -> Self {
        let m: Vec<Tensor<T>> = params.into_iter().map(|p| Tensor::zeros(p.dims())).collect();
        Self {
            v: m.clone(),
            m,
            step: 0,
        }
    }
}

/// One bias-corrected Adam update of every parameter tensor.
pub fn adam_step<T: Scalar>(
    params: &mut [&mut Tensor<T>],
    grads: &[&Tensor<T>],
    state: &mut AdamState<T>,
    lr: f64,
    cfg: &AdamConfig,
) -> Result<(), NnError> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(NnError::ShapeMismatch(format!(
            "{} parameters, {} gradients, {} moment tensors",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.dims() != g.dims() || p.dims() != state.m[i].dims() {
            return Err(NnError::ShapeMismatch(format!(
                "parameter {i}: {:?} vs gradient {:?}",
                p.dims(),
                g.dims()
            )));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let m = state.m[i].data_mut();
        let v = state.v[i].data_mut();
        for (j, (w, &gj)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
            let gj = gj.as_f64();
            let mj = cfg.beta1 * m[j].as_f64() + (1.0 - cfg.beta1) * gj;
            let vj = cfg.beta2 * v[j].as_f64() + (1.0 - cfg.beta2) * gj * gj;
            m[j] = T::from_f64(mj);
            v[j] = T::from_f64(vj);
            let update = lr * (mj / bc1) / ((vj / bc2).sqrt() + cfg.eps);
            *w = T::from_f64(w.as_f64() - update);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> AdamConfig {
        AdamConfig::default()
    }

    #[test]
    fn zero_gradient_leaves_params_and_decays_moments() {
        let mut w = Tensor::from_vec(&[3], vec![1.0f64, -2.0, 0.5]).unwrap();
        let g0 = Tensor::from_vec(&[3], vec![0.3, 0.3, 0.3]).unwrap();
        let mut state = AdamState::new([&w]);
        adam_step(&mut [&mut w], &[&g0], &mut state, 1e-3, &cfg()).unwrap();
        let (w1, m1) = (w.clone(), state.m[0].clone());
        let zero = Tensor::zeros(&[3]);
        adam_step(&mut [&mut w], &[&zero], &mut state, 1e-3, &cfg()).unwrap();
        for j in 0..3 {
            assert!((state.m[0].data()[j] - 0.9 * m1.data()[j]).abs() < 1e-15);
        }
        // The remaining first moment still moves the weights, but only along it.
        let fresh = Tensor::from_vec(&[2], vec![4.0f64, -1.0]).unwrap();
        let mut w2 = fresh.clone();
        let mut s2 = AdamState::new([&w2]);
        adam_step(&mut [&mut w2], &[&Tensor::zeros(&[2])], &mut s2, 1e-3, &cfg()).unwrap();
        assert_eq!(w2, fresh);
        assert!(s2.m[0].data().iter().all(|&m| m == 0.0));
        assert_ne!(w, w1);
    }

    #[test]
    fn first_step_moves_by_lr_against_the_gradient() {
        let g = [0.5f64, -3.0, 1e-3, -2e-2];
        let mut w = Tensor::zeros(&[4]);
        let grad = Tensor::from_vec(&[4], g.to_vec()).unwrap();
        let mut state = AdamState::new([&w]);
        let lr = 0.01;
        adam_step(&mut [&mut w], &[&grad], &mut state, lr, &cfg()).unwrap();
        for (wj, gj) in w.data().iter().zip(g) {
            // m̂ = g, v̂ = g², so the step is lr·g/(|g| + eps)
            let expected = -lr * gj / (gj.abs() + 1e-8);
            assert!((wj - expected).abs() < 1e-12, "{wj} vs {expected}");
            assert!((wj.abs() - lr).abs() < 1e-6);
        }
        assert_eq!(state.step, 1);
    }

    #[test]
    fn quadratic_converges_in_200_steps() {
        let target = [0.7f64, -1.3, 2.0, 0.05];
        let mut w: Tensor<f64> = Tensor::zeros(&[4]);
        let mut state = AdamState::new([&w]);
        for _ in 0..200 {
            let g: Vec<f64> = w.data().iter().zip(target).map(|(x, t)| 2.0 * (x - t)).collect();
            let g = Tensor::from_vec(&[4], g).unwrap();
            adam_step(&mut [&mut w], &[&g], &mut state, 0.1, &cfg()).unwrap();
        }
        let dist: f64 = w.data().iter().zip(target).map(|(x, t)| (x - t).powi(2)).sum::<f64>().sqrt();
        assert!(dist < 1e-2, "distance {dist}");
    }

    #[test]
    fn scaled_loss_keeps_update_signs() {
        let grads: Vec<Vec<f64>> = (0..5)
            .map(|k| (0..6).map(|j| ((k * 7 + j * 3) as f64).sin()).collect())
            .collect();
        let run = |c: f64| {
            let mut w: Tensor<f64> = Tensor::zeros(&[6]);
            let mut state = AdamState::new([&w]);
            let mut signs = Vec::new();
            for g in &grads {
                let before = w.clone();
                let g = Tensor::from_vec(&[6], g.iter().map(|x| c * x).collect()).unwrap();
                adam_step(&mut [&mut w], &[&g], &mut state, 1e-2, &cfg()).unwrap();
                signs.push(
                    w.data()
                        .iter()
                        .zip(before.data())
                        .map(|(a, b)| (a - b).signum())
                        .collect::<Vec<_>>(),
                );
            }
            (signs, state.m[0].clone())
        };
        let (s1, m1) = run(1.0);
        let (s5, m5) = run(5.0);
        assert_eq!(s1, s5);
        for (a, b) in m1.data().iter().zip(m5.data()) {
            assert!((5.0 * a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn mismatched_shapes_are_rejected() {
        let mut w: Tensor<f32> = Tensor::zeros(&[3]);
        let g: Tensor<f32> = Tensor::zeros(&[4]);
        let mut state = AdamState::new([&w]);
        assert!(adam_step(&mut [&mut w], &[&g], &mut state, 1e-3, &cfg()).is_err());
        assert!(adam_step(&mut [&mut w], &[], &mut state, 1e-3, &cfg()).is_err());
    }
}
