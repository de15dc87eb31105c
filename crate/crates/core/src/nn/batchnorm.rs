use super::{NnError, Scalar, Tensor};

/// Running statistics tracked during training and used at inference.
#[derive(Debug, Clone, PartialEq)]
pub struct BnState<T> {
    pub running_mean: Tensor<T>,
    pub running_var: Tensor<T>,
}

impl<T: Scalar> BnState<T> {
    pub fn new(channels: usize) -> Self {
        Self {
            running_mean: Tensor::zeros(&[channels]),
            running_var: Tensor::full(&[channels], T::one()),
        }
    }
}

/// Values saved by the train-mode forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct BnCache<T> {
    pub x_hat: Tensor<T>,
    pub inv_std: Vec<T>,
}

fn check<T: Scalar>(input: &Tensor<T>, gamma: &Tensor<T>, beta: &Tensor<T>) -> Result<[usize; 4], NnError> {
    let dims = input.dims4("batchnorm input")?;
    let c = dims[1];
    if gamma.dims() != [c] || beta.dims() != [c] {
        return Err(NnError::ShapeMismatch(format!(
            "gamma/beta dims {:?}/{:?}, expected [{c}]",
            gamma.dims(),
            beta.dims()
        )));
    }
    Ok(dims)
}

/// Normalizes with batch statistics and folds them into `state`:
/// `running = (1 - momentum)·running + momentum·batch`, using the unbiased
/// batch variance for the running estimate.
pub fn batchnorm_train<T: Scalar>(
    input: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    state: &mut BnState<T>,
    momentum: f64,
    eps: f64,
) -> Result<(Tensor<T>, BnCache<T>), NnError> {
    let [n, c, h, w] = check(input, gamma, beta)?;
    let hw = h * w;
    let m = n * hw;
    if m <= 1 {
        return Err(NnError::DegenerateBatch(m));
    }
    let x = input.data();
    let mut out = Tensor::zeros(input.dims());
    let mut x_hat = Tensor::zeros(input.dims());
    let mut inv_std = Vec::with_capacity(c);
    for ch in 0..c {
        let planes = (0..n).map(|b| &x[(b * c + ch) * hw..(b * c + ch + 1) * hw]);
        let mut sum = 0.0f64;
        for p in planes.clone() {
            sum += p.iter().map(|v| v.as_f64()).sum::<f64>();
        }
        let mean = sum / m as f64;
        let mut sq = 0.0f64;
        for p in planes {
            sq += p.iter().map(|v| (v.as_f64() - mean).powi(2)).sum::<f64>();
        }
        let var = sq / m as f64;
        let istd = 1.0 / (var + eps).sqrt();
        let (g, bt) = (gamma.data()[ch], beta.data()[ch]);
        let (mean_t, istd_t) = (T::from_f64(mean), T::from_f64(istd));
        for b in 0..n {
            let r = (b * c + ch) * hw..(b * c + ch + 1) * hw;
            for i in r {
                let xh = (x[i] - mean_t) * istd_t;
                x_hat.data_mut()[i] = xh;
                out.data_mut()[i] = g * xh + bt;
            }
        }
        inv_std.push(istd_t);

        let mom = T::from_f64(momentum);
        let keep = T::from_f64(1.0 - momentum);
        let rm = &mut state.running_mean.data_mut()[ch];
        *rm = keep * *rm + mom * mean_t;
        let rv = &mut state.running_var.data_mut()[ch];
        *rv = keep * *rv + mom * T::from_f64(var * m as f64 / (m - 1) as f64);
    }
    Ok((out, BnCache { x_hat, inv_std }))
}

/// Normalizes with the frozen running statistics.
pub fn batchnorm_infer<T: Scalar>(
    input: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    state: &BnState<T>,
    eps: f64,
) -> Result<Tensor<T>, NnError> {
    let [n, c, h, w] = check(input, gamma, beta)?;
    let hw = h * w;
    let mut out = input.clone();
    for ch in 0..c {
        let mean = state.running_mean.data()[ch];
        let istd = T::from_f64(1.0 / (state.running_var.data()[ch].as_f64() + eps).sqrt());
        let scale = gamma.data()[ch] * istd;
        let shift = beta.data()[ch] - mean * scale;
        for b in 0..n {
            for v in &mut out.data_mut()[(b * c + ch) * hw..(b * c + ch + 1) * hw] {
                *v = *v * scale + shift;
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct BnGrads<T> {
    pub input: Tensor<T>,
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
}

/// Gradients of the train-mode forward map.
pub fn batchnorm_backward<T: Scalar>(
    cache: &BnCache<T>,
    gamma: &Tensor<T>,
    grad_out: &Tensor<T>,
) -> Result<BnGrads<T>, NnError> {
    if grad_out.dims() != cache.x_hat.dims() {
        return Err(NnError::ShapeMismatch(format!(
            "grad_out dims {:?}, expected {:?}",
            grad_out.dims(),
            cache.x_hat.dims()
        )));
    }
    let [n, c, h, w] = grad_out.dims4("batchnorm grad")?;
    if gamma.dims() != [c] {
        return Err(NnError::ShapeMismatch("gamma does not match channels".into()));
    }
    let hw = h * w;
    let m = T::from_f64((n * hw) as f64);
    let dy = grad_out.data();
    let xh = cache.x_hat.data();
    let mut grad_input = Tensor::zeros(grad_out.dims());
    let mut grad_gamma = Tensor::zeros(&[c]);
    let mut grad_beta = Tensor::zeros(&[c]);
    for ch in 0..c {
        let mut sum_dy = T::zero();
        let mut sum_dy_xh = T::zero();
        for b in 0..n {
            for i in (b * c + ch) * hw..(b * c + ch + 1) * hw {
                sum_dy = sum_dy + dy[i];
                sum_dy_xh = sum_dy_xh + dy[i] * xh[i];
            }
        }
        grad_gamma.data_mut()[ch] = sum_dy_xh;
        grad_beta.data_mut()[ch] = sum_dy;
        let k = gamma.data()[ch] * cache.inv_std[ch] / m;
        for b in 0..n {
            for i in (b * c + ch) * hw..(b * c + ch + 1) * hw {
                grad_input.data_mut()[i] = k * (m * dy[i] - sum_dy - xh[i] * sum_dy_xh);
            }
        }
    }
    Ok(BnGrads {
        input: grad_input,
        gamma: grad_gamma,
        beta: grad_beta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::testutil::{central_diff, max_rel_err, random_tensor};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const EPS: f64 = 1e-5;

    #[test]
    fn train_output_is_standardized() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x: Tensor<f64> = random_tensor(&[3, 2, 4, 5], &mut rng);
        let mut st = BnState::new(2);
        let (_, cache) =
            batchnorm_train(&x, &Tensor::full(&[2], 1.0), &Tensor::zeros(&[2]), &mut st, 0.1, EPS)
                .unwrap();
        for ch in 0..2 {
            let vals: Vec<f64> = (0..3)
                .flat_map(|b| cache.x_hat.data()[(b * 2 + ch) * 20..(b * 2 + ch + 1) * 20].to_vec())
                .collect();
            let mean = vals.iter().sum::<f64>() / 60.0;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 60.0;
            assert!(mean.abs() < 1e-4);
            assert!((var - 1.0).abs() < 1e-3, "var {var}");
        }
    }

    #[test]
    fn identity_configuration_in_infer_mode() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x: Tensor<f64> = random_tensor(&[2, 3, 2, 2], &mut rng);
        let y = batchnorm_infer(&x, &Tensor::full(&[3], 1.0), &Tensor::zeros(&[3]), &BnState::new(3), EPS)
            .unwrap();
        let scale = 1.0 / (1.0 + EPS).sqrt();
        for (a, b) in y.data().iter().zip(x.data()) {
            assert!((a - b * scale).abs() < 1e-6);
            assert!((a - b).abs() < 1e-5 * b.abs().max(1.0));
        }
    }

    #[test]
    fn running_mean_update_rule() {
        let x: Tensor<f64> = Tensor::from_vec(&[2, 1, 1, 2], vec![1.0, 3.0, 5.0, 7.0]).unwrap();
        let mut st = BnState {
            running_mean: Tensor::zeros(&[1]),
            running_var: Tensor::zeros(&[1]),
        };
        batchnorm_train(&x, &Tensor::full(&[1], 1.0), &Tensor::zeros(&[1]), &mut st, 0.1, EPS).unwrap();
        // batch mean 4, unbiased variance (9+1+1+9)/3
        assert!((st.running_mean.data()[0] - 0.4).abs() < 1e-12);
        assert!((st.running_var.data()[0] - 0.1 * 20.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_batch_is_rejected() {
        let x: Tensor<f64> = Tensor::zeros(&[1, 1, 1, 1]);
        let mut st = BnState::new(1);
        let err = batchnorm_train(&x, &Tensor::full(&[1], 1.0), &Tensor::zeros(&[1]), &mut st, 0.1, EPS);
        assert!(matches!(err, Err(NnError::DegenerateBatch(1))));
    }

    #[test]
    fn beta_grad_is_channel_sum_and_input_grad_is_centered() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x: Tensor<f64> = Tensor::full(&[2, 2, 3, 3], 0.7);
        let gamma: Tensor<f64> = random_tensor(&[2], &mut rng);
        let mut st = BnState::new(2);
        let (_, cache) = batchnorm_train(&x, &gamma, &Tensor::zeros(&[2]), &mut st, 0.1, EPS).unwrap();
        let gy: Tensor<f64> = random_tensor(&[2, 2, 3, 3], &mut rng);
        let g = batchnorm_backward(&cache, &gamma, &gy).unwrap();
        for ch in 0..2 {
            let idx = (0..2).flat_map(|b| (b * 2 + ch) * 9..(b * 2 + ch + 1) * 9);
            let sum_gy: f64 = idx.clone().map(|i| gy.data()[i]).sum();
            let sum_gx: f64 = idx.map(|i| g.input.data()[i]).sum();
            assert!((g.beta.data()[ch] - sum_gy).abs() < 1e-12);
            // no gradient along the constant direction
            assert!(sum_gx.abs() < 1e-9, "{sum_gx}");
        }
    }

    #[test]
    fn finite_difference_train_mode() {
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(200 + seed);
            let x: Tensor<f64> = random_tensor(&[2, 3, 3, 2], &mut rng);
            let gamma: Tensor<f64> = random_tensor(&[3], &mut rng);
            let beta: Tensor<f64> = random_tensor(&[3], &mut rng);
            let gy: Tensor<f64> = random_tensor(&[2, 3, 3, 2], &mut rng);
            let loss = |x: &Tensor<f64>, g: &Tensor<f64>, b: &Tensor<f64>| -> f64 {
                let mut st = BnState::new(3);
                let (y, _) = batchnorm_train(x, g, b, &mut st, 0.1, EPS).unwrap();
                y.data().iter().zip(gy.data()).map(|(a, g)| a * g).sum()
            };
            let mut st = BnState::new(3);
            let (_, cache) = batchnorm_train(&x, &gamma, &beta, &mut st, 0.1, EPS).unwrap();
            let g = batchnorm_backward(&cache, &gamma, &gy).unwrap();
            let nx = central_diff(&x, 1e-5, |t| loss(t, &gamma, &beta));
            let ng = central_diff(&gamma, 1e-5, |t| loss(&x, t, &beta));
            let nb = central_diff(&beta, 1e-5, |t| loss(&x, &gamma, t));
            assert!(max_rel_err(g.input.data(), &nx) < 1e-4);
            assert!(max_rel_err(g.gamma.data(), &ng) < 1e-4);
            assert!(max_rel_err(g.beta.data(), &nb) < 1e-4);
        }
    }
}
