use super::{NnError, Scalar, Tensor};

pub fn relu_forward<T: Scalar>(input: &Tensor<T>) -> Tensor<T> {
    let mut out = input.clone();
    for v in out.data_mut() {
        if !(*v > T::zero()) {
            *v = T::zero();
        }
    }
    out
}

/// Masks by `input > 0`; the subgradient at exactly zero is zero.
pub fn relu_backward<T: Scalar>(input: &Tensor<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>, NnError> {
    if input.dims() != grad_out.dims() {
        return Err(NnError::ShapeMismatch("relu grad shape".into()));
    }
    let data = input
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&x, &g)| if x > T::zero() { g } else { T::zero() })
        .collect();
    Tensor::from_vec(input.dims(), data)
}

/// Mean over the spatial plane of each channel: `[N][C][H][W]` → `[N][C]`.
pub fn global_avg_pool_forward<T: Scalar>(input: &Tensor<T>) -> Result<Tensor<T>, NnError> {
    let [n, c, h, w] = input.dims4("pool input")?;
    let hw = h * w;
    if hw == 0 {
        return Err(NnError::ShapeMismatch("empty spatial plane".into()));
    }
    let scale = T::from_f64(1.0 / hw as f64);
    let data = input
        .data()
        .chunks_exact(hw)
        .map(|plane| plane.iter().copied().sum::<T>() * scale)
        .collect();
    Tensor::from_vec(&[n, c], data)
}

pub fn global_avg_pool_backward<T: Scalar>(
    grad_out: &Tensor<T>,
    h: usize,
    w: usize,
) -> Result<Tensor<T>, NnError> {
    let [n, c] = grad_out.dims2("pool grad")?;
    let scale = T::from_f64(1.0 / (h * w) as f64);
    let mut data = Vec::with_capacity(n * c * h * w);
    for &g in grad_out.data() {
        data.extend(std::iter::repeat_n(g * scale, h * w));
    }
    Tensor::from_vec(&[n, c, h, w], data)
}

/// `logits = features · Wᵀ + b` with `W: [classes][C]`.
pub fn fc_forward<T: Scalar>(
    features: &Tensor<T>,
    weights: &Tensor<T>,
    bias: &Tensor<T>,
) -> Result<Tensor<T>, NnError> {
    let [n, c] = features.dims2("fc input")?;
    let [o, wc] = weights.dims2("fc weights")?;
    if wc != c || bias.dims() != [o] {
        return Err(NnError::ShapeMismatch(format!(
            "fc weights {:?} / bias {:?} do not fit {c} features",
            weights.dims(),
            bias.dims()
        )));
    }
    let mut out = Tensor::zeros(&[n, o]);
    for row in out.data_mut().chunks_exact_mut(o) {
        row.copy_from_slice(bias.data());
    }
    T::gemm(n, c, o, T::one(), features.data(), false, weights.data(), true, T::one(), out.data_mut());
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct FcGrads<T> {
    pub features: Tensor<T>,
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
}

pub fn fc_backward<T: Scalar>(
    features: &Tensor<T>,
    weights: &Tensor<T>,
    grad_logits: &Tensor<T>,
) -> Result<FcGrads<T>, NnError> {
    let [n, c] = features.dims2("fc input")?;
    let [o, wc] = weights.dims2("fc weights")?;
    if wc != c || grad_logits.dims() != [n, o] {
        return Err(NnError::ShapeMismatch("fc backward shapes".into()));
    }
    let g = grad_logits.data();
    let mut grad_features = Tensor::zeros(&[n, c]);
    T::gemm(n, o, c, T::one(), g, false, weights.data(), false, T::zero(), grad_features.data_mut());
    let mut grad_weights = Tensor::zeros(&[o, c]);
    T::gemm(o, n, c, T::one(), g, true, features.data(), false, T::zero(), grad_weights.data_mut());
    let mut grad_bias = Tensor::zeros(&[o]);
    for row in g.chunks_exact(o) {
        for (acc, &v) in grad_bias.data_mut().iter_mut().zip(row) {
            *acc = *acc + v;
        }
    }
    Ok(FcGrads {
        features: grad_features,
        weights: grad_weights,
        bias: grad_bias,
    })
}

/// Row-wise softmax with max subtraction.
pub fn softmax<T: Scalar>(logits: &Tensor<T>) -> Result<Tensor<T>, NnError> {
    let [_, o] = logits.dims2("softmax input")?;
    let mut out = logits.clone();
    for row in out.data_mut().chunks_exact_mut(o) {
        softmax_in_place(row);
    }
    Ok(out)
}

pub(crate) fn softmax_in_place<T: Scalar>(row: &mut [T]) {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    let mut total = T::zero();
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total = total + *v;
    }
    for v in row.iter_mut() {
        *v = *v / total;
    }
}

/// Mean cross-entropy over the batch and its gradient `(softmax − onehot)/N`.
pub fn softmax_cross_entropy<T: Scalar>(
    logits: &Tensor<T>,
    labels: &[usize],
) -> Result<(T, Tensor<T>), NnError> {
    let [n, o] = logits.dims2("logits")?;
    if labels.len() != n {
        return Err(NnError::ShapeMismatch(format!("{} labels for {n} rows", labels.len())));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= o) {
        return Err(NnError::ShapeMismatch(format!("label {bad} out of range for {o} classes")));
    }
    let mut grad = logits.clone();
    let inv_n = T::from_f64(1.0 / n as f64);
    let mut loss = T::zero();
    for (row, &label) in grad.data_mut().chunks_exact_mut(o).zip(labels) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let log_total = row.iter().map(|&v| (v - max).exp()).sum::<T>().ln();
        loss = loss - (row[label] - max - log_total);
        softmax_in_place(row);
        row[label] = row[label] - T::one();
        for v in row.iter_mut() {
            *v = *v * inv_n;
        }
    }
    Ok((loss * inv_n, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::testutil::{central_diff, max_rel_err, random_tensor};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn relu_basics() {
        let x: Tensor<f64> = Tensor::from_vec(&[4], vec![-1.0, 0.0, 2.0, -0.0]).unwrap();
        let y = relu_forward(&x);
        assert_eq!(y.data(), &[0.0, 0.0, 2.0, 0.0]);
        let g = relu_backward(&x, &Tensor::full(&[4], 1.0)).unwrap();
        assert_eq!(g.data(), &[0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn relu_finite_difference_away_from_kink() {
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(300 + seed);
            let mut x: Tensor<f64> = random_tensor(&[2, 3, 2, 2], &mut rng);
            for v in x.data_mut() {
                if v.abs() < 0.05 {
                    *v += 0.1;
                }
            }
            let gy: Tensor<f64> = random_tensor(&[2, 3, 2, 2], &mut rng);
            let g = relu_backward(&x, &gy).unwrap();
            let num = central_diff(&x, 1e-4, |t| {
                relu_forward(t).data().iter().zip(gy.data()).map(|(a, b)| a * b).sum()
            });
            assert!(max_rel_err(g.data(), &num) < 1e-4);
        }
    }

    #[test]
    fn pooling_constant_and_backward_spread() {
        let x: Tensor<f64> = Tensor::full(&[2, 3, 4, 5], 1.5);
        let y = global_avg_pool_forward(&x).unwrap();
        assert_eq!(y.dims(), &[2, 3]);
        assert!(y.data().iter().all(|&v| (v - 1.5).abs() < 1e-15));
        let g = global_avg_pool_backward(&Tensor::<f64>::full(&[2, 3], 2.0), 4, 5).unwrap();
        assert!(g.data().iter().all(|&v| (v - 0.1).abs() < 1e-15));
    }

    #[test]
    fn pooling_finite_difference() {
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(400 + seed);
            let x: Tensor<f64> = random_tensor(&[2, 3, 3, 4], &mut rng);
            let gy: Tensor<f64> = random_tensor(&[2, 3], &mut rng);
            let g = global_avg_pool_backward(&gy, 3, 4).unwrap();
            let num = central_diff(&x, 1e-4, |t| {
                let y = global_avg_pool_forward(t).unwrap();
                y.data().iter().zip(gy.data()).map(|(a, b)| a * b).sum()
            });
            assert!(max_rel_err(g.data(), &num) < 1e-4);
        }
    }

    #[test]
    fn fc_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let f: Tensor<f64> = random_tensor(&[3, 12], &mut rng);
        let mut w = Tensor::zeros(&[12, 12]);
        for i in 0..12 {
            w.data_mut()[i * 12 + i] = 1.0;
        }
        let y = fc_forward(&f, &w, &Tensor::zeros(&[12])).unwrap();
        assert_eq!(y, f);
    }

    #[test]
    fn fc_finite_difference() {
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(500 + seed);
            let f: Tensor<f64> = random_tensor(&[3, 5], &mut rng);
            let w: Tensor<f64> = random_tensor(&[4, 5], &mut rng);
            let b: Tensor<f64> = random_tensor(&[4], &mut rng);
            let gy: Tensor<f64> = random_tensor(&[3, 4], &mut rng);
            let loss = |f: &Tensor<f64>, w: &Tensor<f64>, b: &Tensor<f64>| -> f64 {
                let y = fc_forward(f, w, b).unwrap();
                y.data().iter().zip(gy.data()).map(|(a, g)| a * g).sum()
            };
            let g = fc_backward(&f, &w, &gy).unwrap();
            assert!(max_rel_err(g.features.data(), &central_diff(&f, 1e-4, |t| loss(t, &w, &b))) < 1e-4);
            assert!(max_rel_err(g.weights.data(), &central_diff(&w, 1e-4, |t| loss(&f, t, &b))) < 1e-4);
            assert!(max_rel_err(g.bias.data(), &central_diff(&b, 1e-4, |t| loss(&f, &w, t))) < 1e-4);
        }
    }

    #[test]
    fn fc_with_softmax_ce_gives_outer_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let f: Tensor<f64> = random_tensor(&[1, 6], &mut rng);
        let w: Tensor<f64> = random_tensor(&[12, 6], &mut rng);
        let b: Tensor<f64> = random_tensor(&[12], &mut rng);
        let logits = fc_forward(&f, &w, &b).unwrap();
        let (_, gl) = softmax_cross_entropy(&logits, &[4]).unwrap();
        let g = fc_backward(&f, &w, &gl).unwrap();
        let p = softmax(&logits).unwrap();
        for o in 0..12 {
            let y = if o == 4 { 1.0 } else { 0.0 };
            for c in 0..6 {
                let expected = (p.data()[o] - y) * f.data()[c];
                assert!((g.weights.data()[o * 6 + c] - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn uniform_logits_loss_is_ln12() {
        let logits: Tensor<f64> = Tensor::full(&[4, 12], 0.3);
        let (loss, _) = softmax_cross_entropy(&logits, &[0, 3, 7, 11]).unwrap();
        assert!((loss - 12f64.ln()).abs() < 1e-12);
        assert!((loss - 2.4849).abs() < 1e-4);
    }

    #[test]
    fn softmax_rows_sum_to_one_even_for_large_logits() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let mut logits: Tensor<f32> = Tensor::zeros(&[5, 12]);
        for v in logits.data_mut() {
            *v = rng.gen_range(-500.0..500.0);
        }
        let p = softmax(&logits).unwrap();
        for row in p.data().chunks(12) {
            let s: f32 = row.iter().sum();
            assert!((s - 1.0).abs() < 1e-6);
            assert!(row.iter().all(|v| v.is_finite() && *v >= 0.0));
        }
    }

    #[test]
    fn softmax_ce_finite_difference() {
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(600 + seed);
            let logits: Tensor<f64> = random_tensor(&[3, 12], &mut rng);
            let labels: Vec<usize> = (0..3).map(|_| rng.gen_range(0..12)).collect();
            let (_, g) = softmax_cross_entropy(&logits, &labels).unwrap();
            let num = central_diff(&logits, 1e-5, |t| softmax_cross_entropy(t, &labels).unwrap().0);
            assert!(max_rel_err(g.data(), &num) < 1e-4);
        }
    }

    #[test]
    fn label_out_of_range_is_an_error() {
        let logits: Tensor<f32> = Tensor::zeros(&[1, 12]);
        assert!(softmax_cross_entropy(&logits, &[12]).is_err());
        assert!(softmax_cross_entropy(&logits, &[0, 1]).is_err());
    }
}
