use rand::Rng;

use super::{Scalar, Tensor};

pub fn random_tensor<T: Scalar>(dims: &[usize], rng: &mut impl Rng) -> Tensor<T> {
    let n = dims.iter().product();
    let data = (0..n).map(|_| T::from_f64(rng.gen_range(-1.0..1.0))).collect();
    Tensor::from_vec(dims, data).unwrap()
}

/// Central differences of a scalar function with respect to every element.
pub fn central_diff(x: &Tensor<f64>, h: f64, mut f: impl FnMut(&Tensor<f64>) -> f64) -> Vec<f64> {
    let mut probe = x.clone();
    (0..x.numel())
        .map(|i| {
            let orig = probe.data()[i];
            probe.data_mut()[i] = orig + h;
            let up = f(&probe);
            probe.data_mut()[i] = orig - h;
            let down = f(&probe);
            probe.data_mut()[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

pub fn max_rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-6))
        .fold(0.0, f64::max)
}
