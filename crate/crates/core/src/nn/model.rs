use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    batchnorm_backward, batchnorm_infer, batchnorm_train, conv2d_backward, conv2d_forward,
    fc_backward, fc_forward, global_avg_pool_backward, global_avg_pool_forward, relu_backward,
    relu_forward, BnCache, BnState, NnError, Scalar, Tensor,
};

pub const CONV_BLOCKS: usize = 5;
pub const N_CLASSES: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Identity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvBlockSpec {
    pub out_channels: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride: usize,
    pub activation: Activation,
}

impl ConvBlockSpec {
    pub fn relu3x3(out_channels: usize) -> Self {
        Self {
            out_channels,
            kernel_h: 3,
            kernel_w: 3,
            stride: 1,
            activation: Activation::Relu,
        }
    }
}

/// Declarative layer list. Five conv blocks feed global average pooling and
/// a 12-way fully-connected layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchSpec {
    pub in_channels: usize,
    pub conv_blocks: Vec<ConvBlockSpec>,
    pub n_classes: usize,
    pub bn_eps: f64,
    pub bn_momentum: f64,
}

impl Default for ArchSpec {
    /// Channels 16-32-32-64-64 with 3×3 kernels and ReLU.
    fn default() -> Self {
        Self::with_channels(&[16, 32, 32, 64, 64])
    }
}

impl ArchSpec {
    pub fn with_channels(channels: &[usize]) -> Self {
        Self {
            in_channels: 1,
            conv_blocks: channels.iter().map(|&c| ConvBlockSpec::relu3x3(c)).collect(),
            n_classes: N_CLASSES,
            bn_eps: 1e-5,
            bn_momentum: 0.1,
        }
    }

    pub fn validate(&self) -> Result<(), NnError> {
        if self.conv_blocks.len() != CONV_BLOCKS {
            return Err(NnError::InvalidArch(format!(
                "expected {CONV_BLOCKS} conv blocks, got {}",
                self.conv_blocks.len()
            )));
        }
        if self.n_classes != N_CLASSES {
            return Err(NnError::InvalidArch(format!(
                "expected {N_CLASSES} classes, got {}",
                self.n_classes
            )));
        }
        if self.in_channels == 0 {
            return Err(NnError::InvalidArch("in_channels must be positive".into()));
        }
        for (i, b) in self.conv_blocks.iter().enumerate() {
            if b.out_channels == 0 || b.kernel_h == 0 || b.kernel_w == 0 || b.stride == 0 {
                return Err(NnError::InvalidArch(format!("block {i} has a zero dimension")));
            }
        }
        if !(self.bn_eps > 0.0) || !(0.0..=1.0).contains(&self.bn_momentum) {
            return Err(NnError::InvalidArch("bn_eps must be > 0 and momentum in [0, 1]".into()));
        }
        Ok(())
    }

    /// Width of the pooled feature vector the classifier sees.
    pub fn feature_dim(&self) -> usize {
        self.conv_blocks.last().map_or(self.in_channels, |b| b.out_channels)
    }

    /// Input channel count of each block.
    fn block_inputs(&self) -> impl Iterator<Item = (usize, &ConvBlockSpec)> {
        let ins = std::iter::once(self.in_channels)
            .chain(self.conv_blocks.iter().map(|b| b.out_channels));
        ins.zip(self.conv_blocks.iter())
    }

    /// `(name, dims)` of every stored tensor, in file order.
    pub fn tensor_layout(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        for (i, (cin, b)) in self.block_inputs().enumerate() {
            let c = b.out_channels;
            out.push((format!("block{i}.conv.weight"), vec![c, cin, b.kernel_h, b.kernel_w]));
            out.push((format!("block{i}.conv.bias"), vec![c]));
            out.push((format!("block{i}.bn.gamma"), vec![c]));
            out.push((format!("block{i}.bn.beta"), vec![c]));
            out.push((format!("block{i}.bn.running_mean"), vec![c]));
            out.push((format!("block{i}.bn.running_var"), vec![c]));
        }
        out.push(("fc.weight".into(), vec![self.n_classes, self.feature_dim()]));
        out.push(("fc.bias".into(), vec![self.n_classes]));
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockParams<T> {
    pub conv_weight: Tensor<T>,
    pub conv_bias: Tensor<T>,
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
    pub bn: BnState<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    pub blocks: Vec<BlockParams<T>>,
    pub fc_weights: Tensor<T>,
    pub fc_bias: Tensor<T>,
}

impl<T: Scalar> ModelParams<T> {
    /// Learnable tensors in canonical order: per block conv weight, conv
    /// bias, gamma, beta; then fc weights and fc bias.
    pub fn learnable_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut out = Vec::with_capacity(4 * self.blocks.len() + 2);
        for b in &mut self.blocks {
            out.push(&mut b.conv_weight);
            out.push(&mut b.conv_bias);
            out.push(&mut b.gamma);
            out.push(&mut b.beta);
        }
        out.push(&mut self.fc_weights);
        out.push(&mut self.fc_bias);
        out
    }

    /// All stored tensors, including running statistics, in file order.
    pub fn all_tensors(&self) -> Vec<&Tensor<T>> {
        let mut out = Vec::with_capacity(6 * self.blocks.len() + 2);
        for b in &self.blocks {
            out.extend([
                &b.conv_weight,
                &b.conv_bias,
                &b.gamma,
                &b.beta,
                &b.bn.running_mean,
                &b.bn.running_var,
            ]);
        }
        out.push(&self.fc_weights);
        out.push(&self.fc_bias);
        out
    }

    pub fn cast<U: Scalar>(&self) -> ModelParams<U> {
        ModelParams {
            blocks: self
                .blocks
                .iter()
                .map(|b| BlockParams {
                    conv_weight: b.conv_weight.cast(),
                    conv_bias: b.conv_bias.cast(),
                    gamma: b.gamma.cast(),
                    beta: b.beta.cast(),
                    bn: BnState {
                        running_mean: b.bn.running_mean.cast(),
                        running_var: b.bn.running_var.cast(),
                    },
                })
                .collect(),
            fc_weights: self.fc_weights.cast(),
            fc_bias: self.fc_bias.cast(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockGrads<T> {
    pub conv_weight: Tensor<T>,
    pub conv_bias: Tensor<T>,
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
}

/// One gradient per learnable parameter, shape-congruent with [`ModelParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet<T> {
    pub blocks: Vec<BlockGrads<T>>,
    pub fc_weights: Tensor<T>,
    pub fc_bias: Tensor<T>,
}

impl<T: Scalar> GradientSet<T> {
    /// Same order as [`ModelParams::learnable_mut`].
    pub fn tensors(&self) -> Vec<&Tensor<T>> {
        let mut out = Vec::with_capacity(4 * self.blocks.len() + 2);
        for b in &self.blocks {
            out.extend([&b.conv_weight, &b.conv_bias, &b.gamma, &b.beta]);
        }
        out.push(&self.fc_weights);
        out.push(&self.fc_bias);
        out
    }

    pub fn scale(&mut self, factor: T) {
        let all = self
            .blocks
            .iter_mut()
            .flat_map(|b| [&mut b.conv_weight, &mut b.conv_bias, &mut b.gamma, &mut b.beta])
            .chain([&mut self.fc_weights, &mut self.fc_bias]);
        for t in all {
            t.data_mut().iter_mut().for_each(|v| *v = *v * factor);
        }
    }
}

/// Activations kept from a train-mode forward pass.
#[derive(Debug, Clone)]
pub struct TrainTrace<T> {
    /// `acts[0]` is the network input, `acts[i + 1]` the output of block `i`.
    acts: Vec<Tensor<T>>,
    bn: Vec<BnCache<T>>,
    pub features: Tensor<T>,
    pub logits: Tensor<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model<T> {
    pub arch: ArchSpec,
    pub params: ModelParams<T>,
}

impl<T: Scalar> Model<T> {
    /// Glorot-uniform conv and fc weights, zero biases, identity batch-norm.
    pub fn init(arch: &ArchSpec, seed: u64) -> Result<Self, NnError> {
        arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut glorot = |dims: &[usize], fan_in: usize, fan_out: usize| {
            let s = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let n = dims.iter().product();
            let data = (0..n).map(|_| T::from_f64(rng.gen_range(-s..s))).collect();
            Tensor::from_vec(dims, data).expect("dims match count")
        };
        let mut blocks = Vec::with_capacity(arch.conv_blocks.len());
        for (cin, b) in arch.block_inputs() {
            let c = b.out_channels;
            let area = b.kernel_h * b.kernel_w;
            blocks.push(BlockParams {
                conv_weight: glorot(&[c, cin, b.kernel_h, b.kernel_w], cin * area, c * area),
                conv_bias: Tensor::zeros(&[c]),
                gamma: Tensor::full(&[c], T::one()),
                beta: Tensor::zeros(&[c]),
                bn: BnState::new(c),
            });
        }
        let c = arch.feature_dim();
        let fc_weights = glorot(&[arch.n_classes, c], c, arch.n_classes);
        Ok(Self {
            arch: arch.clone(),
            params: ModelParams {
                blocks,
                fc_weights,
                fc_bias: Tensor::zeros(&[arch.n_classes]),
            },
        })
    }

    /// Checks that every tensor has the shape the architecture implies.
    pub fn from_parts(arch: ArchSpec, params: ModelParams<T>) -> Result<Self, NnError> {
        arch.validate()?;
        let layout = arch.tensor_layout();
        let tensors = params.all_tensors();
        if layout.len() != tensors.len() {
            return Err(NnError::ShapeMismatch(format!(
                "architecture has {} tensors, parameters have {}",
                layout.len(),
                tensors.len()
            )));
        }
        for ((name, dims), t) in layout.iter().zip(tensors) {
            if t.dims() != dims.as_slice() {
                return Err(NnError::ShapeMismatch(format!(
                    "{name}: expected {dims:?}, got {:?}",
                    t.dims()
                )));
            }
        }
        Ok(Self { arch, params })
    }

    pub fn cast<U: Scalar>(&self) -> Model<U> {
        Model {
            arch: self.arch.clone(),
            params: self.params.cast(),
        }
    }

    fn check_input(&self, input: &Tensor<T>) -> Result<(), NnError> {
        let [_, c, _, _] = input.dims4("model input")?;
        if c != self.arch.in_channels {
            return Err(NnError::ShapeMismatch(format!(
                "model expects {} input channels, got {c}",
                self.arch.in_channels
            )));
        }
        Ok(())
    }

    /// Pooled features (the classifier input) with batch-norm in inference mode.
    pub fn features(&self, input: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        self.check_input(input)?;
        let eps = self.arch.bn_eps;
        let mut x = input.clone();
        for (spec, p) in self.arch.conv_blocks.iter().zip(&self.params.blocks) {
            let y = conv2d_forward(&x, &p.conv_weight, &p.conv_bias, spec.stride)?;
            let y = batchnorm_infer(&y, &p.gamma, &p.beta, &p.bn, eps)?;
            x = match spec.activation {
                Activation::Relu => relu_forward(&y),
                Activation::Identity => y,
            };
        }
        global_avg_pool_forward(&x)
    }

    /// Inference-mode logits `[N][n_classes]`.
    pub fn forward(&self, input: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        let f = self.features(input)?;
        fc_forward(&f, &self.params.fc_weights, &self.params.fc_bias)
    }

    /// Train-mode forward: batch statistics normalize and update running stats.
    pub fn forward_train(&mut self, input: &Tensor<T>) -> Result<TrainTrace<T>, NnError> {
        self.check_input(input)?;
        let (eps, momentum) = (self.arch.bn_eps, self.arch.bn_momentum);
        let mut acts = Vec::with_capacity(self.arch.conv_blocks.len() + 1);
        let mut bn = Vec::with_capacity(self.arch.conv_blocks.len());
        acts.push(input.clone());
        for (spec, p) in self.arch.conv_blocks.iter().zip(&mut self.params.blocks) {
            let x = acts.last().expect("input pushed");
            let y = conv2d_forward(x, &p.conv_weight, &p.conv_bias, spec.stride)?;
            let (y, cache) = batchnorm_train(&y, &p.gamma, &p.beta, &mut p.bn, momentum, eps)?;
            bn.push(cache);
            acts.push(match spec.activation {
                Activation::Relu => relu_forward(&y),
                Activation::Identity => y,
            });
        }
        let features = global_avg_pool_forward(acts.last().expect("blocks ran"))?;
        let logits = fc_forward(&features, &self.params.fc_weights, &self.params.fc_bias)?;
        Ok(TrainTrace {
            acts,
            bn,
            features,
            logits,
        })
    }

    /// Back-propagates `grad_logits` through a train-mode trace.
    pub fn backward(&self, trace: &TrainTrace<T>, grad_logits: &Tensor<T>) -> Result<GradientSet<T>, NnError> {
        let fc = fc_backward(&trace.features, &self.params.fc_weights, grad_logits)?;
        let last = trace.acts.last().expect("trace has activations");
        let [_, _, h, w] = last.dims4("last activation")?;
        let mut grad = global_avg_pool_backward(&fc.features, h, w)?;
        let mut blocks = Vec::with_capacity(self.params.blocks.len());
        for i in (0..self.params.blocks.len()).rev() {
            let spec = &self.arch.conv_blocks[i];
            let p = &self.params.blocks[i];
            if spec.activation == Activation::Relu {
                // relu(y) > 0 exactly where y > 0, so the output doubles as the mask
                grad = relu_backward(&trace.acts[i + 1], &grad)?;
            }
            let bn = batchnorm_backward(&trace.bn[i], &p.gamma, &grad)?;
            let conv = conv2d_backward(&trace.acts[i], &p.conv_weight, &bn.input, spec.stride)?;
            blocks.push(BlockGrads {
                conv_weight: conv.kernels,
                conv_bias: conv.bias,
                gamma: bn.gamma,
                beta: bn.beta,
            });
            grad = conv.input;
        }
        blocks.reverse();
        Ok(GradientSet {
            blocks,
            fc_weights: fc.weights,
            fc_bias: fc.bias,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::softmax_cross_entropy;
    use crate::nn::testutil::{max_rel_err, random_tensor};

    fn tiny_arch() -> ArchSpec {
        ArchSpec::with_channels(&[3, 4, 4, 5, 6])
    }

    #[test]
    fn output_shape_and_determinism() {
        let model: Model<f32> = Model::init(&tiny_arch(), 1).unwrap();
        let mut rng = <ChaCha8Rng as SeedableRng>::seed_from_u64(2);
        let x: Tensor<f32> = random_tensor(&[3, 1, 10, 8], &mut rng);
        let a = model.forward(&x).unwrap();
        let b = model.forward(&x).unwrap();
        assert_eq!(a.dims(), &[3, 12]);
        assert_eq!(a.data(), b.data());
        assert_eq!(model.features(&x).unwrap().dims(), &[3, 6]);
    }

    #[test]
    fn arch_validation() {
        let mut arch = tiny_arch();
        arch.conv_blocks.pop();
        assert!(matches!(Model::<f32>::init(&arch, 0), Err(NnError::InvalidArch(_))));
        let mut arch = tiny_arch();
        arch.n_classes = 10;
        assert!(arch.validate().is_err());
    }

    #[test]
    fn from_parts_rejects_wrong_shapes() {
        let model: Model<f32> = Model::init(&tiny_arch(), 1).unwrap();
        let mut params = model.params.clone();
        params.fc_bias = Tensor::zeros(&[11]);
        assert!(Model::from_parts(tiny_arch(), params).is_err());
        assert!(Model::from_parts(tiny_arch(), model.params).is_ok());
    }

    #[test]
    fn initial_loss_is_close_to_uniform() {
        let mut model: Model<f32> = Model::init(&tiny_arch(), 3).unwrap();
        let mut rng = <ChaCha8Rng as SeedableRng>::seed_from_u64(4);
        let x: Tensor<f32> = random_tensor(&[8, 1, 12, 10], &mut rng);
        let trace = model.forward_train(&x).unwrap();
        let (loss, _) = softmax_cross_entropy(&trace.logits, &[0, 1, 2, 3, 4, 5, 6, 7]).unwrap();
        assert!((loss - 12f32.ln()).abs() < 0.5, "{loss}");
    }

    fn loss_of(model: &Model<f64>, x: &Tensor<f64>, labels: &[usize]) -> f64 {
        let mut m = model.clone();
        let trace = m.forward_train(x).unwrap();
        softmax_cross_entropy(&trace.logits, labels).unwrap().0
    }

    /// Random (tensor, element) picks covering `fraction` of the learnable
    /// scalars. Conv biases are left out: batch-norm subtracts the batch mean
    /// right after them, so their gradient is identically zero and is checked
    /// separately.
    fn sampled_coords(model: &Model<f64>, fraction: f64, rng: &mut ChaCha8Rng) -> Vec<(usize, usize)> {
        let mut params = model.params.clone();
        let n_blocks = params.blocks.len();
        let sizes: Vec<usize> = params
            .learnable_mut()
            .iter()
            .enumerate()
            .map(|(t, x)| if t < 4 * n_blocks && t % 4 == 1 { 0 } else { x.numel() })
            .collect();
        let total: usize = sizes.iter().sum();
        let want = ((fraction * total as f64).ceil() as usize).max(12);
        (0..want)
            .map(|_| {
                let mut k = rng.gen_range(0..total);
                let mut t = 0;
                while k >= sizes[t] {
                    k -= sizes[t];
                    t += 1;
                }
                (t, k)
            })
            .collect()
    }

    fn gradient_check(seed: u64) -> (f64, f64) {
        let mut rng = <ChaCha8Rng as SeedableRng>::seed_from_u64(seed);
        let model: Model<f64> = Model::init(&tiny_arch(), seed).unwrap();
        let x: Tensor<f64> = random_tensor(&[4, 1, 9, 7], &mut rng);
        let labels: Vec<usize> = (0..4).map(|_| rng.gen_range(0..12)).collect();

        let mut m64 = model.clone();
        let trace = m64.forward_train(&x).unwrap();
        let (_, g) = softmax_cross_entropy(&trace.logits, &labels).unwrap();
        let grads64 = model.backward(&trace, &g).unwrap();
        for b in &grads64.blocks {
            assert!(b.conv_bias.data().iter().all(|v| v.abs() < 1e-12));
        }

        let model32: Model<f32> = model.cast();
        let mut m32 = model32.clone();
        let x32: Tensor<f32> = x.cast();
        let trace32 = m32.forward_train(&x32).unwrap();
        let (_, g32) = softmax_cross_entropy(&trace32.logits, &labels).unwrap();
        let grads32 = model32.backward(&trace32, &g32).unwrap();

        let coords = sampled_coords(&model, 0.01, &mut rng);
        let (mut a64, mut a32, mut num) = (Vec::new(), Vec::new(), Vec::new());
        let h = 1e-6;
        for &(t, k) in &coords {
            let mut probe = model.clone();
            let orig = probe.params.learnable_mut()[t].data()[k];
            probe.params.learnable_mut()[t].data_mut()[k] = orig + h;
            let up = loss_of(&probe, &x, &labels);
            probe.params.learnable_mut()[t].data_mut()[k] = orig - h;
            let down = loss_of(&probe, &x, &labels);
            num.push((up - down) / (2.0 * h));
            a64.push(grads64.tensors()[t].data()[k]);
            a32.push(grads32.tensors()[t].data()[k] as f64);
        }
        // Per element in 64-bit. In 32-bit the forward pass carries rounding
        // of order 1e-7 into every gradient, which swamps small entries, so the
        // sampled gradient is compared as a vector.
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let diff: Vec<f64> = a32.iter().zip(&num).map(|(a, n)| a - n).collect();
        (max_rel_err(&a64, &num), norm(&diff) / norm(&num))
    }

    #[test]
    fn end_to_end_gradient_matches_finite_differences() {
        for seed in 0..20 {
            let (e64, e32) = gradient_check(seed);
            assert!(e64 < 1e-4, "seed {seed}: 64-bit rel err {e64}");
            assert!(e32 < 1e-3, "seed {seed}: 32-bit rel err {e32}");
        }
    }
}
