//! The U-shaped convolutional autoencoder and its exact backward pass.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tensor::{
    bn_backward, bn_forward_infer, bn_forward_train, concat, conv_backward, conv_forward, maxpool_backward,
    maxpool_forward, sigmoid, split, upsample_backward, upsample_forward, BnCache, ConvShape, Scalar, Tensor,
};
use crate::error::{Error, Result};

/// Architecture of one network.
///
/// `widths[i]` is the channel count of encoder stage `i`; the last entry is
/// the bottleneck width, so `widths.len() - 1` stages each halve the
/// resolution. Every decoder stage upsamples, concatenates the matching
/// encoder output and applies one 3×3 convolution; a 1×1 convolution with a
/// sigmoid produces the output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub widths: Vec<usize>,
    pub use_batchnorm: bool,
}

impl NetworkSpec {
    /// Desk-scale network: three stages, widths 32, 64, 128, bottleneck 128.
    pub fn desk(use_batchnorm: bool) -> NetworkSpec {
        NetworkSpec {
            in_channels: 6,
            out_channels: 6,
            widths: vec![32, 64, 128, 128],
            use_batchnorm,
        }
    }

    /// Full-size network: widths 64, 128, 256 with a 256-wide bottleneck.
    pub fn full(use_batchnorm: bool) -> NetworkSpec {
        NetworkSpec {
            in_channels: 6,
            out_channels: 6,
            widths: vec![64, 128, 256, 256],
            use_batchnorm,
        }
    }

    /// Coefficient binarisation network (with batch normalisation).
    pub fn n1_desk() -> NetworkSpec {
        NetworkSpec::desk(true)
    }

    /// Wavefront completion network (without batch normalisation).
    pub fn n2_desk() -> NetworkSpec {
        NetworkSpec::desk(false)
    }

    pub fn stages(&self) -> usize {
        self.widths.len().saturating_sub(1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.widths.len() < 2 {
            return Err(Error::config("network needs at least one stage and a bottleneck"));
        }
        if self.in_channels == 0 || self.out_channels == 0 || self.widths.contains(&0) {
            return Err(Error::config("network channel counts must be positive"));
        }
        Ok(())
    }

    /// Input `C × H × W` the network accepts.
    pub fn check_input(&self, shape: [usize; 4]) -> Result<()> {
        let [_, c, h, w] = shape;
        let factor = 1 << self.stages();
        if c != self.in_channels {
            return Err(Error::dim(format!(
                "network expects {} channels, got {c}",
                self.in_channels
            )));
        }
        if h == 0 || w == 0 || h % factor != 0 || w % factor != 0 {
            return Err(Error::dim(format!("input {h}x{w} is not divisible by {factor}")));
        }
        Ok(())
    }

    fn blocks(&self) -> Vec<BlockSpec> {
        let l = self.stages();
        let w = &self.widths;
        let bn = self.use_batchnorm;
        let mut blocks = Vec::with_capacity(2 * l + 2);
        for s in 0..l {
            let cin = if s == 0 { self.in_channels } else { w[s - 1] };
            blocks.push(BlockSpec::conv(format!("enc{s}"), cin, w[s], 3, bn));
        }
        blocks.push(BlockSpec::conv("mid".into(), w[l - 1], w[l], 3, bn));
        for s in (0..l).rev() {
            let up = w[s + 1];
            blocks.push(BlockSpec::conv(format!("dec{s}"), up + w[s], w[s], 3, bn));
        }
        blocks.push(BlockSpec {
            name: "head".into(),
            shape: ConvShape {
                cin: w[0],
                cout: self.out_channels,
                k: 1,
            },
            relu: false,
            bn: false,
        });
        blocks
    }
}

#[derive(Debug, Clone)]
struct BlockSpec {
    name: String,
    shape: ConvShape,
    relu: bool,
    bn: bool,
}

impl BlockSpec {
    fn conv(name: String, cin: usize, cout: usize, k: usize, bn: bool) -> BlockSpec {
        BlockSpec {
            name,
            shape: ConvShape { cin, cout, k },
            relu: true,
            bn,
        }
    }
}

/// Initial bias of the sigmoid head, `logit(0.05)`: wavefront masks are
/// sparse, and starting every output at 0.5 leaves the dice loss nearly flat
/// in the background pixels.
pub const HEAD_BIAS_INIT: f64 = -2.944_438_979_166_44;

/// Scale of the head's He-uniform bound. A small head starts every output
/// plane near the prior: planes that start saturated receive almost no
/// gradient through the sigmoid and the dice loss then drives them to zero.
pub const HEAD_WEIGHT_SCALE: f64 = 0.1;

/// One named weight, bias or statistics tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<T>,
    /// Running statistics are stored but not optimised.
    pub trainable: bool,
}

#[derive(Debug, Clone, Copy)]
struct BlockIdx {
    shape: ConvShape,
    relu: bool,
    weight: usize,
    bias: usize,
    /// gamma, beta, running mean, running variance
    bn: Option<[usize; 4]>,
}

/// Whether batch normalisation uses batch or stored statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// A network with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Network<T> {
    spec: NetworkSpec,
    seed: u64,
    params: Vec<Param<T>>,
}

/// Per-parameter gradients, aligned with [`Network::params`] (empty for
/// non-trainable entries).
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub values: Vec<Vec<T>>,
}

struct BlockTape<T> {
    input: Tensor<T>,
    pre_activation: Tensor<T>,
    bn: Option<BnCache<T>>,
}

/// Activations saved by a forward pass for the backward pass.
pub struct Tape<T> {
    blocks: Vec<BlockTape<T>>,
    pools: Vec<(Vec<u32>, [usize; 4])>,
    output: Tensor<T>,
}

impl<T: Scalar> Tape<T> {
    /// Sigmoid output of the taped pass.
    pub fn output(&self) -> &Tensor<T> {
        &self.output
    }
}

impl<T: Scalar> Network<T> {
    /// He-uniform weights from `seed`, zero hidden biases, a sparse prior on
    /// the head bias and identity normalisation.
    pub fn new(spec: NetworkSpec, seed: u64) -> Result<Network<T>> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::new();
        for b in spec.blocks() {
            let s = b.shape;
            let fan_in = (s.cin * s.k * s.k) as f64;
            let mut bound = (6.0 / fan_in).sqrt();
            if !b.relu {
                bound *= HEAD_WEIGHT_SCALE;
            }
            params.push(Param {
                name: format!("{}.weight", b.name),
                shape: vec![s.cout, s.cin, s.k, s.k],
                data: (0..s.weight_len())
                    .map(|_| T::of(rng.gen_range(-bound..bound)))
                    .collect(),
                trainable: true,
            });
            let bias = if b.relu { T::zero() } else { T::of(HEAD_BIAS_INIT) };
            params.push(Param {
                name: format!("{}.bias", b.name),
                shape: vec![s.cout],
                data: vec![bias; s.cout],
                trainable: true,
            });
            if b.bn {
                for (suffix, init, trainable) in [
                    ("gamma", T::one(), true),
                    ("beta", T::zero(), true),
                    ("running_mean", T::zero(), false),
                    ("running_var", T::one(), false),
                ] {
                    params.push(Param {
                        name: format!("{}.bn.{suffix}", b.name),
                        shape: vec![s.cout],
                        data: vec![init; s.cout],
                        trainable,
                    });
                }
            }
        }
        Ok(Network { spec, seed, params })
    }

    /// Rebuild from stored tensors, checking names and shapes.
    pub fn from_params(spec: NetworkSpec, seed: u64, params: Vec<Param<T>>) -> Result<Network<T>> {
        let template = Network::<T>::new(spec.clone(), 0)?;
        if template.params.len() != params.len() {
            return Err(Error::config(format!(
                "parameter count {} does not match the architecture ({})",
                params.len(),
                template.params.len()
            )));
        }
        for (t, p) in template.params.iter().zip(&params) {
            if t.name != p.name || t.shape != p.shape || p.data.len() != t.data.len() {
                return Err(Error::config(format!(
                    "parameter {} does not match the architecture",
                    p.name
                )));
            }
            if p.data.iter().any(|v| !v.is_finite()) {
                return Err(Error::numeric(format!("parameter {} is not finite", p.name)));
            }
        }
        Ok(Network { spec, seed, params })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn params(&self) -> &[Param<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param<T>] {
        &mut self.params
    }

    pub fn parameter_count(&self) -> usize {
        self.params.iter().filter(|p| p.trainable).map(|p| p.data.len()).sum()
    }

    /// Convert the parameters to another precision.
    pub fn cast<U: Scalar>(&self) -> Network<U> {
        Network {
            spec: self.spec.clone(),
            seed: self.seed,
            params: self
                .params
                .iter()
                .map(|p| Param {
                    name: p.name.clone(),
                    shape: p.shape.clone(),
                    data: p.data.iter().map(|v| U::of(v.to_f64().unwrap_or(f64::NAN))).collect(),
                    trainable: p.trainable,
                })
                .collect(),
        }
    }

    fn layout(&self) -> Vec<BlockIdx> {
        let mut next = 0;
        self.spec
            .blocks()
            .into_iter()
            .map(|b| {
                let weight = next;
                let bias = next + 1;
                next += 2;
                let bn = b.bn.then(|| {
                    let idx = [next, next + 1, next + 2, next + 3];
                    next += 4;
                    idx
                });
                BlockIdx {
                    shape: b.shape,
                    relu: b.relu,
                    weight,
                    bias,
                    bn,
                }
            })
            .collect()
    }

    fn block_forward(
        &self,
        blk: &BlockIdx,
        x: Tensor<T>,
        mode: Mode,
        tape: Option<&mut Vec<BlockTape<T>>>,
    ) -> Tensor<T> {
        let p = &self.params;
        let z = conv_forward(&x, &p[blk.weight].data, &p[blk.bias].data, blk.shape);
        let a = if blk.relu {
            z.map(|v| v.max(T::zero()))
        } else {
            z.clone()
        };
        let (out, cache) = match (blk.bn, mode) {
            (Some([g, b, _, _]), Mode::Train) => {
                let (y, c) = bn_forward_train(&a, &p[g].data, &p[b].data);
                (y, Some(c))
            }
            (Some([g, b, m, v]), Mode::Infer) => (
                bn_forward_infer(&a, &p[g].data, &p[b].data, &p[m].data, &p[v].data),
                None,
            ),
            (None, _) => (a, None),
        };
        if let Some(tape) = tape {
            tape.push(BlockTape {
                input: x,
                pre_activation: z,
                bn: cache,
            });
        }
        out
    }

    fn run(&self, x: &Tensor<T>, mode: Mode, keep: bool) -> Result<(Tensor<T>, Option<Tape<T>>)> {
        self.spec.check_input(x.shape())?;
        let layout = self.layout();
        let l = self.spec.stages();
        let mut blocks = Vec::with_capacity(layout.len());
        let mut pools = Vec::with_capacity(l);
        let mut skips = Vec::with_capacity(l);
        let mut h = x.clone();
        let mut li = layout.iter();
        for _ in 0..l {
            h = self.block_forward(li.next().unwrap(), h, mode, keep.then_some(&mut blocks));
            let (pooled, arg) = maxpool_forward(&h);
            pools.push((arg, h.shape()));
            skips.push(h);
            h = pooled;
        }
        h = self.block_forward(li.next().unwrap(), h, mode, keep.then_some(&mut blocks));
        for s in (0..l).rev() {
            let up = upsample_forward(&h);
            h = concat(&up, &skips[s]);
            h = self.block_forward(li.next().unwrap(), h, mode, keep.then_some(&mut blocks));
        }
        let z = self.block_forward(li.next().unwrap(), h, mode, keep.then_some(&mut blocks));
        let out = z.map(sigmoid);
        if !out.all_finite() {
            return Err(Error::numeric("network output is not finite"));
        }
        let tape = keep.then(|| Tape {
            blocks,
            pools,
            output: out.clone(),
        });
        Ok((out, tape))
    }

    /// Sigmoid outputs without keeping activations.
    pub fn forward(&self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        Ok(self.run(x, mode, false)?.0)
    }

    /// Inference-mode forward pass.
    pub fn predict(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.forward(x, Mode::Infer)
    }

    /// Forward pass that keeps what [`Network::backward`] needs.
    pub fn forward_taped(&self, x: &Tensor<T>, mode: Mode) -> Result<Tape<T>> {
        Ok(self.run(x, mode, true)?.1.expect("tape requested"))
    }

    pub fn zero_gradients(&self) -> Gradients<T> {
        Gradients {
            values: self
                .params
                .iter()
                .map(|p| {
                    if p.trainable {
                        vec![T::zero(); p.data.len()]
                    } else {
                        Vec::new()
                    }
                })
                .collect(),
        }
    }

    fn block_backward(
        &self,
        blk: &BlockIdx,
        bt: &BlockTape<T>,
        dout: Tensor<T>,
        grads: &mut Gradients<T>,
        need_dx: bool,
    ) -> Option<Tensor<T>> {
        let p = &self.params;
        let mut da = match (blk.bn, &bt.bn) {
            (Some([g, b, _, _]), Some(cache)) => {
                let (dg, db) = two_mut(&mut grads.values, g, b);
                bn_backward(cache, &dout, &p[g].data, dg, db)
            }
            _ => dout,
        };
        if blk.relu {
            for (d, &z) in da.as_mut_slice().iter_mut().zip(bt.pre_activation.as_slice()) {
                if z <= T::zero() {
                    *d = T::zero();
                }
            }
        }
        let (dw, db) = two_mut(&mut grads.values, blk.weight, blk.bias);
        conv_backward(&bt.input, &da, &p[blk.weight].data, blk.shape, dw, db, need_dx)
    }

    /// Gradients of `Σ dout · output` for a taped pass. Batch
    /// normalisation is differentiated through the batch statistics, so the
    /// tape must come from [`Mode::Train`] when the network normalises.
    pub fn backward(&self, tape: &Tape<T>, dout: &Tensor<T>) -> Result<Gradients<T>> {
        if dout.shape() != tape.output.shape() {
            return Err(Error::dim("output gradient shape differs from the network output"));
        }
        let layout = self.layout();
        if layout
            .iter()
            .zip(&tape.blocks)
            .any(|(l, b)| l.bn.is_some() && b.bn.is_none())
        {
            return Err(Error::config("backward needs a training-mode tape"));
        }
        let l = self.spec.stages();
        let mut grads = self.zero_gradients();
        // sigmoid
        let mut dz = dout.clone();
        for (d, &p) in dz.as_mut_slice().iter_mut().zip(tape.output.as_slice()) {
            *d = *d * p * (T::one() - p);
        }
        let n_blocks = layout.len();
        let mut dh = self
            .block_backward(&layout[n_blocks - 1], &tape.blocks[n_blocks - 1], dz, &mut grads, true)
            .expect("dx requested");
        let mut dskips: Vec<Option<Tensor<T>>> = (0..l).map(|_| None).collect();
        // decoder stages ran for s = l-1 .. 0, occupying blocks l+1 ..= 2l
        for s in 0..l {
            let bi = 2 * l - s;
            let dcat = self
                .block_backward(&layout[bi], &tape.blocks[bi], dh, &mut grads, true)
                .expect("dx requested");
            let (dup, dskip) = split(&dcat, self.spec.widths[s + 1]);
            dskips[s] = Some(dskip);
            dh = upsample_backward(&dup);
        }
        dh = self
            .block_backward(&layout[l], &tape.blocks[l], dh, &mut grads, true)
            .expect("dx requested");
        for s in (0..l).rev() {
            let (arg, shape) = &tape.pools[s];
            let mut d = maxpool_backward(&dh, arg, *shape);
            let skip = dskips[s].take().expect("decoder visited");
            for (a, b) in d.as_mut_slice().iter_mut().zip(skip.as_slice()) {
                *a = *a + *b;
            }
            match self.block_backward(&layout[s], &tape.blocks[s], d, &mut grads, s > 0) {
                Some(next) => dh = next,
                None => break,
            }
        }
        for (p, g) in self.params.iter().zip(&grads.values) {
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::numeric(format!("gradient of {} is not finite", p.name)));
            }
        }
        Ok(grads)
    }

    /// Blend the batch statistics of a training tape into the running
    /// estimates: `running ← (1 − momentum)·running + momentum·batch`.
    pub fn update_running_stats(&mut self, tape: &Tape<T>, momentum: f64) {
        let m = T::of(momentum);
        for (blk, bt) in self.layout().iter().zip(&tape.blocks) {
            if let (Some([_, _, mi, vi]), Some(cache)) = (blk.bn, &bt.bn) {
                for (r, &b) in self.params[mi].data.iter_mut().zip(&cache.mean) {
                    *r = (T::one() - m) * *r + m * b;
                }
                for (r, &b) in self.params[vi].data.iter_mut().zip(&cache.var_unbiased) {
                    *r = (T::one() - m) * *r + m * b;
                }
            }
        }
    }
}

fn two_mut<T>(v: &mut [Vec<T>], a: usize, b: usize) -> (&mut [T], &mut [T]) {
    assert!(a < b);
    let (lo, hi) = v.split_at_mut(b);
    (&mut lo[a], &mut hi[0])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_matches_parameter_names() {
        let net = Network::<f32>::new(NetworkSpec::desk(true), 0).unwrap();
        let names: Vec<&str> = net.params().iter().map(|p| p.name.as_str()).collect();
        assert_eq!(names[0], "enc0.weight");
        assert!(names.contains(&"mid.bn.running_var"));
        assert_eq!(names.last(), Some(&"head.bias"));
        for blk in net.layout() {
            assert_eq!(net.params[blk.weight].data.len(), blk.shape.weight_len());
        }
        let no_bn = Network::<f32>::new(NetworkSpec::desk(false), 0).unwrap();
        assert!(no_bn.params().iter().all(|p| p.trainable));
    }

    #[test]
    fn output_shape_equals_input_shape() {
        for (side, spec) in [(64, NetworkSpec::desk(true)), (32, NetworkSpec::desk(false))] {
            let net = Network::<f32>::new(spec, 1).unwrap();
            let x = Tensor::zeros([1, 6, side, side]);
            let y = net.predict(&x).unwrap();
            assert_eq!(y.shape(), x.shape());
            assert!(y.as_slice().iter().all(|&v| v > 0.0 && v < 1.0));
        }
    }

    #[test]
    fn full_architecture_accepts_128() {
        let spec = NetworkSpec::full(true);
        spec.check_input([1, 6, 128, 128]).unwrap();
        assert!(spec.check_input([1, 6, 100, 100]).is_err());
        assert!(spec.check_input([1, 5, 128, 128]).is_err());
    }

    #[test]
    fn zero_weights_give_one_half() {
        let mut net = Network::<f64>::new(NetworkSpec::desk(true), 2).unwrap();
        for p in net.params_mut() {
            if p.trainable {
                p.data.iter_mut().for_each(|v| *v = 0.0);
            }
        }
        let y = net.predict(&Tensor::zeros([2, 6, 16, 16])).unwrap();
        assert!(y.as_slice().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn seeded_initialisation_is_reproducible() {
        let a = Network::<f32>::new(NetworkSpec::desk(false), 9).unwrap();
        let b = Network::<f32>::new(NetworkSpec::desk(false), 9).unwrap();
        let c = Network::<f32>::new(NetworkSpec::desk(false), 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
