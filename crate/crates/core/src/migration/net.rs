//! MigrationNet: a multi-resolution convolutional encoder/decoder that maps
//! a normalized B-scan to per-pixel pipe probabilities.
//!
//! Three encoder branches pool the input down by a total factor of 8 along
//! different schedules — one 8× pool, a 4× then a 2×, and three 2× pools —
//! and their feature maps are concatenated channelwise at the 1/8-resolution
//! meeting point (3 × branch width channels). The decoder runs three ×2
//! up-sampling groups (two convolutions + one transposed convolution), each
//! fed the finest branch's pre-pool features at the matching resolution as a
//! skip connection, then two resolution-preserving convolution groups, and
//! ends in a 1×1 sigmoid head.

use rand::Rng;

use crate::autodiff::{init_conv, Array, BoundParams, ParamSet, Tape, TensorId};
use crate::bscan::BScan;
use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MigrationNetConfig {
    /// Per-branch output channels; must be divisible by 4. The concatenated
    /// feature has 3× this many channels.
    pub branch_channels: usize,
}

impl MigrationNetConfig {
    /// Small width used by tests and desk-scale training.
    pub fn desk() -> Self {
        MigrationNetConfig {
            branch_channels: 32,
        }
    }

    /// Full width: 512 per branch, 1536 after concatenation.
    pub fn full() -> Self {
        MigrationNetConfig {
            branch_channels: 512,
        }
    }

    pub fn concat_channels(&self) -> usize {
        3 * self.branch_channels
    }
}

pub struct MigrationNet {
    pub config: MigrationNetConfig,
    pub params: ParamSet,
}

/// Tape handles produced by one forward construction.
pub(crate) struct BuiltForward {
    pub output: TensorId,
    /// Pooled per-branch features at the 1/8-resolution meeting point.
    pub branches: [TensorId; 3],
}

fn add_conv<R: Rng>(
    params: &mut ParamSet,
    rng: &mut R,
    name: &str,
    ci: usize,
    co: usize,
    k: usize,
) -> Result<()> {
    params.insert(format!("{name}.w"), init_conv(co, ci, k, k, rng))?;
    params.insert(format!("{name}.b"), Array::zeros(vec![co]))
}

fn add_deconv<R: Rng>(
    params: &mut ParamSet,
    rng: &mut R,
    name: &str,
    ci: usize,
    co: usize,
) -> Result<()> {
    // transposed-convolution kernels are laid out [ci, co, kh, kw]
    let k = init_conv(ci, co, 2, 2, rng);
    let k = Array::new(vec![ci, co, 2, 2], k.into_data())?;
    params.insert(format!("{name}.w"), k)?;
    params.insert(format!("{name}.b"), Array::zeros(vec![co]))
}

impl MigrationNet {
    pub fn init(config: MigrationNetConfig, seed: u64) -> Result<Self> {
        let c = config.branch_channels;
        if c == 0 || c % 4 != 0 {
            return Err(Error::invalid(format!(
                "branch channels must be a positive multiple of 4, got {c}"
            )));
        }
        let (q, hf) = (c / 4, c / 2);
        let mut rng = rng_from_seed(seed);
        let mut p = ParamSet::new();
        // branch A: one group, 8× pool
        add_conv(&mut p, &mut rng, "enc.a1.c1", 1, c, 3)?;
        add_conv(&mut p, &mut rng, "enc.a1.c2", c, c, 3)?;
        // branch B: 4× then 2×
        add_conv(&mut p, &mut rng, "enc.b1.c1", 1, hf, 3)?;
        add_conv(&mut p, &mut rng, "enc.b1.c2", hf, hf, 3)?;
        add_conv(&mut p, &mut rng, "enc.b2.c1", hf, c, 3)?;
        add_conv(&mut p, &mut rng, "enc.b2.c2", c, c, 3)?;
        // branch C: three 2× pools; pre-pool features feed the skips
        add_conv(&mut p, &mut rng, "enc.c1.c1", 1, q, 3)?;
        add_conv(&mut p, &mut rng, "enc.c1.c2", q, q, 3)?;
        add_conv(&mut p, &mut rng, "enc.c2.c1", q, hf, 3)?;
        add_conv(&mut p, &mut rng, "enc.c2.c2", hf, hf, 3)?;
        add_conv(&mut p, &mut rng, "enc.c3.c1", hf, c, 3)?;
        add_conv(&mut p, &mut rng, "enc.c3.c2", c, c, 3)?;
        // decoder: three up-sampling groups with skip concatenations
        add_conv(&mut p, &mut rng, "dec.u1.c1", 3 * c, c, 3)?;
        add_conv(&mut p, &mut rng, "dec.u1.c2", c, c, 3)?;
        add_deconv(&mut p, &mut rng, "dec.u1.d", c, c)?;
        add_conv(&mut p, &mut rng, "dec.u2.c1", 2 * c, hf, 3)?;
        add_conv(&mut p, &mut rng, "dec.u2.c2", hf, hf, 3)?;
        add_deconv(&mut p, &mut rng, "dec.u2.d", hf, hf)?;
        add_conv(&mut p, &mut rng, "dec.u3.c1", hf + hf, q, 3)?;
        add_conv(&mut p, &mut rng, "dec.u3.c2", q, q, 3)?;
        add_deconv(&mut p, &mut rng, "dec.u3.d", q, q)?;
        // two resolution-preserving groups, then the 1×1 head
        add_conv(&mut p, &mut rng, "dec.p1.c1", hf, q, 3)?;
        add_conv(&mut p, &mut rng, "dec.p1.c2", q, q, 3)?;
        add_conv(&mut p, &mut rng, "dec.p2.c1", q, q, 3)?;
        add_conv(&mut p, &mut rng, "dec.p2.c2", q, q, 3)?;
        add_conv(&mut p, &mut rng, "dec.head", q, 1, 1)?;
        Ok(MigrationNet { config, params: p })
    }

    pub fn from_params(config: MigrationNetConfig, params: ParamSet) -> Result<Self> {
        let fresh = MigrationNet::init(config, 0)?;
        for (name, v) in fresh.params.iter() {
            match params.get(name) {
                None => {
                    return Err(Error::invalid(format!("checkpoint missing parameter {name}")))
                }
                Some(got) if got.shape() != v.shape() => {
                    return Err(Error::ShapeMismatch {
                        expected: v.shape().to_vec(),
                        got: got.shape().to_vec(),
                        context: "checkpoint parameter shape",
                    })
                }
                _ => {}
            }
        }
        Ok(MigrationNet { config, params })
    }

    fn check_input(&self, shape: &[usize]) -> Result<(usize, usize)> {
        let [c, h, w] = match shape {
            &[a, b, c] => [a, b, c],
            _ => {
                return Err(Error::ShapeMismatch {
                    expected: vec![1, 0, 0],
                    got: shape.to_vec(),
                    context: "MigrationNet input rank",
                })
            }
        };
        if c != 1 {
            return Err(Error::invalid(format!(
                "MigrationNet expects a single-channel input, got {c} channels"
            )));
        }
        if h % 8 != 0 || w % 8 != 0 || h == 0 || w == 0 {
            return Err(Error::invalid(format!(
                "input {h}x{w} not divisible by the pooling factor 8; \
                 pad to {}x{}",
                h.div_ceil(8).max(1) * 8,
                w.div_ceil(8).max(1) * 8
            )));
        }
        Ok((h, w))
    }

    /// Two 3×3 same-padding convolutions with ReLU.
    fn conv_group(
        &self,
        tape: &mut Tape,
        bound: &BoundParams,
        name: &str,
        x: TensorId,
    ) -> Result<TensorId> {
        let mut cur = x;
        for layer in ["c1", "c2"] {
            cur = tape.conv2d(
                cur,
                bound.id(&format!("{name}.{layer}.w")),
                bound.id(&format!("{name}.{layer}.b")),
                1,
                1,
            )?;
            cur = tape.relu(cur);
        }
        Ok(cur)
    }

    /// Build the full forward graph; shared by inference and training.
    pub(crate) fn build(
        &self,
        tape: &mut Tape,
        bound: &BoundParams,
        input: TensorId,
    ) -> Result<BuiltForward> {
        self.check_input(tape.value(input).shape())?;
        // encoder
        let a_pre = self.conv_group(tape, bound, "enc.a1", input)?;
        let a = tape.maxpool2d(a_pre, 8)?;
        let b1 = self.conv_group(tape, bound, "enc.b1", input)?;
        let b1 = tape.maxpool2d(b1, 4)?;
        let b2 = self.conv_group(tape, bound, "enc.b2", b1)?;
        let b = tape.maxpool2d(b2, 2)?;
        let c1_pre = self.conv_group(tape, bound, "enc.c1", input)?;
        let c1 = tape.maxpool2d(c1_pre, 2)?;
        let c2_pre = self.conv_group(tape, bound, "enc.c2", c1)?;
        let c2 = tape.maxpool2d(c2_pre, 2)?;
        let c3_pre = self.conv_group(tape, bound, "enc.c3", c2)?;
        let c3 = tape.maxpool2d(c3_pre, 2)?;
        let merged = tape.concat_channels(&[a, b, c3])?;
        // decoder
        let mut x = self.conv_group(tape, bound, "dec.u1", merged)?;
        x = tape.deconv2d(x, bound.id("dec.u1.d.w"), bound.id("dec.u1.d.b"), 2)?;
        x = tape.relu(x);
        x = tape.concat_channels(&[x, c3_pre])?;
        x = self.conv_group(tape, bound, "dec.u2", x)?;
        x = tape.deconv2d(x, bound.id("dec.u2.d.w"), bound.id("dec.u2.d.b"), 2)?;
        x = tape.relu(x);
        x = tape.concat_channels(&[x, c2_pre])?;
        x = self.conv_group(tape, bound, "dec.u3", x)?;
        x = tape.deconv2d(x, bound.id("dec.u3.d.w"), bound.id("dec.u3.d.b"), 2)?;
        x = tape.relu(x);
        x = tape.concat_channels(&[x, c1_pre])?;
        x = self.conv_group(tape, bound, "dec.p1", x)?;
        x = self.conv_group(tape, bound, "dec.p2", x)?;
        let logits = tape.conv2d(x, bound.id("dec.head.w"), bound.id("dec.head.b"), 1, 0)?;
        let output = tape.sigmoid(logits);
        Ok(BuiltForward {
            output,
            branches: [a, b, c3],
        })
    }

    /// Inference: `[1,H,W]` normalized B-scan → `[1,H,W]` probabilities.
    pub fn forward(&self, input: &Array) -> Result<Array> {
        Ok(self.forward_with_branches(input)?.0)
    }

    /// Inference that also returns the three pooled branch feature maps at
    /// the 1/8-resolution meeting point.
    pub fn forward_with_branches(&self, input: &Array) -> Result<(Array, Vec<Array>)> {
        let mut tape = Tape::new();
        // inference: parameters recorded without gradient tracking
        let bound = bind_frozen(&mut tape, &self.params);
        let x = tape.constant(input.clone());
        let built = self.build(&mut tape, &bound, x)?;
        let branches = built
            .branches
            .iter()
            .map(|&id| tape.value(id).clone())
            .collect();
        Ok((tape.value(built.output).clone(), branches))
    }
}

/// Record every parameter as a non-tracked constant (inference path).
pub(crate) fn bind_frozen(tape: &mut Tape, params: &ParamSet) -> BoundParams {
    let mut map = std::collections::BTreeMap::new();
    for (name, v) in params.iter() {
        map.insert(name.clone(), tape.constant(v.clone()));
    }
    BoundParams::from_ids(map)
}

/// Normalize a B-scan to a `[1,T,K]` input in `[0,1]` (min-max per image;
/// a constant image maps to all zeros).
pub fn bscan_to_input(bscan: &BScan) -> Result<Array> {
    let lo = bscan.amplitudes.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = bscan
        .amplitudes
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    let data = if span > 0.0 {
        bscan.amplitudes.iter().map(|&a| (a - lo) / span).collect()
    } else {
        vec![0.0; bscan.amplitudes.len()]
    };
    Array::new(vec![1, bscan.time_samples, bscan.traces], data)
}

/// Fraction of pixels where `pred` thresholded at 0.5 matches the 0/1 target.
pub fn pixel_accuracy(pred: &Array, target: &Array) -> Result<f64> {
    if pred.shape() != target.shape() {
        return Err(Error::ShapeMismatch {
            expected: target.shape().to_vec(),
            got: pred.shape().to_vec(),
            context: "pixel_accuracy prediction vs target",
        });
    }
    let n = pred.numel();
    if n == 0 {
        return Err(Error::invalid("pixel_accuracy on empty grids"));
    }
    let hits = pred
        .data()
        .iter()
        .zip(target.data())
        .filter(|(&p, &y)| (p >= 0.5) == (y >= 0.5))
        .count();
    Ok(hits as f64 / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forward_shape_and_range_128() {
        let net = MigrationNet::init(MigrationNetConfig::desk(), 3).unwrap();
        let mut rng = rng_from_seed(4);
        let x = Array::uniform(vec![1, 128, 128], 0.5, &mut rng).map(|v| v + 0.5);
        let (y, branches) = net.forward_with_branches(&x).unwrap();
        assert_eq!(y.shape(), &[1, 128, 128]);
        assert!(y.data().iter().all(|&p| p > 0.0 && p < 1.0));
        // all branches meet at 1/8 resolution with the configured width
        for b in &branches {
            assert_eq!(b.shape(), &[32, 16, 16]);
        }
    }

    #[test]
    fn output_matches_input_size_for_other_multiples_of_8() {
        let net = MigrationNet::init(MigrationNetConfig::desk(), 3).unwrap();
        for (h, w) in [(32, 64), (64, 40), (8, 8)] {
            let x = Array::zeros(vec![1, h, w]);
            let y = net.forward(&x).unwrap();
            assert_eq!(y.shape(), &[1, h, w], "input {h}x{w}");
        }
    }

    #[test]
    fn non_divisible_dims_report_padding() {
        let net = MigrationNet::init(MigrationNetConfig::desk(), 3).unwrap();
        let x = Array::zeros(vec![1, 100, 70]);
        let err = net.forward(&x).unwrap_err().to_string();
        assert!(err.contains("104x72"), "{err}");
    }

    #[test]
    fn concat_width_arithmetic() {
        assert_eq!(MigrationNetConfig::full().concat_channels(), 1536);
        assert_eq!(MigrationNetConfig::desk().concat_channels(), 96);
    }

    #[test]
    fn width_not_multiple_of_4_rejected() {
        assert!(MigrationNet::init(MigrationNetConfig { branch_channels: 30 }, 0).is_err());
    }

    #[test]
    fn forward_is_deterministic() {
        let net = MigrationNet::init(MigrationNetConfig::desk(), 9).unwrap();
        let mut rng = rng_from_seed(10);
        let x = Array::uniform(vec![1, 16, 16], 0.5, &mut rng);
        assert_eq!(net.forward(&x).unwrap(), net.forward(&x).unwrap());
    }

    #[test]
    fn normalization_hits_unit_range() {
        use crate::bscan::{synthesize_bscan, BScanConfig};
        use crate::kinematics::ScanLine;
        use crate::scene::{Pipe, PipeScene};
        let mut scene = PipeScene::new([2.0, 2.0, 1.0], 9.0).unwrap();
        scene
            .add_pipe(Pipe {
                start: [1.0, 0.0, -0.4],
                end: [1.0, 2.0, -0.4],
                radius: 0.05,
                material: "metal".into(),
            })
            .unwrap();
        let line = ScanLine {
            start: [0.0, 1.0],
            end: [2.0, 1.0],
            trace_spacing: 0.05,
        };
        let cfg = BScanConfig::for_scene(&scene).unwrap().with_time_samples(64);
        let b = synthesize_bscan(&scene, &line, &cfg).unwrap();
        let x = bscan_to_input(&b).unwrap();
        assert_eq!(x.shape(), &[1, 64, b.traces]);
        let lo = x.data().iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = x.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(lo, 0.0);
        assert_eq!(hi, 1.0);
    }
}
