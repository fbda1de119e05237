//! GPRNet model: encoder and decoder graphs.
//!
//! Encoder: pointwise feature stacks f₁ (m×64), f₂ (m×128), f₃ (m×256);
//! per-stack max-pooling yields g₁,g₂,g₃; every gⱼ is broadcast and
//! concatenated to every fᵢ (all nine pairings) into a per-point feature
//! matrix, and a final shared MLP + max-pool produces the 896-dim global
//! feature v. Max-pooling makes v invariant to input point order.
//!
//! Decoder: three fully-connected heads of 256, 128, and 64 neurons, each
//! expanded to an n×3 local matrix; the global feature is reshaped into the
//! complementary 448×3 block, giving 896 seed points. A folding head then
//! attaches a 3×3 planar patch (half-side δ) to every seed through a shared
//! MLP that emits coordinate offsets, for 896·9 = 8064 output points.
//!
//! All widths scale down by `width_divisor` for desk-sized experiments.

use crate::autodiff::{init_linear, Array, BoundParams, ParamSet, Tape, TensorId};
use crate::autodiff::{linear, shared_mlp};
use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::migration::net::bind_frozen;
use crate::rng::rng_from_seed;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GprNetConfig {
    /// All hidden widths are divided by this; 1 = full width, 4 = desk.
    pub width_divisor: usize,
    /// Required input cloud size (resample first otherwise).
    pub input_points: usize,
    /// Half-side of the 3×3 folding patch, meters.
    pub fold_delta: f64,
}

impl GprNetConfig {
    pub fn full() -> Self {
        GprNetConfig {
            width_divisor: 1,
            input_points: 1500,
            fold_delta: 0.01,
        }
    }

    /// Quarter-width model used by tests and desk-scale training.
    pub fn desk() -> Self {
        GprNetConfig {
            width_divisor: 4,
            ..GprNetConfig::full()
        }
    }

    fn w(&self, base: usize) -> usize {
        base / self.width_divisor
    }

    /// Dimension of the global feature v (896 at full width).
    pub fn feature_dim(&self) -> usize {
        self.w(896)
    }

    /// Seed rows: local heads 256+128+64 plus the 448 global complement.
    pub fn seed_points(&self) -> usize {
        self.w(256) + self.w(128) + self.w(64) + self.w(448)
    }

    /// Output cloud size: 9 points folded around every seed.
    pub fn output_points(&self) -> usize {
        self.seed_points() * 9
    }

    fn validate(&self) -> Result<()> {
        let d = self.width_divisor;
        if d == 0 || 64 % d != 0 {
            return Err(Error::invalid(format!(
                "width divisor must divide 64, got {d}"
            )));
        }
        if self.input_points == 0 {
            return Err(Error::invalid("input point count must be positive"));
        }
        if self.fold_delta <= 0.0 {
            return Err(Error::invalid("folding patch size must be positive"));
        }
        Ok(())
    }
}

pub struct GprNet {
    pub config: GprNetConfig,
    pub params: ParamSet,
}

impl GprNet {
    pub fn init(config: GprNetConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = rng_from_seed(seed);
        let mut p = ParamSet::new();
        let (w1, w2, w3) = (config.w(64), config.w(128), config.w(256));
        let v = config.feature_dim();
        // all-pairs concatenation width: Σ_{i,j} (wᵢ + wⱼ) = 6·(w₁+w₂+w₃)
        let fw = 6 * (w1 + w2 + w3);
        let mut lin = |p: &mut ParamSet, name: &str, fi: usize, fo: usize| -> Result<()> {
            p.insert(format!("{name}.w"), init_linear(fi, fo, &mut rng))?;
            p.insert(format!("{name}.b"), Array::zeros(vec![fo]))
        };
        lin(&mut p, "enc.f1", 3, w1)?;
        lin(&mut p, "enc.f2", w1, w2)?;
        lin(&mut p, "enc.f3", w2, w3)?;
        lin(&mut p, "enc.v1", fw, v)?;
        lin(&mut p, "enc.v2", v, v)?;
        for (name, n) in [("h1", config.w(256)), ("h2", config.w(128)), ("h3", config.w(64))] {
            lin(&mut p, &format!("dec.{name}.a"), v, n)?;
            lin(&mut p, &format!("dec.{name}.e"), n, n * 3)?;
        }
        lin(&mut p, "dec.g", v, config.w(448) * 3)?;
        let fh = config.w(64);
        lin(&mut p, "fold.l1", 5, fh)?;
        lin(&mut p, "fold.l2", fh, fh)?;
        lin(&mut p, "fold.l3", fh, 3)?;
        Ok(GprNet { config, params: p })
    }

    pub fn from_params(config: GprNetConfig, params: ParamSet) -> Result<Self> {
        let fresh = GprNet::init(config, 0)?;
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
        Ok(GprNet { config, params })
    }

    /// Encoder graph: `[m×3]` points → `[feature_dim]` global feature.
    /// Public so training harnesses and gradient checks can extend the graph
    /// with their own loss; plain inference should use [`GprNet::encode`].
    pub fn encode_on_tape(
        &self,
        tape: &mut Tape,
        bound: &BoundParams,
        points: TensorId,
    ) -> Result<TensorId> {
        let (m, c) = tape.value(points).dims2()?;
        if c != 3 || m != self.config.input_points {
            return Err(Error::ShapeMismatch {
                expected: vec![self.config.input_points, 3],
                got: vec![m, c],
                context: "encoder input cloud",
            });
        }
        let layer = |t: &mut Tape, x, name: &str| -> Result<TensorId> {
            let y = linear(t, x, bound.id(&format!("{name}.w")), bound.id(&format!("{name}.b")))?;
            Ok(t.relu(y))
        };
        let f1 = layer(tape, points, "enc.f1")?;
        let f2 = layer(tape, f1, "enc.f2")?;
        let f3 = layer(tape, f2, "enc.f3")?;
        let mut g_rows = Vec::with_capacity(3);
        for &f in &[f1, f2, f3] {
            let g = tape.max_over_rows(f)?;
            g_rows.push(tape.broadcast_row(g, m)?);
        }
        // all nine (fᵢ, gⱼ) pairings along the feature axis
        let mut blocks = Vec::with_capacity(18);
        for &f in &[f1, f2, f3] {
            for &g in &g_rows {
                blocks.push(f);
                blocks.push(g);
            }
        }
        let merged = tape.concat_cols(&blocks)?;
        let h = layer(tape, merged, "enc.v1")?;
        let h = layer(tape, h, "enc.v2")?;
        tape.max_over_rows(h)
    }

    /// Decoder graph: `[feature_dim]` → `[output_points×3]` cloud.
    /// Public for the same reason as [`GprNet::encode_on_tape`].
    pub fn decode_on_tape(
        &self,
        tape: &mut Tape,
        bound: &BoundParams,
        v: TensorId,
    ) -> Result<TensorId> {
        let vdim = self.config.feature_dim();
        if tape.value(v).shape() != [vdim] {
            return Err(Error::ShapeMismatch {
                expected: vec![vdim],
                got: tape.value(v).shape().to_vec(),
                context: "decoder global feature",
            });
        }
        let row = tape.reshape(v, vec![1, vdim])?;
        let mut seed_blocks = Vec::with_capacity(4);
        for (name, n) in [
            ("h1", self.config.w(256)),
            ("h2", self.config.w(128)),
            ("h3", self.config.w(64)),
        ] {
            let a = linear(
                tape,
                row,
                bound.id(&format!("dec.{name}.a.w")),
                bound.id(&format!("dec.{name}.a.b")),
            )?;
            let a = tape.relu(a);
            let e = linear(
                tape,
                a,
                bound.id(&format!("dec.{name}.e.w")),
                bound.id(&format!("dec.{name}.e.b")),
            )?;
            seed_blocks.push(tape.reshape(e, vec![n, 3])?);
        }
        let g = linear(tape, row, bound.id("dec.g.w"), bound.id("dec.g.b"))?;
        seed_blocks.push(tape.reshape(g, vec![self.config.w(448), 3])?);
        let seeds = tape.concat_rows(&seed_blocks)?;
        let s = self.config.seed_points();
        let rep = tape.repeat_rows(seeds, 9)?;
        // fixed 3×3 patch coordinates, one block of 9 rows per seed
        let d = self.config.fold_delta;
        let mut grid = Vec::with_capacity(s * 18);
        for _ in 0..s {
            for gu in [-d, 0.0, d] {
                for gw in [-d, 0.0, d] {
                    grid.push(gu);
                    grid.push(gw);
                }
            }
        }
        let grid = tape.constant(Array::new(vec![s * 9, 2], grid)?);
        let fold_in = tape.concat_cols(&[rep, grid])?;
        let layers = [
            (bound.id("fold.l1.w"), bound.id("fold.l1.b")),
            (bound.id("fold.l2.w"), bound.id("fold.l2.b")),
            (bound.id("fold.l3.w"), bound.id("fold.l3.b")),
        ];
        let offsets = shared_mlp(tape, fold_in, &layers, false)?;
        tape.add(rep, offsets)
    }

    /// Inference: encode a cloud of exactly `input_points` points.
    pub fn encode(&self, cloud: &PointCloud) -> Result<Array> {
        let mut tape = Tape::new();
        let bound = bind_frozen(&mut tape, &self.params);
        let x = tape.constant(Array::new(
            vec![cloud.len(), 3],
            cloud.to_flat(),
        )?);
        let v = self.encode_on_tape(&mut tape, &bound, x)?;
        Ok(tape.value(v).clone())
    }

    /// Inference: decode a global feature into the dense cloud.
    pub fn decode(&self, v: &Array) -> Result<PointCloud> {
        let mut tape = Tape::new();
        let bound = bind_frozen(&mut tape, &self.params);
        let vid = tape.constant(v.clone());
        let out = self.decode_on_tape(&mut tape, &bound, vid)?;
        PointCloud::from_flat(tape.value(out).data())
    }

    /// Full completion: sparse input → dense output.
    pub fn complete(&self, cloud: &PointCloud) -> Result<PointCloud> {
        let v = self.encode(cloud)?;
        self.decode(&v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::seq::SliceRandom;
    use rand::Rng;

    fn tiny_config() -> GprNetConfig {
        GprNetConfig {
            width_divisor: 8,
            input_points: 100,
            fold_delta: 0.01,
        }
    }

    fn random_cloud(n: usize, seed: u64) -> PointCloud {
        let mut rng = rng_from_seed(seed);
        PointCloud::new(
            (0..n)
                .map(|_| {
                    [
                        rng.gen_range(-1.0..1.0),
                        rng.gen_range(-1.0..1.0),
                        rng.gen_range(-1.0..1.0),
                    ]
                })
                .collect(),
        )
    }

    #[test]
    fn census_arithmetic() {
        let full = GprNetConfig::full();
        assert_eq!(full.feature_dim(), 896);
        assert_eq!(full.seed_points(), 256 + 128 + 64 + 448);
        assert_eq!(full.seed_points(), 896);
        assert_eq!(full.output_points(), 8064);
        let desk = GprNetConfig::desk();
        assert_eq!(desk.feature_dim(), 224);
        assert_eq!(desk.output_points(), 2016);
    }

    #[test]
    fn encode_decode_shapes() {
        let cfg = tiny_config();
        let net = GprNet::init(cfg, 1).unwrap();
        let v = net.encode(&random_cloud(100, 2)).unwrap();
        assert_eq!(v.shape(), &[cfg.feature_dim()]);
        let out = net.decode(&v).unwrap();
        assert_eq!(out.len(), cfg.output_points());
    }

    #[test]
    fn encoder_is_permutation_invariant() {
        let net = GprNet::init(tiny_config(), 3).unwrap();
        let cloud = random_cloud(100, 4);
        let v0 = net.encode(&cloud).unwrap();
        let mut rng = rng_from_seed(5);
        for _ in 0..10 {
            let mut pts = cloud.points().to_vec();
            pts.shuffle(&mut rng);
            let v1 = net.encode(&PointCloud::new(pts)).unwrap();
            let max_diff = v0
                .data()
                .iter()
                .zip(v1.data())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(max_diff < 1e-9, "max diff {max_diff}");
        }
    }

    #[test]
    fn encoder_depends_on_support_not_multiplicity() {
        let net = GprNet::init(tiny_config(), 6).unwrap();
        let base = random_cloud(50, 7);
        // same 50-point support under two different multiplicity patterns
        let mut a = base.points().to_vec();
        a.extend_from_slice(base.points());
        let mut b = base.points().to_vec();
        b.extend(std::iter::repeat(base.points()[0]).take(50));
        let va = net.encode(&PointCloud::new(a)).unwrap();
        let vb = net.encode(&PointCloud::new(b)).unwrap();
        let max_diff = va
            .data()
            .iter()
            .zip(vb.data())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        assert!(max_diff < 1e-9, "max diff {max_diff}");
    }

    #[test]
    fn zero_folding_head_repeats_seeds() {
        let mut net = GprNet::init(tiny_config(), 8).unwrap();
        for name in ["fold.l1.w", "fold.l1.b", "fold.l2.w", "fold.l2.b", "fold.l3.w", "fold.l3.b"]
        {
            let p = net.params.get_mut(name).unwrap();
            *p = Array::zeros(p.shape().to_vec());
        }
        let out = net.complete(&random_cloud(100, 9)).unwrap();
        let pts = out.points();
        for chunk in pts.chunks(9) {
            for p in chunk {
                assert_eq!(p, &chunk[0]);
            }
        }
    }

    #[test]
    fn wrong_input_size_rejected() {
        let net = GprNet::init(tiny_config(), 10).unwrap();
        assert!(net.encode(&random_cloud(99, 11)).is_err());
        assert!(net.decode(&Array::zeros(vec![7])).is_err());
    }

    #[test]
    fn output_count_ignores_input_content() {
        let cfg = tiny_config();
        let net = GprNet::init(cfg, 12).unwrap();
        for seed in 13..16 {
            let out = net.complete(&random_cloud(100, seed)).unwrap();
            assert_eq!(out.len(), cfg.output_points());
        }
    }

    #[test]
    fn end_to_end_gradient_matches_finite_differences() {
        use crate::autodiff::gradcheck::{finite_difference, max_rel_err};
        use crate::cloud::{chamfer_loss, ChamferVariant};
        let cfg = GprNetConfig {
            width_divisor: 16,
            input_points: 12,
            fold_delta: 0.01,
        };
        let net = GprNet::init(cfg, 20).unwrap();
        let input = Array::new(vec![12, 3], random_cloud(12, 21).to_flat()).unwrap();
        let gt = Array::new(vec![10, 3], random_cloud(10, 22).to_flat()).unwrap();
        // check the gradient of one weight matrix against central differences
        let name = "enc.f1.w";
        let run = |params: &ParamSet| -> (f64, Option<Vec<f64>>) {
            let model = GprNet {
                config: cfg,
                params: params.clone(),
            };
            let mut tape = Tape::new();
            let bound = model.params.bind(&mut tape);
            let x = tape.constant(input.clone());
            let v = model.encode_on_tape(&mut tape, &bound, x).unwrap();
            let out = model.decode_on_tape(&mut tape, &bound, v).unwrap();
            let loss = chamfer_loss(&mut tape, out, &gt, ChamferVariant::Squared).unwrap();
            let val = tape.value(loss).scalar_value();
            tape.backward(loss).unwrap();
            let g = tape.grad(bound.id(name)).map(|g| g.data().to_vec());
            (val, g)
        };
        let (_, analytic) = run(&net.params);
        let analytic = analytic.unwrap();
        let base = net.params.get(name).unwrap().data().to_vec();
        let mut eval = |xs: &[f64]| {
            let mut p = net.params.clone();
            p.get_mut(name).unwrap().data_mut().copy_from_slice(xs);
            run(&p).0
        };
        let fd = finite_difference(&mut eval, &base, 1e-6);
        let err = max_rel_err(&analytic, &fd, 1e-6);
        assert!(err < 1e-4, "end-to-end grad rel err {err}");
    }
}
