//! Bidirectional nearest-neighbor metrics between point clouds, with
//! gradients for the completion loss.
//!
//! Both directions are averaged by their own cloud's cardinality. Per-point
//! nearest distances are accumulated in sorted order, so the reported value
//! is bitwise invariant to point permutation.

use super::kdtree::{dist2, KdTree};
use super::PointCloud;
use crate::autodiff::array::Array;
use crate::autodiff::tape::{Tape, TensorId};
use crate::error::{Error, Result};

/// Distance convention for the Chamfer metric. `Squared` is the training
/// loss and the reported CD; `Euclidean` is available behind this flag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ChamferVariant {
    #[default]
    Squared,
    Euclidean,
}

/// Sum in ascending value order; permutation-invariant at the bit level.
fn sorted_sum(mut values: Vec<f64>) -> f64 {
    values.sort_by(f64::total_cmp);
    values.iter().sum()
}

struct NnPairing {
    /// For each point of `s`: index of its nearest neighbor in `gt` and d².
    fwd: Vec<(usize, f64)>,
    /// For each point of `gt`: index of its nearest neighbor in `s` and d².
    bwd: Vec<(usize, f64)>,
}

fn pair_up(s: &[[f64; 3]], gt: &[[f64; 3]]) -> NnPairing {
    let tree_gt = KdTree::build(gt);
    let tree_s = KdTree::build(s);
    NnPairing {
        fwd: s.iter().map(|&p| tree_gt.nearest(p)).collect(),
        bwd: gt.iter().map(|&p| tree_s.nearest(p)).collect(),
    }
}

fn chamfer_value(pairing: &NnPairing, variant: ChamferVariant, ns: usize, ngt: usize) -> f64 {
    let to_metric = |d2: f64| match variant {
        ChamferVariant::Squared => d2,
        ChamferVariant::Euclidean => d2.sqrt(),
    };
    let fwd = sorted_sum(pairing.fwd.iter().map(|&(_, d)| to_metric(d)).collect());
    let bwd = sorted_sum(pairing.bwd.iter().map(|&(_, d)| to_metric(d)).collect());
    fwd / ns as f64 + bwd / ngt as f64
}

/// Chamfer distance between `s` and `gt`, plus its gradient w.r.t. the
/// points of `s`. Gradient of each nearest-neighbor term flows to the
/// selected neighbor only.
pub fn chamfer_distance(
    s: &PointCloud,
    gt: &PointCloud,
    variant: ChamferVariant,
) -> Result<(f64, Vec<[f64; 3]>)> {
    if s.is_empty() || gt.is_empty() {
        return Err(Error::invalid("chamfer distance of an empty point set"));
    }
    let (sp, gp) = (s.points(), gt.points());
    let pairing = pair_up(sp, gp);
    let value = chamfer_value(&pairing, variant, sp.len(), gp.len());
    let grad = chamfer_gradient(sp, gp, &pairing, variant);
    Ok((value, grad))
}

fn chamfer_gradient(
    sp: &[[f64; 3]],
    gp: &[[f64; 3]],
    pairing: &NnPairing,
    variant: ChamferVariant,
) -> Vec<[f64; 3]> {
    let mut grad = vec![[0.0; 3]; sp.len()];
    let ns = sp.len() as f64;
    let ngt = gp.len() as f64;
    // forward term: d(x, nn(x)) for each x in s
    for (i, &(j, d2)) in pairing.fwd.iter().enumerate() {
        let coeff = match variant {
            ChamferVariant::Squared => 2.0 / ns,
            ChamferVariant::Euclidean => {
                if d2 == 0.0 {
                    continue;
                }
                1.0 / (d2.sqrt() * ns)
            }
        };
        for a in 0..3 {
            grad[i][a] += coeff * (sp[i][a] - gp[j][a]);
        }
    }
    // backward term: d(y, nn(y)) — gradient lands on the selected x
    for (j, &(i, d2)) in pairing.bwd.iter().enumerate() {
        let coeff = match variant {
            ChamferVariant::Squared => 2.0 / ngt,
            ChamferVariant::Euclidean => {
                if d2 == 0.0 {
                    continue;
                }
                1.0 / (d2.sqrt() * ngt)
            }
        };
        for a in 0..3 {
            grad[i][a] += coeff * (sp[i][a] - gp[j][a]);
        }
    }
    grad
}

/// Bidirectional nearest-neighbor distance under the L1 point metric,
/// averaged per direction like the Chamfer distance.
pub fn l1_nn_distance(s: &PointCloud, gt: &PointCloud) -> Result<f64> {
    if s.is_empty() || gt.is_empty() {
        return Err(Error::invalid("L1 NN distance of an empty point set"));
    }
    let tree_gt = KdTree::build(gt.points());
    let tree_s = KdTree::build(s.points());
    let fwd = sorted_sum(
        s.points()
            .iter()
            .map(|&p| tree_gt.nearest_l1(p).1)
            .collect(),
    );
    let bwd = sorted_sum(
        gt.points()
            .iter()
            .map(|&p| tree_s.nearest_l1(p).1)
            .collect(),
    );
    Ok(fwd / s.len() as f64 + bwd / gt.len() as f64)
}

/// Chamfer loss as a tape operation: `pred` is an `[n×3]` tensor, `gt` a
/// fixed `[m×3]` target. Returns a scalar node whose backward pass routes
/// gradients to the nearest-neighbor pairs selected in this forward pass.
pub fn chamfer_loss(
    tape: &mut Tape,
    pred: TensorId,
    gt: &Array,
    variant: ChamferVariant,
) -> Result<TensorId> {
    let (n, c) = tape.value(pred).dims2()?;
    let (m, cg) = gt.dims2()?;
    if c != 3 || cg != 3 {
        return Err(Error::ShapeMismatch {
            expected: vec![n, 3],
            got: vec![m, cg],
            context: "chamfer_loss operands must be n×3",
        });
    }
    if n == 0 || m == 0 {
        return Err(Error::invalid("chamfer loss of an empty point set"));
    }
    let sp: Vec<[f64; 3]> = tape
        .value(pred)
        .data()
        .chunks(3)
        .map(|p| [p[0], p[1], p[2]])
        .collect();
    let gp: Vec<[f64; 3]> = gt.data().chunks(3).map(|p| [p[0], p[1], p[2]]).collect();
    let pairing = pair_up(&sp, &gp);
    let value = chamfer_value(&pairing, variant, n, m);
    let grad = chamfer_gradient(&sp, &gp, &pairing, variant);
    let grad_flat: Vec<f64> = grad.into_iter().flatten().collect();
    Ok(tape.custom(
        Array::scalar(value),
        vec![pred],
        Box::new(move |_, g, _, needs| {
            vec![needs[0].then(|| {
                let gs = g.scalar_value();
                Array::new(vec![n, 3], grad_flat.iter().map(|&v| gs * v).collect()).unwrap()
            })]
        }),
    ))
}

/// Point-to-nearest distance helper used by registration quality checks.
pub fn nearest_distance(cloud: &PointCloud, p: [f64; 3]) -> f64 {
    debug_assert!(!cloud.is_empty());
    cloud
        .points()
        .iter()
        .map(|&q| dist2(p, q).sqrt())
        .fold(f64::INFINITY, f64::min)
}
