//! Named parameter sets and small layer helpers built on the tape.

use std::collections::BTreeMap;

use rand::Rng;

use super::array::Array;
use super::tape::{Tape, TensorId};
use crate::error::{Error, Result};

/// Named model parameters, iterated in deterministic (sorted) order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamSet {
    entries: BTreeMap<String, Array>,
}

impl ParamSet {
    pub fn new() -> Self {
        ParamSet::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Array) -> Result<()> {
        let name = name.into();
        if self.entries.contains_key(&name) {
            return Err(Error::invalid(format!("duplicate parameter name: {name}")));
        }
        self.entries.insert(name, value);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Array> {
        self.entries.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Array> {
        self.entries.get_mut(name)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Array)> {
        self.entries.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Array)> {
        self.entries.iter_mut()
    }

    /// Total scalar count across all parameters.
    pub fn numel(&self) -> usize {
        self.entries.values().map(Array::numel).sum()
    }

    /// Record every parameter as a gradient-tracked leaf on `tape`.
    pub fn bind(&self, tape: &mut Tape) -> BoundParams {
        let ids = self
            .entries
            .iter()
            .map(|(k, v)| (k.clone(), tape.leaf(v.clone(), true)))
            .collect();
        BoundParams { ids }
    }
}

/// Tape handles of a bound [`ParamSet`].
pub struct BoundParams {
    ids: BTreeMap<String, TensorId>,
}

impl BoundParams {
    /// Wrap an externally built name → tensor map (e.g. frozen constants).
    pub(crate) fn from_ids(ids: BTreeMap<String, TensorId>) -> Self {
        BoundParams { ids }
    }

    pub fn id(&self, name: &str) -> TensorId {
        *self
            .ids
            .get(name)
            .unwrap_or_else(|| panic!("unbound parameter: {name}"))
    }

    /// Collect gradients from `tape` after a backward pass. Parameters that
    /// did not participate get zero gradients.
    pub fn grads(&self, tape: &Tape, params: &ParamSet) -> BTreeMap<String, Array> {
        self.ids
            .iter()
            .map(|(name, &id)| {
                let g = tape
                    .grad(id)
                    .cloned()
                    .unwrap_or_else(|| Array::zeros(params.get(name).unwrap().shape().to_vec()));
                (name.clone(), g)
            })
            .collect()
    }
}

/// He-style uniform init for a `[fan_in × fan_out]` weight matrix.
pub fn init_linear<R: Rng>(fan_in: usize, fan_out: usize, rng: &mut R) -> Array {
    let half_width = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Array::uniform(vec![fan_in, fan_out], half_width, rng)
}

/// He-style uniform init for `[co, ci, kh, kw]` convolution kernels.
pub fn init_conv<R: Rng>(co: usize, ci: usize, kh: usize, kw: usize, rng: &mut R) -> Array {
    let fan_in = ci * kh * kw;
    let half_width = (6.0 / (fan_in + co * kh * kw) as f64).sqrt();
    Array::uniform(vec![co, ci, kh, kw], half_width, rng)
}

/// One fully-connected layer: `x·W + b`, with `x` of shape `[m×fan_in]`.
pub fn linear(
    tape: &mut Tape,
    x: TensorId,
    weight: TensorId,
    bias: TensorId,
) -> Result<TensorId> {
    let y = tape.matmul(x, weight)?;
    tape.add_bias(y, bias)
}

/// Pointwise MLP applied identically to every row of an `[m×d]` matrix.
/// ReLU after every layer except the last when `relu_last` is false.
/// Rejects an empty point set.
pub fn shared_mlp(
    tape: &mut Tape,
    points: TensorId,
    layers: &[(TensorId, TensorId)],
    relu_last: bool,
) -> Result<TensorId> {
    let (m, _) = tape.value(points).dims2()?;
    if m == 0 {
        return Err(Error::invalid("shared_mlp: empty point set"));
    }
    if layers.is_empty() {
        return Err(Error::invalid("shared_mlp: no layers"));
    }
    let mut cur = points;
    for (k, &(w, b)) in layers.iter().enumerate() {
        cur = linear(tape, cur, w, b)?;
        if relu_last || k + 1 < layers.len() {
            cur = tape.relu(cur);
        }
    }
    Ok(cur)
}

impl Tape {
    /// Matrix product of two rank-2 tensors.
    pub fn matmul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let v = super::array::matmul(self.value(a), self.value(b))?;
        Ok(self.custom(
            v,
            vec![a, b],
            Box::new(|_, g, pv, needs| {
                let ga = needs[0].then(|| super::array::matmul_nt(g, pv[1]).unwrap());
                let gb = needs[1].then(|| super::array::matmul_tn(pv[0], g).unwrap());
                vec![ga, gb]
            }),
        ))
    }
}
