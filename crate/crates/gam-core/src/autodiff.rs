//! Minimal reverse-mode differentiation for the operation set the attention
//! pipeline uses, plus a central finite-difference verifier.
//!
//! A tape is a flat list of records in topological order (inputs always
//! precede their consumers), each holding its forward value. One backward
//! sweep walks the list once in reverse and produces a gradient for every
//! leaf it touched. Geometry (gradients, distances) enters as constants:
//! only features and network parameters receive gradients.

use ndarray::{ArrayD, Axis, IxDyn};
use serde::Serialize;

use crate::error::{GamError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

#[derive(Debug, Clone)]
enum Record {
    Leaf,
    /// `y[..., o] = sum_i x[..., i] w[o, i] + b[o]`
    Affine {
        input: NodeId,
        weight: NodeId,
        bias: NodeId,
    },
    Relu {
        input: NodeId,
    },
    Sigmoid {
        input: NodeId,
    },
    /// Elementwise product of same-shape tensors.
    Mul {
        lhs: NodeId,
        rhs: NodeId,
    },
    Add {
        lhs: NodeId,
        rhs: NodeId,
    },
    /// `y = (mul * x + add) / den` with scalar constants.
    ScalarBlend {
        input: NodeId,
        mul: f64,
        den: f64,
    },
    ConcatLast {
        parts: Vec<NodeId>,
        widths: Vec<usize>,
    },
    /// `[..., 1] -> [..., copies]`
    BroadcastLast {
        input: NodeId,
        copies: usize,
    },
    /// Max over one axis; the argmax per lane (lowest index on ties) is
    /// frozen at forward time and routes the gradient.
    MaxAxis {
        input: NodeId,
        axis: usize,
        argmax: Vec<usize>,
    },
    MeanAll {
        input: NodeId,
    },
    SumAll {
        input: NodeId,
    },
    /// Scalar loss `logsumexp(logits) - logits[target]` over 1-D logits.
    SoftmaxCrossEntropy {
        logits: NodeId,
        target: usize,
    },
}

struct Node {
    value: ArrayD<f64>,
    record: Record,
}

/// Gradients from one backward sweep, indexed by tape node.
pub struct Gradients {
    by_node: Vec<Option<ArrayD<f64>>>,
}

impl Gradients {
    pub fn get(&self, id: NodeId) -> Option<&ArrayD<f64>> {
        self.by_node[id.0].as_ref()
    }
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &ArrayD<f64> {
        &self.nodes[id.0].value
    }

    fn push(&mut self, value: ArrayD<f64>, record: Record) -> NodeId {
        self.nodes.push(Node { value, record });
        NodeId(self.nodes.len() - 1)
    }

    /// A leaf node: parameter or constant input. Only leaves reachable from
    /// the loss receive gradients; constants simply never get read back.
    pub fn leaf(&mut self, value: ArrayD<f64>) -> NodeId {
        self.push(value, Record::Leaf)
    }

    pub fn scalar(&mut self, value: f64) -> NodeId {
        self.leaf(ArrayD::from_elem(IxDyn(&[]), value))
    }

    pub fn affine(&mut self, input: NodeId, weight: NodeId, bias: NodeId) -> Result<NodeId> {
        let x = self.value(input);
        let w = self.value(weight);
        let b = self.value(bias);
        if w.ndim() != 2 || b.ndim() != 1 {
            return Err(GamError::ShapeMismatch(
                "affine expects a 2-D weight and 1-D bias".into(),
            ));
        }
        let (o, i) = (w.shape()[0], w.shape()[1]);
        let d = *x
            .shape()
            .last()
            .ok_or_else(|| GamError::ShapeMismatch("affine input must have an axis".into()))?;
        if d != i || b.len() != o {
            return Err(GamError::ShapeMismatch(format!(
                "affine: input width {d} vs weight {o}x{i}, bias {}",
                b.len()
            )));
        }
        let batch: usize = x.len() / d;
        let y = crate::linalg::affine_xwt(
            x.as_slice().expect("tape tensors are standard layout"),
            batch,
            d,
            w.as_slice().expect("weights are standard layout"),
            o,
            b.as_slice().expect("bias is contiguous"),
        );
        let mut out_shape: Vec<usize> = x.shape().to_vec();
        *out_shape.last_mut().unwrap() = o;
        let y = ArrayD::from_shape_vec(IxDyn(&out_shape), y).expect("matching element count");
        Ok(self.push(
            y,
            Record::Affine {
                input,
                weight,
                bias,
            },
        ))
    }

    pub fn relu(&mut self, input: NodeId) -> NodeId {
        let y = self.value(input).mapv(|v| if v > 0.0 { v } else { 0.0 });
        self.push(y, Record::Relu { input })
    }

    pub fn sigmoid(&mut self, input: NodeId) -> NodeId {
        let y = self.value(input).mapv(crate::gam::open_sigmoid);
        self.push(y, Record::Sigmoid { input })
    }

    pub fn mul(&mut self, lhs: NodeId, rhs: NodeId) -> Result<NodeId> {
        if self.value(lhs).shape() != self.value(rhs).shape() {
            return Err(GamError::ShapeMismatch("mul expects equal shapes".into()));
        }
        let y = self.value(lhs) * self.value(rhs);
        Ok(self.push(y, Record::Mul { lhs, rhs }))
    }

    pub fn add(&mut self, lhs: NodeId, rhs: NodeId) -> Result<NodeId> {
        if self.value(lhs).shape() != self.value(rhs).shape() {
            return Err(GamError::ShapeMismatch("add expects equal shapes".into()));
        }
        let y = self.value(lhs) + self.value(rhs);
        Ok(self.push(y, Record::Add { lhs, rhs }))
    }

    /// `(mul * x + add) / den`, the per-edge attention balance factor.
    pub fn scalar_blend(&mut self, input: NodeId, mul: f64, add: f64, den: f64) -> NodeId {
        let y = self.value(input).mapv(|x| (mul * x + add) / den);
        self.push(y, Record::ScalarBlend { input, mul, den })
    }

    pub fn concat_last(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        if parts.is_empty() {
            return Err(GamError::InvalidInput("concat of nothing".into()));
        }
        let views: Vec<_> = parts.iter().map(|&p| self.value(p).view()).collect();
        let widths: Vec<usize> = views.iter().map(|v| *v.shape().last().unwrap()).collect();
        let last_axis = views[0].ndim() - 1;
        let y = ndarray::concatenate(Axis(last_axis), &views)
            .map_err(|e| GamError::ShapeMismatch(format!("concat: {e}")))?;
        let y = y.as_standard_layout().into_owned();
        Ok(self.push(
            y,
            Record::ConcatLast {
                parts: parts.to_vec(),
                widths,
            },
        ))
    }

    pub fn broadcast_last(&mut self, input: NodeId, copies: usize) -> Result<NodeId> {
        let x = self.value(input);
        if *x.shape().last().unwrap_or(&0) != 1 {
            return Err(GamError::ShapeMismatch(
                "broadcast_last expects a trailing axis of width 1".into(),
            ));
        }
        let mut shape = x.shape().to_vec();
        *shape.last_mut().unwrap() = copies;
        let y = x
            .broadcast(IxDyn(&shape))
            .expect("trailing unit axis broadcasts")
            .to_owned();
        Ok(self.push(y, Record::BroadcastLast { input, copies }))
    }

    pub fn max_axis(&mut self, input: NodeId, axis: usize) -> Result<NodeId> {
        let x = self.value(input);
        if axis >= x.ndim() {
            return Err(GamError::ShapeMismatch(format!(
                "max over axis {axis} of a {}-D tensor",
                x.ndim()
            )));
        }
        let mut argmax = Vec::new();
        let mut maxima = Vec::new();
        for lane in x.lanes(Axis(axis)) {
            let mut best = 0usize;
            let mut best_v = lane[0];
            for (i, &v) in lane.iter().enumerate().skip(1) {
                if v > best_v {
                    best_v = v;
                    best = i;
                }
            }
            argmax.push(best);
            maxima.push(best_v);
        }
        let mut shape = x.shape().to_vec();
        shape.remove(axis);
        let y = ArrayD::from_shape_vec(IxDyn(&shape), maxima).expect("one maximum per lane");
        Ok(self.push(
            y,
            Record::MaxAxis {
                input,
                axis,
                argmax,
            },
        ))
    }

    pub fn mean_all(&mut self, input: NodeId) -> NodeId {
        let x = self.value(input);
        let m = x.sum() / x.len() as f64;
        let y = ArrayD::from_elem(IxDyn(&[]), m);
        self.push(y, Record::MeanAll { input })
    }

    pub fn sum_all(&mut self, input: NodeId) -> NodeId {
        let y = ArrayD::from_elem(IxDyn(&[]), self.value(input).sum());
        self.push(y, Record::SumAll { input })
    }

    pub fn softmax_cross_entropy(&mut self, logits: NodeId, target: usize) -> Result<NodeId> {
        let l = self.value(logits);
        if l.ndim() != 1 || target >= l.len() {
            return Err(GamError::ShapeMismatch(
                "cross entropy expects 1-D logits and a valid target".into(),
            ));
        }
        let m = l.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + l.iter().map(|&v| (v - m).exp()).sum::<f64>().ln();
        let loss = lse - l[[target]];
        let y = ArrayD::from_elem(IxDyn(&[]), loss);
        Ok(self.push(y, Record::SoftmaxCrossEntropy { logits, target }))
    }

    /// One reverse sweep from `loss`, visiting each record exactly once.
    /// Max-pools route to the frozen argmax; `max(0, ·)` uses subgradient 0
    /// at 0.
    pub fn backward(&self, loss: NodeId, loss_seed: f64) -> Result<Gradients> {
        let loss_node = &self.nodes[loss.0];
        if loss_node.value.len() != 1 {
            return Err(GamError::NonScalarLoss {
                shape: loss_node.value.shape().to_vec(),
            });
        }
        let mut grads: Vec<Option<ArrayD<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(ArrayD::from_elem(loss_node.value.raw_dim(), loss_seed));

        for id in (0..=loss.0).rev() {
            let Some(dy) = grads[id].take() else {
                continue;
            };
            match &self.nodes[id].record {
                Record::Leaf => {
                    grads[id] = Some(dy); // keep leaf gradients for the caller
                    continue;
                }
                Record::Affine {
                    input,
                    weight,
                    bias,
                } => {
                    let x = self.value(*input);
                    let w = self.value(*weight);
                    let (o, i) = (w.shape()[0], w.shape()[1]);
                    let batch = x.len() / i;
                    let x_s = x.as_slice().expect("standard layout");
                    let w_s = w.as_slice().expect("standard layout");
                    let dy_std = if dy.is_standard_layout() {
                        dy
                    } else {
                        dy.as_standard_layout().into_owned()
                    };
                    let dy_s = dy_std.as_slice().expect("standard layout");
                    let dx = crate::linalg::matmul_dy_w(dy_s, batch, o, w_s, i);
                    let dx = ArrayD::from_shape_vec(x.raw_dim(), dx)
                        .expect("matching element count");
                    let dw = crate::linalg::matmul_dyt_x(dy_s, batch, o, x_s, i);
                    let dw = ArrayD::from_shape_vec(w.raw_dim(), dw)
                        .expect("matching element count");
                    let mut db = vec![0.0; o];
                    for bb in 0..batch {
                        for (oo, slot) in db.iter_mut().enumerate() {
                            *slot += dy_s[bb * o + oo];
                        }
                    }
                    let db = ArrayD::from_shape_vec(IxDyn(&[o]), db).expect("bias length");
                    accumulate(&mut grads, *input, dx);
                    accumulate(&mut grads, *weight, dw);
                    accumulate(&mut grads, *bias, db);
                }
                Record::Relu { input } => {
                    let x = self.value(*input);
                    let mut dx = dy;
                    dx.zip_mut_with(x, |g, &v| {
                        if v <= 0.0 {
                            *g = 0.0;
                        }
                    });
                    accumulate(&mut grads, *input, dx);
                }
                Record::Sigmoid { input } => {
                    let s = &self.nodes[id].value;
                    let mut dx = dy;
                    dx.zip_mut_with(s, |g, &sv| *g *= sv * (1.0 - sv));
                    accumulate(&mut grads, *input, dx);
                }
                Record::Mul { lhs, rhs } => {
                    let dl = &dy * self.value(*rhs);
                    let dr = &dy * self.value(*lhs);
                    accumulate(&mut grads, *lhs, dl);
                    accumulate(&mut grads, *rhs, dr);
                }
                Record::Add { lhs, rhs } => {
                    accumulate(&mut grads, *lhs, dy.clone());
                    accumulate(&mut grads, *rhs, dy);
                }
                Record::ScalarBlend { input, mul, den } => {
                    let dx = dy.mapv(|g| g * (mul / den));
                    accumulate(&mut grads, *input, dx);
                }
                Record::ConcatLast { parts, widths } => {
                    let last = dy.ndim() - 1;
                    let mut offset = 0;
                    for (&part, &w) in parts.iter().zip(widths) {
                        let slice = dy
                            .slice_axis(
                                Axis(last),
                                ndarray::Slice::from(offset..offset + w),
                            )
                            .as_standard_layout()
                            .into_owned();
                        accumulate(&mut grads, part, slice);
                        offset += w;
                    }
                }
                Record::BroadcastLast { input, copies } => {
                    let last = dy.ndim() - 1;
                    debug_assert_eq!(dy.shape()[last], *copies);
                    let dx = dy.sum_axis(Axis(last)).insert_axis(Axis(last));
                    accumulate(&mut grads, *input, dx);
                }
                Record::MaxAxis {
                    input,
                    axis,
                    argmax,
                } => {
                    let x = self.value(*input);
                    let mut dx = ArrayD::zeros(x.raw_dim());
                    for ((mut lane, &am), &g) in dx
                        .lanes_mut(Axis(*axis))
                        .into_iter()
                        .zip(argmax)
                        .zip(dy.iter())
                    {
                        lane[am] += g;
                    }
                    accumulate(&mut grads, *input, dx);
                }
                Record::MeanAll { input } => {
                    let x = self.value(*input);
                    let g = dy.sum() / x.len() as f64;
                    accumulate(&mut grads, *input, ArrayD::from_elem(x.raw_dim(), g));
                }
                Record::SumAll { input } => {
                    let x = self.value(*input);
                    let g = dy.sum();
                    accumulate(&mut grads, *input, ArrayD::from_elem(x.raw_dim(), g));
                }
                Record::SoftmaxCrossEntropy { logits, target } => {
                    let l = self.value(*logits);
                    let m = l.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let exps: Vec<f64> = l.iter().map(|&v| (v - m).exp()).collect();
                    let z: f64 = exps.iter().sum();
                    let seed = dy.sum();
                    let mut dl: Vec<f64> = exps.iter().map(|&e| seed * e / z).collect();
                    dl[*target] -= seed;
                    accumulate(
                        &mut grads,
                        *logits,
                        ArrayD::from_shape_vec(l.raw_dim(), dl).expect("same length"),
                    );
                }
            }
        }
        Ok(Gradients { by_node: grads })
    }
}

fn accumulate(grads: &mut [Option<ArrayD<f64>>], id: NodeId, delta: ArrayD<f64>) {
    match &mut grads[id.0] {
        Some(g) => *g += &delta,
        slot @ None => *slot = Some(delta),
    }
}

/// Per-parameter comparison of analytic and central finite-difference
/// gradients. Relative errors divide by `max(|analytic|, |numeric|, 1e-6)`
/// so that finite-difference rounding noise on vanishing gradients does not
/// masquerade as disagreement.
#[derive(Debug, Clone, Serialize)]
pub struct ParamCheck {
    pub name: String,
    pub max_abs_err: f64,
    pub max_rel_err: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradReport {
    pub step: f64,
    pub params: Vec<ParamCheck>,
    pub max_abs_err: f64,
    pub max_rel_err: f64,
}

impl GradReport {
    pub fn passes(&self, rel_tolerance: f64) -> bool {
        self.max_rel_err < rel_tolerance
    }
}

const REL_GUARD: f64 = 1e-6;

/// Central finite differences, `(f(θ+h) - f(θ-h)) / 2h` per scalar
/// parameter, compared against the analytic gradients `f` reports.
///
/// `f` maps the full parameter list to `(loss, analytic gradient per
/// parameter)`; only the loss is used for the perturbed evaluations.
pub fn finite_difference_check<F>(
    f: F,
    params: &[(&str, ArrayD<f64>)],
    h: f64,
) -> Result<GradReport>
where
    F: Fn(&[ArrayD<f64>]) -> Result<(f64, Vec<ArrayD<f64>>)>,
{
    if !(h > 0.0) {
        return Err(GamError::InvalidInput("step must be > 0".into()));
    }
    let values: Vec<ArrayD<f64>> = params.iter().map(|(_, v)| v.clone()).collect();
    let (_, analytic) = f(&values)?;
    if analytic.len() != params.len() {
        return Err(GamError::ShapeMismatch(
            "analytic gradient count does not match parameter count".into(),
        ));
    }
    let analytic: Vec<ArrayD<f64>> = analytic
        .into_iter()
        .map(|a| {
            if a.is_standard_layout() {
                a
            } else {
                a.as_standard_layout().into_owned()
            }
        })
        .collect();

    let mut checks = Vec::with_capacity(params.len());
    for (pi, (name, base)) in params.iter().enumerate() {
        let mut max_abs = 0.0f64;
        let mut max_rel = 0.0f64;
        for flat in 0..base.len() {
            let mut plus = values.clone();
            let mut minus = values.clone();
            plus[pi].as_slice_mut().expect("standard layout")[flat] += h;
            minus[pi].as_slice_mut().expect("standard layout")[flat] -= h;
            let (loss_plus, _) = f(&plus)?;
            let (loss_minus, _) = f(&minus)?;
            let numeric = (loss_plus - loss_minus) / (2.0 * h);
            let a = analytic[pi].as_slice().expect("standard layout")[flat];
            let abs = (a - numeric).abs();
            let rel = abs / a.abs().max(numeric.abs()).max(REL_GUARD);
            max_abs = max_abs.max(abs);
            max_rel = max_rel.max(rel);
        }
        checks.push(ParamCheck {
            name: (*name).to_string(),
            max_abs_err: max_abs,
            max_rel_err: max_rel,
        });
    }
    let max_abs_err = checks.iter().fold(0.0f64, |m, c| m.max(c.max_abs_err));
    let max_rel_err = checks.iter().fold(0.0f64, |m, c| m.max(c.max_rel_err));
    Ok(GradReport {
        step: h,
        params: checks,
        max_abs_err,
        max_rel_err,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{arr1, arr2};

    fn dyn1(v: &[f64]) -> ArrayD<f64> {
        arr1(v).into_dyn()
    }

    #[test]
    fn sigmoid_gradient_at_zero_is_quarter() {
        let mut tape = Tape::new();
        let x = tape.leaf(dyn1(&[0.0]));
        let s = tape.sigmoid(x);
        let loss = tape.sum_all(s);
        let grads = tape.backward(loss, 1.0).unwrap();
        let g = grads.get(x).unwrap();
        assert!((g[[0]] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn affine_sum_gradient_is_column_sums() {
        let mut tape = Tape::new();
        let x = tape.leaf(dyn1(&[0.3, -0.7, 1.1]));
        let w = tape.leaf(arr2(&[[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]).into_dyn());
        let b = tape.leaf(dyn1(&[0.0, 0.0]));
        let y = tape.affine(x, w, b).unwrap();
        let loss = tape.sum_all(y);
        let grads = tape.backward(loss, 1.0).unwrap();
        let gx = grads.get(x).unwrap();
        assert_eq!(gx[[0]], 5.0);
        assert_eq!(gx[[1]], 7.0);
        assert_eq!(gx[[2]], 9.0);
        // bias gradient is all ones, weight gradient is x per row
        let gb = grads.get(b).unwrap();
        assert_eq!(gb[[0]], 1.0);
        let gw = grads.get(w).unwrap();
        assert_eq!(gw[[1, 2]], 1.1);
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let mut tape = Tape::new();
        let x = tape.leaf(dyn1(&[1.0, 2.0]));
        assert!(matches!(
            tape.backward(x, 1.0),
            Err(GamError::NonScalarLoss { .. })
        ));
    }

    #[test]
    fn max_pool_routes_to_lowest_tied_index() {
        let mut tape = Tape::new();
        let x = tape.leaf(dyn1(&[3.0, 5.0, 5.0]));
        let m = tape.max_axis(x, 0).unwrap();
        let loss = tape.sum_all(m);
        let grads = tape.backward(loss, 1.0).unwrap();
        let g = grads.get(x).unwrap();
        assert_eq!(g[[0]], 0.0);
        assert_eq!(g[[1]], 1.0);
        assert_eq!(g[[2]], 0.0);
    }

    #[test]
    fn relu_subgradient_zero_at_zero() {
        let mut tape = Tape::new();
        let x = tape.leaf(dyn1(&[0.0, -1.0, 2.0]));
        let r = tape.relu(x);
        let loss = tape.sum_all(r);
        let grads = tape.backward(loss, 1.0).unwrap();
        let g = grads.get(x).unwrap();
        assert_eq!(g[[0]], 0.0);
        assert_eq!(g[[1]], 0.0);
        assert_eq!(g[[2]], 1.0);
    }

    #[test]
    fn reused_node_accumulates_gradient() {
        // f = x*x + x  =>  df/dx = 2x + 1
        let mut tape = Tape::new();
        let x = tape.leaf(dyn1(&[1.5]));
        let sq = tape.mul(x, x).unwrap();
        let f = tape.add(sq, x).unwrap();
        let loss = tape.sum_all(f);
        let grads = tape.backward(loss, 1.0).unwrap();
        assert!((grads.get(x).unwrap()[[0]] - 4.0).abs() < 1e-15);
    }

    #[test]
    fn concat_splits_gradient() {
        let mut tape = Tape::new();
        let a = tape.leaf(dyn1(&[1.0, 2.0]));
        let b = tape.leaf(dyn1(&[3.0]));
        let c = tape.concat_last(&[a, b]).unwrap();
        let w = tape.leaf(arr2(&[[1.0, 10.0, 100.0]]).into_dyn());
        let bias = tape.leaf(dyn1(&[0.0]));
        let y = tape.affine(c, w, bias).unwrap();
        let loss = tape.sum_all(y);
        let grads = tape.backward(loss, 1.0).unwrap();
        assert_eq!(grads.get(a).unwrap()[[1]], 10.0);
        assert_eq!(grads.get(b).unwrap()[[0]], 100.0);
    }

    #[test]
    fn broadcast_sums_gradient() {
        let mut tape = Tape::new();
        let x = tape.leaf(ArrayD::from_shape_vec(IxDyn(&[2, 1]), vec![1.0, 2.0]).unwrap());
        let y = tape.broadcast_last(x, 3).unwrap();
        let loss = tape.sum_all(y);
        let grads = tape.backward(loss, 1.0).unwrap();
        let g = grads.get(x).unwrap();
        assert_eq!(g[[0, 0]], 3.0);
        assert_eq!(g[[1, 0]], 3.0);
    }

    #[test]
    fn cross_entropy_gradient_is_softmax_minus_onehot() {
        let mut tape = Tape::new();
        let logits = tape.leaf(dyn1(&[1.0, 2.0, 0.5]));
        let loss = tape.softmax_cross_entropy(logits, 1).unwrap();
        let grads = tape.backward(loss, 1.0).unwrap();
        let g = grads.get(logits).unwrap();
        let exps: Vec<f64> = [1.0f64, 2.0, 0.5].iter().map(|v| v.exp()).collect();
        let z: f64 = exps.iter().sum();
        assert!((g[[0]] - exps[0] / z).abs() < 1e-12);
        assert!((g[[1]] - (exps[1] / z - 1.0)).abs() < 1e-12);
        assert!((g[[2]] - exps[2] / z).abs() < 1e-12);
    }

    #[test]
    fn gradient_of_sum_is_sum_of_gradients() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(31);
        for _ in 0..5 {
            let mut tape = Tape::new();
            let x = tape.leaf(dyn1(&[
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            ]));
            let s = tape.sigmoid(x);
            let r = tape.relu(x);
            let f = tape.sum_all(s);
            let g = tape.sum_all(r);
            let fg = tape.add(f, g).unwrap();

            let grad_f = tape.backward(f, 1.0).unwrap();
            let grad_g = tape.backward(g, 1.0).unwrap();
            let grad_sum = tape.backward(fg, 1.0).unwrap();
            for i in 0..3 {
                let lhs = grad_sum.get(x).unwrap()[[i]];
                let rhs = grad_f.get(x).unwrap()[[i]] + grad_g.get(x).unwrap()[[i]];
                assert!((lhs - rhs).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn loss_seed_scales_gradient() {
        let mut tape = Tape::new();
        let x = tape.leaf(dyn1(&[2.0]));
        let y = tape.mul(x, x).unwrap();
        let loss = tape.sum_all(y);
        let g1 = tape.backward(loss, 1.0).unwrap();
        let g3 = tape.backward(loss, 3.0).unwrap();
        assert!((g3.get(x).unwrap()[[0]] - 3.0 * g1.get(x).unwrap()[[0]]).abs() < 1e-15);
    }

    #[test]
    fn fd_check_quadratic() {
        let report = finite_difference_check(
            |p| {
                let theta = &p[0];
                let loss: f64 = theta.iter().map(|v| v * v).sum();
                let grad = theta.mapv(|v| 2.0 * v);
                Ok((loss, vec![grad]))
            },
            &[("theta", dyn1(&[1.0, 2.0]))],
            1e-5,
        )
        .unwrap();
        assert!(report.max_abs_err < 1e-8, "{}", report.max_abs_err);
    }

    #[test]
    fn fd_check_constant_function() {
        let report = finite_difference_check(
            |p| Ok((42.0, vec![ArrayD::zeros(p[0].raw_dim())])),
            &[("theta", dyn1(&[0.3, -0.6, 1.0]))],
            1e-5,
        )
        .unwrap();
        assert_eq!(report.max_abs_err, 0.0);
        assert_eq!(report.max_rel_err, 0.0);
    }

    #[test]
    fn fd_check_attention_mlp() {
        // two-layer attention MLP alone:
        // loss = mean(sigmoid(W2 relu(W1 v + b1) + b2))
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let v_input = ArrayD::from_shape_fn(IxDyn(&[4, 3, 2]), |_| rng.random_range(-1.0..1.0));
        let w1 = ArrayD::from_shape_fn(IxDyn(&[8, 2]), |_| rng.random_range(-0.7..0.7));
        let b1 = ArrayD::from_shape_fn(IxDyn(&[8]), |_| rng.random_range(-0.1..0.1));
        let w2 = ArrayD::from_shape_fn(IxDyn(&[1, 8]), |_| rng.random_range(-0.7..0.7));
        let b2 = ArrayD::from_shape_fn(IxDyn(&[1]), |_| rng.random_range(-0.1..0.1));

        let run = move |p: &[ArrayD<f64>]| -> Result<(f64, Vec<ArrayD<f64>>)> {
            let mut tape = Tape::new();
            let v = tape.leaf(v_input.clone());
            let ids: Vec<NodeId> = p.iter().map(|arr| tape.leaf(arr.clone())).collect();
            let h = tape.affine(v, ids[0], ids[1])?;
            let h = tape.relu(h);
            let logit = tape.affine(h, ids[2], ids[3])?;
            let a = tape.sigmoid(logit);
            let loss = tape.mean_all(a);
            let grads = tape.backward(loss, 1.0)?;
            let out = ids
                .iter()
                .map(|&id| {
                    grads
                        .get(id)
                        .cloned()
                        .unwrap_or_else(|| ArrayD::zeros(tape.value(id).raw_dim()))
                })
                .collect();
            Ok((tape.value(loss)[[]], out))
        };

        let report = finite_difference_check(
            run,
            &[
                ("attn_w1", w1),
                ("attn_b1", b1),
                ("attn_w2", w2),
                ("attn_b2", b2),
            ],
            1e-5,
        )
        .unwrap();
        assert!(
            report.max_rel_err < 1e-6,
            "max rel err {}",
            report.max_rel_err
        );
    }
}
