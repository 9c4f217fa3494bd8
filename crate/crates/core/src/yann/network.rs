use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{gemm, Matrix};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
    /// Heaviside with `step(0) = 1`.
    Step,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
            Activation::Step => {
                if x >= 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Derivative given the pre-activation and the activation output.
    fn derivative(self, pre: f64, out: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - out * out,
            Activation::Step => 0.0,
        }
    }
}

/// `y = σ(W x + b)` with per-entry trainable masks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Affine {
    pub weight: Matrix,
    pub bias: Option<Vec<f64>>,
    pub activation: Activation,
    /// Row-major, one flag per weight entry.
    pub weight_mask: Vec<bool>,
    #[serde(default)]
    pub bias_mask: Vec<bool>,
}

impl Affine {
    pub fn frozen(weight: Matrix, bias: Option<Vec<f64>>, activation: Activation) -> Self {
        let wm = vec![false; weight.rows() * weight.cols()];
        let bm = vec![false; bias.as_ref().map_or(0, |b| b.len())];
        Affine {
            weight,
            bias,
            activation,
            weight_mask: wm,
            bias_mask: bm,
        }
    }

    pub fn trainable(weight: Matrix, bias: Option<Vec<f64>>, activation: Activation) -> Self {
        let wm = vec![true; weight.rows() * weight.cols()];
        let bm = vec![true; bias.as_ref().map_or(0, |b| b.len())];
        Affine {
            weight,
            bias,
            activation,
            weight_mask: wm,
            bias_mask: bm,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn is_trainable(&self) -> bool {
        self.weight_mask.iter().chain(&self.bias_mask).any(|&m| m)
    }

    pub fn set_trainable(&mut self, on: bool) {
        self.weight_mask
            .iter_mut()
            .chain(self.bias_mask.iter_mut())
            .for_each(|m| *m = on);
    }

    fn n_params(&self) -> usize {
        self.weight_mask.len() + self.bias_mask.len()
    }

    fn n_trainable(&self) -> usize {
        self.weight_mask
            .iter()
            .chain(&self.bias_mask)
            .filter(|&&m| m)
            .count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Op {
    Affine(Affine),
    /// Elementwise product of exactly two equal-length inputs.
    Product,
    /// Inputs stacked in order.
    Concat,
    /// Elementwise sum of equal-length inputs.
    Sum,
}

/// One node; `inputs` refer to value ids where 0 is the network input and
/// `k + 1` is the output of node `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub label: String,
    pub inputs: Vec<usize>,
    pub op: Op,
}

/// A feed-forward DAG of layers in topological order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub schema_version: u32,
    pub input_dim: usize,
    pub nodes: Vec<Node>,
    /// Value id of the network output.
    pub output: usize,
}

/// Per-node parameter gradients (`None` for nodes without trainable
/// parameters). Entries under a false mask are not meaningful; read
/// gradients through [`Gradients::flatten`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub nodes: Vec<Option<(Vec<f64>, Vec<f64>)>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamCount {
    pub total: usize,
    pub trainable: usize,
}

/// Builder that appends nodes and returns their value ids.
#[derive(Debug, Clone)]
pub struct NetworkBuilder {
    input_dim: usize,
    nodes: Vec<Node>,
    dims: Vec<usize>,
}

impl NetworkBuilder {
    pub fn new(input_dim: usize) -> Self {
        NetworkBuilder {
            input_dim,
            nodes: Vec::new(),
            dims: vec![input_dim],
        }
    }

    pub fn dim(&self, id: usize) -> usize {
        self.dims[id]
    }

    pub fn input(&self) -> usize {
        0
    }

    pub fn push(&mut self, label: impl Into<String>, inputs: Vec<usize>, op: Op) -> Result<usize> {
        let label = label.into();
        let in_dims: Vec<usize> = inputs
            .iter()
            .map(|&i| {
                self.dims
                    .get(i)
                    .copied()
                    .ok_or_else(|| Error::Construction(format!("{label}: unknown input {i}")))
            })
            .collect::<Result<_>>()?;
        let out = node_out_dim(&label, &op, &in_dims)?;
        self.nodes.push(Node { label, inputs, op });
        self.dims.push(out);
        Ok(self.dims.len() - 1)
    }

    pub fn affine(
        &mut self,
        label: impl Into<String>,
        input: usize,
        layer: Affine,
    ) -> Result<usize> {
        self.push(label, vec![input], Op::Affine(layer))
    }

    pub fn finish(self, output: usize) -> Result<Network> {
        let net = Network {
            schema_version: SCHEMA_VERSION,
            input_dim: self.input_dim,
            nodes: self.nodes,
            output,
        };
        net.validate()?;
        Ok(net)
    }
}

fn node_out_dim(label: &str, op: &Op, in_dims: &[usize]) -> Result<usize> {
    let bad = |msg: &str| Err(Error::Construction(format!("{label}: {msg}")));
    match op {
        Op::Affine(a) => {
            if in_dims.len() != 1 || in_dims[0] != a.in_dim() {
                return bad("affine input dimension mismatch");
            }
            if a.weight_mask.len() != a.in_dim() * a.out_dim()
                || a.bias.as_ref().map_or(0, |b| b.len()) != a.bias_mask.len()
                || a.bias.as_ref().is_some_and(|b| b.len() != a.out_dim())
            {
                return bad("parameter and mask shapes disagree");
            }
            if a.activation == Activation::Step && a.is_trainable() {
                return bad("step activation is only allowed in frozen layers");
            }
            Ok(a.out_dim())
        }
        Op::Product => {
            if in_dims.len() != 2 || in_dims[0] != in_dims[1] {
                return bad("product needs two equal-length inputs");
            }
            Ok(in_dims[0])
        }
        Op::Concat => {
            if in_dims.is_empty() {
                return bad("concat needs inputs");
            }
            Ok(in_dims.iter().sum())
        }
        Op::Sum => {
            if in_dims.is_empty() || in_dims.iter().any(|&d| d != in_dims[0]) {
                return bad("sum needs equal-length inputs");
            }
            Ok(in_dims[0])
        }
    }
}

/// Batched trace: one row per sample.
struct BatchTrace {
    values: Vec<Matrix>,
    pre: Vec<Option<Matrix>>,
}

struct Trace {
    values: Vec<Vec<f64>>,
    /// Pre-activations of affine nodes.
    pre: Vec<Option<Vec<f64>>>,
}

impl Network {
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Construction(format!(
                "unsupported schema version {}",
                self.schema_version
            )));
        }
        let mut dims = vec![self.input_dim];
        for (k, node) in self.nodes.iter().enumerate() {
            let mut in_dims = Vec::new();
            for &i in &node.inputs {
                if i > k {
                    return Err(Error::Construction(format!(
                        "{}: input {i} is not computed yet",
                        node.label
                    )));
                }
                in_dims.push(dims[i]);
            }
            dims.push(node_out_dim(&node.label, &node.op, &in_dims)?);
        }
        if self.output == 0 || self.output > self.nodes.len() {
            return Err(Error::Construction("output must refer to a node".into()));
        }
        Ok(())
    }

    pub fn output_dim(&self) -> usize {
        self.value_dim(self.output)
    }

    fn value_dim(&self, id: usize) -> usize {
        if id == 0 {
            return self.input_dim;
        }
        match &self.nodes[id - 1].op {
            Op::Affine(a) => a.out_dim(),
            Op::Product | Op::Sum => self.value_dim(self.nodes[id - 1].inputs[0]),
            Op::Concat => self.nodes[id - 1]
                .inputs
                .iter()
                .map(|&i| self.value_dim(i))
                .sum(),
        }
    }

    pub fn node(&self, label: &str) -> Option<&Node> {
        self.nodes.iter().find(|n| n.label == label)
    }

    pub fn node_mut(&mut self, label: &str) -> Option<&mut Node> {
        self.nodes.iter_mut().find(|n| n.label == label)
    }

    pub fn param_count(&self) -> ParamCount {
        let mut c = ParamCount {
            total: 0,
            trainable: 0,
        };
        for node in &self.nodes {
            if let Op::Affine(a) = &node.op {
                c.total += a.n_params();
                c.trainable += a.n_trainable();
            }
        }
        c
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let t = self.trace(x)?;
        Ok(t.values[self.output].clone())
    }

    /// Values of every node (index = value id).
    pub fn activations(&self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        Ok(self.trace(x)?.values)
    }

    fn trace(&self, x: &[f64]) -> Result<Trace> {
        if x.len() != self.input_dim {
            return Err(Error::arg(format!(
                "network expects {} inputs, got {}",
                self.input_dim,
                x.len()
            )));
        }
        let mut values: Vec<Vec<f64>> = Vec::with_capacity(self.nodes.len() + 1);
        let mut pre: Vec<Option<Vec<f64>>> = Vec::with_capacity(self.nodes.len());
        values.push(x.to_vec());
        for node in &self.nodes {
            let (out, p) = match &node.op {
                Op::Affine(a) => {
                    let input = &values[node.inputs[0]];
                    let mut z = a.weight.matvec(input)?;
                    if let Some(b) = &a.bias {
                        z.iter_mut().zip(b).for_each(|(zi, bi)| *zi += bi);
                    }
                    let y: Vec<f64> = z.iter().map(|&v| a.activation.apply(v)).collect();
                    (y, Some(z))
                }
                Op::Product => {
                    let (u, v) = (&values[node.inputs[0]], &values[node.inputs[1]]);
                    (u.iter().zip(v).map(|(a, b)| a * b).collect(), None)
                }
                Op::Concat => (
                    node.inputs
                        .iter()
                        .flat_map(|&i| values[i].iter().copied())
                        .collect(),
                    None,
                ),
                Op::Sum => {
                    let mut acc = values[node.inputs[0]].clone();
                    for &i in &node.inputs[1..] {
                        acc.iter_mut().zip(&values[i]).for_each(|(a, b)| *a += b);
                    }
                    (acc, None)
                }
            };
            if out.iter().any(|v| !v.is_finite()) {
                return Err(Error::numeric(format!(
                    "non-finite value in layer {}",
                    node.label
                )));
            }
            values.push(out);
            pre.push(p);
        }
        Ok(Trace { values, pre })
    }

    pub fn zero_gradients(&self) -> Gradients {
        Gradients {
            nodes: self
                .nodes
                .iter()
                .map(|n| match &n.op {
                    Op::Affine(a) if a.is_trainable() => {
                        Some((vec![0.0; a.weight_mask.len()], vec![0.0; a.bias_mask.len()]))
                    }
                    _ => None,
                })
                .collect(),
        }
    }

    /// Reverse-mode pass for one sample: adds `∂(upstream·y)/∂params` into
    /// `grads` and returns the gradient with respect to the input.
    pub fn accumulate_gradients(
        &self,
        x: &[f64],
        upstream: &[f64],
        grads: &mut Gradients,
    ) -> Result<Vec<f64>> {
        let t = self.trace(x)?;
        self.backward(&t, upstream, Some(grads))
    }

    /// One trace: `upstream = f(output)`, then the reverse pass into
    /// `grads`. Returns the output and the input gradient.
    pub fn accumulate_with<F>(
        &self,
        x: &[f64],
        f: F,
        grads: &mut Gradients,
    ) -> Result<(Vec<f64>, Vec<f64>)>
    where
        F: FnOnce(&[f64]) -> Result<Vec<f64>>,
    {
        let t = self.trace(x)?;
        let upstream = f(&t.values[self.output])?;
        let dx = self.backward(&t, &upstream, Some(grads))?;
        Ok((t.values[self.output].clone(), dx))
    }

    /// Parameter gradients of `upstream · net(x)` for one sample.
    pub fn gradients(&self, x: &[f64], upstream: &[f64]) -> Result<Gradients> {
        let mut g = self.zero_gradients();
        self.accumulate_gradients(x, upstream, &mut g)?;
        Ok(g)
    }

    /// `∂(upstream·y)/∂x` only.
    pub fn input_gradient(&self, x: &[f64], upstream: &[f64]) -> Result<Vec<f64>> {
        let t = self.trace(x)?;
        self.backward(&t, upstream, None)
    }

    /// Output and input gradient in one pass.
    pub fn forward_with_input_gradient(
        &self,
        x: &[f64],
        upstream: &[f64],
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        let t = self.trace(x)?;
        let g = self.backward(&t, upstream, None)?;
        Ok((t.values[self.output].clone(), g))
    }

    fn backward(
        &self,
        t: &Trace,
        upstream: &[f64],
        mut grads: Option<&mut Gradients>,
    ) -> Result<Vec<f64>> {
        if upstream.len() != t.values[self.output].len() {
            return Err(Error::arg("upstream gradient has the wrong length"));
        }
        let mut adj: Vec<Option<Vec<f64>>> = vec![None; t.values.len()];
        adj[self.output] = Some(upstream.to_vec());
        let add = |adj: &mut Vec<Option<Vec<f64>>>, id: usize, g: &[f64]| match &mut adj[id] {
            Some(a) => a.iter_mut().zip(g).for_each(|(x, y)| *x += y),
            slot @ None => *slot = Some(g.to_vec()),
        };
        for k in (0..self.nodes.len()).rev() {
            let Some(dy) = adj[k + 1].take() else {
                continue;
            };
            let node = &self.nodes[k];
            match &node.op {
                Op::Affine(a) => {
                    if a.activation == Activation::Step {
                        continue;
                    }
                    let pre = t.pre[k].as_ref().expect("affine pre-activation");
                    let out = &t.values[k + 1];
                    let dz: Vec<f64> = dy
                        .iter()
                        .zip(pre.iter().zip(out))
                        .map(|(g, (&p, &o))| g * a.activation.derivative(p, o))
                        .collect();
                    let input = &t.values[node.inputs[0]];
                    if let Some(gs) = grads.as_deref_mut() {
                        if let Some((gw, gb)) = &mut gs.nodes[k] {
                            // masked entries accumulate too; `flatten` drops them
                            let cols = a.in_dim();
                            for (i, &d) in dz.iter().enumerate() {
                                if d == 0.0 {
                                    continue;
                                }
                                for (g, &xj) in gw[i * cols..(i + 1) * cols].iter_mut().zip(input) {
                                    *g += d * xj;
                                }
                                if !gb.is_empty() {
                                    gb[i] += d;
                                }
                            }
                        }
                    }
                    if dz.iter().any(|&d| d != 0.0) {
                        let dx = a.weight.tmatvec(&dz)?;
                        add(&mut adj, node.inputs[0], &dx);
                    }
                }
                Op::Product => {
                    let (i0, i1) = (node.inputs[0], node.inputs[1]);
                    let g0: Vec<f64> = dy.iter().zip(&t.values[i1]).map(|(g, v)| g * v).collect();
                    let g1: Vec<f64> = dy.iter().zip(&t.values[i0]).map(|(g, v)| g * v).collect();
                    add(&mut adj, i0, &g0);
                    add(&mut adj, i1, &g1);
                }
                Op::Concat => {
                    let mut off = 0;
                    for &i in &node.inputs {
                        let d = t.values[i].len();
                        add(&mut adj, i, &dy[off..off + d]);
                        off += d;
                    }
                }
                Op::Sum => {
                    for &i in &node.inputs {
                        add(&mut adj, i, &dy);
                    }
                }
            }
        }
        Ok(adj[0].take().unwrap_or_else(|| vec![0.0; self.input_dim]))
    }

    /// Row-wise forward pass over a batch (one sample per row).
    pub fn forward_batch(&self, xs: &Matrix) -> Result<Matrix> {
        let mut t = self.trace_batch(xs)?;
        Ok(t.values.swap_remove(self.output))
    }

    /// Batched [`Network::accumulate_with`]: `upstream = f(outputs)` with one
    /// row per sample; parameter gradients are summed over the batch.
    pub fn accumulate_batch_with<F>(
        &self,
        xs: &Matrix,
        f: F,
        grads: &mut Gradients,
    ) -> Result<(Matrix, Matrix)>
    where
        F: FnOnce(&Matrix) -> Result<Matrix>,
    {
        let t = self.trace_batch(xs)?;
        let upstream = f(&t.values[self.output])?;
        let dx = self.backward_batch(&t, &upstream, Some(grads))?;
        let mut values = t.values;
        Ok((values.swap_remove(self.output), dx))
    }

    /// Batched outputs and input gradients.
    pub fn forward_with_input_gradient_batch(
        &self,
        xs: &Matrix,
        upstream: &Matrix,
    ) -> Result<(Matrix, Matrix)> {
        let t = self.trace_batch(xs)?;
        let dx = self.backward_batch(&t, upstream, None)?;
        let mut values = t.values;
        Ok((values.swap_remove(self.output), dx))
    }

    fn trace_batch(&self, xs: &Matrix) -> Result<BatchTrace> {
        if xs.cols() != self.input_dim {
            return Err(Error::arg(format!(
                "network expects {} inputs, got {}",
                self.input_dim,
                xs.cols()
            )));
        }
        let bsz = xs.rows();
        let mut values: Vec<Matrix> = Vec::with_capacity(self.nodes.len() + 1);
        let mut pre: Vec<Option<Matrix>> = Vec::with_capacity(self.nodes.len());
        values.push(xs.clone());
        for node in &self.nodes {
            let (out, p) = match &node.op {
                Op::Affine(a) => {
                    let mut z = Matrix::zeros(bsz, a.out_dim());
                    gemm(
                        1.0,
                        &values[node.inputs[0]],
                        false,
                        &a.weight,
                        true,
                        0.0,
                        &mut z,
                    )?;
                    if let Some(b) = &a.bias {
                        for i in 0..bsz {
                            z.row_mut(i)
                                .iter_mut()
                                .zip(b)
                                .for_each(|(zi, bi)| *zi += bi);
                        }
                    }
                    let y = match a.activation {
                        Activation::Identity => z.clone(),
                        act => {
                            let mut y = z.clone();
                            y.as_mut_slice().iter_mut().for_each(|v| *v = act.apply(*v));
                            y
                        }
                    };
                    (y, Some(z))
                }
                Op::Product => {
                    let (u, v) = (&values[node.inputs[0]], &values[node.inputs[1]]);
                    let mut y = u.clone();
                    y.as_mut_slice()
                        .iter_mut()
                        .zip(v.as_slice())
                        .for_each(|(a, b)| *a *= b);
                    (y, None)
                }
                Op::Concat => {
                    let width: usize = node.inputs.iter().map(|&i| values[i].cols()).sum();
                    let mut y = Matrix::zeros(bsz, width);
                    for r in 0..bsz {
                        let dst = y.row_mut(r);
                        let mut off = 0;
                        for &i in &node.inputs {
                            let src = values[i].row(r);
                            dst[off..off + src.len()].copy_from_slice(src);
                            off += src.len();
                        }
                    }
                    (y, None)
                }
                Op::Sum => {
                    let mut acc = values[node.inputs[0]].clone();
                    for &i in &node.inputs[1..] {
                        acc.as_mut_slice()
                            .iter_mut()
                            .zip(values[i].as_slice())
                            .for_each(|(a, b)| *a += b);
                    }
                    (acc, None)
                }
            };
            if !out.is_finite() {
                return Err(Error::numeric(format!(
                    "non-finite value in layer {}",
                    node.label
                )));
            }
            values.push(out);
            pre.push(p);
        }
        Ok(BatchTrace { values, pre })
    }

    fn backward_batch(
        &self,
        t: &BatchTrace,
        upstream: &Matrix,
        mut grads: Option<&mut Gradients>,
    ) -> Result<Matrix> {
        let bsz = t.values[0].rows();
        if upstream.shape() != t.values[self.output].shape() {
            return Err(Error::arg("upstream gradient has the wrong shape"));
        }
        let mut adj: Vec<Option<Matrix>> = vec![None; t.values.len()];
        adj[self.output] = Some(upstream.clone());
        let add = |adj: &mut Vec<Option<Matrix>>, id: usize, g: Matrix| match &mut adj[id] {
            Some(a) => a
                .as_mut_slice()
                .iter_mut()
                .zip(g.as_slice())
                .for_each(|(x, y)| *x += y),
            slot @ None => *slot = Some(g),
        };
        for k in (0..self.nodes.len()).rev() {
            let Some(dy) = adj[k + 1].take() else {
                continue;
            };
            let node = &self.nodes[k];
            match &node.op {
                Op::Affine(a) => {
                    if a.activation == Activation::Step {
                        continue;
                    }
                    let mut dz = dy;
                    if a.activation != Activation::Identity {
                        let pre = t.pre[k].as_ref().expect("affine pre-activation");
                        let out = &t.values[k + 1];
                        for ((g, &p), &o) in dz
                            .as_mut_slice()
                            .iter_mut()
                            .zip(pre.as_slice())
                            .zip(out.as_slice())
                        {
                            *g *= a.activation.derivative(p, o);
                        }
                    }
                    let input = &t.values[node.inputs[0]];
                    if let Some(gs) = grads.as_deref_mut() {
                        if let Some((gw, gb)) = &mut gs.nodes[k] {
                            let mut gm =
                                Matrix::from_vec(a.out_dim(), a.in_dim(), std::mem::take(gw))?;
                            gemm(1.0, &dz, true, input, false, 1.0, &mut gm)?;
                            *gw = gm.into_vec();
                            if !gb.is_empty() {
                                for r in 0..bsz {
                                    gb.iter_mut().zip(dz.row(r)).for_each(|(b, d)| *b += d);
                                }
                            }
                        }
                    }
                    let mut dx = Matrix::zeros(bsz, a.in_dim());
                    gemm(1.0, &dz, false, &a.weight, false, 0.0, &mut dx)?;
                    add(&mut adj, node.inputs[0], dx);
                }
                Op::Product => {
                    let (i0, i1) = (node.inputs[0], node.inputs[1]);
                    let mut g0 = dy.clone();
                    g0.as_mut_slice()
                        .iter_mut()
                        .zip(t.values[i1].as_slice())
                        .for_each(|(g, v)| *g *= v);
                    let mut g1 = dy;
                    g1.as_mut_slice()
                        .iter_mut()
                        .zip(t.values[i0].as_slice())
                        .for_each(|(g, v)| *g *= v);
                    add(&mut adj, i0, g0);
                    add(&mut adj, i1, g1);
                }
                Op::Concat => {
                    let mut off = 0;
                    for &i in &node.inputs {
                        let d = t.values[i].cols();
                        add(&mut adj, i, dy.block(0, off, bsz, d));
                        off += d;
                    }
                }
                Op::Sum => {
                    for &i in &node.inputs {
                        add(&mut adj, i, dy.clone());
                    }
                }
            }
        }
        Ok(adj[0]
            .take()
            .unwrap_or_else(|| Matrix::zeros(bsz, self.input_dim)))
    }

    /// Trainable entries in canonical order (node order, weights row-major
    /// then biases).
    pub fn trainable_params(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for node in &self.nodes {
            if let Op::Affine(a) = &node.op {
                let w = a.weight.as_slice();
                out.extend(
                    w.iter()
                        .zip(&a.weight_mask)
                        .filter(|(_, &m)| m)
                        .map(|(v, _)| *v),
                );
                if let Some(b) = &a.bias {
                    out.extend(
                        b.iter()
                            .zip(&a.bias_mask)
                            .filter(|(_, &m)| m)
                            .map(|(v, _)| *v),
                    );
                }
            }
        }
        out
    }

    pub fn set_trainable_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count().trainable {
            return Err(Error::arg("parameter vector has the wrong length"));
        }
        let mut it = params.iter();
        for node in &mut self.nodes {
            if let Op::Affine(a) = &mut node.op {
                let mask = a.weight_mask.clone();
                for (w, m) in a.weight.as_mut_slice().iter_mut().zip(&mask) {
                    if *m {
                        *w = *it.next().expect("length checked");
                    }
                }
                if let Some(b) = &mut a.bias {
                    for (v, m) in b.iter_mut().zip(&a.bias_mask) {
                        if *m {
                            *v = *it.next().expect("length checked");
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Index ranges into [`Network::trainable_params`] owned by each node.
    pub fn trainable_ranges(&self) -> Vec<(String, std::ops::Range<usize>)> {
        let mut out = Vec::new();
        let mut off = 0;
        for node in &self.nodes {
            if let Op::Affine(a) = &node.op {
                let n = a.n_trainable();
                if n > 0 {
                    out.push((node.label.clone(), off..off + n));
                }
                off += n;
            }
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let net: Network = serde_json::from_str(s)?;
        net.validate()?;
        Ok(net)
    }
}

impl Gradients {
    /// Trainable entries in the order of [`Network::trainable_params`].
    pub fn flatten(&self, net: &Network) -> Vec<f64> {
        let mut out = Vec::new();
        for (node, g) in net.nodes.iter().zip(&self.nodes) {
            if let (Op::Affine(a), Some((gw, gb))) = (&node.op, g) {
                out.extend(
                    gw.iter()
                        .zip(&a.weight_mask)
                        .filter(|(_, &m)| m)
                        .map(|(v, _)| *v),
                );
                out.extend(
                    gb.iter()
                        .zip(&a.bias_mask)
                        .filter(|(_, &m)| m)
                        .map(|(v, _)| *v),
                );
            }
        }
        out
    }

    pub fn scale(&mut self, s: f64) {
        for (gw, gb) in self.nodes.iter_mut().flatten() {
            gw.iter_mut().chain(gb.iter_mut()).for_each(|v| *v *= s);
        }
    }

    /// Elementwise sum with gradients of the same network.
    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.nodes.iter_mut().zip(&other.nodes) {
            if let (Some((aw, ab)), Some((bw, bb))) = (a, b) {
                aw.iter_mut().zip(bw).for_each(|(x, y)| *x += y);
                ab.iter_mut().zip(bb).for_each(|(x, y)| *x += y);
            }
        }
    }

    /// Gradient of the node with this label.
    pub fn of<'a>(&'a self, net: &Network, label: &str) -> Option<&'a (Vec<f64>, Vec<f64>)> {
        let k = net.nodes.iter().position(|n| n.label == label)?;
        self.nodes[k].as_ref()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(act: Activation) -> Network {
        let mut b = NetworkBuilder::new(3);
        let w = Matrix::from_rows(&[[0.5, -1.0, 2.0], [0.1, 0.2, -0.3]]).unwrap();
        let id = b
            .affine("l", 0, Affine::trainable(w, Some(vec![0.3, -0.7]), act))
            .unwrap();
        b.finish(id).unwrap()
    }

    #[test]
    fn affine_chain_rule_base_case() {
        let net = single(Activation::Identity);
        let x = [1.0, -2.0, 0.5];
        let up = [2.0, -1.0];
        let g = net.gradients(&x, &up).unwrap();
        let (gw, gb) = g.nodes[0].as_ref().unwrap();
        for i in 0..2 {
            for j in 0..3 {
                assert_eq!(gw[i * 3 + j], up[i] * x[j]);
            }
            assert_eq!(gb[i], up[i]);
        }
    }

    #[test]
    fn step_in_trainable_layer_is_rejected() {
        let mut b = NetworkBuilder::new(1);
        let r = b.affine(
            "s",
            0,
            Affine::trainable(Matrix::identity(1), None, Activation::Step),
        );
        assert!(matches!(r, Err(Error::Construction(_))));
    }

    #[test]
    fn step_fires_at_zero() {
        let mut b = NetworkBuilder::new(1);
        let id = b
            .affine(
                "s",
                0,
                Affine::frozen(Matrix::identity(1), None, Activation::Step),
            )
            .unwrap();
        let net = b.finish(id).unwrap();
        assert_eq!(net.forward(&[0.0]).unwrap(), vec![1.0]);
        assert_eq!(net.forward(&[-1e-300]).unwrap(), vec![0.0]);
    }

    #[test]
    fn masked_entries_are_excluded() {
        let full = single(Activation::Tanh);
        let mut net = full.clone();
        if let Op::Affine(a) = &mut net.nodes[0].op {
            a.weight_mask[1] = false;
            a.bias_mask[0] = false;
        }
        assert_eq!(
            net.param_count(),
            ParamCount {
                total: 8,
                trainable: 6
            }
        );
        let x = [1.0, 1.0, 1.0];
        let all = full.gradients(&x, &[1.0, 1.0]).unwrap().flatten(&full);
        let some = net.gradients(&x, &[1.0, 1.0]).unwrap().flatten(&net);
        // weights row-major, then biases: drop w[0][1] and b[0]
        let expect: Vec<f64> = all
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != 1 && *i != 6)
            .map(|(_, v)| *v)
            .collect();
        assert_eq!(some, expect);
    }

    #[test]
    fn params_round_trip_and_json() {
        let mut net = single(Activation::Relu);
        let p: Vec<f64> = net
            .trainable_params()
            .iter()
            .map(|v| v * 1.5 + 0.1)
            .collect();
        net.set_trainable_params(&p).unwrap();
        assert_eq!(net.trainable_params(), p);
        let back = Network::from_json(&net.to_json().unwrap()).unwrap();
        assert_eq!(back, net);
        let x = [0.3, 0.1, -0.2];
        assert_eq!(back.forward(&x).unwrap(), net.forward(&x).unwrap());
    }

    /// `y = sum( tanh(W1 x) ⊙ (W2 x) )` over a concat/sum graph.
    fn dag_net() -> Network {
        let mut b = NetworkBuilder::new(2);
        let w1 = Matrix::from_rows(&[[0.4, -0.3], [0.2, 0.9]]).unwrap();
        let w2 = Matrix::from_rows(&[[-0.5, 0.6], [1.1, 0.3]]).unwrap();
        let h1 = b
            .affine(
                "a",
                0,
                Affine::trainable(w1, Some(vec![0.1, -0.2]), Activation::Tanh),
            )
            .unwrap();
        let h2 = b
            .affine("b", 0, Affine::trainable(w2, None, Activation::Identity))
            .unwrap();
        let pr = b.push("p", vec![h1, h2], Op::Product).unwrap();
        let s = b.push("s", vec![pr, h2], Op::Sum).unwrap();
        let c = b.push("c", vec![s, 0], Op::Concat).unwrap();
        let ones = Affine::frozen(
            Matrix::from_rows(&[[1.0, 1.0, 0.5, -0.5]]).unwrap(),
            None,
            Activation::Identity,
        );
        let out = b.affine("sum", c, ones).unwrap();
        b.finish(out).unwrap()
    }

    #[test]
    fn batch_pass_matches_per_sample() {
        let net = dag_net();
        let xs = Matrix::from_rows(&[[0.7, -1.3], [0.1, 0.2], [-2.0, 0.5]]).unwrap();
        let mut gb = net.zero_gradients();
        let (ys, dxs) = net
            .accumulate_batch_with(&xs, |y| Ok(y.scale(2.0)), &mut gb)
            .unwrap();
        let mut gs = net.zero_gradients();
        for r in 0..3 {
            let (y, dx) = net
                .accumulate_with(xs.row(r), |y| Ok(vec![2.0 * y[0]]), &mut gs)
                .unwrap();
            assert!((y[0] - ys[(r, 0)]).abs() < 1e-14);
            assert!(dx
                .iter()
                .zip(dxs.row(r))
                .all(|(a, b)| (a - b).abs() < 1e-12));
        }
        for (a, b) in gb.flatten(&net).iter().zip(gs.flatten(&net)) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(net.forward_batch(&xs).unwrap(), ys);
    }

    #[test]
    fn dag_ops_gradients_match_finite_differences() {
        let mut net = dag_net();
        let x = [0.7, -1.3];
        let g = net.gradients(&x, &[1.0]).unwrap().flatten(&net);
        let p0 = net.trainable_params();
        let h = 1e-6;
        for k in 0..p0.len() {
            let mut p = p0.clone();
            p[k] += h;
            net.set_trainable_params(&p).unwrap();
            let fp = net.forward(&x).unwrap()[0];
            p[k] -= 2.0 * h;
            net.set_trainable_params(&p).unwrap();
            let fm = net.forward(&x).unwrap()[0];
            assert!(((fp - fm) / (2.0 * h) - g[k]).abs() < 1e-7, "param {k}");
        }
        net.set_trainable_params(&p0).unwrap();
        let gx = net.input_gradient(&x, &[1.0]).unwrap();
        for j in 0..2 {
            let mut xp = x;
            xp[j] += h;
            let mut xm = x;
            xm[j] -= h;
            let fd = (net.forward(&xp).unwrap()[0] - net.forward(&xm).unwrap()[0]) / (2.0 * h);
            assert!((fd - gx[j]).abs() < 1e-7);
        }
    }
}
