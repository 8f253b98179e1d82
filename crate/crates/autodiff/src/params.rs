use std::ops::Range;

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{AutodiffError, Result};
use crate::graph::{Gradients, Graph, NodeId};

/// Leaky ReLU negative slope used by every hidden layer.
pub const LEAKY_SLOPE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    LeakyRelu,
    Tanh,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSpec {
    pub input: usize,
    pub output: usize,
    pub activation: Activation,
}

/// Layer specs for a dense stack: leaky ReLU between hidden layers and a
/// linear output layer.
pub fn mlp_layers(input: usize, hidden: &[usize], output: usize) -> Vec<LayerSpec> {
    let mut dims = Vec::with_capacity(hidden.len() + 2);
    dims.push(input);
    dims.extend_from_slice(hidden);
    dims.push(output);
    dims.windows(2)
        .enumerate()
        .map(|(i, w)| LayerSpec {
            input: w[0],
            output: w[1],
            activation: if i + 2 == dims.len() {
                Activation::Identity
            } else {
                Activation::LeakyRelu
            },
        })
        .collect()
}

/// Named, ordered collection of parameter matrices forming one model.
///
/// Dense layers store `l{i}.w` (`in×out`) followed by `l{i}.b` (`1×out`).
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet {
    name: String,
    entries: Vec<(String, Array2<f64>)>,
    layers: Vec<LayerSpec>,
}

/// Graph handles of a bound [`ParamSet`], in entry order.
#[derive(Debug, Clone)]
pub struct BoundParams {
    pub ids: Vec<NodeId>,
}

impl BoundParams {
    /// Weight and bias node of layer `i`.
    pub fn layer(&self, i: usize) -> (NodeId, NodeId) {
        (self.ids[2 * i], self.ids[2 * i + 1])
    }
}

impl ParamSet {
    /// Glorot-uniform weights, zero biases.
    pub fn dense<R: Rng + ?Sized>(name: impl Into<String>, layers: Vec<LayerSpec>, rng: &mut R) -> Self {
        let mut set = Self::zeros(name, layers);
        set.glorot(rng);
        set
    }

    /// All-zero parameters.
    pub fn zeros(name: impl Into<String>, layers: Vec<LayerSpec>) -> Self {
        let entries = layers
            .iter()
            .enumerate()
            .flat_map(|(i, l)| {
                [
                    (format!("l{i}.w"), Array2::zeros((l.input, l.output))),
                    (format!("l{i}.b"), Array2::zeros((1, l.output))),
                ]
            })
            .collect();
        Self {
            name: name.into(),
            entries,
            layers,
        }
    }

    /// Free-form parameter set (no layer structure), e.g. a scalar
    /// temperature.
    pub fn from_entries(name: impl Into<String>, entries: Vec<(String, Array2<f64>)>) -> Self {
        Self {
            name: name.into(),
            entries,
            layers: Vec::new(),
        }
    }

    /// Re-draws every weight uniformly in `±sqrt(6 / (fan_in + fan_out))`
    /// and zeroes biases.
    pub fn glorot<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        for (i, l) in self.layers.iter().enumerate() {
            let bound = (6.0 / (l.input + l.output) as f64).sqrt();
            let w = &mut self.entries[2 * i].1;
            w.mapv_inplace(|_| rng.random_range(-bound..bound));
            self.entries[2 * i + 1].1.fill(0.0);
        }
    }

    /// Every entry, biases included, drawn from `N(0, std²)`.
    pub fn gaussian<R: Rng + ?Sized>(&mut self, std: f64, rng: &mut R) {
        for (_, v) in &mut self.entries {
            v.mapv_inplace(|_| {
                let z: f64 = StandardNormal.sample(rng);
                std * z
            });
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn entries(&self) -> &[(String, Array2<f64>)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, entry: &str) -> Option<&Array2<f64>> {
        self.entries.iter().find(|(n, _)| n == entry).map(|(_, v)| v)
    }

    pub fn values(&self) -> impl Iterator<Item = &Array2<f64>> {
        self.entries.iter().map(|(_, v)| v)
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut Array2<f64>> {
        self.entries.iter_mut().map(|(_, v)| v)
    }

    pub fn num_scalars(&self) -> usize {
        self.entries.iter().map(|(_, v)| v.len()).sum()
    }

    /// Fully qualified label of an entry, as seen in [`Gradients`].
    pub fn label(&self, entry: &str) -> String {
        format!("{}/{}", self.name, entry)
    }

    /// Replaces an entry's value, checking its shape.
    pub fn set(&mut self, entry: &str, value: Array2<f64>) -> Result<()> {
        let (_, slot) = self
            .entries
            .iter_mut()
            .find(|(n, _)| n == entry)
            .ok_or_else(|| AutodiffError::UnknownEntry(entry.to_string()))?;
        if slot.dim() != value.dim() {
            let (r, c) = slot.dim();
            let (vr, vc) = value.dim();
            return Err(AutodiffError::ParamShape {
                name: entry.to_string(),
                expected: [r, c],
                got: [vr, vc],
            });
        }
        *slot = value;
        Ok(())
    }

    /// Copies values from `other`, which must have the same entry layout.
    pub fn copy_from(&mut self, other: &ParamSet) -> Result<()> {
        for ((name, dst), (_, src)) in self.entries.iter_mut().zip(&other.entries) {
            if dst.dim() != src.dim() {
                let (r, c) = dst.dim();
                let (sr, sc) = src.dim();
                return Err(AutodiffError::ParamShape {
                    name: name.clone(),
                    expected: [r, c],
                    got: [sr, sc],
                });
            }
            dst.assign(src);
        }
        Ok(())
    }

    /// Adds every entry to `graph`. Trainable entries become labelled
    /// gradient leaves; otherwise they are constants.
    pub fn bind(&self, graph: &mut Graph, trainable: bool) -> BoundParams {
        let ids = self
            .entries
            .iter()
            .map(|(n, v)| {
                if trainable {
                    graph.param(self.label(n), v.clone())
                } else {
                    graph.constant(v.clone())
                }
            })
            .collect();
        BoundParams { ids }
    }

    /// Runs the dense stack described by the layer spec.
    pub fn forward(&self, graph: &mut Graph, bound: &BoundParams, x: NodeId) -> Result<NodeId> {
        self.forward_layers(graph, bound, x, 0..self.layers.len())
    }

    /// Runs a contiguous sub-range of layers, e.g. a shared trunk or one head.
    pub fn forward_layers(
        &self,
        graph: &mut Graph,
        bound: &BoundParams,
        x: NodeId,
        range: Range<usize>,
    ) -> Result<NodeId> {
        let mut h = x;
        for i in range {
            let (w, b) = bound.layer(i);
            h = graph.affine(h, w, b)?;
            h = match self.layers[i].activation {
                Activation::Identity => h,
                Activation::LeakyRelu => graph.leaky_relu(h, LEAKY_SLOPE)?,
                Activation::Tanh => graph.tanh(h)?,
            };
        }
        Ok(h)
    }

    /// Forward value without recording a graph.
    pub fn infer(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.infer_layers(x, 0..self.layers.len())
    }

    pub fn infer_layers(&self, x: ArrayView2<f64>, range: Range<usize>) -> Result<Array2<f64>> {
        let mut h: Option<Array2<f64>> = None;
        for i in range {
            let w = &self.entries[2 * i].1;
            let b = &self.entries[2 * i + 1].1;
            let input = h.as_ref().map(|a| a.view()).unwrap_or(x);
            if input.ncols() != w.nrows() {
                let (wr, wc) = w.dim();
                return Err(AutodiffError::ShapeMismatch {
                    primitive: "affine",
                    shapes: vec![[input.nrows(), input.ncols()], [wr, wc]],
                });
            }
            let mut out = input.dot(w);
            out += b;
            match self.layers[i].activation {
                Activation::Identity => {}
                Activation::LeakyRelu => out.mapv_inplace(|v| if v > 0.0 { v } else { LEAKY_SLOPE * v }),
                Activation::Tanh => out.mapv_inplace(f64::tanh),
            }
            h = Some(out);
        }
        Ok(h.unwrap_or_else(|| x.to_owned()))
    }

    /// Gradients for every entry, in entry order.
    pub fn collect_grads(&self, grads: &Gradients, bound: &BoundParams) -> Result<Vec<Array2<f64>>> {
        self.entries
            .iter()
            .zip(&bound.ids)
            .map(|((n, _), id)| {
                grads
                    .get(*id)
                    .cloned()
                    .ok_or_else(|| AutodiffError::MissingGradient(self.label(n)))
            })
            .collect()
    }
}
