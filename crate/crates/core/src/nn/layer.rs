use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{arg_err, Result};
use crate::tensor::Kernel4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    /// `d x d` convolution from `in_ch` to `out_ch` channels, zero padded.
    Conv2d {
        d: usize,
        in_ch: usize,
        out_ch: usize,
        stride: usize,
        padding: usize,
        bias: bool,
    },
    Relu,
    /// Non-overlapping `k x k` max pooling (stride `k`, remainder dropped).
    MaxPool { k: usize },
    GlobalAvgPool,
    /// Fully connected; flattens its input.
    Dense {
        inputs: usize,
        outputs: usize,
        bias: bool,
    },
    /// Terminal marker: logits pass through, the loss is softmax cross-entropy.
    SoftmaxXent,
}

impl LayerKind {
    pub fn conv(d: usize, in_ch: usize, out_ch: usize, stride: usize, padding: usize, bias: bool) -> Self {
        LayerKind::Conv2d {
            d,
            in_ch,
            out_ch,
            stride,
            padding,
            bias,
        }
    }

    pub fn weight_len(&self) -> usize {
        match *self {
            LayerKind::Conv2d { d, in_ch, out_ch, .. } => d * d * in_ch * out_ch,
            LayerKind::Dense { inputs, outputs, .. } => inputs * outputs,
            _ => 0,
        }
    }

    pub fn bias_len(&self) -> usize {
        match *self {
            LayerKind::Conv2d { out_ch, bias: true, .. } => out_ch,
            LayerKind::Dense { outputs, bias: true, .. } => outputs,
            _ => 0,
        }
    }

    pub fn fan_in(&self) -> usize {
        match *self {
            LayerKind::Conv2d { d, in_ch, .. } => d * d * in_ch,
            LayerKind::Dense { inputs, .. } => inputs,
            _ => 0,
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            LayerKind::Conv2d { d, in_ch, out_ch, stride, .. } => d > 0 && in_ch > 0 && out_ch > 0 && stride > 0,
            LayerKind::MaxPool { k } => k > 0,
            LayerKind::Dense { inputs, outputs, .. } => inputs > 0 && outputs > 0,
            _ => true,
        };
        if ok {
            Ok(())
        } else {
            Err(arg_err!("degenerate layer {self:?}"))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerSpec {
    pub name: String,
    pub kind: LayerKind,
}

impl LayerSpec {
    pub fn new(name: impl Into<String>, kind: LayerKind) -> Self {
        Self {
            name: name.into(),
            kind,
        }
    }
}

/// A layer with its parameters.
///
/// Conv weights use the kernel layout `(i, j, s, t)`; dense weights are an
/// `outputs x inputs` row-major matrix. `bias` is empty when disabled.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    spec: LayerSpec,
    weight: Vec<f64>,
    bias: Vec<f64>,
}

impl Layer {
    pub fn new(spec: LayerSpec, weight: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        spec.kind.validate()?;
        if weight.len() != spec.kind.weight_len() || bias.len() != spec.kind.bias_len() {
            return Err(arg_err!(
                "layer {} expects {} weights and {} biases, got {} and {}",
                spec.name,
                spec.kind.weight_len(),
                spec.kind.bias_len(),
                weight.len(),
                bias.len()
            ));
        }
        Ok(Self { spec, weight, bias })
    }

    pub fn spec(&self) -> &LayerSpec {
        &self.spec
    }

    pub fn weight(&self) -> &[f64] {
        &self.weight
    }

    pub fn weight_mut(&mut self) -> &mut [f64] {
        &mut self.weight
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }

    pub fn name(&self) -> &str {
        &self.spec.name
    }

    pub fn kind(&self) -> LayerKind {
        self.spec.kind
    }

    /// The conv kernel, or `None` for other layer kinds.
    pub fn kernel(&self) -> Option<Kernel4> {
        match self.spec.kind {
            LayerKind::Conv2d { d, in_ch, out_ch, .. } => {
                Some(Kernel4::new(d, in_ch, out_ch, self.weight.clone()).expect("length checked at construction"))
            }
            _ => None,
        }
    }

    pub fn set_kernel(&mut self, kernel: &Kernel4) -> Result<()> {
        match self.spec.kind {
            LayerKind::Conv2d { d, in_ch, out_ch, .. }
                if (d, in_ch, out_ch) == (kernel.size(), kernel.in_channels(), kernel.out_channels()) =>
            {
                self.weight.copy_from_slice(kernel.data());
                Ok(())
            }
            _ => Err(arg_err!("kernel does not fit layer {}", self.spec.name)),
        }
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }
}
