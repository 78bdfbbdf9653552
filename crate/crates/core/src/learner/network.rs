//! The fixed MLP encoder: backbone `d -> h1 -> h2 -> r` with ELU between
//! layers, a projection head `r -> p` normalized to unit length, and a linear
//! classifier head `r -> outputs`. Gradients are derived by hand.

use std::fmt::Write as _;

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Architecture {
    pub input: usize,
    pub hidden: [usize; 2],
    pub repr: usize,
    pub proj: usize,
    pub outputs: usize,
}

impl Architecture {
    /// `d -> 128 -> 128 -> 64`, projection to 32, classifier to `outputs`.
    pub fn standard(input: usize, outputs: usize) -> Self {
        Self {
            input,
            hidden: [128, 128],
            repr: 64,
            proj: 32,
            outputs,
        }
    }
}

/// Affine layer `y = x W^T + b` with `W` stored as `out x in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            weight: Array2::zeros((outputs, inputs)),
            bias: Array1::zeros(outputs),
        }
    }

    /// Glorot-uniform initialization, zero bias.
    pub fn init<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let bound = (6.0 / (inputs + outputs) as f64).sqrt();
        let weight = Array2::from_shape_simple_fn((outputs, inputs), || {
            rng.random_range(-bound..bound)
        });
        Self {
            weight,
            bias: Array1::zeros(outputs),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.weight.nrows()
    }

    pub fn forward(&self, x: &ArrayView2<f64>) -> Array2<f64> {
        x.dot(&self.weight.t()) + &self.bias
    }
}

pub(crate) fn elu(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        v.exp_m1()
    }
}

fn elu_grad(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else {
        v.exp()
    }
}

/// Weights of the representation model, projection head and classifier.
/// The same type doubles as a gradient container.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    arch: Architecture,
    pub backbone: [Dense; 3],
    pub projection: Dense,
    pub classifier: Dense,
}

const LAYER_NAMES: [&str; 5] = [
    "backbone.0",
    "backbone.1",
    "backbone.2",
    "projection",
    "classifier",
];

impl EncoderParams {
    pub fn init<R: Rng + ?Sized>(arch: Architecture, rng: &mut R) -> Self {
        let [h1, h2] = arch.hidden;
        Self {
            arch,
            backbone: [
                Dense::init(arch.input, h1, rng),
                Dense::init(h1, h2, rng),
                Dense::init(h2, arch.repr, rng),
            ],
            projection: Dense::init(arch.repr, arch.proj, rng),
            classifier: Dense::init(arch.repr, arch.outputs, rng),
        }
    }

    pub fn zeros(arch: Architecture) -> Self {
        let [h1, h2] = arch.hidden;
        Self {
            arch,
            backbone: [
                Dense::zeros(arch.input, h1),
                Dense::zeros(h1, h2),
                Dense::zeros(h2, arch.repr),
            ],
            projection: Dense::zeros(arch.repr, arch.proj),
            classifier: Dense::zeros(arch.repr, arch.outputs),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.arch)
    }

    pub fn architecture(&self) -> Architecture {
        self.arch
    }

    pub fn layers(&self) -> [&Dense; 5] {
        let [a, b, c] = &self.backbone;
        [a, b, c, &self.projection, &self.classifier]
    }

    pub fn layers_mut(&mut self) -> [&mut Dense; 5] {
        let [a, b, c] = &mut self.backbone;
        [a, b, c, &mut self.projection, &mut self.classifier]
    }

    pub fn num_params(&self) -> usize {
        self.layers()
            .iter()
            .map(|l| l.weight.len() + l.bias.len())
            .sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers().iter().all(|l| {
            l.weight.iter().all(|v| v.is_finite()) && l.bias.iter().all(|v| v.is_finite())
        })
    }

    /// All parameters, layer by layer, weight (row-major) then bias.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in self.layers() {
            out.extend(l.weight.iter());
            out.extend(l.bias.iter());
        }
        out
    }

    /// Inverse of [`flatten`](Self::flatten).
    pub fn assign_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.num_params(), "flat parameter length");
        let mut it = flat.iter();
        for l in self.layers_mut() {
            l.weight.iter_mut().chain(l.bias.iter_mut()).for_each(|v| {
                *v = *it.next().expect("length checked");
            });
        }
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, other: &EncoderParams, scale: f64) {
        for (dst, src) in self.layers_mut().into_iter().zip(other.layers()) {
            dst.weight.scaled_add(scale, &src.weight);
            dst.bias.scaled_add(scale, &src.bias);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for l in self.layers_mut() {
            l.weight.mapv_inplace(|v| v * factor);
            l.bias.mapv_inplace(|v| v * factor);
        }
    }

    /// Replaces the classifier head with a freshly initialized one.
    pub fn with_classifier<R: Rng + ?Sized>(mut self, outputs: usize, rng: &mut R) -> Self {
        self.arch.outputs = outputs;
        self.classifier = Dense::init(self.arch.repr, outputs, rng);
        self
    }

    pub fn check_input(&self, dim: usize) -> Result<()> {
        if dim != self.arch.input {
            return Err(Error::DimensionMismatch {
                expected: self.arch.input,
                found: dim,
            });
        }
        Ok(())
    }

    /// Runs the full network on a batch (one sample per row).
    pub fn forward_batch(&self, x: ArrayView2<f64>) -> Result<ForwardPass> {
        self.check_input(x.ncols())?;
        let pre1 = self.backbone[0].forward(&x);
        let act1 = pre1.mapv(elu);
        let pre2 = self.backbone[1].forward(&act1.view());
        let act2 = pre2.mapv(elu);
        let repr = self.backbone[2].forward(&act2.view());
        let proj_raw = self.projection.forward(&repr.view());
        let norms: Array1<f64> = proj_raw
            .rows()
            .into_iter()
            .map(|r| r.dot(&r).sqrt().max(f64::MIN_POSITIVE))
            .collect();
        let z = &proj_raw / &norms.view().insert_axis(Axis(1));
        let logits = self.classifier.forward(&repr.view());
        Ok(ForwardPass {
            input: x.to_owned(),
            pre1,
            act1,
            pre2,
            act2,
            repr,
            norms,
            z,
            logits,
        })
    }

    /// Backpropagates gradients w.r.t. the unit projections and/or logits.
    pub fn backward(
        &self,
        pass: &ForwardPass,
        grad_z: Option<&Array2<f64>>,
        grad_logits: Option<&Array2<f64>>,
    ) -> EncoderParams {
        let mut g = self.zeros_like();
        let mut grad_repr = Array2::<f64>::zeros(pass.repr.raw_dim());

        if let Some(dz) = grad_z {
            // d/du of u/|u|: (dz - z (z . dz)) / |u|
            let zdot: Array1<f64> = (&pass.z * dz).sum_axis(Axis(1));
            let mut du = dz - &(&pass.z * &zdot.view().insert_axis(Axis(1)));
            du /= &pass.norms.view().insert_axis(Axis(1));
            g.projection.weight = du.t().dot(&pass.repr);
            g.projection.bias = du.sum_axis(Axis(0));
            grad_repr += &du.dot(&self.projection.weight);
        }
        if let Some(dl) = grad_logits {
            g.classifier.weight = dl.t().dot(&pass.repr);
            g.classifier.bias = dl.sum_axis(Axis(0));
            grad_repr += &dl.dot(&self.classifier.weight);
        }

        g.backbone[2].weight = grad_repr.t().dot(&pass.act2);
        g.backbone[2].bias = grad_repr.sum_axis(Axis(0));
        let mut d2 = grad_repr.dot(&self.backbone[2].weight);
        Zip::from(&mut d2)
            .and(&pass.pre2)
            .for_each(|d, &p| *d *= elu_grad(p));

        g.backbone[1].weight = d2.t().dot(&pass.act1);
        g.backbone[1].bias = d2.sum_axis(Axis(0));
        let mut d1 = d2.dot(&self.backbone[1].weight);
        Zip::from(&mut d1)
            .and(&pass.pre1)
            .for_each(|d, &p| *d *= elu_grad(p));

        g.backbone[0].weight = d1.t().dot(&pass.input);
        g.backbone[0].bias = d1.sum_axis(Axis(0));
        g
    }

    /// Text checkpoint: header, architecture line, then each tensor as a
    /// `name rows cols` line followed by one line per row. Values use 17
    /// significant digits, so a save/load cycle is bit-exact.
    pub fn to_checkpoint(&self) -> String {
        let a = self.arch;
        let mut out = String::new();
        let _ = writeln!(out, "alforge-encoder v1");
        let _ = writeln!(
            out,
            "arch {} {} {} {} {} {}",
            a.input, a.hidden[0], a.hidden[1], a.repr, a.proj, a.outputs
        );
        for (name, l) in LAYER_NAMES.iter().zip(self.layers()) {
            let _ = writeln!(out, "{name}.weight {} {}", l.weight.nrows(), l.weight.ncols());
            for row in l.weight.rows() {
                write_row(&mut out, row.iter());
            }
            let _ = writeln!(out, "{name}.bias 1 {}", l.bias.len());
            write_row(&mut out, l.bias.iter());
        }
        out
    }

    pub fn from_checkpoint(text: &str) -> Result<Self> {
        let bad = |m: &str| Error::MalformedCheckpoint(m.to_string());
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some("alforge-encoder v1") {
            return Err(bad("missing `alforge-encoder v1` header"));
        }
        let arch_line = lines.next().ok_or_else(|| bad("missing arch line"))?;
        let dims: Vec<usize> = arch_line
            .split_whitespace()
            .skip(1)
            .map(|t| t.parse().map_err(|_| bad("arch line")))
            .collect::<Result<_>>()?;
        if !arch_line.starts_with("arch ") || dims.len() != 6 {
            return Err(bad("arch line must hold six sizes"));
        }
        let arch = Architecture {
            input: dims[0],
            hidden: [dims[1], dims[2]],
            repr: dims[3],
            proj: dims[4],
            outputs: dims[5],
        };
        let mut params = Self::zeros(arch);
        for (name, layer) in LAYER_NAMES.iter().zip(params.layers_mut()) {
            let (rows, cols) = (layer.weight.nrows(), layer.weight.ncols());
            expect_tensor_header(lines.next(), &format!("{name}.weight"), rows, cols)?;
            for mut row in layer.weight.rows_mut() {
                read_row(lines.next(), row.iter_mut(), cols)?;
            }
            let n = layer.bias.len();
            expect_tensor_header(lines.next(), &format!("{name}.bias"), 1, n)?;
            read_row(lines.next(), layer.bias.iter_mut(), n)?;
        }
        Ok(params)
    }
}

fn write_row<'a>(out: &mut String, values: impl Iterator<Item = &'a f64>) {
    let mut first = true;
    for v in values {
        if !first {
            out.push(' ');
        }
        first = false;
        let _ = write!(out, "{v:.16e}");
    }
    out.push('\n');
}

fn expect_tensor_header(line: Option<&str>, name: &str, rows: usize, cols: usize) -> Result<()> {
    let want = format!("{name} {rows} {cols}");
    match line {
        Some(l) if l.trim() == want => Ok(()),
        other => Err(Error::MalformedCheckpoint(format!(
            "expected `{want}`, found `{}`",
            other.unwrap_or("<eof>")
        ))),
    }
}

fn read_row<'a>(
    line: Option<&str>,
    dst: impl Iterator<Item = &'a mut f64>,
    expected: usize,
) -> Result<()> {
    let line = line.ok_or_else(|| Error::MalformedCheckpoint("truncated tensor".into()))?;
    let values: Vec<f64> = line
        .split_whitespace()
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| Error::MalformedCheckpoint(format!("bad value `{t}`")))
        })
        .collect::<Result<_>>()?;
    if values.len() != expected {
        return Err(Error::MalformedCheckpoint(format!(
            "row holds {} values, expected {expected}",
            values.len()
        )));
    }
    dst.zip(values).for_each(|(d, v)| *d = v);
    Ok(())
}

/// Cached activations of one batched forward pass.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    input: Array2<f64>,
    pre1: Array2<f64>,
    act1: Array2<f64>,
    pre2: Array2<f64>,
    act2: Array2<f64>,
    /// Backbone representations `h`, one row per sample.
    pub repr: Array2<f64>,
    norms: Array1<f64>,
    /// Unit-norm projections `z`.
    pub z: Array2<f64>,
    pub logits: Array2<f64>,
}
