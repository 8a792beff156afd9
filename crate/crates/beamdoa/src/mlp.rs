//! The gated-MLP angle regressor and its training machinery: forward pass,
//! exact analytic gradients, layer normalization, inverted dropout, MSE
//! loss, Adam with L2 weight regularization, and the learning-rate schedule.
//!
//! The network is a single gated feed-forward block. A gate branch projects
//! the length-`B` profile to the hidden width and applies the SiLU
//! activation; a linear branch applies a plain projection. Each branch is
//! layer-normalized, the branches are multiplied elementwise, dropout is
//! applied to the product in training mode, and an output projection
//! produces one normalized angle. Inputs are peak-normalized profiles;
//! targets are `alpha / 90`, denormalized by the caller.
//!
//! Everything is hand-differentiated; `backward` returns gradients that
//! match central finite differences to high precision (see the gradient
//! tests and the acceptance suite).

use std::io::{BufRead, Write};

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Epsilon inside the layer-norm variance square root.
pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Scale applied to angle targets: the network regresses `alpha / 90`.
pub const TARGET_SCALE_DEG: f64 = 90.0;

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// SiLU (Swish) activation `x * sigmoid(x)`.
pub fn silu(x: f64) -> f64 {
    x * sigmoid(x)
}

/// Derivative of SiLU with respect to its input.
pub fn silu_grad(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 + x * (1.0 - s))
}

/// Where layer normalization sits in the block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormPlacement {
    /// One norm per branch: after SiLU on the gate path, after the plain
    /// projection on the linear path, before the elementwise product.
    PerBranch,
    /// A single norm on the input profile; branches stay unnormalized.
    InputOnly,
}

impl NormPlacement {
    pub fn as_str(self) -> &'static str {
        match self {
            NormPlacement::PerBranch => "per_branch",
            NormPlacement::InputOnly => "input_only",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "per_branch" => Ok(NormPlacement::PerBranch),
            "input_only" => Ok(NormPlacement::InputOnly),
            other => Err(Error::Parse(format!("unknown norm placement {other:?}"))),
        }
    }
}

/// Per-feature affine applied after normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerNormAffine {
    pub scale: Vec<f64>,
    pub shift: Vec<f64>,
}

impl LayerNormAffine {
    pub fn identity(dim: usize) -> Self {
        LayerNormAffine {
            scale: vec![1.0; dim],
            shift: vec![0.0; dim],
        }
    }

    pub fn zeros(dim: usize) -> Self {
        LayerNormAffine {
            scale: vec![0.0; dim],
            shift: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.scale.len()
    }
}

/// Normalization parameters; the variant encodes the placement.
#[derive(Debug, Clone, PartialEq)]
pub enum NormParams {
    PerBranch {
        gate: LayerNormAffine,
        lin: LayerNormAffine,
    },
    InputOnly {
        input: LayerNormAffine,
    },
}

impl NormParams {
    fn identity(placement: NormPlacement, input_dim: usize, hidden_dim: usize) -> Self {
        match placement {
            NormPlacement::PerBranch => NormParams::PerBranch {
                gate: LayerNormAffine::identity(hidden_dim),
                lin: LayerNormAffine::identity(hidden_dim),
            },
            NormPlacement::InputOnly => NormParams::InputOnly {
                input: LayerNormAffine::identity(input_dim),
            },
        }
    }

    fn zeros_like(other: &NormParams) -> Self {
        match other {
            NormParams::PerBranch { gate, lin } => NormParams::PerBranch {
                gate: LayerNormAffine::zeros(gate.dim()),
                lin: LayerNormAffine::zeros(lin.dim()),
            },
            NormParams::InputOnly { input } => NormParams::InputOnly {
                input: LayerNormAffine::zeros(input.dim()),
            },
        }
    }

    pub fn placement(&self) -> NormPlacement {
        match self {
            NormParams::PerBranch { .. } => NormPlacement::PerBranch,
            NormParams::InputOnly { .. } => NormPlacement::InputOnly,
        }
    }
}

/// Gated-MLP parameters. `w` and `v` are `input_dim x hidden_dim`
/// projections (gate and linear paths), `w2` the `hidden_dim`-long output
/// projection. No bias terms.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub w: Matrix,
    pub v: Matrix,
    pub w2: Vec<f64>,
    pub norm: NormParams,
}

impl MlpModel {
    /// Seed-pinned Xavier-uniform initialization; norm affines start at
    /// identity.
    pub fn init(
        input_dim: usize,
        hidden_dim: usize,
        placement: NormPlacement,
        seed: u64,
    ) -> Result<Self> {
        if input_dim < 1 || hidden_dim < 1 {
            return Err(Error::invalid_argument("model dimensions must be >= 1"));
        }
        let mut rng = <ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
        let mut xavier = |fan_in: usize, fan_out: usize, len: usize| -> Vec<f64> {
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            (0..len).map(|_| rng.random_range(-limit..=limit)).collect()
        };
        let w = Matrix::from_vec(
            input_dim,
            hidden_dim,
            xavier(input_dim, hidden_dim, input_dim * hidden_dim),
        )?;
        let v = Matrix::from_vec(
            input_dim,
            hidden_dim,
            xavier(input_dim, hidden_dim, input_dim * hidden_dim),
        )?;
        let w2 = xavier(hidden_dim, 1, hidden_dim);
        Ok(MlpModel {
            input_dim,
            hidden_dim,
            w,
            v,
            w2,
            norm: NormParams::identity(placement, input_dim, hidden_dim),
        })
    }

    pub fn placement(&self) -> NormPlacement {
        self.norm.placement()
    }

    /// Named parameter blocks in a fixed order shared with [`Gradients`].
    pub fn param_blocks(&self) -> Vec<(&'static str, &[f64])> {
        let mut blocks = vec![
            ("w", self.w.data()),
            ("v", self.v.data()),
            ("w2", self.w2.as_slice()),
        ];
        match &self.norm {
            NormParams::PerBranch { gate, lin } => {
                blocks.push(("ln_gate_scale", gate.scale.as_slice()));
                blocks.push(("ln_gate_shift", gate.shift.as_slice()));
                blocks.push(("ln_lin_scale", lin.scale.as_slice()));
                blocks.push(("ln_lin_shift", lin.shift.as_slice()));
            }
            NormParams::InputOnly { input } => {
                blocks.push(("ln_in_scale", input.scale.as_slice()));
                blocks.push(("ln_in_shift", input.shift.as_slice()));
            }
        }
        blocks
    }

    pub fn param_blocks_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        let mut blocks = vec![
            ("w", self.w.data_mut()),
            ("v", self.v.data_mut()),
            ("w2", self.w2.as_mut_slice()),
        ];
        match &mut self.norm {
            NormParams::PerBranch { gate, lin } => {
                blocks.push(("ln_gate_scale", gate.scale.as_mut_slice()));
                blocks.push(("ln_gate_shift", gate.shift.as_mut_slice()));
                blocks.push(("ln_lin_scale", lin.scale.as_mut_slice()));
                blocks.push(("ln_lin_shift", lin.shift.as_mut_slice()));
            }
            NormParams::InputOnly { input } => {
                blocks.push(("ln_in_scale", input.scale.as_mut_slice()));
                blocks.push(("ln_in_shift", input.shift.as_mut_slice()));
            }
        }
        blocks
    }

    /// Sum of squares over the weight matrices (the L2-regularized subset).
    pub fn weight_sq_norm(&self) -> f64 {
        let sq = |s: &[f64]| s.iter().map(|v| v * v).sum::<f64>();
        sq(self.w.data()) + sq(self.v.data()) + sq(&self.w2)
    }

    pub fn is_finite(&self) -> bool {
        self.param_blocks()
            .iter()
            .all(|(_, s)| s.iter().all(|v| v.is_finite()))
    }

    /// Deterministic forward pass without dropout.
    pub fn forward_eval(&self, x: &[f64]) -> Result<f64> {
        Ok(self.run_forward(x, None)?.output)
    }

    /// Training-mode forward pass. With `dropout_rate > 0` an inverted
    /// dropout mask (kept units scaled by `1/(1-rate)`) is drawn from `rng`
    /// and recorded in the cache; with rate 0 no randomness is consumed.
    pub fn forward_train(
        &self,
        x: &[f64],
        dropout_rate: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<(f64, ForwardCache)> {
        if !(0.0..1.0).contains(&dropout_rate) {
            return Err(Error::invalid_argument(format!(
                "dropout rate {dropout_rate} outside [0, 1)"
            )));
        }
        let mask = if dropout_rate > 0.0 {
            let keep = 1.0 - dropout_rate;
            Some(
                (0..self.hidden_dim)
                    .map(|_| {
                        if rng.random::<f64>() < dropout_rate {
                            0.0
                        } else {
                            1.0 / keep
                        }
                    })
                    .collect::<Vec<f64>>(),
            )
        } else {
            None
        };
        let cache = self.run_forward(x, mask)?;
        Ok((cache.output, cache))
    }

    fn run_forward(&self, x: &[f64], mask: Option<Vec<f64>>) -> Result<ForwardCache> {
        if x.len() != self.input_dim {
            return Err(Error::invalid_argument(format!(
                "input has {} entries, model expects {}",
                x.len(),
                self.input_dim
            )));
        }
        let h = self.hidden_dim;

        let (input_norm, projected_input): (Option<NormStage>, Vec<f64>) = match &self.norm {
            NormParams::InputOnly { input } => {
                let stage = NormStage::compute(x)?;
                let xn = stage.affine_output(input);
                (Some(stage), xn)
            }
            NormParams::PerBranch { .. } => (None, x.to_vec()),
        };

        let gate_pre = mat_vec_left(&projected_input, &self.w, h);
        let gate_act: Vec<f64> = gate_pre.iter().map(|&a| silu(a)).collect();
        let lin_pre = mat_vec_left(&projected_input, &self.v, h);

        let (gate_norm, gate_out, lin_norm, lin_out) = match &self.norm {
            NormParams::PerBranch { gate, lin } => {
                let gs = NormStage::compute(&gate_act)?;
                let go = gs.affine_output(gate);
                let ls = NormStage::compute(&lin_pre)?;
                let lo = ls.affine_output(lin);
                (Some(gs), go, Some(ls), lo)
            }
            NormParams::InputOnly { .. } => (None, gate_act.clone(), None, lin_pre.clone()),
        };

        let product: Vec<f64> = gate_out.iter().zip(&lin_out).map(|(g, l)| g * l).collect();
        let dropped: Vec<f64> = match &mask {
            Some(m) => product.iter().zip(m).map(|(p, mk)| p * mk).collect(),
            None => product.clone(),
        };
        let output = dot(&dropped, &self.w2);

        Ok(ForwardCache {
            x: x.to_vec(),
            projected_input,
            input_norm,
            gate_pre,
            gate_norm,
            gate_out,
            lin_norm,
            lin_out,
            mask,
            dropped,
            output,
        })
    }

    /// Accumulates into `grads` the exact gradients of the scalar output
    /// scaled by `dloss_dout`, chaining through the cached intermediates.
    /// The dropout mask recorded in the cache is reused.
    pub fn backward_into(
        &self,
        cache: &ForwardCache,
        dloss_dout: f64,
        grads: &mut Gradients,
    ) -> Result<()> {
        if cache.x.len() != self.input_dim
            || cache.gate_pre.len() != self.hidden_dim
            || cache.input_norm.is_some() != matches!(self.norm, NormParams::InputOnly { .. })
        {
            return Err(Error::InvalidState(
                "forward cache does not match this model".into(),
            ));
        }
        if !grads.matches(self) {
            return Err(Error::InvalidState(
                "gradient buffer does not match this model".into(),
            ));
        }
        let h = self.hidden_dim;

        let mut d_dropped = vec![0.0; h];
        for j in 0..h {
            grads.w2[j] += dloss_dout * cache.dropped[j];
            d_dropped[j] = dloss_dout * self.w2[j];
        }
        let d_product: Vec<f64> = match &cache.mask {
            Some(m) => d_dropped.iter().zip(m).map(|(d, mk)| d * mk).collect(),
            None => d_dropped,
        };

        let d_gate_out: Vec<f64> = d_product
            .iter()
            .zip(&cache.lin_out)
            .map(|(d, l)| d * l)
            .collect();
        let d_lin_out: Vec<f64> = d_product
            .iter()
            .zip(&cache.gate_out)
            .map(|(d, g)| d * g)
            .collect();

        match (&self.norm, &mut grads.norm) {
            (
                NormParams::PerBranch { gate, lin },
                NormParams::PerBranch {
                    gate: g_gate,
                    lin: g_lin,
                },
            ) => {
                let gate_stage = cache
                    .gate_norm
                    .as_ref()
                    .ok_or_else(|| Error::InvalidState("cache missing gate norm".into()))?;
                let lin_stage = cache
                    .lin_norm
                    .as_ref()
                    .ok_or_else(|| Error::InvalidState("cache missing lin norm".into()))?;

                let d_gate_act =
                    gate_stage.backward(&d_gate_out, gate, &mut g_gate.scale, &mut g_gate.shift);
                let d_lin_pre =
                    lin_stage.backward(&d_lin_out, lin, &mut g_lin.scale, &mut g_lin.shift);

                let d_gate_pre: Vec<f64> = d_gate_act
                    .iter()
                    .zip(&cache.gate_pre)
                    .map(|(d, &a)| d * silu_grad(a))
                    .collect();

                accumulate_outer(&cache.projected_input, &d_gate_pre, &mut grads.w);
                accumulate_outer(&cache.projected_input, &d_lin_pre, &mut grads.v);
            }
            (NormParams::InputOnly { input }, NormParams::InputOnly { input: g_input }) => {
                let d_gate_pre: Vec<f64> = d_gate_out
                    .iter()
                    .zip(&cache.gate_pre)
                    .map(|(d, &a)| d * silu_grad(a))
                    .collect();
                let d_lin_pre = d_lin_out;

                accumulate_outer(&cache.projected_input, &d_gate_pre, &mut grads.w);
                accumulate_outer(&cache.projected_input, &d_lin_pre, &mut grads.v);

                // Both projections consume the normalized input.
                let mut d_xn = vec![0.0; self.input_dim];
                for (k, d) in d_xn.iter_mut().enumerate() {
                    let wrow = self.w.row(k);
                    let vrow = self.v.row(k);
                    let mut acc = 0.0;
                    for j in 0..h {
                        acc += wrow[j] * d_gate_pre[j] + vrow[j] * d_lin_pre[j];
                    }
                    *d = acc;
                }
                let stage = cache
                    .input_norm
                    .as_ref()
                    .ok_or_else(|| Error::InvalidState("cache missing input norm".into()))?;
                stage.backward(&d_xn, input, &mut g_input.scale, &mut g_input.shift);
            }
            _ => {
                return Err(Error::InvalidState(
                    "gradient norm variant does not match model".into(),
                ))
            }
        }
        Ok(())
    }

    /// Convenience wrapper returning freshly allocated gradients.
    pub fn backward(&self, cache: &ForwardCache, dloss_dout: f64) -> Result<Gradients> {
        let mut grads = Gradients::zeros_like(self);
        self.backward_into(cache, dloss_dout, &mut grads)?;
        Ok(grads)
    }

    /// Writes the model as a line-oriented text file. Values are printed in
    /// the shortest decimal form that parses back bit-exactly, so a reloaded
    /// model reproduces eval outputs exactly.
    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{MODEL_MAGIC}")?;
        writeln!(w, "input_dim {}", self.input_dim)?;
        writeln!(w, "hidden_dim {}", self.hidden_dim)?;
        writeln!(w, "norm {}", self.placement().as_str())?;
        for (name, data) in self.param_blocks() {
            let (rows, cols) = self.block_shape(name);
            writeln!(w, "block {name} {rows} {cols}")?;
            for r in 0..rows {
                let row = &data[r * cols..(r + 1) * cols];
                let line: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
                writeln!(w, "{}", line.join(" "))?;
            }
        }
        Ok(())
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_text(std::io::BufWriter::new(file))
    }

    fn block_shape(&self, name: &str) -> (usize, usize) {
        match name {
            "w" | "v" => (self.input_dim, self.hidden_dim),
            "ln_in_scale" | "ln_in_shift" => (1, self.input_dim),
            _ => (1, self.hidden_dim),
        }
    }

    pub fn read_text<R: BufRead>(reader: R) -> Result<Self> {
        let mut lines = reader.lines();
        let mut next_line = || -> Result<String> {
            lines
                .next()
                .ok_or_else(|| Error::Parse("model file truncated".into()))?
                .map_err(Error::Io)
        };
        let magic = next_line()?;
        if magic.trim() != MODEL_MAGIC {
            return Err(Error::Parse(format!("bad model header {magic:?}")));
        }
        let input_dim = parse_kv(&next_line()?, "input_dim")?;
        let hidden_dim = parse_kv(&next_line()?, "hidden_dim")?;
        let norm_line = next_line()?;
        let placement = NormPlacement::parse(
            norm_line
                .trim()
                .strip_prefix("norm ")
                .ok_or_else(|| Error::Parse(format!("expected `norm`, got {norm_line:?}")))?,
        )?;

        let mut model = MlpModel::init(input_dim, hidden_dim, placement, 0)?;
        let expected: Vec<(&'static str, usize, usize)> = model
            .param_blocks()
            .iter()
            .map(|(name, _)| {
                let (r, c) = model.block_shape(name);
                (*name, r, c)
            })
            .collect();

        for (name, rows, cols) in expected {
            let header = next_line()?;
            let want = format!("block {name} {rows} {cols}");
            if header.trim() != want {
                return Err(Error::Parse(format!("expected {want:?}, got {header:?}")));
            }
            let mut values = Vec::with_capacity(rows * cols);
            for _ in 0..rows {
                let line = next_line()?;
                for tok in line.split_whitespace() {
                    let v: f64 = tok.parse().map_err(|_| {
                        Error::Parse(format!("bad value {tok:?} in block {name}"))
                    })?;
                    values.push(v);
                }
            }
            if values.len() != rows * cols {
                return Err(Error::Parse(format!(
                    "block {name} has {} values, expected {}",
                    values.len(),
                    rows * cols
                )));
            }
            for (_, slice) in model
                .param_blocks_mut()
                .into_iter()
                .filter(|(n, _)| *n == name)
            {
                slice.copy_from_slice(&values);
            }
        }
        if !model.is_finite() {
            return Err(Error::Parse("model contains non-finite values".into()));
        }
        Ok(model)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read_text(std::io::BufReader::new(file))
    }
}

const MODEL_MAGIC: &str = "beamdoa-model v1";

fn parse_kv(line: &str, key: &str) -> Result<usize> {
    let rest = line
        .trim()
        .strip_prefix(key)
        .ok_or_else(|| Error::Parse(format!("expected `{key}`, got {line:?}")))?;
    rest.trim()
        .parse()
        .map_err(|_| Error::Parse(format!("bad value in {line:?}")))
}

/// `out[j] = sum_k x[k] * m[k, j]` for a row-major `len(x) x h` matrix.
fn mat_vec_left(x: &[f64], m: &Matrix, h: usize) -> Vec<f64> {
    let mut out = vec![0.0; h];
    for (k, &xk) in x.iter().enumerate() {
        let row = m.row(k);
        for j in 0..h {
            out[j] += xk * row[j];
        }
    }
    out
}

/// `grads[k, j] += x[k] * d[j]`.
fn accumulate_outer(x: &[f64], d: &[f64], grads: &mut Matrix) {
    for (k, &xk) in x.iter().enumerate() {
        let row = grads.row_mut(k);
        for (g, &dj) in row.iter_mut().zip(d) {
            *g += xk * dj;
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Normalization intermediates needed for the backward pass.
#[derive(Debug, Clone)]
struct NormStage {
    normalized: Vec<f64>,
    inv_std: f64,
}

impl NormStage {
    fn compute(x: &[f64]) -> Result<Self> {
        if x.len() < 2 {
            return Err(Error::invalid_argument(
                "layer norm needs at least 2 entries",
            ));
        }
        let n = x.len() as f64;
        let mean = x.iter().sum::<f64>() / n;
        let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let inv_std = 1.0 / (var + LAYER_NORM_EPS).sqrt();
        Ok(NormStage {
            normalized: x.iter().map(|v| (v - mean) * inv_std).collect(),
            inv_std,
        })
    }

    fn affine_output(&self, affine: &LayerNormAffine) -> Vec<f64> {
        self.normalized
            .iter()
            .zip(affine.scale.iter().zip(&affine.shift))
            .map(|(&n, (&sc, &sh))| sc * n + sh)
            .collect()
    }

    /// Backward through affine + normalization. Accumulates affine gradients
    /// and returns the gradient with respect to the stage input.
    fn backward(
        &self,
        d_out: &[f64],
        affine: &LayerNormAffine,
        g_scale: &mut [f64],
        g_shift: &mut [f64],
    ) -> Vec<f64> {
        let n = self.normalized.len() as f64;
        let mut d_norm = vec![0.0; self.normalized.len()];
        for j in 0..self.normalized.len() {
            g_scale[j] += d_out[j] * self.normalized[j];
            g_shift[j] += d_out[j];
            d_norm[j] = d_out[j] * affine.scale[j];
        }
        let mean_d = d_norm.iter().sum::<f64>() / n;
        let mean_dn = d_norm
            .iter()
            .zip(&self.normalized)
            .map(|(d, y)| d * y)
            .sum::<f64>()
            / n;
        d_norm
            .iter()
            .zip(&self.normalized)
            .map(|(&d, &y)| self.inv_std * (d - mean_d - y * mean_dn))
            .collect()
    }
}

/// `(x - mean) / sqrt(var + eps)`, then the affine. The pre-affine output
/// has zero mean and unit variance.
pub fn layer_norm(x: &[f64], scale: &[f64], shift: &[f64]) -> Result<Vec<f64>> {
    if scale.len() != x.len() || shift.len() != x.len() {
        return Err(Error::invalid_argument(
            "layer norm affine dims must match input",
        ));
    }
    let stage = NormStage::compute(x)?;
    let affine = LayerNormAffine {
        scale: scale.to_vec(),
        shift: shift.to_vec(),
    };
    Ok(stage.affine_output(&affine))
}

/// Intermediates of one forward pass, consumed by [`MlpModel::backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    x: Vec<f64>,
    /// Normalized input under `InputOnly`, otherwise the raw input.
    projected_input: Vec<f64>,
    input_norm: Option<NormStage>,
    gate_pre: Vec<f64>,
    gate_norm: Option<NormStage>,
    gate_out: Vec<f64>,
    lin_norm: Option<NormStage>,
    lin_out: Vec<f64>,
    mask: Option<Vec<f64>>,
    dropped: Vec<f64>,
    pub output: f64,
}

/// Parameter-shaped gradient (or moment) buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub w: Matrix,
    pub v: Matrix,
    pub w2: Vec<f64>,
    pub norm: NormParams,
}

impl Gradients {
    pub fn zeros_like(model: &MlpModel) -> Self {
        Gradients {
            w: Matrix::zeros(model.input_dim, model.hidden_dim),
            v: Matrix::zeros(model.input_dim, model.hidden_dim),
            w2: vec![0.0; model.hidden_dim],
            norm: NormParams::zeros_like(&model.norm),
        }
    }

    pub fn matches(&self, model: &MlpModel) -> bool {
        self.w.rows() == model.input_dim
            && self.w.cols() == model.hidden_dim
            && self.w2.len() == model.hidden_dim
            && self.norm.placement() == model.placement()
    }

    pub fn param_blocks(&self) -> Vec<(&'static str, &[f64])> {
        let mut blocks = vec![
            ("w", self.w.data()),
            ("v", self.v.data()),
            ("w2", self.w2.as_slice()),
        ];
        match &self.norm {
            NormParams::PerBranch { gate, lin } => {
                blocks.push(("ln_gate_scale", gate.scale.as_slice()));
                blocks.push(("ln_gate_shift", gate.shift.as_slice()));
                blocks.push(("ln_lin_scale", lin.scale.as_slice()));
                blocks.push(("ln_lin_shift", lin.shift.as_slice()));
            }
            NormParams::InputOnly { input } => {
                blocks.push(("ln_in_scale", input.scale.as_slice()));
                blocks.push(("ln_in_shift", input.shift.as_slice()));
            }
        }
        blocks
    }

    pub fn param_blocks_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        let mut blocks = vec![
            ("w", self.w.data_mut()),
            ("v", self.v.data_mut()),
            ("w2", self.w2.as_mut_slice()),
        ];
        match &mut self.norm {
            NormParams::PerBranch { gate, lin } => {
                blocks.push(("ln_gate_scale", gate.scale.as_mut_slice()));
                blocks.push(("ln_gate_shift", gate.shift.as_mut_slice()));
                blocks.push(("ln_lin_scale", lin.scale.as_mut_slice()));
                blocks.push(("ln_lin_shift", lin.shift.as_mut_slice()));
            }
            NormParams::InputOnly { input } => {
                blocks.push(("ln_in_scale", input.scale.as_mut_slice()));
                blocks.push(("ln_in_shift", input.shift.as_mut_slice()));
            }
        }
        blocks
    }

    pub fn scale(&mut self, s: f64) {
        for (_, slice) in self.param_blocks_mut() {
            for v in slice {
                *v *= s;
            }
        }
    }

    /// Adds the gradient of `coeff * sum(weight^2)` over the weight matrices
    /// (norm affines are not regularized).
    pub fn add_l2(&mut self, model: &MlpModel, coeff: f64) {
        if coeff == 0.0 {
            return;
        }
        let pairs = [
            (self.w.data_mut(), model.w.data()),
            (self.v.data_mut(), model.v.data()),
            (self.w2.as_mut_slice(), model.w2.as_slice()),
        ];
        for (g, p) in pairs {
            for (gv, &pv) in g.iter_mut().zip(p) {
                *gv += 2.0 * coeff * pv;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.param_blocks()
            .iter()
            .all(|(_, s)| s.iter().all(|v| v.is_finite()))
    }
}

/// Mean of squared differences.
pub fn mse_loss(pred: &[f64], target: &[f64]) -> Result<f64> {
    if pred.len() != target.len() || pred.is_empty() {
        return Err(Error::invalid_argument(
            "mse inputs must be non-empty and equal length",
        ));
    }
    Ok(pred
        .iter()
        .zip(target)
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / pred.len() as f64)
}

/// Total objective and its exact gradients for one batch:
/// `mean((pred - target)^2) + l2_coeff * sum(weight^2)`.
pub fn batch_loss_and_grads(
    model: &MlpModel,
    inputs: &[Vec<f64>],
    targets: &[f64],
    dropout_rate: f64,
    l2_coeff: f64,
    rng: &mut ChaCha8Rng,
) -> Result<(f64, Gradients)> {
    if inputs.is_empty() || inputs.len() != targets.len() {
        return Err(Error::invalid_argument(
            "batch inputs and targets must be non-empty and equal length",
        ));
    }
    let n = inputs.len() as f64;
    let mut grads = Gradients::zeros_like(model);
    let mut preds = Vec::with_capacity(inputs.len());
    for (x, &t) in inputs.iter().zip(targets) {
        let (pred, cache) = model.forward_train(x, dropout_rate, rng)?;
        preds.push(pred);
        model.backward_into(&cache, 2.0 * (pred - t) / n, &mut grads)?;
    }
    let mut loss = mse_loss(&preds, targets)?;
    loss += l2_coeff * model.weight_sq_norm();
    grads.add_l2(model, l2_coeff);
    Ok((loss, grads))
}

/// Adam moment accumulators plus step counter.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    first: Gradients,
    second: Gradients,
    pub step: u64,
}

impl OptimizerState {
    pub fn new(model: &MlpModel, beta1: f64, beta2: f64, eps: f64) -> Self {
        OptimizerState {
            beta1,
            beta2,
            eps,
            first: Gradients::zeros_like(model),
            second: Gradients::zeros_like(model),
            step: 0,
        }
    }
}

/// One bias-corrected Adam update.
pub fn adam_step(
    model: &mut MlpModel,
    grads: &Gradients,
    state: &mut OptimizerState,
    lr: f64,
) -> Result<()> {
    if !grads.matches(model) || !state.first.matches(model) {
        return Err(Error::InvalidState(
            "optimizer state or gradients do not match model".into(),
        ));
    }
    if !grads.is_finite() {
        return Err(Error::NumericFault("non-finite gradients".into()));
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);
    let (b1, b2, eps) = (state.beta1, state.beta2, state.eps);

    let mut params = model.param_blocks_mut();
    let g_blocks = grads.param_blocks();
    let mut m_blocks = state.first.param_blocks_mut();
    let mut v_blocks = state.second.param_blocks_mut();
    for i in 0..params.len() {
        let p = &mut params[i].1;
        let g = g_blocks[i].1;
        let m = &mut m_blocks[i].1;
        let v = &mut v_blocks[i].1;
        for j in 0..g.len() {
            m[j] = b1 * m[j] + (1.0 - b1) * g[j];
            v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
            let m_hat = m[j] / bc1;
            let v_hat = v[j] / bc2;
            p[j] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

/// Optimization hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainHyper {
    pub batch_size: usize,
    pub total_iters: usize,
    pub lr_start: f64,
    pub lr_end: f64,
    pub l2_coeff: f64,
    pub dropout_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub hidden_dim: usize,
    pub norm_placement: NormPlacement,
}

impl Default for TrainHyper {
    fn default() -> Self {
        TrainHyper {
            batch_size: 256,
            total_iters: 3750,
            lr_start: 0.1,
            lr_end: 0.01,
            l2_coeff: 1e-5,
            dropout_rate: 0.7,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            hidden_dim: 384,
            norm_placement: NormPlacement::PerBranch,
        }
    }
}

impl TrainHyper {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 1 {
            return Err(Error::invalid_argument("batch_size must be >= 1"));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::invalid_argument("dropout_rate must be in [0, 1)"));
        }
        if !(self.lr_start >= self.lr_end && self.lr_end > 0.0) {
            return Err(Error::invalid_argument(
                "learning rates must satisfy lr_start >= lr_end > 0",
            ));
        }
        if self.l2_coeff < 0.0 {
            return Err(Error::invalid_argument("l2_coeff must be >= 0"));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return Err(Error::invalid_argument("adam betas must be in [0, 1)"));
        }
        if !(self.adam_eps > 0.0) {
            return Err(Error::invalid_argument("adam_eps must be > 0"));
        }
        if self.hidden_dim < 1 {
            return Err(Error::invalid_argument("hidden_dim must be >= 1"));
        }
        Ok(())
    }
}

/// Linear interpolation from `lr_start` at iteration 0 to `lr_end` at
/// `total_iters`. Out-of-range iterations clamp with a warning.
pub fn lr_schedule(iter: usize, hyper: &TrainHyper) -> f64 {
    if hyper.total_iters == 0 {
        return hyper.lr_start;
    }
    let clamped = iter.min(hyper.total_iters);
    if clamped != iter {
        log::warn!(
            "lr_schedule iteration {iter} beyond total_iters {}; clamping",
            hyper.total_iters
        );
    }
    let frac = clamped as f64 / hyper.total_iters as f64;
    hyper.lr_start + (hyper.lr_end - hyper.lr_start) * frac
}
