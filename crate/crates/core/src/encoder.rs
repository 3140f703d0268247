//! Feed-forward encoders for the two modalities.
//!
//! Each modality gets its own stack of affine layers with a hidden
//! nonlinearity and a linear output head. The output is the real-valued
//! embedding that is later sign-quantized into a hash code. Gradients are
//! computed analytically; nothing here depends on an autodiff framework.

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::codes::Embedding;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::parallel;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Modality {
    Protein,
    Molecule,
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Modality::Protein => "protein",
            Modality::Molecule => "molecule",
        })
    }
}

impl FromStr for Modality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "protein" => Ok(Modality::Protein),
            "molecule" => Ok(Modality::Molecule),
            _ => Err(Error::InvalidInput(format!(
                "unknown modality {s:?}; expected protein or molecule"
            ))),
        }
    }
}

/// Hidden-layer nonlinearity. The output layer is always linear.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Tanh,
    Relu,
}

impl Activation {
    fn tag(self) -> u8 {
        match self {
            Activation::Identity => 0,
            Activation::Tanh => 1,
            Activation::Relu => 2,
        }
    }

    fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Activation::Identity),
            1 => Some(Activation::Tanh),
            2 => Some(Activation::Relu),
            _ => None,
        }
    }

    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `a`.
    #[inline]
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Tanh => 1.0 - a * a,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Identity => "identity",
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
        })
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" | "linear" => Ok(Activation::Identity),
            "tanh" => Ok(Activation::Tanh),
            "relu" => Ok(Activation::Relu),
            _ => Err(Error::InvalidInput(format!("unknown activation {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderConfig {
    pub protein_dim: usize,
    pub molecule_dim: usize,
    /// Width of the single hidden layer; 0 gives one affine map straight to
    /// the code dimension.
    pub hidden_dim: usize,
    pub code_bits: usize,
    pub activation: Activation,
    pub seed: u64,
}

impl EncoderConfig {
    pub fn new(protein_dim: usize, molecule_dim: usize, hidden_dim: usize, code_bits: usize) -> Self {
        EncoderConfig {
            protein_dim,
            molecule_dim,
            hidden_dim,
            code_bits,
            activation: Activation::Tanh,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.protein_dim == 0 || self.molecule_dim == 0 || self.code_bits == 0 {
            return Err(Error::InvalidInput(format!(
                "encoder dimensions must be positive (protein {}, molecule {}, code {})",
                self.protein_dim, self.molecule_dim, self.code_bits
            )));
        }
        Ok(())
    }

    pub fn input_dim(&self, modality: Modality) -> usize {
        match modality {
            Modality::Protein => self.protein_dim,
            Modality::Molecule => self.molecule_dim,
        }
    }

    fn layer_sizes(&self, modality: Modality) -> Vec<usize> {
        let input = self.input_dim(modality);
        if self.hidden_dim == 0 {
            vec![input, self.code_bits]
        } else {
            vec![input, self.hidden_dim, self.code_bits]
        }
    }
}

/// Affine map `z = W x + b`, with `W` stored row-major as `outputs x inputs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Dense {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    /// Uniform in `[-s, s]` with `s = sqrt(6 / (fan_in + fan_out))`; zero bias.
    fn glorot(inputs: usize, outputs: usize, rng: &mut impl Rng) -> Self {
        let s = glorot_bound(inputs, outputs);
        Dense {
            inputs,
            outputs,
            weights: (0..inputs * outputs).map(|_| rng.random_range(-s..=s)).collect(),
            bias: vec![0.0; outputs],
        }
    }

    fn forward_into(&self, x: &[f64], out: &mut [f64]) {
        for (o, (w, b)) in out
            .iter_mut()
            .zip(self.weights.chunks_exact(self.inputs).zip(&self.bias))
        {
            *o = b + w.iter().zip(x).map(|(wi, xi)| wi * xi).sum::<f64>();
        }
    }
}

pub fn glorot_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// One modality's network. Also used as the container for its gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Dense>,
    pub activation: Activation,
}

struct Trace {
    /// `inputs[l]` is the input of layer `l`; the last entry is the output.
    activations: Vec<Vec<f64>>,
    pre_activations: Vec<Vec<f64>>,
}

impl Mlp {
    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map(|l| l.outputs).unwrap_or(0)
    }

    pub fn zeros_like(&self) -> Self {
        Mlp {
            layers: self
                .layers
                .iter()
                .map(|l| Dense::zeros(l.inputs, l.outputs))
                .collect(),
            activation: self.activation,
        }
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Parameter tensors in storage order: per layer, weights then bias.
    pub fn tensors(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.layers
            .iter()
            .flat_map(|l| [l.weights.as_slice(), l.bias.as_slice()])
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Vec<f64>> + '_ {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weights, &mut l.bias])
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::Shape(format!(
                "feature vector has {} values, encoder expects {}",
                x.len(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    fn forward_unchecked(&self, x: &[f64], out: &mut [f64]) {
        let last = self.layers.len() - 1;
        let mut current = x.to_vec();
        for (l, layer) in self.layers.iter().enumerate() {
            if l == last {
                layer.forward_into(&current, out);
            } else {
                let mut next = vec![0.0; layer.outputs];
                layer.forward_into(&current, &mut next);
                next.iter_mut().for_each(|z| *z = self.activation.apply(*z));
                current = next;
            }
        }
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let mut out = vec![0.0; self.output_dim()];
        self.forward_unchecked(x, &mut out);
        Ok(out)
    }

    fn trace(&self, x: &[f64]) -> Trace {
        let last = self.layers.len() - 1;
        let mut activations = vec![x.to_vec()];
        let mut pre_activations = Vec::with_capacity(self.layers.len());
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = vec![0.0; layer.outputs];
            layer.forward_into(activations.last().unwrap(), &mut z);
            let a = if l == last {
                z.clone()
            } else {
                z.iter().map(|&v| self.activation.apply(v)).collect()
            };
            pre_activations.push(z);
            activations.push(a);
        }
        Trace {
            activations,
            pre_activations,
        }
    }

    /// Adds the gradient of `output . upstream` into `grads` and returns the
    /// gradient with respect to `x`.
    pub fn backward_accumulate(&self, x: &[f64], upstream: &[f64], grads: &mut Mlp) -> Result<Vec<f64>> {
        self.check_input(x)?;
        if upstream.len() != self.output_dim() {
            return Err(Error::Shape(format!(
                "upstream gradient has {} values, encoder outputs {}",
                upstream.len(),
                self.output_dim()
            )));
        }
        let trace = self.trace(x);
        let last = self.layers.len() - 1;
        let mut g = upstream.to_vec();
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            if l != last {
                let z = &trace.pre_activations[l];
                let a = &trace.activations[l + 1];
                for ((gi, zi), ai) in g.iter_mut().zip(z).zip(a) {
                    *gi *= self.activation.derivative(*zi, *ai);
                }
            }
            let input = &trace.activations[l];
            let grad_layer = &mut grads.layers[l];
            for (o, &go) in g.iter().enumerate() {
                if go == 0.0 {
                    continue;
                }
                grad_layer.bias[o] += go;
                let row = &mut grad_layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                for (w, xi) in row.iter_mut().zip(input) {
                    *w += go * xi;
                }
            }
            let mut next = vec![0.0; layer.inputs];
            for (o, &go) in g.iter().enumerate() {
                let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                for (n, w) in next.iter_mut().zip(row) {
                    *n += go * w;
                }
            }
            g = next;
        }
        Ok(g)
    }

    fn add_scaled(&mut self, other: &Mlp, scale: f64) {
        for (a, b) in self.tensors_mut().zip(other.tensors()) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += scale * y);
        }
    }

    fn all_finite(&self) -> bool {
        self.tensors().all(|t| t.iter().all(|v| v.is_finite()))
    }
}

/// Parameters of both encoders. Gradients use the same type.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub config: EncoderConfig,
    pub protein: Mlp,
    pub molecule: Mlp,
}

/// Reproducible initialization from `seed`; protein layers draw first.
pub fn init_params(config: &EncoderConfig, seed: u64) -> Result<EncoderParams> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut build = |modality| {
        let sizes = config.layer_sizes(modality);
        Mlp {
            layers: sizes
                .windows(2)
                .map(|w| Dense::glorot(w[0], w[1], &mut rng))
                .collect(),
            activation: config.activation,
        }
    };
    let protein = build(Modality::Protein);
    let molecule = build(Modality::Molecule);
    let mut config = config.clone();
    config.seed = seed;
    Ok(EncoderParams {
        config,
        protein,
        molecule,
    })
}

impl EncoderParams {
    pub fn init(config: &EncoderConfig) -> Result<Self> {
        init_params(config, config.seed)
    }

    pub fn code_bits(&self) -> usize {
        self.config.code_bits
    }

    pub fn network(&self, modality: Modality) -> &Mlp {
        match modality {
            Modality::Protein => &self.protein,
            Modality::Molecule => &self.molecule,
        }
    }

    pub fn network_mut(&mut self, modality: Modality) -> &mut Mlp {
        match modality {
            Modality::Protein => &mut self.protein,
            Modality::Molecule => &mut self.molecule,
        }
    }

    pub fn zeros_like(&self) -> Self {
        EncoderParams {
            config: self.config.clone(),
            protein: self.protein.zeros_like(),
            molecule: self.molecule.zeros_like(),
        }
    }

    pub fn param_count(&self) -> usize {
        self.protein.param_count() + self.molecule.param_count()
    }

    pub fn tensors(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.protein.tensors().chain(self.molecule.tensors())
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Vec<f64>> + '_ {
        self.protein.tensors_mut().chain(self.molecule.tensors_mut())
    }

    pub fn add_scaled(&mut self, other: &EncoderParams, scale: f64) {
        self.protein.add_scaled(&other.protein, scale);
        self.molecule.add_scaled(&other.molecule, scale);
    }

    pub fn all_finite(&self) -> bool {
        self.protein.all_finite() && self.molecule.all_finite()
    }

    pub fn encode(&self, modality: Modality, x: &[f64]) -> Result<Embedding> {
        Embedding::new(self.network(modality).forward(x)?)
    }

    /// Encodes every row of `xs`. Rows may be split across worker threads;
    /// the result is identical to encoding each row in turn.
    pub fn encode_batch(&self, modality: Modality, xs: &Matrix) -> Result<Matrix> {
        let net = self.network(modality);
        if xs.rows() > 0 && xs.cols() != net.input_dim() {
            return Err(Error::Shape(format!(
                "row 0: feature vector has {} values, {modality} encoder expects {}",
                xs.cols(),
                net.input_dim()
            )));
        }
        let d = net.output_dim();
        let mut out = Matrix::zeros(xs.rows(), d);
        parallel::for_each_row_chunk(out.as_mut_slice(), d, |first_row, chunk| {
            for (r, dst) in chunk.chunks_exact_mut(d).enumerate() {
                net.forward_unchecked(xs.row(first_row + r), dst);
            }
        });
        if let Some(pos) = out.as_slice().iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "row {}: {modality} embedding is not finite",
                pos / d.max(1)
            )));
        }
        Ok(out)
    }

    /// Gradient of `encode(x) . upstream` with respect to the parameters of
    /// `modality`'s network (the other network's gradient is zero) and to `x`.
    pub fn backward(&self, modality: Modality, x: &[f64], upstream: &[f64]) -> Result<(EncoderParams, Vec<f64>)> {
        let mut grads = self.zeros_like();
        let dx = self
            .network(modality)
            .backward_accumulate(x, upstream, grads.network_mut(modality))?;
        Ok((grads, dx))
    }
}

// Checkpoint layout, little-endian throughout:
//   0  magic "DHCK"
//   4  version u16, reserved u16
//   8  protein_dim u32, molecule_dim u32, hidden_dim u32, code_bits u32
//  24  activation u8, 3 reserved bytes
//  28  init seed u64
//  36  parameter count u64
//  44  parameters as f64: protein layers then molecule layers, each layer's
//      weights (row-major, outputs x inputs) followed by its bias.
const CHECKPOINT_MAGIC: &[u8; 4] = b"DHCK";
const CHECKPOINT_VERSION: u16 = 1;
pub const CHECKPOINT_HEADER_LEN: usize = 44;

impl EncoderParams {
    pub fn to_bytes(&self) -> Vec<u8> {
        let c = &self.config;
        let mut out = Vec::with_capacity(CHECKPOINT_HEADER_LEN + 8 * self.param_count());
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&0u16.to_le_bytes());
        for dim in [c.protein_dim, c.molecule_dim, c.hidden_dim, c.code_bits] {
            out.extend_from_slice(&(dim as u32).to_le_bytes());
        }
        out.extend_from_slice(&[c.activation.tag(), 0, 0, 0]);
        out.extend_from_slice(&c.seed.to_le_bytes());
        out.extend_from_slice(&(self.param_count() as u64).to_le_bytes());
        for t in self.tensors() {
            for v in t {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let corrupt = |check, detail: String| Error::CorruptCheckpoint { check, detail };
        if bytes.len() < CHECKPOINT_HEADER_LEN {
            return Err(corrupt("size", format!("{} bytes is shorter than the header", bytes.len())));
        }
        if &bytes[0..4] != CHECKPOINT_MAGIC {
            return Err(corrupt("magic", format!("found {:?}", &bytes[0..4])));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != CHECKPOINT_VERSION {
            return Err(corrupt("version", format!("unsupported version {version}")));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
        let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        let activation = Activation::from_tag(bytes[24])
            .ok_or_else(|| corrupt("activation", format!("unknown tag {}", bytes[24])))?;
        let config = EncoderConfig {
            protein_dim: u32_at(8),
            molecule_dim: u32_at(12),
            hidden_dim: u32_at(16),
            code_bits: u32_at(20),
            activation,
            seed: u64_at(28),
        };
        config
            .validate()
            .map_err(|e| corrupt("dimensions", e.to_string()))?;
        let mut params = init_params(&config, config.seed)?;
        let count = u64_at(36);
        if count != params.param_count() as u64 {
            return Err(corrupt(
                "parameter count",
                format!("header says {count}, dimensions imply {}", params.param_count()),
            ));
        }
        let expected = CHECKPOINT_HEADER_LEN + 8 * params.param_count();
        if bytes.len() != expected {
            return Err(corrupt("size", format!("{} bytes, expected {expected}", bytes.len())));
        }
        let mut values = bytes[CHECKPOINT_HEADER_LEN..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
        for t in params.tensors_mut() {
            for v in t.iter_mut() {
                *v = values.next().unwrap();
            }
        }
        if !params.all_finite() {
            return Err(corrupt("finite", "checkpoint holds non-finite parameters".into()));
        }
        Ok(params)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> EncoderConfig {
        EncoderConfig::new(6, 5, 7, 8)
    }

    fn random_vec(rng: &mut impl Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn zero_params_give_zero_embedding() {
        let params = init_params(&small_config(), 1).unwrap().zeros_like();
        let e = params.encode(Modality::Protein, &[0.5, -1.0, 2.0, 0.0, 3.0, 1.0]).unwrap();
        assert!(e.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let mut config = EncoderConfig::new(4, 4, 0, 4);
        config.activation = Activation::Identity;
        let mut params = init_params(&config, 0).unwrap();
        let layer = &mut params.protein.layers[0];
        layer.weights.iter_mut().for_each(|w| *w = 0.0);
        for i in 0..4 {
            layer.weights[i * 4 + i] = 1.0;
        }
        let x = [0.25, -3.0, 1.5, 0.0];
        assert_eq!(&*params.encode(Modality::Protein, &x).unwrap(), &x);
    }

    #[test]
    fn encode_is_deterministic() {
        let x = [0.1, 0.2, -0.3, 0.4, 0.5, -0.6];
        let a = init_params(&small_config(), 42).unwrap();
        let b = init_params(&small_config(), 42).unwrap();
        let ea = a.encode(Modality::Protein, &x).unwrap();
        let eb = b.encode(Modality::Protein, &x).unwrap();
        assert_eq!(
            ea.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            eb.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn encode_rejects_wrong_width() {
        let p = init_params(&small_config(), 0).unwrap();
        assert!(matches!(p.encode(Modality::Protein, &[1.0; 5]), Err(Error::Shape(_))));
        assert!(p.encode(Modality::Molecule, &[1.0; 5]).is_ok());
    }

    #[test]
    fn batch_matches_sequential() {
        let p = init_params(&small_config(), 9).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let rows: Vec<Vec<f64>> = (0..256).map(|_| random_vec(&mut rng, 6)).collect();
        let batch = p
            .encode_batch(Modality::Protein, &Matrix::from_rows(&rows, 6).unwrap())
            .unwrap();
        for (i, r) in rows.iter().enumerate() {
            assert_eq!(batch.row(i), &*p.encode(Modality::Protein, r).unwrap());
        }
        let single = p
            .encode_batch(Modality::Protein, &Matrix::from_rows(&rows[..1], 6).unwrap())
            .unwrap();
        assert_eq!(single.row(0), batch.row(0));
        // permuting inputs permutes outputs
        let order: Vec<usize> = (0..256).rev().collect();
        let permuted = p
            .encode_batch(
                Modality::Protein,
                &Matrix::from_rows(&rows, 6).unwrap().select_rows(&order),
            )
            .unwrap();
        assert_eq!(permuted, batch.select_rows(&order));
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let p = init_params(&small_config(), 3).unwrap();
        let (g, dx) = p.backward(Modality::Molecule, &[1.0, 2.0, 3.0, 4.0, 5.0], &[0.0; 8]).unwrap();
        assert!(g.tensors().all(|t| t.iter().all(|&v| v == 0.0)));
        assert!(dx.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_linear_layer_gradient_is_outer_product() {
        let mut config = EncoderConfig::new(3, 3, 0, 2);
        config.activation = Activation::Identity;
        let p = init_params(&config, 11).unwrap();
        let x = [0.5, -2.0, 1.0];
        let up = [3.0, -1.5];
        let (g, dx) = p.backward(Modality::Protein, &x, &up).unwrap();
        let layer = &g.protein.layers[0];
        for o in 0..2 {
            for i in 0..3 {
                assert_eq!(layer.weights[o * 3 + i], up[o] * x[i]);
            }
            assert_eq!(layer.bias[o], up[o]);
        }
        let w = &p.protein.layers[0].weights;
        for i in 0..3 {
            assert!((dx[i] - (w[i] * up[0] + w[3 + i] * up[1])).abs() < 1e-15);
        }
    }

    fn finite_difference_check(activation: Activation, seed: u64) {
        let mut config = small_config();
        config.activation = activation;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = init_params(&config, seed).unwrap();
        // non-zero biases so every path is exercised
        for t in p.tensors_mut() {
            t.iter_mut().for_each(|v| *v += rng.random_range(-0.3..0.3));
        }
        for modality in [Modality::Protein, Modality::Molecule] {
            let x = random_vec(&mut rng, config.input_dim(modality));
            let up = random_vec(&mut rng, config.code_bits);
            let objective = |p: &EncoderParams, x: &[f64]| -> f64 {
                let e = p.encode(modality, x).unwrap();
                e.iter().zip(&up).map(|(a, b)| a * b).sum()
            };
            let (grads, dx) = p.backward(modality, &x, &up).unwrap();
            let h = 1e-5;
            let analytic: Vec<f64> = grads.tensors().flat_map(|t| t.to_vec()).collect();
            let mut idx = 0;
            let n_tensors = p.tensors().count();
            for ti in 0..n_tensors {
                let len = p.tensors().nth(ti).unwrap().len();
                for j in 0..len {
                    let mut plus = p.clone();
                    plus.tensors_mut().nth(ti).unwrap()[j] += h;
                    let mut minus = p.clone();
                    minus.tensors_mut().nth(ti).unwrap()[j] -= h;
                    let numeric = (objective(&plus, &x) - objective(&minus, &x)) / (2.0 * h);
                    let a = analytic[idx];
                    let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
                    assert!(rel < 1e-4, "{modality} param {idx}: analytic {a} numeric {numeric}");
                    idx += 1;
                }
            }
            for j in 0..x.len() {
                let mut xp = x.clone();
                xp[j] += h;
                let mut xm = x.clone();
                xm[j] -= h;
                let numeric = (objective(&p, &xp) - objective(&p, &xm)) / (2.0 * h);
                let rel = (dx[j] - numeric).abs() / dx[j].abs().max(numeric.abs()).max(1e-8);
                assert!(rel < 1e-4);
            }
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        for seed in 0..5 {
            finite_difference_check(Activation::Tanh, seed);
            finite_difference_check(Activation::Identity, seed);
        }
    }

    #[test]
    fn init_is_seeded() {
        let a = init_params(&small_config(), 1).unwrap();
        assert_eq!(a, init_params(&small_config(), 1).unwrap());
        assert_ne!(a, init_params(&small_config(), 2).unwrap());
    }

    #[test]
    fn init_weight_spread_matches_glorot_uniform() {
        let config = EncoderConfig::new(100, 100, 100, 128);
        let p = init_params(&config, 17).unwrap();
        let w = &p.protein.layers[0].weights;
        assert_eq!(w.len(), 10_000);
        let mean = w.iter().sum::<f64>() / w.len() as f64;
        let var = w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / w.len() as f64;
        // uniform on [-s, s] has standard deviation s / sqrt(3)
        let target = glorot_bound(100, 100) / 3f64.sqrt();
        assert!((var.sqrt() - target).abs() < 0.2 * target);
        assert!(p.protein.layers[0].bias.iter().all(|&b| b == 0.0));
    }

    #[test]
    fn modalities_are_independent() {
        let p = init_params(&small_config(), 4).unwrap();
        let x = [0.3, -0.1, 0.9, 0.2, -0.7];
        let before = p.encode(Modality::Molecule, &x).unwrap();
        let mut q = p.clone();
        for t in q.protein.tensors_mut() {
            t.iter_mut().for_each(|v| *v *= -3.0);
        }
        assert_eq!(before, q.encode(Modality::Molecule, &x).unwrap());
    }

    #[test]
    fn checkpoint_roundtrip_and_corruption() {
        let p = init_params(&small_config(), 8).unwrap();
        let bytes = p.to_bytes();
        assert_eq!(bytes.len(), CHECKPOINT_HEADER_LEN + 8 * p.param_count());
        assert_eq!(EncoderParams::from_bytes(&bytes).unwrap(), p);

        let truncated = &bytes[..bytes.len() - 1];
        assert!(matches!(
            EncoderParams::from_bytes(truncated),
            Err(Error::CorruptCheckpoint { check: "size", .. })
        ));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(
            EncoderParams::from_bytes(&bad),
            Err(Error::CorruptCheckpoint { check: "magic", .. })
        ));
        let mut bad = bytes;
        bad[4] = 9;
        assert!(matches!(
            EncoderParams::from_bytes(&bad),
            Err(Error::CorruptCheckpoint { check: "version", .. })
        ));
    }
}
