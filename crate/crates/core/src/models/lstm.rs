//! Stacked LSTM regressor trained by mini-batch gradient descent with
//! backpropagation through time.
//!
//! Gate pre-activations are `z = W [x_t; h_{t-1}] + b`, with the four gate
//! blocks of `W` stacked in the order input, forget, candidate, output:
//!
//! ```text
//! i = sigmoid(z_i)   f = sigmoid(z_f)   g = tanh(z_g)   o = sigmoid(z_o)
//! c_t = f * c_{t-1} + i * g
//! h_t = o * tanh(c_t)
//! ```
//!
//! The last layer's final hidden state feeds a linear head.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SequenceMode {
    /// Each feature is one timestep carrying a scalar input.
    FeatureAsSequence,
    /// The whole row is a single timestep.
    SingleStep,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LstmConfig {
    pub hidden_units: usize,
    pub num_layers: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub sequence_mode: SequenceMode,
}

impl Default for LstmConfig {
    fn default() -> Self {
        Self {
            hidden_units: 8,
            num_layers: 1,
            learning_rate: 0.1,
            batch_size: 16,
            epochs: 60,
            seed: 42,
            sequence_mode: SequenceMode::FeatureAsSequence,
        }
    }
}

impl LstmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_units == 0 || self.num_layers == 0 || self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::Config(
                "hidden_units, num_layers, batch_size and epochs must be positive".into(),
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        Ok(())
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmLayer {
    pub input_dim: usize,
    pub hidden: usize,
    /// `4H x (D + H)`, row-major.
    pub weights: Vec<f64>,
    /// `4H`
    pub bias: Vec<f64>,
}

impl LstmLayer {
    fn zeros(input_dim: usize, hidden: usize) -> Self {
        Self {
            input_dim,
            hidden,
            weights: vec![0.0; 4 * hidden * (input_dim + hidden)],
            bias: vec![0.0; 4 * hidden],
        }
    }

    fn width(&self) -> usize {
        self.input_dim + self.hidden
    }
}

/// Per-timestep values kept for the backward pass.
#[derive(Debug, Clone)]
pub struct StepCache {
    /// `[x_t; h_{t-1}]`
    pub concat: Vec<f64>,
    pub input_gate: Vec<f64>,
    pub forget_gate: Vec<f64>,
    pub candidate: Vec<f64>,
    pub output_gate: Vec<f64>,
    pub cell_prev: Vec<f64>,
    pub cell: Vec<f64>,
    pub hidden: Vec<f64>,
}

/// Forward trace of one sample through every layer.
#[derive(Debug, Clone)]
pub struct Trace {
    pub layers: Vec<Vec<StepCache>>,
    pub output: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmNetwork {
    pub layers: Vec<LstmLayer>,
    pub head_weights: Vec<f64>,
    pub head_bias: f64,
    pub sequence_mode: SequenceMode,
    pub n_features: usize,
}

impl LstmNetwork {
    /// All parameters zero.
    pub fn zeros(n_features: usize, hidden: usize, num_layers: usize, mode: SequenceMode) -> Self {
        let first_dim = match mode {
            SequenceMode::FeatureAsSequence => 1,
            SequenceMode::SingleStep => n_features,
        };
        let layers = (0..num_layers)
            .map(|l| LstmLayer::zeros(if l == 0 { first_dim } else { hidden }, hidden))
            .collect();
        Self {
            layers,
            head_weights: vec![0.0; hidden],
            head_bias: 0.0,
            sequence_mode: mode,
            n_features,
        }
    }

    /// Uniform initialisation in `[-1/sqrt(H), 1/sqrt(H)]` for every parameter.
    pub fn initialised(n_features: usize, cfg: &LstmConfig) -> Self {
        let mut net = Self::zeros(n_features, cfg.hidden_units, cfg.num_layers, cfg.sequence_mode);
        let bound = 1.0 / (cfg.hidden_units as f64).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut params = net.params();
        for p in params.iter_mut() {
            *p = rng.random_range(-bound..=bound);
        }
        net.set_params(&params);
        net
    }

    pub fn n_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum::<usize>()
            + self.head_weights.len()
            + 1
    }

    /// Flattened parameters: per layer weights then bias, then the head.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.bias);
        }
        out.extend_from_slice(&self.head_weights);
        out.push(self.head_bias);
        out
    }

    pub fn set_params(&mut self, params: &[f64]) {
        assert_eq!(params.len(), self.n_params());
        let mut at = 0;
        for l in &mut self.layers {
            let n = l.weights.len();
            l.weights.copy_from_slice(&params[at..at + n]);
            at += n;
            let n = l.bias.len();
            l.bias.copy_from_slice(&params[at..at + n]);
            at += n;
        }
        let n = self.head_weights.len();
        self.head_weights.copy_from_slice(&params[at..at + n]);
        self.head_bias = params[at + n];
    }

    fn sequence(&self, row: &[f64]) -> Vec<Vec<f64>> {
        match self.sequence_mode {
            SequenceMode::FeatureAsSequence => row.iter().map(|&v| vec![v]).collect(),
            SequenceMode::SingleStep => vec![row.to_vec()],
        }
    }

    pub fn forward(&self, row: &[f64]) -> Trace {
        let mut inputs = self.sequence(row);
        let mut layers = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let h = layer.hidden;
            let width = layer.width();
            let mut h_prev = vec![0.0; h];
            let mut c_prev = vec![0.0; h];
            let mut steps = Vec::with_capacity(inputs.len());
            for x_t in &inputs {
                let mut concat = Vec::with_capacity(width);
                concat.extend_from_slice(x_t);
                concat.extend_from_slice(&h_prev);
                let mut z = layer.bias.clone();
                for (r, zr) in z.iter_mut().enumerate() {
                    let w = &layer.weights[r * width..(r + 1) * width];
                    *zr += w.iter().zip(&concat).map(|(a, b)| a * b).sum::<f64>();
                }
                let input_gate: Vec<f64> = z[0..h].iter().map(|&v| sigmoid(v)).collect();
                let forget_gate: Vec<f64> = z[h..2 * h].iter().map(|&v| sigmoid(v)).collect();
                let candidate: Vec<f64> = z[2 * h..3 * h].iter().map(|v| v.tanh()).collect();
                let output_gate: Vec<f64> = z[3 * h..4 * h].iter().map(|&v| sigmoid(v)).collect();
                let cell: Vec<f64> = (0..h)
                    .map(|k| forget_gate[k] * c_prev[k] + input_gate[k] * candidate[k])
                    .collect();
                let hidden: Vec<f64> = (0..h).map(|k| output_gate[k] * cell[k].tanh()).collect();
                h_prev = hidden.clone();
                steps.push(StepCache {
                    concat,
                    input_gate,
                    forget_gate,
                    candidate,
                    output_gate,
                    cell_prev: std::mem::replace(&mut c_prev, cell.clone()),
                    cell,
                    hidden,
                });
            }
            inputs = steps.iter().map(|s| s.hidden.clone()).collect();
            layers.push(steps);
        }
        let last = &layers
            .last()
            .expect("at least one layer")
            .last()
            .expect("at least one step")
            .hidden;
        let output = self.head_weights.iter().zip(last).map(|(w, h)| w * h).sum::<f64>() + self.head_bias;
        Trace { layers, output }
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.forward(row).output
    }

    pub fn predict(&self, x: &Matrix) -> Vec<f64> {
        x.iter_rows().map(|r| self.predict_row(r)).collect()
    }

    /// Accumulate `d_output * d(output)/d(params)` for one sample into `grad`.
    fn backward(&self, trace: &Trace, d_output: f64, grad: &mut [f64]) {
        let head_offset = self.n_params() - self.head_weights.len() - 1;
        let top = trace.layers.last().unwrap();
        let t_last = top.len() - 1;
        let h_last = &top[t_last].hidden;
        for (k, hk) in h_last.iter().enumerate() {
            grad[head_offset + k] += d_output * hk;
        }
        grad[head_offset + self.head_weights.len()] += d_output;

        // Gradient arriving at each timestep's hidden output of the current layer.
        let mut d_hidden_out: Vec<Vec<f64>> = vec![vec![0.0; self.layers.last().unwrap().hidden]; top.len()];
        d_hidden_out[t_last] = self.head_weights.iter().map(|w| d_output * w).collect();

        let mut offsets = Vec::with_capacity(self.layers.len());
        let mut at = 0;
        for l in &self.layers {
            offsets.push(at);
            at += l.weights.len() + l.bias.len();
        }

        for (li, layer) in self.layers.iter().enumerate().rev() {
            let steps = &trace.layers[li];
            let h = layer.hidden;
            let d_in = layer.input_dim;
            let width = layer.width();
            let w_off = offsets[li];
            let b_off = w_off + layer.weights.len();
            let mut d_h_next = vec![0.0; h];
            let mut d_c_next = vec![0.0; h];
            let mut d_inputs = vec![vec![0.0; d_in]; steps.len()];
            let mut dz = vec![0.0; 4 * h];
            for t in (0..steps.len()).rev() {
                let s = &steps[t];
                for k in 0..h {
                    let dh = d_hidden_out[t][k] + d_h_next[k];
                    let tc = s.cell[k].tanh();
                    let d_o = dh * tc;
                    let dc = dh * s.output_gate[k] * (1.0 - tc * tc) + d_c_next[k];
                    let d_i = dc * s.candidate[k];
                    let d_g = dc * s.input_gate[k];
                    let d_f = dc * s.cell_prev[k];
                    d_c_next[k] = dc * s.forget_gate[k];
                    dz[k] = d_i * s.input_gate[k] * (1.0 - s.input_gate[k]);
                    dz[h + k] = d_f * s.forget_gate[k] * (1.0 - s.forget_gate[k]);
                    dz[2 * h + k] = d_g * (1.0 - s.candidate[k] * s.candidate[k]);
                    dz[3 * h + k] = d_o * s.output_gate[k] * (1.0 - s.output_gate[k]);
                }
                let mut d_concat = vec![0.0; width];
                for (r, &dzr) in dz.iter().enumerate() {
                    if dzr == 0.0 {
                        continue;
                    }
                    let w = &layer.weights[r * width..(r + 1) * width];
                    let g = &mut grad[w_off + r * width..w_off + (r + 1) * width];
                    for c in 0..width {
                        g[c] += dzr * s.concat[c];
                        d_concat[c] += dzr * w[c];
                    }
                    grad[b_off + r] += dzr;
                }
                d_inputs[t].copy_from_slice(&d_concat[..d_in]);
                d_h_next.copy_from_slice(&d_concat[d_in..]);
            }
            d_hidden_out = d_inputs;
        }
    }

    /// Mean squared error over the rows and its gradient.
    pub fn loss_and_gradient(&self, x: &Matrix, y: &[f64], rows: &[usize]) -> (f64, Vec<f64>) {
        let mut grad = vec![0.0; self.n_params()];
        let mut loss = 0.0;
        let scale = 1.0 / rows.len() as f64;
        for &i in rows {
            let trace = self.forward(x.row(i));
            let err = trace.output - y[i];
            loss += err * err * scale;
            self.backward(&trace, 2.0 * err * scale, &mut grad);
        }
        (loss, grad)
    }

    pub fn mse(&self, x: &Matrix, y: &[f64]) -> f64 {
        x.iter_rows()
            .zip(y)
            .map(|(r, t)| {
                let e = self.predict_row(r) - t;
                e * e
            })
            .sum::<f64>()
            / y.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lstm {
    pub network: LstmNetwork,
    /// Training-set MSE after each epoch.
    pub loss_history: Vec<f64>,
}

impl Lstm {
    pub fn fit(x: &Matrix, y: &[f64], cfg: &LstmConfig) -> Result<Self> {
        cfg.validate()?;
        if x.rows() != y.len() {
            return Err(Error::Shape(format!("{} rows but {} targets", x.rows(), y.len())));
        }
        if y.len() < cfg.batch_size {
            return Err(Error::Precondition(format!(
                "{} rows is fewer than batch_size = {}",
                y.len(),
                cfg.batch_size
            )));
        }
        if x.cols() == 0 {
            return Err(Error::Precondition("no input features".into()));
        }
        let network = LstmNetwork::initialised(x.cols(), cfg);
        Self::train(network, x, y, cfg)
    }

    /// Continue training from the given parameters.
    pub fn train(mut network: LstmNetwork, x: &Matrix, y: &[f64], cfg: &LstmConfig) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(1);
        let mut order: Vec<usize> = (0..y.len()).collect();
        let mut params = network.params();
        let mut loss_history = Vec::with_capacity(cfg.epochs);
        for epoch in 0..cfg.epochs {
            order.shuffle(&mut rng);
            for batch in order.chunks(cfg.batch_size) {
                let (loss, grad) = network.loss_and_gradient(x, y, batch);
                if !loss.is_finite() {
                    return Err(Error::Diverged { epoch, loss });
                }
                for (p, g) in params.iter_mut().zip(&grad) {
                    *p -= cfg.learning_rate * g;
                }
                network.set_params(&params);
            }
            let loss = network.mse(x, y);
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, loss });
            }
            loss_history.push(loss);
        }
        Ok(Self { network, loss_history })
    }

    pub fn predict(&self, x: &Matrix) -> Vec<f64> {
        self.network.predict(x)
    }
}
