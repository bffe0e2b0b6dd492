use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::losses::{total_loss, GaussianEmbedding, LossBreakdown};
use super::{positional_encode_into, Mode, ModelConfig};
use crate::autodiff::{Graph, Tensor, Var};
use crate::error::{Error, Result};
use crate::pendulum::State;
use crate::rng::Rng;

/// Standardization of the angular velocities; angles pass through unchanged.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub omega_mean: [f64; 2],
    pub omega_std: [f64; 2],
}

impl Default for Normalizer {
    fn default() -> Self {
        Normalizer {
            omega_mean: [0.0; 2],
            omega_std: [1.0; 2],
        }
    }
}

impl Normalizer {
    pub fn fit<'a>(states: impl IntoIterator<Item = &'a State>) -> Self {
        let (mut n, mut sum, mut sq) = (0usize, [0.0; 2], [0.0; 2]);
        for s in states {
            n += 1;
            for (k, w) in [s.omega1, s.omega2].into_iter().enumerate() {
                sum[k] += w;
                sq[k] += w * w;
            }
        }
        if n == 0 {
            return Normalizer::default();
        }
        let mut out = Normalizer::default();
        for k in 0..2 {
            let mean = sum[k] / n as f64;
            let var = (sq[k] / n as f64 - mean * mean).max(0.0);
            out.omega_mean[k] = mean;
            out.omega_std[k] = if var > 0.0 { var.sqrt() } else { 1.0 };
        }
        out
    }

    /// Network-ready variables in state order.
    pub fn apply(&self, s: &State) -> [f64; 4] {
        [
            s.theta1,
            (s.omega1 - self.omega_mean[0]) / self.omega_std[0],
            s.theta2,
            (s.omega2 - self.omega_mean[1]) / self.omega_std[1],
        ]
    }
}

/// Named trainable tensors in a fixed order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore {
    pub names: Vec<String>,
    pub tensors: Vec<Tensor>,
}

impl ParamStore {
    pub fn n_values(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }
}

#[derive(Debug, Clone)]
struct Linear {
    weight: usize,
    bias: usize,
}

/// Hidden layers (each followed by a leaky ReLU) then a linear output.
#[derive(Debug, Clone)]
struct Mlp {
    hidden: Vec<Linear>,
    out: Linear,
}

#[derive(Debug, Clone)]
struct BottleneckEncoder {
    hidden: Vec<Linear>,
    mean: Linear,
    log_var: Linear,
}

/// Parameter layout under construction: names, shapes, and init scales.
struct Layout {
    names: Vec<String>,
    shapes: Vec<Vec<usize>>,
    scales: Vec<f64>,
}

impl Layout {
    /// `U(-s/√fan_in, s/√fan_in)` weights; the bias shares the bound unless zeroed.
    fn linear(&mut self, name: &str, fan_in: usize, fan_out: usize, scale: f64, zero_bias: bool) -> Linear {
        let bound = scale / (fan_in as f64).sqrt();
        self.names.push(format!("{name}.weight"));
        self.shapes.push(vec![fan_in, fan_out]);
        self.scales.push(bound);
        self.names.push(format!("{name}.bias"));
        self.shapes.push(vec![fan_out]);
        self.scales.push(if zero_bias { 0.0 } else { bound });
        Linear {
            weight: self.names.len() - 2,
            bias: self.names.len() - 1,
        }
    }

    fn stack(&mut self, name: &str, input: usize, widths: &[usize]) -> (Vec<Linear>, usize) {
        let mut prev = input;
        let layers = widths
            .iter()
            .enumerate()
            .map(|(i, &w)| {
                let l = self.linear(&format!("{name}.{i}"), prev, w, 1.0, false);
                prev = w;
                l
            })
            .collect();
        (layers, prev)
    }
}

// Init scale of the log-variance head relative to fan-in scaling.
const LOG_VAR_INIT_SCALE: f64 = 0.01;

/// Present-side bottleneck stack plus future-state encoder.
#[derive(Debug, Clone)]
pub struct Model {
    pub config: ModelConfig,
    pub normalizer: Normalizer,
    pub params: ParamStore,
    encoders: Vec<BottleneckEncoder>,
    shared: Mlp,
    future: Mlp,
    init_scales: Vec<f64>,
}

/// Handles of the objective's pieces inside a graph.
#[derive(Debug, Clone)]
pub struct ObjectiveVars {
    pub loss: Var,
    /// Batch-mean KL of each bottleneck.
    pub kl: Vec<Var>,
    /// Batch-mean InfoNCE loss.
    pub infonce: Var,
    pub shared: Var,
    pub future: Var,
}

/// Output of a present-side encoding pass.
#[derive(Debug, Clone)]
pub struct Encoded {
    /// `[n, shared_dim]` shared-space vectors.
    pub shared: Tensor,
    /// Per state: one posterior per bottleneck.
    pub posteriors: Vec<Vec<GaussianEmbedding>>,
}

impl Model {
    fn build(config: &ModelConfig) -> (Layout, Vec<BottleneckEncoder>, Mlp, Mlp) {
        let mut layout = Layout {
            names: vec![],
            shapes: vec![],
            scales: vec![],
        };
        let w = config.pe_width();
        let (enc_in, prefix) = match config.mode {
            Mode::Ib => (4 * w, vec!["present".to_string()]),
            Mode::Dib => (w, State::NAMES.iter().map(|n| format!("present.{n}")).collect()),
        };
        let encoders = prefix
            .iter()
            .map(|p| {
                let (hidden, last) = layout.stack(&format!("{p}.hidden"), enc_in, &config.encoder_widths);
                let mean = layout.linear(&format!("{p}.mean"), last, config.bottleneck_dim, 1.0, false);
                // Small weights and zero bias keep σ ≈ 1 at init.
                let log_var = layout.linear(&format!("{p}.log_var"), last, config.bottleneck_dim, LOG_VAR_INIT_SCALE, true);
                BottleneckEncoder { hidden, mean, log_var }
            })
            .collect::<Vec<_>>();
        let shared_in = config.bottleneck_dim * encoders.len();
        let (hidden, last) = layout.stack("shared.hidden", shared_in, &config.shared_widths);
        let out = layout.linear("shared.out", last, config.shared_dim, 1.0, false);
        let shared = Mlp { hidden, out };
        let (hidden, last) = layout.stack("future.hidden", 4 * w, &config.future_widths);
        let out = layout.linear("future.out", last, config.shared_dim, 1.0, false);
        let future = Mlp { hidden, out };
        (layout, encoders, shared, future)
    }

    /// Fresh model with symmetric uniform fan-in initialization.
    pub fn init(config: ModelConfig, normalizer: Normalizer, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let (layout, encoders, shared, future) = Model::build(&config);
        let tensors = layout
            .shapes
            .iter()
            .zip(&layout.scales)
            .map(|(shape, &bound)| {
                let n: usize = shape.iter().product();
                let data = (0..n)
                    .map(|_| if bound > 0.0 { rng.random_range(-bound..bound) } else { 0.0 })
                    .collect();
                Tensor::new(shape.clone(), data)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Model {
            config,
            normalizer,
            params: ParamStore {
                names: layout.names,
                tensors,
            },
            encoders,
            shared,
            future,
            init_scales: layout.scales,
        })
    }

    /// Rebuild a model around stored parameter values.
    pub fn from_parts(config: ModelConfig, normalizer: Normalizer, names: Vec<String>, tensors: Vec<Tensor>) -> Result<Self> {
        config.validate()?;
        let (layout, encoders, shared, future) = Model::build(&config);
        if names != layout.names {
            return Err(Error::Format(format!(
                "parameter names do not match the {} architecture",
                config.mode
            )));
        }
        for (t, shape) in tensors.iter().zip(&layout.shapes) {
            if t.shape() != shape.as_slice() {
                return Err(Error::ShapeMismatch {
                    op: "load parameters",
                    lhs: shape.clone(),
                    rhs: t.shape().to_vec(),
                });
            }
        }
        Ok(Model {
            config,
            normalizer,
            params: ParamStore { names, tensors },
            encoders,
            shared,
            future,
            init_scales: layout.scales,
        })
    }

    pub fn mode(&self) -> Mode {
        self.config.mode
    }

    pub fn n_bottlenecks(&self) -> usize {
        self.encoders.len()
    }

    /// Initialization bound of every parameter tensor.
    pub fn init_scales(&self) -> &[f64] {
        &self.init_scales
    }

    /// Encoded features of the whole state, `[n, 4·pe_width]`.
    pub fn full_features(&self, states: &[State]) -> Tensor {
        let w = 4 * self.config.pe_width();
        let mut data = Vec::with_capacity(states.len() * w);
        for s in states {
            for x in self.normalizer.apply(s) {
                positional_encode_into(x, &self.config.pe_frequencies, &mut data);
            }
        }
        Tensor::matrix(states.len(), w, data).expect("feature shape")
    }

    /// Inputs of each bottleneck encoder.
    pub fn present_features(&self, states: &[State]) -> Vec<Tensor> {
        match self.config.mode {
            Mode::Ib => vec![self.full_features(states)],
            Mode::Dib => (0..4)
                .map(|k| {
                    let w = self.config.pe_width();
                    let mut data = Vec::with_capacity(states.len() * w);
                    for s in states {
                        positional_encode_into(self.normalizer.apply(s)[k], &self.config.pe_frequencies, &mut data);
                    }
                    Tensor::matrix(states.len(), w, data).expect("feature shape")
                })
                .collect(),
        }
    }

    /// Standard-normal reparameterization noise, one `[n, bottleneck_dim]`
    /// block per bottleneck.
    pub fn sample_noise(&self, n: usize, rng: &mut Rng) -> Vec<Tensor> {
        let d = self.config.bottleneck_dim;
        (0..self.n_bottlenecks())
            .map(|_| {
                let data = (0..n * d).map(|_| rng.sample(StandardNormal)).collect();
                Tensor::matrix(n, d, data).expect("noise shape")
            })
            .collect()
    }

    pub fn zero_noise(&self, n: usize) -> Vec<Tensor> {
        vec![Tensor::zeros(&[n, self.config.bottleneck_dim]); self.n_bottlenecks()]
    }

    /// Put every parameter on the graph, as trainable leaves or constants.
    pub fn param_vars(&self, g: &mut Graph, trainable: bool) -> Vec<Var> {
        self.params.tensors.iter().map(|t| g.leaf(t.clone(), trainable)).collect()
    }

    fn linear(&self, g: &mut Graph, p: &[Var], l: &Linear, x: Var) -> Result<Var> {
        let y = g.matmul(x, p[l.weight])?;
        g.add_bias(y, p[l.bias])
    }

    fn hidden(&self, g: &mut Graph, p: &[Var], layers: &[Linear], mut x: Var) -> Result<Var> {
        for l in layers {
            let y = self.linear(g, p, l, x)?;
            x = g.leaky_relu(y, self.config.leaky_slope);
        }
        Ok(x)
    }

    /// Posterior `(mean, log_var)` handles for each bottleneck.
    pub fn posterior_vars(&self, g: &mut Graph, p: &[Var], inputs: &[Tensor]) -> Result<Vec<(Var, Var)>> {
        if inputs.len() != self.encoders.len() {
            return Err(Error::DimensionMismatch {
                expected: self.encoders.len(),
                actual: inputs.len(),
            });
        }
        self.encoders
            .iter()
            .zip(inputs)
            .map(|(enc, x)| {
                let x = g.constant(x.clone());
                let h = self.hidden(g, p, &enc.hidden, x)?;
                let mean = self.linear(g, p, &enc.mean, h)?;
                let log_var = self.linear(g, p, &enc.log_var, h)?;
                Ok((mean, log_var))
            })
            .collect()
    }

    /// Sample every posterior, concatenate, and map to the shared space.
    pub fn present_vars(
        &self,
        g: &mut Graph,
        p: &[Var],
        inputs: &[Tensor],
        noise: &[Tensor],
    ) -> Result<(Var, Vec<(Var, Var)>)> {
        let posteriors = self.posterior_vars(g, p, inputs)?;
        if noise.len() != posteriors.len() {
            return Err(Error::DimensionMismatch {
                expected: posteriors.len(),
                actual: noise.len(),
            });
        }
        let samples = posteriors
            .iter()
            .zip(noise)
            .map(|(&(m, lv), e)| g.gaussian_reparameterize(m, lv, e))
            .collect::<Result<Vec<_>>>()?;
        let joined = if samples.len() == 1 { samples[0] } else { g.concat(&samples)? };
        let h = self.hidden(g, p, &self.shared.hidden, joined)?;
        let shared = self.linear(g, p, &self.shared.out, h)?;
        Ok((shared, posteriors))
    }

    pub fn future_vars(&self, g: &mut Graph, p: &[Var], input: &Tensor) -> Result<Var> {
        let x = g.constant(input.clone());
        let h = self.hidden(g, p, &self.future.hidden, x)?;
        self.linear(g, p, &self.future.out, h)
    }

    /// Batch-mean `KL(N(μ, σ²) ‖ N(0, I))` of one bottleneck.
    fn kl_var(g: &mut Graph, mean: Var, log_var: Var) -> Result<Var> {
        let shape = g.value(mean).shape().to_vec();
        let (n, d) = (shape[0], shape[1]);
        let m2 = g.square(mean);
        let ev = g.exp(log_var);
        let t = g.add(m2, ev)?;
        let t = g.sub(t, log_var)?;
        let s = g.sum(t);
        let s = g.add_scalar(s, -((n * d) as f64));
        Ok(g.scale(s, 0.5 / n as f64))
    }

    /// Batch-mean InfoNCE loss between matched rows.
    pub fn infonce_var(g: &mut Graph, u: Var, v: Var, temperature: f64) -> Result<Var> {
        let n = g.value(u).rows();
        let sim = g.neg_sq_dist(u, v)?;
        let logits = g.scale(sim, 1.0 / temperature);
        let targets: Vec<usize> = (0..n).collect();
        let per = g.softmax_cross_entropy_with_logits(logits, &targets)?;
        Ok(g.mean(per))
    }

    /// Record `β·Σ KL + InfoNCE` for a batch of (present, future) pairs.
    pub fn objective(
        &self,
        g: &mut Graph,
        p: &[Var],
        present: &[State],
        future: &[State],
        noise: &[Tensor],
        beta: f64,
    ) -> Result<ObjectiveVars> {
        if present.len() != future.len() {
            return Err(Error::DimensionMismatch {
                expected: present.len(),
                actual: future.len(),
            });
        }
        if present.len() < 2 {
            return Err(Error::OutOfRange("a contrastive batch needs at least 2 pairs".into()));
        }
        let (shared, posteriors) = self.present_vars(g, p, &self.present_features(present), noise)?;
        let fut = self.future_vars(g, p, &self.full_features(future))?;
        let kl = posteriors
            .iter()
            .map(|&(m, lv)| Model::kl_var(g, m, lv))
            .collect::<Result<Vec<_>>>()?;
        let infonce = Model::infonce_var(g, shared, fut, self.config.nce_temperature)?;
        let mut kl_sum = kl[0];
        for &k in &kl[1..] {
            kl_sum = g.add(kl_sum, k)?;
        }
        let weighted = g.scale(kl_sum, beta);
        let loss = g.add(weighted, infonce)?;
        Ok(ObjectiveVars {
            loss,
            kl,
            infonce,
            shared,
            future: fut,
        })
    }

    fn breakdown(&self, g: &Graph, o: &ObjectiveVars, n: usize, beta: f64) -> LossBreakdown {
        let kl: Vec<f64> = o.kl.iter().map(|&k| g.value(k).item()).collect();
        total_loss(&kl, g.value(o.infonce).item(), n, beta)
    }

    /// Objective value and its gradient for every parameter, in store order.
    pub fn loss_and_grads(
        &self,
        present: &[State],
        future: &[State],
        noise: &[Tensor],
        beta: f64,
    ) -> Result<(LossBreakdown, Vec<Tensor>)> {
        let mut g = Graph::new();
        let p = self.param_vars(&mut g, true);
        let o = self.objective(&mut g, &p, present, future, noise, beta)?;
        let grads = g.backward(o.loss)?;
        let out = p
            .iter()
            .zip(&self.params.tensors)
            .map(|(&v, t)| grads.get_or_zeros(v, t.shape()))
            .collect();
        Ok((self.breakdown(&g, &o, present.len(), beta), out))
    }

    /// Objective terms without gradients.
    pub fn evaluate(&self, present: &[State], future: &[State], noise: &[Tensor], beta: f64) -> Result<LossBreakdown> {
        let mut g = Graph::new();
        let p = self.param_vars(&mut g, false);
        let o = self.objective(&mut g, &p, present, future, noise, beta)?;
        Ok(self.breakdown(&g, &o, present.len(), beta))
    }

    /// Posterior of every state under every bottleneck.
    pub fn posteriors(&self, states: &[State]) -> Result<Vec<Vec<GaussianEmbedding>>> {
        let mut g = Graph::new();
        let p = self.param_vars(&mut g, false);
        let post = self.posterior_vars(&mut g, &p, &self.present_features(states))?;
        Ok(collect_posteriors(&g, &post, states.len()))
    }

    /// Present-side pass: shared-space samples and posteriors.
    pub fn encode(&self, states: &[State], noise: &[Tensor]) -> Result<Encoded> {
        let mut g = Graph::new();
        let p = self.param_vars(&mut g, false);
        let (shared, post) = self.present_vars(&mut g, &p, &self.present_features(states), noise)?;
        Ok(Encoded {
            shared: g.value(shared).clone(),
            posteriors: collect_posteriors(&g, &post, states.len()),
        })
    }

    /// Deterministic future-state embedding, `[n, shared_dim]`.
    pub fn encode_future(&self, states: &[State]) -> Result<Tensor> {
        let mut g = Graph::new();
        let p = self.param_vars(&mut g, false);
        let v = self.future_vars(&mut g, &p, &self.full_features(states))?;
        Ok(g.value(v).clone())
    }
}

fn collect_posteriors(g: &Graph, post: &[(Var, Var)], n: usize) -> Vec<Vec<GaussianEmbedding>> {
    (0..n)
        .map(|i| {
            post.iter()
                .map(|&(m, lv)| GaussianEmbedding {
                    mean: g.value(m).row(i).to_vec(),
                    log_var: g.value(lv).row(i).to_vec(),
                })
                .collect()
        })
        .collect()
}
