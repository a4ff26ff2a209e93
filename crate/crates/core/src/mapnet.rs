//! The class-name mapping network `g`: linear → ReLU → batch norm → linear
//! (normalization and activation order is switchable), with hand-derived
//! gradients, an Adam optimizer and episodic training against the s2
//! cross-entropy loss.

use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{load_matrix, write_matrix, DataBundle, Section};
use crate::episodes::{episode_rng, sample_episode, Episode};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::prototypes::episode_prototypes;
use crate::scalar::{dot, Real};
use crate::scoring::{cosine, softmax_ce, squared_distance, COSINE_NORM_FLOOR};

pub const DEFAULT_HIDDEN: usize = 512;
pub const DEFAULT_MOMENTUM: f64 = 0.1;
pub const DEFAULT_BN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerOrder {
    /// linear → ReLU → batch norm → linear
    #[default]
    ReluThenNorm,
    /// linear → batch norm → ReLU → linear
    NormThenRelu,
}

/// Parameters and batch-norm state of `g`.
#[derive(Debug, Clone, PartialEq)]
pub struct MapNet<T> {
    /// m_t × h
    pub w1: Matrix<T>,
    pub b1: Vec<T>,
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
    /// h × m_v
    pub w2: Matrix<T>,
    pub b2: Vec<T>,
    pub mode: Mode,
    pub order: LayerOrder,
    pub momentum: T,
    pub bn_eps: T,
}

/// Gradients with the same shapes as the trainable parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct MapNetGrads<T> {
    pub w1: Matrix<T>,
    pub b1: Vec<T>,
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
    pub w2: Matrix<T>,
    pub b2: Vec<T>,
}

impl<T: Real> MapNetGrads<T> {
    pub fn tensors(&self) -> [(&'static str, &[T]); 6] {
        [
            ("w1", self.w1.as_slice()),
            ("b1", &self.b1),
            ("gamma", &self.gamma),
            ("beta", &self.beta),
            ("w2", self.w2.as_slice()),
            ("b2", &self.b2),
        ]
    }
}

/// Per-unit batch statistics from a train-mode forward pass.
#[derive(Debug, Clone)]
pub struct BatchStats<T> {
    pub mean: Vec<T>,
    /// Biased (1/N) variance used for normalization.
    pub var: Vec<T>,
    pub batch: usize,
}

/// Values kept from a train-mode forward pass for backpropagation.
struct Cache<T> {
    input: Matrix<T>,
    pre: Matrix<T>,
    norm_in: Matrix<T>,
    xhat: Matrix<T>,
    inv_std: Vec<T>,
    norm_out: Matrix<T>,
    hidden: Matrix<T>,
}

fn relu<T: Real>(v: T) -> T {
    if v > T::zero() {
        v
    } else {
        T::zero()
    }
}

fn add_bias<T: Real>(m: &mut Matrix<T>, bias: &[T]) {
    for i in 0..m.rows() {
        for (v, &b) in m.row_mut(i).iter_mut().zip(bias) {
            *v += b;
        }
    }
}

fn column_sums<T: Real>(m: &Matrix<T>) -> Vec<T> {
    let mut out = vec![T::zero(); m.cols()];
    for row in m.row_iter() {
        for (o, &v) in out.iter_mut().zip(row) {
            *o += v;
        }
    }
    out
}

impl<T: Real> MapNet<T> {
    /// Weights uniform in `±1/√fan_in`, biases likewise, `γ = 1`, `β = 0`,
    /// running mean 0 and running variance 1.
    pub fn new<R: Rng + ?Sized>(
        text_dim: usize,
        hidden: usize,
        visual_dim: usize,
        rng: &mut R,
    ) -> Self {
        let mut uniform = |fan_in: usize| {
            let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
            T::of(rng.random_range(-bound..=bound))
        };
        let w1 = Matrix::from_fn(text_dim, hidden, |_, _| uniform(text_dim));
        let b1 = (0..hidden).map(|_| uniform(text_dim)).collect();
        let w2 = Matrix::from_fn(hidden, visual_dim, |_, _| uniform(hidden));
        let b2 = (0..visual_dim).map(|_| uniform(hidden)).collect();
        MapNet {
            w1,
            b1,
            gamma: vec![T::one(); hidden],
            beta: vec![T::zero(); hidden],
            running_mean: vec![T::zero(); hidden],
            running_var: vec![T::one(); hidden],
            w2,
            b2,
            mode: Mode::Train,
            order: LayerOrder::default(),
            momentum: T::of(DEFAULT_MOMENTUM),
            bn_eps: T::of(DEFAULT_BN_EPS),
        }
    }

    /// All parameters zero (`γ` included), for tests and as a neutral start.
    pub fn zeros(text_dim: usize, hidden: usize, visual_dim: usize) -> Self {
        MapNet {
            w1: Matrix::zeros(text_dim, hidden),
            b1: vec![T::zero(); hidden],
            gamma: vec![T::zero(); hidden],
            beta: vec![T::zero(); hidden],
            running_mean: vec![T::zero(); hidden],
            running_var: vec![T::one(); hidden],
            w2: Matrix::zeros(hidden, visual_dim),
            b2: vec![T::zero(); visual_dim],
            mode: Mode::Train,
            order: LayerOrder::default(),
            momentum: T::of(DEFAULT_MOMENTUM),
            bn_eps: T::of(DEFAULT_BN_EPS),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w1.rows()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w1.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.w2.cols()
    }

    pub fn set_mode(&mut self, mode: Mode) {
        self.mode = mode;
    }

    fn check_input(&self, x: &Matrix<T>) -> Result<()> {
        if x.cols() != self.input_dim() {
            return Err(Error::dims(
                "mapping network input",
                self.input_dim(),
                x.cols(),
            ));
        }
        Ok(())
    }

    /// Forward pass in the current mode. In train mode the batch statistics
    /// normalize the batch and update the running statistics.
    pub fn forward(&mut self, x: &Matrix<T>) -> Result<Matrix<T>> {
        match self.mode {
            Mode::Eval => self.forward_eval(x),
            Mode::Train => {
                let (out, _, stats) = self.forward_train(x)?;
                self.update_running_stats(&stats);
                Ok(out)
            }
        }
    }

    /// Evaluation-mode forward using the running statistics; never mutates.
    pub fn forward_eval(&self, x: &Matrix<T>) -> Result<Matrix<T>> {
        self.check_input(x)?;
        if x.rows() == 0 {
            return Err(Error::InvalidInput("empty batch".into()));
        }
        let mut pre = x.matmul(&self.w1)?;
        add_bias(&mut pre, &self.b1);
        let h = self.hidden_dim();
        let scale: Vec<T> = (0..h)
            .map(|j| self.gamma[j] / (self.running_var[j] + self.bn_eps).sqrt())
            .collect();
        let mut hidden = pre;
        for i in 0..hidden.rows() {
            for (j, v) in hidden.row_mut(i).iter_mut().enumerate() {
                let norm_in = match self.order {
                    LayerOrder::ReluThenNorm => relu(*v),
                    LayerOrder::NormThenRelu => *v,
                };
                let y = (norm_in - self.running_mean[j]) * scale[j] + self.beta[j];
                *v = match self.order {
                    LayerOrder::ReluThenNorm => y,
                    LayerOrder::NormThenRelu => relu(y),
                };
            }
        }
        let mut out = hidden.matmul(&self.w2)?;
        add_bias(&mut out, &self.b2);
        Ok(out)
    }

    /// Train-mode forward without touching the running statistics.
    pub fn forward_batch_stats(&self, x: &Matrix<T>) -> Result<Matrix<T>> {
        self.forward_train(x).map(|(out, _, _)| out)
    }

    fn forward_train(&self, x: &Matrix<T>) -> Result<(Matrix<T>, Cache<T>, BatchStats<T>)> {
        self.check_input(x)?;
        let n = x.rows();
        if n < 2 {
            return Err(Error::InvalidInput(format!(
                "train-mode batch normalization needs a batch of at least 2, got {n}"
            )));
        }
        let mut pre = x.matmul(&self.w1)?;
        add_bias(&mut pre, &self.b1);
        let norm_in = match self.order {
            LayerOrder::ReluThenNorm => pre.map(relu),
            LayerOrder::NormThenRelu => pre.clone(),
        };
        let nf = T::from_count(n);
        let mean: Vec<T> = column_sums(&norm_in).into_iter().map(|s| s / nf).collect();
        let h = self.hidden_dim();
        let mut var = vec![T::zero(); h];
        for row in norm_in.row_iter() {
            for j in 0..h {
                let d = row[j] - mean[j];
                var[j] += d * d;
            }
        }
        var.iter_mut().for_each(|v| *v /= nf);
        let inv_std: Vec<T> = var
            .iter()
            .map(|&v| T::one() / (v + self.bn_eps).sqrt())
            .collect();
        let xhat = Matrix::from_fn(n, h, |i, j| (norm_in[(i, j)] - mean[j]) * inv_std[j]);
        let norm_out = Matrix::from_fn(n, h, |i, j| self.gamma[j] * xhat[(i, j)] + self.beta[j]);
        let hidden = match self.order {
            LayerOrder::ReluThenNorm => norm_out.clone(),
            LayerOrder::NormThenRelu => norm_out.map(relu),
        };
        let mut out = hidden.matmul(&self.w2)?;
        add_bias(&mut out, &self.b2);
        let cache = Cache {
            input: x.clone(),
            pre,
            norm_in,
            xhat,
            inv_std,
            norm_out,
            hidden,
        };
        Ok((
            out,
            cache,
            BatchStats {
                mean,
                var,
                batch: n,
            },
        ))
    }

    /// Exponential moving average update with the unbiased batch variance.
    pub fn update_running_stats(&mut self, stats: &BatchStats<T>) {
        let m = self.momentum;
        let keep = T::one() - m;
        let nf = T::from_count(stats.batch);
        let unbias = nf / (nf - T::one());
        for j in 0..self.hidden_dim() {
            self.running_mean[j] = keep * self.running_mean[j] + m * stats.mean[j];
            self.running_var[j] = keep * self.running_var[j] + m * stats.var[j] * unbias;
        }
    }

    fn backward(&self, cache: &Cache<T>, d_out: &Matrix<T>) -> Result<MapNetGrads<T>> {
        let n = cache.input.rows();
        let h = self.hidden_dim();
        let w2 = cache.hidden.t_matmul(d_out)?;
        let b2 = column_sums(d_out);
        let mut d_hidden = d_out.matmul(&self.w2.transpose())?;
        if self.order == LayerOrder::NormThenRelu {
            for i in 0..n {
                for j in 0..h {
                    if cache.norm_out[(i, j)] <= T::zero() {
                        d_hidden[(i, j)] = T::zero();
                    }
                }
            }
        }
        let d_norm_out = d_hidden;
        let mut gamma = vec![T::zero(); h];
        let mut beta = vec![T::zero(); h];
        let mut sum_dxhat = vec![T::zero(); h];
        let mut sum_dxhat_xhat = vec![T::zero(); h];
        for i in 0..n {
            for j in 0..h {
                let g = d_norm_out[(i, j)];
                let xh = cache.xhat[(i, j)];
                gamma[j] += g * xh;
                beta[j] += g;
                let dxh = g * self.gamma[j];
                sum_dxhat[j] += dxh;
                sum_dxhat_xhat[j] += dxh * xh;
            }
        }
        let nf = T::from_count(n);
        let mut d_pre = Matrix::from_fn(n, h, |i, j| {
            let dxh = d_norm_out[(i, j)] * self.gamma[j];
            cache.inv_std[j] / nf
                * (nf * dxh - sum_dxhat[j] - cache.xhat[(i, j)] * sum_dxhat_xhat[j])
        });
        if self.order == LayerOrder::ReluThenNorm {
            for i in 0..n {
                for j in 0..h {
                    if cache.pre[(i, j)] <= T::zero() {
                        d_pre[(i, j)] = T::zero();
                    }
                }
            }
        }
        let w1 = cache.input.t_matmul(&d_pre)?;
        let b1 = column_sums(&d_pre);
        debug_assert_eq!(cache.norm_in.rows(), n);
        Ok(MapNetGrads {
            w1,
            b1,
            gamma,
            beta,
            w2,
            b2,
        })
    }

    /// Mean s2 cross-entropy over `queries` for one episode, with batch
    /// statistics over the episode's class names, and its gradient with
    /// respect to every trainable parameter. Does not mutate the network.
    /// Non-finite scores give a NaN loss with zero gradients.
    ///
    /// `names` and `prototypes` are row-aligned by class; each query is a
    /// feature vector with the index of its true class.
    pub fn episode_loss_and_grads(
        &self,
        names: &Matrix<T>,
        prototypes: &Matrix<T>,
        queries: &[(Vec<T>, usize)],
        lambda: T,
    ) -> Result<(T, MapNetGrads<T>, BatchStats<T>)> {
        if names.rows() != prototypes.rows() {
            return Err(Error::dims(
                "class-name rows",
                prototypes.rows(),
                names.rows(),
            ));
        }
        if prototypes.cols() != self.output_dim() {
            return Err(Error::dims(
                "prototype dimension",
                self.output_dim(),
                prototypes.cols(),
            ));
        }
        if queries.is_empty() {
            return Err(Error::InvalidInput("episode has no queries".into()));
        }
        let (mapped, cache, stats) = self.forward_train(names)?;
        let classes = names.rows();
        let nq = T::from_count(queries.len());
        let mut loss = T::zero();
        let mut d_mapped = Matrix::zeros(classes, self.output_dim());
        let floor = T::of(COSINE_NORM_FLOOR);
        for (q, label) in queries {
            if q.len() != self.output_dim() {
                return Err(Error::dims("query feature", self.output_dim(), q.len()));
            }
            let scores: Vec<T> = (0..classes)
                .map(|c| {
                    -squared_distance(q, prototypes.row(c)) + lambda * cosine(q, mapped.row(c))
                })
                .collect();
            if scores.iter().any(|s| !s.is_finite()) {
                return Ok((T::nan(), self.zero_grads(), stats));
            }
            let (probs, l) = softmax_ce(&scores, *label)?;
            loss += l / nq;
            let q_norm = dot(q, q).sqrt();
            for (c, &p) in probs.iter().enumerate() {
                let indicator = if c == *label { T::one() } else { T::zero() };
                let d_score = (p - indicator) / nq;
                let g = mapped.row(c);
                let g_norm = dot(g, g).sqrt();
                if q_norm < floor || g_norm < floor {
                    continue;
                }
                // ∂cos(q, g)/∂g = q/(‖q‖‖g‖) − cos · g/‖g‖²
                let cos = dot(q, g) / (q_norm * g_norm);
                let coef = d_score * lambda;
                let inv_qg = T::one() / (q_norm * g_norm);
                let inv_gg = T::one() / (g_norm * g_norm);
                for (k, d) in d_mapped.row_mut(c).iter_mut().enumerate() {
                    *d += coef * (q[k] * inv_qg - cos * g[k] * inv_gg);
                }
            }
        }
        let grads = self.backward(&cache, &d_mapped)?;
        Ok((loss, grads, stats))
    }

    fn zero_grads(&self) -> MapNetGrads<T> {
        let h = self.hidden_dim();
        MapNetGrads {
            w1: Matrix::zeros(self.input_dim(), h),
            b1: vec![T::zero(); h],
            gamma: vec![T::zero(); h],
            beta: vec![T::zero(); h],
            w2: Matrix::zeros(h, self.output_dim()),
            b2: vec![T::zero(); self.output_dim()],
        }
    }

    /// Trainable parameter tensors in a fixed order matching
    /// [`MapNetGrads::tensors`].
    pub fn params_mut(&mut self) -> [&mut [T]; 6] {
        [
            self.w1.as_mut_slice(),
            &mut self.b1,
            &mut self.gamma,
            &mut self.beta,
            self.w2.as_mut_slice(),
            &mut self.b2,
        ]
    }

    pub fn param_count(&self) -> usize {
        let h = self.hidden_dim();
        self.input_dim() * h + 3 * h + h * self.output_dim() + self.output_dim()
    }

    /// Writes `meta.json` plus one CMMAT file per tensor into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>, optimizer: Option<&Adam<T>>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let row = |v: &[T]| Matrix::new(1, v.len(), v.to_vec());
        write_matrix(&self.w1, dir.join("w1.cmm"))?;
        write_matrix(&row(&self.b1)?, dir.join("b1.cmm"))?;
        write_matrix(&row(&self.gamma)?, dir.join("gamma.cmm"))?;
        write_matrix(&row(&self.beta)?, dir.join("beta.cmm"))?;
        write_matrix(&row(&self.running_mean)?, dir.join("running_mean.cmm"))?;
        write_matrix(&row(&self.running_var)?, dir.join("running_var.cmm"))?;
        write_matrix(&self.w2, dir.join("w2.cmm"))?;
        write_matrix(&row(&self.b2)?, dir.join("b2.cmm"))?;
        let meta = NetMeta {
            m_t: self.input_dim(),
            hidden: self.hidden_dim(),
            m_v: self.output_dim(),
            mode: self.mode,
            order: self.order,
            momentum: self.momentum.to_f64_lossy(),
            bn_eps: self.bn_eps.to_f64_lossy(),
            optimizer: optimizer.map(|o| OptimizerMeta {
                step: o.step,
                lr: o.lr.to_f64_lossy(),
                beta1: o.beta1.to_f64_lossy(),
                beta2: o.beta2.to_f64_lossy(),
                epsilon: o.epsilon.to_f64_lossy(),
            }),
        };
        let path = dir.join("meta.json");
        let text = serde_json::to_string_pretty(&meta).expect("meta serializes");
        fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
    }

    /// Loads a checkpoint written by [`save`](Self::save), returning the
    /// optimizer hyper-parameters and step count when they were stored.
    pub fn load(dir: impl AsRef<Path>) -> Result<(Self, Option<Adam<T>>)> {
        let dir = dir.as_ref();
        let path = dir.join("meta.json");
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let meta: NetMeta = serde_json::from_str(&text).map_err(|e| Error::parse(&path, e))?;
        let vector = |name: &str, len: usize| -> Result<Vec<T>> {
            let m: Matrix<T> = load_matrix(dir.join(name))?;
            if m.rows() != 1 || m.cols() != len {
                return Err(Error::parse(
                    dir.join(name),
                    format!("expected 1x{len}, got {:?}", m.shape()),
                ));
            }
            Ok(m.into_vec())
        };
        let w1: Matrix<T> = load_matrix(dir.join("w1.cmm"))?;
        let w2: Matrix<T> = load_matrix(dir.join("w2.cmm"))?;
        if w1.shape() != (meta.m_t, meta.hidden) || w2.shape() != (meta.hidden, meta.m_v) {
            return Err(Error::parse(&path, "weight shapes disagree with meta.json"));
        }
        let net = MapNet {
            w1,
            b1: vector("b1.cmm", meta.hidden)?,
            gamma: vector("gamma.cmm", meta.hidden)?,
            beta: vector("beta.cmm", meta.hidden)?,
            running_mean: vector("running_mean.cmm", meta.hidden)?,
            running_var: vector("running_var.cmm", meta.hidden)?,
            w2,
            b2: vector("b2.cmm", meta.m_v)?,
            mode: meta.mode,
            order: meta.order,
            momentum: T::of(meta.momentum),
            bn_eps: T::of(meta.bn_eps),
        };
        if net.running_var.iter().any(|&v| v < T::zero()) {
            return Err(Error::parse(
                dir.join("running_var.cmm"),
                "negative running variance",
            ));
        }
        let adam = meta.optimizer.map(|o| {
            let mut adam = Adam::new(&net, T::of(o.lr));
            adam.beta1 = T::of(o.beta1);
            adam.beta2 = T::of(o.beta2);
            adam.epsilon = T::of(o.epsilon);
            adam.step = o.step;
            adam
        });
        Ok((net, adam))
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct NetMeta {
    m_t: usize,
    hidden: usize,
    m_v: usize,
    mode: Mode,
    order: LayerOrder,
    momentum: f64,
    bn_eps: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    optimizer: Option<OptimizerMeta>,
}

#[derive(Debug, Serialize, Deserialize)]
struct OptimizerMeta {
    step: u64,
    lr: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
}

pub const DEFAULT_LEARNING_RATE: f64 = 1e-4;

/// Adam with bias-corrected moments.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub step: u64,
    pub lr: T,
    pub beta1: T,
    pub beta2: T,
    pub epsilon: T,
    first: Vec<Vec<T>>,
    second: Vec<Vec<T>>,
}

impl<T: Real> Adam<T> {
    pub fn new(net: &MapNet<T>, lr: T) -> Self {
        let sizes = [
            net.w1.as_slice().len(),
            net.b1.len(),
            net.gamma.len(),
            net.beta.len(),
            net.w2.as_slice().len(),
            net.b2.len(),
        ];
        Adam {
            step: 0,
            lr,
            beta1: T::of(0.9),
            beta2: T::of(0.999),
            epsilon: T::of(1e-8),
            first: sizes.iter().map(|&n| vec![T::zero(); n]).collect(),
            second: sizes.iter().map(|&n| vec![T::zero(); n]).collect(),
        }
    }

    pub fn apply(&mut self, net: &mut MapNet<T>, grads: &MapNetGrads<T>) {
        self.step += 1;
        let t = self.step as i32;
        let bias1 = T::one() - self.beta1.powi(t);
        let bias2 = T::one() - self.beta2.powi(t);
        let grads = grads.tensors();
        for (slot, param) in net.params_mut().into_iter().enumerate() {
            let g = grads[slot].1;
            let m = &mut self.first[slot];
            let v = &mut self.second[slot];
            for k in 0..param.len() {
                m[k] = self.beta1 * m[k] + (T::one() - self.beta1) * g[k];
                v[k] = self.beta2 * v[k] + (T::one() - self.beta2) * g[k] * g[k];
                let m_hat = m[k] / bias1;
                let v_hat = v[k] / bias2;
                param[k] -= self.lr * m_hat / (v_hat.sqrt() + self.epsilon);
            }
        }
    }
}

/// Episode inputs in the form the loss consumes.
pub struct EpisodeBatch<T> {
    pub names: Matrix<T>,
    pub prototypes: Matrix<T>,
    pub queries: Vec<(Vec<T>, usize)>,
}

impl<T: Real> EpisodeBatch<T> {
    /// Prototypes from the support set, class names from `bundle.text`, and
    /// queries labeled by prototype row.
    pub fn from_episode(episode: &Episode, bundle: &DataBundle) -> Result<Self> {
        let protos = episode_prototypes::<T>(&episode.support, &bundle.store)?;
        let names = bundle.text.to_matrix(protos.classes())?.cast();
        let mut queries = Vec::with_capacity(episode.query.len());
        for (image, class) in &episode.query {
            let label = protos.index_of(class).ok_or_else(|| {
                Error::InvalidInput(format!("query class `{class}` not in support"))
            })?;
            let q = bundle
                .store
                .require_feature(image)?
                .iter()
                .map(|&v| T::of(v))
                .collect();
            queries.push((q, label));
        }
        Ok(EpisodeBatch {
            names,
            prototypes: protos.matrix().clone(),
            queries,
        })
    }
}

/// One optimization step on an episode: s2 loss, backpropagation, Adam
/// update and running-statistics update. Returns the pre-update loss.
pub fn train_step<T: Real>(
    net: &mut MapNet<T>,
    batch: &EpisodeBatch<T>,
    lambda: T,
    adam: &mut Adam<T>,
) -> Result<T> {
    let (loss, grads, stats) =
        net.episode_loss_and_grads(&batch.names, &batch.prototypes, &batch.queries, lambda)?;
    if !loss.is_finite() {
        return Err(Error::Divergence {
            step: adam.step,
            loss: loss.to_f64_lossy(),
        });
    }
    adam.apply(net, &grads);
    net.update_running_stats(&stats);
    Ok(loss)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub episodes: usize,
    pub n_way: usize,
    pub k_shot: usize,
    pub query: usize,
    pub lambda: f64,
    pub lr: f64,
    /// Record the loss every this many episodes (0 disables).
    pub log_interval: usize,
    pub seed: u64,
    pub section: Section,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            episodes: 50_000,
            n_way: 5,
            k_shot: 5,
            query: 15,
            lambda: 5.0,
            lr: DEFAULT_LEARNING_RATE,
            log_interval: 100,
            seed: 0,
            section: Section::Base,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainOutcome {
    /// `(episode index, loss)` at every logging interval.
    pub losses: Vec<(usize, f64)>,
    pub final_loss: Option<f64>,
}

/// Episodic training on `config.section`. Episode `i` is sampled with the
/// generator derived from `(seed, i)`, so runs are reproducible.
pub fn train<T: Real>(
    net: &mut MapNet<T>,
    bundle: &DataBundle,
    config: &TrainConfig,
    adam: &mut Adam<T>,
    mut on_log: impl FnMut(usize, f64),
) -> Result<TrainOutcome> {
    if bundle.split.section(config.section).is_empty() {
        return Err(Error::Split(format!("{} split is empty", config.section)));
    }
    if !(config.lambda.is_finite() && config.lambda >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "lambda must be >= 0, got {}",
            config.lambda
        )));
    }
    adam.lr = T::of(config.lr);
    net.set_mode(Mode::Train);
    let lambda = T::of(config.lambda);
    let mut losses = Vec::new();
    let mut final_loss = None;
    for i in 0..config.episodes {
        let mut rng = episode_rng(config.seed, i as u64);
        let episode = sample_episode(
            &bundle.split,
            config.section,
            &bundle.store,
            config.n_way,
            config.k_shot,
            config.query,
            &mut rng,
        )?;
        let batch = EpisodeBatch::from_episode(&episode, bundle)?;
        let loss = train_step(net, &batch, lambda, adam)?.to_f64_lossy();
        final_loss = Some(loss);
        if config.log_interval > 0 && (i + 1) % config.log_interval == 0 {
            losses.push((i + 1, loss));
            on_log(i + 1, loss);
        }
    }
    net.set_mode(Mode::Eval);
    Ok(TrainOutcome { losses, final_loss })
}
