//! LSTM sequence regressor with hand-derived backpropagation through time.
//!
//! Architecture: one unidirectional LSTM layer over the `T` encoded gate
//! steps (zero initial state), the per-step hidden vectors pooled (by
//! default concatenated), a tanh fully connected layer, and a linear scalar
//! head.
//!
//! LSTM tensors stack the four gate blocks in the order `[i, f, g, o]`:
//! rows `0..H` of `w_ih`, `w_hh` and `b` belong to the input gate, `H..2H` to
//! the forget gate, `2H..3H` to the cell candidate and `3H..4H` to the output
//! gate.

mod adam;
mod checkpoint;
mod loss;
mod train;

pub use adam::{AdamConfig, AdamState};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use loss::huber_loss;
pub use train::{
    fit, mean_huber, predict_batch, train_epoch, EpochLog, EpochStats, FitResult, Predictions, TrainConfig,
    TrainingSet,
};

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, Array3, ArrayView2, ArrayView3, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub const DEFAULT_HIDDEN_DIM: usize = 64;
pub const DEFAULT_FC_DIM: usize = 64;
pub const FORGET_BIAS_INIT: f64 = 1.0;

/// How the `T` hidden vectors are combined before the fully connected layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pooling {
    #[default]
    Concat,
    Mean,
    Last,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub fc_dim: usize,
    pub seq_len: usize,
    pub pooling: Pooling,
}

impl ModelConfig {
    pub fn new(input_dim: usize, hidden_dim: usize, fc_dim: usize, seq_len: usize) -> Self {
        ModelConfig {
            input_dim,
            hidden_dim,
            fc_dim,
            seq_len,
            pooling: Pooling::Concat,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("input_dim", self.input_dim),
            ("hidden_dim", self.hidden_dim),
            ("fc_dim", self.fc_dim),
            ("seq_len", self.seq_len),
        ] {
            if v == 0 {
                return Err(invalid(format!("{name} must be positive")));
            }
        }
        Ok(())
    }

    /// Width of the pooled vector entering the fully connected layer.
    pub fn pooled_dim(&self) -> usize {
        match self.pooling {
            Pooling::Concat => self.seq_len * self.hidden_dim,
            Pooling::Mean | Pooling::Last => self.hidden_dim,
        }
    }

    pub fn param_count(&self) -> usize {
        let (i, h, f) = (self.input_dim, self.hidden_dim, self.fc_dim);
        4 * h * (i + h + 1) + f * (self.pooled_dim() + 1) + f + 1
    }
}

/// Every trainable tensor. Also used for gradients and Adam moments.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    /// `4H × I`
    pub w_ih: Array2<f64>,
    /// `4H × H`
    pub w_hh: Array2<f64>,
    /// `4H`
    pub b: Array1<f64>,
    /// `F × P`
    pub w_fc: Array2<f64>,
    /// `F`
    pub b_fc: Array1<f64>,
    /// `F`
    pub w_out: Array1<f64>,
    /// length 1
    pub b_out: Array1<f64>,
}

pub const TENSOR_NAMES: [&str; 7] = [
    "lstm.w_ih",
    "lstm.w_hh",
    "lstm.b",
    "fc.w",
    "fc.b",
    "head.w",
    "head.b",
];

impl Params {
    pub fn zeros(config: &ModelConfig) -> Self {
        let (i, h, f) = (config.input_dim, config.hidden_dim, config.fc_dim);
        Params {
            w_ih: Array2::zeros((4 * h, i)),
            w_hh: Array2::zeros((4 * h, h)),
            b: Array1::zeros(4 * h),
            w_fc: Array2::zeros((f, config.pooled_dim())),
            b_fc: Array1::zeros(f),
            w_out: Array1::zeros(f),
            b_out: Array1::zeros(1),
        }
    }

    pub fn shapes(&self) -> [Vec<usize>; 7] {
        [
            self.w_ih.shape().to_vec(),
            self.w_hh.shape().to_vec(),
            self.b.shape().to_vec(),
            self.w_fc.shape().to_vec(),
            self.b_fc.shape().to_vec(),
            self.w_out.shape().to_vec(),
            self.b_out.shape().to_vec(),
        ]
    }

    /// Flat views in [`TENSOR_NAMES`] order.
    pub fn tensors(&self) -> [&[f64]; 7] {
        [
            self.w_ih.as_slice().expect("standard layout"),
            self.w_hh.as_slice().expect("standard layout"),
            self.b.as_slice().expect("standard layout"),
            self.w_fc.as_slice().expect("standard layout"),
            self.b_fc.as_slice().expect("standard layout"),
            self.w_out.as_slice().expect("standard layout"),
            self.b_out.as_slice().expect("standard layout"),
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 7] {
        [
            self.w_ih.as_slice_mut().expect("standard layout"),
            self.w_hh.as_slice_mut().expect("standard layout"),
            self.b.as_slice_mut().expect("standard layout"),
            self.w_fc.as_slice_mut().expect("standard layout"),
            self.b_fc.as_slice_mut().expect("standard layout"),
            self.w_out.as_slice_mut().expect("standard layout"),
            self.b_out.as_slice_mut().expect("standard layout"),
        ]
    }

    pub fn len(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn same_shape(&self, other: &Params) -> bool {
        self.shapes() == other.shapes()
    }

    /// `self += scale · other`
    pub fn add_scaled(&mut self, other: &Params, scale: f64) -> Result<()> {
        if !self.same_shape(other) {
            return Err(Error::Shape("parameter sets differ in shape".into()));
        }
        for (dst, src) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += scale * s;
            }
        }
        Ok(())
    }
}

pub type Gradients = Params;

#[derive(Debug, Clone, PartialEq)]
pub struct LstmRegressor {
    config: ModelConfig,
    params: Params,
    // bumped on every parameter update so stale caches can be detected
    generation: u64,
}

fn uniform_fill<R: Rng + ?Sized>(values: &mut [f64], bound: f64, rng: &mut R) {
    for v in values {
        *v = rng.random_range(-bound..bound);
    }
}

/// Uniform `[−1/√fan_in, 1/√fan_in]` per tensor, forget-gate bias 1.0.
///
/// Fan-in is the column count of each weight matrix; a bias uses the fan-in
/// of the recurrent weights (LSTM) or of its own layer (fc, head).
pub fn init_model<R: Rng + ?Sized>(config: ModelConfig, rng: &mut R) -> Result<LstmRegressor> {
    config.validate()?;
    let mut p = Params::zeros(&config);
    let h = config.hidden_dim;
    let bound = |fan_in: usize| 1.0 / (fan_in as f64).sqrt();
    let bounds = [
        bound(config.input_dim),
        bound(h),
        bound(h),
        bound(config.pooled_dim()),
        bound(config.pooled_dim()),
        bound(config.fc_dim),
        bound(config.fc_dim),
    ];
    for (t, b) in p.tensors_mut().into_iter().zip(bounds) {
        uniform_fill(t, b, rng);
    }
    p.b.slice_mut(s![h..2 * h]).fill(FORGET_BIAS_INIT);
    Ok(LstmRegressor {
        config,
        params: p,
        generation: 0,
    })
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Activations retained by [`LstmRegressor::forward_batch`] for backprop.
#[derive(Debug, Clone)]
pub struct Cache {
    generation: u64,
    config: ModelConfig,
    inputs: Array3<f64>,
    /// per step, `B × 4H` post-activation `[i, f, g, o]`
    gates: Vec<Array2<f64>>,
    /// per step, `B × H`
    cells: Vec<Array2<f64>>,
    tanh_cells: Vec<Array2<f64>>,
    hidden: Vec<Array2<f64>>,
    pooled: Array2<f64>,
    /// `B × F`, after tanh
    fc: Array2<f64>,
}

impl Cache {
    pub fn batch_size(&self) -> usize {
        self.inputs.len_of(Axis(0))
    }
}

impl LstmRegressor {
    pub fn from_params(config: ModelConfig, params: Params) -> Result<Self> {
        config.validate()?;
        if !Params::zeros(&config).same_shape(&params) {
            return Err(Error::Shape("tensor shapes do not match the model config".into()));
        }
        Ok(LstmRegressor {
            config,
            params,
            generation: 0,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    /// Mutable access to the weights; invalidates outstanding caches.
    pub fn params_mut(&mut self) -> &mut Params {
        self.generation += 1;
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    fn check_input(&self, batch: &ArrayView3<f64>) -> Result<()> {
        let (_, t, i) = batch.dim();
        if t != self.config.seq_len || i != self.config.input_dim {
            return Err(Error::Shape(format!(
                "input is {t}×{i} per example, model expects {}×{}",
                self.config.seq_len, self.config.input_dim
            )));
        }
        Ok(())
    }

    /// Single sequence (`T × input_dim`).
    pub fn forward(&self, features: ArrayView2<f64>) -> Result<(f64, Cache)> {
        let batch = features.insert_axis(Axis(0));
        let (y, cache) = self.forward_batch(batch)?;
        Ok((y[0], cache))
    }

    /// Batch of sequences (`B × T × input_dim`).
    pub fn forward_batch(&self, batch: ArrayView3<f64>) -> Result<(Array1<f64>, Cache)> {
        self.check_input(&batch)?;
        let bsz = batch.len_of(Axis(0));
        let ModelConfig {
            hidden_dim: h,
            seq_len: steps,
            ..
        } = self.config;
        let p = &self.params;

        let mut gates_all = Vec::with_capacity(steps);
        let mut cells = Vec::with_capacity(steps);
        let mut tanh_cells = Vec::with_capacity(steps);
        let mut hidden: Vec<Array2<f64>> = Vec::with_capacity(steps);

        for t in 0..steps {
            let x_t = batch.index_axis(Axis(1), t);
            let mut z = Array2::from_shape_fn((bsz, 4 * h), |(_, j)| p.b[j]);
            general_mat_mul(1.0, &x_t, &p.w_ih.t(), 1.0, &mut z);
            if let Some(h_prev) = hidden.last() {
                general_mat_mul(1.0, h_prev, &p.w_hh.t(), 1.0, &mut z);
            }
            let mut c = Array2::zeros((bsz, h));
            let mut tc = Array2::zeros((bsz, h));
            let mut hn = Array2::zeros((bsz, h));
            for r in 0..bsz {
                let zr = z.row_mut(r).into_slice().expect("row-major");
                for v in &mut zr[..2 * h] {
                    *v = sigmoid(*v);
                }
                for v in &mut zr[2 * h..3 * h] {
                    *v = v.tanh();
                }
                for v in &mut zr[3 * h..] {
                    *v = sigmoid(*v);
                }
                for k in 0..h {
                    let (ig, fg, gg, og) = (zr[k], zr[h + k], zr[2 * h + k], zr[3 * h + k]);
                    let c_prev = cells.last().map_or(0.0, |m: &Array2<f64>| m[[r, k]]);
                    let cv = fg * c_prev + ig * gg;
                    let tv = cv.tanh();
                    c[[r, k]] = cv;
                    tc[[r, k]] = tv;
                    hn[[r, k]] = og * tv;
                }
            }
            gates_all.push(z);
            cells.push(c);
            tanh_cells.push(tc);
            hidden.push(hn);
        }

        let pooled = match self.config.pooling {
            Pooling::Concat => {
                let mut out = Array2::zeros((bsz, steps * h));
                for (t, ht) in hidden.iter().enumerate() {
                    out.slice_mut(s![.., t * h..(t + 1) * h]).assign(ht);
                }
                out
            }
            Pooling::Mean => {
                let mut out = Array2::zeros((bsz, h));
                for ht in &hidden {
                    out += ht;
                }
                out / steps as f64
            }
            Pooling::Last => hidden[steps - 1].clone(),
        };

        let mut fc = Array2::from_shape_fn((bsz, self.config.fc_dim), |(_, j)| p.b_fc[j]);
        general_mat_mul(1.0, &pooled, &p.w_fc.t(), 1.0, &mut fc);
        fc.mapv_inplace(f64::tanh);
        let y = fc.dot(&p.w_out) + p.b_out[0];

        let cache = Cache {
            generation: self.generation,
            config: self.config,
            inputs: batch.to_owned(),
            gates: gates_all,
            cells,
            tanh_cells,
            hidden,
            pooled,
            fc,
        };
        Ok((y, cache))
    }

    /// Predictions only.
    pub fn predict(&self, batch: ArrayView3<f64>) -> Result<Array1<f64>> {
        self.forward_batch(batch).map(|(y, _)| y)
    }

    /// Gradients of `Σ_b dloss[b] · y_b` with respect to every parameter.
    pub fn backward(&self, cache: &Cache, dloss: &[f64]) -> Result<Gradients> {
        if cache.generation != self.generation || cache.config != self.config {
            return Err(invalid("cache was produced by a different model state"));
        }
        let bsz = cache.batch_size();
        if dloss.len() != bsz {
            return Err(Error::Shape(format!(
                "{} output gradients for a batch of {bsz}",
                dloss.len()
            )));
        }
        let ModelConfig {
            hidden_dim: h,
            seq_len: steps,
            ..
        } = self.config;
        let p = &self.params;
        let mut g = Params::zeros(&self.config);
        let dy = ArrayView2::from_shape((bsz, 1), dloss).expect("contiguous");

        // head
        g.b_out[0] = dloss.iter().sum();
        g.w_out = cache.fc.t().dot(&dy.column(0));
        let mut da = dy.dot(&p.w_out.view().insert_axis(Axis(0)));
        da.zip_mut_with(&cache.fc, |d, &u| *d *= 1.0 - u * u);

        // fc
        general_mat_mul(1.0, &da.t(), &cache.pooled, 0.0, &mut g.w_fc);
        g.b_fc = da.sum_axis(Axis(0));
        let dpooled = da.dot(&p.w_fc);

        let pooled_grad = |t: usize| -> Option<Array2<f64>> {
            match self.config.pooling {
                Pooling::Concat => Some(dpooled.slice(s![.., t * h..(t + 1) * h]).to_owned()),
                Pooling::Mean => Some(&dpooled / steps as f64),
                Pooling::Last => (t == steps - 1).then(|| dpooled.clone()),
            }
        };

        // recurrence, newest step first
        let mut dh_next = Array2::<f64>::zeros((bsz, h));
        let mut dc_next = Array2::<f64>::zeros((bsz, h));
        let mut dz = Array2::<f64>::zeros((bsz, 4 * h));
        for t in (0..steps).rev() {
            let mut dh = dh_next;
            if let Some(dp) = pooled_grad(t) {
                dh += &dp;
            }
            let gates = &cache.gates[t];
            let tc = &cache.tanh_cells[t];
            for r in 0..bsz {
                let gr = gates.row(r);
                let gr = gr.as_slice().expect("row-major");
                let dzr = dz.row_mut(r).into_slice().expect("row-major");
                for k in 0..h {
                    let (ig, fg, gg, og) = (gr[k], gr[h + k], gr[2 * h + k], gr[3 * h + k]);
                    let tv = tc[[r, k]];
                    let dhv = dh[[r, k]];
                    let dc = dhv * og * (1.0 - tv * tv) + dc_next[[r, k]];
                    let c_prev = if t > 0 { cache.cells[t - 1][[r, k]] } else { 0.0 };
                    dzr[k] = dc * gg * ig * (1.0 - ig);
                    dzr[h + k] = dc * c_prev * fg * (1.0 - fg);
                    dzr[2 * h + k] = dc * ig * (1.0 - gg * gg);
                    dzr[3 * h + k] = dhv * tv * og * (1.0 - og);
                    dc_next[[r, k]] = dc * fg;
                }
            }
            let x_t = cache.inputs.index_axis(Axis(1), t);
            general_mat_mul(1.0, &dz.t(), &x_t, 1.0, &mut g.w_ih);
            g.b += &dz.sum_axis(Axis(0));
            if t > 0 {
                general_mat_mul(1.0, &dz.t(), &cache.hidden[t - 1], 1.0, &mut g.w_hh);
            }
            dh_next = dz.dot(&p.w_hh);
        }
        Ok(g)
    }

    pub(crate) fn apply_update(&mut self, f: impl FnOnce(&mut Params)) {
        self.generation += 1;
        f(&mut self.params);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use ndarray::Array;
    use rand_distr::{Distribution, StandardNormal};

    fn tiny_config(pooling: Pooling) -> ModelConfig {
        ModelConfig {
            input_dim: 4,
            hidden_dim: 8,
            fc_dim: 6,
            seq_len: 5,
            pooling,
        }
    }

    fn random_batch(b: usize, t: usize, i: usize, seed: u64) -> Array3<f64> {
        let mut rng = stream(seed);
        Array::from_shape_fn((b, t, i), |_| StandardNormal.sample(&mut rng))
    }

    #[test]
    fn default_scale_parameter_count() {
        let cfg = ModelConfig::new(36, 64, 64, 30);
        // 4·64·(36+64+1) + 64·(30·64) + 64 + 64 + 1
        assert_eq!(cfg.param_count(), 25_856 + 122_880 + 64 + 64 + 1);
        assert_eq!(cfg.param_count(), 148_865);
        let m = init_model(cfg, &mut stream(1)).unwrap();
        assert_eq!(m.param_count(), 148_865);
    }

    #[test]
    fn init_is_deterministic_and_bounded() {
        let cfg = ModelConfig::new(36, 16, 8, 30);
        let a = init_model(cfg, &mut stream(5)).unwrap();
        let b = init_model(cfg, &mut stream(5)).unwrap();
        assert_eq!(a, b);
        let forget = a.params().b.slice(s![16..32]);
        assert!(forget.iter().all(|&v| v == FORGET_BIAS_INIT));
        let bound = 1.0 / 36f64.sqrt();
        assert!(a.params().w_ih.iter().all(|v| v.abs() <= bound));
        assert!(init_model(ModelConfig::new(36, 0, 8, 30), &mut stream(1)).is_err());
    }

    #[test]
    fn zero_weights_predict_head_bias() {
        let cfg = tiny_config(Pooling::Concat);
        let mut p = Params::zeros(&cfg);
        p.b_out[0] = 0.37;
        let m = LstmRegressor::from_params(cfg, p).unwrap();
        let x = random_batch(3, 5, 4, 2);
        let y = m.predict(x.view()).unwrap();
        assert!(y.iter().all(|&v| v == 0.37));
    }

    #[test]
    fn predictions_depend_on_input() {
        let m = init_model(tiny_config(Pooling::Concat), &mut stream(3)).unwrap();
        let padding = Array2::zeros((5, 4));
        let mut gated = Array2::zeros((5, 4));
        gated[[0, 0]] = 0.25;
        let (a, _) = m.forward(padding.view()).unwrap();
        let (b, _) = m.forward(gated.view()).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn forward_rejects_bad_shapes() {
        let m = init_model(tiny_config(Pooling::Concat), &mut stream(3)).unwrap();
        assert!(m.forward(Array2::zeros((4, 4)).view()).is_err());
        assert!(m.forward(Array2::zeros((5, 3)).view()).is_err());
    }

    #[test]
    fn batch_forward_matches_single_forward() {
        let m = init_model(tiny_config(Pooling::Concat), &mut stream(4)).unwrap();
        let x = random_batch(4, 5, 4, 9);
        let y = m.predict(x.view()).unwrap();
        for b in 0..4 {
            let (single, _) = m.forward(x.index_axis(Axis(0), b)).unwrap();
            assert!((single - y[b]).abs() < 1e-14);
        }
    }

    fn loss_at(m: &LstmRegressor, x: &Array3<f64>, targets: &[f64], delta: f64) -> f64 {
        let y = m.predict(x.view()).unwrap();
        y.iter()
            .zip(targets)
            .map(|(&p, &t)| huber_loss(p, t, delta).0)
            .sum::<f64>()
            / targets.len() as f64
    }

    /// Central differences on every scalar parameter.
    fn check_gradients(pooling: Pooling, targets: &[f64], delta: f64, seed: u64) {
        let cfg = tiny_config(pooling);
        let mut m = init_model(cfg, &mut stream(seed)).unwrap();
        // wider weights so gates leave their linear regime
        m.params_mut().tensors_mut().into_iter().for_each(|t| t.iter_mut().for_each(|v| *v *= 1.5));
        let x = random_batch(targets.len(), 5, 4, seed + 1);

        let (y, cache) = m.forward_batch(x.view()).unwrap();
        let dloss: Vec<f64> = y
            .iter()
            .zip(targets)
            .map(|(&p, &t)| huber_loss(p, t, delta).1 / targets.len() as f64)
            .collect();
        let grads = m.backward(&cache, &dloss).unwrap();

        let step = 1e-5;
        let mut worst = 0.0f64;
        for (ti, name) in TENSOR_NAMES.iter().enumerate() {
            let n = m.params().tensors()[ti].len();
            for k in 0..n {
                let orig = m.params().tensors()[ti][k];
                m.params_mut().tensors_mut()[ti][k] = orig + step;
                let plus = loss_at(&m, &x, targets, delta);
                m.params_mut().tensors_mut()[ti][k] = orig - step;
                let minus = loss_at(&m, &x, targets, delta);
                m.params_mut().tensors_mut()[ti][k] = orig;
                let numeric = (plus - minus) / (2.0 * step);
                let analytic = grads.tensors()[ti][k];
                let abs = (numeric - analytic).abs();
                if abs < 1e-8 {
                    continue;
                }
                let rel = abs / numeric.abs().max(analytic.abs());
                worst = worst.max(rel);
                assert!(rel < 1e-5, "{name}[{k}]: analytic {analytic} numeric {numeric} rel {rel}");
            }
        }
        assert!(worst < 1e-5);
    }

    #[test]
    fn gradients_match_finite_differences_concat() {
        check_gradients(Pooling::Concat, &[0.3], 1.0, 10);
        // linear Huber branch
        check_gradients(Pooling::Concat, &[5.0, -4.0], 1.0, 11);
    }

    #[test]
    fn gradients_match_finite_differences_mean_and_last() {
        check_gradients(Pooling::Mean, &[0.2, 0.7], 1.0, 12);
        check_gradients(Pooling::Last, &[0.4, 0.1, 0.9], 1.0, 13);
    }

    #[test]
    fn zero_output_gradient_gives_zero_gradients() {
        let m = init_model(tiny_config(Pooling::Concat), &mut stream(6)).unwrap();
        let x = random_batch(2, 5, 4, 6);
        let (_, cache) = m.forward_batch(x.view()).unwrap();
        let g = m.backward(&cache, &[0.0, 0.0]).unwrap();
        assert!(g.tensors().iter().all(|t| t.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn batch_gradient_is_mean_of_example_gradients() {
        let m = init_model(tiny_config(Pooling::Concat), &mut stream(7)).unwrap();
        let x = random_batch(3, 5, 4, 7);
        let targets = [0.1, 0.5, 0.9];
        let (y, cache) = m.forward_batch(x.view()).unwrap();
        let d: Vec<f64> = (0..3).map(|b| huber_loss(y[b], targets[b], 1.0).1 / 3.0).collect();
        let batch = m.backward(&cache, &d).unwrap();

        let mut mean = Params::zeros(m.config());
        for b in 0..3 {
            let (yb, cb) = m.forward(x.index_axis(Axis(0), b)).unwrap();
            let gb = m.backward(&cb, &[huber_loss(yb, targets[b], 1.0).1]).unwrap();
            mean.add_scaled(&gb, 1.0 / 3.0).unwrap();
        }
        for (a, b) in batch.tensors().iter().zip(mean.tensors()) {
            for (u, v) in a.iter().zip(b) {
                assert!((u - v).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn stale_cache_is_rejected() {
        let mut m = init_model(tiny_config(Pooling::Concat), &mut stream(8)).unwrap();
        let x = random_batch(1, 5, 4, 8);
        let (_, cache) = m.forward_batch(x.view()).unwrap();
        assert!(m.backward(&cache, &[1.0, 2.0]).is_err());
        m.params_mut().b_out[0] += 1.0;
        assert!(m.backward(&cache, &[1.0]).is_err());
        let other = init_model(tiny_config(Pooling::Mean), &mut stream(8)).unwrap();
        assert!(other.backward(&cache, &[1.0]).is_err());
    }
}
