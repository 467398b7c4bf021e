//! Conditional noise predictor with a sketch-decoder head.
//!
//! ```text
//! e   = time_emb[t] + class_emb[c]
//! h1  = relu(z_t W_in + e W_emb + b1)
//! h2  = h1 + relu(h1 W2 + b2)          (plain relu layer when widths differ)
//! ε̂   = h2 W_out + b_out + g[t] ⊙ z_t
//! Ŝ   = sigmoid([h1 ‖ h2] W_s + b_s)
//! ```
//!
//! The per-step gain table `g` carries the input straight to the noise
//! head; a 128-wide ReLU trunk cannot pass a 256-dimensional noise field
//! through on its own.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::tape::sigmoid;
use crate::numeric::{Matrix, NodeId, RngStream, Tape};
use crate::synth::schedule::NoiseSchedule;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DenoiserConfig {
    pub steps: usize,
    pub num_classes: usize,
    pub pixels: usize,
    pub embed_dim: usize,
    pub hidden: [usize; 2],
}

impl DenoiserConfig {
    pub fn residual(&self) -> bool {
        self.hidden[0] == self.hidden[1]
    }

    pub fn param_shapes(&self) -> [(usize, usize); PARAM_COUNT] {
        let [h1, h2] = self.hidden;
        [
            (self.steps, self.embed_dim),
            (self.num_classes, self.embed_dim),
            (self.pixels, h1),
            (self.embed_dim, h1),
            (1, h1),
            (h1, h2),
            (1, h2),
            (h2, self.pixels),
            (1, self.pixels),
            (h1 + h2, self.pixels),
            (1, self.pixels),
            (self.steps, self.pixels),
        ]
    }
}

pub const PARAM_COUNT: usize = 12;
pub const TIME_EMB: usize = 0;
pub const CLASS_EMB: usize = 1;
pub const W_IN: usize = 2;
pub const W_EMB: usize = 3;
pub const B1: usize = 4;
pub const W2: usize = 5;
pub const B2: usize = 6;
pub const W_OUT: usize = 7;
pub const B_OUT: usize = 8;
pub const W_SKETCH: usize = 9;
pub const B_SKETCH: usize = 10;
pub const SKIP_GAIN: usize = 11;

/// Indices of the sketch-decoder parameters.
pub const SKETCH_HEAD: [usize; 2] = [W_SKETCH, B_SKETCH];

/// Anything that predicts the injected noise from `(z_t, t, c)`.
pub trait NoisePredictor {
    /// `z_t` holds one flattened image per row; `steps` and `classes` give
    /// the per-row conditioning.
    fn predict_noise(&self, z_t: &Matrix, steps: &[usize], classes: &[usize]) -> Result<Matrix>;
}

#[derive(Clone, Debug, PartialEq)]
pub struct DenoiserModel {
    pub config: DenoiserConfig,
    pub params: Vec<Matrix>,
    /// Completed training epochs; zero means untrained.
    pub trained_epochs: u32,
}

/// Tape handles produced by [`DenoiserModel::record`].
#[derive(Clone, Copy, Debug)]
pub struct DenoiserNodes {
    pub noise: NodeId,
    pub sketch: NodeId,
    pub h1: NodeId,
    pub h2: NodeId,
}

fn uniform_init(rows: usize, cols: usize, bound: f64, rng: &mut RngStream) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.uniform_range(-bound, bound))
}

/// Standard sinusoidal timestep features, used to initialise the learned
/// time table.
pub fn sinusoidal_embedding(steps: usize, dim: usize) -> Matrix {
    let half = dim / 2;
    Matrix::from_fn(steps, dim, |t, j| {
        let pos = (t + 1) as f64;
        let k = (j % half.max(1)) as f64;
        let freq = (-(10_000f64).ln() * k / half.max(1) as f64).exp();
        if j < half {
            (pos * freq).sin()
        } else {
            (pos * freq).cos()
        }
    })
}

impl DenoiserModel {
    pub fn new(config: DenoiserConfig, rng: &mut RngStream) -> Result<Self> {
        if config.steps < 2
            || config.num_classes == 0
            || config.pixels == 0
            || config.embed_dim == 0
            || config.hidden.contains(&0)
        {
            return Err(Error::Config(format!(
                "degenerate denoiser config {config:?}"
            )));
        }
        let shapes = config.param_shapes();
        let mut params = Vec::with_capacity(PARAM_COUNT);
        for (i, &(r, c)) in shapes.iter().enumerate() {
            let m = match i {
                TIME_EMB => sinusoidal_embedding(r, c),
                CLASS_EMB => Matrix::from_fn(r, c, |_, _| rng.normal()),
                B1 | B2 | B_OUT | B_SKETCH | SKIP_GAIN => Matrix::zeros(r, c),
                // small output head so the untrained model predicts ~0 noise
                W_OUT => uniform_init(r, c, 0.1 * (6.0 / (r + c) as f64).sqrt(), rng),
                _ => uniform_init(r, c, (6.0 / (r + c) as f64).sqrt(), rng),
            };
            params.push(m);
        }
        Ok(Self {
            config,
            params,
            trained_epochs: 0,
        })
    }

    /// Sets `g[t]` to the least-squares gain of `ε` on `z_t` for data with
    /// per-pixel second moment `m`: `s / (a² m + s²)` with `a = √ᾱ_t`,
    /// `s = √(1 − ᾱ_t)`.
    pub fn init_skip_gain(&mut self, schedule: &NoiseSchedule, second_moment: f64) -> Result<()> {
        if schedule.steps() != self.config.steps {
            return Err(Error::Model(
                "schedule length differs from time table".into(),
            ));
        }
        if !(second_moment > 0.0 && second_moment.is_finite()) {
            return Err(Error::Contract(format!(
                "second moment {second_moment} must be > 0"
            )));
        }
        for t in 1..=schedule.steps() {
            let ab = schedule.alpha_bar(t);
            let s2 = 1.0 - ab;
            let d = ab * second_moment + s2;
            self.params[SKIP_GAIN].row_mut(t - 1).fill(s2.sqrt() / d);
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(Matrix::len).sum()
    }

    fn check_inputs(&self, z_t: &Matrix, steps: &[usize], classes: &[usize]) -> Result<()> {
        let cfg = &self.config;
        if z_t.cols() != cfg.pixels || steps.len() != z_t.rows() || classes.len() != z_t.rows() {
            return Err(Error::Shape(format!(
                "denoiser input {}x{} with {} steps / {} classes",
                z_t.rows(),
                z_t.cols(),
                steps.len(),
                classes.len()
            )));
        }
        if let Some(&t) = steps.iter().find(|&&t| t == 0 || t > cfg.steps) {
            return Err(Error::Contract(format!(
                "step {t} outside [1, {}]",
                cfg.steps
            )));
        }
        if let Some(&c) = classes.iter().find(|&&c| c >= cfg.num_classes) {
            return Err(Error::Contract(format!(
                "class {c} outside [0, {})",
                cfg.num_classes
            )));
        }
        Ok(())
    }

    /// Records the forward pass. `params` are the tape handles for
    /// `self.params`, in order.
    pub fn record(
        &self,
        tape: &mut Tape,
        params: &[NodeId],
        z_t: &Matrix,
        steps: &[usize],
        classes: &[usize],
    ) -> Result<DenoiserNodes> {
        self.check_inputs(z_t, steps, classes)?;
        let p = |i: usize| params[i];
        let t_idx: Vec<usize> = steps.iter().map(|t| t - 1).collect();
        let x = tape.constant(z_t.clone());
        let te = tape.gather(p(TIME_EMB), &t_idx)?;
        let ce = tape.gather(p(CLASS_EMB), classes)?;
        let emb = tape.add(te, ce)?;
        let xin = tape.matmul(x, p(W_IN))?;
        let ein = tape.matmul(emb, p(W_EMB))?;
        let a1 = tape.add(xin, ein)?;
        let a1 = tape.add_row(a1, p(B1))?;
        let h1 = tape.relu(a1);
        let a2 = tape.affine(h1, p(W2), p(B2))?;
        let r2 = tape.relu(a2);
        let h2 = if self.config.residual() {
            tape.add(h1, r2)?
        } else {
            r2
        };
        let head = tape.affine(h2, p(W_OUT), p(B_OUT))?;
        let gain = tape.gather(p(SKIP_GAIN), &t_idx)?;
        let skip = tape.mul(gain, x)?;
        let noise = tape.add(head, skip)?;
        let taps = tape.concat_cols(h1, h2)?;
        let logits = tape.affine(taps, p(W_SKETCH), p(B_SKETCH))?;
        let sketch = tape.sigmoid(logits);
        Ok(DenoiserNodes {
            noise,
            sketch,
            h1,
            h2,
        })
    }

    /// Trunk activations `(h1, h2)` without a tape.
    fn trunk(&self, z_t: &Matrix, steps: &[usize], classes: &[usize]) -> Result<(Matrix, Matrix)> {
        self.check_inputs(z_t, steps, classes)?;
        let ps = &self.params;
        let te = &ps[TIME_EMB];
        let ce = &ps[CLASS_EMB];
        let emb = Matrix::from_fn(z_t.rows(), self.config.embed_dim, |r, j| {
            te[(steps[r] - 1, j)] + ce[(classes[r], j)]
        });
        let mut a1 = z_t.matmul(&ps[W_IN])?.add(&emb.matmul(&ps[W_EMB])?)?;
        add_bias_relu(&mut a1, &ps[B1]);
        let mut a2 = a1.matmul(&ps[W2])?;
        add_bias_relu(&mut a2, &ps[B2]);
        let h2 = if self.config.residual() {
            a2.add(&a1)?
        } else {
            a2
        };
        Ok((a1, h2))
    }

    /// Sketch predictions in `[0, 1]` (training-time branch only).
    pub fn predict_sketch(
        &self,
        z_t: &Matrix,
        steps: &[usize],
        classes: &[usize],
    ) -> Result<Matrix> {
        let (h1, h2) = self.trunk(z_t, steps, classes)?;
        let taps = Matrix::from_fn(h1.rows(), h1.cols() + h2.cols(), |r, c| {
            if c < h1.cols() {
                h1[(r, c)]
            } else {
                h2[(r, c - h1.cols())]
            }
        });
        let mut s = taps.matmul(&self.params[W_SKETCH])?;
        add_bias(&mut s, &self.params[B_SKETCH]);
        Ok(s.map(sigmoid))
    }
}

fn add_bias(m: &mut Matrix, bias: &Matrix) {
    for r in 0..m.rows() {
        for (x, &b) in m.row_mut(r).iter_mut().zip(bias.data()) {
            *x += b;
        }
    }
}

fn add_bias_relu(m: &mut Matrix, bias: &Matrix) {
    for r in 0..m.rows() {
        for (x, &b) in m.row_mut(r).iter_mut().zip(bias.data()) {
            *x = (*x + b).max(0.0);
        }
    }
}

impl NoisePredictor for DenoiserModel {
    fn predict_noise(&self, z_t: &Matrix, steps: &[usize], classes: &[usize]) -> Result<Matrix> {
        let (_, h2) = self.trunk(z_t, steps, classes)?;
        let mut out = h2.matmul(&self.params[W_OUT])?;
        add_bias(&mut out, &self.params[B_OUT]);
        let gain = &self.params[SKIP_GAIN];
        for (r, &t) in steps.iter().enumerate() {
            for ((o, &z), &g) in out
                .row_mut(r)
                .iter_mut()
                .zip(z_t.row(r))
                .zip(gain.row(t - 1))
            {
                *o += g * z;
            }
        }
        Ok(out)
    }
}
