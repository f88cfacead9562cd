//! LSTM encoder–decoder autoencoder over scalar window sequences.
//!
//! The encoder reads a window one value per step; its final hidden state is
//! mapped linearly to the latent code. The decoder starts from a state
//! derived from the latent code, receives no input, and emits one value per
//! step through a linear read-out. Training minimizes the mean squared
//! reconstruction error with Adam over mini-batches.
//!
//! All parameters live in one flat vector so the optimizer and the gradient
//! checker can treat the model uniformly.

use rand::seq::SliceRandom;
use rand::{RngExt, SeedableRng};
use rand_pcg::Pcg64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AeConfig {
    pub input_len: usize,
    pub hidden: usize,
    pub latent: usize,
    pub epochs: usize,
    pub batch: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Global gradient-norm clip applied per batch; 0 disables it.
    pub grad_clip: f64,
}

impl Default for AeConfig {
    fn default() -> Self {
        Self {
            input_len: crate::stream::DEFAULT_WINDOW,
            hidden: 32,
            latent: 4,
            epochs: 50,
            batch: 32,
            learning_rate: 1e-3,
            seed: 0,
            grad_clip: 5.0,
        }
    }
}

impl AeConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("input_len", self.input_len),
            ("hidden", self.hidden),
            ("latent", self.latent),
            ("epochs", self.epochs),
            ("batch", self.batch),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::invalid(name, "must be positive"));
            }
        }
        if self.latent > self.hidden {
            return Err(Error::invalid(
                "latent",
                format!("{} exceeds hidden size {}", self.latent, self.hidden),
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning_rate", "must be positive and finite"));
        }
        if !(self.grad_clip >= 0.0) {
            return Err(Error::invalid("grad_clip", "must be non-negative"));
        }
        Ok(())
    }
}

/// Offsets of each parameter block inside the flat parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub hidden: usize,
    pub latent: usize,
    /// encoder input weights, `4H`
    pub enc_wx: usize,
    /// encoder recurrent weights, `4H × H`
    pub enc_wh: usize,
    /// encoder bias, `4H`
    pub enc_b: usize,
    /// hidden-to-latent, `L × H`
    pub lat_w: usize,
    pub lat_b: usize,
    /// latent-to-decoder hidden state, `H × L`
    pub sh_w: usize,
    pub sh_b: usize,
    /// latent-to-decoder cell state, `H × L`
    pub sc_w: usize,
    pub sc_b: usize,
    /// decoder recurrent weights, `4H × H`
    pub dec_wh: usize,
    pub dec_b: usize,
    /// read-out, `H`
    pub out_w: usize,
    pub out_b: usize,
    pub len: usize,
}

impl Layout {
    pub fn new(hidden: usize, latent: usize) -> Self {
        let h4 = 4 * hidden;
        let mut at = 0;
        let mut take = |n: usize| {
            let o = at;
            at += n;
            o
        };
        let enc_wx = take(h4);
        let enc_wh = take(h4 * hidden);
        let enc_b = take(h4);
        let lat_w = take(latent * hidden);
        let lat_b = take(latent);
        let sh_w = take(hidden * latent);
        let sh_b = take(hidden);
        let sc_w = take(hidden * latent);
        let sc_b = take(hidden);
        let dec_wh = take(h4 * hidden);
        let dec_b = take(h4);
        let out_w = take(hidden);
        let out_b = take(1);
        Self {
            hidden,
            latent,
            enc_wx,
            enc_wh,
            enc_b,
            lat_w,
            lat_b,
            sh_w,
            sh_b,
            sc_w,
            sc_b,
            dec_wh,
            dec_b,
            out_w,
            out_b,
            len: at,
        }
    }

    /// Index ranges of the forget-gate biases (gate order i, f, g, o).
    fn forget_biases(&self) -> [std::ops::Range<usize>; 2] {
        let h = self.hidden;
        [
            self.enc_b + h..self.enc_b + 2 * h,
            self.dec_b + h..self.dec_b + 2 * h,
        ]
    }
}

/// Summary of reconstruction losses over the training windows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossStats {
    pub count: usize,
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
    pub q50: f64,
    pub q90: f64,
    pub q95: f64,
    pub q99: f64,
}

impl LossStats {
    pub fn from_losses(losses: &[f64]) -> Option<Self> {
        if losses.is_empty() {
            return None;
        }
        let mut sorted = losses.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len() as f64;
        let mean = sorted.iter().sum::<f64>() / n;
        let var = sorted.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / n;
        Some(Self {
            count: sorted.len(),
            mean,
            std: var.sqrt(),
            min: sorted[0],
            max: sorted[sorted.len() - 1],
            q50: quantile_sorted(&sorted, 0.5),
            q90: quantile_sorted(&sorted, 0.9),
            q95: quantile_sorted(&sorted, 0.95),
            q99: quantile_sorted(&sorted, 0.99),
        })
    }
}

/// Linear-interpolation quantile of ascending `sorted` data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let q = q.clamp(0.0, 1.0);
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

#[derive(Debug, Clone, PartialEq)]
pub struct AeOutput {
    pub latent: Vec<f64>,
    pub recon: Vec<f64>,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AeModel {
    config: AeConfig,
    layout: Layout,
    params: Vec<f64>,
    loss_stats: Option<LossStats>,
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Four-lane dot product; lets the compiler vectorize despite strict FP order.
#[inline]
fn dot4(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0; 4];
    let chunks = n / 4;
    for c in 0..chunks {
        let i = 4 * c;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in 4 * chunks..n {
        s += a[i] * b[i];
    }
    s
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yv, &xv) in y.iter_mut().zip(x) {
        *yv += alpha * xv;
    }
}

/// Per-step activations of one LSTM layer, kept for backpropagation.
#[derive(Debug, Clone, Default)]
struct LayerTape {
    /// gate activations per step, `steps × 4H` (i, f, g, o)
    gates: Vec<f64>,
    /// cell states, `(steps + 1) × H`, row 0 is the initial state
    cells: Vec<f64>,
    /// hidden states, `(steps + 1) × H`, row 0 is the initial state
    hiddens: Vec<f64>,
}

impl LayerTape {
    fn reset(&mut self, steps: usize, hidden: usize) {
        self.gates.clear();
        self.gates.resize(steps * 4 * hidden, 0.0);
        self.cells.clear();
        self.cells.resize((steps + 1) * hidden, 0.0);
        self.hiddens.clear();
        self.hiddens.resize((steps + 1) * hidden, 0.0);
    }
}

/// Reusable forward/backward scratch space for one model shape.
#[derive(Debug, Clone, Default)]
pub struct Tape {
    enc: LayerTape,
    dec: LayerTape,
    latent: Vec<f64>,
    /// pre-activation of the decoder's initial hidden state
    state_h: Vec<f64>,
    recon: Vec<f64>,
}

/// One LSTM step. `pre` receives the gate pre-activations on entry (bias +
/// input terms already added) and the gate activations on exit.
#[inline]
fn lstm_step(
    wh: &[f64],
    hidden: usize,
    h_prev: &[f64],
    c_prev: &[f64],
    pre: &mut [f64],
    c_out: &mut [f64],
    h_out: &mut [f64],
) {
    for (r, p) in pre.iter_mut().enumerate() {
        *p += dot4(&wh[r * hidden..(r + 1) * hidden], h_prev);
    }
    let (i_g, rest) = pre.split_at_mut(hidden);
    let (f_g, rest) = rest.split_at_mut(hidden);
    let (g_g, o_g) = rest.split_at_mut(hidden);
    for j in 0..hidden {
        let i = sigmoid(i_g[j]);
        let f = sigmoid(f_g[j]);
        let g = g_g[j].tanh();
        let o = sigmoid(o_g[j]);
        let c = f * c_prev[j] + i * g;
        i_g[j] = i;
        f_g[j] = f;
        g_g[j] = g;
        o_g[j] = o;
        c_out[j] = c;
        h_out[j] = o * c.tanh();
    }
}

/// Backpropagates one LSTM step. On entry `dh`/`dc` hold the gradient w.r.t.
/// this step's outputs; on exit they hold the gradient w.r.t. the previous
/// state. `da` is scratch of length 4H and ends up holding the gate
/// pre-activation gradient.
#[allow(clippy::too_many_arguments)]
#[inline]
fn lstm_step_back(
    wh: &[f64],
    hidden: usize,
    gates: &[f64],
    c_prev: &[f64],
    c: &[f64],
    h_prev: &[f64],
    dh: &mut [f64],
    dc: &mut [f64],
    da: &mut [f64],
    d_wh: &mut [f64],
    d_b: &mut [f64],
) {
    for j in 0..hidden {
        let i = gates[j];
        let f = gates[hidden + j];
        let g = gates[2 * hidden + j];
        let o = gates[3 * hidden + j];
        let tc = c[j].tanh();
        let d_o = dh[j] * tc;
        let dcj = dc[j] + dh[j] * o * (1.0 - tc * tc);
        da[j] = dcj * g * i * (1.0 - i);
        da[hidden + j] = dcj * c_prev[j] * f * (1.0 - f);
        da[2 * hidden + j] = dcj * i * (1.0 - g * g);
        da[3 * hidden + j] = d_o * o * (1.0 - o);
        dc[j] = dcj * f;
    }
    dh.iter_mut().for_each(|v| *v = 0.0);
    for (r, &dar) in da.iter().enumerate() {
        d_b[r] += dar;
        if dar != 0.0 {
            let row = r * hidden..(r + 1) * hidden;
            axpy(dar, h_prev, &mut d_wh[row.clone()]);
            axpy(dar, &wh[row], dh);
        }
    }
}

/// Initial-state map: `h0 = tanh(Wsh z + bsh)`, `c0 = Wsc z + bsc`.
fn decoder_state(p: &[f64], l: &Layout, z: &[f64], pre_h: &mut [f64], h0: &mut [f64], c0: &mut [f64]) {
    let (hd, ld) = (l.hidden, l.latent);
    for j in 0..hd {
        let u = p[l.sh_b + j] + dot4(&p[l.sh_w + j * ld..l.sh_w + (j + 1) * ld], z);
        pre_h[j] = u;
        h0[j] = u.tanh();
        c0[j] = p[l.sc_b + j] + dot4(&p[l.sc_w + j * ld..l.sc_w + (j + 1) * ld], z);
    }
}

impl AeModel {
    /// Seeded uniform(−r, r) initialization with `r = 1/√hidden`; forget-gate
    /// biases start at 1.
    pub fn init(config: AeConfig) -> Result<Self> {
        config.validate()?;
        let layout = Layout::new(config.hidden, config.latent);
        let r = 1.0 / (config.hidden as f64).sqrt();
        let mut rng = Pcg64::seed_from_u64(config.seed);
        let mut params: Vec<f64> = (0..layout.len)
            .map(|_| rng.random_range(-r..r))
            .collect();
        for range in layout.forget_biases() {
            params[range].iter_mut().for_each(|b| *b = 1.0);
        }
        Ok(Self {
            config,
            layout,
            params,
            loss_stats: None,
        })
    }

    /// Rebuilds a model from stored parameters.
    pub fn from_parts(config: AeConfig, params: Vec<f64>, loss_stats: Option<LossStats>) -> Result<Self> {
        config.validate()?;
        let layout = Layout::new(config.hidden, config.latent);
        if params.len() != layout.len {
            return Err(Error::ModelFormat(format!(
                "expected {} parameters, found {}",
                layout.len,
                params.len()
            )));
        }
        Ok(Self {
            config,
            layout,
            params,
            loss_stats,
        })
    }

    pub fn config(&self) -> &AeConfig {
        &self.config
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn loss_stats(&self) -> Option<&LossStats> {
        self.loss_stats.as_ref()
    }

    pub fn input_len(&self) -> usize {
        self.config.input_len
    }

    pub fn latent_dim(&self) -> usize {
        self.config.latent
    }

    fn check_input(&self, x: &[f64]) {
        assert_eq!(x.len(), self.config.input_len, "window length must match the model");
    }

    /// Encoder pass without storing activations.
    fn encode_into(&self, x: &[f64], z: &mut [f64]) {
        let (p, l) = (&self.params, &self.layout);
        let hd = l.hidden;
        let mut h = vec![0.0; hd];
        let mut c = vec![0.0; hd];
        let mut h_next = vec![0.0; hd];
        let mut c_next = vec![0.0; hd];
        let mut pre = vec![0.0; 4 * hd];
        let wx = &p[l.enc_wx..l.enc_wx + 4 * hd];
        let b = &p[l.enc_b..l.enc_b + 4 * hd];
        let wh = &p[l.enc_wh..l.enc_wh + 4 * hd * hd];
        for &xt in x {
            for r in 0..4 * hd {
                pre[r] = b[r] + wx[r] * xt;
            }
            lstm_step(wh, hd, &h, &c, &mut pre, &mut c_next, &mut h_next);
            std::mem::swap(&mut h, &mut h_next);
            std::mem::swap(&mut c, &mut c_next);
        }
        for (k, zk) in z.iter_mut().enumerate() {
            *zk = p[l.lat_b + k] + dot4(&p[l.lat_w + k * hd..l.lat_w + (k + 1) * hd], &h);
        }
    }

    /// Latent code of a window.
    pub fn encode(&self, x: &[f64]) -> Vec<f64> {
        self.check_input(x);
        let mut z = vec![0.0; self.config.latent];
        self.encode_into(x, &mut z);
        z
    }

    /// Latent code, reconstruction and mean squared reconstruction error.
    pub fn forward(&self, x: &[f64]) -> AeOutput {
        self.check_input(x);
        let (p, l) = (&self.params, &self.layout);
        let hd = l.hidden;
        let mut latent = vec![0.0; l.latent];
        self.encode_into(x, &mut latent);

        let mut pre_h = vec![0.0; hd];
        let mut h = vec![0.0; hd];
        let mut c = vec![0.0; hd];
        decoder_state(p, l, &latent, &mut pre_h, &mut h, &mut c);
        let mut h_next = vec![0.0; hd];
        let mut c_next = vec![0.0; hd];
        let mut pre = vec![0.0; 4 * hd];
        let b = &p[l.dec_b..l.dec_b + 4 * hd];
        let wh = &p[l.dec_wh..l.dec_wh + 4 * hd * hd];
        let out_w = &p[l.out_w..l.out_w + hd];
        let out_b = p[l.out_b];
        let mut recon = Vec::with_capacity(x.len());
        let mut loss = 0.0;
        for &xt in x {
            pre.copy_from_slice(b);
            lstm_step(wh, hd, &h, &c, &mut pre, &mut c_next, &mut h_next);
            std::mem::swap(&mut h, &mut h_next);
            std::mem::swap(&mut c, &mut c_next);
            let y = out_b + dot4(out_w, &h);
            loss += (y - xt) * (y - xt);
            recon.push(y);
        }
        AeOutput {
            latent,
            recon,
            loss: loss / x.len() as f64,
        }
    }

    /// Reconstruction loss only.
    pub fn loss(&self, x: &[f64]) -> f64 {
        self.forward(x).loss
    }

    /// Forward pass recording activations, then backpropagation through
    /// time. Adds `d loss / d params` into `grad` and returns the loss.
    pub fn loss_and_grad(&self, x: &[f64], grad: &mut [f64], tape: &mut Tape) -> f64 {
        self.check_input(x);
        assert_eq!(grad.len(), self.params.len());
        let (p, l) = (&self.params, &self.layout);
        let hd = l.hidden;
        let h4 = 4 * hd;
        let steps = x.len();
        tape.enc.reset(steps, hd);
        tape.dec.reset(steps, hd);
        tape.latent.clear();
        tape.latent.resize(l.latent, 0.0);
        tape.state_h.clear();
        tape.state_h.resize(hd, 0.0);
        tape.recon.clear();

        // encoder
        {
            let wx = &p[l.enc_wx..l.enc_wx + h4];
            let b = &p[l.enc_b..l.enc_b + h4];
            let wh = &p[l.enc_wh..l.enc_wh + h4 * hd];
            let LayerTape { gates, cells, hiddens } = &mut tape.enc;
            for (t, &xt) in x.iter().enumerate() {
                let pre = &mut gates[t * h4..(t + 1) * h4];
                for r in 0..h4 {
                    pre[r] = b[r] + wx[r] * xt;
                }
                let (c_prev, c_out) = cells[t * hd..(t + 2) * hd].split_at_mut(hd);
                let (h_prev, h_out) = hiddens[t * hd..(t + 2) * hd].split_at_mut(hd);
                lstm_step(wh, hd, h_prev, c_prev, pre, c_out, h_out);
            }
            let h_last = &hiddens[steps * hd..(steps + 1) * hd];
            for k in 0..l.latent {
                tape.latent[k] = p[l.lat_b + k] + dot4(&p[l.lat_w + k * hd..l.lat_w + (k + 1) * hd], h_last);
            }
        }

        // decoder
        let mut loss = 0.0;
        {
            let LayerTape { gates, cells, hiddens } = &mut tape.dec;
            let (h0, c0) = (&mut hiddens[..hd], &mut cells[..hd]);
            decoder_state(p, l, &tape.latent, &mut tape.state_h, h0, c0);
            let b = &p[l.dec_b..l.dec_b + h4];
            let wh = &p[l.dec_wh..l.dec_wh + h4 * hd];
            let out_w = &p[l.out_w..l.out_w + hd];
            for (t, &xt) in x.iter().enumerate() {
                let pre = &mut gates[t * h4..(t + 1) * h4];
                pre.copy_from_slice(b);
                let (c_prev, c_out) = cells[t * hd..(t + 2) * hd].split_at_mut(hd);
                let (h_prev, h_out) = hiddens[t * hd..(t + 2) * hd].split_at_mut(hd);
                lstm_step(wh, hd, h_prev, c_prev, pre, c_out, h_out);
                let y = p[l.out_b] + dot4(out_w, h_out);
                loss += (y - xt) * (y - xt);
                tape.recon.push(y);
            }
        }
        let inv_n = 1.0 / steps as f64;
        loss *= inv_n;

        // backward: decoder
        let mut dh = vec![0.0; hd];
        let mut dc = vec![0.0; hd];
        let mut da = vec![0.0; h4];
        {
            let wh = &p[l.dec_wh..l.dec_wh + h4 * hd];
            let out_w = &p[l.out_w..l.out_w + hd];
            let LayerTape { gates, cells, hiddens } = &tape.dec;
            for t in (0..steps).rev() {
                let dy = 2.0 * (tape.recon[t] - x[t]) * inv_n;
                let h_t = &hiddens[(t + 1) * hd..(t + 2) * hd];
                axpy(dy, h_t, &mut grad[l.out_w..l.out_w + hd]);
                grad[l.out_b] += dy;
                axpy(dy, out_w, &mut dh);
                let (gw, gb) = split_two(grad, l.dec_wh, h4 * hd, l.dec_b, h4);
                lstm_step_back(
                    wh,
                    hd,
                    &gates[t * h4..(t + 1) * h4],
                    &cells[t * hd..(t + 1) * hd],
                    &cells[(t + 1) * hd..(t + 2) * hd],
                    &hiddens[t * hd..(t + 1) * hd],
                    &mut dh,
                    &mut dc,
                    &mut da,
                    gw,
                    gb,
                );
            }
        }

        // backward: decoder initial state and latent map
        let mut dz = vec![0.0; l.latent];
        {
            let ld = l.latent;
            let h0 = &tape.dec.hiddens[..hd];
            for j in 0..hd {
                let du = dh[j] * (1.0 - h0[j] * h0[j]);
                grad[l.sh_b + j] += du;
                axpy(du, &tape.latent, &mut grad[l.sh_w + j * ld..l.sh_w + (j + 1) * ld]);
                axpy(du, &p[l.sh_w + j * ld..l.sh_w + (j + 1) * ld], &mut dz);
                let dcj = dc[j];
                grad[l.sc_b + j] += dcj;
                axpy(dcj, &tape.latent, &mut grad[l.sc_w + j * ld..l.sc_w + (j + 1) * ld]);
                axpy(dcj, &p[l.sc_w + j * ld..l.sc_w + (j + 1) * ld], &mut dz);
            }
        }
        dh.iter_mut().for_each(|v| *v = 0.0);
        dc.iter_mut().for_each(|v| *v = 0.0);
        {
            let h_last = &tape.enc.hiddens[steps * hd..(steps + 1) * hd];
            for (k, &dzk) in dz.iter().enumerate() {
                grad[l.lat_b + k] += dzk;
                axpy(dzk, h_last, &mut grad[l.lat_w + k * hd..l.lat_w + (k + 1) * hd]);
                axpy(dzk, &p[l.lat_w + k * hd..l.lat_w + (k + 1) * hd], &mut dh);
            }
        }

        // backward: encoder
        {
            let wh = &p[l.enc_wh..l.enc_wh + h4 * hd];
            let LayerTape { gates, cells, hiddens } = &tape.enc;
            for t in (0..steps).rev() {
                let (gw, gb) = split_two(grad, l.enc_wh, h4 * hd, l.enc_b, h4);
                lstm_step_back(
                    wh,
                    hd,
                    &gates[t * h4..(t + 1) * h4],
                    &cells[t * hd..(t + 1) * hd],
                    &cells[(t + 1) * hd..(t + 2) * hd],
                    &hiddens[t * hd..(t + 1) * hd],
                    &mut dh,
                    &mut dc,
                    &mut da,
                    gw,
                    gb,
                );
                axpy(x[t], &da, &mut grad[l.enc_wx..l.enc_wx + h4]);
            }
        }
        loss
    }

    /// Gradient of the loss for a single window.
    pub fn gradient(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let mut grad = vec![0.0; self.params.len()];
        let loss = self.loss_and_grad(x, &mut grad, &mut Tape::default());
        (loss, grad)
    }

    /// Mini-batch Adam over `windows` for `config.epochs` epochs. Returns the
    /// mean training loss of each epoch and refreshes the loss statistics on
    /// `windows`.
    pub fn train(&mut self, windows: &[Vec<f64>]) -> Result<Vec<f64>> {
        let cfg = self.config.clone();
        if windows.len() < cfg.batch {
            return Err(Error::invalid(
                "training windows",
                format!("{} windows is fewer than one batch of {}", windows.len(), cfg.batch),
            ));
        }
        if let Some(w) = windows.iter().find(|w| w.len() != cfg.input_len) {
            return Err(Error::DimMismatch {
                expected: cfg.input_len,
                got: w.len(),
            });
        }

        let n = self.params.len();
        let mut adam = Adam::new(n, cfg.learning_rate);
        let mut grad = vec![0.0; n];
        let mut tape = Tape::default();
        // Batch order comes from a stream independent of the init stream.
        let mut rng = Pcg64::seed_from_u64(cfg.seed ^ 0x9e37_79b9_7f4a_7c15);
        let mut order: Vec<usize> = (0..windows.len()).collect();
        let mut history = Vec::with_capacity(cfg.epochs);

        for _ in 0..cfg.epochs {
            order.shuffle(&mut rng);
            let mut epoch_loss = 0.0;
            for batch in order.chunks(cfg.batch) {
                grad.iter_mut().for_each(|g| *g = 0.0);
                for &i in batch {
                    epoch_loss += self.loss_and_grad(&windows[i], &mut grad, &mut tape);
                }
                let scale = 1.0 / batch.len() as f64;
                grad.iter_mut().for_each(|g| *g *= scale);
                if cfg.grad_clip > 0.0 {
                    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
                    if norm > cfg.grad_clip {
                        let s = cfg.grad_clip / norm;
                        grad.iter_mut().for_each(|g| *g *= s);
                    }
                }
                adam.step(&mut self.params, &grad);
            }
            let mean = epoch_loss / windows.len() as f64;
            history.push(mean);
            if !mean.is_finite() {
                return Err(Error::Diverged(mean));
            }
        }
        self.refresh_loss_stats(windows);
        Ok(history)
    }

    /// Replaces the loss statistics with a summary of `losses`.
    pub fn set_loss_stats_from(&mut self, losses: &[f64]) {
        self.loss_stats = LossStats::from_losses(losses);
    }

    /// Recomputes the loss statistics over `windows`; returns the losses.
    pub fn refresh_loss_stats(&mut self, windows: &[Vec<f64>]) -> Vec<f64> {
        let losses: Vec<f64> = windows.iter().map(|w| self.loss(w)).collect();
        self.loss_stats = LossStats::from_losses(&losses);
        losses
    }
}

fn split_two(grad: &mut [f64], a: usize, a_len: usize, b: usize, b_len: usize) -> (&mut [f64], &mut [f64]) {
    debug_assert!(a + a_len <= b);
    let (lo, hi) = grad.split_at_mut(b);
    (&mut lo[a..a + a_len], &mut hi[..b_len])
}

/// Adaptive-moment optimizer (β1 = 0.9, β2 = 0.999, ε = 1e-8).
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub const BETA1: f64 = 0.9;
    pub const BETA2: f64 = 0.999;
    pub const EPS: f64 = 1e-8;

    pub fn new(n: usize, lr: f64) -> Self {
        Self {
            lr,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let bc1 = 1.0 - Self::BETA1.powi(self.t);
        let bc2 = 1.0 - Self::BETA2.powi(self.t);
        for ((p, &g), (m, v)) in params
            .iter_mut()
            .zip(grad)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            *m = Self::BETA1 * *m + (1.0 - Self::BETA1) * g;
            *v = Self::BETA2 * *v + (1.0 - Self::BETA2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= self.lr * m_hat / (v_hat.sqrt() + Self::EPS);
        }
    }
}

/// Anything with a flat parameter vector and a scalar loss per input.
pub trait Differentiable {
    fn parameters(&self) -> &[f64];
    fn parameters_mut(&mut self) -> &mut [f64];
    fn objective(&self, x: &[f64]) -> f64;
    fn analytic_gradient(&self, x: &[f64]) -> Vec<f64>;
}

impl Differentiable for AeModel {
    fn parameters(&self) -> &[f64] {
        &self.params
    }
    fn parameters_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }
    fn objective(&self, x: &[f64]) -> f64 {
        self.loss(x)
    }
    fn analytic_gradient(&self, x: &[f64]) -> Vec<f64> {
        self.gradient(x).1
    }
}

/// Step of the five-point central difference used by the gradient check.
/// Its error is O(h^4), so the step can be large enough that rounding in the
/// loss stays near 1e-12 even for parameters with gradients around 1e-10.
pub const FD_STEP: f64 = 1e-3;

/// Largest relative disagreement `|a − f| / max(1e-8, |a| + |f|)` between
/// `analytic` and five-point central differences of the model's objective.
pub fn compare_gradients<M: Differentiable + Clone>(model: &M, x: &[f64], analytic: &[f64]) -> f64 {
    assert_eq!(analytic.len(), model.parameters().len());
    let mut probe = model.clone();
    let mut worst = 0.0_f64;
    for (i, &a) in analytic.iter().enumerate() {
        let orig = probe.parameters()[i];
        let mut at = |offset: f64| {
            probe.parameters_mut()[i] = orig + offset;
            probe.objective(x)
        };
        let h = FD_STEP;
        let f = (at(-2.0 * h) - 8.0 * at(-h) + 8.0 * at(h) - at(2.0 * h)) / (12.0 * h);
        probe.parameters_mut()[i] = orig;
        let rel = (a - f).abs() / (a.abs() + f.abs()).max(1e-8);
        worst = worst.max(rel);
    }
    worst
}

/// Checks backpropagation against finite differences on one window.
pub fn gradient_check<M: Differentiable + Clone>(model: &M, x: &[f64]) -> f64 {
    compare_gradients(model, x, &model.analytic_gradient(x))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg(seed: u64) -> AeConfig {
        AeConfig {
            input_len: 8,
            hidden: 5,
            latent: 2,
            epochs: 30,
            batch: 4,
            learning_rate: 1e-2,
            seed,
            grad_clip: 5.0,
        }
    }

    fn wave(len: usize, phase: f64) -> Vec<f64> {
        (0..len).map(|t| (0.7 * t as f64 + phase).sin()).collect()
    }

    #[test]
    fn init_is_seeded() {
        let a = AeModel::init(small_cfg(3)).unwrap();
        let b = AeModel::init(small_cfg(3)).unwrap();
        let c = AeModel::init(small_cfg(4)).unwrap();
        assert_eq!(a.params(), b.params());
        assert_ne!(a.params(), c.params());
        let r = 1.0 / 5f64.sqrt();
        let l = a.layout();
        for (i, &p) in a.params().iter().enumerate() {
            let forget = (l.enc_b + 5..l.enc_b + 10).contains(&i) || (l.dec_b + 5..l.dec_b + 10).contains(&i);
            if forget {
                assert_eq!(p, 1.0);
            } else {
                assert!(p.abs() < r);
            }
        }
    }

    #[test]
    fn latent_larger_than_hidden_is_rejected() {
        let mut cfg = small_cfg(0);
        cfg.latent = 6;
        assert!(matches!(AeModel::init(cfg), Err(Error::Invalid { .. })));
    }

    #[test]
    fn forward_is_deterministic_and_consistent() {
        let m = AeModel::init(small_cfg(1)).unwrap();
        let x = wave(8, 0.3);
        let a = m.forward(&x);
        let b = m.forward(&x);
        assert_eq!(a, b);
        assert!(a.loss >= 0.0);
        assert_eq!(m.encode(&x), a.latent);
        let (loss, _) = m.gradient(&x);
        assert!((loss - a.loss).abs() < 1e-15);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let m = AeModel::init(small_cfg(7)).unwrap();
        let err = gradient_check(&m, &wave(8, 1.1));
        assert!(err < 1e-4, "max relative error {err}");
    }

    #[test]
    fn corrupted_gradient_is_caught() {
        let m = AeModel::init(small_cfg(7)).unwrap();
        let x = wave(8, 1.1);
        let mut g = m.gradient(&x).1;
        g[m.layout().dec_wh + 3] += 0.1;
        assert!(compare_gradients(&m, &x, &g) > 1e-2);
    }

    #[test]
    fn training_reduces_loss_and_is_repeatable() {
        let windows: Vec<Vec<f64>> = (0..16).map(|i| wave(8, i as f64 * 0.4)).collect();
        let mut a = AeModel::init(small_cfg(2)).unwrap();
        let mut b = AeModel::init(small_cfg(2)).unwrap();
        let ha = a.train(&windows).unwrap();
        let hb = b.train(&windows).unwrap();
        assert_eq!(ha, hb);
        assert_eq!(a.params(), b.params());
        let head = ha[..3].iter().sum::<f64>();
        let tail = ha[ha.len() - 3..].iter().sum::<f64>();
        assert!(tail < head, "{ha:?}");
        assert_eq!(a.loss_stats().unwrap().count, 16);
    }

    #[test]
    fn training_needs_a_full_batch() {
        let mut m = AeModel::init(small_cfg(0)).unwrap();
        assert!(m.train(&[wave(8, 0.0)]).is_err());
    }

    #[test]
    fn quantile_interpolates() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantile_sorted(&v, 0.5), 3.0);
        assert_eq!(quantile_sorted(&v, 0.0), 1.0);
        assert_eq!(quantile_sorted(&v, 1.0), 5.0);
        assert!((quantile_sorted(&v, 0.9) - 4.6).abs() < 1e-12);
    }
}
