//! Stepwise generator: a single recurrent cell walks the output schema, one
//! step per encoded block, with additive attention over all previous hidden
//! states. Scalar steps end in tanh, vector steps in a row softmax.
//!
//! Backpropagation is hand-derived; `gradient_check` validates it against
//! central finite differences.

use ndarray::{concatenate, s, Array1, Array2, Axis};
use rand::Rng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::optim::FlatParams;
use super::{GanSchema, GanStep};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GeneratorParams {
    pub z_dim: usize,
    pub hidden: usize,
    pub use_attention: bool,
    /// Gate weights, rows ordered (input, forget, cell, output); the column
    /// space is the concatenation [z, attention context, previous hidden].
    pub w_gates: Array2<f64>,
    pub b_gates: Array1<f64>,
    pub attn_key: Array2<f64>,
    pub attn_query: Array2<f64>,
    pub attn_bias: Array1<f64>,
    pub attn_v: Array1<f64>,
    /// One head per schema step; widths follow the step widths.
    pub heads_w: Vec<Array2<f64>>,
    pub heads_b: Vec<Array1<f64>>,
}

struct AttnCache {
    /// Per attended state: tanh(key + query + bias), batch × hidden.
    u: Vec<Array2<f64>>,
    /// Softmax weights, batch × attended-state count.
    alpha: Array2<f64>,
}

struct StepCache {
    full_input: Array2<f64>,
    c_prev: Array2<f64>,
    i: Array2<f64>,
    f: Array2<f64>,
    g: Array2<f64>,
    o: Array2<f64>,
    tanh_c: Array2<f64>,
    y: Array2<f64>,
    attn: Option<AttnCache>,
}

/// Everything the backward pass needs about one forward pass.
pub struct ForwardCache {
    steps: Vec<StepCache>,
    h_out: Vec<Array2<f64>>,
}

fn sigmoid(x: &Array2<f64>) -> Array2<f64> {
    x.mapv(|v| 1.0 / (1.0 + (-v).exp()))
}

fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.axis_iter_mut(Axis(0)) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    out
}

fn uniform_matrix(rng: &mut ChaCha20Rng, rows: usize, cols: usize, fan_in: usize) -> Array2<f64> {
    let a = 1.0 / (fan_in as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-a..a))
}

impl GeneratorParams {
    /// Fresh weights: uniform `±1/√fan_in` matrices, zero biases.
    pub fn new(
        schema: &GanSchema,
        z_dim: usize,
        hidden: usize,
        use_attention: bool,
        rng: &mut ChaCha20Rng,
    ) -> Self {
        let in_dim = z_dim + 2 * hidden;
        let w_gates = uniform_matrix(rng, 4 * hidden, in_dim, in_dim);
        let attn_key = uniform_matrix(rng, hidden, hidden, hidden);
        let attn_query = uniform_matrix(rng, hidden, hidden, hidden);
        let attn_v = uniform_matrix(rng, 1, hidden, hidden).row(0).to_owned();
        let mut heads_w = Vec::with_capacity(schema.steps.len());
        let mut heads_b = Vec::with_capacity(schema.steps.len());
        for step in &schema.steps {
            let width = step.width();
            heads_w.push(uniform_matrix(rng, width, hidden, hidden));
            heads_b.push(Array1::zeros(width));
        }
        GeneratorParams {
            z_dim,
            hidden,
            use_attention,
            w_gates,
            b_gates: Array1::zeros(4 * hidden),
            attn_key,
            attn_query,
            attn_bias: Array1::zeros(hidden),
            attn_v,
            heads_w,
            heads_b,
        }
    }

    /// Same shapes, all zeros; the gradient container.
    pub fn zeros_like(&self) -> Self {
        GeneratorParams {
            z_dim: self.z_dim,
            hidden: self.hidden,
            use_attention: self.use_attention,
            w_gates: Array2::zeros(self.w_gates.raw_dim()),
            b_gates: Array1::zeros(self.b_gates.raw_dim()),
            attn_key: Array2::zeros(self.attn_key.raw_dim()),
            attn_query: Array2::zeros(self.attn_query.raw_dim()),
            attn_bias: Array1::zeros(self.attn_bias.raw_dim()),
            attn_v: Array1::zeros(self.attn_v.raw_dim()),
            heads_w: self.heads_w.iter().map(|w| Array2::zeros(w.raw_dim())).collect(),
            heads_b: self.heads_b.iter().map(|b| Array1::zeros(b.raw_dim())).collect(),
        }
    }

    /// Attention context over `h_out[0..t]` queried by `h_prev`.
    fn attend(
        &self,
        h_out: &[Array2<f64>],
        h_prev: &Array2<f64>,
        batch: usize,
    ) -> (Array2<f64>, AttnCache) {
        let t = h_out.len();
        let q = h_prev.dot(&self.attn_query.t());
        let mut u = Vec::with_capacity(t);
        let mut logits = Array2::zeros((batch, t));
        for (s, h_s) in h_out.iter().enumerate() {
            let mut pre = h_s.dot(&self.attn_key.t()) + &q;
            pre += &self.attn_bias;
            let u_s = pre.mapv(f64::tanh);
            logits.column_mut(s).assign(&u_s.dot(&self.attn_v));
            u.push(u_s);
        }
        let alpha = softmax_rows(&logits);
        let mut context = Array2::zeros((batch, self.hidden));
        for (s, h_s) in h_out.iter().enumerate() {
            let col = alpha.column(s).to_owned().insert_axis(Axis(1));
            context += &(h_s * &col);
        }
        (context, AttnCache { u, alpha })
    }

    /// Runs the recurrence over the whole schema for a batch of noise rows.
    /// Returns the encoded rows (batch × encoded width) and the cache.
    pub fn forward(&self, z: &Array2<f64>, schema: &GanSchema) -> (Array2<f64>, ForwardCache) {
        let batch = z.nrows();
        assert_eq!(z.ncols(), self.z_dim, "noise width must equal z_dim");
        let h = self.hidden;
        let mut encoded = Array2::zeros((batch, schema.encoded_width()));
        let mut cache = ForwardCache { steps: Vec::new(), h_out: Vec::new() };

        let mut h_prev = Array2::zeros((batch, h));
        let mut c_prev: Array2<f64> = Array2::zeros((batch, h));
        let mut offset = 0usize;

        for (t, step) in schema.steps.iter().enumerate() {
            let (context, attn) = if self.use_attention && t > 0 {
                let (ctx, cache_t) = self.attend(&cache.h_out, &h_prev, batch);
                (ctx, Some(cache_t))
            } else {
                (Array2::zeros((batch, h)), None)
            };

            let full_input =
                concatenate(Axis(1), &[z.view(), context.view(), h_prev.view()]).unwrap();
            let mut pre = full_input.dot(&self.w_gates.t());
            pre += &self.b_gates;
            let i = sigmoid(&pre.slice(s![.., 0..h]).to_owned());
            let f = sigmoid(&pre.slice(s![.., h..2 * h]).to_owned());
            let g = pre.slice(s![.., 2 * h..3 * h]).mapv(f64::tanh);
            let o = sigmoid(&pre.slice(s![.., 3 * h..4 * h]).to_owned());
            let c = &f * &c_prev + &i * &g;
            let tanh_c = c.mapv(f64::tanh);
            let h_t = &o * &tanh_c;

            let mut logits = h_t.dot(&self.heads_w[t].t());
            logits += &self.heads_b[t];
            let y = match step {
                GanStep::NumericV { .. } => logits.mapv(f64::tanh),
                GanStep::NumericU { .. } | GanStep::Categorical { .. } => softmax_rows(&logits),
            };
            let width = step.width();
            encoded.slice_mut(s![.., offset..offset + width]).assign(&y);
            offset += width;

            cache.steps.push(StepCache {
                full_input,
                c_prev: c_prev.clone(),
                i,
                f,
                g,
                o,
                tanh_c,
                y,
                attn,
            });
            cache.h_out.push(h_t.clone());
            h_prev = h_t;
            c_prev = c;
        }
        (encoded, cache)
    }

    /// Gradients of a scalar loss with respect to every weight, given the
    /// loss gradient on the encoded output. Mirrors `forward` step by step in
    /// reverse; attention deposits gradient into every attended hidden state.
    pub fn backward(
        &self,
        schema: &GanSchema,
        cache: &ForwardCache,
        d_encoded: &Array2<f64>,
    ) -> GeneratorParams {
        let batch = d_encoded.nrows();
        let h = self.hidden;
        let z_dim = self.z_dim;
        let n_steps = schema.steps.len();
        let mut grads = self.zeros_like();
        let mut dh_acc: Vec<Array2<f64>> =
            (0..n_steps).map(|_| Array2::zeros((batch, h))).collect();

        // Head gradients first; they seed dh at each step.
        let mut offset = 0usize;
        for (t, step) in schema.steps.iter().enumerate() {
            let width = step.width();
            let dy = d_encoded.slice(s![.., offset..offset + width]).to_owned();
            offset += width;
            let y = &cache.steps[t].y;
            let dp = match step {
                GanStep::NumericV { .. } => &dy * &y.mapv(|v| 1.0 - v * v),
                GanStep::NumericU { .. } | GanStep::Categorical { .. } => {
                    let dot = (&dy * y).sum_axis(Axis(1)).insert_axis(Axis(1));
                    y * &(&dy - &dot)
                }
            };
            grads.heads_w[t] += &dp.t().dot(&cache.h_out[t]);
            grads.heads_b[t] += &dp.sum_axis(Axis(0));
            dh_acc[t] += &dp.dot(&self.heads_w[t]);
        }

        let mut dc: Array2<f64> = Array2::zeros((batch, h));
        for t in (0..n_steps).rev() {
            let sc = &cache.steps[t];
            let dh = std::mem::replace(&mut dh_acc[t], Array2::zeros((0, 0)));

            let do_ = &dh * &sc.tanh_c;
            let dpre_o = &do_ * &(&sc.o * &sc.o.mapv(|v| 1.0 - v));
            dc += &(&dh * &sc.o * &sc.tanh_c.mapv(|v| 1.0 - v * v));
            let di = &dc * &sc.g;
            let dpre_i = &di * &(&sc.i * &sc.i.mapv(|v| 1.0 - v));
            let dg = &dc * &sc.i;
            let dpre_g = &dg * &sc.g.mapv(|v| 1.0 - v * v);
            let df = &dc * &sc.c_prev;
            let dpre_f = &df * &(&sc.f * &sc.f.mapv(|v| 1.0 - v));
            let dc_prev = &dc * &sc.f;

            let dpre = concatenate(
                Axis(1),
                &[dpre_i.view(), dpre_f.view(), dpre_g.view(), dpre_o.view()],
            )
            .unwrap();
            grads.w_gates += &dpre.t().dot(&sc.full_input);
            grads.b_gates += &dpre.sum_axis(Axis(0));
            let dfull = dpre.dot(&self.w_gates);
            let dcontext = dfull.slice(s![.., z_dim..z_dim + h]).to_owned();
            let dh_prev_cell = dfull.slice(s![.., z_dim + h..]).to_owned();

            if t > 0 {
                if let Some(attn) = &sc.attn {
                    let h_prev = &cache.h_out[t - 1];
                    let mut dq: Array2<f64> = Array2::zeros((batch, h));
                    let mut dalpha = Array2::zeros((batch, t));
                    for s_idx in 0..t {
                        dalpha
                            .column_mut(s_idx)
                            .assign(&(&dcontext * &cache.h_out[s_idx]).sum_axis(Axis(1)));
                        let col = attn.alpha.column(s_idx).to_owned().insert_axis(Axis(1));
                        dh_acc[s_idx] += &(&dcontext * &col);
                    }
                    let inner =
                        (&dalpha * &attn.alpha).sum_axis(Axis(1)).insert_axis(Axis(1));
                    let de = &attn.alpha * &(&dalpha - &inner);
                    let v_row = self.attn_v.view().insert_axis(Axis(0));
                    for s_idx in 0..t {
                        let de_col = de.column(s_idx).to_owned();
                        let u_s = &attn.u[s_idx];
                        grads.attn_v += &u_s.t().dot(&de_col);
                        let du = de_col.insert_axis(Axis(1)).dot(&v_row);
                        let dpre_a = &du * &u_s.mapv(|v| 1.0 - v * v);
                        grads.attn_key += &dpre_a.t().dot(&cache.h_out[s_idx]);
                        grads.attn_query += &dpre_a.t().dot(h_prev);
                        grads.attn_bias += &dpre_a.sum_axis(Axis(0));
                        dh_acc[s_idx] += &dpre_a.dot(&self.attn_key);
                        dq += &dpre_a.dot(&self.attn_query);
                    }
                    dh_acc[t - 1] += &dq;
                }
                dh_acc[t - 1] += &dh_prev_cell;
            }
            dc = dc_prev;
        }
        grads
    }
}

impl FlatParams for GeneratorParams {
    fn slices(&self) -> Vec<&[f64]> {
        let mut out = vec![
            self.w_gates.as_slice().unwrap(),
            self.b_gates.as_slice().unwrap(),
            self.attn_key.as_slice().unwrap(),
            self.attn_query.as_slice().unwrap(),
            self.attn_bias.as_slice().unwrap(),
            self.attn_v.as_slice().unwrap(),
        ];
        for (w, b) in self.heads_w.iter().zip(&self.heads_b) {
            out.push(w.as_slice().unwrap());
            out.push(b.as_slice().unwrap());
        }
        out
    }

    fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = vec![
            self.w_gates.as_slice_mut().unwrap(),
            self.b_gates.as_slice_mut().unwrap(),
            self.attn_key.as_slice_mut().unwrap(),
            self.attn_query.as_slice_mut().unwrap(),
            self.attn_bias.as_slice_mut().unwrap(),
            self.attn_v.as_slice_mut().unwrap(),
        ];
        for (w, b) in self.heads_w.iter_mut().zip(&mut self.heads_b) {
            out.push(w.as_slice_mut().unwrap());
            out.push(b.as_slice_mut().unwrap());
        }
        out
    }
}
