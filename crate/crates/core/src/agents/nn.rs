//! Batched layers with hand-derived reverse passes.
//!
//! Every forward function returns the activations its backward counterpart
//! needs; backward functions accumulate parameter gradients in place and
//! return the gradient with respect to their inputs.

use ndarray::{Array2, Axis};
use rand::Rng;

pub type Matrix = Array2<f64>;

/// Named parameter tensors of one agent, in a fixed order.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    names: &'static [&'static str],
    tensors: Vec<Matrix>,
}

impl Params {
    /// Weights uniform in `[-scale, scale]`; tensors listed in `biases` start at zero.
    pub fn init<R: Rng + ?Sized>(
        names: &'static [&'static str],
        shapes: &[(usize, usize)],
        biases: &[usize],
        scale: f64,
        rng: &mut R,
    ) -> Self {
        assert_eq!(names.len(), shapes.len());
        let tensors = shapes
            .iter()
            .enumerate()
            .map(|(k, &(r, c))| {
                if biases.contains(&k) {
                    Matrix::zeros((r, c))
                } else {
                    Matrix::from_shape_simple_fn((r, c), || rng.gen_range(-scale..=scale))
                }
            })
            .collect();
        Params { names, tensors }
    }

    pub fn from_tensors(names: &'static [&'static str], tensors: Vec<Matrix>) -> Self {
        assert_eq!(names.len(), tensors.len());
        Params { names, tensors }
    }

    pub fn names(&self) -> &'static [&'static str] {
        self.names
    }

    pub fn tensors(&self) -> &[Matrix] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Matrix] {
        &mut self.tensors
    }

    pub fn get(&self, k: usize) -> &Matrix {
        &self.tensors[k]
    }

    pub fn count(&self) -> usize {
        self.tensors.iter().map(|t| t.len()).sum()
    }

    pub fn zeros_like(&self) -> Grads {
        Grads(self.tensors.iter().map(|t| Matrix::zeros(t.raw_dim())).collect())
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.iter().all(|t| t.iter().all(|v| v.is_finite()))
    }
}

/// Gradients aligned with a [`Params`] list.
#[derive(Debug, Clone, PartialEq)]
pub struct Grads(pub Vec<Matrix>);

impl Grads {
    pub fn norm(&self) -> f64 {
        self.0
            .iter()
            .map(|g| g.iter().map(|v| v * v).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }

    pub fn add_assign(&mut self, other: &Grads) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += b;
        }
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Activations of one batched LSTM step. Gate order is input, forget, cell, output.
#[derive(Debug, Clone)]
pub struct LstmCache {
    h_prev: Matrix,
    c_prev: Matrix,
    /// Post-activation gates, `B x 4H`.
    gates: Matrix,
    tanh_c: Matrix,
    h_prev_is_zero: bool,
}

pub struct LstmOut {
    pub h: Matrix,
    pub c: Matrix,
    pub cache: LstmCache,
}

/// One step: `gates = x_proj + h_prev · W_h + b`.
pub fn lstm_step(
    x_proj: Matrix,
    h_prev: &Matrix,
    c_prev: &Matrix,
    h_prev_is_zero: bool,
    w_h: &Matrix,
    bias: &Matrix,
) -> LstmOut {
    let hidden = w_h.nrows();
    let batch = x_proj.nrows();
    let mut gates = x_proj;
    if !h_prev_is_zero {
        ndarray::linalg::general_mat_mul(1.0, h_prev, w_h, 1.0, &mut gates);
    }
    gates += bias;

    let mut c = Matrix::zeros((batch, hidden));
    let mut tanh_c = Matrix::zeros((batch, hidden));
    let mut h = Matrix::zeros((batch, hidden));
    for b in 0..batch {
        let mut g_row = gates.row_mut(b);
        let g = g_row.as_slice_mut().expect("contiguous");
        let (gi, rest) = g.split_at_mut(hidden);
        let (gf, rest) = rest.split_at_mut(hidden);
        let (gg, go) = rest.split_at_mut(hidden);
        let cp = c_prev.row(b);
        let mut c_row = c.row_mut(b);
        let mut t_row = tanh_c.row_mut(b);
        let mut h_row = h.row_mut(b);
        for j in 0..hidden {
            let i = sigmoid(gi[j]);
            let f = sigmoid(gf[j]);
            let cg = gg[j].tanh();
            let o = sigmoid(go[j]);
            gi[j] = i;
            gf[j] = f;
            gg[j] = cg;
            go[j] = o;
            let cv = f * cp[j] + i * cg;
            let tc = cv.tanh();
            c_row[j] = cv;
            t_row[j] = tc;
            h_row[j] = o * tc;
        }
    }
    LstmOut {
        h,
        c,
        cache: LstmCache {
            h_prev: h_prev.clone(),
            c_prev: c_prev.clone(),
            gates,
            tanh_c,
            h_prev_is_zero,
        },
    }
}

/// Reverse pass of [`lstm_step`]. Returns `(d x_proj, d h_prev, d c_prev)`.
pub fn lstm_step_backward(
    cache: &LstmCache,
    dh: &Matrix,
    dc_next: &Matrix,
    w_h: &Matrix,
    dw_h: &mut Matrix,
    dbias: &mut Matrix,
) -> (Matrix, Matrix, Matrix) {
    let hidden = w_h.nrows();
    let batch = dh.nrows();
    let mut dpre = Matrix::zeros((batch, 4 * hidden));
    let mut dc_prev = Matrix::zeros((batch, hidden));
    for b in 0..batch {
        let gates = cache.gates.row(b);
        let g = gates.as_slice().expect("contiguous");
        let tc = cache.tanh_c.row(b);
        let cp = cache.c_prev.row(b);
        let dh_b = dh.row(b);
        let dcn = dc_next.row(b);
        let mut dp_row = dpre.row_mut(b);
        let dp = dp_row.as_slice_mut().expect("contiguous");
        let mut dcp = dc_prev.row_mut(b);
        for j in 0..hidden {
            let (i, f, cg, o) = (g[j], g[hidden + j], g[2 * hidden + j], g[3 * hidden + j]);
            let t = tc[j];
            let dc = dcn[j] + dh_b[j] * o * (1.0 - t * t);
            let d_o = dh_b[j] * t;
            dp[j] = dc * cg * i * (1.0 - i);
            dp[hidden + j] = dc * cp[j] * f * (1.0 - f);
            dp[2 * hidden + j] = dc * i * (1.0 - cg * cg);
            dp[3 * hidden + j] = d_o * o * (1.0 - o);
            dcp[j] = dc * f;
        }
    }
    *dbias += &dpre.sum_axis(Axis(0)).insert_axis(Axis(0));
    let dh_prev = if cache.h_prev_is_zero {
        Matrix::zeros((batch, hidden))
    } else {
        ndarray::linalg::general_mat_mul(1.0, &cache.h_prev.t(), &dpre, 1.0, dw_h);
        dpre.dot(&w_h.t())
    };
    (dpre, dh_prev, dc_prev)
}

/// Input projections of every token, `E · W_x`, gathered by token id.
///
/// With a small vocabulary it is cheaper to project the embedding table once
/// than to project each batch row.
#[derive(Debug, Clone)]
pub struct TokenProjection {
    pub table: Matrix,
}

impl TokenProjection {
    pub fn new(embed: &Matrix, w_x: &Matrix) -> Self {
        TokenProjection {
            table: embed.dot(w_x),
        }
    }

    pub fn gather(&self, tokens: &[usize]) -> Matrix {
        let mut out = Matrix::zeros((tokens.len(), self.table.ncols()));
        for (b, &t) in tokens.iter().enumerate() {
            out.row_mut(b).assign(&self.table.row(t));
        }
        out
    }
}

/// Scatters per-row gradients back onto the projection table.
pub fn scatter_token_grads(dtable: &mut Matrix, tokens: &[usize], drows: &Matrix) {
    for (b, &t) in tokens.iter().enumerate() {
        let mut row = dtable.row_mut(t);
        row += &drows.row(b);
    }
}

/// Chains the table gradient into the embedding and projection weights.
pub fn token_projection_backward(
    dtable: &Matrix,
    embed: &Matrix,
    w_x: &Matrix,
    dembed: &mut Matrix,
    dw_x: &mut Matrix,
) {
    ndarray::linalg::general_mat_mul(1.0, dtable, &w_x.t(), 1.0, dembed);
    ndarray::linalg::general_mat_mul(1.0, &embed.t(), dtable, 1.0, dw_x);
}

/// Rows of the first-layer weight matrix touched by each object's one-hot code.
pub fn active_rows(n_values: usize, attributes: &[usize]) -> Vec<usize> {
    attributes
        .iter()
        .enumerate()
        .map(|(a, &v)| a * n_values + v)
        .collect()
}

/// `tanh(onehot(x) · W + b)` for a batch, exploiting the one-hot input.
pub fn encode_objects(active: &[Vec<usize>], w: &Matrix, bias: &Matrix) -> Matrix {
    let mut out = Matrix::zeros((active.len(), w.ncols()));
    for (b, rows) in active.iter().enumerate() {
        let mut o = out.row_mut(b);
        o += &bias.row(0);
        for &r in rows {
            o += &w.row(r);
        }
        o.mapv_inplace(f64::tanh);
    }
    out
}

/// Reverse pass of [`encode_objects`] given its output.
pub fn encode_objects_backward(
    active: &[Vec<usize>],
    out: &Matrix,
    dout: &Matrix,
    dw: &mut Matrix,
    dbias: &mut Matrix,
) {
    for (b, rows) in active.iter().enumerate() {
        let dpre = &dout.row(b) * &out.row(b).mapv(|y| 1.0 - y * y);
        {
            let mut db = dbias.row_mut(0);
            db += &dpre;
        }
        for &r in rows {
            let mut row = dw.row_mut(r);
            row += &dpre;
        }
    }
}

/// Row-wise log-softmax.
pub fn log_softmax_rows(logits: &Matrix) -> Matrix {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
        row.mapv_inplace(|v| v - lse);
    }
    out
}

/// Entropy of each row of a log-probability matrix.
pub fn row_entropies(log_probs: &Matrix) -> Vec<f64> {
    log_probs
        .rows()
        .into_iter()
        .map(|r| -r.iter().map(|&lp| lp.exp() * lp).sum::<f64>())
        .collect()
}

/// `d H / d logits` for one softmax row: `-p (log p + H)`.
pub fn entropy_logit_grad(log_probs: &[f64], entropy: f64) -> Vec<f64> {
    log_probs
        .iter()
        .map(|&lp| -lp.exp() * (lp + entropy))
        .collect()
}

pub fn sample_categorical<R: Rng + ?Sized>(log_probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (k, &lp) in log_probs.iter().enumerate() {
        acc += lp.exp();
        if u < acc {
            return k;
        }
    }
    // rounding left u above the cumulative sum; take the last nonzero entry
    log_probs
        .iter()
        .rposition(|&lp| lp > f64::NEG_INFINITY)
        .unwrap_or(log_probs.len() - 1)
}

/// Argmax with ties broken towards the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = k;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rand_matrix(r: usize, c: usize, rng: &mut ChaCha8Rng) -> Matrix {
        Matrix::from_shape_simple_fn((r, c), || rng.gen_range(-0.5..0.5))
    }

    /// Unbatched textbook LSTM step as an independent reference.
    fn reference_step(x: &[f64], h: &[f64], c: &[f64], wh: &Matrix, b: &Matrix) -> (Vec<f64>, Vec<f64>) {
        let n = h.len();
        let mut pre = vec![0.0; 4 * n];
        for k in 0..4 * n {
            pre[k] = x[k] + b[[0, k]] + (0..n).map(|j| h[j] * wh[[j, k]]).sum::<f64>();
        }
        let mut h2 = vec![0.0; n];
        let mut c2 = vec![0.0; n];
        for j in 0..n {
            let i = sigmoid(pre[j]);
            let f = sigmoid(pre[n + j]);
            let g = pre[2 * n + j].tanh();
            let o = sigmoid(pre[3 * n + j]);
            c2[j] = f * c[j] + i * g;
            h2[j] = o * c2[j].tanh();
        }
        (h2, c2)
    }

    #[test]
    fn lstm_step_matches_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (b, n) = (3, 4);
        let x = rand_matrix(b, 4 * n, &mut rng);
        let h = rand_matrix(b, n, &mut rng);
        let c = rand_matrix(b, n, &mut rng);
        let wh = rand_matrix(n, 4 * n, &mut rng);
        let bias = rand_matrix(1, 4 * n, &mut rng);
        let out = lstm_step(x.clone(), &h, &c, false, &wh, &bias);
        for r in 0..b {
            let (h2, c2) = reference_step(
                x.row(r).as_slice().unwrap(),
                h.row(r).as_slice().unwrap(),
                c.row(r).as_slice().unwrap(),
                &wh,
                &bias,
            );
            for j in 0..n {
                assert!((out.h[[r, j]] - h2[j]).abs() < 1e-14);
                assert!((out.c[[r, j]] - c2[j]).abs() < 1e-14);
            }
        }
        // zero-state shortcut agrees with the full product
        let z = Matrix::zeros((b, n));
        let a = lstm_step(x.clone(), &z, &c, true, &wh, &bias);
        let full = lstm_step(x, &z, &c, false, &wh, &bias);
        assert_eq!(a.h, full.h);
    }

    #[test]
    fn lstm_backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (b, n) = (2, 3);
        let x = rand_matrix(b, 4 * n, &mut rng);
        let h = rand_matrix(b, n, &mut rng);
        let c = rand_matrix(b, n, &mut rng);
        let wh = rand_matrix(n, 4 * n, &mut rng);
        let bias = rand_matrix(1, 4 * n, &mut rng);
        let wgt_h = rand_matrix(b, n, &mut rng);
        let wgt_c = rand_matrix(b, n, &mut rng);
        let loss = |x: &Matrix, h: &Matrix, c: &Matrix, wh: &Matrix| {
            let o = lstm_step(x.clone(), h, c, false, wh, &bias);
            (&o.h * &wgt_h).sum() + (&o.c * &wgt_c).sum()
        };
        let out = lstm_step(x.clone(), &h, &c, false, &wh, &bias);
        let mut dwh = Matrix::zeros(wh.raw_dim());
        let mut db = Matrix::zeros(bias.raw_dim());
        let (dx, dh, dc) = lstm_step_backward(&out.cache, &wgt_h, &wgt_c, &wh, &mut dwh, &mut db);
        let eps = 1e-6;
        let check = |analytic: &Matrix, f: &dyn Fn(&Matrix) -> f64, base: &Matrix| {
            for idx in ndarray::indices_of(base) {
                let mut p = base.clone();
                p[idx] += eps;
                let mut m = base.clone();
                m[idx] -= eps;
                let num = (f(&p) - f(&m)) / (2.0 * eps);
                assert!((num - analytic[idx]).abs() < 1e-8, "{num} vs {}", analytic[idx]);
            }
        };
        check(&dx, &|v| loss(v, &h, &c, &wh), &x);
        check(&dh, &|v| loss(&x, v, &c, &wh), &h);
        check(&dc, &|v| loss(&x, &h, v, &wh), &c);
        check(&dwh, &|v| loss(&x, &h, &c, v), &wh);
    }

    #[test]
    fn softmax_helpers() {
        let lp = log_softmax_rows(&ndarray::array![[1.0, 2.0, 3.0], [0.0, 0.0, 0.0]]);
        for r in lp.rows() {
            assert!((r.iter().map(|v| v.exp()).sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let h = row_entropies(&lp);
        assert!((h[1] - 3f64.ln()).abs() < 1e-12);
        assert_eq!(argmax(&[0.1, 0.3, 0.3]), 1);
        assert_eq!(argmax(&[0.2, 0.2]), 0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let one_hot = [f64::NEG_INFINITY, 0.0, f64::NEG_INFINITY];
        for _ in 0..50 {
            assert_eq!(sample_categorical(&one_hot, &mut rng), 1);
        }
    }
}
