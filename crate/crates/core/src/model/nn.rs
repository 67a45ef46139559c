//! Dense layers, layer norm, multi-head self-attention and the pre-norm
//! encoder stack, all in f64 with hand-written backward passes. Shapes are
//! per-example: sequences are [S, D] matrices, no batch dimension.

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

const LN_EPS: f64 = 1e-5;

/// Visit every parameter slice in a fixed documented order. Used by the
/// optimizer, the serializer checksums and the gradient checker.
pub trait ParamVisit {
    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut [f64]));
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Linear {
    /// [in, out]
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Linear {
    pub fn zeros(d_in: usize, d_out: usize) -> Self {
        Linear {
            w: Array2::zeros((d_in, d_out)),
            b: Array1::zeros(d_out),
        }
    }

    pub fn xavier(d_in: usize, d_out: usize, rng: &mut ChaCha8Rng) -> Self {
        let a = (6.0 / (d_in + d_out) as f64).sqrt();
        let w = Array2::from_shape_fn((d_in, d_out), |_| rng.gen_range(-a..a));
        Linear {
            w,
            b: Array1::zeros(d_out),
        }
    }

    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        x.dot(&self.w) + &self.b
    }

    /// Accumulates weight gradients into `g` and returns the input gradient.
    pub fn backward(&self, x: &Array2<f64>, dy: &Array2<f64>, g: &mut Linear) -> Array2<f64> {
        g.w += &x.t().dot(dy);
        g.b += &dy.sum_axis(Axis(0));
        dy.dot(&self.w.t())
    }
}

impl ParamVisit for Linear {
    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut [f64])) {
        f("w", self.w.as_slice_mut().expect("contiguous"));
        f("b", self.b.as_slice_mut().expect("contiguous"));
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LayerNorm {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
}

pub struct LayerNormCache {
    xhat: Array2<f64>,
    inv_std: Array1<f64>,
}

impl LayerNorm {
    pub fn new(dim: usize) -> Self {
        LayerNorm {
            gamma: Array1::ones(dim),
            beta: Array1::zeros(dim),
        }
    }

    pub fn zeros(dim: usize) -> Self {
        LayerNorm {
            gamma: Array1::zeros(dim),
            beta: Array1::zeros(dim),
        }
    }

    pub fn forward(&self, x: &Array2<f64>) -> (Array2<f64>, LayerNormCache) {
        let d = x.ncols() as f64;
        let mut xhat = Array2::zeros(x.raw_dim());
        let mut inv_std = Array1::zeros(x.nrows());
        for (i, row) in x.rows().into_iter().enumerate() {
            let mu = row.sum() / d;
            let var = row.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / d;
            let inv = 1.0 / (var + LN_EPS).sqrt();
            inv_std[i] = inv;
            for (j, v) in row.iter().enumerate() {
                xhat[(i, j)] = (v - mu) * inv;
            }
        }
        let y = &xhat * &self.gamma + &self.beta;
        (y, LayerNormCache { xhat, inv_std })
    }

    pub fn backward(
        &self,
        cache: &LayerNormCache,
        dy: &Array2<f64>,
        g: &mut LayerNorm,
    ) -> Array2<f64> {
        let d = dy.ncols() as f64;
        let mut dx = Array2::zeros(dy.raw_dim());
        for i in 0..dy.nrows() {
            let mut sum_dxhat = 0.0;
            let mut sum_dxhat_xhat = 0.0;
            for j in 0..dy.ncols() {
                let dxh = dy[(i, j)] * self.gamma[j];
                sum_dxhat += dxh;
                sum_dxhat_xhat += dxh * cache.xhat[(i, j)];
                g.gamma[j] += dy[(i, j)] * cache.xhat[(i, j)];
                g.beta[j] += dy[(i, j)];
            }
            for j in 0..dy.ncols() {
                let dxh = dy[(i, j)] * self.gamma[j];
                dx[(i, j)] = cache.inv_std[i]
                    * (dxh - sum_dxhat / d - cache.xhat[(i, j)] * sum_dxhat_xhat / d);
            }
        }
        dx
    }
}

impl ParamVisit for LayerNorm {
    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut [f64])) {
        f("gamma", self.gamma.as_slice_mut().expect("contiguous"));
        f("beta", self.beta.as_slice_mut().expect("contiguous"));
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MultiHeadAttention {
    pub wq: Linear,
    pub wk: Linear,
    pub wv: Linear,
    pub wo: Linear,
    pub heads: usize,
}

pub struct AttentionCache {
    x: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    /// Softmax probabilities per head, each [S, S].
    probs: Vec<Array2<f64>>,
    ctx: Array2<f64>,
}

impl MultiHeadAttention {
    pub fn new(dim: usize, heads: usize, rng: &mut ChaCha8Rng) -> Self {
        MultiHeadAttention {
            wq: Linear::xavier(dim, dim, rng),
            wk: Linear::xavier(dim, dim, rng),
            wv: Linear::xavier(dim, dim, rng),
            wo: Linear::xavier(dim, dim, rng),
            heads,
        }
    }

    pub fn zeros(dim: usize, heads: usize) -> Self {
        MultiHeadAttention {
            wq: Linear::zeros(dim, dim),
            wk: Linear::zeros(dim, dim),
            wv: Linear::zeros(dim, dim),
            wo: Linear::zeros(dim, dim),
            heads,
        }
    }

    /// `mask[j]` is true for valid (attendable) key positions.
    pub fn forward(&self, x: &Array2<f64>, mask: &[bool]) -> (Array2<f64>, AttentionCache) {
        let (s, d) = (x.nrows(), x.ncols());
        let dh = d / self.heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let q = self.wq.forward(x);
        let k = self.wk.forward(x);
        let v = self.wv.forward(x);

        let mut ctx = Array2::zeros((s, d));
        let mut probs = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let span = h * dh..(h + 1) * dh;
            let qh = q.slice(ndarray::s![.., span.clone()]);
            let kh = k.slice(ndarray::s![.., span.clone()]);
            let vh = v.slice(ndarray::s![.., span.clone()]);
            let mut scores = qh.dot(&kh.t());
            scores *= scale;
            for j in 0..s {
                if !mask[j] {
                    for i in 0..s {
                        scores[(i, j)] = -1e30;
                    }
                }
            }
            // Row-wise softmax.
            let mut p = scores;
            for mut row in p.rows_mut() {
                let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let mut sum = 0.0;
                for x in row.iter_mut() {
                    *x = (*x - max).exp();
                    sum += *x;
                }
                for x in row.iter_mut() {
                    *x /= sum;
                }
            }
            let ctx_h = p.dot(&vh);
            ctx.slice_mut(ndarray::s![.., span]).assign(&ctx_h);
            probs.push(p);
        }
        let out = self.wo.forward(&ctx);
        (
            out,
            AttentionCache {
                x: x.clone(),
                q,
                k,
                v,
                probs,
                ctx,
            },
        )
    }

    pub fn backward(
        &self,
        cache: &AttentionCache,
        dy: &Array2<f64>,
        g: &mut MultiHeadAttention,
    ) -> Array2<f64> {
        let (s, d) = (cache.x.nrows(), cache.x.ncols());
        let dh = d / self.heads;
        let scale = 1.0 / (dh as f64).sqrt();

        let dctx = self.wo.backward(&cache.ctx, dy, &mut g.wo);

        let mut dq = Array2::zeros((s, d));
        let mut dk = Array2::zeros((s, d));
        let mut dv = Array2::zeros((s, d));
        for h in 0..self.heads {
            let span = h * dh..(h + 1) * dh;
            let p = &cache.probs[h];
            let qh = cache.q.slice(ndarray::s![.., span.clone()]);
            let kh = cache.k.slice(ndarray::s![.., span.clone()]);
            let vh = cache.v.slice(ndarray::s![.., span.clone()]);
            let dctx_h = dctx.slice(ndarray::s![.., span.clone()]);

            let dp = dctx_h.dot(&vh.t());
            let dvh = p.t().dot(&dctx_h);
            // Softmax backward per row: ds = p * (dp - sum(dp * p)).
            let mut dscores = Array2::zeros((s, s));
            for i in 0..s {
                let dot: f64 = (0..s).map(|j| dp[(i, j)] * p[(i, j)]).sum();
                for j in 0..s {
                    dscores[(i, j)] = p[(i, j)] * (dp[(i, j)] - dot);
                }
            }
            dscores *= scale;
            dq.slice_mut(ndarray::s![.., span.clone()])
                .assign(&dscores.dot(&kh));
            dk.slice_mut(ndarray::s![.., span.clone()])
                .assign(&dscores.t().dot(&qh));
            dv.slice_mut(ndarray::s![.., span]).assign(&dvh);
        }

        let mut dx = self.wq.backward(&cache.x, &dq, &mut g.wq);
        dx += &self.wk.backward(&cache.x, &dk, &mut g.wk);
        dx += &self.wv.backward(&cache.x, &dv, &mut g.wv);
        dx
    }
}

impl ParamVisit for MultiHeadAttention {
    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut [f64])) {
        self.wq.visit_mut(f);
        self.wk.visit_mut(f);
        self.wv.visit_mut(f);
        self.wo.visit_mut(f);
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeedForward {
    pub w1: Linear,
    pub w2: Linear,
}

pub struct FeedForwardCache {
    x: Array2<f64>,
    pre: Array2<f64>,
    act: Array2<f64>,
}

impl FeedForward {
    pub fn new(dim: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        FeedForward {
            w1: Linear::xavier(dim, hidden, rng),
            w2: Linear::xavier(hidden, dim, rng),
        }
    }

    pub fn zeros(dim: usize, hidden: usize) -> Self {
        FeedForward {
            w1: Linear::zeros(dim, hidden),
            w2: Linear::zeros(hidden, dim),
        }
    }

    pub fn forward(&self, x: &Array2<f64>) -> (Array2<f64>, FeedForwardCache) {
        let pre = self.w1.forward(x);
        let act = pre.mapv(|v| v.max(0.0));
        let y = self.w2.forward(&act);
        (
            y,
            FeedForwardCache {
                x: x.clone(),
                pre,
                act,
            },
        )
    }

    pub fn backward(
        &self,
        cache: &FeedForwardCache,
        dy: &Array2<f64>,
        g: &mut FeedForward,
    ) -> Array2<f64> {
        let dact = self.w2.backward(&cache.act, dy, &mut g.w2);
        let dpre = &dact * &cache.pre.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
        self.w1.backward(&cache.x, &dpre, &mut g.w1)
    }
}

impl ParamVisit for FeedForward {
    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut [f64])) {
        self.w1.visit_mut(f);
        self.w2.visit_mut(f);
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EncoderLayer {
    pub ln1: LayerNorm,
    pub attn: MultiHeadAttention,
    pub ln2: LayerNorm,
    pub ffn: FeedForward,
}

pub struct EncoderLayerCache {
    ln1: LayerNormCache,
    attn: AttentionCache,
    ln2: LayerNormCache,
    ffn: FeedForwardCache,
}

impl EncoderLayer {
    pub fn new(dim: usize, heads: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        EncoderLayer {
            ln1: LayerNorm::new(dim),
            attn: MultiHeadAttention::new(dim, heads, rng),
            ln2: LayerNorm::new(dim),
            ffn: FeedForward::new(dim, hidden, rng),
        }
    }

    pub fn zeros(dim: usize, heads: usize, hidden: usize) -> Self {
        EncoderLayer {
            ln1: LayerNorm::zeros(dim),
            attn: MultiHeadAttention::zeros(dim, heads),
            ln2: LayerNorm::zeros(dim),
            ffn: FeedForward::zeros(dim, hidden),
        }
    }

    /// Pre-norm residual block: x + attn(ln1(x)), then + ffn(ln2(.)).
    pub fn forward(&self, x: &Array2<f64>, mask: &[bool]) -> (Array2<f64>, EncoderLayerCache) {
        let (n1, ln1_cache) = self.ln1.forward(x);
        let (a, attn_cache) = self.attn.forward(&n1, mask);
        let r1 = x + &a;
        let (n2, ln2_cache) = self.ln2.forward(&r1);
        let (f, ffn_cache) = self.ffn.forward(&n2);
        let y = &r1 + &f;
        (
            y,
            EncoderLayerCache {
                ln1: ln1_cache,
                attn: attn_cache,
                ln2: ln2_cache,
                ffn: ffn_cache,
            },
        )
    }

    pub fn backward(
        &self,
        cache: &EncoderLayerCache,
        dy: &Array2<f64>,
        g: &mut EncoderLayer,
    ) -> Array2<f64> {
        let dn2 = self.ffn.backward(&cache.ffn, dy, &mut g.ffn);
        let mut dr1 = dy.clone();
        dr1 += &self.ln2.backward(&cache.ln2, &dn2, &mut g.ln2);
        let dn1 = self.attn.backward(&cache.attn, &dr1, &mut g.attn);
        let mut dx = dr1;
        dx += &self.ln1.backward(&cache.ln1, &dn1, &mut g.ln1);
        dx
    }
}

impl ParamVisit for EncoderLayer {
    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut [f64])) {
        self.ln1.visit_mut(f);
        self.attn.visit_mut(f);
        self.ln2.visit_mut(f);
        self.ffn.visit_mut(f);
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Encoder {
    pub layers: Vec<EncoderLayer>,
    pub final_ln: LayerNorm,
}

pub struct EncoderCache {
    layers: Vec<EncoderLayerCache>,
    final_ln: LayerNormCache,
}

impl Encoder {
    pub fn new(
        dim: usize,
        layers: usize,
        heads: usize,
        hidden: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        Encoder {
            layers: (0..layers)
                .map(|_| EncoderLayer::new(dim, heads, hidden, rng))
                .collect(),
            final_ln: LayerNorm::new(dim),
        }
    }

    pub fn zeros(dim: usize, layers: usize, heads: usize, hidden: usize) -> Self {
        Encoder {
            layers: (0..layers)
                .map(|_| EncoderLayer::zeros(dim, heads, hidden))
                .collect(),
            final_ln: LayerNorm::zeros(dim),
        }
    }

    pub fn forward(&self, x: &Array2<f64>, mask: &[bool]) -> (Array2<f64>, EncoderCache) {
        let mut h = x.clone();
        let mut caches = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let (next, cache) = layer.forward(&h, mask);
            h = next;
            caches.push(cache);
        }
        let (y, final_cache) = self.final_ln.forward(&h);
        (
            y,
            EncoderCache {
                layers: caches,
                final_ln: final_cache,
            },
        )
    }

    pub fn backward(&self, cache: &EncoderCache, dy: &Array2<f64>, g: &mut Encoder) -> Array2<f64> {
        let mut grad = self.final_ln.backward(&cache.final_ln, dy, &mut g.final_ln);
        for (layer, layer_cache, layer_grads) in
            itertools_rev(&self.layers, &cache.layers, &mut g.layers)
        {
            grad = layer.backward(layer_cache, &grad, layer_grads);
        }
        grad
    }
}

/// Reverse-order zip of layers, caches and gradient accumulators.
fn itertools_rev<'a>(
    layers: &'a [EncoderLayer],
    caches: &'a [EncoderLayerCache],
    grads: &'a mut [EncoderLayer],
) -> impl Iterator<
    Item = (
        &'a EncoderLayer,
        &'a EncoderLayerCache,
        &'a mut EncoderLayer,
    ),
> {
    layers
        .iter()
        .rev()
        .zip(caches.iter().rev())
        .zip(grads.iter_mut().rev())
        .map(|((a, b), c)| (a, b, c))
}

impl ParamVisit for Encoder {
    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut [f64])) {
        for layer in &mut self.layers {
            layer.visit_mut(f);
        }
        self.final_ln.visit_mut(f);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(42)
    }

    #[test]
    fn linear_shapes() {
        let l = Linear::xavier(4, 3, &mut rng());
        let x = Array2::from_shape_fn((2, 4), |(i, j)| (i + j) as f64);
        let y = l.forward(&x);
        assert_eq!(y.shape(), &[2, 3]);
    }

    #[test]
    fn encoder_preserves_length_and_symmetry() {
        let mut r = rng();
        let enc = Encoder::new(8, 2, 2, 16, &mut r);
        let x = Array2::from_shape_fn((1, 8), |(_, j)| j as f64 * 0.1);
        let (y, _) = enc.forward(&x, &[true]);
        assert_eq!(y.shape(), &[1, 8]);

        // Two identical rows produce identical outputs.
        let x = ndarray::stack![Axis(0), x.row(0), x.row(0), x.row(0)];
        let (y, _) = enc.forward(&x, &[true, true, true]);
        for j in 0..8 {
            assert!((y[(1, j)] - y[(2, j)]).abs() < 1e-12);
        }
    }

    #[test]
    fn encoder_is_permutation_equivariant() {
        // No positional encodings: permuting non-leading rows permutes
        // outputs identically.
        let mut r = rng();
        let enc = Encoder::new(8, 1, 2, 16, &mut r);
        let x = Array2::from_shape_fn((4, 8), |(i, j)| ((i * 7 + j * 3) % 5) as f64 * 0.3);
        let mask = vec![true; 4];
        let (y, _) = enc.forward(&x, &mask);
        // Swap rows 1 and 3.
        let mut xp = x.clone();
        let tmp: Vec<f64> = xp.row(1).to_vec();
        let r3: Vec<f64> = xp.row(3).to_vec();
        xp.row_mut(1).assign(&Array1::from_vec(r3));
        xp.row_mut(3).assign(&Array1::from_vec(tmp));
        let (yp, _) = enc.forward(&xp, &mask);
        for j in 0..8 {
            assert!((y[(1, j)] - yp[(3, j)]).abs() < 1e-10);
            assert!((y[(3, j)] - yp[(1, j)]).abs() < 1e-10);
            assert!((y[(0, j)] - yp[(0, j)]).abs() < 1e-10);
        }
    }

    #[test]
    fn masked_padding_does_not_change_outputs() {
        let mut r = rng();
        let enc = Encoder::new(8, 2, 2, 16, &mut r);
        let x = Array2::from_shape_fn((3, 8), |(i, j)| ((i + j) % 4) as f64 * 0.25);
        let (y, _) = enc.forward(&x, &[true, true, true]);

        let mut padded = Array2::zeros((5, 8));
        padded.slice_mut(ndarray::s![..3, ..]).assign(&x);
        let (yp, _) = enc.forward(&padded, &[true, true, true, false, false]);
        for i in 0..3 {
            for j in 0..8 {
                assert!((y[(i, j)] - yp[(i, j)]).abs() < 1e-6);
            }
        }
    }
}
