//! A deliberately small differentiable encoder for desk-scale training runs.
//!
//! Each token row is `normalize(P^T (E[token] + M[marker]))` where `E` is a
//! `vocab x d_in` embedding table, `P` a `d_in x dim` projection and `M` holds
//! one `d_in` vector per marker. The marker is added to every token, so it
//! conditions the whole encoding. There is no cross-token mixing.
//!
//! All parameters live in one flat buffer laid out as `[E | P | M]`, which is
//! also the layout of every gradient.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::types::{l2_norm, EmbeddingMatrix, QueryMarker};

/// Marker prepended (here: added) to the encoder input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EncoderMarker {
    /// Default query marker.
    Query,
    /// Query marker for within-passage sentence scoring.
    SentenceQuery,
    /// Passage marker.
    Passage,
}

impl EncoderMarker {
    pub const ALL: [EncoderMarker; 3] = [Self::Query, Self::SentenceQuery, Self::Passage];

    fn slot(self) -> usize {
        match self {
            Self::Query => 0,
            Self::SentenceQuery => 1,
            Self::Passage => 2,
        }
    }
}

impl From<QueryMarker> for EncoderMarker {
    fn from(m: QueryMarker) -> Self {
        match m {
            QueryMarker::Passage => Self::Query,
            QueryMarker::Sentence => Self::SentenceQuery,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyEncoder {
    vocab: usize,
    d_in: usize,
    dim: usize,
    params: Vec<f64>,
}

/// Standard deviation of the initial marker embeddings relative to tokens.
const MARKER_INIT_SCALE: f64 = 0.1;

impl ToyEncoder {
    pub fn param_count_for(vocab: usize, d_in: usize, dim: usize) -> usize {
        vocab * d_in + d_in * dim + 3 * d_in
    }

    pub fn from_params(vocab: usize, d_in: usize, dim: usize, params: Vec<f64>) -> Result<Self> {
        if vocab == 0 || d_in == 0 || dim == 0 {
            return Err(Error::InvalidArgument(alloc::format!(
                "encoder sizes must be positive (vocab {vocab}, d_in {d_in}, dim {dim})"
            )));
        }
        let expected = Self::param_count_for(vocab, d_in, dim);
        if params.len() != expected {
            return Err(Error::LengthMismatch {
                what: "encoder parameters",
                left: params.len(),
                right: expected,
            });
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidArgument("non-finite encoder parameter".into()));
        }
        Ok(Self {
            vocab,
            d_in,
            dim,
            params,
        })
    }

    /// Gaussian initialization: unit-variance token embeddings, projection
    /// scaled by `1/sqrt(d_in)`, small marker embeddings.
    pub fn random<R: Rng + ?Sized>(vocab: usize, d_in: usize, dim: usize, rng: &mut R) -> Result<Self> {
        let n = Self::param_count_for(vocab, d_in, dim);
        let mut params = vec![0.0; n];
        let proj_scale = 1.0 / libm::sqrt(d_in.max(1) as f64);
        let (e_end, p_end) = (vocab * d_in, vocab * d_in + d_in * dim);
        for (i, p) in params.iter_mut().enumerate() {
            let g: f64 = rng.sample(StandardNormal);
            *p = g * if i < e_end {
                1.0
            } else if i < p_end {
                proj_scale
            } else {
                MARKER_INIT_SCALE
            };
        }
        Self::from_params(vocab, d_in, dim, params)
    }

    pub fn vocab(&self) -> usize {
        self.vocab
    }

    pub fn d_in(&self) -> usize {
        self.d_in
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    fn projection_offset(&self) -> usize {
        self.vocab * self.d_in
    }

    fn marker_offset(&self, m: EncoderMarker) -> usize {
        self.projection_offset() + self.d_in * self.dim + m.slot() * self.d_in
    }

    pub fn token_embedding(&self, token: u32) -> &[f64] {
        let o = token as usize * self.d_in;
        &self.params[o..o + self.d_in]
    }

    /// Row-major `d_in x dim`.
    pub fn projection(&self) -> &[f64] {
        let o = self.projection_offset();
        &self.params[o..o + self.d_in * self.dim]
    }

    pub fn marker_embedding(&self, m: EncoderMarker) -> &[f64] {
        let o = self.marker_offset(m);
        &self.params[o..o + self.d_in]
    }

    pub(crate) fn forward_cached(&self, tokens: &[u32], marker: EncoderMarker) -> Result<Forward> {
        if tokens.is_empty() {
            return Err(Error::Empty("token sequence"));
        }
        let (d_in, dim) = (self.d_in, self.dim);
        let proj = self.projection();
        let m = self.marker_embedding(marker);
        let n = tokens.len();
        let mut x = vec![0.0; n * d_in];
        let mut z = vec![0.0; n * dim];
        let mut norms = vec![0.0; n];
        for (t, &tok) in tokens.iter().enumerate() {
            if tok as usize >= self.vocab {
                return Err(Error::TokenOutOfRange {
                    id: tok,
                    vocab: self.vocab,
                });
            }
            let xt = &mut x[t * d_in..(t + 1) * d_in];
            for ((xv, e), mv) in xt.iter_mut().zip(self.token_embedding(tok)).zip(m) {
                *xv = e + mv;
            }
            let zt = &mut z[t * dim..(t + 1) * dim];
            for (mi, xv) in xt.iter().enumerate() {
                let prow = &proj[mi * dim..(mi + 1) * dim];
                for (zk, pk) in zt.iter_mut().zip(prow) {
                    *zk += xv * pk;
                }
            }
            let r = l2_norm(zt);
            if r == 0.0 || !r.is_finite() {
                return Err(Error::ZeroNorm { row: t });
            }
            zt.iter_mut().for_each(|v| *v /= r);
            norms[t] = r;
        }
        Ok(Forward {
            tokens: tokens.to_vec(),
            marker,
            x,
            z,
            norms,
        })
    }

    /// Accumulates into `grad` the parameter gradient given `dz`, the loss
    /// gradient with respect to the normalized output rows.
    pub(crate) fn backward(&self, fwd: &Forward, dz: &[f64], grad: &mut [f64]) {
        let (d_in, dim) = (self.d_in, self.dim);
        let proj_off = self.projection_offset();
        let marker_off = self.marker_offset(fwd.marker);
        let proj = self.projection();
        let mut dy = vec![0.0; dim];
        let mut dx = vec![0.0; d_in];
        for (t, &tok) in fwd.tokens.iter().enumerate() {
            let zt = &fwd.z[t * dim..(t + 1) * dim];
            let gt = &dz[t * dim..(t + 1) * dim];
            let r = fwd.norms[t];
            // through z = y / |y|
            let proj_g: f64 = zt.iter().zip(gt).map(|(a, b)| a * b).sum();
            for k in 0..dim {
                dy[k] = (gt[k] - zt[k] * proj_g) / r;
            }
            if dy.iter().all(|&v| v == 0.0) {
                continue;
            }
            // through y = P^T x
            let xt = &fwd.x[t * d_in..(t + 1) * d_in];
            for mi in 0..d_in {
                let row = proj_off + mi * dim;
                let mut acc = 0.0;
                for k in 0..dim {
                    grad[row + k] += xt[mi] * dy[k];
                    acc += proj[mi * dim + k] * dy[k];
                }
                dx[mi] = acc;
            }
            let e_off = tok as usize * d_in;
            for mi in 0..d_in {
                grad[e_off + mi] += dx[mi];
                grad[marker_off + mi] += dx[mi];
            }
        }
    }
}

/// Activations kept from a forward pass for backpropagation.
#[derive(Debug, Clone)]
pub(crate) struct Forward {
    tokens: Vec<u32>,
    marker: EncoderMarker,
    x: Vec<f64>,
    pub(crate) z: Vec<f64>,
    norms: Vec<f64>,
}

impl Forward {
    pub(crate) fn rows(&self) -> usize {
        self.tokens.len()
    }

    pub(crate) fn matrix(&self, dim: usize) -> EmbeddingMatrix {
        EmbeddingMatrix::from_unit_rows_unchecked(self.rows(), dim, self.z.clone())
    }
}

/// Encodes `tokens` under `marker` into unit-norm rows.
pub fn toy_forward(encoder: &ToyEncoder, tokens: &[u32], marker: EncoderMarker) -> Result<EmbeddingMatrix> {
    let f = encoder.forward_cached(tokens, marker)?;
    Ok(f.matrix(encoder.dim))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn encoder() -> ToyEncoder {
        ToyEncoder::random(10, 4, 3, &mut ChaCha8Rng::seed_from_u64(11)).unwrap()
    }

    #[test]
    fn markers_condition_the_output() {
        let enc = encoder();
        let a = toy_forward(&enc, &[1, 2, 3], EncoderMarker::Query).unwrap();
        let b = toy_forward(&enc, &[1, 2, 3], EncoderMarker::SentenceQuery).unwrap();
        assert_ne!(a, b);
        assert_eq!(a.rows(), 3);
        assert_eq!(a.dim(), 3);
        for row in a.iter_rows() {
            assert!((l2_norm(row) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn equal_markers_give_equal_outputs() {
        let mut enc = encoder();
        let q = enc.marker_embedding(EncoderMarker::Query).to_vec();
        let o = enc.marker_offset(EncoderMarker::SentenceQuery);
        enc.params_mut()[o..o + 4].copy_from_slice(&q);
        let a = toy_forward(&enc, &[4, 5], EncoderMarker::Query).unwrap();
        let b = toy_forward(&enc, &[4, 5], EncoderMarker::SentenceQuery).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_projection_fails_normalization() {
        let mut enc = encoder();
        let o = enc.projection_offset();
        enc.params_mut()[o..o + 12].iter_mut().for_each(|p| *p = 0.0);
        assert!(matches!(
            toy_forward(&enc, &[1], EncoderMarker::Passage),
            Err(Error::ZeroNorm { row: 0 })
        ));
    }

    #[test]
    fn forward_is_deterministic_and_checks_ids() {
        let enc = encoder();
        let a = toy_forward(&enc, &[0, 9], EncoderMarker::Passage).unwrap();
        let b = toy_forward(&enc, &[0, 9], EncoderMarker::Passage).unwrap();
        assert_eq!(a.as_slice(), b.as_slice());
        assert!(matches!(
            toy_forward(&enc, &[10], EncoderMarker::Passage),
            Err(Error::TokenOutOfRange { id: 10, vocab: 10 })
        ));
    }

    #[test]
    fn backward_matches_finite_differences() {
        // loss = sum_t w_t . z_t for a fixed random w
        let enc = encoder();
        let tokens = [3u32, 7, 3];
        let w: Vec<f64> = (0..9).map(|i| libm::sin(i as f64 + 0.5)).collect();
        let loss = |e: &ToyEncoder| {
            let m = toy_forward(e, &tokens, EncoderMarker::SentenceQuery).unwrap();
            m.as_slice().iter().zip(&w).map(|(a, b)| a * b).sum::<f64>()
        };
        let fwd = enc.forward_cached(&tokens, EncoderMarker::SentenceQuery).unwrap();
        let mut grad = vec![0.0; enc.param_count()];
        enc.backward(&fwd, &w, &mut grad);
        let h = 1e-6;
        for i in 0..enc.param_count() {
            let mut a = enc.clone();
            let mut b = enc.clone();
            a.params_mut()[i] += h;
            b.params_mut()[i] -= h;
            let fd = (loss(&a) - loss(&b)) / (2.0 * h);
            assert!((fd - grad[i]).abs() < 1e-7, "param {i}: fd {fd} vs {}", grad[i]);
        }
    }
}
