//! Reverse-mode gradients through the controlled-ResNet recursion.

use crate::error::{Error, Result};
use crate::linalg::dot;
use crate::model::{init_into, Dims, ModelParams};
use crate::paths::SampledPath;

use super::loss::{loss_and_grad, LossSpec};

/// Forward intermediates for one path plus adjoint scratch space; reused
/// across samples to keep the hot loop allocation-free.
#[derive(Debug, Clone)]
pub(crate) struct Tape {
    dims: Dims,
    /// States `z_0..z_K`, row-major `(K+1) × p`.
    states: Vec<f64>,
    /// Layer outputs per step: `(q−1)·p` hidden values then `p·d` field entries.
    posts: Vec<f64>,
    dx: Vec<f64>,
    lambda: Vec<f64>,
    upstream: Vec<f64>,
    delta: Vec<f64>,
    back: Vec<f64>,
}

impl Tape {
    pub fn new(dims: Dims) -> Self {
        let Dims { p, d, .. } = dims;
        Tape {
            dims,
            states: Vec::new(),
            posts: Vec::new(),
            dx: vec![0.0; d],
            lambda: vec![0.0; p],
            upstream: vec![0.0; p * d],
            delta: vec![0.0; p * d],
            back: vec![0.0; p],
        }
    }

    fn stride(&self) -> usize {
        let Dims { q, p, d } = self.dims;
        (q - 1) * p + p * d
    }

    /// Forward pass recording every layer output; returns the prediction.
    fn record(&mut self, params: &ModelParams, path: &SampledPath) -> f64 {
        let Dims { q, p, d } = self.dims;
        let n = path.len();
        let stride = self.stride();
        self.states.resize(n * p, 0.0);
        self.posts.resize((n - 1) * stride, 0.0);
        init_into(params, path.initial(), &mut self.states[..p]);
        let act = params.activation;
        for k in 1..n {
            path.increment_into(k, &mut self.dx);
            let (prev, rest) = self.states.split_at_mut(k * p);
            let z_prev = &prev[(k - 1) * p..];
            let post = &mut self.posts[(k - 1) * stride..k * stride];
            let mut offset = 0;
            for h in 0..q {
                let out_len = if h + 1 == q { p * d } else { p };
                let (done, cur) = post.split_at_mut(offset);
                let input: &[f64] = if h == 0 { z_prev } else { &done[offset - p..] };
                let out = &mut cur[..out_len];
                params.vf.weights[h].matvec_into(input, out);
                for (o, b) in out.iter_mut().zip(&params.vf.biases[h]) {
                    *o = act.apply(*o + b);
                }
                offset += out_len;
            }
            let field = &post[stride - p * d..];
            let z_next = &mut rest[..p];
            for i in 0..p {
                z_next[i] = z_prev[i] + dot(&field[i * d..(i + 1) * d], &self.dx);
            }
        }
        dot(&params.phi, &self.states[(n - 1) * p..])
    }

    /// Adds `scale · ∂ℓ/∂θ` to `grad` and returns `(loss, prediction)`.
    pub fn accumulate(
        &mut self,
        params: &ModelParams,
        path: &SampledPath,
        spec: &LossSpec,
        y: f64,
        scale: f64,
        grad: &mut ModelParams,
    ) -> Result<(f64, f64)> {
        let Dims { q, p, d } = self.dims;
        let pred = self.record(params, path);
        let (loss, g) = loss_and_grad(spec.kind, y, pred)?;
        let n = path.len();
        if !loss.is_finite() || !g.is_finite() {
            return Err(Error::Numeric {
                step: n - 1,
                message: format!("non-finite loss {loss} (prediction {pred})"),
            });
        }
        let g = g * scale;
        let act = params.activation;
        let stride = self.stride();

        let z_last = &self.states[(n - 1) * p..n * p];
        for (gp, z) in grad.phi.iter_mut().zip(z_last) {
            *gp += g * z;
        }
        for (l, ph) in self.lambda.iter_mut().zip(&params.phi) {
            *l = g * ph;
        }

        for k in (1..n).rev() {
            path.increment_into(k, &mut self.dx);
            let post = &self.posts[(k - 1) * stride..k * stride];
            let z_prev = &self.states[(k - 1) * p..k * p];
            // ∂ℓ/∂(field entry (i, j)) = λ_i Δx_j.
            for i in 0..p {
                for j in 0..d {
                    self.upstream[i * d + j] = self.lambda[i] * self.dx[j];
                }
            }
            let mut up_len = p * d;
            let mut offset = stride - p * d;
            for h in (0..q).rev() {
                let out = &post[offset..offset + up_len];
                for ((dl, u), y) in self.delta[..up_len].iter_mut().zip(&self.upstream[..up_len]).zip(out) {
                    *dl = u * act.derivative_from_output(*y);
                }
                let input: &[f64] = if h == 0 { z_prev } else { &post[offset - p..offset] };
                grad.vf.weights[h].add_outer(1.0, &self.delta[..up_len], input);
                for (gb, dl) in grad.vf.biases[h].iter_mut().zip(&self.delta[..up_len]) {
                    *gb += dl;
                }
                params.vf.weights[h].matvec_t_into(&self.delta[..up_len], &mut self.back);
                self.upstream[..p].copy_from_slice(&self.back);
                up_len = p;
                if h > 0 {
                    offset -= p;
                }
            }
            for (l, b) in self.lambda.iter_mut().zip(&self.upstream[..p]) {
                *l += b;
            }
            if self.lambda.iter().any(|l| !l.is_finite()) {
                return Err(Error::Numeric {
                    step: k,
                    message: "non-finite adjoint".into(),
                });
            }
        }

        // z_0 = σ(U x_0 + v).
        let z0 = &self.states[..p];
        for (dl, (l, z)) in self.delta[..p].iter_mut().zip(self.lambda.iter().zip(z0)) {
            *dl = l * act.derivative_from_output(*z);
        }
        grad.init_weight.add_outer(1.0, &self.delta[..p], path.initial());
        for (gv, dl) in grad.init_bias.iter_mut().zip(&self.delta[..p]) {
            *gv += dl;
        }
        Ok((loss, pred))
    }
}

/// Exact gradient of `ℓ(y, f_θ(x))` with respect to every parameter, shaped
/// like the parameters themselves.
pub fn backward(params: &ModelParams, path: &SampledPath, spec: &LossSpec, y: f64) -> Result<ModelParams> {
    params.validate()?;
    let dims = params.dims();
    if path.dim() != dims.d {
        return Err(Error::validation(format!(
            "path has {} channels but the model expects {}",
            path.dim(),
            dims.d
        )));
    }
    let mut grad = ModelParams::zeros(dims, params.activation);
    let mut tape = Tape::new(dims);
    tape.accumulate(params, path, spec, y, 1.0, &mut grad)?;
    Ok(grad)
}

/// Zeroes every entry of a gradient bundle.
pub(crate) fn clear(grad: &mut ModelParams) {
    grad.phi.fill(0.0);
    for w in &mut grad.vf.weights {
        w.as_mut_slice().fill(0.0);
    }
    for b in &mut grad.vf.biases {
        b.fill(0.0);
    }
    grad.init_weight.as_mut_slice().fill(0.0);
    grad.init_bias.fill(0.0);
}

/// `acc += other`, entrywise.
pub(crate) fn add_assign(acc: &mut ModelParams, other: &ModelParams) {
    fn add(a: &mut [f64], b: &[f64]) {
        for (x, y) in a.iter_mut().zip(b) {
            *x += y;
        }
    }
    add(&mut acc.phi, &other.phi);
    for (a, b) in acc.vf.weights.iter_mut().zip(&other.vf.weights) {
        add(a.as_mut_slice(), b.as_slice());
    }
    for (a, b) in acc.vf.biases.iter_mut().zip(&other.vf.biases) {
        add(a, b);
    }
    add(acc.init_weight.as_mut_slice(), other.init_weight.as_slice());
    add(&mut acc.init_bias, &other.init_bias);
}

