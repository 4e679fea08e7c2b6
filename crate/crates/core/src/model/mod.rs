//! The NCDE forward pass: deep neural vector field, initialization layer and
//! the discrete controlled-ResNet recursion `z_k = z_{k-1} + G(z_{k-1}) Δx_k`.
//!
//! The last layer of the vector field outputs a flat vector of length `p·d`
//! that is read row-major as a `p × d` matrix: entry `(i, j)` sits at
//! `i * d + j`.

mod io;

pub use io::FLATTENING;

use std::ops::Range;

use rand::Rng as _;
use rand_distr::{Distribution, Normal, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, Matrix};
use crate::paths::{SampledPath, SamplingGrid};
use crate::rng::Rng;

/// Scalar nonlinearity with `σ(0) = 0` and a known Lipschitz constant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }

    /// `σ'(x)` expressed through the output `y = σ(x)`.
    #[inline]
    pub fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Identity => 1.0,
        }
    }

    pub fn lipschitz(self) -> f64 {
        1.0
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Identity => "identity",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "tanh" => Ok(Activation::Tanh),
            "identity" => Ok(Activation::Identity),
            other => Err(Error::validation(format!("unknown activation {other:?}"))),
        }
    }
}

/// Architecture dimensions: depth `q`, latent width `p`, path channels `d`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dims {
    pub q: usize,
    pub p: usize,
    pub d: usize,
}

impl Dims {
    pub fn new(q: usize, p: usize, d: usize) -> Result<Self> {
        if q == 0 || p == 0 || d == 0 {
            return Err(Error::validation(format!(
                "dimensions must be positive, got q={q}, p={p}, d={d}"
            )));
        }
        Ok(Dims { q, p, d })
    }

    /// Number of scalar parameters of a model with these dimensions.
    pub fn n_params(&self) -> usize {
        let Dims { q, p, d } = *self;
        p + (q - 1) * (p * p + p) + p * d * p + p * d + p * d + p
    }

    /// Output width of layer `h` (0-based).
    pub fn layer_out(&self, h: usize) -> usize {
        if h + 1 == self.q {
            self.p * self.d
        } else {
            self.p
        }
    }
}

/// Parameter groups, in flat-vector order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamGroup {
    Phi,
    Weight(usize),
    Bias(usize),
    InitWeight,
    InitBias,
}

impl ParamGroup {
    /// Column label used in training logs (`phi`, `A1`, `b1`, `U`, `v`).
    pub fn label(&self) -> String {
        match self {
            ParamGroup::Phi => "phi".into(),
            ParamGroup::Weight(h) => format!("A{}", h + 1),
            ParamGroup::Bias(h) => format!("b{}", h + 1),
            ParamGroup::InitWeight => "U".into(),
            ParamGroup::InitBias => "v".into(),
        }
    }

    /// True for the readout and initialization groups (frozen in some
    /// protocols).
    pub fn is_readout(&self) -> bool {
        matches!(self, ParamGroup::Phi)
    }

    pub fn is_init(&self) -> bool {
        matches!(self, ParamGroup::InitWeight | ParamGroup::InitBias)
    }
}

/// `ψ = (A_1, b_1, …, A_q, b_q)`; layer `h < q` maps `p → p`, layer `q` maps
/// `p → p·d`.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorFieldParams {
    pub weights: Vec<Matrix>,
    pub biases: Vec<Vec<f64>>,
    pub d: usize,
}

impl VectorFieldParams {
    pub fn zeros(q: usize, p: usize, d: usize) -> Self {
        let dims = Dims { q, p, d };
        VectorFieldParams {
            weights: (0..q).map(|h| Matrix::zeros(dims.layer_out(h), p)).collect(),
            biases: (0..q).map(|h| vec![0.0; dims.layer_out(h)]).collect(),
            d,
        }
    }

    pub fn q(&self) -> usize {
        self.weights.len()
    }

    pub fn p(&self) -> usize {
        self.weights.first().map_or(0, Matrix::cols)
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn validate(&self) -> Result<()> {
        let q = self.weights.len();
        if q == 0 || self.biases.len() != q {
            return Err(Error::validation("vector field needs q ≥ 1 weight/bias pairs"));
        }
        let dims = Dims::new(q, self.p(), self.d)?;
        for h in 0..q {
            let out = dims.layer_out(h);
            if self.weights[h].shape() != (out, dims.p) || self.biases[h].len() != out {
                return Err(Error::validation(format!(
                    "layer {} has shape {:?} / bias {}, expected ({out}, {}) / {out}",
                    h + 1,
                    self.weights[h].shape(),
                    self.biases[h].len(),
                    dims.p
                )));
            }
        }
        Ok(())
    }

    /// Largest Frobenius norm over the weight matrices.
    pub fn max_weight_norm(&self) -> f64 {
        self.weights.iter().map(Matrix::frobenius_norm).fold(0.0, f64::max)
    }

    pub fn max_bias_norm(&self) -> f64 {
        self.biases.iter().map(|b| crate::linalg::norm(b)).fold(0.0, f64::max)
    }

    /// Evaluates `G_ψ(z)` into `out` (length `p·d`, row-major `p × d`) using
    /// `scratch` (length ≥ `2p`) for hidden layers.
    pub fn eval_into(&self, z: &[f64], act: Activation, scratch: &mut [f64], out: &mut [f64]) {
        let q = self.q();
        let p = z.len();
        if q == 1 {
            layer_into(&self.weights[0], &self.biases[0], z, act, out);
            return;
        }
        let (a, b) = scratch[..2 * p].split_at_mut(p);
        layer_into(&self.weights[0], &self.biases[0], z, act, a);
        let (mut src, mut dst) = (a, b);
        for h in 1..q - 1 {
            layer_into(&self.weights[h], &self.biases[h], src, act, dst);
            std::mem::swap(&mut src, &mut dst);
        }
        layer_into(&self.weights[q - 1], &self.biases[q - 1], src, act, out);
    }
}

#[inline]
fn layer_into(w: &Matrix, b: &[f64], x: &[f64], act: Activation, out: &mut [f64]) {
    w.matvec_into(x, out);
    for (o, bi) in out.iter_mut().zip(b) {
        *o = act.apply(*o + bi);
    }
}

/// Full parameter bundle `θ = (Φ, ψ, ξ)` with `ξ = (U, v)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub phi: Vec<f64>,
    pub vf: VectorFieldParams,
    pub init_weight: Matrix,
    pub init_bias: Vec<f64>,
    pub activation: Activation,
}

impl ModelParams {
    pub fn zeros(dims: Dims, activation: Activation) -> Self {
        let Dims { q, p, d } = dims;
        ModelParams {
            phi: vec![0.0; p],
            vf: VectorFieldParams::zeros(q, p, d),
            init_weight: Matrix::zeros(p, d),
            init_bias: vec![0.0; p],
            activation,
        }
    }

    pub fn dims(&self) -> Dims {
        Dims {
            q: self.vf.q(),
            p: self.phi.len(),
            d: self.vf.d,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.vf.validate()?;
        let Dims { p, d, .. } = self.dims();
        if self.vf.p() != p {
            return Err(Error::validation(format!(
                "readout has length {p} but the vector field has width {}",
                self.vf.p()
            )));
        }
        if self.init_weight.shape() != (p, d) || self.init_bias.len() != p {
            return Err(Error::validation(format!(
                "initialization layer has shape {:?} / bias {}, expected ({p}, {d}) / {p}",
                self.init_weight.shape(),
                self.init_bias.len()
            )));
        }
        Ok(())
    }

    /// Groups with their ranges in the flat parameter vector.
    pub fn group_ranges(dims: Dims) -> Vec<(ParamGroup, Range<usize>)> {
        let Dims { q, p, d } = dims;
        let mut out = Vec::with_capacity(2 * q + 3);
        let mut at = 0;
        let mut push = |g: ParamGroup, len: usize| {
            out.push((g, at..at + len));
            at += len;
        };
        push(ParamGroup::Phi, p);
        for h in 0..q {
            let o = dims.layer_out(h);
            push(ParamGroup::Weight(h), o * p);
            push(ParamGroup::Bias(h), o);
        }
        push(ParamGroup::InitWeight, p * d);
        push(ParamGroup::InitBias, p);
        out
    }

    pub fn group(&self, g: ParamGroup) -> &[f64] {
        match g {
            ParamGroup::Phi => &self.phi,
            ParamGroup::Weight(h) => self.vf.weights[h].as_slice(),
            ParamGroup::Bias(h) => &self.vf.biases[h],
            ParamGroup::InitWeight => self.init_weight.as_slice(),
            ParamGroup::InitBias => &self.init_bias,
        }
    }

    pub fn group_mut(&mut self, g: ParamGroup) -> &mut [f64] {
        match g {
            ParamGroup::Phi => &mut self.phi,
            ParamGroup::Weight(h) => self.vf.weights[h].as_mut_slice(),
            ParamGroup::Bias(h) => &mut self.vf.biases[h],
            ParamGroup::InitWeight => self.init_weight.as_mut_slice(),
            ParamGroup::InitBias => &mut self.init_bias,
        }
    }

    /// Frobenius (Euclidean) norm of one group.
    pub fn group_norm(&self, g: ParamGroup) -> f64 {
        crate::linalg::norm(self.group(g))
    }

    /// All parameters in group order: Φ, A_1, b_1, …, A_q, b_q, U, v.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.dims().n_params());
        for (g, _) in Self::group_ranges(self.dims()) {
            out.extend_from_slice(self.group(g));
        }
        out
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        let dims = self.dims();
        if flat.len() != dims.n_params() {
            return Err(Error::validation(format!(
                "flat parameter vector has {} entries, expected {}",
                flat.len(),
                dims.n_params()
            )));
        }
        for (g, r) in Self::group_ranges(dims) {
            self.group_mut(g).copy_from_slice(&flat[r]);
        }
        Ok(())
    }

    /// Entries drawn from `U(−1/√fan_in, 1/√fan_in)` for weights and biases
    /// alike, fan-in being the input width of each linear map.
    pub fn init_uniform_fan_in(dims: Dims, activation: Activation, rng: &mut Rng) -> Self {
        Self::init_with(dims, activation, rng, |fan_in, rng| {
            let a = 1.0 / (fan_in as f64).sqrt();
            Uniform::new_inclusive(-a, a).sample(rng)
        })
    }

    /// Entries drawn from `N(0, 1/fan_in)`.
    pub fn init_normal_fan_in(dims: Dims, activation: Activation, rng: &mut Rng) -> Self {
        Self::init_with(dims, activation, rng, |fan_in, rng| {
            Normal::new(0.0, 1.0 / (fan_in as f64).sqrt())
                .expect("positive std")
                .sample(rng)
        })
    }

    fn init_with(
        dims: Dims,
        activation: Activation,
        rng: &mut Rng,
        mut draw: impl FnMut(usize, &mut Rng) -> f64,
    ) -> Self {
        let mut params = ModelParams::zeros(dims, activation);
        for (g, _) in Self::group_ranges(dims) {
            let fan_in = match g {
                ParamGroup::InitWeight | ParamGroup::InitBias => dims.d,
                _ => dims.p,
            };
            for x in params.group_mut(g) {
                *x = draw(fan_in, rng);
            }
        }
        params
    }

    /// Entries i.i.d. standard normal (used by samplers that rescale groups).
    pub fn gaussian(dims: Dims, activation: Activation, rng: &mut Rng) -> Self {
        let mut params = ModelParams::zeros(dims, activation);
        for (g, _) in Self::group_ranges(dims) {
            for x in params.group_mut(g) {
                *x = rng.sample(rand_distr::StandardNormal);
            }
        }
        params
    }
}

/// Piecewise-constant latent trajectory on the path's grid.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentTrajectory {
    pub grid: SamplingGrid,
    pub states: Matrix,
    pub prediction: f64,
}

impl LatentTrajectory {
    /// `Φᵀ z_{t_k}` for every grid point.
    pub fn readout(&self, phi: &[f64]) -> Vec<f64> {
        (0..self.states.rows()).map(|k| dot(phi, self.states.row(k))).collect()
    }

    pub fn terminal(&self) -> &[f64] {
        self.states.row(self.states.rows() - 1)
    }
}

/// `G_ψ(z)` as a `p × d` matrix.
pub fn vector_field_eval(vf: &VectorFieldParams, z: &[f64], act: Activation) -> Result<Matrix> {
    vf.validate()?;
    let p = vf.p();
    if z.len() != p {
        return Err(Error::validation(format!(
            "latent vector has length {}, expected {p}",
            z.len()
        )));
    }
    let mut out = vec![0.0; p * vf.d];
    let mut scratch = vec![0.0; 2 * p];
    vf.eval_into(z, act, &mut scratch, &mut out);
    Matrix::from_vec(p, vf.d, out)
}

/// `z_0 = σ(U x_0 + v)`.
pub fn init_state(params: &ModelParams, x0: &[f64]) -> Result<Vec<f64>> {
    params.validate()?;
    check_channels(params, x0.len())?;
    let mut z = vec![0.0; params.phi.len()];
    init_into(params, x0, &mut z);
    Ok(z)
}

#[inline]
pub(crate) fn init_into(params: &ModelParams, x0: &[f64], z: &mut [f64]) {
    layer_into(&params.init_weight, &params.init_bias, x0, params.activation, z);
}

fn check_channels(params: &ModelParams, d: usize) -> Result<()> {
    if d != params.dims().d {
        return Err(Error::validation(format!(
            "path has {d} channels but the model expects {}",
            params.dims().d
        )));
    }
    Ok(())
}

/// Reusable buffers for the recursion.
#[derive(Debug, Clone)]
pub(crate) struct Workspace {
    pub field: Vec<f64>,
    pub scratch: Vec<f64>,
    pub dx: Vec<f64>,
}

impl Workspace {
    pub fn new(dims: Dims) -> Self {
        Workspace {
            field: vec![0.0; dims.p * dims.d],
            scratch: vec![0.0; 2 * dims.p],
            dx: vec![0.0; dims.d],
        }
    }
}

/// One step `z ← z + G(z) Δx` given the increment in `ws.dx`.
#[inline]
pub(crate) fn step_in_place(params: &ModelParams, z: &mut [f64], ws: &mut Workspace) {
    let d = ws.dx.len();
    params
        .vf
        .eval_into(z, params.activation, &mut ws.scratch, &mut ws.field);
    for (i, zi) in z.iter_mut().enumerate() {
        *zi += dot(&ws.field[i * d..(i + 1) * d], &ws.dx);
    }
}

/// Terminal state without storing the trajectory. Shapes are not checked.
pub(crate) fn terminal_state_unchecked(params: &ModelParams, path: &SampledPath, ws: &mut Workspace) -> Vec<f64> {
    let mut z = vec![0.0; params.phi.len()];
    init_into(params, path.initial(), &mut z);
    for k in 1..path.len() {
        path.increment_into(k, &mut ws.dx);
        step_in_place(params, &mut z, ws);
    }
    z
}

/// Runs the controlled-ResNet recursion over the whole path.
pub fn forward(params: &ModelParams, path: &SampledPath) -> Result<LatentTrajectory> {
    params.validate()?;
    check_channels(params, path.dim())?;
    let dims = params.dims();
    let mut ws = Workspace::new(dims);
    let mut states = Matrix::zeros(path.len(), dims.p);
    let mut z = vec![0.0; dims.p];
    init_into(params, path.initial(), &mut z);
    states.row_mut(0).copy_from_slice(&z);
    for k in 1..path.len() {
        path.increment_into(k, &mut ws.dx);
        step_in_place(params, &mut z, &mut ws);
        states.row_mut(k).copy_from_slice(&z);
    }
    let prediction = dot(&params.phi, &z);
    Ok(LatentTrajectory {
        grid: path.grid().clone(),
        states,
        prediction,
    })
}

/// Prediction `Φᵀ z_K` only.
pub fn predict(params: &ModelParams, path: &SampledPath) -> Result<f64> {
    params.validate()?;
    check_channels(params, path.dim())?;
    let mut ws = Workspace::new(params.dims());
    let z = terminal_state_unchecked(params, path, &mut ws);
    Ok(dot(&params.phi, &z))
}

/// [`forward`] over a batch, in parallel, preserving order. The first failing
/// element is reported with its index.
pub fn forward_batch(params: &ModelParams, paths: &[SampledPath]) -> Result<Vec<LatentTrajectory>> {
    paths
        .par_iter()
        .enumerate()
        .map(|(i, p)| forward(params, p).map_err(|e| Error::at_index(i, e)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    fn constant_field_model(b: &[f64], p: usize, d: usize) -> ModelParams {
        let mut m = ModelParams::zeros(Dims::new(1, p, d).unwrap(), Activation::Identity);
        m.vf.biases[0].copy_from_slice(b);
        m
    }

    #[test]
    fn zero_network_gives_zero_field() {
        let vf = VectorFieldParams::zeros(3, 4, 2);
        let g = vector_field_eval(&vf, &[1.0, -2.0, 3.0, 0.5], Activation::Tanh).unwrap();
        assert!(g.as_slice().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn constant_field_is_bias() {
        let b = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let m = constant_field_model(&b, 3, 2);
        let g = vector_field_eval(&m.vf, &[9.0, -9.0, 0.1], Activation::Identity).unwrap();
        assert_eq!(g.row(0), &[1.0, 2.0]);
        assert_eq!(g.row(2), &[5.0, 6.0]);
    }

    #[test]
    fn two_layer_tanh_by_hand() {
        // p = 2, d = 1, q = 2.
        let mut vf = VectorFieldParams::zeros(2, 2, 1);
        vf.weights[0] = Matrix::from_rows(vec![vec![0.5, 0.0], vec![0.0, -1.0]]).unwrap();
        vf.biases[0] = vec![0.1, 0.0];
        vf.weights[1] = Matrix::from_rows(vec![vec![1.0, 1.0], vec![2.0, 0.0]]).unwrap();
        vf.biases[1] = vec![0.0, -0.3];
        let z = [0.4, 0.2];
        let h1 = [(0.5f64 * 0.4 + 0.1).tanh(), (-0.2f64).tanh()];
        let expect = [(h1[0] + h1[1]).tanh(), (2.0 * h1[0] - 0.3).tanh()];
        let g = vector_field_eval(&vf, &z, Activation::Tanh).unwrap();
        assert!((g.get(0, 0) - expect[0]).abs() < 1e-15);
        assert!((g.get(1, 0) - expect[1]).abs() < 1e-15);
        // Frozen numbers for the same evaluation.
        assert!((g.get(0, 0) - 0.09366195641780241).abs() < 1e-12, "{}", g.get(0, 0));
        assert!((g.get(1, 0) - 0.2753330410518692).abs() < 1e-12, "{}", g.get(1, 0));
    }

    #[test]
    fn init_state_cases() {
        let dims = Dims::new(1, 2, 2).unwrap();
        let mut m = ModelParams::zeros(dims, Activation::Tanh);
        assert_eq!(init_state(&m, &[0.3, -0.2]).unwrap(), vec![0.0, 0.0]);
        m.init_weight = Matrix::identity(2);
        let z = init_state(&m, &[0.3, -0.2]).unwrap();
        assert_eq!(z, vec![0.3f64.tanh(), (-0.2f64).tanh()]);
        assert!(init_state(&m, &[1.0]).is_err());
    }

    fn sample_path(k: usize, d: usize, seed: u64) -> SampledPath {
        let mut rng = stream_rng(seed, 0);
        let g = SamplingGrid::uniform(k).unwrap();
        SampledPath::new(g, Matrix::from_fn(k + 1, d, |_, _| rng.gen_range(-1.0..1.0))).unwrap()
    }

    #[test]
    fn zero_field_freezes_state() {
        let mut rng = stream_rng(1, 0);
        let mut m = ModelParams::gaussian(Dims::new(2, 3, 2).unwrap(), Activation::Tanh, &mut rng);
        m.vf = VectorFieldParams::zeros(2, 3, 2);
        let path = sample_path(6, 2, 2);
        let traj = forward(&m, &path).unwrap();
        let z0 = init_state(&m, path.initial()).unwrap();
        for k in 0..traj.states.rows() {
            assert_eq!(traj.states.row(k), &z0[..]);
        }
        assert_eq!(traj.prediction, dot(&m.phi, &z0));
    }

    #[test]
    fn constant_field_telescopes() {
        let b = [0.5, -1.0, 2.0, 0.25];
        let mut m = constant_field_model(&b, 2, 2);
        m.init_bias = vec![0.3, -0.7];
        m.phi = vec![1.0, 1.0];
        let path = sample_path(9, 2, 4);
        let traj = forward(&m, &path).unwrap();
        let (x0, x1) = (path.initial(), path.terminal());
        let dx = [x1[0] - x0[0], x1[1] - x0[1]];
        let expect = [0.3 + 0.5 * dx[0] - dx[1], -0.7 + 2.0 * dx[0] + 0.25 * dx[1]];
        assert!((traj.terminal()[0] - expect[0]).abs() < 1e-12);
        assert!((traj.terminal()[1] - expect[1]).abs() < 1e-12);
    }

    #[test]
    fn predict_matches_forward_and_batch() {
        let mut rng = stream_rng(3, 0);
        let m = ModelParams::gaussian(Dims::new(2, 3, 2).unwrap(), Activation::Tanh, &mut rng);
        let paths: Vec<_> = (0..5).map(|s| sample_path(7, 2, s)).collect();
        let batch = forward_batch(&m, &paths).unwrap();
        for (p, t) in paths.iter().zip(&batch) {
            assert_eq!(predict(&m, p).unwrap(), t.prediction);
            assert_eq!(&forward(&m, p).unwrap(), t);
        }
        assert!(forward_batch(&m, &[]).unwrap().is_empty());
    }

    #[test]
    fn batch_error_carries_index() {
        let m = ModelParams::zeros(Dims::new(1, 2, 2).unwrap(), Activation::Tanh);
        let paths = vec![sample_path(3, 2, 0), sample_path(3, 1, 0)];
        match forward_batch(&m, &paths) {
            Err(Error::Indexed { index, .. }) => assert_eq!(index, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn flat_roundtrip_and_counts() {
        let dims = Dims::new(3, 4, 2).unwrap();
        let mut rng = stream_rng(0, 0);
        let m = ModelParams::gaussian(dims, Activation::Tanh, &mut rng);
        let flat = m.to_flat();
        assert_eq!(flat.len(), dims.n_params());
        let mut z = ModelParams::zeros(dims, Activation::Tanh);
        z.set_flat(&flat).unwrap();
        assert_eq!(z, m);
        let ranges = ModelParams::group_ranges(dims);
        assert_eq!(ranges.last().unwrap().1.end, dims.n_params());
    }
}
