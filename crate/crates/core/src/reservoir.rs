//! Random recurrent network `x' = f(W_r x + W_i i + b) / √N`.
//!
//! Two backends share one set of hyperparameters: dense Gaussian matrices,
//! or a single structured operator acting on `[σ_r x; σ_i i]` zero-padded to a
//! power of two and truncated back to `N` outputs.

use alloc::vec;
use alloc::vec::Vec;

use ndarray::linalg::{general_mat_mul, general_mat_vec_mul};
use ndarray::{s, Array2, ArrayView1, ArrayView2, ArrayViewMut2};

use crate::error::{check_len, Error, Result};
use crate::kernel::{self, KernelKind};
use crate::rng::{self, Purpose};
use crate::transforms::StructuredOperator;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Activation {
    Erf,
    Relu,
    /// Random Fourier features: `N` frequencies produce `[cos z; sin z]`.
    Rff,
    Sign,
    Heaviside,
    Tanh,
}

impl Activation {
    pub const ALL: [Activation; 6] = [
        Activation::Erf,
        Activation::Relu,
        Activation::Rff,
        Activation::Sign,
        Activation::Heaviside,
        Activation::Tanh,
    ];

    /// Closed-form infinite-width kernel, when one exists.
    pub fn kernel(self) -> Option<KernelKind> {
        match self {
            Activation::Erf => Some(KernelKind::ArcsineErf),
            Activation::Relu => Some(KernelKind::Arccos1Relu),
            Activation::Rff => Some(KernelKind::GaussianRff),
            Activation::Sign => Some(KernelKind::ArcsineSign),
            Activation::Heaviside => Some(KernelKind::Heaviside),
            Activation::Tanh => None,
        }
    }

    /// `|f| ≤ 1` everywhere.
    pub fn is_bounded(self) -> bool {
        self != Activation::Relu
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Erf => "erf",
            Activation::Relu => "relu",
            Activation::Rff => "rff",
            Activation::Sign => "sign",
            Activation::Heaviside => "heaviside",
            Activation::Tanh => "tanh",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.name().eq_ignore_ascii_case(s))
    }

    #[inline]
    fn scalar(self, z: f64) -> f64 {
        match self {
            Activation::Erf => libm::erf(z),
            Activation::Relu => z.max(0.0),
            Activation::Sign => kernel::sign(z),
            Activation::Heaviside => kernel::step(z),
            Activation::Tanh => libm::tanh(z),
            Activation::Rff => libm::cos(z),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Backend {
    Dense,
    Structured,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReservoirParams {
    /// Neurons (frequency rows for [`Activation::Rff`]).
    pub n: usize,
    /// Input dimension.
    pub d: usize,
    pub sigma_r: f64,
    pub sigma_i: f64,
    pub sigma_b: f64,
    pub activation: Activation,
    pub backend: Backend,
    /// Draw fresh `W_r`, `W_i` (or fresh signs) at every step. The bias is fixed.
    pub redraw: bool,
    pub seed: u64,
}

impl ReservoirParams {
    pub fn new(n: usize, d: usize, activation: Activation) -> Self {
        Self {
            n,
            d,
            sigma_r: 1.0,
            sigma_i: 1.0,
            sigma_b: 0.0,
            activation,
            backend: Backend::Dense,
            redraw: false,
            seed: 0,
        }
    }

    pub fn with_sigmas(mut self, sigma_r: f64, sigma_i: f64, sigma_b: f64) -> Self {
        self.sigma_r = sigma_r;
        self.sigma_i = sigma_i;
        self.sigma_b = sigma_b;
        self
    }

    pub fn with_backend(mut self, backend: Backend) -> Self {
        self.backend = backend;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_redraw(mut self, redraw: bool) -> Self {
        self.redraw = redraw;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.d == 0 {
            return Err(Error::InvalidParameter("reservoir and input sizes must be positive"));
        }
        let sigmas = [self.sigma_r, self.sigma_i, self.sigma_b];
        if sigmas.iter().any(|s| !s.is_finite() || *s < 0.0) {
            return Err(Error::InvalidParameter("weight scales must be finite and non-negative"));
        }
        Ok(())
    }

    /// Length of the state vector: `2N` for random Fourier features.
    pub fn state_len(&self) -> usize {
        match self.activation {
            Activation::Rff => 2 * self.n,
            _ => self.n,
        }
    }

    /// Padded dimension of the structured operator.
    pub fn structured_dim(&self) -> usize {
        (self.state_len() + self.d).max(self.n).next_power_of_two()
    }

    /// Length of the readout vector `[x; r·i]`.
    pub fn feature_len(&self) -> usize {
        self.state_len() + self.d
    }
}

/// The recurrent and input weights for one time step.
#[derive(Debug, Clone, PartialEq)]
pub enum Mixing {
    /// `[W_r | W_i]`, `N × (S + d)` with `W_r` entries `N(0, σ_r²)` and
    /// `W_i` entries `N(0, σ_i²)`.
    Dense(Array2<f64>),
    /// Unit-variance operator; `σ_r`, `σ_i` are applied to its input.
    Structured(StructuredOperator),
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightSet {
    pub mixing: Mixing,
    pub bias: Vec<f64>,
}

fn draw_mixing(params: &ReservoirParams, index: u64) -> Result<Mixing> {
    let (n, s, d) = (params.n, params.state_len(), params.d);
    match params.backend {
        Backend::Dense => {
            let mut w = Array2::zeros((n, s + d));
            let mut wr = vec![0.0; n * s];
            rng::fill_gaussian(
                &mut rng::stream(params.seed, Purpose::ReservoirWeights, index),
                &mut wr,
                params.sigma_r,
            );
            let mut wi = vec![0.0; n * d];
            rng::fill_gaussian(
                &mut rng::stream(params.seed, Purpose::InputWeights, index),
                &mut wi,
                params.sigma_i,
            );
            for (k, mut row) in w.rows_mut().into_iter().enumerate() {
                let row = row.as_slice_mut().expect("fresh arrays are contiguous");
                row[..s].copy_from_slice(&wr[k * s..(k + 1) * s]);
                row[s..].copy_from_slice(&wi[k * d..(k + 1) * d]);
            }
            Ok(Mixing::Dense(w))
        }
        Backend::Structured => {
            let p = params.structured_dim();
            let scale = libm::sqrt(p as f64);
            Ok(Mixing::Structured(StructuredOperator::new(p, scale, params.seed, index)?))
        }
    }
}

/// Fixed weights (redraw index 0) and the dense bias.
pub fn init_weights(params: &ReservoirParams) -> Result<WeightSet> {
    params.validate()?;
    let mut bias = vec![0.0; params.n];
    rng::fill_gaussian(&mut rng::stream(params.seed, Purpose::Bias, 0), &mut bias, params.sigma_b);
    Ok(WeightSet {
        mixing: draw_mixing(params, 0)?,
        bias,
    })
}

/// Weights used for the update that produces `x^(t+1)` in redraw mode.
pub fn redrawn_mixing(params: &ReservoirParams, t: usize) -> Result<Mixing> {
    draw_mixing(params, t as u64 + 1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReservoirState {
    pub x: Vec<f64>,
    pub t: usize,
}

impl ReservoirState {
    pub fn zeros(params: &ReservoirParams) -> Self {
        Self {
            x: vec![0.0; params.state_len()],
            t: 0,
        }
    }
}

/// A state drawn as `f(g)/√N` with `g` standard Gaussian, so it lies in the
/// range the dynamics can reach. Used to probe sensitivity to initialization.
pub fn random_state(params: &ReservoirParams, index: u64) -> Vec<f64> {
    let mut g = vec![0.0; params.n];
    rng::fill_gaussian(&mut rng::stream(params.seed, Purpose::InitialState, index), &mut g, 1.0);
    let mut x = vec![0.0; params.state_len()];
    activate(params.activation, &g, &mut x);
    x
}

/// Writes `f(z)/√N` into `out` (length `S`).
fn activate(act: Activation, z: &[f64], out: &mut [f64]) {
    let n = z.len();
    let norm = 1.0 / libm::sqrt(n as f64);
    match act {
        Activation::Rff => {
            let (c, s) = out.split_at_mut(n);
            for k in 0..n {
                let (sin, cos) = libm::sincos(z[k]);
                c[k] = cos * norm;
                s[k] = sin * norm;
            }
        }
        _ => {
            for (o, &v) in out.iter_mut().zip(z) {
                *o = act.scalar(v) * norm;
            }
        }
    }
}

fn check_finite(v: &[f64], context: &'static str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(context))
    }
}

/// Pre-activations `z = W [x; i] + b` for one state, with `buf` as scratch.
fn preactivate(params: &ReservoirParams, mixing: &Mixing, bias: &[f64], x: &[f64], input: &[f64], buf: &mut Vec<f64>, z: &mut [f64]) {
    let s = params.state_len();
    match mixing {
        Mixing::Dense(w) => {
            buf.clear();
            buf.extend_from_slice(x);
            buf.extend_from_slice(input);
            let mut zv = ndarray::ArrayViewMut1::from(&mut *z);
            zv.assign(&ArrayView1::from(bias));
            general_mat_vec_mul(1.0, w, &ArrayView1::from(&buf[..]), 1.0, &mut zv);
        }
        Mixing::Structured(op) => {
            buf.clear();
            buf.resize(op.dim(), 0.0);
            for (b, v) in buf[..s].iter_mut().zip(x) {
                *b = params.sigma_r * v;
            }
            for (b, v) in buf[s..s + params.d].iter_mut().zip(input) {
                *b = params.sigma_i * v;
            }
            op.apply_in_place(buf).expect("operator dimension is fixed by params");
            for ((o, u), b) in z.iter_mut().zip(buf.iter()).zip(bias) {
                *o = u + b;
            }
        }
    }
}

/// One update `x^(t) → x^(t+1)`.
pub fn step(state: &ReservoirState, input: &[f64], w: &WeightSet, params: &ReservoirParams) -> Result<ReservoirState> {
    check_len("reservoir state", params.state_len(), state.x.len())?;
    check_len("reservoir input", params.d, input.len())?;
    check_finite(input, "reservoir input")?;
    let redrawn;
    let mixing = if params.redraw {
        redrawn = redrawn_mixing(params, state.t)?;
        &redrawn
    } else {
        &w.mixing
    };
    let mut z = vec![0.0; params.n];
    let mut buf = Vec::new();
    preactivate(params, mixing, &w.bias, &state.x, input, &mut buf, &mut z);
    let mut x = vec![0.0; params.state_len()];
    activate(params.activation, &z, &mut x);
    Ok(ReservoirState { x, t: state.t + 1 })
}

/// Drives `x^(0) = 0` with every row of `series`; returns the states after
/// each input from index `record_from` on (`x^(record_from + 1)`, ...).
pub fn run(series: ArrayView2<'_, f64>, params: &ReservoirParams, w: &WeightSet, record_from: usize) -> Result<Vec<ReservoirState>> {
    check_len("series dimension", params.d, series.ncols())?;
    let mut res = Reservoir::with_weights(params.clone(), w.clone())?;
    let mut x = vec![0.0; params.state_len()];
    let mut out = Vec::with_capacity(series.nrows().saturating_sub(record_from));
    for (t, row) in series.rows().into_iter().enumerate() {
        let input = row.to_vec();
        res.step_in_place(&mut x, &input, t)?;
        if t >= record_from {
            out.push(ReservoirState { x: x.clone(), t: t + 1 });
        }
    }
    Ok(out)
}

/// Readout features `[x; r·i]`.
pub fn concat_state(x: &[f64], input: &[f64], r: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(x.len() + input.len());
    out.extend_from_slice(x);
    out.extend(input.iter().map(|v| r * v));
    out
}

/// Reservoir with its weights and scratch buffers, for repeated stepping.
#[derive(Debug, Clone)]
pub struct Reservoir {
    params: ReservoirParams,
    weights: WeightSet,
    buf: Vec<f64>,
    z: Vec<f64>,
}

impl Reservoir {
    pub fn new(params: ReservoirParams) -> Result<Self> {
        let weights = init_weights(&params)?;
        Self::with_weights(params, weights)
    }

    pub fn with_weights(params: ReservoirParams, weights: WeightSet) -> Result<Self> {
        params.validate()?;
        check_len("bias length", params.n, weights.bias.len())?;
        match &weights.mixing {
            Mixing::Dense(w) => {
                check_len("dense weight rows", params.n, w.nrows())?;
                check_len("dense weight columns", params.feature_len(), w.ncols())?;
            }
            Mixing::Structured(op) => check_len("structured operator size", params.structured_dim(), op.dim())?,
        }
        let z = vec![0.0; params.n];
        Ok(Self {
            params,
            weights,
            buf: Vec::new(),
            z,
        })
    }

    pub fn params(&self) -> &ReservoirParams {
        &self.params
    }

    pub fn weights(&self) -> &WeightSet {
        &self.weights
    }

    pub fn state_len(&self) -> usize {
        self.params.state_len()
    }

    /// `x ← x^(t+1)` given `x = x^(t)` and input `i^(t)`.
    pub fn step_in_place(&mut self, x: &mut [f64], input: &[f64], t: usize) -> Result<()> {
        check_len("reservoir state", self.params.state_len(), x.len())?;
        check_len("reservoir input", self.params.d, input.len())?;
        check_finite(input, "reservoir input")?;
        let redrawn;
        let mixing = if self.params.redraw {
            redrawn = redrawn_mixing(&self.params, t)?;
            &redrawn
        } else {
            &self.weights.mixing
        };
        preactivate(&self.params, mixing, &self.weights.bias, x, input, &mut self.buf, &mut self.z);
        activate(self.params.activation, &self.z, x);
        Ok(())
    }

    /// Advances `K` independent states (rows of `states`, `K × S`) by one step
    /// with the shared inputs `inputs` (`K × d`). Dense weights use one gemm.
    pub fn step_batch(&mut self, mut states: ArrayViewMut2<'_, f64>, inputs: ArrayView2<'_, f64>, t: usize) -> Result<()> {
        let (s, d, n) = (self.params.state_len(), self.params.d, self.params.n);
        check_len("batch state width", s, states.ncols())?;
        check_len("batch input width", d, inputs.ncols())?;
        check_len("batch size", states.nrows(), inputs.nrows())?;
        if inputs.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("reservoir input"));
        }
        let redrawn;
        let mixing = if self.params.redraw {
            redrawn = redrawn_mixing(&self.params, t)?;
            &redrawn
        } else {
            &self.weights.mixing
        };
        let k = states.nrows();
        match mixing {
            // gemm repacks W on every call, which only pays off for wider batches
            Mixing::Dense(w) if k >= 4 => {
                let mut u = Array2::zeros((k, s + d));
                u.slice_mut(s![.., ..s]).assign(&states);
                u.slice_mut(s![.., s..]).assign(&inputs);
                let mut z = Array2::zeros((k, n));
                for mut row in z.rows_mut() {
                    row.assign(&ArrayView1::from(&self.weights.bias[..]));
                }
                general_mat_mul(1.0, &u, &w.t(), 1.0, &mut z);
                for (zr, mut xr) in z.rows().into_iter().zip(states.rows_mut()) {
                    let zr = zr.as_slice().expect("fresh arrays are contiguous");
                    let xs = xr.as_slice_mut().ok_or(Error::InvalidParameter("batch states must be row-contiguous"))?;
                    activate(self.params.activation, zr, xs);
                }
            }
            _ => {
                let mut x = vec![0.0; s];
                for (mut xr, ir) in states.rows_mut().into_iter().zip(inputs.rows()) {
                    for (dst, src) in x.iter_mut().zip(xr.iter()) {
                        *dst = *src;
                    }
                    let input = ir.to_vec();
                    preactivate(&self.params, mixing, &self.weights.bias, &x, &input, &mut self.buf, &mut self.z);
                    activate(self.params.activation, &self.z, &mut x);
                    for (dst, src) in xr.iter_mut().zip(&x) {
                        *dst = *src;
                    }
                }
            }
        }
        Ok(())
    }
}
