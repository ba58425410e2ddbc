//! Problem definitions: kernel, reaction and initial data, plus sampled
//! checks of the standing structural assumptions.
//!
//! Kernels are separable, `K(x, y) = (1 + a(x)) |y|^{-d-α}` with `a` a
//! trigonometric polynomial of zero mean and sup-norm below one. The reaction
//! is of KPP type, `f(x, u) = μ(x) u - E(x, u)` with a quadratic error term.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("order α must lie in (0,2), got {0}")]
    InvalidOrder(f64),
    #[error("dimension must be 1 or 2, got {0}")]
    InvalidDimension(usize),
    #[error("kernel modulation amplitude {0} must be below 1")]
    ModulationTooLarge(f64),
    #[error("kernel bound constant C_K = {declared} is below the minimum {required} implied by the modulation")]
    BoundTooSmall { declared: f64, required: f64 },
    #[error("kernel is singular at y = 0")]
    SingularKernel,
    #[error("point has dimension {got}, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("density must be nonnegative, got u = {0}")]
    NegativeDensity(f64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// Smooth 1-periodic function `mean + Σ_m (c_m cos 2πmx + s_m sin 2πmx)`.
///
/// In dimension `d > 1` the oscillating part is averaged over the axes so
/// the sup-norm bound of the oscillation is independent of `d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrigPoly {
    pub mean: f64,
    #[serde(default)]
    pub cos: Vec<f64>,
    #[serde(default)]
    pub sin: Vec<f64>,
}

impl TrigPoly {
    pub fn constant(mean: f64) -> Self {
        Self { mean, cos: Vec::new(), sin: Vec::new() }
    }

    /// `mean + amplitude·cos(2πx)`.
    pub fn cosine(mean: f64, amplitude: f64) -> Self {
        if amplitude == 0.0 {
            return Self::constant(mean);
        }
        Self { mean, cos: vec![amplitude], sin: Vec::new() }
    }

    fn oscillation_1d(&self, x: f64) -> f64 {
        let t = x - x.floor();
        let mut acc = 0.0;
        for (m, c) in self.cos.iter().enumerate() {
            acc += c * (2.0 * PI * (m + 1) as f64 * t).cos();
        }
        for (m, s) in self.sin.iter().enumerate() {
            acc += s * (2.0 * PI * (m + 1) as f64 * t).sin();
        }
        acc
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.mean + self.oscillation_1d(x)
    }

    pub fn eval_point(&self, x: &[f64]) -> f64 {
        if x.is_empty() {
            return self.mean;
        }
        let osc: f64 = x.iter().map(|&xi| self.oscillation_1d(xi)).sum();
        self.mean + osc / x.len() as f64
    }

    pub fn is_constant(&self) -> bool {
        self.cos.iter().chain(&self.sin).all(|c| *c == 0.0)
    }

    /// Upper bound on `|p(x) - mean|`.
    pub fn oscillation_bound(&self) -> f64 {
        self.cos.iter().chain(&self.sin).map(|c| c.abs()).sum()
    }

    /// Upper bound on `|p'(x)|` (first derivative along any axis).
    pub fn derivative_bound(&self) -> f64 {
        let f = |v: &Vec<f64>| -> f64 { v.iter().enumerate().map(|(m, c)| 2.0 * PI * (m + 1) as f64 * c.abs()).sum() };
        f(&self.cos) + f(&self.sin)
    }

    /// Upper bound on `|p''(x)|`.
    pub fn second_derivative_bound(&self) -> f64 {
        let f = |v: &Vec<f64>| -> f64 {
            v.iter().enumerate().map(|(m, c)| (2.0 * PI * (m + 1) as f64).powi(2) * c.abs()).sum()
        };
        f(&self.cos) + f(&self.sin)
    }

    /// Sup and inf over one period; exact for a single harmonic, otherwise
    /// taken on a dense sample.
    pub fn extrema(&self) -> (f64, f64) {
        if self.is_constant() {
            return (self.mean, self.mean);
        }
        let harmonics = self.cos.len().max(self.sin.len());
        let n = 512 * harmonics.max(1);
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n {
            let v = self.eval(i as f64 / n as f64);
            lo = lo.min(v);
            hi = hi.max(v);
        }
        (lo, hi)
    }
}

/// Separable kernel `(1 + a(x)) |y|^{-d-α}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    dim: usize,
    order: f64,
    modulation: TrigPoly,
    bound: f64,
}

impl KernelSpec {
    pub fn new(dim: usize, order: f64, modulation: TrigPoly) -> Result<Self, ModelError> {
        if !(order > 0.0 && order < 2.0) {
            return Err(ModelError::InvalidOrder(order));
        }
        if dim != 1 && dim != 2 {
            return Err(ModelError::InvalidDimension(dim));
        }
        let modulation = TrigPoly { mean: 0.0, ..modulation };
        let amp = modulation.oscillation_bound();
        if amp >= 1.0 {
            return Err(ModelError::ModulationTooLarge(amp));
        }
        let bound = (1.0 + amp).max(1.0 / (1.0 - amp));
        Ok(Self { dim, order, modulation, bound })
    }

    /// Pure fractional kernel `|y|^{-d-α}`.
    pub fn homogeneous(dim: usize, order: f64) -> Result<Self, ModelError> {
        Self::new(dim, order, TrigPoly::constant(0.0))
    }

    /// Override the declared bound constant `C_K`.
    pub fn with_bound(mut self, bound: f64) -> Result<Self, ModelError> {
        if !(bound.is_finite() && bound > 0.0) {
            return Err(ModelError::InvalidParameter(format!("C_K must be positive, got {bound}")));
        }
        self.bound = bound;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn order(&self) -> f64 {
        self.order
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn modulation(&self) -> &TrigPoly {
        &self.modulation
    }

    /// `d + α`, the algebraic decay rate of the kernel tail.
    pub fn tail_exponent(&self) -> f64 {
        self.dim as f64 + self.order
    }

    pub fn is_x_independent(&self) -> bool {
        self.modulation.is_constant()
    }

    /// Row factor `1 + a(x)`.
    pub fn scale_at(&self, x: &[f64]) -> f64 {
        1.0 + self.modulation.eval_point(x)
    }

    pub fn scale_1d(&self, x: f64) -> f64 {
        1.0 + self.modulation.eval(x)
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64, ModelError> {
        self.check_dim(x)?;
        self.check_dim(y)?;
        let r2: f64 = y.iter().map(|v| v * v).sum();
        if r2 == 0.0 {
            return Err(ModelError::SingularKernel);
        }
        Ok(self.scale_at(x) * r2.sqrt().powf(-self.tail_exponent()))
    }

    fn check_dim(&self, p: &[f64]) -> Result<(), ModelError> {
        if p.len() != self.dim {
            return Err(ModelError::DimensionMismatch { expected: self.dim, got: p.len() });
        }
        Ok(())
    }
}

/// Quadratic error term `E(x, u) = scale·(1 + amplitude·cos 2πx)·u²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadraticError {
    pub scale: f64,
    pub amplitude: f64,
}

impl QuadraticError {
    fn coefficient(&self, x: &[f64]) -> f64 {
        let osc = TrigPoly::cosine(0.0, self.amplitude).eval_point(x);
        self.scale * (1.0 + osc)
    }
}

/// KPP reaction `f(x, u) = μ(x) u - E(x, u)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReactionSpec {
    growth: TrigPoly,
    error: QuadraticError,
    mu_minus: f64,
    mu_plus: f64,
}

impl ReactionSpec {
    pub fn new(growth: TrigPoly, error: QuadraticError) -> Result<Self, ModelError> {
        if !(error.scale > 0.0) {
            return Err(ModelError::InvalidParameter(format!(
                "error-term scale must be positive, got {}",
                error.scale
            )));
        }
        if !(error.amplitude.abs() < 1.0) {
            return Err(ModelError::InvalidParameter(format!(
                "error-term amplitude must lie in (-1,1), got {}",
                error.amplitude
            )));
        }
        let (mu_minus, mu_plus) = growth.extrema();
        Ok(Self { growth, error, mu_minus, mu_plus })
    }

    /// `f = μ u - u²` with `μ(x) = mean + amplitude·cos 2πx`.
    pub fn logistic(mean: f64, amplitude: f64) -> Result<Self, ModelError> {
        Self::new(TrigPoly::cosine(mean, amplitude), QuadraticError { scale: 1.0, amplitude: 0.0 })
    }

    pub fn growth(&self) -> &TrigPoly {
        &self.growth
    }

    pub fn mu(&self, x: &[f64]) -> f64 {
        self.growth.eval_point(x)
    }

    pub fn mu_1d(&self, x: f64) -> f64 {
        self.growth.eval(x)
    }

    pub fn mu_plus(&self) -> f64 {
        self.mu_plus
    }

    pub fn mu_minus(&self) -> f64 {
        self.mu_minus
    }

    /// Lower quadratic envelope constant `m̄`.
    pub fn m_lower(&self) -> f64 {
        self.error.scale * (1.0 - self.error.amplitude.abs())
    }

    /// Upper quadratic envelope constant `M̄`.
    pub fn m_upper(&self) -> f64 {
        self.error.scale * (1.0 + self.error.amplitude.abs())
    }

    /// Saturation level `M` with `f(x, ·) ≤ 0` on `[M, ∞)`.
    pub fn saturation(&self) -> f64 {
        (self.mu_plus / self.m_lower()).max(0.0)
    }

    pub fn error_term(&self, x: &[f64], u: f64) -> f64 {
        self.error.coefficient(x) * u * u
    }

    pub fn eval(&self, x: &[f64], u: f64) -> Result<f64, ModelError> {
        if u < 0.0 {
            return Err(ModelError::NegativeDensity(u));
        }
        Ok(self.eval_unchecked(x, u))
    }

    /// Same as [`eval`](Self::eval) without the sign check.
    pub fn eval_unchecked(&self, x: &[f64], u: f64) -> f64 {
        self.mu(x) * u - self.error_term(x, u)
    }

    /// `-∂_u f` by central differences.
    pub fn neg_du_fd(&self, x: &[f64], u: f64) -> f64 {
        let h = 1e-6 * (1.0 + u.abs());
        -(self.eval_unchecked(x, u + h) - self.eval_unchecked(x, u - h)) / (2.0 * h)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum InitialProfile {
    /// `c / (1 + |x|^{d+α})`
    Algebraic { c: f64 },
    /// `c (1 + amp·cos 2πx) / (1 + |x|^{d+α})`
    Modulated { c: f64, amp: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialData {
    profile: InitialProfile,
    dim: usize,
    tail_exponent: f64,
    c1: f64,
    c2: f64,
}

impl InitialData {
    pub fn new(profile: InitialProfile, dim: usize, tail_exponent: f64) -> Result<Self, ModelError> {
        let (c1, c2) = match profile {
            InitialProfile::Algebraic { c } => (c, c),
            InitialProfile::Modulated { c, amp } => {
                if !(amp.abs() < 1.0) {
                    return Err(ModelError::InvalidParameter(format!(
                        "initial modulation must lie in (-1,1), got {amp}"
                    )));
                }
                (c * (1.0 - amp.abs()), c * (1.0 + amp.abs()))
            }
        };
        if !(c1 > 0.0 && c2.is_finite()) {
            return Err(ModelError::InvalidParameter(format!(
                "initial envelope constants must be positive, got c1={c1}, c2={c2}"
            )));
        }
        Ok(Self { profile, dim, tail_exponent, c1, c2 })
    }

    pub fn algebraic(c: f64, kernel: &KernelSpec) -> Result<Self, ModelError> {
        Self::new(InitialProfile::Algebraic { c }, kernel.dim(), kernel.tail_exponent())
    }

    pub fn profile(&self) -> InitialProfile {
        self.profile
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn c1(&self) -> f64 {
        self.c1
    }

    pub fn c2(&self) -> f64 {
        self.c2
    }

    pub fn with_envelope(mut self, c1: f64, c2: f64) -> Self {
        self.c1 = c1;
        self.c2 = c2;
        self
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let decay = 1.0 / (1.0 + r.powf(self.tail_exponent));
        match self.profile {
            InitialProfile::Algebraic { c } => c * decay,
            InitialProfile::Modulated { c, amp } => c * (1.0 + TrigPoly::cosine(0.0, amp).eval_point(x)) * decay,
        }
    }
}

/// Barrier constants recorded on the problem once they are known.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedConstants {
    pub d_hat: f64,
    pub a0: f64,
    pub b0: f64,
    pub c0: f64,
    pub big_c0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub kernel: KernelSpec,
    pub reaction: ReactionSpec,
    pub initial: InitialData,
    pub derived: Option<DerivedConstants>,
}

impl ProblemSpec {
    pub fn new(kernel: KernelSpec, reaction: ReactionSpec, initial: InitialData) -> Result<Self, ModelError> {
        if initial.dim() != kernel.dim() {
            return Err(ModelError::DimensionMismatch { expected: kernel.dim(), got: initial.dim() });
        }
        Ok(Self { kernel, reaction, initial, derived: None })
    }

    pub fn dim(&self) -> usize {
        self.kernel.dim()
    }
}

// ---------------------------------------------------------------------------
// JSON problem documents

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelDoc {
    #[serde(default)]
    pub amplitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReactionDoc {
    pub mu_mean: f64,
    #[serde(default)]
    pub mu_amp: f64,
    /// Coefficient of `u²` in the error term.
    #[serde(default = "one")]
    pub saturation: f64,
    #[serde(default)]
    pub error_amp: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialDoc {
    pub c: f64,
    #[serde(default)]
    pub amp: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidationDoc {
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default)]
    pub seed: u64,
}

impl Default for ValidationDoc {
    fn default() -> Self {
        Self { samples: default_samples(), seed: 0 }
    }
}

fn one() -> f64 {
    1.0
}

fn default_samples() -> usize {
    1000
}

/// On-disk problem description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemDoc {
    pub d: usize,
    pub alpha: f64,
    pub kernel: KernelDoc,
    pub reaction: ReactionDoc,
    pub initial: InitialDoc,
    #[serde(default)]
    pub validation: ValidationDoc,
}

impl ProblemDoc {
    pub fn to_spec(&self) -> Result<ProblemSpec, ModelError> {
        let kernel = KernelSpec::new(self.d, self.alpha, TrigPoly::cosine(0.0, self.kernel.amplitude))?;
        let reaction = ReactionSpec::new(
            TrigPoly::cosine(self.reaction.mu_mean, self.reaction.mu_amp),
            QuadraticError { scale: self.reaction.saturation, amplitude: self.reaction.error_amp },
        )?;
        let profile = if self.initial.amp == 0.0 {
            InitialProfile::Algebraic { c: self.initial.c }
        } else {
            InitialProfile::Modulated { c: self.initial.c, amp: self.initial.amp }
        };
        let initial = InitialData::new(profile, self.d, kernel.tail_exponent())?;
        ProblemSpec::new(kernel, reaction, initial)
    }
}

// ---------------------------------------------------------------------------
// Assumption checks

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub x: Vec<f64>,
    /// Second argument: `y` for kernel checks, `u` for reaction checks.
    pub arg: Vec<f64>,
    /// Signed margin; negative means the assumption is violated here.
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionCheck {
    pub name: String,
    pub passed: bool,
    pub samples: usize,
    pub worst: Option<Witness>,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub seed: u64,
    pub sample_budget: usize,
    pub checks: Vec<AssumptionCheck>,
}

impl ValidationReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> Vec<&AssumptionCheck> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }

    pub fn check(&self, name: &str) -> Option<&AssumptionCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Tracks the smallest margin seen for one assumption.
struct Tracker {
    name: &'static str,
    note: String,
    tol: f64,
    samples: usize,
    worst: Option<Witness>,
}

impl Tracker {
    fn new(name: &'static str, tol: f64, note: impl Into<String>) -> Self {
        Self { name, note: note.into(), tol, samples: 0, worst: None }
    }

    fn record(&mut self, x: &[f64], arg: &[f64], margin: f64) {
        self.samples += 1;
        let replace = match &self.worst {
            None => true,
            Some(w) => margin < w.margin || margin.is_nan(),
        };
        if replace {
            self.worst = Some(Witness { x: x.to_vec(), arg: arg.to_vec(), margin });
        }
    }

    fn finish(self) -> AssumptionCheck {
        let passed = self.worst.as_ref().is_none_or(|w| w.margin >= -self.tol);
        AssumptionCheck {
            name: self.name.to_string(),
            passed,
            samples: self.samples,
            worst: self.worst,
            note: self.note,
        }
    }
}

/// Sampled check of every structural assumption on `spec`.
///
/// `sample_budget` is the number of random `(x, y)` / `(x, u)` pairs drawn
/// per check (at least 100); sampling is reproducible from `seed`.
pub fn validate_assumptions(spec: &ProblemSpec, sample_budget: usize, seed: u64) -> ValidationReport {
    let budget = sample_budget.max(100);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = spec.dim();
    let kernel = &spec.kernel;
    let reaction = &spec.reaction;
    let beta = kernel.tail_exponent();
    let rel = 1e-12;

    let mut order = Tracker::new("kernel.order", 0.0, "α ∈ (0,2)");
    order.record(&[], &[kernel.order()], kernel.order().min(2.0 - kernel.order()));

    let mut positivity = Tracker::new("kernel.positivity", 0.0, "K(x,y) > 0");
    let mut symmetry = Tracker::new("kernel.symmetry", 0.0, "K(x,y) = K(x,-y)");
    let mut periodicity = Tracker::new("kernel.periodicity", 0.0, "K(x+e_i,y) = K(x,y) to relative 1e-12");
    let mut bounds = Tracker::new("kernel.bounds", 0.0, format!("C_K^-1 ≤ K|y|^(d+α) ≤ C_K, C_K = {}", kernel.bound()));
    let deriv_bound = kernel.modulation().derivative_bound() * 1.01 + 1e-9;
    let second_bound = kernel.modulation().second_derivative_bound() * 1.01 + 1e-6;
    let mut derivs = Tracker::new(
        "kernel.x_derivatives",
        0.0,
        format!(
            "finite-difference |D_x K|·|y|^(d+α) ≤ {deriv_bound:.6}, |D²_x K|·|y|^(d+α) ≤ {second_bound:.6} (sampled, not a proof)"
        ),
    );

    for _ in 0..budget {
        let x: Vec<f64> = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
        let mag = 10f64.powf(rng.random_range(-4.0..4.0));
        let mut y: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let norm = y.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
        y.iter_mut().for_each(|v| *v *= mag / norm);
        let ny: Vec<f64> = y.iter().map(|v| -v).collect();

        let k = kernel.eval(&x, &y).unwrap_or(f64::NAN);
        let k_neg = kernel.eval(&x, &ny).unwrap_or(f64::NAN);
        positivity.record(&x, &y, if k > 0.0 { 1.0 } else { -1.0 });
        symmetry.record(&x, &y, if k == k_neg { 0.0 } else { -((k - k_neg).abs() / k.abs()) });
        for axis in 0..d {
            let mut xs = x.clone();
            xs[axis] += 1.0;
            let kp = kernel.eval(&xs, &y).unwrap_or(f64::NAN);
            let dev = (kp - k).abs() / k.abs();
            periodicity.record(&x, &y, rel - dev);
        }
        let ratio = k * mag.powf(beta);
        let cb = kernel.bound();
        // relative margin, with rounding slack for |y|^(d+α) recomputed here
        bounds.record(&x, &y, (ratio * cb - 1.0).min(1.0 - ratio / cb) + rel);

        let h = 1e-4;
        for axis in 0..d {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[axis] += h;
            xm[axis] -= h;
            let kp = kernel.scale_at(&xp);
            let km = kernel.scale_at(&xm);
            let k0 = kernel.scale_at(&x);
            let d1 = (kp - km) / (2.0 * h);
            let d2 = (kp - 2.0 * k0 + km) / (h * h);
            derivs.record(&x, &y, (deriv_bound - d1.abs()).min(second_bound - d2.abs()));
        }
    }

    let m = reaction.saturation();
    let m_lo = reaction.m_lower();
    let m_hi = reaction.m_upper();
    let mu_p = reaction.mu_plus();
    let mu_m = reaction.mu_minus();
    let mut zero = Tracker::new("reaction.zero", 1e-14, "f(x,0) = 0");
    let mut kpp = Tracker::new("reaction.kpp_monotone", 1e-12, "s ↦ f(x,s)/s nonincreasing");
    let mut sat = Tracker::new("reaction.saturation", 1e-12, format!("f(x,s) ≤ 0 for s ≥ M = {m}"));
    let mut env_e = Tracker::new("reaction.error_envelope", 1e-12, format!("{m_lo}·u² ≤ E(x,u) ≤ {m_hi}·u²"));
    let mut env_f = Tracker::new("reaction.growth_envelope", 1e-12, "μ₋u - M̄u² ≤ f(x,u) ≤ μ₊u - m̄u²");
    let scale_u = m.max(1.0);
    for _ in 0..budget {
        let x: Vec<f64> = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
        zero.record(&x, &[0.0], -reaction.eval_unchecked(&x, 0.0).abs());

        // geometric ladder of densities
        let s0 = 10f64.powf(rng.random_range(-6.0..0.0)) * scale_u;
        let mut prev = reaction.eval_unchecked(&x, s0) / s0;
        let mut s = s0;
        for _ in 0..8 {
            s *= 1.7;
            let cur = reaction.eval_unchecked(&x, s) / s;
            kpp.record(&x, &[s], (prev - cur) / prev.abs().max(1.0));
            prev = cur;
        }

        let above = m * (1.0 + rng.random_range(0.0..4.0));
        sat.record(&x, &[above], -reaction.eval_unchecked(&x, above) / (1.0 + above * above));

        let u = rng.random_range(0.0..3.0) * scale_u;
        let e = reaction.error_term(&x, u);
        let u2 = u * u;
        let denom = 1.0 + u2;
        env_e.record(&x, &[u], (e - m_lo * u2).min(m_hi * u2 - e) / denom);
        let f = reaction.eval_unchecked(&x, u);
        env_f.record(&x, &[u], (f - (mu_m * u - m_hi * u2)).min(mu_p * u - m_lo * u2 - f) / denom);
    }

    let c1 = spec.initial.c1();
    let c2 = spec.initial.c2();
    let mut init_env = Tracker::new("initial.envelope", 1e-12, format!("{c1}/(1+|x|^(d+α)) ≤ u₀ ≤ {c2}/(1+|x|^(d+α))"));
    let mut init_pos = Tracker::new("initial.positivity", 0.0, "u₀ > 0");
    for i in 0..budget {
        let mag = if i % 2 == 0 { rng.random_range(0.0..3.0) } else { 10f64.powf(rng.random_range(-2.0..6.0)) };
        let mut x: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
        x.iter_mut().for_each(|v| *v *= mag / norm);
        let r = mag;
        let env = 1.0 / (1.0 + r.powf(beta));
        let u0 = spec.initial.eval(&x);
        init_env.record(&x, &[u0], ((u0 - c1 * env) / env).min((c2 * env - u0) / env));
        init_pos.record(&x, &[u0], if u0 > 0.0 { u0 / env } else { -1.0 });
    }

    let checks = vec![
        order.finish(),
        positivity.finish(),
        symmetry.finish(),
        periodicity.finish(),
        bounds.finish(),
        derivs.finish(),
        zero.finish(),
        kpp.finish(),
        sat.finish(),
        env_e.finish(),
        env_f.finish(),
        init_env.finish(),
        init_pos.finish(),
    ];
    ValidationReport { seed, sample_budget: budget, checks }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kernel(amp: f64) -> KernelSpec {
        KernelSpec::new(1, 1.0, TrigPoly::cosine(0.0, amp)).unwrap()
    }

    #[test]
    fn eval_kernel_examples() {
        let k = kernel(0.0);
        assert_eq!(k.eval(&[0.3], &[2.0]).unwrap(), 0.25);
        let k = kernel(0.5);
        assert!((k.eval(&[0.0], &[1.0]).unwrap() - 1.5).abs() < 1e-15);
        for (x, y) in [(0.1, 0.7), (2.3, -1e-3), (-0.4, 55.0)] {
            assert_eq!(k.eval(&[x], &[y]).unwrap(), k.eval(&[x], &[-y]).unwrap());
        }
    }

    #[test]
    fn kernel_rejects_origin_and_bad_order() {
        assert_eq!(kernel(0.0).eval(&[0.0], &[0.0]), Err(ModelError::SingularKernel));
        let err = KernelSpec::homogeneous(1, 2.5).unwrap_err();
        assert_eq!(err.to_string(), "order α must lie in (0,2), got 2.5");
        assert!(KernelSpec::homogeneous(1, 0.0).is_err());
        assert!(KernelSpec::homogeneous(3, 1.0).is_err());
        assert!(KernelSpec::new(1, 1.0, TrigPoly::cosine(0.0, 1.0)).is_err());
    }

    #[test]
    fn reaction_examples() {
        let r = ReactionSpec::logistic(1.0, 0.0).unwrap();
        assert_eq!(r.eval(&[0.2], 0.0).unwrap(), 0.0);
        assert_eq!(r.eval(&[0.2], 1.0).unwrap(), 0.0);
        assert_eq!(r.eval(&[0.2], 0.5).unwrap(), 0.25);
        assert_eq!(r.eval(&[0.2], -0.1), Err(ModelError::NegativeDensity(-0.1)));
        assert_eq!(r.saturation(), 1.0);
        assert_eq!(r.m_lower(), 1.0);
        assert_eq!(r.m_upper(), 1.0);
    }

    #[test]
    fn periodic_growth_extrema() {
        let r = ReactionSpec::logistic(1.0, 0.5).unwrap();
        assert!((r.mu_plus() - 1.5).abs() < 1e-12);
        assert!((r.mu_minus() - 0.5).abs() < 1e-12);
        assert!((r.saturation() - 1.5).abs() < 1e-12);
    }

    fn spec(amp: f64, mu_amp: f64) -> ProblemSpec {
        let k = kernel(amp);
        let init = InitialData::algebraic(1.0, &k).unwrap();
        ProblemSpec::new(k, ReactionSpec::logistic(1.0, mu_amp).unwrap(), init).unwrap()
    }

    #[test]
    fn logistic_problem_passes_all_checks() {
        let report = validate_assumptions(&spec(0.0, 0.0), 500, 1);
        assert!(report.all_passed(), "{:#?}", report.failures());
    }

    #[test]
    fn modulated_kernel_bound_is_two() {
        let s = spec(0.5, 0.5);
        assert_eq!(s.kernel.bound(), 2.0);
        let report = validate_assumptions(&s, 500, 2);
        assert!(report.check("kernel.bounds").unwrap().passed);
        assert!(report.all_passed(), "{:#?}", report.failures());
    }

    #[test]
    fn undersized_bound_constant_fails() {
        let mut s = spec(0.5, 0.0);
        s.kernel = s.kernel.with_bound(1.2).unwrap();
        let report = validate_assumptions(&s, 500, 3);
        assert!(!report.check("kernel.bounds").unwrap().passed);
    }

    #[test]
    fn initial_envelope_equality_case() {
        let report = validate_assumptions(&spec(0.0, 0.0), 300, 4);
        let chk = report.check("initial.envelope").unwrap();
        assert!(chk.passed);
        assert!(chk.worst.as_ref().unwrap().margin.abs() < 1e-12);
    }

    #[test]
    fn misdeclared_initial_envelope_fails() {
        let mut s = spec(0.0, 0.0);
        s.initial = s.initial.clone().with_envelope(1.5, 2.0);
        assert!(!validate_assumptions(&s, 300, 5).check("initial.envelope").unwrap().passed);
    }

    #[test]
    fn problem_doc_round_trip() {
        let json = r#"{"d":1,"alpha":1.0,"kernel":{"amplitude":0.25},
            "reaction":{"mu_mean":1.0,"mu_amp":0.5,"saturation":1.0},
            "initial":{"c":1.0},"validation":{"samples":200,"seed":9}}"#;
        let doc: ProblemDoc = serde_json::from_str(json).unwrap();
        let s = doc.to_spec().unwrap();
        assert_eq!(s.kernel.order(), 1.0);
        assert_eq!(doc.validation.seed, 9);
        let bad = json.replace("\"alpha\":1.0", "\"alpha\":2.5");
        let doc: ProblemDoc = serde_json::from_str(&bad).unwrap();
        assert_eq!(doc.to_spec().unwrap_err(), ModelError::InvalidOrder(2.5));
    }
}
