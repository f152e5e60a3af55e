//! MOND interpolation functions and the kernel `Q(v) = ∫₀^v λ(w) w dw`.
//!
//! The real acceleration is `g + λ(|g|) g` for a Newtonian field `g`. Every
//! family shipped here satisfies, with `a0` the acceleration scale:
//!
//! * `λ(σ) ≤ Λ₂ / √σ` for all `σ > 0`,
//! * `λ(σ) ≥ Λ₁ / √σ` for `σ ≤ a0`,
//! * `λ` nonincreasing with `λ(σ) → 0` as `σ → ∞`.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::quad::Adaptive;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    /// `λ(σ) = √(a0/σ)`.
    Sqrt,
    /// `λ(σ) = √(1/4 + a0/σ) − 1/2`.
    Simple,
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::Sqrt => "sqrt",
            Family::Simple => "simple",
        })
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sqrt" => Ok(Family::Sqrt),
            "simple" => Ok(Family::Simple),
            other => Err(Error::Parse(format!("unknown lambda family `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterpolationFunction {
    pub family: Family,
    pub a0: f64,
}

impl Default for InterpolationFunction {
    fn default() -> Self {
        Self::sqrt()
    }
}

impl InterpolationFunction {
    pub fn new(family: Family, a0: f64) -> Result<Self> {
        if !(a0 > 0.0 && a0.is_finite()) {
            return Err(Error::Domain(format!("a0 must be positive, got {a0}")));
        }
        Ok(Self { family, a0 })
    }

    pub fn sqrt() -> Self {
        Self {
            family: Family::Sqrt,
            a0: 1.0,
        }
    }

    pub fn simple() -> Self {
        Self {
            family: Family::Simple,
            a0: 1.0,
        }
    }

    /// λ(σ) for σ > 0.
    pub fn lambda(&self, sigma: f64) -> Result<f64> {
        if !(sigma > 0.0) {
            return Err(Error::Domain(format!(
                "lambda needs a positive acceleration, got {sigma}"
            )));
        }
        Ok(self.lambda_unchecked(sigma))
    }

    #[inline]
    fn lambda_unchecked(&self, sigma: f64) -> f64 {
        match self.family {
            Family::Sqrt => (self.a0 / sigma).sqrt(),
            Family::Simple => (0.25 + self.a0 / sigma).sqrt() - 0.5,
        }
    }

    /// The Mondian boost `λ(g)·g`, continuous at `g = 0` where it vanishes.
    #[inline]
    pub fn boost(&self, g: f64) -> f64 {
        if g <= 0.0 {
            return 0.0;
        }
        match self.family {
            Family::Sqrt => (self.a0 * g).sqrt(),
            // rationalized form avoids cancellation for g >> a0
            Family::Simple => self.a0 / ((0.25 + self.a0 / g).sqrt() + 0.5),
        }
    }

    /// Total acceleration `g + λ(g) g`.
    #[inline]
    pub fn mond_acceleration(&self, g: f64) -> f64 {
        g + self.boost(g)
    }

    /// Upper-bound constant Λ₂ with `λ(σ) ≤ Λ₂/√σ` everywhere.
    pub fn lambda2(&self) -> f64 {
        self.a0.sqrt()
    }

    /// Lower-bound constant Λ₁ with `λ(σ) ≥ Λ₁/√σ` for `σ ≤ small_sigma_threshold()`.
    pub fn lambda1(&self) -> f64 {
        match self.family {
            Family::Sqrt => self.a0.sqrt(),
            // σ·λ(σ)² is minimal at the threshold σ = a0
            Family::Simple => self.a0.sqrt() * (1.25f64.sqrt() - 0.5),
        }
    }

    pub fn small_sigma_threshold(&self) -> f64 {
        self.a0
    }

    pub fn kernel(&self) -> QKernel {
        QKernel::new(*self)
    }

    /// `λ(|u|) u` for a 3-vector, zero at the origin.
    pub fn boost_vec(&self, u: [f64; 3]) -> [f64; 3] {
        let n = norm(u);
        if n == 0.0 {
            return [0.0; 3];
        }
        let k = self.boost(n) / n;
        [k * u[0], k * u[1], k * u[2]]
    }
}

/// `Q(v) = ∫₀^v λ(w) w dw` for a given interpolation function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QKernel {
    pub owner: InterpolationFunction,
    pub quadrature_tol: f64,
}

impl QKernel {
    pub fn new(owner: InterpolationFunction) -> Self {
        Self {
            owner,
            quadrature_tol: 1e-10,
        }
    }

    pub fn closed_form(&self, v: f64) -> Option<f64> {
        match self.owner.family {
            Family::Sqrt => Some(2.0 / 3.0 * self.owner.a0.sqrt() * v.powf(1.5)),
            Family::Simple => Some(simple_q(self.owner.a0, v)),
        }
    }

    /// Q(v) by closed form where available, adaptive quadrature otherwise.
    pub fn eval(&self, v: f64) -> Result<f64> {
        if v < 0.0 || v.is_nan() {
            return Err(Error::Domain(format!("Q needs v >= 0, got {v}")));
        }
        match self.closed_form(v) {
            Some(q) => Ok(q),
            None => self.quadrature(v),
        }
    }

    /// Like [`eval`](Self::eval) for arguments already known to be valid.
    pub fn value(&self, v: f64) -> f64 {
        self.eval(v.max(0.0))
            .expect("Q quadrature failed on a smooth integrand")
    }

    /// Q(v) by adaptive quadrature regardless of family.
    ///
    /// The substitution `w = t²` turns the `√w` behaviour at the origin into
    /// a smooth integrand `2 t λ(t²) t²`.
    pub fn quadrature(&self, v: f64) -> Result<f64> {
        if v < 0.0 || v.is_nan() {
            return Err(Error::Domain(format!("Q needs v >= 0, got {v}")));
        }
        if v == 0.0 {
            return Ok(0.0);
        }
        let f = self.owner;
        Adaptive::new(self.quadrature_tol).with_abs(0.0).integrate(
            |t| 2.0 * t * f.boost(t * t),
            0.0,
            v.sqrt(),
        )
    }
}

/// `Q` for the simple family, `λ(w) w = √(w²/4 + a₀w) − w/2`.
///
/// The antiderivative is that of `√((w + 2a₀)² − 4a₀²)`; for `v ≪ a₀` its
/// terms cancel, so a series in `v/a₀` takes over.
fn simple_q(a0: f64, v: f64) -> f64 {
    if v <= 0.0 {
        return 0.0;
    }
    let x = v / a0;
    if x < 1e-3 {
        let sv = (a0 * v).sqrt();
        return v * (sv * (2.0 / 3.0 + x / 20.0 - x * x / 448.0 + x * x * x / 4608.0) - v / 4.0);
    }
    let c = 2.0 * a0;
    let u = v + c;
    let s = (v * (v + 2.0 * c)).sqrt();
    0.25 * (u * s - c * c * ((u + s) / c).ln()) - 0.25 * v * v
}

fn norm(u: [f64; 3]) -> f64 {
    (u[0] * u[0] + u[1] * u[1] + u[2] * u[2]).sqrt()
}

fn sub(u: [f64; 3], v: [f64; 3]) -> [f64; 3] {
    [u[0] - v[0], u[1] - v[1], u[2] - v[2]]
}

fn dot(u: [f64; 3], v: [f64; 3]) -> f64 {
    u[0] * v[0] + u[1] * v[1] + u[2] * v[2]
}

/// Largest magnitude used when sampling vector pairs for the bound checks.
pub const BOUND_SAMPLE_RADIUS: f64 = 10.0;

fn random_vector(rng: &mut ChaCha8Rng) -> [f64; 3] {
    let mag = rng.gen::<f64>() * BOUND_SAMPLE_RADIUS;
    let mu: f64 = rng.gen_range(-1.0..1.0);
    let phi: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let st = (1.0 - mu * mu).sqrt();
    [mag * st * phi.cos(), mag * st * phi.sin(), mag * mu]
}

fn sample_pairs<F: FnMut([f64; 3], [f64; 3]) -> Option<f64>>(samples: usize, seed: u64, mut ratio: F) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = 0.0f64;
    for _ in 0..samples {
        let u = random_vector(&mut rng);
        let v = random_vector(&mut rng);
        if let Some(r) = ratio(u, v) {
            best = best.max(r);
        }
    }
    best
}

/// Hölder-1/2 ratio for one pair; `None` when the pair coincides.
pub fn hoelder_ratio(f: &InterpolationFunction, u: [f64; 3], v: [f64; 3]) -> Option<f64> {
    let d = norm(sub(u, v));
    if d == 0.0 {
        return None;
    }
    Some(norm(sub(f.boost_vec(u), f.boost_vec(v))) / d.sqrt())
}

/// Fitted constant C in `|λ(|u|)u − λ(|v|)v| ≤ C|u−v|^{1/2}` over random pairs.
pub fn check_hoelder(f: &InterpolationFunction, samples: usize, seed: u64) -> Result<f64> {
    if samples < 2 {
        return Err(Error::Domain("check_hoelder needs at least 2 samples".into()));
    }
    Ok(sample_pairs(samples, seed, |u, v| hoelder_ratio(f, u, v)))
}

/// Taylor-remainder ratio `|Q(|u|) − Q(|v|) − λ(|v|)v·(u−v)| / |u−v|^{3/2}`.
pub fn q_taylor_ratio(q: &QKernel, u: [f64; 3], v: [f64; 3]) -> Option<f64> {
    let diff = sub(u, v);
    let d = norm(diff);
    if d == 0.0 {
        return None;
    }
    let lin = dot(q.owner.boost_vec(v), diff);
    let num = q.value(norm(u)) - q.value(norm(v)) - lin;
    Some(num.abs() / d.powf(1.5))
}

/// Fitted constant C in `|Q(|u|) − Q(|v|) − λ(|v|)v·(u−v)| ≤ C|u−v|^{3/2}`.
pub fn check_q_taylor(q: &QKernel, samples: usize, seed: u64) -> Result<f64> {
    if samples < 2 {
        return Err(Error::Domain("check_q_taylor needs at least 2 samples".into()));
    }
    Ok(sample_pairs(samples, seed, |u, v| q_taylor_ratio(q, u, v)))
}
