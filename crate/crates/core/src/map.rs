//! Quasiperiodically forced logistic map.
//!
//! ```text
//! x_{n+1} = α [1 + ε cos(2π φ_n)] x_n (1 − x_n)
//! φ_{n+1} = φ_n + ω  (mod 1)
//! ```
//!
//! Besides plain iteration this module computes the orbit-averaged Lyapunov
//! exponent and scans it over an (α, ε′) grid, where ε′ = ε / (4/α − 1) is the
//! rescaled drive that keeps the interesting region inside the unit square.

use std::io::{self, Write};

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MapError {
    #[error("invalid map parameter: {0}")]
    Domain(String),
    #[error("invalid initial condition: {0}")]
    InitialCondition(String),
    #[error("orbit left [0, 1] at iteration {iteration} (x = {value})")]
    Divergence { iteration: usize, value: f64 },
    #[error("Lyapunov term is ln(0) at orbit step {step}; perturb x0 and retry")]
    SingularTerm { step: usize },
}

/// Golden-mean driving frequency (√5 − 1)/2.
pub fn golden_omega<T: Scalar>() -> T {
    (T::lit(5.0).sqrt() - T::one()) / T::lit(2.0)
}

// Slack for α(1+ε) computed from ε′ = 1, which lands within an ulp or two of 4.
fn ulps<T: Scalar>(k: f64) -> T {
    T::epsilon() * T::lit(k)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MapParams<T> {
    pub alpha: T,
    pub epsilon: T,
    pub omega: T,
}

impl<T: Scalar> MapParams<T> {
    /// Parameters with the golden-mean frequency.
    pub fn new(alpha: T, epsilon: T) -> Result<Self, MapError> {
        Self::with_omega(alpha, epsilon, golden_omega())
    }

    pub fn with_omega(alpha: T, epsilon: T, omega: T) -> Result<Self, MapError> {
        let p = Self {
            alpha,
            epsilon,
            omega,
        };
        p.validate()?;
        Ok(p)
    }

    /// Parameters from α and the rescaled drive ε′.
    pub fn from_drive(alpha: T, drive: ScaledDrive<T>) -> Result<Self, MapError> {
        Self::new(alpha, epsilon_from_prime(alpha, drive)?)
    }

    pub fn validate(&self) -> Result<(), MapError> {
        let four = T::lit(4.0);
        if !(self.alpha > T::zero() && self.alpha <= four) {
            return Err(MapError::Domain(format!(
                "alpha must lie in (0, 4], got {}",
                self.alpha
            )));
        }
        if !(self.epsilon >= T::zero() && self.epsilon <= T::one()) {
            return Err(MapError::Domain(format!(
                "epsilon must lie in [0, 1], got {}",
                self.epsilon
            )));
        }
        if self.alpha * (T::one() + self.epsilon) > four * (T::one() + ulps::<T>(4.0)) {
            return Err(MapError::Domain(format!(
                "alpha*(1+epsilon) = {} exceeds 4; orbit would escape [0, 1]",
                self.alpha * (T::one() + self.epsilon)
            )));
        }
        if !(self.omega > T::zero() && self.omega < T::one()) {
            return Err(MapError::Domain(format!(
                "omega must lie in (0, 1), got {}",
                self.omega
            )));
        }
        Ok(())
    }

    /// The rescaled drive ε′ of these parameters (may exceed 1).
    pub fn eps_prime(&self) -> Result<T, MapError> {
        prime_from_epsilon(self.alpha, self.epsilon)
    }
}

/// Rescaled drive ε′ ∈ [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize)]
pub struct ScaledDrive<T>(T);

impl<T: Scalar> ScaledDrive<T> {
    pub fn new(eps_prime: T) -> Result<Self, MapError> {
        if eps_prime >= T::zero() && eps_prime <= T::one() {
            Ok(Self(eps_prime))
        } else {
            Err(MapError::Domain(format!(
                "eps_prime must lie in [0, 1], got {eps_prime}"
            )))
        }
    }

    pub fn value(self) -> T {
        self.0
    }
}

fn check_prime_alpha<T: Scalar>(alpha: T) -> Result<(), MapError> {
    if alpha > T::zero() && alpha < T::lit(4.0) {
        Ok(())
    } else {
        Err(MapError::Domain(format!(
            "eps_prime conversion needs alpha in (0, 4), got {alpha}"
        )))
    }
}

/// ε = ε′ (4/α − 1).
pub fn epsilon_from_prime<T: Scalar>(alpha: T, drive: ScaledDrive<T>) -> Result<T, MapError> {
    check_prime_alpha(alpha)?;
    Ok(drive.value() * (T::lit(4.0) / alpha - T::one()))
}

/// ε′ = ε / (4/α − 1).
pub fn prime_from_epsilon<T: Scalar>(alpha: T, epsilon: T) -> Result<T, MapError> {
    check_prime_alpha(alpha)?;
    Ok(epsilon / (T::lit(4.0) / alpha - T::one()))
}

#[inline]
fn drive_factor<T: Scalar>(phi: T, params: &MapParams<T>) -> T {
    params.alpha * (T::one() + params.epsilon * (T::TAU() * phi).cos())
}

/// One application of the map. Expects `x ∈ [0, 1]`, `phi ∈ [0, 1)`.
#[inline]
pub fn step<T: Scalar>(x: T, phi: T, params: &MapParams<T>) -> (T, T) {
    debug_assert!(x >= T::zero() && x <= T::one(), "x out of range");
    debug_assert!(phi >= T::zero() && phi < T::one(), "phi out of range");
    let mut x_next = drive_factor(phi, params) * x * (T::one() - x);
    if x_next > T::one() && x_next - T::one() <= ulps::<T>(4.0) {
        x_next = T::one();
    }
    let mut phi_next = phi + params.omega;
    if phi_next >= T::one() {
        phi_next -= T::one();
    }
    (x_next, phi_next)
}

/// Recorded orbit of the map.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T> {
    pub x: Vec<T>,
    pub phi: Vec<T>,
    pub params: MapParams<T>,
    pub burn_in: usize,
}

impl<T: Scalar> Trajectory<T> {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// CSV `n,x,phi`; `n` is the absolute iteration index (burn-in included).
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "n,x,phi")?;
        for (i, (x, phi)) in self.x.iter().zip(&self.phi).enumerate() {
            writeln!(out, "{},{:.16e},{:.16e}", self.burn_in + i, x, phi)?;
        }
        out.flush()
    }
}

fn check_start<T: Scalar>(x0: T, phi0: T, n: usize) -> Result<(), MapError> {
    if !(x0 > T::zero() && x0 < T::one()) {
        return Err(MapError::InitialCondition(format!(
            "x0 must lie in (0, 1), got {x0}"
        )));
    }
    if !(phi0 >= T::zero() && phi0 < T::one()) {
        return Err(MapError::InitialCondition(format!(
            "phi0 must lie in [0, 1), got {phi0}"
        )));
    }
    if n == 0 {
        return Err(MapError::InitialCondition("n must be at least 1".into()));
    }
    Ok(())
}

fn in_unit<T: Scalar>(x: T) -> bool {
    x >= T::zero() && x <= T::one()
}

/// Walks `burn_in` transient steps and then hands each of the next `n`
/// states to `visit` together with its index among the kept states.
fn walk<T, F>(
    params: &MapParams<T>,
    x0: T,
    phi0: T,
    n: usize,
    burn_in: usize,
    mut visit: F,
) -> Result<(), MapError>
where
    T: Scalar,
    F: FnMut(usize, T, T) -> Result<(), MapError>,
{
    check_start(x0, phi0, n)?;
    let (mut x, mut phi) = (x0, phi0);
    let total = burn_in + n;
    for it in 0..total {
        if !in_unit(x) {
            return Err(MapError::Divergence {
                iteration: it,
                value: x.to_f64().unwrap_or(f64::NAN),
            });
        }
        if it >= burn_in {
            visit(it - burn_in, x, phi)?;
        }
        if it + 1 < total {
            (x, phi) = step(x, phi, params);
        }
    }
    Ok(())
}

/// Discards `burn_in` steps, then records `n` states starting from the
/// first kept one.
pub fn iterate<T: Scalar>(
    params: &MapParams<T>,
    x0: T,
    phi0: T,
    n: usize,
    burn_in: usize,
) -> Result<Trajectory<T>, MapError> {
    let mut xs = Vec::with_capacity(n);
    let mut phis = Vec::with_capacity(n);
    walk(params, x0, phi0, n, burn_in, |_, x, phi| {
        xs.push(x);
        phis.push(phi);
        Ok(())
    })?;
    Ok(Trajectory {
        x: xs,
        phi: phis,
        params: *params,
        burn_in,
    })
}

/// Orbit average of ln|α[1 + ε cos(2πφ_i)](1 − 2x_i)| over the `n` kept states.
pub fn lyapunov<T: Scalar>(
    params: &MapParams<T>,
    x0: T,
    phi0: T,
    n: usize,
    burn_in: usize,
) -> Result<T, MapError> {
    let two = T::lit(2.0);
    let mut sum = T::zero();
    walk(params, x0, phi0, n, burn_in, |i, x, phi| {
        let derivative = (drive_factor(phi, params) * (T::one() - two * x)).abs();
        if derivative == T::zero() {
            return Err(MapError::SingularTerm { step: i });
        }
        sum += derivative.ln();
        Ok(())
    })?;
    Ok(sum / T::from_count(n))
}

/// Evenly spaced values `start..=end`; a single step yields `start` only.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridAxis<T> {
    pub start: T,
    pub end: T,
    pub steps: usize,
}

impl<T: Scalar> GridAxis<T> {
    pub fn new(start: T, end: T, steps: usize) -> Self {
        Self { start, end, steps }
    }

    pub fn single(value: T) -> Self {
        Self::new(value, value, 1)
    }

    pub fn values(&self) -> Vec<T> {
        if self.steps == 1 {
            return vec![self.start];
        }
        let last = T::from_count(self.steps - 1);
        (0..self.steps)
            .map(|k| {
                if k == self.steps - 1 {
                    self.end
                } else {
                    self.start + (self.end - self.start) * T::from_count(k) / last
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RegimeClass {
    Chaotic,
    Nonchaotic,
    Error,
}

impl RegimeClass {
    pub fn as_str(self) -> &'static str {
        match self {
            RegimeClass::Chaotic => "chaotic",
            RegimeClass::Nonchaotic => "nonchaotic",
            RegimeClass::Error => "error",
        }
    }

    /// Strictly positive exponents are chaotic.
    pub fn of_exponent<T: Scalar>(lambda: T) -> Self {
        if lambda > T::zero() {
            RegimeClass::Chaotic
        } else {
            RegimeClass::Nonchaotic
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseCell<T> {
    pub alpha: T,
    pub eps_prime: T,
    pub lambda: Result<T, MapError>,
}

impl<T: Scalar> PhaseCell<T> {
    pub fn class(&self) -> RegimeClass {
        match &self.lambda {
            Ok(l) => RegimeClass::of_exponent(*l),
            Err(_) => RegimeClass::Error,
        }
    }
}

/// Orbit settings shared by every cell of a scan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrbitSpec<T> {
    pub x0: T,
    pub phi0: T,
    pub n: usize,
    pub burn_in: usize,
}

/// Lyapunov exponent over an (α, ε′) grid, α-major. Cells are computed in
/// parallel; the returned order does not depend on scheduling.
pub fn phase_scan<T: Scalar>(
    alpha_axis: &GridAxis<T>,
    eps_prime_axis: &GridAxis<T>,
    orbit: OrbitSpec<T>,
) -> Result<Vec<PhaseCell<T>>, MapError> {
    if alpha_axis.steps == 0 || eps_prime_axis.steps == 0 {
        return Err(MapError::Domain("grid axes need at least one step".into()));
    }
    let alphas = alpha_axis.values();
    let primes = eps_prime_axis.values();
    let cells: Vec<(T, T)> = alphas
        .iter()
        .flat_map(|&a| primes.iter().map(move |&e| (a, e)))
        .collect();
    Ok(cells
        .into_par_iter()
        .map(|(alpha, eps_prime)| {
            let lambda = ScaledDrive::new(eps_prime)
                .and_then(|d| MapParams::from_drive(alpha, d))
                .and_then(|p| lyapunov(&p, orbit.x0, orbit.phi0, orbit.n, orbit.burn_in));
            PhaseCell {
                alpha,
                eps_prime,
                lambda,
            }
        })
        .collect())
}

/// CSV `alpha,eps_prime,lambda,class`; error cells leave `lambda` empty.
pub fn write_phase_csv<T: Scalar, W: Write>(cells: &[PhaseCell<T>], mut out: W) -> io::Result<()> {
    writeln!(out, "alpha,eps_prime,lambda,class")?;
    for c in cells {
        match &c.lambda {
            Ok(l) => writeln!(
                out,
                "{:.16e},{:.16e},{:.16e},{}",
                c.alpha,
                c.eps_prime,
                l,
                c.class().as_str()
            )?,
            Err(_) => writeln!(
                out,
                "{:.16e},{:.16e},,{}",
                c.alpha,
                c.eps_prime,
                c.class().as_str()
            )?,
        }
    }
    out.flush()
}
