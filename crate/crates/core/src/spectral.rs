//! Principal eigenvalue of the operator `-Δ + ε^{-2} F'(U_h)` linearized about a discrete state.
//!
//! `λ_h = -min_v ((∇v, ∇v) + ε^{-2}(F'(U_h) v, v)) / (v, v)` over the discrete space. The
//! bound proxy `Λ_h = λ_h + safety·|λ_h|` is a heuristic and not a certified bound.

use crate::fem::{
    assemble_linearized_mass, assemble_mass, assemble_stiffness, transfer, FeFunction,
};
use crate::linalg::{smallest_eig_pencil, EigOptions};
use crate::Error;

pub const DEFAULT_SAFETY: f64 = 0.05;

/// Weight used in place of `F'(U_h)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Linearization {
    #[default]
    Nonlinearity,
    /// Replaces `F'(U_h)` by a constant.
    Constant(f64),
}

#[derive(Debug, Clone)]
pub struct SpectralOptions {
    pub safety: f64,
    pub eig: EigOptions,
    pub linearization: Linearization,
}

impl Default for SpectralOptions {
    fn default() -> Self {
        Self {
            safety: DEFAULT_SAFETY,
            eig: EigOptions::default(),
            linearization: Linearization::Nonlinearity,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralSample {
    pub t: f64,
    pub lambda: f64,
    /// Inflated value reported in place of a certified bound.
    pub lambda_bound: f64,
    pub residual: f64,
}

/// `λ + safety·|λ|`, which is never below `λ`.
pub fn inflate(lambda: f64, safety: f64) -> f64 {
    lambda + safety * lambda.abs()
}

/// Computes `λ_h` for the state `u`. `warm` (any compatible discrete function) seeds
/// the eigensolver; the returned eigenvector is M-normalized on `u`'s space.
pub fn principal_eigenvalue(
    u: &FeFunction,
    t: f64,
    epsilon: f64,
    opts: &SpectralOptions,
    warm: Option<&FeFunction>,
) -> Result<(SpectralSample, FeFunction), Error> {
    let space = u.space();
    if space.n_dofs() == 0 {
        return Err(Error::InvalidParameter(
            "discrete space has no degrees of freedom".into(),
        ));
    }
    let a = assemble_stiffness(space);
    let m = assemble_mass(space);
    let weighted = match opts.linearization {
        Linearization::Nonlinearity => assemble_linearized_mass(u),
        Linearization::Constant(c) => m.scaled(c),
    };
    let s = a.lin_comb(1.0, &weighted, 1.0 / (epsilon * epsilon));
    let initial = match warm {
        Some(w) => Some(transfer(w, space)?.into_coeffs()),
        None => None,
    };
    let res = smallest_eig_pencil(&s, &m, &opts.eig, initial.as_deref())?;
    let lambda = -res.eigenvalue;
    let sample = SpectralSample {
        t,
        lambda,
        lambda_bound: inflate(lambda, opts.safety),
        residual: res.residual,
    };
    Ok((sample, FeFunction::new(space.clone(), res.eigenvector)?))
}

/// `Σ_n k_n · max(Λ(t_{n-1}), Λ(t_n))₊` for samples at `times[0..=N]`.
pub fn lambda_integral(times: &[f64], bounds: &[f64]) -> f64 {
    assert_eq!(times.len(), bounds.len(), "one sample per slab endpoint");
    times
        .windows(2)
        .zip(bounds.windows(2))
        .map(|(t, b)| (t[1] - t[0]) * b[0].max(b[1]).max(0.0))
        .sum()
}

/// Exponent `m` with `∫(Λ_h)₊ = ln(ε^{-m})`, i.e. the integral measured in units of
/// `ln(1/ε)`; zero when `ε ≥ 1`.
pub fn fitted_exponent(integral: f64, epsilon: f64) -> f64 {
    let log = (1.0 / epsilon).ln();
    if log > 0.0 {
        (integral / log).max(0.0)
    } else {
        0.0
    }
}

/// Samples at every slab endpoint together with their time integral.
#[derive(Debug, Clone, Default)]
pub struct SpectralSeries {
    pub samples: Vec<SpectralSample>,
}

impl SpectralSeries {
    pub fn push(&mut self, s: SpectralSample) {
        self.samples.push(s);
    }

    pub fn integral(&self) -> f64 {
        let times: Vec<f64> = self.samples.iter().map(|s| s.t).collect();
        let bounds: Vec<f64> = self.samples.iter().map(|s| s.lambda_bound).collect();
        lambda_integral(&times, &bounds)
    }

    pub fn fitted_exponent(&self, epsilon: f64) -> f64 {
        fitted_exponent(self.integral(), epsilon)
    }
}
