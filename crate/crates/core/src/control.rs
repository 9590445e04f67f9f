//! Control functions `φ(a, b, c, d)` and the dyadic control series
//! `φ̃(a, b, c, d) = ½ Σₙ 2⁻ⁿ φ(2ⁿa, 2ⁿb, 2ⁿc, 2ⁿd)`.
//!
//! Every supported family scales like `φ(2x) = Σ w·2^{p}` per atom, so the
//! series has a closed form. [`ControlFunction::phi_tilde_series`] sums it
//! term by term with a certified geometric tail instead, and is kept as an
//! independent route.

use serde::{Deserialize, Serialize};

use crate::algebra::{Algebra, Element};
use crate::error::{Error, Result};
use crate::maps::pow_convention;

/// Relative stopping threshold for the truncated series.
pub const SERIES_TOLERANCE: f64 = 1e-12;
/// Hard cap on the number of series terms.
pub const SERIES_MAX_TERMS: usize = 1_000_000;
/// Default extrapolation depth for bounded controls.
pub const DEFAULT_DEPTH_CONSTANT: u32 = 48;
/// Target for `2^{N(q−1)}` when choosing a depth for power controls.
pub const DEPTH_TARGET: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerTerm {
    pub beta: f64,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ControlFunction {
    /// `φ ≡ ε`.
    Constant { epsilon: f64 },
    /// `φ = β(‖a‖ᵖ + ‖b‖ᵖ + ‖c‖ᵖ + ‖d‖ᵖ)`.
    Power { beta: f64, p: f64 },
    /// `φ = Σᵢ βᵢ‖xᵢ‖^{pᵢ}`, one term per slot `(a, b, c, d)`.
    #[serde(rename = "separable")]
    SeparablePowerSum { slots: Vec<PowerTerm> },
}

/// One geometric component: contributes `weight · 2^{k·p}` to `φ(2ᵏ·)`.
#[derive(Debug, Clone, Copy)]
struct Atom {
    weight: f64,
    p: f64,
}

impl Atom {
    fn ratio(&self) -> f64 {
        (self.p - 1.0).exp2()
    }

    /// `½ Σ_{k≥0} 2^{-k} weight 2^{kp}`.
    fn closed(&self) -> f64 {
        self.weight / (2.0 * (1.0 - self.ratio()))
    }
}

/// How a `φ̃` value was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesCertificate {
    /// `None` for closed forms; otherwise the last summed index.
    pub truncation_index: Option<usize>,
    /// Upper bound on the omitted tail.
    pub tail_bound: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhiTilde {
    pub value: f64,
    pub certificate: SeriesCertificate,
}

fn check_exponent(p: f64) -> Result<()> {
    if !p.is_finite() || p >= 1.0 {
        return Err(Error::DivergentControl(format!(
            "exponent p = {p}: the control series ½ Σ 2^-n φ(2^n ·) converges only for p < 1"
        )));
    }
    Ok(())
}

fn check_coefficient(name: &str, x: f64) -> Result<()> {
    if !x.is_finite() || x < 0.0 {
        return Err(Error::InvalidDescriptor(format!("{name} must be finite and >= 0, got {x}")));
    }
    Ok(())
}

impl ControlFunction {
    pub fn constant(epsilon: f64) -> Result<Self> {
        let cf = Self::Constant { epsilon };
        cf.validate()?;
        Ok(cf)
    }

    pub fn power(beta: f64, p: f64) -> Result<Self> {
        let cf = Self::Power { beta, p };
        cf.validate()?;
        Ok(cf)
    }

    pub fn separable(slots: [PowerTerm; 4]) -> Result<Self> {
        let cf = Self::SeparablePowerSum { slots: slots.to_vec() };
        cf.validate()?;
        Ok(cf)
    }

    /// Rejects negative coefficients and any exponent `p ≥ 1`.
    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Constant { epsilon } => check_coefficient("epsilon", *epsilon),
            Self::Power { beta, p } => {
                check_coefficient("beta", *beta)?;
                check_exponent(*p)
            }
            Self::SeparablePowerSum { slots } => {
                if slots.len() != 4 {
                    return Err(Error::InvalidDescriptor(format!(
                        "separable control needs 4 slots, got {}",
                        slots.len()
                    )));
                }
                for t in slots {
                    check_coefficient("beta", t.beta)?;
                    check_exponent(t.p)?;
                }
                Ok(())
            }
        }
    }

    /// Exponent `q < 1` with `φ(2x) ≤ 2^q φ(x)`.
    pub fn growth_exponent(&self) -> f64 {
        match self {
            Self::Constant { .. } => 0.0,
            Self::Power { p, .. } => *p,
            Self::SeparablePowerSum { slots } => slots.iter().map(|t| t.p).fold(f64::NEG_INFINITY, f64::max),
        }
    }

    /// Extrapolation depth: 48 for bounded controls, otherwise the smallest
    /// `N` with `2^{N(q−1)} < 1e−12`, capped at 512.
    pub fn default_depth(&self) -> u32 {
        match self {
            Self::Constant { .. } => DEFAULT_DEPTH_CONSTANT,
            _ => {
                let q = self.growth_exponent();
                let n = (DEPTH_TARGET.log2() / (q - 1.0)).floor() as u32 + 1;
                n.clamp(1, crate::maps::MAX_LOG2_SCALE)
            }
        }
    }

    fn atoms(&self, norms: [f64; 4]) -> Vec<Atom> {
        match self {
            Self::Constant { epsilon } => vec![Atom { weight: *epsilon, p: 0.0 }],
            Self::Power { beta, p } => {
                let sum: f64 = norms.iter().map(|x| pow_convention(*x, *p)).sum();
                vec![Atom { weight: beta * sum, p: *p }]
            }
            Self::SeparablePowerSum { slots } => slots
                .iter()
                .zip(norms)
                .map(|(t, x)| Atom { weight: t.beta * pow_convention(x, t.p), p: t.p })
                .collect(),
        }
    }

    /// `φ` given the four argument norms.
    pub fn phi_from_norms(&self, norms: [f64; 4]) -> f64 {
        self.atoms(norms).iter().map(|a| a.weight).sum()
    }

    /// `2^{-k} φ(2ᵏa, 2ᵏb, 2ᵏc, 2ᵏd)` from the unscaled norms, evaluated in
    /// log space so large `k` never overflows.
    pub fn phi_dyadic_from_norms(&self, norms: [f64; 4], k: u32) -> f64 {
        self.atoms(norms)
            .iter()
            .map(|a| a.weight * (k as f64 * (a.p - 1.0)).exp2())
            .sum()
    }

    pub fn phi(&self, alg: &Algebra, a: &Element, b: &Element, c: &Element, d: &Element) -> Result<f64> {
        Ok(self.phi_from_norms(norms(alg, [a, b, c, d])?))
    }

    /// Closed-form `φ̃`.
    pub fn phi_tilde_from_norms(&self, norms: [f64; 4]) -> PhiTilde {
        let value = self.atoms(norms).iter().map(Atom::closed).sum();
        PhiTilde {
            value,
            certificate: SeriesCertificate { truncation_index: None, tail_bound: 0.0 },
        }
    }

    pub fn phi_tilde(&self, alg: &Algebra, a: &Element, b: &Element, c: &Element, d: &Element) -> Result<PhiTilde> {
        Ok(self.phi_tilde_from_norms(norms(alg, [a, b, c, d])?))
    }

    /// `φ̃` by direct summation. Stops once the geometric tail majorant
    /// `½·2^{-(n+1)}φ(2^{n+1}·)/(1 − 2^{q−1})` falls under
    /// `1e−12 · (partial + 1e−300)`.
    pub fn phi_tilde_series_from_norms(&self, norms: [f64; 4]) -> Result<PhiTilde> {
        let atoms = self.atoms(norms);
        let q_ratio = (self.growth_exponent() - 1.0).exp2();
        let term = |k: usize| -> f64 {
            0.5 * atoms.iter().map(|a| a.weight * (k as f64 * (a.p - 1.0)).exp2()).sum::<f64>()
        };
        let mut partial = 0.0;
        for n in 0..SERIES_MAX_TERMS {
            partial += term(n);
            let majorant = term(n + 1) / (1.0 - q_ratio);
            if majorant < SERIES_TOLERANCE * (partial + 1e-300) {
                return Ok(PhiTilde {
                    value: partial,
                    certificate: SeriesCertificate { truncation_index: Some(n), tail_bound: majorant },
                });
            }
        }
        Err(Error::NonConvergence { what: "control series", iterations: SERIES_MAX_TERMS })
    }

    pub fn phi_tilde_series(&self, alg: &Algebra, a: &Element, b: &Element, c: &Element, d: &Element) -> Result<PhiTilde> {
        self.phi_tilde_series_from_norms(norms(alg, [a, b, c, d])?)
    }

    /// `φ̃(a, a, 0, 0)` from `‖a‖`.
    pub fn hyers_bound_from_norm(&self, a_norm: f64) -> f64 {
        self.phi_tilde_from_norms([a_norm, a_norm, 0.0, 0.0]).value
    }

    /// The stability bound `φ̃(a, a, 0, 0)`.
    pub fn hyers_bound(&self, alg: &Algebra, a: &Element) -> Result<f64> {
        Ok(self.hyers_bound_from_norm(alg.norm(a)?))
    }

    /// `½ Σ_{k<n} 2^{-k} φ(2ᵏa, 2ᵏa, 0, 0)` from `‖a‖`, summed per atom in
    /// geometric closed form so that it is nondecreasing in `n` and never
    /// exceeds [`Self::hyers_bound_from_norm`].
    pub fn partial_sum_from_norm(&self, a_norm: f64, n: u32) -> f64 {
        self.atoms([a_norm, a_norm, 0.0, 0.0])
            .iter()
            .map(|a| a.closed() * (1.0 - (n as f64 * (a.p - 1.0)).exp2()))
            .sum()
    }

    pub fn partial_sum_bound(&self, alg: &Algebra, a: &Element, n: u32) -> Result<f64> {
        if n == 0 {
            return Err(Error::OutOfRange("partial sum needs n >= 1".into()));
        }
        Ok(self.partial_sum_from_norm(alg.norm(a)?, n))
    }

    /// Tail `½ Σ_{k≥n} 2^{-k} φ(2ᵏx)` for arbitrary slot norms. With slots
    /// `(a, a, 0, 0)` this bounds `‖f(2ⁿa)/2ⁿ − μ(a)‖`.
    pub fn tail_from_norms(&self, norms: [f64; 4], n: u32) -> f64 {
        self.atoms(norms)
            .iter()
            .map(|a| a.closed() * (n as f64 * (a.p - 1.0)).exp2())
            .sum()
    }
}

fn norms(alg: &Algebra, xs: [&Element; 4]) -> Result<[f64; 4]> {
    Ok([alg.norm(xs[0])?, alg.norm(xs[1])?, alg.norm(xs[2])?, alg.norm(xs[3])?])
}
