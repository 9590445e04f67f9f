//! Residual checks of the identities and inequalities on sampled data.
//!
//! Samples are evaluated in parallel. Each sample is addressed by its index,
//! and the max-reduction runs sequentially over the ordered results, so
//! reports (including the argmax witness) do not depend on scheduling.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::algebra::{Algebra, Bimodule, Element, Scalar};
use crate::control::ControlFunction;
use crate::error::{Error, Result};
use crate::linalg::{CMat, HermitianEigen};
use crate::maps::{ApproximateMapPair, LinearMap};
use crate::rng;

pub const CHECK_MASTER_INEQUALITY: &str = "master_inequality";
pub const CHECK_STABILITY_BOUND: &str = "stability_bound";
pub const CHECK_GENERALIZED_DERIVATION: &str = "generalized_derivation";
pub const CHECK_LEIBNIZ: &str = "leibniz";
pub const CHECK_STAR_PRESERVATION: &str = "star_preservation";
pub const CHECK_SUPERSTABILITY: &str = "superstability";

/// Every check the runner knows, in canonical order.
pub const CHECKS: [&str; 6] = [
    CHECK_MASTER_INEQUALITY,
    CHECK_STABILITY_BOUND,
    CHECK_GENERALIZED_DERIVATION,
    CHECK_LEIBNIZ,
    CHECK_STAR_PRESERVATION,
    CHECK_SUPERSTABILITY,
];

pub const MASTER_SLACK: f64 = 1e-12;
pub const IDENTITY_THRESHOLD: f64 = 1e-10;
pub const STAR_THRESHOLD: f64 = 1e-9;
pub const HYPOTHESIS_SLACK: f64 = 1e-12;
pub const UNITARY_TOLERANCE: f64 = 1e-10;
pub const CLAMP_TOLERANCE: f64 = 1e-12;
pub const GROWTH_SLOPE_THRESHOLD: f64 = 0.9;

/// Outcome of one check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub check: String,
    pub samples: usize,
    pub max_residual: f64,
    pub witness: Value,
    pub threshold: f64,
    pub passed: bool,
}

impl ResidualReport {
    /// Max-reduction over residuals in index order; the first maximal index
    /// wins. NaN counts as a failure.
    pub fn reduce(check: &str, threshold: f64, residuals: &[f64], witness: impl Fn(usize) -> Value) -> Self {
        let mut best: Option<(usize, f64)> = None;
        for (i, &r) in residuals.iter().enumerate() {
            let r = if r.is_nan() { f64::MAX } else { r };
            if best.map_or(true, |(_, b)| r > b) {
                best = Some((i, r));
            }
        }
        match best {
            Some((i, r)) => Self {
                check: check.to_string(),
                samples: residuals.len(),
                max_residual: r,
                witness: witness(i),
                threshold,
                passed: r <= threshold,
            },
            None => Self {
                check: check.to_string(),
                samples: 0,
                max_residual: 0.0,
                witness: Value::Null,
                threshold,
                passed: true,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SampleSlots {
    /// `c = d = 0`: only the additive part of the inequality.
    Additive,
    #[default]
    All,
}

/// How sample arguments are drawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerConfig {
    pub samples: usize,
    pub seed: u64,
    /// Inclusive range of `log2` norms; each argument is rescaled to
    /// `2ᵏ` with `k` drawn uniformly. `None` keeps the raw Gaussian draw.
    #[serde(default)]
    pub norm_ladder: Option<(i32, i32)>,
    #[serde(default)]
    pub slots: SampleSlots,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self { samples: 200, seed: 0, norm_ladder: Some((-4, 8)), slots: SampleSlots::All }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some((lo, hi)) = self.norm_ladder {
            if lo > hi || lo < -64 || hi > 64 {
                return Err(Error::InvalidDescriptor(format!("norm ladder [{lo}, {hi}] must be ordered and within [-64, 64]")));
            }
        }
        Ok(())
    }

    /// Sample `index`: `(a, b, c, d)`.
    pub fn sample(&self, alg: &Algebra, index: usize) -> Result<[Element; 4]> {
        let mut r = rng::stream(self.seed, index as u64);
        let draw = |r: &mut rand_chacha::ChaCha8Rng| -> Result<Element> {
            let x = alg.wrap(rng::complex_gaussian_vec(r, alg.dim()));
            match self.norm_ladder {
                None => Ok(x),
                Some((lo, hi)) => {
                    let k = r.gen_range(lo..=hi);
                    let norm = alg.norm(&x)?;
                    if norm == 0.0 {
                        return Ok(x);
                    }
                    alg.scale(Complex64::new((k as f64).exp2() / norm, 0.0), &x)
                }
            }
        };
        let a = draw(&mut r)?;
        let b = draw(&mut r)?;
        let (c, d) = match self.slots {
            SampleSlots::Additive => (alg.zero(), alg.zero()),
            SampleSlots::All => (draw(&mut r)?, draw(&mut r)?),
        };
        Ok([a, b, c, d])
    }
}

/// The λ values tried per sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LambdaSet {
    /// `k` equally spaced points of the unit circle, starting at 1.
    FullT { k: usize },
    OneAndI,
}

impl Default for LambdaSet {
    fn default() -> Self {
        LambdaSet::FullT { k: 8 }
    }
}

impl LambdaSet {
    pub fn points(&self) -> Vec<Scalar> {
        match *self {
            LambdaSet::FullT { k } => (0..k.max(1))
                .map(|j| {
                    if j == 0 {
                        Complex64::new(1.0, 0.0)
                    } else {
                        Complex64::from_polar(1.0, 2.0 * PI * j as f64 / k as f64)
                    }
                })
                .collect(),
            LambdaSet::OneAndI => vec![Complex64::new(1.0, 0.0), Complex64::new(0.0, 1.0)],
        }
    }
}

fn pairs(x: &[Complex64]) -> Value {
    json!(crate::algebra::to_pairs(x))
}

fn scalar_json(z: Scalar) -> Value {
    json!([z.re, z.im])
}

fn collect_residuals<T: Send>(n: usize, f: impl Fn(usize) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
    (0..n).into_par_iter().map(f).collect()
}

struct MasterTerms {
    lhs: f64,
    scale: f64,
}

fn master_terms(pair: &ApproximateMapPair, lambda: Scalar, [a, b, c, d]: &[Element; 4]) -> Result<MasterTerms> {
    let bm = pair.bimodule();
    let alg = bm.algebra();
    let cd = alg.mul(c, d)?;
    let arg = alg.add(&alg.add(&alg.scale(lambda, a)?, &alg.scale(lambda, b)?)?, &cd)?;
    let f_arg = pair.f(&arg)?;
    let fa = bm.scale(lambda, &pair.f(a)?)?;
    let fb = bm.scale(lambda, &pair.f(b)?)?;
    let cfd = bm.act_left(c, &pair.f(d)?)?;
    let gcd = bm.act_right(&pair.g(c)?, d)?;
    let lhs_vec = bm.sub(&bm.sub(&bm.sub(&bm.sub(&f_arg, &fa)?, &fb)?, &cfd)?, &gcd)?;
    let scale = [&f_arg, &fa, &fb, &cfd, &gcd]
        .iter()
        .map(|x| bm.norm(x))
        .sum::<Result<f64>>()?;
    Ok(MasterTerms { lhs: bm.norm(&lhs_vec)?, scale })
}

/// `max (LHS − φ) / max(1, Σ‖terms‖)` over samples and λ.
///
/// The normalization turns the `1e−12` slack into a relative one, so
/// roundoff in large-norm samples does not register as a violation.
pub fn residual_master_inequality(
    pair: &ApproximateMapPair,
    cf: &ControlFunction,
    sampler: &SamplerConfig,
    lambda_set: LambdaSet,
) -> Result<ResidualReport> {
    sampler.validate()?;
    let alg = pair.bimodule().algebra().clone();
    let lambdas = lambda_set.points();
    let per_sample = collect_residuals(sampler.samples, |i| {
        let args = sampler.sample(&alg, i)?;
        let phi = cf.phi(&alg, &args[0], &args[1], &args[2], &args[3])?;
        let mut best = (f64::NEG_INFINITY, 0usize, 0.0, 0.0);
        for (li, &lambda) in lambdas.iter().enumerate() {
            let t = master_terms(pair, lambda, &args)?;
            let r = (t.lhs - phi) / t.scale.max(1.0);
            if r > best.0 {
                best = (r, li, t.lhs, phi);
            }
        }
        Ok(best)
    })?;
    let residuals: Vec<f64> = per_sample.iter().map(|s| s.0).collect();
    Ok(ResidualReport::reduce(CHECK_MASTER_INEQUALITY, MASTER_SLACK, &residuals, |i| {
        let args = sampler.sample(&alg, i).expect("sample was drawn before");
        let (_, li, lhs, phi) = per_sample[i];
        json!({
            "index": i,
            "lambda": scalar_json(lambdas[li]),
            "a": pairs(args[0].coords()),
            "b": pairs(args[1].coords()),
            "c": pairs(args[2].coords()),
            "d": pairs(args[3].coords()),
            "lhs": lhs,
            "phi": phi,
        })
    }))
}

/// `max ‖f(a) − μ(a)‖ − φ̃(a,a,0,0) − certificate(a)` over sampled `a`.
///
/// `certificate` bounds the distance from the assembled `μ` to the limit;
/// pass `|_| 0.0` for an exact map. `slack` is the pass threshold.
pub fn certify_stability_bound(
    pair: &ApproximateMapPair,
    cf: &ControlFunction,
    mu: &LinearMap,
    certificate: impl Fn(&Element) -> f64 + Sync,
    sampler: &SamplerConfig,
    slack: f64,
) -> Result<ResidualReport> {
    sampler.validate()?;
    let bm = pair.bimodule();
    if mu.target().id() != bm.id() {
        return Err(Error::HandleMismatch("μ does not target the pair's bimodule".into()));
    }
    let alg = bm.algebra().clone();
    let rows = collect_residuals(sampler.samples, |i| {
        let a = sampler.sample(&alg, i)?[0].clone();
        let dev = bm.norm(&bm.sub(&pair.f(&a)?, &mu.apply(&a)?)?)?;
        let bound = cf.hyers_bound(&alg, &a)?;
        Ok((dev - bound - certificate(&a), dev, bound))
    })?;
    let residuals: Vec<f64> = rows.iter().map(|r| r.0).collect();
    Ok(ResidualReport::reduce(CHECK_STABILITY_BOUND, slack, &residuals, |i| {
        let a = sampler.sample(&alg, i).expect("sample was drawn before")[0].clone();
        json!({ "index": i, "a": pairs(a.coords()), "deviation": rows[i].1, "bound": rows[i].2 })
    }))
}

fn basis_pair_report(
    check: &str,
    alg: &Algebra,
    threshold: f64,
    residual: impl Fn(usize, usize) -> Result<f64> + Sync,
) -> Result<ResidualReport> {
    let d = alg.dim();
    let residuals = collect_residuals(d * d, |t| residual(t / d, t % d))?;
    Ok(ResidualReport::reduce(check, threshold, &residuals, |t| json!({ "i": t / d, "j": t % d })))
}

/// `max_{i,j} ‖μ(eᵢeⱼ) − eᵢμ(eⱼ) − δ(eᵢ)eⱼ‖`; threshold `1e−10 + slack`.
pub fn check_generalized_derivation(mu: &LinearMap, delta: &LinearMap, slack: f64) -> Result<ResidualReport> {
    let bm = mu.target().clone();
    if delta.target().id() != bm.id() {
        return Err(Error::HandleMismatch("μ and δ target different bimodules".into()));
    }
    let alg = bm.algebra().clone();
    basis_pair_report(CHECK_GENERALIZED_DERIVATION, &alg, IDENTITY_THRESHOLD + slack, |i, j| {
        let (ei, ej) = (alg.basis(i), alg.basis(j));
        let lhs = mu.apply(&alg.mul(&ei, &ej)?)?;
        let r = bm.sub(&bm.sub(&lhs, &bm.act_left(&ei, &mu.apply(&ej)?)?)?, &bm.act_right(&delta.apply(&ei)?, &ej)?)?;
        bm.norm(&r)
    })
}

/// `max_{i,j} ‖δ(eᵢeⱼ) − eᵢδ(eⱼ) − δ(eᵢ)eⱼ‖`; threshold `1e−10 + slack`.
pub fn check_leibniz(delta: &LinearMap, slack: f64) -> Result<ResidualReport> {
    let mut report = check_generalized_derivation(delta, delta, slack)?;
    report.check = CHECK_LEIBNIZ.to_string();
    Ok(report)
}

/// Certificate slack for the basis-pair identities when `μ` and `δ` carry
/// column gaps: `max_{i,j} Σ_k |(eᵢeⱼ)_k|·μgap_k + ‖eᵢ‖·μgap_j + δgap_i·‖eⱼ‖`.
pub fn basis_pair_slack(alg: &Algebra, mu_gaps: &[f64], delta_gaps: &[f64]) -> Result<f64> {
    let d = alg.dim();
    let norms = (0..d).map(|i| alg.norm(&alg.basis(i))).collect::<Result<Vec<_>>>()?;
    let mut worst: f64 = 0.0;
    for i in 0..d {
        for j in 0..d {
            let prod = alg.mul(&alg.basis(i), &alg.basis(j))?;
            let image: f64 = prod.coords().iter().zip(mu_gaps).map(|(z, g)| z.norm() * g).sum();
            worst = worst.max(image + norms[i] * mu_gaps[j] + delta_gaps[i] * norms[j]);
        }
    }
    Ok(worst)
}

/// Sampling policy for the star check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StarConfig {
    pub unitaries: usize,
    pub seed: u64,
    pub depth: u32,
}

impl Default for StarConfig {
    fn default() -> Self {
        Self { unitaries: 200, seed: 0, depth: 48 }
    }
}

/// The hypothesis on sampled unitaries and scales, and the conclusion on the
/// basis, reported separately: the implication only runs one way.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StarReport {
    pub hypothesis: ResidualReport,
    pub conclusion: ResidualReport,
}

/// Seeded unitary `exp(iH)` with `H` a Gaussian Hermitian matrix.
pub fn random_unitary(alg: &Algebra, seed: u64, index: u64) -> Result<Element> {
    let n = alg.matrix_order().ok_or(Error::Unsupported("unitaries need a matrix algebra"))?;
    let g = alg.to_matrix(&alg.random_element(seed, index))?;
    let ga = g.adjoint();
    let h = CMat::from_vec(n, n, g.as_slice().iter().zip(ga.as_slice()).map(|(x, y)| (x + y) * 0.5).collect());
    let u = HermitianEigen::new(&h)?.apply(|t| Complex64::from_polar(1.0, t));
    alg.from_matrix(&u)
}

fn require_cstar(bm: &Bimodule) -> Result<()> {
    if !bm.algebra().is_cstar() || !bm.has_involution() {
        return Err(Error::Unsupported("star checks need a C*-algebra and an involutive bimodule"));
    }
    Ok(())
}

/// Hypothesis: `‖f(2ⁿu*) − f(2ⁿu)*‖ ≤ φ(2ⁿu, 2ⁿu, 0, 0)` for sampled unitaries
/// and `n ≤ depth`, checked after dividing by `2ⁿ`. Conclusion:
/// `max_j ‖μ(eⱼ*) − μ(eⱼ)*‖ ≤ 1e−9 + conclusion_slack`.
pub fn check_star_preservation(
    pair: &ApproximateMapPair,
    cf: &ControlFunction,
    mu: &LinearMap,
    conclusion_slack: f64,
    config: &StarConfig,
) -> Result<StarReport> {
    let bm = pair.bimodule().clone();
    require_cstar(&bm)?;
    let alg = bm.algebra().clone();
    let depth = config.depth.min(crate::maps::MAX_LOG2_SCALE);
    let per_unitary = collect_residuals(config.unitaries, |i| {
        let u = random_unitary(&alg, config.seed, i as u64)?;
        let u_star = alg.adjoint(&u)?;
        let u_norm = alg.norm(&u)?;
        let mut best = (f64::NEG_INFINITY, 0u32);
        for n in 0..=depth {
            let lhs_vec = bm.sub(&pair.evaluate_f(&u_star, n)?.mantissa, &bm.adjoint(&pair.evaluate_f(&u, n)?.mantissa)?)?;
            let r = bm.norm(&lhs_vec)? - cf.phi_dyadic_from_norms([u_norm, u_norm, 0.0, 0.0], n);
            if r > best.0 {
                best = (r, n);
            }
        }
        Ok(best)
    })?;
    let residuals: Vec<f64> = per_unitary.iter().map(|x| x.0).collect();
    let hypothesis = ResidualReport::reduce(CHECK_STAR_PRESERVATION, HYPOTHESIS_SLACK, &residuals, |i| {
        let u = random_unitary(&alg, config.seed, i as u64).expect("unitary was drawn before");
        json!({ "index": i, "n": per_unitary[i].1, "u": pairs(u.coords()) })
    });

    let d = alg.dim();
    let conclusion_residuals = collect_residuals(d, |j| {
        let e = alg.basis(j);
        let lhs = mu.apply(&alg.adjoint(&e)?)?;
        bm.norm(&bm.sub(&lhs, &bm.adjoint(&mu.apply(&e)?)?)?)
    })?;
    let conclusion = ResidualReport::reduce(
        CHECK_STAR_PRESERVATION,
        STAR_THRESHOLD + conclusion_slack,
        &conclusion_residuals,
        |j| json!({ "j": j }),
    );
    Ok(StarReport { hypothesis, conclusion })
}

/// `a = Σ coeffᵢ·uᵢ` with unitary `uᵢ`.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitaryDecomposition {
    pub element: Element,
    pub terms: Vec<(Scalar, Element)>,
}

impl UnitaryDecomposition {
    pub fn reconstruct(&self, alg: &Algebra) -> Result<Element> {
        self.terms
            .iter()
            .try_fold(alg.zero(), |acc, (k, u)| alg.add(&acc, &alg.scale(*k, u)?))
    }

    /// `‖Σ coeff·u − a‖`.
    pub fn reconstruction_error(&self, alg: &Algebra) -> Result<f64> {
        alg.spectral_norm(&alg.sub(&self.reconstruct(alg)?, &self.element)?)
    }

    /// `max ‖u*u − 1‖`.
    pub fn unitarity_defect(&self, alg: &Algebra) -> Result<f64> {
        let one = alg.one();
        self.terms.iter().try_fold(0.0f64, |m, (_, u)| {
            let uu = alg.mul(&alg.adjoint(u)?, u)?;
            Ok(m.max(alg.spectral_norm(&alg.sub(&uu, &one)?)?))
        })
    }
}

/// Splits `a` into self-adjoint parts `h`, scales each to a contraction
/// `b = h/‖h‖` and writes `b = (u + u*)/2` with `u = b + i√(1 − b²)`.
///
/// `u` is formed by applying `t ↦ t + i√(1 − t²)` to the eigendecomposition
/// of `b`; eigenvalues of `1 − b²` below zero but within `1e−12` are clamped.
/// Zero parts contribute no terms, so `a = 0` gives an empty list.
pub fn unitary_decompose(alg: &Algebra, a: &Element) -> Result<UnitaryDecomposition> {
    if !alg.is_cstar() {
        return Err(Error::Unsupported("unitary decomposition needs a C*-algebra"));
    }
    let m = alg.to_matrix(a)?;
    let ma = m.adjoint();
    let n = m.rows();
    let i = Complex64::new(0.0, 1.0);
    let re: Vec<Complex64> = m.as_slice().iter().zip(ma.as_slice()).map(|(x, y)| (x + y) * 0.5).collect();
    let im: Vec<Complex64> = m.as_slice().iter().zip(ma.as_slice()).map(|(x, y)| (x - y) / (2.0 * i)).collect();
    let mut terms = Vec::with_capacity(4);
    for (part, factor) in [(re, Complex64::new(1.0, 0.0)), (im, i)] {
        let h = CMat::from_vec(n, n, part);
        if h.as_slice().iter().all(|z| *z == Complex64::new(0.0, 0.0)) {
            continue;
        }
        let eig = HermitianEigen::new(&h)?;
        let s = eig.spectral_radius();
        if s == 0.0 {
            continue;
        }
        let worst = eig.eigenvalues().iter().map(|t| (1.0 - t / s) * (1.0 + t / s)).fold(f64::INFINITY, f64::min);
        if worst < -CLAMP_TOLERANCE {
            return Err(Error::OutOfRange(format!("1 - b^2 has eigenvalue {worst} below the clamp tolerance")));
        }
        let u = eig.apply(|t| {
            let b = (t / s).clamp(-1.0, 1.0);
            Complex64::new(b, ((1.0 - b) * (1.0 + b)).max(0.0).sqrt())
        });
        let u = alg.from_matrix(&u)?;
        let u_star = alg.adjoint(&u)?;
        let k = factor * (s / 2.0);
        terms.push((k, u));
        terms.push((k, u_star));
    }
    Ok(UnitaryDecomposition { element: a.clone(), terms })
}

/// Parameters of the superstability probe.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuperstabilityConfig {
    pub m_max: u32,
    pub n_max: u32,
    pub samples: usize,
    pub seed: u64,
    /// Ladder `R = 2⁰ .. 2^{ladder_log2_max}`.
    pub ladder_log2_max: u32,
}

impl Default for SuperstabilityConfig {
    fn default() -> Self {
        Self { m_max: 16, n_max: 48, samples: 64, seed: 0, ladder_log2_max: 8 }
    }
}

/// Max master-inequality LHS at each ladder step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthProfile {
    /// Which argument is swept: `"c"` for noise in `f`, `"d"` for noise in `g`.
    pub swept: String,
    pub ladder: Vec<f64>,
    pub lhs: Vec<f64>,
    /// Least-squares slope of `log lhs` against `log R`, over positive entries.
    pub slope: Option<f64>,
    pub threshold: f64,
    pub linear_growth: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuperstabilityReport {
    /// `‖f(2ᵐa) − 2ᵐf(a)‖ − (2 + 2^{m+1})ε/2ⁿ` at the tightest `n`.
    pub homogeneity: ResidualReport,
    pub growth: GrowthProfile,
    /// Homogeneity holds, or growth certifies that the bounded-control
    /// hypothesis fails globally.
    pub passed: bool,
}

/// Least-squares slope of `log y` on `log x` over points with `y > 0`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = x.iter().zip(y).filter(|(_, y)| **y > 0.0).map(|(x, y)| (x.ln(), y.ln())).collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Homogeneity chain and growth ladder for a `Constant(ε)` control.
pub fn superstability_probe(pair: &ApproximateMapPair, epsilon: f64, config: &SuperstabilityConfig) -> Result<SuperstabilityReport> {
    if !epsilon.is_finite() || epsilon < 0.0 {
        return Err(Error::InvalidDescriptor(format!("epsilon must be finite and >= 0, got {epsilon}")));
    }
    let bm = pair.bimodule().clone();
    let alg = bm.algebra().clone();
    let m_max = config.m_max.min(crate::maps::MAX_LOG2_SCALE);
    let n_max = config.n_max;

    let rows = collect_residuals(config.samples, |i| {
        let a = alg.random_element(config.seed, i as u64);
        let s0 = pair.evaluate_f(&a, 0)?.mantissa;
        let mut best = (f64::NEG_INFINITY, 0u32, 0.0);
        for m in 0..=m_max {
            let sm = pair.evaluate_f(&a, m)?.mantissa;
            // f(2ᵐa) − 2ᵐf(a) = 2ᵐ(s_m − s_0)
            let lhs = (m as f64).exp2() * bm.norm(&bm.sub(&sm, &s0)?)?;
            let bound = (2.0 + ((m + 1) as f64).exp2()) * epsilon * (-(n_max as f64)).exp2();
            let r = lhs - bound;
            if r > best.0 {
                best = (r, m, lhs);
            }
        }
        Ok(best)
    })?;
    let residuals: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let homogeneity = ResidualReport::reduce(CHECK_SUPERSTABILITY, MASTER_SLACK, &residuals, |i| {
        let a = alg.random_element(config.seed, i as u64);
        json!({ "index": i, "m": rows[i].1, "n": n_max, "a": pairs(a.coords()), "lhs": rows[i].2 })
    });

    let growth = growth_profile(pair, config)?;
    let passed = homogeneity.passed || growth.linear_growth;
    Ok(SuperstabilityReport { homogeneity, growth, passed })
}

fn growth_profile(pair: &ApproximateMapPair, config: &SuperstabilityConfig) -> Result<GrowthProfile> {
    let bm = pair.bimodule().clone();
    let alg = bm.algebra().clone();
    let one = alg.one();
    let zero = alg.zero();
    let f_noisy = !matches!(pair.f_perturbation.base_kind(), crate::maps::NoiseKind::Zero);
    let ladder: Vec<f64> = (0..=config.ladder_log2_max.min(64)).map(|k| (k as f64).exp2()).collect();
    let lhs = ladder
        .par_iter()
        .map(|&r| {
            let minus_r = alg.scale(Complex64::new(-r, 0.0), &one)?;
            let mut worst: f64 = 0.0;
            for i in 0..config.samples.max(1) {
                let x0 = alg.random_element(config.seed ^ 0x5EED, i as u64);
                // noise in f: sweep ‖c‖ with c = −R·1, d = d₀;
                // noise in g: sweep ‖d‖ with c = c₀, d = −R·1
                let (c, d) = if f_noisy { (minus_r.clone(), x0) } else { (x0, minus_r.clone()) };
                let t = master_terms(pair, Complex64::new(1.0, 0.0), &[zero.clone(), zero.clone(), c, d])?;
                // below the relative roundoff floor the LHS counts as zero,
                // so linear roundoff growth is not mistaken for a violation
                if t.lhs > MASTER_SLACK * t.scale.max(1.0) {
                    worst = worst.max(t.lhs);
                }
            }
            Ok(worst)
        })
        .collect::<Result<Vec<f64>>>()?;
    let slope = log_log_slope(&ladder, &lhs);
    Ok(GrowthProfile {
        swept: if f_noisy { "c" } else { "d" }.to_string(),
        linear_growth: slope.map_or(false, |s| s >= GROWTH_SLOPE_THRESHOLD),
        ladder,
        lhs,
        slope,
        threshold: GROWTH_SLOPE_THRESHOLD,
    })
}

/// `μ(a) = xa − ax` with skew-adjoint `x`: a star-preserving exact pair.
pub fn skew_inner_pair(bm: &Arc<Bimodule>, x: &Element) -> Result<crate::maps::GeneralizedDerivationPair> {
    let alg = bm.algebra();
    let skew = alg.sub(x, &alg.adjoint(x)?)?;
    let skew = alg.scale(Complex64::new(0.5, 0.0), &skew)?;
    let xm = bm.embed(&skew)?;
    crate::maps::inner_generalized(bm, &xm, &xm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maps::{inner_generalized, NoiseKind, PerturbationSpec, ScaleMode, Slot};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn m2() -> (Arc<Algebra>, Arc<Bimodule>) {
        let alg = Arc::new(Algebra::matrix(2).unwrap());
        let bm = Arc::new(Bimodule::self_bimodule(alg.clone()));
        (alg, bm)
    }

    fn inner_pair(bm: &Arc<Bimodule>) -> crate::maps::GeneralizedDerivationPair {
        let x = bm.element(vec![c(1.0, 0.0), c(0.5, -1.0), c(0.0, 2.0), c(-1.0, 0.0)]).unwrap();
        let y = bm.element(vec![c(0.0, 1.0), c(0.0, 0.0), c(1.0, 0.0), c(0.25, 0.0)]).unwrap();
        inner_generalized(bm, &x, &y).unwrap()
    }

    fn sampler(samples: usize, slots: SampleSlots) -> SamplerConfig {
        SamplerConfig { samples, seed: 5, norm_ladder: Some((-4, 8)), slots }
    }

    #[test]
    fn exact_pair_satisfies_master_inequality() {
        let (_, bm) = m2();
        let pair = ApproximateMapPair::exact(inner_pair(&bm));
        let cf = ControlFunction::constant(0.0).unwrap();
        let r = residual_master_inequality(&pair, &cf, &sampler(100, SampleSlots::All), LambdaSet::FullT { k: 6 }).unwrap();
        assert!(r.passed, "{r:?}");
        assert_eq!(r.samples, 100);
    }

    #[test]
    fn power_noise_passes_with_three_beta() {
        let (_, bm) = m2();
        let f = PerturbationSpec::power(0.1, 0.5, 3, ScaleMode::ScaleInvariantDirection);
        let pair = ApproximateMapPair::new(inner_pair(&bm), f, PerturbationSpec::zero()).unwrap();
        let cf = ControlFunction::power(0.3, 0.5).unwrap();
        let r = residual_master_inequality(&pair, &cf, &sampler(200, SampleSlots::Additive), LambdaSet::FullT { k: 8 }).unwrap();
        assert!(r.passed, "{r:?}");
        // a control of β alone is violated somewhere
        let tight = ControlFunction::power(0.01, 0.5).unwrap();
        let r = residual_master_inequality(&pair, &tight, &sampler(200, SampleSlots::Additive), LambdaSet::OneAndI).unwrap();
        assert!(!r.passed);
    }

    #[test]
    fn bounded_noise_fails_with_large_c() {
        let (_, bm) = m2();
        let f = PerturbationSpec::bounded(0.01, 3, ScaleMode::ScaleSensitiveDirection);
        let pair = ApproximateMapPair::new(inner_pair(&bm), f, PerturbationSpec::zero()).unwrap();
        let cf = ControlFunction::constant(0.01).unwrap();
        let r = residual_master_inequality(&pair, &cf, &sampler(100, SampleSlots::All), LambdaSet::OneAndI).unwrap();
        assert!(!r.passed);
        assert!(r.witness["lhs"].as_f64().unwrap() > r.witness["phi"].as_f64().unwrap());
    }

    #[test]
    fn reports_are_reproducible() {
        let (_, bm) = m2();
        let f = PerturbationSpec::power(0.1, 0.5, 3, ScaleMode::ScaleInvariantDirection);
        let pair = ApproximateMapPair::new(inner_pair(&bm), f, PerturbationSpec::zero()).unwrap();
        let cf = ControlFunction::power(0.1, 0.5).unwrap();
        let s = sampler(64, SampleSlots::All);
        let a = residual_master_inequality(&pair, &cf, &s, LambdaSet::FullT { k: 4 }).unwrap();
        let b = residual_master_inequality(&pair, &cf, &s, LambdaSet::FullT { k: 4 }).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    #[test]
    fn reduce_picks_first_max_and_handles_empty() {
        let r = ResidualReport::reduce("x", 0.0, &[-1.0, 2.0, 2.0], |i| json!(i));
        assert_eq!(r.witness, json!(1));
        assert!(!r.passed);
        let r = ResidualReport::reduce("x", 0.0, &[], |i| json!(i));
        assert!(r.passed);
        assert_eq!(r.samples, 0);
        let r = ResidualReport::reduce("x", 1.0, &[f64::NAN], |i| json!(i));
        assert!(!r.passed);
    }

    #[test]
    fn stability_bound_for_exact_and_power_noise() {
        let (_, bm) = m2();
        let exact = ApproximateMapPair::exact(inner_pair(&bm));
        let cf = ControlFunction::power(0.1, 0.5).unwrap();
        let r = certify_stability_bound(&exact, &cf, &exact.exact.mu, |_| 0.0, &sampler(50, SampleSlots::All), 1e-9).unwrap();
        assert!(r.passed);
        assert!(r.max_residual <= 0.0);

        let f = PerturbationSpec::power(0.1, 0.5, 3, ScaleMode::ScaleInvariantDirection);
        let pair = ApproximateMapPair::new(inner_pair(&bm), f, PerturbationSpec::zero()).unwrap();
        let r = certify_stability_bound(&pair, &cf, &pair.exact.mu, |_| 0.0, &sampler(200, SampleSlots::All), 1e-9).unwrap();
        assert!(r.passed);
        // ‖f(a) − μ(a)‖ ≤ β‖a‖ᵖ, strictly below the bound
        let dev = r.witness["deviation"].as_f64().unwrap();
        let bound = r.witness["bound"].as_f64().unwrap();
        assert!(dev < bound * (1.0 - 0.5f64.sqrt()) + 1e-15);
    }

    #[test]
    fn identity_checks_on_known_maps() {
        let (alg, bm) = m2();
        let pair = inner_pair(&bm);
        assert_eq!(check_generalized_derivation(&pair.mu, &pair.delta, 0.0).unwrap().max_residual, 0.0);
        assert!(check_leibniz(&pair.delta, 0.0).unwrap().passed);
        let id = LinearMap::from_basis_images(bm.clone(), |j| Ok(alg.basis(j).coords().to_vec())).unwrap();
        let zero = LinearMap::zero(bm.clone());
        let r = check_generalized_derivation(&id, &zero, 0.0).unwrap();
        assert_eq!(r.max_residual, 0.0);
        assert!(check_leibniz(&zero, 0.0).unwrap().passed);
        // identity is not a derivation: δ(1·1) ≠ 1 + 1
        let r = check_leibniz(&id, 0.0).unwrap();
        assert!(!r.passed);
        assert_eq!(r.check, CHECK_LEIBNIZ);
    }

    #[test]
    fn star_preservation_cases() {
        let (alg, bm) = m2();
        let x = alg.element(vec![c(0.3, 1.0), c(2.0, -0.5), c(-1.0, 0.0), c(0.0, 0.7)]).unwrap();
        let exact = skew_inner_pair(&bm, &x).unwrap();
        let f = PerturbationSpec::power(0.1, 0.5, 2, ScaleMode::ScaleInvariantDirection);
        let pair = ApproximateMapPair::new(exact, f, PerturbationSpec::zero()).unwrap();
        let cf = ControlFunction::power(0.1, 0.5).unwrap();
        let cfg = StarConfig { unitaries: 30, seed: 1, depth: 48 };
        let rep = check_star_preservation(&pair, &cf, &pair.exact.mu, 0.0, &cfg).unwrap();
        assert!(rep.hypothesis.passed, "{:?}", rep.hypothesis);
        assert!(rep.conclusion.passed, "{:?}", rep.conclusion);

        let zero = LinearMap::zero(bm.clone());
        assert_eq!(check_star_preservation(&pair, &cf, &zero, 0.0, &cfg).unwrap().conclusion.max_residual, 0.0);
        let id = LinearMap::from_basis_images(bm.clone(), |j| Ok(alg.basis(j).coords().to_vec())).unwrap();
        assert_eq!(check_star_preservation(&pair, &cf, &id, 0.0, &cfg).unwrap().conclusion.max_residual, 0.0);

        // a generic inner pair is not star-preserving
        let generic = ApproximateMapPair::exact(inner_pair(&bm));
        let rep = check_star_preservation(&generic, &cf, &generic.exact.mu, 0.0, &cfg).unwrap();
        assert!(!rep.conclusion.passed);
    }

    #[test]
    fn skew_commutator_symbolic_oracle() {
        // x = [[i, 1], [-1, 2i]] is skew-adjoint; μ(a) = xa − ax.
        let (alg, bm) = m2();
        let x = alg.element(vec![c(0.0, 1.0), c(1.0, 0.0), c(-1.0, 0.0), c(0.0, 2.0)]).unwrap();
        assert_eq!(alg.adjoint(&x).unwrap(), alg.scale(c(-1.0, 0.0), &x).unwrap());
        let pair = skew_inner_pair(&bm, &x).unwrap();
        for j in 0..4 {
            let e = alg.basis(j);
            let lhs = pair.mu.apply(&alg.adjoint(&e).unwrap()).unwrap();
            let rhs = bm.adjoint(&pair.mu.apply(&e).unwrap()).unwrap();
            assert_eq!(lhs, rhs);
        }
    }

    #[test]
    fn star_checks_need_cstar() {
        let alg = Arc::new(Algebra::upper_triangular(2).unwrap());
        let bm = Arc::new(Bimodule::self_bimodule(alg.clone()));
        let pair = ApproximateMapPair::exact(crate::maps::GeneralizedDerivationPair::zero(bm.clone()));
        let cf = ControlFunction::constant(0.0).unwrap();
        let zero = LinearMap::zero(bm);
        assert!(matches!(
            check_star_preservation(&pair, &cf, &zero, 0.0, &StarConfig::default()),
            Err(Error::Unsupported(_))
        ));
        assert!(matches!(unitary_decompose(&alg, &alg.one()), Err(Error::Unsupported(_))));
    }

    #[test]
    fn unitary_decomposition_examples() {
        let (alg, _) = m2();
        let a = alg.element(vec![c(2.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]).unwrap();
        let dec = unitary_decompose(&alg, &a).unwrap();
        assert_eq!(dec.terms.len(), 2);
        let expected_u = alg.element(vec![c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 1.0)]).unwrap();
        assert!((dec.terms[0].0 - c(1.0, 0.0)).norm() < 1e-15);
        let diff = alg.sub(&dec.terms[0].1, &expected_u).unwrap();
        assert!(alg.spectral_norm(&diff).unwrap() < 1e-12);

        let dec = unitary_decompose(&alg, &alg.one()).unwrap();
        assert_eq!(dec.terms.len(), 2);
        for (k, u) in &dec.terms {
            assert!((k - c(0.5, 0.0)).norm() < 1e-15);
            assert!(alg.spectral_norm(&alg.sub(u, &alg.one()).unwrap()).unwrap() < 1e-12);
        }

        assert!(unitary_decompose(&alg, &alg.zero()).unwrap().terms.is_empty());
    }

    #[test]
    fn unitary_decomposition_random_matrices() {
        for n in 2..=4 {
            let alg = Algebra::matrix(n).unwrap();
            for i in 0..20 {
                let a = alg.random_element(17, i);
                let dec = unitary_decompose(&alg, &a).unwrap();
                assert!(dec.terms.len() <= 4);
                assert!(dec.reconstruction_error(&alg).unwrap() <= 1e-10);
                assert!(dec.unitarity_defect(&alg).unwrap() <= 1e-10);
            }
        }
    }

    #[test]
    fn random_unitaries_are_unitary() {
        let alg = Algebra::matrix(3).unwrap();
        let u = random_unitary(&alg, 3, 4).unwrap();
        let uu = alg.mul(&alg.adjoint(&u).unwrap(), &u).unwrap();
        assert!(alg.spectral_norm(&alg.sub(&uu, &alg.one()).unwrap()).unwrap() < 1e-12);
    }

    #[test]
    fn superstability_exact_pair() {
        let (_, bm) = m2();
        let pair = ApproximateMapPair::exact(inner_pair(&bm));
        let cfg = SuperstabilityConfig { samples: 16, ..Default::default() };
        let rep = superstability_probe(&pair, 0.01, &cfg).unwrap();
        assert!(rep.homogeneity.passed);
        assert_eq!(rep.homogeneity.witness["lhs"].as_f64().unwrap(), 0.0);
        assert!(rep.growth.lhs.iter().all(|x| *x == 0.0));
        assert!(rep.passed);
    }

    #[test]
    fn superstability_growth_for_d_slot_noise() {
        let (_, bm) = m2();
        let f = PerturbationSpec {
            kind: NoiseKind::SlotTargeted { slot: Slot::D, inner: Box::new(NoiseKind::BoundedNoise { epsilon: 0.01 }) },
            seed: 9,
            scale_mode: ScaleMode::ScaleSensitiveDirection,
        };
        let pair = ApproximateMapPair::new(inner_pair(&bm), f, PerturbationSpec::zero()).unwrap();
        let cfg = SuperstabilityConfig { samples: 8, ..Default::default() };
        let rep = superstability_probe(&pair, 0.01, &cfg).unwrap();
        assert!(!rep.homogeneity.passed);
        let slope = rep.growth.slope.unwrap();
        assert!(slope >= 0.9, "slope {slope}");
        assert!(rep.passed);
    }

    #[test]
    fn superstability_growth_for_g_noise() {
        let (_, bm) = m2();
        let g = PerturbationSpec::bounded(0.01, 4, ScaleMode::ScaleSensitiveDirection);
        let pair = ApproximateMapPair::new(inner_pair(&bm), PerturbationSpec::zero(), g).unwrap();
        let rep = superstability_probe(&pair, 0.01, &SuperstabilityConfig { samples: 8, ..Default::default() }).unwrap();
        assert_eq!(rep.growth.swept, "d");
        assert!(rep.growth.linear_growth);
    }

    #[test]
    fn log_log_slope_oracle() {
        let x = [1.0, 2.0, 4.0, 8.0];
        let y: Vec<f64> = x.iter().map(|v| 3.0 * v * v).collect();
        assert!((log_log_slope(&x, &y).unwrap() - 2.0).abs() < 1e-12);
        assert_eq!(log_log_slope(&x, &[0.0; 4]), None);
    }

    #[test]
    fn lambda_sets() {
        let pts = LambdaSet::FullT { k: 4 }.points();
        assert_eq!(pts[0], c(1.0, 0.0));
        assert!((pts[1] - c(0.0, 1.0)).norm() < 1e-15);
        assert!(pts.iter().all(|z| (z.norm() - 1.0).abs() < 1e-15));
        assert_eq!(LambdaSet::OneAndI.points(), vec![c(1.0, 0.0), c(0.0, 1.0)]);
    }
}
