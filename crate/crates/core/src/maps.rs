//! Exact generalized derivations and their perturbed approximations.
//!
//! An [`ApproximateMapPair`] is `f = μ + P`, `g = δ + Q` where `(μ, δ)` is an
//! exact generalized derivation and `P`, `Q` are seeded nonlinear noise
//! fields. `f` and `g` can be evaluated at `2ⁿa` for `n ≤ 512` without
//! materializing `2ⁿ`-sized coordinates: results come back as a mantissa and
//! a binary exponent.

use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::algebra::{Bimodule, Element, ModuleElement};
use crate::error::{Error, Result};
use crate::linalg::CMat;
use crate::rng;

/// Largest dyadic exponent accepted by the scaled evaluators.
pub const MAX_LOG2_SCALE: u32 = 512;

/// Grid used to quantize noise keys.
pub const DIRECTION_GRID: f64 = 1e-6;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// A ℂ-linear map 𝒜 → 𝒳 stored as an `m × d` coordinate matrix.
#[derive(Debug, Clone)]
pub struct LinearMap {
    target: Arc<Bimodule>,
    matrix: CMat,
}

impl PartialEq for LinearMap {
    fn eq(&self, other: &Self) -> bool {
        self.target.id() == other.target.id() && self.matrix == other.matrix
    }
}

impl LinearMap {
    pub fn new(target: Arc<Bimodule>, matrix: CMat) -> Result<Self> {
        let (m, d) = (target.dim(), target.algebra().dim());
        if matrix.rows() != m || matrix.cols() != d {
            return Err(Error::DimensionMismatch { expected: m * d, got: matrix.rows() * matrix.cols() });
        }
        if matrix.as_slice().iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite("linear map matrix"));
        }
        Ok(Self { target, matrix })
    }

    pub fn zero(target: Arc<Bimodule>) -> Self {
        let matrix = CMat::zeros(target.dim(), target.algebra().dim());
        Self { target, matrix }
    }

    /// Builds the map whose `j`-th column is `column(e_j)`.
    pub fn from_basis_images(
        target: Arc<Bimodule>,
        mut column: impl FnMut(usize) -> Result<Vec<Complex64>>,
    ) -> Result<Self> {
        let (m, d) = (target.dim(), target.algebra().dim());
        let mut matrix = CMat::zeros(m, d);
        for j in 0..d {
            let col = column(j)?;
            if col.len() != m {
                return Err(Error::DimensionMismatch { expected: m, got: col.len() });
            }
            for (i, z) in col.into_iter().enumerate() {
                matrix[(i, j)] = z;
            }
        }
        Self::new(target, matrix)
    }

    pub fn target(&self) -> &Arc<Bimodule> {
        &self.target
    }

    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }

    pub fn column(&self, j: usize) -> Vec<Complex64> {
        (0..self.matrix.rows()).map(|i| self.matrix[(i, j)]).collect()
    }

    pub(crate) fn apply_coords(&self, a: &[Complex64]) -> Vec<Complex64> {
        self.matrix.matvec(a)
    }

    pub fn apply(&self, a: &Element) -> Result<ModuleElement> {
        if a.algebra() != self.target.algebra().id() {
            return Err(Error::HandleMismatch("argument is not in the map's source algebra".into()));
        }
        Ok(self.target.wrap(self.apply_coords(a.coords())))
    }

    /// Rows of the matrix as `[re, im]` pairs, for reports.
    pub fn to_pairs(&self) -> Vec<Vec<[f64; 2]>> {
        (0..self.matrix.rows())
            .map(|i| (0..self.matrix.cols()).map(|j| {
                let z = self.matrix[(i, j)];
                [z.re, z.im]
            }).collect())
            .collect()
    }
}

/// `(μ, δ)` with `μ(ab) = aμ(b) + δ(a)b` and δ a derivation.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneralizedDerivationPair {
    pub mu: LinearMap,
    pub delta: LinearMap,
}

impl GeneralizedDerivationPair {
    pub fn bimodule(&self) -> &Arc<Bimodule> {
        self.mu.target()
    }

    /// The zero generalized derivation.
    pub fn zero(bimodule: Arc<Bimodule>) -> Self {
        Self {
            mu: LinearMap::zero(bimodule.clone()),
            delta: LinearMap::zero(bimodule),
        }
    }
}

/// Inner generalized derivation `μ(a) = x·a − a·y` with `δ(a) = x·a − a·x`.
pub fn inner_generalized(
    bimodule: &Arc<Bimodule>,
    x: &ModuleElement,
    y: &ModuleElement,
) -> Result<GeneralizedDerivationPair> {
    for v in [x, y] {
        if v.bimodule() != bimodule.id() {
            return Err(Error::HandleMismatch("inner generalized derivation data".into()));
        }
    }
    let alg = bimodule.algebra().clone();
    let mu = LinearMap::from_basis_images(bimodule.clone(), |j| {
        let e = alg.basis_coords(j);
        let xa = bimodule.right_coords(x.coords(), &e);
        let ay = bimodule.left_coords(&e, y.coords());
        Ok(xa.iter().zip(&ay).map(|(p, q)| p - q).collect())
    })?;
    let delta = LinearMap::from_basis_images(bimodule.clone(), |j| {
        let e = alg.basis_coords(j);
        let xa = bimodule.right_coords(x.coords(), &e);
        let ax = bimodule.left_coords(&e, x.coords());
        Ok(xa.iter().zip(&ax).map(|(p, q)| p - q).collect())
    })?;
    Ok(GeneralizedDerivationPair { mu, delta })
}

/// Right multiplier `μ(a) = z·a` on the self-bimodule, with `δ(a) = za − az`.
pub fn right_multiplier(bimodule: &Arc<Bimodule>, z: &Element) -> Result<GeneralizedDerivationPair> {
    if !bimodule.is_self() {
        return Err(Error::Unsupported("the self-bimodule for a right multiplier"));
    }
    let zx = bimodule.embed(z)?;
    inner_generalized(bimodule, &zx, &bimodule.zero())
}

/// Slot of the master inequality `f(λa+λb+cd) − λf(a) − λf(b) − cf(d) − g(c)d`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Slot {
    A,
    B,
    C,
    D,
}

#[derive(Debug, Clone, PartialEq)]
pub enum NoiseKind {
    Zero,
    /// `‖P(v)‖ ≤ ε`.
    BoundedNoise { epsilon: f64 },
    /// `‖P(v)‖ ≤ β‖v‖ᵖ`, `p < 1`.
    PowerNoise { beta: f64, p: f64 },
    /// Evaluates like `inner`; `slot` tells the superstability probe where to
    /// place its witness.
    SlotTargeted { slot: Slot, inner: Box<NoiseKind> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ScaleMode {
    /// Noise direction depends only on `v/‖v‖`, so `P(2ⁿv) = 2^{np} P(v)`.
    #[default]
    ScaleInvariantDirection,
    /// Noise direction keyed on `v` itself; dyadic scaling reshuffles it.
    ScaleSensitiveDirection,
}

/// A deterministic noise field `P: 𝒜 → 𝒳` with `P(0) = 0`.
///
/// Serialized flat: `{kind, epsilon | beta + p, slot + inner, seed, scale_mode}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PerturbationWire", into = "PerturbationWire")]
pub struct PerturbationSpec {
    pub kind: NoiseKind,
    pub seed: u64,
    pub scale_mode: ScaleMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum WireKind {
    Zero,
    BoundedNoise,
    PowerNoise,
    SlotTargeted,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NoiseWire {
    kind: WireKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    slot: Option<Slot>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    inner: Option<Box<NoiseWire>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PerturbationWire {
    kind: WireKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    slot: Option<Slot>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    inner: Option<Box<NoiseWire>>,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    scale_mode: ScaleMode,
}

fn missing(field: &str, kind: &str) -> String {
    format!("perturbation kind `{kind}` needs `{field}`")
}

impl TryFrom<NoiseWire> for NoiseKind {
    type Error = String;
    fn try_from(w: NoiseWire) -> std::result::Result<Self, String> {
        let extra = |ok: bool, what: &str| if ok { Ok(()) } else { Err(format!("unexpected field for {what}")) };
        match w.kind {
            WireKind::Zero => {
                extra(w.epsilon.is_none() && w.beta.is_none() && w.p.is_none() && w.slot.is_none() && w.inner.is_none(), "zero")?;
                Ok(NoiseKind::Zero)
            }
            WireKind::BoundedNoise => {
                extra(w.beta.is_none() && w.p.is_none() && w.slot.is_none() && w.inner.is_none(), "bounded_noise")?;
                Ok(NoiseKind::BoundedNoise { epsilon: w.epsilon.ok_or_else(|| missing("epsilon", "bounded_noise"))? })
            }
            WireKind::PowerNoise => {
                extra(w.epsilon.is_none() && w.slot.is_none() && w.inner.is_none(), "power_noise")?;
                Ok(NoiseKind::PowerNoise {
                    beta: w.beta.ok_or_else(|| missing("beta", "power_noise"))?,
                    p: w.p.ok_or_else(|| missing("p", "power_noise"))?,
                })
            }
            WireKind::SlotTargeted => {
                extra(w.epsilon.is_none() && w.beta.is_none() && w.p.is_none(), "slot_targeted")?;
                Ok(NoiseKind::SlotTargeted {
                    slot: w.slot.ok_or_else(|| missing("slot", "slot_targeted"))?,
                    inner: Box::new(NoiseKind::try_from(*w.inner.ok_or_else(|| missing("inner", "slot_targeted"))?)?),
                })
            }
        }
    }
}

impl From<NoiseKind> for NoiseWire {
    fn from(k: NoiseKind) -> Self {
        let mut w = NoiseWire { kind: WireKind::Zero, epsilon: None, beta: None, p: None, slot: None, inner: None };
        match k {
            NoiseKind::Zero => {}
            NoiseKind::BoundedNoise { epsilon } => {
                w.kind = WireKind::BoundedNoise;
                w.epsilon = Some(epsilon);
            }
            NoiseKind::PowerNoise { beta, p } => {
                w.kind = WireKind::PowerNoise;
                w.beta = Some(beta);
                w.p = Some(p);
            }
            NoiseKind::SlotTargeted { slot, inner } => {
                w.kind = WireKind::SlotTargeted;
                w.slot = Some(slot);
                w.inner = Some(Box::new(NoiseWire::from(*inner)));
            }
        }
        w
    }
}

impl TryFrom<PerturbationWire> for PerturbationSpec {
    type Error = String;
    fn try_from(w: PerturbationWire) -> std::result::Result<Self, String> {
        let kind = NoiseKind::try_from(NoiseWire {
            kind: w.kind,
            epsilon: w.epsilon,
            beta: w.beta,
            p: w.p,
            slot: w.slot,
            inner: w.inner,
        })?;
        Ok(PerturbationSpec { kind, seed: w.seed, scale_mode: w.scale_mode })
    }
}

impl From<PerturbationSpec> for PerturbationWire {
    fn from(s: PerturbationSpec) -> Self {
        let n = NoiseWire::from(s.kind);
        PerturbationWire {
            kind: n.kind,
            epsilon: n.epsilon,
            beta: n.beta,
            p: n.p,
            slot: n.slot,
            inner: n.inner,
            seed: s.seed,
            scale_mode: s.scale_mode,
        }
    }
}

impl PerturbationSpec {
    pub fn zero() -> Self {
        Self { kind: NoiseKind::Zero, seed: 0, scale_mode: ScaleMode::default() }
    }

    pub fn bounded(epsilon: f64, seed: u64, scale_mode: ScaleMode) -> Self {
        Self { kind: NoiseKind::BoundedNoise { epsilon }, seed, scale_mode }
    }

    pub fn power(beta: f64, p: f64, seed: u64, scale_mode: ScaleMode) -> Self {
        Self { kind: NoiseKind::PowerNoise { beta, p }, seed, scale_mode }
    }

    pub fn validate(&self) -> Result<()> {
        validate_kind(&self.kind, false)
    }

    /// Innermost noise kind with slot targeting stripped.
    pub fn base_kind(&self) -> &NoiseKind {
        let mut k = &self.kind;
        while let NoiseKind::SlotTargeted { inner, .. } = k {
            k = inner;
        }
        k
    }

    pub fn target_slot(&self) -> Option<Slot> {
        match &self.kind {
            NoiseKind::SlotTargeted { slot, .. } => Some(*slot),
            _ => None,
        }
    }

    /// Upper bound on `‖P(v)‖` given `‖v‖`.
    pub fn bound(&self, arg_norm: f64) -> f64 {
        match self.base_kind() {
            NoiseKind::Zero => 0.0,
            NoiseKind::BoundedNoise { epsilon } => *epsilon,
            NoiseKind::PowerNoise { beta, p } => beta * pow_convention(arg_norm, *p),
            NoiseKind::SlotTargeted { .. } => unreachable!("base_kind strips slot targeting"),
        }
    }

    /// `2^{-n} P(2ⁿ v)` as coordinates in 𝒳.
    fn scaled_noise(&self, bimodule: &Bimodule, v: &[Complex64], n: u32) -> Result<Vec<Complex64>> {
        let m = bimodule.dim();
        let (magnitude, exponent_rate) = match self.base_kind() {
            NoiseKind::Zero => return Ok(vec![ZERO; m]),
            NoiseKind::BoundedNoise { epsilon } => (*epsilon, -1.0),
            NoiseKind::PowerNoise { beta, p } => (*beta, p - 1.0),
            NoiseKind::SlotTargeted { .. } => unreachable!(),
        };
        if magnitude == 0.0 || v.iter().all(|z| *z == ZERO) {
            return Ok(vec![ZERO; m]);
        }
        let alg = bimodule.algebra();
        let v_norm = alg.norm_coords(v)?;
        let key_words: Vec<u64> = match self.scale_mode {
            ScaleMode::ScaleInvariantDirection => quantize(v.iter().map(|z| z / v_norm)),
            ScaleMode::ScaleSensitiveDirection => {
                let factor = (n as f64).exp2();
                let scaled: Vec<Complex64> = v.iter().map(|z| z * factor).collect();
                if scaled.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                    return Err(Error::Overflow { exponent: n as i32 });
                }
                quantize(scaled.into_iter())
            }
        };
        let mut r = rng::stream(rng::hash_words(self.seed, key_words), 0);
        let raw = rng::complex_gaussian_vec(&mut r, m);
        let rho: f64 = r.gen_range(0.5..1.0);
        let raw_norm = bimodule.norm_coords(&raw)?;
        let amplitude = match self.base_kind() {
            NoiseKind::PowerNoise { p, .. } => magnitude * pow_convention(v_norm, *p),
            _ => magnitude,
        };
        // 2^{-n}·‖P(2ⁿv)‖ = amplitude · 2^{n·rate}, evaluated in log space
        let dyadic = (n as f64 * exponent_rate).exp2();
        let coeff = amplitude * rho * dyadic / raw_norm;
        Ok(raw.into_iter().map(|z| z * coeff).collect())
    }
}

fn validate_kind(kind: &NoiseKind, nested: bool) -> Result<()> {
    match kind {
        NoiseKind::Zero => Ok(()),
        NoiseKind::BoundedNoise { epsilon } => {
            if !epsilon.is_finite() || *epsilon < 0.0 {
                return Err(Error::InvalidDescriptor(format!("noise epsilon must be finite and >= 0, got {epsilon}")));
            }
            Ok(())
        }
        NoiseKind::PowerNoise { beta, p } => {
            if !beta.is_finite() || *beta < 0.0 {
                return Err(Error::InvalidDescriptor(format!("noise beta must be finite and >= 0, got {beta}")));
            }
            if !p.is_finite() || *p >= 1.0 {
                return Err(Error::DivergentControl(format!(
                    "noise exponent p = {p} must satisfy p < 1 for the dyadic limit to exist"
                )));
            }
            Ok(())
        }
        NoiseKind::SlotTargeted { inner, .. } => {
            if nested {
                return Err(Error::InvalidDescriptor("slot targeting cannot be nested".into()));
            }
            validate_kind(inner, true)
        }
    }
}

/// `xᵖ` with the convention `0ᵖ = 0`.
pub fn pow_convention(x: f64, p: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x.powf(p)
    }
}

fn quantize(v: impl Iterator<Item = Complex64>) -> Vec<u64> {
    // + 0.0 folds -0.0 into 0.0
    v.flat_map(|z| {
        [
            ((z.re / DIRECTION_GRID).round() + 0.0).to_bits(),
            ((z.im / DIRECTION_GRID).round() + 0.0).to_bits(),
        ]
    })
    .collect()
}

/// `2^{log2_scale} · mantissa`.
#[derive(Debug, Clone, PartialEq)]
pub struct Scaled {
    pub mantissa: ModuleElement,
    pub log2_scale: u32,
}

impl Scaled {
    /// Multiplies out the exponent; errors if a coordinate overflows.
    pub fn materialize(&self, bimodule: &Bimodule) -> Result<ModuleElement> {
        let factor = (self.log2_scale as f64).exp2();
        let coords: Vec<Complex64> = self.mantissa.coords().iter().map(|z| z * factor).collect();
        if coords.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Overflow { exponent: self.log2_scale as i32 });
        }
        bimodule.element(coords)
    }
}

/// The pair `(f, g)` of approximate maps.
#[derive(Debug, Clone)]
pub struct ApproximateMapPair {
    pub exact: GeneralizedDerivationPair,
    pub f_perturbation: PerturbationSpec,
    pub g_perturbation: PerturbationSpec,
}

impl ApproximateMapPair {
    pub fn new(
        exact: GeneralizedDerivationPair,
        f_perturbation: PerturbationSpec,
        g_perturbation: PerturbationSpec,
    ) -> Result<Self> {
        f_perturbation.validate()?;
        g_perturbation.validate()?;
        if exact.mu.target().id() != exact.delta.target().id() {
            return Err(Error::HandleMismatch("μ and δ target different bimodules".into()));
        }
        Ok(Self { exact, f_perturbation, g_perturbation })
    }

    /// Unperturbed pair: `f = μ`, `g = δ`.
    pub fn exact(exact: GeneralizedDerivationPair) -> Self {
        Self { exact, f_perturbation: PerturbationSpec::zero(), g_perturbation: PerturbationSpec::zero() }
    }

    pub fn bimodule(&self) -> &Arc<Bimodule> {
        self.exact.bimodule()
    }

    fn evaluate(&self, map: &LinearMap, spec: &PerturbationSpec, a: &Element, n: u32) -> Result<Scaled> {
        if n > MAX_LOG2_SCALE {
            return Err(Error::OutOfRange(format!("log2 scale {n} exceeds {MAX_LOG2_SCALE}")));
        }
        let bm = self.bimodule();
        if a.algebra() != bm.algebra().id() {
            return Err(Error::HandleMismatch("argument is not in the pair's algebra".into()));
        }
        let exact = map.apply_coords(a.coords());
        let noise = spec.scaled_noise(bm, a.coords(), n)?;
        let mantissa = exact.iter().zip(&noise).map(|(x, y)| x + y).collect();
        Ok(Scaled { mantissa: bm.wrap(mantissa), log2_scale: n })
    }

    /// `f(2ⁿa)` as mantissa/exponent; the mantissa is `f(2ⁿa)/2ⁿ`.
    pub fn evaluate_f(&self, a: &Element, log2_scale: u32) -> Result<Scaled> {
        self.evaluate(&self.exact.mu, &self.f_perturbation, a, log2_scale)
    }

    /// `g(2ⁿc)` as mantissa/exponent.
    pub fn evaluate_g(&self, c: &Element, log2_scale: u32) -> Result<Scaled> {
        self.evaluate(&self.exact.delta, &self.g_perturbation, c, log2_scale)
    }

    pub fn f(&self, a: &Element) -> Result<ModuleElement> {
        Ok(self.evaluate_f(a, 0)?.mantissa)
    }

    pub fn g(&self, c: &Element) -> Result<ModuleElement> {
        Ok(self.evaluate_g(c, 0)?.mantissa)
    }
}
