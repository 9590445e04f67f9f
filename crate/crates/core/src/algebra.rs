//! Finite-dimensional complex algebras given by structure constants, their
//! bimodules, and the elements the rest of the crate computes with.
//!
//! An algebra of dimension `d` is described by the tensor `c[i][j][k]` with
//! `e_i · e_j = Σ_k c_ijk e_k`, a unit, a norm and an optional involution.
//! Descriptors are validated eagerly: associativity and the unit axioms are
//! checked on every basis triple at construction.

use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMat};
use crate::rng;

/// Complex scalar. Elements of 𝕋 are scalars of modulus one.
pub type Scalar = Complex64;

/// Tolerance for the algebraic axioms checked at construction.
pub const AXIOM_TOLERANCE: f64 = 1e-12;

/// Largest matrix order accepted by [`Algebra::matrix`].
pub const MAX_MATRIX_ORDER: usize = 8;

/// Largest dimension accepted for structure-constant algebras.
pub const MAX_DIM: usize = 64;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Content fingerprint of an algebra; elements carry it as their handle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AlgebraId(pub u64);

/// Content fingerprint of a bimodule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BimoduleId(pub u64);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormKind {
    /// Operator norm of the left regular representation on ℓ² coordinates.
    /// For matrix algebras in the matrix-unit basis this is the largest
    /// singular value.
    Spectral,
    /// `‖a‖ = Σ w_i |a_i|`.
    WeightedL1(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Involution {
    ConjugateTranspose,
}

/// Serialized form of an [`Algebra`]. Complex numbers are `[re, im]` pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgebraDescriptor {
    pub dim: usize,
    pub structure: Vec<Vec<Vec<[f64; 2]>>>,
    pub unit: Vec<[f64; 2]>,
    pub norm_kind: NormKind,
    pub involution: Option<Involution>,
}

pub fn to_pairs(coords: &[Complex64]) -> Vec<[f64; 2]> {
    coords.iter().map(|z| [z.re, z.im]).collect()
}

pub fn from_pairs(pairs: &[[f64; 2]]) -> Vec<Complex64> {
    pairs.iter().map(|p| Complex64::new(p[0], p[1])).collect()
}

fn all_finite(v: &[Complex64]) -> bool {
    v.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

fn fingerprint(tag: u64, words: impl IntoIterator<Item = u64>) -> u64 {
    rng::hash_words(tag, words)
}

fn complex_words(v: &[Complex64]) -> impl Iterator<Item = u64> + '_ {
    v.iter().flat_map(|z| [z.re.to_bits(), z.im.to_bits()])
}

type SparseTable = Vec<Vec<(usize, Complex64)>>;

/// A unital finite-dimensional complex normed algebra.
#[derive(Debug, Clone)]
pub struct Algebra {
    id: AlgebraId,
    dim: usize,
    structure: Vec<Complex64>,
    table: SparseTable,
    unit: Vec<Complex64>,
    norm: NormKind,
    involution: Option<Involution>,
    matrix_order: Option<usize>,
}

/// An element of an algebra, in the algebra's basis.
#[derive(Debug, Clone, PartialEq)]
pub struct Element {
    algebra: AlgebraId,
    coords: Vec<Complex64>,
}

impl Element {
    pub fn algebra(&self) -> AlgebraId {
        self.algebra
    }

    pub fn coords(&self) -> &[Complex64] {
        &self.coords
    }

    pub fn to_pairs(&self) -> Vec<[f64; 2]> {
        to_pairs(&self.coords)
    }
}

fn matrix_structure(n: usize) -> Vec<Complex64> {
    let d = n * n;
    let mut s = vec![ZERO; d * d * d];
    for p in 0..n {
        for q in 0..n {
            for r in 0..n {
                if q != r {
                    continue;
                }
                for t in 0..n {
                    let (i, j, k) = (p * n + q, r * n + t, p * n + t);
                    s[(i * d + j) * d + k] = ONE;
                }
            }
        }
    }
    s
}

fn identity_coords(n: usize) -> Vec<Complex64> {
    let mut u = vec![ZERO; n * n];
    for p in 0..n {
        u[p * n + p] = ONE;
    }
    u
}

impl Algebra {
    /// Mₙ(ℂ) in the matrix-unit basis `E_pq ↦ index p·n + q`, with the
    /// spectral norm and conjugate-transpose involution.
    pub fn matrix(n: usize) -> Result<Self> {
        if !(1..=MAX_MATRIX_ORDER).contains(&n) {
            return Err(Error::OutOfRange(format!(
                "matrix order {n} outside 1..={MAX_MATRIX_ORDER}"
            )));
        }
        Self::from_structure(
            n * n,
            matrix_structure(n),
            identity_coords(n),
            NormKind::Spectral,
            Some(Involution::ConjugateTranspose),
        )
    }

    /// Upper-triangular n×n matrices, basis `E_pq` (p ≤ q) in row-major
    /// order, with the unweighted ℓ¹ norm of the entries.
    pub fn upper_triangular(n: usize) -> Result<Self> {
        if !(1..=MAX_MATRIX_ORDER).contains(&n) {
            return Err(Error::OutOfRange(format!(
                "triangular order {n} outside 1..={MAX_MATRIX_ORDER}"
            )));
        }
        let pairs: Vec<(usize, usize)> = (0..n)
            .flat_map(|p| (p..n).map(move |q| (p, q)))
            .collect();
        let d = pairs.len();
        let index = |p: usize, q: usize| pairs.iter().position(|&x| x == (p, q));
        let mut s = vec![ZERO; d * d * d];
        for (i, &(p, q)) in pairs.iter().enumerate() {
            for (j, &(r, t)) in pairs.iter().enumerate() {
                if q == r {
                    let k = index(p, t).expect("p <= q = r <= t");
                    s[(i * d + j) * d + k] = ONE;
                }
            }
        }
        let mut unit = vec![ZERO; d];
        for p in 0..n {
            unit[index(p, p).unwrap()] = ONE;
        }
        Self::from_structure(d, s, unit, NormKind::WeightedL1(vec![1.0; d]), None)
    }

    /// Block direct sum `A ⊕ B` with ℓ¹-combined norm. Both summands must
    /// carry weighted-ℓ¹ norms.
    pub fn direct_sum(a: &Algebra, b: &Algebra) -> Result<Self> {
        let (NormKind::WeightedL1(wa), NormKind::WeightedL1(wb)) = (&a.norm, &b.norm) else {
            return Err(Error::InvalidDescriptor(
                "direct sum needs weighted-l1 summands".into(),
            ));
        };
        let (da, db) = (a.dim, b.dim);
        let d = da + db;
        let mut s = vec![ZERO; d * d * d];
        for i in 0..da {
            for j in 0..da {
                for k in 0..da {
                    s[(i * d + j) * d + k] = a.structure(i, j, k);
                }
            }
        }
        for i in 0..db {
            for j in 0..db {
                for k in 0..db {
                    s[((i + da) * d + (j + da)) * d + (k + da)] = b.structure(i, j, k);
                }
            }
        }
        let unit = a.unit.iter().chain(&b.unit).copied().collect();
        let weights = wa.iter().chain(wb).copied().collect();
        Self::from_structure(d, s, unit, NormKind::WeightedL1(weights), None)
    }

    /// Builds and validates an algebra from a flat structure tensor indexed
    /// `(i·d + j)·d + k`.
    pub fn from_structure(
        dim: usize,
        structure: Vec<Complex64>,
        unit: Vec<Complex64>,
        norm: NormKind,
        involution: Option<Involution>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidDescriptor("zero-dimensional algebra".into()));
        }
        if dim > MAX_DIM {
            return Err(Error::OutOfRange(format!("dimension {dim} exceeds {MAX_DIM}")));
        }
        if structure.len() != dim * dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim * dim,
                got: structure.len(),
            });
        }
        if unit.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: unit.len() });
        }
        if !all_finite(&structure) {
            return Err(Error::NonFinite("structure constants"));
        }
        if !all_finite(&unit) {
            return Err(Error::NonFinite("unit"));
        }
        if let NormKind::WeightedL1(w) = &norm {
            if w.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: w.len() });
            }
            if w.iter().any(|x| !x.is_finite() || *x <= 0.0) {
                return Err(Error::InvalidDescriptor("l1 weights must be positive and finite".into()));
            }
        }

        let mut table = vec![Vec::new(); dim * dim];
        for i in 0..dim {
            for j in 0..dim {
                for k in 0..dim {
                    let c = structure[(i * dim + j) * dim + k];
                    if c != ZERO {
                        table[i * dim + j].push((k, c));
                    }
                }
            }
        }

        let matrix_order = {
            let n = (dim as f64).sqrt().round() as usize;
            (n * n == dim && structure == matrix_structure(n) && unit == identity_coords(n)).then_some(n)
        };
        if involution == Some(Involution::ConjugateTranspose) && matrix_order.is_none() {
            return Err(Error::InvalidDescriptor(
                "conjugate-transpose involution requires a matrix algebra in the matrix-unit basis".into(),
            ));
        }

        let mut words = vec![dim as u64];
        words.extend(complex_words(&structure));
        words.extend(complex_words(&unit));
        match &norm {
            NormKind::Spectral => words.push(1),
            NormKind::WeightedL1(w) => {
                words.push(2);
                words.extend(w.iter().map(|x| x.to_bits()));
            }
        }
        words.push(involution.is_some() as u64);
        let id = AlgebraId(fingerprint(0xA16E_B4A0, words));

        let alg = Self {
            id,
            dim,
            structure,
            table,
            unit,
            norm,
            involution,
            matrix_order,
        };
        alg.validate_axioms()?;
        Ok(alg)
    }

    fn validate_axioms(&self) -> Result<()> {
        let d = self.dim;
        if linalg::vec_norm(&self.unit) == 0.0 {
            return Err(Error::InvalidDescriptor("unit is zero".into()));
        }
        for i in 0..d {
            let e = self.basis_coords(i);
            let left = self.mul_coords(&self.unit, &e);
            let right = self.mul_coords(&e, &self.unit);
            if diff_norm(&left, &e) > AXIOM_TOLERANCE || diff_norm(&right, &e) > AXIOM_TOLERANCE {
                return Err(Error::InvalidDescriptor(format!(
                    "unit is not a two-sided identity on basis element {i}"
                )));
            }
        }
        for i in 0..d {
            for j in 0..d {
                let eij = self.product_coords(i, j);
                for k in 0..d {
                    let lhs = self.mul_coords(&eij, &self.basis_coords(k));
                    let ejk = self.product_coords(j, k);
                    let rhs = self.mul_coords(&self.basis_coords(i), &ejk);
                    if diff_norm(&lhs, &rhs) > AXIOM_TOLERANCE {
                        return Err(Error::InvalidDescriptor(format!(
                            "associativity fails on basis triple ({i}, {j}, {k})"
                        )));
                    }
                }
            }
        }
        if let NormKind::WeightedL1(w) = &self.norm {
            // Σ_k w_k |c_ijk| ≤ w_i w_j makes the weighted ℓ¹ norm submultiplicative.
            for i in 0..d {
                for j in 0..d {
                    let lhs: f64 = self.table[i * d + j].iter().map(|(k, c)| w[*k] * c.norm()).sum();
                    if lhs > w[i] * w[j] * (1.0 + AXIOM_TOLERANCE) {
                        return Err(Error::InvalidDescriptor(format!(
                            "l1 weights are not submultiplicative on basis pair ({i}, {j})"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn from_descriptor(desc: &AlgebraDescriptor) -> Result<Self> {
        let d = desc.dim;
        if desc.structure.len() != d
            || desc.structure.iter().any(|row| row.len() != d || row.iter().any(|c| c.len() != d))
        {
            return Err(Error::InvalidDescriptor(format!("structure tensor is not {d}x{d}x{d}")));
        }
        let structure = desc
            .structure
            .iter()
            .flatten()
            .flatten()
            .map(|p| Complex64::new(p[0], p[1]))
            .collect();
        Self::from_structure(d, structure, from_pairs(&desc.unit), desc.norm_kind.clone(), desc.involution)
    }

    pub fn descriptor(&self) -> AlgebraDescriptor {
        let d = self.dim;
        AlgebraDescriptor {
            dim: d,
            structure: (0..d)
                .map(|i| {
                    (0..d)
                        .map(|j| (0..d).map(|k| {
                            let c = self.structure(i, j, k);
                            [c.re, c.im]
                        }).collect())
                        .collect()
                })
                .collect(),
            unit: to_pairs(&self.unit),
            norm_kind: self.norm.clone(),
            involution: self.involution,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.descriptor())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let desc: AlgebraDescriptor = serde_json::from_str(text)?;
        Self::from_descriptor(&desc)
    }

    pub fn id(&self) -> AlgebraId {
        self.id
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn structure(&self, i: usize, j: usize, k: usize) -> Complex64 {
        self.structure[(i * self.dim + j) * self.dim + k]
    }

    pub fn norm_kind(&self) -> &NormKind {
        &self.norm
    }

    pub fn involution(&self) -> Option<Involution> {
        self.involution
    }

    /// C*-mode: a matrix algebra with the conjugate-transpose involution.
    pub fn is_cstar(&self) -> bool {
        self.involution.is_some() && self.matrix_order.is_some()
    }

    pub fn matrix_order(&self) -> Option<usize> {
        self.matrix_order
    }

    pub(crate) fn basis_coords(&self, i: usize) -> Vec<Complex64> {
        let mut e = vec![ZERO; self.dim];
        e[i] = ONE;
        e
    }

    fn product_coords(&self, i: usize, j: usize) -> Vec<Complex64> {
        let mut out = vec![ZERO; self.dim];
        for &(k, c) in &self.table[i * self.dim + j] {
            out[k] += c;
        }
        out
    }

    pub(crate) fn mul_coords(&self, a: &[Complex64], b: &[Complex64]) -> Vec<Complex64> {
        let d = self.dim;
        let mut out = vec![ZERO; d];
        for (i, &ai) in a.iter().enumerate() {
            if ai == ZERO {
                continue;
            }
            for (j, &bj) in b.iter().enumerate() {
                if bj == ZERO {
                    continue;
                }
                let w = ai * bj;
                for &(k, c) in &self.table[i * d + j] {
                    out[k] += w * c;
                }
            }
        }
        out
    }

    pub(crate) fn norm_coords(&self, a: &[Complex64]) -> Result<f64> {
        match &self.norm {
            NormKind::WeightedL1(w) => Ok(w.iter().zip(a).map(|(w, z)| w * z.norm()).sum()),
            NormKind::Spectral => match self.matrix_order {
                Some(n) => linalg::spectral_norm(&CMat::from_vec(n, n, a.to_vec())),
                None => linalg::spectral_norm(&self.left_regular_coords(a)),
            },
        }
    }

    fn left_regular_coords(&self, a: &[Complex64]) -> CMat {
        let d = self.dim;
        let mut m = CMat::zeros(d, d);
        for (i, &ai) in a.iter().enumerate() {
            if ai == ZERO {
                continue;
            }
            for j in 0..d {
                for &(k, c) in &self.table[i * d + j] {
                    m[(k, j)] += ai * c;
                }
            }
        }
        m
    }

    pub(crate) fn adjoint_coords(&self, a: &[Complex64]) -> Result<Vec<Complex64>> {
        let n = match (self.involution, self.matrix_order) {
            (Some(Involution::ConjugateTranspose), Some(n)) => n,
            _ => return Err(Error::Unsupported("an involution (C*-mode algebra)")),
        };
        let mut out = vec![ZERO; n * n];
        for p in 0..n {
            for q in 0..n {
                out[q * n + p] = a[p * n + q].conj();
            }
        }
        Ok(out)
    }

    pub(crate) fn wrap(&self, coords: Vec<Complex64>) -> Element {
        Element { algebra: self.id, coords }
    }

    fn check(&self, a: &Element) -> Result<()> {
        if a.algebra != self.id {
            return Err(Error::HandleMismatch("element belongs to a different algebra".into()));
        }
        Ok(())
    }

    pub fn element(&self, coords: Vec<Complex64>) -> Result<Element> {
        if coords.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: coords.len() });
        }
        if !all_finite(&coords) {
            return Err(Error::NonFinite("element coordinates"));
        }
        Ok(self.wrap(coords))
    }

    pub fn element_from_pairs(&self, pairs: &[[f64; 2]]) -> Result<Element> {
        self.element(from_pairs(pairs))
    }

    pub fn zero(&self) -> Element {
        self.wrap(vec![ZERO; self.dim])
    }

    pub fn one(&self) -> Element {
        self.wrap(self.unit.clone())
    }

    pub fn basis(&self, i: usize) -> Element {
        self.wrap(self.basis_coords(i))
    }

    pub fn mul(&self, a: &Element, b: &Element) -> Result<Element> {
        self.check(a)?;
        self.check(b)?;
        Ok(self.wrap(self.mul_coords(&a.coords, &b.coords)))
    }

    pub fn add(&self, a: &Element, b: &Element) -> Result<Element> {
        self.check(a)?;
        self.check(b)?;
        Ok(self.wrap(a.coords.iter().zip(&b.coords).map(|(x, y)| x + y).collect()))
    }

    pub fn sub(&self, a: &Element, b: &Element) -> Result<Element> {
        self.check(a)?;
        self.check(b)?;
        Ok(self.wrap(a.coords.iter().zip(&b.coords).map(|(x, y)| x - y).collect()))
    }

    pub fn scale(&self, lambda: Scalar, a: &Element) -> Result<Element> {
        self.check(a)?;
        Ok(self.wrap(a.coords.iter().map(|x| lambda * x).collect()))
    }

    pub fn norm(&self, a: &Element) -> Result<f64> {
        self.check(a)?;
        self.norm_coords(&a.coords)
    }

    /// Largest singular value; only defined for matrix algebras.
    pub fn spectral_norm(&self, a: &Element) -> Result<f64> {
        self.check(a)?;
        let n = self.matrix_order.ok_or(Error::Unsupported("a matrix algebra"))?;
        linalg::spectral_norm(&CMat::from_vec(n, n, a.coords.clone()))
    }

    pub fn adjoint(&self, a: &Element) -> Result<Element> {
        self.check(a)?;
        Ok(self.wrap(self.adjoint_coords(&a.coords)?))
    }

    pub fn to_matrix(&self, a: &Element) -> Result<CMat> {
        self.check(a)?;
        let n = self.matrix_order.ok_or(Error::Unsupported("a matrix algebra"))?;
        Ok(CMat::from_vec(n, n, a.coords.clone()))
    }

    pub fn from_matrix(&self, m: &CMat) -> Result<Element> {
        let n = self.matrix_order.ok_or(Error::Unsupported("a matrix algebra"))?;
        if m.rows() != n || m.cols() != n {
            return Err(Error::DimensionMismatch { expected: n, got: m.rows() });
        }
        self.element(m.as_slice().to_vec())
    }

    /// Seeded complex-Gaussian element; sample `index` of stream `seed`.
    pub fn random_element(&self, seed: u64, index: u64) -> Element {
        let mut r = rng::stream(seed, index);
        self.wrap(rng::complex_gaussian_vec(&mut r, self.dim))
    }
}

fn diff_norm(a: &[Complex64], b: &[Complex64]) -> f64 {
    let d: Vec<Complex64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    linalg::vec_norm(&d)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModuleNorm {
    /// Self-bimodule: the algebra's own norm.
    Algebra,
    WeightedL1(Vec<f64>),
    Euclidean,
}

/// A unit-linked bimodule over an algebra, given by action tensors.
///
/// `left[(i·m + j)·m + k]` is the coefficient of `x_k` in `e_i · x_j`;
/// `right[(j·d + i)·m + k]` is the coefficient of `x_k` in `x_j · e_i`.
#[derive(Debug, Clone)]
pub struct Bimodule {
    id: BimoduleId,
    algebra: Arc<Algebra>,
    dim: usize,
    left: SparseTable,
    right: SparseTable,
    norm: ModuleNorm,
    is_self: bool,
}

/// An element of a bimodule.
#[derive(Debug, Clone, PartialEq)]
pub struct ModuleElement {
    bimodule: BimoduleId,
    coords: Vec<Complex64>,
}

impl ModuleElement {
    pub fn bimodule(&self) -> BimoduleId {
        self.bimodule
    }

    pub fn coords(&self) -> &[Complex64] {
        &self.coords
    }

    pub fn to_pairs(&self) -> Vec<[f64; 2]> {
        to_pairs(&self.coords)
    }
}

/// Number of sampled pairs used to check module-norm compatibility when a
/// bimodule is built from explicit action tensors.
const COMPATIBILITY_SAMPLES: u64 = 64;

impl Bimodule {
    /// 𝒳 = 𝒜 with both actions given by the algebra product.
    pub fn self_bimodule(algebra: Arc<Algebra>) -> Self {
        let d = algebra.dim;
        let left = algebra.table.clone();
        let mut right = vec![Vec::new(); d * d];
        // x_j · e_i = e_j e_i
        for j in 0..d {
            for i in 0..d {
                right[j * d + i] = algebra.table[j * d + i].clone();
            }
        }
        let id = BimoduleId(fingerprint(0x5E1F, [algebra.id.0]));
        Self {
            id,
            algebra,
            dim: d,
            left,
            right,
            norm: ModuleNorm::Algebra,
            is_self: true,
        }
    }

    /// General bimodule from dense action tensors, validated for the
    /// unit-linked, associativity and norm-compatibility axioms.
    pub fn from_actions(
        algebra: Arc<Algebra>,
        dim: usize,
        left: Vec<Complex64>,
        right: Vec<Complex64>,
        norm: ModuleNorm,
    ) -> Result<Self> {
        let d = algebra.dim;
        if dim == 0 {
            return Err(Error::InvalidDescriptor("zero-dimensional bimodule".into()));
        }
        for (name, t) in [("left action", &left), ("right action", &right)] {
            if t.len() != d * dim * dim {
                return Err(Error::DimensionMismatch { expected: d * dim * dim, got: t.len() });
            }
            if !all_finite(t) {
                return Err(Error::NonFinite(name));
            }
        }
        match &norm {
            ModuleNorm::Algebra => {
                return Err(Error::InvalidDescriptor(
                    "the algebra norm is only available on the self-bimodule".into(),
                ))
            }
            ModuleNorm::WeightedL1(w) if w.len() != dim || w.iter().any(|x| !x.is_finite() || *x <= 0.0) => {
                return Err(Error::InvalidDescriptor("module l1 weights must be positive, one per coordinate".into()))
            }
            _ => {}
        }
        let sparse = |t: &[Complex64], outer: usize, inner: usize| -> SparseTable {
            (0..outer * inner)
                .map(|r| {
                    (0..dim)
                        .filter_map(|k| {
                            let c = t[r * dim + k];
                            (c != ZERO).then_some((k, c))
                        })
                        .collect()
                })
                .collect()
        };
        let mut words = vec![algebra.id.0, dim as u64];
        words.extend(complex_words(&left));
        words.extend(complex_words(&right));
        let bm = Self {
            id: BimoduleId(fingerprint(0xB1_40D, words)),
            left: sparse(&left, d, dim),
            right: sparse(&right, dim, d),
            algebra,
            dim,
            norm,
            is_self: false,
        };
        bm.validate_axioms()?;
        Ok(bm)
    }

    fn validate_axioms(&self) -> Result<()> {
        let alg = &*self.algebra;
        let (d, m) = (alg.dim, self.dim);
        let unit = &alg.unit;
        for j in 0..m {
            let x = unit_vec(m, j);
            if diff_norm(&self.left_coords(unit, &x), &x) > AXIOM_TOLERANCE
                || diff_norm(&self.right_coords(&x, unit), &x) > AXIOM_TOLERANCE
            {
                return Err(Error::InvalidDescriptor(format!(
                    "bimodule is not unit-linked on basis element {j}"
                )));
            }
        }
        for i in 0..d {
            let ei = alg.basis_coords(i);
            for l in 0..d {
                let el = alg.basis_coords(l);
                let eil = alg.mul_coords(&ei, &el);
                for k in 0..m {
                    let x = unit_vec(m, k);
                    let checks = [
                        (self.left_coords(&eil, &x), self.left_coords(&ei, &self.left_coords(&el, &x))),
                        (self.right_coords(&x, &eil), self.right_coords(&self.right_coords(&x, &ei), &el)),
                        (self.right_coords(&self.left_coords(&ei, &x), &el), self.left_coords(&ei, &self.right_coords(&x, &el))),
                    ];
                    if checks.iter().any(|(a, b)| diff_norm(a, b) > AXIOM_TOLERANCE) {
                        return Err(Error::InvalidDescriptor(format!(
                            "bimodule actions are not associative on ({i}, {l}, x_{k})"
                        )));
                    }
                }
            }
        }
        for s in 0..COMPATIBILITY_SAMPLES {
            let mut r = rng::stream(self.id.0, s);
            let a = rng::complex_gaussian_vec(&mut r, d);
            let x = rng::complex_gaussian_vec(&mut r, m);
            let bound = alg.norm_coords(&a)? * self.norm_coords(&x)? * (1.0 + 1e-9);
            if self.norm_coords(&self.left_coords(&a, &x))? > bound
                || self.norm_coords(&self.right_coords(&x, &a))? > bound
            {
                return Err(Error::InvalidDescriptor(
                    "module norm is not compatible with the actions".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn id(&self) -> BimoduleId {
        self.id
    }

    pub fn algebra(&self) -> &Arc<Algebra> {
        &self.algebra
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_self(&self) -> bool {
        self.is_self
    }

    pub fn module_norm(&self) -> &ModuleNorm {
        &self.norm
    }

    /// Self-bimodule of a C*-mode algebra: the involution is available on 𝒳.
    pub fn has_involution(&self) -> bool {
        self.is_self && self.algebra.is_cstar()
    }

    pub(crate) fn left_coords(&self, a: &[Complex64], x: &[Complex64]) -> Vec<Complex64> {
        let m = self.dim;
        let mut out = vec![ZERO; m];
        for (i, &ai) in a.iter().enumerate() {
            if ai == ZERO {
                continue;
            }
            for (j, &xj) in x.iter().enumerate() {
                if xj == ZERO {
                    continue;
                }
                let w = ai * xj;
                for &(k, c) in &self.left[i * m + j] {
                    out[k] += w * c;
                }
            }
        }
        out
    }

    pub(crate) fn right_coords(&self, x: &[Complex64], a: &[Complex64]) -> Vec<Complex64> {
        let (d, m) = (self.algebra.dim, self.dim);
        let mut out = vec![ZERO; m];
        for (j, &xj) in x.iter().enumerate() {
            if xj == ZERO {
                continue;
            }
            for (i, &ai) in a.iter().enumerate() {
                if ai == ZERO {
                    continue;
                }
                let w = xj * ai;
                for &(k, c) in &self.right[j * d + i] {
                    out[k] += w * c;
                }
            }
        }
        out
    }

    pub(crate) fn norm_coords(&self, x: &[Complex64]) -> Result<f64> {
        match &self.norm {
            ModuleNorm::Algebra => self.algebra.norm_coords(x),
            ModuleNorm::WeightedL1(w) => Ok(w.iter().zip(x).map(|(w, z)| w * z.norm()).sum()),
            ModuleNorm::Euclidean => Ok(linalg::vec_norm(x)),
        }
    }

    pub(crate) fn adjoint_coords(&self, x: &[Complex64]) -> Result<Vec<Complex64>> {
        if !self.is_self {
            return Err(Error::Unsupported("the self-bimodule of a C*-mode algebra"));
        }
        self.algebra.adjoint_coords(x)
    }

    pub(crate) fn wrap(&self, coords: Vec<Complex64>) -> ModuleElement {
        ModuleElement { bimodule: self.id, coords }
    }

    fn check(&self, x: &ModuleElement) -> Result<()> {
        if x.bimodule != self.id {
            return Err(Error::HandleMismatch("module element belongs to a different bimodule".into()));
        }
        Ok(())
    }

    fn check_elem(&self, a: &Element) -> Result<()> {
        if a.algebra != self.algebra.id {
            return Err(Error::HandleMismatch("element is not in the bimodule's algebra".into()));
        }
        Ok(())
    }

    pub fn element(&self, coords: Vec<Complex64>) -> Result<ModuleElement> {
        if coords.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: coords.len() });
        }
        if !all_finite(&coords) {
            return Err(Error::NonFinite("module element coordinates"));
        }
        Ok(self.wrap(coords))
    }

    pub fn element_from_pairs(&self, pairs: &[[f64; 2]]) -> Result<ModuleElement> {
        self.element(from_pairs(pairs))
    }

    pub fn zero(&self) -> ModuleElement {
        self.wrap(vec![ZERO; self.dim])
    }

    pub fn basis(&self, k: usize) -> ModuleElement {
        self.wrap(unit_vec(self.dim, k))
    }

    /// Views an algebra element as a module element (self-bimodule only).
    pub fn embed(&self, a: &Element) -> Result<ModuleElement> {
        if !self.is_self {
            return Err(Error::Unsupported("the self-bimodule"));
        }
        self.check_elem(a)?;
        Ok(self.wrap(a.coords.clone()))
    }

    /// Views a module element as an algebra element (self-bimodule only).
    pub fn project(&self, x: &ModuleElement) -> Result<Element> {
        if !self.is_self {
            return Err(Error::Unsupported("the self-bimodule"));
        }
        self.check(x)?;
        Ok(self.algebra.wrap(x.coords.clone()))
    }

    pub fn act_left(&self, a: &Element, x: &ModuleElement) -> Result<ModuleElement> {
        self.check_elem(a)?;
        self.check(x)?;
        Ok(self.wrap(self.left_coords(&a.coords, &x.coords)))
    }

    pub fn act_right(&self, x: &ModuleElement, a: &Element) -> Result<ModuleElement> {
        self.check(x)?;
        self.check_elem(a)?;
        Ok(self.wrap(self.right_coords(&x.coords, &a.coords)))
    }

    pub fn add(&self, x: &ModuleElement, y: &ModuleElement) -> Result<ModuleElement> {
        self.check(x)?;
        self.check(y)?;
        Ok(self.wrap(x.coords.iter().zip(&y.coords).map(|(a, b)| a + b).collect()))
    }

    pub fn sub(&self, x: &ModuleElement, y: &ModuleElement) -> Result<ModuleElement> {
        self.check(x)?;
        self.check(y)?;
        Ok(self.wrap(x.coords.iter().zip(&y.coords).map(|(a, b)| a - b).collect()))
    }

    pub fn scale(&self, lambda: Scalar, x: &ModuleElement) -> Result<ModuleElement> {
        self.check(x)?;
        Ok(self.wrap(x.coords.iter().map(|z| lambda * z).collect()))
    }

    pub fn norm(&self, x: &ModuleElement) -> Result<f64> {
        self.check(x)?;
        self.norm_coords(&x.coords)
    }

    pub fn adjoint(&self, x: &ModuleElement) -> Result<ModuleElement> {
        self.check(x)?;
        Ok(self.wrap(self.adjoint_coords(&x.coords)?))
    }
}

fn unit_vec(len: usize, i: usize) -> Vec<Complex64> {
    let mut v = vec![ZERO; len];
    v[i] = ONE;
    v
}
