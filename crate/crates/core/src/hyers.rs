//! The direct method: `μ(a) = lim f(2ⁿa)/2ⁿ`, `δ(c) = lim 2⁻ⁿ g(2ⁿc)`, and
//! the algebraic shortcut `δ(a) = μ(a) − a·μ(1)`.
//!
//! Extrapolations stop at a fixed depth `N` and carry a certified gap: the
//! tail `½ Σ_{k≥N} 2⁻ᵏ φ(2ᵏa, 2ᵏa, 0, 0)` of the control series bounds the
//! distance from `s_N` to the limit whenever the pair satisfies the master
//! inequality for `φ`.

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algebra::{Bimodule, Element, ModuleElement, Scalar};
use crate::control::ControlFunction;
use crate::error::{Error, Result};
use crate::linalg::CMat;
use crate::maps::{ApproximateMapPair, LinearMap, Scaled, MAX_LOG2_SCALE};

/// Absolute part of the ℂ-linearity allowance.
pub const J_COMMUTATION_TOLERANCE: f64 = 1e-8;

const I: Complex64 = Complex64::new(0.0, 1.0);

/// The sequence `sₙ = f(2ⁿa)/2ⁿ` (or `2⁻ⁿg(2ⁿc)`) for `n = 0..=N`.
#[derive(Debug, Clone)]
pub struct ExtrapolationTrace {
    pub argument: Element,
    pub terms: Vec<ModuleElement>,
    /// `‖s_{n+1} − s_n‖`, length `N`.
    pub increments: Vec<f64>,
    pub limit: ModuleElement,
    pub certified_gap: f64,
}

/// One line of a trace dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub n: u32,
    pub coords: Vec<[f64; 2]>,
    pub increment_norm: Option<f64>,
}

impl ExtrapolationTrace {
    pub fn depth(&self) -> u32 {
        (self.terms.len() - 1) as u32
    }

    /// Successive increment ratios `‖s_{n+2} − s_{n+1}‖ / ‖s_{n+1} − s_n‖`;
    /// `None` where the earlier increment is zero.
    pub fn increment_ratios(&self) -> Vec<Option<f64>> {
        self.increments
            .windows(2)
            .map(|w| (w[0] > 0.0).then(|| w[1] / w[0]))
            .collect()
    }

    pub fn records(&self) -> Vec<TraceRecord> {
        self.terms
            .iter()
            .enumerate()
            .map(|(n, s)| TraceRecord {
                n: n as u32,
                coords: s.to_pairs(),
                increment_norm: self.increments.get(n).copied(),
            })
            .collect()
    }

    /// JSON lines, one record per `n`.
    pub fn to_json_lines(&self) -> Result<String> {
        let mut out = String::new();
        for r in self.records() {
            out.push_str(&serde_json::to_string(&r)?);
            out.push('\n');
        }
        Ok(out)
    }
}

fn check_depth(depth: u32) -> Result<()> {
    if !(1..=MAX_LOG2_SCALE).contains(&depth) {
        return Err(Error::OutOfRange(format!("extrapolation depth {depth} outside 1..={MAX_LOG2_SCALE}")));
    }
    Ok(())
}

fn build_trace(
    bimodule: &Bimodule,
    argument: &Element,
    depth: u32,
    gap: f64,
    eval: impl Fn(u32) -> Result<Scaled>,
) -> Result<ExtrapolationTrace> {
    check_depth(depth)?;
    let terms = (0..=depth)
        .map(|n| eval(n).map(|s| s.mantissa))
        .collect::<Result<Vec<_>>>()?;
    let increments = terms
        .windows(2)
        .map(|w| bimodule.norm(&bimodule.sub(&w[1], &w[0])?))
        .collect::<Result<Vec<_>>>()?;
    Ok(ExtrapolationTrace {
        argument: argument.clone(),
        limit: terms[depth as usize].clone(),
        terms,
        increments,
        certified_gap: gap,
    })
}

/// Tail bound on `‖f(2ⁿa)/2ⁿ − μ(a)‖` from `‖a‖`.
pub fn mu_gap(cf: &ControlFunction, a_norm: f64, depth: u32) -> f64 {
    cf.tail_from_norms([a_norm, a_norm, 0.0, 0.0], depth)
}

/// `μ(a) ≈ f(2ᴺa)/2ᴺ`.
pub fn extrapolate_mu(pair: &ApproximateMapPair, cf: &ControlFunction, a: &Element, depth: u32) -> Result<ExtrapolationTrace> {
    let bm = pair.bimodule();
    let gap = mu_gap(cf, bm.algebra().norm(a)?, depth);
    build_trace(bm, a, depth, gap, |n| pair.evaluate_f(a, n))
}

/// Certificate for `‖2⁻ᴺg(2ᴺc) − δ(c)‖`, following the route through
/// `f(2²ⁿc) − 2ⁿc·f(2ⁿ·1) − g(2ⁿc)·1`:
/// `tail(c, 2N) + ‖c‖·tail(1, N) + 2⁻²ᴺ φ(0, 0, 2ᴺc, 2ᴺ·1)`.
pub fn delta_gap(cf: &ControlFunction, c_norm: f64, unit_norm: f64, depth: u32) -> f64 {
    let doubled = 2 * depth;
    cf.tail_from_norms([c_norm, c_norm, 0.0, 0.0], doubled)
        + c_norm * cf.tail_from_norms([unit_norm, unit_norm, 0.0, 0.0], depth)
        + (-(depth as f64)).exp2() * cf.phi_dyadic_from_norms([0.0, 0.0, c_norm, unit_norm], depth)
}

/// `δ(c) ≈ 2⁻ᴺ g(2ᴺc)`.
pub fn extract_delta_limit(pair: &ApproximateMapPair, cf: &ControlFunction, c: &Element, depth: u32) -> Result<ExtrapolationTrace> {
    let bm = pair.bimodule();
    let alg = bm.algebra();
    let gap = delta_gap(cf, alg.norm(c)?, alg.norm(&alg.one())?, depth);
    build_trace(bm, c, depth, gap, |n| pair.evaluate_g(c, n))
}

/// A linear map assembled column by column from extrapolation traces.
#[derive(Debug, Clone)]
pub struct AssembledMap {
    pub map: LinearMap,
    /// Bound on `‖column_j − exact(e_j)‖` in the module norm.
    pub column_gaps: Vec<f64>,
    /// `max_j ‖s(i·e_j) − i·s(e_j)‖`: the failure of the real-linear
    /// assembled operator to commute with multiplication by `i`.
    pub j_residual: f64,
    pub depth: u32,
}

impl AssembledMap {
    /// `Σ_j |a_j|·gap_j`, a bound on `‖assembled(a) − exact(a)‖`.
    pub fn certificate_for(&self, a: &Element) -> f64 {
        a.coords().iter().zip(&self.column_gaps).map(|(z, g)| z.norm() * g).sum()
    }

    pub fn max_gap(&self) -> f64 {
        self.column_gaps.iter().fold(0.0, |m, g| m.max(*g))
    }
}

fn assemble(
    bimodule: &Arc<Bimodule>,
    depth: u32,
    trace: impl Fn(&Element) -> Result<ExtrapolationTrace> + Sync,
) -> Result<AssembledMap> {
    check_depth(depth)?;
    let alg = bimodule.algebra();
    let d = alg.dim();
    // Arguments e_0..e_{d-1}, then i·e_0..i·e_{d-1}.
    let args: Vec<Element> = (0..2 * d)
        .map(|t| {
            let e = alg.basis(t % d);
            if t < d { e } else { alg.scale(I, &e).expect("same algebra") }
        })
        .collect();
    let traces = args.par_iter().map(&trace).collect::<Result<Vec<_>>>()?;

    let mut j_residual: f64 = 0.0;
    let mut allowance: f64 = 0.0;
    let mut columns = Vec::with_capacity(d);
    let mut gaps = Vec::with_capacity(d);
    for j in 0..d {
        let (re, im) = (&traces[j], &traces[d + j]);
        let s_re = re.limit.coords();
        let s_im = im.limit.coords();
        let defect: Vec<Complex64> = s_im.iter().zip(s_re).map(|(y, x)| y - I * x).collect();
        j_residual = j_residual.max(bimodule.norm_coords(&defect)?);
        allowance = allowance.max(re.certified_gap + im.certified_gap);
        // ℂ-linear part of the real-linear operator: (s(e_j) − i·s(i·e_j)) / 2
        columns.push(s_re.iter().zip(s_im).map(|(x, y)| (x - I * y) * 0.5).collect::<Vec<_>>());
        gaps.push(0.5 * (re.certified_gap + im.certified_gap));
    }
    let allowed = J_COMMUTATION_TOLERANCE + allowance;
    if j_residual > allowed {
        return Err(Error::ConjugateLinearContamination { residual: j_residual, allowance: allowed });
    }
    let map = LinearMap::from_basis_images(bimodule.clone(), |j| Ok(columns[j].clone()))?;
    Ok(AssembledMap { map, column_gaps: gaps, j_residual, depth })
}

/// Assembles `μ` from traces on every `e_j` and `i·e_j`.
///
/// Fails with [`Error::ConjugateLinearContamination`] when the traces on
/// `i·e_j` and `e_j` disagree by more than `1e−8` plus their certified gaps.
pub fn assemble_mu(pair: &ApproximateMapPair, cf: &ControlFunction, depth: u32) -> Result<AssembledMap> {
    assemble(pair.bimodule(), depth, |a| extrapolate_mu(pair, cf, a, depth))
}

/// Assembles `δ` through the limit route on every `e_j` and `i·e_j`.
pub fn assemble_delta_limit(pair: &ApproximateMapPair, cf: &ControlFunction, depth: u32) -> Result<AssembledMap> {
    assemble(pair.bimodule(), depth, |c| extract_delta_limit(pair, cf, c, depth))
}

/// `δ(a) = μ(a) − a·μ(1)`.
pub fn extract_delta_algebraic(mu: &LinearMap) -> Result<LinearMap> {
    let bm = mu.target().clone();
    let alg = bm.algebra().clone();
    let mu_one = mu.apply_coords(&alg.one().coords().to_vec());
    LinearMap::from_basis_images(bm.clone(), |j| {
        let e = alg.basis(j);
        let a_mu_one = bm.left_coords(e.coords(), &mu_one);
        Ok(mu.column(j).iter().zip(&a_mu_one).map(|(x, y)| x - y).collect())
    })
}

/// Per-column bounds on `‖δ_alg(e_j) − δ(e_j)‖` when `δ_alg` comes from an
/// assembled `μ`: `gap_j + ‖e_j‖·Σ_k |1_k|·gap_k`.
pub fn algebraic_delta_gaps(mu: &AssembledMap) -> Result<Vec<f64>> {
    let alg = mu.map.target().algebra().clone();
    let one_gap = mu.certificate_for(&alg.one());
    (0..alg.dim())
        .map(|j| Ok(mu.column_gaps[j] + alg.norm(&alg.basis(j))? * one_gap))
        .collect()
}

/// `γ = ([θ₁] + γ₁) + i([θ₂] + γ₂)` with `γᵢ = (λᵢ₁ + λᵢ₂)/2`, `|λᵢⱼ| = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalarDecomposition {
    pub gamma: Scalar,
    pub integer_parts: (f64, f64),
    pub fractional: (f64, f64),
    pub unimodular: [[Scalar; 2]; 2],
}

fn split_real(theta: f64) -> (f64, f64) {
    let mut whole = theta.floor();
    let mut frac = theta - whole;
    if frac >= 1.0 {
        // tiny negative θ: 1 − |θ| rounded up to 1
        whole += 1.0;
        frac = 0.0;
    }
    (whole, frac)
}

fn unimodular_pair(gamma: f64) -> [Scalar; 2] {
    let s = ((1.0 - gamma) * (1.0 + gamma)).max(0.0).sqrt();
    [Complex64::new(gamma, s), Complex64::new(gamma, -s)]
}

/// Splits `γ` into integer parts and fractional parts written as averages of
/// two unimodular numbers `γᵢ ± i√(1 − γᵢ²)`.
pub fn scalar_decompose(gamma: Scalar) -> Result<ScalarDecomposition> {
    if !gamma.re.is_finite() || !gamma.im.is_finite() {
        return Err(Error::NonFinite("scalar"));
    }
    let (w1, f1) = split_real(gamma.re);
    let (w2, f2) = split_real(gamma.im);
    Ok(ScalarDecomposition {
        gamma,
        integer_parts: (w1, w2),
        fractional: (f1, f2),
        unimodular: [unimodular_pair(f1), unimodular_pair(f2)],
    })
}

impl ScalarDecomposition {
    /// Rebuilds `γ` from the integer parts and the unimodular averages.
    pub fn recombine(&self) -> Scalar {
        let avg = |pair: &[Scalar; 2]| (pair[0] + pair[1]) * 0.5;
        let g1 = avg(&self.unimodular[0]);
        let g2 = avg(&self.unimodular[1]);
        Complex64::new(self.integer_parts.0 + g1.re, self.integer_parts.1 + g2.re)
            + Complex64::new(-g2.im, g1.im)
    }
}

/// `μ(λa) = λμ(a)` through the decomposition: apply `μ` to `a`, then combine
/// `[θ₁]μ(a) + ½(λ₁₁ + λ₁₂)μ(a) + i([θ₂]μ(a) + ½(λ₂₁ + λ₂₂)μ(a))`.
pub fn scale_through_decomposition(dec: &ScalarDecomposition, image: &[Complex64]) -> Vec<Complex64> {
    let [l1, l2] = dec.unimodular;
    image
        .iter()
        .map(|x| {
            let re_part = dec.integer_parts.0 * x + (l1[0] * x + l1[1] * x) * 0.5;
            let im_part = dec.integer_parts.1 * x + (l2[0] * x + l2[1] * x) * 0.5;
            re_part + I * im_part
        })
        .collect()
}

/// Matrix of the real-linear operator `[Re; Im] ↦ [Re; Im]` induced by a
/// complex `m × d` matrix, used by diagnostics.
pub fn realify_map(matrix: &CMat) -> Vec<Vec<f64>> {
    let (m, d) = (matrix.rows(), matrix.cols());
    let mut out = vec![vec![0.0; 2 * d]; 2 * m];
    for i in 0..m {
        for j in 0..d {
            let z = matrix[(i, j)];
            out[i][j] = z.re;
            out[i][j + d] = -z.im;
            out[i + m][j] = z.im;
            out[i + m][j + d] = z.re;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::Algebra;
    use crate::maps::{inner_generalized, right_multiplier, PerturbationSpec, ScaleMode};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn m2_pair(f: PerturbationSpec, g: PerturbationSpec) -> ApproximateMapPair {
        let alg = Arc::new(Algebra::matrix(2).unwrap());
        let bm = Arc::new(Bimodule::self_bimodule(alg));
        let x = bm.element(vec![c(1.0, 0.0), c(0.5, -1.0), c(0.0, 2.0), c(-1.0, 0.0)]).unwrap();
        let y = bm.element(vec![c(0.0, 1.0), c(0.0, 0.0), c(1.0, 0.0), c(0.25, 0.0)]).unwrap();
        ApproximateMapPair::new(inner_generalized(&bm, &x, &y).unwrap(), f, g).unwrap()
    }

    #[test]
    fn zero_perturbation_trace_is_constant() {
        let pair = m2_pair(PerturbationSpec::zero(), PerturbationSpec::zero());
        let cf = ControlFunction::constant(0.1).unwrap();
        let a = pair.bimodule().algebra().random_element(1, 0);
        let t = extrapolate_mu(&pair, &cf, &a, 20).unwrap();
        assert!(t.terms.iter().all(|s| *s == t.terms[0]));
        assert!(t.increments.iter().all(|x| *x == 0.0));
        assert_eq!(t.limit, pair.exact.mu.apply(&a).unwrap());
        assert!((t.certified_gap - 0.1 * (-20f64).exp2()).abs() < 1e-20);
    }

    #[test]
    fn power_noise_increments_decay_geometrically() {
        let p = 0.5;
        let pair = m2_pair(PerturbationSpec::power(0.1, p, 3, ScaleMode::ScaleInvariantDirection), PerturbationSpec::zero());
        let cf = ControlFunction::power(0.1, p).unwrap();
        let a = pair.bimodule().algebra().random_element(2, 0);
        let t = extrapolate_mu(&pair, &cf, &a, 24).unwrap();
        let expected = (p - 1.0).exp2();
        for r in &t.increment_ratios()[4..20] {
            assert!((r.unwrap() - expected).abs() < 1e-6);
        }
    }

    #[test]
    fn zero_argument_trace() {
        let pair = m2_pair(PerturbationSpec::bounded(0.5, 1, ScaleMode::ScaleSensitiveDirection), PerturbationSpec::zero());
        let cf = ControlFunction::constant(0.5).unwrap();
        let zero = pair.bimodule().algebra().zero();
        let t = extrapolate_mu(&pair, &cf, &zero, 10).unwrap();
        assert!(t.terms.iter().all(|s| s.coords().iter().all(|z| *z == c(0.0, 0.0))));
    }

    #[test]
    fn depth_out_of_range() {
        let pair = m2_pair(PerturbationSpec::zero(), PerturbationSpec::zero());
        let cf = ControlFunction::constant(0.1).unwrap();
        let a = pair.bimodule().algebra().one();
        assert!(matches!(extrapolate_mu(&pair, &cf, &a, 0), Err(Error::OutOfRange(_))));
        assert!(matches!(extrapolate_mu(&pair, &cf, &a, 513), Err(Error::OutOfRange(_))));
    }

    #[test]
    fn exact_pair_assembles_exactly() {
        let pair = m2_pair(PerturbationSpec::zero(), PerturbationSpec::zero());
        let cf = ControlFunction::constant(0.0).unwrap();
        let mu = assemble_mu(&pair, &cf, 8).unwrap();
        assert!(mu.map.matrix().sub(pair.exact.mu.matrix()).frobenius() < 1e-15);
        assert_eq!(mu.j_residual, 0.0);
    }

    #[test]
    fn bounded_noise_assembly_within_gaps() {
        let pair = m2_pair(PerturbationSpec::bounded(0.05, 9, ScaleMode::ScaleSensitiveDirection), PerturbationSpec::zero());
        let cf = ControlFunction::constant(0.05).unwrap();
        let mu = assemble_mu(&pair, &cf, 48).unwrap();
        let bm = pair.bimodule();
        for j in 0..4 {
            let diff: Vec<Complex64> = mu.map.column(j).iter().zip(pair.exact.mu.column(j)).map(|(x, y)| x - y).collect();
            assert!(bm.norm_coords(&diff).unwrap() <= mu.column_gaps[j]);
        }
        assert!(mu.j_residual <= J_COMMUTATION_TOLERANCE);
    }

    #[test]
    fn algebraic_delta_examples() {
        let alg = Arc::new(Algebra::matrix(2).unwrap());
        let bm = Arc::new(Bimodule::self_bimodule(alg.clone()));
        let z = alg.element(vec![c(1.0, 2.0), c(0.0, -1.0), c(3.0, 0.0), c(0.5, 0.5)]).unwrap();
        let pair = right_multiplier(&bm, &z).unwrap();
        let delta = extract_delta_algebraic(&pair.mu).unwrap();
        assert!(delta.matrix().sub(pair.delta.matrix()).frobenius() < 1e-14);
        let zero = LinearMap::zero(bm.clone());
        assert_eq!(extract_delta_algebraic(&zero).unwrap(), zero);
    }

    #[test]
    fn inner_delta_by_both_routes() {
        // δ(a) = μ(a) − aμ(1) with μ(1) = x − y gives xa − ax.
        let pair = m2_pair(PerturbationSpec::zero(), PerturbationSpec::bounded(0.2, 4, ScaleMode::ScaleSensitiveDirection));
        let alg_delta = extract_delta_algebraic(&pair.exact.mu).unwrap();
        assert!(alg_delta.matrix().sub(pair.exact.delta.matrix()).frobenius() < 1e-14);
        let cf = ControlFunction::constant(0.2).unwrap();
        let c0 = pair.bimodule().algebra().random_element(7, 1);
        let t = extract_delta_limit(&pair, &cf, &c0, 30).unwrap();
        let exact = pair.exact.delta.apply(&c0).unwrap();
        let bm = pair.bimodule();
        let dev = bm.norm(&bm.sub(&t.limit, &exact).unwrap()).unwrap();
        assert!(dev <= 2.0 * (-30f64).exp2() * 0.2);
    }

    #[test]
    fn scalar_decompose_examples() {
        let d = scalar_decompose(c(0.5, 0.0)).unwrap();
        assert_eq!(d.fractional.0, 0.5);
        let l = d.unimodular[0][0];
        assert!((l - c(0.5, 3f64.sqrt() / 2.0)).norm() < 1e-15);
        assert!((l.norm() - 1.0).abs() < 1e-15);

        let d = scalar_decompose(c(0.0, 0.0)).unwrap();
        assert_eq!(d.unimodular[0], [c(0.0, 1.0), c(0.0, -1.0)]);
        assert_eq!(d.recombine(), c(0.0, 0.0));

        let d = scalar_decompose(c(2.25, -1.75)).unwrap();
        assert_eq!(d.integer_parts, (2.0, -2.0));
        assert_eq!(d.fractional, (0.25, 0.25));
        assert_eq!(d.recombine(), c(2.25, -1.75));

        let d = scalar_decompose(c(-1e-17, 0.0)).unwrap();
        assert!(d.fractional.0 < 1.0);
        assert!((d.recombine() - c(-1e-17, 0.0)).norm() < 1e-16);
    }

    #[test]
    fn decomposition_realizes_complex_homogeneity() {
        let pair = m2_pair(PerturbationSpec::zero(), PerturbationSpec::zero());
        let alg = pair.bimodule().algebra().clone();
        let a = alg.random_element(11, 0);
        let gamma = c(-3.7, 12.125);
        let dec = scalar_decompose(gamma).unwrap();
        let via = scale_through_decomposition(&dec, pair.exact.mu.apply(&a).unwrap().coords());
        let direct = pair.exact.mu.apply(&alg.scale(gamma, &a).unwrap()).unwrap();
        for (x, y) in via.iter().zip(direct.coords()) {
            assert!((x - y).norm() < 1e-12 * (1.0 + y.norm()));
        }
    }

    #[test]
    fn trace_dump_has_one_record_per_n() {
        let pair = m2_pair(PerturbationSpec::power(0.1, 0.5, 1, ScaleMode::ScaleInvariantDirection), PerturbationSpec::zero());
        let cf = ControlFunction::power(0.1, 0.5).unwrap();
        let a = pair.bimodule().algebra().one();
        let t = extrapolate_mu(&pair, &cf, &a, 5).unwrap();
        let lines = t.to_json_lines().unwrap();
        assert_eq!(lines.lines().count(), 6);
        let last: TraceRecord = serde_json::from_str(lines.lines().last().unwrap()).unwrap();
        assert_eq!(last.n, 5);
        assert_eq!(last.increment_norm, None);
    }

    #[test]
    fn realified_map_commutes_with_j() {
        let pair = m2_pair(PerturbationSpec::zero(), PerturbationSpec::zero());
        let r = realify_map(pair.exact.mu.matrix());
        let (rows, cols) = (r.len(), r[0].len());
        let (m, d) = (rows / 2, cols / 2);
        // (R J)[i][j] vs (J R)[i][j] with J = [[0, -1], [1, 0]] blockwise
        for i in 0..rows {
            for j in 0..cols {
                let rj = if j < d { r[i][j + d] } else { -r[i][j - d] };
                let jr = if i < m { -r[i + m][j] } else { r[i - m][j] };
                assert!((rj - jr).abs() < 1e-15);
            }
        }
    }
}
