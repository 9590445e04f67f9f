//! Stability of generalized derivations on finite-dimensional Banach
//! algebras, computed by the direct method.
//!
//! An approximate pair `(f, g)` is built from an exact generalized derivation
//! plus a deterministic noise field. [`hyers`] recovers `μ` and `δ` by dyadic
//! extrapolation with certified gaps; [`verify`] checks the inequalities and
//! identities on seeded samples.

pub mod algebra;
pub mod control;
pub mod error;
pub mod hyers;
pub mod linalg;
pub mod maps;
pub mod rng;
pub mod verify;

pub use algebra::{Algebra, AlgebraDescriptor, Bimodule, Element, Involution, ModuleElement, ModuleNorm, NormKind, Scalar};
pub use control::{ControlFunction, PhiTilde, PowerTerm, SeriesCertificate};
pub use error::{Error, Result};
pub use hyers::{
    assemble_delta_limit, assemble_mu, extract_delta_algebraic, extract_delta_limit, extrapolate_mu, scalar_decompose,
    AssembledMap, ExtrapolationTrace, ScalarDecomposition,
};
pub use linalg::CMat;
pub use maps::{
    inner_generalized, right_multiplier, ApproximateMapPair, GeneralizedDerivationPair, LinearMap, NoiseKind,
    PerturbationSpec, ScaleMode, Scaled, Slot,
};
pub use num_complex::Complex64;
pub use verify::{
    certify_stability_bound, check_generalized_derivation, check_leibniz, check_star_preservation,
    residual_master_inequality, superstability_probe, unitary_decompose, LambdaSet, ResidualReport, SamplerConfig,
    StarReport, SuperstabilityConfig, SuperstabilityReport, UnitaryDecomposition,
};
