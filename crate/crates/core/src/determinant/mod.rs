//! Determinants of first-order periodic operators `𝒟 = −i d/dt + A(t)`.
//!
//! `det₊ 𝒟 = det(Id − T(2π))` and
//! `det₋ 𝒟 = (−1)^N e^{i∫Tr A dt} det(Id − T(2π))`, where `T` is the
//! monodromy of `T' = −iAT`. For `D_m = −i d/dt − i m H(t)` the monodromy
//! grows like `e^{2πcm}` along F⁻, so the growing part is never formed:
//! it is carried through its inverse and a log-determinant.

mod hat;
mod monodromy;
mod operator;
mod theorem;

pub use hat::{
    build_hat_blocks, det_phase_hat, det_phase_hat_with, monodromy_hat, spectral_radius_check,
    HatBlocks, RadiusRow, SpectralRadiusReport,
};
pub use monodromy::{
    default_steps, det_pm_bfk, monodromy, monodromy_dichotomy, Blockwise, DetPair, Monodromy,
    OdeOptions, DEFAULT_STEPS,
};
pub use operator::{Coefficient, CoefficientFn, FirstOrderOperator, OperatorLabel};
pub use theorem::{
    conjugate_identity_check, deformation_sweep, det_pm, gamma_for, is_nonincreasing,
    prepare_blocks, theorem_verify, validate_mlist, ConjugateReport, DeformationRow,
    DeformationSweep, DetPhaseReport, FullPhases, Route, RouteOptions, TheoremOptions,
    TheoremReport,
};

#[cfg(test)]
mod tests;
