#pragma once

#include "dse/types.hpp"

namespace dse {

/// x^a = [x; conj(x)].
struct AugmentedVector {
    CVector top;
    CVector bottom;

    CVector stacked() const;
};

AugmentedVector augment(const CVector& x);

/// Second-order statistics of a complex vector: covariance Gamma = E[w w^H]
/// and pseudocovariance C = E[w w^T]. The augmented block is
/// [[Gamma, C], [conj(C), conj(Gamma)]].
struct AugmentedCovariance {
    CMatrix gamma;
    CMatrix c;

    Eigen::Index dimension() const { return gamma.rows(); }

    static AugmentedCovariance zero(Eigen::Index n);
    /// Proper (circular) covariance: C = 0.
    static AugmentedCovariance proper(CMatrix gamma);

    /// Throws ValidationError unless Gamma is Hermitian, C symmetric and the
    /// augmented block positive semidefinite, all within `rel_tol` of scale.
    void validate(double rel_tol = 1e-10) const;

    /// Smallest eigenvalue of the Hermitian part of Gamma.
    double min_gamma_eigenvalue() const;
};

/// Assembles the 2n x 2n augmented block from the Hermitian part of Gamma and
/// the symmetric part of C, so the output is exactly Hermitian.
CMatrix assemble_block(const AugmentedCovariance& cov);

/// Projects a 2n x 2n augmented-structured matrix back onto (Gamma, C).
AugmentedCovariance project_block(const CMatrix& block);

/// Floors negative eigenvalues of the augmented block at zero.
AugmentedCovariance repair_psd(const AugmentedCovariance& cov);

struct NoiseStatistics {
    AugmentedCovariance covariance;
    CVector mean;
    Eigen::Index samples = 0;
};

/// Sample covariance and pseudocovariance about the sample mean, one sample
/// per row. Divides by the sample count.
NoiseStatistics estimate_noise_covariance(const CMatrix& samples);

}  // namespace dse
