#include "dse/augmented_complex.hpp"

#include <Eigen/Eigenvalues>

namespace dse {

namespace {

CMatrix hermitian_part(const CMatrix& m) { return 0.5 * (m + m.adjoint()); }
CMatrix symmetric_part(const CMatrix& m) { return 0.5 * (m + m.transpose()); }

double scale_of(const CMatrix& gamma) {
    double s = gamma.diagonal().real().cwiseAbs().maxCoeff();
    return s > 0.0 ? s : 1.0;
}

}  // namespace

CVector AugmentedVector::stacked() const {
    CVector out(top.size() + bottom.size());
    out << top, bottom;
    return out;
}

AugmentedVector augment(const CVector& x) { return {x, x.conjugate()}; }

AugmentedCovariance AugmentedCovariance::zero(Eigen::Index n) {
    return {CMatrix::Zero(n, n), CMatrix::Zero(n, n)};
}

AugmentedCovariance AugmentedCovariance::proper(CMatrix gamma) {
    auto n = gamma.rows();
    return {std::move(gamma), CMatrix::Zero(n, n)};
}

void AugmentedCovariance::validate(double rel_tol) const {
    const auto n = gamma.rows();
    require_shape(gamma.cols() == n && c.rows() == n && c.cols() == n,
                  "augmented covariance blocks must be square and of equal size");
    if (n == 0) return;
    const double scale = scale_of(gamma);
    if ((gamma - gamma.adjoint()).cwiseAbs().maxCoeff() > rel_tol * scale)
        throw ValidationError("covariance block is not Hermitian");
    if ((c - c.transpose()).cwiseAbs().maxCoeff() > rel_tol * scale)
        throw ValidationError("pseudocovariance block is not symmetric");
    Eigen::SelfAdjointEigenSolver<CMatrix> eig(assemble_block(*this), Eigen::EigenvaluesOnly);
    if (eig.eigenvalues().minCoeff() < -rel_tol * scale)
        throw ValidationError("augmented covariance has a negative eigenvalue (" +
                              std::to_string(eig.eigenvalues().minCoeff()) + ")");
}

double AugmentedCovariance::min_gamma_eigenvalue() const {
    if (gamma.rows() == 0) return 0.0;
    Eigen::SelfAdjointEigenSolver<CMatrix> eig(hermitian_part(gamma), Eigen::EigenvaluesOnly);
    return eig.eigenvalues().minCoeff();
}

CMatrix assemble_block(const AugmentedCovariance& cov) {
    const auto n = cov.dimension();
    require_shape(cov.gamma.cols() == n && cov.c.rows() == n && cov.c.cols() == n,
                  "augmented covariance blocks must be square and of equal size");
    if (n > 0 && (cov.gamma - cov.gamma.adjoint()).cwiseAbs().maxCoeff() > 1e-8 * scale_of(cov.gamma))
        throw ValidationError("covariance block is not Hermitian");
    const CMatrix g = hermitian_part(cov.gamma);
    const CMatrix c = symmetric_part(cov.c);
    CMatrix out(2 * n, 2 * n);
    out << g, c, c.conjugate(), g.conjugate();
    return out;
}

AugmentedCovariance project_block(const CMatrix& block) {
    require_shape(block.rows() == block.cols() && block.rows() % 2 == 0,
                  "augmented block must be square with even size");
    const auto n = block.rows() / 2;
    CMatrix g = 0.5 * (block.topLeftCorner(n, n) + block.bottomRightCorner(n, n).conjugate());
    CMatrix c = 0.5 * (block.topRightCorner(n, n) + block.bottomLeftCorner(n, n).conjugate());
    return {hermitian_part(g), symmetric_part(c)};
}

AugmentedCovariance repair_psd(const AugmentedCovariance& cov) {
    if (cov.dimension() == 0) return cov;
    Eigen::SelfAdjointEigenSolver<CMatrix> eig(assemble_block(cov));
    if (eig.eigenvalues().minCoeff() >= 0.0)
        return {hermitian_part(cov.gamma), symmetric_part(cov.c)};
    RVector values = eig.eigenvalues().cwiseMax(0.0);
    CMatrix rebuilt = eig.eigenvectors() * values.cast<Complex>().asDiagonal() * eig.eigenvectors().adjoint();
    return project_block(rebuilt);
}

NoiseStatistics estimate_noise_covariance(const CMatrix& samples) {
    const auto count = samples.rows();
    if (count < 2)
        throw ArgumentError("noise covariance needs at least 2 samples, got " + std::to_string(count));
    NoiseStatistics out;
    out.samples = count;
    out.mean = samples.colwise().mean().transpose();
    const CMatrix centered = samples.rowwise() - out.mean.transpose();
    // Rows are samples s^T: sum s s^H = X^T conj(X), sum s s^T = X^T X.
    CMatrix gamma = centered.transpose() * centered.conjugate() / static_cast<double>(count);
    CMatrix c = centered.transpose() * centered / static_cast<double>(count);
    out.covariance = repair_psd({hermitian_part(gamma), symmetric_part(c)});
    return out;
}

}  // namespace dse
