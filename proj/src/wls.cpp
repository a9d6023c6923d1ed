#include "dse/wls.hpp"

namespace dse {

WlsConfig WlsConfig::from_covariance(const AugmentedCovariance& r) {
    WlsConfig out;
    out.weights = r.gamma.diagonal().real().cwiseInverse();
    return out;
}

WlsSolver::WlsSolver(const CMatrix& h, const WlsConfig& config) : n_(h.cols()) {
    require_shape(config.weights.size() == h.rows(), "WLS needs one weight per measurement row");
    if ((config.weights.array() <= 0.0).any() || !config.weights.allFinite())
        throw ArgumentError("WLS weights must be strictly positive and finite");
    sqrt_w_ = config.weights.cwiseSqrt();
    qr_.compute(sqrt_w_.asDiagonal() * h);
    if (qr_.rank() < n_)
        throw ObservabilityError("WLS observation matrix has rank " + std::to_string(qr_.rank()) + " < " +
                                 std::to_string(n_));
}

CVector WlsSolver::solve(const CVector& y) const {
    require_shape(y.size() == sqrt_w_.size(), "WLS measurement length does not match H rows");
    return qr_.solve(CVector(sqrt_w_.cast<Complex>().cwiseProduct(y)));
}

CVector wls_estimate(const CMatrix& h, const CVector& y, const WlsConfig& config) {
    return WlsSolver(h, config).solve(y);
}

CMatrix wls_track(const WlsSolver& solver, const CMatrix& measurements, Execution mode) {
    CMatrix out(measurements.rows(), solver.state_dim());
    if (mode == Execution::parallel) {
#pragma omp parallel for schedule(static)
        for (Eigen::Index t = 0; t < measurements.rows(); ++t)
            out.row(t) = solver.solve(measurements.row(t).transpose()).transpose();
    } else {
        for (Eigen::Index t = 0; t < measurements.rows(); ++t)
            out.row(t) = solver.solve(measurements.row(t).transpose()).transpose();
    }
    return out;
}

}  // namespace dse
