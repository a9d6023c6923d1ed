#pragma once

#include "dse/measurement.hpp"

namespace dse {

/// Snapshot weighted least squares on the linear measurement model.
struct WlsConfig {
    RVector weights;  // per row, strictly positive
    /// The linear model solves in one pass; kept for reporting.
    int max_iterations = 1;

    /// weights = 1 / variance taken from the diagonal of Gamma_R.
    static WlsConfig from_covariance(const AugmentedCovariance& r);
};

/// argmin_x sum_r w_r |y_r - (H x)_r|^2 via a pivoted QR of W^(1/2) H.
CVector wls_estimate(const CMatrix& h, const CVector& y, const WlsConfig& config);

/// Factored solver reused across snapshots with a fixed H and weights.
class WlsSolver {
public:
    WlsSolver(const CMatrix& h, const WlsConfig& config);
    CVector solve(const CVector& y) const;
    Eigen::Index state_dim() const { return n_; }

private:
    Eigen::Index n_ = 0;
    RVector sqrt_w_;
    Eigen::ColPivHouseholderQR<CMatrix> qr_;
};

/// Solves every row of `measurements` (one snapshot per row).
CMatrix wls_track(const WlsSolver& solver, const CMatrix& measurements, Execution mode = Execution::parallel);

}  // namespace dse
