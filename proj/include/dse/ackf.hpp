#pragma once

#include <optional>
#include <span>

#include "dse/augmented_complex.hpp"

namespace dse {

/// Linear complex state-space model x_i = F x_{i-1} + w_i, y_i = H x_i + n_i
/// with widely-linear noise statistics.
struct StateSpaceModel {
    CMatrix f;
    CMatrix h;
    AugmentedCovariance q;
    AugmentedCovariance r;

    Eigen::Index state_dim() const { return h.cols(); }
    Eigen::Index measurement_dim() const { return h.rows(); }

    /// Model with F = identity.
    static StateSpaceModel random_walk(CMatrix h, AugmentedCovariance q, AugmentedCovariance r);

    void validate() const;
};

struct FilterDiagnostics {
    long regularized_updates = 0;
    double last_rcond = 1.0;
};

struct FilterState {
    CVector x_hat;
    AugmentedCovariance p;
    long step = 0;
    FilterDiagnostics diagnostics;
};

/// Top block row of the augmented Kalman gain.
struct GainBlocks {
    CMatrix g11;
    CMatrix g12;
    bool regularized = false;
    double rcond = 1.0;
};

enum class CovarianceForm {
    subtractive,  // P = (I - G H) P
    joseph,       // P = (I - G H) P (I - G H)^H + G R G^H
};

struct FilterOptions {
    CovarianceForm covariance_form = CovarianceForm::subtractive;
    /// Innovation covariance is regularized when its reciprocal condition
    /// estimate falls below this.
    double min_rcond = 1e-12;
};

FilterState init(const CVector& x0, const AugmentedCovariance& p0);

FilterState predict(const FilterState& state, const StateSpaceModel& model);

GainBlocks gain(const FilterState& state, const StateSpaceModel& model,
                const FilterOptions& options = {});

/// y - H x_hat.
CVector innovation(const FilterState& state, const CVector& y, const StateSpaceModel& model);

/// Measurement update tracking x only. `r_scale`, when given, multiplies the
/// variance of measurement row k by r_scale[k] for this step.
FilterState update(const FilterState& state, const CVector& y, const StateSpaceModel& model,
                   const FilterOptions& options = {},
                   std::optional<std::span<const double>> r_scale = std::nullopt);

/// Augmented observation matrix blockdiag(H, conj(H)).
CMatrix augmented_observation(const CMatrix& h);

}  // namespace dse
