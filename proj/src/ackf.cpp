#include "dse/ackf.hpp"

#include <string>

namespace dse {

namespace {

struct AugmentedGain {
    CMatrix k;  // 2n x 2m
    CMatrix pht;
    CMatrix ha;
    CMatrix pa;
    CMatrix ra;
    bool regularized = false;
    double rcond = 1.0;
};

CMatrix scaled_r_block(const AugmentedCovariance& r, std::optional<std::span<const double>> r_scale) {
    if (!r_scale) return assemble_block(r);
    const auto m = r.dimension();
    require_shape(static_cast<Eigen::Index>(r_scale->size()) == m, "R scale must have one entry per row");
    RVector s(m);
    for (Eigen::Index k = 0; k < m; ++k) s(k) = std::sqrt((*r_scale)[static_cast<size_t>(k)]);
    AugmentedCovariance scaled{s.asDiagonal() * r.gamma * s.asDiagonal(), s.asDiagonal() * r.c * s.asDiagonal()};
    return assemble_block(scaled);
}

AugmentedGain augmented_gain(const FilterState& state, const StateSpaceModel& model,
                             const FilterOptions& options,
                             std::optional<std::span<const double>> r_scale) {
    require_shape(state.x_hat.size() == model.state_dim() && state.p.dimension() == model.state_dim(),
                  "filter state dimension does not match the model");
    AugmentedGain g;
    g.ha = augmented_observation(model.h);
    g.pa = assemble_block(state.p);
    g.ra = scaled_r_block(model.r, r_scale);
    g.pht = g.pa * g.ha.adjoint();
    const CMatrix& pht = g.pht;
    CMatrix s = g.ha * pht + g.ra;
    s = 0.5 * (s + s.adjoint());

    Eigen::LLT<CMatrix> llt(s);
    g.rcond = llt.info() == Eigen::Success ? llt.rcond() : 0.0;
    if (g.rcond < options.min_rcond) {
        const double eps = 1e-12 * s.trace().real() / static_cast<double>(model.measurement_dim());
        s.diagonal().array() += eps;
        llt.compute(s);
        g.regularized = true;
        if (llt.info() != Eigen::Success)
            throw ObservabilityError("innovation covariance is singular after regularization");
    }
    // K = P H^H S^-1 = (S^-1 H P)^H, using the Hermitian symmetry of S and P.
    g.k = llt.solve(pht.adjoint()).adjoint();
    return g;
}

}  // namespace

StateSpaceModel StateSpaceModel::random_walk(CMatrix h, AugmentedCovariance q, AugmentedCovariance r) {
    const auto n = h.cols();
    return {CMatrix::Identity(n, n), std::move(h), std::move(q), std::move(r)};
}

void StateSpaceModel::validate() const {
    const auto n = state_dim();
    const auto m = measurement_dim();
    require_shape(f.rows() == n && f.cols() == n, "F must be square of state dimension");
    require_shape(q.dimension() == n, "Q dimension must equal the state dimension");
    require_shape(r.dimension() == m, "R dimension must equal the measurement dimension");
    q.validate();
    r.validate();
}

CMatrix augmented_observation(const CMatrix& h) {
    CMatrix out = CMatrix::Zero(2 * h.rows(), 2 * h.cols());
    out.topLeftCorner(h.rows(), h.cols()) = h;
    out.bottomRightCorner(h.rows(), h.cols()) = h.conjugate();
    return out;
}

FilterState init(const CVector& x0, const AugmentedCovariance& p0) {
    require_shape(p0.dimension() == x0.size(),
                  "initial covariance dimension " + std::to_string(p0.dimension()) +
                      " does not match state length " + std::to_string(x0.size()));
    p0.validate();
    return {x0, p0, 0, {}};
}

FilterState predict(const FilterState& state, const StateSpaceModel& model) {
    const auto n = model.state_dim();
    require_shape(state.x_hat.size() == n && model.f.rows() == n,
                  "filter state dimension does not match the model");
    FilterState out = state;
    // F^a P^a F^aH in block form: Gamma -> F Gamma F^H, C -> F C F^T.
    out.x_hat = model.f * state.x_hat;
    out.p.gamma = model.f * state.p.gamma * model.f.adjoint() + model.q.gamma;
    out.p.c = model.f * state.p.c * model.f.transpose() + model.q.c;
    out.p.gamma = 0.5 * (out.p.gamma + out.p.gamma.adjoint()).eval();
    out.p.c = 0.5 * (out.p.c + out.p.c.transpose()).eval();
    out.step = state.step + 1;
    return out;
}

GainBlocks gain(const FilterState& state, const StateSpaceModel& model, const FilterOptions& options) {
    auto g = augmented_gain(state, model, options, std::nullopt);
    const auto n = model.state_dim();
    const auto m = model.measurement_dim();
    return {g.k.topLeftCorner(n, m), g.k.topRightCorner(n, m), g.regularized, g.rcond};
}

CVector innovation(const FilterState& state, const CVector& y, const StateSpaceModel& model) {
    require_shape(y.size() == model.measurement_dim(),
                  "measurement length " + std::to_string(y.size()) + " does not match H rows " +
                      std::to_string(model.measurement_dim()));
    return y - model.h * state.x_hat;
}

FilterState update(const FilterState& state, const CVector& y, const StateSpaceModel& model,
                   const FilterOptions& options, std::optional<std::span<const double>> r_scale) {
    const CVector e = innovation(state, y, model);
    auto g = augmented_gain(state, model, options, r_scale);
    const auto n = model.state_dim();
    const auto m = model.measurement_dim();

    FilterState out = state;
    out.x_hat = state.x_hat + g.k.topLeftCorner(n, m) * e + g.k.topRightCorner(n, m) * e.conjugate();

    CMatrix pa;
    if (options.covariance_form == CovarianceForm::joseph) {
        const CMatrix ikh = CMatrix::Identity(2 * n, 2 * n) - g.k * g.ha;
        pa = ikh * g.pa * ikh.adjoint() + g.k * g.ra * g.k.adjoint();
    } else {
        // (I - K H) P with H P = (P H^H)^H.
        pa = g.pa - g.k * g.pht.adjoint();
    }
    out.p = project_block(pa);
    out.diagnostics.last_rcond = g.rcond;
    if (g.regularized) ++out.diagnostics.regularized_updates;
    return out;
}

}  // namespace dse
