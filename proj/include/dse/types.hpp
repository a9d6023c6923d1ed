#pragma once

#include <complex>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace dse {

using Complex = std::complex<double>;
using CVector = Eigen::VectorXcd;
using CMatrix = Eigen::MatrixXcd;
using RVector = Eigen::VectorXd;
using RMatrix = Eigen::MatrixXd;

using BusId = int;
using BranchId = int;

/// Broad failure class; the CLI maps each to an exit status.
enum class ErrorCategory { usage, data, numerical };

class Error : public std::runtime_error {
public:
    Error(ErrorCategory category, const std::string& what)
        : std::runtime_error(what), category_(category) {}
    ErrorCategory category() const noexcept { return category_; }

private:
    ErrorCategory category_;
};

#define DSE_DEFINE_ERROR(Name, Category)                                   \
    class Name : public Error {                                            \
    public:                                                                \
        explicit Name(const std::string& what) : Error(Category, what) {}  \
    }

DSE_DEFINE_ERROR(TopologyError, ErrorCategory::data);
DSE_DEFINE_ERROR(ShapeError, ErrorCategory::data);
DSE_DEFINE_ERROR(PlanError, ErrorCategory::data);
DSE_DEFINE_ERROR(DataError, ErrorCategory::data);
DSE_DEFINE_ERROR(ValidationError, ErrorCategory::data);
DSE_DEFINE_ERROR(ArgumentError, ErrorCategory::usage);
DSE_DEFINE_ERROR(ObservabilityError, ErrorCategory::numerical);
DSE_DEFINE_ERROR(DegenerateDenominatorError, ErrorCategory::numerical);

#undef DSE_DEFINE_ERROR

/// Execution mode for the data-parallel kernels. `serial` is the reference
/// path; `parallel` must produce bit-identical results.
enum class Execution { serial, parallel };

inline void require_shape(bool ok, const std::string& what) {
    if (!ok) throw ShapeError(what);
}

}  // namespace dse
