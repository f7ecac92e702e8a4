#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace mvmlp {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Row-major (K+1) x d storage; row j is the state at time j*T/K.
using PathMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Uniform grid {0, T/K, ..., T}.
class TimeGrid {
public:
    TimeGrid(double horizon, std::size_t steps) : horizon_(horizon), steps_(steps) {
        if (!(horizon > 0.0) || !std::isfinite(horizon)) {
            throw std::domain_error("TimeGrid: horizon must be finite and > 0");
        }
        if (steps == 0) {
            throw std::domain_error("TimeGrid: number of steps must be >= 1");
        }
    }

    double horizon() const noexcept { return horizon_; }
    std::size_t steps() const noexcept { return steps_; }
    std::size_t points() const noexcept { return steps_ + 1; }
    double dt() const noexcept { return horizon_ / static_cast<double>(steps_); }

    /// k*T/K, with value(K) == T exactly.
    double value(std::size_t k) const {
        if (k > steps_) {
            throw std::domain_error("TimeGrid::value: index " + std::to_string(k) + " beyond K");
        }
        if (k == steps_) {
            return horizon_;
        }
        return static_cast<double>(k) * horizon_ / static_cast<double>(steps_);
    }

    friend bool operator==(const TimeGrid&, const TimeGrid&) = default;

private:
    double horizon_;
    std::size_t steps_;
};

/// Index of the largest grid point strictly below t, with t = 0 mapped to 0.
/// An exact grid point therefore maps to the previous index.
inline std::size_t grid_floor_index(double t, const TimeGrid& grid) {
    if (!(t >= 0.0 && t <= grid.horizon())) {
        throw std::domain_error("grid_floor_index: t outside [0, T]");
    }
    if (t == 0.0) {
        return 0;
    }
    const std::size_t K = grid.steps();
    double guess = std::ceil(t * static_cast<double>(K) / grid.horizon()) - 1.0;
    std::size_t k = guess <= 0.0 ? 0 : static_cast<std::size_t>(guess);
    if (k > K - 1) {
        k = K - 1;
    }
    // the guess can be off by one in either direction due to rounding
    while (k > 0 && grid.value(k) >= t) {
        --k;
    }
    while (k + 1 < K && grid.value(k + 1) < t) {
        ++k;
    }
    return k;
}

/// A trajectory sampled on a TimeGrid.
class DiscretePath {
public:
    DiscretePath(TimeGrid grid, std::size_t dim)
        : grid_(grid), values_(PathMatrix::Zero(static_cast<Eigen::Index>(grid.points()),
                                                 static_cast<Eigen::Index>(dim))) {}

    DiscretePath(TimeGrid grid, PathMatrix values) : grid_(grid), values_(std::move(values)) {
        if (static_cast<std::size_t>(values_.rows()) != grid_.points()) {
            throw std::domain_error("DiscretePath: row count must equal K+1");
        }
    }

    const TimeGrid& grid() const noexcept { return grid_; }
    std::size_t dim() const noexcept { return static_cast<std::size_t>(values_.cols()); }
    std::size_t rows() const noexcept { return static_cast<std::size_t>(values_.rows()); }

    const PathMatrix& values() const noexcept { return values_; }
    PathMatrix& values() noexcept { return values_; }

    auto row(std::size_t j) { return values_.row(static_cast<Eigen::Index>(j)); }
    auto row(std::size_t j) const { return values_.row(static_cast<Eigen::Index>(j)); }

    bool all_finite() const { return values_.allFinite(); }

private:
    TimeGrid grid_;
    PathMatrix values_;
};

namespace detail {

inline void require_finite(const Matrix& a, const char* what) {
    if (!a.allFinite()) {
        throw std::domain_error(std::string(what) + ": non-finite input");
    }
}

inline void require_square(const Matrix& a, const char* what) {
    if (a.rows() != a.cols()) {
        throw std::domain_error(std::string(what) + ": matrix must be square");
    }
}

} // namespace detail

/// exp(A t) by scaling and squaring around a degree-18 Taylor kernel.
///
/// The argument is scaled until its 1-norm is at most 1/2; the Taylor remainder
/// is then below 1e-22 relative, so accuracy is limited by the squaring phase.
inline Matrix mat_exp(const Matrix& a, double t) {
    detail::require_square(a, "mat_exp");
    detail::require_finite(a, "mat_exp");
    if (!std::isfinite(t)) {
        throw std::domain_error("mat_exp: non-finite time");
    }
    const Eigen::Index n = a.rows();
    Matrix scaled = a * t;
    const double norm = scaled.cwiseAbs().colwise().sum().maxCoeff();
    int squarings = 0;
    if (norm > 0.5) {
        squarings = static_cast<int>(std::ceil(std::log2(norm / 0.5)));
        scaled /= std::ldexp(1.0, squarings);
    }

    constexpr int kOrder = 18;
    Matrix result = Matrix::Identity(n, n);
    for (int k = kOrder; k >= 1; --k) {
        result = Matrix::Identity(n, n) + (scaled * result) / static_cast<double>(k);
    }
    for (int s = 0; s < squarings; ++s) {
        result = (result * result).eval();
    }
    return result;
}

/// RK4 steps per grid interval used by the ODE solvers unless told otherwise.
inline constexpr std::size_t kDefaultSubsteps = 16;

/// Solve y' = A y + b, y(0) = 0 with classical RK4, `substeps` steps per grid interval.
/// Returns y at every grid point, so y(t) = int_0^t e^{As} b ds.
inline DiscretePath solve_linear_ode(const Matrix& a, const Vector& b, const TimeGrid& grid,
                                     std::size_t substeps = kDefaultSubsteps) {
    detail::require_square(a, "solve_linear_ode");
    if (a.rows() != b.size()) {
        throw std::domain_error("solve_linear_ode: dimension mismatch between A and b");
    }
    if (substeps == 0) {
        throw std::domain_error("solve_linear_ode: substeps must be >= 1");
    }
    detail::require_finite(a, "solve_linear_ode");
    detail::require_finite(b, "solve_linear_ode");

    const auto d = static_cast<std::size_t>(b.size());
    DiscretePath out(grid, d);
    const double h = grid.dt() / static_cast<double>(substeps);
    Vector y = Vector::Zero(b.size());
    auto rhs = [&](const Vector& v) -> Vector { return a * v + b; };
    for (std::size_t j = 0; j < grid.steps(); ++j) {
        for (std::size_t s = 0; s < substeps; ++s) {
            const Vector k1 = rhs(y);
            const Vector k2 = rhs(y + 0.5 * h * k1);
            const Vector k3 = rhs(y + 0.5 * h * k2);
            const Vector k4 = rhs(y + h * k3);
            y += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        out.row(j + 1) = y.transpose();
    }
    return out;
}

/// Time-dependent forcing for the Lyapunov equation.
using MatrixFunction = std::function<Matrix(double)>;

/// Solve C' = A C + C A^T + Q(t), C(0) = 0 with RK4. Each stored C(t_j) is symmetrized.
inline std::vector<Matrix> solve_lyapunov_ode(const Matrix& a, const MatrixFunction& q,
                                              const TimeGrid& grid, std::size_t substeps = kDefaultSubsteps) {
    detail::require_square(a, "solve_lyapunov_ode");
    detail::require_finite(a, "solve_lyapunov_ode");
    if (substeps == 0) {
        throw std::domain_error("solve_lyapunov_ode: substeps must be >= 1");
    }
    const Eigen::Index n = a.rows();

    auto forcing = [&](double t) -> Matrix {
        Matrix qt = q(t);
        if (qt.rows() != n || qt.cols() != n) {
            throw std::domain_error("solve_lyapunov_ode: Q(t) has wrong shape");
        }
        if (!qt.allFinite()) {
            throw std::domain_error("solve_lyapunov_ode: Q(t) not finite");
        }
        const double scale = std::max(1.0, qt.cwiseAbs().maxCoeff());
        if ((qt - qt.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
            throw std::domain_error("solve_lyapunov_ode: Q(t) not symmetric");
        }
        return qt;
    };
    auto rhs = [&](const Matrix& c, double t) -> Matrix {
        return a * c + c * a.transpose() + forcing(t);
    };

    std::vector<Matrix> out;
    out.reserve(grid.points());
    Matrix c = Matrix::Zero(n, n);
    out.push_back(c);
    const double h = grid.dt() / static_cast<double>(substeps);
    for (std::size_t j = 0; j < grid.steps(); ++j) {
        const double t0 = grid.value(j);
        for (std::size_t s = 0; s < substeps; ++s) {
            const double t = t0 + static_cast<double>(s) * h;
            const Matrix k1 = rhs(c, t);
            const Matrix k2 = rhs(c + 0.5 * h * k1, t + 0.5 * h);
            const Matrix k3 = rhs(c + 0.5 * h * k2, t + 0.5 * h);
            const Matrix k4 = rhs(c + h * k3, t + h);
            c += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            c = (0.5 * (c + c.transpose())).eval();
        }
        out.push_back(c);
    }
    return out;
}

} // namespace mvmlp
