#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mvmlp/models.hpp"
#include "mvmlp/numerics.hpp"
#include "mvmlp/random.hpp"

namespace mvmlp {

/// How the quantized evaluation time of the drift correction is chosen.
///  spec: r = grid_floor_index(t_j * u)
///  alg1: r = floor((j - 1) u) + 1, clamped to [0, K]   (pseudocode variant)
enum class DriftTimeMode { spec, alg1 };

/// Scale factor of the drift correction at row j.
///  spec: t_j / m^{n-l}
///  alg1: 1 / m^{n-l}
enum class DriftScaleMode { spec, alg1 };

inline std::string to_string(DriftTimeMode m) { return m == DriftTimeMode::spec ? "spec" : "alg1"; }
inline std::string to_string(DriftScaleMode m) { return m == DriftScaleMode::spec ? "spec" : "alg1"; }

template <class Mode>
Mode parse_drift_mode(const std::string& s) {
    if (s == "spec") {
        return Mode::spec;
    }
    if (s == "alg1") {
        return Mode::alg1;
    }
    throw std::invalid_argument("unknown drift mode '" + s + "' (expected spec|alg1)");
}

struct MlpConfig {
    std::size_t n = 1; // level
    std::size_t m = 1; // samples-per-level base
    TimeGrid grid{1.0, 1};
    DriftTimeMode drift_time_mode = DriftTimeMode::spec;
    DriftScaleMode drift_scale_mode = DriftScaleMode::spec;

    std::size_t K() const noexcept { return grid.steps(); }

    void validate() const {
        if (m == 0) {
            throw std::domain_error("MlpConfig: m must be >= 1");
        }
    }

    /// The experiment protocol: n = m and K = m^n on [0, T].
    static MlpConfig protocol(std::size_t level, double horizon = 1.0) {
        if (level == 0) {
            throw std::domain_error("MlpConfig::protocol: level must be >= 1");
        }
        std::size_t K = 1;
        for (std::size_t i = 0; i < level; ++i) {
            K *= level;
        }
        return MlpConfig{level, level, TimeGrid(horizon, K)};
    }
};

/// Integer tallies of coefficient evaluations and scalar draws.
struct CostLedger {
    std::uint64_t mu_evals = 0;
    std::uint64_t sigma_evals = 0;
    std::uint64_t rv_draws = 0;

    CostLedger& operator+=(const CostLedger& o) noexcept {
        mu_evals += o.mu_evals;
        sigma_evals += o.sigma_evals;
        rv_draws += o.rv_draws;
        return *this;
    }

    friend bool operator==(const CostLedger&, const CostLedger&) = default;
};

class CostOverflowError : public std::overflow_error {
public:
    using std::overflow_error::overflow_error;
};

namespace detail {

inline std::uint64_t checked_add(std::uint64_t a, std::uint64_t b) {
    std::uint64_t r;
    if (__builtin_add_overflow(a, b, &r)) {
        throw CostOverflowError("cost accounting overflowed 64 bits");
    }
    return r;
}

inline std::uint64_t checked_mul(std::uint64_t a, std::uint64_t b) {
    std::uint64_t r;
    if (__builtin_mul_overflow(a, b, &r)) {
        throw CostOverflowError("cost accounting overflowed 64 bits");
    }
    return r;
}

inline std::uint64_t checked_pow(std::uint64_t base, std::uint64_t exp) {
    std::uint64_t r = 1;
    for (std::uint64_t i = 0; i < exp; ++i) {
        r = checked_mul(r, base);
    }
    return r;
}

} // namespace detail

/// Units-weighted ledger total.
inline std::uint64_t weighted_cost(const CostLedger& ledger, const CostUnits& units) {
    using detail::checked_add;
    using detail::checked_mul;
    return checked_add(checked_add(checked_mul(ledger.mu_evals, units.mu), checked_mul(ledger.sigma_evals, units.sigma)),
                       checked_mul(ledger.rv_draws, units.rv));
}

/// Cost of building the level-n path given a prepared Brownian path:
///   C_0 = 0,
///   C_n = c_mu + c_sigma + sum_{l=1}^{n-1} m^{n-l} [ 2(C_l + C_{l-1}) + K d c_rv + c_rv + 2 c_mu + 2 K c_sigma ].
inline std::uint64_t analytic_cost(std::size_t n, std::size_t m, std::size_t K, std::size_t d,
                                   const CostUnits& units) {
    using detail::checked_add;
    using detail::checked_mul;
    std::vector<std::uint64_t> c(n + 1, 0);
    const std::uint64_t per_sample_fixed =
        checked_add(checked_add(checked_mul(checked_mul(K, d), units.rv), units.rv),
                    checked_add(checked_mul(2, units.mu), checked_mul(checked_mul(2, K), units.sigma)));
    for (std::size_t level = 1; level <= n; ++level) {
        std::uint64_t total = checked_add(units.mu, units.sigma);
        for (std::size_t l = 1; l < level; ++l) {
            const std::uint64_t per_sample =
                checked_add(checked_mul(2, checked_add(c[l], c[l - 1])), per_sample_fixed);
            total = checked_add(total, checked_mul(detail::checked_pow(m, level - l), per_sample));
        }
        c[level] = total;
    }
    return c[n];
}

struct LedgerCheck {
    bool ok = false;
    std::uint64_t instrumented = 0;
    std::uint64_t analytic = 0;
    std::string report;

    explicit operator bool() const noexcept { return ok; }
};

/// Compare a ledger from one top-level estimate against analytic_cost.
inline LedgerCheck verify_ledger(const CostLedger& ledger, std::size_t n, std::size_t m, std::size_t K,
                                 std::size_t d, const CostUnits& units) {
    LedgerCheck out;
    out.instrumented = weighted_cost(ledger, units);
    out.analytic = analytic_cost(n, m, K, d, units);
    out.ok = out.instrumented == out.analytic;
    if (!out.ok) {
        std::ostringstream os;
        os << "ledger (mu=" << ledger.mu_evals << ", sigma=" << ledger.sigma_evals << ", rv=" << ledger.rv_draws
           << ") weighs " << out.instrumented << " but analytic cost is " << out.analytic << " (diff "
           << static_cast<long double>(out.instrumented) - static_cast<long double>(out.analytic) << ")";
        out.report = os.str();
    }
    return out;
}

/// Raised when an estimate produces a non-finite state.
class NumericOverflowError : public std::runtime_error {
public:
    NumericOverflowError(std::size_t n, std::size_t l, std::size_t k, std::size_t j)
        : std::runtime_error(message(n, l, k, j)), n_(n), l_(l), k_(k), j_(j) {}

    std::size_t level() const noexcept { return n_; }
    std::size_t sublevel() const noexcept { return l_; }
    std::size_t sample() const noexcept { return k_; }
    std::size_t row() const noexcept { return j_; }

private:
    static std::string message(std::size_t n, std::size_t l, std::size_t k, std::size_t j) {
        std::ostringstream os;
        os << "MLP estimate became non-finite at level n=" << n << ", l=" << l << ", k=" << k << ", row j=" << j;
        return os.str();
    }

    std::size_t n_, l_, k_, j_;
};

namespace detail {

/// Marker appended to the (theta, n, k, l) child index to address the fresh
/// internal randomness of the recomputed caller-side processes X1 and X3.
/// Children of a level-l call always append l >= 2 first, so 0 cannot collide.
inline constexpr std::uint64_t kCallerSide = 0;

template <McKeanVlasovModel M>
class MlpRecursion {
public:
    MlpRecursion(const M& model, const MlpConfig& cfg, std::uint64_t seed, CostLedger& ledger)
        : model_(model), cfg_(cfg), seed_(seed), ledger_(ledger), d_(model.dim()), K_(cfg.K()) {
        sig_a_.resize(d_ * d_);
        sig_b_.resize(d_ * d_);
        mu_a_.resize(d_);
        mu_b_.resize(d_);
    }

    PathMatrix estimate(std::size_t n, const MultiIndex& theta, const PathMatrix& dW) {
        const auto rows = static_cast<Eigen::Index>(K_ + 1);
        const auto d = static_cast<Eigen::Index>(d_);
        PathMatrix X = PathMatrix::Zero(rows, d);
        if (n == 0) {
            return X;
        }

        const Vector zero = Vector::Zero(d);
        const Vector mu0 = eval_drift(model_, zero, zero);
        const Matrix sigma0 = eval_diffusion(model_, zero, zero);
        ledger_.mu_evals += 1;
        ledger_.sigma_evals += 1;

        const Vector& xi = model_.initial_value();
        Vector w = Vector::Zero(d);
        for (std::size_t j = 0; j <= K_; ++j) {
            if (j > 0) {
                w += dW.row(static_cast<Eigen::Index>(j - 1)).transpose();
            }
            X.row(static_cast<Eigen::Index>(j)) = (xi + cfg_.grid.value(j) * mu0 + sigma0 * w).transpose();
        }
        check_finite(X, n, 0, 0);

        const double dt = cfg_.grid.dt();
        for (std::size_t l = 1; l < n; ++l) {
            const std::uint64_t samples = detail::checked_pow(cfg_.m, n - l);
            const double scale = 1.0 / static_cast<double>(samples);
            for (std::uint64_t k = 1; k <= samples; ++k) {
                const MultiIndex child = theta.child(n, k, l);
                const MultiIndex caller_side = child.append(kCallerSide);
                RandomStream stream = derive_stream(seed_, child);
                const PathMatrix dW_tilde = sample_brownian_increments(stream, K_, d_, dt);
                ledger_.rv_draws += static_cast<std::uint64_t>(K_) * d_;

                const PathMatrix X1 = estimate(l, caller_side, dW);
                const PathMatrix X2 = estimate(l, child, dW_tilde);
                const PathMatrix X3 = estimate(l - 1, caller_side, dW);
                const PathMatrix X4 = estimate(l - 1, child, dW_tilde);

                add_stochastic_correction(X, X1, X2, X3, X4, dW, scale);

                const double u = sample_uniform(stream);
                ledger_.rv_draws += 1;
                add_drift_correction(X, X1, X2, X3, X4, u, scale);

                check_finite(X, n, l, k);
            }
        }
        return X;
    }

private:
    static std::span<const double> row_span(const PathMatrix& p, std::size_t j) {
        return {p.data() + j * static_cast<std::size_t>(p.cols()), static_cast<std::size_t>(p.cols())};
    }

    // I_j = I_{j-1} + scale * (sigma(X1_{j-1}, X2_{j-1}) - sigma(X3_{j-1}, X4_{j-1})) dW_j
    void add_stochastic_correction(PathMatrix& X, const PathMatrix& X1, const PathMatrix& X2, const PathMatrix& X3,
                                   const PathMatrix& X4, const PathMatrix& dW, double scale) {
        const auto d = static_cast<Eigen::Index>(d_);
        Vector integral = Vector::Zero(d);
        Eigen::Map<Matrix> sa(sig_a_.data(), d, d);
        Eigen::Map<const Matrix> sb(sig_b_.data(), d, d);
        for (std::size_t j = 1; j <= K_; ++j) {
            model_.diffusion(row_span(X1, j - 1), row_span(X2, j - 1), sig_a_);
            model_.diffusion(row_span(X3, j - 1), row_span(X4, j - 1), sig_b_);
            sa -= sb;
            integral.noalias() += scale * (sa * dW.row(static_cast<Eigen::Index>(j - 1)).transpose());
            X.row(static_cast<Eigen::Index>(j)) += integral.transpose();
        }
        ledger_.sigma_evals += 2 * static_cast<std::uint64_t>(K_);
    }

    std::size_t drift_row(std::size_t j, double u) const {
        if (cfg_.drift_time_mode == DriftTimeMode::spec) {
            return grid_floor_index(cfg_.grid.value(j) * u, cfg_.grid);
        }
        const double r = std::floor((static_cast<double>(j) - 1.0) * u) + 1.0;
        if (r <= 0.0) {
            return 0;
        }
        return std::min(static_cast<std::size_t>(r), K_);
    }

    // Each process pair is evaluated once on the stacked quantized rows; the
    // ledger charges one drift evaluation per pair.
    void add_drift_correction(PathMatrix& X, const PathMatrix& X1, const PathMatrix& X2, const PathMatrix& X3,
                              const PathMatrix& X4, double u, double scale) {
        const auto d = static_cast<Eigen::Index>(d_);
        Eigen::Map<Vector> ma(mu_a_.data(), d);
        Eigen::Map<const Vector> mb(mu_b_.data(), d);
        Vector diff(d);
        std::size_t cached = std::numeric_limits<std::size_t>::max();
        for (std::size_t j = 0; j <= K_; ++j) {
            const std::size_t r = drift_row(j, u);
            if (r != cached) {
                model_.drift(row_span(X1, r), row_span(X2, r), mu_a_);
                model_.drift(row_span(X3, r), row_span(X4, r), mu_b_);
                diff = ma - mb;
                cached = r;
            }
            const double s = cfg_.drift_scale_mode == DriftScaleMode::spec ? cfg_.grid.value(j) : 1.0;
            X.row(static_cast<Eigen::Index>(j)) += (s * scale) * diff.transpose();
        }
        ledger_.mu_evals += 2;
    }

    static void check_finite(const PathMatrix& X, std::size_t n, std::size_t l, std::size_t k) {
        for (Eigen::Index j = 0; j < X.rows(); ++j) {
            if (!X.row(j).allFinite()) {
                throw NumericOverflowError(n, l, k, static_cast<std::size_t>(j));
            }
        }
    }

    const M& model_;
    const MlpConfig& cfg_;
    std::uint64_t seed_;
    CostLedger& ledger_;
    std::size_t d_;
    std::size_t K_;
    std::vector<double> sig_a_, sig_b_, mu_a_, mu_b_;
};

} // namespace detail

/// Multilevel Picard approximation of the level-n path on cfg.grid, driven by the
/// caller's increments (K x d). All internal randomness is derived from
/// (root_seed, theta); the result is a pure function of the arguments.
/// The ledger is incremented by the cost of this call.
template <McKeanVlasovModel M>
DiscretePath mlp_estimate(const M& model, const MlpConfig& cfg, const MultiIndex& theta, std::uint64_t root_seed,
                          const PathMatrix& caller_increments, CostLedger& ledger) {
    cfg.validate();
    if (static_cast<std::size_t>(caller_increments.rows()) != cfg.K() ||
        static_cast<std::size_t>(caller_increments.cols()) != model.dim()) {
        throw std::domain_error("mlp_estimate: caller increments must be K x d");
    }
    detail::MlpRecursion<M> recursion(model, cfg, root_seed, ledger);
    return DiscretePath(cfg.grid, recursion.estimate(cfg.n, theta, caller_increments));
}

} // namespace mvmlp
