#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "mvmlp/numerics.hpp"
#include "mvmlp/random.hpp"

namespace mvmlp {

/// Unit costs charged per drift evaluation, diffusion evaluation and scalar draw.
struct CostUnits {
    std::uint64_t mu = 1;
    std::uint64_t sigma = 1;
    std::uint64_t rv = 1;

    friend bool operator==(const CostUnits&, const CostUnits&) = default;
};

/// d^2 for each coefficient (a matrix-vector product dominates) and 1 per draw.
inline CostUnits default_cost_units(std::size_t d) {
    const auto d2 = static_cast<std::uint64_t>(d) * static_cast<std::uint64_t>(d);
    return {d2, d2, 1};
}

/// A McKean-Vlasov model in expectation form:
///   dX = E[mu(x, X')]|_{x=X} dt + E[sigma(x, X')]|_{x=X} dW.
///
/// drift() writes a d-vector; diffusion() writes a d x d matrix in column-major
/// order, where column k multiplies dW^k. Both must be pure and reentrant.
template <class M>
concept McKeanVlasovModel = requires(const M& m, std::span<const double> x, std::span<double> out) {
    { m.dim() } -> std::convertible_to<std::size_t>;
    { m.initial_value() } -> std::convertible_to<const Vector&>;
    { m.lipschitz() } -> std::convertible_to<double>;
    { m.costs() } -> std::convertible_to<CostUnits>;
    m.drift(x, x, out);
    m.diffusion(x, x, out);
};

/// Models whose coefficients are affine in the second (law) argument. For these the
/// empirical average over particles collapses: (1/N) sum_m f(x, y_m) = f(x, mean(y)).
template <class M>
concept AffineInLaw = McKeanVlasovModel<M> && requires { requires M::affine_in_law; };

namespace detail {

inline Eigen::Map<const Vector> view(std::span<const double> s) {
    return {s.data(), static_cast<Eigen::Index>(s.size())};
}
inline Eigen::Map<Vector> view(std::span<double> s) {
    return {s.data(), static_cast<Eigen::Index>(s.size())};
}

inline void check_dims(std::size_t d, std::span<const double> x1, std::span<const double> x2,
                       std::span<double> out, std::size_t out_size, const char* what) {
    if (x1.size() != d || x2.size() != d || out.size() != out_size) {
        throw std::domain_error(std::string(what) + ": dimension mismatch");
    }
}

/// Rows k*d .. k*d+d-1 hold blocks[k], so (stacked * x) is vec(col_k = blocks[k] x).
inline Matrix stack_blocks(const std::vector<Matrix>& blocks, std::size_t d) {
    Matrix stacked(static_cast<Eigen::Index>(d * d), static_cast<Eigen::Index>(d));
    for (std::size_t k = 0; k < d; ++k) {
        stacked.middleRows(static_cast<Eigen::Index>(k * d), static_cast<Eigen::Index>(d)) = blocks[k];
    }
    return stacked;
}

inline double hs_norm_sq(const std::vector<Matrix>& family) {
    double s = 0.0;
    for (const auto& m : family) {
        s += m.squaredNorm();
    }
    return s;
}

} // namespace detail

// ---------------------------------------------------------------------------
// Mean-field Ornstein-Uhlenbeck model
// ---------------------------------------------------------------------------

struct OuParams {
    Vector a0;
    Matrix A1;
    Matrix A2;
    std::vector<Vector> b; // b_1..b_d
    std::vector<Matrix> B; // B_1..B_d

    std::size_t dim() const noexcept { return static_cast<std::size_t>(a0.size()); }

    void validate() const {
        const auto d = static_cast<Eigen::Index>(a0.size());
        if (d == 0) {
            throw std::domain_error("OuParams: dimension must be >= 1");
        }
        auto square = [d](const Matrix& m) { return m.rows() == d && m.cols() == d; };
        if (!square(A1) || !square(A2) || b.size() != static_cast<std::size_t>(d) ||
            B.size() != static_cast<std::size_t>(d)) {
            throw std::domain_error("OuParams: inconsistent dimensions");
        }
        bool finite = a0.allFinite() && A1.allFinite() && A2.allFinite();
        for (std::size_t k = 0; k < b.size(); ++k) {
            if (b[k].size() != d || !square(B[k])) {
                throw std::domain_error("OuParams: inconsistent dimensions");
            }
            finite = finite && b[k].allFinite() && B[k].allFinite();
        }
        if (!finite) {
            throw std::domain_error("OuParams: non-finite entries");
        }
    }
};

/// a0 + A1 x1 + A2 x2
inline Vector ou_drift(const OuParams& p, const Vector& x1, const Vector& x2) {
    if (x1.size() != p.a0.size() || x2.size() != p.a0.size()) {
        throw std::domain_error("ou_drift: dimension mismatch");
    }
    return p.a0 + p.A1 * x1 + p.A2 * x2;
}

/// Column k is b_k + B_k x2.
inline Matrix ou_diffusion(const OuParams& p, const Vector& x2) {
    const auto d = p.a0.size();
    if (x2.size() != d) {
        throw std::domain_error("ou_diffusion: dimension mismatch");
    }
    Matrix out(d, d);
    for (Eigen::Index k = 0; k < d; ++k) {
        out.col(k) = p.b[static_cast<std::size_t>(k)] + p.B[static_cast<std::size_t>(k)] * x2;
    }
    return out;
}

class OuModel {
public:
    static constexpr bool affine_in_law = true;

    OuModel(OuParams params, Vector xi, CostUnits costs)
        : params_(std::move(params)), xi_(std::move(xi)), costs_(costs) {
        params_.validate();
        const std::size_t d = params_.dim();
        if (static_cast<std::size_t>(xi_.size()) != d) {
            throw std::domain_error("OuModel: initial value has wrong dimension");
        }
        b_vec_.resize(static_cast<Eigen::Index>(d * d));
        for (std::size_t k = 0; k < d; ++k) {
            b_vec_.segment(static_cast<Eigen::Index>(k * d), static_cast<Eigen::Index>(d)) = params_.b[k];
        }
        B_stacked_ = detail::stack_blocks(params_.B, d);
        // 0.5c bounds each argument's Lipschitz factor: drift uses ||A_i||_HS,
        // diffusion uses sqrt(sum_k ||B_k||_HS^2).
        const double l1 = params_.A1.norm();
        const double l2 = std::max(params_.A2.norm(), std::sqrt(detail::hs_norm_sq(params_.B)));
        lipschitz_ = std::max(1.0, 2.0 * std::max(l1, l2));
    }

    std::size_t dim() const noexcept { return params_.dim(); }
    const Vector& initial_value() const noexcept { return xi_; }
    double lipschitz() const noexcept { return lipschitz_; }
    CostUnits costs() const noexcept { return costs_; }
    const OuParams& params() const noexcept { return params_; }

    void drift(std::span<const double> x1, std::span<const double> x2, std::span<double> out) const {
        const std::size_t d = dim();
        detail::check_dims(d, x1, x2, out, d, "OuModel::drift");
        auto o = detail::view(out);
        o.noalias() = params_.a0;
        o.noalias() += params_.A1 * detail::view(x1);
        o.noalias() += params_.A2 * detail::view(x2);
    }

    void diffusion(std::span<const double> x1, std::span<const double> x2, std::span<double> out) const {
        const std::size_t d = dim();
        detail::check_dims(d, x1, x2, out, d * d, "OuModel::diffusion");
        auto o = detail::view(out);
        o.noalias() = b_vec_;
        o.noalias() += B_stacked_ * detail::view(x2);
    }

private:
    OuParams params_;
    Vector xi_;
    CostUnits costs_;
    Vector b_vec_;
    Matrix B_stacked_;
    double lipschitz_ = 1.0;
};

// ---------------------------------------------------------------------------
// Geometric Kuramoto model
// ---------------------------------------------------------------------------

struct KuramotoParams {
    double mu0 = 0.5;
    std::vector<Matrix> Sigma; // Sigma_1..Sigma_d

    std::size_t dim() const noexcept { return Sigma.size(); }

    void validate() const {
        const auto d = static_cast<Eigen::Index>(Sigma.size());
        if (d == 0) {
            throw std::domain_error("KuramotoParams: dimension must be >= 1");
        }
        if (!std::isfinite(mu0)) {
            throw std::domain_error("KuramotoParams: non-finite mu0");
        }
        for (const auto& s : Sigma) {
            if (s.rows() != d || s.cols() != d) {
                throw std::domain_error("KuramotoParams: inconsistent dimensions");
            }
            if (!s.allFinite()) {
                throw std::domain_error("KuramotoParams: non-finite entries");
            }
        }
    }
};

/// mu0 * sin(x1 - x2), componentwise.
inline Vector kuramoto_drift(const KuramotoParams& p, const Vector& x1, const Vector& x2) {
    const auto d = static_cast<Eigen::Index>(p.dim());
    if (x1.size() != d || x2.size() != d) {
        throw std::domain_error("kuramoto_drift: dimension mismatch");
    }
    return p.mu0 * (x1 - x2).array().sin().matrix();
}

/// Column k is Sigma_k x1.
inline Matrix kuramoto_diffusion(const KuramotoParams& p, const Vector& x1) {
    const auto d = static_cast<Eigen::Index>(p.dim());
    if (x1.size() != d) {
        throw std::domain_error("kuramoto_diffusion: dimension mismatch");
    }
    Matrix out(d, d);
    for (Eigen::Index k = 0; k < d; ++k) {
        out.col(k) = p.Sigma[static_cast<std::size_t>(k)] * x1;
    }
    return out;
}

class KuramotoModel {
public:
    KuramotoModel(KuramotoParams params, Vector xi, CostUnits costs)
        : params_(std::move(params)), xi_(std::move(xi)), costs_(costs) {
        params_.validate();
        if (static_cast<std::size_t>(xi_.size()) != params_.dim()) {
            throw std::domain_error("KuramotoModel: initial value has wrong dimension");
        }
        S_stacked_ = detail::stack_blocks(params_.Sigma, params_.dim());
        // |sin a - sin b| <= |a - b| gives |mu0| per argument for the drift.
        const double ls = std::sqrt(detail::hs_norm_sq(params_.Sigma));
        lipschitz_ = std::max(1.0, 2.0 * std::max(std::fabs(params_.mu0), ls));
    }

    std::size_t dim() const noexcept { return params_.dim(); }
    const Vector& initial_value() const noexcept { return xi_; }
    double lipschitz() const noexcept { return lipschitz_; }
    CostUnits costs() const noexcept { return costs_; }
    const KuramotoParams& params() const noexcept { return params_; }

    void drift(std::span<const double> x1, std::span<const double> x2, std::span<double> out) const {
        const std::size_t d = dim();
        detail::check_dims(d, x1, x2, out, d, "KuramotoModel::drift");
        for (std::size_t i = 0; i < d; ++i) {
            out[i] = params_.mu0 * std::sin(x1[i] - x2[i]);
        }
    }

    void diffusion(std::span<const double> x1, std::span<const double> x2, std::span<double> out) const {
        const std::size_t d = dim();
        detail::check_dims(d, x1, x2, out, d * d, "KuramotoModel::diffusion");
        detail::view(out).noalias() = S_stacked_ * detail::view(x1);
    }

private:
    KuramotoParams params_;
    Vector xi_;
    CostUnits costs_;
    Matrix S_stacked_;
    double lipschitz_ = 1.0;
};

// ---------------------------------------------------------------------------
// Ad-hoc models from callables (tests, experiments with hand-written coefficients)
// ---------------------------------------------------------------------------

class FunctionModel {
public:
    using DriftFn = std::function<Vector(const Vector&, const Vector&)>;
    using DiffusionFn = std::function<Matrix(const Vector&, const Vector&)>;

    FunctionModel(Vector xi, DriftFn mu, DiffusionFn sigma, double lipschitz, CostUnits costs)
        : xi_(std::move(xi)), mu_(std::move(mu)), sigma_(std::move(sigma)), lipschitz_(lipschitz),
          costs_(costs) {}

    std::size_t dim() const noexcept { return static_cast<std::size_t>(xi_.size()); }
    const Vector& initial_value() const noexcept { return xi_; }
    double lipschitz() const noexcept { return lipschitz_; }
    CostUnits costs() const noexcept { return costs_; }

    void drift(std::span<const double> x1, std::span<const double> x2, std::span<double> out) const {
        const std::size_t d = dim();
        detail::check_dims(d, x1, x2, out, d, "FunctionModel::drift");
        const Vector r = mu_(detail::view(x1), detail::view(x2));
        if (static_cast<std::size_t>(r.size()) != d) {
            throw std::domain_error("FunctionModel::drift: callable returned wrong size");
        }
        detail::view(out) = r;
    }

    void diffusion(std::span<const double> x1, std::span<const double> x2, std::span<double> out) const {
        const std::size_t d = dim();
        detail::check_dims(d, x1, x2, out, d * d, "FunctionModel::diffusion");
        const Matrix r = sigma_(detail::view(x1), detail::view(x2));
        if (static_cast<std::size_t>(r.rows()) != d || static_cast<std::size_t>(r.cols()) != d) {
            throw std::domain_error("FunctionModel::diffusion: callable returned wrong shape");
        }
        detail::view(out) = r.reshaped();
    }

private:
    Vector xi_;
    DriftFn mu_;
    DiffusionFn sigma_;
    double lipschitz_;
    CostUnits costs_;
};

// ---------------------------------------------------------------------------
// Convenience evaluation and diagnostics
// ---------------------------------------------------------------------------

template <McKeanVlasovModel M>
Vector eval_drift(const M& model, const Vector& x1, const Vector& x2) {
    Vector out(static_cast<Eigen::Index>(model.dim()));
    model.drift({x1.data(), static_cast<std::size_t>(x1.size())},
                {x2.data(), static_cast<std::size_t>(x2.size())},
                {out.data(), static_cast<std::size_t>(out.size())});
    return out;
}

template <McKeanVlasovModel M>
Matrix eval_diffusion(const M& model, const Vector& x1, const Vector& x2) {
    const auto d = static_cast<Eigen::Index>(model.dim());
    Matrix out(d, d);
    model.diffusion({x1.data(), static_cast<std::size_t>(x1.size())},
                    {x2.data(), static_cast<std::size_t>(x2.size())},
                    {out.data(), static_cast<std::size_t>(out.size())});
    return out;
}

/// ||xi|| + ||mu(0,0)|| + ||sigma(0,0)||_HS.
template <McKeanVlasovModel M>
double growth_bound(const M& model) {
    const Vector zero = Vector::Zero(static_cast<Eigen::Index>(model.dim()));
    return model.initial_value().norm() + eval_drift(model, zero, zero).norm() +
           eval_diffusion(model, zero, zero).norm();
}

/// Largest observed ratio
///   max(||mu(x)-mu(y)||, ||sigma(x)-sigma(y)||_HS) / (0.5c||x1-y1|| + 0.5c||x2-y2||)
/// over random pairs with entries uniform in [-spread, spread]. Values <= 1 satisfy the bound.
template <McKeanVlasovModel M>
double sampled_lipschitz_ratio(const M& model, double c, RandomStream& stream, std::size_t pairs,
                               double spread = 10.0) {
    const auto d = static_cast<Eigen::Index>(model.dim());
    auto draw = [&] {
        Vector v(d);
        for (Eigen::Index i = 0; i < d; ++i) {
            v(i) = spread * (2.0 * stream.next_uniform() - 1.0);
        }
        return v;
    };
    double worst = 0.0;
    for (std::size_t p = 0; p < pairs; ++p) {
        const Vector x1 = draw(), x2 = draw(), y1 = draw(), y2 = draw();
        const double lhs = std::max((eval_drift(model, x1, x2) - eval_drift(model, y1, y2)).norm(),
                                    (eval_diffusion(model, x1, x2) - eval_diffusion(model, y1, y2)).norm());
        const double rhs = 0.5 * c * (x1 - y1).norm() + 0.5 * c * (x2 - y2).norm();
        if (rhs > 0.0) {
            worst = std::max(worst, lhs / rhs);
        }
    }
    return worst;
}

// ---------------------------------------------------------------------------
// Random benchmark parameters
// ---------------------------------------------------------------------------

enum class ModelKind { ou, kuramoto };

inline std::string to_string(ModelKind k) { return k == ModelKind::ou ? "ou" : "kuramoto"; }

inline ModelKind parse_model_kind(const std::string& s) {
    if (s == "ou") {
        return ModelKind::ou;
    }
    if (s == "kuramoto") {
        return ModelKind::kuramoto;
    }
    throw std::invalid_argument("unknown model kind '" + s + "' (expected ou|kuramoto)");
}

namespace detail {

inline Matrix uniform_matrix(RandomStream& s, std::size_t d) {
    Matrix m(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
    // column-major fill order is part of the reproducibility contract
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
        for (Eigen::Index i = 0; i < m.rows(); ++i) {
            m(i, j) = 2.0 * s.next_uniform() - 1.0;
        }
    }
    return m;
}

inline Vector uniform_vector(RandomStream& s, std::size_t d) {
    Vector v(static_cast<Eigen::Index>(d));
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        v(i) = 2.0 * s.next_uniform() - 1.0;
    }
    return v;
}

template <class T>
void rescale(T& x, double target) {
    const double n = x.norm();
    if (n > 0.0) {
        x *= target / n;
    }
}

inline void rescale_family(std::vector<Matrix>& family, double target) {
    const double n = std::sqrt(hs_norm_sq(family));
    if (n > 0.0) {
        for (auto& m : family) {
            m *= target / n;
        }
    }
}

} // namespace detail

inline constexpr double kDefaultRho = 0.25;
inline constexpr double kKuramotoMu0 = 0.5;
inline constexpr double kOuInitialValue = 20.0;
inline constexpr double kKuramotoInitialValue = 10.0;

/// Entries i.i.d. uniform on [-1, 1]; each vector rescaled to Euclidean norm rho,
/// A1 and A2 to HS norm rho, and the family B_1..B_d jointly to sqrt(sum ||B_k||^2) = rho.
inline OuParams random_ou_params(std::size_t d, RandomStream& stream, double rho = kDefaultRho) {
    if (!(rho > 0.0) || d == 0) {
        throw std::domain_error("random_ou_params: need rho > 0 and d >= 1");
    }
    OuParams p;
    p.a0 = detail::uniform_vector(stream, d);
    detail::rescale(p.a0, rho);
    p.A1 = detail::uniform_matrix(stream, d);
    detail::rescale(p.A1, rho);
    p.A2 = detail::uniform_matrix(stream, d);
    detail::rescale(p.A2, rho);
    p.b.reserve(d);
    for (std::size_t k = 0; k < d; ++k) {
        p.b.push_back(detail::uniform_vector(stream, d));
        detail::rescale(p.b.back(), rho);
    }
    p.B.reserve(d);
    for (std::size_t k = 0; k < d; ++k) {
        p.B.push_back(detail::uniform_matrix(stream, d));
    }
    detail::rescale_family(p.B, rho);
    return p;
}

/// Sigma_1..Sigma_d uniform on [-1, 1], jointly rescaled to sqrt(sum ||Sigma_k||^2) = rho.
inline KuramotoParams random_kuramoto_params(std::size_t d, RandomStream& stream, double rho = kDefaultRho,
                                             double mu0 = kKuramotoMu0) {
    if (!(rho > 0.0) || d == 0) {
        throw std::domain_error("random_kuramoto_params: need rho > 0 and d >= 1");
    }
    KuramotoParams p;
    p.mu0 = mu0;
    p.Sigma.reserve(d);
    for (std::size_t k = 0; k < d; ++k) {
        p.Sigma.push_back(detail::uniform_matrix(stream, d));
    }
    detail::rescale_family(p.Sigma, rho);
    return p;
}

inline OuModel make_ou_model(OuParams p, CostUnits costs) {
    const auto d = static_cast<Eigen::Index>(p.dim());
    return OuModel(std::move(p), Vector::Constant(d, kOuInitialValue), costs);
}

inline KuramotoModel make_kuramoto_model(KuramotoParams p, CostUnits costs) {
    const auto d = static_cast<Eigen::Index>(p.dim());
    return KuramotoModel(std::move(p), Vector::Constant(d, kKuramotoInitialValue), costs);
}

} // namespace mvmlp
