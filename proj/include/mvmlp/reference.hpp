#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "mvmlp/models.hpp"
#include "mvmlp/numerics.hpp"
#include "mvmlp/parallel.hpp"
#include "mvmlp/random.hpp"

namespace mvmlp {

namespace detail {

inline void require_increments(const PathMatrix& dW, const TimeGrid& grid, std::size_t d, const char* what) {
    if (static_cast<std::size_t>(dW.rows()) != grid.steps() || static_cast<std::size_t>(dW.cols()) != d) {
        throw std::domain_error(std::string(what) + ": increments must be K x d on the same grid");
    }
}

inline void require_dim(const Vector& xi, std::size_t d, const char* what) {
    if (static_cast<std::size_t>(xi.size()) != d) {
        throw std::domain_error(std::string(what) + ": initial value has wrong dimension");
    }
}

/// Exact mean-flow propagator: the augmented system z = (m, 1) with
/// z' = [[A1 + A2, a0], [0, 0]] z, so z(t + h) = exp(M h) z(t).
class OuMeanFlow {
public:
    OuMeanFlow(const OuParams& p, const Vector& xi) : d_(static_cast<Eigen::Index>(p.dim())) {
        generator_ = Matrix::Zero(d_ + 1, d_ + 1);
        generator_.topLeftCorner(d_, d_) = p.A1 + p.A2;
        generator_.topRightCorner(d_, 1) = p.a0;
        start_ = Vector::Ones(d_ + 1);
        start_.head(d_) = xi;
    }

    Matrix propagator(double h) const { return mat_exp(generator_, h); }

    Vector at(double t) const { return (propagator(t) * start_).head(d_); }

    static Vector advance(const Matrix& propagator, const Vector& m) {
        const auto d = m.size();
        return propagator.topLeftCorner(d, d) * m + propagator.topRightCorner(d, 1);
    }

private:
    Eigen::Index d_;
    Matrix generator_;
    Vector start_;
};

inline Matrix outer_self(const Matrix& s) {
    Matrix q = s * s.transpose();
    return 0.5 * (q + q.transpose());
}

// 4-point Gauss-Legendre on [-1, 1]
inline constexpr std::array<double, 4> kGaussNodes = {-0.8611363115940526, -0.3399810435848563,
                                                      0.3399810435848563, 0.8611363115940526};
inline constexpr std::array<double, 4> kGaussWeights = {0.3478548451374538, 0.6521451548625461,
                                                        0.6521451548625461, 0.3478548451374538};

} // namespace detail

// ---------------------------------------------------------------------------
// Mean-field Ornstein-Uhlenbeck
// ---------------------------------------------------------------------------

/// m(t) = e^{(A1+A2)t} xi + int_0^t e^{(A1+A2)(t-s)} a0 ds at the grid points.
/// The integral term is the RK4 solution of y' = (A1+A2) y + a0, y(0) = 0.
inline PathMatrix ou_mean(const OuParams& p, const Vector& xi, const TimeGrid& grid,
                          std::size_t substeps = kDefaultSubsteps) {
    p.validate();
    detail::require_dim(xi, p.dim(), "ou_mean");
    const Matrix A = p.A1 + p.A2;
    const DiscretePath integral = solve_linear_ode(A, p.a0, grid, substeps);
    PathMatrix mean(static_cast<Eigen::Index>(grid.points()), static_cast<Eigen::Index>(p.dim()));
    for (std::size_t j = 0; j < grid.points(); ++j) {
        const auto r = static_cast<Eigen::Index>(j);
        mean.row(r) = (mat_exp(A, grid.value(j)) * xi).transpose() + integral.values().row(r);
    }
    return mean;
}

/// Q(t_j) = sum_k (b_k + B_k m(t_j))(b_k + B_k m(t_j))^T.
inline std::vector<Matrix> ou_q_process(const OuParams& p, const PathMatrix& mean) {
    if (static_cast<std::size_t>(mean.cols()) != p.dim()) {
        throw std::domain_error("ou_q_process: mean path has wrong dimension");
    }
    std::vector<Matrix> q;
    q.reserve(static_cast<std::size_t>(mean.rows()));
    for (Eigen::Index j = 0; j < mean.rows(); ++j) {
        q.push_back(detail::outer_self(ou_diffusion(p, mean.row(j).transpose())));
    }
    return q;
}

/// C(t) = int_0^t e^{A1(t-s)} Q(s) e^{A1^T(t-s)} ds, as the Lyapunov ODE
/// C' = A1 C + C A1^T + Q(t). Q(s) uses the closed-form mean at every stage time.
inline std::vector<Matrix> ou_marginal_cov(const OuParams& p, const Vector& xi, const TimeGrid& grid,
                                           std::size_t substeps = kDefaultSubsteps) {
    p.validate();
    detail::require_dim(xi, p.dim(), "ou_marginal_cov");
    const detail::OuMeanFlow flow(p, xi);
    auto q = [&](double s) { return detail::outer_self(ou_diffusion(p, flow.at(s))); };
    return solve_lyapunov_ode(p.A1, q, grid, substeps);
}

/// Pathwise solution driven by the given increments (variation of constants):
///   X_{j+1} = e^{A1 dt} X_j + D_j + sigma(t_j) dW_j,
///   D_j = int_{t_j}^{t_{j+1}} e^{A1(t_{j+1}-s)} (a0 + A2 m(s)) ds   (4-point Gauss-Legendre),
/// with sigma(t) the diffusion at the exact mean m(t).
inline DiscretePath ou_exact_path(const OuParams& p, const Vector& xi, const TimeGrid& grid,
                                  const PathMatrix& increments) {
    p.validate();
    const std::size_t d = p.dim();
    detail::require_dim(xi, d, "ou_exact_path");
    detail::require_increments(increments, grid, d, "ou_exact_path");

    const double dt = grid.dt();
    const detail::OuMeanFlow flow(p, xi);
    const Matrix step = mat_exp(p.A1, dt);
    const Matrix mean_step = flow.propagator(dt);
    std::array<Matrix, 4> node_mean, node_kernel;
    std::array<double, 4> node_weight{};
    for (std::size_t q = 0; q < 4; ++q) {
        const double offset = 0.5 * dt * (1.0 + detail::kGaussNodes[q]);
        node_mean[q] = flow.propagator(offset);
        node_kernel[q] = mat_exp(p.A1, dt - offset);
        node_weight[q] = 0.5 * dt * detail::kGaussWeights[q];
    }

    DiscretePath out(grid, d);
    Vector x = xi;
    Vector m = xi;
    out.row(0) = x.transpose();
    for (std::size_t j = 0; j < grid.steps(); ++j) {
        Vector drift_integral = Vector::Zero(static_cast<Eigen::Index>(d));
        for (std::size_t q = 0; q < 4; ++q) {
            const Vector ms = detail::OuMeanFlow::advance(node_mean[q], m);
            drift_integral += node_weight[q] * (node_kernel[q] * (p.a0 + p.A2 * ms));
        }
        const Matrix sigma = ou_diffusion(p, m);
        x = step * x + drift_integral + sigma * increments.row(static_cast<Eigen::Index>(j)).transpose();
        m = detail::OuMeanFlow::advance(mean_step, m);
        out.row(j + 1) = x.transpose();
    }
    return out;
}

// ---------------------------------------------------------------------------
// Geometric Kuramoto
// ---------------------------------------------------------------------------

struct KuramotoMoments {
    PathMatrix variance; // (K+1) x d, C_i(t_j)
    Matrix A;            // A_ij = sum_k (sigma_k^{ij})^2
    Vector b;            // b_i = sum_{j,k} (sigma_k^{ij})^2 (xi_j)^2
};

/// Componentwise second-moment approximation C' = A C + b, C(0) = 0.
inline KuramotoMoments kuramoto_moments(const KuramotoParams& p, const Vector& xi, const TimeGrid& grid,
                                        std::size_t substeps = kDefaultSubsteps) {
    p.validate();
    const std::size_t d = p.dim();
    detail::require_dim(xi, d, "kuramoto_moments");
    KuramotoMoments out;
    out.A = Matrix::Zero(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
    for (const auto& s : p.Sigma) {
        out.A += s.cwiseAbs2();
    }
    out.b = out.A * xi.cwiseAbs2();
    out.variance = solve_linear_ode(out.A, out.b, grid, substeps).values();
    return out;
}

/// Euler-Maruyama with the closed mean-field drift
///   mu0 (1 - C_i(t)/2) sin(x_i - xi_i)
/// obtained from E[sin(x - Y)] with second-order moment expansions of cos Y and sin Y.
inline DiscretePath kuramoto_reference_path(const KuramotoParams& p, const Vector& xi, const TimeGrid& grid,
                                            const PathMatrix& increments, const KuramotoMoments& moments) {
    p.validate();
    const std::size_t d = p.dim();
    detail::require_dim(xi, d, "kuramoto_reference_path");
    detail::require_increments(increments, grid, d, "kuramoto_reference_path");
    if (static_cast<std::size_t>(moments.variance.rows()) != grid.points() ||
        static_cast<std::size_t>(moments.variance.cols()) != d) {
        throw std::domain_error("kuramoto_reference_path: moments computed on a different grid");
    }

    const double dt = grid.dt();
    DiscretePath out(grid, d);
    Vector x = xi;
    out.row(0) = x.transpose();
    Vector drift(static_cast<Eigen::Index>(d));
    for (std::size_t j = 0; j < grid.steps(); ++j) {
        const auto r = static_cast<Eigen::Index>(j);
        for (Eigen::Index i = 0; i < drift.size(); ++i) {
            drift(i) = p.mu0 * (1.0 - 0.5 * moments.variance(r, i)) * std::sin(x(i) - xi(i));
        }
        const Matrix sigma = kuramoto_diffusion(p, x);
        x = x + drift * dt + sigma * increments.row(r).transpose();
        out.row(j + 1) = x.transpose();
    }
    return out;
}

// ---------------------------------------------------------------------------
// Interacting particle system
// ---------------------------------------------------------------------------

enum class ParticleCoupling {
    automatic, // O(N) mean-field collapse for AffineInLaw models, pairwise otherwise
    pairwise,  // always O(N^2)
};

/// N-particle Euler-Maruyama for
///   dX^n = (1/N) sum_m mu(X^n, X^m) dt + (1/N) sum_m sigma(X^n, X^m) dW^n,
/// where particle n is driven by its own Brownian motion from stream (root_seed, base.n).
template <McKeanVlasovModel M>
std::vector<DiscretePath> particle_system_path(const M& model, std::size_t particles, const TimeGrid& grid,
                                               std::uint64_t root_seed, const MultiIndex& base,
                                               std::size_t threads = 1,
                                               ParticleCoupling coupling = ParticleCoupling::automatic) {
    if (particles == 0) {
        throw std::domain_error("particle_system_path: need at least one particle");
    }
    const std::size_t d = model.dim();
    const std::size_t K = grid.steps();
    const double dt = grid.dt();
    const auto de = static_cast<Eigen::Index>(d);

    std::vector<PathMatrix> increments(particles);
    parallel_for(particles, threads, [&](std::size_t n) {
        RandomStream s = derive_stream(root_seed, base.append(n));
        increments[n] = sample_brownian_increments(s, K, d, dt);
    });

    // state(n, :) is particle n at the current time
    PathMatrix state(static_cast<Eigen::Index>(particles), de);
    for (std::size_t n = 0; n < particles; ++n) {
        state.row(static_cast<Eigen::Index>(n)) = model.initial_value().transpose();
    }
    std::vector<DiscretePath> paths(particles, DiscretePath(grid, d));
    for (std::size_t n = 0; n < particles; ++n) {
        paths[n].row(0) = state.row(static_cast<Eigen::Index>(n));
    }

    bool collapse = false;
    if constexpr (AffineInLaw<M>) {
        collapse = coupling == ParticleCoupling::automatic;
    }

    const double inv_n = 1.0 / static_cast<double>(particles);
    PathMatrix next(state.rows(), state.cols());
    auto particle_span = [&](std::size_t n) { return std::span<const double>(state.data() + n * d, d); };
    for (std::size_t j = 0; j < K; ++j) {
        const auto jr = static_cast<Eigen::Index>(j);
        const Vector empirical_mean = (state.colwise().sum() * inv_n).transpose();
        parallel_chunks(particles, threads, [&](std::size_t begin, std::size_t end) {
            std::vector<double> mu_buf(d), sig_buf(d * d);
            Vector mu_avg(de);
            Matrix sig_avg(de, de);
            Eigen::Map<const Vector> mu_one(mu_buf.data(), de);
            Eigen::Map<const Matrix> sig_one(sig_buf.data(), de, de);
            const std::span<const double> mean_span(empirical_mean.data(), d);
            for (std::size_t n = begin; n < end; ++n) {
                if (collapse) {
                    model.drift(particle_span(n), mean_span, mu_buf);
                    model.diffusion(particle_span(n), mean_span, sig_buf);
                    mu_avg = mu_one;
                    sig_avg = sig_one;
                } else {
                    mu_avg.setZero();
                    sig_avg.setZero();
                    for (std::size_t other = 0; other < particles; ++other) {
                        model.drift(particle_span(n), particle_span(other), mu_buf);
                        model.diffusion(particle_span(n), particle_span(other), sig_buf);
                        mu_avg += mu_one;
                        sig_avg += sig_one;
                    }
                    mu_avg *= inv_n;
                    sig_avg *= inv_n;
                }
                const auto r = static_cast<Eigen::Index>(n);
                next.row(r) = state.row(r) + dt * mu_avg.transpose() +
                              (sig_avg * increments[n].row(jr).transpose()).transpose();
            }
        });
        state.swap(next);
        for (std::size_t n = 0; n < particles; ++n) {
            paths[n].row(j + 1) = state.row(static_cast<Eigen::Index>(n));
        }
    }
    return paths;
}

} // namespace mvmlp
