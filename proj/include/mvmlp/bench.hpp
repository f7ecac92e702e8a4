#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <json.hpp>

#include "mvmlp/mlp.hpp"
#include "mvmlp/models.hpp"
#include "mvmlp/numerics.hpp"
#include "mvmlp/parallel.hpp"
#include "mvmlp/random.hpp"
#include "mvmlp/reference.hpp"

namespace mvmlp {

/// Paired reference/estimate trajectories of one run.
struct PathPair {
    DiscretePath reference;
    DiscretePath estimate;
};

/// d^{-1/2}-adjusted L2 error over R coupled runs:
///   sqrt( 1/(R d K) * sum_r sum_{k=1}^{K} ||ref_r(t_k) - est_r(t_k)||^2 ).
/// Time 0 is excluded.
inline double l2_error(const std::vector<PathPair>& pairs) {
    if (pairs.empty()) {
        throw std::domain_error("l2_error: need at least one run");
    }
    const TimeGrid& grid = pairs.front().reference.grid();
    const std::size_t d = pairs.front().reference.dim();
    double sum = 0.0;
    for (const auto& p : pairs) {
        if (!(p.reference.grid() == grid) || !(p.estimate.grid() == grid) || p.reference.dim() != d ||
            p.estimate.dim() != d) {
            throw std::domain_error("l2_error: paths live on different grids or dimensions");
        }
        sum += (p.reference.values().bottomRows(static_cast<Eigen::Index>(grid.steps())) -
                p.estimate.values().bottomRows(static_cast<Eigen::Index>(grid.steps())))
                   .squaredNorm();
    }
    return std::sqrt(sum / (static_cast<double>(pairs.size()) * static_cast<double>(d) *
                            static_cast<double>(grid.steps())));
}

enum class OutputFormat { csv, json, md };

struct Cell {
    std::size_t n = 1;
    std::size_t m = 1;

    friend bool operator==(const Cell&, const Cell&) = default;
};

struct ExperimentConfig {
    ModelKind model = ModelKind::ou;
    std::size_t d = 10;
    std::vector<Cell> cells{{1, 1}, {2, 2}, {3, 3}, {4, 4}};
    std::optional<std::size_t> fixed_K; // default rule K = m^n
    double T = 1.0;
    std::size_t runs = 10;
    std::uint64_t seed = 2024;
    double rho = kDefaultRho;
    // unset units fall back to default_cost_units(d)
    std::optional<std::uint64_t> cost_mu;
    std::optional<std::uint64_t> cost_sigma;
    std::optional<std::uint64_t> cost_rv;
    DriftTimeMode drift_time_mode = DriftTimeMode::spec;
    DriftScaleMode drift_scale_mode = DriftScaleMode::spec;
    std::size_t threads = 1;
    std::filesystem::path out_dir = "results";
    std::vector<OutputFormat> formats{OutputFormat::csv, OutputFormat::json, OutputFormat::md};
    bool full_grid = false;

    CostUnits cost_units() const {
        CostUnits u = default_cost_units(d);
        u.mu = cost_mu.value_or(u.mu);
        u.sigma = cost_sigma.value_or(u.sigma);
        u.rv = cost_rv.value_or(u.rv);
        return u;
    }

    std::size_t steps_for(const Cell& c) const {
        if (fixed_K) {
            return *fixed_K;
        }
        return static_cast<std::size_t>(detail::checked_pow(c.m, c.n));
    }

    void validate() const {
        if (runs == 0) {
            throw std::invalid_argument("runs must be >= 1");
        }
        if (d == 0) {
            throw std::invalid_argument("d must be >= 1");
        }
        if (!(T > 0.0)) {
            throw std::invalid_argument("T must be > 0");
        }
        if (!(rho > 0.0)) {
            throw std::invalid_argument("rho must be > 0");
        }
        if (fixed_K && *fixed_K == 0) {
            throw std::invalid_argument("K must be >= 1");
        }
        for (const auto& c : cells) {
            if (c.m == 0) {
                throw std::invalid_argument("every cell needs m >= 1");
            }
        }
        if (!full_grid) {
            if (d > kDeskMaxDim) {
                throw std::invalid_argument("d > " + std::to_string(kDeskMaxDim) +
                                            " requires --full-grid");
            }
            for (const auto& c : cells) {
                if (c.n > kDeskMaxLevel || c.m > kDeskMaxLevel) {
                    throw std::invalid_argument("n or m > " + std::to_string(kDeskMaxLevel) +
                                                " requires --full-grid");
                }
            }
        }
    }

    static constexpr std::size_t kDeskMaxDim = 100;
    static constexpr std::size_t kDeskMaxLevel = 4;
};

struct ResultRow {
    std::string model;
    std::size_t d = 0;
    std::size_t n = 0;
    std::size_t m = 0;
    std::size_t K = 0;
    double l2_error = 0.0;
    double mean_wall_time_seconds = 0.0;
    std::uint64_t mean_cost = 0;
    std::vector<double> per_run_errors;

    friend bool operator==(const ResultRow&, const ResultRow&) = default;
};

/// Holds the randomly drawn model of one experiment; parameters come from the
/// dedicated stream (seed, (0)) and are shared by every cell and run.
class Experiment {
public:
    explicit Experiment(ExperimentConfig cfg) : cfg_(std::move(cfg)), model_(build_model(cfg_)) {}

    // Fixed, caller-supplied parameters; cfg.model and cfg.d are taken from them.
    Experiment(ExperimentConfig cfg, OuParams params)
        : cfg_(with_model(std::move(cfg), ModelKind::ou, params.dim())),
          model_(make_ou_model(std::move(params), cfg_.cost_units())) {}
    Experiment(ExperimentConfig cfg, KuramotoParams params)
        : cfg_(with_model(std::move(cfg), ModelKind::kuramoto, params.dim())),
          model_(make_kuramoto_model(std::move(params), cfg_.cost_units())) {}

    const ExperimentConfig& config() const noexcept { return cfg_; }

    template <class Fn>
    decltype(auto) visit_model(Fn&& fn) const {
        return std::visit(std::forward<Fn>(fn), model_);
    }

    ResultRow run_cell(std::size_t n, std::size_t m) const {
        const Cell cell{n, m};
        const TimeGrid grid(cfg_.T, cfg_.steps_for(cell));
        MlpConfig mlp_cfg{n, m, grid, cfg_.drift_time_mode, cfg_.drift_scale_mode};
        return std::visit([&](const auto& model) { return run_cell_impl(model, mlp_cfg); }, model_);
    }

    std::vector<ResultRow> run() const {
        std::vector<ResultRow> rows;
        rows.reserve(cfg_.cells.size());
        for (const auto& c : cfg_.cells) {
            rows.push_back(run_cell(c.n, c.m));
        }
        return rows;
    }

    /// Total analytic cost (units) of all cells and runs.
    std::uint64_t planned_cost() const {
        std::uint64_t total = 0;
        for (const auto& c : cfg_.cells) {
            const std::uint64_t one = analytic_cost(c.n, c.m, cfg_.steps_for(c), cfg_.d, cfg_.cost_units());
            total = detail::checked_add(total, detail::checked_mul(one, cfg_.runs));
        }
        return total;
    }

    /// Index of the run's top-level randomness; its increments come from this stream.
    static MultiIndex run_index(std::size_t r) { return MultiIndex{1, static_cast<std::uint64_t>(r)}; }
    static MultiIndex parameter_index() { return MultiIndex{0}; }

private:
    using AnyModel = std::variant<OuModel, KuramotoModel>;

    static ExperimentConfig with_model(ExperimentConfig cfg, ModelKind kind, std::size_t d) {
        cfg.model = kind;
        cfg.d = d;
        cfg.validate();
        return cfg;
    }

    static AnyModel build_model(const ExperimentConfig& cfg) {
        cfg.validate();
        RandomStream stream = derive_stream(cfg.seed, parameter_index());
        if (cfg.model == ModelKind::ou) {
            return make_ou_model(random_ou_params(cfg.d, stream, cfg.rho), cfg.cost_units());
        }
        return make_kuramoto_model(random_kuramoto_params(cfg.d, stream, cfg.rho), cfg.cost_units());
    }

    template <class M>
    ResultRow run_cell_impl(const M& model, const MlpConfig& mlp_cfg) const {
        const TimeGrid& grid = mlp_cfg.grid;
        const std::size_t d = model.dim();
        std::optional<KuramotoMoments> moments;
        if constexpr (std::is_same_v<M, KuramotoModel>) {
            moments = kuramoto_moments(model.params(), model.initial_value(), grid);
        }
        const std::uint64_t cost = analytic_cost(mlp_cfg.n, mlp_cfg.m, grid.steps(), d, model.costs());

        std::vector<std::optional<PathPair>> pairs(cfg_.runs);
        std::vector<double> seconds(cfg_.runs, 0.0);
        parallel_for(cfg_.runs, cfg_.threads, [&](std::size_t r) {
            const MultiIndex theta = run_index(r);
            RandomStream stream = derive_stream(cfg_.seed, theta);
            const PathMatrix dW = sample_brownian_increments(stream, grid.steps(), d, grid.dt());

            DiscretePath reference = [&] {
                if constexpr (std::is_same_v<M, KuramotoModel>) {
                    return kuramoto_reference_path(model.params(), model.initial_value(), grid, dW, *moments);
                } else {
                    return ou_exact_path(model.params(), model.initial_value(), grid, dW);
                }
            }();

            CostLedger ledger;
            const auto start = std::chrono::steady_clock::now();
            DiscretePath estimate = mlp_estimate(model, mlp_cfg, theta, cfg_.seed, dW, ledger);
            seconds[r] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

            const LedgerCheck check = verify_ledger(ledger, mlp_cfg.n, mlp_cfg.m, grid.steps(), d, model.costs());
            if (!check) {
                throw std::logic_error("run " + std::to_string(r) + ": " + check.report);
            }
            pairs[r] = PathPair{std::move(reference), std::move(estimate)};
        });

        ResultRow row;
        row.model = to_string(cfg_.model);
        row.d = d;
        row.n = mlp_cfg.n;
        row.m = mlp_cfg.m;
        row.K = grid.steps();
        row.mean_cost = cost;
        std::vector<PathPair> all;
        all.reserve(cfg_.runs);
        double total_time = 0.0;
        for (std::size_t r = 0; r < cfg_.runs; ++r) {
            row.per_run_errors.push_back(l2_error({*pairs[r]}));
            total_time += seconds[r];
            all.push_back(std::move(*pairs[r]));
        }
        row.l2_error = l2_error(all);
        row.mean_wall_time_seconds = total_time / static_cast<double>(cfg_.runs);
        return row;
    }

    ExperimentConfig cfg_;
    AnyModel model_;
};

inline ResultRow run_cell(const ExperimentConfig& cfg, std::size_t n, std::size_t m) {
    return Experiment(cfg).run_cell(n, m);
}

// ---------------------------------------------------------------------------
// Output
// ---------------------------------------------------------------------------

namespace detail {

inline std::string format_double(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

} // namespace detail

inline constexpr const char* kCsvHeader = "model,d,n,m,K,l2_error,time_s,cost";

/// One line per row, LF endings. Doubles use 17 significant digits.
inline std::string render_csv(const std::vector<ResultRow>& rows, bool include_time = true) {
    std::ostringstream os;
    os << kCsvHeader << '\n';
    for (const auto& r : rows) {
        os << r.model << ',' << r.d << ',' << r.n << ',' << r.m << ',' << r.K << ','
           << detail::format_double(r.l2_error) << ','
           << (include_time ? detail::format_double(r.mean_wall_time_seconds) : std::string()) << ','
           << r.mean_cost << '\n';
    }
    return os.str();
}

inline nlohmann::json to_json(const ResultRow& r) {
    return {{"model", r.model},
            {"d", r.d},
            {"n", r.n},
            {"m", r.m},
            {"K", r.K},
            {"l2_error", r.l2_error},
            {"time_s", r.mean_wall_time_seconds},
            {"cost", r.mean_cost},
            {"per_run_errors", r.per_run_errors}};
}

inline ResultRow row_from_json(const nlohmann::json& j) {
    ResultRow r;
    r.model = j.at("model").get<std::string>();
    r.d = j.at("d").get<std::size_t>();
    r.n = j.at("n").get<std::size_t>();
    r.m = j.at("m").get<std::size_t>();
    r.K = j.at("K").get<std::size_t>();
    r.l2_error = j.at("l2_error").get<double>();
    r.mean_wall_time_seconds = j.at("time_s").get<double>();
    r.mean_cost = j.at("cost").get<std::uint64_t>();
    r.per_run_errors = j.at("per_run_errors").get<std::vector<double>>();
    return r;
}

inline std::string render_json(const std::vector<ResultRow>& rows) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& r : rows) {
        arr.push_back(to_json(r));
    }
    return arr.dump(2) + "\n";
}

inline std::vector<ResultRow> parse_json_rows(const std::string& text) {
    const nlohmann::json arr = nlohmann::json::parse(text);
    if (!arr.is_array()) {
        throw std::invalid_argument("results JSON must be an array");
    }
    std::vector<ResultRow> rows;
    for (const auto& j : arr) {
        rows.push_back(row_from_json(j));
    }
    return rows;
}

/// Table with one column per cell and rows L2-Error / Time / Cost, grouped by d.
inline std::string render_markdown(const std::vector<ResultRow>& rows) {
    std::ostringstream os;
    if (rows.empty()) {
        os << "| d | |\n|---|---|\n";
        return os.str();
    }
    auto label = [](const ResultRow& r) {
        std::ostringstream l;
        if (r.n == r.m) {
            l << "n = m = " << r.n;
        } else {
            l << "n = " << r.n << ", m = " << r.m;
        }
        return l.str();
    };
    std::vector<std::size_t> dims;
    for (const auto& r : rows) {
        if (std::find(dims.begin(), dims.end(), r.d) == dims.end()) {
            dims.push_back(r.d);
        }
    }
    for (std::size_t d : dims) {
        std::vector<const ResultRow*> group;
        for (const auto& r : rows) {
            if (r.d == d) {
                group.push_back(&r);
            }
        }
        os << "| d | |";
        for (const auto* r : group) {
            os << ' ' << label(*r) << " |";
        }
        os << "\n|---|---|";
        for (std::size_t i = 0; i < group.size(); ++i) {
            os << "---:|";
        }
        os << "\n| " << d << " | L2-Error |";
        for (const auto* r : group) {
            os << ' ' << std::scientific << std::setprecision(3) << r->l2_error << " |";
        }
        os << "\n| | Time |";
        for (const auto* r : group) {
            os << ' ' << std::scientific << std::setprecision(3) << r->mean_wall_time_seconds << " |";
        }
        os << "\n| | Cost |";
        for (const auto* r : group) {
            os << ' ' << r->mean_cost << " |";
        }
        os << "\n\n";
    }
    return os.str();
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw std::runtime_error("cannot open " + path.string() + " for writing");
    }
    out << text;
    if (!out) {
        throw std::runtime_error("failed writing " + path.string());
    }
}

/// Run every cell and write the requested formats into cfg.out_dir.
inline std::vector<ResultRow> run_experiment(const ExperimentConfig& cfg) {
    const std::vector<ResultRow> rows = cfg.cells.empty() ? std::vector<ResultRow>{} : Experiment(cfg).run();
    std::error_code ec;
    std::filesystem::create_directories(cfg.out_dir, ec);
    if (ec) {
        throw std::runtime_error("cannot create output directory " + cfg.out_dir.string() + ": " + ec.message());
    }
    for (OutputFormat f : cfg.formats) {
        switch (f) {
        case OutputFormat::csv:
            write_text(cfg.out_dir / "results.csv", render_csv(rows));
            break;
        case OutputFormat::json:
            write_text(cfg.out_dir / "results.json", render_json(rows));
            break;
        case OutputFormat::md:
            write_text(cfg.out_dir / "table.md", render_markdown(rows));
            break;
        }
    }
    return rows;
}

// ---------------------------------------------------------------------------
// Config file
// ---------------------------------------------------------------------------

inline OutputFormat parse_output_format(const std::string& s) {
    if (s == "csv") {
        return OutputFormat::csv;
    }
    if (s == "json") {
        return OutputFormat::json;
    }
    if (s == "md") {
        return OutputFormat::md;
    }
    throw std::invalid_argument("unknown output format '" + s + "' (expected csv|json|md)");
}

inline std::vector<Cell> cells_from_levels(const std::vector<std::size_t>& levels) {
    std::vector<Cell> cells;
    for (std::size_t l : levels) {
        cells.push_back({l, l});
    }
    return cells;
}

/// Apply the keys present in a JSON object onto cfg; keys mirror the CLI flags.
inline void apply_json_config(ExperimentConfig& cfg, const nlohmann::json& j) {
    if (!j.is_object()) {
        throw std::invalid_argument("config file must contain a JSON object");
    }
    for (const auto& [key, value] : j.items()) {
        if (key == "model") {
            cfg.model = parse_model_kind(value.get<std::string>());
        } else if (key == "d") {
            cfg.d = value.get<std::size_t>();
        } else if (key == "levels") {
            cfg.cells = cells_from_levels(value.get<std::vector<std::size_t>>());
        } else if (key == "cells") {
            cfg.cells.clear();
            for (const auto& c : value) {
                cfg.cells.push_back({c.at("n").get<std::size_t>(), c.at("m").get<std::size_t>()});
            }
        } else if (key == "K") {
            cfg.fixed_K = value.get<std::size_t>();
        } else if (key == "runs") {
            cfg.runs = value.get<std::size_t>();
        } else if (key == "seed") {
            cfg.seed = value.get<std::uint64_t>();
        } else if (key == "T") {
            cfg.T = value.get<double>();
        } else if (key == "rho") {
            cfg.rho = value.get<double>();
        } else if (key == "drift_time_mode" || key == "drift-time-mode") {
            cfg.drift_time_mode = parse_drift_mode<DriftTimeMode>(value.get<std::string>());
        } else if (key == "drift_scale_mode" || key == "drift-scale-mode") {
            cfg.drift_scale_mode = parse_drift_mode<DriftScaleMode>(value.get<std::string>());
        } else if (key == "threads") {
            cfg.threads = value.get<std::size_t>();
        } else if (key == "out") {
            cfg.out_dir = value.get<std::string>();
        } else if (key == "format") {
            cfg.formats.clear();
            if (value.is_string()) {
                cfg.formats.push_back(parse_output_format(value.get<std::string>()));
            } else {
                for (const auto& f : value) {
                    cfg.formats.push_back(parse_output_format(f.get<std::string>()));
                }
            }
        } else if (key == "cost_mu" || key == "cost-mu") {
            cfg.cost_mu = value.get<std::uint64_t>();
        } else if (key == "cost_sigma" || key == "cost-sigma") {
            cfg.cost_sigma = value.get<std::uint64_t>();
        } else if (key == "cost_rv" || key == "cost-rv") {
            cfg.cost_rv = value.get<std::uint64_t>();
        } else if (key == "full_grid" || key == "full-grid") {
            cfg.full_grid = value.get<bool>();
        } else {
            throw std::invalid_argument("unknown config key '" + key + "'");
        }
    }
}

} // namespace mvmlp
