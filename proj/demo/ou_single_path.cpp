// One coupled run on the mean-field OU model: the MLP path and the exact
// reference path share the same Brownian increments.

#include <iostream>

#include "mvmlp/mvmlp.hpp"

int main() {
    using namespace mvmlp;
    constexpr std::size_t d = 5;
    constexpr std::uint64_t seed = 1;

    RandomStream param_stream = derive_stream(seed, MultiIndex{0});
    const OuModel model = make_ou_model(random_ou_params(d, param_stream), default_cost_units(d));
    const MlpConfig cfg = MlpConfig::protocol(3); // n = m = 3, K = 27

    const MultiIndex theta{1, 0};
    RandomStream stream = derive_stream(seed, theta);
    const PathMatrix dW = sample_brownian_increments(stream, cfg.K(), d, cfg.grid.dt());

    CostLedger ledger;
    const DiscretePath estimate = mlp_estimate(model, cfg, theta, seed, dW, ledger);
    const DiscretePath reference = ou_exact_path(model.params(), model.initial_value(), cfg.grid, dW);

    std::cout << "X_mlp(T) = " << estimate.row(cfg.K()) << '\n';
    std::cout << "X_ref(T) = " << reference.row(cfg.K()) << '\n';
    std::cout << "L2 error = " << l2_error({{reference, estimate}}) << '\n';
    std::cout << "cost     = " << weighted_cost(ledger, model.costs()) << " (analytic "
              << analytic_cost(cfg.n, cfg.m, cfg.K(), d, model.costs()) << ")\n";
}
