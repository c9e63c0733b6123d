#include "trex/nn/grad_check.hpp"

#include "trex/nn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace trex::nn {

namespace {

double projected(const GradCheckFn& op, const std::vector<Tensor<double>>& inputs, const std::vector<double>& weights)
{
    NoGradGuard guard;
    const Tensor<double> y = op(inputs);
    if (y.numel() != weights.size()) throw DimensionError("grad_check: op output shape changed between calls");
    double total = 0;
    for (std::size_t i = 0; i < weights.size(); ++i) total += weights[i] * y.at(i);
    if (!std::isfinite(total)) throw NumericError("grad_check: non-finite value while probing");
    return total;
}

}  // namespace

GradCheckReport grad_check_report(const GradCheckFn& op, std::vector<Tensor<double>> inputs,
                                  const GradCheckOptions& options)
{
    if (options.eps < 1e-7 || options.eps > 1e-3) throw std::invalid_argument("grad_check: eps must lie in [1e-7, 1e-3]");
    std::mt19937_64 rng(options.seed);
    for (auto& in : inputs) {
        in.set_requires_grad(true);
        in.zero_grad();
    }

    std::vector<double> weights;
    {
        const Tensor<double> y = op(inputs);
        std::uniform_real_distribution<double> dist(-1.0, 1.0);
        weights.resize(y.numel());
        for (auto& w : weights) w = dist(rng);
        for (double v : y.values()) {
            if (!std::isfinite(v)) throw NumericError("grad_check: non-finite forward output");
        }
        const Tensor<double> f = sum(mul(y, Tensor<double>(y.shape(), weights)));
        if (f.requires_grad()) f.backward();
    }

    GradCheckReport report;
    for (auto& in : inputs) {
        std::vector<double> analytic(in.numel(), 0.0);
        if (in.has_grad()) std::copy(in.grad().begin(), in.grad().end(), analytic.begin());

        std::vector<std::size_t> probes(in.numel());
        std::iota(probes.begin(), probes.end(), std::size_t{0});
        if (options.max_probes_per_input && probes.size() > options.max_probes_per_input) {
            std::shuffle(probes.begin(), probes.end(), rng);
            probes.resize(options.max_probes_per_input);
        }
        auto values = in.mutable_values();
        for (std::size_t idx : probes) {
            const double original = values[idx];
            auto at = [&](double offset) {
                values[idx] = original + offset;
                return projected(op, inputs, weights);
            };
            const double h = options.eps;
            double numeric = (at(h) - at(-h)) / (2.0 * h);
            if (options.fourth_order) numeric = (4.0 * numeric - (at(2 * h) - at(-2 * h)) / (4.0 * h)) / 3.0;
            values[idx] = original;
            const double abs_err = std::abs(analytic[idx] - numeric);
            const double denom = std::max({std::abs(analytic[idx]), std::abs(numeric), options.abs_floor});
            report.max_absolute_error = std::max(report.max_absolute_error, abs_err);
            report.max_relative_error = std::max(report.max_relative_error, abs_err / denom);
            ++report.probes;
        }
    }
    return report;
}

double grad_check(const GradCheckFn& op, std::vector<Tensor<double>> inputs, double eps)
{
    GradCheckOptions options;
    options.eps = eps;
    return grad_check_report(op, std::move(inputs), options).max_relative_error;
}

}  // namespace trex::nn
