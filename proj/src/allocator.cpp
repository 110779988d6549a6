// Copyright (C) 2026 KVTP contributors
// SPDX-License-Identifier: Apache-2.0

#include "kvtp/allocator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "json.hpp"

#include "kvtp/error.hpp"

namespace kvtp {

void AllocationConfig::validate() const {
    require(alpha > 0.0 && alpha <= 1.0, "alpha must lie in (0, 1]");
    require(max_ratio > 0.0 && max_ratio <= 1.0, "max_ratio must lie in (0, 1]");
    require(temperature > 0.0 && std::isfinite(temperature), "temperature must be positive");
}

Vector unclamped_keep_ratios(std::span<const double> scores, const AllocationConfig& config) {
    config.validate();
    require(!scores.empty(), "allocate: at least one score required");
    Vector r = softmax(scores, config.temperature);
    const double total = config.alpha * static_cast<double>(scores.size());
    for (double& v : r) {
        v *= total;
    }
    return r;
}

Vector allocate(std::span<const double> scores, const AllocationConfig& config) {
    config.validate();
    require(config.alpha <= config.max_ratio,
            "infeasible allocation: alpha " + std::to_string(config.alpha) + " exceeds max_ratio " +
                std::to_string(config.max_ratio));
    const std::size_t n = scores.size();
    Vector ratios = unclamped_keep_ratios(scores, config);

    std::vector<bool> clamped(n, false);
    double mass = config.alpha * static_cast<double>(n);
    // Residue below this is treated as exhausted mass rather than spread over frames.
    const double eps = 1e-12 * static_cast<double>(n);
    for (;;) {
        bool changed = false;
        for (std::size_t i = 0; i < n; ++i) {
            if (!clamped[i] && ratios[i] > config.max_ratio) {
                clamped[i] = true;
                ratios[i] = config.max_ratio;
                mass -= config.max_ratio;
                changed = true;
            }
        }
        if (!changed) {
            break;
        }
        // Redistribute the remaining mass over the free frames by a softmax restricted to them,
        // which stays well defined when their full-set weights underflow.
        std::vector<double> free_scores;
        std::vector<std::size_t> free_index;
        for (std::size_t i = 0; i < n; ++i) {
            if (!clamped[i]) {
                free_scores.push_back(scores[i]);
                free_index.push_back(i);
            }
        }
        if (free_index.empty()) {
            break;
        }
        if (mass <= eps) {
            mass = 0.0;
        }
        const Vector w = softmax(free_scores, config.temperature);
        for (std::size_t k = 0; k < free_index.size(); ++k) {
            ratios[free_index[k]] = mass * w[k];
        }
    }
    return ratios;
}

std::vector<std::size_t> to_token_budgets(std::span<const double> ratios, std::size_t tokens_per_frame) {
    require(tokens_per_frame >= 1, "tokens per frame must be positive");
    const double p = static_cast<double>(tokens_per_frame);
    std::vector<std::size_t> budgets(ratios.size());
    std::vector<double> remainder(ratios.size());
    double exact_total = 0.0;
    std::size_t floor_total = 0;
    for (std::size_t i = 0; i < ratios.size(); ++i) {
        require(ratios[i] >= 0.0 && ratios[i] <= 1.0 + 1e-12, "keep ratios must lie in [0, 1]");
        const double x = std::clamp(ratios[i], 0.0, 1.0) * p;
        exact_total += x;
        const double fl = std::floor(x);
        budgets[i] = static_cast<std::size_t>(fl);
        remainder[i] = x - fl;
        floor_total += budgets[i];
    }
    const auto target = static_cast<std::size_t>(std::llround(exact_total));
    std::size_t extra = target > floor_total ? target - floor_total : 0;

    std::vector<std::size_t> order(ratios.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t l, std::size_t r) { return remainder[l] > remainder[r]; });
    for (std::size_t k = 0; k < order.size() && extra > 0; ++k) {
        if (budgets[order[k]] < tokens_per_frame) {
            ++budgets[order[k]];
            --extra;
        }
    }
    return budgets;
}

SparsityReport sparsity(std::span<const double> scores, const AllocationConfig& config, double beta) {
    const Vector r = unclamped_keep_ratios(scores, config);
    const double max_r = *std::max_element(r.begin(), r.end());
    SparsityReport report;
    report.sparsity = max_r / config.alpha;
    report.passes_sparsity = max_r >= beta * config.alpha;
    report.passes_length = scores.size() >= kMinCuratedFrames;
    return report;
}

Vector hard_allocation(std::span<const double> scores, double keep_fraction) {
    require(keep_fraction > 0.0 && keep_fraction <= 1.0, "keep fraction must lie in (0, 1]");
    require(!scores.empty(), "hard_allocation: at least one score required");
    const std::size_t n = scores.size();
    // Guard against 0.2 * 10 landing a hair above 2.
    const auto keep = std::min<std::size_t>(
        n, static_cast<std::size_t>(std::ceil(keep_fraction * static_cast<double>(n) - 1e-9)));
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t l, std::size_t r) { return scores[l] > scores[r]; });
    Vector out(n, 0.0);
    for (std::size_t k = 0; k < keep; ++k) {
        out[order[k]] = 1.0;
    }
    return out;
}

std::string format_allocation_report(std::span<const double> scores, std::span<const double> ratios,
                                     std::span<const std::size_t> budgets, const SparsityReport& report,
                                     double beta, ReportFormat format) {
    require(scores.size() == ratios.size() && ratios.size() == budgets.size(), "report: length mismatch");
    if (format == ReportFormat::Json) {
        nlohmann::json frames = nlohmann::json::array();
        for (std::size_t i = 0; i < scores.size(); ++i) {
            frames.push_back({{"index", i}, {"score", scores[i]}, {"ratio", ratios[i]}, {"budget", budgets[i]}});
        }
        nlohmann::json doc = {{"frames", frames},
                              {"sparsity", report.sparsity},
                              {"beta", beta},
                              {"passes_sparsity", report.passes_sparsity},
                              {"passes_length", report.passes_length}};
        return doc.dump(2) + "\n";
    }
    std::ostringstream out;
    char line[160];
    out << "index, score, ratio, budget\n";
    for (std::size_t i = 0; i < scores.size(); ++i) {
        std::snprintf(line, sizeof(line), "%zu, %.7f, %.7f, %zu\n", i, scores[i], ratios[i], budgets[i]);
        out << line;
    }
    std::snprintf(line, sizeof(line), "# sparsity = %.6f (beta = %.3f)\n", report.sparsity, beta);
    out << line;
    out << "# passes_sparsity = " << (report.passes_sparsity ? "true" : "false") << '\n';
    out << "# passes_length = " << (report.passes_length ? "true" : "false") << '\n';
    return out.str();
}

}  // namespace kvtp
