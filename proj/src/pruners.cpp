// Copyright (C) 2026 KVTP contributors
// SPDX-License-Identifier: Apache-2.0

#include "kvtp/pruners.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "kvtp/allocator.hpp"
#include "kvtp/error.hpp"
#include "kvtp/io.hpp"

namespace kvtp {

namespace {

// Zero-norm tokens compare as orthogonal to everything.
double token_similarity(std::span<const double> u, std::span<const double> v) {
    const double nu = l2_norm(u);
    const double nv = l2_norm(v);
    if (nu == 0.0 || nv == 0.0) {
        return 0.0;
    }
    return dot(u, v) / (nu * nv);
}

PrunedFrame gather(const FrameTokenSet& frame, const std::vector<std::size_t>& keep) {
    PrunedFrame out;
    out.frame_index = frame.frame_index;
    out.tokens = Matrix(keep.size(), frame.tokens.cols());
    out.kept_indices = keep;
    out.merged.assign(keep.size(), false);
    for (std::size_t k = 0; k < keep.size(); ++k) {
        const auto src = frame.tokens.row(keep[k]);
        std::copy(src.begin(), src.end(), out.tokens.row(k).begin());
    }
    return out;
}

// groups[k] lists the original indices averaged into output row k (the survivor first).
PrunedFrame gather_merged(const FrameTokenSet& frame, const std::vector<std::size_t>& keep,
                          const std::vector<std::vector<std::size_t>>& groups) {
    PrunedFrame out = gather(frame, keep);
    for (std::size_t k = 0; k < keep.size(); ++k) {
        if (groups[k].size() <= 1) {
            continue;
        }
        auto row = out.tokens.row(k);
        std::fill(row.begin(), row.end(), 0.0);
        for (std::size_t idx : groups[k]) {
            const auto src = frame.tokens.row(idx);
            for (std::size_t c = 0; c < row.size(); ++c) {
                row[c] += src[c];
            }
        }
        for (double& v : row) {
            v /= static_cast<double>(groups[k].size());
        }
        out.merged[k] = true;
    }
    return out;
}

void check_budget(const FrameTokenSet& frame, std::size_t budget) {
    require(budget <= frame.token_count(), "frame " + std::to_string(frame.frame_index) + ": budget " +
                                               std::to_string(budget) + " exceeds token count " +
                                               std::to_string(frame.token_count()));
}

}  // namespace

void FrameTokenSet::validate() const {
    if (saliency) {
        require(saliency->size() == tokens.rows(), "frame " + std::to_string(frame_index) +
                                                       ": saliency length does not match token count");
        for (double v : *saliency) {
            require(std::isfinite(v), "saliency must be finite", ErrorCode::Numerical);
        }
    }
}

std::size_t PrunedSequence::total_tokens() const {
    std::size_t n = 0;
    for (const auto& f : frames) {
        n += f.size();
    }
    return n;
}

PruneBackend parse_backend(const std::string& name) {
    if (name == "random") return PruneBackend::Random;
    if (name == "saliency") return PruneBackend::Saliency;
    if (name == "prumerge") return PruneBackend::SaliencyMerge;
    if (name == "merge") return PruneBackend::Bipartite;
    if (name == "hard") return PruneBackend::Hard;
    throw Error(ErrorCode::InvalidArgument, "unknown backend '" + name + "' (random|saliency|prumerge|merge|hard)");
}

std::string backend_name(PruneBackend backend) {
    switch (backend) {
    case PruneBackend::Random: return "random";
    case PruneBackend::Saliency: return "saliency";
    case PruneBackend::SaliencyMerge: return "prumerge";
    case PruneBackend::Bipartite: return "merge";
    case PruneBackend::Hard: return "hard";
    }
    return "unknown";
}

PrunedFrame random_prune(const FrameTokenSet& frame, std::size_t budget, std::uint64_t seed) {
    frame.validate();
    check_budget(frame, budget);
    std::vector<std::size_t> all(frame.token_count());
    std::iota(all.begin(), all.end(), 0);
    std::vector<std::size_t> keep;
    keep.reserve(budget);
    std::mt19937_64 rng(seed ^ (0x9E3779B97F4A7C15ull * (frame.frame_index + 1)));
    // Selection sampling over a forward range keeps the original order.
    std::sample(all.begin(), all.end(), std::back_inserter(keep), budget, rng);
    return gather(frame, keep);
}

PrunedFrame saliency_prune(const FrameTokenSet& frame, std::size_t budget, bool merge_dropped) {
    frame.validate();
    require(frame.saliency.has_value(), "frame " + std::to_string(frame.frame_index) + ": saliency backend needs saliency");
    check_budget(frame, budget);
    const Vector& sal = *frame.saliency;
    std::vector<std::size_t> order(frame.token_count());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t l, std::size_t r) { return sal[l] > sal[r]; });
    std::vector<std::size_t> keep(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(budget));
    std::sort(keep.begin(), keep.end());
    if (!merge_dropped || keep.empty() || budget == frame.token_count()) {
        return gather(frame, keep);
    }

    std::vector<std::vector<std::size_t>> groups(keep.size());
    for (std::size_t k = 0; k < keep.size(); ++k) {
        groups[k].push_back(keep[k]);
    }
    for (std::size_t t = budget; t < order.size(); ++t) {
        const std::size_t dropped = order[t];
        std::size_t best = 0;
        double best_sim = -2.0;
        for (std::size_t k = 0; k < keep.size(); ++k) {
            const double s = token_similarity(frame.tokens.row(dropped), frame.tokens.row(keep[k]));
            if (s > best_sim) {
                best_sim = s;
                best = k;
            }
        }
        groups[best].push_back(dropped);
    }
    return gather_merged(frame, keep, groups);
}

PrunedFrame bipartite_merge(const FrameTokenSet& frame, std::size_t budget) {
    frame.validate();
    check_budget(frame, budget);
    const std::size_t p = frame.token_count();
    const std::size_t merges = p - budget;
    const std::size_t set_a = (p + 1) / 2;
    const std::size_t set_b = p / 2;
    require(merges <= set_a && (merges == 0 || set_b > 0),
            "frame " + std::to_string(frame.frame_index) + ": cannot merge " + std::to_string(merges) +
                " tokens with only " + std::to_string(set_a) + " tokens in the source set");
    if (merges == 0) {
        std::vector<std::size_t> all(p);
        std::iota(all.begin(), all.end(), 0);
        return gather(frame, all);
    }

    // A = even positions, B = odd positions.
    std::vector<std::size_t> match(set_a);
    std::vector<double> best_sim(set_a, -2.0);
    for (std::size_t ai = 0; ai < set_a; ++ai) {
        for (std::size_t bi = 0; bi < set_b; ++bi) {
            const double s = token_similarity(frame.tokens.row(2 * ai), frame.tokens.row(2 * bi + 1));
            if (s > best_sim[ai]) {
                best_sim[ai] = s;
                match[ai] = bi;
            }
        }
    }
    std::vector<std::size_t> order(set_a);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t l, std::size_t r) { return best_sim[l] > best_sim[r]; });

    std::vector<bool> absorbed(set_a, false);
    std::vector<std::vector<std::size_t>> b_groups(set_b);
    for (std::size_t bi = 0; bi < set_b; ++bi) {
        b_groups[bi].push_back(2 * bi + 1);
    }
    for (std::size_t k = 0; k < merges; ++k) {
        absorbed[order[k]] = true;
        b_groups[match[order[k]]].push_back(2 * order[k]);
    }

    std::vector<std::size_t> keep;
    std::vector<std::vector<std::size_t>> groups;
    for (std::size_t t = 0; t < p; ++t) {
        if (t % 2 == 0) {
            if (!absorbed[t / 2]) {
                keep.push_back(t);
                groups.push_back({t});
            }
        } else {
            keep.push_back(t);
            groups.push_back(b_groups[t / 2]);
        }
    }
    return gather_merged(frame, keep, groups);
}

PrunedSequence hard_frame_select(std::span<const FrameTokenSet> frames, std::span<const double> scores,
                                 double fraction) {
    require(frames.size() == scores.size(), "hard_frame_select: score count does not match frame count");
    const Vector chosen = hard_allocation(scores, fraction);
    PrunedSequence out;
    for (std::size_t i = 0; i < frames.size(); ++i) {
        const FrameTokenSet& f = frames[i];
        std::vector<std::size_t> keep;
        if (chosen[i] > 0.0) {
            keep.resize(f.token_count());
            std::iota(keep.begin(), keep.end(), 0);
        }
        out.frames.push_back(gather(f, keep));
    }
    return out;
}

PrunedSequence prune_video(std::span<const FrameTokenSet> frames, std::span<const std::size_t> budgets,
                           PruneBackend backend, std::uint64_t seed) {
    require(frames.size() == budgets.size(), "prune_video: " + std::to_string(budgets.size()) + " budgets for " +
                                                 std::to_string(frames.size()) + " frames");
    PrunedSequence out;
    out.frames.reserve(frames.size());
    for (std::size_t i = 0; i < frames.size(); ++i) {
        const FrameTokenSet& f = frames[i];
        try {
            switch (backend) {
            case PruneBackend::Random:
                out.frames.push_back(random_prune(f, budgets[i], seed));
                break;
            case PruneBackend::Saliency:
                out.frames.push_back(saliency_prune(f, budgets[i], false));
                break;
            case PruneBackend::SaliencyMerge:
                out.frames.push_back(saliency_prune(f, budgets[i], true));
                break;
            case PruneBackend::Bipartite:
                out.frames.push_back(bipartite_merge(f, budgets[i]));
                break;
            case PruneBackend::Hard: {
                require(budgets[i] == 0 || budgets[i] == f.token_count(),
                        "hard backend needs budgets of 0 or " + std::to_string(f.token_count()));
                std::vector<std::size_t> keep(budgets[i]);
                std::iota(keep.begin(), keep.end(), 0);
                out.frames.push_back(gather(f, keep));
                break;
            }
            }
        } catch (const Error& e) {
            throw Error(e.code(), "frame " + std::to_string(i) + ": " + e.what());
        }
    }
    return out;
}

std::string pruned_index_csv(const PrunedSequence& pruned) {
    std::ostringstream out;
    out << "frame_index,position,original_index,merged\n";
    for (const auto& f : pruned.frames) {
        for (std::size_t k = 0; k < f.size(); ++k) {
            out << f.frame_index << ',' << k << ',' << f.kept_indices[k] << ',' << (f.merged[k] ? 1 : 0) << '\n';
        }
    }
    return out.str();
}

void save_pruned(const PrunedSequence& pruned, const std::filesystem::path& matrix_path,
                 const std::filesystem::path& index_path) {
    const std::size_t cols = pruned.frames.empty() ? 0 : pruned.frames.front().tokens.cols();
    std::vector<double> data;
    data.reserve(pruned.total_tokens() * cols);
    for (const auto& f : pruned.frames) {
        const auto d = f.tokens.data();
        data.insert(data.end(), d.begin(), d.end());
    }
    write_matrix_binary(matrix_path, Matrix(pruned.total_tokens(), cols, std::move(data)));
    write_text_file(index_path, pruned_index_csv(pruned));
}

}  // namespace kvtp
