// Copyright (C) 2026 KVTP contributors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <numeric>
#include <random>
#include <set>

#include "doctest.h"
#include "kvtp/error.hpp"
#include "kvtp/pruners.hpp"
#include "oracles.hpp"

using kvtp::FrameTokenSet;
using kvtp::Matrix;
using kvtp::Vector;

namespace {

FrameTokenSet random_frame(std::mt19937_64& rng, std::size_t p, std::size_t d, bool with_saliency = true) {
    std::normal_distribution<double> gauss;
    std::uniform_real_distribution<double> unit;
    FrameTokenSet f;
    f.tokens = Matrix(p, d);
    for (auto& v : f.tokens.data()) v = gauss(rng);
    if (with_saliency) {
        Vector s(p);
        for (auto& v : s) v = unit(rng);
        f.saliency = s;
    }
    return f;
}

bool identity(const FrameTokenSet& in, const kvtp::PrunedFrame& out) {
    std::vector<std::size_t> all(in.token_count());
    std::iota(all.begin(), all.end(), 0);
    return out.tokens == in.tokens && out.kept_indices == all;
}

}  // namespace

TEST_CASE("random pruning") {
    std::mt19937_64 rng(1);
    const auto f = random_frame(rng, 4, 3);
    CHECK(identity(f, kvtp::random_prune(f, 4, 5)));
    CHECK(kvtp::random_prune(f, 0, 5).size() == 0);
    const auto a = kvtp::random_prune(f, 2, 42);
    const auto b = kvtp::random_prune(f, 2, 42);
    CHECK(a.kept_indices == b.kept_indices);
    CHECK(a.size() == 2);
    CHECK(std::is_sorted(a.kept_indices.begin(), a.kept_indices.end()));
    CHECK_THROWS_AS(kvtp::random_prune(f, 5, 0), kvtp::Error);
}

TEST_CASE("saliency pruning") {
    FrameTokenSet f;
    f.tokens = Matrix::from_rows({{1, 0}, {0, 1}, {1, 1}, {2, 0}});
    f.saliency = Vector{0.1, 0.9, 0.5, 0.5};
    CHECK(kvtp::saliency_prune(f, 2, false).kept_indices == std::vector<std::size_t>{1, 2});
    CHECK(identity(f, kvtp::saliency_prune(f, 4, false)));
    CHECK(identity(f, kvtp::saliency_prune(f, 4, true)));

    FrameTokenSet twin;
    twin.tokens = Matrix::from_rows({{1, 0}, {1, 0}});
    twin.saliency = Vector{1, 0};
    const auto merged = kvtp::saliency_prune(twin, 1, true);
    CHECK(merged.tokens == Matrix::from_rows({{1, 0}}));

    FrameTokenSet missing;
    missing.tokens = Matrix(3, 2, 1.0);
    CHECK_THROWS_AS(kvtp::saliency_prune(missing, 1, false), kvtp::Error);
}

TEST_CASE("saliency top-k equals the argsort oracle") {
    std::mt19937_64 rng(99);
    for (int rep = 0; rep < 1000; ++rep) {
        const std::size_t p = 1 + rng() % 48;
        auto f = random_frame(rng, p, 4);
        if (rep % 5 == 0) {
            for (auto& v : *f.saliency) v = std::round(v * 4.0) / 4.0;  // force ties
        }
        const std::size_t k = rng() % (p + 1);
        const auto got = kvtp::saliency_prune(f, k, false);
        CHECK(got.kept_indices == oracle::top_k(*f.saliency, k));
        for (std::size_t i = 0; i < got.size(); ++i) {
            const auto src = f.tokens.row(got.kept_indices[i]);
            const auto dst = got.tokens.row(i);
            CHECK(std::equal(src.begin(), src.end(), dst.begin()));
        }
    }
}

TEST_CASE("bipartite merge worked example") {
    FrameTokenSet f;
    f.tokens = Matrix::from_rows({{1, 0}, {1, 0}, {0, 1}, {0, 1}});
    const auto out = kvtp::bipartite_merge(f, 3);
    CHECK(out.tokens == Matrix::from_rows({{1, 0}, {0, 1}, {0, 1}}));
    CHECK(identity(f, kvtp::bipartite_merge(f, 4)));

    FrameTokenSet same;
    same.tokens = Matrix(6, 3, 0.25);
    for (std::size_t b = 3; b <= 6; ++b) {
        const auto merged = kvtp::bipartite_merge(same, b);
        for (double v : merged.tokens.data()) {
            CHECK(v == 0.25);
        }
    }
    CHECK_THROWS_AS(kvtp::bipartite_merge(f, 1), kvtp::Error);
}

TEST_CASE("bipartite merge keeps counts and means") {
    std::mt19937_64 rng(5);
    for (int rep = 0; rep < 300; ++rep) {
        const std::size_t p = 2 + rng() % 30;
        const auto f = random_frame(rng, p, 5, false);
        const std::size_t min_budget = p - p / 2;
        const std::size_t budget = min_budget + rng() % (p - min_budget + 1);
        const auto out = kvtp::bipartite_merge(f, budget);
        REQUIRE(out.size() == budget);
        // every output row is the mean of the source rows that map onto it
        std::size_t merged_rows = 0;
        for (std::size_t i = 0; i < out.size(); ++i) {
            merged_rows += out.merged[i] ? 1 : 0;
        }
        CHECK((p - budget == 0 ? merged_rows == 0 : merged_rows >= 1));
        for (std::size_t i = 0; i < out.size(); ++i) {
            if (!out.merged[i]) {
                const auto src = f.tokens.row(out.kept_indices[i]);
                const auto dst = out.tokens.row(i);
                CHECK(std::equal(src.begin(), src.end(), dst.begin()));
            }
        }
    }
}

TEST_CASE("bipartite merge matches the exhaustive oracle") {
    // A = even positions, B = odd positions; the r most similar A tokens merge into their best B partner
    std::mt19937_64 rng(6);
    for (int rep = 0; rep < 200; ++rep) {
        const std::size_t p = 2 + rng() % 16;
        const auto f = random_frame(rng, p, 3, false);
        const std::size_t r = rng() % (p / 2 + 1);
        const auto out = kvtp::bipartite_merge(f, p - r);

        std::vector<std::size_t> a_idx, b_idx;
        for (std::size_t i = 0; i < p; ++i) (i % 2 == 0 ? a_idx : b_idx).push_back(i);
        std::vector<std::pair<double, std::size_t>> best;  // (similarity, B partner) per A token
        for (auto ai : a_idx) {
            double top = -2.0;
            std::size_t partner = 0;
            for (auto bi : b_idx) {
                const double s = kvtp::cosine_similarity(f.tokens.row(ai), f.tokens.row(bi));
                if (s > top) {
                    top = s;
                    partner = bi;
                }
            }
            best.emplace_back(top, partner);
        }
        std::vector<std::size_t> order(a_idx.size());
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](auto x, auto y) { return best[x].first > best[y].first; });
        std::vector<std::vector<std::size_t>> groups(p);
        std::vector<bool> absorbed(p, false);
        for (std::size_t k = 0; k < r; ++k) {
            const std::size_t ai = a_idx[order[k]];
            absorbed[ai] = true;
            groups[best[order[k]].second].push_back(ai);
        }
        std::size_t row = 0;
        for (std::size_t i = 0; i < p; ++i) {
            if (absorbed[i]) continue;
            REQUIRE(row < out.size());
            CHECK(out.kept_indices[row] == i);
            for (std::size_t c = 0; c < 3; ++c) {
                double mean = f.tokens(i, c);
                for (auto g : groups[i]) mean += f.tokens(g, c);
                mean /= static_cast<double>(1 + groups[i].size());
                CHECK(std::abs(out.tokens(row, c) - mean) <= 1e-12);
            }
            ++row;
        }
        CHECK(row == out.size());
    }
}

TEST_CASE("hard frame selection") {
    std::mt19937_64 rng(2);
    std::vector<FrameTokenSet> frames;
    for (std::size_t i = 0; i < 10; ++i) {
        frames.push_back(random_frame(rng, 6, 2));
        frames.back().frame_index = i;
    }
    Vector scores{0.1, 0.9, 0.3, 0.2, 0.8, 0.0, 0.5, 0.4, 0.6, 0.7};
    const auto sel = kvtp::hard_frame_select(frames, scores, 0.2);
    CHECK(sel.total_tokens() == 12);
    std::set<std::size_t> kept;
    for (const auto& f : sel.frames) {
        if (f.size() > 0) kept.insert(f.frame_index);
    }
    CHECK(kept == std::set<std::size_t>{1, 4});
    CHECK(kvtp::hard_frame_select(frames, scores, 1.0).total_tokens() == 60);
    for (double frac : {0.05, 0.15, 0.33, 0.5, 0.77}) {
        const auto n = static_cast<std::size_t>(std::ceil(frac * 10 - 1e-9));
        CHECK(kvtp::hard_frame_select(frames, scores, frac).total_tokens() == n * 6);
    }
}

TEST_CASE("every backend is the identity at full budget") {
    std::mt19937_64 rng(12);
    std::vector<FrameTokenSet> frames;
    for (std::size_t i = 0; i < 5; ++i) {
        frames.push_back(random_frame(rng, 8, 3));
        frames.back().frame_index = i;
    }
    const std::vector<std::size_t> full(5, 8);
    for (auto backend : {kvtp::PruneBackend::Random, kvtp::PruneBackend::Saliency, kvtp::PruneBackend::SaliencyMerge,
                         kvtp::PruneBackend::Bipartite, kvtp::PruneBackend::Hard}) {
        const auto out = kvtp::prune_video(frames, full, backend, 3);
        REQUIRE(out.frames.size() == 5);
        for (std::size_t i = 0; i < 5; ++i) {
            CHECK(identity(frames[i], out.frames[i]));
        }
    }
}

TEST_CASE("equal totals give equal retained counts") {
    std::mt19937_64 rng(13);
    std::vector<FrameTokenSet> frames;
    for (std::size_t i = 0; i < 6; ++i) {
        frames.push_back(random_frame(rng, 10, 2));
        frames.back().frame_index = i;
    }
    const std::vector<std::size_t> uniform(6, 2);
    const std::vector<std::size_t> skewed{10, 0, 1, 0, 0, 1};
    for (auto backend : {kvtp::PruneBackend::Random, kvtp::PruneBackend::Saliency}) {
        CHECK(kvtp::prune_video(frames, uniform, backend, 0).total_tokens() ==
              kvtp::prune_video(frames, skewed, backend, 0).total_tokens());
    }
}

TEST_CASE("prune video errors and outputs") {
    std::mt19937_64 rng(14);
    std::vector<FrameTokenSet> frames{random_frame(rng, 4, 2), random_frame(rng, 4, 2)};
    frames[1].frame_index = 1;
    CHECK_THROWS_AS(kvtp::prune_video(frames, std::vector<std::size_t>{1}, kvtp::PruneBackend::Random, 0), kvtp::Error);
    try {
        kvtp::prune_video(frames, std::vector<std::size_t>{4, 2}, kvtp::PruneBackend::Hard, 0);
        FAIL("hard backend accepted a partial budget");
    } catch (const kvtp::Error& e) {
        CHECK(std::string(e.what()).find("frame 1") != std::string::npos);
    }
    CHECK(kvtp::parse_backend("merge") == kvtp::PruneBackend::Bipartite);
    CHECK(kvtp::parse_backend("saliency") == kvtp::PruneBackend::Saliency);
    CHECK_THROWS_AS(kvtp::parse_backend("fastv"), kvtp::Error);
    const auto out = kvtp::prune_video(frames, std::vector<std::size_t>{1, 2}, kvtp::PruneBackend::Saliency, 0);
    const std::string csv = kvtp::pruned_index_csv(out);
    CHECK(csv.rfind("frame_index,position,original_index,merged\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);
}
