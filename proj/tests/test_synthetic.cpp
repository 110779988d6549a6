// Copyright (C) 2026 KVTP contributors
// SPDX-License-Identifier: Apache-2.0

#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "kvtp/allocator.hpp"
#include "kvtp/error.hpp"
#include "kvtp/synthetic.hpp"

namespace fs = std::filesystem;

namespace {

std::string dir_bytes(const fs::path& dir) {
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
        if (e.is_regular_file()) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    std::string out;
    for (const auto& f : files) {
        std::ifstream in(f, std::ios::binary);
        std::ostringstream s;
        s << in.rdbuf();
        out += fs::relative(f, dir).string() + "\n" + s.str();
    }
    return out;
}

}  // namespace

TEST_CASE("planted labels and cosines") {
    kvtp::SyntheticSpec spec;
    spec.videos = 125;  // 125 videos x 8 keyframes = 1000 keyframes
    const auto corpus = kvtp::generate_synthetic(spec);
    double total = 0.0;
    std::size_t count = 0;
    double background = 0.0;
    std::size_t bg_count = 0;
    for (const auto& v : corpus.videos) {
        REQUIRE(v.keyframes.size() == spec.keyframes);
        for (std::size_t i = 0; i < spec.frames; ++i) {
            const double c = kvtp::cosine_similarity(v.sample.embeddings.frames.row(i), v.sample.query);
            const bool key = std::find(v.keyframes.begin(), v.keyframes.end(), i) != v.keyframes.end();
            if (key) {
                total += c;
                ++count;
                CHECK(v.sample.labels[i] == 5.0);
            } else {
                background += c;
                ++bg_count;
                CHECK((v.sample.labels[i] == 2.0 || v.sample.labels[i] == 0.0));
            }
        }
    }
    CHECK(count == 1000);
    CHECK(total / count >= 0.9 * spec.signal_strength);
    CHECK(std::abs(background / bg_count) < 0.05);
}

TEST_CASE("neighbors of keyframes score two") {
    kvtp::SyntheticSpec spec;
    spec.videos = 4;
    for (const auto& v : kvtp::generate_synthetic(spec).videos) {
        for (std::size_t i = 0; i < spec.frames; ++i) {
            if (v.sample.labels[i] == 5.0) continue;
            const bool near = (i > 0 && v.sample.labels[i - 1] == 5.0) ||
                              (i + 1 < spec.frames && v.sample.labels[i + 1] == 5.0);
            CHECK(v.sample.labels[i] == (near ? 2.0 : 0.0));
        }
    }
}

TEST_CASE("keyframe tokens carry the planted signal") {
    kvtp::SyntheticSpec spec;
    spec.videos = 3;
    for (const auto& v : kvtp::generate_synthetic(spec).videos) {
        for (std::size_t f = 0; f < spec.frames; ++f) {
            const auto& sal = *v.frames[f].saliency;
            double planted_min = 1.0;
            double other_max = 0.0;
            std::size_t planted = 0;
            for (std::size_t t = 0; t < spec.tokens_per_frame; ++t) {
                if (v.planted[f][t] != kvtp::PlantedToken::None) {
                    planted_min = std::min(planted_min, sal[t]);
                    ++planted;
                } else {
                    other_max = std::max(other_max, sal[t]);
                }
            }
            const bool key = v.sample.labels[f] == 5.0;
            CHECK(planted == (key ? spec.signal_tokens : spec.context_tokens));
            CHECK(planted_min > other_max);
        }
    }
}

TEST_CASE("no keyframes") {
    kvtp::SyntheticSpec spec;
    spec.videos = 2;
    spec.keyframes = 0;
    for (const auto& v : kvtp::generate_synthetic(spec).videos) {
        for (double l : v.sample.labels) {
            CHECK(l == 0.0);
        }
        const auto rep = kvtp::sparsity(v.sample.labels, {}, 1.5);
        CHECK(rep.sparsity == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("generation is deterministic and files round trip") {
    kvtp::SyntheticSpec spec;
    spec.videos = 3;
    spec.seed = 42;
    const fs::path a = fs::temp_directory_path() / "kvtp_syn_a";
    const fs::path b = fs::temp_directory_path() / "kvtp_syn_b";
    fs::remove_all(a);
    fs::remove_all(b);
    kvtp::save_corpus(a, kvtp::generate_synthetic(spec));
    kvtp::save_corpus(b, kvtp::generate_synthetic(spec));
    CHECK(dir_bytes(a) == dir_bytes(b));

    const auto loaded = kvtp::load_corpus(a);
    const auto fresh = kvtp::generate_synthetic(spec);
    REQUIRE(loaded.videos.size() == 3);
    CHECK(loaded.videos[1].keyframes == fresh.videos[1].keyframes);
    CHECK(loaded.videos[1].sample.labels == fresh.videos[1].sample.labels);
    // float32 storage
    CHECK(loaded.videos[1].sample.embeddings.frames(3, 2) ==
          doctest::Approx(fresh.videos[1].sample.embeddings.frames(3, 2)).epsilon(1e-6));

    spec.seed = 43;
    const fs::path c = fs::temp_directory_path() / "kvtp_syn_c";
    fs::remove_all(c);
    kvtp::save_corpus(c, kvtp::generate_synthetic(spec));
    CHECK(dir_bytes(a) != dir_bytes(c));
    fs::remove_all(a);
    fs::remove_all(b);
    fs::remove_all(c);
}

TEST_CASE("infeasible specs") {
    kvtp::SyntheticSpec spec;
    spec.keyframes = spec.frames;
    CHECK_THROWS_AS(kvtp::generate_synthetic(spec), kvtp::Error);
    spec = {};
    spec.signal_strength = 0.05;
    CHECK_THROWS_AS(kvtp::generate_synthetic(spec), kvtp::Error);
    spec = {};
    spec.signal_tokens = spec.tokens_per_frame + 1;
    CHECK_THROWS_AS(kvtp::generate_synthetic(spec), kvtp::Error);
}
