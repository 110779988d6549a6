// Copyright (C) 2026 KVTP contributors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <random>

#include "doctest.h"
#include "kvtp/error.hpp"
#include "kvtp/predictor.hpp"
#include "oracles.hpp"

using kvtp::EmbeddingSequence;
using kvtp::Matrix;
using kvtp::PredictorParams;
using kvtp::Vector;

namespace {

PredictorParams plain(double theta = 0.0, double phi = 0.0) {
    PredictorParams p;
    p.theta = theta;
    p.phi = phi;
    return p;
}

const EmbeddingSequence two_frames{Matrix::from_rows({{1, 0}, {0, 1}}), 2};

}  // namespace

TEST_CASE("adapter application") {
    const EmbeddingSequence seq{Matrix::from_rows({{1, 2}, {-3, 0.5}}), 2};
    CHECK(kvtp::apply_adapter(plain(), seq).frames == seq.frames);
    PredictorParams id = PredictorParams::initial(2);
    const auto same = kvtp::apply_adapter(id, seq).frames;
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(std::abs(same.data()[i] - seq.frames.data()[i]) < 1e-15);
    }
    PredictorParams twice = plain();
    twice.adapter = Matrix::from_rows({{2, 0}, {0, 2}});
    const auto doubled = kvtp::apply_adapter(twice, seq).frames;
    CHECK(doubled(0, 0) == 2.0);
    CHECK(doubled(0, 1) == 4.0);
    twice.adapter = Matrix(3, 3);
    CHECK_THROWS_AS(kvtp::apply_adapter(twice, seq), kvtp::Error);
}

TEST_CASE("base logits") {
    const EmbeddingSequence seq{Matrix::from_rows({{0.6, 0.8}}), 8};
    CHECK(kvtp::base_logits(plain(), seq, Vector{0.6, 0.8})[0] == doctest::Approx(1.0).epsilon(1e-15));
    PredictorParams p = plain();
    p.b = -0.75;
    CHECK(kvtp::base_logits(p, {Matrix::from_rows({{1, 0}}), 8}, Vector{0, 3})[0] == doctest::Approx(-0.75));
    p.a = 2.0;
    p.b = 0.5;
    const double s = 1.0 / std::sqrt(2.0);
    const double v = kvtp::base_logits(p, {Matrix::from_rows({{1, 0}}), 8}, Vector{s, s})[0];
    CHECK(std::abs(v - (2.0 * s + 0.5)) < 1e-12);
    CHECK(std::abs(v - 1.9142136) < 1e-6);
}

TEST_CASE("context fusion heads") {
    SUBCASE("clip size one is the identity") {
        const EmbeddingSequence seq{Matrix::from_rows({{1, 2}, {3, -1}, {0.5, 0.5}}), 1};
        const Matrix local = kvtp::local_fused_embeddings(plain(), seq);
        for (std::size_t i = 0; i < 6; ++i) {
            CHECK(local.data()[i] == doctest::Approx(seq.frames.data()[i]).epsilon(1e-15));
        }
    }
    SUBCASE("identical frames stay put") {
        const EmbeddingSequence seq{Matrix::from_rows({{2, 1}, {2, 1}, {2, 1}}), 2};
        const Matrix local = kvtp::local_fused_embeddings(plain(), seq);
        const Matrix global = kvtp::global_fused_embeddings(plain(), seq);
        for (std::size_t i = 0; i < 6; ++i) {
            CHECK(local.data()[i] == doctest::Approx(seq.frames.data()[i]));
            CHECK(global.data()[i] == doctest::Approx(seq.frames.data()[i]));
        }
    }
    SUBCASE("single frame video") {
        const EmbeddingSequence seq{Matrix::from_rows({{0.2, -0.7}}), 8};
        const Matrix global = kvtp::global_fused_embeddings(plain(), seq);
        CHECK(global(0, 0) == doctest::Approx(0.2));
        CHECK(global(0, 1) == doctest::Approx(-0.7));
    }
    SUBCASE("two frame worked value") {
        const Matrix local = kvtp::local_fused_embeddings(plain(), two_frames);
        const Matrix global = kvtp::global_fused_embeddings(plain(), two_frames);
        const auto ref = oracle::attend({1, 0}, {{1, 0}, {0, 1}}, 1.0L);
        CHECK(std::abs(local(0, 0) - static_cast<double>(ref[0])) < 1e-14);
        CHECK(std::abs(local(0, 0) - 0.66976) < 1e-4);
        CHECK(std::abs(local(0, 1) - 0.33024) < 1e-4);
        CHECK(global == local);
    }
    SUBCASE("last clip may be short") {
        const EmbeddingSequence seq{Matrix::from_rows({{1, 0}, {0, 1}, {1, 1}}), 2};
        const Matrix local = kvtp::local_fused_embeddings(plain(), seq);
        CHECK(local(2, 0) == doctest::Approx(1.0));
        CHECK(local(2, 1) == doctest::Approx(1.0));
    }
}

TEST_CASE("combined logits") {
    const Vector q{0.3, 0.9};
    const Vector base = kvtp::base_logits(plain(), two_frames, q);
    CHECK(kvtp::combined_logits(plain(), two_frames, q) == base);

    const PredictorParams local_only = plain(1.0, 0.0);
    const Vector l = kvtp::combined_logits(local_only, two_frames, q);
    const Matrix fused = kvtp::local_fused_embeddings(local_only, two_frames);
    for (std::size_t i = 0; i < 2; ++i) {
        CHECK(l[i] == kvtp::base_logits(plain(), {fused.slice_rows(i, 1), 8}, q)[0]);
    }

    const PredictorParams mixed = plain(0.25, 0.25);
    const Vector m = kvtp::combined_logits(mixed, two_frames, q);
    const auto ref = oracle::combined_logits(mixed, two_frames.frames, 2, q);
    for (std::size_t i = 0; i < 2; ++i) {
        CHECK(std::abs(m[i] - ref[i]) < 1e-12);
    }
    CHECK(kvtp::predict_scores(mixed, two_frames, q) == m);
}

TEST_CASE("predict scores against the independent forward oracle") {
    std::mt19937_64 rng(21);
    for (int rep = 0; rep < 25; ++rep) {
        const auto inst = oracle::random_instance(rng);
        const Vector got = kvtp::predict_scores(inst.params, inst.sample.embeddings, inst.sample.query);
        const auto ref = oracle::combined_logits(inst.params, inst.sample.embeddings.frames,
                                                 inst.sample.embeddings.clip_size, inst.sample.query);
        for (std::size_t i = 0; i < got.size(); ++i) {
            CHECK(std::abs(got[i] - ref[i]) < 1e-10);
        }
    }
}

TEST_CASE("all logits equal one for identical frames and query") {
    PredictorParams p = plain();
    const EmbeddingSequence seq{Matrix::from_rows({{1, 2}, {1, 2}, {1, 2}}), 2};
    for (double v : kvtp::predict_scores(p, seq, Vector{1, 2})) {
        CHECK(v == doctest::Approx(1.0));
    }
}

TEST_CASE("permutation equivariance without the local head") {
    std::mt19937_64 rng(8);
    auto inst = oracle::random_instance(rng);
    inst.params.theta = 0.0;
    const auto& frames = inst.sample.embeddings.frames;
    const std::size_t n = frames.rows();
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Matrix shuffled(n, frames.cols());
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t c = 0; c < frames.cols(); ++c) {
            shuffled(i, c) = frames(perm[i], c);
        }
    }
    const Vector a = kvtp::predict_scores(inst.params, inst.sample.embeddings, inst.sample.query);
    const Vector b = kvtp::predict_scores(inst.params, {shuffled, inst.sample.embeddings.clip_size}, inst.sample.query);
    for (std::size_t i = 0; i < n; ++i) {
        CHECK(b[i] == doctest::Approx(a[perm[i]]).epsilon(1e-12));
    }
}

TEST_CASE("label centering") {
    for (double v : kvtp::center_labels(Vector{3, 3, 3})) {
        CHECK(v == 0.0);
    }
    CHECK(kvtp::center_labels(Vector{5, 1}) == Vector{2, -2});
    CHECK(kvtp::center_labels(Vector{0, 0, 5, 0}) == Vector{-1.25, -1.25, 3.75, -1.25});
}

TEST_CASE("loss values") {
    kvtp::TrainingSample s;
    s.embeddings = two_frames;
    s.query = {0.4, 0.1};
    s.labels = {2, 2};
    CHECK(kvtp::loss(plain(0.2, 0.3), s) == doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-15));

    // L' = 0 everywhere: a = 0 collapses logits to b = 0
    PredictorParams zero = plain();
    zero.a = 0.0;
    s.labels = {5, 0};
    CHECK(kvtp::loss(zero, s) == doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-15));

    // logits (2, -1) from a two-frame sample with b carrying the offset
    const double expected = oracle::loss_from_logits({2, -1}, {2, -2});
    CHECK(std::abs(expected - 0.1450779) < 1e-6);
    PredictorParams p = plain();
    p.a = 1.5;
    p.b = 0.5;
    kvtp::TrainingSample w;
    w.embeddings = {Matrix::from_rows({{1, 0}, {-1, 0}}), 8};
    w.query = {1, 0};
    w.labels = {5, 1};
    CHECK(kvtp::combined_logits(p, w.embeddings, w.query) == Vector{2, -1});
    CHECK(std::abs(kvtp::loss(p, w) - expected) < 1e-12);
}

TEST_CASE("gradient degenerate cases") {
    std::mt19937_64 rng(4);
    auto inst = oracle::random_instance(rng);
    inst.sample.labels.assign(inst.sample.labels.size(), 2.0);
    const auto flat = kvtp::loss_gradients(inst.params, inst.sample).gradients;
    CHECK(flat.a == 0.0);
    CHECK(flat.b == 0.0);
    CHECK(flat.tau_local == 0.0);
    CHECK(flat.theta == 0.0);
    for (double v : flat.adapter->data()) {
        CHECK(v == 0.0);
    }

    auto base_only = oracle::random_instance(rng);
    base_only.params.theta = 0.0;
    base_only.params.phi = 0.0;
    const auto g = kvtp::loss_gradients(base_only.params, base_only.sample).gradients;
    CHECK(g.tau_local == 0.0);
    CHECK(g.tau_global == 0.0);
}

TEST_CASE("analytic gradients match central differences") {
    std::mt19937_64 rng(2024);
    for (int rep = 0; rep < 50; ++rep) {
        const auto inst = oracle::random_instance(rng);
        CAPTURE(rep);
        CHECK(oracle::max_gradient_error(inst, 1e-6) <= 1e-4);
        const auto lg = kvtp::loss_gradients(inst.params, inst.sample);
        CHECK(lg.loss == doctest::Approx(kvtp::loss(inst.params, inst.sample)).epsilon(1e-14));
    }
}

TEST_CASE("training") {
    std::mt19937_64 rng(9);
    std::vector<kvtp::TrainingSample> samples;
    PredictorParams init;
    for (int i = 0; i < 4; ++i) {
        auto inst = oracle::random_instance(rng, 10, 4);
        inst.sample.query.resize(4, 0.5);
        Matrix frames(inst.sample.embeddings.frames.rows(), 4, 0.1);
        for (std::size_t r = 0; r < frames.rows(); ++r) {
            for (std::size_t c = 0; c < std::min<std::size_t>(4, inst.sample.embeddings.frames.cols()); ++c) {
                frames(r, c) = inst.sample.embeddings.frames(r, c);
            }
        }
        inst.sample.embeddings.frames = frames;
        samples.push_back(inst.sample);
        init = inst.params;
    }
    init = PredictorParams::initial(4);

    SUBCASE("zero epochs returns the initial parameters") {
        kvtp::TrainConfig cfg;
        cfg.epochs = 0;
        const auto r = kvtp::train(samples, cfg, init);
        CHECK(r.params == init);
        CHECK(r.loss_trace.empty());
    }
    SUBCASE("small step does not increase the loss") {
        kvtp::TrainConfig cfg;
        cfg.epochs = 1;
        cfg.batch_size = 1;
        cfg.learning_rate = 1e-4;
        cfg.momentum = 0.0;
        const std::vector<kvtp::TrainingSample> one{samples[0]};
        const auto r = kvtp::train(one, cfg, init);
        CHECK(kvtp::loss(r.params, samples[0]) <= kvtp::loss(init, samples[0]));
    }
    SUBCASE("deterministic and feasible") {
        kvtp::TrainConfig cfg;
        cfg.epochs = 5;
        const auto a = kvtp::train(samples, cfg, init);
        const auto b = kvtp::train(samples, cfg, init);
        CHECK(a.params == b.params);
        CHECK(a.loss_trace.size() == 5);
        CHECK(a.params.theta >= 0.0);
        CHECK(a.params.phi >= 0.0);
        CHECK(a.params.theta + a.params.phi <= 1.0 + 1e-12);
        CHECK(a.params.tau_local > 0.0);
        CHECK(a.loss_trace.back() < a.loss_trace.front());
    }
    SUBCASE("non-finite loss is a numerical error") {
        kvtp::TrainConfig cfg;
        cfg.epochs = 5;
        cfg.learning_rate = std::numeric_limits<double>::max();
        try {
            kvtp::train(samples, cfg, init);
            FAIL("expected a numerical error");
        } catch (const kvtp::Error& e) {
            CHECK(e.code() == kvtp::ErrorCode::Numerical);
            CHECK(std::string(e.what()).find("epoch") != std::string::npos);
        }
    }
}

TEST_CASE("parameter files") {
    std::mt19937_64 rng(1);
    const auto inst = oracle::random_instance(rng);
    const std::string bytes = kvtp::serialize_params(inst.params);
    CHECK(kvtp::deserialize_params(bytes) == inst.params);
    CHECK(kvtp::serialize_params(kvtp::deserialize_params(bytes)) == bytes);
    CHECK_THROWS_AS(kvtp::deserialize_params(bytes + "x"), kvtp::Error);
    CHECK_THROWS_AS(kvtp::deserialize_params(bytes.substr(0, bytes.size() - 1)), kvtp::Error);
    CHECK_THROWS_AS(kvtp::deserialize_params("KVTX"), kvtp::Error);

    const auto dir = std::filesystem::temp_directory_path() / "kvtp_params_test";
    std::filesystem::create_directories(dir);
    kvtp::save_params(dir / "p.bin", inst.params);
    CHECK(kvtp::load_params(dir / "p.bin") == inst.params);
    const std::string text = kvtp::export_params_text(inst.params);
    CHECK(text.find("tau_local") != std::string::npos);
    std::filesystem::remove_all(dir);

    PredictorParams bad;
    bad.tau_local = 0.0;
    CHECK_THROWS_AS(bad.validate(), kvtp::Error);
    bad = PredictorParams{};
    bad.theta = 0.8;
    bad.phi = 0.5;
    CHECK_THROWS_AS(bad.validate(), kvtp::Error);
}
