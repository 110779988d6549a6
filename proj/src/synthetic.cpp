// Copyright (C) 2026 KVTP contributors
// SPDX-License-Identifier: Apache-2.0

#include "kvtp/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>

#include "json.hpp"
#include "kvtp/error.hpp"
#include "kvtp/io.hpp"

namespace kvtp {

void SyntheticSpec::validate() const {
    require(frames >= 1 && dim >= 2 && tokens_per_frame >= 1 && token_dim >= 1, "synthetic: sizes must be positive");
    require(keyframes < frames, "synthetic: keyframe count must be below frame count");
    require(clip_size >= 1 && clip_size <= frames, "synthetic: clip size must lie in [1, frames]");
    require(signal_tokens <= tokens_per_frame && context_tokens <= tokens_per_frame,
            "synthetic: planted token counts exceed tokens per frame");
    require(signal_strength > 0.0 && signal_strength <= 1.0, "synthetic: signal strength must lie in (0, 1]");
    require(signal_strength > 1.0 / std::sqrt(static_cast<double>(dim)),
            "synthetic: signal strength must exceed the 1/sqrt(dim) noise baseline");
}

std::size_t SyntheticVideo::planted_count() const {
    std::size_t n = 0;
    for (const auto& f : planted) {
        n += static_cast<std::size_t>(std::count_if(f.begin(), f.end(), [](PlantedToken t) { return t != PlantedToken::None; }));
    }
    return n;
}

std::vector<TrainingSample> SyntheticCorpus::samples(std::size_t first, std::size_t count) const {
    std::vector<TrainingSample> out;
    for (std::size_t v = first; v < videos.size() && out.size() < count; ++v) {
        out.push_back(videos[v].sample);
    }
    return out;
}

namespace {

Vector random_unit(std::mt19937_64& rng, std::size_t dim) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (;;) {
        Vector v(dim);
        for (double& x : v) {
            x = gauss(rng);
        }
        const double n = l2_norm(v);
        if (n > 1e-8) {
            for (double& x : v) {
                x /= n;
            }
            return v;
        }
    }
}

// Unit vector with cosine exactly `strength` to the unit vector q.
Vector aligned_unit(std::mt19937_64& rng, const Vector& q, double strength) {
    for (;;) {
        Vector u = random_unit(rng, q.size());
        const double proj = dot(u, q);
        for (std::size_t i = 0; i < u.size(); ++i) {
            u[i] -= proj * q[i];
        }
        const double n = l2_norm(u);
        if (n < 1e-8) {
            continue;
        }
        const double ortho = std::sqrt(std::max(0.0, 1.0 - strength * strength));
        Vector e(q.size());
        for (std::size_t i = 0; i < e.size(); ++i) {
            e[i] = strength * q[i] + ortho * u[i] / n;
        }
        return e;
    }
}

std::vector<std::size_t> pick_positions(std::mt19937_64& rng, std::size_t population, std::size_t count) {
    std::vector<std::size_t> all(population);
    std::iota(all.begin(), all.end(), 0);
    std::vector<std::size_t> out;
    std::sample(all.begin(), all.end(), std::back_inserter(out), count, rng);
    return out;
}

SyntheticVideo generate_video(const SyntheticSpec& spec, std::size_t index) {
    std::seed_seq seq{static_cast<std::uint32_t>(spec.seed), static_cast<std::uint32_t>(spec.seed >> 32),
                      static_cast<std::uint32_t>(index), 0x4b565450u};
    std::mt19937_64 rng(seq);
    std::uniform_real_distribution<double> low_saliency(0.0, 0.5);
    std::uniform_real_distribution<double> high_saliency(0.6, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);

    SyntheticVideo video;
    const std::size_t n = spec.frames;
    const Vector query = random_unit(rng, spec.dim);
    const Vector token_signal = random_unit(rng, spec.token_dim);

    if (spec.keyframes > 0) {
        std::uniform_int_distribution<std::size_t> start_dist(0, n - spec.keyframes);
        const std::size_t start = start_dist(rng);
        for (std::size_t k = 0; k < spec.keyframes; ++k) {
            video.keyframes.push_back(start + k);
        }
    }
    std::vector<bool> is_key(n, false);
    for (std::size_t k : video.keyframes) {
        is_key[k] = true;
    }

    Matrix frames(n, spec.dim);
    Vector labels(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const Vector e = is_key[i] ? aligned_unit(rng, query, spec.signal_strength) : random_unit(rng, spec.dim);
        std::copy(e.begin(), e.end(), frames.row(i).begin());
        if (is_key[i]) {
            labels[i] = 5.0;
        } else if ((i > 0 && is_key[i - 1]) || (i + 1 < n && is_key[i + 1])) {
            labels[i] = 2.0;
        }
    }
    video.sample = {{std::move(frames), spec.clip_size}, query, std::move(labels)};

    const std::size_t p = spec.tokens_per_frame;
    for (std::size_t i = 0; i < n; ++i) {
        FrameTokenSet f;
        f.frame_index = i;
        f.tokens = Matrix(p, spec.token_dim);
        for (double& x : f.tokens.data()) {
            x = gauss(rng);
        }
        f.saliency = Vector(p);
        for (double& s : *f.saliency) {
            s = low_saliency(rng);
        }
        std::vector<PlantedToken> planted(p, PlantedToken::None);
        const std::size_t count = is_key[i] ? spec.signal_tokens : spec.context_tokens;
        const PlantedToken kind = is_key[i] ? PlantedToken::Signal : PlantedToken::Context;
        for (std::size_t t : pick_positions(rng, p, count)) {
            planted[t] = kind;
            (*f.saliency)[t] = high_saliency(rng);
            auto row = f.tokens.row(t);
            for (std::size_t c = 0; c < row.size(); ++c) {
                row[c] = 3.0 * token_signal[c] + 0.5 * row[c];
            }
        }
        video.frames.push_back(std::move(f));
        video.planted.push_back(std::move(planted));
    }
    return video;
}

std::string video_dir(std::size_t v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "video_%04zu", v);
    return buf;
}

}  // namespace

SyntheticCorpus generate_synthetic(const SyntheticSpec& spec) {
    spec.validate();
    SyntheticCorpus corpus{spec, {}};
    corpus.videos.reserve(spec.videos);
    for (std::size_t v = 0; v < spec.videos; ++v) {
        corpus.videos.push_back(generate_video(spec, v));
    }
    return corpus;
}

std::size_t retained_planted(const SyntheticVideo& video, const PrunedSequence& pruned) {
    std::size_t n = 0;
    for (const auto& f : pruned.frames) {
        require(f.frame_index < video.planted.size(), "pruned frame index out of range");
        const auto& planted = video.planted[f.frame_index];
        for (std::size_t idx : f.kept_indices) {
            if (idx < planted.size() && planted[idx] != PlantedToken::None) {
                ++n;
            }
        }
    }
    return n;
}

void save_corpus(const std::filesystem::path& dir, const SyntheticCorpus& corpus) {
    const SyntheticSpec& s = corpus.spec;
    nlohmann::ordered_json doc;
    doc["version"] = 1;
    doc["spec"] = {{"videos", s.videos},
                   {"frames", s.frames},
                   {"dim", s.dim},
                   {"tokens_per_frame", s.tokens_per_frame},
                   {"token_dim", s.token_dim},
                   {"keyframes", s.keyframes},
                   {"clip_size", s.clip_size},
                   {"signal_tokens", s.signal_tokens},
                   {"context_tokens", s.context_tokens},
                   {"signal_strength", s.signal_strength},
                   {"seed", s.seed}};
    nlohmann::ordered_json videos = nlohmann::ordered_json::array();
    for (std::size_t v = 0; v < corpus.videos.size(); ++v) {
        const SyntheticVideo& video = corpus.videos[v];
        const std::string d = video_dir(v);
        const std::size_t n = video.frames.size();
        const std::size_t p = n ? video.frames.front().token_count() : 0;
        const std::size_t dv = n ? video.frames.front().tokens.cols() : 0;

        Matrix tokens(n * p, dv);
        Matrix saliency(n, p);
        Matrix planted(n, p);
        for (std::size_t i = 0; i < n; ++i) {
            const auto src = video.frames[i].tokens.data();
            std::copy(src.begin(), src.end(), tokens.data().begin() + static_cast<std::ptrdiff_t>(i * p * dv));
            for (std::size_t t = 0; t < p; ++t) {
                saliency(i, t) = (*video.frames[i].saliency)[t];
                planted(i, t) = static_cast<double>(video.planted[i][t]);
            }
        }
        write_matrix_binary(dir / d / "frames.bin", video.sample.embeddings.frames);
        write_matrix_binary(dir / d / "query.bin", Matrix(1, video.sample.query.size(), video.sample.query));
        write_matrix_binary(dir / d / "tokens.bin", tokens);
        write_matrix_binary(dir / d / "saliency.bin", saliency);
        write_matrix_binary(dir / d / "planted.bin", planted);
        videos.push_back({{"dir", d},
                          {"clip_size", video.sample.embeddings.clip_size},
                          {"labels", video.sample.labels},
                          {"keyframes", video.keyframes}});
    }
    doc["videos"] = videos;
    write_text_file(dir / "corpus.json", doc.dump(2) + "\n");
}

SyntheticCorpus load_corpus(const std::filesystem::path& dir) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(read_text_file(dir / "corpus.json"));
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::Format, (dir / "corpus.json").string() + ": " + e.what());
    }
    SyntheticCorpus corpus;
    try {
        const auto& s = doc.at("spec");
        corpus.spec.videos = s.at("videos");
        corpus.spec.frames = s.at("frames");
        corpus.spec.dim = s.at("dim");
        corpus.spec.tokens_per_frame = s.at("tokens_per_frame");
        corpus.spec.token_dim = s.at("token_dim");
        corpus.spec.keyframes = s.at("keyframes");
        corpus.spec.clip_size = s.at("clip_size");
        corpus.spec.signal_tokens = s.at("signal_tokens");
        corpus.spec.context_tokens = s.at("context_tokens");
        corpus.spec.signal_strength = s.at("signal_strength");
        corpus.spec.seed = s.at("seed");
        for (const auto& entry : doc.at("videos")) {
            const std::filesystem::path d = dir / entry.at("dir").get<std::string>();
            SyntheticVideo video;
            Matrix query = read_matrix_binary(d / "query.bin");
            video.sample.embeddings = {read_matrix_binary(d / "frames.bin"), entry.at("clip_size").get<std::size_t>()};
            video.sample.query.assign(query.data().begin(), query.data().end());
            video.sample.labels = entry.at("labels").get<Vector>();
            video.keyframes = entry.at("keyframes").get<std::vector<std::size_t>>();
            video.sample.validate();

            const Matrix tokens = read_matrix_binary(d / "tokens.bin");
            const Matrix saliency = read_matrix_binary(d / "saliency.bin");
            const Matrix planted = read_matrix_binary(d / "planted.bin");
            const std::size_t n = video.sample.embeddings.frame_count();
            const std::size_t p = saliency.cols();
            require(saliency.rows() == n && planted.rows() == n && planted.cols() == p && tokens.rows() == n * p,
                    d.string() + ": token files disagree in shape", ErrorCode::Format);
            for (std::size_t i = 0; i < n; ++i) {
                FrameTokenSet f;
                f.frame_index = i;
                f.tokens = tokens.slice_rows(i * p, p);
                f.saliency = Vector(saliency.row(i).begin(), saliency.row(i).end());
                std::vector<PlantedToken> kinds(p);
                for (std::size_t t = 0; t < p; ++t) {
                    kinds[t] = static_cast<PlantedToken>(static_cast<int>(planted(i, t)));
                }
                video.frames.push_back(std::move(f));
                video.planted.push_back(std::move(kinds));
            }
            corpus.videos.push_back(std::move(video));
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::Format, (dir / "corpus.json").string() + ": " + e.what());
    }
    return corpus;
}

}  // namespace kvtp
