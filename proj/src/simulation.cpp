// Copyright (C) 2026 KVTP contributors
// SPDX-License-Identifier: Apache-2.0

#include "kvtp/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "kvtp/allocator.hpp"
#include "kvtp/costmodel.hpp"
#include "kvtp/error.hpp"

namespace kvtp {

namespace {

struct VideoOutcome {
    std::size_t tokens = 0;
    std::size_t planted_kept = 0;
    std::size_t planted_total = 0;
};

struct EvalVideo {
    const SyntheticVideo* video = nullptr;
    Vector scores;
    bool top1_hit = false;
    double predicted_sparsity = 1.0;
};

VideoOutcome measure(const SyntheticVideo& video, const PrunedSequence& pruned) {
    return {pruned.total_tokens(), retained_planted(video, pruned), video.planted_count()};
}

double calibrated_relative_flops(double keep_fraction, bool with_predictor) {
    CalibrationConfig calib = calibration_config();
    if (!with_predictor) {
        calib.backbone.predictor_overhead_flops = 0.0;
    }
    const auto full = calib.full_vision_tokens();
    const auto pruned = static_cast<std::uint64_t>(std::llround(keep_fraction * static_cast<double>(full)));
    return relative_flops(calib.backbone, full, std::min(pruned, full));
}

}  // namespace

const SimulationRow& SimulationResult::find(const std::string& method, double temperature, double beta) const {
    for (const auto& r : rows) {
        if (r.method == method && r.temperature == temperature && r.beta == beta) {
            return r;
        }
    }
    throw Error(ErrorCode::InvalidArgument, "no simulation row for " + method);
}

SimulationResult run_simulation(const SimulationConfig& config) {
    require(config.train_videos >= 1 && config.eval_videos >= 1, "simulate: need train and eval videos");
    require(config.retention_videos <= config.eval_videos, "simulate: retention videos exceed eval videos");
    SyntheticSpec spec = config.spec;
    spec.videos = config.train_videos + config.eval_videos;
    const SyntheticCorpus corpus = generate_synthetic(spec);

    SimulationResult result;
    const std::vector<TrainingSample> train_set = corpus.samples(0, config.train_videos);
    result.training = train(train_set, config.train, PredictorParams::initial(spec.dim));
    const PredictorParams& params = result.training.params;

    std::vector<EvalVideo> eval;
    std::size_t hits = 0;
    for (std::size_t v = config.train_videos; v < corpus.videos.size(); ++v) {
        const SyntheticVideo& video = corpus.videos[v];
        EvalVideo e;
        e.video = &video;
        e.scores = predict_scores(params, video.sample.embeddings, video.sample.query);
        const auto best = static_cast<std::size_t>(std::max_element(e.scores.begin(), e.scores.end()) - e.scores.begin());
        e.top1_hit = std::find(video.keyframes.begin(), video.keyframes.end(), best) != video.keyframes.end();
        e.predicted_sparsity = sparsity(e.scores, {config.alpha, 1.0, 1.0}, 1.0).sparsity;
        hits += e.top1_hit ? 1 : 0;
        eval.push_back(std::move(e));
    }
    result.top1_accuracy = static_cast<double>(hits) / static_cast<double>(eval.size());

    const std::size_t p = spec.tokens_per_frame;
    const std::size_t n = spec.frames;
    const double full_tokens = static_cast<double>(n * p);

    // Per-video outcomes for every method, computed once and then aggregated per beta subset.
    struct Method {
        std::string name;
        double temperature;
        std::vector<VideoOutcome> outcomes;
    };
    std::vector<Method> methods;
    methods.push_back({"uniform", 0.0, {}});
    methods.push_back({"hard_select", 0.0, {}});
    for (double t : config.temperatures) {
        methods.push_back({"kvtp", t, {}});
    }
    const std::uint64_t prune_seed = config.train.seed ^ 0x5eedull;
    for (std::size_t k = 0; k < config.retention_videos; ++k) {
        const EvalVideo& e = eval[k];
        const SyntheticVideo& video = *e.video;
        for (Method& m : methods) {
            PrunedSequence pruned;
            if (m.name == "hard_select") {
                pruned = hard_frame_select(video.frames, e.scores, config.alpha);
            } else {
                Vector ratios = m.name == "uniform" ? Vector(n, config.alpha)
                                                    : allocate(e.scores, {config.alpha, m.temperature, 1.0});
                pruned = prune_video(video.frames, to_token_budgets(ratios, p), config.backend, prune_seed);
            }
            m.outcomes.push_back(measure(video, pruned));
        }
    }

    for (double beta : config.betas) {
        std::vector<std::size_t> subset;
        for (std::size_t k = 0; k < config.retention_videos; ++k) {
            if (eval[k].predicted_sparsity >= beta) {
                subset.push_back(k);
            }
        }
        for (const Method& m : methods) {
            SimulationRow row;
            row.method = m.name;
            row.temperature = m.temperature;
            row.beta = beta;
            row.videos = subset.size();
            std::size_t row_hits = 0;
            for (std::size_t k : subset) {
                const VideoOutcome& o = m.outcomes[k];
                row.total_budget += static_cast<double>(o.tokens);
                row.planted_retained += static_cast<double>(o.planted_kept);
                row.signal_retention +=
                    o.planted_total ? static_cast<double>(o.planted_kept) / static_cast<double>(o.planted_total) : 1.0;
                row_hits += eval[k].top1_hit ? 1 : 0;
            }
            if (!subset.empty()) {
                const double cnt = static_cast<double>(subset.size());
                row.total_budget /= cnt;
                row.planted_retained /= cnt;
                row.signal_retention /= cnt;
                row.top1_accuracy = static_cast<double>(row_hits) / cnt;
            }
            row.relative_flops = calibrated_relative_flops(row.total_budget / full_tokens, m.name != "uniform");
            result.rows.push_back(row);
        }
    }
    return result;
}

std::string simulation_csv(const SimulationResult& result) {
    std::ostringstream out;
    out << "method,temperature,beta,videos,total_budget,signal_retention,planted_retained,top1_accuracy,"
           "relative_flops\n";
    char line[256];
    for (const auto& r : result.rows) {
        std::snprintf(line, sizeof(line), "%s,%g,%g,%zu,%.3f,%.6f,%.3f,%.4f,%.6f\n", r.method.c_str(),
                      r.temperature, r.beta, r.videos, r.total_budget, r.signal_retention, r.planted_retained,
                      r.top1_accuracy, r.relative_flops);
        out << line;
    }
    return out.str();
}

}  // namespace kvtp
