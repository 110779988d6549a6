// Copyright (C) 2026 KVTP contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "kvtp/predictor.hpp"
#include "kvtp/pruners.hpp"
#include "kvtp/synthetic.hpp"

namespace kvtp {

/// generate -> train -> score -> allocate -> prune -> measure, on the planted-keyframe corpus.
struct SimulationConfig {
    SyntheticSpec spec;  ///< spec.videos is ignored; train_videos + eval_videos are generated
    std::size_t train_videos = 300;
    std::size_t eval_videos = 200;
    std::size_t retention_videos = 100;  ///< first N eval videos used for pruning metrics
    TrainConfig train{1e-2, 0.9, 50, 8, 0, true, true};
    double alpha = 0.2;
    std::vector<double> temperatures{5.0, 3.0, 1.0, 0.5, 1e-6};
    std::vector<double> betas{1.0, 1.5, 1.7, 1.9, 2.1, 2.3};
    PruneBackend backend = PruneBackend::Saliency;
};

struct SimulationRow {
    std::string method;  ///< "kvtp", "uniform" or "hard_select"
    double temperature = 0.0;
    double beta = 1.0;
    std::size_t videos = 0;
    double total_budget = 0.0;       ///< mean retained tokens per video
    double signal_retention = 0.0;   ///< mean fraction of planted tokens kept
    double planted_retained = 0.0;   ///< mean planted tokens kept per video
    double top1_accuracy = 0.0;      ///< over the videos in this row
    double relative_flops = 1.0;     ///< calibrated backbone at this row's keep fraction
};

struct SimulationResult {
    TrainResult training;
    double top1_accuracy = 0.0;  ///< argmax predicted frame is a keyframe, over all eval videos
    std::vector<SimulationRow> rows;

    /// Row for (method, temperature, beta); throws when absent.
    const SimulationRow& find(const std::string& method, double temperature, double beta) const;
};

SimulationResult run_simulation(const SimulationConfig& config);

std::string simulation_csv(const SimulationResult& result);

}  // namespace kvtp
