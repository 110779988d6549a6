// Copyright (C) 2026 KVTP contributors
// SPDX-License-Identifier: Apache-2.0

// Command-line front end. Everything goes through the C API in kvtp/kvtp.h.

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "kvtp/kvtp.h"

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kFormat = 2, kNumerical = 3, kClient = 4 };

struct Failure : std::runtime_error {
    Failure(int code, const std::string& message) : std::runtime_error(message), code(code) {}
    int code;
};

void check(kvtp_status status) {
    if (status == KVTP_OK) {
        return;
    }
    const int code = status == KVTP_ERR_INTERNAL ? kUsage : static_cast<int>(status);
    throw Failure(code, kvtp_last_error());
}

struct MatrixDeleter {
    void operator()(kvtp_matrix* m) const { kvtp_matrix_free(m); }
};
struct ParamsDeleter {
    void operator()(kvtp_params* p) const { kvtp_params_free(p); }
};
struct CorpusDeleter {
    void operator()(kvtp_corpus* c) const { kvtp_corpus_free(c); }
};
struct PrunedDeleter {
    void operator()(kvtp_pruned* p) const { kvtp_pruned_free(p); }
};
struct StringDeleter {
    void operator()(char* s) const { kvtp_string_free(s); }
};
using MatrixPtr = std::unique_ptr<kvtp_matrix, MatrixDeleter>;
using ParamsPtr = std::unique_ptr<kvtp_params, ParamsDeleter>;
using CorpusPtr = std::unique_ptr<kvtp_corpus, CorpusDeleter>;
using PrunedPtr = std::unique_ptr<kvtp_pruned, PrunedDeleter>;
using StringPtr = std::unique_ptr<char, StringDeleter>;

MatrixPtr load_matrix(const std::string& path) {
    kvtp_matrix* m = nullptr;
    check(kvtp_matrix_load(path.c_str(), &m));
    return MatrixPtr(m);
}

std::vector<double> parse_list(const std::string& text, const char* what) {
    std::vector<double> out;
    std::string item;
    std::stringstream in(text);
    while (std::getline(in, item, ',')) {
        const auto b = item.find_first_not_of(" \t\r\n");
        if (b == std::string::npos) {
            throw Failure(kFormat, std::string("empty entry in ") + what);
        }
        const auto e = item.find_last_not_of(" \t\r\n");
        const std::string token = item.substr(b, e - b + 1);
        char* end = nullptr;
        errno = 0;
        const double v = std::strtod(token.c_str(), &end);
        if (end != token.c_str() + token.size() || errno == ERANGE) {
            throw Failure(kFormat, std::string("bad number '") + token + "' in " + what);
        }
        out.push_back(v);
    }
    if (out.empty()) {
        throw Failure(kFormat, std::string("no values in ") + what);
    }
    return out;
}

// Score files hold numbers separated by commas or newlines.
std::vector<double> read_list_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw Failure(kFormat, "cannot open " + path);
    }
    std::string text;
    for (std::string line; std::getline(in, line);) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        text += text.empty() ? line : "," + line;
    }
    return parse_list(text, path.c_str());
}

void write_output(const std::string& path, const std::string& text) {
    if (path.empty() || path == "-") {
        std::cout << text;
        return;
    }
    std::ofstream out(path, std::ios::binary);
    if (!out || !(out << text)) {
        throw Failure(kFormat, "cannot write " + path);
    }
}

struct Common {
    double alpha = 0.2;
    double beta = 1.5;
    double temperature = 1.0;
    size_t clip_size = 8;
    std::string backend = "saliency";
    uint64_t seed = 0;
};

std::vector<double> scores_from(const std::string& list, const std::string& file) {
    if (!list.empty() && !file.empty()) {
        throw Failure(kUsage, "--scores and --scores-file are mutually exclusive");
    }
    if (!list.empty()) {
        return parse_list(list, "--scores");
    }
    if (!file.empty()) {
        return read_list_file(file);
    }
    throw Failure(kUsage, "one of --scores or --scores-file is required");
}

kvtp_backend backend_from(const std::string& name) {
    kvtp_backend b{};
    if (kvtp_backend_from_name(name.c_str(), &b) != KVTP_OK) {
        throw Failure(kUsage, kvtp_last_error());
    }
    return b;
}

// ---- score ----
struct ScoreArgs {
    std::string params;
    std::string frames;
    std::string query;
    std::string out;
};

int run_score(const Common& common, const ScoreArgs& args) {
    MatrixPtr frames = load_matrix(args.frames);
    MatrixPtr query = load_matrix(args.query);
    if (kvtp_matrix_rows(query.get()) != 1) {
        throw Failure(kFormat, "query must hold exactly one row");
    }
    kvtp_params* raw = nullptr;
    if (args.params.empty()) {
        check(kvtp_params_create(kvtp_matrix_cols(frames.get()), &raw));
    } else {
        check(kvtp_params_load(args.params.c_str(), &raw));
    }
    ParamsPtr params(raw);
    std::vector<double> scores(kvtp_matrix_rows(frames.get()));
    check(kvtp_predict_scores(params.get(), frames.get(), common.clip_size, kvtp_matrix_data(query.get()),
                              kvtp_matrix_cols(query.get()), scores.data()));
    std::string text = "index, score\n";
    char line[64];
    for (size_t i = 0; i < scores.size(); ++i) {
        std::snprintf(line, sizeof(line), "%zu, %.9g\n", i, scores[i]);
        text += line;
    }
    write_output(args.out, text);
    return kOk;
}

// ---- allocate ----
struct AllocateArgs {
    std::string scores;
    std::string scores_file;
    double max_ratio = 1.0;
    size_t tokens_per_frame = 169;
    bool json = false;
    std::string out;
};

int run_allocate(const Common& common, const AllocateArgs& args) {
    const std::vector<double> scores = scores_from(args.scores, args.scores_file);
    const kvtp_allocation_config config{common.alpha, common.temperature, args.max_ratio};
    char* raw = nullptr;
    check(kvtp_allocation_report(scores.data(), scores.size(), &config, args.tokens_per_frame, common.beta,
                                 args.json ? 1 : 0, &raw));
    StringPtr report(raw);
    write_output(args.out, report.get());
    return kOk;
}

// ---- prune ----
struct PruneArgs {
    std::string tokens;
    std::string saliency;
    size_t tokens_per_frame = 0;
    std::string scores;
    std::string scores_file;
    std::string budgets;
    double max_ratio = 1.0;
    std::string out;
    std::string index;
};

int run_prune(const Common& common, const PruneArgs& args) {
    if (args.tokens_per_frame == 0) {
        throw Failure(kUsage, "--tokens-per-frame must be positive");
    }
    MatrixPtr tokens = load_matrix(args.tokens);
    MatrixPtr saliency;
    if (!args.saliency.empty()) {
        saliency = load_matrix(args.saliency);
    }
    const size_t rows = kvtp_matrix_rows(tokens.get());
    if (rows % args.tokens_per_frame != 0) {
        throw Failure(kFormat, "token rows are not a multiple of --tokens-per-frame");
    }
    const size_t frames = rows / args.tokens_per_frame;
    const kvtp_backend backend = backend_from(common.backend);

    kvtp_pruned* raw = nullptr;
    if (!args.budgets.empty()) {
        if (!args.scores.empty() || !args.scores_file.empty()) {
            throw Failure(kUsage, "--budgets cannot be combined with scores");
        }
        std::vector<size_t> budgets;
        for (double v : parse_list(args.budgets, "--budgets")) {
            if (v < 0 || v != static_cast<double>(static_cast<size_t>(v))) {
                throw Failure(kFormat, "budgets must be non-negative integers");
            }
            budgets.push_back(static_cast<size_t>(v));
        }
        if (budgets.size() != frames) {
            throw Failure(kFormat, "expected " + std::to_string(frames) + " budgets");
        }
        check(kvtp_prune_video(tokens.get(), args.tokens_per_frame, saliency.get(), budgets.data(), frames, backend,
                               common.seed, &raw));
    } else {
        const std::vector<double> scores = scores_from(args.scores, args.scores_file);
        if (scores.size() != frames) {
            throw Failure(kFormat, "expected " + std::to_string(frames) + " scores");
        }
        if (backend == KVTP_BACKEND_HARD) {
            check(kvtp_hard_frame_select(tokens.get(), args.tokens_per_frame, scores.data(), frames, common.alpha,
                                         &raw));
        } else {
            const kvtp_allocation_config config{common.alpha, common.temperature, args.max_ratio};
            std::vector<double> ratios(frames);
            std::vector<size_t> budgets(frames);
            check(kvtp_allocate(scores.data(), frames, &config, ratios.data()));
            check(kvtp_token_budgets(ratios.data(), frames, args.tokens_per_frame, budgets.data()));
            check(kvtp_prune_video(tokens.get(), args.tokens_per_frame, saliency.get(), budgets.data(), frames,
                                   backend, common.seed, &raw));
        }
    }
    PrunedPtr pruned(raw);
    check(kvtp_pruned_save(pruned.get(), args.out.c_str(), args.index.c_str()));
    std::cout << "frames: " << frames << "\ntokens: " << rows << "\nkept: " << kvtp_pruned_total_tokens(pruned.get())
              << "\n";
    return kOk;
}

// ---- generate ----
int run_generate(const Common& common, kvtp_synthetic_spec spec, const std::string& out) {
    spec.clip_size = common.clip_size;
    spec.seed = common.seed;
    kvtp_corpus* raw = nullptr;
    check(kvtp_synthetic_generate(&spec, &raw));
    CorpusPtr corpus(raw);
    check(kvtp_corpus_save(corpus.get(), out.c_str()));
    std::cout << "videos: " << kvtp_corpus_size(corpus.get()) << "\n";
    return kOk;
}

// ---- train ----
struct TrainArgs {
    std::string corpus;
    std::string init;
    std::string out;
    std::string loss_trace;
    std::string export_text;
    kvtp_train_config config{};
    bool freeze_mixing = false;
    bool freeze_adapter = false;
};

int run_train(const Common& common, TrainArgs args) {
    kvtp_corpus* raw_corpus = nullptr;
    check(kvtp_corpus_load(args.corpus.c_str(), &raw_corpus));
    CorpusPtr corpus(raw_corpus);
    ParamsPtr initial;
    if (!args.init.empty()) {
        kvtp_params* p = nullptr;
        check(kvtp_params_load(args.init.c_str(), &p));
        initial.reset(p);
    }
    args.config.seed = common.seed;
    args.config.train_mixing = args.freeze_mixing ? 0 : 1;
    args.config.train_adapter = args.freeze_adapter ? 0 : 1;
    std::vector<double> trace(args.config.epochs);
    kvtp_params* raw = nullptr;
    check(kvtp_train(corpus.get(), &args.config, initial.get(), &raw, trace.data()));
    ParamsPtr trained(raw);
    check(kvtp_params_save(trained.get(), args.out.c_str()));

    std::string text = "epoch,loss\n";
    char line[64];
    for (size_t i = 0; i < trace.size(); ++i) {
        std::snprintf(line, sizeof(line), "%zu,%.12g\n", i + 1, trace[i]);
        text += line;
    }
    if (!args.loss_trace.empty()) {
        write_output(args.loss_trace, text);
    } else {
        std::cerr << text;
    }
    if (!args.export_text.empty()) {
        char* exported = nullptr;
        check(kvtp_params_export_text(trained.get(), &exported));
        StringPtr holder(exported);
        write_output(args.export_text, exported);
    }
    return kOk;
}

// ---- curate ----
struct CurateArgs {
    std::vector<std::string> inputs;
    std::string out;
    bool mock = false;
    uint64_t mock_seed = 0;
    size_t concurrency = 4;
    size_t max_attempts = 3;
    std::string eval_sources;
    std::string model;
};

int run_curate(const Common& common, const CurateArgs& args) {
    kvtp_curate_config config{};
    kvtp_curate_config_default(&config);
    config.alpha = common.alpha;
    config.beta = common.beta;
    config.temperature = common.temperature;
    config.clip_size = common.clip_size;
    config.concurrency = args.concurrency;
    config.max_attempts = args.max_attempts;
    config.eval_sources = args.eval_sources.empty() ? nullptr : args.eval_sources.c_str();
    config.model = args.model.empty() ? nullptr : args.model.c_str();
    config.client = args.mock ? KVTP_CLIENT_MOCK : KVTP_CLIENT_HTTP;
    config.mock_seed = args.mock_seed;
    std::vector<const char*> inputs;
    for (const auto& s : args.inputs) {
        inputs.push_back(s.c_str());
    }
    char* summary = nullptr;
    check(kvtp_curate(inputs.data(), inputs.size(), args.out.c_str(), &config, &summary));
    StringPtr holder(summary);
    std::cout << summary;
    return kOk;
}

// ---- flops ----
struct FlopsArgs {
    std::string keep = "0.1,0.2,0.3,0.5";
    bool csv = false;
    kvtp_backbone_spec spec{};
    uint64_t full_tokens = 0;
    std::string out;
};

int run_flops(const FlopsArgs& args) {
    const std::vector<double> keep = parse_list(args.keep, "--keep");
    char* raw = nullptr;
    check(kvtp_flops_table(&args.spec, args.full_tokens, keep.data(), keep.size(), args.csv ? 1 : 0, &raw));
    StringPtr table(raw);
    write_output(args.out, table.get());
    return kOk;
}

// ---- simulate ----
struct SimulateArgs {
    kvtp_simulate_config config{};
    std::string temperatures;
    std::string betas;
    std::string out;
};

int run_simulate(const Common& common, SimulateArgs args) {
    std::vector<double> temps;
    std::vector<double> betas;
    if (!args.temperatures.empty()) {
        temps = parse_list(args.temperatures, "--temperatures");
        args.config.temperatures = temps.data();
        args.config.temperature_count = temps.size();
    }
    if (!args.betas.empty()) {
        betas = parse_list(args.betas, "--betas");
        args.config.betas = betas.data();
        args.config.beta_count = betas.size();
    }
    args.config.alpha = common.alpha;
    args.config.spec.clip_size = common.clip_size;
    args.config.spec.seed = common.seed;
    args.config.train.seed = common.seed;
    args.config.backend = backend_from(common.backend);
    char* raw = nullptr;
    double top1 = 0.0;
    check(kvtp_simulate(&args.config, &raw, &top1));
    StringPtr csv(raw);
    write_output(args.out, csv.get());
    std::fprintf(stderr, "top1_accuracy: %.4f\n", top1);
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Keyframe-oriented vision token pruning toolkit", "kvtp"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(kvtp_version()));
    app.set_config("--config", "", "Read key=value defaults from a file");

    Common common;
    app.add_option("--alpha", common.alpha, "Mean keep ratio")->capture_default_str();
    app.add_option("--beta", common.beta, "Keyframe sparsity threshold")->capture_default_str();
    app.add_option("--temperature", common.temperature, "Allocation softmax temperature")->capture_default_str();
    app.add_option("--clip-size", common.clip_size, "Frames per clip")->capture_default_str();
    app.add_option("--backend", common.backend, "random|saliency|prumerge|merge|hard")->capture_default_str();
    app.add_option("--seed", common.seed, "Random seed")->capture_default_str();

    // score
    ScoreArgs score;
    auto* score_cmd = app.add_subcommand("score", "Frame relevance scores from embeddings");
    score_cmd->fallthrough();
    score_cmd->add_option("--params", score.params, "Predictor parameter file");
    score_cmd->add_option("--frames", score.frames, "Frame embedding matrix (N x d)")->required();
    score_cmd->add_option("--query", score.query, "Query embedding (1 x d)")->required();
    score_cmd->add_option("--out", score.out, "Output file (default stdout)");

    // allocate
    AllocateArgs allocate;
    auto* allocate_cmd = app.add_subcommand("allocate", "Per-frame keep ratios and token budgets");
    allocate_cmd->fallthrough();
    allocate_cmd->add_option("--scores", allocate.scores, "Comma separated frame scores");
    allocate_cmd->add_option("--scores-file", allocate.scores_file, "File of frame scores");
    allocate_cmd->add_option("--max-ratio", allocate.max_ratio, "Upper bound per frame")->capture_default_str();
    allocate_cmd->add_option("--tokens-per-frame", allocate.tokens_per_frame)->capture_default_str();
    allocate_cmd->add_flag("--json", allocate.json, "Emit JSON");
    allocate_cmd->add_option("--out", allocate.out, "Output file (default stdout)");

    // prune
    PruneArgs prune;
    auto* prune_cmd = app.add_subcommand("prune", "Prune stacked frame tokens");
    prune_cmd->fallthrough();
    prune_cmd->add_option("--tokens", prune.tokens, "Stacked token matrix ((N*P) x d)")->required();
    prune_cmd->add_option("--tokens-per-frame", prune.tokens_per_frame)->required();
    prune_cmd->add_option("--saliency", prune.saliency, "Saliency matrix (N x P)");
    prune_cmd->add_option("--scores", prune.scores, "Comma separated frame scores");
    prune_cmd->add_option("--scores-file", prune.scores_file, "File of frame scores");
    prune_cmd->add_option("--budgets", prune.budgets, "Comma separated per-frame budgets");
    prune_cmd->add_option("--max-ratio", prune.max_ratio)->capture_default_str();
    prune_cmd->add_option("--out", prune.out, "Pruned token matrix")->required();
    prune_cmd->add_option("--index", prune.index, "Kept index CSV")->required();

    // generate
    kvtp_synthetic_spec spec{};
    kvtp_synthetic_spec_default(&spec);
    std::string generate_out;
    auto* generate_cmd = app.add_subcommand("generate", "Write a synthetic planted-keyframe corpus");
    generate_cmd->fallthrough();
    generate_cmd->add_option("--out", generate_out, "Corpus directory")->required();
    generate_cmd->add_option("--videos", spec.videos)->capture_default_str();
    generate_cmd->add_option("--frames", spec.frames)->capture_default_str();
    generate_cmd->add_option("--dim", spec.dim)->capture_default_str();
    generate_cmd->add_option("--tokens-per-frame", spec.tokens_per_frame)->capture_default_str();
    generate_cmd->add_option("--token-dim", spec.token_dim)->capture_default_str();
    generate_cmd->add_option("--keyframes", spec.keyframes)->capture_default_str();
    generate_cmd->add_option("--signal-tokens", spec.signal_tokens)->capture_default_str();
    generate_cmd->add_option("--context-tokens", spec.context_tokens)->capture_default_str();
    generate_cmd->add_option("--signal-strength", spec.signal_strength)->capture_default_str();

    // train
    TrainArgs train;
    kvtp_train_config_default(&train.config);
    auto* train_cmd = app.add_subcommand("train", "Fit predictor parameters on a corpus");
    train_cmd->fallthrough();
    train_cmd->add_option("--corpus", train.corpus, "Corpus directory")->required();
    train_cmd->add_option("--init", train.init, "Starting parameter file");
    train_cmd->add_option("--out", train.out, "Output parameter file")->required();
    train_cmd->add_option("--epochs", train.config.epochs)->capture_default_str();
    train_cmd->add_option("--lr", train.config.learning_rate)->capture_default_str();
    train_cmd->add_option("--momentum", train.config.momentum)->capture_default_str();
    train_cmd->add_option("--batch-size", train.config.batch_size)->capture_default_str();
    train_cmd->add_flag("--freeze-mixing", train.freeze_mixing, "Keep theta and phi fixed");
    train_cmd->add_flag("--freeze-adapter", train.freeze_adapter, "Keep the adapter fixed");
    train_cmd->add_option("--loss-trace", train.loss_trace, "Loss trace CSV (default stderr)");
    train_cmd->add_option("--export-text", train.export_text, "Human readable parameter dump");

    // curate
    CurateArgs curate;
    auto* curate_cmd = app.add_subcommand("curate", "Annotate and filter dataset records");
    curate_cmd->fallthrough();
    curate_cmd->add_option("inputs", curate.inputs, "Record JSON files")->required();
    curate_cmd->add_option("--out", curate.out, "Output directory")->required();
    curate_cmd->add_flag("--mock", curate.mock, "Use the deterministic offline client");
    curate_cmd->add_option("--mock-seed", curate.mock_seed)->capture_default_str();
    curate_cmd->add_option("--concurrency", curate.concurrency)->capture_default_str();
    curate_cmd->add_option("--max-attempts", curate.max_attempts)->capture_default_str();
    curate_cmd->add_option("--eval-sources", curate.eval_sources, "Comma separated benchmark names");
    curate_cmd->add_option("--model", curate.model, "Model name sent to the endpoint");

    // flops
    FlopsArgs flops;
    kvtp_calibration_backbone(&flops.spec, &flops.full_tokens);
    auto* flops_cmd = app.add_subcommand("flops", "Relative forward cost table");
    flops_cmd->fallthrough();
    flops_cmd->add_option("--keep", flops.keep, "Comma separated vision-token keep ratios")->capture_default_str();
    flops_cmd->add_flag("--csv", flops.csv, "Emit CSV");
    flops_cmd->add_option("--layers", flops.spec.layers)->capture_default_str();
    flops_cmd->add_option("--model-dim", flops.spec.model_dim)->capture_default_str();
    flops_cmd->add_option("--ffn-dim", flops.spec.ffn_dim)->capture_default_str();
    flops_cmd->add_option("--text-tokens", flops.spec.text_tokens)->capture_default_str();
    flops_cmd->add_option("--overhead", flops.spec.predictor_overhead_flops, "Predictor FLOPs")->capture_default_str();
    flops_cmd->add_option("--vision-tokens", flops.full_tokens, "Unpruned vision tokens")->capture_default_str();
    flops_cmd->add_option("--out", flops.out, "Output file (default stdout)");

    // simulate
    SimulateArgs simulate;
    kvtp_simulate_config_default(&simulate.config);
    auto* simulate_cmd = app.add_subcommand("simulate", "Synthetic end-to-end run with metrics CSV");
    simulate_cmd->fallthrough();
    simulate_cmd->add_option("--train-videos", simulate.config.train_videos)->capture_default_str();
    simulate_cmd->add_option("--eval-videos", simulate.config.eval_videos)->capture_default_str();
    simulate_cmd->add_option("--retention-videos", simulate.config.retention_videos)->capture_default_str();
    simulate_cmd->add_option("--epochs", simulate.config.train.epochs)->capture_default_str();
    simulate_cmd->add_option("--frames", simulate.config.spec.frames)->capture_default_str();
    simulate_cmd->add_option("--dim", simulate.config.spec.dim)->capture_default_str();
    simulate_cmd->add_option("--tokens-per-frame", simulate.config.spec.tokens_per_frame)->capture_default_str();
    simulate_cmd->add_option("--keyframes", simulate.config.spec.keyframes)->capture_default_str();
    simulate_cmd->add_option("--signal-tokens", simulate.config.spec.signal_tokens)->capture_default_str();
    simulate_cmd->add_option("--context-tokens", simulate.config.spec.context_tokens)->capture_default_str();
    simulate_cmd->add_option("--signal-strength", simulate.config.spec.signal_strength)->capture_default_str();
    simulate_cmd->add_option("--temperatures", simulate.temperatures, "Comma separated sweep");
    simulate_cmd->add_option("--betas", simulate.betas, "Comma separated sweep");
    simulate_cmd->add_option("--out", simulate.out, "Metrics CSV (default stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kUsage;
    }

    try {
        backend_from(common.backend);  // reject unknown names before touching any input
        if (*score_cmd) {
            return run_score(common, score);
        }
        if (*allocate_cmd) {
            return run_allocate(common, allocate);
        }
        if (*prune_cmd) {
            return run_prune(common, prune);
        }
        if (*generate_cmd) {
            return run_generate(common, spec, generate_out);
        }
        if (*train_cmd) {
            return run_train(common, train);
        }
        if (*curate_cmd) {
            return run_curate(common, curate);
        }
        if (*flops_cmd) {
            return run_flops(flops);
        }
        if (*simulate_cmd) {
            return run_simulate(common, simulate);
        }
    } catch (const Failure& f) {
        std::cerr << "kvtp: error: " << f.what() << "\n";
        return f.code;
    } catch (const std::exception& e) {
        std::cerr << "kvtp: error: " << e.what() << "\n";
        return kUsage;
    }
    return kUsage;
}
