// Copyright (C) 2026 KVTP contributors
// SPDX-License-Identifier: Apache-2.0

#include "kvtp/predictor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <random>
#include <sstream>

#include "kvtp/error.hpp"
#include "kvtp/io.hpp"

namespace kvtp {

namespace {

constexpr std::uint32_t kParamsVersion = 1;
constexpr double kMinTemperature = 1e-3;

double softplus(double z) {
    // log(1 + e^z) without overflow.
    return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

double sigmoid(double z) {
    if (z >= 0.0) {
        return 1.0 / (1.0 + std::exp(-z));
    }
    const double e = std::exp(z);
    return e / (1.0 + e);
}

struct Clip {
    std::size_t first;
    std::size_t count;
};

std::vector<Clip> clips_of(std::size_t frames, std::size_t clip_size) {
    std::vector<Clip> out;
    for (std::size_t s = 0; s < frames; s += clip_size) {
        out.push_back({s, std::min(clip_size, frames - s)});
    }
    return out;
}

Matrix adapted_frames(const PredictorParams& params, const EmbeddingSequence& embeddings) {
    if (!params.adapter) {
        return embeddings.frames;
    }
    require(params.adapter->rows() == embeddings.dim() && params.adapter->cols() == embeddings.dim(),
            "adapter must be " + std::to_string(embeddings.dim()) + "x" + std::to_string(embeddings.dim()));
    return matmul(embeddings.frames, *params.adapter);
}

Matrix local_fusion(const Matrix& x, std::size_t clip_size, double tau) {
    Matrix out(x.rows(), x.cols());
    const double d = static_cast<double>(x.cols());
    for (const Clip& clip : clips_of(x.rows(), clip_size)) {
        const Matrix values = x.slice_rows(clip.first, clip.count);
        const Matrix keys = normalize_rows(values);
        for (std::size_t i = clip.first; i < clip.first + clip.count; ++i) {
            const Vector fused = cross_attention(x.row(i), keys, values, tau, d);
            std::copy(fused.begin(), fused.end(), out.row(i).begin());
        }
    }
    return out;
}

Matrix global_fusion(const Matrix& x, double tau) {
    Matrix out(x.rows(), x.cols());
    const Matrix keys = normalize_rows(x);
    const double d = static_cast<double>(x.cols());
    for (std::size_t i = 0; i < x.rows(); ++i) {
        const Vector fused = cross_attention(x.row(i), keys, x, tau, d);
        std::copy(fused.begin(), fused.end(), out.row(i).begin());
    }
    return out;
}

Vector cosine_logits(const Matrix& rows, std::span<const double> query, double a, double b, Vector* cosines) {
    Vector out(rows.rows());
    if (cosines) {
        cosines->resize(rows.rows());
    }
    for (std::size_t i = 0; i < rows.rows(); ++i) {
        const double c = cosine_similarity(rows.row(i), query);
        if (cosines) {
            (*cosines)[i] = c;
        }
        out[i] = a * c + b;
    }
    return out;
}

struct Forward {
    Matrix x;
    Matrix local;
    Matrix global;
    Vector cos_base;
    Vector cos_local;
    Vector cos_global;
    Vector base;
    Vector local_logits;
    Vector global_logits;
    Vector combined;
};

Forward run_forward(const PredictorParams& params, const EmbeddingSequence& embeddings,
                    std::span<const double> query) {
    params.validate();
    embeddings.validate();
    require(query.size() == embeddings.dim(), "query dim " + std::to_string(query.size()) +
                                                  " does not match frame dim " + std::to_string(embeddings.dim()));
    Forward f;
    f.x = adapted_frames(params, embeddings);
    f.local = local_fusion(f.x, embeddings.clip_size, params.tau_local);
    f.global = global_fusion(f.x, params.tau_global);
    f.base = cosine_logits(f.x, query, params.a, params.b, &f.cos_base);
    f.local_logits = cosine_logits(f.local, query, params.a, params.b, &f.cos_local);
    f.global_logits = cosine_logits(f.global, query, params.a, params.b, &f.cos_global);
    const double w0 = 1.0 - params.theta - params.phi;
    f.combined.resize(f.base.size());
    for (std::size_t i = 0; i < f.base.size(); ++i) {
        f.combined[i] = w0 * f.base[i] + params.theta * f.local_logits[i] + params.phi * f.global_logits[i];
    }
    return f;
}

void add_row(Matrix& m, std::size_t r, std::span<const double> v, double scale = 1.0) {
    auto row = m.row(r);
    for (std::size_t c = 0; c < v.size(); ++c) {
        row[c] += scale * v[c];
    }
}

// Back-propagates a gradient on the fused rows of one attention block (keys = normalized values).
// Accumulates into dx and returns the temperature gradient.
double fusion_backward(const Matrix& x, std::size_t first, std::size_t count, const Matrix& d_fused, double tau,
                       Matrix& dx) {
    const Matrix values = x.slice_rows(first, count);
    const Matrix keys = normalize_rows(values);
    const double d = static_cast<double>(x.cols());
    Matrix d_keys(count, x.cols());
    Matrix d_values(count, x.cols());
    double d_tau = 0.0;
    for (std::size_t i = first; i < first + count; ++i) {
        const auto up = d_fused.row(i);
        if (std::all_of(up.begin(), up.end(), [](double v) { return v == 0.0; })) {
            continue;
        }
        const CrossAttentionGrad g = cross_attention_backward(x.row(i), keys, values, tau, d, up);
        add_row(dx, i, g.query);
        for (std::size_t j = 0; j < count; ++j) {
            add_row(d_keys, j, g.keys.row(j));
            add_row(d_values, j, g.values.row(j));
        }
        d_tau += g.temperature;
    }
    const Matrix d_from_keys = normalize_rows_backward(values, d_keys);
    for (std::size_t j = 0; j < count; ++j) {
        add_row(dx, first + j, d_from_keys.row(j));
        add_row(dx, first + j, d_values.row(j));
    }
    return d_tau;
}

}  // namespace

void EmbeddingSequence::validate() const {
    require(frames.rows() >= 1, "embedding sequence needs at least one frame");
    require(frames.cols() >= 1, "embedding dimension must be positive");
    // clip_size > N is a single clip, same as partition_clips
    require(clip_size >= 1, "clip size must be positive");
}

PredictorParams PredictorParams::initial(std::size_t dim) {
    PredictorParams p;
    if (dim > 0) {
        p.adapter = Matrix::identity(dim);
    }
    return p;
}

void PredictorParams::validate() const {
    for (double v : {a, b, tau_local, tau_global, theta, phi}) {
        require(std::isfinite(v), "predictor parameters must be finite", ErrorCode::Numerical);
    }
    require(tau_local > 0.0 && tau_global > 0.0, "fusion temperatures must be positive");
    require(theta >= 0.0 && theta <= 1.0 && phi >= 0.0 && phi <= 1.0, "theta and phi must lie in [0, 1]");
    require(theta + phi <= 1.0 + 1e-12, "theta + phi must not exceed 1");
    if (adapter) {
        require(adapter->rows() == adapter->cols(), "adapter must be square");
    }
}

void TrainingSample::validate() const {
    embeddings.validate();
    require(query.size() == embeddings.dim(), "query dim does not match frame dim");
    require(labels.size() == embeddings.frame_count(), "label count does not match frame count");
    for (double v : labels) {
        require(std::isfinite(v), "labels must be finite", ErrorCode::Numerical);
    }
}

EmbeddingSequence apply_adapter(const PredictorParams& params, const EmbeddingSequence& embeddings) {
    return {adapted_frames(params, embeddings), embeddings.clip_size};
}

Vector base_logits(const PredictorParams& params, const EmbeddingSequence& embeddings, std::span<const double> query) {
    require(query.size() == embeddings.dim(), "query dim does not match frame dim");
    return cosine_logits(adapted_frames(params, embeddings), query, params.a, params.b, nullptr);
}

Matrix local_fused_embeddings(const PredictorParams& params, const EmbeddingSequence& embeddings) {
    embeddings.validate();
    return local_fusion(adapted_frames(params, embeddings), embeddings.clip_size, params.tau_local);
}

Matrix global_fused_embeddings(const PredictorParams& params, const EmbeddingSequence& embeddings) {
    embeddings.validate();
    return global_fusion(adapted_frames(params, embeddings), params.tau_global);
}

Vector combined_logits(const PredictorParams& params, const EmbeddingSequence& embeddings,
                       std::span<const double> query) {
    return run_forward(params, embeddings, query).combined;
}

Vector center_labels(std::span<const double> labels) {
    require(!labels.empty(), "center_labels: empty label vector");
    const double mean = std::accumulate(labels.begin(), labels.end(), 0.0) / static_cast<double>(labels.size());
    Vector out(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
        out[i] = labels[i] - mean;
    }
    return out;
}

double loss(const PredictorParams& params, const TrainingSample& sample) {
    sample.validate();
    const Vector logits = combined_logits(params, sample.embeddings, sample.query);
    const Vector centered = center_labels(sample.labels);
    double total = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        total += softplus(-logits[i] * centered[i]);
    }
    return total;
}

LossAndGradients loss_gradients(const PredictorParams& params, const TrainingSample& sample) {
    sample.validate();
    const Forward f = run_forward(params, sample.embeddings, sample.query);
    const Vector centered = center_labels(sample.labels);
    const std::size_t n = f.combined.size();
    const double w0 = 1.0 - params.theta - params.phi;

    LossAndGradients out;
    ParamGradients& g = out.gradients;
    Vector d_logit(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double z = f.combined[i] * centered[i];
        out.loss += softplus(-z);
        d_logit[i] = -centered[i] * sigmoid(-z);
        g.a += d_logit[i] * (w0 * f.cos_base[i] + params.theta * f.cos_local[i] + params.phi * f.cos_global[i]);
        g.b += d_logit[i];
        g.theta += d_logit[i] * (f.local_logits[i] - f.base[i]);
        g.phi += d_logit[i] * (f.global_logits[i] - f.base[i]);
    }

    const bool need_dx = params.adapter.has_value();
    const bool need_local = params.theta != 0.0;
    const bool need_global = params.phi != 0.0;
    if (!need_dx && !need_local && !need_global) {
        return out;
    }

    const std::size_t d = f.x.cols();
    Matrix dx(n, d);
    Matrix d_local(n, d);
    Matrix d_global(n, d);
    for (std::size_t i = 0; i < n; ++i) {
        if (d_logit[i] == 0.0) {
            continue;
        }
        const double scale = d_logit[i] * params.a;
        if (need_dx && w0 != 0.0) {
            add_row(dx, i, cosine_similarity_grad(f.x.row(i), sample.query), scale * w0);
        }
        if (need_local) {
            add_row(d_local, i, cosine_similarity_grad(f.local.row(i), sample.query), scale * params.theta);
        }
        if (need_global) {
            add_row(d_global, i, cosine_similarity_grad(f.global.row(i), sample.query), scale * params.phi);
        }
    }
    if (need_local) {
        for (const Clip& clip : clips_of(n, sample.embeddings.clip_size)) {
            g.tau_local += fusion_backward(f.x, clip.first, clip.count, d_local, params.tau_local, dx);
        }
    }
    if (need_global) {
        g.tau_global = fusion_backward(f.x, 0, n, d_global, params.tau_global, dx);
    }
    if (need_dx) {
        g.adapter = matmul_transpose_lhs(sample.embeddings.frames, dx);
    }
    return out;
}

TrainResult train(std::span<const TrainingSample> samples, const TrainConfig& config, PredictorParams initial) {
    require(!samples.empty(), "train: at least one sample required");
    require(config.learning_rate > 0.0, "train: learning rate must be positive");
    require(config.batch_size >= 1, "train: batch size must be positive");
    require(config.momentum >= 0.0 && config.momentum < 1.0, "train: momentum must lie in [0, 1)");
    initial.validate();
    for (const auto& s : samples) {
        s.validate();
    }

    TrainResult result{std::move(initial), {}};
    PredictorParams& p = result.params;
    ParamGradients velocity;
    if (p.adapter) {
        velocity.adapter = Matrix(p.adapter->rows(), p.adapter->cols());
    }

    std::vector<std::size_t> order(samples.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(config.seed);

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t stop = std::min(order.size(), start + config.batch_size);
            const double inv = 1.0 / static_cast<double>(stop - start);
            ParamGradients sum;
            if (p.adapter) {
                sum.adapter = Matrix(p.adapter->rows(), p.adapter->cols());
            }
            for (std::size_t k = start; k < stop; ++k) {
                const LossAndGradients lg = loss_gradients(p, samples[order[k]]);
                if (!std::isfinite(lg.loss)) {
                    throw Error(ErrorCode::Numerical,
                                "training diverged at epoch " + std::to_string(epoch) + " (non-finite loss)");
                }
                epoch_loss += lg.loss;
                sum.a += lg.gradients.a;
                sum.b += lg.gradients.b;
                sum.tau_local += lg.gradients.tau_local;
                sum.tau_global += lg.gradients.tau_global;
                sum.theta += lg.gradients.theta;
                sum.phi += lg.gradients.phi;
                if (sum.adapter && lg.gradients.adapter) {
                    auto dst = sum.adapter->data();
                    const auto src = lg.gradients.adapter->data();
                    for (std::size_t j = 0; j < dst.size(); ++j) {
                        dst[j] += src[j];
                    }
                }
            }

            const double lr = config.learning_rate;
            const double mu = config.momentum;
            auto step = [&](double& value, double& vel, double grad) {
                vel = mu * vel - lr * grad * inv;
                value += vel;
            };
            step(p.a, velocity.a, sum.a);
            step(p.b, velocity.b, sum.b);
            step(p.tau_local, velocity.tau_local, sum.tau_local);
            step(p.tau_global, velocity.tau_global, sum.tau_global);
            if (config.train_mixing) {
                step(p.theta, velocity.theta, sum.theta);
                step(p.phi, velocity.phi, sum.phi);
            }
            if (p.adapter && config.train_adapter) {
                auto w = p.adapter->data();
                auto v = velocity.adapter->data();
                const auto gsum = sum.adapter->data();
                for (std::size_t j = 0; j < w.size(); ++j) {
                    step(w[j], v[j], gsum[j]);
                }
            }

            // Project back onto the feasible set.
            p.tau_local = std::max(p.tau_local, kMinTemperature);
            p.tau_global = std::max(p.tau_global, kMinTemperature);
            p.theta = std::clamp(p.theta, 0.0, 1.0);
            p.phi = std::clamp(p.phi, 0.0, 1.0);
            if (p.theta + p.phi > 1.0) {
                const double s = p.theta + p.phi;
                p.theta /= s;
                p.phi /= s;
            }
            bool finite = std::isfinite(p.a) && std::isfinite(p.b) && std::isfinite(p.tau_local) &&
                          std::isfinite(p.tau_global) && std::isfinite(p.theta) && std::isfinite(p.phi);
            if (p.adapter) {
                for (double v : p.adapter->data()) finite = finite && std::isfinite(v);
            }
            {
                if (!finite) {
                    throw Error(ErrorCode::Numerical,
                                "training diverged at epoch " + std::to_string(epoch) + " (non-finite parameter)");
                }
            }
        }
        result.loss_trace.push_back(epoch_loss / static_cast<double>(samples.size()));
    }
    return result;
}

namespace {

void put_bytes(std::string& out, const void* p, std::size_t n) {
    out.append(static_cast<const char*>(p), n);
}

class Reader {
public:
    explicit Reader(const std::string& bytes) : m_bytes(bytes) {}

    template <typename T>
    T get() {
        require(m_pos + sizeof(T) <= m_bytes.size(), "params file truncated at byte " + std::to_string(m_pos),
                ErrorCode::Format);
        T v;
        std::memcpy(&v, m_bytes.data() + m_pos, sizeof(T));
        m_pos += sizeof(T);
        return v;
    }

    bool at_end() const { return m_pos == m_bytes.size(); }

private:
    const std::string& m_bytes;
    std::size_t m_pos = 0;
};

}  // namespace

std::string serialize_params(const PredictorParams& params) {
    std::string out = "KVTP";
    put_bytes(out, &kParamsVersion, sizeof(kParamsVersion));
    for (double v : {params.a, params.b, params.tau_local, params.tau_global, params.theta, params.phi}) {
        put_bytes(out, &v, sizeof(v));
    }
    const std::uint8_t has_adapter = params.adapter ? 1 : 0;
    put_bytes(out, &has_adapter, 1);
    if (params.adapter) {
        const std::uint64_t rows = params.adapter->rows();
        const std::uint64_t cols = params.adapter->cols();
        put_bytes(out, &rows, sizeof(rows));
        put_bytes(out, &cols, sizeof(cols));
        for (double v : params.adapter->data()) {
            put_bytes(out, &v, sizeof(v));
        }
    }
    return out;
}

PredictorParams deserialize_params(const std::string& bytes) {
    require(bytes.size() >= 8 && bytes.compare(0, 4, "KVTP") == 0, "params file: bad magic", ErrorCode::Format);
    Reader r(bytes);
    r.get<std::uint32_t>();  // magic
    const auto version = r.get<std::uint32_t>();
    require(version == kParamsVersion, "params file: unsupported version " + std::to_string(version),
            ErrorCode::Format);
    PredictorParams p;
    p.a = r.get<double>();
    p.b = r.get<double>();
    p.tau_local = r.get<double>();
    p.tau_global = r.get<double>();
    p.theta = r.get<double>();
    p.phi = r.get<double>();
    const auto flag = r.get<std::uint8_t>();
    require(flag <= 1, "params file: bad adapter flag", ErrorCode::Format);
    if (flag) {
        const auto rows = r.get<std::uint64_t>();
        const auto cols = r.get<std::uint64_t>();
        require(rows == cols && rows <= (1u << 16), "params file: bad adapter shape", ErrorCode::Format);
        std::vector<double> data(rows * cols);
        for (double& v : data) {
            v = r.get<double>();
        }
        p.adapter = Matrix(rows, cols, std::move(data));
    }
    require(r.at_end(), "params file: trailing bytes", ErrorCode::Format);
    try {
        p.validate();
    } catch (const Error& e) {
        throw Error(ErrorCode::Format, std::string("params file: ") + e.what());
    }
    return p;
}

void save_params(const std::filesystem::path& path, const PredictorParams& params) {
    write_text_file(path, serialize_params(params));
}

PredictorParams load_params(const std::filesystem::path& path) {
    return deserialize_params(read_text_file(path));
}

std::string export_params_text(const PredictorParams& params) {
    std::ostringstream out;
    out.precision(17);
    out << "version = " << kParamsVersion << '\n'
        << "a = " << params.a << '\n'
        << "b = " << params.b << '\n'
        << "tau_local = " << params.tau_local << '\n'
        << "tau_global = " << params.tau_global << '\n'
        << "theta = " << params.theta << '\n'
        << "phi = " << params.phi << '\n';
    if (params.adapter) {
        out << "adapter_rows = " << params.adapter->rows() << '\n'
            << "adapter_cols = " << params.adapter->cols() << '\n';
        for (std::size_t r = 0; r < params.adapter->rows(); ++r) {
            out << "adapter[" << r << "] = ";
            for (std::size_t c = 0; c < params.adapter->cols(); ++c) {
                out << (c ? ", " : "") << (*params.adapter)(r, c);
            }
            out << '\n';
        }
    } else {
        out << "adapter = none\n";
    }
    return out.str();
}

}  // namespace kvtp
