#include "ctxmeter/train.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <json.hpp>

#include "ctxmeter/errors.hpp"
#include "ctxmeter/io_util.hpp"
#include "ctxmeter/parallel.hpp"
#include "ctxmeter/rng.hpp"
#include "ctxmeter/tape.hpp"

namespace ctxmeter::train {

using autodiff::Tape;
using autodiff::Var;
using data::Dataset;
using data::LabelKind;
using data::Utterance;
using nlohmann::json;

namespace {

constexpr char kProbeMagic[4] = {'C', 'T', 'X', 'P'};
constexpr uint32_t kProbeVersion = 1;

const char* optimizer_name(OptimizerKind k) { return k == OptimizerKind::kSgd ? "sgd" : "adam"; }
const char* schedule_name(LrSchedule s) {
    return s == LrSchedule::kConstant ? "constant" : "cosine";
}

// Adam with bias correction; SGD is the degenerate no-state path.
class Optimizer {
public:
    Optimizer(const TrainConfig& config, size_t num_params) : config_(config) {
        if (config_.optimizer == OptimizerKind::kAdam) {
            m_.resize(num_params);
            v_.resize(num_params);
        }
    }

    void step(model::TransformerEncoder& model, std::vector<Tensor>& grads, double lr) {
        ++t_;
        if (config_.grad_clip > 0.0) {
            double sq = 0.0;
            for (const Tensor& g : grads)
                for (int64_t i = 0; i < g.numel(); ++i) sq += g[i] * g[i];
            const double norm = std::sqrt(sq);
            if (norm > config_.grad_clip) {
                const double s = config_.grad_clip / norm;
                for (Tensor& g : grads) g.scale_inplace(s);
            }
        }
        for (size_t p = 0; p < grads.size(); ++p) {
            Tensor& w = model.mutable_param(p);
            const Tensor& g = grads[p];
            if (config_.optimizer == OptimizerKind::kSgd) {
                w.add_scaled(g, -lr);
                continue;
            }
            if (m_[p].empty()) {
                m_[p] = Tensor::zeros(g.shape());
                v_[p] = Tensor::zeros(g.shape());
            }
            const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
            const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
            for (int64_t i = 0; i < g.numel(); ++i) {
                m_[p][i] = config_.beta1 * m_[p][i] + (1.0 - config_.beta1) * g[i];
                v_[p][i] = config_.beta2 * v_[p][i] + (1.0 - config_.beta2) * g[i] * g[i];
                const double mhat = m_[p][i] / bc1;
                const double vhat = v_[p][i] / bc2;
                w[i] -= lr * mhat / (std::sqrt(vhat) + config_.adam_eps);
            }
        }
    }

private:
    TrainConfig config_;
    int64_t t_ = 0;
    std::vector<Tensor> m_;
    std::vector<Tensor> v_;
};

Tensor regression_target(const Utterance& u, int64_t head_out) {
    Tensor t({u.features.num_frames(), head_out});
    for (int64_t i = 0; i < t.rows(); ++i)
        for (int64_t j = 0; j < head_out; ++j) t(i, j) = u.labels.targets[i];
    return t;
}

// Loss (and grads when requested) for one utterance.
double utterance_loss(const model::TransformerEncoder& model, const Utterance& u,
                      std::vector<Tensor>* grad_acc) {
    Tape tape;
    Var input = tape.constant(u.features.frames);
    model::GraphOutputs out =
        model.build_graph(tape, input, 0, /*with_head=*/true, /*trainable=*/grad_acc != nullptr);

    Var loss;
    if (model.config().head == model::HeadKind::kClassifier) {
        loss = autodiff::cross_entropy_mean(out.head_out, u.labels.class_ids);
    } else {
        Var target = tape.constant(regression_target(u, model.config().head_out));
        loss = autodiff::mse_mean(out.head_out, target);
    }

    if (grad_acc != nullptr) {
        Tensor seed({1});
        seed[0] = 1.0;
        std::vector<Var> wrts;
        wrts.reserve(out.params.size());
        for (const auto& [name, var] : out.params) wrts.push_back(var);
        std::vector<Tensor> grads = tape.vjp_multi(loss, seed, wrts);
        if (grad_acc->empty()) {
            *grad_acc = std::move(grads);
        } else {
            for (size_t i = 0; i < grads.size(); ++i) (*grad_acc)[i].add_scaled(grads[i], 1.0);
        }
    }
    return loss.value()[0];
}

struct EvalResult {
    double loss = 0.0;
    double error = 0.0;
};

EvalResult evaluate(const model::TransformerEncoder& model, const Dataset& dataset) {
    CompensatedSum loss_sum;
    int64_t wrong = 0;
    int64_t frames = 0;
    CompensatedSum se_sum;
    for (const Utterance& u : dataset.utterances) {
        loss_sum.add(utterance_loss(model, u, nullptr) *
                     static_cast<double>(u.features.num_frames()));
        frames += u.features.num_frames();
        if (model.config().head == model::HeadKind::kClassifier) {
            const std::vector<int64_t> pred = model.predict_classes(u.features.frames);
            for (size_t i = 0; i < pred.size(); ++i) {
                if (pred[i] != u.labels.class_ids[i]) ++wrong;
            }
        } else {
            const Tensor pred = model.predict_values(u.features.frames);
            for (int64_t i = 0; i < pred.rows(); ++i) {
                const double d = pred(i, 0) - u.labels.targets[i];
                se_sum.add(d * d);
            }
        }
    }
    EvalResult r;
    r.loss = loss_sum.value() / static_cast<double>(frames);
    if (model.config().head == model::HeadKind::kClassifier) {
        r.error = static_cast<double>(wrong) / static_cast<double>(frames);
    } else {
        r.error = se_sum.value() / static_cast<double>(frames);
    }
    return r;
}

void check_labels(const model::ModelConfig& mc, const Dataset& ds, const char* which) {
    if (ds.utterances.empty()) throw ConfigError(std::string(which) + " dataset is empty");
    const LabelKind kind = ds.label_kind();
    if (mc.head == model::HeadKind::kClassifier && kind != LabelKind::kClassIds) {
        throw ConfigError(std::string(which) + " dataset has real targets, head is a classifier");
    }
    if (mc.head == model::HeadKind::kRegressor && kind != LabelKind::kRealTargets) {
        throw ConfigError(std::string(which) + " dataset has class ids, head is a regressor");
    }
    if (mc.head == model::HeadKind::kClassifier) {
        for (const Utterance& u : ds.utterances)
            for (int64_t id : u.labels.class_ids)
                if (id < 0 || id >= mc.head_out) {
                    throw ConfigError("label " + std::to_string(id) + " out of range for " +
                                      std::to_string(mc.head_out) + " classes");
                }
    }
}

}  // namespace

std::string TrainConfig::to_json() const {
    json j;
    j["optimizer"] = optimizer_name(optimizer);
    j["lr"] = lr;
    j["beta1"] = beta1;
    j["beta2"] = beta2;
    j["adam_eps"] = adam_eps;
    j["schedule"] = schedule_name(schedule);
    j["batch_utterances"] = batch_utterances;
    j["epochs"] = epochs;
    j["seed"] = seed;
    j["grad_clip"] = grad_clip;
    return j.dump();
}

TrainConfig TrainConfig::from_json(const std::string& text) {
    json j = json::parse(text);
    TrainConfig c;
    const std::string opt = j.at("optimizer").get<std::string>();
    if (opt == "sgd") {
        c.optimizer = OptimizerKind::kSgd;
    } else if (opt == "adam") {
        c.optimizer = OptimizerKind::kAdam;
    } else {
        throw ConfigError("unknown optimizer '" + opt + "'");
    }
    c.lr = j.at("lr").get<double>();
    c.beta1 = j.value("beta1", 0.9);
    c.beta2 = j.value("beta2", 0.999);
    c.adam_eps = j.value("adam_eps", 1e-8);
    const std::string sched = j.value("schedule", "constant");
    if (sched == "constant") {
        c.schedule = LrSchedule::kConstant;
    } else if (sched == "cosine") {
        c.schedule = LrSchedule::kCosine;
    } else {
        throw ConfigError("unknown lr schedule '" + sched + "'");
    }
    c.batch_utterances = j.at("batch_utterances").get<int64_t>();
    c.epochs = j.at("epochs").get<int64_t>();
    c.seed = j.at("seed").get<uint64_t>();
    c.grad_clip = j.value("grad_clip", 1.0);
    return c;
}

TrainResult train_supervised(const model::ModelConfig& model_config, const Dataset& train_set,
                             const Dataset& dev_set, const TrainConfig& config) {
    model_config.validate();
    check_labels(model_config, train_set, "train");
    check_labels(model_config, dev_set, "dev");
    if (config.epochs < 1) throw ConfigError("epochs must be >= 1");
    if (config.batch_utterances < 1) throw ConfigError("batch_utterances must be >= 1");

    TrainResult result;
    result.model = std::make_unique<model::TransformerEncoder>(model_config);
    model::TransformerEncoder& model = *result.model;

    Optimizer opt(config, model.param_count());
    Rng shuffle_rng = Rng::forked(config.seed, 1);
    std::vector<size_t> order(train_set.utterances.size());
    std::iota(order.begin(), order.end(), 0);

    const int64_t batches_per_epoch =
        (static_cast<int64_t>(order.size()) + config.batch_utterances - 1) /
        config.batch_utterances;
    const int64_t total_steps = batches_per_epoch * config.epochs;
    int64_t step = 0;

    for (int64_t epoch = 0; epoch < config.epochs; ++epoch) {
        // Fisher-Yates with our own RNG keeps the order reproducible.
        for (size_t i = order.size(); i > 1; --i) {
            std::swap(order[i - 1], order[shuffle_rng.uniform_int(static_cast<int64_t>(i))]);
        }

        CompensatedSum epoch_loss;
        int64_t epoch_frames = 0;
        for (size_t start = 0; start < order.size();
             start += static_cast<size_t>(config.batch_utterances)) {
            const size_t end =
                std::min(order.size(), start + static_cast<size_t>(config.batch_utterances));
            std::vector<Tensor> grads;
            double batch_loss = 0.0;
            for (size_t i = start; i < end; ++i) {
                const Utterance& u = train_set.utterances[order[i]];
                batch_loss += utterance_loss(model, u, &grads);
                epoch_frames += u.features.num_frames();
            }
            const double inv = 1.0 / static_cast<double>(end - start);
            if (!std::isfinite(batch_loss)) {
                throw DivergenceError("training loss is not finite", epoch);
            }
            for (Tensor& g : grads) g.scale_inplace(inv);
            epoch_loss.add(batch_loss);

            double lr = config.lr;
            if (config.schedule == LrSchedule::kCosine) {
                lr *= 0.5 * (1.0 + std::cos(M_PI * static_cast<double>(step) /
                                            static_cast<double>(total_steps)));
            }
            opt.step(model, grads, lr);
            ++step;
        }

        EpochMetrics m;
        m.epoch = epoch;
        m.train_loss = epoch_loss.value() / static_cast<double>(train_set.utterances.size());
        const EvalResult train_eval = evaluate(model, train_set);
        const EvalResult dev_eval = evaluate(model, dev_set);
        m.train_error = train_eval.error;
        m.dev_loss = dev_eval.loss;
        m.dev_error = dev_eval.error;
        result.history.push_back(m);
    }
    return result;
}

// ---- probes ----------------------------------------------------------------

Tensor ProbeClassifier::logits(const Tensor& activations) const {
    const int64_t t = activations.rows();
    const int64_t c = bias.numel();
    const int64_t d = weights.rows();
    if (activations.cols() != d) {
        throw ConfigError("probe expects " + std::to_string(d) + "-dim activations, got " +
                          activations.shape_str());
    }
    Tensor out({t, c});
    for (int64_t i = 0; i < t; ++i) {
        for (int64_t j = 0; j < c; ++j) out(i, j) = bias[j];
        for (int64_t k = 0; k < d; ++k) {
            const double a = activations(i, k);
            if (a == 0.0) continue;
            for (int64_t j = 0; j < c; ++j) out(i, j) += a * weights(k, j);
        }
    }
    return out;
}

std::vector<int64_t> ProbeClassifier::predict(const Tensor& activations) const {
    return model::argmax_rows(logits(activations));
}

void ProbeClassifier::save(const std::string& path, const std::string& manifest_hash) const {
    json meta;
    meta["source_layer"] = source_layer;
    meta["input_dim"] = weights.rows();
    meta["num_classes"] = bias.numel();
    if (!manifest_hash.empty()) meta["manifest_hash"] = manifest_hash;
    const std::string meta_text = meta.dump();

    ByteWriter w;
    w.write_magic(kProbeMagic);
    w.write_u32(kProbeVersion);
    w.write_u64(meta_text.size());
    w.write_bytes(meta_text.data(), meta_text.size());
    w.write_bytes(weights.data(), sizeof(double) * static_cast<size_t>(weights.numel()));
    w.write_bytes(bias.data(), sizeof(double) * static_cast<size_t>(bias.numel()));
    atomic_write_file(path, w.buffer().data(), w.buffer().size());
}

ProbeClassifier ProbeClassifier::load(const std::string& path) {
    const std::vector<uint8_t> bytes = read_file(path);
    ByteReader r(bytes.data(), bytes.size(), path);
    r.expect_magic(kProbeMagic);
    const size_t version_at = r.offset();
    const uint32_t version = r.read_u32();
    if (version != kProbeVersion) {
        throw FormatError(path + ": unsupported probe version " + std::to_string(version),
                          version_at);
    }
    const uint64_t meta_len = r.read_u64();
    json meta = json::parse(r.read_bytes(meta_len));
    ProbeClassifier p;
    p.source_layer = meta.at("source_layer").get<int64_t>();
    const int64_t d = meta.at("input_dim").get<int64_t>();
    const int64_t c = meta.at("num_classes").get<int64_t>();
    p.weights = Tensor({d, c});
    p.bias = Tensor({c});
    for (int64_t i = 0; i < p.weights.numel(); ++i) p.weights[i] = r.read_f64();
    for (int64_t i = 0; i < p.bias.numel(); ++i) p.bias[i] = r.read_f64();
    r.expect_end();
    return p;
}

namespace {

struct FrameTable {
    Tensor features;  // F x D
    std::vector<int64_t> labels;
};

FrameTable collect_activations(const model::TransformerEncoder& model, int64_t layer,
                               const Dataset& dataset, int threads) {
    const int64_t n = static_cast<int64_t>(dataset.utterances.size());
    std::vector<Tensor> acts(n);
    parallel_for(n, threads, [&](int64_t i) {
        acts[i] = model.evaluate_layer(dataset.utterances[i].features.frames, layer);
    });

    FrameTable table;
    int64_t frames = 0;
    for (const Tensor& a : acts) frames += a.rows();
    table.features = Tensor({frames, model.config().model_dim});
    table.labels.reserve(frames);
    int64_t row = 0;
    for (int64_t i = 0; i < n; ++i) {
        for (int64_t r = 0; r < acts[i].rows(); ++r, ++row)
            for (int64_t c = 0; c < acts[i].cols(); ++c) table.features(row, c) = acts[i](r, c);
        const auto& ids = dataset.utterances[i].labels.class_ids;
        table.labels.insert(table.labels.end(), ids.begin(), ids.end());
    }
    return table;
}

double probe_dataset_loss(const ProbeClassifier& probe, const FrameTable& table) {
    const Tensor logits = probe.logits(table.features);
    CompensatedSum nll;
    for (int64_t i = 0; i < logits.rows(); ++i) {
        double m = logits(i, 0);
        for (int64_t j = 1; j < logits.cols(); ++j) m = std::max(m, logits(i, j));
        double z = 0.0;
        for (int64_t j = 0; j < logits.cols(); ++j) z += std::exp(logits(i, j) - m);
        nll.add(m + std::log(z) - logits(i, table.labels[i]));
    }
    return nll.value() / static_cast<double>(logits.rows());
}

}  // namespace

ProbeClassifier train_probe(const model::TransformerEncoder& model, int64_t layer,
                            const Dataset& train_set, const Dataset& dev_set,
                            const ProbeTrainConfig& config) {
    const int64_t resolved = model.resolve_layer(layer);
    if (train_set.label_kind() != LabelKind::kClassIds) {
        throw ConfigError("probe training needs class labels");
    }
    int64_t num_classes = 0;
    for (const Utterance& u : train_set.utterances)
        for (int64_t id : u.labels.class_ids) num_classes = std::max(num_classes, id + 1);
    num_classes = std::max<int64_t>(num_classes, 2);

    const FrameTable train_table = collect_activations(model, resolved, train_set, 0);
    const FrameTable dev_table = collect_activations(model, resolved, dev_set, 0);

    const int64_t d = model.config().model_dim;
    ProbeClassifier probe;
    probe.source_layer = resolved;
    probe.weights = Tensor({d, num_classes});
    probe.bias = Tensor({num_classes});

    // Adam state for W and b.
    Tensor mw({d, num_classes}), vw({d, num_classes});
    Tensor mb({num_classes}), vb({num_classes});
    const double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    int64_t t_step = 0;

    Rng rng = Rng::forked(config.seed, 2);
    const int64_t frames = train_table.features.rows();
    std::vector<int64_t> order(frames);
    std::iota(order.begin(), order.end(), 0);

    double best_dev = std::numeric_limits<double>::infinity();
    Tensor best_w = probe.weights;
    Tensor best_b = probe.bias;
    int64_t since_best = 0;

    for (int64_t epoch = 0; epoch < config.max_epochs; ++epoch) {
        for (size_t i = order.size(); i > 1; --i) {
            std::swap(order[i - 1], order[rng.uniform_int(static_cast<int64_t>(i))]);
        }
        for (int64_t start = 0; start < frames; start += config.batch_frames) {
            const int64_t end = std::min(frames, start + config.batch_frames);
            const int64_t bsz = end - start;
            Tensor gw({d, num_classes});
            Tensor gb({num_classes});
            for (int64_t bi = start; bi < end; ++bi) {
                const int64_t row = order[bi];
                // softmax over this frame's logits
                std::vector<double> lg(num_classes);
                for (int64_t j = 0; j < num_classes; ++j) lg[j] = probe.bias[j];
                for (int64_t k = 0; k < d; ++k) {
                    const double a = train_table.features(row, k);
                    for (int64_t j = 0; j < num_classes; ++j) lg[j] += a * probe.weights(k, j);
                }
                double m = lg[0];
                for (int64_t j = 1; j < num_classes; ++j) m = std::max(m, lg[j]);
                double z = 0.0;
                for (int64_t j = 0; j < num_classes; ++j) {
                    lg[j] = std::exp(lg[j] - m);
                    z += lg[j];
                }
                for (int64_t j = 0; j < num_classes; ++j) {
                    const double delta = lg[j] / z - (j == train_table.labels[row] ? 1.0 : 0.0);
                    gb[j] += delta;
                    for (int64_t k = 0; k < d; ++k) {
                        gw(k, j) += delta * train_table.features(row, k);
                    }
                }
            }
            const double inv = 1.0 / static_cast<double>(bsz);
            gw.scale_inplace(inv);
            gb.scale_inplace(inv);
            if (config.l2 > 0.0) gw.add_scaled(probe.weights, config.l2);

            ++t_step;
            const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t_step));
            const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t_step));
            for (int64_t i = 0; i < gw.numel(); ++i) {
                mw[i] = beta1 * mw[i] + (1.0 - beta1) * gw[i];
                vw[i] = beta2 * vw[i] + (1.0 - beta2) * gw[i] * gw[i];
                probe.weights[i] -= config.lr * (mw[i] / bc1) / (std::sqrt(vw[i] / bc2) + eps);
            }
            for (int64_t i = 0; i < gb.numel(); ++i) {
                mb[i] = beta1 * mb[i] + (1.0 - beta1) * gb[i];
                vb[i] = beta2 * vb[i] + (1.0 - beta2) * gb[i] * gb[i];
                probe.bias[i] -= config.lr * (mb[i] / bc1) / (std::sqrt(vb[i] / bc2) + eps);
            }
        }

        const double dev_loss = probe_dataset_loss(probe, dev_table);
        if (dev_loss < best_dev - 1e-6) {
            best_dev = dev_loss;
            best_w = probe.weights;
            best_b = probe.bias;
            since_best = 0;
        } else if (++since_best >= config.patience) {
            break;
        }
    }
    probe.weights = std::move(best_w);
    probe.bias = std::move(best_b);
    return probe;
}

double probe_error_on_dataset(const model::TransformerEncoder& model,
                              const ProbeClassifier& probe, const Dataset& dataset) {
    int64_t wrong = 0;
    int64_t frames = 0;
    for (const Utterance& u : dataset.utterances) {
        const Tensor acts = model.evaluate_layer(u.features.frames, probe.source_layer);
        const std::vector<int64_t> pred = probe.predict(acts);
        for (size_t i = 0; i < pred.size(); ++i) {
            if (pred[i] != u.labels.class_ids[i]) ++wrong;
        }
        frames += u.features.num_frames();
    }
    return static_cast<double>(wrong) / static_cast<double>(frames);
}

double frame_error_rate(const std::vector<int64_t>& predictions,
                        const std::vector<int64_t>& labels) {
    if (predictions.size() != labels.size()) {
        throw ConfigError("frame_error_rate: " + std::to_string(predictions.size()) +
                          " predictions vs " + std::to_string(labels.size()) + " labels");
    }
    if (predictions.empty()) throw ConfigError("frame_error_rate: empty sequences");
    int64_t wrong = 0;
    for (size_t i = 0; i < predictions.size(); ++i) {
        if (predictions[i] != labels[i]) ++wrong;
    }
    return static_cast<double>(wrong) / static_cast<double>(predictions.size());
}

std::string metrics_csv(const std::vector<EpochMetrics>& history,
                        const std::string& manifest_hash) {
    std::string out = "# manifest_hash=" + manifest_hash + "\n";
    out += "epoch,train_loss,train_error,dev_loss,dev_error\n";
    for (const EpochMetrics& m : history) {
        out += std::to_string(m.epoch) + "," + format_double(m.train_loss) + "," +
               format_double(m.train_error) + "," + format_double(m.dev_loss) + "," +
               format_double(m.dev_error) + "\n";
    }
    return out;
}

}  // namespace ctxmeter::train
