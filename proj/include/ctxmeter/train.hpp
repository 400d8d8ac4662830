#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "ctxmeter/data.hpp"
#include "ctxmeter/model.hpp"
#include "ctxmeter/tensor.hpp"

namespace ctxmeter::train {

enum class OptimizerKind { kSgd, kAdam };
enum class LrSchedule { kConstant, kCosine };

struct TrainConfig {
    OptimizerKind optimizer = OptimizerKind::kAdam;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    LrSchedule schedule = LrSchedule::kConstant;
    int64_t batch_utterances = 8;
    int64_t epochs = 20;
    uint64_t seed = 0;
    double grad_clip = 1.0;  // global norm; <= 0 disables

    std::string to_json() const;
    static TrainConfig from_json(const std::string& text);
};

struct EpochMetrics {
    int64_t epoch = 0;
    double train_loss = 0.0;
    double train_error = 0.0;  // frame error rate (classifier) or MSE (regressor)
    double dev_loss = 0.0;
    double dev_error = 0.0;
};

struct TrainResult {
    std::unique_ptr<model::TransformerEncoder> model;
    std::vector<EpochMetrics> history;
};

// Supervised frame-level training. Throws DivergenceError (with the epoch
// index) if the loss goes non-finite.
TrainResult train_supervised(const model::ModelConfig& model_config,
                             const data::Dataset& train_set, const data::Dataset& dev_set,
                             const TrainConfig& config);

// Multinomial logistic regression on frozen layer activations. Kept separate
// from the autodiff stack on purpose: the gradient is analytic, and the probe
// path exercising different code than the model path makes the probe-vs-head
// cross-checks meaningful.
struct ProbeClassifier {
    Tensor weights;  // D x C
    Tensor bias;     // C
    int64_t source_layer = 0;

    int64_t num_classes() const { return bias.numel(); }
    std::vector<int64_t> predict(const Tensor& activations) const;  // T x D -> T ids
    Tensor logits(const Tensor& activations) const;

    void save(const std::string& path, const std::string& manifest_hash = "") const;
    static ProbeClassifier load(const std::string& path);
};

struct ProbeTrainConfig {
    double lr = 5e-2;
    int64_t batch_frames = 512;
    int64_t max_epochs = 200;
    int64_t patience = 10;  // early stop when dev loss fails to improve
    double l2 = 0.0;        // optional ridge penalty; off by default
    uint64_t seed = 0;
};

// Trains a probe on the model's layer activations. Model weights are never
// touched (the caller can verify via weight_checksum()).
ProbeClassifier train_probe(const model::TransformerEncoder& model, int64_t layer,
                            const data::Dataset& train_set, const data::Dataset& dev_set,
                            const ProbeTrainConfig& config);

// Probe error rate over a dataset, reading activations at probe.source_layer.
double probe_error_on_dataset(const model::TransformerEncoder& model,
                              const ProbeClassifier& probe, const data::Dataset& dataset);

// Fraction of mismatched frames; lengths must agree.
double frame_error_rate(const std::vector<int64_t>& predictions,
                        const std::vector<int64_t>& labels);

std::string metrics_csv(const std::vector<EpochMetrics>& history,
                        const std::string& manifest_hash);

}  // namespace ctxmeter::train
