#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ctxmeter/sequence_function.hpp"
#include "ctxmeter/tape.hpp"
#include "ctxmeter/tensor.hpp"

namespace ctxmeter::model {

enum class HeadKind { kClassifier, kRegressor };
enum class PositionalMode { kRestart, kAbsoluteOffset };

struct ModelConfig {
    int64_t num_layers = 4;
    int64_t model_dim = 64;
    int64_t num_heads = 4;
    int64_t ffn_dim = 256;
    int64_t input_dim = 16;
    HeadKind head = HeadKind::kClassifier;
    int64_t head_out = 5;  // classes for classifier, output dim for regressor
    PositionalMode positional_mode = PositionalMode::kRestart;
    uint64_t seed = 0;

    void validate() const;
    std::string to_json() const;
    static ModelConfig from_json(const std::string& text);
    bool operator==(const ModelConfig&) const = default;
};

// Hidden vectors per exposed layer. Index 0 is the projected-and-positioned
// encoder input; index num_layers is the final, layer-normed output the head
// reads. All entries are T x model_dim.
struct LayerActivations {
    std::vector<Tensor> per_layer;
};

struct GraphOutputs {
    std::vector<autodiff::Var> layers;  // num_layers + 1 entries
    autodiff::Var head_out;
    std::vector<std::pair<std::string, autodiff::Var>> params;  // trainable mode only
};

// Bidirectional transformer encoder (pre-norm blocks, sinusoidal positions,
// full self-attention) with a frame-level linear head. The final exposed
// layer is already layer-normed, so the head is a pure affine map on it.
class TransformerEncoder : public SequenceFunction {
public:
    explicit TransformerEncoder(ModelConfig config);  // random init from config.seed

    const ModelConfig& config() const { return config_; }

    // Records the forward pass on the tape. With trainable=true, weights are
    // inserted as gradient-carrying leaves and listed in GraphOutputs::params.
    GraphOutputs build_graph(autodiff::Tape& tape, autodiff::Var input, int64_t start_position,
                             bool with_head, bool trainable) const;

    // SequenceFunction interface (frozen weights, exposed layers only).
    int64_t input_dim() const override { return config_.input_dim; }
    int64_t num_outputs() const override { return config_.num_layers + 1; }
    std::vector<autodiff::Var> build(autodiff::Tape& tape, autodiff::Var input,
                                     int64_t start_position) const override;

    LayerActivations forward(const Tensor& features, int64_t start_position = 0) const;

    // Frame-level predictions. Classifier ties break to the lowest class id.
    std::vector<int64_t> predict_classes(const Tensor& features,
                                         int64_t start_position = 0) const;
    Tensor predict_values(const Tensor& features, int64_t start_position = 0) const;
    Tensor head_logits(const Tensor& features, int64_t start_position = 0) const;

    // Parameter access for optimizers and checkpointing. Order is fixed.
    size_t param_count() const { return params_.size(); }
    const std::string& param_name(size_t i) const { return params_[i].first; }
    const Tensor& param(size_t i) const { return params_[i].second; }
    Tensor& mutable_param(size_t i) { return params_[i].second; }

    uint64_t weight_checksum() const;

    void save(const std::string& path, const std::string& manifest_hash = "") const;
    static TransformerEncoder load(const std::string& path);

private:
    void init_params();

    ModelConfig config_;
    std::vector<std::pair<std::string, Tensor>> params_;
};

std::vector<int64_t> argmax_rows(const Tensor& logits);

}  // namespace ctxmeter::model
