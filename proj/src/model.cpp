#include "ctxmeter/model.hpp"

#include <cmath>
#include <stdexcept>
#include <unordered_map>

#include <json.hpp>

#include "ctxmeter/errors.hpp"
#include "ctxmeter/io_util.hpp"
#include "ctxmeter/rng.hpp"

namespace ctxmeter {

std::vector<Tensor> SequenceFunction::evaluate(const Tensor& frames,
                                               int64_t start_position) const {
    autodiff::Tape tape;
    autodiff::Var input = tape.constant(frames);
    std::vector<autodiff::Var> outs = build(tape, input, start_position);
    std::vector<Tensor> values;
    values.reserve(outs.size());
    for (autodiff::Var v : outs) values.push_back(v.value());
    return values;
}

Tensor SequenceFunction::evaluate_layer(const Tensor& frames, int64_t layer,
                                        int64_t start_position) const {
    autodiff::Tape tape;
    autodiff::Var input = tape.constant(frames);
    std::vector<autodiff::Var> outs = build(tape, input, start_position);
    return outs[resolve_layer(layer)].value();
}

int64_t SequenceFunction::resolve_layer(int64_t layer) const {
    const int64_t n = num_outputs();
    const int64_t resolved = layer < 0 ? n + layer : layer;
    if (resolved < 0 || resolved >= n) {
        throw ConfigError("layer " + std::to_string(layer) + " out of range, function exposes " +
                          std::to_string(n) + " outputs");
    }
    return resolved;
}

}  // namespace ctxmeter

namespace ctxmeter::model {

using autodiff::Var;
using nlohmann::json;

namespace {

constexpr char kCheckpointMagic[4] = {'C', 'T', 'X', 'C'};
constexpr uint32_t kCheckpointVersion = 1;

const char* head_name(HeadKind k) {
    return k == HeadKind::kClassifier ? "classifier" : "regressor";
}

HeadKind head_from_name(const std::string& s) {
    if (s == "classifier") return HeadKind::kClassifier;
    if (s == "regressor") return HeadKind::kRegressor;
    throw ConfigError("unknown head kind '" + s + "'");
}

const char* positional_name(PositionalMode m) {
    return m == PositionalMode::kRestart ? "restart" : "absolute_offset";
}

PositionalMode positional_from_name(const std::string& s) {
    if (s == "restart") return PositionalMode::kRestart;
    if (s == "absolute_offset") return PositionalMode::kAbsoluteOffset;
    throw ConfigError("unknown positional mode '" + s + "'");
}

}  // namespace

void ModelConfig::validate() const {
    if (num_layers < 1) throw ConfigError("num_layers must be >= 1");
    if (model_dim < 1 || num_heads < 1 || ffn_dim < 1 || input_dim < 1 || head_out < 1) {
        throw ConfigError("model dimensions must be positive");
    }
    if (model_dim % num_heads != 0) {
        throw ConfigError("model_dim " + std::to_string(model_dim) +
                          " not divisible by num_heads " + std::to_string(num_heads));
    }
}

std::string ModelConfig::to_json() const {
    json j;
    j["num_layers"] = num_layers;
    j["model_dim"] = model_dim;
    j["num_heads"] = num_heads;
    j["ffn_dim"] = ffn_dim;
    j["input_dim"] = input_dim;
    j["head"] = head_name(head);
    j["head_out"] = head_out;
    j["positional_mode"] = positional_name(positional_mode);
    j["seed"] = seed;
    return j.dump();
}

ModelConfig ModelConfig::from_json(const std::string& text) {
    json j = json::parse(text);
    ModelConfig c;
    c.num_layers = j.at("num_layers").get<int64_t>();
    c.model_dim = j.at("model_dim").get<int64_t>();
    c.num_heads = j.at("num_heads").get<int64_t>();
    c.ffn_dim = j.at("ffn_dim").get<int64_t>();
    c.input_dim = j.at("input_dim").get<int64_t>();
    c.head = head_from_name(j.at("head").get<std::string>());
    c.head_out = j.at("head_out").get<int64_t>();
    c.positional_mode = positional_from_name(j.at("positional_mode").get<std::string>());
    c.seed = j.at("seed").get<uint64_t>();
    c.validate();
    return c;
}

TransformerEncoder::TransformerEncoder(ModelConfig config) : config_(std::move(config)) {
    config_.validate();
    init_params();
}

void TransformerEncoder::init_params() {
    Rng rng(config_.seed);

    auto xavier = [&rng](int64_t fan_in, int64_t fan_out) {
        Tensor w({fan_in, fan_out});
        const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        for (int64_t i = 0; i < w.numel(); ++i) w[i] = rng.uniform(-bound, bound);
        return w;
    };
    auto push = [this](const std::string& name, Tensor t) {
        params_.emplace_back(name, std::move(t));
    };

    const int64_t d = config_.model_dim;
    push("input_proj.weight", xavier(config_.input_dim, d));
    push("input_proj.bias", Tensor({d}));
    for (int64_t l = 0; l < config_.num_layers; ++l) {
        const std::string p = "layers." + std::to_string(l) + ".";
        push(p + "ln1.gamma", Tensor::full({d}, 1.0));
        push(p + "ln1.beta", Tensor({d}));
        push(p + "attn.wq", xavier(d, d));
        push(p + "attn.bq", Tensor({d}));
        push(p + "attn.wk", xavier(d, d));
        push(p + "attn.bk", Tensor({d}));
        push(p + "attn.wv", xavier(d, d));
        push(p + "attn.bv", Tensor({d}));
        push(p + "attn.wo", xavier(d, d));
        push(p + "attn.bo", Tensor({d}));
        push(p + "ln2.gamma", Tensor::full({d}, 1.0));
        push(p + "ln2.beta", Tensor({d}));
        push(p + "ffn.w1", xavier(d, config_.ffn_dim));
        push(p + "ffn.b1", Tensor({config_.ffn_dim}));
        push(p + "ffn.w2", xavier(config_.ffn_dim, d));
        push(p + "ffn.b2", Tensor({d}));
    }
    push("final_norm.gamma", Tensor::full({d}, 1.0));
    push("final_norm.beta", Tensor({d}));
    push("head.weight", xavier(d, config_.head_out));
    push("head.bias", Tensor({config_.head_out}));
}

GraphOutputs TransformerEncoder::build_graph(autodiff::Tape& tape, Var input,
                                             int64_t start_position, bool with_head,
                                             bool trainable) const {
    const Tensor& x = input.value();
    if (x.ndim() != 2 || x.cols() != config_.input_dim) {
        throw ConfigError("input features " + x.shape_str() + " do not match input_dim " +
                          std::to_string(config_.input_dim));
    }

    // Insert every weight once, in parameter order.
    GraphOutputs out;
    std::unordered_map<std::string, Var> vars;
    vars.reserve(params_.size());
    for (const auto& [name, tensor] : params_) {
        Var v = tape.leaf(tensor, trainable);
        vars.emplace(name, v);
        if (trainable) out.params.emplace_back(name, v);
    }
    auto p = [&vars](const std::string& name) { return vars.at(name); };

    const int64_t offset =
        config_.positional_mode == PositionalMode::kAbsoluteOffset ? start_position : 0;

    Var h = autodiff::add_rowvec(autodiff::matmul(input, p("input_proj.weight")),
                                 p("input_proj.bias"));
    h = autodiff::add_position_encoding(h, offset);
    out.layers.push_back(h);

    const int64_t head_dim = config_.model_dim / config_.num_heads;
    const double att_scale = 1.0 / std::sqrt(static_cast<double>(head_dim));

    for (int64_t l = 0; l < config_.num_layers; ++l) {
        const std::string pre = "layers." + std::to_string(l) + ".";

        Var a = autodiff::layer_norm_rows(h, p(pre + "ln1.gamma"), p(pre + "ln1.beta"));
        Var q = autodiff::add_rowvec(autodiff::matmul(a, p(pre + "attn.wq")), p(pre + "attn.bq"));
        Var k = autodiff::add_rowvec(autodiff::matmul(a, p(pre + "attn.wk")), p(pre + "attn.bk"));
        Var v = autodiff::add_rowvec(autodiff::matmul(a, p(pre + "attn.wv")), p(pre + "attn.bv"));

        std::vector<Var> heads;
        heads.reserve(config_.num_heads);
        for (int64_t hd = 0; hd < config_.num_heads; ++hd) {
            const int64_t c0 = hd * head_dim;
            const int64_t c1 = c0 + head_dim;
            Var qh = autodiff::slice_cols(q, c0, c1);
            Var kh = autodiff::slice_cols(k, c0, c1);
            Var vh = autodiff::slice_cols(v, c0, c1);
            Var scores = autodiff::scale(autodiff::matmul(qh, autodiff::transpose(kh)),
                                         att_scale);
            Var attn = autodiff::softmax_rows(scores);
            heads.push_back(autodiff::matmul(attn, vh));
        }
        Var mixed = config_.num_heads == 1 ? heads[0] : autodiff::concat_cols(heads);
        Var attn_out = autodiff::add_rowvec(autodiff::matmul(mixed, p(pre + "attn.wo")),
                                            p(pre + "attn.bo"));
        h = autodiff::add(h, attn_out);

        Var b = autodiff::layer_norm_rows(h, p(pre + "ln2.gamma"), p(pre + "ln2.beta"));
        Var f = autodiff::gelu(
            autodiff::add_rowvec(autodiff::matmul(b, p(pre + "ffn.w1")), p(pre + "ffn.b1")));
        f = autodiff::add_rowvec(autodiff::matmul(f, p(pre + "ffn.w2")), p(pre + "ffn.b2"));
        h = autodiff::add(h, f);

        if (l + 1 == config_.num_layers) {
            // The deepest exposed layer is the normed stream the head reads.
            out.layers.push_back(autodiff::layer_norm_rows(h, p("final_norm.gamma"),
                                                           p("final_norm.beta")));
        } else {
            out.layers.push_back(h);
        }
    }

    if (with_head) {
        out.head_out = autodiff::add_rowvec(autodiff::matmul(out.layers.back(), p("head.weight")),
                                            p("head.bias"));
    }
    return out;
}

std::vector<Var> TransformerEncoder::build(autodiff::Tape& tape, Var input,
                                           int64_t start_position) const {
    return build_graph(tape, input, start_position, /*with_head=*/false, /*trainable=*/false)
        .layers;
}

LayerActivations TransformerEncoder::forward(const Tensor& features,
                                             int64_t start_position) const {
    LayerActivations acts;
    acts.per_layer = evaluate(features, start_position);
    return acts;
}

Tensor TransformerEncoder::head_logits(const Tensor& features, int64_t start_position) const {
    autodiff::Tape tape;
    Var input = tape.constant(features);
    GraphOutputs out = build_graph(tape, input, start_position, /*with_head=*/true,
                                   /*trainable=*/false);
    return out.head_out.value();
}

std::vector<int64_t> argmax_rows(const Tensor& logits) {
    std::vector<int64_t> result(logits.rows());
    for (int64_t r = 0; r < logits.rows(); ++r) {
        int64_t best = 0;
        for (int64_t c = 1; c < logits.cols(); ++c) {
            if (logits(r, c) > logits(r, best)) best = c;  // ties keep the lowest id
        }
        result[r] = best;
    }
    return result;
}

std::vector<int64_t> TransformerEncoder::predict_classes(const Tensor& features,
                                                         int64_t start_position) const {
    if (config_.head != HeadKind::kClassifier) {
        throw ConfigError("predict_classes on a model with a " +
                          std::string(head_name(config_.head)) + " head");
    }
    return argmax_rows(head_logits(features, start_position));
}

Tensor TransformerEncoder::predict_values(const Tensor& features, int64_t start_position) const {
    if (config_.head != HeadKind::kRegressor) {
        throw ConfigError("predict_values on a model with a " +
                          std::string(head_name(config_.head)) + " head");
    }
    return head_logits(features, start_position);
}

uint64_t TransformerEncoder::weight_checksum() const {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& [name, tensor] : params_) {
        h ^= fnv1a64(name);
        h *= 0x100000001b3ULL;
        h ^= fnv1a64(tensor.data(), sizeof(double) * static_cast<size_t>(tensor.numel()));
        h *= 0x100000001b3ULL;
    }
    return h;
}

void TransformerEncoder::save(const std::string& path, const std::string& manifest_hash) const {
    json meta;
    meta["config"] = json::parse(config_.to_json());
    if (!manifest_hash.empty()) meta["manifest_hash"] = manifest_hash;
    const std::string meta_text = meta.dump();

    ByteWriter w;
    w.write_magic(kCheckpointMagic);
    w.write_u32(kCheckpointVersion);
    w.write_u64(meta_text.size());
    w.write_bytes(meta_text.data(), meta_text.size());
    w.write_u32(static_cast<uint32_t>(params_.size()));
    for (const auto& [name, tensor] : params_) {
        w.write_u32(static_cast<uint32_t>(name.size()));
        w.write_bytes(name.data(), name.size());
        w.write_u32(static_cast<uint32_t>(tensor.ndim()));
        for (int64_t d : tensor.shape()) w.write_u64(static_cast<uint64_t>(d));
        w.write_bytes(tensor.data(), sizeof(double) * static_cast<size_t>(tensor.numel()));
    }
    atomic_write_file(path, w.buffer().data(), w.buffer().size());
}

TransformerEncoder TransformerEncoder::load(const std::string& path) {
    const std::vector<uint8_t> bytes = read_file(path);
    ByteReader r(bytes.data(), bytes.size(), path);
    r.expect_magic(kCheckpointMagic);
    const size_t version_at = r.offset();
    const uint32_t version = r.read_u32();
    if (version != kCheckpointVersion) {
        throw FormatError(path + ": unsupported checkpoint version " + std::to_string(version),
                          version_at);
    }
    const uint64_t meta_len = r.read_u64();
    const std::string meta_text = r.read_bytes(meta_len);
    json meta = json::parse(meta_text);
    ModelConfig config = ModelConfig::from_json(meta.at("config").dump());

    TransformerEncoder model(config);
    const uint32_t count = r.read_u32();
    if (count != model.params_.size()) {
        throw FormatError(path + ": checkpoint has " + std::to_string(count) +
                              " tensors, config implies " + std::to_string(model.params_.size()),
                          r.offset());
    }
    for (uint32_t i = 0; i < count; ++i) {
        const uint32_t name_len = r.read_u32();
        const std::string name = r.read_bytes(name_len);
        if (name != model.params_[i].first) {
            throw FormatError(path + ": tensor '" + name + "' where '" +
                                  model.params_[i].first + "' expected",
                              r.offset());
        }
        const uint32_t ndim = r.read_u32();
        std::vector<int64_t> shape(ndim);
        for (uint32_t d = 0; d < ndim; ++d) shape[d] = static_cast<int64_t>(r.read_u64());
        Tensor& target = model.params_[i].second;
        if (shape != target.shape()) {
            throw FormatError(path + ": tensor '" + name + "' has unexpected shape", r.offset());
        }
        for (int64_t j = 0; j < target.numel(); ++j) target[j] = r.read_f64();
    }
    r.expect_end();
    return model;
}

}  // namespace ctxmeter::model
