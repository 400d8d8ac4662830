#include "ctxmeter/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>

#include <json.hpp>

#include "ctxmeter/errors.hpp"
#include "ctxmeter/io_util.hpp"
#include "ctxmeter/rng.hpp"

namespace ctxmeter::data {

using nlohmann::json;

namespace {

constexpr char kMatrixMagic[4] = {'C', 'T', 'X', 'M'};
constexpr uint32_t kMatrixVersion = 1;

const char* task_name(TaskKind k) {
    switch (k) {
        case TaskKind::kWindowSumMod: return "window_sum_mod";
        case TaskKind::kWindowHash: return "window_hash";
        case TaskKind::kSmoothRegression: return "smooth_regression";
    }
    return "window_sum_mod";
}

TaskKind task_from_name(const std::string& s) {
    if (s == "window_sum_mod") return TaskKind::kWindowSumMod;
    if (s == "window_hash") return TaskKind::kWindowHash;
    if (s == "smooth_regression") return TaskKind::kSmoothRegression;
    throw ConfigError("unknown task kind '" + s + "'");
}

// Order-independent hash of the symbol window; FNV over symbol values.
int64_t window_hash_label(const std::vector<int64_t>& symbols, int64_t lo, int64_t hi,
                          int64_t num_classes) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (int64_t t = lo; t <= hi; ++t) {
        h ^= static_cast<uint64_t>(symbols[t] + 1);
        h *= 0x100000001b3ULL;
    }
    return static_cast<int64_t>(h % static_cast<uint64_t>(num_classes));
}

double quantize_f32(double v) { return static_cast<double>(static_cast<float>(v)); }

}  // namespace

void SyntheticTaskSpec::validate() const {
    if (context_radius < 0) throw ConfigError("context_radius must be >= 0");
    if (vocab_size < 1) throw ConfigError("vocab_size must be >= 1");
    if (feature_dim < 1) throw ConfigError("feature_dim must be >= 1");
    if (embed_noise_std < 0.0) throw ConfigError("embed_noise_std must be >= 0");
    if (task_kind != TaskKind::kSmoothRegression && num_classes < 2) {
        throw ConfigError("num_classes must be >= 2 for classification tasks");
    }
}

std::string SyntheticTaskSpec::to_json() const {
    json j;
    j["context_radius"] = context_radius;
    j["vocab_size"] = vocab_size;
    j["num_classes"] = num_classes;
    j["feature_dim"] = feature_dim;
    j["embed_noise_std"] = embed_noise_std;
    j["seed"] = seed;
    j["task_kind"] = task_name(task_kind);
    return j.dump();
}

SyntheticTaskSpec SyntheticTaskSpec::from_json(const std::string& text) {
    json j = json::parse(text);
    SyntheticTaskSpec s;
    s.context_radius = j.at("context_radius").get<int64_t>();
    s.vocab_size = j.at("vocab_size").get<int64_t>();
    s.num_classes = j.at("num_classes").get<int64_t>();
    s.feature_dim = j.at("feature_dim").get<int64_t>();
    s.embed_noise_std = j.at("embed_noise_std").get<double>();
    s.seed = j.at("seed").get<uint64_t>();
    s.task_kind = task_from_name(j.at("task_kind").get<std::string>());
    s.validate();
    return s;
}

int64_t Dataset::total_frames() const {
    int64_t n = 0;
    for (const Utterance& u : utterances) n += u.features.num_frames();
    return n;
}

LabelKind Dataset::label_kind() const {
    if (utterances.empty()) throw ConfigError("label_kind() on empty dataset");
    return utterances[0].labels.kind;
}

Dataset generate_from_symbols(const SyntheticTaskSpec& spec,
                              const std::vector<std::vector<int64_t>>& symbol_sequences) {
    spec.validate();
    if (symbol_sequences.empty()) throw ConfigError("no symbol sequences");

    // Fixed symbol embedding table, shared by every utterance of this spec.
    Rng table_rng = Rng::forked(spec.seed, 0);
    Tensor embed({spec.vocab_size, spec.feature_dim});
    for (int64_t i = 0; i < embed.numel(); ++i) embed[i] = quantize_f32(table_rng.normal());

    Dataset out;
    out.split = "train";
    out.utterances.reserve(symbol_sequences.size());

    for (size_t u = 0; u < symbol_sequences.size(); ++u) {
        const std::vector<int64_t>& symbols = symbol_sequences[u];
        const int64_t t_len = static_cast<int64_t>(symbols.size());
        if (t_len < 1) throw ConfigError("utterance " + std::to_string(u) + " has no symbols");
        for (int64_t s : symbols) {
            if (s < 0 || s >= spec.vocab_size) {
                throw ConfigError("symbol " + std::to_string(s) + " outside vocab of " +
                                  std::to_string(spec.vocab_size));
            }
        }
        Rng noise_rng = Rng::forked(spec.seed, 0x4e000000ULL + u);

        Utterance utt;
        utt.features.frame_rate_hz = out.frame_rate_hz;
        utt.features.frames = Tensor({t_len, spec.feature_dim});
        Tensor& frames = utt.features.frames;
        for (int64_t t = 0; t < t_len; ++t) {
            for (int64_t k = 0; k < spec.feature_dim; ++k) {
                frames(t, k) = quantize_f32(embed(symbols[t], k) +
                                            spec.embed_noise_std * noise_rng.normal());
            }
        }

        const int64_t r = spec.context_radius;
        switch (spec.task_kind) {
            case TaskKind::kWindowSumMod: {
                utt.labels.kind = LabelKind::kClassIds;
                utt.labels.class_ids.resize(t_len);
                for (int64_t t = 0; t < t_len; ++t) {
                    const int64_t lo = std::max<int64_t>(0, t - r);
                    const int64_t hi = std::min<int64_t>(t_len - 1, t + r);
                    int64_t sum = 0;
                    for (int64_t j = lo; j <= hi; ++j) sum += symbols[j];
                    utt.labels.class_ids[t] = sum % spec.num_classes;
                }
                break;
            }
            case TaskKind::kWindowHash: {
                utt.labels.kind = LabelKind::kClassIds;
                utt.labels.class_ids.resize(t_len);
                for (int64_t t = 0; t < t_len; ++t) {
                    const int64_t lo = std::max<int64_t>(0, t - r);
                    const int64_t hi = std::min<int64_t>(t_len - 1, t + r);
                    utt.labels.class_ids[t] =
                        window_hash_label(symbols, lo, hi, spec.num_classes);
                }
                break;
            }
            case TaskKind::kSmoothRegression: {
                // Channel 0 carries a clean scalar c_t = symbol / V; the label
                // is its moving average over the window.
                std::vector<double> scalar(t_len);
                for (int64_t t = 0; t < t_len; ++t) {
                    scalar[t] = quantize_f32(static_cast<double>(symbols[t]) /
                                             static_cast<double>(spec.vocab_size));
                    frames(t, 0) = scalar[t];
                }
                utt.labels.kind = LabelKind::kRealTargets;
                utt.labels.targets.resize(t_len);
                for (int64_t t = 0; t < t_len; ++t) {
                    const int64_t lo = std::max<int64_t>(0, t - r);
                    const int64_t hi = std::min<int64_t>(t_len - 1, t + r);
                    double acc = 0.0;
                    for (int64_t j = lo; j <= hi; ++j) acc += scalar[j];
                    utt.labels.targets[t] =
                        quantize_f32(acc / static_cast<double>(hi - lo + 1));
                }
                break;
            }
        }
        out.utterances.push_back(std::move(utt));
    }
    return out;
}

Dataset generate(const SyntheticTaskSpec& spec, int64_t num_utterances, int64_t min_len,
                 int64_t max_len) {
    spec.validate();
    const int64_t window = 2 * spec.context_radius + 1;
    if (min_len < window) {
        throw ConfigError("min_len " + std::to_string(min_len) + " shorter than task window " +
                          std::to_string(window));
    }
    if (max_len < min_len) throw ConfigError("max_len < min_len");
    if (num_utterances < 1) throw ConfigError("num_utterances must be >= 1");

    std::vector<std::vector<int64_t>> symbol_sequences;
    symbol_sequences.reserve(static_cast<size_t>(num_utterances));
    for (int64_t u = 0; u < num_utterances; ++u) {
        Rng rng = Rng::forked(spec.seed, static_cast<uint64_t>(u) + 1);
        const int64_t t_len = min_len + rng.uniform_int(max_len - min_len + 1);
        std::vector<int64_t> symbols(t_len);
        for (int64_t t = 0; t < t_len; ++t) symbols[t] = rng.uniform_int(spec.vocab_size);
        symbol_sequences.push_back(std::move(symbols));
    }
    return generate_from_symbols(spec, symbol_sequences);
}

void save_matrix(const Dataset& dataset, const std::string& path, const SyntheticTaskSpec* spec,
                 const std::string& manifest_hash) {
    ByteWriter w;
    w.write_magic(kMatrixMagic);
    w.write_u32(kMatrixVersion);
    w.write_u32(static_cast<uint32_t>(dataset.utterances.size()));
    for (const Utterance& u : dataset.utterances) {
        const Tensor& frames = u.features.frames;
        const uint32_t t_len = static_cast<uint32_t>(frames.rows());
        if (u.labels.size() != t_len) {
            throw ConfigError("utterance has " + std::to_string(u.labels.size()) +
                              " labels for " + std::to_string(t_len) + " frames");
        }
        w.write_u32(t_len);
        w.write_u32(static_cast<uint32_t>(frames.cols()));
        w.write_u32(static_cast<uint32_t>(u.labels.kind));
        for (int64_t i = 0; i < frames.numel(); ++i) {
            w.write_f32(static_cast<float>(frames[i]));
        }
        if (u.labels.kind == LabelKind::kClassIds) {
            for (int64_t id : u.labels.class_ids) w.write_u32(static_cast<uint32_t>(id));
        } else {
            for (double v : u.labels.targets) w.write_f32(static_cast<float>(v));
        }
    }
    atomic_write_file(path, w.buffer().data(), w.buffer().size());

    json sidecar;
    sidecar["format_version"] = kMatrixVersion;
    sidecar["frame_rate_hz"] = dataset.frame_rate_hz;
    sidecar["split"] = dataset.split;
    if (spec != nullptr) sidecar["task"] = json::parse(spec->to_json());
    if (!manifest_hash.empty()) sidecar["manifest_hash"] = manifest_hash;
    atomic_write_file(path + ".json", sidecar.dump(2) + "\n");
}

Dataset load_matrix(const std::string& path) {
    const std::vector<uint8_t> bytes = read_file(path);
    ByteReader r(bytes.data(), bytes.size(), path);
    r.expect_magic(kMatrixMagic);
    const size_t version_at = r.offset();
    const uint32_t version = r.read_u32();
    if (version != kMatrixVersion) {
        throw FormatError(path + ": unsupported matrix version " + std::to_string(version),
                          version_at);
    }
    const uint32_t count = r.read_u32();
    Dataset out;
    out.utterances.reserve(count);
    for (uint32_t i = 0; i < count; ++i) {
        const uint32_t t_len = r.read_u32();
        const uint32_t k_dim = r.read_u32();
        const size_t kind_at = r.offset();
        const uint32_t kind = r.read_u32();
        if (t_len == 0 || k_dim == 0) {
            throw FormatError(path + ": utterance " + std::to_string(i) + " has empty shape",
                              kind_at);
        }
        if (kind > 1) {
            throw FormatError(path + ": utterance " + std::to_string(i) +
                                  " has unknown label kind " + std::to_string(kind),
                              kind_at);
        }
        Utterance u;
        u.features.frames = Tensor({static_cast<int64_t>(t_len), static_cast<int64_t>(k_dim)});
        for (int64_t j = 0; j < u.features.frames.numel(); ++j) {
            u.features.frames[j] = static_cast<double>(r.read_f32());
        }
        u.labels.kind = static_cast<LabelKind>(kind);
        if (u.labels.kind == LabelKind::kClassIds) {
            u.labels.class_ids.resize(t_len);
            for (uint32_t t = 0; t < t_len; ++t) {
                u.labels.class_ids[t] = static_cast<int64_t>(r.read_u32());
            }
        } else {
            u.labels.targets.resize(t_len);
            for (uint32_t t = 0; t < t_len; ++t) {
                u.labels.targets[t] = static_cast<double>(r.read_f32());
            }
        }
        out.utterances.push_back(std::move(u));
    }
    r.expect_end();

    const std::string sidecar_path = path + ".json";
    if (std::filesystem::exists(sidecar_path)) {
        json sidecar = json::parse(read_text_file(sidecar_path));
        out.frame_rate_hz = sidecar.value("frame_rate_hz", 50.0);
        out.split = sidecar.value("split", "");
        for (Utterance& u : out.utterances) u.features.frame_rate_hz = out.frame_rate_hz;
    }
    return out;
}

std::pair<Dataset, Dataset> split_tail(const Dataset& dataset, double dev_fraction) {
    if (dev_fraction < 0.0 || dev_fraction >= 1.0) {
        throw ConfigError("dev_fraction must be in [0, 1)");
    }
    const size_t n = dataset.utterances.size();
    const size_t dev_n = static_cast<size_t>(std::ceil(dev_fraction * static_cast<double>(n)));
    Dataset train = dataset;
    Dataset dev = dataset;
    train.utterances.assign(dataset.utterances.begin(), dataset.utterances.end() - dev_n);
    dev.utterances.assign(dataset.utterances.end() - dev_n, dataset.utterances.end());
    train.split = "train";
    dev.split = "dev";
    return {std::move(train), std::move(dev)};
}

}  // namespace ctxmeter::data
