#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ctxmeter/tensor.hpp"

namespace ctxmeter::data {

// One utterance worth of input: T frames of K features.
struct FeatureSequence {
    Tensor frames;                 // T x K
    double frame_rate_hz = 50.0;   // 20 ms frames by default

    int64_t num_frames() const { return frames.rows(); }
    int64_t feature_dim() const { return frames.cols(); }
};

enum class LabelKind : uint32_t { kClassIds = 0, kRealTargets = 1 };

struct LabelSequence {
    LabelKind kind = LabelKind::kClassIds;
    std::vector<int64_t> class_ids;  // used when kind == kClassIds
    std::vector<double> targets;     // used when kind == kRealTargets

    size_t size() const {
        return kind == LabelKind::kClassIds ? class_ids.size() : targets.size();
    }
};

struct Utterance {
    FeatureSequence features;
    LabelSequence labels;
};

enum class TaskKind { kWindowSumMod, kWindowHash, kSmoothRegression };

// Frame-labeled task whose ground-truth context requirement is the window
// radius r: label t depends only on the symbols in [t - r, t + r] (clipped at
// utterance edges), by construction.
struct SyntheticTaskSpec {
    int64_t context_radius = 2;
    int64_t vocab_size = 10;
    int64_t num_classes = 5;
    int64_t feature_dim = 16;
    double embed_noise_std = 0.1;
    uint64_t seed = 1;
    TaskKind task_kind = TaskKind::kWindowSumMod;

    void validate() const;
    std::string to_json() const;
    static SyntheticTaskSpec from_json(const std::string& text);
};

struct Dataset {
    std::vector<Utterance> utterances;
    std::string split;
    double frame_rate_hz = 50.0;

    size_t size() const { return utterances.size(); }
    int64_t total_frames() const;
    LabelKind label_kind() const;
};

// Deterministic given the spec seed; utterance i is generated from its own
// child RNG stream. Feature values are quantized to f32 precision at
// generation time so that the on-disk format round-trips bit-exactly.
Dataset generate(const SyntheticTaskSpec& spec, int64_t num_utterances, int64_t min_len,
                 int64_t max_len);

// Same embedding/labeling path on caller-provided symbol sequences; the label
// functions are pure in the symbols, so this is the hook for checking them
// against hand-computed values.
Dataset generate_from_symbols(const SyntheticTaskSpec& spec,
                              const std::vector<std::vector<int64_t>>& symbol_sequences);

// Binary matrix container (magic "CTXM"). A JSON sidecar at <path>.json
// carries frame rate, split tag and the generating task spec when known.
void save_matrix(const Dataset& dataset, const std::string& path,
                 const SyntheticTaskSpec* spec = nullptr,
                 const std::string& manifest_hash = "");
Dataset load_matrix(const std::string& path);

// Deterministic split into [train, dev]: the last ceil(dev_fraction * N)
// utterances become dev.
std::pair<Dataset, Dataset> split_tail(const Dataset& dataset, double dev_fraction);

}  // namespace ctxmeter::data
