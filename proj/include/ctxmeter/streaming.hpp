#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ctxmeter/data.hpp"
#include "ctxmeter/sequence_function.hpp"
#include "ctxmeter/tensor.hpp"
#include "ctxmeter/train.hpp"

namespace ctxmeter::streaming {

// Sentinel for "no limit" on history or lookahead.
constexpr int64_t kUnlimited = -1;

struct StreamingConfig {
    int64_t history = kUnlimited;    // frames before t, kUnlimited or >= 0
    int64_t lookahead = kUnlimited;  // frames after t, kUnlimited or >= 0
    int64_t stride = 1;              // 1 = one window per frame; > 1 = chunked
    int64_t layer = -1;
    int threads = 0;

    void validate() const;
    // Latency in seconds implied by the lookahead.
    double latency_seconds(double frame_rate_hz) const;
};

struct StreamingResult {
    Tensor representations;  // T x D at the target layer
    double mean_l2_deviation = 0.0;  // vs full-context representations
    double probe_error = 0.0;        // NaN when no probe given
    int64_t frames = 0;
};

// Runs the encoder as a sliding window: for each frame t the window
// [t - H, t + L] (clipped to the utterance) is re-encoded from scratch and
// the hidden vector at t's position inside the window is kept. No state is
// carried between windows; bidirectional attention admits no incremental
// cache. With stride > 1, one window is built per chunk of `stride` frames
// and every frame in the chunk reads its own position from that window (a
// cheaper approximation, flagged by the config).
StreamingResult stream_extract(const SequenceFunction& fn,
                               const data::FeatureSequence& utterance,
                               const StreamingConfig& config,
                               const train::ProbeClassifier* probe = nullptr,
                               const data::LabelSequence* labels = nullptr);

struct SweepRow {
    int64_t history = kUnlimited;
    int64_t lookahead = kUnlimited;
    double history_seconds = 0.0;
    double lookahead_seconds = 0.0;
    double probe_error = 0.0;
    double mean_l2_deviation = 0.0;
    int64_t frames_evaluated = 0;
};

// Grid of history x lookahead settings evaluated with a frozen probe that was
// trained on full-context activations. The probe is never retrained.
std::vector<SweepRow> sweep(const SequenceFunction& fn, const train::ProbeClassifier& probe,
                            const data::Dataset& dataset,
                            const std::vector<int64_t>& histories,
                            const std::vector<int64_t>& lookaheads, int64_t layer,
                            int64_t stride = 1, int threads = 0);

std::string sweep_csv(const std::vector<SweepRow>& rows, const std::string& manifest_hash);

}  // namespace ctxmeter::streaming
