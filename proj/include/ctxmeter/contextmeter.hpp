#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ctxmeter/data.hpp"
#include "ctxmeter/sequence_function.hpp"
#include "ctxmeter/tensor.hpp"
#include "ctxmeter/train.hpp"

namespace ctxmeter::meter {

// ---- truncation ------------------------------------------------------------

enum class TruncationDistance { kL2PerFrame, kErrorFlip };

struct TruncationConfig {
    int64_t half_window = 0;  // window is 2W+1 frames, clipped at edges
    TruncationDistance distance = TruncationDistance::kL2PerFrame;
    int64_t layer = -1;
    int64_t frame_stride = 1;
    bool include_edge_frames = true;  // frames whose window is clipped
    int threads = 0;
};

struct TruncationStats {
    int64_t half_window = 0;
    int64_t frames_evaluated = 0;
    double mean_l2 = 0.0;
    // Filled when a probe is supplied; NaN otherwise.
    double probe_error_full = 0.0;
    double probe_error_truncated = 0.0;
    double error_gap = 0.0;  // truncated minus full
};

// Distance between full-input and truncated-input outputs at each selected
// frame, averaged over the dataset. The truncated window is re-encoded from
// scratch (no state leaks in), so what is measured is exactly how much the
// removed context mattered. A probe is required for the error-flip distance.
TruncationStats measure_truncation(const SequenceFunction& fn, const data::Dataset& dataset,
                                   const TruncationConfig& config,
                                   const train::ProbeClassifier* probe = nullptr);

std::vector<TruncationStats> truncation_sweep(const SequenceFunction& fn,
                                              const data::Dataset& dataset,
                                              TruncationConfig config,
                                              const std::vector<int64_t>& half_windows,
                                              const train::ProbeClassifier* probe = nullptr);

// Smallest swept W whose mean l2 distance falls below `fraction` of the W=0
// distance; the sweep must include W=0. Returns -1 when no W qualifies.
int64_t sufficient_half_window(const std::vector<TruncationStats>& sweep,
                               double fraction = 0.05);

// ---- Jacobian influence ------------------------------------------------------

struct InfluenceOptions {
    int64_t frame_stride = 1;  // sample every k-th target frame
    int threads = 0;
};

// values(t, tau) is the Frobenius norm of d h_t / d x_tau; rows are only
// filled for sampled target frames.
struct InfluenceMatrix {
    Tensor values;  // T x T
    int64_t layer = 0;
    std::vector<int64_t> sampled_frames;
};

// One retained forward pass, then output_dim backward passes per sampled
// frame per requested layer. Backward passes run in parallel over (layer,
// frame) slots, so results do not depend on scheduling.
std::vector<InfluenceMatrix> influence_matrices(const SequenceFunction& fn, const Tensor& frames,
                                                const std::vector<int64_t>& layers,
                                                const InfluenceOptions& options = {});

InfluenceMatrix influence_matrix(const SequenceFunction& fn, const Tensor& frames, int64_t layer,
                                 const InfluenceOptions& options = {});

// ---- relative influence curve ------------------------------------------------

struct RelativeInfluenceCurve {
    int64_t half_window = 0;
    std::vector<double> raw;         // indexed by sigma + half_window
    std::vector<double> normalized;  // empty when total mass is zero
    std::vector<int64_t> pair_counts;
    bool count_averaged = false;

    bool is_normalized() const { return !normalized.empty(); }
    bool has_empty_shifts() const;
    double at(int64_t sigma) const;       // normalized
    double raw_at(int64_t sigma) const;
    int64_t count_at(int64_t sigma) const;
};

// Aggregates influence at each time shift sigma in [-W, W] over all valid
// (t, t + sigma) pairs, then normalizes the curve to sum to 1. The default
// aggregation is the raw sum over pairs; count_average divides each shift by
// its pair count first (mean influence per pair) before normalizing.
RelativeInfluenceCurve relative_influence(const std::vector<InfluenceMatrix>& matrices,
                                          int64_t half_window, bool count_average = false);

// 1 - S(0) of a normalized curve: 0 when only the center frame matters.
double contextualization(const RelativeInfluenceCurve& curve);

// ---- layerwise report ---------------------------------------------------------

struct LayerReport {
    int64_t layer = 0;
    RelativeInfluenceCurve curve;
    double contextualization = 0.0;
};

struct ContextReport {
    std::vector<LayerReport> layers;
    int64_t half_window = 0;
    int64_t frame_stride = 1;
};

ContextReport layerwise_report(const SequenceFunction& fn, const data::Dataset& dataset,
                               int64_t half_window, const InfluenceOptions& options = {});

// ---- CSV emission --------------------------------------------------------------

std::string curve_csv_header();
void append_curve_csv(std::string& out, const std::string& model_id, int64_t layer,
                      double frame_rate_hz, const RelativeInfluenceCurve& curve);
std::string summary_csv(const std::string& model_id, const ContextReport& report);
std::string truncation_csv(const std::string& model_id, int64_t layer,
                           const std::vector<TruncationStats>& sweep,
                           const std::string& manifest_hash);

}  // namespace ctxmeter::meter
