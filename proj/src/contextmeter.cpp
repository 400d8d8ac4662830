#include "ctxmeter/contextmeter.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "ctxmeter/errors.hpp"
#include "ctxmeter/io_util.hpp"
#include "ctxmeter/parallel.hpp"

namespace ctxmeter::meter {

using data::Dataset;
using data::Utterance;

namespace {

std::vector<int64_t> sampled_frames(int64_t num_frames, int64_t stride, int64_t half_window,
                                    bool include_edges) {
    std::vector<int64_t> frames;
    for (int64_t t = 0; t < num_frames; t += stride) {
        if (!include_edges && (t - half_window < 0 || t + half_window >= num_frames)) continue;
        frames.push_back(t);
    }
    return frames;
}

}  // namespace

// ---- truncation ------------------------------------------------------------

TruncationStats measure_truncation(const SequenceFunction& fn, const Dataset& dataset,
                                   const TruncationConfig& config,
                                   const train::ProbeClassifier* probe) {
    if (config.half_window < 0) throw ConfigError("half_window must be >= 0");
    if (config.frame_stride < 1) throw ConfigError("frame_stride must be >= 1");
    if (config.distance == TruncationDistance::kErrorFlip && probe == nullptr) {
        throw ConfigError("error_flip distance requires a probe");
    }
    if (probe != nullptr && dataset.label_kind() != data::LabelKind::kClassIds) {
        throw ConfigError("probe-based truncation distance needs class labels");
    }
    const int64_t layer = fn.resolve_layer(config.layer);
    const int64_t w = config.half_window;

    struct UttResult {
        CompensatedSum l2;
        int64_t frames = 0;
        int64_t full_wrong = 0;
        int64_t trunc_wrong = 0;
    };
    std::vector<UttResult> results(dataset.utterances.size());

    parallel_for(static_cast<int64_t>(dataset.utterances.size()), config.threads,
                 [&](int64_t ui) {
        const Utterance& utt = dataset.utterances[ui];
        const Tensor& frames = utt.features.frames;
        const int64_t t_len = frames.rows();
        const Tensor full = fn.evaluate_layer(frames, layer, 0);

        UttResult& res = results[ui];
        for (int64_t t :
             sampled_frames(t_len, config.frame_stride, w, config.include_edge_frames)) {
            const int64_t lo = std::max<int64_t>(0, t - w);
            const int64_t hi = std::min<int64_t>(t_len - 1, t + w);
            const Tensor window = slice_rows_copy(frames, lo, hi + 1);
            const Tensor truncated = fn.evaluate_layer(window, layer, lo);
            const int64_t local = t - lo;

            const Tensor full_vec = row_copy(full, t);
            const Tensor trunc_vec = row_copy(truncated, local);
            res.l2.add(l2_distance(full_vec, trunc_vec));
            ++res.frames;

            if (probe != nullptr) {
                const int64_t label = utt.labels.class_ids[t];
                const Tensor full_row = Tensor({1, full.cols()}, full_vec.vec());
                const Tensor trunc_row = Tensor({1, full.cols()}, trunc_vec.vec());
                if (probe->predict(full_row)[0] != label) ++res.full_wrong;
                if (probe->predict(trunc_row)[0] != label) ++res.trunc_wrong;
            }
        }
    });

    TruncationStats stats;
    stats.half_window = w;
    CompensatedSum total_l2;
    int64_t frames = 0, full_wrong = 0, trunc_wrong = 0;
    for (const UttResult& r : results) {
        total_l2.add(r.l2.value());
        frames += r.frames;
        full_wrong += r.full_wrong;
        trunc_wrong += r.trunc_wrong;
    }
    if (frames == 0) throw ConfigError("truncation measurement selected no frames");
    stats.frames_evaluated = frames;
    stats.mean_l2 = total_l2.value() / static_cast<double>(frames);
    if (probe != nullptr) {
        stats.probe_error_full = static_cast<double>(full_wrong) / static_cast<double>(frames);
        stats.probe_error_truncated =
            static_cast<double>(trunc_wrong) / static_cast<double>(frames);
        stats.error_gap = stats.probe_error_truncated - stats.probe_error_full;
    } else {
        stats.probe_error_full = std::numeric_limits<double>::quiet_NaN();
        stats.probe_error_truncated = std::numeric_limits<double>::quiet_NaN();
        stats.error_gap = std::numeric_limits<double>::quiet_NaN();
    }
    return stats;
}

std::vector<TruncationStats> truncation_sweep(const SequenceFunction& fn, const Dataset& dataset,
                                              TruncationConfig config,
                                              const std::vector<int64_t>& half_windows,
                                              const train::ProbeClassifier* probe) {
    std::vector<TruncationStats> sweep;
    sweep.reserve(half_windows.size());
    for (int64_t w : half_windows) {
        config.half_window = w;
        sweep.push_back(measure_truncation(fn, dataset, config, probe));
    }
    return sweep;
}

int64_t sufficient_half_window(const std::vector<TruncationStats>& sweep, double fraction) {
    double base = std::numeric_limits<double>::quiet_NaN();
    for (const TruncationStats& s : sweep) {
        if (s.half_window == 0) base = s.mean_l2;
    }
    if (!std::isfinite(base)) {
        throw ConfigError("sufficient_half_window needs a W=0 entry in the sweep");
    }
    int64_t best = -1;
    for (const TruncationStats& s : sweep) {
        if (s.mean_l2 <= fraction * base && (best == -1 || s.half_window < best)) {
            best = s.half_window;
        }
    }
    return best;
}

// ---- Jacobian influence ------------------------------------------------------

std::vector<InfluenceMatrix> influence_matrices(const SequenceFunction& fn, const Tensor& frames,
                                                const std::vector<int64_t>& layers,
                                                const InfluenceOptions& options) {
    if (options.frame_stride < 1) throw ConfigError("frame_stride must be >= 1");
    const int64_t t_len = frames.rows();
    const int64_t k_dim = frames.cols();

    autodiff::Tape tape;
    autodiff::Var input = tape.leaf(frames, /*requires_grad=*/true);
    const std::vector<autodiff::Var> outputs = fn.build(tape, input, 0);

    std::vector<int64_t> resolved;
    resolved.reserve(layers.size());
    for (int64_t l : layers) resolved.push_back(fn.resolve_layer(l));

    const std::vector<int64_t> targets = sampled_frames(t_len, options.frame_stride, 0, true);

    std::vector<InfluenceMatrix> mats(layers.size());
    for (size_t li = 0; li < layers.size(); ++li) {
        mats[li].values = Tensor({t_len, t_len});
        mats[li].layer = resolved[li];
        mats[li].sampled_frames = targets;
    }

    // One parallel slot per (layer, target frame): workers own whole rows.
    const int64_t jobs = static_cast<int64_t>(layers.size()) *
                         static_cast<int64_t>(targets.size());
    parallel_for(jobs, options.threads, [&](int64_t job) {
        const size_t li = static_cast<size_t>(job / static_cast<int64_t>(targets.size()));
        const int64_t t = targets[static_cast<size_t>(job % static_cast<int64_t>(targets.size()))];
        const autodiff::Var h = outputs[resolved[li]];
        const int64_t d_dim = h.value().cols();

        std::vector<double> sq(static_cast<size_t>(t_len), 0.0);
        Tensor seed = Tensor::zeros(h.value().shape());
        for (int64_t d = 0; d < d_dim; ++d) {
            seed(t, d) = 1.0;
            const Tensor grad = tape.vjp(h, seed, input);
            seed(t, d) = 0.0;
            for (int64_t tau = 0; tau < t_len; ++tau) {
                for (int64_t k = 0; k < k_dim; ++k) {
                    const double g = grad(tau, k);
                    if (!std::isfinite(g)) {
                        throw std::runtime_error(
                            "influence: non-finite gradient at target frame t=" +
                            std::to_string(t) + ", output dim d=" + std::to_string(d));
                    }
                    sq[static_cast<size_t>(tau)] += g * g;
                }
            }
        }
        Tensor& values = mats[li].values;
        for (int64_t tau = 0; tau < t_len; ++tau) {
            values(t, tau) = std::sqrt(sq[static_cast<size_t>(tau)]);
        }
    });
    return mats;
}

InfluenceMatrix influence_matrix(const SequenceFunction& fn, const Tensor& frames, int64_t layer,
                                 const InfluenceOptions& options) {
    return influence_matrices(fn, frames, {layer}, options)[0];
}

// ---- relative influence ------------------------------------------------------

bool RelativeInfluenceCurve::has_empty_shifts() const {
    for (int64_t c : pair_counts) {
        if (c == 0) return true;
    }
    return false;
}

double RelativeInfluenceCurve::at(int64_t sigma) const {
    if (!is_normalized()) throw ConfigError("relative influence curve is not normalized");
    return normalized[static_cast<size_t>(sigma + half_window)];
}

double RelativeInfluenceCurve::raw_at(int64_t sigma) const {
    return raw[static_cast<size_t>(sigma + half_window)];
}

int64_t RelativeInfluenceCurve::count_at(int64_t sigma) const {
    return pair_counts[static_cast<size_t>(sigma + half_window)];
}

RelativeInfluenceCurve relative_influence(const std::vector<InfluenceMatrix>& matrices,
                                          int64_t half_window, bool count_average) {
    if (half_window < 1) throw ConfigError("half_window must be >= 1");
    if (matrices.empty()) throw ConfigError("relative_influence needs at least one matrix");

    RelativeInfluenceCurve curve;
    curve.half_window = half_window;
    curve.count_averaged = count_average;
    const size_t bins = static_cast<size_t>(2 * half_window + 1);
    curve.raw.assign(bins, 0.0);
    curve.pair_counts.assign(bins, 0);

    std::vector<CompensatedSum> sums(bins);
    for (const InfluenceMatrix& m : matrices) {
        const int64_t t_len = m.values.rows();
        for (int64_t t : m.sampled_frames) {
            for (int64_t sigma = -half_window; sigma <= half_window; ++sigma) {
                const int64_t tau = t + sigma;
                if (tau < 0 || tau >= t_len) continue;
                const size_t bin = static_cast<size_t>(sigma + half_window);
                sums[bin].add(m.values(t, tau));
                ++curve.pair_counts[bin];
            }
        }
    }
    for (size_t b = 0; b < bins; ++b) curve.raw[b] = sums[b].value();

    std::vector<double> basis = curve.raw;
    if (count_average) {
        for (size_t b = 0; b < bins; ++b) {
            basis[b] = curve.pair_counts[b] > 0
                           ? curve.raw[b] / static_cast<double>(curve.pair_counts[b])
                           : 0.0;
        }
    }
    CompensatedSum total;
    for (double v : basis) total.add(v);
    if (total.value() > 0.0) {
        curve.normalized.resize(bins);
        for (size_t b = 0; b < bins; ++b) curve.normalized[b] = basis[b] / total.value();
    }
    return curve;
}

double contextualization(const RelativeInfluenceCurve& curve) {
    if (!curve.is_normalized()) {
        throw ConfigError("contextualization requires a normalized curve");
    }
    return 1.0 - curve.at(0);
}

// ---- layerwise report ----------------------------------------------------------

ContextReport layerwise_report(const SequenceFunction& fn, const Dataset& dataset,
                               int64_t half_window, const InfluenceOptions& options) {
    std::vector<int64_t> layers(static_cast<size_t>(fn.num_outputs()));
    for (size_t i = 0; i < layers.size(); ++i) layers[i] = static_cast<int64_t>(i);

    // Per layer, one matrix per utterance.
    std::vector<std::vector<InfluenceMatrix>> per_layer(layers.size());
    for (const Utterance& utt : dataset.utterances) {
        std::vector<InfluenceMatrix> mats =
            influence_matrices(fn, utt.features.frames, layers, options);
        for (size_t li = 0; li < layers.size(); ++li) {
            per_layer[li].push_back(std::move(mats[li]));
        }
    }

    ContextReport report;
    report.half_window = half_window;
    report.frame_stride = options.frame_stride;
    for (size_t li = 0; li < layers.size(); ++li) {
        LayerReport lr;
        lr.layer = layers[li];
        lr.curve = relative_influence(per_layer[li], half_window);
        lr.contextualization = contextualization(lr.curve);
        report.layers.push_back(std::move(lr));
    }
    return report;
}

// ---- CSV -----------------------------------------------------------------------

std::string curve_csv_header() {
    return "model_id,layer,sigma_frames,sigma_seconds,S_raw,S_norm,pair_count\n";
}

void append_curve_csv(std::string& out, const std::string& model_id, int64_t layer,
                      double frame_rate_hz, const RelativeInfluenceCurve& curve) {
    for (int64_t sigma = -curve.half_window; sigma <= curve.half_window; ++sigma) {
        const double seconds = static_cast<double>(sigma) / frame_rate_hz;
        out += model_id + "," + std::to_string(layer) + "," + std::to_string(sigma) + "," +
               format_double(seconds) + "," + format_double(curve.raw_at(sigma)) + "," +
               format_double(curve.is_normalized() ? curve.at(sigma)
                                                   : std::numeric_limits<double>::quiet_NaN()) +
               "," + std::to_string(curve.count_at(sigma)) + "\n";
    }
}

std::string summary_csv(const std::string& model_id, const ContextReport& report) {
    std::string out = "model_id,layer,W,contextualization\n";
    for (const LayerReport& lr : report.layers) {
        out += model_id + "," + std::to_string(lr.layer) + "," +
               std::to_string(report.half_window) + "," +
               format_double(lr.contextualization) + "\n";
    }
    return out;
}

std::string truncation_csv(const std::string& model_id, int64_t layer,
                           const std::vector<TruncationStats>& sweep,
                           const std::string& manifest_hash) {
    std::string out = "# manifest_hash=" + manifest_hash + "\n";
    out += "model_id,layer,W,mean_l2,probe_error_full,probe_error_truncated,error_gap,frames\n";
    for (const TruncationStats& s : sweep) {
        out += model_id + "," + std::to_string(layer) + "," + std::to_string(s.half_window) +
               "," + format_double(s.mean_l2) + "," + format_double(s.probe_error_full) + "," +
               format_double(s.probe_error_truncated) + "," + format_double(s.error_gap) + "," +
               std::to_string(s.frames_evaluated) + "\n";
    }
    return out;
}

}  // namespace ctxmeter::meter
