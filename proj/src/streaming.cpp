#include "ctxmeter/streaming.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ctxmeter/errors.hpp"
#include "ctxmeter/io_util.hpp"
#include "ctxmeter/parallel.hpp"

namespace ctxmeter::streaming {

using data::Dataset;
using data::FeatureSequence;
using data::LabelSequence;

void StreamingConfig::validate() const {
    if (history < kUnlimited) throw ConfigError("history must be >= 0 or unlimited");
    if (lookahead < kUnlimited) throw ConfigError("lookahead must be >= 0 or unlimited");
    if (stride < 1) throw ConfigError("stride must be >= 1");
}

double StreamingConfig::latency_seconds(double frame_rate_hz) const {
    if (lookahead == kUnlimited) return std::numeric_limits<double>::infinity();
    return static_cast<double>(lookahead) / frame_rate_hz;
}

StreamingResult stream_extract(const SequenceFunction& fn, const FeatureSequence& utterance,
                               const StreamingConfig& config,
                               const train::ProbeClassifier* probe,
                               const LabelSequence* labels) {
    config.validate();
    const int64_t layer = fn.resolve_layer(config.layer);
    const Tensor& frames = utterance.frames;
    const int64_t t_len = frames.rows();

    const Tensor full = fn.evaluate_layer(frames, layer, 0);
    const int64_t d_dim = full.cols();

    StreamingResult result;
    result.representations = Tensor({t_len, d_dim});
    result.frames = t_len;

    const bool whole_utterance = config.history == kUnlimited &&
                                 config.lookahead == kUnlimited && config.stride == 1;
    if (whole_utterance) {
        // Window == utterance; reuse the full pass so the result is
        // bit-identical to non-streaming extraction.
        result.representations = full;
    } else {
        const int64_t num_chunks = (t_len + config.stride - 1) / config.stride;
        std::vector<Tensor> chunk_outputs(static_cast<size_t>(num_chunks));
        parallel_for(num_chunks, config.threads, [&](int64_t chunk) {
            const int64_t c0 = chunk * config.stride;
            const int64_t c1 = std::min(t_len, c0 + config.stride);
            const int64_t lo =
                config.history == kUnlimited ? 0 : std::max<int64_t>(0, c0 - config.history);
            const int64_t hi = config.lookahead == kUnlimited
                                   ? t_len - 1
                                   : std::min<int64_t>(t_len - 1, (c1 - 1) + config.lookahead);
            const Tensor window = slice_rows_copy(frames, lo, hi + 1);
            const Tensor acts = fn.evaluate_layer(window, layer, lo);
            Tensor out({c1 - c0, d_dim});
            for (int64_t t = c0; t < c1; ++t) {
                const int64_t local = t - lo;
                for (int64_t d = 0; d < d_dim; ++d) out(t - c0, d) = acts(local, d);
            }
            chunk_outputs[static_cast<size_t>(chunk)] = std::move(out);
        });
        int64_t row = 0;
        for (const Tensor& chunk : chunk_outputs) {
            for (int64_t r = 0; r < chunk.rows(); ++r, ++row)
                for (int64_t d = 0; d < d_dim; ++d) result.representations(row, d) = chunk(r, d);
        }
    }

    CompensatedSum dev;
    for (int64_t t = 0; t < t_len; ++t) {
        dev.add(l2_distance(row_copy(result.representations, t), row_copy(full, t)));
    }
    result.mean_l2_deviation = dev.value() / static_cast<double>(t_len);

    if (probe != nullptr) {
        if (labels == nullptr || labels->kind != data::LabelKind::kClassIds) {
            throw ConfigError("streaming probe evaluation needs class labels");
        }
        const std::vector<int64_t> pred = probe->predict(result.representations);
        result.probe_error = train::frame_error_rate(pred, labels->class_ids);
    } else {
        result.probe_error = std::numeric_limits<double>::quiet_NaN();
    }
    return result;
}

std::vector<SweepRow> sweep(const SequenceFunction& fn, const train::ProbeClassifier& probe,
                            const Dataset& dataset, const std::vector<int64_t>& histories,
                            const std::vector<int64_t>& lookaheads, int64_t layer,
                            int64_t stride, int threads) {
    if (dataset.utterances.empty()) throw ConfigError("sweep over empty dataset");
    std::vector<SweepRow> rows;
    rows.reserve(histories.size() * lookaheads.size());

    for (int64_t h : histories) {
        for (int64_t l : lookaheads) {
            StreamingConfig config;
            config.history = h;
            config.lookahead = l;
            config.stride = stride;
            config.layer = layer;
            config.threads = threads;

            int64_t wrong = 0;
            int64_t frames = 0;
            CompensatedSum dev;
            for (const data::Utterance& utt : dataset.utterances) {
                const StreamingResult r =
                    stream_extract(fn, utt.features, config, &probe, &utt.labels);
                // probe_error is a per-utterance rate; recover counts for an
                // exact dataset-level rate.
                wrong += static_cast<int64_t>(
                    std::llround(r.probe_error * static_cast<double>(r.frames)));
                dev.add(r.mean_l2_deviation * static_cast<double>(r.frames));
                frames += r.frames;
            }

            SweepRow row;
            row.history = h;
            row.lookahead = l;
            row.history_seconds = h == kUnlimited
                                      ? std::numeric_limits<double>::infinity()
                                      : static_cast<double>(h) / dataset.frame_rate_hz;
            row.lookahead_seconds = l == kUnlimited
                                        ? std::numeric_limits<double>::infinity()
                                        : static_cast<double>(l) / dataset.frame_rate_hz;
            row.probe_error = static_cast<double>(wrong) / static_cast<double>(frames);
            row.mean_l2_deviation = dev.value() / static_cast<double>(frames);
            row.frames_evaluated = frames;
            rows.push_back(row);
        }
    }
    return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows, const std::string& manifest_hash) {
    std::string out = "# manifest_hash=" + manifest_hash + "\n";
    out += "history_s,lookahead_s,probe_error,mean_l2_dev,frames_evaluated\n";
    for (const SweepRow& r : rows) {
        out += format_double(r.history_seconds) + "," + format_double(r.lookahead_seconds) +
               "," + format_double(r.probe_error) + "," + format_double(r.mean_l2_deviation) +
               "," + std::to_string(r.frames_evaluated) + "\n";
    }
    return out;
}

}  // namespace ctxmeter::streaming
