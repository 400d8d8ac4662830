// ctxmeter command line: data generation, training, probing, effective
// context measurement and streaming evaluation. Every command records a run
// manifest next to its artifacts and is reproducible from the manifest.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ctxmeter/contextmeter.hpp"
#include "ctxmeter/data.hpp"
#include "ctxmeter/errors.hpp"
#include "ctxmeter/io_util.hpp"
#include "ctxmeter/manifest.hpp"
#include "ctxmeter/model.hpp"
#include "ctxmeter/streaming.hpp"
#include "ctxmeter/svg.hpp"
#include "ctxmeter/train.hpp"

using namespace ctxmeter;
using nlohmann::json;

namespace {

// Exit codes, one per failure class.
enum ExitCode {
    kOk = 0,
    kInternalError = 1,
    kUsageError = 2,
    kMissingInput = 3,
    kFormatError = 4,
    kBudgetExceeded = 5,
    kDivergence = 6,
};

void emit_error(const char* code, const std::string& message) {
    json err;
    err["error"]["code"] = code;
    err["error"]["message"] = message;
    std::fprintf(stderr, "%s\n", err.dump().c_str());
}

std::string stem_of(const std::string& path) {
    return std::filesystem::path(path).stem().string();
}

// "1,2,4" or "inf" entries -> frame counts (inf = unlimited, for streaming).
std::vector<int64_t> parse_int_list(const std::string& text, bool allow_inf) {
    std::vector<int64_t> out;
    std::string item;
    for (size_t i = 0; i <= text.size(); ++i) {
        if (i == text.size() || text[i] == ',') {
            if (!item.empty()) {
                if (allow_inf && (item == "inf" || item == "unlimited")) {
                    out.push_back(streaming::kUnlimited);
                } else {
                    out.push_back(std::stoll(item));
                }
                item.clear();
            }
        } else if (!std::isspace(static_cast<unsigned char>(text[i]))) {
            item += text[i];
        }
    }
    if (out.empty()) throw ConfigError("empty list: '" + text + "'");
    return out;
}

data::Dataset load_dataset(const std::string& path, int64_t limit_utts) {
    data::Dataset ds = data::load_matrix(path);
    if (limit_utts > 0 && static_cast<size_t>(limit_utts) < ds.utterances.size()) {
        ds.utterances.resize(static_cast<size_t>(limit_utts));
    }
    return ds;
}

void check_frame_budget(const data::Dataset& ds, int64_t max_frames) {
    if (max_frames > 0 && ds.total_frames() > max_frames) {
        throw BudgetError("dataset has " + std::to_string(ds.total_frames()) +
                          " frames, over the --max-frames cap of " +
                          std::to_string(max_frames));
    }
}

// Loads --config JSON (if present in argv) and returns it; flag values found
// on the command line override these defaults.
json preload_config(int argc, char** argv) {
    for (int i = 1; i + 1 < argc; ++i) {
        if (std::string(argv[i]) == "--config") {
            return json::parse(read_text_file(argv[i + 1]));
        }
    }
    return json::object();
}

template <typename T>
void from_config(const json& cfg, const char* key, T& value) {
    if (cfg.contains(key)) value = cfg.at(key).get<T>();
}

struct Timer {
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
};

// ---- gen-data ---------------------------------------------------------------

struct GenDataOpts {
    std::string out;
    int64_t radius = 2;
    int64_t utts = 100;
    int64_t min_len = 8;
    int64_t max_len = 36;
    int64_t vocab = 10;
    int64_t classes = 5;
    int64_t feature_dim = 16;
    double noise = 0.1;
    uint64_t seed = 1;
    std::string task = "window_sum_mod";
    double frame_rate = 50.0;
    std::string split = "train";
};

int run_gen_data(const GenDataOpts& o) {
    Timer timer;
    data::SyntheticTaskSpec spec;
    spec.context_radius = o.radius;
    spec.vocab_size = o.vocab;
    spec.num_classes = o.classes;
    spec.feature_dim = o.feature_dim;
    spec.embed_noise_std = o.noise;
    spec.seed = o.seed;
    if (o.task == "window_sum_mod") {
        spec.task_kind = data::TaskKind::kWindowSumMod;
    } else if (o.task == "window_hash") {
        spec.task_kind = data::TaskKind::kWindowHash;
    } else if (o.task == "smooth_regression") {
        spec.task_kind = data::TaskKind::kSmoothRegression;
    } else {
        throw ConfigError("unknown task '" + o.task + "'");
    }

    json opts;
    opts["radius"] = o.radius;
    opts["utts"] = o.utts;
    opts["min_len"] = o.min_len;
    opts["max_len"] = o.max_len;
    opts["vocab"] = o.vocab;
    opts["classes"] = o.classes;
    opts["feature_dim"] = o.feature_dim;
    opts["noise"] = o.noise;
    opts["seed"] = o.seed;
    opts["task"] = o.task;
    opts["frame_rate"] = o.frame_rate;
    opts["split"] = o.split;
    RunManifest manifest("gen-data", opts.dump());

    data::Dataset ds = data::generate(spec, o.utts, o.min_len, o.max_len);
    ds.frame_rate_hz = o.frame_rate;
    ds.split = o.split;
    for (auto& u : ds.utterances) u.features.frame_rate_hz = o.frame_rate;

    data::save_matrix(ds, o.out, &spec, manifest.config_hash());
    manifest.add_output(o.out);
    manifest.add_output(o.out + ".json");
    manifest.set_wall_time(timer.seconds());
    manifest.write(o.out);
    std::printf("wrote %s (%zu utterances, %lld frames)\n", o.out.c_str(), ds.size(),
                static_cast<long long>(ds.total_frames()));
    return kOk;
}

// ---- train --------------------------------------------------------------------

struct TrainOpts {
    std::string data;
    std::string dev;
    double dev_frac = 0.15;
    std::string out;
    std::string metrics;
    int64_t layers = 4;
    int64_t dim = 64;
    int64_t heads = 4;
    int64_t ffn = 256;
    std::string head = "classifier";
    int64_t head_out = 0;  // 0 = infer from labels
    std::string positional = "restart";
    uint64_t model_seed = 1;
    std::string optimizer = "adam";
    double lr = 1e-3;
    std::string schedule = "constant";
    int64_t batch = 4;
    int64_t epochs = 20;
    uint64_t seed = 1;
    double grad_clip = 1.0;
};

int run_train(const TrainOpts& o) {
    Timer timer;
    json opts;
    opts["data"] = o.data;
    opts["dev"] = o.dev;
    opts["dev_frac"] = o.dev_frac;
    opts["layers"] = o.layers;
    opts["dim"] = o.dim;
    opts["heads"] = o.heads;
    opts["ffn"] = o.ffn;
    opts["head"] = o.head;
    opts["head_out"] = o.head_out;
    opts["positional"] = o.positional;
    opts["model_seed"] = o.model_seed;
    opts["optimizer"] = o.optimizer;
    opts["lr"] = o.lr;
    opts["schedule"] = o.schedule;
    opts["batch"] = o.batch;
    opts["epochs"] = o.epochs;
    opts["seed"] = o.seed;
    opts["grad_clip"] = o.grad_clip;
    RunManifest manifest("train", opts.dump());

    data::Dataset train_set = data::load_matrix(o.data);
    data::Dataset dev_set;
    if (!o.dev.empty()) {
        dev_set = data::load_matrix(o.dev);
    } else {
        auto split = data::split_tail(train_set, o.dev_frac);
        train_set = std::move(split.first);
        dev_set = std::move(split.second);
    }

    model::ModelConfig mc;
    mc.num_layers = o.layers;
    mc.model_dim = o.dim;
    mc.num_heads = o.heads;
    mc.ffn_dim = o.ffn;
    mc.input_dim = train_set.utterances[0].features.feature_dim();
    mc.positional_mode = o.positional == "absolute_offset"
                             ? model::PositionalMode::kAbsoluteOffset
                             : model::PositionalMode::kRestart;
    mc.seed = o.model_seed;
    if (o.head == "classifier") {
        mc.head = model::HeadKind::kClassifier;
        int64_t classes = o.head_out;
        if (classes == 0) {
            for (const auto& u : train_set.utterances)
                for (int64_t id : u.labels.class_ids) classes = std::max(classes, id + 1);
        }
        mc.head_out = std::max<int64_t>(classes, 2);
    } else if (o.head == "regressor") {
        mc.head = model::HeadKind::kRegressor;
        mc.head_out = o.head_out == 0 ? 1 : o.head_out;
    } else {
        throw ConfigError("unknown head '" + o.head + "'");
    }

    train::TrainConfig tc;
    tc.optimizer = o.optimizer == "sgd" ? train::OptimizerKind::kSgd
                                        : train::OptimizerKind::kAdam;
    if (o.optimizer != "sgd" && o.optimizer != "adam") {
        throw ConfigError("unknown optimizer '" + o.optimizer + "'");
    }
    tc.lr = o.lr;
    tc.schedule = o.schedule == "cosine" ? train::LrSchedule::kCosine
                                         : train::LrSchedule::kConstant;
    if (o.schedule != "cosine" && o.schedule != "constant") {
        throw ConfigError("unknown schedule '" + o.schedule + "'");
    }
    tc.batch_utterances = o.batch;
    tc.epochs = o.epochs;
    tc.seed = o.seed;
    tc.grad_clip = o.grad_clip;

    train::TrainResult result = train::train_supervised(mc, train_set, dev_set, tc);
    result.model->save(o.out, manifest.config_hash());
    manifest.add_input(o.data);
    if (!o.dev.empty()) manifest.add_input(o.dev);
    manifest.add_output(o.out);
    if (!o.metrics.empty()) {
        atomic_write_file(o.metrics, train::metrics_csv(result.history,
                                                        manifest.config_hash()));
        manifest.add_output(o.metrics);
    }
    manifest.set_wall_time(timer.seconds());
    manifest.write(o.out);

    const auto& last = result.history.back();
    std::printf("wrote %s (final dev_loss %s dev_error %s)\n", o.out.c_str(),
                format_double(last.dev_loss).c_str(), format_double(last.dev_error).c_str());
    return kOk;
}

// ---- probe ----------------------------------------------------------------------

struct ProbeOpts {
    std::string model;
    std::string data;
    std::string dev;
    double dev_frac = 0.15;
    int64_t layer = -1;
    std::string out;
    double lr = 5e-2;
    int64_t batch_frames = 512;
    int64_t max_epochs = 200;
    int64_t patience = 10;
    double l2 = 0.0;
    uint64_t seed = 1;
};

int run_probe(const ProbeOpts& o) {
    Timer timer;
    json opts;
    opts["model"] = o.model;
    opts["data"] = o.data;
    opts["dev"] = o.dev;
    opts["dev_frac"] = o.dev_frac;
    opts["layer"] = o.layer;
    opts["lr"] = o.lr;
    opts["batch_frames"] = o.batch_frames;
    opts["max_epochs"] = o.max_epochs;
    opts["patience"] = o.patience;
    opts["l2"] = o.l2;
    opts["seed"] = o.seed;
    RunManifest manifest("probe", opts.dump());

    model::TransformerEncoder m = model::TransformerEncoder::load(o.model);
    data::Dataset train_set = data::load_matrix(o.data);
    data::Dataset dev_set;
    if (!o.dev.empty()) {
        dev_set = data::load_matrix(o.dev);
    } else {
        auto split = data::split_tail(train_set, o.dev_frac);
        train_set = std::move(split.first);
        dev_set = std::move(split.second);
    }

    train::ProbeTrainConfig pc;
    pc.lr = o.lr;
    pc.batch_frames = o.batch_frames;
    pc.max_epochs = o.max_epochs;
    pc.patience = o.patience;
    pc.l2 = o.l2;
    pc.seed = o.seed;

    const uint64_t weights_before = m.weight_checksum();
    train::ProbeClassifier probe = train::train_probe(m, o.layer, train_set, dev_set, pc);
    if (m.weight_checksum() != weights_before) {
        throw std::runtime_error("probe training modified model weights");
    }
    const double dev_err = train::probe_error_on_dataset(m, probe, dev_set);

    probe.save(o.out, manifest.config_hash());
    manifest.add_input(o.model);
    manifest.add_input(o.data);
    if (!o.dev.empty()) manifest.add_input(o.dev);
    manifest.add_output(o.out);
    manifest.set_wall_time(timer.seconds());
    manifest.write(o.out);
    std::printf("wrote %s (layer %lld, dev probe error %s)\n", o.out.c_str(),
                static_cast<long long>(probe.source_layer), format_double(dev_err).c_str());
    return kOk;
}

// ---- measure-trunc -----------------------------------------------------------------

struct TruncOpts {
    std::string model;
    std::string data;
    std::string probe;
    int64_t layer = -1;
    std::string windows = "0,1,2,4,8,16";
    std::string distance = "l2_per_frame";
    int64_t stride = 1;
    bool exclude_edges = false;
    int64_t utts = 0;
    int64_t max_frames = 100000;
    int threads = 0;
    std::string out;
};

int run_measure_trunc(const TruncOpts& o) {
    Timer timer;
    json opts;
    opts["model"] = o.model;
    opts["data"] = o.data;
    opts["probe"] = o.probe;
    opts["layer"] = o.layer;
    opts["windows"] = o.windows;
    opts["distance"] = o.distance;
    opts["stride"] = o.stride;
    opts["exclude_edges"] = o.exclude_edges;
    opts["utts"] = o.utts;
    opts["max_frames"] = o.max_frames;
    RunManifest manifest("measure-trunc", opts.dump());

    model::TransformerEncoder m = model::TransformerEncoder::load(o.model);
    data::Dataset ds = load_dataset(o.data, o.utts);
    check_frame_budget(ds, o.max_frames);

    std::unique_ptr<train::ProbeClassifier> probe;
    if (!o.probe.empty()) {
        probe = std::make_unique<train::ProbeClassifier>(
            train::ProbeClassifier::load(o.probe));
    }

    meter::TruncationConfig cfg;
    cfg.layer = o.layer;
    cfg.frame_stride = o.stride;
    cfg.include_edge_frames = !o.exclude_edges;
    cfg.threads = o.threads;
    if (o.distance == "l2_per_frame") {
        cfg.distance = meter::TruncationDistance::kL2PerFrame;
    } else if (o.distance == "error_flip") {
        cfg.distance = meter::TruncationDistance::kErrorFlip;
    } else {
        throw ConfigError("unknown distance '" + o.distance + "'");
    }

    const std::vector<int64_t> windows = parse_int_list(o.windows, false);
    const auto sweep = meter::truncation_sweep(m, ds, cfg, windows, probe.get());

    atomic_write_file(o.out, meter::truncation_csv(stem_of(o.model), m.resolve_layer(o.layer),
                                                   sweep, manifest.config_hash()));
    manifest.add_input(o.model);
    manifest.add_input(o.data);
    if (!o.probe.empty()) manifest.add_input(o.probe);
    manifest.add_output(o.out);
    manifest.set_wall_time(timer.seconds());
    manifest.write(o.out);
    std::printf("wrote %s (%zu window settings)\n", o.out.c_str(), sweep.size());
    return kOk;
}

// ---- measure-influence ------------------------------------------------------------

struct InfluenceOpts {
    std::string model;
    std::string data;
    int64_t layer = -1;
    int64_t window = 50;
    int64_t stride = 1;
    bool count_average = false;
    int64_t utts = 0;
    int64_t max_frames = 20000;
    int threads = 0;
    std::string out;
    std::string svg;
};

int run_measure_influence(const InfluenceOpts& o) {
    Timer timer;
    json opts;
    opts["model"] = o.model;
    opts["data"] = o.data;
    opts["layer"] = o.layer;
    opts["window"] = o.window;
    opts["stride"] = o.stride;
    opts["count_average"] = o.count_average;
    opts["utts"] = o.utts;
    opts["max_frames"] = o.max_frames;
    RunManifest manifest("measure-influence", opts.dump());

    model::TransformerEncoder m = model::TransformerEncoder::load(o.model);
    data::Dataset ds = load_dataset(o.data, o.utts);
    check_frame_budget(ds, o.max_frames);

    meter::InfluenceOptions io;
    io.frame_stride = o.stride;
    io.threads = o.threads;
    std::vector<meter::InfluenceMatrix> mats;
    mats.reserve(ds.size());
    for (const auto& u : ds.utterances) {
        mats.push_back(meter::influence_matrix(m, u.features.frames, o.layer, io));
    }
    const auto curve = meter::relative_influence(mats, o.window, o.count_average);

    const std::string model_id = stem_of(o.model);
    std::string csv = "# manifest_hash=" + manifest.config_hash() + "\n";
    csv += meter::curve_csv_header();
    meter::append_curve_csv(csv, model_id, m.resolve_layer(o.layer), ds.frame_rate_hz, curve);
    atomic_write_file(o.out, csv);
    manifest.add_input(o.model);
    manifest.add_input(o.data);
    manifest.add_output(o.out);

    if (!o.svg.empty()) {
        SvgSeries series;
        series.label = model_id + " L" + std::to_string(m.resolve_layer(o.layer));
        for (int64_t s = -curve.half_window; s <= curve.half_window; ++s) {
            series.x.push_back(static_cast<double>(s) / ds.frame_rate_hz);
            series.y.push_back(curve.is_normalized() ? curve.at(s) : curve.raw_at(s));
        }
        atomic_write_file(o.svg, render_line_chart({series}, "time shift (s)",
                                                   "relative influence", true));
        manifest.add_output(o.svg);
    }
    manifest.set_wall_time(timer.seconds());
    manifest.write(o.out);

    const double ctx = curve.is_normalized() ? meter::contextualization(curve) : 0.0;
    std::printf("wrote %s (contextualization %s)\n", o.out.c_str(),
                format_double(ctx).c_str());
    return kOk;
}

// ---- report-context ------------------------------------------------------------------

struct ReportOpts {
    std::string model;
    std::string data;
    int64_t window = 50;
    int64_t stride = 1;
    int64_t utts = 0;
    int64_t max_frames = 20000;
    int threads = 0;
    std::string out;
    std::string curves;
    std::string svg;
};

int run_report_context(const ReportOpts& o) {
    Timer timer;
    json opts;
    opts["model"] = o.model;
    opts["data"] = o.data;
    opts["window"] = o.window;
    opts["stride"] = o.stride;
    opts["utts"] = o.utts;
    opts["max_frames"] = o.max_frames;
    RunManifest manifest("report-context", opts.dump());

    model::TransformerEncoder m = model::TransformerEncoder::load(o.model);
    data::Dataset ds = load_dataset(o.data, o.utts);
    check_frame_budget(ds, o.max_frames);

    meter::InfluenceOptions io;
    io.frame_stride = o.stride;
    io.threads = o.threads;
    const meter::ContextReport report = meter::layerwise_report(m, ds, o.window, io);

    const std::string model_id = stem_of(o.model);
    std::string summary = "# manifest_hash=" + manifest.config_hash() + "\n";
    summary += meter::summary_csv(model_id, report);
    atomic_write_file(o.out, summary);
    manifest.add_input(o.model);
    manifest.add_input(o.data);
    manifest.add_output(o.out);

    if (!o.curves.empty()) {
        std::string csv = "# manifest_hash=" + manifest.config_hash() + "\n";
        csv += meter::curve_csv_header();
        for (const auto& lr : report.layers) {
            meter::append_curve_csv(csv, model_id, lr.layer, ds.frame_rate_hz, lr.curve);
        }
        atomic_write_file(o.curves, csv);
        manifest.add_output(o.curves);
    }
    if (!o.svg.empty()) {
        std::vector<SvgSeries> series;
        for (const auto& lr : report.layers) {
            SvgSeries s;
            s.label = "L" + std::to_string(lr.layer);
            for (int64_t sh = -lr.curve.half_window; sh <= lr.curve.half_window; ++sh) {
                s.x.push_back(static_cast<double>(sh) / ds.frame_rate_hz);
                s.y.push_back(lr.curve.is_normalized() ? lr.curve.at(sh) : lr.curve.raw_at(sh));
            }
            series.push_back(std::move(s));
        }
        atomic_write_file(o.svg, render_line_chart(series, "time shift (s)",
                                                   "relative influence", true));
        manifest.add_output(o.svg);
    }
    manifest.set_wall_time(timer.seconds());
    manifest.write(o.out);
    std::printf("wrote %s (%zu layers)\n", o.out.c_str(), report.layers.size());
    return kOk;
}

// ---- stream-eval ------------------------------------------------------------------------

struct StreamOpts {
    std::string model;
    std::string probe;
    std::string data;
    int64_t layer = -1;
    std::string histories = "inf";
    std::string lookaheads = "inf,0,2,4,8";
    int64_t stride = 1;
    int64_t utts = 0;
    int64_t max_frames = 100000;
    int threads = 0;
    std::string out;
};

int run_stream_eval(const StreamOpts& o) {
    Timer timer;
    json opts;
    opts["model"] = o.model;
    opts["probe"] = o.probe;
    opts["data"] = o.data;
    opts["layer"] = o.layer;
    opts["histories"] = o.histories;
    opts["lookaheads"] = o.lookaheads;
    opts["stride"] = o.stride;
    opts["utts"] = o.utts;
    opts["max_frames"] = o.max_frames;
    RunManifest manifest("stream-eval", opts.dump());

    model::TransformerEncoder m = model::TransformerEncoder::load(o.model);
    train::ProbeClassifier probe = train::ProbeClassifier::load(o.probe);
    data::Dataset ds = load_dataset(o.data, o.utts);
    check_frame_budget(ds, o.max_frames);

    const auto rows = streaming::sweep(m, probe, ds, parse_int_list(o.histories, true),
                                       parse_int_list(o.lookaheads, true), o.layer, o.stride,
                                       o.threads);
    atomic_write_file(o.out, streaming::sweep_csv(rows, manifest.config_hash()));
    manifest.add_input(o.model);
    manifest.add_input(o.probe);
    manifest.add_input(o.data);
    manifest.add_output(o.out);
    manifest.set_wall_time(timer.seconds());
    manifest.write(o.out);
    std::printf("wrote %s (%zu grid cells)\n", o.out.c_str(), rows.size());
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"effective-context measurement toolkit for sequence models"};
    app.require_subcommand(1);
    std::string config_path;
    app.add_option("--config", config_path, "JSON file with per-command option defaults");

    json cfg;
    try {
        cfg = preload_config(argc, argv);
    } catch (const MissingInputError& e) {
        emit_error("missing_input", e.what());
        return kMissingInput;
    } catch (const std::exception& e) {
        emit_error("config_error", std::string("bad --config file: ") + e.what());
        return kUsageError;
    }

    GenDataOpts gen;
    from_config(cfg, "radius", gen.radius);
    from_config(cfg, "utts", gen.utts);
    from_config(cfg, "min_len", gen.min_len);
    from_config(cfg, "max_len", gen.max_len);
    from_config(cfg, "vocab", gen.vocab);
    from_config(cfg, "classes", gen.classes);
    from_config(cfg, "feature_dim", gen.feature_dim);
    from_config(cfg, "noise", gen.noise);
    from_config(cfg, "seed", gen.seed);
    from_config(cfg, "task", gen.task);
    from_config(cfg, "frame_rate", gen.frame_rate);
    auto* gen_cmd = app.add_subcommand("gen-data", "generate a synthetic frame-labeled dataset");
    gen_cmd->add_option("--out", gen.out, "output .ctxm path")->required();
    gen_cmd->add_option("--radius", gen.radius, "context radius r in frames");
    gen_cmd->add_option("--utts", gen.utts, "number of utterances");
    gen_cmd->add_option("--min-len", gen.min_len, "minimum utterance length");
    gen_cmd->add_option("--max-len", gen.max_len, "maximum utterance length");
    gen_cmd->add_option("--vocab", gen.vocab, "symbol vocabulary size");
    gen_cmd->add_option("--classes", gen.classes, "number of label classes");
    gen_cmd->add_option("--feature-dim", gen.feature_dim, "feature dimension K");
    gen_cmd->add_option("--noise", gen.noise, "embedding noise stddev");
    gen_cmd->add_option("--seed", gen.seed, "generation seed");
    gen_cmd->add_option("--task", gen.task,
                        "window_sum_mod | window_hash | smooth_regression");
    gen_cmd->add_option("--frame-rate", gen.frame_rate, "frames per second");
    gen_cmd->add_option("--split", gen.split, "split tag stored in the sidecar");

    TrainOpts tr;
    from_config(cfg, "layers", tr.layers);
    from_config(cfg, "dim", tr.dim);
    from_config(cfg, "heads", tr.heads);
    from_config(cfg, "ffn", tr.ffn);
    from_config(cfg, "lr", tr.lr);
    from_config(cfg, "batch", tr.batch);
    from_config(cfg, "epochs", tr.epochs);
    auto* tr_cmd = app.add_subcommand("train", "train a supervised frame-level model");
    tr_cmd->add_option("--data", tr.data, "training dataset (.ctxm)")->required();
    tr_cmd->add_option("--dev", tr.dev, "dev dataset; default splits --data");
    tr_cmd->add_option("--dev-frac", tr.dev_frac, "tail fraction for the dev split");
    tr_cmd->add_option("--out", tr.out, "output checkpoint path")->required();
    tr_cmd->add_option("--metrics", tr.metrics, "per-epoch metrics CSV path");
    tr_cmd->add_option("--layers", tr.layers, "transformer blocks");
    tr_cmd->add_option("--dim", tr.dim, "model dimension D");
    tr_cmd->add_option("--heads", tr.heads, "attention heads");
    tr_cmd->add_option("--ffn", tr.ffn, "feed-forward dimension");
    tr_cmd->add_option("--head", tr.head, "classifier | regressor");
    tr_cmd->add_option("--head-out", tr.head_out, "classes/output dim; 0 = infer");
    tr_cmd->add_option("--positional", tr.positional, "restart | absolute_offset");
    tr_cmd->add_option("--model-seed", tr.model_seed, "weight init seed");
    tr_cmd->add_option("--optimizer", tr.optimizer, "adam | sgd");
    tr_cmd->add_option("--lr", tr.lr, "learning rate");
    tr_cmd->add_option("--schedule", tr.schedule, "constant | cosine");
    tr_cmd->add_option("--batch", tr.batch, "utterances per optimizer step");
    tr_cmd->add_option("--epochs", tr.epochs, "training epochs");
    tr_cmd->add_option("--seed", tr.seed, "training seed (shuffling)");
    tr_cmd->add_option("--grad-clip", tr.grad_clip, "global grad-norm clip; <=0 off");

    ProbeOpts pr;
    from_config(cfg, "probe_lr", pr.lr);
    auto* pr_cmd = app.add_subcommand("probe", "train a linear probe on frozen activations");
    pr_cmd->add_option("--model", pr.model, "model checkpoint")->required();
    pr_cmd->add_option("--data", pr.data, "training dataset")->required();
    pr_cmd->add_option("--dev", pr.dev, "dev dataset; default splits --data");
    pr_cmd->add_option("--dev-frac", pr.dev_frac, "tail fraction for the dev split");
    pr_cmd->add_option("--layer", pr.layer, "layer index; -1 = final");
    pr_cmd->add_option("--out", pr.out, "output probe path")->required();
    pr_cmd->add_option("--lr", pr.lr, "probe learning rate");
    pr_cmd->add_option("--batch-frames", pr.batch_frames, "frames per probe step");
    pr_cmd->add_option("--max-epochs", pr.max_epochs, "probe epoch cap");
    pr_cmd->add_option("--patience", pr.patience, "early-stop patience (epochs)");
    pr_cmd->add_option("--l2", pr.l2, "ridge penalty");
    pr_cmd->add_option("--seed", pr.seed, "probe seed");

    TruncOpts tc;
    auto* tc_cmd = app.add_subcommand("measure-trunc",
                                      "truncation distances over a window sweep");
    tc_cmd->add_option("--model", tc.model, "model checkpoint")->required();
    tc_cmd->add_option("--data", tc.data, "dataset")->required();
    tc_cmd->add_option("--probe", tc.probe, "probe for error_flip distance");
    tc_cmd->add_option("--layer", tc.layer, "layer index; -1 = final");
    tc_cmd->add_option("--windows", tc.windows, "comma-separated half-window list");
    tc_cmd->add_option("--distance", tc.distance, "l2_per_frame | error_flip");
    tc_cmd->add_option("--stride", tc.stride, "frame stride");
    tc_cmd->add_flag("--exclude-edges", tc.exclude_edges, "skip clipped windows");
    tc_cmd->add_option("--utts", tc.utts, "use only the first N utterances");
    tc_cmd->add_option("--max-frames", tc.max_frames, "frame budget cap");
    tc_cmd->add_option("--threads", tc.threads, "worker threads; 0 = auto");
    tc_cmd->add_option("--out", tc.out, "output CSV")->required();

    InfluenceOpts in;
    auto* in_cmd = app.add_subcommand("measure-influence",
                                      "Jacobian influence curve at one layer");
    in_cmd->add_option("--model", in.model, "model checkpoint")->required();
    in_cmd->add_option("--data", in.data, "dataset")->required();
    in_cmd->add_option("--layer", in.layer, "layer index; -1 = final");
    in_cmd->add_option("--window", in.window, "half-window W for the curve");
    in_cmd->add_option("--stride", in.stride, "target-frame stride");
    in_cmd->add_flag("--count-average", in.count_average,
                     "average by pair count before normalizing");
    in_cmd->add_option("--utts", in.utts, "use only the first N utterances");
    in_cmd->add_option("--max-frames", in.max_frames, "frame budget cap");
    in_cmd->add_option("--threads", in.threads, "worker threads; 0 = auto");
    in_cmd->add_option("--out", in.out, "output curve CSV")->required();
    in_cmd->add_option("--svg", in.svg, "optional SVG chart path");

    ReportOpts rp;
    auto* rp_cmd = app.add_subcommand("report-context",
                                      "contextualization for every layer");
    rp_cmd->add_option("--model", rp.model, "model checkpoint")->required();
    rp_cmd->add_option("--data", rp.data, "dataset")->required();
    rp_cmd->add_option("--window", rp.window, "half-window W");
    rp_cmd->add_option("--stride", rp.stride, "target-frame stride");
    rp_cmd->add_option("--utts", rp.utts, "use only the first N utterances");
    rp_cmd->add_option("--max-frames", rp.max_frames, "frame budget cap");
    rp_cmd->add_option("--threads", rp.threads, "worker threads; 0 = auto");
    rp_cmd->add_option("--out", rp.out, "summary CSV")->required();
    rp_cmd->add_option("--curves", rp.curves, "optional per-layer curve CSV");
    rp_cmd->add_option("--svg", rp.svg, "optional SVG chart path");

    StreamOpts st;
    auto* st_cmd = app.add_subcommand("stream-eval",
                                      "sliding-window inference vs full context");
    st_cmd->add_option("--model", st.model, "model checkpoint")->required();
    st_cmd->add_option("--probe", st.probe, "frozen full-context probe")->required();
    st_cmd->add_option("--data", st.data, "dataset")->required();
    st_cmd->add_option("--layer", st.layer, "layer index; -1 = final");
    st_cmd->add_option("--histories", st.histories, "history frames list (inf allowed)");
    st_cmd->add_option("--lookaheads", st.lookaheads, "lookahead frames list (inf allowed)");
    st_cmd->add_option("--stride", st.stride, "chunk stride (1 = per frame)");
    st_cmd->add_option("--utts", st.utts, "use only the first N utterances");
    st_cmd->add_option("--max-frames", st.max_frames, "frame budget cap");
    st_cmd->add_option("--threads", st.threads, "worker threads; 0 = auto");
    st_cmd->add_option("--out", st.out, "output sweep CSV")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        emit_error("usage_error", e.what());
        return kUsageError;
    }

    try {
        if (gen_cmd->parsed()) return run_gen_data(gen);
        if (tr_cmd->parsed()) return run_train(tr);
        if (pr_cmd->parsed()) return run_probe(pr);
        if (tc_cmd->parsed()) return run_measure_trunc(tc);
        if (in_cmd->parsed()) return run_measure_influence(in);
        if (rp_cmd->parsed()) return run_report_context(rp);
        if (st_cmd->parsed()) return run_stream_eval(st);
        emit_error("usage_error", "no subcommand given");
        return kUsageError;
    } catch (const ConfigError& e) {
        emit_error("config_error", e.what());
        return kUsageError;
    } catch (const MissingInputError& e) {
        emit_error("missing_input", e.what());
        return kMissingInput;
    } catch (const FormatError& e) {
        emit_error("format_error", e.what());
        return kFormatError;
    } catch (const BudgetError& e) {
        emit_error("budget_exceeded", e.what());
        return kBudgetExceeded;
    } catch (const DivergenceError& e) {
        emit_error("divergence", e.what());
        return kDivergence;
    } catch (const std::exception& e) {
        emit_error("internal_error", e.what());
        return kInternalError;
    }
}
