#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <vector>

#include "ctxmeter/data.hpp"
#include "ctxmeter/errors.hpp"
#include "ctxmeter/io_util.hpp"

using namespace ctxmeter;
using data::Dataset;
using data::LabelKind;
using data::SyntheticTaskSpec;
using data::TaskKind;

namespace {

SyntheticTaskSpec default_spec(int64_t radius) {
    SyntheticTaskSpec s;
    s.context_radius = radius;
    s.vocab_size = 10;
    s.num_classes = 5;
    s.feature_dim = 6;
    s.embed_noise_std = 0.1;
    s.seed = 7;
    return s;
}

std::string temp_path(const char* name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

bool datasets_equal(const Dataset& a, const Dataset& b) {
    if (a.size() != b.size()) return false;
    for (size_t i = 0; i < a.size(); ++i) {
        if (!(a.utterances[i].features.frames == b.utterances[i].features.frames)) return false;
        if (a.utterances[i].labels.kind != b.utterances[i].labels.kind) return false;
        if (a.utterances[i].labels.class_ids != b.utterances[i].labels.class_ids) return false;
        if (a.utterances[i].labels.targets != b.utterances[i].labels.targets) return false;
    }
    return true;
}

}  // namespace

TEST_CASE("radius zero window_sum_mod labels each frame by its own symbol") {
    SyntheticTaskSpec s = default_spec(0);
    const std::vector<std::vector<int64_t>> symbols = {{0, 4, 7, 9, 3}};
    const Dataset ds = data::generate_from_symbols(s, symbols);
    const std::vector<int64_t> expected = {0 % 5, 4 % 5, 7 % 5, 9 % 5, 3 % 5};
    CHECK(ds.utterances[0].labels.class_ids == expected);
}

TEST_CASE("radius one window_sum_mod matches hand arithmetic") {
    SyntheticTaskSpec s = default_spec(1);
    const Dataset ds = data::generate_from_symbols(s, {{2, 3, 4}});
    // center frame: (2 + 3 + 4) mod 5 = 4; edges clip to 2-symbol windows
    CHECK(ds.utterances[0].labels.class_ids[1] == 4);
    CHECK(ds.utterances[0].labels.class_ids[0] == (2 + 3) % 5);
    CHECK(ds.utterances[0].labels.class_ids[2] == (3 + 4) % 5);
}

TEST_CASE("labels depend only on the symbol window") {
    // Two sequences agreeing on [t-r, t+r] give the same label at t.
    SyntheticTaskSpec s = default_spec(2);
    const std::vector<int64_t> a = {9, 9, 1, 2, 3, 4, 5, 9, 9};
    const std::vector<int64_t> b = {0, 1, 1, 2, 3, 4, 5, 0, 2};
    const Dataset da = data::generate_from_symbols(s, {a});
    const Dataset db = data::generate_from_symbols(s, {b});
    const int64_t t = 4;  // window [2, 6] identical in both
    CHECK(da.utterances[0].labels.class_ids[t] == db.utterances[0].labels.class_ids[t]);
}

TEST_CASE("smooth_regression labels are the window mean of channel zero") {
    SyntheticTaskSpec s = default_spec(1);
    s.task_kind = TaskKind::kSmoothRegression;
    const Dataset ds = data::generate_from_symbols(s, {{5, 0, 10 - 1}});
    const auto& utt = ds.utterances[0];
    REQUIRE(utt.labels.kind == LabelKind::kRealTargets);
    const double c0 = utt.features.frames(0, 0);
    const double c1 = utt.features.frames(1, 0);
    const double c2 = utt.features.frames(2, 0);
    CHECK(c0 == doctest::Approx(0.5));
    CHECK(utt.labels.targets[0] == doctest::Approx((c0 + c1) / 2.0));
    CHECK(utt.labels.targets[1] == doctest::Approx((c0 + c1 + c2) / 3.0));
}

TEST_CASE("generation with a fixed seed is bit-identical") {
    SyntheticTaskSpec s = default_spec(2);
    const Dataset a = data::generate(s, 5, 8, 20);
    const Dataset b = data::generate(s, 5, 8, 20);
    CHECK(datasets_equal(a, b));
}

TEST_CASE("min_len below the task window is rejected") {
    SyntheticTaskSpec s = default_spec(3);
    CHECK_THROWS_AS(data::generate(s, 2, 6, 10), ConfigError);  // needs >= 7
    CHECK_NOTHROW(data::generate(s, 2, 7, 10));
}

TEST_CASE("window_sum_mod labels are class balanced") {
    SyntheticTaskSpec s = default_spec(2);
    const Dataset ds = data::generate(s, 300, 30, 50);
    std::vector<int64_t> counts(s.num_classes, 0);
    int64_t total = 0;
    for (const auto& u : ds.utterances) {
        for (int64_t id : u.labels.class_ids) {
            ++counts[id];
            ++total;
        }
    }
    REQUIRE(total >= 10000);
    const double expected = static_cast<double>(total) / static_cast<double>(s.num_classes);
    for (int64_t c : counts) {
        CHECK(std::abs(static_cast<double>(c) - expected) / expected < 0.10);
    }
}

TEST_CASE("save then load round-trips the dataset") {
    SyntheticTaskSpec s = default_spec(1);
    const Dataset ds = data::generate(s, 4, 6, 12);
    const std::string path = temp_path("ctxmeter_test_data.ctxm");
    data::save_matrix(ds, path, &s, "cafe");
    const Dataset back = data::load_matrix(path);
    CHECK(datasets_equal(ds, back));
    CHECK(back.frame_rate_hz == ds.frame_rate_hz);
    std::filesystem::remove(path);
    std::filesystem::remove(path + ".json");
}

TEST_CASE("real-target datasets round-trip too") {
    SyntheticTaskSpec s = default_spec(1);
    s.task_kind = TaskKind::kSmoothRegression;
    const Dataset ds = data::generate(s, 3, 5, 9);
    const std::string path = temp_path("ctxmeter_test_data_reg.ctxm");
    data::save_matrix(ds, path);
    CHECK(datasets_equal(ds, data::load_matrix(path)));
    std::filesystem::remove(path);
    std::filesystem::remove(path + ".json");
}

TEST_CASE("empty file is a format error at offset zero") {
    const std::string path = temp_path("ctxmeter_test_empty.ctxm");
    atomic_write_file(path, "", 0);
    try {
        data::load_matrix(path);
        FAIL("expected FormatError");
    } catch (const FormatError& e) {
        CHECK(e.byte_offset == 0);
    }
    std::filesystem::remove(path);
}

TEST_CASE("bad magic and bad version are rejected with offsets") {
    const std::string path = temp_path("ctxmeter_test_magic.ctxm");
    {
        ByteWriter w;
        w.write_bytes("NOPE", 4);
        w.write_u32(1);
        w.write_u32(0);
        atomic_write_file(path, w.buffer().data(), w.buffer().size());
    }
    try {
        data::load_matrix(path);
        FAIL("expected FormatError");
    } catch (const FormatError& e) {
        CHECK(e.byte_offset == 0);
    }
    {
        ByteWriter w;
        w.write_bytes("CTXM", 4);
        w.write_u32(99);
        w.write_u32(0);
        atomic_write_file(path, w.buffer().data(), w.buffer().size());
    }
    try {
        data::load_matrix(path);
        FAIL("expected FormatError");
    } catch (const FormatError& e) {
        CHECK(e.byte_offset == 4);
    }
    std::filesystem::remove(path);
}

TEST_CASE("truncated payload reports the failing offset") {
    SyntheticTaskSpec s = default_spec(0);
    const Dataset ds = data::generate(s, 1, 4, 4);
    const std::string path = temp_path("ctxmeter_test_trunc.ctxm");
    data::save_matrix(ds, path);
    auto bytes = read_file(path);
    bytes.resize(bytes.size() - 7);
    atomic_write_file(path, bytes.data(), bytes.size());
    CHECK_THROWS_AS(data::load_matrix(path), FormatError);
    std::filesystem::remove(path);
    std::filesystem::remove(path + ".json");
}

TEST_CASE("hand-built two-frame file loads with exact values") {
    // One utterance, T=2, K=2, class labels; floats chosen exactly
    // representable in f32.
    ByteWriter w;
    w.write_bytes("CTXM", 4);
    w.write_u32(1);   // version
    w.write_u32(1);   // N
    w.write_u32(2);   // T
    w.write_u32(2);   // K
    w.write_u32(0);   // label_kind = class ids
    w.write_f32(1.5f);
    w.write_f32(-0.25f);
    w.write_f32(0.125f);
    w.write_f32(8.0f);
    w.write_u32(3);
    w.write_u32(1);
    const std::string path = temp_path("ctxmeter_test_hand.ctxm");
    atomic_write_file(path, w.buffer().data(), w.buffer().size());

    const Dataset ds = data::load_matrix(path);
    REQUIRE(ds.size() == 1);
    const auto& utt = ds.utterances[0];
    CHECK(utt.features.frames(0, 0) == 1.5);
    CHECK(utt.features.frames(0, 1) == -0.25);
    CHECK(utt.features.frames(1, 0) == 0.125);
    CHECK(utt.features.frames(1, 1) == 8.0);
    CHECK(utt.labels.class_ids == std::vector<int64_t>{3, 1});
    std::filesystem::remove(path);
}

TEST_CASE("split_tail is deterministic and keeps all utterances") {
    SyntheticTaskSpec s = default_spec(0);
    const Dataset ds = data::generate(s, 10, 4, 8);
    const auto [train, dev] = data::split_tail(ds, 0.2);
    CHECK(train.size() == 8);
    CHECK(dev.size() == 2);
    CHECK(train.split == "train");
    CHECK(dev.split == "dev");
    CHECK(datasets_equal(dev, [&] {
        Dataset d = ds;
        d.utterances.assign(ds.utterances.begin() + 8, ds.utterances.end());
        return d;
    }()));
}

TEST_CASE("window_hash task emits in-range deterministic labels") {
    SyntheticTaskSpec s = default_spec(1);
    s.task_kind = TaskKind::kWindowHash;
    const Dataset a = data::generate(s, 3, 6, 10);
    const Dataset b = data::generate(s, 3, 6, 10);
    CHECK(datasets_equal(a, b));
    for (const auto& u : a.utterances) {
        for (int64_t id : u.labels.class_ids) {
            CHECK(id >= 0);
            CHECK(id < s.num_classes);
        }
    }
}
