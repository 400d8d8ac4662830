#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>

#include "ctxmeter/errors.hpp"
#include "ctxmeter/model.hpp"
#include "fixtures.hpp"

using namespace ctxmeter;
using model::HeadKind;
using model::ModelConfig;
using model::PositionalMode;
using model::TransformerEncoder;

namespace {

ModelConfig tiny_config() {
    ModelConfig c;
    c.num_layers = 2;
    c.model_dim = 8;
    c.num_heads = 2;
    c.ffn_dim = 16;
    c.input_dim = 3;
    c.head = HeadKind::kClassifier;
    c.head_out = 4;
    c.seed = 1234;
    return c;
}

std::string temp_path(const char* name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("config validation catches head/dim mismatches") {
    ModelConfig c = tiny_config();
    c.num_heads = 3;  // 8 % 3 != 0
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = tiny_config();
    c.num_layers = 0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("config round-trips through json") {
    ModelConfig c = tiny_config();
    c.positional_mode = PositionalMode::kAbsoluteOffset;
    c.head = HeadKind::kRegressor;
    c.head_out = 1;
    CHECK(ModelConfig::from_json(c.to_json()) == c);
}

TEST_CASE("forward keeps frame count at every layer") {
    TransformerEncoder m(tiny_config());
    for (int64_t t : {1, 2, 7}) {
        const auto acts = m.forward(fixtures::random_frames(t, 3, 99));
        REQUIRE(acts.per_layer.size() == 3);  // input + 2 blocks
        for (const Tensor& layer : acts.per_layer) {
            CHECK(layer.rows() == t);
            CHECK(layer.cols() == 8);
            CHECK(layer.all_finite());
        }
    }
}

TEST_CASE("forward rejects inputs with the wrong feature dim") {
    TransformerEncoder m(tiny_config());
    CHECK_THROWS_AS(m.forward(fixtures::random_frames(4, 5, 1)), ConfigError);
}

TEST_CASE("forward is deterministic") {
    TransformerEncoder m(tiny_config());
    const Tensor x = fixtures::random_frames(6, 3, 7);
    const auto a = m.forward(x);
    const auto b = m.forward(x);
    for (size_t l = 0; l < a.per_layer.size(); ++l) CHECK(a.per_layer[l] == b.per_layer[l]);
}

TEST_CASE("same seed gives same weights, different seed different weights") {
    TransformerEncoder a(tiny_config());
    TransformerEncoder b(tiny_config());
    CHECK(a.weight_checksum() == b.weight_checksum());
    ModelConfig other = tiny_config();
    other.seed = 4321;
    TransformerEncoder c(other);
    CHECK(a.weight_checksum() != c.weight_checksum());
}

TEST_CASE("restart mode ignores the window start position") {
    TransformerEncoder m(tiny_config());
    const Tensor x = fixtures::random_frames(5, 3, 31);
    const auto at0 = m.forward(x, 0);
    const auto at9 = m.forward(x, 9);
    for (size_t l = 0; l < at0.per_layer.size(); ++l) {
        CHECK(at0.per_layer[l] == at9.per_layer[l]);
    }
}

TEST_CASE("absolute offset mode shifts with the window start") {
    ModelConfig c = tiny_config();
    c.positional_mode = PositionalMode::kAbsoluteOffset;
    TransformerEncoder m(c);
    const Tensor x = fixtures::random_frames(5, 3, 31);
    const auto at0 = m.forward(x, 0);
    const auto at9 = m.forward(x, 9);
    CHECK_FALSE(at0.per_layer[0] == at9.per_layer[0]);
}

TEST_CASE("every hidden frame has gradient paths to every input frame") {
    // Bidirectional attention: no structural zeros anywhere in the Jacobian.
    TransformerEncoder m(tiny_config());
    const Tensor x = fixtures::random_frames(5, 3, 13);
    autodiff::Tape tape;
    autodiff::Var input = tape.leaf(x, true);
    const auto layers = m.build(tape, input, 0);
    const autodiff::Var last = layers.back();
    for (int64_t t = 0; t < 5; ++t) {
        Tensor seed = Tensor::zeros(last.value().shape());
        seed(t, 0) = 1.0;
        const Tensor g = tape.vjp(last, seed, input);
        for (int64_t tau = 0; tau < 5; ++tau) {
            double row_mag = 0.0;
            for (int64_t k = 0; k < 3; ++k) row_mag += std::abs(g(tau, k));
            CHECK(row_mag > 0.0);
        }
    }
}

TEST_CASE("classifier ties break to the lowest class id") {
    TransformerEncoder m(tiny_config());
    // zero the head so every logit row is identical
    for (size_t i = 0; i < m.param_count(); ++i) {
        if (m.param_name(i) == "head.weight" || m.param_name(i) == "head.bias") {
            m.mutable_param(i).fill(0.0);
        }
    }
    const auto pred = m.predict_classes(fixtures::random_frames(6, 3, 77));
    for (int64_t p : pred) CHECK(p == 0);
}

TEST_CASE("predict_classes on a regressor head is rejected") {
    ModelConfig c = tiny_config();
    c.head = HeadKind::kRegressor;
    c.head_out = 1;
    TransformerEncoder m(c);
    CHECK_THROWS_AS(m.predict_classes(fixtures::random_frames(2, 3, 1)), ConfigError);
    CHECK(m.predict_values(fixtures::random_frames(2, 3, 1)).rows() == 2);
}

TEST_CASE("single frame input yields a single prediction") {
    TransformerEncoder m(tiny_config());
    CHECK(m.predict_classes(fixtures::random_frames(1, 3, 5)).size() == 1);
}

TEST_CASE("checkpoint round-trips bit-exactly") {
    TransformerEncoder m(tiny_config());
    const std::string path = temp_path("ctxmeter_test_model.ckpt");
    m.save(path, "deadbeef");
    TransformerEncoder back = TransformerEncoder::load(path);
    CHECK(back.config() == m.config());
    CHECK(back.weight_checksum() == m.weight_checksum());

    const Tensor x = fixtures::random_frames(4, 3, 3);
    CHECK(m.forward(x).per_layer.back() == back.forward(x).per_layer.back());
    std::filesystem::remove(path);
}

TEST_CASE("checkpoint load rejects corrupted bytes with an offset") {
    const std::string path = temp_path("ctxmeter_test_model_bad.ckpt");
    TransformerEncoder m(tiny_config());
    m.save(path);
    // corrupt the magic
    {
        FILE* f = std::fopen(path.c_str(), "r+b");
        REQUIRE(f != nullptr);
        std::fputc('X', f);
        std::fclose(f);
    }
    CHECK_THROWS_AS(TransformerEncoder::load(path), FormatError);
    std::filesystem::remove(path);
}

TEST_CASE("resolve_layer handles negative indices and rejects bad ones") {
    TransformerEncoder m(tiny_config());
    CHECK(m.resolve_layer(-1) == 2);
    CHECK(m.resolve_layer(0) == 0);
    CHECK_THROWS_AS(m.resolve_layer(3), ConfigError);
    CHECK_THROWS_AS(m.resolve_layer(-4), ConfigError);
}
