#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>

#include "ctxmeter/finite_diff.hpp"
#include "ctxmeter/rng.hpp"
#include "ctxmeter/tape.hpp"
#include "ctxmeter/tensor.hpp"
#include "fixtures.hpp"

using namespace ctxmeter;
using autodiff::Tape;
using autodiff::Var;

namespace {

// Builds y = op(x) on a fresh tape; the only differentiable leaf is x.
using GraphBuilder = std::function<Var(Tape&, Var)>;

Tensor eval_builder(const GraphBuilder& builder, const Tensor& x) {
    Tape tape;
    Var input = tape.constant(x);
    return builder(tape, input).value();
}

// Checks seed^T * J via the tape against the finite-difference Jacobian for a
// handful of random seeds. Returns the worst relative error seen.
double vjp_vs_fd(const GraphBuilder& builder, const Tensor& x, uint64_t seed_rng_seed,
                 int num_seeds = 3, double step = 1e-5) {
    const Tensor jac = autodiff::finite_difference_jacobian(
        [&](const Tensor& probe) { return eval_builder(builder, probe); }, x, step);

    Tape tape;
    Var input = tape.leaf(x, /*requires_grad=*/true);
    Var out = builder(tape, input);
    const int64_t out_n = out.value().numel();
    const int64_t in_n = x.numel();

    Rng rng(seed_rng_seed);
    double worst = 0.0;
    for (int s = 0; s < num_seeds; ++s) {
        Tensor seed(out.value().shape());
        for (int64_t i = 0; i < out_n; ++i) seed[i] = rng.normal();
        const Tensor got = tape.vjp(out, seed, input);

        Tensor expected(x.shape());
        for (int64_t j = 0; j < in_n; ++j) {
            double acc = 0.0;
            for (int64_t i = 0; i < out_n; ++i) acc += seed[i] * jac(i, j);
            expected[j] = acc;
        }
        worst = std::max(worst, max_rel_error(got, expected));
    }
    return worst;
}

}  // namespace

TEST_CASE("softmax of a constant row is uniform") {
    Tape tape;
    Var x = tape.constant(Tensor({1, 3}));
    Var y = autodiff::softmax_rows(x);
    for (int64_t i = 0; i < 3; ++i) CHECK(y.value()(0, i) == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("layer norm of a constant vector is zero before affine") {
    Tape tape;
    Var x = tape.constant(Tensor::full({2, 5}, 3.7));
    Var gamma = tape.constant(Tensor::full({5}, 1.0));
    Var beta = tape.constant(Tensor({5}));
    Var y = autodiff::layer_norm_rows(x, gamma, beta);
    for (int64_t i = 0; i < y.value().numel(); ++i) CHECK(y.value()[i] == 0.0);
}

TEST_CASE("matmul by identity is identity") {
    Tape tape;
    Tensor a = fixtures::random_frames(3, 3, 7);
    Var av = tape.constant(a);
    Var iv = tape.constant(Tensor::identity(3));
    Var y = autodiff::matmul(iv, av);
    CHECK(y.value() == a);
}

TEST_CASE("matmul rejects mismatched shapes naming them") {
    Tape tape;
    Var a = tape.constant(Tensor({3, 4}));
    Var b = tape.constant(Tensor({5, 2}));
    CHECK_THROWS_WITH_AS(autodiff::matmul(a, b),
                         doctest::Contains("3x4"), std::invalid_argument);
}

TEST_CASE("vjp of a linear map scales the seed") {
    Tape tape;
    Var x = tape.leaf(fixtures::random_frames(4, 3, 11), true);
    Var y = autodiff::scale(x, 2.0);
    Tensor seed = Tensor::zeros({4, 3});
    seed(1, 2) = 1.0;
    const Tensor g = tape.vjp(y, seed, x);
    for (int64_t i = 0; i < g.numel(); ++i) {
        CHECK(g[i] == (i == 1 * 3 + 2 ? 2.0 : 0.0));
    }
}

TEST_CASE("vjp of softmax matches finite differences") {
    const Tensor x = fixtures::random_frames(3, 5, 21);
    const double err = vjp_vs_fd(
        [](Tape&, Var in) { return autodiff::softmax_rows(in); }, x, 100, 4);
    CHECK(err < 1e-5);
}

TEST_CASE("vjp against a disconnected leaf is zero") {
    Tape tape;
    Var x = tape.leaf(fixtures::random_frames(2, 2, 3), true);
    Var other = tape.leaf(fixtures::random_frames(2, 2, 4), true);
    Var y = autodiff::scale(x, 3.0);
    Tensor seed = Tensor::full({2, 2}, 1.0);
    const Tensor g = tape.vjp(y, seed, other);
    CHECK(g.same_shape(other.value()));
    CHECK(max_abs(g) == 0.0);
}

TEST_CASE("vjp rejects a seed of the wrong shape") {
    Tape tape;
    Var x = tape.leaf(fixtures::random_frames(2, 3, 5), true);
    Var y = autodiff::scale(x, 1.0);
    CHECK_THROWS_AS(tape.vjp(y, Tensor({3, 2}), x), std::invalid_argument);
}

TEST_CASE("finite difference jacobian of identity is identity") {
    const Tensor x = fixtures::random_frames(2, 2, 9);
    const Tensor jac = autodiff::finite_difference_jacobian(
        [](const Tensor& v) { return v; }, x, 1e-5);
    CHECK(max_rel_error(jac, Tensor::identity(4)) < 1e-9);
}

TEST_CASE("finite difference of x squared at 3 is 6") {
    Tensor x({1});
    x[0] = 3.0;
    const Tensor jac = autodiff::finite_difference_jacobian(
        [](const Tensor& v) {
            Tensor out({1});
            out[0] = v[0] * v[0];
            return out;
        },
        x, 1e-4);
    CHECK(jac(0, 0) == doctest::Approx(6.0).epsilon(1e-6));
}

TEST_CASE("finite difference rejects non-positive step") {
    CHECK_THROWS_AS(autodiff::finite_difference_jacobian(
                        [](const Tensor& v) { return v; }, Tensor({1}), 0.0),
                    std::invalid_argument);
}

TEST_CASE("finite difference reports non-finite outputs with the coordinate") {
    Tensor x({2});
    x[0] = 0.0;
    CHECK_THROWS_WITH_AS(autodiff::finite_difference_jacobian(
                             [](const Tensor& v) {
                                 Tensor out({1});
                                 out[0] = 1.0 / v[0];
                                 return out;
                             },
                             x, 1e-30),
                         doctest::Contains("coordinate"), std::runtime_error);
}

TEST_CASE("mlp jacobian assembled row by row equals finite differences") {
    fixtures::TwoLayerMlp mlp(3, 6, 4, 42);
    const Tensor x = fixtures::random_frames(2, 3, 17, 0.8);

    auto f = [&](const Tensor& v) { return mlp.evaluate(v)[1]; };
    const Tensor fd = autodiff::finite_difference_jacobian(f, x, 1e-5);

    Tape tape;
    Var input = tape.leaf(x, true);
    Var out = mlp.build(tape, input, 0)[1];
    const int64_t out_n = out.value().numel();
    Tensor assembled({out_n, x.numel()});
    for (int64_t i = 0; i < out_n; ++i) {
        Tensor seed = Tensor::zeros(out.value().shape());
        seed[i] = 1.0;
        const Tensor row = tape.vjp(out, seed, input);
        for (int64_t j = 0; j < x.numel(); ++j) assembled(i, j) = row[j];
    }
    CHECK(max_rel_error(assembled, fd) < 1e-6);
}

TEST_CASE("backward is deterministic and repeatable on a retained graph") {
    Tape tape;
    Var x = tape.leaf(fixtures::random_frames(4, 4, 33), true);
    fixtures::TwoLayerMlp mlp(4, 8, 4, 5);
    Var out = mlp.build(tape, x, 0)[1];

    Tensor seed_a = Tensor::zeros(out.value().shape());
    seed_a(0, 1) = 1.0;
    Tensor seed_b = Tensor::zeros(out.value().shape());
    seed_b(3, 2) = 1.0;

    const Tensor a1 = tape.vjp(out, seed_a, x);
    const Tensor b1 = tape.vjp(out, seed_b, x);
    // interleave again with the same seeds: repeated calls are independent
    const Tensor a2 = tape.vjp(out, seed_a, x);
    const Tensor b2 = tape.vjp(out, seed_b, x);
    CHECK(a1 == a2);
    CHECK(b1 == b2);
    CHECK_FALSE(a1 == b1);
}

TEST_CASE("every differentiable op matches finite differences over random instances") {
    struct OpCase {
        const char* name;
        GraphBuilder build;
        int64_t rows, cols;
        bool avoid_kink = false;
    };
    const std::vector<OpCase> cases = {
        {"matmul", [](Tape& t, Var x) {
             return autodiff::matmul(x, t.constant(fixtures::random_frames(4, 3, 900)));
         }, 3, 4},
        {"matmul_lhs", [](Tape& t, Var x) {
             return autodiff::matmul(t.constant(fixtures::random_frames(5, 3, 901)), x);
         }, 3, 4},
        {"transpose", [](Tape&, Var x) { return autodiff::transpose(x); }, 3, 4},
        {"add", [](Tape& t, Var x) {
             return autodiff::add(x, t.constant(fixtures::random_frames(3, 4, 902)));
         }, 3, 4},
        {"add_rowvec", [](Tape& t, Var x) {
             return autodiff::add_rowvec(x, t.constant(Tensor::vector({0.1, -0.2, 0.3, 0.4})));
         }, 3, 4},
        {"mul", [](Tape& t, Var x) {
             return autodiff::mul(x, t.constant(fixtures::random_frames(3, 4, 904)));
         }, 3, 4},
        {"scale", [](Tape&, Var x) { return autodiff::scale(x, -1.7); }, 3, 4},
        {"softmax_rows", [](Tape&, Var x) { return autodiff::softmax_rows(x); }, 3, 4},
        {"layer_norm", [](Tape& t, Var x) {
             return autodiff::layer_norm_rows(x, t.constant(Tensor::vector({1.1, 0.9, 1.3, 0.7})),
                                              t.constant(Tensor::vector({0.1, 0.0, -0.2, 0.3})));
         }, 3, 4},
        {"gelu", [](Tape&, Var x) { return autodiff::gelu(x); }, 3, 4},
        {"relu", [](Tape&, Var x) { return autodiff::relu(x); }, 3, 4, true},
        {"slice_rows", [](Tape&, Var x) { return autodiff::slice_rows(x, 1, 3); }, 4, 3},
        {"slice_cols", [](Tape&, Var x) { return autodiff::slice_cols(x, 0, 2); }, 3, 4},
        {"concat_rows", [](Tape& t, Var x) {
             return autodiff::concat_rows({x, t.constant(fixtures::random_frames(2, 4, 905))});
         }, 3, 4},
        {"concat_cols", [](Tape& t, Var x) {
             return autodiff::concat_cols({t.constant(fixtures::random_frames(3, 2, 906)), x});
         }, 3, 4},
        {"position_encoding", [](Tape&, Var x) {
             return autodiff::add_position_encoding(x, 3);
         }, 3, 4},
        {"cross_entropy", [](Tape&, Var x) {
             return autodiff::cross_entropy_mean(x, {1, 0, 3});
         }, 3, 4},
        {"mse", [](Tape& t, Var x) {
             return autodiff::mse_mean(x, t.constant(fixtures::random_frames(3, 4, 907)));
         }, 3, 4},
        {"composite", [](Tape& t, Var x) {
             Var h = autodiff::gelu(autodiff::matmul(
                 x, t.constant(fixtures::random_frames(4, 4, 908))));
             return autodiff::softmax_rows(autodiff::add(h, x));
         }, 3, 4},
    };

    int instances = 0;
    Rng inst_rng(777);
    for (const OpCase& c : cases) {
        CAPTURE(c.name);
        for (int rep = 0; rep < 6; ++rep) {
            Tensor x = fixtures::random_frames(c.rows, c.cols, inst_rng.next_u64());
            if (c.avoid_kink) {
                // keep inputs away from the relu kink so central differences
                // stay valid
                for (int64_t i = 0; i < x.numel(); ++i) {
                    if (std::abs(x[i]) < 1e-2) x[i] = x[i] < 0 ? -0.5 : 0.5;
                }
            }
            const double err = vjp_vs_fd(c.build, x, inst_rng.next_u64(), 2);
            CHECK_MESSAGE(err < 1e-5, c.name << " rep " << rep << " rel err " << err);
            ++instances;
        }
    }
    CHECK(instances >= 100);
}

TEST_CASE("slice and concat round trip preserves values and gradients") {
    Tape tape;
    const Tensor x = fixtures::random_frames(5, 3, 55);
    Var input = tape.leaf(x, true);
    Var rebuilt = autodiff::concat_rows(
        {autodiff::slice_rows(input, 0, 2), autodiff::slice_rows(input, 2, 5)});
    CHECK(rebuilt.value() == x);
    Tensor seed = Tensor::full({5, 3}, 1.0);
    const Tensor g = tape.vjp(rebuilt, seed, input);
    CHECK(g == seed);
}

TEST_CASE("sinusoidal position encoding starts at sin(0)=0 cos(0)=1") {
    const Tensor pe = autodiff::sinusoidal_position_encoding(2, 4, 0);
    CHECK(pe(0, 0) == 0.0);
    CHECK(pe(0, 1) == 1.0);
    CHECK(pe(0, 2) == 0.0);
    CHECK(pe(0, 3) == 1.0);
    // position 1, dim 0: sin(1)
    CHECK(pe(1, 0) == doctest::Approx(std::sin(1.0)));
}
