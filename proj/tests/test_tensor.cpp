#include <doctest.h>

#include <cmath>

#include "man/tensor.hpp"
#include "test_util.hpp"

using namespace man;

TEST_CASE("matmul identity and hand arithmetic") {
    auto id = tensor(2, 2, {1, 0, 0, 1});
    auto col = tensor(2, 1, {3, 4});
    CHECK(matmul(id, col)->data == std::vector<double>{3, 4});

    auto row = tensor(1, 2, {1, 2});
    CHECK(matmul(row, col)->data == std::vector<double>{11});
}

TEST_CASE("matmul rejects mismatched shapes, naming both") {
    auto a = tensor(3, 4);
    auto b = tensor(5, 2);
    bool threw = false;
    try {
        matmul(a, b);
    } catch (const std::runtime_error& e) {
        threw = true;
        const std::string what = e.what();
        CHECK(what.find("3x4") != std::string::npos);
        CHECK(what.find("5x2") != std::string::npos);
    }
    CHECK(threw);
}

TEST_CASE("matmul gradient of sum equals ones times the other factor") {
    man::Rng rng(11);
    auto a = testutil::rand_tensor(rng, 3, 4, -1, 1, true);
    auto b = testutil::rand_tensor(rng, 4, 2, -1, 1, true);
    backward(sum_all(matmul(a, b)));

    // d sum(AB) / dA = ones(3x2) B^T
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t p = 0; p < 4; ++p) {
            double expect = 0.0;
            for (std::size_t j = 0; j < 2; ++j) expect += b->at(p, j);
            CHECK(a->grad[i * 4 + p] == doctest::Approx(expect).epsilon(1e-12));
        }

    const double err = finite_difference_check(
        [&] { return sum_all(matmul(a, b)); }, {a, b}, 1e-5);
    CHECK(err < 1e-6);
}

TEST_CASE("softmax symmetry and exact exponentials") {
    auto flat = softmax(tensor(1, 3, {0, 0, 0}), 1);
    for (double v : flat->data) CHECK(v == doctest::Approx(1.0 / 3).epsilon(1e-15));

    auto logits = tensor(1, 3, {std::log(1.0), std::log(2.0), std::log(3.0)});
    auto probs = softmax(logits, 1);
    CHECK(probs->data[0] == doctest::Approx(1.0 / 6).epsilon(1e-12));
    CHECK(probs->data[1] == doctest::Approx(2.0 / 6).epsilon(1e-12));
    CHECK(probs->data[2] == doctest::Approx(3.0 / 6).epsilon(1e-12));
}

TEST_CASE("softmax is stabilized against overflow") {
    auto out = softmax(tensor(1, 2, {1000.0, 0.0}), 1);
    CHECK(std::isfinite(out->data[0]));
    CHECK(out->data[0] == doctest::Approx(1.0).epsilon(1e-15));
    // exp(-1000) underflows every 64-bit representable positive value
    CHECK(out->data[1] >= 0.0);
    CHECK(out->data[1] < 1e-300);
    CHECK(out->data[0] + out->data[1] == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("softmax slices sum to one on random input, both axes") {
    man::Rng rng(5);
    auto x = testutil::rand_tensor(rng, 4, 6, -30, 30);
    for (int axis : {0, 1}) {
        auto y = softmax(x, axis);
        const std::size_t slices = axis == 1 ? y->rows : y->cols;
        const std::size_t len = axis == 1 ? y->cols : y->rows;
        for (std::size_t s = 0; s < slices; ++s) {
            double acc = 0.0;
            for (std::size_t i = 0; i < len; ++i) acc += axis == 1 ? y->at(s, i) : y->at(i, s);
            CHECK(acc == doctest::Approx(1.0).epsilon(1e-9));
        }
    }
}

TEST_CASE("scaled_dot_attention single key is identity on V") {
    auto r = tensor(1, 4, {0.3, -0.2, 0.5, 0.9});
    auto out = scaled_dot_attention(r, r, r);
    CHECK(testutil::all_close(out->data, r->data));
}

TEST_CASE("scaled_dot_attention averages identical keys") {
    auto q = tensor(1, 2, {1.0, 0.5});
    auto k = tensor(2, 2, {0.7, -0.3, 0.7, -0.3});
    auto v = tensor(2, 2, {1.0, 2.0, 5.0, 8.0});
    auto out = scaled_dot_attention(q, k, v);
    CHECK(out->data[0] == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(out->data[1] == doctest::Approx(5.0).epsilon(1e-12));
}

TEST_CASE("scaled_dot_attention matches the explicit three-step oracle") {
    man::Rng rng(21);
    auto q = testutil::rand_tensor(rng, 2, 4);
    auto k = testutil::rand_tensor(rng, 3, 4);
    auto v = testutil::rand_tensor(rng, 3, 4);
    auto out = scaled_dot_attention(q, k, v);

    // oracle: scores, row softmax, weighted sum, all in plain doubles
    for (std::size_t i = 0; i < 2; ++i) {
        double scores[3];
        for (std::size_t j = 0; j < 3; ++j) {
            double dot = 0.0;
            for (std::size_t d = 0; d < 4; ++d) dot += q->at(i, d) * k->at(j, d);
            scores[j] = dot / 2.0;  // sqrt(4)
        }
        const double mx = std::max({scores[0], scores[1], scores[2]});
        double denom = 0.0;
        for (double& s : scores) {
            s = std::exp(s - mx);
            denom += s;
        }
        for (std::size_t d = 0; d < 4; ++d) {
            double expect = 0.0;
            for (std::size_t j = 0; j < 3; ++j) expect += scores[j] / denom * v->at(j, d);
            CHECK(out->at(i, d) == doctest::Approx(expect).epsilon(1e-12));
        }
    }
}

TEST_CASE("scaled_dot_attention rejects a fully masked key set") {
    auto q = tensor(1, 2, {1.0, 1.0});
    auto k = tensor(2, 2, {1, 0, 0, 1});
    std::vector<std::uint8_t> mask{0, 0};
    CHECK_THROWS_AS(scaled_dot_attention(q, k, k, &mask), std::runtime_error);
}

TEST_CASE("scaled_dot_attention gives masked keys zero weight") {
    man::Rng rng(31);
    auto q = testutil::rand_tensor(rng, 1, 3);
    auto k = testutil::rand_tensor(rng, 4, 3);
    auto v = testutil::rand_tensor(rng, 4, 3);
    std::vector<std::uint8_t> mask{1, 0, 1, 0};
    auto out = scaled_dot_attention(q, k, v, &mask);
    // oracle over the two surviving keys
    double s0 = 0.0, s2 = 0.0;
    for (std::size_t d = 0; d < 3; ++d) {
        s0 += q->at(0, d) * k->at(0, d);
        s2 += q->at(0, d) * k->at(2, d);
    }
    s0 /= std::sqrt(3.0);
    s2 /= std::sqrt(3.0);
    const double mx = std::max(s0, s2);
    const double w0 = std::exp(s0 - mx), w2 = std::exp(s2 - mx);
    for (std::size_t d = 0; d < 3; ++d) {
        const double expect = (w0 * v->at(0, d) + w2 * v->at(2, d)) / (w0 + w2);
        CHECK(out->at(0, d) == doctest::Approx(expect).epsilon(1e-12));
    }
}

TEST_CASE("mlp_apply zero layer and ReLU definition") {
    auto x = tensor(1, 2, {4.0, -7.0});
    std::vector<MlpLayer> zero_net{{zeros(2, 3), zeros(1, 3), Activation::ReLU}};
    CHECK(mlp_apply(x, zero_net)->data == std::vector<double>{0, 0, 0});

    auto input = tensor(1, 2, {-1.0, 2.0});
    std::vector<MlpLayer> identity_net{
        {tensor(2, 2, {1, 0, 0, 1}), zeros(1, 2), Activation::ReLU}};
    CHECK(mlp_apply(input, identity_net)->data == std::vector<double>{0, 2});
}

TEST_CASE("mlp_apply two-layer gradients match finite differences") {
    man::Rng rng(41);
    auto x = testutil::rand_tensor(rng, 2, 3);
    auto w1 = testutil::rand_tensor(rng, 3, 4, -1, 1, true);
    auto b1 = testutil::rand_tensor(rng, 1, 4, -1, 1, true);
    auto w2 = testutil::rand_tensor(rng, 4, 1, -1, 1, true);
    auto b2 = testutil::rand_tensor(rng, 1, 1, -1, 1, true);
    auto build = [&] {
        std::vector<MlpLayer> net{{w1, b1, Activation::ReLU}, {w2, b2, Activation::Identity}};
        return sum_all(mlp_apply(x, net));
    };
    CHECK(finite_difference_check(build, {w1, b1, w2, b2}, 1e-5) < 1e-6);
}

TEST_CASE("backward of sum gives all-ones gradient") {
    auto x = tensor(2, 3, {1, 2, 3, 4, 5, 6}, true);
    backward(sum_all(x));
    CHECK(x->grad == std::vector<double>(6, 1.0));
}

TEST_CASE("stop_gradient blocks the walk and leaves the other factor intact") {
    man::Rng rng(51);
    auto x = testutil::rand_tensor(rng, 2, 2, -1, 1, true);
    auto y = testutil::rand_tensor(rng, 2, 2, -1, 1, true);
    backward(sum_all(mul(stop_gradient(x), y)));
    CHECK(x->grad.empty());  // never reached by the backward walk
    CHECK(testutil::all_close(y->grad, x->data));
}

TEST_CASE("backward requires a scalar loss and finite value") {
    auto x = tensor(2, 2, {1, 2, 3, 4}, true);
    CHECK_THROWS_AS(backward(add(x, x)), std::runtime_error);
    auto bad = tensor(1, 1, {std::numeric_limits<double>::infinity()}, true);
    CHECK_THROWS_AS(backward(bad), std::runtime_error);
}

TEST_CASE("matmul associativity within 1e-9") {
    man::Rng rng(61);
    auto a = testutil::rand_tensor(rng, 3, 4);
    auto b = testutil::rand_tensor(rng, 4, 5);
    auto c = testutil::rand_tensor(rng, 5, 2);
    auto left = matmul(matmul(a, b), c);
    auto right = matmul(a, matmul(b, c));
    CHECK(testutil::all_close(left->data, right->data, 1e-9));
}

TEST_CASE("finite_difference_check on half squared norm is nearly exact") {
    man::Rng rng(71);
    auto theta = testutil::rand_tensor(rng, 3, 3, -2, 2, true);
    auto build = [&] { return scale(sum_all(mul(theta, theta)), 0.5); };
    CHECK(finite_difference_check(build, {theta}, 1e-5) < 1e-9);
    // gradient of half the squared norm is the parameter itself
    theta->grad.clear();
    backward(build());
    CHECK(testutil::all_close(theta->grad, theta->data, 1e-12));
}

TEST_CASE("softmax cross-entropy gradient matches p minus y") {
    auto logits = tensor(1, 3, {0.2, -1.4, 0.9}, true);
    const std::vector<double> onehot{0, 0, 1};
    auto build = [&] {
        auto p = softmax(logits, 1);
        auto y = tensor(1, 3, onehot);
        return scale(sum_all(mul(y, log_op(p))), -1.0);
    };
    CHECK(finite_difference_check(build, {logits}, 1e-5) < 1e-6);
    logits->grad.clear();
    backward(build());
    auto p = softmax(logits, 1);
    for (std::size_t i = 0; i < 3; ++i)
        CHECK(logits->grad[i] == doctest::Approx(p->data[i] - onehot[i]).epsilon(1e-9));
}

TEST_CASE("gradient check passes for a composed expression of the op set") {
    man::Rng rng(81);
    auto w = testutil::rand_tensor(rng, 4, 4, -0.8, 0.8, true);
    auto g = testutil::rand_tensor(rng, 1, 4, -0.8, 0.8, true);
    auto b = testutil::rand_tensor(rng, 1, 4, -0.8, 0.8, true);
    auto x = testutil::rand_tensor(rng, 3, 4);
    std::vector<std::uint8_t> mask{1, 1, 0};
    auto build = [&] {
        auto h = tanh_op(matmul(x, w));
        auto att = scaled_dot_attention(h, h, sigmoid(h), &mask);
        auto normed = layer_norm(add(att, h), g, b);
        auto probs = softmax(slice_cols(normed, 0, 3), 1);
        return sum_all(mul(probs, clamp(relu(slice_cols(normed, 1, 4)), 0.0, 0.9)));
    };
    CHECK(finite_difference_check(build, {w, g, b}, 1e-5) < 1e-5);
}

TEST_CASE("layer_norm normalizes rows and checks out against finite differences") {
    man::Rng rng(91);
    auto x = testutil::rand_tensor(rng, 3, 5, -2, 2, true);
    auto gain = full(1, 5, 1.0);
    auto bias = zeros(1, 5);
    auto y = layer_norm(x, gain, bias);
    for (std::size_t i = 0; i < 3; ++i) {
        double mean = 0.0, var = 0.0;
        for (std::size_t j = 0; j < 5; ++j) mean += y->at(i, j);
        mean /= 5;
        for (std::size_t j = 0; j < 5; ++j) var += (y->at(i, j) - mean) * (y->at(i, j) - mean);
        CHECK(mean == doctest::Approx(0.0).epsilon(1e-9));
        CHECK(var / 5 == doctest::Approx(1.0).epsilon(1e-6));
    }
    gain->requires_grad = bias->requires_grad = true;
    auto build = [&] { return sum_all(mul(layer_norm(x, gain, bias), x)); };
    CHECK(finite_difference_check(build, {x, gain, bias}, 1e-5) < 1e-5);
}

TEST_CASE("gather_rows accumulates gradients per used row") {
    auto table = tensor(4, 2, {1, 2, 3, 4, 5, 6, 7, 8}, true);
    backward(sum_all(gather_rows(table, {2, 2, 0})));
    CHECK(table->grad == std::vector<double>{1, 1, 0, 0, 2, 2, 0, 0});
    CHECK_THROWS_AS(gather_rows(table, {9}), std::runtime_error);
}

TEST_CASE("NoGradGuard suppresses graph construction") {
    auto x = tensor(1, 2, {1, 2}, true);
    NoGradGuard guard;
    auto y = mul(x, x);
    CHECK_FALSE(y->requires_grad);
    CHECK(y->parents.empty());
}
