#include <doctest.h>

#include <stdexcept>

#include <cmath>
#include <vector>

#include "rts/heads.hpp"
#include "rts/losses.hpp"
#include "rts/stochastic.hpp"

using namespace rts::heads;
using rts::diffcore::Graph;
using rts::diffcore::NodeId;
using rts::diffcore::Tensor;
using rts::stochastic::RngStream;

namespace {
ModelParams tiny_params(Variant variant, RngStream& rng) {
    ModelDims dims;
    dims.input_dim = 6;
    dims.hidden_dim = 8;
    dims.embedding_dim = 4;
    dims.num_classes = 5;
    dims.delta = 4;
    return init_params(variant, dims, rng);
}

double norm2(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}
}  // namespace

TEST_CASE("embed produces deterministic unit vectors") {
    RngStream rng(1, 1);
    ModelParams p = tiny_params(Variant::RTS, rng);
    RngStream data(2, 1);
    for (int i = 0; i < 100; ++i) {
        std::vector<double> x(6);
        for (double& v : x) v = data.normal();
        auto y1 = embed(p, x);
        auto y2 = embed(p, x);
        CHECK(y1 == y2);
        CHECK(norm2(y1) == doctest::Approx(1.0).epsilon(1e-9));
    }
    CHECK_THROWS_AS(embed(p, std::vector<double>(3, 0.0)), std::invalid_argument);
}

TEST_CASE("zero-weight network embeds to the normalized bias direction") {
    RngStream rng(1, 1);
    ModelParams p = tiny_params(Variant::Plain, rng);
    for (double& v : p.w1.data) v = 0.0;
    for (double& v : p.w2.data) v = 0.0;
    p.b2.data = {3.0, 0.0, 4.0, 0.0};
    auto y = embed(p, {0.4, 0.1, -0.2, 0.9, 0.0, 0.3});
    CHECK(y[0] == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(y[2] == doctest::Approx(0.8).epsilon(1e-12));
}

TEST_CASE("log scale: zero-initialized head gives v = 1") {
    RngStream rng(3, 1);
    ModelParams p = tiny_params(Variant::RTS, rng);
    std::vector<double> x{0.5, -0.2, 0.1, 0.9, -0.7, 0.3};
    auto z = log_scale(p, x);
    CHECK(z.size() == 4);
    for (double zi : z) CHECK(zi == 0.0);
    for (double vi : scale_vector(p, x)) CHECK(vi == 1.0);
}

TEST_CASE("log scale clamps so v stays inside [e^-8, e^8]") {
    RngStream rng(3, 2);
    ModelParams p = tiny_params(Variant::RTS, rng);
    // positive hidden features by construction: h = tanh(0*x + 1) > 0
    for (double& v : p.w1.data) v = 0.0;
    for (double& v : p.b1.data) v = 1.0;
    std::vector<double> x{1.0, 1.0, 1.0, 1.0, 1.0, 1.0};

    for (double& v : p.wg.data) v = 500.0;  // extreme weights
    for (double vi : scale_vector(p, x))
        CHECK(vi == doctest::Approx(std::exp(8.0)).epsilon(1e-12));
    for (double& v : p.wg.data) v = -500.0;
    for (double vi : scale_vector(p, x))
        CHECK(vi == doctest::Approx(std::exp(-8.0)).epsilon(1e-12));
}

TEST_CASE("log scale width follows the configured dof") {
    RngStream rng(4, 1);
    ModelDims dims;
    dims.input_dim = 6;
    dims.hidden_dim = 8;
    dims.embedding_dim = 4;
    dims.num_classes = 5;
    dims.delta = 16;
    ModelParams p = init_params(Variant::RTS, dims, rng);
    CHECK(log_scale(p, std::vector<double>(6, 0.1)).size() == 16);

    ModelParams relaxed = init_params(Variant::Relaxed, dims, rng);
    CHECK(log_scale(relaxed, std::vector<double>(6, 0.1)).size() == 1);

    ModelParams plain = init_params(Variant::Plain, dims, rng);
    CHECK_THROWS_AS(log_scale(plain, std::vector<double>(6, 0.1)), std::logic_error);
}

TEST_CASE("arcface scores") {
    Tensor centers = Tensor::matrix(3, 2, {1.0, 0.0, 0.0, 1.0, -1.0, 0.0});
    std::vector<double> y{1.0, 0.0};

    // m = 0 reduces to plain scaled cosine, exactly
    auto s0 = arcface_scores(y, 0, centers, 30.0, 0.0);
    CHECK(s0[0] == doctest::Approx(30.0).epsilon(1e-9));
    CHECK(s0[1] == 0.0);
    CHECK(s0[2] == -30.0);

    // cos(theta_c)=1, m=0.5: frozen from direct evaluation
    auto sm = arcface_scores(y, 0, centers, 30.0, 0.5);
    CHECK(sm[0] == doctest::Approx(26.327476856711).epsilon(1e-9));
    CHECK(sm[1] == 0.0);  // non-target rows untouched

    CHECK_THROWS_AS(arcface_scores(y, 3, centers, 30.0, 0.5), std::out_of_range);
    CHECK_THROWS_AS(arcface_scores(y, 0, centers, -1.0, 0.5), std::invalid_argument);
}

TEST_CASE("target score is non-increasing in the margin") {
    RngStream rng(9, 1);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> y(4);
        for (double& v : y) v = rng.normal();
        double n = norm2(y);
        for (double& v : y) v /= n;
        Tensor centers = Tensor::zeros({2, 4});
        double cn = 0.0;
        for (int j = 0; j < 4; ++j) {
            centers.at(0, j) = rng.normal();
            cn += centers.at(0, j) * centers.at(0, j);
        }
        cn = std::sqrt(cn);
        for (int j = 0; j < 4; ++j) centers.at(0, j) /= cn;
        centers.at(1, 0) = 1.0;

        double prev = 1e300;
        double theta0 = std::acos(std::clamp(
            centers.at(0, 0) * y[0] + centers.at(0, 1) * y[1] + centers.at(0, 2) * y[2] +
                centers.at(0, 3) * y[3],
            -1.0, 1.0));
        for (double m = 0.0; theta0 + m <= 3.14159; m += 0.05) {
            double s = arcface_scores(y, 0, centers, 30.0, m)[0];
            CHECK(s <= prev + 1e-12);
            prev = s;
        }
    }
}

TEST_CASE("final logits") {
    std::vector<double> s{2.1, 1.0, 0.6};
    CHECK(final_logits(s, 1.0) == s);
    auto half = final_logits(s, 2.0);
    CHECK(half[0] == doctest::Approx(1.05).epsilon(1e-15));
    CHECK(half[1] == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(half[2] == doctest::Approx(0.3).epsilon(1e-15));
    CHECK_THROWS_AS(final_logits(s, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(final_logits(s, -1.0), std::invalid_argument);

    // argmax preserved for any positive temperature
    for (double t : {0.1, 1.0, 10.0}) {
        auto scaled = final_logits(s, t);
        CHECK(std::max_element(scaled.begin(), scaled.end()) - scaled.begin() == 0);
    }
}

TEST_CASE("softmax of final logits sums to one and flattens with temperature") {
    std::vector<double> s{2.1, 1.0, 0.6};
    for (double t : {0.1, 1.0, 100.0}) {
        auto p = rts::stochastic::softmax(final_logits(s, t));
        double sum = p[0] + p[1] + p[2];
        CHECK(std::abs(sum - 1.0) < 1e-12);
    }
    auto p1 = rts::stochastic::softmax(final_logits(s, 1.0));
    auto p100 = rts::stochastic::softmax(final_logits(s, 100.0));
    CHECK(*std::max_element(p100.begin(), p100.end()) <
          *std::max_element(p1.begin(), p1.end()));
}

TEST_CASE("graph builders agree with forward-only functions") {
    RngStream rng(17, 1);
    ModelParams p = tiny_params(Variant::RTS, rng);
    // give the log-scale head nonzero weights so the paths are non-trivial
    for (double& v : p.wg.data) v = 0.2 * rng.normal();
    RngStream data(18, 1);
    for (int i = 0; i < 25; ++i) {
        std::vector<double> x(6);
        for (double& v : x) v = data.normal();
        int label = static_cast<int>(data.below(5));

        Graph g;
        ParamNodes pn = insert_params(g, p);
        NodeId xn = g.constant(Tensor::vector(x));
        NodeId h = hidden_node(g, pn, xn);
        NodeId y = embed_node(g, pn, h);
        NodeId z = log_scale_node(g, pn, h);
        NodeId scores = arcface_node(g, pn, y, label, 5, 30.0, 0.4);

        auto y_ref = embed(p, x);
        auto z_ref = log_scale(p, x);
        auto s_ref = arcface_scores(y_ref, label, p.centers, 30.0, 0.4);
        for (std::size_t k = 0; k < y_ref.size(); ++k)
            CHECK(g.value(y).data[k] == doctest::Approx(y_ref[k]).epsilon(1e-14));
        for (std::size_t k = 0; k < z_ref.size(); ++k)
            CHECK(g.value(z).data[k] == doctest::Approx(z_ref[k]).epsilon(1e-14));
        for (std::size_t k = 0; k < s_ref.size(); ++k)
            CHECK(g.value(scores).data[k] == doctest::Approx(s_ref[k]).epsilon(1e-12));

        NodeId t = g.constant_scalar(1.7);
        NodeId logits = final_logits_node(g, scores, t);
        auto l_ref = final_logits(s_ref, 1.7);
        for (std::size_t k = 0; k < l_ref.size(); ++k)
            CHECK(g.value(logits).data[k] == doctest::Approx(l_ref[k]).epsilon(1e-12));
    }
}

TEST_CASE("max softmax probability baseline score") {
    RngStream rng(23, 1);
    ModelParams p = tiny_params(Variant::Plain, rng);
    std::vector<double> x{0.3, -0.1, 0.4, 0.2, -0.6, 0.5};
    double mp = max_softmax_prob(p, x, 30.0);
    CHECK(mp > 1.0 / 5.0);
    CHECK(mp <= 1.0);
}
