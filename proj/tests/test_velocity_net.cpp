#include <doctest.h>

#include <cmath>
#include <random>

#include "inrreg/velocity_net.hpp"

using namespace inrreg;

namespace {

MLPParams hand_net(){
    NetConfig cfg{.hidden_width = 1, .activation = Activation::tanh};
    MLPParams p{cfg, Eigen::VectorXd::Zero(static_cast<Eigen::Index>(MLPParams::count_for(1)))};
    p.values[p.w1_offset()] = 1.0;     // layer 1 = [1, 0, 0, 0]
    p.values[p.w2_offset()] = 1.0;     // layer 2 = [1]
    p.values[p.w3_offset()] = 2.0;     // layer 3 = [[2], [0], [0]]
    return p;
}

MLPParams random_net(const NetConfig &cfg, std::uint64_t seed, double scale){
    MLPParams p = init_params(cfg);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-scale, scale);
    for(Eigen::Index i = 0; i < p.values.size(); ++i){
        p.values[i] = u(rng);
    }
    return p;
}

} // namespace

TEST_CASE("parameter count and layout"){
    CHECK(MLPParams::count_for(8) == 9 * 8 + 64 + 3);
    CHECK(MLPParams::count_for(64) == 9 * 64 + 64 * 64 + 3);
    const MLPParams p = init_params(NetConfig{.hidden_width = 5});
    CHECK(p.values.size() == static_cast<Eigen::Index>(MLPParams::count_for(5)));
    CHECK(p.b3_offset() + 3 == MLPParams::count_for(5));
}

TEST_CASE("init_params: zero output layer, seeded"){
    for(const auto act : {Activation::sine, Activation::tanh}){
        const NetConfig cfg{.hidden_width = 16, .activation = act, .seed = 4};
        const MLPParams p = init_params(cfg);
        std::mt19937_64 rng(1);
        std::uniform_real_distribution<double> u(-1, 1);
        for(int n = 0; n < 50; ++n){
            REQUIRE(forward(p, Point3(u(rng), u(rng), u(rng)), 0.5 * (u(rng) + 1)) == Point3::Zero());
        }
        const MLPParams q = init_params(cfg);
        CHECK(p.values == q.values);
        NetConfig other = cfg;
        other.seed = 5;
        const MLPParams r = init_params(other);
        CHECK(p.values.head(4 * 16) != r.values.head(4 * 16));
    }
}

TEST_CASE("forward: hand-set tanh nets"){
    MLPParams p = hand_net();
    SUBCASE("all weights one at the origin"){
        p.values.setZero();
        p.values[p.w1_offset() + 0] = 1;
        p.values[p.w1_offset() + 1] = 1;
        p.values[p.w1_offset() + 2] = 1;
        p.values[p.w1_offset() + 3] = 1;
        p.values[p.w2_offset()] = 1;
        p.values[p.w3_offset() + 0] = 1;
        p.values[p.w3_offset() + 1] = 1;
        p.values[p.w3_offset() + 2] = 1;
        CHECK(forward(p, Point3::Zero(), 0.0) == Point3::Zero());
    }
    SUBCASE("single path"){
        const Point3 v = forward(p, Point3(0.5, 0, 0), 0.0);
        CHECK(v[0] == doctest::Approx(2.0 * std::tanh(std::tanh(0.5))).epsilon(1e-15));
        CHECK(v[1] == 0.0);
        CHECK(v[2] == 0.0);
    }
    SUBCASE("time enters through the fourth input"){
        p.values[p.w1_offset()] = 0.0;
        p.values[p.w1_offset() + 3] = 1.0;
        const Point3 v = forward(p, Point3(0.9, -0.3, 0.2), 0.5);
        CHECK(v[0] == doctest::Approx(2.0 * std::tanh(std::tanh(0.5))).epsilon(1e-15));
    }
}

TEST_CASE("forward: sine frequency applies to the first layer only"){
    NetConfig cfg{.hidden_width = 1, .activation = Activation::sine, .sine_frequency = 3.0};
    MLPParams p{cfg, Eigen::VectorXd::Zero(static_cast<Eigen::Index>(MLPParams::count_for(1)))};
    p.values[p.w1_offset()] = 1.0;
    p.values[p.b1_offset()] = 0.1;
    p.values[p.w2_offset()] = 0.5;
    p.values[p.b2_offset()] = 0.2;
    p.values[p.w3_offset() + 1] = 1.5;
    p.values[p.b3_offset() + 2] = -0.25;
    const double a1 = std::sin(3.0 * (0.4 + 0.1));
    const double a2 = std::sin(0.5 * a1 + 0.2);
    const Point3 v = forward(p, Point3(0.4, 0, 0), 0.0);
    CHECK(v[0] == 0.0);
    CHECK(v[1] == doctest::Approx(1.5 * a2).epsilon(1e-15));
    CHECK(v[2] == -0.25);
}

TEST_CASE("constant_velocity_params"){
    const Point3 c(0.1, -0.2, 0.05);
    const MLPParams p = constant_velocity_params(NetConfig{.hidden_width = 6}, c);
    CHECK(forward(p, Point3(0.3, 0.7, -0.9), 0.2) == c);
    CHECK(forward(p, Point3(-1, 1, 0), 1.0) == c);
}

TEST_CASE("forward_batch equals forward bit for bit"){
    for(const auto act : {Activation::sine, Activation::tanh}){
        const MLPParams p = random_net(NetConfig{.hidden_width = 13, .activation = act}, 9, 0.4);
        std::mt19937_64 rng(2);
        std::uniform_real_distribution<double> u(-1, 1);
        std::vector<Point3> pts(1000);
        for(auto &x : pts){
            x = Point3(u(rng), u(rng), u(rng));
        }
        const auto out = forward_batch(p, pts, 0.375);
        for(std::size_t i = 0; i < pts.size(); ++i){
            REQUIRE(out[i] == forward(p, pts[i], 0.375));
        }
        const auto one = forward_batch(p, std::span<const Point3>(pts.data(), 1), 0.375);
        CHECK(one.size() == 1);
        CHECK(one[0] == forward(p, pts[0], 0.375));
        CHECK(forward_batch(p, {}, 0.375).empty());
        CHECK(forward_batch(p, pts, 0.375) == out);
    }
}

TEST_CASE("validate rejects malformed params"){
    MLPParams p = init_params(NetConfig{.hidden_width = 4});
    CHECK_NOTHROW(p.validate());
    p.values[3] = std::nan("");
    CHECK_THROWS(p.validate());
    MLPParams q = init_params(NetConfig{.hidden_width = 4});
    q.values.conservativeResize(q.values.size() - 1);
    CHECK_THROWS(q.validate());
    CHECK_THROWS(NetConfig{.hidden_width = 0}.validate());
    CHECK_THROWS(NetConfig{.sine_frequency = 0.0}.validate());
}

TEST_CASE("activation names"){
    CHECK(activation_from_string("sine") == Activation::sine);
    CHECK(activation_from_string(to_string(Activation::tanh)) == Activation::tanh);
    CHECK_THROWS_AS(activation_from_string("relu"), std::invalid_argument);
}

TEST_CASE("backward_cached matches finite differences"){
    for(const auto act : {Activation::sine, Activation::tanh}){
        const MLPParams p = random_net(NetConfig{.hidden_width = 5, .activation = act, .sine_frequency = 2.0}, 3, 0.5);
        std::vector<Point3> pts{Point3(0.1, -0.4, 0.3), Point3(-0.7, 0.2, 0.9), Point3(0.5, 0.5, -0.5)};
        std::vector<Point3> gout{Point3(1.0, -0.5, 0.25), Point3(0.3, 0.2, -1.0), Point3(-0.6, 0.1, 0.4)};
        const double t = 0.7;
        const auto scalar = [&](const MLPParams &q, const std::vector<Point3> &xs){
            const auto out = forward_batch(q, xs, t);
            double s = 0;
            for(std::size_t i = 0; i < xs.size(); ++i){
                s += out[i].dot(gout[i]);
            }
            return s;
        };
        ForwardCache cache;
        std::vector<Point3> out(pts.size()), gp(pts.size());
        forward_cached(p, pts, t, cache, out);
        ParamGradient g = ParamGradient::zeros_like(p);
        backward_cached(p, cache, gout, g, gp);

        const double eps = 1e-6;
        for(Eigen::Index i = 0; i < p.values.size(); ++i){
            MLPParams a = p, b = p;
            a.values[i] += eps;
            b.values[i] -= eps;
            const double fd = (scalar(a, pts) - scalar(b, pts)) / (2 * eps);
            REQUIRE(g.values[i] == doctest::Approx(fd).epsilon(1e-6).scale(1.0));
        }
        for(std::size_t n = 0; n < pts.size(); ++n){
            for(int a = 0; a < 3; ++a){
                auto hi = pts, lo = pts;
                hi[n][a] += eps;
                lo[n][a] -= eps;
                const double fd = (scalar(p, hi) - scalar(p, lo)) / (2 * eps);
                REQUIRE(gp[n][a] == doctest::Approx(fd).epsilon(1e-6).scale(1.0));
            }
        }
    }
}
