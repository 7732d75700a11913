#include <doctest.h>

#include <cmath>
#include <limits>

#include "inrreg/dynamics.hpp"
#include "inrreg/parallel.hpp"
#include "support.hpp"

using namespace inrreg;
using namespace testutil;

namespace {

class NanFlow final : public VelocitySource {
public:
    void evaluate(std::span<const Point3> pts, double, std::span<Point3> out) const override {
        for(std::size_t i = 0; i < pts.size(); ++i){
            out[i] = Point3::Zero();
        }
        out[pts.size() / 2][1] = std::numeric_limits<double>::quiet_NaN();
    }
};

MLPParams small_random_net(int width, std::uint64_t seed){
    MLPParams p = init_params(NetConfig{.hidden_width = width, .seed = seed});
    std::mt19937_64 rng(seed + 100);
    std::uniform_real_distribution<double> u(-0.05, 0.05);
    for(std::size_t i = p.w3_offset(); i < MLPParams::count_for(width); ++i){
        p.values[static_cast<Eigen::Index>(i)] = u(rng);
    }
    return p;
}

} // namespace

TEST_CASE("FlowConfig"){
    const FlowConfig f = FlowConfig::make({4, 5, 6}, 8);
    CHECK(f.dt == 0.125);
    CHECK_NOTHROW(f.validate());
    FlowConfig bad = f;
    bad.dt = 0.1;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    CHECK_THROWS(FlowConfig::make({4, 4, 4}, 0));
    CHECK(step_time(f, 0) == 1.0);
    CHECK(step_time(f, 4) == 0.5);
}

TEST_CASE("euler_step examples"){
    const GridSpec g = GridSpec::with_dims({4, 3, 5});
    const auto pts = node_unit_coords(g);
    SUBCASE("zero-init net leaves positions alone"){
        const MLPParams p = init_params(NetConfig{.hidden_width = 8});
        const StepResult r = euler_step(p, pts, 1.0, 0.25);
        CHECK(r.positions == pts);
        for(const auto &v : r.velocities){
            REQUIRE(v == Point3::Zero());
        }
        CHECK(r.next_t == 0.75);
    }
    SUBCASE("constant flow advances by c dt"){
        const Point3 c(0.2, -0.4, 0.1);
        const StepResult r = euler_step(ConstantFlow(c), pts, 1.0, 0.25);
        for(std::size_t i = 0; i < pts.size(); ++i){
            REQUIRE((r.positions[i] - (pts[i] + 0.25 * c)).norm() < 1e-15);
        }
    }
    SUBCASE("linear flow scales x0 by 1 + k dt"){
        const StepResult r = euler_step(LinearFlow(1.5), pts, 1.0, 0.25);
        for(std::size_t i = 0; i < pts.size(); ++i){
            REQUIRE(r.positions[i][0] == doctest::Approx(pts[i][0] * (1 + 1.5 * 0.25)).epsilon(1e-15));
            REQUIRE(r.positions[i][1] == pts[i][1]);
        }
    }
    SUBCASE("non-finite velocity is reported"){
        CHECK_THROWS_AS(euler_step(NanFlow(), pts, 1.0, 0.25), std::runtime_error);
    }
}

TEST_CASE("rollout: zero net gives zero displacement and snapshots"){
    const MLPParams p = init_params(NetConfig{.hidden_width = 8});
    const Rollout r = rollout(p, FlowConfig::make({5, 4, 3}, 4));
    CHECK(r.snapshots.size() == 4);
    CHECK(r.step_positions.size() == 4);
    for(const auto &d : r.displacement.data){
        REQUIRE(d == Point3::Zero());
    }
    for(const auto &s : r.snapshots){
        for(const auto &v : s.data){
            REQUIRE(v == Point3::Zero());
        }
    }
}

TEST_CASE("rollout: constant flow gives S = c"){
    const Point3 c(0.3, 0.1, -0.2);
    for(const int n : {1, 3, 8}){
        const Rollout r = rollout(ConstantFlow(c), FlowConfig::make({4, 4, 4}, n));
        for(const auto &d : r.displacement.data){
            REQUIRE((d - c).norm() < 1e-14);
        }
    }
}

TEST_CASE("rollout: linear flow closed form"){
    const double k = 1.0;
    for(const int n : {1, 4, 16}){
        const FlowConfig f = FlowConfig::make({7, 3, 3}, n);
        const Rollout r = rollout(LinearFlow(k), f);
        const double factor = std::pow(1 + k * f.dt, n) - 1;
        for(std::size_t i = 0; i < r.displacement.data.size(); ++i){
            const double x = r.step_positions[0][i][0];
            REQUIRE(std::abs(r.displacement.data[i][0] - x * factor) <= 1e-10);
            REQUIRE(r.displacement.data[i][1] == 0.0);
        }
    }
    const Rollout r4 = rollout(LinearFlow(1.0), FlowConfig::make({3, 3, 3}, 4));
    CHECK(r4.displacement.at(2, 0, 0)[0] == doctest::Approx(1.44140625).epsilon(1e-14));
}

TEST_CASE("rollout: displacement equals final minus start and the snapshot sum"){
    const MLPParams p = small_random_net(8, 3);
    const FlowConfig f = FlowConfig::make({5, 6, 4}, 5);
    const Rollout r = rollout(p, f);
    const auto start = node_unit_coords(f.field_grid());
    for(std::size_t i = 0; i < start.size(); ++i){
        REQUIRE(((r.final_positions[i] - start[i]) - r.displacement.data[i]).cwiseAbs().maxCoeff() <= 1e-12);
        Point3 acc = Point3::Zero();
        for(const auto &s : r.snapshots){
            acc += s.data[i] * f.dt;
        }
        REQUIRE((acc - r.displacement.data[i]).cwiseAbs().maxCoeff() <= 1e-12);
    }
    // Each snapshot is the velocity at the particle's position for that step.
    for(int s = 0; s < f.n_steps; ++s){
        const auto v = forward_batch(p, r.step_positions[static_cast<std::size_t>(s)], step_time(f, s));
        for(std::size_t i = 0; i < v.size(); ++i){
            REQUIRE(v[i] == r.snapshots[static_cast<std::size_t>(s)].data[i]);
        }
    }
}

TEST_CASE("rollout: time reversal at first order"){
    const double k = 0.8;
    for(const int n : {2, 8}){
        const FlowConfig f = FlowConfig::make({9, 2, 2}, n);
        const Rollout plus = rollout(LinearFlow(k), f);
        const Rollout minus = rollout(LinearFlow(-k), f);
        const double bound = k * k * f.dt * std::pow(1 + k, n);
        for(std::size_t i = 0; i < plus.displacement.data.size(); ++i){
            REQUIRE((plus.displacement.data[i] + minus.displacement.data[i]).norm() <= bound);
        }
    }
}

TEST_CASE("rollout is deterministic across thread counts"){
    const MLPParams p = small_random_net(16, 5);
    const FlowConfig f = FlowConfig::make({12, 11, 10}, 4);
    set_thread_count(1);
    const Rollout a = rollout(p, f);
    set_thread_count(3);
    const Rollout b = rollout(p, f);
    set_thread_count(1);
    CHECK(a.displacement.data == b.displacement.data);
}

TEST_CASE("partial_displacement"){
    const Point3 c(0.4, 0, 0);
    const Rollout r = rollout(ConstantFlow(c), FlowConfig::make({3, 3, 3}, 4));
    CHECK(partial_displacement(r, 0).data[0] == Point3::Zero());
    CHECK((partial_displacement(r, 2).data[5] - c / 2).norm() < 1e-15);
    CHECK(partial_displacement(r, 4).data == r.displacement.data);
    CHECK_THROWS_AS(partial_displacement(r, 5), std::out_of_range);
    CHECK_THROWS_AS(partial_displacement(r, -1), std::out_of_range);
}

TEST_CASE("intermediate_warp"){
    const Volume3 vol = random_volume({9, 9, 9}, 31);
    const FlowConfig f = FlowConfig::make({4, 4, 4}, 4);
    SUBCASE("k = 0 and zero net leave the volume unchanged"){
        const MLPParams zero = init_params(NetConfig{.hidden_width = 8});
        for(int k = 0; k <= 4; ++k){
            REQUIRE(intermediate_warp(vol, zero, f, k).data == vol.data);
        }
        const MLPParams p = small_random_net(8, 1);
        CHECK(intermediate_warp(vol, p, f, 0).data == vol.data);
    }
    SUBCASE("constant flow: half way gives half the shift"){
        // Two voxels over the whole flow, so k = n/2 is a one-voxel shift.
        const double h = 2.0 / 8.0;
        const MLPParams p = constant_velocity_params(NetConfig{.hidden_width = 4}, Point3(2 * h, 0, 0));
        const Volume3 w = intermediate_warp(vol, p, f, 2);
        for(int k = 0; k < 9; ++k){
            for(int j = 0; j < 9; ++j){
                for(int i = 0; i < 8; ++i){
                    REQUIRE(std::abs(w.at(i, j, k) - vol.at(i + 1, j, k)) <= 1e-5);
                }
            }
        }
    }
    SUBCASE("constant flow on an affine volume, every k"){
        const auto fn = [](const Point3 &x){ return 0.5 + 0.3 * x[0] - 0.2 * x[1] + 0.1 * x[2]; };
        const Volume3 aff = volume_from({17, 17, 17}, fn);
        const Point3 c(0.12, -0.08, 0.2);
        const MLPParams p = constant_velocity_params(NetConfig{.hidden_width = 4}, c);
        for(int k = 0; k <= 4; ++k){
            const Volume3 w = intermediate_warp(aff, p, f, k);
            const Point3 s = c * (static_cast<double>(k) / 4.0);
            for(std::size_t n = 0; n < w.data.size(); ++n){
                const auto ijk = w.grid.unravel(n);
                const Point3 x = node_unit_coords(w.grid, ijk[0], ijk[1], ijk[2]);
                if(((x + s).cwiseAbs().array() > 1.0).any()){
                    continue;
                }
                REQUIRE(std::abs(w.data[n] - fn(x + s)) <= 1e-5);
            }
        }
    }
}
