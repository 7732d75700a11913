// dynamics.cpp - Euler integration of grid particles through a velocity field.

#include "inrreg/dynamics.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "inrreg/parallel.hpp"

namespace inrreg {

FlowConfig FlowConfig::make(const Index3 &field_dims, int n_steps){
    FlowConfig f;
    f.field_dims = field_dims;
    f.n_steps = n_steps;
    f.dt = n_steps > 0 ? 1.0 / n_steps : 0.0;
    f.validate();
    return f;
}

void FlowConfig::validate() const {
    GridSpec::with_dims(field_dims);
    if(n_steps < 1){
        throw std::invalid_argument("n_steps must be >= 1");
    }
    if(!(dt > 0.0) || std::abs(dt * n_steps - 1.0) > 1e-12){
        throw std::invalid_argument("dt * n_steps must equal 1");
    }
}

void NetVelocity::evaluate(std::span<const Point3> points, double t, std::span<Point3> out) const {
    parallel_chunks(points.size(), [&](std::size_t, std::size_t begin, std::size_t end){
        ForwardCache cache;
        forward_cached(params_, points.subspan(begin, end - begin), t, cache, out.subspan(begin, end - begin));
    });
}

double step_time(const FlowConfig &flow, int i){
    return 1.0 - static_cast<double>(i) * flow.dt;
}

StepResult euler_step(const VelocitySource &velocity, std::span<const Point3> positions, double t, double dt){
    StepResult r;
    r.velocities.resize(positions.size());
    velocity.evaluate(positions, t, r.velocities);
    r.positions.resize(positions.size());
    for(std::size_t i = 0; i < positions.size(); ++i){
        const Point3 &v = r.velocities[i];
        if(!v.allFinite()){
            std::ostringstream os;
            os << "non-finite velocity at node " << i << " (position " << positions[i].transpose()
               << ", t = " << t << ")";
            throw std::runtime_error(os.str());
        }
        r.positions[i] = positions[i] + v * dt;
    }
    r.next_t = t - dt;
    return r;
}

StepResult euler_step(const MLPParams &params, std::span<const Point3> positions, double t, double dt){
    return euler_step(NetVelocity(params), positions, t, dt);
}

Rollout rollout(const VelocitySource &velocity, const FlowConfig &flow){
    flow.validate();
    const GridSpec grid = flow.field_grid();
    Rollout r;
    r.step_positions.reserve(static_cast<std::size_t>(flow.n_steps));
    r.snapshots.reserve(static_cast<std::size_t>(flow.n_steps));

    std::vector<Point3> positions = node_unit_coords(grid);
    for(int i = 0; i < flow.n_steps; ++i){
        StepResult step;
        try{
            step = euler_step(velocity, positions, step_time(flow, i), flow.dt);
        }catch(const std::runtime_error &e){
            throw std::runtime_error("rollout step " + std::to_string(i + 1) + ": " + e.what());
        }
        VectorField3 snap(grid);
        snap.data = std::move(step.velocities);
        r.snapshots.push_back(std::move(snap));
        r.step_positions.push_back(std::move(positions));
        positions = std::move(step.positions);
    }

    r.displacement = VectorField3(grid);
    const auto &start = r.step_positions.front();
    for(std::size_t n = 0; n < positions.size(); ++n){
        r.displacement.data[n] = positions[n] - start[n];
    }
    r.final_positions = std::move(positions);
    return r;
}

Rollout rollout(const MLPParams &params, const FlowConfig &flow){
    return rollout(NetVelocity(params), flow);
}

VectorField3 partial_displacement(const Rollout &r, int k){
    const int n = static_cast<int>(r.snapshots.size());
    if(k < 0 || k > n){
        throw std::out_of_range("step " + std::to_string(k) + " outside [0, " + std::to_string(n) + "]");
    }
    VectorField3 out(r.displacement.grid);
    if(k == n){
        return r.displacement;
    }
    const auto &start = r.step_positions.front();
    const auto &pos = r.step_positions[static_cast<std::size_t>(k)];
    for(std::size_t i = 0; i < pos.size(); ++i){
        out.data[i] = pos[i] - start[i];
    }
    return out;
}

Volume3 intermediate_warp(const Volume3 &vol, const Rollout &r, int k){
    const auto partial = partial_displacement(r, k);
    if(k == 0){
        return vol;
    }
    return warp_volume(vol, partial, vol.grid);
}

Volume3 intermediate_warp(const Volume3 &vol, const MLPParams &params, const FlowConfig &flow, int k){
    if(k < 0 || k > flow.n_steps){
        throw std::out_of_range("step " + std::to_string(k) + " outside [0, " + std::to_string(flow.n_steps) + "]");
    }
    return intermediate_warp(vol, rollout(params, flow), k);
}

} // namespace inrreg
