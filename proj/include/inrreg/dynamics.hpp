// dynamics.hpp - Euler integration of grid particles through a velocity field.
//
// Particles start on the unit coordinates of a field meshgrid at t = 1 and are
// advanced for n steps with t decreasing by dt = 1/n. Velocities are queried at
// the particles' current positions. The resulting displacement is a pull-back
// field on the starting grid.

#pragma once

#include <span>
#include <vector>

#include "inrreg/velocity_net.hpp"
#include "inrreg/volume.hpp"

namespace inrreg {

struct FlowConfig {
    Index3 field_dims{16, 16, 16};
    int n_steps = 8;
    double dt = 1.0 / 8.0;

    static FlowConfig make(const Index3 &field_dims, int n_steps);
    void validate() const;
    GridSpec field_grid() const { return GridSpec::with_dims(field_dims); }
};

// Entry i holds the velocity of step i+1, keyed by each particle's origin node.
using VelocitySnapshots = std::vector<VectorField3>;

struct Rollout {
    VectorField3 displacement;
    VelocitySnapshots snapshots;
    std::vector<Point3> final_positions;
    // step_positions[i] are the positions at which the velocities of
    // snapshots[i] were evaluated; step_positions[0] is the starting grid.
    std::vector<std::vector<Point3>> step_positions;
};

// Anything that can produce velocities for a batch of positions at time t.
class VelocitySource {
public:
    virtual ~VelocitySource() = default;
    virtual void evaluate(std::span<const Point3> points, double t, std::span<Point3> out) const = 0;
};

class NetVelocity final : public VelocitySource {
public:
    explicit NetVelocity(const MLPParams &params) : params_(params) {}
    void evaluate(std::span<const Point3> points, double t, std::span<Point3> out) const override;

private:
    const MLPParams &params_;
};

struct StepResult {
    std::vector<Point3> positions;
    std::vector<Point3> velocities;
    double next_t = 0.0;
};

// Throws std::runtime_error naming the node when a velocity is non-finite.
StepResult euler_step(const VelocitySource &velocity, std::span<const Point3> positions, double t, double dt);
StepResult euler_step(const MLPParams &params, std::span<const Point3> positions, double t, double dt);

Rollout rollout(const VelocitySource &velocity, const FlowConfig &flow);
Rollout rollout(const MLPParams &params, const FlowConfig &flow);

// Time of step i (0-based): 1 - i * dt.
double step_time(const FlowConfig &flow, int i);

// Displacement accumulated over the first k steps.
VectorField3 partial_displacement(const Rollout &r, int k);

// Warps vol by the partial displacement after k of n steps; k = 0 returns vol.
Volume3 intermediate_warp(const Volume3 &vol, const MLPParams &params, const FlowConfig &flow, int k);
Volume3 intermediate_warp(const Volume3 &vol, const Rollout &r, int k);

} // namespace inrreg
