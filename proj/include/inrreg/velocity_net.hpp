// velocity_net.hpp - coordinate MLP mapping (x, y, z, t) to a velocity.

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "inrreg/volume.hpp"

namespace inrreg {

enum class Activation : std::uint8_t { sine = 0, tanh = 1 };

std::string to_string(Activation a);
Activation activation_from_string(const std::string &s);

struct NetConfig {
    int hidden_width = 64;
    Activation activation = Activation::sine;
    // Multiplies the first layer's pre-activation when activation == sine.
    double sine_frequency = 30.0;
    std::uint64_t seed = 0;

    void validate() const;
    bool operator==(const NetConfig &) const = default;
};

// Three dense layers stored flat, each weight matrix row-major:
//   w1 (H x 4), b1 (H), w2 (H x H), b2 (H), w3 (3 x H), b3 (3).
struct MLPParams {
    NetConfig config;
    Eigen::VectorXd values;

    static std::size_t count_for(int hidden_width);

    int width() const { return config.hidden_width; }
    std::size_t w1_offset() const { return 0; }
    std::size_t b1_offset() const { return 4 * static_cast<std::size_t>(width()); }
    std::size_t w2_offset() const { return 5 * static_cast<std::size_t>(width()); }
    std::size_t b2_offset() const { return w2_offset() + static_cast<std::size_t>(width()) * width(); }
    std::size_t w3_offset() const { return b2_offset() + width(); }
    std::size_t b3_offset() const { return w3_offset() + 3 * static_cast<std::size_t>(width()); }

    // Throws if the value count does not match the config or any value is non-finite.
    void validate() const;
};

struct ParamGradient {
    Eigen::VectorXd values;

    static ParamGradient zeros_like(const MLPParams &p){
        return ParamGradient{Eigen::VectorXd::Zero(p.values.size())};
    }
};

MLPParams init_params(const NetConfig &cfg);

// A net whose output is the constant c everywhere (zero output weights, bias c).
MLPParams constant_velocity_params(const NetConfig &cfg, const Point3 &c);

Point3 forward(const MLPParams &params, const Point3 &p, double t);

std::vector<Point3> forward_batch(const MLPParams &params, std::span<const Point3> points, double t);

// Activations of one batched evaluation, kept for the backward pass. Buffers
// are feature-major: entry (feature f, sample b) lives at f * batch + b.
struct ForwardCache {
    std::size_t batch = 0;
    std::vector<double> input;  // 4 x B
    std::vector<double> a1, d1; // H x B, activation and its derivative w.r.t. the pre-activation
    std::vector<double> a2, d2; // H x B
};

void forward_cached(const MLPParams &params, std::span<const Point3> points, double t,
                    ForwardCache &cache, std::span<Point3> out);

// Accumulates d(loss)/d(params) into `grad` given d(loss)/d(output) per sample,
// and writes d(loss)/d(position) per sample into `grad_points` (time is not
// differentiated).
void backward_cached(const MLPParams &params, const ForwardCache &cache,
                     std::span<const Point3> grad_out, ParamGradient &grad,
                     std::span<Point3> grad_points);

} // namespace inrreg
