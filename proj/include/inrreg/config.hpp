// config.hpp - flat "key = value" run configuration.
//
// One assignment per line, '#' starts a comment. Keys use dotted section
// prefixes. Triples are whitespace separated. Unknown keys are errors.
//
//   coarse_dims = 8 8 8          fine_dims = 16 16 16
//   n_steps = 8                  metric = ncc | mse
//   lambda = 0.1                 gamma = 1
//   seed = 0                     distill_target_ratio = 0.1
//   net.hidden_width = 64        net.activation = sine | tanh
//   net.sine_frequency = 30
//   optimizer.<key>              applies to every stage
//   coarse.<key> / distill.<key> / fine.<key>   per-stage override
//     <key> in: lr (or learning_rate), beta1, beta2, epsilon, max_iters,
//               plateau_tol, plateau_window
//
// Stage-specific keys win over optimizer.* regardless of line order.

#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <utility>

#include "inrreg/evalsynth.hpp"
#include "inrreg/registration.hpp"

namespace inrreg {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

RegistrationConfig parse_config(const std::string &text, const std::string &source = "<config>");
RegistrationConfig load_config(const std::filesystem::path &path);

// Writes every key, so the output reloads to an identical config.
std::string format_config(const RegistrationConfig &cfg);

// Synthetic-pair description:
//   phantom.dims, phantom.n_blobs, phantom.intensity_range (two reals),
//   phantom.seed, bump.center (unit triple), bump.amplitude_voxels,
//   bump.direction (normalised on load), bump.sigma
struct SynthSpec {
    PhantomSpec phantom;
    BumpDeformSpec bump;
};

SynthSpec parse_synth_spec(const std::string &text, const std::string &source = "<spec>");
SynthSpec load_synth_spec(const std::filesystem::path &path);

} // namespace inrreg
