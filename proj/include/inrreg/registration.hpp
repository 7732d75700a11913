// registration.hpp - optimization drivers: single-stage INR-LDDMM and the
// coarse-to-fine pipeline with a distillation handoff.

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "inrreg/objective.hpp"

namespace inrreg {

struct OptimConfig {
    double learning_rate = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    int max_iters = 300;
    double plateau_tol = 1e-6;
    int plateau_window = 50;

    void validate() const;
};

struct OptimState {
    MLPParams params;
    Eigen::VectorXd first_moment;
    Eigen::VectorXd second_moment;
    std::int64_t step_count = 0;

    static OptimState fresh(const MLPParams &params);
};

// Bias-corrected Adam. Throws std::invalid_argument on shape mismatch or a
// non-finite gradient entry.
OptimState adam_step(const OptimState &state, const ParamGradient &grad, const OptimConfig &cfg);

struct StageResult {
    VectorField3 displacement;
    MLPParams params;
    std::vector<LossBreakdown> loss_history;
    int iterations_run = 0;
};

// Receives (stage name, 0-based iteration, loss at that iteration).
using LossSink = std::function<void(std::string_view, int, const LossBreakdown &)>;

struct StageHooks {
    std::string name = "stage";
    LossSink sink;
    // Extra stopping rule checked after each recorded loss.
    std::function<bool(const LossBreakdown &)> stop_when;
};

// Thrown when the loss turns non-finite; carries everything recorded so far.
class StageDiverged : public std::runtime_error {
public:
    StageDiverged(const std::string &what, StageResult partial)
        : std::runtime_error(what), partial_(std::move(partial)) {}
    const StageResult &partial() const { return partial_; }

private:
    StageResult partial_;
};

// Gradient + Adam until max_iters, the plateau rule, a zero gradient, or
// hooks.stop_when. Returns the best parameters seen and their displacement.
StageResult optimize_stage(const Objective &objective, const MLPParams &params0, const OptimConfig &cfg,
                           const StageHooks &hooks = {});

StageResult inr_lddmm(const Index3 &field_dims, const Volume3 &moving, const Volume3 &fixed, int n_steps,
                      const MLPParams &params0, const OptimConfig &optim, SimMetric metric, double lambda,
                      double gamma, const StageHooks &hooks = {});

struct RegistrationConfig {
    Index3 coarse_dims{8, 8, 8};
    Index3 fine_dims{16, 16, 16};
    int n_steps = 8;
    SimMetric metric = SimMetric::ncc;
    double lambda = 0.1;
    double gamma = 1.0;
    NetConfig net;
    OptimConfig coarse_optim{.max_iters = 300};
    OptimConfig distill_optim{.max_iters = 300};
    OptimConfig fine_optim{.max_iters = 500};
    std::uint64_t seed = 0;
    // Distillation stops once the distill term falls below this fraction of
    // its starting value.
    double distill_target_ratio = 0.1;

    void validate() const;
    NetConfig seeded_net() const;
};

struct CoarseToFineResult {
    StageResult coarse;
    VectorField3 coarse_upsampled;
    StageResult distill;
    StageResult fine;
    Volume3 coarse_moving;
    Volume3 coarse_fixed;

    const StageResult &final_stage() const { return fine; }
};

// Thrown by coarse_to_fine when any stage diverges; completed stages and the
// failing stage's partial history are kept.
class PipelineDiverged : public std::runtime_error {
public:
    PipelineDiverged(const std::string &what, CoarseToFineResult partial)
        : std::runtime_error(what), partial_(std::move(partial)) {}
    const CoarseToFineResult &partial() const { return partial_; }

private:
    CoarseToFineResult partial_;
};

// Working resolution of the coarse stage: min(image dims, 2 * coarse dims) per axis.
Index3 coarse_image_dims(const Index3 &image_dims, const Index3 &coarse_dims);

CoarseToFineResult coarse_to_fine(const RegistrationConfig &cfg, const Volume3 &moving, const Volume3 &fixed,
                                  const LossSink &sink = {});

// Single-stage baseline at the fine density from zero-init parameters.
StageResult fine_only(const RegistrationConfig &cfg, const Volume3 &moving, const Volume3 &fixed, int iterations,
                      const LossSink &sink = {});

Volume3 apply_final(const Volume3 &moving, const VectorField3 &S_f);

} // namespace inrreg
