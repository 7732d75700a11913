// registration.cpp - optimization drivers.

#include "inrreg/registration.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace inrreg {

void OptimConfig::validate() const {
    if(!(learning_rate > 0.0) || !std::isfinite(learning_rate)){
        throw std::invalid_argument("learning_rate must be positive");
    }
    if(!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0)){
        throw std::invalid_argument("beta1 and beta2 must lie in (0, 1)");
    }
    if(!(epsilon > 0.0)){
        throw std::invalid_argument("epsilon must be positive");
    }
    if(max_iters < 0){
        throw std::invalid_argument("max_iters must be non-negative");
    }
    if(!(plateau_tol >= 0.0)){
        throw std::invalid_argument("plateau_tol must be non-negative");
    }
    if(plateau_window < 1){
        throw std::invalid_argument("plateau_window must be >= 1");
    }
}

OptimState OptimState::fresh(const MLPParams &params){
    OptimState s;
    s.params = params;
    s.first_moment = Eigen::VectorXd::Zero(params.values.size());
    s.second_moment = Eigen::VectorXd::Zero(params.values.size());
    return s;
}

OptimState adam_step(const OptimState &state, const ParamGradient &grad, const OptimConfig &cfg){
    const auto n = state.params.values.size();
    if(grad.values.size() != n || state.first_moment.size() != n || state.second_moment.size() != n){
        throw std::invalid_argument("adam_step: gradient/moment shape does not match parameters");
    }
    for(Eigen::Index i = 0; i < n; ++i){
        if(!std::isfinite(grad.values[i])){
            throw std::invalid_argument("adam_step: non-finite gradient at parameter " + std::to_string(i));
        }
    }
    OptimState next = state;
    next.step_count = state.step_count + 1;
    const double t = static_cast<double>(next.step_count);
    const double c1 = 1.0 - std::pow(cfg.beta1, t);
    const double c2 = 1.0 - std::pow(cfg.beta2, t);
    for(Eigen::Index i = 0; i < n; ++i){
        const double g = grad.values[i];
        const double m = cfg.beta1 * state.first_moment[i] + (1.0 - cfg.beta1) * g;
        const double v = cfg.beta2 * state.second_moment[i] + (1.0 - cfg.beta2) * g * g;
        next.first_moment[i] = m;
        next.second_moment[i] = v;
        next.params.values[i] -= cfg.learning_rate * (m / c1) / (std::sqrt(v / c2) + cfg.epsilon);
    }
    return next;
}

StageResult optimize_stage(const Objective &objective, const MLPParams &params0, const OptimConfig &cfg,
                           const StageHooks &hooks){
    cfg.validate();
    params0.validate();

    StageResult result;
    result.params = params0;
    MLPParams best = params0;
    double best_total = std::numeric_limits<double>::infinity();
    int since_improvement = 0;

    OptimState state = OptimState::fresh(params0);
    for(int it = 0; it < cfg.max_iters; ++it){
        ParamGradient grad;
        LossBreakdown loss;
        try{
            loss = objective.evaluate(state.params, grad);
        }catch(const std::runtime_error &e){
            result.params = best;
            throw StageDiverged(hooks.name + ": iteration " + std::to_string(it) + ": " + e.what(), result);
        }
        if(!std::isfinite(loss.total)){
            result.params = best;
            throw StageDiverged(hooks.name + ": non-finite loss at iteration " + std::to_string(it), result);
        }
        result.loss_history.push_back(loss);
        result.iterations_run = it + 1;
        if(hooks.sink){
            hooks.sink(hooks.name, it, loss);
        }

        if(loss.total < best_total){
            since_improvement = (best_total - loss.total > cfg.plateau_tol) ? 0 : since_improvement + 1;
            best_total = loss.total;
            best = state.params;
        }else{
            ++since_improvement;
        }

        if(hooks.stop_when && hooks.stop_when(loss)){
            best = state.params;
            break;
        }
        // A zero gradient leaves Adam with nothing to do.
        if(grad.values.isZero(0.0)){
            break;
        }
        if(since_improvement >= cfg.plateau_window){
            break;
        }
        state = adam_step(state, grad, cfg);
    }

    result.params = std::move(best);
    result.displacement = rollout(result.params, objective.flow()).displacement;
    return result;
}

StageResult inr_lddmm(const Index3 &field_dims, const Volume3 &moving, const Volume3 &fixed, int n_steps,
                      const MLPParams &params0, const OptimConfig &optim, SimMetric metric, double lambda,
                      double gamma, const StageHooks &hooks){
    const RegistrationObjective objective(moving, fixed, FlowConfig::make(field_dims, n_steps), metric, lambda, gamma);
    return optimize_stage(objective, params0, optim, hooks);
}

void RegistrationConfig::validate() const {
    GridSpec::with_dims(coarse_dims);
    GridSpec::with_dims(fine_dims);
    for(int a = 0; a < 3; ++a){
        if(coarse_dims[a] > fine_dims[a]){
            throw std::invalid_argument("coarse_dims must not exceed fine_dims on any axis");
        }
    }
    if(n_steps < 1){
        throw std::invalid_argument("n_steps must be >= 1");
    }
    if(!(lambda >= 0.0) || !std::isfinite(lambda)){
        throw std::invalid_argument("lambda must be finite and non-negative");
    }
    if(!(gamma >= 0.0) || !std::isfinite(gamma)){
        throw std::invalid_argument("gamma must be finite and non-negative");
    }
    if(!(distill_target_ratio >= 0.0)){
        throw std::invalid_argument("distill_target_ratio must be non-negative");
    }
    net.validate();
    coarse_optim.validate();
    distill_optim.validate();
    fine_optim.validate();
}

NetConfig RegistrationConfig::seeded_net() const {
    NetConfig n = net;
    n.seed = seed;
    return n;
}

Index3 coarse_image_dims(const Index3 &image_dims, const Index3 &coarse_dims){
    Index3 out{};
    for(int a = 0; a < 3; ++a){
        out[a] = std::min(image_dims[a], 2 * coarse_dims[a]);
    }
    return out;
}

CoarseToFineResult coarse_to_fine(const RegistrationConfig &cfg, const Volume3 &moving, const Volume3 &fixed,
                                  const LossSink &sink){
    cfg.validate();
    if(!moving.grid.same_dims(fixed.grid)){
        throw std::invalid_argument("coarse_to_fine: moving and fixed images must share a grid");
    }
    CoarseToFineResult out;
    const Index3 work = coarse_image_dims(fixed.grid.dims, cfg.coarse_dims);
    out.coarse_moving = downsample_volume(moving, work);
    out.coarse_fixed = downsample_volume(fixed, work);

    const MLPParams zero_init = init_params(cfg.seeded_net());

    StageResult *current = &out.coarse;
    try{
        out.coarse = inr_lddmm(cfg.coarse_dims, out.coarse_moving, out.coarse_fixed, cfg.n_steps, zero_init,
                               cfg.coarse_optim, cfg.metric, cfg.lambda, cfg.gamma, StageHooks{"coarse", sink, {}});

        current = &out.distill;
        out.coarse_upsampled = resample_field(out.coarse.displacement, cfg.fine_dims);

        const DistillationObjective distill(out.coarse_upsampled, FlowConfig::make(cfg.fine_dims, cfg.n_steps),
                                            cfg.lambda, cfg.gamma);
        std::optional<double> initial_distill;
        StageHooks distill_hooks{"distill", sink, [&](const LossBreakdown &l){
            if(!initial_distill){
                initial_distill = l.distill;
            }
            return l.distill <= cfg.distill_target_ratio * *initial_distill;
        }};
        out.distill = optimize_stage(distill, zero_init, cfg.distill_optim, distill_hooks);

        current = &out.fine;
        out.fine = inr_lddmm(cfg.fine_dims, moving, fixed, cfg.n_steps, out.distill.params, cfg.fine_optim, cfg.metric,
                             cfg.lambda, cfg.gamma, StageHooks{"fine", sink, {}});
    }catch(const StageDiverged &e){
        *current = e.partial();
        throw PipelineDiverged(e.what(), std::move(out));
    }
    return out;
}

StageResult fine_only(const RegistrationConfig &cfg, const Volume3 &moving, const Volume3 &fixed, int iterations,
                      const LossSink &sink){
    cfg.validate();
    OptimConfig optim = cfg.fine_optim;
    optim.max_iters = iterations;
    return inr_lddmm(cfg.fine_dims, moving, fixed, cfg.n_steps, init_params(cfg.seeded_net()), optim, cfg.metric,
                     cfg.lambda, cfg.gamma, StageHooks{"fine_only", sink, {}});
}

Volume3 apply_final(const Volume3 &moving, const VectorField3 &S_f){
    return warp_volume(moving, S_f, moving.grid);
}

} // namespace inrreg
