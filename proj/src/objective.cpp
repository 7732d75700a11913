// objective.cpp - similarity metrics, velocity regularizer, distillation loss
// and exact parameter gradients through the unrolled flow.
//
// The gradient is a hand-written adjoint of the forward model:
//   p_0 = grid node, p_i = p_{i-1} + f(p_{i-1}, t_i) dt, S = p_n - p_0.
// The adjoint of p runs backwards through the steps, picking up the direct
// regularizer sensitivity of each velocity on the way.

#include "inrreg/objective.hpp"

#include <cmath>
#include <stdexcept>

#include "inrreg/parallel.hpp"

namespace inrreg {

std::string to_string(SimMetric m){
    return m == SimMetric::mse ? "mse" : "ncc";
}

SimMetric metric_from_string(const std::string &s){
    if(s == "mse" || s == "MSE"){
        return SimMetric::mse;
    }
    if(s == "ncc" || s == "NCC"){
        return SimMetric::ncc;
    }
    throw std::invalid_argument("unknown similarity metric '" + s + "' (expected mse or ncc)");
}

namespace {

void require_same_grid(const GridSpec &a, const GridSpec &b, const char *what){
    if(!a.same_dims(b)){
        throw std::invalid_argument(std::string(what) + ": grid dimensions differ");
    }
}

struct Moments {
    double mean_a = 0.0, mean_b = 0.0;
    double var_a = 0.0, var_b = 0.0, cov = 0.0;
};

Moments moments(const std::vector<double> &a, const std::vector<double> &b){
    Moments m;
    const auto n = static_cast<double>(a.size());
    for(std::size_t i = 0; i < a.size(); ++i){
        m.mean_a += a[i];
        m.mean_b += b[i];
    }
    m.mean_a /= n;
    m.mean_b /= n;
    for(std::size_t i = 0; i < a.size(); ++i){
        const double da = a[i] - m.mean_a;
        const double db = b[i] - m.mean_b;
        m.var_a += da * da;
        m.var_b += db * db;
        m.cov += da * db;
    }
    m.var_a /= n;
    m.var_b /= n;
    m.cov /= n;
    return m;
}

constexpr double kMinVariance = 1e-12;

double ncc_of(const Moments &m){
    if(m.var_a < kMinVariance || m.var_b < kMinVariance){
        return 0.0;
    }
    return m.cov / std::sqrt(m.var_a * m.var_b);
}

} // namespace

double mse(const Volume3 &a, const Volume3 &b){
    require_same_grid(a.grid, b.grid, "mse");
    double acc = 0.0;
    for(std::size_t i = 0; i < a.data.size(); ++i){
        const double d = a.data[i] - b.data[i];
        acc += d * d;
    }
    return acc / static_cast<double>(a.data.size());
}

double ncc(const Volume3 &a, const Volume3 &b){
    require_same_grid(a.grid, b.grid, "ncc");
    return ncc_of(moments(a.data, b.data));
}

namespace {

double regularizer_impl(const VelocitySnapshots &snaps, double gamma, std::vector<std::vector<Point3>> *grad){
    if(snaps.empty()){
        throw std::invalid_argument("velocity_regularizer: empty snapshot list");
    }
    const double n = static_cast<double>(snaps.size());
    const GridSpec &g = snaps.front().grid;
    const double nodes = static_cast<double>(g.node_count());
    std::array<double, 3> inv_h2{};
    for(int a = 0; a < 3; ++a){
        const double h = 2.0 / static_cast<double>(g.dims[a] - 1);
        inv_h2[a] = 1.0 / (h * h);
    }
    const std::array<std::size_t, 3> stride{1, static_cast<std::size_t>(g.dims[0]),
                                            static_cast<std::size_t>(g.dims[0]) * g.dims[1]};
    const double scale = 1.0 / (n * nodes);

    if(grad != nullptr){
        grad->assign(snaps.size(), std::vector<Point3>(g.node_count(), Point3::Zero()));
    }
    double total = 0.0;
    for(std::size_t s = 0; s < snaps.size(); ++s){
        const auto &v = snaps[s].data;
        if(!snaps[s].grid.same_dims(g)){
            throw std::invalid_argument("velocity_regularizer: snapshot grids differ");
        }
        double value = 0.0;
        double smooth = 0.0;
        for(std::size_t idx = 0; idx < v.size(); ++idx){
            value += v[idx].squaredNorm();
        }
        if(gamma != 0.0){
            for(int k = 0; k < g.dims[2]; ++k){
                for(int j = 0; j < g.dims[1]; ++j){
                    for(int i = 0; i < g.dims[0]; ++i){
                        const Index3 node{i, j, k};
                        const std::size_t idx = g.linear(i, j, k);
                        for(int a = 0; a < 3; ++a){
                            if(node[a] + 1 >= g.dims[a]){
                                continue;
                            }
                            const Point3 d = v[idx + stride[a]] - v[idx];
                            smooth += d.squaredNorm() * inv_h2[a];
                            if(grad != nullptr){
                                const Point3 gd = (2.0 * gamma * scale * inv_h2[a]) * d;
                                (*grad)[s][idx + stride[a]] += gd;
                                (*grad)[s][idx] -= gd;
                            }
                        }
                    }
                }
            }
        }
        if(grad != nullptr){
            for(std::size_t idx = 0; idx < v.size(); ++idx){
                (*grad)[s][idx] += (2.0 * scale) * v[idx];
            }
        }
        total += (value + gamma * smooth) / nodes;
    }
    return total / n;
}

} // namespace

double velocity_regularizer(const VelocitySnapshots &snaps, double gamma){
    return regularizer_impl(snaps, gamma, nullptr);
}

double velocity_regularizer(const VelocitySnapshots &snaps, double gamma, std::vector<std::vector<Point3>> &grad){
    return regularizer_impl(snaps, gamma, &grad);
}

Objective::Objective(FlowConfig flow, double lambda, double gamma)
    : flow_(std::move(flow)), lambda_(lambda), gamma_(gamma){
    flow_.validate();
    if(!std::isfinite(lambda_) || lambda_ < 0.0){
        throw std::invalid_argument("lambda must be finite and non-negative");
    }
    if(!std::isfinite(gamma_) || gamma_ < 0.0){
        throw std::invalid_argument("gamma must be finite and non-negative");
    }
}

LossBreakdown Objective::evaluate(const MLPParams &params) const {
    return run(params, nullptr);
}

LossBreakdown Objective::evaluate(const MLPParams &params, ParamGradient &grad) const {
    return run(params, &grad);
}

LossBreakdown Objective::run(const MLPParams &params, ParamGradient *grad) const {
    const Rollout r = rollout(params, flow_);
    std::vector<Point3> grad_disp;
    LossBreakdown out = displacement_terms(r.displacement, grad != nullptr ? &grad_disp : nullptr);

    std::vector<std::vector<Point3>> grad_vel;
    if(grad != nullptr && lambda_ != 0.0){
        out.regularizer = velocity_regularizer(r.snapshots, gamma_, grad_vel);
        for(auto &step : grad_vel){
            for(auto &g : step){
                g *= lambda_;
            }
        }
    }else{
        out.regularizer = velocity_regularizer(r.snapshots, gamma_);
    }
    out.lambda = lambda_;
    out.total = out.similarity + lambda_ * out.regularizer + out.distill;
    if(grad == nullptr){
        return out;
    }

    const std::size_t nodes = r.displacement.data.size();
    const int n = flow_.n_steps;
    const double dt = flow_.dt;
    std::vector<ParamGradient> partial(chunk_count(nodes), ParamGradient::zeros_like(params));

    parallel_chunks(nodes, [&](std::size_t c, std::size_t begin, std::size_t end){
        const std::size_t B = end - begin;
        ParamGradient &local = partial[c];
        std::vector<Point3> adjoint(grad_disp.begin() + static_cast<std::ptrdiff_t>(begin),
                                    grad_disp.begin() + static_cast<std::ptrdiff_t>(end));
        std::vector<Point3> gout(B), gpos(B);
        ForwardCache cache;
        std::vector<Point3> vel(B);
        for(int i = n - 1; i >= 0; --i){
            const auto &pos = r.step_positions[static_cast<std::size_t>(i)];
            forward_cached(params, std::span<const Point3>(pos).subspan(begin, B), step_time(flow_, i), cache, vel);
            for(std::size_t b = 0; b < B; ++b){
                gout[b] = adjoint[b] * dt;
                if(!grad_vel.empty()){
                    gout[b] += grad_vel[static_cast<std::size_t>(i)][begin + b];
                }
            }
            backward_cached(params, cache, gout, local, gpos);
            for(std::size_t b = 0; b < B; ++b){
                adjoint[b] += gpos[b];
                if(!adjoint[b].allFinite()){
                    throw std::runtime_error("non-finite adjoint at step " + std::to_string(i + 1)
                                             + ", node " + std::to_string(begin + b));
                }
            }
        }
    });

    *grad = ParamGradient::zeros_like(params);
    for(const auto &p : partial){
        grad->values += p.values;
    }
    if(!grad->values.allFinite()){
        throw std::runtime_error("non-finite parameter gradient");
    }
    return out;
}

RegistrationObjective::RegistrationObjective(Volume3 moving, Volume3 fixed, FlowConfig flow, SimMetric metric,
                                             double lambda, double gamma)
    : Objective(std::move(flow), lambda, gamma), moving_(std::move(moving)), fixed_(std::move(fixed)),
      metric_(metric){
    require_same_grid(moving_.grid, fixed_.grid, "registration objective");
}

LossBreakdown RegistrationObjective::displacement_terms(const VectorField3 &S, std::vector<Point3> *grad_disp) const {
    const GridSpec &g = fixed_.grid;
    const GridSpec &mg = moving_.grid;
    const std::size_t voxels = g.node_count();
    std::vector<double> warped(voxels);
    std::vector<Point3> img_grad;
    if(grad_disp != nullptr){
        img_grad.resize(voxels);
    }

    const auto field_stencil = [&](int i, int j, int k){
        const Point3 ci(detail::rescale_index(i, g.dims[0], S.grid.dims[0]),
                        detail::rescale_index(j, g.dims[1], S.grid.dims[1]),
                        detail::rescale_index(k, g.dims[2], S.grid.dims[2]));
        return detail::make_stencil(S.grid, ci);
    };

    std::size_t n = 0;
    for(int k = 0; k < g.dims[2]; ++k){
        for(int j = 0; j < g.dims[1]; ++j){
            for(int i = 0; i < g.dims[0]; ++i, ++n){
                const auto fs = field_stencil(i, j, k);
                Point3 disp = Point3::Zero();
                for(int c = 0; c < 8; ++c){
                    disp += fs.weights[c] * S.data[fs.nodes[c]];
                }
                const Index3 node{i, j, k};
                Point3 ci;
                for(int a = 0; a < 3; ++a){
                    ci[a] = detail::rescale_index(node[a], g.dims[a], mg.dims[a])
                          + disp[a] * 0.5 * static_cast<double>(mg.dims[a] - 1);
                }
                const auto st = detail::make_stencil(mg, ci);
                double v = 0.0;
                for(int c = 0; c < 8; ++c){
                    v += st.weights[c] * moving_.data[st.nodes[c]];
                }
                warped[n] = v;
                if(grad_disp == nullptr){
                    continue;
                }
                Point3 gr = Point3::Zero();
                for(int a = 0; a < 3; ++a){
                    if(!st.axes[a].inside){
                        continue;
                    }
                    const int bit = 1 << a;
                    double d = 0.0;
                    for(int c = 0; c < 8; ++c){
                        if((c & bit) != 0){
                            continue;
                        }
                        double w = 1.0;
                        for(int b = 0; b < 3; ++b){
                            if(b != a){
                                w *= (c & (1 << b)) != 0 ? st.axes[b].frac : 1.0 - st.axes[b].frac;
                            }
                        }
                        d += w * (moving_.data[st.nodes[c | bit]] - moving_.data[st.nodes[c]]);
                    }
                    gr[a] = d * 0.5 * static_cast<double>(mg.dims[a] - 1);
                }
                img_grad[n] = gr;
            }
        }
    }

    LossBreakdown out;
    std::vector<double> dwarped;
    const double inv_n = 1.0 / static_cast<double>(voxels);
    if(metric_ == SimMetric::mse){
        double acc = 0.0;
        for(std::size_t idx = 0; idx < voxels; ++idx){
            const double d = warped[idx] - fixed_.data[idx];
            acc += d * d;
        }
        out.similarity = acc * inv_n;
        if(grad_disp != nullptr){
            dwarped.resize(voxels);
            for(std::size_t idx = 0; idx < voxels; ++idx){
                dwarped[idx] = 2.0 * (warped[idx] - fixed_.data[idx]) * inv_n;
            }
        }
    }else{
        const Moments m = moments(warped, fixed_.data);
        const double r = ncc_of(m);
        out.similarity = 1.0 - r;
        if(grad_disp != nullptr){
            dwarped.assign(voxels, 0.0);
            if(m.var_a >= kMinVariance && m.var_b >= kMinVariance){
                const double inv_sd = 1.0 / std::sqrt(m.var_a * m.var_b);
                for(std::size_t idx = 0; idx < voxels; ++idx){
                    const double a = warped[idx] - m.mean_a;
                    const double b = fixed_.data[idx] - m.mean_b;
                    // d(1 - r)/d(warped)
                    dwarped[idx] = -inv_n * (b * inv_sd - r * a / m.var_a);
                }
            }
        }
    }

    if(grad_disp != nullptr){
        grad_disp->assign(S.data.size(), Point3::Zero());
        n = 0;
        for(int k = 0; k < g.dims[2]; ++k){
            for(int j = 0; j < g.dims[1]; ++j){
                for(int i = 0; i < g.dims[0]; ++i, ++n){
                    if(dwarped[n] == 0.0){
                        continue;
                    }
                    const Point3 gd = dwarped[n] * img_grad[n];
                    const auto fs = field_stencil(i, j, k);
                    for(int c = 0; c < 8; ++c){
                        (*grad_disp)[fs.nodes[c]] += fs.weights[c] * gd;
                    }
                }
            }
        }
    }
    return out;
}

DistillationObjective::DistillationObjective(VectorField3 target, FlowConfig flow, double lambda, double gamma)
    : Objective(std::move(flow), lambda, gamma), target_(std::move(target)){
    if(target_.grid.dims != this->flow().field_dims){
        throw std::invalid_argument("distillation target must lie on the flow's field grid");
    }
}

LossBreakdown DistillationObjective::displacement_terms(const VectorField3 &S, std::vector<Point3> *grad_disp) const {
    const std::size_t nodes = S.data.size();
    const double inv_n = 1.0 / static_cast<double>(nodes);
    LossBreakdown out;
    double acc = 0.0;
    if(grad_disp != nullptr){
        grad_disp->resize(nodes);
    }
    for(std::size_t i = 0; i < nodes; ++i){
        const Point3 d = S.data[i] - target_.data[i];
        acc += d.squaredNorm();
        if(grad_disp != nullptr){
            (*grad_disp)[i] = (2.0 * inv_n) * d;
        }
    }
    out.distill = acc * inv_n;
    return out;
}

LossBreakdown registration_loss(const MLPParams &params, const Volume3 &moving, const Volume3 &fixed,
                                const FlowConfig &flow, SimMetric metric, double lambda, double gamma){
    return RegistrationObjective(moving, fixed, flow, metric, lambda, gamma).evaluate(params);
}

LossBreakdown distillation_loss(const MLPParams &params, const VectorField3 &target, const FlowConfig &flow,
                                double lambda, double gamma){
    return DistillationObjective(target, flow, lambda, gamma).evaluate(params);
}

ParamGradient loss_gradient(const Objective &objective, const MLPParams &params){
    ParamGradient g;
    objective.evaluate(params, g);
    return g;
}

Eigen::VectorXd finite_diff_gradient(const std::function<double(const Eigen::VectorXd &)> &f,
                                     const Eigen::VectorXd &theta, double eps){
    if(!(eps > 0.0)){
        throw std::invalid_argument("finite_diff_gradient: eps must be positive");
    }
    Eigen::VectorXd g(theta.size());
    Eigen::VectorXd probe = theta;
    for(Eigen::Index j = 0; j < theta.size(); ++j){
        probe[j] = theta[j] + eps;
        const double up = f(probe);
        probe[j] = theta[j] - eps;
        const double down = f(probe);
        probe[j] = theta[j];
        g[j] = (up - down) / (2.0 * eps);
    }
    return g;
}

ParamGradient finite_diff_gradient(const Objective &objective, const MLPParams &params, double eps){
    MLPParams probe = params;
    const auto f = [&](const Eigen::VectorXd &theta){
        probe.values = theta;
        return objective.evaluate(probe).total;
    };
    return ParamGradient{finite_diff_gradient(f, params.values, eps)};
}

} // namespace inrreg
