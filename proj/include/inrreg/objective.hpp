// objective.hpp - similarity metrics, velocity regularizer, distillation loss
// and exact parameter gradients through the unrolled flow.

#pragma once

#include <functional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "inrreg/dynamics.hpp"
#include "inrreg/velocity_net.hpp"
#include "inrreg/volume.hpp"

namespace inrreg {

enum class SimMetric { mse, ncc };

std::string to_string(SimMetric m);
SimMetric metric_from_string(const std::string &s);

struct LossBreakdown {
    double total = 0.0;
    double similarity = 0.0;
    double regularizer = 0.0;
    double distill = 0.0;
    double lambda = 0.0;
};

double mse(const Volume3 &a, const Volume3 &b);

// Pearson correlation; 0 when either input has variance below 1e-12.
double ncc(const Volume3 &a, const Volume3 &b);

// (1/n) sum_i [ mean |v_i|^2 + gamma * mean |grad v_i|^2 ], forward differences
// in unit coordinates. Nodes on the last slab of an axis have no forward
// neighbour along it and contribute nothing for that axis.
double velocity_regularizer(const VelocitySnapshots &snaps, double gamma = 1.0);

// Same value; also writes d(value)/d(snapshot node) into `grad` (resized to match).
double velocity_regularizer(const VelocitySnapshots &snaps, double gamma,
                            std::vector<std::vector<Point3>> &grad);

// A scalar loss of the velocity net parameters that knows how to
// differentiate itself.
class Objective {
public:
    Objective(FlowConfig flow, double lambda, double gamma);
    virtual ~Objective() = default;

    const FlowConfig &flow() const { return flow_; }
    double lambda() const { return lambda_; }
    double gamma() const { return gamma_; }

    LossBreakdown evaluate(const MLPParams &params) const;
    // Throws std::runtime_error naming the step if the adjoint turns non-finite.
    LossBreakdown evaluate(const MLPParams &params, ParamGradient &grad) const;

protected:
    // Loss terms that depend on the displacement. When grad_disp is non-null
    // it receives d(terms)/d(displacement node).
    virtual LossBreakdown displacement_terms(const VectorField3 &displacement,
                                             std::vector<Point3> *grad_disp) const = 0;

private:
    LossBreakdown run(const MLPParams &params, ParamGradient *grad) const;

    FlowConfig flow_;
    double lambda_;
    double gamma_;
};

// Sim(I1 o S, I2) + lambda * R(v); similarity is MSE or 1 - NCC.
class RegistrationObjective final : public Objective {
public:
    RegistrationObjective(Volume3 moving, Volume3 fixed, FlowConfig flow, SimMetric metric,
                          double lambda, double gamma = 1.0);

    const Volume3 &moving() const { return moving_; }
    const Volume3 &fixed() const { return fixed_; }

protected:
    LossBreakdown displacement_terms(const VectorField3 &displacement, std::vector<Point3> *grad_disp) const override;

private:
    Volume3 moving_;
    Volume3 fixed_;
    SimMetric metric_;
};

// mean |S - target|^2 + lambda * R(v).
class DistillationObjective final : public Objective {
public:
    DistillationObjective(VectorField3 target, FlowConfig flow, double lambda, double gamma = 1.0);

protected:
    LossBreakdown displacement_terms(const VectorField3 &displacement, std::vector<Point3> *grad_disp) const override;

private:
    VectorField3 target_;
};

LossBreakdown registration_loss(const MLPParams &params, const Volume3 &moving, const Volume3 &fixed,
                                const FlowConfig &flow, SimMetric metric, double lambda, double gamma = 1.0);

LossBreakdown distillation_loss(const MLPParams &params, const VectorField3 &target, const FlowConfig &flow,
                                double lambda, double gamma = 1.0);

ParamGradient loss_gradient(const Objective &objective, const MLPParams &params);

// Central differences, one parameter at a time. Only for tiny problems.
Eigen::VectorXd finite_diff_gradient(const std::function<double(const Eigen::VectorXd &)> &f,
                                     const Eigen::VectorXd &theta, double eps);
ParamGradient finite_diff_gradient(const Objective &objective, const MLPParams &params, double eps);

} // namespace inrreg
