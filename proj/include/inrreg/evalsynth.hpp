// evalsynth.hpp - overlap / folding / endpoint metrics and synthetic phantoms
// with analytically known deformations.

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <utility>

#include "inrreg/volume.hpp"

namespace inrreg {

struct EvalReport {
    std::map<std::uint16_t, double> dice_per_label;
    double dice_mean = 0.0;
    double fold_fraction = 0.0;
    std::optional<double> mean_endpoint_error_voxels;
    std::optional<double> max_endpoint_error_voxels;
    double runtime_seconds = 0.0;
};

// 2|A ∩ B| / (|A| + |B|) for one label; 1 if both are empty, 0 if exactly one is.
double dice(const LabelMask &a, const LabelMask &b, std::uint16_t label);

// det(I + grad S) per node; central differences in unit coordinates, one-sided
// on the boundary. Requires at least 3 nodes per axis.
Volume3 jacobian_determinant(const VectorField3 &S);

// Fraction of nodes with det <= 0, ignoring the one-node boundary shell.
double fold_fraction(const Volume3 &det_j);

struct EndpointError {
    double mean = 0.0;
    double max = 0.0;
};

// |S - S_gt| converted to voxels of the shared grid.
EndpointError endpoint_error(const VectorField3 &S, const VectorField3 &S_gt);

// Mean magnitude of a displacement field, in voxels of a grid with `voxel_dims`
// (usually the image the field warps).
double mean_magnitude_voxels(const VectorField3 &S, const Index3 &voxel_dims);

// Warps the moving mask by S onto the fixed mask's grid and scores it. The
// ground-truth field, when given, is compared after resampling S onto its grid.
EvalReport evaluate_registration(const VectorField3 &S, const LabelMask &moving_mask, const LabelMask &fixed_mask,
                                 const VectorField3 *ground_truth = nullptr);

// Mean Dice over the non-background labels present in `fixed`.
double mean_dice(const LabelMask &moving, const LabelMask &fixed, std::map<std::uint16_t, double> *per_label = nullptr);

struct PhantomSpec {
    Index3 dims{64, 64, 64};
    int n_blobs = 3;
    std::pair<double, double> intensity_range{0.0, 1.0};
    std::uint64_t seed = 0;

    void validate() const;
};

struct Phantom {
    Volume3 image;
    LabelMask labels;
};

// Throws std::invalid_argument when the blobs cannot be placed.
Phantom make_phantom(const PhantomSpec &spec);

struct BumpDeformSpec {
    Point3 center = Point3::Zero();
    double amplitude_voxels = 8.0;
    Point3 direction = Point3::UnitX();
    double sigma = 0.4;

    void validate() const;
};

class FoldingDeformation : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Peak displacement in unit coordinates for a spec on a grid of `dims`.
Point3 bump_amplitude_unit(const BumpDeformSpec &spec, const Index3 &dims);

// Smallest det(I + grad S) of the continuous bump; > 0 for accepted specs.
double bump_min_jacobian(const BumpDeformSpec &spec, const Index3 &dims);

// Throws FoldingDeformation if the bump could fold.
VectorField3 make_bump_deformation(const BumpDeformSpec &spec, const Index3 &dims);

struct SynthPair {
    Volume3 moving;
    Volume3 fixed;
    LabelMask moving_mask;
    LabelMask fixed_mask;
    // Displacement that registers moving onto fixed exactly: the inverse of S_gt.
    VectorField3 recovery_target;
};

SynthPair synth_pair(const Phantom &phantom, const VectorField3 &S_gt);

// x + S(x) inverted by fixed-point iteration at every node of S's grid.
VectorField3 invert_displacement(const VectorField3 &S, int max_iters = 200, double tol = 1e-13);

} // namespace inrreg
