// evalsynth.cpp - evaluation metrics and synthetic phantoms.

#include "inrreg/evalsynth.hpp"

#include <Eigen/LU>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>
#include <random>
#include <set>
#include <string>
#include <vector>

namespace inrreg {

double dice(const LabelMask &a, const LabelMask &b, std::uint16_t label){
    if(!a.grid.same_dims(b.grid)){
        throw std::invalid_argument("dice: grid dimensions differ");
    }
    std::size_t na = 0, nb = 0, both = 0;
    for(std::size_t i = 0; i < a.data.size(); ++i){
        const bool in_a = a.data[i] == label;
        const bool in_b = b.data[i] == label;
        na += in_a;
        nb += in_b;
        both += in_a && in_b;
    }
    if(na == 0 && nb == 0){
        return 1.0;
    }
    if(na == 0 || nb == 0){
        return 0.0;
    }
    return 2.0 * static_cast<double>(both) / static_cast<double>(na + nb);
}

Volume3 jacobian_determinant(const VectorField3 &S){
    const GridSpec &g = S.grid;
    for(int a = 0; a < 3; ++a){
        if(g.dims[a] < 3){
            throw std::invalid_argument("jacobian_determinant: need at least 3 nodes per axis");
        }
    }
    Volume3 out(g);
    std::array<double, 3> h{};
    for(int a = 0; a < 3; ++a){
        h[a] = 2.0 / static_cast<double>(g.dims[a] - 1);
    }
    for(int k = 0; k < g.dims[2]; ++k){
        for(int j = 0; j < g.dims[1]; ++j){
            for(int i = 0; i < g.dims[0]; ++i){
                const Index3 node{i, j, k};
                Eigen::Matrix3d J = Eigen::Matrix3d::Identity();
                for(int a = 0; a < 3; ++a){
                    Index3 lo = node, hi = node;
                    double span = 2.0 * h[a];
                    if(node[a] == 0){
                        hi[a] += 1;
                        span = h[a];
                    }else if(node[a] == g.dims[a] - 1){
                        lo[a] -= 1;
                        span = h[a];
                    }else{
                        lo[a] -= 1;
                        hi[a] += 1;
                    }
                    // Column a holds d S / d x_a.
                    J.col(a) += (S.at(hi[0], hi[1], hi[2]) - S.at(lo[0], lo[1], lo[2])) / span;
                }
                out.at(i, j, k) = J.determinant();
            }
        }
    }
    return out;
}

double fold_fraction(const Volume3 &det_j){
    const GridSpec &g = det_j.grid;
    std::size_t interior = 0, folded = 0;
    for(int k = 1; k + 1 < g.dims[2]; ++k){
        for(int j = 1; j + 1 < g.dims[1]; ++j){
            for(int i = 1; i + 1 < g.dims[0]; ++i){
                ++interior;
                folded += det_j.at(i, j, k) <= 0.0;
            }
        }
    }
    return interior == 0 ? 0.0 : static_cast<double>(folded) / static_cast<double>(interior);
}

namespace {

Point3 to_voxels(const GridSpec &g, const Point3 &unit_disp){
    Point3 v;
    for(int a = 0; a < 3; ++a){
        v[a] = unit_disp[a] * 0.5 * static_cast<double>(g.dims[a] - 1);
    }
    return v;
}

} // namespace

EndpointError endpoint_error(const VectorField3 &S, const VectorField3 &S_gt){
    if(!S.grid.same_dims(S_gt.grid)){
        throw std::invalid_argument("endpoint_error: grid dimensions differ");
    }
    EndpointError e;
    for(std::size_t i = 0; i < S.data.size(); ++i){
        const double d = to_voxels(S.grid, S.data[i] - S_gt.data[i]).norm();
        e.mean += d;
        e.max = std::max(e.max, d);
    }
    e.mean /= static_cast<double>(S.data.size());
    return e;
}

double mean_magnitude_voxels(const VectorField3 &S, const Index3 &voxel_dims){
    const GridSpec g = GridSpec::with_dims(voxel_dims);
    double acc = 0.0;
    for(const auto &v : S.data){
        acc += to_voxels(g, v).norm();
    }
    return acc / static_cast<double>(S.data.size());
}

double mean_dice(const LabelMask &moving, const LabelMask &fixed, std::map<std::uint16_t, double> *per_label){
    std::set<std::uint16_t> labels(fixed.data.begin(), fixed.data.end());
    labels.erase(0);
    double acc = 0.0;
    for(const auto l : labels){
        const double d = dice(moving, fixed, l);
        acc += d;
        if(per_label != nullptr){
            (*per_label)[l] = d;
        }
    }
    return labels.empty() ? 1.0 : acc / static_cast<double>(labels.size());
}

EvalReport evaluate_registration(const VectorField3 &S, const LabelMask &moving_mask, const LabelMask &fixed_mask,
                                 const VectorField3 *ground_truth){
    const auto t0 = std::chrono::steady_clock::now();
    if(!moving_mask.grid.same_dims(fixed_mask.grid)){
        throw std::invalid_argument("evaluate: moving and fixed masks have different grids");
    }
    EvalReport r;
    const LabelMask warped = warp_mask_nearest(moving_mask, S, fixed_mask.grid);
    r.dice_mean = mean_dice(warped, fixed_mask, &r.dice_per_label);
    r.fold_fraction = fold_fraction(jacobian_determinant(S));
    if(ground_truth != nullptr){
        const VectorField3 on_gt = S.grid.same_dims(ground_truth->grid) ? S : resample_field(S, ground_truth->grid.dims);
        const auto e = endpoint_error(on_gt, *ground_truth);
        r.mean_endpoint_error_voxels = e.mean;
        r.max_endpoint_error_voxels = e.max;
    }
    r.runtime_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return r;
}

void PhantomSpec::validate() const {
    for(int a = 0; a < 3; ++a){
        if(dims[a] < 8){
            throw std::invalid_argument("phantom dims must be >= 8 on every axis");
        }
    }
    if(n_blobs < 1){
        throw std::invalid_argument("phantom needs at least one blob");
    }
    if(!(intensity_range.first < intensity_range.second)){
        throw std::invalid_argument("phantom intensity_range must be increasing");
    }
}

namespace {

struct Blob {
    Point3 center;  // voxel index space
    Point3 radii;   // voxels
    double level = 0.0;
};

} // namespace

Phantom make_phantom(const PhantomSpec &spec){
    spec.validate();
    const GridSpec grid = GridSpec::with_dims(spec.dims);
    const auto [lo, hi] = spec.intensity_range;
    const double range = hi - lo;
    std::mt19937_64 rng(spec.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    const int min_dim = *std::min_element(spec.dims.begin(), spec.dims.end());
    constexpr double edge_width = 1.5; // voxels
    constexpr int attempts = 2000;

    // Greedy placement; if a blob finds no room, start over with smaller radii.
    // The first round is unscaled, so phantoms that fit are unaffected.
    constexpr int rounds = 6;
    std::vector<Blob> blobs;
    bool all_placed = false;
    for(int round = 0; round < rounds && !all_placed; ++round){
        const double scale = 1.0 - 0.08 * round;
        blobs.clear();
        all_placed = true;
        for(int b = 0; b < spec.n_blobs && all_placed; ++b){
            bool placed = false;
            for(int attempt = 0; attempt < attempts && !placed; ++attempt){
                Blob blob;
                for(int a = 0; a < 3; ++a){
                    blob.radii[a] = std::max(2.5, scale * (0.13 + 0.07 * unit(rng)) * spec.dims[a]);
                }
                bool fits = true;
                for(int a = 0; a < 3; ++a){
                    const double margin = blob.radii[a] + 2.0 * edge_width + 1.0;
                    const double span = spec.dims[a] - 1 - 2.0 * margin;
                    if(span < 0.0){
                        fits = false;
                        break;
                    }
                    blob.center[a] = margin + span * unit(rng);
                }
                if(!fits){
                    continue;
                }
                const double rmax = blob.radii.maxCoeff();
                for(const auto &o : blobs){
                    if((o.center - blob.center).norm() < rmax + o.radii.maxCoeff() + 2.0 * edge_width){
                        fits = false;
                        break;
                    }
                }
                if(!fits){
                    continue;
                }
                blob.level = lo + range * (0.45 + 0.55 * (b + unit(rng)) / spec.n_blobs);
                blobs.push_back(blob);
                placed = true;
            }
            all_placed = placed;
        }
    }
    if(!all_placed){
        throw std::invalid_argument("make_phantom: cannot fit " + std::to_string(spec.n_blobs)
                                    + " blobs into a grid with smallest axis " + std::to_string(min_dim));
    }

    // Texture so displacements away from blob edges are observable: one very
    // low frequency product plus a few mid-frequency plane waves.
    std::array<double, 3> phase{};
    for(auto &p : phase){
        p = 2.0 * std::numbers::pi * unit(rng);
    }
    struct Wave {
        Point3 k;
        double phase = 0.0;
    };
    std::array<Wave, 4> waves{};
    std::normal_distribution<double> gauss(0.0, 1.0);
    for(auto &w : waves){
        Point3 d(gauss(rng), gauss(rng), gauss(rng));
        if(d.norm() < 1e-6){
            d = Point3::UnitX();
        }
        w.k = d.normalized() * (6.0 + 4.0 * unit(rng));
        w.phase = 2.0 * std::numbers::pi * unit(rng);
    }

    Phantom out{Volume3(grid), LabelMask(grid)};
    for(int k = 0; k < spec.dims[2]; ++k){
        for(int j = 0; j < spec.dims[1]; ++j){
            for(int i = 0; i < spec.dims[0]; ++i){
                const Point3 x(i, j, k);
                const Point3 u = normalize_coords(grid, x);
                double v = lo + range * (0.05 + 0.1 * (u[0] + 1.0) * 0.5);
                std::uint16_t label = 0;
                for(std::size_t b = 0; b < blobs.size(); ++b){
                    const auto &blob = blobs[b];
                    const double rho = ((x - blob.center).array() / blob.radii.array()).matrix().norm();
                    const double mean_r = blob.radii.mean();
                    const double s = 0.5 * (1.0 - std::tanh((rho - 1.0) * mean_r / edge_width));
                    v += s * (blob.level - v);
                    if(rho < 1.0){
                        label = static_cast<std::uint16_t>(b + 1);
                    }
                }
                const double tex = std::sin(3.0 * u[0] + phase[0]) * std::sin(2.5 * u[1] + phase[1])
                                 * std::sin(2.0 * u[2] + phase[2]);
                double mid = 0.0;
                for(const auto &w : waves){
                    mid += std::sin(w.k.dot(u) + w.phase);
                }
                v += range * (0.05 * tex + 0.03 * mid);
                out.image.at(i, j, k) = std::clamp(v, lo, hi);
                out.labels.at(i, j, k) = label;
            }
        }
    }

    std::vector<std::size_t> counts(blobs.size() + 1, 0);
    for(const auto l : out.labels.data){
        ++counts[l];
    }
    for(std::size_t b = 1; b < counts.size(); ++b){
        if(counts[b] < 32){
            throw std::invalid_argument("make_phantom: blob " + std::to_string(b) + " covers fewer than 32 voxels");
        }
    }
    return out;
}

void BumpDeformSpec::validate() const {
    if(!(amplitude_voxels >= 0.0) || !std::isfinite(amplitude_voxels)){
        throw std::invalid_argument("bump amplitude_voxels must be non-negative");
    }
    if(!(sigma > 0.0) || !std::isfinite(sigma)){
        throw std::invalid_argument("bump sigma must be positive");
    }
    if(std::abs(direction.norm() - 1.0) > 1e-9){
        throw std::invalid_argument("bump direction must be a unit vector");
    }
    if(!center.allFinite()){
        throw std::invalid_argument("bump center must be finite");
    }
}

Point3 bump_amplitude_unit(const BumpDeformSpec &spec, const Index3 &dims){
    Point3 a;
    for(int ax = 0; ax < 3; ++ax){
        a[ax] = spec.amplitude_voxels * spec.direction[ax] * 2.0 / static_cast<double>(dims[ax] - 1);
    }
    return a;
}

double bump_min_jacobian(const BumpDeformSpec &spec, const Index3 &dims){
    // det(I + A g'(x)^T) = 1 - g (A . (x - c)) / sigma^2, minimised at
    // |x - c| = sigma along A: 1 - |A| exp(-1/2) / sigma.
    return 1.0 - bump_amplitude_unit(spec, dims).norm() * std::exp(-0.5) / spec.sigma;
}

VectorField3 make_bump_deformation(const BumpDeformSpec &spec, const Index3 &dims){
    spec.validate();
    const GridSpec grid = GridSpec::with_dims(dims);
    if(bump_min_jacobian(spec, dims) <= 0.0){
        throw FoldingDeformation("bump deformation folds: amplitude too large for sigma");
    }
    const Point3 amp = bump_amplitude_unit(spec, dims);
    const double inv_two_s2 = 1.0 / (2.0 * spec.sigma * spec.sigma);
    VectorField3 out(grid);
    for(int k = 0; k < dims[2]; ++k){
        for(int j = 0; j < dims[1]; ++j){
            for(int i = 0; i < dims[0]; ++i){
                const Point3 x = node_unit_coords(grid, i, j, k);
                out.at(i, j, k) = amp * std::exp(-(x - spec.center).squaredNorm() * inv_two_s2);
            }
        }
    }
    return out;
}

VectorField3 invert_displacement(const VectorField3 &S, int max_iters, double tol){
    VectorField3 out(S.grid);
    for(int k = 0; k < S.grid.dims[2]; ++k){
        for(int j = 0; j < S.grid.dims[1]; ++j){
            for(int i = 0; i < S.grid.dims[0]; ++i){
                const Point3 x = node_unit_coords(S.grid, i, j, k);
                // Solve y + S(y) = x for y; the inverse displacement is y - x.
                Point3 y = x;
                for(int it = 0; it < max_iters; ++it){
                    const Point3 next = x - sample_field_trilinear(S, y);
                    const double change = (next - y).norm();
                    y = next;
                    if(change < tol){
                        break;
                    }
                }
                out.at(i, j, k) = y - x;
            }
        }
    }
    return out;
}

SynthPair synth_pair(const Phantom &phantom, const VectorField3 &S_gt){
    SynthPair p;
    p.fixed = phantom.image;
    p.fixed_mask = phantom.labels;
    p.moving = warp_volume(phantom.image, S_gt, phantom.image.grid);
    p.moving_mask = warp_mask_nearest(phantom.labels, S_gt, phantom.labels.grid);
    p.recovery_target = invert_displacement(S_gt);
    return p;
}

} // namespace inrreg
