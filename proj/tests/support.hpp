// Small helpers shared by the test binaries.

#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <string>
#include <vector>

#include "inrreg/dynamics.hpp"
#include "inrreg/evalsynth.hpp"
#include "inrreg/volume.hpp"

namespace testutil {

using namespace inrreg;

inline Volume3 random_volume(const Index3 &dims, std::uint64_t seed, double lo = 0.0, double hi = 1.0){
    Volume3 v(GridSpec::with_dims(dims));
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(lo, hi);
    for(auto &x : v.data){
        x = u(rng);
    }
    return v;
}

inline VectorField3 random_field(const Index3 &dims, std::uint64_t seed, double scale){
    VectorField3 f(GridSpec::with_dims(dims));
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-scale, scale);
    for(auto &p : f.data){
        p = Point3(u(rng), u(rng), u(rng));
    }
    return f;
}

// Smooth field: a few low-frequency sines.
inline VectorField3 smooth_field(const Index3 &dims, double scale){
    VectorField3 f(GridSpec::with_dims(dims));
    for(std::size_t n = 0; n < f.data.size(); ++n){
        const Index3 ijk = f.grid.unravel(n);
        const Point3 x = node_unit_coords(f.grid, ijk[0], ijk[1], ijk[2]);
        f.data[n] = scale * Point3(std::sin(1.3 * x[1] + 0.2) * std::cos(0.7 * x[2]),
                                   std::sin(0.9 * x[0] - 0.4 * x[2]),
                                   std::cos(1.1 * x[0] + 0.5 * x[1]) - 0.5);
    }
    return f;
}

template <class Fn>
Volume3 volume_from(const Index3 &dims, Fn &&fn){
    Volume3 v(GridSpec::with_dims(dims));
    for(std::size_t n = 0; n < v.data.size(); ++n){
        const Index3 ijk = v.grid.unravel(n);
        v.data[n] = fn(node_unit_coords(v.grid, ijk[0], ijk[1], ijk[2]));
    }
    return v;
}

// v(x) = (k * x0, 0, 0), optionally negated.
class LinearFlow final : public VelocitySource {
public:
    explicit LinearFlow(double k) : k_(k) {}
    void evaluate(std::span<const Point3> pts, double, std::span<Point3> out) const override {
        for(std::size_t i = 0; i < pts.size(); ++i){
            out[i] = Point3(k_ * pts[i][0], 0, 0);
        }
    }

private:
    double k_;
};

class ConstantFlow final : public VelocitySource {
public:
    explicit ConstantFlow(Point3 c) : c_(std::move(c)) {}
    void evaluate(std::span<const Point3> pts, double, std::span<Point3> out) const override {
        for(std::size_t i = 0; i < pts.size(); ++i){
            out[i] = c_;
        }
    }

private:
    Point3 c_;
};

// max_i |a_i - b_i| / max(|a_i|, |b_i|, floor)
inline double max_relative_error(const Eigen::VectorXd &a, const Eigen::VectorXd &b, double floor = 1e-8){
    double worst = 0.0;
    for(Eigen::Index i = 0; i < a.size(); ++i){
        const double d = std::max({std::abs(a[i]), std::abs(b[i]), floor});
        worst = std::max(worst, std::abs(a[i] - b[i]) / d);
    }
    return worst;
}

// Net with the library's initial hidden layers and small random output layer.
inline MLPParams perturbed_net(const NetConfig &cfg, std::uint64_t seed, double scale){
    MLPParams p = init_params(cfg);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-scale, scale);
    for(std::size_t i = p.w3_offset(); i < MLPParams::count_for(cfg.hidden_width); ++i){
        p.values[static_cast<Eigen::Index>(i)] = u(rng);
    }
    return p;
}

// Sets the output bias to a half-cell shift (on an image of `image_dims`) so warped samples sit inside cells, away from the kinks of the
// trilinear interpolant where finite differences are meaningless.
inline void shift_half_cell(MLPParams &p, const Index3 &image_dims){
    for(int a = 0; a < 3; ++a){
        p.values[static_cast<Eigen::Index>(p.b3_offset()) + a] = 1.0 / static_cast<double>(image_dims[a] - 1);
    }
}

// Unit-coordinate centroid of one label.
inline Point3 label_centroid(const LabelMask &m, std::uint16_t label){
    Point3 acc = Point3::Zero();
    std::size_t count = 0;
    for(std::size_t n = 0; n < m.data.size(); ++n){
        if(m.data[n] == label){
            const Index3 ijk = m.grid.unravel(n);
            acc += node_unit_coords(m.grid, ijk[0], ijk[1], ijk[2]);
            ++count;
        }
    }
    return count == 0 ? acc : Point3(acc / static_cast<double>(count));
}

struct BumpCase {
    Phantom phantom;
    VectorField3 S_gt;
    SynthPair pair;
};

// Phantom with a Gaussian bump centred on label 1, pushing along +x.
inline BumpCase bump_case(const Index3 &dims, double amplitude_voxels, double sigma, std::uint64_t seed,
                          int n_blobs = 3){
    BumpCase c;
    c.phantom = make_phantom(PhantomSpec{.dims = dims, .n_blobs = n_blobs, .seed = seed});
    BumpDeformSpec b;
    b.center = label_centroid(c.phantom.labels, 1);
    b.amplitude_voxels = amplitude_voxels;
    b.sigma = sigma;
    c.S_gt = make_bump_deformation(b, dims);
    c.pair = synth_pair(c.phantom, c.S_gt);
    return c;
}

inline std::vector<char> file_bytes(const std::filesystem::path &p){
    std::ifstream is(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string &tag){
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() / ("inrreg_" + tag + "_" + std::to_string(rd()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir(){
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir &) = delete;
    TempDir &operator=(const TempDir &) = delete;
    const std::filesystem::path &path() const { return path_; }
    std::filesystem::path operator/(const std::string &s) const { return path_ / s; }

private:
    std::filesystem::path path_;
};

} // namespace testutil
