// volume.hpp - regular grids, continuous sampling and warping.
//
// All continuous coordinates are "unit coordinates": along each axis, voxel
// index 0 maps to -1 and index (dim-1) maps to +1. Displacement fields store
// offsets in the same units, so a field can be sampled at any density
// independently of the image it warps.

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <vector>

#include <Eigen/Core>

namespace inrreg {

using Index3 = std::array<int, 3>;
using Point3 = Eigen::Vector3d;

struct GridSpec {
    Index3 dims{2, 2, 2};
    std::array<double, 3> spacing{1.0, 1.0, 1.0};
    std::array<double, 3> origin{0.0, 0.0, 0.0};

    static GridSpec with_dims(const Index3 &dims);

    // Throws std::invalid_argument if dims < 2 or spacing <= 0 on any axis.
    void validate() const;

    std::size_t node_count() const {
        return static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
    }
    // x fastest.
    std::size_t linear(int i, int j, int k) const {
        return (static_cast<std::size_t>(k) * dims[1] + j) * dims[0] + i;
    }
    Index3 unravel(std::size_t idx) const;

    bool same_dims(const GridSpec &o) const { return dims == o.dims; }
    bool operator==(const GridSpec &o) const = default;
};

struct Volume3 {
    GridSpec grid;
    std::vector<double> data;

    Volume3() = default;
    explicit Volume3(const GridSpec &g, double fill = 0.0) : grid(g), data(g.node_count(), fill) {}

    double &at(int i, int j, int k) { return data[grid.linear(i, j, k)]; }
    double at(int i, int j, int k) const { return data[grid.linear(i, j, k)]; }
};

struct VectorField3 {
    GridSpec grid;
    std::vector<Point3> data;

    VectorField3() = default;
    explicit VectorField3(const GridSpec &g, const Point3 &fill = Point3::Zero())
        : grid(g), data(g.node_count(), fill) {}

    Point3 &at(int i, int j, int k) { return data[grid.linear(i, j, k)]; }
    const Point3 &at(int i, int j, int k) const { return data[grid.linear(i, j, k)]; }
};

struct LabelMask {
    GridSpec grid;
    std::vector<std::uint16_t> data;

    LabelMask() = default;
    explicit LabelMask(const GridSpec &g, std::uint16_t fill = 0) : grid(g), data(g.node_count(), fill) {}

    std::uint16_t &at(int i, int j, int k) { return data[grid.linear(i, j, k)]; }
    std::uint16_t at(int i, int j, int k) const { return data[grid.linear(i, j, k)]; }
};

// Index <-> unit coordinate maps. Defined for any real input.
Point3 normalize_coords(const GridSpec &grid, const Point3 &voxel_index);
Point3 denormalize_coords(const GridSpec &grid, const Point3 &unit_point);

// Unit coordinates of a grid node.
Point3 node_unit_coords(const GridSpec &grid, int i, int j, int k);
// Unit coordinates of every node, in storage order.
std::vector<Point3> node_unit_coords(const GridSpec &grid);

// Trilinear interpolation with border clamping.
double sample_trilinear(const Volume3 &vol, const Point3 &p);
Point3 sample_field_trilinear(const VectorField3 &field, const Point3 &p);

// Analytic derivative of the trilinear interpolant with respect to unit
// coordinates. Axes whose coordinate lies outside the grid contribute 0
// (the clamped interpolant is flat there).
Point3 spatial_gradient(const Volume3 &vol, const Point3 &p);

// Pull-back warps: out(x) = in(x + S(x)), x ranging over out_grid.
Volume3 warp_volume(const Volume3 &vol, const VectorField3 &S, const GridSpec &out_grid);
LabelMask warp_mask_nearest(const LabelMask &mask, const VectorField3 &S, const GridSpec &out_grid);

VectorField3 resample_field(const VectorField3 &field, const Index3 &new_dims);
Volume3 downsample_volume(const Volume3 &vol, const Index3 &new_dims);

// Helpers shared with the differentiation code in objective.cpp.
namespace detail {

// Interpolation stencil along one axis: lower node, upper node, fraction.
// The cell containing `ci` is chosen with ties going to the lower cell; `inside`
// is false when ci was clamped.
struct AxisStencil {
    int lo = 0;
    int hi = 0;
    double frac = 0.0;
    bool inside = true;
};

AxisStencil axis_stencil(double continuous_index, int dim);

// Continuous index along each axis for a unit point.
Point3 continuous_index(const GridSpec &grid, const Point3 &p);

// Maps a node of `from` to the continuous index on `to` with exact integer
// arithmetic on the scale so identical grids give identical indices.
double rescale_index(int idx, int from_dim, int to_dim);

struct Stencil3 {
    std::array<AxisStencil, 3> axes;
    // Corner weights and linear indices, corner c has bits (x=c&1, y=c&2, z=c&4).
    std::array<double, 8> weights{};
    std::array<std::size_t, 8> nodes{};
};

Stencil3 make_stencil(const GridSpec &grid, const Point3 &continuous_idx);

} // namespace detail

} // namespace inrreg
