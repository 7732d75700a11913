// volume.cpp - regular grids, continuous sampling and warping.

#include "inrreg/volume.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace inrreg {

GridSpec GridSpec::with_dims(const Index3 &dims){
    GridSpec g;
    g.dims = dims;
    g.validate();
    return g;
}

void GridSpec::validate() const {
    for(int a = 0; a < 3; ++a){
        if(dims[a] < 2){
            throw std::invalid_argument("grid dimension " + std::to_string(a) + " is "
                                        + std::to_string(dims[a]) + "; every axis needs at least 2 nodes");
        }
        if(!(spacing[a] > 0.0) || !std::isfinite(spacing[a])){
            throw std::invalid_argument("grid spacing on axis " + std::to_string(a) + " must be positive and finite");
        }
        if(!std::isfinite(origin[a])){
            throw std::invalid_argument("grid origin on axis " + std::to_string(a) + " is not finite");
        }
    }
}

Index3 GridSpec::unravel(std::size_t idx) const {
    const auto nx = static_cast<std::size_t>(dims[0]);
    const auto ny = static_cast<std::size_t>(dims[1]);
    return {static_cast<int>(idx % nx), static_cast<int>((idx / nx) % ny), static_cast<int>(idx / (nx * ny))};
}

Point3 normalize_coords(const GridSpec &grid, const Point3 &voxel_index){
    Point3 out;
    for(int a = 0; a < 3; ++a){
        out[a] = 2.0 * voxel_index[a] / static_cast<double>(grid.dims[a] - 1) - 1.0;
    }
    return out;
}

Point3 denormalize_coords(const GridSpec &grid, const Point3 &unit_point){
    return detail::continuous_index(grid, unit_point);
}

Point3 node_unit_coords(const GridSpec &grid, int i, int j, int k){
    return normalize_coords(grid, Point3(i, j, k));
}

std::vector<Point3> node_unit_coords(const GridSpec &grid){
    std::vector<Point3> out(grid.node_count());
    std::size_t n = 0;
    for(int k = 0; k < grid.dims[2]; ++k){
        for(int j = 0; j < grid.dims[1]; ++j){
            for(int i = 0; i < grid.dims[0]; ++i){
                out[n++] = node_unit_coords(grid, i, j, k);
            }
        }
    }
    return out;
}

namespace detail {

AxisStencil axis_stencil(double ci, int dim){
    AxisStencil s;
    const double last = static_cast<double>(dim - 1);
    if(ci < 0.0){
        s.lo = 0;
        s.hi = 1;
        s.frac = 0.0;
        s.inside = false;
        return s;
    }
    if(ci > last){
        s.lo = dim - 2;
        s.hi = dim - 1;
        s.frac = 1.0;
        s.inside = false;
        return s;
    }
    // Snap round-off from unit <-> index conversion so nodes reproduce exactly.
    const double r = std::round(ci);
    if(std::abs(ci - r) <= 1e-12 * std::max(1.0, last)){
        ci = r;
    }
    int c = static_cast<int>(std::ceil(ci)) - 1;
    c = std::clamp(c, 0, dim - 2);
    s.lo = c;
    s.hi = c + 1;
    s.frac = ci - static_cast<double>(c);
    return s;
}

Point3 continuous_index(const GridSpec &grid, const Point3 &p){
    Point3 out;
    for(int a = 0; a < 3; ++a){
        out[a] = (p[a] + 1.0) * 0.5 * static_cast<double>(grid.dims[a] - 1);
    }
    return out;
}

double rescale_index(int idx, int from_dim, int to_dim){
    return static_cast<double>(idx) * static_cast<double>(to_dim - 1) / static_cast<double>(from_dim - 1);
}

Stencil3 make_stencil(const GridSpec &grid, const Point3 &ci){
    Stencil3 st;
    for(int a = 0; a < 3; ++a){
        st.axes[a] = axis_stencil(ci[a], grid.dims[a]);
    }
    const auto &ax = st.axes[0];
    const auto &ay = st.axes[1];
    const auto &az = st.axes[2];
    for(int c = 0; c < 8; ++c){
        const bool bx = (c & 1) != 0;
        const bool by = (c & 2) != 0;
        const bool bz = (c & 4) != 0;
        st.weights[c] = (bx ? ax.frac : 1.0 - ax.frac)
                      * (by ? ay.frac : 1.0 - ay.frac)
                      * (bz ? az.frac : 1.0 - az.frac);
        st.nodes[c] = grid.linear(bx ? ax.hi : ax.lo, by ? ay.hi : ay.lo, bz ? az.hi : az.lo);
    }
    return st;
}

} // namespace detail

namespace {

double interpolate(const Volume3 &vol, const Point3 &ci){
    const auto st = detail::make_stencil(vol.grid, ci);
    double v = 0.0;
    for(int c = 0; c < 8; ++c){
        v += st.weights[c] * vol.data[st.nodes[c]];
    }
    return v;
}

Point3 interpolate(const VectorField3 &field, const Point3 &ci){
    const auto st = detail::make_stencil(field.grid, ci);
    Point3 v = Point3::Zero();
    for(int c = 0; c < 8; ++c){
        v += st.weights[c] * field.data[st.nodes[c]];
    }
    return v;
}

int nearest_index(double ci, int dim){
    const double clamped = std::clamp(ci, 0.0, static_cast<double>(dim - 1));
    return static_cast<int>(std::floor(clamped + 0.5));
}

// Continuous index on `target` for the node (i,j,k) of `source` shifted by a
// unit-coordinate displacement.
Point3 displaced_index(const GridSpec &source, const GridSpec &target, const Index3 &node, const Point3 &disp){
    Point3 ci;
    for(int a = 0; a < 3; ++a){
        ci[a] = detail::rescale_index(node[a], source.dims[a], target.dims[a])
              + disp[a] * 0.5 * static_cast<double>(target.dims[a] - 1);
    }
    return ci;
}

Point3 field_at_node(const VectorField3 &S, const GridSpec &out_grid, const Index3 &node){
    return interpolate(S, displaced_index(out_grid, S.grid, node, Point3::Zero()));
}

} // namespace

double sample_trilinear(const Volume3 &vol, const Point3 &p){
    return interpolate(vol, detail::continuous_index(vol.grid, p));
}

Point3 sample_field_trilinear(const VectorField3 &field, const Point3 &p){
    return interpolate(field, detail::continuous_index(field.grid, p));
}

Point3 spatial_gradient(const Volume3 &vol, const Point3 &p){
    const auto st = detail::make_stencil(vol.grid, detail::continuous_index(vol.grid, p));
    Point3 g = Point3::Zero();
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
            // Weight of the two other axes for this corner pair.
            double w = 1.0;
            for(int b = 0; b < 3; ++b){
                if(b == a){
                    continue;
                }
                const bool hi = (c & (1 << b)) != 0;
                w *= hi ? st.axes[b].frac : 1.0 - st.axes[b].frac;
            }
            d += w * (vol.data[st.nodes[c | bit]] - vol.data[st.nodes[c]]);
        }
        g[a] = d * 0.5 * static_cast<double>(vol.grid.dims[a] - 1);
    }
    return g;
}

Volume3 warp_volume(const Volume3 &vol, const VectorField3 &S, const GridSpec &out_grid){
    out_grid.validate();
    Volume3 out(out_grid);
    std::size_t n = 0;
    for(int k = 0; k < out_grid.dims[2]; ++k){
        for(int j = 0; j < out_grid.dims[1]; ++j){
            for(int i = 0; i < out_grid.dims[0]; ++i){
                const Index3 node{i, j, k};
                const Point3 disp = field_at_node(S, out_grid, node);
                out.data[n++] = interpolate(vol, displaced_index(out_grid, vol.grid, node, disp));
            }
        }
    }
    return out;
}

LabelMask warp_mask_nearest(const LabelMask &mask, const VectorField3 &S, const GridSpec &out_grid){
    out_grid.validate();
    LabelMask out(out_grid);
    std::size_t n = 0;
    for(int k = 0; k < out_grid.dims[2]; ++k){
        for(int j = 0; j < out_grid.dims[1]; ++j){
            for(int i = 0; i < out_grid.dims[0]; ++i){
                const Index3 node{i, j, k};
                const Point3 disp = field_at_node(S, out_grid, node);
                const Point3 ci = displaced_index(out_grid, mask.grid, node, disp);
                out.data[n++] = mask.at(nearest_index(ci[0], mask.grid.dims[0]),
                                        nearest_index(ci[1], mask.grid.dims[1]),
                                        nearest_index(ci[2], mask.grid.dims[2]));
            }
        }
    }
    return out;
}

VectorField3 resample_field(const VectorField3 &field, const Index3 &new_dims){
    GridSpec g = field.grid;
    for(int a = 0; a < 3; ++a){
        if(new_dims[a] < 2){
            throw std::invalid_argument("resample_field: target dims must be >= 2 on every axis");
        }
        g.spacing[a] = field.grid.spacing[a] * (field.grid.dims[a] - 1) / static_cast<double>(new_dims[a] - 1);
    }
    g.dims = new_dims;
    VectorField3 out(g);
    std::size_t n = 0;
    for(int k = 0; k < new_dims[2]; ++k){
        for(int j = 0; j < new_dims[1]; ++j){
            for(int i = 0; i < new_dims[0]; ++i){
                out.data[n++] = interpolate(field, displaced_index(g, field.grid, {i, j, k}, Point3::Zero()));
            }
        }
    }
    return out;
}

namespace {

// Box filter weights along one axis: input sample i covers [i-0.5, i+0.5];
// output node j covers an interval of one output spacing centered on its
// position in input index space.
std::vector<std::vector<std::pair<int, double>>> box_weights(int in_dim, int out_dim){
    std::vector<std::vector<std::pair<int, double>>> out(out_dim);
    const double ratio = static_cast<double>(in_dim - 1) / static_cast<double>(out_dim - 1);
    const double half = 0.5 * std::max(ratio, 1.0);
    for(int j = 0; j < out_dim; ++j){
        const double c = j * ratio;
        const double lo = std::max(c - half, -0.5);
        const double hi = std::min(c + half, in_dim - 0.5);
        double total = 0.0;
        for(int i = static_cast<int>(std::floor(lo + 0.5)); i <= static_cast<int>(std::ceil(hi - 0.5)); ++i){
            if(i < 0 || i >= in_dim){
                continue;
            }
            const double w = std::min(hi, i + 0.5) - std::max(lo, i - 0.5);
            if(w > 1e-12){
                out[j].emplace_back(i, w);
                total += w;
            }
        }
        for(auto &[i, w] : out[j]){
            w /= total;
        }
    }
    return out;
}

} // namespace

Volume3 downsample_volume(const Volume3 &vol, const Index3 &new_dims){
    for(int a = 0; a < 3; ++a){
        if(new_dims[a] < 2){
            throw std::invalid_argument("downsample_volume: target dims must be >= 2 on every axis");
        }
        if(new_dims[a] > vol.grid.dims[a]){
            throw std::invalid_argument("downsample_volume: target dims exceed source dims");
        }
    }
    if(new_dims == vol.grid.dims){
        return vol;
    }
    GridSpec g = vol.grid;
    g.dims = new_dims;
    for(int a = 0; a < 3; ++a){
        g.spacing[a] = vol.grid.spacing[a] * (vol.grid.dims[a] - 1) / static_cast<double>(new_dims[a] - 1);
    }
    const auto wx = box_weights(vol.grid.dims[0], new_dims[0]);
    const auto wy = box_weights(vol.grid.dims[1], new_dims[1]);
    const auto wz = box_weights(vol.grid.dims[2], new_dims[2]);

    Volume3 out(g);
    for(int k = 0; k < new_dims[2]; ++k){
        for(int j = 0; j < new_dims[1]; ++j){
            for(int i = 0; i < new_dims[0]; ++i){
                double acc = 0.0;
                for(const auto &[z, w_z] : wz[k]){
                    for(const auto &[y, w_y] : wy[j]){
                        for(const auto &[x, w_x] : wx[i]){
                            acc += w_z * w_y * w_x * vol.at(x, y, z);
                        }
                    }
                }
                out.at(i, j, k) = acc;
            }
        }
    }
    return out;
}

} // namespace inrreg
