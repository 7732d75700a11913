// velocity_net.cpp - coordinate MLP mapping (x, y, z, t) to a velocity.
//
// Every output element is computed by the same scalar operation sequence
// regardless of batch size, so single-sample and batched evaluation agree
// bit-for-bit. Transcendentals go through std::sin / std::tanh for the same
// reason.

#include "inrreg/velocity_net.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace inrreg {

std::string to_string(Activation a){
    return a == Activation::sine ? "sine" : "tanh";
}

Activation activation_from_string(const std::string &s){
    if(s == "sine"){
        return Activation::sine;
    }
    if(s == "tanh"){
        return Activation::tanh;
    }
    throw std::invalid_argument("unknown activation '" + s + "' (expected sine or tanh)");
}

void NetConfig::validate() const {
    if(hidden_width < 1){
        throw std::invalid_argument("hidden_width must be >= 1");
    }
    if(!(sine_frequency > 0.0) || !std::isfinite(sine_frequency)){
        throw std::invalid_argument("sine_frequency must be positive");
    }
}

std::size_t MLPParams::count_for(int h){
    const auto w = static_cast<std::size_t>(h);
    return 4 * w + w + w * w + w + 3 * w + 3;
}

void MLPParams::validate() const {
    config.validate();
    if(static_cast<std::size_t>(values.size()) != count_for(config.hidden_width)){
        throw std::invalid_argument("parameter count does not match hidden_width");
    }
    if(!values.allFinite()){
        throw std::invalid_argument("parameters contain non-finite values");
    }
}

MLPParams init_params(const NetConfig &cfg){
    cfg.validate();
    MLPParams p;
    p.config = cfg;
    p.values = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(MLPParams::count_for(cfg.hidden_width)));

    std::mt19937_64 rng(cfg.seed);
    const auto fill = [&](std::size_t offset, std::size_t count, double bound){
        std::uniform_real_distribution<double> dist(-bound, bound);
        for(std::size_t i = 0; i < count; ++i){
            p.values[static_cast<Eigen::Index>(offset + i)] = dist(rng);
        }
    };

    const auto h = static_cast<std::size_t>(cfg.hidden_width);
    double bound1 = 1.0 / std::sqrt(4.0);
    if(cfg.activation == Activation::sine){
        bound1 /= std::sqrt(4.0);
    }
    const double bound2 = 1.0 / std::sqrt(static_cast<double>(h));
    fill(p.w1_offset(), 4 * h, bound1);
    fill(p.b1_offset(), h, bound1);
    fill(p.w2_offset(), h * h, bound2);
    fill(p.b2_offset(), h, bound2);
    // Layer 3 stays zero: the initial flow is identically zero.
    return p;
}

MLPParams constant_velocity_params(const NetConfig &cfg, const Point3 &c){
    MLPParams p = init_params(cfg);
    for(int a = 0; a < 3; ++a){
        p.values[static_cast<Eigen::Index>(p.b3_offset()) + a] = c[a];
    }
    return p;
}

namespace {

struct Layers {
    const double *w1, *b1, *w2, *b2, *w3, *b3;
    std::size_t h;
};

Layers layers_of(const MLPParams &p){
    const double *base = p.values.data();
    return {base + p.w1_offset(), base + p.b1_offset(), base + p.w2_offset(),
            base + p.b2_offset(), base + p.w3_offset(), base + p.b3_offset(),
            static_cast<std::size_t>(p.width())};
}

// out[r * B + b] = bias[r] + sum_k w[r * K + k] * in[k * B + b]
void dense(const double *w, const double *bias, const double *in, std::size_t rows, std::size_t K,
           std::size_t B, double *out){
    for(std::size_t r = 0; r < rows; ++r){
        double *o = out + r * B;
        const double br = bias[r];
        for(std::size_t b = 0; b < B; ++b){
            o[b] = 0.0;
        }
        for(std::size_t k = 0; k < K; ++k){
            const double wk = w[r * K + k];
            const double *x = in + k * B;
            for(std::size_t b = 0; b < B; ++b){
                o[b] += wk * x[b];
            }
        }
        for(std::size_t b = 0; b < B; ++b){
            o[b] += br;
        }
    }
}

// in-place activation; writes the derivative w.r.t. the raw pre-activation.
void activate(std::vector<double> &z, std::vector<double> &deriv, Activation act, double freq){
    deriv.resize(z.size());
    if(act == Activation::sine){
        for(std::size_t i = 0; i < z.size(); ++i){
            const double u = freq * z[i];
            z[i] = std::sin(u);
            deriv[i] = freq * std::cos(u);
        }
    }else{
        for(std::size_t i = 0; i < z.size(); ++i){
            const double a = std::tanh(z[i]);
            z[i] = a;
            deriv[i] = 1.0 - a * a;
        }
    }
}

} // namespace

void forward_cached(const MLPParams &params, std::span<const Point3> points, double t,
                    ForwardCache &cache, std::span<Point3> out){
    if(out.size() != points.size()){
        throw std::invalid_argument("forward_cached: output span size mismatch");
    }
    const auto L = layers_of(params);
    const std::size_t B = points.size();
    const std::size_t H = L.h;
    cache.batch = B;
    cache.input.resize(4 * B);
    for(std::size_t b = 0; b < B; ++b){
        cache.input[b] = points[b][0];
        cache.input[B + b] = points[b][1];
        cache.input[2 * B + b] = points[b][2];
        cache.input[3 * B + b] = t;
    }
    cache.a1.resize(H * B);
    dense(L.w1, L.b1, cache.input.data(), H, 4, B, cache.a1.data());
    // Frequency scaling applies to the first layer only.
    activate(cache.a1, cache.d1, params.config.activation, params.config.sine_frequency);

    cache.a2.resize(H * B);
    dense(L.w2, L.b2, cache.a1.data(), H, H, B, cache.a2.data());
    activate(cache.a2, cache.d2, params.config.activation, 1.0);

    std::vector<double> o(3 * B);
    dense(L.w3, L.b3, cache.a2.data(), 3, H, B, o.data());
    for(std::size_t b = 0; b < B; ++b){
        out[b] = Point3(o[b], o[B + b], o[2 * B + b]);
    }
}

void backward_cached(const MLPParams &params, const ForwardCache &cache,
                     std::span<const Point3> grad_out, ParamGradient &grad,
                     std::span<Point3> grad_points){
    const auto L = layers_of(params);
    const std::size_t B = cache.batch;
    const std::size_t H = L.h;
    if(grad_out.size() != B || grad_points.size() != B){
        throw std::invalid_argument("backward_cached: span size mismatch");
    }
    double *g = grad.values.data();
    double *gw1 = g + params.w1_offset();
    double *gb1 = g + params.b1_offset();
    double *gw2 = g + params.w2_offset();
    double *gb2 = g + params.b2_offset();
    double *gw3 = g + params.w3_offset();
    double *gb3 = g + params.b3_offset();

    std::vector<double> go(3 * B);
    for(std::size_t b = 0; b < B; ++b){
        for(std::size_t c = 0; c < 3; ++c){
            go[c * B + b] = grad_out[b][static_cast<Eigen::Index>(c)];
        }
    }

    // Layer 3.
    for(std::size_t c = 0; c < 3; ++c){
        const double *gc = go.data() + c * B;
        double sb = 0.0;
        for(std::size_t b = 0; b < B; ++b){
            sb += gc[b];
        }
        gb3[c] += sb;
        for(std::size_t h = 0; h < H; ++h){
            const double *a = cache.a2.data() + h * B;
            double s = 0.0;
            for(std::size_t b = 0; b < B; ++b){
                s += gc[b] * a[b];
            }
            gw3[c * H + h] += s;
        }
    }
    std::vector<double> dz2(H * B, 0.0);
    for(std::size_t h = 0; h < H; ++h){
        double *d = dz2.data() + h * B;
        for(std::size_t c = 0; c < 3; ++c){
            const double w = L.w3[c * H + h];
            const double *gc = go.data() + c * B;
            for(std::size_t b = 0; b < B; ++b){
                d[b] += w * gc[b];
            }
        }
        const double *der = cache.d2.data() + h * B;
        for(std::size_t b = 0; b < B; ++b){
            d[b] *= der[b];
        }
    }

    // Layer 2.
    for(std::size_t h = 0; h < H; ++h){
        const double *d = dz2.data() + h * B;
        double sb = 0.0;
        for(std::size_t b = 0; b < B; ++b){
            sb += d[b];
        }
        gb2[h] += sb;
        for(std::size_t k = 0; k < H; ++k){
            const double *a = cache.a1.data() + k * B;
            double s = 0.0;
            for(std::size_t b = 0; b < B; ++b){
                s += d[b] * a[b];
            }
            gw2[h * H + k] += s;
        }
    }
    std::vector<double> dz1(H * B, 0.0);
    for(std::size_t h = 0; h < H; ++h){
        const double *d = dz2.data() + h * B;
        for(std::size_t k = 0; k < H; ++k){
            const double w = L.w2[h * H + k];
            double *o = dz1.data() + k * B;
            for(std::size_t b = 0; b < B; ++b){
                o[b] += w * d[b];
            }
        }
    }
    for(std::size_t i = 0; i < H * B; ++i){
        dz1[i] *= cache.d1[i];
    }

    // Layer 1.
    std::vector<double> dx(3 * B, 0.0);
    for(std::size_t h = 0; h < H; ++h){
        const double *d = dz1.data() + h * B;
        double sb = 0.0;
        for(std::size_t b = 0; b < B; ++b){
            sb += d[b];
        }
        gb1[h] += sb;
        for(std::size_t k = 0; k < 4; ++k){
            const double *x = cache.input.data() + k * B;
            double s = 0.0;
            for(std::size_t b = 0; b < B; ++b){
                s += d[b] * x[b];
            }
            gw1[h * 4 + k] += s;
        }
        for(std::size_t k = 0; k < 3; ++k){
            const double w = L.w1[h * 4 + k];
            double *o = dx.data() + k * B;
            for(std::size_t b = 0; b < B; ++b){
                o[b] += w * d[b];
            }
        }
    }
    for(std::size_t b = 0; b < B; ++b){
        grad_points[b] = Point3(dx[b], dx[B + b], dx[2 * B + b]);
    }
}

Point3 forward(const MLPParams &params, const Point3 &p, double t){
    ForwardCache cache;
    Point3 out;
    forward_cached(params, std::span<const Point3>(&p, 1), t, cache, std::span<Point3>(&out, 1));
    return out;
}

std::vector<Point3> forward_batch(const MLPParams &params, std::span<const Point3> points, double t){
    std::vector<Point3> out(points.size());
    if(points.empty()){
        return out;
    }
    ForwardCache cache;
    forward_cached(params, points, t, cache, out);
    return out;
}

} // namespace inrreg
