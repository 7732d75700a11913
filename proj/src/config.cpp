// config.cpp - flat "key = value" run configuration.

#include "inrreg/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <vector>

namespace inrreg {

namespace {

struct Entry {
    std::string key;
    std::string value;
    int line = 0;
};

std::string trim(const std::string &s){
    const auto b = s.find_first_not_of(" \t\r");
    if(b == std::string::npos){
        return {};
    }
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<Entry> split_entries(const std::string &text, const std::string &source){
    std::vector<Entry> out;
    std::istringstream is(text);
    std::string raw;
    int line = 0;
    while(std::getline(is, raw)){
        ++line;
        const auto hash = raw.find('#');
        const std::string body = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
        if(body.empty()){
            continue;
        }
        const auto eq = body.find('=');
        if(eq == std::string::npos){
            throw ConfigError(source + ":" + std::to_string(line) + ": expected 'key = value'");
        }
        Entry e{trim(body.substr(0, eq)), trim(body.substr(eq + 1)), line};
        if(e.key.empty()){
            throw ConfigError(source + ":" + std::to_string(line) + ": empty key");
        }
        out.push_back(std::move(e));
    }
    return out;
}

std::vector<std::string> tokens(const std::string &s){
    std::istringstream is(s);
    std::vector<std::string> out;
    std::string t;
    while(is >> t){
        out.push_back(t);
    }
    return out;
}

class ValueParser {
public:
    ValueParser(const Entry &e, const std::string &source) : e_(e), source_(source) {}

    [[noreturn]] void fail(const std::string &expected) const {
        throw ConfigError(source_ + ":" + std::to_string(e_.line) + ": " + e_.key + ": expected " + expected
                          + ", got '" + e_.value + "'");
    }

    double real_token(const std::string &t) const {
        double v = 0.0;
        const auto *end = t.data() + t.size();
        const auto [p, ec] = std::from_chars(t.data(), end, v);
        if(ec != std::errc() || p != end){
            fail("a number");
        }
        return v;
    }
    long long int_token(const std::string &t) const {
        long long v = 0;
        const auto *end = t.data() + t.size();
        const auto [p, ec] = std::from_chars(t.data(), end, v);
        if(ec != std::errc() || p != end){
            fail("an integer");
        }
        return v;
    }

    double real() const {
        const auto t = tokens(e_.value);
        if(t.size() != 1){
            fail("a number");
        }
        return real_token(t[0]);
    }
    int integer() const {
        const auto t = tokens(e_.value);
        if(t.size() != 1){
            fail("an integer");
        }
        return static_cast<int>(int_token(t[0]));
    }
    std::uint64_t unsigned64() const {
        const auto t = tokens(e_.value);
        if(t.size() != 1){
            fail("an unsigned integer");
        }
        std::uint64_t v = 0;
        const auto *end = t[0].data() + t[0].size();
        const auto [p, ec] = std::from_chars(t[0].data(), end, v);
        if(ec != std::errc() || p != end){
            fail("an unsigned integer");
        }
        return v;
    }
    Index3 int_triple() const {
        const auto t = tokens(e_.value);
        if(t.size() != 3){
            fail("three integers");
        }
        return {static_cast<int>(int_token(t[0])), static_cast<int>(int_token(t[1])),
                static_cast<int>(int_token(t[2]))};
    }
    Point3 real_triple() const {
        const auto t = tokens(e_.value);
        if(t.size() != 3){
            fail("three numbers");
        }
        return {real_token(t[0]), real_token(t[1]), real_token(t[2])};
    }
    std::pair<double, double> real_pair() const {
        const auto t = tokens(e_.value);
        if(t.size() != 2){
            fail("two numbers");
        }
        return {real_token(t[0]), real_token(t[1])};
    }
    std::string word() const {
        const auto t = tokens(e_.value);
        if(t.size() != 1){
            fail("a single word");
        }
        return t[0];
    }

private:
    const Entry &e_;
    const std::string &source_;
};

using Setter = std::function<void(const ValueParser &)>;

void apply_optim_key(OptimConfig &o, const std::string &key, const ValueParser &p, bool &known){
    known = true;
    if(key == "lr" || key == "learning_rate"){
        o.learning_rate = p.real();
    }else if(key == "beta1"){
        o.beta1 = p.real();
    }else if(key == "beta2"){
        o.beta2 = p.real();
    }else if(key == "epsilon"){
        o.epsilon = p.real();
    }else if(key == "max_iters"){
        o.max_iters = p.integer();
    }else if(key == "plateau_tol"){
        o.plateau_tol = p.real();
    }else if(key == "plateau_window"){
        o.plateau_window = p.integer();
    }else{
        known = false;
    }
}

template <class Wrapped>
auto wrap_errors(const std::string &source, Wrapped &&fn){
    try{
        return fn();
    }catch(const ConfigError &){
        throw;
    }catch(const std::invalid_argument &e){
        throw ConfigError(source + ": " + e.what());
    }
}

} // namespace

RegistrationConfig parse_config(const std::string &text, const std::string &source){
    const auto entries = split_entries(text, source);
    RegistrationConfig cfg;

    std::map<std::string, Setter> top{
        {"coarse_dims", [&](const ValueParser &p){ cfg.coarse_dims = p.int_triple(); }},
        {"fine_dims", [&](const ValueParser &p){ cfg.fine_dims = p.int_triple(); }},
        {"n_steps", [&](const ValueParser &p){ cfg.n_steps = p.integer(); }},
        {"metric", [&](const ValueParser &p){
             try{
                 cfg.metric = metric_from_string(p.word());
             }catch(const std::invalid_argument &){
                 p.fail("mse or ncc");
             }
         }},
        {"lambda", [&](const ValueParser &p){ cfg.lambda = p.real(); }},
        {"gamma", [&](const ValueParser &p){ cfg.gamma = p.real(); }},
        {"seed", [&](const ValueParser &p){ cfg.seed = p.unsigned64(); }},
        {"distill_target_ratio", [&](const ValueParser &p){ cfg.distill_target_ratio = p.real(); }},
        {"net.hidden_width", [&](const ValueParser &p){ cfg.net.hidden_width = p.integer(); }},
        {"net.activation", [&](const ValueParser &p){
             try{
                 cfg.net.activation = activation_from_string(p.word());
             }catch(const std::invalid_argument &){
                 p.fail("sine or tanh");
             }
         }},
        {"net.sine_frequency", [&](const ValueParser &p){ cfg.net.sine_frequency = p.real(); }},
    };

    const std::map<std::string, OptimConfig *> stages{
        {"coarse", &cfg.coarse_optim}, {"distill", &cfg.distill_optim}, {"fine", &cfg.fine_optim}};

    // Pass 0 applies optimizer.* to all stages, pass 1 everything else.
    for(int pass = 0; pass < 2; ++pass){
        for(const auto &e : entries){
            const ValueParser p(e, source);
            const auto dot = e.key.find('.');
            const std::string section = dot == std::string::npos ? std::string() : e.key.substr(0, dot);
            const std::string leaf = dot == std::string::npos ? e.key : e.key.substr(dot + 1);
            bool known = false;
            if(section == "optimizer"){
                for(auto &[name, o] : stages){
                    OptimConfig scratch = *o;
                    apply_optim_key(scratch, leaf, p, known);
                    if(pass == 0){
                        *o = scratch;
                    }
                }
            }else if(pass == 0){
                continue;
            }else if(auto st = stages.find(section); st != stages.end()){
                apply_optim_key(*st->second, leaf, p, known);
            }else if(auto it = top.find(e.key); it != top.end()){
                it->second(p);
                known = true;
            }
            if(!known){
                throw ConfigError(source + ":" + std::to_string(e.line) + ": unknown key '" + e.key + "'");
            }
        }
    }
    wrap_errors(source, [&]{ cfg.validate(); return 0; });
    return cfg;
}

namespace {

std::string read_text(const std::filesystem::path &path){
    std::ifstream is(path);
    if(!is){
        throw ConfigError("cannot read '" + path.string() + "'");
    }
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
}

} // namespace

RegistrationConfig load_config(const std::filesystem::path &path){
    return parse_config(read_text(path), path.string());
}

std::string format_config(const RegistrationConfig &cfg){
    std::ostringstream os;
    os.precision(17);
    const auto triple = [&](const Index3 &d){
        return std::to_string(d[0]) + " " + std::to_string(d[1]) + " " + std::to_string(d[2]);
    };
    os << "coarse_dims = " << triple(cfg.coarse_dims) << "\n"
       << "fine_dims = " << triple(cfg.fine_dims) << "\n"
       << "n_steps = " << cfg.n_steps << "\n"
       << "metric = " << to_string(cfg.metric) << "\n"
       << "lambda = " << cfg.lambda << "\n"
       << "gamma = " << cfg.gamma << "\n"
       << "seed = " << cfg.seed << "\n"
       << "distill_target_ratio = " << cfg.distill_target_ratio << "\n"
       << "net.hidden_width = " << cfg.net.hidden_width << "\n"
       << "net.activation = " << to_string(cfg.net.activation) << "\n"
       << "net.sine_frequency = " << cfg.net.sine_frequency << "\n";
    const std::pair<const char *, const OptimConfig *> stages[] = {
        {"coarse", &cfg.coarse_optim}, {"distill", &cfg.distill_optim}, {"fine", &cfg.fine_optim}};
    for(const auto &[name, o] : stages){
        os << name << ".lr = " << o->learning_rate << "\n"
           << name << ".beta1 = " << o->beta1 << "\n"
           << name << ".beta2 = " << o->beta2 << "\n"
           << name << ".epsilon = " << o->epsilon << "\n"
           << name << ".max_iters = " << o->max_iters << "\n"
           << name << ".plateau_tol = " << o->plateau_tol << "\n"
           << name << ".plateau_window = " << o->plateau_window << "\n";
    }
    return os.str();
}

SynthSpec parse_synth_spec(const std::string &text, const std::string &source){
    const auto entries = split_entries(text, source);
    SynthSpec spec;
    std::map<std::string, Setter> keys{
        {"phantom.dims", [&](const ValueParser &p){ spec.phantom.dims = p.int_triple(); }},
        {"phantom.n_blobs", [&](const ValueParser &p){ spec.phantom.n_blobs = p.integer(); }},
        {"phantom.intensity_range", [&](const ValueParser &p){ spec.phantom.intensity_range = p.real_pair(); }},
        {"phantom.seed", [&](const ValueParser &p){ spec.phantom.seed = p.unsigned64(); }},
        {"bump.center", [&](const ValueParser &p){ spec.bump.center = p.real_triple(); }},
        {"bump.amplitude_voxels", [&](const ValueParser &p){ spec.bump.amplitude_voxels = p.real(); }},
        {"bump.direction", [&](const ValueParser &p){
             const Point3 d = p.real_triple();
             if(!(d.norm() > 0.0)){
                 p.fail("a non-zero direction");
             }
             spec.bump.direction = d.normalized();
         }},
        {"bump.sigma", [&](const ValueParser &p){ spec.bump.sigma = p.real(); }},
    };
    for(const auto &e : entries){
        auto it = keys.find(e.key);
        if(it == keys.end()){
            throw ConfigError(source + ":" + std::to_string(e.line) + ": unknown key '" + e.key + "'");
        }
        it->second(ValueParser(e, source));
    }
    wrap_errors(source, [&]{
        spec.phantom.validate();
        spec.bump.validate();
        return 0;
    });
    return spec;
}

SynthSpec load_synth_spec(const std::filesystem::path &path){
    return parse_synth_spec(read_text(path), path.string());
}

} // namespace inrreg
