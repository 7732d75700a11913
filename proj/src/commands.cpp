// commands.cpp - the four CLI commands and run manifests.

#include "inrreg/commands.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "inrreg/dynamics.hpp"
#include "inrreg/file_io.hpp"
#include "inrreg/registration.hpp"

#ifndef INRREG_VERSION
#define INRREG_VERSION "0.0.0"
#endif

namespace inrreg {

namespace fs = std::filesystem;
using json = nlohmann::json;

std::string tool_version(){
    return INRREG_VERSION;
}

namespace {

json loss_to_json(const LossBreakdown &l){
    return json{{"total", l.total},
                {"similarity", l.similarity},
                {"regularizer", l.regularizer},
                {"distill", l.distill},
                {"lambda", l.lambda}};
}

LossBreakdown loss_from_json(const json &j){
    LossBreakdown l;
    l.total = j.at("total").get<double>();
    l.similarity = j.at("similarity").get<double>();
    l.regularizer = j.at("regularizer").get<double>();
    l.distill = j.at("distill").get<double>();
    l.lambda = j.at("lambda").get<double>();
    return l;
}

void write_text(const fs::path &path, const std::string &text){
    std::ofstream os(path, std::ios::binary);
    if(!os){
        throw IoError("cannot open '" + path.string() + "' for writing");
    }
    os << text;
    if(!os){
        throw IoError("write failed for '" + path.string() + "'");
    }
}

void ensure_dir(const fs::path &dir){
    std::error_code ec;
    fs::create_directories(dir, ec);
    if(ec){
        throw IoError("cannot create '" + dir.string() + "': " + ec.message());
    }
}

double seconds_since(std::chrono::steady_clock::time_point t0){
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

} // namespace

json to_json(const RunManifest &m){
    json j;
    j["tool_version"] = m.tool_version;
    j["status"] = m.status;
    j["message"] = m.message;
    j["config"] = m.config;
    j["input_digests"] = m.input_digests;
    json hist = json::object();
    for(const auto &[stage, h] : m.loss_histories){
        json arr = json::array();
        for(const auto &l : h){
            arr.push_back(loss_to_json(l));
        }
        hist[stage] = std::move(arr);
    }
    j["loss_histories"] = std::move(hist);
    j["timings_seconds"] = m.timings_seconds;
    j["outputs"] = m.outputs;
    j["mean_displacement_voxels"] = m.mean_displacement_voxels;
    return j;
}

RunManifest manifest_from_json(const json &j){
    RunManifest m;
    m.tool_version = j.at("tool_version").get<std::string>();
    m.status = j.at("status").get<std::string>();
    m.message = j.value("message", std::string());
    m.config = j.at("config").get<std::string>();
    m.input_digests = j.at("input_digests").get<std::map<std::string, std::string>>();
    for(const auto &[stage, arr] : j.at("loss_histories").items()){
        auto &h = m.loss_histories[stage];
        for(const auto &l : arr){
            h.push_back(loss_from_json(l));
        }
    }
    m.timings_seconds = j.at("timings_seconds").get<std::map<std::string, double>>();
    m.outputs = j.at("outputs").get<std::map<std::string, std::string>>();
    m.mean_displacement_voxels = j.at("mean_displacement_voxels").get<double>();
    return m;
}

RunManifest load_manifest(const fs::path &path){
    std::ifstream is(path);
    if(!is){
        throw IoError("cannot read '" + path.string() + "'");
    }
    return manifest_from_json(json::parse(is));
}

bool verify_inputs(const RunManifest &m){
    for(const auto &[path, digest] : m.input_digests){
        std::error_code ec;
        if(!fs::exists(path, ec) || file_sha256(path) != digest){
            return false;
        }
    }
    return true;
}

std::string format_loss_table(const std::vector<LossBreakdown> &history){
    std::ostringstream os;
    os << "iter\ttotal\tsimilarity\tregularizer\tdistill\tlambda\n";
    os << std::setprecision(17);
    for(std::size_t i = 0; i < history.size(); ++i){
        const auto &l = history[i];
        os << i << '\t' << l.total << '\t' << l.similarity << '\t' << l.regularizer << '\t' << l.distill << '\t'
           << l.lambda << '\n';
    }
    return os.str();
}

json to_json(const EvalReport &r){
    json j;
    json per = json::object();
    for(const auto &[label, d] : r.dice_per_label){
        per[std::to_string(label)] = d;
    }
    j["dice_per_label"] = std::move(per);
    j["dice_mean"] = r.dice_mean;
    j["fold_fraction"] = r.fold_fraction;
    if(r.mean_endpoint_error_voxels){
        j["endpoint_error_voxels"] = {{"mean", *r.mean_endpoint_error_voxels},
                                      {"max", r.max_endpoint_error_voxels.value_or(0.0)}};
    }
    j["runtime_seconds"] = r.runtime_seconds;
    return j;
}

namespace {

RunManifest base_manifest(const RegistrationConfig &cfg, const RegisterOptions &opt){
    RunManifest m;
    m.tool_version = tool_version();
    m.status = "ok";
    m.config = format_config(cfg);
    m.input_digests[opt.moving.string()] = file_sha256(opt.moving);
    m.input_digests[opt.fixed.string()] = file_sha256(opt.fixed);
    if(opt.config){
        m.input_digests[opt.config->string()] = file_sha256(*opt.config);
    }
    return m;
}

void write_stage(RunManifest &m, const fs::path &dir, const std::string &stage, const StageResult &r){
    if(r.loss_history.empty()){
        return;
    }
    const fs::path p = dir / ("loss_" + stage + ".tsv");
    write_text(p, format_loss_table(r.loss_history));
    m.loss_histories[stage] = r.loss_history;
    m.outputs["loss_" + stage] = p.string();
}

void write_manifest(const RunManifest &m, const fs::path &dir){
    write_text(dir / "manifest.json", to_json(m).dump(2) + "\n");
}

template <class Fn>
int guarded(const char *name, std::ostream &log, Fn &&fn){
    try{
        return fn();
    }catch(const ConfigError &e){
        log << name << ": config error: " << e.what() << "\n";
    }catch(const FormatError &e){
        log << name << ": format error: " << e.what() << "\n";
    }catch(const IoError &e){
        log << name << ": " << e.what() << "\n";
    }catch(const std::exception &e){
        log << name << ": " << e.what() << "\n";
    }
    return kExitError;
}

} // namespace

int cmd_register(const RegisterOptions &opt, std::ostream &log){
    return guarded("register", log, [&]{
        const auto t0 = std::chrono::steady_clock::now();
        RegistrationConfig cfg = opt.config ? load_config(*opt.config) : RegistrationConfig{};
        if(opt.seed){
            cfg.seed = *opt.seed;
        }
        const Volume3 moving = read_scalar_volume(opt.moving);
        const Volume3 fixed = read_scalar_volume(opt.fixed);
        if(!moving.grid.same_dims(fixed.grid)){
            log << "register: grid mismatch: moving " << moving.grid.dims[0] << "x" << moving.grid.dims[1] << "x"
                << moving.grid.dims[2] << ", fixed " << fixed.grid.dims[0] << "x" << fixed.grid.dims[1] << "x"
                << fixed.grid.dims[2] << "\n";
            return static_cast<int>(kExitGridMismatch);
        }
        ensure_dir(opt.out_dir);
        RunManifest m = base_manifest(cfg, opt);
        m.timings_seconds["load"] = seconds_since(t0);

        const auto t1 = std::chrono::steady_clock::now();
        CoarseToFineResult res;
        try{
            res = coarse_to_fine(cfg, moving, fixed);
        }catch(const PipelineDiverged &e){
            const auto &p = e.partial();
            m.status = "diverged";
            m.message = e.what();
            m.timings_seconds["optimize"] = seconds_since(t1);
            write_stage(m, opt.out_dir, "coarse", p.coarse);
            write_stage(m, opt.out_dir, "distill", p.distill);
            write_stage(m, opt.out_dir, "fine", p.fine);
            write_manifest(m, opt.out_dir);
            log << "register: " << e.what() << "\n";
            return static_cast<int>(kExitDiverged);
        }
        m.timings_seconds["optimize"] = seconds_since(t1);

        const auto &fin = res.final_stage();
        const fs::path disp = opt.out_dir / "displacement.frg";
        const fs::path moved = opt.out_dir / "moved.frg";
        const fs::path params = opt.out_dir / "params.frp";
        write_volume(disp, fin.displacement);
        write_volume(moved, apply_final(moving, fin.displacement));
        write_params(params, fin.params);
        m.outputs["displacement"] = disp.string();
        m.outputs["moved"] = moved.string();
        m.outputs["params"] = params.string();
        write_stage(m, opt.out_dir, "coarse", res.coarse);
        write_stage(m, opt.out_dir, "distill", res.distill);
        write_stage(m, opt.out_dir, "fine", res.fine);
        m.mean_displacement_voxels = mean_magnitude_voxels(fin.displacement, moving.grid.dims);
        m.timings_seconds["total"] = seconds_since(t0);
        write_manifest(m, opt.out_dir);
        log << "register: done, mean |S| = " << m.mean_displacement_voxels << " voxels\n";
        return static_cast<int>(kExitOk);
    });
}

int cmd_evaluate(const EvaluateOptions &opt, std::ostream &log){
    return guarded("evaluate", log, [&]{
        const VectorField3 S = read_vector_field(opt.field);
        const LabelMask mm = read_label_mask(opt.moving_mask);
        const LabelMask fm = read_label_mask(opt.fixed_mask);
        if(!mm.grid.same_dims(fm.grid)){
            log << "evaluate: moving and fixed masks have different grids\n";
            return static_cast<int>(kExitGridMismatch);
        }
        std::optional<VectorField3> gt;
        if(opt.ground_truth){
            gt = read_vector_field(*opt.ground_truth);
        }
        const EvalReport r = evaluate_registration(S, mm, fm, gt ? &*gt : nullptr);
        if(opt.out_path.has_parent_path()){
            ensure_dir(opt.out_path.parent_path());
        }
        write_text(opt.out_path, to_json(r).dump(2) + "\n");
        log << "evaluate: dice_mean = " << r.dice_mean << ", fold_fraction = " << r.fold_fraction << "\n";
        return static_cast<int>(kExitOk);
    });
}

int cmd_synth(const SynthOptions &opt, std::ostream &log){
    return guarded("synth", log, [&]{
        SynthSpec spec = opt.spec ? load_synth_spec(*opt.spec) : SynthSpec{};
        if(opt.seed){
            spec.phantom.seed = *opt.seed;
        }
        VectorField3 S_gt;
        try{
            S_gt = make_bump_deformation(spec.bump, spec.phantom.dims);
        }catch(const FoldingDeformation &e){
            log << "synth: " << e.what() << "\n";
            return static_cast<int>(kExitFolding);
        }
        const Phantom ph = make_phantom(spec.phantom);
        const SynthPair pair = synth_pair(ph, S_gt);
        ensure_dir(opt.out_dir);
        write_volume(opt.out_dir / "moving.frg", pair.moving);
        write_volume(opt.out_dir / "fixed.frg", pair.fixed);
        write_volume(opt.out_dir / "moving_mask.frg", pair.moving_mask);
        write_volume(opt.out_dir / "fixed_mask.frg", pair.fixed_mask);
        write_volume(opt.out_dir / "s_gt.frg", S_gt);
        write_volume(opt.out_dir / "recovery_target.frg", pair.recovery_target);
        log << "synth: wrote 6 files to " << opt.out_dir.string() << "\n";
        return static_cast<int>(kExitOk);
    });
}

int cmd_snapshots(const SnapshotOptions &opt, std::ostream &log){
    return guarded("snapshots", log, [&]{
        const RegistrationConfig cfg = opt.config ? load_config(*opt.config) : RegistrationConfig{};
        const Volume3 moving = read_scalar_volume(opt.moving);
        const MLPParams params = read_params(opt.params);
        const FlowConfig flow = FlowConfig::make(cfg.fine_dims, cfg.n_steps);
        const Rollout r = rollout(params, flow);
        ensure_dir(opt.out_dir);
        for(int k = 0; k <= flow.n_steps; ++k){
            char name[32];
            std::snprintf(name, sizeof name, "snapshot_%03d.frg", k);
            write_volume(opt.out_dir / name, intermediate_warp(moving, r, k));
        }
        log << "snapshots: wrote " << flow.n_steps + 1 << " files to " << opt.out_dir.string() << "\n";
        return static_cast<int>(kExitOk);
    });
}

} // namespace inrreg
