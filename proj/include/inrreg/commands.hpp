// commands.hpp - the register / evaluate / synth / snapshots commands.
//
// Exit codes: 0 success, 1 usage / I/O / config error, 2 grid mismatch,
// 3 optimization diverged (a partial manifest is written), 4 folding
// deformation spec.

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "inrreg/config.hpp"
#include "inrreg/evalsynth.hpp"

namespace inrreg {

enum ExitCode : int {
    kExitOk = 0,
    kExitError = 1,
    kExitGridMismatch = 2,
    kExitDiverged = 3,
    kExitFolding = 4,
};

std::string tool_version();

struct RunManifest {
    std::string tool_version;
    std::string status;  // "ok" or "diverged"
    std::string message;
    std::string config;  // format_config() text
    std::map<std::string, std::string> input_digests;  // path -> sha256
    std::map<std::string, std::vector<LossBreakdown>> loss_histories;
    std::map<std::string, double> timings_seconds;
    std::map<std::string, std::string> outputs;
    double mean_displacement_voxels = 0.0;
};

nlohmann::json to_json(const RunManifest &m);
RunManifest manifest_from_json(const nlohmann::json &j);
RunManifest load_manifest(const std::filesystem::path &path);
// True when every recorded input still hashes to its digest.
bool verify_inputs(const RunManifest &m);

// Plain-text table: iteration, total, similarity, regularizer, distill, lambda.
std::string format_loss_table(const std::vector<LossBreakdown> &history);

nlohmann::json to_json(const EvalReport &r);

struct RegisterOptions {
    std::filesystem::path moving;
    std::filesystem::path fixed;
    std::optional<std::filesystem::path> config;
    std::filesystem::path out_dir;
    std::optional<std::uint64_t> seed;
};

struct EvaluateOptions {
    std::filesystem::path field;
    std::filesystem::path moving_mask;
    std::filesystem::path fixed_mask;
    std::optional<std::filesystem::path> ground_truth;
    std::filesystem::path out_path;
};

struct SynthOptions {
    std::optional<std::filesystem::path> spec;
    std::filesystem::path out_dir;
    std::optional<std::uint64_t> seed;
};

struct SnapshotOptions {
    std::filesystem::path moving;
    std::filesystem::path params;
    std::optional<std::filesystem::path> config;
    std::filesystem::path out_dir;
};

int cmd_register(const RegisterOptions &opt, std::ostream &log);
int cmd_evaluate(const EvaluateOptions &opt, std::ostream &log);
int cmd_synth(const SynthOptions &opt, std::ostream &log);
int cmd_snapshots(const SnapshotOptions &opt, std::ostream &log);

} // namespace inrreg
