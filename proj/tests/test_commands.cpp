#include <doctest.h>

#include <fstream>
#include <sstream>

#include "inrreg/commands.hpp"
#include "inrreg/file_io.hpp"
#include "support.hpp"

using namespace inrreg;
using namespace testutil;

namespace {

namespace fs = std::filesystem;

const char *kTinyConfig = R"(
coarse_dims = 4 4 4
fine_dims = 6 6 6
n_steps = 2
net.hidden_width = 8
optimizer.lr = 1e-3
optimizer.max_iters = 3
)";

void write_text(const fs::path &p, const std::string &s){
    std::ofstream(p) << s;
}

nlohmann::json read_json(const fs::path &p){
    std::ifstream is(p);
    return nlohmann::json::parse(is);
}

} // namespace

TEST_CASE("cmd_register: identity pair with a tiny budget"){
    TempDir dir("cmd");
    const Volume3 img = volume_from({12, 12, 12}, [](const Point3 &x){
        return 0.5 + 0.3 * std::sin(3 * x[0]) * std::cos(2 * x[1]) + 0.1 * x[2];
    });
    write_volume(dir / "img.frg", img);
    write_text(dir / "run.cfg", kTinyConfig);
    std::ostringstream log;

    RegisterOptions o{dir / "img.frg", dir / "img.frg", dir / "run.cfg", dir / "a", std::nullopt};
    REQUIRE(cmd_register(o, log) == kExitOk);
    for(const char *f : {"displacement.frg", "moved.frg", "params.frp", "manifest.json", "loss_coarse.tsv",
                         "loss_distill.tsv", "loss_fine.tsv"}){
        CHECK(fs::exists(dir / "a" / f));
    }
    const RunManifest m = load_manifest(dir / "a" / "manifest.json");
    CHECK(m.status == "ok");
    CHECK(m.tool_version == tool_version());
    CHECK(m.input_digests.size() == 2);
    CHECK(verify_inputs(m));
    CHECK(m.mean_displacement_voxels < 0.05);
    CHECK(m.loss_histories.at("fine").size() <= 3);
    CHECK(parse_config(m.config).n_steps == 2);

    const VectorField3 S = read_vector_field(dir / "a" / "displacement.frg");
    CHECK(S.grid.dims == Index3{6, 6, 6});
    CHECK(read_scalar_volume(dir / "a" / "moved.frg").grid.dims == img.grid.dims);

    std::ifstream tsv(dir / "a" / "loss_fine.tsv");
    std::string header;
    std::getline(tsv, header);
    CHECK(header == "iter\ttotal\tsimilarity\tregularizer\tdistill\tlambda");

    SUBCASE("rerun with the same seed is bit-identical"){
        o.out_dir = dir / "b";
        REQUIRE(cmd_register(o, log) == kExitOk);
        CHECK(file_bytes(dir / "a" / "displacement.frg") == file_bytes(dir / "b" / "displacement.frg"));
        CHECK(file_bytes(dir / "a" / "params.frp") == file_bytes(dir / "b" / "params.frp"));
        CHECK(file_bytes(dir / "a" / "loss_fine.tsv") == file_bytes(dir / "b" / "loss_fine.tsv"));
    }
    SUBCASE("an edited input no longer verifies"){
        write_volume(dir / "img.frg", Volume3(img.grid, 0.25));
        CHECK(!verify_inputs(m));
    }
}

TEST_CASE("cmd_register exit codes"){
    TempDir dir("cmd");
    write_volume(dir / "a.frg", random_volume({8, 8, 8}, 1));
    write_volume(dir / "b.frg", random_volume({8, 8, 9}, 2));
    write_text(dir / "run.cfg", kTinyConfig);
    std::ostringstream log;

    CHECK(cmd_register({dir / "a.frg", dir / "b.frg", dir / "run.cfg", dir / "o", std::nullopt}, log) ==
          kExitGridMismatch);
    CHECK(cmd_register({dir / "a.frg", dir / "missing.frg", dir / "run.cfg", dir / "o", std::nullopt}, log) ==
          kExitError);
    write_text(dir / "bad.cfg", "optimizer.lr = fast\n");
    CHECK(cmd_register({dir / "a.frg", dir / "a.frg", dir / "bad.cfg", dir / "o", std::nullopt}, log) == kExitError);

    // Mask files are not images.
    write_volume(dir / "m.frg", LabelMask(GridSpec::with_dims({8, 8, 8})));
    CHECK(cmd_register({dir / "m.frg", dir / "a.frg", dir / "run.cfg", dir / "o", std::nullopt}, log) == kExitError);

    write_volume(dir / "c.frg", random_volume({8, 8, 8}, 3));
    write_text(dir / "wild.cfg", std::string(kTinyConfig) + "metric = mse\noptimizer.lr = 1e300\noptimizer.max_iters = 20\n");
    CHECK(cmd_register({dir / "a.frg", dir / "c.frg", dir / "wild.cfg", dir / "d", std::nullopt}, log) ==
          kExitDiverged);
    const RunManifest m = load_manifest(dir / "d" / "manifest.json");
    CHECK(m.status == "diverged");
    CHECK(!m.message.empty());
    CHECK(!fs::exists(dir / "d" / "displacement.frg"));
}

TEST_CASE("cmd_register: the seed override changes the run"){
    TempDir dir("cmd");
    write_volume(dir / "a.frg", random_volume({8, 8, 8}, 1));
    write_volume(dir / "b.frg", random_volume({8, 8, 8}, 2));
    write_text(dir / "run.cfg", kTinyConfig);
    std::ostringstream log;
    REQUIRE(cmd_register({dir / "a.frg", dir / "b.frg", dir / "run.cfg", dir / "x", 1}, log) == kExitOk);
    REQUIRE(cmd_register({dir / "a.frg", dir / "b.frg", dir / "run.cfg", dir / "y", 2}, log) == kExitOk);
    CHECK(file_bytes(dir / "x" / "params.frp") != file_bytes(dir / "y" / "params.frp"));
    CHECK(parse_config(load_manifest(dir / "y" / "manifest.json").config).seed == 2);
}

TEST_CASE("cmd_evaluate"){
    TempDir dir("cmd");
    const Phantom ph = make_phantom(PhantomSpec{.dims = {40, 40, 40}, .seed = 2});
    write_volume(dir / "mask.frg", ph.labels);
    write_volume(dir / "zero.frg", VectorField3(GridSpec::with_dims({8, 8, 8})));
    std::ostringstream log;

    REQUIRE(cmd_evaluate({dir / "zero.frg", dir / "mask.frg", dir / "mask.frg", std::nullopt, dir / "r.json"}, log) ==
            kExitOk);
    const auto r = read_json(dir / "r.json");
    CHECK(r["dice_mean"].get<double>() == 1.0);
    CHECK(r["fold_fraction"].get<double>() == 0.0);
    CHECK(!r.contains("endpoint_error_voxels"));
    CHECK(r["dice_per_label"].size() == 3);
    CHECK(r["dice_per_label"]["1"].get<double>() == 1.0);

    const VectorField3 gt = smooth_field({40, 40, 40}, 0.03);
    write_volume(dir / "gt.frg", gt);
    REQUIRE(cmd_evaluate({dir / "gt.frg", dir / "mask.frg", dir / "mask.frg", dir / "gt.frg", dir / "g.json"}, log) ==
            kExitOk);
    const auto g = read_json(dir / "g.json");
    CHECK(g["endpoint_error_voxels"]["mean"].get<double>() == 0.0);
    CHECK(g["endpoint_error_voxels"]["max"].get<double>() == 0.0);

    write_volume(dir / "other.frg", LabelMask(GridSpec::with_dims({40, 40, 41})));
    CHECK(cmd_evaluate({dir / "zero.frg", dir / "mask.frg", dir / "other.frg", std::nullopt, dir / "x.json"}, log) ==
          kExitGridMismatch);
    CHECK(cmd_evaluate({dir / "mask.frg", dir / "mask.frg", dir / "mask.frg", std::nullopt, dir / "x.json"}, log) ==
          kExitError);
}

TEST_CASE("cmd_synth"){
    TempDir dir("cmd");
    std::ostringstream log;
    const std::vector<std::string> files{"moving.frg",    "fixed.frg", "moving_mask.frg",
                                         "fixed_mask.frg", "s_gt.frg",  "recovery_target.frg"};

    SUBCASE("default spec writes six files, repeatably"){
        REQUIRE(cmd_synth({std::nullopt, dir / "a", std::nullopt}, log) == kExitOk);
        REQUIRE(cmd_synth({std::nullopt, dir / "b", std::nullopt}, log) == kExitOk);
        int n = 0;
        for(const auto &e : fs::directory_iterator(dir / "a")){
            (void)e;
            ++n;
        }
        CHECK(n == 6);
        for(const auto &f : files){
            REQUIRE(fs::exists(dir / "a" / f));
            CHECK(file_bytes(dir / "a" / f) == file_bytes(dir / "b" / f));
        }
        CHECK(read_volume_header(dir / "a" / "s_gt.frg").kind == VolumeKind::vector);
        CHECK(read_volume_header(dir / "a" / "moving_mask.frg").kind == VolumeKind::label);
        CHECK(file_bytes(dir / "a" / "moving.frg") != file_bytes(dir / "a" / "fixed.frg"));
    }
    SUBCASE("amplitude 0 gives moving == fixed"){
        write_text(dir / "s.spec", "phantom.dims = 40 40 40\nbump.amplitude_voxels = 0\n");
        REQUIRE(cmd_synth({dir / "s.spec", dir / "z", std::nullopt}, log) == kExitOk);
        CHECK(file_bytes(dir / "z" / "moving.frg") == file_bytes(dir / "z" / "fixed.frg"));
        CHECK(file_bytes(dir / "z" / "moving_mask.frg") == file_bytes(dir / "z" / "fixed_mask.frg"));
    }
    SUBCASE("the seed override changes the phantom"){
        write_text(dir / "s.spec", "phantom.dims = 40 40 40\nphantom.seed = 2\n");
        REQUIRE(cmd_synth({dir / "s.spec", dir / "p", std::nullopt}, log) == kExitOk);
        REQUIRE(cmd_synth({dir / "s.spec", dir / "q", 9}, log) == kExitOk);
        CHECK(file_bytes(dir / "p" / "fixed.frg") != file_bytes(dir / "q" / "fixed.frg"));
    }
    SUBCASE("folding spec exits 4"){
        write_text(dir / "f.spec", "bump.amplitude_voxels = 16\nbump.sigma = 0.2\n");
        CHECK(cmd_synth({dir / "f.spec", dir / "f", std::nullopt}, log) == kExitFolding);
    }
    SUBCASE("bad spec exits 1"){
        write_text(dir / "b.spec", "bump.colour = red\n");
        CHECK(cmd_synth({dir / "b.spec", dir / "f", std::nullopt}, log) == kExitError);
    }
}

TEST_CASE("cmd_snapshots"){
    TempDir dir("cmd");
    const Volume3 img = random_volume({9, 9, 9}, 4);
    write_volume(dir / "img.frg", img);
    write_text(dir / "run.cfg", "coarse_dims = 4 4 4\nfine_dims = 5 5 5\nn_steps = 4\nnet.hidden_width = 8\n");
    std::ostringstream log;

    SUBCASE("zero-init params leave every snapshot equal to the input"){
        write_params(dir / "p.frp", init_params(NetConfig{.hidden_width = 8}));
        REQUIRE(cmd_snapshots({dir / "img.frg", dir / "p.frp", dir / "run.cfg", dir / "s"}, log) == kExitOk);
        for(int k = 0; k <= 4; ++k){
            const fs::path f = dir / "s" / ("snapshot_00" + std::to_string(k) + ".frg");
            REQUIRE(fs::exists(f));
            CHECK(file_bytes(f) == file_bytes(dir / "img.frg"));
        }
        CHECK(!fs::exists(dir / "s" / "snapshot_005.frg"));
    }
    SUBCASE("constant velocity shifts by c k / n"){
        // Four voxels over the flow: one voxel per step.
        const Point3 c(4 * 0.25, 0, 0);
        write_params(dir / "c.frp", constant_velocity_params(NetConfig{.hidden_width = 8}, c));
        REQUIRE(cmd_snapshots({dir / "img.frg", dir / "c.frp", dir / "run.cfg", dir / "s"}, log) == kExitOk);
        CHECK(file_bytes(dir / "s" / "snapshot_000.frg") == file_bytes(dir / "img.frg"));
        for(int k = 1; k <= 4; ++k){
            const Volume3 w = read_scalar_volume(dir / "s" / ("snapshot_00" + std::to_string(k) + ".frg"));
            for(int z = 0; z < 9; ++z){
                for(int y = 0; y < 9; ++y){
                    for(int x = 0; x + k < 9; ++x){
                        REQUIRE(std::abs(w.at(x, y, z) - img.at(x + k, y, z)) <= 1e-5);
                    }
                }
            }
        }
    }
    SUBCASE("a missing checkpoint exits 1"){
        CHECK(cmd_snapshots({dir / "img.frg", dir / "none.frp", dir / "run.cfg", dir / "s"}, log) == kExitError);
    }
}

TEST_CASE("format_loss_table"){
    const std::string t = format_loss_table({LossBreakdown{1.5, 1.0, 5.0, 0.0, 0.1}});
    CHECK(t == "iter\ttotal\tsimilarity\tregularizer\tdistill\tlambda\n0\t1.5\t1\t5\t0\t0.10000000000000001\n");
}
