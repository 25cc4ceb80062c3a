// End-to-end checks of the mablab binary and its exit-code contract.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <unistd.h>

#include <json.hpp>

#include "mab/io.hpp"
#include "mab/serialize.hpp"

namespace {

namespace fs = std::filesystem;

struct TempDir {
    fs::path path;
    TempDir() {
        static int counter = 0;
        path = fs::temp_directory_path() / ("mablab-cli-" + std::to_string(::getpid()) + "-" +
                                            std::to_string(counter++));
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

int run_cli(const std::string& args) {
    const std::string cmd = std::string(MABLAB_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("build writes a valid graph file") {
    TempDir tmp;
    const std::string out = tmp.file("vgg.archjson");
    CHECK(run_cli("build --arch vgg11 --classes 10 -o " + out) == 0);
    mab::ArchGraph g = mab::load_graph_file(out);
    CHECK(g.name == "vgg11");
    CHECK(mab::validate(g).empty());
}

TEST_CASE("inject produces a scanner-flaggable file; scan exit codes") {
    TempDir tmp;
    const std::string clean = tmp.file("vgg.archjson");
    const std::string evil = tmp.file("evil.archjson");
    REQUIRE(run_cli("build --arch vgg11 --classes 10 -o " + clean) == 0);
    CHECK(run_cli("inject --mode robust --alpha 10 --beta 1 --delta 1 " + clean + " -o " + evil) ==
          0);

    CHECK(run_cli("scan " + clean) == 0);
    CHECK(run_cli("scan " + evil) == 3);
    CHECK(run_cli("scan " + clean + " " + evil) == 3);

    // JSON report output
    CHECK(run_cli("scan --json-dir " + tmp.path.string() + " " + evil) == 3);
    auto report = nlohmann::json::parse(mab::read_file(tmp.file("evil.scan.json")));
    CHECK(report.at("verdict") == "suspicious");
}

TEST_CASE("inject without an injection site exits 1") {
    TempDir tmp;
    const std::string path = tmp.file("plain.archjson");
    mab::ArchGraph g;
    g.name = "plain";
    g.input_shape = {3, 8, 8};
    g.nodes["input"] = {"input", mab::Op::Input, {}};
    g.nodes["flatten"] = {"flatten", mab::Op::Flatten, {}};
    mab::Attrs fc;
    fc.in_features = 192;
    fc.out_features = 2;
    g.nodes["fc"] = {"fc", mab::Op::Dense, fc};
    g.nodes["output"] = {"output", mab::Op::Output, {}};
    g.edges = {{"input", "flatten", 0}, {"flatten", "fc", 0}, {"fc", "output", 0}};
    g.input_id = "input";
    g.output_id = "output";
    mab::save_graph_file(g, path);

    CHECK(run_cli("inject " + path + " -o " + tmp.file("x.archjson")) == 1);
}

TEST_CASE("missing and malformed files map to the documented exit codes") {
    TempDir tmp;
    CHECK(run_cli("scan " + tmp.file("absent.archjson")) == 2);
    std::ofstream(tmp.file("garbage.archjson")) << "{ not json";
    CHECK(run_cli("scan " + tmp.file("garbage.archjson")) == 1);
    CHECK(run_cli("build --arch unknown-arch -o " + tmp.file("x.archjson")) == 1);
}

TEST_CASE("poison writes a manifest with the sampled indices") {
    TempDir tmp;
    const std::string manifest = tmp.file("poison.json");
    CHECK(run_cli("poison --synthetic-classes 4 --synthetic-n 50 --fraction 0.2 --target 1 "
                  "--seed 3 -o " +
                  manifest) == 0);
    auto j = nlohmann::json::parse(mab::read_file(manifest));
    CHECK(j.at("dataset_size") == 50);
    CHECK(j.at("poisoned").size() == 10);
    for (const auto& row : j.at("poisoned")) CHECK(row.at("label") == 1);
}

TEST_CASE("experiment runs from a config file and is rerun-stable") {
    TempDir tmp;
    const std::string graph = tmp.file("probe.archjson");
    REQUIRE(run_cli("build --arch alexnet-small --classes 3 --input-size 16 -o " + graph) == 0);

    nlohmann::json cfg;
    cfg["version"] = "1";
    cfg["name"] = "cli-tiny";
    cfg["setting"] = 1;
    cfg["attack"] = "none";
    cfg["graph"] = {{"file", graph}};
    cfg["datasets"] = {{"train_a", {{"type", "synthetic"}, {"classes", 3}, {"n", 24}, {"seed", 5}}},
                       {"test_a", {{"type", "synthetic"}, {"classes", 3}, {"n", 12}, {"seed", 6}}}};
    cfg["attacker"] = {{"epochs", 1}, {"batch_size", 8}, {"lr", 0.05}, {"momentum", 0.9}};
    cfg["seeds"] = {1};
    cfg["output_dir"] = tmp.file("out");
    std::ofstream(tmp.file("cfg.json")) << cfg.dump(2);

    CHECK(run_cli("experiment " + tmp.file("cfg.json")) == 0);
    const std::string agg1 = mab::read_file(tmp.file("out") + "/aggregate.json");
    CHECK(run_cli("experiment " + tmp.file("cfg.json")) == 0);
    CHECK(mab::read_file(tmp.file("out") + "/aggregate.json") == agg1);

    // input files are never mutated
    CHECK(mab::read_file(graph) == mab::serialize(mab::load_graph_file(graph)));
}
