#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <json.hpp>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

#include "pillar/dataio.hpp"
#include "test_util.hpp"

using testutil::TempDir;

namespace {

#ifndef PILLARFUSE_BIN
#error "PILLARFUSE_BIN must point at the CLI binary"
#endif

struct RunResult {
    int exit_code = -1;
    std::string output;  // stdout + stderr
};

RunResult run_cli(const std::string& args) {
    const std::string command = std::string(PILLARFUSE_BIN) + " " + args + " 2>&1";
    FILE* pipe = popen(command.c_str(), "r");
    REQUIRE(pipe != nullptr);
    RunResult result;
    char buffer[4096];
    while (std::size_t got = fread(buffer, 1, sizeof buffer, pipe)) {
        result.output.append(buffer, got);
    }
    const int status = pclose(pipe);
    result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return result;
}

std::string read_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

std::size_t count_lines(const std::string& text) {
    std::size_t n = 0;
    for (char c : text) {
        if (c == '\n') ++n;
    }
    return n;
}

}  // namespace

TEST_CASE("synth is deterministic and writes a runnable fixture") {
    TempDir dir("cli_synth");
    const std::string flags = "--classes 4 --samples 120 --pillars 2 --seed 7";
    const RunResult a = run_cli("synth --out " + (dir.path() / "a").string() + " " + flags);
    const RunResult b = run_cli("synth --out " + (dir.path() / "b").string() + " " + flags);
    REQUIRE(a.exit_code == 0);
    REQUIRE(b.exit_code == 0);
    for (const char* name : {"p0.plrf", "p1.plrf", "labels.txt", "split1.txt", "split2.txt",
                             "split3.txt", "plan.txt"}) {
        CHECK(read_bytes(dir.path() / "a" / name) == read_bytes(dir.path() / "b" / name));
        CHECK(!read_bytes(dir.path() / "a" / name).empty());
    }
}

TEST_CASE("synth rejects zero pillars naming the flag") {
    const RunResult r = run_cli("synth --pillars 0 --out /tmp/should_not_exist_pillar0");
    CHECK(r.exit_code == 1);
    CHECK(r.output.find("--pillars") != std::string::npos);
}

TEST_CASE("unknown flags are rejected") {
    const RunResult r = run_cli("synth --frobnicate 3");
    CHECK(r.exit_code == 1);
}

TEST_CASE("run-protocol produces the report pair and prints the table") {
    TempDir dir("cli_proto");
    REQUIRE(run_cli("synth --out " + dir.path().string() +
                    " --classes 4 --samples 120 --pillars 2 --seed 11")
                .exit_code == 0);
    const RunResult r = run_cli("run-protocol --plan " + (dir.path() / "plan.txt").string() +
                                " --out " + (dir.path() / "run").string() + " --threads 2");
    REQUIRE(r.exit_code == 0);
    CHECK(r.output.find("split-1") != std::string::npos);
    CHECK(r.output.find("Average") != std::string::npos);

    const std::string csv = read_bytes(dir.path() / "run.accuracy.csv");
    CHECK(count_lines(csv) == 5);  // header + 3 splits + Average
    CHECK(!read_bytes(dir.path() / "run.report.json").empty());

    SUBCASE("rerun is byte-identical") {
        const std::string json_before = read_bytes(dir.path() / "run.report.json");
        REQUIRE(run_cli("run-protocol --plan " + (dir.path() / "plan.txt").string() + " --out " +
                        (dir.path() / "run2").string() + " --threads 4")
                    .exit_code == 0);
        CHECK(read_bytes(dir.path() / "run2.report.json") == json_before);
        CHECK(read_bytes(dir.path() / "run2.accuracy.csv") == csv);
    }
}

TEST_CASE("run-protocol norm override changes only the norm in the config echo") {
    TempDir dir("cli_norm");
    REQUIRE(run_cli("synth --out " + dir.path().string() +
                    " --classes 4 --samples 120 --pillars 2 --seed 13")
                .exit_code == 0);
    const std::string plan = (dir.path() / "plan.txt").string();
    REQUIRE(run_cli("run-protocol --plan " + plan + " --out " + (dir.path() / "l2").string() +
                    " --fusion.norm l2")
                .exit_code == 0);
    REQUIRE(run_cli("run-protocol --plan " + plan + " --out " + (dir.path() / "l1").string() +
                    " --fusion.norm l1")
                .exit_code == 0);
    nlohmann::json l2 = nlohmann::json::parse(read_bytes(dir.path() / "l2.report.json"));
    nlohmann::json l1 = nlohmann::json::parse(read_bytes(dir.path() / "l1.report.json"));
    CHECK(l2["config"]["fusion.norm"] == "l2");
    CHECK(l1["config"]["fusion.norm"] == "l1");
    l2["config"].erase("fusion.norm");
    l1["config"].erase("fusion.norm");
    CHECK(l2["config"] == l1["config"]);
}

TEST_CASE("run-protocol with a missing feature file exits 1 and names the path") {
    TempDir dir("cli_missing");
    REQUIRE(run_cli("synth --out " + dir.path().string() +
                    " --classes 4 --samples 120 --pillars 2 --seed 17")
                .exit_code == 0);
    std::filesystem::remove(dir.path() / "p1.plrf");
    const RunResult r = run_cli("run-protocol --plan " + (dir.path() / "plan.txt").string() +
                                " --out " + (dir.path() / "run").string());
    CHECK(r.exit_code == 1);
    CHECK(r.output.find("p1.plrf") != std::string::npos);
}

TEST_CASE("train-svm strict mode escalates non-convergence to exit 2") {
    TempDir dir("cli_strict");
    REQUIRE(run_cli("synth --out " + dir.path().string() +
                    " --classes 4 --samples 120 --pillars 1 --seed 19")
                .exit_code == 0);
    REQUIRE(run_cli("make-kernels --features " + (dir.path() / "p0.plrf").string() + " --out " +
                    (dir.path() / "p0.plrk").string())
                .exit_code == 0);
    const std::string common = "train-svm --kernel " + (dir.path() / "p0.plrk").string() +
                               " --labels " + (dir.path() / "labels.txt").string() + " --split " +
                               (dir.path() / "split1.txt").string();
    CHECK(run_cli(common).exit_code == 0);
    const RunResult strict = run_cli(common + " --max-iter 1 --strict");
    CHECK(strict.exit_code == 2);
}

TEST_CASE("train-mkl writes model and trace") {
    TempDir dir("cli_mkl");
    REQUIRE(run_cli("synth --out " + dir.path().string() +
                    " --classes 4 --samples 120 --pillars 2 --seed 23")
                .exit_code == 0);
    for (const char* p : {"p0", "p1"}) {
        REQUIRE(run_cli("make-kernels --features " + (dir.path() / (std::string(p) + ".plrf")).string() +
                        " --out " + (dir.path() / (std::string(p) + ".plrk")).string() + " --id " + p)
                    .exit_code == 0);
    }
    const RunResult r = run_cli(
        "train-mkl --kernels " + (dir.path() / "p0.plrk").string() + "," +
        (dir.path() / "p1.plrk").string() + " --labels " + (dir.path() / "labels.txt").string() +
        " --split " + (dir.path() / "split1.txt").string() + " --norm l1 --out " +
        (dir.path() / "m.plmk").string() + " --trace " + (dir.path() / "t.csv").string());
    REQUIRE(r.exit_code == 0);
    CHECK(r.output.find("beta:") != std::string::npos);
    CHECK(read_bytes(dir.path() / "t.csv").rfind("iteration,theta,gap", 0) == 0);
    CHECK(!read_bytes(dir.path() / "m.plmk").empty());
}

TEST_CASE("encode-fisher emits the 2KD pillar and is seed-deterministic") {
    TempDir dir("cli_fv");
    // ten descriptor files, D = 6
    std::string manifest_text;
    for (int i = 0; i < 10; ++i) {
        const std::string name = "d" + std::to_string(i) + ".plrf";
        pillar::write_feature_matrix(testutil::random_features(12 + i, 6, 900 + i, 1.0),
                                     dir.file(name));
        manifest_text += name + "\n";
    }
    std::ofstream(dir.file("manifest.txt")) << manifest_text;

    const std::string command = "encode-fisher --manifest " + dir.file("manifest.txt").string() +
                                " --components 8 --seed 5 --out " + dir.file("fv.plrf").string() +
                                " --gmm-out " + dir.file("g.plgm").string();
    REQUIRE(run_cli(command).exit_code == 0);
    const pillar::FeatureMatrix fv = pillar::load_feature_matrix(dir.file("fv.plrf"));
    CHECK(fv.n_samples == 10);
    CHECK(fv.n_dims == 96);  // 2 * 8 * 6

    const std::string gmm_bytes = read_bytes(dir.file("g.plgm"));
    REQUIRE(run_cli("encode-fisher --manifest " + dir.file("manifest.txt").string() +
                    " --components 8 --seed 5 --out " + dir.file("fv2.plrf").string() +
                    " --gmm-out " + dir.file("g2.plgm").string())
                .exit_code == 0);
    CHECK(read_bytes(dir.file("g2.plgm")) == gmm_bytes);
    CHECK(read_bytes(dir.file("fv2.plrf")) == read_bytes(dir.file("fv.plrf")));

    SUBCASE("empty manifest exits 1") {
        std::ofstream(dir.file("empty.txt")) << "";
        const RunResult r = run_cli("encode-fisher --manifest " + dir.file("empty.txt").string() +
                                    " --components 4 --out " + dir.file("x.plrf").string());
        CHECK(r.exit_code == 1);
    }
}

TEST_CASE("inspect accepts every emitted format and rejects corrupted magic") {
    TempDir dir("cli_inspect");
    REQUIRE(run_cli("synth --out " + dir.path().string() +
                    " --classes 4 --samples 120 --pillars 2 --seed 29")
                .exit_code == 0);
    REQUIRE(run_cli("make-kernels --features " + (dir.path() / "p0.plrf").string() + " --out " +
                    (dir.path() / "p0.plrk").string())
                .exit_code == 0);
    REQUIRE(run_cli("train-svm --kernel " + (dir.path() / "p0.plrk").string() + " --labels " +
                    (dir.path() / "labels.txt").string() + " --split " +
                    (dir.path() / "split1.txt").string() + " --out " + (dir.path() / "m.plsv").string())
                .exit_code == 0);
    REQUIRE(run_cli("train-mkl --kernels " + (dir.path() / "p0.plrk").string() + " --labels " +
                    (dir.path() / "labels.txt").string() + " --split " +
                    (dir.path() / "split1.txt").string() + " --out " + (dir.path() / "m.plmk").string())
                .exit_code == 0);

    CHECK(run_cli("inspect " + (dir.path() / "p0.plrf").string()).exit_code == 0);
    CHECK(run_cli("inspect " + (dir.path() / "p0.plrk").string()).exit_code == 0);
    CHECK(run_cli("inspect " + (dir.path() / "m.plsv").string()).exit_code == 0);
    CHECK(run_cli("inspect " + (dir.path() / "m.plmk").string()).exit_code == 0);

    // corrupt the magic
    std::string bytes = read_bytes(dir.path() / "p0.plrf");
    bytes[1] = 'X';
    std::ofstream(dir.path() / "corrupt.plrf", std::ios::binary) << bytes;
    const RunResult r = run_cli("inspect " + (dir.path() / "corrupt.plrf").string());
    CHECK(r.exit_code == 1);
    CHECK(r.output.find("magic") != std::string::npos);
}
