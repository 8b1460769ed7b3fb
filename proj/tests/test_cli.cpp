// End-to-end checks of the command-line tool: exit codes, determinism and
// machine-readable output. WAMO_CLI is injected by the build.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <array>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "wamo/motion.hpp"

using namespace wamo;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct CmdResult {
    int exit_code = -1;
    std::string out;
};

CmdResult run_cli(const std::string& args) {
    const std::string tmp = (fs::temp_directory_path() / "wamo_cli_out.txt").string();
    const std::string cmd = std::string(WAMO_CLI) + " " + args + " > " + tmp + " 2>/dev/null";
    const int status = std::system(cmd.c_str());
    CmdResult res;
    res.exit_code = WEXITSTATUS(status);
    std::ifstream f(tmp, std::ios::binary);
    res.out = std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return res;
}

std::string slurp(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    REQUIRE(f);
    return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

std::string tmpdir(const std::string& tag) {
    const std::string d = (fs::temp_directory_path() / ("wamo_cli_" + tag)).string();
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

void write_tiny_config(const std::string& path, int epochs) {
    json cfg;
    cfg["n_pairs"] = 12;
    cfg["n_classes"] = 4;
    cfg["frames"] = 8;
    cfg["joints"] = 2;
    cfg["latent"] = 8;
    cfg["levels"] = 2;
    cfg["lambda_g"] = 4;
    cfg["batch"] = 4;
    cfg["epochs"] = epochs;
    cfg["lr"] = 1e-3;
    std::ofstream f(path);
    f << cfg.dump();
}

}  // namespace

TEST_CASE("gen-data writes three reloadable splits, deterministically") {
    const std::string d1 = tmpdir("gen1"), d2 = tmpdir("gen2");
    CmdResult r1 = run_cli("gen-data --out " + d1 + " --seed 7");
    REQUIRE(r1.exit_code == 0);
    json summary = json::parse(r1.out);
    CHECK(summary["train_pairs"] == 102);
    CHECK(summary["val_pairs"] == 12);
    CHECK(summary["test_pairs"] == 14);

    for (const char* split : {"train", "val", "test"}) {
        Corpus c = load_corpus(d1 + "/" + split);
        CHECK_FALSE(c.pairs.empty());
    }
    CmdResult r2 = run_cli("gen-data --out " + d2 + " --seed 7");
    REQUIRE(r2.exit_code == 0);
    for (const char* name :
         {"train.manifest.json", "train.data.bin", "val.data.bin", "test.data.bin"})
        CHECK(slurp(d1 + "/" + name) == slurp(d2 + "/" + name));
}

TEST_CASE("gen-data with unwritable output reports an io error") {
    CmdResult r = run_cli("gen-data --out /proc/nowhere/x --seed 1");
    CHECK(r.exit_code == 1);
}

TEST_CASE("roundtrip command") {
    const std::string d = tmpdir("rt");
    REQUIRE(run_cli("gen-data --out " + d + " --seed 3").exit_code == 0);

    SUBCASE("haar level 3 passes with tiny errors") {
        CmdResult r = run_cli("roundtrip --corpus " + d + "/val --family haar --levels 3");
        CHECK(r.exit_code == 0);
        REQUIRE(r.out.rfind("pair_index,T,J,max_abs_error\n", 0) == 0);
        int rows = 0;
        for (char ch : r.out) rows += ch == '\n';
        CHECK(rows == 13);  // header + 12 pairs
    }
    SUBCASE("level too deep for T is a precondition error") {
        CmdResult r = run_cli("roundtrip --corpus " + d + "/val --family haar --levels 7");
        CHECK(r.exit_code == 2);
    }
    SUBCASE("empty corpus produces a header-only table") {
        Corpus empty;
        save_corpus(empty, fs::temp_directory_path().string() + "/wamo_cli_empty");
        CmdResult r = run_cli("roundtrip --corpus " +
                              fs::temp_directory_path().string() + "/wamo_cli_empty");
        CHECK(r.exit_code == 0);
        CHECK(r.out == "pair_index,T,J,max_abs_error\n");
    }
    SUBCASE("missing corpus is an io error") {
        CmdResult r = run_cli("roundtrip --corpus /nonexistent/corpus");
        CHECK(r.exit_code == 1);
    }
}

TEST_CASE("train / eval pipeline") {
    const std::string d = tmpdir("train");
    const std::string cfg = d + "/config.json";
    write_tiny_config(cfg, 2);
    REQUIRE(run_cli("gen-data --out " + d + "/corpus --config " + cfg + " --seed 9").exit_code ==
            0);

    const auto t0 = std::chrono::steady_clock::now();
    CmdResult t1 =
        run_cli("train --config " + cfg + " --corpus " + d + "/corpus --out " + d + "/run1 --seed 4");
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    REQUIRE(t1.exit_code == 0);
    CHECK(secs < 60.0);
    CHECK(fs::exists(d + "/run1/best.manifest.json"));
    CHECK(fs::exists(d + "/run1/best.params.bin"));
    CHECK(fs::exists(d + "/run1/metrics.jsonl"));

    json train_out = json::parse(t1.out);

    SUBCASE("metrics log lines parse and training is byte-deterministic") {
        std::ifstream log(d + "/run1/metrics.jsonl");
        std::string line;
        int lines = 0;
        while (std::getline(log, line)) {
            json rec = json::parse(line);
            CHECK(rec.contains("epoch"));
            CHECK(rec.contains("loss_total"));
            CHECK(rec["val"].contains("rsum"));
            ++lines;
        }
        CHECK(lines == 2);

        CmdResult t2 = run_cli("train --config " + cfg + " --corpus " + d + "/corpus --out " +
                               d + "/run2 --seed 4");
        REQUIRE(t2.exit_code == 0);
        CHECK(slurp(d + "/run1/metrics.jsonl") == slurp(d + "/run2/metrics.jsonl"));
        CHECK(slurp(d + "/run1/best.params.bin") == slurp(d + "/run2/best.params.bin"));
    }

    SUBCASE("eval reproduces the train-time report from the checkpoint") {
        CmdResult e1 = run_cli("eval --checkpoint " + d + "/run1/best --corpus " + d +
                               "/corpus/val");
        REQUIRE(e1.exit_code == 0);
        json rep = json::parse(e1.out);
        CHECK(rep["rsum"] == train_out["val"]["rsum"]);

        CmdResult e2 = run_cli("eval --checkpoint " + d + "/run1/best --corpus " + d +
                               "/corpus/val");
        CHECK(e1.out == e2.out);

        double rsum = rep["rsum"].get<double>();
        double acc = 0;
        for (const char* dir : {"t2m", "m2t"})
            for (const char* k : {"r1", "r2", "r3", "r5", "r10"})
                acc += rep[dir][k].get<double>();
        CHECK(std::fabs(acc - rsum) <= 1e-9);
    }

    SUBCASE("weights flag reports all components while projecting the total") {
        CmdResult t3 = run_cli("train --config " + cfg + " --corpus " + d + "/corpus --out " + d +
                               "/run3 --seed 4 --weights 1,0,0");
        REQUIRE(t3.exit_code == 0);
        std::ifstream log(d + "/run3/metrics.jsonl");
        std::string line;
        REQUIRE(std::getline(log, line));
        json rec = json::parse(line);
        CHECK(rec["loss_rec"].get<double>() > 0.0);
        CHECK(rec["loss_dmsp"].get<double>() > 0.0);
        CHECK(rec["loss_total"].get<double>() ==
              doctest::Approx(rec["loss_nce"].get<double>()).epsilon(1e-12));
    }

    SUBCASE("checkpoint/corpus shape mismatch is a validation error") {
        const std::string d2 = tmpdir("mismatch");
        json big;
        big["n_pairs"] = 6;
        big["n_classes"] = 2;
        big["frames"] = 16;
        big["joints"] = 4;
        std::ofstream f(d2 + "/config.json");
        f << big.dump();
        f.close();
        REQUIRE(run_cli("gen-data --out " + d2 + "/corpus --config " + d2 +
                        "/config.json --seed 1")
                    .exit_code == 0);
        CmdResult r = run_cli("eval --checkpoint " + d + "/run1/best --corpus " + d2 +
                              "/corpus/val");
        CHECK(r.exit_code == 2);
    }
}

TEST_CASE("config validation") {
    const std::string d = tmpdir("cfg");
    std::ofstream f(d + "/bad.json");
    f << R"({"n_pairs": 8, "not_a_real_key": 1})";
    f.close();
    CmdResult r = run_cli("gen-data --out " + d + " --config " + d + "/bad.json");
    CHECK(r.exit_code == 2);
}

TEST_CASE("gradcheck command") {
    SUBCASE("default tiny configuration passes") {
        CmdResult r = run_cli("gradcheck --seed 1");
        REQUIRE(r.exit_code == 0);
        json rep = json::parse(r.out);
        CHECK(rep["pass"].get<bool>());
        CHECK(rep["groups"].size() >= 10);
    }
    SUBCASE("unreachable tolerance exits 4 with per-group detail") {
        CmdResult r = run_cli("gradcheck --seed 1 --tolerance 1e-14");
        CHECK(r.exit_code == 4);
        json rep = json::parse(r.out);
        bool any_fail = false;
        for (const auto& g : rep["groups"]) any_fail = any_fail || !g["pass"].get<bool>();
        CHECK(any_fail);
    }
    SUBCASE("single-level config audits exactly two band stacks") {
        const std::string d = tmpdir("gc1");
        std::ofstream f(d + "/config.json");
        f << R"({"frames":8,"joints":2,"latent":8,"levels":1,"lambda_g":4,"temperature":1.0})";
        f.close();
        CmdResult r = run_cli("gradcheck --seed 1 --config " + d + "/config.json");
        REQUIRE(r.exit_code == 0);
        json rep = json::parse(r.out);
        int stacks = 0;
        for (const auto& g : rep["groups"])
            if (g["group"].get<std::string>().rfind("attn_intra", 0) == 0) ++stacks;
        CHECK(stacks == 2);
    }
}

TEST_CASE("shuffle-demo") {
    const std::string d = tmpdir("shuffle");
    REQUIRE(run_cli("gen-data --out " + d + " --seed 2").exit_code == 0);

    SUBCASE("lambda_s = 0 prints the identity permutation") {
        CmdResult r = run_cli("shuffle-demo --corpus " + d + "/val --lambda-g 16 --lambda-s 0 "
                              "--seed 3");
        REQUIRE(r.exit_code == 0);
        json rep = json::parse(r.out);
        auto perm = rep["permutation"].get<std::vector<std::size_t>>();
        for (std::size_t i = 0; i < perm.size(); ++i) CHECK(perm[i] == i);
        CHECK(rep["g_o"] == rep["g_s"]);
    }
    SUBCASE("T=64, lambda_g=16 groups of four") {
        CmdResult r = run_cli("shuffle-demo --corpus " + d + "/val --lambda-g 16 --lambda-s 0.25 "
                              "--seed 3");
        REQUIRE(r.exit_code == 0);
        json rep = json::parse(r.out);
        auto go = rep["g_o"].get<std::vector<std::size_t>>();
        REQUIRE(go.size() == 64);
        for (std::size_t i = 0; i < 64; ++i) CHECK(go[i] == i / 4);
    }
    SUBCASE("two seeds differ in permutation but share g_o") {
        CmdResult a = run_cli("shuffle-demo --corpus " + d + "/val --seed 3");
        CmdResult b = run_cli("shuffle-demo --corpus " + d + "/val --seed 4");
        REQUIRE(a.exit_code == 0);
        REQUIRE(b.exit_code == 0);
        json ja = json::parse(a.out), jb = json::parse(b.out);
        CHECK(ja["g_o"] == jb["g_o"]);
        CHECK(ja["permutation"] != jb["permutation"]);
    }
    SUBCASE("out-of-range parameters exit 2") {
        CmdResult r = run_cli("shuffle-demo --corpus " + d + "/val --lambda-s 1.5");
        CHECK(r.exit_code == 2);
    }
}
