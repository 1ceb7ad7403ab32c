#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "rqdyn/experiments.hpp"

using namespace rqdyn;
namespace fs = std::filesystem;

namespace {

fs::path scratch() {
    const fs::path p = fs::temp_directory_path() / "rqdyn-test";
    fs::create_directories(p);
    return p;
}

fs::path write_config(const std::string& name, const std::string& body) {
    const fs::path p = scratch() / name;
    std::ofstream(p) << body;
    return p;
}

std::string slurp(const fs::path& p) {
    std::ostringstream ss;
    ss << std::ifstream(p).rdbuf();
    return ss.str();
}

const char* kSmallAgedDecay = R"({
  "experiment": "aged-decay",
  "waiting_time": {"kind": "bi_exponential", "pa": 0.8, "gamma_a": 1.0,
                   "pb": 0.2, "gamma_b": 0.05},
  "grid": {"step": 0.1, "span": 3.0},
  "ages": [0.0, 1.0],
  "include_limit_curve": true,
  "output": "OUT"
})";

std::string with_output(std::string body, const fs::path& out) {
    const auto pos = body.find("OUT");
    body.replace(pos, 3, out.string());
    return body;
}

}  // namespace

TEST_CASE("hash function reference vectors") {
    CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
    CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
    CHECK(fnv1a64("foobar") == 0x85944171f73967e8ULL);
}

TEST_CASE("catalog lists six experiments") {
    const auto cat = experiment_catalog();
    CHECK(cat.size() == 6);
    bool has_validate = false;
    for (const auto& [name, desc] : cat) {
        CHECK(!desc.empty());
        if (name == "validate") has_validate = true;
    }
    CHECK(has_validate);
}

TEST_CASE("schema violations raise config errors") {
    RunOptions opts;
    opts.threads = 1;
    SUBCASE("invalid json") {
        const auto p = write_config("bad.json", "{not json");
        CHECK_THROWS_AS(run_experiment(p.string(), opts), ConfigError);
    }
    SUBCASE("missing file") {
        CHECK_THROWS_AS(run_experiment((scratch() / "nope.json").string(), opts), IoError);
    }
    SUBCASE("unknown experiment") {
        const auto p = write_config("unk.json", R"({"experiment": "frobnicate"})");
        CHECK_THROWS_AS(run_experiment(p.string(), opts), ConfigError);
    }
    SUBCASE("unknown top-level key") {
        std::string body = with_output(kSmallAgedDecay, scratch() / "x.csv");
        body.insert(body.rfind('}'), R"(, "extra_key": 1)");
        const auto p = write_config("extra.json", body);
        CHECK_THROWS_AS(run_experiment(p.string(), opts), ConfigError);
    }
    SUBCASE("unknown nested key") {
        std::string body = with_output(kSmallAgedDecay, scratch() / "x.csv");
        body.replace(body.find("\"span\""), 6, "\"spam\"");
        const auto p = write_config("nested.json", body);
        CHECK_THROWS_AS(run_experiment(p.string(), opts), ConfigError);
    }
    SUBCASE("missing required key") {
        const auto p = write_config("nogrid.json", R"({
          "experiment": "aged-decay",
          "waiting_time": {"kind": "exponential", "gamma": 1.0},
          "ages": [0.0], "output": "x.csv"})");
        CHECK_THROWS_AS(run_experiment(p.string(), opts), ConfigError);
    }
    SUBCASE("wrong waiting-time parameters") {
        const auto p = write_config("wrongwt.json", R"({
          "experiment": "aged-decay",
          "waiting_time": {"kind": "exponential", "alpha": 0.5},
          "grid": {"step": 0.1, "span": 1.0},
          "ages": [0.0], "output": "x.csv"})");
        CHECK_THROWS_AS(run_experiment(p.string(), opts), ConfigError);
    }
}

TEST_CASE("aged-decay run writes a deterministic table and sidecar") {
    RunOptions opts;
    opts.threads = 1;
    const fs::path out = scratch() / "aged.csv";
    const auto p = write_config("aged.json", with_output(kSmallAgedDecay, out));
    CHECK(run_experiment(p.string(), opts) == 0);
    const std::string first = slurp(out);
    CHECK(first.rfind("tau,", 0) == 0);
    CHECK(first.find("survival[t=0]") != std::string::npos);
    CHECK(first.find("survival[t=inf]") != std::string::npos);
    CHECK(fs::exists(out.string() + ".meta.json"));
    const std::string meta = slurp(out.string() + ".meta.json");
    CHECK(meta.find("config_hash") != std::string::npos);
    CHECK(meta.find("wall_time_seconds") != std::string::npos);

    CHECK(run_experiment(p.string(), opts) == 0);
    CHECK(slurp(out) == first);  // byte-identical rerun
}

TEST_CASE("output override replaces the configured path") {
    RunOptions opts;
    opts.threads = 1;
    opts.out_override = (scratch() / "override.csv").string();
    const auto p =
        write_config("aged2.json", with_output(kSmallAgedDecay, scratch() / "ignored.csv"));
    CHECK(run_experiment(p.string(), opts) == 0);
    CHECK(fs::exists(opts.out_override));
}

TEST_CASE("unwritable output path raises an i/o error") {
    RunOptions opts;
    opts.threads = 1;
    opts.out_override = "/nonexistent-dir/x.csv";
    const auto p = write_config("aged3.json", with_output(kSmallAgedDecay, "unused.csv"));
    CHECK_THROWS_AS(run_experiment(p.string(), opts), IoError);
}

TEST_CASE("response-event run: threads do not change bytes, seeds do") {
    const char* tmpl = R"({
      "experiment": "response-event",
      "waiting_time": {"kind": "exponential", "gamma": 1.0},
      "grid": {"step": 0.1, "span": 3.0},
      "ensemble": {"n": 500, "seed": 9},
      "perturbation": {"lambda": 0.1, "omega": 1.0, "Omega": 3.0, "xi": "cos"},
      "output": "OUT"
    })";
    const fs::path out1 = scratch() / "re1.csv", out2 = scratch() / "re2.csv",
                   out3 = scratch() / "re3.csv";
    const auto p = write_config("re.json", with_output(tmpl, out1));
    RunOptions opts;
    opts.threads = 1;
    CHECK(run_experiment(p.string(), opts) == 0);
    opts.threads = 4;
    opts.out_override = out2.string();
    CHECK(run_experiment(p.string(), opts) == 0);
    CHECK(slurp(out1) == slurp(out2));
    opts.seed_override = 10;
    opts.out_override = out3.string();
    CHECK(run_experiment(p.string(), opts) == 0);
    CHECK(slurp(out1) != slurp(out3));
}

TEST_CASE("response-time run produces the flat-then-driven curve") {
    const char* tmpl = R"({
      "experiment": "response-time",
      "waiting_time": {"kind": "exponential", "gamma": 1.0},
      "grid": {"step": 0.1, "span": 4.0},
      "perturbation": {"lambda": 0.1, "omega": 1.0, "xi": "cos",
                       "op": "population-shift"},
      "output": "OUT"
    })";
    const fs::path out = scratch() / "rt.csv";
    const auto p = write_config("rt.json", with_output(tmpl, out));
    RunOptions opts;
    opts.threads = 1;
    CHECK(run_experiment(p.string(), opts) == 0);
    const std::string csv = slurp(out);
    CHECK(csv.rfind("tau,a_mean", 0) == 0);
}

TEST_CASE("bundled validation suite passes end to end") {
    RunOptions opts;
    opts.threads = 2;
    opts.out_override = (scratch() / "validate.csv").string();
    const auto p = write_config("validate.json", R"({"experiment": "validate"})");
    CHECK(run_experiment(p.string(), opts) == 0);
    const std::string csv = slurp(opts.out_override);
    CHECK(csv.find(",0,") == std::string::npos);  // no failing rows
}
