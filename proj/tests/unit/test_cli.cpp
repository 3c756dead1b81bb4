#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "cli.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Result {
  int code = 0;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = glyco::cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

json read_json(const fs::path& p) { return json::parse(glyco::oracle::slurp(p)); }

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("help and argument errors") {
  CHECK(run({"--help"}).code == 0);
  CHECK(run({"bolus", "--help"}).code == 0);
  const auto none = run({});
  CHECK(none.code == 2);
  CHECK(none.err.rfind("error: kind=config message=\"", 0) == 0);
  CHECK(run({"frobnicate"}).code == 2);
  CHECK(run({"bolus", "--cho", "abc"}).code == 2);
}

TEST_CASE("bolus") {
  const auto r = run({"bolus", "--cho", "60", "--cr", "10", "--gc", "180", "--gt", "120", "--cf",
                      "30", "--iob", "2"});
  CHECK(r.code == 0);
  CHECK(r.out == "bolus_units: 6\n");
  const auto neg = run({"bolus", "--cho", "0", "--cr", "10", "--gc", "100", "--gt", "120", "--cf",
                        "20", "--iob", "1", "--json"});
  CHECK(json::parse(neg.out).at("no_bolus_needed") == true);
  const auto mmol = run({"bolus", "--cho", "60", "--cr", "10", "--gc", "10", "--gt", "6.666666666666667",
                         "--cf", "1.6666666666666667", "--iob", "2", "--mmol", "--json"});
  CHECK(json::parse(mmol.out).at("units").get<double>() == doctest::Approx(6.0));
  const auto bad = run({"bolus", "--cho", "1", "--cr", "0", "--gc", "1", "--gt", "1", "--cf", "1"});
  CHECK(bad.code == 3);
  CHECK(bad.err.find("kind=domain") != std::string::npos);
}

TEST_CASE("configuration precedence") {
  const auto dir = glyco::oracle::scratch_dir("cli_cfg");
  {
    std::ofstream(dir / "cfg.json") << R"({"seed": 7, "lstm": {"epochs": 3}})";
    std::ofstream(dir / "typo.json") << R"({"sead": 7})";
  }
  auto seed_of = [&](const std::string& sub) {
    return read_json(dir / sub / "synth_report.json").at("config").at("seed").get<std::uint64_t>();
  };
  ::setenv("GLYCO_SEED", "5", 1);
  REQUIRE(run({"synth", "--patients", "1", "--days", "1", "--out", (dir / "env").string()}).code == 0);
  CHECK(seed_of("env") == 5);
  REQUIRE(run({"synth", "--patients", "1", "--days", "1", "--config", (dir / "cfg.json").string(),
               "--out", (dir / "file").string()})
              .code == 0);
  CHECK(seed_of("file") == 7);
  CHECK(read_json(dir / "file" / "synth_report.json").at("config").at("lstm").at("epochs") == 3);
  REQUIRE(run({"synth", "--patients", "1", "--days", "1", "--config", (dir / "cfg.json").string(),
               "--seed", "9", "--out", (dir / "flag").string()})
              .code == 0);
  CHECK(seed_of("flag") == 9);
  ::unsetenv("GLYCO_SEED");

  const auto typo = run({"synth", "--config", (dir / "typo.json").string(), "--out",
                         (dir / "typo").string()});
  CHECK(typo.code == 2);
  CHECK(typo.err.find("sead") != std::string::npos);
  CHECK_FALSE(fs::exists(dir / "typo"));
  fs::remove_all(dir);
}

TEST_CASE("failures leave no partial output") {
  const auto dir = glyco::oracle::scratch_dir("cli_fail");
  const auto missing = run({"prepare", "--cgm", (dir / "nope.csv").string(), "--out",
                            (dir / "prep").string()});
  CHECK(missing.code == 3);
  CHECK(missing.err.find("kind=io") != std::string::npos);
  CHECK_FALSE(fs::exists(dir / "prep"));

  {
    std::ofstream bad(dir / "bad.csv");
    bad << "patient_id,timestamp,glucose_mgdl\n";
    for (int i = 0; i < 10; ++i) bad << "p," << 1000 + 300 * i << ",oops\n";
  }
  const auto malformed = run({"ingest", "--cgm", (dir / "bad.csv").string(), "--out",
                              (dir / "ing").string()});
  CHECK(malformed.code == 3);
  CHECK(malformed.err.find("kind=format") != std::string::npos);
  CHECK_FALSE(fs::exists(dir / "ing"));
  fs::remove_all(dir);
}

TEST_CASE("end-to-end workflow") {
  const auto dir = glyco::oracle::scratch_dir("cli_e2e");
  auto p = [&](const char* name) { return (dir / name).string(); };
  REQUIRE(run({"synth", "--patients", "5", "--days", "14", "--seed", "1", "--out", p("data")}).code == 0);
  const std::string cgm = (dir / "data" / "cgm.csv").string();
  const std::string patients = (dir / "data" / "patients.csv").string();

  REQUIRE(run({"ingest", "--cgm", cgm, "--patients", patients, "--out", p("ingest")}).code == 0);
  CHECK(glyco::oracle::slurp(dir / "ingest" / "cgm.csv") == glyco::oracle::slurp(cgm));

  REQUIRE(run({"stats", "--cgm", cgm, "--patients", patients, "--out", p("stats")}).code == 0);
  const json stats = read_json(dir / "stats" / "stats.json");
  CHECK(stats.at("features").at("names").size() == 7);
  CHECK(fs::exists(dir / "stats" / "daily_profile.csv"));

  REQUIRE(run({"cluster", "--patients", patients, "--k", "2", "--n-init", "3", "--out", p("cluster")})
              .code == 0);
  const std::string cohorts = (dir / "cluster" / "cohorts.csv").string();

  REQUIRE(run({"prepare", "--cgm", cgm, "--seed", "1", "--k-folds", "3", "--train-step", "24",
               "--out", p("prep")})
              .code == 0);
  const json manifest = read_json(dir / "prep" / "manifest.json");
  CHECK(manifest.at("folds").size() == 3);

  REQUIRE(run({"train", "--prepared", p("prep"), "--model", "lstm", "--epochs", "3", "--hidden", "4",
               "--layers", "2", "--heuristic-n", "10", "--out", p("models")})
              .code == 0);
  CHECK(fs::exists(dir / "models" / "lstm_fold0.glyflstm"));
  CHECK(fs::exists(dir / "models" / "lstm_fold2_curve.csv"));

  const auto ev = run({"evaluate", "--prepared", p("prep"), "--models", "copy_last,lstm",
                       "--models-dir", p("models"), "--out", p("eval")});
  REQUIRE(ev.code == 0);
  const json report = read_json(dir / "eval" / "eval_report.json");
  REQUIRE(report.at("models").size() == 2);
  const auto& a = report.at("models")[0].at("folds");
  const auto& b = report.at("models")[1].at("folds");
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].at("fold") == b[i].at("fold"));
    CHECK(a[i].at("n_examples") == b[i].at("n_examples"));
  }
  CHECK(report.at("folds").size() == 3);
  CHECK(report.at("prepared_config").at("k_folds") == 3);

  // Fold-parallel evaluation gives the same bytes.
  REQUIRE(run({"evaluate", "--prepared", p("prep"), "--models", "copy_last,lstm", "--models-dir",
               p("models"), "--jobs", "3", "--out", p("eval_jobs")})
              .code == 0);
  CHECK(glyco::oracle::slurp(dir / "eval_jobs" / "eval_metrics.csv") ==
        glyco::oracle::slurp(dir / "eval" / "eval_metrics.csv"));

  const auto missing = run({"evaluate", "--prepared", p("prep"), "--models", "hmm", "--models-dir",
                            p("models"), "--out", p("eval_bad")});
  CHECK(missing.code == 2);
  CHECK_FALSE(fs::exists(dir / "eval_bad"));

  REQUIRE(run({"explain", "--model", (dir / "models" / "lstm_fold0.glyflstm").string(), "--prepared",
               (dir / "prep" / "fold0.glyfprep").string(), "--out", p("explain")})
              .code == 0);
  CHECK(read_json(dir / "explain" / "explain.json").at("trace_shape") == json{2, 143, 4});

  const auto cmp = run({"evaluate", "--compare-cohorts", "--cgm", cgm, "--cohorts", cohorts,
                        "--model", "linreg", "--k-folds", "2", "--out", p("compare")});
  REQUIRE(cmp.code == 0);
  CHECK(cmp.err.find("warning: cohort comparison") != std::string::npos);
  const json comparison = read_json(dir / "compare" / "cohort_comparison.json");
  CHECK(comparison.at("delta").size() == 2);
  CHECK(comparison.at("rmse").size() == 9);
  fs::remove_all(dir);
}

}
