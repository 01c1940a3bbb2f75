#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"
#include "json.hpp"
#include "robofi.h"
#include "test_util.hpp"

using nlohmann::json;

namespace {

json take(char* s) {
  REQUIRE(s != nullptr);
  json j = json::parse(s);
  rfs_free_string(s);
  return j;
}

// Small scene: 2 samples per class at two velocities, fast enough for unit tests.
rfs_dataset* small_dataset(const std::string& velocities = R"(["V1","V3"])") {
  char* spec = nullptr;
  REQUIRE(rfs_default_synth_spec(&spec) == RFS_OK);
  json s = take(spec);
  s["per_class"] = 2;
  s["velocities"] = json::parse(velocities);
  rfs_dataset* ds = nullptr;
  REQUIRE(rfs_dataset_synthesize(s.dump().c_str(), 2, &ds) == RFS_OK);
  return ds;
}

std::string quick_run() {
  char* out = nullptr;
  REQUIRE(rfs_default_run_config("paper", &out) == RFS_OK);
  json c = take(out);
  c["model"]["depth"] = 1;
  c["model"]["embed_dim"] = 16;
  c["model"]["heads"] = 2;
  c["model"]["mlp_hidden"] = 16;
  c["model"]["head_hidden"] = 16;
  c["train"]["max_epochs"] = 2;
  c["train"]["patience"] = 2;
  c["split"]["folds"] = 1;
  c["workers"] = 1;
  return c.dump();
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int run_cli(const std::string& args, const std::filesystem::path& log) {
  const std::string cmd = std::string(ROBOFI_CLI) + " " + args + " >" + log.string() + " 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

}  // namespace

TEST_SUITE("capi") {
  TEST_CASE("errors carry a status, a code and a message") {
    rfs_dataset* ds = nullptr;
    CHECK(rfs_dataset_open("/nonexistent/robofi", &ds) != RFS_OK);
    CHECK(ds == nullptr);
    CHECK(std::string(rfs_last_error()).size() > 0);

    char* out = nullptr;
    CHECK(rfs_default_run_config("huge", &out) == RFS_ERR_VALIDATION);
    CHECK(out == nullptr);
    CHECK(rfs_resolve_run_config("{not json", &out) == RFS_ERR_VALIDATION);
    CHECK(std::string(rfs_last_error_code()) == "Format");
    CHECK(rfs_resolve_run_config(R"({"train":{"max_epochs":0}})", &out) == RFS_ERR_VALIDATION);

    rfs_dataset_free(nullptr);
    rfs_model_free(nullptr);
    rfs_report_free(nullptr);
    CHECK(std::string(rfs_version()).size() > 0);
  }

  TEST_CASE("resolved configs are complete and stable") {
    char* out = nullptr;
    REQUIRE(rfs_resolve_run_config("{}", &out) == RFS_OK);
    const json a = take(out);
    REQUIRE(rfs_resolve_run_config(a.dump().c_str(), &out) == RFS_OK);
    CHECK(take(out) == a);
    CHECK(a["train"]["lr"] == 1e-4);
    CHECK(a["model"]["patch"] == 45);

    REQUIRE(rfs_resolve_synth_spec(R"({"per_class":3})", &out) == RFS_OK);
    CHECK(take(out)["per_class"] == 3);
  }

  TEST_CASE("dataset filter, summary, save and reopen") {
    rfs_dataset* ds = small_dataset();
    CHECK(rfs_dataset_size(ds) == 32);
    REQUIRE(rfs_dataset_filter(ds, "V3", nullptr) == RFS_OK);
    CHECK(rfs_dataset_size(ds) == 16);
    CHECK(rfs_dataset_filter(ds, "V9", "") == RFS_ERR_VALIDATION);
    CHECK(std::string(rfs_last_error_code()) == "InvalidConfig");

    REQUIRE(rfs_dataset_downsample(ds, 15) == RFS_OK);
    char* out = nullptr;
    REQUIRE(rfs_dataset_summary(ds, &out) == RFS_OK);
    const json s = take(out);
    CHECK(s.dump().find("15") != std::string::npos);

    testutil::TempDir dir("capi_ds");
    REQUIRE(rfs_dataset_save(ds, dir.path().c_str()) == RFS_OK);
    rfs_dataset* back = nullptr;
    REQUIRE(rfs_dataset_open(dir.path().c_str(), &back) == RFS_OK);
    CHECK(rfs_dataset_size(back) == 16);
    REQUIRE(rfs_dataset_summary(back, &out) == RFS_OK);
    CHECK(take(out) == s);

    REQUIRE(rfs_dataset_merge(back, ds) == RFS_OK);
    CHECK(rfs_dataset_size(back) == 32);
    REQUIRE(rfs_dataset_stats(back, &out) == RFS_OK);
    CHECK(take(out).is_object());
    rfs_dataset_free(back);
    rfs_dataset_free(ds);
  }

  TEST_CASE("model train, save, load and evaluate") {
    rfs_dataset* ds = small_dataset();
    rfs_model* m = nullptr;
    rfs_report* r = nullptr;
    REQUIRE(rfs_model_train(ds, quick_run().c_str(), &m, &r) == RFS_OK);
    char* out = nullptr;
    REQUIRE(rfs_report_json(r, &out) == RFS_OK);
    const json rep = take(out);
    CHECK(rep["protocol"] == "train");

    testutil::TempDir dir("capi_model");
    REQUIRE(rfs_model_save(m, dir.path().c_str()) == RFS_OK);
    for (const char* f : {"model.json", "stats.json", "weights.rfsw"}) CHECK(std::filesystem::exists(dir.path() / f));
    rfs_model* back = nullptr;
    REQUIRE(rfs_model_load(dir.path().c_str(), &back) == RFS_OK);
    CHECK(rfs_model_weight_hash(back) == rfs_model_weight_hash(m));

    char *a = nullptr, *b = nullptr;
    REQUIRE(rfs_model_evaluate(m, ds, &a) == RFS_OK);
    REQUIRE(rfs_model_evaluate(back, ds, &b) == RFS_OK);
    const json ja = take(a), jb = take(b);
    CHECK(ja == jb);
    CHECK(ja["accuracy"].get<double>() >= 0.0);

    rfs_model* none = nullptr;
    CHECK(rfs_model_load((dir.path() / "missing").c_str(), &none) != RFS_OK);
    rfs_model_free(back);
    rfs_model_free(m);
    rfs_report_free(r);
    rfs_dataset_free(ds);
  }

  TEST_CASE("protocols run and reports round-trip through disk") {
    rfs_dataset* ds = small_dataset(R"(["V1","V2"])");
    rfs_report* r = nullptr;
    CHECK(rfs_protocol_run("lovo", ds, quick_run().c_str(), &r) == RFS_ERR_VALIDATION);
    CHECK(std::string(rfs_last_error_code()) == "MissingVelocity");
    CHECK(rfs_protocol_run("bogus", ds, quick_run().c_str(), &r) == RFS_ERR_VALIDATION);
    REQUIRE(rfs_protocol_run("cv", ds, quick_run().c_str(), &r) == RFS_OK);

    testutil::TempDir dir("capi_report");
    char* files = nullptr;
    REQUIRE(rfs_report_render(r, dir.path().c_str(), &files) == RFS_OK);
    CHECK(take(files).size() >= 2);
    rfs_report* back = nullptr;
    REQUIRE(rfs_report_load((dir.path() / "report.json").c_str(), &back) == RFS_OK);
    char *a = nullptr, *b = nullptr;
    REQUIRE(rfs_report_json(r, &a) == RFS_OK);
    REQUIRE(rfs_report_json(back, &b) == RFS_OK);
    CHECK(take(a) == take(b));
    rfs_report_free(back);
    rfs_report_free(r);
    rfs_dataset_free(ds);
  }
}

TEST_SUITE("cli") {
  TEST_CASE("exit codes, run directories and config echo") {
    testutil::TempDir dir("cli");
    const auto log = dir.path() / "log.txt";
    const std::string out = " --out " + (dir.path() / "runs").string();

    CHECK(run_cli("--help", log) == 0);
    CHECK(run_cli("frobnicate", log) == 1);
    CHECK(run_cli("synth --per-class 1 --velocity V7" + out, log) == 1);

    REQUIRE(run_cli("synth --per-class 1 --velocity V1 --velocity V2 --seed 5" + out, log) == 0);
    const auto latest = dir.path() / "runs" / "latest";
    REQUIRE(std::filesystem::exists(latest));
    std::string run = slurp(latest);
    while (!run.empty() && std::isspace(static_cast<unsigned char>(run.back()))) run.pop_back();
    const auto synth_dir = dir.path() / "runs" / run;
    CHECK(std::filesystem::exists(synth_dir / "config.json"));
    CHECK(std::filesystem::exists(synth_dir / "dataset"));
    const json cfg = json::parse(slurp(synth_dir / "config.json"));
    CHECK(cfg["seed"] == 5);

    const std::string data = " --dataset " + (synth_dir / "dataset").string();
    CHECK(run_cli("cv --max-epochs 0" + data + out, log) == 1);
    CHECK(run_cli("lovo" + data + out, log) == 1);
    CHECK(slurp(log).find("MissingVelocity") != std::string::npos);
    CHECK(run_cli("cv --dataset " + (dir.path() / "nope").string() + out, log) == 1);

    // The echoed config reproduces the dataset exactly.
    const auto again = dir.path() / "again";
    REQUIRE(run_cli("synth --config " + (synth_dir / "config.json").string() + " --out " + again.string(), log) == 0);
    std::string run2 = slurp(again / "latest");
    while (!run2.empty() && std::isspace(static_cast<unsigned char>(run2.back()))) run2.pop_back();
    CHECK(slurp(again / run2 / "summary.json") == slurp(synth_dir / "summary.json"));
    for (const auto& e : std::filesystem::directory_iterator(synth_dir / "dataset")) {
      if (!e.is_regular_file()) continue;
      CHECK(slurp(e.path()) == slurp(again / run2 / "dataset" / e.path().filename()));
    }
  }
}
