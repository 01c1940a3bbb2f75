// robofi: command-line front end over the C API.
//
// Every invocation resolves one explicit configuration (defaults, then the
// --config file, then flags), creates <out>/<subcommand>-<timestamp>/ and
// echoes the configuration there as config.json. Passing that file back via
// --config reruns the same experiment.

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "robofi.h"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Failure : std::runtime_error {
  int exit_code;
  std::string code;
  Failure(int exit, std::string c, const std::string& msg) : std::runtime_error(msg), exit_code(exit), code(std::move(c)) {}
};

[[noreturn]] void invalid(const std::string& msg) { throw Failure(1, "InvalidConfig", msg); }

void check(rfs_status s) {
  if (s != RFS_OK) throw Failure(s == RFS_ERR_VALIDATION ? 1 : 2, rfs_last_error_code(), rfs_last_error());
}

std::string take(char* p) {
  std::string s = p ? p : "";
  rfs_free_string(p);
  return s;
}

struct DatasetFree {
  void operator()(rfs_dataset* d) const { rfs_dataset_free(d); }
};
struct ModelFree {
  void operator()(rfs_model* m) const { rfs_model_free(m); }
};
struct ReportFree {
  void operator()(rfs_report* r) const { rfs_report_free(r); }
};
using DatasetPtr = std::unique_ptr<rfs_dataset, DatasetFree>;
using ModelPtr = std::unique_ptr<rfs_model, ModelFree>;
using ReportPtr = std::unique_ptr<rfs_report, ReportFree>;

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Failure(1, "Io", "cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
  if (!out) throw Failure(2, "Io", "cannot write " + p.string());
}

json parse_json(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw Failure(1, "Format", what + ": " + e.what());
  }
}

// Objects merge key by key; anything else (including null and arrays) replaces.
void overlay(json& base, const json& patch) {
  if (!base.is_object() || !patch.is_object()) {
    base = patch;
    return;
  }
  for (auto it = patch.begin(); it != patch.end(); ++it) overlay(base[it.key()], it.value());
}

std::string join(const std::vector<std::string>& v) {
  std::string s;
  for (const auto& x : v) s += (s.empty() ? "" : ",") + x;
  return s;
}

struct Flags {
  std::vector<std::string> datasets;
  std::optional<std::string> out, config, preset, adapter, mask, checkpoint, input;
  std::optional<std::uint64_t> seed;
  std::optional<int> rate;
  std::vector<std::string> velocity, location;
  std::optional<std::size_t> workers, max_epochs, patience, per_class;
};

json resolve(const std::string& sub, const Flags& f) {
  const json file = f.config ? parse_json(read_text(*f.config), *f.config) : json::object();
  if (!file.is_object()) invalid("config file must hold a JSON object");

  const std::string preset = f.preset ? *f.preset : file.value("model_preset", std::string("paper"));
  json cfg = parse_json(take([&] {
                          char* s = nullptr;
                          check(rfs_default_run_config(preset.c_str(), &s));
                          return s;
                        }()),
                        "defaults");
  const unsigned hc = std::thread::hardware_concurrency();
  cfg["workers"] = hc == 0 ? 1 : hc;
  cfg["datasets"] = json::array();
  cfg["out"] = "runs";
  cfg["rate"] = nullptr;
  cfg["velocity"] = json::array();
  cfg["location"] = json::array();
  cfg["adapter"] = "identity";
  cfg["mask"] = nullptr;
  cfg["checkpoint"] = nullptr;
  cfg["input"] = nullptr;
  if (sub == "synth") {
    char* s = nullptr;
    check(rfs_default_synth_spec(&s));
    cfg["synth"] = parse_json(take(s), "synth defaults");
  }

  json patch = file;
  // An explicit preset flag outranks model fields from the file.
  if (f.preset) patch.erase("model");
  if (sub != "synth") patch.erase("synth");
  overlay(cfg, patch);
  cfg["subcommand"] = sub;
  cfg["model_preset"] = preset;

  if (!f.datasets.empty()) cfg["datasets"] = f.datasets;
  if (f.out) cfg["out"] = *f.out;
  if (f.seed) {
    cfg["seed"] = *f.seed;
    if (sub == "synth") cfg["synth"]["seed"] = *f.seed;
  }
  if (f.rate) cfg["rate"] = *f.rate;
  if (!f.velocity.empty()) cfg["velocity"] = f.velocity;
  if (!f.location.empty()) cfg["location"] = f.location;
  if (f.workers) cfg["workers"] = *f.workers;
  if (f.adapter) cfg["adapter"] = *f.adapter;
  if (f.mask) cfg["mask"] = *f.mask;
  if (f.checkpoint) cfg["checkpoint"] = *f.checkpoint;
  if (f.input) cfg["input"] = *f.input;
  if (f.max_epochs) cfg["train"]["max_epochs"] = *f.max_epochs;
  if (f.patience) cfg["train"]["patience"] = *f.patience;
  if (sub == "synth") {
    if (!f.velocity.empty()) cfg["synth"]["velocities"] = f.velocity;
    if (!f.location.empty()) cfg["synth"]["locations"] = f.location;
    if (f.per_class) cfg["synth"]["per_class"] = *f.per_class;
    if (f.rate) cfg["synth"]["rate_hz"] = *f.rate;
    char* s = nullptr;
    check(rfs_resolve_synth_spec(cfg["synth"].dump().c_str(), &s));
    cfg["synth"] = parse_json(take(s), "synth spec");
  }

  if (cfg["workers"].get<std::size_t>() == 0) invalid("workers must be positive");
  char* s = nullptr;
  check(rfs_resolve_run_config(cfg.dump().c_str(), &s));
  overlay(cfg, parse_json(take(s), "run config"));
  return cfg;
}

class Run {
 public:
  Run(const json& cfg) : cfg_(cfg) {
    const fs::path root = cfg.at("out").get<std::string>();
    std::error_code ec;
    fs::create_directories(root, ec);
    if (ec) throw Failure(2, "Io", "cannot create " + root.string() + ": " + ec.message());
    const std::string stem = cfg.at("subcommand").get<std::string>() + "-" + timestamp("%Y%m%d-%H%M%S");
    for (int n = 1;; ++n) {
      const fs::path dir = root / (n == 1 ? stem : stem + "-" + std::to_string(n));
      if (fs::create_directory(dir, ec)) {
        dir_ = dir;
        break;
      }
      if (ec) throw Failure(2, "Io", "cannot create " + dir.string() + ": " + ec.message());
    }
    write_text(root / "latest", dir_.filename().string() + "\n");
    write_text(dir_ / "config.json", cfg.dump(2) + "\n");
    log_.open(dir_ / "log.txt");
  }

  const fs::path& dir() const { return dir_; }

  void log(const std::string& msg) {
    const std::string line = timestamp("%H:%M:%S") + " " + msg;
    std::cerr << line << "\n";
    log_ << line << "\n";
    log_.flush();
  }

 private:
  static std::string timestamp(const char* fmt) {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    localtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, fmt, &tm);
    return buf;
  }

  json cfg_;
  fs::path dir_;
  std::ofstream log_;
};

DatasetPtr load_datasets(const json& cfg, Run& run) {
  const auto paths = cfg.at("datasets").get<std::vector<std::string>>();
  if (paths.empty()) invalid("no --dataset given");
  DatasetPtr all;
  for (const auto& p : paths) {
    if (!fs::is_directory(p)) invalid("dataset directory " + p + " does not exist");
    rfs_dataset* d = nullptr;
    check(rfs_dataset_open(p.c_str(), &d));
    DatasetPtr one(d);
    run.log("loaded " + p + " (" + std::to_string(rfs_dataset_size(d)) + " samples)");
    if (!all) {
      all = std::move(one);
    } else {
      check(rfs_dataset_merge(all.get(), one.get()));
    }
  }
  const std::string v = join(cfg.at("velocity").get<std::vector<std::string>>());
  const std::string l = join(cfg.at("location").get<std::vector<std::string>>());
  if (!v.empty() || !l.empty()) {
    check(rfs_dataset_filter(all.get(), v.c_str(), l.c_str()));
    run.log("filtered to " + std::to_string(rfs_dataset_size(all.get())) + " samples");
  }
  if (!cfg.at("rate").is_null()) {
    check(rfs_dataset_downsample(all.get(), cfg.at("rate").get<int>()));
    run.log("downsampled to " + std::to_string(cfg.at("rate").get<int>()) + " Hz");
  }
  return all;
}

std::string run_json(const json& cfg) { return cfg.dump(); }

void save_dataset(const rfs_dataset* ds, Run& run) {
  check(rfs_dataset_save(ds, (run.dir() / "dataset").c_str()));
  char* s = nullptr;
  check(rfs_dataset_summary(ds, &s));
  write_text(run.dir() / "summary.json", take(s));
  run.log("wrote " + std::to_string(rfs_dataset_size(ds)) + " samples to " + (run.dir() / "dataset").string());
}

void render(const rfs_report* r, Run& run) {
  char* s = nullptr;
  check(rfs_report_render(r, run.dir().c_str(), &s));
  const json files = parse_json(take(s), "rendered files");
  run.log("wrote " + std::to_string(files.size()) + " report files");
  check(rfs_report_json(r, &s));
  const json rep = parse_json(take(s), "report");
  if (rep.contains("summary")) {
    const json& acc = rep["summary"]["accuracy"];
    std::printf("accuracy %.4f +- %.4f over %zu arm(s)\n", acc.value("mean", 0.0), acc.value("std", 0.0),
                rep["arms"].size());
  }
}

void cmd_synth(const json& cfg, Run& run) {
  rfs_dataset* d = nullptr;
  run.log("synthesizing");
  check(rfs_dataset_synthesize(cfg.at("synth").dump().c_str(), cfg.at("workers").get<std::size_t>(), &d));
  DatasetPtr ds(d);
  save_dataset(ds.get(), run);
}

void cmd_import(const json& cfg, Run& run) {
  const auto sources = cfg.at("datasets").get<std::vector<std::string>>();
  if (sources.empty()) invalid("no --dataset source directory given");
  std::string mask;
  if (!cfg.at("mask").is_null()) mask = read_text(cfg.at("mask").get<std::string>());
  const std::string adapter = cfg.at("adapter").get<std::string>();
  DatasetPtr all;
  json failures = json::array();
  for (const auto& src : sources) {
    rfs_dataset* d = nullptr;
    char* f = nullptr;
    check(rfs_dataset_import(src.c_str(), adapter.c_str(), mask.empty() ? nullptr : mask.c_str(), &d, &f));
    DatasetPtr one(d);
    for (auto& x : parse_json(take(f), "import failures")) failures.push_back(x);
    run.log("imported " + std::to_string(rfs_dataset_size(d)) + " samples from " + src);
    if (!all) {
      all = std::move(one);
    } else {
      check(rfs_dataset_merge(all.get(), one.get()));
    }
  }
  write_text(run.dir() / "failures.json", failures.dump(2) + "\n");
  if (!failures.empty()) run.log(std::to_string(failures.size()) + " sample(s) skipped, see failures.json");
  save_dataset(all.get(), run);
}

void cmd_preprocess(const json& cfg, Run& run) {
  DatasetPtr ds = load_datasets(cfg, run);
  char* s = nullptr;
  check(rfs_dataset_stats(ds.get(), &s));
  write_text(run.dir() / "stats.json", take(s));
  save_dataset(ds.get(), run);
}

void cmd_train(const json& cfg, Run& run) {
  DatasetPtr ds = load_datasets(cfg, run);
  run.log("training on fold 1");
  rfs_model* m = nullptr;
  rfs_report* r = nullptr;
  check(rfs_model_train(ds.get(), run_json(cfg).c_str(), &m, &r));
  ModelPtr model(m);
  ReportPtr rep(r);
  check(rfs_model_save(model.get(), (run.dir() / "checkpoint").c_str()));
  char hash[17];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(rfs_model_weight_hash(m)));
  run.log(std::string("saved checkpoint, weight hash ") + hash);
  render(rep.get(), run);
}

void cmd_eval(const json& cfg, Run& run) {
  if (cfg.at("checkpoint").is_null()) invalid("eval needs --checkpoint");
  rfs_model* m = nullptr;
  check(rfs_model_load(cfg.at("checkpoint").get<std::string>().c_str(), &m));
  ModelPtr model(m);
  DatasetPtr ds = load_datasets(cfg, run);
  char* s = nullptr;
  check(rfs_model_evaluate(model.get(), ds.get(), &s));
  const std::string metrics = take(s);
  write_text(run.dir() / "metrics.json", metrics);
  std::printf("accuracy %.4f on %zu samples\n", parse_json(metrics, "metrics").value("accuracy", 0.0),
              rfs_dataset_size(ds.get()));
}

void cmd_protocol(const std::string& name, const json& cfg, Run& run) {
  DatasetPtr ds = load_datasets(cfg, run);
  run.log("running " + name + " with " + std::to_string(cfg.at("workers").get<std::size_t>()) + " worker(s)");
  rfs_report* r = nullptr;
  check(rfs_protocol_run(name.c_str(), ds.get(), run_json(cfg).c_str(), &r));
  ReportPtr rep(r);
  render(rep.get(), run);
}

void cmd_report(const json& cfg, Run& run) {
  if (cfg.at("input").is_null()) invalid("report needs --input (a report.json or a run directory)");
  fs::path in = cfg.at("input").get<std::string>();
  if (fs::is_directory(in)) in /= "report.json";
  rfs_report* r = nullptr;
  check(rfs_report_load(in.c_str(), &r));
  ReportPtr rep(r);
  render(rep.get(), run);
}

int dispatch(const std::string& sub, const Flags& flags) {
  const json cfg = resolve(sub, flags);
  if (sub == "sweep-freq" && !cfg.at("rate").is_null()) invalid("sweep-freq decimates itself; drop --rate");
  if (sub == "report" || sub == "synth" || sub == "import") {
    // no dataset preconditions
  } else if (cfg.at("datasets").empty()) {
    invalid("no --dataset given");
  }
  Run run(cfg);
  std::printf("%s\n", run.dir().c_str());
  try {
    if (sub == "synth") cmd_synth(cfg, run);
    else if (sub == "import") cmd_import(cfg, run);
    else if (sub == "preprocess") cmd_preprocess(cfg, run);
    else if (sub == "train") cmd_train(cfg, run);
    else if (sub == "eval") cmd_eval(cfg, run);
    else if (sub == "report") cmd_report(cfg, run);
    else cmd_protocol(sub, cfg, run);
  } catch (const Failure& e) {
    run.log(std::string("failed: ") + e.code + ": " + e.what());
    throw;
  }
  run.log("done");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"robot-arm activity recognition from WiFi CSI"};
  app.require_subcommand(1);
  Flags flags;

  struct Sub {
    const char* name;
    const char* help;
  };
  const Sub subs[] = {
      {"synth", "generate a synthetic dataset"},
      {"import", "convert external captures into the canonical container"},
      {"preprocess", "filter, decimate and compute normalization statistics"},
      {"train", "train one model on the first fold and save a checkpoint"},
      {"eval", "score a checkpoint on a dataset"},
      {"cv", "repeated stratified 70/10/20 splits"},
      {"lovo", "leave one velocity out"},
      {"sweep-freq", "sampling rate x velocity grid"},
      {"sweep-loc", "sniffer location study"},
      {"report", "re-render tables and charts from a report.json"},
  };
  std::string chosen;
  for (const Sub& s : subs) {
    CLI::App* c = app.add_subcommand(s.name, s.help);
    c->add_option("--dataset", flags.datasets, "dataset directory (repeatable)");
    c->add_option("--out", flags.out, "root for run directories (default runs)");
    c->add_option("--seed", flags.seed, "base seed");
    c->add_option("--config", flags.config, "JSON config; flags override it");
    c->add_option("--rate", flags.rate, "sampling rate in Hz")->check(CLI::IsMember({30, 25, 20, 15, 10}));
    c->add_option("--velocity", flags.velocity, "V1, V2 or V3 (repeatable)");
    c->add_option("--location", flags.location, "L1..L4 (repeatable)");
    c->add_option("--workers", flags.workers, "parallel arms (default: logical cores)");
    c->add_option("--model-preset", flags.preset, "paper or tiny")->check(CLI::IsMember({"paper", "tiny"}));
    c->add_option("--max-epochs", flags.max_epochs, "training epoch cap");
    c->add_option("--patience", flags.patience, "early stopping patience");
    if (std::string(s.name) == "synth") c->add_option("--per-class", flags.per_class, "samples per class and cell");
    if (std::string(s.name) == "import") {
      c->add_option("--adapter", flags.adapter, "identity or rfsc");
      c->add_option("--mask", flags.mask, "JSON file listing the kept subcarrier columns");
    }
    if (std::string(s.name) == "eval") c->add_option("--checkpoint", flags.checkpoint, "checkpoint directory");
    if (std::string(s.name) == "report") c->add_option("--input", flags.input, "report.json or run directory");
    c->callback([&chosen, c] { chosen = c->get_name(); });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    return dispatch(chosen, flags);
  } catch (const Failure& e) {
    std::cerr << json{{"error", e.code}, {"message", e.what()}, {"exit", e.exit_code}}.dump() << "\n";
    return e.exit_code;
  } catch (const std::exception& e) {
    std::cerr << json{{"error", "Internal"}, {"message", e.what()}, {"exit", 2}}.dump() << "\n";
    return 2;
  }
}
