#include "robofi.h"

#include <cstdlib>
#include <cstring>
#include <map>
#include <new>
#include <optional>
#include <set>
#include <string>

#include "json.hpp"
#include "robofi/checkpoint.hpp"
#include "robofi/dataset.hpp"
#include "robofi/ingest.hpp"
#include "robofi/preprocess.hpp"
#include "robofi/protocols.hpp"
#include "robofi/report.hpp"
#include "robofi/synth.hpp"
#include "robofi/training.hpp"

using nlohmann::json;
using namespace robofi;

struct rfs_dataset {
  Dataset ds;
};

struct rfs_model {
  models::Classifier<float> model;
  preprocess::SnifferStats stats;
};

struct rfs_report {
  protocols::ProtocolReport report;
};

namespace {

thread_local std::string g_message;
thread_local std::string g_code;

void clear_error() {
  g_message.clear();
  g_code.clear();
}

rfs_status fail(rfs_status s, std::string code, std::string message) {
  g_code = std::move(code);
  g_message = std::move(message);
  return s;
}

template <typename F>
rfs_status guarded(F&& fn) {
  clear_error();
  try {
    fn();
    return RFS_OK;
  } catch (const Error& e) {
    std::string code(error_code_name(e.code()));
    std::string msg = e.what();
    if (msg.rfind(code + ": ", 0) == 0) msg.erase(0, code.size() + 2);
    return fail(is_validation_error(e.code()) ? RFS_ERR_VALIDATION : RFS_ERR_RUNTIME, std::move(code), std::move(msg));
  } catch (const json::exception& e) {
    return fail(RFS_ERR_VALIDATION, "Format", e.what());
  } catch (const std::bad_alloc&) {
    return fail(RFS_ERR_RUNTIME, "OutOfMemory", "out of memory");
  } catch (const std::filesystem::filesystem_error& e) {
    return fail(RFS_ERR_RUNTIME, "Io", e.what());
  } catch (const std::exception& e) {
    return fail(RFS_ERR_RUNTIME, "Internal", e.what());
  }
}

char* dup_string(const std::string& s) {
  char* p = static_cast<char*>(std::malloc(s.size() + 1));
  if (!p) throw std::bad_alloc();
  std::memcpy(p, s.c_str(), s.size() + 1);
  return p;
}

void need(const void* p, const char* what) {
  if (!p) throw Error(ErrorCode::InvalidConfig, std::string(what) + " must not be NULL");
}

protocols::RunConfig run_config(const char* text) {
  auto cfg = protocols::RunConfig::from_json(text && *text ? text : "{}");
  cfg.validate();
  return cfg;
}

std::vector<std::string> split_names(const char* list) {
  std::vector<std::string> out;
  if (!list) return out;
  std::string cur;
  for (const char* p = list;; ++p) {
    if (*p == ',' || *p == '\0') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
      if (*p == '\0') break;
    } else if (*p != ' ') {
      cur += *p;
    }
  }
  return out;
}

std::string protocol_name(std::string name) {
  if (name == "sweep-freq") return "freq_sweep";
  if (name == "sweep-loc") return "location";
  return name;
}

}  // namespace

extern "C" {

const char* rfs_version(void) { return "1.0.0"; }
const char* rfs_last_error(void) { return g_message.c_str(); }
const char* rfs_last_error_code(void) { return g_code.c_str(); }
void rfs_free_string(char* s) { std::free(s); }

rfs_status rfs_default_run_config(const char* preset, char** out_json) {
  return guarded([&] {
    need(out_json, "out_json");
    protocols::RunConfig cfg;
    const std::string p = preset ? preset : "paper";
    if (p == "paper") {
      cfg.model = models::ModelConfig::paper();
    } else if (p == "tiny") {
      cfg.model = models::ModelConfig::tiny();
    } else {
      throw Error(ErrorCode::InvalidConfig, "unknown model preset '" + p + "'");
    }
    *out_json = dup_string(cfg.to_json());
  });
}

rfs_status rfs_resolve_run_config(const char* run_json, char** out_json) {
  return guarded([&] {
    need(out_json, "out_json");
    *out_json = dup_string(run_config(run_json).to_json());
  });
}

rfs_status rfs_default_synth_spec(char** out_json) {
  return guarded([&] {
    need(out_json, "out_json");
    *out_json = dup_string(synth::SynthSpec{}.to_json());
  });
}

rfs_status rfs_resolve_synth_spec(const char* spec_json, char** out_json) {
  return guarded([&] {
    need(out_json, "out_json");
    auto spec = synth::SynthSpec::from_json(spec_json && *spec_json ? spec_json : "{}");
    spec.validate();
    *out_json = dup_string(spec.to_json());
  });
}

rfs_status rfs_dataset_open(const char* dir, rfs_dataset** out) {
  return guarded([&] {
    need(dir, "dir");
    need(out, "out");
    *out = new rfs_dataset{read_dataset(dir)};
  });
}

rfs_status rfs_dataset_synthesize(const char* spec_json, size_t workers, rfs_dataset** out) {
  return guarded([&] {
    need(out, "out");
    const auto spec = synth::SynthSpec::from_json(spec_json && *spec_json ? spec_json : "{}");
    *out = new rfs_dataset{synth::gen_dataset(spec, workers == 0 ? 1 : workers)};
  });
}

rfs_status rfs_dataset_import(const char* dir, const char* adapter, const char* mask_json, rfs_dataset** out,
                              char** failures_json) {
  return guarded([&] {
    need(dir, "dir");
    need(out, "out");
    ingest::ImportOptions opt;
    if (mask_json) opt.mask = preprocess::SubcarrierMask::from_json(mask_json).keep;
    auto r = ingest::import_external(dir, adapter ? adapter : "identity", opt);
    if (failures_json) {
      json f = json::array();
      for (const auto& x : r.failures) f.push_back({{"path", x.path}, {"reason", x.reason}});
      *failures_json = dup_string(f.dump(2) + "\n");
    }
    *out = new rfs_dataset{std::move(r.dataset)};
  });
}

rfs_status rfs_dataset_merge(rfs_dataset* into, const rfs_dataset* other) {
  return guarded([&] {
    need(into, "into");
    need(other, "other");
    into->ds.samples.insert(into->ds.samples.end(), other->ds.samples.begin(), other->ds.samples.end());
  });
}

rfs_status rfs_dataset_filter(rfs_dataset* ds, const char* velocity, const char* location) {
  return guarded([&] {
    need(ds, "ds");
    std::set<Velocity> vs;
    std::set<Location> ls;
    for (const auto& n : split_names(velocity)) vs.insert(velocity_from_name(n));
    for (const auto& n : split_names(location)) ls.insert(location_from_name(n));
    Dataset kept;
    for (Sample& s : ds->ds.samples) {
      if ((vs.empty() || vs.count(s.meta.velocity)) && (ls.empty() || ls.count(s.meta.location))) {
        kept.samples.push_back(std::move(s));
      }
    }
    ds->ds = std::move(kept);
  });
}

rfs_status rfs_dataset_downsample(rfs_dataset* ds, int rate_hz) {
  return guarded([&] {
    need(ds, "ds");
    ds->ds = preprocess::downsample(std::move(ds->ds), rate_hz);
  });
}

rfs_status rfs_dataset_save(const rfs_dataset* ds, const char* dir) {
  return guarded([&] {
    need(ds, "ds");
    need(dir, "dir");
    write_dataset(dir, ds->ds);
  });
}

size_t rfs_dataset_size(const rfs_dataset* ds) { return ds ? ds->ds.size() : 0; }

rfs_status rfs_dataset_summary(const rfs_dataset* ds, char** out_json) {
  return guarded([&] {
    need(ds, "ds");
    need(out_json, "out_json");
    std::map<std::string, std::size_t> by_label, by_velocity, by_location, by_rate;
    for (const Sample& s : ds->ds.samples) {
      ++by_label[std::string(label_name(s.meta.label))];
      ++by_velocity[std::string(velocity_name(s.meta.velocity))];
      ++by_location[std::string(location_name(s.meta.location))];
      ++by_rate[std::to_string(s.sniffer1.rate_hz)];
    }
    const json j = {{"samples", ds->ds.size()},
                    {"label", by_label},
                    {"velocity", by_velocity},
                    {"location", by_location},
                    {"rate_hz", by_rate}};
    *out_json = dup_string(j.dump(2) + "\n");
  });
}

rfs_status rfs_dataset_stats(const rfs_dataset* ds, char** out_json) {
  return guarded([&] {
    need(ds, "ds");
    need(out_json, "out_json");
    std::vector<std::size_t> all(ds->ds.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    *out_json = dup_string(preprocess::stats_to_json(preprocess::compute_sniffer_stats(ds->ds, all)));
  });
}

void rfs_dataset_free(rfs_dataset* ds) { delete ds; }

rfs_status rfs_model_train(const rfs_dataset* ds, const char* run_json, rfs_model** out, rfs_report** report_out) {
  return guarded([&] {
    need(ds, "ds");
    need(out, "out");
    const auto cfg = run_config(run_json);
    std::optional<protocols::TrainedModel> trained;
    auto r = protocols::run_train(ds->ds, cfg, &trained);
    auto* m = new rfs_model{std::move(trained->model), std::move(trained->stats)};
    if (report_out) {
      try {
        *report_out = new rfs_report{std::move(r)};
      } catch (...) {
        delete m;
        throw;
      }
    }
    *out = m;
  });
}

rfs_status rfs_model_save(const rfs_model* m, const char* dir) {
  return guarded([&] {
    need(m, "m");
    need(dir, "dir");
    const std::filesystem::path d(dir);
    std::filesystem::create_directories(d);
    write_text(d / "model.json", m->model.config().to_json());
    write_text(d / "stats.json", preprocess::stats_to_json(m->stats));
    save_checkpoint(d / "weights.rfsw", m->model.to_checkpoint());
  });
}

rfs_status rfs_model_load(const char* dir, rfs_model** out) {
  return guarded([&] {
    need(dir, "dir");
    need(out, "out");
    const std::filesystem::path d(dir);
    const auto cfg = models::ModelConfig::from_json(read_text(d / "model.json"));
    auto m = std::make_unique<rfs_model>(rfs_model{models::Classifier<float>(cfg, 0),
                                                   preprocess::stats_from_json(read_text(d / "stats.json"))});
    m->model.load_checkpoint(load_checkpoint(d / "weights.rfsw"));
    *out = m.release();
  });
}

rfs_status rfs_model_evaluate(const rfs_model* m, const rfs_dataset* ds, char** metrics_json) {
  return guarded([&] {
    need(m, "m");
    need(ds, "ds");
    need(metrics_json, "metrics_json");
    std::vector<std::size_t> all(ds->ds.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    const auto prepared = training::prepare(ds->ds, all, m->stats, m->model.config().patch);
    const auto e = training::evaluate(m->model, prepared);
    *metrics_json = dup_string(report::metrics_to_json(e.metrics));
  });
}

uint64_t rfs_model_weight_hash(const rfs_model* m) { return m ? m->model.weight_hash() : 0; }

void rfs_model_free(rfs_model* m) { delete m; }

rfs_status rfs_protocol_run(const char* name, const rfs_dataset* ds, const char* run_json, rfs_report** out) {
  return guarded([&] {
    need(name, "name");
    need(ds, "ds");
    need(out, "out");
    *out = new rfs_report{protocols::run_protocol(protocol_name(name), ds->ds, run_config(run_json))};
  });
}

rfs_status rfs_report_load(const char* path, rfs_report** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = new rfs_report{protocols::ProtocolReport::from_json(read_text(path))};
  });
}

rfs_status rfs_report_json(const rfs_report* r, char** out_json) {
  return guarded([&] {
    need(r, "r");
    need(out_json, "out_json");
    *out_json = dup_string(r->report.to_json());
  });
}

rfs_status rfs_report_render(const rfs_report* r, const char* dir, char** out_json) {
  return guarded([&] {
    need(r, "r");
    need(dir, "dir");
    const auto written = report::render(r->report, dir);
    if (out_json) *out_json = dup_string(json(written).dump(2) + "\n");
  });
}

void rfs_report_free(rfs_report* r) { delete r; }

}  // extern "C"
