#include "robofi/protocols.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "json.hpp"
#include "parallel.hpp"
#include "robofi/preprocess.hpp"

namespace robofi::protocols {

using nlohmann::json;

void SplitSpec::validate() const {
  const bool ok = train_frac > 0.0 && val_frac > 0.0 && test_frac > 0.0 &&
                  std::abs(train_frac + val_frac + test_frac - 1.0) < 1e-9 && folds >= 1;
  if (!ok) throw Error(ErrorCode::InvalidConfig, "split fractions must be positive and sum to 1, folds >= 1");
}

namespace {

/// Stratified order: classes shuffled internally, then merged by fractional
/// rank (j + 0.5) / n_c so any prefix holds each class in proportion +-1.
std::vector<std::size_t> interleaved_order(const Dataset& ds, std::vector<std::size_t> indices, bool stratified,
                                           ad::Rng& rng) {
  auto shuffle = [&rng](std::vector<std::size_t>& v) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.below(i)]);
  };
  if (!stratified) {
    shuffle(indices);
    return indices;
  }
  std::array<std::vector<std::size_t>, kNumClasses> by_class;
  for (std::size_t i : indices) by_class[label_index(ds.samples.at(i).meta.label)].push_back(i);
  struct Keyed {
    double key;
    std::size_t cls;
    std::size_t index;
  };
  std::vector<Keyed> keyed;
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    shuffle(by_class[c]);
    const double n = static_cast<double>(by_class[c].size());
    for (std::size_t j = 0; j < by_class[c].size(); ++j) {
      keyed.push_back({(static_cast<double>(j) + 0.5) / n, c, by_class[c][j]});
    }
  }
  std::sort(keyed.begin(), keyed.end(), [](const Keyed& a, const Keyed& b) {
    return a.key != b.key ? a.key < b.key : a.cls < b.cls;
  });
  std::vector<std::size_t> out;
  for (const auto& k : keyed) out.push_back(k.index);
  return out;
}

std::size_t round_count(double frac, std::size_t n) {
  return static_cast<std::size_t>(std::llround(frac * static_cast<double>(n)));
}

}  // namespace

std::vector<Split> mc_splits(const Dataset& ds, const SplitSpec& spec, std::uint64_t seed) {
  spec.validate();
  const std::size_t n = ds.size();
  if (n < kMinSplitSize) {
    throw Error(ErrorCode::TooSmall, std::to_string(n) + " samples; splitting needs at least " +
                                         std::to_string(kMinSplitSize));
  }
  const std::size_t n_test = round_count(spec.test_frac, n);
  const std::size_t n_val = round_count(spec.val_frac, n);
  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), 0);
  std::vector<Split> out;
  for (std::size_t f = 0; f < spec.folds; ++f) {
    ad::Rng rng(seed + f);
    const auto order = interleaved_order(ds, all, spec.stratified, rng);
    Split s;
    s.test.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_test));
    s.val.assign(order.begin() + static_cast<std::ptrdiff_t>(n_test),
                 order.begin() + static_cast<std::ptrdiff_t>(n_test + n_val));
    s.train.assign(order.begin() + static_cast<std::ptrdiff_t>(n_test + n_val), order.end());
    out.push_back(std::move(s));
  }
  return out;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> stratified_carve(const Dataset& ds,
                                                                                std::vector<std::size_t> indices,
                                                                                double frac, std::uint64_t seed) {
  ad::Rng rng(seed);
  const std::size_t n_carve = std::max<std::size_t>(1, round_count(frac, indices.size()));
  if (indices.size() < 2) throw Error(ErrorCode::EmptySplit, "need at least 2 samples to carve a validation set");
  const auto order = interleaved_order(ds, std::move(indices), true, rng);
  std::vector<std::size_t> carve(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_carve));
  std::vector<std::size_t> rest(order.begin() + static_cast<std::ptrdiff_t>(n_carve), order.end());
  return {rest, carve};
}

void RunConfig::validate() const {
  model.validate();
  train.validate();
  split.validate();
  if (!(carve_val_frac > 0.0 && carve_val_frac < 1.0)) {
    throw Error(ErrorCode::InvalidConfig, "carve_val_frac must lie in (0, 1)");
  }
  for (int r : rates) {
    if (!is_supported_rate(r)) throw Error(ErrorCode::UnsupportedRate, std::to_string(r) + " Hz");
  }
  if (location_train_per_class == 0 || location_test_per_class == 0) {
    throw Error(ErrorCode::InvalidConfig, "location per-class counts must be positive");
  }
}

namespace {

json split_json(const SplitSpec& s) {
  return {{"train_frac", s.train_frac}, {"val_frac", s.val_frac}, {"test_frac", s.test_frac},
          {"folds", s.folds},           {"stratified", s.stratified}};
}

json config_json(const RunConfig& c, bool with_workers) {
  json j;
  j["model"] = json::parse(c.model.to_json());
  j["train"] = json::parse(c.train.to_json());
  j["split"] = split_json(c.split);
  j["seed"] = c.seed;
  if (with_workers) j["workers"] = c.workers;
  j["carve_val_frac"] = c.carve_val_frac;
  j["rates"] = c.rates;
  j["location_train_per_class"] = c.location_train_per_class;
  j["location_test_per_class"] = c.location_test_per_class;
  return j;
}

}  // namespace

std::string RunConfig::to_json() const { return config_json(*this, true).dump(2) + "\n"; }

RunConfig RunConfig::from_json(const std::string& text) {
  RunConfig c;
  try {
    const json j = json::parse(text);
    if (j.contains("model")) c.model = models::ModelConfig::from_json(j.at("model").dump());
    if (j.contains("train")) c.train = training::TrainConfig::from_json(j.at("train").dump());
    if (j.contains("split")) {
      const json& s = j.at("split");
      c.split.train_frac = s.value("train_frac", c.split.train_frac);
      c.split.val_frac = s.value("val_frac", c.split.val_frac);
      c.split.test_frac = s.value("test_frac", c.split.test_frac);
      c.split.folds = s.value("folds", c.split.folds);
      c.split.stratified = s.value("stratified", c.split.stratified);
    }
    c.seed = j.value("seed", c.seed);
    c.workers = j.value("workers", c.workers);
    c.carve_val_frac = j.value("carve_val_frac", c.carve_val_frac);
    c.rates = j.value("rates", c.rates);
    c.location_train_per_class = j.value("location_train_per_class", c.location_train_per_class);
    c.location_test_per_class = j.value("location_test_per_class", c.location_test_per_class);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Format, std::string("run config: ") + e.what());
  }
  return c;
}

ArmResult run_arm(const Dataset& ds, const std::vector<std::size_t>& train, const std::vector<std::size_t>& val,
                  const std::vector<std::pair<std::string, std::vector<std::size_t>>>& tests, const RunConfig& cfg,
                  std::uint64_t arm_seed, std::string name, std::optional<TrainedModel>* keep) {
  ArmResult arm;
  arm.name = std::move(name);
  arm.n_train = train.size();
  arm.n_val = val.size();
  arm.n_test = tests.empty() ? 0 : tests.front().second.size();
  if (train.empty()) throw Error(ErrorCode::EmptySplit, arm.name + ": training set is empty");

  const auto stats = preprocess::compute_sniffer_stats(ds, train);
  const std::size_t P = cfg.model.patch;
  const auto ptrain = training::prepare(ds, train, stats, P);
  const auto pval = training::prepare(ds, val, stats, P);

  models::Classifier<float> model(cfg.model, ad::mix_seed(arm_seed, 0));
  training::TrainConfig tc = cfg.train;
  tc.seed = ad::mix_seed(arm_seed, 1);
  arm.history = training::fit(model, ptrain, pval, tc);

  for (const auto& [test_name, idx] : tests) {
    const auto ptest = training::prepare(ds, idx, stats, P);
    TestResult t;
    t.name = test_name;
    t.count = idx.size();
    t.metrics = training::evaluate(model, ptest).metrics;
    arm.tests.push_back(std::move(t));
  }
  if (keep) keep->emplace(TrainedModel{std::move(model), stats});
  return arm;
}

namespace {

struct ArmJob {
  std::string name;
  std::map<std::string, std::string> tags;
  std::vector<std::size_t> train, val;
  std::vector<std::pair<std::string, std::vector<std::size_t>>> tests;
  std::uint64_t seed = 0;
  const Dataset* ds = nullptr;
};

std::vector<ArmResult> run_jobs(const std::vector<ArmJob>& jobs, const RunConfig& cfg) {
  std::vector<ArmResult> out(jobs.size());
  detail::parallel_for(jobs.size(), cfg.workers, [&](std::size_t i) {
    const ArmJob& j = jobs[i];
    out[i] = run_arm(*j.ds, j.train, j.val, j.tests, cfg, j.seed, j.name);
    out[i].tags = j.tags;
  });
  return out;
}

std::string report_config(const RunConfig& cfg) { return config_json(cfg, false).dump(); }

std::vector<ArmJob> cv_jobs(const Dataset& ds, const RunConfig& cfg, const std::string& prefix,
                            const std::map<std::string, std::string>& tags) {
  std::vector<ArmJob> jobs;
  const auto splits = mc_splits(ds, cfg.split, cfg.seed);
  for (std::size_t f = 0; f < splits.size(); ++f) {
    ArmJob j;
    j.name = prefix + "fold" + std::to_string(f + 1);
    j.tags = tags;
    j.tags["fold"] = std::to_string(f + 1);
    j.train = splits[f].train;
    j.val = splits[f].val;
    j.tests = {{"test", splits[f].test}};
    j.seed = ad::mix_seed(cfg.seed, 1000 + f);
    j.ds = &ds;
    jobs.push_back(std::move(j));
  }
  return jobs;
}

}  // namespace

ProtocolReport run_cv(const Dataset& ds, const RunConfig& cfg) {
  cfg.validate();
  ProtocolReport r;
  r.protocol = "cv";
  r.config_json = report_config(cfg);
  r.arms = run_jobs(cv_jobs(ds, cfg, "", {}), cfg);
  return r;
}

ProtocolReport run_train(const Dataset& ds, const RunConfig& cfg, std::optional<TrainedModel>* keep) {
  cfg.validate();
  ProtocolReport r;
  r.protocol = "train";
  r.config_json = report_config(cfg);
  auto jobs = cv_jobs(ds, cfg, "", {});
  const ArmJob& j = jobs.front();
  r.arms.push_back(run_arm(ds, j.train, j.val, j.tests, cfg, j.seed, j.name, keep));
  r.arms.back().tags = j.tags;
  return r;
}

ProtocolReport run_lovo(const Dataset& ds, const RunConfig& cfg) {
  cfg.validate();
  std::array<std::vector<std::size_t>, 3> by_v;
  for (std::size_t i = 0; i < ds.size(); ++i) by_v[static_cast<std::size_t>(ds.samples[i].meta.velocity)].push_back(i);
  for (Velocity v : kAllVelocities) {
    if (by_v[static_cast<std::size_t>(v)].empty()) {
      throw Error(ErrorCode::MissingVelocity, "no samples for velocity " + std::string(velocity_name(v)));
    }
  }
  std::vector<ArmJob> jobs;
  for (Velocity held : {Velocity::V3, Velocity::V2, Velocity::V1}) {
    std::vector<std::size_t> pool;
    for (Velocity v : kAllVelocities)
      if (v != held) pool.insert(pool.end(), by_v[static_cast<std::size_t>(v)].begin(), by_v[static_cast<std::size_t>(v)].end());
    const std::uint64_t seed = ad::mix_seed(cfg.seed, 2000 + static_cast<std::uint64_t>(held));
    auto [train, val] = stratified_carve(ds, pool, cfg.carve_val_frac, seed);
    ArmJob j;
    j.name = "holdout_" + std::string(velocity_name(held));
    j.tags = {{"holdout", std::string(velocity_name(held))}};
    j.train = std::move(train);
    j.val = std::move(val);
    j.tests = {{std::string(velocity_name(held)), by_v[static_cast<std::size_t>(held)]}};
    j.seed = seed;
    j.ds = &ds;
    jobs.push_back(std::move(j));
  }
  ProtocolReport r;
  r.protocol = "lovo";
  r.config_json = report_config(cfg);
  r.arms = run_jobs(jobs, cfg);
  return r;
}

ProtocolReport run_freq_sweep(const Dataset& ds, const RunConfig& cfg) {
  cfg.validate();
  for (const Sample& s : ds.samples) {
    if (s.sniffer1.rate_hz != kBaseRateHz || s.sniffer2.rate_hz != kBaseRateHz) {
      throw Error(ErrorCode::UnsupportedRate, "the sweep needs a 30 Hz dataset");
    }
  }
  // Cells hold their own decimated copies; jobs point into this list.
  std::vector<std::unique_ptr<Dataset>> cells;
  std::vector<ArmJob> jobs;
  for (int rate : cfg.rates) {
    for (Velocity v : kAllVelocities) {
      SampleFilter f;
      f.velocity = v;
      auto sub = std::make_unique<Dataset>(preprocess::downsample(select(ds, f), rate));
      if (sub->empty()) continue;
      const std::map<std::string, std::string> tags{{"rate_hz", std::to_string(rate)},
                                                    {"velocity", std::string(velocity_name(v))}};
      auto cj = cv_jobs(*sub, cfg, "rate" + std::to_string(rate) + "_" + std::string(velocity_name(v)) + "_", tags);
      for (auto& j : cj) jobs.push_back(std::move(j));
      cells.push_back(std::move(sub));
    }
  }
  ProtocolReport r;
  r.protocol = "freq_sweep";
  r.config_json = report_config(cfg);
  r.arms = run_jobs(jobs, cfg);
  return r;
}

ProtocolReport run_location(const Dataset& ds, const RunConfig& cfg) {
  cfg.validate();
  std::array<std::vector<std::size_t>, 4> train_of, test_of;
  for (Location loc : kAllLocations) {
    const auto li = static_cast<std::size_t>(loc);
    std::array<std::vector<std::size_t>, kNumClasses> by_class;
    for (std::size_t i = 0; i < ds.size(); ++i) {
      if (ds.samples[i].meta.location == loc) by_class[label_index(ds.samples[i].meta.label)].push_back(i);
    }
    std::size_t total = 0;
    for (const auto& c : by_class) total += c.size();
    if (total == 0) throw Error(ErrorCode::MissingLocation, "no samples for location " + std::string(location_name(loc)));
    ad::Rng rng(ad::mix_seed(cfg.seed, 3000 + li));
    const std::size_t want_train = cfg.location_train_per_class;
    const std::size_t want_test = cfg.location_test_per_class;
    for (auto& idx : by_class) {
      for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
      std::size_t n_test = want_test, n_train = want_train;
      if (idx.size() < want_train + want_test) {
        n_test = static_cast<std::size_t>(
            std::llround(static_cast<double>(idx.size() * want_test) / static_cast<double>(want_train + want_test)));
        if (n_test == 0 && idx.size() >= 2) n_test = 1;
        n_train = idx.size() - n_test;
      }
      test_of[li].insert(test_of[li].end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_test));
      train_of[li].insert(train_of[li].end(), idx.begin() + static_cast<std::ptrdiff_t>(n_test),
                          idx.begin() + static_cast<std::ptrdiff_t>(n_test + n_train));
    }
  }

  std::vector<std::vector<std::size_t>> sets;
  for (std::size_t a = 0; a < 4; ++a) sets.push_back({a});
  for (std::size_t a = 0; a < 4; ++a)
    for (std::size_t b = a + 1; b < 4; ++b) sets.push_back({a, b});
  sets.push_back({0, 1, 2, 3});

  std::vector<ArmJob> jobs;
  for (std::size_t k = 0; k < sets.size(); ++k) {
    std::string name;
    std::vector<std::size_t> pool, own_test;
    for (std::size_t li : sets[k]) {
      name += (name.empty() ? "" : "+") + std::string(location_name(kAllLocations[li]));
      pool.insert(pool.end(), train_of[li].begin(), train_of[li].end());
      own_test.insert(own_test.end(), test_of[li].begin(), test_of[li].end());
    }
    const std::uint64_t seed = ad::mix_seed(cfg.seed, 4000 + k);
    auto [train, val] = stratified_carve(ds, pool, cfg.carve_val_frac, seed);
    ArmJob j;
    j.name = "train_" + name;
    j.tags = {{"train_locations", name}};
    j.train = std::move(train);
    j.val = std::move(val);
    j.tests.push_back({"own", own_test});
    for (Location loc : kAllLocations) j.tests.push_back({std::string(location_name(loc)), test_of[static_cast<std::size_t>(loc)]});
    j.seed = seed;
    j.ds = &ds;
    jobs.push_back(std::move(j));
  }
  ProtocolReport r;
  r.protocol = "location";
  r.config_json = report_config(cfg);
  r.arms = run_jobs(jobs, cfg);
  return r;
}

ProtocolReport run_protocol(const std::string& name, const Dataset& ds, const RunConfig& cfg) {
  if (name == "cv") return run_cv(ds, cfg);
  if (name == "train") return run_train(ds, cfg);
  if (name == "lovo") return run_lovo(ds, cfg);
  if (name == "freq_sweep" || name == "sweep-freq") return run_freq_sweep(ds, cfg);
  if (name == "location" || name == "sweep-loc") return run_location(ds, cfg);
  throw Error(ErrorCode::InvalidConfig, "unknown protocol '" + name + "'");
}

}  // namespace robofi::protocols
