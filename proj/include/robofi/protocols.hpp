#pragma once

// Evaluation protocols: repeated stratified 70/10/20 splits ("cv"),
// leave-one-velocity-out, the sampling-rate sweep and the sniffer-location
// study. Every arm (fold, cell, training set) owns its model and seeds, so
// results do not depend on how many workers run them.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "robofi/dataset.hpp"
#include "robofi/metrics.hpp"
#include "robofi/models.hpp"
#include "robofi/training.hpp"

namespace robofi::protocols {

struct SplitSpec {
  double train_frac = 0.70;
  double val_frac = 0.10;
  double test_frac = 0.20;
  std::size_t folds = 5;
  bool stratified = true;

  void validate() const;
  bool operator==(const SplitSpec&) const = default;
};

struct Split {
  std::vector<std::size_t> train, val, test;
};

inline constexpr std::size_t kMinSplitSize = 10;

/// One seeded shuffle per fold (seed + fold). Test takes round(test_frac * n),
/// val round(val_frac * n), train the rest. Stratified splits interleave the
/// classes so every prefix is balanced to within one sample per class.
/// TooSmall below 10 samples.
std::vector<Split> mc_splits(const Dataset& ds, const SplitSpec& spec, std::uint64_t seed);

/// Stratified shuffle of `indices` into (rest, carve) with round(frac * n) carved.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> stratified_carve(const Dataset& ds,
                                                                                std::vector<std::size_t> indices,
                                                                                double frac, std::uint64_t seed);

struct RunConfig {
  models::ModelConfig model;
  training::TrainConfig train;
  SplitSpec split;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  double carve_val_frac = 0.10;  // validation carve-out for lovo and location arms
  std::vector<int> rates{30, 25, 20, 15, 10};
  std::size_t location_train_per_class = 18;
  std::size_t location_test_per_class = 5;

  void validate() const;
  std::string to_json() const;
  static RunConfig from_json(const std::string& text);
};

struct TestResult {
  std::string name;
  metrics::Metrics metrics;
  std::size_t count = 0;
};

struct ArmResult {
  std::string name;
  std::map<std::string, std::string> tags;
  std::size_t n_train = 0, n_val = 0, n_test = 0;
  training::History history;
  std::vector<TestResult> tests;  // first entry is the arm's primary test set
};

struct ProtocolReport {
  std::string protocol;  // "cv", "lovo", "freq_sweep", "location"
  std::string config_json;
  std::vector<ArmResult> arms;

  /// Deterministic serialization: contains no timings or paths.
  std::string to_json() const;
  static ProtocolReport from_json(const std::string& text);
};

struct TrainedModel {
  models::Classifier<float> model;
  preprocess::SnifferStats stats;
};

/// Splits, trains and tests one arm per fold.
ProtocolReport run_cv(const Dataset& ds, const RunConfig& cfg);
/// MissingVelocity unless V1, V2 and V3 are all present.
ProtocolReport run_lovo(const Dataset& ds, const RunConfig& cfg);
/// One cv per (rate, velocity) cell on the velocity subset decimated to the
/// rate; every cell of a velocity reuses the same seed.
ProtocolReport run_freq_sweep(const Dataset& ds, const RunConfig& cfg);
/// MissingLocation unless L1..L4 are all present.
ProtocolReport run_location(const Dataset& ds, const RunConfig& cfg);

/// A single arm on the first cv fold (same split and seeds as cv's fold1).
/// The trained model is moved into `keep` when given.
ProtocolReport run_train(const Dataset& ds, const RunConfig& cfg, std::optional<TrainedModel>* keep = nullptr);

ProtocolReport run_protocol(const std::string& name, const Dataset& ds, const RunConfig& cfg);

/// Trains one model on `train`, early-stopping on `val`, and tests it on each
/// of `tests`. Normalization statistics come from `train` only.
ArmResult run_arm(const Dataset& ds, const std::vector<std::size_t>& train, const std::vector<std::size_t>& val,
                  const std::vector<std::pair<std::string, std::vector<std::size_t>>>& tests, const RunConfig& cfg,
                  std::uint64_t arm_seed, std::string name, std::optional<TrainedModel>* keep = nullptr);

}  // namespace robofi::protocols
