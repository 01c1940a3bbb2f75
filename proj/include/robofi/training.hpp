#pragma once

// Mini-batch optimization with decoupled weight decay, early stopping on
// validation loss, and evaluation into Metrics.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "robofi/dataset.hpp"
#include "robofi/metrics.hpp"
#include "robofi/models.hpp"
#include "robofi/preprocess.hpp"

namespace robofi::training {

struct TrainConfig {
  double lr = 1e-4;
  double weight_decay = 2e-5;
  std::size_t batch_size = 16;
  std::size_t max_epochs = 150;
  std::size_t patience = 15;
  std::uint64_t seed = 0;
  double min_delta = 1e-6;  // a val loss counts as better only below best - min_delta

  /// Throws InvalidConfig.
  void validate() const;
  std::string to_json() const;
  static TrainConfig from_json(const std::string& text);
  bool operator==(const TrainConfig&) const = default;
};

template <typename T>
class AdamW {
 public:
  AdamW(std::vector<ad::Tensor<T>> params, double lr, double weight_decay, double beta1 = 0.9,
        double beta2 = 0.999, double eps = 1e-8);
  /// Applies one update from the accumulated grads (params without grads are skipped).
  void step();
  std::size_t steps() const { return t_; }

 private:
  std::vector<ad::Tensor<T>> params_;
  std::vector<std::vector<double>> m_, v_;
  double lr_, wd_, b1_, b2_, eps_;
  std::size_t t_ = 0;
};

/// A sample already normalized and tiled, ready for the model.
struct PreparedSample {
  preprocess::PatchSet p1;
  preprocess::PatchSet p2;
  ActivityLabel label = ActivityLabel::Arc;
};

std::vector<PreparedSample> prepare(const Dataset& ds, std::span<const std::size_t> indices,
                                    const preprocess::SnifferStats& stats, std::size_t patch);
std::vector<PreparedSample> prepare(const Dataset& ds, const preprocess::SnifferStats& stats, std::size_t patch);

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
  double train_acc = 0.0;
  double val_acc = 0.0;
  std::uint64_t weight_hash = 0;  // after this epoch's updates
};

struct History {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  double best_val_loss = 0.0;
  bool early_stopped = false;

  std::string to_json() const;
  /// Header plus one row per epoch: train_loss,val_loss,train_acc,val_acc
  std::string curves_csv() const;
};

struct FitHooks {
  /// Replaces the measured validation loss of an epoch (fault injection).
  std::function<double(std::size_t epoch, double measured)> val_loss_override;
  std::function<void(const EpochRecord&)> on_epoch;
  /// Where DivergedLoss writes the weights it was holding; empty = no dump.
  std::filesystem::path dump_dir;
};

/// Trains in place and leaves the model at its best-validation-loss weights.
/// EmptySplit on empty train or val; DivergedLoss on a non-finite loss.
History fit(models::Classifier<float>& model, std::span<const PreparedSample> train,
            std::span<const PreparedSample> val, const TrainConfig& cfg, const FitHooks& hooks = {});

struct Evaluation {
  std::vector<ActivityLabel> predictions;
  std::vector<ActivityLabel> truth;
  double mean_loss = 0.0;
  metrics::Metrics metrics;
};

Evaluation evaluate(const models::Classifier<float>& model, std::span<const PreparedSample> set);

}  // namespace robofi::training
