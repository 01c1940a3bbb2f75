#include "robofi/training.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include "json.hpp"

namespace robofi::training {

using nlohmann::json;

void TrainConfig::validate() const {
  if (!(lr >= 0.0) || !(weight_decay >= 0.0)) throw Error(ErrorCode::InvalidConfig, "lr and weight_decay must be >= 0");
  if (batch_size == 0) throw Error(ErrorCode::InvalidConfig, "batch_size must be positive");
  if (max_epochs == 0) throw Error(ErrorCode::InvalidConfig, "max_epochs must be positive");
  if (patience == 0 || patience > max_epochs) {
    throw Error(ErrorCode::InvalidConfig, "patience must lie in [1, max_epochs]");
  }
  if (!(min_delta >= 0.0)) throw Error(ErrorCode::InvalidConfig, "min_delta must be >= 0");
}

std::string TrainConfig::to_json() const {
  json j{{"lr", lr},         {"weight_decay", weight_decay}, {"batch_size", batch_size}, {"max_epochs", max_epochs},
         {"patience", patience}, {"seed", seed},             {"min_delta", min_delta}};
  return j.dump(2) + "\n";
}

TrainConfig TrainConfig::from_json(const std::string& text) {
  TrainConfig c;
  try {
    const json j = json::parse(text);
    c.lr = j.value("lr", c.lr);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.max_epochs = j.value("max_epochs", c.max_epochs);
    c.patience = j.value("patience", c.patience);
    c.seed = j.value("seed", c.seed);
    c.min_delta = j.value("min_delta", c.min_delta);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Format, std::string("train config: ") + e.what());
  }
  return c;
}

template <typename T>
AdamW<T>::AdamW(std::vector<ad::Tensor<T>> params, double lr, double weight_decay, double beta1, double beta2,
                double eps)
    : params_(std::move(params)), lr_(lr), wd_(weight_decay), b1_(beta1), b2_(beta2), eps_(eps) {
  for (const auto& p : params_) {
    m_.emplace_back(p.size(), 0.0);
    v_.emplace_back(p.size(), 0.0);
  }
}

template <typename T>
void AdamW<T>::step() {
  ++t_;
  const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i];
    if (!p.has_grad()) continue;
    auto w = p.data();
    const auto g = p.grad();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t k = 0; k < w.size(); ++k) {
      const double gk = static_cast<double>(g[k]);
      m[k] = b1_ * m[k] + (1.0 - b1_) * gk;
      v[k] = b2_ * v[k] + (1.0 - b2_) * gk * gk;
      const double update = (m[k] / c1) / (std::sqrt(v[k] / c2) + eps_) + wd_ * static_cast<double>(w[k]);
      w[k] = static_cast<T>(static_cast<double>(w[k]) - lr_ * update);
    }
  }
}

template class AdamW<float>;
template class AdamW<double>;

std::vector<PreparedSample> prepare(const Dataset& ds, std::span<const std::size_t> indices,
                                    const preprocess::SnifferStats& stats, std::size_t patch) {
  std::vector<PreparedSample> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) {
    const Sample& s = ds.samples.at(i);
    out.push_back({preprocess::patchify(preprocess::normalize(s.sniffer1, stats.s1), patch),
                   preprocess::patchify(preprocess::normalize(s.sniffer2, stats.s2), patch), s.meta.label});
  }
  return out;
}

std::vector<PreparedSample> prepare(const Dataset& ds, const preprocess::SnifferStats& stats, std::size_t patch) {
  std::vector<std::size_t> all(ds.size());
  std::iota(all.begin(), all.end(), 0);
  return prepare(ds, all, stats, patch);
}

namespace {

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

struct Pass {
  double loss = 0.0;
  double acc = 0.0;
};

Pass eval_pass(const models::Classifier<float>& model, std::span<const PreparedSample> set,
               std::vector<ActivityLabel>* preds) {
  ad::NoGradGuard guard;
  ad::Rng rng(0);
  Pass p;
  std::size_t correct = 0;
  for (const auto& s : set) {
    const auto logits = model.forward(s.p1, s.p2, rng, false);
    p.loss += static_cast<double>(ad::cross_entropy(logits, label_index(s.label)).item());
    const ActivityLabel y = models::predict(logits.values());
    if (y == s.label) ++correct;
    if (preds) preds->push_back(y);
  }
  p.loss /= static_cast<double>(set.size());
  p.acc = static_cast<double>(correct) / static_cast<double>(set.size());
  return p;
}

}  // namespace

std::string History::to_json() const {
  json e = json::array();
  for (const auto& r : epochs) {
    e.push_back({{"epoch", r.epoch},
                 {"train_loss", r.train_loss},
                 {"val_loss", r.val_loss},
                 {"train_acc", r.train_acc},
                 {"val_acc", r.val_acc},
                 {"weight_hash", hex64(r.weight_hash)}});
  }
  json j{{"epochs", e}, {"best_epoch", best_epoch}, {"best_val_loss", best_val_loss}, {"early_stopped", early_stopped}};
  return j.dump(2) + "\n";
}

std::string History::curves_csv() const {
  std::ostringstream out;
  out.precision(17);
  out << "train_loss,val_loss,train_acc,val_acc\n";
  for (const auto& r : epochs) out << r.train_loss << ',' << r.val_loss << ',' << r.train_acc << ',' << r.val_acc << '\n';
  return out.str();
}

History fit(models::Classifier<float>& model, std::span<const PreparedSample> train,
            std::span<const PreparedSample> val, const TrainConfig& cfg, const FitHooks& hooks) {
  cfg.validate();
  if (train.empty()) throw Error(ErrorCode::EmptySplit, "training split is empty");
  if (val.empty()) throw Error(ErrorCode::EmptySplit, "validation split is empty");

  AdamW<float> opt(model.parameters(), cfg.lr, cfg.weight_decay);
  ad::Rng shuffle_rng(ad::mix_seed(cfg.seed, 1));
  ad::Rng dropout_rng(ad::mix_seed(cfg.seed, 2));
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);

  History h;
  std::vector<NamedTensor> best_weights = model.to_checkpoint();
  std::size_t since_best = 0;

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle_rng.below(i)]);

    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), begin + cfg.batch_size);
      const float inv_b = 1.0f / static_cast<float>(end - begin);
      model.zero_grad();
      for (std::size_t k = begin; k < end; ++k) {
        const PreparedSample& s = train[order[k]];
        const auto logits = model.forward(s.p1, s.p2, dropout_rng, true);
        const auto loss = ad::cross_entropy(logits, label_index(s.label));
        const double lv = static_cast<double>(loss.item());
        if (!std::isfinite(lv)) {
          std::string where;
          if (!hooks.dump_dir.empty()) {
            std::filesystem::create_directories(hooks.dump_dir);
            const auto path = hooks.dump_dir / "diverged.rfsw";
            save_checkpoint(path, model.to_checkpoint());
            where = "; weights dumped to " + path.string();
          }
          throw Error(ErrorCode::DivergedLoss, "non-finite loss in epoch " + std::to_string(epoch) + where);
        }
        loss_sum += lv;
        bool ok = true;
        try {
          if (models::predict(logits.values()) != s.label) ok = false;
        } catch (const Error&) {
          ok = false;
        }
        if (ok) ++correct;
        ad::backward(ad::scale(loss, inv_b));
      }
      opt.step();
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(train.size());
    rec.train_acc = static_cast<double>(correct) / static_cast<double>(train.size());
    const Pass v = eval_pass(model, val, nullptr);
    rec.val_loss = hooks.val_loss_override ? hooks.val_loss_override(epoch, v.loss) : v.loss;
    rec.val_acc = v.acc;
    rec.weight_hash = model.weight_hash();
    h.epochs.push_back(rec);
    if (hooks.on_epoch) hooks.on_epoch(rec);

    if (h.best_epoch == 0 || rec.val_loss < h.best_val_loss - cfg.min_delta) {
      h.best_epoch = epoch;
      h.best_val_loss = rec.val_loss;
      best_weights = model.to_checkpoint();
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      h.early_stopped = true;
      break;
    }
  }
  model.load_checkpoint(best_weights);
  return h;
}

Evaluation evaluate(const models::Classifier<float>& model, std::span<const PreparedSample> set) {
  if (set.empty()) throw Error(ErrorCode::EmptySplit, "evaluation set is empty");
  Evaluation e;
  e.mean_loss = eval_pass(model, set, &e.predictions).loss;
  for (const auto& s : set) e.truth.push_back(s.label);
  e.metrics = metrics::compute_metrics(e.predictions, e.truth);
  return e;
}

}  // namespace robofi::training
