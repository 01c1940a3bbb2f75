#include <cmath>

#include "doctest.h"
#include "robofi/training.hpp"
#include "test_util.hpp"

using namespace robofi;
using namespace robofi::training;

namespace {

models::ModelConfig toy_model() {
  auto c = models::ModelConfig::tiny();
  c.dropout = 0.0;
  return c;
}

// Class c fills sniffer 1 with level c plus small noise: one scalar separates the classes.
Dataset toy_dataset(std::size_t per_class, std::uint64_t seed) {
  ad::Rng rng(seed);
  Dataset ds;
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    for (std::size_t i = 0; i < per_class; ++i) {
      Sample s;
      s.meta.label = label_from_index(c);
      s.sniffer1 = AmplitudeWindow(4, 4, 30);
      s.sniffer2 = AmplitudeWindow(4, 4, 30);
      for (float& v : s.sniffer1.data) v = static_cast<float>(c + rng.uniform(0.0, 0.2));
      for (float& v : s.sniffer2.data) v = static_cast<float>(rng.uniform(0.0, 1.0));
      ds.samples.push_back(std::move(s));
    }
  }
  return ds;
}

std::vector<PreparedSample> prepared(const Dataset& ds, const preprocess::SnifferStats& st) {
  return prepare(ds, st, 2);
}

preprocess::SnifferStats stats_of(const Dataset& ds) {
  std::vector<std::size_t> all(ds.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return preprocess::compute_sniffer_stats(ds, all);
}

}  // namespace

TEST_SUITE("training") {
  TEST_CASE("train config defaults and validation") {
    TrainConfig c;
    CHECK(c.lr == 1e-4);
    CHECK(c.weight_decay == 2e-5);
    CHECK(c.batch_size == 16);
    CHECK(c.max_epochs == 150);
    CHECK(c.patience == 15);
    CHECK(TrainConfig::from_json(c.to_json()) == c);
    c.max_epochs = 0;
    CHECK_THROWS_AS(c.validate(), Error);
    c.max_epochs = 10;
    c.patience = 11;
    CHECK_THROWS_AS(c.validate(), Error);
  }

  TEST_CASE("AdamW first steps match the update rule") {
    auto w = ad::Tensor<double>::parameter({2}, {0.5, -2.0});
    AdamW<double> opt({w}, 0.1, 0.01);
    w.grad_data()[0] = 3.0;
    w.grad_data()[1] = -0.25;
    opt.step();
    // Step 1: mhat = g, vhat = g^2, so the adaptive part is g/(|g| + eps).
    CHECK(w.values()[0] == doctest::Approx(0.5 - 0.1 * (3.0 / (3.0 + 1e-8) + 0.01 * 0.5)).epsilon(1e-12));
    CHECK(w.values()[1] == doctest::Approx(-2.0 - 0.1 * (-0.25 / (0.25 + 1e-8) + 0.01 * -2.0)).epsilon(1e-12));

    // Step 2 by hand.
    const double w0 = w.values()[0];
    w.grad_data()[0] = 1.0;
    opt.step();
    const double m = 0.9 * 0.1 * 3.0 + 0.1 * 1.0, v = 0.999 * 0.001 * 9.0 + 0.001 * 1.0;
    const double mhat = m / (1 - 0.81), vhat = v / (1 - 0.999 * 0.999);
    CHECK(w.values()[0] == doctest::Approx(w0 - 0.1 * (mhat / (std::sqrt(vhat) + 1e-8) + 0.01 * w0)).epsilon(1e-12));
    CHECK(opt.steps() == 2);
  }

  TEST_CASE("toy separable problem reaches full training accuracy") {
    const Dataset tr = toy_dataset(6, 1), va = toy_dataset(2, 2);
    const auto st = stats_of(tr);
    models::Classifier<float> m(toy_model(), 3);
    TrainConfig c;
    c.lr = 3e-2;
    c.batch_size = 8;
    c.max_epochs = 150;
    c.patience = 150;
    c.seed = 4;
    const auto h = fit(m, prepared(tr, st), prepared(va, st), c);
    double best_train = 0;
    for (const auto& e : h.epochs) best_train = std::max(best_train, e.train_acc);
    CHECK(best_train == 1.0);
    CHECK(evaluate(m, prepared(va, st)).metrics.accuracy >= 0.75);
  }

  TEST_CASE("monotone worsening validation stops at epoch 16 with epoch-1 weights") {
    const Dataset tr = toy_dataset(2, 5);
    const auto st = stats_of(tr);
    const auto p = prepared(tr, st);
    models::Classifier<float> m(toy_model(), 6);
    TrainConfig c;
    c.lr = 1e-2;
    FitHooks hooks;
    hooks.val_loss_override = [](std::size_t epoch, double) { return 1.0 + 0.1 * double(epoch); };
    const auto h = fit(m, p, p, c, hooks);
    CHECK(h.epochs.size() == 16);
    CHECK(h.early_stopped);
    CHECK(h.best_epoch == 1);
    CHECK(m.weight_hash() == h.epochs[0].weight_hash);
    CHECK(h.epochs[15].weight_hash != h.epochs[0].weight_hash);
  }

  TEST_CASE("improvements smaller than min_delta do not reset patience") {
    const Dataset tr = toy_dataset(1, 7);
    const auto st = stats_of(tr);
    const auto p = prepared(tr, st);
    models::Classifier<float> m(toy_model(), 8);
    TrainConfig c;
    c.max_epochs = 40;
    c.patience = 5;
    FitHooks hooks;
    hooks.val_loss_override = [](std::size_t epoch, double) { return 1.0 - 1e-8 * double(epoch); };
    const auto h = fit(m, p, p, c, hooks);
    CHECK(h.epochs.size() == 6);
    CHECK(h.best_epoch == 1);
  }

  TEST_CASE("same seed, same history") {
    const Dataset tr = toy_dataset(3, 9);
    const auto st = stats_of(tr);
    const auto p = prepared(tr, st);
    auto cfg = toy_model();
    cfg.dropout = 0.3;
    TrainConfig c;
    c.max_epochs = 5;
    c.patience = 5;
    c.lr = 1e-3;
    c.seed = 10;
    models::Classifier<float> a(cfg, 11), b(cfg, 11);
    const auto ha = fit(a, p, p, c), hb = fit(b, p, p, c);
    REQUIRE(ha.epochs.size() == hb.epochs.size());
    for (std::size_t i = 0; i < ha.epochs.size(); ++i) {
      CHECK(ha.epochs[i].train_loss == hb.epochs[i].train_loss);
      CHECK(ha.epochs[i].val_loss == hb.epochs[i].val_loss);
      CHECK(ha.epochs[i].weight_hash == hb.epochs[i].weight_hash);
    }
    CHECK(ha.to_json() == hb.to_json());
  }

  TEST_CASE("curves csv has one row per epoch and four columns") {
    const Dataset tr = toy_dataset(1, 12);
    const auto st = stats_of(tr);
    const auto p = prepared(tr, st);
    models::Classifier<float> m(toy_model(), 13);
    TrainConfig c;
    c.max_epochs = 7;
    c.patience = 7;
    const auto h = fit(m, p, p, c);
    const std::string csv = h.curves_csv();
    CHECK(csv.rfind("train_loss,val_loss,train_acc,val_acc\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == static_cast<long>(h.epochs.size() + 1));
    const std::string row = csv.substr(csv.find('\n') + 1, csv.find('\n', csv.find('\n') + 1) - csv.find('\n') - 1);
    CHECK(std::count(row.begin(), row.end(), ',') == 3);
  }

  TEST_CASE("empty splits and diverged losses") {
    const Dataset tr = toy_dataset(1, 14);
    const auto st = stats_of(tr);
    const auto p = prepared(tr, st);
    models::Classifier<float> m(toy_model(), 15);
    TrainConfig c;
    try {
      fit(m, {}, p, c);
      FAIL("expected EmptySplit");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::EmptySplit);
    }
    CHECK_THROWS_AS(fit(m, p, {}, c), Error);

    testutil::TempDir dir("diverge");
    m.head().b2.data()[0] = std::numeric_limits<float>::infinity();
    FitHooks hooks;
    hooks.dump_dir = dir.path();
    try {
      fit(m, p, p, c, hooks);
      FAIL("expected DivergedLoss");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::DivergedLoss);
      CHECK_FALSE(is_validation_error(e.code()));
    }
    CHECK(std::filesystem::exists(dir.path() / "diverged.rfsw"));
  }

  TEST_CASE("prepare normalizes with the given stats") {
    const Dataset ds = toy_dataset(1, 16);
    const auto st = stats_of(ds);
    const auto p = prepare(ds, st, 2);
    REQUIRE(p.size() == 8);
    CHECK(p[3].label == ActivityLabel::Silence);
    CHECK(p[0].p1.count == 4);
    const auto w = preprocess::normalize(ds.samples[0].sniffer1, st.s1);
    CHECK(preprocess::unpatchify(p[0].p1) == w);
  }
}
