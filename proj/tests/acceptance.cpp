// Acceptance run: one PASS/FAIL/SKIP line per criterion, exit status 1 if
// any gating criterion fails.
//
//   acceptance [--only 1,2,...] [--real-dataset DIR] [--full-determinism] [--log FILE]

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <mutex>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "robofi/autodiff.hpp"
#include "robofi/dataset.hpp"
#include "robofi/metrics.hpp"
#include "robofi/models.hpp"
#include "robofi/preprocess.hpp"
#include "robofi/protocols.hpp"
#include "robofi/report.hpp"
#include "robofi/synth.hpp"
#include "robofi/training.hpp"

using namespace robofi;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  enum Status { Pass, Fail, Skip } status = Fail;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

template <typename Fn>
void parallel(std::size_t n, Fn fn) {
  const std::size_t workers = std::max<std::size_t>(1, std::min<std::size_t>(n, std::thread::hardware_concurrency()));
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) fn(i);
    });
  for (auto& t : pool) t.join();
}

preprocess::PatchSet random_patches(std::size_t rows, std::size_t cols, std::size_t P, ad::Rng& rng) {
  AmplitudeWindow w(rows, cols, kBaseRateHz);
  for (float& v : w.data) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  return preprocess::patchify(w, P);
}

// ---- 1: gradient fidelity ---------------------------------------------------

Outcome gradient_fidelity() {
  const auto t0 = Clock::now();
  auto cfg = models::ModelConfig::tiny();
  cfg.dropout = 0.0;
  models::Classifier<double> m(cfg, 1);
  ad::Rng rng(2);
  const auto p1 = random_patches(4, 4, 2, rng), p2 = random_patches(4, 4, 2, rng);
  auto params = m.parameters();
  const auto r = ad::grad_check([&] { return ad::cross_entropy(m.forward(p1, p2, rng, false), 6); }, params, 1e-5);
  const double secs = seconds_since(t0);
  const bool ok = r.coordinates == m.parameter_count() && r.max_rel_error < 1e-4 && secs < 60.0;
  return {ok ? Outcome::Pass : Outcome::Fail,
          fmt("max rel error %.3g over %zu coordinates (< 1e-4), %.2f s (< 60 s)", r.max_rel_error, r.coordinates, secs)};
}

// ---- 2: attention -------------------------------------------------------------

using Mat = std::vector<std::vector<double>>;

Mat brute_attention(const Mat& q, const Mat& k, const Mat& v) {
  Mat out(q.size(), std::vector<double>(v[0].size(), 0.0));
  for (std::size_t i = 0; i < q.size(); ++i) {
    std::vector<double> s(k.size());
    double mx = -1e300;
    for (std::size_t j = 0; j < k.size(); ++j) {
      double d = 0;
      for (std::size_t t = 0; t < q[0].size(); ++t) d += q[i][t] * k[j][t];
      s[j] = d / std::sqrt(double(q[0].size()));
      mx = std::max(mx, s[j]);
    }
    double z = 0;
    for (double& x : s) z += (x = std::exp(x - mx));
    for (std::size_t j = 0; j < k.size(); ++j)
      for (std::size_t t = 0; t < v[0].size(); ++t) out[i][t] += s[j] / z * v[j][t];
  }
  return out;
}

Outcome attention_correctness() {
  const auto t0 = Clock::now();
  ad::Rng rng(3);
  double worst_brute = 0, worst_row = 0, worst_perm = 0;
  std::size_t instances = 0;
  auto rand_mat = [&](std::size_t r, std::size_t c) {
    Mat m(r, std::vector<double>(c));
    for (auto& row : m)
      for (double& x : row) x = rng.normal();
    return m;
  };
  auto tensor = [](const Mat& m) {
    std::vector<double> v;
    for (const auto& row : m) v.insert(v.end(), row.begin(), row.end());
    return ad::Tensor<double>::constant({m.size(), m[0].size()}, std::move(v));
  };
  for (std::size_t n = 2; n <= 6; ++n)
    for (std::size_t d = 2; d <= 8; ++d)
      for (int rep = 0; rep < 10; ++rep) {
        const Mat q = rand_mat(n, d), k = rand_mat(n, d), v = rand_mat(n, d);
        ad::Tensor<double> w;
        const auto out = ad::attention(tensor(q), tensor(k), tensor(v), &w);
        const Mat ref = brute_attention(q, k, v);
        for (std::size_t i = 0; i < n; ++i) {
          double row = 0;
          for (std::size_t j = 0; j < n; ++j) row += w.at(i, j);
          worst_row = std::max(worst_row, std::abs(row - 1.0));
          for (std::size_t t = 0; t < d; ++t) worst_brute = std::max(worst_brute, std::abs(out.at(i, t) - ref[i][t]));
        }
        // Permute keys and values together.
        std::vector<std::size_t> perm(n);
        std::iota(perm.begin(), perm.end(), 0);
        for (std::size_t i = n - 1; i > 0; --i) std::swap(perm[i], perm[rng.below(i + 1)]);
        Mat kp(n), vp(n);
        for (std::size_t i = 0; i < n; ++i) kp[i] = k[perm[i]], vp[i] = v[perm[i]];
        const auto outp = ad::attention(tensor(q), tensor(kp), tensor(vp));
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t t = 0; t < d; ++t) worst_perm = std::max(worst_perm, std::abs(outp.at(i, t) - out.at(i, t)));
        ++instances;
      }
  const double secs = seconds_since(t0);
  const bool ok = worst_brute <= 1e-10 && worst_row <= 1e-6 && worst_perm <= 1e-12 && secs < 5.0;
  return {ok ? Outcome::Pass : Outcome::Fail,
          fmt("%zu instances: brute-force %.2g (<= 1e-10), row sums %.2g (<= 1e-6), permutation %.2g (<= 1e-12), %.2f s",
              instances, worst_brute, worst_row, worst_perm, secs)};
}

// ---- 3: pipeline exactness ------------------------------------------------------

Outcome pipeline_exactness() {
  const auto t0 = Clock::now();
  ad::Rng rng(4);
  CsiMatrix raw(360, kRawSubcarriers, SnifferId::S1);
  for (std::size_t r = 0; r < raw.rows; ++r) raw.timestamps[r] = double(r) / kBaseRateHz;
  for (auto& z : raw.data) z = {rng.normal(), rng.normal()};
  const auto a = preprocess::amplitude(preprocess::prune_subcarriers(raw, preprocess::SubcarrierMask::standard()));
  const bool shape_ok = a.rows == 360 && a.cols == 236;

  std::size_t roundtrip_ok = 0;
  for (int draw = 0; draw < 200; ++draw) {
    const std::size_t P = 1 + rng.below(12);
    AmplitudeWindow w(1 + rng.below(80), 1 + rng.below(80), kBaseRateHz);
    for (float& x : w.data) x = static_cast<float>(rng.normal());
    roundtrip_ok += preprocess::unpatchify(preprocess::patchify(w, P)) == w;
  }
  const auto ten = preprocess::downsample(a, 10);
  const auto same = preprocess::downsample(a, 30);
  const bool identity = same == a;
  const double secs = seconds_since(t0);
  const bool ok = shape_ok && roundtrip_ok == 200 && ten.rows == 120 && identity && secs < 5.0;
  return {ok ? Outcome::Pass : Outcome::Fail,
          fmt("prune+amplitude %zux%zu (360x236), round-trips %zu/200, 10 Hz rows %zu (120), 30 Hz identity %s, %.2f s",
              a.rows, a.cols, roundtrip_ok, ten.rows, identity ? "yes" : "no", secs)};
}

// ---- 4: metric oracle -----------------------------------------------------------

Outcome metric_oracle() {
  ad::Rng rng(5);
  std::size_t exact = 0;
  for (int draw = 0; draw < 1000; ++draw) {
    const std::size_t n = 1 + rng.below(100);
    std::vector<ActivityLabel> p(n), t(n);
    for (std::size_t i = 0; i < n; ++i) {
      t[i] = label_from_index(rng.below(8));
      p[i] = rng.uniform() < 0.6 ? t[i] : label_from_index(rng.below(8));
    }
    const auto m = metrics::compute_metrics(p, t);
    // Oracle: count each quantity directly from the pairs.
    bool same = true;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < n; ++i) correct += p[i] == t[i];
    same &= m.accuracy == double(correct) / double(n);
    double sp = 0, sr = 0, sf = 0;
    for (std::size_t c = 0; c < 8; ++c) {
      std::size_t tp = 0, pred = 0, act = 0;
      for (std::size_t i = 0; i < n; ++i) {
        tp += label_index(p[i]) == c && label_index(t[i]) == c;
        pred += label_index(p[i]) == c;
        act += label_index(t[i]) == c;
      }
      for (std::size_t k = 0; k < 8; ++k) {
        std::size_t cell = 0;
        for (std::size_t i = 0; i < n; ++i) cell += label_index(t[i]) == c && label_index(p[i]) == k;
        same &= m.confusion[c][k] == cell;
      }
      const double pr = pred ? double(tp) / double(pred) : 0.0;
      const double rc = act ? double(tp) / double(act) : 0.0;
      sp += pr;
      sr += rc;
      sf += pr + rc == 0.0 ? 0.0 : 2.0 * pr * rc / (pr + rc);
    }
    same &= m.macro_precision == sp / 8 && m.macro_recall == sr / 8 && m.macro_f1 == sf / 8;
    exact += same;
  }
  double worst = 0;
  for (int draw = 0; draw < 1000; ++draw) {
    std::vector<ActivityLabel> p, t;
    const std::size_t reps = 1 + rng.below(12);
    for (std::size_t r = 0; r < reps; ++r)
      for (auto l : kAllLabels) {
        t.push_back(l);
        p.push_back(label_from_index(rng.below(8)));
      }
    const auto m = metrics::compute_metrics(p, t);
    worst = std::max(worst, std::abs(m.macro_recall - m.accuracy));
  }
  const double eps = 4 * std::numeric_limits<double>::epsilon();
  const bool ok = exact == 1000 && worst <= eps;
  return {ok ? Outcome::Pass : Outcome::Fail,
          fmt("oracle exact on %zu/1000 draws, balanced |recall - accuracy| max %.2g (<= %.2g)", exact, worst, eps)};
}

// ---- 5 and 6: end-to-end training on synthetic data ------------------------------

struct SplitRun {
  double accuracy = 0;
  std::size_t best_epoch = 0, epochs = 0;
  std::string metrics_json;
};

// Per class: the first 30 repetitions train, the next 10 validate (early
// stopping), the last 10 test.
SplitRun train_split(const Dataset& ds, std::size_t per_class, const models::ModelConfig& mc, std::uint64_t seed) {
  std::vector<std::size_t> tr, va, te;
  for (std::size_t c = 0; c < kNumClasses; ++c)
    for (std::size_t r = 0; r < per_class; ++r) {
      const std::size_t i = c * per_class + r;
      (r < 30 ? tr : r < 40 ? va : te).push_back(i);
    }
  const auto stats = preprocess::compute_sniffer_stats(ds, tr);
  const auto ptr = training::prepare(ds, tr, stats, mc.patch);
  const auto pva = training::prepare(ds, va, stats, mc.patch);
  const auto pte = training::prepare(ds, te, stats, mc.patch);
  models::Classifier<float> m(mc, ad::mix_seed(seed, 0));
  training::TrainConfig tc;
  tc.seed = ad::mix_seed(seed, 1);
  const auto h = training::fit(m, ptr, pva, tc);
  const auto e = training::evaluate(m, pte);
  return {e.metrics.accuracy, h.best_epoch, h.epochs.size(), report::metrics_to_json(e.metrics)};
}

Dataset class_major(const synth::SynthSpec& spec) {
  // gen_dataset orders samples velocity, location, class, repetition; one
  // velocity and location make it class-major.
  return synth::gen_dataset(spec, std::thread::hardware_concurrency());
}

constexpr std::size_t kSeparabilityPerClass = 50;

SplitRun separability_seed(std::uint64_t seed) {
  synth::SynthSpec spec;
  spec.per_class = kSeparabilityPerClass;
  spec.velocities = {Velocity::V2};
  spec.seed = seed;
  auto mc = models::ModelConfig::paper();
  mc.depth = 2;
  return train_split(class_major(spec), kSeparabilityPerClass, mc, seed);
}

struct SeparabilityResult {
  std::vector<SplitRun> runs;
  double secs = 0;
};

SeparabilityResult g_separability;

Outcome synthetic_separability() {
  const auto t0 = Clock::now();
  g_separability.runs.assign(5, {});
  parallel(5, [](std::size_t s) { g_separability.runs[s] = separability_seed(s); });
  g_separability.secs = seconds_since(t0);
  std::size_t passed = 0;
  std::string accs;
  for (const auto& r : g_separability.runs) {
    passed += r.accuracy >= 0.90;
    accs += fmt("%s%.4f", accs.empty() ? "" : " ", r.accuracy);
  }
  return {passed >= 4 ? Outcome::Pass : Outcome::Fail,
          fmt("test accuracy per seed [%s], %zu/5 seeds >= 0.90 (need 4), %.0f s on %u thread(s) (budget 900 s)",
              accs.c_str(), passed, g_separability.secs, std::thread::hardware_concurrency())};
}

constexpr std::size_t kProjectionPerClass = 50;

models::ModelConfig projection_model(int sniffer) {
  auto mc = models::ModelConfig::paper();
  mc.depth = 1;
  if (sniffer) {
    mc.kind = models::ModelKind::Vit;
    mc.vit_sniffer = sniffer;
  }
  return mc;
}

struct AdvantageRun {
  SplitRun bivtc, vit1, vit2;
};

AdvantageRun advantage_seed(std::uint64_t seed) {
  synth::SynthSpec spec;
  spec.scene = "projection";
  spec.per_class = kProjectionPerClass;
  spec.velocities = {Velocity::V2};
  spec.seed = seed;
  const Dataset ds = class_major(spec);
  AdvantageRun r;
  r.bivtc = train_split(ds, kProjectionPerClass, projection_model(0), seed);
  r.vit1 = train_split(ds, kProjectionPerClass, projection_model(1), seed);
  r.vit2 = train_split(ds, kProjectionPerClass, projection_model(2), seed);
  return r;
}

std::vector<AdvantageRun> g_advantage;

Outcome dual_stream_advantage() {
  const auto t0 = Clock::now();
  g_advantage.assign(5, {});
  parallel(5, [](std::size_t s) { g_advantage[s] = advantage_seed(100 + s); });
  double gap = 0, b = 0, v1 = 0, v2 = 0;
  for (const auto& r : g_advantage) {
    gap += r.bivtc.accuracy - std::max(r.vit1.accuracy, r.vit2.accuracy);
    b += r.bivtc.accuracy;
    v1 += r.vit1.accuracy;
    v2 += r.vit2.accuracy;
  }
  gap /= 5, b /= 5, v1 /= 5, v2 /= 5;
  return {gap >= 0.10 ? Outcome::Pass : Outcome::Fail,
          fmt("mean accuracy BiVTC %.4f, ViT sniffer 1 %.4f, ViT sniffer 2 %.4f; mean gap over the better ViT %.4f "
              "(>= 0.10), %.0f s",
              b, v1, v2, gap, seconds_since(t0))};
}

// ---- 7: early stopping -----------------------------------------------------------

Outcome early_stopping() {
  ad::Rng rng(7);
  Dataset ds;
  for (std::size_t c = 0; c < kNumClasses; ++c)
    for (int i = 0; i < 2; ++i) {
      Sample s;
      s.meta.label = label_from_index(c);
      s.sniffer1 = AmplitudeWindow(4, 4, kBaseRateHz);
      s.sniffer2 = AmplitudeWindow(4, 4, kBaseRateHz);
      for (float& v : s.sniffer1.data) v = static_cast<float>(c + rng.uniform());
      for (float& v : s.sniffer2.data) v = static_cast<float>(rng.uniform());
      ds.samples.push_back(std::move(s));
    }
  std::vector<std::size_t> all(ds.size());
  std::iota(all.begin(), all.end(), 0);
  const auto stats = preprocess::compute_sniffer_stats(ds, all);
  const auto p = training::prepare(ds, all, stats, 2);
  auto mc = models::ModelConfig::tiny();
  models::Classifier<float> m(mc, 8);
  training::TrainConfig tc;
  tc.lr = 1e-2;  // make every epoch change the weights visibly
  training::FitHooks hooks;
  hooks.val_loss_override = [](std::size_t epoch, double) { return 1.0 + 0.01 * double(epoch); };
  const auto h = training::fit(m, p, p, tc, hooks);
  const bool hash_ok = m.weight_hash() == h.epochs.front().weight_hash && h.epochs.back().weight_hash != h.epochs.front().weight_hash;
  const bool ok = h.epochs.size() == 1 + tc.patience && h.best_epoch == 1 && h.early_stopped && hash_ok;
  return {ok ? Outcome::Pass : Outcome::Fail,
          fmt("stopped after epoch %zu (expected %zu), best epoch %zu (1), restored weight hash %s", h.epochs.size(),
              1 + tc.patience, h.best_epoch, hash_ok ? "matches epoch 1" : "MISMATCH")};
}

// ---- 8: protocol plumbing --------------------------------------------------------

protocols::RunConfig plumbing_config() {
  protocols::RunConfig c;
  c.model = models::ModelConfig::paper();
  c.model.depth = 1;
  c.model.embed_dim = 32;
  c.model.heads = 2;
  c.model.mlp_hidden = 64;
  c.model.head_hidden = 32;
  c.train.max_epochs = 4;
  c.train.patience = 4;
  c.train.lr = 1e-3;
  c.split.folds = 2;
  c.seed = 8;
  c.workers = std::thread::hardware_concurrency();
  return c;
}

Dataset plumbing_dataset() {
  synth::SynthSpec spec;
  spec.per_class = 5;
  spec.velocities = {Velocity::V1, Velocity::V2, Velocity::V3};
  spec.seed = 80;
  return synth::gen_dataset(spec, std::thread::hardware_concurrency());
}

struct PlumbingResult {
  std::string lovo_json, sweep_json;
};

PlumbingResult g_plumbing;

Outcome protocol_plumbing() {
  const auto t0 = Clock::now();
  const Dataset ds = plumbing_dataset();
  const auto cfg = plumbing_config();

  const auto lovo = protocols::run_lovo(ds, cfg);
  const auto rows = report::lovo_table(lovo);
  double worst = 0;
  for (const auto& row : rows) {
    double weighted = 0;
    std::size_t total = 0;
    for (std::size_t c = 0; c < kNumClasses; ++c) {
      weighted += row.class_accuracy[c] * double(row.support[c]);
      total += row.support[c];
    }
    worst = std::max(worst, std::abs(weighted / double(total) - row.overall));
  }
  const bool lovo_ok = rows.size() == 3 && worst <= 1e-12;

  const auto sweep = protocols::run_freq_sweep(ds, cfg);
  const auto grid = report::freq_grid(sweep);
  bool full = grid.values.size() == 5;
  for (const auto& row : grid.values) {
    full &= row.size() == 3;
    for (double v : row) full &= !std::isnan(v);
  }
  bool column = full;
  for (std::size_t v = 0; v < 3 && full; ++v) {
    SampleFilter f;
    f.velocity = kAllVelocities[v];
    const auto plain = protocols::run_cv(select(ds, f), cfg);
    column &= report::summarize_arms(plain.arms).accuracy.mean == grid.values[0][v];
  }
  g_plumbing = {lovo.to_json(), sweep.to_json()};
  const bool ok = lovo_ok && full && column;
  return {ok ? Outcome::Pass : Outcome::Fail,
          fmt("lovo rows %zu, weighted-mean identity max error %.2g (<= 1e-12); sweep grid %zux%zu complete %s, "
              "30 Hz column equals plain cv %s, %.0f s",
              rows.size(), worst, grid.values.size(), grid.values.empty() ? 0 : grid.values[0].size(),
              full ? "yes" : "no", column ? "yes" : "no", seconds_since(t0))};
}

// ---- 9: reference accuracy (non-gating) ------------------------------------------

Outcome reference_accuracy(const std::string& real_dir) {
  if (real_dir.empty()) return {Outcome::Skip, "no real dataset given (--real-dataset or ROBOFI_REAL_DATASET); non-gating"};
  const Dataset ds = read_dataset(real_dir);
  auto cfg = protocols::RunConfig{};
  cfg.workers = std::thread::hardware_concurrency();
  const auto r = protocols::run_cv(ds, cfg);
  const auto s = report::summarize_arms(r.arms);
  const double delta = 100.0 * s.accuracy.mean - 92.50;
  return {Outcome::Skip,
          fmt("non-gating: cv accuracy %.2f +- %.2f vs 92.50 +- 2.45, delta %+.2f points%s", 100.0 * s.accuracy.mean,
              100.0 * s.accuracy.stddev, delta, std::abs(delta) > 5.0 ? " (FLAG: |delta| > 5, investigate)" : "")};
}

// ---- 10: determinism ---------------------------------------------------------------

Outcome determinism(bool full, const std::set<int>& ran) {
  std::vector<std::string> checked, differs;
  if (ran.count(5)) {
    // Re-run the seed that stopped earliest unless asked for all of them.
    std::vector<std::size_t> seeds(5);
    std::iota(seeds.begin(), seeds.end(), 0);
    if (!full) {
      seeds = {static_cast<std::size_t>(std::min_element(g_separability.runs.begin(), g_separability.runs.end(),
                                                         [](const SplitRun& a, const SplitRun& b) { return a.epochs < b.epochs; }) -
                                        g_separability.runs.begin())};
    }
    parallel(seeds.size(), [&](std::size_t i) {
      const auto again = separability_seed(seeds[i]);
      static std::mutex mu;
      std::lock_guard lock(mu);
      checked.push_back(fmt("5/seed%zu", seeds[i]));
      if (again.metrics_json != g_separability.runs[seeds[i]].metrics_json) differs.push_back(checked.back());
    });
  }
  if (ran.count(6)) {
    std::vector<std::size_t> seeds(5);
    std::iota(seeds.begin(), seeds.end(), 0);
    if (!full) seeds = {0};
    parallel(seeds.size(), [&](std::size_t i) {
      const auto again = advantage_seed(100 + seeds[i]);
      const auto& first = g_advantage[seeds[i]];
      static std::mutex mu;
      std::lock_guard lock(mu);
      checked.push_back(fmt("6/seed%zu", 100 + seeds[i]));
      if (again.bivtc.metrics_json != first.bivtc.metrics_json || again.vit1.metrics_json != first.vit1.metrics_json ||
          again.vit2.metrics_json != first.vit2.metrics_json)
        differs.push_back(checked.back());
    });
  }
  if (ran.count(8)) {
    const Dataset ds = plumbing_dataset();
    const auto cfg = plumbing_config();
    checked.push_back("8/lovo");
    if (protocols::run_lovo(ds, cfg).to_json() != g_plumbing.lovo_json) differs.push_back("8/lovo");
    checked.push_back("8/sweep-freq");
    if (protocols::run_freq_sweep(ds, cfg).to_json() != g_plumbing.sweep_json) differs.push_back("8/sweep-freq");
  }
  if (checked.empty()) return {Outcome::Skip, "criteria 5, 6 and 8 were not run"};
  std::string list, bad;
  for (const auto& c : checked) list += (list.empty() ? "" : " ") + c;
  for (const auto& c : differs) bad += (bad.empty() ? "" : " ") + c;
  return {differs.empty() ? Outcome::Pass : Outcome::Fail,
          fmt("re-runs byte-identical: [%s]%s%s", list.c_str(), differs.empty() ? "" : ", differ: ", bad.c_str())};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  std::vector<int> only;
  std::string real_dir;
  bool full_determinism = false;
  std::string log_path;
  app.add_option("--only", only, "criteria to run (default all)")->delimiter(',')->check(CLI::Range(1, 10));
  app.add_option("--real-dataset", real_dir, "canonical dataset directory of real captures (criterion 9)");
  app.add_flag("--full-determinism", full_determinism, "re-run every seed of criteria 5 and 6 for criterion 10");
  app.add_option("--log", log_path, "also write the result lines to this file");
  CLI11_PARSE(app, argc, argv);
  std::ofstream log;
  if (!log_path.empty()) log.open(log_path);
  if (real_dir.empty())
    if (const char* env = std::getenv("ROBOFI_REAL_DATASET")) real_dir = env;

  std::set<int> selected(only.begin(), only.end());
  if (selected.empty())
    for (int i = 1; i <= 10; ++i) selected.insert(i);

  const std::vector<std::pair<int, std::string>> names{
      {1, "gradient fidelity"},  {2, "attention correctness"},  {3, "pipeline exactness"},
      {4, "metric oracle"},      {5, "synthetic separability"}, {6, "dual-stream advantage"},
      {7, "early stopping"},     {8, "protocol plumbing"},      {9, "reference accuracy"},
      {10, "determinism"}};
  std::set<int> ran;
  bool all_ok = true;
  for (const auto& [id, name] : names) {
    if (!selected.count(id)) continue;
    Outcome o;
    bool completed = true;
    try {
      switch (id) {
        case 1: o = gradient_fidelity(); break;
        case 2: o = attention_correctness(); break;
        case 3: o = pipeline_exactness(); break;
        case 4: o = metric_oracle(); break;
        case 5: o = synthetic_separability(); break;
        case 6: o = dual_stream_advantage(); break;
        case 7: o = early_stopping(); break;
        case 8: o = protocol_plumbing(); break;
        case 9: o = reference_accuracy(real_dir); break;
        case 10: o = determinism(full_determinism, ran); break;
      }
    } catch (const std::exception& e) {
      o = {id == 9 ? Outcome::Skip : Outcome::Fail, std::string("error: ") + e.what()};
      completed = false;
    }
    if (completed && o.status != Outcome::Skip) ran.insert(id);
    if (o.status == Outcome::Fail) all_ok = false;
    const char* tag = o.status == Outcome::Pass ? "PASS" : o.status == Outcome::Fail ? "FAIL" : "SKIP";
    const std::string line = fmt("criterion %2d %-22s %s  ", id, name.c_str(), tag) + o.detail;
    std::printf("%s\n", line.c_str());
    std::fflush(stdout);
    if (log) log << line << std::endl;
  }
  return all_ok ? 0 : 1;
}
