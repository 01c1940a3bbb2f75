#include "robofi/report.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "json.hpp"
#include "robofi/dataset.hpp"

namespace robofi {

using nlohmann::json;

namespace {

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

json metrics_json(const metrics::Metrics& m) {
  json per_class = json::array();
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    per_class.push_back({{"label", label_name(kAllLabels[c])},
                         {"precision", m.per_class[c].precision},
                         {"recall", m.per_class[c].recall},
                         {"f1", m.per_class[c].f1},
                         {"support", m.truth_count(c)}});
  }
  json conf = json::array();
  for (const auto& row : m.confusion) conf.push_back(row);
  return {{"accuracy", m.accuracy},   {"macro_precision", m.macro_precision}, {"macro_recall", m.macro_recall},
          {"macro_f1", m.macro_f1},   {"per_class", per_class},               {"confusion", conf}};
}

metrics::Metrics metrics_from(const json& j) {
  metrics::Confusion c{};
  const json& rows = j.at("confusion");
  if (rows.size() != kNumClasses) throw Error(ErrorCode::Format, "confusion matrix must be 8x8");
  for (std::size_t r = 0; r < kNumClasses; ++r) {
    if (rows[r].size() != kNumClasses) throw Error(ErrorCode::Format, "confusion matrix must be 8x8");
    for (std::size_t k = 0; k < kNumClasses; ++k) c[r][k] = rows[r][k].get<std::size_t>();
  }
  return metrics::from_confusion(c);
}

json summary_json(const metrics::Summary& s) { return {{"mean", s.mean}, {"std", s.stddev}}; }

json grid_json(const report::Grid& g) {
  json values = json::array();
  for (const auto& row : g.values) {
    json r = json::array();
    for (double v : row) r.push_back(std::isnan(v) ? json(nullptr) : json(v));
    values.push_back(r);
  }
  return {{"rows", g.row_names}, {"cols", g.col_names}, {"values", values}};
}

}  // namespace

namespace protocols {

std::string ProtocolReport::to_json() const {
  json arms_j = json::array();
  for (const ArmResult& a : arms) {
    json epochs = json::array();
    for (const auto& e : a.history.epochs) {
      epochs.push_back({{"epoch", e.epoch},
                        {"train_loss", e.train_loss},
                        {"val_loss", e.val_loss},
                        {"train_acc", e.train_acc},
                        {"val_acc", e.val_acc},
                        {"weight_hash", hex64(e.weight_hash)}});
    }
    json tests = json::array();
    for (const auto& t : a.tests) {
      json tj = metrics_json(t.metrics);
      tj["name"] = t.name;
      tj["count"] = t.count;
      tests.push_back(tj);
    }
    arms_j.push_back({{"name", a.name},
                      {"tags", a.tags},
                      {"n_train", a.n_train},
                      {"n_val", a.n_val},
                      {"n_test", a.n_test},
                      {"best_epoch", a.history.best_epoch},
                      {"best_val_loss", a.history.best_val_loss},
                      {"early_stopped", a.history.early_stopped},
                      {"epochs", epochs},
                      {"tests", tests}});
  }
  json j;
  j["protocol"] = protocol;
  j["config"] = config_json.empty() ? json::object() : json::parse(config_json);
  j["arms"] = arms_j;

  const auto s = report::summarize_arms(arms);
  j["summary"] = {{"accuracy", summary_json(s.accuracy)},
                  {"macro_precision", summary_json(s.macro_precision)},
                  {"macro_recall", summary_json(s.macro_recall)},
                  {"macro_f1", summary_json(s.macro_f1)}};
  if (protocol == "lovo") {
    json rows = json::array();
    for (const auto& r : report::lovo_table(*this)) {
      json per;
      for (std::size_t c = 0; c < kNumClasses; ++c) per[std::string(label_name(kAllLabels[c]))] = r.class_accuracy[c];
      rows.push_back({{"holdout", r.holdout}, {"per_class", per}, {"overall", r.overall}, {"weighted_mean", r.weighted_mean}});
    }
    j["per_class_table"] = rows;
  } else if (protocol == "freq_sweep") {
    j["grid"] = grid_json(report::freq_grid(*this));
  } else if (protocol == "location") {
    j["grid"] = grid_json(report::location_grid(*this));
  }
  return j.dump(2) + "\n";
}

ProtocolReport ProtocolReport::from_json(const std::string& text) {
  ProtocolReport r;
  try {
    const json j = json::parse(text);
    r.protocol = j.at("protocol").get<std::string>();
    r.config_json = j.at("config").dump();
    for (const json& a : j.at("arms")) {
      ArmResult arm;
      arm.name = a.at("name").get<std::string>();
      arm.tags = a.at("tags").get<std::map<std::string, std::string>>();
      arm.n_train = a.at("n_train").get<std::size_t>();
      arm.n_val = a.at("n_val").get<std::size_t>();
      arm.n_test = a.at("n_test").get<std::size_t>();
      arm.history.best_epoch = a.at("best_epoch").get<std::size_t>();
      arm.history.best_val_loss = a.at("best_val_loss").get<double>();
      arm.history.early_stopped = a.at("early_stopped").get<bool>();
      for (const json& e : a.at("epochs")) {
        training::EpochRecord rec;
        rec.epoch = e.at("epoch").get<std::size_t>();
        rec.train_loss = e.at("train_loss").get<double>();
        rec.val_loss = e.at("val_loss").get<double>();
        rec.train_acc = e.at("train_acc").get<double>();
        rec.val_acc = e.at("val_acc").get<double>();
        rec.weight_hash = std::stoull(e.at("weight_hash").get<std::string>(), nullptr, 16);
        arm.history.epochs.push_back(rec);
      }
      for (const json& t : a.at("tests")) {
        TestResult tr;
        tr.name = t.at("name").get<std::string>();
        tr.count = t.at("count").get<std::size_t>();
        tr.metrics = metrics_from(t);
        arm.tests.push_back(std::move(tr));
      }
      r.arms.push_back(std::move(arm));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Format, std::string("protocol report: ") + e.what());
  }
  return r;
}

}  // namespace protocols

namespace report {

std::string metrics_to_json(const metrics::Metrics& m) { return metrics_json(m).dump(2) + "\n"; }

MetricSummary summarize_arms(const std::vector<protocols::ArmResult>& arms) {
  std::vector<double> acc, p, r, f;
  for (const auto& a : arms) {
    if (a.tests.empty()) continue;
    const auto& m = a.tests.front().metrics;
    acc.push_back(m.accuracy);
    p.push_back(m.macro_precision);
    r.push_back(m.macro_recall);
    f.push_back(m.macro_f1);
  }
  return {metrics::summarize(acc), metrics::summarize(p), metrics::summarize(r), metrics::summarize(f)};
}

std::vector<LovoRow> lovo_table(const protocols::ProtocolReport& r) {
  std::vector<LovoRow> rows;
  for (const auto& a : r.arms) {
    if (a.tests.empty()) continue;
    const auto& m = a.tests.front().metrics;
    LovoRow row;
    const auto it = a.tags.find("holdout");
    row.holdout = it == a.tags.end() ? a.name : it->second;
    double weighted = 0.0;
    std::size_t total = 0;
    for (std::size_t c = 0; c < kNumClasses; ++c) {
      row.class_accuracy[c] = m.class_accuracy(c);
      row.support[c] = m.truth_count(c);
      weighted += row.class_accuracy[c] * static_cast<double>(row.support[c]);
      total += row.support[c];
    }
    row.overall = m.accuracy;
    row.weighted_mean = total == 0 ? 0.0 : weighted / static_cast<double>(total);
    rows.push_back(row);
  }
  return rows;
}

namespace {

std::size_t index_of(std::vector<std::string>& names, const std::string& name) {
  const auto it = std::find(names.begin(), names.end(), name);
  if (it != names.end()) return static_cast<std::size_t>(it - names.begin());
  names.push_back(name);
  return names.size() - 1;
}

}  // namespace

Grid freq_grid(const protocols::ProtocolReport& r) {
  Grid g;
  std::vector<std::vector<std::vector<double>>> acc;
  for (const auto& a : r.arms) {
    if (a.tests.empty() || !a.tags.contains("rate_hz") || !a.tags.contains("velocity")) continue;
    const std::size_t row = index_of(g.row_names, a.tags.at("rate_hz") + " Hz");
    const std::size_t col = index_of(g.col_names, a.tags.at("velocity"));
    acc.resize(g.row_names.size());
    for (auto& rr : acc) rr.resize(std::max(rr.size(), g.col_names.size()));
    acc[row].resize(std::max(acc[row].size(), col + 1));
    acc[row][col].push_back(a.tests.front().metrics.accuracy);
  }
  g.values.assign(g.row_names.size(), std::vector<double>(g.col_names.size(), std::numeric_limits<double>::quiet_NaN()));
  for (std::size_t i = 0; i < acc.size(); ++i)
    for (std::size_t k = 0; k < acc[i].size(); ++k)
      if (!acc[i][k].empty()) g.values[i][k] = metrics::summarize(acc[i][k]).mean;
  return g;
}

Grid location_grid(const protocols::ProtocolReport& r) {
  Grid g;
  for (Location l : kAllLocations) g.col_names.emplace_back(location_name(l));
  for (const auto& a : r.arms) {
    const auto it = a.tags.find("train_locations");
    g.row_names.push_back(it == a.tags.end() ? a.name : it->second);
    std::vector<double> row(g.col_names.size(), std::numeric_limits<double>::quiet_NaN());
    for (const auto& t : a.tests) {
      const auto c = std::find(g.col_names.begin(), g.col_names.end(), t.name);
      if (c != g.col_names.end()) row[static_cast<std::size_t>(c - g.col_names.begin())] = t.metrics.accuracy;
    }
    g.values.push_back(row);
  }
  return g;
}

namespace {

std::string num(double v) {
  if (std::isnan(v)) return "";
  std::ostringstream o;
  o.precision(17);
  o << v;
  return o.str();
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

std::string grid_csv(const Grid& g, const std::string& corner) {
  std::ostringstream out;
  out << corner;
  for (const auto& c : g.col_names) out << ',' << c;
  out << '\n';
  for (std::size_t i = 0; i < g.row_names.size(); ++i) {
    out << g.row_names[i];
    for (double v : g.values[i]) out << ',' << num(v);
    out << '\n';
  }
  return out.str();
}

std::string lovo_csv(const std::vector<LovoRow>& rows) {
  std::ostringstream out;
  out << "holdout";
  for (auto l : kAllLabels) out << ',' << label_name(l);
  out << ",overall\n";
  for (const auto& r : rows) {
    out << r.holdout;
    for (double v : r.class_accuracy) out << ',' << num(v);
    out << ',' << num(r.overall) << '\n';
  }
  return out.str();
}

std::string summary_csv(const protocols::ProtocolReport& r) {
  std::ostringstream out;
  out << "arm,test,count,accuracy,macro_precision,macro_recall,macro_f1\n";
  for (const auto& a : r.arms) {
    for (const auto& t : a.tests) {
      out << a.name << ',' << t.name << ',' << t.count << ',' << num(t.metrics.accuracy) << ','
          << num(t.metrics.macro_precision) << ',' << num(t.metrics.macro_recall) << ',' << num(t.metrics.macro_f1)
          << '\n';
    }
  }
  const auto s = summarize_arms(r.arms);
  out << "mean,,," << num(s.accuracy.mean) << ',' << num(s.macro_precision.mean) << ',' << num(s.macro_recall.mean)
      << ',' << num(s.macro_f1.mean) << '\n';
  out << "std,,," << num(s.accuracy.stddev) << ',' << num(s.macro_precision.stddev) << ','
      << num(s.macro_recall.stddev) << ',' << num(s.macro_f1.stddev) << '\n';
  return out.str();
}

std::string bar_chart_svg(const Grid& g, const std::string& title, const std::string& y_label) {
  static constexpr const char* palette[] = {"#4477aa", "#ee6677", "#228833", "#ccbb44", "#66ccee", "#aa3377", "#bbbbbb"};
  const double width = 720, height = 400, left = 60, right = 140, top = 40, bottom = 50;
  const double plot_w = width - left - right, plot_h = height - top - bottom;
  const std::size_t groups = g.row_names.size(), series = g.col_names.size();
  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
    << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << width / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << xml_escape(title)
    << "</text>\n";
  for (int t = 0; t <= 4; ++t) {
    const double y = top + plot_h * (1.0 - t / 4.0);
    o << "<line x1=\"" << left << "\" x2=\"" << left + plot_w << "\" y1=\"" << y << "\" y2=\"" << y
      << "\" stroke=\"#ddd\"/>\n";
    o << "<text x=\"" << left - 6 << "\" y=\"" << y + 4 << "\" text-anchor=\"end\">" << t * 25 << "</text>\n";
  }
  o << "<text transform=\"translate(16," << top + plot_h / 2 << ") rotate(-90)\" text-anchor=\"middle\">"
    << xml_escape(y_label) << "</text>\n";
  const double group_w = groups == 0 ? 0 : plot_w / static_cast<double>(groups);
  const double bar_w = series == 0 ? 0 : group_w * 0.8 / static_cast<double>(series);
  for (std::size_t i = 0; i < groups; ++i) {
    const double gx = left + group_w * static_cast<double>(i) + group_w * 0.1;
    for (std::size_t k = 0; k < series; ++k) {
      const double v = g.values[i][k];
      if (std::isnan(v)) continue;
      const double h = plot_h * std::clamp(v, 0.0, 1.0);
      o << "<rect x=\"" << gx + bar_w * static_cast<double>(k) << "\" y=\"" << top + plot_h - h << "\" width=\""
        << bar_w * 0.92 << "\" height=\"" << h << "\" fill=\"" << palette[k % 7] << "\"><title>"
        << xml_escape(g.row_names[i] + " / " + g.col_names[k]) << ": " << num(100.0 * v) << "%</title></rect>\n";
    }
    o << "<text x=\"" << gx + group_w * 0.4 << "\" y=\"" << top + plot_h + 18 << "\" text-anchor=\"middle\">"
      << xml_escape(g.row_names[i]) << "</text>\n";
  }
  for (std::size_t k = 0; k < series; ++k) {
    const double y = top + 16.0 * static_cast<double>(k);
    o << "<rect x=\"" << left + plot_w + 16 << "\" y=\"" << y << "\" width=\"12\" height=\"12\" fill=\""
      << palette[k % 7] << "\"/>\n";
    o << "<text x=\"" << left + plot_w + 34 << "\" y=\"" << y + 10 << "\">" << xml_escape(g.col_names[k])
      << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

std::vector<std::string> render(const protocols::ProtocolReport& r, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  std::vector<std::string> written;
  auto put = [&](const std::string& rel, const std::string& text) {
    const auto path = out_dir / rel;
    std::filesystem::create_directories(path.parent_path());
    write_text(path, text);
    written.push_back(rel);
  };
  put("report.json", r.to_json());
  put("summary.csv", summary_csv(r));
  for (const auto& a : r.arms) {
    put("curves/" + a.name + ".csv", a.history.curves_csv());
    for (const auto& t : a.tests) put("confusion/" + a.name + "__" + t.name + ".csv", metrics::confusion_csv(t.metrics.confusion));
  }
  if (r.protocol == "lovo") {
    const auto rows = lovo_table(r);
    put("per_class_accuracy.csv", lovo_csv(rows));
    Grid g;
    for (const auto& row : rows) {
      g.row_names.push_back(row.holdout);
      g.values.emplace_back(row.class_accuracy.begin(), row.class_accuracy.end());
    }
    for (auto l : kAllLabels) g.col_names.emplace_back(label_name(l));
    put("per_class_accuracy.svg", bar_chart_svg(g, "Per-class accuracy by held-out velocity", "accuracy (%)"));
  } else if (r.protocol == "freq_sweep") {
    const Grid g = freq_grid(r);
    put("freq_grid.csv", grid_csv(g, "rate\\velocity"));
    put("freq_grid.svg", bar_chart_svg(g, "Accuracy by sampling rate and velocity", "accuracy (%)"));
  } else if (r.protocol == "location") {
    const Grid g = location_grid(r);
    put("location_grid.csv", grid_csv(g, "train\\test"));
    put("location_grid.svg", bar_chart_svg(g, "Accuracy by training locations and test location", "accuracy (%)"));
  }
  return written;
}

}  // namespace report
}  // namespace robofi
