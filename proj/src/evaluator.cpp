#include "mlod/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "mlod/error.hpp"

namespace mlod {

using nlohmann::json;

namespace {

void check_nonempty(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw Error(ErrorKind::EmptyInput, "metric needs nonempty ID and OOD scores");
}

double share(std::size_t count, std::size_t total) {
  return static_cast<double>(count) / static_cast<double>(total);
}

// Share of rows kept as ID, from per-row OOD flags.
double kept_share(const std::vector<std::uint8_t>& ood_flags) {
  const auto rejected = static_cast<std::size_t>(std::count(ood_flags.begin(), ood_flags.end(), std::uint8_t{1}));
  return share(ood_flags.size() - rejected, ood_flags.size());
}

CombinerConfig at_alpha(const CombinerConfig& config, double alpha) {
  CombinerConfig c = config;
  c.alpha = alpha;
  return c;
}

json metrics_json(const Metrics& m) {
  return {{"fpr95", m.fpr95}, {"auroc", m.auroc}, {"fpr_at_alpha", m.fpr_at_alpha}, {"achieved_tpr", m.achieved_tpr}};
}

std::string percent(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", 100.0 * v);
  return buf;
}

}  // namespace

double auroc(std::span<const double> id_scores, std::span<const double> ood_scores) {
  check_nonempty(id_scores, ood_scores);
  const std::size_t n_id = id_scores.size(), n = n_id + ood_scores.size();
  std::vector<std::pair<double, bool>> all;
  all.reserve(n);
  for (double s : id_scores) all.emplace_back(s, true);
  for (double s : ood_scores) all.emplace_back(s, false);
  std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) { return a.first < b.first; });

  // Ranks are 1-based; tied runs share their average rank.
  double id_rank_sum = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && all[j].first == all[i].first) ++j;
    const double rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t t = i; t < j; ++t)
      if (all[t].second) id_rank_sum += rank;
    i = j;
  }
  const double n1 = static_cast<double>(n_id), n2 = static_cast<double>(ood_scores.size());
  return (id_rank_sum - n1 * (n1 + 1.0) / 2.0) / (n1 * n2);
}

OperatingPoint operating_point(std::span<const double> id_scores, std::span<const double> ood_scores,
                               double target_tpr) {
  check_nonempty(id_scores, ood_scores);
  if (!(target_tpr > 0.0 && target_tpr <= 1.0)) throw Error(ErrorKind::OutOfDomain, "target TPR must lie in (0, 1]");
  std::vector<double> id(id_scores.begin(), id_scores.end());
  std::sort(id.begin(), id.end(), std::greater<>());
  const std::size_t n = id.size();

  // Smallest count j with j/n >= target; the j-th largest ID score is the
  // largest threshold that keeps at least j ID samples.
  std::size_t j = static_cast<std::size_t>(std::ceil(target_tpr * static_cast<double>(n)));
  j = std::clamp<std::size_t>(j, 1, n);
  while (j > 1 && share(j - 1, n) >= target_tpr) --j;
  while (j < n && share(j, n) < target_tpr) ++j;

  OperatingPoint op;
  op.threshold = id[j - 1];
  const auto kept_id = std::count_if(id.begin(), id.end(), [&](double s) { return s >= op.threshold; });
  const auto kept_ood =
      std::count_if(ood_scores.begin(), ood_scores.end(), [&](double s) { return s >= op.threshold; });
  op.tpr = share(static_cast<std::size_t>(kept_id), n);
  op.fpr = share(static_cast<std::size_t>(kept_ood), ood_scores.size());
  return op;
}

double fpr_at_tpr(std::span<const double> id_scores, std::span<const double> ood_scores, double target_tpr) {
  return operating_point(id_scores, ood_scores, target_tpr).fpr;
}

double kept_fraction(const FusionRule& rule, const PValueMatrix& p) {
  if (p.rows() == 0) throw Error(ErrorKind::EmptyInput, "no samples");
  return kept_share(decide_batch(rule, p));
}

double calibrate_alpha_for_tpr(const CombinerConfig& method, const PValueMatrix& id_p, double target_tpr) {
  if (id_p.rows() == 0) throw Error(ErrorKind::EmptyInput, "no ID samples to calibrate alpha on");
  if (!(target_tpr > 0.0 && target_tpr <= 1.0)) throw Error(ErrorKind::OutOfDomain, "target TPR must lie in (0, 1]");
  auto tpr = [&](double alpha) { return kept_fraction(FusionRule(at_alpha(method, alpha), id_p.layers()), id_p); };

  // Decisions are monotone in alpha, so TPR is nonincreasing and bisection
  // converges to the largest alpha meeting the target.
  double lo = kMinCalibratedAlpha, hi = 1.0;
  if (tpr(lo) < target_tpr) return lo;
  for (int it = 0; it < 60; ++it) {
    const double mid = lo + (hi - lo) / 2.0;
    if (mid <= lo || mid >= hi) break;
    if (tpr(mid) >= target_tpr) lo = mid;
    else hi = mid;
  }
  return lo;
}

RocCurve roc_by_alpha_sweep(const CombinerConfig& method, const PValueMatrix& id_p, const PValueMatrix& ood_p,
                            std::size_t grid_size) {
  if (id_p.rows() == 0 || ood_p.rows() == 0) throw Error(ErrorKind::EmptyInput, "alpha sweep needs ID and OOD rows");
  if (grid_size < 2) throw Error(ErrorKind::OutOfDomain, "grid_size must be >= 2");

  RocCurve roc;
  roc.curve = {{0.0, 0.0}, {1.0, 1.0}};
  const std::size_t interior = grid_size - 2;
  const double lo = std::log(kMinSweepAlpha), hi = std::log(1.0 - kMinSweepAlpha);
  for (std::size_t g = 0; g < interior; ++g) {
    const double t = interior == 1 ? 0.0 : static_cast<double>(g) / static_cast<double>(interior - 1);
    const double alpha = std::exp(lo + t * (hi - lo));
    const FusionRule rule(at_alpha(method, alpha), id_p.layers());
    roc.curve.emplace_back(kept_fraction(rule, ood_p), kept_fraction(rule, id_p));
  }
  std::sort(roc.curve.begin(), roc.curve.end());
  double area = 0.0;
  for (std::size_t i = 1; i < roc.curve.size(); ++i) {
    const auto [x0, y0] = roc.curve[i - 1];
    const auto [x1, y1] = roc.curve[i];
    area += (x1 - x0) * (y0 + y1) / 2.0;
  }
  roc.auroc = area;
  return roc;
}

Metrics mean_metrics(const std::map<std::string, Metrics>& per_dataset) {
  Metrics avg;
  if (per_dataset.empty()) return avg;
  for (const auto& [name, m] : per_dataset) {
    avg.fpr95 += m.fpr95;
    avg.auroc += m.auroc;
    avg.fpr_at_alpha += m.fpr_at_alpha;
    avg.achieved_tpr += m.achieved_tpr;
  }
  const double n = static_cast<double>(per_dataset.size());
  avg.fpr95 /= n;
  avg.auroc /= n;
  avg.fpr_at_alpha /= n;
  avg.achieved_tpr /= n;
  return avg;
}

EvalReport evaluate(const FeaturePack& pack, std::span<const ScorerConfig> scorers,
                    std::span<const CombinerConfig> methods, const EvalOptions& options) {
  if (methods.empty()) throw Error(ErrorKind::ConfigError, "no combiner methods requested");
  if (!pack.manifest.has_split(kCalibrationSplit) || !pack.manifest.has_split(kTestIdSplit))
    throw Error(ErrorKind::UnknownSplit, "pack needs calibration and test_id splits");

  EvalReport report;
  report.datasets = pack.manifest.ood_splits();
  if (report.datasets.empty()) throw Error(ErrorKind::UnknownSplit, "pack has no OOD split");

  const Detector detector =
      Detector::fit(pack, std::vector<ScorerConfig>(scorers.begin(), scorers.end()), options.detector);
  for (std::size_t i = 0; i < detector.layers(); ++i)
    if (detector.table(i).low_resolution())
      report.warnings.push_back("layer " + std::to_string(detector.layer(i).index) + ": only " +
                                std::to_string(detector.table(i).size()) +
                                " calibration scores; p-value resolution is coarse");
  const auto id_scores = detector.score_split(pack, kTestIdSplit);
  const PValueMatrix id_p = p_matrix(detector.tables(), id_scores);
  std::map<std::string, std::vector<std::vector<double>>> ood_scores;
  std::map<std::string, PValueMatrix> ood_p;
  for (const auto& name : report.datasets) {
    ood_scores[name] = detector.score_split(pack, name);
    ood_p[name] = p_matrix(detector.tables(), ood_scores[name]);
  }

  const std::size_t m = detector.layers();
  for (const auto& config : methods) {
    MethodReport mr;
    mr.config = config;
    const FusionRule nominal(config, m);
    mr.alpha_at_target = calibrate_alpha_for_tpr(config, id_p, options.target_tpr);
    const FusionRule at_target(at_alpha(config, mr.alpha_at_target), m);
    const double achieved = kept_fraction(at_target, id_p);
    std::vector<double> id_combined;
    if (has_combined_score(config.method)) id_combined = combined_scores(nominal, id_p);

    for (const auto& name : report.datasets) {
      Metrics metrics;
      metrics.achieved_tpr = achieved;
      metrics.fpr95 = kept_fraction(at_target, ood_p[name]);
      metrics.fpr_at_alpha = kept_fraction(nominal, ood_p[name]);
      metrics.auroc = has_combined_score(config.method)
                          ? auroc(id_combined, combined_scores(nominal, ood_p[name]))
                          : roc_by_alpha_sweep(config, id_p, ood_p[name], options.grid_size).auroc;
      mr.datasets[name] = metrics;
    }
    mr.average = mean_metrics(mr.datasets);
    report.methods.push_back(std::move(mr));
  }

  if (options.per_layer_baseline) {
    const double alpha = methods.front().alpha;
    for (std::size_t i = 0; i < m; ++i) {
      LayerReport lr;
      lr.layer = detector.layer(i);
      lr.scorer = detector.scorer(i);
      const double lambda = threshold_at(detector.table(i), alpha);
      for (const auto& name : report.datasets) {
        const auto& ood = ood_scores[name][i];
        const OperatingPoint op = operating_point(id_scores[i], ood, options.target_tpr);
        Metrics metrics;
        metrics.fpr95 = op.fpr;
        metrics.achieved_tpr = op.tpr;
        metrics.auroc = auroc(id_scores[i], ood);
        metrics.fpr_at_alpha = share(static_cast<std::size_t>(std::count_if(
                                         ood.begin(), ood.end(),
                                         [&](double s) { return decide_threshold(s, lambda) == Decision::id; })),
                                     ood.size());
        lr.datasets[name] = metrics;
      }
      lr.average = mean_metrics(lr.datasets);
      report.layers.push_back(std::move(lr));
    }
  }
  return report;
}

json report_to_json(const EvalReport& report, const json& config_echo) {
  json j;
  j["config"] = config_echo;
  j["datasets"] = report.datasets;
  j["methods"] = json::object();
  for (const auto& mr : report.methods) {
    std::string key(to_string(mr.config.method));
    for (int dup = 2; j["methods"].contains(key); ++dup) key = std::string(to_string(mr.config.method)) + "#" + std::to_string(dup);
    json entry;
    entry["display"] = display_name(mr.config.method);
    entry["alpha"] = mr.config.alpha;
    entry["alpha_at_target"] = mr.alpha_at_target;
    if (!mr.config.weights.empty()) entry["weights"] = mr.config.weights;
    entry["datasets"] = json::object();
    for (const auto& [name, m] : mr.datasets) entry["datasets"][name] = metrics_json(m);
    entry["average"] = metrics_json(mr.average);
    j["methods"][key] = entry;
  }
  if (!report.layers.empty()) {
    j["layers"] = json::object();
    for (const auto& lr : report.layers) {
      json entry;
      entry["name"] = lr.layer.name;
      entry["scorer"] = to_string(lr.scorer.method);
      entry["datasets"] = json::object();
      for (const auto& [name, m] : lr.datasets) entry["datasets"][name] = metrics_json(m);
      entry["average"] = metrics_json(lr.average);
      j["layers"][std::to_string(lr.layer.index)] = entry;
    }
  }
  return j;
}

std::string report_to_csv(const EvalReport& report) {
  std::ostringstream os;
  os << "method";
  for (const auto& name : report.datasets) os << ',' << name << "_fpr95," << name << "_auroc";
  os << ",average_fpr95,average_auroc\n";
  auto row = [&](const std::string& label, const std::map<std::string, Metrics>& per, const Metrics& avg) {
    os << label;
    for (const auto& name : report.datasets) os << ',' << percent(per.at(name).fpr95) << ',' << percent(per.at(name).auroc);
    os << ',' << percent(avg.fpr95) << ',' << percent(avg.auroc) << '\n';
  };
  for (const auto& lr : report.layers) row("Layer@" + std::to_string(lr.layer.index), lr.datasets, lr.average);
  for (const auto& mr : report.methods) row(std::string(display_name(mr.config.method)), mr.datasets, mr.average);
  return os.str();
}

std::string report_to_table(const EvalReport& report) {
  std::vector<std::string> header{"Method"};
  for (const auto& name : report.datasets) {
    header.push_back(name + " FPR95");
    header.push_back(name + " AUROC");
  }
  header.push_back("Avg FPR95");
  header.push_back("Avg AUROC");

  std::vector<std::vector<std::string>> rows;
  auto add = [&](const std::string& label, const std::map<std::string, Metrics>& per, const Metrics& avg) {
    std::vector<std::string> r{label};
    for (const auto& name : report.datasets) {
      r.push_back(percent(per.at(name).fpr95));
      r.push_back(percent(per.at(name).auroc));
    }
    r.push_back(percent(avg.fpr95));
    r.push_back(percent(avg.auroc));
    rows.push_back(std::move(r));
  };
  for (const auto& lr : report.layers) add("Layer@" + std::to_string(lr.layer.index), lr.datasets, lr.average);
  for (const auto& mr : report.methods) add(std::string(display_name(mr.config.method)), mr.datasets, mr.average);

  std::vector<std::size_t> width(header.size());
  for (std::size_t c = 0; c < header.size(); ++c) {
    width[c] = header[c].size();
    for (const auto& r : rows) width[c] = std::max(width[c], r[c].size());
  }
  std::ostringstream os;
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t c = 0; c < cells.size(); ++c) {
      os << (c == 0 ? "" : "  ");
      const std::string pad(width[c] - cells[c].size(), ' ');
      os << (c == 0 ? cells[c] + pad : pad + cells[c]);
    }
    os << '\n';
  };
  line(header);
  for (const auto& r : rows) line(r);
  return os.str();
}

}  // namespace mlod
