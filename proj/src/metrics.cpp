#include "tmr/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include <json.hpp>

#include "tmr/errors.hpp"
#include "tmr/synth.hpp"

namespace tmr {

namespace {

void check_labels(std::span<const int> labels, int num_phases, const char* what) {
  for (int l : labels)
    if (l < 0 || l >= num_phases)
      throw IndexError(std::string(what) + ": label " + std::to_string(l) +
                       " out of range for " + std::to_string(num_phases) + " phases");
}

double pop_std(std::span<const double> xs, double mean) {
  double var = 0.0;
  for (double x : xs) var += (x - mean) * (x - mean);
  return std::sqrt(var / static_cast<double>(xs.size()));
}

const char* kPalette[] = {"#e6194b", "#3cb44b", "#ffe119", "#4363d8", "#f58231",
                          "#911eb4", "#46f0f0", "#f032e6", "#bcf60c", "#fabebe",
                          "#008080", "#e6beff", "#9a6324", "#fffac8", "#800000",
                          "#aaffc3"};
constexpr int kPaletteSize = 16;

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

}  // namespace

VideoScore score_video(std::span<const int> gt, std::span<const int> pred,
                       int num_phases) {
  if (gt.size() != pred.size())
    throw ContractError("score_video: label sequences differ in length");
  if (gt.empty()) throw ContractError("score_video: empty label sequences");
  check_labels(gt, num_phases, "score_video");
  check_labels(pred, num_phases, "score_video");

  VideoScore out;
  std::size_t correct = 0;
  for (std::size_t t = 0; t < gt.size(); ++t)
    if (gt[t] == pred[t]) ++correct;
  out.accuracy = static_cast<double>(correct) / static_cast<double>(gt.size());

  out.phases.resize(static_cast<std::size_t>(num_phases));
  double pr_sum = 0.0, re_sum = 0.0, ja_sum = 0.0;
  std::size_t counted = 0;
  for (int p = 0; p < num_phases; ++p) {
    std::size_t inter = 0, in_gt = 0, in_pred = 0, uni = 0;
    for (std::size_t t = 0; t < gt.size(); ++t) {
      const bool g = gt[t] == p, q = pred[t] == p;
      inter += g && q;
      in_gt += g;
      in_pred += q;
      uni += g || q;
    }
    PhaseScore& ps = out.phases[static_cast<std::size_t>(p)];
    ps.in_gt = in_gt > 0;
    ps.in_pred = in_pred > 0;
    if (!ps.in_gt && !ps.in_pred) continue;  // absent everywhere: excluded
    ps.precision = in_pred > 0 ? static_cast<double>(inter) / static_cast<double>(in_pred) : 0.0;
    ps.recall = in_gt > 0 ? static_cast<double>(inter) / static_cast<double>(in_gt) : 0.0;
    ps.jaccard = uni > 0 ? static_cast<double>(inter) / static_cast<double>(uni) : 0.0;
    pr_sum += ps.precision;
    re_sum += ps.recall;
    ja_sum += ps.jaccard;
    ++counted;
  }
  if (counted > 0) {
    out.precision = pr_sum / static_cast<double>(counted);
    out.recall = re_sum / static_cast<double>(counted);
    out.jaccard = ja_sum / static_cast<double>(counted);
  }
  return out;
}

Aggregate aggregate(std::span<const VideoScore> scores) {
  if (scores.empty()) throw ContractError("aggregate: no videos");
  Aggregate agg;
  agg.videos = scores.size();
  std::vector<double> ac, pr, re, ja;
  for (const auto& s : scores) {
    ac.push_back(s.accuracy);
    pr.push_back(s.precision);
    re.push_back(s.recall);
    ja.push_back(s.jaccard);
  }
  auto mean = [](std::span<const double> xs) {
    double m = 0.0;
    for (double x : xs) m += x;
    return m / static_cast<double>(xs.size());
  };
  agg.ac_mean = mean(ac);
  agg.pr_mean = mean(pr);
  agg.re_mean = mean(re);
  agg.ja_mean = mean(ja);
  agg.ac_std = pop_std(ac, agg.ac_mean);
  agg.pr_std = pop_std(pr, agg.pr_mean);
  agg.re_std = pop_std(re, agg.re_mean);
  agg.ja_std = pop_std(ja, agg.ja_mean);
  return agg;
}

std::vector<double> confusion(std::span<const int> gt, std::span<const int> pred,
                              int num_phases, bool normalize) {
  if (gt.size() != pred.size())
    throw ContractError("confusion: label sequences differ in length");
  check_labels(gt, num_phases, "confusion");
  check_labels(pred, num_phases, "confusion");
  const std::size_t c = static_cast<std::size_t>(num_phases);
  std::vector<double> m(c * c, 0.0);
  for (std::size_t t = 0; t < gt.size(); ++t)
    m[static_cast<std::size_t>(gt[t]) * c + static_cast<std::size_t>(pred[t])] += 1.0;
  if (normalize) {
    for (std::size_t row = 0; row < c; ++row) {
      double s = 0.0;
      for (std::size_t col = 0; col < c; ++col) s += m[row * c + col];
      if (s > 0.0)
        for (std::size_t col = 0; col < c; ++col) m[row * c + col] /= s;
    }
  }
  return m;
}

std::vector<int> smooth_moving_average(std::span<const double> probs, std::size_t T,
                                       std::size_t C, std::size_t window) {
  if (window % 2 == 0) throw ConfigError("smooth: window must be odd");
  if (probs.size() != T * C) throw ShapeError("smooth: probability matrix size mismatch");
  std::vector<int> labels(T, 0);
  std::vector<double> acc(C);
  for (std::size_t t = 0; t < T; ++t) {
    const std::size_t begin = t + 1 >= window ? t + 1 - window : 0;
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t s = begin; s <= t; ++s)
      for (std::size_t cdx = 0; cdx < C; ++cdx) acc[cdx] += probs[s * C + cdx];
    int best = 0;
    for (std::size_t cdx = 1; cdx < C; ++cdx)
      if (acc[cdx] > acc[best]) best = static_cast<int>(cdx);
    labels[t] = best;
  }
  return labels;
}

std::string ribbon_svg(std::span<const RibbonRow> rows, int num_phases) {
  if (rows.empty()) throw ContractError("ribbon_svg: no rows");
  std::size_t T = rows[0].labels.size();
  for (const auto& r : rows) {
    if (r.labels.size() != T)
      throw ContractError("ribbon_svg: rows differ in length");
    check_labels(r.labels, num_phases, "ribbon_svg");
  }
  if (T == 0) throw ContractError("ribbon_svg: empty rows");

  const int margin = 140, width = 960, band_h = 26, gap = 10, legend_h = 34;
  const int height = legend_h + static_cast<int>(rows.size()) * (band_h + gap) + gap;
  auto xpos = [&](std::size_t t) {
    return margin + static_cast<int>((t * static_cast<std::size_t>(width)) / T);
  };

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << margin + width + 20
     << "\" height=\"" << height << "\" font-family=\"sans-serif\" font-size=\"12\">\n";

  // legend
  for (int p = 0; p < num_phases; ++p) {
    const int lx = margin + p * 68;
    os << "  <rect class=\"legend\" x=\"" << lx << "\" y=\"8\" width=\"14\" height=\"14\" fill=\""
       << kPalette[p % kPaletteSize] << "\"/>\n";
    os << "  <text x=\"" << lx + 18 << "\" y=\"20\">P" << p + 1 << "</text>\n";
  }

  int y = legend_h;
  for (const auto& row : rows) {
    os << "  <text x=\"8\" y=\"" << y + band_h / 2 + 4 << "\">" << row.name << "</text>\n";
    for (const auto& run : label_runs(row.labels)) {
      const int x0 = xpos(run.begin), x1 = xpos(run.end);
      os << "  <rect class=\"run\" x=\"" << x0 << "\" y=\"" << y << "\" width=\""
         << std::max(1, x1 - x0) << "\" height=\"" << band_h << "\" fill=\""
         << kPalette[run.phase % kPaletteSize] << "\"/>\n";
    }
    y += band_h + gap;
  }
  os << "</svg>\n";
  return os.str();
}

std::string metrics_report_json(const std::vector<std::string>& video_names,
                                std::span<const VideoScore> scores,
                                const Aggregate& agg,
                                const std::vector<double>& confusion_normalized,
                                int num_phases, const std::string& run_metadata_json) {
  if (video_names.size() != scores.size())
    throw ContractError("metrics_report_json: one name per video required");
  nlohmann::json j;
  j["version"] = 1;
  if (!run_metadata_json.empty()) j["run"] = nlohmann::json::parse(run_metadata_json);

  nlohmann::json videos = nlohmann::json::array();
  for (std::size_t v = 0; v < scores.size(); ++v) {
    const VideoScore& s = scores[v];
    nlohmann::json jv;
    jv["name"] = video_names[v];
    jv["accuracy"] = s.accuracy;
    jv["precision"] = s.precision;
    jv["recall"] = s.recall;
    jv["jaccard"] = s.jaccard;
    nlohmann::json phases = nlohmann::json::array();
    for (std::size_t p = 0; p < s.phases.size(); ++p) {
      const PhaseScore& ps = s.phases[p];
      if (!ps.in_gt && !ps.in_pred) continue;
      phases.push_back({{"phase", p},
                        {"precision", ps.precision},
                        {"recall", ps.recall},
                        {"jaccard", ps.jaccard}});
    }
    jv["phases"] = std::move(phases);
    videos.push_back(std::move(jv));
  }
  j["videos"] = std::move(videos);

  j["aggregate"] = {{"videos", agg.videos},
                    {"accuracy", {{"mean", agg.ac_mean}, {"std", agg.ac_std}}},
                    {"precision", {{"mean", agg.pr_mean}, {"std", agg.pr_std}}},
                    {"recall", {{"mean", agg.re_mean}, {"std", agg.re_std}}},
                    {"jaccard", {{"mean", agg.ja_mean}, {"std", agg.ja_std}}}};

  if (!confusion_normalized.empty()) {
    const std::size_t c = static_cast<std::size_t>(num_phases);
    if (confusion_normalized.size() != c * c)
      throw ContractError("metrics_report_json: confusion matrix size mismatch");
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t r = 0; r < c; ++r) {
      nlohmann::json row = nlohmann::json::array();
      for (std::size_t col = 0; col < c; ++col) row.push_back(confusion_normalized[r * c + col]);
      rows.push_back(std::move(row));
    }
    j["confusion"] = std::move(rows);
  }
  return j.dump(2) + "\n";
}

std::string metrics_flat_table(const std::vector<std::string>& video_names,
                               std::span<const VideoScore> scores) {
  if (video_names.size() != scores.size())
    throw ContractError("metrics_flat_table: one name per video required");
  std::ostringstream os;
  os << "video\tphase\tprecision\trecall\tjaccard\taccuracy\n";
  for (std::size_t v = 0; v < scores.size(); ++v) {
    for (std::size_t p = 0; p < scores[v].phases.size(); ++p) {
      const PhaseScore& ps = scores[v].phases[p];
      if (!ps.in_gt && !ps.in_pred) continue;
      os << video_names[v] << '\t' << p << '\t' << fmt(ps.precision) << '\t'
         << fmt(ps.recall) << '\t' << fmt(ps.jaccard) << '\t' << fmt(scores[v].accuracy)
         << '\n';
    }
  }
  return os.str();
}

}  // namespace tmr
