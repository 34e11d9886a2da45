#pragma once

#include <span>
#include <string>
#include <vector>

namespace tmr {

// Frame-index set metrics for one phase of one video.
struct PhaseScore {
  bool in_gt = false;
  bool in_pred = false;
  double precision = 0.0;
  double recall = 0.0;
  double jaccard = 0.0;
};

struct VideoScore {
  double accuracy = 0.0;
  // Averages over phases present in the ground truth or the prediction.
  double precision = 0.0;
  double recall = 0.0;
  double jaccard = 0.0;
  std::vector<PhaseScore> phases;
};

VideoScore score_video(std::span<const int> gt, std::span<const int> pred,
                       int num_phases);

struct Aggregate {
  std::size_t videos = 0;
  double ac_mean = 0.0, ac_std = 0.0;
  double pr_mean = 0.0, pr_std = 0.0;
  double re_mean = 0.0, re_std = 0.0;
  double ja_mean = 0.0, ja_std = 0.0;
};

// Mean and population standard deviation across videos.
Aggregate aggregate(std::span<const VideoScore> scores);

// Row-major C x C matrix; row = ground-truth phase, column = prediction.
// Normalized rows (per ground-truth phase) sum to one.
std::vector<double> confusion(std::span<const int> gt, std::span<const int> pred,
                              int num_phases, bool normalize);

// Causal smoothing: argmax of the trailing-window mean of per-frame
// probabilities. Window must be odd; window 1 is the raw argmax.
std::vector<int> smooth_moving_average(std::span<const double> probs, std::size_t T,
                                       std::size_t C, std::size_t window);

struct RibbonRow {
  std::string name;
  std::vector<int> labels;
};

// Color-coded phase ribbon, one band per row, one rect per label run.
// Byte-identical output for identical inputs.
std::string ribbon_svg(std::span<const RibbonRow> rows, int num_phases);

std::string metrics_report_json(const std::vector<std::string>& video_names,
                                std::span<const VideoScore> scores,
                                const Aggregate& agg,
                                const std::vector<double>& confusion_normalized,
                                int num_phases, const std::string& run_metadata_json);

std::string metrics_flat_table(const std::vector<std::string>& video_names,
                               std::span<const VideoScore> scores);

}  // namespace tmr
