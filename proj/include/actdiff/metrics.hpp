#pragma once

#include <cstddef>
#include <functional>
#include <set>
#include <string>
#include <vector>

// Segment extraction and the benchmark metrics: frame accuracy, segmental
// edit score, F1@k, and mean-over-classes accuracy with both LTA evaluation
// protocols (ground-truth prediction length vs. r * N_obs).

namespace actdiff {

struct Segment {
  int cls = 0;
  std::size_t start = 0;  // inclusive
  std::size_t end = 0;    // exclusive
};

std::vector<Segment> extract_segments(const std::vector<int>& labels);

double frame_accuracy(const std::vector<int>& pred, const std::vector<int>& gt);

// 100 * (1 - Levenshtein(segment classes) / max length), background segments
// dropped first. Both sides empty scores 100; exactly one empty scores 0.
double edit_score(const std::vector<int>& pred, const std::vector<int>& gt,
                  const std::set<int>& background = {});

struct F1Counts {
  std::size_t tp = 0, fp = 0, fn = 0;
  double f1() const;  // percent; 100 when all counts are zero
  F1Counts& operator+=(const F1Counts& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    return *this;
  }
};

// Greedy temporal-order matching: a predicted segment is a TP when its
// best-IoU same-class ground-truth segment clears overlap_percent/100 and is
// still unmatched. Ties on IoU resolve to the earlier ground-truth segment.
F1Counts f1_counts(const std::vector<int>& pred, const std::vector<int>& gt, double overlap_percent,
                   const std::set<int>& background = {});

double f1_at_k(const std::vector<int>& pred, const std::vector<int>& gt, double overlap_percent,
               const std::set<int>& background = {});

// Mean per-class frame accuracy over the window [n_obs, n_obs + eval_len).
// Predictions shorter than the window repeat their last label.
double moc(const std::vector<int>& pred, const std::vector<int>& gt, std::size_t n_obs,
           std::size_t eval_len);

struct EvalProtocol {
  std::vector<double> alphas = {0.2, 0.3};
  std::vector<double> betas = {0.1, 0.2, 0.3, 0.5};
  double r = 4.0;
  bool use_gt_length = true;
  std::set<int> background;
};

struct LtaCell {
  double alpha = 0, beta = 0;
  double moc_mean = 0;
  std::size_t n_videos = 0;
  std::size_t n_skipped = 0;
};

// Prediction callback for one video: receives the index, the number of
// observed frames, and the requested future length. Ground truth stays on
// this side of the interface, so the predictor can only see the prefix.
using LtaPredictFn =
    std::function<std::vector<int>(std::size_t video, std::size_t n_obs, std::size_t n_future)>;

std::vector<LtaCell> eval_lta_grid(const std::vector<std::vector<int>>& gt_all,
                                   const LtaPredictFn& predict, const EvalProtocol& proto);

struct MetricsReport {
  bool has_tas = false;
  double accuracy = 0, edit = 0, f1_10 = 0, f1_25 = 0, f1_50 = 0;
  std::vector<LtaCell> lta_cells;
};

MetricsReport eval_tas(const std::vector<std::vector<int>>& preds,
                       const std::vector<std::vector<int>>& gts, const std::set<int>& background = {});

// One row per metric cell: split, alpha, beta, metric, value. TAS rows leave
// alpha/beta empty.
std::string report_to_csv(const std::string& split, const MetricsReport& r);
std::string report_to_json(const std::string& split, const MetricsReport& r);

}  // namespace actdiff
