#include "actdiff/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace actdiff {

std::vector<Segment> extract_segments(const std::vector<int>& labels) {
  std::vector<Segment> segs;
  if (labels.empty()) return segs;
  std::size_t start = 0;
  for (std::size_t i = 1; i <= labels.size(); ++i) {
    if (i == labels.size() || labels[i] != labels[start]) {
      segs.push_back({labels[start], start, i});
      start = i;
    }
  }
  return segs;
}

double frame_accuracy(const std::vector<int>& pred, const std::vector<int>& gt) {
  if (pred.size() != gt.size()) throw std::invalid_argument("frame_accuracy: length mismatch");
  if (gt.empty()) throw std::invalid_argument("frame_accuracy: empty input");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < gt.size(); ++i)
    if (pred[i] == gt[i]) ++hits;
  return 100.0 * static_cast<double>(hits) / static_cast<double>(gt.size());
}

namespace {

std::vector<int> segment_classes(const std::vector<int>& labels, const std::set<int>& background) {
  std::vector<int> out;
  for (const Segment& s : extract_segments(labels))
    if (!background.count(s.cls)) out.push_back(s.cls);
  return out;
}

std::size_t levenshtein(const std::vector<int>& a, const std::vector<int>& b) {
  const std::size_t n = a.size(), m = b.size();
  std::vector<std::size_t> prev(m + 1), cur(m + 1);
  for (std::size_t j = 0; j <= m; ++j) prev[j] = j;
  for (std::size_t i = 1; i <= n; ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= m; ++j) {
      const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[m];
}

double iou(const Segment& a, const Segment& b) {
  const std::size_t lo = std::max(a.start, b.start);
  const std::size_t hi = std::min(a.end, b.end);
  const std::size_t inter = hi > lo ? hi - lo : 0;
  const std::size_t uni = (a.end - a.start) + (b.end - b.start) - inter;
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

}  // namespace

double edit_score(const std::vector<int>& pred, const std::vector<int>& gt,
                  const std::set<int>& background) {
  const std::vector<int> a = segment_classes(pred, background);
  const std::vector<int> b = segment_classes(gt, background);
  if (a.empty() && b.empty()) return 100.0;
  if (a.empty() || b.empty()) return 0.0;
  const std::size_t d = levenshtein(a, b);
  const std::size_t norm = std::max(a.size(), b.size());
  return 100.0 * (1.0 - static_cast<double>(d) / static_cast<double>(norm));
}

double F1Counts::f1() const {
  const std::size_t denom = 2 * tp + fp + fn;
  if (denom == 0) return 100.0;
  return 100.0 * 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
}

F1Counts f1_counts(const std::vector<int>& pred, const std::vector<int>& gt, double overlap_percent,
                   const std::set<int>& background) {
  if (overlap_percent <= 0.0 || overlap_percent > 100.0)
    throw std::invalid_argument("f1_counts: overlap threshold must be in (0, 100]");
  std::vector<Segment> ps, gs;
  for (const Segment& s : extract_segments(pred))
    if (!background.count(s.cls)) ps.push_back(s);
  for (const Segment& s : extract_segments(gt))
    if (!background.count(s.cls)) gs.push_back(s);

  const double thr = overlap_percent / 100.0;
  std::vector<bool> matched(gs.size(), false);
  F1Counts c;
  for (const Segment& p : ps) {
    double best = -1.0;
    std::size_t best_j = gs.size();
    for (std::size_t j = 0; j < gs.size(); ++j) {
      if (gs[j].cls != p.cls) continue;
      const double v = iou(p, gs[j]);
      if (v > best) {
        best = v;
        best_j = j;
      }
    }
    if (best_j < gs.size() && best >= thr && !matched[best_j]) {
      matched[best_j] = true;
      ++c.tp;
    } else {
      ++c.fp;
    }
  }
  c.fn = gs.size() - c.tp;
  return c;
}

double f1_at_k(const std::vector<int>& pred, const std::vector<int>& gt, double overlap_percent,
               const std::set<int>& background) {
  return f1_counts(pred, gt, overlap_percent, background).f1();
}

double moc(const std::vector<int>& pred, const std::vector<int>& gt, std::size_t n_obs,
           std::size_t eval_len) {
  if (eval_len == 0) throw std::invalid_argument("moc: empty evaluation window");
  if (gt.size() < n_obs + eval_len) throw std::invalid_argument("moc: window exceeds video length");
  if (pred.empty()) throw std::invalid_argument("moc: empty prediction");

  // class id -> [correct, total] over the window
  std::vector<int> classes;
  std::vector<std::size_t> correct, total;
  for (std::size_t t = n_obs; t < n_obs + eval_len; ++t) {
    const int g = gt[t];
    const int pl = t < pred.size() ? pred[t] : pred.back();
    std::size_t ci = 0;
    for (; ci < classes.size(); ++ci)
      if (classes[ci] == g) break;
    if (ci == classes.size()) {
      classes.push_back(g);
      correct.push_back(0);
      total.push_back(0);
    }
    ++total[ci];
    if (pl == g) ++correct[ci];
  }
  double acc = 0.0;
  for (std::size_t ci = 0; ci < classes.size(); ++ci)
    acc += static_cast<double>(correct[ci]) / static_cast<double>(total[ci]);
  return 100.0 * acc / static_cast<double>(classes.size());
}

std::vector<LtaCell> eval_lta_grid(const std::vector<std::vector<int>>& gt_all,
                                   const LtaPredictFn& predict, const EvalProtocol& proto) {
  if (proto.alphas.empty() || proto.betas.empty())
    throw std::invalid_argument("eval_lta_grid: empty protocol grids");
  if (proto.r <= 0.0) throw std::invalid_argument("eval_lta_grid: r must be positive");
  std::vector<LtaCell> cells;
  for (double alpha : proto.alphas) {
    for (double beta : proto.betas) {
      LtaCell cell;
      cell.alpha = alpha;
      cell.beta = beta;
      double acc = 0.0;
      for (std::size_t vi = 0; vi < gt_all.size(); ++vi) {
        const auto& gt = gt_all[vi];
        const auto tlen = gt.size();
        const auto n_obs = static_cast<std::size_t>(std::ceil(alpha * static_cast<double>(tlen)));
        const auto eval_len = static_cast<std::size_t>(std::ceil(beta * static_cast<double>(tlen)));
        if (n_obs == 0 || eval_len == 0 || n_obs + eval_len > tlen) {
          ++cell.n_skipped;
          continue;
        }
        // The model horizon depends on the protocol; the evaluation window
        // is always the ground-truth one.
        const std::size_t n_future =
            proto.use_gt_length
                ? eval_len
                : static_cast<std::size_t>(std::llround(proto.r * static_cast<double>(n_obs)));
        const std::vector<int> pred = predict(vi, n_obs, n_future);
        acc += moc(pred, gt, n_obs, eval_len);
        ++cell.n_videos;
      }
      cell.moc_mean = cell.n_videos ? acc / static_cast<double>(cell.n_videos) : 0.0;
      cells.push_back(cell);
    }
  }
  return cells;
}

MetricsReport eval_tas(const std::vector<std::vector<int>>& preds,
                       const std::vector<std::vector<int>>& gts, const std::set<int>& background) {
  if (preds.size() != gts.size()) throw std::invalid_argument("eval_tas: video count mismatch");
  if (preds.empty()) throw std::invalid_argument("eval_tas: no videos");
  MetricsReport r;
  r.has_tas = true;
  std::size_t hit = 0, total = 0;
  double edit_sum = 0.0;
  F1Counts c10, c25, c50;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i].size() != gts[i].size()) throw std::invalid_argument("eval_tas: length mismatch");
    for (std::size_t t = 0; t < gts[i].size(); ++t)
      if (preds[i][t] == gts[i][t]) ++hit;
    total += gts[i].size();
    edit_sum += edit_score(preds[i], gts[i], background);
    c10 += f1_counts(preds[i], gts[i], 10.0, background);
    c25 += f1_counts(preds[i], gts[i], 25.0, background);
    c50 += f1_counts(preds[i], gts[i], 50.0, background);
  }
  r.accuracy = 100.0 * static_cast<double>(hit) / static_cast<double>(total);
  r.edit = edit_sum / static_cast<double>(preds.size());
  r.f1_10 = c10.f1();
  r.f1_25 = c25.f1();
  r.f1_50 = c50.f1();
  return r;
}

namespace {

struct Row {
  std::string metric;
  bool has_ab = false;
  double alpha = 0, beta = 0;
  double value = 0;
};

std::vector<Row> report_rows(const MetricsReport& r) {
  std::vector<Row> rows;
  if (r.has_tas) {
    rows.push_back({"accuracy", false, 0, 0, r.accuracy});
    rows.push_back({"edit", false, 0, 0, r.edit});
    rows.push_back({"f1@10", false, 0, 0, r.f1_10});
    rows.push_back({"f1@25", false, 0, 0, r.f1_25});
    rows.push_back({"f1@50", false, 0, 0, r.f1_50});
  }
  for (const LtaCell& c : r.lta_cells) rows.push_back({"moc", true, c.alpha, c.beta, c.moc_mean});
  return rows;
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(6);
  os << std::fixed << v;
  return os.str();
}

}  // namespace

std::string report_to_csv(const std::string& split, const MetricsReport& r) {
  std::ostringstream os;
  os << "split,alpha,beta,metric,value\n";
  for (const Row& row : report_rows(r)) {
    os << split << ",";
    if (row.has_ab)
      os << fmt(row.alpha) << "," << fmt(row.beta) << ",";
    else
      os << ",,";
    os << row.metric << "," << fmt(row.value) << "\n";
  }
  return os.str();
}

std::string report_to_json(const std::string& split, const MetricsReport& r) {
  nlohmann::json rows = nlohmann::json::array();
  for (const Row& row : report_rows(r)) {
    nlohmann::json j;
    j["split"] = split;
    j["alpha"] = row.has_ab ? nlohmann::json(row.alpha) : nlohmann::json(nullptr);
    j["beta"] = row.has_ab ? nlohmann::json(row.beta) : nlohmann::json(nullptr);
    j["metric"] = row.metric;
    j["value"] = row.value;
    rows.push_back(j);
  }
  return rows.dump(2) + "\n";
}

}  // namespace actdiff
