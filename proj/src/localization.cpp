#include "guef/localization.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <set>

#include "guef/error.hpp"

namespace guef {

double tiou(const Segment& a, const Segment& b) {
  if (a.start >= a.end || b.start >= b.end) {
    throw ValidationError("tiou: empty segment [" + std::to_string(a.start) + "," + std::to_string(a.end) + ") or [" +
                          std::to_string(b.start) + "," + std::to_string(b.end) + ")");
  }
  const std::size_t lo = std::max(a.start, b.start);
  const std::size_t hi = std::min(a.end, b.end);
  const double inter = hi > lo ? static_cast<double>(hi - lo) : 0.0;
  const double uni = static_cast<double>(a.length() + b.length()) - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

std::vector<std::size_t> predicted_classes(std::span<const double> video_probs, std::size_t classes, double gate) {
  std::vector<std::size_t> out;
  for (std::size_t c = 0; c < classes && c < video_probs.size(); ++c)
    if (video_probs[c] > gate) out.push_back(c);
  return out;
}

double outer_inner_contrast(std::span<const double> scores, const Segment& seg, double flank_ratio) {
  const std::size_t w = scores.size();
  const auto flank = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::lround(flank_ratio * static_cast<double>(seg.length()))));
  double inner = 0.0;
  for (std::size_t t = seg.start; t < seg.end; ++t) inner += scores[t];
  inner /= static_cast<double>(seg.length());
  const std::size_t left = seg.start >= flank ? seg.start - flank : 0;
  const std::size_t right = std::min(w, seg.end + flank);
  double outer = 0.0;
  std::size_t n = 0;
  for (std::size_t t = left; t < seg.start; ++t, ++n) outer += scores[t];
  for (std::size_t t = seg.end; t < right; ++t, ++n) outer += scores[t];
  return inner - (n ? outer / static_cast<double>(n) : 0.0);
}

std::vector<Proposal> generate_proposals(const std::string& video, std::span<const double> attention, const Tensor& cas,
                                         std::span<const double> video_probs, const ProposalConfig& config) {
  const std::size_t w = attention.size();
  if (w == 0) throw ValidationError("generate_proposals: empty attention sequence");
  if (cas.rank() != 2 || cas.rows() != w || cas.cols() < 2) {
    throw ValidationError("generate_proposals: CAS shape " + shape_string(cas.shape()) + " does not fit W=" +
                          std::to_string(w));
  }
  for (double th : config.thresholds)
    if (!(th > 0.0 && th < 1.0)) throw ValidationError("generate_proposals: thresholds must lie in (0,1)");
  const std::size_t classes = cas.cols() - 1;

  // Per-snippet class probabilities over the action columns only.
  Tensor action_probs({w, classes});
  for (std::size_t t = 0; t < w; ++t) {
    double mx = cas.at(t, 0);
    for (std::size_t c = 1; c < classes; ++c) mx = std::max(mx, cas.at(t, c));
    double z = 0.0;
    for (std::size_t c = 0; c < classes; ++c) z += action_probs.at(t, c) = std::exp(cas.at(t, c) - mx);
    for (std::size_t c = 0; c < classes; ++c) action_probs.at(t, c) /= z;
  }

  std::vector<Proposal> out;
  std::vector<double> scores(w);
  for (std::size_t c : predicted_classes(video_probs, classes, config.class_gate)) {
    for (std::size_t t = 0; t < w; ++t) scores[t] = attention[t] * action_probs.at(t, c);
    for (double th : config.thresholds) {
      std::size_t t = 0;
      while (t < w) {
        if (scores[t] < th) {
          ++t;
          continue;
        }
        std::size_t end = t;
        while (end < w && scores[end] >= th) ++end;
        const Segment seg{t, end};
        out.push_back({video, seg, c, outer_inner_contrast(scores, seg, config.flank_ratio) + video_probs[c]});
        t = end;
      }
    }
  }
  return out;
}

std::vector<Proposal> nms(std::vector<Proposal> proposals, double iou_threshold) {
  std::stable_sort(proposals.begin(), proposals.end(),
                   [](const Proposal& a, const Proposal& b) { return a.score > b.score; });
  std::vector<Proposal> kept;
  std::vector<bool> dropped(proposals.size(), false);
  for (std::size_t i = 0; i < proposals.size(); ++i) {
    if (dropped[i]) continue;
    kept.push_back(proposals[i]);
    for (std::size_t j = i + 1; j < proposals.size(); ++j) {
      if (dropped[j] || proposals[j].label != proposals[i].label || proposals[j].video != proposals[i].video) continue;
      if (tiou(proposals[i].segment, proposals[j].segment) >= iou_threshold) dropped[j] = true;
    }
  }
  return kept;
}

double average_precision(std::span<const Proposal> proposals, std::span<const GroundTruth> ground_truth,
                         std::size_t label, double iou_threshold) {
  std::map<std::string, std::vector<Segment>> gt_by_video;
  std::size_t n_gt = 0;
  for (const auto& g : ground_truth) {
    if (g.label != label) continue;
    gt_by_video[g.video].push_back(g.segment);
    ++n_gt;
  }
  if (n_gt == 0) return -1.0;

  std::vector<const Proposal*> ranked;
  for (const auto& p : proposals)
    if (p.label == label) ranked.push_back(&p);
  std::stable_sort(ranked.begin(), ranked.end(), [](const Proposal* a, const Proposal* b) { return a->score > b->score; });

  std::map<std::string, std::vector<bool>> used;
  for (const auto& [video, segs] : gt_by_video) used[video].assign(segs.size(), false);

  std::vector<double> precision, recall;
  std::size_t tp = 0;
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    const Proposal& p = *ranked[i];
    auto it = gt_by_video.find(p.video);
    if (it != gt_by_video.end()) {
      // Highest-overlap unmatched instance; ties resolve to the earliest one.
      std::size_t best = it->second.size();
      double best_iou = -1.0;
      for (std::size_t g = 0; g < it->second.size(); ++g) {
        if (used[p.video][g]) continue;
        const double o = tiou(p.segment, it->second[g]);
        if (o >= iou_threshold && o > best_iou) {
          best_iou = o;
          best = g;
        }
      }
      if (best < it->second.size()) {
        used[p.video][best] = true;
        ++tp;
      }
    }
    precision.push_back(static_cast<double>(tp) / static_cast<double>(i + 1));
    recall.push_back(static_cast<double>(tp) / static_cast<double>(n_gt));
  }

  // All-point interpolation: monotone precision envelope integrated over recall steps.
  for (std::size_t i = precision.size(); i-- > 1;) precision[i - 1] = std::max(precision[i - 1], precision[i]);
  double ap = 0.0, prev_recall = 0.0;
  for (std::size_t i = 0; i < precision.size(); ++i) {
    ap += (recall[i] - prev_recall) * precision[i];
    prev_recall = recall[i];
  }
  return ap;
}

double mean_average_precision(std::span<const Proposal> proposals, std::span<const GroundTruth> ground_truth,
                              double iou_threshold) {
  std::set<std::size_t> labels;
  for (const auto& g : ground_truth) labels.insert(g.label);
  if (labels.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t c : labels) total += average_precision(proposals, ground_truth, c, iou_threshold);
  return total / static_cast<double>(labels.size());
}

MetricReport evaluate(std::span<const Proposal> proposals, std::span<const GroundTruth> ground_truth) {
  MetricReport r;
  for (std::size_t i = 0; i < kReportThresholds.size(); ++i)
    r.map[i] = mean_average_precision(proposals, ground_truth, kReportThresholds[i]);
  r.avg_01_05 = std::accumulate(r.map.begin(), r.map.begin() + 5, 0.0) / 5.0;
  r.avg_03_07 = std::accumulate(r.map.begin() + 2, r.map.end(), 0.0) / 5.0;
  r.avg_01_07 = std::accumulate(r.map.begin(), r.map.end(), 0.0) / 7.0;
  return r;
}

std::string format_report(const MetricReport& report) {
  std::string out = "mAP@t-IoU(%)   0.1    0.2    0.3    0.4    0.5    0.6    0.7  AVG(0.1-0.5)  AVG(0.3-0.7)  AVG(0.1-0.7)\n";
  char buf[64];
  out += "              ";
  for (double v : report.map) {
    std::snprintf(buf, sizeof buf, "%5.1f  ", 100.0 * v);
    out += buf;
  }
  std::snprintf(buf, sizeof buf, "%12.1f  %12.1f  %12.1f\n", 100.0 * report.avg_01_05, 100.0 * report.avg_03_07,
                100.0 * report.avg_01_07);
  out += buf;
  return out;
}

}  // namespace guef
