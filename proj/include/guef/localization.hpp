#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "guef/tensor.hpp"

namespace guef {

/// Half-open snippet interval [start, end).
struct Segment {
  std::size_t start = 0;
  std::size_t end = 0;

  std::size_t length() const noexcept { return end - start; }
  bool operator==(const Segment&) const = default;
};

struct Proposal {
  std::string video;
  Segment segment;
  std::size_t label = 0;  // 0-based action class
  double score = 0.0;
};

struct GroundTruth {
  std::string video;
  Segment segment;
  std::size_t label = 0;
};

double tiou(const Segment& a, const Segment& b);

struct ProposalConfig {
  std::vector<double> thresholds = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  double class_gate = 0.1;
  double flank_ratio = 0.25;
};

/// Classes whose video-level probability exceeds the gate (background column excluded).
std::vector<std::size_t> predicted_classes(std::span<const double> video_probs, std::size_t classes, double gate);

/// Multi-threshold run detection on A_t * softmax_actions(z_t)_c for every gated class.
/// `video_probs` is the aggregated T+1 probability vector.
std::vector<Proposal> generate_proposals(const std::string& video, std::span<const double> attention, const Tensor& cas,
                                         std::span<const double> video_probs, const ProposalConfig& config = {});

/// Outer-inner contrast of a segment on a score sequence.
double outer_inner_contrast(std::span<const double> scores, const Segment& seg, double flank_ratio);

/// Greedy per-class, per-video hard NMS; output sorted by score descending.
std::vector<Proposal> nms(std::vector<Proposal> proposals, double iou_threshold);

/// Interpolated all-point AP for one class at one tIoU threshold.
/// Returns a negative value when the class has no ground truth.
double average_precision(std::span<const Proposal> proposals, std::span<const GroundTruth> ground_truth,
                         std::size_t label, double iou_threshold);

inline constexpr std::array<double, 7> kReportThresholds = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7};

struct MetricReport {
  std::array<double, 7> map{};  // mAP at tIoU 0.1 .. 0.7
  double avg_01_05 = 0.0;
  double avg_03_07 = 0.0;
  double avg_01_07 = 0.0;
};

/// mAP over classes that have ground truth, at one threshold.
double mean_average_precision(std::span<const Proposal> proposals, std::span<const GroundTruth> ground_truth,
                              double iou_threshold);
MetricReport evaluate(std::span<const Proposal> proposals, std::span<const GroundTruth> ground_truth);
/// Fixed-width table, values in percent.
std::string format_report(const MetricReport& report);

}  // namespace guef
