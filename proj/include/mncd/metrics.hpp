#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mncd/tensor.hpp"

namespace mncd {

// Row-major {0,1} map; 1 marks a changed pixel.
struct BinaryMap {
  std::int64_t height = 0;
  std::int64_t width = 0;
  std::vector<std::uint8_t> values;

  // Accepts [H,W], [1,H,W] or [1,1,H,W]; every value must be exactly 0 or 1.
  static BinaryMap from_tensor(const Tensor& t);
};

struct ConfusionCounts {
  std::uint64_t tp = 0;
  std::uint64_t tn = 0;
  std::uint64_t fp = 0;
  std::uint64_t fn = 0;

  std::uint64_t total() const { return tp + tn + fp + fn; }
  ConfusionCounts& operator+=(const ConfusionCounts& o);
  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

struct MetricReport {
  double oa = 0;
  double pre = 0;
  double rec = 0;
  double f1 = 0;
  double ciou = 0;

  // {"oa":..,"pre":..,"rec":..,"f1":..,"ciou":..}
  std::string to_json() const;
  static MetricReport from_json(const std::string& text);
};

ConfusionCounts confusion_counts(const BinaryMap& pred, const BinaryMap& gt);

// OA=(TP+TN)/all, Pre=TP/(TP+FP), Rec=TP/(TP+FN), F1=2TP/(2TP+FP+FN),
// cIoU=TP/(TP+FP+FN). A zero denominator yields 1.0 when TP+FP+FN == 0 and
// 0.0 otherwise.
MetricReport compute_metrics(const ConfusionCounts& counts);

struct RgbImage {
  std::int64_t height = 0;
  std::int64_t width = 0;
  std::vector<std::uint8_t> pixels;  // interleaved RGB
};

// TP green, TN white, FP red, FN blue.
RgbImage render_change_map(const BinaryMap& pred, const BinaryMap& gt);

}  // namespace mncd
