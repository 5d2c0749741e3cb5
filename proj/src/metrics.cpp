#include "mncd/metrics.hpp"

#include <json.hpp>

namespace mncd {

namespace {

void require_same_size(const BinaryMap& a, const BinaryMap& b) {
  if (a.height != b.height || a.width != b.width) {
    throw ShapeError("binary maps differ in size: " + std::to_string(a.height) + "x" +
                     std::to_string(a.width) + " vs " + std::to_string(b.height) + "x" +
                     std::to_string(b.width));
  }
}

double ratio_or_policy(std::uint64_t num, std::uint64_t den, bool no_positives) {
  if (den == 0) return no_positives ? 1.0 : 0.0;
  return static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

BinaryMap BinaryMap::from_tensor(const Tensor& t) {
  const auto& s = t.shape();
  const auto n = s.size();
  if (n < 2) throw ShapeError("binary map needs at least 2 dims, got " + shape_str(s));
  for (std::size_t i = 0; i + 2 < n; ++i) {
    if (s[i] != 1) throw ShapeError("binary map leading dims must be 1, got " + shape_str(s));
  }
  BinaryMap m{s[n - 2], s[n - 1], {}};
  m.values.resize(static_cast<std::size_t>(t.numel()));
  for (std::int64_t i = 0; i < t.numel(); ++i) {
    const double v = t.at(i);
    if (v != 0.0 && v != 1.0) throw ArgumentError("binary map contains non-binary value");
    m.values[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(v);
  }
  return m;
}

ConfusionCounts& ConfusionCounts::operator+=(const ConfusionCounts& o) {
  tp += o.tp;
  tn += o.tn;
  fp += o.fp;
  fn += o.fn;
  return *this;
}

ConfusionCounts confusion_counts(const BinaryMap& pred, const BinaryMap& gt) {
  require_same_size(pred, gt);
  ConfusionCounts c;
  for (std::size_t i = 0; i < pred.values.size(); ++i) {
    const bool p = pred.values[i] != 0;
    const bool g = gt.values[i] != 0;
    if (p && g) {
      ++c.tp;
    } else if (!p && !g) {
      ++c.tn;
    } else if (p) {
      ++c.fp;
    } else {
      ++c.fn;
    }
  }
  return c;
}

MetricReport compute_metrics(const ConfusionCounts& c) {
  if (c.total() == 0) throw ArgumentError("compute_metrics: no evaluated pixels");
  const bool no_positives = c.tp + c.fp + c.fn == 0;
  MetricReport r;
  r.oa = static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total());
  r.pre = ratio_or_policy(c.tp, c.tp + c.fp, no_positives);
  r.rec = ratio_or_policy(c.tp, c.tp + c.fn, no_positives);
  r.f1 = ratio_or_policy(2 * c.tp, 2 * c.tp + c.fp + c.fn, no_positives);
  r.ciou = ratio_or_policy(c.tp, c.tp + c.fp + c.fn, no_positives);
  return r;
}

std::string MetricReport::to_json() const {
  nlohmann::ordered_json j;
  j["oa"] = oa;
  j["pre"] = pre;
  j["rec"] = rec;
  j["f1"] = f1;
  j["ciou"] = ciou;
  return j.dump(2);
}

MetricReport MetricReport::from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  return {j.at("oa").get<double>(), j.at("pre").get<double>(), j.at("rec").get<double>(),
          j.at("f1").get<double>(), j.at("ciou").get<double>()};
}

RgbImage render_change_map(const BinaryMap& pred, const BinaryMap& gt) {
  require_same_size(pred, gt);
  RgbImage img{pred.height, pred.width, {}};
  img.pixels.reserve(pred.values.size() * 3);
  for (std::size_t i = 0; i < pred.values.size(); ++i) {
    const bool p = pred.values[i] != 0;
    const bool g = gt.values[i] != 0;
    std::uint8_t r = 255, gr = 255, b = 255;
    if (p && g) {
      r = 0, b = 0;
    } else if (p) {
      gr = 0, b = 0;
    } else if (g) {
      r = 0, gr = 0;
    }
    img.pixels.insert(img.pixels.end(), {r, gr, b});
  }
  return img;
}

}  // namespace mncd
