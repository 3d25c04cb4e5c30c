#include "relaff/labels.hpp"

#include <cmath>

#include <fmt/format.h>

#include "relaff/error.hpp"

namespace relaff {

namespace {
constexpr double kRangeSlack = 1e-9;
}

LabelScale label_scale(const std::string& id) {
  if (id == "affect") return {"affect", -1.0, 1.0, -1.0, 1.0};
  if (id == "unit_affect") return {"unit_affect", 0.0, 1.0, -1.0, 1.0};
  if (id == "panss") return {"panss", 1.0, 7.0, 1.0, 7.0};
  if (id == "cains") return {"cains", 0.0, 4.0, 0.0, 4.0};
  if (id == "panss_total") return total_scale(label_scale("panss"), 7);
  if (id == "cains_total") return total_scale(label_scale("cains"), 4);
  throw RangeError(fmt::format("unknown label scale '{}'", id));
}

LabelScale total_scale(const LabelScale& item, std::size_t count) {
  const double n = static_cast<double>(count);
  return {item.id + "_total", item.native_lo * n, item.native_hi * n, item.train_lo, item.train_hi};
}

double scale_label_value(double v, const LabelScale& s, ScaleDirection direction) {
  const bool to_train = direction == ScaleDirection::to_train_range;
  const double src_lo = to_train ? s.native_lo : s.train_lo;
  const double src_hi = to_train ? s.native_hi : s.train_hi;
  const double dst_lo = to_train ? s.train_lo : s.native_lo;
  const double dst_hi = to_train ? s.train_hi : s.native_hi;
  if (!(v >= src_lo - kRangeSlack && v <= src_hi + kRangeSlack)) {
    throw RangeError(fmt::format("label {} outside [{}, {}] of scale '{}'", v, src_lo, src_hi, s.id));
  }
  return dst_lo + (v - src_lo) * (dst_hi - dst_lo) / (src_hi - src_lo);
}

LabelVector scale_labels(const LabelVector& y, ScaleDirection direction) {
  LabelVector out{{}, y.scale};
  out.values.reserve(y.values.size());
  for (double v : y.values) out.values.push_back(scale_label_value(v, y.scale, direction));
  return out;
}

std::vector<double> similarity_labels(const std::vector<double>& train_values, const LabelScale& s) {
  if (s.train_lo > 0.0) return train_values;
  std::vector<double> out;
  out.reserve(train_values.size());
  for (double v : train_values) {
    out.push_back(kSimilarityFloor + (v - s.train_lo) * (1.0 - kSimilarityFloor) / (s.train_hi - s.train_lo));
  }
  return out;
}

}  // namespace relaff
