#pragma once

#include <string>
#include <vector>

namespace relaff {

// A labeling scale: the range annotations arrive in (native) and the range
// the network regresses in (training). Built-in ids:
//   affect        [-1, 1]  -> [-1, 1]
//   unit_affect   [ 0, 1]  -> [-1, 1]   (arousal annotated on [0, 1])
//   panss         [ 1, 7]  -> [ 1, 7]
//   cains         [ 0, 4]  -> [ 0, 4]
//   panss_total   [ 7,49]  -> [ 1, 7]   (sum of 7 PANSS items)
//   cains_total   [ 0,16]  -> [ 0, 4]   (sum of 4 CAINS items)
struct LabelScale {
  std::string id;
  double native_lo = -1.0;
  double native_hi = 1.0;
  double train_lo = -1.0;
  double train_hi = 1.0;

  bool operator==(const LabelScale&) const = default;
};

// Throws RangeError for an unknown id.
LabelScale label_scale(const std::string& id);
// Scale of a sum of `count` items of `item`, regressed in the item's range.
LabelScale total_scale(const LabelScale& item, std::size_t count);

struct LabelVector {
  std::vector<double> values;
  LabelScale scale;
};

enum class ScaleDirection { to_train_range, to_native_range };

// Affine map between native and training ranges. Inputs outside the source
// range (beyond 1e-9 slack) raise RangeError.
LabelVector scale_labels(const LabelVector& y, ScaleDirection direction);
double scale_label_value(double v, const LabelScale& scale, ScaleDirection direction);

// Lower end of the range labels are shifted into before they enter a cosine
// similarity, when their training range reaches zero or below.
inline constexpr double kSimilarityFloor = 0.05;

// Maps training-range values into a strictly positive range so that no label
// vector can be all zeros: ranges with lo <= 0 are mapped affinely onto
// [0.05, 1]; positive ranges pass through.
std::vector<double> similarity_labels(const std::vector<double>& train_values,
                                      const LabelScale& scale);

}  // namespace relaff
