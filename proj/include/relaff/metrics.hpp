#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace relaff {

// Row-major N×C matrix of plain numbers (video-level predictions or labels).
struct Table {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Table() = default;
  Table(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}
  double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
  std::vector<double> column(std::size_t j) const;
  void append_row(std::span<const double> values);
};

// An undefined correlation (constant column) is std::nullopt.
struct LabelMetrics {
  std::string label;
  double mae = 0.0;
  double rmse = 0.0;
  std::optional<double> pcc;
  std::optional<double> ccc;
};

struct MetricsReport {
  std::size_t n = 0;
  std::vector<LabelMetrics> per_label;
  LabelMetrics aggregate;  // mean over labels; a correlation is undefined if any label's is
};

double mean_absolute_error(std::span<const double> prediction, std::span<const double> truth);
double root_mean_squared_error(std::span<const double> prediction, std::span<const double> truth);
// Sample Pearson correlation.
std::optional<double> pearson(std::span<const double> a, std::span<const double> b);
// Concordance correlation with population moments.
std::optional<double> concordance(std::span<const double> prediction, std::span<const double> truth);

// Throws ContractError when N < 2 or the shapes differ. Empty `labels`
// names the columns "label0", "label1", ...
MetricsReport metrics_report(const Table& prediction, const Table& truth, std::vector<std::string> labels = {});

// "key = value" lines, e.g. "valence.CCC = 0.5". Undefined values print "nan".
std::string format_metrics_text(const MetricsReport& report);
// Header "label,MAE,RMSE,PCC,CCC", one row per label, then the "mean" row.
std::string format_metrics_csv(const MetricsReport& report);

void write_text_file(const std::filesystem::path& path, const std::string& content);

}  // namespace relaff
