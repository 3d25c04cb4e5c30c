#include "relaff/metrics.hpp"

#include <cmath>
#include <fstream>

#include <fmt/format.h>

#include "relaff/error.hpp"

namespace relaff {

std::vector<double> Table::column(std::size_t j) const {
  std::vector<double> out(rows);
  for (std::size_t i = 0; i < rows; ++i) out[i] = (*this)(i, j);
  return out;
}

void Table::append_row(std::span<const double> values) {
  if (rows == 0 && cols == 0) cols = values.size();
  if (values.size() != cols) {
    throw DimensionError(fmt::format("Table: row of {} values, table has {} columns", values.size(), cols));
  }
  data.insert(data.end(), values.begin(), values.end());
  ++rows;
}

namespace {

void require_pair(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError(fmt::format("metric: length mismatch {} vs {}", a.size(), b.size()));
  if (a.empty()) throw ContractError("metric: empty input");
}

double mean_of(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

std::string fmt_number(double v) { return fmt::format("{:.17g}", v); }
std::string fmt_optional(const std::optional<double>& v) { return v ? fmt_number(*v) : std::string("nan"); }

}  // namespace

double mean_absolute_error(std::span<const double> p, std::span<const double> t) {
  require_pair(p, t);
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += std::abs(p[i] - t[i]);
  return s / static_cast<double>(p.size());
}

double root_mean_squared_error(std::span<const double> p, std::span<const double> t) {
  require_pair(p, t);
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += (p[i] - t[i]) * (p[i] - t[i]);
  return std::sqrt(s / static_cast<double>(p.size()));
}

std::optional<double> pearson(std::span<const double> a, std::span<const double> b) {
  require_pair(a, b);
  const double ma = mean_of(a), mb = mean_of(b);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (!(saa > 0.0) || !(sbb > 0.0)) return std::nullopt;
  return sab / std::sqrt(saa * sbb);
}

std::optional<double> concordance(std::span<const double> p, std::span<const double> t) {
  require_pair(p, t);
  const double n = static_cast<double>(p.size());
  const double mp = mean_of(p), mt = mean_of(t);
  double cov = 0.0, vp = 0.0, vt = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    cov += (p[i] - mp) * (t[i] - mt);
    vp += (p[i] - mp) * (p[i] - mp);
    vt += (t[i] - mt) * (t[i] - mt);
  }
  cov /= n;
  vp /= n;
  vt /= n;
  const double denom = vp + vt + (mp - mt) * (mp - mt);
  if (!(denom > 0.0)) return std::nullopt;
  return 2.0 * cov / denom;
}

MetricsReport metrics_report(const Table& prediction, const Table& truth, std::vector<std::string> labels) {
  if (prediction.rows != truth.rows || prediction.cols != truth.cols) {
    throw ContractError(fmt::format("metrics_report: prediction is {}x{}, truth is {}x{}", prediction.rows,
                                    prediction.cols, truth.rows, truth.cols));
  }
  if (prediction.rows < 2) throw ContractError("metrics_report: needs at least two samples");
  const std::size_t C = prediction.cols;
  if (labels.empty()) {
    for (std::size_t c = 0; c < C; ++c) labels.push_back(fmt::format("label{}", c));
  }
  if (labels.size() != C) throw ContractError("metrics_report: label name count differs from column count");

  MetricsReport r;
  r.n = prediction.rows;
  r.aggregate.label = "mean";
  double pcc_sum = 0.0, ccc_sum = 0.0;
  bool pcc_ok = true, ccc_ok = true;
  for (std::size_t c = 0; c < C; ++c) {
    const auto p = prediction.column(c);
    const auto t = truth.column(c);
    LabelMetrics m;
    m.label = labels[c];
    m.mae = mean_absolute_error(p, t);
    m.rmse = root_mean_squared_error(p, t);
    m.pcc = pearson(p, t);
    m.ccc = concordance(p, t);
    r.aggregate.mae += m.mae / static_cast<double>(C);
    r.aggregate.rmse += m.rmse / static_cast<double>(C);
    if (m.pcc) pcc_sum += *m.pcc; else pcc_ok = false;
    if (m.ccc) ccc_sum += *m.ccc; else ccc_ok = false;
    r.per_label.push_back(std::move(m));
  }
  if (pcc_ok) r.aggregate.pcc = pcc_sum / static_cast<double>(C);
  if (ccc_ok) r.aggregate.ccc = ccc_sum / static_cast<double>(C);
  return r;
}

std::string format_metrics_text(const MetricsReport& report) {
  std::string out = fmt::format("n = {}\n", report.n);
  auto emit = [&](const LabelMetrics& m) {
    out += fmt::format("{}.MAE = {}\n", m.label, fmt_number(m.mae));
    out += fmt::format("{}.RMSE = {}\n", m.label, fmt_number(m.rmse));
    out += fmt::format("{}.PCC = {}\n", m.label, fmt_optional(m.pcc));
    out += fmt::format("{}.CCC = {}\n", m.label, fmt_optional(m.ccc));
  };
  for (const auto& m : report.per_label) emit(m);
  emit(report.aggregate);
  return out;
}

std::string format_metrics_csv(const MetricsReport& report) {
  std::string out = "label,MAE,RMSE,PCC,CCC\n";
  auto emit = [&](const LabelMetrics& m) {
    out += fmt::format("{},{},{},{},{}\n", m.label, fmt_number(m.mae), fmt_number(m.rmse), fmt_optional(m.pcc),
                       fmt_optional(m.ccc));
  };
  for (const auto& m : report.per_label) emit(m);
  emit(report.aggregate);
  return out;
}

void write_text_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError(fmt::format("cannot open {} for writing", path.string()));
  f << content;
  if (!f) throw IoError(fmt::format("failed writing {}", path.string()));
}

}  // namespace relaff
