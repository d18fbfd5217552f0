#include "rrl/probe/metrics.hpp"

#include <cmath>
#include <cstdio>

#include "rrl/error.hpp"
#include "rrl/io/csv.hpp"

namespace rrl {

int binarize_intensity(int intensity) {
  require(intensity >= 0 && intensity <= 5, "binarize_intensity: intensity must lie in [0, 5]");
  return intensity > 1 ? 1 : 0;
}

double f1_score(long long tp, long long fp, long long fn) {
  require(tp >= 0 && fp >= 0 && fn >= 0, "f1_score: counts must be non-negative");
  if (tp == 0) return fp == 0 && fn == 0 ? 1.0 : 0.0;
  const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
  const double recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
  return 2.0 * precision * recall / (precision + recall);
}

double round_to_tenth(double value) { return std::round(value * 10.0) / 10.0; }

double EvalReport::f1_percent(int k) const { return round_to_tenth(100.0 * per_au.at(static_cast<std::size_t>(k)).f1); }

double EvalReport::average_percent() const { return round_to_tenth(100.0 * average); }

EvalReport report_from_counts(const std::vector<AuScore>& counts) {
  require(!counts.empty(), "evaluation needs at least one AU");
  EvalReport report;
  double total = 0.0;
  for (AuScore s : counts) {
    s.f1 = f1_score(s.tp, s.fp, s.fn);
    total += s.f1;
    report.per_au.push_back(s);
  }
  report.average = total / static_cast<double>(counts.size());
  return report;
}

EvalReport score_predictions(const LabelMatrix& predicted, const LabelMatrix& labels) {
  require(labels.rows() > 0, "evaluate: dataset is empty");
  require(predicted.rows() == labels.rows() && predicted.cols() == labels.cols(),
          "evaluate: predictions and labels differ in shape");
  std::vector<AuScore> counts(static_cast<std::size_t>(labels.cols()));
  for (Eigen::Index k = 0; k < labels.cols(); ++k) {
    AuScore& s = counts[static_cast<std::size_t>(k)];
    for (Eigen::Index i = 0; i < labels.rows(); ++i) {
      const bool p = predicted(i, k) != 0, y = labels(i, k) != 0;
      s.tp += p && y;
      s.fp += p && !y;
      s.fn += !p && y;
      s.tn += !p && !y;
    }
  }
  return report_from_counts(counts);
}

std::string eval_report_csv(const EvalReport& report) {
  std::string out = "au,tp,fp,fn,f1\n";
  char buf[32];
  for (int k = 0; k < report.K(); ++k) {
    const AuScore& s = report.per_au[static_cast<std::size_t>(k)];
    std::snprintf(buf, sizeof buf, "%.1f", report.f1_percent(k));
    out += "au_" + std::to_string(k) + "," + std::to_string(s.tp) + "," + std::to_string(s.fp) + "," +
           std::to_string(s.fn) + "," + buf + "\n";
  }
  std::snprintf(buf, sizeof buf, "%.1f", report.average_percent());
  out += std::string("average,") + buf + "\n";
  return out;
}

void write_eval_report(const std::filesystem::path& path, const EvalReport& report) {
  io::write_file_atomic(path, eval_report_csv(report));
}

}  // namespace rrl
