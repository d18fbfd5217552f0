#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "rrl/relation/relation.hpp"

namespace rrl {

// Intensity 0..5 to a binary label: positive iff intensity > 1.
int binarize_intensity(int intensity);

/// 2PR / (P + R). Zero when tp = 0 but something was predicted or missed;
/// one when tp = fp = fn = 0 (nothing to find, nothing claimed).
double f1_score(long long tp, long long fp, long long fn);

struct AuScore {
  long long tp = 0, fp = 0, fn = 0, tn = 0;
  double f1 = 0.0;  // fraction in [0, 1]
};

struct EvalReport {
  std::vector<AuScore> per_au;
  double average = 0.0;  // mean of per-AU f1, fraction

  int K() const { return static_cast<int>(per_au.size()); }
  // Percent values rounded to one decimal, as reported.
  double f1_percent(int k) const;
  double average_percent() const;
};

EvalReport report_from_counts(const std::vector<AuScore>& counts);
// Predictions and labels are N x K binary matrices.
EvalReport score_predictions(const LabelMatrix& predicted, const LabelMatrix& labels);

double round_to_tenth(double value);

// Columns au, tp, fp, fn, f1 (percent, one decimal), then "average,<value>".
std::string eval_report_csv(const EvalReport& report);
void write_eval_report(const std::filesystem::path& path, const EvalReport& report);

}  // namespace rrl
