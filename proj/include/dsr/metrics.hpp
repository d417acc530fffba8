#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "dsr/matching.hpp"

namespace dsr {

struct TrialResult {
  std::string probe_id;
  std::string true_person_id;
  RankedList<double> ranked;
};

struct CmcCurve {
  std::vector<double> values;  // values[r - 1] = fraction matched at rank <= r

  double at(Index rank) const;  // 1-based; saturates past the end
  double rank1() const { return at(1); }
  Index max_rank() const { return static_cast<Index>(values.size()); }
};

/// CMC over the trials, up to `max_rank` (0 means the longest ranking).
/// A trial whose true identity is absent from its ranking never counts.
CmcCurve cmc(const std::vector<TrialResult>& trials, Index max_rank = 0);

struct RocPoint {
  double far = 0;
  double tar = 0;
  double threshold = 0;
};

struct RocCurve {
  std::vector<RocPoint> points;  // from (0,0) to (1,1), thresholds ascending
  double auc = 0;                // trapezoidal, over FAR
};

/// Accept when distance <= threshold, for every distinct score in either list.
RocCurve roc(const std::vector<double>& genuine, const std::vector<double>& impostor);

/// AP of one ranking given per-position relevance flags.
double average_precision(const std::vector<bool>& relevant);
double mean_average_precision(const std::vector<std::vector<bool>>& rankings);
/// One relevant identity per trial; a trial with its identity absent throws.
double mean_average_precision(const std::vector<TrialResult>& trials);

struct MeanStd {
  double mean = 0;
  double std = 0;  // population standard deviation
};

MeanStd mean_std(const std::vector<double>& xs);

/// Per-rank mean and std of curves from repeated splits. Shorter curves are
/// extended with their last value.
std::vector<MeanStd> average_curves(const std::vector<CmcCurve>& curves);

struct TimingSummary {
  double mean_probe_seconds = 0;
  double p95_probe_seconds = 0;
  double total_seconds = 0;
};

struct MetricsSummary {
  double rank1 = 0;
  double rank3 = 0;
  double map = 0;
  double auc = 0;
  TimingSummary timing;
};

void write_cmc_csv(std::ostream& out, const CmcCurve& curve);
void write_cmc_csv(std::ostream& out, const std::vector<MeanStd>& curve);  // rank,value,std
void write_roc_csv(std::ostream& out, const RocCurve& curve);
std::string summary_json(const MetricsSummary& summary);

}  // namespace dsr
