#include "dsr/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <iterator>
#include <limits>
#include <ostream>
#include <stdexcept>

#include <json.hpp>

namespace dsr {

double CmcCurve::at(Index rank) const {
  if (rank < 1) throw std::out_of_range("CMC rank is 1-based");
  if (values.empty()) throw std::out_of_range("empty CMC curve");
  return values[static_cast<size_t>(std::min(rank, max_rank()) - 1)];
}

CmcCurve cmc(const std::vector<TrialResult>& trials, Index max_rank) {
  if (trials.empty()) throw std::invalid_argument("cmc needs at least one trial");
  Index longest = 0;
  for (const auto& t : trials) {
    if (t.ranked.empty()) throw std::invalid_argument("trial " + t.probe_id + " has an empty ranking");
    longest = std::max(longest, t.ranked.size());
  }
  const Index r_max = max_rank > 0 ? max_rank : longest;
  std::vector<Index> hits(static_cast<size_t>(r_max) + 1, 0);
  for (const auto& t : trials) {
    const Index r = t.ranked.rank_of(t.true_person_id);
    if (r > 0 && r <= r_max) ++hits[static_cast<size_t>(r)];
  }
  CmcCurve curve;
  Index cumulative = 0;
  for (Index r = 1; r <= r_max; ++r) {
    cumulative += hits[static_cast<size_t>(r)];
    curve.values.push_back(static_cast<double>(cumulative) / static_cast<double>(trials.size()));
  }
  return curve;
}

RocCurve roc(const std::vector<double>& genuine, const std::vector<double>& impostor) {
  if (genuine.empty() || impostor.empty()) throw std::invalid_argument("roc needs genuine and impostor scores");
  std::vector<double> g = genuine, im = impostor;
  std::sort(g.begin(), g.end());
  std::sort(im.begin(), im.end());
  std::vector<double> thresholds;
  std::merge(g.begin(), g.end(), im.begin(), im.end(), std::back_inserter(thresholds));
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());

  RocCurve curve;
  curve.points.push_back({0.0, 0.0, -INFINITY});
  size_t gi = 0, ii = 0;
  for (double t : thresholds) {
    while (gi < g.size() && g[gi] <= t) ++gi;
    while (ii < im.size() && im[ii] <= t) ++ii;
    curve.points.push_back(
        {static_cast<double>(ii) / static_cast<double>(im.size()), static_cast<double>(gi) / static_cast<double>(g.size()), t});
  }
  for (size_t i = 1; i < curve.points.size(); ++i) {
    const auto& a = curve.points[i - 1];
    const auto& b = curve.points[i];
    curve.auc += (b.far - a.far) * (a.tar + b.tar) / 2;
  }
  return curve;
}

double average_precision(const std::vector<bool>& relevant) {
  double sum = 0;
  Index found = 0;
  for (size_t i = 0; i < relevant.size(); ++i) {
    if (!relevant[i]) continue;
    ++found;
    sum += static_cast<double>(found) / static_cast<double>(i + 1);
  }
  if (found == 0) throw std::invalid_argument("average precision needs at least one relevant entry");
  return sum / static_cast<double>(found);
}

double mean_average_precision(const std::vector<std::vector<bool>>& rankings) {
  if (rankings.empty()) throw std::invalid_argument("mAP needs at least one ranking");
  double sum = 0;
  for (const auto& r : rankings) sum += average_precision(r);
  return sum / static_cast<double>(rankings.size());
}

double mean_average_precision(const std::vector<TrialResult>& trials) {
  std::vector<std::vector<bool>> rankings;
  rankings.reserve(trials.size());
  for (const auto& t : trials) {
    std::vector<bool> rel;
    rel.reserve(t.ranked.items.size());
    for (const auto& item : t.ranked.items) rel.push_back(item.first == t.true_person_id);
    rankings.push_back(std::move(rel));
  }
  return mean_average_precision(rankings);
}

MeanStd mean_std(const std::vector<double>& xs) {
  if (xs.empty()) throw std::invalid_argument("mean of an empty sample");
  MeanStd m;
  for (double x : xs) m.mean += x;
  m.mean /= static_cast<double>(xs.size());
  for (double x : xs) m.std += (x - m.mean) * (x - m.mean);
  m.std = std::sqrt(m.std / static_cast<double>(xs.size()));
  return m;
}

std::vector<MeanStd> average_curves(const std::vector<CmcCurve>& curves) {
  if (curves.empty()) throw std::invalid_argument("no curves to average");
  Index longest = 0;
  for (const auto& c : curves) longest = std::max(longest, c.max_rank());
  std::vector<MeanStd> out;
  for (Index r = 1; r <= longest; ++r) {
    std::vector<double> at_r;
    for (const auto& c : curves) at_r.push_back(c.at(r));
    out.push_back(mean_std(at_r));
  }
  return out;
}

namespace {

// Full round-trip precision for the duration of one writer call.
class PrecisionGuard {
 public:
  explicit PrecisionGuard(std::ostream& out) : out_(out), saved_(out.precision()) {
    out_ << std::setprecision(std::numeric_limits<double>::max_digits10);
  }
  ~PrecisionGuard() { out_.precision(saved_); }

 private:
  std::ostream& out_;
  std::streamsize saved_;
};

}  // namespace

void write_cmc_csv(std::ostream& out, const CmcCurve& curve) {
  PrecisionGuard guard(out);
  out << "rank,value\n";
  for (size_t i = 0; i < curve.values.size(); ++i) out << i + 1 << ',' << curve.values[i] << '\n';
}

void write_cmc_csv(std::ostream& out, const std::vector<MeanStd>& curve) {
  PrecisionGuard guard(out);
  out << "rank,value,std\n";
  for (size_t i = 0; i < curve.size(); ++i) out << i + 1 << ',' << curve[i].mean << ',' << curve[i].std << '\n';
}

void write_roc_csv(std::ostream& out, const RocCurve& curve) {
  PrecisionGuard guard(out);
  out << "far,tar\n";
  for (const auto& p : curve.points) out << p.far << ',' << p.tar << '\n';
}

std::string summary_json(const MetricsSummary& s) {
  const nlohmann::json j = {
      {"rank1", s.rank1},
      {"rank3", s.rank3},
      {"mAP", s.map},
      {"auc", s.auc},
      {"timing",
       {{"mean_probe_seconds", s.timing.mean_probe_seconds},
        {"p95_probe_seconds", s.timing.p95_probe_seconds},
        {"total_seconds", s.timing.total_seconds}}},
  };
  return j.dump(2);
}

}  // namespace dsr
