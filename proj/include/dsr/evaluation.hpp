#pragma once

#include <set>
#include <vector>

#include "dsr/gallery.hpp"
#include "dsr/metrics.hpp"
#include "dsr/synthetic.hpp"
#include "dsr/training.hpp"

namespace dsr {

struct EvaluationResult {
  std::vector<TrialResult> trials;
  CmcCurve cmc;
  RocCurve roc;
  double map = 0;
  std::vector<double> genuine;   // probe vs own identity
  std::vector<double> impostor;  // probe vs every other identity
  std::vector<double> probe_seconds;
  Index max_probe_blocks = 0;
  Index max_gallery_blocks = 0;

  MetricsSummary summary() const;
};

/// CMC, ROC and mAP from finished trials. In close-set mode every probe's
/// identity must be in its ranking.
EvaluationResult summarize_trials(std::vector<TrialResult> trials, std::vector<double> probe_seconds = {},
                                  bool close_set = true);

struct DsrEvalOptions {
  std::set<int> scales{1, 2, 3};
  Normalization normalization = Normalization::none;
  double beta = kDefaultBeta;
  SolverOptions solver;
  int workers = 1;
  bool close_set = true;
};

/// Ranks every probe against prepared gallery entries.
EvaluationResult evaluate_dsr(const std::vector<GalleryEntry<double>>& gallery, const std::vector<Probe>& probes,
                              const DsrEvalOptions& opts);

/// Builds entries from raw maps (first `max_shots` shots, 0 for all), then evaluate_dsr.
EvaluationResult evaluate_dsr(const std::vector<ManifestEntry>& manifest, const std::vector<FeatureMapd>& maps,
                              const std::vector<Probe>& probes, const DsrEvalOptions& opts, int max_shots = 0);

/// Resizing-model baseline: every map resized to `width` x `height`, squared
/// Euclidean distance, shots averaged per identity.
EvaluationResult evaluate_resizing(const std::vector<ManifestEntry>& manifest, const std::vector<FeatureMapd>& maps,
                                   const std::vector<Probe>& probes, Index width, Index height, int max_shots = 0);

/// Labelled pedestrian images split for pre-training, fine-tuning and a
/// held-out identification test. Per identity: images 0-3 train (labelled,
/// and paired as half-image probe vs other holistic image, one genuine and
/// one impostor pair each); image 4 is the gallery; images 5-7 give top and
/// bottom half probes.
struct FineTuneSet {
  std::vector<LabeledImage> pretrain;
  std::vector<VerificationPair> pairs;
  std::vector<FeatureMapd> gallery;  // one per identity
  std::vector<std::string> gallery_ids;
  std::vector<FeatureMapd> probes;
  std::vector<std::string> probe_ids;  // person id per probe
};

FineTuneSet make_finetune_set(int identities, std::uint64_t seed);

struct NetworkEvaluation {
  double mean_genuine = 0;   // mean DSR distance, probe vs own identity
  double mean_impostor = 0;  // mean DSR distance, probe vs other identities
  double rank1 = 0;
};

/// Extracts features with `params` and ranks the held-out probes.
NetworkEvaluation evaluate_network(const FcnParams& params, const FineTuneSet& set, const DsrEvalOptions& opts);

}  // namespace dsr
