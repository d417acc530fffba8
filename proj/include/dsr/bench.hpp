#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "dsr/fcn.hpp"
#include "dsr/feature_map.hpp"
#include "dsr/sparse_solver.hpp"

namespace dsr {

struct BenchOptions {
  std::set<int> single_scales{1};
  std::set<int> multi_scales{1, 2};
  Normalization normalization = Normalization::unit_l2;
  double beta = kDefaultBeta;
  SolverOptions solver;
  int window_stride = 16;  // pixels between sliding windows in the recompute baseline
  int recompute_probes = 0;  // time the recompute baseline on the first k probes only; 0 for all
  int workers = 1;
  std::uint64_t seed = 0;
};

struct ModeTiming {
  std::string mode;
  std::vector<double> probe_seconds;  // wall time per probe, extraction + matching
  double mean_seconds = 0;
  double p95_seconds = 0;
  double extraction_seconds = 0;  // summed over probes
  double matching_seconds = 0;
  double setup_seconds = 0;       // one-off gallery work before the first probe
  long gallery_extractions = 0;
  long probe_extractions = 0;
  long window_forwards = 0;       // network passes over sliding windows
};

struct BenchReport {
  std::vector<ModeTiming> modes;  // dsr_single, dsr_multi, recompute
  int gallery_size = 0;
  int probe_count = 0;
  int recompute_probes = 0;  // probes actually timed in the recompute mode
  int workers = 1;
  std::uint64_t seed = 0;
  std::string network;

  const ModeTiming& mode(const std::string& name) const;
  std::string to_json() const;
};

/// Network used for desk-scale timing. Four pools keep the maps small, so
/// extraction rather than matching dominates a probe's cost.
inline constexpr const char* kBenchNetwork = "c32,c32,p,c64,c64,p,c128,c128,p,c128,p";

struct BenchImages {
  std::vector<FeatureMapd> gallery;  // 48x96, one per identity
  std::vector<FeatureMapd> probes;   // 48x48 partial views of a second image per identity
};

BenchImages make_bench_images(int identities, std::uint64_t seed);

/// Times identification of every probe image against the gallery images.
///   dsr_single / dsr_multi: gallery features extracted once up front and
///     shared by all probes; per probe, one extraction plus DSR matching.
///   recompute: per (probe, gallery) pair the gallery image is re-scanned
///     with probe-sized sliding windows, every window through the network,
///     and the best window's squared distance is the score.
/// Disk I/O is not involved. Counters count network-level extraction events.
BenchReport bench_matching(const std::vector<FeatureMapd>& gallery_images, const std::vector<FeatureMapd>& probe_images,
                           const FcnParams& params, const BenchOptions& opts);

}  // namespace dsr
