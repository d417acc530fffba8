#pragma once

#include <algorithm>
#include <chrono>
#include <map>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "dsr/feature_map.hpp"
#include "dsr/sparse_solver.hpp"

namespace dsr {

template <typename Scalar>
struct MatchScore {
  Scalar distance = 0;               // (1/N) ||X - YW||_F^2
  Vector<Scalar> per_block_residuals;  // ||x_n - Y w_n||^2
  Scalar code_sparsity = 0;          // mean number of nonzeros per code
  Scalar penalized_objective = 0;    // sum_n 1/2 ||x_n - Y w_n||^2 + beta ||w_n||_1
  Index probe_blocks = 0;
  Index gallery_blocks = 0;
  bool converged = true;
  std::chrono::duration<double> wall_time{0};
};

/// Gallery dictionary with atoms in a canonical (lexicographic) order, so
/// the solver sees the same problem whatever order the blocks arrived in.
template <typename Scalar>
Dictionary<Scalar> prepare_gallery(const BlockSet<Scalar>& gallery) {
  if (gallery.empty()) throw std::invalid_argument("gallery has no blocks");
  const Matrix<Scalar>& m = gallery.matrix();
  std::vector<Index> order(static_cast<size_t>(m.cols()));
  std::iota(order.begin(), order.end(), Index(0));
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
    for (Index r = 0; r < m.rows(); ++r) {
      if (m(r, a) != m(r, b)) return m(r, a) < m(r, b);
    }
    return false;
  });
  Matrix<Scalar> sorted(m.rows(), m.cols());
  for (Index j = 0; j < m.cols(); ++j) sorted.col(j) = m.col(order[static_cast<size_t>(j)]);
  return Dictionary<Scalar>(std::move(sorted));
}

/// DSR distance of a probe block set against a prepared gallery dictionary.
/// The beta penalty is reported in diagnostics only, not in the distance.
template <typename Scalar>
MatchScore<Scalar> dsr_distance(const BlockSet<Scalar>& probe, const Dictionary<Scalar>& gallery, Scalar beta,
                                const SolverOptions& opts = {}) {
  const auto start = std::chrono::steady_clock::now();
  if (probe.empty()) throw std::invalid_argument("probe has no blocks");
  if (probe.channels() != gallery.channels()) {
    throw std::invalid_argument("probe and gallery channel counts differ");
  }
  const CodeMatrix<Scalar> codes = solve_batch(gallery, probe.matrix(), beta, opts);
  MatchScore<Scalar> score;
  score.per_block_residuals.resize(probe.size());
  for (Index n = 0; n < probe.size(); ++n) score.per_block_residuals(n) = codes.columns[static_cast<size_t>(n)].residual;
  score.distance = score.per_block_residuals.mean();
  score.code_sparsity = codes.mean_active();
  for (const auto& c : codes.columns) score.penalized_objective += c.objective;
  score.probe_blocks = probe.size();
  score.gallery_blocks = gallery.size();
  score.converged = codes.all_converged();
  score.wall_time = std::chrono::steady_clock::now() - start;
  return score;
}

template <typename Scalar>
MatchScore<Scalar> dsr_distance(const BlockSet<Scalar>& probe, const BlockSet<Scalar>& gallery, Scalar beta,
                                const SolverOptions& opts = {}) {
  if (probe.channels() != gallery.channels()) {
    throw std::invalid_argument("probe and gallery channel counts differ");
  }
  return dsr_distance(probe, prepare_gallery(gallery), beta, opts);
}

/// Mean distance over the shots of one identity.
template <typename Scalar>
Scalar aggregate_multishot(const std::vector<Scalar>& distances) {
  if (distances.empty()) throw std::invalid_argument("no scores to aggregate");
  return std::accumulate(distances.begin(), distances.end(), Scalar(0)) / static_cast<Scalar>(distances.size());
}

template <typename Scalar>
Scalar aggregate_multishot(const std::vector<MatchScore<Scalar>>& scores) {
  std::vector<Scalar> d;
  d.reserve(scores.size());
  for (const auto& s : scores) d.push_back(s.distance);
  return aggregate_multishot(d);
}

template <typename Scalar>
struct GalleryEntry {
  std::string person_id;
  int shot_index = 0;
  BlockSet<Scalar> blocks;
  std::string source;
  Dictionary<Scalar> dictionary;  // filled by prepare()

  void prepare() {
    if (blocks.empty()) throw std::invalid_argument("gallery entry " + person_id + " has no blocks");
    dictionary = prepare_gallery(blocks);
  }
  bool prepared() const { return dictionary.size() > 0; }
};

template <typename Scalar>
struct RankedList {
  std::vector<std::pair<std::string, Scalar>> items;  // ascending distance

  /// 1-based rank of the identity, 0 when absent.
  Index rank_of(const std::string& person_id) const {
    for (size_t i = 0; i < items.size(); ++i) {
      if (items[i].first == person_id) return static_cast<Index>(i) + 1;
    }
    return 0;
  }
  Index size() const { return static_cast<Index>(items.size()); }
  bool empty() const { return items.empty(); }
};

template <typename Scalar>
struct RankResult {
  RankedList<Scalar> ranking;
  std::vector<MatchScore<Scalar>> entry_scores;  // same order as the entries
};

/// Matches the probe against every entry (each shot is its own dictionary),
/// averages per identity and sorts ascending; ties go to the smaller id.
template <typename Scalar>
RankResult<Scalar> rank_gallery_detailed(const BlockSet<Scalar>& probe, const std::vector<GalleryEntry<Scalar>>& entries,
                                         Scalar beta, const SolverOptions& opts = {}, int workers = 1) {
  if (entries.empty()) throw std::invalid_argument("gallery is empty");
  for (const auto& e : entries) {
    if (e.blocks.channels() != probe.channels() && !(e.prepared() && e.dictionary.channels() == probe.channels())) {
      throw std::invalid_argument("gallery entry " + e.person_id + " has a different channel count than the probe");
    }
  }
  RankResult<Scalar> result;
  result.entry_scores.resize(entries.size());
  parallel_for(static_cast<Index>(entries.size()), workers, [&](Index i) {
    const auto& e = entries[static_cast<size_t>(i)];
    result.entry_scores[static_cast<size_t>(i)] =
        e.prepared() ? dsr_distance(probe, e.dictionary, beta, opts) : dsr_distance(probe, e.blocks, beta, opts);
  });

  std::map<std::string, std::vector<Scalar>> by_person;
  for (size_t i = 0; i < entries.size(); ++i) by_person[entries[i].person_id].push_back(result.entry_scores[i].distance);
  for (const auto& [id, d] : by_person) result.ranking.items.emplace_back(id, aggregate_multishot(d));
  std::stable_sort(result.ranking.items.begin(), result.ranking.items.end(),
                   [](const auto& a, const auto& b) { return a.second < b.second; });
  return result;
}

template <typename Scalar>
RankedList<Scalar> rank_gallery(const BlockSet<Scalar>& probe, const std::vector<GalleryEntry<Scalar>>& entries,
                                Scalar beta, const SolverOptions& opts = {}, int workers = 1) {
  return rank_gallery_detailed(probe, entries, beta, opts, workers).ranking;
}

/// Bilinear resize with half-pixel centres; same-size resizing is the identity.
template <typename Scalar>
FeatureMap<Scalar> resize_bilinear(const FeatureMap<Scalar>& fm, Index width, Index height) {
  fm.validate();
  if (width <= 0 || height <= 0) throw std::invalid_argument("resize target must be positive");
  FeatureMap<Scalar> out(width, height, fm.channels());
  auto source = [](Index dst, Index src_len, Index dst_len, Index& lo, Index& hi, Scalar& frac) {
    Scalar s = (static_cast<Scalar>(dst) + Scalar(0.5)) * static_cast<Scalar>(src_len) / static_cast<Scalar>(dst_len) -
               Scalar(0.5);
    s = std::clamp(s, Scalar(0), static_cast<Scalar>(src_len - 1));
    lo = static_cast<Index>(std::floor(s));
    hi = std::min(lo + 1, src_len - 1);
    frac = s - static_cast<Scalar>(lo);
  };
  for (Index r = 0; r < height; ++r) {
    Index r0, r1;
    Scalar fr;
    source(r, fm.height(), height, r0, r1, fr);
    for (Index c = 0; c < width; ++c) {
      Index c0, c1;
      Scalar fc;
      source(c, fm.width(), width, c0, c1, fc);
      if (fr == Scalar(0) && fc == Scalar(0)) {
        out.fiber(c, r) = fm.fiber(c0, r0);
        continue;
      }
      out.fiber(c, r) = (Scalar(1) - fr) * ((Scalar(1) - fc) * fm.fiber(c0, r0) + fc * fm.fiber(c1, r0)) +
                        fr * ((Scalar(1) - fc) * fm.fiber(c0, r1) + fc * fm.fiber(c1, r1));
    }
  }
  return out;
}

/// Resizing-model baseline: both maps resized to one size, then squared
/// Euclidean distance between the flattened tensors.
template <typename Scalar>
Scalar resizing_baseline_distance(const FeatureMap<Scalar>& probe, const FeatureMap<Scalar>& gallery, Index target_w,
                                  Index target_h) {
  if (probe.channels() != gallery.channels()) {
    throw std::invalid_argument("probe and gallery channel counts differ");
  }
  return (resize_bilinear(probe, target_w, target_h).data() - resize_bilinear(gallery, target_w, target_h).data())
      .squaredNorm();
}

}  // namespace dsr
