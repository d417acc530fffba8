#pragma once

#include <filesystem>
#include <iosfwd>
#include <set>
#include <string>
#include <vector>

#include "dsr/feature_map.hpp"
#include "dsr/matching.hpp"

namespace dsr {

struct ManifestEntry {
  std::string person_id;
  int shot = 0;
  std::filesystem::path fmap;  // relative to the store root

  friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

/// JSON array of {"person_id": string, "shot": int, "fmap": path}.
std::vector<ManifestEntry> parse_manifest(const std::string& text);
std::string manifest_json(const std::vector<ManifestEntry>& entries);

/// Directory with manifest.json and the .fmap files it names.
class GalleryStore {
 public:
  static constexpr const char* kManifestName = "manifest.json";

  /// `path` is the store directory or its manifest file. Every entry is read
  /// and validated; duplicate (person_id, shot) pairs are rejected.
  static GalleryStore open(const std::filesystem::path& path);

  /// Writes the maps and a manifest under `root` (created if needed).
  static GalleryStore create(const std::filesystem::path& root, const std::vector<ManifestEntry>& entries,
                             const std::vector<FeatureMapd>& maps);

  const std::filesystem::path& root() const { return root_; }
  const std::vector<ManifestEntry>& entries() const { return entries_; }
  const std::vector<FeatureMapd>& maps() const { return maps_; }
  Index size() const { return static_cast<Index>(entries_.size()); }
  Index channels() const;
  std::set<std::string> person_ids() const;

  /// Block sets and prepared dictionaries for matching. Entries whose shot
  /// index is >= `max_shots` are skipped (0 keeps all).
  std::vector<GalleryEntry<double>> build_entries(const std::set<int>& scales, Normalization norm,
                                                  int max_shots = 0) const;

 private:
  std::filesystem::path root_;
  std::vector<ManifestEntry> entries_;
  std::vector<FeatureMapd> maps_;
};

/// Block set of one map at the given scales, then normalization.
BlockSetd make_blocks(const FeatureMapd& fm, const std::set<int>& scales, Normalization norm);

/// CSV with header probe_id,person_id,distance,rank.
void write_match_csv(std::ostream& out, const std::string& probe_id, const RankedList<double>& ranking);

/// JSON array of per-entry MatchScore diagnostics.
std::string match_scores_json(const std::vector<GalleryEntry<double>>& entries,
                              const std::vector<MatchScore<double>>& scores);

}  // namespace dsr
