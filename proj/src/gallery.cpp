#include "dsr/gallery.hpp"

#include <fstream>
#include <limits>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "dsr/fmap_io.hpp"

namespace dsr {

using nlohmann::json;

std::vector<ManifestEntry> parse_manifest(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("manifest is not valid JSON: ") + e.what());
  }
  if (!j.is_array()) throw FormatError("manifest must be a JSON array");
  std::vector<ManifestEntry> out;
  for (size_t i = 0; i < j.size(); ++i) {
    const json& e = j[i];
    const std::string where = "manifest entry " + std::to_string(i);
    if (!e.is_object()) throw FormatError(where + " is not an object");
    if (!e.contains("person_id") || !e["person_id"].is_string()) throw FormatError(where + ": person_id must be a string");
    if (!e.contains("shot") || !e["shot"].is_number_integer()) throw FormatError(where + ": shot must be an integer");
    if (!e.contains("fmap") || !e["fmap"].is_string()) throw FormatError(where + ": fmap must be a path string");
    ManifestEntry m{e["person_id"].get<std::string>(), e["shot"].get<int>(), e["fmap"].get<std::string>()};
    if (m.person_id.empty()) throw FormatError(where + ": empty person_id");
    if (m.shot < 0) throw FormatError(where + ": negative shot index");
    out.push_back(std::move(m));
  }
  return out;
}

std::string manifest_json(const std::vector<ManifestEntry>& entries) {
  json j = json::array();
  for (const auto& e : entries) j.push_back({{"person_id", e.person_id}, {"shot", e.shot}, {"fmap", e.fmap.generic_string()}});
  return j.dump(2);
}

GalleryStore GalleryStore::open(const std::filesystem::path& path) {
  namespace fs = std::filesystem;
  const fs::path manifest = fs::is_directory(path) ? path / kManifestName : path;
  std::ifstream in(manifest);
  if (!in) throw FormatError("cannot open gallery manifest " + manifest.string());
  std::stringstream buf;
  buf << in.rdbuf();

  GalleryStore store;
  store.root_ = manifest.parent_path();
  store.entries_ = parse_manifest(buf.str());
  if (store.entries_.empty()) throw FormatError("gallery store " + manifest.string() + " is empty");
  std::set<std::pair<std::string, int>> seen;
  for (const auto& e : store.entries_) {
    if (!seen.emplace(e.person_id, e.shot).second) {
      throw FormatError("duplicate gallery entry " + e.person_id + " shot " + std::to_string(e.shot));
    }
    FeatureMapd fm = read_fmap(store.root_ / e.fmap);
    if (!store.maps_.empty() && fm.channels() != store.maps_.front().channels()) {
      throw FormatError("gallery map " + e.fmap.string() + " has a different channel count");
    }
    store.maps_.push_back(std::move(fm));
  }
  return store;
}

GalleryStore GalleryStore::create(const std::filesystem::path& root, const std::vector<ManifestEntry>& entries,
                                  const std::vector<FeatureMapd>& maps) {
  if (entries.size() != maps.size()) throw std::invalid_argument("one map per manifest entry");
  std::filesystem::create_directories(root);
  for (size_t i = 0; i < entries.size(); ++i) {
    const auto path = root / entries[i].fmap;
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    write_fmap(path, maps[i]);
  }
  std::ofstream(root / kManifestName) << manifest_json(entries) << '\n';
  return open(root);
}

Index GalleryStore::channels() const { return maps_.empty() ? 0 : maps_.front().channels(); }

std::set<std::string> GalleryStore::person_ids() const {
  std::set<std::string> ids;
  for (const auto& e : entries_) ids.insert(e.person_id);
  return ids;
}

BlockSetd make_blocks(const FeatureMapd& fm, const std::set<int>& scales, Normalization norm) {
  BlockSetd bs = multiscale_blocks(fm, scales);
  return norm == Normalization::none ? bs : normalize(bs, norm);
}

std::vector<GalleryEntry<double>> GalleryStore::build_entries(const std::set<int>& scales, Normalization norm,
                                                              int max_shots) const {
  std::vector<GalleryEntry<double>> out;
  for (size_t i = 0; i < entries_.size(); ++i) {
    if (max_shots > 0 && entries_[i].shot >= max_shots) continue;
    GalleryEntry<double> e;
    e.person_id = entries_[i].person_id;
    e.shot_index = entries_[i].shot;
    e.source = entries_[i].fmap.string();
    e.blocks = make_blocks(maps_[i], scales, norm);
    e.prepare();
    out.push_back(std::move(e));
  }
  if (out.empty()) throw std::invalid_argument("no gallery entries left after the shot filter");
  return out;
}

void write_match_csv(std::ostream& out, const std::string& probe_id, const RankedList<double>& ranking) {
  const auto saved = out.precision(std::numeric_limits<double>::max_digits10);
  out << "probe_id,person_id,distance,rank\n";
  for (size_t i = 0; i < ranking.items.size(); ++i) {
    out << probe_id << ',' << ranking.items[i].first << ',' << ranking.items[i].second << ',' << i + 1 << '\n';
  }
  out.precision(saved);
}

std::string match_scores_json(const std::vector<GalleryEntry<double>>& entries,
                              const std::vector<MatchScore<double>>& scores) {
  if (entries.size() != scores.size()) throw std::invalid_argument("one score per gallery entry");
  json j = json::array();
  for (size_t i = 0; i < scores.size(); ++i) {
    const auto& s = scores[i];
    j.push_back({{"person_id", entries[i].person_id},
                 {"shot", entries[i].shot_index},
                 {"distance", s.distance},
                 {"penalized_objective", s.penalized_objective},
                 {"code_sparsity", s.code_sparsity},
                 {"probe_blocks", s.probe_blocks},
                 {"gallery_blocks", s.gallery_blocks},
                 {"converged", s.converged},
                 {"wall_time_seconds", s.wall_time.count()}});
  }
  return j.dump(2);
}

}  // namespace dsr
