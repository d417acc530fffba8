#include "dsr/evaluation.hpp"

#include <algorithm>
#include <chrono>
#include <map>
#include <stdexcept>

namespace dsr {

MetricsSummary EvaluationResult::summary() const {
  MetricsSummary s;
  s.rank1 = cmc.at(1);
  s.rank3 = cmc.at(3);
  s.map = map;
  s.auc = roc.auc;
  if (!probe_seconds.empty()) {
    std::vector<double> t = probe_seconds;
    std::sort(t.begin(), t.end());
    for (double x : t) s.timing.total_seconds += x;
    s.timing.mean_probe_seconds = s.timing.total_seconds / static_cast<double>(t.size());
    s.timing.p95_probe_seconds = t[std::min(t.size() - 1, static_cast<size_t>(0.95 * static_cast<double>(t.size())))];
  }
  return s;
}

EvaluationResult summarize_trials(std::vector<TrialResult> trials, std::vector<double> probe_seconds, bool close_set) {
  if (trials.empty()) throw std::invalid_argument("no probes to evaluate");
  EvaluationResult r;
  for (const auto& t : trials) {
    if (close_set && t.ranked.rank_of(t.true_person_id) == 0) {
      throw std::invalid_argument("probe " + t.probe_id + ": identity " + t.true_person_id +
                                  " is not in the gallery (close-set evaluation)");
    }
    for (const auto& [id, d] : t.ranked.items) (id == t.true_person_id ? r.genuine : r.impostor).push_back(d);
  }
  r.cmc = cmc(trials);
  if (!r.genuine.empty() && !r.impostor.empty()) r.roc = roc(r.genuine, r.impostor);
  std::vector<std::vector<bool>> relevance;
  for (const auto& t : trials) {
    if (t.ranked.rank_of(t.true_person_id) == 0) continue;  // open-set probes carry no AP
    std::vector<bool> rel;
    for (const auto& item : t.ranked.items) rel.push_back(item.first == t.true_person_id);
    relevance.push_back(std::move(rel));
  }
  if (!relevance.empty()) r.map = mean_average_precision(relevance);
  r.trials = std::move(trials);
  r.probe_seconds = std::move(probe_seconds);
  return r;
}

EvaluationResult evaluate_dsr(const std::vector<GalleryEntry<double>>& gallery, const std::vector<Probe>& probes,
                              const DsrEvalOptions& opts) {
  std::vector<TrialResult> trials(probes.size());
  std::vector<double> seconds(probes.size());
  std::vector<Index> probe_blocks(probes.size());
  // Parallel over entries inside rank_gallery; probes run in order.
  for (size_t i = 0; i < probes.size(); ++i) {
    const auto start = std::chrono::steady_clock::now();
    const BlockSetd blocks = make_blocks(probes[i].map, opts.scales, opts.normalization);
    trials[i] = {probes[i].probe_id, probes[i].person_id,
                 rank_gallery(blocks, gallery, opts.beta, opts.solver, opts.workers)};
    seconds[i] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    probe_blocks[i] = blocks.size();
  }
  EvaluationResult r = summarize_trials(std::move(trials), std::move(seconds), opts.close_set);
  r.max_probe_blocks = probe_blocks.empty() ? 0 : *std::max_element(probe_blocks.begin(), probe_blocks.end());
  for (const auto& e : gallery) r.max_gallery_blocks = std::max(r.max_gallery_blocks, e.blocks.size());
  return r;
}

EvaluationResult evaluate_dsr(const std::vector<ManifestEntry>& manifest, const std::vector<FeatureMapd>& maps,
                              const std::vector<Probe>& probes, const DsrEvalOptions& opts, int max_shots) {
  if (manifest.size() != maps.size()) throw std::invalid_argument("one map per manifest entry");
  std::vector<GalleryEntry<double>> entries;
  for (size_t i = 0; i < manifest.size(); ++i) {
    if (max_shots > 0 && manifest[i].shot >= max_shots) continue;
    GalleryEntry<double> e;
    e.person_id = manifest[i].person_id;
    e.shot_index = manifest[i].shot;
    e.source = manifest[i].fmap.string();
    e.blocks = make_blocks(maps[i], opts.scales, opts.normalization);
    e.prepare();
    entries.push_back(std::move(e));
  }
  if (entries.empty()) throw std::invalid_argument("no gallery entries left after the shot filter");
  return evaluate_dsr(entries, probes, opts);
}

EvaluationResult evaluate_resizing(const std::vector<ManifestEntry>& manifest, const std::vector<FeatureMapd>& maps,
                                   const std::vector<Probe>& probes, Index width, Index height, int max_shots) {
  if (manifest.size() != maps.size()) throw std::invalid_argument("one map per manifest entry");
  std::vector<TrialResult> trials;
  std::vector<double> seconds;
  for (const auto& p : probes) {
    const auto start = std::chrono::steady_clock::now();
    std::map<std::string, std::vector<double>> by_person;
    for (size_t i = 0; i < manifest.size(); ++i) {
      if (max_shots > 0 && manifest[i].shot >= max_shots) continue;
      by_person[manifest[i].person_id].push_back(resizing_baseline_distance(p.map, maps[i], width, height));
    }
    TrialResult t{p.probe_id, p.person_id, {}};
    for (const auto& [id, d] : by_person) t.ranked.items.emplace_back(id, aggregate_multishot(d));
    std::stable_sort(t.ranked.items.begin(), t.ranked.items.end(),
                     [](const auto& a, const auto& b) { return a.second < b.second; });
    trials.push_back(std::move(t));
    seconds.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
  }
  return summarize_trials(std::move(trials), std::move(seconds));
}

FineTuneSet make_finetune_set(int identities, std::uint64_t seed) {
  ImageSetOptions io;
  io.identities = identities;
  io.images_per_identity = 8;
  io.seed = seed;
  const LabeledImageSet s = make_image_set(io);
  auto image = [&](int k, int id) -> const FeatureMapd& { return s.images[static_cast<size_t>(k * identities + id)]; };
  auto half = [](const FeatureMapd& im, int which) {
    return crop(im, 0, which * (im.height() / 2), im.width(), im.height() / 2);
  };
  FineTuneSet set;
  for (int id = 0; id < identities; ++id) {
    for (int k = 0; k < 4; ++k) {
      set.pretrain.push_back({image(k, id), id});
      const FeatureMapd probe = half(image(k, id), 0);
      set.pairs.push_back({probe, image((k + 1) % 4, id), 1});
      set.pairs.push_back({probe, image((k + 1) % 4, (id + 1 + k) % identities), -1});
    }
    set.gallery.push_back(image(4, id));
    set.gallery_ids.push_back("p" + std::to_string(id));
    for (int k = 5; k < 8; ++k) {
      for (int h = 0; h < 2; ++h) {
        set.probes.push_back(half(image(k, id), h));
        set.probe_ids.push_back("p" + std::to_string(id));
      }
    }
  }
  return set;
}

NetworkEvaluation evaluate_network(const FcnParams& params, const FineTuneSet& set, const DsrEvalOptions& opts) {
  std::vector<GalleryEntry<double>> gallery(set.gallery.size());
  for (size_t i = 0; i < set.gallery.size(); ++i) {
    gallery[i].person_id = set.gallery_ids[i];
    gallery[i].blocks = make_blocks(fcn_forward(set.gallery[i], params), opts.scales, opts.normalization);
    gallery[i].prepare();
  }
  std::vector<Probe> probes;
  for (size_t i = 0; i < set.probes.size(); ++i) {
    probes.push_back({"q" + std::to_string(i), set.probe_ids[i], fcn_forward(set.probes[i], params)});
  }
  const EvaluationResult r = evaluate_dsr(gallery, probes, opts);
  auto mean = [](const std::vector<double>& v) {
    double t = 0;
    for (double x : v) t += x;
    return v.empty() ? 0.0 : t / static_cast<double>(v.size());
  };
  return {mean(r.genuine), mean(r.impostor), r.cmc.at(1)};
}

}  // namespace dsr
