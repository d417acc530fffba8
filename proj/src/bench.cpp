#include "dsr/bench.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <chrono>
#include <limits>
#include <stdexcept>

#include <json.hpp>

#include "dsr/gallery.hpp"
#include "dsr/matching.hpp"
#include "dsr/parallel.hpp"
#include "dsr/synthetic.hpp"

namespace dsr {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

void finish(ModeTiming& m) {
  std::vector<double> t = m.probe_seconds;
  std::sort(t.begin(), t.end());
  double sum = 0;
  for (double x : t) sum += x;
  m.mean_seconds = t.empty() ? 0 : sum / static_cast<double>(t.size());
  m.p95_seconds = t.empty() ? 0 : t[std::min(t.size() - 1, static_cast<size_t>(0.95 * static_cast<double>(t.size())))];
}

ModeTiming run_dsr(const std::string& name, const std::vector<FeatureMapd>& gallery_images,
                   const std::vector<FeatureMapd>& probe_images, const FcnParams& params, const std::set<int>& scales,
                   const BenchOptions& opts) {
  ModeTiming m{name, {}, 0, 0, 0, 0, 0, 0, 0, 0};
  const auto setup = Clock::now();
  std::vector<GalleryEntry<double>> entries(gallery_images.size());
  for (size_t g = 0; g < gallery_images.size(); ++g) {
    entries[g].person_id = "g" + std::to_string(g);
    entries[g].blocks = make_blocks(fcn_forward(gallery_images[g], params), scales, opts.normalization);
    ++m.gallery_extractions;
    entries[g].prepare();
  }
  m.setup_seconds = seconds_since(setup);

  for (const auto& probe : probe_images) {
    const auto start = Clock::now();
    const BlockSetd blocks = make_blocks(fcn_forward(probe, params), scales, opts.normalization);
    ++m.probe_extractions;
    m.extraction_seconds += seconds_since(start);
    const auto match = Clock::now();
    const auto ranking = rank_gallery(blocks, entries, opts.beta, opts.solver, opts.workers);
    if (ranking.empty()) throw std::logic_error("empty ranking");
    m.matching_seconds += seconds_since(match);
    m.probe_seconds.push_back(seconds_since(start));
  }
  finish(m);
  return m;
}

ModeTiming run_recompute(const std::vector<FeatureMapd>& gallery_images, const std::vector<FeatureMapd>& probe_images,
                         const FcnParams& params, const BenchOptions& opts) {
  ModeTiming m{"recompute", {}, 0, 0, 0, 0, 0, 0, 0, 0};
  const size_t count = opts.recompute_probes > 0
                           ? std::min(probe_images.size(), static_cast<size_t>(opts.recompute_probes))
                           : probe_images.size();
  for (size_t pi = 0; pi < count; ++pi) {
    const FeatureMapd& probe = probe_images[pi];
    const auto start = Clock::now();
    const FeatureMapd pf = fcn_forward(probe, params);
    ++m.probe_extractions;
    std::vector<double> best(gallery_images.size(), std::numeric_limits<double>::infinity());
    std::vector<long> forwards(gallery_images.size(), 0);
    parallel_for(static_cast<Index>(gallery_images.size()), opts.workers, [&](Index gi) {
      const FeatureMapd& g = gallery_images[static_cast<size_t>(gi)];
      if (probe.width() > g.width() || probe.height() > g.height()) {
        throw std::invalid_argument("recompute baseline needs probes no larger than gallery images");
      }
      auto positions = [&](Index span, Index window) {
        std::vector<Index> p;
        for (Index x = 0; x + window <= span; x += opts.window_stride) p.push_back(x);
        if (p.back() + window < span) p.push_back(span - window);
        return p;
      };
      for (Index y : positions(g.height(), probe.height())) {
        for (Index x : positions(g.width(), probe.width())) {
          const FeatureMapd wf = fcn_forward(crop(g, x, y, probe.width(), probe.height()), params);
          ++forwards[static_cast<size_t>(gi)];
          best[static_cast<size_t>(gi)] = std::min(best[static_cast<size_t>(gi)], (wf.data() - pf.data()).squaredNorm());
        }
      }
    });
    m.gallery_extractions += static_cast<long>(gallery_images.size());
    for (long f : forwards) m.window_forwards += f;
    std::vector<size_t> order(best.size());
    std::iota(order.begin(), order.end(), size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) { return best[a] < best[b]; });
    m.probe_seconds.push_back(seconds_since(start));
  }
  m.extraction_seconds = 0;
  for (double t : m.probe_seconds) m.extraction_seconds += t;
  finish(m);
  return m;
}

}  // namespace

BenchImages make_bench_images(int identities, std::uint64_t seed) {
  if (identities < 1) throw std::invalid_argument("bench needs at least one identity");
  ImageSetOptions io;
  io.identities = identities;
  io.images_per_identity = 2;
  io.width = 48;
  io.height = 96;
  io.seed = seed;
  const LabeledImageSet set = make_image_set(io);
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::uniform_int_distribution<Index> row(0, io.height - io.width);
  BenchImages b;
  for (size_t i = 0; i < set.images.size(); ++i) {
    // Each identity's first image joins the gallery, its second is cropped to a probe.
    if (std::count(set.labels.begin(), set.labels.begin() + static_cast<long>(i), set.labels[i]) == 0) {
      b.gallery.push_back(set.images[i]);
    } else {
      b.probes.push_back(crop(set.images[i], 0, row(rng), io.width, io.width));
    }
  }
  return b;
}

const ModeTiming& BenchReport::mode(const std::string& name) const {
  for (const auto& m : modes) {
    if (m.mode == name) return m;
  }
  throw std::out_of_range("no bench mode " + name);
}

std::string BenchReport::to_json() const {
  nlohmann::json j;
  j["gallery_size"] = gallery_size;
  j["probe_count"] = probe_count;
  j["workers"] = workers;
  j["seed"] = seed;
  j["network"] = network;
  j["recompute_probes"] = recompute_probes;
  j["modes"] = nlohmann::json::array();
  for (const auto& m : modes) {
    j["modes"].push_back({{"mode", m.mode},
                          {"mean_seconds", m.mean_seconds},
                          {"p95_seconds", m.p95_seconds},
                          {"extraction_seconds", m.extraction_seconds},
                          {"matching_seconds", m.matching_seconds},
                          {"setup_seconds", m.setup_seconds},
                          {"gallery_extractions", m.gallery_extractions},
                          {"probe_extractions", m.probe_extractions},
                          {"window_forwards", m.window_forwards}});
  }
  return j.dump(2);
}

BenchReport bench_matching(const std::vector<FeatureMapd>& gallery_images, const std::vector<FeatureMapd>& probe_images,
                           const FcnParams& params, const BenchOptions& opts) {
  if (gallery_images.empty() || probe_images.empty()) throw std::invalid_argument("bench needs gallery and probe images");
  if (opts.window_stride < 1) throw std::invalid_argument("window stride must be positive");
  if (opts.recompute_probes < 0) throw std::invalid_argument("recompute probe count must be nonnegative");
  BenchReport r;
  r.gallery_size = static_cast<int>(gallery_images.size());
  r.probe_count = static_cast<int>(probe_images.size());
  r.workers = opts.workers;
  r.seed = opts.seed;
  r.network = params.config.to_string();
  r.recompute_probes = opts.recompute_probes > 0 ? std::min(opts.recompute_probes, r.probe_count) : r.probe_count;
  r.modes.push_back(run_dsr("dsr_single", gallery_images, probe_images, params, opts.single_scales, opts));
  r.modes.push_back(run_dsr("dsr_multi", gallery_images, probe_images, params, opts.multi_scales, opts));
  r.modes.push_back(run_recompute(gallery_images, probe_images, params, opts));
  return r;
}

}  // namespace dsr
