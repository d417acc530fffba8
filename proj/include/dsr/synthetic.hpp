#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dsr/feature_map.hpp"
#include "dsr/gallery.hpp"

namespace dsr {

/// "WxHxC[:const=V | :noise=S | :ramp]". Constant maps fill every entry with
/// V; noise draws N(0, S^2) from `seed`; ramp sets entry (col,row,ch) to
/// col + W*row + W*H*ch. The default fill is noise=1.
FeatureMapd generate_synthetic(const std::string& spec, std::uint64_t seed);

enum class ProbeDegradation { crop, downsample, crop_downsample };

struct BenchmarkOptions {
  int identities = 30;
  int shots = 3;             // gallery shots per identity
  Index width = 6;           // gallery map size in cells
  Index height = 12;
  Index channels = 16;
  int parts = 4;             // horizontal body bands per identity
  double texture = 0.3;      // per-cell identity texture relative to band colour
  double shot_noise = 1.2;   // per-shot appearance noise (std)
  double probe_noise = 1.2;
  int max_shift = 1;         // per-shot vertical misalignment in cells
  ProbeDegradation degradation = ProbeDegradation::crop_downsample;
  double min_crop = 0.5;     // cropped probes keep at least this fraction of the height
  std::uint64_t seed = 0;
};

struct Probe {
  std::string probe_id;
  std::string person_id;
  FeatureMapd map;
};

struct SyntheticBenchmark {
  std::vector<ManifestEntry> gallery;  // fmap paths are "<person>_<shot>.fmap"
  std::vector<FeatureMapd> gallery_maps;
  std::vector<FeatureMapd> full_probes;  // undegraded probe maps, one per identity
  std::vector<Probe> probes;             // degraded, one per identity
};

/// Identity prototypes built from coloured bands plus per-cell texture, all
/// non-negative. Gallery shots are shifted, noisy copies; probes are fresh
/// shots cropped (partial view) and/or 2x average-downsampled.
SyntheticBenchmark make_benchmark(const BenchmarkOptions& opts);

/// 2x2 average pooling with floor sizes.
FeatureMapd downsample2(const FeatureMapd& fm);

/// Rows [row0, row0 + rows) and columns [col0, col0 + cols).
FeatureMapd crop(const FeatureMapd& fm, Index col0, Index row0, Index cols, Index rows);

struct ImageSetOptions {
  int identities = 8;
  int images_per_identity = 6;
  Index width = 12;
  Index height = 24;
  double noise = 0.25;
  std::uint64_t seed = 0;
};

struct LabeledImageSet {
  std::vector<FeatureMapd> images;
  std::vector<int> labels;
};

/// Three-channel "pedestrian" images: per-identity colours for a few
/// horizontal bands, random vertical jitter and pixel noise.
LabeledImageSet make_image_set(const ImageSetOptions& opts);

}  // namespace dsr
