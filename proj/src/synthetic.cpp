#include "dsr/synthetic.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <random>
#include <stdexcept>

namespace dsr {

namespace {

using Rng = std::mt19937_64;

Index parse_dim(const std::string& spec, const std::string& text) {
  Index v = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size() || v < 1 || v > 65535) {
    throw std::invalid_argument("bad synthetic spec '" + spec + "': dimension '" + text + "'");
  }
  return v;
}

double parse_real(const std::string& spec, const std::string& text) {
  double v = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size() || !std::isfinite(v)) {
    throw std::invalid_argument("bad synthetic spec '" + spec + "': value '" + text + "'");
  }
  return v;
}

// Shifts rows by `dy` (positive moves content down), replicating the edge row.
FeatureMapd shift_rows(const FeatureMapd& fm, Index dy) {
  FeatureMapd out(fm.width(), fm.height(), fm.channels());
  for (Index r = 0; r < fm.height(); ++r) {
    const Index src = std::clamp<Index>(r - dy, 0, fm.height() - 1);
    for (Index c = 0; c < fm.width(); ++c) out.fiber(c, r) = fm.fiber(c, src);
  }
  return out;
}

FeatureMapd noisy_shot(const FeatureMapd& proto, int max_shift, double sigma, Rng& rng) {
  std::uniform_int_distribution<int> shift(-max_shift, max_shift);
  std::normal_distribution<double> noise(0.0, sigma);
  FeatureMapd shot = shift_rows(proto, shift(rng));
  for (Index i = 0; i < shot.data().size(); ++i) {
    double& v = shot.data().data()[i];
    v = std::max(0.0, v + noise(rng));
  }
  return shot;
}

}  // namespace

FeatureMapd generate_synthetic(const std::string& spec, std::uint64_t seed) {
  const auto colon = spec.find(':');
  const std::string dims = spec.substr(0, colon);
  const std::string fill = colon == std::string::npos ? "noise=1" : spec.substr(colon + 1);
  const auto x1 = dims.find('x');
  const auto x2 = x1 == std::string::npos ? std::string::npos : dims.find('x', x1 + 1);
  if (x2 == std::string::npos) throw std::invalid_argument("bad synthetic spec '" + spec + "' (want WxHxC)");
  const Index w = parse_dim(spec, dims.substr(0, x1));
  const Index h = parse_dim(spec, dims.substr(x1 + 1, x2 - x1 - 1));
  const Index c = parse_dim(spec, dims.substr(x2 + 1));

  FeatureMapd fm(w, h, c);
  fm.set_source_id("synthetic:" + spec);
  if (fill.rfind("const=", 0) == 0) {
    fm.data().setConstant(parse_real(spec, fill.substr(6)));
  } else if (fill.rfind("noise=", 0) == 0) {
    const double sigma = parse_real(spec, fill.substr(6));
    if (sigma < 0) throw std::invalid_argument("bad synthetic spec '" + spec + "': negative noise");
    Rng rng(seed);
    std::normal_distribution<double> n(0.0, sigma);
    for (Index i = 0; i < fm.data().size(); ++i) fm.data().data()[i] = sigma == 0 ? 0.0 : n(rng);
  } else if (fill == "ramp") {
    for (Index ch = 0; ch < c; ++ch) {
      for (Index r = 0; r < h; ++r) {
        for (Index col = 0; col < w; ++col) fm.at(col, r, ch) = static_cast<double>(col + w * r + w * h * ch);
      }
    }
  } else {
    throw std::invalid_argument("bad synthetic spec '" + spec + "': unknown fill '" + fill + "'");
  }
  return fm;
}

FeatureMapd downsample2(const FeatureMapd& fm) {
  if (fm.width() < 2 || fm.height() < 2) throw std::invalid_argument("map too small to downsample");
  FeatureMapd out(fm.width() / 2, fm.height() / 2, fm.channels());
  for (Index r = 0; r < out.height(); ++r) {
    for (Index c = 0; c < out.width(); ++c) {
      out.fiber(c, r) = 0.25 * (fm.fiber(2 * c, 2 * r) + fm.fiber(2 * c + 1, 2 * r) + fm.fiber(2 * c, 2 * r + 1) +
                                fm.fiber(2 * c + 1, 2 * r + 1));
    }
  }
  return out;
}

FeatureMapd crop(const FeatureMapd& fm, Index col0, Index row0, Index cols, Index rows) {
  if (col0 < 0 || row0 < 0 || cols < 1 || rows < 1 || col0 + cols > fm.width() || row0 + rows > fm.height()) {
    throw std::out_of_range("crop window lies outside the feature map");
  }
  FeatureMapd out(cols, rows, fm.channels());
  for (Index r = 0; r < rows; ++r) {
    for (Index c = 0; c < cols; ++c) out.fiber(c, r) = fm.fiber(col0 + c, row0 + r);
  }
  return out;
}

SyntheticBenchmark make_benchmark(const BenchmarkOptions& o) {
  if (o.identities < 2 || o.shots < 1 || o.parts < 1 || o.height < o.parts || o.width < 1 || o.channels < 1) {
    throw std::invalid_argument("benchmark options out of range");
  }
  Rng rng(o.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);

  // Shared palette so identities overlap in some bands.
  const int palette_size = std::max(4, o.identities / 2);
  std::vector<Vector<double>> palette;
  for (int p = 0; p < palette_size; ++p) {
    Vector<double> col(o.channels);
    for (Index ch = 0; ch < o.channels; ++ch) col(ch) = unit(rng) < 0.3 ? 1.0 + unit(rng) : 0.1 * unit(rng);
    palette.push_back(col);
  }

  SyntheticBenchmark b;
  for (int id = 0; id < o.identities; ++id) {
    const std::string person = "p" + std::to_string(id);
    FeatureMapd proto(o.width, o.height, o.channels);
    std::vector<int> colour(static_cast<size_t>(o.parts));
    for (auto& c : colour) c = static_cast<int>(rng() % static_cast<std::uint64_t>(palette_size));
    for (Index r = 0; r < o.height; ++r) {
      const size_t band = static_cast<size_t>(r * o.parts / o.height);
      for (Index c = 0; c < o.width; ++c) {
        Vector<double> tex(o.channels);
        for (Index ch = 0; ch < o.channels; ++ch) tex(ch) = std::abs(normal(rng));
        proto.fiber(c, r) = palette[static_cast<size_t>(colour[band])] + o.texture * tex;
      }
    }
    for (int s = 0; s < o.shots; ++s) {
      b.gallery.push_back({person, s, person + "_" + std::to_string(s) + ".fmap"});
      FeatureMapd shot = noisy_shot(proto, o.max_shift, o.shot_noise, rng);
      shot.set_source_id(person + "_" + std::to_string(s));
      b.gallery_maps.push_back(std::move(shot));
    }

    FeatureMapd full = noisy_shot(proto, o.max_shift, o.probe_noise, rng);
    FeatureMapd probe = full;
    const bool do_crop = o.degradation != ProbeDegradation::downsample;
    const bool do_down = o.degradation == ProbeDegradation::downsample ||
                         (o.degradation == ProbeDegradation::crop_downsample && unit(rng) < 0.5);
    if (do_crop) {
      const Index min_rows = std::max<Index>(do_down ? 6 : 3, static_cast<Index>(std::ceil(o.min_crop * o.height)));
      const Index rows = std::min(o.height, min_rows + static_cast<Index>(rng() % static_cast<std::uint64_t>(
                                                           std::max<Index>(1, o.height - min_rows + 1))));
      const Index row0 = static_cast<Index>(rng() % static_cast<std::uint64_t>(o.height - rows + 1));
      probe = crop(probe, 0, row0, o.width, rows);
    }
    if (do_down) probe = downsample2(probe);
    probe.set_source_id(person + "_probe");
    b.full_probes.push_back(std::move(full));
    b.probes.push_back({person + "_probe", person, std::move(probe)});
  }
  return b;
}

LabeledImageSet make_image_set(const ImageSetOptions& o) {
  if (o.identities < 2 || o.images_per_identity < 1 || o.width < 1 || o.height < 4) {
    throw std::invalid_argument("image set options out of range");
  }
  Rng rng(o.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, o.noise);
  constexpr int kBands = 3;

  std::vector<std::array<Vector<double>, kBands>> colours(static_cast<size_t>(o.identities));
  for (auto& id : colours) {
    for (auto& band : id) band = Vector<double>::NullaryExpr(3, [&] { return unit(rng); });
  }
  LabeledImageSet set;
  for (int k = 0; k < o.images_per_identity; ++k) {
    for (int id = 0; id < o.identities; ++id) {
      const Index jitter = static_cast<Index>(rng() % 3) - 1;
      FeatureMapd img(o.width, o.height, 3);
      for (Index r = 0; r < o.height; ++r) {
        const Index rr = std::clamp<Index>(r + jitter, 0, o.height - 1);
        const size_t band = static_cast<size_t>(rr * kBands / o.height);
        for (Index c = 0; c < o.width; ++c) {
          for (Index ch = 0; ch < 3; ++ch) img.at(c, r, ch) = colours[static_cast<size_t>(id)][band](ch) + noise(rng);
        }
      }
      set.images.push_back(std::move(img));
      set.labels.push_back(id);
    }
  }
  return set;
}

}  // namespace dsr
