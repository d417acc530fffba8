#include "dsr/fmap_io.hpp"

#include <fstream>
#include <limits>

#include "dsr/binary_io.hpp"

namespace dsr {

void write_fmap(std::ostream& out, const FeatureMapd& fm) {
  fm.validate();
  constexpr Index kMaxDim = std::numeric_limits<std::uint16_t>::max();
  if (fm.width() > kMaxDim || fm.height() > kMaxDim) {
    throw std::invalid_argument("feature map too large for the fmap format");
  }
  out.write("FMAP", 4);
  binio::put_le<std::uint16_t>(out, kFmapVersion);
  binio::put_le<std::uint16_t>(out, 0);
  binio::put_le<std::uint16_t>(out, static_cast<std::uint16_t>(fm.width()));
  binio::put_le<std::uint16_t>(out, static_cast<std::uint16_t>(fm.height()));
  binio::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(fm.channels()));
  const double* p = fm.data().data();
  for (Index i = 0; i < fm.data().size(); ++i) binio::put_f32(out, static_cast<float>(p[i]));
  if (!out) throw std::runtime_error("failed writing fmap stream");
}

void write_fmap(const std::filesystem::path& path, const FeatureMapd& fm) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write_fmap(out, fm);
}

FeatureMapd read_fmap(std::istream& in) {
  binio::expect_magic(in, "FMAP");
  const auto version = binio::get_le<std::uint16_t>(in, "version");
  if (version != kFmapVersion) throw FormatError("unsupported fmap version " + std::to_string(version));
  if (binio::get_le<std::uint16_t>(in, "reserved") != 0) throw FormatError("fmap reserved field is nonzero");
  const Index width = binio::get_le<std::uint16_t>(in, "width");
  const Index height = binio::get_le<std::uint16_t>(in, "height");
  const Index channels = binio::get_le<std::uint32_t>(in, "channels");
  if (width == 0 || height == 0 || channels == 0) throw FormatError("fmap header has a zero dimension");

  Matrix<double> data(channels, width * height);
  double* p = data.data();
  for (Index i = 0; i < data.size(); ++i) {
    const float v = binio::get_f32(in, "fmap payload");
    if (!std::isfinite(v)) throw FormatError("fmap payload contains a non-finite value");
    p[i] = v;
  }
  binio::expect_end(in);
  return FeatureMapd(width, height, std::move(data));
}

FeatureMapd read_fmap(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open fmap file " + path.string());
  auto fm = read_fmap(in);
  fm.set_source_id(path.stem().string());
  return fm;
}

}  // namespace dsr
