#include "dsr/fcn.hpp"

#include <fstream>
#include <random>
#include <sstream>

#include "dsr/binary_io.hpp"

namespace dsr {

FcnConfig FcnConfig::desk_default(int input_channels) {
  using K = LayerSpec::Kind;
  return {input_channels, {{K::conv, 8}, {K::pool, 0}, {K::conv, 16}, {K::pool, 0}, {K::conv, 16}}};
}

FcnConfig FcnConfig::parse(const std::string& layers, int input_channels) {
  FcnConfig cfg;
  cfg.input_channels = input_channels;
  std::stringstream ss(layers);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok == "p") {
      cfg.layers.push_back({LayerSpec::Kind::pool, 0});
    } else if (tok.size() > 1 && tok[0] == 'c') {
      int out = 0;
      try {
        out = std::stoi(tok.substr(1));
      } catch (const std::exception&) {
        throw std::invalid_argument("bad conv layer '" + tok + "'");
      }
      cfg.layers.push_back({LayerSpec::Kind::conv, out});
    } else {
      throw std::invalid_argument("bad layer token '" + tok + "' (expected cN or p)");
    }
  }
  cfg.validate();
  return cfg;
}

std::string FcnConfig::to_string() const {
  std::string s;
  for (const auto& l : layers) {
    if (!s.empty()) s += ',';
    s += l.kind == LayerSpec::Kind::pool ? std::string("p") : "c" + std::to_string(l.out_channels);
  }
  return s;
}

int FcnConfig::pool_count() const {
  return static_cast<int>(std::count_if(layers.begin(), layers.end(),
                                        [](const LayerSpec& l) { return l.kind == LayerSpec::Kind::pool; }));
}

int FcnConfig::output_channels() const {
  int c = input_channels;
  for (const auto& l : layers) {
    if (l.kind == LayerSpec::Kind::conv) c = l.out_channels;
  }
  return c;
}

std::pair<Index, Index> FcnConfig::output_size(Index width, Index height) const {
  for (const auto& l : layers) {
    if (l.kind == LayerSpec::Kind::pool) {
      width /= 2;
      height /= 2;
    }
  }
  return {width, height};
}

void FcnConfig::validate() const {
  if (input_channels < 1) throw std::invalid_argument("network input channels must be positive");
  bool conv = false, pool = false;
  for (const auto& l : layers) {
    if (l.kind == LayerSpec::Kind::conv) {
      if (l.out_channels < 1) throw std::invalid_argument("conv layer needs a positive channel count");
      conv = true;
    } else {
      pool = true;
    }
  }
  if (!conv || !pool) throw std::invalid_argument("network needs at least one conv and one pool layer");
}

void FcnParams::validate() const {
  config.validate();
  size_t k = 0;
  int in = config.input_channels;
  for (const auto& l : config.layers) {
    if (l.kind != LayerSpec::Kind::conv) continue;
    if (k >= convs.size()) throw std::invalid_argument("missing conv parameters");
    const auto& c = convs[k++];
    if (c.weights.rows() != l.out_channels || c.weights.cols() != 9 * in || c.bias.size() != l.out_channels) {
      throw std::invalid_argument("conv parameter shapes do not match the network config");
    }
    if (!c.weights.allFinite() || !c.bias.allFinite()) throw std::invalid_argument("non-finite network parameters");
    in = l.out_channels;
  }
  if (k != convs.size()) throw std::invalid_argument("extra conv parameters");
}

Index FcnParams::parameter_count() const {
  Index n = 0;
  for (const auto& c : convs) n += c.weights.size() + c.bias.size();
  return n;
}

FcnParams init_params(const FcnConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  FcnParams p{config, {}};
  int in = config.input_channels;
  for (const auto& l : config.layers) {
    if (l.kind != LayerSpec::Kind::conv) continue;
    std::normal_distribution<double> n(0.0, std::sqrt(2.0 / (9.0 * in)));
    ConvParams c{Matrix<double>(l.out_channels, 9 * in), Vector<double>::Zero(l.out_channels)};
    for (Index i = 0; i < c.weights.size(); ++i) c.weights.data()[i] = n(rng);
    p.convs.push_back(std::move(c));
    in = l.out_channels;
  }
  return p;
}

namespace {

Matrix<double> im2col(const Matrix<double>& in, Index width, Index height) {
  const Index ch = in.rows();
  Matrix<double> cols = Matrix<double>::Zero(9 * ch, width * height);
  for (Index r = 0; r < height; ++r) {
    for (Index c = 0; c < width; ++c) {
      const Index cell = r * width + c;
      for (Index ky = 0; ky < 3; ++ky) {
        const Index sr = r + ky - 1;
        if (sr < 0 || sr >= height) continue;
        for (Index kx = 0; kx < 3; ++kx) {
          const Index sc = c + kx - 1;
          if (sc < 0 || sc >= width) continue;
          cols.block((ky * 3 + kx) * ch, cell, ch, 1) = in.col(sr * width + sc);
        }
      }
    }
  }
  return cols;
}

Matrix<double> col2im(const Matrix<double>& cols, Index ch, Index width, Index height) {
  Matrix<double> out = Matrix<double>::Zero(ch, width * height);
  for (Index r = 0; r < height; ++r) {
    for (Index c = 0; c < width; ++c) {
      const Index cell = r * width + c;
      for (Index ky = 0; ky < 3; ++ky) {
        const Index sr = r + ky - 1;
        if (sr < 0 || sr >= height) continue;
        for (Index kx = 0; kx < 3; ++kx) {
          const Index sc = c + kx - 1;
          if (sc < 0 || sc >= width) continue;
          out.col(sr * width + sc) += cols.block((ky * 3 + kx) * ch, cell, ch, 1);
        }
      }
    }
  }
  return out;
}

}  // namespace

FeatureMapd fcn_forward(const FeatureMapd& input, const FcnParams& params, ForwardTrace* trace) {
  input.validate();
  if (input.channels() != params.config.input_channels) {
    throw std::invalid_argument("input has " + std::to_string(input.channels()) + " channels, network expects " +
                                std::to_string(params.config.input_channels));
  }
  const Index need = Index(1) << params.config.pool_count();
  if (input.width() < need || input.height() < need) {
    throw std::invalid_argument("input " + std::to_string(input.width()) + "x" + std::to_string(input.height()) +
                                " is too small for " + std::to_string(params.config.pool_count()) +
                                " pooling layers (needs at least " + std::to_string(need) + ")");
  }
  if (trace) trace->layers.clear();

  Matrix<double> act = input.data();
  Index w = input.width(), h = input.height();
  size_t conv_index = 0;
  for (const auto& spec : params.config.layers) {
    ForwardTrace::Layer rec;
    rec.in_width = w;
    rec.in_height = h;
    rec.in_channels = act.rows();
    if (spec.kind == LayerSpec::Kind::conv) {
      const ConvParams& cp = params.convs.at(conv_index++);
      Matrix<double> cols = im2col(act, w, h);
      Matrix<double> pre = cp.weights * cols;
      pre.colwise() += cp.bias;
      act = pre.cwiseMax(0.0);
      if (trace) {
        rec.columns = std::move(cols);
        rec.pre_activation = std::move(pre);
      }
    } else {
      const Index ow = w / 2, oh = h / 2, ch = act.rows();
      Matrix<double> out(ch, ow * oh);
      if (trace) rec.argmax.resize(static_cast<size_t>(ch * ow * oh));
      for (Index r = 0; r < oh; ++r) {
        for (Index c = 0; c < ow; ++c) {
          const Index o = r * ow + c;
          const Index cand[4] = {(2 * r) * w + 2 * c, (2 * r) * w + 2 * c + 1, (2 * r + 1) * w + 2 * c,
                                 (2 * r + 1) * w + 2 * c + 1};
          for (Index k = 0; k < ch; ++k) {
            Index best = cand[0];
            for (int q = 1; q < 4; ++q) {
              if (act(k, cand[q]) > act(k, best)) best = cand[q];
            }
            out(k, o) = act(k, best);
            if (trace) rec.argmax[static_cast<size_t>(o * ch + k)] = best;
          }
        }
      }
      act = std::move(out);
      w = ow;
      h = oh;
    }
    if (trace) trace->layers.push_back(std::move(rec));
  }
  FeatureMapd out(w, h, std::move(act), input.source_id());
  return out;
}

FcnGradients FcnGradients::zeros_like(const FcnParams& params) {
  FcnGradients g;
  for (const auto& c : params.convs) {
    g.convs.push_back({Matrix<double>::Zero(c.weights.rows(), c.weights.cols()), Vector<double>::Zero(c.bias.size())});
  }
  return g;
}

FcnGradients& FcnGradients::operator+=(const FcnGradients& other) {
  if (convs.size() != other.convs.size()) throw std::invalid_argument("gradient shapes differ");
  for (size_t i = 0; i < convs.size(); ++i) {
    convs[i].weights += other.convs[i].weights;
    convs[i].bias += other.convs[i].bias;
  }
  return *this;
}

FcnGradients fcn_backward(const ForwardTrace& trace, const FcnParams& params, const Matrix<double>& output_grad,
                          Matrix<double>* input_grad) {
  if (trace.layers.size() != params.config.layers.size()) {
    throw std::invalid_argument("forward trace does not match the network");
  }
  FcnGradients grads = FcnGradients::zeros_like(params);
  Matrix<double> g = output_grad;
  size_t conv_index = params.convs.size();
  for (size_t li = trace.layers.size(); li-- > 0;) {
    const auto& spec = params.config.layers[li];
    const auto& rec = trace.layers[li];
    if (spec.kind == LayerSpec::Kind::conv) {
      const ConvParams& cp = params.convs[--conv_index];
      if (g.rows() != cp.weights.rows() || g.cols() != rec.columns.cols()) {
        throw std::invalid_argument("output gradient shape does not match the network output");
      }
      const Matrix<double> dpre = g.cwiseProduct((rec.pre_activation.array() > 0.0).cast<double>().matrix());
      grads.convs[conv_index].weights.noalias() = dpre * rec.columns.transpose();
      grads.convs[conv_index].bias = dpre.rowwise().sum();
      if (li == 0 && !input_grad) break;
      const Matrix<double> dcols = cp.weights.transpose() * dpre;
      g = col2im(dcols, rec.in_channels, rec.in_width, rec.in_height);
    } else {
      const Index ch = rec.in_channels;
      if (g.rows() != ch || static_cast<size_t>(g.size()) != rec.argmax.size()) {
        throw std::invalid_argument("output gradient shape does not match the network output");
      }
      Matrix<double> up = Matrix<double>::Zero(ch, rec.in_width * rec.in_height);
      for (Index o = 0; o < g.cols(); ++o) {
        for (Index k = 0; k < ch; ++k) up(k, rec.argmax[static_cast<size_t>(o * ch + k)]) += g(k, o);
      }
      g = std::move(up);
    }
  }
  if (input_grad) *input_grad = std::move(g);
  return grads;
}

void sgd_update(FcnParams& params, const FcnGradients& grads, double lr) {
  if (grads.convs.size() != params.convs.size()) throw std::invalid_argument("gradient shapes differ");
  for (size_t i = 0; i < params.convs.size(); ++i) {
    params.convs[i].weights -= lr * grads.convs[i].weights;
    params.convs[i].bias -= lr * grads.convs[i].bias;
  }
}

// -- checkpoint ---------------------------------------------------------------

namespace {

void put_shape(std::ostream& out, std::initializer_list<std::uint32_t> dims) {
  binio::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(dims.size()));
  for (auto d : dims) binio::put_le<std::uint32_t>(out, d);
}

void expect_shape(std::istream& in, std::initializer_list<std::uint32_t> dims) {
  const auto rank = binio::get_le<std::uint32_t>(in, "tensor rank");
  if (rank != dims.size()) throw FormatError("checkpoint tensor has rank " + std::to_string(rank));
  for (auto d : dims) {
    if (binio::get_le<std::uint32_t>(in, "tensor dims") != d) {
      throw FormatError("checkpoint tensor shape does not match its layer");
    }
  }
}

double checked_value(std::istream& in) {
  const float v = binio::get_f32(in, "checkpoint tensor");
  if (!std::isfinite(v)) throw FormatError("checkpoint contains a non-finite value");
  return v;
}

}  // namespace

void save_checkpoint(std::ostream& out, const FcnParams& params) {
  params.validate();
  out.write("FCNP", 4);
  binio::put_le<std::uint16_t>(out, kCheckpointVersion);
  binio::put_le<std::uint16_t>(out, static_cast<std::uint16_t>(params.config.input_channels));
  binio::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(params.config.layers.size()));
  size_t k = 0;
  int in = params.config.input_channels;
  for (const auto& l : params.config.layers) {
    binio::put_le<std::uint8_t>(out, static_cast<std::uint8_t>(l.kind));
    if (l.kind != LayerSpec::Kind::conv) continue;
    const auto& c = params.convs[k++];
    const auto o = static_cast<std::uint32_t>(l.out_channels), i = static_cast<std::uint32_t>(in);
    put_shape(out, {o, i, 3, 3});
    for (Index oo = 0; oo < l.out_channels; ++oo)
      for (Index ii = 0; ii < in; ++ii)
        for (Index kk = 0; kk < 9; ++kk) binio::put_f32(out, static_cast<float>(c.weights(oo, kk * in + ii)));
    put_shape(out, {o});
    for (Index oo = 0; oo < l.out_channels; ++oo) binio::put_f32(out, static_cast<float>(c.bias(oo)));
    in = l.out_channels;
  }
  if (!out) throw std::runtime_error("failed writing checkpoint stream");
}

void save_checkpoint(const std::filesystem::path& path, const FcnParams& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  save_checkpoint(out, params);
}

FcnParams load_checkpoint(std::istream& in) {
  binio::expect_magic(in, "FCNP");
  const auto version = binio::get_le<std::uint16_t>(in, "version");
  if (version != kCheckpointVersion) throw FormatError("unsupported checkpoint version " + std::to_string(version));
  FcnParams p;
  p.config.input_channels = binio::get_le<std::uint16_t>(in, "input channels");
  const auto count = binio::get_le<std::uint32_t>(in, "layer count");
  if (p.config.input_channels == 0 || count == 0 || count > 4096) throw FormatError("implausible checkpoint header");
  int ch = p.config.input_channels;
  for (std::uint32_t li = 0; li < count; ++li) {
    const auto kind = binio::get_le<std::uint8_t>(in, "layer kind");
    if (kind == static_cast<std::uint8_t>(LayerSpec::Kind::pool)) {
      p.config.layers.push_back({LayerSpec::Kind::pool, 0});
      continue;
    }
    if (kind != static_cast<std::uint8_t>(LayerSpec::Kind::conv)) throw FormatError("unknown checkpoint layer kind");
    const auto rank = binio::get_le<std::uint32_t>(in, "tensor rank");
    if (rank != 4) throw FormatError("conv weight tensor must have rank 4");
    const auto out_ch = binio::get_le<std::uint32_t>(in, "tensor dims");
    const auto in_ch = binio::get_le<std::uint32_t>(in, "tensor dims");
    const auto kh = binio::get_le<std::uint32_t>(in, "tensor dims");
    const auto kw = binio::get_le<std::uint32_t>(in, "tensor dims");
    if (in_ch != static_cast<std::uint32_t>(ch) || kh != 3 || kw != 3 || out_ch == 0 || out_ch > 65535) {
      throw FormatError("conv weight tensor shape does not chain with the previous layer");
    }
    ConvParams c{Matrix<double>(out_ch, 9 * in_ch), Vector<double>(out_ch)};
    for (Index oo = 0; oo < out_ch; ++oo)
      for (Index ii = 0; ii < in_ch; ++ii)
        for (Index kk = 0; kk < 9; ++kk) c.weights(oo, kk * in_ch + ii) = checked_value(in);
    expect_shape(in, {out_ch});
    for (Index oo = 0; oo < out_ch; ++oo) c.bias(oo) = checked_value(in);
    p.config.layers.push_back({LayerSpec::Kind::conv, static_cast<int>(out_ch)});
    p.convs.push_back(std::move(c));
    ch = static_cast<int>(out_ch);
  }
  binio::expect_end(in);
  try {
    p.validate();
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("invalid checkpoint: ") + e.what());
  }
  return p;
}

FcnParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint " + path.string());
  return load_checkpoint(in);
}

}  // namespace dsr
