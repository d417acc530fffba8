#pragma once

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "dsr/types.hpp"

namespace dsr {

/// Spatial w x h x d tensor. Stored as a d x (w*h) matrix whose column
/// `row * width + col` is the channel fiber of that cell, which is the same
/// memory order as the on-disk layout (row, col, channel-fastest).
template <typename Scalar>
class FeatureMap {
 public:
  FeatureMap() = default;

  FeatureMap(Index width, Index height, Index channels, std::string source_id = {})
      : width_(width), height_(height), source_id_(std::move(source_id)) {
    if (width <= 0 || height <= 0 || channels <= 0) {
      throw std::invalid_argument("feature map dimensions must be positive");
    }
    data_ = Matrix<Scalar>::Zero(channels, width * height);
  }

  FeatureMap(Index width, Index height, Matrix<Scalar> data, std::string source_id = {})
      : width_(width), height_(height), data_(std::move(data)), source_id_(std::move(source_id)) {
    validate();
  }

  Index width() const { return width_; }
  Index height() const { return height_; }
  Index channels() const { return data_.rows(); }
  Index cells() const { return width_ * height_; }
  const std::string& source_id() const { return source_id_; }
  void set_source_id(std::string id) { source_id_ = std::move(id); }

  const Matrix<Scalar>& data() const { return data_; }
  Matrix<Scalar>& data() { return data_; }

  Index cell_index(Index col, Index row) const { return row * width_ + col; }

  auto fiber(Index col, Index row) const { return data_.col(cell_index(col, row)); }
  auto fiber(Index col, Index row) { return data_.col(cell_index(col, row)); }

  Scalar& at(Index col, Index row, Index channel) { return data_(channel, cell_index(col, row)); }
  Scalar at(Index col, Index row, Index channel) const {
    return data_(channel, cell_index(col, row));
  }

  /// Throws std::invalid_argument when the shape or values break the invariants.
  void validate() const {
    if (width_ <= 0 || height_ <= 0 || data_.rows() <= 0) {
      throw std::invalid_argument("feature map dimensions must be positive");
    }
    if (data_.cols() != width_ * height_) {
      throw std::invalid_argument("feature map data length does not match width*height*channels");
    }
    if (!data_.allFinite()) {
      throw std::invalid_argument("feature map contains non-finite values");
    }
  }

 private:
  Index width_ = 0;
  Index height_ = 0;
  Matrix<Scalar> data_;
  std::string source_id_;
};

using FeatureMapd = FeatureMap<double>;

enum class Normalization { none, unit_l2 };

inline const char* to_string(Normalization n) { return n == Normalization::none ? "none" : "unit_l2"; }

inline Normalization parse_normalization(const std::string& s) {
  if (s == "none") return Normalization::none;
  if (s == "unit_l2") return Normalization::unit_l2;
  throw std::invalid_argument("unknown normalization '" + s + "'");
}

struct BlockTag {
  int scale = 1;
  Index col = 0;
  Index row = 0;
  friend bool operator==(const BlockTag&, const BlockTag&) = default;
};

template <typename Scalar>
struct Block {
  Vector<Scalar> vector;
  BlockTag tag;
};

/// Ordered block vectors of one channel count, stored column-wise so the
/// set can be used directly as a reconstruction dictionary.
template <typename Scalar>
class BlockSet {
 public:
  BlockSet() = default;
  BlockSet(Matrix<Scalar> vectors, std::vector<BlockTag> tags,
           Normalization normalization = Normalization::none)
      : vectors_(std::move(vectors)), tags_(std::move(tags)), normalization_(normalization) {
    if (static_cast<Index>(tags_.size()) != vectors_.cols()) {
      throw std::invalid_argument("block tag count does not match block count");
    }
  }

  Index channels() const { return vectors_.rows(); }
  Index size() const { return vectors_.cols(); }
  bool empty() const { return vectors_.cols() == 0; }

  const Matrix<Scalar>& matrix() const { return vectors_; }
  const std::vector<BlockTag>& tags() const { return tags_; }
  Normalization normalization() const { return normalization_; }

  /// Indices of all-zero blocks left unscaled by unit_l2 normalization.
  const std::vector<Index>& zero_blocks() const { return zero_blocks_; }

  Block<Scalar> block(Index i) const { return {vectors_.col(i), tags_.at(static_cast<size_t>(i))}; }

  Index count_at_scale(int scale) const {
    return std::count_if(tags_.begin(), tags_.end(), [&](const BlockTag& t) { return t.scale == scale; });
  }

 private:
  template <typename S>
  friend BlockSet<S> normalize(const BlockSet<S>&, Normalization);

  Matrix<Scalar> vectors_;
  std::vector<BlockTag> tags_;
  Normalization normalization_ = Normalization::none;
  std::vector<Index> zero_blocks_;
};

using BlockSetd = BlockSet<double>;

namespace detail {

template <typename Scalar, typename Out>
void pool_window(const FeatureMap<Scalar>& fm, Index col, Index row, int scale, Out&& out) {
  out.setZero();
  for (Index r = row; r < row + scale; ++r) {
    for (Index c = col; c < col + scale; ++c) out += fm.fiber(c, r);
  }
  if (scale > 1) out /= static_cast<Scalar>(scale * scale);
}

}  // namespace detail

/// One block per cell, row-major, each the channel fiber of its cell.
template <typename Scalar>
BlockSet<Scalar> divide_into_blocks(const FeatureMap<Scalar>& fm) {
  fm.validate();
  std::vector<BlockTag> tags;
  tags.reserve(static_cast<size_t>(fm.cells()));
  for (Index r = 0; r < fm.height(); ++r) {
    for (Index c = 0; c < fm.width(); ++c) tags.push_back({1, c, r});
  }
  return BlockSet<Scalar>(fm.data(), std::move(tags));
}

/// Channel-wise mean over the scale x scale window whose top-left cell is (col, row).
template <typename Scalar>
Block<Scalar> pool_block(const FeatureMap<Scalar>& fm, Index col, Index row, int scale) {
  if (scale < 1 || col < 0 || row < 0 || col + scale > fm.width() || row + scale > fm.height()) {
    throw std::out_of_range("pooling window lies outside the feature map");
  }
  Block<Scalar> b{Vector<Scalar>(fm.channels()), {scale, col, row}};
  detail::pool_window(fm, col, row, scale, b.vector);
  return b;
}

/// Every stride-1 window of every scale, average-pooled to one fiber.
/// Ordered by ascending scale, then row-major by window position.
template <typename Scalar>
BlockSet<Scalar> multiscale_blocks(const FeatureMap<Scalar>& fm, const std::set<int>& scales) {
  fm.validate();
  if (scales.empty()) throw std::invalid_argument("scale set is empty");
  const Index limit = std::min(fm.width(), fm.height());
  Index total = 0;
  for (int s : scales) {
    if (s < 1 || s > limit) {
      throw std::out_of_range("block scale " + std::to_string(s) + " does not fit a " +
                              std::to_string(fm.width()) + "x" + std::to_string(fm.height()) +
                              " feature map");
    }
    total += (fm.width() - s + 1) * (fm.height() - s + 1);
  }
  Matrix<Scalar> vectors(fm.channels(), total);
  std::vector<BlockTag> tags;
  tags.reserve(static_cast<size_t>(total));
  Index k = 0;
  for (int s : scales) {
    for (Index r = 0; r + s <= fm.height(); ++r) {
      for (Index c = 0; c + s <= fm.width(); ++c, ++k) {
        detail::pool_window(fm, c, r, s, vectors.col(k));
        tags.push_back({s, c, r});
      }
    }
  }
  return BlockSet<Scalar>(std::move(vectors), std::move(tags));
}

/// unit_l2 rescales every nonzero block to unit Euclidean norm. Zero blocks
/// are left as they are and reported through zero_blocks().
template <typename Scalar>
BlockSet<Scalar> normalize(const BlockSet<Scalar>& bs, Normalization mode) {
  if (mode == Normalization::none) return bs;
  BlockSet<Scalar> out = bs;
  out.normalization_ = mode;
  out.zero_blocks_.clear();
  for (Index i = 0; i < out.size(); ++i) {
    const Scalar n = out.vectors_.col(i).norm();
    if (n == Scalar(0)) {
      out.zero_blocks_.push_back(i);
    } else {
      out.vectors_.col(i) /= n;
    }
  }
  return out;
}

/// Inverse of divide_into_blocks for a scale-1 set.
template <typename Scalar>
FeatureMap<Scalar> to_feature_map(const BlockSet<Scalar>& bs, Index width, Index height) {
  if (bs.size() != width * height) {
    throw std::invalid_argument("block count does not match width*height");
  }
  FeatureMap<Scalar> fm(width, height, bs.channels());
  for (Index i = 0; i < bs.size(); ++i) {
    const BlockTag& t = bs.tags()[static_cast<size_t>(i)];
    if (t.scale != 1) throw std::invalid_argument("only scale-1 block sets map back to a feature map");
    fm.fiber(t.col, t.row) = bs.matrix().col(i);
  }
  return fm;
}

/// Adjoint of block extraction: scatters per-block gradients (d x M, one
/// column per tag) back onto the d x (w*h) cells of the source map. Pooled
/// blocks spread their gradient evenly over their window.
template <typename Scalar>
Matrix<Scalar> scatter_block_gradients(const Matrix<Scalar>& block_grads,
                                       const std::vector<BlockTag>& tags, Index width,
                                       Index height) {
  if (static_cast<Index>(tags.size()) != block_grads.cols()) {
    throw std::invalid_argument("gradient column count does not match block count");
  }
  Matrix<Scalar> grad = Matrix<Scalar>::Zero(block_grads.rows(), width * height);
  for (Index i = 0; i < block_grads.cols(); ++i) {
    const BlockTag& t = tags[static_cast<size_t>(i)];
    const Scalar w = Scalar(1) / static_cast<Scalar>(t.scale * t.scale);
    for (Index r = t.row; r < t.row + t.scale; ++r) {
      for (Index c = t.col; c < t.col + t.scale; ++c) grad.col(r * width + c) += w * block_grads.col(i);
    }
  }
  return grad;
}

}  // namespace dsr
