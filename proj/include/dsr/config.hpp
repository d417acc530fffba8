#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <utility>
#include <set>
#include <string>
#include <vector>

#include "dsr/feature_map.hpp"
#include "dsr/sparse_solver.hpp"

namespace dsr {

/// "1,2,3" -> {1, 2, 3}. Throws std::invalid_argument on junk or an empty list.
std::set<int> parse_scales(const std::string& text);
std::string format_scales(const std::set<int>& scales);

/// Run configuration. Keys use dotted names; a config file is a JSON object
/// whose nested objects map onto the dotted prefix ({"solver": {"tol_kkt": ..}}).
///
///   beta             0.4          lasso weight (alias: solver.beta)
///   scales           1,2,3        block scales for matching
///   normalization    none         none | unit_l2
///   solver.tol_kkt   1e-8
///   solver.max_iters 1000
///   train.lr         1e-3         fine-tuning learning rate
///   train.seed       0
///   train.margin     -1           negative: 2 x network output channels
///   train.epochs     5            fine-tuning epochs
///   train.scales     1            block scales used during fine-tuning
///   pretrain.epochs  0            identification pre-training epochs
///   pretrain.lr      0.01
///   fcn.layers       c8,p,c16,p,c16
///   workers          1
///   seed             0
struct Config {
  double beta = kDefaultBeta;
  std::set<int> scales{1, 2, 3};
  Normalization normalization = Normalization::none;
  SolverOptions solver;
  double train_lr = 1e-3;
  std::uint64_t train_seed = 0;
  double train_margin = -1.0;
  int train_epochs = 5;
  std::set<int> train_scales{1};
  int pretrain_epochs = 0;
  double pretrain_lr = 0.01;
  std::string fcn_layers = "c8,p,c16,p,c16";
  int workers = 1;
  std::uint64_t seed = 0;

  static const std::vector<std::string>& keys();

  /// Sets one key from its text form; validates the result.
  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;

  /// Applies every key found in a JSON object (text form). Unknown keys and
  /// ill-typed values throw FormatError.
  void merge_json(const std::string& text);
  void merge_file(const std::filesystem::path& path);

  std::string to_json() const;
  void validate() const;
};

/// Built-in defaults, then the config file (if any), then command-line
/// overrides in order. Bad override values throw std::invalid_argument.
Config resolve_config(const std::optional<std::filesystem::path>& file,
                      const std::vector<std::pair<std::string, std::string>>& overrides);

}  // namespace dsr
