#pragma once

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>

#include "dsr/config.hpp"

namespace dsr::cli {

// Bad flag combinations found after parsing; exit code 2.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ExtractArgs {
  std::optional<std::filesystem::path> input;  // .fmap or binary .ppm/.pgm image
  std::optional<std::string> synthetic;
  std::optional<std::filesystem::path> checkpoint;
  std::optional<std::string> network;  // fresh He-initialized network from --seed
  std::filesystem::path out;
};

struct MatchArgs {
  std::filesystem::path probe;
  std::filesystem::path gallery;
  std::optional<std::filesystem::path> out;  // ranking CSV, stdout when absent
  std::optional<std::filesystem::path> scores;
};

struct EvalArgs {
  std::optional<std::filesystem::path> trials;
  bool synthetic = false;
  int identities = 30;
  int repeats = 1;
  int shots = 0;  // 0: every shot
  std::string method = "dsr";
  std::optional<std::string> resize;  // WxH for the resizing baseline
  bool open_set = false;
  std::filesystem::path out_dir = ".";
};

struct TrainArgs {
  std::optional<std::filesystem::path> pairs;
  std::optional<int> synthetic_identities;
  std::optional<std::filesystem::path> init;
  std::filesystem::path out;
  std::optional<std::filesystem::path> loss_csv;
  std::optional<std::filesystem::path> pretrained_out;
  std::optional<double> margin_factor;  // margin = factor x mean impostor distance before fine-tuning
};

struct BenchArgs {
  std::optional<int> synthetic_identities;
  std::optional<std::filesystem::path> images;  // {"gallery": [...], "probes": [...]}
  std::optional<std::filesystem::path> checkpoint;
  std::optional<std::string> network;
  int window_stride = 16;
  int recompute_probes = 0;
  std::optional<std::filesystem::path> out;
};

struct SolveArgs {
  std::filesystem::path problem;
  std::optional<std::filesystem::path> out;
};

int run_extract(const ExtractArgs& args, const Config& cfg);
int run_match(const MatchArgs& args, const Config& cfg);
int run_eval(const EvalArgs& args, const Config& cfg);
int run_train(const TrainArgs& args, const Config& cfg);
int run_bench(const BenchArgs& args, const Config& cfg);
int run_solve(const SolveArgs& args, const Config& cfg);

}  // namespace dsr::cli
