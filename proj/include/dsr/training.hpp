#pragma once

#include <cstdint>
#include <set>
#include <vector>

#include "dsr/fcn.hpp"
#include "dsr/learning.hpp"
#include "dsr/sparse_solver.hpp"

namespace dsr {

struct TrainOptions {
  double beta = kDefaultBeta;
  // Repulsion for alpha = -1 pairs stops once the mean per-block residual
  // reaches this value. Negative means 2 * (network output channels).
  double margin = -1.0;
  std::set<int> scales{1};
  SolverOptions solver;

  double effective_margin(const FcnParams& params) const {
    return margin >= 0 ? margin : 2.0 * params.config.output_channels();
  }
};

/// Probe and gallery inputs with label +1 (same identity) or -1.
struct VerificationPair {
  FeatureMapd probe;
  FeatureMapd gallery;
  int alpha = 1;
};

struct TrainState {
  FcnParams params;
  double learning_rate = 1e-3;
  int step = 0;
  std::vector<double> loss_history;
  int solver_warnings = 0;  // steps whose sparse codes did not converge
};

struct PairEvaluation {
  double loss = 0;            // margin-clipped verification loss
  double residual = 0;        // ||X - YW||_F^2
  Index probe_blocks = 0;
  Matrix<double> codes;       // W
  bool converged = true;
  FcnGradients grads;
};

/// Forward pass for both inputs, sparse codes (unless `fixed_codes` is
/// given), loss, and parameter gradients with W held constant.
PairEvaluation evaluate_pair(const FcnParams& params, const VerificationPair& pair, const TrainOptions& opts,
                             const Matrix<double>* fixed_codes = nullptr);

/// One alternating step: solve W with the network fixed, then one SGD step
/// on the network with W fixed. The loss before the update is recorded.
TrainState alternating_train_step(const VerificationPair& pair, TrainState state, const TrainOptions& opts);

/// Runs `epochs` passes of alternating steps over the pairs in a seeded order.
TrainState fine_tune(const std::vector<VerificationPair>& pairs, TrainState state, const TrainOptions& opts, int epochs,
                     std::uint64_t seed);

/// Mean per-block residual ||X - YW||_F^2 / N over the pairs labelled
/// `alpha`. Calibrates the repulsion margin against the current network.
double mean_pair_distance(const FcnParams& params, const std::vector<VerificationPair>& pairs, int alpha,
                          const TrainOptions& opts);

struct LabeledImage {
  FeatureMapd image;
  int label = 0;  // 0..K-1
};

struct PretrainOptions {
  int epochs = 10;
  double learning_rate = 0.01;
  std::uint64_t seed = 0;
};

struct PretrainResult {
  FcnParams params;  // conv stack only; the classifier head is dropped
  std::vector<double> epoch_loss;
  double train_accuracy = 0;
};

/// Identification pre-training: conv stack, flatten, linear layer and
/// softmax cross-entropy, trained by per-sample SGD. The head starts at zero.
PretrainResult pretrain_identification(const std::vector<LabeledImage>& data, FcnParams init,
                                       const PretrainOptions& opts);

}  // namespace dsr
