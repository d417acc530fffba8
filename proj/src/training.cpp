#include "dsr/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "dsr/feature_map.hpp"

namespace dsr {

PairEvaluation evaluate_pair(const FcnParams& params, const VerificationPair& pair, const TrainOptions& opts,
                             const Matrix<double>* fixed_codes) {
  detail::check_alpha(pair.alpha);
  ForwardTrace probe_trace, gallery_trace;
  const FeatureMapd probe_map = fcn_forward(pair.probe, params, &probe_trace);
  const FeatureMapd gallery_map = fcn_forward(pair.gallery, params, &gallery_trace);
  const BlockSetd probe = multiscale_blocks(probe_map, opts.scales);
  const BlockSetd gallery = multiscale_blocks(gallery_map, opts.scales);

  PairEvaluation ev;
  ev.probe_blocks = probe.size();
  if (fixed_codes) {
    ev.codes = *fixed_codes;
  } else {
    const CodeMatrix<double> codes = solve_batch(gallery, probe, opts.beta, opts.solver);
    ev.codes = codes.dense();
    ev.converged = codes.all_converged();
  }
  const Matrix<double>& x = probe.matrix();
  const Matrix<double>& y = gallery.matrix();
  ev.residual = (x - y * ev.codes).squaredNorm();

  const double cap = opts.effective_margin(params) * static_cast<double>(probe.size());
  const bool clipped = pair.alpha < 0 && ev.residual >= cap;
  ev.loss = clipped ? -cap + opts.beta * ev.codes.cwiseAbs().sum()
                    : verification_loss(x, y, ev.codes, pair.alpha, opts.beta);

  if (clipped) {
    ev.grads = FcnGradients::zeros_like(params);
    return ev;
  }
  const LossGradients<double> g = loss_gradients(x, y, ev.codes, pair.alpha);
  const Matrix<double> d_probe_map =
      scatter_block_gradients(g.d_probe, probe.tags(), probe_map.width(), probe_map.height());
  const Matrix<double> d_gallery_map =
      scatter_block_gradients(g.d_gallery, gallery.tags(), gallery_map.width(), gallery_map.height());
  ev.grads = fcn_backward(probe_trace, params, d_probe_map);
  ev.grads += fcn_backward(gallery_trace, params, d_gallery_map);
  return ev;
}

TrainState alternating_train_step(const VerificationPair& pair, TrainState state, const TrainOptions& opts) {
  const PairEvaluation ev = evaluate_pair(state.params, pair, opts);
  if (!std::isfinite(ev.loss)) throw NumericError("verification loss is not finite");
  if (!ev.converged) ++state.solver_warnings;
  if (state.learning_rate != 0.0) sgd_update(state.params, ev.grads, state.learning_rate);
  state.loss_history.push_back(ev.loss);
  ++state.step;
  return state;
}

TrainState fine_tune(const std::vector<VerificationPair>& pairs, TrainState state, const TrainOptions& opts, int epochs,
                     std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), size_t{0});
  for (int e = 0; e < epochs; ++e) {
    std::shuffle(order.begin(), order.end(), rng);
    for (size_t i : order) state = alternating_train_step(pairs[i], std::move(state), opts);
  }
  return state;
}

double mean_pair_distance(const FcnParams& params, const std::vector<VerificationPair>& pairs, int alpha,
                          const TrainOptions& opts) {
  detail::check_alpha(alpha);
  double total = 0;
  int count = 0;
  for (const auto& pair : pairs) {
    if (pair.alpha != alpha) continue;
    const BlockSetd probe = multiscale_blocks(fcn_forward(pair.probe, params), opts.scales);
    const BlockSetd gallery = multiscale_blocks(fcn_forward(pair.gallery, params), opts.scales);
    const CodeMatrix<double> codes = solve_batch(gallery, probe, opts.beta, opts.solver);
    total += (probe.matrix() - gallery.matrix() * codes.dense()).squaredNorm() / static_cast<double>(probe.size());
    ++count;
  }
  if (count == 0) throw std::invalid_argument("no pairs with the requested label");
  return total / count;
}

namespace {

struct Head {
  Matrix<double> weights;
  Vector<double> bias;
};

Vector<double> softmax(const Vector<double>& logits) {
  const Vector<double> e = (logits.array() - logits.maxCoeff()).exp();
  return e / e.sum();
}

}  // namespace

PretrainResult pretrain_identification(const std::vector<LabeledImage>& data, FcnParams init,
                                       const PretrainOptions& opts) {
  init.validate();
  if (data.empty()) throw std::invalid_argument("pre-training set is empty");
  std::set<int> labels;
  for (const auto& d : data) {
    if (d.label < 0) throw std::invalid_argument("class labels must be nonnegative");
    labels.insert(d.label);
    if (d.image.width() != data.front().image.width() || d.image.height() != data.front().image.height()) {
      throw std::invalid_argument("pre-training images must share one size");
    }
  }
  if (labels.size() < 2) throw std::invalid_argument("identification pre-training needs at least 2 classes");
  const Index classes = *labels.rbegin() + 1;

  const auto [ow, oh] = init.config.output_size(data.front().image.width(), data.front().image.height());
  const Index features = ow * oh * init.config.output_channels();
  Head head{Matrix<double>::Zero(classes, features), Vector<double>::Zero(classes)};

  PretrainResult result;
  result.params = std::move(init);
  std::mt19937_64 rng(opts.seed);
  std::vector<size_t> order(data.size());
  std::iota(order.begin(), order.end(), size_t{0});

  for (int epoch = 0; epoch < opts.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0;
    for (size_t i : order) {
      ForwardTrace trace;
      const FeatureMapd out = fcn_forward(data[i].image, result.params, &trace);
      const Eigen::Map<const Vector<double>> feat(out.data().data(), features);
      const Vector<double> p = softmax(head.weights * feat + head.bias);
      total += -std::log(std::max(p(data[i].label), 1e-300));
      if (opts.learning_rate == 0.0) continue;

      Vector<double> dlogits = p;
      dlogits(data[i].label) -= 1.0;
      const Vector<double> dfeat = head.weights.transpose() * dlogits;
      const Matrix<double> dmap = Eigen::Map<const Matrix<double>>(dfeat.data(), out.channels(), out.cells());
      const FcnGradients g = fcn_backward(trace, result.params, dmap);
      head.weights.noalias() -= opts.learning_rate * dlogits * feat.transpose();
      head.bias -= opts.learning_rate * dlogits;
      sgd_update(result.params, g, opts.learning_rate);
    }
    result.epoch_loss.push_back(total / static_cast<double>(data.size()));
  }

  Index correct = 0;
  for (const auto& d : data) {
    const FeatureMapd out = fcn_forward(d.image, result.params);
    const Eigen::Map<const Vector<double>> feat(out.data().data(), features);
    Index best;
    (head.weights * feat + head.bias).maxCoeff(&best);
    correct += best == d.label;
  }
  result.train_accuracy = static_cast<double>(correct) / static_cast<double>(data.size());
  return result;
}

}  // namespace dsr
