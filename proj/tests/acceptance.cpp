// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "dsr/bench.hpp"
#include "dsr/evaluation.hpp"
#include "dsr/fcn.hpp"
#include "dsr/fmap_io.hpp"
#include "dsr/gallery.hpp"
#include "dsr/learning.hpp"
#include "dsr/matching.hpp"
#include "dsr/metrics.hpp"
#include "dsr/sparse_solver.hpp"
#include "dsr/synthetic.hpp"
#include "dsr/training.hpp"
#include "test_support.hpp"

namespace {

using namespace dsr;
using testing::Rng;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok && pass) detail = what;
    pass = pass && ok;
  }
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

BlockSetd columns(const Matrix<double>& m) {
  std::vector<BlockTag> tags;
  for (Index i = 0; i < m.cols(); ++i) tags.push_back({1, i, 0});
  return BlockSetd(m, tags);
}

// 1. Optimality certificate and agreement with coordinate descent.
Outcome solver_optimality() {
  Outcome out;
  Rng rng(101);
  const double betas[] = {0.0, 0.1, 0.4, 1.0};
  double worst_kkt = 0, worst_gap = 0, solve_seconds = 0;
  for (int i = 0; i < 200; ++i) {
    const auto p = testing::random_problem(rng, 16, 32, betas[i % 4]);
    const auto t0 = Clock::now();
    const auto code = feature_sign_search(p);
    solve_seconds += seconds_since(t0);
    const auto oracle = coordinate_descent_oracle(p, 1e-15);
    worst_kkt = std::max(worst_kkt, kkt_residual(p, code.coefficients));
    worst_gap = std::max(worst_gap, std::abs(objective(p, code.coefficients) - oracle.objective));
    out.require(code.converged, "solver did not converge on instance " + std::to_string(i));
  }
  out.require(worst_kkt <= 1e-8, "kkt " + fmt(worst_kkt));
  out.require(worst_gap <= 1e-6, "objective gap " + fmt(worst_gap));
  out.require(solve_seconds < 10, "runtime " + fmt(solve_seconds) + " s");
  if (out.pass) out.detail = "max kkt " + fmt(worst_kkt) + ", max gap " + fmt(worst_gap) + ", " + fmt(solve_seconds) + " s";
  return out;
}

// 2. Analytic solutions.
Outcome closed_forms() {
  Outcome out;
  double worst = 0;
  auto track = [&](double got, double want) { worst = std::max(worst, std::abs(got - want)); };

  LassoProblem<double> id{Matrix<double>::Identity(2, 2), Vector<double>(2), 0.4};
  id.target << 1.0, 0.2;
  const auto c = feature_sign_search(id);
  track(c.coefficients(0), 0.6);
  track(c.coefficients(1), 0.0);
  track(c.objective, 0.5 * (0.4 * 0.4 + 0.2 * 0.2) + 0.4 * 0.6);  // 0.34

  Rng rng(102);
  for (int t = 0; t < 20; ++t) {
    const Index d = 2 + t % 7;
    const Matrix<double> q = Eigen::HouseholderQR<Matrix<double>>(testing::gaussian(rng, d, d)).householderQ();
    const Vector<double> x = testing::gaussian(rng, d, 1);
    const double beta = 0.1 * (t % 5);
    const auto w = feature_sign_search(LassoProblem<double>{q, x, beta}).coefficients;
    const Vector<double> z = q.transpose() * x;
    for (Index j = 0; j < d; ++j) {
      const double a = std::abs(z(j)) - beta;
      track(w(j), a > 0 ? std::copysign(a, z(j)) : 0.0);
    }
  }

  for (int t = 0; t < 20; ++t) {
    const Index d = 1 + t % 6;
    const Vector<double> y = testing::gaussian(rng, d, 1), x = testing::gaussian(rng, d, 1);
    const double beta = 0.2 * (t % 4);
    const double w = feature_sign_search(LassoProblem<double>{Matrix<double>(y), x, beta}).coefficients(0);
    const double r = y.dot(x);
    const double a = std::abs(r) - beta;
    track(w, a > 0 ? std::copysign(a, r) / y.squaredNorm() : 0.0);
  }

  // One unit block against itself: w = 1 - beta, residual beta^2.
  Matrix<double> unit(3, 1);
  unit << 1, 0, 0;
  track(dsr_distance(columns(unit), columns(unit), 0.4).distance, 0.16);

  out.require(worst <= 1e-9, "max error " + fmt(worst));
  if (out.pass) out.detail = "max error " + fmt(worst);
  return out;
}

// 3. Loss gradients against central differences, then through the network.
Outcome gradient_fidelity() {
  Outcome out;
  Rng rng(103);
  const double h = 1e-4;
  double worst = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const Index d = 2 + trial % 5, n = 1 + trial % 4, m = 1 + trial % 6;
    const int alpha = trial % 2 ? 1 : -1;
    const Matrix<double> x = testing::gaussian(rng, d, n), y = testing::gaussian(rng, d, m);
    const Matrix<double> w = testing::gaussian(rng, m, n);
    const auto g = loss_gradients(x, y, w, alpha);
    const double scale = std::max(g.d_probe.cwiseAbs().maxCoeff(), g.d_gallery.cwiseAbs().maxCoeff());
    auto check = [&](const Matrix<double>& base, const Matrix<double>& grad, bool probe_side) {
      for (Index i = 0; i < base.size(); ++i) {
        Matrix<double> hi = base, lo = base;
        hi.data()[i] += h;
        lo.data()[i] -= h;
        const double fd = probe_side ? (verification_loss(hi, y, w, alpha, 0.4) - verification_loss(lo, y, w, alpha, 0.4)) / (2 * h)
                                     : (verification_loss(x, hi, w, alpha, 0.4) - verification_loss(x, lo, w, alpha, 0.4)) / (2 * h);
        worst = std::max(worst, testing::rel_error(fd, grad.data()[i], 1e-3 * scale));
      }
    };
    check(x, g.d_probe, true);
    check(y, g.d_gallery, false);
  }
  out.require(worst <= 1e-4, "loss gradient rel error " + fmt(worst));

  auto params = init_params(FcnConfig::desk_default(), 5);
  for (auto& conv : params.convs) conv.bias.setConstant(0.02);
  auto smooth = [&](Index w, Index hgt) {
    FeatureMapd fm(w, hgt, testing::gaussian(rng, 3, w * hgt, 0.3));
    for (Index r = 0; r < hgt; ++r) {
      for (Index c = 0; c < w; ++c) fm.fiber(c, r).array() += 1.0 + 0.1 * static_cast<double>(r);
    }
    return fm;
  };
  double worst_net = 0;
  for (int alpha : {1, -1}) {
    const VerificationPair pair{smooth(8, 12), smooth(12, 12), alpha};
    TrainOptions opts;
    opts.margin = 1e9;
    opts.scales = {1, 2};
    const auto base = evaluate_pair(params, pair, opts);
    const double step = 1e-6;
    for (size_t l = 0; l < params.convs.size(); ++l) {
      for (int k = 0; k < 5; ++k) {
        const Index i = static_cast<Index>(rng() % static_cast<unsigned>(params.convs[l].weights.size()));
        auto hi = params, lo = params;
        hi.convs[l].weights.data()[i] += step;
        lo.convs[l].weights.data()[i] -= step;
        const double fd =
            (evaluate_pair(hi, pair, opts, &base.codes).loss - evaluate_pair(lo, pair, opts, &base.codes).loss) /
            (2 * step);
        worst_net = std::max(worst_net, testing::rel_error(fd, base.grads.convs[l].weights.data()[i], 1e-6));
      }
    }
  }
  out.require(worst_net <= 1e-3, "parameter gradient rel error " + fmt(worst_net));
  if (out.pass) out.detail = "loss " + fmt(worst) + ", network " + fmt(worst_net);
  return out;
}

// 4. Self-match, gallery growth, permutation.
Outcome distance_identities() {
  Outcome out;
  Rng rng(104);
  for (int t = 0; t < 20; ++t) {
    const auto fm = testing::random_map(rng, 2 + t % 4, 3 + t % 5, 4 + t % 8);
    const auto blocks = make_blocks(fm, {1, 2}, Normalization::none);
    out.require(dsr_distance(blocks, blocks, 0.0).distance == 0.0, "self-match not exactly 0");
  }
  for (int t = 0; t < 100; ++t) {
    const Index d = 3 + t % 6;
    const auto probe = columns(testing::gaussian(rng, d, 1 + t % 4));
    const Matrix<double> small = testing::gaussian(rng, d, 1 + t % 5);
    Matrix<double> big(d, small.cols() + 1 + t % 3);
    big << small, testing::gaussian(rng, d, big.cols() - small.cols());
    const double beta = t % 2 ? 0.4 : 0.0;
    const auto a = dsr_distance(probe, columns(small), beta);
    const auto b = dsr_distance(probe, columns(big), beta);
    // Unpenalized distance at beta = 0, the per-block optimum otherwise.
    const bool ok = beta == 0 ? b.distance <= a.distance + 1e-10 : b.penalized_objective <= a.penalized_objective + 1e-10;
    out.require(ok, "gallery growth increased the distance on instance " + std::to_string(t));
  }
  for (int t = 0; t < 20; ++t) {
    const auto probe = columns(testing::gaussian(rng, 8, 5));
    const Matrix<double> g = testing::gaussian(rng, 8, 12);
    std::vector<Index> perm(12);
    std::iota(perm.begin(), perm.end(), Index(0));
    std::shuffle(perm.begin(), perm.end(), rng);
    Matrix<double> shuffled(8, 12);
    for (Index j = 0; j < 12; ++j) shuffled.col(j) = g.col(perm[static_cast<size_t>(j)]);
    const auto a = dsr_distance(probe, columns(g), 0.4);
    const auto b = dsr_distance(probe, columns(shuffled), 0.4);
    out.require(a.distance == b.distance, "permutation changed the distance");
  }
  if (out.pass) out.detail = "20 self-matches, 100 growth instances, 20 permutations";
  return out;
}

// Mean rank-1 over seeds 0..9 of the synthetic benchmark.
struct BenchmarkRank1 {
  double multi_scale = 0, single_scale = 0, resizing = 0, one_shot = 0;
};

BenchmarkRank1 synthetic_rank1() {
  BenchmarkRank1 r;
  const int seeds = 10;
  for (int seed = 0; seed < seeds; ++seed) {
    BenchmarkOptions b;
    b.identities = 30;
    b.seed = static_cast<std::uint64_t>(seed);
    const SyntheticBenchmark bench = make_benchmark(b);
    DsrEvalOptions opts;
    opts.normalization = Normalization::unit_l2;
    opts.scales = {1, 2, 3};
    r.multi_scale += evaluate_dsr(bench.gallery, bench.gallery_maps, bench.probes, opts).cmc.rank1();
    r.one_shot += evaluate_dsr(bench.gallery, bench.gallery_maps, bench.probes, opts, 1).cmc.rank1();
    opts.scales = {1};
    r.single_scale += evaluate_dsr(bench.gallery, bench.gallery_maps, bench.probes, opts).cmc.rank1();
    r.resizing += evaluate_resizing(bench.gallery, bench.gallery_maps, bench.probes, b.width, b.height).cmc.rank1();
  }
  r.multi_scale /= seeds;
  r.single_scale /= seeds;
  r.resizing /= seeds;
  r.one_shot /= seeds;
  return r;
}

// 5.
Outcome multi_scale_robustness(const BenchmarkRank1& r) {
  Outcome out;
  out.require(r.multi_scale >= r.single_scale, "{1,2,3} below {1}");
  out.require(r.multi_scale > r.resizing && r.single_scale > r.resizing, "resizing baseline not beaten");
  out.detail = "rank-1 {1,2,3} " + fmt(r.multi_scale) + ", {1} " + fmt(r.single_scale) + ", resizing " + fmt(r.resizing) +
               (out.pass ? "" : " (" + out.detail + ")");
  return out;
}

// 6.
Outcome multi_shot_gain(const BenchmarkRank1& r) {
  Outcome out;
  out.require(r.multi_scale >= r.one_shot, "N=3 below N=1");
  out.detail = "rank-1 N=3 " + fmt(r.multi_scale) + ", N=1 " + fmt(r.one_shot);
  return out;
}

// 7. Pre-train, fine-tune on verification pairs, compare held-out distances.
Outcome fine_tuning_effect() {
  Outcome out;
  const int seeds = 10;
  NetworkEvaluation pre_sum, ft_sum;
  DsrEvalOptions eval;
  eval.scales = {1};
  eval.normalization = Normalization::unit_l2;
  for (int s = 0; s < seeds; ++s) {
    const auto seed = static_cast<std::uint64_t>(s);
    const FineTuneSet set = make_finetune_set(12, seed);
    PretrainOptions po;
    po.epochs = 10;
    po.learning_rate = 0.01;
    po.seed = seed;
    const auto pre = pretrain_identification(set.pretrain, init_params(FcnConfig::desk_default(), seed), po);
    TrainOptions to;
    to.margin = 2.0 * mean_pair_distance(pre.params, set.pairs, -1, to);
    TrainState state{pre.params, 1e-4, 0, {}, 0};
    state = fine_tune(set.pairs, std::move(state), to, 4, seed);

    const auto a = evaluate_network(pre.params, set, eval);
    const auto b = evaluate_network(state.params, set, eval);
    pre_sum.mean_genuine += a.mean_genuine / seeds;
    pre_sum.mean_impostor += a.mean_impostor / seeds;
    pre_sum.rank1 += a.rank1 / seeds;
    ft_sum.mean_genuine += b.mean_genuine / seeds;
    ft_sum.mean_impostor += b.mean_impostor / seeds;
    ft_sum.rank1 += b.rank1 / seeds;
  }
  out.require(ft_sum.mean_genuine < pre_sum.mean_genuine, "genuine distance did not decrease");
  out.require(ft_sum.mean_impostor > pre_sum.mean_impostor, "impostor distance did not increase");
  out.require(ft_sum.rank1 >= pre_sum.rank1, "rank-1 degraded");
  out.detail = "genuine " + fmt(pre_sum.mean_genuine) + " -> " + fmt(ft_sum.mean_genuine) + ", impostor " +
               fmt(pre_sum.mean_impostor) + " -> " + fmt(ft_sum.mean_impostor) + ", rank-1 " + fmt(pre_sum.rank1) +
               " -> " + fmt(ft_sum.rank1);
  return out;
}

// 8. Per-probe timing of amortized DSR against recomputation.
Outcome efficiency_ordering() {
  Outcome out;
  const auto t0 = Clock::now();
  const BenchImages images = make_bench_images(60, 0);
  const FcnParams params = init_params(FcnConfig::parse(kBenchNetwork, 3), 0);
  BenchOptions opts;
  opts.recompute_probes = 3;
  const BenchReport report = bench_matching(images.gallery, images.probes, params, opts);
  const double total = seconds_since(t0);
  const double single = report.mode("dsr_single").mean_seconds;
  const double multi = report.mode("dsr_multi").mean_seconds;
  const double recompute = report.mode("recompute").mean_seconds;
  out.require(recompute >= 5 * single, "recompute only " + fmt(recompute / single) + "x single");
  out.require(multi < 1.25 * single, "multi/single " + fmt(multi / single));
  out.require(total < 120, "benchmark took " + fmt(total) + " s");
  out.detail = "recompute/single " + fmt(recompute / single) + ", multi/single " + fmt(multi / single) + ", " +
               fmt(total) + " s" + (out.pass ? "" : " (" + out.detail + ")");
  return out;
}

template <typename Reader>
bool throws_format_error(const std::string& bytes, Reader read) {
  std::stringstream in(bytes);
  try {
    read(in);
  } catch (const FormatError&) {
    return true;
  } catch (...) {
    return false;
  }
  return false;
}

// 9. Bit-exact round trips and corrupt-header rejection.
Outcome format_round_trips() {
  Outcome out;
  Rng rng(109);
  for (int t = 0; t < 10; ++t) {
    FeatureMapd fm = testing::random_map(rng, 1 + t, 2 + t % 3, 1 + t % 7);
    fm.data() = fm.data().cast<float>().cast<double>();
    std::stringstream a;
    write_fmap(a, fm);
    const FeatureMapd back = read_fmap(a);
    out.require((back.data().array() == fm.data().array()).all(), "fmap values changed");
    std::stringstream b;
    write_fmap(b, back);
    out.require(a.str() == b.str(), "fmap bytes changed");
  }
  const auto p = init_params(FcnConfig::parse("c4,p,c6,p,c5,p", 3), 9);
  std::stringstream a;
  save_checkpoint(a, p);
  const FcnParams q = load_checkpoint(a);
  std::stringstream b;
  save_checkpoint(b, q);
  out.require(a.str() == b.str(), "checkpoint bytes changed");
  out.require(q.config == p.config, "checkpoint config changed");

  auto read_fm = [](std::istream& in) { read_fmap(in); };
  auto read_ck = [](std::istream& in) { load_checkpoint(in); };
  std::stringstream fs;
  write_fmap(fs, FeatureMapd(2, 2, 3));
  const std::string fgood = fs.str();
  // magic, version, dtype, zero width
  for (auto [i, v] : {std::pair<size_t, char>{0, 'X'}, {4, 2}, {6, 1}, {8, 0}}) {
    std::string bad = fgood;
    bad[i] = v;
    out.require(throws_format_error(bad, read_fm), "fmap header byte " + std::to_string(i) + " accepted");
  }
  out.require(throws_format_error(fgood.substr(0, 7), read_fm), "truncated fmap accepted");
  const std::string cgood = a.str();
  for (auto [i, v] : {std::pair<size_t, char>{1, 'X'}, {4, 9}, {12, 7}}) {
    std::string bad = cgood;
    bad[i] = v;
    out.require(throws_format_error(bad, read_ck), "checkpoint header byte " + std::to_string(i) + " accepted");
  }
  out.require(throws_format_error(cgood.substr(0, cgood.size() - 2), read_ck), "truncated checkpoint accepted");
  if (out.pass) out.detail = "10 fmaps, 1 checkpoint, 9 corruptions rejected";
  return out;
}

// 10. Metrics against brute-force counts.
Outcome metric_correctness() {
  Outcome out;
  Rng rng(110);
  for (int rep = 0; rep < 50; ++rep) {
    const int identities = 2 + static_cast<int>(rng() % 8), probes = 1 + static_cast<int>(rng() % 12);
    std::vector<std::string> ids;
    for (int i = 0; i < identities; ++i) ids.push_back("id" + std::to_string(i));
    std::vector<TrialResult> trials;
    std::vector<double> genuine, impostor;
    for (int p = 0; p < probes; ++p) {
      auto order = ids;
      std::shuffle(order.begin(), order.end(), rng);
      TrialResult t{"q" + std::to_string(p), ids[rng() % ids.size()], {}};
      for (size_t i = 0; i < order.size(); ++i) {
        const double d = static_cast<double>(i) + 0.5 * static_cast<double>(rng() % 2);
        t.ranked.items.emplace_back(order[i], d);
        (order[i] == t.true_person_id ? genuine : impostor).push_back(std::floor(d));
      }
      trials.push_back(std::move(t));
    }

    const auto c = cmc(trials);
    for (int r = 1; r <= identities; ++r) {
      int hit = 0;
      for (const auto& t : trials) {
        for (int i = 0; i < r; ++i) hit += t.ranked.items[static_cast<size_t>(i)].first == t.true_person_id;
      }
      out.require(std::abs(c.at(r) - static_cast<double>(hit) / probes) < 1e-15, "CMC differs from recount");
      if (r > 1) out.require(c.at(r) >= c.at(r - 1), "CMC not monotone");
    }

    double pairs = 0;
    for (double g : genuine) {
      for (double im : impostor) pairs += g < im ? 1.0 : (g == im ? 0.5 : 0.0);
    }
    const double auc = roc(genuine, impostor).auc;
    out.require(std::abs(auc - pairs / static_cast<double>(genuine.size() * impostor.size())) < 1e-12,
                "AUC differs from pairwise count");
    out.require(auc >= 0 && auc <= 1, "AUC outside [0,1]");

    double ap_total = 0;
    for (const auto& t : trials) {
      for (size_t i = 0; i < t.ranked.items.size(); ++i) {
        if (t.ranked.items[i].first == t.true_person_id) ap_total += 1.0 / static_cast<double>(i + 1);
      }
    }
    out.require(std::abs(mean_average_precision(trials) - ap_total / probes) < 1e-12, "mAP differs from recount");
  }
  if (out.pass) out.detail = "50 trial sets";
  return out;
}

}  // namespace

int main() {
  const auto t0 = Clock::now();
  int failed = 0;
  auto report = [&](int n, const char* name, const std::function<Outcome()>& run) {
    const auto start = Clock::now();
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  " << n << ". " << name << ": " << o.detail << " [" << fmt(seconds_since(start))
              << " s]" << std::endl;
  };

  report(1, "solver optimality", solver_optimality);
  report(2, "closed forms", closed_forms);
  report(3, "gradient fidelity", gradient_fidelity);
  report(4, "distance identities", distance_identities);
  BenchmarkRank1 rank1;
  bool have_rank1 = false;
  auto benchmark = [&] {
    if (!have_rank1) rank1 = synthetic_rank1();
    have_rank1 = true;
    return rank1;
  };
  report(5, "multi-scale robustness", [&] { return multi_scale_robustness(benchmark()); });
  report(6, "multi-shot gain", [&] { return multi_shot_gain(benchmark()); });
  report(7, "fine-tuning effect", fine_tuning_effect);
  report(8, "efficiency ordering", efficiency_ordering);
  report(9, "format round trips", format_round_trips);
  report(10, "metric correctness", metric_correctness);
  std::cout << (failed ? "FAILED " + std::to_string(failed) + " of 10" : std::string("all 10 criteria pass")) << " in "
            << fmt(seconds_since(t0)) << " s" << std::endl;
  return failed ? 1 : 0;
}
