#include "commands.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "dsr/bench.hpp"
#include "dsr/evaluation.hpp"
#include "dsr/fcn.hpp"
#include "dsr/fmap_io.hpp"
#include "dsr/gallery.hpp"
#include "dsr/synthetic.hpp"
#include "dsr/training.hpp"

namespace dsr::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

json read_json(const fs::path& path) {
  try {
    return json::parse(read_text(path));
  } catch (const json::parse_error& e) {
    throw FormatError(path.string() + " is not valid JSON: " + e.what());
  }
}

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  return out;
}

// Binary netpbm (P5 grey, P6 colour), 8-bit, scaled to [0, 1].
FeatureMapd read_netpbm(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::string magic;
  in >> magic;
  if (magic != "P5" && magic != "P6") throw FormatError(path.string() + ": only binary P5/P6 netpbm images are read");
  auto next_int = [&]() {
    in >> std::ws;
    while (in.peek() == '#') {
      in.ignore(std::numeric_limits<std::streamsize>::max(), '\n');
      in >> std::ws;
    }
    long v = -1;
    in >> v;
    if (!in || v < 1) throw FormatError(path.string() + ": bad netpbm header");
    return v;
  };
  const long w = next_int(), h = next_int(), maxval = next_int();
  if (maxval > 255 || w > 65535 || h > 65535) throw FormatError(path.string() + ": only 8-bit netpbm images are read");
  in.get();
  const Index channels = magic == "P6" ? 3 : 1;
  std::vector<unsigned char> bytes(static_cast<size_t>(w * h * channels));
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (in.gcount() != static_cast<std::streamsize>(bytes.size())) throw FormatError(path.string() + ": truncated pixels");
  FeatureMapd fm(w, h, channels);
  size_t i = 0;
  for (Index r = 0; r < h; ++r) {
    for (Index c = 0; c < w; ++c) {
      for (Index ch = 0; ch < channels; ++ch) fm.at(c, r, ch) = bytes[i++] / static_cast<double>(maxval);
    }
  }
  return fm;
}

FeatureMapd load_image(const fs::path& path) {
  const std::string ext = path.extension().string();
  if (ext == ".ppm" || ext == ".pgm") return read_netpbm(path);
  return read_fmap(path);
}

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

std::string get_string(const json& j, const char* key, const std::string& where) {
  if (!j.is_object() || !j.contains(key) || !j[key].is_string()) {
    throw FormatError(where + ": '" + key + "' must be a string");
  }
  return j[key].get<std::string>();
}

FcnParams network_params(const std::optional<fs::path>& checkpoint, const std::optional<std::string>& network,
                         const std::string& fallback, std::uint64_t seed) {
  if (checkpoint && network) throw UsageError("give --checkpoint or --network, not both");
  if (checkpoint) return load_checkpoint(*checkpoint);
  return init_params(FcnConfig::parse(network.value_or(fallback), 3), seed);
}

std::pair<Index, Index> parse_size(const std::string& text) {
  const auto x = text.find('x');
  try {
    if (x == std::string::npos) throw std::invalid_argument(text);
    size_t used = 0;
    const long w = std::stol(text.substr(0, x), &used);
    if (used != x) throw std::invalid_argument(text);
    const long h = std::stol(text.substr(x + 1), &used);
    if (used != text.size() - x - 1 || w < 1 || h < 1) throw std::invalid_argument(text);
    return {w, h};
  } catch (const std::logic_error&) {
    throw UsageError("bad size '" + text + "' (want WxH)");
  }
}

double mean_of(const std::vector<double>& v) {
  double t = 0;
  for (double x : v) t += x;
  return v.empty() ? 0.0 : t / static_cast<double>(v.size());
}

}  // namespace

int run_extract(const ExtractArgs& args, const Config& cfg) {
  if (args.input.has_value() == args.synthetic.has_value()) throw UsageError("give exactly one of --input or --synthetic");
  const FeatureMapd source = args.synthetic ? generate_synthetic(*args.synthetic, cfg.seed) : load_image(*args.input);
  FeatureMapd out = source;
  if (args.checkpoint || args.network) {
    out = fcn_forward(source, network_params(args.checkpoint, args.network, "", cfg.seed));
  } else if (args.input) {
    throw UsageError("--input needs --checkpoint or --network");
  }
  write_fmap(args.out, out);
  std::cout << "wrote " << args.out.string() << ": " << out.width() << "x" << out.height() << "x" << out.channels()
            << "\n";
  return 0;
}

int run_match(const MatchArgs& args, const Config& cfg) {
  const GalleryStore store = GalleryStore::open(args.gallery);
  const FeatureMapd probe = read_fmap(args.probe);
  if (probe.channels() != store.channels()) {
    throw FormatError("probe has " + std::to_string(probe.channels()) + " channels, gallery store has " +
                      std::to_string(store.channels()));
  }
  const auto entries = store.build_entries(cfg.scales, cfg.normalization);
  const BlockSetd blocks = make_blocks(probe, cfg.scales, cfg.normalization);
  const auto result = rank_gallery_detailed(blocks, entries, cfg.beta, cfg.solver, cfg.workers);

  const std::string probe_id = args.probe.stem().string();
  if (args.out) {
    auto out = open_out(*args.out);
    write_match_csv(out, probe_id, result.ranking);
  } else {
    write_match_csv(std::cout, probe_id, result.ranking);
  }
  if (args.scores) open_out(*args.scores) << match_scores_json(entries, result.entry_scores) << '\n';

  std::cerr << "probe blocks: " << blocks.size() << " (scales " << format_scales(cfg.scales) << ")\n";
  int unconverged = 0;
  for (const auto& s : result.entry_scores) unconverged += s.converged ? 0 : 1;
  if (unconverged > 0) std::cerr << "warning: " << unconverged << " gallery entries did not converge\n";
  return 0;
}

int run_eval(const EvalArgs& args, const Config& cfg) {
  if (args.synthetic == args.trials.has_value()) throw UsageError("give exactly one of --trials or --synthetic");
  if (args.method != "dsr" && args.method != "resizing") throw UsageError("--method is dsr or resizing");
  if (args.repeats < 1) throw UsageError("--repeats must be at least 1");
  if (args.shots < 0) throw UsageError("--shots must be nonnegative");
  if (args.trials && args.repeats != 1) throw UsageError("--repeats only applies to --synthetic");

  DsrEvalOptions opts;
  opts.scales = cfg.scales;
  opts.normalization = cfg.normalization;
  opts.beta = cfg.beta;
  opts.solver = cfg.solver;
  opts.workers = cfg.workers;
  opts.close_set = !args.open_set;

  auto evaluate = [&](const std::vector<ManifestEntry>& manifest, const std::vector<FeatureMapd>& maps,
                      const std::vector<Probe>& probes) {
    if (args.method == "dsr") return evaluate_dsr(manifest, maps, probes, opts, args.shots);
    const auto [w, h] = args.resize ? parse_size(*args.resize)
                                    : std::pair<Index, Index>{maps.front().width(), maps.front().height()};
    EvaluationResult r = evaluate_resizing(manifest, maps, probes, w, h, args.shots);
    if (opts.close_set) summarize_trials(r.trials, {}, true);  // same close-set check as DSR
    return r;
  };

  std::vector<EvaluationResult> runs;
  if (args.synthetic) {
    for (int rep = 0; rep < args.repeats; ++rep) {
      BenchmarkOptions b;
      b.identities = args.identities;
      b.seed = cfg.seed + static_cast<std::uint64_t>(rep);
      const SyntheticBenchmark bench = make_benchmark(b);
      runs.push_back(evaluate(bench.gallery, bench.gallery_maps, bench.probes));
    }
  } else {
    const json spec = read_json(*args.trials);
    const fs::path base = args.trials->parent_path();
    const GalleryStore store = GalleryStore::open(resolve(base, get_string(spec, "gallery", "trial spec")));
    if (!spec.contains("probes") || !spec["probes"].is_array() || spec["probes"].empty()) {
      throw FormatError("trial spec: 'probes' must be a non-empty array");
    }
    std::vector<Probe> probes;
    for (size_t i = 0; i < spec["probes"].size(); ++i) {
      const json& p = spec["probes"][i];
      const std::string where = "trial spec probe " + std::to_string(i);
      probes.push_back({get_string(p, "probe_id", where), get_string(p, "person_id", where),
                        read_fmap(resolve(base, get_string(p, "fmap", where)))});
      if (probes.back().map.channels() != store.channels()) throw FormatError(where + ": channel count differs from gallery");
    }
    runs.push_back(evaluate(store.entries(), store.maps(), probes));
  }

  fs::create_directories(args.out_dir);
  std::vector<CmcCurve> curves;
  std::vector<double> genuine, impostor, seconds, rank1, rank3, maps, aucs;
  for (const auto& r : runs) {
    curves.push_back(r.cmc);
    genuine.insert(genuine.end(), r.genuine.begin(), r.genuine.end());
    impostor.insert(impostor.end(), r.impostor.begin(), r.impostor.end());
    seconds.insert(seconds.end(), r.probe_seconds.begin(), r.probe_seconds.end());
    const MetricsSummary s = r.summary();
    rank1.push_back(s.rank1);
    rank3.push_back(s.rank3);
    maps.push_back(s.map);
    aucs.push_back(s.auc);
  }
  {
    auto out = open_out(args.out_dir / "cmc.csv");
    if (runs.size() == 1) {
      write_cmc_csv(out, curves.front());
    } else {
      write_cmc_csv(out, average_curves(curves));
    }
  }
  const RocCurve pooled = genuine.empty() || impostor.empty() ? RocCurve{} : roc(genuine, impostor);
  {
    auto out = open_out(args.out_dir / "roc.csv");
    write_roc_csv(out, pooled);
  }
  MetricsSummary summary;
  summary.rank1 = mean_of(rank1);
  summary.rank3 = mean_of(rank3);
  summary.map = mean_of(maps);
  summary.auc = mean_of(aucs);
  std::vector<double> sorted = seconds;
  std::sort(sorted.begin(), sorted.end());
  for (double t : sorted) summary.timing.total_seconds += t;
  if (!sorted.empty()) {
    summary.timing.mean_probe_seconds = summary.timing.total_seconds / static_cast<double>(sorted.size());
    summary.timing.p95_probe_seconds =
        sorted[std::min(sorted.size() - 1, static_cast<size_t>(0.95 * static_cast<double>(sorted.size())))];
  }
  json j = json::parse(summary_json(summary));
  j["method"] = args.method;
  j["repeats"] = runs.size();
  j["rank1_std"] = mean_std(rank1).std;
  j["probes"] = seconds.size();
  j["seed"] = cfg.seed;
  j["workers"] = cfg.workers;
  open_out(args.out_dir / "summary.json") << j.dump(2) << '\n';

  std::cout << args.method << ": rank-1 " << summary.rank1 << ", rank-3 " << summary.rank3 << ", mAP " << summary.map
            << ", AUC " << summary.auc << " over " << runs.size() << " run(s)\n";
  return 0;
}

int run_train(const TrainArgs& args, const Config& cfg) {
  if (args.pairs.has_value() == args.synthetic_identities.has_value()) {
    throw UsageError("give exactly one of --pairs or --synthetic");
  }
  std::vector<VerificationPair> pairs;
  std::vector<LabeledImage> labelled;
  if (args.synthetic_identities) {
    if (*args.synthetic_identities < 2) throw UsageError("--synthetic needs at least 2 identities");
    FineTuneSet set = make_finetune_set(*args.synthetic_identities, cfg.train_seed);
    pairs = std::move(set.pairs);
    labelled = std::move(set.pretrain);
  } else {
    const json spec = read_json(*args.pairs);
    const fs::path base = args.pairs->parent_path();
    const json& list = spec.is_object() && spec.contains("pairs") ? spec["pairs"] : spec;
    if (!list.is_array() || list.empty()) throw FormatError("pair manifest: expected a non-empty array of pairs");
    for (size_t i = 0; i < list.size(); ++i) {
      const std::string where = "pair " + std::to_string(i);
      const json& p = list[i];
      if (!p.is_object() || !p.contains("alpha") || !p["alpha"].is_number_integer() ||
          (p["alpha"] != 1 && p["alpha"] != -1)) {
        throw FormatError(where + ": alpha must be 1 or -1");
      }
      pairs.push_back({load_image(resolve(base, get_string(p, "probe", where))),
                       load_image(resolve(base, get_string(p, "gallery", where))), p["alpha"].get<int>()});
    }
    if (spec.is_object() && spec.contains("pretrain")) {
      if (!spec["pretrain"].is_array()) throw FormatError("pair manifest: 'pretrain' must be an array");
      for (size_t i = 0; i < spec["pretrain"].size(); ++i) {
        const json& p = spec["pretrain"][i];
        const std::string where = "pretrain image " + std::to_string(i);
        if (!p.is_object() || !p.contains("label") || !p["label"].is_number_integer() || p["label"].get<int>() < 0) {
          throw FormatError(where + ": label must be a nonnegative integer");
        }
        labelled.push_back({load_image(resolve(base, get_string(p, "image", where))), p["label"].get<int>()});
      }
    }
  }

  FcnParams params = args.init ? load_checkpoint(*args.init)
                               : init_params(FcnConfig::parse(cfg.fcn_layers, pairs.front().probe.channels()), cfg.train_seed);
  if (cfg.pretrain_epochs > 0) {
    if (labelled.empty()) throw UsageError("pre-training needs labelled images (a 'pretrain' list or --synthetic)");
    const PretrainResult pre =
        pretrain_identification(labelled, params, {cfg.pretrain_epochs, cfg.pretrain_lr, cfg.train_seed});
    params = pre.params;
    std::cerr << "pre-training: final loss " << pre.epoch_loss.back() << ", train accuracy " << pre.train_accuracy
              << "\n";
  }
  if (args.pretrained_out) save_checkpoint(*args.pretrained_out, params);

  TrainOptions opts;
  opts.beta = cfg.beta;
  opts.margin = cfg.train_margin;
  opts.scales = cfg.train_scales;
  opts.solver = cfg.solver;
  if (args.margin_factor) {
    if (!(*args.margin_factor > 0)) throw UsageError("--margin-factor must be positive");
    opts.margin = *args.margin_factor * mean_pair_distance(params, pairs, -1, opts);
  }
  TrainState state{params, cfg.train_lr, 0, {}, 0};
  state = fine_tune(pairs, std::move(state), opts, cfg.train_epochs, cfg.train_seed);
  save_checkpoint(args.out, state.params);
  if (args.loss_csv) {
    auto out = open_out(*args.loss_csv);
    out.precision(std::numeric_limits<double>::max_digits10);
    out << "step,loss\n";
    for (size_t i = 0; i < state.loss_history.size(); ++i) out << i + 1 << ',' << state.loss_history[i] << '\n';
  }
  std::cout << "trained " << state.step << " steps over " << pairs.size() << " pairs, margin "
            << opts.effective_margin(state.params) << "; wrote " << args.out.string() << "\n";
  if (state.solver_warnings > 0) std::cerr << "warning: " << state.solver_warnings << " steps had unconverged codes\n";
  return 0;
}

int run_bench(const BenchArgs& args, const Config& cfg) {
  if (args.synthetic_identities.has_value() == args.images.has_value()) {
    throw UsageError("give exactly one of --synthetic or --images");
  }
  BenchImages images;
  if (args.synthetic_identities) {
    images = make_bench_images(*args.synthetic_identities, cfg.seed);
  } else {
    const json spec = read_json(*args.images);
    const fs::path base = args.images->parent_path();
    for (const char* key : {"gallery", "probes"}) {
      if (!spec.is_object() || !spec.contains(key) || !spec[key].is_array()) {
        throw FormatError(std::string("bench image list: '") + key + "' must be an array of paths");
      }
      for (const auto& p : spec[key]) {
        if (!p.is_string()) throw FormatError(std::string("bench image list: '") + key + "' holds a non-string");
        (std::string(key) == "gallery" ? images.gallery : images.probes)
            .push_back(load_image(resolve(base, p.get<std::string>())));
      }
    }
  }
  BenchOptions opts;
  opts.beta = cfg.beta;
  opts.solver = cfg.solver;
  opts.workers = cfg.workers;
  opts.seed = cfg.seed;
  opts.window_stride = args.window_stride;
  opts.recompute_probes = args.recompute_probes;
  const FcnParams params = network_params(args.checkpoint, args.network, kBenchNetwork, cfg.seed);
  const BenchReport report = bench_matching(images.gallery, images.probes, params, opts);
  if (args.out) {
    open_out(*args.out) << report.to_json() << '\n';
  } else {
    std::cout << report.to_json() << '\n';
  }
  for (const auto& m : report.modes) {
    std::cerr << m.mode << ": " << m.mean_seconds * 1e3 << " ms per probe\n";
  }
  return 0;
}

int run_solve(const SolveArgs& args, const Config& cfg) {
  const json j = read_json(args.problem);
  if (!j.is_object() || !j.contains("dictionary") || !j["dictionary"].is_array() || j["dictionary"].empty()) {
    throw FormatError("lasso problem: 'dictionary' must be a non-empty array of rows");
  }
  if (!j.contains("target") || !j["target"].is_array()) throw FormatError("lasso problem: 'target' must be an array");
  LassoProblem<double> problem;
  const auto& rows = j["dictionary"];
  const size_t cols = rows[0].is_array() ? rows[0].size() : 0;
  problem.dictionary.resize(static_cast<Index>(rows.size()), static_cast<Index>(cols));
  for (size_t r = 0; r < rows.size(); ++r) {
    if (!rows[r].is_array() || rows[r].size() != cols) throw FormatError("lasso problem: ragged dictionary rows");
    for (size_t c = 0; c < cols; ++c) {
      if (!rows[r][c].is_number()) throw FormatError("lasso problem: non-numeric dictionary entry");
      problem.dictionary(static_cast<Index>(r), static_cast<Index>(c)) = rows[r][c].get<double>();
    }
  }
  problem.target.resize(static_cast<Index>(j["target"].size()));
  for (size_t i = 0; i < j["target"].size(); ++i) {
    if (!j["target"][i].is_number()) throw FormatError("lasso problem: non-numeric target entry");
    problem.target(static_cast<Index>(i)) = j["target"][i].get<double>();
  }
  problem.beta = cfg.beta;
  if (j.contains("beta")) {
    if (!j["beta"].is_number()) throw FormatError("lasso problem: 'beta' must be a number");
    problem.beta = j["beta"].get<double>();
  }
  try {
    problem.validate();
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("lasso problem: ") + e.what());
  }

  const SparseCode<double> code = feature_sign_search(problem, cfg.solver);
  json out;
  out["coefficients"] = std::vector<double>(code.coefficients.data(), code.coefficients.data() + code.coefficients.size());
  out["active_set"] = code.active_set;
  out["objective"] = code.objective;
  out["kkt_residual"] = kkt_residual(problem, code.coefficients);
  out["iterations"] = code.iterations;
  out["converged"] = code.converged;
  out["beta"] = problem.beta;
  if (args.out) {
    open_out(*args.out) << out.dump(2) << '\n';
  } else {
    std::cout << out.dump(2) << '\n';
  }
  if (!code.converged) {
    std::cerr << "error: feature-sign search did not reach the KKT tolerance\n";
    return 4;
  }
  return 0;
}

}  // namespace dsr::cli
