#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "commands.hpp"
#include "dsr/types.hpp"

namespace {

constexpr int kUsage = 2;
constexpr int kFormat = 3;
constexpr int kNumeric = 4;

}  // namespace

int main(int argc, char** argv) {
  using namespace dsr::cli;
  CLI::App app{"Partial re-identification by sparse reconstruction of spatial feature maps"};
  app.require_subcommand(1);
  app.fallthrough();

  std::optional<std::filesystem::path> config_file;
  std::optional<std::string> seed, beta, scales, workers;
  std::vector<std::string> sets;
  app.add_option("--config", config_file, "JSON config file");
  app.add_option("--seed", seed, "seed for every random choice");
  app.add_option("--beta", beta, "lasso weight (default 0.4)");
  app.add_option("--scales", scales, "block scales, e.g. 1,2,3");
  app.add_option("--workers", workers, "worker threads");
  app.add_option("--set", sets, "override any config key: key=value (repeatable)");

  ExtractArgs ex;
  auto* extract = app.add_subcommand("extract", "write a feature map (.fmap) from an image or a synthetic spec");
  extract->add_option("--input", ex.input, ".fmap or binary .ppm/.pgm input image");
  extract->add_option("--synthetic", ex.synthetic, "generator spec WxHxC[:const=V|:noise=S|:ramp]");
  extract->add_option("--checkpoint", ex.checkpoint, "network checkpoint");
  extract->add_option("--network", ex.network, "fresh network layers (e.g. c8,p,c16), initialized from --seed");
  extract->add_option("--out", ex.out, "output .fmap")->required();

  MatchArgs ma;
  auto* match = app.add_subcommand("match", "rank a gallery store against one probe feature map");
  match->add_option("--probe", ma.probe, "probe .fmap")->required();
  match->add_option("--gallery", ma.gallery, "gallery store directory or manifest")->required();
  match->add_option("--out", ma.out, "ranking CSV (default stdout)");
  match->add_option("--scores", ma.scores, "per-entry match diagnostics JSON");

  EvalArgs ev;
  auto* eval = app.add_subcommand("eval", "CMC, ROC and mAP over a trial spec or the synthetic benchmark");
  eval->add_option("--trials", ev.trials, "trial spec JSON {gallery, probes: [{probe_id, person_id, fmap}]}");
  eval->add_flag("--synthetic", ev.synthetic, "seeded synthetic benchmark");
  eval->add_option("--identities", ev.identities, "synthetic identities")->check(CLI::PositiveNumber);
  eval->add_option("--repeats", ev.repeats, "synthetic repetitions (seeds seed..seed+R-1)");
  eval->add_option("--shots", ev.shots, "gallery shots per identity (0: all)");
  eval->add_option("--method", ev.method, "dsr or resizing");
  eval->add_option("--resize", ev.resize, "resizing baseline target WxH");
  eval->add_flag("--open-set", ev.open_set, "allow probes whose identity is not in the gallery");
  eval->add_option("--out-dir", ev.out_dir, "directory for cmc.csv, roc.csv, summary.json");

  TrainArgs tr;
  auto* train = app.add_subcommand("train", "optional pre-training, then fine-tuning on verification pairs");
  train->add_option("--pairs", tr.pairs, "pair manifest JSON");
  train->add_option("--synthetic", tr.synthetic_identities, "synthetic pairs over this many identities");
  train->add_option("--init", tr.init, "starting checkpoint (default: fresh network from fcn.layers, train.seed)");
  train->add_option("--out", tr.out, "output checkpoint")->required();
  train->add_option("--loss-csv", tr.loss_csv, "per-step loss history");
  train->add_option("--pretrained-out", tr.pretrained_out, "checkpoint before fine-tuning");
  train->add_option("--margin-factor", tr.margin_factor,
                    "set the margin to this multiple of the mean impostor-pair distance before fine-tuning");

  BenchArgs be;
  auto* bench = app.add_subcommand("bench", "per-probe identification time: amortized DSR vs recomputation");
  bench->add_option("--synthetic", be.synthetic_identities, "desk-scale synthetic images for this many identities");
  bench->add_option("--images", be.images, "image list JSON {gallery: [...], probes: [...]}");
  bench->add_option("--checkpoint", be.checkpoint, "network checkpoint");
  bench->add_option("--network", be.network, "fresh network layers");
  bench->add_option("--window-stride", be.window_stride, "sliding-window stride of the recompute baseline");
  bench->add_option("--recompute-probes", be.recompute_probes, "time the recompute baseline on the first k probes");
  bench->add_option("--out", be.out, "timing JSON (default stdout)");

  SolveArgs so;
  auto* solve = app.add_subcommand("solve", "solve one lasso problem from JSON {dictionary, target, beta}");
  solve->add_option("--problem", so.problem, "problem JSON")->required();
  solve->add_option("--out", so.out, "result JSON (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  dsr::Config cfg;
  try {
    std::vector<std::pair<std::string, std::string>> overrides;
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw std::invalid_argument("--set wants key=value, got '" + s + "'");
      overrides.emplace_back(s.substr(0, eq), s.substr(eq + 1));
    }
    if (seed) overrides.emplace_back("seed", *seed);
    if (beta) overrides.emplace_back("beta", *beta);
    if (scales) overrides.emplace_back("scales", *scales);
    if (workers) overrides.emplace_back("workers", *workers);
    cfg = dsr::resolve_config(config_file, overrides);
  } catch (const dsr::FormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFormat;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  }

  try {
    if (extract->parsed()) return run_extract(ex, cfg);
    if (match->parsed()) return run_match(ma, cfg);
    if (eval->parsed()) return run_eval(ev, cfg);
    if (train->parsed()) return run_train(tr, cfg);
    if (bench->parsed()) return run_bench(be, cfg);
    if (solve->parsed()) return run_solve(so, cfg);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const dsr::NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kNumeric;
  } catch (const std::exception& e) {
    // Unreadable or inconsistent data: bad files, shape mismatches, empty stores.
    std::cerr << "error: " << e.what() << "\n";
    return kFormat;
  }
  return kUsage;
}
