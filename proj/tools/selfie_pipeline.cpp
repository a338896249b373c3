// Command-line driver for the selfie-synergy pipeline.
//
// Subcommands map one-to-one onto pipeline stages plus dataset generation,
// ablation, and heatmap export. Exit codes: 0 success, 2 input error,
// 3 missing dependency artifact, 4 numeric failure.

#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "synergy/pipeline.hpp"
#include "synergy/synthetic.hpp"

namespace {

using namespace synergy;

struct CommonArgs {
  std::string config;
  std::string manifest;
  std::string store;
  std::uint64_t seed = 0;
  bool seed_set = false;
  bool quiet = false;
};

void add_common(CLI::App* cmd, CommonArgs& a) {
  cmd->add_option("--config", a.config,
                  "pipeline config file (dotted key = value lines)");
  cmd->add_option("--manifest", a.manifest, "dataset manifest (TSV)")
      ->required();
  cmd->add_option("--store", a.store, "artifact store directory")->required();
  cmd->add_option_function<std::uint64_t>(
      "--seed",
      [&a](std::uint64_t v) {
        a.seed = v;
        a.seed_set = true;
      },
      "override the master seed (derived stage seeds follow)");
  cmd->add_flag("--quiet", a.quiet, "suppress per-stage progress lines");
}

PipelineContext context_from(const CommonArgs& a) {
  PipelineConfig cfg;
  if (a.config.empty())
    finalize_config(cfg);
  else
    cfg = load_config(a.config);
  if (a.seed_set) override_master_seed(cfg, a.seed);
  return make_context(std::move(cfg), a.manifest, a.store, !a.quiet);
}

void print_report(const std::string& name, const EvalReport& rep) {
  std::cout << name << ": accuracy = " << format_double(rep.accuracy)
            << ", average_precision = " << format_double(rep.average_precision)
            << " (" << rep.decisions.size() << " test records)\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"selfie detection via synergy-regularized CNN features"};
  app.require_subcommand(1);

  // --- gen-synthetic ------------------------------------------------------
  std::string gen_out;
  int gen_n = 0, gen_size = 227;
  std::uint64_t gen_seed = 1;
  {
    CLI::App* cmd = app.add_subcommand(
        "gen-synthetic", "generate a labeled synthetic selfie dataset");
    cmd->add_option("--out", gen_out, "output directory")->required();
    cmd->add_option("--n", gen_n, "images per class")->required();
    cmd->add_option("--size", gen_size, "square image size in pixels");
    cmd->add_option("--seed", gen_seed, "generator seed");
    cmd->callback([&] {
      const SyntheticResult res =
          generate_synthetic_dataset(gen_n, gen_seed, gen_out, gen_size);
      std::cout << "wrote " << res.records.size() << " images and "
                << (std::filesystem::path(gen_out) / "manifest.tsv").string()
                << "\n";
    });
  }

  // --- single stages ------------------------------------------------------
  CommonArgs a;
  auto stage_cmd = [&](const std::string& name, const std::string& desc,
                       auto fn) {
    CLI::App* cmd = app.add_subcommand(name, desc);
    add_common(cmd, a);
    cmd->callback([&a, fn] { fn(context_from(a)); });
    return cmd;
  };

  stage_cmd("split", "assign train/val/test tags (stratified 60/10/30)",
            [](const PipelineContext& c) { run_stage_split(c); });
  stage_cmd("features", "compute hierarchical HOG and LBP banks",
            [](const PipelineContext& c) { run_stage_features(c); });
  stage_cmd("fit-cca", "fit PCA + CCA on the train split; emit synergy bank",
            [](const PipelineContext& c) { run_stage_cca(c); });
  stage_cmd("train-net", "train the CNN to regress synergy targets",
            [](const PipelineContext& c) { run_stage_train(c); });
  stage_cmd("descriptors", "pool conv activations at DoG keypoints",
            [](const PipelineContext& c) { run_stage_descriptors(c); });
  stage_cmd("train-svm", "train the linear SVM on train-split descriptors",
            [](const PipelineContext& c) { run_stage_svm(c); });
  stage_cmd("eval", "score the test split and write the report",
            [](const PipelineContext& c) {
              const EvalStage e = run_stage_eval(c);
              print_report("eval", e.report);
            });
  stage_cmd("baseline", "SVM on raw synergy features (no CNN)",
            [](const PipelineContext& c) {
              const BaselineStage b = run_baseline_synergy_svm(c);
              print_report("baseline", b.report);
            });
  stage_cmd("run-all", "run every stage in order and print the summary",
            [](const PipelineContext& c) {
              const RunAllResult r = run_all(c);
              print_report("eval", r.eval.report);
              print_report("baseline", r.baseline.report);
            });

  // --- ablate -------------------------------------------------------------
  std::string masked_manifest;
  {
    CLI::App* cmd = app.add_subcommand(
        "ablate", "re-evaluate the frozen pipeline on mask-ablated images");
    add_common(cmd, a);
    cmd->add_option("--masked-manifest", masked_manifest,
                    "manifest carrying mask rects (defaults to --manifest)");
    cmd->callback([&] {
      const PipelineContext c = context_from(a);
      const std::string mm = masked_manifest.empty() ? a.manifest
                                                     : masked_manifest;
      const AblationResult r = run_ablation(c, mm);
      std::cout << "ablate: accuracy_normal = "
                << format_double(r.normal.accuracy)
                << ", accuracy_masked = " << format_double(r.masked.accuracy)
                << ", drop_points = " << format_double(r.drop_points) << " ("
                << r.skipped.size() << " skipped)\n";
    });
  }

  // --- heatmaps -----------------------------------------------------------
  std::vector<std::string> hm_ids;
  std::vector<int> hm_filters;
  int hm_layer = 0;
  {
    CLI::App* cmd = app.add_subcommand(
        "heatmaps", "export conv activation maps as grayscale PGM heatmaps");
    add_common(cmd, a);
    cmd->add_option("--ids", hm_ids, "manifest ids (comma separated)")
        ->required()
        ->delimiter(',');
    cmd->add_option("--layer", hm_layer, "conv layer ordinal (0-based)");
    cmd->add_option("--filters", hm_filters, "filter indices (comma separated)")
        ->required()
        ->delimiter(',');
    cmd->callback([&] {
      const PipelineContext c = context_from(a);
      const auto paths = export_heatmaps(c, hm_ids, hm_layer, hm_filters);
      for (const auto& p : paths) std::cout << "wrote " << p.string() << "\n";
    });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  } catch (const dependency_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const numeric_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const input_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
