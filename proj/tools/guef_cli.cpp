// Command-line front end: synth, train, infer, eval, fuse, gradcheck.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "guef/config.hpp"
#include "guef/error.hpp"
#include "guef/evidence.hpp"
#include "guef/gradcheck.hpp"
#include "guef/io.hpp"
#include "guef/localization.hpp"
#include "guef/synth.hpp"
#include "guef/training.hpp"

namespace {

using json = nlohmann::json;

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_path, "key = value configuration file");
  cmd->add_option("--seed", c.seed, "random seed (overrides the config)");
}

guef::RunConfig load_config(const Common& c) {
  guef::RunConfig cfg = c.config_path.empty() ? guef::RunConfig{} : guef::RunConfig::load(c.config_path);
  if (c.seed) cfg.seed = c.seed;
  cfg.validate();
  return cfg;
}

std::ostream& open_out(const std::string& path, std::ofstream& file) {
  if (path.empty() || path == "-") return std::cout;
  file.open(path, std::ios::trunc);
  if (!file) throw guef::FormatError(guef::FormatErrorKind::kIo, "cannot write " + path);
  return file;
}

int run_fuse(const std::string& input, const std::string& output) {
  std::ifstream in(input);
  if (!in) throw guef::FormatError(guef::FormatErrorKind::kIo, "cannot open " + input);
  std::ofstream file;
  std::ostream& out = open_out(output, file);
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const json j = json::parse(line);
    const json& rows = j.is_object() ? j.at("evidence") : j;
    std::vector<guef::BeliefMass> masses;
    for (const auto& row : rows) masses.push_back(guef::masses_from_evidence(guef::Evidence(row.get<std::vector<double>>())));
    std::vector<double> conflicts;
    guef::BeliefMass acc = masses.at(0);
    for (std::size_t i = 1; i < masses.size(); ++i) {
      conflicts.push_back(guef::conflict(acc, masses[i]));
      acc = guef::combine(acc, masses[i]);
    }
    out << json{{"singletons", acc.singletons}, {"theta", acc.theta}, {"conflicts", conflicts}}.dump() << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Evidential fusion and hybrid attention for weakly supervised temporal action localization"};
  app.require_subcommand(1);

  Common synth_c, train_c, infer_c, eval_c, fuse_c, grad_c;
  std::string out_dir = "data";
  auto* synth = app.add_subcommand("synth", "generate a synthetic two-stream dataset");
  add_common(synth, synth_c);
  synth->add_option("--out", out_dir, "output directory");

  std::string manifest_path, checkpoint_path = "model.ckpt", log_path, split_train = "train";
  auto* train = app.add_subcommand("train", "train a model on a manifest");
  add_common(train, train_c);
  train->add_option("--manifest", manifest_path)->required();
  train->add_option("--checkpoint", checkpoint_path, "checkpoint output path");
  train->add_option("--log", log_path, "loss log path (default stdout)");
  train->add_option("--split", split_train, "manifest split to train on");

  std::string infer_manifest, infer_ckpt, proposals_out, split_test = "test";
  auto* infer = app.add_subcommand("infer", "write localization proposals");
  add_common(infer, infer_c);
  infer->add_option("--manifest", infer_manifest)->required();
  infer->add_option("--checkpoint", infer_ckpt)->required();
  infer->add_option("--out", proposals_out, "proposal file (default stdout)");
  infer->add_option("--split", split_test, "manifest split to run on");

  std::string eval_manifest, eval_proposals, eval_split = "test";
  auto* eval = app.add_subcommand("eval", "report mAP at t-IoU 0.1-0.7");
  add_common(eval, eval_c);
  eval->add_option("--manifest", eval_manifest)->required();
  eval->add_option("--proposals", eval_proposals)->required();
  eval->add_option("--split", eval_split, "manifest split holding the ground truth");

  std::string fuse_in, fuse_out;
  auto* fuse = app.add_subcommand("fuse", "fuse evidence rows: each line is [[e...],[e...],...]");
  add_common(fuse, fuse_c);
  fuse->add_option("--input", fuse_in)->required();
  fuse->add_option("--out", fuse_out, "output (default stdout)");

  std::size_t grad_seeds = 10;
  double grad_tol = 1e-4;
  auto* gradcheck = app.add_subcommand("gradcheck", "compare analytic and finite-difference gradients");
  add_common(gradcheck, grad_c);
  gradcheck->add_option("--seeds", grad_seeds, "number of seeded configurations");
  gradcheck->add_option("--tolerance", grad_tol, "maximum relative error");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) {
      const auto cfg = load_config(synth_c);
      const auto data = guef::synthesize(cfg, cfg.require_seed());
      const auto manifest = guef::write_dataset(data, out_dir);
      std::cerr << "wrote " << manifest.videos.size() << " videos to " << out_dir << "\n";
    } else if (*train) {
      auto cfg = load_config(train_c);
      const auto manifest = guef::Manifest::read(manifest_path);
      const auto samples = guef::load_samples(manifest, split_train, cfg.dims);
      guef::set_mass_audit(cfg.audit_masses);
      std::ofstream file;
      std::ostream& log = open_out(log_path, file);
      guef::TrainHooks hooks{&log, checkpoint_path};
      const auto result = guef::train(cfg, samples, hooks);
      if (cfg.audit_masses) {
        const auto stats = guef::mass_audit_stats();
        std::cerr << "mass audit: " << stats.checked << " masses checked, max |sum-1| = " << stats.max_deviation << "\n";
      }
      std::cerr << "trained " << cfg.iterations << " iterations over " << result.total_epochs << " epochs\n";
    } else if (*infer) {
      auto cfg = load_config(infer_c);
      const auto params = guef::read_checkpoint(infer_ckpt);
      cfg.dims = params.dims();
      const auto manifest = guef::Manifest::read(infer_manifest);
      const auto samples = guef::load_samples(manifest, split_test, cfg.dims);
      const auto result = guef::infer(params, cfg, samples);
      std::ofstream file;
      guef::write_proposals(open_out(proposals_out, file), result.proposals, &manifest);
      std::fprintf(stderr, "video accuracy %.4f over %zu videos, %zu proposals\n",
                   guef::video_accuracy(result.predictions, samples), samples.size(), result.proposals.size());
    } else if (*eval) {
      const auto manifest = guef::Manifest::read(eval_manifest);
      std::ifstream in(eval_proposals);
      if (!in) throw guef::FormatError(guef::FormatErrorKind::kIo, "cannot open " + eval_proposals);
      const auto proposals = guef::read_proposals(in);
      const auto gt = manifest.ground_truth(eval_split);
      std::cout << guef::format_report(guef::evaluate(proposals, gt));
    } else if (*fuse) {
      return run_fuse(fuse_in, fuse_out);
    } else if (*gradcheck) {
      const auto cfg = load_config(grad_c);
      bool ok = true;
      for (const auto& r : guef::run_gradient_suite(cfg.require_seed(), grad_seeds)) {
        const bool pass = r.max_relative_error < grad_tol;
        ok = ok && pass;
        std::printf("%-6s max relative error %.3e  %s\n", r.name.c_str(), r.max_relative_error, pass ? "PASS" : "FAIL");
      }
      return ok ? 0 : 1;
    }
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 2;
  }
  return 0;
}
