// Command-line front end for the sleep-control experiments.

#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "cellsleep/errors.hpp"
#include "cellsleep/harness.hpp"

namespace fs = std::filesystem;
using namespace cellsleep;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("-c,--config", c.config, "experiment config (JSON)");
  cmd->add_option("--seed", c.seed, "override the config seed");
}

harness::ExperimentConfig resolve(const Common& c) {
  try {
    auto cfg = c.config.empty() ? harness::default_config() : harness::load_config(c.config);
    if (c.seed) cfg.seed = *c.seed;
    cfg.validate();
    return cfg;
  } catch (const std::exception& e) {
    throw StageError("config", e.what());
  }
}

std::vector<std::size_t> parse_counts(const std::string& text) {
  std::vector<std::size_t> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto next = text.find(',', pos);
    const std::string item = text.substr(pos, next == std::string::npos ? std::string::npos : next - pos);
    try {
      std::size_t used = 0;
      const long v = std::stol(item, &used);
      if (used != item.size() || v <= 0) throw std::invalid_argument(item);
      out.push_back(static_cast<std::size_t>(v));
    } catch (const std::exception&) {
      throw ValidationError("bad SBS count '" + item + "'");
    }
    if (next == std::string::npos) break;
    pos = next + 1;
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Base-station sleep control: traffic, federated prediction, agent training, evaluation"};
  app.require_subcommand(1);

  Common common;
  std::string out;
  std::string predictor_ckpt;
  std::string agent_ckpt;
  std::string counts = "4,8";
  std::string run_dir;

  auto* gen = app.add_subcommand("generate-traffic", "write the configured grid trace as CSV");
  add_common(gen, common);
  gen->add_option("-o,--out", out, "output CSV")->required();

  auto* fl_cmd = app.add_subcommand("train-fl", "train the federated load predictor");
  add_common(fl_cmd, common);
  fl_cmd->add_option("-o,--out", out, "output directory")->required();

  auto* agent_cmd = app.add_subcommand("train-agent", "train the switching agent");
  add_common(agent_cmd, common);
  agent_cmd->add_option("-o,--out", out, "output directory")->required();
  agent_cmd->add_option("--predictor", predictor_ckpt, "reuse a trained predictor checkpoint");

  auto* eval_cmd = app.add_subcommand("evaluate", "full pipeline with online evaluation");
  add_common(eval_cmd, common);
  eval_cmd->add_option("-o,--out", out, "output directory")->required();
  eval_cmd->add_option("--predictor", predictor_ckpt, "reuse a trained predictor checkpoint");
  eval_cmd->add_option("--agent", agent_ckpt, "reuse a trained agent checkpoint");

  auto* sweep_cmd = app.add_subcommand("sweep", "pipeline per SBS count");
  add_common(sweep_cmd, common);
  sweep_cmd->add_option("-o,--out", out, "output directory")->required();
  sweep_cmd->add_option("--counts", counts, "comma-separated SBS counts")->capture_default_str();

  auto* fig_cmd = app.add_subcommand("emit-figures", "plot-ready CSVs from a finished run");
  fig_cmd->add_option("run_dir", run_dir, "run directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      const auto cfg = resolve(common);
      try {
        const auto grids = harness::load_grids(cfg);
        std::ofstream f(out, std::ios::binary | std::ios::trunc);
        if (!f) throw Error("cannot write '" + out + "'");
        traffic::write_trace(f, grids);
      } catch (const std::exception& e) {
        throw StageError("traffic", e.what());
      }
    } else if (fl_cmd->parsed() || agent_cmd->parsed() || eval_cmd->parsed()) {
      const auto cfg = resolve(common);
      harness::PipelineInputs inputs;
      if (!predictor_ckpt.empty()) inputs.predictor_checkpoint = fs::path(predictor_ckpt);
      if (!agent_ckpt.empty()) inputs.agent_checkpoint = fs::path(agent_ckpt);
      const auto last = fl_cmd->parsed()      ? harness::PipelineStage::Predictor
                        : agent_cmd->parsed() ? harness::PipelineStage::Agent
                                              : harness::PipelineStage::Evaluate;
      harness::run_pipeline(cfg, out, last, inputs);
    } else if (sweep_cmd->parsed()) {
      const auto cfg = resolve(common);
      std::vector<std::size_t> list;
      try {
        list = parse_counts(counts);
      } catch (const std::exception& e) {
        throw StageError("config", e.what());
      }
      try {
        harness::sweep_nsbs(cfg, list, out);
      } catch (const StageError&) {
        throw;
      } catch (const std::exception& e) {
        throw StageError("sweep", e.what());
      }
    } else if (fig_cmd->parsed()) {
      try {
        harness::emit_figures(run_dir);
      } catch (const std::exception& e) {
        throw StageError("figures", e.what());
      }
    }
  } catch (const StageError& e) {
    std::cerr << "error " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error [internal] " << e.what() << '\n';
    return 1;
  }
  return 0;
}
