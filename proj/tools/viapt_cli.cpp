// Command-line front end. Exit codes: 0 ok, 2 config, 3 numeric, 4 format.
#include <CLI11.hpp>

#include <iostream>
#include <optional>

#include "viapt/harness/commands.hpp"

using namespace viapt;

namespace {

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out, precision, mode, strategy;
  std::optional<std::size_t> m, lambda, rounds;
  std::vector<std::string> sets;

  void attach(CLI::App* app) {
    app->add_option("--config", config, "key = value config file");
    app->add_option("--seed", seed, "training seed");
    app->add_option("--out", out, "output directory");
    app->add_option("--precision", precision, "f32 or f64");
    app->add_option("--mode", mode, "viapt, vpt-shallow, vpt-deep, ablation-no-pca, ...");
    app->add_option("--m", m, "retained PCA dims");
    app->add_option("--lambda", lambda, "instance prompt tokens");
    app->add_option("--strategy", strategy, "multi, fixed or direct");
    app->add_option("--rounds", rounds, "multi-round R");
    app->add_option("--set", sets, "extra key=value overrides")->take_all();
  }

  void apply(RunConfig& cfg) const {
    if (!config.empty()) cfg.apply_file(config);
    for (const auto& kv : sets) cfg.apply_text(kv);
    if (seed) cfg.set("train.seed", std::to_string(*seed));
    if (out) cfg.set("out", *out);
    if (precision) cfg.set("precision", *precision);
    if (mode) cfg.set("prompt.mode", *mode);
    if (m) cfg.set("prompt.m", std::to_string(*m));
    if (lambda) cfg.set("prompt.lambda", std::to_string(*lambda));
    if (strategy) cfg.set("infer.strategy", *strategy);
    if (rounds) cfg.set("infer.rounds", std::to_string(*rounds));
  }
};

std::vector<std::size_t> parse_list(const std::string& s) {
  std::vector<std::size_t> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stoull(item));
    } catch (const std::exception&) {
      throw ConfigError("bad list entry '" + item + "'");
    }
  }
  return out;
}

int run(int argc, char** argv) {
  CLI::App app{"ViaPT desk-scale toolkit"};
  app.require_subcommand(1);

  std::map<std::string, CommonFlags> flags;
  auto sub = [&](const std::string& name, const std::string& help) {
    auto* s = app.add_subcommand(name, help);
    flags[name].attach(s);
    return s;
  };

  auto* gen = sub("gen-data", "write synthetic dataset splits");
  auto* pre = sub("pretrain-backbone", "pretrain the frozen backbone on rotation prediction");
  auto* trn = sub("train", "prompt-tune one model");
  auto* evl = sub("eval", "evaluate a checkpoint");
  std::string checkpoint, split = "test";
  evl->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
  evl->add_option("--split", split, "train, val or test");
  auto* swp = sub("sweep-m", "accuracy over the m spectrum");
  std::string m_list;
  bool instance_only = false;
  swp->add_option("--m-list", m_list, "comma separated m values (default 0,d/4,d/2,3d/4,d)");
  swp->add_flag("--instance-only", instance_only, "skip the lambda = 0 rows");
  auto* abl = sub("ablate", "ablation rows");
  auto* pc = sub("param-count", "prompt parameter accounting");
  std::string preset = "vit-base";
  pc->add_option("--preset", preset, "vit-base (p=50, lambda=25) or desk");
  pc->add_option("--m-list", m_list, "comma separated m values");
  auto* gc = sub("gradcheck", "finite-difference check on the tiny config");

  CLI11_PARSE(app, argc, argv);

  auto* chosen = app.get_subcommands().front();
  const std::string name = chosen->get_name();
  RunConfig cfg = name == "gradcheck" ? tiny_gradcheck_config() : RunConfig{};
  if (name == "param-count" && preset == "vit-base") {
    cfg.vit = ViTConfig::vit_base();
    cfg.prompt.p = 50;
    cfg.prompt.lambda = 25;
    cfg.m_list = {0, 32, 64, 128, 256, 512, 768};
  } else if (name == "param-count" && preset != "desk") {
    throw ConfigError("unknown preset '" + preset + "'");
  }
  flags[name].apply(cfg);
  if (!m_list.empty()) cfg.m_list = parse_list(m_list);
  cfg.vit.classes = cfg.data.classes;

  if (chosen == gen) {
    cmd_gen_data(cfg, std::cout);
  } else if (chosen == pre) {
    cmd_pretrain_backbone(cfg, std::cout);
  } else if (chosen == trn) {
    cmd_train(cfg, std::cout);
  } else if (chosen == evl) {
    cmd_eval(cfg, checkpoint, split, std::cout);
  } else if (chosen == swp) {
    const auto rows = cmd_sweep_m(cfg, cfg.effective_m_list(), !instance_only, std::cout);
    std::cout << sweep_csv(rows);
  } else if (chosen == abl) {
    for (const auto& r : cmd_ablate(cfg, std::cout))
      std::cout << r.name << " " << r.accuracy_mean << " +- " << r.accuracy_std << "\n";
  } else if (chosen == pc) {
    if (preset == "vit-base") cfg.vit.classes = 1000;
    const auto rows = cmd_param_count(cfg.vit, cfg.prompt, cfg.effective_m_list());
    std::cout << param_count_table(rows, cfg.vit);
  } else if (chosen == gc) {
    const auto rep = cmd_gradcheck(cfg);
    for (const auto& e : rep.entries)
      std::cout << e.name << " elements=" << e.elements << " max_rel_error=" << e.max_rel_error
                << "\n";
    std::cout << (rep.pass ? "PASS" : "FAIL") << " worst=" << rep.worst << "\n";
    return rep.pass ? 0 : 3;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const ModeMismatchError& e) {
    std::cerr << "mode mismatch: " << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 3;
  } catch (const FormatError& e) {
    std::cerr << "format error: " << e.what() << "\n";
    return 4;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
