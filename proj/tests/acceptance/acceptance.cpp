// Acceptance runner. With no arguments runs criteria 1-9; otherwise only the
// listed numbers. Prints one PASS/FAIL line per criterion and exits 1 if any
// failed.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>

#include "support/oracles.hpp"
#include "viapt/harness/commands.hpp"
#include "viapt/numerics/svd.hpp"
#include "viapt/prompt/param_count.hpp"
#include "viapt/training/checkpoint.hpp"

using namespace viapt;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("viapt_acceptance_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string fmt(double v, int digits = 4) {
  std::ostringstream os;
  os.precision(digits);
  os << v;
  return os.str();
}

// 1. m=0, lambda=0 is VPT-Deep and m=d, lambda=0 is VPT-Shallow, bit for bit.
template <typename T>
std::size_t endpoint_mismatches(std::size_t inputs) {
  const ViTConfig vit = ViTConfig::desk();
  auto bb = Backbone<T>::init(vit, Rng(11));
  PromptConfig deep_cfg, shallow_cfg;
  deep_cfg.lambda = shallow_cfg.lambda = 0;
  deep_cfg.m = 0;
  shallow_cfg.m = vit.dim;
  auto deep = PromptParams<T>::init(deep_cfg.resolved(vit), vit, Rng(12));
  auto shallow = PromptParams<T>::init(shallow_cfg.resolved(vit), vit, Rng(12));
  std::size_t bad = 0;
  for (std::size_t s = 0; s < inputs; ++s) {
    const auto img = oracle::random_tensor({1, vit.image_side, vit.image_side}, 1000 + s).template cast<T>();
    Tape<T> tape;
    auto e0 = embed_patches(tape, img, bb);
    std::vector<Var<T>> blocks{tape.param(*deep.dom)};
    for (auto& f : deep.fresh) blocks.push_back(tape.param(f));
    if (!bitwise_equal(forward_viapt(e0, deep, bb).logits.value(),
                       forward_vpt_deep(e0, blocks, bb).value()))
      ++bad;
    if (!bitwise_equal(forward_viapt(e0, shallow, bb).logits.value(),
                       forward_vpt_shallow(e0, tape.param(*shallow.dom), bb).value()))
      ++bad;
  }
  return bad;
}

Outcome criterion1() {
  const auto f32 = endpoint_mismatches<float>(100), f64 = endpoint_mismatches<double>(100);
  return {f32 + f64 == 0, "mismatches f32=" + std::to_string(f32) + " f64=" + std::to_string(f64) +
                              " over 100 inputs x 2 endpoints"};
}

// 2. Appendix parameter tables for ViT-B (N=12, p=50, lambda=25, d=768).
Outcome criterion2() {
  const ViTConfig vit = ViTConfig::vit_base();
  PromptConfig p;
  p.p = 50;
  p.lambda = 25;
  const auto rows = cmd_param_count(vit, p, {0, 32, 64, 128, 256, 512, 768});
  const std::uint64_t dom[] = {460800, 441600, 422400, 384000, 307200, 153600, 0};
  const std::uint64_t ours[] = {441600, 424000, 406400, 371200, 300800, 160000, 19200};
  const double dom_pct[] = {0.532, 0.510, 0.488, 0.444, 0.355, 0.177, 0.000};
  const double ours_pct[] = {0.510, 0.490, 0.470, 0.429, 0.347, 0.185, 0.022};
  std::size_t bad = 0;
  double worst_pct = 0;
  for (std::size_t i = 0; i < 7; ++i) {
    if (rows[i].domain_only != dom[i] || rows[i].ours != ours[i]) ++bad;
    worst_pct = std::max({worst_pct, std::abs(rows[i].domain_only_percent - dom_pct[i]),
                          std::abs(rows[i].ours_percent - ours_pct[i])});
  }
  const bool total_ok = count_backbone_parameters(vit) == 86567656u;
  return {bad == 0 && worst_pct <= 1e-3 && total_ok,
          "count rows wrong=" + std::to_string(bad) + " worst percent gap=" + fmt(worst_pct) +
              " backbone=" + std::to_string(count_backbone_parameters(vit))};
}

// 3. Finite differences on the tiny config.
Outcome criterion3() {
  const auto rep = cmd_gradcheck(tiny_gradcheck_config());
  bool gen = false, pca_path = false;
  for (const auto& e : rep.entries) {
    gen |= e.name.rfind("gen.", 0) == 0;
    pca_path |= e.name.rfind("prompt.new.", 0) == 0;
  }
  return {rep.pass && rep.worst < 1e-4 && gen && pca_path,
          std::to_string(rep.entries.size()) + " tensors, worst rel error " + fmt(rep.worst)};
}

// 4. Closed-form KL against a 10^6-sample Monte Carlo estimate.
Outcome criterion4() {
  Tape<double> tape;
  const auto zero = tape.constant(Tensor<double>({8}));
  const double at_origin = kl_to_standard_normal(zero, zero).value().item();
  double worst = 0;
  for (std::uint64_t pair = 0; pair < 10; ++pair) {
    const auto mu = oracle::random_tensor({8}, 500 + pair), lv = oracle::random_tensor({8}, 600 + pair);
    const double closed =
        kl_to_standard_normal(tape.constant(mu), tape.constant(lv)).value().item();
    Rng r = Rng(77).derive("kl-mc-" + std::to_string(pair));
    const std::size_t n = 1000000;
    double acc = 0;
    for (std::size_t s = 0; s < n; ++s) {
      double term = 0;
      for (std::size_t j = 0; j < 8; ++j) {
        const double e = r.next_normal(), sd = std::exp(0.5 * lv[j]), x = mu[j] + sd * e;
        term += -0.5 * e * e - std::log(sd) + 0.5 * x * x;
      }
      acc += term;
    }
    worst = std::max(worst, std::abs(acc / static_cast<double>(n) - closed) / closed);
  }
  return {at_origin == 0.0 && worst < 0.01,
          "KL(0,0)=" + fmt(at_origin) + " worst MC rel error " + fmt(worst)};
}

// 5. PCA retained variance vs eigen oracle; beats random projections.
Outcome criterion5() {
  double worst_rel = 0;
  std::size_t losses = 0, trials = 0;
  Rng rng = Rng(5).derive("random-projections");
  for (std::size_t m : {1, 2, 3}) {
    for (std::uint64_t t = 0; t < 10; ++t) {
      const auto Z = oracle::random_tensor({10, 6}, 900 + 10 * m + t);
      std::vector<double> mean;
      const auto e = oracle::jacobi_eigen(oracle::centred_gram(Z, &mean));
      double want = 0;
      for (std::size_t k = 0; k < m; ++k) want += e.values[k] / 10.0;
      const auto st = fit_pca(Z, m);
      worst_rel = std::max(worst_rel, std::abs(st.retained_variance - want) / want);

      auto residual = [&](const Tensor<double>& Q) {
        double err = 0;
        for (std::size_t i = 0; i < 10; ++i) {
          std::vector<double> c(m, 0.0);
          for (std::size_t k = 0; k < m; ++k)
            for (std::size_t j = 0; j < 6; ++j) c[k] += (Z(i, j) - mean[j]) * Q(j, k);
          for (std::size_t j = 0; j < 6; ++j) {
            double r = Z(i, j) - mean[j];
            for (std::size_t k = 0; k < m; ++k) r -= c[k] * Q(j, k);
            err += r * r;
          }
        }
        return err;
      };
      const double ours = residual(st.basis);
      for (int trial = 0; trial < 100; ++trial, ++trials)
        if (!(ours < residual(random_orthonormal(6, m, rng)))) ++losses;
    }
  }
  return {worst_rel < 1e-8 && losses == 0,
          "worst retained-variance rel error " + fmt(worst_rel) + ", PCA lost " +
              std::to_string(losses) + " of " + std::to_string(trials) + " random-projection trials"};
}

// 6. Inference contracts.
Outcome criterion6() {
  RunConfig cfg;
  const auto data = load_or_generate(cfg);
  auto bb = Backbone<double>::init(cfg.vit, Rng(3));
  auto model = Model<double>::create(bb, cfg.prompt, data.test.classes, Rng(4));

  const InferenceConfig fixed{Strategy::fixed_sampling, 1, 17};
  const auto a = evaluate(model, data.test, fixed), b = evaluate(model, data.test, fixed);
  bool reproducible = summary_json(a) == summary_json(b);
  for (std::size_t i = 0; i < data.test.size(); ++i)
    reproducible &= a.predictions[i].probabilities == b.predictions[i].probabilities;

  // Spread of one class probability over independent noise streams.
  const auto image = data.test.image<double>(0);
  auto spread = [&](std::size_t rounds) {
    std::vector<double> xs;
    for (std::uint64_t rep = 0; rep < 300; ++rep)
      xs.push_back(predict_multi_round(model, image, rounds, Rng(5000 + rep), 0)[0]);
    return std_of(xs);
  };
  const double s1 = spread(1), s4 = spread(4), s16 = spread(16);
  const double r4 = (s4 / s1) / 0.5, r16 = (s16 / s1) / 0.25;
  const bool scaling = s1 > 0 && std::abs(r4 - 1) <= 0.3 && std::abs(r16 - 1) <= 0.3;

  PromptConfig none = cfg.prompt;
  none.lambda = 0;
  auto plain = Model<double>::create(bb, none, data.test.classes, Rng(4));
  const auto m = evaluate(plain, data.test, {Strategy::multi_round, 5, 1});
  const auto f = evaluate(plain, data.test, {Strategy::fixed_sampling, 1, 2});
  const auto d = evaluate(plain, data.test, {Strategy::direct, 1, 0});
  bool collapse = true;
  for (std::size_t i = 0; i < data.test.size(); ++i)
    collapse &= m.predictions[i].probabilities == f.predictions[i].probabilities &&
                m.predictions[i].probabilities == d.predictions[i].probabilities;

  return {reproducible && scaling && collapse,
          std::string("fixed reproducible=") + (reproducible ? "yes" : "no") + " std R1=" + fmt(s1) +
              " R4/theory=" + fmt(r4) + " R16/theory=" + fmt(r16) +
              " lambda=0 collapse=" + (collapse ? "yes" : "no")};
}

// 7. Desk-scale ordering on instance_shift.
Outcome criterion7(std::ostream& log) {
  RunConfig cfg;
  cfg.prompt.lambda = cfg.prompt.p / 2;
  cfg.prompt.m = cfg.vit.dim / 2;

  // Oracle run, fixed before any training: the best classifier that uses
  // only the class templates, scored on the validation split of each seed's
  // dataset. Its mean minus two standard deviations is the floor.
  std::vector<double> oracle_acc;
  for (std::uint64_t s = 1; s <= 5; ++s) {
    auto spec = cfg.data;
    spec.seed = s;
    oracle_acc.push_back(template_only_oracle_accuracy(spec, generate_dataset(spec).val));
  }
  const double floor = mean_of(oracle_acc) - 2 * std_of(oracle_acc);
  log << "  c7 oracle accuracies:";
  for (double a : oracle_acc) log << " " << fmt(a);
  log << "  floor " << fmt(floor) << " chance " << fmt(1.0 / cfg.data.classes) << "\n";

  const auto data = load_or_generate(cfg);
  const auto backbone = obtain_backbone<float>(cfg, nullptr);
  std::vector<double> ours, base;
  std::size_t wins = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    RunConfig c = cfg;
    c.train.seed = seed;
    ours.push_back(run_training(c, backbone, data, {}).best_val_accuracy);
    c.prompt.lambda = 0;
    base.push_back(run_training(c, backbone, data, {}).best_val_accuracy);
    if (ours.back() >= base.back()) ++wins;
    log << "  c7 seed " << seed << " viapt " << fmt(ours.back()) << " lambda=0 " << fmt(base.back())
        << "\n";
  }
  const bool above = mean_of(ours) > floor && mean_of(base) > floor && floor > 1.0 / cfg.data.classes;
  return {wins >= 4 && above, "viapt>=lambda0 in " + std::to_string(wins) + "/5 seeds, means " +
                                  fmt(mean_of(ours)) + " vs " + fmt(mean_of(base)) + ", floor " +
                                  fmt(floor)};
}

// 8. Determinism and persistence.
Outcome criterion8() {
  RunConfig cfg;
  cfg.data.samples = 300;
  cfg.train.epochs = 3;
  cfg.train.warmup_epochs = 1;
  const auto data = load_or_generate(cfg);
  const auto backbone = Backbone<float>::init(cfg.vit, Rng(8));
  const auto a = scratch("c8a"), b = scratch("c8b");
  run_training(cfg, backbone, data, a);
  run_training(cfg, backbone, data, b);
  bool same = true;
  for (const char* f : {"metrics.jsonl", "best.ckpt", "last.ckpt", "config.txt"})
    same &= read_file_bytes(a / f) == read_file_bytes(b / f);

  const auto bytes = read_file_bytes(a / "last.ckpt");
  auto loaded = model_from_archive<float>(parse_archive(bytes));
  const bool round_trip =
      serialize_archive(model_archive(loaded.model, &loaded.adam, loaded.metadata)) == bytes;

  std::size_t rejected = 0, tried = 0;
  auto expect_reject = [&](const std::vector<std::uint8_t>& bad) {
    ++tried;
    try {
      parse_archive(bad);
    } catch (const FormatError&) {
      ++rejected;
    }
  };
  for (std::size_t pos : {std::size_t{0}, bytes.size() / 3, bytes.size() / 2, bytes.size() - 1}) {
    auto flipped = bytes;
    flipped[pos] ^= 0x10;
    expect_reject(flipped);
  }
  expect_reject({bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(bytes.size() / 2)});
  expect_reject({});
  fs::remove_all(a);
  fs::remove_all(b);
  return {same && round_trip && rejected == tried,
          std::string("identical runs=") + (same ? "yes" : "no") + " round trip=" +
              (round_trip ? "yes" : "no") + " corrupted rejected " + std::to_string(rejected) + "/" +
              std::to_string(tried)};
}

// 9. Sweep endpoints vs standalone baselines; CSV schema.
Outcome criterion9(std::ostream& log) {
  RunConfig cfg;
  cfg.seeds = {1, 2};
  cfg.train.epochs = 12;
  cfg.train.warmup_epochs = 4;
  const auto dir = scratch("c9");
  cfg.out = dir.string();
  std::ostringstream sweep_log;
  const auto rows = cmd_sweep_m(cfg, cfg.effective_m_list(), true, sweep_log);

  std::ifstream in(dir / "sweep.csv");
  const std::string text{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  bool schema = false;
  try {
    schema = parse_sweep_csv(text).size() == rows.size();
  } catch (const FormatError& e) {
    log << "  c9 csv: " << e.what() << "\n";
  }

  const auto data = load_or_generate(cfg);
  const auto backbone = obtain_backbone<float>(cfg, nullptr);
  bool endpoints = true;
  for (const auto& [mode, m] : {std::pair{PromptMode::vpt_deep, std::size_t{0}},
                                std::pair{PromptMode::vpt_shallow, cfg.vit.dim}}) {
    const auto cell = std::find_if(rows.begin(), rows.end(),
                                   [&](const SweepRow& r) { return r.m == m && r.lambda == 0; });
    if (cell == rows.end()) {
      endpoints = false;
      continue;
    }
    for (std::size_t i = 0; i < cfg.seeds.size(); ++i) {
      RunConfig c = cfg;
      c.prompt.mode = mode;
      c.train.seed = cfg.seeds[i];
      const auto rep = run_training(c, backbone, data, {});
      const bool ok = rep.best_val_accuracy == cell->accuracies[i] &&
                      rep.counts.total_trainable == cell->trainable_params;
      endpoints &= ok;
      log << "  c9 " << to_string(mode) << " seed " << cfg.seeds[i] << " standalone "
          << fmt(rep.best_val_accuracy, 17) << " sweep " << fmt(cell->accuracies[i], 17)
          << " params " << rep.counts.total_trainable << "/" << cell->trainable_params
          << (ok ? "" : " MISMATCH") << "\n";
    }
  }

  // Recorded, not judged.
  for (std::size_t lambda : {cfg.prompt.lambda, std::size_t{0}}) {
    const SweepRow* best = nullptr;
    log << "  c9 lambda=" << lambda << ":";
    for (const auto& r : rows) {
      if (r.lambda != lambda) continue;
      log << " m" << r.m << "=" << fmt(r.accuracy_mean);
      if (!best || r.accuracy_mean > best->accuracy_mean) best = &r;
    }
    const bool interior = best && best->m != 0 && best->m != cfg.vit.dim;
    log << (interior ? "  interior maximum at m=" + std::to_string(best->m) : "  no interior maximum")
        << "\n";
  }
  fs::remove_all(dir);
  return {schema && endpoints, std::string("csv schema=") + (schema ? "ok" : "bad") +
                                   " endpoint cells match=" + (endpoints ? "yes" : "no")};
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<int> which;
  for (int i = 1; i < argc; ++i) which.push_back(std::atoi(argv[i]));
  if (which.empty()) which = {1, 2, 3, 4, 5, 6, 7, 8, 9};

  const std::vector<std::function<Outcome()>> criteria = {
      criterion1, criterion2, criterion3, criterion4, criterion5, criterion6,
      [] { return criterion7(std::cout); }, criterion8, [] { return criterion9(std::cout); }};

  int failed = 0;
  for (int n : which) {
    if (n < 1 || n > 9) {
      std::cerr << "unknown criterion " << n << "\n";
      return 2;
    }
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[n - 1]();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cout << "criterion " << n << ": " << (o.pass ? "PASS" : "FAIL") << "  " << o.detail << "  ("
              << fmt(secs, 3) << " s)" << std::endl;
    failed += o.pass ? 0 : 1;
  }
  return failed ? 1 : 0;
}
