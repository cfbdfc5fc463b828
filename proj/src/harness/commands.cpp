#include "viapt/harness/commands.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "viapt/numerics/ops.hpp"
#include "viapt/training/loss.hpp"
#include "viapt/training/schedule.hpp"

namespace fs = std::filesystem;

namespace viapt {

double mean_of(const std::vector<double>& xs) {
  if (xs.empty()) return 0.0;
  return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

double std_of(const std::vector<double>& xs) {
  if (xs.size() < 2) return 0.0;
  const double m = mean_of(xs);
  double s = 0;
  for (double x : xs) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(xs.size() - 1));
}

DatasetSplits load_or_generate(const RunConfig& cfg) {
  if (!cfg.data_dir.empty()) return read_splits(cfg.data_dir);
  return generate_dataset(cfg.data);
}

template <typename T>
Backbone<T> pretrain_backbone(const RunConfig& cfg, std::ostream* log) {
  ViTConfig vit = cfg.vit;
  vit.classes = 4;
  SyntheticDatasetSpec spec;
  spec.variant = DatasetVariant::pretext_rotation;
  spec.samples = cfg.backbone.samples;
  spec.side = static_cast<std::uint32_t>(vit.image_side);
  spec.channels = static_cast<std::uint32_t>(vit.channels);
  spec.noise = cfg.data.noise;
  spec.seed = cfg.backbone.seed;
  const DatasetSplits data = generate_dataset(spec);

  const Rng root = Rng(cfg.backbone.seed).derive("backbone");
  auto bb = Backbone<T>::init(vit, root);
  bb.set_all_trainable();
  auto params = bb.parameters();
  AdamState<T> adam;
  const std::size_t n = data.train.size(), batch = cfg.train.batch;
  const std::size_t spe = (n + batch - 1) / batch;
  const std::size_t total = cfg.backbone.epochs * spe;
  const std::size_t warmup = std::min<std::size_t>(spe, total);
  std::vector<std::size_t> order(n);
  std::size_t step = 0;
  for (std::size_t epoch = 1; epoch <= cfg.backbone.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng sh = root.derive("shuffle").derive(epoch);
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[sh.next_below(i)]);
    double loss_sum = 0;
    for (std::size_t b = 0; b < spe; ++b) {
      for (auto* p : params) p->zero_grad();
      const std::size_t lo = b * batch, hi = std::min(n, lo + batch);
      for (std::size_t pos = lo; pos < hi; ++pos) {
        Tape<T> tape;
        auto logits = forward_plain(embed_patches(tape, data.train.image<T>(order[pos]), bb), bb);
        auto xent = cross_entropy(logits, data.train.labels[order[pos]]);
        loss_sum += static_cast<double>(xent.value().item());
        tape.backward(ops::scale(xent, T(1) / static_cast<T>(hi - lo)));
      }
      clip_global_norm(params, cfg.train.clip_norm);
      optimizer_step(params, adam, lr_schedule(step++, total, warmup, cfg.backbone.lr));
    }
    if (log) {
      std::size_t correct = 0;
      for (std::size_t i = 0; i < data.val.size(); ++i) {
        Tape<T> tape;
        const auto& v = forward_plain(embed_patches(tape, data.val.image<T>(i), bb), bb).value();
        std::size_t arg = 0;
        for (std::size_t c = 1; c < v.size(); ++c)
          if (v[c] > v[arg]) arg = c;
        correct += arg == data.val.labels[i] ? 1 : 0;
      }
      *log << "pretrain epoch " << epoch << " xent " << loss_sum / static_cast<double>(n)
           << " val_accuracy " << static_cast<double>(correct) / static_cast<double>(data.val.size())
           << "\n";
    }
  }
  bb.freeze_except_head();
  return bb;
}

template <typename T>
Backbone<T> obtain_backbone(const RunConfig& cfg, std::ostream* log) {
  if (cfg.backbone.path.empty()) return pretrain_backbone<T>(cfg, log);
  auto bb = backbone_from_archive<T>(read_archive(cfg.backbone.path));
  ViTConfig want = cfg.vit, have = bb.config;
  want.classes = have.classes;
  if (!(want == have)) throw ConfigError("backbone checkpoint does not match the configured ViT");
  return bb;
}

template <typename T>
TrainReport run_training(const RunConfig& cfg, const Backbone<T>& backbone,
                         const DatasetSplits& data, const fs::path& out) {
  const Rng init = Rng(cfg.train.seed).derive("model-init");
  auto model = Model<T>::create(backbone, cfg.prompt, data.train.classes, init);
  std::ofstream metrics;
  if (!out.empty()) {
    fs::create_directories(out);
    std::ofstream(out / "config.txt") << cfg.to_text();
    metrics.open(out / "metrics.jsonl", std::ios::trunc);
  }
  MetricsSink sink;
  if (metrics.is_open()) sink = [&](const EpochMetrics& m) { metrics << to_json(m).dump() << "\n"; };
  auto res = train(std::move(model), cfg.train, data.train, data.val, sink);

  TrainReport rep;
  rep.best_val_accuracy = res.best_val.accuracy;
  rep.best_val_loss = res.best_val.loss.total;
  rep.best_epoch = res.best_epoch;
  rep.counts = count_parameters(res.best.prompt, res.best.vit);
  rep.metrics = res.metrics;
  if (!out.empty()) {
    nlohmann::json meta;
    meta["config"] = cfg.snapshot();
    meta["rng"] = {{"algorithm", std::string(Rng::kAlgorithm)}, {"seed", cfg.train.seed},
                   {"counter", 0}};
    meta["step"] = res.steps;
    meta["epoch"] = res.best_epoch;
    write_archive(model_archive(res.best, &res.adam, meta), out / "best.ckpt");
    meta["epoch"] = cfg.train.epochs;
    write_archive(model_archive(res.last, &res.adam, meta), out / "last.ckpt");
  }
  return rep;
}

void cmd_gen_data(const RunConfig& cfg, std::ostream& log) {
  const fs::path dir = cfg.data_dir.empty() ? fs::path(cfg.out) / "data" : fs::path(cfg.data_dir);
  const auto splits = generate_dataset(cfg.data);
  write_splits(splits, dir);
  std::ofstream(dir / "config.txt") << cfg.to_text();
  log << "wrote " << splits.train.size() << "/" << splits.val.size() << "/" << splits.test.size()
      << " images to " << dir.string() << "\n";
  if (cfg.data.variant != DatasetVariant::pretext_rotation) {
    const double a = template_only_oracle_accuracy(cfg.data, splits.test);
    const double b = instance_aware_oracle_accuracy(cfg.data, splits.test);
    log << "oracle test accuracy: template_only " << a << " instance_aware " << b << " gap "
        << b - a << "\n";
  }
}

fs::path cmd_pretrain_backbone(const RunConfig& cfg, std::ostream& log) {
  const fs::path path = fs::path(cfg.out) / "backbone.ckpt";
  nlohmann::json meta;
  meta["config"] = cfg.snapshot();
  meta["rng"] = {{"algorithm", std::string(Rng::kAlgorithm)}, {"seed", cfg.backbone.seed},
                 {"counter", 0}};
  if (cfg.precision == Precision::f64) {
    auto bb = pretrain_backbone<double>(cfg, &log);
    write_archive(backbone_archive(bb, meta), path);
  } else {
    auto bb = pretrain_backbone<float>(cfg, &log);
    write_archive(backbone_archive(bb, meta), path);
  }
  std::ofstream(fs::path(cfg.out) / "config.txt") << cfg.to_text();
  log << "wrote " << path.string() << "\n";
  return path;
}

TrainReport cmd_train(const RunConfig& cfg, std::ostream& log) {
  const auto data = load_or_generate(cfg);
  TrainReport rep;
  if (cfg.precision == Precision::f64)
    rep = run_training(cfg, obtain_backbone<double>(cfg, &log), data, cfg.out);
  else
    rep = run_training(cfg, obtain_backbone<float>(cfg, &log), data, cfg.out);
  log << "best epoch " << rep.best_epoch << " val_accuracy " << rep.best_val_accuracy
      << " val_loss " << rep.best_val_loss << " trainable " << rep.counts.total_trainable << "\n";
  return rep;
}

namespace {

const Dataset& pick_split(const DatasetSplits& d, const std::string& split) {
  if (split == "train") return d.train;
  if (split == "val") return d.val;
  if (split == "test") return d.test;
  throw ConfigError("unknown split '" + split + "'");
}

template <typename T>
EvalSummary eval_typed(const RunConfig& cfg, const Archive& a, const Dataset& data) {
  auto loaded = model_from_archive<T>(a);
  return evaluate(loaded.model, data, cfg.infer);
}

}  // namespace

EvalSummary cmd_eval(const RunConfig& cfg, const fs::path& checkpoint, const std::string& split,
                     std::ostream& log) {
  const Archive a = read_archive(checkpoint);
  const auto data = load_or_generate(cfg);
  const Dataset& d = pick_split(data, split);
  const EvalSummary s = cfg.precision == Precision::f64 ? eval_typed<double>(cfg, a, d)
                                                       : eval_typed<float>(cfg, a, d);
  fs::create_directories(cfg.out);
  nlohmann::json summary = summary_json(s);
  summary["config"] = cfg.snapshot();
  std::ofstream(fs::path(cfg.out) / "eval_summary.json") << summary.dump(2) << "\n";
  std::ofstream preds(fs::path(cfg.out) / "predictions.jsonl", std::ios::trunc);
  for (const auto& p : s.predictions) preds << prediction_json(p, s.strategy).dump() << "\n";
  log << summary_json(s).dump() << "\n";
  return s;
}

namespace {

template <typename T>
std::vector<SweepRow> sweep_typed(const RunConfig& cfg, const std::vector<std::size_t>& m_list,
                                  bool both, std::ostream& log) {
  const auto data = load_or_generate(cfg);
  const auto backbone = obtain_backbone<T>(cfg, &log);
  std::vector<std::size_t> lambdas;
  if (both) lambdas.push_back(0);
  lambdas.push_back(cfg.prompt.p / 2);
  std::vector<SweepRow> rows;
  for (std::size_t m : m_list) {
    if (m > cfg.vit.dim) throw ConfigError("sweep m = " + std::to_string(m) + " exceeds d");
    for (std::size_t lambda : lambdas) {
      SweepRow row;
      row.m = m;
      row.lambda = lambda;
      for (auto seed : cfg.seeds) {
        RunConfig c = cfg;
        c.prompt.mode = PromptMode::viapt;
        c.prompt.m = m;
        c.prompt.lambda = lambda;
        c.train.seed = seed;
        const auto rep = run_training(c, backbone, data, {});
        row.accuracies.push_back(rep.best_val_accuracy);
        row.trainable_params = rep.counts.total_trainable;
        row.ratio = static_cast<double>(rep.counts.total_trainable) /
                    static_cast<double>(count_backbone_parameters(backbone.config));
        log << "sweep m=" << m << " lambda=" << lambda << " seed=" << seed
            << " val_accuracy=" << rep.best_val_accuracy << "\n";
      }
      row.accuracy_mean = mean_of(row.accuracies);
      row.accuracy_std = std_of(row.accuracies);
      rows.push_back(row);
    }
  }
  return rows;
}

template <typename T>
std::vector<AblationRow> ablate_typed(const RunConfig& cfg, std::ostream& log) {
  const auto data = load_or_generate(cfg);
  const auto backbone = obtain_backbone<T>(cfg, &log);
  struct Variant {
    std::string name;
    PromptMode mode;
    bool drop_instance;
  };
  const std::vector<Variant> variants = {
      {"full", PromptMode::viapt, false},
      {"without_pca", PromptMode::ablation_no_pca, false},
      {"without_instance", PromptMode::ablation_no_instance, false},
      {"without_both", PromptMode::ablation_no_pca, true},
      {"random_projection", PromptMode::ablation_random_projection, false},
  };
  std::vector<AblationRow> rows;
  for (const auto& v : variants) {
    AblationRow row;
    row.name = v.name;
    RunConfig c = cfg;
    c.prompt.mode = v.mode;
    if (v.drop_instance) c.prompt.lambda = 0;
    row.prompt = c.prompt.resolved(c.vit);
    for (auto seed : cfg.seeds) {
      c.train.seed = seed;
      const auto rep = run_training(c, backbone, data, {});
      row.accuracies.push_back(rep.best_val_accuracy);
      log << "ablate " << v.name << " seed=" << seed << " val_accuracy=" << rep.best_val_accuracy
          << "\n";
    }
    row.accuracy_mean = mean_of(row.accuracies);
    row.accuracy_std = std_of(row.accuracies);
    rows.push_back(row);
  }
  return rows;
}

std::string fmt_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

}  // namespace

std::vector<SweepRow> cmd_sweep_m(const RunConfig& cfg, const std::vector<std::size_t>& m_list,
                                  bool both, std::ostream& log) {
  auto rows = cfg.precision == Precision::f64 ? sweep_typed<double>(cfg, m_list, both, log)
                                              : sweep_typed<float>(cfg, m_list, both, log);
  fs::create_directories(cfg.out);
  std::ofstream(fs::path(cfg.out) / "sweep.csv") << sweep_csv(rows);
  std::ofstream(fs::path(cfg.out) / "config.txt") << cfg.to_text();
  return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::string s;
  for (std::size_t i = 0; i < kSweepColumns.size(); ++i) s += (i ? "," : "") + kSweepColumns[i];
  s += "\n";
  for (const auto& r : rows) {
    s += std::to_string(r.m) + "," + std::to_string(r.lambda) + "," + fmt_double(r.accuracy_mean) +
         "," + fmt_double(r.accuracy_std) + "," + std::to_string(r.trainable_params) + "," +
         fmt_double(r.ratio) + "\n";
  }
  return s;
}

std::vector<SweepRow> parse_sweep_csv(const std::string& text) {
  std::stringstream ss(text);
  std::string line;
  if (!std::getline(ss, line)) throw FormatError("sweep csv is empty");
  std::vector<std::string> header;
  {
    std::stringstream hs(line);
    std::string cell;
    while (std::getline(hs, cell, ',')) header.push_back(cell);
  }
  if (header != kSweepColumns) throw FormatError("sweep csv header does not match the schema");
  std::vector<SweepRow> rows;
  std::size_t lineno = 1;
  while (std::getline(ss, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (cells.size() != kSweepColumns.size())
      throw FormatError("sweep csv line " + std::to_string(lineno) + " has the wrong column count");
    auto whole = [](const std::string& c) {
      std::size_t used = 0;
      if (c.empty() || c[0] == '-') throw std::invalid_argument(c);
      const auto v = std::stoull(c, &used);
      if (used != c.size()) throw std::invalid_argument(c);
      return v;
    };
    auto real = [](const std::string& c) {
      std::size_t used = 0;
      const double v = std::stod(c, &used);
      if (used != c.size() || !std::isfinite(v)) throw std::invalid_argument(c);
      return v;
    };
    try {
      SweepRow r;
      r.m = whole(cells[0]);
      r.lambda = whole(cells[1]);
      r.accuracy_mean = real(cells[2]);
      r.accuracy_std = real(cells[3]);
      r.trainable_params = whole(cells[4]);
      r.ratio = real(cells[5]);
      rows.push_back(r);
    } catch (const std::exception&) {
      throw FormatError("sweep csv line " + std::to_string(lineno) + " does not parse");
    }
  }
  return rows;
}

std::vector<AblationRow> cmd_ablate(const RunConfig& cfg, std::ostream& log) {
  auto rows = cfg.precision == Precision::f64 ? ablate_typed<double>(cfg, log)
                                              : ablate_typed<float>(cfg, log);
  fs::create_directories(cfg.out);
  std::ofstream csv(fs::path(cfg.out) / "ablation.csv");
  csv << "variant,mode,lambda,m,accuracy_mean,accuracy_std\n";
  for (const auto& r : rows) {
    csv << r.name << "," << to_string(r.prompt.mode) << "," << r.prompt.lambda << "," << r.prompt.m
        << "," << fmt_double(r.accuracy_mean) << "," << fmt_double(r.accuracy_std) << "\n";
  }
  std::ofstream(fs::path(cfg.out) / "config.txt") << cfg.to_text();
  return rows;
}

std::vector<ParamCountRow> cmd_param_count(const ViTConfig& vit, const PromptConfig& prompt,
                                           const std::vector<std::size_t>& m_list) {
  const double backbone = static_cast<double>(count_backbone_parameters(vit));
  std::vector<ParamCountRow> rows;
  for (std::size_t m : m_list) {
    if (m > vit.dim) throw ConfigError("m = " + std::to_string(m) + " exceeds d");
    ParamCountRow r;
    r.m = m;
    r.domain_only = table_domain_only(vit.layers, prompt.p, vit.dim, m);
    r.ours = table_ours(vit.layers, prompt.p, prompt.lambda, vit.dim, m);
    r.domain_only_percent = 100.0 * static_cast<double>(r.domain_only) / backbone;
    r.ours_percent = 100.0 * static_cast<double>(r.ours) / backbone;
    PromptConfig dom = prompt, ours = prompt;
    dom.mode = ours.mode = PromptMode::viapt;
    dom.lambda = 0;
    dom.m = ours.m = m;
    r.stored_domain_only = stored_prompt_parameters(dom, vit);
    r.stored_ours = stored_prompt_parameters(ours, vit);
    rows.push_back(r);
  }
  return rows;
}

std::string param_count_table(const std::vector<ParamCountRow>& rows, const ViTConfig& vit) {
  std::ostringstream os;
  os << "backbone_params " << count_backbone_parameters(vit) << "\n";
  os << "m,domain_only,ours,domain_only_K,ours_K,domain_only_pct,ours_pct,stored_domain_only,"
        "stored_ours,discrepancy\n";
  for (const auto& r : rows) {
    const bool flag = r.domain_only != r.stored_domain_only || r.ours != r.stored_ours;
    os << r.m << "," << r.domain_only << "," << r.ours << "," << std::fixed << std::setprecision(1)
       << static_cast<double>(r.domain_only) / 1000.0 << ","
       << static_cast<double>(r.ours) / 1000.0 << "," << std::setprecision(3)
       << r.domain_only_percent << "," << r.ours_percent << "," << r.stored_domain_only << ","
       << r.stored_ours << "," << (flag ? "yes" : "no") << "\n";
    os.unsetf(std::ios::fixed);
  }
  for (const auto& r : rows)
    if (r.m == vit.dim && r.domain_only == 0 && r.stored_domain_only != 0)
      os << "note: at m = d the domain-only table value is 0 although a single layer-1 block of "
         << r.stored_domain_only << " parameters is still trained\n";
  return os.str();
}

RunConfig tiny_gradcheck_config() {
  RunConfig c;
  c.vit.image_side = 8;
  c.vit.patch = 4;
  c.vit.channels = 1;
  c.vit.dim = 8;
  c.vit.layers = 3;
  c.vit.heads = 2;
  c.vit.mlp_ratio = 2;
  c.vit.classes = 3;
  c.data.side = 8;
  c.data.classes = 3;
  c.prompt.p = 4;
  c.prompt.lambda = 2;
  c.prompt.m = 2;
  c.prompt.beta = 0.5;
  c.precision = Precision::f64;
  return c;
}

GradcheckReport cmd_gradcheck(const RunConfig& cfg, double tolerance) {
  if (cfg.precision != Precision::f64) throw ConfigError("gradcheck requires --precision f64");
  using T = double;
  const Rng root = Rng(cfg.train.seed).derive("gradcheck");
  ViTConfig vit = cfg.vit;
  vit.classes = cfg.data.classes;
  auto bb = Backbone<T>::init(vit, root.derive("backbone"));
  auto model = Model<T>::create(bb, cfg.prompt, vit.classes, root.derive("model"));

  constexpr std::size_t kBatch = 2;
  std::vector<Tensor<T>> images, noise;
  std::vector<std::size_t> labels;
  Rng data = root.derive("batch");
  for (std::size_t i = 0; i < kBatch; ++i) {
    images.push_back(data.sample_gaussian<T>({vit.channels, vit.image_side, vit.image_side}));
    labels.push_back(i % vit.classes);
    if (model.prompt.probabilistic())
      noise.push_back(noise_block<T>(root.derive("noise"), i, model.prompt.lambda, vit.dim));
  }

  ForwardTrace<T> trace;
  bool recorded = false;
  LossBuilder<T> loss = [&](Tape<T>& tape) {
    trace.cursor = 0;
    trace.mode = recorded ? ForwardTrace<T>::Mode::replay : ForwardTrace<T>::Mode::record;
    Var<T> total;
    for (std::size_t i = 0; i < kBatch; ++i) {
      auto out = model.forward(tape, images[i], noise.empty() ? nullptr : &noise[i], &trace);
      auto obj = sample_objective(out.logits, labels[i], out.mu, out.logvar, model.prompt.beta, kBatch);
      total = total.valid() ? ops::add(total, obj.objective) : obj.objective;
    }
    recorded = true;
    return total;
  };

  GradcheckReport rep;
  rep.entries = check_gradients(loss, model.trainable(), 1e-5);
  for (const auto& e : rep.entries) rep.worst = std::max(rep.worst, e.max_rel_error);
  rep.pass = rep.worst < tolerance;
  return rep;
}

#define VIAPT_INSTANTIATE_CMD(T)                                                            \
  template Backbone<T> pretrain_backbone<T>(const RunConfig&, std::ostream*);               \
  template Backbone<T> obtain_backbone<T>(const RunConfig&, std::ostream*);                 \
  template TrainReport run_training(const RunConfig&, const Backbone<T>&, const DatasetSplits&, \
                                    const fs::path&);

VIAPT_INSTANTIATE_CMD(float)
VIAPT_INSTANTIATE_CMD(double)

}  // namespace viapt
