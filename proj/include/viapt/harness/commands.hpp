#pragma once

#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include "viapt/harness/run_config.hpp"
#include "viapt/numerics/gradcheck.hpp"
#include "viapt/prompt/param_count.hpp"

namespace viapt {

/// Reads cfg.data_dir when set, otherwise generates from cfg.data.
DatasetSplits load_or_generate(const RunConfig& cfg);

/// Full-backbone training on the rotation pretext task (4 classes).
template <typename T>
Backbone<T> pretrain_backbone(const RunConfig& cfg, std::ostream* log = nullptr);

/// Loads cfg.backbone.path, or pretrains when it is empty.
template <typename T>
Backbone<T> obtain_backbone(const RunConfig& cfg, std::ostream* log = nullptr);

struct TrainReport {
  double best_val_accuracy = 0;
  double best_val_loss = 0;
  std::size_t best_epoch = 0;
  ParamAccounting counts;
  std::vector<EpochMetrics> metrics;
};

/// Trains one model. When `out` is non-empty writes config.txt,
/// metrics.jsonl, best.ckpt and last.ckpt there.
template <typename T>
TrainReport run_training(const RunConfig& cfg, const Backbone<T>& backbone,
                         const DatasetSplits& data, const std::filesystem::path& out);

void cmd_gen_data(const RunConfig& cfg, std::ostream& log);
std::filesystem::path cmd_pretrain_backbone(const RunConfig& cfg, std::ostream& log);
TrainReport cmd_train(const RunConfig& cfg, std::ostream& log);

/// Evaluates a checkpoint on a split ("train", "val", "test"); writes
/// eval_summary.json and predictions.jsonl into cfg.out.
EvalSummary cmd_eval(const RunConfig& cfg, const std::filesystem::path& checkpoint,
                     const std::string& split, std::ostream& log);

struct SweepRow {
  std::size_t m = 0;
  std::size_t lambda = 0;
  double accuracy_mean = 0;
  double accuracy_std = 0;
  std::uint64_t trainable_params = 0;
  double ratio = 0;
  std::vector<double> accuracies;  // one per seed
};

inline const std::vector<std::string> kSweepColumns = {
    "m", "lambda", "accuracy_mean", "accuracy_std", "trainable_params", "ratio"};

/// One training run per (m, lambda, seed) cell on a shared frozen backbone.
/// Accuracy is the best validation accuracy of each run. Writes sweep.csv.
std::vector<SweepRow> cmd_sweep_m(const RunConfig& cfg, const std::vector<std::size_t>& m_list,
                                  bool with_and_without_instance, std::ostream& log);
std::string sweep_csv(const std::vector<SweepRow>& rows);
/// Throws FormatError unless the header and every row match the schema.
std::vector<SweepRow> parse_sweep_csv(const std::string& text);

struct AblationRow {
  std::string name;
  PromptConfig prompt;  // resolved
  double accuracy_mean = 0;
  double accuracy_std = 0;
  std::vector<double> accuracies;
};

/// Full model, w/o PCA, w/o instance prompt, w/o both, random projection.
std::vector<AblationRow> cmd_ablate(const RunConfig& cfg, std::ostream& log);

struct ParamCountRow {
  std::size_t m = 0;
  std::uint64_t domain_only = 0;
  std::uint64_t ours = 0;
  double domain_only_percent = 0;
  double ours_percent = 0;
  std::uint64_t stored_domain_only = 0;
  std::uint64_t stored_ours = 0;
};

std::vector<ParamCountRow> cmd_param_count(const ViTConfig& vit, const PromptConfig& prompt,
                                           const std::vector<std::size_t>& m_list);
std::string param_count_table(const std::vector<ParamCountRow>& rows, const ViTConfig& vit);

struct GradcheckReport {
  std::vector<GradCheckEntry> entries;
  double worst = 0;
  bool pass = false;
};

/// The tiny configuration used for gradient checks (d=8, N=3, p=4,
/// lambda=2, m=2, float64).
RunConfig tiny_gradcheck_config();

/// Finite differences on a fixed two-image batch with frozen noise and
/// replayed PCA statistics. Refuses anything but float64.
GradcheckReport cmd_gradcheck(const RunConfig& cfg, double tolerance = 1e-4);

double mean_of(const std::vector<double>& xs);
/// Sample standard deviation (n - 1); 0 for fewer than two values.
double std_of(const std::vector<double>& xs);

}  // namespace viapt
