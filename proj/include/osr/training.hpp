#pragma once

#include "osr/model.hpp"
#include "osr/tensor.hpp"

#include <nlohmann/json_fwd.hpp>

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace osr {

struct TrainConfig {
  double learning_rate = 1e-5;
  int batch_size = 32;
  int epochs = 0;
  double lambda_cls = 1.0;
  double lambda_loc = 1.0;
  int resplit_interval = 10;
  double val_fraction = 0.1;
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

struct LossBreakdown {
  double ce = 0.0;
  double mse = 0.0;
  double total = 0.0;
  bool ce_clamped = false;  // probability hit the 1e-12 clamp before the log
};

/// Joint loss, lambda_cls * CE(y, p) + lambda_loc * MSE(G, M). Pass null
/// masks when localization is disabled; the MSE term is then zero and
/// lambda_loc is ignored. `label` is the zero-based class index.
LossBreakdown hybrid_loss(const Tensor& probabilities, int label, const Tensor* predicted_mask,
                          const Tensor* ground_truth_mask, double lambda_cls, double lambda_loc);

struct ResplitResult {
  std::vector<int> train_indices;
  std::vector<int> val_indices;
  std::vector<std::string> warnings;
};

/// Stratified re-split of a training pool. Deterministic given (seed,
/// epoch); per-class validation counts are round(n_c * val_fraction)
/// clamped to [1, n_c - 1]. Classes with fewer than 2 samples go entirely
/// to train, with a warning.
ResplitResult resplit(const std::vector<int>& labels, double val_fraction, std::uint64_t seed,
                      int epoch);

/// In-memory labeled sample set. Masks are at image resolution in [0, 1]
/// and may be empty when localization is unused.
struct LabeledSet {
  std::vector<Tensor> images;
  std::vector<int> labels;
  std::vector<Tensor> masks;
  std::vector<std::string> ids;

  std::size_t size() const { return images.size(); }
  bool has_masks() const { return !masks.empty(); }
};

class Adam {
 public:
  Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

  void step(const std::vector<nn::Param*>& params);

  std::int64_t steps() const { return t_; }
  /// Moment tensors keyed by "m/<param>" and "v/<param>", for checkpointing.
  std::map<std::string, const Tensor*> moments() const;
  /// Restores optimizer state saved by a previous run. Missing entries are
  /// left at zero (a checkpoint written before any step has none).
  void load_moments(const std::map<std::string, Tensor>& saved, std::int64_t steps,
                    const std::vector<nn::Param*>& params);

 private:
  double lr_, beta1_, beta2_, eps_;
  std::int64_t t_ = 0;
  bool initialized_ = false;
  std::vector<Tensor> m_, v_;
  std::vector<std::string> names_;
};

struct Checkpoint {
  ModelConfig config;
  std::map<std::string, Tensor> tensors;       // model parameters and buffers
  std::map<std::string, Tensor> adam_moments;  // "m/<name>", "v/<name>"
  std::int64_t adam_steps = 0;
  int epoch = 0;  // number of completed epochs
  std::string rng_state;
  double best_val_accuracy = 0.0;
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

/// Copies checkpoint tensors into the model. Throws ConfigError listing
/// missing and unexpected keys when the sets differ.
void apply_checkpoint(const Checkpoint& ckpt, HybridModel& model);

/// Snapshot of the model's current parameters keyed by name.
std::map<std::string, Tensor> snapshot_params(HybridModel& model);

struct EpochMetrics {
  int epoch = 0;
  double train_loss = 0.0;
  double train_ce = 0.0;
  double train_mse = 0.0;
  double val_accuracy = 0.0;
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<EpochMetrics> history;
};

/// Minibatch Adam on the hybrid loss with periodic validation resplit.
/// The training pool must carry only in-set labels in [0, num_classes).
/// The returned checkpoint holds the parameters of the best-validation
/// epoch. `on_epoch`, when set, receives each epoch's metrics as they are
/// produced. `resume`, when set, continues from a previous checkpoint.
TrainResult train(HybridModel& model, const LabeledSet& pool, const TrainConfig& cfg,
                  const std::function<void(const EpochMetrics&, bool has_mse)>& on_epoch = {},
                  const Checkpoint* resume = nullptr);

}  // namespace osr
