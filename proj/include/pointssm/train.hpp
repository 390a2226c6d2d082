#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pointssm/data.hpp"
#include "pointssm/model.hpp"

// Optimizer, schedule, training loops, and metrics logging.
namespace pointssm {

// Decoupled-weight-decay Adam over a fixed parameter registry. Parameters
// flagged no_decay (biases, gains, state-space scalars) skip the decay term.
class AdamW {
 public:
  AdamW(std::vector<NamedParam> params, double beta1 = 0.9,
        double beta2 = 0.999, double eps = 1e-8, double weight_decay = 5e-2);

  void zero_grad();
  // Scales all gradients so their global L2 norm is at most max_norm;
  // returns the pre-clip norm.
  double clip_gradients(double max_norm);
  void step(double lr);
  int64_t step_count() const { return step_count_; }
  const std::vector<NamedParam>& params() const { return params_; }

 private:
  std::vector<NamedParam> params_;
  std::vector<std::vector<double>> m_, v_;
  double beta1_, beta2_, eps_, weight_decay_;
  int64_t step_count_ = 0;
};

// Linear warmup to base_lr, then cosine decay to min_lr at total_steps.
double cosine_lr(int64_t step, int64_t total_steps, int64_t warmup_steps,
                 double base_lr, double min_lr = 1e-6);

struct MetricRow {
  int64_t epoch;
  std::string split;
  std::string metric;
  double value;
};

struct MetricsLog {
  std::vector<MetricRow> rows;
  void add(int64_t epoch, const std::string& split, const std::string& metric,
           double value);
  std::string to_csv() const;  // header epoch,split,metric,value
  void save(const std::string& path) const;
  std::vector<double> series(const std::string& split,
                             const std::string& metric) const;
};

// Parses the to_csv layout back into a log; throws DataError on a missing
// header or malformed row.
MetricsLog metrics_from_csv(const std::string& text);

enum class AugmentKind { none, scale_translate, rotate, rotate_scale };
AugmentKind augment_from_string(const std::string& name);
std::string augment_to_string(AugmentKind kind);

struct TrainConfig {
  int64_t epochs = 30;
  int64_t warmup_epochs = 3;
  int64_t batch_size = 16;
  double base_lr = 1e-3;  // classification fine-tuning uses 5e-4
  double min_lr = 1e-6;
  double weight_decay = 5e-2;
  double clip_norm = 10.0;
  uint64_t seed = 0;
  AugmentKind augment = AugmentKind::scale_translate;
  bool head_only = false;  // freeze everything but the classifier head
  void validate() const;
};

PointCloud apply_augment(const PointCloud& cloud, AugmentKind kind,
                         uint64_t seed);

// Masked-reconstruction pretraining. Per iteration: augment, random FPS
// start, one curve drawn uniformly from the bank, masking, Chamfer loss,
// AdamW step. Emits one train/loss row per epoch.
MetricsLog pretrain_model(Model& m, const Dataset& train,
                          const TrainConfig& cfg);

// Cross-entropy classification training; evaluates the test split each epoch.
MetricsLog train_classifier(Model& m, const Dataset& train,
                            const Dataset& test, const TrainConfig& cfg);

struct EvalResult {
  double overall = 0.0;
  std::vector<double> per_class;
  std::vector<int64_t> predictions;
};
// Argmax over logits; no augmentation, fixed FPS start.
EvalResult evaluate_model(const Model& m, const Dataset& data);

double overall_accuracy(const std::vector<int64_t>& predictions,
                        const std::vector<int64_t>& labels);

}  // namespace pointssm
