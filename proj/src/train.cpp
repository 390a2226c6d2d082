#include "pointssm/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "pointssm/common.hpp"
#include "pointssm/ops.hpp"
#include "pointssm/rng.hpp"

namespace pointssm {

AdamW::AdamW(std::vector<NamedParam> params, double beta1, double beta2,
             double eps, double weight_decay)
    : params_(std::move(params)),
      beta1_(beta1),
      beta2_(beta2),
      eps_(eps),
      weight_decay_(weight_decay) {
  for (const NamedParam& p : params_) {
    m_.emplace_back(static_cast<size_t>(p.tensor.numel()), 0.0);
    v_.emplace_back(static_cast<size_t>(p.tensor.numel()), 0.0);
  }
}

void AdamW::zero_grad() {
  for (NamedParam& p : params_) p.tensor.zero_grad();
}

double AdamW::clip_gradients(double max_norm) {
  double sq = 0.0;
  for (NamedParam& p : params_) {
    const double* g = p.tensor.grad();
    for (int64_t i = 0; i < p.tensor.numel(); ++i) sq += g[i] * g[i];
  }
  double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    double factor = max_norm / norm;
    for (NamedParam& p : params_) {
      double* g = p.tensor.grad();
      for (int64_t i = 0; i < p.tensor.numel(); ++i) g[i] *= factor;
    }
  }
  return norm;
}

void AdamW::step(double lr) {
  if (!(lr >= 0.0)) throw std::invalid_argument("AdamW: lr must be >= 0");
  ++step_count_;
  const double bc1 = 1.0 - std::pow(beta1_, double(step_count_));
  const double bc2 = 1.0 - std::pow(beta2_, double(step_count_));
  for (size_t s = 0; s < params_.size(); ++s) {
    Tensor& t = params_[s].tensor;
    double* w = t.data();
    const double* g = t.grad();
    std::vector<double>& m = m_[s];
    std::vector<double>& v = v_[s];
    const bool decay = !params_[s].no_decay && weight_decay_ > 0.0;
    for (int64_t i = 0; i < t.numel(); ++i) {
      if (decay) w[i] -= lr * weight_decay_ * w[i];
      m[size_t(i)] = beta1_ * m[size_t(i)] + (1.0 - beta1_) * g[i];
      v[size_t(i)] = beta2_ * v[size_t(i)] + (1.0 - beta2_) * g[i] * g[i];
      const double mhat = m[size_t(i)] / bc1;
      const double vhat = v[size_t(i)] / bc2;
      w[i] -= lr * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}

double cosine_lr(int64_t step, int64_t total_steps, int64_t warmup_steps,
                 double base_lr, double min_lr) {
  if (step < 0 || total_steps <= 0 || step > total_steps)
    throw std::invalid_argument("cosine_lr: step out of range");
  if (warmup_steps >= total_steps)
    throw std::invalid_argument("cosine_lr: warmup must end before the total");
  if (step < warmup_steps)
    return base_lr * double(step) / double(warmup_steps);
  const double t =
      double(step - warmup_steps) / double(total_steps - warmup_steps);
  return min_lr + 0.5 * (base_lr - min_lr) *
                      (1.0 + std::cos(3.14159265358979323846 * t));
}

void MetricsLog::add(int64_t epoch, const std::string& split,
                     const std::string& metric, double value) {
  rows.push_back(MetricRow{epoch, split, metric, value});
}

std::string MetricsLog::to_csv() const {
  std::ostringstream out;
  out << "epoch,split,metric,value\n";
  char buf[48];
  for (const MetricRow& r : rows) {
    std::snprintf(buf, sizeof(buf), "%.17g", r.value);
    out << r.epoch << ',' << r.split << ',' << r.metric << ',' << buf << '\n';
  }
  return out.str();
}

void MetricsLog::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write metrics file: " + path);
  std::string csv = to_csv();
  out.write(csv.data(), std::streamsize(csv.size()));
}

std::vector<double> MetricsLog::series(const std::string& split,
                                       const std::string& metric) const {
  std::vector<double> out;
  for (const MetricRow& r : rows)
    if (r.split == split && r.metric == metric) out.push_back(r.value);
  return out;
}

MetricsLog metrics_from_csv(const std::string& text) {
  std::istringstream stream(text);
  std::string line;
  if (!std::getline(stream, line) || line != "epoch,split,metric,value")
    throw DataError("metrics csv: missing epoch,split,metric,value header");
  MetricsLog log;
  int64_t line_no = 1;
  while (std::getline(stream, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string epoch, split, metric, value;
    if (!std::getline(fields, epoch, ',') || !std::getline(fields, split, ',') ||
        !std::getline(fields, metric, ',') || !std::getline(fields, value))
      throw DataError("metrics csv: malformed row at line " +
                      std::to_string(line_no));
    try {
      log.add(std::stoll(epoch), split, metric, std::stod(value));
    } catch (const std::exception&) {
      throw DataError("metrics csv: unparsable row at line " +
                      std::to_string(line_no));
    }
  }
  return log;
}

AugmentKind augment_from_string(const std::string& name) {
  if (name == "none") return AugmentKind::none;
  if (name == "scale_translate") return AugmentKind::scale_translate;
  if (name == "rotate") return AugmentKind::rotate;
  if (name == "rotate_scale") return AugmentKind::rotate_scale;
  throw std::invalid_argument("unknown augmentation: " + name);
}

std::string augment_to_string(AugmentKind kind) {
  switch (kind) {
    case AugmentKind::none: return "none";
    case AugmentKind::scale_translate: return "scale_translate";
    case AugmentKind::rotate: return "rotate";
    case AugmentKind::rotate_scale: return "rotate_scale";
  }
  throw std::invalid_argument("unknown augmentation value");
}

void TrainConfig::validate() const {
  std::vector<std::string> problems;
  if (epochs < 1) problems.push_back("epochs must be >= 1");
  if (warmup_epochs < 0) problems.push_back("warmup_epochs must be >= 0");
  if (warmup_epochs >= epochs)
    problems.push_back("warmup_epochs must be smaller than epochs");
  if (batch_size < 1) problems.push_back("batch_size must be >= 1");
  if (base_lr <= 0) problems.push_back("base_lr must be positive");
  if (min_lr < 0) problems.push_back("min_lr must be >= 0");
  if (min_lr >= base_lr) problems.push_back("min_lr must be below base_lr");
  if (weight_decay < 0) problems.push_back("weight_decay must be >= 0");
  if (clip_norm <= 0) problems.push_back("clip_norm must be positive");
  if (!problems.empty()) {
    std::ostringstream msg;
    msg << "invalid train config:";
    for (const std::string& p : problems) msg << "\n  - " << p;
    throw ConfigError(msg.str());
  }
}

PointCloud apply_augment(const PointCloud& cloud, AugmentKind kind,
                         uint64_t seed) {
  switch (kind) {
    case AugmentKind::none: return cloud;
    case AugmentKind::scale_translate:
      return augment_scale_translate(cloud, derive_seed(seed, "st"));
    case AugmentKind::rotate:
      return augment_rotate(cloud, derive_seed(seed, "rot"));
    case AugmentKind::rotate_scale:
      return augment_scale_translate(
          augment_rotate(cloud, derive_seed(seed, "rot")),
          derive_seed(seed, "st"));
  }
  throw std::invalid_argument("unknown augmentation value");
}

namespace {

std::vector<size_t> epoch_order(size_t n, uint64_t seed, int64_t epoch) {
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t(0));
  Rng rng(derive_seed(seed, "order", uint64_t(epoch)));
  rng.shuffle(order);
  return order;
}

}  // namespace

MetricsLog pretrain_model(Model& m, const Dataset& train,
                          const TrainConfig& cfg) {
  cfg.validate();
  if (m.mode != ModelMode::pretrain)
    throw std::logic_error("pretrain_model: model is not in pretrain mode");
  if (train.samples.empty()) throw DataError("pretraining dataset is empty");

  AdamW opt(named_parameters(m), 0.9, 0.999, 1e-8, cfg.weight_decay);
  const int64_t steps_per_epoch =
      (int64_t(train.samples.size()) + cfg.batch_size - 1) / cfg.batch_size;
  const int64_t total_steps = cfg.epochs * steps_per_epoch;
  const int64_t warmup_steps = cfg.warmup_epochs * steps_per_epoch;
  const int64_t num_curves = int64_t(m.config.curves.size());

  MetricsLog log;
  int64_t global_step = 0;
  for (int64_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<size_t> order =
        epoch_order(train.samples.size(), cfg.seed, epoch);
    double epoch_loss = 0.0;
    size_t cursor = 0;
    while (cursor < order.size()) {
      const size_t batch =
          std::min(order.size() - cursor, size_t(cfg.batch_size));
      opt.zero_grad();
      for (size_t b = 0; b < batch; ++b) {
        const size_t sample_idx = order[cursor + b];
        const Sample& sample = train.samples[sample_idx];
        const uint64_t tag =
            derive_seed(cfg.seed, "pretrain", uint64_t(epoch),
                        uint64_t(sample_idx));
        PointCloud cloud = apply_augment(sample.cloud, cfg.augment, tag);
        Rng pick(derive_seed(tag, "draw"));
        const int curve_tag = int(pick.uniform_int(num_curves));
        const int64_t fps_start = pick.uniform_int(int64_t(cloud.size()));
        Rng mask_rng(derive_seed(tag, "mask"));
        GradTape tape;
        {
          TapeScope scope(tape);
          ReconstructResult rec =
              reconstruct(m, cloud, curve_tag, mask_rng, fps_start);
          Tensor loss = scale(rec.loss, 1.0 / double(batch));
          epoch_loss += rec.loss.item();
          tape.backward(loss);
        }
      }
      opt.clip_gradients(cfg.clip_norm);
      opt.step(cosine_lr(global_step, total_steps, warmup_steps, cfg.base_lr,
                         cfg.min_lr));
      ++global_step;
      cursor += batch;
    }
    log.add(epoch + 1, "train", "loss",
            epoch_loss / double(train.samples.size()));
  }
  return log;
}

namespace {

Tensor classification_loss(Model& m, const PointCloud& cloud, int64_t label,
                           int64_t fps_start, uint64_t dropout_seed) {
  EncodeResult enc = encode(m, cloud, fps_start);
  Rng drop_rng(dropout_seed);
  Tensor logits = classify_logits(m, enc, true, drop_rng);
  return softmax_cross_entropy(logits, label);
}

}  // namespace

MetricsLog train_classifier(Model& m, const Dataset& train, const Dataset& test,
                            const TrainConfig& cfg) {
  cfg.validate();
  if (m.mode != ModelMode::classify)
    throw std::logic_error("train_classifier: model is not in classify mode");
  if (train.samples.empty()) throw DataError("training dataset is empty");

  std::vector<NamedParam> all_params = named_parameters(m);
  std::vector<NamedParam> trainable;
  for (const NamedParam& p : all_params) {
    if (cfg.head_only && p.name.rfind("head.", 0) != 0) continue;
    trainable.push_back(p);
  }
  AdamW opt(trainable, 0.9, 0.999, 1e-8, cfg.weight_decay);
  const int64_t steps_per_epoch =
      (int64_t(train.samples.size()) + cfg.batch_size - 1) / cfg.batch_size;
  const int64_t total_steps = cfg.epochs * steps_per_epoch;
  const int64_t warmup_steps = cfg.warmup_epochs * steps_per_epoch;

  MetricsLog log;
  int64_t global_step = 0;
  for (int64_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<size_t> order =
        epoch_order(train.samples.size(), cfg.seed, epoch);
    double epoch_loss = 0.0;
    size_t cursor = 0;
    while (cursor < order.size()) {
      const size_t batch =
          std::min(order.size() - cursor, size_t(cfg.batch_size));
      for (NamedParam& p : all_params) p.tensor.zero_grad();
      for (size_t b = 0; b < batch; ++b) {
        const size_t sample_idx = order[cursor + b];
        const Sample& sample = train.samples[sample_idx];
        const uint64_t tag = derive_seed(cfg.seed, "classify", uint64_t(epoch),
                                         uint64_t(sample_idx));
        PointCloud cloud = apply_augment(sample.cloud, cfg.augment, tag);
        Rng pick(derive_seed(tag, "draw"));
        const int64_t fps_start = pick.uniform_int(int64_t(cloud.size()));
        GradTape tape;
        {
          TapeScope scope(tape);
          Tensor loss = classification_loss(m, cloud, sample.label, fps_start,
                                            derive_seed(tag, "dropout"));
          epoch_loss += loss.item();
          tape.backward(scale(loss, 1.0 / double(batch)));
        }
      }
      opt.clip_gradients(cfg.clip_norm);
      opt.step(cosine_lr(global_step, total_steps, warmup_steps, cfg.base_lr,
                         cfg.min_lr));
      ++global_step;
      cursor += batch;
    }
    log.add(epoch + 1, "train", "loss",
            epoch_loss / double(train.samples.size()));
    if (!test.samples.empty()) {
      EvalResult eval = evaluate_model(m, test);
      log.add(epoch + 1, "test", "accuracy", eval.overall);
    }
  }
  return log;
}

EvalResult evaluate_model(const Model& m, const Dataset& data) {
  if (m.mode != ModelMode::classify)
    throw std::logic_error("evaluate_model: model is not in classify mode");
  EvalResult res;
  std::vector<int64_t> labels;
  std::vector<int64_t> correct_per_class(
      static_cast<size_t>(m.config.num_classes), 0);
  std::vector<int64_t> count_per_class(
      static_cast<size_t>(m.config.num_classes), 0);
  Rng unused(0);
  for (const Sample& sample : data.samples) {
    EncodeResult enc = encode(m, sample.cloud, 0);
    Tensor logits = classify_logits(m, enc, false, unused);
    int64_t best = 0;
    for (int64_t c = 1; c < logits.numel(); ++c)
      if (logits.data()[c] > logits.data()[best]) best = c;
    res.predictions.push_back(best);
    labels.push_back(sample.label);
    ++count_per_class[size_t(sample.label)];
    if (best == sample.label) ++correct_per_class[size_t(sample.label)];
  }
  res.overall = overall_accuracy(res.predictions, labels);
  for (int64_t c = 0; c < m.config.num_classes; ++c)
    res.per_class.push_back(count_per_class[size_t(c)] == 0
                                ? 0.0
                                : double(correct_per_class[size_t(c)]) /
                                      double(count_per_class[size_t(c)]));
  return res;
}

double overall_accuracy(const std::vector<int64_t>& predictions,
                        const std::vector<int64_t>& labels) {
  if (predictions.size() != labels.size())
    throw std::invalid_argument("accuracy: size mismatch");
  if (predictions.empty()) return 0.0;
  int64_t correct = 0;
  for (size_t i = 0; i < predictions.size(); ++i)
    if (predictions[i] == labels[i]) ++correct;
  return double(correct) / double(predictions.size());
}

}  // namespace pointssm
