#pragma once

// Training drivers for the copying and pixel-MNIST tasks, and the metrics CSV.
//
// All randomness comes from one generator seeded with TrainConfig::seed and
// drawn in this order: model initialisation, held-out data (the copying eval
// batch), then per-step training data or per-epoch shuffles.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "exprnn/exprnn.hpp"
#include "exprnn/tasks.hpp"

namespace exprnn {

enum class Task { copying, mnist, pmnist };

inline Task parse_task(const std::string& name) {
  if (name == "copying") return Task::copying;
  if (name == "mnist") return Task::mnist;
  if (name == "pmnist") return Task::pmnist;
  throw DomainError("unknown task '" + name + "' (expected copying, mnist or pmnist)");
}

inline const char* to_string(Task t) {
  switch (t) {
    case Task::copying: return "copying";
    case Task::mnist: return "mnist";
    case Task::pmnist: return "pmnist";
  }
  return "?";
}

/// Seed of the fixed pixel permutation used by pmnist.
inline constexpr std::uint64_t kPermutationSeed = 5544;

struct TrainConfig {
  Task task = Task::copying;
  std::size_t hidden = 128;
  CopyConfig copying;  // batch is taken from `batch` below
  OptimizerKind optimizer = OptimizerKind::rmsprop;
  double lr = 0.0;        // 0 selects the task default
  double ortho_lr = 0.0;  // 0 selects lr / 10
  std::optional<KernelInit> init;
  std::size_t batch = 128;
  std::size_t iterations = 2000;  // copying: optimizer steps
  std::size_t epochs = 3;         // mnist: passes over the training subset
  std::uint64_t seed = kDefaultSeed;
  std::string out_dir = ".";
  std::size_t checkpoint_every = 0;  // 0: final checkpoint only
  std::size_t eval_every = 0;        // 0: 100 steps for copying, once per epoch for mnist
  std::size_t eval_batch = 512;      // copying held-out batch size
  std::string data_dir;
  std::size_t train_subset = 0;  // 0: all training images
  std::size_t test_subset = 0;   // 0: all test images
  bool wall_clock = false;       // false keeps wall_ms at 0 so the CSV is reproducible

  [[nodiscard]] double resolved_lr() const {
    if (lr > 0.0) return lr;
    switch (task) {
      case Task::copying: return 2e-4;
      case Task::mnist: return 7e-4;
      case Task::pmnist: return 1e-3;
    }
    return 1e-3;
  }
  [[nodiscard]] double resolved_ortho_lr() const {
    return ortho_lr > 0.0 ? ortho_lr : resolved_lr() / 10.0;
  }
  [[nodiscard]] KernelInit resolved_init() const {
    if (init) return *init;
    return task == Task::copying ? KernelInit::henaff : KernelInit::cayley;
  }
  [[nodiscard]] std::size_t resolved_eval_every() const {
    return eval_every > 0 ? eval_every : (task == Task::copying ? 100 : 0);
  }
  [[nodiscard]] CopyConfig copy_config() const {
    CopyConfig c = copying;
    c.batch = batch;
    return c;
  }

  void validate() const {
    if (hidden == 0) throw DomainError("config: hidden size must be positive");
    if (batch == 0) throw DomainError("config: batch must be at least 1");
    if (lr < 0.0 || ortho_lr < 0.0) throw DomainError("config: learning rates must be positive");
    if (task == Task::copying) copy_config().validate();
    if (task == Task::copying && eval_batch == 0) throw DomainError("config: eval_batch is zero");
  }
};

struct MetricsRow {
  std::size_t step = 0;
  double wall_ms = 0.0;
  double train_loss = 0.0;
  double eval_metric = 0.0;
  double ortho_residual = 0.0;
  double param_norm = 0.0;
};

inline constexpr const char* kMetricsHeader =
    "step,wall_ms,train_loss,eval_metric,ortho_residual,param_norm";

inline std::string format_double(double x) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, x);
  return {buf, end};
}

inline void write_row(std::ostream& os, const MetricsRow& r) {
  os << r.step << ',' << format_double(r.wall_ms) << ',' << format_double(r.train_loss) << ','
     << format_double(r.eval_metric) << ',' << format_double(r.ortho_residual) << ','
     << format_double(r.param_norm) << '\n';
}

struct EvalResult {
  double loss = 0.0;
  double accuracy = 0.0;  // recall-region accuracy for copying, test accuracy for mnist
};

struct TrainResult {
  RnnModel model;
  std::vector<MetricsRow> rows;
  std::vector<EvalResult> evals;  // one per row
  std::size_t steps = 0;
};

struct TrainHooks {
  /// Called after each metrics row; returning false stops training.
  std::function<bool(const MetricsRow&, const EvalResult&)> on_row;
  std::ostream* csv = nullptr;
};

inline EvalResult evaluate_copying(RnnModel& model, const CopyConfig& cfg,
                                   const CopyingBatch& data) {
  model.kernel.refresh();
  const auto xs = one_hot(data.inputs, cfg.vocab());
  const auto res = forward(model, xs, Head::per_step);
  return {cross_entropy(res.logits, data.targets).loss,
          recall_accuracy(cfg, res.logits, data.targets)};
}

inline EvalResult evaluate_images(RnnModel& model, const ImageSet& images,
                                  std::size_t chunk = 500) {
  model.kernel.refresh();
  EvalResult r;
  std::size_t hit = 0;
  for (std::size_t start = 0; start < images.count(); start += chunk) {
    const std::size_t end = std::min(images.count(), start + chunk);
    std::vector<std::size_t> idx(end - start);
    std::iota(idx.begin(), idx.end(), start);
    const auto xs = pixel_sequence(images, idx);
    const auto res = forward(model, xs, Head::final_step);
    std::vector<std::vector<int>> y(1);
    for (std::size_t i : idx) y[0].push_back(images.labels[i]);
    r.loss += cross_entropy(res.logits, y).loss * static_cast<double>(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) hit += argmax_row(res.logits[0], i) == y[0][i];
  }
  r.loss /= static_cast<double>(images.count());
  r.accuracy = static_cast<double>(hit) / static_cast<double>(images.count());
  return r;
}

namespace detail {

class RunLog {
 public:
  RunLog(const TrainConfig& cfg, TrainResult& res, TrainHooks& hooks)
      : cfg_(cfg), res_(res), hooks_(hooks), t0_(std::chrono::steady_clock::now()) {
    if (hooks_.csv) *hooks_.csv << kMetricsHeader << '\n';
  }

  void add_loss(double loss) {
    loss_sum_ += loss;
    ++loss_count_;
  }

  /// Appends a row for the current model state; false asks to stop.
  bool row(std::size_t step, const EvalResult& ev) {
    RnnModel& m = res_.model;
    MetricsRow r;
    r.step = step;
    if (cfg_.wall_clock) {
      r.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0_)
                      .count();
    }
    r.train_loss = loss_count_ ? loss_sum_ / static_cast<double>(loss_count_) : 0.0;
    r.eval_metric = cfg_.task == Task::copying ? ev.loss : ev.accuracy;
    r.ortho_residual = ortho_residual(m.kernel.refresh());
    r.param_norm = m.kernel.param_norm();
    loss_sum_ = 0.0;
    loss_count_ = 0;
    res_.rows.push_back(r);
    res_.evals.push_back(ev);
    if (hooks_.csv) {
      write_row(*hooks_.csv, r);
      hooks_.csv->flush();
    }
    return !hooks_.on_row || hooks_.on_row(r, ev);
  }

  void maybe_checkpoint(std::size_t step) const {
    if (cfg_.checkpoint_every > 0 && step % cfg_.checkpoint_every == 0) {
      save_checkpoint(res_.model, (std::filesystem::path(cfg_.out_dir) /
                                   ("checkpoint_" + std::to_string(step) + ".ckpt"))
                                      .string());
    }
  }

 private:
  const TrainConfig& cfg_;
  TrainResult& res_;
  TrainHooks& hooks_;
  std::chrono::steady_clock::time_point t0_;
  double loss_sum_ = 0.0;
  std::size_t loss_count_ = 0;
};

inline Optimizer make_optimizer(const TrainConfig& cfg) {
  OptimizerConfig oc;
  oc.kind = cfg.optimizer;
  return Optimizer(oc);
}

}  // namespace detail

inline TrainResult train_copying(const TrainConfig& cfg, TrainHooks hooks = {}) {
  cfg.validate();
  const CopyConfig cc = cfg.copy_config();
  Rng rng(cfg.seed);
  TrainResult res;
  res.model = make_model(cc.vocab(), cfg.hidden, cc.vocab(), cfg.resolved_init(), rng);
  CopyConfig held = cc;
  held.batch = cfg.eval_batch;
  const CopyingBatch eval_data = gen_copying_batch(held, rng);
  Optimizer opt = detail::make_optimizer(cfg);
  const LearningRates lr{cfg.resolved_lr(), cfg.resolved_ortho_lr()};
  const std::size_t every = cfg.resolved_eval_every();
  detail::RunLog log(cfg, res, hooks);
  for (std::size_t step = 1; step <= cfg.iterations; ++step) {
    const CopyingBatch b = gen_copying_batch(cc, rng);
    const auto xs = one_hot(b.inputs, cc.vocab());
    log.add_loss(train_step(res.model, opt, lr, xs, b.targets, Head::per_step));
    res.steps = step;
    log.maybe_checkpoint(step);
    if (step % every == 0 || step == cfg.iterations) {
      if (!log.row(step, evaluate_copying(res.model, cc, eval_data))) break;
    }
  }
  return res;
}

struct MnistData {
  ImageSet train;
  ImageSet test;
};

/// Standard file names inside `dir`; raises when a file is missing.
inline MnistData load_mnist(const std::string& dir, std::size_t train_subset,
                            std::size_t test_subset) {
  namespace fs = std::filesystem;
  const fs::path d(dir);
  const fs::path files[] = {d / "train-images-idx3-ubyte", d / "train-labels-idx1-ubyte",
                            d / "t10k-images-idx3-ubyte", d / "t10k-labels-idx1-ubyte"};
  for (const auto& f : files) {
    if (!fs::exists(f)) throw Error("missing MNIST file '" + f.string() + "'");
  }
  auto limit = [](std::size_t n) { return n ? std::optional<std::size_t>(n) : std::nullopt; };
  MnistData m{load_idx(files[0].string(), files[1].string(), limit(train_subset)),
              load_idx(files[2].string(), files[3].string(), limit(test_subset))};
  for (const ImageSet* s : {&m.train, &m.test}) {
    if (s->pixels_per_image() != kMnistPixels) {
      throw DimensionError("MNIST images must have 784 pixels, found " +
                           std::to_string(s->pixels_per_image()));
    }
  }
  return m;
}

/// Data directory from the config, else the EXPRNN_DATA_DIR environment variable.
inline std::string resolve_data_dir(const TrainConfig& cfg) {
  if (!cfg.data_dir.empty()) return cfg.data_dir;
  if (const char* env = std::getenv("EXPRNN_DATA_DIR")) return env;
  return {};
}

inline TrainResult train_mnist(const TrainConfig& cfg, MnistData data, TrainHooks hooks = {}) {
  cfg.validate();
  if (cfg.task == Task::pmnist) {
    const PixelPermutation perm = PixelPermutation::from_seed(kMnistPixels, kPermutationSeed);
    data.train = permute_pixels(data.train, perm);
    data.test = permute_pixels(data.test, perm);
  }
  Rng rng(cfg.seed);
  TrainResult res;
  res.model = make_model(1, cfg.hidden, 10, cfg.resolved_init(), rng);
  Optimizer opt = detail::make_optimizer(cfg);
  const LearningRates lr{cfg.resolved_lr(), cfg.resolved_ortho_lr()};
  const std::size_t every = cfg.resolved_eval_every();
  detail::RunLog log(cfg, res, hooks);
  std::vector<std::size_t> order(data.train.count());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
      const std::span<const std::size_t> idx(order.data() + start,
                                             std::min(cfg.batch, order.size() - start));
      const auto xs = pixel_sequence(data.train, idx);
      std::vector<std::vector<int>> y(1);
      for (std::size_t i : idx) y[0].push_back(data.train.labels[i]);
      log.add_loss(train_step(res.model, opt, lr, xs, y, Head::final_step));
      res.steps = ++step;
      log.maybe_checkpoint(step);
      if (every > 0 && step % every == 0) {
        if (!log.row(step, evaluate_images(res.model, data.test))) return res;
      }
    }
    if (every == 0 || step % every != 0) {
      if (!log.row(step, evaluate_images(res.model, data.test))) return res;
    }
  }
  return res;
}

/// Dispatches on the task. MNIST data is read from resolve_data_dir().
inline TrainResult train(const TrainConfig& cfg, TrainHooks hooks = {}) {
  if (cfg.task == Task::copying) return train_copying(cfg, std::move(hooks));
  const std::string dir = resolve_data_dir(cfg);
  if (dir.empty()) {
    throw Error("MNIST tasks need a data directory (--data-dir or EXPRNN_DATA_DIR)");
  }
  return train_mnist(cfg, load_mnist(dir, cfg.train_subset, cfg.test_subset), std::move(hooks));
}

}  // namespace exprnn
