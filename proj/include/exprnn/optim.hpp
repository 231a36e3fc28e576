#pragma once

// First-order optimizers over flat parameter vectors. Parameters are split
// into named groups, each with its own learning rate and its own optimizer
// state; the orthogonal kernel is just another group whose gradients were
// already pulled back to the skew parameter.

#include <cmath>
#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "exprnn/errors.hpp"

namespace exprnn {

enum class ParamTag { orthogonal, general };

enum class OptimizerKind { sgd, rmsprop, adam };

inline OptimizerKind parse_optimizer(const std::string& name) {
  if (name == "sgd") return OptimizerKind::sgd;
  if (name == "rmsprop") return OptimizerKind::rmsprop;
  if (name == "adam") return OptimizerKind::adam;
  throw DomainError("unknown optimizer '" + name + "' (expected sgd, rmsprop or adam)");
}

inline const char* to_string(OptimizerKind k) {
  switch (k) {
    case OptimizerKind::sgd: return "sgd";
    case OptimizerKind::rmsprop: return "rmsprop";
    case OptimizerKind::adam: return "adam";
  }
  return "?";
}

struct ParamGroup {
  std::string id;
  ParamTag tag = ParamTag::general;
  double lr = 1e-3;
  std::vector<double> values;
};

/// Moment accumulators for one group.
struct OptState {
  std::vector<double> first;
  std::vector<double> second;
  std::size_t steps = 0;
};

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::rmsprop;
  double rmsprop_decay = 0.99;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double eps = 1e-8;
};

class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig cfg = {}) : cfg_(cfg) {}

  [[nodiscard]] const OptimizerConfig& config() const { return cfg_; }

  void step(ParamGroup& group, std::span<const double> grad) {
    if (!(group.lr > 0.0)) {
      throw DomainError("group '" + group.id + "': learning rate must be positive");
    }
    step(group.id, group.lr, group.values, grad);
  }

  /// Updates `values` in place using the state stored under `id`.
  void step(const std::string& id, double lr, std::span<double> values,
            std::span<const double> grad) {
    if (values.size() != grad.size()) {
      throw DimensionError("optimizer group '" + id + "': " + std::to_string(values.size()) +
                           " values but " + std::to_string(grad.size()) + " gradients");
    }
    for (double g : grad) {
      if (!std::isfinite(g)) throw DomainError("optimizer group '" + id + "': non-finite gradient");
    }
    OptState& st = state_[id];
    if (st.steps == 0) {
      st.first.assign(values.size(), 0.0);
      st.second.assign(values.size(), 0.0);
    } else if (st.first.size() != values.size()) {
      throw DimensionError("optimizer group '" + id + "' changed size");
    }
    ++st.steps;
    switch (cfg_.kind) {
      case OptimizerKind::sgd:
        for (std::size_t i = 0; i < values.size(); ++i) values[i] -= lr * grad[i];
        break;
      case OptimizerKind::rmsprop: {
        const double rho = cfg_.rmsprop_decay;
        for (std::size_t i = 0; i < values.size(); ++i) {
          st.second[i] = rho * st.second[i] + (1.0 - rho) * grad[i] * grad[i];
          values[i] -= lr * grad[i] / (std::sqrt(st.second[i]) + cfg_.eps);
        }
        break;
      }
      case OptimizerKind::adam: {
        const double b1 = cfg_.adam_beta1, b2 = cfg_.adam_beta2;
        const double t = static_cast<double>(st.steps);
        const double c1 = 1.0 - std::pow(b1, t);
        const double c2 = 1.0 - std::pow(b2, t);
        for (std::size_t i = 0; i < values.size(); ++i) {
          st.first[i] = b1 * st.first[i] + (1.0 - b1) * grad[i];
          st.second[i] = b2 * st.second[i] + (1.0 - b2) * grad[i] * grad[i];
          const double mhat = st.first[i] / c1;
          const double vhat = st.second[i] / c2;
          values[i] -= lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        }
        break;
      }
    }
  }

  [[nodiscard]] const OptState* state(const std::string& id) const {
    auto it = state_.find(id);
    return it == state_.end() ? nullptr : &it->second;
  }

 private:
  OptimizerConfig cfg_;
  std::map<std::string, OptState> state_;
};

}  // namespace exprnn
