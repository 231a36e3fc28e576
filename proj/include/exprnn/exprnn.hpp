#pragma once

// Orthogonal recurrent cell h_t = σ(B h_{t−1} + T x_t), B = exp(A), with a
// real modrelu σ and a linear readout. Batches are row-major: a hidden state
// for a batch is a (batch × p) matrix, so one step is Z = H·Bᵀ + X·Tᵀ.

#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "exprnn/liegroup.hpp"
#include "exprnn/optim.hpp"
#include "exprnn/random.hpp"

namespace exprnn {

inline double modrelu(double z, double b) {
  const double m = std::abs(z) + b;
  if (z == 0.0 || m <= 0.0) return 0.0;
  return z > 0.0 ? m : -m;
}

inline std::vector<double> modrelu(std::span<const double> z, std::span<const double> b) {
  if (z.size() != b.size()) throw DimensionError("modrelu: z and b differ in length");
  std::vector<double> out(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) out[i] = modrelu(z[i], b[i]);
  return out;
}

/// Skew matrix with 2×2 blocks [[0, s_i], [−s_i, 0]] on the diagonal. An odd
/// size leaves the last row and column zero.
inline SkewParam block_diagonal_skew(std::size_t p, std::span<const double> s) {
  if (s.size() != p / 2) throw DimensionError("block_diagonal_skew: need p/2 block values");
  Matrix a(p, p);
  for (std::size_t i = 0; i < s.size(); ++i) {
    a(2 * i, 2 * i + 1) = s[i];
    a(2 * i + 1, 2 * i) = -s[i];
  }
  return SkewParam::from_matrix(a);
}

inline std::vector<double> henaff_angles(std::size_t p, Rng& rng) {
  std::vector<double> s(p / 2);
  for (double& x : s) x = uniform(rng, -std::numbers::pi, std::numbers::pi);
  return s;
}

inline double cayley_block_value(double u) {
  return -std::sqrt((1.0 - std::cos(u)) / (1.0 + std::cos(u)));
}

inline std::vector<double> cayley_angles(std::size_t p, Rng& rng) {
  std::vector<double> s(p / 2);
  for (double& x : s) x = cayley_block_value(uniform(rng, 0.0, std::numbers::pi / 2));
  return s;
}

inline SkewParam henaff_init(std::size_t p, Rng& rng) {
  if (p == 0) throw DomainError("henaff_init: p must be positive");
  return block_diagonal_skew(p, henaff_angles(p, rng));
}

inline SkewParam cayley_init(std::size_t p, Rng& rng) {
  if (p == 0) throw DomainError("cayley_init: p must be positive");
  return block_diagonal_skew(p, cayley_angles(p, rng));
}

enum class KernelInit { henaff, cayley };

inline KernelInit parse_kernel_init(const std::string& name) {
  if (name == "henaff") return KernelInit::henaff;
  if (name == "cayley") return KernelInit::cayley;
  throw DomainError("unknown init '" + name + "' (expected henaff or cayley)");
}

inline const char* to_string(KernelInit k) { return k == KernelInit::henaff ? "henaff" : "cayley"; }

struct RnnModel {
  OrthoLayer kernel;
  Matrix input_map;                   // p × d
  std::vector<double> modrelu_bias;   // p
  Matrix readout;                     // classes × p
  std::vector<double> readout_bias;   // classes

  [[nodiscard]] std::size_t hidden() const { return kernel.n(); }
  [[nodiscard]] std::size_t input_dim() const { return input_map.cols(); }
  [[nodiscard]] std::size_t classes() const { return readout.rows(); }

  void validate() const {
    const std::size_t p = hidden();
    if (p == 0) throw DimensionError("RnnModel: hidden size is zero");
    if (input_map.rows() != p || modrelu_bias.size() != p || readout.cols() != p ||
        readout_bias.size() != readout.rows()) {
      throw DimensionError("RnnModel: inconsistent sizes (p=" + std::to_string(p) +
                           ", input_map " + input_map.shape() + ", readout " +
                           readout.shape() + ")");
    }
  }
};

/// Draws, in order: kernel blocks, input map, readout weights, readout bias.
/// The modrelu bias starts at zero.
inline RnnModel make_model(std::size_t input_dim, std::size_t hidden, std::size_t classes,
                           KernelInit init, Rng& rng) {
  if (input_dim == 0 || hidden == 0 || classes == 0) {
    throw DomainError("make_model: sizes must be positive");
  }
  RnnModel m;
  m.kernel = OrthoLayer(init == KernelInit::henaff ? henaff_init(hidden, rng)
                                                   : cayley_init(hidden, rng));
  const double ti = 1.0 / std::sqrt(static_cast<double>(input_dim));
  const double ro = 1.0 / std::sqrt(static_cast<double>(hidden));
  m.input_map = random_matrix(hidden, input_dim, rng, -ti, ti);
  m.modrelu_bias.assign(hidden, 0.0);
  m.readout = random_matrix(classes, hidden, rng, -ro, ro);
  m.readout_bias.resize(classes);
  for (double& c : m.readout_bias) c = uniform(rng, -ro, ro);
  return m;
}

enum class Head { per_step, final_step };

struct ForwardOptions {
  /// Replaces modrelu by the identity; used to isolate the kernel in tests.
  bool linear_activation = false;
  /// Initial hidden state (batch × p); zero when absent.
  std::optional<Matrix> h0;
};

struct TapeStep {
  Matrix z;  // pre-activation, batch × p
  Matrix h;  // hidden state after the step
};

struct Tape {
  std::span<const Matrix> inputs;
  Matrix h0;
  std::vector<TapeStep> steps;
  Head head = Head::per_step;
  bool linear_activation = false;

  [[nodiscard]] const Matrix& hidden_before(std::size_t t) const {
    return t == 0 ? h0 : steps[t - 1].h;
  }
};

struct ForwardResult {
  std::vector<Matrix> logits;  // batch × classes, one per emitted step
  Tape tape;
};

namespace detail {

inline void add_row_bias(Matrix& m, std::span<const double> bias) {
  for (std::size_t i = 0; i < m.rows(); ++i) {
    auto r = m.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) r[j] += bias[j];
  }
}

inline Matrix readout_logits(const RnnModel& model, const Matrix& h, const Matrix& readout_t) {
  Matrix out = matmul(h, readout_t);
  add_row_bias(out, model.readout_bias);
  return out;
}

}  // namespace detail

/// Runs the recurrence over `inputs` (one batch × d matrix per step). The
/// kernel is read once from the layer cache; a stale cache is an error.
/// `inputs` must outlive the returned tape.
inline ForwardResult forward(const RnnModel& model, std::span<const Matrix> inputs, Head head,
                             const ForwardOptions& opts = {}) {
  model.validate();
  if (inputs.empty()) throw DomainError("forward: empty sequence");
  const std::size_t batch = inputs[0].rows();
  const std::size_t p = model.hidden();
  if (batch == 0) throw DomainError("forward: empty batch");
  const Matrix bt = model.kernel.kernel().transpose();
  const Matrix tt = model.input_map.transpose();
  const Matrix wt = model.readout.transpose();

  ForwardResult res;
  Tape& tape = res.tape;
  tape.inputs = inputs;
  tape.head = head;
  tape.linear_activation = opts.linear_activation;
  tape.h0 = opts.h0 ? *opts.h0 : Matrix(batch, p);
  if (tape.h0.rows() != batch || tape.h0.cols() != p) {
    throw DimensionError("forward: h0 is " + tape.h0.shape() + ", expected " +
                         std::to_string(batch) + "x" + std::to_string(p));
  }
  tape.steps.reserve(inputs.size());
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    const Matrix& x = inputs[t];
    if (x.rows() != batch || x.cols() != model.input_dim()) {
      throw DimensionError("forward: input at step " + std::to_string(t) + " is " + x.shape() +
                           ", expected " + std::to_string(batch) + "x" +
                           std::to_string(model.input_dim()));
    }
    TapeStep step;
    step.z = matmul(tape.hidden_before(t), bt);
    matmul_acc(step.z, x, tt);
    step.h = step.z;
    if (!opts.linear_activation) {
      for (std::size_t i = 0; i < batch; ++i) {
        auto zr = step.z.row(i);
        auto hr = step.h.row(i);
        for (std::size_t j = 0; j < p; ++j) hr[j] = modrelu(zr[j], model.modrelu_bias[j]);
      }
    }
    tape.steps.push_back(std::move(step));
    if (head == Head::per_step) {
      res.logits.push_back(detail::readout_logits(model, tape.steps.back().h, wt));
    }
  }
  if (head == Head::final_step) {
    res.logits.push_back(detail::readout_logits(model, tape.steps.back().h, wt));
  }
  return res;
}

struct Gradients {
  Matrix kernel_metric;                // skew metric gradient S on so(p)
  std::vector<double> kernel;          // coordinate gradient in the v parameters
  Matrix input_map;
  std::vector<double> modrelu_bias;
  Matrix readout;
  std::vector<double> readout_bias;
};

/// Backpropagation through time. The Euclidean gradient with respect to B is
/// accumulated over every step and batch row, then pulled back to the skew
/// parameter once.
inline Gradients backward(RnnModel& model, const Tape& tape, std::span<const Matrix> dlogits) {
  model.validate();
  const std::size_t steps = tape.steps.size();
  const std::size_t expected = tape.head == Head::per_step ? steps : 1;
  if (dlogits.size() != expected) {
    throw DimensionError("backward: " + std::to_string(dlogits.size()) +
                         " logit gradients for a tape expecting " + std::to_string(expected));
  }
  const std::size_t batch = tape.h0.rows();
  const std::size_t p = model.hidden();
  for (const Matrix& d : dlogits) {
    if (d.rows() != batch || d.cols() != model.classes()) {
      throw DimensionError("backward: logit gradient is " + d.shape());
    }
  }
  const Matrix& b = model.kernel.kernel();

  Gradients g;
  g.input_map = Matrix(p, model.input_dim());
  g.modrelu_bias.assign(p, 0.0);
  g.readout = Matrix(model.classes(), p);
  g.readout_bias.assign(model.classes(), 0.0);
  Matrix grad_b(p, p);

  auto output_grad = [&](const Matrix& dl, const Matrix& h, Matrix& dh) {
    matmul_tn_acc(g.readout, dl, h);
    for (std::size_t i = 0; i < batch; ++i) {
      auto r = dl.row(i);
      for (std::size_t c = 0; c < r.size(); ++c) g.readout_bias[c] += r[c];
    }
    matmul_acc(dh, dl, model.readout);
  };

  Matrix dh(batch, p);
  if (tape.head == Head::final_step) output_grad(dlogits[0], tape.steps.back().h, dh);
  Matrix dz(batch, p);
  for (std::size_t t = steps; t-- > 0;) {
    const TapeStep& st = tape.steps[t];
    if (tape.head == Head::per_step) output_grad(dlogits[t], st.h, dh);
    if (tape.linear_activation) {
      dz = dh;
    } else {
      for (std::size_t i = 0; i < batch; ++i) {
        auto zr = st.z.row(i);
        auto dhr = dh.row(i);
        auto dzr = dz.row(i);
        for (std::size_t j = 0; j < p; ++j) {
          const double z = zr[j];
          const bool active = z != 0.0 && std::abs(z) + model.modrelu_bias[j] > 0.0;
          dzr[j] = active ? dhr[j] : 0.0;
          if (active) g.modrelu_bias[j] += z > 0.0 ? dhr[j] : -dhr[j];
        }
      }
    }
    matmul_tn_acc(grad_b, dz, tape.hidden_before(t));
    matmul_tn_acc(g.input_map, dz, tape.inputs[t]);
    dh = matmul(dz, b);
  }
  g.kernel_metric = model.kernel.pullback(grad_b);
  g.kernel = coordinate_gradient(g.kernel_metric);
  return g;
}

struct LossResult {
  double loss = 0.0;
  std::vector<Matrix> dlogits;
};

/// Softmax cross entropy (natural log) averaged over every emitted step and
/// batch row. targets[t][i] is the class of row i at emitted step t.
inline LossResult cross_entropy(std::span<const Matrix> logits,
                                const std::vector<std::vector<int>>& targets) {
  if (logits.size() != targets.size() || logits.empty()) {
    throw DimensionError("cross_entropy: " + std::to_string(logits.size()) + " logit steps but " +
                         std::to_string(targets.size()) + " target steps");
  }
  const std::size_t batch = logits[0].rows();
  const double scale = 1.0 / static_cast<double>(logits.size() * batch);
  LossResult r;
  r.dlogits.reserve(logits.size());
  for (std::size_t t = 0; t < logits.size(); ++t) {
    const Matrix& l = logits[t];
    if (l.rows() != batch || targets[t].size() != batch) {
      throw DimensionError("cross_entropy: batch size mismatch at step " + std::to_string(t));
    }
    Matrix d(l.rows(), l.cols());
    for (std::size_t i = 0; i < batch; ++i) {
      const int y = targets[t][i];
      if (y < 0 || static_cast<std::size_t>(y) >= l.cols()) {
        throw DomainError("cross_entropy: target " + std::to_string(y) + " out of range");
      }
      auto row = l.row(i);
      double mx = row[0];
      for (double v : row) mx = std::max(mx, v);
      double sum = 0.0;
      for (double v : row) sum += std::exp(v - mx);
      const double lse = mx + std::log(sum);
      r.loss += (lse - row[static_cast<std::size_t>(y)]) * scale;
      auto dr = d.row(i);
      for (std::size_t c = 0; c < row.size(); ++c) dr[c] = std::exp(row[c] - lse) * scale;
      dr[static_cast<std::size_t>(y)] -= scale;
    }
    r.dlogits.push_back(std::move(d));
  }
  return r;
}

struct LearningRates {
  double general = 1e-3;
  double orthogonal = 1e-4;
};

/// One optimizer step over every parameter group. The kernel cache is left
/// stale; the next refresh() recomputes exp(A) once.
inline void apply_gradients(RnnModel& model, const Gradients& g, Optimizer& opt,
                            const LearningRates& lr) {
  opt.step("orthogonal", lr.orthogonal, model.kernel.mutable_values(), g.kernel);
  opt.step("input_map", lr.general, model.input_map.values(), g.input_map.values());
  opt.step("modrelu_bias", lr.general, model.modrelu_bias, g.modrelu_bias);
  opt.step("readout", lr.general, model.readout.values(), g.readout.values());
  opt.step("readout_bias", lr.general, model.readout_bias, g.readout_bias);
}

/// Refresh, forward, loss, backward and update; returns the loss measured
/// before the update.
inline double train_step(RnnModel& model, Optimizer& opt, const LearningRates& lr,
                         std::span<const Matrix> inputs,
                         const std::vector<std::vector<int>>& targets, Head head) {
  model.kernel.refresh();
  const ForwardResult res = forward(model, inputs, head);
  const LossResult ce = cross_entropy(res.logits, targets);
  const Gradients g = backward(model, res.tape, ce.dlogits);
  apply_gradients(model, g, opt, lr);
  return ce.loss;
}

// Checkpoint format, plain text, one record per line:
//   exprnn-checkpoint 1
//   dims <p> <d> <classes>
//   <name> <count> <values...>     for kernel, input_map, modrelu_bias,
//                                  readout, readout_bias in that order
// Values use the shortest decimal form that parses back to the same double.

inline constexpr int kCheckpointVersion = 1;

namespace detail {

inline void write_values(std::ostream& os, const char* name, std::span<const double> v) {
  os << name << ' ' << v.size();
  char buf[32];
  for (double x : v) {
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, x);
    os << ' ' << std::string_view(buf, static_cast<std::size_t>(end - buf));
  }
  os << '\n';
}

inline std::vector<double> read_values(std::istream& is, const std::string& name,
                                       std::size_t expected) {
  std::string tag;
  std::size_t count = 0;
  if (!(is >> tag >> count)) throw FormatError("checkpoint: missing record '" + name + "'");
  if (tag != name) throw FormatError("checkpoint: expected '" + name + "', found '" + tag + "'");
  if (count != expected) {
    throw DimensionError("checkpoint: '" + name + "' has " + std::to_string(count) +
                         " values, expected " + std::to_string(expected));
  }
  std::vector<double> v(count);
  std::string tok;
  for (double& x : v) {
    if (!(is >> tok)) throw FormatError("checkpoint: truncated record '" + name + "'");
    auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), x);
    if (ec != std::errc() || ptr != tok.data() + tok.size()) {
      throw FormatError("checkpoint: bad number '" + tok + "' in '" + name + "'");
    }
  }
  return v;
}

}  // namespace detail

inline void save_checkpoint(const RnnModel& model, std::ostream& os) {
  model.validate();
  os << "exprnn-checkpoint " << kCheckpointVersion << '\n';
  os << "dims " << model.hidden() << ' ' << model.input_dim() << ' ' << model.classes() << '\n';
  detail::write_values(os, "kernel", model.kernel.param().v);
  detail::write_values(os, "input_map", model.input_map.values());
  detail::write_values(os, "modrelu_bias", model.modrelu_bias);
  detail::write_values(os, "readout", model.readout.values());
  detail::write_values(os, "readout_bias", model.readout_bias);
}

inline RnnModel load_checkpoint(std::istream& is) {
  std::string magic, dims;
  int version = 0;
  if (!(is >> magic >> version) || magic != "exprnn-checkpoint") {
    throw FormatError("checkpoint: not an exprnn checkpoint");
  }
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint: unsupported version " + std::to_string(version));
  }
  std::size_t p = 0, d = 0, c = 0;
  if (!(is >> dims >> p >> d >> c) || dims != "dims" || p == 0 || d == 0 || c == 0) {
    throw FormatError("checkpoint: bad dims record");
  }
  RnnModel m;
  m.kernel = OrthoLayer(SkewParam{p, detail::read_values(is, "kernel", skew_dim(p))});
  m.input_map = Matrix(p, d, detail::read_values(is, "input_map", p * d));
  m.modrelu_bias = detail::read_values(is, "modrelu_bias", p);
  m.readout = Matrix(c, p, detail::read_values(is, "readout", c * p));
  m.readout_bias = detail::read_values(is, "readout_bias", c);
  return m;
}

inline void save_checkpoint(const RnnModel& model, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw Error("cannot open '" + path + "' for writing");
  save_checkpoint(model, os);
  if (!os) throw Error("failed writing '" + path + "'");
}

inline RnnModel load_checkpoint(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot open checkpoint '" + path + "'");
  return load_checkpoint(is);
}

}  // namespace exprnn
