#pragma once

// Training data: the copying-memory task and pixel-by-pixel MNIST read from
// IDX files. Token sequences are stored step-major, tokens[t][i] being the
// token of batch row i at step t, which is the order the recurrence reads.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "exprnn/matcore.hpp"
#include "exprnn/random.hpp"

namespace exprnn {

using TokenSteps = std::vector<std::vector<int>>;

/// Token ids: symbols 0..N−1, blank N, start marker N+1.
struct CopyConfig {
  int alphabet = 8;   // N
  int copy_len = 10;  // K
  int spacing = 100;  // L
  std::size_t batch = 128;

  void validate() const {
    if (alphabet < 2 || copy_len < 1 || spacing < 1 || batch < 1) {
      throw DomainError("copying task: need N >= 2, K >= 1, L >= 1 and batch >= 1");
    }
  }
  [[nodiscard]] std::size_t seq_len() const {
    return static_cast<std::size_t>(spacing + 2 * copy_len);
  }
  [[nodiscard]] int blank() const { return alphabet; }
  [[nodiscard]] int start() const { return alphabet + 1; }
  /// One-hot width of the inputs and number of output classes.
  [[nodiscard]] std::size_t vocab() const { return static_cast<std::size_t>(alphabet + 2); }
};

struct CopyingExample {
  std::vector<int> input;
  std::vector<int> target;
};

inline CopyingExample copying_example(const CopyConfig& cfg, std::span<const int> symbols) {
  cfg.validate();
  if (symbols.size() != static_cast<std::size_t>(cfg.copy_len)) {
    throw DimensionError("copying_example: expected " + std::to_string(cfg.copy_len) + " symbols");
  }
  for (int s : symbols) {
    if (s < 0 || s >= cfg.alphabet) throw DomainError("copying_example: symbol out of range");
  }
  const std::size_t len = cfg.seq_len();
  const auto k = static_cast<std::size_t>(cfg.copy_len);
  const auto l = static_cast<std::size_t>(cfg.spacing);
  CopyingExample ex{std::vector<int>(len, cfg.blank()), std::vector<int>(len, cfg.blank())};
  std::copy(symbols.begin(), symbols.end(), ex.input.begin());
  ex.input[k + l] = cfg.start();
  std::copy(symbols.begin(), symbols.end(), ex.target.begin() + static_cast<std::ptrdiff_t>(k + l));
  return ex;
}

/// Dash for blank, colon for start, symbol s printed as s + 1.
inline std::string render_copying(const CopyConfig& cfg, std::span<const int> tokens) {
  std::string out;
  for (int t : tokens) {
    if (t == cfg.blank()) {
      out += '-';
    } else if (t == cfg.start()) {
      out += ':';
    } else {
      out += std::to_string(t + 1);
    }
  }
  return out;
}

struct CopyingBatch {
  TokenSteps inputs;
  TokenSteps targets;
};

/// Draws batch × K symbols, row by row.
inline CopyingBatch gen_copying_batch(const CopyConfig& cfg, Rng& rng) {
  cfg.validate();
  const std::size_t len = cfg.seq_len();
  CopyingBatch b{TokenSteps(len, std::vector<int>(cfg.batch)),
                 TokenSteps(len, std::vector<int>(cfg.batch))};
  std::uniform_int_distribution<int> sym(0, cfg.alphabet - 1);
  std::vector<int> symbols(static_cast<std::size_t>(cfg.copy_len));
  for (std::size_t i = 0; i < cfg.batch; ++i) {
    for (int& s : symbols) s = sym(rng);
    const CopyingExample ex = copying_example(cfg, symbols);
    for (std::size_t t = 0; t < len; ++t) {
      b.inputs[t][i] = ex.input[t];
      b.targets[t][i] = ex.target[t];
    }
  }
  return b;
}

/// Cross entropy of emitting blanks and then uniform guesses: K ln N / (L + 2K).
inline double copying_baseline(const CopyConfig& cfg) {
  return cfg.copy_len * std::log(static_cast<double>(cfg.alphabet)) /
         static_cast<double>(cfg.spacing + 2 * cfg.copy_len);
}

/// One batch × depth one-hot matrix per step.
inline std::vector<Matrix> one_hot(const TokenSteps& tokens, std::size_t depth) {
  std::vector<Matrix> out;
  out.reserve(tokens.size());
  for (const auto& step : tokens) {
    Matrix m(step.size(), depth);
    for (std::size_t i = 0; i < step.size(); ++i) {
      if (step[i] < 0 || static_cast<std::size_t>(step[i]) >= depth) {
        throw DomainError("one_hot: token " + std::to_string(step[i]) + " out of range");
      }
      m(i, static_cast<std::size_t>(step[i])) = 1.0;
    }
    out.push_back(std::move(m));
  }
  return out;
}

inline int argmax_row(const Matrix& m, std::size_t i) {
  const auto r = m.row(i);
  return static_cast<int>(std::max_element(r.begin(), r.end()) - r.begin());
}

/// Fraction of argmax predictions equal to the target over steps [from, to).
inline double token_accuracy(std::span<const Matrix> logits, const TokenSteps& targets,
                             std::size_t from, std::size_t to) {
  if (logits.size() != targets.size() || from >= to || to > logits.size()) {
    throw DimensionError("token_accuracy: bad step range");
  }
  std::size_t hit = 0, total = 0;
  for (std::size_t t = from; t < to; ++t)
    for (std::size_t i = 0; i < targets[t].size(); ++i, ++total)
      hit += argmax_row(logits[t], i) == targets[t][i];
  return static_cast<double>(hit) / static_cast<double>(total);
}

/// Accuracy over the K recall positions at the end of the sequence.
inline double recall_accuracy(const CopyConfig& cfg, std::span<const Matrix> logits,
                              const TokenSteps& targets) {
  return token_accuracy(logits, targets, cfg.seq_len() - static_cast<std::size_t>(cfg.copy_len),
                        cfg.seq_len());
}

// IDX files: big-endian 32-bit magic (0x0000 08 <ndims>), one 32-bit size per
// dimension, then unsigned bytes.

inline constexpr std::uint32_t kIdxImagesMagic = 2051;
inline constexpr std::uint32_t kIdxLabelsMagic = 2049;
inline constexpr std::size_t kMnistPixels = 784;

struct ImageSet {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> pixels;  // count × (rows·cols), scaled to [0, 1]
  std::vector<int> labels;

  [[nodiscard]] std::size_t pixels_per_image() const { return rows * cols; }
  [[nodiscard]] std::size_t count() const {
    return pixels_per_image() == 0 ? 0 : pixels.size() / pixels_per_image();
  }
  [[nodiscard]] std::span<const double> image(std::size_t i) const {
    return {pixels.data() + i * pixels_per_image(), pixels_per_image()};
  }
};

namespace detail {

inline std::vector<unsigned char> read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open '" + path + "'");
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

inline std::uint32_t read_be32(const std::vector<unsigned char>& b, std::size_t at,
                               const std::string& path) {
  if (b.size() < at + 4) throw TruncatedError("'" + path + "': header ends early");
  return (std::uint32_t{b[at]} << 24) | (std::uint32_t{b[at + 1]} << 16) |
         (std::uint32_t{b[at + 2]} << 8) | std::uint32_t{b[at + 3]};
}

/// Checks magic and payload length; returns the dimension sizes.
inline std::vector<std::size_t> idx_header(const std::vector<unsigned char>& b,
                                           std::uint32_t magic, const std::string& path) {
  const std::uint32_t found = read_be32(b, 0, path);
  if (found != magic) {
    throw BadMagicError("'" + path + "': magic " + std::to_string(found) + ", expected " +
                        std::to_string(magic));
  }
  const std::size_t ndims = magic & 0xffu;
  std::vector<std::size_t> dims(ndims);
  std::size_t payload = 1;
  for (std::size_t k = 0; k < ndims; ++k) {
    dims[k] = read_be32(b, 4 + 4 * k, path);
    payload *= dims[k];
  }
  const std::size_t header = 4 + 4 * ndims;
  if (b.size() < header + payload) {
    throw TruncatedError("'" + path + "': payload has " + std::to_string(b.size() - header) +
                         " bytes, header declares " + std::to_string(payload));
  }
  if (b.size() > header + payload) {
    throw DimensionError("'" + path + "': " + std::to_string(b.size() - header - payload) +
                         " bytes beyond the declared dimensions");
  }
  return dims;
}

}  // namespace detail

inline ImageSet load_idx_images(const std::string& path) {
  const auto bytes = detail::read_file(path);
  const auto dims = detail::idx_header(bytes, kIdxImagesMagic, path);
  ImageSet s;
  s.rows = dims[1];
  s.cols = dims[2];
  s.pixels.resize(dims[0] * dims[1] * dims[2]);
  for (std::size_t k = 0; k < s.pixels.size(); ++k) s.pixels[k] = bytes[16 + k] / 255.0;
  return s;
}

inline std::vector<int> load_idx_labels(const std::string& path) {
  const auto bytes = detail::read_file(path);
  const auto dims = detail::idx_header(bytes, kIdxLabelsMagic, path);
  std::vector<int> labels(dims[0]);
  for (std::size_t k = 0; k < labels.size(); ++k) labels[k] = bytes[8 + k];
  return labels;
}

/// Images and labels together; `limit` keeps only the first images.
inline ImageSet load_idx(const std::string& images_path, const std::string& labels_path,
                         std::optional<std::size_t> limit = std::nullopt) {
  ImageSet s = load_idx_images(images_path);
  s.labels = load_idx_labels(labels_path);
  if (s.labels.size() != s.count()) {
    throw DimensionError("'" + images_path + "' has " + std::to_string(s.count()) +
                         " images but '" + labels_path + "' has " +
                         std::to_string(s.labels.size()) + " labels");
  }
  if (limit && *limit < s.count()) {
    s.pixels.resize(*limit * s.pixels_per_image());
    s.labels.resize(*limit);
  }
  return s;
}

/// A fixed bijection on pixel positions: out[k] = in[order[k]].
struct PixelPermutation {
  std::vector<std::size_t> order;
  std::vector<std::size_t> inverse;

  static PixelPermutation identity(std::size_t n) {
    PixelPermutation p;
    p.order.resize(n);
    std::iota(p.order.begin(), p.order.end(), std::size_t{0});
    p.inverse = p.order;
    return p;
  }

  static PixelPermutation from_seed(std::size_t n, std::uint64_t seed) {
    PixelPermutation p = identity(n);
    Rng rng(seed);
    std::shuffle(p.order.begin(), p.order.end(), rng);
    for (std::size_t k = 0; k < n; ++k) p.inverse[p.order[k]] = k;
    return p;
  }

  [[nodiscard]] std::vector<double> apply(std::span<const double> in) const {
    return gather(in, order);
  }
  [[nodiscard]] std::vector<double> undo(std::span<const double> in) const {
    return gather(in, inverse);
  }

 private:
  static std::vector<double> gather(std::span<const double> in,
                                    const std::vector<std::size_t>& idx) {
    if (in.size() != idx.size()) throw DimensionError("PixelPermutation: length mismatch");
    std::vector<double> out(in.size());
    for (std::size_t k = 0; k < idx.size(); ++k) out[k] = in[idx[k]];
    return out;
  }
};

inline ImageSet permute_pixels(const ImageSet& images, const PixelPermutation& perm) {
  ImageSet out = images;
  for (std::size_t i = 0; i < images.count(); ++i) {
    const auto moved = perm.apply(images.image(i));
    std::copy(moved.begin(), moved.end(), out.pixels.begin() + static_cast<std::ptrdiff_t>(i * moved.size()));
  }
  return out;
}

/// No seed leaves the images unchanged.
inline ImageSet permute_pixels(const ImageSet& images, std::optional<std::uint64_t> seed) {
  if (!seed) return images;
  return permute_pixels(images, PixelPermutation::from_seed(images.pixels_per_image(), *seed));
}

/// Pixel sequence for the listed images: one batch × 1 matrix per pixel,
/// in row-major order.
inline std::vector<Matrix> pixel_sequence(const ImageSet& images,
                                          std::span<const std::size_t> which) {
  const std::size_t len = images.pixels_per_image();
  std::vector<Matrix> xs(len, Matrix(which.size(), 1));
  for (std::size_t i = 0; i < which.size(); ++i) {
    const auto img = images.image(which[i]);
    for (std::size_t t = 0; t < len; ++t) xs[t](i, 0) = img[t];
  }
  return xs;
}

}  // namespace exprnn
