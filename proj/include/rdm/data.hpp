#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "rdm/rng.hpp"
#include "rdm/tensor.hpp"

namespace rdm::data {

struct EnvironmentSpec {
  double agreement = 0.5;    // P(color channel matches the final label)
  double label_noise = 0.25; // P(semantic label flipped)
  std::size_t n = 0;
  std::uint64_t seed = 0;

  void validate() const;  // throws ConfigError
};

struct DomainDataset {
  int domain_id = 0;
  Tensor inputs;  // [n, d]
  std::vector<int> labels;
  std::size_t num_classes = 2;
  EnvironmentSpec env;

  std::size_t n() const { return labels.size(); }
  std::size_t dim() const { return inputs.rank() == 2 ? inputs.cols() : 0; }
};

struct DomainBatch {
  int domain_id = 0;
  Tensor inputs;  // [b, d]
  std::vector<int> labels;
};

// --- MNIST IDX ingestion --------------------------------------------------

struct DigitSet {
  std::size_t rows = 28, cols = 28;
  std::vector<double> images;  // n * rows * cols, grayscale in [0,1]
  std::vector<int> labels;     // digits 0-9

  std::size_t n() const { return labels.size(); }
};

// Reads big-endian IDX image/label files (magic 0x803 / 0x801). Distinct
// DataError messages for wrong magic, truncation and count mismatch.
DigitSet load_idx(const std::string& images_path, const std::string& labels_path);

// --- digit sources ----------------------------------------------------------

// Yields one 28x28 grayscale digit image per call.
class DigitSource {
 public:
  virtual ~DigitSource() = default;
  virtual void next(Rng& rng, std::span<double> image784, int& digit) = 0;
};

// Blurred-stroke glyphs, one fixed stroke template per digit class with
// per-sample jitter. Lets the whole suite run without MNIST files.
class ProceduralDigits final : public DigitSource {
 public:
  ProceduralDigits();
  void next(Rng& rng, std::span<double> image784, int& digit) override;

 private:
  struct Stroke {
    double x0, y0, x1, y1;
  };
  std::vector<std::vector<Stroke>> templates_;  // per class
};

// Sequential pass over a slice of a DigitSet; throws DataError when the
// slice is exhausted.
class IdxDigits final : public DigitSource {
 public:
  IdxDigits(const DigitSet& set, std::size_t begin, std::size_t end);
  void next(Rng& rng, std::span<double> image784, int& digit) override;

 private:
  const DigitSet* set_;
  std::size_t pos_, end_;
};

// --- environment construction ----------------------------------------------

// ColoredMNIST-style domain: binary label (digit >= 5) flipped with
// probability label_noise, color channel agreeing with the final label with
// probability `agreement`, 2x average-pooled to 2x14x14 = 392 features.
DomainDataset make_colored_env(DigitSource& digits, const EnvironmentSpec& spec, int domain_id);

// Two-feature analogue for oracle-speed tests: feature 1 agrees with the
// label with fixed probability 0.75 (invariant), feature 2 with
// spec.agreement (spurious); both encoded +/-1 with uniform noise in
// [-0.1, 0.1].
DomainDataset make_two_feature_env(const EnvironmentSpec& spec, int domain_id);

// First head_n samples and the remainder, in generation order.
std::pair<DomainDataset, DomainDataset> split_head(const DomainDataset& ds, std::size_t head_n);

// One equal-size batch per domain, drawn from a shared deterministic RNG
// stream. Without replacement, batch_size must not exceed the domain size;
// batch_size == n yields a permutation of the domain.
std::vector<DomainBatch> sample_domain_batches(const std::vector<DomainDataset>& datasets, std::size_t batch_size,
                                               Rng& rng, bool with_replacement = true);

// --- flat binary container ("RDMD") ----------------------------------------
// Little-endian header {magic "RDMD", version u32, n u32, d u32,
// num_classes u32}, then f64 inputs row-major, then u32 labels.

void write_rdmd(const std::string& path, const DomainDataset& ds);
DomainDataset read_rdmd(const std::string& path);

}  // namespace rdm::data
