#pragma once

// Shared domain types: traces, labels, labeled datasets and the seeded RNG
// that every stochastic routine in the library draws from.

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace spinread {

// Event means a charge transition is present (spin-down under energy
// selective readout). NoEvent is a flat trace (spin-up).
enum class Label : std::uint8_t { Event = 0, NoEvent = 1 };

std::string_view to_string(Label label);
Label label_from_string(std::string_view text);

// Fixed-length sampled sensor voltage. Amplitudes are in units of the charge
// event step, so an ideal event moves the signal from 0.0 to 1.0.
class Trace {
 public:
  static constexpr std::size_t kDefaultLength = 480;

  explicit Trace(std::vector<double> samples, double dt_us = 1.0);

  std::span<const double> samples() const { return samples_; }
  double dt_us() const { return dt_us_; }
  std::size_t size() const { return samples_.size(); }
  double operator[](std::size_t i) const { return samples_[i]; }

  // Copy of the sample buffer, for building a derived trace.
  std::vector<double> to_vector() const { return samples_; }

  friend bool operator==(const Trace&, const Trace&) = default;

 private:
  std::vector<double> samples_;
  double dt_us_;
};

// Traces with their ground-truth labels. `seed` records the master seed the
// set was generated from; it travels with the data into files and manifests.
struct LabeledDataset {
  std::vector<Trace> traces;
  std::vector<Label> labels;
  std::uint64_t seed = 0;

  LabeledDataset() = default;
  LabeledDataset(std::vector<Trace> traces_in, std::vector<Label> labels_in,
                 std::uint64_t seed_in);

  std::size_t size() const { return traces.size(); }
  bool empty() const { return traces.empty(); }
  std::size_t count(Label label) const;
  LabeledDataset subset(std::span<const std::size_t> indices) const;
};

// Deterministic random source.
//
// Engine: std::mt19937_64 seeded with the 64-bit seed (its output sequence is
// fixed by the C++ standard). Distributions are implemented here rather than
// taken from <random>, whose algorithms are implementation-defined:
//   uniform()      53 high bits / 2^53, in [0, 1)
//   exponential()  -mean * log(1 - u)
//   normal()       Box-Muller, both variates of a pair are used in order
//   poisson()      Knuth multiplication method
//   index(n)       rejection sampling on the top bits, unbiased
// Child streams: split(k) seeds a new engine with splitmix64(seed ^ splitmix64(k + 1)).
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t next_u64() { return engine_(); }
  double uniform();
  double exponential(double mean);
  double normal();
  std::uint64_t poisson(double mean);
  std::size_t index(std::size_t n);

  Rng split(std::uint64_t stream) const;

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::swap(items[i - 1], items[index(i)]);
    }
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  double spare_normal_ = 0.0;
  bool has_spare_ = false;
};

std::uint64_t splitmix64(std::uint64_t x);

// Stratified shuffle split: each label keeps its share of the source set
// (rounded), and both halves come back in shuffled order.
std::pair<LabeledDataset, LabeledDataset> split_dataset(const LabeledDataset& ds,
                                                        std::size_t n_train,
                                                        std::size_t n_eval, Rng& rng);

// Subtracts a baseline offset from every sample.
Trace standardize(const Trace& trace, double baseline_mean);

// Mean over every sample of every trace.
double baseline_mean(std::span<const Trace> traces);

}  // namespace spinread
