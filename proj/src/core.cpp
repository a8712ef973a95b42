#include "spinread/core.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace spinread {

std::string_view to_string(Label label) {
  return label == Label::Event ? "event" : "noevent";
}

Label label_from_string(std::string_view text) {
  if (text == "event") return Label::Event;
  if (text == "noevent") return Label::NoEvent;
  throw std::invalid_argument("unknown label '" + std::string(text) + "'");
}

Trace::Trace(std::vector<double> samples, double dt_us)
    : samples_(std::move(samples)), dt_us_(dt_us) {
  if (samples_.empty()) throw std::invalid_argument("trace must have at least one sample");
  if (!(dt_us_ > 0.0) || !std::isfinite(dt_us_)) {
    throw std::invalid_argument("trace sample period must be positive");
  }
  for (double v : samples_) {
    if (!std::isfinite(v)) throw std::invalid_argument("trace contains a non-finite sample");
  }
}

LabeledDataset::LabeledDataset(std::vector<Trace> traces_in, std::vector<Label> labels_in,
                               std::uint64_t seed_in)
    : traces(std::move(traces_in)), labels(std::move(labels_in)), seed(seed_in) {
  if (traces.size() != labels.size()) {
    throw std::invalid_argument("dataset needs one label per trace");
  }
}

std::size_t LabeledDataset::count(Label label) const {
  std::size_t n = 0;
  for (Label l : labels) n += (l == label);
  return n;
}

LabeledDataset LabeledDataset::subset(std::span<const std::size_t> indices) const {
  LabeledDataset out;
  out.seed = seed;
  out.traces.reserve(indices.size());
  out.labels.reserve(indices.size());
  for (std::size_t i : indices) {
    out.traces.push_back(traces.at(i));
    out.labels.push_back(labels.at(i));
  }
  return out;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

Rng::Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

double Rng::uniform() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double Rng::exponential(double mean) {
  return -mean * std::log1p(-uniform());
}

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_normal_;
  }
  // 1 - u lies in (0, 1], so the log is finite.
  const double r = std::sqrt(-2.0 * std::log(1.0 - uniform()));
  const double theta = 2.0 * std::numbers::pi * uniform();
  spare_normal_ = r * std::sin(theta);
  has_spare_ = true;
  return r * std::cos(theta);
}

std::uint64_t Rng::poisson(double mean) {
  if (!(mean >= 0.0)) throw std::invalid_argument("poisson mean must be non-negative");
  if (mean > 500.0) throw std::invalid_argument("poisson mean too large for Knuth sampling");
  const double limit = std::exp(-mean);
  std::uint64_t k = 0;
  double prod = uniform();
  while (prod >= limit && mean > 0.0) {
    ++k;
    prod *= uniform();
  }
  return k;
}

std::size_t Rng::index(std::size_t n) {
  if (n == 0) throw std::invalid_argument("index range must be non-empty");
  const std::uint64_t bound = static_cast<std::uint64_t>(n);
  const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % bound);
  std::uint64_t x = engine_();
  while (x >= limit) x = engine_();
  return static_cast<std::size_t>(x % bound);
}

Rng Rng::split(std::uint64_t stream) const {
  return Rng(splitmix64(seed_ ^ splitmix64(stream + 1)));
}

std::pair<LabeledDataset, LabeledDataset> split_dataset(const LabeledDataset& ds,
                                                        std::size_t n_train,
                                                        std::size_t n_eval, Rng& rng) {
  if (n_train + n_eval != ds.size()) {
    throw std::invalid_argument("split sizes " + std::to_string(n_train) + " + " +
                                std::to_string(n_eval) + " do not match dataset size " +
                                std::to_string(ds.size()));
  }
  std::vector<std::size_t> by_label[2];
  for (std::size_t i = 0; i < ds.size(); ++i) {
    by_label[static_cast<int>(ds.labels[i])].push_back(i);
  }

  std::vector<std::size_t> train_idx;
  std::vector<std::size_t> eval_idx;
  train_idx.reserve(n_train);
  eval_idx.reserve(n_eval);

  // Class 0 takes its rounded share; class 1 takes the remainder, clamped to
  // what it actually holds.
  const double frac = ds.empty() ? 0.0 : static_cast<double>(n_train) / ds.size();
  std::size_t take0 = static_cast<std::size_t>(std::llround(frac * by_label[0].size()));
  take0 = std::min(take0, n_train);
  std::size_t take1 = n_train - take0;
  if (take1 > by_label[1].size()) {
    take1 = by_label[1].size();
    take0 = n_train - take1;
  }
  const std::size_t take[2] = {take0, take1};

  for (int c = 0; c < 2; ++c) {
    rng.shuffle(by_label[c]);
    for (std::size_t j = 0; j < by_label[c].size(); ++j) {
      (j < take[c] ? train_idx : eval_idx).push_back(by_label[c][j]);
    }
  }
  rng.shuffle(train_idx);
  rng.shuffle(eval_idx);
  return {ds.subset(train_idx), ds.subset(eval_idx)};
}

Trace standardize(const Trace& trace, double baseline) {
  if (!std::isfinite(baseline)) throw std::invalid_argument("baseline mean must be finite");
  std::vector<double> out = trace.to_vector();
  for (double& v : out) v -= baseline;
  return Trace(std::move(out), trace.dt_us());
}

double baseline_mean(std::span<const Trace> traces) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const Trace& t : traces) {
    for (double v : t.samples()) sum += v;
    n += t.size();
  }
  if (n == 0) throw std::invalid_argument("baseline mean of an empty trace set");
  return sum / static_cast<double>(n);
}

}  // namespace spinread
