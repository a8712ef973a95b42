#include "spinread/trace_io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace spinread {
namespace {

constexpr std::string_view kTextMagic = "spinread-dataset 1";
constexpr std::array<char, 8> kBinaryMagic = {'S', 'R', 'D', 'S', 'E', 'T', '0', '1'};

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <typename T>
void put_le(std::ostream& os, T value) {
  auto bytes = std::bit_cast<std::array<char, sizeof(T)>>(value);
  if constexpr (std::endian::native == std::endian::big) {
    std::reverse(bytes.begin(), bytes.end());
  }
  os.write(bytes.data(), bytes.size());
}

template <typename T>
T get_le(std::istream& is) {
  std::array<char, sizeof(T)> bytes{};
  if (!is.read(bytes.data(), bytes.size())) {
    throw std::runtime_error("dataset file truncated");
  }
  if constexpr (std::endian::native == std::endian::big) {
    std::reverse(bytes.begin(), bytes.end());
  }
  return std::bit_cast<T>(bytes);
}

std::string next_line(std::istream& is, const char* what) {
  std::string line;
  if (!std::getline(is, line)) {
    throw std::runtime_error(std::string("dataset file ended while reading ") + what);
  }
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return line;
}

// Parses "key value" and checks the key.
std::string keyed_value(std::istream& is, std::string_view key) {
  const std::string line = next_line(is, std::string(key).c_str());
  const auto space = line.find(' ');
  if (space == std::string::npos || std::string_view(line).substr(0, space) != key) {
    throw std::runtime_error("expected header key '" + std::string(key) + "', got '" + line + "'");
  }
  return line.substr(space + 1);
}

std::uint64_t parse_u64(std::string_view text) {
  std::uint64_t v = 0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw std::runtime_error("invalid integer '" + std::string(text) + "'");
  }
  return v;
}

void check_uniform(const LabeledDataset& ds) {
  if (ds.empty()) return;
  for (const Trace& t : ds.traces) {
    if (t.size() != ds.traces.front().size() || t.dt_us() != ds.traces.front().dt_us()) {
      throw std::invalid_argument("dataset files require equal-length traces with one dt");
    }
  }
}

}  // namespace

std::string format_double(double v) {
  std::array<char, 32> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

double parse_double(std::string_view text) {
  double v = 0.0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw std::runtime_error("invalid number '" + std::string(text) + "'");
  }
  return v;
}

bool is_binary_path(const std::filesystem::path& path) {
  return path.extension() == ".bin";
}

void write_dataset_text(std::ostream& os, const LabeledDataset& ds,
                        std::optional<double> baseline) {
  check_uniform(ds);
  const std::size_t length = ds.empty() ? 0 : ds.traces.front().size();
  const double dt = ds.empty() ? 1.0 : ds.traces.front().dt_us();
  os << kTextMagic << '\n';
  os << "count " << ds.size() << '\n';
  os << "length " << length << '\n';
  os << "dt_us " << format_double(dt) << '\n';
  os << "seed " << ds.seed << '\n';
  os << "baseline_mean " << (baseline ? format_double(*baseline) : std::string("none")) << '\n';
  for (std::size_t i = 0; i < ds.size(); ++i) {
    os << "trace " << i << ' ' << to_string(ds.labels[i]) << '\n';
    for (double v : ds.traces[i].samples()) os << format_double(v) << '\n';
  }
}

DatasetFile read_dataset_text(std::istream& is) {
  if (next_line(is, "magic") != kTextMagic) {
    throw std::runtime_error("not a spinread text dataset");
  }
  DatasetHeader h;
  h.count = parse_u64(keyed_value(is, "count"));
  h.length = parse_u64(keyed_value(is, "length"));
  h.dt_us = parse_double(keyed_value(is, "dt_us"));
  h.seed = parse_u64(keyed_value(is, "seed"));
  const std::string base = keyed_value(is, "baseline_mean");
  if (base != "none") h.baseline_mean = parse_double(base);

  std::vector<Trace> traces;
  std::vector<Label> labels;
  traces.reserve(h.count);
  labels.reserve(h.count);
  for (std::size_t i = 0; i < h.count; ++i) {
    std::istringstream tag(next_line(is, "trace tag"));
    std::string word, label;
    std::size_t index = 0;
    if (!(tag >> word >> index >> label) || word != "trace" || index != i) {
      throw std::runtime_error("malformed trace tag for trace " + std::to_string(i));
    }
    labels.push_back(label_from_string(label));
    std::vector<double> samples(h.length);
    for (double& v : samples) v = parse_double(next_line(is, "sample"));
    traces.emplace_back(std::move(samples), h.dt_us);
  }
  return {LabeledDataset(std::move(traces), std::move(labels), h.seed), h};
}

void write_dataset_binary(std::ostream& os, const LabeledDataset& ds,
                          std::optional<double> baseline) {
  check_uniform(ds);
  os.write(kBinaryMagic.data(), kBinaryMagic.size());
  put_le<std::uint64_t>(os, ds.size());
  put_le<std::uint64_t>(os, ds.empty() ? 0 : ds.traces.front().size());
  put_le<double>(os, ds.empty() ? 1.0 : ds.traces.front().dt_us());
  put_le<std::uint64_t>(os, ds.seed);
  put_le<std::uint8_t>(os, baseline ? 1 : 0);
  put_le<double>(os, baseline.value_or(0.0));
  for (std::size_t i = 0; i < ds.size(); ++i) {
    put_le<std::uint8_t>(os, static_cast<std::uint8_t>(ds.labels[i]));
    for (double v : ds.traces[i].samples()) put_le<double>(os, v);
  }
}

DatasetFile read_dataset_binary(std::istream& is) {
  std::array<char, 8> magic{};
  if (!is.read(magic.data(), magic.size()) || magic != kBinaryMagic) {
    throw std::runtime_error("not a spinread binary dataset");
  }
  DatasetHeader h;
  h.count = get_le<std::uint64_t>(is);
  h.length = get_le<std::uint64_t>(is);
  h.dt_us = get_le<double>(is);
  h.seed = get_le<std::uint64_t>(is);
  const bool has_base = get_le<std::uint8_t>(is) != 0;
  const double base = get_le<double>(is);
  if (has_base) h.baseline_mean = base;

  std::vector<Trace> traces;
  std::vector<Label> labels;
  for (std::size_t i = 0; i < h.count; ++i) {
    const auto raw = get_le<std::uint8_t>(is);
    if (raw > 1) throw std::runtime_error("invalid label byte in binary dataset");
    labels.push_back(static_cast<Label>(raw));
    std::vector<double> samples(h.length);
    for (double& v : samples) v = get_le<double>(is);
    traces.emplace_back(std::move(samples), h.dt_us);
  }
  return {LabeledDataset(std::move(traces), std::move(labels), h.seed), h};
}

void write_dataset(const std::filesystem::path& path, const LabeledDataset& ds,
                   std::optional<double> baseline) {
  const bool binary = is_binary_path(path);
  std::ofstream os(path, binary ? std::ios::binary : std::ios::out);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  if (binary) {
    write_dataset_binary(os, ds, baseline);
  } else {
    write_dataset_text(os, ds, baseline);
  }
  if (!os) throw std::runtime_error("failed writing " + path.string());
}

DatasetFile read_dataset(const std::filesystem::path& path) {
  const bool binary = is_binary_path(path);
  std::ifstream is(path, binary ? std::ios::binary : std::ios::in);
  if (!is) throw std::runtime_error("cannot open dataset " + path.string());
  return binary ? read_dataset_binary(is) : read_dataset_text(is);
}

}  // namespace spinread
