#pragma once

// Dataset files. Two encodings share one logical layout; the path extension
// picks the encoding (".bin" is binary, anything else is text). See
// docs/FORMATS.md for the byte-level description.

#include <filesystem>
#include <iosfwd>
#include <optional>

#include "spinread/core.hpp"

namespace spinread {

// Header fields written alongside the traces. `baseline_mean` is the offset
// that was subtracted during standardization, when the data went through it.
struct DatasetHeader {
  std::size_t count = 0;
  std::size_t length = 0;
  double dt_us = 1.0;
  std::uint64_t seed = 0;
  std::optional<double> baseline_mean;
};

struct DatasetFile {
  LabeledDataset dataset;
  DatasetHeader header;
};

bool is_binary_path(const std::filesystem::path& path);

void write_dataset_text(std::ostream& os, const LabeledDataset& ds,
                        std::optional<double> baseline = std::nullopt);
DatasetFile read_dataset_text(std::istream& is);

void write_dataset_binary(std::ostream& os, const LabeledDataset& ds,
                          std::optional<double> baseline = std::nullopt);
DatasetFile read_dataset_binary(std::istream& is);

void write_dataset(const std::filesystem::path& path, const LabeledDataset& ds,
                   std::optional<double> baseline = std::nullopt);
DatasetFile read_dataset(const std::filesystem::path& path);

// Shortest decimal text that parses back to the same double.
std::string format_double(double v);
double parse_double(std::string_view text);

}  // namespace spinread
