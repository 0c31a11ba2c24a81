#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "specflow/cfrac.hpp"

namespace specflow {

struct OutputPaths {
  std::string dir = ".";
  std::string csv;      // default <operation>.csv
  std::string summary;  // default <operation>.json

  bool operator==(const OutputPaths&) const = default;
};

// One experiment: which operation to run, on which rotation and roof.
// Parsing rejects unknown fields; to_json / from_json round-trip exactly.
struct ExperimentConfig {
  std::string operation;
  json rotation;  // rotation descriptor, null for the default
  json roof;      // roof descriptor, null for the default
  json params = json::object();
  uint64_t seed = 1;
  unsigned precision_bits = 192;
  unsigned threads = 0;  // 0: hardware concurrency
  bool plot_script = false;
  OutputPaths output;

  json to_json() const;
  static ExperimentConfig from_json(const json& j);
  static ExperimentConfig load(const std::string& path);

  // FNV-1a 64 of the canonical JSON dump, as 16 hex digits.
  std::string hash() const;
  std::string csv_path() const;
  std::string summary_path() const;

  bool operator==(const ExperimentConfig&) const = default;
};

const std::vector<std::string>& operation_names();
// Parameter names accepted by an operation (keys of ExperimentConfig::params).
const std::vector<std::string>& operation_params(const std::string& operation);

uint64_t fnv1a64(const std::string& bytes);

// Shortest round-trip decimal form of a double.
std::string fmt_num(double x);

class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> columns);
  void row(const std::vector<std::string>& cells);
  std::string str() const;
  std::size_t rows() const { return rows_; }
  void write(const std::string& path) const;

 private:
  std::size_t width_;
  std::size_t rows_ = 0;
  std::string body_;
};

void write_text(const std::string& path, const std::string& text);

// Runs the configured operation, writes CSV + JSON summary (and an optional
// gnuplot script) and returns the exit status: 0 pass, 1 an asserted
// inequality failed, 2 invalid input, 3 insufficient precision.
int run(const ExperimentConfig& config, std::ostream& log);

}  // namespace specflow
