#include "specflow/io.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "specflow/errors.hpp"
#include "specflow/rotations.hpp"
#include "specflow/roof.hpp"

namespace specflow {

namespace {

void reject_unknown(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw ValidationError(where + ": expected an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || it.key() == a;
    if (!ok) throw ValidationError(where + ": unknown field '" + it.key() + "'");
  }
}

}  // namespace

const std::vector<std::string>& operation_names() {
  static const std::vector<std::string> names{
      "convergents", "palindromic-pair", "yoccoz",   "ergodicity", "birkhoff", "flow",
      "exp-sum",     "weak-mixing",      "level-set", "correlate", "rigidity", "distribution",
      "fayad",       "crossings",        "identity", "ratner-witness"};
  return names;
}

const std::vector<std::string>& operation_params(const std::string& operation) {
  static const std::map<std::string, std::vector<std::string>> params{
      {"convergents", {"n", "coordinate"}},
      {"palindromic-pair", {"terms"}},
      {"yoccoz", {"gamma", "levels", "a1"}},
      {"ergodicity", {"K", "pair"}},
      {"birkhoff", {"x", "y", "m"}},
      {"flow", {"x", "y", "s", "t"}},
      {"exp-sum", {"slice", "theta", "quad_points"}},
      {"weak-mixing", {"n", "s", "m_probe", "grid", "quad"}},
      {"level-set", {"y", "t", "eps", "x_grid", "m_probe", "grid"}},
      {"correlate", {"A", "B", "times", "samples", "pair", "min_excess", "within"}},
      {"rigidity", {"count", "samples", "terms", "denominators"}},
      {"distribution", {"index", "l", "bins", "samples", "terms"}},
      {"fayad", {"levels", "n", "m_samples", "cell_samples", "transverse_samples", "m_probe", "grid", "gamma"}},
      {"crossings", {"coordinate", "d", "starts", "crossings"}},
      {"identity", {"trials", "n_max", "which", "d_min", "d_max"}},
      {"ratner-witness", {"pairs", "eps", "d_min", "d_max", "N", "empirical"}}};
  auto it = params.find(operation);
  if (it == params.end()) throw ValidationError("unknown operation '" + operation + "'");
  return it->second;
}

json ExperimentConfig::to_json() const {
  json out{{"dir", output.dir}};
  if (!output.csv.empty()) out["csv"] = output.csv;
  if (!output.summary.empty()) out["summary"] = output.summary;
  json j{{"operation", operation}, {"params", params}, {"seed", seed}, {"precision_bits", precision_bits},
         {"threads", threads},     {"plot_script", plot_script},       {"output", out}};
  if (!rotation.is_null()) j["rotation"] = rotation;
  if (!roof.is_null()) j["roof"] = roof;
  return j;
}

ExperimentConfig ExperimentConfig::from_json(const json& j) {
  reject_unknown(j, {"operation", "rotation", "roof", "params", "seed", "precision_bits", "threads", "plot_script",
                     "output"},
                 "config");
  ExperimentConfig c;
  try {
    c.operation = j.at("operation").get<std::string>();
    if (j.contains("seed")) c.seed = j.at("seed").get<uint64_t>();
    if (j.contains("precision_bits")) c.precision_bits = j.at("precision_bits").get<unsigned>();
    if (j.contains("threads")) c.threads = j.at("threads").get<unsigned>();
    if (j.contains("plot_script")) c.plot_script = j.at("plot_script").get<bool>();
    if (j.contains("params")) c.params = j.at("params");
    if (j.contains("output")) {
      const json& o = j.at("output");
      reject_unknown(o, {"dir", "csv", "summary"}, "config.output");
      c.output.dir = o.value("dir", std::string("."));
      c.output.csv = o.value("csv", std::string());
      c.output.summary = o.value("summary", std::string());
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
  if (std::find(operation_names().begin(), operation_names().end(), c.operation) == operation_names().end())
    throw ValidationError("config: unknown operation '" + c.operation + "'");
  if (!c.params.is_object()) throw ValidationError("config: params must be an object");
  const auto& allowed = operation_params(c.operation);
  for (auto it = c.params.begin(); it != c.params.end(); ++it)
    if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end())
      throw ValidationError("config: " + c.operation + " has no parameter '" + it.key() + "'");
  if (c.precision_bits < 64 || c.precision_bits > 4096)
    throw ValidationError("config: precision_bits must lie in [64, 4096]");
  // descriptors are validated here so that bad fields fail before any work
  if (j.contains("rotation")) {
    c.rotation = j.at("rotation");
    RotationVector2::from_json(c.rotation, c.precision_bits);
  }
  if (j.contains("roof")) {
    c.roof = j.at("roof");
    RoofSpec::from_json(c.roof);
  }
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read config '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ValidationError("config '" + path + "' is not valid JSON: " + e.what());
  }
  return from_json(j);
}

uint64_t fnv1a64(const std::string& bytes) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string ExperimentConfig::hash() const {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(to_json().dump())));
  return buf;
}

std::string ExperimentConfig::csv_path() const {
  return (std::filesystem::path(output.dir) / (output.csv.empty() ? operation + ".csv" : output.csv)).string();
}

std::string ExperimentConfig::summary_path() const {
  return (std::filesystem::path(output.dir) / (output.summary.empty() ? operation + ".json" : output.summary))
      .string();
}

std::string fmt_num(double x) {
  char buf[32];
  for (int prec = 6; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, x);
    if (std::strtod(buf, nullptr) == x) break;
  }
  return buf;
}

CsvWriter::CsvWriter(std::vector<std::string> columns) : width_(columns.size()) {
  row(columns);
  rows_ = 0;
}

void CsvWriter::row(const std::vector<std::string>& cells) {
  if (cells.size() != width_) throw std::logic_error("csv row width mismatch");
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) body_ += ',';
    const std::string& c = cells[i];
    if (c.find_first_of(",\"\n") != std::string::npos) {
      body_ += '"';
      for (char ch : c) {
        if (ch == '"') body_ += '"';
        body_ += ch;
      }
      body_ += '"';
    } else {
      body_ += c;
    }
  }
  body_ += '\n';
  ++rows_;
}

std::string CsvWriter::str() const { return body_; }

void CsvWriter::write(const std::string& path) const { write_text(path, body_); }

void write_text(const std::string& path, const std::string& text) {
  auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write '" + path + "'");
  out << text;
}

}  // namespace specflow
