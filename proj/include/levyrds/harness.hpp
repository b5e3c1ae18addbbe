#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "levyrds/acceptance.hpp"
#include "levyrds/config.hpp"

namespace levyrds {

struct CheckResult {
  std::string name;
  bool passed = false;
  double margin = 0.0;
  std::string detail;
};

struct RunManifest {
  std::string kind;
  std::uint64_t seed = 0;
  std::string code_version;
  double wall_time_s = 0.0;
  std::vector<CheckResult> checks;
  std::vector<std::pair<std::string, std::uint64_t>> outputs;  // file, fnv64
  std::string config_echo;

  bool all_passed() const;
};

std::uint64_t file_checksum(const std::string& path);

// Executes the selected experiment, writes CSVs, plot scripts and the
// manifest into config.out_dir; exit-status policy is all_passed().
RunManifest run(const ExperimentConfig& config);

void write_manifest(const std::string& file, const RunManifest& manifest);
// Re-hashes every declared output; false on any mismatch or missing file.
bool validate_manifest(const std::string& file);

// Gnuplot-dialect companion script for a CSV.
void write_plot_script(const std::string& gp_file, const std::string& csv_file,
                       const std::string& title, int x_col, int y_col,
                       bool logscale_y = false);

void ensure_directory(const std::string& path);

}  // namespace levyrds
