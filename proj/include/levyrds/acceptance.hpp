#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace levyrds {

struct CriterionResult {
  int id = 0;
  std::string name;
  bool passed = false;
  double measured = 0.0;
  double threshold = 0.0;
  std::string detail;
  double seconds = 0.0;
};

// Runs the full verification suite, writing CSV outputs (and a second run
// for the determinism criterion) under out_dir.
std::vector<CriterionResult> run_acceptance(std::uint64_t seed,
                                            const std::string& out_dir);

void print_criteria(const std::vector<CriterionResult>& results, std::ostream& os);
bool all_criteria_passed(const std::vector<CriterionResult>& results);

}  // namespace levyrds
