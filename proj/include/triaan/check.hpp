#pragma once

// Property, gradient and oracle suite. Each acceptance criterion is one
// function returning a CheckResult; `run_checks` adds the per-module checks
// and backs the `check` command.

#include "triaan/common.hpp"

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace triaan::check {

// Pinned tolerances and budgets.
inline constexpr double kNormStatTol = 1e-3;
inline constexpr double kOracleTol = 1e-6;
inline constexpr double kSimplexTol = 1e-12;
inline constexpr double kGradRelTol = 1e-3;
inline constexpr double kLossTol = 1e-9;
inline constexpr double kKernelBudgetSeconds = 60.0;
inline constexpr double kGradBudgetSeconds = 300.0;
inline constexpr double kOverfitBudgetSeconds = 1800.0;

struct CheckResult {
  std::string id;  // "1" .. "8" for acceptance criteria, module name otherwise
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

CheckResult kernel_invariants(int seeds = 100);
CheckResult gradient_verification(std::ostream* log = nullptr);
CheckResult loss_arithmetic();

struct OverfitOptions {
  int speakers = 2;
  int utterances = 5;
  int batch_size = 4;
  int crop_frames = 128;
  int max_steps = 2000;
  double learning_rate = 1e-3;
  std::uint64_t seed = 1;
};
CheckResult overfit(const OverfitOptions& options = {}, std::ostream* log = nullptr);

CheckResult shape_contract(int combinations = 20, std::uint64_t seed = 5);
CheckResult metric_oracles();
/// Needs a scratch directory; both runs write below it.
CheckResult reproducibility(const std::filesystem::path& work_dir, int steps = 100);
CheckResult checkpoint_roundtrip(const std::filesystem::path& work_dir);

// Module checks outside the numbered criteria.
CheckResult feature_invariants();
CheckResult masking_invariants();
CheckResult split_invariants();

struct SuiteOptions {
  bool full = false;  // include the overfit and end-to-end criteria
  std::filesystem::path work_dir;
  std::ostream* log = nullptr;
};

std::vector<CheckResult> run_checks(const SuiteOptions& options);
std::string format_table(const std::vector<CheckResult>& results);
/// "PASS <id> <name> (<seconds>s): <detail>".
std::string format_line(const CheckResult& r);

}  // namespace triaan::check
