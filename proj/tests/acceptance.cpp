// Acceptance gate: one PASS/FAIL line per criterion, exit status 1 on any failure.

#include "triaan/check.hpp"

#include <cstring>
#include <filesystem>
#include <iostream>

using namespace triaan::check;

int main(int argc, char** argv) {
  std::filesystem::path work = std::filesystem::temp_directory_path() / "triaan_acceptance";
  for (int i = 1; i + 1 < argc; ++i)
    if (std::strcmp(argv[i], "--work-dir") == 0) work = argv[i + 1];
  std::filesystem::create_directories(work);

  auto guarded = [](const char* id, const char* name, auto fn) {
    try {
      return fn();
    } catch (const std::exception& e) {
      return CheckResult{id, name, false, std::string("exception: ") + e.what(), 0.0};
    }
  };
  int failed = 0;
  auto report = [&failed](const CheckResult& r) {
    std::cout << format_line(r) << std::endl;
    failed += r.passed ? 0 : 1;
  };
  report(guarded("1", "kernel invariants", [] { return kernel_invariants(100); }));
  report(guarded("2", "gradient verification", [] { return gradient_verification(); }));
  report(guarded("3", "loss arithmetic", [] { return loss_arithmetic(); }));
  report(guarded("4", "overfit experiment", [] { return overfit(); }));
  report(guarded("5", "shape contract", [] { return shape_contract(20); }));
  report(guarded("6", "metric oracles", [] { return metric_oracles(); }));
  report(guarded("7", "reproducibility", [&] { return reproducibility(work, 100); }));
  report(guarded("8", "checkpoint round-trip", [&] { return checkpoint_roundtrip(work); }));
  std::cout << (failed ? "acceptance: FAIL (" + std::to_string(failed) + " of 8)" : std::string("acceptance: PASS (8 of 8)"))
            << std::endl;
  return failed ? 1 : 0;
}
