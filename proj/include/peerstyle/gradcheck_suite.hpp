#pragma once

// Finite-difference suites over the ops, the networks and the losses, shared
// by the command line and the acceptance run.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "peerstyle/gradcheck.hpp"

namespace peerstyle {

enum class GradScope { op, network, loss };
/// Throws std::invalid_argument for anything but op, network or loss.
GradScope parse_scope(const std::string& name);
const char* scope_name(GradScope scope);

struct GradCheckItem {
  std::string name;
  std::function<GradCheckResult(const GradCheckOptions&)> run;
};

/// Items for one scope; shapes and values are drawn from `seed`.
std::vector<GradCheckItem> gradcheck_items(GradScope scope, std::uint64_t seed);

struct SuiteReport {
  std::vector<GradCheckResult> results;
  bool passed() const;
  double worst() const;
};

/// Runs every item and prints one line per item to `log`.
SuiteReport run_gradcheck_suite(const std::vector<GradCheckItem>& items, std::ostream& log,
                                const GradCheckOptions& options = {});

}  // namespace peerstyle
