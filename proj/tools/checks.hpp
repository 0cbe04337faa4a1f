#pragma once

// Oracle and property checks shared by `eelab verify` and the acceptance
// runner. Each check is self-contained and returns a one-line outcome.

#include <functional>
#include <string>
#include <vector>

namespace eelab::checks {

struct Outcome {
  int id = 0;
  std::string name;
  bool pass = false;
  std::string detail;
};

Outcome energy_balance();        // 1
Outcome laminar_oracle();        // 2
Outcome lti_ftle();              // 3
Outcome oracle_equivalence();    // 4
Outcome otd_properties();        // 6
Outcome gradient_check();        // 9
Outcome loss_properties();       // 10
Outcome metric_suite();          // 11

struct Check {
  int id;
  std::string name;
  std::function<Outcome()> run;
};

/// Testbed oracles and property checks, about half a minute on one core.
const std::vector<Check>& quick_suite();

/// "[PASS] 3 lti-ftle: detail" style line.
std::string format(const Outcome& o);

/// Runs `run`, turning an escaped library error into a failed outcome.
Outcome guarded(int id, const std::string& name, const std::function<Outcome()>& run);

}  // namespace eelab::checks
