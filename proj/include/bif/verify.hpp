#pragma once

#include <functional>
#include <string>
#include <vector>

#include "bif/common.hpp"

namespace bif {

/// Monte Carlo oracle-agreement properties: every closed-form propagation
/// is checked against realization sampling that never touches the
/// closed-form path it validates.

struct PropertyResult {
    std::string name;
    bool passed = false;
    double measured = 0.0;  // worst relative gap (or equivalent) observed
    double bound = 0.0;
    std::string detail;
};

struct VerifyProperty {
    std::string name;
    std::function<PropertyResult()> run;
};

/// The full suite with fixed seeds; `filter` keeps properties whose name
/// contains the substring.
std::vector<VerifyProperty> verify_suite(const std::string& filter = "");

/// Runs (optionally in parallel) and prints one line per property.
int run_verify(const std::string& filter, int jobs, bool quiet = false,
               std::vector<PropertyResult>* results = nullptr);

}  // namespace bif
