#pragma once

#include <functional>
#include <string>
#include <vector>

namespace acnn {

// One block of scalars to perturb: values are nudged in place while loss()
// is re-evaluated; analytic holds the gradients produced by backward.
struct GradCheckItem {
    double* values = nullptr;
    const double* analytic = nullptr;
    long long count = 0;
    std::string name;
};

// Central finite differences at the given step against the analytic
// gradients. Relative error per coordinate: |a-n| / max(|a|,|n|,1e-8).
double fd_max_rel_error(const std::function<double()>& loss,
                        const std::vector<GradCheckItem>& items, double step = 1e-5);

struct GradSuiteResult {
    std::string name;
    double max_rel_err = 0.0;
    double tolerance = 0.0;
    bool pass = false;
};

// Fixed-seed 64-bit gradient suites covering every layer kind and the full
// adaptive-convolution chain into the FMN parameters.
std::vector<GradSuiteResult> run_gradcheck_suites(const std::string& filter = "");

}  // namespace acnn
