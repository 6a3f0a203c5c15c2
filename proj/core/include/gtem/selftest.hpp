#pragma once

#include <string>
#include <vector>

namespace gtem {

struct SelftestOptions {
    uint64_t seed = 17;
    bool verbose = true;
    // negative control for the test fixture: corrupts the central-difference
    // kernel rewrite so the merge check must fail
    bool inject_kernel_bug = false;
};

struct SelftestCheck {
    std::string name;
    bool passed = false;
    std::string detail;
};

struct SelftestReport {
    std::vector<SelftestCheck> checks;
    double seconds = 0.0;
    bool all_passed() const {
        for (const auto& c : checks)
            if (!c.passed) return false;
        return true;
    }
};

// Runs the invariant suite: transform reversibility, scan-order oracle,
// selective-scan recurrence oracle, kernel-merge algebra, coder round trip,
// fast gradient checks, decoder sufficiency, motion-prior warp property.
SelftestReport run_selftest(const SelftestOptions& opts = {});

} // namespace gtem
