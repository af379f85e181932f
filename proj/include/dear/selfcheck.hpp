#ifndef DEAR_SELFCHECK_HPP
#define DEAR_SELFCHECK_HPP

#include <string>
#include <vector>

namespace dear {

struct CheckResult {
    std::string name;
    bool pass = false;
    std::string detail;
};

// Fast invariant suite: filter-field sums, ensemble weights, gradient
// micro-checks, metric anchors, coordinate and I/O round trips.
std::vector<CheckResult> run_selfchecks();

}  // namespace dear

#endif  // DEAR_SELFCHECK_HPP
