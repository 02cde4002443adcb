// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Artifacts (measurement bundles) land in --out.
#include <cstdio>
#include <cstring>

#include "mops/verify.hpp"

int main(int argc, char** argv) {
    std::string out = "acceptance_out";
    for (int i = 1; i < argc - 1; ++i)
        if (std::strcmp(argv[i], "--out") == 0) out = argv[i + 1];

    std::vector<mops::CheckResult> results;
    try {
        results = mops::run_acceptance(out, /*generate=*/true);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "acceptance aborted: %s\n", e.what());
        return 2;
    }

    int failed = 0;
    for (const auto& r : results) {
        std::printf("%-5s %s  %s  [%.1fs]\n", r.id.c_str(), r.pass ? "PASS" : "FAIL",
                    r.detail.c_str(), r.seconds);
        if (!r.pass) ++failed;
    }
    std::printf("%d/%zu criteria passed\n", static_cast<int>(results.size()) - failed,
                results.size());
    return failed == 0 ? 0 : 1;
}
