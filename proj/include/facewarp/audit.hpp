#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace facewarp {

// Finite-difference audits of every analytic gradient. Each audit draws a
// random configuration per seed, compares central differences of a forward
// evaluation against the analytic gradient and reports the worst relative
// error |a - f| / max(|a|, |f|, 1e-6 * max|a| over the audited block). The
// end-to-end audit also floors the denominator at 1e-3 |L|: its loss sums
// thousands of terms, and derivatives far below |L| drown in rounding noise.

struct AuditResult {
    std::string name;
    int seeds = 0;
    std::size_t checks = 0;
    /// Perturbations that crossed a non-smooth point and were not compared.
    std::size_t skipped = 0;
    double max_rel_error = 0.0;
    double tolerance = 0.0;
    double seconds = 0.0;

    bool passed() const { return checks > 0 && max_rel_error < tolerance; }
};

inline constexpr double kAuditStep = 1e-5;
inline constexpr double kAuditTolerance = 1e-5;

AuditResult audit_projection_camera(std::uint64_t seed, int seeds);
AuditResult audit_projection_points(std::uint64_t seed, int seeds);
AuditResult audit_tps(std::uint64_t seed, int seeds);
AuditResult audit_sampler(std::uint64_t seed, int seeds);
/// Total training loss of a randomly initialised estimator on a synthetic
/// sample, against every parameter group.
AuditResult audit_e2e(std::uint64_t seed, int seeds);

/// module: all, proj, tps, sampler or e2e. Throws ArgumentError otherwise.
std::vector<AuditResult> run_audits(const std::string& module, std::uint64_t seed, int seeds);

}  // namespace facewarp
