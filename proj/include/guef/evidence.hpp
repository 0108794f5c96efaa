#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace guef {

/// Non-negative per-class evidence counts e_k for a frame of T singletons.
class Evidence {
 public:
  explicit Evidence(std::vector<double> values);

  std::size_t classes() const noexcept { return values_.size(); }
  std::span<const double> values() const noexcept { return values_; }
  double operator[](std::size_t k) const { return values_[k]; }

 private:
  std::vector<double> values_;
};

/// Basic belief assignment restricted to the T singletons plus the whole frame
/// (the multiplet), whose mass is the uncertainty U.
struct BeliefMass {
  std::vector<double> singletons;
  double theta = 1.0;

  std::size_t classes() const noexcept { return singletons.size(); }
  double total() const noexcept;
  /// Throws ValidationError unless entries are finite, non-negative and sum to 1 within tol.
  void validate(double tol = 1e-9) const;
};

struct DirichletParams {
  std::vector<double> alpha;
  double strength = 0.0;

  std::vector<double> mean() const;
};

inline constexpr double kConflictEpsilon = 1e-12;

BeliefMass masses_from_evidence(const Evidence& e);
BeliefMass vacuous(std::size_t classes);

/// Sum of m1(a) * m2(c) over disjoint singleton pairs. The multiplet intersects everything.
double conflict(const BeliefMass& m1, const BeliefMass& m2);

/// Dempster's rule on the singleton-plus-multiplet frame.
BeliefMass combine(const BeliefMass& m1, const BeliefMass& m2);

/// Left fold of combine. A total-conflict failure names the failing step.
BeliefMass combine_many(std::span<const BeliefMass> masses);

DirichletParams dirichlet_from_evidence(const Evidence& e);

// Normalization audit. When enabled, every mass produced by masses_from_evidence
// and combine is checked against sum == 1 (1e-9); a violation throws.
void set_mass_audit(bool enabled) noexcept;
bool mass_audit_enabled() noexcept;
struct MassAuditStats {
  std::uint64_t checked = 0;
  double max_deviation = 0.0;
};
MassAuditStats mass_audit_stats() noexcept;
void reset_mass_audit() noexcept;

}  // namespace guef
