#include "guef/evidence.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <mutex>
#include <string>

#include "guef/error.hpp"

namespace guef {
namespace {

std::atomic<bool> g_audit{false};
std::mutex g_audit_mutex;
MassAuditStats g_audit_stats;

void audit(const BeliefMass& m) {
  if (!g_audit.load(std::memory_order_relaxed)) return;
  const double dev = std::abs(m.total() - 1.0);
  {
    std::lock_guard lock(g_audit_mutex);
    ++g_audit_stats.checked;
    g_audit_stats.max_deviation = std::max(g_audit_stats.max_deviation, dev);
  }
  m.validate(1e-9);
}

void require_same_frame(const BeliefMass& m1, const BeliefMass& m2) {
  if (m1.classes() != m2.classes() || m1.classes() == 0) {
    throw ValidationError("belief masses disagree on frame size: " + std::to_string(m1.classes()) + " vs " +
                          std::to_string(m2.classes()));
  }
}

}  // namespace

Evidence::Evidence(std::vector<double> values) : values_(std::move(values)) {
  if (values_.empty()) throw ValidationError("evidence must cover at least one class");
  for (std::size_t k = 0; k < values_.size(); ++k) {
    if (!std::isfinite(values_[k]) || values_[k] < 0.0) {
      throw ValidationError("evidence entry " + std::to_string(k) + " is negative or non-finite");
    }
  }
}

double BeliefMass::total() const noexcept {
  double s = theta;
  for (double v : singletons) s += v;
  return s;
}

void BeliefMass::validate(double tol) const {
  if (singletons.empty()) throw ValidationError("belief mass has an empty frame");
  if (!std::isfinite(theta) || theta < 0.0) throw ValidationError("multiplet mass is negative or non-finite");
  for (double v : singletons) {
    if (!std::isfinite(v) || v < 0.0) throw ValidationError("singleton mass is negative or non-finite");
  }
  const double t = total();
  if (std::abs(t - 1.0) > tol) throw ValidationError("belief mass sums to " + std::to_string(t) + ", expected 1");
}

std::vector<double> DirichletParams::mean() const {
  std::vector<double> out(alpha.size());
  std::transform(alpha.begin(), alpha.end(), out.begin(), [this](double a) { return a / strength; });
  return out;
}

BeliefMass masses_from_evidence(const Evidence& e) {
  const auto n = static_cast<double>(e.classes());
  double strength = n;
  for (double v : e.values()) strength += v;
  BeliefMass m;
  m.singletons.reserve(e.classes());
  for (double v : e.values()) m.singletons.push_back(v / strength);
  m.theta = n / strength;
  audit(m);
  return m;
}

BeliefMass vacuous(std::size_t classes) {
  if (classes == 0) throw ValidationError("vacuous mass needs at least one class");
  return BeliefMass{std::vector<double>(classes, 0.0), 1.0};
}

double conflict(const BeliefMass& m1, const BeliefMass& m2) {
  require_same_frame(m1, m2);
  // sum_{a != c} m1(a) m2(c) = (sum m1)(sum m2) - sum m1(k) m2(k)
  double s1 = 0.0, s2 = 0.0, agree = 0.0;
  for (std::size_t k = 0; k < m1.classes(); ++k) {
    s1 += m1.singletons[k];
    s2 += m2.singletons[k];
    agree += m1.singletons[k] * m2.singletons[k];
  }
  return std::clamp(s1 * s2 - agree, 0.0, 1.0);
}

BeliefMass combine(const BeliefMass& m1, const BeliefMass& m2) {
  const double con = conflict(m1, m2);
  if (con >= 1.0 - kConflictEpsilon) {
    throw TotalConflictError("total conflict between evidences (Con = " + std::to_string(con) + ")");
  }
  const double norm = 1.0 / (1.0 - con);
  BeliefMass out;
  out.singletons.resize(m1.classes());
  for (std::size_t k = 0; k < m1.classes(); ++k) {
    const double a = m1.singletons[k], b = m2.singletons[k];
    out.singletons[k] = (a * b + a * m2.theta + m1.theta * b) * norm;
  }
  out.theta = m1.theta * m2.theta * norm;
  audit(out);
  return out;
}

BeliefMass combine_many(std::span<const BeliefMass> masses) {
  if (masses.empty()) throw ValidationError("combine_many needs at least one mass");
  BeliefMass acc = masses.front();
  for (std::size_t i = 1; i < masses.size(); ++i) {
    try {
      acc = combine(acc, masses[i]);
    } catch (const TotalConflictError& err) {
      throw TotalConflictError("combine_many step " + std::to_string(i) + ": " + err.what());
    }
  }
  return acc;
}

DirichletParams dirichlet_from_evidence(const Evidence& e) {
  DirichletParams d;
  d.alpha.reserve(e.classes());
  for (double v : e.values()) {
    d.alpha.push_back(v + 1.0);
    d.strength += v + 1.0;
  }
  return d;
}

void set_mass_audit(bool enabled) noexcept { g_audit.store(enabled, std::memory_order_relaxed); }
bool mass_audit_enabled() noexcept { return g_audit.load(std::memory_order_relaxed); }

MassAuditStats mass_audit_stats() noexcept {
  std::lock_guard lock(g_audit_mutex);
  return g_audit_stats;
}

void reset_mass_audit() noexcept {
  std::lock_guard lock(g_audit_mutex);
  g_audit_stats = {};
}

}  // namespace guef
