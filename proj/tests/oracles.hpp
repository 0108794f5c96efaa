#pragma once

// Independent reference implementations used only by tests.

#include <algorithm>
#include <cstdint>
#include <map>
#include <random>
#include <vector>

#include "guef/error.hpp"
#include "guef/evidence.hpp"
#include "guef/localization.hpp"

namespace guef::oracle {

/// Classic Dempster's rule enumerated over every pair of focal sets, with focal sets as
/// bitmasks over the frame (singleton k = bit k, multiplet = all bits).
inline BeliefMass dempster_combine(const BeliefMass& m1, const BeliefMass& m2) {
  const std::size_t t = m1.classes();
  if (t != m2.classes() || t == 0 || t > 60) throw ValidationError("oracle: frame mismatch");
  const std::uint64_t full = (t == 64) ? ~0ULL : ((1ULL << t) - 1);
  auto focal = [&](const BeliefMass& m) {
    std::vector<std::pair<std::uint64_t, double>> f;
    for (std::size_t k = 0; k < t; ++k) f.emplace_back(1ULL << k, m.singletons[k]);
    f.emplace_back(full, m.theta);
    return f;
  };
  std::map<std::uint64_t, double> joint;
  double empty = 0.0;
  for (const auto& [a, x] : focal(m1))
    for (const auto& [b, y] : focal(m2)) {
      const std::uint64_t inter = a & b;
      if (inter == 0) empty += x * y;
      else joint[inter] += x * y;
    }
  if (empty >= 1.0 - kConflictEpsilon) throw TotalConflictError("oracle: total conflict");
  BeliefMass out{std::vector<double>(t, 0.0), 0.0};
  for (const auto& [set, v] : joint) {
    if (set == full) out.theta = v / (1.0 - empty);
    else out.singletons[static_cast<std::size_t>(__builtin_ctzll(set))] = v / (1.0 - empty);
  }
  return out;
}

inline double dempster_conflict(const BeliefMass& m1, const BeliefMass& m2) {
  double c = 0.0;
  for (std::size_t a = 0; a < m1.classes(); ++a)
    for (std::size_t b = 0; b < m2.classes(); ++b)
      if (a != b) c += m1.singletons[a] * m2.singletons[b];
  return c;
}

/// Random normalized mass on T singletons plus multiplet, theta kept away from zero.
inline BeliefMass random_mass(std::mt19937_64& rng, std::size_t t) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> raw(t + 1);
  for (double& v : raw) v = u(rng);
  raw[t] += 0.05;
  double s = 0.0;
  for (double v : raw) s += v;
  BeliefMass m;
  for (std::size_t k = 0; k < t; ++k) m.singletons.push_back(raw[k] / s);
  m.theta = raw[t] / s;
  return m;
}

/// Brute-force AP: O(n^2) interpolation, precision at each TP taken as the max over all
/// later-or-equal ranks.
inline double average_precision(const std::vector<Proposal>& proposals, const std::vector<GroundTruth>& gts,
                                std::size_t label, double thr) {
  std::vector<GroundTruth> g;
  for (const auto& x : gts)
    if (x.label == label) g.push_back(x);
  if (g.empty()) return -1.0;
  std::vector<Proposal> p;
  for (const auto& x : proposals)
    if (x.label == label) p.push_back(x);
  // Insertion sort by score descending keeps equal scores in input order.
  for (std::size_t i = 1; i < p.size(); ++i)
    for (std::size_t j = i; j > 0 && p[j].score > p[j - 1].score; --j) std::swap(p[j], p[j - 1]);
  std::vector<bool> used(g.size(), false), tp(p.size(), false);
  for (std::size_t i = 0; i < p.size(); ++i) {
    long best = -1;
    double best_iou = -1.0;
    for (std::size_t k = 0; k < g.size(); ++k) {
      if (used[k] || g[k].video != p[i].video) continue;
      const double inter = std::max(0.0, static_cast<double>(std::min(p[i].segment.end, g[k].segment.end)) -
                                             static_cast<double>(std::max(p[i].segment.start, g[k].segment.start)));
      const double uni = static_cast<double>(p[i].segment.length() + g[k].segment.length()) - inter;
      const double o = inter / uni;
      if (o >= thr && o > best_iou) {
        best_iou = o;
        best = static_cast<long>(k);
      }
    }
    if (best >= 0) {
      used[static_cast<std::size_t>(best)] = true;
      tp[i] = true;
    }
  }
  double ap = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!tp[i]) continue;
    double best_prec = 0.0;
    for (std::size_t j = i; j < p.size(); ++j) {
      std::size_t hits = 0;
      for (std::size_t q = 0; q <= j; ++q) hits += tp[q] ? 1 : 0;
      best_prec = std::max(best_prec, static_cast<double>(hits) / static_cast<double>(j + 1));
    }
    ap += best_prec / static_cast<double>(g.size());
  }
  return ap;
}

inline double mean_average_precision(const std::vector<Proposal>& proposals, const std::vector<GroundTruth>& gts,
                                     double thr) {
  std::vector<std::size_t> labels;
  for (const auto& g : gts)
    if (std::find(labels.begin(), labels.end(), g.label) == labels.end()) labels.push_back(g.label);
  if (labels.empty()) return 0.0;
  double s = 0.0;
  for (std::size_t c : labels) s += average_precision(proposals, gts, c, thr);
  return s / static_cast<double>(labels.size());
}

/// Random small evaluation instance.
struct MetricInstance {
  std::vector<Proposal> proposals;
  std::vector<GroundTruth> ground_truth;
};

inline MetricInstance random_instance(std::mt19937_64& rng, std::size_t videos = 5, std::size_t classes = 4) {
  MetricInstance inst;
  std::uniform_int_distribution<std::size_t> nv(1, videos), nc(0, classes - 1), start(0, 40), len(1, 12),
      count(0, 4);
  std::uniform_real_distribution<double> score(0.0, 1.0);
  const std::size_t v = nv(rng);
  for (std::size_t i = 0; i < v; ++i) {
    const std::string id = "v" + std::to_string(i);
    for (std::size_t k = count(rng) + 1; k-- > 0;) {
      const std::size_t s = start(rng);
      inst.ground_truth.push_back({id, {s, s + len(rng)}, nc(rng)});
    }
    for (std::size_t k = 2 * count(rng) + 1; k-- > 0;) {
      const std::size_t s = start(rng);
      // Coarse scores make ties likely.
      inst.proposals.push_back({id, {s, s + len(rng)}, nc(rng), std::round(score(rng) * 10.0) / 10.0});
    }
  }
  return inst;
}

}  // namespace guef::oracle
