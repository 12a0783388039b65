#pragma once

// Slow reference implementations the fast metrics are checked against.

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

namespace oracle {

// Mann-Whitney form of the AUC: the fraction of (positive, negative) pairs
// ranked correctly, ties counting half.
inline double pairwise_auc(std::span<const double> scores, std::span<const std::uint8_t> positive) {
  double wins = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!positive[i]) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (positive[j]) continue;
      pairs += 1.0;
      if (scores[i] > scores[j]) wins += 1.0;
      else if (scores[i] == scores[j]) wins += 0.5;
    }
  }
  return wins / pairs;
}

struct Wsrt {
  double w_plus = 0.0;
  double w_minus = 0.0;
  std::size_t t = 0;
  double p = 1.0;
};

// Each non-zero |d| gets 1 + (number strictly smaller) + half the number
// of others equal to it, which is the average rank of its tie group.
inline Wsrt signed_rank(std::span<const double> a1, std::span<const double> a2) {
  std::vector<double> d;
  for (std::size_t i = 0; i < a1.size(); ++i)
    if (a2[i] - a1[i] != 0.0) d.push_back(a2[i] - a1[i]);
  Wsrt r;
  r.t = d.size();
  for (std::size_t i = 0; i < d.size(); ++i) {
    double smaller = 0.0, equal = 0.0;
    for (std::size_t j = 0; j < d.size(); ++j) {
      if (j == i) continue;
      if (std::abs(d[j]) < std::abs(d[i])) smaller += 1.0;
      else if (std::abs(d[j]) == std::abs(d[i])) equal += 1.0;
    }
    const double rank = 1.0 + smaller + 0.5 * equal;
    (d[i] > 0.0 ? r.w_plus : r.w_minus) += rank;
  }
  if (r.t == 0) return r;
  const double t = static_cast<double>(r.t);
  const double mu = t * (t + 1.0) / 4.0;
  const double sd = std::sqrt(t * (t + 1.0) * (2.0 * t + 1.0) / 24.0);
  const double z = (std::min(r.w_plus, r.w_minus) - mu) / sd;
  r.p = 0.5 * std::erfc(-z / std::sqrt(2.0));
  return r;
}

}  // namespace oracle
