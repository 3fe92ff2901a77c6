#pragma once

// Straightforward reference implementations used to cross-check the library.

#include <algorithm>
#include <cstdint>
#include <set>
#include <span>
#include <tuple>
#include <vector>

namespace p2lhap::oracle {

inline std::vector<int> smooth(std::span<const int> y, std::size_t size, int classes) {
  const long h = static_cast<long>(size / 2), n = static_cast<long>(y.size());
  std::vector<int> out;
  for (long i = 0; i < n; ++i) {
    std::vector<long> count(static_cast<std::size_t>(classes), 0), dist(static_cast<std::size_t>(classes), 1L << 40);
    for (long j = std::max(0L, i - h); j <= std::min(n - 1, i + h); ++j) {
      const auto c = static_cast<std::size_t>(y[static_cast<std::size_t>(j)]);
      count[c] += 1;
      dist[c] = std::min(dist[c], j > i ? j - i : i - j);
    }
    int best = -1;
    for (int c = 0; c < classes; ++c) {
      const auto k = static_cast<std::size_t>(c);
      if (count[k] == 0) continue;
      if (best < 0) {
        best = c;
        continue;
      }
      const auto b = static_cast<std::size_t>(best);
      if (std::tie(count[k], dist[b]) > std::tie(count[b], dist[k])) best = c;
    }
    out.push_back(best);
  }
  return out;
}

struct Run {
  std::size_t start, end;
  int cls;
};

inline std::vector<Run> runs(std::span<const int> y) {
  std::vector<std::size_t> cuts{0};
  for (std::size_t i = 1; i < y.size(); ++i)
    if (y[i] != y[i - 1]) cuts.push_back(i);
  cuts.push_back(y.size());
  std::vector<Run> out;
  for (std::size_t k = 0; k + 1 < cuts.size(); ++k) out.push_back({cuts[k], cuts[k + 1] - 1, y[cuts[k]]});
  return out;
}

inline std::vector<int> patch_labels(std::span<const int> y, std::size_t p, std::size_t s, int classes) {
  std::vector<int> out;
  for (std::size_t start = 0; start + p <= y.size(); start += s) {
    int best = -1;
    std::size_t best_count = 0, best_first = 0;
    for (int c = 0; c < classes; ++c) {
      std::size_t count = 0, first = p;
      for (std::size_t k = 0; k < p; ++k)
        if (y[start + k] == c) {
          ++count;
          first = std::min(first, k);
        }
      if (count == 0) continue;
      if (best < 0 || count > best_count || (count == best_count && first < best_first)) {
        best = c;
        best_count = count;
        best_first = first;
      }
    }
    out.push_back(best);
  }
  return out;
}

struct Counts {
  std::uint64_t tp = 0, tn = 0, fp = 0, fn = 0;
};

inline Counts one_vs_rest(std::span<const int> pred, std::span<const int> truth, int c) {
  Counts k;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool p = pred[i] == c, t = truth[i] == c;
    if (p && t) ++k.tp;
    else if (!p && !t) ++k.tn;
    else if (p) ++k.fp;
    else ++k.fn;
  }
  return k;
}

inline double accuracy_plain(std::span<const int> pred, std::span<const int> truth) {
  std::size_t hit = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hit += pred[i] == truth[i];
  return static_cast<double>(hit) / static_cast<double>(pred.size());
}

inline double accuracy_ovr(std::span<const int> pred, std::span<const int> truth, int classes) {
  double num = 0, den = 0;
  for (int c = 0; c < classes; ++c) {
    const Counts k = one_vs_rest(pred, truth, c);
    num += static_cast<double>(k.tp + k.tn);
    den += static_cast<double>(k.tp + k.tn + k.fp + k.fn);
  }
  return num / den;
}

inline double weighted_f1(std::span<const int> pred, std::span<const int> truth, int classes) {
  double total = 0;
  for (int c = 0; c < classes; ++c) {
    const Counts k = one_vs_rest(pred, truth, c);
    const double precision = k.tp + k.fp ? static_cast<double>(k.tp) / static_cast<double>(k.tp + k.fp) : 0.0;
    const double recall = k.tp + k.fn ? static_cast<double>(k.tp) / static_cast<double>(k.tp + k.fn) : 0.0;
    const double f1 = precision + recall > 0 ? 2 * precision * recall / (precision + recall) : 0.0;
    total += static_cast<double>(k.tp + k.fn) / static_cast<double>(pred.size()) * f1;
  }
  return total;
}

inline double jaccard(std::span<const int> pred, std::span<const int> truth, int classes) {
  double total = 0;
  int present = 0;
  for (int c = 0; c < classes; ++c) {
    std::set<std::size_t> a, b, inter, uni;
    for (std::size_t i = 0; i < pred.size(); ++i) {
      if (pred[i] == c) a.insert(i);
      if (truth[i] == c) b.insert(i);
    }
    std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::inserter(inter, inter.end()));
    std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::inserter(uni, uni.end()));
    if (uni.empty()) continue;
    total += static_cast<double>(inter.size()) / static_cast<double>(uni.size());
    ++present;
  }
  return present ? total / present : 0.0;
}

}  // namespace p2lhap::oracle
