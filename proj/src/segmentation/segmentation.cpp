#include "p2lhap/segmentation.hpp"

#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <unordered_map>

namespace p2lhap {

std::vector<int> smooth(std::span<const int> labels, std::size_t smooth_size) {
  if (smooth_size == 0 || smooth_size % 2 == 0) {
    throw std::invalid_argument("smooth size must be a positive odd number, got " + std::to_string(smooth_size));
  }
  const std::size_t n = labels.size(), h = smooth_size / 2;
  std::vector<int> out(n);
  struct Vote {
    std::size_t count = 0;
    std::size_t nearest = SIZE_MAX;
  };
  std::unordered_map<int, Vote> votes;
  for (std::size_t i = 0; i < n; ++i) {
    votes.clear();
    const std::size_t lo = i >= h ? i - h : 0, hi = std::min(n, i + h + 1);
    for (std::size_t j = lo; j < hi; ++j) {
      Vote& v = votes[labels[j]];
      ++v.count;
      v.nearest = std::min(v.nearest, j > i ? j - i : i - j);
    }
    int best = labels[i];
    Vote best_vote = votes[best];
    for (const auto& [cls, v] : votes) {
      const bool better = v.count > best_vote.count ||
                          (v.count == best_vote.count &&
                           (v.nearest < best_vote.nearest || (v.nearest == best_vote.nearest && cls < best)));
      if (better) {
        best = cls;
        best_vote = v;
      }
    }
    out[i] = best;
  }
  return out;
}

std::vector<Segment> extract_segments(std::span<const int> labels) {
  if (labels.empty()) throw std::invalid_argument("cannot extract segments from an empty label sequence");
  std::vector<Segment> out;
  std::size_t start = 0;
  for (std::size_t i = 1; i <= labels.size(); ++i) {
    if (i == labels.size() || labels[i] != labels[start]) {
      out.push_back({start, i - 1, labels[start]});
      start = i;
    }
  }
  return out;
}

std::vector<int> expand_segments(std::span<const Segment> segments) {
  std::vector<int> out;
  for (const auto& s : segments) out.insert(out.end(), s.end - s.start + 1, s.class_id);
  return out;
}

void write_segments_csv(const std::filesystem::path& path, std::span<const Segment> segments,
                        const SegmentTiming& timing, std::span<const std::string> class_names) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "start_patch,end_patch,start_time_s,end_time_s,class_id,class_name\n";
  char buf[64];
  for (const auto& s : segments) {
    const double t0 = static_cast<double>(s.start * timing.stride) / timing.sample_rate_hz;
    const double t1 = static_cast<double>(s.end * timing.stride + timing.patch_len) / timing.sample_rate_hz;
    out << s.start << ',' << s.end << ',';
    std::snprintf(buf, sizeof buf, "%.3f,%.3f", t0, t1);
    out << buf << ',' << s.class_id << ',';
    const auto id = static_cast<std::size_t>(s.class_id);
    out << (id < class_names.size() ? class_names[id] : "class_" + std::to_string(s.class_id)) << '\n';
  }
}

}  // namespace p2lhap
