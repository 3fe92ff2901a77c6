#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace p2lhap {

/// Maximal run of one class over patch indices [start, end] (inclusive).
struct Segment {
  std::size_t start = 0;
  std::size_t end = 0;
  int class_id = 0;
  friend bool operator==(const Segment&, const Segment&) = default;
};

inline constexpr std::size_t kDefaultSmoothSize = 9;

/// Modal class over a centered window of the original labels. Ties go to the
/// class occurring nearest to the center, then to the lower id.
/// Throws std::invalid_argument for an even or zero window.
std::vector<int> smooth(std::span<const int> labels, std::size_t smooth_size);

/// Run-length encoding; throws std::invalid_argument on empty input.
std::vector<Segment> extract_segments(std::span<const int> labels);
std::vector<int> expand_segments(std::span<const Segment> segments);

/// Segment times in seconds assuming patch i starts at sample i * stride.
struct SegmentTiming {
  std::size_t patch_len = 10;
  std::size_t stride = 10;
  double sample_rate_hz = 20.0;
};

/// CSV columns: start_patch,end_patch,start_time_s,end_time_s,class_id,class_name
void write_segments_csv(const std::filesystem::path& path, std::span<const Segment> segments,
                        const SegmentTiming& timing, std::span<const std::string> class_names);

}  // namespace p2lhap
