#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "p2lhap/tensor.hpp"

namespace p2lhap {

/// Malformed or inconsistent input data (CLI exit code 2).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// L x M multichannel stream with one activity label per sample.
struct SensorSequence {
  Tensor samples;  ///< [L, M], row = timestamp, column = channel
  std::vector<int> labels;
  double sample_rate_hz = 20.0;
  std::vector<std::string> channel_names;
  std::vector<std::string> class_names;  ///< index = class id

  std::size_t length() const { return samples.rank() == 2 ? samples.dim(0) : 0; }
  std::size_t channels() const { return samples.rank() == 2 ? samples.dim(1) : 0; }
  std::size_t num_classes() const { return class_names.size(); }

  /// Throws DataError when labels/shape/vocabulary disagree.
  void validate() const;
  /// Samples [begin, end).
  SensorSequence slice(std::size_t begin, std::size_t end) const;
};

/// key=value description of a delimited sensor file.
struct FormatDescriptor {
  std::string timestamp_col;  ///< may be empty: no timestamp column
  std::string label_col;
  std::vector<std::string> channel_cols;
  char delimiter = ',';
  bool has_header = true;
  std::vector<std::string> label_vocab;
  double sample_rate_hz = 20.0;

  static FormatDescriptor parse(std::istream& in);
  static FormatDescriptor load(const std::filesystem::path& path);
  std::string serialize() const;
};

enum class MissingValues {
  kColumnMean,  ///< blank cells take the mean of their column in this file
  kKeep,        ///< blank cells stay NaN; fill later with fill_missing
};

SensorSequence load_csv(const std::filesystem::path& path, const FormatDescriptor& format,
                        MissingValues missing = MissingValues::kColumnMean);
SensorSequence parse_csv(std::istream& in, const FormatDescriptor& format,
                         MissingValues missing = MissingValues::kColumnMean);

/// Per-channel mean over finite entries (0 for an all-missing channel).
std::vector<float> column_means(const SensorSequence& seq);
/// Replaces NaN entries of channel m by means[m].
void fill_missing(SensorSequence& seq, std::span<const float> means);

/// Writes the header-ful CSV grammar read back by synthetic_descriptor().
void write_csv(const SensorSequence& seq, const std::filesystem::path& path);
FormatDescriptor synthetic_descriptor(const SensorSequence& seq);

inline constexpr float kNormEps = 1e-5f;

struct NormStats {
  std::vector<float> mean;
  std::vector<float> stddev;  ///< population standard deviation
};

/// z-scores each column of samples[L, M]: (x - mean) / (std + 1e-5).
Tensor normalize_channels(const Tensor& samples, NormStats& stats);
Tensor denormalize_channels(const Tensor& normalized, const NormStats& stats);

/// N = floor((L - P) / S) + 2: N - 1 real patches plus the replication-fill patch.
std::size_t patch_count(std::size_t length, std::size_t patch_len, std::size_t stride);

/// Patches of one sequence, [M, N, P]. Real patch n starts at sample n * S;
/// patch N - 1 repeats each channel's final sample P times.
Tensor make_patches(const Tensor& samples, std::size_t patch_len, std::size_t stride);

/// Majority label of each real patch; ties resolve to the class that
/// appears earliest inside the patch.
std::vector<int> derive_patch_labels(std::span<const int> labels, std::size_t patch_len, std::size_t stride);

/// Channel-independent batch: row b * M + m holds channel m of batch item b.
struct PatchBatch {
  Tensor patches;                        ///< [B*M, N, P], normalized
  std::vector<int> patch_labels;         ///< [B, N-1]
  std::vector<int> future_labels;        ///< [B, T_p]; empty when T_p = 0
  Tensor future_signal;                  ///< [B, M, T_p*P] in recorded units
  std::vector<NormStats> norm_stats;     ///< one per batch item
  std::size_t batch = 0, channels = 0, length = 0, num_patches = 0, patch_len = 0, stride = 0, horizon = 0;

  std::size_t real_patches() const { return num_patches - 1; }
};

/// Single-sequence PatchBatch (B = 1) over the whole of `seq`.
PatchBatch make_patches(const SensorSequence& seq, std::size_t patch_len, std::size_t stride);

struct WindowSpec {
  std::size_t window = 200;     ///< samples per window (L)
  std::size_t step = 200;       ///< offset between window starts
  std::size_t patch_len = 10;   ///< P
  std::size_t stride = 10;      ///< S
  std::size_t horizon = 0;      ///< T_p future patches that must exist after the window

  std::size_t num_patches() const { return patch_count(window, patch_len, stride); }
};

/// Window starts inside [0, L) such that window plus horizon*P continuation fit.
std::vector<std::size_t> window_starts(std::size_t length, const WindowSpec& spec);

/// Builds a batch from windows of `seq`; each window is normalized per channel.
PatchBatch build_batch(const SensorSequence& seq, std::span<const std::size_t> starts, const WindowSpec& spec);

struct SplitSpec {
  double train = 0.7;
  double val = 0.1;
  double test = 0.2;
  void validate() const;
};

struct Splits {
  SensorSequence train, val, test;
  std::size_t val_begin = 0, test_begin = 0;
};

/// Contiguous time-ordered partition, half-open at the boundaries.
/// Throws DataError if any part is shorter than `min_length`.
Splits sequential_split(const SensorSequence& seq, const SplitSpec& spec, std::size_t min_length);

struct SyntheticSpec {
  std::size_t classes = 4;
  std::size_t channels = 3;
  std::size_t segment_min = 100;
  std::size_t segment_max = 300;
  std::size_t segments = 60;
  std::uint64_t seed = 7;
  double sample_rate_hz = 20.0;
  double noise_sigma = 0.1;
  /// Probability that the next segment follows the routine order c -> c + 1.
  double routine_probability = 0.8;
};

/// Base frequency (cycles per sample) of class c on channel m.
double synthetic_frequency(std::size_t c, std::size_t m, std::size_t classes);
double synthetic_amplitude(std::size_t c, std::size_t m, std::size_t classes);

/// Piecewise-stationary stream of class-specific sinusoids plus gaussian noise.
SensorSequence generate_synthetic(const SyntheticSpec& spec);

}  // namespace p2lhap
