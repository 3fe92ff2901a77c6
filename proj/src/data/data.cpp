#include "p2lhap/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

#include "p2lhap/random.hpp"

namespace p2lhap {

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split(std::string_view s, char delim) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(delim, start);
    out.push_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::string join(const std::vector<std::string>& parts, const char* sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  char* end = nullptr;
  out = std::strtod(s.c_str(), &end);
  return end == s.c_str() + s.size();
}

bool parse_bool(const std::string& s) {
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw DataError("descriptor: expected a boolean, got '" + s + "'");
}

char parse_delimiter(const std::string& s) {
  if (s == "tab" || s == "\\t") return '\t';
  if (s == "comma" || s == ",") return ',';
  if (s == "semicolon" || s == ";") return ';';
  if (s == "space" || s == " ") return ' ';
  if (s.size() == 1) return s[0];
  throw DataError("descriptor: unsupported delimiter '" + s + "'");
}

bool all_digits(const std::string& s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isdigit(c); });
}

// Majority class in labels; ties go to the class seen first.
int majority_label(std::span<const int> labels) {
  int best = labels.front();
  std::size_t best_count = 0;
  std::vector<std::pair<int, std::size_t>> counts;  // (class, count) in first-seen order
  for (int l : labels) {
    auto it = std::find_if(counts.begin(), counts.end(), [l](const auto& p) { return p.first == l; });
    if (it == counts.end()) {
      counts.emplace_back(l, 1);
    } else {
      ++it->second;
    }
  }
  for (const auto& [cls, n] : counts) {
    if (n > best_count) {
      best = cls;
      best_count = n;
    }
  }
  return best;
}

}  // namespace

void SensorSequence::validate() const {
  if (samples.rank() != 2) throw DataError("sensor samples must be an L x M matrix, got " + shape_string(samples.shape()));
  if (labels.size() != length()) {
    throw DataError("sensor sequence has " + std::to_string(length()) + " samples but " +
                    std::to_string(labels.size()) + " labels");
  }
  if (!channel_names.empty() && channel_names.size() != channels()) {
    throw DataError("sensor sequence has " + std::to_string(channels()) + " channels but " +
                    std::to_string(channel_names.size()) + " channel names");
  }
  if (!(sample_rate_hz > 0.0)) throw DataError("sample rate must be positive");
  const int classes = static_cast<int>(num_classes());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= classes) {
      throw DataError("label " + std::to_string(labels[i]) + " at sample " + std::to_string(i) + " outside [0, " +
                      std::to_string(classes) + ")");
    }
  }
}

SensorSequence SensorSequence::slice(std::size_t begin, std::size_t end) const {
  if (begin > end || end > length()) {
    throw std::out_of_range("slice [" + std::to_string(begin) + ", " + std::to_string(end) + ") of length " +
                            std::to_string(length()));
  }
  const std::size_t m = channels();
  SensorSequence out;
  out.samples = Tensor({end - begin, m},
                       std::vector<float>(samples.data().begin() + static_cast<std::ptrdiff_t>(begin * m),
                                          samples.data().begin() + static_cast<std::ptrdiff_t>(end * m)));
  out.labels.assign(labels.begin() + static_cast<std::ptrdiff_t>(begin),
                    labels.begin() + static_cast<std::ptrdiff_t>(end));
  out.sample_rate_hz = sample_rate_hz;
  out.channel_names = channel_names;
  out.class_names = class_names;
  return out;
}

FormatDescriptor FormatDescriptor::parse(std::istream& in) {
  FormatDescriptor d;
  std::string line;
  bool have_label = false, have_channels = false, have_vocab = false;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw DataError("descriptor line " + std::to_string(line_no) + ": expected key=value");
    const std::string key = trim(std::string_view(t).substr(0, eq));
    // The delimiter value is taken verbatim so that "delimiter= " can mean a space.
    const std::string raw = t.substr(eq + 1);
    const std::string value = trim(raw);
    if (key == "timestamp_col") {
      d.timestamp_col = value;
    } else if (key == "label_col") {
      d.label_col = value;
      have_label = !value.empty();
    } else if (key == "channel_cols") {
      d.channel_cols = split(value, ',');
      have_channels = !value.empty();
    } else if (key == "delimiter") {
      d.delimiter = parse_delimiter(value.empty() ? raw : value);
    } else if (key == "has_header") {
      d.has_header = parse_bool(value);
    } else if (key == "label_vocab") {
      d.label_vocab = split(value, ',');
      have_vocab = !value.empty();
    } else if (key == "sample_rate_hz") {
      if (!parse_double(value, d.sample_rate_hz) || !(d.sample_rate_hz > 0)) {
        throw DataError("descriptor: invalid sample_rate_hz '" + value + "'");
      }
    } else {
      throw DataError("descriptor line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    }
  }
  if (!have_label) throw DataError("descriptor: missing label_col");
  if (!have_channels) throw DataError("descriptor: missing channel_cols");
  if (!have_vocab) throw DataError("descriptor: missing label_vocab");
  return d;
}

FormatDescriptor FormatDescriptor::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open descriptor " + path.string());
  return parse(in);
}

std::string FormatDescriptor::serialize() const {
  std::ostringstream os;
  os << "timestamp_col=" << timestamp_col << "\n";
  os << "label_col=" << label_col << "\n";
  os << "channel_cols=" << join(channel_cols, ",") << "\n";
  os << "delimiter=" << (delimiter == '\t' ? std::string("tab") : std::string(1, delimiter)) << "\n";
  os << "has_header=" << (has_header ? "true" : "false") << "\n";
  os << "label_vocab=" << join(label_vocab, ",") << "\n";
  char rate[64];
  std::snprintf(rate, sizeof rate, "%.17g", sample_rate_hz);
  os << "sample_rate_hz=" << rate << "\n";
  return os.str();
}

SensorSequence parse_csv(std::istream& in, const FormatDescriptor& format, MissingValues missing) {
  std::vector<std::string> header;
  std::string line;
  int line_no = 0;
  bool header_pending = format.has_header;

  std::size_t label_idx = 0, ts_idx = 0;
  bool has_ts = !format.timestamp_col.empty();
  std::vector<std::size_t> channel_idx;
  auto resolve = [&](const std::string& col) -> std::size_t {
    if (all_digits(col)) return static_cast<std::size_t>(std::stoul(col));
    if (header.empty()) throw DataError("column '" + col + "' given by name but the file has no header");
    auto it = std::find(header.begin(), header.end(), col);
    if (it == header.end()) throw DataError("column '" + col + "' not found in header: " + join(header, ", "));
    return static_cast<std::size_t>(it - header.begin());
  };
  bool resolved = false;
  auto resolve_all = [&]() {
    label_idx = resolve(format.label_col);
    if (has_ts) ts_idx = resolve(format.timestamp_col);
    for (const auto& c : format.channel_cols) channel_idx.push_back(resolve(c));
    resolved = true;
  };

  std::vector<float> values;
  std::vector<int> labels;
  const std::size_t m = format.channel_cols.size();
  while (std::getline(in, line)) {
    ++line_no;
    std::string t = trim(line);
    while (!t.empty() && t.back() == ';' && format.delimiter != ';') t = trim(std::string_view(t).substr(0, t.size() - 1));
    if (t.empty()) continue;
    auto cells = split(t, format.delimiter);
    if (header_pending) {
      header = std::move(cells);
      header_pending = false;
      continue;
    }
    if (!resolved) resolve_all();
    const std::size_t needed =
        std::max({label_idx, has_ts ? ts_idx : 0, *std::max_element(channel_idx.begin(), channel_idx.end())}) + 1;
    if (cells.size() < needed) {
      throw DataError("line " + std::to_string(line_no) + ": expected at least " + std::to_string(needed) +
                      " columns, found " + std::to_string(cells.size()));
    }
    if (has_ts && !cells[ts_idx].empty()) {
      double ts;
      if (!parse_double(cells[ts_idx], ts)) {
        throw DataError("line " + std::to_string(line_no) + ": invalid timestamp '" + cells[ts_idx] + "'");
      }
    }
    for (std::size_t c = 0; c < m; ++c) {
      const std::string& cell = cells[channel_idx[c]];
      if (cell.empty()) {
        values.push_back(std::numeric_limits<float>::quiet_NaN());
        continue;
      }
      double v;
      if (!parse_double(cell, v) || !std::isfinite(v)) {
        throw DataError("line " + std::to_string(line_no) + ": invalid number '" + cell + "' in column " +
                        format.channel_cols[c]);
      }
      values.push_back(static_cast<float>(v));
    }
    const std::string& label = cells[label_idx];
    auto it = std::find(format.label_vocab.begin(), format.label_vocab.end(), label);
    if (it == format.label_vocab.end()) {
      throw DataError("line " + std::to_string(line_no) + ": unknown label '" + label +
                      "'; known labels: " + join(format.label_vocab, ", "));
    }
    labels.push_back(static_cast<int>(it - format.label_vocab.begin()));
  }

  SensorSequence seq;
  const std::size_t rows = labels.size();
  seq.samples = Tensor({rows, m}, std::move(values));
  seq.labels = std::move(labels);
  seq.sample_rate_hz = format.sample_rate_hz;
  seq.class_names = format.label_vocab;
  for (std::size_t c = 0; c < m; ++c) {
    const std::string& col = format.channel_cols[c];
    seq.channel_names.push_back(all_digits(col) && channel_idx.size() == m && channel_idx[c] < header.size()
                                    ? header[channel_idx[c]]
                                    : col);
  }
  if (missing == MissingValues::kColumnMean) fill_missing(seq, column_means(seq));
  return seq;
}

SensorSequence load_csv(const std::filesystem::path& path, const FormatDescriptor& format, MissingValues missing) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open data file " + path.string());
  return parse_csv(in, format, missing);
}

std::vector<float> column_means(const SensorSequence& seq) {
  const std::size_t l = seq.length(), m = seq.channels();
  std::vector<float> means(m, 0.f);
  for (std::size_t c = 0; c < m; ++c) {
    double total = 0.0;
    std::size_t n = 0;
    for (std::size_t r = 0; r < l; ++r) {
      const float v = seq.samples[r * m + c];
      if (std::isfinite(v)) {
        total += v;
        ++n;
      }
    }
    means[c] = n ? static_cast<float>(total / static_cast<double>(n)) : 0.f;
  }
  return means;
}

void fill_missing(SensorSequence& seq, std::span<const float> means) {
  const std::size_t l = seq.length(), m = seq.channels();
  if (means.size() != m) throw DataError("fill_missing: " + std::to_string(means.size()) + " means for " + std::to_string(m) + " channels");
  for (std::size_t r = 0; r < l; ++r)
    for (std::size_t c = 0; c < m; ++c) {
      float& v = seq.samples[r * m + c];
      if (!std::isfinite(v)) v = means[c];
    }
}

FormatDescriptor synthetic_descriptor(const SensorSequence& seq) {
  FormatDescriptor d;
  d.timestamp_col = "timestamp";
  d.label_col = "label";
  d.channel_cols = seq.channel_names;
  d.delimiter = ',';
  d.has_header = true;
  d.label_vocab = seq.class_names;
  d.sample_rate_hz = seq.sample_rate_hz;
  return d;
}

void write_csv(const SensorSequence& seq, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << "timestamp";
  for (const auto& c : seq.channel_names) out << ',' << c;
  out << ",label\n";
  const std::size_t m = seq.channels();
  char buf[64];
  for (std::size_t r = 0; r < seq.length(); ++r) {
    std::snprintf(buf, sizeof buf, "%.6f", static_cast<double>(r) / seq.sample_rate_hz);
    out << buf;
    for (std::size_t c = 0; c < m; ++c) {
      std::snprintf(buf, sizeof buf, ",%.9g", static_cast<double>(seq.samples[r * m + c]));
      out << buf;
    }
    out << ',' << seq.class_names.at(static_cast<std::size_t>(seq.labels[r])) << '\n';
  }
  if (!out) throw DataError("failed writing " + path.string());
}

Tensor normalize_channels(const Tensor& samples, NormStats& stats) {
  if (samples.rank() != 2 || samples.dim(0) == 0) {
    throw DataError("normalize_channels expects a non-empty L x M matrix, got " + shape_string(samples.shape()));
  }
  const std::size_t l = samples.dim(0), m = samples.dim(1);
  stats.mean.assign(m, 0.f);
  stats.stddev.assign(m, 0.f);
  Tensor out(samples.shape());
  for (std::size_t c = 0; c < m; ++c) {
    double total = 0.0;
    for (std::size_t r = 0; r < l; ++r) total += samples[r * m + c];
    const double mu = total / static_cast<double>(l);
    double sq = 0.0;
    for (std::size_t r = 0; r < l; ++r) {
      const double d = samples[r * m + c] - mu;
      sq += d * d;
    }
    const double sd = std::sqrt(sq / static_cast<double>(l));
    stats.mean[c] = static_cast<float>(mu);
    stats.stddev[c] = static_cast<float>(sd);
    const double denom = sd + kNormEps;
    for (std::size_t r = 0; r < l; ++r) out[r * m + c] = static_cast<float>((samples[r * m + c] - mu) / denom);
  }
  return out;
}

Tensor denormalize_channels(const Tensor& normalized, const NormStats& stats) {
  const std::size_t m = normalized.rank() == 2 ? normalized.dim(1) : 0;
  if (m == 0 || stats.mean.size() != m || stats.stddev.size() != m) {
    throw DataError("denormalize_channels: statistics for " + std::to_string(stats.mean.size()) +
                    " channels do not match " + shape_string(normalized.shape()));
  }
  Tensor out(normalized.shape());
  for (std::size_t i = 0; i < normalized.size(); ++i) {
    const std::size_t c = i % m;
    out[i] = static_cast<float>(static_cast<double>(normalized[i]) * (stats.stddev[c] + kNormEps) + stats.mean[c]);
  }
  return out;
}

std::size_t patch_count(std::size_t length, std::size_t patch_len, std::size_t stride) {
  if (patch_len == 0 || stride == 0) throw DataError("patch length and stride must be at least 1");
  if (patch_len > length) {
    throw DataError("patch length " + std::to_string(patch_len) + " exceeds sequence length " + std::to_string(length));
  }
  return (length - patch_len) / stride + 2;
}

Tensor make_patches(const Tensor& samples, std::size_t patch_len, std::size_t stride) {
  if (samples.rank() != 2) throw DataError("make_patches expects an L x M matrix, got " + shape_string(samples.shape()));
  const std::size_t l = samples.dim(0), m = samples.dim(1);
  const std::size_t n = patch_count(l, patch_len, stride);
  Tensor out({m, n, patch_len});
  for (std::size_t c = 0; c < m; ++c) {
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t k = 0; k < patch_len; ++k) {
        out[(c * n + p) * patch_len + k] = samples[(p * stride + k) * m + c];
      }
    }
    const float last = samples[(l - 1) * m + c];
    for (std::size_t k = 0; k < patch_len; ++k) out[(c * n + n - 1) * patch_len + k] = last;
  }
  return out;
}

std::vector<int> derive_patch_labels(std::span<const int> labels, std::size_t patch_len, std::size_t stride) {
  const std::size_t n = patch_count(labels.size(), patch_len, stride);
  std::vector<int> out;
  out.reserve(n - 1);
  for (std::size_t p = 0; p + 1 < n; ++p) out.push_back(majority_label(labels.subspan(p * stride, patch_len)));
  return out;
}

PatchBatch make_patches(const SensorSequence& seq, std::size_t patch_len, std::size_t stride) {
  WindowSpec spec;
  spec.window = seq.length();
  spec.step = seq.length();
  spec.patch_len = patch_len;
  spec.stride = stride;
  spec.horizon = 0;
  const std::size_t start = 0;
  return build_batch(seq, std::span<const std::size_t>(&start, 1), spec);
}

std::vector<std::size_t> window_starts(std::size_t length, const WindowSpec& spec) {
  if (spec.window == 0 || spec.step == 0) throw DataError("window length and step must be at least 1");
  std::vector<std::size_t> starts;
  const std::size_t span = spec.window + spec.horizon * spec.patch_len;
  for (std::size_t s = 0; s + span <= length; s += spec.step) starts.push_back(s);
  return starts;
}

PatchBatch build_batch(const SensorSequence& seq, std::span<const std::size_t> starts, const WindowSpec& spec) {
  const std::size_t m = seq.channels();
  const std::size_t w = spec.window, p = spec.patch_len;
  const std::size_t n = patch_count(w, p, spec.stride);
  const std::size_t b = starts.size();
  const std::size_t future = spec.horizon * p;

  PatchBatch batch;
  batch.batch = b;
  batch.channels = m;
  batch.length = w;
  batch.num_patches = n;
  batch.patch_len = p;
  batch.stride = spec.stride;
  batch.horizon = spec.horizon;
  batch.patches = Tensor({b * m, n, p});
  batch.future_signal = Tensor({b, m, future});
  batch.patch_labels.reserve(b * (n - 1));
  batch.future_labels.reserve(b * spec.horizon);

  for (std::size_t i = 0; i < b; ++i) {
    const std::size_t s = starts[i];
    if (s + w + future > seq.length()) {
      throw DataError("window at " + std::to_string(s) + " with " + std::to_string(future) +
                      " continuation samples exceeds sequence length " + std::to_string(seq.length()));
    }
    const SensorSequence win = seq.slice(s, s + w);
    NormStats stats;
    const Tensor normalized = normalize_channels(win.samples, stats);
    const Tensor patches = make_patches(normalized, p, spec.stride);
    std::copy(patches.data().begin(), patches.data().end(), batch.patches.raw() + i * m * n * p);
    auto labels = derive_patch_labels(win.labels, p, spec.stride);
    batch.patch_labels.insert(batch.patch_labels.end(), labels.begin(), labels.end());
    const std::span<const int> all_labels(seq.labels);
    for (std::size_t k = 0; k < spec.horizon; ++k) {
      batch.future_labels.push_back(majority_label(all_labels.subspan(s + w + k * p, p)));
    }
    for (std::size_t c = 0; c < m; ++c)
      for (std::size_t t = 0; t < future; ++t)
        batch.future_signal[(i * m + c) * future + t] = seq.samples[(s + w + t) * m + c];
    batch.norm_stats.push_back(std::move(stats));
  }
  return batch;
}

void SplitSpec::validate() const {
  if (!(train > 0.0) || !(val > 0.0) || !(test > 0.0)) throw std::invalid_argument("split fractions must be positive");
  if (std::abs(train + val + test - 1.0) > 1e-9) {
    throw std::invalid_argument("split fractions must sum to 1, got " + std::to_string(train + val + test));
  }
}

Splits sequential_split(const SensorSequence& seq, const SplitSpec& spec, std::size_t min_length) {
  spec.validate();
  const std::size_t l = seq.length();
  const auto train_end = static_cast<std::size_t>(std::llround(static_cast<double>(l) * spec.train));
  const auto val_end = static_cast<std::size_t>(std::llround(static_cast<double>(l) * (spec.train + spec.val)));
  Splits s;
  s.val_begin = train_end;
  s.test_begin = val_end;
  const std::size_t sizes[3] = {train_end, val_end - train_end, l - val_end};
  const char* names[3] = {"train", "val", "test"};
  for (int i = 0; i < 3; ++i) {
    if (sizes[i] < min_length || sizes[i] == 0) {
      throw DataError(std::string(names[i]) + " split has " + std::to_string(sizes[i]) +
                      " samples, fewer than the window length " + std::to_string(min_length));
    }
  }
  s.train = seq.slice(0, train_end);
  s.val = seq.slice(train_end, val_end);
  s.test = seq.slice(val_end, l);
  return s;
}

double synthetic_frequency(std::size_t c, std::size_t m, std::size_t classes) {
  const double spacing = std::min(0.035, 0.4 / static_cast<double>(std::max<std::size_t>(classes, 1)));
  return (0.02 + spacing * static_cast<double>(c)) * (1.0 + 0.15 * static_cast<double>(m));
}

double synthetic_amplitude(std::size_t c, std::size_t m, std::size_t classes) {
  return 0.6 + 0.4 * static_cast<double>((c + m) % std::max<std::size_t>(classes, 1));
}

SensorSequence generate_synthetic(const SyntheticSpec& spec) {
  if (spec.classes < 2) throw std::invalid_argument("synthetic data needs at least 2 classes");
  if (spec.channels < 1) throw std::invalid_argument("synthetic data needs at least 1 channel");
  if (spec.segment_min < 1 || spec.segment_min > spec.segment_max) {
    throw std::invalid_argument("invalid segment length range");
  }
  Rng rng(spec.seed);
  std::vector<int> classes;
  std::vector<std::size_t> lengths;
  std::size_t total = 0;
  int cls = static_cast<int>(rng.below(spec.classes));
  for (std::size_t s = 0; s < spec.segments; ++s) {
    if (s > 0) {
      if (rng.uniform() < spec.routine_probability) {
        cls = static_cast<int>((static_cast<std::size_t>(cls) + 1) % spec.classes);
      } else {
        // any class other than the current one
        const auto offset = 1 + rng.below(spec.classes - 1);
        cls = static_cast<int>((static_cast<std::size_t>(cls) + offset) % spec.classes);
      }
    }
    const std::size_t len = spec.segment_min + rng.below(spec.segment_max - spec.segment_min + 1);
    classes.push_back(cls);
    lengths.push_back(len);
    total += len;
  }

  const std::size_t m = spec.channels;
  SensorSequence seq;
  seq.samples = Tensor({total, m});
  seq.labels.reserve(total);
  seq.sample_rate_hz = spec.sample_rate_hz;
  for (std::size_t c = 0; c < m; ++c) seq.channel_names.push_back("ch" + std::to_string(c));
  for (std::size_t c = 0; c < spec.classes; ++c) seq.class_names.push_back("class_" + std::to_string(c));

  std::size_t row = 0;
  for (std::size_t s = 0; s < classes.size(); ++s) {
    const auto c = static_cast<std::size_t>(classes[s]);
    std::vector<double> phase(m);
    for (auto& ph : phase) ph = rng.uniform(0.0, 2.0 * std::numbers::pi);
    for (std::size_t t = 0; t < lengths[s]; ++t, ++row) {
      for (std::size_t ch = 0; ch < m; ++ch) {
        const double f = synthetic_frequency(c, ch, spec.classes);
        const double a = synthetic_amplitude(c, ch, spec.classes);
        const double v = a * std::sin(2.0 * std::numbers::pi * f * static_cast<double>(t) + phase[ch]) +
                         rng.normal(0.0, spec.noise_sigma);
        seq.samples[row * m + ch] = static_cast<float>(v);
      }
      seq.labels.push_back(classes[s]);
    }
  }
  return seq;
}

}  // namespace p2lhap
