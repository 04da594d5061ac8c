#pragma once

// Corpus ingestion: CSV manifests, RIFF/WAVE audio, segment slicing and the
// binary feature cache.

#include <Eigen/Dense>

#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <thread>
#include <vector>

#include "ci_select/error.hpp"

namespace ci_select {

namespace fs = std::filesystem;

struct UtteranceRecord {
  std::string utterance_id;
  std::string audio_path;
  std::string class_label;
  std::optional<double> start_s;
  std::optional<double> end_s;

  bool has_bounds() const { return start_s.has_value(); }
};

struct AudioBuffer {
  std::vector<double> samples;
  int sample_rate = 0;

  double duration_s() const {
    return static_cast<double>(samples.size()) / static_cast<double>(sample_rate);
  }
};

// L x D framewise features with frame timing.
struct FeatureSequence {
  Eigen::MatrixXd frames;
  double frame_hop_s = 0.0;
  double frame_len_s = 0.0;
  std::string source_id;

  Eigen::Index length() const { return frames.rows(); }
  Eigen::Index dim() const { return frames.cols(); }
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

// Splits one CSV line. Double-quoted fields may contain commas and "" escapes.
inline std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(ch);
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      fields.push_back(std::string(trim(cur)));
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  if (quoted) throw DataError("unterminated quoted field");
  fields.push_back(std::string(trim(cur)));
  return fields;
}

inline std::optional<double> parse_double(std::string_view s) {
  s = trim(s);
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

inline std::vector<std::string> read_lines(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open file: " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  // Strip a UTF-8 byte-order mark.
  if (!lines.empty() && lines.front().starts_with("\xEF\xBB\xBF")) lines.front().erase(0, 3);
  return lines;
}

}  // namespace detail

inline constexpr std::string_view kManifestHeader =
    "utterance_id,audio_path,class_label,start_s,end_s";

// Parses a manifest. Relative audio paths are resolved against the manifest's
// directory. Blank lines are ignored.
inline std::vector<UtteranceRecord> load_manifest(const fs::path& path) {
  if (!fs::exists(path)) throw DataError("manifest not found: " + path.string());
  const auto lines = detail::read_lines(path);
  if (lines.empty() || detail::trim(lines.front()) != kManifestHeader) {
    throw DataError(path.string() + ": header must be '" + std::string(kManifestHeader) + "'");
  }

  const fs::path base = path.parent_path();
  std::vector<UtteranceRecord> records;
  std::set<std::string> seen;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (detail::trim(lines[i]).empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(i + 1) + ": ";
    std::vector<std::string> f;
    try {
      f = detail::split_csv_line(lines[i]);
    } catch (const DataError& e) {
      throw DataError(where + e.what());
    }
    if (f.size() != 5) {
      throw DataError(where + "expected 5 fields, got " + std::to_string(f.size()));
    }

    UtteranceRecord rec;
    rec.utterance_id = f[0];
    rec.class_label = f[2];
    if (rec.utterance_id.empty()) throw DataError(where + "empty utterance_id");
    if (f[1].empty()) throw DataError(where + "empty audio_path");
    if (rec.class_label.empty()) throw DataError(where + "empty class_label");

    fs::path audio(f[1]);
    if (audio.is_relative() && !base.empty()) audio = base / audio;
    rec.audio_path = audio.lexically_normal().string();

    const bool has_start = !f[3].empty();
    const bool has_end = !f[4].empty();
    if (has_start != has_end) throw DataError(where + "start_s and end_s must both be set or both empty");
    if (has_start) {
      rec.start_s = detail::parse_double(f[3]);
      rec.end_s = detail::parse_double(f[4]);
      if (!rec.start_s) throw DataError(where + "invalid start_s '" + f[3] + "'");
      if (!rec.end_s) throw DataError(where + "invalid end_s '" + f[4] + "'");
      if (*rec.start_s < 0.0) throw DataError(where + "start_s must be >= 0");
      if (*rec.end_s <= *rec.start_s) {
        throw DataError(where + "end_s (" + f[4] + ") must be greater than start_s (" + f[3] + ")");
      }
    }
    if (!seen.insert(rec.utterance_id).second) {
      throw DataError(where + "duplicate utterance_id '" + rec.utterance_id + "'");
    }
    records.push_back(std::move(rec));
  }
  return records;
}

// ---------------------------------------------------------------------------
// WAV

enum class WavEncoding { kPcm16, kFloat32 };

namespace detail {

inline std::uint16_t le16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

inline std::uint32_t le32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline void put16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>(v >> 8));
}

inline void put32(std::string& out, std::uint32_t v) {
  for (int s = 0; s < 32; s += 8) out.push_back(static_cast<char>((v >> s) & 0xff));
}

inline std::vector<unsigned char> read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open file: " + path.string());
  return std::vector<unsigned char>(std::istreambuf_iterator<char>(in), {});
}

}  // namespace detail

inline AudioBuffer read_wav(const fs::path& path) {
  const auto bytes = detail::read_bytes(path);
  const std::string name = path.string();
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw DataError(name + ": not a RIFF/WAVE file");
  }

  std::optional<std::uint16_t> format, channels, bits;
  std::uint32_t rate = 0;
  const unsigned char* data = nullptr;
  std::size_t data_size = 0;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* hdr = bytes.data() + pos;
    const std::uint32_t size = detail::le32(hdr + 4);
    const std::size_t body = pos + 8;
    const bool is_data = std::memcmp(hdr, "data", 4) == 0;
    if (body + size > bytes.size() && !is_data) throw DataError(name + ": truncated chunk");

    if (std::memcmp(hdr, "fmt ", 4) == 0) {
      if (size < 16) throw DataError(name + ": fmt chunk too short");
      const unsigned char* f = bytes.data() + body;
      format = detail::le16(f);
      channels = detail::le16(f + 2);
      rate = detail::le32(f + 4);
      bits = detail::le16(f + 14);
      // WAVE_FORMAT_EXTENSIBLE: the real format tag leads the subformat GUID.
      if (*format == 0xFFFE && size >= 26) format = detail::le16(f + 24);
    } else if (is_data) {
      if (body + size > bytes.size()) throw DataError(name + ": truncated data chunk");
      data = bytes.data() + body;
      data_size = size;
      break;
    }
    pos = body + size + (size & 1u);
  }

  if (!format) throw DataError(name + ": missing fmt chunk");
  if (!data) throw DataError(name + ": missing data chunk");
  if (*channels != 1) {
    throw DataError(name + ": mono required (channels=" + std::to_string(*channels) + ")");
  }
  if (rate == 0) throw DataError(name + ": sample_rate must be positive");

  AudioBuffer buf;
  buf.sample_rate = static_cast<int>(rate);
  if (*format == 1 && *bits == 16) {
    if (data_size % 2 != 0) throw DataError(name + ": truncated data chunk");
    buf.samples.resize(data_size / 2);
    for (std::size_t i = 0; i < buf.samples.size(); ++i) {
      const auto raw = static_cast<std::int16_t>(detail::le16(data + 2 * i));
      buf.samples[i] = static_cast<double>(raw) / 32768.0;
    }
  } else if (*format == 3 && *bits == 32) {
    if (data_size % 4 != 0) throw DataError(name + ": truncated data chunk");
    buf.samples.resize(data_size / 4);
    for (std::size_t i = 0; i < buf.samples.size(); ++i) {
      const float v = std::bit_cast<float>(detail::le32(data + 4 * i));
      if (!std::isfinite(v)) throw DataError(name + ": non-finite sample at index " + std::to_string(i));
      buf.samples[i] = v;
    }
  } else {
    throw DataError(name + ": unsupported encoding (format=" + std::to_string(*format) +
                    ", bits_per_sample=" + std::to_string(*bits) +
                    "); PCM int16 or float32 required");
  }
  if (buf.samples.empty()) throw DataError(name + ": no samples");
  return buf;
}

// Writes a mono RIFF/WAVE file. int16 samples are round(x * 32768) clipped to
// the int16 range.
inline void write_wav(const fs::path& path, const AudioBuffer& buf,
                      WavEncoding enc = WavEncoding::kPcm16) {
  const std::uint16_t bits = enc == WavEncoding::kPcm16 ? 16 : 32;
  const std::uint16_t tag = enc == WavEncoding::kPcm16 ? 1 : 3;
  const std::uint32_t block = bits / 8;
  const auto data_size = static_cast<std::uint32_t>(buf.samples.size() * block);

  std::string out;
  out.reserve(44 + data_size);
  out += "RIFF";
  detail::put32(out, 36 + data_size);
  out += "WAVEfmt ";
  detail::put32(out, 16);
  detail::put16(out, tag);
  detail::put16(out, 1);
  detail::put32(out, static_cast<std::uint32_t>(buf.sample_rate));
  detail::put32(out, static_cast<std::uint32_t>(buf.sample_rate) * block);
  detail::put16(out, static_cast<std::uint16_t>(block));
  detail::put16(out, bits);
  out += "data";
  detail::put32(out, data_size);
  for (double x : buf.samples) {
    if (enc == WavEncoding::kPcm16) {
      const double q = std::clamp(std::round(x * 32768.0), -32768.0, 32767.0);
      detail::put16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(q)));
    } else {
      detail::put32(out, std::bit_cast<std::uint32_t>(static_cast<float>(x)));
    }
  }

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot write file: " + path.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw DataError("write failed: " + path.string());
}

// Cuts the half-open sample range [round(start_s*sr), round(end_s*sr)).
// Rounding is half away from zero. Segments shorter than `min_len_s` (one
// analysis frame) are rejected.
inline AudioBuffer slice_segment(const AudioBuffer& buf, double start_s, double end_s,
                                 double min_len_s = 0.025) {
  if (!(start_s >= 0.0) || !(end_s > start_s)) {
    throw DataError("invalid segment bounds [" + std::to_string(start_s) + ", " +
                    std::to_string(end_s) + ")");
  }
  const double sr = buf.sample_rate;
  const long first = std::lround(start_s * sr);
  const long last = std::lround(end_s * sr);
  const auto total = static_cast<long>(buf.samples.size());
  if (last > total) {
    throw DataError("segment end " + std::to_string(end_s) + " s exceeds buffer duration " +
                    std::to_string(buf.duration_s()) + " s");
  }
  const long min_len = std::lround(min_len_s * sr);
  if (last - first < std::max(1L, min_len)) {
    throw DataError("segment of " + std::to_string(last - first) +
                    " samples is shorter than one analysis frame (" + std::to_string(min_len) +
                    " samples)");
  }
  AudioBuffer out;
  out.sample_rate = buf.sample_rate;
  out.samples.assign(buf.samples.begin() + first, buf.samples.begin() + last);
  return out;
}

// ---------------------------------------------------------------------------
// Feature cache
//
// Layout (little-endian): "CIFE", u32 version, u32 L, u32 D, f64 frame_hop_s,
// f64 frame_len_s, then L*D f32 values row-major. Values are narrowed to f32,
// so the round trip is exact for matrices whose entries are f32-representable.

inline constexpr std::array<char, 4> kCacheMagic = {'C', 'I', 'F', 'E'};
inline constexpr std::uint32_t kCacheVersion = 1;
inline constexpr std::size_t kCacheHeaderBytes = 4 + 4 + 4 + 4 + 8 + 8;

// Maps an utterance id to a filesystem-safe cache file name. Characters outside
// [A-Za-z0-9._-] are escaped as %XX.
inline std::string cache_file_name(std::string_view utterance_id) {
  static constexpr char kHex[] = "0123456789ABCDEF";
  std::string out;
  for (unsigned char ch : utterance_id) {
    if (std::isalnum(ch) || ch == '.' || ch == '_' || ch == '-') {
      out.push_back(static_cast<char>(ch));
    } else {
      out.push_back('%');
      out.push_back(kHex[ch >> 4]);
      out.push_back(kHex[ch & 0xf]);
    }
  }
  if (out == "." || out == "..") out = "%2E" + out.substr(1);
  return out + ".cife";
}

inline void cache_write(const FeatureSequence& seq, const fs::path& path) {
  const auto rows = static_cast<std::uint32_t>(seq.frames.rows());
  const auto cols = static_cast<std::uint32_t>(seq.frames.cols());
  if (rows == 0 || cols == 0) throw DataError("refusing to cache an empty feature matrix");
  if (!path.parent_path().empty() && !fs::is_directory(path.parent_path())) {
    throw DataError("cache directory does not exist: " + path.parent_path().string());
  }

  std::string out;
  out.reserve(kCacheHeaderBytes + std::size_t{rows} * cols * 4);
  out.append(kCacheMagic.data(), kCacheMagic.size());
  detail::put32(out, kCacheVersion);
  detail::put32(out, rows);
  detail::put32(out, cols);
  for (double v : {seq.frame_hop_s, seq.frame_len_s}) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    detail::put32(out, static_cast<std::uint32_t>(bits));
    detail::put32(out, static_cast<std::uint32_t>(bits >> 32));
  }
  for (std::uint32_t r = 0; r < rows; ++r) {
    for (std::uint32_t c = 0; c < cols; ++c) {
      detail::put32(out, std::bit_cast<std::uint32_t>(static_cast<float>(seq.frames(r, c))));
    }
  }

  // Unique temp name per writer, then rename over the destination.
  std::ostringstream tmp_name;
  tmp_name << path.filename().string() << ".tmp." << std::hash<std::thread::id>{}(std::this_thread::get_id())
           << '.' << std::random_device{}();
  const fs::path tmp = path.parent_path() / tmp_name.str();
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("cannot write file: " + tmp.string());
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw DataError("write failed: " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp);
    throw DataError("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
  }
}

inline FeatureSequence cache_read(const fs::path& path) {
  const auto bytes = detail::read_bytes(path);
  const std::string name = path.string();
  if (bytes.size() < kCacheHeaderBytes) throw DataError(name + ": truncated header");
  if (std::memcmp(bytes.data(), kCacheMagic.data(), 4) != 0) throw DataError(name + ": bad magic");
  const std::uint32_t version = detail::le32(bytes.data() + 4);
  if (version != kCacheVersion) {
    throw DataError(name + ": version mismatch (file " + std::to_string(version) + ", expected " +
                    std::to_string(kCacheVersion) + ")");
  }
  const std::uint32_t rows = detail::le32(bytes.data() + 8);
  const std::uint32_t cols = detail::le32(bytes.data() + 12);
  if (rows == 0 || cols == 0) throw DataError(name + ": empty feature matrix");
  const std::uint64_t expected = kCacheHeaderBytes + std::uint64_t{rows} * cols * 4;
  if (bytes.size() != expected) {
    throw DataError(name + ": payload is " + std::to_string(bytes.size()) + " bytes, header implies " +
                    std::to_string(expected) + " (" + std::to_string(rows) + "x" +
                    std::to_string(cols) + ")");
  }

  auto f64 = [&](std::size_t off) {
    const std::uint64_t lo = detail::le32(bytes.data() + off);
    const std::uint64_t hi = detail::le32(bytes.data() + off + 4);
    return std::bit_cast<double>(lo | (hi << 32));
  };

  FeatureSequence seq;
  seq.frame_hop_s = f64(16);
  seq.frame_len_s = f64(24);
  seq.source_id = path.stem().string();
  seq.frames.resize(rows, cols);
  const unsigned char* p = bytes.data() + kCacheHeaderBytes;
  for (std::uint32_t r = 0; r < rows; ++r) {
    for (std::uint32_t c = 0; c < cols; ++c, p += 4) {
      const float v = std::bit_cast<float>(detail::le32(p));
      if (!std::isfinite(v)) throw DataError(name + ": non-finite value at (" + std::to_string(r) + "," + std::to_string(c) + ")");
      seq.frames(r, c) = v;
    }
  }
  return seq;
}

}  // namespace ci_select
