#pragma once

// Run configuration: flat `key = value` files with `#` comments. Every key has
// a default; unknown keys and out-of-range values are rejected.

#include <json.hpp>

#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

#include "ci_select/analysis.hpp"
#include "ci_select/corpus.hpp"
#include "ci_select/dsp.hpp"
#include "ci_select/embed.hpp"
#include "ci_select/error.hpp"
#include "ci_select/hsic.hpp"
#include "ci_select/pseudolabels.hpp"

namespace ci_select {

struct CorpusConfig {
  int sample_rate = 16000;     // expected rate; other rates pass through with a warning
  double max_duration_s = 0.0;  // 0: no filter
};

struct SynthConfig {
  int classes = 5;
  int per_class = 40;
  std::uint64_t seed = 1;
  SynthOptions options;
};

struct RunConfig {
  CorpusConfig corpus;
  FrontEndConfig front_end;
  PseudoLabelConfig labels;
  EmbedConfig embed;
  HsicConfig hsic;
  SynthConfig synth;
};

namespace detail {

struct Param {
  std::string key;
  std::function<void(RunConfig&, std::string_view)> set;
  std::function<nlohmann::json(const RunConfig&)> get;
};

[[noreturn]] inline void bad_value(std::string_view key, std::string_view value, std::string_view why) {
  throw UsageError("config key '" + std::string(key) + "': invalid value '" + std::string(value) + "' (" +
                   std::string(why) + ")");
}

template <typename Field>
Param real_param(std::string key, Field field, double lo, double hi) {
  return Param{
      key,
      [=](RunConfig& c, std::string_view v) {
        const auto parsed = parse_double(v);
        if (!parsed) bad_value(key, v, "expected a number");
        if (*parsed < lo || *parsed > hi) {
          bad_value(key, v, "must be in [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
        }
        field(c) = *parsed;
      },
      [=](const RunConfig& c) { return nlohmann::json(field(const_cast<RunConfig&>(c))); },
  };
}

template <typename Int, typename Field>
Param int_param(std::string key, Field field, long long lo, long long hi) {
  return Param{
      key,
      [=](RunConfig& c, std::string_view v) {
        v = trim(v);
        unsigned long long raw = 0;
        const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), raw);
        if (ec != std::errc{} || ptr != v.data() + v.size()) bad_value(key, v, "expected a non-negative integer");
        if (raw < static_cast<unsigned long long>(lo) || (hi >= 0 && raw > static_cast<unsigned long long>(hi))) {
          bad_value(key, v, "must be in [" + std::to_string(lo) + ", " + (hi >= 0 ? std::to_string(hi) : "max") + "]");
        }
        field(c) = static_cast<Int>(raw);
      },
      [=](const RunConfig& c) { return nlohmann::json(field(const_cast<RunConfig&>(c))); },
  };
}

template <typename Field>
Param bool_param(std::string key, Field field) {
  return Param{
      key,
      [=](RunConfig& c, std::string_view v) {
        v = trim(v);
        if (v == "true" || v == "1") {
          field(c) = true;
        } else if (v == "false" || v == "0") {
          field(c) = false;
        } else {
          bad_value(key, v, "expected true or false");
        }
      },
      [=](const RunConfig& c) { return nlohmann::json(field(const_cast<RunConfig&>(c))); },
  };
}

inline const std::vector<Param>& params() {
  constexpr double kInf = std::numeric_limits<double>::infinity();
  static const std::vector<Param> table = [&] {
    std::vector<Param> p;
    // corpus
    p.push_back(int_param<int>("sample_rate", [](RunConfig& c) -> int& { return c.corpus.sample_rate; }, 1, 1'000'000));
    p.push_back(real_param("max_duration_s", [](RunConfig& c) -> double& { return c.corpus.max_duration_s; }, 0.0, kInf));
    // front end
    p.push_back(real_param("frame_ms", [](RunConfig& c) -> double& { return c.front_end.frame_ms; }, 1.0, 1000.0));
    p.push_back(real_param("hop_ms", [](RunConfig& c) -> double& { return c.front_end.hop_ms; }, 0.1, 1000.0));
    p.push_back(int_param<int>("n_mels", [](RunConfig& c) -> int& { return c.front_end.n_mels; }, 1, 1024));
    p.push_back(int_param<int>("fft_size", [](RunConfig& c) -> int& { return c.front_end.fft_size; }, 0, 1 << 20));
    p.push_back(real_param("fmin", [](RunConfig& c) -> double& { return c.front_end.fmin; }, 0.0, kInf));
    p.push_back(real_param("fmax", [](RunConfig& c) -> double& { return c.front_end.fmax; }, 0.0, kInf));
    p.push_back(bool_param("preemphasis", [](RunConfig& c) -> bool& { return c.front_end.preemphasis; }));
    p.push_back(real_param("preemphasis_coef", [](RunConfig& c) -> double& { return c.front_end.preemphasis_coef; }, 0.0, 1.0));
    // pseudo-labels
    p.push_back(real_param("f0_min", [](RunConfig& c) -> double& { return c.labels.f0_min; }, 1.0, kInf));
    p.push_back(real_param("f0_max", [](RunConfig& c) -> double& { return c.labels.f0_max; }, 1.0, kInf));
    p.push_back(real_param("voicing_threshold", [](RunConfig& c) -> double& { return c.labels.voicing_threshold; }, 0.0, 1.0));
    p.push_back(real_param("alpha_low_hz", [](RunConfig& c) -> double& { return c.labels.alpha_low_hz; }, 0.0, kInf));
    p.push_back(real_param("alpha_split_hz", [](RunConfig& c) -> double& { return c.labels.alpha_split_hz; }, 0.0, kInf));
    p.push_back(real_param("alpha_clamp_db", [](RunConfig& c) -> double& { return c.labels.alpha_clamp_db; }, 0.0, 1000.0));
    p.push_back(real_param("hnr_min_db", [](RunConfig& c) -> double& { return c.labels.hnr_min_db; }, -1000.0, 1000.0));
    p.push_back(real_param("hnr_max_db", [](RunConfig& c) -> double& { return c.labels.hnr_max_db; }, -1000.0, 1000.0));
    // embedding
    p.push_back(int_param<int>("n_parts", [](RunConfig& c) -> int& { return c.embed.n_parts; }, 1, 100000));
    p.push_back(real_param("sigma_gd", [](RunConfig& c) -> double& { return c.embed.sigma_gd; }, 1e-9, kInf));
    // estimator
    p.push_back(real_param("rbf_sigma", [](RunConfig& c) -> double& { return c.hsic.rbf_sigma; }, 1e-12, kInf));
    p.push_back(bool_param("standardize", [](RunConfig& c) -> bool& { return c.hsic.standardize; }));
    p.push_back(int_param<std::size_t>("max_per_class", [](RunConfig& c) -> std::size_t& { return c.hsic.grouping.max_per_class; }, 0, -1));
    p.push_back(int_param<std::size_t>("max_classes", [](RunConfig& c) -> std::size_t& { return c.hsic.grouping.max_classes; }, 0, -1));
    p.push_back(int_param<std::uint64_t>("shuffle_seed", [](RunConfig& c) -> std::uint64_t& { return c.hsic.grouping.shuffle_seed; }, 0, -1));
    // synthetic benchmark
    p.push_back(int_param<int>("synth_classes", [](RunConfig& c) -> int& { return c.synth.classes; }, 2, 100000));
    p.push_back(int_param<int>("synth_per_class", [](RunConfig& c) -> int& { return c.synth.per_class; }, 5, 100000));
    p.push_back(int_param<std::uint64_t>("synth_seed", [](RunConfig& c) -> std::uint64_t& { return c.synth.seed; }, 0, -1));
    p.push_back(int_param<int>("synth_parts", [](RunConfig& c) -> int& { return c.synth.options.n_parts; }, 1, 100000));
    p.push_back(int_param<int>("synth_dim", [](RunConfig& c) -> int& { return c.synth.options.dim; }, 1, 100000));
    p.push_back(real_param("synth_centroid_scale", [](RunConfig& c) -> double& { return c.synth.options.centroid_scale; }, 1e-12, kInf));
    p.push_back(real_param("synth_feature_noise", [](RunConfig& c) -> double& { return c.synth.options.feature_noise; }, 0.0, kInf));
    p.push_back(real_param("synth_label_noise", [](RunConfig& c) -> double& { return c.synth.options.label_noise; }, 0.0, kInf));
    return p;
  }();
  return table;
}

inline const Param* find_param(std::string_view key) {
  for (const auto& p : params()) {
    if (p.key == key) return &p;
  }
  return nullptr;
}

}  // namespace detail

inline std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& p : detail::params()) keys.push_back(p.key);
  return keys;
}

// Cross-field checks that single-key bounds cannot express.
inline void validate(const RunConfig& c) {
  if (!(c.labels.f0_min < c.labels.f0_max)) throw UsageError("config: f0_min must be < f0_max");
  if (!(c.labels.alpha_low_hz < c.labels.alpha_split_hz)) throw UsageError("config: alpha_low_hz must be < alpha_split_hz");
  if (!(c.labels.hnr_min_db < c.labels.hnr_max_db)) throw UsageError("config: hnr_min_db must be < hnr_max_db");
  if (c.front_end.fmax > 0.0 && !(c.front_end.fmin < c.front_end.fmax)) throw UsageError("config: fmin must be < fmax");
}

inline void set_config_value(RunConfig& cfg, std::string_view key, std::string_view value) {
  const auto* p = detail::find_param(detail::trim(key));
  if (!p) throw UsageError("unknown config key '" + std::string(detail::trim(key)) + "'");
  p->set(cfg, detail::trim(value));
}

// Applies one `key=value` override (as given on the command line).
inline void apply_override(RunConfig& cfg, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos) throw UsageError("expected key=value, got '" + std::string(assignment) + "'");
  set_config_value(cfg, assignment.substr(0, eq), assignment.substr(eq + 1));
}

inline RunConfig parse_config(std::string_view text, std::string_view origin = "<config>") {
  RunConfig cfg;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t end = std::min(text.find('\n', start), text.size());
    std::string_view line = text.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw UsageError(std::string(origin) + ":" + std::to_string(line_no) + ": expected 'key = value'");
    }
    try {
      set_config_value(cfg, line.substr(0, eq), line.substr(eq + 1));
    } catch (const UsageError& e) {
      throw UsageError(std::string(origin) + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  validate(cfg);
  return cfg;
}

inline RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot open config file: " + path.string());
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_config(text, path.string());
}

// Every key with its effective value.
inline nlohmann::json config_echo(const RunConfig& cfg) {
  nlohmann::json out = nlohmann::json::object();
  for (const auto& p : detail::params()) out[p.key] = p.get(cfg);
  return out;
}

}  // namespace ci_select
