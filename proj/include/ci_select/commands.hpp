#pragma once

// Pipeline commands behind the `ci-select` executable. Each returns a process
// exit code and writes human-readable progress to `out` and diagnostics to
// `err`; library errors are mapped to their exit codes here.

#include <algorithm>
#include <array>
#include <chrono>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "ci_select/analysis.hpp"
#include "ci_select/config.hpp"
#include "ci_select/corpus.hpp"
#include "ci_select/dsp.hpp"
#include "ci_select/embed.hpp"
#include "ci_select/error.hpp"
#include "ci_select/hsic.hpp"
#include "ci_select/parallel.hpp"
#include "ci_select/pseudolabels.hpp"
#include "ci_select/report.hpp"

namespace ci_select {

inline constexpr std::string_view kPseudoLabelCsv = "pseudo_labels.csv";
inline constexpr std::string_view kExcludedCsv = "excluded.csv";

// ---------------------------------------------------------------------------
// Pseudo-label table: `utterance_id,class_label,<one column per pseudo-label>`

struct PseudoLabelRow {
  std::string utterance_id;
  std::string class_label;
  std::array<std::string, kAllPseudoLabels.size()> raw;  // values as written

  double value(PseudoLabel p) const {
    const auto& s = raw[static_cast<std::size_t>(p)];
    const auto v = detail::parse_double(s);
    if (!v) throw DataError("utterance '" + utterance_id + "': invalid " + std::string(to_string(p)) + " value '" + s + "'");
    return *v;
  }
};

inline std::string pseudo_label_header() {
  std::string h = "utterance_id,class_label";
  for (PseudoLabel p : kAllPseudoLabels) h += "," + std::string(to_string(p));
  return h;
}

inline std::vector<PseudoLabelRow> read_pseudo_label_csv(const fs::path& path) {
  const auto lines = detail::read_lines(path);
  if (lines.empty() || detail::trim(lines.front()) != pseudo_label_header()) {
    throw DataError(path.string() + ": header must be '" + pseudo_label_header() + "'");
  }
  std::vector<PseudoLabelRow> rows;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (detail::trim(lines[i]).empty()) continue;
    const auto f = detail::split_csv_line(lines[i]);
    if (f.size() != 2 + kAllPseudoLabels.size()) {
      throw DataError(path.string() + ":" + std::to_string(i + 1) + ": expected " +
                      std::to_string(2 + kAllPseudoLabels.size()) + " fields");
    }
    PseudoLabelRow row{f[0], f[1], {}};
    for (std::size_t k = 0; k < kAllPseudoLabels.size(); ++k) row.raw[k] = f[2 + k];
    rows.push_back(std::move(row));
  }
  return rows;
}

inline std::string pseudo_label_csv(const std::vector<PseudoLabelRow>& rows) {
  std::string out = pseudo_label_header() + "\n";
  for (const auto& r : rows) {
    out += detail::csv_field(r.utterance_id) + "," + detail::csv_field(r.class_label);
    for (const auto& v : r.raw) out += "," + v;
    out += "\n";
  }
  return out;
}

namespace detail {

// Rethrows the active ci_select error with `context` prefixed, keeping its category.
[[noreturn]] inline void rethrow_with_context(const std::string& context) {
  try {
    throw;
  } catch (const UsageError& e) {
    throw UsageError(context + ": " + e.what());
  } catch (const InvariantError& e) {
    throw InvariantError(context + ": " + e.what());
  } catch (const DataError& e) {
    throw DataError(context + ": " + e.what());
  } catch (const std::exception& e) {
    throw DataError(context + ": " + e.what());
  }
}

template <typename Fn>
int run_guarded(std::ostream& err, Fn&& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return static_cast<int>(e.exit_code());
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return static_cast<int>(ExitCode::kInvariant);
  }
}

inline double record_duration(const UtteranceRecord& r, const AudioBuffer& buf) {
  return r.has_bounds() ? *r.end_s - *r.start_s : buf.duration_s();
}

inline std::set<std::string> read_excluded(const fs::path& features_dir) {
  std::set<std::string> ids;
  const auto path = features_dir / kExcludedCsv;
  if (!fs::exists(path)) return ids;
  const auto lines = read_lines(path);
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (trim(lines[i]).empty()) continue;
    ids.insert(split_csv_line(lines[i]).front());
  }
  return ids;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// extract

struct ExtractOptions {
  fs::path manifest;
  fs::path out_dir;
  RunConfig config;
  bool force = false;
};

struct ExtractSummary {
  std::size_t extracted = 0;
  std::size_t skipped = 0;
  std::size_t excluded = 0;
};

// Computes log-mel caches and the pseudo-label table for every manifest row.
// A row is reused when its cache is at least as new as its audio and the
// existing table already holds its values, unless `force` is set.
inline ExtractSummary run_extract(const ExtractOptions& opt, std::ostream& err) {
  const auto records = load_manifest(opt.manifest);
  fs::create_directories(opt.out_dir);
  const auto& cfg = opt.config;

  std::unordered_map<std::string, PseudoLabelRow> previous;
  const auto table_path = opt.out_dir / kPseudoLabelCsv;
  if (!opt.force && fs::exists(table_path)) {
    try {
      for (auto& row : read_pseudo_label_csv(table_path)) previous.emplace(row.utterance_id, std::move(row));
    } catch (const DataError&) {
      previous.clear();  // unreadable table: recompute everything
    }
  }

  struct Outcome {
    std::optional<PseudoLabelRow> row;
    bool skipped = false;
    std::string excluded_reason;
    std::string warning;
  };
  std::vector<Outcome> outcomes(records.size());

  parallel_for(records.size(), [&](std::size_t i) {
    const auto& rec = records[i];
    auto& result = outcomes[i];
    try {
      const auto cache = opt.out_dir / cache_file_name(rec.utterance_id);
      if (!opt.force && fs::exists(cache) && previous.contains(rec.utterance_id)) {
        const auto& prev = previous.at(rec.utterance_id);
        std::error_code ec;
        const auto audio_time = fs::last_write_time(rec.audio_path, ec);
        if (!ec && fs::last_write_time(cache) >= audio_time && prev.class_label == rec.class_label) {
          result.row = prev;
          result.skipped = true;
          return;
        }
      }

      AudioBuffer audio = read_wav(rec.audio_path);
      if (audio.sample_rate != cfg.corpus.sample_rate) {
        result.warning = "warning: " + rec.utterance_id + ": sample rate " + std::to_string(audio.sample_rate) +
                         " Hz differs from the expected " + std::to_string(cfg.corpus.sample_rate) + " Hz";
      }
      if (cfg.corpus.max_duration_s > 0.0 && detail::record_duration(rec, audio) > cfg.corpus.max_duration_s) {
        result.excluded_reason = "longer than max_duration_s";
        return;
      }
      if (rec.has_bounds()) audio = slice_segment(audio, *rec.start_s, *rec.end_s, cfg.front_end.frame_ms / 1000.0);

      auto analysis = analyze_utterance(audio, cfg.front_end, cfg.labels);
      analysis.mel.source_id = rec.utterance_id;
      cache_write(analysis.mel, cache);

      PseudoLabelRow row{rec.utterance_id, rec.class_label, {}};
      for (std::size_t k = 0; k < kAllPseudoLabels.size(); ++k) {
        row.raw[k] = format_roundtrip(analysis.labels[k].utterance_value);
      }
      result.row = std::move(row);
    } catch (...) {
      detail::rethrow_with_context("utterance '" + rec.utterance_id + "'");
    }
  });

  ExtractSummary summary;
  std::vector<PseudoLabelRow> rows;
  std::string excluded = "utterance_id,reason\n";
  for (std::size_t i = 0; i < records.size(); ++i) {
    auto& o = outcomes[i];
    if (!o.warning.empty()) err << o.warning << "\n";
    if (!o.excluded_reason.empty()) {
      ++summary.excluded;
      excluded += detail::csv_field(records[i].utterance_id) + "," + o.excluded_reason + "\n";
      continue;
    }
    (o.skipped ? summary.skipped : summary.extracted)++;
    rows.push_back(std::move(*o.row));
  }
  detail::write_text_atomic(table_path, pseudo_label_csv(rows));
  const auto excluded_path = opt.out_dir / kExcludedCsv;
  if (summary.excluded > 0) {
    detail::write_text_atomic(excluded_path, excluded);
  } else if (fs::exists(excluded_path)) {
    fs::remove(excluded_path);
  }
  return summary;
}

inline int cmd_extract(const ExtractOptions& opt, std::ostream& out, std::ostream& err) {
  return detail::run_guarded(err, [&] {
    const auto s = run_extract(opt, err);
    out << "extracted: " << s.extracted << ", skipped: " << s.skipped;
    if (s.excluded > 0) out << ", excluded: " << s.excluded;
    out << "\n";
    return 0;
  });
}

// ---------------------------------------------------------------------------
// ci

struct CiOptions {
  fs::path manifest;
  fs::path features_dir;
  std::vector<std::string> labels = {"all"};
  fs::path out;
  std::string task_name;  // empty: manifest file stem
  RunConfig config;
};

// Parses "all" or a list of pseudo-label names.
inline std::vector<PseudoLabel> resolve_labels(const std::vector<std::string>& names) {
  if (names.empty()) throw UsageError("no pseudo-labels requested; valid names: all, " + pseudo_label_names());
  std::vector<PseudoLabel> out;
  for (const auto& n : names) {
    if (n == "all") {
      for (PseudoLabel p : kAllPseudoLabels) {
        if (std::find(out.begin(), out.end(), p) == out.end()) out.push_back(p);
      }
      continue;
    }
    const auto p = parse_pseudo_label(n);
    if (!p) throw UsageError("unknown pseudo-label '" + n + "'; valid names: all, " + pseudo_label_names());
    if (std::find(out.begin(), out.end(), *p) == out.end()) out.push_back(*p);
  }
  return out;
}

inline CIReport run_ci(const CiOptions& opt) {
  const auto wanted = resolve_labels(opt.labels);
  const auto& cfg = opt.config;
  auto records = load_manifest(opt.manifest);
  const auto excluded = detail::read_excluded(opt.features_dir);
  std::erase_if(records, [&](const UtteranceRecord& r) { return excluded.contains(r.utterance_id); });
  if (records.empty()) throw DataError("no utterances to evaluate");

  std::unordered_map<std::string, PseudoLabelRow> table;
  for (auto& row : read_pseudo_label_csv(opt.features_dir / kPseudoLabelCsv)) {
    table.emplace(row.utterance_id, std::move(row));
  }

  std::vector<FixedEmbedding> embeddings(records.size());
  parallel_for(records.size(), [&](std::size_t i) {
    const auto& rec = records[i];
    const auto path = opt.features_dir / cache_file_name(rec.utterance_id);
    try {
      if (!fs::exists(path)) throw DataError("missing feature cache " + path.string());
      auto seq = cache_read(path);
      seq.source_id = rec.utterance_id;
      embeddings[i] = gaussian_downsample(seq, cfg.embed);
    } catch (...) {
      detail::rethrow_with_context("utterance '" + rec.utterance_id + "'");
    }
  });

  std::vector<std::string> ids, labels;
  for (const auto& r : records) {
    if (!table.contains(r.utterance_id)) {
      throw DataError("utterance '" + r.utterance_id + "': no row in " + (opt.features_dir / kPseudoLabelCsv).string());
    }
    ids.push_back(r.utterance_id);
    labels.push_back(r.class_label);
  }

  std::vector<RankedEntry> entries;
  for (PseudoLabel p : wanted) {
    std::vector<double> values;
    values.reserve(records.size());
    for (const auto& r : records) values.push_back(table.at(r.utterance_id).value(p));
    const auto score = estimate_ci(embeddings, values, labels, ids, cfg.hsic);
    entries.push_back({std::string(to_string(p)), score.aggregate, 0.0, score.per_class});
  }

  CIReport report;
  report.task_name = opt.task_name.empty() ? opt.manifest.stem().string() : opt.task_name;
  report.entries = rank_entries(std::move(entries));
  report.config_echo = config_echo(cfg);
  return report;
}

inline fs::path sibling_csv(const fs::path& json_path) {
  auto p = json_path;
  p.replace_extension(".csv");
  return p;
}

inline int cmd_ci(const CiOptions& opt, std::ostream& out, std::ostream& err) {
  return detail::run_guarded(err, [&] {
    const auto report = run_ci(opt);
    write_report(report, opt.out);
    detail::write_text_atomic(sibling_csv(opt.out), report_csv(report));
    for (const auto& e : report.entries) {
      out << format_fixed6(e.rank) << "  " << e.name << "  " << format_fixed6(e.ci) << "\n";
    }
    return 0;
  });
}

// ---------------------------------------------------------------------------
// correlate

struct CorrelateOptions {
  fs::path report;
  fs::path errors;
  fs::path out;
};

inline int cmd_correlate(const CorrelateOptions& opt, std::ostream& out, std::ostream& err) {
  return detail::run_guarded(err, [&] {
    const auto result = correlate_report(read_report(opt.report), read_error_rates(opt.errors));
    detail::write_text_atomic(opt.out, dump_json(to_json(result)));
    out << "spearman: " << format_fixed6(result.result.spearman_rho)
        << ", kendall_tau (tau-b): " << format_fixed6(result.result.kendall_tau) << ", n: " << result.result.n
        << "\n";
    return 0;
  });
}

// ---------------------------------------------------------------------------
// synth-bench

struct SynthBenchOptions {
  RunConfig config;
  std::size_t seeds = 10;
  fs::path out;
};

struct SynthSeedResult {
  std::uint64_t seed = 0;
  double ci_dependent = 0.0;
  double ci_independent = 0.0;

  bool separated() const { return ci_dependent > ci_independent; }
};

struct SynthBenchResult {
  std::vector<SynthSeedResult> seeds;
  double mean_dependent = 0.0;
  double mean_independent = 0.0;
  std::size_t separated = 0;

  std::string verdict() const {
    return "separated " + std::to_string(separated) + "/" + std::to_string(seeds.size());
  }
};

inline double synth_ci(SynthMode mode, std::uint64_t seed, const RunConfig& cfg) {
  const auto data = synth_generate(mode, cfg.synth.classes, cfg.synth.per_class, seed, cfg.synth.options);
  return estimate_ci(data.embeddings, data.values, data.labels, data.ids, cfg.hsic).aggregate;
}

inline SynthBenchResult run_synth_bench(const RunConfig& cfg, std::size_t n_seeds) {
  if (n_seeds < 1) throw UsageError("--seeds must be >= 1");
  SynthBenchResult r;
  for (std::size_t s = 0; s < n_seeds; ++s) {
    const std::uint64_t seed = cfg.synth.seed + s;
    SynthSeedResult row{seed, synth_ci(SynthMode::kDependent, seed, cfg), synth_ci(SynthMode::kIndependent, seed, cfg)};
    r.mean_dependent += row.ci_dependent;
    r.mean_independent += row.ci_independent;
    if (row.separated()) ++r.separated;
    r.seeds.push_back(row);
  }
  r.mean_dependent /= static_cast<double>(n_seeds);
  r.mean_independent /= static_cast<double>(n_seeds);
  return r;
}

inline Json to_json(const SynthBenchResult& r, const RunConfig& cfg) {
  Json seeds = Json::array();
  for (const auto& s : r.seeds) {
    seeds.push_back({{"seed", s.seed},
                     {"ci_dependent", s.ci_dependent},
                     {"ci_independent", s.ci_independent},
                     {"separated", s.separated()}});
  }
  return {{"config_echo", config_echo(cfg)},
          {"seeds", seeds},
          {"mean_ci_dependent", r.mean_dependent},
          {"mean_ci_independent", r.mean_independent},
          {"separated_count", r.separated},
          {"verdict", r.verdict()}};
}

inline int cmd_synth_bench(const SynthBenchOptions& opt, std::ostream& out, std::ostream& err) {
  return detail::run_guarded(err, [&] {
    const auto r = run_synth_bench(opt.config, opt.seeds);
    detail::write_text_atomic(opt.out, dump_json(to_json(r, opt.config)));
    out << r.verdict() << " (mean CI dependent " << format_fixed6(r.mean_dependent) << ", independent "
        << format_fixed6(r.mean_independent) << ")\n";
    return 0;
  });
}

}  // namespace ci_select
