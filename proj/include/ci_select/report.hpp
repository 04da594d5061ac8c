#pragma once

// Machine-readable outputs: CI reports, correlation results and the flat CSV
// exports. JSON is written with sorted keys and every floating-point number
// printed with exactly six decimals, so identical inputs give identical bytes.

#include <json.hpp>

#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "ci_select/analysis.hpp"
#include "ci_select/corpus.hpp"
#include "ci_select/error.hpp"

namespace ci_select {

using Json = nlohmann::json;

inline std::string format_fixed6(double v) {
  if (!std::isfinite(v)) throw InvariantError("refusing to serialize a non-finite number");
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  std::string s(buf);
  if (s == "-0.000000") s = "0.000000";
  return s;
}

// Shortest representation that parses back to the same double.
inline std::string format_roundtrip(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc{}) throw InvariantError("number formatting failed");
  return std::string(buf, ptr);
}

namespace detail {

inline void dump_fixed(const Json& j, std::string& out, int indent, int depth) {
  const auto pad = [&](int d) { out.append(static_cast<std::size_t>(indent * d), ' '); };
  switch (j.type()) {
    case Json::value_t::object: {
      if (j.empty()) {
        out += "{}";
        return;
      }
      out += "{\n";
      bool first = true;
      for (auto it = j.begin(); it != j.end(); ++it) {
        if (!first) out += ",\n";
        first = false;
        pad(depth + 1);
        out += Json(it.key()).dump();
        out += ": ";
        dump_fixed(it.value(), out, indent, depth + 1);
      }
      out += "\n";
      pad(depth);
      out += "}";
      return;
    }
    case Json::value_t::array: {
      if (j.empty()) {
        out += "[]";
        return;
      }
      out += "[\n";
      for (std::size_t i = 0; i < j.size(); ++i) {
        if (i) out += ",\n";
        pad(depth + 1);
        dump_fixed(j[i], out, indent, depth + 1);
      }
      out += "\n";
      pad(depth);
      out += "]";
      return;
    }
    case Json::value_t::number_float:
      out += format_fixed6(j.get<double>());
      return;
    default:
      out += j.dump();
  }
}

// Write to a sibling temp file, then rename into place.
inline void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("cannot write file: " + tmp.string());
    f.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!f) throw DataError("write failed: " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw DataError("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

}  // namespace detail

inline std::string dump_json(const Json& j) {
  std::string out;
  detail::dump_fixed(j, out, 2, 0);
  out += "\n";
  return out;
}

struct CIReport {
  std::string task_name;
  std::vector<RankedEntry> entries;  // ascending CI
  Json config_echo = Json::object();
};

inline Json to_json(const CIReport& r) {
  Json entries = Json::array();
  for (const auto& e : r.entries) {
    Json per_class = Json::object();
    for (const auto& [label, v] : e.per_class) per_class[label] = v;
    entries.push_back({{"name", e.name}, {"ci", e.ci}, {"rank", e.rank}, {"per_class", per_class}});
  }
  return {{"task_name", r.task_name}, {"config_echo", r.config_echo}, {"entries", entries}};
}

inline CIReport report_from_json(const Json& j, const std::string& origin = "report") {
  CIReport r;
  try {
    r.task_name = j.value("task_name", std::string());
    if (j.contains("config_echo")) r.config_echo = j.at("config_echo");
    for (const auto& e : j.at("entries")) {
      RankedEntry entry;
      entry.name = e.at("name").get<std::string>();
      entry.ci = e.at("ci").get<double>();
      entry.rank = e.value("rank", 0.0);
      if (e.contains("per_class")) {
        for (auto it = e.at("per_class").begin(); it != e.at("per_class").end(); ++it) {
          entry.per_class[it.key()] = it.value().get<double>();
        }
      }
      r.entries.push_back(std::move(entry));
    }
  } catch (const Json::exception& e) {
    throw DataError(origin + ": malformed report (" + e.what() + ")");
  }
  return r;
}

inline CIReport read_report(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open report: " + path.string());
  Json j;
  try {
    j = Json::parse(in);
  } catch (const Json::exception& e) {
    throw DataError(path.string() + ": invalid JSON (" + e.what() + ")");
  }
  return report_from_json(j, path.string());
}

inline void write_report(const CIReport& r, const std::filesystem::path& path) {
  detail::write_text_atomic(path, dump_json(to_json(r)));
}

// Flat export: name,ci,rank,n_classes.
inline std::string report_csv(const CIReport& r) {
  std::string out = "name,ci,rank,n_classes\n";
  for (const auto& e : r.entries) {
    out += detail::csv_field(e.name) + "," + format_fixed6(e.ci) + "," + format_fixed6(e.rank) + "," +
           std::to_string(e.per_class.size()) + "\n";
  }
  return out;
}

// Downstream errors: CSV `pseudo_label,error_rate`.
inline std::map<std::string, double> read_error_rates(const std::filesystem::path& path) {
  const auto lines = detail::read_lines(path);
  if (lines.empty() || detail::trim(lines.front()) != "pseudo_label,error_rate") {
    throw DataError(path.string() + ": header must be 'pseudo_label,error_rate'");
  }
  std::map<std::string, double> out;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (detail::trim(lines[i]).empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(i + 1) + ": ";
    const auto f = detail::split_csv_line(lines[i]);
    if (f.size() != 2) throw DataError(where + "expected 2 fields");
    const auto v = detail::parse_double(f[1]);
    if (!v) throw DataError(where + "invalid error_rate '" + f[1] + "'");
    if (!out.emplace(f[0], *v).second) throw DataError(where + "duplicate pseudo_label '" + f[0] + "'");
  }
  return out;
}

struct CorrelationReport {
  CorrelationResult result;
  std::vector<std::tuple<std::string, double, double>> pairs;  // name, ci, error
};

inline Json to_json(const CorrelationReport& c) {
  Json pairs = Json::array();
  for (const auto& [name, ci, err] : c.pairs) pairs.push_back(Json::array({name, ci, err}));
  return {{"spearman", c.result.spearman_rho},
          {"kendall_tau", c.result.kendall_tau},
          {"kendall_variant", "tau-b"},
          {"n", c.result.n},
          {"pairs", pairs}};
}

// Pairs report entries with error rates by exact name. Any name present on
// only one side is an error listing the symmetric difference.
inline CorrelationReport correlate_report(const CIReport& report, const std::map<std::string, double>& errors) {
  std::set<std::string> report_names;
  for (const auto& e : report.entries) {
    if (!report_names.insert(e.name).second) throw DataError("report lists '" + e.name + "' twice");
  }
  std::vector<std::string> only_report, only_errors;
  for (const auto& n : report_names) {
    if (!errors.contains(n)) only_report.push_back(n);
  }
  for (const auto& [n, v] : errors) {
    if (!report_names.contains(n)) only_errors.push_back(n);
  }
  if (!only_report.empty() || !only_errors.empty()) {
    auto join = [](const std::vector<std::string>& v) {
      std::string s;
      for (const auto& x : v) s += (s.empty() ? "" : ", ") + x;
      return s.empty() ? std::string("(none)") : s;
    };
    throw DataError("pseudo-label names differ; only in report: " + join(only_report) +
                    "; only in errors: " + join(only_errors));
  }

  CorrelationReport out;
  std::vector<double> ci, err;
  for (const auto& e : report.entries) {
    ci.push_back(e.ci);
    err.push_back(errors.at(e.name));
    out.pairs.emplace_back(e.name, e.ci, errors.at(e.name));
  }
  out.result = correlate(ci, err);
  return out;
}

}  // namespace ci_select
