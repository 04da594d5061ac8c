// ci-select: estimate pseudo-label utility with a class-conditioned HSIC.

#include <CLI11.hpp>

#include <iostream>
#include <string>
#include <vector>

#include "ci_select/ci_select.hpp"

namespace {

using namespace ci_select;

// Config file (if any) first, then --set overrides in order.
RunConfig resolve_config(const std::string& path, const std::vector<std::string>& overrides) {
  RunConfig cfg = path.empty() ? RunConfig{} : load_config(path);
  for (const auto& o : overrides) apply_override(cfg, o);
  validate(cfg);
  return cfg;
}

std::vector<std::string> split_names(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : s) {
    if (ch == ',') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else if (ch != ' ') {
      cur.push_back(ch);
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Training-free pseudo-label utility estimation (class-conditioned HSIC)"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  auto add_config = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "key = value configuration file");
    cmd->add_option("--set", overrides, "override one config key (key=value); repeatable");
  };

  std::string manifest, out, features, labels = "all", task, report, errors;
  bool force = false;
  std::size_t seeds = 10;

  auto* extract = app.add_subcommand("extract", "compute log-mel caches and pseudo-label values");
  extract->add_option("--manifest", manifest, "manifest CSV")->required();
  extract->add_option("--out", out, "output directory")->required();
  extract->add_flag("--force", force, "recompute fresh caches");
  add_config(extract);

  auto* ci = app.add_subcommand("ci", "estimate conditional independence per pseudo-label");
  ci->add_option("--manifest", manifest, "manifest CSV")->required();
  ci->add_option("--features", features, "directory written by extract")->required();
  ci->add_option("--labels", labels, "all or a comma-separated list of pseudo-labels");
  ci->add_option("--out", out, "report JSON path")->required();
  ci->add_option("--task", task, "task name recorded in the report (default: manifest stem)");
  add_config(ci);

  auto* corr = app.add_subcommand("correlate", "rank-correlate CI estimates with downstream errors");
  corr->add_option("--report", report, "report JSON")->required();
  corr->add_option("--errors", errors, "CSV pseudo_label,error_rate")->required();
  corr->add_option("--out", out, "output JSON")->required();

  auto* bench = app.add_subcommand("synth-bench", "dependent vs independent synthetic benchmark");
  bench->add_option("--seeds", seeds, "number of seeds")->check(CLI::PositiveNumber);
  bench->add_option("--out", out, "output JSON")->required();
  add_config(bench);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(ExitCode::kUsage);
  }

  RunConfig cfg;
  if (!app.got_subcommand(corr)) {
    try {
      cfg = resolve_config(config_path, overrides);
    } catch (const Error& e) {
      std::cerr << "error: " << e.what() << "\n";
      return static_cast<int>(e.exit_code());
    }
  }

  if (app.got_subcommand(extract)) {
    return cmd_extract({manifest, out, cfg, force}, std::cout, std::cerr);
  }
  if (app.got_subcommand(ci)) {
    return cmd_ci({manifest, features, split_names(labels), out, task, cfg}, std::cout, std::cerr);
  }
  if (app.got_subcommand(corr)) {
    return cmd_correlate({report, errors, out}, std::cout, std::cerr);
  }
  return cmd_synth_bench({cfg, seeds, out}, std::cout, std::cerr);
}
