#include <gtest/gtest.h>

#include <sstream>

#include "ci_select/commands.hpp"
#include "test_util.hpp"

namespace ci_select {
namespace {

namespace fs = std::filesystem;

const fs::path kFixtures = fs::path(CI_SELECT_DATA_DIR) / "fixtures";

constexpr double kSynthMeanDependent = 0.011883415354959244;
constexpr double kSynthMeanIndependent = 0.00021935275087019658;

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file()) files[e.path().filename().string()] = testing::read_file(e.path());
  }
  return files;
}

struct ExtractFixture : ::testing::Test {
  testing::TempDir dir{"ci_cmd"};
  fs::path manifest;
  fs::path features;

  void SetUp() override {
    manifest = testing::make_corpus(dir.path(), 3, 2);
    features = dir / "features";
  }

  int extract(std::string* out_text = nullptr, bool force = false) {
    std::ostringstream out, err;
    const int rc = cmd_extract({manifest, features, RunConfig{}, force}, out, err);
    if (out_text) *out_text = out.str();
    EXPECT_EQ(err.str(), "");
    return rc;
  }
};

TEST_F(ExtractFixture, WritesCachesAndTable) {
  std::string out;
  ASSERT_EQ(extract(&out), 0);
  EXPECT_EQ(out, "extracted: 6, skipped: 0\n");
  const auto rows = read_pseudo_label_csv(features / kPseudoLabelCsv);
  ASSERT_EQ(rows.size(), 6u);
  EXPECT_EQ(rows[0].utterance_id, "spk0_utt0");
  EXPECT_EQ(rows[0].class_label, "speaker0");
  for (const auto& r : rows) {
    EXPECT_TRUE(fs::exists(features / cache_file_name(r.utterance_id)));
    for (auto p : kAllPseudoLabels) EXPECT_TRUE(std::isfinite(r.value(p)));
  }
  // 0.3 s of audio gives 28 frames of 80 log-mel bands.
  const auto seq = cache_read(features / cache_file_name("spk0_utt0"));
  EXPECT_EQ(seq.length(), 28);
  EXPECT_EQ(seq.dim(), 80);
}

TEST_F(ExtractFixture, RerunSkipsAndKeepsOutputs) {
  ASSERT_EQ(extract(), 0);
  const auto before = snapshot(features);
  std::string out;
  ASSERT_EQ(extract(&out), 0);
  EXPECT_EQ(out, "extracted: 0, skipped: 6\n");
  EXPECT_EQ(snapshot(features), before);
  ASSERT_EQ(extract(&out, true), 0);
  EXPECT_EQ(out, "extracted: 6, skipped: 0\n");
  EXPECT_EQ(snapshot(features), before);
}

TEST_F(ExtractFixture, MissingAudioNamesUtterance) {
  testing::write_file(manifest, testing::read_file(manifest) + "ghost,wav/ghost.wav,speaker9,,\n");
  std::ostringstream out, err;
  EXPECT_EQ(cmd_extract({manifest, features, RunConfig{}, false}, out, err), 2);
  EXPECT_NE(err.str().find("ghost"), std::string::npos) << err.str();
}

TEST_F(ExtractFixture, MaxDurationExcludesLongUtterances) {
  RunConfig cfg;
  cfg.corpus.max_duration_s = 0.32;
  std::ostringstream out, err;
  ASSERT_EQ(cmd_extract({manifest, features, cfg, false}, out, err), 0);
  EXPECT_EQ(out.str(), "extracted: 3, skipped: 0, excluded: 3\n");
  EXPECT_EQ(read_pseudo_label_csv(features / kPseudoLabelCsv).size(), 3u);

  std::ostringstream ci_out, ci_err;
  CiOptions opt{manifest, features, {"zcr"}, dir / "r.json", "", cfg};
  opt.config.hsic.standardize = true;
  ASSERT_EQ(cmd_ci(opt, ci_out, ci_err), 0) << ci_err.str();
}

TEST_F(ExtractFixture, CiAllLabels) {
  ASSERT_EQ(extract(), 0);
  std::ostringstream out, err;
  const auto report_path = dir / "report.json";
  ASSERT_EQ(cmd_ci({manifest, features, {"all"}, report_path, "", RunConfig{}}, out, err), 0) << err.str();
  const auto report = read_report(report_path);
  EXPECT_EQ(report.task_name, "manifest");
  ASSERT_EQ(report.entries.size(), 7u);
  for (std::size_t i = 1; i < report.entries.size(); ++i) {
    EXPECT_LE(report.entries[i - 1].ci, report.entries[i].ci);
  }
  for (const auto& e : report.entries) {
    EXPECT_GE(e.ci, 0.0);
    std::set<std::string> keys;
    for (const auto& [k, v] : e.per_class) keys.insert(k);
    EXPECT_EQ(keys, (std::set<std::string>{"speaker0", "speaker1", "speaker2"})) << e.name;
  }
  EXPECT_EQ(report.config_echo, config_echo(RunConfig{}));
  EXPECT_TRUE(fs::exists(dir / "report.csv"));
}

TEST_F(ExtractFixture, CiSingleLabelAndErrors) {
  ASSERT_EQ(extract(), 0);
  std::ostringstream out, err;
  ASSERT_EQ(cmd_ci({manifest, features, {"f0"}, dir / "f0.json", "task", RunConfig{}}, out, err), 0);
  const auto report = read_report(dir / "f0.json");
  ASSERT_EQ(report.entries.size(), 1u);
  EXPECT_EQ(report.entries[0].name, "f0");
  EXPECT_EQ(report.task_name, "task");

  std::ostringstream err2;
  EXPECT_EQ(cmd_ci({manifest, features, {"pitch"}, dir / "x.json", "", RunConfig{}}, out, err2), 1);
  EXPECT_NE(err2.str().find("log_hnr"), std::string::npos) << err2.str();

  fs::remove(features / cache_file_name("spk1_utt0"));
  std::ostringstream err3;
  EXPECT_EQ(cmd_ci({manifest, features, {"all"}, dir / "x.json", "", RunConfig{}}, out, err3), 2);
  EXPECT_NE(err3.str().find("spk1_utt0"), std::string::npos) << err3.str();
}

TEST(Correlate, TimitFixtureFiles) {
  testing::TempDir dir;
  std::ostringstream out, err;
  ASSERT_EQ(cmd_correlate({kFixtures / "timit_report.json", kFixtures / "timit_errors.csv", dir / "c.json"},
                          out, err),
            0)
      << err.str();
  EXPECT_EQ(out.str(), "spearman: 0.928571, kendall_tau (tau-b): 0.809524, n: 7\n");
  const auto j = Json::parse(testing::read_file(dir / "c.json"));
  EXPECT_EQ(j.at("n"), 7);
  EXPECT_EQ(j.at("kendall_variant"), "tau-b");
  EXPECT_EQ(j.at("pairs").size(), 7u);
}

TEST(Correlate, VoxcelebFixtureFilesRecomputed) {
  testing::TempDir dir;
  std::ostringstream out, err;
  ASSERT_EQ(cmd_correlate({kFixtures / "voxceleb_report.json", kFixtures / "voxceleb_errors.csv",
                           dir / "c.json"},
                          out, err),
            0);
  EXPECT_EQ(out.str().rfind("spearman: 0.54", 0), 0u) << out.str();
}

CIReport two_entry_report(const std::string& a, const std::string& b) {
  CIReport r;
  r.task_name = "t";
  r.entries = rank_entries(std::map<std::string, double>{{a, 0.1}, {b, 0.2}});
  return r;
}

TEST(Correlate, NamesMustMatchExactly) {
  testing::TempDir dir;
  write_report(two_entry_report("f0", "zcr"), dir / "r.json");
  testing::write_file(dir / "e.csv", "pseudo_label,error_rate\nF0,10\nzcr,11\n");
  std::ostringstream out, err;
  EXPECT_EQ(cmd_correlate({dir / "r.json", dir / "e.csv", dir / "c.json"}, out, err), 2);
  EXPECT_NE(err.str().find("only in report: f0"), std::string::npos) << err.str();
  EXPECT_NE(err.str().find("only in errors: F0"), std::string::npos) << err.str();
}

TEST(Correlate, TwoEntriesIsEnough) {
  testing::TempDir dir;
  write_report(two_entry_report("f0", "zcr"), dir / "r.json");
  testing::write_file(dir / "e.csv", "pseudo_label,error_rate\nf0,10\nzcr,11\n");
  std::ostringstream out, err;
  ASSERT_EQ(cmd_correlate({dir / "r.json", dir / "e.csv", dir / "c.json"}, out, err), 0) << err.str();
  EXPECT_EQ(out.str(), "spearman: 1.000000, kendall_tau (tau-b): 1.000000, n: 2\n");
}

TEST(SynthBench, DefaultsSeparateEverySeed) {
  const auto r = run_synth_bench(RunConfig{}, 10);
  EXPECT_EQ(r.verdict(), "separated 10/10");
  // Means recorded from this run (default configuration, seeds 1..10). std::normal_distribution
  // is implementation-defined, so another standard library may need new values.
  EXPECT_NEAR(r.mean_dependent, kSynthMeanDependent, 1e-9);
  EXPECT_NEAR(r.mean_independent, kSynthMeanIndependent, 1e-9);
}

TEST(SynthBench, NoiselessIndependentIsZero) {
  RunConfig cfg;
  cfg.synth.options.label_noise = 0.0;
  for (const auto& s : run_synth_bench(cfg, 3).seeds) EXPECT_EQ(s.ci_independent, 0.0);
}

TEST(SynthBench, SameSeedSameFile) {
  testing::TempDir dir;
  std::ostringstream out, err;
  ASSERT_EQ(cmd_synth_bench({RunConfig{}, 2, dir / "a.json"}, out, err), 0);
  ASSERT_EQ(cmd_synth_bench({RunConfig{}, 2, dir / "b.json"}, out, err), 0);
  EXPECT_EQ(testing::read_file(dir / "a.json"), testing::read_file(dir / "b.json"));
  EXPECT_THROW(run_synth_bench(RunConfig{}, 0), UsageError);
}

}  // namespace
}  // namespace ci_select
