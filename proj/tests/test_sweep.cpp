#include <gtest/gtest.h>

#include <filesystem>
#include <set>

#include "emgcnn/sweep.hpp"
#include "test_support.hpp"

using namespace emgcnn;
using sweep::CellKey;
using sweep::SweepResult;

namespace {

const std::vector<EmgRecording>& dataset() {
  static const auto recs = synth::generate(emgcnn::testing::tiny_synth_config(5, 2));
  return recs;
}

sweep::SweepOptions quick_options(int epochs = 1) {
  sweep::SweepOptions o;
  o.train.epochs = epochs;
  o.train.learning_rate = 1e-3;
  o.width_divisor = 16;
  return o;
}

sweep::SweepGrid small_grid() {
  sweep::SweepGrid g;
  g.windows = {125, 150};
  g.overlaps = {0.0, 0.5};
  g.kernels = {3, 5};
  return g;
}

SweepResult fake(const std::string& subject, int t, double f, int k, std::uint64_t seed,
                 double acc, double f1) {
  SweepResult r;
  r.key = {subject, t, f, k, seed};
  r.accuracy = acc;
  r.f1_macro = f1;
  return r;
}

}  // namespace

TEST(SweepGrid, DefaultGridHas36CellsPerSubject) {
  const sweep::SweepGrid g;
  const auto cells = sweep::enumerate_cells({"S01", "S02", "S03", "S04"}, g);
  EXPECT_EQ(cells.size(), 144u);
  EXPECT_TRUE(std::is_sorted(cells.begin(), cells.end()));
  EXPECT_EQ(std::set<CellKey>(cells.begin(), cells.end()).size(), 144u);
  EXPECT_EQ(sweep::enumerate_cells({"S01"}, g).size(), 36u);
}

TEST(SweepGrid, RejectsInvalidGrids) {
  sweep::SweepGrid g;
  g.kernels = {4};
  EXPECT_THROW(g.validate(), UsageError);
  g = {};
  g.overlaps = {1.0};
  EXPECT_THROW(g.validate(), UsageError);
  g = {};
  g.windows = {125, 125};
  EXPECT_THROW(g.validate(), UsageError);
  g = {};
  g.seeds = {};
  EXPECT_THROW(g.validate(), UsageError);
}

TEST(SweepGrid, CellSeedDependsOnWholeKey) {
  const CellKey a{"S01", 125, 0.0, 3, 1};
  std::set<std::uint64_t> seeds = {sweep::cell_seed(a)};
  seeds.insert(sweep::cell_seed({"S02", 125, 0.0, 3, 1}));
  seeds.insert(sweep::cell_seed({"S01", 150, 0.0, 3, 1}));
  seeds.insert(sweep::cell_seed({"S01", 125, 0.25, 3, 1}));
  seeds.insert(sweep::cell_seed({"S01", 125, 0.0, 5, 1}));
  seeds.insert(sweep::cell_seed({"S01", 125, 0.0, 3, 2}));
  EXPECT_EQ(seeds.size(), 6u);
  EXPECT_EQ(sweep::cell_seed(a), sweep::cell_seed(CellKey{"S01", 125, 0.0, 3, 1}));
}

TEST(SweepRun, SingletonGridEqualsDirectTraining) {
  sweep::SweepGrid g;
  g.windows = {125};
  g.overlaps = {0.5};
  g.kernels = {5};
  g.subjects = {"S02"};
  const auto opt = quick_options(2);
  const auto out = sweep::run_grid(dataset(), g, opt);
  ASSERT_EQ(out.results.size(), 1u);
  ASSERT_TRUE(out.failures.empty());

  const CellKey key{"S02", 125, 0.5, 5, 1};
  std::vector<const EmgRecording*> recs = {&dataset()[1]};
  const auto frames = windowing::segment_all(std::span<const EmgRecording* const>(recs), {125, 0.5});
  auto cfg = opt.train;
  cfg.seed = sweep::cell_seed(key);
  const auto [net, rep] = training::train(frames, nn::scaled_spec(125, 5, 16), cfg);

  const auto& r = out.results.front();
  EXPECT_EQ(r.key, key);
  EXPECT_EQ(r.accuracy, rep.test_accuracy);
  EXPECT_EQ(r.f1_macro, rep.test_f1_macro);
  EXPECT_TRUE(r.confusion == rep.test_confusion);
  ASSERT_EQ(r.curve.size(), 2u);
  EXPECT_EQ(r.curve[1].train_loss, rep.epochs[1].train_loss);
}

TEST(SweepRun, ResultsAreIndependentOfJobCount) {
  const auto g = small_grid();
  auto opt = quick_options();
  const auto serial = sweep::run_grid(dataset(), g, opt);
  opt.jobs = 4;
  const auto parallel = sweep::run_grid(dataset(), g, opt);
  ASSERT_EQ(serial.results.size(), 16u);
  EXPECT_EQ(serial.trained, 16u);
  EXPECT_EQ(sweep::results_csv(serial.results, false), sweep::results_csv(parallel.results, false));
  EXPECT_EQ(sweep::confusion_csv(serial.results), sweep::confusion_csv(parallel.results));
  EXPECT_EQ(sweep::curves_csv(serial.results), sweep::curves_csv(parallel.results));
}

TEST(SweepRun, ResumeSkipsFinishedCells) {
  emgcnn::testing::TempDir dir("sweep");
  const auto csv = dir / "results.csv";
  const auto g = small_grid();
  auto first = g;
  first.kernels = {3};
  const auto a = sweep::run_grid_to_file(dataset(), first, quick_options(), csv);
  EXPECT_EQ(a.trained, 8u);
  const auto b = sweep::run_grid_to_file(dataset(), g, quick_options(), csv);
  EXPECT_EQ(b.trained, 8u);
  EXPECT_EQ(b.skipped, 8u);
  const auto c = sweep::run_grid_to_file(dataset(), g, quick_options(), csv);
  EXPECT_EQ(c.trained, 0u);
  EXPECT_EQ(c.skipped, 16u);

  const auto fresh = sweep::run_grid(dataset(), g, quick_options());
  EXPECT_EQ(emgcnn::testing::read_file(csv), sweep::results_csv(fresh.results, false));
}

TEST(SweepRun, FailingCellIsRecordedAndRunContinues) {
  auto recs = dataset();
  // Classes with 200-sample runs yield one 150-sample frame each, too few to split.
  using emgcnn::testing::label_track;
  recs.push_back(emgcnn::testing::random_recording(
      32,
      label_track({{ClassId::NM, 200}, {ClassId::WS, 200}, {ClassId::WP, 200},
                   {ClassId::HO, 200}, {ClassId::HC, 200}}),
      9, "S03"));
  sweep::SweepGrid g;
  g.windows = {150};
  g.overlaps = {0.0};
  g.kernels = {3};
  const auto out = sweep::run_grid(recs, g, quick_options());
  EXPECT_EQ(out.results.size(), 2u);
  ASSERT_EQ(out.failures.size(), 1u);
  EXPECT_EQ(out.failures[0].key.subject, "S03");
  EXPECT_NE(sweep::failures_text(out.failures).find("S03 T=150 f=0 k=3 seed=1: "),
            std::string::npos);
}

TEST(SweepRun, UnknownSubjectIsAnError) {
  auto g = small_grid();
  g.subjects = {"S99"};
  EXPECT_THROW(sweep::run_grid(dataset(), g, quick_options()), DataError);
  EXPECT_THROW(sweep::run_grid({}, small_grid(), quick_options()), DataError);
}

TEST(SweepFiles, RoundTripKeepsFilePrecision) {
  emgcnn::testing::TempDir dir("sweep");
  const auto csv = dir / "r.csv";
  sweep::SweepGrid g;
  g.windows = {125};
  g.overlaps = {0.0, 0.75};
  g.kernels = {3};
  auto opt = quick_options(2);
  opt.wall_clock_in_csv = true;
  const auto out = sweep::run_grid_to_file(dataset(), g, opt, csv);
  const auto back = sweep::read_results(csv);
  ASSERT_EQ(back.size(), out.results.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    const auto& a = out.results[i];
    const auto& b = back[i];
    EXPECT_EQ(a.key, b.key);
    EXPECT_NEAR(a.accuracy, b.accuracy, 0.5e-4 + 1e-12);
    EXPECT_NEAR(a.f1_macro, b.f1_macro, 0.5e-4 + 1e-12);
    EXPECT_TRUE(a.confusion == b.confusion);
    ASSERT_EQ(a.curve.size(), b.curve.size());
    for (std::size_t e = 0; e < a.curve.size(); ++e) {
      EXPECT_NEAR(a.curve[e].train_loss, b.curve[e].train_loss, 1e-12);
      EXPECT_NEAR(a.curve[e].val_accuracy, b.curve[e].val_accuracy, 1e-12);
    }
    EXPECT_NEAR(a.seconds, b.seconds, 1e-3);
  }
  EXPECT_EQ(sweep::results_csv(back, true), emgcnn::testing::read_file(csv));
  EXPECT_TRUE(std::filesystem::exists(dir / "r.failures.txt"));
  EXPECT_TRUE(std::filesystem::exists(dir / "r.timing.csv"));
}

TEST(SweepFiles, CsvLayout) {
  std::vector<SweepResult> rs = {fake("S01", 125, 0.25, 3, 1, 0.978, 0.5)};
  rs[0].class_accuracy = {1.0, 0.9, 0.8, 0.7, 0.6};
  rs[0].seconds = 12.345;
  EXPECT_EQ(sweep::results_csv(rs, false),
            "subject,window,overlap_frac,kernel,seed,accuracy,f1_macro,acc_NM,acc_WS,acc_WP,"
            "acc_HO,acc_HC,seconds\n"
            "S01,125,0.25,3,1,97.80,50.00,100.00,90.00,80.00,70.00,60.00,0.00\n");
  EXPECT_NE(sweep::results_csv(rs, true).find(",12.35\n"), std::string::npos);
}

TEST(SweepFiles, BadHeaderOrDuplicateRowIsFormatError) {
  emgcnn::testing::TempDir dir("sweep");
  detail::write_text(dir / "a.csv", "subject,window\nS01,125\n");
  EXPECT_THROW(sweep::read_results(dir / "a.csv"), FormatError);
  const auto row = sweep::results_csv({fake("S01", 125, 0, 3, 1, 0.5, 0.5)}, false);
  detail::write_text(dir / "b.csv", row + row.substr(row.find('\n') + 1));
  EXPECT_THROW(sweep::read_results(dir / "b.csv"), FormatError);
}

TEST(SweepAggregate, ImprovementDelta) {
  std::vector<SweepResult> rs = {fake("S01", 125, 0.75, 3, 1, 0.9780, 0.9),
                                 fake("S01", 125, 0.0, 3, 1, 0.8904, 0.8)};
  const auto d = sweep::improvement_delta(rs, sweep::Metric::accuracy);
  ASSERT_EQ(d.size(), 1u);
  EXPECT_NEAR(d.at({125, 3}), 8.76, 1e-9);
  rs[0].accuracy = rs[1].accuracy;
  EXPECT_EQ(sweep::improvement_delta(rs, sweep::Metric::accuracy).at({125, 3}), 0.0);
}

TEST(SweepAggregate, ImprovementDeltaAveragesReplicates) {
  std::vector<SweepResult> rs;
  for (std::uint64_t s : {1, 2}) {
    rs.push_back(fake("S01", 150, 0.75, 7, s, 0.6 + 0.1 * static_cast<double>(s), 0));
    rs.push_back(fake("S01", 150, 0.0, 7, s, 0.5, 0));
  }
  EXPECT_NEAR(sweep::improvement_delta(rs, sweep::Metric::accuracy).at({150, 7}), 25.0, 1e-9);
  rs.pop_back();
  EXPECT_THROW(sweep::improvement_delta(rs, sweep::Metric::accuracy), DataError);
}

TEST(SweepAggregate, KernelTrend) {
  std::vector<SweepResult> rs = {fake("S01", 125, 0.75, 3, 1, 0, 0.80),
                                 fake("S02", 125, 0.75, 3, 1, 0, 0.90),
                                 fake("S01", 125, 0.75, 7, 1, 0, 0.95),
                                 fake("S02", 125, 0.75, 7, 1, 0, 0.95),
                                 fake("S01", 125, 0.0, 7, 1, 0, 0.10)};
  const auto at = sweep::kernel_trend(rs, sweep::Metric::f1_macro, 0.75);
  EXPECT_NEAR(at.at(125).at(3), 85.0, 1e-9);
  EXPECT_NEAR(at.at(125).at(7), 95.0, 1e-9);
  EXPECT_NEAR(sweep::kernel_trend(rs, sweep::Metric::f1_macro).at(125).at(7),
              100.0 * (0.95 + 0.95 + 0.10) / 3.0, 1e-9);
  rs.push_back(fake("S01", 150, 0.75, 3, 1, 0, 0.5));
  EXPECT_THROW(sweep::kernel_trend(rs, sweep::Metric::f1_macro), DataError);
  EXPECT_THROW(sweep::kernel_trend({}, sweep::Metric::f1_macro), DataError);
}

TEST(SweepAggregate, ParseMetric) {
  EXPECT_EQ(sweep::parse_metric("accuracy"), sweep::Metric::accuracy);
  EXPECT_EQ(sweep::parse_metric("f1"), sweep::Metric::f1_macro);
  EXPECT_THROW(sweep::parse_metric("auc"), UsageError);
}
