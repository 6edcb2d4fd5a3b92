#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <set>

#include "emgcnn/report.hpp"
#include "test_support.hpp"

using namespace emgcnn;
using sweep::SweepResult;

namespace {

// Diagonal confusion counts with `wrong` frames of every class predicted as NM.
eval::ConfusionMatrix confusion(int correct, int wrong) {
  eval::ConfusionMatrix m;
  for (int c = 0; c < kNumClasses; ++c) {
    m.counts[static_cast<std::size_t>(c)][static_cast<std::size_t>(c)] = correct;
    m.counts[static_cast<std::size_t>(c)][0] += wrong;
  }
  return m;
}

std::vector<SweepResult> full_results() {
  std::vector<SweepResult> rs;
  for (const std::string s : {"S01", "S02"})
    for (int t : {125, 150, 175})
      for (double f : {0.0, 0.25, 0.5, 0.75})
        for (int k : {3, 5, 7}) {
          SweepResult r;
          r.key = {s, t, f, k, 1};
          r.accuracy = 0.5 + 0.5 * f;
          r.f1_macro = 0.4 + 0.5 * f;
          r.confusion = confusion(8, k == 3 ? 2 : 0);
          r.curve = {{1.5, 0.3, 1.4, 0.35}, {1.0, 0.6, 1.1, 0.55}};
          rs.push_back(r);
        }
  return rs;
}

std::set<std::string> names(const report::ReportFiles& f) {
  std::set<std::string> out;
  for (const auto& p : f.written) out.insert(p.filename().string());
  return out;
}

bool is_svg(const std::filesystem::path& p) {
  const auto text = emgcnn::testing::read_file(p);
  return text.rfind("<svg xmlns=", 0) == 0 && text.ends_with("</svg>\n");
}

}  // namespace

TEST(Report, FullGridProducesEveryFigure) {
  emgcnn::testing::TempDir dir("report");
  const auto rs = full_results();
  std::map<sweep::CellKey, std::vector<training::EpochStats>> curves;
  curves[rs[0].key] = rs[0].curve;
  const auto out = report::render(rs, curves, dir.path());
  const std::set<std::string> expected = {
      "overlap_T125.svg",           "overlap_T150.svg",
      "overlap_T175.svg",           "f1_vs_window.svg",
      "confusion_T175_k3_f0.svg",   "confusion_T175_k3_f0p75.svg",
      "confusion_T175_k7_f0.svg",   "confusion_T175_k7_f0p75.svg",
      "curves_S01_T125_f0_k3_s1.svg"};
  EXPECT_EQ(names(out), expected);
  EXPECT_TRUE(out.notes.empty());
  for (const auto& p : out.written) EXPECT_TRUE(is_svg(p)) << p;
}

TEST(Report, ConfusionFigureShowsSubjectMeanRowPercentages) {
  emgcnn::testing::TempDir dir("report");
  report::render(full_results(), {}, dir.path());
  const auto k3 = emgcnn::testing::read_file(dir / "confusion_T175_k3_f0.svg");
  EXPECT_NE(k3.find(">80.00</text>"), std::string::npos);
  EXPECT_NE(k3.find(">20.00</text>"), std::string::npos);
  const auto k7 = emgcnn::testing::read_file(dir / "confusion_T175_k7_f0.svg");
  EXPECT_NE(k7.find(">100.00</text>"), std::string::npos);
}

TEST(Report, MissingCellsAreNotedNotFatal) {
  emgcnn::testing::TempDir dir("report");
  std::vector<SweepResult> rs;
  for (const auto& r : full_results()) {
    if (r.key.window == 125 && r.key.overlap == 0.0) rs.push_back(r);
  }
  const auto out = report::render(rs, {}, dir.path());
  EXPECT_EQ(names(out), std::set<std::string>{"overlap_T125.svg"});
  EXPECT_EQ(out.notes.size(), 5u);
}

TEST(Report, CurveCountIsCapped) {
  emgcnn::testing::TempDir dir("report");
  std::map<sweep::CellKey, std::vector<training::EpochStats>> curves;
  for (const auto& r : full_results()) curves[r.key] = r.curve;
  const auto out = report::render({}, curves, dir.path(), 3);
  EXPECT_EQ(out.written.size(), 3u);
  EXPECT_EQ(out.notes.back(), "further learning curves omitted after 3");
}

TEST(Report, RendersFromSweepFiles) {
  emgcnn::testing::TempDir dir("report");
  sweep::SweepOutcome o;
  o.results = full_results();
  sweep::write_results(dir / "sweep.csv", o, false);
  const auto out = report::render_from_files(dir / "sweep.csv", {}, dir / "fig", 4);
  EXPECT_EQ(out.written.size(), 8u + 4u);
  for (const auto& p : out.written) EXPECT_TRUE(is_svg(p)) << p;
}

TEST(Report, BadCurveFileIsFormatError) {
  emgcnn::testing::TempDir dir("report");
  detail::write_text(dir / "c.csv", "epoch,loss\n1,2\n");
  EXPECT_THROW(report::read_curves(dir / "c.csv"), FormatError);
}

TEST(Report, SvgTextIsEscaped) {
  report::Svg svg(10, 10);
  svg.text(0, 0, "a<b & \"c\">");
  EXPECT_NE(svg.str().find("a&lt;b &amp; &quot;c&quot;&gt;"), std::string::npos);
}
