#pragma once

// Static SVG figures rendered from sweep and training CSV files:
//   overlap_T<T>.svg        accuracy and macro-F1 per overlap, grouped by kernel
//   f1_vs_window.svg        macro-F1 against window length per kernel at 75% overlap
//   confusion_T175_k<k>_f<f>.svg  subject-averaged row-normalized confusion
//   curves_<cell>.svg       per-epoch loss and accuracy curves

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "emgcnn/sweep.hpp"

namespace emgcnn::report {

// Minimal SVG document builder.
class Svg {
 public:
  Svg(int width, int height) : width_(width), height_(height) {}

  void rect(double x, double y, double w, double h, const std::string& fill,
            const std::string& extra = "") {
    body_ += "<rect x=\"" + num(x) + "\" y=\"" + num(y) + "\" width=\"" + num(w) +
             "\" height=\"" + num(h) + "\" fill=\"" + fill + "\"" + extra + "/>\n";
  }
  void line(double x1, double y1, double x2, double y2, const std::string& stroke,
            double width = 1.0) {
    body_ += "<line x1=\"" + num(x1) + "\" y1=\"" + num(y1) + "\" x2=\"" + num(x2) + "\" y2=\"" +
             num(y2) + "\" stroke=\"" + stroke + "\" stroke-width=\"" + num(width) + "\"/>\n";
  }
  void polyline(const std::vector<std::pair<double, double>>& pts, const std::string& stroke) {
    std::string p;
    for (const auto& [x, y] : pts) p += num(x) + "," + num(y) + " ";
    body_ += "<polyline fill=\"none\" stroke=\"" + stroke + "\" stroke-width=\"2\" points=\"" + p +
             "\"/>\n";
  }
  void circle(double x, double y, double r, const std::string& fill) {
    body_ += "<circle cx=\"" + num(x) + "\" cy=\"" + num(y) + "\" r=\"" + num(r) + "\" fill=\"" +
             fill + "\"/>\n";
  }
  void text(double x, double y, const std::string& s, int size = 12,
            const std::string& anchor = "middle", const std::string& fill = "#000") {
    body_ += "<text x=\"" + num(x) + "\" y=\"" + num(y) + "\" font-size=\"" +
             std::to_string(size) + "\" text-anchor=\"" + anchor + "\" fill=\"" + fill +
             "\" font-family=\"sans-serif\">" + escape(s) + "</text>\n";
  }

  [[nodiscard]] std::string str() const {
    return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(width_) +
           "\" height=\"" + std::to_string(height_) + "\" viewBox=\"0 0 " +
           std::to_string(width_) + " " + std::to_string(height_) + "\">\n" +
           "<rect width=\"100%\" height=\"100%\" fill=\"#fff\"/>\n" + body_ + "</svg>\n";
  }

  static std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
  }

 private:
  static std::string escape(const std::string& s) {
    std::string o;
    for (char c : s) {
      switch (c) {
        case '<': o += "&lt;"; break;
        case '>': o += "&gt;"; break;
        case '&': o += "&amp;"; break;
        case '"': o += "&quot;"; break;
        default: o += c;
      }
    }
    return o;
  }

  int width_, height_;
  std::string body_;
};

inline const std::vector<std::string>& palette() {
  static const std::vector<std::string> p = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                             "#9467bd", "#8c564b", "#17becf", "#7f7f7f"};
  return p;
}

struct Series {
  std::string name;
  std::vector<double> values;  // one per category / x value
};

// Plot frame with a 0..100 y axis; returns the drawing area.
struct Frame {
  double left = 60, top = 40, width = 0, height = 0;
  double y_of(double v, double lo, double hi) const {
    return top + height * (1.0 - (v - lo) / (hi - lo));
  }
};

inline Frame axes(Svg& svg, int w, int h, const std::string& title, const std::string& ylabel,
                  double lo, double hi) {
  Frame f;
  f.width = w - f.left - 150;
  f.height = h - f.top - 60;
  svg.text(w / 2.0, 22, title, 15);
  for (int i = 0; i <= 5; ++i) {
    const double v = lo + (hi - lo) * i / 5.0;
    const double y = f.y_of(v, lo, hi);
    svg.line(f.left, y, f.left + f.width, y, "#ddd");
    svg.text(f.left - 6, y + 4, table::format_fixed(v, hi - lo < 5 ? 2 : 0), 11, "end");
  }
  svg.line(f.left, f.top, f.left, f.top + f.height, "#000");
  svg.line(f.left, f.top + f.height, f.left + f.width, f.top + f.height, "#000");
  svg.text(16, f.top + f.height / 2, ylabel, 12, "middle");
  return f;
}

inline void legend(Svg& svg, const Frame& f, const std::vector<std::string>& names) {
  for (std::size_t i = 0; i < names.size(); ++i) {
    const double y = f.top + 10 + 20.0 * static_cast<double>(i);
    svg.rect(f.left + f.width + 15, y - 9, 12, 12, palette()[i % palette().size()]);
    svg.text(f.left + f.width + 33, y + 1, names[i], 12, "start");
  }
}

inline std::string grouped_bars(const std::string& title, const std::vector<std::string>& categories,
                                const std::vector<Series>& series, const std::string& ylabel) {
  const int w = 760, h = 420;
  Svg svg(w, h);
  const Frame f = axes(svg, w, h, title, ylabel, 0, 100);
  const double group_w = f.width / static_cast<double>(categories.size());
  const double bar_w = group_w * 0.8 / static_cast<double>(std::max<std::size_t>(series.size(), 1));
  for (std::size_t c = 0; c < categories.size(); ++c) {
    const double gx = f.left + group_w * static_cast<double>(c) + group_w * 0.1;
    for (std::size_t s = 0; s < series.size(); ++s) {
      const double v = series[s].values[c];
      if (!std::isfinite(v)) continue;
      const double y = f.y_of(std::clamp(v, 0.0, 100.0), 0, 100);
      svg.rect(gx + bar_w * static_cast<double>(s), y, bar_w * 0.95, f.top + f.height - y,
               palette()[s % palette().size()]);
      svg.text(gx + bar_w * (static_cast<double>(s) + 0.5), y - 3, table::format_fixed(v, 1), 8);
    }
    svg.text(gx + group_w * 0.4, f.top + f.height + 18, categories[c], 12);
  }
  std::vector<std::string> names;
  for (const auto& s : series) names.push_back(s.name);
  legend(svg, f, names);
  return svg.str();
}

inline std::string line_chart(const std::string& title, const std::vector<double>& xs,
                              const std::vector<Series>& series, const std::string& xlabel,
                              const std::string& ylabel, double lo, double hi) {
  const int w = 760, h = 420;
  Svg svg(w, h);
  const Frame f = axes(svg, w, h, title, ylabel, lo, hi);
  const double x0 = xs.front(), x1 = xs.size() > 1 ? xs.back() : xs.front() + 1;
  auto xp = [&](double x) { return f.left + 20 + (f.width - 40) * (x - x0) / (x1 - x0); };
  for (double x : xs) svg.text(xp(x), f.top + f.height + 18, table::format_number(x), 12);
  svg.text(f.left + f.width / 2, f.top + f.height + 40, xlabel, 12);
  for (std::size_t s = 0; s < series.size(); ++s) {
    std::vector<std::pair<double, double>> pts;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const double v = series[s].values[i];
      if (std::isfinite(v)) pts.emplace_back(xp(xs[i]), f.y_of(std::clamp(v, lo, hi), lo, hi));
    }
    const auto& color = palette()[s % palette().size()];
    svg.polyline(pts, color);
    if (xs.size() <= 12) {
      for (const auto& [x, y] : pts) svg.circle(x, y, 3, color);
    }
  }
  std::vector<std::string> names;
  for (const auto& s : series) names.push_back(s.name);
  legend(svg, f, names);
  return svg.str();
}

inline std::string heatmap(const std::string& title, const eval::RealMatrix& m) {
  const int cell = 64, left = 90, top = 60;
  const int w = left + cell * kNumClasses + 30, h = top + cell * kNumClasses + 50;
  Svg svg(w, h);
  svg.text(w / 2.0, 22, title, 14);
  for (int i = 0; i < kNumClasses; ++i) {
    svg.text(left - 8, top + cell * i + cell / 2.0 + 4, std::string(kClassNames[i]), 12, "end");
    svg.text(left + cell * i + cell / 2.0, top - 8, std::string(kClassNames[i]), 12);
    for (int j = 0; j < kNumClasses; ++j) {
      const double v = m[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
      const int shade = static_cast<int>(std::lround(255.0 * (1.0 - std::clamp(v, 0.0, 100.0) / 100.0)));
      char fill[16];
      std::snprintf(fill, sizeof fill, "#%02x%02xff", shade, shade);
      svg.rect(left + cell * j, top + cell * i, cell, cell, fill, " stroke=\"#888\"");
      svg.text(left + cell * j + cell / 2.0, top + cell * i + cell / 2.0 + 4,
               table::format_fixed(v, 2), 11, "middle", v > 55 ? "#fff" : "#000");
    }
  }
  svg.text(left + cell * kNumClasses / 2.0, h - 14, "predicted class", 12);
  return svg.str();
}

// ---------------------------------------------------------------- figures

struct ReportFiles {
  std::vector<std::filesystem::path> written;
  std::vector<std::string> notes;  // figures skipped for lack of data
};

inline std::string overlap_label(double f) { return table::format_number(100.0 * f) + "% T"; }

inline double mean_or_nan(const std::vector<sweep::SweepResult>& rs, sweep::Metric m,
                          const std::function<bool(const sweep::CellKey&)>& keep) {
  const auto v = sweep::mean_percent(rs, m, keep);
  return v ? *v : std::nan("");
}

// Subject-averaged, row-normalized confusion for one (T, k, f): counts are
// pooled over seeds per subject, then each subject is normalized and averaged.
inline std::optional<eval::RealMatrix> averaged_confusion(const std::vector<sweep::SweepResult>& rs,
                                                          int window, int kernel, double overlap) {
  std::map<std::string, eval::ConfusionMatrix> per_subject;
  for (const auto& r : rs) {
    if (r.key.window == window && r.key.kernel == kernel && r.key.overlap == overlap &&
        r.confusion.total() > 0) {
      per_subject[r.key.subject] += r.confusion;
    }
  }
  std::vector<eval::ConfusionMatrix> mats;
  for (const auto& [s, cm] : per_subject) {
    bool full = true;
    for (int c = 0; c < kNumClasses; ++c) full = full && cm.row_sum(c) > 0;
    if (full) mats.push_back(cm);
  }
  if (mats.empty()) return std::nullopt;
  return eval::average_subjectwise(mats);
}

inline std::string cell_slug(const sweep::CellKey& k) {
  std::string f = table::format_number(k.overlap);
  std::replace(f.begin(), f.end(), '.', 'p');
  return k.subject + "_T" + std::to_string(k.window) + "_f" + f + "_k" + std::to_string(k.kernel) +
         "_s" + std::to_string(k.seed);
}

inline std::string curve_chart(const std::string& title,
                               const std::vector<training::EpochStats>& curve) {
  std::vector<double> xs;
  Series tl{"train loss", {}}, vl{"validation loss", {}}, ta{"train accuracy", {}},
      va{"validation accuracy", {}};
  double hi = 0;
  for (std::size_t e = 0; e < curve.size(); ++e) {
    xs.push_back(static_cast<double>(e + 1));
    tl.values.push_back(curve[e].train_loss);
    vl.values.push_back(curve[e].val_loss);
    ta.values.push_back(curve[e].train_accuracy);
    va.values.push_back(curve[e].val_accuracy);
    hi = std::max({hi, curve[e].train_loss, curve[e].val_loss, 1.0});
  }
  return line_chart(title, xs, {ta, va, tl, vl}, "epoch", "accuracy / loss", 0.0, std::ceil(hi));
}

// Per-epoch curves from a curve CSV (train command or sweep sidecar layout).
inline std::map<sweep::CellKey, std::vector<training::EpochStats>> read_curves(
    const std::filesystem::path& path) {
  const auto t = table::read_table(path);
  if (table::join(t.header) != sweep::curves_header()) {
    throw FormatError(path.string() + ": unexpected curve header");
  }
  std::map<sweep::CellKey, std::vector<training::EpochStats>> out;
  for (const auto& f : t.rows) {
    training::EpochStats st;
    st.train_loss = table::parse_double(f[6], path.string());
    st.train_accuracy = table::parse_double(f[7], path.string());
    st.val_loss = table::parse_double(f[8], path.string());
    st.val_accuracy = table::parse_double(f[9], path.string());
    out[sweep::parse_key(f, path.string())].push_back(st);
  }
  return out;
}

// Renders every figure the results support into `dir`. Pure function of the
// CSV files; nothing is retrained.
inline ReportFiles render(const std::vector<sweep::SweepResult>& rs,
                          const std::map<sweep::CellKey, std::vector<training::EpochStats>>& curves,
                          const std::filesystem::path& dir, std::size_t max_curves = 12) {
  std::filesystem::create_directories(dir);
  ReportFiles out;
  auto emit = [&](const std::string& name, const std::string& svg) {
    const auto p = dir / name;
    emgcnn::detail::write_text(p, svg);
    out.written.push_back(p);
  };
  std::set<int> windows, kernels;
  std::set<double> overlaps;
  for (const auto& r : rs) {
    windows.insert(r.key.window);
    kernels.insert(r.key.kernel);
    overlaps.insert(r.key.overlap);
  }

  for (int t : windows) {
    std::vector<std::string> cats;
    for (double f : overlaps) cats.push_back(overlap_label(f));
    std::vector<Series> series;
    for (int k : kernels) {
      for (auto m : {sweep::Metric::accuracy, sweep::Metric::f1_macro}) {
        Series s{std::string(m == sweep::Metric::accuracy ? "accuracy" : "F1") + " k=" +
                     std::to_string(k),
                 {}};
        for (double f : overlaps) {
          s.values.push_back(mean_or_nan(rs, m, [&](const sweep::CellKey& c) {
            return c.window == t && c.kernel == k && c.overlap == f;
          }));
        }
        series.push_back(std::move(s));
      }
    }
    emit("overlap_T" + std::to_string(t) + ".svg",
         grouped_bars("Accuracy and F1 vs overlap, 32x" + std::to_string(t) + " frames", cats,
                      series, "percent"));
  }

  if (overlaps.contains(0.75)) {
    std::vector<double> xs(windows.begin(), windows.end());
    std::vector<Series> series;
    for (int k : kernels) {
      Series s{"k=" + std::to_string(k), {}};
      for (int t : windows) {
        s.values.push_back(mean_or_nan(rs, sweep::Metric::f1_macro, [&](const sweep::CellKey& c) {
          return c.window == t && c.kernel == k && c.overlap == 0.75;
        }));
      }
      series.push_back(std::move(s));
    }
    emit("f1_vs_window.svg", line_chart("Macro-F1 vs window length at 75% overlap", xs, series,
                                        "window length T (samples)", "F1 (percent)", 0, 100));
  } else {
    out.notes.push_back("f1_vs_window.svg skipped: no results at 75% overlap");
  }

  for (int k : {3, 7}) {
    for (double f : {0.0, 0.75}) {
      std::string fs = table::format_number(f);
      std::replace(fs.begin(), fs.end(), '.', 'p');
      const std::string name = "confusion_T175_k" + std::to_string(k) + "_f" + fs + ".svg";
      const auto m = averaged_confusion(rs, 175, k, f);
      if (!m) {
        out.notes.push_back(name + " skipped: no confusion counts for T=175 k=" +
                            std::to_string(k) + " f=" + table::format_number(f));
        continue;
      }
      emit(name, heatmap("T=175, k=" + std::to_string(k) + ", overlap " + overlap_label(f) +
                             " (row %, subject mean)",
                         *m));
    }
  }

  std::size_t n = 0;
  for (const auto& [key, curve] : curves) {
    if (curve.empty()) continue;
    if (n++ >= max_curves) {
      out.notes.push_back("further learning curves omitted after " + std::to_string(max_curves));
      break;
    }
    emit("curves_" + cell_slug(key) + ".svg", curve_chart("Learning curves " + to_string(key), curve));
  }
  return out;
}

// Reads a results CSV plus its sidecars and any extra curve files, then renders.
inline ReportFiles render_from_files(const std::filesystem::path& csv,
                                     const std::vector<std::filesystem::path>& curve_files,
                                     const std::filesystem::path& dir, std::size_t max_curves = 12) {
  std::vector<sweep::SweepResult> rs;
  std::map<sweep::CellKey, std::vector<training::EpochStats>> curves;
  if (!csv.empty()) {
    rs = sweep::read_results(csv);
    for (const auto& r : rs) {
      if (!r.curve.empty()) curves[r.key] = r.curve;
    }
  }
  for (const auto& p : curve_files) {
    for (auto& [k, c] : read_curves(p)) curves[k] = std::move(c);
  }
  return render(rs, curves, dir, max_curves);
}

}  // namespace emgcnn::report
