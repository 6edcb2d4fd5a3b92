#pragma once

// Experiment grid over window length, overlap, kernel size, subject and seed.
// One network per (subject, cell); cells run independently, optionally in
// parallel, and results are always reported sorted by cell key.
//
// Files written next to a results CSV `<name>.csv`:
//   <name>.confusion.csv  cell key plus the 25 test confusion counts
//   <name>.curves.csv     cell key plus per-epoch train/validation loss and accuracy
//   <name>.failures.txt   one line per failed cell (key and error message)
//   <name>.timing.csv     cell key plus wall-clock seconds of the latest run

#include <algorithm>
#include <atomic>
#include <compare>
#include <filesystem>
#include <functional>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "emgcnn/binary_io.hpp"
#include "emgcnn/table.hpp"
#include "emgcnn/training.hpp"

namespace emgcnn::sweep {

struct SweepGrid {
  std::vector<int> windows = {125, 150, 175};
  std::vector<double> overlaps = {0.0, 0.25, 0.5, 0.75};
  std::vector<int> kernels = {3, 5, 7};
  std::vector<std::uint64_t> seeds = {1};
  std::vector<std::string> subjects;  // empty: every subject in the dataset

  void validate() const {
    if (windows.empty() || overlaps.empty() || kernels.empty() || seeds.empty()) {
      throw UsageError("sweep grid: windows, overlaps, kernels and seeds must be non-empty");
    }
    auto unique = [](auto v) {
      std::sort(v.begin(), v.end());
      return std::adjacent_find(v.begin(), v.end()) == v.end();
    };
    if (!unique(windows) || !unique(overlaps) || !unique(kernels) || !unique(seeds) ||
        !unique(subjects)) {
      throw UsageError("sweep grid: duplicate values would repeat cell keys");
    }
    for (int t : windows) windowing::WindowParams{t, 0.0}.validate();
    for (double f : overlaps) windowing::WindowParams{windows.front(), f}.validate();
    for (int k : kernels) {
      if (k < 1 || k % 2 == 0) throw UsageError("sweep grid: kernel sizes must be odd");
    }
  }
};

struct CellKey {
  std::string subject;
  int window = 0;
  double overlap = 0.0;
  int kernel = 0;
  std::uint64_t seed = 0;

  friend auto operator<=>(const CellKey&, const CellKey&) = default;
  friend bool operator==(const CellKey&, const CellKey&) = default;
};

inline std::string to_string(const CellKey& k) {
  return k.subject + " T=" + std::to_string(k.window) + " f=" + table::format_number(k.overlap) +
         " k=" + std::to_string(k.kernel) + " seed=" + std::to_string(k.seed);
}

// Training seed of a cell: the cell's master seed mixed with a hash of the
// rest of its key, so a cell's result never depends on scheduling.
inline std::uint64_t cell_seed(const CellKey& k) {
  const std::string text = k.subject + "|" + std::to_string(k.window) + "|" +
                           table::format_number(k.overlap) + "|" + std::to_string(k.kernel);
  return combine_seed(k.seed, hash_string(text));
}

struct SweepResult {
  CellKey key;
  double accuracy = 0;
  double f1_macro = 0;
  std::array<double, kNumClasses> class_accuracy{};
  eval::ConfusionMatrix confusion;
  std::vector<training::EpochStats> curve;
  double seconds = 0;
};

struct SweepFailure {
  CellKey key;
  std::string message;
};

struct SweepOptions {
  training::TrainConfig train;  // seed is replaced by cell_seed()
  int width_divisor = 1;        // 1 trains the full-width network
  int jobs = 1;
  bool wall_clock_in_csv = false;  // otherwise the seconds column is 0
  std::function<void(const SweepResult*, const SweepFailure*, std::size_t done,
                     std::size_t total)>
      on_cell;

  void validate() const {
    train.validate();
    if (width_divisor < 1) throw UsageError("width divisor must be >= 1");
    if (jobs < 1) throw UsageError("jobs must be >= 1");
  }
};

struct SweepOutcome {
  std::vector<SweepResult> results;  // sorted by key
  std::vector<SweepFailure> failures;
  std::size_t trained = 0;  // cells run in this call
  std::size_t skipped = 0;  // cells taken from previous results
};

// Recordings grouped by subject id, in order of first appearance.
inline std::map<std::string, std::vector<const EmgRecording*>> by_subject(
    const std::vector<EmgRecording>& recordings) {
  std::map<std::string, std::vector<const EmgRecording*>> out;
  for (const auto& r : recordings) out[r.subject_id].push_back(&r);
  return out;
}

inline std::vector<CellKey> enumerate_cells(const std::vector<std::string>& subjects,
                                            const SweepGrid& grid) {
  std::vector<CellKey> cells;
  for (const auto& s : subjects)
    for (int t : grid.windows)
      for (double f : grid.overlaps)
        for (int k : grid.kernels)
          for (auto seed : grid.seeds) cells.push_back({s, t, f, k, seed});
  std::sort(cells.begin(), cells.end());
  return cells;
}

inline SweepResult result_from_report(const CellKey& key, const training::TrainReport& rep) {
  SweepResult r;
  r.key = key;
  r.accuracy = rep.test_accuracy;
  r.f1_macro = rep.test_f1_macro;
  r.class_accuracy = eval::per_class_accuracy(rep.test_confusion);
  r.confusion = rep.test_confusion;
  r.curve = rep.epochs;
  r.seconds = rep.seconds;
  return r;
}

// Trains and evaluates one cell on the frames of its subject.
inline SweepResult run_cell(const windowing::FrameSet& frames, const CellKey& key,
                            const SweepOptions& opt) {
  training::TrainConfig cfg = opt.train;
  cfg.seed = cell_seed(key);
  const auto spec = nn::scaled_spec(key.window, key.kernel, opt.width_divisor);
  const auto [net, rep] = training::train(frames, spec, cfg);
  for (double v : {rep.test_accuracy, rep.test_f1_macro, rep.test_loss}) {
    if (!std::isfinite(v)) throw NumericalError("non-finite test metric");
  }
  return result_from_report(key, rep);
}

namespace detail {

struct GroupKey {
  std::string subject;
  int window;
  double overlap;
  friend auto operator<=>(const GroupKey&, const GroupKey&) = default;
};

// Frame sets shared by the cells of one (subject, window, overlap) group,
// built on first use and dropped when the group's last cell finishes.
class FrameCache {
 public:
  using Ptr = std::shared_ptr<const windowing::FrameSet>;

  FrameCache(const std::map<std::string, std::vector<const EmgRecording*>>& subjects,
             const std::vector<CellKey>& cells)
      : subjects_(subjects) {
    for (const auto& c : cells) ++remaining_[group(c)];
  }

  Ptr acquire(const CellKey& c) {
    const GroupKey g = group(c);
    std::shared_future<Ptr> fut;
    std::promise<Ptr> promise;
    bool build = false;
    {
      std::lock_guard lock(mutex_);
      auto it = live_.find(g);
      if (it == live_.end()) {
        fut = promise.get_future().share();
        live_.emplace(g, fut);
        build = true;
      } else {
        fut = it->second;
      }
    }
    if (build) {
      try {
        const auto& recs = subjects_.at(g.subject);
        promise.set_value(std::make_shared<const windowing::FrameSet>(windowing::segment_all(
            std::span<const EmgRecording* const>(recs), {g.window, g.overlap})));
      } catch (...) {
        promise.set_exception(std::current_exception());
      }
    }
    return fut.get();
  }

  void release(const CellKey& c) {
    const GroupKey g = group(c);
    std::lock_guard lock(mutex_);
    if (--remaining_[g] == 0) live_.erase(g);
  }

 private:
  static GroupKey group(const CellKey& c) { return {c.subject, c.window, c.overlap}; }

  const std::map<std::string, std::vector<const EmgRecording*>>& subjects_;
  std::mutex mutex_;
  std::map<GroupKey, std::shared_future<Ptr>> live_;
  std::map<GroupKey, int> remaining_;
};

}  // namespace detail

// Runs every grid cell not already present in `previous` (resume). The
// returned results contain the previous rows plus the new ones, sorted by key.
// A failing cell is recorded and the run continues.
inline SweepOutcome run_grid(const std::vector<EmgRecording>& recordings, const SweepGrid& grid,
                             const SweepOptions& opt,
                             const std::vector<SweepResult>& previous = {}) {
  grid.validate();
  opt.validate();
  const auto subjects = by_subject(recordings);
  std::vector<std::string> names;
  if (grid.subjects.empty()) {
    for (const auto& [name, recs] : subjects) names.push_back(name);
  } else {
    for (const auto& name : grid.subjects) {
      if (!subjects.contains(name)) throw DataError("sweep: no recordings for subject " + name);
      names.push_back(name);
    }
  }
  if (names.empty()) throw DataError("sweep: dataset has no recordings");
  for (const auto& n : names) {
    if (n.find_first_of(",\n") != std::string::npos) {
      throw DataError("sweep: subject id '" + n + "' contains a separator character");
    }
  }

  SweepOutcome out;
  std::map<CellKey, SweepResult> done;
  for (const auto& r : previous) done.emplace(r.key, r);
  std::vector<CellKey> pending;
  for (const auto& c : enumerate_cells(names, grid)) {
    if (done.contains(c)) {
      ++out.skipped;
    } else {
      pending.push_back(c);
    }
  }

  detail::FrameCache cache(subjects, pending);
  std::mutex mutex;
  std::atomic<std::size_t> next{0};
  std::size_t finished = 0;
  auto worker = [&] {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= pending.size()) return;
      const CellKey& key = pending[i];
      std::optional<SweepResult> result;
      std::optional<SweepFailure> failure;
      try {
        const auto frames = cache.acquire(key);
        result = run_cell(*frames, key, opt);
      } catch (const std::exception& e) {
        failure = SweepFailure{key, e.what()};
      }
      cache.release(key);
      std::lock_guard lock(mutex);
      ++finished;
      if (result) {
        done.emplace(key, *result);
        ++out.trained;
      } else {
        out.failures.push_back(*failure);
      }
      if (opt.on_cell) {
        opt.on_cell(result ? &*result : nullptr, failure ? &*failure : nullptr, finished,
                    pending.size());
      }
    }
  };
  const int threads = std::min<int>(opt.jobs, static_cast<int>(std::max<std::size_t>(pending.size(), 1)));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
  }

  for (auto& [key, r] : done) out.results.push_back(std::move(r));
  std::sort(out.failures.begin(), out.failures.end(),
            [](const SweepFailure& a, const SweepFailure& b) { return a.key < b.key; });
  return out;
}

// ---------------------------------------------------------------- files

inline const std::vector<std::string>& results_header() {
  static const std::vector<std::string> h = {
      "subject", "window", "overlap_frac", "kernel", "seed",   "accuracy", "f1_macro",
      "acc_NM",  "acc_WS", "acc_WP",       "acc_HO", "acc_HC", "seconds"};
  return h;
}

inline std::filesystem::path sibling(const std::filesystem::path& csv, const std::string& suffix) {
  return csv.parent_path() / (csv.stem().string() + suffix);
}

inline std::vector<std::string> key_fields(const CellKey& k) {
  return {k.subject, std::to_string(k.window), table::format_number(k.overlap),
          std::to_string(k.kernel), std::to_string(k.seed)};
}

inline CellKey parse_key(const std::vector<std::string>& f, const std::string& what) {
  if (f.size() < 5) throw FormatError(what + ": row too short for a cell key");
  return {f[0], static_cast<int>(table::parse_int(f[1], what)), table::parse_double(f[2], what),
          static_cast<int>(table::parse_int(f[3], what)), table::parse_uint(f[4], what)};
}

inline std::string percent(double fraction) { return table::format_fixed(100.0 * fraction, 2); }

// Metrics are written as percentages with two decimals.
inline std::string results_csv(const std::vector<SweepResult>& results, bool wall_clock) {
  std::string s = table::join(results_header()) + "\n";
  for (const auto& r : results) {
    auto f = key_fields(r.key);
    f.push_back(percent(r.accuracy));
    f.push_back(percent(r.f1_macro));
    for (double a : r.class_accuracy) f.push_back(percent(a));
    f.push_back(table::format_fixed(wall_clock ? r.seconds : 0.0, 2));
    s += table::join(f) + "\n";
  }
  return s;
}

inline std::string confusion_csv(const std::vector<SweepResult>& results) {
  std::vector<std::string> h = {"subject", "window", "overlap_frac", "kernel", "seed"};
  for (int t = 0; t < kNumClasses; ++t)
    for (int p = 0; p < kNumClasses; ++p)
      h.push_back(std::string(kClassNames[t]) + "_" + std::string(kClassNames[p]));
  std::string s = table::join(h) + "\n";
  for (const auto& r : results) {
    auto f = key_fields(r.key);
    for (const auto& row : r.confusion.counts)
      for (auto v : row) f.push_back(std::to_string(v));
    s += table::join(f) + "\n";
  }
  return s;
}

inline std::string curves_header() {
  return "subject,window,overlap_frac,kernel,seed,epoch,train_loss,train_accuracy,val_loss,"
         "val_accuracy";
}

inline std::string curve_rows(const CellKey& key, const std::vector<training::EpochStats>& curve) {
  std::string s;
  const std::string k = table::join(key_fields(key));
  for (std::size_t e = 0; e < curve.size(); ++e) {
    const auto& st = curve[e];
    s += k + "," + std::to_string(e + 1) + "," + table::format_number(st.train_loss) + "," +
         table::format_number(st.train_accuracy) + "," + table::format_number(st.val_loss) + "," +
         table::format_number(st.val_accuracy) + "\n";
  }
  return s;
}

inline std::string curves_csv(const std::vector<SweepResult>& results) {
  std::string s = curves_header() + "\n";
  for (const auto& r : results) s += curve_rows(r.key, r.curve);
  return s;
}

inline std::string failures_text(const std::vector<SweepFailure>& failures) {
  std::string s;
  for (const auto& f : failures) s += to_string(f.key) + ": " + f.message + "\n";
  return s;
}

inline std::string timing_csv(const std::vector<SweepResult>& results) {
  std::string s = "subject,window,overlap_frac,kernel,seed,seconds\n";
  for (const auto& r : results) {
    s += table::join(key_fields(r.key)) + "," + table::format_fixed(r.seconds, 3) + "\n";
  }
  return s;
}

// Writes to a temporary name and renames, so an interrupted run never leaves
// a half-written results file behind.
inline void write_atomically(const std::filesystem::path& path, const std::string& text) {
  auto tmp = path;
  tmp += ".tmp";
  emgcnn::detail::write_text(tmp, text);
  std::filesystem::rename(tmp, path);
}

inline void write_results(const std::filesystem::path& csv, const SweepOutcome& o,
                          bool wall_clock) {
  write_atomically(csv, results_csv(o.results, wall_clock));
  write_atomically(sibling(csv, ".confusion.csv"), confusion_csv(o.results));
  write_atomically(sibling(csv, ".curves.csv"), curves_csv(o.results));
  write_atomically(sibling(csv, ".timing.csv"), timing_csv(o.results));
  write_atomically(sibling(csv, ".failures.txt"), failures_text(o.failures));
}

// Reads a results CSV (and its confusion, curve and timing files when present)
// back into results. Metrics carry the two-decimal precision of the file.
inline std::vector<SweepResult> read_results(const std::filesystem::path& csv) {
  const auto t = table::read_table(csv);
  if (t.header != results_header()) throw FormatError(csv.string() + ": unexpected header");
  const std::string what = csv.string();
  std::map<CellKey, SweepResult> rows;
  for (const auto& f : t.rows) {
    SweepResult r;
    r.key = parse_key(f, what);
    r.accuracy = table::parse_double(f[5], what) / 100.0;
    r.f1_macro = table::parse_double(f[6], what) / 100.0;
    for (int c = 0; c < kNumClasses; ++c) {
      r.class_accuracy[static_cast<std::size_t>(c)] =
          table::parse_double(f[7 + static_cast<std::size_t>(c)], what) / 100.0;
    }
    r.seconds = table::parse_double(f[12], what);
    if (!rows.emplace(r.key, r).second) {
      throw FormatError(what + ": duplicate row for " + to_string(r.key));
    }
  }
  if (const auto p = sibling(csv, ".confusion.csv"); std::filesystem::exists(p)) {
    const auto ct = table::read_table(p);
    if (ct.header.size() != 5 + kNumClasses * kNumClasses) {
      throw FormatError(p.string() + ": unexpected header");
    }
    for (const auto& f : ct.rows) {
      auto it = rows.find(parse_key(f, p.string()));
      if (it == rows.end()) continue;
      for (int i = 0; i < kNumClasses * kNumClasses; ++i) {
        it->second.confusion.counts[static_cast<std::size_t>(i / kNumClasses)]
                                   [static_cast<std::size_t>(i % kNumClasses)] =
            table::parse_int(f[5 + static_cast<std::size_t>(i)], p.string());
      }
    }
  }
  if (const auto p = sibling(csv, ".curves.csv"); std::filesystem::exists(p)) {
    const auto ct = table::read_table(p);
    for (const auto& f : ct.rows) {
      auto it = rows.find(parse_key(f, p.string()));
      if (it == rows.end()) continue;
      training::EpochStats st;
      st.train_loss = table::parse_double(f.at(6), p.string());
      st.train_accuracy = table::parse_double(f.at(7), p.string());
      st.val_loss = table::parse_double(f.at(8), p.string());
      st.val_accuracy = table::parse_double(f.at(9), p.string());
      it->second.curve.push_back(st);
    }
  }
  if (const auto p = sibling(csv, ".timing.csv"); std::filesystem::exists(p)) {
    const auto ct = table::read_table(p);
    for (const auto& f : ct.rows) {
      auto it = rows.find(parse_key(f, p.string()));
      if (it != rows.end()) it->second.seconds = table::parse_double(f.at(5), p.string());
    }
  }
  std::vector<SweepResult> out;
  for (auto& [k, r] : rows) out.push_back(std::move(r));
  return out;
}

// Runs the grid against a results file: rows already in the file are kept and
// skipped, and all files are rewritten after every finished cell.
inline SweepOutcome run_grid_to_file(const std::vector<EmgRecording>& recordings,
                                     const SweepGrid& grid, SweepOptions opt,
                                     const std::filesystem::path& csv) {
  std::vector<SweepResult> previous;
  if (std::filesystem::exists(csv)) previous = read_results(csv);
  std::map<CellKey, SweepResult> partial;
  for (const auto& r : previous) partial.emplace(r.key, r);
  std::vector<SweepFailure> failures;
  auto user = opt.on_cell;
  opt.on_cell = [&](const SweepResult* r, const SweepFailure* f, std::size_t done,
                    std::size_t total) {
    if (r) partial.emplace(r->key, *r);
    if (f) failures.push_back(*f);
    SweepOutcome snapshot;
    for (const auto& [k, v] : partial) snapshot.results.push_back(v);
    snapshot.failures = failures;
    std::sort(snapshot.failures.begin(), snapshot.failures.end(),
              [](const SweepFailure& a, const SweepFailure& b) { return a.key < b.key; });
    write_results(csv, snapshot, opt.wall_clock_in_csv);
    if (user) user(r, f, done, total);
  };
  SweepOutcome out = run_grid(recordings, grid, opt, previous);
  write_results(csv, out, opt.wall_clock_in_csv);
  return out;
}

// ---------------------------------------------------------------- aggregates

enum class Metric { accuracy, f1_macro };

inline double metric_value(const SweepResult& r, Metric m) {
  return m == Metric::accuracy ? r.accuracy : r.f1_macro;
}

inline Metric parse_metric(const std::string& s) {
  if (s == "accuracy") return Metric::accuracy;
  if (s == "f1" || s == "f1_macro") return Metric::f1_macro;
  throw UsageError("unknown metric '" + s + "' (expected accuracy or f1_macro)");
}

// Mean metric in percent over all results matching `keep`; nullopt when none.
inline std::optional<double> mean_percent(const std::vector<SweepResult>& results, Metric m,
                                          const std::function<bool(const CellKey&)>& keep) {
  double sum = 0;
  std::size_t n = 0;
  for (const auto& r : results) {
    if (!keep(r.key)) continue;
    sum += metric_value(r, m);
    ++n;
  }
  if (n == 0) return std::nullopt;
  return 100.0 * sum / static_cast<double>(n);
}

// (subject, seed) pairs present for one (T, f, k).
inline std::set<std::pair<std::string, std::uint64_t>> replicates(
    const std::vector<SweepResult>& results, int window, double overlap, int kernel) {
  std::set<std::pair<std::string, std::uint64_t>> s;
  for (const auto& r : results) {
    if (r.key.window == window && r.key.overlap == overlap && r.key.kernel == kernel) {
      s.emplace(r.key.subject, r.key.seed);
    }
  }
  return s;
}

// Per (T, k): mean metric at f_hi minus mean at f_lo over subjects and seeds,
// in percentage points. Both levels must cover the same subjects and seeds.
inline std::map<std::pair<int, int>, double> improvement_delta(
    const std::vector<SweepResult>& results, Metric m, double f_hi = 0.75, double f_lo = 0.0) {
  std::set<std::pair<int, int>> tk;
  for (const auto& r : results) tk.emplace(r.key.window, r.key.kernel);
  if (tk.empty()) throw DataError("improvement_delta: no results");
  std::map<std::pair<int, int>, double> out;
  for (const auto& [t, k] : tk) {
    const auto hi = replicates(results, t, f_hi, k);
    const auto lo = replicates(results, t, f_lo, k);
    if (hi.empty() || lo.empty() || hi != lo) {
      throw DataError("improvement_delta: missing cells for T=" + std::to_string(t) +
                      " k=" + std::to_string(k) + " at overlap " + table::format_number(f_lo) +
                      " or " + table::format_number(f_hi));
    }
    auto at = [&](double f) {
      return *mean_percent(results, m, [&](const CellKey& c) {
        return c.window == t && c.kernel == k && c.overlap == f;
      });
    };
    out[{t, k}] = at(f_hi) - at(f_lo);
  }
  return out;
}

// Per T: mean metric in percent for each kernel, averaged over subjects, seeds
// and (unless `overlap` is given) overlaps. Every T must cover every kernel.
inline std::map<int, std::map<int, double>> kernel_trend(const std::vector<SweepResult>& results,
                                                         Metric m,
                                                         std::optional<double> overlap = {}) {
  std::set<int> windows, kernels;
  for (const auto& r : results) {
    if (overlap && r.key.overlap != *overlap) continue;
    windows.insert(r.key.window);
    kernels.insert(r.key.kernel);
  }
  if (windows.empty()) throw DataError("kernel_trend: no results");
  std::map<int, std::map<int, double>> out;
  for (int t : windows) {
    for (int k : kernels) {
      const auto v = mean_percent(results, m, [&](const CellKey& c) {
        return c.window == t && c.kernel == k && (!overlap || c.overlap == *overlap);
      });
      if (!v) {
        throw DataError("kernel_trend: missing cells for T=" + std::to_string(t) +
                        " k=" + std::to_string(k));
      }
      out[t][k] = *v;
    }
  }
  return out;
}

}  // namespace emgcnn::sweep
