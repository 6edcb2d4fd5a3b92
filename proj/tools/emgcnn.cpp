// emgcnn command-line entry point: synth, preprocess, segment, train, sweep
// and report subcommands over the on-disk dataset, frame, model and CSV
// formats. Every command writes a run manifest next to its output.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "emgcnn/dataio.hpp"
#include "emgcnn/dsp.hpp"
#include "emgcnn/frame_io.hpp"
#include "emgcnn/model_io.hpp"
#include "emgcnn/report.hpp"
#include "emgcnn/sweep.hpp"
#include "emgcnn/synth.hpp"

namespace fs = std::filesystem;
using namespace emgcnn;

namespace {

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// Records what a command was asked to do. Written once before the work starts
// and again with the finish time and outcome.
class RunManifest {
 public:
  RunManifest(fs::path path, const CLI::App& cmd, std::uint64_t seed, nlohmann::json inputs,
              nlohmann::json outputs)
      : path_(std::move(path)) {
    nlohmann::json config = nlohmann::json::object();
    for (const CLI::Option* opt : cmd.get_options()) {
      if (opt->get_lnames().empty()) continue;
      const std::string name = opt->get_lnames().front();
      if (name == "help") continue;
      if (opt->count() > 0) {
        const auto res = opt->reduced_results();
        config[name] = res.size() == 1 ? nlohmann::json(res.front()) : nlohmann::json(res);
        if (opt->get_expected_min() == 0) config[name] = true;
      } else {
        config[name] = opt->get_expected_min() == 0 ? nlohmann::json(false)
                                                    : nlohmann::json(opt->get_default_str());
      }
    }
    j_ = {{"tool", "emgcnn"},         {"version", std::string(kVersion)},
          {"command", cmd.get_name()}, {"config", config},
          {"master_seed", seed},       {"inputs", std::move(inputs)},
          {"outputs", std::move(outputs)}, {"started", utc_now()},
          {"finished", nullptr},       {"status", "running"}};
    write();
  }

  void finish(nlohmann::json extra = nlohmann::json::object()) {
    j_["finished"] = utc_now();
    j_["status"] = "ok";
    for (auto& [k, v] : extra.items()) j_[k] = v;
    write();
  }

 private:
  void write() const {
    if (!path_.parent_path().empty()) fs::create_directories(path_.parent_path());
    emgcnn::detail::write_text(path_, j_.dump(2) + "\n");
  }

  fs::path path_;
  nlohmann::json j_;
};

fs::path manifest_for_file(const fs::path& out) {
  return out.parent_path() / (out.stem().string() + ".manifest.json");
}

std::vector<EmgRecording> load_filtered(const fs::path& dir, const std::vector<std::string>& subjects,
                                        bool preprocess) {
  auto recs = dataio::load_dataset(dir);
  if (!subjects.empty()) {
    std::vector<EmgRecording> kept;
    for (auto& r : recs) {
      if (std::find(subjects.begin(), subjects.end(), r.subject_id) != subjects.end()) {
        kept.push_back(std::move(r));
      }
    }
    recs = std::move(kept);
    if (recs.empty()) throw DataError("no recordings for the requested subjects in " + dir.string());
  }
  if (preprocess) {
    for (auto& r : recs) r = dsp::preprocess(r);
  }
  return recs;
}

void print_metrics(const training::TrainReport& rep) {
  std::cout << "train frames " << rep.train_frames << ", test frames " << rep.test_frames << "\n"
            << "test accuracy " << sweep::percent(rep.test_accuracy) << "%, macro-F1 "
            << sweep::percent(rep.test_f1_macro) << "%, train accuracy "
            << sweep::percent(rep.train_accuracy) << "%\n";
  const auto pc = eval::per_class_accuracy(rep.test_confusion);
  for (int c = 0; c < kNumClasses; ++c) {
    std::cout << "  " << kClassNames[c] << " " << sweep::percent(pc[static_cast<std::size_t>(c)])
              << "%\n";
  }
}

// Applies `--config FILE` (plain key=value lines, '#' comments) by appending
// `--key value` for every key not given explicitly on the command line.
std::vector<std::string> merge_config(const CLI::App& app, std::vector<std::string> args) {
  std::optional<std::string> file;
  for (std::size_t i = 1; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) {
      file = args[i + 1];
    } else if (args[i].rfind("--config=", 0) == 0) {
      file = args[i].substr(9);
    }
  }
  if (!file) return args;
  if (args.size() < 2) throw UsageError("--config needs a subcommand");
  const CLI::App* sub = nullptr;
  for (const CLI::App* s : app.get_subcommands([](const CLI::App*) { return true; })) {
    if (s->get_name() == args[1]) sub = s;
  }
  if (sub == nullptr) throw UsageError("--config needs a subcommand first");
  std::ifstream in(*file);
  if (!in) throw UsageError("cannot read config file " + *file);
  auto explicit_flag = [&](const std::string& key) {
    for (const auto& a : args) {
      if (a == "--" + key || a.rfind("--" + key + "=", 0) == 0) return true;
    }
    return false;
  };
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw UsageError(*file + ":" + std::to_string(line_no) + ": expected key=value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const CLI::Option* opt = sub->get_option_no_throw("--" + key);
    if (opt == nullptr || key == "config") {
      throw UsageError(*file + ":" + std::to_string(line_no) + ": unknown key '" + key +
                       "' for " + sub->get_name());
    }
    if (explicit_flag(key)) continue;
    if (opt->get_expected_min() == 0) {
      if (value == "true" || value == "1") args.push_back("--" + key);
    } else {
      args.push_back("--" + key);
      args.push_back(value);
    }
  }
  return args;
}

struct SynthArgs {
  synth::SynthConfig cfg;
  std::string scale = "full";
  fs::path out;
};

struct PreprocessArgs {
  fs::path in, out;
  dsp::PreprocessOptions opt;
};

struct SegmentArgs {
  fs::path in, out;
  int window = 150;
  double overlap = 0.75;
  std::vector<std::string> subjects;
  bool preprocess = false;
};

struct TrainArgs {
  fs::path in, frames, model, curves;
  std::vector<std::string> subjects;
  int window = 150;
  double overlap = 0.75;
  int kernel = 3;
  int width_divisor = 1;
  bool preprocess = false;
  training::TrainConfig cfg;
};

struct SweepArgs {
  fs::path in, out;
  sweep::SweepGrid grid;
  sweep::SweepOptions opt;
  bool preprocess = false;
  bool quiet = false;
};

struct ReportArgs {
  fs::path csv, plots;
  std::vector<fs::path> curves;
  std::size_t max_curves = 12;
};

void add_train_config(CLI::App* c, training::TrainConfig& cfg) {
  c->add_option("--epochs", cfg.epochs, "Training epochs")->capture_default_str();
  c->add_option("--lr", cfg.learning_rate, "Adam learning rate")->capture_default_str();
  c->add_option("--batch", cfg.batch_size, "Mini-batch size")->capture_default_str();
  c->add_option("--train-fraction", cfg.train_fraction, "Per-class training share")
      ->capture_default_str();
}

int run_synth(const CLI::App& cmd, SynthArgs& a) {
  a.cfg.scale = a.scale == "small" ? synth::Scale::small : synth::Scale::full;
  a.cfg.validate();
  RunManifest manifest(a.out / "run_manifest.json", cmd, a.cfg.seed, nlohmann::json::object(),
                       {{"dataset", a.out.string()}});
  const auto recs = synth::generate(a.cfg);
  dataio::save_dataset(recs, a.out);
  const double sep = synth::separability_check(recs);
  std::cout << "wrote " << recs.size() << " recordings to " << a.out.string()
            << "; channel-RMS nearest-centroid accuracy " << table::format_fixed(sep, 4) << "\n";
  manifest.finish({{"separability", sep}});
  return 0;
}

int run_preprocess(const CLI::App& cmd, PreprocessArgs& a) {
  RunManifest manifest(a.out / "run_manifest.json", cmd, 0, {{"dataset", a.in.string()}},
                       {{"dataset", a.out.string()}});
  auto recs = dataio::load_dataset(a.in);
  for (auto& r : recs) r = dsp::preprocess(r, a.opt);
  dataio::save_dataset(recs, a.out);
  std::cout << "preprocessed " << recs.size() << " recordings into " << a.out.string() << "\n";
  manifest.finish();
  return 0;
}

int run_segment(const CLI::App& cmd, SegmentArgs& a) {
  const windowing::WindowParams p{a.window, a.overlap};
  p.validate();
  RunManifest manifest(manifest_for_file(a.out), cmd, 0, {{"dataset", a.in.string()}},
                       {{"frames", a.out.string()}});
  const auto recs = load_filtered(a.in, a.subjects, a.preprocess);
  const auto frames = windowing::segment_all(recs, p);
  if (!a.out.parent_path().empty()) fs::create_directories(a.out.parent_path());
  dataio::save_frames(frames, a.out);
  std::cout << "wrote " << frames.size() << " frames of " << frames.height << "x" << a.window
            << " (overlap " << p.overlap() << ", stride " << p.stride() << ") to "
            << a.out.string() << "\n";
  manifest.finish({{"num_frames", frames.size()}});
  return 0;
}

int run_train(const CLI::App& cmd, TrainArgs& a) {
  if (a.in.empty() == a.frames.empty()) throw UsageError("train: give exactly one of --in or --frames");
  if (a.curves.empty()) a.curves = a.model.parent_path() / (a.model.stem().string() + ".curves.csv");
  a.cfg.validate();
  RunManifest manifest(manifest_for_file(a.model), cmd, a.cfg.seed,
                       {{"dataset", a.in.string()}, {"frames", a.frames.string()}},
                       {{"model", a.model.string()}, {"curves", a.curves.string()}});
  windowing::FrameSet frames;
  if (!a.frames.empty()) {
    frames = dataio::load_frames(a.frames);
  } else {
    const auto recs = load_filtered(a.in, a.subjects, a.preprocess);
    frames = windowing::segment_all(recs, {a.window, a.overlap});
  }
  const auto spec = nn::scaled_spec(frames.params.window_len, a.kernel, a.width_divisor);
  auto [net, rep] = training::train(frames, spec, a.cfg);
  if (!a.model.parent_path().empty()) fs::create_directories(a.model.parent_path());
  dataio::save_model(net, a.model);
  const std::string subject = a.subjects.size() == 1 ? a.subjects.front() : "all";
  const sweep::CellKey key{subject, frames.params.window_len, frames.params.overlap_fraction,
                           a.kernel, a.cfg.seed};
  emgcnn::detail::write_text(a.curves,
                             sweep::curves_header() + "\n" + sweep::curve_rows(key, rep.epochs));
  print_metrics(rep);
  manifest.finish({{"test_accuracy", rep.test_accuracy},
                   {"test_f1_macro", rep.test_f1_macro},
                   {"seconds", rep.seconds}});
  return 0;
}

int run_sweep(const CLI::App& cmd, SweepArgs& a) {
  a.grid.validate();
  a.opt.validate();
  RunManifest manifest(manifest_for_file(a.out), cmd, 0, {{"dataset", a.in.string()}},
                       {{"results", a.out.string()}});
  const auto recs = load_filtered(a.in, a.grid.subjects, a.preprocess);
  if (!a.quiet) {
    a.opt.on_cell = [](const sweep::SweepResult* r, const sweep::SweepFailure* f, std::size_t done,
                       std::size_t total) {
      std::cerr << "[" << done << "/" << total << "] ";
      if (r) {
        std::cerr << to_string(r->key) << " acc " << sweep::percent(r->accuracy) << " F1 "
                  << sweep::percent(r->f1_macro) << " (" << table::format_fixed(r->seconds, 1)
                  << " s)\n";
      } else {
        std::cerr << to_string(f->key) << " FAILED: " << f->message << "\n";
      }
    };
  }
  if (!a.out.parent_path().empty()) fs::create_directories(a.out.parent_path());
  const auto out = sweep::run_grid_to_file(recs, a.grid, a.opt, a.out);
  std::cout << "trained " << out.trained << " cells, kept " << out.skipped << " from "
            << a.out.string() << ", " << out.failures.size() << " failed; " << out.results.size()
            << " rows\n";
  manifest.finish({{"trained", out.trained},
                   {"skipped", out.skipped},
                   {"failures", out.failures.size()},
                   {"rows", out.results.size()}});
  return out.failures.empty() ? 0 : 3;
}

int run_report(const CLI::App& cmd, ReportArgs& a) {
  if (a.csv.empty() && a.curves.empty()) throw UsageError("report: give --csv and/or --curves");
  nlohmann::json inputs = {{"results", a.csv.string()}};
  for (const auto& c : a.curves) inputs["curves"].push_back(c.string());
  RunManifest manifest(a.plots / "run_manifest.json", cmd, 0, inputs, {{"plots", a.plots.string()}});
  const auto files = report::render_from_files(a.csv, a.curves, a.plots, a.max_curves);
  for (const auto& p : files.written) std::cout << "wrote " << p.string() << "\n";
  for (const auto& n : files.notes) std::cout << "note: " << n << "\n";
  manifest.finish({{"figures", files.written.size()}});
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sEMG frame CNN toolkit: synthetic data, preprocessing, segmentation, training, "
               "window/overlap/kernel sweeps and SVG reports"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);
  std::string config_file;
  auto add_config = [&](CLI::App* c) {
    c->add_option("--config", config_file,
                  "key=value file using the long flag names; explicit flags take precedence");
  };

  SynthArgs synth_args;
  auto* c_synth = app.add_subcommand("synth", "Generate a seeded synthetic sEMG dataset");
  c_synth->add_option("--seed", synth_args.cfg.seed, "Master seed")->capture_default_str();
  c_synth->add_option("--scale", synth_args.scale, "full or small (1 session, 3 trials, 512 Hz)")
      ->check(CLI::IsMember({"full", "small"}))
      ->capture_default_str();
  c_synth->add_option("--subjects", synth_args.cfg.subjects)->capture_default_str();
  c_synth->add_option("--sessions", synth_args.cfg.sessions)->capture_default_str();
  c_synth->add_option("--trials", synth_args.cfg.trials_per_active_class,
                      "Trials per active class per session")
      ->capture_default_str();
  c_synth->add_option("--trial-seconds", synth_args.cfg.trial_duration)->capture_default_str();
  c_synth->add_option("--rest-seconds", synth_args.cfg.rest_duration)->capture_default_str();
  c_synth->add_option("--rate", synth_args.cfg.sample_rate, "Sample rate in Hz")
      ->capture_default_str();
  c_synth->add_option("--channels", synth_args.cfg.channels)->capture_default_str();
  c_synth->add_option("--snr", synth_args.cfg.snr, "RMS(signal)/RMS(noise) while active")
      ->capture_default_str();
  c_synth->add_option("--out", synth_args.out, "Dataset directory")->required();
  add_config(c_synth);

  PreprocessArgs pre_args;
  auto* c_pre = app.add_subcommand("preprocess", "Notch, band-pass and class-wise z-score");
  c_pre->add_option("--in", pre_args.in, "Input dataset directory")->required();
  c_pre->add_option("--out", pre_args.out, "Output dataset directory")->required();
  c_pre->add_option("--notch", pre_args.opt.notch_hz, "Notch frequency in Hz")->capture_default_str();
  c_pre->add_option("--notch-q", pre_args.opt.notch_q)->capture_default_str();
  c_pre->add_option("--band-lo", pre_args.opt.band_lo_hz, "Band-pass lower edge in Hz")
      ->capture_default_str();
  c_pre->add_option("--band-hi", pre_args.opt.band_hi_hz,
                    "Band-pass upper edge in Hz (0.45*fs when at or above Nyquist)")
      ->capture_default_str();
  c_pre->add_option("--band-order", pre_args.opt.band_order, "Butterworth prototype order")
      ->capture_default_str();
  add_config(c_pre);

  SegmentArgs seg_args;
  auto* c_seg = app.add_subcommand("segment", "Cut recordings into K x T frames");
  c_seg->add_option("--in", seg_args.in, "Dataset directory")->required();
  c_seg->add_option("--out", seg_args.out, "Frame dump file")->required();
  c_seg->add_option("--window", seg_args.window, "Window length T in samples")->capture_default_str();
  c_seg->add_option("--overlap", seg_args.overlap, "Overlap fraction f in [0, 1)")
      ->capture_default_str();
  c_seg->add_option("--subjects", seg_args.subjects, "Only these subject ids")->delimiter(',');
  c_seg->add_flag("--preprocess", seg_args.preprocess, "Preprocess recordings in memory first");
  add_config(c_seg);

  TrainArgs train_args;
  auto* c_train = app.add_subcommand("train", "Train one network and save it");
  c_train->add_option("--in", train_args.in, "Dataset directory (segmented on the fly)");
  c_train->add_option("--frames", train_args.frames, "Frame dump from `segment`");
  c_train->add_option("--subjects", train_args.subjects, "Only these subject ids")->delimiter(',');
  c_train->add_option("--window", train_args.window)->capture_default_str();
  c_train->add_option("--overlap", train_args.overlap)->capture_default_str();
  c_train->add_option("--kernel", train_args.kernel, "Odd kernel size")->capture_default_str();
  c_train->add_option("--width-divisor", train_args.width_divisor,
                      "Divide every layer width by this (1 = full network)")
      ->capture_default_str();
  c_train->add_option("--seed", train_args.cfg.seed)->capture_default_str();
  add_train_config(c_train, train_args.cfg);
  c_train->add_flag("--preprocess", train_args.preprocess, "Preprocess recordings in memory first");
  c_train->add_option("--model", train_args.model, "Output model file")->required();
  c_train->add_option("--curves", train_args.curves, "Per-epoch curve CSV (default next to model)");
  add_config(c_train);

  SweepArgs sweep_args;
  auto* c_sweep = app.add_subcommand("sweep", "Run the window/overlap/kernel grid per subject");
  c_sweep->add_option("--in", sweep_args.in, "Preprocessed dataset directory")->required();
  c_sweep->add_option("--out", sweep_args.out, "Results CSV (resumed when it exists)")->required();
  c_sweep->add_option("--windows", sweep_args.grid.windows)->delimiter(',')->capture_default_str();
  c_sweep->add_option("--overlaps", sweep_args.grid.overlaps)->delimiter(',')->capture_default_str();
  c_sweep->add_option("--kernels", sweep_args.grid.kernels)->delimiter(',')->capture_default_str();
  c_sweep->add_option("--seeds", sweep_args.grid.seeds, "Master seed values, one replicate each")
      ->delimiter(',')
      ->capture_default_str();
  c_sweep->add_option("--subjects", sweep_args.grid.subjects, "Subject ids (default: all)")
      ->delimiter(',');
  c_sweep->add_option("--width-divisor", sweep_args.opt.width_divisor,
                      "Divide every layer width by this (1 = full network)")
      ->capture_default_str();
  add_train_config(c_sweep, sweep_args.opt.train);
  c_sweep->add_option("--jobs", sweep_args.opt.jobs, "Cells trained in parallel")
      ->capture_default_str();
  c_sweep->add_flag("--wall-clock", sweep_args.opt.wall_clock_in_csv,
                    "Fill the seconds column (otherwise 0 so reruns are byte-identical)");
  c_sweep->add_flag("--preprocess", sweep_args.preprocess, "Preprocess recordings in memory first");
  c_sweep->add_flag("--quiet", sweep_args.quiet, "No per-cell progress on stderr");
  add_config(c_sweep);

  ReportArgs rep_args;
  auto* c_rep = app.add_subcommand("report", "Render SVG figures from result CSVs");
  c_rep->add_option("--csv", rep_args.csv, "Sweep results CSV");
  c_rep->add_option("--curves", rep_args.curves, "Extra per-epoch curve CSVs")->delimiter(',');
  c_rep->add_option("--plots", rep_args.plots, "Output directory")->required();
  c_rep->add_option("--max-curves", rep_args.max_curves, "Learning-curve figures to draw")
      ->capture_default_str();
  add_config(c_rep);

  try {
    std::vector<std::string> args(argv, argv + argc);
    args = merge_config(app, std::move(args));
    std::vector<char*> ptrs;
    for (auto& s : args) ptrs.push_back(s.data());
    try {
      app.parse(static_cast<int>(ptrs.size()), ptrs.data());
    } catch (const CLI::ParseError& e) {
      // --help and --version exit 0; every other parse failure is a usage error.
      return app.exit(e) == 0 ? 0 : 1;
    }
    if (c_synth->parsed()) return run_synth(*c_synth, synth_args);
    if (c_pre->parsed()) return run_preprocess(*c_pre, pre_args);
    if (c_seg->parsed()) return run_segment(*c_seg, seg_args);
    if (c_train->parsed()) return run_train(*c_train, train_args);
    if (c_sweep->parsed()) return run_sweep(*c_sweep, sweep_args);
    if (c_rep->parsed()) return run_report(*c_rep, rep_args);
    return 1;
  } catch (const UsageError& e) {
    std::cerr << "emgcnn: usage error: " << e.what() << "\n";
    return 1;
  } catch (const NumericalError& e) {
    std::cerr << "emgcnn: numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const DataError& e) {
    std::cerr << "emgcnn: data error: " << e.what() << "\n";
    return 2;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "emgcnn: data error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "emgcnn: error: " << e.what() << "\n";
    return 2;
  }
}
