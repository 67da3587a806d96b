#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <sstream>

#include "metarecon/checkpoint.hpp"
#include "metarecon/errors.hpp"
#include "metarecon/physics.hpp"
#include "metarecon/trainer.hpp"
#include "metarecon/unroll.hpp"
#include "metarecon/verify.hpp"
#include "png_preview.hpp"

namespace metarecon::cli {

namespace fs = std::filesystem;

namespace {

std::string numbered(const std::string& prefix, std::size_t n, const std::string& suffix) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%03zu", n);
  return prefix + buf + suffix;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

TaskDataset read_checked(const fs::path& path, const RunConfig& cfg) {
  if (!fs::exists(path)) {
    throw MissingFileError("dataset " + path.string() + " not found (run `metarecon synth` first)");
  }
  TaskDataset ds = read_dataset(path);
  if (ds.coils() != cfg.coils || ds.height() != cfg.image_height || ds.width() != cfg.image_width) {
    throw ConfigError("dataset " + path.string() + " is " + std::to_string(ds.coils()) + " coils of " +
                      std::to_string(ds.height()) + "x" + std::to_string(ds.width()) +
                      ", which does not match the config");
  }
  return ds;
}

ParamStore load_model(const RunConfig& cfg, const fs::path& checkpoint) {
  if (!fs::exists(checkpoint)) throw MissingFileError("checkpoint " + checkpoint.string() + " not found");
  ParamStore store = zero_params(cfg.model_spec());
  load_params(store, read_checkpoint(checkpoint));
  return store;
}

std::vector<TaskDataset> split(const std::vector<TaskSplit>& splits, bool test) {
  std::vector<TaskDataset> out;
  for (const TaskSplit& s : splits) out.push_back(test ? s.test : s.train);
  return out;
}

// Final images per task: x_hat for MTML, rss(x_T) for STL.
ReconOutput infer(const RunConfig& cfg, const std::vector<TaskInput>& inputs,
                  const ParamStore& store) {
  NoGradGuard off;
  return cfg.meta() ? reconstruct(inputs, store, cfg.recon_config())
                    : reconstruct_stl(inputs, store, cfg.recon_config());
}

std::string method_name(const RunConfig& cfg) { return cfg.meta() ? "MTML" : "STL"; }

int method_rank(const std::string& m) {
  if (m == "Zero-filled") return 0;
  if (m == "STL") return 1;
  return 2;
}

std::string format_ar(double ar) {
  std::ostringstream s;
  s << ar;
  return s.str();
}

}  // namespace

std::vector<std::string> task_names(const RunConfig& cfg) {
  const PhantomSpec spec = PhantomSpec::standard(cfg.image_height, cfg.image_width, cfg.seed);
  std::vector<std::string> names;
  for (std::size_t i = 0; i < cfg.tasks; ++i) names.push_back(spec.contrasts.at(i).name);
  return names;
}

fs::path dataset_path(const RunConfig& cfg, const std::string& task, bool test) {
  return cfg.dataset_dir() / (task + (test ? "_test.mrds" : "_train.mrds"));
}

void synth_command(const RunConfig& cfg, std::ostream& out) {
  cfg.validate();
  const auto splits = synthesize(cfg.synth_config());
  ensure_dir(cfg.dataset_dir());
  for (std::size_t i = 0; i < cfg.tasks; ++i) {
    const TaskSplit& s = splits[i];
    write_dataset(s.train, dataset_path(cfg, s.train.name, false));
    write_dataset(s.test, dataset_path(cfg, s.test.name, true));
    out << "wrote " << s.train.name << ": " << s.train.slices.size() << " train + "
        << s.test.slices.size() << " test slices, sampled fraction "
        << s.train.slices.front().mask.sampled_fraction() << '\n';
  }
  out << "datasets in " << cfg.dataset_dir().string() << '\n';
}

std::vector<TaskSplit> load_datasets(const RunConfig& cfg) {
  std::vector<TaskSplit> splits;
  for (const std::string& name : task_names(cfg)) {
    splits.push_back({read_checked(dataset_path(cfg, name, false), cfg),
                      read_checked(dataset_path(cfg, name, true), cfg)});
  }
  return splits;
}

TrainSummary train_command(const RunConfig& cfg, std::ostream& out) {
  cfg.validate();
  const auto splits = load_datasets(cfg);
  const auto train = split(splits, false);
  const fs::path run_dir(cfg.out_dir);
  ensure_dir(run_dir / "checkpoints");
  save_config(cfg, run_dir / "config.json");
  const fs::path metrics = run_dir / "metrics.csv";
  fs::remove(metrics);

  const ModelSpec spec = cfg.model_spec();
  const TrainConfig tc = cfg.train_config();
  const ReconConfig recon = cfg.recon_config();
  const auto names = task_names(cfg);
  ParamStore store = init_params(spec, cfg.seed);
  OptimizerState opt = OptimizerState::for_store(store);
  std::mt19937_64 rng(cfg.seed);

  TrainSummary summary;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const EpochResult r = cfg.meta() ? meta_train_epoch(train, store, opt, tc, recon, rng)
                                     : stl_train_epoch(train, store, opt, tc, recon, rng);
    append_metrics_csv(metrics, epoch, names, r);
    std::vector<Record> records = param_records(store);
    for (Record& rec : opt.records(store)) records.push_back(std::move(rec));
    summary.last_checkpoint = run_dir / "checkpoints" / numbered("epoch_", epoch, ".mrck");
    write_checkpoint(summary.last_checkpoint, records);
    summary.epoch_losses.push_back(r.total);
    out << "epoch " << epoch << '/' << cfg.epochs << "  loss " << r.total;
    for (std::size_t i = 0; i < names.size(); ++i) {
      out << "  " << names[i] << ' ' << std::fixed << std::setprecision(2) << r.tasks[i].report.psnr
          << "dB" << std::defaultfloat << std::setprecision(6);
    }
    out << '\n';
  }
  return summary;
}

fs::path latest_checkpoint(const fs::path& run_dir) {
  const fs::path dir = run_dir / "checkpoints";
  if (!fs::is_directory(dir)) throw MissingFileError("no checkpoints under " + run_dir.string());
  fs::path best;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const fs::path p = entry.path();
    if (p.extension() != ".mrck") continue;
    if (best.empty() || p.filename().string() > best.filename().string()) best = p;
  }
  if (best.empty()) throw MissingFileError("no checkpoints under " + dir.string());
  return best;
}

void reconstruct_command(const RunConfig& cfg, const fs::path& checkpoint, std::ostream& out) {
  cfg.validate();
  const auto test = split(load_datasets(cfg), true);
  const ParamStore store = load_model(cfg, checkpoint);
  const fs::path dir = fs::path(cfg.out_dir) / "recon";
  ensure_dir(dir);
  std::ofstream csv(dir / "metrics.csv");
  if (!csv) throw IoError("cannot write " + (dir / "metrics.csv").string());
  csv << "task,slice,psnr,ssim,nmse\n";
  csv.precision(17);

  for (std::size_t s = 0; s < test.front().slices.size(); ++s) {
    const auto inputs = slice_inputs(test, s);
    const auto targets = slice_targets(test, s);
    const ReconOutput rec = infer(cfg, inputs, store);
    for (std::size_t i = 0; i < test.size(); ++i) {
      const Tensor& image = rec.x_hat[i];
      const MetricReport m = evaluate(image, targets[i]);
      TaskDataset single{test[i].name, test[i].ar, test[i].noise_sigma, 0,
                         {Slice{rec.x_T[i], inputs[i].kspace, inputs[i].mask, image}}};
      const std::string stem = numbered(test[i].name + "_slice", s, "");
      write_dataset(single, dir / (stem + ".mrds"));
      const auto peak = std::max_element(targets[i].data().begin(), targets[i].data().end());
      write_png(image, *peak, dir / (stem + ".png"));
      csv << test[i].name << ',' << s << ',' << m.psnr << ',' << m.ssim << ',' << m.nmse << '\n';
      out << test[i].name << " slice " << s << ": PSNR " << m.psnr << " SSIM " << m.ssim
          << " NMSE " << m.nmse << '\n';
    }
  }
  if (!csv) throw IoError("write failed: " + (dir / "metrics.csv").string());
}

std::vector<EvalRow> evaluate_run(const RunConfig& cfg, const fs::path& checkpoint) {
  cfg.validate();
  const auto test = split(load_datasets(cfg), true);
  const ParamStore store = load_model(cfg, checkpoint);
  EvalRow zf{"Zero-filled", cfg.ar, {}, {}};
  EvalRow model{method_name(cfg), cfg.ar, {}, {}};
  for (const TaskDataset& ds : test) {
    zf.tasks.push_back(ds.name);
    model.tasks.push_back(ds.name);
  }
  zf.reports.resize(test.size());
  model.reports.resize(test.size());
  const std::size_t n = test.front().slices.size();
  const auto accumulate = [n](MetricReport& acc, const MetricReport& m) {
    acc.psnr += m.psnr / static_cast<double>(n);
    acc.ssim += m.ssim / static_cast<double>(n);
    acc.nmse += m.nmse / static_cast<double>(n);
  };
  for (std::size_t s = 0; s < n; ++s) {
    const auto inputs = slice_inputs(test, s);
    const auto targets = slice_targets(test, s);
    const ReconOutput rec = infer(cfg, inputs, store);
    for (std::size_t i = 0; i < test.size(); ++i) {
      accumulate(model.reports[i], evaluate(rec.x_hat[i], targets[i]));
      accumulate(zf.reports[i], evaluate(rss(zero_filled(inputs[i].kspace, inputs[i].mask)), targets[i]));
    }
  }
  return {zf, model};
}

void print_table(std::vector<EvalRow> rows, std::ostream& out) {
  if (rows.empty()) return;
  std::stable_sort(rows.begin(), rows.end(), [](const EvalRow& a, const EvalRow& b) {
    if (a.ar != b.ar) return a.ar < b.ar;
    return method_rank(a.method) < method_rank(b.method);
  });
  // The zero-filled baseline depends only on the data; keep one per AR.
  rows.erase(std::unique(rows.begin(), rows.end(),
                         [](const EvalRow& a, const EvalRow& b) {
                           return a.ar == b.ar && a.method == b.method &&
                                  a.method == "Zero-filled";
                         }),
             rows.end());
  const int cell = 22;
  out << std::left << std::setw(4) << "AR" << std::setw(13) << "Method";
  for (const std::string& t : rows.front().tasks) out << std::setw(cell) << t;
  out << '\n' << std::setw(17) << "";
  for (std::size_t i = 0; i < rows.front().tasks.size(); ++i) out << std::setw(cell) << "PSNR/SSIM/NMSE";
  out << '\n';
  for (const EvalRow& r : rows) {
    out << std::setw(4) << format_ar(r.ar) << std::setw(13) << r.method;
    for (const MetricReport& m : r.reports) {
      std::ostringstream c;
      c << std::fixed << std::setprecision(2) << m.psnr << '/' << std::setprecision(4) << m.ssim
        << '/' << m.nmse;
      out << std::setw(cell) << c.str();
    }
    out << '\n';
  }
  out << std::right;
}

void write_eval_csv(const std::vector<EvalRow>& rows, const fs::path& path) {
  std::ofstream csv(path);
  if (!csv) throw IoError("cannot write " + path.string());
  csv << "method,ar,task,psnr,ssim,nmse\n";
  csv.precision(17);
  for (const EvalRow& r : rows) {
    for (std::size_t i = 0; i < r.tasks.size(); ++i) {
      csv << r.method << ',' << r.ar << ',' << r.tasks[i] << ',' << r.reports[i].psnr << ','
          << r.reports[i].ssim << ',' << r.reports[i].nmse << '\n';
    }
  }
  if (!csv) throw IoError("write failed: " + path.string());
}

GradcheckSummary gradcheck_command(const RunConfig& cfg, std::size_t coordinates,
                                   std::ostream& out) {
  RunConfig tiny = cfg;
  tiny.mode = "mtml";
  tiny.tasks = 2;
  tiny.coils = 2;
  tiny.image_height = 16;
  tiny.image_width = 16;
  tiny.outer_iterations = 1;
  tiny.inner_steps = 1;
  tiny.train_slices = 1;
  tiny.test_slices = 1;
  tiny.batch = 1;
  tiny.acs_lines = 0;
  tiny.base_lr.clear();
  tiny.validate();

  const auto splits = synthesize(tiny.synth_config());
  const std::vector<TaskDataset> data{splits[0].train, splits[1].train};
  const ModelSpec spec = tiny.model_spec();
  const TrainConfig tc = tiny.train_config();
  const ParamStore store = jitter_biases(init_params(spec, tiny.seed), 0.1, tiny.seed + 1);
  const StoreLoss loss = [&](const ParamStore& s) {
    return total_loss(batch_losses(data, s, tiny.recon_config(), tc, 0));
  };
  const auto coords = sample_coordinates(store, coordinates, tiny.seed + 2);
  const GradientReport report = check_gradient(store, loss, coords);

  GradcheckSummary summary{report.max_error, report.checks.size(), report.max_error < 1e-5, {}};
  std::map<std::string, std::pair<std::size_t, double>> groups;
  for (const CoordinateCheck& c : report.checks) {
    const std::string group = c.name.substr(0, c.name.find('.', c.name.find('.') + 1));
    auto& [count, worst] = groups[group];
    ++count;
    worst = std::max(worst, c.error);
  }
  for (const auto& [group, stats] : groups) {
    summary.groups.push_back(group);
    out << std::left << std::setw(16) << group << std::right << std::setw(4) << stats.first
        << " coords  max rel err " << std::scientific << std::setprecision(3) << stats.second
        << std::defaultfloat << '\n';
  }
  out << "checked " << summary.coordinates << " coordinates, max relative error "
      << std::scientific << std::setprecision(3) << summary.max_error << std::defaultfloat
      << (summary.passed ? " (pass)" : " (FAIL, threshold 1e-5)") << '\n';
  return summary;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multi-task meta-learned MRI reconstruction on synthetic data"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::optional<std::string> mode;
  std::optional<double> ar;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  std::string checkpoint;
  app.add_option("--config", config_path, "flat JSON run configuration");
  app.add_option("--mode", mode, "mtml or stl")->check(CLI::IsMember({"mtml", "stl"}));
  app.add_option("--ar", ar, "acceleration rate");
  app.add_option("--seed", seed, "master seed");
  app.add_option("--out", out_dir, "run directory");
  app.add_option("--checkpoint", checkpoint, "checkpoint file (default: latest in the run)");

  auto* synth = app.add_subcommand("synth", "write synthetic train/test datasets");
  auto* train = app.add_subcommand("train", "train a model, checkpointing every epoch");
  auto* recon = app.add_subcommand("reconstruct", "reconstruct the test split from a checkpoint");
  auto* eval = app.add_subcommand("eval", "PSNR/SSIM/NMSE table on the test split");
  std::vector<std::string> runs;
  std::string csv_path;
  eval->add_option("runs", runs, "run directories to tabulate (default: --out)");
  eval->add_option("--csv", csv_path, "CSV output (default: <first run>/eval.csv)");
  auto* grad = app.add_subcommand("gradcheck", "finite-difference check of the training gradient");
  std::size_t coords = 64;
  grad->add_option("--coords", coords, "number of sampled coordinates")->check(CLI::Range(1, 100000));

  std::vector<const char*> argv;
  for (const std::string& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n' << "run with --help for usage\n";
    return kUsage;
  }

  // Defaults, then --config (or an existing run's config.json), then flags.
  const auto resolve = [&](bool use_run_config) {
    RunConfig cfg;
    if (!config_path.empty()) {
      cfg = load_config(config_path);
    } else if (use_run_config && out_dir && fs::exists(fs::path(*out_dir) / "config.json")) {
      cfg = load_config(fs::path(*out_dir) / "config.json");
    }
    if (mode) cfg.mode = *mode;
    if (ar) cfg.ar = *ar;
    if (seed) cfg.seed = *seed;
    if (out_dir) cfg.out_dir = *out_dir;
    cfg.validate();
    return cfg;
  };

  try {
    if (synth->parsed()) {
      synth_command(resolve(false), out);
    } else if (train->parsed()) {
      train_command(resolve(false), out);
    } else if (recon->parsed()) {
      const RunConfig cfg = resolve(true);
      reconstruct_command(cfg, checkpoint.empty() ? latest_checkpoint(cfg.out_dir) : fs::path(checkpoint), out);
    } else if (eval->parsed()) {
      std::vector<EvalRow> rows;
      if (runs.empty()) {
        const RunConfig cfg = resolve(true);
        runs.push_back(cfg.out_dir);
        rows = evaluate_run(cfg, checkpoint.empty() ? latest_checkpoint(cfg.out_dir) : fs::path(checkpoint));
      } else {
        if (!checkpoint.empty()) throw ConfigError("--checkpoint cannot be combined with several runs");
        for (const std::string& r : runs) {
          RunConfig cfg = load_config(fs::path(r) / "config.json");
          if (ar) cfg.ar = *ar;
          for (EvalRow& row : evaluate_run(cfg, latest_checkpoint(r))) rows.push_back(std::move(row));
        }
      }
      print_table(rows, out);
      const fs::path csv = csv_path.empty() ? fs::path(runs.front()) / "eval.csv" : fs::path(csv_path);
      write_eval_csv(rows, csv);
      out << "wrote " << csv.string() << '\n';
    } else if (grad->parsed()) {
      return gradcheck_command(resolve(false), coords, out).passed ? kOk : kFailure;
    }
  } catch (const ConfigError& e) {
    err << "invalid configuration: " << e.what() << '\n';
    return kBadConfig;
  } catch (const MissingFileError& e) {
    err << "missing file: " << e.what() << '\n';
    return kMissingFile;
  } catch (const FormatError& e) {
    err << "malformed file: " << e.what() << '\n';
    return kBadFile;
  } catch (const IoError& e) {
    err << "i/o error: " << e.what() << '\n';
    return kIoFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kInternal;
  }
  return kOk;
}

int run(int argc, char** argv) {
  return run(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}

}  // namespace metarecon::cli
