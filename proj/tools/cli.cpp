#include "cli.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "fkp/degrade.hpp"
#include "fkp/error.hpp"
#include "fkp/estimate.hpp"
#include "fkp/flow.hpp"
#include "fkp/image.hpp"
#include "fkp/kernel.hpp"
#include "fkp/kernelgen.hpp"
#include "fkp/metrics.hpp"

namespace fkp::cli {
namespace fs = std::filesystem;

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

std::string to_text(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}
std::string to_text(const std::string& v) { return v; }
std::string to_text(bool v) { return v ? "true" : "false"; }
template <class T>
  requires std::is_integral_v<T>
std::string to_text(T v) {
  return std::to_string(v);
}

// Options of one subcommand, remembered so the resolved values can be written
// back out as a settings file that reproduces the run.
class Settings {
 public:
  explicit Settings(CLI::App* app) : app_(app) {}

  template <class T>
  CLI::Option* add(const std::string& key, T& value, const std::string& help) {
    auto* opt = app_->add_option("--" + key, value, help);
    entries_.push_back({key, opt, [&value] { return std::vector<std::string>{to_text(value)}; }});
    return opt;
  }

  CLI::Option* add(const std::string& key, std::vector<std::string>& values, const std::string& help) {
    auto* opt = app_->add_option("--" + key, values, help);
    entries_.push_back({key, opt, [&values] { return values; }});
    return opt;
  }

  CLI::Option* flag(const std::string& key, bool& value, const std::string& help) {
    auto* opt = app_->add_flag("--" + key + ",!--no-" + key, value, help);
    entries_.push_back({key, opt, [&value] { return std::vector<std::string>{to_text(value)}; }});
    return opt;
  }

  /// The key is written back only when it was given, so alternatives that
  /// exclude each other stay unambiguous on a re-run.
  void only_if_given(const std::string& key) {
    for (auto& e : entries_)
      if (e.key == key) e.only_if_given = true;
  }

  bool has(const std::string& key) const {
    return std::any_of(entries_.begin(), entries_.end(), [&](const Entry& e) { return e.key == key; });
  }

  void write(const fs::path& path) const {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw InputError("cannot write " + path.string());
    out << "# " << app_->get_name() << "\n";
    for (const auto& e : entries_) {
      if (e.only_if_given && e.option->count() == 0) continue;
      for (const auto& v : e.values())
        if (!v.empty()) out << e.key << "=" << v << "\n";
    }
  }

 private:
  struct Entry {
    std::string key;
    CLI::Option* option;
    std::function<std::vector<std::string>()> values;
    bool only_if_given = false;
  };
  CLI::App* app_;
  std::vector<Entry> entries_;
};

// ---------------------------------------------------------------- train

struct TrainArgs {
  int scale = 2;
  std::size_t iters = 50'000;
  std::size_t batch = 100;
  double lr = 1e-4;
  std::uint64_t seed = 0;
  std::size_t blocks = 5;
  std::size_t log_every = 100;
  bool shift = true;
  std::string out;
  std::string log;
};

void register_train(Settings& s, TrainArgs& a) {
  s.add("scale", a.scale, "scale factor (2, 3 or 4)");
  s.add("iters", a.iters, "training iterations")->check(CLI::PositiveNumber);
  s.add("batch", a.batch, "kernels per batch")->check(CLI::PositiveNumber);
  s.add("lr", a.lr, "Adam learning rate")->check(CLI::PositiveNumber);
  s.add("seed", a.seed, "random seed");
  s.add("blocks", a.blocks, "flow blocks")->check(CLI::PositiveNumber);
  s.add("log-every", a.log_every, "iterations between log lines")->check(CLI::PositiveNumber);
  s.flag("shift", a.shift, "train on kernels shifted for stride-s sampling");
  s.add("out", a.out, "model file")->required();
  s.add("log", a.log, "training log (default: <out> with .log extension)");
}

fs::path sibling(const fs::path& p, const std::string& extension) {
  fs::path q = p;
  q.replace_extension(extension);
  return q;
}

int cmd_train(const TrainArgs& a, const Settings& s, std::ostream& out, std::ostream& err) {
  kernelgen::require_supported_scale(a.scale);
  const fs::path model_path = a.out;
  const fs::path log_path = a.log.empty() ? sibling(model_path, ".log") : fs::path(a.log);
  if (model_path.has_parent_path()) fs::create_directories(model_path.parent_path());
  s.write(sibling(model_path, ".config"));

  std::ofstream log(log_path);
  if (!log) throw InputError("cannot write " + log_path.string());

  flow::FlowConfig fc;
  fc.scale = a.scale;
  fc.blocks = a.blocks;
  fc.seed = a.seed;
  flow::FlowModel model = flow::FlowModel::create(fc);

  flow::TrainConfig tc;
  tc.iterations = a.iters;
  tc.batch_size = a.batch;
  tc.learning_rate = a.lr;
  tc.seed = a.seed;
  tc.shifted_kernels = a.shift;
  tc.log_every = a.log_every;
  try {
    const auto report = flow::train(model, tc, &log);
    flow::save_model(model_path, model);
    out << "initial_nll=" << report.initial_nll << " final_nll=" << report.final_nll << "\n";
  } catch (const NumericError&) {
    // train() restored the last good parameters; keep them for inspection.
    const fs::path checkpoint = model_path.string() + ".checkpoint";
    model.freeze();
    flow::save_model(checkpoint, model);
    err << "checkpoint written to " << checkpoint.string() << "\n";
    throw;
  }
  return kOk;
}

// ---------------------------------------------------------------- sample

struct SampleArgs {
  std::string model;
  std::size_t count = 7;
  std::uint64_t seed = 0;
  bool project = true;
  std::string outdir;
};

void register_sample(Settings& s, SampleArgs& a) {
  s.add("model", a.model, "model file")->required();
  s.add("count", a.count, "number of kernels");
  s.add("seed", a.seed, "random seed");
  s.flag("project", a.project, "rescale latents to norm sqrt(D)");
  s.add("outdir", a.outdir, "output directory")->required();
}

// Kernels side by side, each scaled to its own maximum and enlarged.
Image contact_sheet(const std::vector<Kernel>& kernels) {
  constexpr std::size_t zoom = 8, gap = 4, per_row = 8;
  const std::size_t side = kernels.front().side() * zoom;
  const std::size_t cols = std::min(per_row, kernels.size());
  const std::size_t rows = (kernels.size() + per_row - 1) / per_row;
  Image sheet(rows * side + (rows + 1) * gap, cols * side + (cols + 1) * gap, 1, 1.0);
  for (std::size_t n = 0; n < kernels.size(); ++n) {
    const Kernel& k = kernels[n];
    const double peak = *std::max_element(k.weights().begin(), k.weights().end());
    const std::size_t top = gap + (n / per_row) * (side + gap);
    const std::size_t left = gap + (n % per_row) * (side + gap);
    for (std::size_t i = 0; i < side; ++i)
      for (std::size_t j = 0; j < side; ++j)
        sheet.at(0, top + i, left + j) = peak > 0.0 ? k.at(i / zoom, j / zoom) / peak : 0.0;
  }
  return sheet;
}

int cmd_sample(const SampleArgs& a, const Settings& s, std::ostream& out) {
  const flow::FlowModel model = flow::load_model(a.model);
  const fs::path dir = a.outdir;
  fs::create_directories(dir);
  s.write(dir / "sample.config");

  Rng rng = Rng::stream(a.seed, "sample");
  std::vector<Kernel> kernels;
  for (std::size_t n = 0; n < a.count; ++n) {
    const auto sample = flow::sample(model, rng, a.project);
    char name[32];
    std::snprintf(name, sizeof name, "kernel_%03zu.fkpk", n);
    save_kernel(dir / name, sample.kernel);
    out << name << " negative_mass=" << sample.negative_mass << "\n";
    kernels.push_back(sample.kernel);
  }
  if (!kernels.empty()) write_netpbm(dir / "samples.pgm", contact_sheet(kernels));
  return kOk;
}

// ---------------------------------------------------------------- degrade

struct DegradeArgs {
  std::string image;
  int scale = 2;
  double sigma1 = 0.0;
  double sigma2 = 0.0;
  double angle = 0.0;
  std::string kernel;
  double noise = 0.0;
  std::uint64_t seed = 0;
  std::string out;
};

struct DegradeOptions {
  CLI::Option* sigma1;
  CLI::Option* sigma2;
  CLI::Option* angle;
  CLI::Option* kernel;
};

DegradeOptions register_degrade(Settings& s, DegradeArgs& a) {
  s.add("image", a.image, "HR image (PGM/PPM)")->required();
  s.add("scale", a.scale, "downsampling factor")->check(CLI::PositiveNumber);
  DegradeOptions o;
  o.sigma1 = s.add("sigma1", a.sigma1, "first principal width");
  o.sigma2 = s.add("sigma2", a.sigma2, "second principal width");
  o.angle = s.add("angle", a.angle, "rotation in radians");
  o.kernel = s.add("kernel", a.kernel, "FKPK kernel file");
  s.add("noise", a.noise, "noise standard deviation as a fraction of full scale")->check(CLI::NonNegativeNumber);
  s.add("seed", a.seed, "random seed");
  s.add("out", a.out, "LR image output")->required();
  for (const char* key : {"sigma1", "sigma2", "angle"}) s.only_if_given(key);
  return o;
}

int cmd_degrade(const DegradeArgs& a, const DegradeOptions& o, const Settings& s, std::ostream& out) {
  const bool from_params = o.sigma1->count() > 0 || o.sigma2->count() > 0 || o.angle->count() > 0;
  const bool from_file = !a.kernel.empty();
  if (from_params == from_file) throw ConfigError("degrade: give either --sigma1/--sigma2[/--angle] or --kernel");
  if (from_params && (o.sigma1->count() == 0 || o.sigma2->count() == 0))
    throw ConfigError("degrade: --sigma1 and --sigma2 go together");

  Kernel k;
  if (from_file) {
    k = load_kernel(a.kernel);
  } else {
    kernelgen::require_supported_scale(a.scale);
    kernelgen::GaussianKernelParams p{a.sigma1, a.sigma2, a.angle, kernelgen::shift_for_scale(a.scale)};
    kernelgen::validate(p);
    k = kernelgen::render_kernel(p, kernelgen::kernel_side(a.scale));
  }

  const fs::path out_path = a.out;
  if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
  s.write(sibling(out_path, ".config"));

  const Image x = read_netpbm(a.image);
  const Image y = degrade::degrade(x, k, {a.scale, a.noise, a.seed});
  write_netpbm(out_path, y);
  save_kernel(sibling(out_path, ".fkpk"), k);
  out << out_path.string() << " " << y.height() << "x" << y.width() << "\n";
  return kOk;
}

// ---------------------------------------------------------------- estimate

struct EstimateArgs {
  std::vector<std::string> lr_images;
  std::vector<std::string> hr_images;
  std::string model;
  std::string mode = "reference";
  std::size_t iters = 1000;
  double latent_lr = 0.1;
  double image_lr = 0.005;
  double tv_weight = 0.01;
  bool project = true;
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
  std::string outdir;
};

void register_estimate(Settings& s, EstimateArgs& a) {
  s.add("lr-image", a.lr_images, "LR image(s)")->required();
  s.add("hr-image", a.hr_images, "reference HR image(s), one per LR image");
  s.add("model", a.model, "frozen flow model")->required();
  s.add("mode", a.mode, "reference or joint")->check(CLI::IsMember({"reference", "joint"}));
  s.add("iters", a.iters, "optimization steps")->check(CLI::PositiveNumber);
  s.add("latent-lr", a.latent_lr, "latent learning rate")->check(CLI::PositiveNumber);
  s.add("image-lr", a.image_lr, "image learning rate (joint mode)")->check(CLI::PositiveNumber);
  s.add("tv-weight", a.tv_weight, "total-variation weight (joint mode)")->check(CLI::NonNegativeNumber);
  s.flag("project", a.project, "project the latent to norm sqrt(D) after every step");
  s.add("seed", a.seed, "random seed");
  s.add("jobs", a.jobs, "images processed concurrently")->check(CLI::PositiveNumber);
  s.add("outdir", a.outdir, "output directory")->required();
}

void write_values(const fs::path& path, std::span<const double> values) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  for (double v : values) out << to_text(v) << "\n";
}

void write_trace(const fs::path& path, std::span<const double> trace) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  out << "iteration,fidelity\n";
  for (std::size_t i = 0; i < trace.size(); ++i) out << i << "," << to_text(trace[i]) << "\n";
}

int cmd_estimate(const EstimateArgs& a, const Settings& s, std::ostream& out) {
  const bool joint = a.mode == "joint";
  if (!joint && a.hr_images.empty()) throw ConfigError("estimate: reference mode needs --hr-image");
  if (!a.hr_images.empty() && a.hr_images.size() != a.lr_images.size())
    throw ConfigError("estimate: give one --hr-image per --lr-image");
  std::set<std::string> stems;
  for (const auto& p : a.lr_images)
    if (!stems.insert(fs::path(p).stem().string()).second)
      throw ConfigError("estimate: two LR images share the name " + fs::path(p).stem().string());

  const flow::FlowModel model = flow::load_model(a.model);
  const fs::path dir = a.outdir;
  fs::create_directories(dir);
  s.write(dir / "estimate.config");

  estimate::EstimationConfig cfg;
  cfg.mode = joint ? estimate::Mode::joint : estimate::Mode::reference;
  cfg.iterations = a.iters;
  cfg.latent_lr = a.latent_lr;
  cfg.image_lr = a.image_lr;
  cfg.tv_weight = a.tv_weight;
  cfg.project_every_step = a.project;
  cfg.seed = a.seed;

  const std::size_t n = a.lr_images.size();
  std::vector<std::string> summaries(n);
  std::vector<std::exception_ptr> failures(n);

  auto process = [&](std::size_t i) {
    const fs::path lr_path = a.lr_images[i];
    const std::string stem = lr_path.stem().string();
    const Image y = read_netpbm(lr_path);
    estimate::EstimationResult r;
    if (joint) {
      r = estimate::estimate_joint(y, model, cfg);
    } else {
      r = estimate::estimate_reference(y, read_netpbm(a.hr_images[i]), model, cfg);
    }
    save_kernel(dir / (stem + ".fkpk"), r.kernel);
    write_values(dir / (stem + ".latent"), r.latent);
    write_trace(dir / (stem + ".trace.csv"), r.loss_trace);
    if (r.image) write_netpbm(dir / (stem + (r.image->channels() == 1 ? ".hr.pgm" : ".hr.ppm")), *r.image);
    std::ostringstream line;
    line << stem << " best_iteration=" << r.best_iteration << " fidelity=" << r.best_loss;
    summaries[i] = line.str();
  };

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        process(i);
      } catch (...) {
        failures[i] = std::current_exception();
      }
    }
  };
  const std::size_t workers = std::min(a.jobs, n);
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  for (std::size_t i = 0; i < n; ++i) {
    if (failures[i]) std::rethrow_exception(failures[i]);
    out << summaries[i] << "\n";
  }
  return kOk;
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
  std::string est_kernel;
  std::string gt_kernel;
  std::string est_image;
  std::string gt_image;
  int scale = 2;
  std::string id;
  std::string report;
};

void register_eval(Settings& s, EvalArgs& a) {
  s.add("est-kernel", a.est_kernel, "estimated kernel")->required();
  s.add("gt-kernel", a.gt_kernel, "ground-truth kernel")->required();
  s.add("est-image", a.est_image, "estimated HR image");
  s.add("gt-image", a.gt_image, "ground-truth HR image");
  s.add("scale", a.scale, "scale factor; also the border cropped before image metrics")->check(CLI::NonNegativeNumber);
  s.add("id", a.id, "row identifier (default: estimated kernel file name)");
  s.add("report", a.report, "CSV file to append the row to");
}

int cmd_eval(const EvalArgs& a, const Settings& s, std::ostream& out) {
  if (a.est_image.empty() != a.gt_image.empty()) throw ConfigError("eval: give both --est-image and --gt-image or neither");
  if (!a.report.empty()) s.write(sibling(a.report, ".config"));

  metrics::MetricReport row;
  row.id = a.id.empty() ? fs::path(a.est_kernel).stem().string() : a.id;
  row.kernel_psnr = metrics::kernel_psnr(load_kernel(a.est_kernel), load_kernel(a.gt_kernel));
  if (!a.est_image.empty()) {
    const Image est = read_netpbm(a.est_image);
    const Image gt = read_netpbm(a.gt_image);
    if (est.height() != gt.height() || est.width() != gt.width() || est.channels() != gt.channels())
      throw InputError("eval: image extents differ");
    const std::size_t border = static_cast<std::size_t>(a.scale);
    row.image_psnr = metrics::image_psnr(est, gt, border);
    row.image_ssim = metrics::image_ssim(est.crop(border, border, est.height() - 2 * border, est.width() - 2 * border),
                                         gt.crop(border, border, gt.height() - 2 * border, gt.width() - 2 * border));
  }
  const std::string line = metrics::format_report_line(row);
  out << metrics::kReportHeader << "\n" << line << "\n";

  if (!a.report.empty()) {
    const bool fresh = !fs::exists(a.report) || fs::file_size(a.report) == 0;
    std::ofstream rep(a.report, std::ios::app);
    if (!rep) throw InputError("cannot write " + a.report);
    if (fresh) rep << metrics::kReportHeader << "\n";
    rep << line << "\n";
  }
  return kOk;
}

// ---------------------------------------------------------------- plumbing

bool given_on_command_line(const std::vector<std::string>& args, const std::string& key) {
  for (const auto& t : args) {
    for (const std::string name : {"--" + key, "--no-" + key})
      if (t == name || t.rfind(name + "=", 0) == 0) return true;
  }
  return false;
}

// Settings-file entries become "--key=value" arguments placed before the
// command-line ones; keys already given as flags are skipped so flags win.
std::vector<std::string> merge_config(const std::vector<std::string>& args, const Settings& settings,
                                      const std::string& command) {
  std::optional<std::string> config_path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) config_path = args[i + 1];
    else if (args[i].rfind("--config=", 0) == 0) config_path = args[i].substr(9);
  }
  if (!config_path) return args;

  std::ifstream in(*config_path);
  if (!in) throw ConfigError("cannot read config file " + *config_path);
  std::vector<std::string> merged{command};
  for (const auto& [key, value] : parse_config(in, *config_path)) {
    if (!settings.has(key)) throw ConfigError(*config_path + ": unknown key '" + key + "' for " + command);
    if (!given_on_command_line(args, key)) merged.push_back("--" + key + "=" + value);
  }
  merged.insert(merged.end(), args.begin() + 1, args.end());
  return merged;
}

int exit_code_for(const std::exception_ptr& e, std::ostream& err) {
  try {
    std::rethrow_exception(e);
  } catch (const FormatError& x) {
    err << "format error: " << x.what() << "\n";
    return kFormat;
  } catch (const NumericError& x) {
    err << "numeric error: " << x.what() << "\n";
    return kNumeric;
  } catch (const Error& x) {
    err << "error: " << x.what() << "\n";
    return kUsage;
  } catch (const fs::filesystem_error& x) {
    err << "error: " << x.what() << "\n";
    return kUsage;
  } catch (const std::exception& x) {
    err << "error: " << x.what() << "\n";
    return kFailure;
  }
}

}  // namespace

std::vector<Setting> parse_config(std::istream& in, const std::string& source) {
  std::vector<Setting> settings;
  std::string line;
  for (std::size_t number = 1; std::getline(in, line); ++number) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw ConfigError(source + ":" + std::to_string(number) + ": expected key=value");
    std::string key = trim(std::string_view(body).substr(0, eq));
    if (key.empty()) throw ConfigError(source + ":" + std::to_string(number) + ": empty key");
    settings.emplace_back(std::move(key), trim(std::string_view(body).substr(eq + 1)));
  }
  return settings;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Normalizing-flow blur-kernel prior toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "fkp 1.0");

  auto* train = app.add_subcommand("train", "train a flow prior on synthetic Gaussian kernels");
  auto* sample = app.add_subcommand("sample", "draw kernels from a trained prior");
  auto* degrade = app.add_subcommand("degrade", "blur, subsample and add noise to an image");
  auto* estimate = app.add_subcommand("estimate", "estimate blur kernels from LR images");
  auto* eval = app.add_subcommand("eval", "kernel and image quality metrics");

  std::string config_unused;
  std::map<std::string, std::unique_ptr<Settings>> settings;
  for (auto* sub : {train, sample, degrade, estimate, eval}) {
    sub->add_option("--config", config_unused, "key=value settings file; flags take precedence");
    settings[sub->get_name()] = std::make_unique<Settings>(sub);
  }

  TrainArgs train_args;
  SampleArgs sample_args;
  DegradeArgs degrade_args;
  EstimateArgs estimate_args;
  EvalArgs eval_args;
  register_train(*settings["train"], train_args);
  register_sample(*settings["sample"], sample_args);
  const DegradeOptions degrade_opts = register_degrade(*settings["degrade"], degrade_args);
  register_estimate(*settings["estimate"], estimate_args);
  register_eval(*settings["eval"], eval_args);

  std::vector<std::string> argv_text;
  try {
    argv_text = args;
    if (!args.empty() && settings.count(args.front()))
      argv_text = merge_config(args, *settings[args.front()], args.front());
  } catch (...) {
    return exit_code_for(std::current_exception(), err);
  }

  std::vector<const char*> argv{"fkp"};
  for (const auto& a : argv_text) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*train) return cmd_train(train_args, *settings["train"], out, err);
    if (*sample) return cmd_sample(sample_args, *settings["sample"], out);
    if (*degrade) return cmd_degrade(degrade_args, degrade_opts, *settings["degrade"], out);
    if (*estimate) return cmd_estimate(estimate_args, *settings["estimate"], out);
    if (*eval) return cmd_eval(eval_args, *settings["eval"], out);
  } catch (...) {
    return exit_code_for(std::current_exception(), err);
  }
  return kUsage;
}

}  // namespace fkp::cli
