// Acceptance run: one PASS/FAIL line per criterion. Tolerances and budgets
// are fixed below; the exit status is non-zero if any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <iterator>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"
#include "fkp/degrade.hpp"
#include "fkp/estimate.hpp"
#include "fkp/flow.hpp"
#include "fkp/kernelgen.hpp"
#include "fkp/metrics.hpp"
#include "gradcheck.hpp"
#include "models.hpp"
#include "oracles.hpp"
#include "primitive_cases.hpp"

using namespace fkp;
namespace fs = std::filesystem;

namespace {

// criterion 1
constexpr std::size_t kBijectionKernels = 1000;
constexpr double kBijectionTol = 1e-8;
constexpr double kBijectionSeconds = 60.0;
// criterion 2
constexpr std::size_t kLogdetInputs = 50;
constexpr double kLogdetTol = 1e-4;
constexpr double kLogdetSeconds = 60.0;
// criterion 3
constexpr std::size_t kGradTrials = 100;
constexpr std::size_t kEndToEndCases = 10;
constexpr double kGradStep = 1e-5;
constexpr double kGradTol = 1e-4;
constexpr double kGradSeconds = 300.0;
// criterion 4
constexpr std::size_t kTrainIterations = 10'000;
constexpr std::size_t kTrainBatch = 100;
constexpr double kTrainLr = 1e-4;
constexpr std::size_t kHeldOut = 1000;
constexpr std::size_t kEarlyCheckpoint = 500;
constexpr double kTrainSeconds = 1800.0;
// criterion 5
constexpr std::size_t kSamples = 1000;
constexpr double kMaxNegativeMass = 0.02;
constexpr double kSumTol = 1e-9;
constexpr double kMinCorrelation = 0.9;
constexpr double kMinCorrelatedShare = 0.9;
// criterion 6
constexpr std::size_t kRecoveryCases = 20;
constexpr std::size_t kCrop = 128;
constexpr double kMinMeanPsnr = 45.0;
constexpr double kRecoverySeconds = 600.0;
// criterion 7
constexpr std::size_t kRobustCases = 20;
constexpr double kPerturbation = 0.4;
constexpr double kImageNoise = 0.0392;
constexpr std::size_t kMinWins = 15;
// criterion 8
constexpr std::size_t kJointCases = 10;
constexpr double kJointGap = 6.0;
// criterion 10
constexpr std::size_t kMetricPairs = 50;
constexpr double kMetricTol = 1e-9;

constexpr std::uint64_t kSeed = 2024;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* format, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, format, v);
  return buf;
}

struct Verdict {
  int id;
  bool pass;
  std::string text;
};

void report(std::vector<Verdict>& out, int id, bool pass, const std::string& text) {
  out.push_back({id, pass, text});
  std::cout << "criterion " << id << " " << (pass ? "PASS" : "FAIL") << "  " << text << std::endl;
}

// Named byte blobs produced by a run, compared across re-executions.
class Artifacts {
 public:
  void add(const std::string& name, const std::string& bytes) { blobs_[name] += bytes; }
  void add(const std::string& name, std::span<const double> values) {
    std::string b(values.size() * sizeof(double), '\0');
    std::memcpy(b.data(), values.data(), b.size());
    add(name, b);
  }
  void add(const std::string& name, const Kernel& k) {
    std::ostringstream s;
    write_kernel(s, k);
    add(name, s.str());
  }
  const std::map<std::string, std::string>& blobs() const { return blobs_; }

 private:
  std::map<std::string, std::string> blobs_;
};

// ---------------------------------------------------------------- 1-3, 10

double bijection_error(const flow::FlowModel& model, std::size_t count) {
  Rng rng = Rng::stream(kSeed, "bijection");
  double worst = 0.0;
  for (std::size_t t = 0; t < count; ++t) {
    const Kernel k = kernelgen::render_kernel(kernelgen::sample_params(2, rng), 11);
    const std::vector<double> back = flow::flow_inverse_values(model, flow::flow_forward(model, k).z);
    for (std::size_t i = 0; i < back.size(); ++i) worst = std::max(worst, std::abs(back[i] - k.weights()[i]));
  }
  return worst;
}

// Relative error of |det J| between the analytic log-det and LU on a
// central-difference Jacobian.
double logdet_error(const flow::FlowModel& model, Rng& rng) {
  const std::size_t d = model.dim();
  std::vector<double> x(d);
  for (double& v : x) v = rng.uniform(-1.0, 1.0);
  const double h = 1e-5;
  std::vector<double> jac(d * d);
  for (std::size_t j = 0; j < d; ++j) {
    auto up = x, down = x;
    up[j] += h;
    down[j] -= h;
    const auto zu = flow::flow_forward(model, up).z, zd = flow::flow_forward(model, down).z;
    for (std::size_t i = 0; i < d; ++i) jac[i * d + j] = (zu[i] - zd[i]) / (2 * h);
  }
  return std::abs(std::expm1(flow::flow_forward(model, x).logdet - oracle::log_abs_det(jac, d)));
}

// Finite differences on the reference-mode loss w.r.t. every latent entry.
double end_to_end_error(const flow::FlowModel& model, const Image& camera, Rng& rng) {
  const Image x = camera.crop(rng.below(256 - 24), rng.below(256 - 24), 24, 24);
  const Kernel k = kernelgen::render_kernel(kernelgen::sample_params(2, rng), 11);
  const Image y = degrade::blur_downsample(x, k, 2);
  const auto z = estimate::init_latent(model, rng);
  const auto obj = estimate::reference_objective(y, x, model, z);
  double scale = 0.0;
  for (double g : obj.gradient) scale = std::max(scale, std::abs(g));
  double worst = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    auto up = z, down = z;
    up[i] += kGradStep;
    down[i] -= kGradStep;
    const double numeric = (estimate::reference_objective(y, x, model, up).loss -
                            estimate::reference_objective(y, x, model, down).loss) /
                           (2 * kGradStep);
    const double err = std::abs(obj.gradient[i] - numeric) /
                       std::max({std::abs(obj.gradient[i]), std::abs(numeric), 1e-3 * scale});
    worst = std::max(worst, err);
  }
  return worst;
}

Image random_image(std::size_t h, std::size_t w, std::size_t c, Rng& rng) {
  Image x(h, w, c);
  for (double& v : x.pixels()) v = rng.uniform();
  return x;
}

// ---------------------------------------------------------------- pipeline

struct Case {
  Image hr;
  Image lr;
  Kernel truth;
};

std::vector<Case> make_cases(const Image& camera, std::size_t count, const std::string& label, double perturbation,
                             double noise) {
  Rng rng = Rng::stream(kSeed, label);
  std::vector<Case> cases;
  for (std::size_t c = 0; c < count; ++c) {
    const Image hr = camera.crop(rng.below(256 - kCrop + 1), rng.below(256 - kCrop + 1), kCrop, kCrop);
    Kernel k = kernelgen::render_kernel(kernelgen::sample_params(2, rng), 11);
    if (perturbation > 0.0) k = kernelgen::perturb_kernel(k, perturbation, rng);
    cases.push_back({hr, degrade::degrade(hr, k, {2, noise, kSeed + c}), k});
  }
  return cases;
}

bool best_iterate_consistent(const estimate::EstimationResult& r) {
  if (r.loss_trace.empty()) return false;
  const double min = *std::min_element(r.loss_trace.begin(), r.loss_trace.end());
  return r.best_loss == min && r.loss_trace[r.best_iteration] == min && r.best_loss <= r.loss_trace.front();
}

void record(Artifacts& a, const std::string& name, const estimate::EstimationResult& r) {
  a.add(name + ".kernel", r.kernel);
  a.add(name + ".latent", r.latent);
  a.add(name + ".trace", r.loss_trace);
  if (r.image) a.add(name + ".image", r.image->pixels());
}

struct PipelineResult {
  Artifacts artifacts;
  flow::FlowModel model;
  double train_seconds = 0.0;
  double nll_early = 0.0, nll_final = 0.0, nll_gaussian = 0.0;
  double mean_negative_mass = 0.0, worst_sum_error = 0.0, correlated_share = 0.0;
  std::vector<double> recovery_psnr;
  double recovery_seconds = 0.0;
  std::vector<double> perturbed_fkp, perturbed_param, noisy_fkp, noisy_param;
  std::vector<double> joint_psnr, joint_reference_psnr;
  bool monotone = true;
};

PipelineResult run_pipeline(const Image& camera) {
  PipelineResult out;
  Artifacts& art = out.artifacts;

  // 4: training with held-out NLL at two checkpoints
  Rng held_rng = Rng::stream(kSeed, "held-out");
  std::vector<Kernel> held;
  std::vector<std::vector<double>> held_rows;
  for (std::size_t i = 0; i < kHeldOut; ++i) {
    held.push_back(kernelgen::render_kernel(kernelgen::sample_params(2, held_rng), 11));
    held_rows.emplace_back(held.back().weights().begin(), held.back().weights().end());
  }
  flow::FlowConfig fc;
  fc.scale = 2;
  fc.seed = kSeed;
  out.model = flow::FlowModel::create(fc);
  flow::TrainConfig tc;
  tc.iterations = kTrainIterations;
  tc.batch_size = kTrainBatch;
  tc.learning_rate = kTrainLr;
  tc.seed = kSeed;
  std::ostringstream log;
  const auto t_train = Clock::now();
  flow::train(out.model, tc, &log, [&](std::size_t it, double, const flow::FlowModel& m) {
    if (it == kEarlyCheckpoint) out.nll_early = flow::nll_loss(m, held);
  });
  out.train_seconds = seconds_since(t_train);
  out.nll_final = flow::nll_loss(out.model, held);
  out.nll_gaussian = oracle::full_covariance_gaussian_nll(held_rows);
  const auto model_bytes = flow::save(out.model);
  art.add("model", std::string(model_bytes.begin(), model_bytes.end()));
  art.add("train.log", log.str());
  art.add("held-out.nll", std::vector<double>{out.nll_early, out.nll_final});

  // 5: projected samples
  Rng sample_rng = Rng::stream(kSeed, "sample");
  std::size_t correlated = 0;
  for (std::size_t i = 0; i < kSamples; ++i) {
    const auto s = flow::sample(out.model, sample_rng, true);
    out.mean_negative_mass += s.negative_mass / kSamples;
    out.worst_sum_error = std::max(out.worst_sum_error, std::abs(s.kernel.sum() - 1.0));
    if (oracle::moment_matched_correlation(s.kernel) >= kMinCorrelation) ++correlated;
    art.add("samples", s.kernel);
  }
  out.correlated_share = static_cast<double>(correlated) / kSamples;

  estimate::EstimationConfig cfg;
  cfg.seed = kSeed;

  // 6: reference-mode recovery
  const auto t_rec = Clock::now();
  for (const Case& c : make_cases(camera, kRecoveryCases, "recovery-cases", 0.0, 0.0)) {
    const auto r = estimate::estimate_reference(c.lr, c.hr, out.model, cfg);
    out.monotone = out.monotone && best_iterate_consistent(r);
    out.recovery_psnr.push_back(metrics::kernel_psnr(r.kernel, c.truth));
    record(art, "recovery" + std::to_string(out.recovery_psnr.size()), r);
  }
  out.recovery_seconds = seconds_since(t_rec);

  // 7: robustness, paired with the parametric baseline
  const auto robust = [&](const std::string& label, double perturbation, double noise, std::vector<double>& fkp_psnr,
                          std::vector<double>& param_psnr) {
    for (const Case& c : make_cases(camera, kRobustCases, label, perturbation, noise)) {
      const auto r = estimate::estimate_reference(c.lr, c.hr, out.model, cfg);
      const auto p = estimate::estimate_parametric(c.lr, c.hr, 2, cfg);
      fkp_psnr.push_back(metrics::kernel_psnr(r.kernel, c.truth));
      param_psnr.push_back(metrics::kernel_psnr(p.kernel, c.truth));
      record(art, label + std::to_string(fkp_psnr.size()), r);
      record(art, label + "-parametric" + std::to_string(fkp_psnr.size()), p);
    }
  };
  robust("perturbed-cases", kPerturbation, 0.0, out.perturbed_fkp, out.perturbed_param);
  robust("noisy-cases", 0.0, kImageNoise, out.noisy_fkp, out.noisy_param);

  // 8: joint mode against reference mode on the same cases
  estimate::EstimationConfig joint = cfg;
  joint.mode = estimate::Mode::joint;
  for (const Case& c : make_cases(camera, kJointCases, "joint-cases", 0.0, 0.0)) {
    const auto j = estimate::estimate_joint(c.lr, out.model, joint);
    const auto r = estimate::estimate_reference(c.lr, c.hr, out.model, cfg);
    out.monotone = out.monotone && best_iterate_consistent(j) && best_iterate_consistent(r);
    out.joint_psnr.push_back(metrics::kernel_psnr(j.kernel, c.truth));
    out.joint_reference_psnr.push_back(metrics::kernel_psnr(r.kernel, c.truth));
    record(art, "joint" + std::to_string(out.joint_psnr.size()), j);
  }
  return out;
}

// ---------------------------------------------------------------- CLI round

std::map<std::string, std::string> cli_round(const fs::path& dir, const fs::path& camera_path) {
  fs::remove_all(dir);
  fs::create_directories(dir);
  const fs::path previous = fs::current_path();
  fs::current_path(dir);
  const std::string camera = camera_path.string();
  const std::vector<std::vector<std::string>> commands{
      {"train", "--iters", "200", "--batch", "50", "--seed", "3", "--out", "model.fkp"},
      {"sample", "--model", "model.fkp", "--count", "5", "--seed", "4", "--outdir", "samples"},
      {"degrade", "--image", camera, "--scale", "2", "--sigma1", "1.4", "--sigma2", "0.9", "--angle", "0.6", "--noise",
       "0.0392", "--seed", "5", "--out", "lr.pgm"},
      {"estimate", "--lr-image", "lr.pgm", "--hr-image", camera, "--model", "model.fkp", "--iters", "30", "--seed", "6",
       "--outdir", "reference"},
      {"estimate", "--lr-image", "lr.pgm", "--model", "model.fkp", "--mode", "joint", "--iters", "10", "--seed", "6",
       "--outdir", "joint"},
      {"eval", "--est-kernel", "reference/lr.fkpk", "--gt-kernel", "lr.fkpk", "--est-image", "joint/lr.hr.pgm",
       "--gt-image", camera, "--scale", "2", "--report", "report.csv"},
  };
  std::map<std::string, std::string> files;
  for (const auto& args : commands) {
    std::ostringstream o, e;
    const int code = cli::run(args, o, e);
    files["exit:" + args.front()] = std::to_string(code) + "\n" + o.str();
  }
  for (const auto& entry : fs::recursive_directory_iterator(".")) {
    if (!entry.is_regular_file()) continue;
    std::ifstream in(entry.path(), std::ios::binary);
    files[entry.path().generic_string()] = std::string(std::istreambuf_iterator<char>(in), {});
  }
  fs::current_path(previous);
  return files;
}

std::string first_difference(const std::map<std::string, std::string>& a, const std::map<std::string, std::string>& b) {
  if (a.size() != b.size()) return "artifact count " + std::to_string(a.size()) + " vs " + std::to_string(b.size());
  for (const auto& [name, bytes] : a) {
    const auto it = b.find(name);
    if (it == b.end()) return name + " missing";
    if (it->second != bytes) return name + " differs";
  }
  return "";
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path data_dir = argc > 1 ? fs::path(argv[1]) : fs::path(FKP_TEST_DATA_DIR);
  const fs::path camera_path = fs::absolute(data_dir / "camera256.pgm");
  const Image camera = read_netpbm(camera_path);
  std::vector<Verdict> verdicts;

  const auto t_all = Clock::now();
  std::cout << "training and estimation pipeline, first run" << std::endl;
  const PipelineResult run1 = run_pipeline(camera);
  const flow::FlowModel& model = run1.model;

  {
    const auto t0 = Clock::now();
    const double err = bijection_error(model, kBijectionKernels);
    const double secs = seconds_since(t0);
    report(verdicts, 1, err <= kBijectionTol && secs <= kBijectionSeconds,
           "bijectivity: max round-trip error " + fmt("%.3g", err) + " over " + std::to_string(kBijectionKernels) +
               " kernels (tol " + fmt("%g", kBijectionTol) + "), " + fmt("%.1f", secs) + " s");
  }

  {
    const auto t0 = Clock::now();
    double worst = 0.0;
    for (std::size_t d : {2u, 4u, 8u}) {
      const flow::FlowModel toy = testutil::random_model(d, 5, kSeed + d, 0.4);
      Rng rng = Rng::stream(kSeed + d, "logdet-inputs");
      for (std::size_t t = 0; t < kLogdetInputs; ++t) worst = std::max(worst, logdet_error(toy, rng));
    }
    const double secs = seconds_since(t0);
    report(verdicts, 2, worst <= kLogdetTol && secs <= kLogdetSeconds,
           "log-det oracle: max relative |det| error " + fmt("%.3g", worst) + " for D in {2,4,8} x " +
               std::to_string(kLogdetInputs) + " inputs (tol " + fmt("%g", kLogdetTol) + "), " + fmt("%.1f", secs) +
               " s");
  }

  {
    const auto t0 = Clock::now();
    double worst = 0.0;
    std::string worst_name;
    std::size_t cases = 0;
    for (std::size_t trial = 0; trial < kGradTrials; ++trial) {
      Rng rng = Rng::stream(kSeed + trial, "gradient-cases");
      for (const auto& c : testutil::primitive_cases(rng)) {
        const auto r = testutil::check_gradients(c.build, c.inputs, rng, kGradStep);
        if (r.max_error > worst) {
          worst = r.max_error;
          worst_name = c.name;
        }
        ++cases;
      }
    }
    double e2e = 0.0;
    Rng rng = Rng::stream(kSeed, "end-to-end");
    for (std::size_t t = 0; t < kEndToEndCases; ++t) e2e = std::max(e2e, end_to_end_error(model, camera, rng));
    cases += kEndToEndCases;
    const double secs = seconds_since(t0);
    report(verdicts, 3, worst <= kGradTol && e2e <= kGradTol && secs <= kGradSeconds,
           "gradients: " + std::to_string(cases) + " cases, max primitive error " + fmt("%.3g", worst) + " (" +
               worst_name + "), end-to-end reference loss " + fmt("%.3g", e2e) + " (tol " + fmt("%g", kGradTol) +
               "), " + fmt("%.1f", secs) + " s");
  }

  {
    const bool improved = run1.nll_final < run1.nll_early;
    const bool beats_gaussian = run1.nll_final < run1.nll_gaussian;
    report(verdicts, 4, improved && beats_gaussian && run1.train_seconds <= kTrainSeconds,
           "training: held-out NLL " + fmt("%.2f", run1.nll_early) + " at iter 500, " + fmt("%.2f", run1.nll_final) +
               " at iter 10000; full-covariance Gaussian NLL " + fmt("%.2f", run1.nll_gaussian) +
               (std::isinf(run1.nll_gaussian) ? " (sample covariance singular)" : "") + "; " +
               fmt("%.0f", run1.train_seconds) + " s");
  }

  report(verdicts, 5,
         run1.mean_negative_mass <= kMaxNegativeMass && run1.worst_sum_error <= kSumTol &&
             run1.correlated_share >= kMinCorrelatedShare,
         "sampling: mean negative mass " + fmt("%.4f", run1.mean_negative_mass) + " (max " +
             fmt("%g", kMaxNegativeMass) + "), worst |sum-1| " + fmt("%.2g", run1.worst_sum_error) + ", share with " +
             "moment-matched correlation >= 0.9: " + fmt("%.3f", run1.correlated_share) + " (min " +
             fmt("%g", kMinCorrelatedShare) + ")");

  {
    double mean = 0.0;
    for (double p : run1.recovery_psnr) mean += p / static_cast<double>(run1.recovery_psnr.size());
    report(verdicts, 6, mean >= kMinMeanPsnr && run1.recovery_seconds <= kRecoverySeconds,
           "reference-mode recovery: mean kernel PSNR " + fmt("%.2f", mean) + " dB over " +
               std::to_string(run1.recovery_psnr.size()) + " cases (min " + fmt("%g", kMinMeanPsnr) + "), " +
               fmt("%.0f", run1.recovery_seconds) + " s");
  }

  {
    const auto wins = [](const std::vector<double>& a, const std::vector<double>& b) {
      std::size_t n = 0;
      for (std::size_t i = 0; i < a.size(); ++i) n += a[i] > b[i];
      return n;
    };
    const auto mean = [](const std::vector<double>& v) {
      double s = 0.0;
      for (double x : v) s += x / static_cast<double>(v.size());
      return s;
    };
    const std::size_t wp = wins(run1.perturbed_fkp, run1.perturbed_param);
    const std::size_t wn = wins(run1.noisy_fkp, run1.noisy_param);
    report(verdicts, 7, wp >= kMinWins && wn >= kMinWins,
           "robustness: kernel perturbation FKP wins " + std::to_string(wp) + "/20 (" + fmt("%.2f", mean(run1.perturbed_fkp)) +
               " vs " + fmt("%.2f", mean(run1.perturbed_param)) + " dB); image noise FKP wins " + std::to_string(wn) +
               "/20 (" + fmt("%.2f", mean(run1.noisy_fkp)) + " vs " + fmt("%.2f", mean(run1.noisy_param)) +
               " dB); need " + std::to_string(kMinWins) + " each");
  }

  {
    std::size_t within = 0;
    double mean_gap = 0.0;
    for (std::size_t i = 0; i < run1.joint_psnr.size(); ++i) {
      const double gap = run1.joint_reference_psnr[i] - run1.joint_psnr[i];
      within += gap <= kJointGap;
      mean_gap += gap / static_cast<double>(run1.joint_psnr.size());
    }
    report(verdicts, 8, within == run1.joint_psnr.size() && run1.monotone,
           "joint mode: " + std::to_string(within) + "/" + std::to_string(run1.joint_psnr.size()) +
               " cases within " + fmt("%g", kJointGap) + " dB of reference mode (mean gap " + fmt("%.2f", mean_gap) +
               " dB); best-iterate monotonicity " + (run1.monotone ? "holds" : "violated") + " on every run");
  }

  {
    std::cout << "training and estimation pipeline, second run" << std::endl;
    const PipelineResult run2 = run_pipeline(camera);
    const std::string pipeline_diff = first_difference(run1.artifacts.blobs(), run2.artifacts.blobs());
    const fs::path scratch = fs::temp_directory_path() / "fkp_acceptance";
    const auto cli1 = cli_round(scratch / "a", camera_path);
    const auto cli2 = cli_round(scratch / "b", camera_path);
    const std::string cli_diff = first_difference(cli1, cli2);
    bool cli_ok = true;
    for (const auto& [name, bytes] : cli1)
      if (name.rfind("exit:", 0) == 0 && bytes.front() != '0') cli_ok = false;
    fs::remove_all(scratch);
    report(verdicts, 9, pipeline_diff.empty() && cli_diff.empty() && cli_ok,
           "determinism: " + std::to_string(run1.artifacts.blobs().size()) + " pipeline artifacts " +
               (pipeline_diff.empty() ? "identical" : pipeline_diff) + ", " + std::to_string(cli1.size()) +
               " CLI artifacts " + (cli_diff.empty() ? "identical" : cli_diff) +
               (cli_ok ? "" : ", a CLI command failed"));
  }

  {
    Rng rng = Rng::stream(kSeed, "metric-pairs");
    double worst_k = 0.0, worst_p = 0.0, worst_s = 0.0;
    for (std::size_t t = 0; t < kMetricPairs; ++t) {
      const std::size_t side = 2 * (1 + rng.below(9)) + 1;
      std::vector<double> ka(side * side), kb(side * side);
      for (std::size_t i = 0; i < ka.size(); ++i) {
        ka[i] = rng.uniform();
        kb[i] = ka[i] + rng.uniform(-0.1, 0.1);
      }
      const Kernel a = Kernel(side, ka).normalized(), b = Kernel(side, kb).normalized();
      worst_k = std::max(worst_k, std::abs(metrics::kernel_psnr(a, b) - oracle::psnr(a.weights(), b.weights())));

      const std::size_t h = 11 + rng.below(40), w = 11 + rng.below(40), c = rng.below(2) ? 3 : 1;
      const Image x = random_image(h, w, c, rng);
      Image y = x;
      const double sd = rng.uniform(0.01, 0.3);
      for (double& v : y.pixels()) v = std::clamp(v + sd * rng.normal(), 0.0, 1.0);
      const std::size_t border = rng.below(4);
      worst_p = std::max(worst_p, std::abs(metrics::image_psnr(x, y, border) - oracle::image_psnr(x, y, border)));
      Image lx(h, w, 1), ly(h, w, 1);
      for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < w; ++j) {
          lx.at(0, i, j) = c == 1 ? x.at(0, i, j) : oracle::luma(x.at(0, i, j), x.at(1, i, j), x.at(2, i, j));
          ly.at(0, i, j) = c == 1 ? y.at(0, i, j) : oracle::luma(y.at(0, i, j), y.at(1, i, j), y.at(2, i, j));
        }
      worst_s = std::max(worst_s, std::abs(metrics::image_ssim(x, y) - oracle::ssim(lx, ly)));
    }
    report(verdicts, 10, worst_k <= kMetricTol && worst_p <= kMetricTol && worst_s <= kMetricTol,
           "metrics: max deviation from direct references over " + std::to_string(kMetricPairs) +
               " pairs: kernel PSNR " + fmt("%.2g", worst_k) + ", image PSNR " + fmt("%.2g", worst_p) + ", SSIM " +
               fmt("%.2g", worst_s) + " (tol " + fmt("%g", kMetricTol) + ")");
  }

  std::size_t passed = 0;
  for (const auto& v : verdicts) passed += v.pass;
  std::cout << passed << "/" << verdicts.size() << " criteria passed in " << fmt("%.0f", seconds_since(t_all)) << " s"
            << std::endl;
  return passed == verdicts.size() ? 0 : 1;
}
