#pragma once

// Normalizing-flow prior over blur kernels: an invertible map between flattened kernels and a
// standard-normal latent space, built from blocks of
//   per-dimension affine normalization -> fixed permutation -> affine coupling.
// Training maximizes the exact likelihood given by the change of variables.

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

#include "fkp/diff/tape.hpp"
#include "fkp/kernel.hpp"
#include "fkp/rng.hpp"

namespace fkp::flow {

inline constexpr double kNormEpsilon = 1e-5;
inline constexpr double kNormMomentum = 0.1;
inline constexpr std::size_t kFcnDepth = 3;

/// Fully connected layer y = x W + b with W stored [in x out] row-major.
struct Linear {
  std::size_t in = 0;
  std::size_t out = 0;
  std::vector<double> weight;
  std::vector<double> bias;

  bool operator==(const Linear&) const = default;
};

/// Linear -> tanh -> Linear -> tanh -> Linear.
struct Fcn {
  std::array<Linear, kFcnDepth> layers;

  bool operator==(const Fcn&) const = default;
};

struct FlowBlock {
  // normalization: y = (x - running_mean) / sqrt(running_var + eps) * exp(log_scale) + shift
  std::vector<double> log_scale;
  std::vector<double> shift;
  std::vector<double> running_mean;
  std::vector<double> running_var;
  // out[j] = in[perm[j]]
  std::vector<std::size_t> perm;
  // coupling: log_s = tanh(scale_net(cond)) * scale_cap, y = x * exp(log_s) + shift_net(cond)
  Fcn scale_net;
  Fcn shift_net;
  std::vector<double> scale_cap;

  bool operator==(const FlowBlock&) const = default;
};

struct FlowConfig {
  int scale = 2;
  std::size_t dim = 0;     // 0: (4s+3)^2
  std::size_t blocks = 5;
  std::size_t hidden = 0;  // 0: 5(s+1)
  std::uint64_t seed = 0;
};

class FlowModel {
 public:
  FlowModel() = default;
  /// Validates that permutations are permutations and layer sizes chain.
  FlowModel(int scale, std::size_t dim, std::vector<FlowBlock> blocks, bool frozen);

  /// Fresh trainable model: random FCN weights except zeroed output layers,
  /// so every block starts as the identity; permutations drawn from the seed.
  static FlowModel create(const FlowConfig& config);

  /// Frozen model where every layer is the identity map.
  static FlowModel identity(std::size_t dim, std::size_t blocks, std::size_t hidden);

  int scale() const { return scale_; }
  std::size_t dim() const { return dim_; }
  std::size_t hidden() const;
  std::vector<FlowBlock>& blocks() { return blocks_; }
  const std::vector<FlowBlock>& blocks() const { return blocks_; }

  bool frozen() const { return frozen_; }
  void freeze() { frozen_ = true; }
  void unfreeze() { frozen_ = false; }

  /// Size of the half the coupling of block `index` reads / transforms.
  std::size_t conditioning_size(std::size_t index) const;
  std::size_t transformed_size(std::size_t index) const;
  /// Even blocks transform dims [ceil(D/2), D), odd blocks [0, ceil(D/2)).
  static bool transforms_second_half(std::size_t index) { return index % 2 == 0; }

  /// Trainable parameters in a fixed order (see FlowGraph::parameters).
  std::vector<std::span<double>> parameters();
  std::vector<std::span<const double>> parameters() const;
  std::size_t parameter_count() const;

  bool operator==(const FlowModel&) const = default;

 private:
  int scale_ = 0;
  std::size_t dim_ = 0;
  std::vector<FlowBlock> blocks_;
  bool frozen_ = false;
};

/// The model's parameters bound to a tape. Build one per tape.
class FlowGraph {
 public:
  /// Parameters become leaves that require gradient when `trainable`, constants otherwise.
  FlowGraph(diff::Tape& tape, const FlowModel& model, bool trainable);

  struct Output {
    diff::Var z;       // [B, D]
    diff::Var logdet;  // [B, 1]
  };

  /// Kernel space -> latent space. When `stats` is given (training), each
  /// normalization layer first folds the batch statistics of its input into
  /// `stats`' running estimates, then normalizes with the updated estimates.
  Output forward(diff::Var x, FlowModel* stats = nullptr);

  /// Latent space -> kernel space, the exact inverse of forward.
  diff::Var inverse(diff::Var z);

  const std::vector<diff::Var>& parameters() const { return params_; }

 private:
  struct BlockVars {
    diff::Var log_scale, shift, scale_cap;
    std::array<diff::Var, kFcnDepth> scale_w, scale_b, shift_w, shift_b;
  };

  diff::Var norm_log_scale(std::size_t b);
  diff::Var fcn(diff::Var x, const std::array<diff::Var, kFcnDepth>& w, const std::array<diff::Var, kFcnDepth>& bias);

  diff::Tape& tape_;
  const FlowModel& model_;
  std::vector<BlockVars> blocks_;
  std::vector<diff::Var> params_;
};

/// Kernel flattened row-major into a [B, D] tensor.
diff::Tensor kernels_to_tensor(std::span<const Kernel> kernels);

struct ForwardResult {
  std::vector<double> z;
  double logdet = 0.0;
};

/// z = f(k) and log|det df/dk|, using the model's current statistics.
ForwardResult flow_forward(const FlowModel& model, std::span<const double> k);
ForwardResult flow_forward(const FlowModel& model, const Kernel& k);

/// Raw output of the inverse map reshaped to a kernel grid (no clamping).
/// Requires a frozen model whose dimension is an odd square.
Kernel flow_inverse(const FlowModel& model, std::span<const double> z);
std::vector<double> flow_inverse_values(const FlowModel& model, std::span<const double> z);

/// Mean negative log-likelihood of rows of a [B, D] batch, as a tape node.
diff::Var nll(FlowGraph& graph, diff::Var batch, FlowModel* stats = nullptr);

/// Mean NLL of a batch under the model's current statistics.
double nll_loss(const FlowModel& model, std::span<const Kernel> batch);
double nll_loss(const FlowModel& model, const diff::Tensor& batch);

struct TrainConfig {
  std::size_t iterations = 50'000;
  std::size_t batch_size = 100;
  double learning_rate = 1e-4;
  std::uint64_t seed = 0;
  bool shifted_kernels = true;
  std::size_t log_every = 100;
};

struct TrainReport {
  std::vector<double> logged_nll;  // batch NLL at each logged iteration
  double initial_nll = 0.0;
  double final_nll = 0.0;
};

/// Called after every iteration with the 1-based iteration number.
using TrainObserver = std::function<void(std::size_t iteration, double batch_nll, const FlowModel& model)>;

/// Adam on the NLL of freshly sampled Gaussian kernels. Writes
/// "iter=<n> nll=<value>" lines to `log`. Freezes the model on success.
/// On a numeric error the model is restored to the last good parameters and
/// the error is rethrown.
TrainReport train(FlowModel& model, const TrainConfig& config, std::ostream* log = nullptr,
                  const TrainObserver& observer = {});

struct SampledKernel {
  Kernel kernel;                 // clamped and renormalized
  std::vector<double> latent;
  std::vector<double> raw;       // inverse-map output before clamping
  double negative_mass = 0.0;    // sum of negative weights over sum of |weights|, before clamping
};

/// Clamp negatives to 0 and renormalize to sum 1.
Kernel post_process(std::span<const double> raw, std::size_t side);
double negative_mass_fraction(std::span<const double> raw);

/// z * sqrt(D) / |z|. Throws DegenerateError for a zero vector.
std::vector<double> project_sphere(std::span<const double> z);

/// z ~ N(0, I), optionally rescaled to norm sqrt(D), mapped through the inverse.
SampledKernel sample(const FlowModel& model, Rng& rng, bool project = true);

/// Binary model file, magic "FKP1", little-endian.
void write_model(std::ostream& out, const FlowModel& model);
FlowModel read_model(std::istream& in);
std::vector<std::uint8_t> save(const FlowModel& model);
FlowModel load(std::span<const std::uint8_t> bytes);
void save_model(const std::filesystem::path& path, const FlowModel& model);
FlowModel load_model(const std::filesystem::path& path);

}  // namespace fkp::flow
