#pragma once

// Small dense-network engine shared by the traffic predictor, the actor and
// the critic: forward pass, exact reverse-mode gradients, SGD/Adam steps and
// a flat binary checkpoint format.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

namespace cellsleep::nn {

enum class Activation { Relu, Tanh };
enum class OutputActivation { Linear, Sigmoid, PerUnitSigmoid, Relu };

std::string_view to_string(Activation a);
std::string_view to_string(OutputActivation a);
Activation parse_activation(std::string_view name);
OutputActivation parse_output_activation(std::string_view name);

/// Layer widths from input to output; widths.size() - 1 affine layers.
struct LayerSpec {
  std::vector<std::size_t> widths;
  Activation hidden = Activation::Relu;
  OutputActivation output = OutputActivation::Linear;

  std::size_t num_layers() const { return widths.empty() ? 0 : widths.size() - 1; }
  std::size_t input_width() const { return widths.front(); }
  std::size_t output_width() const { return widths.back(); }
  /// Sum over layers of (in + 1) * out.
  std::size_t param_count() const;
  /// Offset of layer l's weight block (out x in, column-major); its bias follows.
  std::size_t layer_offset(std::size_t layer) const;
  /// Throws ShapeError unless there are >= 2 widths, all >= 1.
  void validate() const;

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

/// Flat parameter storage; layer l occupies [layer_offset(l), layer_offset(l+1)).
struct ParamVector {
  std::vector<double> values;

  ParamVector() = default;
  explicit ParamVector(std::size_t n, double fill = 0.0) : values(n, fill) {}
  explicit ParamVector(std::vector<double> v) : values(std::move(v)) {}

  std::size_t size() const { return values.size(); }
  std::span<double> span() { return values; }
  std::span<const double> span() const { return values; }
  Eigen::Map<Eigen::VectorXd> vec() {
    return {values.data(), static_cast<Eigen::Index>(values.size())};
  }
  Eigen::Map<const Eigen::VectorXd> vec() const {
    return {values.data(), static_cast<Eigen::Index>(values.size())};
  }
  bool all_finite() const;

  friend bool operator==(const ParamVector&, const ParamVector&) = default;
};

/// Shape-matched gradient of a ParamVector.
using Gradient = ParamVector;

/// Uniform in +-sqrt(6 / (fan_in + fan_out)) for weights, zero biases.
ParamVector init_params(const LayerSpec& spec, std::mt19937_64& rng);

/// Post-activation outputs of every layer; activations[0] is the input.
struct ForwardCache {
  std::vector<Eigen::VectorXd> activations;
  const Eigen::VectorXd& output() const { return activations.back(); }
};

/// Output of the network for one input. Throws ShapeError on mismatch.
std::vector<double> forward(const LayerSpec& spec, const ParamVector& params,
                            std::span<const double> input);
void forward_cached(const LayerSpec& spec, const ParamVector& params,
                    std::span<const double> input, ForwardCache& cache);

struct BackwardResult {
  Gradient param_grad;
  std::vector<double> input_grad;
};

/// Gradient of dot(output, upstream) w.r.t. parameters and input.
BackwardResult backward(const LayerSpec& spec, const ParamVector& params,
                        std::span<const double> input, std::span<const double> upstream);

/// Allocation-light form: adds `scale` times the parameter gradient into
/// `param_grad` and, when `input_grad` is non-null, writes the input gradient.
void backward_accumulate(const LayerSpec& spec, const ParamVector& params,
                         const ForwardCache& cache, const Eigen::Ref<const Eigen::VectorXd>& upstream,
                         std::span<double> param_grad, Eigen::VectorXd* input_grad,
                         double scale = 1.0);

enum class Direction { Descend, Ascend };

struct AdamConfig {
  double lr = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::int64_t step = 0;

  AdamState() = default;
  explicit AdamState(std::size_t n) : m(n, 0.0), v(n, 0.0) {}
};

/// One bias-corrected Adam step. Throws DomainError on non-finite gradients
/// and ShapeError on size mismatch.
void adam_step(ParamVector& params, const Gradient& grad, AdamState& state,
               const AdamConfig& cfg, Direction dir = Direction::Descend);

/// params -/+= lr * grad.
void sgd_step(ParamVector& params, const Gradient& grad, double lr,
              Direction dir = Direction::Descend);

/// Either SGD or Adam behind one interface.
class Optimizer {
 public:
  enum class Kind { Sgd, Adam };

  Optimizer() = default;
  Optimizer(Kind kind, std::size_t n, AdamConfig cfg);

  void step(ParamVector& params, const Gradient& grad, Direction dir);
  Kind kind() const { return kind_; }
  double lr() const { return cfg_.lr; }

 private:
  Kind kind_ = Kind::Sgd;
  AdamConfig cfg_{};
  AdamState state_{};
};

Optimizer::Kind parse_optimizer(std::string_view name);
std::string_view to_string(Optimizer::Kind k);

/// One named network inside a checkpoint.
struct NamedBlock {
  std::string name;
  LayerSpec spec;
  ParamVector params;
};

struct Checkpoint {
  std::vector<NamedBlock> blocks;
  nlohmann::json meta = nlohmann::json::object();

  const NamedBlock& block(std::string_view name) const;
};

/// A single JSON header line followed by every block's values as
/// little-endian IEEE-754 doubles, in block order.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace cellsleep::nn
