#include "cellsleep/nn.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "cellsleep/errors.hpp"

namespace cellsleep::nn {

using Eigen::Index;
using Eigen::Map;
using Eigen::MatrixXd;
using Eigen::VectorXd;

std::string_view to_string(Activation a) { return a == Activation::Relu ? "relu" : "tanh"; }

std::string_view to_string(OutputActivation a) {
  switch (a) {
    case OutputActivation::Linear: return "linear";
    case OutputActivation::Sigmoid: return "sigmoid";
    case OutputActivation::PerUnitSigmoid: return "per_unit_sigmoid";
    case OutputActivation::Relu: return "relu";
  }
  return "linear";
}

Activation parse_activation(std::string_view name) {
  if (name == "relu") return Activation::Relu;
  if (name == "tanh") return Activation::Tanh;
  throw ValidationError("unknown activation '" + std::string(name) + "'");
}

OutputActivation parse_output_activation(std::string_view name) {
  for (auto a : {OutputActivation::Linear, OutputActivation::Sigmoid,
                 OutputActivation::PerUnitSigmoid, OutputActivation::Relu}) {
    if (to_string(a) == name) return a;
  }
  throw ValidationError("unknown output activation '" + std::string(name) + "'");
}

std::size_t LayerSpec::param_count() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) n += (widths[l] + 1) * widths[l + 1];
  return n;
}

std::size_t LayerSpec::layer_offset(std::size_t layer) const {
  std::size_t off = 0;
  for (std::size_t l = 0; l < layer; ++l) off += (widths[l] + 1) * widths[l + 1];
  return off;
}

void LayerSpec::validate() const {
  if (widths.size() < 2) throw ShapeError("a network needs an input and an output width");
  for (auto w : widths) {
    if (w < 1) throw ShapeError("layer widths must be >= 1");
  }
}

bool ParamVector::all_finite() const {
  return std::all_of(values.begin(), values.end(), [](double x) { return std::isfinite(x); });
}

ParamVector init_params(const LayerSpec& spec, std::mt19937_64& rng) {
  spec.validate();
  ParamVector p(spec.param_count());
  std::size_t off = 0;
  for (std::size_t l = 0; l < spec.num_layers(); ++l) {
    const std::size_t in = spec.widths[l];
    const std::size_t out = spec.widths[l + 1];
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (std::size_t k = 0; k < in * out; ++k) p.values[off + k] = dist(rng);
    off += (in + 1) * out;  // biases stay zero
  }
  return p;
}

namespace {

void check_params(const LayerSpec& spec, const ParamVector& params) {
  spec.validate();
  if (params.size() != spec.param_count()) {
    throw ShapeError("parameter vector has " + std::to_string(params.size()) + " values, spec needs " +
                     std::to_string(spec.param_count()));
  }
}

void apply_hidden(Activation a, VectorXd& z) {
  if (a == Activation::Relu) {
    z = z.cwiseMax(0.0);
  } else {
    z = z.array().tanh();
  }
}

void apply_output(OutputActivation a, VectorXd& z) {
  switch (a) {
    case OutputActivation::Linear: break;
    case OutputActivation::Sigmoid:
    case OutputActivation::PerUnitSigmoid: z = (1.0 + (-z.array()).exp()).inverse(); break;
    case OutputActivation::Relu: z = z.cwiseMax(0.0); break;
  }
}

// Multiplies delta in place by the activation derivative, expressed through
// the post-activation value y.
void scale_by_hidden_derivative(Activation a, const VectorXd& y, VectorXd& delta) {
  if (a == Activation::Relu) {
    delta = (y.array() > 0.0).select(delta, 0.0);
  } else {
    delta.array() *= 1.0 - y.array().square();
  }
}

void scale_by_output_derivative(OutputActivation a, const VectorXd& y, VectorXd& delta) {
  switch (a) {
    case OutputActivation::Linear: break;
    case OutputActivation::Sigmoid:
    case OutputActivation::PerUnitSigmoid: delta.array() *= y.array() * (1.0 - y.array()); break;
    case OutputActivation::Relu: delta = (y.array() > 0.0).select(delta, 0.0); break;
  }
}

}  // namespace

void forward_cached(const LayerSpec& spec, const ParamVector& params,
                    std::span<const double> input, ForwardCache& cache) {
  check_params(spec, params);
  if (input.size() != spec.input_width()) {
    throw ShapeError("input width " + std::to_string(input.size()) + " != " +
                     std::to_string(spec.input_width()));
  }
  const std::size_t layers = spec.num_layers();
  cache.activations.resize(layers + 1);
  cache.activations[0] = Map<const VectorXd>(input.data(), static_cast<Index>(input.size()));
  const double* p = params.values.data();
  for (std::size_t l = 0; l < layers; ++l) {
    const auto in = static_cast<Index>(spec.widths[l]);
    const auto out = static_cast<Index>(spec.widths[l + 1]);
    Map<const MatrixXd> w(p, out, in);
    Map<const VectorXd> b(p + out * in, out);
    VectorXd& z = cache.activations[l + 1];
    z.noalias() = w * cache.activations[l];
    z += b;
    if (l + 1 < layers) {
      apply_hidden(spec.hidden, z);
    } else {
      apply_output(spec.output, z);
    }
    p += (in + 1) * out;
  }
}

std::vector<double> forward(const LayerSpec& spec, const ParamVector& params,
                            std::span<const double> input) {
  ForwardCache cache;
  forward_cached(spec, params, input, cache);
  const auto& y = cache.output();
  return {y.data(), y.data() + y.size()};
}

void backward_accumulate(const LayerSpec& spec, const ParamVector& params,
                         const ForwardCache& cache, const Eigen::Ref<const VectorXd>& upstream,
                         std::span<double> param_grad, VectorXd* input_grad, double scale) {
  check_params(spec, params);
  const std::size_t layers = spec.num_layers();
  if (cache.activations.size() != layers + 1) throw ShapeError("forward cache does not match spec");
  if (static_cast<std::size_t>(upstream.size()) != spec.output_width()) {
    throw ShapeError("upstream gradient width does not match the output");
  }
  if (param_grad.size() != params.size()) throw ShapeError("gradient buffer has the wrong size");

  VectorXd delta = upstream * scale;
  scale_by_output_derivative(spec.output, cache.activations[layers], delta);
  for (std::size_t l = layers; l-- > 0;) {
    const auto in = static_cast<Index>(spec.widths[l]);
    const auto out = static_cast<Index>(spec.widths[l + 1]);
    const std::size_t off = spec.layer_offset(l);
    Map<MatrixXd> gw(param_grad.data() + off, out, in);
    Map<VectorXd> gb(param_grad.data() + off + static_cast<std::size_t>(out * in), out);
    gw.noalias() += delta * cache.activations[l].transpose();
    gb += delta;
    if (l == 0 && input_grad == nullptr) break;
    Map<const MatrixXd> w(params.values.data() + off, out, in);
    VectorXd next = w.transpose() * delta;
    if (l > 0) {
      scale_by_hidden_derivative(spec.hidden, cache.activations[l], next);
      delta = std::move(next);
    } else {
      *input_grad = std::move(next);
    }
  }
}

BackwardResult backward(const LayerSpec& spec, const ParamVector& params,
                        std::span<const double> input, std::span<const double> upstream) {
  ForwardCache cache;
  forward_cached(spec, params, input, cache);
  if (upstream.size() != spec.output_width()) {
    throw ShapeError("upstream gradient width does not match the output");
  }
  BackwardResult r;
  r.param_grad = Gradient(params.size());
  VectorXd in_grad;
  backward_accumulate(spec, params, cache,
                      Map<const VectorXd>(upstream.data(), static_cast<Index>(upstream.size())),
                      r.param_grad.span(), &in_grad);
  r.input_grad.assign(in_grad.data(), in_grad.data() + in_grad.size());
  return r;
}

constexpr double kMomentFloor = 1e-150;

void adam_step(ParamVector& params, const Gradient& grad, AdamState& state, const AdamConfig& cfg,
               Direction dir) {
  if (grad.size() != params.size()) throw ShapeError("adam_step: gradient size mismatch");
  if (state.m.size() != params.size()) {
    state = AdamState(params.size());
  }
  if (!grad.all_finite()) throw DomainError("adam_step: non-finite gradient");
  if (!(cfg.lr >= 0.0)) throw DomainError("adam_step: learning rate must be non-negative");

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  const double sign = dir == Direction::Descend ? -1.0 : 1.0;

  auto g = grad.vec().array();
  Map<VectorXd> m(state.m.data(), static_cast<Index>(state.m.size()));
  Map<VectorXd> v(state.v.data(), static_cast<Index>(state.v.size()));
  m.array() = cfg.beta1 * m.array() + (1.0 - cfg.beta1) * g;
  v.array() = cfg.beta2 * v.array() + (1.0 - cfg.beta2) * g.square();
  // Moments of parameters with persistently zero gradient decay into the
  // subnormal range, which is very slow on x86.
  m = (m.array().abs() < kMomentFloor).select(0.0, m);
  v = (v.array() < kMomentFloor).select(0.0, v);
  params.vec().array() +=
      sign * cfg.lr * (m.array() / c1) / ((v.array() / c2).sqrt() + cfg.eps);
}

void sgd_step(ParamVector& params, const Gradient& grad, double lr, Direction dir) {
  if (grad.size() != params.size()) throw ShapeError("sgd_step: gradient size mismatch");
  if (!grad.all_finite()) throw DomainError("sgd_step: non-finite gradient");
  const double sign = dir == Direction::Descend ? -1.0 : 1.0;
  params.vec() += (sign * lr) * grad.vec();
}

Optimizer::Optimizer(Kind kind, std::size_t n, AdamConfig cfg)
    : kind_(kind), cfg_(cfg), state_(kind == Kind::Adam ? AdamState(n) : AdamState()) {}

void Optimizer::step(ParamVector& params, const Gradient& grad, Direction dir) {
  if (kind_ == Kind::Adam) {
    adam_step(params, grad, state_, cfg_, dir);
  } else {
    sgd_step(params, grad, cfg_.lr, dir);
  }
}

Optimizer::Kind parse_optimizer(std::string_view name) {
  if (name == "adam") return Optimizer::Kind::Adam;
  if (name == "sgd") return Optimizer::Kind::Sgd;
  throw ValidationError("unknown optimizer '" + std::string(name) + "'");
}

std::string_view to_string(Optimizer::Kind k) { return k == Optimizer::Kind::Adam ? "adam" : "sgd"; }

const NamedBlock& Checkpoint::block(std::string_view name) const {
  for (const auto& b : blocks) {
    if (b.name == name) return b;
  }
  throw ValidationError("checkpoint has no block '" + std::string(name) + "'");
}

namespace {

constexpr std::string_view kFormat = "cellsleep-params";

std::uint64_t to_little_endian(std::uint64_t x) {
  if constexpr (std::endian::native == std::endian::big) {
    std::uint64_t r = 0;
    for (int i = 0; i < 8; ++i) r |= ((x >> (8 * i)) & 0xffu) << (8 * (7 - i));
    return r;
  }
  return x;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  nlohmann::json header;
  header["format"] = kFormat;
  header["version"] = 1;
  header["byte_order"] = "little";
  header["meta"] = ckpt.meta;
  header["blocks"] = nlohmann::json::array();
  for (const auto& b : ckpt.blocks) {
    b.spec.validate();
    if (b.params.size() != b.spec.param_count()) {
      throw ShapeError("block '" + b.name + "' does not match its spec");
    }
    header["blocks"].push_back({{"name", b.name},
                                {"widths", b.spec.widths},
                                {"hidden", to_string(b.spec.hidden)},
                                {"output", to_string(b.spec.output)},
                                {"count", b.params.size()}});
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  out << header.dump() << '\n';
  for (const auto& b : ckpt.blocks) {
    for (double x : b.params.values) {
      const std::uint64_t le = to_little_endian(std::bit_cast<std::uint64_t>(x));
      char bytes[8];
      std::memcpy(bytes, &le, 8);
      out.write(bytes, 8);
    }
  }
  if (!out) throw Error("failed writing '" + path.string() + "'");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line)) throw ParseError(1, "missing checkpoint header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(1, std::string("bad checkpoint header: ") + e.what());
  }
  if (header.value("format", "") != kFormat || header.value("version", 0) != 1) {
    throw ValidationError("'" + path.string() + "' is not a version-1 parameter checkpoint");
  }
  Checkpoint ckpt;
  ckpt.meta = header.value("meta", nlohmann::json::object());
  for (const auto& jb : header.at("blocks")) {
    NamedBlock b;
    b.name = jb.at("name").get<std::string>();
    b.spec.widths = jb.at("widths").get<std::vector<std::size_t>>();
    b.spec.hidden = parse_activation(jb.at("hidden").get<std::string>());
    b.spec.output = parse_output_activation(jb.at("output").get<std::string>());
    b.spec.validate();
    const auto count = jb.at("count").get<std::size_t>();
    if (count != b.spec.param_count()) throw ValidationError("block '" + b.name + "' count mismatch");
    b.params = ParamVector(count);
    for (double& x : b.params.values) {
      char bytes[8];
      if (!in.read(bytes, 8)) throw ValidationError("checkpoint payload truncated");
      std::uint64_t le = 0;
      std::memcpy(&le, bytes, 8);
      x = std::bit_cast<double>(to_little_endian(le));
    }
    ckpt.blocks.push_back(std::move(b));
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw ValidationError("checkpoint has trailing bytes");
  }
  return ckpt;
}

}  // namespace cellsleep::nn
