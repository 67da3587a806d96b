#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "metarecon/physics.hpp"
#include "metarecon/tensor.hpp"

namespace metarecon {

enum class Activation { relu, softplus };

Activation parse_activation(const std::string& name);
std::string activation_name(Activation a);

/// Shape of one convolutional family: `layers` convs of `width` channels
/// with the activation between them and none after the last.
struct NetSpec {
  std::size_t layers = 3;
  std::size_t width = 32;
  std::size_t kernel = 3;
  bool residual = false;
  Activation activation = Activation::relu;

  void validate() const;
};

/// Everything needed to lay out a ParamStore.
struct ModelSpec {
  std::size_t coils = 4;
  std::size_t tasks = 4;
  std::size_t width = 32;       // G, K, J, Z and the initializer
  std::size_t meta_width = 32;  // hidden width of H
  std::size_t features = 32;    // d, channels of H's output
  std::size_t kernel = 3;
  std::size_t base_layers = 3;
  std::size_t meta_layers = 4;
  std::size_t outer_iterations = 5;  // T
  std::size_t inner_steps = 5;       // r
  double rho0 = 0.5;
  double delta0 = 0.5;
  /// G, K and the initializer.
  Activation base_activation = Activation::relu;
  /// J, H and Z. Their input gradients are part of the forward map through
  /// the inner loop, so a ReLU here makes the reconstruction discontinuous
  /// in the weights.
  Activation meta_activation = Activation::softplus;
  /// False for single-task learning: no H, J, Z and no step sizes delta.
  bool meta = true;

  void validate() const;
  NetSpec residual_net() const { return {base_layers, width, kernel, true, base_activation}; }
  NetSpec coupling_net() const { return {base_layers, width, kernel, false, meta_activation}; }
  NetSpec meta_net() const { return {meta_layers, meta_width, kernel, false, meta_activation}; }
};

struct ConvLayer {
  Tensor weight;  // (Cout, Cin, k, k)
  Tensor bias;    // (Cout)
};

/// Plain CNN over (C, H, W) tensors with "same" zero padding.
struct ConvNet {
  std::vector<ConvLayer> layers;
  Activation activation = Activation::relu;

  static ConvNet zeros(std::size_t in_channels, std::size_t out_channels, const NetSpec& spec);

  bool empty() const { return layers.empty(); }
  std::size_t in_channels() const { return layers.front().weight.dim(1); }
  std::size_t out_channels() const { return layers.back().weight.dim(0); }
  Tensor forward(const Tensor& x) const;
};

/// Task-specific weights w_i.
struct TaskParams {
  ConvNet prox_image;   // G_i
  ConvNet prox_kspace;  // K_i
  ConvNet combiner;     // J_i (empty without a meta-learner)
  ConvNet distributor;  // Z_i (empty without a meta-learner)
  ConvNet initializer;
  std::vector<Tensor> rho;  // rho_i^(t), t < T
};

/// Shared meta-knowledge Theta.
struct MetaParams {
  ConvNet learner;            // H
  std::vector<Tensor> delta;  // delta_(t, tau) at t * r + tau
};

/// Named mutable view of one parameter tensor.
struct ParamRef {
  std::string name;
  Tensor* tensor;
};

struct ParamStore {
  ModelSpec spec;
  std::vector<TaskParams> tasks;
  std::optional<MetaParams> meta;

  /// Parameters of w_i, in a fixed order.
  std::vector<ParamRef> base_group(std::size_t task);
  /// Parameters of Theta (empty when there is no meta-learner).
  std::vector<ParamRef> meta_group();
  /// Every parameter: all base groups in task order, then Theta.
  std::vector<ParamRef> all();
  std::vector<Tensor> values(const std::vector<ParamRef>& refs) const;
  std::vector<Tensor> base_values(std::size_t task) const;
  std::vector<Tensor> meta_values() const;

  /// Copy sharing all values, where only the selected groups require grad.
  ParamStore with_trainable(bool base, bool meta_group) const;
  const Tensor& delta(std::size_t t, std::size_t tau) const;
};

/// Xavier-uniform conv weights (bound sqrt(6 / (fan_in + fan_out)) with fans
/// counting the k x k window), zero biases, rho = rho0 and delta = delta0.
ParamStore init_params(const ModelSpec& spec, std::uint64_t seed);

/// Zero-weight store: every residual family is the identity.
ParamStore zero_params(const ModelSpec& spec);

/// Image-domain prox, b + R_G(b) over 2c stacked channels.
Tensor prox_image_apply(const ConvNet& net, const Tensor& coils);
/// k-space prox, F^H (F x + R_K(F x)).
Tensor prox_kspace_apply(const ConvNet& net, const Tensor& coils);
/// J: (c, H, W, 2) -> one complex image (H, W, 2).
Tensor coil_combine(const ConvNet& net, const Tensor& coils);
/// H: m complex images -> (d, H, W) features.
Tensor meta_forward(const ConvNet& net, const std::vector<Tensor>& combined);
/// Z: (d, H, W) -> nonnegative real image (H, W) through a softplus head.
Tensor meta_distribute(const ConvNet& net, const Tensor& features);
/// x0 = F^H (f + (1 - P) R_init(f)); acquired samples pass through untouched.
Tensor init_recon(const ConvNet& net, const Tensor& kspace, const SamplingMask& mask);

}  // namespace metarecon
