#pragma once

#include <cstddef>
#include <vector>

#include "metarecon/networks.hpp"
#include "metarecon/physics.hpp"
#include "metarecon/tensor.hpp"

namespace metarecon {

/// Acquired data of one task slice.
struct TaskInput {
  Tensor kspace;  // (c, H, W, 2), zero off the mask
  SamplingMask mask;
};

struct ReconConfig {
  std::size_t outer_iterations = 5;  // T
  std::size_t inner_steps = 5;       // r

  static ReconConfig from(const ModelSpec& spec) {
    return {spec.outer_iterations, spec.inner_steps};
  }
};

struct ReconOutput {
  std::vector<Tensor> x0;     // initializer output per task
  std::vector<Tensor> x_T;    // coil stacks after the last outer iteration
  std::vector<Tensor> x_hat;  // distributed images Z_i(H([J_j(x_T)])), (H, W)
  std::vector<Tensor> x_hat0; // same composition applied to x0
};

/// x_hat_i = Z_i(H([J_1(x_1), ..., J_m(x_m)])) for every task.
std::vector<Tensor> distribute(const ParamStore& params, const std::vector<Tensor>& xs);

/// Per task, 0.5 ||x_hat_i - rss(x_i)||^2.
std::vector<Tensor> constraint_residual(const std::vector<Tensor>& xs, const ParamStore& params);

/// r simultaneous descent steps on the summed constraint residual, with step
/// delta(t, tau). With grad mode on the steps stay differentiable (through
/// second derivatives) in the parameters and in xs.
std::vector<Tensor> lower_level_gd(const std::vector<Tensor>& xs, const ParamStore& params,
                                   std::size_t t, std::size_t r);

/// Data-consistency step, image prox and k-space prox for every task.
std::vector<Tensor> outer_iteration(const std::vector<Tensor>& xs,
                                    const std::vector<TaskInput>& inputs,
                                    const ParamStore& params, std::size_t t);

std::vector<Tensor> initial_estimate(const std::vector<TaskInput>& inputs,
                                     const ParamStore& params);

ReconOutput reconstruct(const std::vector<TaskInput>& inputs, const ParamStore& params,
                        const ReconConfig& cfg);

/// Tasks iterate independently with no inner loop. x_hat holds rss(x_T) and
/// x_hat0 is left empty.
ReconOutput reconstruct_stl(const std::vector<TaskInput>& inputs, const ParamStore& params,
                            const ReconConfig& cfg);

}  // namespace metarecon
