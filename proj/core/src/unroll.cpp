#include "metarecon/unroll.hpp"

#include <string>

#include "metarecon/errors.hpp"
#include "metarecon/ops.hpp"

namespace metarecon {

namespace {

void check_tasks(std::size_t count, const ParamStore& params, const char* who) {
  if (count != params.tasks.size()) {
    throw ShapeError(std::string(who) + ": got " + std::to_string(count) + " tasks, store has " +
                     std::to_string(params.tasks.size()));
  }
}

void check_config(const ReconConfig& cfg, const ParamStore& params, bool meta) {
  if (cfg.outer_iterations > params.spec.outer_iterations) {
    throw ParameterError("reconstruct: T = " + std::to_string(cfg.outer_iterations) +
                         " exceeds the " + std::to_string(params.spec.outer_iterations) +
                         " step sizes in the store");
  }
  if (meta && cfg.inner_steps > 0 && cfg.inner_steps > params.spec.inner_steps) {
    throw ParameterError("reconstruct: r = " + std::to_string(cfg.inner_steps) +
                         " exceeds the " + std::to_string(params.spec.inner_steps) +
                         " inner step sizes in the store");
  }
}

}  // namespace

std::vector<Tensor> distribute(const ParamStore& params, const std::vector<Tensor>& xs) {
  check_tasks(xs.size(), params, "distribute");
  if (!params.meta) throw ParameterError("distribute: store has no meta-learner");
  std::vector<Tensor> combined;
  combined.reserve(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    combined.push_back(coil_combine(params.tasks[i].combiner, xs[i]));
  }
  const Tensor features = meta_forward(params.meta->learner, combined);
  std::vector<Tensor> out;
  out.reserve(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    out.push_back(meta_distribute(params.tasks[i].distributor, features));
  }
  return out;
}

std::vector<Tensor> constraint_residual(const std::vector<Tensor>& xs, const ParamStore& params) {
  const std::vector<Tensor> hats = distribute(params, xs);
  std::vector<Tensor> out;
  out.reserve(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    out.push_back(0.5 * sum(square(hats[i] - rss(xs[i]))));
  }
  return out;
}

std::vector<Tensor> lower_level_gd(const std::vector<Tensor>& xs, const ParamStore& params,
                                   std::size_t t, std::size_t r) {
  check_tasks(xs.size(), params, "lower_level_gd");
  const bool create_graph = grad_enabled();
  std::vector<Tensor> cur = xs;
  for (std::size_t tau = 0; tau < r; ++tau) {
    std::vector<Tensor> g;
    {
      GradModeGuard on(true);
      for (Tensor& x : cur) {
        if (!create_graph || !x.requires_grad()) x = x.detach(true);
      }
      std::vector<Tensor> residuals = constraint_residual(cur, params);
      Tensor total = residuals.front();
      for (std::size_t i = 1; i < residuals.size(); ++i) total = total + residuals[i];
      g = grad(total, cur, create_graph);
    }
    const Tensor& step = params.delta(t, tau);
    for (std::size_t i = 0; i < cur.size(); ++i) cur[i] = cur[i] - step * g[i];
  }
  if (!create_graph) {
    for (Tensor& x : cur) x = x.detach();
  }
  return cur;
}

std::vector<Tensor> outer_iteration(const std::vector<Tensor>& xs,
                                    const std::vector<TaskInput>& inputs,
                                    const ParamStore& params, std::size_t t) {
  check_tasks(xs.size(), params, "outer_iteration");
  check_tasks(inputs.size(), params, "outer_iteration");
  std::vector<Tensor> out;
  out.reserve(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const TaskParams& p = params.tasks[i];
    const Tensor b = dc_step(xs[i], inputs[i].kspace, inputs[i].mask, p.rho.at(t));
    const Tensor x_bar = prox_image_apply(p.prox_image, b);
    out.push_back(prox_kspace_apply(p.prox_kspace, x_bar));
  }
  return out;
}

std::vector<Tensor> initial_estimate(const std::vector<TaskInput>& inputs,
                                     const ParamStore& params) {
  check_tasks(inputs.size(), params, "initial_estimate");
  std::vector<Tensor> out;
  out.reserve(inputs.size());
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    out.push_back(init_recon(params.tasks[i].initializer, inputs[i].kspace, inputs[i].mask));
  }
  return out;
}

ReconOutput reconstruct(const std::vector<TaskInput>& inputs, const ParamStore& params,
                        const ReconConfig& cfg) {
  check_config(cfg, params, true);
  ReconOutput out;
  out.x0 = initial_estimate(inputs, params);
  out.x_hat0 = distribute(params, out.x0);
  std::vector<Tensor> xs = out.x0;
  for (std::size_t t = 0; t < cfg.outer_iterations; ++t) {
    xs = lower_level_gd(xs, params, t, cfg.inner_steps);
    xs = outer_iteration(xs, inputs, params, t);
  }
  out.x_hat = cfg.outer_iterations == 0 ? out.x_hat0 : distribute(params, xs);
  out.x_T = std::move(xs);
  return out;
}

ReconOutput reconstruct_stl(const std::vector<TaskInput>& inputs, const ParamStore& params,
                            const ReconConfig& cfg) {
  check_config(cfg, params, false);
  ReconOutput out;
  out.x0 = initial_estimate(inputs, params);
  std::vector<Tensor> xs = out.x0;
  for (std::size_t t = 0; t < cfg.outer_iterations; ++t) {
    xs = outer_iteration(xs, inputs, params, t);
  }
  for (const Tensor& x : xs) out.x_hat.push_back(rss(x));
  out.x_T = std::move(xs);
  return out;
}

}  // namespace metarecon
