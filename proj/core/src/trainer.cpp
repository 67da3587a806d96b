#include "metarecon/trainer.hpp"

#include <cmath>
#include <fstream>

#include "metarecon/errors.hpp"
#include "metarecon/ops.hpp"
#include "metarecon/parallel.hpp"

namespace metarecon {

namespace {

void check_datasets(const std::vector<TaskDataset>& datasets, const ParamStore& params) {
  if (datasets.empty()) throw ParameterError("training needs at least one task dataset");
  if (datasets.size() != params.tasks.size()) {
    throw ShapeError("got " + std::to_string(datasets.size()) + " datasets for " +
                     std::to_string(params.tasks.size()) + " tasks");
  }
  for (const TaskDataset& ds : datasets) {
    if (ds.slices.empty()) throw ParameterError("task dataset '" + ds.name + "' is empty");
  }
}

void add_into(std::vector<Tensor>& acc, const std::vector<Tensor>& g) {
  if (acc.empty()) {
    acc = g;
    return;
  }
  for (std::size_t k = 0; k < acc.size(); ++k) acc[k] = acc[k] + g[k];
}

// Everything one slice contributes to an update: per-task losses and metrics
// plus the requested gradients (one list per task, or a single list).
struct SliceResult {
  std::vector<double> losses;
  std::vector<MetricReport> reports;
  std::vector<std::vector<Tensor>> grads;
};

enum class Target { meta, base };

SliceResult run_slice(const std::vector<TaskDataset>& datasets, const ParamStore& params,
                      const ReconConfig& recon, const TrainConfig& cfg, std::size_t slice,
                      bool stl, Target target) {
  const auto inputs = slice_inputs(datasets, slice);
  const auto targets = slice_targets(datasets, slice);
  const double scale = 1.0 / static_cast<double>(cfg.batch);
  const ReconOutput out =
      stl ? reconstruct_stl(inputs, params, recon) : reconstruct(inputs, params, recon);

  SliceResult result;
  std::vector<Tensor> losses;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const Tensor l = stl ? stl_loss(out.x_hat[i], targets[i], cfg.mu)
                         : base_loss(out.x_hat[i], out.x_hat0[i], targets[i], cfg.lambda, cfg.mu);
    losses.push_back(l * scale);
    result.losses.push_back(l.item() * scale);
    result.reports.push_back(evaluate(out.x_hat[i], targets[i]));
  }

  if (target == Target::meta) {
    result.grads.push_back(grad(total_loss(losses), params.meta_values()));
  } else {
    for (std::size_t i = 0; i < losses.size(); ++i) {
      result.grads.push_back(grad(losses[i], params.base_values(i)));
    }
  }
  return result;
}

// Runs every slice of the window (in parallel) and reduces in slice order.
SliceResult run_window(const std::vector<TaskDataset>& datasets, const ParamStore& params,
                       const ReconConfig& recon, const TrainConfig& cfg, std::size_t start,
                       bool stl, Target target) {
  std::vector<SliceResult> parts(cfg.batch);
  parallel_for(cfg.batch, [&](std::size_t k) {
    parts[k] = run_slice(datasets, params, recon, cfg, start + k, stl, target);
  });
  SliceResult total = parts.front();
  for (std::size_t k = 1; k < parts.size(); ++k) {
    for (std::size_t i = 0; i < total.losses.size(); ++i) {
      total.losses[i] += parts[k].losses[i];
      total.reports[i].psnr += parts[k].reports[i].psnr;
      total.reports[i].ssim += parts[k].reports[i].ssim;
      total.reports[i].nmse += parts[k].reports[i].nmse;
    }
    for (std::size_t g = 0; g < total.grads.size(); ++g) add_into(total.grads[g], parts[k].grads[g]);
  }
  const double n = static_cast<double>(cfg.batch);
  for (MetricReport& r : total.reports) {
    r.psnr /= n;
    r.ssim /= n;
    r.nmse /= n;
  }
  return total;
}

EpochResult summarize(const SliceResult& r) {
  EpochResult out;
  for (std::size_t i = 0; i < r.losses.size(); ++i) {
    out.tasks.push_back({r.losses[i], r.reports[i]});
    out.total += r.losses[i];
  }
  return out;
}

void adam_records(std::vector<Record>& out, const std::vector<ParamRef>& refs,
                  const AdamState& state, const std::string& group) {
  for (std::size_t k = 0; k < refs.size(); ++k) {
    const Tensor zero = Tensor::zeros(refs[k].tensor->shape());
    out.push_back({refs[k].name + ".m", state.m.empty() ? zero : state.m[k]});
    out.push_back({refs[k].name + ".v", state.v.empty() ? zero : state.v[k]});
  }
  out.push_back({"adam." + group + ".step", Tensor::scalar(static_cast<double>(state.step))});
}

void load_adam(AdamState& state, const std::vector<ParamRef>& refs,
               const std::vector<Record>& records, const std::string& group) {
  const Record* step = find_record(records, "adam." + group + ".step");
  if (!step) throw FormatError("checkpoint lacks optimizer state adam." + group + ".step");
  state.step = static_cast<std::uint64_t>(step->value.item());
  state.m.clear();
  state.v.clear();
  for (const ParamRef& ref : refs) {
    const Record* m = find_record(records, ref.name + ".m");
    const Record* v = find_record(records, ref.name + ".v");
    if (!m || !v || m->value.shape() != ref.tensor->shape() ||
        v->value.shape() != ref.tensor->shape()) {
      throw FormatError("checkpoint lacks optimizer moments for " + ref.name);
    }
    state.m.push_back(m->value);
    state.v.push_back(v->value);
  }
}

}  // namespace

void TrainConfig::validate(std::size_t tasks) const {
  if (!(meta_lr > 0.0)) throw ParameterError("meta learning rate must be positive");
  if (!base_lr.empty() && base_lr.size() != tasks) {
    throw ParameterError("need one base learning rate per task");
  }
  for (double a : base_lr) {
    if (!(a > 0.0)) throw ParameterError("base learning rates must be positive");
  }
  if (!(lambda >= 0.0) || !(mu >= 0.0)) throw ParameterError("loss weights must be nonnegative");
  if (batch == 0) throw ParameterError("batch must be at least 1");
}

double TrainConfig::alpha(std::size_t task, const std::string& name) const {
  return base_lr.empty() ? default_base_lr(name) : base_lr.at(task);
}

double default_base_lr(const std::string& task_name) {
  return task_name.find("PD") != std::string::npos ? 5e-4 : 2e-4;
}

Tensor base_loss(const Tensor& x_hat, const Tensor& x_hat0, const Tensor& target, double lambda,
                 double mu) {
  if (x_hat.shape() != target.shape() || x_hat0.shape() != target.shape()) {
    throw ShapeError("base_loss: images must share one shape");
  }
  return l2_norm(x_hat - target) + lambda * l2_norm(x_hat0 - target) - mu * ssim(x_hat, target);
}

Tensor stl_loss(const Tensor& image, const Tensor& target, double mu) {
  if (image.shape() != target.shape()) throw ShapeError("stl_loss: images must share one shape");
  return l2_norm(image - target) - mu * ssim(image, target);
}

Tensor total_loss(std::span<const Tensor> losses) {
  if (losses.empty()) throw ParameterError("total_loss: no task losses");
  Tensor total = losses.front();
  for (std::size_t i = 1; i < losses.size(); ++i) total = total + losses[i];
  return total;
}

void adam_step(const std::vector<ParamRef>& params, std::span<const Tensor> grads,
               AdamState& state, double lr) {
  if (grads.size() != params.size()) throw ShapeError("adam_step: one gradient per parameter");
  if (state.m.empty()) {
    for (const ParamRef& p : params) {
      state.m.push_back(Tensor::zeros(p.tensor->shape()));
      state.v.push_back(Tensor::zeros(p.tensor->shape()));
    }
  }
  if (state.m.size() != params.size()) throw ShapeError("adam_step: state does not match params");
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& p = *params[k].tensor;
    if (grads[k].shape() != p.shape()) {
      throw ShapeError("adam_step: gradient shape mismatch for " + params[k].name);
    }
    std::vector<double> m(state.m[k].data().begin(), state.m[k].data().end());
    std::vector<double> v(state.v[k].data().begin(), state.v[k].data().end());
    std::vector<double> w(p.data().begin(), p.data().end());
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double g = grads[k][i];
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g;
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g * g;
      w[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + state.eps);
    }
    state.m[k] = Tensor(p.shape(), std::move(m));
    state.v[k] = Tensor(p.shape(), std::move(v));
    p = Tensor(p.shape(), std::move(w)).detach(p.requires_grad());
  }
}

OptimizerState OptimizerState::for_store(const ParamStore& store) {
  OptimizerState s;
  s.base.resize(store.tasks.size());
  return s;
}

std::vector<Record> OptimizerState::records(ParamStore& store) const {
  std::vector<Record> out;
  for (std::size_t i = 0; i < store.tasks.size(); ++i) {
    adam_records(out, store.base_group(i), base.at(i), "task" + std::to_string(i));
  }
  if (store.meta) adam_records(out, store.meta_group(), meta, "meta");
  return out;
}

void OptimizerState::load(ParamStore& store, const std::vector<Record>& records) {
  base.assign(store.tasks.size(), AdamState{});
  for (std::size_t i = 0; i < store.tasks.size(); ++i) {
    load_adam(base[i], store.base_group(i), records, "task" + std::to_string(i));
  }
  meta = AdamState{};
  if (store.meta) load_adam(meta, store.meta_group(), records, "meta");
}

std::size_t sample_volume_start(const std::vector<TaskDataset>& datasets, std::size_t batch,
                                std::mt19937_64& rng) {
  std::size_t slices = datasets.front().slices.size();
  for (const TaskDataset& ds : datasets) slices = std::min(slices, ds.slices.size());
  if (batch > slices) {
    throw ParameterError("batch of " + std::to_string(batch) + " exceeds the " +
                         std::to_string(slices) + " training slices");
  }
  return std::uniform_int_distribution<std::size_t>(0, slices - batch)(rng);
}

std::vector<TaskInput> slice_inputs(const std::vector<TaskDataset>& datasets, std::size_t slice) {
  std::vector<TaskInput> out;
  for (const TaskDataset& ds : datasets) {
    const Slice& s = ds.slices.at(slice);
    out.push_back({s.kspace, s.mask});
  }
  return out;
}

std::vector<Tensor> slice_targets(const std::vector<TaskDataset>& datasets, std::size_t slice) {
  std::vector<Tensor> out;
  for (const TaskDataset& ds : datasets) out.push_back(ds.slices.at(slice).target);
  return out;
}

std::vector<Tensor> batch_losses(const std::vector<TaskDataset>& datasets,
                                 const ParamStore& params, const ReconConfig& recon,
                                 const TrainConfig& cfg, std::size_t start) {
  check_datasets(datasets, params);
  std::vector<Tensor> sums;
  for (std::size_t k = 0; k < cfg.batch; ++k) {
    const auto inputs = slice_inputs(datasets, start + k);
    const auto targets = slice_targets(datasets, start + k);
    const ReconOutput out = reconstruct(inputs, params, recon);
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      const Tensor l = base_loss(out.x_hat[i], out.x_hat0[i], targets[i], cfg.lambda, cfg.mu);
      if (sums.size() <= i) {
        sums.push_back(l);
      } else {
        sums[i] = sums[i] + l;
      }
    }
  }
  for (Tensor& s : sums) s = s * (1.0 / static_cast<double>(cfg.batch));
  return sums;
}

EpochResult meta_train_epoch(const std::vector<TaskDataset>& datasets, ParamStore& params,
                             OptimizerState& opt, const TrainConfig& cfg,
                             const ReconConfig& recon, std::mt19937_64& rng,
                             const MetaStepObserver& observer) {
  check_datasets(datasets, params);
  cfg.validate(datasets.size());
  if (!params.meta) throw ParameterError("meta training needs a store with a meta-learner");
  if (opt.base.size() != params.tasks.size()) opt.base.resize(params.tasks.size());
  const std::size_t start = sample_volume_start(datasets, cfg.batch, rng);
  GradModeGuard on(true);

  for (std::size_t k = 0; k < cfg.inner_steps; ++k) {
    ParamStore live = params.with_trainable(false, true);
    const SliceResult r = run_window(datasets, live, recon, cfg, start, false, Target::meta);
    adam_step(params.meta_group(), r.grads.front(), opt.meta, cfg.meta_lr);
    if (observer) observer(k, params);
  }

  ParamStore live = params.with_trainable(true, false);
  const SliceResult r = run_window(datasets, live, recon, cfg, start, false, Target::base);
  for (std::size_t i = 0; i < params.tasks.size(); ++i) {
    adam_step(params.base_group(i), r.grads[i], opt.base[i], cfg.alpha(i, datasets[i].name));
  }
  return summarize(r);
}

EpochResult stl_train_epoch(const std::vector<TaskDataset>& datasets, ParamStore& params,
                            OptimizerState& opt, const TrainConfig& cfg,
                            const ReconConfig& recon, std::mt19937_64& rng) {
  check_datasets(datasets, params);
  cfg.validate(datasets.size());
  if (opt.base.size() != params.tasks.size()) opt.base.resize(params.tasks.size());
  const std::size_t start = sample_volume_start(datasets, cfg.batch, rng);
  GradModeGuard on(true);

  ParamStore live = params.with_trainable(true, false);
  const SliceResult r = run_window(datasets, live, recon, cfg, start, true, Target::base);
  for (std::size_t i = 0; i < params.tasks.size(); ++i) {
    adam_step(params.base_group(i), r.grads[i], opt.base[i], cfg.alpha(i, datasets[i].name));
  }
  return summarize(r);
}

void append_metrics_csv(const std::filesystem::path& path, std::size_t epoch,
                        const std::vector<std::string>& task_names, const EpochResult& result) {
  const bool fresh = !std::filesystem::exists(path);
  std::ofstream out(path, std::ios::app);
  if (!out) throw IoError("cannot append to " + path.string());
  if (fresh) out << "epoch,task,loss,psnr,ssim,nmse\n";
  out.precision(17);
  for (std::size_t i = 0; i < result.tasks.size(); ++i) {
    const TaskMetrics& t = result.tasks[i];
    out << epoch << ',' << task_names.at(i) << ',' << t.loss << ',' << t.report.psnr << ','
        << t.report.ssim << ',' << t.report.nmse << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace metarecon
