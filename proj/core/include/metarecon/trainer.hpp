#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "metarecon/checkpoint.hpp"
#include "metarecon/metrics.hpp"
#include "metarecon/networks.hpp"
#include "metarecon/synth.hpp"
#include "metarecon/unroll.hpp"

namespace metarecon {

struct TrainConfig {
  std::size_t epochs = 100;       // L
  std::size_t inner_steps = 10;   // K, Theta updates per epoch
  double meta_lr = 1e-4;          // beta
  std::vector<double> base_lr;    // alpha_i; empty picks default_base_lr per task
  double lambda = 1e-4;
  double mu = 1.0;
  std::size_t batch = 4;          // consecutive slices per sampled volume
  std::uint64_t seed = 0;

  void validate(std::size_t tasks) const;
  double alpha(std::size_t task, const std::string& name) const;
};

/// 5e-4 for proton-density tasks (name contains "PD"), 2e-4 otherwise.
double default_base_lr(const std::string& task_name);

/// ||x_hat - x*|| + lambda ||x_hat0 - x*|| - mu SSIM(x_hat, x*), plain l2 norms.
Tensor base_loss(const Tensor& x_hat, const Tensor& x_hat0, const Tensor& target, double lambda,
                 double mu);
/// ||x - x*|| - mu SSIM(x, x*).
Tensor stl_loss(const Tensor& image, const Tensor& target, double mu);
Tensor total_loss(std::span<const Tensor> losses);

/// Bias-corrected ADAM with beta1 = 0.9, beta2 = 0.999, eps = 1e-8.
struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::uint64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// In-place update of `params` (requires_grad flags are kept).
void adam_step(const std::vector<ParamRef>& params, std::span<const Tensor> grads,
               AdamState& state, double lr);

/// One ADAM state for Theta and one per w_i.
struct OptimizerState {
  AdamState meta;
  std::vector<AdamState> base;

  static OptimizerState for_store(const ParamStore& store);
  /// "<param>.m", "<param>.v" and "adam.<group>.step" records.
  std::vector<Record> records(ParamStore& store) const;
  void load(ParamStore& store, const std::vector<Record>& records);
};

struct TaskMetrics {
  double loss = 0.0;
  MetricReport report;
};

struct EpochResult {
  std::vector<TaskMetrics> tasks;
  double total = 0.0;
};

/// The data fed to one epoch: a window of `batch` consecutive slices starting
/// at the same index in every task.
std::size_t sample_volume_start(const std::vector<TaskDataset>& datasets, std::size_t batch,
                                std::mt19937_64& rng);

/// Inputs of one slice across all tasks.
std::vector<TaskInput> slice_inputs(const std::vector<TaskDataset>& datasets, std::size_t slice);
std::vector<Tensor> slice_targets(const std::vector<TaskDataset>& datasets, std::size_t slice);

/// Per-task base losses averaged over the slices [start, start + batch).
std::vector<Tensor> batch_losses(const std::vector<TaskDataset>& datasets,
                                 const ParamStore& params, const ReconConfig& recon,
                                 const TrainConfig& cfg, std::size_t start);

/// Called after each Theta step with the step index and the current store.
using MetaStepObserver = std::function<void(std::size_t, const ParamStore&)>;

/// K ADAM steps on Theta with W frozen against the summed loss, then one ADAM
/// step per w_i against its own loss with Theta frozen. Losses and metrics in
/// the result come from the forward pass of the W step.
EpochResult meta_train_epoch(const std::vector<TaskDataset>& datasets, ParamStore& params,
                             OptimizerState& opt, const TrainConfig& cfg,
                             const ReconConfig& recon, std::mt19937_64& rng,
                             const MetaStepObserver& observer = {});

/// One ADAM step per task on the STL loss of rss(x_T).
EpochResult stl_train_epoch(const std::vector<TaskDataset>& datasets, ParamStore& params,
                            OptimizerState& opt, const TrainConfig& cfg,
                            const ReconConfig& recon, std::mt19937_64& rng);

/// Appends one `epoch,task,loss,psnr,ssim,nmse` row per task; writes the
/// header when the file is new.
void append_metrics_csv(const std::filesystem::path& path, std::size_t epoch,
                        const std::vector<std::string>& task_names, const EpochResult& result);

}  // namespace metarecon
