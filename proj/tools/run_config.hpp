#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "metarecon/networks.hpp"
#include "metarecon/synth.hpp"
#include "metarecon/trainer.hpp"
#include "metarecon/unroll.hpp"

namespace metarecon::cli {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class MissingFileError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Every tunable of a run. Serialized as one flat JSON object; keys left out
/// keep these defaults.
struct RunConfig {
  // unrolled model
  std::size_t outer_iterations = 5;  // T
  std::size_t inner_steps = 5;       // r
  std::size_t features = 32;         // d
  std::size_t net_width = 32;
  std::size_t meta_width = 32;
  std::size_t kernel = 3;
  std::size_t base_layers = 3;
  std::size_t meta_layers = 4;
  double rho0 = 0.5;
  double delta0 = 0.5;
  std::string base_activation = "relu";
  std::string meta_activation = "softplus";

  // training
  std::string mode = "mtml";
  std::size_t epochs = 100;     // L
  std::size_t meta_steps = 10;  // K
  double meta_lr = 1e-4;
  std::vector<double> base_lr;  // empty: 5e-4 for PD tasks, 2e-4 otherwise
  double lambda = 1e-4;
  double mu = 1.0;
  std::size_t batch = 4;

  // data
  std::size_t image_height = 48;
  std::size_t image_width = 48;
  std::size_t coils = 4;
  std::size_t tasks = 4;
  std::size_t train_slices = 8;
  std::size_t test_slices = 2;
  double ar = 4.0;
  std::size_t acs_lines = 0;
  double noise_sigma = 0.005;

  std::uint64_t seed = 0;
  std::string data_dir = "data";
  std::string out_dir = "run";

  void validate() const;
  bool meta() const { return mode == "mtml"; }

  ModelSpec model_spec() const;
  TrainConfig train_config() const;
  SynthConfig synth_config() const;
  ReconConfig recon_config() const;

  /// <data_dir>/ar<ar>
  std::filesystem::path dataset_dir() const;
};

nlohmann::json to_json(const RunConfig& cfg);
/// Unknown keys and mistyped values are ConfigErrors.
RunConfig from_json(const nlohmann::json& j, RunConfig base = {});
RunConfig load_config(const std::filesystem::path& path, RunConfig base = {});
void save_config(const RunConfig& cfg, const std::filesystem::path& path);

/// Number of standard contrasts synthesize() produces.
inline constexpr std::size_t kMaxTasks = 4;

}  // namespace metarecon::cli
