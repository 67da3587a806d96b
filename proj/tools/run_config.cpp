#include "run_config.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "metarecon/errors.hpp"

namespace metarecon::cli {

namespace {

using Reader = std::function<void(RunConfig&, const nlohmann::json&)>;

template <typename T>
Reader field(T RunConfig::*member) {
  return [member](RunConfig& cfg, const nlohmann::json& v) { cfg.*member = v.get<T>(); };
}

Reader count_field(std::size_t RunConfig::*member) {
  return [member](RunConfig& cfg, const nlohmann::json& v) {
    if (!v.is_number_integer() || v.get<long long>() < 0) {
      throw ConfigError("expected a nonnegative integer");
    }
    cfg.*member = v.get<std::size_t>();
  };
}

Reader number_field(double RunConfig::*member) {
  return [member](RunConfig& cfg, const nlohmann::json& v) {
    if (!v.is_number()) throw ConfigError("expected a number");
    cfg.*member = v.get<double>();
  };
}

const std::map<std::string, Reader>& readers() {
  static const std::map<std::string, Reader> table = {
      {"outer_iterations", count_field(&RunConfig::outer_iterations)},
      {"inner_steps", count_field(&RunConfig::inner_steps)},
      {"features", count_field(&RunConfig::features)},
      {"net_width", count_field(&RunConfig::net_width)},
      {"meta_width", count_field(&RunConfig::meta_width)},
      {"kernel", count_field(&RunConfig::kernel)},
      {"base_layers", count_field(&RunConfig::base_layers)},
      {"meta_layers", count_field(&RunConfig::meta_layers)},
      {"rho0", number_field(&RunConfig::rho0)},
      {"delta0", number_field(&RunConfig::delta0)},
      {"base_activation", field(&RunConfig::base_activation)},
      {"meta_activation", field(&RunConfig::meta_activation)},
      {"mode", field(&RunConfig::mode)},
      {"epochs", count_field(&RunConfig::epochs)},
      {"meta_steps", count_field(&RunConfig::meta_steps)},
      {"meta_lr", number_field(&RunConfig::meta_lr)},
      {"base_lr", field(&RunConfig::base_lr)},
      {"lambda", number_field(&RunConfig::lambda)},
      {"mu", number_field(&RunConfig::mu)},
      {"batch", count_field(&RunConfig::batch)},
      {"image_height", count_field(&RunConfig::image_height)},
      {"image_width", count_field(&RunConfig::image_width)},
      {"coils", count_field(&RunConfig::coils)},
      {"tasks", count_field(&RunConfig::tasks)},
      {"train_slices", count_field(&RunConfig::train_slices)},
      {"test_slices", count_field(&RunConfig::test_slices)},
      {"ar", number_field(&RunConfig::ar)},
      {"acs_lines", count_field(&RunConfig::acs_lines)},
      {"noise_sigma", number_field(&RunConfig::noise_sigma)},
      {"seed", field(&RunConfig::seed)},
      {"data_dir", field(&RunConfig::data_dir)},
      {"out_dir", field(&RunConfig::out_dir)},
  };
  return table;
}

}  // namespace

void RunConfig::validate() const {
  if (mode != "mtml" && mode != "stl") throw ConfigError("mode must be mtml or stl, got '" + mode + "'");
  if (tasks == 0 || tasks > kMaxTasks) {
    throw ConfigError("tasks must be between 1 and " + std::to_string(kMaxTasks));
  }
  if (epochs == 0) throw ConfigError("epochs must be at least 1");
  if (batch > train_slices) {
    throw ConfigError("batch (" + std::to_string(batch) + ") exceeds train_slices (" +
                      std::to_string(train_slices) + ")");
  }
  if (test_slices == 0) throw ConfigError("test_slices must be at least 1");
  if (data_dir.empty() || out_dir.empty()) throw ConfigError("data_dir and out_dir must be set");
  try {
    model_spec().validate();
    train_config().validate(tasks);
    const SynthConfig s = synth_config();
    PhantomSpec::standard(s.height, s.width, s.seed).validate();
    if (!(ar >= 1.0)) throw ParameterError("ar must be at least 1");
    if (!(noise_sigma >= 0.0)) throw ParameterError("noise_sigma must be nonnegative");
    if (acs_lines > image_height) throw ParameterError("acs_lines exceeds image_height");
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

ModelSpec RunConfig::model_spec() const {
  ModelSpec spec;
  spec.coils = coils;
  spec.tasks = tasks;
  spec.width = net_width;
  spec.meta_width = meta_width;
  spec.features = features;
  spec.kernel = kernel;
  spec.base_layers = base_layers;
  spec.meta_layers = meta_layers;
  spec.outer_iterations = outer_iterations;
  spec.inner_steps = inner_steps;
  spec.rho0 = rho0;
  spec.delta0 = delta0;
  try {
    spec.base_activation = parse_activation(base_activation);
    spec.meta_activation = parse_activation(meta_activation);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  spec.meta = meta();
  return spec;
}

TrainConfig RunConfig::train_config() const {
  TrainConfig cfg;
  cfg.epochs = epochs;
  cfg.inner_steps = meta_steps;
  cfg.meta_lr = meta_lr;
  cfg.base_lr = base_lr;
  cfg.lambda = lambda;
  cfg.mu = mu;
  cfg.batch = batch;
  cfg.seed = seed;
  return cfg;
}

SynthConfig RunConfig::synth_config() const {
  SynthConfig cfg;
  cfg.height = image_height;
  cfg.width = image_width;
  cfg.coils = coils;
  cfg.train_slices = train_slices;
  cfg.test_slices = test_slices;
  cfg.ar = ar;
  cfg.acs_lines = acs_lines;
  cfg.noise_sigma = noise_sigma;
  cfg.seed = seed;
  return cfg;
}

ReconConfig RunConfig::recon_config() const { return {outer_iterations, inner_steps}; }

std::filesystem::path RunConfig::dataset_dir() const {
  std::ostringstream name;
  name << "ar" << ar;
  return std::filesystem::path(data_dir) / name.str();
}

nlohmann::json to_json(const RunConfig& c) {
  return {
      {"outer_iterations", c.outer_iterations},
      {"inner_steps", c.inner_steps},
      {"features", c.features},
      {"net_width", c.net_width},
      {"meta_width", c.meta_width},
      {"kernel", c.kernel},
      {"base_layers", c.base_layers},
      {"meta_layers", c.meta_layers},
      {"rho0", c.rho0},
      {"delta0", c.delta0},
      {"base_activation", c.base_activation},
      {"meta_activation", c.meta_activation},
      {"mode", c.mode},
      {"epochs", c.epochs},
      {"meta_steps", c.meta_steps},
      {"meta_lr", c.meta_lr},
      {"base_lr", c.base_lr},
      {"lambda", c.lambda},
      {"mu", c.mu},
      {"batch", c.batch},
      {"image_height", c.image_height},
      {"image_width", c.image_width},
      {"coils", c.coils},
      {"tasks", c.tasks},
      {"train_slices", c.train_slices},
      {"test_slices", c.test_slices},
      {"ar", c.ar},
      {"acs_lines", c.acs_lines},
      {"noise_sigma", c.noise_sigma},
      {"seed", c.seed},
      {"data_dir", c.data_dir},
      {"out_dir", c.out_dir},
  };
}

RunConfig from_json(const nlohmann::json& j, RunConfig base) {
  if (!j.is_object()) throw ConfigError("config must be a flat JSON object");
  for (const auto& [key, value] : j.items()) {
    const auto it = readers().find(key);
    if (it == readers().end()) throw ConfigError("unknown config key '" + key + "'");
    try {
      it->second(base, value);
    } catch (const ConfigError& e) {
      throw ConfigError("config key '" + key + "': " + e.what());
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("config key '" + key + "': " + e.what());
    }
  }
  return base;
}

RunConfig load_config(const std::filesystem::path& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw MissingFileError("cannot open config file " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("malformed JSON in " + path.string() + ": " + e.what());
  }
  return from_json(j, std::move(base));
}

void save_config(const RunConfig& cfg, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << to_json(cfg).dump(2) << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace metarecon::cli
