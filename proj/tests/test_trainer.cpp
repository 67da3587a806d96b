#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>

#include "doctest.h"
#include "metarecon/checkpoint.hpp"
#include "metarecon/errors.hpp"
#include "metarecon/ops.hpp"
#include "metarecon/trainer.hpp"
#include "metarecon/verify.hpp"
#include "oracles.hpp"

using namespace metarecon;

namespace {

ModelSpec toy_spec(std::size_t tasks, std::size_t coils, bool meta = true) {
  ModelSpec spec;
  spec.coils = coils;
  spec.tasks = tasks;
  spec.width = 4;
  spec.meta_width = 4;
  spec.features = 3;
  spec.outer_iterations = 1;
  spec.inner_steps = 1;
  spec.meta = meta;
  return spec;
}

std::vector<TaskDataset> toy_data(std::size_t tasks, std::size_t coils, std::size_t slices,
                                  std::uint64_t seed) {
  SynthConfig cfg;
  cfg.height = 16;
  cfg.width = 16;
  cfg.coils = coils;
  cfg.train_slices = slices;
  cfg.test_slices = 1;
  cfg.seed = seed;
  std::vector<TaskDataset> out;
  for (const TaskSplit& s : synthesize(cfg)) {
    if (out.size() < tasks) out.push_back(s.train);
  }
  return out;
}

bool bit_equal(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() &&
         std::memcmp(a.data().data(), b.data().data(), a.numel() * sizeof(double)) == 0;
}

bool bit_equal(const std::vector<Tensor>& a, const std::vector<Tensor>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t k = 0; k < a.size(); ++k) {
    if (!bit_equal(a[k], b[k])) return false;
  }
  return true;
}

std::vector<Tensor> all_values(const ParamStore& store) {
  std::vector<Tensor> out;
  for (std::size_t i = 0; i < store.tasks.size(); ++i) {
    for (const Tensor& t : store.base_values(i)) out.push_back(t);
  }
  if (store.meta) {
    for (const Tensor& t : store.meta_values()) out.push_back(t);
  }
  return out;
}

TrainConfig quick_config(std::size_t batch, std::size_t inner) {
  TrainConfig cfg;
  cfg.batch = batch;
  cfg.inner_steps = inner;
  return cfg;
}

}  // namespace

TEST_SUITE("loss") {
  TEST_CASE("perfect reconstructions score minus mu") {
    std::mt19937_64 rng(1);
    const Tensor x = add_scalar(oracle::random_tensor({12, 12}, rng), 2.0);
    CHECK(std::abs(base_loss(x, x, x, 1e-4, 1.0).item() + 1.0) < 1e-11);
    CHECK(std::abs(base_loss(x, x, x, 0.3, 2.0).item() + 2.0) < 1e-11);
    CHECK(std::abs(stl_loss(x, x, 1.0).item() + 1.0) < 1e-12);
  }

  TEST_CASE("lambda zero ignores the initial image") {
    std::mt19937_64 rng(2);
    const Tensor x = oracle::random_tensor({12, 12}, rng);
    const Tensor t = oracle::random_tensor({12, 12}, rng);
    const Tensor a = oracle::random_tensor({12, 12}, rng);
    const Tensor b = oracle::random_tensor({12, 12}, rng);
    CHECK(base_loss(x, a, t, 0.0, 1.0).item() == base_loss(x, b, t, 0.0, 1.0).item());
  }

  TEST_CASE("matches the hand formula") {
    std::mt19937_64 rng(3);
    const Tensor x = add_scalar(oracle::random_tensor({16, 16}, rng), 1.0);
    const Tensor x0 = add_scalar(oracle::random_tensor({16, 16}, rng), 1.0);
    const Tensor t = add_scalar(oracle::random_tensor({16, 16}, rng), 1.0);
    std::vector<double> d1(x.numel()), d0(x.numel());
    for (std::size_t p = 0; p < x.numel(); ++p) {
      d1[p] = x[p] - t[p];
      d0[p] = x0[p] - t[p];
    }
    const double lambda = 0.25;
    const double mu = 0.7;
    const double expected =
        oracle::norm(d1) + lambda * oracle::norm(d0) - mu * ssim(x, t).item();
    CHECK(std::abs(base_loss(x, x0, t, lambda, mu).item() - expected) < 1e-10);
    CHECK(std::abs(stl_loss(x, t, mu).item() - (oracle::norm(d1) - mu * ssim(x, t).item())) <
          1e-10);
  }

  TEST_CASE("total loss is the task sum") {
    const std::vector<Tensor> ls{Tensor::scalar(1.5), Tensor::scalar(-0.25), Tensor::scalar(2.0)};
    CHECK(total_loss(ls).item() == doctest::Approx(3.25).epsilon(1e-15));
    CHECK_THROWS_AS(total_loss(std::span<const Tensor>{}), ParameterError);
  }

  TEST_CASE("shape mismatch is rejected") {
    const Tensor a = Tensor::zeros({4, 4});
    const Tensor b = Tensor::zeros({4, 5});
    CHECK_THROWS_AS(base_loss(a, a, b, 0.0, 1.0), ShapeError);
    CHECK_THROWS_AS(stl_loss(a, b, 1.0), ShapeError);
  }
}

TEST_SUITE("config") {
  TEST_CASE("defaults") {
    const TrainConfig cfg;
    CHECK(cfg.epochs == 100);
    CHECK(cfg.inner_steps == 10);
    CHECK(cfg.meta_lr == 1e-4);
    CHECK(cfg.lambda == 1e-4);
    CHECK(cfg.mu == 1.0);
    CHECK(cfg.batch == 4);
    CHECK(default_base_lr("Sag-PD") == 5e-4);
    CHECK(default_base_lr("Cor-PD") == 5e-4);
    CHECK(default_base_lr("Sag-T2") == 2e-4);
    CHECK(default_base_lr("Cor-T2") == 2e-4);
    CHECK(cfg.alpha(0, "Cor-PD") == 5e-4);
  }

  TEST_CASE("explicit base rates override the defaults") {
    TrainConfig cfg;
    cfg.base_lr = {1e-3, 2e-3};
    CHECK(cfg.alpha(1, "Sag-PD") == 2e-3);
    CHECK_NOTHROW(cfg.validate(2));
    CHECK_THROWS_AS(cfg.validate(3), ParameterError);
  }

  TEST_CASE("invalid values are rejected") {
    TrainConfig cfg;
    cfg.batch = 0;
    CHECK_THROWS_AS(cfg.validate(1), ParameterError);
    cfg = TrainConfig{};
    cfg.meta_lr = 0.0;
    CHECK_THROWS_AS(cfg.validate(1), ParameterError);
    cfg = TrainConfig{};
    cfg.base_lr = {-1e-4};
    CHECK_THROWS_AS(cfg.validate(1), ParameterError);
    cfg = TrainConfig{};
    cfg.mu = -1.0;
    CHECK_THROWS_AS(cfg.validate(1), ParameterError);
  }
}

TEST_SUITE("adam") {
  TEST_CASE("zero gradient leaves parameters in place but advances the step") {
    Tensor w = Tensor({3}, {0.5, -1.0, 2.0}).detach(true);
    const std::vector<ParamRef> refs{{"w", &w}};
    const Tensor before = w;
    AdamState state;
    const std::vector<Tensor> g{Tensor::zeros({3})};
    adam_step(refs, g, state, 1e-3);
    CHECK(state.step == 1);
    CHECK(bit_equal(w, before));
    CHECK(w.requires_grad());
  }

  TEST_CASE("first and second steps match the bias-corrected formula") {
    Tensor w = Tensor({1}, {1.0});
    const std::vector<ParamRef> refs{{"w", &w}};
    AdamState state;
    const double lr = 1e-4;
    const double g1 = 0.3;
    adam_step(refs, std::vector<Tensor>{Tensor({1}, {g1})}, state, lr);
    const double w1 = 1.0 - lr * g1 / (std::abs(g1) + 1e-8);
    CHECK(std::abs(w[0] - w1) < 1e-12);

    const double g2 = -0.1;
    adam_step(refs, std::vector<Tensor>{Tensor({1}, {g2})}, state, lr);
    const double m = 0.9 * (0.1 * g1) + 0.1 * g2;
    const double v = 0.999 * (0.001 * g1 * g1) + 0.001 * g2 * g2;
    const double mhat = m / (1.0 - 0.81);
    const double vhat = v / (1.0 - 0.999 * 0.999);
    CHECK(std::abs(w[0] - (w1 - lr * mhat / (std::sqrt(vhat) + 1e-8))) < 1e-12);
  }

  TEST_CASE("trajectories are deterministic") {
    const auto run = [] {
      Tensor w = Tensor({2}, {0.1, 0.2});
      const std::vector<ParamRef> refs{{"w", &w}};
      AdamState state;
      for (int s = 0; s < 100; ++s) {
        const std::vector<Tensor> g{Tensor({2}, {std::sin(0.1 * s), std::cos(0.3 * s)})};
        adam_step(refs, g, state, 1e-2);
      }
      return w;
    };
    CHECK(bit_equal(run(), run()));
  }

  TEST_CASE("mismatched gradients are rejected") {
    Tensor w = Tensor::zeros({2});
    const std::vector<ParamRef> refs{{"w", &w}};
    AdamState state;
    CHECK_THROWS_AS(adam_step(refs, std::vector<Tensor>{}, state, 1e-3), ShapeError);
    CHECK_THROWS_AS(adam_step(refs, std::vector<Tensor>{Tensor::zeros({3})}, state, 1e-3),
                    ShapeError);
  }
}

TEST_SUITE("sampling") {
  TEST_CASE("one window start shared by every task") {
    const auto data = toy_data(2, 1, 5, 1);
    std::mt19937_64 rng(4);
    for (int k = 0; k < 50; ++k) {
      const std::size_t s = sample_volume_start(data, 3, rng);
      CHECK(s <= 2);
    }
    CHECK_THROWS_AS(sample_volume_start(data, 6, rng), ParameterError);
    const auto inputs = slice_inputs(data, 2);
    CHECK(inputs.size() == 2);
    CHECK(bit_equal(inputs[1].kspace, data[1].slices[2].kspace));
    CHECK(bit_equal(slice_targets(data, 2)[0], data[0].slices[2].target));
  }
}

TEST_SUITE("meta training") {
  TEST_CASE("K = 0 leaves the meta-knowledge untouched") {
    const auto data = toy_data(2, 2, 2, 5);
    ParamStore store = init_params(toy_spec(2, 2), 6);
    const auto theta = store.meta_values();
    const auto w0 = store.base_values(0);
    OptimizerState opt = OptimizerState::for_store(store);
    std::mt19937_64 rng(7);
    meta_train_epoch(data, store, opt, quick_config(1, 0), ReconConfig::from(toy_spec(2, 2)), rng);
    CHECK(bit_equal(store.meta_values(), theta));
    CHECK_FALSE(bit_equal(store.base_values(0), w0));
    CHECK(opt.meta.step == 0);
    CHECK(opt.base[0].step == 1);
  }

  TEST_CASE("W is frozen during the inner steps and Theta during the outer step") {
    const auto data = toy_data(2, 2, 2, 8);
    const ModelSpec spec = toy_spec(2, 2);
    ParamStore store = init_params(spec, 9);
    std::vector<std::vector<Tensor>> w_before;
    for (std::size_t i = 0; i < 2; ++i) w_before.push_back(store.base_values(i));
    OptimizerState opt = OptimizerState::for_store(store);
    std::mt19937_64 rng(10);
    std::vector<Tensor> theta_last;
    std::vector<Tensor> theta_prev = store.meta_values();
    std::size_t calls = 0;
    const MetaStepObserver watch = [&](std::size_t k, const ParamStore& s) {
      CHECK(k == calls++);
      for (std::size_t i = 0; i < 2; ++i) CHECK(bit_equal(s.base_values(i), w_before[i]));
      CHECK_FALSE(bit_equal(s.meta_values(), theta_prev));
      theta_prev = s.meta_values();
      theta_last = s.meta_values();
    };
    meta_train_epoch(data, store, opt, quick_config(1, 3), ReconConfig::from(spec), rng, watch);
    CHECK(calls == 3);
    CHECK(bit_equal(store.meta_values(), theta_last));
    for (std::size_t i = 0; i < 2; ++i) CHECK_FALSE(bit_equal(store.base_values(i), w_before[i]));
  }

  TEST_CASE("equal seeds give bit-identical trajectories over three epochs") {
    const auto data = toy_data(2, 2, 3, 11);
    const ModelSpec spec = toy_spec(2, 2);
    const auto run = [&] {
      ParamStore store = init_params(spec, 12);
      OptimizerState opt = OptimizerState::for_store(store);
      std::mt19937_64 rng(13);
      std::vector<double> losses;
      for (int e = 0; e < 3; ++e) {
        const EpochResult r =
            meta_train_epoch(data, store, opt, quick_config(2, 2), ReconConfig::from(spec), rng);
        losses.push_back(r.total);
      }
      return std::make_pair(all_values(store), losses);
    };
    const auto a = run();
    const auto b = run();
    CHECK(bit_equal(a.first, b.first));
    CHECK(a.second == b.second);
  }

  TEST_CASE("epoch losses are the batch-averaged base losses") {
    const auto data = toy_data(2, 1, 2, 14);
    const ModelSpec spec = toy_spec(2, 1);
    ParamStore store = init_params(spec, 15);
    const TrainConfig cfg = quick_config(2, 0);
    const auto expected = batch_losses(data, store, ReconConfig::from(spec), cfg, 0);
    OptimizerState opt = OptimizerState::for_store(store);
    std::mt19937_64 rng(16);
    const EpochResult r = meta_train_epoch(data, store, opt, cfg, ReconConfig::from(spec), rng);
    REQUIRE(r.tasks.size() == 2);
    for (std::size_t i = 0; i < 2; ++i) {
      CHECK(std::abs(r.tasks[i].loss - expected[i].item()) < 1e-12);
    }
    CHECK(std::abs(r.total - expected[0].item() - expected[1].item()) < 1e-12);
  }

  TEST_CASE("training loss decreases on a toy problem") {
    const auto data = toy_data(2, 2, 2, 17);
    const ModelSpec spec = toy_spec(2, 2);
    ParamStore store = init_params(spec, 18);
    OptimizerState opt = OptimizerState::for_store(store);
    TrainConfig cfg = quick_config(2, 1);
    cfg.meta_lr = 5e-3;
    cfg.base_lr = {5e-3, 5e-3};
    std::mt19937_64 rng(19);
    std::vector<double> losses;
    for (int e = 0; e < 30; ++e) {
      losses.push_back(meta_train_epoch(data, store, opt, cfg, ReconConfig::from(spec), rng).total);
    }
    CHECK(losses.back() < 0.8 * losses.front());
  }

  TEST_CASE("needs a meta-learner and one dataset per task") {
    const auto data = toy_data(2, 1, 2, 20);
    ParamStore stl = init_params(toy_spec(2, 1, false), 21);
    OptimizerState opt = OptimizerState::for_store(stl);
    std::mt19937_64 rng(22);
    CHECK_THROWS_AS(meta_train_epoch(data, stl, opt, quick_config(1, 1), {1, 1}, rng),
                    ParameterError);
    ParamStore three = init_params(toy_spec(3, 1), 23);
    CHECK_THROWS_AS(meta_train_epoch(data, three, opt, quick_config(1, 1), {1, 1}, rng),
                    ShapeError);
  }

  TEST_CASE("the training gradient matches finite differences") {
    const auto data = toy_data(2, 2, 1, 24);
    const ModelSpec spec = toy_spec(2, 2);
    const ParamStore store = jitter_biases(init_params(spec, 25), 0.1, 26);
    const TrainConfig cfg = quick_config(1, 1);
    const StoreLoss loss = [&](const ParamStore& s) {
      return total_loss(batch_losses(data, s, ReconConfig::from(spec), cfg, 0));
    };
    const auto coords = sample_coordinates(store, 24, 27);
    const GradientReport report = check_gradient(store, loss, coords);
    for (const auto& c : report.checks) {
      INFO(c.name, "[", c.index, "] ", c.analytic, " vs ", c.numeric);
      CHECK(c.error < 1e-5);
    }
  }
}

TEST_SUITE("stl training") {
  TEST_CASE("runs without meta parameters and with a single task") {
    const auto data = toy_data(1, 2, 2, 28);
    const ModelSpec spec = toy_spec(1, 2, false);
    ParamStore store = init_params(spec, 29);
    const auto w0 = store.base_values(0);
    OptimizerState opt = OptimizerState::for_store(store);
    std::mt19937_64 rng(30);
    const EpochResult r = stl_train_epoch(data, store, opt, quick_config(1, 10),
                                          ReconConfig::from(spec), rng);
    CHECK(r.tasks.size() == 1);
    CHECK(std::isfinite(r.total));
    CHECK_FALSE(bit_equal(store.base_values(0), w0));
  }

  TEST_CASE("leaves an attached meta-learner alone") {
    const auto data = toy_data(2, 1, 2, 31);
    const ModelSpec spec = toy_spec(2, 1);
    ParamStore store = init_params(spec, 32);
    const auto theta = store.meta_values();
    OptimizerState opt = OptimizerState::for_store(store);
    std::mt19937_64 rng(33);
    stl_train_epoch(data, store, opt, quick_config(1, 1), ReconConfig::from(spec), rng);
    CHECK(bit_equal(store.meta_values(), theta));
  }

  TEST_CASE("training loss decreases on a toy problem") {
    const auto data = toy_data(2, 2, 2, 34);
    const ModelSpec spec = toy_spec(2, 2, false);
    ParamStore store = init_params(spec, 35);
    OptimizerState opt = OptimizerState::for_store(store);
    TrainConfig cfg = quick_config(2, 0);
    cfg.base_lr = {5e-3, 5e-3};
    std::mt19937_64 rng(36);
    std::vector<double> losses;
    for (int e = 0; e < 30; ++e) {
      losses.push_back(stl_train_epoch(data, store, opt, cfg, ReconConfig::from(spec), rng).total);
    }
    CHECK(losses.back() < losses.front());
  }
}

TEST_SUITE("persistence") {
  TEST_CASE("optimizer state survives a checkpoint round trip") {
    const auto data = toy_data(2, 1, 2, 37);
    const ModelSpec spec = toy_spec(2, 1);
    ParamStore store = init_params(spec, 38);
    OptimizerState opt = OptimizerState::for_store(store);
    std::mt19937_64 rng(39);
    meta_train_epoch(data, store, opt, quick_config(1, 2), ReconConfig::from(spec), rng);

    std::vector<Record> records = param_records(store);
    for (Record& r : opt.records(store)) records.push_back(std::move(r));
    const auto path = std::filesystem::temp_directory_path() / "metarecon_test_opt.mrck";
    write_checkpoint(path, records);
    const auto loaded_records = read_checkpoint(path);
    std::filesystem::remove(path);

    ParamStore loaded = zero_params(spec);
    load_params(loaded, loaded_records);
    OptimizerState restored;
    restored.load(loaded, loaded_records);
    CHECK(bit_equal(all_values(loaded), all_values(store)));
    CHECK(restored.meta.step == opt.meta.step);
    CHECK(bit_equal(restored.meta.m, opt.meta.m));
    CHECK(bit_equal(restored.meta.v, opt.meta.v));
    for (std::size_t i = 0; i < 2; ++i) {
      CHECK(restored.base[i].step == 1);
      CHECK(bit_equal(restored.base[i].m, opt.base[i].m));
      CHECK(bit_equal(restored.base[i].v, opt.base[i].v));
    }

    // Continuing from the restored state matches continuing in memory.
    std::mt19937_64 rng_a(40);
    std::mt19937_64 rng_b(40);
    meta_train_epoch(data, store, opt, quick_config(1, 1), ReconConfig::from(spec), rng_a);
    meta_train_epoch(data, loaded, restored, quick_config(1, 1), ReconConfig::from(spec), rng_b);
    CHECK(bit_equal(all_values(loaded), all_values(store)));
  }

  TEST_CASE("fresh optimizer state records zero moments") {
    ParamStore store = init_params(toy_spec(1, 1), 41);
    const OptimizerState opt = OptimizerState::for_store(store);
    const auto records = opt.records(store);
    const Record* step = find_record(records, "adam.meta.step");
    REQUIRE(step != nullptr);
    CHECK(step->value.item() == 0.0);
    const Record* m = find_record(records, "task0.G.0.weight.m");
    REQUIRE(m != nullptr);
    CHECK(oracle::norm(m->value.data()) == 0.0);
  }

  TEST_CASE("missing optimizer records are a format error") {
    ParamStore store = init_params(toy_spec(1, 1), 42);
    OptimizerState opt;
    CHECK_THROWS_AS(opt.load(store, param_records(store)), FormatError);
  }

  TEST_CASE("metrics csv has one row per task under a single header") {
    const auto path = std::filesystem::temp_directory_path() / "metarecon_test_metrics.csv";
    std::filesystem::remove(path);
    EpochResult r;
    r.tasks.push_back({0.5, {30.0, 0.9, 0.01}});
    r.tasks.push_back({0.25, {28.0, 0.8, 0.02}});
    append_metrics_csv(path, 0, {"Sag-T2", "Cor-T2"}, r);
    append_metrics_csv(path, 1, {"Sag-T2", "Cor-T2"}, r);
    std::ifstream in(path);
    std::vector<std::string> lines;
    for (std::string line; std::getline(in, line);) lines.push_back(line);
    std::filesystem::remove(path);
    REQUIRE(lines.size() == 5);
    CHECK(lines[0] == "epoch,task,loss,psnr,ssim,nmse");
    CHECK(lines[1].rfind("0,Sag-T2,0.5,30,0.9", 0) == 0);
    CHECK(lines[4].rfind("1,Cor-T2,0.25,28,", 0) == 0);
  }
}
