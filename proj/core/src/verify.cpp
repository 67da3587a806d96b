#include "metarecon/verify.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>

#include "metarecon/errors.hpp"

namespace metarecon {

namespace {

// "task0.G.1.weight" -> "task0.net", "task0.rho.2" -> "task0.rho",
// "meta.H.0.bias" -> "meta.H", "meta.delta.0.1" -> "meta.delta".
std::string kind_of(const std::string& name) {
  const auto first = name.find('.');
  const std::string head = name.substr(0, first);
  const std::string second = name.substr(first + 1, name.find('.', first + 1) - first - 1);
  if (head == "meta") return head + "." + second;
  return head + (second == "rho" ? ".rho" : ".net");
}

}  // namespace

ParamStore replace_values(const ParamStore& store, std::span<const Tensor> values) {
  ParamStore copy = store.with_trainable(false, false);
  auto refs = copy.all();
  if (refs.size() != values.size()) {
    throw ShapeError("replace_values: expected " + std::to_string(refs.size()) + " tensors, got " +
                     std::to_string(values.size()));
  }
  for (std::size_t k = 0; k < refs.size(); ++k) {
    if (values[k].shape() != refs[k].tensor->shape()) {
      throw ShapeError("replace_values: shape mismatch for " + refs[k].name);
    }
    *refs[k].tensor = values[k].detach();
  }
  return copy;
}

ParamStore jitter_biases(const ParamStore& store, double scale, std::uint64_t seed) {
  ParamStore copy = store;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-scale, scale);
  for (const ParamRef& ref : copy.all()) {
    if (!ref.name.ends_with(".bias")) continue;
    std::vector<double> values(ref.tensor->numel());
    for (double& v : values) v = dist(rng);
    *ref.tensor = Tensor(ref.tensor->shape(), std::move(values)).detach(ref.tensor->requires_grad());
  }
  return copy;
}

std::vector<Coordinate> sample_coordinates(const ParamStore& store, std::size_t count,
                                           std::uint64_t seed) {
  ParamStore copy = store;
  const auto refs = copy.all();
  std::map<std::string, std::vector<std::size_t>> kinds;
  std::size_t total = 0;
  for (std::size_t k = 0; k < refs.size(); ++k) {
    kinds[kind_of(refs[k].name)].push_back(k);
    total += refs[k].tensor->numel();
  }
  count = std::min(count, total);

  std::mt19937_64 rng(seed);
  std::set<std::pair<std::size_t, std::size_t>> seen;
  std::vector<Coordinate> out;
  while (out.size() < count) {
    bool progressed = false;
    for (const auto& [kind, params] : kinds) {
      if (out.size() == count) break;
      std::size_t kind_size = 0;
      for (std::size_t p : params) kind_size += refs[p].tensor->numel();
      std::size_t used = 0;
      for (const auto& s : seen) {
        if (std::find(params.begin(), params.end(), s.first) != params.end()) ++used;
      }
      if (used == kind_size) continue;
      for (;;) {
        const std::size_t p =
            params[std::uniform_int_distribution<std::size_t>(0, params.size() - 1)(rng)];
        const std::size_t i =
            std::uniform_int_distribution<std::size_t>(0, refs[p].tensor->numel() - 1)(rng);
        if (seen.insert({p, i}).second) {
          out.push_back({p, i});
          progressed = true;
          break;
        }
      }
    }
    if (!progressed) break;
  }
  return out;
}

GradientReport check_gradient(const ParamStore& store, const StoreLoss& loss,
                              std::span<const Coordinate> coords, double h,
                              double floor_fraction) {
  ParamStore base = store.with_trainable(false, false);
  const auto refs = base.all();
  const std::vector<Tensor> values = base.values(refs);

  ParamStore live = store.with_trainable(true, true);
  auto live_refs = live.all();
  std::vector<Tensor> analytic;
  {
    GradModeGuard on(true);
    const Tensor l = loss(live);
    analytic = grad(l, live.values(live_refs));
  }

  const ScalarFn f = [&](std::span<const Tensor> vals) {
    NoGradGuard off;
    return loss(replace_values(base, vals)).item();
  };

  GradientReport report;
  double scale = 0.0;
  for (const Coordinate& c : coords) {
    CoordinateCheck check;
    check.name = refs.at(c.param).name;
    check.index = c.index;
    check.analytic = analytic[c.param][c.index];
    check.numeric = finite_diff_at(f, values, c, h);
    scale = std::max(scale, std::abs(check.analytic));
    report.checks.push_back(check);
  }
  report.floor = std::max(floor_fraction * scale, 1e-300);
  for (CoordinateCheck& check : report.checks) {
    check.error = relative_error(check.analytic, check.numeric, report.floor);
    report.max_error = std::max(report.max_error, check.error);
  }
  return report;
}

}  // namespace metarecon
