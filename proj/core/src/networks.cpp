#include "metarecon/networks.hpp"

#include <cmath>
#include <random>

#include "metarecon/errors.hpp"
#include "metarecon/fft.hpp"
#include "metarecon/ops.hpp"

namespace metarecon {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw ParameterError(what);
}

void check_channels(const ConvNet& net, const Tensor& x, const char* who) {
  if (net.empty()) throw ShapeError(std::string(who) + ": network has no layers");
  if (x.rank() != 3 || x.dim(0) != net.in_channels()) {
    throw ShapeError(std::string(who) + ": expected " + std::to_string(net.in_channels()) +
                     " input channels, got " + shape_str(x.shape()));
  }
}

void check_stack(const Tensor& x, const char* who) {
  if (x.rank() != 4 || x.dim(3) != 2) {
    throw ShapeError(std::string(who) + ": expected a (c, H, W, 2) coil stack, got " +
                     shape_str(x.shape()));
  }
}

void xavier_fill(ConvNet& net, std::mt19937_64& rng) {
  for (ConvLayer& layer : net.layers) {
    const Shape& s = layer.weight.shape();
    const double window = static_cast<double>(s[2] * s[3]);
    const double fan_in = static_cast<double>(s[1]) * window;
    const double fan_out = static_cast<double>(s[0]) * window;
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-bound, bound);
    std::vector<double> values(layer.weight.numel());
    for (double& v : values) v = dist(rng);
    layer.weight = Tensor(s, std::move(values));
  }
}

void append_net(std::vector<ParamRef>& out, const std::string& prefix, ConvNet& net) {
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const std::string base = prefix + "." + std::to_string(l);
    out.push_back({base + ".weight", &net.layers[l].weight});
    out.push_back({base + ".bias", &net.layers[l].bias});
  }
}

void set_trainable(ConvNet& net, bool flag) {
  for (ConvLayer& layer : net.layers) {
    layer.weight = layer.weight.detach(flag);
    layer.bias = layer.bias.detach(flag);
  }
}

}  // namespace

Activation parse_activation(const std::string& name) {
  if (name == "relu") return Activation::relu;
  if (name == "softplus") return Activation::softplus;
  throw ParameterError("unknown activation '" + name + "' (expected relu or softplus)");
}

std::string activation_name(Activation a) { return a == Activation::relu ? "relu" : "softplus"; }

void NetSpec::validate() const {
  require(layers >= 1, "network needs at least one layer");
  require(width >= 1, "network width must be at least 1");
  require(kernel % 2 == 1, "kernel size must be odd");
}

void ModelSpec::validate() const {
  require(coils >= 1, "coil count must be at least 1");
  require(tasks >= 1, "task count must be at least 1");
  require(features >= 1, "feature dimension must be at least 1");
  require(std::isfinite(rho0) && std::isfinite(delta0), "step sizes must be finite");
  residual_net().validate();
  if (meta) meta_net().validate();
}

ConvNet ConvNet::zeros(std::size_t in_channels, std::size_t out_channels, const NetSpec& spec) {
  spec.validate();
  ConvNet net;
  net.activation = spec.activation;
  std::size_t cin = in_channels;
  for (std::size_t l = 0; l < spec.layers; ++l) {
    const std::size_t cout = l + 1 == spec.layers ? out_channels : spec.width;
    net.layers.push_back({Tensor::zeros({cout, cin, spec.kernel, spec.kernel}),
                          Tensor::zeros({cout})});
    cin = cout;
  }
  return net;
}

Tensor ConvNet::forward(const Tensor& x) const {
  Tensor h = x;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const std::size_t pad = layers[l].weight.dim(2) / 2;
    h = conv2d(h, layers[l].weight, layers[l].bias, pad);
    if (l + 1 < layers.size()) h = activation == Activation::relu ? relu(h) : softplus(h);
  }
  return h;
}

std::vector<ParamRef> ParamStore::base_group(std::size_t task) {
  TaskParams& p = tasks.at(task);
  const std::string prefix = "task" + std::to_string(task);
  std::vector<ParamRef> out;
  append_net(out, prefix + ".G", p.prox_image);
  append_net(out, prefix + ".K", p.prox_kspace);
  append_net(out, prefix + ".J", p.combiner);
  append_net(out, prefix + ".Z", p.distributor);
  append_net(out, prefix + ".init", p.initializer);
  for (std::size_t t = 0; t < p.rho.size(); ++t) {
    out.push_back({prefix + ".rho." + std::to_string(t), &p.rho[t]});
  }
  return out;
}

std::vector<ParamRef> ParamStore::meta_group() {
  std::vector<ParamRef> out;
  if (!meta) return out;
  append_net(out, "meta.H", meta->learner);
  const std::size_t r = spec.inner_steps;
  for (std::size_t k = 0; k < meta->delta.size(); ++k) {
    out.push_back({"meta.delta." + std::to_string(k / r) + "." + std::to_string(k % r),
                   &meta->delta[k]});
  }
  return out;
}

std::vector<ParamRef> ParamStore::all() {
  std::vector<ParamRef> out;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    auto group = base_group(i);
    out.insert(out.end(), group.begin(), group.end());
  }
  auto group = meta_group();
  out.insert(out.end(), group.begin(), group.end());
  return out;
}

std::vector<Tensor> ParamStore::values(const std::vector<ParamRef>& refs) const {
  std::vector<Tensor> out;
  out.reserve(refs.size());
  for (const ParamRef& ref : refs) out.push_back(*ref.tensor);
  return out;
}

std::vector<Tensor> ParamStore::base_values(std::size_t task) const {
  return values(const_cast<ParamStore*>(this)->base_group(task));
}

std::vector<Tensor> ParamStore::meta_values() const {
  return values(const_cast<ParamStore*>(this)->meta_group());
}

ParamStore ParamStore::with_trainable(bool base, bool meta_flag) const {
  ParamStore copy = *this;
  for (TaskParams& p : copy.tasks) {
    for (ConvNet* net :
         {&p.prox_image, &p.prox_kspace, &p.combiner, &p.distributor, &p.initializer}) {
      set_trainable(*net, base);
    }
    for (Tensor& rho : p.rho) rho = rho.detach(base);
  }
  if (copy.meta) {
    set_trainable(copy.meta->learner, meta_flag);
    for (Tensor& d : copy.meta->delta) d = d.detach(meta_flag);
  }
  return copy;
}

const Tensor& ParamStore::delta(std::size_t t, std::size_t tau) const {
  if (!meta) throw ParameterError("store has no meta-learner step sizes");
  return meta->delta.at(t * spec.inner_steps + tau);
}

ParamStore zero_params(const ModelSpec& spec) {
  spec.validate();
  ParamStore store;
  store.spec = spec;
  const std::size_t ch = 2 * spec.coils;
  const NetSpec residual = spec.residual_net();
  const NetSpec coupling = spec.coupling_net();
  for (std::size_t i = 0; i < spec.tasks; ++i) {
    TaskParams p;
    p.prox_image = ConvNet::zeros(ch, ch, residual);
    p.prox_kspace = ConvNet::zeros(ch, ch, residual);
    if (spec.meta) {
      p.combiner = ConvNet::zeros(ch, 2, coupling);
      p.distributor = ConvNet::zeros(spec.features, 1, coupling);
    }
    p.initializer = ConvNet::zeros(ch, ch, residual);
    p.rho.assign(spec.outer_iterations, Tensor::scalar(spec.rho0));
    store.tasks.push_back(std::move(p));
  }
  if (spec.meta) {
    MetaParams meta;
    meta.learner = ConvNet::zeros(2 * spec.tasks, spec.features, spec.meta_net());
    meta.delta.assign(spec.outer_iterations * spec.inner_steps, Tensor::scalar(spec.delta0));
    store.meta = std::move(meta);
  }
  return store;
}

ParamStore init_params(const ModelSpec& spec, std::uint64_t seed) {
  ParamStore store = zero_params(spec);
  std::mt19937_64 rng(seed);
  for (TaskParams& p : store.tasks) {
    for (ConvNet* net :
         {&p.prox_image, &p.prox_kspace, &p.combiner, &p.distributor, &p.initializer}) {
      xavier_fill(*net, rng);
    }
  }
  if (store.meta) xavier_fill(store.meta->learner, rng);
  return store;
}

Tensor prox_image_apply(const ConvNet& net, const Tensor& coils) {
  check_stack(coils, "prox_image_apply");
  const Tensor ch = complex_to_channels(coils);
  check_channels(net, ch, "prox_image_apply");
  return coils + channels_to_complex(net.forward(ch));
}

Tensor prox_kspace_apply(const ConvNet& net, const Tensor& coils) {
  check_stack(coils, "prox_kspace_apply");
  const Tensor k = fft2c(coils);
  const Tensor ch = complex_to_channels(k);
  check_channels(net, ch, "prox_kspace_apply");
  return ifft2c(k + channels_to_complex(net.forward(ch)));
}

Tensor coil_combine(const ConvNet& net, const Tensor& coils) {
  check_stack(coils, "coil_combine");
  const Tensor ch = complex_to_channels(coils);
  check_channels(net, ch, "coil_combine");
  if (net.out_channels() != 2) throw ShapeError("coil_combine: network must emit 2 channels");
  const Tensor out = channels_to_complex(net.forward(ch));
  return reshape(out, {out.dim(1), out.dim(2), 2});
}

Tensor meta_forward(const ConvNet& net, const std::vector<Tensor>& combined) {
  if (combined.empty() || 2 * combined.size() != net.in_channels()) {
    throw ShapeError("meta_forward: expected " + std::to_string(net.in_channels() / 2) +
                     " task images, got " + std::to_string(combined.size()));
  }
  std::vector<Tensor> parts;
  parts.reserve(combined.size());
  for (const Tensor& img : combined) {
    if (img.rank() != 3 || img.dim(2) != 2 || img.shape() != combined.front().shape()) {
      throw ShapeError("meta_forward: task images must share one (H, W, 2) shape");
    }
    parts.push_back(reshape(img, {1, img.dim(0), img.dim(1), 2}));
  }
  return net.forward(complex_to_channels(concat0(parts)));
}

Tensor meta_distribute(const ConvNet& net, const Tensor& features) {
  check_channels(net, features, "meta_distribute");
  if (net.out_channels() != 1) throw ShapeError("meta_distribute: network must emit 1 channel");
  const Tensor out = softplus(net.forward(features));
  return reshape(out, {out.dim(1), out.dim(2)});
}

Tensor init_recon(const ConvNet& net, const Tensor& kspace, const SamplingMask& mask) {
  check_coil_stack(kspace, mask);
  const Tensor ch = complex_to_channels(kspace);
  check_channels(net, ch, "init_recon");
  const Tensor fill = channels_to_complex(net.forward(ch));
  const Tensor missing = add_scalar(-mask.broadcastable(), 1.0);
  return ifft2c(kspace + missing * fill);
}

}  // namespace metarecon
