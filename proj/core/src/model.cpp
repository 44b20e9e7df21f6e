#include "lowlight/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "lowlight/error.hpp"
#include "lowlight/ops.hpp"

namespace lowlight::model {

using engine::Tensor;

void UNetConfig::validate() const {
  if (depth < 1) throw Error(ErrorKind::kInvalidArgument, "unet: depth must be >= 1");
  if (base_channels < 1) throw Error(ErrorKind::kInvalidArgument, "unet: base_channels must be >= 1");
  if (in_channels != 4) throw Error(ErrorKind::kInvalidArgument, "unet: input must be 4 packed planes");
  if (out_channels != 12) {
    throw Error(ErrorKind::kInvalidArgument,
                "unet: output must be 12 channels (3 colors x 2x2 sub-pixels)");
  }
  if (!(slope >= 0.0f && slope < 1.0f)) throw Error(ErrorKind::kInvalidArgument, "unet: slope must be in [0,1)");
}

Tensor identity_kernel(int channels, int kernel_size) {
  const auto c = static_cast<std::size_t>(channels);
  const auto k = static_cast<std::size_t>(kernel_size);
  Tensor id({c, c, k, k});
  auto d = id.mutable_data();
  const std::size_t center = k / 2;
  for (std::size_t i = 0; i < c; ++i) d[((i * c + i) * k + center) * k + center] = 1.0f;
  return id;
}

ModulationLayer ModulationLayer::identity(int channels, int kernel_size) {
  if (std::find(std::begin(kAllowedFilterSizes), std::end(kAllowedFilterSizes), kernel_size) ==
      std::end(kAllowedFilterSizes)) {
    throw Error(ErrorKind::kInvalidArgument,
                "modulation: filter size " + std::to_string(kernel_size) +
                    " not in {1,3,5,7}");
  }
  ModulationLayer m{identity_kernel(channels, kernel_size),
                    Tensor({static_cast<std::size_t>(channels)})};
  return m;
}

EffectiveWeights modulate_weights(const ModulationLayer& layer, double alpha2) {
  const Tensor id = identity_kernel(layer.channels(), layer.kernel_size());
  const float a = static_cast<float>(alpha2);
  EffectiveWeights out{Tensor(layer.weight.shape()), Tensor(layer.bias.shape())};
  auto w = layer.weight.data();
  auto i = id.data();
  auto we = out.weight.mutable_data();
  for (std::size_t j = 0; j < w.size(); ++j) we[j] = a * w[j] + (1.0f - a) * i[j];
  auto b = layer.bias.data();
  auto be = out.bias.mutable_data();
  for (std::size_t j = 0; j < b.size(); ++j) be[j] = a * b[j];
  return out;
}

bool ModelWeights::has_modulation() const {
  return std::any_of(layers.begin(), layers.end(),
                     [](const ConvLayer& l) { return l.modulation.has_value(); });
}

int ModelWeights::modulation_kernel_size() const {
  for (const auto& l : layers) {
    if (l.modulation) return l.modulation->kernel_size();
  }
  return 0;
}

std::vector<engine::NamedTensor> ModelWeights::base_tensors() const {
  std::vector<engine::NamedTensor> out;
  for (const auto& l : layers) {
    out.push_back({l.name + ".weight", l.weight});
    out.push_back({l.name + ".bias", l.bias});
  }
  return out;
}

std::vector<engine::NamedTensor> ModelWeights::modulation_tensors() const {
  std::vector<engine::NamedTensor> out;
  for (const auto& l : layers) {
    if (!l.modulation) continue;
    out.push_back({l.name + ".mod.weight", l.modulation->weight});
    out.push_back({l.name + ".mod.bias", l.modulation->bias});
  }
  return out;
}

std::vector<engine::NamedTensor> ModelWeights::named_tensors() const {
  auto out = base_tensors();
  auto mod = modulation_tensors();
  out.insert(out.end(), mod.begin(), mod.end());
  return out;
}

std::vector<engine::NamedTensor> ModelWeights::trainable_tensors() const {
  return base_frozen ? modulation_tensors() : base_tensors();
}

std::size_t ModelWeights::parameter_count() const {
  std::size_t n = 0;
  for (const auto& t : named_tensors()) n += t.tensor.numel();
  return n;
}

void ModelWeights::set_provenance(const std::string& key, const std::string& value) {
  for (auto& [k, v] : provenance) {
    if (k == key) {
      v = value;
      return;
    }
  }
  provenance.emplace_back(key, value);
}

std::string ModelWeights::provenance_value(const std::string& key) const {
  for (const auto& [k, v] : provenance) {
    if (k == key) return v;
  }
  return {};
}

ModelWeights ModelWeights::clone() const {
  ModelWeights out = *this;
  for (auto& l : out.layers) {
    l.weight = l.weight.clone();
    l.bias = l.bias.clone();
    if (l.modulation) {
      l.modulation->weight = l.modulation->weight.clone();
      l.modulation->bias = l.modulation->bias.clone();
    }
  }
  return out;
}

namespace {

ConvLayer make_conv(std::string name, int cin, int cout, int k, float slope,
                    bool activation, std::mt19937_64& rng) {
  const auto ci = static_cast<std::size_t>(cin);
  const auto co = static_cast<std::size_t>(cout);
  const auto kk = static_cast<std::size_t>(k);
  ConvLayer layer;
  layer.name = std::move(name);
  layer.activation = activation;
  layer.weight = Tensor({co, ci, kk, kk});
  layer.bias = Tensor({co});
  const double fan_in = static_cast<double>(cin) * k * k;
  const double gain = activation ? 2.0 / (1.0 + double(slope) * slope) : 1.0;
  std::normal_distribution<double> normal(0.0, std::sqrt(gain / fan_in));
  for (auto& v : layer.weight.mutable_data()) v = static_cast<float>(normal(rng));
  layer.weight.set_requires_grad(true);
  layer.bias.set_requires_grad(true);
  return layer;
}

Tensor apply_layer(const ConvLayer& layer, const Tensor& x, double alpha2, float slope) {
  Tensor y = engine::conv2d(x, layer.weight, layer.bias, {1, layer.padding()});
  if (layer.modulation) {
    const ModulationLayer& mod = *layer.modulation;
    const int pad = mod.kernel_size() / 2;
    if (alpha2 == 1.0) {
      y = engine::conv2d(y, mod.weight, mod.bias, {1, pad});
    } else {
      const EffectiveWeights eff = modulate_weights(mod, alpha2);
      y = engine::conv2d(y, eff.weight, eff.bias, {1, pad});
    }
  }
  if (layer.activation) y = engine::leaky_relu(y, slope);
  return y;
}

}  // namespace

ModelWeights build_unet(const UNetConfig& config, std::uint64_t init_seed) {
  config.validate();
  std::mt19937_64 rng(init_seed);
  ModelWeights m;
  m.config = config;
  const float s = config.slope;
  const int depth = config.depth;
  int cin = config.in_channels;
  for (int l = 0; l < depth; ++l) {
    const int c = config.channels_at(l);
    const std::string p = "enc" + std::to_string(l);
    m.layers.push_back(make_conv(p + ".conv1", cin, c, 3, s, true, rng));
    m.layers.push_back(make_conv(p + ".conv2", c, c, 3, s, true, rng));
    cin = c;
  }
  const int cb = config.channels_at(depth);
  m.layers.push_back(make_conv("bottleneck.conv1", cin, cb, 3, s, true, rng));
  m.layers.push_back(make_conv("bottleneck.conv2", cb, cb, 3, s, true, rng));
  for (int l = depth - 1; l >= 0; --l) {
    const int c = config.channels_at(l);
    const std::string p = "dec" + std::to_string(l);
    m.layers.push_back(make_conv(p + ".up", config.channels_at(l + 1), c, 3, s, false, rng));
    m.layers.push_back(make_conv(p + ".conv1", 2 * c, c, 3, s, true, rng));
    m.layers.push_back(make_conv(p + ".conv2", c, c, 3, s, true, rng));
  }
  m.layers.push_back(make_conv("head", config.channels_at(0), config.out_channels, 1, s, false, rng));
  m.set_provenance("init_seed", std::to_string(init_seed));
  return m;
}

void insert_modulation(ModelWeights& model, int filter_size, bool include_projection) {
  if (model.has_modulation()) {
    throw Error(ErrorKind::kInvalidArgument, "insert_modulation: modulation already present");
  }
  if (filter_size % 2 == 0 ||
      std::find(std::begin(kAllowedFilterSizes), std::end(kAllowedFilterSizes), filter_size) ==
          std::end(kAllowedFilterSizes)) {
    throw Error(ErrorKind::kInvalidArgument,
                "insert_modulation: filter size " + std::to_string(filter_size) +
                    " must be one of 1, 3, 5, 7");
  }
  const std::size_t last = model.layers.size() - 1;
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    auto& layer = model.layers[i];
    layer.weight.set_requires_grad(false);
    layer.bias.set_requires_grad(false);
    if (i == last && !include_projection) continue;
    ModulationLayer mod =
        ModulationLayer::identity(static_cast<int>(layer.weight.dim(0)), filter_size);
    mod.weight.set_requires_grad(true);
    mod.bias.set_requires_grad(true);
    layer.modulation = std::move(mod);
  }
  model.base_frozen = true;
  model.modulate_projection = include_projection;
}

void check_input_extent(const UNetConfig& config, std::size_t height, std::size_t width) {
  const auto m = static_cast<std::size_t>(config.spatial_multiple());
  if (height % m != 0 || width % m != 0 || height == 0 || width == 0) {
    const std::size_t ph = (m - height % m) % m;
    const std::size_t pw = (m - width % m) % m;
    throw ShapeError("network input " + std::to_string(height) + "x" + std::to_string(width) +
                     " (packed) must be a multiple of " + std::to_string(m) +
                     "; pad by " + std::to_string(ph) + " rows and " + std::to_string(pw) +
                     " columns (mosaic: " + std::to_string(2 * ph) + "x" +
                     std::to_string(2 * pw) + ")");
  }
}

Tensor run_network(const ModelWeights& model, const Tensor& input, double alpha2) {
  const auto& cfg = model.config;
  if (input.rank() != 4 || input.dim(1) != static_cast<std::size_t>(cfg.in_channels)) {
    throw ShapeError("network: input must be [N,4,h,w], got " +
                     engine::shape_string(input.shape()));
  }
  check_input_extent(cfg, input.dim(2), input.dim(3));
  const float slope = cfg.slope;
  std::size_t idx = 0;
  auto next = [&](const Tensor& x) { return apply_layer(model.layers.at(idx++), x, alpha2, slope); };

  std::vector<Tensor> skips;
  Tensor x = input;
  for (int l = 0; l < cfg.depth; ++l) {
    x = next(x);
    x = next(x);
    skips.push_back(x);
    x = engine::max_pool2(x);
  }
  x = next(x);
  x = next(x);
  for (int l = cfg.depth - 1; l >= 0; --l) {
    x = engine::upsample2(x);
    x = next(x);
    x = engine::concat_channels(skips[static_cast<std::size_t>(l)], x);
    x = next(x);
    x = next(x);
  }
  return next(x);
}

Image render(const ModelWeights& model, const Tensor& amplified, double alpha2) {
  engine::NoGradGuard no_grad;
  Tensor out = engine::depth_to_space(run_network(model, amplified, alpha2));
  return to_image(engine::clamp(out, 0.0f, 1.0f));
}

Image forward(const ModelWeights& model, const raw::PackedRaw& packed,
              const raw::TuningKnobs& knobs) {
  check_input_extent(model.config, packed.planes.dim(2), packed.planes.dim(3));
  const raw::PackedRaw amplified = raw::apply_brightness(packed, knobs.alpha1);
  return render(model, amplified.planes, knobs.alpha2);
}

}  // namespace lowlight::model
