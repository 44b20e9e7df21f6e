#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "lowlight/adam.hpp"
#include "lowlight/image.hpp"
#include "lowlight/raw_pipeline.hpp"
#include "lowlight/tensor.hpp"

namespace lowlight::model {

struct UNetConfig {
  int depth = 4;
  int base_channels = 8;
  int in_channels = 4;
  int out_channels = 12;
  float slope = 0.2f;

  void validate() const;
  int channels_at(int level) const { return base_channels << level; }
  int spatial_multiple() const { return 1 << depth; }
};

// Convolution C -> C inserted after a base convolution. Its effective kernel
// blends between the Dirac identity and the learned kernel with alpha2.
struct ModulationLayer {
  engine::Tensor weight;  // [C,C,k,k]
  engine::Tensor bias;    // [C]

  int channels() const { return static_cast<int>(weight.dim(0)); }
  int kernel_size() const { return static_cast<int>(weight.dim(2)); }

  // Fresh layer whose kernel is the identity and bias zero.
  static ModulationLayer identity(int channels, int kernel_size);
};

// Dirac kernel: center tap 1 on the channel diagonal, zero elsewhere.
engine::Tensor identity_kernel(int channels, int kernel_size);

struct EffectiveWeights {
  engine::Tensor weight;
  engine::Tensor bias;
};

// w_eff = alpha2 * w + (1 - alpha2) * I,  b_eff = alpha2 * b
EffectiveWeights modulate_weights(const ModulationLayer& layer, double alpha2);

struct ConvLayer {
  std::string name;
  engine::Tensor weight;  // [Cout,Cin,k,k]
  engine::Tensor bias;    // [Cout]
  bool activation = true;
  std::optional<ModulationLayer> modulation;

  int padding() const { return static_cast<int>(weight.dim(2)) / 2; }
};

// A trained (alpha1, alpha2) setting and the target exposure it was fit to.
struct Anchor {
  double alpha1 = 1.0;
  double alpha2 = 0.0;
  double exposure = 0.0;
};

// Base network plus optional modulation layers. The layer list has a fixed
// order derived from the config; names are stable and used by checkpoints.
struct ModelWeights {
  UNetConfig config;
  std::vector<ConvLayer> layers;
  std::vector<Anchor> anchors;
  std::vector<std::pair<std::string, std::string>> provenance;
  bool base_frozen = false;
  bool modulate_projection = false;

  bool has_modulation() const;
  int modulation_kernel_size() const;  // 0 without modulation

  // Every tensor in checkpoint order: base weights, then modulation weights.
  std::vector<engine::NamedTensor> named_tensors() const;
  std::vector<engine::NamedTensor> base_tensors() const;
  std::vector<engine::NamedTensor> modulation_tensors() const;
  // Tensors updated by training: modulation only once the base is frozen.
  std::vector<engine::NamedTensor> trainable_tensors() const;
  std::size_t parameter_count() const;

  void set_provenance(const std::string& key, const std::string& value);
  std::string provenance_value(const std::string& key) const;

  // Deep copy (tensors are not shared).
  ModelWeights clone() const;
};

// He-initialized U-Net: per level conv-conv-pool, a bottleneck, per level
// upsample + 3x3 conv, skip concatenation, conv-conv, and a final 1x1
// projection to 12 channels.
ModelWeights build_unet(const UNetConfig& config, std::uint64_t init_seed);

inline constexpr int kAllowedFilterSizes[] = {1, 3, 5, 7};

// Inserts one identity-initialized modulation layer after every convolution
// except the final projection (or including it when include_projection is
// set) and freezes the base.
void insert_modulation(ModelWeights& model, int filter_size,
                       bool include_projection = false);

// Runs the network on an already amplified [N,4,h,w] input and returns the
// 12-channel output. Records onto the active tape when any tensor requires
// grad. At alpha2 == 1 the modulation tensors are used directly so they
// receive gradients; other values use blended copies.
engine::Tensor run_network(const ModelWeights& model, const engine::Tensor& input,
                           double alpha2);

// Raw-to-sRGB: brightness, network, depth_to_space, clip. Output is 3 x H x W
// at the original mosaic resolution.
Image forward(const ModelWeights& model, const raw::PackedRaw& packed,
              const raw::TuningKnobs& knobs);

// Same, from an already amplified [1,4,h,w] tensor.
Image render(const ModelWeights& model, const engine::Tensor& amplified, double alpha2);

// Throws with the padding needed when h or w is not a multiple of 2^depth.
void check_input_extent(const UNetConfig& config, std::size_t height, std::size_t width);

}  // namespace lowlight::model
