#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "lowlight/dataset.hpp"
#include "lowlight/model.hpp"

namespace lowlight::model {

struct TrainSchedule {
  int patch_size = 64;  // mosaic pixels; the packed patch is half of this
  int epochs_high_lr = 200;
  float high_lr = 1e-4f;
  int epochs_low_lr = 200;
  float low_lr = 1e-5f;
  int finetune_epochs = 200;
  float finetune_lr = 1e-4f;
  bool rotate = true;
  bool flip = true;
  std::uint64_t seed = 7;

  void validate() const;
  std::string describe() const;
};

struct EpochStats {
  std::string phase;
  int epoch = 0;  // 1-based, counted per phase
  double loss = 0.0;
  float learning_rate = 0.0f;
};

struct TrainingLog {
  std::vector<EpochStats> epochs;

  // Plain text "phase epoch loss lr" lines.
  std::string to_text() const;
  void write(const std::filesystem::path& path) const;
};

using ProgressFn = std::function<void(const EpochStats&)>;

// Aligned training pair: the packed input crop starts at (y, x) in packed
// coordinates and the target crop at (2y, 2x).
struct PatchPair {
  engine::Tensor input;   // [1,4,p,p], amplified and clipped
  engine::Tensor target;  // [1,3,2p,2p]
  int y = 0;
  int x = 0;
  int quarter_turns = 0;
  bool flip_horizontal = false;
  bool flip_vertical = false;
};

// Packs and amplifies every scene of a split once.
class PatchSource {
 public:
  PatchSource(const sim::Dataset& dataset, sim::Split split, double input_exposure);

  std::size_t size() const { return packed_.size(); }
  const sim::SceneData& scene(std::size_t i) const { return *scenes_[i]; }
  const raw::PackedRaw& packed(std::size_t i) const { return packed_[i]; }
  double input_exposure() const { return input_exposure_; }

  PatchPair sample(std::size_t scene, double target_exposure, int patch_size,
                   bool rotate, bool flip, std::mt19937_64& rng) const;

 private:
  const sim::Dataset* dataset_;
  std::vector<const sim::SceneData*> scenes_;
  std::vector<raw::PackedRaw> packed_;
  double input_exposure_;
};

// Rotates by quarter_turns x 90 degrees counter-clockwise, then flips.
engine::Tensor augment(const engine::Tensor& t, int quarter_turns, bool flip_h, bool flip_v);

// Trains the base network (modulation absent) with L1 + Adam: a phase at
// high_lr followed by one at low_lr. Each step draws one patch from one
// training scene; with several targets the target exposure is drawn per step.
TrainingLog train_base(ModelWeights& model, const sim::Dataset& dataset,
                       double input_exposure,
                       const std::vector<double>& target_exposures,
                       const TrainSchedule& schedule, const ProgressFn& progress = {});

// Trains only the modulation tensors at alpha2 = 1 toward final_exposure.
// Throws kInvariant if any base tensor changed.
TrainingLog finetune_modulation(ModelWeights& model, const sim::Dataset& dataset,
                                double input_exposure, double final_exposure,
                                const TrainSchedule& schedule,
                                const ProgressFn& progress = {});

// Mean L1 over the full images of a split at the given knobs.
double evaluate_l1(const ModelWeights& model, const sim::Dataset& dataset, sim::Split split,
                   double input_exposure, double target_exposure, double alpha2);

// FNV-1a over the bytes of the base tensors.
std::uint64_t base_checksum(const ModelWeights& model);

}  // namespace lowlight::model
