#pragma once

#include "lowlight/dataset.hpp"
#include "lowlight/training.hpp"
#include "support/tempdir.hpp"

namespace lowlight::testing {

// Ten 32x32 scenes, written once per test process.
inline const std::filesystem::path& tiny_dataset_dir() {
  static TempDir dir("tiny_ds");
  static const bool built = [] {
    sim::DatasetConfig c;
    c.scenes = 10;
    c.width = 32;
    c.height = 32;
    c.seed = 11;
    sim::build_dataset(c, dir.path());
    return true;
  }();
  (void)built;
  return dir.path();
}

inline const sim::Dataset& tiny_dataset() {
  static const sim::Dataset ds = sim::Dataset::load(tiny_dataset_dir());
  return ds;
}

inline model::UNetConfig tiny_unet() {
  model::UNetConfig c;
  c.depth = 1;
  c.base_channels = 2;
  return c;
}

inline model::TrainSchedule tiny_schedule(int epochs = 2) {
  model::TrainSchedule s;
  s.patch_size = 16;
  s.epochs_high_lr = epochs;
  s.epochs_low_lr = 1;
  s.finetune_epochs = epochs;
  s.high_lr = 1e-3f;
  s.low_lr = 1e-4f;
  s.finetune_lr = 1e-3f;
  return s;
}

}  // namespace lowlight::testing
