#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "lowlight/image.hpp"
#include "lowlight/raw_pipeline.hpp"
#include "lowlight/sensor_sim.hpp"

namespace lowlight::sim {

// ---------------------------------------------------------------------------
// File formats. All binary fields are little-endian.
//
//   .lxrw  raw mosaic
//     "LXRW" | u32 version | u32 width | u32 height | f32 black_level
//     | f32 mosaic[height * width]
//
//   .lxpm  float map stack (one frame per exposure time)
//     "LXPM" | u32 version | u32 frames | u32 channels | u32 width
//     | u32 height | f32 exposure_seconds[frames]
//     | f32 pixels[frames * channels * height * width]   (planar)
//
//   .lxm   UTF-8 "key = value" manifest, one entry per line, '#' comments.
// ---------------------------------------------------------------------------

inline constexpr std::uint32_t kRawFormatVersion = 1;
inline constexpr std::uint32_t kFloatMapVersion = 1;
inline constexpr std::uint32_t kManifestVersion = 1;

void write_raw(const std::filesystem::path& path, const raw::RawImage& image);
raw::RawImage read_raw(const std::filesystem::path& path);

struct FloatMapStack {
  std::vector<double> exposures;
  std::vector<Image> frames;
};

void write_float_map(const std::filesystem::path& path, const FloatMapStack& stack);
FloatMapStack read_float_map(const std::filesystem::path& path);

enum class Split { kTrain, kVal, kTest };
const char* to_string(Split split);
Split parse_split(const std::string& text);

// Per-scene noise parameters are drawn uniformly from these ranges.
struct NoisePool {
  double sigma_r_min = 1.5e-3, sigma_r_max = 2.5e-3;
  double g_a_min = 0.6e-3, g_a_max = 1.4e-3;
  double g_d_min = 0.8, g_d_max = 1.25;
};

struct DatasetConfig {
  int scenes = 60;
  int width = 128;
  int height = 128;
  std::uint64_t seed = 42;
  double reference_exposure = 10.0;
  std::vector<double> exposures{0.1, 0.5, 1.0, 5.0, 10.0};
  float black_level = 0.03125f;
  NoisePool noise;

  void validate() const;
};

struct SceneEntry {
  int id = 0;
  SceneStyle style = SceneStyle::kIndoor;
  Split split = Split::kTrain;
  std::uint64_t scene_seed = 0;
  std::uint64_t noise_seed = 0;
  NoiseParams noise;
  std::vector<std::string> raw_files;  // aligned with DatasetManifest::exposures
  std::string gt_file;
};

struct DatasetManifest {
  std::uint32_t version = kManifestVersion;
  int width = 0;
  int height = 0;
  std::uint64_t seed = 0;
  double reference_exposure = 10.0;
  std::vector<double> exposures;
  float black_level = 0.0f;
  std::vector<SceneEntry> scenes;

  int count(Split split) const;
  std::string to_text() const;
  static DatasetManifest parse(const std::string& text, const std::string& origin);
  // FNV-1a of to_text().
  std::uint64_t hash() const;
};

std::string raw_file_name(int scene_id, double exposure_seconds);
std::string gt_file_name(int scene_id);
inline constexpr const char* kManifestFile = "manifest.lxm";

// Writes manifest.lxm plus one .lxrw per (scene, exposure) and one .lxpm per
// scene into dir (created if missing). Output bytes depend only on config.
DatasetManifest build_dataset(const DatasetConfig& config,
                              const std::filesystem::path& dir);

struct SceneData {
  SceneEntry entry;
  std::vector<raw::RawImage> raws;  // aligned with manifest exposures
  FloatMapStack targets;
};

// In-memory dataset loaded from a directory written by build_dataset.
class Dataset {
 public:
  static Dataset load(const std::filesystem::path& dir);

  const DatasetManifest& manifest() const { return manifest_; }
  const std::vector<SceneData>& scenes() const { return scenes_; }
  std::vector<const SceneData*> split(Split which) const;

  // Throws kNotFound when the exposure is not part of the dataset.
  std::size_t exposure_index(double seconds) const;
  const raw::RawImage& raw(const SceneData& scene, double exposure) const;
  const Image& target(const SceneData& scene, double exposure) const;

 private:
  DatasetManifest manifest_;
  std::vector<SceneData> scenes_;
};

}  // namespace lowlight::sim
