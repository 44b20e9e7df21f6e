#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "lowlight/dataset.hpp"
#include "lowlight/model.hpp"
#include "lowlight/training.hpp"

namespace lowlight::eval {

enum class Protocol {
  kA,                  // fixed-output models, one per target exposure
  kB,                  // one fixed-output model trained on all targets
  kC,                  // continuous model tested inside its trained range
  kD,                  // continuous model tested outside its trained range
  kAblationFilter,     // modulation filter size sweep
  kAblationDirection,  // low->high vs high->low tuning
  kRangeSweep,         // PSNR as a function of alpha2 at one exposure
};

const char* to_string(Protocol p);
Protocol parse_protocol(const std::string& text);

// How alpha2 is chosen for a test exposure between two trained anchors.
enum class Alpha2Mode {
  kLogLinear,   // log-linear in exposure time between the anchors
  kGridSearch,  // best alpha2 per image on a fixed grid (upper bound)
};

// (log t - log low) / (log high - log low); 0 at the low anchor, 1 at high.
double log_linear_alpha2(double test_exposure, double low_anchor, double high_anchor);

struct ImageScore {
  int scene_id = 0;
  double psnr = 0.0;
  double ssim = 0.0;
  double alpha2 = 0.0;
};

struct ReportRow {
  std::string label;
  std::string trained;  // e.g. "0.1=>1,10"
  double test_exposure = 0.0;
  double alpha1 = 0.0;
  std::optional<double> alpha2;  // empty for grid search (chosen per image)
  std::vector<ImageScore> images;
  double mean_psnr = 0.0;
  double mean_ssim = 0.0;
  std::optional<double> reference_psnr;  // published figure, recorded only

  void finalize();
};

struct MetricReport {
  std::string experiment_id;
  std::vector<std::pair<std::string, std::string>> config;
  std::uint64_t fingerprint = 0;
  std::vector<ReportRow> rows;

  const ReportRow& row(const std::string& label) const;
  // Aligned text table with a machine-parseable header.
  std::string to_table() const;
  // One line per image plus one "mean" line per row.
  std::string to_csv() const;
  // Writes <stem>.txt and <stem>.csv.
  void write(const std::filesystem::path& stem) const;
};

struct ExperimentSpec {
  Protocol protocol = Protocol::kC;
  double input_exposure = 0.1;
  std::vector<double> anchors{1.0, 10.0};
  double test_exposure = 5.0;
  Alpha2Mode mode = Alpha2Mode::kGridSearch;
  int filter_size = 3;
  std::vector<int> filter_sizes{1, 3, 5, 7};
  int grid_steps = 21;

  void validate(const sim::Dataset& dataset) const;
};

// Where the checkpoints of each experiment live and how they are named.
class ModelCatalog {
 public:
  explicit ModelCatalog(std::filesystem::path dir) : dir_(std::move(dir)) {}

  const std::filesystem::path& dir() const { return dir_; }
  std::filesystem::path fixed(double input, double target) const;
  std::filesystem::path mixed(double input, const std::vector<double>& targets) const;
  std::filesystem::path continuous(double input, double base_target, double final_target,
                                   int filter_size) const;

  // Loads a checkpoint or throws kNotFound quoting the command that makes it.
  model::ModelWeights load(const std::filesystem::path& path, const std::string& hint) const;

 private:
  std::filesystem::path dir_;
};

// Training settings shared by every model an experiment needs.
struct TrainingPlan {
  model::UNetConfig unet;
  model::TrainSchedule schedule;
  std::uint64_t init_seed = 7;  // same default as the sampling seed
  std::string dataset_path = "<dataset>";
};

using LogFn = std::function<void(const std::string&)>;

// Train-if-missing helpers: return the checkpoint, training it first when
// the file does not exist.
model::ModelWeights ensure_fixed(const ModelCatalog& catalog, const sim::Dataset& dataset,
                                 double input, const std::vector<double>& targets,
                                 const TrainingPlan& plan, const LogFn& log = {});
model::ModelWeights ensure_continuous(const ModelCatalog& catalog, const sim::Dataset& dataset,
                                      double input, double base_target, double final_target,
                                      int filter_size, const TrainingPlan& plan,
                                      const LogFn& log = {});

// Scores one model on the test split at one exposure.
ReportRow score_model(const model::ModelWeights& model, const sim::Dataset& dataset,
                      double input_exposure, double test_exposure,
                      std::optional<double> alpha2, const raw::KnobBounds& bounds,
                      int grid_steps, std::string label, std::string trained);

// Brightness-only rendition scored on the test split.
ReportRow score_brightness_only(const sim::Dataset& dataset, double input_exposure,
                                double test_exposure);

// Runs a protocol against checkpoints that must already exist in the catalog.
MetricReport run_protocol(const ExperimentSpec& spec, const sim::Dataset& dataset,
                          const ModelCatalog& catalog, const TrainingPlan& plan);

// Ablations train whatever variant is missing, then evaluate.
MetricReport ablate_filter_size(const sim::Dataset& dataset, const ModelCatalog& catalog,
                                const TrainingPlan& plan, const ExperimentSpec& spec,
                                const LogFn& log = {});
MetricReport ablate_direction(const sim::Dataset& dataset, const ModelCatalog& catalog,
                              const TrainingPlan& plan, const ExperimentSpec& spec,
                              const LogFn& log = {});

// Reference PSNR values published for the ablations (recorded, never asserted).
inline constexpr double kReferenceFilterPsnr[] = {31.87, 32.35, 32.39, 32.48};  // 1,3,5,7
inline constexpr double kReferenceForwardPsnr = 32.35;
inline constexpr double kReferenceBackwardPsnr = 28.2;

}  // namespace lowlight::eval
