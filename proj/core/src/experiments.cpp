#include "lowlight/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "binary_io.hpp"
#include "lowlight/checkpoint.hpp"
#include "lowlight/error.hpp"
#include "lowlight/metrics.hpp"

namespace lowlight::eval {

namespace fs = std::filesystem;

const char* to_string(Protocol p) {
  switch (p) {
    case Protocol::kA: return "A";
    case Protocol::kB: return "B";
    case Protocol::kC: return "C";
    case Protocol::kD: return "D";
    case Protocol::kAblationFilter: return "ablation-filter";
    case Protocol::kAblationDirection: return "ablation-direction";
    case Protocol::kRangeSweep: return "range-sweep";
  }
  return "?";
}

Protocol parse_protocol(const std::string& text) {
  for (Protocol p : {Protocol::kA, Protocol::kB, Protocol::kC, Protocol::kD,
                     Protocol::kAblationFilter, Protocol::kAblationDirection,
                     Protocol::kRangeSweep}) {
    if (text == to_string(p)) return p;
  }
  throw Error(ErrorKind::kInvalidArgument,
              "unknown protocol '" + text +
                  "' (expected A, B, C, D, ablation-filter, ablation-direction, range-sweep)");
}

double log_linear_alpha2(double test_exposure, double low_anchor, double high_anchor) {
  if (!(test_exposure > 0.0) || !(low_anchor > 0.0) || !(high_anchor > 0.0) ||
      low_anchor == high_anchor) {
    throw Error(ErrorKind::kInvalidArgument, "log_linear_alpha2: need distinct positive anchors");
  }
  return (std::log(test_exposure) - std::log(low_anchor)) /
         (std::log(high_anchor) - std::log(low_anchor));
}

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

// Quoted when it holds a separator, a quote or a line break.
std::string csv_field(const std::string& v) {
  if (v.find_first_of(",\"\n") == std::string::npos) return v;
  std::string out = "\"";
  for (char c : v) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string ms_list(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    s += (i ? "-" : "") + std::to_string(std::llround(v[i] * 1000.0));
  }
  return s;
}

std::string trained_label(double input, const std::vector<double>& targets) {
  std::string s = num(input) + "=>";
  for (std::size_t i = 0; i < targets.size(); ++i) s += (i ? "," : "") + num(targets[i]);
  return s;
}

std::uint64_t fingerprint_of(const std::vector<std::pair<std::string, std::string>>& config) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (const auto& [k, v] : config) {
    h = detail::fnv1a(k, h);
    h = detail::fnv1a("=", h);
    h = detail::fnv1a(v, h);
    h = detail::fnv1a("\n", h);
  }
  return h;
}

// CLI flags for every plan setting that differs from the defaults.
std::string plan_flags(const TrainingPlan& plan) {
  const TrainingPlan d;
  std::ostringstream os;
  if (plan.unet.depth != d.unet.depth) os << " --depth " << plan.unet.depth;
  if (plan.unet.base_channels != d.unet.base_channels)
    os << " --base-channels " << plan.unet.base_channels;
  const auto& s = plan.schedule;
  const auto& ds = d.schedule;
  if (s.patch_size != ds.patch_size) os << " --patch " << s.patch_size;
  if (s.epochs_high_lr != ds.epochs_high_lr) os << " --epochs-high " << s.epochs_high_lr;
  if (s.epochs_low_lr != ds.epochs_low_lr) os << " --epochs-low " << s.epochs_low_lr;
  if (s.finetune_epochs != ds.finetune_epochs) os << " --finetune-epochs " << s.finetune_epochs;
  if (s.high_lr != ds.high_lr) os << " --lr-high " << num(s.high_lr);
  if (s.low_lr != ds.low_lr) os << " --lr-low " << num(s.low_lr);
  if (s.finetune_lr != ds.finetune_lr) os << " --lr-finetune " << num(s.finetune_lr);
  if (s.seed != ds.seed) os << " --seed " << s.seed;
  return os.str();
}

std::string train_hint(const TrainingPlan& plan, double input, const std::vector<double>& targets,
                       const fs::path& out) {
  std::ostringstream os;
  os << "lowlight train --dataset " << plan.dataset_path << " --input " << num(input);
  for (double t : targets) os << " --target " << num(t);
  os << plan_flags(plan) << " --out " << out.string();
  return os.str();
}

std::string finetune_hint(const TrainingPlan& plan, const ModelCatalog& catalog, double input,
                          double base_target, double final_target, int k, const fs::path& out) {
  const fs::path base = catalog.fixed(input, base_target);
  std::ostringstream os;
  os << train_hint(plan, input, {base_target}, base) << " && lowlight finetune --dataset "
     << plan.dataset_path << " --checkpoint " << base.string() << " --final " << num(final_target)
     << " --filter " << k << plan_flags(plan) << " --out " << out.string();
  return os.str();
}

std::vector<std::pair<std::string, std::string>> base_config(const ExperimentSpec& spec,
                                                             const sim::Dataset& dataset,
                                                             const TrainingPlan& plan) {
  std::vector<std::pair<std::string, std::string>> c;
  c.emplace_back("protocol", to_string(spec.protocol));
  c.emplace_back("input_exposure", num(spec.input_exposure));
  std::string anchors;
  for (std::size_t i = 0; i < spec.anchors.size(); ++i) anchors += (i ? "," : "") + num(spec.anchors[i]);
  c.emplace_back("anchors", anchors);
  c.emplace_back("test_exposure", num(spec.test_exposure));
  c.emplace_back("alpha2_mode", spec.mode == Alpha2Mode::kGridSearch ? "grid" : "log-linear");
  c.emplace_back("grid_steps", std::to_string(spec.grid_steps));
  c.emplace_back("dataset_seed", std::to_string(dataset.manifest().seed));
  c.emplace_back("dataset_manifest_hash", std::to_string(dataset.manifest().hash()));
  c.emplace_back("unet", "depth=" + std::to_string(plan.unet.depth) +
                             " base=" + std::to_string(plan.unet.base_channels));
  c.emplace_back("init_seed", std::to_string(plan.init_seed));
  c.emplace_back("schedule", plan.schedule.describe());
  return c;
}

std::optional<double> mode_alpha2(Alpha2Mode mode, double test, double low, double high) {
  if (mode == Alpha2Mode::kGridSearch) return std::nullopt;
  return log_linear_alpha2(test, low, high);
}

}  // namespace

void ReportRow::finalize() {
  double p = 0.0, s = 0.0;
  for (const auto& i : images) {
    p += i.psnr;
    s += i.ssim;
  }
  const double n = images.empty() ? 1.0 : static_cast<double>(images.size());
  mean_psnr = p / n;
  mean_ssim = s / n;
}

const ReportRow& MetricReport::row(const std::string& label) const {
  for (const auto& r : rows) {
    if (r.label == label) return r;
  }
  throw Error(ErrorKind::kNotFound, "report " + experiment_id + " has no row '" + label + "'");
}

std::string MetricReport::to_table() const {
  std::ostringstream os;
  char fp[32];
  std::snprintf(fp, sizeof(fp), "%016llx", static_cast<unsigned long long>(fingerprint));
  os << "# experiment: " << experiment_id << "\n";
  os << "# fingerprint: " << fp << "\n";
  for (const auto& [k, v] : config) os << "# config." << k << ": " << v << "\n";
  std::size_t label_w = 5, trained_w = 7;
  for (const auto& r : rows) {
    label_w = std::max(label_w, r.label.size());
    trained_w = std::max(trained_w, r.trained.size());
  }
  char line[512];
  std::snprintf(line, sizeof(line), "%-*s  %-*s  %8s  %8s  %8s  %9s  %7s  %9s\n",
                static_cast<int>(label_w), "label", static_cast<int>(trained_w), "trained",
                "test_s", "alpha1", "alpha2", "psnr_db", "ssim", "ref_psnr");
  os << line;
  for (const auto& r : rows) {
    const std::string a2 = r.alpha2 ? num(*r.alpha2) : "grid";
    const std::string ref = r.reference_psnr ? num(*r.reference_psnr) : "-";
    std::snprintf(line, sizeof(line), "%-*s  %-*s  %8s  %8s  %8s  %9.4f  %7.4f  %9s\n",
                  static_cast<int>(label_w), r.label.c_str(), static_cast<int>(trained_w),
                  r.trained.c_str(), num(r.test_exposure).c_str(), num(r.alpha1).c_str(),
                  a2.c_str(), r.mean_psnr, r.mean_ssim, ref.c_str());
    os << line;
  }
  return os.str();
}

std::string MetricReport::to_csv() const {
  std::ostringstream os;
  os << "row,trained,scene,test_exposure,alpha1,alpha2,psnr,ssim\n";
  char buf[256];
  for (const auto& r : rows) {
    const std::string lead = csv_field(r.label) + "," + csv_field(r.trained) + ",";
    for (const auto& i : r.images) {
      std::snprintf(buf, sizeof(buf), "%d,%g,%g,%.6f,%.9f,%.9f\n", i.scene_id, r.test_exposure,
                    r.alpha1, i.alpha2, i.psnr, i.ssim);
      os << lead << buf;
    }
    std::snprintf(buf, sizeof(buf), "mean,%g,%g,%s,%.9f,%.9f\n", r.test_exposure, r.alpha1,
                  r.alpha2 ? num(*r.alpha2).c_str() : "grid", r.mean_psnr, r.mean_ssim);
    os << lead << buf;
  }
  return os.str();
}

void MetricReport::write(const fs::path& stem) const {
  if (stem.has_parent_path()) fs::create_directories(stem.parent_path());
  for (const auto& [ext, body] : {std::pair{".txt", to_table()}, std::pair{".csv", to_csv()}}) {
    fs::path p = stem;
    p += ext;
    std::ofstream out(p, std::ios::trunc);
    if (!out) throw IoError(p.string(), "cannot write report");
    out << body;
  }
}

void ExperimentSpec::validate(const sim::Dataset& dataset) const {
  dataset.exposure_index(input_exposure);
  dataset.exposure_index(test_exposure);
  for (double a : anchors) dataset.exposure_index(a);
  if (grid_steps < 2) throw Error(ErrorKind::kInvalidArgument, "experiment: grid needs >= 2 steps");
  const bool needs_pair = protocol == Protocol::kC || protocol == Protocol::kD ||
                          protocol == Protocol::kAblationFilter ||
                          protocol == Protocol::kAblationDirection ||
                          protocol == Protocol::kRangeSweep;
  if (needs_pair && anchors.size() != 2) {
    throw Error(ErrorKind::kInvalidArgument, std::string("experiment ") + to_string(protocol) +
                                                 ": needs exactly two anchors (low, high)");
  }
  if (anchors.empty()) throw Error(ErrorKind::kInvalidArgument, "experiment: no anchors");
}

fs::path ModelCatalog::fixed(double input, double target) const {
  return dir_ / ("fixed_in" + ms_list({input}) + "_t" + ms_list({target}) + ".lxck");
}

fs::path ModelCatalog::mixed(double input, const std::vector<double>& targets) const {
  return dir_ / ("mixed_in" + ms_list({input}) + "_t" + ms_list(targets) + ".lxck");
}

fs::path ModelCatalog::continuous(double input, double base_target, double final_target,
                                  int filter_size) const {
  return dir_ / ("continuous_in" + ms_list({input}) + "_t" + ms_list({base_target, final_target}) +
                 "_k" + std::to_string(filter_size) + ".lxck");
}

model::ModelWeights ModelCatalog::load(const fs::path& path, const std::string& hint) const {
  if (!fs::exists(path)) {
    throw Error(ErrorKind::kNotFound,
                "missing checkpoint " + path.string() + "; produce it with: " + hint);
  }
  return model::load_checkpoint(path);
}

model::ModelWeights ensure_fixed(const ModelCatalog& catalog, const sim::Dataset& dataset,
                                 double input, const std::vector<double>& targets,
                                 const TrainingPlan& plan, const LogFn& log) {
  const fs::path path =
      targets.size() == 1 ? catalog.fixed(input, targets.front()) : catalog.mixed(input, targets);
  if (fs::exists(path)) return model::load_checkpoint(path);
  fs::create_directories(catalog.dir());
  if (log) log("training " + path.filename().string());
  model::ModelWeights m = model::build_unet(plan.unet, plan.init_seed);
  model::TrainingLog tl = model::train_base(m, dataset, input, targets, plan.schedule);
  model::save_checkpoint(m, path);
  fs::path log_path = path;
  log_path.replace_extension(".log");
  tl.write(log_path);
  return m;
}

model::ModelWeights ensure_continuous(const ModelCatalog& catalog, const sim::Dataset& dataset,
                                      double input, double base_target, double final_target,
                                      int filter_size, const TrainingPlan& plan,
                                      const LogFn& log) {
  const fs::path path = catalog.continuous(input, base_target, final_target, filter_size);
  if (fs::exists(path)) return model::load_checkpoint(path);
  model::ModelWeights m = ensure_fixed(catalog, dataset, input, {base_target}, plan, log);
  if (log) log("fine-tuning " + path.filename().string());
  model::insert_modulation(m, filter_size);
  model::TrainingLog tl =
      model::finetune_modulation(m, dataset, input, final_target, plan.schedule);
  model::save_checkpoint(m, path);
  fs::path log_path = path;
  log_path.replace_extension(".log");
  tl.write(log_path);
  return m;
}

ReportRow score_model(const model::ModelWeights& model, const sim::Dataset& dataset,
                      double input_exposure, double test_exposure, std::optional<double> alpha2,
                      const raw::KnobBounds& bounds, int grid_steps, std::string label,
                      std::string trained) {
  ReportRow row;
  row.label = std::move(label);
  row.trained = std::move(trained);
  row.test_exposure = test_exposure;
  row.alpha1 = raw::exposure_ratio(input_exposure, test_exposure);
  row.alpha2 = alpha2;
  std::vector<double> grid;
  if (alpha2) {
    grid.push_back(*alpha2);
  } else {
    for (int i = 0; i < grid_steps; ++i) {
      grid.push_back(bounds.alpha2_min +
                     (bounds.alpha2_max - bounds.alpha2_min) * i / (grid_steps - 1));
    }
  }
  for (const auto* s : dataset.split(sim::Split::kTest)) {
    const raw::PackedRaw amplified =
        raw::apply_brightness(raw::pack_bayer(dataset.raw(*s, input_exposure)), row.alpha1);
    const Image& gt = dataset.target(*s, test_exposure);
    ImageScore best{s->entry.id, -1.0, 0.0, 0.0};
    for (double a2 : grid) {
      const Image out = model::render(model, amplified.planes, a2);
      const double p = psnr(out, gt);
      if (p > best.psnr) best = {s->entry.id, p, ssim(out, gt), a2};
    }
    row.images.push_back(best);
  }
  row.finalize();
  return row;
}

ReportRow score_brightness_only(const sim::Dataset& dataset, double input_exposure,
                                double test_exposure) {
  ReportRow row;
  row.label = "brightness-only";
  row.trained = "-";
  row.test_exposure = test_exposure;
  row.alpha1 = raw::exposure_ratio(input_exposure, test_exposure);
  for (const auto* s : dataset.split(sim::Split::kTest)) {
    const Image out =
        brightness_only_baseline(raw::pack_bayer(dataset.raw(*s, input_exposure)), row.alpha1);
    const Image& gt = dataset.target(*s, test_exposure);
    row.images.push_back({s->entry.id, psnr(out, gt), ssim(out, gt), 0.0});
  }
  row.finalize();
  return row;
}

MetricReport run_protocol(const ExperimentSpec& spec, const sim::Dataset& dataset,
                          const ModelCatalog& catalog, const TrainingPlan& plan) {
  spec.validate(dataset);
  MetricReport report;
  report.experiment_id = to_string(spec.protocol);
  report.config = base_config(spec, dataset, plan);
  report.fingerprint = fingerprint_of(report.config);
  const double in = spec.input_exposure;
  const auto std_bounds = raw::KnobBounds::standard();

  switch (spec.protocol) {
    case Protocol::kA: {
      for (double trained : spec.anchors) {
        const fs::path p = catalog.fixed(in, trained);
        const auto m = catalog.load(p, train_hint(plan, in, {trained}, p));
        for (double test : spec.anchors) {
          report.rows.push_back(score_model(m, dataset, in, test, 0.0, std_bounds, spec.grid_steps,
                                            "fixed " + trained_label(in, {trained}) + " @" + num(test),
                                            trained_label(in, {trained})));
        }
      }
      break;
    }
    case Protocol::kB: {
      const fs::path p = catalog.mixed(in, spec.anchors);
      const auto m = catalog.load(p, train_hint(plan, in, spec.anchors, p));
      std::vector<double> tests = spec.anchors;
      if (std::find(tests.begin(), tests.end(), spec.test_exposure) == tests.end()) {
        tests.push_back(spec.test_exposure);
      }
      for (double test : tests) {
        report.rows.push_back(score_model(m, dataset, in, test, 0.0, std_bounds, spec.grid_steps,
                                          "mixed " + trained_label(in, spec.anchors) + " @" + num(test),
                                          trained_label(in, spec.anchors)));
      }
      break;
    }
    case Protocol::kC:
    case Protocol::kD: {
      const double low = spec.anchors[0], high = spec.anchors[1];
      const fs::path p = catalog.continuous(in, low, high, spec.filter_size);
      const auto m = catalog.load(p, finetune_hint(plan, catalog, in, low, high, spec.filter_size, p));
      const auto bounds = spec.protocol == Protocol::kD ? raw::KnobBounds::extrapolating() : std_bounds;
      const std::string trained = trained_label(in, {low, high});
      std::vector<double> tests{low, spec.test_exposure, high};
      std::sort(tests.begin(), tests.end());
      tests.erase(std::unique(tests.begin(), tests.end()), tests.end());
      for (double test : tests) {
        const double a2 = log_linear_alpha2(test, low, high);
        report.rows.push_back(score_model(m, dataset, in, test, a2, bounds, spec.grid_steps,
                                          "continuous log-linear @" + num(test), trained));
        report.rows.push_back(score_model(m, dataset, in, test, std::nullopt, bounds,
                                          spec.grid_steps, "continuous grid @" + num(test), trained));
      }
      report.rows.push_back(score_brightness_only(dataset, in, spec.test_exposure));
      break;
    }
    case Protocol::kRangeSweep: {
      const double low = spec.anchors[0], high = spec.anchors[1];
      const fs::path p = catalog.continuous(in, low, high, spec.filter_size);
      const auto m = catalog.load(p, finetune_hint(plan, catalog, in, low, high, spec.filter_size, p));
      const auto bounds = raw::KnobBounds::extrapolating();
      for (int i = 0; i < spec.grid_steps; ++i) {
        const double a2 = bounds.alpha2_min +
                          (bounds.alpha2_max - bounds.alpha2_min) * i / (spec.grid_steps - 1);
        report.rows.push_back(score_model(m, dataset, in, spec.test_exposure, a2, bounds,
                                          spec.grid_steps, "alpha2=" + num(a2),
                                          trained_label(in, {low, high})));
      }
      break;
    }
    case Protocol::kAblationFilter:
    case Protocol::kAblationDirection:
      throw Error(ErrorKind::kInvalidArgument,
                  "ablations train their own variants; use ablate_filter_size / ablate_direction");
  }
  return report;
}

MetricReport ablate_filter_size(const sim::Dataset& dataset, const ModelCatalog& catalog,
                                const TrainingPlan& plan, const ExperimentSpec& spec,
                                const LogFn& log) {
  spec.validate(dataset);
  MetricReport report;
  report.experiment_id = to_string(Protocol::kAblationFilter);
  report.config = base_config(spec, dataset, plan);
  report.config[0].second = to_string(Protocol::kAblationFilter);
  std::string sizes;
  for (int k : spec.filter_sizes) sizes += (sizes.empty() ? "" : ",") + std::to_string(k);
  report.config.emplace_back("filter_sizes", sizes);
  report.fingerprint = fingerprint_of(report.config);
  const double in = spec.input_exposure, low = spec.anchors[0], high = spec.anchors[1];
  for (int k : spec.filter_sizes) {
    const auto m = ensure_continuous(catalog, dataset, in, low, high, k, plan, log);
    ReportRow row = score_model(m, dataset, in, spec.test_exposure,
                                mode_alpha2(spec.mode, spec.test_exposure, low, high),
                                raw::KnobBounds::standard(), spec.grid_steps,
                                "filter " + std::to_string(k) + "x" + std::to_string(k),
                                trained_label(in, {low, high}));
    const int idx = (k - 1) / 2;
    if (k % 2 == 1 && idx >= 0 && idx < 4) row.reference_psnr = kReferenceFilterPsnr[idx];
    report.rows.push_back(std::move(row));
  }
  return report;
}

MetricReport ablate_direction(const sim::Dataset& dataset, const ModelCatalog& catalog,
                              const TrainingPlan& plan, const ExperimentSpec& spec,
                              const LogFn& log) {
  spec.validate(dataset);
  MetricReport report;
  report.experiment_id = to_string(Protocol::kAblationDirection);
  report.config = base_config(spec, dataset, plan);
  report.config[0].second = to_string(Protocol::kAblationDirection);
  report.config.emplace_back("filter_size", std::to_string(spec.filter_size));
  report.fingerprint = fingerprint_of(report.config);
  const double in = spec.input_exposure;
  const double low = std::min(spec.anchors[0], spec.anchors[1]);
  const double high = std::max(spec.anchors[0], spec.anchors[1]);
  const struct {
    const char* label;
    double base, final;
    double reference;
  } runs[] = {{"forward", low, high, kReferenceForwardPsnr},
              {"backward", high, low, kReferenceBackwardPsnr}};
  for (const auto& r : runs) {
    const auto m = ensure_continuous(catalog, dataset, in, r.base, r.final, spec.filter_size, plan, log);
    ReportRow row = score_model(m, dataset, in, spec.test_exposure,
                                mode_alpha2(spec.mode, spec.test_exposure, r.base, r.final),
                                raw::KnobBounds::standard(), spec.grid_steps, r.label,
                                trained_label(in, {r.base, r.final}));
    row.reference_psnr = r.reference;
    report.rows.push_back(std::move(row));
  }
  return report;
}

}  // namespace lowlight::eval
