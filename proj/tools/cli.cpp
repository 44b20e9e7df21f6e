#include "cli.hpp"

#include <atomic>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "lowlight/checkpoint.hpp"
#include "lowlight/dataset.hpp"
#include "lowlight/experiments.hpp"
#include "lowlight/image_io.hpp"
#include "lowlight/model.hpp"
#include "lowlight/service.hpp"
#include "lowlight/training.hpp"

namespace lowlight::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidArgument:
    case ErrorKind::kShapeMismatch: return kExitInvalidInput;
    case ErrorKind::kIo: return kExitIo;
    case ErrorKind::kFormat: return kExitFormat;
    case ErrorKind::kNumeric: return kExitNumeric;
    case ErrorKind::kNotFound: return kExitNotFound;
    case ErrorKind::kInvariant: return kExitOther;
  }
  return kExitOther;
}

namespace {

const char* remediation(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidArgument: return "check the flag values (see --help)";
    case ErrorKind::kShapeMismatch: return "input extents must be even and fit the network (see message)";
    case ErrorKind::kIo: return "check that the path exists and is writable";
    case ErrorKind::kFormat: return "the file is corrupt or from another tool; regenerate it";
    case ErrorKind::kNumeric: return "training diverged; lower the learning rate or change the seed";
    case ErrorKind::kNotFound: return "create the missing input first (see message)";
    case ErrorKind::kInvariant: return "internal invariant failed; please report with the command line";
  }
  return "";
}

struct Options {
  bool json = false;
  int verbose = 0;

  // synth
  int scenes = 60;
  std::string size = "128x128";
  std::uint64_t seed = 7;
  std::uint64_t data_seed = 42;
  fs::path out;
  bool force = false;

  // training
  fs::path dataset;
  double input = 0.1;
  std::vector<double> targets;
  double final_exposure = 10.0;
  int depth = 4;
  int base_channels = 8;
  int patch = 64;
  int epochs_high = 200;
  int epochs_low = 200;
  int finetune_epochs = 200;
  float lr_high = 1e-4f;
  float lr_low = 1e-5f;
  float lr_finetune = 1e-4f;
  int filter = 3;
  bool include_head = false;
  fs::path checkpoint;

  // enhance
  fs::path in;
  double alpha1 = 10.0;
  double alpha2 = 0.0;
  bool extrapolate = false;

  // eval / ablate
  fs::path models;
  std::string protocol = "C";
  std::vector<double> anchors{1.0, 10.0};
  double test = 5.0;
  std::string mode = "grid";
  int grid_steps = 21;
  fs::path report;
  bool train_missing = false;
  std::string kind = "filter";

  // serve
  fs::path assets;
  std::string host = "127.0.0.1";
  int port = 8080;
  int scale = 2;
};

std::pair<int, int> parse_size(const std::string& text) {
  const auto x = text.find('x');
  int w = 0, h = 0;
  try {
    if (x == std::string::npos) throw std::invalid_argument(text);
    std::size_t used = 0;
    w = std::stoi(text.substr(0, x), &used);
    if (used != x) throw std::invalid_argument(text);
    h = std::stoi(text.substr(x + 1), &used);
    if (used != text.size() - x - 1) throw std::invalid_argument(text);
  } catch (const std::exception&) {
    throw Error(ErrorKind::kInvalidArgument, "--size '" + text + "' is not WxH");
  }
  return {w, h};
}

model::TrainSchedule schedule_from(const Options& o) {
  model::TrainSchedule s;
  s.patch_size = o.patch;
  s.epochs_high_lr = o.epochs_high;
  s.epochs_low_lr = o.epochs_low;
  s.finetune_epochs = o.finetune_epochs;
  s.high_lr = o.lr_high;
  s.low_lr = o.lr_low;
  s.finetune_lr = o.lr_finetune;
  s.seed = o.seed;
  s.validate();
  return s;
}

eval::TrainingPlan plan_from(const Options& o) {
  eval::TrainingPlan plan;
  plan.unet.depth = o.depth;
  plan.unet.base_channels = o.base_channels;
  plan.unet.validate();
  plan.schedule = schedule_from(o);
  plan.init_seed = o.seed;
  plan.dataset_path = o.dataset.string();
  return plan;
}

model::ProgressFn progress_printer(const Options& o, std::ostream& err) {
  if (o.verbose == 0) return {};
  return [&err, every = o.verbose > 1 ? 1 : 10](const model::EpochStats& e) {
    if (e.epoch % every == 0 || e.epoch == 1) {
      err << e.phase << " epoch " << e.epoch << " loss " << std::setprecision(6) << e.loss
          << " lr " << e.learning_rate << "\n";
    }
  };
}

std::string fmt(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

int cmd_synth(const Options& o, std::ostream& out) {
  const auto [w, h] = parse_size(o.size);
  if (fs::exists(o.out) && !fs::is_empty(o.out) && !o.force) {
    throw Error(ErrorKind::kInvalidArgument,
                "output directory " + o.out.string() + " is not empty; pass --force to overwrite");
  }
  sim::DatasetConfig cfg;
  cfg.scenes = o.scenes;
  cfg.width = w;
  cfg.height = h;
  cfg.seed = o.data_seed;
  cfg.validate();
  const sim::DatasetManifest m = sim::build_dataset(cfg, o.out);
  int indoor = 0;
  for (const auto& s : m.scenes) indoor += s.style == sim::SceneStyle::kIndoor;
  const int train = m.count(sim::Split::kTrain), val = m.count(sim::Split::kVal),
            test = m.count(sim::Split::kTest);
  char hash[32];
  std::snprintf(hash, sizeof(hash), "%016llx", static_cast<unsigned long long>(m.hash()));
  if (o.json) {
    out << json{{"scenes", m.scenes.size()},
                {"width", m.width},
                {"height", m.height},
                {"exposures", m.exposures},
                {"reference_exposure", m.reference_exposure},
                {"split", {{"train", train}, {"val", val}, {"test", test}}},
                {"styles", {{"indoor", indoor}, {"outdoor", static_cast<int>(m.scenes.size()) - indoor}}},
                {"black_level", m.black_level},
                {"seed", m.seed},
                {"manifest_hash", hash},
                {"out", o.out.string()}}
               .dump(2)
        << "\n";
    return kExitOk;
  }
  std::string exposures;
  for (double e : m.exposures) exposures += (exposures.empty() ? "" : ", ") + fmt(e) + "s";
  const auto& n = cfg.noise;
  out << std::left;
  auto row = [&out](const std::string& k, const std::string& v) {
    out << "  " << std::setw(20) << k << v << "\n";
  };
  out << "dataset " << o.out.string() << "\n";
  row("scenes", std::to_string(m.scenes.size()) + " (" + std::to_string(indoor) + " indoor, " +
                    std::to_string(m.scenes.size() - indoor) + " outdoor)");
  row("resolution", std::to_string(m.width) + "x" + std::to_string(m.height) + " RGGB");
  row("exposures", exposures);
  row("reference exposure", fmt(m.reference_exposure) + "s");
  row("split", std::to_string(train) + " train / " + std::to_string(val) + " val / " +
                   std::to_string(test) + " test");
  row("black level", fmt(m.black_level));
  row("sigma_r", "[" + fmt(n.sigma_r_min) + ", " + fmt(n.sigma_r_max) + "]");
  row("g_a", "[" + fmt(n.g_a_min) + ", " + fmt(n.g_a_max) + "]");
  row("g_d", "[" + fmt(n.g_d_min) + ", " + fmt(n.g_d_max) + "]");
  row("seed", std::to_string(m.seed));
  row("manifest hash", hash);
  return kExitOk;
}

int cmd_train(const Options& o, std::ostream& out, std::ostream& err) {
  const auto dataset = sim::Dataset::load(o.dataset);
  const auto plan = plan_from(o);
  const std::vector<double> targets = o.targets.empty() ? std::vector<double>{1.0} : o.targets;
  model::ModelWeights m = model::build_unet(plan.unet, plan.init_seed);
  const auto log =
      model::train_base(m, dataset, o.input, targets, plan.schedule, progress_printer(o, err));
  if (o.out.has_parent_path()) fs::create_directories(o.out.parent_path());
  model::save_checkpoint(m, o.out);
  fs::path log_path = o.out;
  log_path.replace_extension(".log");
  log.write(log_path);
  const double final_loss = log.epochs.empty() ? 0.0 : log.epochs.back().loss;
  if (o.json) {
    json anchors = json::array();
    for (const auto& a : m.anchors) anchors.push_back({a.alpha1, a.alpha2, a.exposure});
    out << json{{"checkpoint", o.out.string()},
                {"parameters", m.parameter_count()},
                {"final_loss", final_loss},
                {"anchors", anchors}}
               .dump(2)
        << "\n";
  } else {
    out << "wrote " << o.out.string() << " (" << m.parameter_count()
        << " parameters, final loss " << final_loss << ")\n";
  }
  return kExitOk;
}

int cmd_finetune(const Options& o, std::ostream& out, std::ostream& err) {
  const auto dataset = sim::Dataset::load(o.dataset);
  model::ModelWeights m = model::load_checkpoint(o.checkpoint);
  if (!m.has_modulation()) model::insert_modulation(m, o.filter, o.include_head);
  const auto log = model::finetune_modulation(m, dataset, o.input, o.final_exposure,
                                              schedule_from(o), progress_printer(o, err));
  if (o.out.has_parent_path()) fs::create_directories(o.out.parent_path());
  model::save_checkpoint(m, o.out);
  fs::path log_path = o.out;
  log_path.replace_extension(".log");
  log.write(log_path);
  const double final_loss = log.epochs.empty() ? 0.0 : log.epochs.back().loss;
  if (o.json) {
    json anchors = json::array();
    for (const auto& a : m.anchors) anchors.push_back({a.alpha1, a.alpha2, a.exposure});
    out << json{{"checkpoint", o.out.string()},
                {"filter_size", m.modulation_kernel_size()},
                {"final_loss", final_loss},
                {"anchors", anchors}}
               .dump(2)
        << "\n";
  } else {
    out << "wrote " << o.out.string() << " (modulation " << m.modulation_kernel_size() << "x"
        << m.modulation_kernel_size() << ", final loss " << final_loss << ")\n";
  }
  return kExitOk;
}

int cmd_enhance(const Options& o, std::ostream& out) {
  const raw::TuningKnobs knobs{o.alpha1, o.alpha2};
  const auto bounds =
      o.extrapolate ? raw::KnobBounds::extrapolating() : raw::KnobBounds::standard();
  if (const std::string v = bounds.violation(knobs); !v.empty()) {
    throw Error(ErrorKind::kInvalidArgument, v);
  }
  const model::ModelWeights m = model::load_checkpoint(o.checkpoint);
  const raw::PackedRaw packed = raw::pack_bayer(sim::read_raw(o.in));
  const Image rgb = model::forward(m, packed, knobs);
  if (o.out.has_parent_path()) fs::create_directories(o.out.parent_path());
  write_png(o.out, rgb);
  if (o.json) {
    out << json{{"out", o.out.string()},
                {"width", rgb.width},
                {"height", rgb.height},
                {"alpha1", o.alpha1},
                {"alpha2", o.alpha2}}
               .dump(2)
        << "\n";
  } else {
    out << "wrote " << o.out.string() << " (" << rgb.width << "x" << rgb.height
        << ", alpha1=" << o.alpha1 << ", alpha2=" << o.alpha2 << ")\n";
  }
  return kExitOk;
}

eval::ExperimentSpec spec_from(const Options& o, eval::Protocol protocol) {
  eval::ExperimentSpec spec;
  spec.protocol = protocol;
  spec.input_exposure = o.input;
  spec.anchors = o.anchors;
  spec.test_exposure = o.test;
  if (o.mode == "grid") {
    spec.mode = eval::Alpha2Mode::kGridSearch;
  } else if (o.mode == "log-linear") {
    spec.mode = eval::Alpha2Mode::kLogLinear;
  } else {
    throw Error(ErrorKind::kInvalidArgument, "--mode must be grid or log-linear");
  }
  spec.filter_size = o.filter;
  spec.grid_steps = o.grid_steps;
  return spec;
}

void print_report(const eval::MetricReport& report, const fs::path& stem, bool as_json,
                  std::ostream& out) {
  if (as_json) {
    json rows = json::array();
    for (const auto& r : report.rows) {
      rows.push_back({{"label", r.label},
                      {"trained", r.trained},
                      {"test_exposure", r.test_exposure},
                      {"alpha1", r.alpha1},
                      {"alpha2", r.alpha2 ? json(*r.alpha2) : json("grid")},
                      {"psnr", r.mean_psnr},
                      {"ssim", r.mean_ssim},
                      {"reference_psnr", r.reference_psnr ? json(*r.reference_psnr) : json()}});
    }
    char fp[32];
    std::snprintf(fp, sizeof(fp), "%016llx", static_cast<unsigned long long>(report.fingerprint));
    out << json{{"experiment", report.experiment_id},
                {"fingerprint", fp},
                {"report", stem.string() + ".txt"},
                {"rows", rows}}
               .dump(2)
        << "\n";
    return;
  }
  out << report.to_table();
  out << "report written to " << stem.string() << ".txt and .csv\n";
}

void ensure_protocol_models(const eval::ExperimentSpec& spec, const sim::Dataset& ds,
                            const eval::ModelCatalog& catalog, const eval::TrainingPlan& plan,
                            const eval::LogFn& log) {
  const double in = spec.input_exposure;
  switch (spec.protocol) {
    case eval::Protocol::kA:
      for (double t : spec.anchors) eval::ensure_fixed(catalog, ds, in, {t}, plan, log);
      break;
    case eval::Protocol::kB:
      eval::ensure_fixed(catalog, ds, in, spec.anchors, plan, log);
      break;
    default:
      eval::ensure_continuous(catalog, ds, in, spec.anchors.at(0), spec.anchors.at(1),
                              spec.filter_size, plan, log);
      break;
  }
}

int cmd_eval(const Options& o, std::ostream& out, std::ostream& err) {
  const auto protocol = eval::parse_protocol(o.protocol);
  const auto dataset = sim::Dataset::load(o.dataset);
  const auto spec = spec_from(o, protocol);
  const auto plan = plan_from(o);
  const eval::ModelCatalog catalog(o.models);
  const eval::LogFn log = [&err](const std::string& s) { err << s << "\n"; };
  eval::MetricReport report;
  if (protocol == eval::Protocol::kAblationFilter) {
    report = eval::ablate_filter_size(dataset, catalog, plan, spec, log);
  } else if (protocol == eval::Protocol::kAblationDirection) {
    report = eval::ablate_direction(dataset, catalog, plan, spec, log);
  } else {
    spec.validate(dataset);
    if (o.train_missing) ensure_protocol_models(spec, dataset, catalog, plan, log);
    report = eval::run_protocol(spec, dataset, catalog, plan);
  }
  const fs::path stem =
      o.report.empty() ? o.models / ("report_" + std::string(eval::to_string(protocol))) : o.report;
  report.write(stem);
  print_report(report, stem, o.json, out);
  return kExitOk;
}

int cmd_ablate(Options o, std::ostream& out, std::ostream& err) {
  if (o.kind == "filter") {
    o.protocol = "ablation-filter";
  } else if (o.kind == "direction") {
    o.protocol = "ablation-direction";
  } else {
    throw Error(ErrorKind::kInvalidArgument, "--kind must be filter or direction");
  }
  return cmd_eval(o, out, err);
}

std::atomic<service::TuningService*> g_service{nullptr};

int cmd_serve(const Options& o, std::ostream& out) {
  service::ServiceOptions so;
  so.assets_dir = o.assets;
  so.host = o.host;
  so.port = o.port;
  so.extrapolate = o.extrapolate;
  so.default_scale = o.scale;
  service::TuningService svc(so);
  g_service = &svc;
  auto on_signal = [](int) {
    if (auto* s = g_service.load()) s->stop();
  };
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  out << "serving " << o.assets.string() << " on http://" << o.host << ":" << o.port << "\n"
      << std::flush;
  const bool ok = svc.run();
  g_service = nullptr;
  if (!ok) throw IoError(o.host + ":" + std::to_string(o.port), "cannot bind");
  return kExitOk;
}

void add_training_flags(CLI::App* sub, Options& o) {
  sub->add_option("--depth", o.depth, "U-Net levels")->capture_default_str();
  sub->add_option("--base-channels", o.base_channels, "channels at the first level")
      ->capture_default_str();
  sub->add_option("--patch", o.patch, "training patch size in mosaic pixels")->capture_default_str();
  sub->add_option("--epochs-high", o.epochs_high, "epochs at the high learning rate")
      ->capture_default_str();
  sub->add_option("--epochs-low", o.epochs_low, "epochs at the low learning rate")
      ->capture_default_str();
  sub->add_option("--finetune-epochs", o.finetune_epochs, "modulation fine-tuning epochs")
      ->capture_default_str();
  sub->add_option("--lr-high", o.lr_high)->capture_default_str();
  sub->add_option("--lr-low", o.lr_low)->capture_default_str();
  sub->add_option("--lr-finetune", o.lr_finetune)->capture_default_str();
  sub->add_option("--seed", o.seed, "initialization and sampling seed")->capture_default_str();
  sub->add_option("--input", o.input, "input exposure in seconds")->capture_default_str();
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  Options o;
  CLI::App app{"Low-light raw enhancement with a tunable exposure level", "lowlight"};
  app.set_config("--config", "", "read options from an INI/TOML file (flags override it)");
  app.add_flag("--json", o.json, "machine-readable summaries on stdout");
  app.add_flag("-v,--verbose", o.verbose, "progress output on stderr (repeat for more)");
  app.require_subcommand(1);
  app.fallthrough();

  auto* synth = app.add_subcommand("synth", "generate the synthetic multi-exposure dataset");
  synth->add_option("--scenes", o.scenes, "number of scenes")->capture_default_str();
  synth->add_option("--size", o.size, "mosaic size WxH (both even)")->capture_default_str();
  synth->add_option("--seed", o.data_seed, "dataset seed")->capture_default_str();
  synth->add_option("--out", o.out, "output directory")->required();
  synth->add_flag("--force", o.force, "write into a non-empty directory");

  auto* train = app.add_subcommand("train", "train the base network");
  train->add_option("--dataset", o.dataset, "dataset directory")->required();
  train->add_option("--target", o.targets, "target exposure (repeat for mixed training)");
  train->add_option("--out", o.out, "checkpoint to write")->required();
  add_training_flags(train, o);

  auto* finetune = app.add_subcommand("finetune", "insert modulation layers and fine-tune them");
  finetune->add_option("--dataset", o.dataset, "dataset directory")->required();
  finetune->add_option("--checkpoint", o.checkpoint, "base checkpoint")->required();
  finetune->add_option("--final", o.final_exposure, "final anchor exposure")->capture_default_str();
  finetune->add_option("--filter", o.filter, "modulation kernel size (1, 3, 5 or 7)")
      ->capture_default_str();
  finetune->add_flag("--include-head", o.include_head, "also modulate the 1x1 projection");
  finetune->add_option("--out", o.out, "checkpoint to write")->required();
  add_training_flags(finetune, o);

  auto* enhance = app.add_subcommand("enhance", "render one raw image to PNG");
  enhance->add_option("--checkpoint", o.checkpoint, "model checkpoint")->required();
  enhance->add_option("--in", o.in, "raw input (.lxrw)")->required();
  enhance->add_option("--out", o.out, "PNG to write")->required();
  enhance->add_option("--alpha1", o.alpha1, "brightness ratio")->capture_default_str();
  enhance->add_option("--alpha2", o.alpha2, "enhancement level")->capture_default_str();
  enhance->add_flag("--extrapolate", o.extrapolate, "allow alpha2 in [-0.5, 1.5]");

  auto add_eval_flags = [&o](CLI::App* sub) {
    sub->add_option("--dataset", o.dataset, "dataset directory")->required();
    sub->add_option("--models", o.models, "checkpoint directory")->required();
    sub->add_option("--anchors", o.anchors, "trained anchor exposures")
        ->delimiter(',')
        ->capture_default_str();
    sub->add_option("--test", o.test, "test exposure")->capture_default_str();
    sub->add_option("--mode", o.mode, "alpha2 selection: grid or log-linear")
        ->capture_default_str();
    sub->add_option("--filter", o.filter, "modulation kernel size")->capture_default_str();
    sub->add_option("--grid-steps", o.grid_steps, "alpha2 grid size")->capture_default_str();
    sub->add_option("--report", o.report, "report path stem (writes .txt and .csv)");
    add_training_flags(sub, o);
  };
  auto* ev = app.add_subcommand("eval", "run an evaluation protocol");
  ev->add_option("--protocol", o.protocol,
                 "A, B, C, D, range-sweep, ablation-filter or ablation-direction")
      ->capture_default_str();
  ev->add_flag("--train-missing", o.train_missing, "train checkpoints the protocol needs");
  add_eval_flags(ev);

  auto* ablate = app.add_subcommand("ablate", "run an ablation, training missing variants");
  ablate->add_option("--kind", o.kind, "filter or direction")->capture_default_str();
  add_eval_flags(ablate);

  auto* serve = app.add_subcommand("serve", "start the local tuning service");
  serve->add_option("--assets", o.assets, "directory of checkpoints and raw images")->required();
  serve->add_option("--host", o.host)->capture_default_str();
  serve->add_option("--port", o.port)->capture_default_str();
  serve->add_option("--scale", o.scale, "default preview downscale")->capture_default_str();
  serve->add_flag("--extrapolate", o.extrapolate, "allow alpha2 in [-0.5, 1.5]");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  if (o.verbose > 0 || !o.json) {
    // Global keys plus those of the subcommand that ran.
    const std::string prefix = app.get_subcommands().front()->get_name() + ".";
    std::istringstream all(app.config_to_str(true, false));
    err << "# effective configuration (flags > config file > defaults)\n";
    for (std::string line; std::getline(all, line);) {
      const auto eq = line.find('=');
      const auto dot = line.find('.');
      if (dot == std::string::npos || dot > eq || line.rfind(prefix, 0) == 0) err << line << "\n";
    }
  }

  try {
    if (synth->parsed()) return cmd_synth(o, out);
    if (train->parsed()) return cmd_train(o, out, err);
    if (finetune->parsed()) return cmd_finetune(o, out, err);
    if (enhance->parsed()) return cmd_enhance(o, out);
    if (ev->parsed()) return cmd_eval(o, out, err);
    if (ablate->parsed()) return cmd_ablate(o, out, err);
    if (serve->parsed()) return cmd_serve(o, out);
  } catch (const Error& e) {
    err << "error [" << to_string(e.kind()) << "]: " << e.what() << "\n"
        << "hint: " << remediation(e.kind()) << "\n";
    return exit_code_for(e.kind());
  } catch (const fs::filesystem_error& e) {
    err << "error [io]: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitOther;
  }
  return kExitUsage;
}

}  // namespace lowlight::cli
