#include "lowlight/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "binary_io.hpp"
#include "lowlight/error.hpp"
#include "lowlight/ops.hpp"

namespace lowlight::model {

using engine::Tensor;

void TrainSchedule::validate() const {
  if (patch_size < 2 || patch_size % 2 != 0) {
    throw Error(ErrorKind::kInvalidArgument, "schedule: patch size must be even");
  }
  if (epochs_high_lr <= 0 || epochs_low_lr <= 0 || finetune_epochs <= 0) {
    throw Error(ErrorKind::kInvalidArgument, "schedule: epoch counts must be positive");
  }
  if (!(high_lr > 0.0f) || !(low_lr > 0.0f) || !(finetune_lr > 0.0f)) {
    throw Error(ErrorKind::kInvalidArgument, "schedule: learning rates must be positive");
  }
}

std::string TrainSchedule::describe() const {
  std::ostringstream os;
  os << "patch=" << patch_size << " epochs=" << epochs_high_lr << "@" << high_lr << "+"
     << epochs_low_lr << "@" << low_lr << " finetune=" << finetune_epochs << "@" << finetune_lr
     << " rotate=" << rotate << " flip=" << flip << " seed=" << seed;
  return os.str();
}

std::string TrainingLog::to_text() const {
  std::ostringstream os;
  os << "# phase epoch loss lr\n";
  for (const auto& e : epochs) {
    char buf[128];
    std::snprintf(buf, sizeof(buf), "%s %d %.9g %.9g\n", e.phase.c_str(), e.epoch, e.loss,
                  static_cast<double>(e.learning_rate));
    os << buf;
  }
  return os.str();
}

void TrainingLog::write(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError(path.string(), "cannot open metrics log");
  out << to_text();
}

Tensor augment(const Tensor& t, int quarter_turns, bool flip_h, bool flip_v) {
  const auto& s = t.shape();
  if (s.size() != 4 || s[2] != s[3]) {
    throw ShapeError("augment: needs a square [N,C,S,S] tensor, got " + engine::shape_string(s));
  }
  const std::size_t planes = s[0] * s[1], n = s[2];
  Tensor out(s);
  auto src = t.data();
  auto dst = out.mutable_data();
  const int turns = ((quarter_turns % 4) + 4) % 4;
  for (std::size_t p = 0; p < planes; ++p) {
    const float* in = src.data() + p * n * n;
    float* o = dst.data() + p * n * n;
    for (std::size_t y = 0; y < n; ++y) {
      for (std::size_t x = 0; x < n; ++x) {
        // Output (y, x) after flips, then undo the rotation to find the source.
        std::size_t yy = flip_v ? n - 1 - y : y;
        std::size_t xx = flip_h ? n - 1 - x : x;
        std::size_t sy = yy, sx = xx;
        switch (turns) {
          case 1: sy = xx; sx = n - 1 - yy; break;
          case 2: sy = n - 1 - yy; sx = n - 1 - xx; break;
          case 3: sy = n - 1 - xx; sx = yy; break;
          default: break;
        }
        o[y * n + x] = in[sy * n + sx];
      }
    }
  }
  return out;
}

PatchSource::PatchSource(const sim::Dataset& dataset, sim::Split split, double input_exposure)
    : dataset_(&dataset), scenes_(dataset.split(split)), input_exposure_(input_exposure) {
  if (scenes_.empty()) {
    throw Error(ErrorKind::kInvalidArgument,
                std::string("training: dataset has no ") + sim::to_string(split) + " scenes");
  }
  for (const auto* s : scenes_) packed_.push_back(raw::pack_bayer(dataset.raw(*s, input_exposure)));
}

PatchPair PatchSource::sample(std::size_t scene, double target_exposure, int patch_size,
                              bool rotate, bool flip, std::mt19937_64& rng) const {
  const raw::PackedRaw& packed = packed_.at(scene);
  const Image& target = dataset_->target(*scenes_.at(scene), target_exposure);
  const int p = patch_size / 2;
  const int h = packed.height(), w = packed.width();
  if (p > h || p > w) {
    throw Error(ErrorKind::kInvalidArgument, "training: patch size " + std::to_string(patch_size) +
                                                 " exceeds the image");
  }
  PatchPair pair;
  pair.y = std::uniform_int_distribution<int>(0, h - p)(rng);
  pair.x = std::uniform_int_distribution<int>(0, w - p)(rng);
  if (rotate) pair.quarter_turns = std::uniform_int_distribution<int>(0, 3)(rng);
  if (flip) {
    pair.flip_horizontal = std::uniform_int_distribution<int>(0, 1)(rng) == 1;
    pair.flip_vertical = std::uniform_int_distribution<int>(0, 1)(rng) == 1;
  }

  const float gain = static_cast<float>(raw::exposure_ratio(input_exposure_, target_exposure));
  const auto pp = static_cast<std::size_t>(p);
  Tensor in({1, 4, pp, pp});
  {
    auto src = packed.planes.data();
    auto dst = in.mutable_data();
    for (std::size_t c = 0; c < 4; ++c) {
      for (std::size_t y = 0; y < pp; ++y) {
        for (std::size_t x = 0; x < pp; ++x) {
          const float v = src[(c * h + pair.y + y) * w + pair.x + x] * gain;
          dst[(c * pp + y) * pp + x] = std::clamp(v, 0.0f, 1.0f);
        }
      }
    }
  }
  const std::size_t tp = 2 * pp;
  Tensor tgt({1, 3, tp, tp});
  {
    auto dst = tgt.mutable_data();
    for (int c = 0; c < 3; ++c) {
      for (std::size_t y = 0; y < tp; ++y) {
        for (std::size_t x = 0; x < tp; ++x) {
          dst[(c * tp + y) * tp + x] =
              target.at(c, 2 * pair.y + static_cast<int>(y), 2 * pair.x + static_cast<int>(x));
        }
      }
    }
  }
  if (pair.quarter_turns || pair.flip_horizontal || pair.flip_vertical) {
    in = augment(in, pair.quarter_turns, pair.flip_horizontal, pair.flip_vertical);
    tgt = augment(tgt, pair.quarter_turns, pair.flip_horizontal, pair.flip_vertical);
  }
  pair.input = std::move(in);
  pair.target = std::move(tgt);
  return pair;
}

namespace {

std::string join_exposures(const std::vector<double>& v) {
  std::ostringstream os;
  for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
  return os.str();
}

// One epoch: each training scene once, in shuffled order.
double run_epoch(ModelWeights& model, std::vector<engine::NamedTensor>& params,
                 engine::AdamState& adam, const PatchSource& source,
                 const std::vector<double>& targets, double alpha2,
                 const TrainSchedule& schedule, std::mt19937_64& rng,
                 const std::string& phase, int epoch) {
  std::vector<std::size_t> order(source.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  double total = 0.0;
  for (std::size_t idx : order) {
    const double target_exposure =
        targets.size() == 1
            ? targets.front()
            : targets[std::uniform_int_distribution<std::size_t>(0, targets.size() - 1)(rng)];
    PatchPair pair = source.sample(idx, target_exposure, schedule.patch_size, schedule.rotate,
                                   schedule.flip, rng);
    for (auto& p : params) p.tensor.zero_grad();
    engine::GradTape tape;
    Tensor pred = engine::depth_to_space(run_network(model, pair.input, alpha2));
    Tensor loss = engine::l1_loss(pred, pair.target);
    const double value = loss.data()[0];
    if (!std::isfinite(value)) {
      throw Error(ErrorKind::kNumeric, "training diverged in phase '" + phase + "' at epoch " +
                                           std::to_string(epoch) + " (loss is not finite)");
    }
    tape.backward(loss);
    engine::adam_step(params, adam);
    total += value;
  }
  return total / static_cast<double>(order.size());
}

}  // namespace

TrainingLog train_base(ModelWeights& model, const sim::Dataset& dataset, double input_exposure,
                       const std::vector<double>& target_exposures,
                       const TrainSchedule& schedule, const ProgressFn& progress) {
  schedule.validate();
  if (model.has_modulation()) {
    throw Error(ErrorKind::kInvalidArgument, "train_base: model already has modulation layers");
  }
  if (target_exposures.empty()) {
    throw Error(ErrorKind::kInvalidArgument, "train_base: no target exposure");
  }
  for (double t : target_exposures) {
    dataset.exposure_index(t);
    if (!(t > input_exposure)) {
      throw Error(ErrorKind::kInvalidArgument,
                  "train_base: target exposure must exceed the input exposure");
    }
  }
  dataset.exposure_index(input_exposure);

  PatchSource source(dataset, sim::Split::kTrain, input_exposure);
  auto params = model.trainable_tensors();
  for (auto& p : params) p.tensor.set_requires_grad(true);
  engine::AdamState adam(params, {schedule.high_lr});
  std::mt19937_64 rng(schedule.seed);
  TrainingLog log;
  const struct {
    const char* name;
    int epochs;
    float lr;
  } phases[] = {{"base-high", schedule.epochs_high_lr, schedule.high_lr},
                {"base-low", schedule.epochs_low_lr, schedule.low_lr}};
  for (const auto& ph : phases) {
    adam.set_learning_rate(ph.lr);
    for (int e = 1; e <= ph.epochs; ++e) {
      const double loss =
          run_epoch(model, params, adam, source, target_exposures, 1.0, schedule, rng, ph.name, e);
      log.epochs.push_back({ph.name, e, loss, ph.lr});
      if (progress) progress(log.epochs.back());
    }
  }
  for (auto& p : params) p.tensor.zero_grad();

  model.anchors.clear();
  for (double t : target_exposures) {
    model.anchors.push_back({raw::exposure_ratio(input_exposure, t), 0.0, t});
  }
  model.set_provenance("base.input_exposure", std::to_string(input_exposure));
  model.set_provenance("base.targets", join_exposures(target_exposures));
  model.set_provenance("base.schedule", schedule.describe());
  return log;
}

std::uint64_t base_checksum(const ModelWeights& model) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (const auto& t : model.base_tensors()) {
    h = detail::fnv1a_bytes(t.tensor.data().data(), t.tensor.numel() * sizeof(float), h);
  }
  return h;
}

TrainingLog finetune_modulation(ModelWeights& model, const sim::Dataset& dataset,
                                double input_exposure, double final_exposure,
                                const TrainSchedule& schedule, const ProgressFn& progress) {
  schedule.validate();
  if (!model.has_modulation() || !model.base_frozen) {
    throw Error(ErrorKind::kInvalidArgument,
                "finetune_modulation: insert modulation layers before fine-tuning");
  }
  dataset.exposure_index(final_exposure);
  const std::uint64_t before = base_checksum(model);
  for (auto& t : model.base_tensors()) t.tensor.set_requires_grad(false);

  PatchSource source(dataset, sim::Split::kTrain, input_exposure);
  auto params = model.modulation_tensors();
  for (auto& p : params) p.tensor.set_requires_grad(true);
  engine::AdamState adam(params, {schedule.finetune_lr});
  std::mt19937_64 rng(schedule.seed ^ 0xf1e7u);
  TrainingLog log;
  const std::vector<double> targets{final_exposure};
  for (int e = 1; e <= schedule.finetune_epochs; ++e) {
    const double loss =
        run_epoch(model, params, adam, source, targets, 1.0, schedule, rng, "finetune", e);
    log.epochs.push_back({"finetune", e, loss, schedule.finetune_lr});
    if (progress) progress(log.epochs.back());
  }
  for (auto& p : params) p.tensor.zero_grad();

  if (base_checksum(model) != before) {
    throw Error(ErrorKind::kInvariant, "finetune_modulation: a frozen base tensor changed");
  }
  model.anchors.push_back({raw::exposure_ratio(input_exposure, final_exposure), 1.0,
                           final_exposure});
  model.set_provenance("finetune.final_exposure", std::to_string(final_exposure));
  model.set_provenance("finetune.filter_size", std::to_string(model.modulation_kernel_size()));
  model.set_provenance("finetune.schedule", schedule.describe());
  return log;
}

double evaluate_l1(const ModelWeights& model, const sim::Dataset& dataset, sim::Split split,
                   double input_exposure, double target_exposure, double alpha2) {
  double total = 0.0;
  int count = 0;
  for (const auto* s : dataset.split(split)) {
    const raw::PackedRaw packed = raw::pack_bayer(dataset.raw(*s, input_exposure));
    const Image out = forward(model, packed,
                              {raw::exposure_ratio(input_exposure, target_exposure), alpha2});
    const Image& gt = dataset.target(*s, target_exposure);
    double sum = 0.0;
    for (std::size_t i = 0; i < out.pixels.size(); ++i) sum += std::fabs(out.pixels[i] - gt.pixels[i]);
    total += sum / static_cast<double>(out.pixels.size());
    ++count;
  }
  if (count == 0) throw Error(ErrorKind::kInvalidArgument, "evaluate_l1: empty split");
  return total / count;
}

}  // namespace lowlight::model
