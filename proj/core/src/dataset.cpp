#include "lowlight/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include "binary_io.hpp"
#include "lowlight/error.hpp"

namespace lowlight::sim {

namespace fs = std::filesystem;

namespace {

std::string fmt_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& s, const std::string& key) {
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw FormatError("manifest: bad number for '" + key + "': '" + s + "'");
  }
  return v;
}

std::uint64_t parse_u64(const std::string& s, const std::string& key) {
  std::uint64_t v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw FormatError("manifest: bad integer for '" + key + "': '" + s + "'");
  }
  return v;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

std::string scene_key(int id, const char* field) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "scene.%03d.%s", id, field);
  return buf;
}

}  // namespace

void write_raw(const fs::path& path, const raw::RawImage& image) {
  image.validate();
  detail::ByteWriter w;
  w.bytes("LXRW");
  w.u32(kRawFormatVersion);
  w.u32(static_cast<std::uint32_t>(image.width));
  w.u32(static_cast<std::uint32_t>(image.height));
  w.f32(image.black_level);
  w.f32s(image.mosaic.data(), image.mosaic.size());
  w.save(path);
}

raw::RawImage read_raw(const fs::path& path) {
  auto r = detail::ByteReader::open(path);
  if (r.bytes(4) != "LXRW") throw FormatError(path.string() + ": bad magic, not an LXRW raw file");
  const auto version = r.u32();
  if (version != kRawFormatVersion) {
    throw FormatError(path.string() + ": unsupported LXRW version " + std::to_string(version));
  }
  raw::RawImage img;
  img.width = static_cast<int>(r.u32());
  img.height = static_cast<int>(r.u32());
  img.black_level = r.f32();
  const std::size_t n = static_cast<std::size_t>(img.width) * img.height;
  if (r.remaining() != n * 4) {
    throw FormatError(path.string() + ": payload size does not match " +
                      std::to_string(img.width) + "x" + std::to_string(img.height));
  }
  img.mosaic.resize(n);
  r.f32s(img.mosaic.data(), n);
  return img;
}

void write_float_map(const fs::path& path, const FloatMapStack& stack) {
  if (stack.frames.empty() || stack.frames.size() != stack.exposures.size()) {
    throw Error(ErrorKind::kInvalidArgument, "float map: need one exposure per frame");
  }
  const Image& first = stack.frames.front();
  detail::ByteWriter w;
  w.bytes("LXPM");
  w.u32(kFloatMapVersion);
  w.u32(static_cast<std::uint32_t>(stack.frames.size()));
  w.u32(static_cast<std::uint32_t>(first.channels));
  w.u32(static_cast<std::uint32_t>(first.width));
  w.u32(static_cast<std::uint32_t>(first.height));
  for (double e : stack.exposures) w.f32(static_cast<float>(e));
  for (const auto& f : stack.frames) {
    if (!f.same_shape(first)) throw ShapeError("float map: frames differ in shape");
    w.f32s(f.pixels.data(), f.pixels.size());
  }
  w.save(path);
}

FloatMapStack read_float_map(const fs::path& path) {
  auto r = detail::ByteReader::open(path);
  if (r.bytes(4) != "LXPM") throw FormatError(path.string() + ": bad magic, not an LXPM float map");
  const auto version = r.u32();
  if (version != kFloatMapVersion) {
    throw FormatError(path.string() + ": unsupported LXPM version " + std::to_string(version));
  }
  const auto frames = r.u32();
  const int channels = static_cast<int>(r.u32());
  const int width = static_cast<int>(r.u32());
  const int height = static_cast<int>(r.u32());
  FloatMapStack stack;
  for (std::uint32_t i = 0; i < frames; ++i) stack.exposures.push_back(r.f32());
  for (std::uint32_t i = 0; i < frames; ++i) {
    Image img(channels, height, width);
    r.f32s(img.pixels.data(), img.pixels.size());
    stack.frames.push_back(std::move(img));
  }
  if (r.remaining() != 0) throw FormatError(path.string() + ": trailing bytes");
  return stack;
}

const char* to_string(Split split) {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "?";
}

Split parse_split(const std::string& text) {
  if (text == "train") return Split::kTrain;
  if (text == "val") return Split::kVal;
  if (text == "test") return Split::kTest;
  throw FormatError("unknown split '" + text + "'");
}

void DatasetConfig::validate() const {
  if (scenes < 10) {
    throw Error(ErrorKind::kInvalidArgument,
                "dataset: need at least 10 scenes for a train/val/test split");
  }
  if (width <= 0 || height <= 0 || width % 2 != 0 || height % 2 != 0) {
    throw Error(ErrorKind::kInvalidArgument,
                "dataset: size must be positive and even, got " +
                    std::to_string(width) + "x" + std::to_string(height));
  }
  if (exposures.empty() || !(reference_exposure > 0.0)) {
    throw Error(ErrorKind::kInvalidArgument, "dataset: bad exposure list");
  }
  for (double e : exposures) {
    if (!(e > 0.0)) throw Error(ErrorKind::kInvalidArgument, "dataset: exposures must be positive");
  }
  if (!(black_level >= 0.0f && black_level < 1.0f)) {
    throw Error(ErrorKind::kInvalidArgument, "dataset: black level must lie in [0,1)");
  }
}

int DatasetManifest::count(Split split) const {
  return static_cast<int>(std::count_if(scenes.begin(), scenes.end(),
                                        [&](const SceneEntry& s) { return s.split == split; }));
}

std::string DatasetManifest::to_text() const {
  std::ostringstream os;
  os << "# lowlight multi-exposure dataset manifest\n";
  os << "format = lxm\n";
  os << "version = " << version << "\n";
  os << "scene_count = " << scenes.size() << "\n";
  os << "width = " << width << "\n";
  os << "height = " << height << "\n";
  os << "seed = " << seed << "\n";
  os << "reference_exposure = " << fmt_double(reference_exposure) << "\n";
  os << "exposures =";
  for (double e : exposures) os << ' ' << fmt_double(e);
  os << "\n";
  os << "black_level = " << fmt_double(black_level) << "\n";
  os << "split.train = " << count(Split::kTrain) << "\n";
  os << "split.val = " << count(Split::kVal) << "\n";
  os << "split.test = " << count(Split::kTest) << "\n";
  for (const auto& s : scenes) {
    os << scene_key(s.id, "style") << " = " << to_string(s.style) << "\n";
    os << scene_key(s.id, "split") << " = " << to_string(s.split) << "\n";
    os << scene_key(s.id, "scene_seed") << " = " << s.scene_seed << "\n";
    os << scene_key(s.id, "noise_seed") << " = " << s.noise_seed << "\n";
    os << scene_key(s.id, "sigma_r") << " = " << fmt_double(s.noise.sigma_r) << "\n";
    os << scene_key(s.id, "g_a") << " = " << fmt_double(s.noise.g_a) << "\n";
    os << scene_key(s.id, "g_d") << " = " << fmt_double(s.noise.g_d) << "\n";
    os << scene_key(s.id, "raw") << " =";
    for (const auto& f : s.raw_files) os << ' ' << f;
    os << "\n";
    os << scene_key(s.id, "gt") << " = " << s.gt_file << "\n";
  }
  return os.str();
}

DatasetManifest DatasetManifest::parse(const std::string& text, const std::string& origin) {
  std::map<std::string, std::string> kv;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find(" = ");
    const auto eq_empty = line.rfind(" =");
    std::string key, value;
    if (eq != std::string::npos) {
      key = line.substr(0, eq);
      value = line.substr(eq + 3);
    } else if (eq_empty != std::string::npos && eq_empty + 2 == line.size()) {
      key = line.substr(0, eq_empty);
    } else {
      throw FormatError(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
    }
    kv[key] = value;
  }
  auto get = [&](const std::string& key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw FormatError(origin + ": missing key '" + key + "'");
    return it->second;
  };
  if (get("format") != "lxm") throw FormatError(origin + ": not an lxm manifest");
  DatasetManifest m;
  m.version = static_cast<std::uint32_t>(parse_u64(get("version"), "version"));
  if (m.version != kManifestVersion) {
    throw FormatError(origin + ": unsupported manifest version " + std::to_string(m.version));
  }
  const auto count = parse_u64(get("scene_count"), "scene_count");
  m.width = static_cast<int>(parse_u64(get("width"), "width"));
  m.height = static_cast<int>(parse_u64(get("height"), "height"));
  m.seed = parse_u64(get("seed"), "seed");
  m.reference_exposure = parse_double(get("reference_exposure"), "reference_exposure");
  {
    std::istringstream es(get("exposures"));
    std::string tok;
    while (es >> tok) m.exposures.push_back(parse_double(tok, "exposures"));
  }
  m.black_level = static_cast<float>(parse_double(get("black_level"), "black_level"));
  for (std::uint64_t i = 0; i < count; ++i) {
    const int id = static_cast<int>(i);
    SceneEntry s;
    s.id = id;
    s.style = parse_style(get(scene_key(id, "style")));
    s.split = parse_split(get(scene_key(id, "split")));
    s.scene_seed = parse_u64(get(scene_key(id, "scene_seed")), "scene_seed");
    s.noise_seed = parse_u64(get(scene_key(id, "noise_seed")), "noise_seed");
    s.noise.sigma_r = parse_double(get(scene_key(id, "sigma_r")), "sigma_r");
    s.noise.g_a = parse_double(get(scene_key(id, "g_a")), "g_a");
    s.noise.g_d = parse_double(get(scene_key(id, "g_d")), "g_d");
    std::istringstream rs(get(scene_key(id, "raw")));
    std::string f;
    while (rs >> f) s.raw_files.push_back(f);
    if (s.raw_files.size() != m.exposures.size()) {
      throw FormatError(origin + ": scene " + std::to_string(id) + " lists " +
                        std::to_string(s.raw_files.size()) + " raw files for " +
                        std::to_string(m.exposures.size()) + " exposures");
    }
    s.gt_file = get(scene_key(id, "gt"));
    m.scenes.push_back(std::move(s));
  }
  return m;
}

std::uint64_t DatasetManifest::hash() const { return detail::fnv1a(to_text()); }

std::string raw_file_name(int scene_id, double exposure_seconds) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "scene_%03d_exp_%lld.lxrw", scene_id,
                static_cast<long long>(std::llround(exposure_seconds * 1000.0)));
  return buf;
}

std::string gt_file_name(int scene_id) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "scene_%03d_gt.lxpm", scene_id);
  return buf;
}

DatasetManifest build_dataset(const DatasetConfig& config, const fs::path& dir) {
  config.validate();
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError(dir.string(), "cannot create directory: " + ec.message());

  DatasetManifest m;
  m.width = config.width;
  m.height = config.height;
  m.seed = config.seed;
  m.reference_exposure = config.reference_exposure;
  m.exposures = config.exposures;
  m.black_level = config.black_level;

  std::mt19937_64 rng(config.seed);
  auto draw = [&](double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
  };

  // Alternate styles so indoor and outdoor are equally represented.
  std::vector<int> indoor, outdoor;
  for (int id = 0; id < config.scenes; ++id) {
    SceneEntry s;
    s.id = id;
    s.style = (id % 2 == 0) ? SceneStyle::kIndoor : SceneStyle::kOutdoor;
    s.scene_seed = splitmix64(config.seed ^ (0x5ce0eull + static_cast<std::uint64_t>(id)));
    s.noise_seed = splitmix64(s.scene_seed ^ 0x0a15eull);
    s.noise.sigma_r = draw(config.noise.sigma_r_min, config.noise.sigma_r_max);
    s.noise.g_a = draw(config.noise.g_a_min, config.noise.g_a_max);
    s.noise.g_d = draw(config.noise.g_d_min, config.noise.g_d_max);
    for (double e : config.exposures) s.raw_files.push_back(raw_file_name(id, e));
    s.gt_file = gt_file_name(id);
    (s.style == SceneStyle::kIndoor ? indoor : outdoor).push_back(id);
    m.scenes.push_back(std::move(s));
  }

  // Stratified split: shuffle each style, interleave, then cut 70/10/20.
  std::shuffle(indoor.begin(), indoor.end(), rng);
  std::shuffle(outdoor.begin(), outdoor.end(), rng);
  std::vector<int> order;
  for (std::size_t i = 0; i < std::max(indoor.size(), outdoor.size()); ++i) {
    if (i < indoor.size()) order.push_back(indoor[i]);
    if (i < outdoor.size()) order.push_back(outdoor[i]);
  }
  const int n = config.scenes;
  const int n_train = static_cast<int>(std::lround(0.7 * n));
  const int n_val = static_cast<int>(std::lround(0.1 * n));
  for (int i = 0; i < n; ++i) {
    m.scenes[order[i]].split =
        i < n_train ? Split::kTrain : (i < n_train + n_val ? Split::kVal : Split::kTest);
  }

  for (const auto& s : m.scenes) {
    const CleanScene scene = generate_scene(s.scene_seed, config.width, config.height, s.style);
    const raw::RawImage signal = mosaic(scene);
    FloatMapStack gt;
    for (std::size_t e = 0; e < config.exposures.size(); ++e) {
      const double t = config.exposures[e];
      const raw::RawImage exposed = expose(signal, t, config.reference_exposure);
      const raw::RawImage noisy = sample_noisy_raw(exposed, s.noise, splitmix64(s.noise_seed + e),
                                                   /*clamp=*/false);
      write_raw(dir / s.raw_files[e], add_black_level(noisy, config.black_level));
      gt.exposures.push_back(t);
      gt.frames.push_back(render_exposure_srgb(scene, t, config.reference_exposure));
    }
    write_float_map(dir / s.gt_file, gt);
  }

  const fs::path manifest_path = dir / kManifestFile;
  std::ofstream out(manifest_path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(manifest_path.string(), "cannot open for writing");
  out << m.to_text();
  if (!out) throw IoError(manifest_path.string(), "write failed");
  return m;
}

Dataset Dataset::load(const fs::path& dir) {
  const fs::path manifest_path = dir / kManifestFile;
  std::ifstream in(manifest_path, std::ios::binary);
  if (!in) {
    throw Error(ErrorKind::kNotFound, manifest_path.string() +
                                          ": no dataset manifest (run `lowlight synth` first)");
  }
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  Dataset ds;
  ds.manifest_ = DatasetManifest::parse(text, manifest_path.string());
  for (const auto& entry : ds.manifest_.scenes) {
    SceneData sd;
    sd.entry = entry;
    for (const auto& f : entry.raw_files) sd.raws.push_back(read_raw(dir / f));
    sd.targets = read_float_map(dir / entry.gt_file);
    if (sd.targets.frames.size() != ds.manifest_.exposures.size()) {
      throw FormatError((dir / entry.gt_file).string() + ": frame count does not match manifest");
    }
    ds.scenes_.push_back(std::move(sd));
  }
  return ds;
}

std::vector<const SceneData*> Dataset::split(Split which) const {
  std::vector<const SceneData*> out;
  for (const auto& s : scenes_) {
    if (s.entry.split == which) out.push_back(&s);
  }
  return out;
}

std::size_t Dataset::exposure_index(double seconds) const {
  for (std::size_t i = 0; i < manifest_.exposures.size(); ++i) {
    if (std::fabs(manifest_.exposures[i] - seconds) <= 1e-9 * std::max(1.0, seconds)) return i;
  }
  throw Error(ErrorKind::kNotFound,
              "exposure " + fmt_double(seconds) + "s is not part of the dataset");
}

const raw::RawImage& Dataset::raw(const SceneData& scene, double exposure) const {
  return scene.raws.at(exposure_index(exposure));
}

const Image& Dataset::target(const SceneData& scene, double exposure) const {
  return scene.targets.frames.at(exposure_index(exposure));
}

}  // namespace lowlight::sim
