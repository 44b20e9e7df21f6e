#include "lowlight/checkpoint.hpp"

#include <map>

#include "binary_io.hpp"
#include "lowlight/error.hpp"

namespace lowlight::model {

void save_checkpoint(const ModelWeights& model, const std::filesystem::path& path) {
  detail::ByteWriter w;
  w.bytes("LXCK");
  w.u32(kCheckpointVersion);
  const auto& c = model.config;
  w.u32(static_cast<std::uint32_t>(c.depth));
  w.u32(static_cast<std::uint32_t>(c.base_channels));
  w.u32(static_cast<std::uint32_t>(c.in_channels));
  w.u32(static_cast<std::uint32_t>(c.out_channels));
  w.f32(c.slope);
  w.u8(model.base_frozen ? 1 : 0);
  w.u8(model.modulate_projection ? 1 : 0);
  w.u32(static_cast<std::uint32_t>(model.modulation_kernel_size()));
  w.u32(static_cast<std::uint32_t>(model.anchors.size()));
  for (const auto& a : model.anchors) {
    w.f64(a.alpha1);
    w.f64(a.alpha2);
    w.f64(a.exposure);
  }
  w.u32(static_cast<std::uint32_t>(model.provenance.size()));
  for (const auto& [k, v] : model.provenance) {
    w.str(k);
    w.str(v);
  }
  const auto tensors = model.named_tensors();
  w.u32(static_cast<std::uint32_t>(tensors.size()));
  std::uint64_t offset = 0;
  for (const auto& t : tensors) {
    w.str(t.name);
    w.u8(t.tensor.requires_grad() ? 1 : 0);
    w.u32(static_cast<std::uint32_t>(t.tensor.rank()));
    for (auto d : t.tensor.shape()) w.u32(static_cast<std::uint32_t>(d));
    w.u64(offset);
    offset += t.tensor.numel();
  }
  for (const auto& t : tensors) w.f32s(t.tensor.data().data(), t.tensor.numel());
  w.u64(detail::fnv1a_bytes(w.buffer().data(), w.buffer().size()));
  w.save(path);
}

ModelWeights load_checkpoint(const std::filesystem::path& path) {
  auto r = detail::ByteReader::open(path);
  const std::string where = path.string();
  if (r.bytes(4) != "LXCK") throw FormatError(where + ": bad magic, not an LXCK checkpoint");
  const auto version = r.u32();
  if (version != kCheckpointVersion) {
    throw FormatError(where + ": checkpoint version " + std::to_string(version) +
                      " not supported (expected " + std::to_string(kCheckpointVersion) + ")");
  }
  {
    // Verify the trailing checksum before trusting any field.
    auto whole = detail::ByteReader::open(path);
    const std::size_t total = whole.remaining();
    if (total < 16) throw FormatError(where + ": truncated checkpoint");
    std::string body = whole.bytes(total - 8);
    const std::uint64_t stored = whole.u64();
    if (detail::fnv1a(body) != stored) {
      throw FormatError(where + ": checksum mismatch (truncated or corrupt checkpoint)");
    }
  }
  UNetConfig cfg;
  cfg.depth = static_cast<int>(r.u32());
  cfg.base_channels = static_cast<int>(r.u32());
  cfg.in_channels = static_cast<int>(r.u32());
  cfg.out_channels = static_cast<int>(r.u32());
  cfg.slope = r.f32();
  const bool frozen = r.u8() != 0;
  const bool modulate_projection = r.u8() != 0;
  const int mod_k = static_cast<int>(r.u32());

  ModelWeights m = build_unet(cfg, 0);
  m.provenance.clear();
  if (mod_k > 0) insert_modulation(m, mod_k, modulate_projection);
  m.base_frozen = frozen;

  const auto n_anchors = r.u32();
  for (std::uint32_t i = 0; i < n_anchors; ++i) {
    Anchor a;
    a.alpha1 = r.f64();
    a.alpha2 = r.f64();
    a.exposure = r.f64();
    m.anchors.push_back(a);
  }
  const auto n_prov = r.u32();
  for (std::uint32_t i = 0; i < n_prov; ++i) {
    std::string k = r.str();
    std::string v = r.str();
    m.provenance.emplace_back(std::move(k), std::move(v));
  }

  struct Entry {
    bool trainable;
    engine::Shape shape;
    std::uint64_t offset;
  };
  std::map<std::string, Entry> dir;
  const auto n_tensors = r.u32();
  for (std::uint32_t i = 0; i < n_tensors; ++i) {
    std::string name = r.str();
    Entry e;
    e.trainable = r.u8() != 0;
    const auto rank = r.u32();
    for (std::uint32_t d = 0; d < rank; ++d) e.shape.push_back(r.u32());
    e.offset = r.u64();
    dir.emplace(std::move(name), std::move(e));
  }
  const std::size_t payload_floats = (r.remaining() - 8) / 4;
  std::vector<float> payload(payload_floats);
  r.f32s(payload.data(), payload_floats);

  auto tensors = m.named_tensors();
  if (tensors.size() != dir.size()) {
    throw FormatError(where + ": checkpoint holds " + std::to_string(dir.size()) +
                      " tensors, architecture expects " + std::to_string(tensors.size()));
  }
  for (auto& t : tensors) {
    auto it = dir.find(t.name);
    if (it == dir.end()) throw FormatError(where + ": missing tensor '" + t.name + "'");
    const Entry& e = it->second;
    if (e.shape != t.tensor.shape()) {
      throw FormatError(where + ": tensor '" + t.name + "' has shape " +
                        engine::shape_string(e.shape) + ", expected " +
                        engine::shape_string(t.tensor.shape()));
    }
    if (e.offset + t.tensor.numel() > payload.size()) {
      throw FormatError(where + ": tensor '" + t.name + "' extends past the payload");
    }
    auto dst = t.tensor.mutable_data();
    std::copy_n(payload.begin() + static_cast<std::ptrdiff_t>(e.offset), dst.size(), dst.begin());
    t.tensor.set_requires_grad(e.trainable);
  }
  return m;
}

}  // namespace lowlight::model
