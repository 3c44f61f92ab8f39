#include "phasen/model/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <set>
#include <stdexcept>

namespace phasen::model {

namespace {

constexpr char kMagic[8] = {'P', 'H', 'S', 'N', 'C', 'K', 'P', 'T'};

class Writer {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void str(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    out_.insert(out_.end(), s.begin(), s.end());
  }
  void raw(const char* p, std::size_t n) { out_.insert(out_.end(), p, p + n); }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(in_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return v;
  }
  std::string str() {
    const std::uint32_t n = u32();
    need(n);
    std::string s(reinterpret_cast<const char*>(in_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::span<const std::uint8_t> bytes(std::size_t n) {
    need(n);
    auto s = in_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  void need(std::size_t n) const {
    if (in_.size() - pos_ < n) throw std::runtime_error("checkpoint: truncated file");
  }
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

}  // namespace

const std::string& Checkpoint::meta(std::string_view key) const {
  for (const auto& [k, v] : metadata)
    if (k == key) return v;
  throw std::out_of_range("checkpoint: missing metadata '" + std::string(key) + "'");
}

const CheckpointRecord* Checkpoint::find(std::string_view name) const {
  for (const auto& r : records)
    if (r.name == name) return &r;
  return nullptr;
}

void Checkpoint::set_meta(std::string key, std::string value) {
  for (auto& [k, v] : metadata)
    if (k == key) {
      v = std::move(value);
      return;
    }
  metadata.emplace_back(std::move(key), std::move(value));
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.value_bytes != 4 && ckpt.value_bytes != 8)
    throw std::invalid_argument("checkpoint: value width must be 4 or 8 bytes");
  Writer w;
  w.raw(kMagic, sizeof kMagic);
  w.u32(ckpt.version);
  w.u32(ckpt.value_bytes);
  w.u32(static_cast<std::uint32_t>(ckpt.metadata.size()));
  for (const auto& [k, v] : ckpt.metadata) {
    w.str(k);
    w.str(v);
  }
  w.u32(static_cast<std::uint32_t>(ckpt.records.size()));
  for (const auto& r : ckpt.records) {
    if (r.values.size() != ndgrad::shape_numel(r.shape))
      throw std::invalid_argument("checkpoint: record '" + r.name + "' size does not match shape");
    w.str(r.name);
    w.u32(static_cast<std::uint32_t>(r.shape.size()));
    for (std::size_t d : r.shape) w.u64(d);
    for (double v : r.values) {
      if (ckpt.value_bytes == 4)
        w.u32(std::bit_cast<std::uint32_t>(static_cast<float>(v)));
      else
        w.u64(std::bit_cast<std::uint64_t>(v));
    }
  }
  return w.take();
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  const auto magic = r.bytes(sizeof kMagic);
  if (std::memcmp(magic.data(), kMagic, sizeof kMagic) != 0)
    throw std::runtime_error("checkpoint: bad magic");
  Checkpoint ckpt;
  ckpt.version = r.u32();
  if (ckpt.version != kCheckpointVersion)
    throw std::runtime_error("checkpoint: unsupported version " + std::to_string(ckpt.version));
  ckpt.value_bytes = r.u32();
  if (ckpt.value_bytes != 4 && ckpt.value_bytes != 8)
    throw std::runtime_error("checkpoint: bad value width " + std::to_string(ckpt.value_bytes));
  const std::uint32_t nmeta = r.u32();
  for (std::uint32_t i = 0; i < nmeta; ++i) {
    std::string k = r.str();
    std::string v = r.str();
    ckpt.metadata.emplace_back(std::move(k), std::move(v));
  }
  const std::uint32_t nrec = r.u32();
  for (std::uint32_t i = 0; i < nrec; ++i) {
    CheckpointRecord rec;
    rec.name = r.str();
    const std::uint32_t ndim = r.u32();
    if (ndim > 8) throw std::runtime_error("checkpoint: record '" + rec.name + "' rank too high");
    for (std::uint32_t d = 0; d < ndim; ++d) rec.shape.push_back(r.u64());
    const std::size_t n = ndgrad::shape_numel(rec.shape);
    rec.values.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
      if (ckpt.value_bytes == 4)
        rec.values[k] = std::bit_cast<float>(r.u32());
      else
        rec.values[k] = std::bit_cast<double>(r.u64());
    }
    ckpt.records.push_back(std::move(rec));
  }
  if (!r.done()) throw std::runtime_error("checkpoint: trailing bytes");
  return ckpt;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const auto bytes = encode_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("checkpoint: cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("checkpoint: write failed for " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

template <typename T>
CheckpointRecord make_record(std::string name, const ndgrad::Tensor<T>& t) {
  CheckpointRecord r{std::move(name), t.shape(), {}};
  r.values.assign(t.data().begin(), t.data().end());
  return r;
}

template <typename T>
Checkpoint params_to_checkpoint(const ModelParams<T>& params) {
  Checkpoint ckpt;
  ckpt.value_bytes = sizeof(T);
  ckpt.set_meta("arch", arch_to_text(params.config()));
  for (const auto& [name, t] : params.learnable()) ckpt.records.push_back(make_record(name, t));
  for (const auto& [name, t] : params.buffers()) ckpt.records.push_back(make_record(name, t));
  return ckpt;
}

template <typename T>
ModelParams<T> params_from_checkpoint(const Checkpoint& ckpt) {
  const ArchConfig config = arch_from_text(ckpt.meta("arch"));
  const ParamLayout layout = param_layout(config);
  std::set<std::string> known;
  auto load = [&](const std::vector<ParamSpec>& specs) {
    std::vector<typename ModelParams<T>::Entry> out;
    for (const auto& spec : specs) {
      known.insert(spec.name);
      const CheckpointRecord* rec = ckpt.find(spec.name);
      if (rec == nullptr) throw std::runtime_error("checkpoint: missing tensor '" + spec.name + "'");
      if (rec->shape != spec.shape)
        throw std::runtime_error("checkpoint: '" + spec.name + "' has shape " +
                                 ndgrad::shape_str(rec->shape) + ", expected " +
                                 ndgrad::shape_str(spec.shape));
      ndgrad::Tensor<T> t(spec.shape);
      auto dst = t.mutable_data();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<T>(rec->values[i]);
      out.emplace_back(spec.name, std::move(t));
    }
    return out;
  };
  auto learnable = load(layout.learnable);
  auto buffers = load(layout.buffers);
  for (const auto& r : ckpt.records)
    if (!known.contains(r.name) && !r.name.starts_with("adam."))
      throw std::runtime_error("checkpoint: unexpected tensor '" + r.name + "'");
  return ModelParams<T>(config, std::move(learnable), std::move(buffers));
}

template CheckpointRecord make_record(std::string, const ndgrad::Tensor<float>&);
template CheckpointRecord make_record(std::string, const ndgrad::Tensor<double>&);
template Checkpoint params_to_checkpoint(const ModelParams<float>&);
template Checkpoint params_to_checkpoint(const ModelParams<double>&);
template ModelParams<float> params_from_checkpoint(const Checkpoint&);
template ModelParams<double> params_from_checkpoint(const Checkpoint&);

}  // namespace phasen::model
