#include "sandwich/checkpoint.h"

#include <bit>
#include <cstring>

#include "sandwich/errors.h"
#include "sandwich/hash.h"
#include "sandwich/store.h"

namespace sandwich {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

class Writer {
 public:
  void u32(std::uint32_t v) { raw(&v, 4); }
  void u64(std::uint64_t v) { raw(&v, 8); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    raw(s.data(), s.size());
  }
  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out.insert(out.end(), b, b + n);
  }
  std::vector<std::uint8_t> out;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}
  std::uint32_t u32() {
    std::uint32_t v;
    raw(&v, 4);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v;
    raw(&v, 8);
    return v;
  }
  std::string str() {
    const auto n = u32();
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  void raw(void* p, std::size_t n) {
    need(n);
    std::memcpy(p, bytes_.data() + pos_, n);
    pos_ += n;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw ParseError("checkpoint: truncated");
  }
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

void Checkpoint::expect_kind(const std::string& expected) const {
  if (kind_ != expected)
    throw ProvenanceError("expected a " + expected + " checkpoint, got '" + kind_ + "'");
}

const std::string& Checkpoint::meta(const std::string& key) const {
  const auto it = meta_.find(key);
  if (it == meta_.end()) throw ParseError("checkpoint: missing meta '" + key + "'");
  return it->second;
}

void Checkpoint::add_tensor(const std::string& name, const torch::Tensor& value) {
  auto t = value.detach().to(torch::kFloat32).contiguous().clone();
  if (const auto it = index_.find(name); it != index_.end()) {
    tensors_[it->second].second = t;
    return;
  }
  index_[name] = tensors_.size();
  tensors_.emplace_back(name, t);
}

bool Checkpoint::has_tensor(const std::string& name) const { return index_.count(name) != 0; }

const torch::Tensor& Checkpoint::tensor(const std::string& name) const {
  const auto it = index_.find(name);
  if (it == index_.end()) throw ParseError("checkpoint: missing tensor '" + name + "'");
  return tensors_[it->second].second;
}

void Checkpoint::add_module(const std::string& prefix, const torch::nn::Module& module) {
  for (const auto& item : module.named_parameters()) add_tensor(prefix + "." + item.key(), item.value());
  for (const auto& item : module.named_buffers()) add_tensor(prefix + "." + item.key(), item.value());
}

void Checkpoint::load_module(const std::string& prefix, torch::nn::Module& module) const {
  torch::NoGradGuard guard;
  auto assign = [&](const std::string& key, torch::Tensor& target) {
    const auto& src = tensor(prefix + "." + key);
    if (src.sizes() != target.sizes())
      throw ShapeError("checkpoint: shape mismatch for " + prefix + "." + key);
    target.copy_(src.to(target.dtype()));
  };
  for (auto& item : module.named_parameters()) assign(item.key(), item.value());
  for (auto& item : module.named_buffers()) assign(item.key(), item.value());
}

void Checkpoint::add_adam_state(const std::string& prefix, torch::optim::Adam& optimizer,
                                const std::vector<std::pair<std::string, torch::Tensor>>& params) {
  auto& state = optimizer.state();
  set_meta(prefix + ".present", "1");
  for (const auto& [name, p] : params) {
    const auto it = state.find(p.unsafeGetTensorImpl());
    if (it == state.end()) continue;
    auto& s = static_cast<torch::optim::AdamParamState&>(*it->second);
    add_tensor(prefix + "." + name + ".exp_avg", s.exp_avg());
    add_tensor(prefix + "." + name + ".exp_avg_sq", s.exp_avg_sq());
    set_meta(prefix + "." + name + ".step", std::to_string(s.step()));
  }
}

bool Checkpoint::has_adam_state(const std::string& prefix) const { return has_meta(prefix + ".present"); }

void Checkpoint::load_adam_state(const std::string& prefix, torch::optim::Adam& optimizer,
                                 const std::vector<std::pair<std::string, torch::Tensor>>& params) const {
  auto& state = optimizer.state();
  for (const auto& [name, p] : params) {
    const auto key = prefix + "." + name;
    if (!has_tensor(key + ".exp_avg")) continue;
    auto s = std::make_unique<torch::optim::AdamParamState>();
    s->step(std::stoll(meta(key + ".step")));
    s->exp_avg(tensor(key + ".exp_avg").clone().to(p.dtype()));
    s->exp_avg_sq(tensor(key + ".exp_avg_sq").clone().to(p.dtype()));
    state[p.unsafeGetTensorImpl()] = std::move(s);
  }
}

std::vector<std::uint8_t> Checkpoint::encode() const {
  Writer w;
  w.raw("MSWC", 4);
  w.u32(kCheckpointVersion);
  w.str(kind_);
  w.u32(static_cast<std::uint32_t>(meta_.size()));
  for (const auto& [k, v] : meta_) {
    w.str(k);
    w.str(v);
  }
  w.u32(static_cast<std::uint32_t>(tensors_.size()));
  for (const auto& [name, t] : tensors_) {
    w.str(name);
    w.u32(static_cast<std::uint32_t>(t.dim()));
    for (auto d : t.sizes()) w.u64(static_cast<std::uint64_t>(d));
    w.raw(t.data_ptr<float>(), static_cast<std::size_t>(t.numel()) * sizeof(float));
  }
  return std::move(w.out);
}

Checkpoint Checkpoint::decode(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  char magic[4];
  r.raw(magic, 4);
  if (std::memcmp(magic, "MSWC", 4) != 0) throw ParseError("checkpoint: bad magic");
  if (const auto v = r.u32(); v != kCheckpointVersion)
    throw ParseError("checkpoint: unsupported version " + std::to_string(v));
  Checkpoint ck(r.str());
  const auto n_meta = r.u32();
  for (std::uint32_t i = 0; i < n_meta; ++i) {
    auto k = r.str();
    ck.meta_[k] = r.str();
  }
  const auto n_tensors = r.u32();
  for (std::uint32_t i = 0; i < n_tensors; ++i) {
    auto name = r.str();
    const auto ndim = r.u32();
    if (ndim > 8) throw ParseError("checkpoint: bad rank for " + name);
    std::vector<std::int64_t> shape;
    for (std::uint32_t d = 0; d < ndim; ++d) shape.push_back(static_cast<std::int64_t>(r.u64()));
    auto t = torch::empty(shape, torch::kFloat32);
    r.raw(t.data_ptr<float>(), static_cast<std::size_t>(t.numel()) * sizeof(float));
    ck.index_[name] = ck.tensors_.size();
    ck.tensors_.emplace_back(std::move(name), std::move(t));
  }
  if (!r.done()) throw ParseError("checkpoint: trailing bytes");
  return ck;
}

void Checkpoint::save(const std::filesystem::path& path) const { write_file(path, encode()); }

Checkpoint Checkpoint::load(const std::filesystem::path& path) { return decode(read_file(path)); }

std::string Checkpoint::hash() const {
  Fnv1a h;
  h.update(encode());
  return h.hex();
}

std::vector<std::pair<std::string, torch::Tensor>> named_params(const std::string& prefix,
                                                                const torch::nn::Module& module) {
  std::vector<std::pair<std::string, torch::Tensor>> out;
  for (const auto& item : module.named_parameters()) out.emplace_back(prefix + "." + item.key(), item.value());
  return out;
}

}  // namespace sandwich
