#include "cmada/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "cmada/error.hpp"

namespace cmada {

std::string to_string(Phase p) {
  switch (p) {
    case Phase::translation: return "translation";
    case Phase::supervised: return "supervised";
    case Phase::adaptation: return "adaptation";
  }
  return "unknown";
}

Phase phase_from_string(const std::string& s) {
  if (s == "translation") return Phase::translation;
  if (s == "supervised") return Phase::supervised;
  if (s == "adaptation") return Phase::adaptation;
  throw IoError("unknown checkpoint phase '" + s + "'");
}

namespace {

constexpr char kMagic[8] = {'C', 'M', 'A', 'D', 'A', 'C', 'K', '1'};

std::uint8_t dtype_code(torch::ScalarType t) {
  switch (t) {
    case torch::kFloat32: return 0;
    case torch::kFloat64: return 1;
    case torch::kInt64: return 2;
    default: throw IoError("checkpoint: unsupported tensor dtype");
  }
}

torch::ScalarType dtype_from_code(std::uint8_t c) {
  switch (c) {
    case 0: return torch::kFloat32;
    case 1: return torch::kFloat64;
    case 2: return torch::kInt64;
    default: throw IoError("checkpoint: unknown dtype code");
  }
}

template <typename T>
void write_pod(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
  T v;
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw IoError("checkpoint: truncated file");
  return v;
}

}  // namespace

const torch::Tensor& Checkpoint::blob(const std::string& name) const {
  for (const auto& [n, t] : blobs) {
    if (n == name) return t;
  }
  throw IoError("checkpoint: no blob named '" + name + "'");
}

bool Checkpoint::has_blob(const std::string& name) const {
  for (const auto& b : blobs) {
    if (b.first == name) return true;
  }
  return false;
}

void Checkpoint::save(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const nlohmann::json header = {{"format", 1},        {"phase", to_string(phase)}, {"step", step},
                                 {"seed", seed},       {"config_hash", config_hash}, {"meta", meta}};
  const std::string h = header.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out.write(kMagic, sizeof(kMagic));
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(h.size()));
  out.write(h.data(), static_cast<std::streamsize>(h.size()));
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(blobs.size()));
  for (const auto& [name, tensor] : blobs) {
    const auto t = tensor.detach().contiguous();
    write_pod<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_pod<std::uint8_t>(out, dtype_code(t.scalar_type()));
    write_pod<std::uint8_t>(out, static_cast<std::uint8_t>(t.dim()));
    for (auto d : t.sizes()) write_pod<std::int64_t>(out, d);
    out.write(static_cast<const char*>(t.data_ptr()), static_cast<std::streamsize>(t.nbytes()));
  }
  if (!out) throw IoError("checkpoint write failed: " + path.string());
}

Checkpoint Checkpoint::load(const std::filesystem::path& path, const std::string& expected_hash,
                            bool allow_hash_mismatch) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw IoError("not a checkpoint file: " + path.string());
  }
  const auto hlen = read_pod<std::uint32_t>(in);
  std::string h(hlen, '\0');
  in.read(h.data(), hlen);
  if (!in) throw IoError("checkpoint: truncated header");
  const auto header = nlohmann::json::parse(h);
  Checkpoint ck;
  ck.phase = phase_from_string(header.at("phase").get<std::string>());
  ck.step = header.at("step").get<std::int64_t>();
  ck.seed = header.at("seed").get<std::uint64_t>();
  ck.config_hash = header.at("config_hash").get<std::string>();
  ck.meta = header.at("meta");
  if (!expected_hash.empty() && ck.config_hash != expected_hash && !allow_hash_mismatch) {
    throw ConfigError("checkpoint " + path.string() + " was produced with config hash " + ck.config_hash +
                      ", expected " + expected_hash);
  }
  const auto count = read_pod<std::uint32_t>(in);
  for (std::uint32_t b = 0; b < count; ++b) {
    const auto nlen = read_pod<std::uint16_t>(in);
    std::string name(nlen, '\0');
    in.read(name.data(), nlen);
    const auto dtype = dtype_from_code(read_pod<std::uint8_t>(in));
    const auto ndim = read_pod<std::uint8_t>(in);
    std::vector<std::int64_t> dims(ndim);
    for (auto& d : dims) d = read_pod<std::int64_t>(in);
    auto t = torch::empty(dims, torch::TensorOptions().dtype(dtype));
    in.read(static_cast<char*>(t.data_ptr()), static_cast<std::streamsize>(t.nbytes()));
    if (!in) throw IoError("checkpoint: truncated blob '" + name + "'");
    ck.blobs.emplace_back(std::move(name), std::move(t));
  }
  return ck;
}

void capture_module(Checkpoint& ck, const std::string& prefix, const torch::nn::Module& m) {
  for (const auto& p : m.named_parameters()) ck.blobs.emplace_back(prefix + "/" + p.key(), p.value().detach().clone());
  for (const auto& b : m.named_buffers()) ck.blobs.emplace_back(prefix + "/" + b.key(), b.value().detach().clone());
}

void restore_module(const Checkpoint& ck, const std::string& prefix, torch::nn::Module& m) {
  torch::NoGradGuard guard;
  for (auto& p : m.named_parameters()) {
    const auto& src = ck.blob(prefix + "/" + p.key());
    if (src.sizes() != p.value().sizes()) throw ShapeError("checkpoint: shape mismatch for " + p.key());
    p.value().copy_(src);
  }
  for (auto& b : m.named_buffers()) {
    const auto& src = ck.blob(prefix + "/" + b.key());
    if (src.sizes() != b.value().sizes()) throw ShapeError("checkpoint: shape mismatch for " + b.key());
    b.value().copy_(src);
  }
}

void capture_adam(Checkpoint& ck, const std::string& prefix, const torch::optim::Adam& opt,
                  const torch::nn::Module& module) {
  const auto& state = opt.state();
  for (const auto& p : module.named_parameters()) {
    auto it = state.find(p.value().unsafeGetTensorImpl());
    if (it == state.end()) continue;
    const auto& s = static_cast<const torch::optim::AdamParamState&>(*it->second);
    const auto base = prefix + "/" + p.key();
    ck.blobs.emplace_back(base + "/step", torch::tensor({s.step()}, torch::kInt64));
    ck.blobs.emplace_back(base + "/exp_avg", s.exp_avg().detach().clone());
    ck.blobs.emplace_back(base + "/exp_avg_sq", s.exp_avg_sq().detach().clone());
  }
  ck.meta[prefix + "/lr"] = opt.param_groups().at(0).options().get_lr();
}

void restore_adam(const Checkpoint& ck, const std::string& prefix, torch::optim::Adam& opt,
                  const torch::nn::Module& module) {
  auto& state = opt.state();
  for (const auto& p : module.named_parameters()) {
    const auto base = prefix + "/" + p.key();
    if (!ck.has_blob(base + "/step")) continue;
    auto s = std::make_unique<torch::optim::AdamParamState>();
    s->step(ck.blob(base + "/step").item<std::int64_t>());
    s->exp_avg(ck.blob(base + "/exp_avg").clone());
    s->exp_avg_sq(ck.blob(base + "/exp_avg_sq").clone());
    state[p.value().unsafeGetTensorImpl()] = std::move(s);
  }
  if (ck.meta.contains(prefix + "/lr")) {
    for (auto& g : opt.param_groups()) g.options().set_lr(ck.meta.at(prefix + "/lr").get<double>());
  }
}

}  // namespace cmada
