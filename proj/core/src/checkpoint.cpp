#include <fstream>

#include "binary_io.hpp"
#include "tabdpt/trainer.hpp"

namespace tabdpt {

namespace {

constexpr std::string_view kCheckpointMagic = "TDPT-CKPT1";
constexpr std::uint32_t kCheckpointVersion = 1;

void write_tensors(io::Writer& w, const ModelParams<float>& p) {
  const auto tensors = p.tensors();
  w.put<std::uint64_t>(tensors.size());
  for (const auto& t : tensors) {
    w.str(t.name);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(t.shape.size()));
    for (auto s : t.shape) w.put<std::uint64_t>(s);
    w.bytes(t.data, t.size * sizeof(float));
  }
}

void read_tensors(io::Reader& r, ModelParams<float>& p) {
  auto tensors = p.tensors();
  const auto count = r.get<std::uint64_t>();
  if (count != tensors.size())
    throw data_error("checkpoint: expected " + std::to_string(tensors.size()) + " tensors, found " + std::to_string(count));
  for (auto& t : tensors) {
    const auto name = r.str();
    if (name != t.name) throw data_error("checkpoint: tensor '" + name + "' where '" + t.name + "' was expected");
    const auto ndim = r.get<std::uint32_t>();
    std::vector<std::size_t> shape(ndim);
    for (auto& s : shape) s = r.get<std::uint64_t>();
    if (shape != t.shape) throw data_error("checkpoint: shape mismatch for " + name);
    r.bytes(t.data, t.size * sizeof(float));
  }
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw data_error("cannot write " + path.string());
  io::Writer w(out);
  w.bytes(kCheckpointMagic.data(), kCheckpointMagic.size());
  w.put<std::uint32_t>(kCheckpointVersion);
  const auto& c = ckpt.config;
  for (auto v : {c.num_layers, c.dim, c.num_heads, c.ffn_factor, c.c_max, c.f_max}) w.put<std::uint64_t>(v);
  w.put<double>(c.dropout);
  w.put<std::uint8_t>(c.prenorm);
  write_tensors(w, ckpt.params);
  w.put<std::uint64_t>(ckpt.optimizer.step);
  write_tensors(w, ckpt.optimizer.m);
  write_tensors(w, ckpt.optimizer.v);
  w.put<std::uint64_t>(ckpt.train_step);
  w.str(ckpt.corpus_digest);
  if (!out) throw data_error("write failure on " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw data_error("cannot open " + path.string());
  io::Reader r(in);
  r.expect_magic(kCheckpointMagic);
  if (const auto v = r.get<std::uint32_t>(); v != kCheckpointVersion)
    throw data_error("unsupported checkpoint version " + std::to_string(v));
  Checkpoint ckpt;
  auto& c = ckpt.config;
  for (auto* field : {&c.num_layers, &c.dim, &c.num_heads, &c.ffn_factor, &c.c_max, &c.f_max})
    *field = r.get<std::uint64_t>();
  c.dropout = r.get<double>();
  c.prenorm = r.get<std::uint8_t>() != 0;
  c.validate();
  ckpt.params = ModelParams<float>::zeros(c);
  read_tensors(r, ckpt.params);
  ckpt.optimizer = init_adam(c);
  ckpt.optimizer.step = r.get<std::uint64_t>();
  read_tensors(r, ckpt.optimizer.m);
  read_tensors(r, ckpt.optimizer.v);
  ckpt.train_step = r.get<std::uint64_t>();
  ckpt.corpus_digest = r.str();
  return ckpt;
}

}  // namespace tabdpt
