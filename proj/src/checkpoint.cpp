#include "mira/checkpoint.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "mira/runconfig.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint writer assumes a little-endian host");

namespace mira::checkpoint {

namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void put_bytes(std::string& out, const void* p, std::size_t n) {
  out.append(static_cast<const char*>(p), n);
}

template <typename T>
void put(std::string& out, T v) {
  put_bytes(out, &v, sizeof v);
}

void put_string(std::string& out, const std::string& s) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.append(s);
}

struct Reader {
  const std::string& buf;
  std::size_t pos = 0;

  void need(std::size_t n) const {
    if (pos + n > buf.size()) throw std::runtime_error("checkpoint truncated");
  }
  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, buf.data() + pos, sizeof v);
    pos += sizeof v;
    return v;
  }
  std::string get_string() {
    const auto n = get<std::uint32_t>();
    need(n);
    std::string s = buf.substr(pos, n);
    pos += n;
    return s;
  }
};

}  // namespace

std::uint32_t crc32(const unsigned char* data, std::size_t n) {
  static const auto table = [] {
    std::array<std::uint32_t, 256> t{};
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  std::uint32_t c = 0xFFFFFFFFu;
  for (std::size_t i = 0; i < n; ++i) c = table[(c ^ data[i]) & 0xFF] ^ (c >> 8);
  return c ^ 0xFFFFFFFFu;
}

std::string serialize_config(const model::ModelConfig& cfg) {
  std::ostringstream out;
  out << "model.layers = " << cfg.layers << '\n'
      << "model.d_model = " << cfg.d_model << '\n'
      << "model.d_ff = " << cfg.d_ff << '\n'
      << "model.d_expert = " << cfg.d_expert << '\n'
      << "model.n_experts = " << cfg.n_experts << '\n'
      << "model.top_k = " << cfg.top_k << '\n'
      << "model.n_heads = " << cfg.n_heads << '\n'
      << "model.max_seq_len = " << cfg.max_seq_len << '\n'
      << "model.huber_delta = " << fmt(cfg.huber_delta) << '\n'
      << "model.aux_weight = " << fmt(cfg.aux_weight) << '\n'
      << "model.rope_mode = "
      << (cfg.rope_mode == model::RopeMode::timestamp ? "timestamp" : "index") << '\n'
      << "model.dense_ffn = " << (cfg.dense_ffn ? "true" : "false") << '\n'
      << "model.extrapolation = "
      << (cfg.extrapolation == model::Extrapolation::ode ? "ode" : "identity") << '\n'
      << "model.grad_mode = "
      << (cfg.grad_mode == node::GradMode::adjoint ? "adjoint" : "backprop") << '\n'
      << "model.spectral_norm = " << (cfg.spectral_norm ? "true" : "false") << '\n'
      << "solver.rtol = " << fmt(cfg.solver.rtol) << '\n'
      << "solver.atol = " << fmt(cfg.solver.atol) << '\n'
      << "solver.max_steps = " << cfg.solver.max_steps << '\n';
  return out.str();
}

model::ModelConfig deserialize_config(const std::string& text) {
  return runconfig::parse(text).model;
}

void save(const std::string& path, const model::Model& m, int bits) {
  if (bits != 32 && bits != 64) {
    throw std::invalid_argument("checkpoint::save: element width must be 32 or 64 bits");
  }
  std::string out;
  put_bytes(out, kMagic, sizeof kMagic - 1);
  put<std::uint32_t>(out, kVersion);
  put_string(out, serialize_config(m.config));
  const auto params = m.named_parameters();
  put<std::uint64_t>(out, params.size());
  for (const auto& [name, p] : params) {
    put_string(out, name);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(p.shape().size()));
    for (std::size_t d : p.shape()) put<std::uint64_t>(out, d);
    put<std::uint8_t>(out, static_cast<std::uint8_t>(bits));
    if (bits == 64) {
      put_bytes(out, p.data().data(), p.size() * sizeof(double));
    } else {
      for (double v : p.data()) put<float>(out, static_cast<float>(v));
    }
  }
  put<std::uint32_t>(out,
                     crc32(reinterpret_cast<const unsigned char*>(out.data()), out.size()));

  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open '" + path + "' for writing");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw std::runtime_error("failed writing '" + path + "'");
}

model::Model load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open checkpoint '" + path + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  const std::string buf = ss.str();
  if (buf.size() < sizeof kMagic - 1 + 8) throw std::runtime_error("checkpoint truncated");
  const std::uint32_t stored_crc = [&] {
    std::uint32_t c;
    std::memcpy(&c, buf.data() + buf.size() - 4, 4);
    return c;
  }();
  const std::uint32_t actual_crc =
      crc32(reinterpret_cast<const unsigned char*>(buf.data()), buf.size() - 4);
  if (stored_crc != actual_crc) {
    throw std::runtime_error("checkpoint '" + path + "': checksum mismatch");
  }

  Reader r{buf};
  r.need(sizeof kMagic - 1);
  if (std::memcmp(buf.data(), kMagic, sizeof kMagic - 1) != 0) {
    throw std::runtime_error("checkpoint '" + path + "': bad magic");
  }
  r.pos += sizeof kMagic - 1;
  const auto version = r.get<std::uint32_t>();
  if (version != kVersion) {
    throw std::runtime_error("checkpoint '" + path + "': unsupported version " +
                             std::to_string(version));
  }
  const model::ModelConfig cfg = deserialize_config(r.get_string());
  model::Model m = model::Model::init(cfg, 0);

  std::map<std::string, ad::Tensor> by_name;
  for (auto& [name, p] : m.named_parameters()) by_name.emplace(name, p);

  const auto count = r.get<std::uint64_t>();
  if (count != by_name.size()) {
    throw std::runtime_error("checkpoint '" + path + "': expected " +
                             std::to_string(by_name.size()) + " parameters, found " +
                             std::to_string(count));
  }
  std::map<std::string, bool> seen;
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::string name = r.get_string();
    const auto it = by_name.find(name);
    if (it == by_name.end()) {
      throw std::runtime_error("checkpoint '" + path + "': unknown parameter '" + name + "'");
    }
    if (seen[name]) {
      throw std::runtime_error("checkpoint '" + path + "': duplicate parameter '" + name +
                               "'");
    }
    seen[name] = true;
    ad::Tensor t = it->second;
    const auto ndim = r.get<std::uint32_t>();
    std::vector<std::size_t> shape(ndim);
    for (auto& d : shape) d = r.get<std::uint64_t>();
    if (shape != t.shape()) {
      throw std::runtime_error("checkpoint '" + path + "': parameter '" + name +
                               "' has shape " + ad::shape_string(shape) + ", expected " +
                               ad::shape_string(t.shape()));
    }
    const auto width = r.get<std::uint8_t>();
    if (width == 64) {
      r.need(t.size() * sizeof(double));
      std::memcpy(t.data().data(), buf.data() + r.pos, t.size() * sizeof(double));
      r.pos += t.size() * sizeof(double);
    } else if (width == 32) {
      for (std::size_t j = 0; j < t.size(); ++j) t.data()[j] = r.get<float>();
    } else {
      throw std::runtime_error("checkpoint '" + path + "': bad element width " +
                               std::to_string(width));
    }
  }
  if (r.pos != buf.size() - 4) {
    throw std::runtime_error("checkpoint '" + path + "': trailing bytes");
  }
  return m;
}

}  // namespace mira::checkpoint
