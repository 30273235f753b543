#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "matrix_trader/nets/policy.hpp"

namespace mtrader::nets {

namespace archive {

// Minimal ustar reader/writer. Headers carry zero mtime/uid/gid so identical
// contents produce identical bytes.
inline void write_tar(const std::string& path, const std::vector<std::pair<std::string, std::string>>& files) {
  auto out = mtrader::detail::open_output(path);
  for (const auto& [name, body] : files) {
    if (name.size() >= 100) throw Error("archive member name too long: " + name);
    std::array<char, 512> h{};
    std::memcpy(h.data(), name.data(), name.size());
    std::snprintf(h.data() + 100, 8, "%07o", 0644);
    std::snprintf(h.data() + 108, 8, "%07o", 0);
    std::snprintf(h.data() + 116, 8, "%07o", 0);
    std::snprintf(h.data() + 124, 12, "%011llo", static_cast<unsigned long long>(body.size()));
    std::snprintf(h.data() + 136, 12, "%011o", 0);
    h[156] = '0';
    std::memcpy(h.data() + 257, "ustar", 6);
    std::memcpy(h.data() + 263, "00", 2);
    std::memset(h.data() + 148, ' ', 8);
    unsigned sum = 0;
    for (char c : h) sum += static_cast<unsigned char>(c);
    std::snprintf(h.data() + 148, 8, "%06o", sum);
    h[155] = ' ';
    out.write(h.data(), 512);
    out.write(body.data(), static_cast<std::streamsize>(body.size()));
    const std::size_t padding = (512 - body.size() % 512) % 512;
    const std::string zeros(padding, '\0');
    out.write(zeros.data(), static_cast<std::streamsize>(padding));
  }
  const std::string end(1024, '\0');
  out.write(end.data(), 1024);
  if (!out) throw Error("failed writing '" + path + "'");
}

inline std::map<std::string, std::string> read_tar(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint '" + path + "'");
  std::map<std::string, std::string> files;
  std::array<char, 512> h{};
  while (in.read(h.data(), 512)) {
    if (h[0] == '\0') break;
    const std::string name(h.data(), strnlen(h.data(), 100));
    const std::string size_field(h.data() + 124, strnlen(h.data() + 124, 12));
    std::size_t size = 0;
    try {
      size = std::stoull(size_field, nullptr, 8);
    } catch (const std::exception&) {
      throw Error(path + ": corrupt archive header");
    }
    std::string body(size, '\0');
    in.read(body.data(), static_cast<std::streamsize>(size));
    if (!in) throw Error(path + ": truncated archive member '" + name + "'");
    in.ignore(static_cast<std::streamsize>((512 - size % 512) % 512));
    files[name] = std::move(body);
  }
  return files;
}

}  // namespace archive

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline std::uint32_t get_u32(const std::string& in, std::size_t& pos) {
  if (pos + 4 > in.size()) throw Error("params.bin truncated");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  pos += 4;
  return v;
}

}  // namespace detail

// params.bin: per array, in order: u32 name length, name bytes, u32 rank,
// u32 dims[rank], then the values as little-endian float32.
template <class T>
std::string encode_params(const Parameters<T>& params) {
  std::string out;
  for (const auto& e : params.entries()) {
    detail::put_u32(out, static_cast<std::uint32_t>(e.name.size()));
    out += e.name;
    detail::put_u32(out, static_cast<std::uint32_t>(e.value.rank()));
    for (std::size_t d : e.value.shape) detail::put_u32(out, static_cast<std::uint32_t>(d));
    for (T v : e.value.data) {
      const float f = static_cast<float>(v);
      std::uint32_t bits = 0;
      std::memcpy(&bits, &f, 4);
      detail::put_u32(out, bits);
    }
  }
  return out;
}

struct RawArray {
  std::string name;
  Shape shape;
  std::vector<float> values;
};

inline std::vector<RawArray> decode_params(const std::string& blob) {
  std::vector<RawArray> out;
  std::size_t pos = 0;
  while (pos < blob.size()) {
    RawArray a;
    const auto len = detail::get_u32(blob, pos);
    if (pos + len > blob.size()) throw Error("params.bin truncated");
    a.name = blob.substr(pos, len);
    pos += len;
    const auto rank = detail::get_u32(blob, pos);
    for (std::uint32_t i = 0; i < rank; ++i) a.shape.push_back(detail::get_u32(blob, pos));
    a.values.resize(shape_numel(a.shape));
    for (auto& v : a.values) {
      const auto bits = detail::get_u32(blob, pos);
      std::memcpy(&v, &bits, 4);
    }
    out.push_back(std::move(a));
  }
  return out;
}

// spec.json must hold the architecture under "policy"; callers add whatever
// else (environment, tickers, config) belongs with it.
struct Checkpoint {
  nlohmann::json spec;
  Parameters<float> params;
  nlohmann::json meta;
};

template <class T>
void save_checkpoint(const std::string& path, const nlohmann::json& spec, const Parameters<T>& params,
                     const nlohmann::json& meta) {
  archive::write_tar(path, {{"spec.json", spec.dump(2) + "\n"},
                            {"params.bin", encode_params(params)},
                            {"meta.json", meta.dump(2) + "\n"}});
}

inline Checkpoint load_checkpoint(const std::string& path) {
  auto files = archive::read_tar(path);
  for (const char* required : {"spec.json", "params.bin", "meta.json"}) {
    if (!files.contains(required)) throw Error(path + ": checkpoint is missing " + required);
  }
  Checkpoint ck;
  try {
    ck.spec = nlohmann::json::parse(files["spec.json"]);
    ck.meta = nlohmann::json::parse(files["meta.json"]);
  } catch (const nlohmann::json::exception& e) {
    throw Error(path + ": " + e.what());
  }
  const PolicySpec spec = policy_spec_from_json(ck.spec.at("policy"));
  const auto layout = parameter_layout(spec);
  const auto raw = decode_params(files["params.bin"]);
  if (raw.size() != layout.size()) throw Error(path + ": parameter count does not match architecture");
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (raw[i].name != layout[i].name || raw[i].shape != layout[i].shape) {
      throw Error(path + ": parameter '" + raw[i].name + "' does not match architecture");
    }
    ck.params.add(raw[i].name, Tensor<float>(raw[i].shape, raw[i].values), layout[i].learnable);
  }
  return ck;
}

}  // namespace mtrader::nets
