// SPDX-License-Identifier: Apache-2.0
#include "cellgrade/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <map>
#include <string>

#include "cellgrade/errors.hpp"
#include "cellgrade/io.hpp"
#include "cellgrade/prng.hpp"

namespace cellgrade::checkpoint {

namespace {

constexpr const char* kAdamM = "adam_m/";
constexpr const char* kAdamV = "adam_v/";
constexpr const char* kStep = "optimizer/step";

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void tensor(const std::string& name, const Tensor<float>& t) {
    u32(static_cast<std::uint32_t>(name.size()));
    bytes(name.data(), name.size());
    u32(static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) u64(d);
    for (float v : t.values()) f32(v);
  }
  std::vector<std::uint8_t>& data() { return out_; }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : b_(b) {}

  void need(std::size_t n, const char* what) const {
    if (pos_ + n > b_.size()) {
      throw IntegrityError(std::string("corrupt checkpoint: truncated while reading ") +
                           what + " at byte offset " + std::to_string(pos_));
    }
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return v;
  }
  std::string str(std::size_t n) {
    need(n, "tensor name");
    std::string s(reinterpret_cast<const char*>(b_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }

 private:
  std::span<const std::uint8_t> b_;
  std::size_t pos_ = 0;
};

// "03_conv2d/kernel" -> layer 3, role kernel.
bool parse_param_name(const std::string& name, std::size_t& layer, nn::ParamRole& role) {
  const auto us = name.find('_');
  const auto slash = name.rfind('/');
  if (us == std::string::npos || slash == std::string::npos || us == 0) return false;
  try {
    layer = std::stoul(name.substr(0, us));
  } catch (...) {
    return false;
  }
  const std::string r = name.substr(slash + 1);
  using nn::ParamRole;
  for (auto candidate : {ParamRole::kernel, ParamRole::bias, ParamRole::gamma,
                         ParamRole::beta, ParamRole::moving_mean, ParamRole::moving_var}) {
    if (r == nn::role_name(candidate)) {
      role = candidate;
      return true;
    }
  }
  return false;
}

bool is_trainable(nn::ParamRole role) {
  return role != nn::ParamRole::moving_mean && role != nn::ParamRole::moving_var;
}

}  // namespace

std::vector<std::uint8_t> serialize(const nn::ParamState<float>& params,
                                    const nn::NetworkSpec& spec) {
  std::size_t count = 1;
  for (const auto& p : params.params) count += p.trainable ? 3 : 1;

  Writer w;
  w.bytes(kMagic, 4);
  w.u32(kVersion);
  w.u64(spec.digest());
  w.u64(count);
  for (const auto& p : params.params) w.tensor(p.name, p.value);
  for (const auto& p : params.params) {
    if (!p.trainable) continue;
    w.tensor(kAdamM + p.name, p.adam_m);
    w.tensor(kAdamV + p.name, p.adam_v);
  }
  w.tensor(kStep, Tensor<float>({1}, static_cast<float>(params.step)));

  Fnv1a64 h;
  h.update(w.data().data(), w.data().size());
  w.u64(h.digest());
  return std::move(w.data());
}

Loaded deserialize(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw IntegrityError("not a checkpoint: bad magic (expected \"MCLS\")");
  }
  Reader r(bytes);
  r.need(4, "magic");
  r.str(4);
  Loaded out;
  out.version = r.u32("version");
  if (out.version != kVersion) {
    throw IntegrityError("unsupported checkpoint version " + std::to_string(out.version) +
                         " (this build reads version " + std::to_string(kVersion) + ")");
  }
  if (bytes.size() < 8 + 8 + 8 + 8) {
    throw IntegrityError("corrupt checkpoint: truncated header");
  }
  const std::size_t body = bytes.size() - 8;
  Fnv1a64 h;
  h.update(bytes.data(), body);
  std::uint64_t stored = 0;
  for (int i = 0; i < 8; ++i) stored |= static_cast<std::uint64_t>(bytes[body + i]) << (8 * i);
  if (stored != h.digest()) {
    throw IntegrityError("corrupt checkpoint: checksum mismatch");
  }

  Reader payload(bytes.first(body));
  payload.str(4);
  payload.u32("version");
  out.spec_digest = payload.u64("spec digest");
  const std::uint64_t count = payload.u64("tensor count");

  std::map<std::string, Tensor<float>> moments;
  bool have_step = false;
  for (std::uint64_t t = 0; t < count; ++t) {
    const std::uint32_t name_len = payload.u32("tensor name length");
    std::string name = payload.str(name_len);
    const std::uint32_t rank = payload.u32("tensor rank");
    Shape shape;
    for (std::uint32_t d = 0; d < rank; ++d) shape.push_back(payload.u64("tensor dims"));
    const std::size_t n = shape_size(shape);
    payload.need(n * 4, "tensor values");
    std::vector<float> values(n);
    for (auto& v : values) v = std::bit_cast<float>(payload.u32("tensor values"));
    Tensor<float> tensor(std::move(shape), std::move(values));

    if (name == kStep) {
      if (tensor.size() != 1) throw IntegrityError("corrupt checkpoint: bad step tensor");
      out.params.step = static_cast<std::uint64_t>(tensor[0]);
      have_step = true;
    } else if (name.starts_with(kAdamM) || name.starts_with(kAdamV)) {
      moments.emplace(std::move(name), std::move(tensor));
    } else {
      nn::Param<float> p;
      if (!parse_param_name(name, p.layer, p.role)) {
        throw IntegrityError("corrupt checkpoint: unrecognised tensor name '" + name + "'");
      }
      p.name = std::move(name);
      p.trainable = is_trainable(p.role);
      p.value = std::move(tensor);
      out.params.params.push_back(std::move(p));
    }
  }
  if (payload.pos() != body) {
    throw IntegrityError("corrupt checkpoint: " + std::to_string(body - payload.pos()) +
                         " trailing bytes after the last tensor");
  }
  if (!have_step) throw IntegrityError("corrupt checkpoint: missing optimizer step");
  for (auto& p : out.params.params) {
    if (!p.trainable) continue;
    auto m = moments.find(kAdamM + p.name);
    auto v = moments.find(kAdamV + p.name);
    if (m == moments.end() || v == moments.end() || m->second.shape() != p.value.shape() ||
        v->second.shape() != p.value.shape()) {
      throw IntegrityError("corrupt checkpoint: missing or misshapen Adam moments for " +
                           p.name);
    }
    p.adam_m = std::move(m->second);
    p.adam_v = std::move(v->second);
  }
  return out;
}

void save_checkpoint(const nn::ParamState<float>& params, const nn::NetworkSpec& spec,
                     const std::filesystem::path& path) {
  io::write_file_atomic(path, serialize(params, spec));
}

Loaded load_checkpoint(const std::filesystem::path& path) {
  std::vector<std::uint8_t> bytes;
  try {
    bytes = io::read_file(path);
  } catch (const Error& e) {
    throw DataError(std::string("cannot read checkpoint: ") + e.what());
  }
  return deserialize(bytes);
}

Loaded load_checkpoint(const std::filesystem::path& path, const nn::NetworkSpec& spec) {
  Loaded loaded = load_checkpoint(path);
  if (loaded.spec_digest != spec.digest()) {
    throw IntegrityError("checkpoint digest mismatch: file was written for a different network");
  }
  const auto expected = nn::init_params<float>(spec, 0);
  bool ok = expected.params.size() == loaded.params.params.size();
  for (std::size_t i = 0; ok && i < expected.params.size(); ++i) {
    ok = expected.params[i].name == loaded.params.params[i].name &&
         expected.params[i].value.shape() == loaded.params.params[i].value.shape();
  }
  if (!ok) {
    throw IntegrityError("checkpoint tensors do not match the network parameter layout");
  }
  return loaded;
}

}  // namespace cellgrade::checkpoint
