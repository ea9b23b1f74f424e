#pragma once

// Binary checkpoint format (little-endian):
//   "CSNN" | version u32 | spec JSON length u32 | spec JSON | epochs u32 |
//   seed u64 | [count u64 | f32 * count] for weights, first moment and
//   second moment | optimizer step u64

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>

#include "../errors.hpp"
#include "training.hpp"

namespace chainsearch::nnet {

inline constexpr char kCheckpointMagic[4] = {'C', 'S', 'N', 'N'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

template <class U>
void put_le(std::ostream& out, U v) {
  static_assert(std::is_unsigned_v<U>);
  unsigned char buf[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(buf), sizeof(U));
}

template <class U>
U get_le(std::istream& in) {
  unsigned char buf[sizeof(U)];
  if (!in.read(reinterpret_cast<char*>(buf), sizeof(U))) throw CheckpointError("truncated checkpoint");
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(U(buf[i]) << (8 * i));
  return v;
}

inline void put_floats(std::ostream& out, const std::vector<float>& v) {
  put_le<std::uint64_t>(out, v.size());
  for (float f : v) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(f));
}

inline std::vector<float> get_floats(std::istream& in, std::size_t expected) {
  const auto n = get_le<std::uint64_t>(in);
  if (n != expected) throw CheckpointError("checkpoint block has " + std::to_string(n) + " values, expected " +
                                           std::to_string(expected));
  std::vector<float> v(n);
  for (auto& f : v) f = std::bit_cast<float>(get_le<std::uint32_t>(in));
  return v;
}

}  // namespace detail

inline void write_checkpoint(std::ostream& out, const Checkpoint& ck) {
  check_checkpoint(ck);
  out.write(kCheckpointMagic, 4);
  detail::put_le<std::uint32_t>(out, kCheckpointVersion);
  const std::string spec = to_json(ck.spec).dump();
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(spec.size()));
  out.write(spec.data(), static_cast<std::streamsize>(spec.size()));
  detail::put_le<std::uint32_t>(out, ck.epochs_completed);
  detail::put_le<std::uint64_t>(out, ck.seed);
  detail::put_floats(out, ck.state.weights);
  detail::put_floats(out, ck.state.first_moment);
  detail::put_floats(out, ck.state.second_moment);
  detail::put_le<std::uint64_t>(out, ck.state.step);
  if (!out) throw CheckpointError("failed to write checkpoint");
}

inline Checkpoint read_checkpoint(std::istream& in) {
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kCheckpointMagic, 4) != 0)
    throw CheckpointError("not a checkpoint (bad magic)");
  const auto version = detail::get_le<std::uint32_t>(in);
  if (version != kCheckpointVersion) throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  const auto len = detail::get_le<std::uint32_t>(in);
  if (len > (1u << 20)) throw CheckpointError("implausible spec length in checkpoint");
  std::string spec_text(len, '\0');
  if (!in.read(spec_text.data(), len)) throw CheckpointError("truncated checkpoint spec");
  Checkpoint ck;
  try {
    ck.spec = model_spec_from_json(json::parse(spec_text));
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("corrupted checkpoint spec: ") + e.what());
  } catch (const InvalidArchitectureError& e) {
    throw CheckpointError(std::string("corrupted checkpoint spec: ") + e.what());
  }
  ck.epochs_completed = detail::get_le<std::uint32_t>(in);
  ck.seed = detail::get_le<std::uint64_t>(in);
  const auto n = parameter_count(ck.spec);
  ck.state.weights = detail::get_floats(in, n);
  ck.state.first_moment = detail::get_floats(in, n);
  ck.state.second_moment = detail::get_floats(in, n);
  ck.state.step = detail::get_le<std::uint64_t>(in);
  check_checkpoint(ck);
  return ck;
}

inline void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot write '" + path + "'");
  write_checkpoint(out, ck);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open '" + path + "'");
  return read_checkpoint(in);
}

}  // namespace chainsearch::nnet
