#include "lo/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "lo/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint codec assumes a little-endian host");

namespace lo {

namespace {

constexpr char kMagic[4] = {'L', 'O', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

void put_i64(std::ostream& out, std::int64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

std::uint32_t get_u32(std::istream& in) {
  std::uint32_t v = 0;
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v))
    throw MalformedCheckpoint("truncated header field");
  return v;
}

std::int64_t get_i64(std::istream& in) {
  std::int64_t v = 0;
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v))
    throw MalformedCheckpoint("truncated dimension field");
  return v;
}

template <typename T>
void put_tensor(std::ostream& out, const std::string& name, const Tensor<T>& t) {
  put_u32(out, static_cast<std::uint32_t>(name.size()));
  out.write(name.data(), static_cast<std::streamsize>(name.size()));
  put_u32(out, static_cast<std::uint32_t>(sizeof(T)));
  put_u32(out, static_cast<std::uint32_t>(t.shape.size()));
  for (std::int64_t d : t.shape) put_i64(out, d);
  out.write(reinterpret_cast<const char*>(t.data.data()),
            static_cast<std::streamsize>(t.data.size() * sizeof(T)));
}

template <typename T>
Tensor<T> get_tensor_data(std::istream& in, const std::vector<std::int64_t>& shape) {
  Tensor<T> t;
  t.shape = shape;
  const std::int64_t n = Tensor<T>::numel_of(shape);
  if (n < 0) throw MalformedCheckpoint("negative tensor extent");
  t.data.resize(static_cast<std::size_t>(n));
  if (!in.read(reinterpret_cast<char*>(t.data.data()),
               static_cast<std::streamsize>(t.data.size() * sizeof(T))))
    throw MalformedCheckpoint("truncated tensor data");
  return t;
}

}  // namespace

void write_checkpoint(const std::string& path, const CheckpointData& data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw MalformedCheckpoint("cannot write " + path);
  out.write(kMagic, sizeof kMagic);
  put_u32(out, kVersion);
  put_u32(out, static_cast<std::uint32_t>(data.f32.size() + data.f64.size()));
  for (const auto& [name, t] : data.f32) put_tensor(out, name, t);
  for (const auto& [name, t] : data.f64) put_tensor(out, name, t);
  if (!out) throw MalformedCheckpoint("write failed for " + path);
}

CheckpointData read_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MalformedCheckpoint("cannot open " + path);
  char magic[4];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, 4) != 0)
    throw MalformedCheckpoint("bad magic in " + path);
  const std::uint32_t version = get_u32(in);
  if (version != kVersion)
    throw MalformedCheckpoint("unsupported version " + std::to_string(version));
  const std::uint32_t count = get_u32(in);

  CheckpointData data;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t name_len = get_u32(in);
    if (name_len > 4096) throw MalformedCheckpoint("implausible name length");
    std::string name(name_len, '\0');
    if (!in.read(name.data(), name_len))
      throw MalformedCheckpoint("truncated tensor name");
    const std::uint32_t dtype = get_u32(in);
    const std::uint32_t ndim = get_u32(in);
    if (ndim > 8) throw MalformedCheckpoint("implausible rank");
    std::vector<std::int64_t> shape(ndim);
    for (std::uint32_t d = 0; d < ndim; ++d) {
      shape[d] = get_i64(in);
      if (shape[d] < 0) throw MalformedCheckpoint("negative dimension");
    }
    const bool duplicate = data.f32.count(name) || data.f64.count(name);
    if (duplicate) throw MalformedCheckpoint("duplicate tensor " + name);
    if (dtype == 4) {
      data.f32.emplace(std::move(name), get_tensor_data<float>(in, shape));
    } else if (dtype == 8) {
      data.f64.emplace(std::move(name), get_tensor_data<double>(in, shape));
    } else {
      throw MalformedCheckpoint("unknown dtype code " + std::to_string(dtype));
    }
  }
  return data;
}

}  // namespace lo
