#include "robofi/checkpoint.hpp"

#include "bytes.hpp"
#include "robofi/dataset.hpp"

namespace robofi {

std::vector<std::uint8_t> encode_checkpoint(std::span<const NamedTensor> tensors) {
  std::vector<std::uint8_t> out;
  bytes::put_tag(out, "RFSW");
  for (const auto& t : tensors) {
    if (ad::shape_size(t.shape) != t.values.size()) {
      throw Error(ErrorCode::ShapeMismatch, "checkpoint tensor '" + t.name + "' shape does not match its payload");
    }
    bytes::put_u32(out, static_cast<std::uint32_t>(t.name.size()));
    bytes::put_tag(out, t.name);
    bytes::put_u32(out, static_cast<std::uint32_t>(t.shape.size()));
    for (std::size_t d : t.shape) bytes::put_u32(out, static_cast<std::uint32_t>(d));
    for (float v : t.values) bytes::put_f32(out, v);
  }
  return out;
}

std::vector<NamedTensor> decode_checkpoint(std::span<const std::uint8_t> data) {
  bytes::Reader in(data, ErrorCode::Format);
  if (data.size() < 4 || in.str(4) != "RFSW") throw Error(ErrorCode::BadMagic, "checkpoint does not start with RFSW");
  std::vector<NamedTensor> out;
  while (!in.done()) {
    NamedTensor t;
    t.name = in.str(in.u32());
    const std::uint32_t rank = in.u32();
    if (rank > 8) throw Error(ErrorCode::Format, "checkpoint tensor '" + t.name + "' has rank " + std::to_string(rank));
    for (std::uint32_t i = 0; i < rank; ++i) t.shape.push_back(in.u32());
    const std::size_t n = ad::shape_size(t.shape);
    if (n * 4 > in.remaining()) throw Error(ErrorCode::Format, "checkpoint tensor '" + t.name + "' is truncated");
    t.values.resize(n);
    for (float& v : t.values) v = in.f32();
    out.push_back(std::move(t));
  }
  return out;
}

void save_checkpoint(const std::filesystem::path& path, std::span<const NamedTensor> tensors) {
  write_file(path, encode_checkpoint(tensors));
}

std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(read_file(path)); }

}  // namespace robofi
