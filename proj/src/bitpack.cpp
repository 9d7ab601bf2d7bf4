#include "lowbit/bitpack.hpp"

#include "lowbit/error.hpp"

namespace lowbit {

std::vector<std::uint8_t> pack_codes(std::span<const std::uint8_t> codes, unsigned width) {
  if (width == 0 || width > 8) throw ValidationError("pack_codes: width must be in [1, 8]");
  std::vector<std::uint8_t> out(packed_bytes(codes.size(), width), 0);
  std::size_t bit = 0;
  for (auto code : codes) {
    if (code >> width) throw ValidationError("pack_codes: code does not fit in width");
    const unsigned shifted = static_cast<unsigned>(code) << (bit & 7);
    out[bit >> 3] |= static_cast<std::uint8_t>(shifted);
    if ((bit & 7) + width > 8) out[(bit >> 3) + 1] |= static_cast<std::uint8_t>(shifted >> 8);
    bit += width;
  }
  return out;
}

std::vector<std::uint8_t> unpack_codes(std::span<const std::uint8_t> stream, std::size_t count, unsigned width) {
  if (width == 0 || width > 8) throw ValidationError("unpack_codes: width must be in [1, 8]");
  if (stream.size() < packed_bytes(count, width)) throw ValidationError("unpack_codes: stream too short");
  std::vector<std::uint8_t> out(count);
  for (std::size_t k = 0; k < count; ++k) out[k] = read_code(stream, k, width);
  return out;
}

}  // namespace lowbit
