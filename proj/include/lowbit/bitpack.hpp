#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace lowbit {

// Fixed-width code streams, LSB-first: code k occupies stream bits
// [k*width, (k+1)*width) and stream bit i lives in byte i/8 at bit i%8.
// The stream is padded with zero bits to a whole byte once, at the end.

inline std::size_t packed_bytes(std::size_t count, unsigned width) { return (count * width + 7) / 8; }

std::vector<std::uint8_t> pack_codes(std::span<const std::uint8_t> codes, unsigned width);

/// Reads the code at index k (width <= 8).
inline std::uint8_t read_code(std::span<const std::uint8_t> stream, std::size_t k, unsigned width) {
  const std::size_t bit = k * width;
  const std::size_t byte = bit >> 3;
  unsigned window = stream[byte];
  if (byte + 1 < stream.size()) window |= static_cast<unsigned>(stream[byte + 1]) << 8;
  return static_cast<std::uint8_t>((window >> (bit & 7)) & ((1u << width) - 1));
}

std::vector<std::uint8_t> unpack_codes(std::span<const std::uint8_t> stream, std::size_t count, unsigned width);

}  // namespace lowbit
