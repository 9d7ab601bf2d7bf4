#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"

#include "lowbit/error.hpp"
#include "lowbit/seq2.hpp"
#include "lowbit/sherry.hpp"
#include "lowbit/ternary.hpp"

namespace lowbit::asq {

// ASQ1 layout (all integers little-endian):
//   "ASQ1" | u8 version=1 | u8 scheme | u8 ndim | ndim x u64 dims
//   | u8 scale_layout=1 (per row) | u32 scale_count | scale_count x f32
//   | u32 metadata_length | metadata (UTF-8 JSON) | payload
// The payload length is fixed by scheme and dims and must fill the rest of
// the file exactly.

enum class Scheme : std::uint8_t { Ternary = 0x01, Seq2 = 0x02, Sherry = 0x03, Tl2 = 0x04 };

inline constexpr std::uint8_t kVersion = 1;
inline constexpr std::uint8_t kScaleLayoutPerRow = 0x01;

std::string scheme_name(Scheme s);
Scheme parse_scheme(const std::string& name);

enum class Errc {
  BadMagic,
  BadVersion,
  UnsupportedScheme,
  BadScaleLayout,
  Truncated,
  PayloadLengthMismatch,
  ScaleCountMismatch,
  BadMetadata,
  BadShape,
  InvalidCode,
};

class FormatError : public ValidationError {
 public:
  FormatError(Errc code, const std::string& what) : ValidationError(what), code_(code) {}
  Errc code() const { return code_; }

 private:
  Errc code_;
};

/// Raw container contents.
struct File {
  Scheme scheme = Scheme::Ternary;
  std::vector<std::uint64_t> dims;
  std::vector<float> scales;
  nlohmann::json metadata = nlohmann::json::object();
  std::vector<std::uint8_t> payload;
};

/// Exact code bits (before byte padding) for a scheme and shape.
std::uint64_t payload_bits(Scheme scheme, std::span<const std::uint64_t> dims);
std::uint64_t payload_bytes(Scheme scheme, std::span<const std::uint64_t> dims);

std::vector<std::uint8_t> encode(const File& f);
File decode(std::span<const std::uint8_t> bytes);

File read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const File& f);

// ---------------------------------------------------------------------------
// Typed tensors.

/// Ternary weights plus the optional folded deadzone bias.
struct TernaryRecord {
  ternary::TernaryTensor tensor;
  std::vector<float> bias;

  friend bool operator==(const TernaryRecord&, const TernaryRecord&) = default;
};

struct SeqRecord {
  seq2::SeqTensor tensor;
  bool micro_tuned = false;

  friend bool operator==(const SeqRecord&, const SeqRecord&) = default;
};

using Quantized = std::variant<TernaryRecord, SeqRecord, sherry::SherryTensor, sherry::Tl2Tensor>;

Scheme scheme_of(const Quantized& q);

File to_file(const Quantized& q);
Quantized from_file(const File& f);

void write_asq(const std::filesystem::path& path, const Quantized& q);
Quantized read_asq(const std::filesystem::path& path);

std::size_t rows_of(const Quantized& q);
std::size_t cols_of(const Quantized& q);

/// Dense reconstruction, rows x cols (without any folded bias).
Tensor dequantize(const Quantized& q);

/// Decode-and-accumulate matvec for any scheme; the ternary folded bias is
/// added when present.
Tensor naive_matvec(const Quantized& q, const Tensor& x);

/// JSON {scheme, dims, bits_per_weight_payload, total_bytes,
/// bits_per_weight_effective}.
nlohmann::json inspect(const std::filesystem::path& path);

}  // namespace lowbit::asq
