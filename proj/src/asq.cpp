#include "lowbit/asq.hpp"

#include <string_view>

#include "bytes.hpp"
#include "lowbit/bitpack.hpp"

namespace lowbit::asq {

using nlohmann::json;

std::string scheme_name(Scheme s) {
  switch (s) {
    case Scheme::Ternary: return "ternary";
    case Scheme::Seq2: return "seq2";
    case Scheme::Sherry: return "sherry";
    case Scheme::Tl2: return "tl2";
  }
  throw FormatError(Errc::UnsupportedScheme, "unsupported scheme");
}

Scheme parse_scheme(const std::string& name) {
  if (name == "ternary" || name == "tequila") return Scheme::Ternary;
  if (name == "seq2") return Scheme::Seq2;
  if (name == "sherry") return Scheme::Sherry;
  if (name == "tl2") return Scheme::Tl2;
  throw ValidationError("unsupported scheme: " + name);
}

namespace {

bool known_scheme(std::uint8_t v) { return v >= 0x01 && v <= 0x04; }

std::uint64_t numel(std::span<const std::uint64_t> dims) {
  std::uint64_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

std::uint64_t row_count(std::span<const std::uint64_t> dims) { return dims.size() == 1 ? 1 : numel(dims) / dims.back(); }

}  // namespace

std::uint64_t payload_bits(Scheme scheme, std::span<const std::uint64_t> dims) {
  if (dims.empty()) throw FormatError(Errc::BadShape, "asq: empty shape");
  for (auto d : dims)
    if (d == 0) throw FormatError(Errc::BadShape, "asq: zero dimension");
  const std::uint64_t n = numel(dims);
  switch (scheme) {
    case Scheme::Ternary:
    case Scheme::Seq2: return 2 * n;
    case Scheme::Sherry:
      if (dims.back() % 4 != 0) throw FormatError(Errc::BadShape, "asq: sherry needs columns divisible by 4");
      return n / 4 * 5;
    case Scheme::Tl2: return (n + 2) / 3 * 5;
  }
  throw FormatError(Errc::UnsupportedScheme, "asq: unsupported scheme");
}

std::uint64_t payload_bytes(Scheme scheme, std::span<const std::uint64_t> dims) {
  return (payload_bits(scheme, dims) + 7) / 8;
}

std::vector<std::uint8_t> encode(const File& f) {
  if (f.dims.empty() || f.dims.size() > 255) throw FormatError(Errc::BadShape, "asq: unsupported rank");
  if (f.payload.size() != payload_bytes(f.scheme, f.dims))
    throw FormatError(Errc::PayloadLengthMismatch, "payload length mismatch");
  if (f.scales.size() != row_count(f.dims)) throw FormatError(Errc::ScaleCountMismatch, "asq: one scale per row required");

  detail::ByteWriter w;
  w.text("ASQ1");
  w.u8(kVersion);
  w.u8(static_cast<std::uint8_t>(f.scheme));
  w.u8(static_cast<std::uint8_t>(f.dims.size()));
  for (auto d : f.dims) w.u64(d);
  w.u8(kScaleLayoutPerRow);
  w.u32(static_cast<std::uint32_t>(f.scales.size()));
  for (float s : f.scales) w.f32(s);
  const std::string meta = f.metadata.dump();
  w.u32(static_cast<std::uint32_t>(meta.size()));
  w.text(meta);
  w.bytes(f.payload);
  return std::move(w.buffer());
}

File decode(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes);
  const auto truncated = [] { return FormatError(Errc::Truncated, "truncated header"); };

  auto magic = r.bytes(4);
  if (!magic || std::string_view(reinterpret_cast<const char*>(magic->data()), 4) != "ASQ1")
    throw FormatError(Errc::BadMagic, "bad magic");
  auto version = r.u8();
  if (!version) throw truncated();
  if (*version != kVersion) throw FormatError(Errc::BadVersion, "unsupported version " + std::to_string(*version));
  auto scheme = r.u8();
  if (!scheme) throw truncated();
  if (!known_scheme(*scheme)) throw FormatError(Errc::UnsupportedScheme, "unsupported scheme " + std::to_string(*scheme));

  File f;
  f.scheme = static_cast<Scheme>(*scheme);
  auto ndim = r.u8();
  if (!ndim) throw truncated();
  if (*ndim == 0) throw FormatError(Errc::BadShape, "asq: zero-rank tensor");
  for (int i = 0; i < *ndim; ++i) {
    auto d = r.u64();
    if (!d) throw truncated();
    f.dims.push_back(*d);
  }
  auto layout = r.u8();
  if (!layout) throw truncated();
  if (*layout != kScaleLayoutPerRow) throw FormatError(Errc::BadScaleLayout, "unsupported scale layout");
  auto count = r.u32();
  if (!count) throw truncated();
  const std::uint64_t expected_payload = payload_bytes(f.scheme, f.dims);
  if (*count != row_count(f.dims)) throw FormatError(Errc::ScaleCountMismatch, "scale count does not match rows");
  f.scales.reserve(*count);
  for (std::uint32_t i = 0; i < *count; ++i) {
    auto s = r.f32();
    if (!s) throw truncated();
    f.scales.push_back(*s);
  }
  auto meta_len = r.u32();
  if (!meta_len) throw truncated();
  auto meta = r.bytes(*meta_len);
  if (!meta) throw truncated();
  try {
    f.metadata = json::parse(meta->begin(), meta->end());
  } catch (const json::exception& e) {
    throw FormatError(Errc::BadMetadata, std::string("bad metadata: ") + e.what());
  }
  if (r.remaining() != expected_payload) throw FormatError(Errc::PayloadLengthMismatch, "payload length mismatch");
  auto payload = *r.bytes(r.remaining());
  f.payload.assign(payload.begin(), payload.end());
  return f;
}

File read_file(const std::filesystem::path& path) { return decode(detail::read_file(path)); }

void write_file(const std::filesystem::path& path, const File& f) { detail::write_file_atomic(path, encode(f)); }

// ---------------------------------------------------------------------------

namespace {

struct SchemeOf {
  Scheme operator()(const TernaryRecord&) const { return Scheme::Ternary; }
  Scheme operator()(const SeqRecord&) const { return Scheme::Seq2; }
  Scheme operator()(const sherry::SherryTensor&) const { return Scheme::Sherry; }
  Scheme operator()(const sherry::Tl2Tensor&) const { return Scheme::Tl2; }
};

// Ternary payload codes: 0 -> -1, 1 -> 0, 2 -> +1; 3 is reserved.
std::vector<std::uint8_t> pack_ternary(const std::vector<std::int8_t>& signs) {
  std::vector<std::uint8_t> codes(signs.size());
  for (std::size_t i = 0; i < signs.size(); ++i) codes[i] = static_cast<std::uint8_t>(signs[i] + 1);
  return pack_codes(codes, 2);
}

std::vector<float> float_array(const json& meta, const char* key, std::size_t expected) {
  if (!meta.contains(key)) return {};
  try {
    auto v = meta.at(key).get<std::vector<float>>();
    if (v.size() != expected) throw FormatError(Errc::BadMetadata, std::string("metadata ") + key + " has wrong length");
    return v;
  } catch (const json::exception&) {
    throw FormatError(Errc::BadMetadata, std::string("metadata ") + key + " is not a number array");
  }
}

}  // namespace

Scheme scheme_of(const Quantized& q) { return std::visit(SchemeOf{}, q); }

std::size_t rows_of(const Quantized& q) {
  return std::visit(
      [](const auto& v) -> std::size_t {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, TernaryRecord> || std::is_same_v<T, SeqRecord>) return v.tensor.rows;
        else return v.rows;
      },
      q);
}

std::size_t cols_of(const Quantized& q) {
  return std::visit(
      [](const auto& v) -> std::size_t {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, TernaryRecord> || std::is_same_v<T, SeqRecord>) return v.tensor.cols;
        else return v.cols;
      },
      q);
}

File to_file(const Quantized& q) {
  File f;
  f.scheme = scheme_of(q);
  f.dims = {rows_of(q), cols_of(q)};
  if (const auto* t = std::get_if<TernaryRecord>(&q)) {
    f.scales = t->tensor.alpha;
    f.payload = pack_ternary(t->tensor.signs);
    f.metadata["delta"] = t->tensor.delta;
    f.metadata["lambda"] = t->tensor.lambda;
    f.metadata["deadzone_fraction"] = ternary::deadzone_fraction(t->tensor);
    if (!t->bias.empty()) f.metadata["bias"] = t->bias;
  } else if (const auto* s = std::get_if<SeqRecord>(&q)) {
    f.scales = s->tensor.scale;
    f.payload = s->tensor.packed;
    f.metadata["micro_tuned"] = s->micro_tuned;
  } else if (const auto* sh = std::get_if<sherry::SherryTensor>(&q)) {
    f.scales = sh->alpha;
    f.payload = sh->codestream;
  } else {
    const auto& tl = std::get<sherry::Tl2Tensor>(q);
    f.scales = tl.alpha;
    f.payload = tl.codestream;
    f.metadata["delta"] = tl.delta;
  }
  return f;
}

Quantized from_file(const File& f) {
  if (f.dims.size() > 2) throw FormatError(Errc::BadShape, "asq: only 1-D and 2-D tensors are supported");
  if (f.payload.size() != payload_bytes(f.scheme, f.dims))
    throw FormatError(Errc::PayloadLengthMismatch, "payload length mismatch");
  const std::size_t rows = row_count(f.dims);
  const std::size_t cols = f.dims.back();
  if (f.scales.size() != rows) throw FormatError(Errc::ScaleCountMismatch, "scale count does not match rows");

  switch (f.scheme) {
    case Scheme::Ternary: {
      TernaryRecord rec;
      auto& t = rec.tensor;
      t.rows = rows;
      t.cols = cols;
      t.alpha = f.scales;
      const auto codes = unpack_codes(f.payload, rows * cols, 2);
      t.signs.resize(codes.size());
      t.deadzone.resize(codes.size());
      for (std::size_t i = 0; i < codes.size(); ++i) {
        if (codes[i] > 2) throw FormatError(Errc::InvalidCode, "reserved ternary code in payload");
        t.signs[i] = static_cast<std::int8_t>(codes[i] - 1);
        t.deadzone[i] = t.signs[i] == 0 ? 1 : 0;
      }
      t.delta = float_array(f.metadata, "delta", rows);
      if (t.delta.empty()) t.delta.assign(rows, 0.0f);
      t.lambda = f.metadata.value("lambda", ternary::kDefaultLambda);
      rec.bias = float_array(f.metadata, "bias", rows);
      return rec;
    }
    case Scheme::Seq2: {
      SeqRecord rec;
      rec.tensor.rows = rows;
      rec.tensor.cols = cols;
      rec.tensor.scale = f.scales;
      rec.tensor.packed = f.payload;
      rec.micro_tuned = f.metadata.value("micro_tuned", false);
      return rec;
    }
    case Scheme::Sherry: {
      sherry::SherryTensor t;
      t.rows = rows;
      t.cols = cols;
      t.alpha = f.scales;
      t.codestream = f.payload;
      return t;
    }
    case Scheme::Tl2: {
      sherry::Tl2Tensor t;
      t.rows = rows;
      t.cols = cols;
      t.alpha = f.scales;
      t.codestream = f.payload;
      for (std::size_t g = 0; g < t.group_count(); ++g)
        if (read_code(t.codestream, g, sherry::kCodeBits) >= 27) throw FormatError(Errc::InvalidCode, "tl2 code out of range");
      t.delta = float_array(f.metadata, "delta", rows);
      if (t.delta.empty()) t.delta.assign(rows, 0.0f);
      return t;
    }
  }
  throw FormatError(Errc::UnsupportedScheme, "unsupported scheme");
}

void write_asq(const std::filesystem::path& path, const Quantized& q) { write_file(path, to_file(q)); }

Quantized read_asq(const std::filesystem::path& path) { return from_file(read_file(path)); }

Tensor dequantize(const Quantized& q) {
  return std::visit(
      [](const auto& v) -> Tensor {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, TernaryRecord> || std::is_same_v<T, SeqRecord>) return v.tensor.dequantize();
        else return v.dequantize();
      },
      q);
}

Tensor naive_matvec(const Quantized& q, const Tensor& x) {
  if (const auto* t = std::get_if<TernaryRecord>(&q)) return ternary::ternary_forward(x, t->tensor, t->bias);
  if (const auto* s = std::get_if<SeqRecord>(&q)) return seq2::seq_matvec(s->tensor, x);
  if (const auto* sh = std::get_if<sherry::SherryTensor>(&q)) return sherry::naive_matvec(*sh, x);
  return sherry::tl2_matvec(std::get<sherry::Tl2Tensor>(q), x);
}

json inspect(const std::filesystem::path& path) {
  const auto bytes = detail::read_file(path);
  const File f = decode(bytes);
  const auto n = static_cast<double>(numel(f.dims));
  json report;
  report["scheme"] = scheme_name(f.scheme);
  report["dims"] = f.dims;
  report["bits_per_weight_payload"] = static_cast<double>(payload_bits(f.scheme, f.dims)) / n;
  report["total_bytes"] = bytes.size();
  report["bits_per_weight_effective"] = static_cast<double>(bytes.size()) * 8.0 / n;
  return report;
}

}  // namespace lowbit::asq
