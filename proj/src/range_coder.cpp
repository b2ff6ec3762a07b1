// Copyright 2026 The lmcodec Authors
// SPDX-License-Identifier: Apache-2.0

#include "lmc/range_coder.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <string>

namespace lmc {

namespace {

constexpr std::uint32_t kTop = 1u << 24;
constexpr unsigned kMaxGolombPrefix = 32;

std::uint32_t half() { return kCdfTotal / 2; }

}  // namespace

double CdfTable::cost_bits(std::int32_t symbol) const {
  auto bits = [](std::uint32_t c) {
    return -std::log2(static_cast<double>(c) / kCdfTotal);
  };
  if (symbol >= lo && symbol <= hi())
    return bits(count(static_cast<std::size_t>(symbol - lo)));
  if (!has_escape) return INFINITY;
  const std::uint64_t excess = symbol < lo
                                   ? static_cast<std::uint64_t>(lo - symbol) - 1
                                   : static_cast<std::uint64_t>(symbol - hi()) - 1;
  const int width = std::bit_width(excess + 1);
  return bits(count(alphabet())) + 1.0 + (2 * width - 1);
}

CdfTable build_cdf_table(std::span<const double> probs, std::int32_t lo,
                         std::optional<double> escape_mass) {
  if (probs.empty()) throw Error("build_cdf_table: empty alphabet");
  if (probs.size() > kMaxAlphabet)
    throw Error("build_cdf_table: alphabet of " + std::to_string(probs.size()) +
                " symbols exceeds 2^15");
  std::vector<double> mass(probs.begin(), probs.end());
  if (escape_mass) mass.push_back(*escape_mass);
  double total = 0.0;
  for (std::size_t i = 0; i < mass.size(); ++i) {
    if (!std::isfinite(mass[i]) || mass[i] < 0.0)
      throw Error("build_cdf_table: invalid probability at slot " +
                  std::to_string(i));
    total += mass[i];
  }
  const std::size_t n = mass.size();
  const double spare = static_cast<double>(kCdfTotal - n);
  std::vector<std::uint32_t> counts(n, 1);
  std::vector<double> frac(n, 0.0);
  std::uint64_t assigned = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double share = total > 0.0 ? mass[i] / total * spare
                                     : spare / static_cast<double>(n);
    const double whole = std::floor(share);
    counts[i] += static_cast<std::uint32_t>(whole);
    assigned += static_cast<std::uint64_t>(whole);
    frac[i] = share - whole;
  }
  std::uint64_t left = static_cast<std::uint64_t>(spare) - assigned;
  if (left > 0) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) {
                       return frac[a] > frac[b];
                     });
    for (std::size_t i = 0; left > 0; ++i, --left) ++counts[order[i % n]];
  }
  CdfTable table;
  table.lo = lo;
  table.has_escape = escape_mass.has_value();
  table.cumulative.resize(n + 1);
  table.cumulative[0] = 0;
  for (std::size_t i = 0; i < n; ++i)
    table.cumulative[i + 1] = table.cumulative[i] + counts[i];
  if (table.cumulative.back() != kCdfTotal)
    throw Error("build_cdf_table: internal count mismatch");
  return table;
}

// -- Encoder ---------------------------------------------------------------------

RangeEncoder::RangeEncoder() = default;

void RangeEncoder::shift_low() {
  if (static_cast<std::uint32_t>(low_) < 0xFF000000u || (low_ >> 32) != 0) {
    const auto carry = static_cast<std::uint8_t>(low_ >> 32);
    std::uint8_t pending = cache_;
    do {
      out_.push_back(static_cast<std::uint8_t>(pending + carry));
      pending = 0xFF;
    } while (--cache_size_ != 0);
    cache_ = static_cast<std::uint8_t>(low_ >> 24);
  }
  ++cache_size_;
  low_ = (low_ & 0x00FFFFFFu) << 8;
}

void RangeEncoder::encode_slot(std::uint32_t start, std::uint32_t size) {
  const std::uint32_t r = range_ >> kCdfPrecision;
  low_ += static_cast<std::uint64_t>(r) * start;
  range_ = r * size;
  while (range_ < kTop) {
    range_ <<= 8;
    shift_low();
  }
}

void RangeEncoder::encode_bit(unsigned bit) {
  encode_slot(bit ? half() : 0, half());
}

void RangeEncoder::encode(std::int32_t symbol, const CdfTable& table) {
  if (symbol >= table.lo && symbol <= table.hi()) {
    const auto slot = static_cast<std::size_t>(symbol - table.lo);
    encode_slot(table.cumulative[slot], table.count(slot));
    return;
  }
  if (!table.has_escape)
    throw Error("RangeEncoder: symbol " + std::to_string(symbol) +
                " outside [" + std::to_string(table.lo) + ", " +
                std::to_string(table.hi()) + "] and no escape slot");
  const std::size_t esc = table.alphabet();
  encode_slot(table.cumulative[esc], table.count(esc));
  const bool above = symbol > table.hi();
  encode_bit(above ? 1 : 0);
  const std::uint64_t excess =
      above ? static_cast<std::uint64_t>(static_cast<std::int64_t>(symbol) -
                                         table.hi() - 1)
            : static_cast<std::uint64_t>(static_cast<std::int64_t>(table.lo) -
                                         symbol - 1);
  const std::uint64_t x = excess + 1;
  const int width = std::bit_width(x);
  for (int i = 0; i < width - 1; ++i) encode_bit(0);
  for (int i = width - 1; i >= 0; --i) encode_bit((x >> i) & 1u);
}

std::vector<std::uint8_t> RangeEncoder::finish() {
  // Pick the value in [low, low + range) with the most trailing zero bytes.
  const std::uint64_t end = low_ + range_;
  for (int keep = 0; keep <= 4; ++keep) {
    const std::uint64_t unit = std::uint64_t{1} << (32 - 8 * keep);
    const std::uint64_t v = (low_ + unit - 1) / unit * unit;
    if (v < end) {
      low_ = v;
      break;
    }
  }
  for (int i = 0; i < 5; ++i) shift_low();
  std::vector<std::uint8_t> bytes;
  bytes.swap(out_);
  // The first byte only ever carries the (impossible) overflow of the
  // initial interval.
  if (bytes.empty() || bytes.front() != 0)
    throw Error("RangeEncoder: internal carry overflow");
  bytes.erase(bytes.begin());
  while (!bytes.empty() && bytes.back() == 0) bytes.pop_back();
  low_ = 0;
  range_ = 0xFFFFFFFFu;
  cache_ = 0;
  cache_size_ = 1;
  return bytes;
}

// -- Decoder ---------------------------------------------------------------------

RangeDecoder::RangeDecoder(std::span<const std::uint8_t> bytes)
    : bytes_(bytes) {
  for (int i = 0; i < 4; ++i) code_ = (code_ << 8) | next_byte();
}

std::uint8_t RangeDecoder::next_byte() {
  const std::uint8_t b = pos_ < bytes_.size() ? bytes_[pos_] : 0;
  ++pos_;
  return b;
}

std::size_t RangeDecoder::decode_slot(const CdfTable& table) {
  if (code_ >= range_) throw Error("RangeDecoder: corrupted stream");
  const std::uint32_t r = range_ >> kCdfPrecision;
  const std::uint32_t value = code_ / r;
  if (value >= kCdfTotal) throw Error("RangeDecoder: corrupted stream");
  const auto it = std::upper_bound(table.cumulative.begin() + 1,
                                   table.cumulative.end(), value);
  const auto slot =
      static_cast<std::size_t>(it - table.cumulative.begin()) - 1;
  code_ -= r * table.cumulative[slot];
  low_ += r * table.cumulative[slot];
  range_ = r * table.count(slot);
  while (range_ < kTop) {
    code_ = (code_ << 8) | next_byte();
    low_ <<= 8;
    range_ <<= 8;
  }
  return slot;
}

unsigned RangeDecoder::decode_bit() {
  static const CdfTable kBit = [] {
    CdfTable t;
    t.cumulative = {0, half(), kCdfTotal};
    return t;
  }();
  return static_cast<unsigned>(decode_slot(kBit));
}

std::int32_t RangeDecoder::decode(const CdfTable& table) {
  const std::size_t slot = decode_slot(table);
  if (slot < table.alphabet())
    return table.lo + static_cast<std::int32_t>(slot);
  const bool above = decode_bit() != 0;
  unsigned zeros = 0;
  while (decode_bit() == 0) {
    if (++zeros > kMaxGolombPrefix)
      throw Error("RangeDecoder: escape code prefix too long (corrupted)");
  }
  std::uint64_t x = 1;
  for (unsigned i = 0; i < zeros; ++i) x = (x << 1) | decode_bit();
  const std::int64_t excess = static_cast<std::int64_t>(x - 1);
  const std::int64_t symbol = above ? table.hi() + 1 + excess
                                    : static_cast<std::int64_t>(table.lo) -
                                          1 - excess;
  if (symbol < INT32_MIN || symbol > INT32_MAX)
    throw Error("RangeDecoder: escaped symbol out of range (corrupted)");
  return static_cast<std::int32_t>(symbol);
}

void RangeDecoder::finish() const {
  if (bytes_.size() > pos_)
    throw Error("RangeDecoder: " + std::to_string(bytes_.size() - pos_) +
                " unused trailing bytes (corrupted stream)");
  if (!bytes_.empty() && bytes_.back() == 0)
    throw Error("RangeDecoder: non-canonical trailing zero byte");
  // Mirror RangeEncoder::finish: the offset from low to the first multiple of
  // the coarsest unit inside the interval. Only low mod 2^32 matters.
  std::uint64_t expected = 0;
  for (int keep = 0; keep <= 4; ++keep) {
    const std::uint64_t unit = std::uint64_t{1} << (32 - 8 * keep);
    const std::uint64_t offset = (unit - low_ % unit) % unit;
    if (offset < range_) {
      expected = offset;
      break;
    }
  }
  if (code_ != expected)
    throw Error("RangeDecoder: final code value does not match the stream "
                "termination (corrupted stream)");
}

std::vector<std::uint8_t> encode_symbols(std::span<const std::int32_t> symbols,
                                         std::span<const CdfTable> tables) {
  if (symbols.size() != tables.size())
    throw Error("encode_symbols: one table per symbol required");
  RangeEncoder enc;
  for (std::size_t i = 0; i < symbols.size(); ++i)
    enc.encode(symbols[i], tables[i]);
  return enc.finish();
}

std::vector<std::int32_t> decode_symbols(std::span<const std::uint8_t> bytes,
                                         std::span<const CdfTable> tables) {
  RangeDecoder dec(bytes);
  std::vector<std::int32_t> out(tables.size());
  for (std::size_t i = 0; i < tables.size(); ++i) out[i] = dec.decode(tables[i]);
  dec.finish();
  return out;
}

// -- Byte helpers ------------------------------------------------------------------

void put_varint(std::vector<std::uint8_t>& out, std::uint64_t value) {
  while (value >= 0x80) {
    out.push_back(static_cast<std::uint8_t>(value | 0x80));
    value >>= 7;
  }
  out.push_back(static_cast<std::uint8_t>(value));
}

std::uint64_t get_varint(std::span<const std::uint8_t> in, std::size_t& pos) {
  std::uint64_t value = 0;
  for (int shift = 0; shift < 64; shift += 7) {
    if (pos >= in.size()) throw Error("varint: truncated input");
    const std::uint8_t b = in[pos++];
    if (shift == 63 && (b & 0x7E) != 0) throw Error("varint: overflow");
    value |= static_cast<std::uint64_t>(b & 0x7F) << shift;
    if ((b & 0x80) == 0) return value;
  }
  throw Error("varint: overflow");
}

void put_chunk(std::vector<std::uint8_t>& out,
               std::span<const std::uint8_t> payload) {
  put_varint(out, payload.size());
  out.insert(out.end(), payload.begin(), payload.end());
}

std::span<const std::uint8_t> get_chunk(std::span<const std::uint8_t> in,
                                        std::size_t& pos) {
  const std::uint64_t len = get_varint(in, pos);
  if (len > in.size() - pos)
    throw Error("chunk: declared length " + std::to_string(len) +
                " exceeds remaining " + std::to_string(in.size() - pos) +
                " bytes");
  auto out = in.subspan(pos, static_cast<std::size_t>(len));
  pos += static_cast<std::size_t>(len);
  return out;
}

}  // namespace lmc
