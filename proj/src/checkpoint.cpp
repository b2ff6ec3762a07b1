// Copyright 2026 The lmcodec Authors
// SPDX-License-Identifier: Apache-2.0

#include "lmc/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>

#include "lmc/config.hpp"
#include "lmc/range_coder.hpp"

namespace lmc {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

namespace {

constexpr std::uint8_t kMagic[4] = {'L', 'M', 'C', 'K'};
constexpr std::uint8_t kVersion = 1;

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(CodecModel& model,
                                               const CheckpointMeta& meta) {
  nlohmann::json header{{"config", to_json(model.config())},
                        {"config_hash", hex64(model.config_hash())},
                        {"step", meta.step},
                        {"lambda", meta.lambda},
                        {"metrics", meta.metrics}};
  const std::string text = header.dump();
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  out.push_back(kVersion);
  put_varint(out, text.size());
  out.insert(out.end(), text.begin(), text.end());

  std::vector<std::pair<std::string, Tensor>> params;
  model.visit_parameters([&params](const std::string& name, Tensor& t) {
    params.emplace_back(name, t);
  });
  put_varint(out, params.size());
  for (const auto& [name, t] : params) {
    put_varint(out, name.size());
    out.insert(out.end(), name.begin(), name.end());
    put_varint(out, t.rows());
    put_varint(out, t.cols());
    const auto* raw = reinterpret_cast<const std::uint8_t*>(t.values().data());
    out.insert(out.end(), raw, raw + t.size() * sizeof(float));
  }
  return out;
}

LoadedCheckpoint parse_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 5 || std::memcmp(bytes.data(), kMagic, 4) != 0)
    throw Error("checkpoint: bad magic");
  if (bytes[4] != kVersion)
    throw Error("checkpoint: unsupported version " + std::to_string(bytes[4]));
  std::size_t pos = 5;
  const auto header_bytes = get_chunk(bytes, pos);
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(header_bytes.begin(), header_bytes.end());
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("checkpoint: bad header: ") + e.what());
  }
  LoadedCheckpoint ck;
  const ModelConfig config = model_config_from_json(header.at("config"));
  const std::string stored = header.at("config_hash").get<std::string>();
  if (stored != hex64(config_hash(config)))
    throw Error("checkpoint: config hash " + stored +
                " does not match its config (" + hex64(config_hash(config)) +
                ")");
  ck.meta.step = header.at("step").get<std::uint64_t>();
  ck.meta.lambda = header.at("lambda").get<double>();
  ck.meta.metrics = header.value("metrics", nlohmann::json::object());
  ck.model = std::make_unique<CodecModel>(config);

  std::vector<std::pair<std::string, Tensor>> params;
  ck.model->visit_parameters([&params](const std::string& name, Tensor& t) {
    params.emplace_back(name, t);
  });
  const std::uint64_t count = get_varint(bytes, pos);
  if (count != params.size())
    throw Error("checkpoint: expected " + std::to_string(params.size()) +
                " parameters, found " + std::to_string(count));
  for (auto& [name, t] : params) {
    const auto stored_name = get_chunk(bytes, pos);
    if (std::string(stored_name.begin(), stored_name.end()) != name)
      throw Error("checkpoint: expected parameter '" + name + "'");
    const std::uint64_t rows = get_varint(bytes, pos);
    const std::uint64_t cols = get_varint(bytes, pos);
    if (rows != t.rows() || cols != t.cols())
      throw Error("checkpoint: shape mismatch for '" + name + "'");
    const std::size_t n = t.size() * sizeof(float);
    if (bytes.size() - pos < n)
      throw Error("checkpoint: truncated data for '" + name + "'");
    std::memcpy(t.mutable_values().data(), bytes.data() + pos, n);
    pos += n;
  }
  if (pos != bytes.size()) throw Error("checkpoint: trailing bytes");
  return ck;
}

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path + "'");
  return std::vector<std::uint8_t>((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
}

void write_file(const std::string& path, std::span<const std::uint8_t> bytes) {
  const std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  // Write-then-rename so readers never see a partial file.
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write '" + tmp + "'");
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("write failed for '" + tmp + "'");
  }
  std::filesystem::rename(tmp, path);
}

void save_checkpoint(const std::string& path, CodecModel& model,
                     const CheckpointMeta& meta) {
  write_file(path, serialize_checkpoint(model, meta));
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  try {
    return parse_checkpoint(read_file(path));
  } catch (const Error& e) {
    throw Error(path + ": " + e.what());
  }
}

void copy_parameters(CodecModel& from, CodecModel& to) {
  if (from.config_hash() != to.config_hash())
    throw Error("copy_parameters: configurations differ");
  auto src = from.parameters();
  auto dst = to.parameters();
  for (std::size_t i = 0; i < src.size(); ++i) {
    auto s = src[i].values();
    auto d = dst[i].mutable_values();
    std::copy(s.begin(), s.end(), d.begin());
  }
}

}  // namespace lmc
