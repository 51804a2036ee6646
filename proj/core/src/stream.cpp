#include "tmlp/stream.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>
#include <limits>

#include "tmlp/errors.hpp"

namespace tmlp::stream {

namespace {

constexpr index kChunkHeaderBytes = 6;  // u16 layer index + u32 payload length
constexpr index kCrcBytes = 4;

std::uint32_t crc_of(const std::uint8_t* data, index n) {
  return std::uint32_t(::crc32(0L, data, uInt(n)));
}

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(std::uint8_t(v & 0xff));
  out.push_back(std::uint8_t(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(std::uint8_t((v >> (8 * i)) & 0xff));
}

void put_f32(std::vector<std::uint8_t>& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(out, bits);
}

std::uint16_t get_u16(const std::uint8_t* p) {
  return std::uint16_t(p[0] | (std::uint16_t(p[1]) << 8));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) |
         (std::uint32_t(p[2]) << 16) | (std::uint32_t(p[3]) << 24);
}

float get_f32(const std::uint8_t* p) {
  const std::uint32_t bits = get_u32(p);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

std::uint16_t checked_u16(index v, const char* what) {
  if (v == 0 || v > std::numeric_limits<std::uint16_t>::max())
    throw ConfigError(std::string(what) + " out of the container's u16 range");
  return std::uint16_t(v);
}

std::vector<std::uint8_t> encode_header(const ModelConfig& config) {
  std::vector<std::uint8_t> out;
  out.reserve(ContainerHeader::kByteSize);
  out.insert(out.end(), ContainerHeader::kMagic, ContainerHeader::kMagic + 4);
  put_u16(out, ContainerHeader::kVersion);
  out.push_back(std::uint8_t(config.architecture));
  put_u16(out, checked_u16(config.input_dim, "input_dim"));
  put_u16(out, checked_u16(config.output_dim, "output_dim"));
  put_u16(out, checked_u16(config.hidden_width, "hidden_width"));
  put_u16(out, checked_u16(config.num_hidden_layers, "num_layers"));
  put_f32(out, float(config.omega0));
  out.push_back(ContainerHeader::kDtypeBinary32);
  put_u32(out, crc_of(out.data(), out.size()));
  return out;
}

}  // namespace

ContainerHeader ContainerHeader::from_config(const ModelConfig& config) {
  ContainerHeader h;
  h.config = config;
  return h;
}

index chunk_payload_bytes(const ModelConfig& config, index layer_1based) {
  index floats = 0;
  for (const auto& seg : model::param_layout(config))
    if (seg.layer == layer_1based) floats += seg.count();
  if (floats == 0)
    throw ShapeError("no parameters for layer " + std::to_string(layer_1based));
  return floats * 4;
}

index container_bytes(const ModelConfig& config) {
  index total = ContainerHeader::kByteSize;
  for (index i = 1; i <= config.num_hidden_layers; ++i)
    total += kChunkHeaderBytes + chunk_payload_bytes(config, i) + kCrcBytes;
  return total;
}

std::vector<std::uint8_t> encode(const ModelParams<float>& params) {
  const ModelConfig& config = params.config;
  config.validate();
  std::vector<std::uint8_t> out = encode_header(config);
  out.reserve(container_bytes(config));

  const auto flat = model::flatten(params);
  const auto layout = model::param_layout(config);
  for (index layer = 1; layer <= config.num_hidden_layers; ++layer) {
    put_u16(out, std::uint16_t(layer));
    put_u32(out, std::uint32_t(chunk_payload_bytes(config, layer)));
    const index payload_start = out.size();
    for (const auto& seg : layout) {
      if (seg.layer != layer) continue;
      for (index i = 0; i < seg.count(); ++i) put_f32(out, flat[seg.offset + i]);
    }
    put_u32(out, crc_of(out.data() + payload_start, out.size() - payload_start));
  }
  return out;
}

std::vector<std::uint8_t> encode(const ModelParams<double>& params) {
  return encode(model::narrow(params));
}

ContainerHeader decode_header(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < ContainerHeader::kByteSize)
    throw FormatError("container shorter than its 24-byte header");
  if (std::memcmp(bytes.data(), ContainerHeader::kMagic, 4) != 0)
    throw FormatError("bad container magic");
  if (get_u16(bytes.data() + 4) != ContainerHeader::kVersion)
    throw FormatError("unsupported container version " +
                      std::to_string(get_u16(bytes.data() + 4)));
  if (get_u32(bytes.data() + 20) != crc_of(bytes.data(), 20))
    throw FormatError("container header CRC mismatch");

  ContainerHeader h;
  h.config.architecture = model::architecture_from_id(bytes[6]);
  h.config.input_dim = get_u16(bytes.data() + 7);
  h.config.output_dim = get_u16(bytes.data() + 9);
  h.config.hidden_width = get_u16(bytes.data() + 11);
  h.config.num_hidden_layers = get_u16(bytes.data() + 13);
  h.config.omega0 = double(get_f32(bytes.data() + 15));
  if (bytes[19] != ContainerHeader::kDtypeBinary32)
    throw FormatError("unsupported value dtype id " + std::to_string(bytes[19]));
  h.config.validate();
  return h;
}

DecodeResult decode_prefix(const std::vector<std::uint8_t>& bytes, index max_layers) {
  const ContainerHeader header = decode_header(bytes);
  const ModelConfig& full = header.config;
  const index k = full.num_hidden_layers;
  if (max_layers == 0 || max_layers > k) max_layers = k;

  // Collect validated payload pointers for the leading chunks.
  std::vector<const std::uint8_t*> payloads;
  index pos = ContainerHeader::kByteSize;
  for (index layer = 1; layer <= max_layers; ++layer) {
    const index payload_len = chunk_payload_bytes(full, layer);
    const index total = kChunkHeaderBytes + payload_len + kCrcBytes;
    if (pos + total > bytes.size()) break;  // truncated mid-chunk
    const std::uint8_t* chunk = bytes.data() + pos;
    if (get_u16(chunk) != layer)
      throw IntegrityError("chunk " + std::to_string(layer) +
                               " carries layer index " +
                               std::to_string(get_u16(chunk)),
                           layer);
    if (get_u32(chunk + 2) != payload_len)
      throw IntegrityError(
          "chunk " + std::to_string(layer) + " payload length " +
              std::to_string(get_u32(chunk + 2)) + " does not match the header dims",
          layer);
    const std::uint8_t* payload = chunk + kChunkHeaderBytes;
    if (get_u32(payload + payload_len) != crc_of(payload, payload_len))
      throw IntegrityError("chunk " + std::to_string(layer) + " CRC mismatch", layer);
    payloads.push_back(payload);
    pos += total;
  }
  const index j = payloads.size();
  if (j == 0) throw FormatError("container holds no complete layer chunk");
  if (!model::has_per_layer_tails(full.architecture) && j < k)
    throw FormatError(std::string(model::architecture_name(full.architecture)) +
                      " has a single output head; a " + std::to_string(j) +
                      "-chunk prefix of its " + std::to_string(k) +
                      "-layer container is not decodable");

  ModelConfig truncated = full;
  truncated.num_hidden_layers = j;
  model::Vector<float> flat(model::param_count(truncated));
  const auto layout = model::param_layout(truncated);
  // Per layer, the truncated layout lists the same segments in the same
  // order as the chunk payload, so a running payload cursor suffices.
  for (index layer = 1; layer <= j; ++layer) {
    const std::uint8_t* p = payloads[layer - 1];
    index cursor = 0;
    for (const auto& seg : layout) {
      if (seg.layer != layer) continue;
      for (index i = 0; i < seg.count(); ++i, ++cursor)
        flat[seg.offset + i] = get_f32(p + 4 * cursor);
    }
  }
  return {model::unflatten(truncated, flat), j};
}

std::vector<ChunkRange> chunk_iter(const std::vector<std::uint8_t>& bytes) {
  const ContainerHeader header = decode_header(bytes);
  std::vector<ChunkRange> ranges;
  index pos = ContainerHeader::kByteSize;
  for (index layer = 1; layer <= header.config.num_hidden_layers; ++layer) {
    const index total =
        kChunkHeaderBytes + chunk_payload_bytes(header.config, layer) + kCrcBytes;
    if (pos + total > bytes.size()) break;
    ranges.push_back({layer, pos, total});
    pos += total;
  }
  return ranges;
}

void write_container(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            std::streamsize(bytes.size()));
  if (!out.good()) throw IoError("failed writing " + path);
}

std::vector<std::uint8_t> read_container(const std::string& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw IoError("cannot open " + path);
  const std::streamsize n = in.tellg();
  in.seekg(0);
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(n));
  in.read(reinterpret_cast<char*>(bytes.data()), n);
  if (!in.good()) throw IoError("failed reading " + path);
  return bytes;
}

}  // namespace tmlp::stream
