#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tmlp/model.hpp"

namespace tmlp::stream {

using model::index;
using model::ModelConfig;
using model::ModelParams;

/// Fixed 24-byte little-endian container header. The trailing CRC-32 covers
/// the preceding 20 bytes.
struct ContainerHeader {
  static constexpr char kMagic[4] = {'T', 'M', 'L', 'P'};
  static constexpr std::uint16_t kVersion = 1;
  static constexpr std::uint8_t kDtypeBinary32 = 0;
  static constexpr index kByteSize = 24;

  ModelConfig config;

  static ContainerHeader from_config(const ModelConfig& config);
};

/// One layer per chunk: u16 layer index (1-based), u32 payload byte length,
/// payload, u32 CRC-32 of the payload. The payload holds the layer's weight
/// matrix, bias, and output-tail parameters in flatten() order, row-major
/// little-endian binary32.
struct ChunkRange {
  index layer_index = 0;
  index offset = 0;  // from the start of the byte sequence
  index length = 0;  // including the 6-byte chunk header and trailing CRC
};

/// Payload bytes of layer i's chunk, computed from the dims alone.
index chunk_payload_bytes(const ModelConfig& config, index layer_1based);

/// Total encoded size: header plus all chunks.
index container_bytes(const ModelConfig& config);

std::vector<std::uint8_t> encode(const ModelParams<float>& params);
std::vector<std::uint8_t> encode(const ModelParams<double>& params);

struct DecodeResult {
  ModelParams<float> params;
  index layers = 0;
};

/// Decodes the header and the longest valid run of leading chunks, stopping
/// at max_layers (0 = all), at a truncated trailing chunk, or at end of
/// input. A complete chunk that fails validation (stored index or length
/// inconsistent with the header, or CRC mismatch) raises IntegrityError
/// naming the chunk; earlier chunks stay decodable by passing a smaller
/// max_layers. Zero complete chunks raises FormatError. Architectures
/// without per-layer tails need every chunk before the output layer exists,
/// so partial prefixes raise FormatError for them.
DecodeResult decode_prefix(const std::vector<std::uint8_t>& bytes,
                           index max_layers = 0);

ContainerHeader decode_header(const std::vector<std::uint8_t>& bytes);

/// Chunk boundaries in on-wire order, without touching payloads. Ranges are
/// contiguous and tile the post-header bytes exactly.
std::vector<ChunkRange> chunk_iter(const std::vector<std::uint8_t>& bytes);

void write_container(const std::string& path, const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> read_container(const std::string& path);

}  // namespace tmlp::stream
