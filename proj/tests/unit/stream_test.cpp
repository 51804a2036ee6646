#include "doctest.h"

#include <cstdio>
#include <filesystem>

#include "tmlp/stream.hpp"

using namespace tmlp;
using namespace tmlp::stream;
using model::Architecture;
using model::ModelConfig;
using numerics::index;

namespace {

ModelConfig wire_config(Architecture arch = Architecture::tmlp) {
  ModelConfig c;
  c.input_dim = 2;
  c.output_dim = 1;
  c.hidden_width = 4;
  c.num_hidden_layers = 2;
  c.omega0 = 30.0;
  c.architecture = arch;
  c.seed = 3;
  return c;
}

}  // namespace

TEST_CASE("chunk payload sizes follow the hand-computed layout") {
  auto c = wire_config();
  // layer 1: 4x2 weights + 4 biases + affine tail (4 + 1) = 17 values
  CHECK(chunk_payload_bytes(c, 1) == 17 * 4);
  // layer 2: 4x4 + 4 + two affine factors (5 each) = 30 values
  CHECK(chunk_payload_bytes(c, 2) == 30 * 4);
  // header + per-chunk (6-byte chunk header + payload + 4-byte crc)
  CHECK(container_bytes(c) == 24 + (6 + 68 + 4) + (6 + 120 + 4));

  auto params = model::init_sine<float>(c);
  CHECK(encode(params).size() == container_bytes(c));
}

TEST_CASE("the header carries the full model configuration") {
  auto c = wire_config(Architecture::tmlp_no_multiplicative);
  c.omega0 = 60.0;
  auto bytes = encode(model::init_sine<float>(c));
  CHECK(bytes[0] == 'T');
  CHECK(bytes[1] == 'M');
  CHECK(bytes[2] == 'L');
  CHECK(bytes[3] == 'P');
  auto header = decode_header(bytes);
  // the wire format does not carry the seed
  auto want = c;
  want.seed = header.config.seed;
  CHECK(header.config == want);
  CHECK(header.config.architecture == Architecture::tmlp_no_multiplicative);
  CHECK(header.config.omega0 == 60.0);
}

TEST_CASE("header corruption is rejected") {
  auto bytes = encode(model::init_sine<float>(wire_config()));

  auto corrupt = bytes;
  corrupt[0] = 'X';
  CHECK_THROWS_AS(decode_header(corrupt), FormatError);

  corrupt = bytes;
  corrupt[4] ^= 0xFF;  // version
  CHECK_THROWS_AS(decode_header(corrupt), FormatError);

  corrupt = bytes;
  corrupt[10] ^= 0x01;  // a dimension field; crc must catch it
  CHECK_THROWS_AS(decode_header(corrupt), FormatError);

  CHECK_THROWS_AS(decode_header(std::vector<std::uint8_t>(10)), FormatError);
}

TEST_CASE("encode and decode round-trip bitwise") {
  for (auto arch : {Architecture::tmlp, Architecture::tmlp_no_residual,
                    Architecture::tmlp_no_multiplicative, Architecture::plain_mlp,
                    Architecture::residual_mlp}) {
    auto c = wire_config(arch);
    auto params = model::init_sine<float>(c);
    auto bytes = encode(params);
    CHECK(bytes == encode(params));  // deterministic bytes

    auto decoded = decode_prefix(bytes);
    CHECK(decoded.layers == 2);
    CHECK(model::flatten(decoded.params) == model::flatten(params));
  }
}

TEST_CASE("double precision parameters narrow to the wire format") {
  auto c = wire_config();
  auto params = model::init_sine<float>(c);
  auto bytes_f = encode(params);
  auto bytes_d = encode(model::widen(params));
  CHECK(bytes_f == bytes_d);
}

TEST_CASE("prefix decoding recovers truncated models") {
  auto c = wire_config();
  auto params = model::init_sine<float>(c);
  auto bytes = encode(params);
  const index first_chunk_end = 24 + 6 + 68 + 4;

  SUBCASE("byte prefix at a chunk boundary") {
    std::vector<std::uint8_t> prefix(bytes.begin(), bytes.begin() + first_chunk_end);
    auto d = decode_prefix(prefix);
    CHECK(d.layers == 1);
    CHECK(model::flatten(d.params) == model::flatten(model::truncate(params, 1)));
  }

  SUBCASE("a torn trailing chunk is dropped gracefully") {
    std::vector<std::uint8_t> torn(bytes.begin(), bytes.begin() + first_chunk_end + 37);
    auto d = decode_prefix(torn);
    CHECK(d.layers == 1);
    CHECK(model::flatten(d.params) == model::flatten(model::truncate(params, 1)));
  }

  SUBCASE("max_layers caps the decode") {
    auto d = decode_prefix(bytes, 1);
    CHECK(d.layers == 1);
    CHECK(d.params.config.num_hidden_layers == 1);
  }

  SUBCASE("no complete chunk is a format error") {
    std::vector<std::uint8_t> none(bytes.begin(), bytes.begin() + 24 + 5);
    CHECK_THROWS_AS(decode_prefix(none), FormatError);
  }
}

TEST_CASE("payload corruption names the failing chunk, keeping earlier ones usable") {
  auto c = wire_config();
  auto params = model::init_sine<float>(c);
  auto bytes = encode(params);
  const index second_payload_start = 24 + (6 + 68 + 4) + 6;

  auto corrupt = bytes;
  corrupt[second_payload_start + 11] ^= 0x40;
  bool threw = false;
  try {
    decode_prefix(corrupt);
  } catch (const IntegrityError& e) {
    threw = true;
    CHECK(e.layer_index == 2);
  }
  CHECK(threw);

  // decoding with an explicit bound below the damage still succeeds
  auto d = decode_prefix(corrupt, 1);
  CHECK(d.layers == 1);
  CHECK(model::flatten(d.params) == model::flatten(model::truncate(params, 1)));

  // a wrong layer index field is integrity damage too
  corrupt = bytes;
  corrupt[24 + (6 + 68 + 4)] ^= 0x04;
  CHECK_THROWS_AS(decode_prefix(corrupt), IntegrityError);
}

TEST_CASE("architectures without intermediate outputs need every chunk") {
  auto c = wire_config(Architecture::plain_mlp);
  auto bytes = encode(model::init_sine<float>(c));
  auto ranges = chunk_iter(bytes);
  REQUIRE(ranges.size() == 2);
  std::vector<std::uint8_t> prefix(bytes.begin(),
                                   bytes.begin() + ranges[0].offset + ranges[0].length);
  CHECK_THROWS_AS(decode_prefix(prefix), FormatError);
  CHECK_NOTHROW(decode_prefix(bytes));
}

TEST_CASE("chunk ranges tile the container exactly") {
  auto c = wire_config();
  auto bytes = encode(model::init_sine<float>(c));
  auto ranges = chunk_iter(bytes);
  REQUIRE(ranges.size() == 2);
  CHECK(ranges[0].layer_index == 1);
  CHECK(ranges[1].layer_index == 2);
  CHECK(ranges[0].offset == 24);
  CHECK(ranges[0].length == 6 + 68 + 4);
  CHECK(ranges[1].offset == ranges[0].offset + ranges[0].length);
  CHECK(ranges[1].offset + ranges[1].length == bytes.size());
}

TEST_CASE("containers persist through files") {
  namespace fs = std::filesystem;
  const auto path = (fs::temp_directory_path() / "tmlp_container.tmlp").string();
  auto c = wire_config();
  auto params = model::init_sine<float>(c);
  auto bytes = encode(params);
  write_container(path, bytes);
  CHECK(read_container(path) == bytes);
  std::remove(path.c_str());

  CHECK_THROWS_AS(read_container("/nonexistent/x.tmlp"), IoError);
  CHECK_THROWS_AS(write_container("/nonexistent/dir/x.tmlp", bytes), IoError);
}
