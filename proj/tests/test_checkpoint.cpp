#include <cstring>

#include "doctest.h"
#include "reticgen/checkpoint.hpp"
#include "reticgen/error.hpp"
#include "support.hpp"

using namespace reticgen;

namespace {

Checkpoint sample() {
  Checkpoint c;
  c.meta["episode"] = 42;
  c.meta["note"] = "x";
  c.put("a", {1.0, -2.5, 1e-300});
  c.put("empty", {});
  c.put("b", {0.1});
  return c;
}

}  // namespace

TEST_CASE("checkpoint encoding round-trips") {
  auto bytes = encode_checkpoint(sample());
  CHECK(bytes.substr(0, 8) == "RGFNCKPT");
  std::uint32_t version;
  std::memcpy(&version, bytes.data() + 8, 4);
  CHECK(version == kCheckpointVersion);
  auto back = decode_checkpoint(bytes);
  CHECK(back.meta == sample().meta);
  CHECK(back.array("a") == std::vector<double>{1.0, -2.5, 1e-300});
  CHECK(back.array("empty").empty());
  CHECK(back.array("b") == std::vector<double>{0.1});
  CHECK(encode_checkpoint(back) == bytes);
  CHECK_THROWS_AS(back.array("missing"), ValidationError);
}

TEST_CASE("corruption is detected") {
  const auto bytes = encode_checkpoint(sample());
  SUBCASE("flipped payload byte") {
    auto bad = bytes;
    bad[bad.size() - 12] ^= 0x01;
    CHECK_THROWS_WITH_AS(decode_checkpoint(bad), doctest::Contains("checksum"), ValidationError);
  }
  SUBCASE("truncated") {
    CHECK_THROWS_AS(decode_checkpoint(bytes.substr(0, bytes.size() - 3)), ValidationError);
    CHECK_THROWS_AS(decode_checkpoint(bytes.substr(0, 10)), ValidationError);
    CHECK_THROWS_AS(decode_checkpoint(""), ValidationError);
  }
  SUBCASE("wrong magic") {
    auto bad = bytes;
    bad[0] = 'X';
    CHECK_THROWS_AS(decode_checkpoint(bad), ValidationError);
  }
  SUBCASE("future version") {
    auto bad = bytes;
    bad[8] = 9;
    CHECK_THROWS_AS(decode_checkpoint(bad), ValidationError);
  }
}

TEST_CASE("checkpoint files") {
  auto dir = testing::scratch("ckpt");
  const auto path = (dir / "c.bin").string();
  save_checkpoint(path, sample());
  CHECK(load_checkpoint(path).array("a").size() == 3);
  CHECK_THROWS_AS(load_checkpoint((dir / "none.bin").string()), ValidationError);
}
