#include "reticgen/checkpoint.hpp"

#include <bit>
#include <cstring>

#include "reticgen/environment.hpp"
#include "reticgen/error.hpp"
#include "reticgen/text.hpp"

namespace reticgen {

namespace {

constexpr char kMagic[8] = {'R', 'G', 'F', 'N', 'C', 'K', 'P', 'T'};

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 8;
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::string take(std::size_t n) {
    need(n);
    std::string out = bytes_.substr(pos_, n);
    pos_ += n;
    return out;
  }
  std::size_t position() const { return pos_; }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw ValidationError("checkpoint: truncated file");
  }
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

const std::vector<double>& Checkpoint::array(const std::string& name) const {
  for (const auto& [n, v] : arrays) {
    if (n == name) return v;
  }
  throw ValidationError("checkpoint: missing array '" + name + "'");
}

void Checkpoint::put(std::string name, std::vector<double> values) {
  for (auto& [n, v] : arrays) {
    if (n == name) {
      v = std::move(values);
      return;
    }
  }
  arrays.emplace_back(std::move(name), std::move(values));
}

std::string encode_checkpoint(const Checkpoint& checkpoint) {
  nlohmann::json header;
  header["meta"] = checkpoint.meta;
  header["arrays"] = nlohmann::json::array();
  for (const auto& [name, values] : checkpoint.arrays) {
    header["arrays"].push_back({{"name", name}, {"length", values.size()}});
  }
  const std::string header_text = header.dump();

  std::string out(kMagic, sizeof kMagic);
  put_u32(out, kCheckpointVersion);
  put_u64(out, header_text.size());
  out += header_text;
  for (const auto& [name, values] : checkpoint.arrays) {
    for (double v : values) put_u64(out, std::bit_cast<std::uint64_t>(v));
  }
  put_u64(out, fnv1a64(out));
  return out;
}

Checkpoint decode_checkpoint(const std::string& bytes) {
  if (bytes.size() < sizeof kMagic + 4 + 8 + 8 || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
    throw ValidationError("checkpoint: not a checkpoint file (bad magic)");
  }
  const std::string body = bytes.substr(0, bytes.size() - 8);
  {
    std::uint64_t stored = 0;
    for (int i = 0; i < 8; ++i) {
      stored |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[bytes.size() - 8 + i])) << (8 * i);
    }
    if (stored != fnv1a64(body)) throw ValidationError("checkpoint: integrity check failed (checksum mismatch)");
  }
  Reader in(body);
  in.take(sizeof kMagic);
  const std::uint32_t version = in.u32();
  if (version != kCheckpointVersion) {
    throw ValidationError("checkpoint: unsupported version " + std::to_string(version));
  }
  const std::uint64_t header_len = in.u64();
  if (header_len > body.size()) throw ValidationError("checkpoint: truncated header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(in.take(static_cast<std::size_t>(header_len)));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("checkpoint: malformed header: ") + e.what());
  }
  Checkpoint out;
  try {
    out.meta = header.at("meta");
    for (const auto& entry : header.at("arrays")) {
      const auto name = entry.at("name").get<std::string>();
      const auto length = entry.at("length").get<std::size_t>();
      if (length > (body.size() - in.position()) / 8) throw ValidationError("checkpoint: truncated payload");
      std::vector<double> values(length);
      for (double& v : values) v = std::bit_cast<double>(in.u64());
      out.arrays.emplace_back(name, std::move(values));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("checkpoint: malformed header: ") + e.what());
  }
  if (in.position() != body.size()) throw ValidationError("checkpoint: trailing bytes after payload");
  return out;
}

void save_checkpoint(const std::string& path, const Checkpoint& checkpoint) {
  text::write_file_atomic(path, encode_checkpoint(checkpoint));
}

Checkpoint load_checkpoint(const std::string& path) { return decode_checkpoint(text::read_file(path)); }

}  // namespace reticgen
