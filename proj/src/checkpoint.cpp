#include "xlemb/checkpoint.hpp"

#include <cstring>

#include "json.hpp"
#include "xlemb/common.hpp"
#include "xlemb/text_util.hpp"

namespace xlemb {

using nlohmann::json;

namespace {

constexpr char kMagic[4] = {'X', 'C', 'P', '1'};
constexpr int kFormatVersion = 1;

std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ull;
  for (char c : bytes) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ull;
  }
  return h;
}

void append_u64_le(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) {
    out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
}

std::uint64_t read_u64_le(const std::string& bytes, std::size_t at) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) {
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[at + i]))
         << (8 * i);
  }
  return v;
}

void append_f32_le(std::string& out, const std::vector<float>& xs) {
  static_assert(sizeof(float) == 4);
  for (float x : xs) {
    std::uint32_t bits;
    std::memcpy(&bits, &x, 4);
    for (int i = 0; i < 4; ++i) {
      out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
    }
  }
}

void read_f32_le(const std::string& bytes, std::size_t at,
                 std::vector<float>& out) {
  for (std::size_t k = 0; k < out.size(); ++k) {
    std::uint32_t bits = 0;
    for (int i = 0; i < 4; ++i) {
      bits |= static_cast<std::uint32_t>(
                  static_cast<unsigned char>(bytes[at + 4 * k + i]))
              << (8 * i);
    }
    float x;
    std::memcpy(&x, &bits, 4);
    out[k] = x;
  }
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  const auto named = ckpt.params.named();
  if (ckpt.adam.m.size() != named.size() ||
      ckpt.adam.v.size() != named.size()) {
    throw ShapeError("checkpoint: Adam state does not match parameter list");
  }

  json manifest = json::array();
  std::string payload;
  std::size_t offset = 0;
  auto add_entry = [&](const std::string& name, const std::string& kind,
                       const std::vector<std::size_t>& shape,
                       const std::vector<float>& data) {
    json e;
    e["name"] = name;
    e["kind"] = kind;
    e["shape"] = shape;
    e["offset"] = offset;
    e["count"] = data.size();
    manifest.push_back(e);
    append_f32_le(payload, data);
    offset += data.size() * 4;
  };
  for (std::size_t i = 0; i < named.size(); ++i) {
    const auto& [name, p] = named[i];
    add_entry(name, "param", p.shape(), p.value());
    add_entry(name, "adam_m", {ckpt.adam.m[i].size()}, ckpt.adam.m[i]);
    add_entry(name, "adam_v", {ckpt.adam.v[i].size()}, ckpt.adam.v[i]);
  }

  json header;
  header["format_version"] = kFormatVersion;
  header["step"] = ckpt.step;
  header["epoch"] = ckpt.epoch;
  header["adam_t"] = ckpt.adam.t;
  header["model"] = json::parse(model_config_to_json(ckpt.model));
  header["train"] = json::parse(train_settings_to_json(ckpt.train));
  header["loss"] = json::parse(loss_config_to_json(ckpt.loss));
  header["vocab"] = serialize_vocab(ckpt.vocab);
  header["languages"] = ckpt.vocab.languages;
  header["tensors"] = std::move(manifest);
  const std::string header_text = header.dump();

  std::string out;
  out.append(kMagic, 4);
  append_u64_le(out, header_text.size());
  out += header_text;
  out += payload;
  append_u64_le(out, fnv1a(out));
  write_file(path, out);
}

Checkpoint load_checkpoint(const std::string& path) {
  const std::string bytes = read_file(path);
  if (bytes.size() < 4 + 8 + 8) {
    throw FormatError("checkpoint: file too short: " + path);
  }
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw FormatError("checkpoint: bad magic bytes in " + path);
  }
  const std::uint64_t stored_sum = read_u64_le(bytes, bytes.size() - 8);
  if (fnv1a(bytes.substr(0, bytes.size() - 8)) != stored_sum) {
    throw FormatError("checkpoint: checksum mismatch (truncated or corrupted): " +
                      path);
  }
  const std::uint64_t header_len = read_u64_le(bytes, 4);
  if (12 + header_len + 8 > bytes.size()) {
    throw FormatError("checkpoint: header length exceeds file size: " + path);
  }
  json header;
  try {
    header = json::parse(bytes.substr(12, header_len));
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("checkpoint: bad header: ") + e.what());
  }
  if (header.at("format_version").get<int>() != kFormatVersion) {
    throw FormatError("checkpoint: unsupported format version " +
                      header.at("format_version").dump());
  }

  Checkpoint ckpt;
  ckpt.step = header.at("step").get<std::size_t>();
  ckpt.epoch = header.at("epoch").get<std::size_t>();
  ckpt.model = model_config_from_json(header.at("model").dump());
  ckpt.train = train_settings_from_json(header.at("train").dump());
  ckpt.loss = loss_config_from_json(header.at("loss").dump());
  ckpt.vocab = parse_vocab(header.at("vocab").get<std::string>());
  ckpt.vocab.set_languages(
      header.at("languages").get<std::vector<std::string>>());

  Rng scratch(0);
  ckpt.params = ModelParams<float>::init(ckpt.model, scratch);
  auto named = ckpt.params.named();
  ckpt.adam.init_like(named);
  ckpt.adam.t = header.at("adam_t").get<std::size_t>();

  const std::size_t payload_start = 12 + header_len;
  const std::size_t payload_size = bytes.size() - payload_start - 8;
  const json& tensors = header.at("tensors");
  if (tensors.size() != named.size() * 3) {
    throw FormatError("checkpoint: manifest lists " +
                      std::to_string(tensors.size()) + " tensors, expected " +
                      std::to_string(named.size() * 3));
  }
  for (std::size_t i = 0; i < named.size(); ++i) {
    auto& [name, p] = named[i];
    for (int part = 0; part < 3; ++part) {
      const json& e = tensors.at(3 * i + part);
      const std::string kind = e.at("kind").get<std::string>();
      const std::string want_kind =
          part == 0 ? "param" : (part == 1 ? "adam_m" : "adam_v");
      if (e.at("name").get<std::string>() != name || kind != want_kind) {
        throw FormatError("checkpoint: manifest order mismatch at '" + name +
                          "'");
      }
      const std::size_t count = e.at("count").get<std::size_t>();
      const std::size_t off = e.at("offset").get<std::size_t>();
      if (count != p.size()) {
        throw FormatError("checkpoint: '" + name + "' (" + kind + ") holds " +
                          std::to_string(count) + " values, expected " +
                          std::to_string(p.size()));
      }
      if (off + count * 4 > payload_size) {
        throw FormatError("checkpoint: payload truncated at '" + name + "'");
      }
      std::vector<float>& dst = part == 0 ? p.mutable_value()
                                : part == 1 ? ckpt.adam.m[i]
                                            : ckpt.adam.v[i];
      if (part == 0) {
        const auto shape = e.at("shape").get<std::vector<std::size_t>>();
        if (shape != p.shape()) {
          throw FormatError("checkpoint: shape mismatch for '" + name + "'");
        }
      }
      read_f32_le(bytes, payload_start + off, dst);
    }
  }
  return ckpt;
}

}  // namespace xlemb
