#include "colornorm/weights_io.hpp"

#include <zlib.h>

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <nlohmann/json.hpp>

#include "colornorm/error.hpp"

namespace colornorm {

namespace {

using nlohmann::json;

constexpr char kMagic[4] = {'C', 'N', 'R', 'M'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

void put_tensor(std::vector<std::uint8_t>& out, const Tensor& t) {
  for (float v : t.data()) put_u32(out, std::bit_cast<std::uint32_t>(v));
}

// Every stored tensor of a model, in file order.
std::vector<Tensor*> stored_tensors(Model& model) {
  std::vector<Tensor*> tensors;
  for (auto& block : model.blocks()) {
    for (auto& layer : block) {
      tensors.insert(tensors.end(), {&layer.conv.weights, &layer.conv.bias, &layer.bn.gamma, &layer.bn.beta,
                                     &layer.bn.running_mean, &layer.bn.running_var});
    }
  }
  tensors.push_back(&model.head().weights);
  tensors.push_back(&model.head().bias);
  return tensors;
}

template <typename F>
auto malformed_on_json_error(F&& f) {
  try {
    return f();
  } catch (const json::exception& e) {
    fail(ErrorCode::MalformedFile, std::string("architecture header: ") + e.what());
  }
}

void reject_unknown_keys(const json& j, std::initializer_list<const char*> allowed, const char* where) {
  for (const auto& [key, value] : j.items()) {
    bool known = false;
    for (const char* a : allowed) known = known || key == a;
    if (!known) fail(ErrorCode::MalformedFile, std::string("unknown key '") + key + "' in " + where);
  }
}

}  // namespace

std::uint32_t crc32(const std::uint8_t* data, std::size_t size) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  while (size > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(size, 1u << 30));
    crc = ::crc32(crc, data, chunk);
    data += chunk;
    size -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

std::string arch_to_json(const ArchSpec& spec) {
  json blocks = json::array();
  for (const auto& b : spec.blocks) {
    blocks.push_back({{"layers", b.layers}, {"growth", b.growth}, {"kernel", b.kernel}, {"dilation", b.dilation}});
  }
  const json j = {{"blocks", blocks},
                  {"head", {{"kernel", spec.head.kernel}, {"out_channels", spec.head.out_channels}}},
                  {"lrelu_slope", spec.lrelu_slope}};
  return j.dump();
}

ArchSpec arch_from_json(const std::string& text) {
  return malformed_on_json_error([&] {
    const json j = json::parse(text);
    reject_unknown_keys(j, {"blocks", "head", "lrelu_slope"}, "architecture");
    ArchSpec spec;
    for (const auto& b : j.at("blocks")) {
      reject_unknown_keys(b, {"layers", "growth", "kernel", "dilation"}, "block");
      spec.blocks.push_back({b.at("layers").get<std::size_t>(), b.at("growth").get<std::size_t>(),
                             b.at("kernel").get<std::size_t>(), b.at("dilation").get<std::size_t>()});
    }
    const json& head = j.at("head");
    reject_unknown_keys(head, {"kernel", "out_channels"}, "head");
    spec.head = {head.at("kernel").get<std::size_t>(), head.at("out_channels").get<std::size_t>()};
    spec.lrelu_slope = j.at("lrelu_slope").get<double>();
    return spec;
  });
}

std::vector<std::uint8_t> encode_weights(const Model& model) {
  Model copy = model;
  for (const Tensor* t : stored_tensors(copy)) {
    for (float v : t->data()) {
      if (!std::isfinite(v)) fail(ErrorCode::NonFinite, "refusing to save non-finite weights");
    }
  }
  const std::string header = arch_to_json(model.spec());
  std::vector<std::uint8_t> out(kMagic, kMagic + 4);
  put_u32(out, kWeightsVersion);
  put_u32(out, static_cast<std::uint32_t>(header.size()));
  out.insert(out.end(), header.begin(), header.end());
  for (const Tensor* t : stored_tensors(copy)) put_tensor(out, *t);
  put_u32(out, crc32(out.data(), out.size()));
  return out;
}

Model decode_weights(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    fail(ErrorCode::BadMagic, "weight file does not start with \"CNRM\"");
  }
  if (bytes.size() < 16) fail(ErrorCode::MalformedFile, "weight file truncated (" + std::to_string(bytes.size()) + " bytes)");
  const std::uint32_t version = get_u32(bytes.data() + 4);
  if (version != kWeightsVersion) {
    fail(ErrorCode::UnsupportedVersion, "weight file version " + std::to_string(version) + ", expected " +
                                            std::to_string(kWeightsVersion));
  }
  const std::size_t body = bytes.size() - 4;
  const std::uint32_t stored_crc = get_u32(bytes.data() + body);
  const std::uint32_t actual_crc = crc32(bytes.data(), body);
  if (stored_crc != actual_crc) fail(ErrorCode::ChecksumMismatch, "weight file CRC-32 mismatch");

  const std::uint32_t header_len = get_u32(bytes.data() + 8);
  if (12 + static_cast<std::size_t>(header_len) > body) {
    fail(ErrorCode::MalformedFile, "header length exceeds file size");
  }
  const std::string header(reinterpret_cast<const char*>(bytes.data() + 12), header_len);
  ArchSpec spec = arch_from_json(header);
  try {
    spec.validate();
  } catch (const Error& e) {
    fail(ErrorCode::MalformedFile, e.what());
  }

  Model model(spec);
  std::vector<Tensor*> tensors = stored_tensors(model);
  std::size_t floats = 0;
  for (const Tensor* t : tensors) floats += t->size();
  const std::size_t payload = body - 12 - header_len;
  if (payload != floats * 4) {
    fail(ErrorCode::MalformedFile, "payload holds " + std::to_string(payload) + " bytes, architecture needs " +
                                       std::to_string(floats * 4));
  }
  const std::uint8_t* p = bytes.data() + 12 + header_len;
  for (Tensor* t : tensors) {
    for (float& v : t->data()) {
      v = std::bit_cast<float>(get_u32(p));
      p += 4;
    }
  }
  model.set_mode(Mode::Infer);
  return model;
}

void save_weights(const Model& model, std::ostream& out) {
  const std::vector<std::uint8_t> bytes = encode_weights(model);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorCode::Io, "failed writing weights");
}

void save_weights(const Model& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::Io, "cannot open " + path.string() + " for writing");
  save_weights(model, out);
}

Model load_weights(std::istream& in) {
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_weights(bytes);
}

Model load_weights(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot open weights " + path.string());
  return load_weights(in);
}

}  // namespace colornorm
