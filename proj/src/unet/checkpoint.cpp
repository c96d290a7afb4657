#include <bit>
#include <cstring>
#include <fstream>
#include <json.hpp>

#include "lvnc/errors.hpp"
#include "lvnc/unet.hpp"

namespace lvnc::unet {

namespace {

constexpr char kMagic[8] = {'L', 'V', 'N', 'C', 'U', 'N', 'E', 'T'};

template <typename T>
void put_le(std::ostream& os, T value) {
  static_assert(std::is_unsigned_v<T>);
  unsigned char buf[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<unsigned char>(value >> (8 * i));
  os.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
T get_le(std::istream& is) {
  unsigned char buf[sizeof(T)];
  if (!is.read(reinterpret_cast<char*>(buf), sizeof(T))) throw FormatError("checkpoint truncated");
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(buf[i]) << (8 * i);
  return v;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const UNetParams& params,
                     const std::string& metadata_json) {
  nlohmann::ordered_json header;
  header["format"] = "lvnc-unet";
  header["version"] = kCheckpointVersion;
  const auto& c = params.config;
  header["config"] = {{"depth", c.depth},
                      {"base_channels", c.base_channels},
                      {"in_channels", c.in_channels},
                      {"num_labels", c.num_labels},
                      {"input_size", c.input_size}};
  auto& list = header["params"] = nlohmann::ordered_json::array();
  for (const auto& p : params.params) list.push_back({{"name", p.name}, {"shape", p.value.shape()}});
  header["metadata"] = nlohmann::ordered_json::parse(metadata_json);
  const std::string text = header.dump();

  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw FormatError("cannot open checkpoint for writing: " + path.string());
  os.write(kMagic, sizeof(kMagic));
  put_le<std::uint32_t>(os, kCheckpointVersion);
  put_le<std::uint64_t>(os, text.size());
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& p : params.params) {
    for (double v : p.value.data()) put_le<std::uint64_t>(os, std::bit_cast<std::uint64_t>(v));
  }
  if (!os) throw FormatError("failed writing checkpoint: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open checkpoint: " + path.string());
  char magic[8];
  if (!is.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(magic)) != 0) {
    throw FormatError("not a U-Net checkpoint: " + path.string());
  }
  const auto version = get_le<std::uint32_t>(is);
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto len = get_le<std::uint64_t>(is);
  if (len > (1u << 26)) throw FormatError("checkpoint header too large");
  std::string text(len, '\0');
  if (!is.read(text.data(), static_cast<std::streamsize>(len))) throw FormatError("checkpoint truncated");

  nlohmann::ordered_json header;
  try {
    header = nlohmann::ordered_json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint header is not JSON: ") + e.what());
  }
  Checkpoint ck;
  try {
    const auto& c = header.at("config");
    ck.params.config = UNetConfig{c.at("depth").get<int>(), c.at("base_channels").get<int>(),
                                  c.at("in_channels").get<int>(), c.at("num_labels").get<int>(),
                                  c.at("input_size").get<int>()};
    ck.params.config.validate();
    for (const auto& entry : header.at("params")) {
      auto shape = entry.at("shape").get<tensor::Shape>();
      std::vector<double> data(tensor::shape_numel(shape));
      for (auto& v : data) v = std::bit_cast<double>(get_le<std::uint64_t>(is));
      ck.params.params.push_back(
          {entry.at("name").get<std::string>(), tensor::Tensor(std::move(shape), std::move(data), true)});
    }
    ck.metadata_json = header.value("metadata", nlohmann::ordered_json::object()).dump();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad checkpoint header: ") + e.what());
  }
  if (ck.params.count() != parameter_count(ck.params.config)) {
    throw FormatError("checkpoint parameter count does not match its config");
  }
  if (is.peek() != std::char_traits<char>::eof()) throw FormatError("trailing bytes in checkpoint");
  return ck;
}

}  // namespace lvnc::unet
