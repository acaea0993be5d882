#include "herdscope/weights.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <functional>
#include <numeric>

#include <json.hpp>

#include "herdscope/error.hpp"
#include "herdscope/rng.hpp"

namespace herdscope {

namespace {

std::size_t element_count(const std::vector<int>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         [](std::size_t a, int d) { return a * static_cast<std::size_t>(d); });
}

std::uint32_t to_le(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::little) return v;
  return ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) | (v >> 24);
}

}  // namespace

std::string shape_string(const std::vector<int>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) s += (i ? "," : "") + std::to_string(shape[i]);
  return s + "]";
}

void WeightSet::add(std::string name, std::vector<int> shape, std::vector<float> values) {
  require(!contains(name), ErrorCode::kInvalidArgument, "duplicate weight tensor '" + name + "'");
  require(values.size() == element_count(shape), ErrorCode::kInvalidArgument,
          "weight tensor '" + name + "' size does not match shape " + shape_string(shape));
  tensors_.push_back({std::move(name), std::move(shape), std::move(values)});
}

void WeightSet::add_uniform(std::string name, std::vector<int> shape, double bound, Rng& rng) {
  std::vector<float> v(element_count(shape));
  for (float& x : v) x = static_cast<float>(rng.uniform(-bound, bound));
  add(std::move(name), std::move(shape), std::move(v));
}

void WeightSet::add_zeros(std::string name, std::vector<int> shape) {
  std::vector<float> v(element_count(shape), 0.0f);
  add(std::move(name), std::move(shape), std::move(v));
}

bool WeightSet::contains(const std::string& name) const {
  for (const auto& t : tensors_)
    if (t.name == name) return true;
  return false;
}

const NamedTensor& WeightSet::get(const std::string& name) const {
  for (const auto& t : tensors_)
    if (t.name == name) return t;
  fail(ErrorCode::kInvalidArgument, "missing weight tensor '" + name + "'");
}

NamedTensor& WeightSet::get(const std::string& name) {
  return const_cast<NamedTensor&>(std::as_const(*this).get(name));
}

std::span<const float> WeightSet::expect(const std::string& name,
                                         const std::vector<int>& shape) const {
  const auto& t = get(name);
  require(t.shape == shape, ErrorCode::kInvalidArgument,
          "weight tensor '" + name + "' has shape " + shape_string(t.shape) + ", expected " +
              shape_string(shape));
  return t.values;
}

void WeightSet::save(const std::filesystem::path& manifest_path) const {
  std::filesystem::path bin_path = manifest_path;
  bin_path.replace_extension(".bin");
  nlohmann::json doc = {{"format", "herdscope-weights"},
                        {"version", 1},
                        {"dtype", "float32-le"},
                        {"data", bin_path.filename().string()},
                        {"tensors", nlohmann::json::array()}};
  std::ofstream bin(bin_path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(bin), ErrorCode::kIo, "cannot write " + bin_path.string());
  std::size_t offset = 0;
  for (const auto& t : tensors_) {
    doc["tensors"].push_back({{"name", t.name}, {"shape", t.shape}, {"offset", offset}});
    for (float v : t.values) {
      const std::uint32_t le = to_le(std::bit_cast<std::uint32_t>(v));
      bin.write(reinterpret_cast<const char*>(&le), sizeof le);
    }
    offset += t.values.size();
  }
  require(static_cast<bool>(bin), ErrorCode::kIo, "failed writing " + bin_path.string());
  std::ofstream js(manifest_path, std::ios::trunc);
  require(static_cast<bool>(js), ErrorCode::kIo, "cannot write " + manifest_path.string());
  js << doc.dump(2) << '\n';
}

WeightSet WeightSet::load(const std::filesystem::path& manifest_path) {
  std::ifstream js(manifest_path);
  require(static_cast<bool>(js), ErrorCode::kIo, "cannot open weights " + manifest_path.string());
  WeightSet ws;
  try {
    const auto doc = nlohmann::json::parse(js);
    require(doc.at("format") == "herdscope-weights" && doc.at("dtype") == "float32-le",
            ErrorCode::kData, manifest_path.string() + ": not a float32-le weight manifest");
    const auto bin_path = manifest_path.parent_path() / doc.at("data").get<std::string>();
    std::ifstream bin(bin_path, std::ios::binary);
    require(static_cast<bool>(bin), ErrorCode::kIo, "cannot open " + bin_path.string());
    std::vector<char> raw((std::istreambuf_iterator<char>(bin)), std::istreambuf_iterator<char>());
    require(raw.size() % 4 == 0, ErrorCode::kData, bin_path.string() + ": truncated weight data");
    const std::size_t total = raw.size() / 4;
    for (const auto& jt : doc.at("tensors")) {
      auto shape = jt.at("shape").get<std::vector<int>>();
      const auto offset = jt.at("offset").get<std::size_t>();
      const std::size_t n = element_count(shape);
      require(offset + n <= total, ErrorCode::kData,
              bin_path.string() + ": tensor '" + jt.at("name").get<std::string>() +
                  "' runs past end of data");
      std::vector<float> values(n);
      for (std::size_t i = 0; i < n; ++i) {
        std::uint32_t le;
        std::memcpy(&le, raw.data() + 4 * (offset + i), sizeof le);
        values[i] = std::bit_cast<float>(to_le(le));
      }
      ws.add(jt.at("name").get<std::string>(), std::move(shape), std::move(values));
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kData, "malformed weight manifest " + manifest_path.string() + ": " + e.what());
  }
  return ws;
}

}  // namespace herdscope
