#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace herdscope {

class Rng;

struct NamedTensor {
  std::string name;
  std::vector<int> shape;
  std::vector<float> values;
};

// Ordered collection of named float32 arrays.
//
// On disk: a JSON manifest
//   {"format": "herdscope-weights", "version": 1, "dtype": "float32-le",
//    "data": "<file>.bin", "tensors": [{"name", "shape", "offset"}]}
// next to a flat little-endian float32 file; offsets count elements.
class WeightSet {
 public:
  void add(std::string name, std::vector<int> shape, std::vector<float> values);
  // Appends a tensor filled uniformly in [-bound, bound].
  void add_uniform(std::string name, std::vector<int> shape, double bound, Rng& rng);
  void add_zeros(std::string name, std::vector<int> shape);

  bool contains(const std::string& name) const;
  const NamedTensor& get(const std::string& name) const;
  NamedTensor& get(const std::string& name);
  // Fails with kInvalidArgument unless the tensor has exactly this shape.
  std::span<const float> expect(const std::string& name, const std::vector<int>& shape) const;

  const std::vector<NamedTensor>& tensors() const { return tensors_; }

  void save(const std::filesystem::path& manifest_path) const;
  static WeightSet load(const std::filesystem::path& manifest_path);

 private:
  std::vector<NamedTensor> tensors_;
};

std::string shape_string(const std::vector<int>& shape);

}  // namespace herdscope
