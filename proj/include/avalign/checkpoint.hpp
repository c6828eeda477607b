// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "avalign/mat.hpp"

namespace avalign {

// Model checkpoint container: magic "AVCK" | u32 version | u32 header_len |
// header JSON | concatenated float32 payloads. The header carries the
// architecture description, the training step count, and an offset table
// (byte offsets into the payload region) for every parameter tensor.
class CheckpointWriter {
 public:
  void set_model(nlohmann::json description) { model_ = std::move(description); }
  void set_step(std::int64_t step) { step_ = step; }
  void add_tensor(const std::string& name, const MatF& tensor);
  void add_vector(const std::string& name, const std::vector<float>& v);
  void add_scalar(const std::string& name, float v);
  void write(const std::filesystem::path& path) const;

 private:
  nlohmann::json model_;
  std::int64_t step_ = 0;
  struct Entry {
    std::string name;
    std::size_t rows, cols;
    std::vector<float> data;
  };
  std::vector<Entry> tensors_;
};

class CheckpointReader {
 public:
  explicit CheckpointReader(const std::filesystem::path& path);

  const nlohmann::json& model() const { return model_; }
  std::int64_t step() const { return step_; }
  const std::vector<std::string>& tensor_names() const { return names_; }
  bool has_tensor(const std::string& name) const;
  MatF tensor(const std::string& name) const;
  std::vector<float> vector(const std::string& name) const;
  float scalar(const std::string& name) const;

 private:
  nlohmann::json model_;
  std::int64_t step_ = 0;
  std::vector<std::string> names_;
  struct Entry {
    std::size_t rows, cols;
    std::vector<float> data;
  };
  std::map<std::string, Entry> tensors_;
};

// Header JSON only (architecture introspection without loading payloads).
nlohmann::json read_checkpoint_header(const std::filesystem::path& path);

}  // namespace avalign
