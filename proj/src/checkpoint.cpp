// SPDX-License-Identifier: Apache-2.0
#include "avalign/checkpoint.hpp"

#include <bit>
#include <fstream>

#include "avalign/errors.hpp"

namespace avalign {

namespace {

constexpr char kMagic[4] = {'A', 'V', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& os, std::uint32_t v) {
  char b[4] = {char(v & 0xff), char((v >> 8) & 0xff), char((v >> 16) & 0xff),
               char((v >> 24) & 0xff)};
  os.write(b, 4);
}

std::uint32_t get_u32(std::istream& is, const char* what) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4))
    throw CorruptionError(std::string("checkpoint truncated while reading ") + what);
  return std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 | std::uint32_t(b[2]) << 16 |
         std::uint32_t(b[3]) << 24;
}

}  // namespace

void CheckpointWriter::add_tensor(const std::string& name, const MatF& tensor) {
  tensors_.push_back({name, tensor.rows, tensor.cols, tensor.data});
}

void CheckpointWriter::add_vector(const std::string& name, const std::vector<float>& v) {
  tensors_.push_back({name, 1, v.size(), v});
}

void CheckpointWriter::add_scalar(const std::string& name, float v) {
  tensors_.push_back({name, 1, 1, {v}});
}

void CheckpointWriter::write(const std::filesystem::path& path) const {
  nlohmann::json table = nlohmann::json::array();
  std::size_t offset = 0;
  for (const Entry& e : tensors_) {
    if (e.data.size() != e.rows * e.cols)
      throw ValidationError("checkpoint tensor '" + e.name + "' size mismatch");
    table.push_back(
        {{"name", e.name}, {"rows", e.rows}, {"cols", e.cols}, {"offset", offset}});
    offset += e.data.size() * 4;
  }
  nlohmann::json header = {{"format_version", kVersion},
                           {"model", model_},
                           {"step", step_},
                           {"tensors", table}};
  const std::string header_str = header.dump();

  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for writing: " + path.string());
  os.write(kMagic, 4);
  put_u32(os, kVersion);
  put_u32(os, std::uint32_t(header_str.size()));
  os.write(header_str.data(), std::streamsize(header_str.size()));
  for (const Entry& e : tensors_)
    for (float f : e.data) put_u32(os, std::bit_cast<std::uint32_t>(f));
  os.flush();
  if (!os) throw IoError("write failed: " + path.string());
}

CheckpointReader::CheckpointReader(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open for reading: " + path.string());
  char magic[4];
  if (!is.read(magic, 4)) throw CorruptionError("checkpoint too short for magic");
  if (std::string(magic, 4) != std::string(kMagic, 4))
    throw FormatError("bad checkpoint magic in " + path.string());
  const std::uint32_t version = get_u32(is, "version");
  if (version != kVersion)
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  const std::uint32_t header_len = get_u32(is, "header length");
  std::string header_str(header_len, '\0');
  if (!is.read(header_str.data(), header_len)) throw CorruptionError("truncated header");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(header_str);
    model_ = header.at("model");
    step_ = header.at("step").get<std::int64_t>();
    for (const auto& t : header.at("tensors")) {
      Entry e;
      const auto name = t.at("name").get<std::string>();
      e.rows = t.at("rows").get<std::size_t>();
      e.cols = t.at("cols").get<std::size_t>();
      e.data.resize(e.rows * e.cols);
      names_.push_back(name);
      tensors_.emplace(name, std::move(e));
    }
    // Payloads are contiguous in table order; offsets are validated against
    // the running position instead of seeking.
    std::size_t pos = 0;
    for (std::size_t i = 0; i < names_.size(); ++i) {
      const auto expected = header.at("tensors").at(i).at("offset").get<std::size_t>();
      if (expected != pos)
        throw CorruptionError("tensor '" + names_[i] + "' offset mismatch");
      Entry& e = tensors_.at(names_[i]);
      for (float& f : e.data) f = std::bit_cast<float>(get_u32(is, "payload"));
      pos += e.data.size() * 4;
    }
  } catch (const nlohmann::json::exception& ex) {
    throw FormatError("bad checkpoint header: " + std::string(ex.what()));
  }
  char extra;
  if (is.read(&extra, 1)) throw CorruptionError("trailing bytes after checkpoint payload");
}

bool CheckpointReader::has_tensor(const std::string& name) const {
  return tensors_.count(name) != 0;
}

MatF CheckpointReader::tensor(const std::string& name) const {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw FormatError("checkpoint tensor missing: '" + name + "'");
  MatF m(it->second.rows, it->second.cols);
  m.data = it->second.data;
  return m;
}

std::vector<float> CheckpointReader::vector(const std::string& name) const {
  return tensor(name).data;
}

float CheckpointReader::scalar(const std::string& name) const {
  const MatF m = tensor(name);
  if (m.size() != 1) throw FormatError("checkpoint tensor '" + name + "' is not a scalar");
  return m.data[0];
}

nlohmann::json read_checkpoint_header(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open for reading: " + path.string());
  char magic[4];
  if (!is.read(magic, 4)) throw CorruptionError("checkpoint too short for magic");
  if (std::string(magic, 4) != std::string(kMagic, 4))
    throw FormatError("bad checkpoint magic in " + path.string());
  get_u32(is, "version");
  const std::uint32_t header_len = get_u32(is, "header length");
  std::string header_str(header_len, '\0');
  if (!is.read(header_str.data(), header_len)) throw CorruptionError("truncated header");
  try {
    return nlohmann::json::parse(header_str);
  } catch (const nlohmann::json::exception& ex) {
    throw FormatError("bad checkpoint header: " + std::string(ex.what()));
  }
}

}  // namespace avalign
