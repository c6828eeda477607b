// SPDX-License-Identifier: Apache-2.0
#include "avalign/embedding.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <set>

#include "avalign/rng.hpp"

namespace avalign {

std::string to_string(Modality m) {
  switch (m) {
    case Modality::audio: return "audio";
    case Modality::video: return "video";
    case Modality::shared: return "shared";
    case Modality::goal: return "goal";
  }
  throw ValidationError("unreachable modality tag");
}

Modality parse_modality(const std::string& s) {
  if (s == "audio") return Modality::audio;
  if (s == "video") return Modality::video;
  if (s == "shared") return Modality::shared;
  if (s == "goal") return Modality::goal;
  throw FormatError("unknown modality tag: '" + s + "'");
}

void validate(const EmbeddingMatrix& m, const DimPolicy& policy) {
  if (m.dim < 1) throw ValidationError("embedding dim must be >= 1, got 0");
  if (m.data.size() != m.rows * m.dim)
    throw ValidationError("embedding data length " + std::to_string(m.data.size()) +
                          " does not equal rows*dim = " + std::to_string(m.rows * m.dim));
  for (std::size_t r = 0; r < m.rows; ++r) {
    const float* p = m.row(r);
    for (std::size_t c = 0; c < m.dim; ++c) {
      if (!std::isfinite(p[c]))
        throw ValidationError("non-finite value at row " + std::to_string(r) + ", col " +
                              std::to_string(c));
    }
  }
  if (policy.enforce) {
    auto expect = [&](std::size_t want) {
      if (m.dim != want)
        throw ValidationError("modality '" + to_string(m.modality) + "' expects dim " +
                              std::to_string(want) + ", got " + std::to_string(m.dim));
    };
    if (m.modality == Modality::audio) expect(policy.audio_dim);
    if (m.modality == Modality::video) expect(policy.video_dim);
    if (m.modality == Modality::goal) expect(policy.goal_dim);
  }
}

namespace {

constexpr char kMagic[4] = {'E', 'M', 'B', '1'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& os, std::uint32_t v) {
  char b[4] = {char(v & 0xff), char((v >> 8) & 0xff), char((v >> 16) & 0xff),
               char((v >> 24) & 0xff)};
  os.write(b, 4);
}

void put_f32(std::ostream& os, float f) { put_u32(os, std::bit_cast<std::uint32_t>(f)); }

std::uint32_t get_u32(std::istream& is, const std::string& what) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4))
    throw CorruptionError("truncated file while reading " + what);
  return std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 | std::uint32_t(b[2]) << 16 |
         std::uint32_t(b[3]) << 24;
}

}  // namespace

void write_embeddings(const std::filesystem::path& path, const EmbeddingMatrix& m,
                      const DimPolicy& policy) {
  validate(m, policy);  // rejects NaN/Inf before anything touches disk
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for writing: " + path.string());
  os.write(kMagic, 4);
  put_u32(os, kVersion);
  std::string tag = to_string(m.modality);
  put_u32(os, std::uint32_t(tag.size()));
  os.write(tag.data(), std::streamsize(tag.size()));
  put_u32(os, std::uint32_t(m.rows));
  put_u32(os, std::uint32_t(m.dim));
  for (float f : m.data) put_f32(os, f);
  os.flush();
  if (!os) throw IoError("write failed: " + path.string());
}

EmbeddingMatrix read_embeddings(const std::filesystem::path& path, const DimPolicy& policy) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open for reading: " + path.string());
  char magic[4];
  if (!is.read(magic, 4)) throw CorruptionError("file too short for magic: " + path.string());
  if (std::string(magic, 4) != std::string(kMagic, 4))
    throw FormatError("bad magic in " + path.string() + " (expected EMB1)");
  std::uint32_t version = get_u32(is, "version");
  if (version != kVersion)
    throw FormatError("unsupported EMB1 version " + std::to_string(version));
  std::uint32_t tag_len = get_u32(is, "modality length");
  if (tag_len > 64) throw FormatError("implausible modality length " + std::to_string(tag_len));
  std::string tag(tag_len, '\0');
  if (!is.read(tag.data(), tag_len)) throw CorruptionError("truncated modality tag");
  EmbeddingMatrix m;
  m.modality = parse_modality(tag);
  m.rows = get_u32(is, "rows");
  m.dim = get_u32(is, "dim");
  m.data.resize(m.rows * m.dim);
  for (std::size_t i = 0; i < m.data.size(); ++i)
    m.data[i] = std::bit_cast<float>(get_u32(is, "payload"));
  char extra;
  if (is.read(&extra, 1))
    throw CorruptionError("trailing bytes after payload in " + path.string());
  validate(m, policy);
  return m;
}

NormalizeResult l2_normalize_rows(const EmbeddingMatrix& m) {
  NormalizeResult out;
  out.matrix = m;
  for (std::size_t r = 0; r < m.rows; ++r) {
    double s = 0.0;
    const float* p = m.row(r);
    for (std::size_t c = 0; c < m.dim; ++c) s += double(p[c]) * double(p[c]);
    double norm = std::sqrt(s);
    if (norm == 0.0) {
      out.zero_rows.push_back(r);
      continue;
    }
    float* q = out.matrix.row(r);
    float inv = float(1.0 / norm);
    for (std::size_t c = 0; c < m.dim; ++c) q[c] *= inv;
  }
  return out;
}

namespace {
std::string split_tag(Split s) { return s == Split::train ? "train" : "test"; }
Split parse_split(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "test") return Split::test;
  throw FormatError("unknown split tag: '" + s + "'");
}
}  // namespace

void validate(const PairManifest& manifest, std::size_t audio_rows, std::size_t video_rows) {
  std::set<std::pair<std::string, std::uint32_t>> keys;
  std::set<std::size_t> a_used, v_used;
  for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
    const PairEntry& e = manifest.entries[i];
    if (e.audio_row >= audio_rows)
      throw ValidationError("entry " + std::to_string(i) + ": audio_row " +
                            std::to_string(e.audio_row) + " out of bounds (rows=" +
                            std::to_string(audio_rows) + ")");
    if (e.video_row >= video_rows)
      throw ValidationError("entry " + std::to_string(i) + ": video_row " +
                            std::to_string(e.video_row) + " out of bounds (rows=" +
                            std::to_string(video_rows) + ")");
    if (!keys.insert({e.source_id, e.window_index}).second)
      throw ValidationError("duplicate (source_id, window_index): (" + e.source_id + ", " +
                            std::to_string(e.window_index) + ")");
    if (!a_used.insert(e.audio_row).second)
      throw ValidationError("audio_row " + std::to_string(e.audio_row) + " referenced twice");
    if (!v_used.insert(e.video_row).second)
      throw ValidationError("video_row " + std::to_string(e.video_row) + " referenced twice");
  }
}

void save_manifest(const std::filesystem::path& path, const PairManifest& manifest) {
  nlohmann::json arr = nlohmann::json::array();
  for (const PairEntry& e : manifest.entries) {
    arr.push_back({{"source_id", e.source_id},
                   {"window_index", e.window_index},
                   {"audio_row", e.audio_row},
                   {"video_row", e.video_row},
                   {"split", split_tag(e.split)}});
  }
  std::ofstream os(path);
  if (!os) throw IoError("cannot open for writing: " + path.string());
  os << arr.dump(2) << "\n";
  if (!os) throw IoError("write failed: " + path.string());
}

PairManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open for reading: " + path.string());
  nlohmann::json arr;
  try {
    is >> arr;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("manifest parse error in " + path.string() + ": " + e.what());
  }
  if (!arr.is_array()) throw FormatError("manifest must be a JSON array");
  PairManifest manifest;
  for (const auto& j : arr) {
    PairEntry e;
    try {
      e.source_id = j.at("source_id").get<std::string>();
      e.window_index = j.at("window_index").get<std::uint32_t>();
      e.audio_row = j.at("audio_row").get<std::size_t>();
      e.video_row = j.at("video_row").get<std::size_t>();
      e.split = parse_split(j.at("split").get<std::string>());
    } catch (const nlohmann::json::exception& ex) {
      throw FormatError(std::string("bad manifest entry: ") + ex.what());
    }
    manifest.entries.push_back(std::move(e));
  }
  return manifest;
}

std::vector<std::size_t> PairedDataset::entry_indices(Split split) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < manifest.entries.size(); ++i)
    if (manifest.entries[i].split == split) out.push_back(i);
  return out;
}

void validate(const PairedDataset& dataset, const DimPolicy& policy) {
  validate(dataset.audio, policy);
  validate(dataset.video, policy);
  validate(dataset.manifest, dataset.audio.rows, dataset.video.rows);
}

PairedDataset split_pairs(const PairedDataset& dataset, double test_fraction, std::uint64_t seed) {
  const std::size_t n = dataset.n_pairs();
  if (n == 0) throw ValidationError("split_pairs: dataset has no pairs");
  if (!(test_fraction >= 0.0 && test_fraction < 1.0))
    throw ValidationError("test_fraction must be in [0, 1)");
  // The nudge keeps floor() faithful to real arithmetic when fraction*n
  // lands a half-ulp under an integer (e.g. 0.29 * 100).
  const auto n_test = std::size_t(std::floor(test_fraction * double(n) + 1e-9));

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(seed);
  shuffle(order, rng);

  PairedDataset out = dataset;
  for (std::size_t i = 0; i < n; ++i)
    out.manifest.entries[order[i]].split = i < n_test ? Split::test : Split::train;
  return out;
}

}  // namespace avalign
