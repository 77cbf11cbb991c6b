#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "wiser/core.hpp"

namespace wiser {

struct EmbeddingRecord {
  std::string item_id;
  std::vector<float> vector;
};

struct RankedCandidate {
  std::string item_id;
  double similarity;  // cosine of unit vectors = dot product
};

struct UnionEntry {
  std::string item_id;
  bool in_t2i = false;
  bool in_i2i = false;
  std::optional<double> sim_t2i;
  std::optional<double> sim_i2i;
};

// Set union of both pathways' top-K lists, first-appearance order
// (T2I list first, then I2I).
struct UnionPool {
  std::vector<UnionEntry> entries;

  std::size_t size() const { return entries.size(); }

  const UnionEntry* find(const std::string& item_id) const {
    for (const auto& e : entries)
      if (e.item_id == item_id) return &e;
    return nullptr;
  }
};

// Scores accumulate in double regardless of f32 storage; sequential loop keeps
// results identical across runs.
inline double dot_f32(std::span<const float> a, std::span<const float> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    acc += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  return acc;
}

inline void normalize_f32(std::vector<float>& v, const std::string& item_id) {
  double sq = 0.0;
  for (float x : v) sq += static_cast<double>(x) * static_cast<double>(x);
  if (sq == 0.0) throw Error(ErrorCode::ZERO_NORM, item_id);
  if (!std::isfinite(sq)) throw Error(ErrorCode::NON_FINITE, item_id);
  const double inv = 1.0 / std::sqrt(sq);
  for (float& x : v) x = static_cast<float>(static_cast<double>(x) * inv);
}

// Immutable store of L2-normalized vectors with exact cosine top-K search.
// Read-only after build; concurrent top_k calls are safe.
class EmbeddingIndex {
 public:
  EmbeddingIndex() = default;

  static EmbeddingIndex build(std::vector<EmbeddingRecord> records, std::size_t dim) {
    if (dim == 0) throw Error(ErrorCode::RANGE, "dim");
    EmbeddingIndex idx;
    idx.dim_ = dim;
    idx.ids_.reserve(records.size());
    idx.data_.reserve(records.size() * dim);
    for (auto& rec : records) {
      if (rec.vector.size() != dim) throw Error(ErrorCode::DIM_MISMATCH, rec.item_id);
      if (idx.id_to_pos_.count(rec.item_id)) throw Error(ErrorCode::DUPLICATE_ID, rec.item_id);
      normalize_f32(rec.vector, rec.item_id);
      idx.id_to_pos_.emplace(rec.item_id, idx.ids_.size());
      idx.ids_.push_back(std::move(rec.item_id));
      idx.data_.insert(idx.data_.end(), rec.vector.begin(), rec.vector.end());
    }
    return idx;
  }

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return ids_.size(); }
  const std::vector<std::string>& ids() const { return ids_; }
  bool contains(const std::string& item_id) const { return id_to_pos_.count(item_id) != 0; }

  const std::string& id_at(std::size_t pos) const { return ids_[pos]; }

  std::span<const float> vector_at(std::size_t pos) const {
    return std::span<const float>(data_.data() + pos * dim_, dim_);
  }

  std::span<const float> vector_of(const std::string& item_id) const {
    auto it = id_to_pos_.find(item_id);
    if (it == id_to_pos_.end()) throw Error(ErrorCode::LOOKUP_MISS, item_id);
    return vector_at(it->second);
  }

  double similarity(std::size_t pos, std::span<const float> query) const {
    return dot_f32(vector_at(pos), query);
  }

 private:
  std::size_t dim_ = 0;
  std::vector<std::string> ids_;
  std::vector<float> data_;  // row-major, normalized
  std::unordered_map<std::string, std::size_t> id_to_pos_;
};

// Exact top-k: similarity descending, ties by item_id ascending. Equals the
// length-min(k,n) prefix of a full sort under the same comparator.
inline std::vector<RankedCandidate> top_k(const EmbeddingIndex& index,
                                          std::span<const float> query, int k) {
  if (k < 1) throw Error(ErrorCode::RANGE, "k");
  if (query.size() != index.dim()) throw Error(ErrorCode::DIM_MISMATCH, "query");

  const std::size_t n = index.size();
  std::vector<double> sims(n);
  for (std::size_t i = 0; i < n; ++i) sims[i] = index.similarity(i, query);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  const std::size_t take = std::min<std::size_t>(static_cast<std::size_t>(k), n);
  auto better = [&](std::size_t a, std::size_t b) {
    if (sims[a] != sims[b]) return sims[a] > sims[b];
    return index.id_at(a) < index.id_at(b);
  };
  std::partial_sort(order.begin(), order.begin() + take, order.end(), better);

  std::vector<RankedCandidate> out;
  out.reserve(take);
  for (std::size_t i = 0; i < take; ++i)
    out.push_back({index.id_at(order[i]), sims[order[i]]});
  return out;
}

inline UnionPool union_candidates(const std::vector<RankedCandidate>& r_t2i,
                                  const std::vector<RankedCandidate>& r_i2i) {
  UnionPool pool;
  std::unordered_map<std::string, std::size_t> pos;
  for (const auto& c : r_t2i) {
    auto [it, inserted] = pos.emplace(c.item_id, pool.entries.size());
    if (inserted) pool.entries.push_back({c.item_id, true, false, c.similarity, std::nullopt});
  }
  for (const auto& c : r_i2i) {
    auto [it, inserted] = pos.emplace(c.item_id, pool.entries.size());
    if (inserted) {
      pool.entries.push_back({c.item_id, false, true, std::nullopt, c.similarity});
    } else {
      auto& e = pool.entries[it->second];
      e.in_i2i = true;
      e.sim_i2i = c.similarity;
    }
  }
  return pool;
}

// ---------------------------------------------------------------------------
// Embedding file I/O
//
// Canonical form: JSON Lines, {"id": "...", "vec": [...]}. Binary form: magic
// "WISE", u32 LE version (=1), u32 LE dim, u64 LE count, then per record
// u32 LE id length, id bytes, dim f32 LE. Readers sniff the magic.
// ---------------------------------------------------------------------------

namespace detail {

inline void put_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

inline void put_u64(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

inline std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw Error(ErrorCode::IO_ERROR, "truncated binary embedding file");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline std::uint64_t get_u64(std::istream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  if (!in) throw Error(ErrorCode::IO_ERROR, "truncated binary embedding file");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

}  // namespace detail

inline constexpr char kEmbeddingMagic[4] = {'W', 'I', 'S', 'E'};

inline void write_embeddings_jsonl(const std::string& path,
                                   const std::vector<EmbeddingRecord>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IO_ERROR, "cannot write " + path);
  for (const auto& rec : records) {
    nlohmann::ordered_json j;
    j["id"] = rec.item_id;
    j["vec"] = rec.vector;
    out << j.dump() << "\n";
  }
}

inline void write_embeddings_binary(const std::string& path,
                                    const std::vector<EmbeddingRecord>& records,
                                    std::size_t dim) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IO_ERROR, "cannot write " + path);
  out.write(kEmbeddingMagic, 4);
  detail::put_u32(out, 1u);
  detail::put_u32(out, static_cast<std::uint32_t>(dim));
  detail::put_u64(out, records.size());
  for (const auto& rec : records) {
    if (rec.vector.size() != dim) throw Error(ErrorCode::DIM_MISMATCH, rec.item_id);
    detail::put_u32(out, static_cast<std::uint32_t>(rec.item_id.size()));
    out.write(rec.item_id.data(), static_cast<std::streamsize>(rec.item_id.size()));
    for (float x : rec.vector) {
      std::uint32_t bits;
      std::memcpy(&bits, &x, 4);
      detail::put_u32(out, bits);
    }
  }
}

inline std::vector<EmbeddingRecord> read_embeddings(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IO_ERROR, "cannot open " + path);

  char magic[4] = {0, 0, 0, 0};
  in.read(magic, 4);
  std::vector<EmbeddingRecord> records;

  if (in.gcount() == 4 && std::memcmp(magic, kEmbeddingMagic, 4) == 0) {
    const std::uint32_t version = detail::get_u32(in);
    if (version != 1)
      throw Error(ErrorCode::SCHEMA_ERROR, "unsupported embedding file version " + std::to_string(version));
    const std::uint32_t dim = detail::get_u32(in);
    const std::uint64_t count = detail::get_u64(in);
    records.reserve(count);
    for (std::uint64_t r = 0; r < count; ++r) {
      const std::uint32_t id_len = detail::get_u32(in);
      std::string id(id_len, '\0');
      in.read(id.data(), id_len);
      if (!in) throw Error(ErrorCode::IO_ERROR, "truncated binary embedding file");
      std::vector<float> vec(dim);
      for (std::uint32_t i = 0; i < dim; ++i) {
        std::uint32_t bits = detail::get_u32(in);
        float x;
        std::memcpy(&x, &bits, 4);
        vec[i] = x;
      }
      records.push_back({std::move(id), std::move(vec)});
    }
    return records;
  }

  // JSON Lines fall-back; re-read from the top so line numbers are exact.
  in.clear();
  in.seekg(0);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string stripped = trim(line);
    if (stripped.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(stripped, nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("id") || !j.contains("vec") ||
        !j["id"].is_string() || !j["vec"].is_array())
      throw Error(ErrorCode::SCHEMA_ERROR,
                  "line " + std::to_string(line_no) + ": expected {\"id\", \"vec\"}");
    EmbeddingRecord rec;
    rec.item_id = j["id"].get<std::string>();
    for (const auto& x : j["vec"]) {
      if (!x.is_number())
        throw Error(ErrorCode::SCHEMA_ERROR,
                    "line " + std::to_string(line_no) + ": vec entries must be numbers");
      rec.vector.push_back(x.get<float>());
    }
    records.push_back(std::move(rec));
  }
  return records;
}

// Reads an embedding file and builds the index, inferring dim from the first
// record.
inline EmbeddingIndex load_index(const std::string& path) {
  std::vector<EmbeddingRecord> records = read_embeddings(path);
  if (records.empty()) throw Error(ErrorCode::SCHEMA_ERROR, "embedding file is empty: " + path);
  const std::size_t dim = records.front().vector.size();
  return EmbeddingIndex::build(std::move(records), dim);
}

}  // namespace wiser
