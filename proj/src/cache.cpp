#include "grasp/cache.hpp"

#include <json.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>

namespace grasp {

static_assert(std::endian::native == std::endian::little,
              "cache files are little-endian float32; big-endian hosts are unsupported");

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const MatrixF& role_matrix(const EmbeddingCache& c, std::size_t role) {
  if (role == 0) return c.image;
  if (role <= kNumViews) return c.text[role - 1];
  return c.negatives[role - 1 - kNumViews];
}

MatrixF& role_matrix(EmbeddingCache& c, std::size_t role) {
  return const_cast<MatrixF&>(role_matrix(static_cast<const EmbeddingCache&>(c), role));
}

void write_matrix(const MatrixF& m, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(m.data()),
            static_cast<std::streamsize>(m.size() * sizeof(float)));
}

MatrixF read_matrix(const fs::path& path, std::size_t rows, std::size_t cols) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  const auto bytes = static_cast<std::size_t>(in.tellg());
  const std::size_t expected = rows * cols * sizeof(float);
  if (bytes != expected) {
    std::ostringstream msg;
    msg << path.filename().string() << " holds " << bytes << " bytes, manifest declares " << rows
        << "x" << cols << " float32 (" << expected << " bytes)";
    throw Error(ErrorCode::kShapeMismatch, msg.str());
  }
  MatrixF m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  in.seekg(0);
  in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(expected));
  return m;
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::kMalformed, path.string() + ": " + e.what());
  }
}

}  // namespace

std::vector<std::size_t> EmbeddingCache::rows_in(Split split) const {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    auto it = split_table.find(ids[i]);
    if (it != split_table.end() && it->second == split) rows.push_back(i);
  }
  return rows;
}

std::size_t EmbeddingCache::row_of(const std::string& id) const {
  auto it = std::find(ids.begin(), ids.end(), id);
  if (it == ids.end()) throw Error(ErrorCode::kMissingSplit, "unknown id '" + id + "'");
  return static_cast<std::size_t>(it - ids.begin());
}

void EmbeddingCache::validate(double norm_tolerance) const {
  if (dim <= 0) throw Error(ErrorCode::kShapeMismatch, "dim must be positive");
  const auto n = static_cast<Eigen::Index>(ids.size());
  for (std::size_t role = 0; role < 1 + kNumViews + kNumNegTypes; ++role) {
    const MatrixF& m = role_matrix(*this, role);
    if (m.rows() != n || m.cols() != dim) {
      throw Error(ErrorCode::kShapeMismatch,
                  "role " + cache_roles()[role] + " is " + std::to_string(m.rows()) + "x" +
                      std::to_string(m.cols()) + ", expected " + std::to_string(n) + "x" +
                      std::to_string(dim));
    }
    for (Eigen::Index i = 0; i < n; ++i) {
      const double norm = m.row(i).cast<double>().norm();
      if (!(std::abs(norm - 1.0) <= norm_tolerance)) {
        throw Error(ErrorCode::kNormViolation, "role " + cache_roles()[role] + " row " +
                                                   std::to_string(i) + " has norm " +
                                                   std::to_string(norm));
      }
    }
  }
  std::set<std::string> seen;
  for (const auto& id : ids) {
    if (!seen.insert(id).second) throw Error(ErrorCode::kMalformed, "duplicate id '" + id + "'");
    if (!split_table.count(id)) throw Error(ErrorCode::kMissingSplit, "id '" + id + "' has no split");
  }
  for (const auto& [id, split] : split_table) {
    if (!seen.count(id)) throw Error(ErrorCode::kMissingSplit, "split entry for unknown id '" + id + "'");
  }
}

std::vector<std::string> cache_roles() {
  std::vector<std::string> roles = {"image"};
  for (int v = 0; v < kNumViews; ++v) roles.push_back("text_" + std::string(to_string(static_cast<ViewLevel>(v))));
  for (NegType t : kAllNegTypes) roles.push_back("neg_" + std::string(to_string(t)));
  return roles;
}

void write_cache(const EmbeddingCache& cache, const fs::path& dir) {
  fs::create_directories(dir);
  const auto roles = cache_roles();
  json files = json::object();
  for (std::size_t r = 0; r < roles.size(); ++r) {
    const std::string name = roles[r] + ".f32";
    write_matrix(role_matrix(cache, r), dir / name);
    files[roles[r]] = name;
  }
  {
    std::ofstream ids(dir / "ids.txt");
    for (const auto& id : cache.ids) ids << id << '\n';
  }
  json splits = json::object();
  for (const auto& id : cache.ids) {
    auto it = cache.split_table.find(id);
    if (it != cache.split_table.end()) splits[id] = std::string(to_string(it->second));
  }
  std::ofstream(dir / "splits.json") << splits.dump(1) << '\n';
  json manifest = {{"version", 1},         {"dim", cache.dim},     {"count", cache.size()},
                   {"files", files},       {"ids", "ids.txt"},     {"splits", "splits.json"}};
  std::ofstream(dir / "manifest.json") << manifest.dump(2) << '\n';
}

EmbeddingCache load_cache(const fs::path& manifest_path) {
  const json manifest = read_json(manifest_path);
  const fs::path base = manifest_path.parent_path();
  EmbeddingCache cache;
  std::size_t count = 0;
  try {
    cache.dim = manifest.at("dim").get<int>();
    count = manifest.at("count").get<std::size_t>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kMalformed, std::string("manifest: ") + e.what());
  }
  if (cache.dim <= 0) throw Error(ErrorCode::kShapeMismatch, "manifest dim must be positive");

  const auto roles = cache_roles();
  if (!manifest.contains("files") || !manifest.at("files").is_object() || !manifest.contains("ids")) {
    throw Error(ErrorCode::kMalformed, "manifest needs a files object and an ids entry");
  }
  const json& files = manifest.at("files");
  for (std::size_t r = 0; r < roles.size(); ++r) {
    if (!files.contains(roles[r])) throw Error(ErrorCode::kMalformed, "manifest lacks role " + roles[r]);
    role_matrix(cache, r) = read_matrix(base / files.at(roles[r]).get<std::string>(), count,
                                        static_cast<std::size_t>(cache.dim));
  }

  std::ifstream ids(base / manifest.at("ids").get<std::string>());
  if (!ids) throw Error(ErrorCode::kIo, "cannot open ids file");
  for (std::string line; std::getline(ids, line);) {
    if (!line.empty()) cache.ids.push_back(line);
  }
  if (cache.ids.size() != count) {
    throw Error(ErrorCode::kShapeMismatch, "ids file lists " + std::to_string(cache.ids.size()) +
                                               " ids, manifest declares " + std::to_string(count));
  }
  if (!manifest.contains("splits")) throw Error(ErrorCode::kMissingSplit, "manifest lacks splits");
  const json splits = read_json(base / manifest.at("splits").get<std::string>());
  for (const auto& [id, s] : splits.items()) cache.split_table.emplace(id, parse_split(s.get<std::string>()));

  cache.validate(1e-3);
  return cache;
}

std::string_view to_string(PoolMode mode) {
  switch (mode) {
    case PoolMode::kFull: return "full";
    case PoolMode::kTestOnly: return "test_only";
    case PoolMode::kCustom: return "custom";
  }
  return "full";
}

PoolMode parse_pool_mode(std::string_view s) {
  if (s == "full") return PoolMode::kFull;
  if (s == "test_only") return PoolMode::kTestOnly;
  if (s == "custom") return PoolMode::kCustom;
  throw Error(ErrorCode::kConfig, "unknown pool mode '" + std::string(s) + "'");
}

CandidatePool build_pool(const EmbeddingCache& cache, PoolMode mode, ViewLevel view,
                         const std::vector<std::string>& custom_ids) {
  CandidatePool pool;
  pool.mode = mode;
  pool.view_level = view;
  switch (mode) {
    case PoolMode::kFull: pool.candidate_ids = cache.ids; break;
    case PoolMode::kTestOnly:
      for (std::size_t r : cache.rows_in(Split::kTest)) pool.candidate_ids.push_back(cache.ids[r]);
      break;
    case PoolMode::kCustom: pool.candidate_ids = custom_ids; break;
  }
  std::sort(pool.candidate_ids.begin(), pool.candidate_ids.end());
  pool.candidate_ids.erase(std::unique(pool.candidate_ids.begin(), pool.candidate_ids.end()),
                           pool.candidate_ids.end());
  if (pool.candidate_ids.empty()) throw Error(ErrorCode::kEmptyPool, "candidate pool is empty");
  std::unordered_map<std::string, std::size_t> row_index;
  for (std::size_t i = 0; i < cache.ids.size(); ++i) row_index.emplace(cache.ids[i], i);
  pool.rows.reserve(pool.candidate_ids.size());
  for (const auto& id : pool.candidate_ids) {
    auto it = row_index.find(id);
    if (it == row_index.end()) throw Error(ErrorCode::kMissingSplit, "unknown id '" + id + "'");
    pool.rows.push_back(it->second);
  }
  return pool;
}

}  // namespace grasp
