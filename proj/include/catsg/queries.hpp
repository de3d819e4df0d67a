// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "catsg/errors.hpp"
#include "catsg/scenegraph.hpp"

namespace catsg {

using QueryVector = Eigen::VectorXd;
/// Per-frame query embeddings keyed by class id (one instance per class).
using QueryMap = std::map<int, QueryVector>;

/// A chunk ends at frame position `end` (index into VideoRecord::frames) and
/// spans `length` positions. Positions before 0 repeat frame 0.
struct ChunkRange {
  int end = 0;
  int length = 8;

  int begin() const { return end - length + 1; }
  bool operator==(const ChunkRange&) const = default;
};

/// Source of per-instance query embeddings. Real backbone features plug in
/// here; the simulator supplies a synthetic implementation.
class QueryProvider {
 public:
  virtual ~QueryProvider() = default;
  virtual int dim() const = 0;
  virtual QueryMap frame_queries(const VideoRecord& video, int position) const = 0;

  std::vector<QueryMap> chunk_queries(const VideoRecord& video, ChunkRange chunk) const {
    if (chunk.length <= 0 || chunk.end < 0 ||
        chunk.end >= static_cast<int>(video.frames.size()))
      throw ChunkOutOfRange("chunk ending at " + std::to_string(chunk.end) + " outside video " +
                            video.video_id);
    std::vector<QueryMap> out;
    out.reserve(static_cast<std::size_t>(chunk.length));
    for (int p = chunk.begin(); p <= chunk.end; ++p)
      out.push_back(frame_queries(video, std::max(p, 0)));
    return out;
  }
};

/// Serves embeddings from a queries file:
///   line 1: {"format":"catsg-queries","version":1,"dim":D}
///   then one {"video_id","frame_idx","class","vector":[D floats]} per line.
class ExternalQueryProvider : public QueryProvider {
 public:
  ExternalQueryProvider(int dim, std::map<std::pair<std::string, int>, QueryMap> table)
      : dim_(dim), table_(std::move(table)) {}

  int dim() const override { return dim_; }

  QueryMap frame_queries(const VideoRecord& video, int position) const override {
    const auto& f = video.frames.at(static_cast<std::size_t>(position));
    auto it = table_.find({video.video_id, f.frame_idx});
    if (it == table_.end())
      throw MissingFrame("no queries for " + video.video_id + "#" + std::to_string(f.frame_idx));
    QueryMap out;
    for (const auto& e : f.entities) {
      auto q = it->second.find(e.cls);
      if (q == it->second.end())
        throw MissingFrame("no query for class " + std::to_string(e.cls) + " in " +
                           video.video_id + "#" + std::to_string(f.frame_idx));
      out.emplace(e.cls, q->second);
    }
    return out;
  }

 private:
  int dim_;
  std::map<std::pair<std::string, int>, QueryMap> table_;
};

inline ExternalQueryProvider load_external_queries(const std::filesystem::path& path,
                                                   int expected_dim) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open queries file: " + path.string());
  std::string line;
  int line_no = 0;
  int dim = -1;
  std::map<std::pair<std::string, int>, QueryMap> table;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
      if (dim < 0) {
        if (j.at("format").get<std::string>() != "catsg-queries" ||
            j.at("version").get<int>() != 1)
          throw SchemaError("not a version-1 catsg-queries file");
        dim = j.at("dim").get<int>();
        if (dim != expected_dim)
          throw DimensionMismatch("queries file has dim " + std::to_string(dim) +
                                  ", configuration expects " + std::to_string(expected_dim));
        continue;
      }
      const auto vec = j.at("vector").get<std::vector<double>>();
      if (static_cast<int>(vec.size()) != dim)
        throw DimensionMismatch("vector of length " + std::to_string(vec.size()) +
                                " in a dim-" + std::to_string(dim) + " file");
      auto& frame = table[{j.at("video_id").get<std::string>(), j.at("frame_idx").get<int>()}];
      frame[j.at("class").get<int>()] = Eigen::Map<const QueryVector>(vec.data(), dim);
    } catch (const nlohmann::json::exception& e) {
      throw SchemaError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (dim < 0) throw SchemaError(path.string() + ": missing header line");
  return ExternalQueryProvider(dim, std::move(table));
}

inline void write_queries_jsonl(const std::filesystem::path& path, const QueryProvider& provider,
                                const std::vector<VideoRecord>& videos) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  nlohmann::ordered_json header;
  header["format"] = "catsg-queries";
  header["version"] = 1;
  header["dim"] = provider.dim();
  out << header.dump() << '\n';
  for (const auto& v : videos) {
    for (int p = 0; p < static_cast<int>(v.frames.size()); ++p) {
      for (const auto& [cls, q] : provider.frame_queries(v, p)) {
        nlohmann::ordered_json j;
        j["video_id"] = v.video_id;
        j["frame_idx"] = v.frames[static_cast<std::size_t>(p)].frame_idx;
        j["class"] = cls;
        j["vector"] = std::vector<double>(q.data(), q.data() + q.size());
        out << j.dump() << '\n';
      }
    }
  }
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace catsg
