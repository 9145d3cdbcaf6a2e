#pragma once

// Knowledge retrieval: paragraph chunking, pluggable embedders and an exact
// cosine top-k store.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "xplan/common.hpp"

namespace xplan {

using Vector = std::vector<double>;

class Embedder {
public:
  virtual ~Embedder() = default;
  virtual Vector embed(std::string_view text) const = 0;
  virtual std::string name() const = 0;
};

/// Lowercased alphanumeric tokens hashed into a counted bag, L2-normalized.
class HashEmbedder : public Embedder {
public:
  static constexpr int kDimension = 256;

  Vector embed(std::string_view text) const override {
    Vector v(kDimension, 0.0);
    std::string tok;
    auto flush = [&] {
      if (tok.empty()) return;
      v[fnv1a(tok) % kDimension] += 1.0;
      tok.clear();
    };
    for (char c : text) {
      const auto u = static_cast<unsigned char>(c);
      if (std::isalnum(u)) tok.push_back(static_cast<char>(std::tolower(u)));
      else flush();
    }
    flush();
    double n = 0.0;
    for (double x : v) n += x * x;
    if (n == 0.0) throw domain_error("text has no tokens to embed");
    n = std::sqrt(n);
    for (double& x : v) x /= n;
    return v;
  }

  std::string name() const override { return "hash-bag-256"; }
};

inline double cosine(const Vector& u, const Vector& v) {
  if (u.size() != v.size())
    throw domain_error("cosine: dimension mismatch (" + std::to_string(u.size()) + " vs " + std::to_string(v.size()) + ")");
  double dot = 0.0, nu = 0.0, nv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += u[i] * v[i];
    nu += u[i] * u[i];
    nv += v[i] * v[i];
  }
  if (nu == 0.0 || nv == 0.0) throw domain_error("cosine: zero vector");
  if (u == v) return 1.0;
  return std::clamp(dot / (std::sqrt(nu) * std::sqrt(nv)), -1.0, 1.0);
}

struct Document {
  std::string section;
  std::string text;
};

struct Chunk {
  int id = 0;
  std::string section;
  std::string text;
  Vector embedding;
  friend bool operator==(const Chunk&, const Chunk&) = default;
};

struct RetrievalHit {
  int chunk_id = 0;
  double relatedness = 0.0;
  friend bool operator==(const RetrievalHit&, const RetrievalHit&) = default;
};

struct ChunkingConfig {
  int max_words = 120;
};

inline constexpr int kDefaultTopK = 3;
inline constexpr double kDefaultThreshold = 0.2;
inline constexpr int kStoreVersion = 1;

namespace detail {

inline std::vector<std::string> words_of(std::string_view s) {
  std::vector<std::string> out;
  std::istringstream in{std::string(s)};
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

inline std::string join_words(const std::vector<std::string>& w, std::size_t from, std::size_t to) {
  std::string out;
  for (std::size_t i = from; i < to; ++i) {
    if (i > from) out += ' ';
    out += w[i];
  }
  return out;
}

/// Paragraph split into pieces of at most `cap` words, breaking after a
/// sentence end where possible.
inline std::vector<std::string> split_paragraph(const std::string& para, int cap) {
  const auto w = words_of(para);
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start < w.size()) {
    std::size_t end = std::min(w.size(), start + static_cast<std::size_t>(cap));
    if (end < w.size()) {
      for (std::size_t k = end; k > start + 1; --k) {
        const char last = w[k - 1].back();
        if (last == '.' || last == '?' || last == '!') {
          end = k;
          break;
        }
      }
    }
    out.push_back(join_words(w, start, end));
    start = end;
  }
  return out;
}

} // namespace detail

class ChunkStore {
public:
  ChunkStore() = default;
  ChunkStore(std::vector<Chunk> chunks, std::string embedder) : chunks_(std::move(chunks)), embedder_(std::move(embedder)) {
    for (const auto& c : chunks_)
      if (c.embedding.size() != chunks_.front().embedding.size()) throw domain_error("chunk store: mixed dimensions");
  }

  const std::vector<Chunk>& chunks() const { return chunks_; }
  std::size_t size() const { return chunks_.size(); }
  const std::string& embedder_name() const { return embedder_; }

  const Chunk& chunk(int id) const {
    for (const auto& c : chunks_)
      if (c.id == id) return c;
    throw domain_error("no chunk " + std::to_string(id));
  }

  std::vector<RetrievalHit> retrieve(const Vector& query, int k, double threshold) const {
    if (k < 1) throw domain_error("retrieve: k must be at least 1");
    if (std::isnan(threshold)) throw domain_error("retrieve: threshold is not a number");
    std::vector<RetrievalHit> hits;
    for (const auto& c : chunks_) {
      const double r = cosine(query, c.embedding);
      if (r >= threshold) hits.push_back({c.id, r});
    }
    std::sort(hits.begin(), hits.end(), [](const RetrievalHit& a, const RetrievalHit& b) {
      return a.relatedness != b.relatedness ? a.relatedness > b.relatedness : a.chunk_id < b.chunk_id;
    });
    if (hits.size() > static_cast<std::size_t>(k)) hits.resize(static_cast<std::size_t>(k));
    return hits;
  }

  std::vector<RetrievalHit> retrieve(const Embedder& e, std::string_view query, int k = kDefaultTopK,
                                     double threshold = kDefaultThreshold) const {
    if (query.find_first_not_of(" \t\r\n") == std::string_view::npos) throw domain_error("retrieve: empty query");
    return retrieve(e.embed(query), k, threshold);
  }

private:
  std::vector<Chunk> chunks_;
  std::string embedder_;
};

inline ChunkStore index_corpus(const std::vector<Document>& docs, const Embedder& e, ChunkingConfig cfg = {}) {
  if (cfg.max_words < 1) throw domain_error("chunking: max_words must be positive");
  std::vector<Chunk> chunks;
  for (const auto& d : docs) {
    std::istringstream in(d.text);
    std::string line, para;
    auto flush = [&] {
      for (auto& piece : detail::split_paragraph(para, cfg.max_words)) {
        Chunk c;
        c.id = static_cast<int>(chunks.size());
        c.section = d.section;
        c.text = std::move(piece);
        c.embedding = e.embed(c.text);
        chunks.push_back(std::move(c));
      }
      para.clear();
    };
    while (std::getline(in, line)) {
      if (line.find_first_not_of(" \t\r") == std::string::npos) flush();
      else para += (para.empty() ? "" : " ") + line;
    }
    flush();
  }
  if (chunks.empty()) throw domain_error("index: corpus is empty");
  return ChunkStore(std::move(chunks), e.name());
}

/// Reads every *.txt file of a directory in name order. A leading "# Title"
/// line names the section; otherwise the file stem does.
inline std::vector<Document> load_corpus(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw domain_error("corpus directory not found: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir))
    if (entry.path().extension() == ".txt") files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  std::vector<Document> docs;
  for (const auto& f : files) {
    std::ifstream in(f);
    std::stringstream ss;
    ss << in.rdbuf();
    std::string text = ss.str();
    Document d{f.stem().string(), {}};
    if (text.rfind("# ", 0) == 0) {
      const auto nl = text.find('\n');
      d.section = text.substr(2, nl == std::string::npos ? std::string::npos : nl - 2);
      text = nl == std::string::npos ? "" : text.substr(nl + 1);
    }
    d.text = std::move(text);
    docs.push_back(std::move(d));
  }
  return docs;
}

inline nlohmann::json store_to_json(const ChunkStore& s) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& c : s.chunks())
    arr.push_back({{"id", c.id}, {"section", c.section}, {"text", c.text}, {"vector", c.embedding}});
  return {{"version", kStoreVersion}, {"embedder", s.embedder_name()}, {"chunks", arr}};
}

inline ChunkStore store_from_json(const nlohmann::json& j) {
  if (j.value("version", 0) != kStoreVersion) throw domain_error("chunk store: unsupported version");
  std::vector<Chunk> chunks;
  for (const auto& c : j.at("chunks"))
    chunks.push_back(Chunk{c.at("id").get<int>(), c.at("section").get<std::string>(), c.at("text").get<std::string>(),
                           c.at("vector").get<Vector>()});
  return ChunkStore(std::move(chunks), j.at("embedder").get<std::string>());
}

} // namespace xplan
