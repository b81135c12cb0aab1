#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "gensym/rules/ast.hpp"

namespace gensym::kb {

enum class Section : std::uint8_t { Basic, Functional, Case };
std::string_view to_string(Section s);
std::optional<Section> parse_section(std::string_view s);

/// The 13 basic-module tags and the 22 functional-module tags.
const std::vector<std::string>& basic_taxonomy();
const std::vector<std::string>& functional_taxonomy();

class KbError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct KnowledgeChunk {
  std::string chunkId;  // "<moduleTag>#<nn>"
  Section section = Section::Basic;
  std::string moduleTag;
  std::string source;  // file name relative to the ingest root
  std::string text;
  std::vector<double> embedding;
};

class EmbeddingBackend {
 public:
  virtual ~EmbeddingBackend() = default;
  virtual std::string name() const = 0;
  virtual std::size_t dimension() const = 0;
  /// Unit-norm vector, or all zeros when the text has nothing to index.
  virtual std::vector<double> embed(std::string_view text) const = 0;
};

/// Hashed bag of words: lowercased alphanumeric tokens, FNV-1a into
/// `dimension` buckets, L2-normalized.
class LexicalEmbedding : public EmbeddingBackend {
 public:
  explicit LexicalEmbedding(std::size_t dimension = 1024) : dimension_(dimension) {}
  std::string name() const override;
  std::size_t dimension() const override { return dimension_; }
  std::vector<double> embed(std::string_view text) const override;

  static std::vector<std::string> tokenize(std::string_view text);

 private:
  std::size_t dimension_;
};

/// POSTs `{"model":..,"input":..}` to `<baseUrl>/embeddings` (baseUrl
/// usually ends in /v1) and reads `data[0].embedding`.
class HttpEmbedding : public EmbeddingBackend {
 public:
  HttpEmbedding(std::string baseUrl, std::string model, std::size_t dimension, std::string apiKey = {});
  std::string name() const override { return "http:" + model_; }
  std::size_t dimension() const override { return dimension_; }
  std::vector<double> embed(std::string_view text) const override;

 private:
  std::string baseUrl_, model_, apiKey_;
  std::size_t dimension_;
};

std::uint64_t fnv1a(std::string_view s);

struct FrontMatter {
  std::map<std::string, std::string> fields;
  std::string body;
};
/// Splits a leading `---` block of `key: value` lines from the body.
FrontMatter parse_front_matter(std::string_view text);

/// Greedy packing of paragraphs (fenced code blocks stay whole) into pieces of
/// at most `maxWords` words. Oversized paragraphs are split by lines, then by
/// words.
std::vector<std::string> chunk_text(std::string_view text, std::size_t maxWords);

struct IngestOptions {
  std::size_t chunkWords = 512;
};

struct RetrievedChunk {
  const KnowledgeChunk* chunk = nullptr;
  double score = 0;
};

class KnowledgeStore {
 public:
  /// Reads every .md/.txt file under `dir` (recursively, sorted by path).
  static KnowledgeStore ingest(const std::filesystem::path& dir, const EmbeddingBackend& backend,
                               IngestOptions options = {});
  static KnowledgeStore load(const std::filesystem::path& file);
  void save(const std::filesystem::path& file) const;

  /// Top-k chunks of `section` by cosine similarity; ties go to the smaller
  /// chunk id. The backend must be the one used at ingest.
  std::vector<RetrievedChunk> retrieve(std::string_view query, const EmbeddingBackend& backend, Section section,
                                       std::size_t k) const;

  const std::vector<KnowledgeChunk>& chunks() const { return chunks_; }
  const std::string& backend_name() const { return backendName_; }
  std::size_t dimension() const { return dimension_; }

 private:
  std::vector<KnowledgeChunk> chunks_;
  std::string backendName_;
  std::size_t dimension_ = 0;
};

// ------------------------------------------------------------------ case pool

struct Evaluation {
  double successRate = 0;
  double avgDecisionCycles = 0;  // over successful runs
  int runs = 0;
};

struct Provenance {
  bool initial = true;
  int iteration = 0;
  std::string modelTag;
};

struct CaseRecord {
  int index = 0;
  rules::RuleSet rules;
  Evaluation evaluation;
  Provenance provenance;
};

/// Strictly better: higher success rate, then fewer average cycles.
bool better(const Evaluation& a, const Evaluation& b);

class UnknownCase : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Per-instance list of the best K rule sets seen so far, best first.
/// Writers are serialized internally; getters return copies.
class CasePool {
 public:
  explicit CasePool(std::size_t capacity = 3) : capacity_(capacity) {}
  CasePool(const CasePool& other);
  CasePool& operator=(const CasePool& other);

  std::size_t capacity() const { return capacity_; }
  bool contains(int caseId) const;
  CaseRecord best(int caseId) const;
  std::vector<CaseRecord> records(int caseId) const;
  std::vector<int> case_ids() const;
  /// Index the next record for `caseId` should get.
  int next_index(int caseId) const;

  /// Inserts after any equal-quality records and truncates to capacity.
  /// Returns false when the candidate did not make the cut.
  bool update(int caseId, CaseRecord candidate);
  void reset(std::optional<int> caseId = std::nullopt);

  /// Layout: <dir>/pool.json plus <dir>/case-<id>/record-<index>.{soar,json}.
  void save(const std::filesystem::path& dir) const;
  static CasePool load(const std::filesystem::path& dir);

 private:
  std::size_t capacity_;
  std::map<int, std::vector<CaseRecord>> perInstance_;
  std::map<int, int> nextIndex_;
  mutable std::shared_mutex mu_;
};

}  // namespace gensym::kb
