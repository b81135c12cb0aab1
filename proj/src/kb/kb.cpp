#include "gensym/kb/kb.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <mutex>
#include <sstream>

#include <json.hpp>

#include "gensym/net/http.hpp"
#include "gensym/rules/parser.hpp"
#include "gensym/rules/render.hpp"

namespace gensym::kb {

using nlohmann::json;
namespace fs = std::filesystem;

std::string_view to_string(Section s) {
  switch (s) {
    case Section::Basic: return "basic";
    case Section::Functional: return "functional";
    case Section::Case: return "case";
  }
  return "?";
}

std::optional<Section> parse_section(std::string_view s) {
  for (Section x : {Section::Basic, Section::Functional, Section::Case})
    if (to_string(x) == s) return x;
  return std::nullopt;
}

const std::vector<std::string>& basic_taxonomy() {
  static const std::vector<std::string> tags{
      "module-01-programming-basics",       "module-02-input-data-handling",
      "module-03-operator-fundamentals",    "module-04-output-management",
      "module-05-multi-apply-data-structures", "module-06-substates-hierarchy",
      "module-07-debugging-complex-conditions", "module-08-code-organization",
      "module-09-advanced-preferences",     "module-10-sml-basics",
      "module-11-sml-events",               "module-12-reference-guide",
      "module-13-visual-ide"};
  return tags;
}

const std::vector<std::string>& functional_taxonomy() {
  static const std::vector<std::string> tags{
      "fn-01-state-naming",        "fn-02-jug-structure",      "fn-03-empty-elaboration",
      "fn-04-goal-detection",      "fn-05-halt-pattern",       "fn-06-monitor-write",
      "fn-07-fill-operator",       "fn-08-empty-operator",     "fn-09-pour-operator",
      "fn-10-pour-partial",        "fn-11-indifferent-random", "fn-12-reject-useless",
      "fn-13-best-preference",     "fn-14-worst-preference",   "fn-15-better-worse",
      "fn-16-visited-tracking",    "fn-17-visited-avoidance",  "fn-18-move-prediction",
      "fn-19-preference-hierarchy", "fn-20-last-operator-memory", "fn-21-state-copy",
      "fn-22-negated-conjunction"};
  return tags;
}

// ---------------------------------------------------------------- embedding

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::vector<std::string> LexicalEmbedding::tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

std::string LexicalEmbedding::name() const { return "lexical-fnv1a-" + std::to_string(dimension_); }

namespace {

void normalize(std::vector<double>& v) {
  double norm = 0;
  for (double x : v) norm += x * x;
  if (norm == 0) return;
  norm = std::sqrt(norm);
  for (double& x : v) x /= norm;
}

}  // namespace

std::vector<double> LexicalEmbedding::embed(std::string_view text) const {
  std::vector<double> v(dimension_, 0.0);
  for (const auto& tok : tokenize(text)) v[fnv1a(tok) % dimension_] += 1.0;
  normalize(v);
  return v;
}

HttpEmbedding::HttpEmbedding(std::string baseUrl, std::string model, std::size_t dimension, std::string apiKey)
    : baseUrl_(std::move(baseUrl)), model_(std::move(model)), apiKey_(std::move(apiKey)), dimension_(dimension) {}

std::vector<double> HttpEmbedding::embed(std::string_view text) const {
  std::vector<std::pair<std::string, std::string>> headers;
  if (!apiKey_.empty()) headers.emplace_back("Authorization", "Bearer " + apiKey_);
  json body{{"model", model_}, {"input", std::string(text)}};
  std::string base = baseUrl_;
  while (!base.empty() && base.back() == '/') base.pop_back();
  auto res = net::post_json(base + "/embeddings", headers, body.dump(), 60);
  if (res.status == 0) throw KbError("embedding request failed: " + res.error);
  if (res.status != 200) throw KbError("embedding request returned HTTP " + std::to_string(res.status));
  std::vector<double> v;
  try {
    v = json::parse(res.body).at("data").at(0).at("embedding").get<std::vector<double>>();
  } catch (const json::exception& e) {
    throw KbError(std::string("malformed embedding response: ") + e.what());
  }
  if (v.size() != dimension_)
    throw KbError("embedding has dimension " + std::to_string(v.size()) + ", expected " + std::to_string(dimension_));
  normalize(v);
  return v;
}

// ---------------------------------------------------------------- ingest

FrontMatter parse_front_matter(std::string_view text) {
  FrontMatter fm;
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line) || line.rfind("---", 0) != 0 || line.find_first_not_of('-') != std::string::npos) {
    fm.body = std::string(text);
    return fm;
  }
  bool closed = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line == "---") {
      closed = true;
      break;
    }
    auto colon = line.find(':');
    if (colon == std::string::npos) continue;
    auto key = line.substr(0, colon);
    auto value = line.substr(colon + 1);
    auto trim = [](std::string& s) {
      s.erase(0, s.find_first_not_of(" \t"));
      s.erase(s.find_last_not_of(" \t") + 1);
    };
    trim(key);
    trim(value);
    fm.fields[key] = value;
  }
  if (!closed) throw KbError("front matter is not closed with ---");
  std::stringstream rest;
  rest << in.rdbuf();
  fm.body = rest.str();
  return fm;
}

namespace {

std::size_t word_count(std::string_view s) {
  std::size_t n = 0;
  bool in = false;
  for (char c : s) {
    bool space = std::isspace(static_cast<unsigned char>(c)) != 0;
    if (!space && !in) ++n;
    in = !space;
  }
  return n;
}

std::vector<std::string> paragraphs(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  bool fenced = false;
  std::istringstream in{std::string(text)};
  std::string line;
  auto flush = [&] {
    if (word_count(cur) > 0) {
      while (!cur.empty() && cur.back() == '\n') cur.pop_back();
      out.push_back(cur);
    }
    cur.clear();
  };
  while (std::getline(in, line)) {
    bool fence = line.rfind("```", 0) == 0;
    if (!fenced && line.find_first_not_of(" \t\r") == std::string::npos) {
      flush();
      continue;
    }
    cur += line + "\n";
    if (fence) fenced = !fenced;
  }
  flush();
  return out;
}

void split_oversized(const std::string& para, std::size_t maxWords, std::vector<std::string>& out) {
  std::string cur;
  std::size_t curWords = 0;
  auto flush = [&] {
    if (curWords > 0) {
      while (!cur.empty() && cur.back() == '\n') cur.pop_back();
      out.push_back(cur);
    }
    cur.clear();
    curWords = 0;
  };
  std::istringstream in(para);
  std::string line;
  while (std::getline(in, line)) {
    std::size_t w = word_count(line);
    if (w > maxWords) {
      flush();
      std::istringstream words(line);
      std::string word;
      while (words >> word) {
        if (curWords == maxWords) flush();
        cur += (curWords ? " " : "") + word;
        ++curWords;
      }
      flush();
      continue;
    }
    if (curWords + w > maxWords) flush();
    cur += line + "\n";
    curWords += w;
  }
  flush();
}

}  // namespace

std::vector<std::string> chunk_text(std::string_view text, std::size_t maxWords) {
  if (maxWords == 0) throw KbError("chunk size must be positive");
  std::vector<std::string> out;
  std::string cur;
  std::size_t curWords = 0;
  for (const auto& p : paragraphs(text)) {
    std::size_t w = word_count(p);
    if (w > maxWords) {
      if (curWords) out.push_back(cur);
      cur.clear();
      curWords = 0;
      split_oversized(p, maxWords, out);
      continue;
    }
    if (curWords + w > maxWords) {
      out.push_back(cur);
      cur.clear();
      curWords = 0;
    }
    cur += (cur.empty() ? "" : "\n\n") + p;
    curWords += w;
  }
  if (curWords) out.push_back(cur);
  return out;
}

KnowledgeStore KnowledgeStore::ingest(const fs::path& dir, const EmbeddingBackend& backend, IngestOptions options) {
  if (!fs::is_directory(dir)) throw KbError("not a directory: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    auto ext = e.path().extension().string();
    if (ext == ".md" || ext == ".txt") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());

  KnowledgeStore store;
  store.backendName_ = backend.name();
  store.dimension_ = backend.dimension();
  std::map<std::string, int> perTag;
  for (const auto& file : files) {
    const std::string rel = fs::relative(file, dir).generic_string();
    std::ifstream in(file, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    FrontMatter fm;
    try {
      fm = parse_front_matter(ss.str());
    } catch (const KbError& e) {
      throw KbError(rel + ": " + e.what());
    }
    if (word_count(fm.body) == 0) throw KbError(rel + ": empty file");
    auto sectionIt = fm.fields.find("section");
    auto tagIt = fm.fields.find("moduleTag");
    if (sectionIt == fm.fields.end() || tagIt == fm.fields.end())
      throw KbError(rel + ": front matter needs section and moduleTag");
    auto section = parse_section(sectionIt->second);
    if (!section || *section == Section::Case) throw KbError(rel + ": unknown section '" + sectionIt->second + "'");
    const auto& taxonomy = *section == Section::Basic ? basic_taxonomy() : functional_taxonomy();
    const std::string& tag = tagIt->second;
    if (std::find(taxonomy.begin(), taxonomy.end(), tag) == taxonomy.end())
      throw KbError(rel + ": unknown moduleTag '" + tag + "' for section " + std::string(to_string(*section)));

    for (auto& piece : chunk_text(fm.body, options.chunkWords)) {
      KnowledgeChunk c;
      int n = perTag[tag]++;
      char suffix[8];
      std::snprintf(suffix, sizeof suffix, "#%02d", n);
      c.chunkId = tag + suffix;
      c.section = *section;
      c.moduleTag = tag;
      c.source = rel;
      c.text = std::move(piece);
      c.embedding = backend.embed(c.text);
      if (c.embedding.size() != store.dimension_) throw KbError(rel + ": backend returned a vector of the wrong size");
      store.chunks_.push_back(std::move(c));
    }
  }
  return store;
}

void KnowledgeStore::save(const fs::path& file) const {
  json doc;
  doc["backend"] = backendName_;
  doc["dimension"] = dimension_;
  doc["chunks"] = json::array();
  for (const auto& c : chunks_)
    doc["chunks"].push_back({{"chunkId", c.chunkId},
                             {"section", to_string(c.section)},
                             {"moduleTag", c.moduleTag},
                             {"source", c.source},
                             {"text", c.text},
                             {"embedding", c.embedding}});
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  std::ofstream out(file, std::ios::binary);
  if (!out) throw KbError("cannot write " + file.string());
  out << doc.dump() << "\n";
}

KnowledgeStore KnowledgeStore::load(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw KbError("cannot open store " + file.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw KbError("bad store file " + file.string() + ": " + e.what());
  }
  KnowledgeStore s;
  s.backendName_ = doc.at("backend").get<std::string>();
  s.dimension_ = doc.at("dimension").get<std::size_t>();
  for (const auto& j : doc.at("chunks")) {
    KnowledgeChunk c;
    c.chunkId = j.at("chunkId").get<std::string>();
    auto sec = parse_section(j.at("section").get<std::string>());
    if (!sec) throw KbError("bad section in store chunk " + c.chunkId);
    c.section = *sec;
    c.moduleTag = j.at("moduleTag").get<std::string>();
    c.source = j.value("source", "");
    c.text = j.at("text").get<std::string>();
    c.embedding = j.at("embedding").get<std::vector<double>>();
    if (c.embedding.size() != s.dimension_) throw KbError("chunk " + c.chunkId + " has the wrong dimension");
    s.chunks_.push_back(std::move(c));
  }
  return s;
}

std::vector<RetrievedChunk> KnowledgeStore::retrieve(std::string_view query, const EmbeddingBackend& backend,
                                                     Section section, std::size_t k) const {
  if (!chunks_.empty() && (backend.name() != backendName_ || backend.dimension() != dimension_))
    throw KbError("store was built with " + backendName_ + ", query backend is " + backend.name());
  auto q = backend.embed(query);
  std::vector<RetrievedChunk> hits;
  for (const auto& c : chunks_) {
    if (c.section != section) continue;
    double dot = 0;
    for (std::size_t i = 0; i < q.size(); ++i) dot += q[i] * c.embedding[i];
    hits.push_back({&c, dot});
  }
  std::sort(hits.begin(), hits.end(), [](const RetrievedChunk& a, const RetrievedChunk& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.chunk->chunkId < b.chunk->chunkId;
  });
  if (hits.size() > k) hits.resize(k);
  return hits;
}

// ---------------------------------------------------------------- case pool

bool better(const Evaluation& a, const Evaluation& b) {
  if (a.successRate != b.successRate) return a.successRate > b.successRate;
  return a.avgDecisionCycles < b.avgDecisionCycles;
}

CasePool::CasePool(const CasePool& other) {
  std::shared_lock lock(other.mu_);
  capacity_ = other.capacity_;
  perInstance_ = other.perInstance_;
  nextIndex_ = other.nextIndex_;
}

CasePool& CasePool::operator=(const CasePool& other) {
  if (this == &other) return *this;
  std::scoped_lock lock(mu_);
  std::shared_lock otherLock(other.mu_);
  capacity_ = other.capacity_;
  perInstance_ = other.perInstance_;
  nextIndex_ = other.nextIndex_;
  return *this;
}

bool CasePool::contains(int caseId) const {
  std::shared_lock lock(mu_);
  auto it = perInstance_.find(caseId);
  return it != perInstance_.end() && !it->second.empty();
}

CaseRecord CasePool::best(int caseId) const {
  std::shared_lock lock(mu_);
  auto it = perInstance_.find(caseId);
  if (it == perInstance_.end() || it->second.empty())
    throw UnknownCase("case pool has no record for case " + std::to_string(caseId));
  return it->second.front();
}

std::vector<CaseRecord> CasePool::records(int caseId) const {
  std::shared_lock lock(mu_);
  auto it = perInstance_.find(caseId);
  return it == perInstance_.end() ? std::vector<CaseRecord>{} : it->second;
}

std::vector<int> CasePool::case_ids() const {
  std::shared_lock lock(mu_);
  std::vector<int> out;
  for (const auto& [id, recs] : perInstance_)
    if (!recs.empty()) out.push_back(id);
  return out;
}

int CasePool::next_index(int caseId) const {
  std::shared_lock lock(mu_);
  auto it = nextIndex_.find(caseId);
  return it == nextIndex_.end() ? 0 : it->second;
}

bool CasePool::update(int caseId, CaseRecord candidate) {
  std::scoped_lock lock(mu_);
  auto& recs = perInstance_[caseId];
  int& next = nextIndex_[caseId];
  next = std::max(next, candidate.index + 1);
  auto pos = std::find_if(recs.begin(), recs.end(),
                          [&](const CaseRecord& r) { return better(candidate.evaluation, r.evaluation); });
  auto offset = pos - recs.begin();
  if (static_cast<std::size_t>(offset) >= capacity_) return false;
  recs.insert(pos, std::move(candidate));
  if (recs.size() > capacity_) recs.resize(capacity_);
  return true;
}

void CasePool::reset(std::optional<int> caseId) {
  std::scoped_lock lock(mu_);
  if (caseId) {
    perInstance_.erase(*caseId);
    nextIndex_.erase(*caseId);
  } else {
    perInstance_.clear();
    nextIndex_.clear();
  }
}

namespace {

json to_json(const CaseRecord& r) {
  json j = json::object();
  j["index"] = r.index;
  j["evaluation"] = json::object({{"successRate", r.evaluation.successRate},
                                  {"avgDecisionCycles", r.evaluation.avgDecisionCycles},
                                  {"runs", r.evaluation.runs}});
  j["provenance"] = json::object({{"kind", r.provenance.initial ? "initial" : "generated"},
                                  {"iteration", r.provenance.iteration},
                                  {"modelTag", r.provenance.modelTag}});
  return j;
}

}  // namespace

void CasePool::save(const fs::path& dir) const {
  std::shared_lock lock(mu_);
  fs::create_directories(dir);
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_directory() && e.path().filename().string().rfind("case-", 0) == 0) fs::remove_all(e.path());
  json meta{{"capacity", capacity_}, {"nextIndex", json::object()}};
  for (const auto& [id, n] : nextIndex_) meta["nextIndex"][std::to_string(id)] = n;
  for (const auto& [id, recs] : perInstance_) {
    fs::path caseDir = dir / ("case-" + std::to_string(id));
    fs::create_directories(caseDir);
    for (std::size_t rank = 0; rank < recs.size(); ++rank) {
      const auto& r = recs[rank];
      const std::string stem = "record-" + std::to_string(r.index);
      std::ofstream(caseDir / (stem + ".soar"), std::ios::binary)
          << (r.rules.sourceText.empty() ? rules::render(r.rules) : r.rules.sourceText);
      json j = to_json(r);
      j["rank"] = rank;
      std::ofstream(caseDir / (stem + ".json"), std::ios::binary) << j.dump(2) << "\n";
    }
  }
  std::ofstream(dir / "pool.json", std::ios::binary) << meta.dump(2) << "\n";
}

CasePool CasePool::load(const fs::path& dir) {
  std::ifstream metaIn(dir / "pool.json");
  if (!metaIn) throw KbError("no case pool at " + dir.string());
  json meta = json::parse(metaIn);
  CasePool pool(meta.value("capacity", std::size_t{3}));
  for (const auto& e : fs::directory_iterator(dir)) {
    const auto name = e.path().filename().string();
    if (!e.is_directory() || name.rfind("case-", 0) != 0) continue;
    int id = std::stoi(name.substr(5));
    std::vector<std::pair<std::size_t, CaseRecord>> ranked;
    for (const auto& f : fs::directory_iterator(e.path())) {
      if (f.path().extension() != ".json") continue;
      std::ifstream jin(f.path());
      json j = json::parse(jin);
      CaseRecord r;
      r.index = j.at("index").get<int>();
      r.evaluation.successRate = j.at("evaluation").at("successRate").get<double>();
      r.evaluation.avgDecisionCycles = j.at("evaluation").at("avgDecisionCycles").get<double>();
      r.evaluation.runs = j.at("evaluation").at("runs").get<int>();
      r.provenance.initial = j.at("provenance").at("kind").get<std::string>() == "initial";
      r.provenance.iteration = j.at("provenance").value("iteration", 0);
      r.provenance.modelTag = j.at("provenance").value("modelTag", "");
      auto soar = f.path();
      soar.replace_extension(".soar");
      std::ifstream sin(soar, std::ios::binary);
      std::stringstream ss;
      ss << sin.rdbuf();
      try {
        r.rules = rules::parse_ruleset(ss.str());
      } catch (const std::exception& ex) {
        throw KbError(soar.string() + ": " + ex.what());
      }
      ranked.emplace_back(j.value("rank", std::size_t{0}), std::move(r));
    }
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    auto& recs = pool.perInstance_[id];
    for (auto& [rank, r] : ranked) recs.push_back(std::move(r));
  }
  const json nextIndex = meta.value("nextIndex", json::object());
  for (const auto& [key, n] : nextIndex.items()) pool.nextIndex_[std::stoi(key)] = n.get<int>();
  for (const auto& [id, recs] : pool.perInstance_)
    for (const auto& r : recs) pool.nextIndex_[id] = std::max(pool.nextIndex_[id], r.index + 1);
  return pool;
}

}  // namespace gensym::kb
