#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "gensym/loop/loop.hpp"
#include "gensym/rules/render.hpp"

namespace gensym::loop {

namespace embedded {
extern const std::string_view generator_system_txt;
extern const std::string_view generator_task_txt;
extern const std::string_view critic_system_txt;
extern const std::string_view critic_task_txt;
}  // namespace embedded

std::string render_template(std::string_view text, const std::map<std::string, std::string>& values) {
  std::string out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto open = text.find("{{", pos);
    if (open == std::string_view::npos) {
      out.append(text.substr(pos));
      break;
    }
    auto close = text.find("}}", open + 2);
    if (close == std::string_view::npos) throw std::invalid_argument("unterminated placeholder in template");
    out.append(text.substr(pos, open - pos));
    std::string key(text.substr(open + 2, close - open - 2));
    auto it = values.find(key);
    if (it == values.end()) throw std::invalid_argument("template placeholder {{" + key + "}} has no value");
    out += it->second;
    pos = close + 2;
  }
  return out;
}

PromptTemplates PromptTemplates::defaults() {
  return {std::string(embedded::generator_system_txt), std::string(embedded::generator_task_txt),
          std::string(embedded::critic_system_txt), std::string(embedded::critic_task_txt)};
}

PromptTemplates PromptTemplates::load(const std::filesystem::path& dir) {
  auto t = defaults();
  auto read = [&](const char* name, std::string& into) {
    std::ifstream in(dir / name, std::ios::binary);
    if (!in) return;
    std::stringstream ss;
    ss << in.rdbuf();
    into = ss.str();
  };
  read("generator_system.txt", t.generatorSystem);
  read("generator_task.txt", t.generatorTask);
  read("critic_system.txt", t.criticSystem);
  read("critic_task.txt", t.criticTask);
  return t;
}

namespace {

std::string trimmed(std::string_view s) {
  while (!s.empty() && (s.back() == '\n' || s.back() == ' ')) s.remove_suffix(1);
  return std::string(s);
}

std::string fixed2(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string rules_text(const rules::RuleSet& rs) {
  return trimmed(rs.sourceText.empty() ? rules::render(rs) : rs.sourceText);
}

void context_sections(std::ostringstream& os, const std::vector<kb::KnowledgeChunk>& chunks) {
  for (auto [section, marker] : {std::pair{kb::Section::Basic, kBasicMarker},
                                 std::pair{kb::Section::Functional, kFunctionalMarker}}) {
    os << marker << "\n";
    bool any = false;
    for (const auto& c : chunks) {
      if (c.section != section) continue;
      os << "[" << c.chunkId << "]\n" << trimmed(c.text) << "\n\n";
      any = true;
    }
    if (!any) os << "(none)\n\n";
  }
}

}  // namespace

Prompt build_generator_prompt(const GeneratorInput& in, const PromptTemplates& templates) {
  std::ostringstream os;
  os << kTaskMarker << "\n" << trimmed(in.taskTemplate) << "\n\n";
  context_sections(os, in.retrievedContext);
  os << kCasesMarker << "\n";
  if (in.optimalCases.empty()) os << "(none)\n\n";
  for (const auto& c : in.optimalCases) {
    os << "--- case R" << c.index << " | success rate " << fixed2(c.evaluation.successRate)
       << " | average decision cycles " << fixed2(c.evaluation.avgDecisionCycles) << " ---\n```soar\n"
       << rules_text(c.rules) << "\n```\n\n";
  }
  if (in.criticSuggestions) os << kSuggestionsMarker << "\n" << trimmed(*in.criticSuggestions) << "\n\n";
  os << kProblemMarker << "\n" << trimmed(in.problemDescription) << "\n";
  return {trimmed(templates.generatorSystem), os.str()};
}

Prompt build_critic_prompt(const CriticInput& in, const PromptTemplates& templates) {
  std::ostringstream os;
  os << kTaskMarker << "\n" << trimmed(in.criticTemplate) << "\n\n";
  context_sections(os, in.retrievedContext);
  os << kProblemMarker << "\n" << trimmed(in.problemDescription) << "\n\n";
  os << kRulesMarker << "\n```soar\n" << trimmed(in.rulesText) << "\n```\n\n";
  os << kTraceMarker << "\n" << trimmed(in.executionTrace) << "\n\n";
  os << kMetricsMarker << "\n";
  if (!in.metrics) {
    os << "not executed: the rules did not parse\n";
  } else {
    const auto& m = *in.metrics;
    os << "success rate: " << fixed2(m.evaluation.successRate) << " over " << m.evaluation.runs << " runs\n";
    if (m.evaluation.successRate > 0) {
      os << "average decision cycles: " << fixed2(m.evaluation.avgDecisionCycles) << "\n";
    } else {
      os << "average decision cycles: n/a (no successful run)\n";
    }
    os << "minimum decision cycles: " << m.minDecisionCycles << "\n";
    if (m.evaluation.successRate > 0 && m.minDecisionCycles > 0)
      os << "ratio to minimum: " << fixed2(dc_ratio(m.evaluation.avgDecisionCycles, m.minDecisionCycles)) << "\n";
    os << "cutoff: " << m.cutoff << " decision cycles\n";
  }
  return {trimmed(templates.criticSystem), os.str()};
}

double dc_ratio(double avgDecisionCycles, double minDecisionCycles) {
  if (minDecisionCycles <= 0) throw std::invalid_argument("minimum decision cycles must be positive");
  return avgDecisionCycles / minDecisionCycles;
}

std::string prompt_hash(std::string_view userPrompt) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(kb::fnv1a(userPrompt)));
  return buf;
}

}  // namespace gensym::loop
