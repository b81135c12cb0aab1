#include "gensym/rules/extract.hpp"

#include <cctype>
#include <string>
#include <vector>

#include "gensym/rules/parser.hpp"

namespace gensym::rules {

namespace {

struct Block {
  std::string text;
  int firstLine;  // line of the block's first content line in the full text
};

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) {
      lines.push_back(text.substr(start));
      break;
    }
    lines.push_back(text.substr(start, end - start));
    start = end + 1;
  }
  return lines;
}

bool is_fence(std::string_view line) {
  std::size_t i = line.find_first_not_of(" \t");
  return i != std::string_view::npos && line.substr(i).starts_with("```");
}

bool mentions_sp(std::string_view s) {
  for (std::size_t i = 0; i + 2 <= s.size(); ++i) {
    if (s[i] != 's' || s[i + 1] != 'p') continue;
    if (i > 0 && (std::isalnum(static_cast<unsigned char>(s[i - 1])) || s[i - 1] == '_' || s[i - 1] == '-')) continue;
    std::size_t j = i + 2;
    while (j < s.size() && std::isspace(static_cast<unsigned char>(s[j]))) ++j;
    if (j < s.size() && s[j] == '{') return true;
  }
  return false;
}

// Top-level `sp {` spans in unfenced text, found by brace matching that skips
// |strings|, "doc strings" and # comments.
std::vector<Block> unfenced_blocks(std::string_view text) {
  std::vector<Block> out;
  int line = 1;
  std::size_t i = 0;
  auto at_sp = [&](std::size_t k) {
    if (k + 2 > text.size() || text[k] != 's' || text[k + 1] != 'p') return false;
    if (k > 0 && (std::isalnum(static_cast<unsigned char>(text[k - 1])) || text[k - 1] == '_' || text[k - 1] == '-'))
      return false;
    std::size_t j = k + 2;
    while (j < text.size() && std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    return j < text.size() && text[j] == '{';
  };
  while (i < text.size()) {
    if (!at_sp(i)) {
      if (text[i] == '\n') ++line;
      ++i;
      continue;
    }
    const std::size_t start = i;
    const int start_line = line;
    int depth = 0;
    bool opened = false;
    while (i < text.size()) {
      char c = text[i];
      if (c == '\n') ++line;
      if (c == '|' || c == '"') {
        ++i;
        while (i < text.size() && text[i] != c) {
          if (text[i] == '\\') ++i;
          else if (text[i] == '\n') ++line;
          ++i;
        }
      } else if (c == '#') {
        while (i < text.size() && text[i] != '\n') ++i;
        continue;
      } else if (c == '{') {
        ++depth;
        opened = true;
      } else if (c == '}') {
        --depth;
        if (opened && depth == 0) {
          ++i;
          break;
        }
      }
      ++i;
    }
    // An unterminated span still goes to the parser so the error is reported.
    out.push_back({std::string(text.substr(start, i - start)), start_line});
  }
  return out;
}

}  // namespace

RuleSet extract_productions(std::string_view text) {
  std::vector<Block> blocks;
  bool any_fence = false;
  {
    auto lines = split_lines(text);
    bool inside = false;
    Block cur;
    for (std::size_t n = 0; n < lines.size(); ++n) {
      if (is_fence(lines[n])) {
        any_fence = true;
        if (inside) {
          blocks.push_back(std::move(cur));
          cur = Block{};
        } else {
          cur.firstLine = static_cast<int>(n) + 2;
        }
        inside = !inside;
        continue;
      }
      if (inside) {
        cur.text += lines[n];
        cur.text += '\n';
      }
    }
    if (inside) blocks.push_back(std::move(cur));  // unclosed final fence
  }

  std::vector<Block> candidates;
  for (auto& b : blocks)
    if (mentions_sp(b.text)) candidates.push_back(std::move(b));
  if (candidates.empty()) candidates = unfenced_blocks(text);
  if (candidates.empty())
    throw ParseError(any_fence ? "no productions found in any code block" : "no productions found", 1, 1, "", {"sp {...}"}, "");

  RuleSet out;
  for (std::size_t k = 0; k < candidates.size(); ++k) {
    RuleSet part;
    try {
      part = parse_ruleset(candidates[k].text);
    } catch (const ParseError& e) {
      std::string where = any_fence ? "code block " + std::to_string(k + 1) : "production span " + std::to_string(k + 1);
      throw ParseError(where + ": " + e.message(), e.line(), e.column(), e.token(), e.expected(), e.context());
    }
    out = merge(out, part);
  }
  return out;
}

}  // namespace gensym::rules
