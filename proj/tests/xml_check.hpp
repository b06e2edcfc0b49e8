#pragma once

// Minimal XML well-formedness check: balanced, properly nested elements,
// quoted unique attributes, a single root, no stray markup characters.

#include <cctype>
#include <set>
#include <string>
#include <vector>

namespace xmlcheck {

struct Element {
  std::string name;
  std::vector<std::pair<std::string, std::string>> attrs;
};

inline bool name_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == ':' || c == '.';
}

/// Empty string when well formed, else a description of the first problem.
/// `elements` receives every start tag in document order.
inline std::string check(const std::string& doc, std::vector<Element>* elements = nullptr) {
  std::vector<std::string> stack;
  std::size_t i = 0;
  int roots = 0;
  const auto fail = [&](const std::string& why) { return why + " at offset " + std::to_string(i); };
  while (i < doc.size()) {
    if (doc[i] != '<') {
      if (doc[i] == '>') return fail("stray '>'");
      if (stack.empty() && !std::isspace(static_cast<unsigned char>(doc[i]))) return fail("text outside root");
      ++i;
      continue;
    }
    if (doc.compare(i, 5, "<?xml") == 0) {
      if (i != 0) return fail("declaration not at start");
      const auto e = doc.find("?>", i);
      if (e == std::string::npos) return fail("unterminated declaration");
      i = e + 2;
      continue;
    }
    if (doc.compare(i, 4, "<!--") == 0) {
      const auto e = doc.find("-->", i);
      if (e == std::string::npos) return fail("unterminated comment");
      i = e + 3;
      continue;
    }
    if (doc.compare(i, 2, "</") == 0) {
      std::size_t j = i + 2;
      while (j < doc.size() && name_char(doc[j])) ++j;
      const std::string name = doc.substr(i + 2, j - i - 2);
      while (j < doc.size() && std::isspace(static_cast<unsigned char>(doc[j]))) ++j;
      if (j >= doc.size() || doc[j] != '>') return fail("bad end tag");
      if (stack.empty() || stack.back() != name) return fail("mismatched </" + name + ">");
      stack.pop_back();
      i = j + 1;
      continue;
    }
    std::size_t j = i + 1;
    while (j < doc.size() && name_char(doc[j])) ++j;
    Element el{doc.substr(i + 1, j - i - 1), {}};
    if (el.name.empty()) return fail("empty tag name");
    std::set<std::string> seen;
    bool self_close = false;
    while (true) {
      while (j < doc.size() && std::isspace(static_cast<unsigned char>(doc[j]))) ++j;
      if (j >= doc.size()) return fail("unterminated tag");
      if (doc[j] == '>') {
        ++j;
        break;
      }
      if (doc.compare(j, 2, "/>") == 0) {
        self_close = true;
        j += 2;
        break;
      }
      const std::size_t a0 = j;
      while (j < doc.size() && name_char(doc[j])) ++j;
      const std::string an = doc.substr(a0, j - a0);
      if (an.empty()) return fail("bad attribute");
      if (!seen.insert(an).second) return fail("duplicate attribute " + an);
      if (j >= doc.size() || doc[j] != '=') return fail("attribute without value");
      ++j;
      if (j >= doc.size() || (doc[j] != '"' && doc[j] != '\'')) return fail("unquoted attribute");
      const char q = doc[j];
      const auto e = doc.find(q, j + 1);
      if (e == std::string::npos) return fail("unterminated attribute");
      const std::string val = doc.substr(j + 1, e - j - 1);
      if (val.find('<') != std::string::npos) return fail("'<' in attribute");
      el.attrs.emplace_back(an, val);
      j = e + 1;
    }
    if (stack.empty()) ++roots;
    if (roots > 1) return fail("more than one root");
    if (elements) elements->push_back(el);
    if (!self_close) stack.push_back(el.name);
    i = j;
  }
  if (!stack.empty()) return "unclosed <" + stack.back() + ">";
  if (roots != 1) return "no root element";
  return {};
}

inline std::string attr(const Element& e, const std::string& key) {
  for (const auto& [k, v] : e.attrs) {
    if (k == key) return v;
  }
  return {};
}

}  // namespace xmlcheck
