#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "huddle/llm/chat.hpp"

namespace huddle::llm {

struct PromptTemplate {
  std::string id;
  std::string state;  // conversation state the template serves
  std::string body;   // {name} placeholders, name = [a-z_][a-z0-9_]*; other braces are literal

  /// Placeholder names referenced in the body, sorted and unique.
  std::set<std::string> placeholders() const;
};

/// Pure substitution. Raises a validation error naming every placeholder that
/// has no binding.
std::string render_prompt(const PromptTemplate& tmpl, const Bindings& bindings);

class TemplateRegistry {
 public:
  /// The solicitation and goal-setting templates, one per state that accepts
  /// user messages.
  static TemplateRegistry builtin();

  void add(PromptTemplate tmpl);
  bool contains(const std::string& id) const { return templates_.contains(id); }
  const PromptTemplate& get(const std::string& id) const;
  std::string render(const std::string& id, const Bindings& bindings) const;
  std::vector<std::string> ids() const;

 private:
  std::map<std::string, PromptTemplate> templates_;
};

}  // namespace huddle::llm
