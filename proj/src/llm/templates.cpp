#include "huddle/llm/templates.hpp"

#include <cctype>

#include "huddle/common/error.hpp"

namespace huddle::llm {

namespace {

bool is_name_start(char c) { return c == '_' || (c >= 'a' && c <= 'z'); }
bool is_name_char(char c) { return is_name_start(c) || (c >= '0' && c <= '9'); }

// Calls on_text for literal runs and on_name for each placeholder.
template <class Text, class Name>
void scan(const std::string& body, Text on_text, Name on_name) {
  std::size_t i = 0, literal_start = 0;
  while (i < body.size()) {
    if (body[i] == '{' && i + 1 < body.size() && is_name_start(body[i + 1])) {
      std::size_t j = i + 1;
      while (j < body.size() && is_name_char(body[j])) ++j;
      if (j < body.size() && body[j] == '}') {
        on_text(std::string_view(body).substr(literal_start, i - literal_start));
        on_name(body.substr(i + 1, j - i - 1));
        i = literal_start = j + 1;
        continue;
      }
    }
    ++i;
  }
  on_text(std::string_view(body).substr(literal_start));
}

const char* kDirectiveFormat = R"(
Reply in plain, warm, conversational prose of two to four sentences. When this
step calls for an action, append exactly one directive block after the prose:

```directive
{"kind": "<KIND>", "text": "<text>"}
```
)";

const char* kSolicitationPreamble = R"(You are {agent_name}, a casual and friendly assistant who helps a small team make their meetings more inclusive. You are talking privately with {owner_name} right after the team's meeting.

Your job is to gather feedback about the meeting. Start with inclusion: who got to speak, who was talked over, who was quiet. Move on to other topics only when {owner_name} has more to say.

Teammates who can receive individual feedback: {teammates}
Speaking time in the meeting: {speaking_summary}
Attendance: {attendance_summary}

Everything you draft is shared as your own feedback, based on this conversation, and never as a message from {owner_name}. Write feedback text that can be shared as-is: specific, kind, about behaviour, and without naming who raised it. Feedback goes either to everyone in the meeting or to one teammate. Nothing is sent until {owner_name} presses Approve.
)";

const char* kIhpPreamble = R"(You are {agent_name}, a casual and friendly assistant who helps a small team make their meetings more inclusive. You are talking privately with {owner_name} shortly before the team's next meeting.

Feedback for this conversation. Present each item as your own observation. You do not know who raised any of it; never guess, never hint, and never say things like "your colleague said".
{feedback_items}

How the last meeting went for {owner_name}: {speaking_summary}
Attendance: {attendance_summary}
Goal adopted so far: {adopted_goal}

Plan for this conversation:
1. Talk through the feedback.
2. Help {owner_name} settle on one concrete goal for the upcoming meeting that follows from the feedback. You may suggest goals, but the choice is theirs. Never pressure them, and accept a goal they phrase themselves.
3. Once a goal is adopted, ask them to recall a specific time when their behaviour did not match that goal, and help them turn it into a short first-person reflection.
)";

struct StateText {
  const char* id;
  const char* state;
  bool ihp;
  const char* instruction;
};

const StateText kStates[] = {
    {"solicitation.init", "INIT", false,
     "You have just opened the conversation. Listen to the first answer and ask a follow-up question "
     "about participation. Draft feedback with DRAFT_FEEDBACK once there is something worth sharing. "
     "If they have nothing to share, close with MARK_COMPLETE.\n"
     "Allowed kinds now: NONE, DRAFT_FEEDBACK, MARK_COMPLETE."},
    {"solicitation.probing", "PROBING", false,
     "Keep asking open questions about who got to take part. When there is something worth sharing, draft it with "
     "DRAFT_FEEDBACK and set \"target\" to \"everyone\" or a teammate's name; leave \"target\" out if the "
     "recipient is not clear yet. When they have nothing more to add, close with MARK_COMPLETE.\n"
     "Allowed kinds now: NONE, DRAFT_FEEDBACK, MARK_COMPLETE."},
    {"solicitation.drafting", "DRAFTING", false,
     "You have proposed wording for a piece of feedback. Refine it with DRAFT_FEEDBACK if asked. If the "
     "wording is settled but the recipient is unclear, reply with NONE and ask who it is for.\n"
     "Allowed kinds now: NONE, DRAFT_FEEDBACK, MARK_COMPLETE."},
    {"solicitation.targeting", "TARGETING", false,
     "Ask whether this feedback is for everyone or for one teammate, then issue DRAFT_FEEDBACK again with "
     "the agreed text and \"target\".\n"
     "Allowed kinds now: NONE, DRAFT_FEEDBACK, MARK_COMPLETE."},
    {"solicitation.await_approval", "AWAIT_APPROVAL", false,
     "A draft is waiting for the user to press Approve or Discard. If they ask for changes, issue "
     "DRAFT_FEEDBACK with the revised text. Do not treat chat messages as approval.\n"
     "Allowed kinds now: NONE, DRAFT_FEEDBACK."},
    {"ihp.present_feedback", "PRESENT_FEEDBACK", true,
     "You have just shared the feedback. Ask what they make of it and listen. When they are ready, move "
     "on to choosing a goal; you may suggest one with PROPOSE_GOAL.\n"
     "Allowed kinds now: NONE, PROPOSE_GOAL."},
    {"ihp.goal_elicitation", "GOAL_ELICITATION", true,
     "Help them choose a goal for the next meeting. When they state one, or when you have a concrete "
     "suggestion, propose it with PROPOSE_GOAL (set \"source\" to \"user\" if they phrased it). They adopt "
     "it by pressing Adopt; never assume adoption.\n"
     "Allowed kinds now: NONE, PROPOSE_GOAL."},
    {"ihp.await_adoption", "AWAIT_ADOPTION", true,
     "A goal has been proposed and is waiting for them to press Adopt. If they hesitate or decline, accept "
     "that without pressure and explore what would suit them better (NONE). If they want different "
     "wording, propose it with PROPOSE_GOAL.\n"
     "Allowed kinds now: NONE, PROPOSE_GOAL."},
    {"ihp.transgression_elicitation", "TRANSGRESSION_ELICITATION", true,
     "They adopted the goal above. Ask them to recall a specific time when they did not meet it. When they "
     "describe one, draft a short first-person reflection with DRAFT_REFLECTION.\n"
     "Allowed kinds now: NONE, DRAFT_REFLECTION."},
    {"ihp.await_reflection_approval", "AWAIT_REFLECTION_APPROVAL", true,
     "A reflection is waiting for them to press Approve. Revise it with DRAFT_REFLECTION if they ask; "
     "otherwise answer briefly.\n"
     "Allowed kinds now: NONE, DRAFT_REFLECTION."},
};

}  // namespace

std::set<std::string> PromptTemplate::placeholders() const {
  std::set<std::string> names;
  scan(body, [](std::string_view) {}, [&](std::string name) { names.insert(std::move(name)); });
  return names;
}

std::string render_prompt(const PromptTemplate& tmpl, const Bindings& bindings) {
  std::string missing;
  for (const auto& name : tmpl.placeholders())
    if (!bindings.contains(name)) missing += (missing.empty() ? "" : ", ") + name;
  if (!missing.empty())
    fail(ErrorCode::validation, "template " + tmpl.id + " is missing bindings: " + missing, missing);
  std::string out;
  scan(tmpl.body, [&](std::string_view text) { out.append(text); },
       [&](const std::string& name) { out.append(bindings.at(name)); });
  return out;
}

TemplateRegistry TemplateRegistry::builtin() {
  TemplateRegistry registry;
  for (const auto& s : kStates) {
    std::string body = s.ihp ? kIhpPreamble : kSolicitationPreamble;
    body += kDirectiveFormat;
    body += "\nRight now: ";
    body += s.instruction;
    body += '\n';
    registry.add({s.id, s.state, std::move(body)});
  }
  return registry;
}

void TemplateRegistry::add(PromptTemplate tmpl) {
  auto id = tmpl.id;
  templates_[id] = std::move(tmpl);
}

const PromptTemplate& TemplateRegistry::get(const std::string& id) const {
  auto it = templates_.find(id);
  if (it == templates_.end()) fail(ErrorCode::not_found, "unknown template " + id);
  return it->second;
}

std::string TemplateRegistry::render(const std::string& id, const Bindings& bindings) const {
  return render_prompt(get(id), bindings);
}

std::vector<std::string> TemplateRegistry::ids() const {
  std::vector<std::string> out;
  for (const auto& [id, _] : templates_) out.push_back(id);
  return out;
}

}  // namespace huddle::llm
