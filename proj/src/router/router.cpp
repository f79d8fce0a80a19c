#include "huddle/router/router.hpp"

#include <algorithm>
#include <cctype>

#include "huddle/common/error.hpp"

namespace huddle::router {

void to_json(nlohmann::json& j, const Target& t) {
  j = {{"kind", t.kind}};
  if (t.recipient) j["recipient_id"] = *t.recipient;
}

void from_json(const nlohmann::json& j, Target& t) {
  if (!j.is_object()) fail(ErrorCode::validation, "target must be an object");
  t.kind = parse_enum<TargetKind>(j.at("kind"), "target.kind");
  t.recipient.reset();
  if (t.kind == TargetKind::individual) {
    if (!j.contains("recipient_id") || !j["recipient_id"].is_string())
      fail(ErrorCode::validation, "INDIVIDUAL target needs recipient_id");
    t.recipient = j["recipient_id"].get<UserId>();
  }
}

namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

nlohmann::json record_json(const FeedbackRecord& r) {
  nlohmann::json j = {{"record_id", r.record_id},
                      {"author_id", r.author_id},
                      {"team_id", r.team_id},
                      {"origin_meeting_id", r.origin_meeting_id},
                      {"origin_cycle", r.origin_cycle},
                      {"text", r.text},
                      {"target", r.target},
                      {"created_at", r.created_at_ms},
                      {"delivered_in", nullptr},
                      {"recipients", r.recipients},
                      {"delivered_to", nlohmann::json::object()}};
  if (r.delivered_in) j["delivered_in"] = *r.delivered_in;
  for (const auto& [user, meeting] : r.delivered_to) j["delivered_to"][user.value] = meeting;
  return j;
}

FeedbackRecord record_from(const nlohmann::json& j) {
  FeedbackRecord r;
  r.record_id = j.at("record_id").get<RecordId>();
  r.author_id = j.at("author_id").get<UserId>();
  r.team_id = j.at("team_id").get<TeamId>();
  r.origin_meeting_id = j.at("origin_meeting_id").get<MeetingId>();
  r.origin_cycle = j.at("origin_cycle").get<int>();
  r.text = j.at("text").get<std::string>();
  r.target = j.at("target").get<Target>();
  r.created_at_ms = j.at("created_at").get<std::int64_t>();
  if (!j.at("delivered_in").is_null()) r.delivered_in = j["delivered_in"].get<MeetingId>();
  r.recipients = j.at("recipients").get<std::vector<UserId>>();
  for (const auto& [user, meeting] : j.at("delivered_to").items())
    r.delivered_to.emplace(UserId{user}, meeting.get<MeetingId>());
  return r;
}

}  // namespace

nlohmann::json outgoing_view(const FeedbackRecord& r) {
  nlohmann::json j = {{"record_id", r.record_id},
                      {"text", r.text},
                      {"target", r.target},
                      {"origin_meeting_id", r.origin_meeting_id},
                      {"created_at", r.created_at_ms},
                      {"delivered_in", nullptr},
                      {"undelivered", r.undelivered()}};
  if (r.delivered_in) j["delivered_in"] = *r.delivered_in;
  return j;
}

std::vector<std::string> mentioned_members(const std::string& text, const Roster& roster) {
  const auto haystack = lower(text);
  std::vector<std::string> found;
  for (const auto& m : roster.members) {
    for (const auto& needle : {m.display_name, m.user_id.value}) {
      if (!needle.empty() && haystack.find(lower(needle)) != std::string::npos) {
        found.push_back(needle);
        break;
      }
    }
  }
  return found;
}

RecordId FeedbackRouter::submit(const UserId& author, const Roster& roster, const MeetingRef& origin,
                                std::string text, const Target& target, std::int64_t now_ms) {
  if (!roster.contains(author)) fail(ErrorCode::validation, "author is not on the team", author.value);
  if (text.find_first_not_of(" \t\r\n") == std::string::npos)
    fail(ErrorCode::validation, "feedback text is empty");
  if (target.kind == TargetKind::individual) {
    if (!target.recipient) fail(ErrorCode::validation, "INDIVIDUAL target needs a recipient");
    if (*target.recipient == author)
      fail(ErrorCode::validation, "feedback cannot target its author", author.value);
    if (!roster.contains(*target.recipient))
      fail(ErrorCode::validation, "recipient is not on the team", target.recipient->value);
  } else if (target.recipient) {
    fail(ErrorCode::validation, "EVERYONE target takes no recipient");
  }

  FeedbackRecord r;
  r.record_id = ids_.next_id<RecordId>("record");
  r.author_id = author;
  r.team_id = roster.team_id;
  r.origin_meeting_id = origin.meeting_id;
  r.origin_cycle = origin.cycle_index;
  r.text = std::move(text);
  r.target = target;
  r.created_at_ms = now_ms;
  if (target.kind == TargetKind::individual) {
    r.recipients.push_back(*target.recipient);
  } else {
    for (const auto& m : roster.members)
      if (m.user_id != author) r.recipients.push_back(m.user_id);
  }
  records_.push_back(std::move(r));
  return records_.back().record_id;
}

std::vector<std::size_t> FeedbackRouter::pending_for(const UserId& recipient,
                                                     const MeetingRef& next) const {
  std::vector<std::size_t> picked;
  for (std::size_t i = 0; i < records_.size(); ++i) {
    const auto& r = records_[i];
    if (r.team_id != next.team_id || r.origin_cycle >= next.cycle_index) continue;
    if (r.delivered_to.contains(recipient)) continue;
    if (std::find(r.recipients.begin(), r.recipients.end(), recipient) == r.recipients.end()) continue;
    picked.push_back(i);
  }
  return picked;
}

DeliveryBundle FeedbackRouter::assemble(const UserId& recipient, const MeetingRef& next,
                                        const std::vector<std::size_t>& picked) const {
  DeliveryBundle b{recipient, next.meeting_id, {}};
  for (auto i : picked) {
    const auto& r = records_[i];
    b.items.push_back({r.text, r.target.kind == TargetKind::individual ? ItemScope::to_you
                                                                       : ItemScope::everyone});
  }
  b.items.push_back({default_text_, ItemScope::agent_default});
  return b;
}

const DeliveryBundle& FeedbackRouter::build_bundle(const UserId& recipient, const Roster& roster,
                                                   const MeetingRef& next) {
  if (!roster.contains(recipient)) fail(ErrorCode::not_found, "unknown recipient", recipient.value);
  const auto key = std::make_pair(recipient, next.meeting_id);
  if (auto it = bundles_.find(key); it != bundles_.end()) return it->second;

  const auto picked = pending_for(recipient, next);
  auto bundle = assemble(recipient, next, picked);
  for (auto i : picked) {
    auto& r = records_[i];
    r.delivered_to.emplace(recipient, next.meeting_id);
    if (!r.delivered_in) r.delivered_in = next.meeting_id;
  }
  return bundles_.emplace(key, std::move(bundle)).first->second;
}

DeliveryBundle FeedbackRouter::preview_bundle(const UserId& recipient, const Roster& roster,
                                              const MeetingRef& next) const {
  if (!roster.contains(recipient)) fail(ErrorCode::not_found, "unknown recipient", recipient.value);
  if (auto* stored = stored_bundle(recipient, next.meeting_id)) return *stored;
  return assemble(recipient, next, pending_for(recipient, next));
}

const DeliveryBundle* FeedbackRouter::stored_bundle(const UserId& recipient,
                                                    const MeetingId& meeting) const {
  auto it = bundles_.find({recipient, meeting});
  return it == bundles_.end() ? nullptr : &it->second;
}

std::vector<const FeedbackRecord*> FeedbackRouter::outgoing(const UserId& author) const {
  std::vector<const FeedbackRecord*> out;
  for (const auto& r : records_)
    if (r.author_id == author) out.push_back(&r);
  return out;
}

const FeedbackRecord* FeedbackRouter::find(const RecordId& id) const {
  for (const auto& r : records_)
    if (r.record_id == id) return &r;
  return nullptr;
}

void to_json(nlohmann::json& j, const FeedbackRouter& r) {
  j = {{"ids", r.ids_}, {"records", nlohmann::json::array()}, {"bundles", nlohmann::json::array()}};
  for (const auto& rec : r.records_) j["records"].push_back(record_json(rec));
  for (const auto& [key, bundle] : r.bundles_) j["bundles"].push_back(bundle);
}

void from_json(const nlohmann::json& j, FeedbackRouter& r) {
  r.ids_ = j.at("ids").get<IdSource>();
  r.records_.clear();
  r.bundles_.clear();
  for (const auto& rec : j.at("records")) r.records_.push_back(record_from(rec));
  for (const auto& b : j.at("bundles")) {
    auto bundle = b.get<DeliveryBundle>();
    auto key = std::make_pair(bundle.recipient_id, bundle.meeting_id);
    r.bundles_.emplace(std::move(key), std::move(bundle));
  }
}

}  // namespace huddle::router
