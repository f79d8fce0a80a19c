#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "huddle/common/domain.hpp"
#include "huddle/common/ids.hpp"

namespace huddle::router {

enum class TargetKind { everyone, individual };

NLOHMANN_JSON_SERIALIZE_ENUM(TargetKind, {
    {TargetKind::everyone, "EVERYONE"},
    {TargetKind::individual, "INDIVIDUAL"},
})

struct Target {
  TargetKind kind = TargetKind::everyone;
  std::optional<UserId> recipient;  // set iff individual

  static Target everyone() { return {}; }
  static Target individual(UserId id) { return {TargetKind::individual, std::move(id)}; }
  bool operator==(const Target&) const = default;
};

void to_json(nlohmann::json& j, const Target& t);
void from_json(const nlohmann::json& j, Target& t);

/// Where a meeting sits in its team's sequence. Records only flow forward.
struct MeetingRef {
  MeetingId meeting_id;
  TeamId team_id;
  int cycle_index = 0;
};

struct FeedbackRecord {
  RecordId record_id;
  UserId author_id;
  TeamId team_id;
  MeetingId origin_meeting_id;
  int origin_cycle = 0;
  std::string text;
  Target target;
  std::int64_t created_at_ms = 0;
  std::optional<MeetingId> delivered_in;  // first bundle it went out in
  std::vector<UserId> recipients;         // fixed at submission
  std::map<UserId, MeetingId> delivered_to;

  bool undelivered() const { return delivered_to.size() < recipients.size(); }
};

enum class ItemScope { everyone, to_you, agent_default };

NLOHMANN_JSON_SERIALIZE_ENUM(ItemScope, {
    {ItemScope::everyone, "EVERYONE"},
    {ItemScope::to_you, "TO_YOU"},
    {ItemScope::agent_default, "AGENT_DEFAULT"},
})

struct BundleItem {
  std::string text;
  ItemScope scope = ItemScope::everyone;
  bool operator==(const BundleItem&) const = default;
};

struct DeliveryBundle {
  UserId recipient_id;
  MeetingId meeting_id;
  std::vector<BundleItem> items;
  bool operator==(const DeliveryBundle&) const = default;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(BundleItem, text, scope)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(DeliveryBundle, recipient_id, meeting_id, items)

inline constexpr const char* kDefaultFeedback =
    "One thing worth working on as a group: ensuring everyone can participate, so each person "
    "has room to contribute their ideas.";

/// Author-facing view of a record. Includes the target, never other authors.
nlohmann::json outgoing_view(const FeedbackRecord& r);

/// Display names and user ids from the roster that occur in the text,
/// case-insensitively. Drafting uses this to warn before anything is shared.
std::vector<std::string> mentioned_members(const std::string& text, const Roster& roster);

class FeedbackRouter {
 public:
  explicit FeedbackRouter(std::string default_text = kDefaultFeedback)
      : default_text_(std::move(default_text)) {}

  RecordId submit(const UserId& author, const Roster& roster, const MeetingRef& origin,
                  std::string text, const Target& target, std::int64_t now_ms);

  /// Delivers everything pending for the recipient from earlier cycles. A
  /// second call for the same meeting returns the stored bundle unchanged.
  const DeliveryBundle& build_bundle(const UserId& recipient, const Roster& roster,
                                     const MeetingRef& next);

  /// Same contents build_bundle would produce, without marking anything.
  DeliveryBundle preview_bundle(const UserId& recipient, const Roster& roster,
                                const MeetingRef& next) const;

  const DeliveryBundle* stored_bundle(const UserId& recipient, const MeetingId& meeting) const;
  std::vector<const FeedbackRecord*> outgoing(const UserId& author) const;
  const FeedbackRecord* find(const RecordId& id) const;
  const std::vector<FeedbackRecord>& records() const { return records_; }
  const std::map<std::pair<UserId, MeetingId>, DeliveryBundle>& bundles() const { return bundles_; }

  friend void to_json(nlohmann::json& j, const FeedbackRouter& r);
  friend void from_json(const nlohmann::json& j, FeedbackRouter& r);

 private:
  std::vector<std::size_t> pending_for(const UserId& recipient, const MeetingRef& next) const;
  DeliveryBundle assemble(const UserId& recipient, const MeetingRef& next,
                          const std::vector<std::size_t>& picked) const;

  std::string default_text_;
  IdSource ids_;
  std::vector<FeedbackRecord> records_;
  std::map<std::pair<UserId, MeetingId>, DeliveryBundle> bundles_;
};

}  // namespace huddle::router
