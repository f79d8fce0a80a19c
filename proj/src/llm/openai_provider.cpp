#include <httplib.h>

#include "huddle/llm/openai_provider.hpp"

#include <nlohmann/json.hpp>

namespace huddle::llm {

OpenAiProvider::OpenAiProvider(OpenAiSettings settings) : settings_(std::move(settings)) {
  const auto& url = settings_.base_url;
  const auto scheme_end = url.find("://");
  const auto host_start = scheme_end == std::string::npos ? 0 : scheme_end + 3;
  const auto path_start = url.find('/', host_start);
  origin_ = url.substr(0, path_start);
  path_prefix_ = path_start == std::string::npos ? "" : url.substr(path_start);
  while (!path_prefix_.empty() && path_prefix_.back() == '/') path_prefix_.pop_back();
}

std::string OpenAiProvider::send(const ProviderRequest& request) {
  httplib::Client client(origin_);
  const auto timeout = request.timeout;
  client.set_connection_timeout(std::chrono::duration_cast<std::chrono::seconds>(timeout).count(),
                                static_cast<long>((timeout.count() % 1000) * 1000));
  client.set_read_timeout(std::chrono::duration_cast<std::chrono::seconds>(timeout).count(),
                          static_cast<long>((timeout.count() % 1000) * 1000));
  if (!settings_.api_key.empty()) client.set_bearer_token_auth(settings_.api_key);

  nlohmann::json body = {{"model", request.model}, {"temperature", request.temperature}};
  auto& messages = body["messages"] = nlohmann::json::array();
  for (const auto& m : request.messages) messages.push_back({{"role", m.role}, {"content", m.content}});

  auto res = client.Post(path_prefix_ + "/chat/completions", body.dump(), "application/json");
  if (!res) throw ProviderError(true, "transport", "request failed: " + httplib::to_string(res.error()));
  if (res->status == 429 || res->status >= 500)
    throw ProviderError(true, std::to_string(res->status), "provider returned " + std::to_string(res->status));
  if (res->status != 200)
    throw ProviderError(false, std::to_string(res->status), "provider returned " + std::to_string(res->status) +
                                                                ": " + res->body.substr(0, 300));
  auto parsed = nlohmann::json::parse(res->body, nullptr, false);
  try {
    return parsed.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const nlohmann::json::exception&) {
    throw ProviderError(false, "malformed_response", "provider response lacks choices[0].message.content");
  }
}

}  // namespace huddle::llm
