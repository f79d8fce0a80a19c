#pragma once

#include <string>

#include "huddle/llm/provider.hpp"

namespace huddle::llm {

struct OpenAiSettings {
  std::string base_url = "https://api.openai.com/v1";
  std::string api_key;
};

/// Chat-completions client for OpenAI-compatible endpoints.
class OpenAiProvider : public ChatProvider {
 public:
  explicit OpenAiProvider(OpenAiSettings settings);
  std::string send(const ProviderRequest& request) override;

 private:
  OpenAiSettings settings_;
  std::string origin_;       // scheme://host[:port]
  std::string path_prefix_;  // e.g. /v1
};

}  // namespace huddle::llm
