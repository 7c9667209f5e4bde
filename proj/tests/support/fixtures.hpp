#pragma once

#include <string>
#include <vector>

#include "budgetflow/catalog.hpp"

namespace budgetflow::testing {

// Prices as quoted by the vendors, per million tokens.
inline ModelSpec deepseek_v3() { return {"deepseek-chat", 1, 0.27, 1.10, "deepseek"}; }
inline ModelSpec gpt41_nano(int tier = 2) { return {"gpt-4.1-nano", tier, 0.10, 0.40, "openai"}; }

inline ModelCatalog two_tier_catalog() { return ModelCatalog({deepseek_v3(), gpt41_nano()}); }

}  // namespace budgetflow::testing
