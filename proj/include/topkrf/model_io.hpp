#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include <json.hpp>

#include "topkrf/forest.hpp"

namespace topkrf {

inline constexpr char kModelMagic[8] = {'T', 'O', 'P', 'K', 'R', 'F', '\x00', '\x01'};
inline constexpr std::uint32_t kModelFormatVersion = 1;

nlohmann::json hyperparams_to_json(const Hyperparams& hp);
/// Unknown keys are rejected with a message naming the key.
Hyperparams hyperparams_from_json(const nlohmann::json& j);

/// Layout is documented in docs/model_format.md.
void write_forest(std::ostream& out, const Forest& forest);
Forest read_forest(std::istream& in);

void save_forest(const std::filesystem::path& path, const Forest& forest);
Forest load_forest(const std::filesystem::path& path);

/// Whole forest as JSON (debugging aid; not read back).
nlohmann::json forest_to_json(const Forest& forest);

}  // namespace topkrf
