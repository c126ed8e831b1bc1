#include "topkrf/model_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <stdexcept>

namespace topkrf {
namespace {

static_assert(std::endian::native == std::endian::little, "model format is little-endian");

template <typename T>
void put(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
void put_array(std::ostream& out, const std::vector<T>& v) {
  put<std::uint64_t>(out, v.size());
  out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(T)));
}

template <typename T>
T get(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw std::runtime_error("model file truncated");
  return v;
}

template <typename T>
std::vector<T> get_array(std::istream& in, std::uint64_t limit) {
  const auto size = get<std::uint64_t>(in);
  if (size > limit) throw std::runtime_error("model file: array length out of range");
  std::vector<T> v(size);
  in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(size * sizeof(T)));
  if (!in) throw std::runtime_error("model file truncated");
  return v;
}

constexpr std::uint64_t kMaxRows = std::uint64_t{1} << 32;

}  // namespace

nlohmann::json hyperparams_to_json(const Hyperparams& hp) {
  nlohmann::json j;
  j["n_trees"] = hp.n_trees;
  if (hp.max_features.kind == MaxFeatures::Kind::fraction) {
    j["max_features"] = hp.max_features.fraction;
  } else {
    j["max_features"] = hp.max_features.to_string();
  }
  j["min_samples_leaf"] = hp.min_samples_leaf;
  j["min_samples_split"] = hp.min_samples_split;
  j["max_depth"] = hp.max_depth ? nlohmann::json(*hp.max_depth) : nlohmann::json(nullptr);
  j["seed"] = hp.seed;
  return j;
}

Hyperparams hyperparams_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw std::invalid_argument("hyperparams: expected a JSON object");
  static const std::set<std::string> known = {"n_trees",           "max_features", "min_samples_leaf",
                                              "min_samples_split", "max_depth",    "seed"};
  for (const auto& [key, value] : j.items()) {
    if (!known.contains(key)) throw std::invalid_argument("hyperparams: unknown key '" + key + "'");
  }
  Hyperparams hp;
  auto count = [&](const char* key, std::size_t& dst) {
    if (!j.contains(key)) return;
    const auto& v = j.at(key);
    if (!v.is_number_unsigned()) throw std::invalid_argument(std::string("hyperparams: '") + key + "' must be a non-negative integer");
    dst = v.get<std::size_t>();
  };
  count("n_trees", hp.n_trees);
  count("min_samples_leaf", hp.min_samples_leaf);
  count("min_samples_split", hp.min_samples_split);
  if (j.contains("max_depth") && !j.at("max_depth").is_null()) {
    std::size_t depth = 0;
    count("max_depth", depth);
    hp.max_depth = depth;
  }
  if (j.contains("seed")) {
    if (!j.at("seed").is_number_unsigned()) throw std::invalid_argument("hyperparams: 'seed' must be a non-negative integer");
    hp.seed = j.at("seed").get<std::uint64_t>();
  }
  if (j.contains("max_features")) {
    const auto& v = j.at("max_features");
    if (v.is_string()) {
      hp.max_features = MaxFeatures::parse(v.get<std::string>());
    } else if (v.is_number()) {
      const double f = v.get<double>();
      if (!(f > 0.0 && f <= 1.0)) throw std::invalid_argument("hyperparams: 'max_features' fraction must lie in (0,1]");
      hp.max_features = MaxFeatures::of(f);
    } else {
      throw std::invalid_argument("hyperparams: 'max_features' must be a string or a number");
    }
  }
  try {
    hp.validate();
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(std::string("hyperparams: ") + e.what());
  }
  return hp;
}

void write_forest(std::ostream& out, const Forest& forest) {
  out.write(kModelMagic, sizeof(kModelMagic));
  put<std::uint32_t>(out, kModelFormatVersion);
  nlohmann::json header;
  header["hyperparams"] = hyperparams_to_json(forest.hyperparams());
  header["n"] = forest.n();
  header["p"] = forest.p();
  header["n_trees"] = forest.trees().size();
  header["feature_names"] = forest.feature_names();
  const std::string text = header.dump();
  put<std::uint64_t>(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  put_array(out, forest.training_response());
  for (const auto& tree : forest.trees()) {
    put<std::uint64_t>(out, tree.nodes().size());
    for (const auto& node : tree.nodes()) {
      put<std::int32_t>(out, node.feature);
      put<double>(out, node.threshold);
      put<std::int32_t>(out, node.left);
      put<std::int32_t>(out, node.right);
      put<std::int32_t>(out, node.leaf);
    }
    put_array(out, tree.leaf_offsets());
    put_array(out, tree.leaf_members());
  }
  if (!out) throw std::runtime_error("failed writing model");
}

Forest read_forest(std::istream& in) {
  char magic[sizeof(kModelMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kModelMagic, sizeof(magic)) != 0) throw std::runtime_error("not a topkrf model file");
  const auto version = get<std::uint32_t>(in);
  if (version != kModelFormatVersion) {
    throw std::runtime_error("unsupported model format version " + std::to_string(version));
  }
  const auto header_size = get<std::uint64_t>(in);
  if (header_size > (std::uint64_t{1} << 30)) throw std::runtime_error("model header too large");
  std::string text(header_size, '\0');
  in.read(text.data(), static_cast<std::streamsize>(header_size));
  if (!in) throw std::runtime_error("model file truncated");
  const auto header = nlohmann::json::parse(text);
  const Hyperparams hp = hyperparams_from_json(header.at("hyperparams"));
  const auto names = header.at("feature_names").get<std::vector<std::string>>();
  const auto n_trees = header.at("n_trees").get<std::size_t>();
  const auto n = header.at("n").get<std::uint64_t>();

  auto response = get_array<double>(in, kMaxRows);
  if (response.size() != n) throw std::runtime_error("model file: response length mismatch");
  std::vector<Tree> trees;
  trees.reserve(n_trees);
  for (std::size_t b = 0; b < n_trees; ++b) {
    const auto node_count = get<std::uint64_t>(in);
    if (node_count > 2 * kMaxRows) throw std::runtime_error("model file: node count out of range");
    std::vector<Tree::Node> nodes(node_count);
    for (auto& node : nodes) {
      node.feature = get<std::int32_t>(in);
      node.threshold = get<double>(in);
      node.left = get<std::int32_t>(in);
      node.right = get<std::int32_t>(in);
      node.leaf = get<std::int32_t>(in);
      if (node.feature >= static_cast<std::int32_t>(names.size())) throw std::runtime_error("model file: bad feature index");
    }
    auto offsets = get_array<std::uint32_t>(in, kMaxRows + 1);
    auto members = get_array<std::uint32_t>(in, kMaxRows);
    for (auto m : members) {
      if (m >= n) throw std::runtime_error("model file: leaf member out of range");
    }
    trees.emplace_back(std::move(nodes), std::move(offsets), std::move(members));
  }
  return Forest(std::move(trees), std::move(response), hp, names);
}

void save_forest(const std::filesystem::path& path, const Forest& forest) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write model file: " + path.string());
  write_forest(out, forest);
}

Forest load_forest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open model file: " + path.string());
  return read_forest(in);
}

nlohmann::json forest_to_json(const Forest& forest) {
  nlohmann::json j;
  j["format_version"] = kModelFormatVersion;
  j["hyperparams"] = hyperparams_to_json(forest.hyperparams());
  j["feature_names"] = forest.feature_names();
  j["training_response"] = forest.training_response();
  auto& trees = j["trees"] = nlohmann::json::array();
  for (const auto& tree : forest.trees()) {
    nlohmann::json t;
    auto& nodes = t["nodes"] = nlohmann::json::array();
    for (const auto& node : tree.nodes()) {
      if (node.is_leaf()) {
        nodes.push_back({{"leaf", node.leaf}});
      } else {
        nodes.push_back({{"feature", node.feature}, {"threshold", node.threshold}, {"left", node.left}, {"right", node.right}});
      }
    }
    auto& leaves = t["leaves"] = nlohmann::json::array();
    for (std::size_t l = 0; l < tree.num_leaves(); ++l) {
      const auto m = tree.members(l);
      leaves.push_back(std::vector<std::uint32_t>(m.begin(), m.end()));
    }
    trees.push_back(std::move(t));
  }
  return j;
}

}  // namespace topkrf
