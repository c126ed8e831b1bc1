#include "topkrf/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#include "topkrf/random.hpp"

namespace topkrf {
namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  return s;
}

bool is_missing_token(std::string_view s) {
  s = trim(s);
  return s.empty() || s == "NA" || s == "N/A" || s == "?";
}

// Parses the whole cell as a double; false on trailing garbage.
bool parse_number(std::string_view s, double& out) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  if (s.empty()) return false;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

bool is_missing(std::string_view s) {
  if (is_missing_token(s)) return true;
  double v = 0.0;
  return parse_number(s, v) && !std::isfinite(v);
}

std::size_t floor_count(double fraction, std::size_t n) {
  // The epsilon absorbs representation error such as 0.7 * 10 = 6.9999...
  return static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n) + 1e-9));
}

std::vector<std::size_t> shuffled_rows(std::size_t n, std::uint64_t seed, StreamPurpose purpose) {
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Engine rng = make_engine(seed, purpose);
  std::shuffle(perm.begin(), perm.end(), rng);
  return perm;
}

}  // namespace

Dataset::Dataset(std::vector<double> features, std::vector<double> response, std::vector<std::string> feature_names)
    : features_(std::move(features)), response_(std::move(response)), feature_names_(std::move(feature_names)) {
  if (response_.empty()) throw std::invalid_argument("dataset must have at least one row");
  if (feature_names_.empty()) throw std::invalid_argument("dataset must have at least one feature");
  if (features_.size() != response_.size() * feature_names_.size()) {
    throw std::invalid_argument("feature matrix size does not match n x p");
  }
  for (double v : features_) {
    if (!std::isfinite(v)) throw std::invalid_argument("dataset features must be finite");
  }
  for (double v : response_) {
    if (!std::isfinite(v)) throw std::invalid_argument("dataset response must be finite");
  }
  std::unordered_set<std::string> seen;
  for (const auto& name : feature_names_) {
    if (!seen.insert(name).second) throw std::invalid_argument("duplicate feature name: " + name);
  }
}

Dataset Dataset::select(std::span<const std::size_t> rows) const {
  std::vector<double> x;
  std::vector<double> y;
  x.reserve(rows.size() * p());
  y.reserve(rows.size());
  for (std::size_t r : rows) {
    if (r >= n()) throw std::out_of_range("row index out of range");
    const auto src = row(r);
    x.insert(x.end(), src.begin(), src.end());
    y.push_back(response_[r]);
  }
  return Dataset(std::move(x), std::move(y), feature_names_);
}

std::vector<std::vector<std::string>> parse_csv_records(const std::string& text) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;

  auto end_record = [&] {
    record.push_back(std::move(field));
    field.clear();
    // A blank line yields a single empty field; skip it.
    if (!(record.size() == 1 && record.front().empty() && !field_started)) records.push_back(std::move(record));
    record.clear();
    field_started = false;
  };

  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        field += c;
      }
      continue;
    }
    switch (c) {
      case '"':
        in_quotes = true;
        field_started = true;
        break;
      case ',':
        record.push_back(std::move(field));
        field.clear();
        field_started = true;
        break;
      case '\r':
        break;
      case '\n':
        end_record();
        break;
      default:
        field += c;
        field_started = true;
    }
  }
  if (in_quotes) throw std::runtime_error("csv: unterminated quoted field");
  if (field_started || !field.empty() || !record.empty()) end_record();
  return records;
}

namespace {

// target == nullptr: feature-only table with a zero response.
Dataset parse_table(const std::string& text, const std::string* target, const std::string& drop,
                    CategoricalPolicy policy) {
  auto records = parse_csv_records(text);
  if (records.empty()) throw std::runtime_error("csv: missing header row");

  std::vector<std::string> header = records.front();
  if (!header.empty() && header[0].rfind("\xEF\xBB\xBF", 0) == 0) header[0].erase(0, 3);
  for (auto& h : header) h = std::string(trim(h));
  {
    std::unordered_set<std::string> seen;
    for (const auto& h : header) {
      if (!seen.insert(h).second) throw std::runtime_error("csv: duplicate column name '" + h + "'");
    }
  }
  std::size_t target_col = header.size();
  if (target != nullptr) {
    const auto it = std::find(header.begin(), header.end(), *target);
    if (it == header.end()) throw std::runtime_error("csv: target column '" + *target + "' not found");
    target_col = static_cast<std::size_t>(it - header.begin());
  } else if (!drop.empty()) {
    target_col = static_cast<std::size_t>(std::find(header.begin(), header.end(), drop) - header.begin());
  }
  if (header.size() - (target_col < header.size() ? 1 : 0) < 1) {
    throw std::runtime_error("csv: no feature columns besides the target");
  }

  std::vector<const std::vector<std::string>*> rows;
  std::size_t dropped = 0;
  for (std::size_t r = 1; r < records.size(); ++r) {
    const auto& rec = records[r];
    if (rec.size() != header.size()) {
      throw std::runtime_error("csv: line " + std::to_string(r + 1) + " has " + std::to_string(rec.size()) +
                               " fields, expected " + std::to_string(header.size()));
    }
    if (std::any_of(rec.begin(), rec.end(), [](const std::string& cell) { return is_missing(cell); })) {
      ++dropped;
      continue;
    }
    rows.push_back(&rec);
  }
  if (rows.empty()) throw std::runtime_error("csv: zero rows left after dropping rows with missing values");

  const std::size_t n = rows.size();
  const std::size_t cols = header.size();
  std::vector<std::vector<double>> numeric(cols, std::vector<double>(n));
  std::vector<bool> categorical(cols, false);
  for (std::size_t c = 0; c < cols; ++c) {
    for (std::size_t r = 0; r < n; ++r) {
      if (!parse_number((*rows[r])[c], numeric[c][r])) {
        categorical[c] = true;
        break;
      }
    }
  }
  if (target != nullptr && categorical[target_col]) {
    throw std::runtime_error("csv: target column '" + *target + "' is not numeric");
  }

  std::vector<std::string> names;
  std::vector<std::vector<double>> columns;
  for (std::size_t c = 0; c < cols; ++c) {
    if (c == target_col) continue;
    if (!categorical[c]) {
      names.push_back(header[c]);
      columns.push_back(std::move(numeric[c]));
      continue;
    }
    if (policy == CategoricalPolicy::reject) {
      throw std::runtime_error("csv: column '" + header[c] + "' is categorical and the policy is reject");
    }
    std::set<std::string> levels;
    for (std::size_t r = 0; r < n; ++r) levels.insert(std::string(trim((*rows[r])[c])));
    std::map<std::string, std::size_t> slot;
    for (const auto& level : levels) {
      slot.emplace(level, columns.size());
      names.push_back(header[c] + "=" + level);
      columns.emplace_back(n, 0.0);
    }
    for (std::size_t r = 0; r < n; ++r) columns[slot.at(std::string(trim((*rows[r])[c])))][r] = 1.0;
  }

  const std::size_t p = columns.size();
  std::vector<double> x(n * p);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t j = 0; j < p; ++j) x[r * p + j] = columns[j][r];
  }
  std::vector<double> y(n, 0.0);
  if (target != nullptr) {
    for (std::size_t r = 0; r < n; ++r) parse_number((*rows[r])[target_col], y[r]);
  }

  Dataset d(std::move(x), std::move(y), std::move(names));
  d.set_dropped_rows(dropped);
  return d;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open csv file: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace

Dataset parse_csv(const std::string& text, const std::string& target, CategoricalPolicy policy) {
  return parse_table(text, &target, {}, policy);
}

Dataset load_csv_features(const std::filesystem::path& path, const std::string& drop_column, CategoricalPolicy policy) {
  return parse_table(read_file(path), nullptr, drop_column, policy);
}

Dataset load_csv(const std::filesystem::path& path, const std::string& target, CategoricalPolicy policy) {
  return parse_csv(read_file(path), target, policy);
}

void SplitSpec::validate() const {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw std::invalid_argument("train_fraction must lie in (0,1)");
  if (!(holdout_fraction > 0.0 && holdout_fraction < 1.0)) {
    throw std::invalid_argument("holdout fraction must lie in (0,1)");
  }
  if (mode == Mode::kfold && folds < 2) throw std::invalid_argument("k-fold needs at least 2 folds");
}

TrainTest train_test_split(const Dataset& d, const SplitSpec& spec) {
  spec.validate();
  if (spec.mode != SplitSpec::Mode::random_shuffle) {
    throw std::invalid_argument("train_test_split requires random-shuffle mode");
  }
  const std::size_t n_train = floor_count(spec.train_fraction, d.n());
  if (n_train == 0 || n_train >= d.n()) throw std::invalid_argument("train/test split leaves an empty partition");

  const auto perm = shuffled_rows(d.n(), spec.seed, StreamPurpose::shuffle);
  TrainTest out;
  out.train_rows.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_train));
  out.test_rows.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_train), perm.end());
  std::sort(out.train_rows.begin(), out.train_rows.end());
  std::sort(out.test_rows.begin(), out.test_rows.end());
  out.train = d.select(out.train_rows);
  out.test = d.select(out.test_rows);
  return out;
}

TrainTest holdout_split(const Dataset& d, double holdout_fraction, std::uint64_t seed) {
  if (!(holdout_fraction > 0.0 && holdout_fraction < 1.0)) {
    throw std::invalid_argument("holdout fraction must lie in (0,1)");
  }
  const std::size_t n_valid = floor_count(holdout_fraction, d.n());
  if (n_valid == 0 || n_valid >= d.n()) throw std::invalid_argument("holdout split leaves an empty partition");
  const auto perm = shuffled_rows(d.n(), seed, StreamPurpose::shuffle);
  TrainTest out;
  out.test_rows.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_valid));
  out.train_rows.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_valid), perm.end());
  std::sort(out.train_rows.begin(), out.train_rows.end());
  std::sort(out.test_rows.begin(), out.test_rows.end());
  out.train = d.select(out.train_rows);
  out.test = d.select(out.test_rows);
  return out;
}

std::vector<std::vector<std::size_t>> kfold_indices(std::size_t n, std::size_t folds, std::uint64_t seed) {
  if (folds < 2) throw std::invalid_argument("k-fold needs at least 2 folds");
  if (n < folds) throw std::invalid_argument("k-fold needs n >= K");
  const auto perm = shuffled_rows(n, seed, StreamPurpose::shuffle);
  std::vector<std::vector<std::size_t>> out(folds);
  std::size_t pos = 0;
  for (std::size_t f = 0; f < folds; ++f) {
    const std::size_t size = n / folds + (f < n % folds ? 1 : 0);
    out[f].assign(perm.begin() + static_cast<std::ptrdiff_t>(pos),
                  perm.begin() + static_cast<std::ptrdiff_t>(pos + size));
    std::sort(out[f].begin(), out[f].end());
    pos += size;
  }
  return out;
}

Dataset subsample(const Dataset& d, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw std::invalid_argument("subsample fraction must lie in (0,1]");
  const std::size_t m = floor_count(fraction, d.n());
  if (m == 0) throw std::invalid_argument("subsample is empty");
  auto perm = shuffled_rows(d.n(), seed, StreamPurpose::subsample);
  perm.resize(m);
  std::sort(perm.begin(), perm.end());
  Dataset out = d.select(perm);
  return out;
}

}  // namespace topkrf
