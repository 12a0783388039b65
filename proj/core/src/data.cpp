#include "modn/data.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <istream>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "modn/errors.hpp"
#include "modn/rng.hpp"

namespace modn {
namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::vector<std::string> split_line(std::string_view line, char delimiter) {
  std::vector<std::string> cells;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(delimiter, start);
    const std::string_view cell =
        line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start);
    std::string_view t = trim(cell);
    if (t.size() >= 2 && t.front() == '"' && t.back() == '"') t = t.substr(1, t.size() - 2);
    cells.emplace_back(t);
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return cells;
}

bool parse_number(std::string_view s, double& out) {
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size() && std::isfinite(out);
}

bool contains(const std::vector<std::size_t>& v, std::size_t x) {
  return std::find(v.begin(), v.end(), x) != v.end();
}

std::string canonical_key(std::string_view name) {
  std::string key;
  for (char ch : name) {
    if (ch == ' ' || ch == '_' || ch == '-') continue;
    key.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
  }
  return key;
}

CsvSchema label_last() { return CsvSchema{}; }

CsvSchema with_header() {
  CsvSchema s;
  s.has_header = true;
  return s;
}

CsvSchema label_first() {
  CsvSchema s;
  s.label_index = 0;
  return s;
}

CsvSchema glass_schema() {
  CsvSchema s;
  s.ignored_columns = {0};  // running id
  return s;
}

CsvSchema car_schema() {
  CsvSchema s;
  s.categorical_columns = {0, 1, 2, 3, 4, 5};
  return s;
}

std::vector<DatasetDescriptor> build_registry() {
  auto make = [](std::string name, std::string display, std::size_t train, std::size_t test,
                 Index classes, Index dims, Index m, double as, double at, int iterations,
                 CsvSchema schema, ReferenceScore modnf, std::optional<ReferenceScore> mlp,
                 std::optional<ReferenceScore> dnm) {
    DatasetDescriptor d;
    d.file_name = name + ".csv";
    d.name = std::move(name);
    d.display_name = std::move(display);
    d.train_count = train;
    d.test_count = test;
    d.classes = classes;
    d.dims = dims;
    d.dendrites = m;
    d.synaptic_scale = as;
    d.telodendron_scale = at;
    d.iterations = iterations;
    d.schema = std::move(schema);
    d.modnf = modnf;
    d.mlp = mlp;
    d.dnm = dnm;
    return d;
  };
  using R = ReferenceScore;
  std::vector<DatasetDescriptor> r;
  r.push_back(make("breast_cancer", "Breast cancer", 546, 137, 2, 9, 24, 8, 1.5, 300, label_last(),
                   R{0.9984, 0.9854}, R{0.8364, 0.8397}, R{0.9966, 0.9824}));
  r.push_back(make("blood_transfusion", "Blood transfusion", 598, 150, 2, 4, 32, 10, 1, 300,
                   with_header(), R{0.8479, 0.7967}, R{0.7660, 0.7393}, R{0.7532, 0.7860}));
  r.push_back(make("heart_disease", "Heart disease", 212, 91, 2, 13, 48, 8, 1.5, 400, label_last(),
                   R{0.9031, 0.8147}, R{0.6011, 0.6612}, R{0.9063, 0.7853}));
  r.push_back(make("raisin", "Raisin grains", 720, 180, 2, 7, 8, 5, 1, 400, with_header(),
                   R{0.9103, 0.8489}, R{0.6645, 0.5854}, R{0.9426, 0.8793}));
  r.push_back(make("caesarian", "Caesarian section", 64, 16, 2, 5, 16, 1, 0.9, 400, label_last(),
                   R{0.6853, 0.7271}, R{0.4978, 0.4521}, R{0.7189, 0.5479}));
  r.push_back(make("glass", "Glass identification", 171, 43, 6, 9, 55, 10, 1, 400, glass_schema(),
                   R{0.8439, 0.4775}, R{0.6312, 0.2930}, std::nullopt));
  r.push_back(make("wine", "Wine", 142, 36, 3, 13, 28, 10, 1, 300, label_first(), R{0.8442, 0.6601},
                   R{0.7151, 0.5389}, std::nullopt));
  r.push_back(make("car", "Car evaluation", 1209, 519, 4, 6, 32, 10, 1, 300, car_schema(),
                   R{0.9176, 0.7439}, R{0.7842, 0.6683}, std::nullopt));
  r.push_back(make("iris", "Iris", 90, 60, 3, 4, 12, 5, 1, 300, label_last(), R{0.9345, 0.7906},
                   R{0.6349, 0.4117}, std::nullopt));
  r.push_back(make("seeds", "Seeds", 168, 42, 3, 7, 16, 10, 1, 400, label_last(), R{0.9587, 0.8087},
                   R{0.6882, 0.4944}, std::nullopt));
  r.push_back(make("ecoli", "Ecoli", 228, 99, 5, 7, 30, 10, 1, 400, label_last(),
                   R{0.8154, 0.4845}, R{0.5657, 0.2872}, std::nullopt));
  return r;
}

const std::unordered_map<std::string, std::string>& aliases() {
  static const std::unordered_map<std::string, std::string> table = {
      {"breast", "breast_cancer"},     {"breastcancerwisconsin", "breast_cancer"},
      {"blood", "blood_transfusion"},  {"transfusion", "blood_transfusion"},
      {"heart", "heart_disease"},      {"cleveland", "heart_disease"},
      {"raisingrains", "raisin"},      {"caesariansection", "caesarian"},
      {"glassidentification", "glass"}, {"carevaluation", "car"},
  };
  return table;
}

}  // namespace

RawDataset parse_csv(std::istream& in, const CsvSchema& schema, std::string_view source) {
  const std::string src(source);
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;
  std::vector<std::string> header;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no == 1 && line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
    if (trim(line).empty()) continue;
    auto cells = split_line(line, schema.delimiter);
    if (schema.has_header && header.empty()) {
      header = std::move(cells);
      continue;
    }
    rows.push_back(std::move(cells));
    line_numbers.push_back(line_no);
  }
  if (rows.empty()) throw ParseError(src + ": no data rows", line_no == 0 ? 1 : line_no, 1);

  const std::size_t width = schema.has_header ? header.size() : rows.front().size();
  std::size_t label_col = width - 1;
  if (schema.label_name) {
    if (!schema.has_header) throw UsageError("label_name requires a header row");
    const auto it = std::find(header.begin(), header.end(), *schema.label_name);
    if (it == header.end())
      throw ParseError(src + ": no column named '" + *schema.label_name + "'", 1, 1);
    label_col = static_cast<std::size_t>(it - header.begin());
  } else if (schema.label_index) {
    label_col = *schema.label_index;
  }
  if (label_col >= width) throw ParseError(src + ": label column out of range", line_numbers[0], width);

  std::vector<std::size_t> feature_cols;
  for (std::size_t c = 0; c < width; ++c)
    if (c != label_col && !contains(schema.ignored_columns, c)) feature_cols.push_back(c);

  RawDataset raw;
  raw.features.resize(static_cast<Index>(rows.size()), static_cast<Index>(feature_cols.size()));
  raw.labels.reserve(rows.size());
  std::unordered_map<std::string, Index> class_index;
  std::vector<std::unordered_map<std::string, double>> categories(feature_cols.size());
  for (std::size_t k = 0; k < feature_cols.size(); ++k)
    raw.feature_names.push_back(schema.has_header ? header[feature_cols[k]]
                                                  : "x" + std::to_string(k + 1));

  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto& cells = rows[r];
    const std::size_t row_no = line_numbers[r];
    if (cells.size() != width)
      throw ParseError(src + ": expected " + std::to_string(width) + " columns, found " +
                           std::to_string(cells.size()),
                       row_no, std::min(cells.size(), width) + 1);
    const std::string& label = cells[label_col];
    if (label.empty()) throw ParseError(src + ": blank label", row_no, label_col + 1);
    auto [it, inserted] = class_index.try_emplace(label, static_cast<Index>(raw.classes.size()));
    if (inserted) raw.classes.push_back(label);
    raw.labels.push_back(it->second);

    for (std::size_t k = 0; k < feature_cols.size(); ++k) {
      const std::size_t c = feature_cols[k];
      const std::string& cell = cells[c];
      double value = 0.0;
      if (contains(schema.categorical_columns, c)) {
        if (cell.empty()) throw ParseError(src + ": blank categorical cell", row_no, c + 1);
        auto [cat, fresh] = categories[k].try_emplace(cell, static_cast<double>(categories[k].size()));
        value = cat->second;
      } else if (!parse_number(cell, value)) {
        throw ParseError(src + ": non-numeric value '" + cell + "'", row_no, c + 1);
      }
      raw.features(static_cast<Index>(r), static_cast<Index>(k)) = value;
    }
  }
  return raw;
}

RawDataset load_csv(const std::filesystem::path& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw ParseError(path.string() + ": cannot open file", 0, 0);
  return parse_csv(in, schema, path.string());
}

NormalizationStats NormalizationStats::fit(const Eigen::Ref<const Eigen::MatrixXd>& features) {
  if (features.rows() < 1) throw UsageError("cannot fit normalization on zero rows");
  return NormalizationStats{features.colwise().minCoeff().transpose(),
                            features.colwise().maxCoeff().transpose()};
}

Eigen::MatrixXd NormalizationStats::apply(const Eigen::Ref<const Eigen::MatrixXd>& features) const {
  if (features.cols() != min.size()) throw ShapeError("feature count does not match the statistics");
  Eigen::MatrixXd out(features.rows(), features.cols());
  for (Index c = 0; c < features.cols(); ++c) {
    const double lo = min(c), span = max(c) - min(c);
    if (!(span > 0.0)) {
      out.col(c).setConstant(0.5);
      continue;
    }
    out.col(c) = ((features.col(c).array() - lo) / span).min(1.0).max(0.0).matrix();
  }
  return out;
}

std::vector<Index> NormalizationStats::constant_features() const {
  std::vector<Index> out;
  for (Index c = 0; c < min.size(); ++c)
    if (!(max(c) > min(c))) out.push_back(c);
  return out;
}

std::pair<LabeledDataset, LabeledDataset> split_and_normalize(const RawDataset& raw,
                                                              const SplitSpec& spec) {
  const auto n = static_cast<std::size_t>(raw.rows());
  if (spec.train_count + spec.test_count != n)
    throw UsageError("split counts " + std::to_string(spec.train_count) + " + " +
                     std::to_string(spec.test_count) + " do not sum to " + std::to_string(n) +
                     " rows");
  if (spec.train_count == 0) throw UsageError("training portion is empty");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(spec.seed);
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);

  auto gather = [&](std::size_t begin, std::size_t end) {
    Eigen::MatrixXd x(static_cast<Index>(end - begin), raw.dims());
    LabeledDataset part;
    for (std::size_t r = begin; r < end; ++r) {
      x.row(static_cast<Index>(r - begin)) = raw.features.row(static_cast<Index>(order[r]));
      part.labels.push_back(raw.labels[order[r]]);
      part.source_rows.push_back(order[r]);
    }
    part.classes = raw.classes;
    part.one_hot = Eigen::MatrixXd::Zero(x.rows(), raw.class_count());
    for (Index r = 0; r < x.rows(); ++r) part.one_hot(r, part.labels[static_cast<std::size_t>(r)]) = 1.0;
    return std::make_pair(std::move(part), std::move(x));
  };

  auto [train, train_x] = gather(0, spec.train_count);
  auto [test, test_x] = gather(spec.train_count, n);
  const NormalizationStats stats = NormalizationStats::fit(train_x);
  train.features = stats.apply(train_x);
  test.features = stats.apply(test_x);
  train.stats = stats;
  test.stats = stats;
  return {std::move(train), std::move(test)};
}

std::span<const DatasetDescriptor> dataset_registry() {
  static const std::vector<DatasetDescriptor> registry = build_registry();
  return registry;
}

const DatasetDescriptor* find_dataset(std::string_view name) {
  std::string key = canonical_key(name);
  if (const auto it = aliases().find(key); it != aliases().end()) key = canonical_key(it->second);
  for (const DatasetDescriptor& d : dataset_registry())
    if (canonical_key(d.name) == key || canonical_key(d.display_name) == key) return &d;
  return nullptr;
}

}  // namespace modn
