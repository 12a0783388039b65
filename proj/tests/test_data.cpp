#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <set>
#include <sstream>

#include "modn/data.hpp"
#include "modn/errors.hpp"

using namespace modn;

namespace {

RawDataset parse(const std::string& text, const CsvSchema& schema = {}) {
  std::istringstream in(text);
  return parse_csv(in, schema);
}

void expect_parse_error(const std::string& text, std::size_t row, std::size_t col, const CsvSchema& schema = {}) {
  try {
    parse(text, schema);
    ADD_FAILURE() << "no error for: " << text;
  } catch (const ParseError& e) {
    EXPECT_EQ(e.row(), row) << e.what();
    EXPECT_EQ(e.column(), col) << e.what();
  }
}

}  // namespace

TEST(Csv, LabelLastByDefault) {
  const RawDataset d = parse("1,2,a\n3, 4 ,b\n\n5,6,a\n");
  EXPECT_EQ(d.rows(), 3);
  EXPECT_EQ(d.dims(), 2);
  EXPECT_EQ(d.classes, (std::vector<std::string>{"a", "b"}));
  EXPECT_EQ(d.labels, (std::vector<Index>{0, 1, 0}));
  EXPECT_EQ(d.features(1, 1), 4.0);
  EXPECT_EQ(d.feature_names[0], "x1");
}

TEST(Csv, HeaderLabelNameAndIgnored) {
  CsvSchema s;
  s.has_header = true;
  s.label_name = "kind";
  s.ignored_columns = {0};
  const RawDataset d = parse("\xEF\xBB\xBFid,kind,w,h\r\n1,x,0.5,2\r\n2,y,1.5,3\r\n", s);
  EXPECT_EQ(d.dims(), 2);
  EXPECT_EQ(d.feature_names, (std::vector<std::string>{"w", "h"}));
  EXPECT_EQ(d.features(1, 0), 1.5);
  EXPECT_EQ(d.classes[1], "y");
}

TEST(Csv, LabelIndexAndCategorical) {
  CsvSchema s;
  s.label_index = 0;
  s.categorical_columns = {2};
  const RawDataset d = parse("c1,7,low\nc2,8,high\nc1,9,low\n", s);
  EXPECT_EQ(d.features(0, 1), 0.0);
  EXPECT_EQ(d.features(1, 1), 1.0);
  EXPECT_EQ(d.features(2, 1), 0.0);
  EXPECT_EQ(d.features(2, 0), 9.0);
  EXPECT_EQ(d.class_count(), 2);
}

TEST(Csv, ErrorsCarryPositions) {
  expect_parse_error("1,2,a\n1,x,b\n", 2, 2);
  expect_parse_error("1,2,a\n1,2\n", 2, 3);
  expect_parse_error("1,2,a\n\n1,2,\n", 3, 3);
  expect_parse_error("", 1, 1);
  CsvSchema s;
  s.has_header = true;
  s.label_name = "nope";
  expect_parse_error("a,b\n1,2\n", 1, 1, s);
  try {
    load_csv("/definitely/missing.csv", {});
    ADD_FAILURE();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.row(), 0u);
    EXPECT_NE(std::string(e.what()).find("missing.csv"), std::string::npos);
  }
}

TEST(Normalization, MinMaxFromTrainingRows) {
  Eigen::MatrixXd x(3, 2);
  x << 0, 5, 10, 5, 5, 5;
  const NormalizationStats s = NormalizationStats::fit(x);
  EXPECT_EQ(s.constant_features(), (std::vector<Index>{1}));
  Eigen::MatrixXd y(2, 2);
  y << 2.5, 7, 20, 1;
  const Eigen::MatrixXd z = s.apply(y);
  EXPECT_DOUBLE_EQ(z(0, 0), 0.25);
  EXPECT_EQ(z(1, 0), 1.0);  // clamped
  EXPECT_EQ(z(0, 1), 0.5);  // constant feature
}

TEST(Split, SeededAndDisjoint) {
  RawDataset raw;
  raw.features.resize(20, 1);
  for (Index r = 0; r < 20; ++r) {
    raw.features(r, 0) = static_cast<double>(r);
    raw.labels.push_back(r % 2);
  }
  raw.classes = {"even", "odd"};
  const auto [train, test] = split_and_normalize(raw, {14, 6, 3});
  EXPECT_EQ(train.rows(), 14);
  EXPECT_EQ(test.rows(), 6);
  std::set<std::size_t> rows(train.source_rows.begin(), train.source_rows.end());
  rows.insert(test.source_rows.begin(), test.source_rows.end());
  EXPECT_EQ(rows.size(), 20u);
  EXPECT_GE(train.features.minCoeff(), 0.0);
  EXPECT_LE(train.features.maxCoeff(), 1.0);
  EXPECT_EQ(train.one_hot.rowwise().sum(), Eigen::VectorXd::Ones(14));
  for (Index r = 0; r < 6; ++r)
    EXPECT_EQ(test.labels[static_cast<std::size_t>(r)], static_cast<Index>(test.source_rows[static_cast<std::size_t>(r)] % 2));

  const auto again = split_and_normalize(raw, {14, 6, 3});
  EXPECT_EQ(again.first.source_rows, train.source_rows);
  const auto other = split_and_normalize(raw, {14, 6, 4});
  EXPECT_NE(other.first.source_rows, train.source_rows);
  EXPECT_THROW(split_and_normalize(raw, {14, 5, 3}), UsageError);
}

TEST(Registry, ElevenDatasets) {
  const auto reg = dataset_registry();
  EXPECT_EQ(reg.size(), 11u);
  for (const auto& d : reg) {
    EXPECT_GE(d.classes, 2) << d.name;
    EXPECT_GT(d.train_count, d.test_count / 2) << d.name;
    EXPECT_EQ(d.file_name, d.name + ".csv");
  }
  const DatasetDescriptor* iris = find_dataset("Iris");
  ASSERT_NE(iris, nullptr);
  EXPECT_EQ(iris->dendrites, 12);
  EXPECT_EQ(iris->train_count + iris->test_count, 150u);
  EXPECT_DOUBLE_EQ(iris->modnf.acc, 0.7906);
  EXPECT_DOUBLE_EQ(iris->synaptic_scale, 5.0);
  EXPECT_EQ(find_dataset("breast-cancer"), find_dataset("breast"));
  EXPECT_EQ(find_dataset("mnist"), nullptr);
}

TEST(Registry, BundledFilesMatch) {
  for (const char* name : {"iris", "breast_cancer"}) {
    const DatasetDescriptor* d = find_dataset(name);
    ASSERT_NE(d, nullptr);
    const auto path = std::filesystem::path(MODN_TEST_DATA_DIR) / d->file_name;
    if (!std::filesystem::exists(path)) GTEST_SKIP() << path;
    const RawDataset raw = load_csv(path, d->schema);
    EXPECT_EQ(static_cast<std::size_t>(raw.rows()), d->train_count + d->test_count) << name;
    EXPECT_EQ(raw.dims(), d->dims) << name;
    EXPECT_EQ(raw.class_count(), d->classes) << name;
  }
}
