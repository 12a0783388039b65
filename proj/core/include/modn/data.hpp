#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace modn {

using Index = Eigen::Index;

/// Column roles for a delimited text file. Columns that are neither the
/// label, ignored, nor listed as categorical must be numeric.
struct CsvSchema {
  bool has_header = false;
  /// Label column by header name (requires has_header) ...
  std::optional<std::string> label_name;
  /// ... or by 0-based index. When neither is set the last column is used.
  std::optional<std::size_t> label_index;
  std::vector<std::size_t> categorical_columns;
  std::vector<std::size_t> ignored_columns;
  char delimiter = ',';
};

struct RawDataset {
  Eigen::MatrixXd features;          // N x D
  std::vector<Index> labels;         // index into classes
  std::vector<std::string> classes;  // first-appearance order
  std::vector<std::string> feature_names;

  Index rows() const { return features.rows(); }
  Index dims() const { return features.cols(); }
  Index class_count() const { return static_cast<Index>(classes.size()); }
};

/// Throws ParseError (row/column are 1-based file positions).
RawDataset load_csv(const std::filesystem::path& path, const CsvSchema& schema);
RawDataset parse_csv(std::istream& in, const CsvSchema& schema,
                     std::string_view source = "<stream>");

/// Per-feature min-max statistics from a training portion.
struct NormalizationStats {
  Eigen::VectorXd min;
  Eigen::VectorXd max;

  static NormalizationStats fit(const Eigen::Ref<const Eigen::MatrixXd>& features);
  /// (x - min) / (max - min) clamped to [0, 1]; constant features map to 0.5.
  Eigen::MatrixXd apply(const Eigen::Ref<const Eigen::MatrixXd>& features) const;
  std::vector<Index> constant_features() const;
};

struct LabeledDataset {
  Eigen::MatrixXd features;  // N x D in [0, 1]
  std::vector<Index> labels;
  Eigen::MatrixXd one_hot;  // N x C
  NormalizationStats stats;
  std::vector<std::string> classes;
  /// Row index in the RawDataset each sample came from.
  std::vector<std::size_t> source_rows;

  Index rows() const { return features.rows(); }
  Index dims() const { return features.cols(); }
  Index class_count() const { return static_cast<Index>(classes.size()); }
};

struct SplitSpec {
  std::size_t train_count = 0;
  std::size_t test_count = 0;
  std::uint64_t seed = 0;
};

/// Seeded shuffle, then the first train_count rows train and the rest test.
/// Both portions are scaled with statistics from the training rows.
std::pair<LabeledDataset, LabeledDataset> split_and_normalize(const RawDataset& raw,
                                                              const SplitSpec& spec);

/// Published reference figures for a dataset (test AUC / ACC means).
struct ReferenceScore {
  double auc = 0.0;
  double acc = 0.0;
};

struct DatasetDescriptor {
  std::string name;  // canonical key, e.g. "breast_cancer"
  std::string display_name;
  std::size_t train_count = 0;
  std::size_t test_count = 0;
  Index classes = 0;
  Index dims = 0;
  // Tuned model hyperparameters.
  Index dendrites = 0;
  double synaptic_scale = 0.0;
  double telodendron_scale = 0.0;
  /// Heuristic generation budget.
  int iterations = 400;
  std::string file_name;
  CsvSchema schema;
  ReferenceScore modnf;  // MODNF trained by BBO
  std::optional<ReferenceScore> mlp;
  std::optional<ReferenceScore> dnm;
};

std::span<const DatasetDescriptor> dataset_registry();
/// Case-insensitive; spaces, '-' and '_' are ignored, and a few short
/// aliases ("breast", "blood", "glass", ...) are accepted. nullptr on miss.
const DatasetDescriptor* find_dataset(std::string_view name);

}  // namespace modn
