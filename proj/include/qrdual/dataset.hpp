#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

namespace qrdual {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct ColumnScaling {
  double mean = 0.0;
  double scale = 1.0;  // always > 0
};

/// Feature matrix (n x d) plus response vector, with optional per-column
/// normalization metadata so a normalized dataset can be mapped back.
/// Immutable by convention after construction; all operations return copies.
struct Dataset {
  Matrix features;
  Vector response;

  std::vector<std::string> feature_names;
  std::string response_name;

  bool normalized = false;
  std::vector<ColumnScaling> feature_scaling;
  ColumnScaling response_scaling;

  Eigen::Index n_samples() const { return response.size(); }
  Eigen::Index n_features() const { return features.cols(); }

  /// Throws DataError when n < 1, shapes disagree, entries are non-finite,
  /// or a stored scale is not positive.
  void validate() const;

  /// Spread of the response, used for solver/search tolerances. Falls back to
  /// max(1, |mean|) for a constant response.
  double response_scale_hint() const;
};

Dataset make_dataset(Matrix features, Vector response);

/// Centers every feature column and the response to mean zero, variance one
/// (unbiased sample variance). Columns with zero variance keep scale 1 and
/// only get the mean removed. Records the scaling metadata.
Dataset normalize(const Dataset& data);

/// Inverse of normalize using the stored metadata. Identity on datasets that
/// were never normalized.
Dataset denormalize(const Dataset& data);

/// Applies an existing scaling (typically the training set's) to another
/// dataset, e.g. to put test rows on the training scale.
Dataset apply_normalization(const Dataset& data,
                            const std::vector<ColumnScaling>& feature_scaling,
                            const ColumnScaling& response_scaling);

/// CSV ingestion: first row is a header, one column is the response (by
/// name), every other column must be numeric. Missing or non-numeric cells
/// are rejected with DataError.
Dataset load_csv(const std::string& path, const std::string& response_column);

/// Rows of a CSV as a plain matrix using the given column order; used for
/// test feature files. Columns absent from the file raise DataError.
Matrix load_csv_features(const std::string& path, const std::vector<std::string>& columns);

}  // namespace qrdual
