#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "glyco/types.hpp"

namespace glyco {

struct FeatureMatrix {
  std::vector<std::string> patient_ids;
  std::vector<std::string> feature_names;
  Eigen::MatrixXd values;  // patients x features
  bool normalized = false;
  std::size_t excluded_rows = 0;
};

/// Rows with any selected feature missing are dropped and counted.
FeatureMatrix build_feature_matrix(std::span<const PatientRecord> patients,
                                   std::span<const std::string> features);

/// Column-wise z-score with population s.d. Zero-variance columns are an error.
FeatureMatrix zscore(const FeatureMatrix& m);

/// Population covariance (divide by N) so a z-scored matrix has unit diagonal.
Eigen::MatrixXd covariance_matrix(const FeatureMatrix& m);
Eigen::MatrixXd correlation_matrix(const FeatureMatrix& m);

/// Names of features whose population variance is strictly above tau.
std::vector<std::string> variance_threshold(const FeatureMatrix& m, double tau);

struct GmmOptions {
  std::size_t k = 3;
  std::size_t n_init = 20;
  std::size_t max_iter = 200;
  double tol = 1e-6;
  std::uint64_t seed = 42;
  double reg_covar = 1e-6;
};

struct GmmModel {
  Eigen::VectorXd weights;                   // k
  Eigen::MatrixXd means;                     // k x d
  std::vector<Eigen::MatrixXd> covariances;  // k of d x d
  double log_likelihood = 0.0;               // total over points
  double mean_log_likelihood = 0.0;          // per point
  std::size_t iterations = 0;
  std::size_t best_init = 0;
  std::uint64_t seed = 0;
  /// Log-likelihood at each E-step of the winning initialisation.
  std::vector<double> history;

  std::size_t k() const noexcept { return static_cast<std::size_t>(weights.size()); }
  std::size_t dim() const noexcept { return static_cast<std::size_t>(means.cols()); }
};

GmmModel gmm_fit(const Eigen::MatrixXd& data, const GmmOptions& options = {});

/// rows x k posterior responsibilities.
Eigen::MatrixXd gmm_responsibilities(const GmmModel& model, const Eigen::MatrixXd& data);

/// argmax responsibility per row; ties go to the lowest component index.
std::vector<std::size_t> gmm_assign(const GmmModel& model, const Eigen::MatrixXd& data);

nlohmann::json to_json(const GmmModel& model);
nlohmann::json matrix_to_json(const Eigen::MatrixXd& m);

}  // namespace glyco
