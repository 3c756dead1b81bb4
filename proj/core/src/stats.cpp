#include "glyco/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <optional>

#include "glyco/error.hpp"
#include "glyco/rng.hpp"

namespace glyco {

FeatureMatrix build_feature_matrix(std::span<const PatientRecord> patients,
                                   std::span<const std::string> features) {
  if (features.empty()) fail(ErrorKind::Config, "no features selected");
  FeatureMatrix m;
  m.feature_names.assign(features.begin(), features.end());
  std::vector<std::vector<double>> rows;
  for (const auto& p : patients) {
    std::vector<double> row;
    row.reserve(features.size());
    for (const auto& f : features) {
      auto v = p.feature(f);
      if (!v) break;
      row.push_back(*v);
    }
    if (row.size() != features.size()) {
      ++m.excluded_rows;
      continue;
    }
    m.patient_ids.push_back(p.patient_id);
    rows.push_back(std::move(row));
  }
  m.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(features.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < features.size(); ++j)
      m.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  return m;
}

namespace {

Eigen::MatrixXd population_covariance(const Eigen::MatrixXd& x) {
  const Eigen::RowVectorXd mean = x.colwise().mean();
  const Eigen::MatrixXd centred = x.rowwise() - mean;
  return (centred.transpose() * centred) / static_cast<double>(x.rows());
}

void require_rows(const FeatureMatrix& m, Eigen::Index n, const char* what) {
  if (m.values.rows() < n)
    fail(ErrorKind::InsufficientData, std::string(what) + " needs at least " + std::to_string(n) +
                                          " rows, got " + std::to_string(m.values.rows()));
}

}  // namespace

FeatureMatrix zscore(const FeatureMatrix& m) {
  require_rows(m, 2, "normalisation");
  FeatureMatrix out = m;
  const Eigen::RowVectorXd mean = m.values.colwise().mean();
  for (Eigen::Index j = 0; j < m.values.cols(); ++j) {
    const Eigen::VectorXd c = m.values.col(j).array() - mean(j);
    const double sd = std::sqrt(c.squaredNorm() / static_cast<double>(m.values.rows()));
    if (!(sd > 0.0))
      fail(ErrorKind::InvalidValue,
           "feature '" + m.feature_names[static_cast<std::size_t>(j)] + "' has zero variance");
    out.values.col(j) = c / sd;
  }
  out.normalized = true;
  return out;
}

Eigen::MatrixXd covariance_matrix(const FeatureMatrix& m) {
  require_rows(m, 2, "covariance");
  return population_covariance(m.values);
}

Eigen::MatrixXd correlation_matrix(const FeatureMatrix& m) {
  const Eigen::MatrixXd cov = covariance_matrix(m);
  const Eigen::Index d = cov.rows();
  for (Eigen::Index j = 0; j < d; ++j)
    if (!(cov(j, j) > 0.0))
      fail(ErrorKind::InvalidValue,
           "feature '" + m.feature_names[static_cast<std::size_t>(j)] + "' has zero variance");
  Eigen::MatrixXd corr(d, d);
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = 0; j < d; ++j)
      corr(i, j) = i == j ? 1.0
                          : std::clamp(cov(i, j) / std::sqrt(cov(i, i) * cov(j, j)), -1.0, 1.0);
  return corr;
}

std::vector<std::string> variance_threshold(const FeatureMatrix& m, double tau) {
  std::vector<std::string> kept;
  if (m.values.rows() == 0) return kept;
  const Eigen::RowVectorXd mean = m.values.colwise().mean();
  for (Eigen::Index j = 0; j < m.values.cols(); ++j) {
    const double var =
        (m.values.col(j).array() - mean(j)).square().sum() / static_cast<double>(m.values.rows());
    if (var > tau) kept.push_back(m.feature_names[static_cast<std::size_t>(j)]);
  }
  return kept;
}

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

struct Component {
  Eigen::LLT<Eigen::MatrixXd> llt;
  double log_det = 0.0;
};

bool factor(const Eigen::MatrixXd& cov, Component& c) {
  c.llt.compute(cov);
  if (c.llt.info() != Eigen::Success) return false;
  const Eigen::MatrixXd& l = c.llt.matrixLLT();
  c.log_det = 0.0;
  for (Eigen::Index i = 0; i < l.rows(); ++i) {
    if (!(l(i, i) > 0.0)) return false;
    c.log_det += 2.0 * std::log(l(i, i));
  }
  return true;
}

/// Fills rows x k log(weight_j * N(x | j)) and returns false on a bad factor.
bool weighted_log_densities(const GmmModel& model, const Eigen::MatrixXd& x,
                            Eigen::MatrixXd& out) {
  const Eigen::Index n = x.rows();
  const Eigen::Index d = x.cols();
  const Eigen::Index k = model.weights.size();
  out.resize(n, k);
  for (Eigen::Index j = 0; j < k; ++j) {
    Component c;
    if (!factor(model.covariances[static_cast<std::size_t>(j)], c)) return false;
    const double log_w = std::log(model.weights(j));
    const Eigen::MatrixXd centred = (x.rowwise() - model.means.row(j)).transpose();
    const Eigen::MatrixXd z = c.llt.matrixL().solve(centred);
    for (Eigen::Index i = 0; i < n; ++i)
      out(i, j) = log_w - 0.5 * (static_cast<double>(d) * kLog2Pi + c.log_det +
                                 z.col(i).squaredNorm());
  }
  return true;
}

/// Normalises rows of log densities into responsibilities in place; returns
/// the total log-likelihood.
double normalise_rows(Eigen::MatrixXd& logp) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < logp.rows(); ++i) {
    const double mx = logp.row(i).maxCoeff();
    const double lse = mx + std::log((logp.row(i).array() - mx).exp().sum());
    total += lse;
    logp.row(i) = (logp.row(i).array() - lse).exp();
  }
  return total;
}

bool m_step(const Eigen::MatrixXd& x, const Eigen::MatrixXd& resp, double reg, GmmModel& model) {
  const Eigen::Index n = x.rows();
  const Eigen::Index k = resp.cols();
  const Eigen::VectorXd nk = resp.colwise().sum().transpose();
  for (Eigen::Index j = 0; j < k; ++j) {
    if (!(nk(j) > 10.0 * std::numeric_limits<double>::epsilon() * static_cast<double>(n)))
      return false;
    model.weights(j) = nk(j) / static_cast<double>(n);
    model.means.row(j) = (resp.col(j).transpose() * x) / nk(j);
    const Eigen::MatrixXd centred = x.rowwise() - model.means.row(j);
    Eigen::MatrixXd cov =
        (centred.array().colwise() * resp.col(j).array()).matrix().transpose() * centred / nk(j);
    cov = 0.5 * (cov + cov.transpose());
    cov.diagonal().array() += reg;
    Component c;
    if (!factor(cov, c)) return false;
    model.covariances[static_cast<std::size_t>(j)] = std::move(cov);
  }
  return true;
}

}  // namespace

GmmModel gmm_fit(const Eigen::MatrixXd& data, const GmmOptions& options) {
  const Eigen::Index n = data.rows();
  const Eigen::Index d = data.cols();
  const auto k = static_cast<Eigen::Index>(options.k);
  if (k < 1) fail(ErrorKind::Config, "GMM needs k >= 1");
  if (d < 1) fail(ErrorKind::InsufficientData, "GMM needs at least one feature");
  if (n < k)
    fail(ErrorKind::InsufficientData,
         "GMM needs at least k=" + std::to_string(k) + " rows, got " + std::to_string(n));
  if (options.n_init < 1) fail(ErrorKind::Config, "GMM needs n_init >= 1");
  if (!data.allFinite()) fail(ErrorKind::InvalidValue, "GMM input contains non-finite values");

  Eigen::MatrixXd data_cov = population_covariance(data);
  data_cov.diagonal().array() += options.reg_covar;

  constexpr int kAttempts = 10;
  std::optional<GmmModel> best;
  for (std::size_t init = 0; init < options.n_init; ++init) {
    Rng rng(derive_seed(options.seed, init));
    for (int attempt = 0; attempt < kAttempts; ++attempt) {
      GmmModel m;
      m.seed = options.seed;
      m.best_init = init;
      m.weights = Eigen::VectorXd::Constant(k, 1.0 / static_cast<double>(k));
      m.means.resize(k, d);
      m.covariances.assign(static_cast<std::size_t>(k), data_cov);
      std::vector<Eigen::Index> rows(static_cast<std::size_t>(n));
      std::iota(rows.begin(), rows.end(), 0);
      for (Eigen::Index j = 0; j < k; ++j) {
        const auto pick = static_cast<std::size_t>(j) +
                          static_cast<std::size_t>(rng.below(static_cast<std::uint64_t>(n - j)));
        std::swap(rows[static_cast<std::size_t>(j)], rows[pick]);
        m.means.row(j) = data.row(rows[static_cast<std::size_t>(j)]);
      }

      Eigen::MatrixXd resp;
      if (!weighted_log_densities(m, data, resp)) continue;
      double ll = normalise_rows(resp);
      m.history.push_back(ll);
      bool degenerate = false;
      for (std::size_t it = 0; it < options.max_iter; ++it) {
        if (!m_step(data, resp, options.reg_covar, m) || !weighted_log_densities(m, data, resp)) {
          degenerate = true;
          break;
        }
        const double next = normalise_rows(resp);
        m.history.push_back(next);
        ++m.iterations;
        const double gain = next - ll;
        ll = next;
        if (gain < options.tol) break;
      }
      if (degenerate || !std::isfinite(ll)) continue;
      m.log_likelihood = ll;
      m.mean_log_likelihood = ll / static_cast<double>(n);
      if (!best || m.log_likelihood > best->log_likelihood) best = std::move(m);
      break;
    }
  }
  if (!best) fail(ErrorKind::Numeric, "every GMM initialisation degenerated");
  return *best;
}

Eigen::MatrixXd gmm_responsibilities(const GmmModel& model, const Eigen::MatrixXd& data) {
  if (static_cast<std::size_t>(data.cols()) != model.dim())
    fail(ErrorKind::Shape, "GMM dimension " + std::to_string(model.dim()) +
                               " does not match data with " + std::to_string(data.cols()) +
                               " columns");
  Eigen::MatrixXd resp;
  if (!weighted_log_densities(model, data, resp))
    fail(ErrorKind::Numeric, "GMM covariance is not positive definite");
  normalise_rows(resp);
  return resp;
}

std::vector<std::size_t> gmm_assign(const GmmModel& model, const Eigen::MatrixXd& data) {
  const Eigen::MatrixXd resp = gmm_responsibilities(model, data);
  std::vector<std::size_t> labels(static_cast<std::size_t>(resp.rows()));
  for (Eigen::Index i = 0; i < resp.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index j = 1; j < resp.cols(); ++j)
      if (resp(i, j) > resp(i, best)) best = j;
    labels[static_cast<std::size_t>(i)] = static_cast<std::size_t>(best);
  }
  return labels;
}

nlohmann::json matrix_to_json(const Eigen::MatrixXd& m) {
  auto rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    auto row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

nlohmann::json to_json(const GmmModel& model) {
  auto covs = nlohmann::json::array();
  for (const auto& c : model.covariances) covs.push_back(matrix_to_json(c));
  std::vector<double> w(model.weights.data(), model.weights.data() + model.weights.size());
  return {{"k", model.k()},
          {"dim", model.dim()},
          {"weights", w},
          {"means", matrix_to_json(model.means)},
          {"covariances", covs},
          {"log_likelihood", model.log_likelihood},
          {"mean_log_likelihood", model.mean_log_likelihood},
          {"iterations", model.iterations},
          {"best_init", model.best_init},
          {"seed", model.seed}};
}

}  // namespace glyco
