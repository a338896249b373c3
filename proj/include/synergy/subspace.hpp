#pragma once

// PCA conditioning, regularized CCA, the synergy vector S, and its
// train-split standardizer.

#include <Eigen/Dense>

#include <string>
#include <vector>

#include "synergy/common.hpp"

namespace synergy {

using Eigen::MatrixXd;
using Eigen::VectorXd;

inline MatrixXd to_eigen(const RowMatrix& m) {
  return Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                        Eigen::RowMajor>>(
      m.data.data(), static_cast<Eigen::Index>(m.rows),
      static_cast<Eigen::Index>(m.cols));
}

inline RowMatrix from_eigen(const MatrixXd& m) {
  RowMatrix out(static_cast<std::size_t>(m.rows()),
                static_cast<std::size_t>(m.cols()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      out.at(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) =
          m(i, j);
  return out;
}

// ---------------------------------------------------------------------------
// PCA.
// ---------------------------------------------------------------------------

struct PcaModel {
  VectorXd mean;          // input-dim c
  MatrixXd components;    // c x p, orthonormal columns
  VectorXd explained_variance;  // p, descending
};

// Top-p principal components of the sample covariance. Works on whichever of
// the covariance (c x c) or centered Gram (n x n) matrix is smaller; the Gram
// route recovers components as X_c' u / ||X_c' u||. Sign convention: the
// largest-magnitude entry of every component is positive.
inline PcaModel pca_fit(const MatrixXd& X, int p) {
  const Eigen::Index n = X.rows();
  const Eigen::Index c = X.cols();
  if (n < 2) throw input_error("pca_fit: need at least 2 samples");
  if (p < 1 || p > std::min<Eigen::Index>(n - 1, c))
    throw input_error("pca_fit: p must satisfy 1 <= p <= min(n-1, c)");

  PcaModel model;
  model.mean = X.colwise().mean();
  MatrixXd Xc = X.rowwise() - model.mean.transpose();

  model.components.resize(c, p);
  model.explained_variance.resize(p);

  // Eigenvalues at or below this fraction of the largest indicate directions
  // outside the data's numerical rank; their eigenvectors are arbitrary.
  auto check_rank = [p](double w, double wmax) {
    if (wmax <= 0.0 || w <= wmax * 1e-12)
      throw numeric_error(
          "pca_fit: data rank is below the requested dimension " +
          std::to_string(p));
  };

  if (c <= n) {
    MatrixXd cov = (Xc.transpose() * Xc) / static_cast<double>(n - 1);
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(cov);
    if (eig.info() != Eigen::Success)
      throw numeric_error("pca_fit: eigendecomposition failed");
    // Eigenvalues come back ascending; take the top p in descending order.
    for (int j = 0; j < p; ++j) {
      const Eigen::Index src = c - 1 - j;
      check_rank(eig.eigenvalues()(src), eig.eigenvalues()(c - 1));
      model.components.col(j) = eig.eigenvectors().col(src);
      model.explained_variance(j) = std::max(eig.eigenvalues()(src), 0.0);
    }
  } else {
    MatrixXd gram = (Xc * Xc.transpose()) / static_cast<double>(n - 1);
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(gram);
    if (eig.info() != Eigen::Success)
      throw numeric_error("pca_fit: eigendecomposition failed");
    for (int j = 0; j < p; ++j) {
      const Eigen::Index src = n - 1 - j;
      check_rank(eig.eigenvalues()(src), eig.eigenvalues()(n - 1));
      VectorXd v = Xc.transpose() * eig.eigenvectors().col(src);
      const double norm = v.norm();
      if (norm < 1e-12)
        throw numeric_error(
            "pca_fit: data rank is below the requested dimension " +
            std::to_string(p));
      model.components.col(j) = v / norm;
      model.explained_variance(j) = std::max(eig.eigenvalues()(src), 0.0);
    }
  }

  for (int j = 0; j < p; ++j) {
    Eigen::Index imax = 0;
    model.components.col(j).cwiseAbs().maxCoeff(&imax);
    if (model.components(imax, j) < 0.0) model.components.col(j) *= -1.0;
  }
  return model;
}

inline VectorXd pca_project(const PcaModel& model, const VectorXd& x) {
  if (x.size() != model.mean.size())
    throw input_error("pca_project: input length " + std::to_string(x.size()) +
                      " does not match model dimension " +
                      std::to_string(model.mean.size()));
  return model.components.transpose() * (x - model.mean);
}

inline MatrixXd pca_project_rows(const PcaModel& model, const MatrixXd& X) {
  if (X.cols() != model.mean.size())
    throw input_error("pca_project: column count does not match model");
  return (X.rowwise() - model.mean.transpose()) * model.components;
}

// ---------------------------------------------------------------------------
// CCA.
// ---------------------------------------------------------------------------

struct CcaModel {
  VectorXd x_mean, y_mean;
  MatrixXd a_weights;  // c' x k
  MatrixXd b_weights;  // d' x k
  VectorXd correlations;  // k, descending, in [0,1]
  double ridge = 0.0;
};

namespace detail {

// Symmetric inverse square root of a covariance matrix. With ridge == 0 a
// singular (or near-singular) spectrum is an error; with ridge > 0 the
// spectrum is floored defensively against roundoff.
inline MatrixXd inverse_sqrt_spd(const MatrixXd& S, double ridge,
                                 const char* view) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(S);
  if (eig.info() != Eigen::Success)
    throw numeric_error("cca_fit: eigendecomposition failed");
  const VectorXd& w = eig.eigenvalues();
  const double wmax = std::max(w(w.size() - 1), 0.0);
  if (ridge <= 0.0 && (wmax <= 0.0 || w(0) <= wmax * 1e-12))
    throw numeric_error(std::string("cca_fit: ") + view +
                        " covariance is singular with ridge = 0; rerun with a "
                        "positive ridge (e.g. cca.ridge = 1e-3)");
  const double floor = std::max(wmax * 1e-15, 1e-300);
  VectorXd inv_sqrt_w(w.size());
  for (Eigen::Index i = 0; i < w.size(); ++i)
    inv_sqrt_w(i) = 1.0 / std::sqrt(std::max(w(i), floor));
  return eig.eigenvectors() * inv_sqrt_w.asDiagonal() *
         eig.eigenvectors().transpose();
}

}  // namespace detail

// Whitened-cross-covariance CCA: center, Sxx = X'X/(n-1) + ridge*I (Syy
// analogous), SVD of Sxx^(-1/2) Sxy Syy^(-1/2) = P D Q', A = Sxx^(-1/2) P,
// B = Syy^(-1/2) Q. Correlations are the top-k singular values clipped to
// [0,1]. Sign: first nonzero entry of each A column positive, B slaved.
inline CcaModel cca_fit(const MatrixXd& X, const MatrixXd& Y, int k,
                        double ridge) {
  const Eigen::Index n = X.rows();
  if (Y.rows() != n) throw input_error("cca_fit: views disagree on sample count");
  if (n < 3) throw input_error("cca_fit: need at least 3 samples");
  if (ridge < 0.0) throw input_error("cca_fit: ridge must be >= 0");
  if (k < 1 || k > std::min(X.cols(), Y.cols()))
    throw input_error("cca_fit: k must satisfy 1 <= k <= min(view dims)");

  CcaModel model;
  model.ridge = ridge;
  model.x_mean = X.colwise().mean();
  model.y_mean = Y.colwise().mean();
  MatrixXd Xc = X.rowwise() - model.x_mean.transpose();
  MatrixXd Yc = Y.rowwise() - model.y_mean.transpose();

  const double denom = static_cast<double>(n - 1);
  MatrixXd Sxx = (Xc.transpose() * Xc) / denom;
  MatrixXd Syy = (Yc.transpose() * Yc) / denom;
  Sxx.diagonal().array() += ridge;
  Syy.diagonal().array() += ridge;
  const MatrixXd Sxy = (Xc.transpose() * Yc) / denom;

  const MatrixXd wx = detail::inverse_sqrt_spd(Sxx, ridge, "first-view");
  const MatrixXd wy = detail::inverse_sqrt_spd(Syy, ridge, "second-view");

  Eigen::JacobiSVD<MatrixXd> svd(wx * Sxy * wy,
                                 Eigen::ComputeThinU | Eigen::ComputeThinV);
  model.a_weights = wx * svd.matrixU().leftCols(k);
  model.b_weights = wy * svd.matrixV().leftCols(k);
  model.correlations = svd.singularValues()
                           .head(k)
                           .cwiseMax(0.0)
                           .cwiseMin(1.0);

  for (int j = 0; j < k; ++j) {
    for (Eigen::Index i = 0; i < model.a_weights.rows(); ++i) {
      const double a = model.a_weights(i, j);
      if (std::abs(a) > 1e-12) {
        if (a < 0.0) {
          model.a_weights.col(j) *= -1.0;
          model.b_weights.col(j) *= -1.0;
        }
        break;
      }
    }
  }
  return model;
}

inline std::pair<VectorXd, VectorXd> cca_project(const CcaModel& model,
                                                 const VectorXd& gamma,
                                                 const VectorXd& tau) {
  if (gamma.size() != model.x_mean.size() || tau.size() != model.y_mean.size())
    throw input_error("cca_project: input lengths do not match model");
  return {model.a_weights.transpose() * (gamma - model.x_mean),
          model.b_weights.transpose() * (tau - model.y_mean)};
}

// ---------------------------------------------------------------------------
// Synergy vector and standardizer.
// ---------------------------------------------------------------------------

// S_raw = (U - V) / ||U - V||; zero vector when the difference is degenerate.
inline VectorXd synergy(const VectorXd& u, const VectorXd& v) {
  if (u.size() != v.size()) throw input_error("synergy: length mismatch");
  VectorXd d = u - v;
  const double norm = d.norm();
  if (norm < 1e-10) return VectorXd::Zero(u.size());
  return d / norm;
}

struct SynergyStandardizer {
  VectorXd mean;
  VectorXd std;  // population std, floored at 1e-8
};

inline SynergyStandardizer standardizer_fit(const MatrixXd& S) {
  if (S.rows() < 2) throw input_error("standardizer_fit: need >= 2 samples");
  SynergyStandardizer st;
  st.mean = S.colwise().mean();
  MatrixXd centered = S.rowwise() - st.mean.transpose();
  st.std = (centered.array().square().colwise().sum() /
            static_cast<double>(S.rows()))
               .sqrt()
               .max(1e-8)
               .matrix()
               .transpose();
  return st;
}

inline VectorXd standardizer_apply(const SynergyStandardizer& st,
                                   const VectorXd& s_raw) {
  if (s_raw.size() != st.mean.size())
    throw input_error("standardizer_apply: length mismatch");
  return (s_raw - st.mean).cwiseQuotient(st.std);
}

}  // namespace synergy
