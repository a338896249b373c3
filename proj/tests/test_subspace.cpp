// PCA, regularized CCA, the synergy vector, and the train-split standardizer.
// Oracles: hand-computed small cases, statistical identities (Pearson,
// pairwise-uncorrelated variates), and invariance properties.

#include <gtest/gtest.h>

#include <cmath>

#include "synergy/common.hpp"
#include "synergy/subspace.hpp"

using namespace synergy;

namespace {

MatrixXd random_matrix(int n, int c, std::uint64_t seed) {
  Rng rng(seed);
  MatrixXd m(n, c);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < c; ++j) m(i, j) = rng.normal();
  return m;
}

double pearson(const VectorXd& a, const VectorXd& b) {
  const VectorXd ac = a.array() - a.mean();
  const VectorXd bc = b.array() - b.mean();
  return ac.dot(bc) / std::sqrt(ac.squaredNorm() * bc.squaredNorm());
}

// Sample correlation between two columns, 0 if either is degenerate.
double col_corr(const MatrixXd& A, int i, const MatrixXd& B, int j) {
  return pearson(A.col(i), B.col(j));
}

}  // namespace

// ---------------------------------------------------------------------------
// PCA.
// ---------------------------------------------------------------------------

TEST(Pca, HandComputedRankOne) {
  MatrixXd X(4, 2);
  X << 1, 1, -1, -1, 2, 2, -2, -2;
  const PcaModel m = pca_fit(X, 1);
  EXPECT_NEAR(m.mean(0), 0.0, 1e-15);
  EXPECT_NEAR(m.mean(1), 0.0, 1e-15);
  // Axis (1,1)/sqrt(2) with the largest-|entry| sign rule -> both positive.
  EXPECT_NEAR(m.components(0, 0), 1.0 / std::sqrt(2.0), 1e-12);
  EXPECT_NEAR(m.components(1, 0), 1.0 / std::sqrt(2.0), 1e-12);
  // Scores are +-sqrt(2), +-2 sqrt(2): sample variance 20/3.
  EXPECT_NEAR(m.explained_variance(0), 20.0 / 3.0, 1e-12);
}

TEST(Pca, ComponentsOrthonormalVarianceSortedAndScoresMatch) {
  const MatrixXd X = random_matrix(40, 6, 21);
  const PcaModel m = pca_fit(X, 4);
  const MatrixXd G = m.components.transpose() * m.components;
  EXPECT_NEAR((G - MatrixXd::Identity(4, 4)).norm(), 0.0, 1e-10);
  for (int j = 0; j + 1 < 4; ++j)
    EXPECT_GE(m.explained_variance(j), m.explained_variance(j + 1) - 1e-12);
  // Score variance along component j equals the eigenvalue.
  const MatrixXd P = pca_project_rows(m, X);
  for (int j = 0; j < 4; ++j) {
    const VectorXd s = P.col(j);
    const double var = (s.array() - s.mean()).square().sum() / (X.rows() - 1);
    EXPECT_NEAR(var, m.explained_variance(j), 1e-10);
  }
  // Row projection equals per-vector projection.
  const VectorXd p0 = pca_project(m, X.row(0).transpose());
  EXPECT_NEAR((P.row(0).transpose() - p0).norm(), 0.0, 1e-12);
}

TEST(Pca, GramRouteMatchesCovarianceProperties) {
  // More columns than rows forces the Gram-matrix route.
  const MatrixXd X = random_matrix(8, 40, 33);
  const PcaModel m = pca_fit(X, 5);
  const MatrixXd G = m.components.transpose() * m.components;
  EXPECT_NEAR((G - MatrixXd::Identity(5, 5)).norm(), 0.0, 1e-8);
  const MatrixXd P = pca_project_rows(m, X);
  for (int j = 0; j < 5; ++j) {
    const VectorXd s = P.col(j);
    const double var = (s.array() - s.mean()).square().sum() / (X.rows() - 1);
    EXPECT_NEAR(var, m.explained_variance(j), 1e-8);
  }
  // Reconstruction from all n-1 = 7 components is exact for centered data.
  const PcaModel full = pca_fit(X, 7);
  const MatrixXd Pf = pca_project_rows(full, X);
  const MatrixXd recon = (Pf * full.components.transpose()).rowwise() +
                         full.mean.transpose();
  EXPECT_NEAR((recon - X).norm(), 0.0, 1e-8);
}

TEST(Pca, RejectsBadRequests) {
  const MatrixXd X = random_matrix(5, 3, 1);
  EXPECT_THROW(pca_fit(X, 0), input_error);
  EXPECT_THROW(pca_fit(X, 5), input_error);  // p > min(n-1, c)
  EXPECT_THROW(pca_fit(MatrixXd::Zero(1, 3), 1), input_error);
  // Identical rows: rank 0, any p is above rank.
  MatrixXd dup(4, 3);
  for (int i = 0; i < 4; ++i) dup.row(i) << 1.0, 2.0, 3.0;
  EXPECT_THROW(pca_fit(dup, 2), numeric_error);
}

// ---------------------------------------------------------------------------
// CCA.
// ---------------------------------------------------------------------------

TEST(Cca, OneDimensionalEqualsAbsPearson) {
  Rng rng(7);
  MatrixXd x(60, 1), y(60, 1);
  for (int i = 0; i < 60; ++i) {
    x(i, 0) = rng.normal();
    y(i, 0) = -0.8 * x(i, 0) + 0.3 * rng.normal();
  }
  const CcaModel m = cca_fit(x, y, 1, 0.0);
  EXPECT_NEAR(m.correlations(0), std::abs(pearson(x.col(0), y.col(0))), 1e-8);
}

TEST(Cca, KnownLinearCrossMapRecovered) {
  // Fixed seeded dataset: two 5-D views, Y an invertible linear image of X.
  const int n = 200, d = 5;
  const MatrixXd X = random_matrix(n, d, 4242);
  MatrixXd M(d, d);
  M << 1, 2, 0, 0, 1,
       0, 1, 1, 0, 0,
       1, 0, 1, 2, 0,
       0, 0, 1, 1, 1,
       2, 0, 0, 1, 1;
  const MatrixXd Y = X * M;
  const CcaModel m = cca_fit(X, Y, d, 0.0);
  EXPECT_GE(m.correlations(0), 0.999);
  for (int j = 0; j < d; ++j) EXPECT_GE(m.correlations(j), 0.999);

  // Canonical variates: pairwise-uncorrelated within and across views.
  MatrixXd U(n, d), V(n, d);
  for (int i = 0; i < n; ++i) {
    const auto [u, v] =
        cca_project(m, X.row(i).transpose(), Y.row(i).transpose());
    U.row(i) = u.transpose();
    V.row(i) = v.transpose();
  }
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) {
      if (i != j) {
        EXPECT_NEAR(col_corr(U, i, U, j), 0.0, 1e-4) << i << "," << j;
        EXPECT_NEAR(col_corr(V, i, V, j), 0.0, 1e-4) << i << "," << j;
        EXPECT_NEAR(col_corr(U, i, V, j), 0.0, 1e-4) << i << "," << j;
      } else {
        EXPECT_NEAR(col_corr(U, i, V, i), m.correlations(i), 1e-6);
      }
    }
}

TEST(Cca, IndependentViewsGiveSmallCorrelations) {
  const MatrixXd X = random_matrix(600, 4, 11);
  const MatrixXd Y = random_matrix(600, 4, 12);
  const CcaModel m = cca_fit(X, Y, 4, 0.0);
  for (int j = 0; j < 4; ++j) {
    EXPECT_GE(m.correlations(j), 0.0);
    EXPECT_LE(m.correlations(j), 0.25);
  }
}

TEST(Cca, CorrelationsClippedSortedAndSignFixed) {
  const MatrixXd X = random_matrix(50, 3, 91);
  const MatrixXd Y = X * MatrixXd::Identity(3, 3) + random_matrix(50, 3, 92);
  const CcaModel m = cca_fit(X, Y, 3, 1e-6);
  for (int j = 0; j < 3; ++j) {
    EXPECT_GE(m.correlations(j), 0.0);
    EXPECT_LE(m.correlations(j), 1.0);
    if (j) EXPECT_LE(m.correlations(j), m.correlations(j - 1) + 1e-12);
    // Sign convention: first nonzero entry of each X-side column positive.
    for (int i = 0; i < m.a_weights.rows(); ++i) {
      if (std::abs(m.a_weights(i, j)) > 1e-12) {
        EXPECT_GT(m.a_weights(i, j), 0.0);
        break;
      }
    }
  }
}

TEST(Cca, AffineInvarianceOfCorrelations) {
  const MatrixXd X = random_matrix(80, 3, 55);
  const MatrixXd Y0 = X * random_matrix(3, 3, 56) + random_matrix(80, 3, 57);
  const CcaModel base = cca_fit(X, Y0, 3, 0.0);
  // Rescale and shift one view's columns.
  MatrixXd Y1 = Y0;
  Y1.col(0) = Y0.col(0) * 13.0;
  Y1.col(2) = Y0.col(2).array() - 4.5;
  const CcaModel scaled = cca_fit(X, Y1, 3, 0.0);
  for (int j = 0; j < 3; ++j)
    EXPECT_NEAR(scaled.correlations(j), base.correlations(j), 1e-8);
}

TEST(Cca, ProjectingTheMeansGivesZeroVariates) {
  const MatrixXd X = random_matrix(30, 3, 71);
  const MatrixXd Y = random_matrix(30, 4, 72);
  const CcaModel m = cca_fit(X, Y, 2, 1e-3);
  VectorXd xm = VectorXd::Zero(3), ym = VectorXd::Zero(4);
  for (int i = 0; i < 30; ++i) {
    xm += X.row(i).transpose();
    ym += Y.row(i).transpose();
  }
  const auto [u, v] = cca_project(m, xm / 30.0, ym / 30.0);
  EXPECT_NEAR(u.norm(), 0.0, 1e-10);
  EXPECT_NEAR(v.norm(), 0.0, 1e-10);
}

TEST(Cca, SingularWithoutRidgeSuggestsRidge) {
  // Duplicated column makes Sxx singular.
  MatrixXd X = random_matrix(20, 3, 81);
  X.col(2) = X.col(1);
  const MatrixXd Y = random_matrix(20, 3, 82);
  try {
    cca_fit(X, Y, 2, 0.0);
    FAIL() << "expected numeric_error";
  } catch (const numeric_error& e) {
    EXPECT_NE(std::string(e.what()).find("ridge"), std::string::npos);
  }
  // A positive ridge rescues the same data.
  EXPECT_NO_THROW(cca_fit(X, Y, 2, 1e-3));
}

TEST(Cca, RejectsBadShapes) {
  const MatrixXd X = random_matrix(10, 3, 1);
  const MatrixXd Y = random_matrix(10, 3, 2);
  EXPECT_THROW(cca_fit(X, Y, 4, 1e-3), input_error);   // k > dims
  EXPECT_THROW(cca_fit(X, Y, 0, 1e-3), input_error);
  EXPECT_THROW(cca_fit(random_matrix(2, 3, 3), random_matrix(2, 3, 4), 1,
                       1e-3),
               input_error);                            // n < 3
  EXPECT_THROW(cca_fit(X, random_matrix(9, 3, 5), 2, 1e-3), input_error);
  EXPECT_THROW(cca_fit(X, Y, 2, -1.0), input_error);
}

// ---------------------------------------------------------------------------
// Synergy vector and standardizer.
// ---------------------------------------------------------------------------

TEST(Synergy, UnitNormalizedDifference) {
  VectorXd u(2), v(2);
  u << 1, 0;
  v << 0, 1;
  const VectorXd s = synergy::synergy(u, v);
  EXPECT_NEAR(s(0), 1.0 / std::sqrt(2.0), 1e-15);
  EXPECT_NEAR(s(1), -1.0 / std::sqrt(2.0), 1e-15);
  EXPECT_NEAR(s.norm(), 1.0, 1e-15);
  // Equal variates: difference below threshold -> exactly zero.
  const VectorXd z = synergy::synergy(u, u);
  EXPECT_EQ(z(0), 0.0);
  EXPECT_EQ(z(1), 0.0);
}

TEST(Standardizer, PopulationMomentsAndFloor) {
  MatrixXd S(4, 2);
  S << 1, 5, 3, 5, 5, 5, 7, 5;
  const SynergyStandardizer st = standardizer_fit(S);
  EXPECT_DOUBLE_EQ(st.mean(0), 4.0);
  // Population std: sqrt(mean of squared deviations 9,1,1,9) = sqrt(5).
  EXPECT_NEAR(st.std(0), std::sqrt(5.0), 1e-12);
  // Constant column hits the 1e-8 floor.
  EXPECT_DOUBLE_EQ(st.std(1), 1e-8);

  VectorXd x(2);
  x << 7, 5;
  const VectorXd z = standardizer_apply(st, x);
  EXPECT_NEAR(z(0), 3.0 / std::sqrt(5.0), 1e-12);
  EXPECT_DOUBLE_EQ(z(1), 0.0);

  // Applying to the fit data yields zero mean, unit population variance.
  double mean = 0.0, var = 0.0;
  for (int i = 0; i < 4; ++i) mean += standardizer_apply(st, S.row(i).transpose())(0);
  mean /= 4.0;
  for (int i = 0; i < 4; ++i) {
    const double d = standardizer_apply(st, S.row(i).transpose())(0) - mean;
    var += d * d;
  }
  EXPECT_NEAR(mean, 0.0, 1e-12);
  EXPECT_NEAR(var / 4.0, 1.0, 1e-12);
}
