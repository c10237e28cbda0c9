#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include <cmath>
#include <stdexcept>
#include <string>

namespace rhmc {

/// Square matrix / column vector over the asset dimension. `Dim` is either a
/// compile-time asset count (1, 2) or Eigen::Dynamic.
template <int Dim>
using Mat = Eigen::Matrix<double, Dim, Dim>;
template <int Dim>
using Vec = Eigen::Matrix<double, Dim, 1>;

struct DimensionMismatch : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Input matrix failed the symmetric positive definite check.
struct NotPositiveDefinite : std::domain_error {
  using std::domain_error::domain_error;
};

/// A solve, factorization or quadrature that should succeed for valid inputs
/// did not (conditioning failure).
struct NumericalFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Equally spaced trading times t_k = k * dt, k = 0..M.
class TimeGrid {
 public:
  TimeGrid(double horizon, int steps) : horizon_(horizon), steps_(steps) {
    if (!(horizon > 0.0) || !std::isfinite(horizon))
      throw std::invalid_argument("TimeGrid: horizon must be positive");
    if (steps < 1) throw std::invalid_argument("TimeGrid: need at least one step");
  }

  double horizon() const { return horizon_; }
  int steps() const { return steps_; }
  double dt() const { return horizon_ / steps_; }
  double time(int k) const { return k == steps_ ? horizon_ : k * dt(); }
  /// Time left to the end of the program at step k.
  double remaining(int k) const { return k == 0 ? horizon_ : (steps_ - k) * dt(); }

  friend bool operator==(const TimeGrid&, const TimeGrid&) = default;

 private:
  double horizon_;
  int steps_;
};

/// Symmetric positive definite matrix together with its lower Cholesky factor.
/// Construction is the validation: a SymPosDef always holds a factorable matrix.
template <int Dim = Eigen::Dynamic>
class SymPosDef {
 public:
  using Matrix = Mat<Dim>;

  SymPosDef() = default;

  static SymPosDef checked(const Matrix& m) {
    if (m.rows() != m.cols()) throw DimensionMismatch("SymPosDef: matrix is not square");
    if (m.rows() == 0) throw DimensionMismatch("SymPosDef: empty matrix");
    const double scale = m.cwiseAbs().maxCoeff();
    if (!std::isfinite(scale)) throw NotPositiveDefinite("SymPosDef: non-finite entries");
    if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
      throw NotPositiveDefinite("SymPosDef: matrix is not symmetric");
    SymPosDef out;
    out.m_ = 0.5 * (m + m.transpose());
    if (!out.factor()) throw NotPositiveDefinite("SymPosDef: matrix is not positive definite");
    return out;
  }

  /// Returns false (leaving *this untouched) when `m` is not numerically PD.
  static bool try_make(const Matrix& m, SymPosDef& out) {
    SymPosDef tmp;
    tmp.m_ = 0.5 * (m + m.transpose());
    if (!tmp.factor()) return false;
    out = std::move(tmp);
    return true;
  }

  int dim() const { return static_cast<int>(m_.rows()); }
  const Matrix& matrix() const { return m_; }
  const Matrix& cholesky_lower() const { return l_; }

 private:
  bool factor() {
    Eigen::LLT<Matrix> llt(m_);
    if (llt.info() != Eigen::Success) return false;
    l_ = llt.matrixL();
    const double dmax = m_.diagonal().maxCoeff();
    const double lmin = l_.diagonal().minCoeff();
    return dmax > 0.0 && lmin * lmin > 1e-14 * dmax;
  }

  Matrix m_;
  Matrix l_;
};

}  // namespace rhmc
