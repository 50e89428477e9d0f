#pragma once

// Dense complex linear algebra on truncated tensor-product Hilbert spaces.
//
// Kronecker convention: row-major, factor order = layout order. For a layout
// [d0, d1, d2] the basis index of |i0,i1,i2> is (i0*d1 + i1)*d2 + i2.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "uscsim/errors.hpp"

namespace uscsim {

using cplx = std::complex<double>;
using Matrix = Eigen::MatrixXcd;
using Vector = Eigen::VectorXcd;
using RealVector = Eigen::VectorXd;
using Index = Eigen::Index;

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr cplx kI{0.0, 1.0};

// ---------------------------------------------------------------------------
// HilbertLayout

class HilbertLayout {
 public:
  HilbertLayout() = default;

  HilbertLayout(std::vector<int> dims, std::vector<std::string> labels)
      : dims_(std::move(dims)), labels_(std::move(labels)) {
    if (dims_.empty()) throw DimensionError("layout needs at least one factor");
    if (labels_.size() != dims_.size())
      throw DimensionError("layout labels/dims size mismatch");
    for (std::size_t k = 0; k < dims_.size(); ++k) {
      const int minimum = labels_[k] == "qubit" ? 2 : 1;
      if (dims_[k] < minimum)
        throw DimensionError("factor '" + labels_[k] + "' has dimension " +
                             std::to_string(dims_[k]));
    }
  }

  /// Unlabelled layout; factors are named f0, f1, ...
  explicit HilbertLayout(std::vector<int> dims) : HilbertLayout(dims, default_labels(dims.size())) {}

  const std::vector<int>& dims() const noexcept { return dims_; }
  const std::vector<std::string>& labels() const noexcept { return labels_; }
  std::size_t factors() const noexcept { return dims_.size(); }
  int dim(std::size_t slot) const { return dims_.at(slot); }

  Index total() const noexcept {
    Index n = 1;
    for (int d : dims_) n *= d;
    return n;
  }

  /// Slot of the factor with the given label, or -1.
  int find(const std::string& label) const noexcept {
    for (std::size_t k = 0; k < labels_.size(); ++k)
      if (labels_[k] == label) return static_cast<int>(k);
    return -1;
  }

  int slot(const std::string& label) const {
    const int s = find(label);
    if (s < 0) throw DimensionError("layout has no factor '" + label + "'");
    return s;
  }

  /// Stride of each factor in the flattened index.
  std::vector<Index> strides() const {
    std::vector<Index> s(dims_.size(), 1);
    for (int k = static_cast<int>(dims_.size()) - 2; k >= 0; --k) s[k] = s[k + 1] * dims_[k + 1];
    return s;
  }

  HilbertLayout subset(const std::vector<int>& keep) const {
    std::vector<int> d;
    std::vector<std::string> l;
    for (int k : keep) {
      d.push_back(dims_.at(k));
      l.push_back(labels_.at(k));
    }
    return {d, l};
  }

  friend bool operator==(const HilbertLayout& a, const HilbertLayout& b) {
    return a.dims_ == b.dims_ && a.labels_ == b.labels_;
  }
  friend bool operator!=(const HilbertLayout& a, const HilbertLayout& b) { return !(a == b); }

  std::string describe() const {
    std::string s = "[";
    for (std::size_t k = 0; k < dims_.size(); ++k) {
      if (k) s += ", ";
      s += labels_[k] + ":" + std::to_string(dims_[k]);
    }
    return s + "]";
  }

 private:
  static std::vector<std::string> default_labels(std::size_t n) {
    std::vector<std::string> l;
    for (std::size_t k = 0; k < n; ++k) l.push_back("f" + std::to_string(k));
    return l;
  }

  std::vector<int> dims_;
  std::vector<std::string> labels_;
};

// ---------------------------------------------------------------------------
// Operator

inline double max_abs(const Matrix& m) { return m.size() ? m.cwiseAbs().maxCoeff() : 0.0; }

/// max|A - A^dagger|
inline double hermiticity_defect(const Matrix& m) {
  return m.size() ? (m - m.adjoint()).cwiseAbs().maxCoeff() : 0.0;
}

class Operator {
 public:
  Operator() = default;

  Operator(HilbertLayout layout, Matrix data) : layout_(std::move(layout)), data_(std::move(data)) {
    if (data_.rows() != data_.cols())
      throw DimensionError("operator matrix is not square");
    if (data_.rows() != layout_.total())
      throw DimensionError("operator side " + std::to_string(data_.rows()) +
                           " does not match layout " + layout_.describe());
  }

  /// Single-factor operator with an anonymous layout.
  explicit Operator(Matrix data) : layout_(HilbertLayout({static_cast<int>(data.rows())})), data_(std::move(data)) {
    if (data_.rows() != data_.cols()) throw DimensionError("operator matrix is not square");
  }

  const HilbertLayout& layout() const noexcept { return layout_; }
  const Matrix& matrix() const noexcept { return data_; }
  Index dim() const noexcept { return data_.rows(); }

  /// Hermiticity check relative to the operator's largest entry.
  bool is_hermitian(double tol = 1e-12) const {
    const double scale = std::max(1.0, max_abs(data_));
    return hermiticity_defect(data_) < tol * scale;
  }

  void require_hermitian(double tol = 1e-12) const {
    if (!is_hermitian(tol))
      throw NumericalError("operator is not Hermitian (defect " +
                           std::to_string(hermiticity_defect(data_)) + ")");
  }

  Operator adjoint() const { return {layout_, data_.adjoint()}; }
  cplx trace() const { return data_.trace(); }

  /// <psi|A|psi>
  cplx expectation(const Vector& psi) const { return psi.dot(data_ * psi); }

  Operator& operator+=(const Operator& o) {
    check_same(o);
    data_ += o.data_;
    return *this;
  }
  Operator& operator-=(const Operator& o) {
    check_same(o);
    data_ -= o.data_;
    return *this;
  }
  Operator& operator*=(cplx s) {
    data_ *= s;
    return *this;
  }

  friend Operator operator+(Operator a, const Operator& b) { return a += b; }
  friend Operator operator-(Operator a, const Operator& b) { return a -= b; }
  friend Operator operator*(cplx s, Operator a) { return a *= s; }
  friend Operator operator*(Operator a, cplx s) { return a *= s; }
  friend Operator operator*(const Operator& a, const Operator& b) {
    a.check_same(b);
    return {a.layout_, a.data_ * b.data_};
  }

 private:
  void check_same(const Operator& o) const {
    if (layout_ != o.layout_)
      throw DimensionError("layout mismatch: " + layout_.describe() + " vs " + o.layout_.describe());
  }

  HilbertLayout layout_;
  Matrix data_;
};

inline Operator commutator(const Operator& a, const Operator& b) { return a * b - b * a; }

// ---------------------------------------------------------------------------
// DensityMatrix

struct StateTolerances {
  double trace = 1e-9;
  double hermitian = 1e-10;
  double min_eigenvalue = -1e-8;
};

/// Hermitian, unit-trace, positive-semidefinite operator. Validated on construction.
class DensityMatrix {
 public:
  DensityMatrix() = default;

  explicit DensityMatrix(Operator op, StateTolerances tol = {}) : op_(std::move(op)) {
    const cplx tr = op_.trace();
    if (std::abs(tr - 1.0) > tol.trace)
      throw NumericalError("density matrix trace " + std::to_string(tr.real()) + "+" +
                           std::to_string(tr.imag()) + "i is not 1");
    const double herm = hermiticity_defect(op_.matrix());
    if (herm > tol.hermitian)
      throw NumericalError("density matrix not Hermitian (defect " + std::to_string(herm) + ")");
    Eigen::SelfAdjointEigenSolver<Matrix> es(op_.matrix(), Eigen::EigenvaluesOnly);
    if (es.eigenvalues()(0) < tol.min_eigenvalue)
      throw NumericalError("density matrix has eigenvalue " + std::to_string(es.eigenvalues()(0)));
  }

  DensityMatrix(HilbertLayout layout, Matrix data, StateTolerances tol = {})
      : DensityMatrix(Operator(std::move(layout), std::move(data)), tol) {}

  static DensityMatrix pure(const HilbertLayout& layout, const Vector& psi) {
    const double nrm = psi.norm();
    if (nrm == 0.0) throw NumericalError("zero state vector");
    const Vector v = psi / nrm;
    return DensityMatrix(layout, v * v.adjoint());
  }

  const Operator& op() const noexcept { return op_; }
  const Matrix& matrix() const noexcept { return op_.matrix(); }
  const HilbertLayout& layout() const noexcept { return op_.layout(); }
  Index dim() const noexcept { return op_.dim(); }

  /// Tr(a rho), evaluated elementwise.
  double expect(const Operator& a) const { return expect_complex(a).real(); }
  cplx expect_complex(const Operator& a) const {
    if (a.layout() != layout()) throw DimensionError("expectation: layout mismatch");
    return a.matrix().transpose().cwiseProduct(matrix()).sum();
  }
  double purity() const { return (matrix() * matrix()).trace().real(); }

 private:
  Operator op_;
};

// ---------------------------------------------------------------------------
// Elementary single-factor operators

inline Matrix destroy(int n) {
  if (n < 1) throw DimensionError("destroy: dimension must be >= 1");
  Matrix a = Matrix::Zero(n, n);
  for (int m = 0; m + 1 < n; ++m) a(m, m + 1) = std::sqrt(static_cast<double>(m + 1));
  return a;
}

inline Matrix create(int n) { return destroy(n).adjoint(); }

inline Matrix number_op(int n) {
  if (n < 1) throw DimensionError("number: dimension must be >= 1");
  Matrix num = Matrix::Zero(n, n);
  for (int m = 0; m < n; ++m) num(m, m) = static_cast<double>(m);
  return num;
}

inline Matrix identity(int n) { return Matrix::Identity(n, n); }

// Qubit basis: index 0 = |L>, index 1 = |R>, so sigma_z = |L><L| - |R><R|.
inline Matrix sigma_x() {
  Matrix m(2, 2);
  m << 0, 1, 1, 0;
  return m;
}
inline Matrix sigma_y() {
  Matrix m(2, 2);
  m << 0, cplx(0, -1), cplx(0, 1), 0;
  return m;
}
inline Matrix sigma_z() {
  Matrix m(2, 2);
  m << 1, 0, 0, -1;
  return m;
}

inline Vector basis(int n, int k) {
  if (k < 0 || k >= n) throw DimensionError("basis index out of range");
  Vector v = Vector::Zero(n);
  v(k) = 1.0;
  return v;
}

/// Exact coherent-state Fock amplitudes e^{-|a|^2/2} a^k / sqrt(k!) for k < n, unnormalized.
inline Vector coherent_amplitudes(cplx alpha, int n) {
  Vector c(n);
  if (n == 0) return c;
  c(0) = std::exp(-0.5 * std::norm(alpha));
  for (int k = 1; k < n; ++k) c(k) = c(k - 1) * alpha / std::sqrt(static_cast<double>(k));
  return c;
}

/// Normalized truncated coherent state. Throws if the cut loses more than `max_deficit` norm.
inline Vector coherent_state(cplx alpha, int n, double max_deficit = 1e-8) {
  if (n < 1) throw DimensionError("coherent_state: dimension must be >= 1");
  Vector c = coherent_amplitudes(alpha, n);
  const double deficit = 1.0 - c.squaredNorm();
  if (deficit > max_deficit)
    throw TruncationError("coherent state |" + std::to_string(std::abs(alpha)) +
                              "> does not fit in " + std::to_string(n) + " Fock levels",
                          deficit);
  return c / c.norm();
}

// ---------------------------------------------------------------------------
// Tensor products

inline Matrix kron(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Index i = 0; i < a.rows(); ++i)
    for (Index j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

inline Vector kron(const Vector& a, const Vector& b) {
  Vector out(a.size() * b.size());
  for (Index i = 0; i < a.size(); ++i) out.segment(i * b.size(), b.size()) = a(i) * b;
  return out;
}

/// I x ... x op x ... x I with op in `slot`.
inline Operator embed(const Matrix& op, const HilbertLayout& layout, std::size_t slot) {
  if (slot >= layout.factors()) throw DimensionError("embed: slot out of range");
  if (op.rows() != layout.dim(slot) || op.cols() != layout.dim(slot))
    throw DimensionError("embed: operator side " + std::to_string(op.rows()) +
                         " does not match factor " + layout.labels()[slot] + ":" +
                         std::to_string(layout.dim(slot)));
  Index left = 1, right = 1;
  for (std::size_t k = 0; k < slot; ++k) left *= layout.dim(k);
  for (std::size_t k = slot + 1; k < layout.factors(); ++k) right *= layout.dim(k);
  Matrix m = op;
  if (right > 1) m = kron(m, identity(static_cast<int>(right)));
  if (left > 1) m = kron(identity(static_cast<int>(left)), m);
  return {layout, std::move(m)};
}

inline Operator embed(const Operator& op, const HilbertLayout& layout, std::size_t slot) {
  if (op.layout().factors() != 1) throw DimensionError("embed: operator must act on one factor");
  return embed(op.matrix(), layout, slot);
}

inline Operator embed(const Matrix& op, const HilbertLayout& layout, const std::string& label) {
  return embed(op, layout, static_cast<std::size_t>(layout.slot(label)));
}

// ---------------------------------------------------------------------------
// Spectral decomposition

struct EigenSystem {
  RealVector values;  ///< ascending
  Matrix vectors;     ///< columns, orthonormal
};

/// Makes the largest-magnitude component of each column real and positive.
inline void fix_phases(Matrix& vectors) {
  for (Index c = 0; c < vectors.cols(); ++c) {
    Index imax = 0;
    double best = -1.0;
    for (Index r = 0; r < vectors.rows(); ++r) {
      const double a = std::abs(vectors(r, c));
      if (a > best * (1.0 + 1e-12)) {
        best = a;
        imax = r;
      }
    }
    if (best > 0.0) vectors.col(c) *= std::conj(vectors(imax, c)) / best;
  }
}

inline EigenSystem eig_hermitian(const Matrix& h) {
  const double scale = std::max(1.0, max_abs(h));
  if (hermiticity_defect(h) > 1e-12 * scale)
    throw NumericalError("eig_hermitian: input is not Hermitian");
  Eigen::SelfAdjointEigenSolver<Matrix> es(h);
  if (es.info() != Eigen::Success) throw NumericalError("eig_hermitian: solver failed");
  EigenSystem out{es.eigenvalues(), es.eigenvectors()};
  fix_phases(out.vectors);
  return out;
}

inline EigenSystem eig_hermitian(const Operator& op) { return eig_hermitian(op.matrix()); }

// ---------------------------------------------------------------------------
// Partial trace / transpose

namespace detail {

inline std::vector<int> checked_keep(const HilbertLayout& layout, std::vector<int> keep) {
  if (keep.empty()) throw DimensionError("partial_trace: keep set is empty");
  std::sort(keep.begin(), keep.end());
  keep.erase(std::unique(keep.begin(), keep.end()), keep.end());
  for (int k : keep)
    if (k < 0 || k >= static_cast<int>(layout.factors()))
      throw DimensionError("partial_trace: factor index out of range");
  return keep;
}

/// For every flattened index: (index within kept factors, index within traced factors).
inline std::pair<std::vector<Index>, std::vector<Index>> split_indices(const HilbertLayout& layout,
                                                                       const std::vector<int>& keep) {
  const Index total = layout.total();
  const auto& dims = layout.dims();
  std::vector<bool> kept(dims.size(), false);
  for (int k : keep) kept[k] = true;
  std::vector<Index> ki(total), ti(total);
  std::vector<int> digits(dims.size(), 0);
  for (Index flat = 0; flat < total; ++flat) {
    Index rem = flat;
    for (int k = static_cast<int>(dims.size()) - 1; k >= 0; --k) {
      digits[k] = static_cast<int>(rem % dims[k]);
      rem /= dims[k];
    }
    Index a = 0, b = 0;
    for (std::size_t k = 0; k < dims.size(); ++k) {
      if (kept[k])
        a = a * dims[k] + digits[k];
      else
        b = b * dims[k] + digits[k];
    }
    ki[flat] = a;
    ti[flat] = b;
  }
  return {ki, ti};
}

}  // namespace detail

/// Partial trace of an arbitrary operator matrix (no positivity requirement).
inline Matrix partial_trace_matrix(const Matrix& m, const HilbertLayout& layout, std::vector<int> keep) {
  keep = detail::checked_keep(layout, std::move(keep));
  if (m.rows() != layout.total()) throw DimensionError("partial_trace: size mismatch");
  const HilbertLayout sub = layout.subset(keep);
  const Index nk = sub.total();
  const Index nt = layout.total() / nk;
  const auto [ki, ti] = detail::split_indices(layout, keep);
  // flat index lookup by (kept, traced)
  std::vector<Index> flat(layout.total());
  for (Index f = 0; f < layout.total(); ++f) flat[ti[f] * nk + ki[f]] = f;
  Matrix out = Matrix::Zero(nk, nk);
  for (Index t = 0; t < nt; ++t) {
    const Index* rows = &flat[t * nk];
    for (Index c = 0; c < nk; ++c)
      for (Index r = 0; r < nk; ++r) out(r, c) += m(rows[r], rows[c]);
  }
  return out;
}

inline DensityMatrix partial_trace(const DensityMatrix& rho, std::vector<int> keep) {
  keep = detail::checked_keep(rho.layout(), std::move(keep));
  Matrix red = partial_trace_matrix(rho.matrix(), rho.layout(), keep);
  red = 0.5 * (red + red.adjoint()).eval();
  return DensityMatrix(rho.layout().subset(keep), std::move(red));
}

inline Matrix partial_transpose_matrix(const Matrix& m, const HilbertLayout& layout, std::size_t factor) {
  if (factor >= layout.factors()) throw DimensionError("partial_transpose: factor out of range");
  if (m.rows() != layout.total()) throw DimensionError("partial_transpose: size mismatch");
  const Index stride = layout.strides()[factor];
  const Index d = layout.dim(factor);
  const Index total = layout.total();
  std::vector<Index> digit(total);
  for (Index f = 0; f < total; ++f) digit[f] = (f / stride) % d;
  Matrix out(total, total);
  for (Index j = 0; j < total; ++j)
    for (Index i = 0; i < total; ++i) {
      const Index di = digit[i], dj = digit[j];
      const Index i2 = i + (dj - di) * stride;
      const Index j2 = j + (di - dj) * stride;
      out(i2, j2) = m(i, j);
    }
  return out;
}

inline Operator partial_transpose(const Operator& op, std::size_t factor) {
  return {op.layout(), partial_transpose_matrix(op.matrix(), op.layout(), factor)};
}

inline Operator partial_transpose(const DensityMatrix& rho, std::size_t factor) {
  return partial_transpose(rho.op(), factor);
}

/// Half the trace norm of (a - b) for Hermitian a, b.
inline double trace_distance(const Matrix& a, const Matrix& b) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(a - b, Eigen::EigenvaluesOnly);
  return 0.5 * es.eigenvalues().cwiseAbs().sum();
}

inline double trace_distance(const DensityMatrix& a, const DensityMatrix& b) {
  if (a.layout() != b.layout()) throw DimensionError("trace_distance: layout mismatch");
  return trace_distance(a.matrix(), b.matrix());
}

/// Hermitian matrix function via eigendecomposition.
template <typename F>
Matrix hermitian_function(const Matrix& h, F&& f) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(h);
  RealVector fv = es.eigenvalues().unaryExpr(f);
  return es.eigenvectors() * fv.asDiagonal() * es.eigenvectors().adjoint();
}

}  // namespace uscsim
