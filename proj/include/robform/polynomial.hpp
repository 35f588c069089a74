#pragma once

// Sparse multivariate polynomials and matrix polynomials in the uncertainty
// vector theta. Coefficients are doubles; terms whose magnitude falls below
// kCoeffCleanup after an arithmetic operation are dropped.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace robform {

inline constexpr double kCoeffCleanup = 1e-14;

/// Thrown when operands disagree on parameter dimension or matrix shape.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Exponent of each theta_k in a monomial; length is the parameter dimension r.
using Exponents = std::vector<int>;

inline int total_degree(const Exponents& e) { return std::accumulate(e.begin(), e.end(), 0); }

/// Graded order, higher total degree first, ties broken lexicographically
/// with theta_1 > theta_2 > ... . For r = 1, d = 2 this yields (t^2, t, 1).
struct GradedDescending {
  bool operator()(const Exponents& a, const Exponents& b) const {
    const int da = total_degree(a);
    const int db = total_degree(b);
    if (da != db) return da > db;
    return a > b;
  }
};

inline Exponents multiply(const Exponents& a, const Exponents& b) {
  Exponents out(a.size());
  for (std::size_t k = 0; k < a.size(); ++k) out[k] = a[k] + b[k];
  return out;
}

inline double eval_monomial(const Exponents& e, std::span<const double> theta) {
  double v = 1.0;
  for (std::size_t k = 0; k < e.size(); ++k) {
    for (int p = 0; p < e[k]; ++p) v *= theta[k];
  }
  return v;
}

class Polynomial {
 public:
  using TermMap = std::map<Exponents, double, GradedDescending>;

  Polynomial() = default;
  explicit Polynomial(int r) : r_(r) {
    if (r < 0) throw DimensionError("polynomial dimension must be non-negative");
  }

  static Polynomial constant(int r, double c) {
    Polynomial p(r);
    p.add_term(Exponents(r, 0), c);
    return p;
  }

  /// theta_k (0-based k).
  static Polynomial variable(int r, int k) {
    if (k < 0 || k >= r) throw DimensionError("variable index out of range");
    Polynomial p(r);
    Exponents e(r, 0);
    e[k] = 1;
    p.add_term(e, 1.0);
    return p;
  }

  static Polynomial monomial(const Exponents& e, double c = 1.0) {
    Polynomial p(static_cast<int>(e.size()));
    p.add_term(e, c);
    return p;
  }

  int num_vars() const { return r_; }
  const TermMap& terms() const { return terms_; }
  bool is_zero() const { return terms_.empty(); }
  std::size_t size() const { return terms_.size(); }

  /// Zero polynomial has degree 0 by convention.
  int degree() const { return terms_.empty() ? 0 : total_degree(terms_.begin()->first); }

  double coeff(const Exponents& e) const {
    auto it = terms_.find(e);
    return it == terms_.end() ? 0.0 : it->second;
  }

  /// Accumulates c into the coefficient of e, dropping the term if it cancels.
  void add_term(const Exponents& e, double c) {
    if (static_cast<int>(e.size()) != r_) throw DimensionError("exponent length differs from r");
    for (int v : e) {
      if (v < 0) throw std::invalid_argument("negative exponent");
    }
    if (c == 0.0) return;
    auto [it, inserted] = terms_.try_emplace(e, c);
    if (!inserted) {
      it->second += c;
      if (std::abs(it->second) < kCoeffCleanup) terms_.erase(it);
    } else if (std::abs(c) < kCoeffCleanup) {
      terms_.erase(it);
    }
  }

  double eval(std::span<const double> theta) const {
    if (static_cast<int>(theta.size()) != r_) throw DimensionError("theta length differs from r");
    double v = 0.0;
    for (const auto& [e, c] : terms_) v += c * eval_monomial(e, theta);
    return v;
  }
  double eval(const Eigen::VectorXd& theta) const {
    return eval(std::span<const double>(theta.data(), static_cast<std::size_t>(theta.size())));
  }

  Polynomial& operator+=(const Polynomial& o) {
    check_same(o);
    for (const auto& [e, c] : o.terms_) add_term(e, c);
    return *this;
  }
  Polynomial& operator-=(const Polynomial& o) {
    check_same(o);
    for (const auto& [e, c] : o.terms_) add_term(e, -c);
    return *this;
  }
  Polynomial& operator*=(double s) {
    if (s == 0.0) {
      terms_.clear();
      return *this;
    }
    for (auto it = terms_.begin(); it != terms_.end();) {
      it->second *= s;
      if (std::abs(it->second) < kCoeffCleanup) {
        it = terms_.erase(it);
      } else {
        ++it;
      }
    }
    return *this;
  }

  friend Polynomial operator+(Polynomial a, const Polynomial& b) { return a += b; }
  friend Polynomial operator-(Polynomial a, const Polynomial& b) { return a -= b; }
  friend Polynomial operator*(Polynomial a, double s) { return a *= s; }
  friend Polynomial operator*(double s, Polynomial a) { return a *= s; }
  friend Polynomial operator-(Polynomial a) { return a *= -1.0; }

  friend Polynomial operator*(const Polynomial& a, const Polynomial& b) {
    a.check_same(b);
    Polynomial out(a.r_);
    if (a.is_zero() || b.is_zero()) return out;
    // Accumulate without intermediate cleanup so cancellation is judged on the final sum.
    std::map<Exponents, double, GradedDescending> acc;
    for (const auto& [ea, ca] : a.terms_) {
      for (const auto& [eb, cb] : b.terms_) acc[multiply(ea, eb)] += ca * cb;
    }
    for (auto& [e, c] : acc) {
      if (std::abs(c) >= kCoeffCleanup) out.terms_.emplace_hint(out.terms_.end(), e, c);
    }
    return out;
  }
  Polynomial& operator*=(const Polynomial& o) { return *this = *this * o; }

  /// Canonical-form equality: identical term maps.
  friend bool operator==(const Polynomial& a, const Polynomial& b) {
    return a.r_ == b.r_ && a.terms_ == b.terms_;
  }

  /// Largest absolute coefficient difference.
  double max_abs_diff(const Polynomial& o) const {
    check_same(o);
    double m = 0.0;
    for (const auto& [e, c] : terms_) m = std::max(m, std::abs(c - o.coeff(e)));
    for (const auto& [e, c] : o.terms_) {
      if (!terms_.count(e)) m = std::max(m, std::abs(c));
    }
    return m;
  }

  std::string to_string() const {
    if (terms_.empty()) return "0";
    std::string s;
    for (const auto& [e, c] : terms_) {
      if (!s.empty()) s += " + ";
      s += std::to_string(c);
      for (std::size_t k = 0; k < e.size(); ++k) {
        if (e[k] == 0) continue;
        s += "*t" + std::to_string(k + 1);
        if (e[k] > 1) s += "^" + std::to_string(e[k]);
      }
    }
    return s;
  }

 private:
  void check_same(const Polynomial& o) const {
    if (o.r_ != r_) throw DimensionError("polynomials have different parameter dimension");
  }

  int r_ = 0;
  TermMap terms_;
};

/// Dense rows x cols matrix of polynomials sharing one parameter dimension.
class MatrixPolynomial {
 public:
  MatrixPolynomial() = default;
  MatrixPolynomial(int rows, int cols, int r)
      : rows_(rows), cols_(cols), r_(r), entries_(static_cast<std::size_t>(rows) * cols, Polynomial(r)) {
    if (rows < 0 || cols < 0) throw DimensionError("negative matrix size");
  }

  static MatrixPolynomial identity(int n, int r) {
    MatrixPolynomial m(n, n, r);
    for (int i = 0; i < n; ++i) m(i, i) = Polynomial::constant(r, 1.0);
    m.symmetric_ = true;
    return m;
  }

  static MatrixPolynomial from_constant(const Eigen::MatrixXd& a, int r) {
    MatrixPolynomial m(static_cast<int>(a.rows()), static_cast<int>(a.cols()), r);
    for (int i = 0; i < m.rows_; ++i) {
      for (int j = 0; j < m.cols_; ++j) m(i, j) = Polynomial::constant(r, a(i, j));
    }
    return m;
  }

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  int num_vars() const { return r_; }

  Polynomial& operator()(int i, int j) {
    symmetric_ = false;
    return entries_[index(i, j)];
  }
  const Polynomial& operator()(int i, int j) const { return entries_[index(i, j)]; }
  const Polynomial& at(int i, int j) const { return entries_.at(index(i, j)); }

  /// Deg(M): max entry degree.
  int degree() const {
    int d = 0;
    for (const auto& p : entries_) d = std::max(d, p.degree());
    return d;
  }

  bool is_zero() const {
    return std::all_of(entries_.begin(), entries_.end(), [](const Polynomial& p) { return p.is_zero(); });
  }

  bool symmetric() const { return symmetric_; }

  /// Coefficient-wise symmetry check.
  bool is_symmetric(double tol = 1e-12) const {
    if (rows_ != cols_) return false;
    for (int i = 0; i < rows_; ++i) {
      for (int j = i + 1; j < cols_; ++j) {
        if ((*this)(i, j).max_abs_diff((*this)(j, i)) > tol) return false;
      }
    }
    return true;
  }

  /// Sets the symmetry flag after checking it, copying the upper triangle onto
  /// the lower one so the flag holds exactly.
  MatrixPolynomial& mark_symmetric(double tol = 1e-12) {
    if (!is_symmetric(tol)) throw std::invalid_argument("matrix polynomial is not symmetric");
    for (int i = 0; i < rows_; ++i) {
      for (int j = i + 1; j < cols_; ++j) entries_[index(j, i)] = entries_[index(i, j)];
    }
    symmetric_ = true;
    return *this;
  }

  Eigen::MatrixXd eval(std::span<const double> theta) const {
    if (static_cast<int>(theta.size()) != r_) throw DimensionError("theta length differs from r");
    Eigen::MatrixXd out(rows_, cols_);
    for (int i = 0; i < rows_; ++i) {
      for (int j = 0; j < cols_; ++j) {
        if (symmetric_ && j < i) {
          out(i, j) = out(j, i);
        } else {
          out(i, j) = (*this)(i, j).eval(theta);
        }
      }
    }
    return out;
  }
  Eigen::MatrixXd eval(const Eigen::VectorXd& theta) const {
    return eval(std::span<const double>(theta.data(), static_cast<std::size_t>(theta.size())));
  }

  MatrixPolynomial transpose() const {
    MatrixPolynomial t(cols_, rows_, r_);
    for (int i = 0; i < rows_; ++i) {
      for (int j = 0; j < cols_; ++j) t.entries_[t.index(j, i)] = (*this)(i, j);
    }
    t.symmetric_ = symmetric_;
    return t;
  }

  MatrixPolynomial& operator+=(const MatrixPolynomial& o) {
    check_shape(o);
    for (std::size_t k = 0; k < entries_.size(); ++k) entries_[k] += o.entries_[k];
    symmetric_ = symmetric_ && o.symmetric_;
    return *this;
  }
  MatrixPolynomial& operator-=(const MatrixPolynomial& o) {
    check_shape(o);
    for (std::size_t k = 0; k < entries_.size(); ++k) entries_[k] -= o.entries_[k];
    symmetric_ = symmetric_ && o.symmetric_;
    return *this;
  }
  MatrixPolynomial& operator*=(double s) {
    for (auto& p : entries_) p *= s;
    return *this;
  }
  MatrixPolynomial& operator*=(const Polynomial& p) {
    for (auto& e : entries_) e = e * p;
    return *this;
  }

  friend MatrixPolynomial operator+(MatrixPolynomial a, const MatrixPolynomial& b) { return a += b; }
  friend MatrixPolynomial operator-(MatrixPolynomial a, const MatrixPolynomial& b) { return a -= b; }
  friend MatrixPolynomial operator*(MatrixPolynomial a, double s) { return a *= s; }
  friend MatrixPolynomial operator*(MatrixPolynomial a, const Polynomial& p) { return a *= p; }

  friend MatrixPolynomial operator*(const MatrixPolynomial& a, const MatrixPolynomial& b) {
    if (a.cols_ != b.rows_) throw DimensionError("inner matrix dimensions differ");
    if (a.r_ != b.r_) throw DimensionError("matrix polynomials have different parameter dimension");
    MatrixPolynomial out(a.rows_, b.cols_, a.r_);
    for (int i = 0; i < a.rows_; ++i) {
      for (int k = 0; k < a.cols_; ++k) {
        const Polynomial& aik = a(i, k);
        if (aik.is_zero()) continue;
        for (int j = 0; j < b.cols_; ++j) {
          const Polynomial& bkj = b(k, j);
          if (bkj.is_zero()) continue;
          out.entries_[out.index(i, j)] += aik * bkj;
        }
      }
    }
    return out;
  }

  /// Product with a constant real matrix on the right.
  MatrixPolynomial times(const Eigen::MatrixXd& m) const {
    if (cols_ != m.rows()) throw DimensionError("inner matrix dimensions differ");
    MatrixPolynomial out(rows_, static_cast<int>(m.cols()), r_);
    for (int i = 0; i < rows_; ++i) {
      for (int k = 0; k < cols_; ++k) {
        const Polynomial& aik = (*this)(i, k);
        if (aik.is_zero()) continue;
        for (int j = 0; j < out.cols_; ++j) {
          if (m(k, j) != 0.0) out.entries_[out.index(i, j)] += aik * m(k, j);
        }
      }
    }
    return out;
  }

  double max_abs_diff(const MatrixPolynomial& o) const {
    check_shape(o);
    double m = 0.0;
    for (std::size_t k = 0; k < entries_.size(); ++k) m = std::max(m, entries_[k].max_abs_diff(o.entries_[k]));
    return m;
  }

  friend bool operator==(const MatrixPolynomial& a, const MatrixPolynomial& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.r_ == b.r_ && a.entries_ == b.entries_;
  }

 private:
  std::size_t index(int i, int j) const {
    if (i < 0 || i >= rows_ || j < 0 || j >= cols_) throw std::out_of_range("matrix polynomial index");
    return static_cast<std::size_t>(i) * cols_ + j;
  }
  void check_shape(const MatrixPolynomial& o) const {
    if (o.rows_ != rows_ || o.cols_ != cols_ || o.r_ != r_) throw DimensionError("matrix polynomial shape mismatch");
  }

  int rows_ = 0;
  int cols_ = 0;
  int r_ = 0;
  std::vector<Polynomial> entries_;
  bool symmetric_ = false;
};

/// Constant real matrix times a matrix polynomial.
inline MatrixPolynomial times(const Eigen::MatrixXd& m, const MatrixPolynomial& a) {
  return a.transpose().times(m.transpose()).transpose();
}

}  // namespace robform
