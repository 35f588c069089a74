#pragma once

// Square matrix (Gram) representation of symmetric matrix polynomials.
//
// A symmetric s x s matrix polynomial M(theta) of degree <= 2d is written as
//   M(theta) = (phi (x) I_s)^T G (phi (x) I_s),
// where phi = phi(r, d) lists every monomial of degree <= d. Gram index of
// (monomial a, block row i) is a * s + i. G is not unique: any symmetric D
// whose expansion vanishes may be added, and the set of such D is spanned by
// gram_null_basis.

#include "robform/polynomial.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

namespace robform {

inline std::int64_t binomial(int n, int k) {
  if (k < 0 || k > n) return 0;
  k = std::min(k, n - k);
  std::int64_t v = 1;
  for (int i = 1; i <= k; ++i) v = v * (n - k + i) / i;
  return v;
}

/// l(r, d): number of monomials of degree <= d in r variables.
inline int monomial_count(int r, int d) { return static_cast<int>(binomial(r + d, d)); }

/// All monomials of degree <= d, in graded-descending order (constant last).
struct PowerVector {
  int r = 0;
  int d = 0;
  std::vector<Exponents> monos;

  int size() const { return static_cast<int>(monos.size()); }

  int index_of(const Exponents& e) const {
    auto it = lookup.find(e);
    return it == lookup.end() ? -1 : it->second;
  }

  Eigen::VectorXd eval(std::span<const double> theta) const {
    Eigen::VectorXd v(size());
    for (int a = 0; a < size(); ++a) v(a) = eval_monomial(monos[a], theta);
    return v;
  }

  std::map<Exponents, int, GradedDescending> lookup;
};

namespace detail {
inline void enumerate_exponents(int r, int remaining, int k, Exponents& cur, std::vector<Exponents>& out) {
  if (k == r) {
    out.push_back(cur);
    return;
  }
  for (int e = remaining; e >= 0; --e) {
    cur[k] = e;
    enumerate_exponents(r, remaining - e, k + 1, cur, out);
  }
  cur[k] = 0;
}
}  // namespace detail

inline PowerVector power_vector(int r, int d) {
  if (r < 1) throw std::invalid_argument("power_vector requires r >= 1");
  if (d < 0) throw std::invalid_argument("power_vector requires d >= 0");
  PowerVector pv;
  pv.r = r;
  pv.d = d;
  Exponents cur(r, 0);
  std::vector<Exponents> all;
  detail::enumerate_exponents(r, d, 0, cur, all);
  std::sort(all.begin(), all.end(), GradedDescending{});
  pv.monos = std::move(all);
  for (int a = 0; a < pv.size(); ++a) pv.lookup.emplace(pv.monos[a], a);
  return pv;
}

/// For each monomial mu of degree <= 2d, the ordered index pairs (a, b) of
/// phi(r, d) with phi_a * phi_b = mu.
struct ProductTable {
  PowerVector phi;
  std::map<Exponents, std::vector<std::pair<int, int>>, GradedDescending> pairs;

  explicit ProductTable(int r, int d) : phi(power_vector(r, d)) {
    for (int a = 0; a < phi.size(); ++a) {
      for (int b = 0; b < phi.size(); ++b) pairs[multiply(phi.monos[a], phi.monos[b])].emplace_back(a, b);
    }
  }

  const std::vector<std::pair<int, int>>* find(const Exponents& mu) const {
    auto it = pairs.find(mu);
    return it == pairs.end() ? nullptr : &it->second;
  }
};

/// Symmetric sparse matrix stored as its upper triangle (row <= col).
struct SymSparse {
  struct Entry {
    int row;
    int col;
    double val;
  };

  int n = 0;
  std::vector<Entry> entries;

  SymSparse() = default;
  explicit SymSparse(int size) : n(size) {}

  void add(int i, int j, double v) {
    if (i > j) std::swap(i, j);
    entries.push_back({i, j, v});
  }

  /// Merges duplicate positions and drops exact zeros.
  void compress() {
    std::map<std::pair<int, int>, double> m;
    for (const auto& e : entries) m[{e.row, e.col}] += e.val;
    entries.clear();
    for (const auto& [k, v] : m) {
      if (v != 0.0) entries.push_back({k.first, k.second, v});
    }
  }

  Eigen::MatrixXd dense() const {
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n);
    add_to(m, 1.0);
    return m;
  }

  void add_to(Eigen::MatrixXd& m, double scale) const {
    for (const auto& e : entries) {
      m(e.row, e.col) += scale * e.val;
      if (e.row != e.col) m(e.col, e.row) += scale * e.val;
    }
  }

  /// Frobenius inner product with a dense symmetric matrix.
  double dot(const Eigen::MatrixXd& m) const {
    double s = 0.0;
    for (const auto& e : entries) s += (e.row == e.col ? 1.0 : 2.0) * e.val * m(e.row, e.col);
    return s;
  }

  static SymSparse from_dense(const Eigen::MatrixXd& m, double drop = 0.0) {
    SymSparse s(static_cast<int>(m.rows()));
    for (int j = 0; j < m.cols(); ++j) {
      for (int i = 0; i <= j; ++i) {
        if (std::abs(m(i, j)) > drop) s.entries.push_back({i, j, m(i, j)});
      }
    }
    return s;
  }
};

/// SMR of a symmetric matrix polynomial: base Gram matrix plus a basis of the
/// Gram matrices that expand to zero.
struct GramForm {
  int r = 0;
  int d = 0;
  int s = 1;
  Eigen::MatrixXd base;
  std::vector<SymSparse> null_basis;
};

/// One entry (row <= col) of a sparse symmetric matrix polynomial.
struct PolyEntry {
  int row;
  int col;
  Polynomial value;
};

/// Canonical Gram matrix of a sparse symmetric matrix polynomial given by its
/// upper-triangle entries. Each coefficient is split equally over all Gram
/// positions whose monomial product equals its monomial.
inline SymSparse gram_canonical_sparse(std::span<const PolyEntry> upper, const ProductTable& table, int s) {
  const int l = table.phi.size();
  SymSparse g(l * s);
  for (const auto& pe : upper) {
    if (pe.row > pe.col) throw std::invalid_argument("gram_canonical_sparse expects upper-triangle entries");
    for (const auto& [mu, c] : pe.value.terms()) {
      const auto* pairs = table.find(mu);
      if (pairs == nullptr) throw std::invalid_argument("polynomial degree exceeds Gram space (Deg > 2d)");
      const double share = c / static_cast<double>(pairs->size());
      for (const auto& [a, b] : *pairs) {
        const int p = a * s + pe.row;
        const int q = b * s + pe.col;
        if (pe.row == pe.col) {
          // Diagonal block: the ordered pair (a, b) and (b, a) are the same
          // symmetric coordinate; visit each once from the upper triangle.
          if (p <= q) g.add(p, q, share);
        } else {
          g.add(p, q, share);
        }
      }
    }
  }
  g.compress();
  return g;
}

/// Basis of the symmetric Gram matrices whose expansion is the zero matrix
/// polynomial. Elements are orthonormal in the Frobenius inner product.
inline std::vector<SymSparse> gram_null_basis(int r, int d, int s) {
  if (r < 1 || d < 0 || s < 1) throw std::invalid_argument("gram_null_basis requires r >= 1, d >= 0, s >= 1");
  const ProductTable table(r, d);
  const int n = table.phi.size() * s;
  std::vector<SymSparse> basis;

  // One coordinate of a group: a symmetric unit pattern (one or two entries),
  // its weight in the expansion map and its squared Frobenius norm.
  struct Coord {
    int p;
    int q;
    double weight;
    double norm2;
  };

  auto emit_group_kernel = [&](const std::vector<Coord>& coords) {
    const int g = static_cast<int>(coords.size());
    if (g < 2) return;
    std::vector<Eigen::VectorXd> ortho;
    for (int k = 1; k < g; ++k) {
      Eigen::VectorXd v = Eigen::VectorXd::Zero(g);
      v(k) = 1.0 / coords[k].weight;
      v(0) = -1.0 / coords[0].weight;
      for (const auto& u : ortho) {
        double ip = 0.0;
        for (int t = 0; t < g; ++t) ip += coords[t].norm2 * u(t) * v(t);
        v -= ip * u;
      }
      double nrm2 = 0.0;
      for (int t = 0; t < g; ++t) nrm2 += coords[t].norm2 * v(t) * v(t);
      v /= std::sqrt(nrm2);
      ortho.push_back(v);
      SymSparse m(n);
      for (int t = 0; t < g; ++t) {
        if (v(t) != 0.0) m.add(coords[t].p, coords[t].q, v(t));
      }
      m.compress();
      basis.push_back(std::move(m));
    }
  };

  for (const auto& [mu, pairs] : table.pairs) {
    for (int i = 0; i < s; ++i) {
      for (int j = i; j < s; ++j) {
        std::vector<Coord> coords;
        for (const auto& [a, b] : pairs) {
          const int p = a * s + i;
          const int q = b * s + j;
          if (i == j) {
            if (a > b) continue;
            coords.push_back({p, q, a == b ? 1.0 : 2.0, a == b ? 1.0 : 2.0});
          } else {
            coords.push_back({p, q, 1.0, 2.0});
          }
        }
        emit_group_kernel(coords);
      }
    }
  }
  return basis;
}

inline GramForm gram_canonical(const MatrixPolynomial& m, int d) {
  if (m.rows() != m.cols()) throw DimensionError("gram_canonical requires a square matrix polynomial");
  if (!m.is_symmetric()) throw std::invalid_argument("gram_canonical requires a symmetric matrix polynomial");
  if (m.degree() > 2 * d) throw std::invalid_argument("matrix polynomial degree exceeds 2d");
  const int s = m.rows();
  const ProductTable table(m.num_vars(), d);
  std::vector<PolyEntry> upper;
  for (int i = 0; i < s; ++i) {
    for (int j = i; j < s; ++j) {
      if (!m(i, j).is_zero()) upper.push_back({i, j, m(i, j)});
    }
  }
  GramForm gf;
  gf.r = m.num_vars();
  gf.d = d;
  gf.s = s;
  gf.base = gram_canonical_sparse(upper, table, s).dense();
  gf.null_basis = gram_null_basis(gf.r, d, s);
  return gf;
}

/// Symbolic expansion (phi (x) I_s)^T G (phi (x) I_s).
inline MatrixPolynomial expand_gram(const Eigen::MatrixXd& g, int r, int d, int s) {
  const PowerVector phi = power_vector(r, d);
  if (g.rows() != phi.size() * s || g.cols() != g.rows()) throw DimensionError("Gram matrix size differs from l(r,d)*s");
  std::vector<std::map<Exponents, double, GradedDescending>> acc(static_cast<std::size_t>(s) * s);
  for (int a = 0; a < phi.size(); ++a) {
    for (int b = 0; b < phi.size(); ++b) {
      const Exponents mu = multiply(phi.monos[a], phi.monos[b]);
      for (int i = 0; i < s; ++i) {
        for (int j = 0; j < s; ++j) {
          const double v = g(a * s + i, b * s + j);
          if (v != 0.0) acc[static_cast<std::size_t>(i) * s + j][mu] += v;
        }
      }
    }
  }
  MatrixPolynomial out(s, s, r);
  for (int i = 0; i < s; ++i) {
    for (int j = 0; j < s; ++j) {
      Polynomial p(r);
      for (const auto& [mu, c] : acc[static_cast<std::size_t>(i) * s + j]) p.add_term(mu, c);
      out(i, j) = std::move(p);
    }
  }
  return out;
}

inline MatrixPolynomial gram_expand(const GramForm& g, std::span<const double> delta) {
  if (delta.size() != g.null_basis.size()) throw DimensionError("delta length differs from null basis size");
  Eigen::MatrixXd full = g.base;
  for (std::size_t k = 0; k < delta.size(); ++k) g.null_basis[k].add_to(full, delta[k]);
  return expand_gram(full, g.r, g.d, g.s);
}

/// Maps Gram index (monomial, block) at half-degree d_from to the index of the
/// same monomial at half-degree d_to.
inline std::vector<int> pad_index_map(int r, int d_from, int d_to, int s) {
  if (d_to < d_from) throw std::invalid_argument("gram_pad requires d_to >= d_from");
  const PowerVector from = power_vector(r, d_from);
  const PowerVector to = power_vector(r, d_to);
  std::vector<int> map(static_cast<std::size_t>(from.size()) * s);
  for (int a = 0; a < from.size(); ++a) {
    const int a2 = to.index_of(from.monos[a]);
    for (int i = 0; i < s; ++i) map[static_cast<std::size_t>(a) * s + i] = a2 * s + i;
  }
  return map;
}

inline Eigen::MatrixXd gram_pad(const Eigen::MatrixXd& a, int r, int d_from, int d_to, int s) {
  const std::vector<int> map = pad_index_map(r, d_from, d_to, s);
  if (a.rows() != static_cast<int>(map.size()) || a.cols() != a.rows()) throw DimensionError("gram_pad input size differs from l(r,d_from)*s");
  const int n_to = monomial_count(r, d_to) * s;
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n_to, n_to);
  for (int p = 0; p < a.rows(); ++p) {
    for (int q = 0; q < a.cols(); ++q) out(map[p], map[q]) = a(p, q);
  }
  return out;
}

inline SymSparse gram_pad(const SymSparse& a, int r, int d_from, int d_to, int s) {
  const std::vector<int> map = pad_index_map(r, d_from, d_to, s);
  SymSparse out(monomial_count(r, d_to) * s);
  for (const auto& e : a.entries) out.add(map[e.row], map[e.col], e.val);
  out.compress();
  return out;
}

/// Numeric (phi(theta) (x) I_s), of size l*s x s.
inline Eigen::MatrixXd lifted_power_vector(const PowerVector& phi, int s, std::span<const double> theta) {
  const Eigen::VectorXd v = phi.eval(theta);
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(phi.size() * s, s);
  for (int a = 0; a < phi.size(); ++a) {
    for (int i = 0; i < s; ++i) out(a * s + i, i) = v(a);
  }
  return out;
}

}  // namespace robform
