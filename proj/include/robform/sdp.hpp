#pragma once

// Dense primal-dual interior-point solver for small semidefinite programs in
// linear-matrix-inequality form:
//
//   maximize    b^T y
//   subject to  F0_j + sum_k y_k F_kj  >= 0   (PSD, one per LMI block j)
//               E y = f                        (linear equalities)
//
// PSD matrix variables are declared with add_psd_block, which allocates one
// scalar per upper-triangle entry and the LMI "X >= 0". Equalities are
// eliminated by pivoting before the interior-point iteration. The iteration
// is an infeasible path-following method with Nesterov-Todd scaling and an
// adaptive centering parameter chosen from a predictor step.

#include "robform/parallel.hpp"
#include "robform/smr.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace robform::sdp {

enum class Status { optimal, infeasible, max_iter, numerical_failure };

inline const char* to_string(Status s) {
  switch (s) {
    case Status::optimal:
      return "optimal";
    case Status::infeasible:
      return "infeasible";
    case Status::max_iter:
      return "max_iter";
    case Status::numerical_failure:
      return "numerical_failure";
  }
  return "unknown";
}

struct PsdBlock {
  std::string name;
  int size = 0;
  int first_var = 0;
  int lmi = -1;

  int num_vars() const { return size * (size + 1) / 2; }
  /// Variable holding entry (a, b) of the block.
  int var(int a, int b) const {
    if (a > b) std::swap(a, b);
    return first_var + b * (b + 1) / 2 + a;
  }
};

struct LmiTerm {
  int var;
  SymSparse coeff;
};

struct Lmi {
  std::string name;
  int size = 0;
  SymSparse constant;
  std::vector<LmiTerm> terms;
};

struct LinearEquality {
  std::vector<std::pair<int, double>> coeffs;
  double rhs = 0.0;
};

class Problem {
 public:
  int add_free(std::string name) {
    var_names_.push_back(std::move(name));
    objective_.push_back(0.0);
    return num_vars() - 1;
  }

  PsdBlock add_psd_block(std::string name, int size) {
    if (size < 1) throw std::invalid_argument("PSD block size must be positive");
    PsdBlock blk;
    blk.name = name;
    blk.size = size;
    blk.first_var = num_vars();
    for (int b = 0; b < size; ++b) {
      for (int a = 0; a <= b; ++a) add_free(name + "[" + std::to_string(a) + "," + std::to_string(b) + "]");
    }
    blk.lmi = add_lmi(name + " >= 0", size);
    for (int b = 0; b < size; ++b) {
      for (int a = 0; a <= b; ++a) {
        SymSparse e(size);
        e.add(a, b, 1.0);
        add_lmi_term(blk.lmi, blk.var(a, b), std::move(e));
      }
    }
    psd_blocks_.push_back(blk);
    return blk;
  }

  int add_lmi(std::string name, int size) {
    if (size < 1) throw std::invalid_argument("LMI size must be positive");
    Lmi l;
    l.name = std::move(name);
    l.size = size;
    l.constant = SymSparse(size);
    lmis_.push_back(std::move(l));
    return static_cast<int>(lmis_.size()) - 1;
  }

  void set_lmi_constant(int lmi, SymSparse c) {
    check_lmi(lmi, c);
    lmis_[lmi].constant = std::move(c);
  }

  void add_lmi_term(int lmi, int var, SymSparse coeff) {
    check_lmi(lmi, coeff);
    if (var < 0 || var >= num_vars()) throw std::out_of_range("LMI term refers to unknown variable");
    lmis_[lmi].terms.push_back({var, std::move(coeff)});
  }

  void add_equality(std::vector<std::pair<int, double>> coeffs, double rhs) {
    for (const auto& [v, c] : coeffs) {
      if (v < 0 || v >= num_vars()) throw std::out_of_range("equality refers to unknown variable");
    }
    equalities_.push_back({std::move(coeffs), rhs});
  }

  /// Objective is maximized.
  void set_objective(int var, double coef) { objective_.at(var) = coef; }

  int num_vars() const { return static_cast<int>(var_names_.size()); }
  const std::vector<std::string>& var_names() const { return var_names_; }
  const std::vector<Lmi>& lmis() const { return lmis_; }
  const std::vector<PsdBlock>& psd_blocks() const { return psd_blocks_; }
  const std::vector<LinearEquality>& equalities() const { return equalities_; }
  const std::vector<double>& objective() const { return objective_; }

  /// Value of LMI j at y.
  Eigen::MatrixXd lmi_value(int j, const Eigen::VectorXd& y) const {
    const Lmi& l = lmis_.at(j);
    Eigen::MatrixXd m = l.constant.dense();
    for (const auto& t : l.terms) t.coeff.add_to(m, y(t.var));
    return m;
  }

  double objective_value(const Eigen::VectorXd& y) const {
    double v = 0.0;
    for (int k = 0; k < num_vars(); ++k) v += objective_[k] * y(k);
    return v;
  }

  /// Plain-text dump: header, objective, equalities, then each LMI as its
  /// constant and coefficient matrices written row-major.
  std::string dump() const {
    std::ostringstream os;
    os.precision(17);
    os << "vars " << num_vars() << "\nlmis " << lmis_.size() << "\nequalities " << equalities_.size() << "\n";
    os << "objective";
    for (double c : objective_) os << ' ' << c;
    os << "\n";
    for (const auto& e : equalities_) {
      os << "eq " << e.rhs;
      for (const auto& [v, c] : e.coeffs) os << ' ' << v << ':' << c;
      os << "\n";
    }
    auto write_matrix = [&](const Eigen::MatrixXd& m) {
      for (int i = 0; i < m.rows(); ++i) {
        for (int j = 0; j < m.cols(); ++j) os << (j ? " " : "") << m(i, j);
        os << "\n";
      }
    };
    for (const auto& l : lmis_) {
      os << "lmi " << l.size << ' ' << l.terms.size() << "\nconstant\n";
      write_matrix(l.constant.dense());
      for (const auto& t : l.terms) {
        os << "var " << t.var << "\n";
        write_matrix(t.coeff.dense());
      }
    }
    return os.str();
  }

 private:
  void check_lmi(int lmi, const SymSparse& m) const {
    if (lmi < 0 || lmi >= static_cast<int>(lmis_.size())) throw std::out_of_range("unknown LMI");
    if (m.n != lmis_[lmi].size) throw std::invalid_argument("LMI coefficient size mismatch");
  }

  std::vector<std::string> var_names_;
  std::vector<double> objective_;
  std::vector<Lmi> lmis_;
  std::vector<PsdBlock> psd_blocks_;
  std::vector<LinearEquality> equalities_;
};

struct Settings {
  double tol = 1e-8;
  int max_iter = 200;
  double divergence_bound = 1e8;
  bool verbose = false;
};

struct Solution {
  Status status = Status::numerical_failure;
  double objective_value = 0.0;
  Eigen::VectorXd y;
  double duality_gap = std::numeric_limits<double>::infinity();
  double primal_infeasibility = std::numeric_limits<double>::infinity();
  double dual_infeasibility = std::numeric_limits<double>::infinity();
  std::vector<double> min_eigenvalues;
  int iterations = 0;
  std::string diagnostic;

  Eigen::MatrixXd block_value(const PsdBlock& b) const {
    Eigen::MatrixXd m(b.size, b.size);
    for (int j = 0; j < b.size; ++j) {
      for (int i = 0; i <= j; ++i) m(i, j) = m(j, i) = y(b.var(i, j));
    }
    return m;
  }
};

namespace detail {

inline double min_eigenvalue(const Eigen::MatrixXd& m) {
  if (m.rows() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m, Eigen::EigenvaluesOnly);
  return es.eigenvalues()(0);
}

inline void symmetrize(Eigen::MatrixXd& m) { m = 0.5 * (m + m.transpose()).eval(); }

/// Largest alpha with x + alpha * dx >= 0 (infinity when unbounded).
inline double max_step(const Eigen::LLT<Eigen::MatrixXd>& chol, const Eigen::MatrixXd& dx) {
  Eigen::MatrixXd z = chol.matrixL().solve(dx);
  z = chol.matrixL().solve(z.transpose()).transpose();
  symmetrize(z);
  const double lmin = min_eigenvalue(z);
  return lmin < 0.0 ? -1.0 / lmin : std::numeric_limits<double>::infinity();
}

/// Standard-form data after equality elimination:
///   primal  min <C, X>  s.t.  <A_k, X> = b_k, X >= 0
///   dual    max b^T y   s.t.  C - sum_k y_k A_k = S >= 0
struct Reduced {
  std::vector<int> block_size;
  std::vector<Eigen::MatrixXd> c;
  // a[block] = list of (reduced var, coefficient)
  std::vector<std::vector<std::pair<int, SymSparse>>> a;
  Eigen::VectorXd b;
  double obj_offset = 0.0;
  // Map reduced solution back: y_full = base + sum over reduced var k of col_k * z_k
  Eigen::VectorXd y_base;
  std::vector<std::vector<std::pair<int, double>>> expand;  // per reduced var: (full var, coef)
  std::vector<int> block_lmi;  // original LMI index of each retained block
};

struct Prepared {
  Reduced red;
  std::optional<Status> early_status;
  std::string diagnostic;
};

inline Prepared prepare(const Problem& p, const Settings& st) {
  Prepared out;
  const int m = p.num_vars();

  // Gauss-Jordan on the equality system to pick one pivot variable per row.
  const int q = static_cast<int>(p.equalities().size());
  Eigen::MatrixXd e = Eigen::MatrixXd::Zero(q, m);
  Eigen::VectorXd f(q);
  for (int r = 0; r < q; ++r) {
    for (const auto& [v, c] : p.equalities()[r].coeffs) e(r, v) += c;
    f(r) = p.equalities()[r].rhs;
  }
  std::vector<int> pivot_of_row;
  std::vector<char> is_pivot(m, 0);
  std::vector<int> rows_used;
  for (int r = 0; r < q; ++r) {
    int best = -1;
    double best_abs = 0.0;
    for (int k = 0; k < m; ++k) {
      if (!is_pivot[k] && std::abs(e(r, k)) > best_abs) {
        best_abs = std::abs(e(r, k));
        best = k;
      }
    }
    const double scale = 1.0 + e.row(r).cwiseAbs().maxCoeff();
    if (best < 0 || best_abs <= 1e-12 * scale) {
      if (std::abs(f(r)) > 1e-9 * (1.0 + std::abs(f(r)))) {
        out.early_status = Status::infeasible;
        out.diagnostic = "inconsistent equality constraints";
        return out;
      }
      continue;
    }
    const double piv = e(r, best);
    e.row(r) /= piv;
    f(r) /= piv;
    for (int r2 = 0; r2 < q; ++r2) {
      if (r2 == r || e(r2, best) == 0.0) continue;
      const double factor = e(r2, best);
      e.row(r2) -= factor * e.row(r);
      f(r2) -= factor * f(r);
    }
    is_pivot[best] = 1;
    pivot_of_row.push_back(best);
    rows_used.push_back(r);
  }

  // y_full = y_base + sum_k expand_k z_k over free (non-pivot) variables.
  std::vector<int> free_vars;
  std::vector<int> reduced_index(m, -1);
  for (int k = 0; k < m; ++k) {
    if (!is_pivot[k]) {
      reduced_index[k] = static_cast<int>(free_vars.size());
      free_vars.push_back(k);
    }
  }
  Eigen::VectorXd y_base = Eigen::VectorXd::Zero(m);
  std::vector<std::vector<std::pair<int, double>>> expand(free_vars.size());
  for (std::size_t t = 0; t < free_vars.size(); ++t) expand[t].push_back({free_vars[t], 1.0});
  for (std::size_t i = 0; i < pivot_of_row.size(); ++i) {
    const int piv = pivot_of_row[i];
    const int r = rows_used[i];
    y_base(piv) = f(r);
    for (std::size_t t = 0; t < free_vars.size(); ++t) {
      const double c = e(r, free_vars[t]);
      if (c != 0.0) expand[t].push_back({piv, -c});
    }
  }

  // Objective over reduced variables.
  const auto& obj = p.objective();
  Eigen::VectorXd b(static_cast<Eigen::Index>(free_vars.size()));
  for (std::size_t t = 0; t < free_vars.size(); ++t) {
    double v = 0.0;
    for (const auto& [k, c] : expand[t]) v += obj[k] * c;
    b(static_cast<Eigen::Index>(t)) = v;
  }
  double offset = 0.0;
  for (int k = 0; k < m; ++k) offset += obj[k] * y_base(k);

  // Substitute into LMIs. Each full variable's coefficient feeds the reduced
  // variables listed in the transpose of `expand`.
  std::vector<std::vector<std::pair<int, double>>> feeds(m);  // full var -> (reduced var, coef)
  for (std::size_t t = 0; t < free_vars.size(); ++t) {
    for (const auto& [k, c] : expand[t]) feeds[k].push_back({static_cast<int>(t), c});
  }

  const int nred = static_cast<int>(free_vars.size());
  std::vector<char> used(nred, 0);
  Reduced red;
  for (int j = 0; j < static_cast<int>(p.lmis().size()); ++j) {
    const Lmi& l = p.lmis()[j];
    SymSparse f0 = l.constant;
    std::map<int, SymSparse> coef;
    for (const auto& t : l.terms) {
      if (y_base(t.var) != 0.0) {
        for (const auto& en : t.coeff.entries) f0.add(en.row, en.col, y_base(t.var) * en.val);
      }
      for (const auto& [rv, c] : feeds[t.var]) {
        auto [it, inserted] = coef.try_emplace(rv, SymSparse(l.size));
        for (const auto& en : t.coeff.entries) it->second.add(en.row, en.col, c * en.val);
      }
    }
    f0.compress();
    std::vector<std::pair<int, SymSparse>> terms;
    for (auto& [rv, sm] : coef) {
      sm.compress();
      if (!sm.entries.empty()) terms.emplace_back(rv, std::move(sm));
    }
    if (terms.empty()) {
      const double lmin = min_eigenvalue(f0.dense());
      if (lmin < -10.0 * st.tol) {
        out.early_status = Status::infeasible;
        out.diagnostic = "LMI '" + l.name + "' is constant and not PSD (min eigenvalue " + std::to_string(lmin) + ")";
        return out;
      }
      continue;
    }
    red.block_size.push_back(l.size);
    red.c.push_back(f0.dense());
    std::vector<std::pair<int, SymSparse>> a_terms;
    for (auto& [rv, sm] : terms) {
      used[rv] = 1;
      for (auto& en : sm.entries) en.val = -en.val;
      a_terms.emplace_back(rv, std::move(sm));
    }
    red.a.push_back(std::move(a_terms));
    red.block_lmi.push_back(j);
  }

  // Reduced variables that appear in no LMI: fixed at zero unless the
  // objective rewards them, in which case the problem is unbounded.
  std::vector<int> keep;
  std::vector<int> new_index(nred, -1);
  for (int t = 0; t < nred; ++t) {
    if (used[t]) {
      new_index[t] = static_cast<int>(keep.size());
      keep.push_back(t);
    } else if (std::abs(b(t)) > 0.0) {
      out.early_status = Status::infeasible;
      out.diagnostic = "infeasible or unbounded: variable '" + p.var_names()[free_vars[t]] +
                       "' is unconstrained but carries objective weight";
      return out;
    }
  }
  for (auto& blk : red.a) {
    for (auto& [rv, sm] : blk) rv = new_index[rv];
  }
  red.b.resize(static_cast<Eigen::Index>(keep.size()));
  for (std::size_t t = 0; t < keep.size(); ++t) {
    red.b(static_cast<Eigen::Index>(t)) = b(keep[t]);
    red.expand.push_back(expand[keep[t]]);
  }
  red.y_base = y_base;
  red.obj_offset = offset;
  out.red = std::move(red);
  return out;
}

/// Schur complement M_kl = sum_j <A_kj, W_j A_lj W_j>.
///
/// For each coefficient A_t the product T_t = W A_t W is formed once, either
/// densely or as a sum of rank-one terms when A_t has few entries, and then
/// paired with every coefficient at or after t. Coefficients are visited in
/// order of decreasing entry count so the long tail of sparse coefficients
/// never pairs with a dense one from the sparse side.
inline void build_schur(const Reduced& red, const std::vector<Eigen::MatrixXd>& w, Eigen::MatrixXd& mat) {
  const int m = static_cast<int>(red.b.size());
  mat.setZero(m, m);
  for (std::size_t j = 0; j < red.a.size(); ++j) {
    const int n = red.block_size[j];
    const Eigen::MatrixXd& wj = w[j];
    const auto& terms = red.a[j];
    const int nt = static_cast<int>(terms.size());
    std::vector<int> order(nt);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int p, int q) { return terms[p].second.entries.size() > terms[q].second.entries.size(); });

    // Each unordered pair of terms is written by exactly one index, and every
    // term maps to its own reduced variable, so rows can be filled concurrently.
    auto row = [&](int pos) {
      const auto& [k, a_t] = terms[order[pos]];
      Eigen::MatrixXd tmat = Eigen::MatrixXd::Zero(n, n);
      const std::size_t nnz = a_t.entries.size();
      if (2 * nnz < static_cast<std::size_t>(n)) {
        for (const auto& en : a_t.entries) {
          tmat.noalias() += en.val * wj.col(en.row) * wj.row(en.col);
          if (en.row != en.col) tmat.noalias() += en.val * wj.col(en.col) * wj.row(en.row);
        }
      } else {
        Eigen::MatrixXd bmat = Eigen::MatrixXd::Zero(n, n);
        for (const auto& en : a_t.entries) {
          bmat.row(en.row) += en.val * wj.row(en.col);
          if (en.row != en.col) bmat.row(en.col) += en.val * wj.row(en.row);
        }
        tmat.noalias() = wj * bmat;
      }
      for (int q = pos; q < nt; ++q) {
        const auto& [l, a_u] = terms[order[q]];
        const double v = a_u.dot(tmat);
        mat(k, l) += v;
        if (l != k) mat(l, k) += v;
      }
    };
    parallel_for(nt, row, nt >= 256 ? worker_count() : 1);
  }
}

}  // namespace detail

inline Solution solve(const Problem& problem, const Settings& st = {}) {
  if (!(st.tol > 1e-12 && st.tol < 1e-2)) throw std::invalid_argument("solver tolerance must lie in (1e-12, 1e-2)");
  Solution sol;
  sol.y = Eigen::VectorXd::Zero(problem.num_vars());

  auto finish = [&](Solution& s) {
    s.min_eigenvalues.clear();
    for (int j = 0; j < static_cast<int>(problem.lmis().size()); ++j) {
      s.min_eigenvalues.push_back(detail::min_eigenvalue(problem.lmi_value(j, s.y)));
    }
    s.objective_value = problem.objective_value(s.y);
    return s;
  };

  detail::Prepared prep = detail::prepare(problem, st);
  if (prep.early_status) {
    sol.status = *prep.early_status;
    sol.diagnostic = prep.diagnostic;
    return finish(sol);
  }
  const detail::Reduced& red = prep.red;
  const int m = static_cast<int>(red.b.size());
  const int nb = static_cast<int>(red.c.size());

  auto full_y = [&](const Eigen::VectorXd& z) {
    Eigen::VectorXd y = red.y_base;
    for (int t = 0; t < m; ++t) {
      for (const auto& [k, c] : red.expand[t]) y(k) += c * z(t);
    }
    return y;
  };

  if (m == 0) {
    // Every LMI is constant; feasibility was checked in prepare.
    sol.y = full_y(Eigen::VectorXd());
    sol.status = Status::optimal;
    sol.duality_gap = 0.0;
    sol.primal_infeasibility = sol.dual_infeasibility = 0.0;
    return finish(sol);
  }

  auto apply_a = [&](const std::vector<Eigen::MatrixXd>& x) {
    Eigen::VectorXd v = Eigen::VectorXd::Zero(m);
    for (int j = 0; j < nb; ++j) {
      for (const auto& [k, sm] : red.a[j]) v(k) += sm.dot(x[j]);
    }
    return v;
  };
  auto apply_at = [&](const Eigen::VectorXd& y) {
    std::vector<Eigen::MatrixXd> out(nb);
    for (int j = 0; j < nb; ++j) {
      out[j] = Eigen::MatrixXd::Zero(red.block_size[j], red.block_size[j]);
      for (const auto& [k, sm] : red.a[j]) sm.add_to(out[j], y(k));
    }
    return out;
  };

  // Initial point.
  int n_total = 0;
  std::vector<Eigen::MatrixXd> x(nb), s(nb);
  double norm_c = 0.0;
  for (int j = 0; j < nb; ++j) {
    const int n = red.block_size[j];
    n_total += n;
    double amax = 0.0;
    double ratio = 0.0;
    for (const auto& [k, sm] : red.a[j]) {
      const double an = std::sqrt(std::max(sm.dot(sm.dense()), 0.0));
      amax = std::max(amax, an);
      ratio = std::max(ratio, (1.0 + std::abs(red.b(k))) / (1.0 + an));
    }
    const double cn = red.c[j].norm();
    norm_c += cn * cn;
    const double xi = std::max({10.0, std::sqrt(n), std::sqrt(n) * ratio});
    const double eta = std::max({10.0, std::sqrt(n), amax, cn});
    x[j] = xi * Eigen::MatrixXd::Identity(n, n);
    s[j] = eta * Eigen::MatrixXd::Identity(n, n);
  }
  norm_c = std::sqrt(norm_c);
  const double norm_b = red.b.norm();
  Eigen::VectorXd y = Eigen::VectorXd::Zero(m);

  Eigen::MatrixXd schur;
  std::vector<Eigen::MatrixXd> w(nb), g_scale(nb), g_inv(nb);
  std::vector<Eigen::VectorXd> d_scale(nb);

  for (int iter = 0; iter <= st.max_iter; ++iter) {
    sol.iterations = iter;
    // Residuals and convergence measures.
    const Eigen::VectorXd rp = red.b - apply_a(x);
    std::vector<Eigen::MatrixXd> aty = apply_at(y);
    std::vector<Eigen::MatrixXd> rd(nb);
    double rd_norm2 = 0.0;
    double pobj = 0.0;
    double xs = 0.0;
    for (int j = 0; j < nb; ++j) {
      rd[j] = red.c[j] - s[j] - aty[j];
      rd_norm2 += rd[j].squaredNorm();
      pobj += (red.c[j].array() * x[j].array()).sum();
      xs += (x[j].array() * s[j].array()).sum();
    }
    const double dobj = red.b.dot(y);
    const double pinf = rp.norm() / (1.0 + norm_b);
    const double dinf = std::sqrt(rd_norm2) / (1.0 + norm_c);
    const double denom = 1.0 + std::abs(pobj) + std::abs(dobj);
    const double relgap = std::max(std::abs(pobj - dobj), std::max(xs, 0.0)) / denom;
    const double mu = xs / n_total;

    sol.duality_gap = relgap;
    sol.primal_infeasibility = pinf;
    sol.dual_infeasibility = dinf;
    sol.y = full_y(y);

    if (st.verbose) {
      std::fprintf(stderr, "it %3d  pobj % .10e  dobj % .10e  gap %.2e  pinf %.2e  dinf %.2e  mu %.2e\n", iter, pobj + red.obj_offset,
                   dobj + red.obj_offset, relgap, pinf, dinf, mu);
    }

    if (relgap <= st.tol && pinf <= st.tol && dinf <= st.tol) {
      // Feasibility of the LMIs at y must also hold to 10 tol.
      bool lmis_ok = true;
      for (int j = 0; j < nb && lmis_ok; ++j) {
        lmis_ok = detail::min_eigenvalue(red.c[j] - aty[j]) >= -10.0 * st.tol;
      }
      if (lmis_ok) {
        sol.status = Status::optimal;
        return finish(sol);
      }
    }

    // Divergence: a growing primal X with vanishing A(X) certifies that the
    // LMIs are infeasible; a growing y with small dual residual means the
    // objective is unbounded.
    const double y_norm = y.cwiseAbs().maxCoeff();
    double x_norm = 0.0;
    for (int j = 0; j < nb; ++j) x_norm = std::max(x_norm, x[j].trace());
    if (x_norm > st.divergence_bound || y_norm > st.divergence_bound) {
      sol.status = Status::infeasible;
      if (x_norm > st.divergence_bound) {
        std::vector<Eigen::MatrixXd> xn(nb);
        double cx = 0.0;
        for (int j = 0; j < nb; ++j) {
          xn[j] = x[j] / x_norm;
          cx += (red.c[j].array() * xn[j].array()).sum();
        }
        const double ax = apply_a(xn).norm();
        sol.diagnostic = "LMIs infeasible: primal ray with <C,X> = " + std::to_string(cx) + ", |A(X)| = " + std::to_string(ax);
      } else {
        sol.diagnostic = "infeasible or unbounded: dual iterate diverged (|y| = " + std::to_string(y_norm) + ")";
      }
      return finish(sol);
    }
    if (iter == st.max_iter) break;

    // Nesterov-Todd scaling W with W S W = X.
    std::vector<Eigen::LLT<Eigen::MatrixXd>> chol_x(nb), chol_s(nb);
    for (int j = 0; j < nb; ++j) {
      chol_x[j].compute(x[j]);
      chol_s[j].compute(s[j]);
      if (chol_x[j].info() != Eigen::Success || chol_s[j].info() != Eigen::Success) {
        sol.status = Status::numerical_failure;
        sol.diagnostic = "iterate lost positive definiteness";
        return finish(sol);
      }
      const Eigen::MatrixXd lx = chol_x[j].matrixL();
      const Eigen::MatrixXd ls = chol_s[j].matrixL();
      Eigen::BDCSVD<Eigen::MatrixXd> svd(ls.transpose() * lx, Eigen::ComputeFullU | Eigen::ComputeFullV);
      const Eigen::VectorXd dvals = svd.singularValues();
      if (dvals.minCoeff() <= 0.0) {
        sol.status = Status::numerical_failure;
        sol.diagnostic = "degenerate scaling matrix";
        return finish(sol);
      }
      // G^{-1} X G^{-T} = G^T S G = diag(d).
      g_scale[j] = lx * svd.matrixV() * dvals.cwiseSqrt().cwiseInverse().asDiagonal();
      g_inv[j] = dvals.cwiseSqrt().asDiagonal() * svd.matrixV().transpose() *
                 chol_x[j].matrixL().solve(Eigen::MatrixXd::Identity(red.block_size[j], red.block_size[j]));
      d_scale[j] = dvals;
      w[j] = g_scale[j] * g_scale[j].transpose();
      detail::symmetrize(w[j]);
    }

    const auto t_schur = std::chrono::steady_clock::now();
    detail::build_schur(red, w, schur);
    const auto t_chol = std::chrono::steady_clock::now();
    Eigen::LLT<Eigen::MatrixXd> schur_chol(schur);
    if (st.verbose) {
      const auto t_end = std::chrono::steady_clock::now();
      std::fprintf(stderr, "       schur %.3fs  cholesky %.3fs\n", std::chrono::duration<double>(t_chol - t_schur).count(),
                   std::chrono::duration<double>(t_end - t_chol).count());
    }
    if (schur_chol.info() != Eigen::Success) {
      const double reg = 1e-13 * std::max(1.0, schur.diagonal().cwiseAbs().maxCoeff());
      schur.diagonal().array() += reg;
      schur_chol.compute(schur);
      if (schur_chol.info() != Eigen::Success) {
        sol.status = Status::numerical_failure;
        sol.diagnostic = "Schur complement is not positive definite";
        return finish(sol);
      }
    }

    // Solves the Newton system for a given complementarity target Rc.
    auto newton = [&](const std::vector<Eigen::MatrixXd>& rc, Eigen::VectorXd& dy, std::vector<Eigen::MatrixXd>& dx,
                      std::vector<Eigen::MatrixXd>& ds) {
      std::vector<Eigen::MatrixXd> tmp(nb);
      for (int j = 0; j < nb; ++j) tmp[j] = rc[j] - w[j] * rd[j] * w[j];
      dy = schur_chol.solve(rp - apply_a(tmp));
      const std::vector<Eigen::MatrixXd> atdy = apply_at(dy);
      for (int j = 0; j < nb; ++j) {
        ds[j] = rd[j] - atdy[j];
        dx[j] = rc[j] - w[j] * ds[j] * w[j];
        detail::symmetrize(dx[j]);
        detail::symmetrize(ds[j]);
      }
    };
    auto step_lengths = [&](const std::vector<Eigen::MatrixXd>& dx, const std::vector<Eigen::MatrixXd>& ds) {
      double ap = std::numeric_limits<double>::infinity();
      double ad = std::numeric_limits<double>::infinity();
      for (int j = 0; j < nb; ++j) {
        ap = std::min(ap, detail::max_step(chol_x[j], dx[j]));
        ad = std::min(ad, detail::max_step(chol_s[j], ds[j]));
      }
      return std::pair<double, double>{ap, ad};
    };

    // Predictor (affine scaling) step.
    std::vector<Eigen::MatrixXd> rc(nb), dx(nb), ds(nb);
    Eigen::VectorXd dy;
    for (int j = 0; j < nb; ++j) rc[j] = -x[j];
    newton(rc, dy, dx, ds);
    auto [ap_max, ad_max] = step_lengths(dx, ds);
    const double ap_aff = std::min(1.0, ap_max);
    const double ad_aff = std::min(1.0, ad_max);
    double xs_aff = 0.0;
    for (int j = 0; j < nb; ++j) xs_aff += ((x[j] + ap_aff * dx[j]).array() * (s[j] + ad_aff * ds[j]).array()).sum();
    const double mu_aff = std::max(xs_aff, 0.0) / n_total;
    const double expo = std::max(1.0, 3.0 * std::pow(std::min(ap_aff, ad_aff), 2));
    double sigma = std::pow(std::clamp(mu_aff / mu, 0.0, 1.0), expo);
    // Keep some centering while the iterate is still infeasible.
    if (pinf > 1e-2 || dinf > 1e-2) sigma = std::max(sigma, 0.1);

    // Corrector step with the chosen centering.
    // In scaled coordinates the complementarity equation is diagonal:
    // (dX~ + dS~)_ab (d_a + d_b) = 2 sigma mu I - 2 D^2 - (dX~p dS~p + dS~p dX~p).
    for (int j = 0; j < nb; ++j) {
      const Eigen::MatrixXd dxs = g_inv[j] * dx[j] * g_inv[j].transpose();
      const Eigen::MatrixXd dss = g_scale[j].transpose() * ds[j] * g_scale[j];
      const Eigen::MatrixXd prod = dxs * dss;
      Eigen::MatrixXd rhs = -(prod + prod.transpose());
      const Eigen::VectorXd& d = d_scale[j];
      rhs.diagonal().array() += 2.0 * sigma * mu - 2.0 * d.array().square();
      for (int b = 0; b < rhs.cols(); ++b) {
        for (int a = 0; a < rhs.rows(); ++a) rhs(a, b) /= d(a) + d(b);
      }
      rc[j] = g_scale[j] * rhs * g_scale[j].transpose();
      detail::symmetrize(rc[j]);
    }
    newton(rc, dy, dx, ds);
    std::tie(ap_max, ad_max) = step_lengths(dx, ds);
    const double gamma = 0.9 + 0.09 * std::min(ap_aff, ad_aff);
    const double ap = std::min(1.0, gamma * ap_max);
    const double ad = std::min(1.0, gamma * ad_max);
    if (!(ap > 0.0) || !(ad > 0.0) || !dy.allFinite()) {
      sol.status = Status::numerical_failure;
      sol.diagnostic = "search direction is not usable";
      return finish(sol);
    }
    for (int j = 0; j < nb; ++j) {
      x[j] += ap * dx[j];
      s[j] += ad * ds[j];
      detail::symmetrize(x[j]);
      detail::symmetrize(s[j]);
    }
    y += ad * dy;
  }

  sol.status = Status::max_iter;
  sol.diagnostic = "iteration limit reached";
  return finish(sol);
}

struct ResidualReport {
  std::vector<double> lmi_min_eigenvalues;
  std::vector<double> equality_violations;
  double objective = 0.0;

  double worst_lmi() const {
    return lmi_min_eigenvalues.empty() ? 0.0 : *std::min_element(lmi_min_eigenvalues.begin(), lmi_min_eigenvalues.end());
  }
  double worst_equality() const {
    double m = 0.0;
    for (double v : equality_violations) m = std::max(m, std::abs(v));
    return m;
  }
};

/// Recomputes constraint slacks and the objective at a given point.
inline ResidualReport residuals(const Problem& p, const Eigen::VectorXd& y) {
  if (y.size() != p.num_vars()) throw DimensionError("solution length differs from number of variables");
  ResidualReport r;
  for (int j = 0; j < static_cast<int>(p.lmis().size()); ++j) r.lmi_min_eigenvalues.push_back(detail::min_eigenvalue(p.lmi_value(j, y)));
  for (const auto& e : p.equalities()) {
    double v = -e.rhs;
    for (const auto& [k, c] : e.coeffs) v += c * y(k);
    r.equality_violations.push_back(v);
  }
  r.objective = p.objective_value(y);
  return r;
}

inline ResidualReport residuals(const Problem& p, const Solution& s) { return residuals(p, s.y); }

}  // namespace robform::sdp
