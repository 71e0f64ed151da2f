#include "cortex/conic.hpp"

#include <Eigen/SparseCholesky>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ostream>
#include <stdexcept>

namespace cortex {

void ConicProgram::validate() const {
  if (num_vars <= 0) throw std::invalid_argument("conic program: num_vars must be positive");
  if (cost.size() != num_vars) throw std::invalid_argument("conic program: cost dimension mismatch");
  if (eq.rows() > 0) {
    if (eq.cols() != num_vars) throw std::invalid_argument("conic program: eq matrix column mismatch");
    if (eq_rhs.size() != eq.rows()) throw std::invalid_argument("conic program: eq rhs dimension mismatch");
  } else if (eq_rhs.size() != 0) {
    throw std::invalid_argument("conic program: eq rhs without eq matrix");
  }
  if (lower.size() != 0 && lower.size() != num_vars)
    throw std::invalid_argument("conic program: lower bound dimension mismatch");
  if (upper.size() != 0 && upper.size() != num_vars)
    throw std::invalid_argument("conic program: upper bound dimension mismatch");
  for (const auto& cone : cones) {
    if (cone.p.size() != num_vars) throw std::invalid_argument("conic program: cone p dimension mismatch");
    if (cone.C.rows() != cone.d.size()) throw std::invalid_argument("conic program: cone C/d mismatch");
    if (cone.C.rows() > 0 && cone.C.cols() != num_vars)
      throw std::invalid_argument("conic program: cone C column mismatch");
  }
  // The interior-point core needs at least one inequality direction.
  int ineq = 0;
  for (int i = 0; i < lower.size(); ++i) ineq += std::isfinite(lower[i]) ? 1 : 0;
  for (int i = 0; i < upper.size(); ++i) ineq += std::isfinite(upper[i]) ? 1 : 0;
  ineq += static_cast<int>(cones.size());
  if (ineq == 0) throw std::invalid_argument("conic program: no cones or finite bounds");
}

namespace {

using SpMat = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;
using Eigen::VectorXd;

struct ConeLayout {
  int n_lp = 0;
  std::vector<int> soc_dim;
  std::vector<int> soc_off;  // offsets into the m-dimensional cone vectors
  int total = 0;
  int degree() const { return n_lp + static_cast<int>(soc_dim.size()); }
};

// Nesterov-Todd scaling state for K = R+^l x SOC(q1) x ... x SOC(qN).
struct Scaling {
  VectorXd lp_w;   // sqrt(s/z), size n_lp
  struct Soc {
    double eta = 1.0;
    VectorXd wbar;  // normalized scaling point, wbar'J wbar = 1
  };
  std::vector<Soc> soc;
};

VectorXd cone_identity(const ConeLayout& lay) {
  VectorXd e = VectorXd::Zero(lay.total);
  e.head(lay.n_lp).setOnes();
  for (size_t k = 0; k < lay.soc_dim.size(); ++k) e[lay.soc_off[k]] = 1.0;
  return e;
}

// u o v in the Jordan algebra of the cone.
void jordan_prod(const ConeLayout& lay, const VectorXd& u, const VectorXd& v, VectorXd& out) {
  out.head(lay.n_lp) = u.head(lay.n_lp).cwiseProduct(v.head(lay.n_lp));
  for (size_t k = 0; k < lay.soc_dim.size(); ++k) {
    const int off = lay.soc_off[k], q = lay.soc_dim[k];
    const auto ub = u.segment(off, q);
    const auto vb = v.segment(off, q);
    out[off] = ub.dot(vb);
    out.segment(off + 1, q - 1) = ub[0] * vb.tail(q - 1) + vb[0] * ub.tail(q - 1);
  }
}

// x with lambda o x = v.
void jordan_div(const ConeLayout& lay, const VectorXd& lambda, const VectorXd& v, VectorXd& out) {
  out.head(lay.n_lp) = v.head(lay.n_lp).cwiseQuotient(lambda.head(lay.n_lp));
  for (size_t k = 0; k < lay.soc_dim.size(); ++k) {
    const int off = lay.soc_off[k], q = lay.soc_dim[k];
    const double a = lambda[off];
    const auto b = lambda.segment(off + 1, q - 1);
    const double det = a * a - b.squaredNorm();
    const double x0 = (a * v[off] - b.dot(v.segment(off + 1, q - 1))) / det;
    out[off] = x0;
    out.segment(off + 1, q - 1) = (v.segment(off + 1, q - 1) - x0 * b) / a;
  }
}

// W v (scaled) and W^{-1} v. W is symmetric positive definite: orthant part
// diag(w); SOC part eta*V with V = [a, q'; q, I + q q'/(1+a)] for wbar=(a,q),
// so that V*V = 2 wbar wbar' - J and V^{-1} = J V J.
void apply_w(const ConeLayout& lay, const Scaling& sc, const VectorXd& v, VectorXd& out) {
  out.head(lay.n_lp) = sc.lp_w.cwiseProduct(v.head(lay.n_lp));
  for (size_t k = 0; k < lay.soc_dim.size(); ++k) {
    const int off = lay.soc_off[k], q = lay.soc_dim[k];
    const auto& wb = sc.soc[k].wbar;
    const auto vb = v.segment(off, q);
    const double a = wb[0];
    const double qv = wb.tail(q - 1).dot(vb.tail(q - 1));
    out[off] = sc.soc[k].eta * (a * vb[0] + qv);
    out.segment(off + 1, q - 1) =
        sc.soc[k].eta * (vb.tail(q - 1) + (vb[0] + qv / (1.0 + a)) * wb.tail(q - 1));
  }
}

void apply_winv(const ConeLayout& lay, const Scaling& sc, const VectorXd& v, VectorXd& out) {
  out.head(lay.n_lp) = v.head(lay.n_lp).cwiseQuotient(sc.lp_w);
  for (size_t k = 0; k < lay.soc_dim.size(); ++k) {
    const int off = lay.soc_off[k], q = lay.soc_dim[k];
    const auto& wb = sc.soc[k].wbar;
    const auto vb = v.segment(off, q);
    const double a = wb[0];
    const double qv = wb.tail(q - 1).dot(vb.tail(q - 1));
    out[off] = (a * vb[0] - qv) / sc.soc[k].eta;
    out.segment(off + 1, q - 1) =
        (vb.tail(q - 1) + (-vb[0] + qv / (1.0 + a)) * wb.tail(q - 1)) / sc.soc[k].eta;
  }
}

// Largest alpha >= 0 with u + alpha*du in the cone (may be +inf).
double max_step(const ConeLayout& lay, const VectorXd& u, const VectorXd& du) {
  double alpha = std::numeric_limits<double>::infinity();
  for (int i = 0; i < lay.n_lp; ++i) {
    if (du[i] < 0.0) alpha = std::min(alpha, -u[i] / du[i]);
  }
  for (size_t k = 0; k < lay.soc_dim.size(); ++k) {
    const int off = lay.soc_off[k], q = lay.soc_dim[k];
    const auto ub = u.segment(off, q);
    const auto db = du.segment(off, q);
    // q(alpha) = a alpha^2 + b alpha + c >= 0 with c = u'Ju > 0, plus the
    // linear condition u0 + alpha du0 >= 0.
    const double a = db[0] * db[0] - db.tail(q - 1).squaredNorm();
    const double b = 2.0 * (ub[0] * db[0] - ub.tail(q - 1).dot(db.tail(q - 1)));
    const double c = ub[0] * ub[0] - ub.tail(q - 1).squaredNorm();
    double alpha_quad = std::numeric_limits<double>::infinity();
    if (std::abs(a) < 1e-14) {
      if (b < 0.0) alpha_quad = -c / b;
    } else {
      const double disc = b * b - 4.0 * a * c;
      if (disc >= 0.0) {
        const double sq = std::sqrt(disc);
        const double r1 = (-b - sq) / (2.0 * a);
        const double r2 = (-b + sq) / (2.0 * a);
        const double lo = std::min(r1, r2), hi = std::max(r1, r2);
        if (a > 0.0) {
          if (lo > 0.0) alpha_quad = lo;  // both roots positive: first crossing
        } else {
          alpha_quad = hi > 0.0 ? hi : 0.0;  // feasible on [lo, hi]
        }
      }
      // a > 0 with disc < 0: q(alpha) > 0 for all alpha.
    }
    if (db[0] < 0.0) alpha = std::min(alpha, -ub[0] / db[0]);
    alpha = std::min(alpha, alpha_quad);
  }
  return alpha;
}

struct StandardForm {
  int n = 0, p = 0, m = 0;
  VectorXd c, b, h;
  SpMat A, G, At, Gt;
  ConeLayout lay;
};

StandardForm to_standard_form(const ConicProgram& prog) {
  StandardForm sf;
  sf.n = prog.num_vars;
  sf.c = prog.cost;
  sf.p = static_cast<int>(prog.eq.rows());
  sf.A = prog.eq;
  if (sf.A.rows() == 0) sf.A.resize(0, sf.n);
  sf.b = prog.eq_rhs.size() ? prog.eq_rhs : VectorXd::Zero(0);

  std::vector<Triplet> gt;
  std::vector<double> hv;
  int row = 0;
  auto add_lp_row = [&](int var, double coef, double rhs) {
    gt.emplace_back(row, var, coef);
    hv.push_back(rhs);
    ++row;
  };
  for (int i = 0; i < prog.lower.size(); ++i) {
    if (std::isfinite(prog.lower[i])) add_lp_row(i, -1.0, -prog.lower[i]);
  }
  for (int i = 0; i < prog.upper.size(); ++i) {
    if (std::isfinite(prog.upper[i])) add_lp_row(i, 1.0, prog.upper[i]);
  }
  for (const auto& cone : prog.cones) {
    if (cone.C.rows() != 0) continue;
    // degenerate cone: p'z + q >= 0
    for (int i = 0; i < cone.p.size(); ++i) {
      if (cone.p[i] != 0.0) gt.emplace_back(row, i, -cone.p[i]);
    }
    hv.push_back(cone.q);
    ++row;
  }
  sf.lay.n_lp = row;
  for (const auto& cone : prog.cones) {
    if (cone.C.rows() == 0) continue;
    const int q = 1 + static_cast<int>(cone.C.rows());
    sf.lay.soc_off.push_back(row);
    sf.lay.soc_dim.push_back(q);
    for (int i = 0; i < cone.p.size(); ++i) {
      if (cone.p[i] != 0.0) gt.emplace_back(row, i, -cone.p[i]);
    }
    hv.push_back(cone.q);
    ++row;
    for (int col = 0; col < cone.C.outerSize(); ++col) {
      for (SpMat::InnerIterator it(cone.C, col); it; ++it) {
        gt.emplace_back(row + static_cast<int>(it.row()), static_cast<int>(it.col()), -it.value());
      }
    }
    for (int i = 0; i < cone.d.size(); ++i) hv.push_back(cone.d[i]);
    row += q - 1;
  }
  sf.m = row;
  sf.lay.total = row;
  sf.G.resize(sf.m, sf.n);
  sf.G.setFromTriplets(gt.begin(), gt.end());
  sf.h = Eigen::Map<VectorXd>(hv.data(), static_cast<Eigen::Index>(hv.size()));
  sf.At = sf.A.transpose();
  sf.Gt = sf.G.transpose();
  return sf;
}

// Sparse KKT with cached value-slot maps for the per-iteration scaling-block
// rewrite (the symbolic factorization is computed once and reused).
class KktSystem {
 public:
  KktSystem(const StandardForm& sf, double delta) : sf_(sf), delta_(delta) {
    const int n = sf.n, p = sf.p, m = sf.m;
    dim_ = n + p + m;
    xy_idx_.reserve(n + p);
    std::vector<Triplet> trips;
    trips.reserve(static_cast<size_t>(sf.A.nonZeros() + sf.G.nonZeros()) * 2 + dim_ + soc_entries());
    for (int i = 0; i < n; ++i) trips.emplace_back(i, i, delta_);
    for (int i = 0; i < p; ++i) trips.emplace_back(n + i, n + i, -delta_);
    for (int col = 0; col < sf.A.outerSize(); ++col) {
      for (SpMat::InnerIterator it(sf.A, col); it; ++it) {
        const int r = n + static_cast<int>(it.row()), c = static_cast<int>(it.col());
        trips.emplace_back(r, c, it.value());
        trips.emplace_back(c, r, it.value());
      }
    }
    for (int col = 0; col < sf.G.outerSize(); ++col) {
      for (SpMat::InnerIterator it(sf.G, col); it; ++it) {
        const int r = n + p + static_cast<int>(it.row()), c = static_cast<int>(it.col());
        trips.emplace_back(r, c, it.value());
        trips.emplace_back(c, r, it.value());
      }
    }
    // scaling block placeholders (identity scaling)
    for (int i = 0; i < sf.lay.n_lp; ++i)
      trips.emplace_back(n + p + i, n + p + i, -1.0 - delta_);
    for (size_t k = 0; k < sf.lay.soc_dim.size(); ++k) {
      const int off = n + p + sf.lay.soc_off[k], q = sf.lay.soc_dim[k];
      for (int a = 0; a < q; ++a)
        for (int bb = 0; bb < q; ++bb)
          trips.emplace_back(off + a, off + bb, (a == bb) ? -1.0 - delta_ : 0.0);
    }
    K_.resize(dim_, dim_);
    K_.setFromTriplets(trips.begin(), trips.end());
    K_.makeCompressed();
    // cache raw value indices of the regularized diagonals and scaling block
    for (int i = 0; i < n + p; ++i) xy_idx_.push_back(value_index(i, i));
    lp_idx_.resize(sf.lay.n_lp);
    for (int i = 0; i < sf.lay.n_lp; ++i)
      lp_idx_[i] = value_index(n + p + i, n + p + i);
    soc_idx_.resize(sf.lay.soc_dim.size());
    for (size_t k = 0; k < sf.lay.soc_dim.size(); ++k) {
      const int off = n + p + sf.lay.soc_off[k], q = sf.lay.soc_dim[k];
      soc_idx_[k].resize(static_cast<size_t>(q) * q);
      for (int a = 0; a < q; ++a)
        for (int bb = 0; bb < q; ++bb)
          soc_idx_[k][static_cast<size_t>(a) * q + bb] = value_index(off + a, off + bb);
    }
    ldlt_.analyzePattern(K_);
  }

  // Rewrites -W^2 - delta*I into the scaling block and refactorizes. A failed
  // numeric factorization (exactly zero pivot) escalates the static
  // regularization and retries; refinement in solve() removes the bias.
  bool factorize(const Scaling& sc) {
    for (;;) {
      double* vals = K_.valuePtr();
      for (int i = 0; i < sf_.n; ++i) vals[xy_idx_[i]] = delta_;
      for (int i = sf_.n; i < sf_.n + sf_.p; ++i) vals[xy_idx_[i]] = -delta_;
      for (int i = 0; i < sf_.lay.n_lp; ++i)
        vals[lp_idx_[i]] = -sc.lp_w[i] * sc.lp_w[i] - delta_;
      for (size_t k = 0; k < sf_.lay.soc_dim.size(); ++k) {
        const int q = sf_.lay.soc_dim[k];
        const auto& wb = sc.soc[k].wbar;
        const double eta2 = sc.soc[k].eta * sc.soc[k].eta;
        // W^2 = eta^2 (2 wbar wbar' - J)
        for (int a = 0; a < q; ++a) {
          for (int bb = 0; bb < q; ++bb) {
            double jab = 0.0;
            if (a == bb) jab = (a == 0) ? 1.0 : -1.0;
            const double v = 2.0 * wb[a] * wb[bb] - jab;
            vals[soc_idx_[k][static_cast<size_t>(a) * q + bb]] =
                -eta2 * v - ((a == bb) ? delta_ : 0.0);
          }
        }
      }
      ldlt_.factorize(K_);
      if (ldlt_.info() == Eigen::Success) {
        if (std::getenv("CORTEX_CONIC_TRACE")) std::fprintf(stderr, "  [kkt delta=%g]\n", delta_);
        return true;
      }
      if (delta_ >= 1e-3) return false;
      delta_ *= 100.0;
    }
  }

  // Solves the unregularized KKT via the regularized factors plus refinement.
  void solve(const Scaling& sc, const VectorXd& rhs, VectorXd& out, VectorXd& work1,
             VectorXd& work2) const {
    out = ldlt_.solve(rhs);
    const double target = 1e-13 * (1.0 + rhs.lpNorm<Eigen::Infinity>());
    for (int pass = 0; pass < 4; ++pass) {
      true_product(sc, out, work1);
      work1 = rhs - work1;
      if (work1.lpNorm<Eigen::Infinity>() <= target) break;
      work2 = ldlt_.solve(work1);
      out += work2;
    }
  }

  // y = K_true * v with the exact (unregularized) KKT operator.
  void true_product(const Scaling& sc, const VectorXd& v, VectorXd& out) const {
    const int n = sf_.n, p = sf_.p, m = sf_.m;
    out.resize(dim_);
    const auto v1 = v.head(n);
    const auto v2 = v.segment(n, p);
    const auto v3 = v.tail(m);
    VectorXd wv(m), w2v(m);
    apply_w(sf_.lay, sc, v3, wv);
    apply_w(sf_.lay, sc, wv, w2v);
    out.head(n) = sf_.At * v2 + sf_.Gt * v3;
    out.segment(n, p) = sf_.A * v1;
    out.tail(m) = sf_.G * v1 - w2v;
  }

  int dim() const { return dim_; }

 private:
  size_t soc_entries() const {
    size_t total = 0;
    for (int q : sf_.lay.soc_dim) total += static_cast<size_t>(q) * q;
    return total;
  }
  Eigen::Index value_index(int row, int col) const {
    for (Eigen::Index idx = K_.outerIndexPtr()[col]; idx < K_.outerIndexPtr()[col + 1]; ++idx) {
      if (K_.innerIndexPtr()[idx] == row) return idx;
    }
    throw std::logic_error("kkt: missing structural entry");
  }

  const StandardForm& sf_;
  double delta_;
  int dim_ = 0;
  SpMat K_;
  std::vector<Eigen::Index> xy_idx_;
  std::vector<Eigen::Index> lp_idx_;
  std::vector<std::vector<Eigen::Index>> soc_idx_;
  Eigen::SimplicialLDLT<SpMat, Eigen::Lower> ldlt_;
};

void update_scaling(const ConeLayout& lay, const VectorXd& s, const VectorXd& z, Scaling& sc,
                    VectorXd& lambda) {
  sc.lp_w.resize(lay.n_lp);
  sc.soc.resize(lay.soc_dim.size());
  for (int i = 0; i < lay.n_lp; ++i) {
    sc.lp_w[i] = std::sqrt(s[i] / z[i]);
    lambda[i] = std::sqrt(s[i] * z[i]);
  }
  for (size_t k = 0; k < lay.soc_dim.size(); ++k) {
    const int off = lay.soc_off[k], q = lay.soc_dim[k];
    const auto sb = s.segment(off, q);
    const auto zb = z.segment(off, q);
    const double sj = std::max(sb[0] * sb[0] - sb.tail(q - 1).squaredNorm(), 1e-300);
    const double zj = std::max(zb[0] * zb[0] - zb.tail(q - 1).squaredNorm(), 1e-300);
    const double a = std::sqrt(sj), b = std::sqrt(zj);
    VectorXd sbar = sb / a, zbar = zb / b;
    const double gamma = std::sqrt(std::max((1.0 + sbar.dot(zbar)) / 2.0, 1e-300));
    auto& soc = sc.soc[k];
    soc.wbar.resize(q);
    soc.wbar[0] = (sbar[0] + zbar[0]) / (2.0 * gamma);
    soc.wbar.tail(q - 1) = (sbar.tail(q - 1) - zbar.tail(q - 1)) / (2.0 * gamma);
    soc.eta = std::sqrt(a / b);
    // lambda = W z for this block (V-form of the scaling, see apply_w)
    const auto& wb = soc.wbar;
    const double qz = wb.tail(q - 1).dot(zb.tail(q - 1));
    lambda[off] = soc.eta * (wb[0] * zb[0] + qz);
    lambda.segment(off + 1, q - 1) =
        soc.eta * (zb.tail(q - 1) + (zb[0] + qz / (1.0 + wb[0])) * wb.tail(q - 1));
  }
}

// Shifts v into the interior of the cone when needed (initialization).
void bring_to_cone(const ConeLayout& lay, VectorXd& v) {
  double shift = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < lay.n_lp; ++i) shift = std::max(shift, -v[i]);
  for (size_t k = 0; k < lay.soc_dim.size(); ++k) {
    const int off = lay.soc_off[k], q = lay.soc_dim[k];
    shift = std::max(shift, v.segment(off + 1, q - 1).norm() - v[off]);
  }
  if (lay.total == 0) return;
  if (shift >= -1e-10) {
    const VectorXd e = cone_identity(lay);
    v += (1.0 + shift) * e;
  }
}

}  // namespace

ConicSolution solve(const ConicProgram& prog, const SolveSettings& settings) {
  const auto t_begin = std::chrono::steady_clock::now();
  prog.validate();
  ConicSolution result;

  const StandardForm sf = to_standard_form(prog);
  const int n = sf.n, p = sf.p, m = sf.m;
  const ConeLayout& lay = sf.lay;
  const double norm_c = sf.c.size() ? sf.c.lpNorm<Eigen::Infinity>() : 0.0;
  double norm_bh = 0.0;
  if (sf.b.size()) norm_bh = sf.b.lpNorm<Eigen::Infinity>();
  if (sf.h.size()) norm_bh = std::max(norm_bh, sf.h.lpNorm<Eigen::Infinity>());

  const double delta = 1e-8;
  KktSystem kkt(sf, delta);

  // Workspaces
  VectorXd lambda(m), e = cone_identity(lay);
  VectorXd x(n), y(p), z(m), s(m);
  Scaling sc;
  sc.lp_w = VectorXd::Ones(lay.n_lp);
  sc.soc.resize(lay.soc_dim.size());
  for (size_t k = 0; k < lay.soc_dim.size(); ++k) {
    sc.soc[k].eta = 1.0;
    sc.soc[k].wbar = VectorXd::Zero(lay.soc_dim[k]);
    sc.soc[k].wbar[0] = 1.0;
  }

  VectorXd rhs(kkt.dim()), sol1(kkt.dim()), sol2(kkt.dim()), work1(kkt.dim()), work2(kkt.dim());

  // --- Initialization: least-squares primal/dual points brought into the cone
  if (!kkt.factorize(sc)) {
    result.status = SolveStatus::kMaxIterations;
    result.solve_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_begin).count();
    return result;
  }
  rhs.setZero();
  rhs.segment(n, p) = sf.b;
  rhs.tail(m) = sf.h;
  kkt.solve(sc, rhs, sol1, work1, work2);
  x = sol1.head(n);
  s = -sol1.tail(m);
  if (std::getenv("CORTEX_CONIC_TRACE")) {
    std::fprintf(stderr, "init |Ax-b| %.2e |Gx+s~-h| %.2e |x| %.2e |s~| %.2e\n",
                 p ? (sf.A * x - sf.b).lpNorm<Eigen::Infinity>() : 0.0,
                 (sf.G * x + s - sf.h).lpNorm<Eigen::Infinity>(), x.lpNorm<Eigen::Infinity>(),
                 s.lpNorm<Eigen::Infinity>());
  }
  bring_to_cone(lay, s);

  rhs.setZero();
  rhs.head(n) = -sf.c;
  kkt.solve(sc, rhs, sol2, work1, work2);
  y = sol2.segment(n, p);
  z = sol2.tail(m);
  bring_to_cone(lay, z);

  double tau = 1.0, kappa = 1.0;
  const int degree = lay.degree() + 1;

  VectorXd rx(n), ry(p), rz(m);
  VectorXd ds(m), dstilde(m), wds(m), dz_aff(m), ds_aff(m), dz(m), dsv(m), tmp_m(m);
  VectorXd winv_ds(m), w_dz(m), corr(m);
  VectorXd x1(n), y1(p), z1(m), x2(n), y2(p), z2(m);
  VectorXd dx(n), dy(p), dx_aff(n), dy_aff(p);

  static const bool trace = std::getenv("CORTEX_CONIC_TRACE") != nullptr;

  for (int iter = 0; iter < settings.max_iterations; ++iter) {
    result.iterations = iter;
    // Residuals
    rx = sf.At * y + sf.Gt * z + sf.c * tau;
    ry = sf.A * x - sf.b * tau;
    rz = sf.G * x + s - sf.h * tau;
    const double rtau = sf.c.dot(x) + sf.b.dot(y) + sf.h.dot(z) + kappa;
    const double gap = s.dot(z);
    const double mu = (gap + tau * kappa) / degree;

    // Convergence checks on the de-homogenized iterate
    const double inv_tau = 1.0 / tau;
    const double pres = std::max(p ? ry.lpNorm<Eigen::Infinity>() : 0.0, rz.lpNorm<Eigen::Infinity>()) * inv_tau;
    const double dres = rx.lpNorm<Eigen::Infinity>() * inv_tau;
    const double pcost = sf.c.dot(x) * inv_tau;
    const double gap_abs = gap * inv_tau * inv_tau;
    const double relgap = gap_abs / std::max(1.0, std::abs(pcost));
    if (trace) {
      std::fprintf(stderr, "it %2d pres %9.2e dres %9.2e gap %9.2e pcost %12.5e tau %8.2e kappa %8.2e mu %9.2e\n",
                   iter, pres, dres, gap_abs, pcost, tau, kappa, mu);
    }
    if (pres <= settings.feas_tol * (1.0 + norm_bh) && dres <= settings.feas_tol * (1.0 + norm_c) &&
        (relgap <= settings.gap_tol || gap_abs <= settings.gap_tol)) {
      result.status = SolveStatus::kOptimal;
      result.primal = x * inv_tau;
      result.objective = pcost;
      break;
    }
    // Primal infeasibility certificate: A'y + G'z ~ 0 with b'y + h'z < 0.
    const double denom = -(sf.b.dot(y) + sf.h.dot(z));
    if (denom > 1e-12 && tau <= 1e-6 * std::max(1.0, kappa)) {
      const double cert = (sf.At * (y / denom) + sf.Gt * (z / denom)).lpNorm<Eigen::Infinity>();
      if (cert <= settings.feas_tol * 10.0 * std::max(1.0, norm_c)) {
        result.status = SolveStatus::kInfeasible;
        break;
      }
    }
    // Unbounded primal (dual infeasibility): stop without a primal point.
    const double denom2 = -sf.c.dot(x);
    if (denom2 > 1e-12 && tau <= 1e-6 * std::max(1.0, kappa)) {
      const double cert_a = p ? (sf.A * (x / denom2)).lpNorm<Eigen::Infinity>() : 0.0;
      const double cert_g = (sf.G * (x / denom2) + s / denom2).lpNorm<Eigen::Infinity>();
      if (std::max(cert_a, cert_g) <= settings.feas_tol * 10.0 * std::max(1.0, norm_bh)) {
        result.status = SolveStatus::kMaxIterations;
        break;
      }
    }

    update_scaling(lay, s, z, sc, lambda);
    if (!kkt.factorize(sc)) break;

    // tau column: K v2 = [-c; b; h]
    rhs.head(n) = -sf.c;
    rhs.segment(n, p) = sf.b;
    rhs.tail(m) = sf.h;
    kkt.solve(sc, rhs, sol2, work1, work2);
    x2 = sol2.head(n);
    y2 = sol2.segment(n, p);
    z2 = sol2.tail(m);
    const double denom_tau = sf.c.dot(x2) + sf.b.dot(y2) + sf.h.dot(z2) - kappa / tau;

    auto direction = [&](double eta, const VectorXd& d_s, double d_tk, VectorXd& out_dx,
                         VectorXd& out_dy, VectorXd& out_dz, VectorXd& out_ds, double& out_dtau,
                         double& out_dkappa) {
      jordan_div(lay, lambda, d_s, dstilde);
      apply_w(lay, sc, dstilde, wds);
      rhs.head(n) = -eta * rx;
      rhs.segment(n, p) = -eta * ry;
      rhs.tail(m) = -eta * rz - wds;
      kkt.solve(sc, rhs, sol1, work1, work2);
      x1 = sol1.head(n);
      y1 = sol1.segment(n, p);
      z1 = sol1.tail(m);
      const double cbh1 = sf.c.dot(x1) + sf.b.dot(y1) + sf.h.dot(z1);
      out_dtau = (-eta * rtau - d_tk / tau - cbh1) / denom_tau;
      out_dx = x1 + out_dtau * x2;
      out_dy = y1 + out_dtau * y2;
      out_dz = z1 + out_dtau * z2;
      // ds = W(dstilde - W dz)
      apply_w(lay, sc, out_dz, tmp_m);
      tmp_m = dstilde - tmp_m;
      apply_w(lay, sc, tmp_m, out_ds);
      out_dkappa = (d_tk - kappa * out_dtau) / tau;
    };

    // Affine direction: d_s = -lambda o lambda, d_tk = -tau*kappa
    jordan_prod(lay, lambda, lambda, ds);
    ds = -ds;
    double dtau_aff = 0.0, dkappa_aff = 0.0;
    direction(1.0, ds, -tau * kappa, dx_aff, dy_aff, dz_aff, ds_aff, dtau_aff, dkappa_aff);

    double alpha_aff = std::min(max_step(lay, s, ds_aff), max_step(lay, z, dz_aff));
    if (dtau_aff < 0.0) alpha_aff = std::min(alpha_aff, -tau / dtau_aff);
    if (dkappa_aff < 0.0) alpha_aff = std::min(alpha_aff, -kappa / dkappa_aff);
    alpha_aff = std::min(alpha_aff, 1.0);

    const double gap_aff = (s + alpha_aff * ds_aff).dot(z + alpha_aff * dz_aff) +
                           (tau + alpha_aff * dtau_aff) * (kappa + alpha_aff * dkappa_aff);
    double sigma = gap_aff / (gap + tau * kappa);
    sigma = std::pow(std::clamp(sigma, 0.0, 1.0), 3);

    // Combined direction with Mehrotra correction
    apply_winv(lay, sc, ds_aff, winv_ds);
    apply_w(lay, sc, dz_aff, w_dz);
    jordan_prod(lay, winv_ds, w_dz, corr);
    jordan_prod(lay, lambda, lambda, ds);
    ds = -ds - corr + sigma * mu * e;
    const double d_tk = -tau * kappa - dtau_aff * dkappa_aff + sigma * mu;
    double dtau = 0.0, dkappa = 0.0;
    direction(1.0 - sigma, ds, d_tk, dx, dy, dz, dsv, dtau, dkappa);

    if (trace) {
      const double eta_c = 1.0 - sigma;
      const double e1 = (sf.At * dy + sf.Gt * dz + sf.c * dtau + eta_c * rx).lpNorm<Eigen::Infinity>();
      const double e2 = p ? (sf.A * dx - sf.b * dtau + eta_c * ry).lpNorm<Eigen::Infinity>() : 0.0;
      const double e3 = (sf.G * dx + dsv - sf.h * dtau + eta_c * rz).lpNorm<Eigen::Infinity>();
      const double e4 = std::abs(sf.c.dot(dx) + sf.b.dot(dy) + sf.h.dot(dz) + dkappa + eta_c * rtau);
      apply_w(lay, sc, dz, w_dz);
      apply_winv(lay, sc, dsv, winv_ds);
      VectorXd lam_arg(m), lam_res(m);
      lam_arg = w_dz + winv_ds;
      jordan_prod(lay, lambda, lam_arg, lam_res);
      const double e5 = (lam_res - ds).lpNorm<Eigen::Infinity>();
      const double e6 = std::abs(kappa * dtau + tau * dkappa - d_tk);
      std::fprintf(stderr, "      newton res e1 %8.1e e2 %8.1e e3 %8.1e e4 %8.1e e5 %8.1e e6 %8.1e\n",
                   e1, e2, e3, e4, e5, e6);
    }

    double alpha = std::min(max_step(lay, s, dsv), max_step(lay, z, dz));
    if (dtau < 0.0) alpha = std::min(alpha, -tau / dtau);
    if (dkappa < 0.0) alpha = std::min(alpha, -kappa / dkappa);
    alpha = std::min(0.99 * alpha, 1.0);
    if (trace) std::fprintf(stderr, "      alpha_aff %8.2e sigma %8.2e alpha %8.2e\n", alpha_aff, sigma, alpha);
    if (!std::isfinite(alpha) || alpha <= 1e-14) break;

    x += alpha * dx;
    y += alpha * dy;
    z += alpha * dz;
    s += alpha * dsv;
    tau += alpha * dtau;
    kappa += alpha * dkappa;
    if (tau < 1e-12 && kappa < 1e-12) break;
  }

  result.solve_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_begin).count();
  return result;
}

void dump_program(const ConicProgram& prog, std::ostream& os) {
  char buf[96];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
  };
  os << "conic-program v1\n";
  os << "vars " << prog.num_vars << "\n";
  os << "cost";
  for (int i = 0; i < prog.cost.size(); ++i) os << " " << num(prog.cost[i]);
  os << "\n";
  os << "eq rows " << prog.eq.rows() << " nnz " << prog.eq.nonZeros() << "\n";
  for (int col = 0; col < prog.eq.outerSize(); ++col) {
    for (Eigen::SparseMatrix<double>::InnerIterator it(prog.eq, col); it; ++it)
      os << "  " << it.row() << " " << it.col() << " " << num(it.value()) << "\n";
  }
  os << "eq_rhs";
  for (int i = 0; i < prog.eq_rhs.size(); ++i) os << " " << num(prog.eq_rhs[i]);
  os << "\n";
  os << "bounds " << (prog.lower.size() ? prog.num_vars : 0) << "\n";
  for (int i = 0; i < prog.lower.size(); ++i)
    os << "  " << i << " " << num(prog.lower[i]) << " " << num(prog.upper.size() ? prog.upper[i] : kInf)
       << "\n";
  os << "cones " << prog.cones.size() << "\n";
  for (const auto& cone : prog.cones) {
    os << " cone rows " << cone.C.rows() << " q " << num(cone.q) << "\n";
    os << "  p";
    for (int i = 0; i < cone.p.size(); ++i)
      if (cone.p[i] != 0.0) os << " " << i << ":" << num(cone.p[i]);
    os << "\n";
    for (int col = 0; col < cone.C.outerSize(); ++col) {
      for (Eigen::SparseMatrix<double>::InnerIterator it(cone.C, col); it; ++it)
        os << "  C " << it.row() << " " << it.col() << " " << num(it.value()) << "\n";
    }
    os << "  d";
    for (int i = 0; i < cone.d.size(); ++i) os << " " << num(cone.d[i]);
    os << "\n";
  }
}

}  // namespace cortex
