#include "qrdual/solver.hpp"
#include <cstdio>
#include <cstdlib>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <utility>

#include "qrdual/errors.hpp"
#include "qrdual/pinball.hpp"
#include "qrdual/quantile.hpp"
#include "qrdual/rng.hpp"

namespace qrdual {

namespace {

constexpr int kCheckInterval = 25;
constexpr int kMaxRhoRescales = 10;
constexpr double kRhoBalance = 10.0;
constexpr std::uint64_t kJitterSalt = 0x6a69747465720000ull;
// Attempt an exact active-set polish once the scaled certificate score is
// below this.
constexpr double kPolishScore = 1e-1;
constexpr int kPolishSpacing = 100;
constexpr int kPolishRounds = 10;

struct DesignView {
  const Matrix& x;
  const Vector& y;
  const Matrix* gram = nullptr;      // X'X, optional
  const Vector* col_sums = nullptr;  // X'1, optional
};

double subgradient_dual(double r, double tau) {
  if (r > 0.0) return tau;
  if (r < 0.0) return -(1.0 - tau);
  return 0.0;
}

struct Factorization {
  Eigen::LDLT<Matrix> ldlt;
  bool rank_deficient = false;

  void compute(Matrix m) {
    rank_deficient = false;
    ldlt.compute(m);
    const Vector diag = ldlt.vectorD();
    const double dmax = diag.cwiseAbs().maxCoeff();
    const double dmin = diag.minCoeff();
    if (!(dmax > 0.0) || dmin < 1e-12 * std::max(dmax, 1.0)) {
      rank_deficient = true;
      const double shift = 1e-10 * std::max(dmax, 1.0);
      m.diagonal().array() += shift;
      ldlt.compute(m);
    }
  }
};

class AdmmSolver {
 public:
  AdmmSolver(const DesignView& view, const ProblemSpec& spec, const SolverConfig& cfg)
      : x_(view.x), spec_(spec), cfg_(cfg) {
    n_ = view.y.size();
    d_ = x_.cols();
    free_ = spec.intercept_mode == InterceptMode::kFree;
    p_ = d_ + (free_ ? 1 : 0);
    y_eff_ = free_ ? view.y : Vector(view.y.array() - spec.offset);

    if (view.gram != nullptr) {
      gram_ = *view.gram;
    } else {
      gram_.noalias() = x_.transpose() * x_;
    }
    if (free_) {
      if (view.col_sums != nullptr) {
        col_sums_ = *view.col_sums;
      } else {
        col_sums_ = x_.colwise().sum().transpose();
      }
    }

    response_scale_ = std::max(1.0, y_eff_.cwiseAbs().maxCoeff());
    double max_col = 0.0;
    for (Eigen::Index j = 0; j < d_; ++j) max_col = std::max(max_col, gram_(j, j));
    design_scale_ = std::max(1.0, std::sqrt(max_col));
    if (free_) design_scale_ = std::max(design_scale_, std::sqrt(static_cast<double>(n_)));
  }

  FitResult run() {
    if (d_ == 0 && !free_) return offset_only_result();

    rho_ = cfg_.admm_rho;
    factorize();
    structurally_deficient_ =
        factor_.rank_deficient || (spec_.lambda == 0.0 && free_ && d_ + 1 >= n_);

    initialize_state();

    const double alpha = std::clamp(cfg_.relaxation, 1.0, 1.9);
    const double tol = cfg_.tolerance;

    Vector v(n_), w(n_), ax(n_), r_old(n_), rhs(p_), theta(p_);
    Vector r_exact(n_), eta(n_);
    theta.setZero();

    FitResult best;
    double best_score = std::numeric_limits<double>::infinity();
    int rescales = 0;

    for (int iter = 1; iter <= cfg_.max_iterations; ++iter) {
      const bool check = (iter % kCheckInterval == 0) || iter == cfg_.max_iterations;
      if (check) r_old = r_;

      // theta-update: ridge least squares against y_eff - r + u.
      v = y_eff_ - r_ + u_;
      if (free_) {
        rhs(0) = v.sum();
        rhs.tail(d_).noalias() = x_.transpose() * v;
      } else {
        rhs.noalias() = x_.transpose() * v;
      }
      theta = factor_.ldlt.solve(rhs);
      if (free_) {
        beta0_ = theta(0);
        beta_ = theta.tail(d_);
      } else {
        beta_ = theta;
      }
      ax.noalias() = x_ * beta_;
      if (free_) ax.array() += beta0_;

      // r-update on the relaxed point; closed-form pinball prox.
      const double sigma = 1.0 / rho_;
      const double hi = sigma * spec_.tau;
      const double lo = -sigma * (1.0 - spec_.tau);
      w = y_eff_ - (alpha * ax + (1.0 - alpha) * (y_eff_ - r_)) + u_;
      for (Eigen::Index i = 0; i < n_; ++i) {
        const double wi = w(i);
        r_(i) = wi > hi ? wi - hi : (wi < lo ? wi - lo : 0.0);
      }
      u_ = w - r_;

      if (!check) continue;

      eta = rho_ * u_;
      r_exact = y_eff_ - ax;

      KktCertificate cert = certificate(r_exact, eta);
      cert.dual_residual =
          rho_ * design_scale_ * (r_ - r_old).lpNorm<Eigen::Infinity>();
      const double score =
          std::max({cert.primal_residual / cert.response_scale,
                    cert.stationarity_norm /
                        (cert.design_scale * std::max(1.0, cert.response_scale)),
                    cert.duality_gap_per_sample / std::max(1.0, cert.response_scale)});

      if (score < best_score) {
        best_score = score;
        best = assemble(r_exact, eta, cert, iter);
      }
      if (cert.within(tol)) {
        FitResult out = assemble(r_exact, eta, cert, iter);
        out.kkt.converged = true;
        return out;
      }

      // Active-set polish: identify the interpolated points, solve the exact
      // KKT system, and accept only a certificate-passing solution. This is
      // what makes high-accuracy duals cheap on the piecewise-linear problem.
      if ((score <= kPolishScore && iter - last_polish_ >= kPolishSpacing) ||
          iter == cfg_.max_iterations) {
        last_polish_ = iter;
        FitResult polished;
        if (try_polish(r_exact, eta, iter, &polished)) return polished;
      }

      // Residual balancing.
      if (rescales < kMaxRhoRescales && iter < cfg_.max_iterations) {
        const double pr = (r_exact - r_).norm();
        const double dr = rho_ * (x_.transpose() * (r_ - r_old)).norm() +
                          (free_ ? rho_ * std::abs((r_ - r_old).sum()) : 0.0);
        if (pr > kRhoBalance * dr) {
          rho_ *= 2.0;
          u_ *= 0.5;
          ++rescales;
          if (spec_.lambda > 0.0) factorize();
        } else if (dr > kRhoBalance * pr) {
          rho_ *= 0.5;
          u_ *= 2.0;
          ++rescales;
          if (spec_.lambda > 0.0) factorize();
        }
      }
    }

    throw SolverError("quantile fit did not converge within max_iterations", best);
  }

 private:
  void factorize() {
    Matrix m(p_, p_);
    if (free_) {
      m(0, 0) = static_cast<double>(n_);
      m.block(0, 1, 1, d_) = col_sums_.transpose();
      m.block(1, 0, d_, 1) = col_sums_;
      m.block(1, 1, d_, d_) = gram_;
      if (spec_.lambda > 0.0) {
        m.block(1, 1, d_, d_).diagonal().array() += 2.0 * spec_.lambda / rho_;
      }
    } else {
      m = gram_;
      if (spec_.lambda > 0.0) m.diagonal().array() += 2.0 * spec_.lambda / rho_;
    }
    factor_.compute(std::move(m));
  }

  void initialize_state() {
    beta_.setZero(d_);
    beta0_ = 0.0;
    const FitResult* warm = cfg_.warm_start;
    if (warm != nullptr && warm->beta.size() == d_) {
      beta_ = warm->beta;
      if (free_) beta0_ = warm->intercept_or_offset;
    } else if (free_) {
      beta0_ = empirical_quantile(spec_.tau, y_eff_);
    }
    r_ = y_eff_ - x_ * beta_;
    if (free_) r_.array() -= beta0_;

    Vector eta(n_);
    const Eigen::Index n_warm =
        warm != nullptr ? std::min<Eigen::Index>(warm->duals.size(), n_) : 0;
    for (Eigen::Index i = 0; i < n_; ++i) {
      double e = i < n_warm ? warm->duals(i) : subgradient_dual(r_(i), spec_.tau);
      eta(i) = std::clamp(e, -(1.0 - spec_.tau), spec_.tau);
    }
    u_ = eta / rho_;
  }

  // Solves the KKT system for a fixed active-set guess: interpolation
  // equations on the interior set plus stationarity with the remaining duals
  // pinned at the box edges. At lambda = 0 the system is nonsingular only
  // when exactly p points are interpolated, so refinement rounds pivot
  // points in and out while keeping the set balanced. Returns true (and
  // fills *out) only when the primal-dual pair passes the full certificate
  // at the configured tolerance.
  bool try_polish(const Vector& r_exact, const Vector& eta, int iter, FitResult* out) {
    const double tau = spec_.tau;
    const double lo_edge = -(1.0 - tau);
    const double scale_y = response_scale_;
    const double eps_act =
        std::max(50.0 * (r_exact - r_).lpNorm<Eigen::Infinity>(), 1e-10 * scale_y);
    const double eta_margin = 1e-3;
    const bool need_exact_p = spec_.lambda == 0.0;
    const bool debug = std::getenv("QRDUAL_POLISH_DEBUG") != nullptr;

    // 1 = upper edge (tau), -1 = lower edge, 0 = interior/interpolated.
    std::vector<int> state(n_);
    std::vector<Eigen::Index> candidates;
    for (Eigen::Index i = 0; i < n_; ++i) {
      const bool eta_interior = eta(i) < tau - eta_margin && eta(i) > lo_edge + eta_margin;
      if (std::abs(r_exact(i)) <= eps_act || eta_interior) {
        state[i] = 0;
        candidates.push_back(i);
      } else {
        state[i] = r_exact(i) > 0.0 ? 1 : -1;
      }
    }

    // Balance the interior set against the residual magnitudes: surplus
    // candidates go back to the sign-matching edge, and at lambda = 0 the
    // set is topped up to exactly p points.
    auto rebalance = [&](const Vector& residuals) {
      std::vector<Eigen::Index> interior;
      for (Eigen::Index i = 0; i < n_; ++i) {
        if (state[i] == 0) interior.push_back(i);
      }
      auto by_abs_res = [&](Eigen::Index a, Eigen::Index b) {
        return std::abs(residuals(a)) < std::abs(residuals(b));
      };
      const Eigen::Index target = need_exact_p ? p_ : std::min<Eigen::Index>(
                                                          p_, interior.size());
      if (static_cast<Eigen::Index>(interior.size()) > target) {
        std::sort(interior.begin(), interior.end(), by_abs_res);
        for (std::size_t k = target; k < interior.size(); ++k) {
          const Eigen::Index i = interior[k];
          state[i] = residuals(i) >= 0.0 ? 1 : -1;
        }
        interior.resize(target);
      } else if (static_cast<Eigen::Index>(interior.size()) < target) {
        std::vector<Eigen::Index> edges;
        for (Eigen::Index i = 0; i < n_; ++i) {
          if (state[i] != 0) edges.push_back(i);
        }
        std::sort(edges.begin(), edges.end(), by_abs_res);
        for (Eigen::Index i : edges) {
          if (static_cast<Eigen::Index>(interior.size()) >= target) break;
          state[i] = 0;
          interior.push_back(i);
        }
      }
      std::sort(interior.begin(), interior.end());
      return interior;
    };

    std::vector<Eigen::Index> interior = rebalance(r_exact);
    std::vector<char> banned(n_, 0);

    for (int round = 0; round < kPolishRounds; ++round) {
      const auto m = static_cast<Eigen::Index>(interior.size());
      if (m > p_ || (need_exact_p && m != p_)) return false;

      const Eigen::Index q = p_ + m;
      Matrix kkt = Matrix::Zero(q, q);
      Vector rhs = Vector::Zero(q);
      if (spec_.lambda > 0.0) {
        for (Eigen::Index j = free_ ? 1 : 0; j < p_; ++j) {
          kkt(j, j) = -2.0 * spec_.lambda;
        }
      }
      Vector edge_stat = Vector::Zero(p_);
      for (Eigen::Index i = 0; i < n_; ++i) {
        if (state[i] == 0) continue;
        const double e = state[i] == 1 ? tau : lo_edge;
        if (free_) {
          edge_stat(0) += e;
          edge_stat.tail(d_) += e * x_.row(i).transpose();
        } else {
          edge_stat += e * x_.row(i).transpose();
        }
      }
      rhs.head(p_) = -edge_stat;
      for (Eigen::Index k = 0; k < m; ++k) {
        const Eigen::Index i = interior[k];
        if (free_) {
          kkt(0, p_ + k) = 1.0;
          kkt(p_ + k, 0) = 1.0;
          kkt.block(1, p_ + k, d_, 1) = x_.row(i).transpose();
          kkt.block(p_ + k, 1, 1, d_) = x_.row(i);
        } else {
          kkt.block(0, p_ + k, d_, 1) = x_.row(i).transpose();
          kkt.block(p_ + k, 0, 1, d_) = x_.row(i);
        }
        rhs(p_ + k) = y_eff_(i);
      }

      Eigen::PartialPivLU<Matrix> lu(kkt);
      const Vector sol = lu.solve(rhs);
      if (!sol.allFinite() ||
          (kkt * sol - rhs).lpNorm<Eigen::Infinity>() >
              1e-9 * std::max(1.0, rhs.lpNorm<Eigen::Infinity>())) {
        if (debug) {
          std::fprintf(stderr, "polish iter=%d round=%d singular system m=%ld\n", iter,
                       round, static_cast<long>(m));
        }
        return false;
      }

      const double beta0 = free_ ? sol(0) : 0.0;
      const Vector beta = sol.segment(free_ ? 1 : 0, d_);
      Vector eta_new(n_);
      for (Eigen::Index i = 0; i < n_; ++i) {
        eta_new(i) = state[i] == 1 ? tau : (state[i] == -1 ? lo_edge : 0.0);
      }
      for (Eigen::Index k = 0; k < m; ++k) eta_new(interior[k]) = sol(p_ + k);

      Vector r_new = y_eff_ - x_ * beta;
      if (free_) r_new.array() -= beta0;

      const double saved_beta0 = beta0_;
      const Vector saved_beta = beta_;
      beta0_ = beta0;
      beta_ = beta;
      KktCertificate cert = certificate_exact(r_new, eta_new);
      cert.dual_residual = 0.0;
      if (cert.within(cfg_.tolerance)) {
        cert.converged = true;
        *out = assemble(r_new, eta_new, cert, iter);
        return true;
      }
      if (debug) {
        std::fprintf(stderr,
                     "polish iter=%d round=%d cert fail: gap=%.2e box=%.2e m=%ld\n", iter,
                     round, cert.duality_gap_per_sample, cert.box_violation,
                     static_cast<long>(m));
      }
      beta0_ = saved_beta0;
      beta_ = saved_beta;

      // Single-swap pivot toward the correct active set. Find the worst
      // violation: an interior dual outside the box, or an edge point whose
      // residual flipped sign. Swap one point per round; banned points may
      // not re-enter within this attempt (prevents ping-pong around the
      // interpolated set).
      int violations = 0;
      double worst_mag = 0.0;
      Eigen::Index worst_idx = -1;
      bool worst_is_interior = false;
      for (Eigen::Index k = 0; k < m; ++k) {
        const Eigen::Index i = interior[k];
        const double over = std::max(eta_new(i) - tau, lo_edge - eta_new(i));
        if (over > 1e-12) {
          ++violations;
          if (over > worst_mag) {
            worst_mag = over;
            worst_idx = i;
            worst_is_interior = true;
          }
        }
      }
      const double tiny = 1e-11 * scale_y;
      for (Eigen::Index i = 0; i < n_; ++i) {
        if (state[i] == 0) continue;
        const double wrong = state[i] == 1 ? -r_new(i) : r_new(i);
        if (wrong > tiny) {
          ++violations;
          if (wrong > worst_mag) {
            worst_mag = wrong;
            worst_idx = i;
            worst_is_interior = false;
          }
        }
      }
      if (worst_idx < 0) return false;  // certificate failed for another reason
      if (round == 0 && violations > 8) return false;  // classification too loose

      if (worst_is_interior) {
        // Leaves to the edge it exited through; the nearest-residual edge
        // point takes its interpolation slot when the count must stay at p.
        state[worst_idx] = eta_new(worst_idx) > tau ? 1 : -1;
        banned[worst_idx] = 1;
        if (need_exact_p) {
          Eigen::Index enter = -1;
          double best = std::numeric_limits<double>::infinity();
          for (Eigen::Index i = 0; i < n_; ++i) {
            if (state[i] == 0 || banned[i]) continue;
            const double mag = std::abs(r_new(i));
            if (mag < best) {
              best = mag;
              enter = i;
            }
          }
          if (enter < 0) return false;
          state[enter] = 0;
        }
      } else {
        // Wrong-sign edge point becomes interpolated; the interior point
        // closest to a box edge leaves to keep the count at p.
        state[worst_idx] = 0;
        banned[worst_idx] = 1;
        if (need_exact_p) {
          Eigen::Index leave = -1;
          double best = std::numeric_limits<double>::infinity();
          for (Eigen::Index k = 0; k < m; ++k) {
            const Eigen::Index i = interior[k];
            if (banned[i] || i == worst_idx) continue;
            const double slack = std::min(tau - eta_new(i), eta_new(i) - lo_edge);
            if (slack < best) {
              best = slack;
              leave = i;
            }
          }
          if (leave < 0) return false;
          state[leave] = r_new(leave) >= 0.0 ? 1 : -1;
          banned[leave] = 1;
        }
      }
      interior.clear();
      for (Eigen::Index i = 0; i < n_; ++i) {
        if (state[i] == 0) interior.push_back(i);
      }
    }
    return false;
  }

  // Certificate when the splitting variable equals the exact residuals.
  KktCertificate certificate_exact(const Vector& r_exact, const Vector& eta) const {
    KktCertificate cert;
    cert.response_scale = response_scale_;
    cert.design_scale = design_scale_;
    cert.rank_deficient = structurally_deficient_;
    cert.primal_residual = 0.0;

    double stat = (x_.transpose() * eta - 2.0 * spec_.lambda * beta_).lpNorm<Eigen::Infinity>();
    if (free_) stat = std::max(stat, std::abs(eta.sum()));
    cert.stationarity_norm = stat;

    double gap = 0.0;
    double box = 0.0;
    for (Eigen::Index i = 0; i < n_; ++i) {
      gap += pinball_loss(spec_.tau, r_exact(i)) - eta(i) * r_exact(i);
      const double over = std::max(eta(i) - spec_.tau, -(1.0 - spec_.tau) - eta(i));
      box = std::max(box, over);
    }
    cert.duality_gap_per_sample = gap / static_cast<double>(n_);
    cert.box_violation = std::max(box, 0.0);
    return cert;
  }

  KktCertificate certificate(const Vector& r_exact, const Vector& eta) const {
    KktCertificate cert;
    cert.response_scale = response_scale_;
    cert.design_scale = design_scale_;
    cert.rank_deficient = structurally_deficient_;
    cert.primal_residual = (r_exact - r_).lpNorm<Eigen::Infinity>();

    double stat = (x_.transpose() * eta - 2.0 * spec_.lambda * beta_).lpNorm<Eigen::Infinity>();
    if (free_) stat = std::max(stat, std::abs(eta.sum()));
    cert.stationarity_norm = stat;

    double gap = 0.0;
    double box = 0.0;
    for (Eigen::Index i = 0; i < n_; ++i) {
      gap += pinball_loss(spec_.tau, r_exact(i)) - eta(i) * r_exact(i);
      const double over = std::max(eta(i) - spec_.tau, -(1.0 - spec_.tau) - eta(i));
      box = std::max(box, over);
    }
    cert.duality_gap_per_sample = gap / static_cast<double>(n_);
    cert.box_violation = std::max(box, 0.0);
    return cert;
  }

  FitResult assemble(const Vector& r_exact, const Vector& eta, const KktCertificate& cert,
                     int iterations) const {
    FitResult out;
    out.intercept_or_offset = free_ ? beta0_ : spec_.offset;
    out.beta = beta_;
    out.residuals = r_exact;
    out.duals = eta;
    out.kkt = cert;
    out.iterations = iterations;
    out.tau = spec_.tau;
    out.lambda = spec_.lambda;
    out.intercept_mode = spec_.intercept_mode;
    double obj = spec_.lambda * beta_.squaredNorm();
    for (Eigen::Index i = 0; i < n_; ++i) obj += pinball_loss(spec_.tau, r_exact(i));
    out.objective = obj;
    return out;
  }

  // No primal variables at all: residuals are fixed, duals are the
  // subgradient selection.
  FitResult offset_only_result() const {
    FitResult out;
    out.intercept_or_offset = spec_.offset;
    out.beta = Vector(0);
    out.residuals = y_eff_;
    out.duals.resize(n_);
    for (Eigen::Index i = 0; i < n_; ++i) {
      out.duals(i) = subgradient_dual(y_eff_(i), spec_.tau);
    }
    out.kkt.primal_residual = 0.0;
    out.kkt.dual_residual = 0.0;
    out.kkt.stationarity_norm = 0.0;
    out.kkt.duality_gap_per_sample = 0.0;
    out.kkt.box_violation = 0.0;
    out.kkt.response_scale = response_scale_;
    out.kkt.design_scale = design_scale_;
    out.kkt.converged = true;
    out.iterations = 0;
    out.tau = spec_.tau;
    out.lambda = spec_.lambda;
    out.intercept_mode = spec_.intercept_mode;
    out.objective = 0.0;
    for (Eigen::Index i = 0; i < n_; ++i) {
      out.objective += pinball_loss(spec_.tau, y_eff_(i));
    }
    return out;
  }

  const Matrix& x_;
  ProblemSpec spec_;
  SolverConfig cfg_;

  Eigen::Index n_ = 0, d_ = 0, p_ = 0;
  bool free_ = true;
  bool structurally_deficient_ = false;
  Vector y_eff_;
  Matrix gram_;
  Vector col_sums_;
  double response_scale_ = 1.0, design_scale_ = 1.0;

  Factorization factor_;
  double rho_ = 1.0;
  int last_polish_ = -kPolishSpacing;
  Vector r_, u_, beta_;
  double beta0_ = 0.0;
};

FitResult admm_run(const DesignView& view, const ProblemSpec& spec, const SolverConfig& cfg) {
  AdmmSolver solver(view, spec, cfg);
  return solver.run();
}

// ADMM can stall on degenerate instances (imputed labels near a dual-path
// jump). Retry with progressively more conservative parameters before giving
// up; every attempt must still meet the same certificate tolerance.
FitResult admm_with_fallback(const DesignView& view, const ProblemSpec& spec,
                             const SolverConfig& cfg) {
  if (!cfg.retry_on_stall) return admm_run(view, spec, cfg);
  try {
    return admm_run(view, spec, cfg);
  } catch (const SolverError&) {
  }
  SolverConfig safe = cfg;
  safe.relaxation = 1.0;
  safe.warm_start = nullptr;
  try {
    return admm_run(view, spec, safe);
  } catch (const SolverError&) {
  }
  safe.admm_rho = cfg.admm_rho * 0.2;
  safe.max_iterations = 2 * cfg.max_iterations;
  return admm_run(view, spec, safe);
}

FitResult admm_fit(const DesignView& view, const ProblemSpec& spec, const SolverConfig& cfg) {
  spec.validate();
  cfg.validate();
  if (view.y.size() < 1) throw DataError("fit: need at least one sample");
  if (view.x.rows() != view.y.size()) throw DataError("fit: shape mismatch");
  if (!view.x.allFinite() || !view.y.allFinite()) throw DataError("fit: non-finite data");

  if (spec.jitter > 0.0) {
    RandomStream rng(derive_seed(kJitterSalt, static_cast<std::uint64_t>(view.y.size()) * 131 +
                                                  static_cast<std::uint64_t>(view.x.cols())));
    Matrix xj = view.x;
    Vector yj = view.y;
    for (Eigen::Index i = 0; i < xj.rows(); ++i) {
      for (Eigen::Index j = 0; j < xj.cols(); ++j) xj(i, j) += spec.jitter * rng.normal();
      yj(i) += spec.jitter * rng.normal();
    }
    DesignView jittered{xj, yj, nullptr, nullptr};
    return admm_with_fallback(jittered, spec, cfg);
  }

  return admm_with_fallback(view, spec, cfg);
}

}  // namespace

FitResult fit(const Dataset& data, const ProblemSpec& spec, const SolverConfig& config) {
  data.validate();
  DesignView view{data.features, data.response, nullptr, nullptr};
  return admm_fit(view, spec, config);
}

FitResult fit_augmented(const Dataset& data, const ProblemSpec& spec,
                        const SolverConfig& config, const Eigen::Ref<const Vector>& x_new,
                        double y_guess) {
  data.validate();
  if (x_new.size() != data.n_features()) {
    throw DataError("fit_augmented: x_new has wrong dimension");
  }
  const Eigen::Index n = data.n_samples();
  Matrix x(n + 1, data.n_features());
  x.topRows(n) = data.features;
  x.row(n) = x_new.transpose();
  Vector y(n + 1);
  y.head(n) = data.response;
  y(n) = y_guess;
  DesignView view{x, y, nullptr, nullptr};
  return admm_fit(view, spec, config);
}

struct FitEngine::Impl {
  Matrix x;
  Vector y;
  Matrix gram;
  Vector col_sums;
};

FitEngine::FitEngine(Matrix features, Vector response) : impl_(std::make_unique<Impl>()) {
  if (features.rows() != response.size()) throw DataError("FitEngine: shape mismatch");
  impl_->x = std::move(features);
  impl_->y = std::move(response);
  impl_->gram.noalias() = impl_->x.transpose() * impl_->x;
  impl_->col_sums = impl_->x.colwise().sum().transpose();
}

FitEngine::FitEngine(const FitEngine& other) : impl_(std::make_unique<Impl>(*other.impl_)) {}

FitEngine::~FitEngine() = default;

FitEngine FitEngine::augmented(const FitEngine& base, const Eigen::Ref<const Vector>& x_new,
                               double y_init) {
  if (x_new.size() != base.impl_->x.cols()) {
    throw DataError("FitEngine::augmented: x_new has wrong dimension");
  }
  const Eigen::Index n = base.impl_->y.size();
  FitEngine out{Matrix{}, Vector{}};
  out.impl_->x.resize(n + 1, base.impl_->x.cols());
  out.impl_->x.topRows(n) = base.impl_->x;
  out.impl_->x.row(n) = x_new.transpose();
  out.impl_->y.resize(n + 1);
  out.impl_->y.head(n) = base.impl_->y;
  out.impl_->y(n) = y_init;
  out.impl_->gram = base.impl_->gram;
  out.impl_->gram.noalias() += x_new * x_new.transpose();
  out.impl_->col_sums = base.impl_->col_sums + x_new;
  return out;
}

void FitEngine::set_last_response(double y) {
  if (impl_->y.size() == 0) throw DataError("FitEngine: empty response");
  impl_->y(impl_->y.size() - 1) = y;
}

FitResult FitEngine::solve(const ProblemSpec& spec, const SolverConfig& config) const {
  DesignView view{impl_->x, impl_->y, &impl_->gram, &impl_->col_sums};
  if (spec.jitter > 0.0) {
    view.gram = nullptr;
    view.col_sums = nullptr;
  }
  return admm_fit(view, spec, config);
}

const Matrix& FitEngine::features() const { return impl_->x; }
const Vector& FitEngine::response() const { return impl_->y; }

}  // namespace qrdual
