#pragma once
// Per-user participation learner over a grid of prior/rate hypotheses.
//
// Each hypothesis theta = (n_d, v_d, n_h, v_h) holds one lazy binary learner
// per user: option 1 means "participate", option 0 means "abstain" (loss 0).
// A top-level mixture over all hypotheses plus two constant predictors
// (always-abstain, always-participate) produces the participation
// probability query(u) = sum_theta A(theta) B^{theta,u}(1).
//
// Two exact reductions keep this tractable:
//  * Hypotheses whose binary learners share bit-identical (prior, rate(0),
//    rate(1)) triples receive identical losses forever, so they evolve
//    identically; they are grouped into classes and the top mixture stores
//    one aggregated weight per class.
//  * A binary learner's output weight z on option 1 is a sufficient
//    statistic: with factors f1 = 1 - rate1*loss*(1-z) and
//    f0 = 1 + rate0*loss*z, it evolves as z' = z f1 / (z f1 + (1-z) f0),
//    and the weight pair (1-w1, w1) is recoverable from z on demand.

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#if defined(__AVX512F__)
#include <immintrin.h>
#endif

#include "cpea/mwm.hpp"

namespace cpea {

// max(1, ln ln x), defined for all x >= 1.
inline double floored_loglog(double x) {
  if (!(x >= 1.0)) throw std::invalid_argument("floored_loglog: need x >= 1");
  const double lx = std::log(x);
  if (lx <= 1.0) return 1.0;
  const double llx = std::log(lx);
  return llx < 1.0 ? 1.0 : llx;
}

// Learning rate hypothesis for n_s users with variance budget v_s.
inline double theta_rate(std::size_t n_s, double v_s, std::size_t num_users,
                         std::size_t horizon) {
  if (n_s == 0 || n_s > num_users)
    throw std::invalid_argument("theta_rate: need 1 <= n_s <= num_users");
  if (!(v_s >= 1.0)) throw std::invalid_argument("theta_rate: need v_s >= 1");
  if (horizon < 2) throw std::invalid_argument("theta_rate: need horizon >= 2");
  const double ratio = double(num_users) / double(n_s);
  return std::sqrt((double(n_s) * std::log(ratio) + floored_loglog(double(horizon))) /
                   v_s);
}

struct ThetaPoint {
  enum class Special { none, always_abstain, always_participate };
  std::size_t n_d = 0, n_h = 0;
  double v_d = 0.0, v_h = 0.0;
  Special special = Special::none;
};

// Immutable grid geometry, rates, and class grouping shared by all instances
// with the same (num_users, horizon, loss_bound).
class ThetaGridConfig {
 public:
  static std::shared_ptr<const ThetaGridConfig> make(std::size_t num_users,
                                                     std::size_t horizon,
                                                     double loss_bound) {
    return std::shared_ptr<const ThetaGridConfig>(
        new ThetaGridConfig(num_users, horizon, loss_bound));
  }

  std::size_t num_users() const { return num_users_; }
  std::size_t horizon() const { return horizon_; }
  double loss_bound() const { return loss_bound_; }
  const std::vector<std::size_t>& n_grid() const { return n_grid_; }
  const std::vector<std::size_t>& v_grid() const { return v_grid_; }

  std::size_t grid_size() const { return grid_size_; }
  // Grid points plus the two constant predictors.
  std::size_t point_count() const { return grid_size_ + 2; }
  std::size_t class_count() const { return mult_.size(); }

  double eps_top_grid() const { return eps_top_grid_; }
  double eps_top_special() const { return eps_top_special_; }

  const std::vector<double>& eps_d() const { return eps_d_; }
  const std::vector<double>& eps_h() const { return eps_h_; }
  const std::vector<double>& z_init() const { return z_init_; }
  const std::vector<double>& w1_init() const { return w1_init_; }
  const std::vector<std::uint32_t>& multiplicity() const { return mult_; }
  const std::vector<double>& top_weight_init() const { return wtop_init_; }

  std::size_t class_of(std::size_t point_index) const {
    return class_of_.at(point_index);
  }

  // Grid point in canonical enumeration order (n_d, n_h, v_d, v_h nested).
  ThetaPoint point_at(std::size_t point_index) const {
    if (point_index >= grid_size_)
      throw std::out_of_range("theta: point index out of range");
    const std::size_t nv = v_grid_.size();
    const std::size_t jh = point_index % nv;
    std::size_t rest = point_index / nv;
    const std::size_t jd = rest % nv;
    rest /= nv;
    const std::size_t ih = rest % n_grid_.size();
    const std::size_t id = rest / n_grid_.size();
    return ThetaPoint{n_grid_[id], n_grid_[ih], double(v_grid_[jd]),
                      double(v_grid_[jh]), ThetaPoint::Special::none};
  }

 private:
  ThetaGridConfig(std::size_t num_users, std::size_t horizon, double loss_bound)
      : num_users_(num_users), horizon_(horizon), loss_bound_(loss_bound) {
    if (num_users < 1) throw std::invalid_argument("theta: need at least one user");
    if (horizon < 2) throw std::invalid_argument("theta: need horizon >= 2");
    if (!(std::isfinite(loss_bound) && loss_bound > 0.0))
      throw std::invalid_argument("theta: loss bound must be positive and finite");

    for (std::size_t n = 1; n <= num_users; n *= 2) n_grid_.push_back(n);
    for (std::size_t v = 1; v <= horizon; v *= 2) v_grid_.push_back(v);
    grid_size_ = n_grid_.size() * n_grid_.size() * v_grid_.size() * v_grid_.size();

    const double cap = 1.0 / (4.0 * loss_bound);
    const double llt = floored_loglog(double(horizon));
    const double lln = floored_loglog(double(num_users));
    eps_top_grid_ = std::min(std::sqrt((llt + lln) / double(horizon)), cap);
    eps_top_special_ = std::min(1.0 / std::sqrt(double(horizon)), cap);

    // Clamped rate table eps[n][v]; grouping below uses the clamped values
    // because they are what the binary learners actually run with.
    std::vector<std::vector<double>> eps(n_grid_.size(),
                                         std::vector<double>(v_grid_.size()));
    for (std::size_t i = 0; i < n_grid_.size(); ++i)
      for (std::size_t j = 0; j < v_grid_.size(); ++j)
        eps[i][j] = std::min(
            theta_rate(n_grid_[i], double(v_grid_[j]), num_users, horizon), cap);

    class_of_.reserve(grid_size_);
    std::map<std::array<std::uint64_t, 3>, std::size_t> index;
    const double point_weight = 1.0 / (3.0 * double(grid_size_));
    for (std::size_t id = 0; id < n_grid_.size(); ++id)
      for (std::size_t ih = 0; ih < n_grid_.size(); ++ih) {
        const double w1 =
            double(n_grid_[ih]) / double(n_grid_[id] + n_grid_[ih]);
        for (std::size_t jd = 0; jd < v_grid_.size(); ++jd)
          for (std::size_t jh = 0; jh < v_grid_.size(); ++jh) {
            const double ed = eps[id][jd];
            const double eh = eps[ih][jh];
            const std::array<std::uint64_t, 3> key{
                std::bit_cast<std::uint64_t>(w1),
                std::bit_cast<std::uint64_t>(ed),
                std::bit_cast<std::uint64_t>(eh)};
            auto [it, fresh] = index.try_emplace(key, mult_.size());
            if (fresh) {
              w1_init_.push_back(w1);
              eps_d_.push_back(ed);
              eps_h_.push_back(eh);
              z_init_.push_back(w1 * eh / ((1.0 - w1) * ed + w1 * eh));
              mult_.push_back(0);
              wtop_init_.push_back(0.0);
            }
            class_of_.push_back(std::uint32_t(it->second));
            mult_[it->second] += 1;
            wtop_init_[it->second] += point_weight;
          }
      }
  }

  std::size_t num_users_, horizon_;
  double loss_bound_;
  std::vector<std::size_t> n_grid_, v_grid_;
  std::size_t grid_size_ = 0;
  double eps_top_grid_ = 0.0, eps_top_special_ = 0.0;
  std::vector<double> eps_d_, eps_h_, z_init_, w1_init_, wtop_init_;
  std::vector<std::uint32_t> mult_;
  std::vector<std::uint32_t> class_of_;
};

class ThetaInstance {
 public:
  static constexpr std::uint64_t kRenormPeriod = MwmInstance::kRenormPeriod;

  explicit ThetaInstance(std::shared_ptr<const ThetaGridConfig> config)
      : cfg_(std::move(config)),
        wtop_(cfg_->top_weight_init()),
        wsa_(1.0 / 3.0),
        wsp_(1.0 / 3.0),
        n_(cfg_->class_count()),
        z_pitch_((n_ + 7) & ~std::size_t(7)),
        z_rows_(z_pitch_ * cfg_->num_users()),
        touched_(cfg_->num_users(), 0) {}

  ThetaInstance(std::size_t num_users, std::size_t horizon, double loss_bound)
      : ThetaInstance(ThetaGridConfig::make(num_users, horizon, loss_bound)) {}

  // Caller-lent storage: `top_weights` holds class_count() doubles and is
  // seeded here; `z_rows` holds num_users rows spaced `z_row_pitch` doubles
  // apart, each row seeded from the grid on the user's first update.  Both
  // buffers must be zeroed, outlive the instance, and may interleave rows of
  // sibling instances so one round's traffic stays contiguous in memory.
  ThetaInstance(std::shared_ptr<const ThetaGridConfig> config,
                double* top_weights, double* z_rows, std::size_t z_row_pitch)
      : cfg_(std::move(config)),
        wsa_(1.0 / 3.0),
        wsp_(1.0 / 3.0),
        n_(cfg_->class_count()),
        z_pitch_(z_row_pitch),
        touched_(cfg_->num_users(), 0),
        ext_wt_(top_weights),
        ext_z_(z_rows) {
    if (z_pitch_ < n_)
      throw std::invalid_argument("theta: row pitch below class count");
    const std::vector<double>& init = cfg_->top_weight_init();
    std::copy(init.begin(), init.end(), ext_wt_);
  }

  const ThetaGridConfig& config() const { return *cfg_; }
  std::size_t num_users() const { return cfg_->num_users(); }
  std::size_t class_count() const { return n_; }
  std::uint64_t updates() const { return updates_; }

  static constexpr std::size_t kNoUser = std::size_t(-1);

  // Participation probability for u; strictly inside (0, 1).
  double query(std::size_t u) const {
    check_user(u);
    double s, w;
    if (u == cache_user_) {
      s = cache_s_;
      w = cache_w_;
    } else {
      grid_sums(row_or_init(u), s, w);
    }
    const double eg = cfg_->eps_top_grid();
    const double ep = cfg_->eps_top_special();
    return (eg * s + ep * wsp_) / (eg * w + ep * (wsa_ + wsp_));
  }

  void update(std::size_t u, double loss) {
    update_given_query(u, loss, query(u));
  }

  // Hot-path variant for callers that already computed query(u) this round
  // from the current (pre-update) state.  `next_user` is an advisory hint:
  // when the caller knows which user the next round will query, passing it
  // lets the update pass precompute that query's reduction in-flight.  The
  // hint never changes results, only timing.
  void update_given_query(std::size_t u, double loss, double q,
                          std::size_t next_user = kNoUser) {
    check_loss(loss);
    if (loss == 0.0) return;
    if (next_user != kNoUser && next_user < touched_.size())
      apply<true>(u, loss, q, next_user);
    else
      apply<false>(u, loss, q, kNoUser);
  }

  // Sum of the stored top-mixture weights (grid classes plus the two
  // constant predictors); stays within rounding of 1 between renorms.
  double mixture_total() const {
    const double* wt = wt_data();
    double t = wsa_ + wsp_;
    for (std::size_t c = 0; c < n_; ++c) t += wt[c];
    return t;
  }

  double top_abstain_weight() const { return wsa_; }
  double top_participate_weight() const { return wsp_; }
  double class_top_weight(std::size_t c) const {
    if (c >= n_) throw std::out_of_range("theta: class index");
    return wt_data()[c];
  }

  // Logical per-point top weight (the aggregated class weight split evenly).
  double point_top_weight(std::size_t point_index) const {
    const std::size_t c = cfg_->class_of(point_index);
    return wt_data()[c] / double(cfg_->multiplicity()[c]);
  }

  bool user_touched(std::size_t u) const {
    check_user(u);
    return touched_[u] != 0;
  }

  double participation(std::size_t u, std::size_t c) const {
    check_user(u);
    if (c >= cfg_->class_count()) throw std::out_of_range("theta: class index");
    return row_or_init(u)[c];
  }

  // Reconstructed binary-learner weights (w0, w1) for user u, class c.
  std::pair<double, double> binary_weights(std::size_t u, std::size_t c) const {
    const double z = participation(u, c);
    const double ed = cfg_->eps_d().at(c);
    const double eh = cfg_->eps_h()[c];
    const double w1 = z * ed / (z * ed + (1.0 - z) * eh);
    return {1.0 - w1, w1};
  }

  void renormalize() {
    double t = mixture_total();
    wsa_ /= t;
    wsp_ /= t;
    double* wt = wt_data();
    for (std::size_t c = 0; c < n_; ++c) wt[c] /= t;
    cache_user_ = kNoUser;
  }

 private:
  void check_user(std::size_t u) const {
    if (u >= touched_.size())
      throw std::out_of_range("theta: user index out of range");
  }

  void check_loss(double loss) const {
    if (!std::isfinite(loss)) throw std::invalid_argument("theta: loss must be finite");
    if (std::abs(loss) > cfg_->loss_bound())
      throw std::invalid_argument("theta: |loss| exceeds the loss bound " +
                                  std::to_string(cfg_->loss_bound()));
  }

  double* wt_data() { return ext_wt_ ? ext_wt_ : wtop_.data(); }
  const double* wt_data() const { return ext_wt_ ? ext_wt_ : wtop_.data(); }
  double* z_row(std::size_t u) {
    return (ext_z_ ? ext_z_ : z_rows_.data()) + u * z_pitch_;
  }
  const double* z_row(std::size_t u) const {
    return (ext_z_ ? ext_z_ : z_rows_.data()) + u * z_pitch_;
  }

  const double* row_or_init(std::size_t u) const {
    check_user(u);
    return touched_[u] ? z_row(u) : cfg_->z_init().data();
  }

  // S = sum wt*z and W = sum wt over grid classes.  The summation order is
  // lane-blocked (fixed per build), not left-to-right, and the fused
  // accumulation in apply() reproduces it exactly so cached and recomputed
  // sums agree bitwise.
  void grid_sums(const double* __restrict z, double& s_out,
                 double& w_out) const {
    const double* __restrict wt = wt_data();
    const std::size_t n = n_;
    double s, w;
    std::size_t c = 0;
#if defined(__AVX512F__)
    __m512d s0 = _mm512_setzero_pd(), s1 = _mm512_setzero_pd();
    __m512d w0 = _mm512_setzero_pd(), w1 = _mm512_setzero_pd();
    for (; c + 16 <= n; c += 16) {
      const __m512d wa = _mm512_loadu_pd(wt + c);
      const __m512d wb = _mm512_loadu_pd(wt + c + 8);
      s0 = _mm512_fmadd_pd(wa, _mm512_loadu_pd(z + c), s0);
      s1 = _mm512_fmadd_pd(wb, _mm512_loadu_pd(z + c + 8), s1);
      w0 = _mm512_add_pd(w0, wa);
      w1 = _mm512_add_pd(w1, wb);
    }
    s = _mm512_reduce_add_pd(_mm512_add_pd(s0, s1));
    w = _mm512_reduce_add_pd(_mm512_add_pd(w0, w1));
#else
    double sa = 0.0, sb = 0.0, sc = 0.0, sd = 0.0;
    double wa = 0.0, wb = 0.0, wc = 0.0, wd = 0.0;
    for (; c + 4 <= n; c += 4) {
      sa += wt[c] * z[c];
      sb += wt[c + 1] * z[c + 1];
      sc += wt[c + 2] * z[c + 2];
      sd += wt[c + 3] * z[c + 3];
      wa += wt[c];
      wb += wt[c + 1];
      wc += wt[c + 2];
      wd += wt[c + 3];
    }
    s = (sa + sb) + (sc + sd);
    w = (wa + wb) + (wc + wd);
#endif
    for (; c < n; ++c) {
      s += wt[c] * z[c];
      w += wt[c];
    }
    s_out = s;
    w_out = w;
  }

  template <bool Fused>
  void apply(std::size_t u, double loss, double q, std::size_t next_user) {
    check_user(u);
    double* __restrict z = z_row(u);
    if (!touched_[u]) {
      std::copy(cfg_->z_init().begin(), cfg_->z_init().end(), z);
      touched_[u] = 1;
    }
    double* __restrict wt = wt_data();
    const double* __restrict ed = cfg_->eps_d().data();
    const double* __restrict eh = cfg_->eps_h().data();
    const double* __restrict zn =
        Fused ? (next_user == u ? nullptr : row_or_init(next_user)) : nullptr;
    const std::size_t n = n_;
    const double bg = cfg_->eps_top_grid() * loss;
    // Weight factor 1 + bg*(q - z) is evaluated as (1 + bg*q) - bg*z; one
    // rounding step moves, which downstream tolerances absorb.
    const double cw = 1.0 + bg * q;
    double s, w;
    std::size_t c = 0;
#if defined(__AVX512F__)
    const __m512d one = _mm512_set1_pd(1.0);
    const __m512d two = _mm512_set1_pd(2.0);
    const __m512d lv = _mm512_set1_pd(loss);
    const __m512d bgv = _mm512_set1_pd(bg);
    const __m512d cwv = _mm512_set1_pd(cw);
    __m512d s0 = _mm512_setzero_pd(), s1 = _mm512_setzero_pd();
    __m512d w0 = _mm512_setzero_pd(), w1 = _mm512_setzero_pd();
    for (; c + 16 <= n; c += 16) {
#ifndef CPEA_NO_PREFETCH
      constexpr std::size_t kPf = 128;
      _mm_prefetch(reinterpret_cast<const char*>(z + c + kPf), _MM_HINT_T0);
      _mm_prefetch(reinterpret_cast<const char*>(wt + c + kPf), _MM_HINT_T0);
      if constexpr (Fused)
        if (zn)
          _mm_prefetch(reinterpret_cast<const char*>(zn + c + kPf),
                       _MM_HINT_T0);
#endif
      const __m512d za = _mm512_loadu_pd(z + c);
      const __m512d zb = _mm512_loadu_pd(z + c + 8);
      const __m512d ta = _mm512_sub_pd(one, za);
      const __m512d tb = _mm512_sub_pd(one, zb);
      const __m512d f1a = _mm512_fnmadd_pd(_mm512_loadu_pd(eh + c),
                                           _mm512_mul_pd(lv, ta), one);
      const __m512d f1b = _mm512_fnmadd_pd(_mm512_loadu_pd(eh + c + 8),
                                           _mm512_mul_pd(lv, tb), one);
      const __m512d f0a = _mm512_fmadd_pd(_mm512_loadu_pd(ed + c),
                                          _mm512_mul_pd(lv, za), one);
      const __m512d f0b = _mm512_fmadd_pd(_mm512_loadu_pd(ed + c + 8),
                                          _mm512_mul_pd(lv, zb), one);
      const __m512d na = _mm512_mul_pd(za, f1a);
      const __m512d nb = _mm512_mul_pd(zb, f1b);
      const __m512d da = _mm512_fmadd_pd(ta, f0a, na);
      const __m512d db = _mm512_fmadd_pd(tb, f0b, nb);
      // num/den via rcp14, one Newton step, then one quotient refinement;
      // den stays near 1, well inside the approximation's safe range.
      __m512d ra = _mm512_rcp14_pd(da);
      __m512d rb = _mm512_rcp14_pd(db);
      ra = _mm512_mul_pd(ra, _mm512_fnmadd_pd(da, ra, two));
      rb = _mm512_mul_pd(rb, _mm512_fnmadd_pd(db, rb, two));
      __m512d xa = _mm512_mul_pd(na, ra);
      __m512d xb = _mm512_mul_pd(nb, rb);
      xa = _mm512_fmadd_pd(ra, _mm512_fnmadd_pd(da, xa, na), xa);
      xb = _mm512_fmadd_pd(rb, _mm512_fnmadd_pd(db, xb, nb), xb);
      _mm512_storeu_pd(z + c, xa);
      _mm512_storeu_pd(z + c + 8, xb);
      const __m512d fwa = _mm512_fnmadd_pd(bgv, za, cwv);
      const __m512d fwb = _mm512_fnmadd_pd(bgv, zb, cwv);
      const __m512d nwa = _mm512_mul_pd(_mm512_loadu_pd(wt + c), fwa);
      const __m512d nwb = _mm512_mul_pd(_mm512_loadu_pd(wt + c + 8), fwb);
      _mm512_storeu_pd(wt + c, nwa);
      _mm512_storeu_pd(wt + c + 8, nwb);
      if constexpr (Fused) {
        s0 = _mm512_fmadd_pd(nwa, zn ? _mm512_loadu_pd(zn + c) : xa, s0);
        s1 = _mm512_fmadd_pd(nwb, zn ? _mm512_loadu_pd(zn + c + 8) : xb, s1);
        w0 = _mm512_add_pd(w0, nwa);
        w1 = _mm512_add_pd(w1, nwb);
      }
    }
    s = _mm512_reduce_add_pd(_mm512_add_pd(s0, s1));
    w = _mm512_reduce_add_pd(_mm512_add_pd(w0, w1));
#else
    double sa = 0.0, sb = 0.0, sc = 0.0, sd = 0.0;
    double wa = 0.0, wb = 0.0, wc = 0.0, wd = 0.0;
    for (; c + 4 <= n; c += 4) {
      for (std::size_t k = c; k < c + 4; ++k) {
        const double zc = z[k];
        const double t = 1.0 - zc;
        const double f1 = 1.0 - eh[k] * (loss * t);
        const double f0 = 1.0 + ed[k] * (loss * zc);
        const double num = zc * f1;
        z[k] = num / (num + t * f0);
        wt[k] *= cw - bg * zc;
      }
      if constexpr (Fused) {
        sa += wt[c] * (zn ? zn[c] : z[c]);
        sb += wt[c + 1] * (zn ? zn[c + 1] : z[c + 1]);
        sc += wt[c + 2] * (zn ? zn[c + 2] : z[c + 2]);
        sd += wt[c + 3] * (zn ? zn[c + 3] : z[c + 3]);
        wa += wt[c];
        wb += wt[c + 1];
        wc += wt[c + 2];
        wd += wt[c + 3];
      }
    }
    s = (sa + sb) + (sc + sd);
    w = (wa + wb) + (wc + wd);
#endif
    for (; c < n; ++c) {
      const double zc = z[c];
      const double t = 1.0 - zc;
      const double f1 = 1.0 - eh[c] * (loss * t);
      const double f0 = 1.0 + ed[c] * (loss * zc);
      const double num = zc * f1;
      z[c] = num / (num + t * f0);
      wt[c] *= cw - bg * zc;
      if constexpr (Fused) {
        s += wt[c] * (zn ? zn[c] : z[c]);
        w += wt[c];
      }
    }
    const double ep = cfg_->eps_top_special();
    wsa_ *= 1.0 + ep * (loss * q);
    wsp_ *= 1.0 - ep * (loss * (1.0 - q));
    if (Fused) {
      cache_user_ = next_user;
      cache_s_ = s;
      cache_w_ = w;
    } else {
      cache_user_ = kNoUser;
    }
    if (++updates_ % kRenormPeriod == 0) renormalize();
  }

  std::shared_ptr<const ThetaGridConfig> cfg_;
  std::vector<double> wtop_;
  double wsa_, wsp_;
  std::size_t n_;
  std::size_t z_pitch_;
  std::vector<double> z_rows_;
  std::vector<std::uint8_t> touched_;
  double* ext_wt_ = nullptr;
  double* ext_z_ = nullptr;
  std::uint64_t updates_ = 0;
  std::size_t cache_user_ = kNoUser;
  double cache_s_ = 0.0, cache_w_ = 0.0;
};

}  // namespace cpea
